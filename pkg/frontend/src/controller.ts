// State machine for the review loop. Every mutation re-fetches from the
// server afterwards, so view state never diverges from store state.

import { ApiError, ReviewApi } from './api';
import type { PageState } from './view';
import type { StateFilter } from './types';

export class ReviewController {
  state: PageState = {
    matchId: null,
    matches: [],
    filter: 'open',
    warnings: [],
    events: [],
    selectedId: null,
    error: null,
    notice: null,
    validationError: null,
  };

  private inflightResolve = new Set<number>();

  constructor(
    private api: ReviewApi,
    private onChange: (state: PageState) => void = () => {},
  ) {}

  private emit(): void {
    this.onChange(this.state);
  }

  async start(): Promise<void> {
    try {
      this.state.matches = await this.api.listMatches();
      this.state.error = null;
    } catch (err) {
      this.state.error = err instanceof Error ? err.message : String(err);
      this.emit();
      return;
    }
    if (this.state.matches.length > 0) {
      await this.selectMatch(this.state.matches[0].match_id);
    } else {
      this.emit();
    }
  }

  async selectMatch(matchId: string): Promise<void> {
    this.state.matchId = matchId;
    this.state.selectedId = null;
    await this.refresh();
  }

  async setFilter(filter: StateFilter): Promise<void> {
    this.state.filter = filter;
    await this.refresh();
  }

  async refresh(): Promise<void> {
    if (!this.state.matchId) return;
    try {
      this.state.warnings = await this.api.listWarnings(this.state.matchId, this.state.filter);
      this.state.error = null;
      const selected = this.state.warnings.find((w) => w.warning_id === this.state.selectedId);
      if (selected) {
        this.state.events = await this.api.listEvents(
          this.state.matchId,
          selected.player,
          selected.half,
        );
      } else {
        this.state.selectedId = null;
        this.state.events = [];
      }
    } catch (err) {
      this.state.error = err instanceof Error ? err.message : String(err);
    }
    this.emit();
  }

  async inspect(warningId: number): Promise<void> {
    this.state.selectedId = warningId;
    this.state.validationError = null;
    this.state.notice = null;
    await this.refresh();
  }

  /** Client-side gate: a fix without a description never reaches the server. */
  async resolve(action: 'fix' | 'dismiss', correctedDescription?: string): Promise<void> {
    const id = this.state.selectedId;
    if (id === null || this.inflightResolve.has(id)) return;
    if (action === 'fix' && !(correctedDescription ?? '').trim()) {
      this.state.validationError = 'A fix needs a corrected description.';
      this.emit();
      return;
    }
    this.inflightResolve.add(id);
    try {
      await this.api.resolveWarning(id, action, correctedDescription?.trim());
      this.state.notice = `Warning #${id} ${action === 'fix' ? 'fixed' : 'dismissed'}.`;
      this.state.validationError = null;
      this.state.selectedId = null;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.state.notice = `Warning #${id} was already resolved elsewhere; list refreshed.`;
      } else {
        this.state.error = err instanceof Error ? err.message : String(err);
      }
    } finally {
      this.inflightResolve.delete(id);
    }
    await this.refresh();
  }
}
