import { describe, expect, it } from 'vitest';

import {
  contextEvents,
  formatClock,
  renderDetail,
  renderPage,
  renderWarningTable,
  sortWarnings,
  type PageState,
} from '../src/view';
import { activityOf, episodeOf, warningOf } from './fixtures';

describe('formatClock', () => {
  it('renders minutes:seconds', () => {
    expect(formatClock(754)).toBe('12:34');
    expect(formatClock(0)).toBe('0:00');
    expect(formatClock(67)).toBe('1:07');
  });
});

describe('sortWarnings', () => {
  it('orders by severity descending then start', () => {
    const rows = sortWarnings([
      warningOf({ warning_id: 1, severity: 0.6, start_s: 10 }),
      warningOf({ warning_id: 2, severity: 0.9, start_s: 50 }),
      warningOf({ warning_id: 3, severity: 0.9, start_s: 20 }),
    ]);
    expect(rows.map((w) => w.warning_id)).toEqual([3, 2, 1]);
  });
});

describe('renderWarningTable', () => {
  it('renders one row per warning with state badges', () => {
    const html = renderWarningTable(
      [warningOf({ warning_id: 7 }), warningOf({ warning_id: 8, state: 'dismissed' })],
      'all',
      7,
    );
    expect(html).toContain('data-warning-id="7"');
    expect(html).toContain('badge-open');
    expect(html).toContain('badge-dismissed');
    expect(html).toContain('selected');
  });

  it('shows an empty state message', () => {
    expect(renderWarningTable([], 'open', null)).toContain('No open warnings');
  });

  it('escapes markup in item names', () => {
    const w = warningOf({ missing_items: ['<script>'] });
    expect(renderWarningTable([w], 'open', null)).not.toContain('<script>');
  });
});

describe('contextEvents', () => {
  it('keeps events within 30 s of the interval, ordered by start', () => {
    const w = warningOf({ start_s: 100, end_s: 110 });
    const events = [
      episodeOf({ episode_id: 1, start_s: 65, end_s: 69 }),   // 31+ s before: out
      episodeOf({ episode_id: 2, start_s: 75, end_s: 80 }),   // inside the margin
      activityOf({ start_s: 108, end_s: 120 }),
      episodeOf({ episode_id: 3, start_s: 141, end_s: 150 }), // past the margin: out
    ];
    const kept = contextEvents(events, w);
    expect(kept.map((e) => e.start_s)).toEqual([75, 108]);
  });
});

describe('renderDetail', () => {
  it('offers actions only for open warnings', () => {
    const open = renderDetail(warningOf(), [episodeOf()], null);
    expect(open).toContain('fix-button');
    expect(open).toContain('dismiss-button');
    const done = renderDetail(warningOf({ state: 'fixed' }), [], null);
    expect(done).not.toContain('fix-button');
    expect(done).toContain('Resolved: fixed');
  });

  it('shows the client-side validation error', () => {
    const html = renderDetail(warningOf(), [], 'A fix needs a corrected description.');
    expect(html).toContain('field-error');
  });
});

describe('renderPage snapshot', () => {
  it('is a pure function of state', () => {
    const state: PageState = {
      matchId: 'derby',
      matches: [{ match_id: 'derby', name: 'Derby Day' }],
      filter: 'open',
      warnings: [warningOf()],
      events: [episodeOf(), activityOf()],
      selectedId: 1,
      error: null,
      notice: null,
      validationError: null,
    };
    const first = renderPage(state);
    expect(renderPage(state)).toBe(first);
    expect(first).toMatchSnapshot();
  });

  it('renders the error banner when the service is down', () => {
    const state: PageState = {
      matchId: null,
      matches: [],
      filter: 'open',
      warnings: [],
      events: [],
      selectedId: null,
      error: 'service unreachable: connect ECONNREFUSED',
      notice: null,
      validationError: null,
    };
    const html = renderPage(state);
    expect(html).toContain('banner error');
    expect(html).toContain('retry-button');
  });
});
