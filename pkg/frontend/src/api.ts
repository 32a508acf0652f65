// Thin typed client over the review service. Every call either returns
// parsed JSON or throws ApiError carrying the HTTP status.

import type { MatchEvent, MatchSummary, StateFilter, Warning } from './types';

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  let resp: Response;
  try {
    resp = await fetch(base + path, init);
  } catch (err) {
    throw new ApiError(0, `service unreachable: ${String(err)}`);
  }
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      detail = typeof body.detail === 'string' ? body.detail : JSON.stringify(body.detail);
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ReviewApi {
  constructor(private base = '') {}

  listMatches(): Promise<MatchSummary[]> {
    return request(this.base, '/api/matches');
  }

  listWarnings(matchId: string, state?: StateFilter): Promise<Warning[]> {
    const query = state && state !== 'all' ? `?state=${encodeURIComponent(state)}` : '';
    return request(this.base, `/api/matches/${encodeURIComponent(matchId)}/warnings${query}`);
  }

  listEvents(matchId: string, player?: string | null, period?: number): Promise<MatchEvent[]> {
    const params = new URLSearchParams();
    if (player) params.set('player', player);
    if (period !== undefined) params.set('period', String(period));
    const query = params.size ? `?${params.toString()}` : '';
    return request(this.base, `/api/matches/${encodeURIComponent(matchId)}/events${query}`);
  }

  resolveWarning(
    warningId: number,
    action: 'fix' | 'dismiss',
    correctedDescription?: string,
  ): Promise<Warning> {
    return request(this.base, `/api/warnings/${warningId}/resolution`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({
        action,
        corrected_description: correctedDescription ?? null,
      }),
    });
  }
}
