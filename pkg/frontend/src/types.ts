// Payload shapes mirroring the service API; field names match the
// server's export formats exactly.

export interface Rule {
  antecedent: string[];
  consequent: string[];
  support: number | string | null;
  confidence: number;
  conviction: number | string | null;
  origin: 'mined' | 'manual';
  level: string | null;
}

export type WarningState = 'open' | 'fixed' | 'dismissed';

export interface Warning {
  warning_id: number;
  match_id: string;
  player: string | null;
  start_s: number;
  end_s: number;
  half: number;
  rule: Rule;
  present_items: string[];
  missing_items: string[];
  severity: number;
  state: WarningState;
}

export interface EpisodeEvent {
  kind: 'episode';
  episode_id: number;
  match_id: string;
  team: string;
  start_s: number;
  end_s: number;
  half: number;
  description: string;
  tags: string[];
  player: string;
  notes: string;
  row_id: number | null;
}

export interface ActivityEvent {
  kind: 'activity';
  match_id: string;
  player: string;
  period_id: number;
  start_s: number;
  end_s: number;
  activity_class: string;
  source: 'sensor' | 'manual';
  vote_fraction: number | null;
  row_id: number | null;
}

export type MatchEvent = EpisodeEvent | ActivityEvent;

export interface MatchSummary {
  match_id: string;
  name: string;
  teams: string[];
}

export type StateFilter = WarningState | 'all';
