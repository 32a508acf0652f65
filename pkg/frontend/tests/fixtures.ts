import type { ActivityEvent, EpisodeEvent, Warning } from '../src/types';

export function warningOf(overrides: Partial<Warning> = {}): Warning {
  return {
    warning_id: 1,
    match_id: 'derby',
    player: 'Alice',
    start_s: 40,
    end_s: 60,
    half: 1,
    rule: {
      antecedent: ['Pass'],
      consequent: ['Kicking'],
      support: null,
      confidence: 0.9,
      conviction: null,
      origin: 'manual',
      level: 'High',
    },
    present_items: ['Pass'],
    missing_items: ['Kicking'],
    severity: 0.9,
    state: 'open',
    ...overrides,
  };
}

export function episodeOf(overrides: Partial<EpisodeEvent> = {}): EpisodeEvent {
  return {
    kind: 'episode',
    episode_id: 1,
    match_id: 'derby',
    team: 'Reds',
    start_s: 45,
    end_s: 50,
    half: 1,
    description: 'Pass',
    tags: [],
    player: 'Alice',
    notes: '',
    row_id: 1,
    ...overrides,
  };
}

export function activityOf(overrides: Partial<ActivityEvent> = {}): ActivityEvent {
  return {
    kind: 'activity',
    match_id: 'derby',
    player: 'Alice',
    period_id: 1,
    start_s: 42,
    end_s: 58,
    activity_class: 'running',
    source: 'sensor',
    vote_fraction: 0.8,
    row_id: 2,
    ...overrides,
  };
}
