// Pure render functions: every fragment is a function of fetched state
// only, so the whole page is snapshot-testable without a DOM.

import type { MatchEvent, StateFilter, Warning } from './types';

export function escapeHtml(raw: string): string {
  return raw
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function formatClock(seconds: number): string {
  const total = Math.round(seconds);
  const m = Math.floor(total / 60);
  const s = Math.abs(total % 60);
  return `${m}:${String(s).padStart(2, '0')}`;
}

export function formatRule(w: Warning): string {
  return `{${w.rule.antecedent.join(', ')}} → {${w.rule.consequent.join(', ')}}`;
}

/** Severity descending, then start time: the triage order. */
export function sortWarnings(warnings: Warning[]): Warning[] {
  return [...warnings].sort((a, b) => b.severity - a.severity || a.start_s - b.start_s);
}

export function renderWarningRow(w: Warning, selected: boolean): string {
  const missing = w.missing_items.map(escapeHtml).join(', ');
  return (
    `<tr data-warning-id="${w.warning_id}" class="warning-row${selected ? ' selected' : ''}">` +
    `<td class="severity">${w.severity.toFixed(2)}</td>` +
    `<td>${escapeHtml(formatRule(w))}</td>` +
    `<td>${escapeHtml(w.player ?? '-')}</td>` +
    `<td>H${w.half} ${formatClock(w.start_s)}–${formatClock(w.end_s)}</td>` +
    `<td class="missing">${missing}</td>` +
    `<td><span class="badge badge-${w.state}">${w.state}</span></td>` +
    `</tr>`
  );
}

export function renderWarningTable(
  warnings: Warning[],
  filter: StateFilter,
  selectedId: number | null,
): string {
  const rows = sortWarnings(warnings);
  if (rows.length === 0) {
    return `<p class="empty">No ${filter === 'all' ? '' : filter + ' '}warnings for this match.</p>`;
  }
  const body = rows.map((w) => renderWarningRow(w, w.warning_id === selectedId)).join('');
  return (
    '<table class="warnings">' +
    '<thead><tr><th>Severity</th><th>Rule</th><th>Player</th><th>Interval</th>' +
    '<th>Missing</th><th>State</th></tr></thead>' +
    `<tbody>${body}</tbody></table>`
  );
}

export function renderEventRow(ev: MatchEvent): string {
  const label = ev.kind === 'episode' ? ev.description : ev.activity_class;
  const origin = ev.kind === 'episode' ? 'annotated' : `sensor ${ev.source}`;
  return (
    `<li class="event event-${ev.kind}">` +
    `<span class="event-time">${formatClock(ev.start_s)}–${formatClock(ev.end_s)}</span> ` +
    `<span class="event-label">${escapeHtml(label)}</span> ` +
    `<span class="event-origin">${escapeHtml(origin)}</span></li>`
  );
}

/** Ordered events of the warning's player/period within +-30 s. */
export function contextEvents(events: MatchEvent[], warning: Warning): MatchEvent[] {
  const lo = warning.start_s - 30;
  const hi = warning.end_s + 30;
  return events
    .filter((ev) => ev.start_s <= hi && ev.end_s >= lo)
    .sort((a, b) => a.start_s - b.start_s);
}

export function renderDetail(
  warning: Warning,
  events: MatchEvent[],
  validationError: string | null,
): string {
  const context = contextEvents(events, warning)
    .map(renderEventRow)
    .join('');
  const open = warning.state === 'open';
  return (
    `<div class="detail" data-warning-id="${warning.warning_id}">` +
    `<h2>Warning #${warning.warning_id}</h2>` +
    `<p class="rule-line">${escapeHtml(formatRule(warning))}` +
    ` <span class="confidence">confidence ${warning.rule.confidence.toFixed(3)}</span>` +
    ` <span class="origin">${warning.rule.origin}</span></p>` +
    `<p>Player ${escapeHtml(warning.player ?? '-')}, half ${warning.half}, ` +
    `${formatClock(warning.start_s)}–${formatClock(warning.end_s)}.</p>` +
    `<p>Present: ${warning.present_items.map(escapeHtml).join(', ') || '-'}<br>` +
    `Missing: <strong>${warning.missing_items.map(escapeHtml).join(', ')}</strong></p>` +
    `<h3>Surrounding events (±30 s)</h3>` +
    `<ul class="context">${context || '<li class="empty">none recorded</li>'}</ul>` +
    (open
      ? `<div class="actions">` +
        `<input type="text" id="fix-description" placeholder="Corrected description">` +
        (validationError ? `<p class="field-error">${escapeHtml(validationError)}</p>` : '') +
        `<button id="fix-button">Fix annotation</button>` +
        `<button id="dismiss-button">Dismiss</button>` +
        `</div>`
      : `<p class="resolved-note">Resolved: ${warning.state}</p>`) +
    `</div>`
  );
}

export function renderNotice(notice: string | null): string {
  return notice ? `<div class="notice">${escapeHtml(notice)}</div>` : '';
}

export function renderErrorBanner(error: string | null): string {
  return error
    ? `<div class="banner error">${escapeHtml(error)} <button id="retry-button">Retry</button></div>`
    : '';
}

export interface PageState {
  matchId: string | null;
  matches: { match_id: string; name: string }[];
  filter: StateFilter;
  warnings: Warning[];
  events: MatchEvent[];
  selectedId: number | null;
  error: string | null;
  notice: string | null;
  validationError: string | null;
}

export function renderPage(state: PageState): string {
  const options = state.matches
    .map(
      (m) =>
        `<option value="${escapeHtml(m.match_id)}"${m.match_id === state.matchId ? ' selected' : ''}>` +
        `${escapeHtml(m.name)}</option>`,
    )
    .join('');
  const filters: StateFilter[] = ['open', 'fixed', 'dismissed', 'all'];
  const filterButtons = filters
    .map(
      (f) =>
        `<button class="filter${f === state.filter ? ' active' : ''}" data-filter="${f}">${f}</button>`,
    )
    .join('');
  const selected = state.warnings.find((w) => w.warning_id === state.selectedId) ?? null;
  return (
    renderErrorBanner(state.error) +
    renderNotice(state.notice) +
    `<header><h1>Annotation review</h1>` +
    `<select id="match-select">${options}</select>` +
    `<nav class="filters">${filterButtons}</nav></header>` +
    `<main><section class="list">${renderWarningTable(state.warnings, state.filter, state.selectedId)}</section>` +
    `<section class="panel">${selected ? renderDetail(selected, state.events, state.validationError) : '<p class="empty">Select a warning.</p>'}</section></main>`
  );
}
