"""Embedded annotation store: matches, episodes, activity labels, rules,
warnings, and the canonical ordered-event query.

The store directory holds one sqlite database, ``footlab.db`` (plus its
``-wal``/``-shm`` sidecars while open), with nine tables: matches,
periods, players, episodes, activity_labels, rules, warnings, audit_log,
meta. Every write runs inside one transaction, so a batch is visible
entirely or not at all.

Time convention: activity label times are period-relative seconds with an
explicit period_id; episode times are the minutes:seconds values from the
source file, also relative to their half.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import re
import sqlite3
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .detector import Warning
from .errors import ConflictError, FormatError, NotFoundError
from .ingest import PeriodClock
from .mining import AssociationRule

EPISODE_HEADER = [
    "Episode", "Match", "Team", "Start", "End", "Half", "Description", "Tags", "Player", "Notes",
]

_SCHEMA = """
CREATE TABLE IF NOT EXISTS matches (
    match_id TEXT PRIMARY KEY,
    name TEXT NOT NULL,
    teams TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS periods (
    match_id TEXT NOT NULL,
    period_id INTEGER NOT NULL,
    kickoff_wall_time REAL NOT NULL,
    duration_s REAL NOT NULL,
    PRIMARY KEY (match_id, period_id)
);
CREATE TABLE IF NOT EXISTS players (
    match_id TEXT NOT NULL,
    player TEXT NOT NULL,
    team TEXT,
    shirt_number INTEGER,
    PRIMARY KEY (match_id, player)
);
CREATE TABLE IF NOT EXISTS episodes (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    episode_id INTEGER NOT NULL,
    match_id TEXT NOT NULL,
    team TEXT NOT NULL DEFAULT '',
    start_s REAL NOT NULL,
    end_s REAL NOT NULL,
    half INTEGER NOT NULL,
    description TEXT NOT NULL,
    tags TEXT NOT NULL DEFAULT '',
    player TEXT NOT NULL DEFAULT '',
    notes TEXT NOT NULL DEFAULT ''
);
CREATE TABLE IF NOT EXISTS activity_labels (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    match_id TEXT NOT NULL,
    player TEXT NOT NULL,
    period_id INTEGER NOT NULL,
    start_s REAL NOT NULL,
    end_s REAL NOT NULL,
    activity_class TEXT NOT NULL,
    source TEXT NOT NULL,
    vote_fraction REAL,
    UNIQUE (match_id, player, period_id, start_s, end_s, activity_class, source)
);
CREATE TABLE IF NOT EXISTS rules (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    antecedent TEXT NOT NULL,
    consequent TEXT NOT NULL,
    support REAL,
    confidence REAL NOT NULL,
    conviction REAL,
    origin TEXT NOT NULL,
    level TEXT
);
CREATE TABLE IF NOT EXISTS warnings (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    match_id TEXT NOT NULL,
    player TEXT,
    start_s REAL NOT NULL,
    end_s REAL NOT NULL,
    half INTEGER NOT NULL,
    rule_antecedent TEXT NOT NULL,
    rule_consequent TEXT NOT NULL,
    rule_support REAL,
    rule_confidence REAL NOT NULL,
    rule_conviction REAL,
    rule_origin TEXT NOT NULL,
    rule_level TEXT,
    present_items TEXT NOT NULL,
    missing_items TEXT NOT NULL,
    severity REAL NOT NULL,
    state TEXT NOT NULL DEFAULT 'open',
    corrected_description TEXT
);
CREATE TABLE IF NOT EXISTS audit_log (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    at TEXT NOT NULL,
    action TEXT NOT NULL,
    detail TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
"""

TABLES = (
    "matches", "periods", "players", "episodes", "activity_labels",
    "rules", "warnings", "audit_log", "meta",
)


@dataclass
class Episode:
    episode_id: int
    match_id: str
    team: str
    start_s: float
    end_s: float
    half: int
    description: str
    tags: list[str]
    player: str
    notes: str
    row_id: int | None = None

    def __post_init__(self):
        if self.start_s > self.end_s:
            raise ValueError("episode start must not exceed end")
        if self.half < 1:
            raise ValueError("half must be >= 1")
        if not self.description:
            raise ValueError("description must be non-empty")


@dataclass
class ActivityLabelRow:
    match_id: str
    player: str
    period_id: int
    start_s: float
    end_s: float
    activity_class: str
    source: str
    vote_fraction: float | None = None
    row_id: int | None = None

    def __post_init__(self):
        if self.start_s >= self.end_s:
            raise ValueError("activity row needs start < end")
        if self.source == "sensor" and self.vote_fraction is None:
            raise ValueError("sensor rows carry a vote fraction")

    # mining's entry builder reads rows by half
    @property
    def half(self) -> int:
        return self.period_id


@dataclass
class RosterEntry:
    player: str
    team: str | None = None
    shirt_number: int | None = None


@dataclass
class MatchMeta:
    match_id: str
    name: str
    teams: list[str]
    periods: list[PeriodClock] = field(default_factory=list)
    players: list[RosterEntry] = field(default_factory=list)


_TIME_RE = re.compile(r"^(\d+):(\d{1,2})$")


def parse_match_time(token: str) -> float:
    """minutes:seconds -> seconds; minutes may exceed 59, seconds < 60."""
    m = _TIME_RE.match(token.strip())
    if not m:
        raise ValueError(f"bad time token {token!r}")
    minutes, seconds = int(m.group(1)), int(m.group(2))
    if seconds > 59:
        raise ValueError(f"bad time token {token!r}: seconds out of range")
    return minutes * 60.0 + seconds


def format_match_time(seconds: float) -> str:
    total = int(round(seconds))
    return f"{total // 60}:{total % 60:02d}"


def parse_episode_file(data: bytes) -> list[Episode]:
    """Parse the ten-column episode table (comma-delimited, headered)."""
    text = data.decode("utf-8-sig")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("empty episode file") from None
    if [h.strip() for h in header] != EPISODE_HEADER:
        raise FormatError(
            f"episode header must be {','.join(EPISODE_HEADER)!r}, got {','.join(header)!r}"
        )
    episodes = []
    for row_no, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(EPISODE_HEADER):
            raise FormatError(
                f"row {row_no}: expected {len(EPISODE_HEADER)} fields, got {len(row)}", row=row_no
            )
        rec = dict(zip(EPISODE_HEADER, row))
        for required in ("Episode", "Match", "Start", "End", "Half", "Description"):
            if not rec[required].strip():
                raise FormatError(f"row {row_no}: missing required field {required}", row=row_no)
        try:
            start_s = parse_match_time(rec["Start"])
            end_s = parse_match_time(rec["End"])
        except ValueError as exc:
            raise FormatError(f"row {row_no}: {exc}", row=row_no) from None
        try:
            episode = Episode(
                episode_id=int(rec["Episode"]),
                match_id=rec["Match"].strip(),
                team=rec["Team"].strip(),
                start_s=start_s,
                end_s=end_s,
                half=int(rec["Half"]),
                description=rec["Description"].strip(),
                tags=[t.strip() for t in rec["Tags"].split(";") if t.strip()],
                player=rec["Player"].strip(),
                notes=rec["Notes"],
            )
        except ValueError as exc:
            raise FormatError(f"row {row_no}: {exc}", row=row_no) from None
        episodes.append(episode)
    return episodes


def write_episode_file(episodes: Sequence[Episode]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EPISODE_HEADER)
    for e in episodes:
        writer.writerow(
            [
                e.episode_id,
                e.match_id,
                e.team,
                format_match_time(e.start_s),
                format_match_time(e.end_s),
                e.half,
                e.description,
                ";".join(e.tags),
                e.player,
                e.notes,
            ]
        )
    return buf.getvalue().encode()


def merge_predictions(
    match_id: str, player: str, period_id: int, predictions: Sequence
) -> list[ActivityLabelRow]:
    """Collapse consecutive same-class windows into single label rows.

    Windows merge when the next one starts at or before the current row's
    end; the merged vote fraction is the mean over the merged windows.
    """
    ordered = sorted(predictions, key=lambda p: p.window_ref[0])
    rows: list[ActivityLabelRow] = []
    votes: list[float] = []
    for p in ordered:
        start, duration = p.window_ref
        end = start + duration
        top_vote = max(p.vote_fractions.values()) if p.vote_fractions else 1.0
        if rows and rows[-1].activity_class == p.predicted_class and start <= rows[-1].end_s + 1e-9:
            rows[-1].end_s = max(rows[-1].end_s, end)
            votes.append(top_vote)
            rows[-1].vote_fraction = sum(votes) / len(votes)
        else:
            votes = [top_vote]
            rows.append(
                ActivityLabelRow(
                    match_id=match_id,
                    player=player,
                    period_id=period_id,
                    start_s=start,
                    end_s=end,
                    activity_class=p.predicted_class,
                    source="sensor",
                    vote_fraction=top_vote,
                )
            )
    return rows


def episode_to_doc(e: Episode) -> dict:
    return {
        "kind": "episode",
        "episode_id": e.episode_id,
        "match_id": e.match_id,
        "team": e.team,
        "start_s": e.start_s,
        "end_s": e.end_s,
        "half": e.half,
        "description": e.description,
        "tags": list(e.tags),
        "player": e.player,
        "notes": e.notes,
        "row_id": e.row_id,
    }


def activity_row_to_doc(r: ActivityLabelRow) -> dict:
    return {
        "kind": "activity",
        "match_id": r.match_id,
        "player": r.player,
        "period_id": r.period_id,
        "start_s": r.start_s,
        "end_s": r.end_s,
        "activity_class": r.activity_class,
        "source": r.source,
        "vote_fraction": r.vote_fraction,
        "row_id": r.row_id,
    }


def event_from_doc(doc: dict) -> "Episode | ActivityLabelRow":
    kind = doc.get("kind")
    if kind == "episode":
        return Episode(
            episode_id=int(doc["episode_id"]),
            match_id=doc["match_id"],
            team=doc.get("team", ""),
            start_s=float(doc["start_s"]),
            end_s=float(doc["end_s"]),
            half=int(doc["half"]),
            description=doc["description"],
            tags=list(doc.get("tags", [])),
            player=doc.get("player", ""),
            notes=doc.get("notes", ""),
            row_id=doc.get("row_id"),
        )
    if kind == "activity":
        return ActivityLabelRow(
            match_id=doc["match_id"],
            player=doc["player"],
            period_id=int(doc["period_id"]),
            start_s=float(doc["start_s"]),
            end_s=float(doc["end_s"]),
            activity_class=doc["activity_class"],
            source=doc.get("source", "sensor"),
            vote_fraction=doc.get("vote_fraction"),
            row_id=doc.get("row_id"),
        )
    raise FormatError(f"unknown event kind {kind!r}")


def match_to_doc(meta: MatchMeta) -> dict:
    return {
        "match_id": meta.match_id,
        "name": meta.name,
        "teams": list(meta.teams),
        "periods": [
            {"period_id": p.period_id, "kickoff_wall_time": p.kickoff_wall_time, "duration_s": p.duration_s}
            for p in meta.periods
        ],
        "players": [
            {"player": r.player, "team": r.team, "shirt_number": r.shirt_number}
            for r in meta.players
        ],
    }


def match_from_doc(doc: dict) -> MatchMeta:
    try:
        return MatchMeta(
            match_id=doc["match_id"],
            name=doc.get("name", doc["match_id"]),
            teams=list(doc.get("teams", [])),
            periods=[
                PeriodClock(
                    period_id=int(p["period_id"]),
                    kickoff_wall_time=float(p["kickoff_wall_time"]),
                    duration_s=float(p["duration_s"]),
                )
                for p in doc.get("periods", [])
            ],
            players=[
                RosterEntry(
                    player=r["player"], team=r.get("team"), shirt_number=r.get("shirt_number")
                )
                for r in doc.get("players", [])
            ],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad match document: {exc}") from None


def _items_join(items: Iterable[str]) -> str:
    return ";".join(sorted(items))


def _items_split(raw: str) -> tuple[str, ...]:
    return tuple(s for s in raw.split(";") if s)


class AnnotationStore:
    """Single-writer, multi-reader store rooted at a directory.

    Each thread gets its own sqlite connection and the database runs in WAL
    mode, so readers observe a committed snapshot: a batch in progress on
    another thread is invisible until its transaction commits. Writes are
    serialized by a process-wide lock.
    """

    DB_NAME = "footlab.db"

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._db_path = self.root / self.DB_NAME
        self._local = threading.local()
        self._connections: list[sqlite3.Connection] = []
        self._conn_lock = threading.Lock()
        self._write_lock = threading.RLock()
        self._closed = False
        with self._conn:
            self._conn.executescript(_SCHEMA)
            self._conn.execute(
                "INSERT OR IGNORE INTO meta (key, value) VALUES ('schema_version', '1')"
            )

    @property
    def _conn(self) -> sqlite3.Connection:
        if self._closed:
            raise RuntimeError("store is closed")
        conn = getattr(self._local, "conn", None)
        if conn is None:
            # each thread sticks to its own connection; check_same_thread is
            # relaxed only so close() can shut them all down from one place
            conn = sqlite3.connect(self._db_path, check_same_thread=False)
            conn.execute("PRAGMA journal_mode = WAL")
            conn.execute("PRAGMA foreign_keys = ON")
            self._local.conn = conn
            with self._conn_lock:
                self._connections.append(conn)
        return conn

    def close(self) -> None:
        self._closed = True
        with self._conn_lock:
            for conn in self._connections:
                try:
                    conn.close()
                except sqlite3.ProgrammingError:
                    pass  # owned by a finished thread
            self._connections.clear()
        if hasattr(self._local, "conn"):
            del self._local.conn

    def __enter__(self) -> "AnnotationStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _audit(self, conn: sqlite3.Connection, action: str, detail: dict) -> None:
        conn.execute(
            "INSERT INTO audit_log (at, action, detail) VALUES (?, ?, ?)",
            (_dt.datetime.now(_dt.timezone.utc).isoformat(), action, json.dumps(detail, sort_keys=True)),
        )

    # -- matches -----------------------------------------------------------

    def upsert_match(self, meta: MatchMeta) -> None:
        with self._write_lock, self._conn as conn:
            conn.execute(
                "INSERT INTO matches (match_id, name, teams) VALUES (?, ?, ?) "
                "ON CONFLICT(match_id) DO UPDATE SET name = excluded.name, teams = excluded.teams",
                (meta.match_id, meta.name, ";".join(meta.teams)),
            )
            conn.execute("DELETE FROM periods WHERE match_id = ?", (meta.match_id,))
            for p in meta.periods:
                conn.execute(
                    "INSERT INTO periods (match_id, period_id, kickoff_wall_time, duration_s) "
                    "VALUES (?, ?, ?, ?)",
                    (meta.match_id, p.period_id, p.kickoff_wall_time, p.duration_s),
                )
            conn.execute("DELETE FROM players WHERE match_id = ?", (meta.match_id,))
            for r in meta.players:
                conn.execute(
                    "INSERT INTO players (match_id, player, team, shirt_number) VALUES (?, ?, ?, ?)",
                    (meta.match_id, r.player, r.team, r.shirt_number),
                )

    def _require_match(self, match_id: str) -> None:
        row = self._conn.execute(
            "SELECT 1 FROM matches WHERE match_id = ?", (match_id,)
        ).fetchone()
        if row is None:
            raise NotFoundError(f"unknown match {match_id!r}")

    def get_match(self, match_id: str) -> MatchMeta:
        row = self._conn.execute(
            "SELECT match_id, name, teams FROM matches WHERE match_id = ?", (match_id,)
        ).fetchone()
        if row is None:
            raise NotFoundError(f"unknown match {match_id!r}")
        periods = [
            PeriodClock(period_id=pid, kickoff_wall_time=k, duration_s=d)
            for pid, k, d in self._conn.execute(
                "SELECT period_id, kickoff_wall_time, duration_s FROM periods "
                "WHERE match_id = ? ORDER BY kickoff_wall_time",
                (match_id,),
            )
        ]
        players = [
            RosterEntry(player=p, team=t, shirt_number=s)
            for p, t, s in self._conn.execute(
                "SELECT player, team, shirt_number FROM players WHERE match_id = ? ORDER BY player",
                (match_id,),
            )
        ]
        teams = [t for t in row[2].split(";") if t]
        return MatchMeta(match_id=row[0], name=row[1], teams=teams, periods=periods, players=players)

    def list_matches(self) -> list[MatchMeta]:
        ids = [r[0] for r in self._conn.execute("SELECT match_id FROM matches ORDER BY match_id")]
        return [self.get_match(i) for i in ids]

    # -- episodes ----------------------------------------------------------

    def add_episodes(self, match_id: str, episodes: Sequence[Episode]) -> int:
        self._require_match(match_id)
        with self._write_lock, self._conn as conn:
            for e in episodes:
                conn.execute(
                    "INSERT INTO episodes (episode_id, match_id, team, start_s, end_s, half, "
                    "description, tags, player, notes) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                    (
                        e.episode_id, match_id, e.team, e.start_s, e.end_s, e.half,
                        e.description, ";".join(e.tags), e.player, e.notes,
                    ),
                )
        return len(episodes)

    def _episode_from_row(self, row) -> Episode:
        return Episode(
            episode_id=row[1],
            match_id=row[2],
            team=row[3],
            start_s=row[4],
            end_s=row[5],
            half=row[6],
            description=row[7],
            tags=[t for t in row[8].split(";") if t],
            player=row[9],
            notes=row[10],
            row_id=row[0],
        )

    def list_episodes(
        self, match_id: str, player: str | None = None, half: int | None = None
    ) -> list[Episode]:
        self._require_match(match_id)
        sql = (
            "SELECT id, episode_id, match_id, team, start_s, end_s, half, description, tags, "
            "player, notes FROM episodes WHERE match_id = ?"
        )
        args: list = [match_id]
        if player is not None:
            sql += " AND player = ?"
            args.append(player)
        if half is not None:
            sql += " AND half = ?"
            args.append(half)
        sql += " ORDER BY start_s, episode_id"
        return [self._episode_from_row(r) for r in self._conn.execute(sql, args)]

    def update_episode_description(self, row_id: int, description: str, reason: str) -> None:
        if not description:
            raise ValueError("description must be non-empty")
        with self._write_lock, self._conn as conn:
            cur = conn.execute(
                "UPDATE episodes SET description = ? WHERE id = ?", (description, row_id)
            )
            if cur.rowcount == 0:
                raise NotFoundError(f"unknown episode row {row_id}")
            self._audit(conn, "episode.description", {"row_id": row_id, "description": description, "reason": reason})

    # -- activity labels ---------------------------------------------------

    def aggregate_labels(
        self, match_id: str, player: str, period_id: int, predictions: Sequence
    ) -> list[ActivityLabelRow]:
        """Merge a prediction stream and store it; idempotent per stream."""
        self._require_match(match_id)
        rows = merge_predictions(match_id, player, period_id, predictions)
        with self._write_lock, self._conn as conn:
            for r in rows:
                conn.execute(
                    "INSERT OR IGNORE INTO activity_labels (match_id, player, period_id, start_s, "
                    "end_s, activity_class, source, vote_fraction) VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                    (
                        r.match_id, r.player, r.period_id, r.start_s, r.end_s,
                        r.activity_class, r.source, r.vote_fraction,
                    ),
                )
        return rows

    def add_activity_rows(self, rows: Sequence[ActivityLabelRow]) -> None:
        with self._write_lock, self._conn as conn:
            for r in rows:
                self._require_match(r.match_id)
                conn.execute(
                    "INSERT OR IGNORE INTO activity_labels (match_id, player, period_id, start_s, "
                    "end_s, activity_class, source, vote_fraction) VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                    (
                        r.match_id, r.player, r.period_id, r.start_s, r.end_s,
                        r.activity_class, r.source, r.vote_fraction,
                    ),
                )

    def list_activity_rows(
        self, match_id: str, player: str | None = None, period_id: int | None = None
    ) -> list[ActivityLabelRow]:
        self._require_match(match_id)
        sql = (
            "SELECT id, match_id, player, period_id, start_s, end_s, activity_class, source, "
            "vote_fraction FROM activity_labels WHERE match_id = ?"
        )
        args: list = [match_id]
        if player is not None:
            sql += " AND player = ?"
            args.append(player)
        if period_id is not None:
            sql += " AND period_id = ?"
            args.append(period_id)
        sql += " ORDER BY start_s, id"
        return [
            ActivityLabelRow(
                match_id=r[1], player=r[2], period_id=r[3], start_s=r[4], end_s=r[5],
                activity_class=r[6], source=r[7], vote_fraction=r[8], row_id=r[0],
            )
            for r in self._conn.execute(sql, args)
        ]

    # -- events ------------------------------------------------------------

    def query_events(
        self, match_id: str, period_id: int | None = None, player: str | None = None
    ) -> list[Episode | ActivityLabelRow]:
        """All rows for the scope, ordered by (start, episode-first, id)."""
        episodes = self.list_episodes(match_id, player=player or None, half=period_id)
        activity = self.list_activity_rows(match_id, player=player or None, period_id=period_id)

        def order(ev) -> tuple:
            if isinstance(ev, Episode):
                return (ev.start_s, 0, ev.episode_id)
            return (ev.start_s, 1, ev.row_id or 0)

        return sorted([*episodes, *activity], key=order)

    # -- rules ---------------------------------------------------------------

    def replace_rules(self, rules: Sequence[AssociationRule]) -> None:
        with self._write_lock, self._conn as conn:
            conn.execute("DELETE FROM rules")
            for r in rules:
                conn.execute(
                    "INSERT INTO rules (antecedent, consequent, support, confidence, conviction, "
                    "origin, level) VALUES (?, ?, ?, ?, ?, ?, ?)",
                    (
                        ";".join(r.antecedent), ";".join(r.consequent), r.support,
                        r.confidence, r.conviction, r.origin, r.qualitative_confidence,
                    ),
                )

    def list_rules(self) -> list[AssociationRule]:
        return [
            AssociationRule(
                antecedent=_items_split(a),
                consequent=_items_split(c),
                support=s,
                confidence=conf,
                conviction=conv,
                origin=origin,
                qualitative_confidence=level,
            )
            for a, c, s, conf, conv, origin, level in self._conn.execute(
                "SELECT antecedent, consequent, support, confidence, conviction, origin, level "
                "FROM rules ORDER BY id"
            )
        ]

    # -- warnings ------------------------------------------------------------

    def store_warnings(self, match_id: str, warnings: Sequence[Warning]) -> int:
        """Replace the match's open warnings; resolved ones are kept.

        A new warning identical to an already-resolved one (same scope,
        interval, and rule) is not re-opened.
        """
        self._require_match(match_id)
        with self._write_lock, self._conn as conn:
            resolved = {
                (r[0], r[1], r[2], r[3], r[4], r[5])
                for r in conn.execute(
                    "SELECT player, start_s, end_s, half, rule_antecedent, rule_consequent "
                    "FROM warnings WHERE match_id = ? AND state != 'open'",
                    (match_id,),
                )
            }
            conn.execute("DELETE FROM warnings WHERE match_id = ? AND state = 'open'", (match_id,))
            inserted = 0
            for w in warnings:
                key = (
                    w.player, w.start_s, w.end_s, w.half,
                    ";".join(w.rule.antecedent), ";".join(w.rule.consequent),
                )
                if key in resolved:
                    continue
                conn.execute(
                    "INSERT INTO warnings (match_id, player, start_s, end_s, half, rule_antecedent, "
                    "rule_consequent, rule_support, rule_confidence, rule_conviction, rule_origin, "
                    "rule_level, present_items, missing_items, severity, state) "
                    "VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, 'open')",
                    (
                        match_id, w.player, w.start_s, w.end_s, w.half,
                        ";".join(w.rule.antecedent), ";".join(w.rule.consequent),
                        w.rule.support, w.rule.confidence, w.rule.conviction,
                        w.rule.origin, w.rule.qualitative_confidence,
                        _items_join(w.present_items), _items_join(w.missing_items),
                        w.severity,
                    ),
                )
                inserted += 1
            self._audit(conn, "warnings.replace", {"match_id": match_id, "count": inserted})
        return inserted

    def _warning_from_row(self, row) -> Warning:
        rule = AssociationRule(
            antecedent=_items_split(row[6]),
            consequent=_items_split(row[7]),
            support=row[8],
            confidence=row[9],
            conviction=row[10],
            origin=row[11],
            qualitative_confidence=row[12],
        )
        return Warning(
            warning_id=row[0],
            match_id=row[1],
            player=row[2],
            start_s=row[3],
            end_s=row[4],
            half=row[5],
            rule=rule,
            present_items=set(_items_split(row[13])),
            missing_items=set(_items_split(row[14])),
            severity=row[15],
            state=row[16],
        )

    _WARNING_COLS = (
        "id, match_id, player, start_s, end_s, half, rule_antecedent, rule_consequent, "
        "rule_support, rule_confidence, rule_conviction, rule_origin, rule_level, "
        "present_items, missing_items, severity, state"
    )

    def list_warnings(self, match_id: str, state: str | None = None) -> list[Warning]:
        self._require_match(match_id)
        sql = f"SELECT {self._WARNING_COLS} FROM warnings WHERE match_id = ?"
        args: list = [match_id]
        if state is not None:
            sql += " AND state = ?"
            args.append(state)
        sql += " ORDER BY severity DESC, start_s, id"
        return [self._warning_from_row(r) for r in self._conn.execute(sql, args)]

    def get_warning(self, warning_id: int) -> Warning:
        row = self._conn.execute(
            f"SELECT {self._WARNING_COLS} FROM warnings WHERE id = ?", (warning_id,)
        ).fetchone()
        if row is None:
            raise NotFoundError(f"unknown warning {warning_id}")
        return self._warning_from_row(row)

    def resolve_warning(
        self, warning_id: int, action: str, corrected_description: str | None = None
    ) -> Warning:
        """open -> fixed | dismissed, exactly once.

        A fix requires a corrected description; it rewrites the first
        overlapping episode whose description is part of the violation
        (falling back to any overlapping episode) and appends an audit row.
        """
        if action not in ("fix", "dismiss"):
            raise ValueError(f"action must be 'fix' or 'dismiss', got {action!r}")
        if action == "fix" and not (corrected_description or "").strip():
            raise ValueError("fix requires a non-empty corrected_description")
        with self._write_lock, self._conn as conn:
            warning = self.get_warning(warning_id)
            if warning.state != "open":
                raise ConflictError(f"warning {warning_id} already {warning.state}")
            new_state = "fixed" if action == "fix" else "dismissed"
            if action == "fix":
                target = self._fix_target_episode(warning)
                if target is not None:
                    conn.execute(
                        "UPDATE episodes SET description = ? WHERE id = ?",
                        (corrected_description, target.row_id),
                    )
                    self._audit(
                        conn,
                        "episode.description",
                        {
                            "row_id": target.row_id,
                            "description": corrected_description,
                            "reason": f"warning {warning_id} fix",
                        },
                    )
            conn.execute(
                "UPDATE warnings SET state = ?, corrected_description = ? WHERE id = ?",
                (new_state, corrected_description, warning_id),
            )
            self._audit(
                conn,
                "warning.resolve",
                {"warning_id": warning_id, "action": action},
            )
        return self.get_warning(warning_id)

    def _fix_target_episode(self, warning: Warning) -> Episode | None:
        episodes = self.list_episodes(
            warning.match_id, player=warning.player or None, half=warning.half
        )
        overlapping = [
            e for e in episodes
            if e.start_s <= warning.end_s and e.end_s >= warning.start_s
        ]
        for e in overlapping:
            if e.description in warning.present_items and e.description in warning.rule.antecedent:
                return e
        for e in overlapping:
            if e.description in warning.present_items:
                return e
        return overlapping[0] if overlapping else None

    # -- export --------------------------------------------------------------

    def export_tables(self) -> dict[str, bytes]:
        """Every table as delimited text, keyed by table name."""
        out = {}
        for table in TABLES:
            cur = self._conn.execute(f"SELECT * FROM {table}")
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow([c[0] for c in cur.description])
            writer.writerows(cur.fetchall())
            out[table] = buf.getvalue().encode()
        return out
