"""Raw device-file parsing and match-clock synchronization.

A device file is a delimited text table (comma or semicolon, autodetected
from the header) with one column per recorded channel. The nine canonical
channels per device are accelerometer, gyroscope, and magnetometer on x/y/z;
anything else in the file is discarded via the column map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import FormatError

CANONICAL_CHANNELS = (
    "acc.x", "acc.y", "acc.z",
    "gyro.x", "gyro.y", "gyro.z",
    "mag.x", "mag.y", "mag.z",
)

DEFAULT_PRE_ROLL_S = 600.0


@dataclass(frozen=True)
class SensorReading:
    """One sensed value, in match-relative seconds (negative before kickoff)."""

    player_id: str
    t: float
    signal_id: str
    value: float
    period_id: int


@dataclass(frozen=True)
class RawReading:
    """A reading still on the device clock."""

    device_relative_t: float
    channel: str
    value: float


@dataclass
class DeviceConfig:
    """How to read one device's file and place it on the wall clock.

    time_mode selects how the time column is interpreted: "seconds" for a
    real-valued seconds column, "samples" for an integer sample counter
    divided by sample_rate_hz.
    """

    device_slot: str
    column_map: dict[str, str]
    sample_rate_hz: float
    power_on_wall_time: float
    time_column: str = "time"
    time_mode: str = "seconds"

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.time_mode not in ("seconds", "samples"):
            raise ValueError(f"unknown time_mode {self.time_mode!r}")


@dataclass(frozen=True)
class PeriodClock:
    period_id: int
    kickoff_wall_time: float
    duration_s: float

    def __post_init__(self):
        if self.period_id < 1:
            raise ValueError("period_id must be >= 1")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")


@dataclass
class SyncDiagnostics:
    """Counts of readings discarded during synchronization."""

    dropped_pre_roll: int = 0
    dropped_between_periods: int = 0
    dropped_after_end: int = 0

    @property
    def dropped(self) -> int:
        return self.dropped_pre_roll + self.dropped_between_periods + self.dropped_after_end


def _detect_delimiter(header_line: str) -> str:
    return ";" if header_line.count(";") > header_line.count(",") else ","


def parse_sensor_file(raw_bytes: bytes, config: DeviceConfig) -> list[RawReading]:
    """One RawReading per (row, mapped channel), in file order.

    Unmapped columns are discarded. The column map must cover all nine
    canonical channels and name columns present in the header.
    """
    covered = set(config.column_map.values())
    for ch in CANONICAL_CHANNELS:
        if ch not in covered:
            raise FormatError(f"missing channel {ch}")
    extra = covered - set(CANONICAL_CHANNELS)
    if extra:
        raise FormatError(f"unknown channels in column_map: {sorted(extra)}")

    text = raw_bytes.decode("utf-8-sig")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty sensor file")
    delim = _detect_delimiter(lines[0])
    header = [h.strip() for h in lines[0].split(delim)]
    col_index = {name: i for i, name in enumerate(header)}

    if config.time_column not in col_index:
        raise FormatError(f"missing time column {config.time_column!r}")
    for source in config.column_map:
        if source not in col_index:
            raise FormatError(f"missing column {source!r} for channel {config.column_map[source]}")

    t_col = col_index[config.time_column]
    mapped = [(col_index[src], ch) for src, ch in config.column_map.items()]
    mapped.sort(key=lambda m: CANONICAL_CHANNELS.index(m[1]))

    readings: list[RawReading] = []
    for row_idx, line in enumerate(lines[1:], start=1):
        cells = line.split(delim)
        if len(cells) != len(header):
            raise FormatError(f"row {row_idx} has {len(cells)} cells, expected {len(header)}", row=row_idx)
        try:
            t_raw = float(cells[t_col])
        except ValueError:
            raise FormatError(f"non-numeric time {cells[t_col]!r} on row {row_idx}", row=row_idx) from None
        t = t_raw / config.sample_rate_hz if config.time_mode == "samples" else t_raw
        for col, channel in mapped:
            try:
                value = float(cells[col])
            except ValueError:
                raise FormatError(
                    f"non-numeric value {cells[col]!r} in column {header[col]!r} on row {row_idx}",
                    row=row_idx,
                ) from None
            readings.append(RawReading(device_relative_t=t, channel=channel, value=value))
    return readings


def synchronize(
    raw_readings: Iterable[RawReading],
    config: DeviceConfig,
    clocks: Sequence[PeriodClock],
    player_id: str,
    pre_roll_s: float = DEFAULT_PRE_ROLL_S,
) -> tuple[list[SensorReading], SyncDiagnostics]:
    """Translate device-relative timestamps to match-relative seconds.

    A reading is assigned to the period that encloses its wall time, or to
    the first period when it falls in the pre-kickoff roll. Readings
    between a period's end and the next kickoff, before the pre-roll, or
    after the last period are dropped and counted.
    """
    if not clocks:
        raise ValueError("clocks must be non-empty")
    periods = sorted(clocks, key=lambda c: c.kickoff_wall_time)
    for prev, nxt in zip(periods, periods[1:]):
        if prev.kickoff_wall_time + prev.duration_s > nxt.kickoff_wall_time:
            raise ValueError("periods overlap")

    diag = SyncDiagnostics()
    out: list[SensorReading] = []
    first_kickoff = periods[0].kickoff_wall_time
    for raw in raw_readings:
        absolute_t = config.power_on_wall_time + raw.device_relative_t
        if absolute_t < first_kickoff - pre_roll_s:
            diag.dropped_pre_roll += 1
            continue
        assigned: PeriodClock | None = None
        between = False
        for i, period in enumerate(periods):
            start = period.kickoff_wall_time
            end = start + period.duration_s
            if absolute_t < start:
                # before this kickoff: only the first period accepts pre-kickoff data
                if i == 0:
                    assigned = period
                else:
                    between = True
                break
            if absolute_t <= end:
                assigned = period
                break
        if assigned is None:
            if between:
                diag.dropped_between_periods += 1
            else:
                diag.dropped_after_end += 1
            continue
        out.append(
            SensorReading(
                player_id=player_id,
                t=absolute_t - assigned.kickoff_wall_time,
                signal_id=f"{config.device_slot}.{raw.channel}",
                value=raw.value,
                period_id=assigned.period_id,
            )
        )
    return out, diag


def load_device_setup(doc: dict) -> tuple[dict[str, list[DeviceConfig]], list[PeriodClock]]:
    """Parse the declarative ingest config: devices per player plus periods.

    Expected shape::

        {
          "periods": [{"period_id": 1, "kickoff_wall_time": ..., "duration_s": ...}, ...],
          "players": {
            "<player_id>": [
              {"device_slot": ..., "column_map": {...}, "sample_rate_hz": ...,
               "power_on_wall_time": ..., "time_column": ..., "time_mode": ...,
               "file": "<path>"},
              ...
            ]
          }
        }

    The optional "file" key is kept by the caller; it is not part of
    DeviceConfig.
    """
    problems = []
    periods = []
    for i, p in enumerate(doc.get("periods", [])):
        try:
            periods.append(
                PeriodClock(
                    period_id=int(p["period_id"]),
                    kickoff_wall_time=float(p["kickoff_wall_time"]),
                    duration_s=float(p["duration_s"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"periods[{i}]: {exc}")
    if not periods:
        problems.append("periods: at least one period is required")

    players: dict[str, list[DeviceConfig]] = {}
    for player, devices in doc.get("players", {}).items():
        configs = []
        for j, d in enumerate(devices):
            try:
                configs.append(
                    DeviceConfig(
                        device_slot=str(d["device_slot"]),
                        column_map=dict(d["column_map"]),
                        sample_rate_hz=float(d["sample_rate_hz"]),
                        power_on_wall_time=float(d["power_on_wall_time"]),
                        time_column=str(d.get("time_column", "time")),
                        time_mode=str(d.get("time_mode", "seconds")),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                problems.append(f"players.{player}[{j}]: {exc}")
        players[player] = configs
    if not players:
        problems.append("players: at least one player is required")
    if problems:
        raise FormatError("; ".join(problems))
    return players, periods
