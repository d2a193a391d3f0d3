"""Interaction-log data model and line-delimited ingestion.

Event files are UTF-8 text with one JSON object per line:

    {"user": "u1", "item": "i1", "ts": 100, "platform": "ecommerce",
     "clicked": true, "actions": ["purchase"]}

Keys: ``user`` (string), ``item`` (string), ``ts`` (integer seconds),
``platform`` ("ecommerce" | "video"), ``clicked`` (boolean),
``watch`` (number, video only), ``duration`` (number, video only),
``actions`` (array of strings, optional). Unknown keys and unknown action
strings are rejected rather than dropped, so schema drift surfaces early.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path


class Platform(Enum):
    ECOMMERCE = "ecommerce"
    VIDEO = "video"


#: Every follow-up action the schema accepts, across both platforms.
ACTION_VOCABULARY = frozenset(
    {"cart", "favorite", "purchase", "like", "comment", "share", "follow"}
)

_EVENT_KEYS = frozenset(
    {"user", "item", "ts", "platform", "clicked", "watch", "duration", "actions"}
)


class EventValidationError(ValueError):
    """An event violates a type invariant; ``field`` names the offender."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


class EventParseError(ValueError):
    """A line could not be parsed as an event record."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class LogFormatError(ValueError):
    """More than half the lines of a log file were rejected."""


@dataclass(frozen=True)
class InteractionEvent:
    """One user-item interaction.

    ``watch_duration`` and ``item_duration`` are present exactly when
    ``platform`` is video; follow-up actions imply ``clicked``.
    """

    user_id: str
    item_id: str
    timestamp: int
    platform: Platform
    clicked: bool
    watch_duration: float | None = None
    item_duration: float | None = None
    followup_actions: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.user_id:
            raise EventValidationError("user_id", "must be a nonempty string")
        if not self.item_id:
            raise EventValidationError("item_id", "must be a nonempty string")
        if isinstance(self.timestamp, bool) or not isinstance(self.timestamp, int):
            raise EventValidationError("timestamp", "must be an integer")
        if self.platform is Platform.VIDEO:
            if self.watch_duration is None:
                raise EventValidationError(
                    "watch_duration", "required for video events"
                )
            if self.item_duration is None:
                raise EventValidationError(
                    "item_duration", "required for video events"
                )
            if self.watch_duration < 0:
                raise EventValidationError("watch_duration", "must be non-negative")
            if self.item_duration <= 0:
                raise EventValidationError("item_duration", "must be positive")
        else:
            if self.watch_duration is not None:
                raise EventValidationError(
                    "watch_duration", "only valid for video events"
                )
            if self.item_duration is not None:
                raise EventValidationError(
                    "item_duration", "only valid for video events"
                )
        unknown = self.followup_actions - ACTION_VOCABULARY
        if unknown:
            raise EventValidationError(
                "followup_actions", f"unknown actions {sorted(unknown)}"
            )
        if self.followup_actions and not self.clicked:
            raise EventValidationError(
                "followup_actions", "actions require clicked=true"
            )


@dataclass(frozen=True)
class TimeWindow:
    """Half-open timestamp range ``[start, end)``."""

    start: int
    end: int

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError(f"window start {self.start} must precede end {self.end}")

    def contains(self, timestamp: int) -> bool:
        return self.start <= timestamp < self.end


def _require(record: dict, key: str, line_number: int):
    if key not in record:
        raise EventParseError(line_number, f"missing key {key!r}")
    return record[key]


def parse_event(line: str, line_number: int = 0) -> InteractionEvent:
    """Parse one JSON record into a validated :class:`InteractionEvent`.

    Raises :class:`EventParseError` for malformed records and
    :class:`EventValidationError` when a well-formed record violates an
    event invariant.
    """
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise EventParseError(line_number, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(record, dict):
        raise EventParseError(line_number, "record must be a JSON object")
    unknown = set(record) - _EVENT_KEYS
    if unknown:
        raise EventParseError(line_number, f"unknown keys {sorted(unknown)}")

    user = _require(record, "user", line_number)
    item = _require(record, "item", line_number)
    ts = _require(record, "ts", line_number)
    platform_raw = _require(record, "platform", line_number)
    clicked = _require(record, "clicked", line_number)
    if not isinstance(user, str) or not isinstance(item, str):
        raise EventParseError(line_number, "user and item must be strings")
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise EventParseError(line_number, "ts must be an integer")
    if not isinstance(clicked, bool):
        raise EventParseError(line_number, "clicked must be a boolean")
    try:
        platform = Platform(platform_raw)
    except ValueError:
        raise EventParseError(
            line_number, f"platform must be one of {[p.value for p in Platform]}"
        ) from None

    def _number(key: str) -> float | None:
        value = record.get(key)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise EventParseError(line_number, f"{key} must be a number")
        return float(value)

    actions = record.get("actions", [])
    if not isinstance(actions, list) or not all(isinstance(a, str) for a in actions):
        raise EventParseError(line_number, "actions must be an array of strings")

    return InteractionEvent(
        user_id=user,
        item_id=item,
        timestamp=ts,
        platform=platform,
        clicked=clicked,
        watch_duration=_number("watch"),
        item_duration=_number("duration"),
        followup_actions=frozenset(actions),
    )


def event_to_json(event: InteractionEvent) -> str:
    """Serialize an event to its one-line JSON form (round-trips exactly)."""
    record: dict = {
        "user": event.user_id,
        "item": event.item_id,
        "ts": event.timestamp,
        "platform": event.platform.value,
        "clicked": event.clicked,
    }
    if event.platform is Platform.VIDEO:
        record["watch"] = event.watch_duration
        record["duration"] = event.item_duration
    if event.followup_actions:
        record["actions"] = sorted(event.followup_actions)
    return json.dumps(record, separators=(",", ":"))


@dataclass
class IngestResult:
    """Valid events sorted by (user, timestamp) plus rejection accounting."""

    events: list[InteractionEvent]
    rejected: list[tuple[int, str]] = field(default_factory=list)

    @property
    def rejected_count(self) -> int:
        return len(self.rejected)


def _parse_or_reject(
    numbered: tuple[int, str],
) -> tuple[InteractionEvent | None, tuple[int, str] | None]:
    number, line = numbered
    try:
        return parse_event(line, number), None
    except (EventParseError, EventValidationError) as exc:
        return None, (number, str(exc))


def ingest_log(path: str | Path, workers: int = 1) -> IngestResult:
    """Read an event file, tolerating out-of-order and malformed lines.

    Blank lines are skipped. Output is sorted by (user_id, timestamp),
    which downstream causal labeling relies on. Raises
    :class:`LogFormatError` if more than half the non-blank lines are
    rejected, since that indicates the wrong file format rather than a
    few bad records. Parsing may fan out over ``workers`` threads; the
    final sort keeps the result deterministic either way.
    """
    with open(path, encoding="utf-8") as handle:
        numbered = [
            (i, line) for i, line in enumerate(handle, start=1) if line.strip()
        ]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_parse_or_reject, numbered))
    else:
        outcomes = [_parse_or_reject(pair) for pair in numbered]

    events = [event for event, _ in outcomes if event is not None]
    rejected = [reject for _, reject in outcomes if reject is not None]

    if numbered and len(rejected) * 2 > len(numbered):
        raise LogFormatError(
            f"{len(rejected)} of {len(numbered)} lines rejected; "
            f"this does not look like an event log (first: "
            f"line {rejected[0][0]}: {rejected[0][1]})"
        )

    events.sort(key=lambda e: (e.user_id, e.timestamp))
    return IngestResult(events=events, rejected=rejected)


def write_events(path: str | Path, events: list[InteractionEvent]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for event in events:
            handle.write(event_to_json(event) + "\n")
