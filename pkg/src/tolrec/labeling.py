"""Three-way engagement labeling with personalized watch-ratio thresholds.

Every interaction gets exactly one label:

* ``POSITIVE`` — deep engagement: an e-commerce click followed by cart,
  favorite, or purchase; or a video watched at or above the user's own
  average completion ratio (or, in the default rule, carrying any
  follow-up action such as a like or share).
* ``TOLERANCE`` — superficial engagement: the user clicked and spent
  time but the session ended without the signals above. Video tolerance
  samples carry a weight ``beta = ratio / average`` in [0, 1] grading how
  close the watch came to the user's habit.
* ``NEGATIVE`` — no engagement at all (no click).

The personalized threshold is the user's running mean watch ratio within
a duration bucket (short/medium/long by default), because the meaning of
"watched 5 seconds" depends on whether the video lasts 10 seconds or 10
minutes. Users without enough history fall back to a running global mean,
seeded at 0.5 before any data.
"""

from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
import json

from .events import InteractionEvent, Platform


class Label(Enum):
    POSITIVE = "P"
    TOLERANCE = "T"
    NEGATIVE = "N"


class RuleMode(Enum):
    """How video engagements are promoted to POSITIVE.

    ``RATIO_OR_ACTION``: at-or-above-average watch ratio *or* any
    follow-up action counts. ``RATIO_ONLY``: the ratio test alone
    decides, mirroring a deployment that ignores action signals.
    """

    RATIO_OR_ACTION = "ratio-or-action"
    RATIO_ONLY = "ratio-only"


class LabelingMode(Enum):
    """Which history backs the personalized threshold.

    ``CAUSAL``: only events with strictly earlier timestamps (the
    online-compatible reading). ``LEAVE_ONE_OUT``: the user's full
    history minus the event itself (the retrospective reading).
    """

    CAUSAL = "causal"
    LEAVE_ONE_OUT = "loo"


#: Follow-up actions that make an e-commerce click clearly positive.
ECOMMERCE_POSITIVE_ACTIONS = frozenset({"cart", "favorite", "purchase"})
#: Follow-up actions that make a video engagement clearly positive.
VIDEO_POSITIVE_ACTIONS = frozenset({"like", "comment", "share", "follow"})

#: Global-mean value used before any watch ratio has been observed.
GLOBAL_MEAN_SEED = 0.5


@dataclass(frozen=True)
class LabelingConfig:
    rule_mode: RuleMode = RuleMode.RATIO_OR_ACTION
    #: Bucket boundaries in seconds; () means a single bucket for all durations.
    duration_bucket_edges: tuple[float, ...] = (60.0, 300.0)
    #: Prior ratios required in a bucket before the personal mean is trusted.
    min_history: int = 5
    ratio_cap: float = 1.0
    #: "user": beta is graded against the user's own average;
    #: "population": against the running global mean.
    beta_baseline: str = "user"

    def __post_init__(self):
        edges = self.duration_bucket_edges
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("duration_bucket_edges must be strictly ascending")
        if self.min_history < 1:
            raise ValueError("min_history must be at least 1")
        if self.ratio_cap <= 0:
            raise ValueError("ratio_cap must be positive")
        if self.beta_baseline not in ("user", "population"):
            raise ValueError("beta_baseline must be 'user' or 'population'")

    def bucket_index(self, item_duration: float) -> int:
        return bisect_right(self.duration_bucket_edges, item_duration)

    @property
    def bucket_count(self) -> int:
        return len(self.duration_bucket_edges) + 1


@dataclass
class BucketStats:
    """Running mean of capped watch ratios within one duration bucket."""

    count: int = 0
    mean: float = 0.0

    def push(self, ratio: float) -> None:
        self.count += 1
        self.mean += (ratio - self.mean) / self.count


@dataclass
class UserProfile:
    user_id: str
    buckets: dict[int, BucketStats] = field(default_factory=dict)
    click_count: int = 0

    def bucket_stats(self, bucket: int) -> tuple[int, float]:
        stats = self.buckets.get(bucket)
        if stats is None:
            return 0, 0.0
        return stats.count, stats.mean


@dataclass(frozen=True)
class LabeledSample:
    """One labeled interaction; ``beta`` is present exactly for TOLERANCE."""

    user_id: str
    item_id: str
    timestamp: int
    label: Label
    beta: float | None = None

    def __post_init__(self):
        if (self.beta is not None) != (self.label is Label.TOLERANCE):
            raise ValueError("beta must be present iff label is TOLERANCE")
        if self.beta is not None and not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta {self.beta} outside [0, 1]")


def watch_ratio(event: InteractionEvent, cap: float = 1.0) -> float:
    """Watch time over item duration, clamped to ``cap`` (rewatches count as
    full completion)."""
    if event.platform is not Platform.VIDEO:
        raise ValueError("watch_ratio is only defined for video events")
    return min(event.watch_duration / event.item_duration, cap)


def tolerance_weight(ratio: float, average: float) -> float:
    """Weight for a tolerance sample: how close the watch ratio came to the
    reference average, clamped to [0, 1]. Zero when no average exists."""
    if average <= 0.0:
        return 0.0
    return min(max(ratio / average, 0.0), 1.0)


def update_profile(
    profile: UserProfile, event: InteractionEvent, config: LabelingConfig
) -> UserProfile:
    """Fold one event into the user's running statistics.

    Clicked video events update the matching duration bucket's running
    mean with the capped watch ratio; clicked e-commerce events bump the
    click counter; non-engagements change nothing.
    """
    if event.user_id != profile.user_id:
        raise ValueError(
            f"event user {event.user_id!r} does not match profile "
            f"{profile.user_id!r}"
        )
    if not event.clicked:
        return profile
    if event.platform is Platform.VIDEO:
        bucket = config.bucket_index(event.item_duration)
        stats = profile.buckets.setdefault(bucket, BucketStats())
        stats.push(watch_ratio(event, config.ratio_cap))
    else:
        profile.click_count += 1
    return profile


def label_event(
    event: InteractionEvent,
    profile: UserProfile,
    global_mean: float,
    config: LabelingConfig,
) -> LabeledSample:
    """Assign POSITIVE / TOLERANCE / NEGATIVE to one event.

    E-commerce: no click is negative; a click with a cart/favorite/
    purchase action is positive; a bare click is tolerance with beta 0
    (there is no graded signal to weight it by).

    Video: no click is negative. The personal average is the event's
    duration-bucket mean when it has at least ``min_history`` ratios,
    else ``global_mean``. A ratio at or above the average is positive
    (ties count as positive); under ``RATIO_OR_ACTION`` any like/
    comment/share/follow also promotes to positive. Everything else is
    tolerance, weighted by ratio over average.
    """
    if event.platform is Platform.ECOMMERCE:
        if not event.clicked:
            return _sample(event, Label.NEGATIVE)
        if event.followup_actions & ECOMMERCE_POSITIVE_ACTIONS:
            return _sample(event, Label.POSITIVE)
        return _sample(event, Label.TOLERANCE, beta=0.0)

    if not event.clicked:
        return _sample(event, Label.NEGATIVE)

    ratio = watch_ratio(event, config.ratio_cap)
    count, bucket_mean = profile.bucket_stats(config.bucket_index(event.item_duration))
    average = bucket_mean if count >= config.min_history else global_mean

    positive = ratio >= average
    if config.rule_mode is RuleMode.RATIO_OR_ACTION:
        positive = positive or bool(event.followup_actions & VIDEO_POSITIVE_ACTIONS)
    if positive:
        return _sample(event, Label.POSITIVE)

    baseline = average if config.beta_baseline == "user" else global_mean
    return _sample(event, Label.TOLERANCE, beta=tolerance_weight(ratio, baseline))


def _sample(
    event: InteractionEvent, label: Label, beta: float | None = None
) -> LabeledSample:
    return LabeledSample(
        user_id=event.user_id,
        item_id=event.item_id,
        timestamp=event.timestamp,
        label=label,
        beta=beta,
    )


class _GlobalMean:
    """Running mean of every capped watch ratio seen so far."""

    __slots__ = ("count", "mean")

    def __init__(self):
        self.count = 0
        self.mean = 0.0

    def push(self, ratio: float) -> None:
        self.count += 1
        self.mean += (ratio - self.mean) / self.count

    @property
    def value(self) -> float:
        return self.mean if self.count else GLOBAL_MEAN_SEED


class CausalLabeler:
    """Streaming labeler whose thresholds see only strictly earlier events.

    Events sharing a timestamp are labeled against the state before that
    instant and only then folded in, so simultaneous events never
    influence each other. Batches fed to :meth:`extend` must therefore
    not overlap in time with earlier batches.
    """

    def __init__(self, config: LabelingConfig):
        self.config = config
        self.profiles: dict[str, UserProfile] = {}
        self._global = _GlobalMean()
        self._max_timestamp: int | None = None

    @property
    def global_mean(self) -> float:
        return self._global.value

    def extend(self, events: list[InteractionEvent]) -> list[LabeledSample]:
        """Label a (user, timestamp)-sorted batch and absorb it into state."""
        _check_sorted(events)
        if events and self._max_timestamp is not None:
            earliest = min(e.timestamp for e in events)
            if earliest <= self._max_timestamp:
                raise ValueError(
                    f"batch timestamp {earliest} not after previously seen "
                    f"{self._max_timestamp}"
                )

        samples: list[LabeledSample | None] = [None] * len(events)
        order = sorted(range(len(events)), key=lambda k: (events[k].timestamp, k))
        start = 0
        while start < len(order):
            stop = start
            ts = events[order[start]].timestamp
            while stop < len(order) and events[order[stop]].timestamp == ts:
                stop += 1
            group = order[start:stop]
            for k in group:
                event = events[k]
                profile = self.profiles.get(event.user_id) or UserProfile(
                    event.user_id
                )
                samples[k] = label_event(
                    event, profile, self._global.value, self.config
                )
            for k in group:
                event = events[k]
                profile = self.profiles.setdefault(
                    event.user_id, UserProfile(event.user_id)
                )
                update_profile(profile, event, self.config)
                if event.platform is Platform.VIDEO and event.clicked:
                    self._global.push(watch_ratio(event, self.config.ratio_cap))
            start = stop

        if events:
            latest = max(e.timestamp for e in events)
            if self._max_timestamp is None or latest > self._max_timestamp:
                self._max_timestamp = latest
        return samples  # type: ignore[return-value]


@dataclass
class LabelingResult:
    samples: list[LabeledSample]
    profiles: dict[str, UserProfile]
    global_mean: float


def label_log(
    events: list[InteractionEvent],
    config: LabelingConfig,
    mode: LabelingMode = LabelingMode.CAUSAL,
) -> LabelingResult:
    """Label a whole (user, timestamp)-sorted log.

    Output order matches input order; the returned profiles and global
    mean reflect the full history in both modes.
    """
    _check_sorted(events)
    if mode is LabelingMode.CAUSAL:
        labeler = CausalLabeler(config)
        samples = labeler.extend(events)
        return LabelingResult(samples, labeler.profiles, labeler.global_mean)
    return _label_leave_one_out(events, config)


def _check_sorted(events: list[InteractionEvent]) -> None:
    for prev, cur in zip(events, events[1:]):
        if (cur.user_id, cur.timestamp) < (prev.user_id, prev.timestamp):
            raise ValueError("events must be sorted by (user_id, timestamp)")


def _mean_excluding(ratios: list[float], skip: int | None) -> tuple[int, float]:
    """Running mean over ``ratios`` with position ``skip`` left out."""
    count = 0
    mean = 0.0
    for index, ratio in enumerate(ratios):
        if index == skip:
            continue
        count += 1
        mean += (ratio - mean) / count
    return count, mean


def _label_leave_one_out(
    events: list[InteractionEvent], config: LabelingConfig
) -> LabelingResult:
    # Excluded-self means are recomputed directly rather than downdated:
    # downdating drifts at the last ulp and breaks exact-tie labels for
    # repeated ratios. Quadratic per (user, bucket) and per global-fallback
    # event; fine at the log sizes this tool targets.
    # Positions of each engaged video event within its (user, bucket) ratio
    # list and within the global time-ordered ratio list.
    per_bucket: dict[tuple[str, int], list[float]] = {}
    bucket_position: dict[int, int] = {}
    time_order = sorted(range(len(events)), key=lambda k: (events[k].timestamp, k))
    global_ratios: list[float] = []
    global_position: dict[int, int] = {}
    for k in time_order:
        event = events[k]
        if event.platform is Platform.VIDEO and event.clicked:
            global_position[k] = len(global_ratios)
            global_ratios.append(watch_ratio(event, config.ratio_cap))
    for k, event in enumerate(events):
        if event.platform is Platform.VIDEO and event.clicked:
            key = (event.user_id, config.bucket_index(event.item_duration))
            ratios = per_bucket.setdefault(key, [])
            bucket_position[k] = len(ratios)
            ratios.append(watch_ratio(event, config.ratio_cap))

    samples: list[LabeledSample] = []
    for k, event in enumerate(events):
        profile = UserProfile(event.user_id)
        global_mean = GLOBAL_MEAN_SEED
        if event.platform is Platform.VIDEO and event.clicked:
            bucket = config.bucket_index(event.item_duration)
            ratios = per_bucket[(event.user_id, bucket)]
            count, mean = _mean_excluding(ratios, bucket_position[k])
            if count:
                profile.buckets[bucket] = BucketStats(count=count, mean=mean)
            if count < config.min_history or config.beta_baseline == "population":
                g_count, g_mean = _mean_excluding(global_ratios, global_position[k])
                if g_count:
                    global_mean = g_mean
        samples.append(label_event(event, profile, global_mean, config))

    # Full-history profiles and global mean, identical to the causal end state.
    profiles: dict[str, UserProfile] = {}
    final_global = _GlobalMean()
    for k in time_order:
        event = events[k]
        profile = profiles.setdefault(event.user_id, UserProfile(event.user_id))
        update_profile(profile, event, config)
        if event.platform is Platform.VIDEO and event.clicked:
            final_global.push(watch_ratio(event, config.ratio_cap))
    return LabelingResult(samples, profiles, final_global.value)


# ---------------------------------------------------------------------------
# File formats: labeled samples and profile snapshots are JSON lines.
# ---------------------------------------------------------------------------


def sample_to_json(sample: LabeledSample) -> str:
    record: dict = {
        "user": sample.user_id,
        "item": sample.item_id,
        "ts": sample.timestamp,
        "label": sample.label.value,
    }
    if sample.beta is not None:
        record["beta"] = sample.beta
    return json.dumps(record, separators=(",", ":"))


def parse_sample(line: str) -> LabeledSample:
    record = json.loads(line)
    return LabeledSample(
        user_id=record["user"],
        item_id=record["item"],
        timestamp=record["ts"],
        label=Label(record["label"]),
        beta=record.get("beta"),
    )


def write_samples(path: str | Path, samples: list[LabeledSample]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for sample in samples:
            handle.write(sample_to_json(sample) + "\n")


def read_samples(path: str | Path) -> list[LabeledSample]:
    with open(path, encoding="utf-8") as handle:
        return [parse_sample(line) for line in handle if line.strip()]


def write_profiles(path: str | Path, profiles: dict[str, UserProfile]) -> None:
    """Snapshot profiles as one record per (user, bucket)."""
    with open(path, "w", encoding="utf-8") as handle:
        for user_id in sorted(profiles):
            profile = profiles[user_id]
            for bucket in sorted(profile.buckets):
                stats = profile.buckets[bucket]
                record = {
                    "user": user_id,
                    "bucket": bucket,
                    "count": stats.count,
                    "mean": stats.mean,
                }
                handle.write(json.dumps(record, separators=(",", ":")) + "\n")
