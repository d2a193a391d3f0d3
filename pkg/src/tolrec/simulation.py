"""Closed-loop retention experiment on a synthetic population.

Each simulated day, every active user receives a ranked slate, clicks
according to surface appeal, watches according to true affinity, and the
arm's model is retrained on its accumulated log labeled by the streaming
labeler. Tolerance-labeled sessions erode a user's trust
(``trust *= 1 - trust_decay``), positive sessions restore a little
(``trust += trust_recovery``), and next-day activity is a draw against a
logistic return curve over trust. Items whose surface vectors diverge
from their content vectors (``surface_true_correlation < 1``) are the
clickbait that manufactures tolerance.

Both arms face clones of the same population, identical per-user random
streams, and one shared matrix of return-probability draws, so any
difference between arms is attributable to the training objective alone.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .events import InteractionEvent, Platform
from .labeling import (
    CausalLabeler,
    Label,
    LabeledSample,
    LabelingConfig,
    RuleMode,
)
from .trainer import RankingModel, TrainConfig, train

DAY_SECONDS = 86_400
#: Follow-up actions a satisfied viewer may leave.
_VIDEO_ACTIONS = ("like", "comment", "share", "follow")


@dataclass
class SimUser:
    user_id: str
    true_affinity: np.ndarray
    surface_attraction: np.ndarray
    #: Baseline completion tendency in (0, 1).
    patience: float
    trust: float = 1.0
    active: bool = True


@dataclass(frozen=True)
class SimItem:
    item_id: str
    surface: np.ndarray
    true_content: np.ndarray
    duration: float

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("item duration must be positive")


@dataclass(frozen=True)
class ReturnCurve:
    """Logistic in trust, rescaled to hit the floor exactly at trust 0 and
    the ceiling at trust 1."""

    floor: float = 0.2
    ceiling: float = 0.9
    steepness: float = 8.0
    midpoint: float = 0.5

    def probability(self, trust: float) -> float:
        low = _expit(self.steepness * (0.0 - self.midpoint))
        high = _expit(self.steepness * (1.0 - self.midpoint))
        raw = _expit(self.steepness * (trust - self.midpoint))
        unit = (raw - low) / (high - low)
        return self.floor + (self.ceiling - self.floor) * unit


def _expit(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


@dataclass(frozen=True)
class SimConfig:
    population: int = 100
    catalog: int = 200
    days: int = 7
    slate_size: int = 10
    #: Random candidates drawn per user per day before ranking.
    candidate_pool: int = 40
    dimension: int = 8
    #: Softens the click probability sigmoid.
    temperature: float = 1.0
    #: Correlation between an item's surface and content vectors; below 1,
    #: surface appeal can exceed true affinity (clickbait).
    surface_true_correlation: float = 0.3
    #: Weight of a shared taste direction in every user's vectors. Above 0,
    #: broadly appealing items exist, so clickbait is an item-level property
    #: the ranking model can pick up from pooled feedback.
    population_taste: float = 0.6
    #: Multiplicative trust loss per tolerance-labeled session.
    trust_decay: float = 0.05
    #: Additive trust gain per positive-labeled session.
    trust_recovery: float = 0.005
    return_curve: ReturnCurve = ReturnCurve()
    #: Std-dev of the noise around the expected watch ratio.
    ratio_noise: float = 0.08
    #: Sharpens the appeal/affinity sigmoids driving expectation and
    #: experience.
    watch_sharpness: float = 2.0
    #: Multiplier pushing promise-kept watches past full completion, where
    #: the ratio cap clusters them at exactly 1.0.
    completion_gain: float = 2.0
    #: Experienced-affinity sigmoid level above which follow-up actions can
    #: fire (and only when the item delivered on its surface promise).
    action_affinity_threshold: float = 0.5
    action_probability: float = 0.9
    seed: int = 0
    warm_start: bool = False
    labeling: LabelingConfig = LabelingConfig(rule_mode=RuleMode.RATIO_OR_ACTION)

    def __post_init__(self):
        if self.population < 2 or self.catalog < 1:
            raise ValueError("population must be >= 2 and catalog >= 1")
        if not 0.0 <= self.surface_true_correlation <= 1.0:
            raise ValueError("surface_true_correlation must lie in [0, 1]")
        if not 0.0 <= self.population_taste < 1.0:
            raise ValueError("population_taste must lie in [0, 1)")
        if not 0.0 <= self.trust_decay < 1.0:
            raise ValueError("trust_decay must lie in [0, 1)")
        if self.trust_recovery < 0:
            raise ValueError("trust_recovery must be non-negative")
        if self.slate_size > self.candidate_pool:
            raise ValueError("slate_size cannot exceed candidate_pool")
        if self.candidate_pool > self.catalog:
            raise ValueError("candidate_pool cannot exceed catalog")


def generate_population(config: SimConfig) -> tuple[list[SimUser], list[SimItem]]:
    """Seeded users and items.

    Vector components are scaled so dot products are roughly unit-normal.
    An item's surface vector is ``rho * content + sqrt(1 - rho^2) * noise``,
    so component correlation equals ``surface_true_correlation`` and
    ``rho = 1`` makes surface and content identical. Users want what they
    click on (surface attraction equals true affinity) and share a taste
    direction with weight ``population_taste``; all deception is item-side.
    """
    rng = np.random.default_rng(config.seed)
    d = config.dimension
    scale = (4.0 / d) ** 0.25
    omega = config.population_taste
    shared_taste = rng.normal(0.0, scale, d)
    users = []
    for u in range(config.population):
        taste = (
            math.sqrt(1.0 - omega * omega) * rng.normal(0.0, scale, d)
            + omega * shared_taste
        )
        users.append(
            SimUser(
                user_id=f"u{u:05d}",
                true_affinity=taste,
                surface_attraction=taste.copy(),
                patience=float(rng.uniform(0.65, 0.95)),
            )
        )
    rho = config.surface_true_correlation
    items = []
    for i in range(config.catalog):
        content = rng.normal(0.0, scale, d)
        noise = rng.normal(0.0, scale, d)
        surface = rho * content + math.sqrt(1.0 - rho * rho) * noise
        duration = float(math.exp(rng.uniform(math.log(10.0), math.log(600.0))))
        items.append(
            SimItem(
                item_id=f"i{i:05d}",
                surface=surface,
                true_content=content,
                duration=duration,
            )
        )
    return users, items


def user_response(
    user: SimUser,
    item: SimItem,
    rng: np.random.Generator,
    timestamp: int,
    config: SimConfig,
) -> InteractionEvent:
    """Simulate one impression.

    Click probability follows surface appeal. Given a click, the watch
    ratio is sampled around ``completion_gain * patience * sigmoid(true
    affinity)``, normalized by the expectation the surface raised, then
    clamped to [0, 1]: an item that delivers on its promise gets watched
    to the end (the cap clusters kept promises at exactly full
    completion), while a deceptive one is abandoned at a depth that
    shrinks with the expectation gap and grows with patience. Follow-up
    actions fire only on genuinely liked items that kept their promise.
    """
    appeal = float(user.surface_attraction @ item.surface)
    clicked = rng.random() < _expit(appeal / config.temperature)
    if not clicked:
        return InteractionEvent(
            user_id=user.user_id,
            item_id=item.item_id,
            timestamp=timestamp,
            platform=Platform.VIDEO,
            clicked=False,
            watch_duration=0.0,
            item_duration=item.duration,
        )
    expectation = _expit(config.watch_sharpness * appeal)
    experience = _expit(
        config.watch_sharpness * float(user.true_affinity @ item.true_content)
    )
    kept_promise = min(1.0, experience / expectation)
    center = config.completion_gain * user.patience * kept_promise
    ratio = center + rng.normal(0.0, config.ratio_noise)
    ratio = min(max(ratio, 0.0), 1.0)
    actions: frozenset[str] = frozenset()
    if experience >= expectation and experience > config.action_affinity_threshold:
        if rng.random() < config.action_probability:
            actions = frozenset({_VIDEO_ACTIONS[int(rng.integers(len(_VIDEO_ACTIONS)))]})
    return InteractionEvent(
        user_id=user.user_id,
        item_id=item.item_id,
        timestamp=timestamp,
        platform=Platform.VIDEO,
        clicked=True,
        watch_duration=ratio * item.duration,
        item_duration=item.duration,
        followup_actions=actions,
    )


def update_trust(user: SimUser, label: Label, config: SimConfig) -> None:
    """Tolerance erodes trust multiplicatively; a positive session restores
    a little, capped at 1. Negatives (non-clicks) cost the user nothing."""
    if label is Label.TOLERANCE:
        user.trust *= 1.0 - config.trust_decay
    elif label is Label.POSITIVE:
        user.trust = min(1.0, user.trust + config.trust_recovery)


@dataclass
class DayArmStats:
    day: int
    arm: str
    active_users: int
    retention: float
    tolerance_rate: float
    dwell_mean: float
    impressions: int
    tolerance_events: int


@dataclass
class SimReport:
    objectives: dict[str, str]
    rows: list[DayArmStats] = field(default_factory=list)

    def arm_rows(self, arm: str) -> list[DayArmStats]:
        return [r for r in self.rows if r.arm == arm]

    def overall_tolerance_rate(self, arm: str) -> float:
        rows = self.arm_rows(arm)
        impressions = sum(r.impressions for r in rows)
        if impressions == 0:
            return 0.0
        return sum(r.tolerance_events for r in rows) / impressions

    def average_retention_delta(self) -> float:
        deltas = [
            b.retention - a.retention
            for a, b in zip(self.arm_rows("A"), self.arm_rows("B"))
        ]
        return sum(deltas) / len(deltas) if deltas else 0.0

    def table_rows(self) -> list[list[str]]:
        """Rows for the daily CSV: per-day per-arm stats with deltas taken
        against arm A, then one average row per arm."""
        a_rows = {r.day: r for r in self.arm_rows("A")}
        out = []
        for row in self.rows:
            base = a_rows[row.day]
            out.append(
                [
                    str(row.day),
                    row.arm,
                    str(row.active_users),
                    f"{row.retention - base.retention:.6f}",
                    f"{row.tolerance_rate:.6f}",
                    f"{row.dwell_mean - base.dwell_mean:.3f}",
                ]
            )
        for arm in ("A", "B"):
            rows = self.arm_rows(arm)
            base_rows = self.arm_rows("A")
            n = len(rows)
            out.append(
                [
                    "avg",
                    arm,
                    str(round(sum(r.active_users for r in rows) / n)),
                    f"{sum(r.retention - b.retention for r, b in zip(rows, base_rows)) / n:.6f}",
                    f"{sum(r.tolerance_rate for r in rows) / n:.6f}",
                    f"{sum(r.dwell_mean - b.dwell_mean for r, b in zip(rows, base_rows)) / n:.3f}",
                ]
            )
        return out


class _Arm:
    def __init__(
        self,
        name: str,
        config: TrainConfig,
        users: list[SimUser],
        sim: SimConfig,
    ):
        self.name = name
        self.config = config
        self.users = [replace(u) for u in users]
        self.labeler = CausalLabeler(sim.labeling)
        self.log: list[LabeledSample] = []
        self.model: RankingModel | None = None


def simulate_experiment(
    config_a: TrainConfig, config_b: TrainConfig, sim: SimConfig
) -> SimReport:
    """Run the paired two-arm experiment and return the daily report.

    Give both configs the same seed to keep model initialization paired;
    everything else is paired by construction.
    """
    users, items = generate_population(sim)
    item_ids = [it.item_id for it in items]
    by_id = {it.item_id: it for it in items}
    arms = [
        _Arm("A", config_a, users, sim),
        _Arm("B", config_b, users, sim),
    ]
    # One behavior stream per (arm, user), built from the same seeds so the
    # arms' streams are identical; one shared matrix of return draws so
    # retention differs only where trust differs.
    behavior = {
        arm.name: [
            np.random.default_rng([sim.seed, 17, u]) for u in range(sim.population)
        ]
        for arm in arms
    }
    return_draws = np.random.default_rng([sim.seed, 23]).random(
        (sim.population, sim.days + 1)
    )

    report = SimReport(
        objectives={arm.name: arm.config.objective.value for arm in arms}
    )
    for day in range(1, sim.days + 1):
        for arm in arms:
            events: list[InteractionEvent] = []
            rngs = behavior[arm.name]
            for u, user in enumerate(arm.users):
                if not user.active:
                    continue
                rng = rngs[u]
                pool_idx = rng.choice(sim.catalog, size=sim.candidate_pool, replace=False)
                pool = [item_ids[j] for j in pool_idx]
                if arm.model is None:
                    slate = pool[: sim.slate_size]
                else:
                    slate = arm.model.rank(user.user_id, pool)[: sim.slate_size]
                for slot, item_id in enumerate(slate):
                    timestamp = day * DAY_SECONDS + slot * 60
                    events.append(
                        user_response(user, by_id[item_id], rng, timestamp, sim)
                    )

            events.sort(key=lambda e: (e.user_id, e.timestamp))
            samples = arm.labeler.extend(events)
            clicked = {
                (e.user_id, e.timestamp): e.clicked for e in events
            }
            tolerance_events = 0
            user_index = {user.user_id: user for user in arm.users}
            for sample in samples:
                if sample.label is Label.TOLERANCE:
                    if not clicked[(sample.user_id, sample.timestamp)]:
                        raise AssertionError(
                            "labeler produced a tolerance label for a non-click"
                        )
                    tolerance_events += 1
                update_trust(user_index[sample.user_id], sample.label, sim)
            arm.log.extend(samples)

            if arm.log:
                init = arm.model if sim.warm_start else None
                arm.model = train(arm.log, arm.config, init_model=init).model

            active_now = [u for u, user in enumerate(arm.users) if user.active]
            dwell: dict[str, float] = {arm.users[u].user_id: 0.0 for u in active_now}
            for event in events:
                dwell[event.user_id] += event.watch_duration
            retained = 0
            for u in range(sim.population):
                user = arm.users[u]
                next_active = bool(
                    return_draws[u, day - 1]
                    < sim.return_curve.probability(user.trust)
                )
                if user.active and next_active:
                    retained += 1
                user.active = next_active
            report.rows.append(
                DayArmStats(
                    day=day,
                    arm=arm.name,
                    active_users=len(active_now),
                    retention=retained / len(active_now) if active_now else 0.0,
                    tolerance_rate=(
                        tolerance_events / len(events) if events else 0.0
                    ),
                    dwell_mean=(
                        sum(dwell.values()) / len(dwell) if dwell else 0.0
                    ),
                    impressions=len(events),
                    tolerance_events=tolerance_events,
                )
            )
    return report


DAILY_REPORT_HEADER = [
    "day",
    "arm",
    "active_users",
    "retention_delta",
    "tolerance_rate",
    "dwell_delta",
]


def write_daily_report(path, report: SimReport, seed: int | None = None) -> None:
    """Daily CSV: `day,arm,active_users,retention_delta,tolerance_rate,
    dwell_delta`; an optional leading seed column for multi-seed batches."""
    header = DAILY_REPORT_HEADER
    rows = report.table_rows()
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        if seed is None:
            writer.writerow(header)
            writer.writerows(rows)
        else:
            writer.writerow(["seed"] + header)
            writer.writerows([[str(seed)] + row for row in rows])


def append_daily_report(handle, report: SimReport, seed: int) -> None:
    writer = csv.writer(handle)
    writer.writerows([[str(seed)] + row for row in report.table_rows()])
