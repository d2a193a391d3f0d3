"""Deterministic synthetic event corpora for tests and demos.

The generator is seeded and uses only stable float formatting, so the
same call always produces byte-identical files.
"""

from pathlib import Path

import numpy as np

from .events import InteractionEvent, Platform, write_events

_ECOM_ACTIONS = ("cart", "favorite", "purchase")
_VIDEO_ACTIONS = ("like", "comment", "share", "follow")


def generate_fixture_events(
    n_events: int = 10_000,
    n_users: int = 120,
    n_items: int = 400,
    seed: int = 7,
    video_fraction: float = 0.7,
    start: int = 1_717_200_000,
    span_days: int = 14,
) -> list[InteractionEvent]:
    """A mixed video/e-commerce log with per-user habits baked in.

    Each user gets a stable completion tendency so personalized
    thresholds are meaningful; timestamps are drawn with duplicates so
    ingestion and causal labeling see ties and out-of-order input.
    """
    rng = np.random.default_rng(seed)
    patience = rng.uniform(0.3, 0.9, n_users)
    events = []
    span = span_days * 86_400
    for _ in range(n_events):
        u = int(rng.integers(n_users))
        user_id = f"u{u:04d}"
        item_id = f"i{int(rng.integers(n_items)):04d}"
        # Coarse steps keep timestamp collisions frequent.
        timestamp = start + int(rng.integers(span // 600)) * 600
        if rng.random() < video_fraction:
            duration = float(np.round(np.exp(rng.uniform(np.log(10), np.log(900))), 1))
            clicked = bool(rng.random() < 0.75)
            if clicked:
                ratio = float(
                    np.clip(patience[u] + rng.normal(0.0, 0.25), 0.0, 1.2)
                )
                watch = float(np.round(ratio * duration, 2))
                actions: frozenset[str] = frozenset()
                if rng.random() < 0.15:
                    actions = frozenset(
                        {_VIDEO_ACTIONS[int(rng.integers(len(_VIDEO_ACTIONS)))]}
                    )
            else:
                watch = 0.0
                actions = frozenset()
            events.append(
                InteractionEvent(
                    user_id=user_id,
                    item_id=item_id,
                    timestamp=timestamp,
                    platform=Platform.VIDEO,
                    clicked=clicked,
                    watch_duration=watch,
                    item_duration=duration,
                    followup_actions=actions,
                )
            )
        else:
            clicked = bool(rng.random() < 0.55)
            actions = frozenset()
            if clicked and rng.random() < 0.35:
                actions = frozenset(
                    {_ECOM_ACTIONS[int(rng.integers(len(_ECOM_ACTIONS)))]}
                )
            events.append(
                InteractionEvent(
                    user_id=user_id,
                    item_id=item_id,
                    timestamp=timestamp,
                    platform=Platform.ECOMMERCE,
                    clicked=clicked,
                    followup_actions=actions,
                )
            )
    return events


def write_fixture(path: str | Path, **kwargs) -> list[InteractionEvent]:
    events = generate_fixture_events(**kwargs)
    write_events(path, events)
    return events
