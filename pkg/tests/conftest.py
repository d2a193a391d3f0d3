import numpy as np
import pytest

from tolrec.events import InteractionEvent, Platform

ALL_ACTIONS = ("cart", "favorite", "purchase", "like", "comment", "share", "follow")


def random_event_log(
    rng: np.random.Generator,
    n_events: int = 1000,
    n_users: int = 40,
    n_items: int = 200,
    video_fraction: float = 0.7,
    ts_slots: int = 400,
) -> list[InteractionEvent]:
    """Mixed-platform log sorted by (user, timestamp).

    Timestamps are drawn on a coarse grid so same-user and cross-user
    ties occur; watch durations are continuous so ratio-vs-average
    comparisons never sit exactly on the decision boundary (except via
    the ratio cap, which both implementations under test clamp to the
    same exact value).
    """
    events = []
    for _ in range(n_events):
        user_id = f"u{int(rng.integers(n_users)):03d}"
        item_id = f"i{int(rng.integers(n_items)):03d}"
        timestamp = int(rng.integers(ts_slots)) * 30
        if rng.random() < video_fraction:
            duration = float(np.exp(rng.uniform(np.log(5.0), np.log(1200.0))))
            clicked = bool(rng.random() < 0.7)
            watch = float(rng.uniform(0.0, 1.3) * duration) if clicked else 0.0
            actions = frozenset()
            if clicked and rng.random() < 0.25:
                actions = frozenset({ALL_ACTIONS[int(rng.integers(len(ALL_ACTIONS)))]})
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
            clicked = bool(rng.random() < 0.6)
            actions = frozenset()
            if clicked and rng.random() < 0.3:
                actions = frozenset({ALL_ACTIONS[int(rng.integers(len(ALL_ACTIONS)))]})
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
    events.sort(key=lambda e: (e.user_id, e.timestamp))
    return events


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
