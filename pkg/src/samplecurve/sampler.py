"""Train/test splitting and the nested, event-stratified subset sequence.

The learning-curve x-axis is the number of events (positive-class samples)
used for training.  Subsets are drawn by stratified sampling so every
subset keeps the training outcome rate, and they are nested: each larger
subset contains all rows of every smaller one.  Nesting is realized by one
global permutation of the positives and one of the negatives, from which
the subsets take prefixes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

DEFAULT_TEST_FRACTION = 0.20
DEFAULT_STEP_EVENTS = 100
DEFAULT_MAX_EVENTS = 20_000
MIN_CURVE_STEPS = 3  # a 3-parameter curve fit needs >= 3 points


@dataclass(frozen=True)
class SplitSpec:
    """How to carve out the held-out test set."""

    test_fraction: float = DEFAULT_TEST_FRACTION
    seed: int = 0
    stratified: bool = False  # off by default: plain random selection

    def __post_init__(self) -> None:
        if not 0.0 < self.test_fraction < 1.0:
            raise InputError("test_fraction must be in (0, 1)")


@dataclass(frozen=True)
class SubsetStep:
    """One rung of the subset ladder.

    ``sample_indices`` index into the *training* rows and are a superset of
    every smaller step's indices.
    """

    target_events: int
    actual_events: int
    sample_indices: np.ndarray
    n_samples: int


@dataclass(frozen=True)
class SubsetPlan:
    """Ordered, nested, stratified subset sequence."""

    steps: tuple[SubsetStep, ...]
    step_size_events: int = DEFAULT_STEP_EVENTS
    max_events: int = DEFAULT_MAX_EVENTS

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def max_step_events(self) -> int:
        return self.steps[-1].target_events if self.steps else 0


def split_train_test(labels, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Split sample indices into disjoint, exhaustive (train, test) sets.

    ``|test| = round(test_fraction * n)``.  The default draw is simple
    random selection; ``spec.stratified`` switches to per-class sampling.
    Deterministic for a fixed seed.

    Raises
    ------
    InputError
        If either side ends up without both classes
        ("split produced degenerate side").
    """
    labels = np.asarray(labels)
    n = labels.size
    n_test = round(spec.test_fraction * n)
    if n_test == 0 or n_test == n:
        raise InputError("test_fraction leaves an empty side")
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        pos = np.flatnonzero(labels == 1)
        neg = np.flatnonzero(labels == 0)
        n_test_pos = round(spec.test_fraction * pos.size)
        n_test_neg = n_test - n_test_pos
        if n_test_neg < 0 or n_test_neg > neg.size:
            raise InputError("stratified split infeasible for these counts")
        test = np.concatenate(
            [rng.permutation(pos)[:n_test_pos], rng.permutation(neg)[:n_test_neg]]
        )
    else:
        test = rng.permutation(n)[:n_test]
    test = np.sort(test)
    mask = np.ones(n, dtype=bool)
    mask[test] = False
    train = np.flatnonzero(mask)
    for side, name in ((train, "train"), (test, "test")):
        side_labels = labels[side]
        if side_labels.min(initial=1) == 1 or side_labels.max(initial=0) == 0:
            raise InputError(f"split produced degenerate side: {name}")
    return train, test


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def build_subset_plan(
    train_labels,
    step_size: int = DEFAULT_STEP_EVENTS,
    max_events: int = DEFAULT_MAX_EVENTS,
    seed: int = 0,
) -> SubsetPlan:
    """Build the nested stratified subset ladder over the training rows.

    Steps sit at exact event counts ``step_size, 2*step_size, ...`` up to
    ``min(max_events, available events)``; no partial final step.  Each
    step holds exactly its target number of positives plus
    ``round(target * (1-r)/r)`` negatives (half-up rounding), where ``r``
    is the training outcome rate, so the subset rate matches ``r`` to
    within ``1/n_samples_subset``.

    Raises
    ------
    InputError
        If the training set has fewer than ``step_size`` events.
    """
    if step_size <= 0:
        raise InputError("step_size must be positive")
    train_labels = np.asarray(train_labels)
    pos = np.flatnonzero(train_labels == 1)
    neg = np.flatnonzero(train_labels == 0)
    if pos.size < step_size:
        raise InputError(
            f"training set has {pos.size} events; need at least {step_size} "
            "for a non-empty plan"
        )
    rate = pos.size / train_labels.size
    rng = np.random.default_rng(seed)
    pos_perm = rng.permutation(pos)
    neg_perm = rng.permutation(neg)

    n_steps = min(max_events, pos.size) // step_size
    steps = []
    for k in range(1, n_steps + 1):
        events = k * step_size
        n_neg = _round_half_up(events * (1.0 - rate) / rate)
        indices = np.sort(np.concatenate([pos_perm[:events], neg_perm[:n_neg]]))
        indices.flags.writeable = False
        steps.append(
            SubsetStep(
                target_events=events,
                actual_events=events,
                sample_indices=indices,
                n_samples=events + n_neg,
            )
        )
    return SubsetPlan(
        steps=tuple(steps), step_size_events=step_size, max_events=max_events
    )


def eligible_for_study(plan: SubsetPlan) -> bool:
    """True iff the plan supports a power-law fit (>= 3 steps, i.e. >= 300
    training events at the default step size)."""
    return len(plan) >= MIN_CURVE_STEPS


def plan_to_text(plan: SubsetPlan) -> str:
    """Audit serialization: one ``target_events n_samples`` line per step."""
    lines = [f"step_size_events {plan.step_size_events}", f"max_events {plan.max_events}"]
    lines += [f"{s.target_events} {s.n_samples}" for s in plan.steps]
    return "\n".join(lines) + "\n"
