"""Synthetic hypnogram cohorts from ground-truth bout dynamics.

Each night is generated bout by bout: a stage from the lag-``L`` transition
table of the subject's health status, then a duration level whose
representative length (a whole number of epochs) is written out as epochs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hypnogram_io import HEALTH_STATUSES, STAGES, Cohort, SubjectRecord

DEFAULT_GROUP_SIZES = {"H": 26, "CFS": 14, "CFSFM": 12}
N = len(STAGES)
W, N1, N2, N3, R = range(N)


@dataclass
class GroundTruth:
    """Generative bout model.

    transitions : (3, 5**lag, 5)
        P(S[t] | S[t-1], ..., S[t-lag], HS); rows in row-major order over
        (S[t-1], ..., S[t-lag]).
    initial : (3, 5**lag)
        Distribution of the first ``lag`` stages in chronological order
        (row-major over (S[0], ..., S[lag-1])).
    duration_probs : (3, 5, n_levels)
        P(duration level | stage, HS).
    duration_epochs : (n_levels,)
        Representative length of each level in epochs.
    """

    lag: int
    transitions: np.ndarray
    initial: np.ndarray
    duration_probs: np.ndarray
    duration_epochs: np.ndarray
    night_length_min: float = 480.0
    group_sizes: dict = field(default_factory=lambda: dict(DEFAULT_GROUP_SIZES))
    epoch_seconds: int = 30

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, float)
        self.initial = np.asarray(self.initial, float)
        self.duration_probs = np.asarray(self.duration_probs, float)
        self.duration_epochs = np.asarray(self.duration_epochs, dtype=np.int64)
        if self.lag < 1:
            raise ValueError("ground truth needs lag >= 1")
        if self.night_length_min <= 0:
            raise ValueError("night_length_min must be > 0")
        if self.transitions.shape != (3, N**self.lag, N):
            raise ValueError(f"transitions must have shape (3, {N ** self.lag}, {N})")
        if self.initial.shape != (3, N**self.lag):
            raise ValueError(f"initial must have shape (3, {N ** self.lag})")
        if np.any(self.duration_epochs < 1):
            raise ValueError("duration levels must span at least one epoch")
        for name in ("transitions", "initial", "duration_probs"):
            a = getattr(self, name)
            if np.any(a < 0) or not np.allclose(a.sum(axis=-1), 1.0, atol=1e-12):
                raise ValueError(f"{name}: rows must be probability vectors")
        first = np.unravel_index(np.arange(N**self.lag), (N,) * self.lag)[0]
        if np.any(self.initial[:, first == W] > 0):
            raise ValueError("initial histories must start with a sleep stage")

    @property
    def duration_minutes(self) -> np.ndarray:
        return self.duration_epochs * self.epoch_seconds / 60.0

    def allows_self_transitions(self) -> bool:
        prev = np.unravel_index(np.arange(N**self.lag), (N,) * self.lag)[0]
        return bool(np.any(self.transitions[:, np.arange(N**self.lag), prev] > 0))


@dataclass
class SimulatedNight:
    stages: list[int]
    duration_levels: list[int]
    duration_epochs: list[int]


def simulate_night(gt: GroundTruth, hs: int, rng: np.random.Generator) -> SimulatedNight:
    lag = gt.lag
    hist_flat = rng.choice(N**lag, p=gt.initial[hs])
    stages = [int(s) for s in np.unravel_index(hist_flat, (N,) * lag)]
    levels, epochs = [], []
    target = gt.night_length_min * 60.0 / gt.epoch_seconds
    total = 0
    n_levels = len(gt.duration_epochs)
    i = 0
    while True:
        if i >= len(stages):
            key = np.ravel_multi_index(tuple(stages[-k] for k in range(1, lag + 1)), (N,) * lag)
            stages.append(int(rng.choice(N, p=gt.transitions[hs, key])))
        lv = int(rng.choice(n_levels, p=gt.duration_probs[hs, stages[i]]))
        levels.append(lv)
        epochs.append(int(gt.duration_epochs[lv]))
        total += epochs[-1]
        i += 1
        if total >= target:
            break
    return SimulatedNight(stages[:i], levels, epochs)


def simulate_cohort(gt: GroundTruth, seed=None, return_nights: bool = False):
    """Simulate one night per subject, groups in H, CFS, CFSFM order.

    Each subject draws from its own child stream of ``seed``.
    """
    plan = [(h, j) for h in HEALTH_STATUSES for j in range(gt.group_sizes.get(h, 0))]
    streams = np.random.SeedSequence(seed).spawn(len(plan))
    subjects, nights = [], []
    for (h, j), ss in zip(plan, streams):
        night = simulate_night(gt, HEALTH_STATUSES.index(h), np.random.default_rng(ss))
        stages = []
        for s, e in zip(night.stages, night.duration_epochs):
            stages.extend([STAGES[s]] * e)
        subjects.append(SubjectRecord(f"{h}{j + 1:03d}", h, stages, gt.epoch_seconds))
        nights.append(night)
    cohort = Cohort(subjects, f"simulated(seed={seed})")
    return (cohort, nights) if return_nights else cohort


def _second_order(base: np.ndarray, revisit: float) -> np.ndarray:
    """Lag-2 table from a first-order table with a boosted return to S[t-2]."""
    table = np.zeros((N * N, N))
    for a in range(N):  # S[t-1]
        for b in range(N):  # S[t-2]
            row = base[a].copy()
            if b != a:
                row[b] *= revisit
            table[a * N + b] = row / row.sum()
    return table


# First-order H dynamics (rows: from, columns: to; no self-transitions).
_BASE_H = np.array(
    [
        [0.00, 0.62, 0.24, 0.02, 0.12],
        [0.22, 0.00, 0.63, 0.02, 0.13],
        [0.14, 0.40, 0.00, 0.31, 0.15],
        [0.16, 0.14, 0.70, 0.00, 0.00],
        [0.30, 0.42, 0.28, 0.00, 0.00],
    ]
)

# Multiplicative row edits per condition: (from, to, factor).
_EDITS = {
    "CFS": [(R, W, 1.7), (N1, R, 0.5), (R, N1, 0.6), (N2, R, 0.6), (N1, W, 1.3), (W, R, 0.6)],
    "CFSFM": [(N2, N3, 1.5), (N3, W, 1.6), (N3, N2, 0.75), (W, N1, 0.7), (W, N2, 1.5), (R, N1, 0.6), (N1, R, 0.6)],
}

DURATION_EPOCHS = np.array([1, 3, 8, 20, 50])
# P(level | stage) for H; mean minutes roughly W 2.5, N1 1.2, N2 5.4, N3 2.8, R 9.3.
_DUR_H = np.array(
    [
        [0.50, 0.25, 0.15, 0.08, 0.02],
        [0.60, 0.30, 0.10, 0.00, 0.00],
        [0.20, 0.20, 0.30, 0.25, 0.05],
        [0.40, 0.30, 0.20, 0.08, 0.02],
        [0.10, 0.15, 0.25, 0.30, 0.20],
    ]
)


def _shift_longer(row: np.ndarray, amount: float) -> np.ndarray:
    """Move ``amount`` of mass from the shortest level to the longer ones."""
    row = row.copy()
    take = min(amount, row[0])
    row[0] -= take
    longer = row[1:] + 1e-9
    row[1:] += take * longer / longer.sum()
    return row / row.sum()


def make_default_ground_truth(revisit: float = 2.5, night_length_min: float = 480.0) -> GroundTruth:
    """Hand-tuned lag-2 ground truth with realistic H bout counts and durations.

    CFS has more R->W and fewer transitions into R with longer W/R bouts;
    CFSFM shifts towards N2->N3 and awakenings from N3 with longer N3 bouts.
    """
    trans = np.zeros((3, N * N, N))
    durs = np.zeros((3, N, len(DURATION_EPOCHS)))
    for h, name in enumerate(HEALTH_STATUSES):
        base = _BASE_H.copy()
        for a, b, f in _EDITS.get(name, []):
            base[a, b] *= f
        base /= base.sum(axis=1, keepdims=True)
        trans[h] = _second_order(base, revisit)
        durs[h] = _DUR_H
    durs[1, W] = _shift_longer(durs[1, W], 0.15)
    durs[1, R] = _shift_longer(durs[1, R], 0.08)
    durs[1, N3] = _shift_longer(durs[1, N3], 0.10)
    durs[2, W] = _shift_longer(durs[2, W], 0.10)
    durs[2, N3] = _shift_longer(durs[2, N3], 0.15)
    durs[2, N1] = durs[2, N1] + np.array([0.15, -0.10, -0.05, 0, 0])

    # Nights start N1 -> N2 or N1 -> W, N2 -> N1, ...; never with W.
    init = np.zeros((3, N * N))
    for first, second, p in [(N1, N2, 0.7), (N1, W, 0.15), (N2, N1, 0.1), (N2, N3, 0.05)]:
        init[:, first * N + second] = p
    return GroundTruth(2, trans, init, durs, DURATION_EPOCHS, night_length_min)
