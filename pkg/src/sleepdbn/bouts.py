"""Bout extraction and covariate discretization.

Epochs are collapsed into maximal same-stage runs ("bouts"). Each bout
carries its duration, its onset time since sleep onset (TSSO) and the
cumulative sleep (CST = N1+N2+N3+R) and restorative sleep (CRST = N3+R)
accrued strictly before it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hypnogram_io import HS_INDEX, STAGE_INDEX, STAGES, Cohort, SubjectRecord

TSSO_EDGES = (90.0, 180.0, 270.0, 360.0)
TSSO_LABELS = ("<90", "90-180", "180-270", "270-360", ">360")
QUANTILE_PROBS = (0.25, 0.50, 0.75)
QUANTILE_VARIABLES = ("duration", "cst", "crst")

_SLEEP = np.array([s != "W" for s in STAGES])
_RESTORATIVE = np.array([s in ("N3", "R") for s in STAGES])


class OnsetUndefinedError(ValueError):
    pass


class DiscretizationError(ValueError):
    pass


@dataclass(frozen=True)
class Bout:
    t: int
    stage: str
    duration_min: float
    tsso_min: float
    cst_min: float
    crst_min: float


@dataclass(frozen=True)
class DiscreteBout:
    stage: str
    d_level: int
    t_level: int
    cst_level: int
    crst_level: int


@dataclass
class SubjectBouts:
    """Column-oriented bouts of one subject (stage codes are indices into ``STAGES``)."""

    subject_id: str
    health_status: str
    stage: np.ndarray
    duration: np.ndarray
    tsso: np.ndarray
    cst: np.ndarray
    crst: np.ndarray
    n_epochs: int = 0

    @property
    def hs(self) -> int:
        return HS_INDEX[self.health_status]

    def __len__(self):
        return len(self.stage)

    def to_bouts(self) -> list[Bout]:
        return [
            Bout(i, STAGES[s], float(d), float(t), float(c), float(r))
            for i, (s, d, t, c, r) in enumerate(
                zip(self.stage, self.duration, self.tsso, self.cst, self.crst)
            )
        ]


def trim_to_sleep_onset(stages):
    """Drop the epochs before the first non-W epoch.

    >>> trim_to_sleep_onset(["W", "W", "N1", "W", "N2"])
    ['N1', 'W', 'N2']
    """
    for i, s in enumerate(stages):
        if s != "W":
            return list(stages[i:])
    raise OnsetUndefinedError("no non-W epoch: sleep onset undefined")


def _runs(codes: np.ndarray):
    starts = np.flatnonzero(np.r_[True, codes[1:] != codes[:-1]])
    lengths = np.diff(np.r_[starts, len(codes)])
    return codes[starts], lengths


def _bout_columns(epochs, epoch_seconds: int):
    if len(epochs) == 0:
        raise ValueError("empty epoch sequence")
    codes = np.fromiter((STAGE_INDEX[s] for s in epochs), dtype=np.int64, count=len(epochs))
    stage, lengths = _runs(codes)
    # Exact arithmetic in epochs, converted once.
    to_min = epoch_seconds / 60.0
    onset = np.r_[0, np.cumsum(lengths)[:-1]]
    sleep_len = np.where(_SLEEP[stage], lengths, 0)
    rest_len = np.where(_RESTORATIVE[stage], lengths, 0)
    cst = np.r_[0, np.cumsum(sleep_len)[:-1]]
    crst = np.r_[0, np.cumsum(rest_len)[:-1]]
    return stage, lengths * to_min, onset * to_min, cst * to_min, crst * to_min


def encode_bouts(epochs, epoch_seconds: int = 30) -> list[Bout]:
    """Run-length encode a trimmed epoch sequence into :class:`Bout` objects."""
    stage, dur, tsso, cst, crst = _bout_columns(epochs, epoch_seconds)
    return [
        Bout(i, STAGES[s], float(d), float(t), float(c), float(r))
        for i, (s, d, t, c, r) in enumerate(zip(stage, dur, tsso, cst, crst))
    ]


def subject_bouts(record: SubjectRecord) -> SubjectBouts:
    trimmed = trim_to_sleep_onset(record.stages)
    stage, dur, tsso, cst, crst = _bout_columns(trimmed, record.epoch_seconds)
    return SubjectBouts(record.subject_id, record.health_status, stage, dur, tsso, cst, crst, len(trimmed))


def cohort_bouts(cohort: Cohort, skipped: list | None = None) -> list[SubjectBouts]:
    """Bouts for every subject with a defined sleep onset.

    Subjects without onset are left out; their ids are appended to
    ``skipped`` when a list is passed.
    """
    out = []
    for rec in cohort:
        try:
            out.append(subject_bouts(rec))
        except OnsetUndefinedError:
            if skipped is not None:
                skipped.append(rec.subject_id)
    return out


@dataclass(frozen=True)
class VariableBins:
    """Quantile bins of one non-negative variable with an optional zero class."""

    edges: tuple[float, ...]
    zero_class: bool
    maximum: float

    @property
    def n_levels(self) -> int:
        return len(self.edges) + 1 + int(self.zero_class)

    def levels(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        lv = np.searchsorted(np.asarray(self.edges), values, side="left")
        if self.zero_class:
            lv = np.where(values == 0, 0, lv + 1)
        return lv.astype(np.int64)

    def midpoints(self) -> np.ndarray:
        """Representative value per level, used to turn levels back into minutes."""
        e = np.asarray(self.edges)
        upper = max(self.maximum, e[-1])
        mids = np.r_[e[0] / 2.0, (e[:-1] + e[1:]) / 2.0, (e[-1] + upper) / 2.0]
        if self.zero_class:
            mids = np.r_[0.0, mids]
        return mids

    def to_dict(self):
        return {"edges": list(self.edges), "zero_class": self.zero_class, "maximum": self.maximum}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(float(x) for x in d["edges"]), bool(d["zero_class"]), float(d["maximum"]))


def fit_bins(values, name: str = "variable") -> VariableBins:
    """Quartile edges over the positive values; a zero class iff 0 occurs.

    Edges use linear interpolation between order statistics at position
    (n-1)p. Tied quantiles are merged, so heavily tied data yields fewer
    than four positive bins.
    """
    values = np.asarray(values, dtype=float)
    if np.any(values < 0):
        raise DiscretizationError(f"{name}: negative values")
    pos = values[values > 0]
    if np.unique(pos).size < 4:
        raise DiscretizationError(f"{name}: fewer than 4 distinct positive values")
    edges = np.unique(np.quantile(pos, QUANTILE_PROBS, method="linear"))
    return VariableBins(tuple(float(x) for x in edges), bool(np.any(values == 0)), float(pos.max()))


@dataclass(frozen=True)
class DiscretizationSpec:
    duration: VariableBins
    cst: VariableBins
    crst: VariableBins
    tsso_edges: tuple[float, ...] = TSSO_EDGES

    @property
    def n_tsso(self) -> int:
        return len(self.tsso_edges) + 1

    def tsso_levels(self, values) -> np.ndarray:
        return np.searchsorted(np.asarray(self.tsso_edges), np.asarray(values, float), side="right").astype(np.int64)

    def cumulative(self, which: str) -> VariableBins:
        return {"CST": self.cst, "CRST": self.crst}[which.upper()]

    def to_dict(self):
        return {
            "tsso_edges": list(self.tsso_edges),
            "duration": self.duration.to_dict(),
            "cst": self.cst.to_dict(),
            "crst": self.crst.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            VariableBins.from_dict(d["duration"]),
            VariableBins.from_dict(d["cst"]),
            VariableBins.from_dict(d["crst"]),
            tuple(float(x) for x in d["tsso_edges"]),
        )


def fit_discretization(training) -> DiscretizationSpec:
    """Fit pooled quantile bins on training bouts.

    ``training`` is a list of :class:`SubjectBouts` or of :class:`Bout`.
    """
    if training and isinstance(training[0], Bout):
        dur = [b.duration_min for b in training]
        cst = [b.cst_min for b in training]
        crst = [b.crst_min for b in training]
    else:
        dur = np.concatenate([s.duration for s in training]) if training else []
        cst = np.concatenate([s.cst for s in training]) if training else []
        crst = np.concatenate([s.crst for s in training]) if training else []
    return DiscretizationSpec(fit_bins(dur, "duration"), fit_bins(cst, "cst"), fit_bins(crst, "crst"))


def apply_discretization(bout: Bout, spec: DiscretizationSpec) -> DiscreteBout:
    return DiscreteBout(
        bout.stage,
        int(spec.duration.levels([bout.duration_min])[0]),
        int(spec.tsso_levels([bout.tsso_min])[0]),
        int(spec.cst.levels([bout.cst_min])[0]),
        int(spec.crst.levels([bout.crst_min])[0]),
    )


@dataclass
class DiscreteSubject:
    subject_id: str
    hs: int
    stage: np.ndarray
    d_level: np.ndarray
    t_level: np.ndarray
    cst_level: np.ndarray
    crst_level: np.ndarray
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.stage)


def discretize_subject(sb: SubjectBouts, spec: DiscretizationSpec) -> DiscreteSubject:
    return DiscreteSubject(
        sb.subject_id,
        sb.hs,
        sb.stage,
        spec.duration.levels(sb.duration),
        spec.tsso_levels(sb.tsso),
        spec.cst.levels(sb.cst),
        spec.crst.levels(sb.crst),
    )
