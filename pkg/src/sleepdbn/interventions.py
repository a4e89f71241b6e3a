"""do(HS = h) interventions by Monte-Carlo window sampling.

For each condition, ``n_replicates`` batches of ``n_per_replicate`` windows
are drawn with HS fixed. Every batch yields one value of each statistic;
a credible interval is the median and the 2.5/97.5% quantiles of those
values across batches. Contrasts difference two conditions batch by batch
(same replicate index), so a condition contrasted with itself is exactly
zero in every replicate.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import bn as bnlib
from .bn import FittedBn
from .hypnogram_io import HEALTH_STATUSES, STAGES
from .seeding import substream

N = len(STAGES)
CI_LEVEL = 0.95


class UnsupportedStatisticError(ValueError):
    pass


@dataclass
class ReplicateStats:
    """Per-replicate statistics stacked along axis 0.

    ``prevalence`` is the distribution of S[t-1] (S[t] at lag 0);
    ``lag1[r, a, b]`` = P(S[t]=b | S[t-1]=a); ``lag2_nodes[r, c, a]`` =
    P(S[t-1]=a | S[t-2]=c); ``lag2[r, c, a, b]`` = P(S[t]=b | S[t-2]=c,
    S[t-1]=a); ``durations[r, s]`` = mean D[t] midpoint given S[t]=s.
    Cells whose conditioning event was not sampled are NaN.
    """

    condition: str
    n_per_replicate: int
    prevalence: np.ndarray
    lag1: np.ndarray | None = None
    lag2_nodes: np.ndarray | None = None
    lag2: np.ndarray | None = None
    durations: np.ndarray | None = None

    @property
    def n_replicates(self) -> int:
        return len(self.prevalence)


def _normalize(counts: np.ndarray) -> np.ndarray:
    tot = counts.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(tot > 0, counts / np.where(tot > 0, tot, 1), np.nan)


def window_statistics(bn: FittedBn, windows: bnlib.Windows, midpoints=None) -> dict:
    """All statistics of one batch of sampled windows."""
    lag = bn.lag
    s0 = windows.column(bnlib.stage_node(0))
    out = {}
    if lag >= 1:
        s1 = windows.column(bnlib.stage_node(1))
        out["prevalence"] = np.bincount(s1, minlength=N) / len(s1)
        out["lag1"] = _normalize(np.bincount(s1 * N + s0, minlength=N * N).reshape(N, N).astype(float))
    else:
        out["prevalence"] = np.bincount(s0, minlength=N) / len(s0)
    if lag >= 2:
        s2 = windows.column(bnlib.stage_node(2))
        out["lag2_nodes"] = _normalize(np.bincount(s2 * N + s1, minlength=N * N).reshape(N, N).astype(float))
        c3 = np.bincount((s2 * N + s1) * N + s0, minlength=N**3).reshape(N, N, N).astype(float)
        out["lag2"] = _normalize(c3)
    if midpoints is not None:
        d0 = windows.column(bnlib.duration_node(0))
        n = np.bincount(s0, minlength=N)
        tot = np.bincount(s0, weights=midpoints[d0], minlength=N)
        with np.errstate(invalid="ignore", divide="ignore"):
            out["durations"] = np.where(n > 0, tot / np.where(n > 0, n, 1), np.nan)
    return out


def duration_midpoints(bn: FittedBn) -> np.ndarray:
    if not bn.config.include_duration or bnlib.duration_node(0) not in bn.dag.cards:
        raise UnsupportedStatisticError("model has no duration node")
    if bn.discretization is None:
        raise UnsupportedStatisticError("model carries no discretization; duration midpoints undefined")
    return bn.discretization.duration.midpoints()


def do_sample(
    bn: FittedBn,
    hs: str | int,
    n_replicates: int = 1000,
    n_per_replicate: int = 1000,
    seed=0,
) -> ReplicateStats:
    """Sample replicate batches under do(HS = hs).

    Replicate ``r`` of condition ``hs`` uses its own stream derived from
    ``seed``, the condition and ``r``; results do not depend on how
    replicates are scheduled.
    """
    h = HEALTH_STATUSES.index(hs) if isinstance(hs, str) else int(hs)
    mids = duration_midpoints(bn) if bn.config.include_duration else None
    root = substream(seed, f"intervention/{HEALTH_STATUSES[h]}")
    streams = root.spawn(n_replicates)
    acc: dict[str, list] = {}
    for ss in streams:
        w = bnlib.ancestral_sample(bn, n_per_replicate, np.random.default_rng(ss), fixed={bnlib.HS: h})
        for k, v in window_statistics(bn, w, mids).items():
            acc.setdefault(k, []).append(v)
    return ReplicateStats(HEALTH_STATUSES[h], n_per_replicate, **{k: np.stack(v) for k, v in acc.items()})


@dataclass
class CiEstimate:
    estimate: float
    lo: float
    hi: float
    significant: bool = False
    n_valid: int = 0
    n_replicates: int = 0

    @property
    def complete(self) -> bool:
        return self.n_valid == self.n_replicates and self.n_replicates > 0

    def contains(self, value: float) -> bool:
        return bool(self.lo <= value <= self.hi)


def credible_intervals(values: np.ndarray, contrast: bool = False) -> np.ndarray:
    """Elementwise CiEstimates over axis 0 of ``values`` (an object array).

    Replicates where a cell is undefined (NaN) are dropped for that cell.
    A contrast cell is significant iff its interval excludes 0 and it was
    defined in every replicate.
    """
    values = np.asarray(values, float)
    r = values.shape[0]
    q = (1 - CI_LEVEL) / 2
    valid = (~np.isnan(values)).sum(axis=0)
    out = np.empty(values.shape[1:], dtype=object)
    with warnings.catch_warnings():
        # all-NaN cells ("no estimate") stay NaN
        warnings.simplefilter("ignore", RuntimeWarning)
        med = np.nanmedian(values, axis=0)
        lo = np.nanquantile(values, q, axis=0)
        hi = np.nanquantile(values, 1 - q, axis=0)
    for idx in np.ndindex(values.shape[1:]):
        sig = bool(contrast and valid[idx] == r and (lo[idx] > 0 or hi[idx] < 0))
        out[idx] = CiEstimate(float(med[idx]), float(lo[idx]), float(hi[idx]), sig, int(valid[idx]), r)
    return out


def stat_key(kind: str, *stages) -> str:
    """Identifier of a statistic cell, e.g. ``lag1[N1->W]`` or ``lag2[N2][R->W]``."""
    names = [STAGES[s] if isinstance(s, (int, np.integer)) else s for s in stages]
    if kind in ("prev", "dur"):
        return f"{kind}[{names[0]}]"
    if kind == "lag1":
        return f"lag1[{names[0]}->{names[1]}]"
    if kind == "lag2node":
        return f"lag2[{names[0]}][{names[1]}]"
    if kind == "lag2":
        return f"lag2[{names[0]}][{names[1]}->{names[2]}]"
    raise ValueError(kind)


def _collect(arrays: dict, contrast: bool) -> dict[str, CiEstimate]:
    out = {}
    for kind, values in arrays.items():
        if values is None:
            continue
        cis = credible_intervals(values, contrast)
        for idx in np.ndindex(cis.shape):
            out[stat_key(kind, *idx)] = cis[idx]
    return out


def _arrays(batch: ReplicateStats, which) -> dict:
    table = {
        "prev": batch.prevalence,
        "lag1": batch.lag1,
        "lag2node": batch.lag2_nodes,
        "lag2": batch.lag2,
        "dur": batch.durations,
    }
    return {k: table[k] for k in which}


def expected_statistics(batch: ReplicateStats) -> dict[str, CiEstimate]:
    """Credible intervals of every statistic for a single condition."""
    return _collect(_arrays(batch, ("prev", "lag1", "lag2node", "lag2", "dur")), contrast=False)


def expected_durations(bn: FittedBn, batch: ReplicateStats) -> dict[str, CiEstimate]:
    duration_midpoints(bn)
    if batch.durations is None:
        raise UnsupportedStatisticError("batch was sampled without durations")
    return _collect({"dur": batch.durations}, contrast=False)


def _check_paired(a: ReplicateStats, b: ReplicateStats):
    if a.n_replicates != b.n_replicates:
        raise ValueError(f"replicate counts differ: {a.n_replicates} vs {b.n_replicates}")


def lag1_contrast(a: ReplicateStats, b: ReplicateStats) -> dict[str, CiEstimate]:
    """Prevalence and lag-1 transition differences ``a - b``, replicate-paired."""
    _check_paired(a, b)
    if a.lag1 is None or b.lag1 is None:
        raise UnsupportedStatisticError("lag-1 statistics need lag >= 1")
    return _collect({"prev": a.prevalence - b.prevalence, "lag1": a.lag1 - b.lag1}, contrast=True)


def lag2_contrast(a: ReplicateStats, b: ReplicateStats) -> dict[str, CiEstimate]:
    """Differences of P(S[t-1] | S[t-2]) and P(S[t] | S[t-2], S[t-1])."""
    _check_paired(a, b)
    if a.lag2 is None or b.lag2 is None:
        raise UnsupportedStatisticError("lag-2 statistics need lag >= 2")
    return _collect({"lag2node": a.lag2_nodes - b.lag2_nodes, "lag2": a.lag2 - b.lag2}, contrast=True)


def duration_contrast(a: ReplicateStats, b: ReplicateStats) -> dict[str, CiEstimate]:
    _check_paired(a, b)
    if a.durations is None or b.durations is None:
        raise UnsupportedStatisticError("duration statistics need a duration node")
    return _collect({"dur": a.durations - b.durations}, contrast=True)


@dataclass
class InterventionRun:
    """Expected statistics per condition and contrasts against H."""

    batches: dict[str, ReplicateStats]
    expected: dict[str, dict[str, CiEstimate]]
    contrasts: dict[str, dict[str, CiEstimate]]


def run_interventions(bn: FittedBn, n_replicates=1000, n_per_replicate=1000, seed=0, reference="H") -> InterventionRun:
    batches = {h: do_sample(bn, h, n_replicates, n_per_replicate, seed) for h in HEALTH_STATUSES}
    expected = {h: expected_statistics(b) for h, b in batches.items()}
    contrasts = {}
    ref = batches[reference]
    for h, b in batches.items():
        if h == reference:
            continue
        res = {}
        if bn.lag >= 1:
            res.update(lag1_contrast(b, ref))
        else:
            res.update(_collect({"prev": b.prevalence - ref.prevalence}, contrast=True))
        if bn.lag >= 2:
            res.update(lag2_contrast(b, ref))
        if b.durations is not None:
            res.update(duration_contrast(b, ref))
        contrasts[f"{h}-{reference}"] = res
    return InterventionRun(batches, expected, contrasts)
