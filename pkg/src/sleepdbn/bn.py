"""Discrete Bayesian networks over fixed-length windows of consecutive bouts.

A window of lag ``L`` holds the stages ``S[t-L] .. S[t]`` together with the
health status ``HS`` and, depending on the configuration, bout durations
``D[t-k]``, the onset time ``T[t]`` and a cumulative-sleep covariate
``C[t]``. Structures are expert-defined (:func:`build_structure`); only the
conditional probability tables are learned.

All nodes are observed in every window, so inference reduces to table
lookups and products of factors.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bouts import DiscreteSubject, DiscretizationSpec
from .hypnogram_io import HEALTH_STATUSES, STAGES

MODEL_SCHEMA = "sleepdbn.model/1"
N_STAGES = len(STAGES)
N_HS = len(HEALTH_STATUSES)
CUMULATIVE_VARIANTS = ("none", "CST", "CRST")

HS = "HS"
TSSO = "T[t]"
CUMULATIVE = "C[t]"


def stage_node(k: int) -> str:
    return "S[t]" if k == 0 else f"S[t-{k}]"


def duration_node(k: int) -> str:
    return "D[t]" if k == 0 else f"D[t-{k}]"


class FitError(ValueError):
    pass


class UnsupportedInterventionError(ValueError):
    pass


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class BnConfig:
    lag: int = 2
    include_tsso: bool = False
    include_duration: bool = False
    cumulative: str = "none"
    smoothing_alpha: float = 1.0

    def __post_init__(self):
        if self.lag not in range(5):
            raise ValueError(f"lag must be in 0..4, got {self.lag}")
        if self.cumulative not in CUMULATIVE_VARIANTS:
            raise ValueError(f"cumulative must be one of {CUMULATIVE_VARIANTS}")
        if self.smoothing_alpha < 0:
            raise ValueError("smoothing_alpha must be >= 0")

    @property
    def label(self) -> str:
        parts = [f"lag={self.lag}"]
        if self.include_tsso:
            parts.append("TSSO")
        if self.include_duration:
            parts.append("Duration")
        if self.cumulative != "none":
            parts.append(self.cumulative)
        return " + ".join(parts)


@dataclass
class Dag:
    """Named discrete variables with ordered parent lists.

    ``nodes`` is kept in a topological order.
    """

    cards: dict[str, int]
    parents: dict[str, tuple[str, ...]]
    nodes: tuple[str, ...] = ()

    def __post_init__(self):
        for n, ps in self.parents.items():
            if n not in self.cards:
                raise ValueError(f"unknown node {n!r}")
            for p in ps:
                if p not in self.cards:
                    raise ValueError(f"edge from unknown node {p!r} into {n!r}")
        for n, c in self.cards.items():
            if c < 2:
                raise ValueError(f"node {n!r} needs at least 2 states")
            self.parents.setdefault(n, ())
        self.nodes = tuple(self._toposort())

    def _toposort(self):
        order, state = [], {}

        def visit(n):
            if state.get(n) == 1:
                raise ValueError(f"cycle through {n!r}")
            if state.get(n) == 2:
                return
            state[n] = 1
            for p in self.parents[n]:
                visit(p)
            state[n] = 2
            order.append(n)

        for n in self.cards:
            visit(n)
        return order

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [(p, n) for n in self.nodes for p in self.parents[n]]

    @property
    def roots(self) -> list[str]:
        return [n for n in self.nodes if not self.parents[n]]

    def index(self, node: str) -> int:
        return self.nodes.index(node)

    def n_parent_configs(self, node: str) -> int:
        return int(np.prod([self.cards[p] for p in self.parents[node]], dtype=np.int64))

    def family(self, node: str) -> tuple[str, ...]:
        return (node,) + self.parents[node]

    def to_dict(self):
        return {"cards": dict(self.cards), "parents": {n: list(self.parents[n]) for n in self.nodes}}

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d["cards"]), {n: tuple(p) for n, p in d["parents"].items()})


def build_structure(config: BnConfig, discretization: DiscretizationSpec | None = None) -> Dag:
    """Instantiate the structure family member selected by ``config``.

    Without a discretization, durations get 4 levels and cumulative
    covariates 5 (four quartile bins plus the zero class, which every
    night's first bout populates).
    """
    lag = config.lag
    n_d = discretization.duration.n_levels if discretization else 4
    if config.cumulative != "none" and discretization is not None:
        n_c = discretization.cumulative(config.cumulative).n_levels
    else:
        n_c = 5
    n_t = discretization.n_tsso if discretization else 5

    cards = {HS: N_HS}
    parents: dict[str, tuple[str, ...]] = {HS: ()}
    if config.include_tsso:
        cards[TSSO] = n_t
        parents[TSSO] = ()
    if config.cumulative != "none":
        cards[CUMULATIVE] = n_c
        parents[CUMULATIVE] = ((TSSO,) if config.include_tsso else ()) + (HS,)

    # History stages depend on all earlier stages in the window and on HS.
    for k in range(lag, 0, -1):
        cards[stage_node(k)] = N_STAGES
        parents[stage_node(k)] = tuple(stage_node(j) for j in range(k + 1, lag + 1)) + (HS,)

    s_par = [stage_node(k) for k in range(1, lag + 1)]
    if config.include_duration:
        s_par += [duration_node(k) for k in range(1, lag + 1)]
    if config.include_tsso:
        s_par.append(TSSO)
    if config.cumulative != "none":
        s_par.append(CUMULATIVE)
    s_par.append(HS)
    cards[stage_node(0)] = N_STAGES
    parents[stage_node(0)] = tuple(s_par)

    if config.include_duration:
        for k in range(lag, -1, -1):
            cards[duration_node(k)] = n_d
            extra = (TSSO,) if (k == 0 and config.include_tsso) else ()
            parents[duration_node(k)] = (stage_node(k),) + extra + (HS,)
    return Dag(cards, parents)


@dataclass
class Cpt:
    """P(child | parents) as an (n_parent_configs, child_card) array.

    Rows follow row-major order over the parents' state indices.
    """

    child: str
    parents: tuple[str, ...]
    table: np.ndarray

    def row_index(self, dag: Dag, values: dict) -> np.ndarray:
        if not self.parents:
            return np.zeros(np.shape(values[self.child]) if self.child in values else (), dtype=np.int64)
        idx = [np.asarray(values[p]) for p in self.parents]
        return np.ravel_multi_index(idx, [dag.cards[p] for p in self.parents])

    def prob(self, dag: Dag, values: dict) -> np.ndarray:
        return self.table[self.row_index(dag, values), np.asarray(values[self.child])]


@dataclass
class Windows:
    """Observed windows as an integer matrix with one column per DAG node."""

    nodes: tuple[str, ...]
    data: np.ndarray
    subject: np.ndarray = field(default=None)
    subject_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.int64).reshape(-1, len(self.nodes))
        if self.subject is None:
            self.subject = np.zeros(len(self.data), dtype=np.int64)

    def __len__(self):
        return len(self.data)

    def column(self, node: str) -> np.ndarray:
        return self.data[:, self.nodes.index(node)]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {n: self.data[:, i] for i, n in enumerate(self.nodes)}

    def take(self, mask) -> "Windows":
        return Windows(self.nodes, self.data[mask], self.subject[mask], self.subject_ids)

    def for_subject(self, i: int) -> "Windows":
        return self.take(self.subject == i)


def _node_column(node: str, subj: DiscreteSubject, lag: int, cumulative: str) -> np.ndarray:
    n = len(subj)
    if node == HS:
        return np.full(n - lag, subj.hs, dtype=np.int64)
    if node == TSSO:
        return subj.t_level[lag:]
    if node == CUMULATIVE:
        src = subj.cst_level if cumulative == "CST" else subj.crst_level
        return src[lag:]
    k = 0 if node.endswith("[t]") else int(node.split("-")[1].rstrip("]"))
    src = subj.stage if node.startswith("S") else subj.d_level
    return src[lag - k : n - k]


def build_windows(subjects: list[DiscreteSubject], config: BnConfig, dag: Dag) -> Windows:
    """Slide a (lag+1)-bout window over every subject.

    The first ``lag`` bouts of a subject only ever appear as history.
    """
    lag = config.lag
    blocks, owner, ids = [], [], []
    for i, subj in enumerate(subjects):
        ids.append(subj.subject_id)
        if len(subj) <= lag:
            continue
        cols = [_node_column(n, subj, lag, config.cumulative) for n in dag.nodes]
        blocks.append(np.column_stack(cols))
        owner.append(np.full(len(subj) - lag, i, dtype=np.int64))
    if not blocks:
        return Windows(dag.nodes, np.zeros((0, len(dag.nodes)), np.int64), np.zeros(0, np.int64), ids)
    return Windows(dag.nodes, np.vstack(blocks), np.concatenate(owner), ids)


@dataclass
class FittedBn:
    config: BnConfig
    dag: Dag
    cpts: dict[str, Cpt]
    discretization: DiscretizationSpec | None
    hs_prior: np.ndarray

    @property
    def lag(self) -> int:
        return self.config.lag

    def factor_probs(self, values: dict, nodes=None) -> np.ndarray:
        """Per-node factor values stacked as (len(nodes), n)."""
        nodes = self.dag.nodes if nodes is None else nodes
        return np.stack([self.cpts[n].prob(self.dag, values) for n in nodes])


def count_table(dag: Dag, node: str, windows: Windows) -> np.ndarray:
    ps = dag.parents[node]
    card = dag.cards[node]
    child = windows.column(node)
    if ps:
        rows = np.ravel_multi_index([windows.column(p) for p in ps], [dag.cards[p] for p in ps])
    else:
        rows = np.zeros(len(windows), dtype=np.int64)
    n_rows = dag.n_parent_configs(node)
    return np.bincount(rows * card + child, minlength=n_rows * card).reshape(n_rows, card).astype(float)


def fit(
    dag: Dag,
    windows: Windows,
    alpha: float = 1.0,
    config: BnConfig | None = None,
    discretization: DiscretizationSpec | None = None,
    hs_prior=None,
) -> FittedBn:
    """Estimate every CPT by additive smoothing of window counts.

    Each row is ``(count + alpha) / (row_total + alpha * card)``. Rows never
    observed with ``alpha=0`` fall back to uniform. The HS table is the
    prior (uniform unless ``hs_prior`` is given), not an estimate.
    """
    if len(windows) == 0:
        raise FitError("no training windows")
    if tuple(windows.nodes) != tuple(dag.nodes):
        raise FitError("window columns do not match DAG nodes")
    prior = np.full(N_HS, 1.0 / N_HS) if hs_prior is None else np.asarray(hs_prior, float)
    prior = prior / prior.sum()
    cpts = {}
    for node in dag.nodes:
        if node == HS:
            cpts[node] = Cpt(node, (), prior[None, :].copy())
            continue
        counts = count_table(dag, node, windows)
        card = dag.cards[node]
        num = counts + alpha
        tot = num.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            table = np.where(tot > 0, num / np.where(tot > 0, tot, 1.0), 1.0 / card)
        cpts[node] = Cpt(node, dag.parents[node], table)
    if config is None:
        config = BnConfig(smoothing_alpha=alpha)
    return FittedBn(config, dag, cpts, discretization, prior)


def predict_proba(bn: FittedBn, windows: Windows | dict) -> np.ndarray:
    """Next-stage distributions, one row per window (the CPT row of S[t])."""
    values = windows.as_dict() if isinstance(windows, Windows) else windows
    cpt = bn.cpts[stage_node(0)]
    for p in cpt.parents:
        v = np.asarray(values[p])
        if np.any(v < 0) or np.any(v >= bn.dag.cards[p]):
            raise ValueError(f"level out of range for {p}")
    return cpt.table[cpt.row_index(bn.dag, values)]


def predict_next_stage(bn: FittedBn, context: dict) -> tuple[np.ndarray, str]:
    """Distribution of S[t] for one fully observed parent context and its argmax.

    Ties go to the earliest stage in W, N1, N2, N3, R order.
    """
    ctx = {k: np.atleast_1d(v) for k, v in context.items()}
    p = predict_proba(bn, ctx)[0]
    return p, STAGES[int(np.argmax(p))]


def _hs_log_scores(bn: FittedBn, windows: Windows) -> np.ndarray:
    """log P(HS=h) + sum of log factors that involve HS, shape (n, 3)."""
    values = windows.as_dict()
    involved = [n for n in bn.dag.nodes if n != HS and HS in bn.dag.parents[n]]
    out = np.empty((len(windows), N_HS))
    with np.errstate(divide="ignore"):
        for h in range(N_HS):
            values[HS] = np.full(len(windows), h)
            f = bn.factor_probs(values, involved) if involved else np.ones((1, len(windows)))
            out[:, h] = np.log(bn.hs_prior[h]) + np.log(f).sum(axis=0)
    return out


def window_hs_posteriors(bn: FittedBn, windows: Windows) -> np.ndarray:
    scores = _hs_log_scores(bn, windows)
    top = scores.max(axis=1, keepdims=True)
    dead = ~np.isfinite(top[:, 0])
    top[dead] = 0.0
    w = np.exp(scores - top)
    w[dead] = bn.hs_prior
    return w / w.sum(axis=1, keepdims=True)


def classify_hs(bn: FittedBn, windows: Windows) -> np.ndarray:
    """Health-status posterior of one subject: mean of per-window posteriors."""
    if len(windows) == 0:
        raise ValueError("classify_hs needs at least one window")
    post = window_hs_posteriors(bn, windows).mean(axis=0)
    return post / post.sum()


def classify_subjects(bn: FittedBn, windows: Windows) -> dict[int, np.ndarray]:
    post = window_hs_posteriors(bn, windows)
    out = {}
    for i in np.unique(windows.subject):
        p = post[windows.subject == i].mean(axis=0)
        out[int(i)] = p / p.sum()
    return out


def loglik(bn: FittedBn, windows: Windows) -> float:
    """Sum over windows of the log joint probability of all observed nodes.

    Returns ``-inf`` when any factor is zero.
    """
    with np.errstate(divide="ignore"):
        return float(np.log(bn.factor_probs(windows.as_dict())).sum())


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def ancestral_sample(bn: FittedBn, n: int, seed=None, fixed: dict | None = None) -> Windows:
    """Draw ``n`` windows in topological order.

    Nodes in ``fixed`` are set rather than sampled. Only root nodes may be
    fixed, so fixing is equivalent to conditioning (a do-intervention on a
    root leaves the rest of the graph untouched).
    """
    fixed = fixed or {}
    for node in fixed:
        if node not in bn.dag.cards:
            raise KeyError(node)
        if bn.dag.parents[node]:
            raise UnsupportedInterventionError(f"cannot fix non-root node {node!r}")
    rng = _as_generator(seed)
    data = np.empty((n, len(bn.dag.nodes)), dtype=np.int64)
    values = {}
    for j, node in enumerate(bn.dag.nodes):
        if node in fixed:
            col = np.full(n, int(fixed[node]), dtype=np.int64)
        else:
            cpt = bn.cpts[node]
            cum = np.cumsum(cpt.table, axis=1)
            rows = cpt.row_index(bn.dag, values) if cpt.parents else np.zeros(n, dtype=np.int64)
            u = rng.random(n)
            col = (cum[rows] <= u[:, None]).sum(axis=1)
            np.minimum(col, bn.dag.cards[node] - 1, out=col)
        data[:, j] = col
        values[node] = col
    return Windows(bn.dag.nodes, data)


def save_model(bn: FittedBn, path) -> None:
    doc = {
        "schema": MODEL_SCHEMA,
        "config": asdict(bn.config),
        "dag": bn.dag.to_dict(),
        "discretization": bn.discretization.to_dict() if bn.discretization else None,
        "hs_prior": bn.hs_prior.tolist(),
        "cpts": {
            n: {"parents": list(c.parents), "shape": list(c.table.shape), "table": c.table.ravel().tolist()}
            for n, c in bn.cpts.items()
        },
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_model(path) -> FittedBn:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != MODEL_SCHEMA:
        raise SchemaError(f"unsupported model schema {doc.get('schema')!r}; expected {MODEL_SCHEMA}")
    dag = Dag.from_dict(doc["dag"])
    cpts = {
        n: Cpt(n, tuple(c["parents"]), np.asarray(c["table"], dtype=float).reshape(c["shape"]))
        for n, c in doc["cpts"].items()
    }
    disc = DiscretizationSpec.from_dict(doc["discretization"]) if doc["discretization"] else None
    return FittedBn(BnConfig(**doc["config"]), dag, cpts, disc, np.asarray(doc["hs_prior"], float))


def n_parameters(dag: Dag) -> int:
    """Free parameters: (card - 1) per parent configuration, summed over nodes."""
    return int(sum(dag.n_parent_configs(n) * (dag.cards[n] - 1) for n in dag.nodes))
