"""Hand-built ground-truth networks shared by unit and acceptance tests."""
import numpy as np

from sleepdbn import bn as bnlib
from sleepdbn.bouts import DiscretizationSpec, VariableBins

TOY_BINS = VariableBins((1.0, 3.0, 8.0), False, 20.0)  # midpoints 0.5, 2, 5.5, 14
TOY_SPEC = DiscretizationSpec(TOY_BINS, VariableBins((10.0, 20.0, 30.0), True, 50.0), VariableBins((5.0, 10.0, 15.0), True, 25.0))


def random_bn(config: bnlib.BnConfig, seed=0, concentration=2.0, spec=TOY_SPEC) -> bnlib.FittedBn:
    """Every CPT row drawn from a symmetric Dirichlet."""
    rng = np.random.default_rng(seed)
    dag = bnlib.build_structure(config, spec)
    cpts = {}
    for node in dag.nodes:
        shape = (dag.n_parent_configs(node), dag.cards[node])
        if node == bnlib.HS:
            table = np.full(shape, 1.0 / shape[1])
        else:
            table = rng.dirichlet(np.full(shape[1], concentration), size=shape[0])
        cpts[node] = bnlib.Cpt(node, dag.parents[node], table)
    return bnlib.FittedBn(config, dag, cpts, spec, np.full(3, 1 / 3))


def set_row(bn, node, parent_values: dict, probs):
    cpt = bn.cpts[node]
    r = np.ravel_multi_index([parent_values[p] for p in cpt.parents], [bn.dag.cards[p] for p in cpt.parents])
    cpt.table[r] = probs


def copy_hs_rows(bn, src: int = 0):
    """Make every CPT identical across HS levels (HS becomes irrelevant)."""
    for node in bn.dag.nodes:
        cpt = bn.cpts[node]
        if bnlib.HS not in cpt.parents:
            continue
        cards = [bn.dag.cards[p] for p in cpt.parents]
        t = cpt.table.reshape(*cards, -1)
        ax = cpt.parents.index(bnlib.HS)
        src_slice = np.take(t, [src], axis=ax)
        t[...] = np.repeat(src_slice, cards[ax], axis=ax)
        cpt.table = t.reshape(cpt.table.shape)


W, N1, N2, N3, R = range(5)


def planted_lag2_bn(effect=0.15, seed=0):
    """Lag-2 network where CFS differs from H only in P(S[t] | S[t-2]=N2, S[t-1]=R).

    The N2, R context is made common so ~20% of windows land in it.
    """
    bn = random_bn(bnlib.BnConfig(2), seed=seed, concentration=5.0)
    copy_hs_rows(bn)
    for h in range(3):
        set_row(bn, "S[t-2]", {"HS": h}, [0.10, 0.15, 0.45, 0.15, 0.15])
        set_row(bn, "S[t-1]", {"S[t-2]": N2, "HS": h}, [0.10, 0.15, 0.05, 0.20, 0.50])
    base = np.array([0.30, 0.35, 0.25, 0.05, 0.05])
    moved = base + np.array([effect, -effect, 0, 0, 0])
    for h in range(3):
        set_row(bn, "S[t]", {"S[t-1]": R, "S[t-2]": N2, "HS": h}, moved if h == 1 else base)
    return bn


def three_state_bn(seed=0, concentration=1.0):
    """Lag-2 network with durations in which only N1, N2 and R ever occur."""
    bn = random_bn(bnlib.BnConfig(2, include_duration=True), seed=seed, concentration=concentration)
    for node in bn.dag.nodes:
        if node.startswith("S["):
            t = bn.cpts[node].table
            t[:, [W, N3]] = 0.0
            t /= t.sum(axis=1, keepdims=True)
    return bn
