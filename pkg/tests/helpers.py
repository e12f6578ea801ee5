"""Shared oracles and builders for the test suite.

Everything here is deliberately independent of the library's own code
paths: hard-routing prediction, brute-force Beta-Bernoulli counting, and
exhaustive configuration enumeration re-derive the quantities the library
computes analytically.
"""

import numpy as np
from scipy.special import expit, gammaln

from rfqlab.bnt import BntHyperparams, BntModel, GateNode, LeafNode


def build_random_tree(rng, n_features, n_leaves, weight_scale=2.0,
                      hyperparams=None) -> BntModel:
    """Random binary tree with the requested leaf count and random gates."""
    model = BntModel(n_features, hyperparams or BntHyperparams())
    model.fitted = True
    for _ in range(n_leaves - 1):
        leaves = model.leaves()
        target = leaves[rng.integers(len(leaves))]
        gate = GateNode(
            node_id=model._new_id(),
            w=weight_scale * rng.standard_normal(n_features),
            w0=float(weight_scale * rng.standard_normal()),
            left=LeafNode(model._new_id()),
            right=LeafNode(model._new_id()),
        )
        model._replace(target, gate)
    return model


def hard_route_leaf(model: BntModel, x: np.ndarray) -> LeafNode:
    """Classic decision-tree routing: left iff the gate's affine form > 0."""
    node = model.root
    while isinstance(node, GateNode):
        node = node.left if node.w0 + x @ node.w > 0 else node.right
    return node


def hard_tree_predict(model: BntModel, x: np.ndarray) -> np.ndarray:
    """Per-row hard-routing prediction using each landing leaf's Beta mean."""
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        leaf = hard_route_leaf(model, x[i])
        out[i] = leaf.beta / (leaf.alpha + leaf.beta)
    return out


def brute_force_bound(model: BntModel, x: np.ndarray, y: np.ndarray) -> float:
    """Hard-gate marginal log-likelihood by direct per-leaf label counting."""
    hp = model.hyperparams
    counts = {lf.node_id: [0, 0] for lf in model.leaves()}
    for i in range(x.shape[0]):
        leaf = hard_route_leaf(model, x[i])
        counts[leaf.node_id][int(y[i])] += 1
    log_b_prior = gammaln(hp.prior_alpha) + gammaln(hp.prior_beta) \
        - gammaln(hp.prior_alpha + hp.prior_beta)
    total = 0.0
    for n0, n1 in counts.values():
        a = hp.prior_alpha + n0
        b = hp.prior_beta + n1
        total += gammaln(a) + gammaln(b) - gammaln(a + b) - log_b_prior
    return total


def exact_configuration_loglik(membership: np.ndarray, y: np.ndarray,
                               prior_alpha=1.0, prior_beta=1.0) -> float:
    """Exhaustive sum over every assignment of samples to leaves.

    For each configuration w mapping sample i to leaf w(i), weighs the
    summed log Beta ratios of the per-leaf hard counts by the
    configuration's probability prod_i p(x_i in w(i)).
    """
    m, n_leaves = membership.shape
    with np.errstate(divide="ignore"):
        log_p = np.log(membership)
    configs = np.stack(
        np.meshgrid(*[np.arange(n_leaves)] * m, indexing="ij"), axis=-1
    ).reshape(-1, m)
    log_pw = log_p[np.arange(m)[None, :], configs].sum(axis=1)
    log_b_prior = gammaln(prior_alpha) + gammaln(prior_beta) - gammaln(prior_alpha + prior_beta)
    total = np.zeros(len(configs))
    for leaf in range(n_leaves):
        mask = configs == leaf
        n0 = mask @ (1.0 - y)
        n1 = mask @ y
        total += gammaln(prior_alpha + n0) + gammaln(prior_beta + n1) \
            - gammaln(prior_alpha + prior_beta + n0 + n1) - log_b_prior
    return float(np.exp(log_pw) @ total)


class ConstantFillModel:
    """fill_probability stub returning a constant."""

    def __init__(self, value: float):
        self.value = value

    def fill_probability(self, rfq, quotes):
        return np.full(np.atleast_1d(quotes).shape, self.value)


class CallableFillModel:
    """fill_probability stub delegating to fn(rfq, quotes)."""

    def __init__(self, fn):
        self.fn = fn

    def fill_probability(self, rfq, quotes):
        return np.asarray(self.fn(rfq, np.atleast_1d(quotes)), dtype=float)


class FixedNextMid:
    """next-mid stub predicting a fixed value."""

    def __init__(self, value: float):
        self.value = value

    def predict(self, mid_price, side):
        return np.full(np.shape(np.atleast_1d(mid_price)), self.value)
