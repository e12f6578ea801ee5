"""Soft binary decision tree with Beta-posterior leaves, grown by gradient ascent.

Internal nodes route probabilistically through sigmoid gates over affine
hyperplanes; a sample's leaf membership is the product of gate factors
along the path. Leaves hold Beta posteriors built from soft label counts,
and the training objective is the summed log Beta-function ratio against
the prior (a lower bound on the marginal likelihood of the labels). The
tree grows one gate at a time at leaves sampled by their unexplained
potential, with a local then global Adam ascent phase per iteration and
likelihood-ratio pruning afterwards.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import expit, gammaln, digamma


class BntError(RuntimeError):
    """Invalid model state or input for a tree operation."""


@dataclass
class GateNode:
    node_id: int
    w: np.ndarray
    w0: float
    left: "GateNode | LeafNode"
    right: "GateNode | LeafNode"


@dataclass
class LeafNode:
    node_id: int
    alpha: float = 1.0
    beta: float = 1.0
    potential: float = 0.0


@dataclass
class BntHyperparams:
    """Training knobs. Defaults follow the tuned configuration:

    Beta(1,1) prior, pruning factor in [1, 1.05], 50-500 growth attempts,
    Adam at 0.05 with 100 steps per attempt split half local / half global,
    and an initial gate-weight norm (relative stiffness) between 2 and 10.
    ``monotone_ascent`` turns on backtracking: Adam steps that would lower
    the bound are reverted and the step size halved.
    """

    prior_alpha: float = 1.0
    prior_beta: float = 1.0
    pruning_factor: float = 1.0
    n_iter: int = 50
    learning_rate_init: float = 0.05
    n_gradient_descent_steps: int = 100
    initial_relative_stiffness: float = 6.0
    seed: int = 0
    monotone_ascent: bool = False
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> None:
        if self.prior_alpha <= 0 or self.prior_beta <= 0:
            raise ValueError("Beta prior parameters must be positive")
        if self.pruning_factor < 1.0:
            raise ValueError("pruning_factor must be >= 1")
        if self.n_iter < 0 or self.n_gradient_descent_steps < 0:
            raise ValueError("iteration counts must be non-negative")
        if self.learning_rate_init <= 0:
            raise ValueError("learning_rate_init must be positive")
        if self.initial_relative_stiffness <= 0:
            raise ValueError("initial_relative_stiffness must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def gate_eval(node: GateNode, x: np.ndarray) -> float | np.ndarray:
    """Sigmoid of the gate's affine form; the probability of routing LEFT."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != len(node.w):
        raise BntError(f"feature dimension {x.shape[-1]} != gate dimension {len(node.w)}")
    z = node.w0 + x @ node.w
    out = expit(z)
    return float(out) if np.isscalar(z) or z.ndim == 0 else out


class BntModel:
    """A fitted (or under-construction) soft decision tree."""

    def __init__(self, n_features: int, hyperparams: BntHyperparams | None = None,
                 feature_names: list[str] | None = None):
        self.n_features = int(n_features)
        self.hyperparams = hyperparams or BntHyperparams()
        self.hyperparams.validate()
        self.feature_names = feature_names
        self._next_id = 1
        self.root: GateNode | LeafNode = LeafNode(
            node_id=0,
            alpha=self.hyperparams.prior_alpha,
            beta=self.hyperparams.prior_beta,
        )
        self.training_log: list[dict] = []
        self.rejected_growths: int = 0
        self.fitted: bool = False

    # ------------------------------------------------------------------ tree

    def _new_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def nodes(self) -> list:
        """All nodes in deterministic preorder (node, left subtree, right)."""
        out: list = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            if isinstance(node, GateNode):
                stack.append(node.right)
                stack.append(node.left)
        return out

    def leaves(self) -> list[LeafNode]:
        return [n for n in self.nodes() if isinstance(n, LeafNode)]

    def gates(self) -> list[GateNode]:
        return [n for n in self.nodes() if isinstance(n, GateNode)]

    def _replace(self, old, new) -> None:
        if old is self.root:
            self.root = new
            return
        for node in self.nodes():
            if isinstance(node, GateNode):
                if node.left is old:
                    node.left = new
                    return
                if node.right is old:
                    node.right = new
                    return
        raise BntError("node to replace not found in tree")

    # --------------------------------------------------------------- forward

    def _check_x(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise BntError(f"expected (m, {self.n_features}) inputs, got {x.shape}")
        return x

    def _memberships(self, x: np.ndarray) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
        """Per-node membership and per-gate activation, keyed by node id."""
        memb: dict[int, np.ndarray] = {}
        acts: dict[int, np.ndarray] = {}
        stack = [(self.root, np.ones(x.shape[0]))]
        while stack:
            node, m = stack.pop()
            memb[node.node_id] = m
            if isinstance(node, GateNode):
                g = expit(node.w0 + x @ node.w)
                acts[node.node_id] = g
                stack.append((node.right, m * (1.0 - g)))
                stack.append((node.left, m * g))
        return memb, acts

    def leaf_membership(self, x: np.ndarray) -> dict[int, np.ndarray] | dict[int, float]:
        """Map leaf id -> membership probability (product of path gates)."""
        single = np.asarray(x).ndim == 1
        xm = self._check_x(x)
        memb, _ = self._memberships(xm)
        out = {lf.node_id: memb[lf.node_id] for lf in self.leaves()}
        if single:
            return {k: float(v[0]) for k, v in out.items()}
        return out

    def predict_proba(self, x: np.ndarray) -> np.ndarray | float:
        """Mixture of leaf Beta means weighted by leaf membership."""
        if not self.fitted:
            raise BntError("model is not fitted; leaf posteriors are unset")
        single = np.asarray(x).ndim == 1
        xm = self._check_x(x)
        memb, _ = self._memberships(xm)
        out = np.zeros(xm.shape[0])
        for lf in self.leaves():
            out += memb[lf.node_id] * (lf.beta / (lf.alpha + lf.beta))
        return float(out[0]) if single else out

    # ------------------------------------------------------------ posteriors

    def _check_xy(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = self._check_x(x)
        y = np.asarray(y, dtype=float).ravel()
        if len(y) != x.shape[0]:
            raise BntError("x and y lengths differ")
        if len(y) == 0:
            raise BntError("empty data")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise BntError("labels must be binary 0/1")
        return x, y

    def _log_beta_prior(self) -> float:
        hp = self.hyperparams
        return float(gammaln(hp.prior_alpha) + gammaln(hp.prior_beta)
                     - gammaln(hp.prior_alpha + hp.prior_beta))

    def posterior_and_bound(self, x: np.ndarray, y: np.ndarray) -> tuple[dict[int, tuple[float, float, float]], float]:
        """Refresh leaf posteriors from soft counts; return per-leaf stats and the bound.

        alpha' accumulates soft counts of label 0, beta' of label 1; each
        leaf's potential is ln B(alpha', beta') - ln B(prior), always <= 0
        under a Beta(1,1) prior. The bound is the sum over leaves.
        """
        x, y = self._check_xy(x, y)
        memb, _ = self._memberships(x)
        return self._posteriors_from_memberships(memb, y)

    def _posteriors_from_memberships(self, memb: dict[int, np.ndarray], y: np.ndarray):
        hp = self.hyperparams
        leaves = self.leaves()
        p = np.column_stack([memb[lf.node_id] for lf in leaves])
        a = hp.prior_alpha + p.T @ (1.0 - y)
        b = hp.prior_beta + p.T @ y
        pots = gammaln(a) + gammaln(b) - gammaln(a + b) - self._log_beta_prior()
        stats: dict[int, tuple[float, float, float]] = {}
        for lf, ai, bi, ci in zip(leaves, a, b, pots):
            lf.alpha = float(ai)
            lf.beta = float(bi)
            lf.potential = float(ci)
            stats[lf.node_id] = (lf.alpha, lf.beta, lf.potential)
        self.fitted = True
        return stats, float(pots.sum())

    # -------------------------------------------------------------- gradient

    def grad_bound(self, x: np.ndarray, y: np.ndarray) -> dict[int, tuple[np.ndarray, float]]:
        """Analytic gradient of the bound w.r.t. every gate weight and bias."""
        x, y = self._check_xy(x, y)
        memb, acts = self._memberships(x)
        self._posteriors_from_memberships(memb, y)
        return self._grad(x, y, memb, acts)

    def _grad(self, x, y, memb, acts, gate_ids: set[int] | None = None):
        """Backward pass given a forward pass with posteriors refreshed.

        Each leaf contributes W_l(i) = p_il * (digamma pull of the label of
        sample i); a gate's gradient in its pre-activation z is
        S_left*(1-g) - S_right*g, where S is the subtree sum of W. The
        chain rule to (w, w0) multiplies by the inputs (and 1 for the bias).
        """
        pull: dict[int, np.ndarray] = {}
        for lf in self.leaves():
            g0 = digamma(lf.alpha) - digamma(lf.alpha + lf.beta)
            g1 = digamma(lf.beta) - digamma(lf.alpha + lf.beta)
            pull[lf.node_id] = memb[lf.node_id] * np.where(y > 0.5, g1, g0)

        subtree: dict[int, np.ndarray] = {}

        def accumulate(node) -> np.ndarray:
            if isinstance(node, LeafNode):
                subtree[node.node_id] = pull[node.node_id]
            else:
                subtree[node.node_id] = accumulate(node.left) + accumulate(node.right)
            return subtree[node.node_id]

        accumulate(self.root)

        grads: dict[int, tuple[np.ndarray, float]] = {}
        for gate in self.gates():
            if gate_ids is not None and gate.node_id not in gate_ids:
                continue
            g = acts[gate.node_id]
            dz = subtree[gate.left.node_id] * (1.0 - g) - subtree[gate.right.node_id] * g
            grads[gate.node_id] = (x.T @ dz, float(dz.sum()))
        return grads

    # ------------------------------------------------------------- training

    def select_leaf(self, rng: np.random.Generator) -> int:
        """Sample a leaf to extend, proportionally to its unexplained potential.

        Potentials are <= 0 under a uniform prior, so c_l / sum(c) is a
        valid distribution favoring the most negative (least explained)
        leaves. Mixed-sign potentials (non-uniform priors) fall back to a
        softmax over -c_l.
        """
        leaves = self.leaves()
        if len(leaves) == 1:
            return leaves[0].node_id
        pots = np.array([lf.potential for lf in leaves])
        total = pots.sum()
        if np.all(pots <= 0.0) and total < 0.0:
            probs = pots / total
        else:
            shifted = -pots - (-pots).max()
            e = np.exp(shifted)
            probs = e / e.sum()
        probs = np.maximum(probs, 0.0)
        probs = probs / probs.sum()
        idx = rng.choice(len(leaves), p=probs)
        return leaves[idx].node_id

    def grow_step(self, x: np.ndarray, y: np.ndarray, rng: np.random.Generator,
                  leaf_id: int | None = None) -> bool:
        """Split one leaf into a gate with two fresh leaves and train it locally.

        The gate direction is uniform on the unit sphere scaled to the
        initial relative stiffness; the bias puts the hyperplane through
        the membership-weighted centroid of the leaf's data. Half of the
        per-iteration Adam budget then trains this gate alone. Returns
        False (attempt recorded, tree unchanged) when the leaf's soft data
        mass is below 2*(prior_alpha + prior_beta).
        """
        x, y = self._check_xy(x, y)
        hp = self.hyperparams
        memb, _ = self._memberships(x)
        self._posteriors_from_memberships(memb, y)
        if leaf_id is None:
            leaf_id = self.select_leaf(rng)
        target = next((lf for lf in self.leaves() if lf.node_id == leaf_id), None)
        if target is None:
            raise BntError(f"no leaf with id {leaf_id}")

        weight = memb[target.node_id]
        mass = float(weight.sum())
        if mass < 2.0 * (hp.prior_alpha + hp.prior_beta):
            self.rejected_growths += 1
            return False

        direction = rng.standard_normal(self.n_features)
        direction /= np.linalg.norm(direction)
        w = hp.initial_relative_stiffness * direction
        centroid = (weight[:, None] * x).sum(axis=0) / mass
        gate = GateNode(
            node_id=self._new_id(),
            w=w,
            w0=float(-w @ centroid),
            left=LeafNode(self._new_id(), hp.prior_alpha, hp.prior_beta),
            right=LeafNode(self._new_id(), hp.prior_alpha, hp.prior_beta),
        )
        self._replace(target, gate)
        self._ascend(x, y, {gate.node_id}, hp.n_gradient_descent_steps // 2)
        return True

    def global_ascent(self, x: np.ndarray, y: np.ndarray) -> None:
        """Train all gate parameters jointly for the other half of the budget.

        Leaf posteriors are never gradient-trained; they are recomputed
        from the final weights.
        """
        x, y = self._check_xy(x, y)
        gates = self.gates()
        if not gates:
            return
        steps = self.hyperparams.n_gradient_descent_steps
        self._ascend(x, y, {g.node_id for g in gates}, steps - steps // 2)
        self.posterior_and_bound(x, y)

    def _ascend(self, x, y, gate_ids: set[int], n_steps: int) -> None:
        """Adam ascent on the bound over the selected gates."""
        hp = self.hyperparams
        gates = [g for g in self.gates() if g.node_id in gate_ids]
        if not gates or n_steps <= 0:
            return
        lr = hp.learning_rate_init
        b1, b2, eps = hp.adam_beta1, hp.adam_beta2, hp.adam_eps
        m = {g.node_id: (np.zeros(self.n_features), 0.0) for g in gates}
        v = {g.node_id: (np.zeros(self.n_features), 0.0) for g in gates}

        for t in range(1, n_steps + 1):
            memb, acts = self._memberships(x)
            _, bound = self._posteriors_from_memberships(memb, y)
            grads = self._grad(x, y, memb, acts, gate_ids)
            snapshot = None
            if hp.monotone_ascent:
                snapshot = [(g, g.w.copy(), g.w0) for g in gates]
            for g in gates:
                gw, g0 = grads[g.node_id]
                mw, mb = m[g.node_id]
                vw, vb = v[g.node_id]
                mw = b1 * mw + (1 - b1) * gw
                mb = b1 * mb + (1 - b1) * g0
                vw = b2 * vw + (1 - b2) * gw * gw
                vb = b2 * vb + (1 - b2) * g0 * g0
                m[g.node_id] = (mw, mb)
                v[g.node_id] = (vw, vb)
                corr1 = 1 - b1 ** t
                corr2 = 1 - b2 ** t
                g.w = g.w + lr * (mw / corr1) / (np.sqrt(vw / corr2) + eps)
                g.w0 = g.w0 + lr * (mb / corr1) / (np.sqrt(vb / corr2) + eps)
            if hp.monotone_ascent:
                memb2, _ = self._memberships(x)
                _, new_bound = self._posteriors_from_memberships(memb2, y)
                if new_bound < bound:
                    for g, w_old, w0_old in snapshot:
                        g.w = w_old
                        g.w0 = w0_old
                    lr *= 0.5

    def prune(self, x: np.ndarray, y: np.ndarray) -> int:
        """Collapse splits that fail the likelihood-ratio keep rule; returns count.

        A gate whose children are both leaves survives only when
        c_left + c_right > c_merged / pruning_factor (all terms <= 0, so a
        factor above 1 demands a relative improvement in magnitude).
        Repeats bottom-up until no gate is removed.
        """
        x, y = self._check_xy(x, y)
        hp = self.hyperparams
        n_pruned = 0
        changed = True
        while changed:
            changed = False
            memb, _ = self._memberships(x)
            self._posteriors_from_memberships(memb, y)
            for gate in self.gates():
                if not (isinstance(gate.left, LeafNode) and isinstance(gate.right, LeafNode)):
                    continue
                pm = memb[gate.node_id]
                a = hp.prior_alpha + float(pm @ (1.0 - y))
                b = hp.prior_beta + float(pm @ y)
                c_merged = float(gammaln(a) + gammaln(b) - gammaln(a + b)) - self._log_beta_prior()
                if gate.left.potential + gate.right.potential > c_merged / hp.pruning_factor:
                    continue
                merged = LeafNode(self._new_id(), alpha=a, beta=b, potential=c_merged)
                self._replace(gate, merged)
                n_pruned += 1
                changed = True
                break
        return n_pruned

    # -------------------------------------------------------- interpretation

    def feature_importance(self, x: np.ndarray) -> np.ndarray:
        """Mass-weighted absolute gate weights, normalized to sum to 1."""
        x = self._check_x(x)
        gates = self.gates()
        if not gates:
            warnings.warn("single-leaf model: feature importance is uniform")
            return np.full(self.n_features, 1.0 / self.n_features)
        memb, _ = self._memberships(x)
        scores = np.zeros(self.n_features)
        for gate in gates:
            mass = float(memb[gate.node_id].mean())
            l1 = float(np.abs(gate.w).sum())
            if l1 > 0:
                scores += mass * np.abs(gate.w) / l1
        total = scores.sum()
        if total <= 0:
            warnings.warn("all gates have zero weight; feature importance is uniform")
            return np.full(self.n_features, 1.0 / self.n_features)
        return scores / total

    def decision_boundary_grid(
        self,
        feature_i: int,
        feature_j: int,
        i_values: np.ndarray,
        j_values: np.ndarray,
        baseline_row: np.ndarray,
    ) -> np.ndarray:
        """Predicted probability over a 2-D grid, other features held at baseline.

        Returns rows (value_i, value_j, probability), i-major order.
        """
        if feature_i == feature_j:
            raise BntError("grid features must differ")
        baseline = np.asarray(baseline_row, dtype=float)
        if baseline.shape != (self.n_features,):
            raise BntError("baseline_row must have one value per feature")
        i_values = np.asarray(i_values, dtype=float)
        j_values = np.asarray(j_values, dtype=float)
        rows = np.tile(baseline, (len(i_values) * len(j_values), 1))
        vi = np.repeat(i_values, len(j_values))
        vj = np.tile(j_values, len(i_values))
        rows[:, feature_i] = vi
        rows[:, feature_j] = vj
        probs = self.predict_proba(rows)
        return np.column_stack([vi, vj, probs])

    # ---------------------------------------------------------- persistence

    def to_dict(self) -> dict:
        nodes = []
        for node in self.nodes():
            if isinstance(node, GateNode):
                nodes.append({
                    "id": node.node_id,
                    "kind": "gate",
                    "w": [float(v) for v in node.w],
                    "w0": float(node.w0),
                    "left": node.left.node_id,
                    "right": node.right.node_id,
                })
            else:
                nodes.append({
                    "id": node.node_id,
                    "kind": "leaf",
                    "alpha": float(node.alpha),
                    "beta": float(node.beta),
                    "potential": float(node.potential),
                })
        return {
            "n_features": self.n_features,
            "feature_names": self.feature_names,
            "root": self.root.node_id,
            "nodes": nodes,
            "hyperparams": self.hyperparams.to_dict(),
            "training_log": self.training_log,
            "rejected_growths": self.rejected_growths,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BntModel":
        hp = BntHyperparams(**payload["hyperparams"])
        model = cls(payload["n_features"], hp, payload.get("feature_names"))
        built: dict[int, GateNode | LeafNode] = {}
        by_id: dict[int, dict] = {}
        for spec in payload["nodes"]:
            if spec["id"] in by_id:
                raise BntError(f"duplicate node id {spec['id']} in model payload")
            by_id[spec["id"]] = spec

        def build(node_id: int):
            if node_id in built:
                raise BntError(f"node {node_id} has multiple parents; not a tree")
            if node_id not in by_id:
                raise BntError(f"model payload references missing node {node_id}")
            spec = by_id[node_id]
            if spec["kind"] == "gate":
                node = GateNode(
                    node_id=node_id,
                    w=np.array(spec["w"], dtype=float),
                    w0=float(spec["w0"]),
                    left=build(spec["left"]),
                    right=build(spec["right"]),
                )
            else:
                for key in ("alpha", "beta", "potential"):
                    if key not in spec:
                        raise BntError(f"leaf {node_id} is missing posterior field {key!r}")
                node = LeafNode(
                    node_id=node_id,
                    alpha=float(spec["alpha"]),
                    beta=float(spec["beta"]),
                    potential=float(spec["potential"]),
                )
            built[node_id] = node
            return node

        model.root = build(payload["root"])
        if len(built) != len(by_id):
            raise BntError("model payload contains unreachable nodes")
        model._next_id = max(by_id) + 1
        model.training_log = list(payload.get("training_log", []))
        model.rejected_growths = int(payload.get("rejected_growths", 0))
        model.fitted = True
        return model


def fit(x: np.ndarray, y: np.ndarray, hyperparams: BntHyperparams | None = None,
        feature_names: list[str] | None = None) -> BntModel:
    """Grow and train a tree: per attempt, select a leaf by potential, split
    it, run local then global Adam ascent, and prune. Deterministic per seed.
    """
    hp = hyperparams or BntHyperparams()
    hp.validate()
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise BntError("x must be a 2-D matrix")
    model = BntModel(x.shape[1], hp, feature_names)
    _, bound = model.posterior_and_bound(x, y)
    model.training_log.append({"iteration": 0, "bound": bound, "n_leaves": 1})
    rng = np.random.default_rng(hp.seed)

    for iteration in range(1, hp.n_iter + 1):
        model.grow_step(x, y, rng)
        model.global_ascent(x, y)
        model.prune(x, y)
        _, bound = model.posterior_and_bound(x, y)
        model.training_log.append({
            "iteration": iteration,
            "bound": bound,
            "n_leaves": len(model.leaves()),
        })
    return model
