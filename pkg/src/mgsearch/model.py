"""Heterogeneous message passing model with hand-derived reverse-mode gradients.

The DAG engine evaluates, for each link (k, i), a list of *branches*
``(choice, coefficient)``. A searched or derived meta graph has exactly one
branch per link; the DARTS-style mixture and the temperature relaxation
used by the oracles pass every candidate as a branch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SchemaError, StaleTraceError
from .hin import FeatureSet, HinGraph, NodeClassData, RecData
from .linalg import log_row_softmax, log_sigmoid, relu, relu_grad, row_softmax, sigmoid, spmm, spmm_adjoint
from .space import EMPTY, IDENTITY, MetaGraph


@dataclass
class TrainConfig:
    hidden_dim: int = 64
    lr_omega: float = 0.005
    weight_decay_omega: float = 0.001
    lr_lambda: float = 3e-4
    epochs: int = 100
    patience: int = 10
    seed: int = 0
    dropout: float = 0.5

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ConfigError("hidden dimension must be ≥ 1")
        if self.lr_omega <= 0 or self.lr_lambda <= 0 or self.weight_decay_omega < 0:
            raise ConfigError("learning rates must be positive and weight decay nonnegative")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")


class Adam:
    """Adam with L2 weight decay folded into the gradient."""

    def __init__(self, lr, weight_decay=0.0, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            p = params[k]
            if self.weight_decay:
                g = g + self.weight_decay * p
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            params[k] = p - self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


def single_path(mg: MetaGraph, coeffs=None):
    """Branches for a concrete meta graph; coefficients default to 1."""
    coeffs = coeffs or {}
    return {l: [(c, coeffs.get(l, 1.0))] for l, c in zip(mg.links, mg.choices)}


@dataclass
class DagTrace:
    K: int
    branches: dict
    H: list
    steps: dict
    Z: np.ndarray


@dataclass
class Trace:
    version: int
    pre: dict  # node type -> pre-activation of the projection
    post: dict  # node type -> relu output
    H0: np.ndarray
    mask: np.ndarray | None
    dags: list = field(default_factory=list)


def _glorot(rng, fan_in, fan_out):
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


class HeteroModel:
    """Type-specific projection, shared hidden weight, DAG propagation and a task head."""

    def __init__(self, graph: HinGraph, features: FeatureSet, task, hidden_dim=64, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.graph = graph
        self.features = features
        self.task = task
        self.hidden_dim = d = hidden_dim
        self.params = {}
        for t, (_, x) in features.by_type.items():
            self.params[f"W:{t}"] = _glorot(rng, x.shape[1], d)
            self.params[f"b:{t}"] = np.zeros(d)
        self.params["theta"] = _glorot(rng, d, d)
        if isinstance(task, NodeClassData):
            self.params["W_o"] = _glorot(rng, d, task.n_classes)
        self.version = 0

    @property
    def n_dags(self):
        return 2 if isinstance(self.task, RecData) else 1

    @property
    def target_types(self):
        if isinstance(self.task, RecData):
            return [self.task.source_type, self.task.target_type]
        return [self.task.target_type]

    def update(self, opt: Adam, grads):
        opt.step(self.params, grads)
        self.version += 1

    # forward

    def project(self, dropout=0.0, rng=None):
        """H0 = relu(X_t W_t + b_t) theta, assembled in global node order."""
        n, d = self.graph.n_nodes, self.hidden_dim
        theta = self.params["theta"]
        h0 = np.zeros((n, d))
        pre, post = {}, {}
        for t, (ids, x) in self.features.by_type.items():
            if f"W:{t}" not in self.params:
                raise SchemaError(f"no projection for node type {t!r}")
            u = x @ self.params[f"W:{t}"] + self.params[f"b:{t}"]
            p = relu(u)
            pre[t], post[t] = u, p
            h0[ids] = p @ theta
        mask = None
        if dropout > 0:
            if rng is None:
                raise ValueError("dropout needs an rng")
            mask = (rng.random(h0.shape) >= dropout) / (1.0 - dropout)
            h0 = h0 * mask
        return Trace(self.version, pre, post, h0, mask)

    def propagate(self, h0, branches, K) -> DagTrace:
        H = [h0]
        steps = {}
        for k in range(1, K + 1):
            hk = None
            for i in range(k):
                outs = []
                for choice, coef in branches[(k, i)]:
                    s = self._step(choice, H[i])
                    outs.append(s)
                    if s is not None:
                        hk = coef * s if hk is None else hk + coef * s
                steps[(k, i)] = outs
            H.append(hk if hk is not None else np.zeros_like(h0))
        return DagTrace(K, branches, H, steps, relu(H[K]))

    def _step(self, choice, h):
        if choice == EMPTY:
            return None
        if choice == IDENTITY:
            return h
        try:
            a = self.graph.adjacency[choice]
        except KeyError:
            raise SchemaError(f"edge type {choice!r} is not in the graph") from None
        return spmm(a, h)

    def forward(self, paths, dropout=0.0, rng=None) -> Trace:
        """``paths`` holds one branch map per DAG, each with its K."""
        if len(paths) != self.n_dags:
            raise ConfigError(f"task needs {self.n_dags} DAG(s), got {len(paths)}")
        trace = self.project(dropout, rng)
        for branches in paths:
            K = max(k for k, _ in branches)
            trace.dags.append(self.propagate(trace.H0, branches, K))
        return trace

    # losses

    def _head(self, trace, nodes):
        if not isinstance(self.task, NodeClassData):
            raise TypeError("node classification head on a recommendation task")
        nodes = np.asarray(nodes)
        if not len(nodes):
            raise ValueError("empty node set")
        return trace.dags[0].Z[nodes] @ self.params["W_o"]

    def loss_nodeclass(self, trace, nodes):
        logits = self._head(trace, nodes)
        y = self.task.labels[np.asarray(nodes)]
        return float(-log_row_softmax(logits)[np.arange(len(y)), y].sum())

    def scores(self, trace, pairs):
        zs, zd = trace.dags[0].Z, trace.dags[1].Z
        return np.einsum("ij,ij->i", zs[pairs.src], zd[pairs.dst])

    def loss_rec(self, trace, pairs):
        if not len(pairs):
            raise ValueError("empty pair set")
        s = self.scores(trace, pairs)
        sign = np.where(pairs.label == 1, 1.0, -1.0)
        return float(-log_sigmoid(sign * s).sum())

    def loss(self, trace, split):
        if isinstance(self.task, NodeClassData):
            return self.loss_nodeclass(trace, split)
        return self.loss_rec(trace, split)

    def _loss_grad_z(self, trace, split):
        """Loss value, dL/dZ per DAG, and head gradients."""
        if isinstance(self.task, NodeClassData):
            nodes = np.asarray(split)
            logits = self._head(trace, nodes)
            y = self.task.labels[nodes]
            prob = row_softmax(logits)
            loss = float(-log_row_softmax(logits)[np.arange(len(y)), y].sum())
            dlog = prob
            dlog[np.arange(len(y)), y] -= 1.0
            z = trace.dags[0].Z
            dz = np.zeros_like(z)
            dz[nodes] = dlog @ self.params["W_o"].T
            return loss, [dz], {"W_o": z[nodes].T @ dlog}
        pairs = split
        if not len(pairs):
            raise ValueError("empty pair set")
        zs, zd = trace.dags[0].Z, trace.dags[1].Z
        s = np.einsum("ij,ij->i", zs[pairs.src], zd[pairs.dst])
        sign = np.where(pairs.label == 1, 1.0, -1.0)
        loss = float(-log_sigmoid(sign * s).sum())
        ds = -sign * sigmoid(-sign * s)
        dzs = np.zeros_like(zs)
        dzd = np.zeros_like(zd)
        np.add.at(dzs, pairs.src, ds[:, None] * zd[pairs.dst])
        np.add.at(dzd, pairs.dst, ds[:, None] * zs[pairs.src])
        return loss, [dzs, dzd], {}

    # backward

    def backward(self, trace: Trace, split, param_grads=True):
        """Return ``(loss, grads, branch_grads)``.

        ``branch_grads[j][(k, i)]`` lists dL/d(coefficient) for every branch
        of link (k, i) in DAG ``j``: the inner product of dL/dH^(k) with that
        branch's step output.
        """
        if trace.version != self.version:
            raise StaleTraceError("trace was computed before the last parameter update")
        loss, dzs, grads = self._loss_grad_z(trace, split)
        dh0 = np.zeros_like(trace.H0)
        branch_grads = []
        for dag, dz in zip(trace.dags, dzs):
            bg, dh = self._dag_backward(dag, dz)
            branch_grads.append(bg)
            dh0 += dh
        if param_grads:
            grads.update(self._project_backward(trace, dh0))
        else:
            grads = {}
        return loss, grads, branch_grads

    def _dag_backward(self, dag: DagTrace, dz):
        dH = [None] * (dag.K + 1)
        dH[dag.K] = relu_grad(dag.H[dag.K], dz)
        bg = {}
        for k in range(dag.K, 0, -1):
            g = dH[k]
            for i in range(k - 1, -1, -1):
                link = (k, i)
                gl = []
                for (choice, coef), s in zip(dag.branches[link], dag.steps[link]):
                    if s is None or g is None:
                        gl.append(0.0)
                        continue
                    gl.append(float(np.vdot(g, s)))
                    if choice == IDENTITY:
                        contrib = coef * g
                    else:
                        contrib = spmm_adjoint(self.graph.adjacency[choice], coef * g)
                    dH[i] = contrib if dH[i] is None else dH[i] + contrib
                bg[link] = gl
        dh0 = dH[0] if dH[0] is not None else np.zeros_like(dag.H[0])
        return bg, dh0

    def _project_backward(self, trace, dh0):
        if trace.mask is not None:
            dh0 = dh0 * trace.mask
        theta = self.params["theta"]
        grads = {"theta": np.zeros_like(theta)}
        for t, (ids, x) in self.features.by_type.items():
            g = dh0[ids]
            grads["theta"] += trace.post[t].T @ g
            du = relu_grad(trace.pre[t], g @ theta.T)
            grads[f"W:{t}"] = x.T @ du
            grads[f"b:{t}"] = du.sum(axis=0)
        return grads
