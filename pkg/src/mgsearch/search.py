"""Single-path meta-graph search: softmax architecture weights, epsilon-greedy
sampling, alternating weight/architecture updates, and argmax derivation."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .evaluate import split_metric
from .hin import NodeClassData, PairSet
from .linalg import counter
from .model import Adam, HeteroModel, TrainConfig
from .space import MetaGraph, SearchSpaceSpec, build_space

log = logging.getLogger(__name__)

MODES = ("sampled", "darts_reference", "single_level")


def compute_alpha(lam):
    lam = np.asarray(lam, dtype=np.float64)
    z = np.exp(lam - lam.max())
    return z / z.sum()


class ArchParams:
    """Architecture weights for one DAG: a real vector per link."""

    def __init__(self, spec: SearchSpaceSpec, lam=None):
        self.spec = spec
        if lam is None:
            lam = {l: np.zeros(len(spec.candidates[l])) for l in spec.links}
        self.lam = {l: np.asarray(lam[l], dtype=np.float64) for l in spec.links}

    @classmethod
    def init(cls, spec, rng, noise=1e-3):
        return cls(spec, {l: rng.uniform(-noise, noise, len(spec.candidates[l])) for l in spec.links})

    def alpha(self, link):
        return compute_alpha(self.lam[link])

    def argmax(self, link):
        # np.argmax returns the first maximal index
        return int(np.argmax(self.lam[link]))


@dataclass
class SampledPath:
    spec: SearchSpaceSpec
    index: dict  # link -> selected candidate index
    coef: dict  # link -> softmax weight of the selected candidate
    explored: dict  # link -> True when picked uniformly at random

    def choice(self, link):
        return self.spec.candidates[link][self.index[link]]

    def branches(self):
        return {l: [(self.choice(l), self.coef[l])] for l in self.spec.links}

    def meta_graph(self):
        return MetaGraph(self.spec.K, self.spec.target_type, tuple(self.choice(l) for l in self.spec.links))


def sample_path(arch: ArchParams, eps, rng) -> SampledPath:
    """Per link: argmax with probability 1 - eps, else a uniform pick."""
    if not 0 <= eps <= 1:
        raise ValueError("epsilon must lie in [0, 1]")
    index, coef, explored = {}, {}, {}
    for l in arch.spec.links:
        a = arch.alpha(l)
        u = rng.random()
        r = int(rng.integers(len(a)))
        if u < eps:
            m, ex = r, True
        else:
            m, ex = int(np.argmax(a)), False
        index[l], coef[l], explored[l] = m, float(a[m]), ex
    return SampledPath(arch.spec, index, coef, explored)


def lambda_grad(g, alpha, selected):
    """dL/dlambda when only the selected weight carries gradient ``g``."""
    alpha = np.asarray(alpha, dtype=np.float64)
    out = -g * alpha[selected] * alpha
    out[selected] += g * alpha[selected]
    return out


def mixture_lambda_grad(gs, alpha):
    """dL/dlambda when every candidate carries a gradient (full softmax Jacobian)."""
    gs = np.asarray(gs, dtype=np.float64)
    return alpha * (gs - np.dot(alpha, gs))


def derive(arch: ArchParams) -> MetaGraph:
    spec = arch.spec
    return MetaGraph(spec.K, spec.target_type, tuple(spec.candidates[l][arch.argmax(l)] for l in spec.links))


def epsilon_schedule(eps0, epoch, decay=0.9):
    return eps0 * decay ** epoch


@dataclass
class SearchConfig:
    epochs: int = 50
    epsilon0: float = 0.0
    decay: float = 0.9
    K: int = 4
    n_restarts: int = 3
    mode: str = "sampled"
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError("K must be ≥ 1")
        if not 0 <= self.epsilon0 < 1:
            raise ConfigError("epsilon0 must lie in [0, 1)")
        if not 0 < self.decay <= 1:
            raise ConfigError("decay must lie in (0, 1]")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.epochs < 1 or self.n_restarts < 1:
            raise ConfigError("epochs and restarts must be ≥ 1")


class SearchState:
    """Model, architecture weights and optimizers of one search run."""

    def __init__(self, graph, features, task, config: SearchConfig, rng, specs=None, archs=None):
        self.config = config
        self.rng = rng
        tc = config.train
        self.model = HeteroModel(graph, features, task, tc.hidden_dim, rng)
        if specs is None:
            specs = [build_space(graph, t, config.K) for t in self.model.target_types]
        self.archs = archs if archs is not None else [ArchParams.init(s, rng) for s in specs]
        self.opt_w = Adam(tc.lr_omega, tc.weight_decay_omega)
        self.opt_l = [Adam(tc.lr_lambda) for _ in self.archs]
        self.epoch = 0

    def splits(self):
        task = self.model.task
        if self.config.mode == "single_level":
            if isinstance(task, NodeClassData):
                both = np.concatenate([task.train, task.val])
            else:
                both = PairSet.concat(task.train, task.val)
            return both, both
        return task.train, task.val


def _mixture_branches(arch):
    return {l: [(c, float(a)) for c, a in zip(arch.spec.candidates[l], arch.alpha(l))] for l in arch.spec.links}


def search_epoch(state: SearchState, eps):
    """One iteration: sample a path, update weights on the training loss, then
    architecture weights on the validation loss with the same path."""
    model, cfg = state.model, state.config
    tr_split, val_split = state.splits()
    c0 = counter.snapshot()
    paths = [sample_path(a, eps, state.rng) for a in state.archs]
    darts = cfg.mode == "darts_reference"
    branches = [_mixture_branches(a) if darts else p.branches() for a, p in zip(state.archs, paths)]

    trace = model.forward(branches, cfg.train.dropout, state.rng)
    train_loss, grads, _ = model.backward(trace, tr_split)
    model.update(state.opt_w, grads)

    trace = model.forward(branches)
    val_loss, _, bgrads = model.backward(trace, val_split, param_grads=False)
    for arch, path, bg, opt in zip(state.archs, paths, bgrads, state.opt_l):
        lg = {}
        for l in arch.spec.links:
            if darts:
                lg[l] = mixture_lambda_grad(bg[l], arch.alpha(l))
            else:
                lg[l] = lambda_grad(bg[l][0], arch.alpha(l), path.index[l])
        opt.step(arch.lam, lg)
    metric = split_metric(model, trace, state.model.task.val)
    c1 = counter.snapshot()
    state.epoch += 1
    return {
        "epoch": state.epoch - 1,
        "train_loss": train_loss,
        "val_loss": val_loss,
        "val_metric": metric,
        "epsilon": eps,
        "spmm_calls": c1[0] - c0[0],
        "adjoint_calls": c1[1] - c0[1],
        "paths": [p.meta_graph().to_json() for p in paths],
        "explored": [sum(p.explored.values()) for p in paths],
    }


def run_restart(graph, features, task, config: SearchConfig, seed_seq, restart=0):
    rng = np.random.default_rng(seed_seq)
    state = SearchState(graph, features, task, config, rng)
    history = []
    for i in range(config.epochs):
        rec = search_epoch(state, epsilon_schedule(config.epsilon0, i, config.decay))
        history.append(rec)
        log.debug("restart %d epoch %d val_metric %.4f", restart, i, rec["val_metric"])
    derived = [derive(a) for a in state.archs]
    return {
        "restart": restart,
        "history": history,
        "final_val_metric": history[-1]["val_metric"],
        "lambda": [
            [{"k": k, "i": i, "values": a.lam[(k, i)].tolist()} for k, i in a.spec.links] for a in state.archs
        ],
        "derived": [mg.to_json() for mg in derived],
    }


def worker_count(requested=None):
    if requested is not None:
        return max(1, requested)
    try:
        return max(1, int(os.environ.get("DIFFMG_THREADS", "1")))
    except ValueError:
        return 1


def run_search(graph, features, task, config: SearchConfig, workers=None):
    """Run ``n_restarts`` independent searches; return the derived meta graphs
    of the restart with the best final validation metric, and a report."""
    seqs = np.random.SeedSequence(config.seed).spawn(config.n_restarts)
    n_workers = min(worker_count(workers), config.n_restarts)
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            futs = [pool.submit(run_restart, graph, features, task, config, s, r) for r, s in enumerate(seqs)]
            runs = [f.result() for f in futs]
    else:
        runs = [run_restart(graph, features, task, config, s, r) for r, s in enumerate(seqs)]
    best = max(range(len(runs)), key=lambda r: (runs[r]["final_val_metric"], -r))
    meta_graphs = [MetaGraph.from_assignment(
        d["K"], d["target_type"], {(e["k"], e["i"]): e["choice"] for e in d["links"]}
    ) for d in runs[best]["derived"]]
    cfg = asdict(config)
    report = {
        "config": cfg,
        "task": task.kind,
        "best_restart": best,
        "restarts": runs,
        "meta_graphs": [mg.to_json() for mg in meta_graphs],
    }
    return meta_graphs, report
