"""Independent checks: exhaustive meta-graph search, central differences, and the
temperature-softmax relaxation of the hard argmax selection."""

from __future__ import annotations

import itertools
import math
from dataclasses import replace

import numpy as np

from .errors import CardinalityError
from .evaluate import train_eval
from .model import HeteroModel, TrainConfig
from .search import ArchParams, _mixture_branches, compute_alpha, lambda_grad
from .space import cardinality, enumerate_space


def finite_diff(fn, x, h=1e-6):
    """Central-difference gradient of scalar ``fn`` at ``x``."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + h
        up = fn(x)
        flat[j] = orig - h
        down = fn(x)
        flat[j] = orig
        if not (math.isfinite(up) and math.isfinite(down)):
            raise FloatingPointError(f"non-finite function value at coordinate {j}")
        gflat[j] = (up - down) / (2 * h)
    return grad


def rel_error(a, b, floor=1e-12):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def brute_force_search(specs, graph, features, task, config: TrainConfig, cap, epochs=30):
    """Train every meta graph (or tuple, one per DAG) of the space.

    Returns ``[(meta_graphs, val_metric), ...]`` sorted by descending metric;
    ties keep enumeration order.
    """
    total = math.prod(cardinality(s) for s in specs)
    if total > cap:
        raise CardinalityError(total, cap)
    cfg = replace(config, epochs=epochs)
    results = []
    for combo in itertools.product(*(list(enumerate_space(s)) for s in specs)):
        rep = train_eval(list(combo), graph, features, task, cfg)
        results.append((list(combo), rep.best_val_metric))
    order = sorted(range(len(results)), key=lambda j: (-results[j][1], j))
    return [results[j] for j in order]


def rank_of(ranking, meta_graphs):
    """Fraction of the ranking that scores strictly better than ``meta_graphs``."""
    metric = next(m for mgs, m in ranking if mgs == list(meta_graphs))
    better = sum(1 for _, m in ranking if m > metric)
    return better / len(ranking), metric


def darts_reference_forward(model: HeteroModel, archs, dropout=0.0, rng=None):
    """Forward pass mixing every candidate of every link with its softmax weight."""
    return model.forward([_mixture_branches(a) for a in archs], dropout, rng)


def hard_branches(arch: ArchParams):
    """Argmax selection, each selected step weighted by its softmax weight."""
    out = {}
    for l in arch.spec.links:
        a = arch.alpha(l)
        m = int(np.argmax(a))
        out[l] = [(arch.spec.candidates[l][m], float(a[m]))]
    return out


def _temperature_softmax(alpha, t):
    z = alpha / t
    z = np.exp(z - z.max())
    return z / z.sum()


def prop1_numeric_check(model: HeteroModel, archs, dag, link, split, t_sequence=(1.0, 0.1, 0.01, 0.001),
                        shrink_tol=1e-3, match_tol=1e-3, atol=1e-12):
    """Relax the argmax at one link to ``alpha^m * h(m; t)`` and track dL/dalpha as t shrinks.

    Checks that gradients of non-selected weights vanish and the selected
    weight's gradient approaches the hard-selection gradient.
    """
    t_sequence = [float(t) for t in t_sequence]
    if any(t <= 0 for t in t_sequence) or any(b >= a for a, b in zip(t_sequence, t_sequence[1:])):
        raise ValueError("t_sequence must be strictly decreasing and positive")
    arch = archs[dag]
    alpha = arch.alpha(link)
    top = np.sort(alpha)[::-1]
    if len(alpha) > 1 and top[0] == top[1]:
        raise ValueError(f"argmax tie at link {link}; the limit is ill-defined")
    m_star = int(np.argmax(alpha))
    cands = arch.spec.candidates[link]
    base = [hard_branches(a) for a in archs]

    trace = model.forward(base)
    _, _, bg = model.backward(trace, split, param_grads=False)
    hard = bg[dag][link][0]

    per_t = []
    for t in t_sequence:
        h = _temperature_softmax(alpha, t)
        paths = [dict(b) for b in base]
        paths[dag][link] = [(c, float(a * hm)) for c, a, hm in zip(cands, alpha, h)]
        trace = model.forward(paths)
        _, _, bg = model.backward(trace, split, param_grads=False)
        G = np.array(bg[dag][link])
        # d(alpha^q h_q)/d alpha^m = delta_qm h_q + alpha^q h_q (delta_qm - h_m) / t
        jac = np.diag(h) + (alpha * h)[:, None] * (np.eye(len(h)) - h[None, :]) / t
        per_t.append((t, jac.T @ G))

    first, last = per_t[0][1], per_t[-1][1]
    others = [m for m in range(len(alpha)) if m != m_star]
    shrink_ok = all(abs(last[m]) <= max(shrink_tol * abs(first[m]), atol) for m in others)
    match_err = abs(last[m_star] - hard) / max(abs(hard), atol)
    match_ok = match_err <= match_tol or abs(last[m_star] - hard) <= atol
    mags = np.array([[abs(g[m]) for m in others] for _, g in per_t]) if others else np.zeros((len(per_t), 0))
    monotone = bool(np.all(np.diff(mags[-2:], axis=0) <= atol)) if len(per_t) > 1 else True
    return {
        "link": list(link),
        "m_star": m_star,
        "alpha": alpha.tolist(),
        "hard_grad": hard,
        "grads": [{"t": t, "d_alpha": g.tolist()} for t, g in per_t],
        "shrink_ok": shrink_ok,
        "match_rel_err": float(match_err),
        "match_ok": bool(match_ok),
        "monotone_tail": monotone,
        "passed": bool(shrink_ok and match_ok),
    }


# gradient-check suite used by the CLI and the acceptance tests

def _loss_of(model, paths, split):
    return model.loss(model.forward(paths), split)


def check_param_grads(model, paths, split, h=1e-6, max_entries=None, rng=None):
    """Relative error of analytic vs central-difference gradients per tensor."""
    trace = model.forward(paths)
    _, grads, _ = model.backward(trace, split)
    out = {}
    for name, p in model.params.items():
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort((rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False))
        num = np.zeros(len(idx))
        for j, e in enumerate(idx):
            orig = flat[e]
            flat[e] = orig + h
            up = _loss_of(model, paths, split)
            flat[e] = orig - h
            down = _loss_of(model, paths, split)
            flat[e] = orig
            num[j] = (up - down) / (2 * h)
        out[name] = rel_error(grads[name].reshape(-1)[idx], num)
    return out


def check_coef_grads(model, paths, split, h=1e-6):
    """Relative error of dL/d(coefficient) for every single-branch link."""
    trace = model.forward(paths)
    _, _, bg = model.backward(trace, split, param_grads=False)
    ana, num = [], []
    for j, path in enumerate(paths):
        for link, branches in path.items():
            (choice, c), = branches
            def f(x, j=j, link=link, choice=choice):
                p = [dict(q) for q in paths]
                p[j][link] = [(choice, float(x[0]))]
                return _loss_of(model, p, split)
            ana.append(bg[j][link][0])
            num.append(finite_diff(f, [c], h)[0])
    return rel_error(ana, num), ana, num


def check_lambda_grad(model, archs, paths_index, split, dag, link, h=1e-6):
    """lambda_grad against central differences of the loss with the selection frozen."""
    arch = archs[dag]
    sel = paths_index[dag][link]

    def branches_for(lam_vec):
        paths = []
        for j, a in enumerate(archs):
            p = {}
            for l in a.spec.links:
                al = compute_alpha(lam_vec) if (j == dag and l == link) else a.alpha(l)
                m = paths_index[j][l]
                p[l] = [(a.spec.candidates[l][m], float(al[m]))]
            paths.append(p)
        return paths

    lam = arch.lam[link]
    trace = model.forward(branches_for(lam))
    _, _, bg = model.backward(trace, split, param_grads=False)
    ana = lambda_grad(bg[dag][link][0], compute_alpha(lam), sel)
    num = finite_diff(lambda x: _loss_of(model, branches_for(x), split), lam, h)
    return rel_error(ana, num), ana, num


def separated_lambda(rng, n, min_gap=0.05, scale=1.0):
    """Random lambda whose top two softmax weights differ by at least ``min_gap``.

    The relaxed gradients converge at rate exp(-gap / t), so near-ties would
    need a far smaller final temperature than the checks use.
    """
    if n == 1:
        return rng.normal(0, scale, 1)
    while True:
        lam = rng.normal(0, scale, n)
        top = np.sort(compute_alpha(lam))[::-1]
        if top[0] - top[1] >= min_gap:
            return lam


def gradcheck_suite(graph, features, task, K=2, hidden_dim=6, n_states=3, seed=0, max_entries=40,
                    tol=1e-4, t_sequence=(1.0, 0.1, 0.01, 0.001)):
    """Run every gradient check on random model states. Returns a list of result dicts."""
    from .space import build_space

    rng = np.random.default_rng(seed)
    results = []
    for s in range(n_states):
        model = HeteroModel(graph, features, task, hidden_dim, rng)
        specs = [build_space(graph, t, K) for t in model.target_types]
        archs = [ArchParams(sp, {l: separated_lambda(rng, len(sp.candidates[l])) for l in sp.links}) for sp in specs]
        index = [{l: int(rng.integers(len(sp.candidates[l]))) for l in sp.links} for sp in specs]
        paths = [{l: [(sp.candidates[l][ix[l]], float(a.alpha(l)[ix[l]]))] for l in sp.links}
                 for sp, a, ix in zip(specs, archs, index)]
        split = task.train
        for name, err in check_param_grads(model, paths, split, max_entries=max_entries, rng=rng).items():
            results.append({"state": s, "check": f"grad:{name}", "error": err, "tol": tol, "ok": err <= tol})
        err, _, _ = check_coef_grads(model, paths, split)
        results.append({"state": s, "check": "grad:coefficients", "error": err, "tol": tol, "ok": err <= tol})
        for j, sp in enumerate(specs):
            # single-candidate links have an identically zero lambda gradient
            for link in (l for l in sp.links if len(sp.candidates[l]) > 1):
                tag = f"dag{j}({link[0]},{link[1]})"
                err, _, _ = check_lambda_grad(model, archs, index, split, j, link)
                results.append({"state": s, "check": f"lambda_grad:{tag}", "error": err, "tol": tol,
                                "ok": err <= tol})
                rep = prop1_numeric_check(model, archs, j, link, split, t_sequence)
                results.append({"state": s, "check": f"prop1:{tag}", "error": rep["match_rel_err"],
                                "tol": 1e-3, "ok": rep["passed"]})
    return results
