import math

import numpy as np
import pytest

from mgsearch.errors import ConfigError
from mgsearch.model import TrainConfig
from mgsearch.oracle import check_lambda_grad, finite_diff
from mgsearch.search import (
    ArchParams,
    SearchConfig,
    SearchState,
    compute_alpha,
    derive,
    epsilon_schedule,
    lambda_grad,
    mixture_lambda_grad,
    run_search,
    sample_path,
    search_epoch,
)
from mgsearch.space import EMPTY, IDENTITY, build_space, parse_meta_graph

SMALL = TrainConfig(hidden_dim=8)


class TestAlpha:
    def test_examples(self):
        np.testing.assert_allclose(compute_alpha([0, 0, 0]), [1 / 3] * 3, atol=1e-15)
        e = math.e
        np.testing.assert_allclose(compute_alpha([1.0, 0.0]), [e / (e + 1), 1 / (e + 1)], atol=1e-15)
        np.testing.assert_allclose(compute_alpha([3.0, 1.0, -2.0]), compute_alpha([103.0, 101.0, 98.0]), atol=1e-15)

    def test_extreme_values_stable(self):
        a = compute_alpha([1000.0, 0.0, -1000.0])
        assert np.all(np.isfinite(a)) and abs(a.sum() - 1) <= 1e-12

    def test_init_noise(self, academic):
        sp = build_space(academic[0], "A", 2)
        arch = ArchParams.init(sp, np.random.default_rng(0))
        for l in sp.links:
            assert np.all(np.abs(arch.lam[l]) <= 1e-3)
            assert abs(arch.alpha(l).sum() - 1) <= 1e-12


@pytest.fixture
def two_link_arch(academic):
    sp = build_space(academic[0], "A", 2)
    return sp, ArchParams.init(sp, np.random.default_rng(1))


class TestSampling:
    def test_eps_zero_is_argmax(self, two_link_arch):
        sp, arch = two_link_arch
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = sample_path(arch, 0.0, rng)
            assert all(p.index[l] == arch.argmax(l) for l in sp.links)
            assert not any(p.explored.values())
            assert all(p.coef[l] == arch.alpha(l)[p.index[l]] for l in sp.links)

    def test_uniform_when_eps_one(self):
        from mgsearch.space import SearchSpaceSpec

        sp = SearchSpaceSpec(1, "A", ((1, 0),), {(1, 0): ("r", "s")})
        arch = ArchParams(sp, {(1, 0): np.array([5.0, 0.0])})
        rng = np.random.default_rng(0)
        n = 100_000
        hits = sum(sample_path(arch, 1.0, rng).index[(1, 0)] for _ in range(n))
        assert abs(hits / n - 0.5) <= 0.01

    def test_half_eps_closed_form(self):
        from mgsearch.space import SearchSpaceSpec

        sp = SearchSpaceSpec(1, "A", ((1, 0),), {(1, 0): ("r", "s", "t", "u")})
        arch = ArchParams(sp, {(1, 0): np.array([0.0, 2.0, 1.0, 0.5])})
        rng = np.random.default_rng(1)
        n = 100_000
        top = sum(sample_path(arch, 0.5, rng).index[(1, 0)] == 1 for _ in range(n))
        assert abs(top / n - (1 - 0.5 + 0.5 / 4)) <= 0.01

    def test_bad_eps(self, two_link_arch):
        with pytest.raises(ValueError):
            sample_path(two_link_arch[1], 1.5, np.random.default_rng(0))


class TestLambdaGrad:
    def test_examples(self):
        np.testing.assert_allclose(lambda_grad(1.0, [0.5, 0.5], 0), [0.25, -0.25], atol=1e-15)
        np.testing.assert_array_equal(lambda_grad(0.0, [0.2, 0.3, 0.5], 2), [0.0, 0.0, 0.0])

    def test_matches_fd_of_selected_coefficient(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            lam = rng.normal(size=5)
            s = int(rng.integers(5))
            g = float(rng.normal())
            num = finite_diff(lambda x: g * compute_alpha(x)[s], lam, 1e-6)
            ana = lambda_grad(g, compute_alpha(lam), s)
            np.testing.assert_allclose(ana, num, rtol=1e-6, atol=1e-10)
            assert abs(ana.sum()) <= 1e-14

    def test_mixture_rule_matches_fd(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            lam = rng.normal(size=4)
            gs = rng.normal(size=4)
            num = finite_diff(lambda x: float(gs @ compute_alpha(x)), lam, 1e-6)
            np.testing.assert_allclose(mixture_lambda_grad(gs, compute_alpha(lam)), num, rtol=1e-6, atol=1e-10)

    def test_against_model_loss(self, academic):
        from mgsearch.model import HeteroModel

        g, f, task, _ = academic
        rng = np.random.default_rng(3)
        model = HeteroModel(g, f, task, 6, rng)
        sp = build_space(g, "A", 2)
        arch = ArchParams(sp, {l: rng.normal(size=len(sp.candidates[l])) for l in sp.links})
        index = [{(1, 0): sp.index((1, 0), "C-P"), (2, 0): sp.index((2, 0), "I"), (2, 1): 0}]
        for link in ((1, 0), (2, 0)):
            err, _, _ = check_lambda_grad(model, [arch], index, task.val, 0, link)
            assert err <= 1e-4


class TestDerive:
    def test_uniform_takes_first(self, two_link_arch):
        sp, _ = two_link_arch
        mg = derive(ArchParams(sp))
        assert mg.choices == tuple(sp.candidates[l][0] for l in sp.links)

    def test_shift_invariance_and_argmax_oracle(self, two_link_arch):
        sp, _ = two_link_arch
        rng = np.random.default_rng(0)
        for _ in range(20):
            lam = {l: rng.normal(size=len(sp.candidates[l])) for l in sp.links}
            mg = derive(ArchParams(sp, lam))
            shifted = derive(ArchParams(sp, {l: v + rng.normal() * 10 for l, v in lam.items()}))
            assert mg == shifted
            for l, c in zip(mg.links, mg.choices):
                best = max(range(len(lam[l])), key=lambda m: (lam[l][m], -m))
                assert c == sp.candidates[l][best]

    def test_forced(self, academic):
        g, f, task, planted = academic
        sp = build_space(g, "A", 2)
        target = planted[0]
        lam = {}
        for l in sp.links:
            v = np.zeros(len(sp.candidates[l]))
            v[sp.index(l, target.choice(l))] = 100.0
            lam[l] = v
        cfg = SearchConfig(epochs=3, K=2, n_restarts=1, train=SMALL)
        state = SearchState(g, f, task, cfg, np.random.default_rng(0), archs=[ArchParams(sp, lam)])
        for i in range(cfg.epochs):
            search_epoch(state, 0.0)
        assert derive(state.archs[0]) == target


def test_epsilon_schedule():
    assert [epsilon_schedule(0.5, i) for i in range(3)] == [0.5, 0.5 * 0.9, 0.5 * 0.9 ** 2]
    vals = [epsilon_schedule(0.3, i) for i in range(60)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-3
    assert epsilon_schedule(0.0, 10) == 0.0


class TestConfig:
    def test_validation(self):
        for bad in (dict(K=0), dict(epsilon0=1.0), dict(epsilon0=-0.1), dict(decay=0.0), dict(mode="gumbel"),
                    dict(epochs=0)):
            with pytest.raises(ConfigError):
                SearchConfig(**bad)

    def test_defaults(self):
        cfg = SearchConfig()
        assert (cfg.epochs, cfg.epsilon0, cfg.decay, cfg.K, cfg.n_restarts, cfg.mode) == (50, 0.0, 0.9, 4, 3, "sampled")


class TestEpochCounts:
    def _counts(self, data, mode, K=2, eps=0.0, seed=0):
        g, f, task, _ = data
        cfg = SearchConfig(epochs=1, K=K, mode=mode, n_restarts=1, train=SMALL)
        state = SearchState(g, f, task, cfg, np.random.default_rng(seed))
        rec = search_epoch(state, eps)
        return state, rec

    def test_sampled_count(self, academic):
        for seed in range(5):
            state, rec = self._counts(academic, "sampled", K=3, eps=1.0, seed=seed)
            n_edges = sum(1 for p in rec["paths"] for e in p["links"] if e["choice"] not in (IDENTITY, EMPTY))
            assert rec["spmm_calls"] == 2 * n_edges
            assert rec["adjoint_calls"] == 2 * n_edges

    def test_darts_count(self, douban):
        state, rec = self._counts(douban, "darts_reference")
        n_edge_cands = sum(
            sum(1 for c in a.spec.candidates[l] if c not in (IDENTITY, EMPTY))
            for a in state.archs for l in a.spec.links
        )
        assert rec["spmm_calls"] == 2 * n_edge_cands

    def test_rec_search_updates_both_dags(self, douban):
        state, rec = self._counts(douban, "sampled")
        assert len(state.archs) == 2
        assert [a.spec.target_type for a in state.archs] == ["U", "M"]
        assert len(rec["paths"]) == 2

    def test_single_level_uses_union(self, academic):
        g, f, task, _ = academic
        cfg = SearchConfig(epochs=1, K=2, mode="single_level", n_restarts=1, train=SMALL)
        state = SearchState(g, f, task, cfg, np.random.default_rng(0))
        tr, val = state.splits()
        assert set(tr) == set(task.train) | set(task.val)
        np.testing.assert_array_equal(tr, val)


class TestRunSearch:
    def test_deterministic(self, academic):
        g, f, task, _ = academic
        cfg = SearchConfig(epochs=5, K=2, epsilon0=0.3, n_restarts=2, seed=7, train=SMALL)
        a = run_search(g, f, task, cfg)
        b = run_search(g, f, task, cfg)
        assert a[0] == b[0]
        assert a[1] == b[1]

    def test_parallel_matches_serial(self, academic):
        g, f, task, _ = academic
        cfg = SearchConfig(epochs=3, K=2, n_restarts=2, seed=1, train=SMALL)
        assert run_search(g, f, task, cfg, workers=1)[1] == run_search(g, f, task, cfg, workers=2)[1]

    def test_eps_zero_argmax_and_last_path(self, academic):
        g, f, task, _ = academic
        cfg = SearchConfig(epochs=15, K=2, epsilon0=0.0, n_restarts=3, seed=2, train=SMALL)
        _, rep = run_search(g, f, task, cfg)
        for r in rep["restarts"]:
            assert all(sum(h["explored"]) == 0 for h in r["history"])
            assert all(h["epsilon"] == 0.0 for h in r["history"])
            assert r["history"][-1]["paths"] == r["derived"]

    def test_best_restart_selection(self, academic):
        g, f, task, _ = academic
        cfg = SearchConfig(epochs=4, K=2, epsilon0=0.5, n_restarts=3, seed=3, train=SMALL)
        mgs, rep = run_search(g, f, task, cfg)
        finals = [r["final_val_metric"] for r in rep["restarts"]]
        best = rep["best_restart"]
        assert finals[best] == max(finals) and best == finals.index(max(finals))
        assert [m.to_json() for m in mgs] == rep["restarts"][best]["derived"]
        eps = [h["epsilon"] for h in rep["restarts"][0]["history"]]
        assert eps == [0.5 * 0.9 ** i for i in range(4)]
        assert parse_meta_graph(rep["meta_graphs"][0]) == mgs[0]

    def test_report_fields(self, douban):
        g, f, task, _ = douban
        cfg = SearchConfig(epochs=2, K=2, n_restarts=1, train=SMALL)
        mgs, rep = run_search(g, f, task, cfg)
        assert [m.target_type for m in mgs] == ["U", "M"]
        h = rep["restarts"][0]["history"][0]
        for key in ("epoch", "train_loss", "val_loss", "val_metric", "epsilon", "spmm_calls"):
            assert key in h
        assert 0.0 <= h["val_metric"] <= 1.0
        assert len(rep["restarts"][0]["lambda"]) == 2
