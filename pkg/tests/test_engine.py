import math

import numpy as np
import pytest
from scipy import stats

from choicepa import engine
from choicepa.engine import (RunTrace, checkpoint_schedule, draw_targets, fast_class, init,
                             make_stream, run, sample_target_fast, sample_target_naive, step)
from choicepa.index import DegreeClassIndex
from choicepa.model import DRounding, MDistribution, ModelParams, SamplerMode
from choicepa.theory import attachment_class_pmf
from oracles import TOP_CLASS_12, enumerate_vertex_pmf


def params(**kw):
    base = dict(alpha=0.5, gamma=0.5, c_d=1.0, m_dist=MDistribution.deterministic(1), seed=3)
    base.update(kw)
    return ModelParams(**base)


def test_init_m1():
    s = init(params())
    assert list(s.degrees()) == [1, 1]
    idx = s.index
    assert (idx.total_weight, idx.max_degree, idx.count_at_max) == (2.0, 1, 2)
    assert (s.n, s.edges) == (1, 1)


def test_init_m3():
    s = init(params(m_dist=MDistribution.deterministic(3)))
    assert list(s.degrees()) == [3, 3]
    assert s.index.total_weight == pytest.approx(3.464102, abs=1e-6)


def test_init_reproducible_with_random_m():
    p = params(m_dist=MDistribution.finite({1: 0.4, 2: 0.3, 5: 0.3}), seed=11)
    a, b = init(p), init(p)
    assert np.array_equal(a.degrees(), b.degrees())
    assert a.index.total_weight == b.index.total_weight


def test_naive_single_vertex(rng):
    idx = DegreeClassIndex.from_degrees(0.5, [4])
    for d in (1, 2, 7):
        assert sample_target_naive(idx, d, rng) == 0
    with pytest.raises(ValueError):
        sample_target_naive(idx, 1.5, rng)


def test_fast_class_inversion_example():
    idx = DegreeClassIndex.from_degrees(0.5, [1, 2])
    w = idx.total_weight * 0.9 ** 0.5
    assert w == pytest.approx(2.290325, abs=1e-6)
    assert idx.find_class_by_weight(w) == 2
    assert fast_class(idx, 2, 0.9) == 2
    assert fast_class(idx, 2, 1e-300) == 1
    # boundary: U^(1/2) = 1/D puts w exactly at prefix(1)
    assert fast_class(idx, 2, (1 / idx.total_weight) ** 2 * (1 - 1e-12)) == 1


def test_fast_sampler_single_vertex(rng):
    idx = DegreeClassIndex.from_degrees(0.5, [2])
    assert all(sample_target_fast(idx, d, rng) == 0 for d in (1, 2.5, 100))


@pytest.mark.parametrize("naive", [True, False])
def test_worked_example_top_class_frequency(naive, rng):
    idx = DegreeClassIndex.from_degrees(0.5, [1, 2])
    t = draw_targets(idx, 2, 10**5, rng, naive=naive)
    assert abs((t == 1).mean() - TOP_CLASS_12) <= 0.004


@pytest.mark.parametrize("degrees,d", [([2, 2, 1], 2), ([3, 1, 1, 2, 3], 3), ([1, 1, 1], 2)])
@pytest.mark.parametrize("naive", [True, False])
def test_vertex_law_matches_enumeration(degrees, d, naive, rng):
    """Per-vertex law, including the fair tie-break among equal degrees."""
    idx = DegreeClassIndex.from_degrees(0.6, degrees)
    t = draw_targets(idx, d, 10**5, rng, naive=naive)
    obs = np.bincount(t, minlength=len(degrees))
    exp = np.array(enumerate_vertex_pmf(degrees, 0.6, d)) * len(t)
    assert stats.chisquare(obs, exp).pvalue > 1e-3


def test_fast_sampler_fractional_d(rng):
    idx = DegreeClassIndex.from_degrees(0.5, [1, 2, 2, 4])
    d = 2.7
    t = draw_targets(idx, d, 10**5, rng)
    ks, counts = np.unique(idx.deg[t], return_counts=True)
    pmf = attachment_class_pmf(idx, d)
    exp = np.array([pmf[int(k)] for k in ks]) * len(t)
    assert stats.chisquare(counts, exp).pvalue > 1e-3


def test_step_outcome():
    p = params(m_dist=MDistribution.deterministic(3))
    s = init(p)
    out = step(s)
    assert out.m_drawn == 3 and len(out.targets) == 3
    assert s.n == 2 and s.edges == 6
    assert s.index.degree(2) == 3
    assert int(s.degrees().sum()) == 2 * s.edges
    assert all(v in (0, 1) and k == 3 for v, k in out.targets)
    s.index.check()


def test_steps_keep_invariants():
    p = params(m_dist=MDistribution.finite({1: 0.5, 2: 0.3, 3: 0.2}), seed=9)
    s = init(p)
    for _ in range(300):
        out = step(s)
        assert len(out.targets) == out.m_drawn
        assert int(s.degrees().sum()) == 2 * s.edges
        assert out.max_degree == s.degrees().max()
    s.index.check()


def test_targets_chosen_against_frozen_state():
    # From G_1 = {2, 2} with a huge sample, each of the two edges of step 2
    # lands on v0 or v1 with probability 1/2 each, independently.  Updating
    # between edges would send the second edge to the first target's vertex.
    p = params(m_dist=MDistribution.deterministic(2), c_d=1e6)
    same = 0
    trials = 4000
    for r in range(trials):
        s = init(p, make_stream(1, r))
        out = step(s)
        same += out.targets[0][0] == out.targets[1][0]
    assert abs(same / trials - 0.5) <= 4 * math.sqrt(0.25 / trials)


def test_within_step_order_does_not_change_law(rng):
    # draws against one frozen state are exchangeable: first and last draws
    # of each block follow the same class law
    idx = DegreeClassIndex.from_degrees(0.5, [1, 1, 2, 3, 3])
    firsts, lasts = [], []
    for _ in range(20000):
        t = draw_targets(idx, 2, 5, rng)
        firsts.append(idx.deg[t[0]])
        lasts.append(idx.deg[t[-1]])
    table = np.array([np.bincount(firsts, minlength=4)[1:], np.bincount(lasts, minlength=4)[1:]])
    assert stats.chi2_contingency(table).pvalue > 1e-3


def test_run_deterministic_small():
    p = params(horizon=10)
    a, b = run(p), run(p)
    assert a.equals(b)
    assert a.n[0] == 1 and a.n[-1] == 10
    assert np.array_equal(a.S, 2 * a.E)


def test_run_streams_differ_by_replicate():
    p = params(horizon=2000)
    a = run(p, rng=make_stream(5, 0), run_index=0)
    b = run(p, rng=make_stream(5, 1), run_index=1)
    assert not a.equals(b)


@pytest.mark.parametrize("mode,sampler", [(r, s) for r in DRounding for s in SamplerMode
                                          if not (r is DRounding.REAL and s is SamplerMode.NAIVE)])
def test_run_modes(mode, sampler):
    p = params(horizon=3000, d_rounding=mode, sampler_mode=sampler,
               m_dist=MDistribution.finite({1: 0.6, 3: 0.4}))
    t = run(p)
    assert not t.partial
    assert np.array_equal(t.S, 2 * t.E)
    assert t.N[-1].sum() <= t.n[-1] + 1
    assert np.all(np.diff(t.M) >= 0)


def test_run_failure_returns_partial_trace():
    # beta close to 1: a draw beyond the edge-count limit comes quickly
    p = params(m_dist=MDistribution.zeta(1.02, allow_infinite_variance=True), horizon=10**6)
    t = run(p)
    assert t.partial and t.error
    assert len(t) < len(checkpoint_schedule(p.horizon))


def test_checkpoint_schedule():
    ck = checkpoint_schedule(10**6)
    assert ck[0] == 1 and ck[-1] == 10**6
    assert np.all(np.diff(ck) > 0)
    assert 100 < len(ck) < 200
    assert list(checkpoint_schedule(2)) == [1, 2]
    with pytest.raises(ValueError):
        checkpoint_schedule(10, 1.0)


def test_trace_csv_roundtrip():
    t = run(params(horizon=5000, m_dist=MDistribution.finite({1: 0.5, 2: 0.5})), k_list=(1, 2, 5))
    text = t.to_csv(["hello", "config {}"])
    assert text.startswith("# hello\n# config {}\nn,M,L,D,E,S,N_1,N_2,N_5\n")
    back = RunTrace.from_csv(text)
    assert back.equals(t)
    assert back.to_csv(["hello", "config {}"]) == text


def test_summary_json():
    t = run(params(horizon=100))
    doc = engine.summary(t, {"alpha": 0.5})
    assert '"alpha": 0.5' in doc and '"n": 100' in doc


def test_unit_edges_total_weight_loose_band():
    t = run(params(horizon=10**4))
    assert 0.9 <= t.D[-1] / t.n[-1] <= 1.1


def test_max_degree_step_bound():
    p = params(m_dist=MDistribution.finite({1: 0.5, 4: 0.5}), seed=4)
    s = init(p)
    M = s.index.max_degree
    for _ in range(2000):
        out = step(s)
        assert M <= out.max_degree <= max(M + out.m_drawn, out.m_drawn)
        M = out.max_degree


def test_unit_edges_step():
    s = init(params())
    before = s.degrees()
    step(s)
    after = s.degrees()
    assert after[-1] == 1 and len(after) == len(before) + 1
    assert int((after[:-1] - before).sum()) == 1 and s.edges == s.n
