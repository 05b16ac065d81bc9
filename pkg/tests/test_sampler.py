import math

import numpy as np
import pytest
from scipy import stats

from groupnoise import groups as G
from groupnoise import measures as M
from groupnoise import sampler as S
from groupnoise import wreath as W
from oracles import free_group_mean_length

ZZ = G.Lattice(1)
DINF = G.Dihedral()
F2 = G.FreeGroup(2)
LAMP = G.Lamplighter()
Z5 = G.FiniteGroup.cyclic(5)

MEASURES = {
    "Z": M.simple_measure(ZZ),
    "Z^2 lazy": M.lazy_measure(G.Lattice(2)),
    "D_inf": M.simple_measure(DINF),
    "D_inf lazy": M.lazy_measure(DINF),
    "F2": M.simple_measure(F2),
    "lamplighter": W.sws_measure(),
    "Z/5 lazy": M.lazy_measure(Z5),
    "S3": M.simple_measure(G.symmetric_group_3()),
    "D_inf x Z/5": M.simple_measure(G.DirectProduct(DINF, Z5)),
    "F2 weighted": M.SparseMeasure(F2, {(1,): 0.5, (-1,): 0.1, (2,): 0.25, (-2,): 0.15}),
}


def test_sample_pair_basic():
    mu = MEASURES["F2"]
    s0 = S.sample_pair(mu, 0.0, 20, seed=3, replicate=7)
    assert not s0.mask.any() and s0.x == s0.y
    s1 = S.sample_pair(mu, 1.0, 20, seed=3, replicate=7)
    assert s1.mask.all() and s1.y == F2.product(s1.refreshed)
    s = S.sample_pair(mu, 0.4, 30, seed=5, replicate=300)
    assert s.x == F2.product(s.increments)
    assert s.y == F2.product(s.y_increments)
    for a, m, b in zip(s.increments, s.mask, s.y_increments):
        if not m:
            assert a == b
    # same seed and replicate give the same sample
    assert S.sample_pair(mu, 0.4, 30, seed=5, replicate=300).x == s.x


def test_mask_popcount_is_binomial():
    table = S.AtomTable(MEASURES["Z"])
    n, rho, reps = 100, 0.3, 100_000
    counts = np.concatenate(S.map_blocks(
        lambda rng, rows: (S.draw_block(table, rng, n, rows)[1] < rho).sum(axis=1), reps, 1))
    se = math.sqrt(n * rho * (1 - rho) / reps)
    assert abs(counts.mean() - n * rho) < 3 * se


@pytest.mark.parametrize("name", sorted(MEASURES))
def test_folds_match_generic_products(name):
    mu = MEASURES[name]
    fast = S.fold_for(mu)
    slow = S.Fold(mu.group, fast.elems)
    rng = np.random.default_rng(0)
    for n in (0, 1, 7, 40):
        idx = rng.integers(0, len(fast.elems), size=(50, n))
        fx = fast.fold(idx)
        sx = slow.fold(idx)
        assert fast.elements(fx) == sx
        perm = rng.permutation(50)
        fy = fast.fold(idx[perm])
        assert np.array_equal(fast.dist(fx, fy), slow.dist(sx, [sx[i] for i in perm]))
        assert np.array_equal(fast.length(fx), slow.length(sx))


@pytest.mark.parametrize("name", ["D_inf lazy", "F2 weighted", "lamplighter", "Z/5 lazy", "Z"])
def test_pair_law_chi_square(name):
    mu = MEASURES[name]
    n, rho, reps = 3, 0.4, 100_000
    exact = M.nth_convolution(M.noise_step_measure(mu, rho), n).to_sparse()
    pairs = S.endpoint_samples(mu, rho, n, reps, seed=11)
    counts = {}
    for p in pairs:
        counts[p] = counts.get(p, 0) + 1
    assert set(counts) <= set(exact.atoms)
    keys = list(exact.atoms)
    obs = np.array([counts.get(k, 0) for k in keys], dtype=float)
    exp = np.array([exact.mass(k) * reps for k in keys])
    # pool rare cells so every expected count is at least 5
    order = np.argsort(exp)
    small = exp[order] < 5
    o = np.append(obs[order][~small], obs[order][small].sum())
    e = np.append(exp[order][~small], exp[order][small].sum())
    if e[-1] == 0:
        o, e = o[:-1], e[:-1]
    assert stats.chisquare(o, e).pvalue > 1e-3
    # endpoint marginal against the exact walk law
    mu_n = M.nth_convolution(mu, n).to_sparse()
    xs = {}
    for x, _ in pairs:
        xs[x] = xs.get(x, 0) + 1
    ks = [k for k in mu_n.atoms if mu_n.mass(k) * reps >= 5]
    o = np.array([xs.get(k, 0) for k in ks] + [reps - sum(xs.get(k, 0) for k in ks)], dtype=float)
    e = np.array([mu_n.mass(k) * reps for k in ks] + [reps * (1 - sum(mu_n.mass(k) for k in ks))])
    if e[-1] < 1e-9:
        o, e = o[:-1], e[:-1]
    assert stats.chisquare(o, e).pvalue > 1e-3


@pytest.mark.parametrize("name", ["D_inf lazy", "F2", "lamplighter"])
def test_pair_swap_symmetry(name):
    pairs = S.endpoint_samples(MEASURES[name], 0.3, 3, 100_000, seed=2)
    counts = {}
    for p in pairs:
        counts[p] = counts.get(p, 0) + 1
    chi, df = 0.0, 0
    for (x, y), c in counts.items():
        if x == y or (y, x) in counts and repr((y, x)) < repr((x, y)):
            continue
        d = counts.get((y, x), 0)
        if c + d >= 10:
            chi += (c - d) ** 2 / (c + d)
            df += 1
    assert df > 0 and stats.chi2.sf(chi, df) > 1e-3


def test_determinism_across_threads(monkeypatch):
    mu = MEASURES["F2"]
    out = []
    for t in ("1", "3"):
        monkeypatch.setenv("GROUPNOISE_THREADS", t)
        out.append(S.pair_statistics(mu, 0.3, 50, 1000, 9,
                                     lambda f, x, y, x2: f.dist(x, y)))
    assert np.array_equal(out[0], out[1])
    # prefixes of a longer run are the same replicates
    longer = S.pair_statistics(mu, 0.3, 50, 1500, 9, lambda f, x, y, x2: f.dist(x, y))
    assert np.array_equal(longer[:1000], out[0])


def test_threads_env_validation(monkeypatch):
    monkeypatch.setenv("GROUPNOISE_THREADS", "many")
    with pytest.raises(S.SamplerError):
        S.threads()


def test_mean_distance_examples():
    mu = MEASURES["Z"]
    assert S.mean_distance(mu, 0.0, 500, 200, 1).mean == 0.0
    a = S.mean_distance(mu, "independent", 1000, 20_000, 1)
    b = S.mean_distance(mu, "independent", 4000, 20_000, 2)
    ra, rb = a.mean / math.sqrt(1000), b.mean / math.sqrt(4000)
    se = math.hypot(a.stderr / math.sqrt(1000), b.stderr / math.sqrt(4000))
    assert abs(ra - rb) < 3 * se
    # E|X - X'| for X - X' ~ N(0, 2n) is sqrt(4n / pi)
    assert abs(ra - math.sqrt(4 / math.pi)) < 0.02
    with pytest.raises(S.SamplerError):
        S.mean_distance(mu, 0.3, 10, 50, 1)


def test_distance_ratio_examples():
    assert S.distance_ns_ratio(MEASURES["F2"], 0.0, 100, 200, 1).mean == 0.0
    r = S.distance_ns_ratio(MEASURES["Z"], 0.25, 2000, 20_000, 4)
    assert abs(r.mean - 0.5) < 0.05


def test_ratio_estimate_error_matches_replication():
    # delta-method error against the spread of independent repetitions
    mu = MEASURES["Z"]
    ests = [S.distance_ns_ratio(mu, 0.25, 200, 2000, seed) for seed in range(30)]
    spread = np.std([e.mean for e in ests], ddof=1)
    mean_se = np.mean([e.stderr for e in ests])
    assert 0.6 < spread / mean_se < 1.6


def test_tv_event_examples():
    mu = MEASURES["D_inf lazy"]
    assert S.tv_event_lower_bound(mu, 0.3, 20, "always", 500, 1).mean == 0.0
    n, reps = 6, 50_000
    res = S.tv_event_lower_bound(mu, 0.0, n, "equal", reps, 1)
    mu_n = M.nth_convolution(mu, n).to_sparse()
    collide = sum(m * m for _, m in mu_n.items())
    assert abs(res.extra["difference"] - (1 - collide)) < 4 * res.extra["difference_se"]
    assert res.mean <= 2 * (1 - collide) + 1e-12
    pred = S.tv_event_lower_bound(mu, 0.0, n, lambda x, y: x == y, 2000, 1)
    ref = S.tv_event_lower_bound(mu, 0.0, n, "equal", 2000, 1)
    assert pred.extra["difference"] == ref.extra["difference"]


def test_tv_event_unknown():
    with pytest.raises(S.SamplerError):
        S.tv_event_lower_bound(MEASURES["Z"], 0.3, 10, "first-letter", 100, 1)


def test_speed():
    assert S.speed_estimate(M.dirac(ZZ), 50, 200, 1).mean == 0.0
    z = [S.speed_estimate(MEASURES["Z"], n, 2000, 1).mean for n in (100, 1000, 10_000)]
    assert z[0] > z[1] > z[2]
    f = S.speed_estimate(MEASURES["F2"], 4000, 1000, 1)
    assert abs(f.mean - 0.5) < 0.02
    exact = free_group_mean_length(4000) / 4000
    assert abs(f.mean - exact) < 4 * f.stderr


def test_free_group_oracle_small_n():
    # the reduced-length chain agrees with exact convolution at small n
    mu = MEASURES["F2"]
    for n in (1, 2, 5, 8):
        mu_n = M.nth_convolution(mu, n)
        want = sum(m * F2.length(g) for g, m in mu_n.items())
        assert free_group_mean_length(n) == pytest.approx(want, abs=1e-12)


def test_estimate_result():
    e = S.estimate([1.0, 2.0, 3.0, 4.0], seed=0)
    assert e.mean == 2.5 and e.stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    lo, hi = e.interval()
    assert lo == pytest.approx(2.5 - 3 * e.stderr) and hi == pytest.approx(2.5 + 3 * e.stderr)
    with pytest.raises(S.SamplerError):
        S.estimate([1.0], seed=0)
