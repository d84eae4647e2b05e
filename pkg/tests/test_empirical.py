import math

import numpy as np
import pytest

from revcurve.dist import zoo
from revcurve.empirical import EmpiricalDist, Sample, dkw_bound, empirical_dist, sup_cdf_deviation
from revcurve.learners import candidate_set


def philox(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


class TestEmpiricalDist:
    def test_sorts(self):
        e = empirical_dist(Sample(np.array([4.0, 1.0, 1.0])))
        assert np.array_equal(e.sorted_values, [1.0, 1.0, 4.0])

    def test_permutation_invariance(self):
        perms = [[1, 1, 4], [1, 4, 1], [4, 1, 1]]
        dists = [empirical_dist(Sample(np.array(p, dtype=float))) for p in perms]
        for e in dists[1:]:
            assert np.array_equal(e.sorted_values, dists[0].sorted_values)

    def test_singleton(self):
        e = empirical_dist(Sample(np.array([2.0])))
        assert np.array_equal(e.sorted_values, [2.0]) and e.n == 1

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            empirical_dist(Sample(np.array([])))

    def test_negative_values_rejected(self):
        with pytest.raises(ValueError):
            Sample(np.array([-1.0, 2.0]))

    def test_sample_csv_roundtrip(self, tmp_path):
        s = Sample(np.array([0.1, 2.25, 17.0]))
        path = tmp_path / "s.csv"
        s.to_csv(path)
        back = [float(line) for line in path.read_text().splitlines()]
        assert back == list(s.values)


class TestEmpiricalRevenue:
    def test_examples(self):
        e = EmpiricalDist.from_values([1.0, 1.0, 4.0])
        assert e.revenue(1.0) == 1.0
        assert e.revenue(4.0) == pytest.approx(4 / 3, abs=1e-15)
        assert e.revenue(5.0) == 0.0

    def test_negative_price_rejected(self):
        with pytest.raises(ValueError):
            EmpiricalDist.from_values([1.0]).revenue(-0.5)

    def test_times_n_is_integer_multiple_of_price(self):
        rng = philox(5)
        for _ in range(50):
            vals = rng.random(int(rng.integers(1, 40))) * 10
            e = EmpiricalDist.from_values(vals)
            for p in rng.random(10) * 12:
                total = e.revenue(float(p)) * e.n
                if p > 0:
                    k = total / p
                    assert abs(k - round(k)) < 1e-9

    def test_maximum_attained_on_candidate_set(self):
        # on [0, cap], the empirical-revenue max is attained at a sample value or the cap
        rng = philox(6)
        for _ in range(30):
            vals = rng.random(int(rng.integers(1, 25))) * 8
            e = EmpiricalDist.from_values(vals)
            cap = float(rng.random() * 9 + 0.1)
            cands = candidate_set(e, cap)
            best = max(e.revenue(float(c)) for c in cands)
            for p in np.linspace(0.0, cap, 400):
                assert e.revenue(float(p)) <= best + 1e-12


class TestDKWBound:
    def test_direct_substitution(self):
        assert dkw_bound(100, 0.1) == pytest.approx(2 * math.exp(-2), rel=1e-12)
        assert dkw_bound(10, 1.0) == pytest.approx(2 * math.exp(-20), rel=1e-12)

    def test_probability_cap(self):
        assert dkw_bound(5, 1e-4) == 1.0

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            dkw_bound(100, 0.0)
        with pytest.raises(ValueError):
            dkw_bound(0, 0.1)


class TestSupCdfDeviation:
    def test_exact_match_is_zero(self):
        e = EmpiricalDist.from_values([1.0])
        assert sup_cdf_deviation(e, zoo("finite", points=[(1.0, 1.0)])) == 0.0

    def test_half_mass_missed(self):
        # F_n jumps 0 -> 1 at 1; F sits at 1/2 on (1, 2]; the sup is 1/2
        e = EmpiricalDist.from_values([1.0])
        d = zoo("finite", points=[(1.0, 0.5), (2.0, 0.5)])
        assert sup_cdf_deviation(e, d) == pytest.approx(0.5, abs=1e-15)

    def test_matches_brute_force_on_atoms(self):
        rng = philox(9)
        d = zoo("finite", points=[(1.0, 0.3), (2.0, 0.3), (5.0, 0.4)])
        for _ in range(20):
            vals = np.array([1.0, 2.0, 5.0])[rng.integers(0, 3, size=int(rng.integers(1, 30)))]
            e = EmpiricalDist.from_values(vals)
            got = sup_cdf_deviation(e, d)
            # oracle: scalar scan of both step functions' one-sided limits
            xs = np.unique(np.concatenate([vals, [1.0, 2.0, 5.0]]))
            want = 0.0
            for x in xs:
                for side in ("left", "right"):
                    fn = np.searchsorted(e.sorted_values, x, side=side) / e.n
                    f = d.cdf(float(x)) if side == "left" else d.cdf_right(float(x))
                    want = max(want, abs(float(fn) - f))
            assert got == pytest.approx(want, abs=1e-15)

    def test_uniform_large_sample_small_deviation(self):
        # DKW at eps = 0.01, n = 1e5 leaves failure mass 2e^-20; all seeded trials pass
        d = zoo("uniform01")
        ok = 0
        for seed in range(100):
            vals = d.sample(philox(1000 + seed), 100_000).values
            if sup_cdf_deviation(EmpiricalDist.from_values(vals), d) < 0.01:
                ok += 1
        assert ok >= 95

    def test_dkw_empirical_validation(self):
        # fraction of trials with deviation > eps stays within the DKW bound
        # plus 3-sigma binomial slack, for eps in {0.05, 0.1}, n = 200
        d = zoo("uniform01")
        n, trials = 200, 1000
        devs = []
        for t in range(trials):
            vals = d.sample(philox(77_000 + t), n).values
            devs.append(sup_cdf_deviation(EmpiricalDist.from_values(vals), d))
        devs = np.array(devs)
        for eps in (0.05, 0.1):
            frac = float(np.mean(devs > eps))
            bound = dkw_bound(n, eps)
            slack = 3.0 * math.sqrt(bound * (1.0 - bound) / trials)
            assert frac <= bound + slack, (eps, frac, bound)
