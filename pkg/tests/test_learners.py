import math
import sys

import numpy as np
import pytest

from revcurve.empirical import EmpiricalDist
from revcurve.learners import (
    GrowthFns,
    LearnerProcessError,
    candidate_set,
    capped_erm,
    default_growth,
    erm,
    make_constant,
    make_subprocess,
    parse_learner,
    structural_erm,
    truncated_erm,
)


def e(vals):
    return EmpiricalDist.from_values(np.asarray(vals, dtype=float))


def brute_force_erm(vals, cap=None):
    """Oracle: enumerate candidate prices (sample values plus cap) directly."""
    vals = np.asarray(vals, dtype=float)
    cands = sorted(set(v for v in vals if cap is None or v <= cap) | ({cap} if cap is not None else set()))
    best_p, best_rev = None, -1.0
    for p in cands:
        rev = p * np.sum(vals >= p) / vals.size
        if rev > best_rev + 1e-15:
            best_p, best_rev = p, rev
    return best_p


class TestCandidateSet:
    def test_filter_plus_cap(self):
        assert list(candidate_set(e([1, 2, 8]), 3.0)) == [1.0, 2.0, 3.0]

    def test_all_above_cap(self):
        assert list(candidate_set(e([5, 9]), 3.0)) == [3.0]

    def test_dedup_with_cap(self):
        assert list(candidate_set(e([1]), 1.0)) == [1.0]

    def test_cap_must_be_positive(self):
        with pytest.raises(ValueError):
            candidate_set(e([1]), 0.0)


class TestErm:
    def test_prefers_higher_revenue(self):
        # rev(1) = 1 < rev(4) = 4/3
        assert erm(e([1, 1, 4])) == 4.0

    def test_tie_breaks_low(self):
        # rev(1) = 1 = rev(4)
        assert erm(e([1, 1, 1, 4])) == 1.0

    def test_singleton(self):
        assert erm(e([2.5])) == 2.5

    def test_matches_brute_force(self):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(21)))
        for _ in range(300):
            vals = rng.random(int(rng.integers(1, 30))) * 10
            assert erm(e(vals)) == brute_force_erm(vals)


class TestTruncatedErm:
    def test_large_value_excluded(self):
        # cap = max(ln 3, 1) ~ 1.0986; candidates {1, cap}: rev(1) = 1 beats cap/3
        assert truncated_erm(e([1, 1, 100]), 3) == 1.0

    def test_cap_inactive(self):
        assert truncated_erm(e([1, 1, 4]), 1000) == 4.0

    def test_cap_itself_returned_when_all_excluded(self):
        assert truncated_erm(e([5]), 2) == 1.0

    def test_output_never_exceeds_cap(self):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(22)))
        for _ in range(100):
            n = int(rng.integers(1, 50))
            vals = rng.random(n) * 40
            assert truncated_erm(e(vals), n) <= max(math.log(n), 1.0) + 1e-12


class TestCappedErm:
    def test_cap_binds(self):
        # candidates {1, 10}: emp rev(10) = 10 * (1/2) = 5 beats rev(1) = 1,
        # so the cap itself wins (the excluded 16 still counts toward survival)
        assert capped_erm(e([1, 16]), 100, lambda n: math.sqrt(n)) == 10.0

    def test_interior_value_wins(self):
        assert capped_erm(e([1, 9]), 100, lambda n: math.sqrt(n)) == 9.0

    def test_inactive_cap_equals_erm(self):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(23)))
        for _ in range(1000):
            vals = rng.random(int(rng.integers(1, 25))) * 5
            emp = e(vals)
            assert capped_erm(emp, 10, lambda n: 100.0) == erm(emp)

    def test_output_never_exceeds_cap(self):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(24)))
        g = lambda n: math.sqrt(n)
        for _ in range(100):
            n = int(rng.integers(1, 60))
            vals = rng.random(n) * 30
            assert capped_erm(e(vals), n, g) <= g(n) + 1e-12

    def test_nonpositive_cap_rejected(self):
        with pytest.raises(ValueError):
            capped_erm(e([1.0]), 5, lambda n: 0.0)


class TestStructuralErm:
    def test_margin_blocks_large_price(self):
        # i* = 3 needs 4/3 > 1 + 5*0.1; i* = 2 needs rev(1) > rev(1) + 0.2; both fail
        assert structural_erm(e([1, 1, 4]), 3, lambda n: 0.1) == 1.0

    def test_zero_margin_takes_strict_winner(self):
        assert structural_erm(e([1, 1, 4]), 3, lambda n: 0.0) == 4.0

    def test_constant_sample(self):
        assert structural_erm(e([3, 3, 3]), 3, lambda n: 0.05) == 3.0

    def test_zero_margin_matches_erm_on_unique_maximizer(self):
        # with f = 0 and a duplicate-free sample, the strict winner is the
        # global empirical-revenue maximizer whenever it is unique
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(25)))
        checked = 0
        for _ in range(300):
            vals = np.unique(rng.random(int(rng.integers(2, 20))) * 10)
            emp = e(vals)
            revs = [emp.revenue(float(v)) for v in vals]
            top = max(revs)
            if sum(abs(r - top) < 1e-12 for r in revs) == 1:
                assert structural_erm(emp, vals.size, lambda n: 0.0) == erm(emp)
                checked += 1
        assert checked > 100

    def test_monotone_in_f(self):
        # growing the margin never moves the winner upward
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(26)))
        for _ in range(200):
            vals = rng.random(int(rng.integers(1, 20))) * 10
            emp = e(vals)
            fs = [0.0, 0.01, 0.05, 0.1, 0.3, 1.0]
            outs = [structural_erm(emp, vals.size, lambda n, fv=fv: fv) for fv in fs]
            assert all(a >= b - 1e-15 for a, b in zip(outs, outs[1:]))

    def test_negative_margin_rejected(self):
        with pytest.raises(ValueError):
            structural_erm(e([1.0]), 1, lambda n: -0.1)


class TestPermutationDeterminism:
    def test_all_learners_permutation_invariant(self):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(27)))
        learners = [
            parse_learner("erm"),
            parse_learner("truncated"),
            parse_learner("capped:g=sqrt"),
            parse_learner("structural:f=n^-0.25"),
        ]
        for _ in range(50):
            n = int(rng.integers(1, 20))
            vals = rng.random(n) * 10
            perm = rng.permutation(vals)
            for lr in learners:
                assert lr.decide(vals, n, None) == lr.decide(perm, n, None), lr.name


class TestGrowthFns:
    def test_default_satisfies_constraint_with_equality(self):
        g = default_growth()
        for n in (1, 2, 10, 1000, 10**6):
            assert g.f(n) ** 2 * n == pytest.approx(g.g(n), rel=1e-12)

    def test_parsed_growth_constraint(self):
        lr = parse_learner("structural:f=n^-0.25")
        cfg = lr.config
        for n in range(cfg.n0, 100):
            assert cfg.f(n) ** 2 * n >= cfg.g(n) - 1e-12


class TestParseLearner:
    def test_known_specs(self):
        assert parse_learner("erm").name == "erm"
        assert parse_learner("truncated").name == "truncated"
        assert parse_learner("capped:g=sqrt").name == "capped[g=sqrt]"
        assert parse_learner("structural:f=n^-0.25").name == "structural[f=n^-0.25]"

    def test_constant(self):
        lr = parse_learner("const:7")
        assert lr.decide(np.array([1.0, 2.0]), 2, None) == 7.0

    def test_unknown(self):
        with pytest.raises(ValueError):
            parse_learner("oracle")

    def test_capped_custom_power(self):
        lr = parse_learner("capped:g=n^0.5")
        assert lr.config.g(100) == pytest.approx(10.0)

    def test_capped_log(self):
        lr = parse_learner("capped:g=log")
        assert lr.config.g(1) == 1.0
        assert lr.config.g(10**5) == pytest.approx(math.log(10**5))


class TestSubprocessLearner:
    def test_protocol_roundtrip(self):
        # black-box learner that reads n then n values and prints the max
        prog = "import sys; d = sys.stdin.read().split(); n = int(d[0]); print(max(map(float, d[1:n+1])))"
        lr = make_subprocess([sys.executable, "-c", prog])
        assert lr.decide(np.array([1.0, 7.5, 3.0]), 3, None) == 7.5

    def test_failure_propagates(self):
        lr = make_subprocess([sys.executable, "-c", "import sys; sys.exit(3)"])
        with pytest.raises(LearnerProcessError):
            lr.decide(np.array([1.0]), 1, None)

    def test_garbage_output_propagates(self):
        lr = make_subprocess([sys.executable, "-c", "print('not a price')"])
        with pytest.raises(LearnerProcessError):
            lr.decide(np.array([1.0]), 1, None)

    def test_spec_string_roundtrip(self):
        lr = parse_learner("cmd:echo 4.25")
        assert lr.decide(np.array([1.0]), 1, None) == 4.25
