"""Monte Carlo learning-curve estimation, rate fitting, and the diagnostics
for the set of near-optimal prices.

Reproducibility contract: trial t of a curve point at sample size n is driven
by Generator(Philox(SeedSequence((base_seed, n, t)))).  The per-trial seeding
is counter-based, so results are bit-identical regardless of how trials are
scheduled across parallel workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from multiprocessing import get_context
from typing import Sequence

import numpy as np

from .dist import Distribution, FinitePMF
from .learners import Learner, parse_learner

__all__ = [
    "CurvePoint",
    "LearningCurve",
    "RateFit",
    "GapUndefinedError",
    "InsufficientDataError",
    "estimate_gap",
    "learning_curve",
    "expected_revenue_curve",
    "fit_power",
    "fit_exponential",
    "t_eps",
    "delta_eps",
]

SIGNAL_SIGMA = 3.0  # positive-signal filter: keep points with mean_gap > 3*std_err


class GapUndefinedError(ValueError):
    """Raised when the optimal revenue is infinite and the gap of Definition-style
    curves is undefined; track expected_revenue_curve() growth instead."""


class InsufficientDataError(ValueError):
    """Fewer than three positive-signal points left after filtering."""


@dataclass(frozen=True)
class CurvePoint:
    n: int
    mean_gap: float
    std_err: float
    trials: int


@dataclass(frozen=True)
class LearningCurve:
    learner_name: str
    dist_label: str
    points: tuple[CurvePoint, ...]
    base_seed: int

    def ns(self) -> np.ndarray:
        return np.array([p.n for p in self.points], dtype=np.int64)

    def gaps(self) -> np.ndarray:
        return np.array([p.mean_gap for p in self.points])

    def errs(self) -> np.ndarray:
        return np.array([p.std_err for p in self.points])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("n,trials,mean_gap,std_err,seed\n")
            for p in self.points:
                fh.write(f"{p.n},{p.trials},{p.mean_gap!r},{p.std_err!r},{self.base_seed}\n")

    @staticmethod
    def from_csv(path, learner_name: str = "?", dist_label: str = "?") -> "LearningCurve":
        points = []
        seed = 0
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "n,trials,mean_gap,std_err,seed":
                raise ValueError(f"unexpected curve CSV header: {header!r}")
            for line in fh:
                n, trials, gap, err, seed_s = line.strip().split(",")
                points.append(CurvePoint(n=int(n), mean_gap=float(gap), std_err=float(err), trials=int(trials)))
                seed = int(seed_s)
        return LearningCurve(learner_name, dist_label, tuple(points), seed)

    def to_json(self) -> str:
        doc = {
            "learner": self.learner_name,
            "distribution": self.dist_label,
            "base_seed": self.base_seed,
            "points": [
                {"n": p.n, "trials": p.trials, "mean_gap": p.mean_gap, "std_err": p.std_err}
                for p in self.points
            ],
        }
        return json.dumps(doc, sort_keys=True, indent=2)


@dataclass(frozen=True)
class RateFit:
    model: str  # "power" (log gap vs log n) or "exponential" (log gap vs n)
    slope_or_rate: float
    intercept: float
    r_squared: float
    points_used: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "model": self.model,
                "slope_or_rate": self.slope_or_rate,
                "intercept": self.intercept,
                "r_squared": self.r_squared,
                "points_used": self.points_used,
            },
            sort_keys=True,
        )


def trial_streams(base_seed: int, n: int, trial: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (sample, learner) streams for one trial, from a counter-based key."""
    seq = np.random.SeedSequence((base_seed, n, trial))
    s1, s2 = seq.spawn(2)
    return np.random.Generator(np.random.Philox(s1)), np.random.Generator(np.random.Philox(s2))


def _trial_revenues(learner: Learner, dist: Distribution, n: int, trial_range, base_seed: int) -> np.ndarray:
    revs = np.empty(len(trial_range))
    for i, t in enumerate(trial_range):
        sample_rng, learner_rng = trial_streams(base_seed, n, t)
        s = dist.sample(sample_rng, n)
        price = learner.decide(s.values, n, learner_rng)
        revs[i] = dist.revenue(float(price))
    return revs


def _worker_revenues(args) -> tuple[int, np.ndarray]:
    learner_spec, dist_doc, n, start, stop, base_seed = args
    learner = parse_learner(learner_spec)
    dist = Distribution.from_dict(dist_doc)
    return start, _trial_revenues(learner, dist, n, range(start, stop), base_seed)


def _all_revenues(learner: Learner, dist: Distribution, n: int, trials: int, base_seed: int, workers: int) -> np.ndarray:
    if workers <= 1:
        return _trial_revenues(learner, dist, n, range(trials), base_seed)
    if learner.spec is None:
        raise ValueError("parallel estimation needs a spec-representable learner (workers=1 otherwise)")
    dist_doc = dist.to_dict()
    chunk = max(1, math.ceil(trials / (workers * 4)))
    jobs = [
        (learner.spec, dist_doc, n, start, min(start + chunk, trials), base_seed)
        for start in range(0, trials, chunk)
    ]
    revs = np.empty(trials)
    with get_context("spawn").Pool(workers) as pool:
        for start, part in pool.imap_unordered(_worker_revenues, jobs):
            revs[start : start + part.size] = part
    return revs


def estimate_gap(
    learner: Learner,
    dist: Distribution,
    n: int,
    trials: int,
    base_seed: int,
    workers: int = 1,
) -> CurvePoint:
    """Mean revenue gap opt - E[rev(price)] over seeded independent trials.

    The gap is evaluated against the true distribution (exact revenue of the
    returned price), never against a held-out empirical estimate.
    """
    if trials < 2:
        raise ValueError("need at least 2 trials for a standard error")
    opt = dist.optimal_revenue()
    if not math.isfinite(opt.value):
        raise GapUndefinedError(
            f"optimal revenue of {dist.label} is infinite; use expected_revenue_curve() "
            "to track revenue growth instead"
        )
    revs = _all_revenues(learner, dist, n, trials, base_seed, workers)
    mean_gap = opt.value - float(np.mean(revs))
    std_err = float(np.std(revs, ddof=1) / math.sqrt(trials))
    return CurvePoint(n=n, mean_gap=mean_gap, std_err=std_err, trials=trials)


def learning_curve(
    learner: Learner,
    dist: Distribution,
    grid: Sequence[int],
    trials: int,
    base_seed: int,
    workers: int = 1,
) -> LearningCurve:
    grid = [int(n) for n in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])) or not grid:
        raise ValueError("sample-size grid must be nonempty and strictly increasing")
    points = tuple(estimate_gap(learner, dist, n, trials, base_seed, workers) for n in grid)
    return LearningCurve(learner.name, dist.label, points, base_seed)


def expected_revenue_curve(
    learner: Learner,
    dist: Distribution,
    grid: Sequence[int],
    trials: int,
    base_seed: int,
    workers: int = 1,
) -> list[tuple[int, float, float]]:
    """(n, mean revenue, std err) per grid point; the consistency harness for
    distributions whose optimal revenue is infinite."""
    out = []
    for n in grid:
        revs = _all_revenues(learner, dist, int(n), trials, base_seed, workers)
        out.append((int(n), float(np.mean(revs)), float(np.std(revs, ddof=1) / math.sqrt(trials))))
    return out


# -- rate fits ---------------------------------------------------------------


def _filtered(curve: LearningCurve) -> list[CurvePoint]:
    return [p for p in curve.points if p.mean_gap > SIGNAL_SIGMA * p.std_err]


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return float(slope), float(intercept), r2


def fit_power(curve: LearningCurve) -> RateFit:
    """OLS of log mean_gap on log n over the positive-signal points."""
    pts = _filtered(curve)
    if len(pts) < 3:
        raise InsufficientDataError(f"power fit needs >= 3 positive-signal points, have {len(pts)}")
    x = np.log(np.array([p.n for p in pts], dtype=np.float64))
    y = np.log(np.array([p.mean_gap for p in pts]))
    slope, intercept, r2 = _ols(x, y)
    return RateFit("power", slope, intercept, r2, len(pts))


def fit_exponential(curve: LearningCurve) -> RateFit:
    """OLS of log mean_gap on n over the positive-signal points."""
    pts = _filtered(curve)
    if len(pts) < 3:
        raise InsufficientDataError(f"exponential fit needs >= 3 positive-signal points, have {len(pts)}")
    x = np.array([p.n for p in pts], dtype=np.float64)
    y = np.log(np.array([p.mean_gap for p in pts]))
    slope, intercept, r2 = _ols(x, y)
    return RateFit("exponential", slope, intercept, r2, len(pts))


# -- near-optimal-price diagnostics (finite support) --------------------------


@dataclass(frozen=True)
class TEpsResult:
    """Prices within eps of optimal: the qualifying atoms plus closed intervals.

    Revenue is linear on each inter-atom interval, so the interval boundaries
    (opt - eps) / survival are closed-form.
    """

    atoms: np.ndarray
    intervals: tuple[tuple[float, float], ...]

    def contains(self, t: float) -> bool:
        return any(lo - 1e-12 <= t <= hi + 1e-12 for lo, hi in self.intervals)


def _pmf_of(dist: Distribution) -> FinitePMF:
    if not isinstance(dist.variant, FinitePMF):
        raise ValueError("near-optimal-price diagnostics require finite support")
    return dist.variant


def _teps_pieces(pmf: FinitePMF, eps: float) -> list[tuple[float, float]]:
    """Maximal-resolution decomposition of T(eps) into closed pieces [lo, v_i],
    one per support interval, each free of interior atoms."""
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    opt, _ = pmf.optimal_revenue()
    thr = opt - eps
    if thr <= 0.0:
        raise ValueError("eps >= optimal revenue: every large price qualifies and the set is unbounded")
    tol = 1e-12 * max(1.0, opt)
    vals = pmf.values
    tails = pmf._tail[: vals.size]
    pieces = []
    prev = 0.0
    for v, s in zip(vals, tails):
        lo = max((thr - tol) / s, prev)
        if lo <= v + tol:
            pieces.append((float(min(lo, v)), float(v)))
        prev = float(v)
    return pieces


def t_eps(dist: Distribution, eps: float) -> TEpsResult:
    """The set T(eps) of prices with revenue >= opt - eps, boundary-exact."""
    pmf = _pmf_of(dist)
    pieces = _teps_pieces(pmf, eps)
    merged: list[list[float]] = []
    for lo, hi in pieces:
        if merged and lo <= merged[-1][1] + 1e-15:
            merged[-1][1] = hi
        else:
            merged.append([lo, hi])
    opt, _ = pmf.optimal_revenue()
    tol = 1e-12 * max(1.0, opt)
    atom_rev = pmf.values * pmf._tail[: pmf.values.size]
    atoms = pmf.values[atom_rev >= opt - eps - tol]
    return TEpsResult(atoms=atoms, intervals=tuple((lo, hi) for lo, hi in merged))


def delta_eps(dist: Distribution, eps: float) -> float:
    """Localization radius of eps-optimal prices around the optimal-price set:

        sup_{t in T(eps)} min_{t* in T*} max(|t - t*|, crossing_mass(t, t*))

    where crossing_mass(t, t') = min(t, t') * D([min, max)), the upper end open
    so a point mass at the far price does not count.  Exact for finite support:
    within each atom-free piece of T(eps) the two branches are linear in t, so
    the supremum is attained at piece endpoints, branch vertices, or pairwise
    branch crossings, all enumerated below.
    """
    pmf = _pmf_of(dist)
    opt, _ = pmf.optimal_revenue()
    tol = 1e-12 * max(1.0, opt)
    vals = pmf.values
    tails = pmf._tail[: vals.size]
    t_star = vals[vals * tails >= opt - tol]

    def crossing_mass(a: float, b: float) -> float:
        lo, hi = (a, b) if a <= b else (b, a)
        return lo * (pmf.survival(lo) - pmf.survival(hi))

    def h(t: float) -> float:
        return min(max(abs(t - ts), crossing_mass(t, float(ts))) for ts in t_star)

    best = 0.0
    for lo, hi in _teps_pieces(pmf, eps):
        cands = {lo, hi}
        # per optimal price, the two active linear branches on the open piece
        # interior: (slope, intercept) pairs of t -> slope*t + intercept
        lines: list[tuple[float, float]] = []
        for ts in t_star:
            ts = float(ts)
            if ts >= hi:  # piece sits below ts
                m = pmf.survival(hi) - pmf.survival(ts)  # mass of [t, ts) for t in (lo, hi)
                lines += [(-1.0, ts), (m, 0.0)]
                if 1.0 + m > 0:
                    cands.add(ts / (1.0 + m))
            elif ts <= lo:  # piece sits above ts
                c = ts * (pmf.survival(ts) - pmf.survival(lo, strict=True))
                lines += [(1.0, -ts), (0.0, c)]
        for i in range(len(lines)):
            for j in range(i + 1, len(lines)):
                a1, b1 = lines[i]
                a2, b2 = lines[j]
                if a1 != a2:
                    cands.add((b2 - b1) / (a1 - a2))
        for t in cands:
            if lo <= t <= hi:
                best = max(best, h(float(t)))
    return best
