"""Global sensitivity of simulated cooperation to the game-design variables.

Pipeline: Latin hypercube design -> one simulated structure per design row ->
partial rank correlation of each variable with the outcome -> percentile
bootstrap intervals. First-period interventions live here too.
"""
from __future__ import annotations

import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .core import GameStructure
from .errors import BadN, DegenerateRanks, RankDeficientRegression
from .simulator import SimulationConfig, derive_seed, simulate_structure

log = logging.getLogger(__name__)

DESIGN_COLUMNS = ("error", "delta", "infinity", "risk", "r1", "r2")
MAX_CONSTRAINT_RETRIES = 100


@dataclass(frozen=True)
class ParameterSpace:
    """Marginals of the design variables; continuous play is held at 0."""

    error: tuple[float, float] = (0.0, 0.5)
    delta: tuple[float, float] = (0.45, 0.95)
    infinity_p: float = 0.5
    risk_p: float = 0.5
    r1: tuple[float, float] = (0.0, 1.0)
    r2: tuple[float, float] = (0.0, 1.0)
    continuous: bool = False

    @property
    def columns(self) -> tuple[str, ...]:
        return DESIGN_COLUMNS

    def bounds(self, name: str) -> tuple[float, float]:
        return getattr(self, name)


def _stratified(rng: np.random.Generator, n: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    strata = rng.permutation(n)
    return lo + (hi - lo) * (strata + rng.random(n)) / n, strata


def lhs_sample(space: ParameterSpace, n: int, seed: int, constrain: bool = True) -> np.ndarray:
    """Latin hypercube design of ``n`` rows over :data:`DESIGN_COLUMNS`.

    Each continuous column has exactly one value per equal-probability stratum
    before the r1 < r2 constraint is applied. Violating rows get their (r1, r2)
    redrawn inside the same strata; after ``MAX_CONSTRAINT_RETRIES`` failures
    the pair is swapped.
    """
    if n < 2:
        raise BadN(f"need at least 2 samples, got {n}")
    rng = np.random.default_rng(seed)
    out = np.empty((n, len(DESIGN_COLUMNS)))
    strata = {}
    for j, name in enumerate(DESIGN_COLUMNS):
        if name == "infinity":
            out[:, j] = rng.random(n) < space.infinity_p
        elif name == "risk":
            out[:, j] = rng.random(n) < space.risk_p
        else:
            out[:, j], strata[name] = _stratified(rng, n, *space.bounds(name))
    if not constrain:
        return out

    j1, j2 = DESIGN_COLUMNS.index("r1"), DESIGN_COLUMNS.index("r2")
    (lo1, hi1), (lo2, hi2) = space.r1, space.r2
    fix_rng = np.random.default_rng(derive_seed(seed, 1))
    for i in np.flatnonzero(out[:, j1] >= out[:, j2]):
        for _ in range(MAX_CONSTRAINT_RETRIES):
            a = lo1 + (hi1 - lo1) * (strata["r1"][i] + fix_rng.random()) / n
            b = lo2 + (hi2 - lo2) * (strata["r2"][i] + fix_rng.random()) / n
            if a < b:
                out[i, j1], out[i, j2] = a, b
                break
        else:
            a, b = out[i, j1], out[i, j2]
            if a == b:
                b = np.nextafter(b, np.inf)
            out[i, j1], out[i, j2] = min(a, b), max(a, b)
    return out


def materialize(row: Sequence[float], index: int = 0, space: ParameterSpace | None = None) -> GameStructure:
    """A GameStructure for one design row."""
    values = dict(zip(DESIGN_COLUMNS, (float(v) for v in row)))
    return GameStructure(
        id=f"lhs-{index}",
        error=values["error"],
        delta=values["delta"],
        infinite=bool(values["infinity"]),
        continuous=(space or ParameterSpace()).continuous,
        risk=bool(values["risk"]),
        r1=values["r1"],
        r2=values["r2"],
        dataset="lhs",
    )


def run_global_sensitivity(
    model,
    space: ParameterSpace,
    n_samples: int,
    sims_per_sample: int,
    seed: int,
    *,
    threads: int = 1,
    period: int | None = None,
    config: SimulationConfig | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate every design row; returns (design matrix, outcome vector).

    The outcome is mean cooperation over the horizon, or the rate at ``period``
    (NaN where the horizon is shorter). Row ``i`` simulates from
    ``derive_seed(seed, 2, i)``, so thread count does not affect results.
    """
    if n_samples < 2:
        raise BadN(f"need at least 2 samples, got {n_samples}")
    samples = lhs_sample(space, n_samples, derive_seed(seed, 0))
    base = config or SimulationConfig()

    def outcome(i: int) -> float:
        cfg = replace(base, n_interactions=sims_per_sample, seed=derive_seed(seed, 2, i))
        res = simulate_structure(model, materialize(samples[i], i, space), cfg)
        if period is None:
            return res.mean_cooperation
        return float(res.per_period_cooperation[period - 1]) if period <= res.horizon else math.nan

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            y = list(pool.map(outcome, range(n_samples)))
    else:
        y = [outcome(i) for i in range(n_samples)]
    return samples, np.array(y)


# --- partial rank correlation ------------------------------------------------------


def _ranked(samples, outcomes) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(samples, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("samples must be (n, p) and outcomes length n")
    keep = np.isfinite(y) & np.all(np.isfinite(X), axis=1)
    X, y = X[keep], y[keep]
    n, p = X.shape
    if n < p + 2:
        raise RankDeficientRegression(f"{n} usable rows cannot support {p} variables")
    if np.any(np.ptp(X, axis=0) == 0):
        raise DegenerateRanks(f"constant input column(s) {np.flatnonzero(np.ptp(X, axis=0) == 0).tolist()}")
    if np.ptp(y) == 0:
        raise DegenerateRanks("outcome is constant")
    return rankdata(X, axis=0), rankdata(y)


def _prcc_from_ranks(RX: np.ndarray, ry: np.ndarray) -> np.ndarray:
    n, p = RX.shape
    out = np.empty(p)
    ones = np.ones((n, 1))
    for j in range(p):
        Z = np.hstack([ones, np.delete(RX, j, axis=1)])
        if np.linalg.matrix_rank(Z) < Z.shape[1]:
            raise RankDeficientRegression(f"ranks of the other variables are collinear (variable {j})")
        coef, *_ = np.linalg.lstsq(Z, np.column_stack([RX[:, j], ry]), rcond=None)
        res = np.column_stack([RX[:, j], ry]) - Z @ coef
        sx, sy = np.linalg.norm(res[:, 0]), np.linalg.norm(res[:, 1])
        if sx == 0 or sy == 0:
            raise DegenerateRanks(f"variable {j} is fully explained by the others")
        out[j] = np.clip(res[:, 0] @ res[:, 1] / (sx * sy), -1.0, 1.0)
    return out


def prcc(samples, outcomes) -> np.ndarray:
    """Partial rank correlation of each input column with the outcome.

    Rows with non-finite values are dropped.
    """
    return _prcc_from_ranks(*_ranked(samples, outcomes))


def bootstrap_ci(
    samples, outcomes, replicates: int = 1000, seed: int = 0, level: float = 0.95
) -> tuple[np.ndarray, np.ndarray, int]:
    """Percentile bootstrap interval of every PRCC.

    Returns (low, high, redrawn) where ``redrawn`` counts resamples that were
    degenerate and replaced.
    """
    if replicates < 100:
        raise BadN(f"need at least 100 bootstrap replicates, got {replicates}")
    X = np.asarray(samples, dtype=float)
    y = np.asarray(outcomes, dtype=float)
    keep = np.isfinite(y) & np.all(np.isfinite(X), axis=1)
    X, y = X[keep], y[keep]
    _ranked(X, y)  # fail early on degenerate input
    rng = np.random.default_rng(seed)
    n = len(y)
    draws = np.empty((replicates, X.shape[1]))
    redrawn = 0
    b = 0
    while b < replicates:
        idx = rng.integers(0, n, n)
        try:
            draws[b] = prcc(X[idx], y[idx])
        except (DegenerateRanks, RankDeficientRegression):
            redrawn += 1
            if redrawn > 10 * replicates:
                raise
            continue
        b += 1
    if redrawn:
        log.info("bootstrap redrew %d degenerate resamples", redrawn)
    tail = 100 * (1 - level) / 2
    return np.percentile(draws, tail, axis=0), np.percentile(draws, 100 - tail, axis=0), redrawn


@dataclass(frozen=True)
class SensitivityReport:
    variables: tuple[str, ...]
    estimates: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    replicates: int
    n_samples: int
    seed: int
    redrawn: int = 0

    def rows(self) -> list[tuple[str, float, float, float]]:
        return [
            (v, float(e), float(lo), float(hi))
            for v, e, lo, hi in zip(self.variables, self.estimates, self.ci_low, self.ci_high)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("variable,estimate,ci_low,ci_high\n")
        for v, e, lo, hi in self.rows():
            buf.write(f"{v},{e:.17g},{lo:.17g},{hi:.17g}\n")
        return buf.getvalue()

    def to_svg(self) -> str:
        from .svg import interval_chart

        return interval_chart(self.rows(), title="PRCC with bootstrap 95% intervals", x_label="PRCC")


def read_sensitivity_csv(text: str) -> list[tuple[str, float, float, float]]:
    lines = text.strip().splitlines()
    if not lines or lines[0] != "variable,estimate,ci_low,ci_high":
        raise ValueError("not a sensitivity CSV")
    rows = []
    for line in lines[1:]:
        v, e, lo, hi = line.split(",")
        rows.append((v, float(e), float(lo), float(hi)))
    return rows


def sensitivity_analysis(
    model,
    space: ParameterSpace | None = None,
    n_samples: int = 5000,
    sims_per_sample: int = 500,
    replicates: int = 1000,
    seed: int = 0,
    threads: int = 1,
    period: int | None = None,
) -> SensitivityReport:
    """Sample, simulate, PRCC and bootstrap under one root seed."""
    space = space or ParameterSpace()
    X, y = run_global_sensitivity(model, space, n_samples, sims_per_sample, seed, threads=threads, period=period)
    est = prcc(X, y)
    lo, hi, redrawn = bootstrap_ci(X, y, replicates, derive_seed(seed, 3))
    return SensitivityReport(DESIGN_COLUMNS, est, lo, hi, replicates, n_samples, seed, redrawn)


# --- interventions -------------------------------------------------------------


def first_period_intervention(model, game: GameStructure, p1: float, sim_config: SimulationConfig) -> float:
    """Mean cooperation after period 1 when period-1 cooperation happens with probability ``p1``."""
    if not 0 <= p1 <= 1:
        raise ValueError(f"p1 must lie in [0, 1], got {p1}")
    cfg = replace(sim_config, first_period_prob_override=float(p1))
    return simulate_structure(model, game, cfg).mean_after_first()


def empirical_mean_structure(structures: Sequence[GameStructure], id: str = "empirical-mean") -> GameStructure:
    """Averages of the continuous design values; the most common value of each indicator."""
    if not structures:
        raise ValueError("no structures to average")

    def mode(flags):
        return sum(flags) * 2 > len(flags)

    return GameStructure(
        id=id,
        error=float(np.mean([s.error for s in structures])),
        delta=float(np.mean([s.delta for s in structures])),
        infinite=mode([s.infinite for s in structures]),
        continuous=mode([s.continuous for s in structures]),
        risk=mode([s.risk for s in structures]),
        r1=float(np.mean([s.r1 for s in structures])),
        r2=float(np.mean([s.r2 for s in structures])),
        dataset="mean",
    )
