"""Seeded agent-based playout of a game structure by two model-driven agents.

Every interaction ``i`` draws its randomness from its own substream,
``SeedSequence(seed, spawn_key=(i,))``, and the per-interaction arithmetic is
elementwise, so results do not depend on how interactions are batched or
spread across threads.
"""
from __future__ import annotations

import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.special import expit

from .behavior import ImputationMode, ModelKind, _fewa_step, initial_attractions
from .core import GameStructure

REPORTING_HORIZON = 8
SHORT_INFINITE_HORIZON = 7

# uniforms drawn per (period, player): action, execution-error flip, period-zero imputation
_DRAWS = 3


class NoiseMode(str, Enum):
    FLIP_IMPLEMENTED = "flip_implemented"
    NO_FLIP = "no_flip"


@dataclass(frozen=True)
class SimulationConfig:
    n_interactions: int = 1000
    seed: int = 0
    horizon_override: int | None = None
    first_period_prob_override: float | None = None
    noise_mode: NoiseMode = NoiseMode.FLIP_IMPLEMENTED
    imputation_mode: ImputationMode = ImputationMode.BERNOULLI_HALF

    def __post_init__(self):
        if self.n_interactions < 1:
            raise ValueError(f"n_interactions must be >= 1, got {self.n_interactions}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.horizon_override is not None and self.horizon_override < 1:
            raise ValueError("horizon_override must be >= 1")
        p1 = self.first_period_prob_override
        if p1 is not None and not 0 <= p1 <= 1:
            raise ValueError("first_period_prob_override must lie in [0, 1]")
        object.__setattr__(self, "noise_mode", NoiseMode(self.noise_mode))
        object.__setattr__(self, "imputation_mode", ImputationMode(self.imputation_mode))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise_mode"] = self.noise_mode.value
        d["imputation_mode"] = self.imputation_mode.value
        return d


@dataclass(frozen=True)
class InteractionTrace:
    """Actions of one interaction, shape (horizon, 2); column k is player k."""

    intended: np.ndarray
    implemented: np.ndarray


@dataclass(frozen=True, eq=False)
class SimulationResult:
    per_period_cooperation: np.ndarray
    cooperative_counts: np.ndarray
    n_interactions: int
    horizon: int
    metadata: dict = field(default_factory=dict, compare=False)

    def __eq__(self, other):
        if not isinstance(other, SimulationResult):
            return NotImplemented
        return (
            self.n_interactions == other.n_interactions
            and self.horizon == other.horizon
            and self.cooperative_counts.tobytes() == other.cooperative_counts.tobytes()
            and self.per_period_cooperation.tobytes() == other.per_period_cooperation.tobytes()
        )

    __hash__ = None

    @property
    def actions_per_period(self) -> int:
        return 2 * self.n_interactions

    @property
    def mean_cooperation(self) -> float:
        return float(self.cooperative_counts.sum() / (self.actions_per_period * self.horizon))

    def mean_after_first(self) -> float:
        if self.horizon < 2:
            raise ValueError("horizon of 1 has no periods after the first")
        return float(self.cooperative_counts[1:].sum() / (self.actions_per_period * (self.horizon - 1)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("period,cooperation_rate,n\n")
        for t, rate in enumerate(self.per_period_cooperation, start=1):
            buf.write(f"{t},{format(float(rate), '.17g')},{self.actions_per_period}\n")
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "horizon": self.horizon,
            "mean_cooperation": self.mean_cooperation,
            "metadata": self.metadata,
            "n_interactions": self.n_interactions,
            "per_period_cooperation": [float(x) for x in self.per_period_cooperation],
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def horizon_for(game: GameStructure, config: SimulationConfig | None = None) -> int:
    if config is not None and config.horizon_override is not None:
        return int(config.horizon_override)
    if game.infinite:
        return SHORT_INFINITE_HORIZON if game.delta == 0.5 else REPORTING_HORIZON
    return max(1, min(int(round(1.0 / (1.0 - game.delta))), REPORTING_HORIZON))


# --- reference policies used as simulation oracles -----------------------------


class ConstantPolicy:
    """Cooperates with a fixed probability regardless of game and history."""

    is_stateful = False
    uses_imputation = False

    def __init__(self, p: float):
        self.p = float(p)

    def batch_prob(self, game, t, my_prev=None, other_prev=None, n=None):
        if n is None:
            n = 1 if my_prev is None else len(my_prev)
        return np.full(n, self.p)

    def fingerprint(self) -> str:
        return f"constant:{self.p!r}"


class InertiaPolicy:
    """Copies its own previous action; period-1 probability from ``first_period``.

    ``first_period`` is a number or a function of the game.
    """

    is_stateful = False
    uses_imputation = False

    def __init__(self, first_period: float | Callable[[GameStructure], float] = 0.5):
        self.first_period = first_period

    def batch_prob(self, game, t, my_prev=None, other_prev=None, n=None):
        if n is None:
            n = 1 if my_prev is None else len(my_prev)
        if t == 1:
            p = self.first_period(game) if callable(self.first_period) else self.first_period
            return np.full(n, float(p))
        return np.asarray(my_prev, dtype=float)

    def fingerprint(self) -> str:
        return f"inertia:{getattr(self.first_period, '__name__', self.first_period)!r}"


# --- playout -----------------------------------------------------------------


def _interaction_uniforms(seed: int, index: int, horizon: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    return rng.random((horizon, 2, _DRAWS))


def _play(model, game: GameStructure, config: SimulationConfig, U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised playout of ``U.shape[0]`` interactions from their uniforms."""
    n, horizon = U.shape[0], U.shape[1]
    intended = np.zeros((n, horizon, 2), dtype=np.int8)
    implemented = np.zeros((n, horizon, 2), dtype=np.int8)
    flips = config.noise_mode is NoiseMode.FLIP_IMPLEMENTED and game.error > 0
    p1 = config.first_period_prob_override

    fewa = getattr(model, "kind", None) is ModelKind.FEWA
    if fewa:
        pay = game.unit_payoffs
        a0 = initial_attractions(pay, model.fewa_params.initial_attraction_mode)
        a_c = np.full((n, 2), a0[0])
        a_d = np.full((n, 2), a0[1])
        exp_n = np.ones((n, 2))
        opp_c = np.zeros((n, 2))
        opp_n = np.zeros((n, 2))

    my_prev = other_prev = None
    if getattr(model, "uses_imputation", False):
        if config.imputation_mode is ImputationMode.MUTUAL_COOPERATION:
            zero = np.ones((n, 2), dtype=np.int8)
        else:
            # one joint period-zero outcome per interaction, seen mirrored by the two players
            zero = (U[:, 0, :, 2] < 0.5).astype(np.int8)
        my_prev, other_prev = zero, zero[:, ::-1]

    for t in range(1, horizon + 1):
        u_act = U[:, t - 1, :, 0]
        if t == 1 and p1 is not None:
            act = (u_act < p1).astype(np.int8)
            intended[:, 0] = act
            implemented[:, 0] = act  # the override fixes what is actually played
        else:
            if fewa:
                p = expit(model.fewa_params.lam * (a_c - a_d))
            else:
                mp = None if my_prev is None else my_prev.reshape(-1)
                op = None if other_prev is None else other_prev.reshape(-1)
                p = model.batch_prob(game, t, mp, op, n=2 * n).reshape(n, 2)
            act = (u_act < p).astype(np.int8)
            intended[:, t - 1] = act
            if flips:
                act = act ^ (U[:, t - 1, :, 1] < game.error).astype(np.int8)
            implemented[:, t - 1] = act
        done = implemented[:, t - 1]
        my_prev, other_prev = done, done[:, ::-1]
        if fewa:
            mine = done.astype(float)
            other = done[:, ::-1].astype(float)
            a_c, a_d, exp_n, opp_c, opp_n, _ = _fewa_step(
                a_c, a_d, exp_n, opp_c, opp_n, mine, other, pay.R, pay.S, pay.T, pay.P
            )
    return intended, implemented


def simulate_interaction(model, game: GameStructure, config: SimulationConfig, rng: np.random.Generator) -> InteractionTrace:
    """Play one interaction with randomness from ``rng``."""
    horizon = horizon_for(game, config)
    U = rng.random((horizon, 2, _DRAWS))[None]
    intended, implemented = _play(model, game, config, U)
    return InteractionTrace(intended[0], implemented[0])


def simulate_traces(model, game: GameStructure, config: SimulationConfig, start: int = 0, stop: int | None = None):
    """Intended and implemented actions for interactions ``start..stop-1``, shape (n, horizon, 2)."""
    stop = config.n_interactions if stop is None else stop
    horizon = horizon_for(game, config)
    if stop <= start:
        empty = np.zeros((0, horizon, 2), dtype=np.int8)
        return empty, empty
    U = np.stack([_interaction_uniforms(config.seed, i, horizon) for i in range(start, stop)])
    return _play(model, game, config, U)


def _model_fingerprint(model) -> str:
    fp = getattr(model, "fingerprint", None)
    return fp() if callable(fp) else type(model).__name__


def simulate_structure(
    model, game: GameStructure, config: SimulationConfig, threads: int = 1, chunk_size: int = 4096
) -> SimulationResult:
    """Per-period cooperation rates over ``config.n_interactions`` playouts."""
    horizon = horizon_for(game, config)
    n = config.n_interactions
    bounds = [(s, min(s + chunk_size, n)) for s in range(0, n, chunk_size)]

    def run(bound):
        _, implemented = simulate_traces(model, game, config, *bound)
        return implemented.sum(axis=(0, 2), dtype=np.int64)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    counts = np.sum(parts, axis=0)
    rates = counts / (2.0 * n)
    metadata = {
        "config": config.to_dict(),
        "model": _model_fingerprint(model),
        "seed": config.seed,
        "structure_id": game.id,
    }
    return SimulationResult(rates, counts, n, horizon, metadata)


def derive_seed(seed: int, *keys: int) -> int:
    """Independent child seed for a labelled sub-task (e.g. one structure of a sweep)."""
    return int(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys)).generate_state(1, np.uint64)[0])


def read_simulation_csv(text: str) -> tuple[np.ndarray, int]:
    """Parse :meth:`SimulationResult.to_csv` output into (rates, n per period)."""
    lines = text.strip().splitlines()
    if not lines or lines[0].strip() != "period,cooperation_rate,n":
        raise ValueError("not a simulation CSV")
    rates, ns = [], set()
    for k, line in enumerate(lines[1:], start=1):
        period, rate, count = line.split(",")
        if int(period) != k:
            raise ValueError(f"periods out of order at line {k + 1}")
        rates.append(float(rate))
        ns.add(int(count))
    if len(ns) != 1:
        raise ValueError("inconsistent per-period counts")
    return np.array(rates), ns.pop()



RESULTS_HEADER = "structure_id,period,cooperation_rate,n"


def results_to_csv(results: list[SimulationResult]) -> str:
    """Several structures' per-period rates in one long table."""
    buf = io.StringIO()
    buf.write(RESULTS_HEADER + "\n")
    for res in results:
        sid = res.metadata.get("structure_id", "")
        for t, rate in enumerate(res.per_period_cooperation, start=1):
            buf.write(f"{sid},{t},{format(float(rate), '.17g')},{res.actions_per_period}\n")
    return buf.getvalue()


def read_results_csv(text: str) -> dict[str, np.ndarray]:
    """Inverse of :func:`results_to_csv`: structure id -> per-period rates."""
    lines = text.strip().splitlines()
    if not lines or lines[0].strip() != RESULTS_HEADER:
        raise ValueError("not a simulation results CSV")
    out: dict[str, list[float]] = {}
    for k, line in enumerate(lines[1:], start=2):
        sid, period, rate, _ = line.split(",")
        rates = out.setdefault(sid, [])
        if int(period) != len(rates) + 1:
            raise ValueError(f"periods out of order at line {k}")
        rates.append(float(rate))
    return {sid: np.array(r) for sid, r in out.items()}
