"""Prediction policies: the two-piece logistic model, its halves, a constant
baseline, and self-tuning experience-weighted attraction (fEWA) learning."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.special import expit

from .core import Action, GameStructure, InteractionHistory, PayoffTable
from .decisions import padded_sequences, with_lags
from .errors import EmptyGrid, EmptyTrainingSlice, MissingHistory, MissingRng
from .features import (
    DYNAMIC_SCHEMA,
    STATIC_SCHEMA,
    dynamic_features,
    dynamic_matrix,
    static_features,
    static_matrix,
)
from .glm import Dataset2D, FittedGlm, fit_logistic, predict_prob

DEFAULT_LAMBDA_GRID = (0.5, 1.0, 2.0, 5.0, 10.0, 20.0)


class ModelKind(str, Enum):
    FULL = "full"
    STATIC_ONLY = "static"
    DYNAMIC_ONLY = "dynamic"
    BASELINE = "baseline"
    FEWA = "fewa"


class ImputationMode(str, Enum):
    """How the dynamic-only model fills in the missing period-zero outcome."""

    BERNOULLI_HALF = "bernoulli_half"
    MUTUAL_COOPERATION = "mutual_cooperation"


class InitialAttraction(str, Enum):
    ZERO = "zero"
    UNIFORM_OPPONENT = "uniform_opponent"


@dataclass(frozen=True)
class FewaParams:
    lam: float
    initial_attraction_mode: InitialAttraction = InitialAttraction.UNIFORM_OPPONENT

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")
        object.__setattr__(self, "initial_attraction_mode", InitialAttraction(self.initial_attraction_mode))


@dataclass(frozen=True)
class FewaState:
    """One learner's attractions and bookkeeping.

    ``opponent_counts`` holds how often the opponent cooperated and defected so
    far; its normalisation is the cumulative frequency used by the surprise index.
    """

    attractions: tuple[float, float]  # (cooperate, defect)
    experience: float = 1.0
    opponent_counts: tuple[float, float] = (0.0, 0.0)
    last_opponent_action: Action | None = None
    period: int = 0

    @property
    def opponent_cumulative_freq(self) -> tuple[float, float]:
        total = sum(self.opponent_counts)
        if total == 0:
            return (0.0, 0.0)
        return (self.opponent_counts[0] / total, self.opponent_counts[1] / total)


def initial_attractions(payoffs: PayoffTable, mode: InitialAttraction) -> tuple[float, float]:
    if InitialAttraction(mode) is InitialAttraction.ZERO:
        return (0.0, 0.0)
    # expected payoff against an opponent who cooperates with probability 1/2
    return ((payoffs.R + payoffs.S) / 2.0, (payoffs.T + payoffs.P) / 2.0)


def initial_fewa_state(payoffs: PayoffTable, mode: InitialAttraction = InitialAttraction.UNIFORM_OPPONENT) -> FewaState:
    return FewaState(attractions=initial_attractions(payoffs, mode))


def _fewa_step(a_c, a_d, n_prev, opp_coop, opp_total, mine, other, R, S, T, P):
    """Vectorised attraction update. ``mine``/``other`` are 1 for cooperate.

    Returns (a_c, a_d, n, opp_coop, opp_total, phi).
    """
    opp_coop = opp_coop + other
    opp_total = opp_total + 1
    h_c = opp_coop / opp_total
    surprise = (h_c - other) ** 2 + ((1 - h_c) - (1 - other)) ** 2
    phi = 1.0 - surprise / 2.0

    pi_c = np.where(other == 1, R, S)
    pi_d = np.where(other == 1, T, P)
    realized = np.where(mine == 1, pi_c, pi_d)
    # attention: full weight on actions whose payoff would have been at least as good,
    # and on the chosen action in any case
    w_c = np.where((pi_c >= realized) | (mine == 1), 1.0, 0.0)
    w_d = np.where((pi_d >= realized) | (mine == 0), 1.0, 0.0)

    decay = phi * n_prev
    n_new = decay + 1.0
    a_c = (decay * a_c + w_c * pi_c) / n_new
    a_d = (decay * a_d + w_d * pi_d) / n_new
    return a_c, a_d, n_new, opp_coop, opp_total, phi


def fewa_update(state: FewaState, my_action: Action, other_action: Action, payoffs: PayoffTable) -> FewaState:
    a_c, a_d, n, opp_coop, opp_total, _ = _fewa_step(
        np.float64(state.attractions[0]),
        np.float64(state.attractions[1]),
        np.float64(state.experience),
        np.float64(state.opponent_counts[0]),
        np.float64(sum(state.opponent_counts)),
        int(my_action),
        int(other_action),
        payoffs.R,
        payoffs.S,
        payoffs.T,
        payoffs.P,
    )
    return FewaState(
        attractions=(float(a_c), float(a_d)),
        experience=float(n),
        opponent_counts=(float(opp_coop), float(opp_total - opp_coop)),
        last_opponent_action=Action(int(other_action)),
        period=state.period + 1,
    )


def fewa_prob(state: FewaState, params: FewaParams) -> tuple[float, float]:
    gap = state.attractions[0] - state.attractions[1]
    return float(expit(params.lam * gap)), float(expit(-params.lam * gap))


@dataclass(frozen=True)
class BehaviorModel:
    kind: ModelKind
    static_glm: FittedGlm | None = None
    dynamic_glm: FittedGlm | None = None
    baseline_rate: float | None = None
    fewa_params: FewaParams | None = None
    training: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        kind = ModelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        need = {
            ModelKind.FULL: {"static_glm", "dynamic_glm"},
            ModelKind.STATIC_ONLY: {"static_glm"},
            ModelKind.DYNAMIC_ONLY: {"dynamic_glm"},
            ModelKind.BASELINE: {"baseline_rate"},
            ModelKind.FEWA: {"fewa_params"},
        }[kind]
        for name in ("static_glm", "dynamic_glm", "baseline_rate", "fewa_params"):
            present = getattr(self, name) is not None
            if present != (name in need):
                state = "requires" if name in need else "must not carry"
                raise ValueError(f"{kind.value} model {state} {name}")
        if self.static_glm is not None and self.static_glm.schema != STATIC_SCHEMA:
            raise ValueError("static component must use the static schema")
        if self.dynamic_glm is not None and self.dynamic_glm.schema != DYNAMIC_SCHEMA:
            raise ValueError("dynamic component must use the dynamic schema")
        if self.baseline_rate is not None and not 0 <= self.baseline_rate <= 1:
            raise ValueError(f"baseline rate must lie in [0, 1], got {self.baseline_rate}")

    @classmethod
    def full(cls, static_weights, dynamic_weights) -> "BehaviorModel":
        return cls(
            ModelKind.FULL,
            static_glm=FittedGlm.from_weights(STATIC_SCHEMA, static_weights),
            dynamic_glm=FittedGlm.from_weights(DYNAMIC_SCHEMA, dynamic_weights),
        )

    @classmethod
    def baseline(cls, rate: float) -> "BehaviorModel":
        return cls(ModelKind.BASELINE, baseline_rate=float(rate))

    @classmethod
    def fewa(cls, lam: float, mode: InitialAttraction = InitialAttraction.UNIFORM_OPPONENT) -> "BehaviorModel":
        return cls(ModelKind.FEWA, fewa_params=FewaParams(lam, mode))

    @property
    def is_stateful(self) -> bool:
        return self.kind is ModelKind.FEWA

    @property
    def uses_imputation(self) -> bool:
        return self.kind is ModelKind.DYNAMIC_ONLY

    def fingerprint(self) -> str:
        from .io import model_to_json  # local import: io depends on this module

        return hashlib.sha256(model_to_json(self, include_training=False).encode()).hexdigest()[:16]

    def batch_prob(self, game: GameStructure, t: int, my_prev=None, other_prev=None, n: int | None = None) -> np.ndarray:
        """Cooperation probabilities for many agents of one game at period ``t``.

        ``my_prev``/``other_prev`` are 0/1 arrays; at ``t == 1`` they are only read by
        the dynamic-only model, which needs an imputed period-zero outcome.
        """
        if n is None:
            n = 1 if my_prev is None else len(my_prev)
        if self.kind is ModelKind.BASELINE:
            return np.full(n, self.baseline_rate)
        if self.kind is ModelKind.FEWA:
            raise TypeError("fEWA is stateful; simulate it through the simulator")
        if self.kind is ModelKind.STATIC_ONLY or (self.kind is ModelKind.FULL and t == 1):
            p = self.static_glm.predict(static_matrix([game]))[0]
            return np.full(n, p)
        if my_prev is None or other_prev is None:
            raise MissingHistory(f"{self.kind.value} model needs the previous joint outcome at t={t}")
        X = dynamic_matrix([game], np.zeros(n, dtype=np.intp), my_prev, other_prev, np.full(n, t))
        return self.dynamic_glm.predict(X)


def _impute_history(rng, imputation: ImputationMode) -> InteractionHistory:
    if ImputationMode(imputation) is ImputationMode.MUTUAL_COOPERATION:
        return InteractionHistory(Action.COOPERATE, Action.COOPERATE)
    if rng is None:
        raise MissingRng("the dynamic-only model at t=1 draws a period-zero history and needs an rng")
    mine, theirs = rng.random(2) < 0.5
    return InteractionHistory(Action(int(mine)), Action(int(theirs)))


def predict_cooperation(
    model: BehaviorModel,
    game: GameStructure,
    history: InteractionHistory | None = None,
    t: int = 1,
    rng: np.random.Generator | None = None,
    *,
    imputation: ImputationMode = ImputationMode.BERNOULLI_HALF,
    fewa_state: FewaState | None = None,
) -> float:
    """Probability that a player cooperates at period ``t`` of ``game``.

    For fEWA pass the learner's ``fewa_state`` (the state after t-1 periods);
    at t=1 the initial state is used when none is given.
    """
    if t < 1:
        raise ValueError(f"period must be >= 1, got {t}")
    kind = model.kind
    if kind is ModelKind.BASELINE:
        return float(model.baseline_rate)
    if kind is ModelKind.STATIC_ONLY or (kind is ModelKind.FULL and t == 1):
        return predict_prob(model.static_glm, static_features(game))
    if kind is ModelKind.FEWA:
        if fewa_state is None:
            if t > 1:
                raise MissingHistory("fEWA predictions after period 1 need the learner's state")
            fewa_state = initial_fewa_state(game.unit_payoffs, model.fewa_params.initial_attraction_mode)
        return fewa_prob(fewa_state, model.fewa_params)[0]
    if history is None:
        if t > 1:
            raise MissingHistory(f"{kind.value} model needs the previous joint outcome at t={t}")
        history = _impute_history(rng, imputation)
    return predict_prob(model.dynamic_glm, dynamic_features(game, history, t))


# --- fitting -----------------------------------------------------------------


def _structure_lookup(structures: Sequence[GameStructure], df: pd.DataFrame) -> np.ndarray:
    pos = {s.id: i for i, s in enumerate(structures)}
    try:
        return df["structure_id"].map(pos).to_numpy(dtype=np.intp)
    except (ValueError, TypeError) as exc:
        raise EmptyTrainingSlice("decisions reference structures outside the training set") from exc


def static_dataset(structures: Sequence[GameStructure], decisions: pd.DataFrame) -> Dataset2D:
    rows = decisions[decisions["period"] == 1]
    if rows.empty:
        raise EmptyTrainingSlice("no period-1 decisions to fit the static component")
    idx = _structure_lookup(structures, rows)
    X = static_matrix(structures)[idx]
    return Dataset2D(X, rows["action"].to_numpy(dtype=float), STATIC_SCHEMA)


def dynamic_dataset(structures: Sequence[GameStructure], decisions: pd.DataFrame) -> Dataset2D:
    lagged = with_lags(decisions)
    rows = lagged[lagged["period"] > 1]
    if rows.empty:
        raise EmptyTrainingSlice("no decisions after period 1 to fit the dynamic component")
    idx = _structure_lookup(structures, rows)
    X = dynamic_matrix(
        structures,
        idx,
        rows["my_prev"].to_numpy(),
        rows["other_prev"].to_numpy(),
        rows["period"].to_numpy(),
    )
    return Dataset2D(X, rows["action"].to_numpy(dtype=float), DYNAMIC_SCHEMA)


def fewa_attraction_gaps(
    structures: Sequence[GameStructure],
    decisions: pd.DataFrame,
    mode: InitialAttraction = InitialAttraction.UNIFORM_OPPONENT,
) -> pd.DataFrame:
    """Run fEWA learners along the observed histories.

    Returns the sorted decisions with a ``gap`` column: A_C - A_D held by the
    player just before choosing at that period (the initial gap at period 1).
    The response sensitivity does not enter the attraction dynamics, so these
    gaps serve every lambda.
    """
    frame, mine, theirs, lengths = padded_sequences(decisions)
    if frame.empty:
        frame["gap"] = np.array([], dtype=float)
        return frame
    first = frame.groupby("seq", sort=True).head(1)
    sidx = _structure_lookup(structures, first)
    pay = [structures[i].unit_payoffs for i in sidx]
    R = np.array([p.R for p in pay])
    S = np.array([p.S for p in pay])
    T = np.array([p.T for p in pay])
    P = np.array([p.P for p in pay])
    init = np.array([initial_attractions(p, mode) for p in pay]).reshape(-1, 2)

    n_seq, t_max = mine.shape
    gaps = np.zeros((n_seq, t_max))
    a_c, a_d = init[:, 0].copy(), init[:, 1].copy()
    n = np.ones(n_seq)
    opp_c = np.zeros(n_seq)
    opp_n = np.zeros(n_seq)
    for t in range(t_max):
        gaps[:, t] = a_c - a_d
        live = t < lengths
        if not live.any():
            break
        m = np.where(live, mine[:, t], 0).astype(float)
        o = np.where(live, theirs[:, t], 0).astype(float)
        new = _fewa_step(a_c, a_d, n, opp_c, opp_n, m, o, R, S, T, P)
        a_c = np.where(live, new[0], a_c)
        a_d = np.where(live, new[1], a_d)
        n = np.where(live, new[2], n)
        opp_c = np.where(live, new[3], opp_c)
        opp_n = np.where(live, new[4], opp_n)
    frame["gap"] = gaps[frame["seq"].to_numpy(), frame["period"].to_numpy() - 1]
    return frame


def _response_loglik(lam: float, gap: np.ndarray, y: np.ndarray) -> float:
    z = lam * gap
    return float(-np.sum(np.where(y == 1, np.logaddexp(0.0, -z), np.logaddexp(0.0, z))))


def calibrate_lambda(
    structures: Sequence[GameStructure],
    decisions: pd.DataFrame,
    grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    mode: InitialAttraction = InitialAttraction.UNIFORM_OPPONENT,
) -> float:
    """Grid value maximising the log-likelihood of post-first-period choices.

    Ties go to the smaller value.
    """
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise EmptyGrid("lambda grid is empty")
    if grid[0] < 0:
        raise ValueError("lambda grid values must be >= 0")
    if len(grid) == 1:
        return grid[0]
    frame = fewa_attraction_gaps(structures, decisions, mode)
    later = frame[frame["period"] > 1]
    if later.empty:
        raise EmptyTrainingSlice("no decisions after period 1 to calibrate lambda")
    gap = later["gap"].to_numpy()
    y = later["action"].to_numpy()
    best, best_ll = grid[0], _response_loglik(grid[0], gap, y)
    for lam in grid[1:]:
        ll = _response_loglik(lam, gap, y)
        if ll > best_ll:
            best, best_ll = lam, ll
    return best


def fit_model(
    kind: ModelKind | str,
    structures: Sequence[GameStructure],
    decisions: pd.DataFrame,
    *,
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    fewa_mode: InitialAttraction = InitialAttraction.UNIFORM_OPPONENT,
    seed: int | None = None,
    aliased: str = "raise",
) -> BehaviorModel:
    """Calibrate a model of ``kind`` on the decisions of ``structures``.

    ``aliased`` is passed to :func:`fit_logistic`; cross-validation uses "drop"
    because small training sets can lack variation in a rare indicator.
    """
    kind = ModelKind(kind)
    structures = list(structures)
    known = {s.id for s in structures}
    decisions = decisions[decisions["structure_id"].isin(known)]
    if decisions.empty:
        raise EmptyTrainingSlice("no training decisions")
    training = {
        "structure_ids": sorted(set(decisions["structure_id"])),
        "n_t1": int((decisions["period"] == 1).sum()),
        "n_tgt1": int((decisions["period"] > 1).sum()),
        "seed": seed,
    }
    static_glm = dynamic_glm = None
    if kind in (ModelKind.FULL, ModelKind.STATIC_ONLY):
        static_glm = fit_logistic(static_dataset(structures, decisions), aliased=aliased)
    if kind in (ModelKind.FULL, ModelKind.DYNAMIC_ONLY):
        dynamic_glm = fit_logistic(dynamic_dataset(structures, decisions), aliased=aliased)
    if kind is ModelKind.BASELINE:
        rate = float(decisions["action"].mean())
        return BehaviorModel(kind, baseline_rate=rate, training=training)
    if kind is ModelKind.FEWA:
        lam = calibrate_lambda(structures, decisions, lambda_grid, fewa_mode)
        return BehaviorModel(kind, fewa_params=FewaParams(lam, fewa_mode), training=training)
    return BehaviorModel(kind, static_glm=static_glm, dynamic_glm=dynamic_glm, training=training)

