"""Regression features for first-period (static) and later-period (dynamic) play.

The column arithmetic lives in :func:`structure_columns` and
:func:`history_columns`; the single-row helpers and the batch matrix builders
both go through them, so the two paths cannot drift apart.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .core import GameStructure, InteractionHistory
from .errors import MissingHistory, SchemaMismatch

SCHEMA_VERSION = "coopredict.features/1"


class SchemaKind(str, Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class FeatureSchema:
    kind: SchemaKind
    names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


STATIC_NAMES = (
    "intercept",
    "r1",
    "r2",
    "risk",
    "error",
    "delta",
    "r1*delta",
    "r2*delta",
    "infinity",
    "continuous",
)
DYNAMIC_NAMES = STATIC_NAMES + (
    "delta*infinity",
    "my_decision_prev",
    "other_decision_prev",
    "error*other_decision_prev",
    "t",
)

STATIC_SCHEMA = FeatureSchema(SchemaKind.STATIC, STATIC_NAMES)
DYNAMIC_SCHEMA = FeatureSchema(SchemaKind.DYNAMIC, DYNAMIC_NAMES)


def schema_for(kind: SchemaKind | str) -> FeatureSchema:
    kind = SchemaKind(kind)
    return STATIC_SCHEMA if kind is SchemaKind.STATIC else DYNAMIC_SCHEMA


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.names),):
            raise SchemaMismatch(f"{len(self.names)} names but values of shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("feature values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))


def structure_columns(r1, r2, risk, error, delta, infinite, continuous) -> list:
    """Static columns in schema order. Accepts scalars or equal-length arrays."""
    one = np.ones_like(np.asarray(r1, dtype=float))
    return [
        one,
        r1,
        r2,
        risk,
        error,
        delta,
        r1 * delta,
        r2 * delta,
        infinite,
        continuous,
    ]


def history_columns(error, delta, infinite, my_prev, other_prev, t) -> list:
    """The five columns appended for the dynamic schema."""
    return [
        delta * infinite,
        my_prev,
        other_prev,
        error * other_prev,
        t,
    ]


def _game_values(game: GameStructure) -> tuple:
    return (
        float(game.r1),
        float(game.r2),
        float(game.risk),
        float(game.error),
        float(game.delta),
        float(game.infinite),
        float(game.continuous),
    )


def static_features(game: GameStructure) -> FeatureVector:
    values = np.array(structure_columns(*_game_values(game)), dtype=float)
    return FeatureVector(STATIC_NAMES, values)


def dynamic_features(
    game: GameStructure, history: InteractionHistory | None, t: int
) -> FeatureVector:
    """Dynamic feature row for period ``t``.

    ``history`` is the previous period's joint outcome. At ``t == 1`` a caller may
    pass an imputed period-zero history; at any period a missing history raises.
    """
    if history is None:
        raise MissingHistory(f"dynamic features at t={t} need the previous joint outcome")
    if t < 1:
        raise ValueError(f"period must be >= 1, got {t}")
    r1, r2, risk, error, delta, inf, cont = _game_values(game)
    static = structure_columns(r1, r2, risk, error, delta, inf, cont)
    extra = history_columns(error, delta, inf, float(history.my_prev), float(history.other_prev), float(t))
    return FeatureVector(DYNAMIC_NAMES, np.array(static + extra, dtype=float))


def structure_table(games: Sequence[GameStructure]) -> dict[str, np.ndarray]:
    """Column arrays of the seven structural variables, one entry per game."""
    cols = np.array([_game_values(g) for g in games], dtype=float).reshape(-1, 7)
    keys = ("r1", "r2", "risk", "error", "delta", "infinite", "continuous")
    return {k: cols[:, i] for i, k in enumerate(keys)}


def static_matrix(games: Sequence[GameStructure]) -> np.ndarray:
    s = structure_table(games)
    cols = structure_columns(
        s["r1"], s["r2"], s["risk"], s["error"], s["delta"], s["infinite"], s["continuous"]
    )
    return np.column_stack(cols)


def dynamic_matrix(
    games: Sequence[GameStructure],
    game_index: np.ndarray,
    my_prev: np.ndarray,
    other_prev: np.ndarray,
    t: np.ndarray,
) -> np.ndarray:
    """Dynamic design matrix; row i uses ``games[game_index[i]]``."""
    s = {k: v[game_index] for k, v in structure_table(games).items()}
    my_prev = np.asarray(my_prev, dtype=float)
    other_prev = np.asarray(other_prev, dtype=float)
    t = np.asarray(t, dtype=float)
    cols = structure_columns(
        s["r1"], s["r2"], s["risk"], s["error"], s["delta"], s["infinite"], s["continuous"]
    ) + history_columns(s["error"], s["delta"], s["infinite"], my_prev, other_prev, t)
    return np.column_stack(cols)
