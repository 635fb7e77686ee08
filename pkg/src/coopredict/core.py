"""Domain types for repeated Prisoner's Dilemma designs, plus payoff arithmetic."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

from .errors import (
    DegenerateScale,
    DomainError,
    InfeasibleRatios,
    InvalidLength,
    MixedInequalityViolation,
    OrderingViolation,
)


class Action(IntEnum):
    DEFECT = 0
    COOPERATE = 1

    @property
    def symbol(self) -> str:
        return "C" if self is Action.COOPERATE else "D"

    @classmethod
    def from_symbol(cls, symbol: str) -> "Action":
        if symbol == "C":
            return cls.COOPERATE
        if symbol == "D":
            return cls.DEFECT
        raise ValueError(f"action must be 'C' or 'D', got {symbol!r}")


C = Action.COOPERATE
D = Action.DEFECT


@dataclass(frozen=True)
class PayoffTable:
    """Symmetric 2x2 stage-game payoffs seen by the row player."""

    R: float
    S: float
    T: float
    P: float

    def payoff(self, mine: int, other: int) -> float:
        if mine:
            return self.R if other else self.S
        return self.T if other else self.P

    def scaled(self, factor: float, shift: float = 0.0) -> "PayoffTable":
        return PayoffTable(
            self.R * factor + shift,
            self.S * factor + shift,
            self.T * factor + shift,
            self.P * factor + shift,
        )


def validate_payoffs(table: PayoffTable) -> PayoffTable:
    """Return ``table`` unchanged if it is a repeated Prisoner's Dilemma.

    Requires T > R > P > S and R > (S + T) / 2.
    """
    R, S, T, P = table.R, table.S, table.T, table.P
    if not all(math.isfinite(v) for v in (R, S, T, P)):
        raise DomainError(f"payoffs must be finite: {table}")
    if not T > R:
        raise OrderingViolation(f"T > R fails (T={T}, R={R})")
    if not R > P:
        raise OrderingViolation(f"R > P fails (R={R}, P={P})")
    if not P > S:
        raise OrderingViolation(f"P > S fails (P={P}, S={S})")
    if not R > (S + T) / 2:
        raise MixedInequalityViolation(f"R > (S+T)/2 fails (R={R}, (S+T)/2={(S + T) / 2})")
    return table


def normalize_payoffs(table: PayoffTable) -> tuple[float, float]:
    """Map payoffs to the scale-free indices ``(r1, r2)``.

    r1 = (R - P) / (T - S) and r2 = (R - S) / (T - S).
    """
    scale = table.T - table.S
    if scale == 0:
        raise DegenerateScale("T == S; payoff indices undefined")
    return (table.R - table.P) / scale, (table.R - table.S) / scale


def reconstruct_unit_payoffs(r1: float, r2: float, check: bool = True) -> PayoffTable:
    """Rebuild payoffs from ``(r1, r2)`` in the gauge S=0, T=1.

    With ``check=False`` the ratios are only required to satisfy 0 < r1 < r2 < 1,
    which admits designs that are not strict Prisoner's Dilemmas (r2 <= 0.5);
    the sensitivity sampler can produce those.
    """
    if not (0 < r1 < r2 < 1):
        raise InfeasibleRatios(f"need 0 < r1 < r2 < 1, got r1={r1}, r2={r2}")
    table = PayoffTable(R=r2, S=0.0, T=1.0, P=r2 - r1)
    if check:
        if not r2 > 0.5:
            raise InfeasibleRatios(f"r2={r2} <= 0.5 implies R <= (S+T)/2")
        try:
            validate_payoffs(table)
        except (OrderingViolation, MixedInequalityViolation) as exc:
            raise InfeasibleRatios(str(exc)) from exc
    return table


def delta_from_expected_length(length: float) -> float:
    """Continuation probability whose geometric mean length is ``length``."""
    if not length > 1 or not math.isfinite(length):
        raise InvalidLength(f"expected length must be a finite number > 1, got {length}")
    return 1.0 - 1.0 / length


def expected_length(delta: float) -> float:
    return 1.0 / (1.0 - delta)


@dataclass(frozen=True)
class GameStructure:
    """One experimental design, described by nine structural variables."""

    id: str
    error: float
    delta: float
    infinite: bool
    continuous: bool
    risk: bool
    r1: float
    r2: float
    dataset: str = ""
    observed_cooperation: float | None = None

    def __post_init__(self):
        for name in ("error", "delta", "r1", "r2"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise DomainError(f"structure {self.id}: {name} must be a finite number, got {value!r}")
        if not 0 <= self.error < 1:
            raise DomainError(f"structure {self.id}: error must lie in [0, 1), got {self.error}")
        if not 0 < self.delta < 1:
            raise DomainError(f"structure {self.id}: delta must lie in (0, 1), got {self.delta}")
        if not (0 < self.r1 < 1 and 0 < self.r2 < 1):
            raise DomainError(f"structure {self.id}: r1 and r2 must lie in (0, 1)")
        if not self.r1 < self.r2:
            raise DomainError(
                f"structure {self.id}: invariant r1 < r2 violated (r1={self.r1}, r2={self.r2})"
            )
        obs = self.observed_cooperation
        if obs is not None and not (math.isfinite(obs) and 0 <= obs <= 1):
            raise DomainError(f"structure {self.id}: cooperation must lie in [0, 1], got {obs}")
        # normalise flag types so equality and hashing behave
        for name in ("infinite", "continuous", "risk"):
            object.__setattr__(self, name, bool(getattr(self, name)))

    @classmethod
    def from_payoffs(cls, id: str, table: PayoffTable, **kwargs) -> "GameStructure":
        r1, r2 = normalize_payoffs(validate_payoffs(table))
        return cls(id=id, r1=r1, r2=r2, **kwargs)

    @property
    def unit_payoffs(self) -> PayoffTable:
        return reconstruct_unit_payoffs(self.r1, self.r2, check=False)


@dataclass(frozen=True)
class InteractionHistory:
    """The joint outcome of the previous period, from the focal player's side."""

    my_prev: Action
    other_prev: Action

    def mirrored(self) -> "InteractionHistory":
        return InteractionHistory(self.other_prev, self.my_prev)


@dataclass(frozen=True)
class DecisionRecord:
    structure_id: str
    interaction_id: str
    player_id: str
    period: int
    action: Action
    partner_action: Action

    def __post_init__(self):
        if self.period < 1:
            raise DomainError(f"period must be >= 1, got {self.period}")
        object.__setattr__(self, "action", Action(self.action))
        object.__setattr__(self, "partner_action", Action(self.partner_action))
