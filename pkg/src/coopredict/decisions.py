"""Columnar decision tables.

Decisions are held as a pandas DataFrame with the DecisionsFile columns. Actions
are stored as integers (1 = cooperate, 0 = defect); the CSV layer converts to
and from "C"/"D".
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .core import Action, DecisionRecord, GameStructure
from .errors import DomainError

DECISION_COLUMNS = ["structure_id", "interaction_id", "player_id", "period", "action", "partner_action"]
SEQUENCE_KEYS = ["structure_id", "interaction_id", "player_id"]


def empty_frame() -> pd.DataFrame:
    return normalize_frame(pd.DataFrame({c: [] for c in DECISION_COLUMNS}))


def normalize_frame(df: pd.DataFrame) -> pd.DataFrame:
    missing = [c for c in DECISION_COLUMNS if c not in df.columns]
    if missing:
        raise DomainError(f"decision table lacks columns {missing}")
    out = pd.DataFrame(
        {
            "structure_id": df["structure_id"].astype(str).to_numpy(),
            "interaction_id": df["interaction_id"].astype(str).to_numpy(),
            "player_id": df["player_id"].astype(str).to_numpy(),
            "period": df["period"].astype(np.int64).to_numpy(),
            "action": df["action"].astype(np.int8).to_numpy(),
            "partner_action": df["partner_action"].astype(np.int8).to_numpy(),
        }
    )
    return out


def records_to_frame(records: Iterable[DecisionRecord]) -> pd.DataFrame:
    rows = [
        (r.structure_id, r.interaction_id, r.player_id, r.period, int(r.action), int(r.partner_action))
        for r in records
    ]
    if not rows:
        return empty_frame()
    return normalize_frame(pd.DataFrame(rows, columns=DECISION_COLUMNS))


def frame_to_records(df: pd.DataFrame) -> list[DecisionRecord]:
    return [
        DecisionRecord(s, i, p, int(t), Action(int(a)), Action(int(b)))
        for s, i, p, t, a, b in df[DECISION_COLUMNS].itertuples(index=False, name=None)
    ]


def sort_frame(df: pd.DataFrame) -> pd.DataFrame:
    return df.sort_values(SEQUENCE_KEYS + ["period"], kind="stable").reset_index(drop=True)


def with_lags(df: pd.DataFrame) -> pd.DataFrame:
    """Sorted copy with ``my_prev`` / ``other_prev`` from the previous period (-1 at period 1)."""
    out = sort_frame(df)
    grouped = out.groupby(SEQUENCE_KEYS, sort=False)
    out["my_prev"] = grouped["action"].shift(1).fillna(-1).astype(np.int8)
    out["other_prev"] = grouped["partner_action"].shift(1).fillna(-1).astype(np.int8)
    return out


def validate_decisions(df: pd.DataFrame, structures: Sequence[GameStructure] | None = None) -> None:
    """Check referential integrity, contiguous periods and mirrored partner actions."""
    if df.empty:
        return
    if not set(np.unique(df["action"])) <= {0, 1} or not set(np.unique(df["partner_action"])) <= {0, 1}:
        raise DomainError("actions must be encoded 0/1")
    if (df["period"] < 1).any():
        raise DomainError("periods must be >= 1")
    if structures is not None:
        known = {s.id for s in structures}
        unknown = sorted(set(df["structure_id"]) - known)
        if unknown:
            raise DomainError(f"decisions reference unknown structures {unknown[:5]}")
    if df.duplicated(SEQUENCE_KEYS + ["period"]).any():
        raise DomainError("duplicate (structure, interaction, player, period) rows")

    stats = df.groupby(SEQUENCE_KEYS, sort=False)["period"].agg(["min", "max", "count"])
    bad = stats[(stats["min"] != 1) | (stats["max"] != stats["count"])]
    if len(bad):
        key = bad.index[0]
        raise DomainError(f"periods of sequence {key} are not a contiguous 1..T run")

    # both players' views of each period must mirror each other
    keys = ["structure_id", "interaction_id", "period"]
    ordered = df.sort_values(keys + ["player_id"], kind="stable")
    size = ordered.groupby(keys, sort=False)["action"].transform("size").to_numpy()
    if (size > 2).any():
        raise DomainError("more than two players in one interaction period")
    rank = ordered.groupby(keys, sort=False).cumcount().to_numpy()
    first = ordered[(size == 2) & (rank == 0)]
    second = ordered[(size == 2) & (rank == 1)]
    if not (
        np.array_equal(first["action"].to_numpy(), second["partner_action"].to_numpy())
        and np.array_equal(first["partner_action"].to_numpy(), second["action"].to_numpy())
    ):
        raise DomainError("actions of the two players in an interaction are not mirrored")


def padded_sequences(df: pd.DataFrame) -> tuple[pd.DataFrame, np.ndarray, np.ndarray, np.ndarray]:
    """Arrange decisions as one row per (structure, interaction, player).

    Returns the sorted frame (with a ``seq`` column), and matrices of own and
    partner actions of shape (n_sequences, max_period) padded with -1, plus the
    sequence lengths.
    """
    out = sort_frame(df)
    seq = out.groupby(SEQUENCE_KEYS, sort=False).ngroup().to_numpy()
    out["seq"] = seq
    n_seq = int(seq.max()) + 1 if len(seq) else 0
    t_max = int(out["period"].max()) if len(out) else 0
    mine = np.full((n_seq, t_max), -1, dtype=np.int8)
    theirs = np.full((n_seq, t_max), -1, dtype=np.int8)
    col = out["period"].to_numpy() - 1
    mine[seq, col] = out["action"].to_numpy()
    theirs[seq, col] = out["partner_action"].to_numpy()
    lengths = np.bincount(seq, minlength=n_seq)
    return out, mine, theirs, lengths


def observed_series(df: pd.DataFrame, horizon: int | None = None) -> pd.Series:
    """Mean cooperation per period, optionally truncated to ``horizon``."""
    sub = df if horizon is None else df[df["period"] <= horizon]
    return sub.groupby("period")["action"].mean().sort_index()
