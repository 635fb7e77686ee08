"""Synthetic decision data drawn from a known behaviour model.

The original experimental decisions are not bundled, so calibration and
validation checks run against data simulated from a truth model whose weights
are known exactly.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
import pandas as pd

from .core import GameStructure
from .behavior import BehaviorModel
from .decisions import DECISION_COLUMNS, normalize_frame
from .simulator import SimulationConfig, derive_seed, horizon_for, simulate_traces

# Signs of the design levers:
# delta, r2, infinity and r1 raise cooperation; error and risk lower it.
TRUTH_STATIC_WEIGHTS = np.array(
    [
        -3.4,  # intercept
        1.0,  # r1
        1.5,  # r2
        -0.8,  # risk
        -3.0,  # error
        1.0,  # delta
        0.8,  # r1*delta
        1.2,  # r2*delta
        0.4,  # infinity
        0.3,  # continuous
    ]
)
TRUTH_DYNAMIC_WEIGHTS = np.array(
    [
        -4.8,  # intercept
        0.8,  # r1
        1.2,  # r2
        -0.5,  # risk
        -2.0,  # error
        1.2,  # delta
        0.5,  # r1*delta
        0.8,  # r2*delta
        0.3,  # infinity
        0.2,  # continuous
        0.3,  # delta*infinity
        3.0,  # my_decision_prev
        1.5,  # other_decision_prev
        -1.5,  # error*other_decision_prev
        -0.05,  # t
    ]
)


def default_truth_model() -> BehaviorModel:
    return BehaviorModel.full(TRUTH_STATIC_WEIGHTS, TRUTH_DYNAMIC_WEIGHTS)


def traces_to_frame(structure_id: str, implemented: np.ndarray) -> pd.DataFrame:
    """Both players' decision rows from implemented actions of shape (n, horizon, 2)."""
    n, horizon, _ = implemented.shape
    inter = np.repeat(np.arange(n), horizon * 2)
    period = np.tile(np.repeat(np.arange(1, horizon + 1), 2), n)
    player = np.tile(np.array([0, 1]), n * horizon)
    action = implemented.reshape(-1)
    partner = implemented[:, :, ::-1].reshape(-1)
    return pd.DataFrame(
        {
            "structure_id": structure_id,
            "interaction_id": [f"{structure_id}-{i}" for i in inter] if n else [],
            "player_id": np.where(player == 0, "1", "2"),
            "period": period,
            "action": action,
            "partner_action": partner,
        }
    )


def generate_synthetic(
    truth_model,
    structures: Sequence[GameStructure],
    interactions_per_structure: int,
    seed: int,
    config: SimulationConfig | None = None,
) -> pd.DataFrame:
    """Decisions of ``interactions_per_structure`` simulated pairs in every structure.

    Structure ``k`` of the list plays from the child seed ``derive_seed(seed, k)``;
    other simulation settings (noise mode, horizon) come from ``config``.
    """
    base = config or SimulationConfig()
    frames = []
    for k, game in enumerate(structures):
        cfg = SimulationConfig(
            n_interactions=interactions_per_structure,
            seed=derive_seed(seed, k),
            horizon_override=base.horizon_override,
            noise_mode=base.noise_mode,
            imputation_mode=base.imputation_mode,
        )
        _, implemented = simulate_traces(truth_model, game, cfg)
        frames.append(traces_to_frame(game.id, implemented))
    if not frames:
        return normalize_frame(pd.DataFrame({c: [] for c in DECISION_COLUMNS}))
    return normalize_frame(pd.concat(frames, ignore_index=True))


def interactions_for_target(structures: Sequence[GameStructure], target_decisions: int) -> int:
    """Interactions per structure giving roughly ``target_decisions`` rows overall."""
    per_interaction = sum(2 * horizon_for(g) for g in structures)
    return max(1, int(round(target_decisions / per_interaction)))


def sign_pattern_truth_model() -> BehaviorModel:
    """Truth model for design-space sweeps.

    Same signs as :func:`default_truth_model`, but cooperation sits above one
    half over most of the design space and the behavioural error weight is
    strong. Execution flips pull cooperation toward one half, so with a low
    baseline they would mask the negative error effect.
    """
    static = TRUTH_STATIC_WEIGHTS.copy()
    dynamic = TRUTH_DYNAMIC_WEIGHTS.copy()
    static[0] += 1.5
    dynamic[0] += 1.5
    static[4] = dynamic[4] = -5.0
    return BehaviorModel.full(static, dynamic)
