import json

import numpy as np
import pytest
from scipy import stats

from coopredict.behavior import BehaviorModel, ImputationMode
from coopredict.core import GameStructure
from coopredict.simulator import (
    ConstantPolicy,
    InertiaPolicy,
    NoiseMode,
    SimulationConfig,
    derive_seed,
    horizon_for,
    read_results_csv,
    read_simulation_csv,
    results_to_csv,
    simulate_interaction,
    simulate_structure,
    simulate_traces,
)


def game(**kw):
    base = dict(id="g", error=0.0, delta=0.9, infinite=True, continuous=False, risk=False, r1=0.3, r2=0.7)
    base.update(kw)
    return GameStructure(**base)


@pytest.mark.parametrize(
    "infinite,delta,expected",
    [(True, 0.5, 7), (True, 0.9, 8), (True, 0.75, 8), (False, 0.5, 2), (False, 0.75, 4), (False, 0.9, 8), (False, 0.875, 8)],
)
def test_horizon_rule(infinite, delta, expected):
    assert horizon_for(game(infinite=infinite, delta=delta)) == expected


def test_horizon_override():
    assert horizon_for(game(), SimulationConfig(horizon_override=3)) == 3


def test_fixture_horizon_total(structures):
    # one point per (structure, period) under the literal rule
    assert sum(horizon_for(g) for g in structures) == 215


def test_zero_first_period_override():
    res = simulate_structure(ConstantPolicy(0.9), game(error=0.3), SimulationConfig(n_interactions=500, first_period_prob_override=0.0))
    assert res.per_period_cooperation[0] == 0.0


def test_no_error_means_no_flips(truth):
    intended, implemented = simulate_traces(truth, game(error=0.0), SimulationConfig(n_interactions=300, seed=5))
    np.testing.assert_array_equal(intended, implemented)


def test_no_flip_mode_keeps_intended(truth):
    cfg = SimulationConfig(n_interactions=300, seed=5, noise_mode=NoiseMode.NO_FLIP)
    intended, implemented = simulate_traces(truth, game(error=0.4), cfg)
    np.testing.assert_array_equal(intended, implemented)


def test_flip_arithmetic():
    n = 40_000
    res = simulate_structure(ConstantPolicy(0.3), game(error=0.5), SimulationConfig(n_interactions=n, seed=3))
    band = 3 * np.sqrt(0.25 / (2 * n))
    assert np.all(np.abs(res.per_period_cooperation - 0.5) < band)


def test_constant_policy_binomial_band():
    n = 40_000
    res = simulate_structure(ConstantPolicy(0.6), game(), SimulationConfig(n_interactions=n, seed=1))
    assert np.all(np.abs(res.per_period_cooperation - 0.6) < 3 * np.sqrt(0.24 / (2 * n)))


def test_constant_policy_periods_homogeneous():
    res = simulate_structure(ConstantPolicy(0.6), game(), SimulationConfig(n_interactions=5000, seed=2))
    coop = res.cooperative_counts
    table = np.vstack([coop, res.actions_per_period - coop])
    assert stats.chi2_contingency(table)[1] > 0.001


def test_pure_inertia_with_override():
    res = simulate_structure(InertiaPolicy(0.2), game(), SimulationConfig(n_interactions=200, first_period_prob_override=1.0))
    np.testing.assert_array_equal(res.per_period_cooperation, np.ones(8))


def test_bitwise_reproducible(truth):
    cfg = SimulationConfig(n_interactions=3000, seed=77)
    a = simulate_structure(truth, game(error=0.1), cfg)
    b = simulate_structure(truth, game(error=0.1), cfg)
    assert a.per_period_cooperation.tobytes() == b.per_period_cooperation.tobytes()
    assert a == b


def test_thread_and_chunk_independence(truth):
    cfg = SimulationConfig(n_interactions=2500, seed=9)
    g = game(error=0.125)
    ref = simulate_structure(truth, g, cfg, threads=1, chunk_size=4096)
    for threads, chunk in ((4, 100), (3, 777), (1, 1)):
        other = simulate_structure(truth, g, cfg, threads=threads, chunk_size=chunk)
        assert other.per_period_cooperation.tobytes() == ref.per_period_cooperation.tobytes()


def test_interaction_prefix_is_stable(truth):
    # the first interactions do not change when more are simulated
    g = game(error=0.1)
    small = simulate_traces(truth, g, SimulationConfig(n_interactions=10, seed=4))[1]
    large = simulate_traces(truth, g, SimulationConfig(n_interactions=50, seed=4))[1]
    np.testing.assert_array_equal(small, large[:10])


def test_single_interaction_trace(truth):
    trace = simulate_interaction(truth, game(delta=0.75, infinite=False), SimulationConfig(), np.random.default_rng(0))
    assert trace.implemented.shape == (4, 2)


def test_monotone_in_first_period(truth):
    g = game(error=0.0625)
    means = [
        simulate_structure(truth, g, SimulationConfig(n_interactions=20_000, seed=8, first_period_prob_override=p)).mean_after_first()
        for p in (0.0, 0.5, 1.0)
    ]
    assert means[0] < means[1] < means[2]


def test_dynamic_only_period_zero_is_mirrored(truth):
    model = BehaviorModel(truth.kind.DYNAMIC_ONLY, dynamic_glm=truth.dynamic_glm)
    cfg = SimulationConfig(n_interactions=1000, seed=6, imputation_mode=ImputationMode.MUTUAL_COOPERATION)
    a = simulate_structure(model, game(), cfg)
    b = simulate_structure(model, game(), SimulationConfig(n_interactions=1000, seed=6))
    assert a.per_period_cooperation[0] > b.per_period_cooperation[0]


def test_fewa_simulates(structures):
    res = simulate_structure(BehaviorModel.fewa(5.0), structures[0], SimulationConfig(n_interactions=500))
    assert np.all((res.per_period_cooperation >= 0) & (res.per_period_cooperation <= 1))


def test_mean_matches_periods(truth):
    res = simulate_structure(truth, game(), SimulationConfig(n_interactions=100))
    assert res.mean_cooperation == pytest.approx(res.per_period_cooperation.mean(), abs=1e-15)


def test_csv_and_json_roundtrip(truth):
    res = simulate_structure(truth, game(), SimulationConfig(n_interactions=123, seed=2))
    rates, n = read_simulation_csv(res.to_csv())
    assert rates.tobytes() == res.per_period_cooperation.tobytes() and n == 246
    doc = json.loads(res.to_json())
    assert doc["metadata"]["seed"] == 2 and doc["metadata"]["config"]["noise_mode"] == "flip_implemented"
    back = read_results_csv(results_to_csv([res]))
    assert back["g"].tobytes() == res.per_period_cooperation.tobytes()


def test_derive_seed_distinct():
    seeds = {derive_seed(1, k) for k in range(100)}
    assert len(seeds) == 100
    assert derive_seed(1, 3) == derive_seed(1, 3)


@pytest.mark.parametrize("kw", [dict(n_interactions=0), dict(first_period_prob_override=1.5), dict(horizon_override=0), dict(seed=-1)])
def test_config_domains(kw):
    with pytest.raises(ValueError):
        SimulationConfig(**kw)
