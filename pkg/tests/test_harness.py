"""Episode runner, experiment matrix, aggregation and throughput"""
import math

import numpy as np
import pytest

from src.actions import decode_action
from src.agents import make_policy, scripted_policies
from src.ctgmarl import PolicyParams
from src.exceptions import HarnessError, PolicyError
from src.harness import RunConfig, episode_seed, measure_sps, run_episode, run_matrix, tail_median
from src.scenarios import single_node_scenario
from src.schemas import EpisodeMetrics, HypervisorMode
from src.simulator import AgentObservation, Simulator
import config


@pytest.fixture
def short(small_benchmark):
    return small_benchmark.model_copy(update={"horizon": 60.0})


def test_red_chain_reaches_the_vault(benchmark):
    metrics = run_episode(benchmark, "passive", "red-chain", seed=0)
    assert metrics.successful_exploits >= 1
    assert metrics.vault_compromised
    assert metrics.steps > 0
    assert metrics.final_tick == pytest.approx(benchmark.horizon)


def test_isolation_sweep_pays_for_availability(small_benchmark):
    scenario = small_benchmark.model_copy(update={"horizon": 200.0})
    metrics = run_episode(scenario, "blue-isolate-sweep", "passive", seed=0)
    assert metrics.blue_reward / metrics.steps < 1.0


def test_zero_horizon(small_benchmark):
    metrics = run_episode(small_benchmark.model_copy(update={"horizon": 0.0}), "random", "random", 0)
    assert metrics.steps == 0
    assert metrics.blue_reward == 0.0


def test_episode_seeds():
    assert episode_seed(5, 0) == 5
    assert episode_seed(5, 1) == episode_seed(5, 1) != episode_seed(5, 2)


def test_matrix_rows_and_outputs(short, tmp_path):
    runs = [RunConfig(name="passive/red-chain", scenario=short,
                      blue_policy="passive", red_policy="red-chain")]
    summary = run_matrix(runs, list(range(10)), workers=1, out_dir=tmp_path)
    assert len(summary.rows) == 10
    assert list(summary.aggregate) == ["passive/red-chain"]
    assert summary.failures == []
    for name in ("episodes.jsonl", "failures.jsonl", "aggregate.json", "summary.txt"):
        assert (tmp_path / name).exists()
    assert len((tmp_path / "episodes.jsonl").read_text().splitlines()) == 10


def test_matrix_is_deterministic_per_seed(short):
    runs = [RunConfig(name="rand", scenario=short, blue_policy="random", red_policy="random")]
    summary = run_matrix(runs, [3, 3])
    first, second = summary.rows
    assert first.deterministic_view() == second.deterministic_view()


def test_matrix_records_failing_cells(short):
    runs = [
        RunConfig(name="ok", scenario=short, blue_policy="passive", red_policy="random"),
        RunConfig(name="broken", scenario=short, blue_policy="no-such-policy", red_policy="random"),
    ]
    summary = run_matrix(runs, [0, 1])
    assert len(summary.rows) == 2
    assert [f.config for f in summary.failures] == ["broken", "broken"]
    assert "PolicyError" in summary.failures[0].error
    assert "broken" not in summary.aggregate


def test_matrix_records_unexpected_crashes(short, monkeypatch):
    def crash(*args, **kwargs):
        raise RuntimeError("simulated crash")

    monkeypatch.setattr("src.harness.run_episode", crash)
    runs = [RunConfig(name="crashy", scenario=short, blue_policy="passive", red_policy="random")]
    summary = run_matrix(runs, [0], workers=1)
    assert summary.rows == []
    assert [f.config for f in summary.failures] == ["crashy"]
    assert summary.failures[0].error == "RuntimeError: simulated crash"


def test_matrix_needs_seeds_and_configs(short):
    with pytest.raises(HarnessError):
        run_matrix([RunConfig(name="x", scenario=short)], [])
    with pytest.raises(HarnessError):
        run_matrix([], [0])


def test_tail_median_matches_sorted_reference():
    rng = np.random.default_rng(0)
    rows = [EpisodeMetrics(seed=seed, episode=ep, blue_reward=float(rng.normal()), steps=ep)
            for seed in range(3) for ep in range(10)]
    rng.shuffle(rows)
    agg = tail_median(rows, fraction=0.2)

    tail = []
    for seed in range(3):
        mine = sorted((r for r in rows if r.seed == seed), key=lambda r: r.episode)
        tail.extend(mine[-math.ceil(0.2 * len(mine)):])
    assert agg["blue_reward"] == pytest.approx(float(np.median([r.blue_reward for r in tail])))
    assert agg["steps"] == pytest.approx(8.5)


def test_tail_median_keeps_at_least_one_episode():
    rows = [EpisodeMetrics(seed=0, episode=0, red_reward=2.5)]
    assert tail_median(rows)["red_reward"] == 2.5
    assert tail_median([]) == {}


def test_measure_sps_rejects_bad_requests(short):
    with pytest.raises(HarnessError):
        measure_sps(short, 0.0)
    with pytest.raises(HarnessError):
        measure_sps(short.model_copy(update={"mode": HypervisorMode.REPLAY}), 1.0)


def test_measure_sps_counts_steps(short):
    assert measure_sps(short, 0.5) > 0


def test_forward_policy_episode(short, encoder, tmp_path):
    path = tmp_path / "weights.nfw"
    PolicyParams.initialize(seed=0, hidden=8, heads=2).save(path)
    metrics = run_episode(short, "ctgmarl-forward", "red-chain", seed=0,
                          weights=str(path), preset="ct-gmarl", encoder=encoder)
    assert metrics.steps > 0
    if metrics.ode_nfe_per_step is not None:
        assert metrics.ode_nfe_per_step == pytest.approx(4.0)
    assert metrics.mean_blue_advantage is not None
    assert math.isfinite(metrics.mean_blue_advantage)


def test_make_policy_errors(tmp_path):
    with pytest.raises(PolicyError):
        make_policy("no-such-policy")
    with pytest.raises(PolicyError):
        make_policy("ctgmarl-forward", preset="no-such-preset")
    assert {"random", "passive", "red-chain", "blue-threshold-isolate",
            "blue-isolate-sweep", "ctgmarl-forward"} <= set(scripted_policies())


def test_random_policy_stays_in_action_space(small_benchmark):
    sim = Simulator(small_benchmark, make_policy("random"), make_policy("random"), seed=0)
    policy = make_policy("random")
    for agent_id in ("red_0", "blue_corp"):
        obs = AgentObservation(sim, agent_id, 0.0, 0.0)
        for _ in range(200):
            action = decode_action(policy.act(obs))
            assert sim.registry[action.type_id].team == obs.team


def test_threshold_defender_restores_services(small_benchmark, encoder):
    scenario = small_benchmark.model_copy(update={"horizon": 300.0})
    metrics = run_episode(scenario, "blue-threshold-isolate", "red-chain", seed=0, encoder=encoder)
    assert metrics.steps > 0
    assert metrics.services_restored <= metrics.cleanup_completions


@pytest.mark.slow
def test_parallel_matrix_matches_serial(short):
    runs = [RunConfig(name="rand", scenario=short, blue_policy="random", red_policy="red-chain")]
    serial = run_matrix(runs, list(range(4)), workers=1)
    parallel = run_matrix(runs, list(range(4)), workers=2)
    assert [r.deterministic_view() for r in serial.rows] == \
        [r.deterministic_view() for r in parallel.rows]


@pytest.mark.slow
def test_throughput_floor(benchmark):
    assert measure_sps(benchmark, 60.0) >= config.SPS_FLOOR


@pytest.mark.slow
def test_single_node_runs_at_least_as_fast_as_benchmark(benchmark):
    assert measure_sps(single_node_scenario(horizon=500.0), 5.0) >= measure_sps(benchmark, 5.0)
