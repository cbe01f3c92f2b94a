"""Episode engine behaviour over whole runs"""
import numpy as np
import pytest

from src.agents import Policy, RandomPolicy, make_policy
from src.exceptions import PolicyError
from src.harness import capture_steps
from src.schemas import EffectKind, Team, ZoneName
from src.simulator import AgentObservation, Simulator
import config


class RotateWhenAffordable(Policy):
    """Blue rotates Kerberos whenever it can pay for it"""

    name = "rotate"

    def act(self, obs):
        rotate = obs.registry.of_kind(EffectKind.TOKEN_ROTATE, Team.BLUE)[0]
        if obs.energy >= rotate.energy_cost:
            return rotate.type_id, 0
        return obs.registry.of_kind(EffectKind.NO_OP, Team.BLUE)[0].type_id, 0


class Exploding(Policy):
    name = "exploding"

    def act(self, obs):
        raise RuntimeError("boom")


def test_blue_concurrency_cap_holds(small_benchmark):
    sim = Simulator(small_benchmark.model_copy(update={"horizon": 300.0}),
                    RandomPolicy(), RandomPolicy(), seed=0)
    while (result := sim.step()) is not None:
        assert result.active_blue <= config.BLUE_CONCURRENCY_CAP
    assert sim.counters.dropped_blue_actions > 0


def test_vault_breaches_carry_the_gate_token(small_benchmark):
    scenario = small_benchmark.model_copy(update={"horizon": 300.0})
    breaches = []
    for seed in range(3):
        for blue in ("passive", "random"):
            sim = Simulator(scenario, make_policy(blue), make_policy("red-chain"), seed=seed)
            sim.run()
            breaches.extend(sim.vault_breaches)
    assert breaches
    pass_ticket = sim.registry.named("PassTheTicket").type_id
    for breach in breaches:
        assert config.GATE_TOKEN in breach.held_tokens
        assert breach.type_id == pass_ticket


def test_token_rotation_flushes_red_inventories(small_benchmark):
    sim = Simulator(small_benchmark.model_copy(update={"horizon": 200.0}),
                    RotateWhenAffordable(), make_policy("red-chain"), seed=1)
    flushes = []

    def on_complete(simulator, event, delta):
        if event.kind == EffectKind.TOKEN_ROTATE and delta.success:
            flushes.append(event)
            assert all(not inv.tokens for inv in simulator.state.red_inventories())

    sim.listeners.append(on_complete)
    sim.run()
    assert flushes


def test_energy_is_conserved(small_benchmark):
    sim = Simulator(small_benchmark.model_copy(update={"horizon": 200.0}),
                    RandomPolicy(), RandomPolicy(), seed=3)
    initial = sum(inv.energy for inv in sim.state.inventories.values())
    sim.run()
    remaining = sum(inv.energy for inv in sim.state.inventories.values())
    assert initial - remaining == pytest.approx(sim.counters.energy_debited)
    assert all(inv.energy >= 0 for inv in sim.state.inventories.values())


def test_blue_sees_only_its_zone(small_benchmark, encoder):
    sim = Simulator(small_benchmark.model_copy(update={"horizon": 50.0}),
                    make_policy("passive"), make_policy("red-chain"), seed=0, encoder=encoder)
    sim.run(max_steps=30)
    obs = AgentObservation(sim, "blue_corp", dt_norm=0.0, reward=0.0)
    embeddings = obs.node_embeddings()
    outside = [n.id for n in sim.state.nodes if n.zone != ZoneName.CORPORATE]
    inside = [n.id for n in sim.state.nodes if n.zone == ZoneName.CORPORATE]
    assert not embeddings[outside].any()
    assert embeddings[inside].any()
    assert np.linalg.norm(obs.zone_embedding()) <= 1.0 + 1e-9


def test_red_view_is_red_only(small_benchmark):
    sim = Simulator(small_benchmark, make_policy("passive"), make_policy("passive"), seed=0)
    with pytest.raises(PolicyError):
        AgentObservation(sim, "blue_corp", 0.0, 0.0).red_view()
    view = AgentObservation(sim, "red_0", 0.0, 0.0).red_view()
    assert set(view.discovered) == set(sim.state.topology.zone_members(ZoneName.DMZ))


def test_benign_volume_dominates(benchmark):
    sim = Simulator(benchmark.model_copy(update={"horizon": 240.0}),
                    make_policy("passive"), RandomPolicy(), seed=0)
    counters = sim.run()
    assert counters.green_records >= 10 * max(counters.red_records, 1)


def test_policy_failures_carry_context(small_benchmark):
    with pytest.raises(PolicyError, match="tick"):
        Simulator(small_benchmark, Exploding(), make_policy("passive"), seed=0)


def test_runs_are_reproducible(small_benchmark):
    scenario = small_benchmark.model_copy(update={"horizon": 150.0})
    assert capture_steps(scenario, "random", "random", seed=9) == \
        capture_steps(scenario, "random", "random", seed=9)
    assert capture_steps(scenario, "random", "random", seed=9) != \
        capture_steps(scenario, "random", "random", seed=10)


def test_zero_horizon_runs_no_steps(small_benchmark):
    sim = Simulator(small_benchmark.model_copy(update={"horizon": 0.0}),
                    RandomPolicy(), RandomPolicy(), seed=0)
    assert sim.step() is None
    assert sim.run().steps == 0


@pytest.mark.slow
def test_clipped_jumps_are_rare(benchmark):
    sim = Simulator(benchmark.model_copy(update={"horizon": 1e9}),
                    RandomPolicy(), RandomPolicy(), seed=0)
    counters = sim.run(max_steps=10_000)
    assert counters.steps == 10_000
    assert counters.clipped_steps / counters.steps < 0.02


@pytest.mark.slow
def test_safety_properties_over_random_episodes(small_benchmark):
    scenario = small_benchmark.model_copy(update={"horizon": 40.0})
    rotations = 0

    def check_flush(simulator, event, delta):
        nonlocal rotations
        if event.kind == EffectKind.TOKEN_ROTATE and delta.success:
            rotations += 1
            assert all(not inv.tokens for inv in simulator.state.red_inventories())

    for seed in range(10_000):
        sim = Simulator(scenario, RandomPolicy(), RandomPolicy(), seed=seed)
        sim.listeners.append(check_flush)
        while (result := sim.step()) is not None:
            if seed < 1000:
                assert result.active_blue <= config.BLUE_CONCURRENCY_CAP
        for breach in sim.vault_breaches:
            assert config.GATE_TOKEN in breach.held_tokens
    assert rotations > 0


@pytest.mark.slow
def test_reward_breakdowns_add_up(small_benchmark):
    scenario = small_benchmark.model_copy(update={"horizon": 40.0})
    for seed in range(1000):
        red = "red-chain" if seed % 2 else "random"
        sim = Simulator(scenario, RandomPolicy(), make_policy(red), seed=seed)
        while (result := sim.step()) is not None:
            blue, red_reward = result.blue, result.red
            assert blue.total == pytest.approx(blue.tactical + blue.health - blue.economics - blue.cost)
            assert red_reward.total == pytest.approx(
                red_reward.tactical + red_reward.progression - red_reward.cost)
