"""Shared fixtures for the NetForge test suite"""
import numpy as np
import pytest

from src.actions import default_registry
from src.embeddings import fit_encoder
from src.events import ScheduledEvent
from src.scenarios import benchmark_scenario
from src.schemas import Team
from src.state import build_world
from src.telemetry import generate_seed_corpus
import config

# Smaller than the shipped corpus; still covers every template many times
TEST_CORPUS_SIZE = 1500


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture
def benchmark():
    """100-node three-subnet layout"""
    return benchmark_scenario()


@pytest.fixture
def small_benchmark():
    """10 nodes: DMZ 0-1, Corporate 2-6 (2 is the Domain Controller), SecureVault 7-9"""
    return benchmark_scenario(10)


@pytest.fixture
def world(small_benchmark):
    return build_world(small_benchmark, seed=0)


@pytest.fixture(scope="session")
def seed_corpus():
    rng = np.random.default_rng(config.ENCODER_FIT_SEED)
    return generate_seed_corpus(benchmark_scenario(), rng, TEST_CORPUS_SIZE)


@pytest.fixture(scope="session")
def encoder(seed_corpus):
    return fit_encoder(seed_corpus, config.ENCODER_FIT_SEED)


@pytest.fixture
def make_event(registry):
    """Factory for queue events built from registry names"""

    def _make(name: str, target: int, completion: float = 5.0, actor: str = "",
              origin: int = -1, start: float = 0.0) -> ScheduledEvent:
        spec = registry.named(name)
        return ScheduledEvent(
            actor_id=actor or ("red_0" if spec.team == Team.RED else "blue_corp"),
            team=spec.team,
            type_id=spec.type_id,
            target=target,
            start_tick=start,
            completion_tick=completion,
            energy_committed=spec.energy_cost,
            spec=spec,
            origin_node=origin,
        )

    return _make
