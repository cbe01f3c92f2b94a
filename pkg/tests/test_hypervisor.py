"""Dispatcher backends: mock, transcript record/replay and the live-executor contract"""
import io
import json

import pytest

from src.actions import AgentAction
from src.exceptions import (
    HypervisorError, RealExecutorNotImplemented, TranscriptDivergenceError,
    TranscriptExhaustedError,
)
from src.harness import capture_steps, run_episode
from src.hypervisor import (
    DispatchContext, MockHypervisor, RealHypervisorStub, ReplayHypervisor, TranscriptRecorder,
    TransitionRecord, dispatch, make_hypervisor,
)
from src.schemas import HypervisorMode
from src.state import Compromise, build_world
from src.telemetry import parse_event_id

DMZ_HOST, SMB_HOST = 0, 4


@pytest.fixture
def eternalblue(registry):
    spec = registry.named("ExploitEternalBlue")
    return DispatchContext(actor_id="red_0", action=AgentAction(spec.type_id, SMB_HOST),
                           spec=spec, tick=6.0)


@pytest.fixture
def foothold(small_benchmark):
    def _world():
        state = build_world(small_benchmark, seed=0)
        state.set_compromise(DMZ_HOST, Compromise.USER_SHELL)
        return state
    return _world


def write_transcript(tmp_path, sink: io.StringIO):
    path = tmp_path / "transcript.jsonl"
    path.write_text(sink.getvalue(), encoding="utf-8")
    return path


def test_live_contract_descriptor(world, eternalblue):
    stub = RealHypervisorStub()
    descriptor = stub.descriptor(world, eternalblue)
    assert descriptor["action"] == "ExploitEternalBlue"
    assert descriptor["cve"] == "CVE-2017-0144"
    assert descriptor["script"] == eternalblue.spec.script
    assert descriptor["target_address"] == world.topology.address(SMB_HOST)

    with pytest.raises(RealExecutorNotImplemented) as info:
        stub.execute(world, eternalblue)
    assert info.value.descriptor == descriptor
    assert world.nodes[SMB_HOST].compromise == Compromise.HEALTHY


def test_dispatch_rejects_mode_mismatch(world, eternalblue):
    with pytest.raises(HypervisorError):
        dispatch(MockHypervisor(), world, eternalblue, HypervisorMode.REPLAY)


def test_replay_needs_a_transcript(tmp_path):
    with pytest.raises(HypervisorError):
        make_hypervisor(HypervisorMode.REPLAY)
    with pytest.raises(HypervisorError):
        make_hypervisor(HypervisorMode.REPLAY, str(tmp_path / "missing.jsonl"))
    assert isinstance(make_hypervisor(HypervisorMode.REAL_STUB), RealHypervisorStub)


def test_transcript_header_is_checked(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps({"format": "something-else", "version": 1}) + "\n", encoding="utf-8")
    with pytest.raises(HypervisorError, match="header"):
        ReplayHypervisor.from_file(path)


def test_exhausted_transcript(world, eternalblue):
    with pytest.raises(TranscriptExhaustedError):
        ReplayHypervisor([]).execute(world, eternalblue)


def test_divergent_action(world, eternalblue):
    record = TransitionRecord(actor_id="red_0", type_id=eternalblue.action.type_id,
                              target=SMB_HOST + 1, tick=6.0, success=True)
    replay = ReplayHypervisor([record])
    with pytest.raises(TranscriptDivergenceError) as info:
        replay.execute(world, eternalblue)
    assert info.value.cursor == 0
    assert replay.cursor == 0


def test_recorded_transition_replays_onto_fresh_world(tmp_path, foothold, eternalblue):
    sink = io.StringIO()
    recorder = TranscriptRecorder(sink, oov_rate=1.0, seed=0)
    live = foothold()
    recorded = recorder.execute(live, eternalblue)
    assert recorder.count == 1
    assert "ContainerError" in recorded.records[0].xml_text

    replay = ReplayHypervisor.from_file(write_transcript(tmp_path, sink))
    fresh = foothold()
    result = replay.execute(fresh, eternalblue)
    assert replay.cursor == 1
    assert fresh.nodes[SMB_HOST].compromise == live.nodes[SMB_HOST].compromise == Compromise.USER_SHELL
    assert fresh.discovered == live.discovered
    assert result.delta.success
    assert result.records[0].xml_text == recorded.records[0].xml_text
    assert result.records[0].event_id == parse_event_id(recorded.records[0].xml_text) == 4688


def test_episode_replays_identically(tmp_path, small_benchmark):
    scenario = small_benchmark.model_copy(update={"horizon": 120.0})
    sink = io.StringIO()
    recorder = TranscriptRecorder(sink, oov_rate=0.3, seed=1)
    recorded = run_episode(scenario, "passive", "red-chain", seed=2, executor=recorder)
    assert recorder.count > 0

    replay = scenario.model_copy(update={
        "mode": HypervisorMode.REPLAY,
        "transcript_path": str(write_transcript(tmp_path, sink)),
    })
    replayed = run_episode(replay, "passive", "red-chain", seed=2)
    assert replayed.deterministic_view() == recorded.deterministic_view()


def test_replay_detects_a_different_episode(tmp_path, small_benchmark):
    scenario = small_benchmark.model_copy(update={"horizon": 120.0})
    sink = io.StringIO()
    run_episode(scenario, "passive", "red-chain", seed=2, executor=TranscriptRecorder(sink))
    replay = scenario.model_copy(update={
        "mode": HypervisorMode.REPLAY,
        "transcript_path": str(write_transcript(tmp_path, sink)),
    })
    with pytest.raises(HypervisorError):
        run_episode(replay, "random", "random", seed=2)


def test_bridge_is_transparent_in_sim_mode(small_benchmark):
    scenario = small_benchmark.model_copy(update={"horizon": 150.0})
    bridged = capture_steps(scenario, "random", "red-chain", seed=5, use_bridge=True)
    direct = capture_steps(scenario, "random", "red-chain", seed=5, use_bridge=False)
    assert bridged == direct
