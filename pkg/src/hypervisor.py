"""Sim/real dispatcher with mock, transcript-replay and live-contract executors"""
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field

from src.actions import (
    AgentAction, FieldChange, Reason, StateDelta, apply_delta, compute_effect,
)
from src.exceptions import (
    HypervisorError, RealExecutorNotImplemented, TranscriptDivergenceError,
    TranscriptExhaustedError,
)
from src.logger import setup_logger
from src.schemas import ActionSpec, HypervisorMode, Team, ZoneName
from src.state import Compromise, WorldState
from src.telemetry import LogRecord, parse_event_id, synthesize_log

logger = setup_logger(__name__)

TRANSCRIPT_FORMAT = "netforge-transcript"
TRANSCRIPT_VERSION = 1


class TransitionRecord(BaseModel):
    """One executed action as it appears in a transcript"""
    actor_id: str
    type_id: int
    target: int
    tick: float
    success: bool
    reason: Optional[str] = None
    target_was_compromised: bool = False
    prev_compromise: int = 0
    new_compromise: int = 0
    honeytoken_tripped: bool = False
    changes: List[dict] = Field(default_factory=list)
    raw_logs: List[str] = Field(default_factory=list)
    log_nodes: List[int] = Field(default_factory=list)
    wall_duration: float = 0.0
    exit_status: int = 0


@dataclass
class TransitionResult:
    delta: StateDelta
    records: List[LogRecord] = field(default_factory=list)
    wall_duration: float = 0.0


@dataclass
class DispatchContext:
    """What an executor needs besides the state"""
    actor_id: str
    action: AgentAction
    spec: ActionSpec
    tick: float
    honeytokens_enabled: bool = True


class MockHypervisor:
    """Full-speed simulated execution: effect, delta, synthesized logs"""

    mode = HypervisorMode.SIM

    def execute(self, state: WorldState, ctx: DispatchContext) -> TransitionResult:
        delta = compute_effect(state, ctx.actor_id, ctx.action, ctx.spec, ctx.tick,
                               ctx.honeytokens_enabled)
        apply_delta(state, delta)
        return TransitionResult(delta=delta, records=[synthesize_log(d) for d in delta.drafts])


def mock_execute(state: WorldState, ctx: DispatchContext) -> TransitionResult:
    return MockHypervisor().execute(state, ctx)


def _delta_from_record(record: TransitionRecord) -> StateDelta:
    return StateDelta(
        success=record.success,
        changes=[FieldChange.from_dict(c) for c in record.changes],
        reason=Reason(record.reason) if record.reason else None,
        target=record.target,
        target_was_compromised=record.target_was_compromised,
        prev_compromise=Compromise(record.prev_compromise),
        new_compromise=Compromise(record.new_compromise),
        honeytoken_tripped=record.honeytoken_tripped,
    )


def read_transcript(path: Union[str, Path]) -> List[TransitionRecord]:
    """Parse a transcript file: versioned header line, then one record per line"""
    path = Path(path)
    if not path.exists():
        raise HypervisorError(f"Transcript not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        return []
    header = json.loads(lines[0])
    if header.get("format") != TRANSCRIPT_FORMAT or header.get("version") != TRANSCRIPT_VERSION:
        raise HypervisorError(f"Unsupported transcript header in {path}: {header}")
    return [TransitionRecord.model_validate_json(line) for line in lines[1:]]


class ReplayHypervisor:
    """Serves recorded transitions in order; raw log text is kept verbatim"""

    mode = HypervisorMode.REPLAY

    def __init__(self, records: List[TransitionRecord]):
        self.records = records
        self.cursor = 0

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ReplayHypervisor":
        records = read_transcript(path)
        logger.info(f"Loaded transcript {path}: {len(records)} transitions")
        return cls(records)

    def execute(self, state: WorldState, ctx: DispatchContext) -> TransitionResult:
        return replay_execute(self, state, ctx)


def replay_execute(transcript: ReplayHypervisor, state: WorldState,
                   ctx: DispatchContext) -> TransitionResult:
    """Apply the next recorded transition if it matches the action

    Raises:
        TranscriptExhaustedError: no records left
        TranscriptDivergenceError: (actor, type, target) differ from the cursor record
    """
    if transcript.cursor >= len(transcript.records):
        raise TranscriptExhaustedError(
            f"Transcript exhausted after {len(transcript.records)} transitions"
        )
    record = transcript.records[transcript.cursor]
    if (record.actor_id, record.type_id, record.target) != (
            ctx.actor_id, ctx.action.type_id, ctx.action.target_slot):
        raise TranscriptDivergenceError(
            f"Replay diverged at cursor {transcript.cursor}: transcript has "
            f"({record.actor_id}, {record.type_id}, {record.target}), episode issued "
            f"({ctx.actor_id}, {ctx.action.type_id}, {ctx.action.target_slot})",
            transcript.cursor,
        )
    transcript.cursor += 1

    delta = _delta_from_record(record)
    apply_delta(state, delta)
    records = []
    for i, raw in enumerate(record.raw_logs):
        node = record.log_nodes[i] if i < len(record.log_nodes) else max(record.target, 0)
        zone = state.nodes[node].zone if 0 <= node < state.topology.node_count else ZoneName.INTERNET
        records.append(LogRecord(
            tick=ctx.tick,
            node=node,
            zone=zone,
            event_id=parse_event_id(raw),
            origin=Team.BLUE if ctx.spec.team == Team.BLUE else Team.RED,
            computer=state.nodes[node].name if 0 <= node < state.topology.node_count else "",
            raw=raw,
        ))
    return TransitionResult(delta=delta, records=records, wall_duration=record.wall_duration)


class RealHypervisorStub:
    """Live-range executor contract; never executes anything"""

    mode = HypervisorMode.REAL_STUB

    def descriptor(self, state: WorldState, ctx: DispatchContext) -> dict:
        target = ctx.action.target_slot
        address = (state.topology.address(target)
                   if 0 <= target < state.topology.node_count else "<unassigned>")
        return {
            "action": ctx.spec.name,
            "cve": ctx.spec.cve,
            "script": ctx.spec.script or f"{ctx.spec.name.lower()}.py",
            "target_address": address,
            "actor_id": ctx.actor_id,
        }

    def execute(self, state: WorldState, ctx: DispatchContext) -> TransitionResult:
        raise RealExecutorNotImplemented(self.descriptor(state, ctx))


def make_hypervisor(mode: HypervisorMode, transcript_path: Optional[str] = None):
    if mode == HypervisorMode.SIM:
        return MockHypervisor()
    if mode == HypervisorMode.REPLAY:
        if not transcript_path:
            raise HypervisorError("Replay mode requires a transcript path")
        return ReplayHypervisor.from_file(transcript_path)
    return RealHypervisorStub()


def dispatch(executor, state: WorldState, ctx: DispatchContext,
             mode: Optional[HypervisorMode] = None) -> TransitionResult:
    """Route an action to the executor of the environment's mode"""
    if mode is not None and executor.mode != mode:
        raise HypervisorError(f"Executor runs in {executor.mode.value}, requested {mode.value}")
    return executor.execute(state, ctx)


class TranscriptRecorder:
    """Mock executor that writes every transition to a transcript

    With oov_rate > 0 some raw logs get a container-error field of random
    hex tokens, which the encoder has never seen.
    """

    mode = HypervisorMode.SIM

    def __init__(self, sink: IO[str], oov_rate: float = 0.0, seed: int = 0):
        self.sink = sink
        self.oov_rate = oov_rate
        self.rng = np.random.default_rng(seed)
        self.inner = MockHypervisor()
        self.count = 0
        sink.write(json.dumps({"format": TRANSCRIPT_FORMAT, "version": TRANSCRIPT_VERSION}) + "\n")

    def _inject(self, raw: str) -> str:
        if self.oov_rate <= 0 or self.rng.random() >= self.oov_rate:
            return raw
        junk = " ".join(f"{int(v):08x}" for v in self.rng.integers(0, 2**32, size=4))
        return raw.replace(
            "</EventData>",
            f"<Data Name=\"ContainerError\">vulhub[{junk}] segfault qx{junk[:6]}</Data></EventData>",
        )

    def execute(self, state: WorldState, ctx: DispatchContext) -> TransitionResult:
        start = time.perf_counter()
        result = self.inner.execute(state, ctx)
        for record in result.records:
            record.raw = self._inject(record.xml_text)
        wall = time.perf_counter() - start
        delta = result.delta
        entry = TransitionRecord(
            actor_id=ctx.actor_id,
            type_id=ctx.action.type_id,
            target=ctx.action.target_slot,
            tick=ctx.tick,
            success=delta.success,
            reason=delta.reason.value if delta.reason else None,
            target_was_compromised=delta.target_was_compromised,
            prev_compromise=int(delta.prev_compromise),
            new_compromise=int(delta.new_compromise),
            honeytoken_tripped=delta.honeytoken_tripped,
            changes=[c.to_dict() for c in delta.changes],
            raw_logs=[r.xml_text for r in result.records],
            log_nodes=[r.node for r in result.records],
            wall_duration=wall,
            exit_status=0 if delta.success else 1,
        )
        self.sink.write(entry.model_dump_json() + "\n")
        self.count += 1
        result.wall_duration = wall
        return result
