"""Asynchronous event queue, continuous-time advance and conflict resolution"""
import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.exceptions import QueueIdleError
from src.logger import setup_logger
from src.schemas import ActionSpec, EffectKind, Team
import config

logger = setup_logger(__name__)

# Blue actions that do not defend a specific node
UNTARGETED_BLUE = frozenset({EffectKind.NO_OP, EffectKind.TOKEN_ROTATE})
# Blue completions that pre-empt Red work through the defended node
PREEMPTING_KINDS = frozenset({EffectKind.ISOLATE, EffectKind.CLEANUP})

TEAM_ORDER = {Team.SYSTEM: 0, Team.BLUE: 1, Team.RED: 2, Team.GREEN: 3}


class EventStatus(str, Enum):
    PENDING = "Pending"
    COMPLETED = "Completed"
    NULLIFIED = "Nullified"
    ABORTED = "Aborted"


@dataclass(eq=False, slots=True)
class ScheduledEvent:
    actor_id: str
    team: Team
    type_id: int
    target: int
    start_tick: float
    completion_tick: float
    energy_committed: float
    spec: Optional[ActionSpec] = None
    origin_node: int = -1
    held_tokens: FrozenSet[str] = frozenset()
    status: EventStatus = EventStatus.PENDING
    seq: int = -1

    @property
    def kind(self) -> Optional[EffectKind]:
        return self.spec.effect_kind if self.spec is not None else None

    @property
    def is_heartbeat(self) -> bool:
        return self.team == Team.SYSTEM


@dataclass(frozen=True)
class TimeJump:
    t_next: float
    dt_norm: float
    clipped: bool = False


class EventQueue:
    """Min-heap keyed by (completion_tick, enqueue seq) with lazy removal"""

    def __init__(self):
        self._heap: List[Tuple[float, int, ScheduledEvent]] = []
        self._seq = 0
        self.active_blue = 0

    def push(self, event: ScheduledEvent) -> ScheduledEvent:
        event.seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (event.completion_tick, event.seq, event))
        if event.team == Team.BLUE:
            self.active_blue += 1
        return event

    def _drop_dead(self) -> None:
        while self._heap and self._heap[0][2].status != EventStatus.PENDING:
            heapq.heappop(self._heap)

    def peek(self) -> Optional[ScheduledEvent]:
        self._drop_dead()
        return self._heap[0][2] if self._heap else None

    def pop_maturing(self, tick: float) -> List[ScheduledEvent]:
        """Remove and return every pending event completing at `tick`, in seq order"""
        out = []
        while True:
            self._drop_dead()
            if not self._heap or self._heap[0][0] != tick:
                break
            event = heapq.heappop(self._heap)[2]
            out.append(event)
        return out

    def mark(self, event: ScheduledEvent, status: EventStatus) -> None:
        """Status transition out of Pending; keeps the Blue activity count"""
        if event.status == EventStatus.PENDING and status != EventStatus.PENDING:
            if event.team == Team.BLUE:
                self.active_blue -= 1
        event.status = status

    def pending(self) -> List[ScheduledEvent]:
        return [e for _, _, e in self._heap if e.status == EventStatus.PENDING]

    def __len__(self):
        return sum(1 for _, _, e in self._heap if e.status == EventStatus.PENDING)

    def is_empty(self) -> bool:
        return self.peek() is None


def sample_sojourn(spec: ActionSpec, rng: np.random.Generator,
                   jitter: float = config.SOJOURN_JITTER) -> float:
    """tau = base_duration x Uniform[1 - j, 1 + j]; exactly base when j = 0"""
    if jitter <= 0.0:
        return float(spec.base_duration)
    return float(spec.base_duration * rng.uniform(1.0 - jitter, 1.0 + jitter))


def normalize_dt(dt: float) -> float:
    return min(dt / config.MAX_DURATION, 1.0)


def advance_time(queue: EventQueue, t_prev: float) -> TimeJump:
    """Jump to the nearest maturing completion tick

    Raises:
        QueueIdleError: no pending events
    """
    head = queue.peek()
    if head is None:
        raise QueueIdleError(f"Event queue is empty at tick {t_prev:.3f}")
    t_next = max(head.completion_tick, t_prev)
    dt = t_next - t_prev
    return TimeJump(t_next=t_next, dt_norm=normalize_dt(dt), clipped=dt >= config.MAX_DURATION)


def defended_nodes(maturing: Iterable[ScheduledEvent]) -> set:
    return {
        e.target for e in maturing
        if e.team == Team.BLUE and e.kind not in UNTARGETED_BLUE
    }


def resolve_conflicts(maturing: Sequence[ScheduledEvent]
                      ) -> Tuple[List[ScheduledEvent], List[ScheduledEvent]]:
    """Blue supremacy over one completion tick

    One pass builds the set of Blue-defended nodes; Red events aimed at
    them are nullified. Returns (applied, nullified) ordered System, Blue,
    Red with enqueue order inside each team. Does not mutate the events.
    """
    defended = defended_nodes(maturing)
    applied, nullified = [], []
    for event in maturing:
        if event.team == Team.RED and event.kind != EffectKind.NO_OP and event.target in defended:
            nullified.append(event)
        else:
            applied.append(event)
    applied.sort(key=lambda e: (TEAM_ORDER[e.team], e.seq))
    return applied, nullified


def enforce_blue_cap(active_blue: int, requests: Sequence[Tuple[str, object]],
                     cap: int = config.BLUE_CONCURRENCY_CAP):
    """Accept Blue requests up to `cap` concurrently active events

    Requests are (agent_id, action) pairs processed by ascending agent id
    then action type id. Excess is dropped silently.
    """
    ordered = sorted(requests, key=lambda r: (r[0], getattr(r[1], "type_id", 0)))
    room = max(cap - active_blue, 0)
    return list(ordered[:room]), list(ordered[room:])


def preempt(queue: EventQueue, completed_defense: ScheduledEvent,
            extra: Iterable[ScheduledEvent] = ()) -> List[ScheduledEvent]:
    """Abort pending Red events whose origin or target is the defended node

    Energy committed to aborted events is not refunded.
    """
    node = completed_defense.target
    aborted = []
    seen = set()
    for event in list(extra) + queue.pending():
        if id(event) in seen:
            continue
        seen.add(id(event))
        if (event.team == Team.RED and event.status == EventStatus.PENDING
                and (event.target == node or event.origin_node == node)):
            queue.mark(event, EventStatus.ABORTED)
            aborted.append(event)
    if aborted:
        logger.debug(
            f"{completed_defense.spec.name if completed_defense.spec else 'defense'} on node {node} "
            f"aborted {len(aborted)} Red event(s)"
        )
    return aborted


def heartbeat(tick: float) -> ScheduledEvent:
    return ScheduledEvent(
        actor_id="system", team=Team.SYSTEM, type_id=-1, target=-1,
        start_tick=tick - config.HEARTBEAT_PERIOD, completion_tick=tick, energy_committed=0.0,
    )
