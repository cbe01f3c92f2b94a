"""
Continuous-time episode engine: owns the world state, the event queue,
the dispatcher and the observation windows of one episode.
"""
import json
from dataclasses import dataclass, field
from typing import IO, Callable, Dict, List, Optional, Tuple

import numpy as np

from src.actions import (
    ActionRegistry, AgentAction, StateDelta, Verdict, apply_effect,
    decode_action, default_registry, validate_action,
)
from src.embeddings import LogEncoder, load_or_fit_encoder
from src.events import (
    PREEMPTING_KINDS, EventQueue, EventStatus, ScheduledEvent, TimeJump, advance_time,
    enforce_blue_cap, heartbeat, normalize_dt, preempt, resolve_conflicts, sample_sojourn,
)
from src.exceptions import ActionSpaceError, NetForgeException, PolicyError
from src.hypervisor import DispatchContext, dispatch, make_hypervisor
from src.logger import setup_logger
from src.rewards import CompletedEvent, blue_step_reward, from_outcome, red_step_reward
from src.schemas import (
    BlueRewardBreakdown, EffectKind, RedRewardBreakdown, ScenarioConfig, Team, ZoneName,
)
from src.state import Compromise, WorldState, build_world, topology_mask
from src.telemetry import (
    OUTCOME_ABORTED, OUTCOME_NULLIFIED, GreenProfile, Host, LogRecord, ObservationWindow,
    build_observation, green_noise, outcome_draft, synthesize_log,
)
import config

logger = setup_logger(__name__)


@dataclass
class SimCounters:
    """Running episode counters read by the harness"""
    steps: int = 0
    clipped_steps: int = 0
    blue_reward: float = 0.0
    red_reward: float = 0.0
    successful_exploits: int = 0
    services_restored: int = 0
    cleanup_completions: int = 0
    dropped_blue_actions: int = 0
    rejected_actions: int = 0
    nullified_events: int = 0
    aborted_events: int = 0
    honeytoken_trips: int = 0
    green_records: int = 0
    red_records: int = 0
    energy_debited: float = 0.0
    rejections: Dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class VaultBreach:
    """A SecureVault node going from Healthy to compromised"""
    tick: float
    node: int
    actor_id: str
    type_id: int
    held_tokens: frozenset


@dataclass
class StepResult:
    tick: float
    dt_norm: float
    clipped: bool
    blue: BlueRewardBreakdown
    red: RedRewardBreakdown
    applied: List[Tuple[ScheduledEvent, StateDelta]]
    nullified: List[ScheduledEvent]
    aborted: List[ScheduledEvent]
    dropped: int
    rejected: int
    active_blue: int

    def to_record(self) -> dict:
        return {
            "tick": round(self.tick, 6),
            "dt_norm": self.dt_norm,
            "clipped": self.clipped,
            "blue": self.blue.model_dump(),
            "red": self.red.model_dump(),
            "applied": len(self.applied),
            "nullified": len(self.nullified),
            "aborted": len(self.aborted),
            "dropped": self.dropped,
            "rejected": self.rejected,
            "active_blue": self.active_blue,
        }


@dataclass(frozen=True)
class NodeView:
    """What Red knows about a discovered node"""
    id: int
    zone: ZoneName
    services: Tuple[str, ...]
    vulns: frozenset
    isolated: bool
    compromise: Compromise
    has_credentials: bool


@dataclass(frozen=True)
class RedView:
    """Structured ground-truth observation of a Red agent"""
    agent_id: str
    energy: float
    tokens: Tuple[str, ...]
    sessions: Dict[int, Compromise]
    discovered: Dict[int, NodeView]


class AgentObservation:
    """Per-agent observation; embeddings and masks are computed on first access"""

    def __init__(self, sim: "Simulator", agent_id: str, dt_norm: float, reward: float):
        self.sim = sim
        self.agent_id = agent_id
        self.inventory = sim.state.inventories[agent_id]
        self.team = self.inventory.team
        self.zone = self.inventory.zone
        self.tick = sim.state.clock
        self.dt_norm = dt_norm
        self.reward = reward
        self.previous = sim.busy.get(agent_id)
        self._zone_embedding = None
        self._node_embeddings = None
        self._mask = None

    @property
    def energy(self) -> float:
        return self.inventory.energy

    @property
    def node_count(self) -> int:
        return self.sim.state.topology.node_count

    @property
    def registry(self) -> ActionRegistry:
        return self.sim.registry

    @property
    def rng(self) -> np.random.Generator:
        return self.sim.state.rng.policy

    @property
    def node_zones(self) -> List[ZoneName]:
        return [n.zone for n in self.sim.state.nodes]

    def zone_embedding(self) -> np.ndarray:
        """Mean of the last 8 encoded records of the agent's zone"""
        if self._zone_embedding is None:
            if self.zone is None:
                self._zone_embedding = np.zeros(config.EMBEDDING_DIMENSION)
            else:
                self.sim.ensure_encoder()
                self._zone_embedding = build_observation(self.sim.zone_windows[self.zone])
        return self._zone_embedding

    def node_embeddings(self) -> np.ndarray:
        """(nodes, 128) per-node window means; rows outside the agent's zone stay zero"""
        if self._node_embeddings is None:
            self.sim.ensure_encoder()
            n = self.node_count
            out = np.zeros((n, config.EMBEDDING_DIMENSION))
            for node in self.sim.state.nodes:
                if self.zone is None or node.zone == self.zone:
                    out[node.id] = build_observation(self.sim.node_windows[node.id])
            self._node_embeddings = out
        return self._node_embeddings

    def mask(self) -> np.ndarray:
        if self._mask is None:
            self._mask = topology_mask(self.sim.state)
        return self._mask

    def validate(self, type_id: int, target: int) -> Verdict:
        """Enqueue-time verdict for a candidate action"""
        return validate_action(self.sim.state, self.agent_id, AgentAction(type_id, target),
                               self.sim.registry, self.sim.scenario.honeytokens_enabled)

    def isolated_nodes(self) -> List[int]:
        """Nodes of the agent's zone whose links are severed (visible in the mask)"""
        return [n.id for n in self.sim.state.nodes
                if n.isolated and (self.zone is None or n.zone == self.zone)]

    def red_view(self) -> RedView:
        if self.team != Team.RED:
            raise PolicyError(f"{self.agent_id} is not a Red agent")
        state = self.sim.state
        decoyed = {n for n, _ in state.honeytokens}
        discovered = {}
        for node_id in sorted(state.discovered):
            node = state.nodes[node_id]
            discovered[node_id] = NodeView(
                id=node_id,
                zone=node.zone,
                services=node.services,
                vulns=frozenset(node.vulns),
                isolated=node.isolated,
                compromise=node.compromise,
                has_credentials=node.token is not None or node_id in decoyed,
            )
        return RedView(
            agent_id=self.agent_id,
            energy=self.inventory.energy,
            tokens=tuple(sorted(t.name for t in self.inventory.tokens)),
            sessions={n: state.nodes[n].compromise for n in state.controlled_nodes()},
            discovered=discovered,
        )


Listener = Callable[["Simulator", ScheduledEvent, StateDelta], None]


class Simulator:
    """One episode of the asynchronous POSMDP"""

    def __init__(self, scenario: ScenarioConfig, blue_policy, red_policy,
                 seed: Optional[int] = None,
                 registry: Optional[ActionRegistry] = None,
                 encoder: Optional[LogEncoder] = None,
                 executor=None,
                 use_bridge: bool = True,
                 trace_sink: Optional[IO[str]] = None,
                 step_sink: Optional[IO[str]] = None):
        """Build the world and enqueue the first heartbeat and agent actions

        Args:
            scenario: validated scenario
            blue_policy: policy shared by every Blue agent
            red_policy: policy shared by every Red agent
            seed: master seed; defaults to the scenario seed
            registry: action registry; defaults to the scenario's or the shipped one
            encoder: frozen log encoder; loaded on first observation if omitted
            executor: dispatcher backend; built from the scenario mode if omitted
            use_bridge: route completions through the dispatcher (False applies
                effects directly, for differential checks)
            trace_sink: optional JSONL stream of event status transitions
            step_sink: optional JSONL stream of per-step metrics
        """
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        if registry is None:
            registry = (ActionRegistry.load(scenario.action_registry_path)
                        if scenario.action_registry_path else default_registry())
        self.registry = registry
        self.encoder = encoder
        self.executor = executor or make_hypervisor(scenario.mode, scenario.transcript_path)
        self.use_bridge = use_bridge
        self.trace_sink = trace_sink
        self.step_sink = step_sink
        self.policies = {Team.BLUE: blue_policy, Team.RED: red_policy}
        self.listeners: List[Listener] = []

        self.state: WorldState = build_world(scenario, self.seed)
        self.queue = EventQueue()
        self.horizon = float(scenario.horizon)
        self.profile = GreenProfile.from_scenario(scenario)
        topo = self.state.topology
        self.hosts = tuple(
            Host(node=n.id, name=n.name, zone=n.zone, address=topo.address(n.id))
            for n in topo.nodes
        )
        zones = sorted({n.zone for n in topo.nodes}, key=lambda z: z.value)
        self.zone_windows = {z: ObservationWindow(zone=z, encoder=encoder) for z in zones}
        self.node_windows = [ObservationWindow(zone=n.zone, encoder=encoder) for n in topo.nodes]

        self.counters = SimCounters()
        self.vault_breaches: List[VaultBreach] = []
        self.busy: Dict[str, ScheduledEvent] = {}
        self.last_query: Dict[str, float] = {a: 0.0 for a in self.state.inventories}
        self.accrued: Dict[str, float] = {a: 0.0 for a in self.state.inventories}
        self.last_green_tick = 0.0
        self._oov_start = encoder.oov_count if encoder is not None else 0

        for team, policy in self.policies.items():
            if hasattr(policy, "reset"):
                policy.reset(self)

        self.queue.push(heartbeat(config.HEARTBEAT_PERIOD))
        if not self.done:
            self._query_agents()

    # ---- properties ----

    @property
    def done(self) -> bool:
        return self.state.clock >= self.horizon

    @property
    def oov_records(self) -> int:
        return (self.encoder.oov_count - self._oov_start) if self.encoder is not None else 0

    def ensure_encoder(self) -> LogEncoder:
        if self.encoder is None:
            self.encoder = load_or_fit_encoder(self.scenario.encoder_path, self.scenario)
            self._oov_start = self.encoder.oov_count
            for window in list(self.zone_windows.values()) + self.node_windows:
                window.encoder = self.encoder
        return self.encoder

    # ---- tracing ----

    def _trace(self, event: ScheduledEvent, status: str, reason: Optional[str] = None) -> None:
        if self.trace_sink is None:
            return
        self.trace_sink.write(json.dumps({
            "tick": round(self.state.clock, 6),
            "actor": event.actor_id,
            "action": event.spec.name if event.spec else "Heartbeat",
            "type_id": event.type_id,
            "target": event.target,
            "status": status,
            "reason": reason,
        }) + "\n")

    def _ingest(self, records: List[LogRecord]) -> None:
        counters = self.counters
        for record in records:
            if record.origin == Team.GREEN:
                counters.green_records += 1
            elif record.origin == Team.RED:
                counters.red_records += 1
            window = self.zone_windows.get(record.zone)
            if window is not None:
                window.push(record)
            if 0 <= record.node < len(self.node_windows):
                self.node_windows[record.node].push(record)

    def _interruption_log(self, event: ScheduledEvent, outcome: str) -> None:
        target = event.target
        if not 0 <= target < self.state.topology.node_count:
            return
        node = self.state.nodes[target]
        self._ingest([synthesize_log(outcome_draft(
            event.kind, outcome, tick=self.state.clock, node=target, zone=node.zone,
            computer=node.name, origin=event.team,
            address=self.state.topology.address(target),
        ))])

    # ---- one step ----

    def _execute(self, event: ScheduledEvent) -> Tuple[StateDelta, List[LogRecord]]:
        action = AgentAction(event.type_id, event.target)
        honeytokens = self.scenario.honeytokens_enabled
        if self.use_bridge:
            result = dispatch(self.executor, self.state, DispatchContext(
                actor_id=event.actor_id, action=action, spec=event.spec,
                tick=self.state.clock, honeytokens_enabled=honeytokens,
            ))
            return result.delta, result.records
        delta = apply_effect(self.state, event, honeytokens)
        return delta, [synthesize_log(d) for d in delta.drafts]

    def _account(self, event: ScheduledEvent, delta: StateDelta) -> None:
        counters = self.counters
        kind = event.kind
        if not delta.success:
            return
        if event.team == Team.RED:
            if kind == EffectKind.EXPLOIT and delta.new_compromise > delta.prev_compromise:
                counters.successful_exploits += 1
            if delta.honeytoken_tripped:
                counters.honeytoken_trips += 1
            if (delta.prev_compromise == Compromise.HEALTHY
                    and delta.new_compromise > Compromise.HEALTHY
                    and self.state.nodes[delta.target].zone == ZoneName.SECURE_VAULT):
                self.vault_breaches.append(VaultBreach(
                    tick=self.state.clock, node=delta.target, actor_id=event.actor_id,
                    type_id=event.type_id, held_tokens=event.held_tokens,
                ))
        elif kind == EffectKind.CLEANUP:
            counters.cleanup_completions += 1
            if delta.target_was_compromised:
                counters.services_restored += 1

    def step(self) -> Optional[StepResult]:
        """Advance to the next maturing completion and process it

        Returns None once the horizon is reached.
        """
        if self.done:
            return None
        jump: TimeJump = advance_time(self.queue, self.state.clock)
        if jump.t_next > self.horizon:
            self.state.clock = self.horizon
            return None
        self.state.clock = jump.t_next
        counters = self.counters
        counters.steps += 1
        counters.clipped_steps += int(jump.clipped)

        maturing = self.queue.pop_maturing(jump.t_next)
        applied, nullified = resolve_conflicts(maturing)
        for event in nullified:
            self.queue.mark(event, EventStatus.NULLIFIED)
            self._trace(event, EventStatus.NULLIFIED.value)
            self._interruption_log(event, OUTCOME_NULLIFIED)
            logger.debug(f"{event.actor_id} {event.spec.name} on node {event.target} nullified")
        counters.nullified_events += len(nullified)

        completed: List[CompletedEvent] = []
        outcomes: List[Tuple[ScheduledEvent, StateDelta]] = []
        aborted: List[ScheduledEvent] = []
        for event in applied:
            if event.is_heartbeat:
                self.queue.mark(event, EventStatus.COMPLETED)
                self._ingest(green_noise(self.last_green_tick, jump.t_next,
                                         self.state.rng.green, self.profile, self.hosts))
                self.last_green_tick = jump.t_next
                self.queue.push(heartbeat(jump.t_next + config.HEARTBEAT_PERIOD))
                continue
            if event.status == EventStatus.ABORTED:
                continue

            self.queue.mark(event, EventStatus.COMPLETED)
            delta, records = self._execute(event)
            self._ingest(records)
            self._trace(event, EventStatus.COMPLETED.value,
                        delta.reason.value if delta.reason else None)
            completed.append(from_outcome(event.team, event.kind, event.energy_committed, delta))
            outcomes.append((event, delta))
            self._account(event, delta)
            for listener in self.listeners:
                listener(self, event, delta)

            if event.team == Team.BLUE and delta.success and event.kind in PREEMPTING_KINDS:
                for victim in preempt(self.queue, event, extra=applied):
                    self._trace(victim, EventStatus.ABORTED.value)
                    self._interruption_log(victim, OUTCOME_ABORTED)
                    aborted.append(victim)
        counters.aborted_events += len(aborted)

        blue = blue_step_reward(self.state, completed, self.scenario.honeytoken_bonus_enabled)
        red = red_step_reward(self.state, completed)
        counters.blue_reward += blue.total
        counters.red_reward += red.total
        for agent_id, inv in self.state.inventories.items():
            self.accrued[agent_id] += blue.total if inv.team == Team.BLUE else red.total

        dropped, rejected = self._query_agents()
        result = StepResult(
            tick=jump.t_next, dt_norm=jump.dt_norm, clipped=jump.clipped,
            blue=blue, red=red, applied=outcomes, nullified=nullified, aborted=aborted,
            dropped=dropped, rejected=rejected, active_blue=self.queue.active_blue,
        )
        if self.step_sink is not None:
            self.step_sink.write(json.dumps(result.to_record()) + "\n")
        return result

    # ---- agent queries ----

    def _idle_agents(self) -> List[str]:
        idle = []
        for agent_id in sorted(self.state.inventories):
            event = self.busy.get(agent_id)
            if event is None or event.status != EventStatus.PENDING:
                idle.append(agent_id)
        return idle

    def _ask(self, agent_id: str) -> Tuple[AgentAction, Verdict]:
        inv = self.state.inventories[agent_id]
        policy = self.policies[inv.team]
        tick = self.state.clock
        obs = AgentObservation(self, agent_id,
                               dt_norm=normalize_dt(tick - self.last_query[agent_id]),
                               reward=self.accrued[agent_id])
        self.last_query[agent_id] = tick
        self.accrued[agent_id] = 0.0
        try:
            pair = policy.act(obs)
            action = decode_action(pair)
        except ActionSpaceError as e:
            raise PolicyError(f"Policy {getattr(policy, 'name', policy)} emitted an "
                              f"out-of-space action for {agent_id} at tick {tick:.3f}: {e}")
        except NetForgeException:
            raise
        except Exception as e:
            raise PolicyError(f"Policy {getattr(policy, 'name', policy)} failed for "
                              f"{agent_id} at tick {tick:.3f} (step {self.counters.steps}): {e}") from e
        verdict = validate_action(self.state, agent_id, action, self.registry,
                                  self.scenario.honeytokens_enabled)
        return action, verdict

    def _enqueue(self, agent_id: str, action: AgentAction, verdict: Verdict) -> ScheduledEvent:
        inv = self.state.inventories[agent_id]
        spec = self.registry[action.type_id]
        tau = sample_sojourn(spec, self.state.rng.sojourn, self.scenario.sojourn_jitter)
        inv.energy -= spec.energy_cost
        self.counters.energy_debited += spec.energy_cost
        event = self.queue.push(ScheduledEvent(
            actor_id=agent_id, team=inv.team, type_id=action.type_id, target=action.target_slot,
            start_tick=self.state.clock, completion_tick=self.state.clock + tau,
            energy_committed=spec.energy_cost, spec=spec, origin_node=verdict.origin,
            held_tokens=inv.valid_token_names(),
        ))
        self.busy[agent_id] = event
        self._trace(event, EventStatus.PENDING.value)
        return event

    def _reject(self, agent_id: str, action: AgentAction, verdict: Verdict) -> None:
        self.counters.rejected_actions += 1
        reason = verdict.reason.value if verdict.reason else "unknown"
        self.counters.rejections[reason] = self.counters.rejections.get(reason, 0) + 1
        logger.debug(f"Rejected {agent_id} action {action.type_id}@{action.target_slot}: {reason}")

    def _query_agents(self) -> Tuple[int, int]:
        """Ask idle agents for actions; returns (dropped, rejected) counts"""
        blue_requests = []
        rejected = 0
        for agent_id in self._idle_agents():
            action, verdict = self._ask(agent_id)
            if not verdict.ok:
                self._reject(agent_id, action, verdict)
                rejected += 1
                continue
            if self.state.inventories[agent_id].team == Team.BLUE:
                blue_requests.append((agent_id, action, verdict))
            else:
                self._enqueue(agent_id, action, verdict)

        accepted, dropped = enforce_blue_cap(
            self.queue.active_blue,
            [(agent_id, action) for agent_id, action, _ in blue_requests],
        )
        verdicts = {agent_id: verdict for agent_id, _, verdict in blue_requests}
        for agent_id, action in accepted:
            self._enqueue(agent_id, action, verdicts[agent_id])
        for agent_id, action in dropped:
            logger.debug(f"Dropped {agent_id} action {action.type_id}: Blue concurrency cap")
        self.counters.dropped_blue_actions += len(dropped)
        return len(dropped), rejected

    def run(self, max_steps: Optional[int] = None) -> SimCounters:
        """Step until the horizon (or max_steps)"""
        while not self.done:
            if max_steps is not None and self.counters.steps >= max_steps:
                break
            if self.step() is None:
                break
        for policy in self.policies.values():
            if hasattr(policy, "finish"):
                policy.finish(self)
        return self.counters
