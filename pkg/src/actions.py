"""The 32-type action taxonomy: decoding, validation and state deltas

Validation and effect computation are pure reads of a WorldState. Only
apply_delta mutates, and the event engine is its only caller.
"""
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import ValidationError

from src.events import ScheduledEvent
from src.exceptions import ActionSpaceError, ScenarioError
from src.logger import setup_logger
from src.schemas import ActionRegistryFile, ActionSpec, EffectKind, Team
from src.state import (
    INTERNET_ORIGIN, AgentInventory, Compromise, Token, WorldState, apply_token_flush,
    route_sources,
)
from src.telemetry import (
    OUTCOME_FAILURE, OUTCOME_SUCCESS, OUTCOME_TRIP, LogDraft, outcome_draft,
)
import config

logger = setup_logger(__name__)


class Reason(str, Enum):
    """Machine-readable rejection reasons"""
    INVALID_TARGET = "invalid_target"
    WRONG_TEAM = "wrong_team"
    INSUFFICIENT_ENERGY = "insufficient_energy"
    ROUTE_BLOCKED = "route_blocked"
    NO_SESSION = "no_session"
    INSUFFICIENT_PRIVILEGE = "insufficient_privilege"
    ALREADY_PRIVILEGED = "already_privileged"
    NO_CREDENTIALS = "no_credentials"
    NO_TOKEN = "no_token"
    NOT_VULNERABLE = "not_vulnerable"
    ALREADY_COMPROMISED = "already_compromised"
    ALREADY_ISOLATED = "already_isolated"
    NOT_ISOLATED = "not_isolated"
    OUT_OF_ZONE = "out_of_zone"
    TARGET_ISOLATED = "target_isolated"
    DISABLED = "disabled"


# Kinds whose target slot is ignored
GLOBAL_KINDS = frozenset({EffectKind.NO_OP, EffectKind.TOKEN_ROTATE})


@dataclass(frozen=True)
class AgentAction:
    type_id: int
    target_slot: int


class ActionRegistry:
    """The 32 ActionSpecs indexed by type id"""

    def __init__(self, specs: List[ActionSpec]):
        self.specs: List[ActionSpec] = sorted(specs, key=lambda s: s.type_id)
        self.by_name: Dict[str, ActionSpec] = {s.name: s for s in self.specs}

    def __getitem__(self, type_id: int) -> ActionSpec:
        return self.specs[type_id]

    def __len__(self):
        return len(self.specs)

    def named(self, name: str) -> ActionSpec:
        return self.by_name[name]

    def team_types(self, team: Team) -> List[int]:
        return [s.type_id for s in self.specs if s.team == team]

    def of_kind(self, kind: EffectKind, team: Optional[Team] = None) -> List[ActionSpec]:
        return [s for s in self.specs if s.effect_kind == kind and (team is None or s.team == team)]

    @classmethod
    def load(cls, path: Optional[str] = None) -> "ActionRegistry":
        """Load and validate the registry file

        Raises:
            ScenarioError: missing file or a registry that is not exactly 32 specs
        """
        path = Path(path or config.ACTION_REGISTRY_PATH)
        if not path.exists():
            raise ScenarioError(f"Action registry not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                parsed = ActionRegistryFile.model_validate(json.load(f))
        except (json.JSONDecodeError, ValidationError) as e:
            logger.error(f"Invalid action registry {path}: {str(e)}")
            raise ScenarioError(f"Invalid action registry {path}: {str(e)}")
        logger.debug(f"Loaded {len(parsed.actions)} action specs from {path}")
        return cls(parsed.actions)


_DEFAULT_REGISTRY: Optional[ActionRegistry] = None


def default_registry() -> ActionRegistry:
    global _DEFAULT_REGISTRY
    if _DEFAULT_REGISTRY is None:
        _DEFAULT_REGISTRY = ActionRegistry.load()
    return _DEFAULT_REGISTRY


def decode_action(pair) -> AgentAction:
    """Decode a MultiDiscrete([32, 100]) pair

    Raises:
        ActionSpaceError: type or target outside the action space
    """
    try:
        a, t = int(pair[0]), int(pair[1])
    except (TypeError, ValueError, IndexError):
        raise ActionSpaceError(f"Malformed action pair: {pair!r}")
    if not 0 <= a < config.NUM_ACTION_TYPES:
        raise ActionSpaceError(f"Action type {a} outside [0, {config.NUM_ACTION_TYPES - 1}]")
    if not 0 <= t < config.MAX_NODES:
        raise ActionSpaceError(f"Target slot {t} outside [0, {config.MAX_NODES - 1}]")
    return AgentAction(type_id=a, target_slot=t)


# ============================================
# VALIDATION
# ============================================

@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: Optional[Reason] = None
    origin: int = INTERNET_ORIGIN

    @classmethod
    def reject(cls, reason: Reason) -> "Verdict":
        return cls(ok=False, reason=reason)


ACCEPT = Verdict(ok=True)


def _red_preconditions(state: WorldState, inv: AgentInventory, spec: ActionSpec,
                       target: int, honeytokens_enabled: bool) -> Verdict:
    node = state.nodes[target]
    kind = spec.effect_kind

    if kind == EffectKind.NO_OP:
        return ACCEPT
    if node.isolated:
        return Verdict.reject(Reason.TARGET_ISOLATED)

    if kind == EffectKind.EXPLOIT:
        if node.compromise > Compromise.HEALTHY:
            return Verdict.reject(Reason.ALREADY_COMPROMISED)
        if spec.vuln is None:
            if not node.services:
                return Verdict.reject(Reason.NOT_VULNERABLE)
        elif spec.vuln not in node.vulns:
            return Verdict.reject(Reason.NOT_VULNERABLE)
        # exploits travel without credentials, so token gates always hold them back
        sources = route_sources(state, target, None)
        if not sources:
            return Verdict.reject(Reason.ROUTE_BLOCKED)
        return Verdict(ok=True, origin=sources[0])

    if kind == EffectKind.LATERAL_MOVE:
        if node.compromise > Compromise.HEALTHY:
            return Verdict.reject(Reason.ALREADY_COMPROMISED)
        sources = [s for s in route_sources(state, target, inv) if s != INTERNET_ORIGIN]
        if not sources:
            return Verdict.reject(Reason.ROUTE_BLOCKED)
        if not inv.valid_token_names():
            return Verdict.reject(Reason.NO_TOKEN)
        return Verdict(ok=True, origin=sources[0])

    # remaining Red kinds act on a foothold
    if node.compromise == Compromise.HEALTHY:
        return Verdict.reject(Reason.NO_SESSION)

    if kind == EffectKind.CREDENTIAL_DUMP:
        if node.compromise < Compromise.ROOT:
            return Verdict.reject(Reason.INSUFFICIENT_PRIVILEGE)
        has_decoy = honeytokens_enabled and any(n == target for n, _ in state.honeytokens)
        if node.token is None and not has_decoy:
            return Verdict.reject(Reason.NO_CREDENTIALS)
    elif kind == EffectKind.PRIVILEGE_ESCALATION:
        if node.compromise >= Compromise.ROOT:
            return Verdict.reject(Reason.ALREADY_PRIVILEGED)
    return Verdict(ok=True, origin=target)


def _blue_preconditions(state: WorldState, inv: AgentInventory, spec: ActionSpec,
                        target: int, honeytokens_enabled: bool) -> Verdict:
    kind = spec.effect_kind
    if kind in GLOBAL_KINDS:
        return ACCEPT
    node = state.nodes[target]
    if inv.zone is not None and node.zone != inv.zone:
        return Verdict.reject(Reason.OUT_OF_ZONE)

    if kind == EffectKind.ISOLATE and node.isolated:
        return Verdict.reject(Reason.ALREADY_ISOLATED)
    if kind == EffectKind.RESTORE and not node.isolated:
        return Verdict.reject(Reason.NOT_ISOLATED)
    if kind == EffectKind.HONEYTOKEN and not honeytokens_enabled:
        return Verdict.reject(Reason.DISABLED)
    if kind == EffectKind.PATCH:
        wanted = node.vulns if spec.vuln is None else ({spec.vuln} & node.vulns)
        if not wanted:
            return Verdict.reject(Reason.NOT_VULNERABLE)
    return Verdict(ok=True, origin=target)


def check_preconditions(state: WorldState, agent_id: str, action: AgentAction,
                        spec: ActionSpec, honeytokens_enabled: bool = True) -> Verdict:
    """Team, target and precondition chain checks (no energy check)"""
    inv = state.inventories[agent_id]
    if spec.team != inv.team:
        return Verdict.reject(Reason.WRONG_TEAM)
    if spec.effect_kind not in GLOBAL_KINDS and action.target_slot >= state.topology.node_count:
        return Verdict.reject(Reason.INVALID_TARGET)
    if inv.team == Team.RED:
        return _red_preconditions(state, inv, spec, action.target_slot, honeytokens_enabled)
    return _blue_preconditions(state, inv, spec, action.target_slot, honeytokens_enabled)


def validate_action(state: WorldState, agent_id: str, action: AgentAction,
                    registry: Optional[ActionRegistry] = None,
                    honeytokens_enabled: bool = True) -> Verdict:
    """Full enqueue-time validation: team, target, energy, route and chain"""
    registry = registry or default_registry()
    spec = registry[action.type_id]
    inv = state.inventories[agent_id]
    if spec.team != inv.team:
        return Verdict.reject(Reason.WRONG_TEAM)
    if spec.effect_kind not in GLOBAL_KINDS and action.target_slot >= state.topology.node_count:
        return Verdict.reject(Reason.INVALID_TARGET)
    if inv.energy < spec.energy_cost:
        return Verdict.reject(Reason.INSUFFICIENT_ENERGY)
    return check_preconditions(state, agent_id, action, spec, honeytokens_enabled)


# ============================================
# STATE DELTAS
# ============================================

class Mutation(str, Enum):
    SET_COMPROMISE = "set_compromise"
    SET_ISOLATED = "set_isolated"
    GRANT_TOKEN = "grant_token"
    FLUSH_RED_TOKENS = "flush_red_tokens"
    REVOKE_NODE_TOKEN = "revoke_node_token"
    PLACE_HONEYTOKEN = "place_honeytoken"
    CONSUME_HONEYTOKEN = "consume_honeytoken"
    REMOVE_VULNS = "remove_vulns"
    DISCOVER = "discover"


@dataclass(frozen=True)
class FieldChange:
    """One absolute field-level mutation; re-applying it is a no-op"""
    op: Mutation
    node: int = -1
    value: object = None
    agent_id: str = ""

    def to_dict(self) -> dict:
        value = self.value
        if isinstance(value, Token):
            value = {"name": value.name, "decoy": value.decoy}
        elif isinstance(value, (set, frozenset, tuple)):
            value = sorted(value)
        elif isinstance(value, Compromise):
            value = int(value)
        return {"op": self.op.value, "node": self.node, "value": value, "agent_id": self.agent_id}

    @classmethod
    def from_dict(cls, raw: dict) -> "FieldChange":
        op = Mutation(raw["op"])
        value = raw.get("value")
        if op in (Mutation.GRANT_TOKEN, Mutation.PLACE_HONEYTOKEN, Mutation.CONSUME_HONEYTOKEN):
            value = Token(value["name"], bool(value.get("decoy", False)))
        elif op == Mutation.SET_COMPROMISE:
            value = Compromise(int(value))
        elif op in (Mutation.REMOVE_VULNS, Mutation.DISCOVER):
            value = frozenset(value)
        return cls(op=op, node=int(raw.get("node", -1)), value=value,
                   agent_id=raw.get("agent_id", ""))


@dataclass
class StateDelta:
    """Outcome of one completed event"""
    success: bool
    changes: List[FieldChange] = field(default_factory=list)
    drafts: List[LogDraft] = field(default_factory=list)
    reason: Optional[Reason] = None
    target: int = -1
    target_was_compromised: bool = False
    prev_compromise: Compromise = Compromise.HEALTHY
    new_compromise: Compromise = Compromise.HEALTHY
    honeytoken_tripped: bool = False


def _drafts(state: WorldState, spec: ActionSpec, target: int, outcome: str,
            origin: Team, tick: float) -> LogDraft:
    topo = state.topology
    node = topo.nodes[target]
    return outcome_draft(
        spec.effect_kind, outcome,
        tick=tick, node=target, zone=node.zone, computer=node.name, origin=origin,
        action_name=spec.name, address=topo.address(target),
        service=node.services[0] if node.services else "",
    )


def compute_effect(state: WorldState, agent_id: str, action: AgentAction, spec: ActionSpec,
                   tick: Optional[float] = None, honeytokens_enabled: bool = True) -> StateDelta:
    """Effect of an event completing now; preconditions are re-checked first

    A decayed precondition yields a failed delta with a failure log and
    no state change.
    Impact and Monitor kinds only emit telemetry; their deltas carry no
    field changes.
    """
    tick = state.clock if tick is None else tick
    inv = state.inventories[agent_id]
    team = inv.team
    kind = spec.effect_kind
    target = action.target_slot

    if kind == EffectKind.NO_OP:
        return StateDelta(success=True, target=-1)

    verdict = check_preconditions(state, agent_id, action, spec, honeytokens_enabled)
    in_range = 0 <= target < state.topology.node_count
    if not verdict.ok:
        delta = StateDelta(success=False, reason=verdict.reason, target=target if in_range else -1)
        if in_range:
            delta.target_was_compromised = state.nodes[target].compromise > Compromise.HEALTHY
            delta.prev_compromise = delta.new_compromise = state.nodes[target].compromise
            delta.drafts.append(_drafts(state, spec, target, OUTCOME_FAILURE, team, tick))
        return delta

    if kind == EffectKind.TOKEN_ROTATE:
        delta = StateDelta(success=True, target=-1)
        delta.changes.append(FieldChange(Mutation.FLUSH_RED_TOKENS))
        anchor = next((n.id for n in state.nodes if n.token is not None), 0)
        delta.drafts.append(_drafts(state, spec, anchor, OUTCOME_SUCCESS, team, tick))
        return delta

    node = state.nodes[target]
    delta = StateDelta(
        success=True,
        target=target,
        target_was_compromised=node.compromise > Compromise.HEALTHY,
        prev_compromise=node.compromise,
        new_compromise=node.compromise,
    )
    outcome = OUTCOME_SUCCESS

    if kind == EffectKind.EXPLOIT:
        level = Compromise.ROOT if spec.grants_root else Compromise.USER_SHELL
        delta.changes.append(FieldChange(Mutation.SET_COMPROMISE, target, level))
        delta.changes.append(FieldChange(Mutation.DISCOVER, target,
                                         frozenset(state.topology.adjacency[target])))
        delta.new_compromise = level
    elif kind == EffectKind.LATERAL_MOVE:
        delta.changes.append(FieldChange(Mutation.SET_COMPROMISE, target, Compromise.USER_SHELL))
        delta.changes.append(FieldChange(Mutation.DISCOVER, target,
                                         frozenset(state.topology.adjacency[target])))
        delta.new_compromise = Compromise.USER_SHELL
    elif kind == EffectKind.PRIVILEGE_ESCALATION:
        delta.changes.append(FieldChange(Mutation.SET_COMPROMISE, target, Compromise.ROOT))
        delta.new_compromise = Compromise.ROOT
    elif kind == EffectKind.CREDENTIAL_DUMP:
        decoy = None
        if honeytokens_enabled:
            decoy = next((tok for n, tok in sorted(state.honeytokens, key=lambda p: p[1].name)
                          if n == target), None)
        if decoy is not None:
            delta.changes.append(FieldChange(Mutation.GRANT_TOKEN, target, decoy, agent_id))
            delta.changes.append(FieldChange(Mutation.CONSUME_HONEYTOKEN, target, decoy))
            delta.honeytoken_tripped = True
            outcome = OUTCOME_TRIP
        else:
            delta.changes.append(FieldChange(Mutation.GRANT_TOKEN, target, node.token, agent_id))
    elif kind == EffectKind.SCAN:
        if team == Team.RED:
            delta.changes.append(FieldChange(Mutation.DISCOVER, target,
                                             frozenset(state.topology.adjacency[target])))
    elif kind == EffectKind.ISOLATE:
        delta.changes.append(FieldChange(Mutation.SET_ISOLATED, target, True))
    elif kind == EffectKind.RESTORE:
        delta.changes.append(FieldChange(Mutation.SET_ISOLATED, target, False))
    elif kind == EffectKind.CLEANUP:
        delta.changes.append(FieldChange(Mutation.SET_COMPROMISE, target, Compromise.HEALTHY))
        delta.new_compromise = Compromise.HEALTHY
    elif kind == EffectKind.HONEYTOKEN:
        name = node.token.name if node.token else config.GATE_TOKEN
        delta.changes.append(FieldChange(Mutation.PLACE_HONEYTOKEN, target, Token(name, decoy=True)))
    elif kind == EffectKind.PATCH:
        removed = node.vulns if spec.vuln is None else ({spec.vuln} & node.vulns)
        delta.changes.append(FieldChange(Mutation.REMOVE_VULNS, target, frozenset(removed)))
    elif kind == EffectKind.CREDENTIAL_RESET:
        if node.token is not None:
            delta.changes.append(FieldChange(Mutation.REVOKE_NODE_TOKEN, target, node.token.name))

    delta.drafts.append(_drafts(state, spec, target, outcome, team, tick))
    return delta


def apply_delta(state: WorldState, delta: StateDelta) -> WorldState:
    """Apply field changes; idempotent per delta"""
    for change in delta.changes:
        op = change.op
        if op == Mutation.SET_COMPROMISE:
            state.set_compromise(change.node, change.value)
        elif op == Mutation.SET_ISOLATED:
            state.set_isolated(change.node, bool(change.value))
        elif op == Mutation.GRANT_TOKEN:
            if change.value is not None:
                state.inventories[change.agent_id].tokens.add(change.value)
        elif op == Mutation.FLUSH_RED_TOKENS:
            apply_token_flush(state)
        elif op == Mutation.REVOKE_NODE_TOKEN:
            for inv in state.red_inventories():
                inv.tokens = {t for t in inv.tokens if t.decoy or t.name != change.value}
        elif op == Mutation.PLACE_HONEYTOKEN:
            state.honeytokens.add((change.node, change.value))
        elif op == Mutation.CONSUME_HONEYTOKEN:
            state.honeytokens.discard((change.node, change.value))
        elif op == Mutation.REMOVE_VULNS:
            state.nodes[change.node].vulns.difference_update(change.value)
        elif op == Mutation.DISCOVER:
            state.discovered.add(change.node)
            state.discovered.update(change.value)
    return state


def apply_effect(state: WorldState, event: ScheduledEvent, honeytokens_enabled: bool = True) -> StateDelta:
    """Compute and apply the effect of a maturing event at its completion tick"""
    delta = compute_effect(state, event.actor_id, AgentAction(event.type_id, event.target), event.spec,
                           event.completion_tick, honeytokens_enabled)
    apply_delta(state, delta)
    return delta

