"""Ground-truth network state: topology, zone gates, tokens and inventories

All mutation goes through the event engine. Helpers here read the state or
perform the primitive field changes that a StateDelta is made of.
"""
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

import numpy as np

from src.exceptions import ScenarioError
from src.logger import setup_logger
from src.schemas import ScenarioConfig, Team, ZoneName
import config

logger = setup_logger(__name__)

# Virtual source for Red actions launched from outside the perimeter
INTERNET_ORIGIN = -1

ZONE_CHAIN = (ZoneName.DMZ, ZoneName.CORPORATE, ZoneName.SECURE_VAULT)


class Compromise(IntEnum):
    """Compromise lattice: Healthy < UserShell < Root"""
    HEALTHY = 0
    USER_SHELL = 1
    ROOT = 2


@dataclass(frozen=True)
class Token:
    """Identity token; decoys carry a real-looking name but fail every gate"""
    name: str
    decoy: bool = False


@dataclass
class Node:
    id: int
    name: str
    zone: ZoneName
    services: Tuple[str, ...]
    vulns: Set[str]
    token: Optional[Token] = None
    compromise: Compromise = Compromise.HEALTHY
    isolated: bool = False


@dataclass
class AgentInventory:
    agent_id: str
    team: Team
    energy: float
    zone: Optional[ZoneName] = None
    tokens: Set[Token] = field(default_factory=set)

    def valid_token_names(self) -> FrozenSet[str]:
        """Names of non-decoy tokens held"""
        return frozenset(t.name for t in self.tokens if not t.decoy)


@dataclass
class Topology:
    nodes: List[Node]
    declared_edges: List[FrozenSet[int]]
    adjacency: List[Set[int]]
    zone_gates: Dict[Tuple[ZoneName, ZoneName], Optional[str]]
    cidrs: Dict[ZoneName, str]
    ingress_zones: FrozenSet[ZoneName]
    directed: bool = False

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def zone_members(self, zone: ZoneName) -> List[int]:
        return [n.id for n in self.nodes if n.zone == zone]

    def address(self, node_id: int) -> str:
        """Host address inside the zone CIDR"""
        node = self.nodes[node_id]
        base = self.cidrs.get(node.zone, "0.0.0.0/0").split("/")[0].rsplit(".", 1)[0]
        members = self.zone_members(node.zone)
        return f"{base}.{10 + members.index(node_id)}"


@dataclass
class RngStreams:
    """Named generators split from one master seed"""
    sojourn: np.random.Generator
    green: np.random.Generator
    policy: np.random.Generator
    templates: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RngStreams":
        children = np.random.SeedSequence(seed).spawn(4)
        return cls(*(np.random.default_rng(c) for c in children))


@dataclass
class WorldState:
    clock: float
    topology: Topology
    inventories: Dict[str, AgentInventory]
    rng: RngStreams
    honeytokens: Set[Tuple[int, Token]] = field(default_factory=set)
    discovered: Set[int] = field(default_factory=set)
    healthy_count: int = 0
    compromised_count: int = 0
    isolated_count: int = 0

    @property
    def nodes(self) -> List[Node]:
        return self.topology.nodes

    def red_inventories(self) -> List[AgentInventory]:
        return [inv for inv in self.inventories.values() if inv.team == Team.RED]

    def blue_inventories(self) -> List[AgentInventory]:
        return [inv for inv in self.inventories.values() if inv.team == Team.BLUE]

    def controlled_nodes(self) -> List[int]:
        """Nodes with a live Red session (sessions are team-shared)"""
        return [n.id for n in self.topology.nodes if n.compromise > Compromise.HEALTHY]

    def recount(self) -> None:
        nodes = self.topology.nodes
        self.compromised_count = sum(1 for n in nodes if n.compromise > Compromise.HEALTHY)
        self.isolated_count = sum(1 for n in nodes if n.isolated)
        self.healthy_count = sum(
            1 for n in nodes if n.compromise == Compromise.HEALTHY and not n.isolated
        )

    # ---- primitive mutations (used by apply_delta only) ----

    def set_compromise(self, node_id: int, level: Compromise) -> None:
        node = self.topology.nodes[node_id]
        if node.compromise == level:
            return
        was_healthy = node.compromise == Compromise.HEALTHY
        node.compromise = level
        now_healthy = level == Compromise.HEALTHY
        if was_healthy and not now_healthy:
            self.compromised_count += 1
            if not node.isolated:
                self.healthy_count -= 1
        elif now_healthy and not was_healthy:
            self.compromised_count -= 1
            if not node.isolated:
                self.healthy_count += 1

    def set_isolated(self, node_id: int, isolated: bool) -> None:
        topo = self.topology
        node = topo.nodes[node_id]
        if node.isolated == isolated:
            return
        node.isolated = isolated
        healthy = node.compromise == Compromise.HEALTHY
        if isolated:
            self.isolated_count += 1
            if healthy:
                self.healthy_count -= 1
            for other in list(topo.adjacency[node_id]):
                topo.adjacency[other].discard(node_id)
            topo.adjacency[node_id].clear()
            for adj in topo.adjacency:
                adj.discard(node_id)
        else:
            self.isolated_count -= 1
            if healthy:
                self.healthy_count += 1
            for other in topo.declared_edges[node_id]:
                if not topo.nodes[other].isolated:
                    topo.adjacency[node_id].add(other)
            for other, declared in enumerate(topo.declared_edges):
                if node_id in declared and not topo.nodes[other].isolated:
                    topo.adjacency[other].add(node_id)


def build_topology(scenario: ScenarioConfig) -> Topology:
    """Validate a scenario and build its topology

    Raises:
        ScenarioError: duplicate or out-of-range node ids, too many nodes,
            gates naming unknown tokens, empty zones or dangling edges
    """
    n = len(scenario.nodes)
    if n > config.MAX_NODES:
        raise ScenarioError(f"Scenario declares {n} nodes; at most {config.MAX_NODES} target slots exist")

    ids = [spec.id for spec in scenario.nodes]
    if len(set(ids)) != len(ids):
        raise ScenarioError("Duplicate NodeId in scenario")
    if sorted(ids) != list(range(n)):
        raise ScenarioError(f"Node ids must cover 0..{n - 1} exactly")

    token_universe = set(scenario.tokens)
    declared_zones = {z.name for z in scenario.zones}
    for spec in scenario.nodes:
        if spec.zone not in declared_zones:
            raise ScenarioError(f"Node {spec.id} references undeclared zone {spec.zone.value}")
        if spec.token is not None and spec.token not in token_universe:
            raise ScenarioError(f"Node {spec.id} holds unknown token {spec.token}")
    for zone in declared_zones:
        if zone != ZoneName.INTERNET and not any(s.zone == zone for s in scenario.nodes):
            raise ScenarioError(f"Zone {zone.value} has no nodes")

    gates: Dict[Tuple[ZoneName, ZoneName], Optional[str]] = {}
    for gate in scenario.zone_gates:
        if gate.token is not None and gate.token not in token_universe:
            raise ScenarioError(
                f"Zone gate {gate.src.value}->{gate.dst.value} references unknown token {gate.token}"
            )
        gates[(gate.src, gate.dst)] = gate.token

    nodes = []
    for spec in sorted(scenario.nodes, key=lambda s: s.id):
        vulns = {v for svc in spec.services for v in svc.vulns}
        nodes.append(Node(
            id=spec.id,
            name=spec.name,
            zone=spec.zone,
            services=tuple(svc.name for svc in spec.services),
            vulns=vulns,
            token=Token(spec.token) if spec.token else None,
        ))

    declared: List[Set[int]] = [set() for _ in range(n)]
    for src, dst in scenario.edges:
        if not (0 <= src < n and 0 <= dst < n):
            raise ScenarioError(f"Edge ({src}, {dst}) references an unknown node")
        if src == dst:
            continue
        declared[src].add(dst)
        if not scenario.directed:
            declared[dst].add(src)

    cidrs = {z.name: z.cidr for z in scenario.zones}
    topology = Topology(
        nodes=nodes,
        declared_edges=[frozenset(d) for d in declared],
        adjacency=[set(d) for d in declared],
        zone_gates=gates,
        cidrs=cidrs,
        ingress_zones=frozenset(scenario.ingress_zones),
        directed=scenario.directed,
    )
    logger.info(
        f"Built topology '{scenario.name}': {n} nodes, "
        f"{sum(len(d) for d in declared)} directed links, {len(gates)} gates"
    )
    return topology


def build_world(scenario: ScenarioConfig, seed: Optional[int] = None) -> WorldState:
    """Fresh world state for an episode"""
    topology = build_topology(scenario)
    inventories = {
        agent.agent_id: AgentInventory(
            agent_id=agent.agent_id,
            team=agent.team,
            energy=agent.energy,
            zone=agent.zone,
        )
        for agent in scenario.agents
    }
    state = WorldState(
        clock=0.0,
        topology=topology,
        inventories=inventories,
        rng=RngStreams.from_seed(scenario.seed if seed is None else seed),
    )
    state.discovered = {n.id for n in topology.nodes if n.zone in topology.ingress_zones}
    state.recount()
    return state


def _gate_open(topology: Topology, src_zone: ZoneName, dst_zone: ZoneName,
               held: FrozenSet[str]) -> bool:
    required = topology.zone_gates.get((src_zone, dst_zone))
    return required is None or required in held


def can_route(state: WorldState, src: int, dst: int,
              inv: Optional[AgentInventory] = None) -> bool:
    """True iff a live edge src->dst exists and every zone gate on it is satisfied

    src may be INTERNET_ORIGIN, which reaches non-isolated nodes of the
    ingress zones (subject to any Internet->zone gate).
    """
    topo = state.topology
    held = inv.valid_token_names() if inv is not None else frozenset()
    dst_node = topo.nodes[dst]
    if dst_node.isolated:
        return False
    if src == INTERNET_ORIGIN:
        return (dst_node.zone in topo.ingress_zones
                and _gate_open(topo, ZoneName.INTERNET, dst_node.zone, held))
    src_node = topo.nodes[src]
    if src_node.isolated or dst not in topo.adjacency[src]:
        return False
    return _gate_open(topo, src_node.zone, dst_node.zone, held)


def route_sources(state: WorldState, dst: int,
                  inv: Optional[AgentInventory] = None) -> List[int]:
    """Red footholds (plus the Internet) from which dst is routable"""
    sources = [n for n in state.controlled_nodes() if n != dst and can_route(state, n, dst, inv)]
    if can_route(state, INTERNET_ORIGIN, dst, inv):
        sources.append(INTERNET_ORIGIN)
    return sources


def apply_token_flush(state: WorldState) -> WorldState:
    """Clear every Red inventory; Blue inventories and honeytokens stay"""
    for inv in state.red_inventories():
        inv.tokens.clear()
    return state


def topology_mask(state: WorldState,
                  inventory: Optional[AgentInventory] = None) -> np.ndarray:
    """Additive attention mask over nodes

    0 on the diagonal and wherever a live link joins two non-isolated nodes
    whose cross-zone gates (either direction) the observer can pass;
    MASK_BLOCKED elsewhere. Intra-zone gates are not reflected.
    """
    topo = state.topology
    n = topo.node_count
    held = inventory.valid_token_names() if inventory is not None else frozenset()
    mask = np.full((n, n), config.MASK_BLOCKED, dtype=np.float64)
    np.fill_diagonal(mask, 0.0)
    nodes = topo.nodes
    for i, neighbours in enumerate(topo.adjacency):
        if nodes[i].isolated:
            continue
        zi = nodes[i].zone
        for j in neighbours:
            if nodes[j].isolated:
                continue
            zj = nodes[j].zone
            if zi != zj and not (_gate_open(topo, zi, zj, held) and _gate_open(topo, zj, zi, held)):
                continue
            mask[i, j] = 0.0
            if not topo.directed:
                mask[j, i] = 0.0
    return mask
