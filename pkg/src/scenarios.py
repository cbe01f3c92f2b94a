"""Scenario construction and loading"""
import json
from pathlib import Path
from typing import List, Tuple

from pydantic import ValidationError

from src.exceptions import ScenarioError
from src.logger import setup_logger
from src.schemas import (
    AgentSpec, GateSpec, NodeSpec, ScenarioConfig, ServiceSpec, Team, ZoneName, ZoneSpec,
)
import config

logger = setup_logger(__name__)

DMZ_SERVICES = [
    ("apache-httpd", ["CVE-2021-41773"]),
    ("exchange-owa", ["CVE-2021-26855"]),
    ("java-app", ["CVE-2021-44228"]),
]
WORKSTATION_SERVICES = [
    ("smb", ["MS17-010"]),
    ("rdp", ["CVE-2019-0708", "weak-password"]),
]
VAULT_SERVICES = [
    ("mssql", ["MS17-010"]),
    ("ics-hmi", ["CVE-2019-0708"]),
]


def _zone_sizes(node_count: int) -> Tuple[int, int, int]:
    share = config.BENCHMARK_ZONE_SHARE
    dmz = max(1, round(node_count * share["DMZ"]))
    vault = max(1, round(node_count * share["SecureVault"]))
    corp = node_count - dmz - vault
    return dmz, corp, vault


def benchmark_scenario(node_count: int = config.MAX_NODES, seed: int = 0,
                       horizon: float = config.DEFAULT_HORIZON) -> ScenarioConfig:
    """Three-subnet ZTNA layout scaled to node_count

    DMZ web tier, a Corporate subnet whose first host is the Domain
    Controller holding the gate token, and a token-gated SecureVault.
    One Red agent and one Blue agent per zone.
    """
    if node_count < 3:
        raise ScenarioError("The benchmark layout needs at least 3 nodes")
    if node_count > config.MAX_NODES:
        raise ScenarioError(f"node_count {node_count} exceeds {config.MAX_NODES}")

    dmz_n, corp_n, vault_n = _zone_sizes(node_count)
    if corp_n < 1:
        raise ScenarioError(f"node_count {node_count} leaves no Corporate hosts")

    nodes: List[NodeSpec] = []
    for i in range(dmz_n):
        name, vulns = DMZ_SERVICES[i % len(DMZ_SERVICES)]
        nodes.append(NodeSpec(
            id=len(nodes), name=f"DMZ-{name.upper()}-{i:02d}", zone=ZoneName.DMZ,
            services=[ServiceSpec(name=name, vulns=vulns), ServiceSpec(name="ssh")],
        ))
    for i in range(corp_n):
        if i == 0:
            nodes.append(NodeSpec(
                id=len(nodes), name="CORP-DC-00", zone=ZoneName.CORPORATE,
                services=[
                    ServiceSpec(name="kerberos", vulns=["CVE-2020-1472"]),
                    ServiceSpec(name="smb", vulns=["MS17-010"]),
                    ServiceSpec(name="ldap"),
                ],
                token=config.GATE_TOKEN,
            ))
            continue
        name, vulns = WORKSTATION_SERVICES[i % len(WORKSTATION_SERVICES)]
        nodes.append(NodeSpec(
            id=len(nodes), name=f"CORP-WS-{i:02d}", zone=ZoneName.CORPORATE,
            services=[ServiceSpec(name=name, vulns=vulns)],
        ))
    for i in range(vault_n):
        name, vulns = VAULT_SERVICES[i % len(VAULT_SERVICES)]
        nodes.append(NodeSpec(
            id=len(nodes), name=f"VAULT-{name.upper()}-{i:02d}", zone=ZoneName.SECURE_VAULT,
            services=[ServiceSpec(name=name, vulns=vulns)],
        ))

    by_zone = {
        zone: [n.id for n in nodes if n.zone == zone]
        for zone in (ZoneName.DMZ, ZoneName.CORPORATE, ZoneName.SECURE_VAULT)
    }
    edges = []
    for members in by_zone.values():
        edges.extend((a, b) for idx, a in enumerate(members) for b in members[idx + 1:])
    for outer, inner in ((ZoneName.DMZ, ZoneName.CORPORATE),
                         (ZoneName.CORPORATE, ZoneName.SECURE_VAULT)):
        edges.extend((a, b) for a in by_zone[outer] for b in by_zone[inner])

    return ScenarioConfig(
        name=f"benchmark-{node_count}",
        zones=[
            ZoneSpec(name=ZoneName(z), cidr=cidr)
            for z, cidr in config.BENCHMARK_CIDRS.items()
        ],
        nodes=nodes,
        edges=edges,
        zone_gates=[
            GateSpec(src=ZoneName.CORPORATE, dst=ZoneName.SECURE_VAULT, token=config.GATE_TOKEN),
            GateSpec(src=ZoneName.SECURE_VAULT, dst=ZoneName.SECURE_VAULT, token=config.GATE_TOKEN),
        ],
        tokens=[config.GATE_TOKEN],
        agents=[
            AgentSpec(agent_id="red_0", team=Team.RED),
            AgentSpec(agent_id="blue_corp", team=Team.BLUE, zone=ZoneName.CORPORATE),
            AgentSpec(agent_id="blue_dmz", team=Team.BLUE, zone=ZoneName.DMZ),
            AgentSpec(agent_id="blue_vault", team=Team.BLUE, zone=ZoneName.SECURE_VAULT),
        ],
        horizon=horizon,
        seed=seed,
    )


def single_node_scenario(horizon: float = 50.0, seed: int = 0) -> ScenarioConfig:
    """One DMZ host, no gates"""
    return ScenarioConfig(
        name="single-node",
        zones=[ZoneSpec(name=ZoneName.DMZ, cidr=config.BENCHMARK_CIDRS["DMZ"])],
        nodes=[NodeSpec(
            id=0, name="DMZ-WEB-00", zone=ZoneName.DMZ,
            services=[ServiceSpec(name="apache-httpd", vulns=["CVE-2021-41773"])],
        )],
        agents=[
            AgentSpec(agent_id="red_0", team=Team.RED),
            AgentSpec(agent_id="blue_dmz", team=Team.BLUE, zone=ZoneName.DMZ),
        ],
        horizon=horizon,
        seed=seed,
    )


def load_scenario(ref: str) -> ScenarioConfig:
    """Resolve a scenario reference

    Accepts "benchmark", "benchmark:<nodes>", "single-node", a file name
    under the scenario directory, or a path to a JSON file.
    """
    if ref == "benchmark":
        return benchmark_scenario()
    if ref.startswith("benchmark:"):
        try:
            count = int(ref.split(":", 1)[1])
        except ValueError:
            raise ScenarioError(f"Bad benchmark size in '{ref}'")
        return benchmark_scenario(count)
    if ref == "single-node":
        return single_node_scenario()

    path = Path(ref)
    if not path.exists():
        path = Path(config.SCENARIO_DIR) / ref
        if path.suffix != ".json":
            path = path.with_suffix(".json")
    if not path.exists():
        raise ScenarioError(f"Scenario not found: {ref}")

    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        scenario = ScenarioConfig.model_validate(raw)
    except (json.JSONDecodeError, ValidationError) as e:
        logger.error(f"Invalid scenario file {path}: {str(e)}")
        raise ScenarioError(f"Invalid scenario file {path}: {str(e)}")
    logger.info(f"Loaded scenario '{scenario.name}' from {path}")
    return scenario

