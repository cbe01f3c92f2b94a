"""Pydantic schemas for scenario files, the action registry and run outputs

Scenario and registry files are JSON documents validated here before any
simulator state is built. Metric rows are emitted through the same models
so the JSONL outputs stay stable.
"""
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

import config


class Team(str, Enum):
    """Agent teams"""
    RED = "Red"
    BLUE = "Blue"
    GREEN = "Green"
    SYSTEM = "System"


class ZoneName(str, Enum):
    """Network zones of the benchmark layout"""
    DMZ = "DMZ"
    CORPORATE = "Corporate"
    SECURE_VAULT = "SecureVault"
    INTERNET = "Internet"


class HypervisorMode(str, Enum):
    """Execution backends behind the dispatcher"""
    SIM = "sim"
    REPLAY = "replay"
    REAL_STUB = "real"


class EffectKind(str, Enum):
    """What a completed action does to the world"""
    EXPLOIT = "Exploit"
    CREDENTIAL_DUMP = "CredentialDump"
    LATERAL_MOVE = "LateralMove"
    PRIVILEGE_ESCALATION = "PrivilegeEscalation"
    SCAN = "Scan"
    IMPACT = "Impact"
    ISOLATE = "Isolate"
    RESTORE = "Restore"
    CLEANUP = "Cleanup"
    TOKEN_ROTATE = "TokenRotate"
    HONEYTOKEN = "Honeytoken"
    PATCH = "Patch"
    CREDENTIAL_RESET = "CredentialReset"
    MONITOR = "Monitor"
    NO_OP = "NoOp"


# ============================================
# SCENARIO
# ============================================

class ServiceSpec(BaseModel):
    """A service running on a node with its vulnerability tags"""
    name: str = Field(..., min_length=1)
    vulns: List[str] = Field(default_factory=list)


class ZoneSpec(BaseModel):
    """A subnet and its CIDR label"""
    name: ZoneName
    cidr: str = Field(..., pattern=r"^\d{1,3}(\.\d{1,3}){3}/\d{1,2}$")


class NodeSpec(BaseModel):
    """A host in the scenario"""
    id: int = Field(..., ge=0)
    name: str = Field(..., min_length=1)
    zone: ZoneName
    services: List[ServiceSpec] = Field(default_factory=list)
    token: Optional[str] = Field(None, description="Identity token held by this node")


class GateSpec(BaseModel):
    """Zero-Trust gate: traffic from src zone to dst zone needs the token"""
    src: ZoneName
    dst: ZoneName
    token: Optional[str] = None


class AgentSpec(BaseModel):
    """Roster entry"""
    agent_id: str = Field(..., min_length=1)
    team: Team
    zone: Optional[ZoneName] = Field(None, description="Assigned zone for Blue agents")
    energy: float = Field(config.DEFAULT_ENERGY_BUDGET, ge=0)

    @field_validator("team")
    @classmethod
    def validate_team(cls, v):
        if v not in (Team.RED, Team.BLUE):
            raise ValueError("Roster agents must be Red or Blue")
        return v


class ScenarioConfig(BaseModel):
    """Complete scenario description loaded from a JSON file"""
    name: str = "scenario"
    zones: List[ZoneSpec] = Field(..., min_length=1)
    nodes: List[NodeSpec] = Field(..., min_length=1)
    edges: List[Tuple[int, int]] = Field(default_factory=list)
    directed: bool = False
    zone_gates: List[GateSpec] = Field(default_factory=list)
    tokens: List[str] = Field(default_factory=list)
    ingress_zones: List[ZoneName] = Field(default_factory=lambda: [ZoneName.DMZ])
    agents: List[AgentSpec] = Field(default_factory=list)
    horizon: float = Field(config.DEFAULT_HORIZON, ge=0)
    seed: int = 0
    green_enabled: bool = True
    green_lambda_day: float = Field(config.GREEN_LAMBDA_DAY, ge=0)
    green_lambda_night: float = Field(config.GREEN_LAMBDA_NIGHT, ge=0)
    day_start_hour: int = Field(config.DAY_START_HOUR, ge=0, le=config.DAY_LENGTH)
    day_end_hour: int = Field(config.DAY_END_HOUR, ge=0, le=config.DAY_LENGTH)
    sojourn_jitter: float = Field(config.SOJOURN_JITTER, ge=0, lt=1)
    honeytokens_enabled: bool = True
    honeytoken_bonus_enabled: bool = True
    action_registry_path: Optional[str] = None
    encoder_path: Optional[str] = None
    mode: HypervisorMode = HypervisorMode.SIM
    transcript_path: Optional[str] = None

    @field_validator("tokens")
    @classmethod
    def validate_unique_tokens(cls, v):
        if len(set(v)) != len(v):
            raise ValueError("Token names must be unique per scenario")
        return v

    @model_validator(mode="after")
    def validate_roster(self):
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError("Agent ids must be unique")
        if self.day_end_hour < self.day_start_hour:
            raise ValueError("day_end_hour must not precede day_start_hour")
        return self

    @property
    def node_count(self) -> int:
        return len(self.nodes)


# ============================================
# ACTION REGISTRY
# ============================================

class ActionSpec(BaseModel):
    """One of the 32 tactical action types"""
    model_config = ConfigDict(frozen=True)

    type_id: int = Field(..., ge=0, lt=config.NUM_ACTION_TYPES)
    name: str
    team: Team
    mitre_ref: str = ""
    energy_cost: float = Field(..., ge=0)
    base_duration: float = Field(..., gt=0)
    effect_kind: EffectKind
    vuln: Optional[str] = Field(None, description="Vulnerability tag the action needs or removes")
    grants_root: bool = False
    cve: Optional[str] = Field(None, description="CVE or script id for the live executor contract")
    script: Optional[str] = None


class ActionRegistryFile(BaseModel):
    """On-disk registry: exactly 32 specs with ids 0..31"""
    version: int = 1
    actions: List[ActionSpec]

    @field_validator("actions")
    @classmethod
    def validate_complete(cls, v):
        ids = sorted(a.type_id for a in v)
        if ids != list(range(config.NUM_ACTION_TYPES)):
            raise ValueError(
                f"Registry must define type ids 0..{config.NUM_ACTION_TYPES - 1} exactly once"
            )
        return v


# ============================================
# RUN OUTPUTS
# ============================================

class BlueRewardBreakdown(BaseModel):
    """Blue step reward: total = tactical + health - economics - cost"""
    tactical: float = 0.0
    health: float = 0.0
    economics: float = 0.0
    cost: float = 0.0
    total: float = 0.0


class RedRewardBreakdown(BaseModel):
    """Red step reward: total = tactical + progression - cost"""
    tactical: float = 0.0
    progression: float = 0.0
    cost: float = 0.0
    total: float = 0.0


class EpisodeMetrics(BaseModel):
    """Per-episode summary row"""
    scenario: str = ""
    seed: int = 0
    episode: int = 0
    blue_policy: str = ""
    red_policy: str = ""
    blue_reward: float = 0.0
    red_reward: float = 0.0
    services_restored: int = Field(0, ge=0)
    cleanup_completions: int = Field(0, ge=0)
    successful_exploits: int = Field(0, ge=0)
    steps: int = Field(0, ge=0)
    final_tick: float = 0.0
    steps_per_second: float = 0.0
    dropped_blue_actions: int = Field(0, ge=0)
    rejected_actions: int = Field(0, ge=0)
    nullified_events: int = Field(0, ge=0)
    aborted_events: int = Field(0, ge=0)
    clipped_dt_fraction: float = 0.0
    honeytoken_trips: int = Field(0, ge=0)
    vault_compromised: bool = False
    green_records: int = Field(0, ge=0)
    red_records: int = Field(0, ge=0)
    oov_records: int = Field(0, ge=0)
    ode_nfe_per_step: Optional[float] = None
    mean_blue_advantage: Optional[float] = None
    wall_seconds: float = 0.0

    def deterministic_view(self) -> dict:
        """Row without wall-clock fields"""
        return self.model_dump(exclude={"steps_per_second", "wall_seconds"})


class CellFailure(BaseModel):
    """A matrix cell that raised"""
    config: str
    seed: int
    error: str


class RunSummary(BaseModel):
    """Rows of a matrix run plus aggregates per configuration"""
    rows: List[EpisodeMetrics] = Field(default_factory=list)
    aggregate: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    failures: List[CellFailure] = Field(default_factory=list)
