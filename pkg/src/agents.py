"""Scripted, random and forward-cell policies behind one observe -> act interface"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.ctgmarl import EXPERIMENT_PRESETS, ForwardFlags, PolicyParams, critic_features, policy_forward
from src.events import EventStatus, normalize_dt
from src.exceptions import PolicyError
from src.kernels import GAEInputs, MultiDiscreteHead, ODEFunc, continuous_gae
from src.logger import setup_logger
from src.schemas import EffectKind, Team, ZoneName
from src.state import Compromise
from src.telemetry import green_noise
import config

logger = setup_logger(__name__)

ActionPair = Tuple[int, int]


class Policy:
    """Base policy: one instance drives every agent of a team"""

    name = "base"

    def reset(self, sim) -> None:
        pass

    def act(self, obs) -> ActionPair:
        raise NotImplementedError

    def finish(self, sim) -> None:
        pass

    def diagnostics(self) -> Dict[str, Optional[float]]:
        return {}


def _noop(obs) -> ActionPair:
    return obs.registry.of_kind(EffectKind.NO_OP, obs.team)[0].type_id, 0


def _first_of(obs, kind: EffectKind) -> int:
    specs = obs.registry.of_kind(kind, obs.team)
    if not specs:
        raise PolicyError(f"Registry has no {obs.team.value} action of kind {kind.value}")
    return specs[0].type_id


class RandomPolicy(Policy):
    """Uniform over the team's action types and all 100 target slots"""

    name = "random"

    def act(self, obs) -> ActionPair:
        types = obs.registry.team_types(obs.team)
        return int(types[int(obs.rng.integers(len(types)))]), int(obs.rng.integers(config.MAX_NODES))


class PassivePolicy(Policy):
    name = "passive"

    def act(self, obs) -> ActionPair:
        return _noop(obs)


class RedChainPolicy(Policy):
    """Exploit a foothold, escalate on a credential host, dump it, pass the ticket

    Candidates are tried in priority order and the first one that passes
    enqueue-time validation is issued.
    """

    name = "red-chain"

    def __init__(self):
        self.scanned: Dict[str, set] = {}

    def reset(self, sim) -> None:
        self.scanned = {}

    def _candidates(self, obs, view) -> Iterator[ActionPair]:
        registry = obs.registry
        pass_ticket = _first_of(obs, EffectKind.LATERAL_MOVE)
        dump = _first_of(obs, EffectKind.CREDENTIAL_DUMP)
        escalate = _first_of(obs, EffectKind.PRIVILEGE_ESCALATION)
        exploits = sorted(registry.of_kind(EffectKind.EXPLOIT, Team.RED),
                          key=lambda s: (not s.grants_root, s.vuln is None, s.base_duration))

        healthy = [n for n in view.discovered.values()
                   if n.compromise == Compromise.HEALTHY and not n.isolated]

        if view.tokens:
            for node in healthy:
                if node.zone == ZoneName.SECURE_VAULT:
                    yield pass_ticket, node.id

        for node_id, level in view.sessions.items():
            node = view.discovered.get(node_id)
            if node is None or not node.has_credentials:
                continue
            if level >= Compromise.ROOT:
                yield dump, node_id
            else:
                yield escalate, node_id

        depth = {ZoneName.SECURE_VAULT: 0, ZoneName.CORPORATE: 1, ZoneName.DMZ: 2}
        for node in sorted(healthy, key=lambda n: (not n.has_credentials,
                                                   depth.get(n.zone, 3), n.id)):
            for spec in exploits:
                if spec.vuln is None or spec.vuln in node.vulns:
                    yield spec.type_id, node.id

        scanned = self.scanned.setdefault(view.agent_id, set())
        scan = _first_of(obs, EffectKind.SCAN)
        for node_id in view.sessions:
            if node_id not in scanned:
                scanned.add(node_id)
                yield scan, node_id

    def act(self, obs) -> ActionPair:
        view = obs.red_view()
        for type_id, target in self._candidates(obs, view):
            if obs.validate(type_id, target).ok:
                return type_id, target
        return _noop(obs)


@dataclass
class _Remediation:
    node: int
    stage: str          # "isolate", "cleanup" or "reconnect"
    type_id: int


class BlueThresholdIsolatePolicy(Policy):
    """Isolate the node whose window drifts furthest from benign traffic

    Anomaly score is 1 - cosine(node window mean, benign centroid). A
    flagged node is isolated, cleaned and reconnected in turn.
    """

    name = "blue-threshold-isolate"

    def __init__(self, threshold: float = config.BLUE_ANOMALY_THRESHOLD):
        self.threshold = threshold
        self.centroid: Optional[np.ndarray] = None
        self.work: Dict[str, _Remediation] = {}

    def reset(self, sim) -> None:
        encoder = sim.ensure_encoder()
        rng = np.random.default_rng(config.ENCODER_FIT_SEED)
        benign = green_noise(0.0, config.BENIGN_CENTROID_TICKS, rng, sim.profile, sim.hosts)
        if not benign:
            self.centroid = None
        else:
            mean = encoder.encode_batch([r.xml_text for r in benign]).mean(axis=0)
            norm = np.linalg.norm(mean)
            self.centroid = mean / norm if norm > 0 else None
        self.work = {}

    def scores(self, obs) -> Dict[int, float]:
        if self.centroid is None:
            return {}
        embeddings = obs.node_embeddings()
        isolated = set(obs.isolated_nodes())
        out = {}
        for node_id, zone in enumerate(obs.node_zones):
            if (obs.zone is not None and zone != obs.zone) or node_id in isolated:
                continue
            row = embeddings[node_id]
            norm = np.linalg.norm(row)
            if norm == 0.0:
                continue
            out[node_id] = 1.0 - float(row @ self.centroid) / norm
        return out

    def _advance(self, obs) -> Optional[ActionPair]:
        job = self.work.get(obs.agent_id)
        if job is None:
            return None
        prev = obs.previous
        done = (prev is not None and prev.type_id == job.type_id and prev.target == job.node
                and prev.status == EventStatus.COMPLETED)
        if not done:
            if obs.validate(job.type_id, job.node).ok:
                return job.type_id, job.node
            self.work.pop(obs.agent_id)
            return None
        following = {"isolate": ("cleanup", EffectKind.CLEANUP),
                     "cleanup": ("reconnect", EffectKind.RESTORE)}.get(job.stage)
        if following is None:
            self.work.pop(obs.agent_id)
            return None
        stage, kind = following
        type_id = _first_of(obs, kind)
        self.work[obs.agent_id] = _Remediation(job.node, stage, type_id)
        return type_id, job.node

    def act(self, obs) -> ActionPair:
        pending = self._advance(obs)
        if pending is not None:
            return pending
        scores = self.scores(obs)
        if scores:
            node, score = max(scores.items(), key=lambda kv: (kv[1], -kv[0]))
            if score > self.threshold:
                isolate = _first_of(obs, EffectKind.ISOLATE)
                if obs.validate(isolate, node).ok:
                    logger.debug(f"{obs.agent_id} flags node {node} (score {score:.3f})")
                    self.work[obs.agent_id] = _Remediation(node, "isolate", isolate)
                    return isolate, node
        return _noop(obs)


class BlueIsolateSweepPolicy(Policy):
    """Isolate every node of the agent's zone in id order, then idle"""

    name = "blue-isolate-sweep"

    def act(self, obs) -> ActionPair:
        isolate = _first_of(obs, EffectKind.ISOLATE)
        for node_id, zone in enumerate(obs.node_zones):
            if obs.zone is not None and zone != obs.zone:
                continue
            if obs.validate(isolate, node_id).ok:
                return isolate, node_id
        return _noop(obs)


@dataclass
class _Rollout:
    h: np.ndarray
    values: List[float] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)
    dts: List[float] = field(default_factory=list)


class CTGMARLForwardPolicy(Policy):
    """Samples from the forward cell; keeps one hidden state per agent

    At episode end the Blue rollouts are scored with continuous-time GAE.
    """

    name = "ctgmarl-forward"

    def __init__(self, params: Optional[PolicyParams] = None,
                 flags: ForwardFlags = ForwardFlags(), deterministic: bool = False):
        self.params = params if params is not None else PolicyParams.initialize(config.FORWARD_INIT_SEED)
        self.params.check()
        self.flags = flags
        self.deterministic = deterministic
        self.func = ODEFunc(self.params.ode())
        self.rollouts: Dict[str, _Rollout] = {}
        self.drift_calls = 0
        self.advantages: List[float] = []

    def reset(self, sim) -> None:
        self.func = ODEFunc(self.params.ode())
        self.rollouts = {}
        self.drift_calls = 0
        self.advantages = []

    def _team_head(self, head: MultiDiscreteHead, obs) -> MultiDiscreteHead:
        allowed = np.full(config.NUM_ACTION_TYPES, config.MASK_BLOCKED)
        allowed[obs.registry.team_types(obs.team)] = 0.0
        return MultiDiscreteHead(head.logits_type + allowed, head.logits_target)

    def act(self, obs) -> ActionPair:
        rollout = self.rollouts.get(obs.agent_id)
        if rollout is None:
            rollout = self.rollouts[obs.agent_id] = _Rollout(h=np.zeros(self.params.hidden))
        critic_input = (critic_features(obs.sim.state)
                        if self.flags.critic == "ground_truth" else None)
        head, h_next, value, trace = policy_forward(
            obs.node_embeddings(), obs.mask(), obs.dt_norm, rollout.h, self.params,
            obs.node_zones, agent_zone=obs.zone, flags=self.flags,
            critic_input=critic_input, ode_func=self.func,
        )
        if trace.nfe:
            self.drift_calls += 1
        if rollout.values:
            rollout.rewards.append(obs.reward)
            rollout.dts.append(obs.dt_norm)
        rollout.values.append(value)
        rollout.h = h_next

        head = self._team_head(head, obs)
        type_id, target = head.mode() if self.deterministic else head.sample(obs.rng)
        return type_id, min(target, config.MAX_NODES - 1)

    def finish(self, sim) -> None:
        """Close each Blue rollout at the horizon and compute its advantages"""
        for agent_id, rollout in self.rollouts.items():
            if sim.state.inventories[agent_id].team != Team.BLUE or not rollout.values:
                continue
            rewards = rollout.rewards + [sim.accrued[agent_id]]
            dts = rollout.dts + [normalize_dt(sim.state.clock - sim.last_query[agent_id])]
            T = len(rewards)
            dones = np.zeros(T)
            dones[-1] = 1.0
            adv = continuous_gae(
                GAEInputs(
                    rewards=np.asarray(rewards),
                    values=np.asarray(rollout.values + [0.0]),
                    dts=np.asarray(dts),
                    dones=dones,
                ),
                use_beta=self.flags.use_beta,
            )
            self.advantages.extend(adv.tolist())

    def diagnostics(self) -> Dict[str, Optional[float]]:
        return {
            "ode_nfe_per_step": (self.func.nfe / self.drift_calls) if self.drift_calls else None,
            "mean_blue_advantage": float(np.mean(self.advantages)) if self.advantages else None,
        }


POLICIES: Dict[str, Callable[..., Policy]] = {
    "random": RandomPolicy,
    "passive": PassivePolicy,
    "red-chain": RedChainPolicy,
    "blue-threshold-isolate": BlueThresholdIsolatePolicy,
    "blue-isolate-sweep": BlueIsolateSweepPolicy,
    "ctgmarl-forward": CTGMARLForwardPolicy,
}


def scripted_policies() -> Dict[str, Callable[..., Policy]]:
    """Name -> factory for every shipped policy"""
    return dict(POLICIES)


def make_policy(name: str, weights: Optional[str] = None, preset: Optional[str] = None) -> Policy:
    """Build a policy by name

    "ctgmarl-forward" loads `weights` (or the configured archive when it
    exists, else a seeded Glorot initialization) and takes its ablation
    switches from `preset`.

    Raises:
        PolicyError: unknown policy or preset name
    """
    factory = POLICIES.get(name)
    if factory is None:
        raise PolicyError(f"Unknown policy '{name}'. Available: {', '.join(sorted(POLICIES))}")
    if factory is not CTGMARLForwardPolicy:
        return factory()

    flags = ForwardFlags()
    if preset is not None:
        if preset not in EXPERIMENT_PRESETS:
            raise PolicyError(f"Unknown preset '{preset}'. Available: {', '.join(EXPERIMENT_PRESETS)}")
        flags = EXPERIMENT_PRESETS[preset]
    path = weights or (config.FORWARD_WEIGHTS_PATH if Path(config.FORWARD_WEIGHTS_PATH).exists() else None)
    params = PolicyParams.load(path) if path else None
    return CTGMARLForwardPolicy(params=params, flags=flags)
