"""The continuous-time graph policy cell: parameter bundle, weights archive,
forward pass and ground-truth critic features"""
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.exceptions import KernelError, WeightsError
from src.kernels import (
    GATParams, GateParams, MultiDiscreteHead, ODEFunc, ODEParams, ZONE_CHAIN,
    gat_layer, gated_update, ode_rk4_drift, topology_message_pass,
)
from src.logger import setup_logger
from src.schemas import ZoneName
from src.state import Compromise, WorldState
import config

logger = setup_logger(__name__)

MAGIC = b"NFWTS\x00"
FORMAT_VERSION = 1

NODE_FEATURES = 10  # compromise one-hot (3), isolated, token holder, honeytoken, zone one-hot (4)
CRITIC_WIDTH = NODE_FEATURES * config.MAX_NODES + config.MAX_TOKENS
ZONE_ORDER = (ZoneName.DMZ, ZoneName.CORPORATE, ZoneName.SECURE_VAULT, ZoneName.INTERNET)


@dataclass(frozen=True)
class ForwardFlags:
    """Ablation switches of the forward cell"""
    use_gat: bool = True
    use_ode: bool = True
    use_beta: bool = True
    critic: str = "head"        # "head" or "ground_truth"


# Forward-policy configurations of the experiment matrix
EXPERIMENT_PRESETS: Dict[str, ForwardFlags] = {
    "ct-gmarl": ForwardFlags(),
    "r-mappo": ForwardFlags(use_ode=False),
    "qmix": ForwardFlags(use_ode=False, critic="ground_truth"),
    "no-ode": ForwardFlags(use_ode=False),
    "no-gat": ForwardFlags(use_gat=False),
    "no-beta": ForwardFlags(use_beta=False),
    "sim2real": ForwardFlags(),
}


@dataclass
class PolicyParams:
    """Named-tensor bundle for the forward cell"""
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)

    @staticmethod
    def shapes(hidden: int = config.HIDDEN_DIMENSION, heads: int = config.GAT_HEADS,
               obs_dim: int = config.EMBEDDING_DIMENSION) -> Dict[str, Tuple[int, ...]]:
        if hidden % heads != 0:
            raise KernelError(f"hidden {hidden} is not divisible by {heads} heads")
        d_head = hidden // heads
        return {
            "input.W": (obs_dim, hidden),
            "input.b": (hidden,),
            "gat.W": (heads, hidden, d_head),
            "gat.a": (heads, 2 * d_head),
            "gat.ln_gamma": (hidden,),
            "gat.ln_beta": (hidden,),
            "msg.W": (hidden, hidden),
            "ode.W1": (hidden, hidden),
            "ode.b1": (hidden,),
            "ode.W2": (hidden, hidden),
            "ode.b2": (hidden,),
            "gate.W_g": (hidden, 2 * hidden),
            "gate.ln_gamma": (hidden,),
            "gate.ln_beta": (hidden,),
            "gate.W_h": (hidden, 2 * hidden),
            "gate.b_h": (hidden,),
            "head.W_type": (config.NUM_ACTION_TYPES, hidden),
            "head.b_type": (config.NUM_ACTION_TYPES,),
            "head.W_target": (config.MAX_NODES, hidden),
            "head.b_target": (config.MAX_NODES,),
            "head.w_value": (hidden,),
            "head.b_value": (1,),
            "critic.w": (CRITIC_WIDTH,),
            "critic.b": (1,),
        }

    @classmethod
    def zeros(cls, hidden: int = config.HIDDEN_DIMENSION,
              heads: int = config.GAT_HEADS) -> "PolicyParams":
        tensors = {name: np.zeros(shape) for name, shape in cls.shapes(hidden, heads).items()}
        tensors["gat.ln_gamma"] = np.ones(hidden)
        tensors["gate.ln_gamma"] = np.ones(hidden)
        return cls(tensors)

    @classmethod
    def initialize(cls, seed: int = 0, hidden: int = config.HIDDEN_DIMENSION,
                   heads: int = config.GAT_HEADS, scale: float = 1.0) -> "PolicyParams":
        """Glorot-uniform weights, zero biases, unit LayerNorm scales"""
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in cls.shapes(hidden, heads).items():
            if len(shape) == 1:
                tensors[name] = np.zeros(shape)
                continue
            fan_in, fan_out = shape[-2], shape[-1]
            limit = scale * np.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = rng.uniform(-limit, limit, size=shape)
        tensors["gat.ln_gamma"] = np.ones(hidden)
        tensors["gate.ln_gamma"] = np.ones(hidden)
        return cls(tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise WeightsError(f"Missing tensor '{name}'")

    @property
    def hidden(self) -> int:
        return self["input.W"].shape[1]

    def gat(self) -> GATParams:
        return GATParams(self["gat.W"], self["gat.a"], self["gat.ln_gamma"], self["gat.ln_beta"])

    def ode(self) -> ODEParams:
        return ODEParams(self["ode.W1"], self["ode.b1"], self["ode.W2"], self["ode.b2"])

    def gate(self) -> GateParams:
        return GateParams(self["gate.W_g"], self["gate.ln_gamma"], self["gate.ln_beta"],
                          self["gate.W_h"], self["gate.b_h"])

    # ---- archive ----

    def to_bytes(self) -> bytes:
        """magic, version, count, then per tensor: name, rank, dims, LE float32 data"""
        parts = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(self.tensors))]
        for name in sorted(self.tensors):
            arr = np.ascontiguousarray(self.tensors[name], dtype="<f4")
            raw = name.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)))
            parts.append(raw)
            parts.append(struct.pack("<B", arr.ndim))
            parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            parts.append(arr.tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PolicyParams":
        if blob[:len(MAGIC)] != MAGIC:
            raise WeightsError("Not a weights archive (bad magic)")
        try:
            offset = len(MAGIC)
            version, count = struct.unpack_from("<HI", blob, offset)
            offset += 6
            if version != FORMAT_VERSION:
                raise WeightsError(f"Unsupported weights version {version}")
            tensors = {}
            for _ in range(count):
                (name_len,) = struct.unpack_from("<H", blob, offset)
                offset += 2
                name = blob[offset:offset + name_len].decode("utf-8")
                offset += name_len
                (ndim,) = struct.unpack_from("<B", blob, offset)
                offset += 1
                shape = struct.unpack_from(f"<{ndim}I", blob, offset)
                offset += 4 * ndim
                size = int(np.prod(shape)) if ndim else 1
                data = np.frombuffer(blob, dtype="<f4", count=size, offset=offset)
                offset += 4 * size
                tensors[name] = data.reshape(shape).astype(np.float64)
        except (struct.error, ValueError, UnicodeDecodeError) as e:
            raise WeightsError(f"Corrupt weights archive: {str(e)}")
        params = cls(tensors)
        params.check()
        return params

    def check(self) -> None:
        """Every expected tensor present with the expected shape"""
        hidden = self.hidden
        heads = self["gat.W"].shape[0]
        for name, shape in self.shapes(hidden, heads).items():
            if tuple(self[name].shape) != shape:
                raise WeightsError(f"Tensor '{name}' has shape {self[name].shape}, expected {shape}")

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        logger.info(f"Saved {len(self.tensors)} tensors to {path}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PolicyParams":
        path = Path(path)
        if not path.exists():
            raise WeightsError(f"Weights archive not found: {path}")
        params = cls.from_bytes(path.read_bytes())
        logger.info(f"Loaded weights from {path}")
        return params


@dataclass
class ForwardTrace:
    """Intermediate values of one forward pass"""
    features: np.ndarray
    spatial: np.ndarray
    zone_embeddings: Dict[ZoneName, np.ndarray]
    routed: Dict[ZoneName, np.ndarray]
    x_t: np.ndarray
    h_drifted: np.ndarray
    nfe: int


def zone_means(X: np.ndarray, zones: Sequence[ZoneName]) -> Dict[ZoneName, np.ndarray]:
    out = {}
    for zone in ZONE_CHAIN:
        rows = [i for i, z in enumerate(zones) if z == zone]
        if rows:
            out[zone] = X[rows].mean(axis=0)
    return out


def policy_forward(obs: np.ndarray, M: np.ndarray, dt: float, h_prev: np.ndarray,
                   params: PolicyParams, zones: Sequence[ZoneName],
                   agent_zone: Optional[ZoneName] = None,
                   flags: ForwardFlags = ForwardFlags(),
                   critic_input: Optional[np.ndarray] = None,
                   ode_func: Optional[ODEFunc] = None):
    """gat_layer -> topology_message_pass -> ode_rk4_drift -> gated_update -> heads

    Args:
        obs: (nodes, 128) per-node window observations
        M: (nodes, nodes) additive mask
        dt: normalized time since the previous forward pass
        h_prev: (hidden,) previous hidden state
        params: forward-cell parameter bundle
        zones: zone of each node row
        agent_zone: zone whose routed embedding feeds the cell; None pools all zones
        flags: ablation switches
        critic_input: ground-truth features for the separate value evaluation
        ode_func: reusable ODEFunc whose counter accumulates across calls

    Returns:
        (MultiDiscreteHead, h_next, value, ForwardTrace)
    """
    obs = np.asarray(obs, dtype=np.float64)
    n = obs.shape[0]
    if len(zones) != n:
        raise KernelError(f"{len(zones)} zone labels for {n} node rows")

    X = obs @ params["input.W"] + params["input.b"]
    spatial = gat_layer(X, M, params.gat()) if flags.use_gat else X
    pooled = zone_means(spatial, zones)
    routed = topology_message_pass(pooled, params["msg.W"])

    if agent_zone is not None and agent_zone in routed:
        x_t = routed[agent_zone]
    elif routed:
        x_t = np.mean(np.stack(list(routed.values())), axis=0)
    else:
        x_t = np.zeros(params.hidden)

    func = ode_func or ODEFunc(params.ode())
    before = func.nfe
    h_drifted = ode_rk4_drift(h_prev, dt, func) if flags.use_ode else np.asarray(h_prev, dtype=np.float64)
    h_next = gated_update(x_t, h_drifted, params.gate())

    logits_type = params["head.W_type"] @ h_next + params["head.b_type"]
    logits_target = params["head.W_target"] @ h_next + params["head.b_target"]
    if n < config.MAX_NODES:
        logits_target = logits_target.copy()
        logits_target[n:] = config.MASK_BLOCKED
    head = MultiDiscreteHead(logits_type, logits_target)

    if flags.critic == "ground_truth" and critic_input is not None:
        value = float(params["critic.w"] @ critic_input + params["critic.b"][0])
    else:
        value = float(params["head.w_value"] @ h_next + params["head.b_value"][0])

    trace = ForwardTrace(
        features=X, spatial=spatial, zone_embeddings=pooled, routed=routed,
        x_t=x_t, h_drifted=h_drifted, nfe=func.nfe - before,
    )
    return head, h_next, value, trace


def critic_features(state: WorldState, token_universe: Optional[Sequence[str]] = None) -> np.ndarray:
    """Noise-free global state for the centralized value evaluation

    Per node (padded to MAX_NODES): compromise one-hot, isolated flag,
    token-holder flag, honeytoken flag, zone one-hot; then a one-hot over
    the scenario token universe of valid tokens held by any Red agent.
    """
    feats = np.zeros(CRITIC_WIDTH, dtype=np.float64)
    decoyed = {n for n, _ in state.honeytokens}
    for node in state.nodes:
        base = node.id * NODE_FEATURES
        feats[base + int(node.compromise)] = 1.0
        feats[base + 3] = float(node.isolated)
        feats[base + 4] = float(node.token is not None)
        feats[base + 5] = float(node.id in decoyed)
        feats[base + 6 + ZONE_ORDER.index(node.zone)] = 1.0

    if token_universe is None:
        token_universe = sorted({n.token.name for n in state.nodes if n.token is not None})
    held = set()
    for inv in state.red_inventories():
        held |= inv.valid_token_names()
    offset = NODE_FEATURES * config.MAX_NODES
    for i, name in enumerate(list(token_universe)[:config.MAX_TOKENS]):
        if name in held:
            feats[offset + i] = 1.0
    return feats
