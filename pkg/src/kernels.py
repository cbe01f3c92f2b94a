"""Forward-only numeric kernels: masked graph attention, RK4 drift, gated update,
continuous-time GAE and PPO loss evaluation

All kernels are pure numpy (float64) and hold no state apart from the
evaluation counter on ODEFunc.
"""
from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, log_softmax, softmax

from src.exceptions import KernelError
from src.schemas import ZoneName
import config

ZONE_CHAIN = (ZoneName.DMZ, ZoneName.CORPORATE, ZoneName.SECURE_VAULT)


def _check_finite(name: str, *arrays) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise KernelError(f"{name}: non-finite input")


def layer_norm(x: np.ndarray, gamma, beta, eps: float = config.LAYER_NORM_EPS) -> np.ndarray:
    """Normalize over the last axis, then scale and shift"""
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * gamma + beta


def leaky_relu(x: np.ndarray, slope: float = config.LEAKY_RELU_SLOPE) -> np.ndarray:
    return np.where(x >= 0, x, slope * x)


# ============================================
# SPATIAL ATTENTION
# ============================================

@dataclass(frozen=True)
class GATParams:
    """K attention heads of width hidden/K plus a global LayerNorm pair

    W: (K, hidden, hidden/K); a: (K, 2 * hidden/K); ln_gamma, ln_beta: (hidden,)
    """
    W: np.ndarray
    a: np.ndarray
    ln_gamma: np.ndarray
    ln_beta: np.ndarray

    @property
    def heads(self) -> int:
        return self.W.shape[0]

    @property
    def hidden(self) -> int:
        return self.W.shape[1]


def attention_weights(X: np.ndarray, M: np.ndarray, W_k: np.ndarray, a_k: np.ndarray,
                      slope: float = config.LEAKY_RELU_SLOPE) -> Tuple[np.ndarray, np.ndarray]:
    """Row-softmax attention of one head and its projected features"""
    Wh = X @ W_k
    d = W_k.shape[1]
    src = Wh @ a_k[:d]
    dst = Wh @ a_k[d:]
    e = leaky_relu(src[:, None] + dst[None, :], slope) + M
    return softmax(e, axis=1), Wh


def gat_layer(X: np.ndarray, M: np.ndarray, params: GATParams,
              return_attention: bool = False):
    """Masked multi-head attention with residual LayerNorm

    X'_i = LayerNorm(h_i + concat_k tanh(sum_j alpha^k_ij W_k h_j))
    """
    X = np.asarray(X, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise KernelError(f"Mask must be square, got {M.shape}")
    if X.ndim != 2 or X.shape[0] != M.shape[0]:
        raise KernelError(f"Feature rows {X.shape} do not match mask {M.shape}")
    if X.shape[1] != params.hidden or params.W.shape[2] * params.heads != params.hidden:
        raise KernelError(
            f"Feature width {X.shape[1]} incompatible with {params.heads} heads of "
            f"{params.W.shape[2]} over hidden {params.hidden}"
        )
    if np.any(np.diag(M) != 0.0):
        raise KernelError("Mask diagonal must be 0")
    _check_finite("gat_layer", X)

    outputs, attentions = [], []
    for k in range(params.heads):
        alpha, Wh = attention_weights(X, M, params.W[k], params.a[k])
        outputs.append(np.tanh(alpha @ Wh))
        attentions.append(alpha)
    out = layer_norm(X + np.concatenate(outputs, axis=1), params.ln_gamma, params.ln_beta)
    if return_attention:
        return out, attentions
    return out


def topology_message_pass(zone_embeddings: Mapping, W_msg: np.ndarray,
                          chain: Sequence[ZoneName] = ZONE_CHAIN) -> Dict[ZoneName, np.ndarray]:
    """Route aggregated embeddings one hop inward along the zone chain

    h_inner <- h_inner + W_msg h_outer, using the values from before the call.
    """
    known = set(chain) | {ZoneName.INTERNET}
    current: Dict[ZoneName, np.ndarray] = {}
    for zone, value in zone_embeddings.items():
        try:
            key = ZoneName(zone)
        except ValueError:
            raise KernelError(f"Unknown zone {zone!r}")
        if key not in known:
            raise KernelError(f"Unknown zone {zone!r}")
        current[key] = np.asarray(value, dtype=np.float64)

    updated = dict(current)
    for outer, inner in zip(chain[:-1], chain[1:]):
        if outer in current and inner in current:
            updated[inner] = updated[inner] + W_msg @ current[outer]
    return updated


# ============================================
# CONTINUOUS-TIME HIDDEN STATE
# ============================================

@dataclass(frozen=True)
class ODEParams:
    """f(h) = W2 tanh(W1 h + b1) + b2"""
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray


class ODEFunc:
    """Autonomous dynamics with an evaluation counter"""

    def __init__(self, params: Optional[ODEParams] = None,
                 fn: Optional[Callable[[np.ndarray], np.ndarray]] = None):
        if params is None and fn is None:
            raise KernelError("ODEFunc needs parameters or a callable")
        self.params = params
        self.fn = fn
        self.nfe = 0

    def __call__(self, h: np.ndarray) -> np.ndarray:
        self.nfe += 1
        if self.fn is not None:
            return self.fn(h)
        p = self.params
        return p.W2 @ np.tanh(p.W1 @ h + p.b1) + p.b2


def ode_rk4_drift(h: np.ndarray, dt: float, func: ODEFunc,
                  steps: int = config.ODE_STEPS) -> np.ndarray:
    """Fixed-step RK4 over [0, dt]; 4 evaluations per step, none when dt = 0"""
    h = np.asarray(h, dtype=np.float64)
    _check_finite("ode_rk4_drift", h, np.asarray(dt, dtype=np.float64))
    if dt < 0:
        raise KernelError(f"Negative drift interval {dt}")
    if dt == 0:
        return h.copy()
    step = dt / steps
    for _ in range(steps):
        k1 = func(h)
        k2 = func(h + 0.5 * step * k1)
        k3 = func(h + 0.5 * step * k2)
        k4 = func(h + step * k3)
        h = h + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return h


@dataclass(frozen=True)
class GateParams:
    """W_g, W_h: (hidden, 2 * hidden); LayerNorm pair on the gate pre-activation"""
    W_g: np.ndarray
    ln_gamma: np.ndarray
    ln_beta: np.ndarray
    W_h: np.ndarray
    b_h: np.ndarray


def gated_update(x_new: np.ndarray, h_drifted: np.ndarray, params: GateParams) -> np.ndarray:
    """h_next = (1 - g) * h + g * h_hat with g = sigmoid(LN(W_g [x, h]))"""
    x_new = np.asarray(x_new, dtype=np.float64)
    h_drifted = np.asarray(h_drifted, dtype=np.float64)
    z = np.concatenate([x_new, h_drifted])
    if params.W_g.shape[1] != z.shape[0] or params.W_h.shape[1] != z.shape[0]:
        raise KernelError(f"Gate expects input width {params.W_g.shape[1]}, got {z.shape[0]}")
    if params.W_g.shape[0] != h_drifted.shape[0]:
        raise KernelError("Gate output width does not match the hidden state")
    g = expit(layer_norm(params.W_g @ z, params.ln_gamma, params.ln_beta))
    h_hat = np.tanh(params.W_h @ z + params.b_h)
    return (1.0 - g) * h_drifted + g * h_hat


# ============================================
# ADVANTAGES AND LOSSES
# ============================================

@dataclass
class GAEInputs:
    rewards: np.ndarray
    values: np.ndarray          # length T + 1
    dts: np.ndarray             # normalized sojourns in [0, 1]
    dones: np.ndarray
    beta: float = config.CT_DECAY_BETA
    lam: float = config.GAE_LAMBDA

    def validate(self) -> None:
        T = len(self.rewards)
        if len(self.values) != T + 1 or len(self.dts) != T or len(self.dones) != T:
            raise KernelError(
                f"GAE lengths inconsistent: rewards {T}, values {len(self.values)}, "
                f"dts {len(self.dts)}, dones {len(self.dones)}"
            )
        if np.any((np.asarray(self.dts) < 0) | (np.asarray(self.dts) > 1)):
            raise KernelError("Normalized sojourns must lie in [0, 1]")


def continuous_gae(inputs: GAEInputs, use_beta: bool = True,
                   gamma: float = config.STATIC_GAMMA) -> np.ndarray:
    """Backward recursion with per-step discount exp(-beta * dt)

    With use_beta off the discount is the static gamma for every step.
    """
    inputs.validate()
    r = np.asarray(inputs.rewards, dtype=np.float64)
    v = np.asarray(inputs.values, dtype=np.float64)
    dts = np.asarray(inputs.dts, dtype=np.float64)
    dones = np.asarray(inputs.dones, dtype=np.float64)

    T = len(r)
    adv = np.zeros(T, dtype=np.float64)
    gae = 0.0
    for t in reversed(range(T)):
        discount = np.exp(-inputs.beta * dts[t]) if use_beta else gamma
        live = 1.0 - dones[t]
        delta = r[t] + discount * v[t + 1] * live - v[t]
        gae = delta + discount * inputs.lam * live * gae
        adv[t] = gae
    return adv


def gae_returns(advantages: np.ndarray, values: np.ndarray) -> np.ndarray:
    """R = A + V over the first T values"""
    return np.asarray(advantages) + np.asarray(values)[: len(advantages)]


def ppo_clip_loss(ratios, advantages, values, returns, entropy: float,
                  eps: float = config.PPO_CLIP_EPS,
                  value_coef: float = config.VALUE_LOSS_COEF,
                  entropy_coef: float = config.ENTROPY_COEF) -> Tuple[float, float, float]:
    """(L_clip, L_v, L_clip + value_coef * L_v - entropy_coef * entropy)"""
    ratios = np.asarray(ratios, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    returns = np.asarray(returns, dtype=np.float64)
    if not (ratios.shape == advantages.shape and values.shape == returns.shape):
        raise KernelError("ppo_clip_loss inputs must have matching lengths")

    unclipped = ratios * advantages
    clipped = np.clip(ratios, 1.0 - eps, 1.0 + eps) * advantages
    l_clip = float(-np.mean(np.minimum(unclipped, clipped)))
    l_v = float(np.mean((values - returns) ** 2))
    return l_clip, l_v, l_clip + value_coef * l_v - entropy_coef * float(entropy)


# ============================================
# FACTORIZED ACTION HEAD
# ============================================

@dataclass(frozen=True)
class MultiDiscreteHead:
    """Independent categoricals over action types and target slots"""
    logits_type: np.ndarray
    logits_target: np.ndarray

    def log_probs(self) -> Tuple[np.ndarray, np.ndarray]:
        return log_softmax(self.logits_type), log_softmax(self.logits_target)

    def log_prob(self, type_id: int, target: int) -> float:
        lt, lg = self.log_probs()
        return float(lt[type_id] + lg[target])

    def sample(self, rng: np.random.Generator) -> Tuple[int, int]:
        pt = softmax(self.logits_type)
        pg = softmax(self.logits_target)
        return int(rng.choice(len(pt), p=pt)), int(rng.choice(len(pg), p=pg))

    def mode(self) -> Tuple[int, int]:
        return int(np.argmax(self.logits_type)), int(np.argmax(self.logits_target))


def _entropy(logits: np.ndarray) -> float:
    logp = log_softmax(logits)
    p = np.exp(logp)
    return float(-np.sum(np.where(p > 0, p * logp, 0.0)))


def categorical_entropy(head: MultiDiscreteHead) -> float:
    """Entropy of the factorized head (sum of the two marginals)"""
    return _entropy(head.logits_type) + _entropy(head.logits_target)


def kl_divergence(old: MultiDiscreteHead, new: MultiDiscreteHead) -> float:
    """KL(old || new) of the factorized head"""
    total = 0.0
    for a, b in ((old.logits_type, new.logits_type), (old.logits_target, new.logits_target)):
        la, lb = log_softmax(a), log_softmax(b)
        pa = np.exp(la)
        total += float(np.sum(np.where(pa > 0, pa * (la - lb), 0.0)))
    return total
