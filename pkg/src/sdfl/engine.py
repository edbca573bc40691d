"""Per-node state machine: communication-step and local-step updates.

Each node keeps its model w, a cached surrogate u, and the effective
neighbour count of its last communication. At a communication step the node
averages the recovered neighbour models, evaluates its gradient there once,
refreshes u, and projects; between communications it takes cheap proximal
steps toward u with no gradient work:

  comm:   wbar = mean_j z_j;  u = sigma * m_k * wbar - grad(wbar)
          w <- P_s((u + noise) / (sigma * m_k))
  local:  w <- P_s((u + mu * w) / (sigma * m_k + mu))

Both steps report the squared projection-perturbation norm used by the
error-bound diagnostics: ||P(u + xi) - u||^2 at communication steps and
||P(u + mu w) - (u + mu w)||^2 at local steps.
"""

from dataclasses import dataclass, field

import numpy as np

from .onebit import EncodedMessage, EncodingMatrix, encode
from .privacy import clip_gradient
from .sparse_core import hard_threshold


@dataclass
class HyperParams:
    s: int
    mu: float = 0.1

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"proximal weight must be > 0, got {self.mu}")


@dataclass
class NodeState:
    i: int
    objective: object           # NodeObjective
    w: np.ndarray
    u: np.ndarray
    m_k: int                    # effective neighbour count of last comm step
    sigma: float
    kappa: int
    gamma: float
    phi: EncodingMatrix
    cache: dict = field(default_factory=dict)  # neighbour id -> last decoded z
    clip_count: int = 0


def init_node(i: int, objective, graph, sigma: float, kappa: int,
              gamma: float, phi: EncodingMatrix) -> NodeState:
    """Fresh state: w = 0, u = -grad(0), neighbour count = |N_i| (closed)."""
    n = phi.n
    w0 = np.zeros(n)
    return NodeState(
        i=i, objective=objective, w=w0, u=-objective.grad(w0),
        m_k=int(graph.closed_sizes()[i]), sigma=sigma, kappa=int(kappa),
        gamma=gamma, phi=phi,
    )


def communication_step(state: NodeState, decoded: dict, noise: np.ndarray,
                       s: int, clip_u: float = None,
                       clip_enforce: bool = False) -> float:
    """Apply one communication update from the recovered neighbour models.

    `decoded` maps neighbour id -> model estimate and must contain the node's
    own id with its exact current w (the self term is never codec'd).
    With `clip_u` set, gradient-norm violations of u/2 are counted; they are
    scaled down only when `clip_enforce` is set.
    Returns the projection-perturbation term for diagnostics.
    """
    if state.i not in decoded:
        raise ValueError("decoded set must include the node's own model")
    m_k = len(decoded)
    wbar = np.mean(list(decoded.values()), axis=0)
    g = state.objective.grad(wbar)
    if clip_u is not None:
        clipped_g, violated = clip_gradient(g, clip_u)
        if violated:
            state.clip_count += 1
        if clip_enforce:
            g = clipped_g
    denom = state.sigma * m_k
    state.m_k = m_k
    state.u = denom * wbar - g
    state.w = hard_threshold((state.u + noise) / denom, s)
    for j, z in decoded.items():
        if j != state.i:
            state.cache[j] = z
    fold = denom * state.w - state.u
    return float(fold @ fold)


def local_step(state: NodeState, mu: float, s: int) -> float:
    """Proximal step toward the cached surrogate; u and m_k stay fixed."""
    target = state.u + mu * state.w
    denom = state.sigma * state.m_k + mu
    state.w = hard_threshold(target / denom, s)
    fold = denom * state.w - target
    return float(fold @ fold)


def build_outgoing(state: NodeState) -> EncodedMessage:
    """Encode the current model; a zero model becomes the designated
    zero message (norm 0, no bits) that peers decode as the zero vector."""
    if not np.any(state.w):
        return EncodedMessage.zero()
    return encode(state.w, state.phi, state.gamma)


def average_point(W: np.ndarray) -> np.ndarray:
    """Column mean of the n x m stacked models."""
    return W.mean(axis=1)


def consensus_residual(W: np.ndarray, s: int) -> float:
    """(1/(s m)) ||W - (avg, ..., avg)||^2, the termination statistic."""
    m = W.shape[1]
    diff = W - average_point(W)[:, None]
    return float(np.sum(diff * diff)) / (s * m)
