"""Recovery rewards built only from the success predictor G."""
from __future__ import annotations

from enum import Enum

import numpy as np

from .mdp import TransitionRecord


class ProxyKind(str, Enum):
    ORACLE = "oracle"
    DIFF = "diff"
    SCALED_G = "scaled-g"
    SCALED_NEXT_G = "scaled-next-g"
    INDICATOR = "indicator"


def continuation_zeta(s_next: int, in_L: bool, terminal: bool, gamma: float) -> float:
    """gamma * (1 - beta(s')): zero where the recovery option stops."""
    return 0.0 if (in_L or terminal) else gamma


def state_g(g: np.ndarray, mu, s: int) -> float:
    """G(s) = E_{a~mu(s)} g[s, a]."""
    return mu.expected(g, s)


def proxy_reward(kind, t: TransitionRecord, g: np.ndarray, mu, in_L: bool, gamma: float) -> float:
    kind = ProxyKind(kind)
    terminal = t.continuation == 0.0
    zeta = continuation_zeta(t.s_next, in_L, terminal, gamma)
    if kind is ProxyKind.ORACLE:
        return t.r + gamma * state_g(g, mu, t.s_next) if (in_L and not terminal) else t.r
    if kind is ProxyKind.DIFF:
        return g[t.s, t.a] - zeta * state_g(g, mu, t.s_next)
    if kind is ProxyKind.SCALED_G:
        return (1.0 - zeta) * g[t.s, t.a]
    if kind is ProxyKind.SCALED_NEXT_G:
        return (1.0 - zeta) * state_g(g, mu, t.s_next)
    return 1.0 if in_L else 0.0


def proxy_reward_table(kind, G_sa: np.ndarray, G_s: np.ndarray, reward: np.ndarray,
                       in_L: np.ndarray, terminal: np.ndarray, gamma: float) -> np.ndarray:
    """Vectorised proxy reward r_hat[s, a, k] for padded successor arrays.

    ``reward`` and the state-valued arrays are indexed like the successors:
    ``G_s``, ``in_L`` and ``terminal`` are already gathered at ``s'``.
    """
    kind = ProxyKind(kind)
    zeta = np.where(in_L | terminal, 0.0, gamma)
    gsa = G_sa[:, :, None]
    if kind is ProxyKind.ORACLE:
        return reward + np.where(in_L & ~terminal, gamma * G_s, 0.0)
    if kind is ProxyKind.DIFF:
        return gsa - zeta * G_s
    if kind is ProxyKind.SCALED_G:
        return (1.0 - zeta) * np.broadcast_to(gsa, zeta.shape)
    if kind is ProxyKind.SCALED_NEXT_G:
        return (1.0 - zeta) * G_s
    return in_L.astype(float)
