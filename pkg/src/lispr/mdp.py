"""Finite tabular MDPs, seeded random streams and stochastic stepping."""
from __future__ import annotations

import bisect
import random
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import NamedTuple

import numpy as np

PROB_TOL = 1e-12


class Option(IntEnum):
    PRIMAL = 0
    LEARNER = 1


class TransitionRecord(NamedTuple):
    s: int
    option: int
    a: int
    r: float
    continuation: float
    s_next: int


# Every run owns exactly one generator.  The algorithm is CPython's MT19937
# (``random.Random``) seeded with a non-negative integer; it produces the same
# stream on every platform.
Rng = random.Random


def make_rng(seed: int) -> Rng:
    return random.Random(int(seed))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed for ``(seed, *keys)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite MDP with explicit absorbing terminal states.

    Transitions are stored as padded successor lists: for each ``(s, a)`` the
    arrays ``next_states[s, a, k]``, ``probs[s, a, k]`` and ``rewards[s, a, k]``
    hold successor ``k``, its probability and the expected reward r(s, a, s').
    Padding entries carry probability 0.  Use :meth:`from_dense` for small
    hand-built MDPs.
    """

    next_states: np.ndarray
    probs: np.ndarray
    rewards: np.ndarray
    discount: float
    terminal: frozenset = field(default_factory=frozenset)
    initial: np.ndarray | None = None
    episodic_proper: bool = False
    name: str = "mdp"

    def __post_init__(self):
        object.__setattr__(self, "next_states", np.asarray(self.next_states, dtype=np.int64))
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=float))
        object.__setattr__(self, "rewards", np.asarray(self.rewards, dtype=float))
        object.__setattr__(self, "terminal", frozenset(int(s) for s in self.terminal))
        if self.initial is None:
            init = np.zeros(self.num_states)
            live = [s for s in range(self.num_states) if s not in self.terminal]
            init[live] = 1.0 / max(len(live), 1)
            object.__setattr__(self, "initial", init)
        else:
            object.__setattr__(self, "initial", np.asarray(self.initial, dtype=float))

    @classmethod
    def from_dense(cls, transition, reward, discount, terminal=(), initial=None, **kw) -> "TabularMdp":
        P = np.asarray(transition, dtype=float)
        R = np.broadcast_to(np.asarray(reward, dtype=float), P.shape)
        n, m, _ = P.shape
        k = max(1, int((P > 0).sum(axis=2).max()))
        nxt = np.zeros((n, m, k), dtype=np.int64)
        prb = np.zeros((n, m, k))
        rew = np.zeros((n, m, k))
        for s in range(n):
            for a in range(m):
                succ = np.flatnonzero(P[s, a] > 0)
                nxt[s, a, : len(succ)] = succ
                nxt[s, a, len(succ):] = s
                prb[s, a, : len(succ)] = P[s, a, succ]
                rew[s, a, : len(succ)] = R[s, a, succ]
        return cls(nxt, prb, rew, discount, frozenset(terminal), initial, **kw)

    @property
    def num_states(self) -> int:
        return self.next_states.shape[0]

    @property
    def num_actions(self) -> int:
        return self.next_states.shape[1]

    @cached_property
    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.num_states, dtype=bool)
        mask[list(self.terminal)] = True
        return mask

    @cached_property
    def transition(self) -> np.ndarray:
        """Dense P[s, a, s'] (small MDPs only)."""
        n, m, k = self.next_states.shape
        P = np.zeros((n, m, n))
        s_idx, a_idx = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
        for j in range(k):
            np.add.at(P, (s_idx, a_idx, self.next_states[:, :, j]), self.probs[:, :, j])
        return P

    @cached_property
    def reward(self) -> np.ndarray:
        """Dense r[s, a, s'] (small MDPs only)."""
        n, m, k = self.next_states.shape
        R = np.zeros((n, m, n))
        for j in range(k):
            live = self.probs[:, :, j] > 0
            s_idx, a_idx = np.nonzero(live)
            R[s_idx, a_idx, self.next_states[s_idx, a_idx, j]] = self.rewards[s_idx, a_idx, j]
        return R

    @cached_property
    def expected_reward(self) -> np.ndarray:
        """r(s, a) = sum_s' P(s'|s,a) r(s,a,s')."""
        return (self.probs * self.rewards).sum(axis=2)

    @cached_property
    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs > 0).sum(axis=2) == 1))

    @cached_property
    def _sampler(self):
        # per (s, a): (successors, cumulative probabilities, rewards)
        table = []
        for s in range(self.num_states):
            row = []
            for a in range(self.num_actions):
                live = self.probs[s, a] > 0.0
                succ = self.next_states[s, a, live].tolist()
                cum = np.cumsum(self.probs[s, a, live]).tolist()
                row.append((succ, cum, self.rewards[s, a, live].tolist()))
            table.append(row)
        return table

    @cached_property
    def _initial_sampler(self):
        succ = np.flatnonzero(self.initial > 0.0)
        return succ.tolist(), np.cumsum(self.initial[succ]).tolist()

    def with_discount(self, discount: float) -> "TabularMdp":
        return TabularMdp(self.next_states, self.probs, self.rewards, discount, self.terminal,
                          self.initial, self.episodic_proper, self.name)


def validate(mdp: TabularMdp) -> list[str]:
    """Return every violated invariant; an empty list means the MDP is well formed."""
    errors = []
    nxt, prb, rew = mdp.next_states, mdp.probs, mdp.rewards
    if nxt.ndim != 3 or prb.shape != nxt.shape or rew.shape != nxt.shape:
        return [f"shape mismatch: next_states {nxt.shape}, probs {prb.shape}, rewards {rew.shape}"]
    n, m, _ = nxt.shape
    if np.any((nxt < 0) | (nxt >= n)):
        return ["successor state id out of range"]
    if np.any(prb < 0):
        errors.append("negative transition probability")
    if not np.all(np.isfinite(rew)):
        errors.append("non-finite reward")
    for s in range(n):
        for a in range(m):
            if s in mdp.terminal:
                live = prb[s, a] > 0
                self_mass = prb[s, a][live & (nxt[s, a] == s)].sum()
                if abs(self_mass - 1.0) > PROB_TOL or np.any(rew[s, a][live] != 0.0):
                    errors.append(f"terminal not absorbing at (s={s}, a={a})")
            elif abs(prb[s, a].sum() - 1.0) > PROB_TOL:
                errors.append(f"transition row does not sum to 1 at (s={s}, a={a}): {prb[s, a].sum()!r}")
    for s in mdp.terminal:
        if not 0 <= s < n:
            errors.append(f"terminal state {s} out of range")
    init = mdp.initial
    if init.shape != (n,):
        errors.append(f"initial distribution has shape {init.shape}")
    else:
        if abs(init.sum() - 1.0) > PROB_TOL or np.any(init < 0):
            errors.append(f"initial distribution does not sum to 1: {init.sum()!r}")
        bad = [s for s in mdp.terminal if 0 <= s < n and init[s] != 0.0]
        if bad:
            errors.append(f"initial distribution puts mass on terminal states {sorted(bad)}")
    g = mdp.discount
    if not (0.0 <= g < 1.0 or (g == 1.0 and mdp.episodic_proper)):
        errors.append(f"discount {g} outside [0, 1) (1 needs episodic_proper)")
    return errors


def step(rng: Rng, mdp: TabularMdp, s: int, a: int) -> tuple[int, float, bool]:
    """Sample one transition; point-mass rows consume no random draw."""
    if s in mdp.terminal:
        raise ValueError(f"cannot step from terminal state {s}")
    succ, cum, rew = mdp._sampler[s][a]
    if len(succ) == 1:
        i = 0
    else:
        i = min(bisect.bisect_right(cum, rng.random() * cum[-1]), len(succ) - 1)
    s_next = succ[i]
    return s_next, rew[i], s_next in mdp.terminal


def sample_initial(rng: Rng, mdp: TabularMdp) -> int:
    succ, cum = mdp._initial_sampler
    if len(succ) == 1:
        return succ[0]
    return succ[min(bisect.bisect_right(cum, rng.random() * cum[-1]), len(succ) - 1)]
