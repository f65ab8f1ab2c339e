"""Small hand-built MDPs where every quantity can be solved exactly.

Each fixture bundles a target MDP with a source policy ``mu`` and flags that
say which checks its structure supports.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .gridworlds import ACTIONS, multiroom_from_spec, parse_layout, layout_text
from .mdp import TabularMdp


@dataclass
class Fixture:
    name: str
    mdp: TabularMdp
    mu: np.ndarray  # [S, A] source policy
    # every action follows the same state path, so switching never changes it
    aligned: bool = False
    # only transitions into the goal pay reward
    zero_intermediate: bool = False
    # a single terminal reward of +1 and no other reward
    binary_terminal: bool = False
    meta: object = None

    @property
    def learner(self) -> np.ndarray:
        """Uniform-random learner, the default starting point of every check."""
        n, m = self.mdp.num_states, self.mdp.num_actions
        return np.full((n, m), 1.0 / m)


def _onehot(actions, m: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=int)
    out = np.zeros((len(actions), m))
    out[np.arange(len(actions)), actions] = 1.0
    return out


def aligned_chain(r0, r1, goal_reward: float = 1.0, gamma: float = 0.9, name="chain-aligned") -> Fixture:
    """Both actions step right; they differ only in the reward they pay."""
    n = len(r0) + 1
    P = np.zeros((n, 2, n))
    R = np.zeros((n, 2, n))
    for s in range(n - 1):
        for a, rs in enumerate((r0, r1)):
            P[s, a, s + 1] = 1.0
            R[s, a, s + 1] = rs[s] + (goal_reward if s + 1 == n - 1 else 0.0)
    P[n - 1, :, n - 1] = 1.0
    mdp = TabularMdp.from_dense(P, R, gamma, {n - 1}, name=name)
    return Fixture(name, mdp, _onehot([0] * n, 2), aligned=True)


def goal_chain(n: int = 6, right_from: int = 3, gamma: float = 0.9) -> Fixture:
    """Right/left chain with +1 on reaching the right end.

    The source policy heads right only from ``right_from`` onwards and walks
    into the left wall elsewhere.
    """
    P = np.zeros((n, 2, n))
    R = np.zeros((n, 2, n))
    goal = n - 1
    for s in range(goal):
        P[s, 0, s + 1] = 1.0
        P[s, 1, max(s - 1, 0)] = 1.0
    R[goal - 1, 0, goal] = 1.0
    P[goal, :, goal] = 1.0
    mdp = TabularMdp.from_dense(P, R, gamma, {goal}, name=f"chain-goal-{n}")
    mu = _onehot([0 if s >= right_from else 1 for s in range(n)], 2)
    return Fixture(mdp.name, mdp, mu, zero_intermediate=True, binary_terminal=True)


def slip_chain(n: int = 6, slip: float = 0.2, gamma: float = 0.9) -> Fixture:
    """Stochastic chain: moving right fails with probability ``slip``."""
    P = np.zeros((n, 2, n))
    R = np.zeros((n, 2, n))
    goal = n - 1
    for s in range(goal):
        P[s, 0, s + 1] += 1.0 - slip
        P[s, 0, s] += slip
        P[s, 1, max(s - 1, 0)] = 1.0
    R[goal - 1, 0, goal] = 1.0
    P[goal, :, goal] = 1.0
    mdp = TabularMdp.from_dense(P, R, gamma, {goal}, name=f"chain-slip-{n}")
    mu = _onehot([1 if s == 1 else 0 for s in range(n)], 2)
    return Fixture(mdp.name, mdp, mu, zero_intermediate=True, binary_terminal=True)


def pit_chain(n: int = 6, jump_below: int = 2, gamma: float = 0.9) -> Fixture:
    """Chain with a zero-reward pit: action 1 ends the episode with nothing."""
    size = n + 1
    goal, pit = n - 1, n
    P = np.zeros((size, 2, size))
    R = np.zeros((size, 2, size))
    for s in range(goal):
        P[s, 0, s + 1] = 1.0
        P[s, 1, pit] = 1.0
    R[goal - 1, 0, goal] = 1.0
    for t in (goal, pit):
        P[t, :, t] = 1.0
    mdp = TabularMdp.from_dense(P, R, gamma, {goal, pit}, name=f"chain-pit-{n}")
    mu = _onehot([1 if s < jump_below else 0 for s in range(size)], 2)
    return Fixture(mdp.name, mdp, mu, zero_intermediate=True, binary_terminal=True)


def micro_grid(gamma: float = 0.9) -> Fixture:
    """Two small rooms; the source policy only knows the room with the goal."""
    spec = parse_layout(layout_text("micro_tworoom"))
    mdp, meta = multiroom_from_spec(spec, gamma)
    door_col = min(c for _, c in spec.doorways)
    # shortest-path actions toward the goal inside the goal room
    dist = {spec.goal: 0}
    queue = deque([spec.goal])
    while queue:
        cell = queue.popleft()
        for dr, dc in ACTIONS.values():
            prev = (cell[0] - dr, cell[1] - dc)
            if spec.is_open(prev) and prev not in dist and prev[1] > door_col:
                dist[prev] = dist[cell] + 1
                queue.append(prev)
    actions = []
    for cell in meta.states:
        best = 2  # walk left: useless outside the goal room
        if cell in dist and cell != spec.goal:
            for a, (dr, dc) in ACTIONS.items():
                nxt = (cell[0] + dr, cell[1] + dc)
                if dist.get(nxt, np.inf) == dist[cell] - 1:
                    best = a
                    break
        actions.append(best)
    mdp = TabularMdp(mdp.next_states, mdp.probs, mdp.rewards, gamma, mdp.terminal, mdp.initial,
                     name="micro-tworoom")
    return Fixture("micro-tworoom", mdp, _onehot(actions, 4), zero_intermediate=True,
                   binary_terminal=True, meta=meta)


def bundled_fixtures(gamma: float = 0.9) -> list[Fixture]:
    return [
        aligned_chain([0.0, 0.0, 0.0, 0.5, 0.5], [0.4, 0.4, 0.4, 0.0, 0.0], gamma=gamma, name="chain-aligned-6"),
        aligned_chain([0.2, 0.0, 0.3, 0.0, 0.6, 0.1, 0.0], [0.0, 0.5, 0.0, 0.4, 0.0, 0.0, 0.3],
                      goal_reward=0.0, gamma=gamma, name="chain-aligned-8"),
        goal_chain(gamma=gamma),
        slip_chain(gamma=gamma),
        pit_chain(gamma=gamma),
        micro_grid(gamma=gamma),
    ]


def random_mdp(seed: int, num_states: int = 8, num_actions: int = 3, gamma: float = 0.9,
               episodic: bool = False) -> Fixture:
    """Dirichlet(1) transition rows and uniform[0, 1] rewards.

    Episodic instances make the last state an absorbing goal and keep only
    the rewards paid on entering it.  The source policy is a random
    deterministic policy drawn from the same generator.
    """
    rng = np.random.default_rng(seed)
    n, m = num_states, num_actions
    P = rng.dirichlet(np.ones(n), size=(n, m))
    R = rng.uniform(0.0, 1.0, size=(n, m, n))
    terminal = set()
    if episodic:
        goal = n - 1
        R[:, :, :goal] = 0.0
        P[goal] = 0.0
        P[goal, :, goal] = 1.0
        R[goal] = 0.0
        terminal = {goal}
    mdp = TabularMdp.from_dense(P, R, gamma, terminal, name=f"random-{seed}")
    mu = _onehot(rng.integers(0, m, size=n), m)
    return Fixture(mdp.name, mdp, mu)
