"""Online tabular learners: Watkins Q(lambda), off-policy TD for the success
predictor G, TD(0) behaviour values and epsilon schedules.

Tables are plain float arrays: ``q[s, a]``, ``g[s, a]`` and ``v[s]``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .mdp import Rng, TransitionRecord

# traces decayed below this are dropped; keeps the sparse trace short
TRACE_CUTOFF = 1e-10


def new_table(num_states: int, num_actions: int | None = None, init: float = 0.0) -> np.ndarray:
    shape = (num_states,) if num_actions is None else (num_states, num_actions)
    return np.full(shape, float(init))


def greedy_set(q: np.ndarray, s: int) -> list[int]:
    row = q[s].tolist()
    best = max(row)
    return [a for a, v in enumerate(row) if v == best]


def greedy_action(q: np.ndarray, s: int, rng: Rng) -> int:
    """argmax_a q[s, a] with ties broken uniformly by ``rng``.

    A random draw is consumed only when there is a tie.
    """
    ties = greedy_set(q, s)
    if len(ties) == 1:
        return ties[0]
    return ties[int(rng.random() * len(ties))]


def epsilon_greedy(q: np.ndarray, s: int, eps: float, rng: Rng) -> tuple[int, bool]:
    """Return ``(action, was_greedy)``; ``was_greedy`` is tie-set membership."""
    if eps > 0.0 and rng.random() < eps:
        a = int(rng.random() * q.shape[1])
        return a, a in greedy_set(q, s)
    return greedy_action(q, s, rng), True


class EligibilityTrace:
    """Replacing eligibility traces stored sparsely as ``{(s, a): e}``."""

    def __init__(self, num_states: int, num_actions: int):
        self.shape = (num_states, num_actions)
        self.entries: dict[tuple[int, int], float] = {}

    def reset(self) -> None:
        self.entries.clear()

    @property
    def values(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for (s, a), e in self.entries.items():
            out[s, a] = e
        return out


def q_lambda_update(q: np.ndarray, e: EligibilityTrace, t: TransitionRecord, alpha: float,
                    lam: float, was_greedy: bool) -> float:
    """One Watkins Q(lambda) step with replacing traces; returns the TD error."""
    target = t.r
    if t.continuation:
        target += t.continuation * max(q[t.s_next].tolist())
    delta = target - q[t.s, t.a]
    if not was_greedy:
        # an exploratory action ends the greedy path, so earlier pairs must
        # not receive this error
        e.entries.clear()
    e.entries[(t.s, t.a)] = 1.0
    step = alpha * delta
    if step:
        for (s, a), ev in e.entries.items():
            q[s, a] += step * ev
    decay = t.continuation * lam
    if decay == 0.0:
        e.entries.clear()
    else:
        e.entries = {k: ev * decay for k, ev in e.entries.items() if ev * decay >= TRACE_CUTOFF}
    return float(delta)


def g_td_update(g: np.ndarray, t: TransitionRecord, mu, alpha: float, rng: Rng) -> float:
    """Semi-gradient TD for G(s, a) with bootstrap action sampled from ``mu``.

    Target is ``r + continuation * g[s', a_hat]`` with ``a_hat ~ mu(s')``.
    """
    target = t.r
    if t.continuation:
        target += t.continuation * g[t.s_next, mu.sample(t.s_next, rng)]
    delta = g[t.s, t.a] - target
    g[t.s, t.a] -= alpha * delta
    return float(delta)


def v_behavior_update(v: np.ndarray, t: TransitionRecord, alpha: float) -> float:
    delta = t.r + t.continuation * v[t.s_next] - v[t.s]
    v[t.s] += alpha * delta
    return float(delta)


@dataclass(frozen=True)
class EpsilonSchedule:
    eps_initial: float = 1.0
    eps_final: float = 0.1
    max_steps: int = 500_000

    def __call__(self, step: int) -> float:
        return anneal(self, step)


def anneal(sched: EpsilonSchedule, step: int) -> float:
    """Linear decay from ``eps_initial`` to ``eps_final`` over ``max_steps``."""
    if step < 0:
        raise ValueError("step must be non-negative")
    if sched.max_steps <= 0 or step >= sched.max_steps:
        return sched.eps_final
    frac = step / sched.max_steps
    return sched.eps_initial + frac * (sched.eps_final - sched.eps_initial)


def write_table_csv(table: np.ndarray, path) -> None:
    """State-action tables as ``state,action,value``; state tables as ``state,value``."""
    table = np.asarray(table)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if table.ndim == 2:
            writer.writerow(["state", "action", "value"])
            for s in range(table.shape[0]):
                for a in range(table.shape[1]):
                    writer.writerow([s, a, repr(float(table[s, a]))])
        else:
            writer.writerow(["state", "value"])
            for s in range(table.shape[0]):
                writer.writerow([s, repr(float(table[s]))])


def read_table_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if header == ["state", "action", "value"]:
        n = max(int(r[0]) for r in rows) + 1
        m = max(int(r[1]) for r in rows) + 1
        out = np.zeros((n, m))
        for s, a, v in rows:
            out[int(s), int(a)] = float(v)
        return out
    if header == ["state", "value"]:
        out = np.zeros(len(rows))
        for s, v in rows:
            out[int(s)] = float(v)
        return out
    raise ValueError(f"unrecognised table header {header}")
