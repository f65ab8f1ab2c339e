"""Primal options with learned initiation sets, the switching main policy,
recovery-reward relabeling and the online training loops.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import learning
from .learning import EligibilityTrace, EpsilonSchedule, epsilon_greedy, greedy_action, greedy_set
from .mdp import Option, Rng, TabularMdp, TransitionRecord, derive_seed, make_rng, sample_initial
from .mdp import step as env_step
from .proxies import ProxyKind, continuation_zeta, proxy_reward


class SourcePolicy:
    """Black-box source policy over target states, as an action distribution table."""

    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=float)
        if not np.allclose(self.probs.sum(axis=1), 1.0):
            raise ValueError("source policy rows must sum to 1")
        self.num_actions = self.probs.shape[1]
        onehot = np.isclose(self.probs.max(axis=1), 1.0)
        self.deterministic = bool(onehot.all())
        self._actions = self.probs.argmax(axis=1).tolist()
        self._cum = [np.cumsum(row).tolist() for row in self.probs]

    @classmethod
    def from_actions(cls, actions, num_actions: int) -> "SourcePolicy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((len(actions), num_actions))
        probs[np.arange(len(actions)), actions] = 1.0
        return cls(probs)

    @classmethod
    def from_source_q(cls, q_src: np.ndarray, meta_src, meta_tgt) -> "SourcePolicy":
        """Greedy (lowest-id ties) source-task policy carried into the target task."""
        from .gridworlds import map_target_to_source_state

        n, m = len(meta_tgt.states), q_src.shape[1]
        probs = np.zeros((n, m))
        for s in range(n):
            s_src = map_target_to_source_state(meta_src, meta_tgt, s)
            if s_src is None:
                probs[s] = 1.0 / m
            else:
                probs[s, int(np.argmax(q_src[s_src]))] = 1.0
        return cls(probs)

    def __len__(self):
        return self.probs.shape[0]

    def action(self, s: int) -> int:
        return self._actions[s]

    def sample(self, s: int, rng: Rng) -> int:
        if self.deterministic:
            return self._actions[s]
        cum = self._cum[s]
        return min(bisect.bisect_right(cum, rng.random() * cum[-1]), self.num_actions - 1)

    def expected(self, g: np.ndarray, s: int) -> float:
        if self.deterministic:
            return g[s, self._actions[s]]
        return float(self.probs[s] @ g[s])

    def state_values(self, g: np.ndarray) -> np.ndarray:
        return (self.probs * g).sum(axis=1)


CONSTANT, RECOVERY, STUDENT, BEHAVIOR = "constant", "recovery", "student", "behavior"


@dataclass(frozen=True)
class ThresholdSpec:
    kind: str = RECOVERY
    value: float = 0.0
    tolerance: float = 0.0

    def __post_init__(self):
        if self.kind not in (CONSTANT, RECOVERY, STUDENT, BEHAVIOR):
            raise ValueError(f"unknown threshold kind {self.kind!r}")
        if self.tolerance < 0:
            raise ValueError("tolerance must be non-negative")

    @classmethod
    def parse(cls, text: str, tolerance: float = 0.0) -> "ThresholdSpec":
        """``constant:0.9``, ``recovery``, ``student`` or ``behavior``."""
        kind, _, value = text.partition(":")
        return cls(kind, float(value) if value else 0.0, tolerance)

    def __str__(self):
        return f"{self.kind}:{self.value!r}" if self.kind == CONSTANT else self.kind


@dataclass
class Tables:
    """Learner tables a threshold may read."""

    q_recovery: np.ndarray | None = None
    q_student: np.ndarray | None = None
    v_behavior: np.ndarray | None = None


def threshold_value(spec: ThresholdSpec, s: int, tables: Tables) -> float:
    if spec.kind == CONSTANT:
        return spec.value
    table = {RECOVERY: tables.q_recovery, STUDENT: tables.q_student, BEHAVIOR: tables.v_behavior}[spec.kind]
    if table is None:
        raise ValueError(f"threshold {spec.kind!r} needs its learner table")
    if spec.kind == BEHAVIOR:
        return table[s]
    return max(table[s].tolist())


@dataclass
class PrimalOption:
    mu: SourcePolicy
    g: np.ndarray
    threshold: ThresholdSpec = field(default_factory=ThresholdSpec)

    def G(self, s: int) -> float:
        return self.mu.expected(self.g, s)


def in_initiation_set(p: PrimalOption, s: int, tables: Tables) -> bool:
    return p.G(s) >= threshold_value(p.threshold, s, tables) - p.threshold.tolerance


def initiation_set(p: PrimalOption, tables: Tables) -> np.ndarray:
    return np.array([in_initiation_set(p, s, tables) for s in range(p.g.shape[0])])


def primal_beta(p: PrimalOption, s: int, terminal: bool, tables: Tables) -> int:
    return 1 if terminal or not in_initiation_set(p, s, tables) else 0


class MainDecision(NamedTuple):
    chosen: Option
    explored: bool


def main_select(p: PrimalOption, s: int, tables: Tables) -> MainDecision:
    return MainDecision(Option.PRIMAL if in_initiation_set(p, s, tables) else Option.LEARNER, False)


def main_select_explore(p: PrimalOption, s: int, eps: float, rng: Rng, tables: Tables) -> MainDecision:
    """With probability ``eps`` pick an option uniformly, else follow the main policy."""
    if eps > 0.0 and rng.random() < eps:
        return MainDecision(Option.PRIMAL if rng.random() < 0.5 else Option.LEARNER, True)
    return main_select(p, s, tables)


def recovery_reward(t: TransitionRecord, p: PrimalOption, tables: Tables, gamma: float) -> tuple[float, float]:
    """Recovery reward and continuation for one transition.

    Entering the initiation set pays ``r + gamma * G(s')`` and ends the option.
    """
    if t.continuation == 0.0:
        return t.r, 0.0
    if in_initiation_set(p, t.s_next, tables):
        return t.r + gamma * p.G(t.s_next), 0.0
    return t.r, t.continuation


def relabel_recovery_batch(batch, p: PrimalOption, tables: Tables, gamma: float,
                           literal: bool = False) -> list[TransitionRecord]:
    """Recompute recovery rewards with the current G.

    ``literal=True`` applies the alternative batch rule instead: whenever
    the main policy would pick the learner at ``s'`` the record gets
    continuation 0 and reward ``g[s, a]``.
    """
    out = []
    for t in batch:
        if literal:
            if main_select(p, t.s_next, tables).chosen == Option.LEARNER:
                t = t._replace(r=float(p.g[t.s, t.a]), continuation=0.0)
            out.append(t)
        else:
            r, cont = recovery_reward(t, p, tables, gamma)
            out.append(t._replace(r=r, continuation=cont))
    return out


BASELINE, LISPR_RECOVERY, LISPR_STUDENT = "baseline-q", "lispr-recovery", "lispr-student"


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.25
    lam: float = 0.0
    eps_initial: float = 1.0
    eps_final: float = 0.1
    main_eps: float = 0.25
    max_steps: int = 500_000
    eval_every: int = 1000
    eval_episodes: int = 10
    episode_cap: int = 500
    warmup_primal_steps: int = 0
    proxy: str = ProxyKind.ORACLE.value
    literal_relabel: bool = False
    seed: int = 0


@dataclass
class RunArtifacts:
    curve: list  # rows of (step, mean_return, success_rate)
    q: np.ndarray
    g: np.ndarray | None = None
    v: np.ndarray | None = None
    mu: SourcePolicy | None = None
    threshold: ThresholdSpec | None = None
    algorithm: str = BASELINE

    def tables(self) -> Tables:
        return _tables_for(self.algorithm, self.q, self.v)

    def primal(self) -> PrimalOption | None:
        if self.mu is None:
            return None
        return PrimalOption(self.mu, self.g, self.threshold)


def _tables_for(algorithm, q, v) -> Tables:
    if algorithm == LISPR_RECOVERY:
        return Tables(q_recovery=q, v_behavior=v)
    if algorithm == LISPR_STUDENT:
        return Tables(q_student=q, v_behavior=v)
    return Tables(v_behavior=v)


def evaluate_policy(mdp: TabularMdp, q: np.ndarray, rng: Rng, episodes: int, cap: int,
                    primal: PrimalOption | None = None, tables: Tables | None = None) -> tuple[float, float]:
    """Greedy main-policy test episodes; returns (mean return, success rate).

    Reads the tables only.  Success means the episode reached a terminal state.
    """
    total, successes = 0.0, 0
    for _ in range(episodes):
        s = sample_initial(rng, mdp)
        ret = 0.0
        for _ in range(cap):
            if primal is not None and in_initiation_set(primal, s, tables):
                a = primal.mu.sample(s, rng)
            else:
                a = greedy_action(q, s, rng)
            s, r, done = env_step(rng, mdp, s, a)
            ret += r
            if done:
                successes += 1
                break
        total += ret
    return total / episodes, successes / episodes


def _train(mdp: TabularMdp, cfg: TrainConfig, algorithm: str, primal: PrimalOption | None,
           on_eval=None) -> RunArtifacts:
    if cfg.max_steps < 0 or cfg.eval_every <= 0 or cfg.eval_episodes <= 0 or cfg.episode_cap <= 0:
        raise ValueError("invalid training configuration")
    n, m = mdp.num_states, mdp.num_actions
    gamma = mdp.discount
    rng = make_rng(cfg.seed)
    q = learning.new_table(n, m)
    trace = EligibilityTrace(n, m)
    sched = EpsilonSchedule(cfg.eps_initial, cfg.eps_final, cfg.max_steps)
    track_v = primal is not None and primal.threshold.kind == "behavior"
    v = learning.new_table(n) if track_v else None
    tables = _tables_for(algorithm, q, v)
    mu = primal.mu if primal is not None else None
    g = primal.g if primal is not None else None
    alpha, lam, cap = cfg.alpha, cfg.lam, cfg.episode_cap
    recovery = algorithm == LISPR_RECOVERY
    proxy = ProxyKind(cfg.proxy)

    # optional priming: primal-only episodes that train G alone
    if primal is not None and cfg.warmup_primal_steps > 0:
        s, ep_len = sample_initial(rng, mdp), 0
        for _ in range(cfg.warmup_primal_steps):
            a = mu.sample(s, rng)
            s2, r, done = env_step(rng, mdp, s, a)
            ep_len += 1
            learning.g_td_update(g, TransitionRecord(s, Option.PRIMAL, a, r, 0.0 if done else gamma, s2),
                                 mu, alpha, rng)
            if done or ep_len >= cap:
                s, ep_len = sample_initial(rng, mdp), 0
            else:
                s = s2

    curve = []

    def record(step_count):
        eval_rng = make_rng(derive_seed(cfg.seed, 1, len(curve)))
        mean_ret, success = evaluate_policy(mdp, q, eval_rng, cfg.eval_episodes, cap, primal, tables)
        curve.append((step_count, mean_ret, success))
        if on_eval is not None:
            on_eval(step_count, mean_ret, success)

    record(0)
    s, ep_len = sample_initial(rng, mdp), 0
    for step_count in range(1, cfg.max_steps + 1):
        # draw order per step: option exploration, action, environment, G bootstrap
        option = Option.LEARNER
        if primal is not None:
            option = main_select_explore(primal, s, cfg.main_eps, rng, tables).chosen
        if option == Option.PRIMAL:
            a = mu.sample(s, rng)
            was_greedy = a in greedy_set(q, s)
        else:
            a, was_greedy = epsilon_greedy(q, s, sched(step_count - 1), rng)
        s2, r, done = env_step(rng, mdp, s, a)
        ep_len += 1
        t = TransitionRecord(s, option, a, r, 0.0 if done else gamma, s2)
        if primal is not None:
            learning.g_td_update(g, t, mu, alpha, rng)
        if track_v:
            learning.v_behavior_update(v, t, alpha)
        if recovery:
            if cfg.literal_relabel:
                t = relabel_recovery_batch((t,), primal, tables, gamma, literal=True)[0]
            elif proxy is ProxyKind.ORACLE:
                r_rec, cont = recovery_reward(t, primal, tables, gamma)
                t = t._replace(r=r_rec, continuation=cont)
            else:
                in_L = in_initiation_set(primal, s2, tables)
                r_rec = proxy_reward(proxy, t, g, mu, in_L, gamma)
                t = t._replace(r=r_rec, continuation=continuation_zeta(s2, in_L, done, gamma))
        learning.q_lambda_update(q, trace, t, alpha, lam, was_greedy)
        if done or ep_len >= cap:
            s, ep_len = sample_initial(rng, mdp), 0
            trace.reset()
        else:
            s = s2
        if step_count % cfg.eval_every == 0:
            record(step_count)
    return RunArtifacts(curve, q, g, v, mu, primal.threshold if primal else None, algorithm)


def train_baseline(mdp: TabularMdp, cfg: TrainConfig, on_eval=None) -> RunArtifacts:
    """Tabula-rasa Watkins Q(lambda)."""
    return _train(mdp, cfg, BASELINE, None, on_eval)


def train_student(mdp: TabularMdp, p: PrimalOption, cfg: TrainConfig, on_eval=None) -> RunArtifacts:
    """Student learner trained off-policy on transitions from both options."""
    if p.threshold.kind == RECOVERY:
        raise ValueError("recovery-value threshold requires lispr-recovery")
    return _train(mdp, cfg, LISPR_STUDENT, p, on_eval)


def train_recovery(mdp: TabularMdp, p: PrimalOption, cfg: TrainConfig, on_eval=None) -> RunArtifacts:
    """Recovery learner trained on relabeled rewards that end on entering L."""
    if p.threshold.kind == STUDENT:
        raise ValueError("student-value threshold requires lispr-student")
    return _train(mdp, cfg, LISPR_RECOVERY, p, on_eval)


def make_primal(mu: SourcePolicy, num_states: int, num_actions: int, threshold: ThresholdSpec) -> PrimalOption:
    """Fresh primal option with a zero-initialised success predictor."""
    return PrimalOption(mu, learning.new_table(num_states, num_actions), threshold)


def greedy_policy_matrix(q: np.ndarray) -> np.ndarray:
    """Deterministic greedy policy (lowest-id ties) as an [S, A] matrix."""
    pi = np.zeros_like(q)
    pi[np.arange(q.shape[0]), q.argmax(axis=1)] = 1.0
    return pi

