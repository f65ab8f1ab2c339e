"""Exact dynamic programming for LISPR: policy evaluation by sparse linear
solves, optimal control by policy iteration, recovery MDPs and executable
checks of the switching results (lower bounds, optimality, improvement,
contraction, the anti-main identity and the recovery-reward proxies).

Policies are ``[S, A]`` row-stochastic arrays.  Terminal states have value 0.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .mdp import TabularMdp
from .proxies import ProxyKind, proxy_reward_table

# states whose G and threshold differ by less than this count as tied
MEMBERSHIP_TOL = 1e-12
# action values closer than this are treated as equal by greedy selection
TIE_TOL = 1e-12
CHECK_TOL = 1e-9
# proxy gaps at or below this are exact up to rounding
EXACT_GAP = 1e-12


@dataclass
class ExactValues:
    V: np.ndarray
    Q: np.ndarray
    residual: float


@dataclass
class OracleReport:
    check: str
    passed: bool
    max_violation: float
    witness: int | None = None
    asserted: bool = True
    mdp: str = ""
    gamma: float | None = None
    threshold: str = ""
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        out = asdict(self)
        out["max_violation"] = _json_float(self.max_violation)
        return json.dumps(out, sort_keys=True, default=_json_default)


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serialisable: {type(obj).__name__}")


# --------------------------------------------------------------------------
# policies and evaluation

def as_policy(policy, num_states: int, num_actions: int) -> np.ndarray:
    """Accept an [S, A] matrix, a vector of action ids or an object with ``probs``."""
    probs = getattr(policy, "probs", policy)
    arr = np.asarray(probs)
    if arr.ndim == 1:
        out = np.zeros((num_states, num_actions))
        out[np.arange(num_states), arr.astype(int)] = 1.0
        return out
    arr = arr.astype(float)
    if arr.shape != (num_states, num_actions):
        raise ValueError(f"policy shape {arr.shape} does not match ({num_states}, {num_actions})")
    if not np.allclose(arr.sum(axis=1), 1.0) or np.any(arr < 0):
        raise ValueError("policy rows must be probability distributions")
    return arr


def uniform_policy(mdp: TabularMdp) -> np.ndarray:
    return np.full((mdp.num_states, mdp.num_actions), 1.0 / mdp.num_actions)


def backup(mdp: TabularMdp, V: np.ndarray) -> np.ndarray:
    """Q(s, a) = sum_k p_k [r_k + gamma V(s'_k)], zero on terminal states."""
    Q = (mdp.probs * (mdp.rewards + mdp.discount * V[mdp.next_states])).sum(axis=2)
    Q[mdp.terminal_mask] = 0.0
    return Q


def _policy_system(mdp: TabularMdp, pi: np.ndarray):
    n, m, k = mdp.next_states.shape
    w = pi[:, :, None] * mdp.probs
    w[mdp.terminal_mask] = 0.0
    rows = np.broadcast_to(np.arange(n)[:, None, None], (n, m, k))
    P = sparse.csr_matrix((w.ravel(), (rows.ravel(), mdp.next_states.ravel())), shape=(n, n))
    r = (w * mdp.rewards).sum(axis=(1, 2))
    return P, r


def policy_evaluation_exact(mdp: TabularMdp, policy) -> ExactValues:
    """Solve (I - gamma P_pi) V = r_pi directly, refining until the residual is below 1e-12."""
    n = mdp.num_states
    pi = as_policy(policy, n, mdp.num_actions)
    P, r = _policy_system(mdp, pi)
    A = (sparse.identity(n, format="csc") - mdp.discount * P).tocsc()
    V = np.atleast_1d(spsolve(A, r))
    if not np.all(np.isfinite(V)):
        raise ValueError("singular evaluation system (improper policy with discount 1?)")
    residual = float(np.abs(A @ V - r).max()) if n else 0.0
    for _ in range(5):
        if residual < 1e-12:
            break
        V = V + np.atleast_1d(spsolve(A, r - A @ V))
        residual = float(np.abs(A @ V - r).max())
    V[mdp.terminal_mask] = 0.0
    return ExactValues(V, backup(mdp, V), residual)


def greedy(Q: np.ndarray, tol: float = TIE_TOL) -> np.ndarray:
    """Deterministic greedy policy; the lowest action id wins near-ties."""
    best = Q.max(axis=1, keepdims=True)
    actions = np.argmax(Q >= best - tol, axis=1)
    return as_policy(actions, *Q.shape)


def value_iteration(mdp: TabularMdp, tol: float = 1e-10) -> tuple[ExactValues, np.ndarray]:
    """Optimal values and a greedy optimal policy.

    Solved by policy iteration with exact evaluation, which reaches the fixed
    point in finitely many steps; the returned residual is the Bellman
    optimality residual and is checked against ``tol``.
    """
    if mdp.discount >= 1.0:
        raise ValueError("value_iteration needs discount < 1")
    pi = greedy(mdp.expected_reward)
    for _ in range(10 * mdp.num_states * mdp.num_actions + 10):
        ev = policy_evaluation_exact(mdp, pi)
        current = (pi * ev.Q).sum(axis=1)
        # switch only where some action is better by more than the tie tolerance
        better = ev.Q.max(axis=1) > current + TIE_TOL
        if not better.any():
            break
        new = greedy(ev.Q)
        pi = np.where(better[:, None], new, pi)
    ev = policy_evaluation_exact(mdp, pi)
    residual = float(np.abs(ev.Q.max(axis=1) - ev.V)[~mdp.terminal_mask].max(initial=0.0))
    if residual > tol:
        raise RuntimeError(f"policy iteration stopped with Bellman residual {residual:g}")
    return ExactValues(ev.V, ev.Q, residual), greedy(ev.Q)


def compute_G_exact(mdp: TabularMdp, mu) -> ExactValues:
    """Value of the source policy in the target MDP; ``Q`` is the G(s, a) form."""
    return policy_evaluation_exact(mdp, mu)


# --------------------------------------------------------------------------
# recovery MDPs and switched policies

def _mask(L, n: int) -> np.ndarray:
    L = np.asarray(L)
    if L.dtype == bool:
        if L.shape != (n,):
            raise ValueError("membership mask has the wrong length")
        return L.copy()
    mask = np.zeros(n, dtype=bool)
    mask[L.astype(int)] = True
    return mask


def build_recovery_mdp(mdp: TabularMdp, L, G: ExactValues) -> TabularMdp:
    """States in L become absorbing terminals; entering s' in L pays r + gamma G(s')."""
    n, m, k = mdp.next_states.shape
    inL = _mask(L, n)
    nxt = mdp.next_states.copy()
    prb = mdp.probs.copy()
    rew = mdp.rewards + np.where(inL[nxt], mdp.discount * G.V[nxt], 0.0)
    rows = np.flatnonzero(inL)
    nxt[rows] = rows[:, None, None]
    prb[rows] = 0.0
    prb[rows, :, 0] = 1.0
    rew[rows] = 0.0
    terminal = frozenset(mdp.terminal) | frozenset(rows.tolist())
    init = np.where(inL, 0.0, mdp.initial)
    init = init / init.sum() if init.sum() > 0 else None
    return TabularMdp(nxt, prb, rew, mdp.discount, terminal, init, mdp.episodic_proper,
                      name=f"{mdp.name}/recovery")


def recovery_action_values(mdp: TabularMdp, L, G: ExactValues, V_R: np.ndarray) -> np.ndarray:
    """Q^R(s, a) for the recovery option started at any state, including s in L.

    One step in the original MDP followed by the recovery continuation: the
    bonus gamma G(s') on entering L, gamma V^R(s') otherwise.  Off L this is
    the recovery MDP's own action value.
    """
    inL = _mask(L, mdp.num_states)
    nxt = mdp.next_states
    cont = np.where(inL[nxt] | mdp.terminal_mask[nxt], 0.0, mdp.discount)
    bonus = np.where(inL[nxt] & ~mdp.terminal_mask[nxt], mdp.discount * G.V[nxt], 0.0)
    Q = (mdp.probs * (mdp.rewards + bonus + cont * V_R[nxt])).sum(axis=2)
    Q[mdp.terminal_mask] = 0.0
    return Q


def switched_policy(mu, learner, L, anti: bool = False) -> np.ndarray:
    mu = np.asarray(getattr(mu, "probs", mu), dtype=float)
    learner = np.asarray(learner, dtype=float)
    inL = _mask(L, mu.shape[0])
    if anti:
        inL = ~inL
    return np.where(inL[:, None], mu, learner)


def evaluate_main_exact(mdp: TabularMdp, mu, learner, L, anti: bool = False) -> ExactValues:
    """Exact value of the stationary switch: mu on L and the learner elsewhere.

    ``anti=True`` reverses the switch (learner on L, mu elsewhere).
    """
    n, m = mdp.num_states, mdp.num_actions
    return policy_evaluation_exact(mdp, switched_policy(as_policy(mu, n, m), as_policy(learner, n, m), L, anti))


@dataclass
class RecoverySolution:
    L: np.ndarray
    recovery_mdp: TabularMdp
    V_R: np.ndarray  # value in the recovery MDP; zero on L
    Q_R: np.ndarray  # initiated action values, defined on every state
    V_tilde: np.ndarray  # learner-weighted Q_R: the recovery threshold
    iterations: int = 0
    cycled: bool = False


def solve_recovery(mdp: TabularMdp, G: ExactValues, learner, L) -> RecoverySolution:
    n = mdp.num_states
    inL = _mask(L, n)
    learner = as_policy(learner, n, mdp.num_actions)
    rmdp = build_recovery_mdp(mdp, inL, G)
    V_R = policy_evaluation_exact(rmdp, learner).V
    Q_R = recovery_action_values(mdp, inL, G, V_R)
    return RecoverySolution(inL, rmdp, V_R, Q_R, (learner * Q_R).sum(axis=1))


def recovery_fixpoint(mdp: TabularMdp, G: ExactValues, learner, L0=None,
                      tol: float = MEMBERSHIP_TOL, max_iter: int | None = None) -> RecoverySolution:
    """Iterate L -> recovery MDP -> V^R -> L until the set repeats.

    ``L0`` defaults to ``{G >= V* - tol}``.  A repeat of an older set is a
    cycle and is flagged on the result.
    """
    n = mdp.num_states
    if L0 is None:
        v_star = value_iteration(mdp)[0].V
        L0 = G.V >= v_star - tol
    inL = _mask(L0, n)
    seen = {inL.tobytes(): 0}
    limit = max_iter if max_iter is not None else n + 2
    sol = solve_recovery(mdp, G, learner, inL)
    for it in range(1, limit + 1):
        new = G.V >= sol.V_tilde - tol
        if np.array_equal(new, sol.L):
            sol.iterations = it - 1
            return sol
        key = new.tobytes()
        if key in seen:
            sol = solve_recovery(mdp, G, learner, new)
            sol.iterations, sol.cycled = it, True
            return sol
        seen[key] = it
        sol = solve_recovery(mdp, G, learner, new)
    sol.iterations, sol.cycled = limit, True
    return sol


def improve_once(Q: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """One greedy improvement step that keeps the current row unless strictly beaten."""
    current = (pi * Q).sum(axis=1)
    better = Q.max(axis=1) > current + TIE_TOL
    return np.where(better[:, None], greedy(Q), pi)


# --------------------------------------------------------------------------
# checks

RECOVERY, STUDENT = "recovery", "student"


def _report(check, violation, witness, mdp, threshold, asserted=True, tol=CHECK_TOL, **details):
    return OracleReport(check, bool(violation <= tol), float(violation),
                        None if witness is None else int(witness), asserted,
                        mdp.name, float(mdp.discount), threshold, details)


def _worst(diff: np.ndarray, where=None):
    """(max violation, witness) of a 'should be <= 0' array."""
    d = np.where(where, diff, -np.inf) if where is not None else diff
    if d.size == 0 or not np.isfinite(d.max()):
        return 0.0, None
    i = int(np.argmax(d))
    return max(float(d[i]), 0.0), (i if d[i] > 0 else None)


def _kind(kind: str) -> str:
    if kind not in (RECOVERY, STUDENT):
        raise ValueError(f"learner kind must be 'recovery' or 'student', got {kind!r}")
    return kind


@dataclass
class SwitchSetup:
    """The learner, its value threshold and the induced initiation set."""

    G: ExactValues
    learner: np.ndarray
    L: np.ndarray
    threshold: np.ndarray
    V_learner: np.ndarray
    recovery: RecoverySolution | None = None


def switch_setup(mdp: TabularMdp, mu, kind: str, learner=None, G: ExactValues | None = None) -> SwitchSetup:
    n, m = mdp.num_states, mdp.num_actions
    learner = uniform_policy(mdp) if learner is None else as_policy(learner, n, m)
    G = compute_G_exact(mdp, mu) if G is None else G
    if _kind(kind) == STUDENT:
        V_S = policy_evaluation_exact(mdp, learner).V
        return SwitchSetup(G, learner, G.V >= V_S - MEMBERSHIP_TOL, V_S, V_S)
    sol = recovery_fixpoint(mdp, G, learner)
    return SwitchSetup(G, learner, sol.L, sol.V_tilde, sol.V_R, sol)


def check_lower_bound(mdp: TabularMdp, mu, kind: str = RECOVERY, learner=None) -> OracleReport:
    """V^main >= G everywhere and V^main >= the learner value off L (and the threshold everywhere)."""
    st = switch_setup(mdp, mu, kind, learner)
    V = evaluate_main_exact(mdp, mu, st.learner, st.L).V
    v_g, w_g = _worst(st.G.V - V)
    v_l, w_l = _worst(st.V_learner - V, ~st.L)
    v_t, w_t = _worst(st.threshold - V)
    worst = max((v_g, w_g), (v_l, w_l), (v_t, w_t), key=lambda x: x[0])
    cycled = bool(st.recovery.cycled) if st.recovery is not None else False
    return _report(f"lower_bound[{kind}]", worst[0], worst[1], mdp, f"V^{kind[0].upper()}",
                   vs_G=v_g, vs_learner=v_l, vs_threshold=v_t, L_size=int(st.L.sum()), fixpoint_cycled=cycled)


def check_optimality(mdp: TabularMdp, mu, kind: str = RECOVERY) -> OracleReport:
    """With tau = V*, the switched policy with an optimal learner attains V*."""
    n, m = mdp.num_states, mdp.num_actions
    opt, pi_star = value_iteration(mdp)
    G = compute_G_exact(mdp, mu)
    L = G.V >= opt.V - CHECK_TOL
    if _kind(kind) == RECOVERY:
        _, learner = value_iteration(build_recovery_mdp(mdp, L, G))
    else:
        learner = pi_star
    V = evaluate_main_exact(mdp, as_policy(mu, n, m), learner, L).V
    diff = np.abs(V - opt.V)
    i = int(np.argmax(diff)) if n else 0
    return _report(f"optimality[{kind}]", float(diff.max(initial=0.0)), i if n and diff[i] > 1e-6 else None,
                   mdp, "V*", tol=1e-6, L_size=int(L.sum()))


@dataclass
class ImprovementStep:
    before: SwitchSetup
    learner_after: np.ndarray
    L_after: np.ndarray
    threshold_after: np.ndarray
    V_main_before: np.ndarray
    V_main_after: np.ndarray


def improvement_step(mdp: TabularMdp, mu, kind: str = RECOVERY, learner=None) -> ImprovementStep:
    """One exact greedy improvement of the learner and the new initiation set.

    The recovery learner is improved on the recovery MDP of the current L,
    and L' is induced by the improved learner on that same recovery MDP.
    """
    st = switch_setup(mdp, mu, kind, learner)
    n, m = mdp.num_states, mdp.num_actions
    if kind == RECOVERY:
        sol = st.recovery
        Q = backup(sol.recovery_mdp, sol.V_R)
        # rows in L are absorbing in the recovery MDP; improve them with the
        # initiated values so the learner is defined everywhere
        Q[sol.L] = sol.Q_R[sol.L]
        new = improve_once(Q, st.learner)
        after = solve_recovery(mdp, st.G, new, sol.L)
        threshold = after.V_tilde
    else:
        Q = policy_evaluation_exact(mdp, st.learner).Q
        new = improve_once(Q, st.learner)
        threshold = policy_evaluation_exact(mdp, new).V
    L_after = st.G.V >= threshold - MEMBERSHIP_TOL
    mu_p = as_policy(mu, n, m)
    return ImprovementStep(st, new, L_after, threshold,
                           evaluate_main_exact(mdp, mu_p, st.learner, st.L).V,
                           evaluate_main_exact(mdp, mu_p, new, L_after).V)


def check_improvement(mdp: TabularMdp, mu, kind: str = RECOVERY, learner=None, asserted=True) -> OracleReport:
    step = improvement_step(mdp, mu, kind, learner)
    v, w = _worst(step.V_main_before - step.V_main_after)
    return _report(f"improvement[{kind}]", v, w, mdp, f"V^{kind[0].upper()}", asserted=asserted,
                   L_size=int(step.before.L.sum()), L_after_size=int(step.L_after.sum()))


def check_contraction(mdp: TabularMdp, mu, kind: str = RECOVERY, learner=None) -> OracleReport:
    """L' is a subset of L; the violation counts states of L' outside L."""
    step = improvement_step(mdp, mu, kind, learner)
    escaped = np.flatnonzero(step.L_after & ~step.before.L)
    return _report(f"contraction[{kind}]", float(len(escaped)), escaped[0] if len(escaped) else None,
                   mdp, f"V^{kind[0].upper()}", tol=0.0,
                   L_size=int(step.before.L.sum()), L_after_size=int(step.L_after.sum()))


def anti_main_gap(mdp: TabularMdp, mu, learner, L) -> tuple[float, int | None]:
    """max_s |V^main + V^anti - G - V^learner| with the learner's full-MDP value."""
    n, m = mdp.num_states, mdp.num_actions
    mu_p, le = as_policy(mu, n, m), as_policy(learner, n, m)
    V = evaluate_main_exact(mdp, mu_p, le, L).V
    V_anti = evaluate_main_exact(mdp, mu_p, le, L, anti=True).V
    G = compute_G_exact(mdp, mu_p).V
    V_R = policy_evaluation_exact(mdp, le).V
    gap = np.abs(V + V_anti - G - V_R)
    i = int(np.argmax(gap)) if n else None
    return float(gap.max(initial=0.0)), i


def check_anti_main_identity(mdp: TabularMdp, mu, kind: str = RECOVERY, learner=None,
                             L=None, asserted: bool = False, label: str = "") -> OracleReport:
    """V^main + V^anti = G + V^R, with L from the threshold fixpoint unless given."""
    if L is None:
        st = switch_setup(mdp, mu, kind, learner)
        learner, L = st.learner, st.L
    elif learner is None:
        learner = uniform_policy(mdp)
    gap, w = anti_main_gap(mdp, mu, learner, L)
    name = "anti_main" + (f"[{label}]" if label else f"[{kind}]")
    return _report(name, gap, w if gap > 1e-8 else None, mdp, f"V^{kind[0].upper()}",
                   asserted=asserted, tol=1e-8, L_size=int(_mask(L, mdp.num_states).sum()))


# --------------------------------------------------------------------------
# proxy rewards

def proxy_recovery_mdp(mdp: TabularMdp, L, G: ExactValues, kind) -> TabularMdp:
    """The recovery MDP of L with its rewards replaced by a G-only proxy."""
    kind = ProxyKind(kind)
    n = mdp.num_states
    inL = _mask(L, n)
    if kind is ProxyKind.ORACLE:
        return build_recovery_mdp(mdp, inL, G)
    nxt = mdp.next_states
    member = inL[nxt]
    term = mdp.terminal_mask[nxt]
    if kind is ProxyKind.INDICATOR:
        # a rewarded terminal (the goal) counts as a state where the source
        # policy has already succeeded; failure terminals do not
        member = (member & ~term) | (term & (mdp.rewards > 0))
    rew = proxy_reward_table(kind, G.Q, G.V[nxt], mdp.rewards, member, term, mdp.discount)
    base = build_recovery_mdp(mdp, inL, G)
    rew = np.where(inL[:, None, None], 0.0, rew)
    return TabularMdp(base.next_states, base.probs, rew, mdp.discount, base.terminal, base.initial,
                      mdp.episodic_proper, name=f"{mdp.name}/proxy-{kind.value}")


def proxy_gap(mdp: TabularMdp, L, G: ExactValues, learner, kind) -> tuple[float, int | None]:
    """max over states outside L of |V-hat^R - V^R| for a fixed recovery learner."""
    inL = _mask(L, mdp.num_states)
    V_R = policy_evaluation_exact(build_recovery_mdp(mdp, inL, G), learner).V
    V_hat = policy_evaluation_exact(proxy_recovery_mdp(mdp, inL, G, kind), learner).V
    live = ~inL & ~mdp.terminal_mask
    gap = np.where(live, np.abs(V_hat - V_R), 0.0)
    if not live.any():
        return 0.0, None
    i = int(np.argmax(gap))
    return float(gap[i]), i


def check_proxy_bias(mdp: TabularMdp, mu, kind, gammas=(0.9, 0.99, 0.999), learner=None,
                     asserted: bool = True) -> OracleReport:
    """Compare the proxy-evaluated recovery value with V^R.

    L is computed once at the first discount and held fixed across the sweep.
    Diff must match to 1e-8 at every discount; ScaledG and ScaledNextG must
    have strictly shrinking gaps.  Indicator compares greedy recovery
    policies at the last discount.
    """
    kind = ProxyKind(kind)
    n, m = mdp.num_states, mdp.num_actions
    mu_p = as_policy(mu, n, m)
    learner = uniform_policy(mdp) if learner is None else as_policy(learner, n, m)
    base = mdp.with_discount(gammas[0])
    L = switch_setup(base, mu_p, RECOVERY, learner).L
    gaps, witnesses = [], []
    for g in gammas:
        m_g = mdp.with_discount(g)
        G = compute_G_exact(m_g, mu_p)
        gap, w = proxy_gap(m_g, L, G, learner, kind)
        gaps.append(gap)
        witnesses.append(w)
    details = {"gammas": list(gammas), "gaps": gaps, "L_size": int(L.sum())}
    if kind is ProxyKind.DIFF:
        i = int(np.argmax(gaps))
        return _report("proxy_bias[diff]", gaps[i], witnesses[i] if gaps[i] > 1e-8 else None, mdp,
                       "V^R", asserted=asserted, tol=1e-8, **details)
    if kind in (ProxyKind.SCALED_G, ProxyKind.SCALED_NEXT_G):
        # violation: by how much a later gap fails to be strictly smaller; a
        # gap that is already zero (to rounding) has nothing left to shrink
        steps = [0.0 if max(a, b) <= EXACT_GAP else b - a for a, b in zip(gaps, gaps[1:])]
        worst = max((d for d in steps if d != 0.0), default=-1.0)
        violation = worst + 1e-15 if worst >= 0 else 0.0
        return _report(f"proxy_bias[{kind.value}]", violation, None, mdp, "V^R",
                       asserted=asserted, tol=0.0, **details)
    if kind is ProxyKind.INDICATOR:
        m_g = mdp.with_discount(gammas[-1])
        G = compute_G_exact(m_g, mu_p)
        q_oracle = value_iteration(build_recovery_mdp(m_g, L, G))[0].Q
        _, pi_ind = value_iteration(proxy_recovery_mdp(m_g, L, G, kind))
        chosen = (pi_ind * q_oracle).sum(axis=1)
        live = ~L & ~m_g.terminal_mask
        v, w = _worst(q_oracle.max(axis=1) - chosen - TIE_TOL, live)
        return _report("proxy_bias[indicator]", v, w, mdp, "V^R", asserted=asserted, tol=0.0,
                       gamma_checked=gammas[-1], L_size=int(L.sum()))
    gap = max(gaps)
    return _report("proxy_bias[oracle]", gap, None, mdp, "V^R", asserted=asserted, tol=1e-8, **details)


def bias_readings(mdp: TabularMdp, mu, kind, learner, L=None) -> dict:
    """Direct proxy bias against closed-form readings on a deterministic fixture.

    Returns, per start state outside L, the direct bias V-hat^R - V^R and the
    value of three closed-form bias expressions: ``literal`` keeps
    G(s_{t+1}) inside the sum, ``shifted`` uses G(s_{t+i+1}) and ``state_action``
    uses G(s_{t+i}, a_{t+i}).  Readings are diagnostics and never asserted.
    """
    kind = ProxyKind(kind)
    if kind not in (ProxyKind.SCALED_G, ProxyKind.SCALED_NEXT_G):
        raise ValueError("closed-form readings exist for scaled-g and scaled-next-g only")
    if not mdp.is_deterministic:
        raise ValueError("closed-form readings need a deterministic MDP")
    n, m = mdp.num_states, mdp.num_actions
    mu_p, le = as_policy(mu, n, m), as_policy(learner, n, m)
    if not np.all(np.isclose(le.max(axis=1), 1.0)):
        raise ValueError("closed-form readings need a deterministic learner")
    gamma = mdp.discount
    G = compute_G_exact(mdp, mu_p)
    if L is None:
        L = switch_setup(mdp, mu_p, RECOVERY, le).L
    inL = _mask(L, n)
    V_R = policy_evaluation_exact(build_recovery_mdp(mdp, inL, G), le).V
    V_hat = policy_evaluation_exact(proxy_recovery_mdp(mdp, inL, G, kind), le).V
    acts = le.argmax(axis=1)
    rows = {}
    for s0 in range(n):
        if inL[s0] or s0 in mdp.terminal:
            continue
        states, actions, rewards = [s0], [], []
        s = s0
        for _ in range(n + 1):
            a = int(acts[s])
            s2 = int(mdp.next_states[s, a, 0])
            actions.append(a)
            rewards.append(float(mdp.rewards[s, a, 0]))
            states.append(s2)
            s = s2
            if inL[s] or s in mdp.terminal:
                break
        else:
            continue  # the learner never leaves; no finite segment
        T = len(actions)
        disc = np.array([gamma ** i for i in range(max(T - 1, 0))])
        r_sum = float(disc @ np.array(rewards[: T - 1])) if T > 1 else 0.0
        g_next = np.array([G.V[states[i + 1]] for i in range(T - 1)])
        g_sa = np.array([G.Q[states[i], actions[i]] for i in range(T - 1)])
        literal = float(disc.sum() * G.V[states[1]]) if T > 1 else 0.0
        if kind is ProxyKind.SCALED_G:
            forms = {"literal": (1 - gamma) * (literal - gamma * r_sum),
                     "shifted": (1 - gamma) * (float(disc @ g_next) - gamma * r_sum),
                     "state_action": (1 - gamma) * (float(disc @ g_sa) - gamma * r_sum)}
        else:
            forms = {"literal": (1 - gamma) * literal - r_sum,
                     "shifted": (1 - gamma) * float(disc @ g_next) - r_sum,
                     "state_action": (1 - gamma) * float(disc @ g_sa) - r_sum}
        rows[s0] = {"T": T, "direct": float(V_hat[s0] - V_R[s0]), **{k: float(v) for k, v in forms.items()}}
    summary = {}
    for name in ("literal", "shifted", "state_action"):
        errs = [abs(r[name] - r["direct"]) for r in rows.values()]
        flipped = [abs(r[name] + r["direct"]) for r in rows.values()]
        summary[name] = {"max_abs_error": max(errs, default=0.0), "max_abs_error_sign_flipped": max(flipped, default=0.0)}
    return {"kind": kind.value, "states": rows, "summary": summary}


def finite_horizon_value(mdp: TabularMdp, policy, s: int, T: int) -> float:
    """Discounted reward over the first T steps of the unique trajectory from s."""
    if not mdp.is_deterministic:
        raise ValueError("finite_horizon_value needs a deterministic MDP")
    pi = as_policy(policy, mdp.num_states, mdp.num_actions)
    if not np.all(np.isclose(pi.max(axis=1), 1.0)):
        raise ValueError("finite_horizon_value needs a deterministic policy")
    if T < 0:
        raise ValueError("T must be non-negative")
    total, disc = 0.0, 1.0
    for _ in range(T):
        if s in mdp.terminal:
            break
        a = int(pi[s].argmax())
        total += disc * float(mdp.rewards[s, a, 0])
        s = int(mdp.next_states[s, a, 0])
        disc *= mdp.discount
    return total
