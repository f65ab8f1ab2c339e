"""Verification suites: run the oracle checks over fixtures and random MDPs.

Every report carries an ``asserted`` flag.  Only asserted reports decide the
exit status; the rest are diagnostics kept for inspection.
"""
from __future__ import annotations

import numpy as np

from . import oracle
from .fixtures import bundled_fixtures, random_mdp
from .proxies import ProxyKind

SUITES = ("core", "proxies", "diagnostics", "all")
KINDS = (oracle.RECOVERY, oracle.STUDENT)
DEFAULT_SEEDS = range(0, 100)


def parse_seed_range(text: str) -> range:
    """``"a..b"`` (inclusive) or a single integer."""
    lo, sep, hi = text.partition("..")
    if not sep:
        return range(int(lo), int(lo) + 1)
    lo, hi = int(lo), int(hi)
    if hi < lo:
        raise ValueError(f"empty seed range {text!r}")
    return range(lo, hi + 1)


def core_suite(seeds=DEFAULT_SEEDS) -> list:
    reports = []
    for fx in bundled_fixtures():
        for kind in KINDS:
            reports.append(oracle.check_lower_bound(fx.mdp, fx.mu, kind))
            reports.append(oracle.check_optimality(fx.mdp, fx.mu, kind))
            reports.append(oracle.check_improvement(fx.mdp, fx.mu, kind))
            reports.append(oracle.check_contraction(fx.mdp, fx.mu, kind))
    for seed in seeds:
        fx = random_mdp(seed)
        for kind in KINDS:
            reports.append(oracle.check_lower_bound(fx.mdp, fx.mu, kind))
            reports.append(oracle.check_contraction(fx.mdp, fx.mu, kind))
            reports.append(oracle.check_improvement(fx.mdp, fx.mu, kind, asserted=False))
    return reports


def _readings_report(fx) -> oracle.OracleReport:
    mdp = fx.mdp.with_discount(0.99)
    G = oracle.compute_G_exact(mdp, fx.mu)
    L = oracle.switch_setup(mdp, fx.mu, oracle.RECOVERY).L
    _, learner = oracle.value_iteration(oracle.build_recovery_mdp(mdp, L, G))
    summary = {}
    for kind in (ProxyKind.SCALED_G, ProxyKind.SCALED_NEXT_G):
        res = oracle.bias_readings(mdp, fx.mu, kind, learner, L)
        summary[kind.value] = res["summary"]
    best = min(v["max_abs_error"] for s in summary.values() for v in s.values())
    return oracle.OracleReport("bias_readings", True, best, None, False, mdp.name, 0.99, "V^R",
                               {"summary": summary})


def proxies_suite(seeds=DEFAULT_SEEDS) -> list:
    reports = []
    for fx in bundled_fixtures():
        reports.append(oracle.check_proxy_bias(fx.mdp, fx.mu, ProxyKind.DIFF))
        if fx.zero_intermediate:
            reports.append(oracle.check_proxy_bias(fx.mdp, fx.mu, ProxyKind.SCALED_NEXT_G))
            # on stochastic chains G(s, a) averages over outcomes but is paid
            # only on entry to L, so that bias does not shrink with gamma
            reports.append(oracle.check_proxy_bias(fx.mdp, fx.mu, ProxyKind.SCALED_G,
                                                   asserted=fx.mdp.is_deterministic))
        if fx.mdp.is_deterministic:
            reports.append(_readings_report(fx))
        if fx.binary_terminal:
            reports.append(oracle.check_proxy_bias(fx.mdp, fx.mu, ProxyKind.INDICATOR))
    for seed in seeds:
        fx = random_mdp(seed)
        reports.append(oracle.check_proxy_bias(fx.mdp, fx.mu, ProxyKind.DIFF, gammas=(0.9,)))
    return reports


def _fixpoint_report(fx) -> oracle.OracleReport:
    """How the threshold fixpoint depends on its starting set."""
    mdp = fx.mdp
    G = oracle.compute_G_exact(mdp, fx.mu)
    learner = oracle.uniform_policy(mdp)
    n = mdp.num_states
    starts = {"G>=V*": None, "empty": np.zeros(n, dtype=bool), "all": np.ones(n, dtype=bool)}
    sols = {k: oracle.recovery_fixpoint(mdp, G, learner, L0) for k, L0 in starts.items()}
    ref = sols["G>=V*"].L
    differ = max(int((s.L != ref).sum()) for s in sols.values())
    return oracle.OracleReport("fixpoint_start_dependence", differ == 0, float(differ), None, False,
                               mdp.name, mdp.discount, "V^R",
                               {k: {"L_size": int(s.L.sum()), "iterations": s.iterations, "cycled": s.cycled}
                                for k, s in sols.items()})


def diagnostics_suite(seeds=DEFAULT_SEEDS) -> list:
    reports = []
    for fx in bundled_fixtures():
        n = fx.mdp.num_states
        reports.append(oracle.check_anti_main_identity(fx.mdp, fx.mu, asserted=fx.aligned,
                                                       label="fixpoint"))
        for label, L in (("L=empty", np.zeros(n, dtype=bool)), ("L=all", np.ones(n, dtype=bool))):
            reports.append(oracle.check_anti_main_identity(fx.mdp, fx.mu, learner=fx.learner, L=L,
                                                           asserted=True, label=label))
        reports.append(_fixpoint_report(fx))
    for seed in seeds:
        fx = random_mdp(seed)
        reports.append(oracle.check_anti_main_identity(fx.mdp, fx.mu, label="fixpoint"))
        reports.append(_fixpoint_report(fx))
    return reports


def run_suite(name: str, seeds=DEFAULT_SEEDS) -> list:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    out = []
    if name in ("core", "all"):
        out += core_suite(seeds)
    if name in ("proxies", "all"):
        out += proxies_suite(seeds)
    if name in ("diagnostics", "all"):
        out += diagnostics_suite(seeds)
    return out


def exit_code(reports) -> int:
    return 0 if all(r.passed for r in reports if r.asserted) else 1


def format_table(reports) -> str:
    lines = [f"{'check':32} {'mdp':22} {'gamma':>6} {'status':8} {'max_violation':>14}  witness"]
    for r in reports:
        status = ("pass" if r.passed else "FAIL") if r.asserted else ("ok" if r.passed else "report")
        gamma = "" if r.gamma is None else f"{r.gamma:g}"
        witness = "" if r.witness is None else str(r.witness)
        lines.append(f"{r.check:32} {r.mdp:22} {gamma:>6} {status:8} {r.max_violation:14.3g}  {witness}")
    asserted = [r for r in reports if r.asserted]
    failed = sum(not r.passed for r in asserted)
    lines.append(f"{len(asserted)} asserted checks, {failed} failed; {len(reports) - len(asserted)} diagnostics")
    return "\n".join(lines)
