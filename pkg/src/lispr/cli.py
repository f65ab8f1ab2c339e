"""Command-line entry point: ``lispr run|sweep|verify|heatmap|compare``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiment, verify
from .proxies import ProxyKind


def _cmd_run(args) -> int:
    cfg = experiment.RunConfig.load(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.proxy is not None:
        changes["proxy"] = args.proxy
    if changes:
        cfg = cfg.replace(**changes)
    res = experiment.run(cfg, args.out)
    last = res.curve[-1]
    first = experiment.first_step_at(res.curve)
    print(f"{cfg.env}/{cfg.variant} {cfg.algorithm}: final mean return {last.mean_return:.3f} "
          f"(95% CI {last.ci95_lo:.3f}..{last.ci95_hi:.3f}), first step to 0.9: {first}")
    print(f"artifacts written to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    base, grid = experiment.load_sweep(args.config)
    rows = experiment.sweep(base, grid, args.out)
    for r in rows:
        print(f"{r['rank']:3d}  {r['name']:40s} final={r['final']:.3f} auc={r['auc']:.3f}")
    return 0


def _cmd_verify(args) -> int:
    seeds = verify.parse_seed_range(args.mdp_seed_range)
    reports = verify.run_suite(args.suite, seeds)
    print(verify.format_table(reports))
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    with open(report_path, "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")
    print(f"report written to {report_path}")
    return verify.exit_code(reports)


def _cmd_heatmap(args) -> int:
    res = experiment.export_heatmap(args.run, args.table, args.out, args.threshold)
    for kind, path in res["paths"].items():
        print(f"{kind}: {path}")
    return 0


def _cmd_compare(args) -> int:
    a = experiment.read_curve_csv(args.curve_a)
    b = experiment.read_curve_csv(args.curve_b)
    summary = experiment.compare(a, b, args.threshold)
    if args.json:
        print(json.dumps(summary, indent=2))
        return 0
    print(f"AUC  A={summary['auc_a']:.4f}  B={summary['auc_b']:.4f}  ratio A/B={summary['auc_ratio']:.4f}")
    print(f"first step to {args.threshold}:  A={summary['first_step_a']}  B={summary['first_step_b']}")
    diffs = summary["mean_difference"]
    print(f"mean difference A-B over {len(diffs)} evaluations: "
          f"min {min(diffs):+.3f}, max {max(diffs):+.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lispr", description="Tabular LISPR experiments and exact checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one configuration (all repeats)")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--proxy", choices=[k.value for k in ProxyKind], help="override the recovery reward")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run a parameter grid and rank the results")
    p.add_argument("--config", required=True, help='sweep JSON: {"base": {...}, "grid": {...}}')
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("verify", help="exact dynamic-programming checks")
    p.add_argument("--suite", choices=verify.SUITES, default="all")
    p.add_argument("--mdp-seed-range", default="0..99", help="random MDP seeds, inclusive (a..b)")
    p.add_argument("--report", default="verify_report.jsonl", help="JSON-lines report path")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("heatmap", help="export a value table laid out on the grid")
    p.add_argument("--run", required=True, help="run output directory")
    p.add_argument("--table", choices=experiment.HEATMAP_TABLES, default="g")
    p.add_argument("--threshold", help="membership threshold, e.g. constant:0.9 (default: the run's)")
    p.add_argument("--out", help="output directory (default: the run directory)")
    p.set_defaults(func=_cmd_heatmap)

    p = sub.add_parser("compare", help="compare two learning curves")
    p.add_argument("curve_a")
    p.add_argument("curve_b")
    p.add_argument("--threshold", type=float, default=0.9)
    p.add_argument("--json", action="store_true", help="print the full summary as JSON")
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"lispr: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
