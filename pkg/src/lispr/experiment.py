"""Run configuration, seeded repeats, learning-curve statistics, sweeps,
curve comparison and heatmap export.
"""
from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import (BASELINE, LISPR_RECOVERY, LISPR_STUDENT, RECOVERY, STUDENT, RunArtifacts, SourcePolicy,
                   ThresholdSpec, TrainConfig, in_initiation_set, make_primal, train_baseline, train_recovery,
                   train_student)
from .gridworlds import BOXWORLD, MULTIROOM, SOURCE, TARGET, build_env, layout_hash, render_values, write_grid_csv
from .learning import read_table_csv, write_table_csv
from .mdp import derive_seed
from .proxies import ProxyKind

ALGORITHMS = (BASELINE, LISPR_RECOVERY, LISPR_STUDENT)
CURVE_HEADER = ["step", "mean_return", "ci95_lo", "ci95_hi", "success_rate"]
Z95 = 1.96


@dataclass(frozen=True)
class RunConfig:
    env: str = MULTIROOM
    variant: str = TARGET
    algorithm: str = BASELINE
    proxy: str = ProxyKind.ORACLE.value
    alpha: float = 0.5
    lam: float = 0.6
    eps_initial: float = 1.0
    eps_final: float = 0.1
    main_eps: float = 0.25
    gamma: float = 0.99
    tolerance: float = 0.0
    max_steps: int = 500_000
    eval_every: int = 1000
    eval_episodes: int = 10
    repeats: int = 1
    episode_cap: int = 500
    warmup_primal_steps: int = 0
    threshold: str = RECOVERY
    literal_relabel: bool = False
    seed: int = 0
    # how the source policy is obtained: a saved source Q table, or a
    # baseline run on the source variant with these settings
    source_q: str | None = None
    source_alpha: float = 0.1
    source_lam: float = 0.6
    source_steps: int = 300_000

    def __post_init__(self):
        errors = self.problems()
        if errors:
            raise ValueError("invalid run config: " + "; ".join(errors))

    def problems(self) -> list[str]:
        out = []
        if self.env not in (MULTIROOM, BOXWORLD):
            out.append(f"env must be {MULTIROOM!r} or {BOXWORLD!r}")
        if self.variant not in (SOURCE, TARGET):
            out.append(f"variant must be {SOURCE!r} or {TARGET!r}")
        if self.algorithm not in ALGORITHMS:
            out.append(f"algorithm must be one of {', '.join(ALGORITHMS)}")
        try:
            ProxyKind(self.proxy)
        except ValueError:
            out.append(f"unknown proxy {self.proxy!r}")
        for name in ("alpha", "lam", "eps_initial", "eps_final", "main_eps", "source_alpha", "source_lam"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                out.append(f"{name} must lie in [0, 1]")
        if not (0.0 <= self.gamma < 1.0):
            out.append("gamma must lie in [0, 1)")
        if self.tolerance < 0:
            out.append("tolerance must be non-negative")
        for name in ("eval_every", "eval_episodes", "repeats", "episode_cap"):
            if not (isinstance(getattr(self, name), int) and getattr(self, name) > 0):
                out.append(f"{name} must be a positive integer")
        for name in ("max_steps", "warmup_primal_steps", "source_steps", "seed"):
            if not (isinstance(getattr(self, name), int) and getattr(self, name) >= 0):
                out.append(f"{name} must be a non-negative integer")
        try:
            spec = self.threshold_spec
        except ValueError as exc:
            out.append(str(exc))
        else:
            if spec.kind == RECOVERY and self.algorithm == LISPR_STUDENT:
                out.append("a recovery-value threshold needs lispr-recovery")
            if spec.kind == STUDENT and self.algorithm == LISPR_RECOVERY:
                out.append("a student-value threshold needs lispr-student")
        if self.algorithm != BASELINE and self.variant != TARGET:
            out.append("LISPR runs transfer into the target variant")
        return out

    @property
    def threshold_spec(self) -> ThresholdSpec:
        return ThresholdSpec.parse(self.threshold, self.tolerance)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(alpha=self.alpha, lam=self.lam, eps_initial=self.eps_initial,
                           eps_final=self.eps_final, main_eps=self.main_eps, max_steps=self.max_steps,
                           eval_every=self.eval_every, eval_episodes=self.eval_episodes,
                           episode_cap=self.episode_cap, warmup_primal_steps=self.warmup_primal_steps,
                           proxy=self.proxy, literal_relabel=self.literal_relabel, seed=seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


# --------------------------------------------------------------------------
# curves

@dataclass
class CurveRow:
    step: int
    mean_return: float
    ci95_lo: float
    ci95_hi: float
    success_rate: float


def aggregate_curves(curves) -> list[CurveRow]:
    """Mean and normal-approximation 95% interval across repeats, per evaluation."""
    if not curves:
        raise ValueError("no curves to aggregate")
    steps = [row[0] for row in curves[0]]
    for c in curves[1:]:
        if [row[0] for row in c] != steps:
            raise ValueError("repeats were evaluated on different step grids")
    rows = []
    for i, step in enumerate(steps):
        returns = np.array([c[i][1] for c in curves], dtype=float)
        success = float(np.mean([c[i][2] for c in curves]))
        mean = float(returns.mean())
        half = Z95 * float(returns.std(ddof=1)) / math.sqrt(len(returns)) if len(returns) > 1 else 0.0
        rows.append(CurveRow(int(step), mean, mean - half, mean + half, success))
    return rows


def write_curve_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for r in rows:
            writer.writerow([r.step, repr(r.mean_return), repr(r.ci95_lo), repr(r.ci95_hi), repr(r.success_rate)])


def read_curve_csv(path) -> list[CurveRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CURVE_HEADER:
            raise ValueError(f"{path}: unexpected curve header {header}")
        return [CurveRow(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4])) for r in reader]


def first_step_at(rows, threshold: float = 0.9) -> int | None:
    return next((r.step for r in rows if r.mean_return >= threshold), None)


def area_under_curve(rows) -> float:
    """Mean evaluated return over the evaluation grid (area normalised by its length)."""
    return float(np.mean([r.mean_return for r in rows])) if rows else 0.0


def compare(rows_a, rows_b, threshold: float = 0.9) -> dict:
    if [r.step for r in rows_a] != [r.step for r in rows_b]:
        raise ValueError("curves were evaluated on different step grids")
    auc_a, auc_b = area_under_curve(rows_a), area_under_curve(rows_b)
    if auc_b:
        ratio = auc_a / auc_b
    else:
        ratio = 1.0 if auc_a == 0 else math.inf
    return {
        "steps": [r.step for r in rows_a],
        "mean_difference": [a.mean_return - b.mean_return for a, b in zip(rows_a, rows_b)],
        "auc_a": auc_a,
        "auc_b": auc_b,
        "auc_ratio": ratio,
        "threshold": threshold,
        "first_step_a": first_step_at(rows_a, threshold),
        "first_step_b": first_step_at(rows_b, threshold),
    }


# --------------------------------------------------------------------------
# runs

@dataclass
class RunResult:
    config: RunConfig
    curve: list
    artifacts: list = field(default_factory=list)  # one RunArtifacts per repeat
    seeds: list = field(default_factory=list)
    source_policies: list = field(default_factory=list)


def repeat_seed(seed: int, repeat: int) -> int:
    return derive_seed(seed, 0, repeat)


def source_seed(seed: int, repeat: int) -> int:
    return derive_seed(seed, 2, repeat)


def source_policy(cfg: RunConfig, repeat: int) -> SourcePolicy:
    """Greedy source-task policy carried into the target task."""
    mdp_src, meta_src = build_env(cfg.env, SOURCE, cfg.gamma)
    _, meta_tgt = build_env(cfg.env, TARGET, cfg.gamma)
    if cfg.source_q is not None:
        q_src = read_table_csv(cfg.source_q)
        if q_src.shape != (mdp_src.num_states, mdp_src.num_actions):
            raise ValueError(f"source table {cfg.source_q} does not fit the {cfg.env} source task")
    else:
        src_cfg = TrainConfig(alpha=cfg.source_alpha, lam=cfg.source_lam, eps_initial=cfg.eps_initial,
                              eps_final=cfg.eps_final, max_steps=cfg.source_steps,
                              eval_every=max(cfg.source_steps, 1), eval_episodes=1,
                              episode_cap=cfg.episode_cap, seed=source_seed(cfg.seed, repeat))
        q_src = train_baseline(mdp_src, src_cfg).q
    return SourcePolicy.from_source_q(q_src, meta_src, meta_tgt)


def run_once(cfg: RunConfig, repeat: int = 0, on_eval=None) -> tuple[RunArtifacts, SourcePolicy | None]:
    mdp, _ = build_env(cfg.env, cfg.variant, cfg.gamma)
    tcfg = cfg.train_config(repeat_seed(cfg.seed, repeat))
    if cfg.algorithm == BASELINE:
        return train_baseline(mdp, tcfg, on_eval), None
    mu = source_policy(cfg, repeat)
    primal = make_primal(mu, mdp.num_states, mdp.num_actions, cfg.threshold_spec)
    train = train_recovery if cfg.algorithm == LISPR_RECOVERY else train_student
    return train(mdp, primal, tcfg, on_eval), mu


def run(cfg: RunConfig, out_dir=None) -> RunResult:
    """All repeats of one configuration, aggregated; writes artifacts if ``out_dir`` is given."""
    result = RunResult(cfg, [])
    for r in range(cfg.repeats):
        art, mu = run_once(cfg, r)
        result.artifacts.append(art)
        result.source_policies.append(mu)
        result.seeds.append(repeat_seed(cfg.seed, r))
    result.curve = aggregate_curves([a.curve for a in result.artifacts])
    if out_dir is not None:
        write_run(result, out_dir)
    return result


def write_run(result: RunResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    write_curve_csv(result.curve, out / "curve.csv")
    first = result.artifacts[0]
    n = first.q.shape[0]
    write_table_csv(first.q, out / "q_learner.csv")
    write_table_csv(first.g if first.g is not None else np.zeros_like(first.q), out / "g_table.csv")
    write_table_csv(first.v if first.v is not None else np.zeros(n), out / "v_behavior.csv")
    mu = result.source_policies[0]
    if mu is not None:
        write_table_csv(mu.probs, out / "source_policy.csv")
    meta = {
        "config": cfg.to_dict(),
        "seeds": result.seeds,
        "source_seeds": [source_seed(cfg.seed, r) for r in range(cfg.repeats)] if cfg.algorithm != BASELINE else [],
        "layout_hashes": {f"{cfg.env}_{v}": layout_hash(f"{cfg.env}_{v}") for v in (SOURCE, TARGET)},
        "step_unit": "environment steps",
        "tables_from_repeat": 0,
        "first_step_to_0.9": first_step_at(result.curve, 0.9),
        "auc": area_under_curve(result.curve),
        "version": __version__,
    }
    with open(out / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


# --------------------------------------------------------------------------
# sweeps

def load_sweep(path) -> tuple[RunConfig, dict]:
    """A sweep file is ``{"base": {...run config...}, "grid": {"alpha": [...], ...}}``."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    unknown = sorted(set(data) - {"base", "grid"})
    if unknown:
        raise ValueError(f"unknown sweep keys: {', '.join(unknown)}")
    return RunConfig.from_dict(data.get("base", {})), data.get("grid", {})


def sweep_points(base: RunConfig, grid: dict) -> list[tuple[dict, RunConfig]]:
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("sweep grid is empty")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(grid) - known)
    if unknown:
        raise ValueError(f"unknown sweep parameters: {', '.join(unknown)}")
    names = list(grid)
    points = []
    for values in itertools.product(*(grid[k] for k in names)):
        params = dict(zip(names, values))
        points.append((params, base.replace(**params)))
    return points


def sweep(base: RunConfig, grid: dict, out_dir=None) -> list[dict]:
    """Run every grid point; rank by final mean return, then area under the curve."""
    rows = []
    for params, cfg in sweep_points(base, grid):
        name = "_".join(f"{k}={v}" for k, v in params.items())
        res = run(cfg, None if out_dir is None else Path(out_dir) / name)
        rows.append({"name": name, **params, "final": res.curve[-1].mean_return,
                     "auc": area_under_curve(res.curve), "first_step_to_0.9": first_step_at(res.curve)})
    rows.sort(key=lambda r: (-r["final"], -r["auc"], r["name"]))
    for rank, r in enumerate(rows, 1):
        r["rank"] = rank
    if out_dir is not None:
        cols = ["rank", "name", *grid, "final", "auc", "first_step_to_0.9"]
        with open(Path(out_dir) / "summary.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            writer.writeheader()
            for r in rows:
                writer.writerow({k: r[k] for k in cols})
    return rows


# --------------------------------------------------------------------------
# heatmaps

HEATMAP_TABLES = ("g", "v", "qmax")


def state_table(run_dir, table: str) -> np.ndarray:
    run_dir = Path(run_dir)
    if table == "g":
        g = read_table_csv(_artifact(run_dir, "g_table.csv"))
        mu = read_table_csv(_artifact(run_dir, "source_policy.csv"))
        return (mu * g).sum(axis=1)
    if table == "v":
        return read_table_csv(_artifact(run_dir, "v_behavior.csv"))
    if table == "qmax":
        return read_table_csv(_artifact(run_dir, "q_learner.csv")).max(axis=1)
    raise ValueError(f"table must be one of {', '.join(HEATMAP_TABLES)}")


def _artifact(run_dir: Path, name: str) -> Path:
    path = run_dir / name
    if not path.exists():
        raise FileNotFoundError(f"run artifact missing: {path}")
    return path


def membership(run_dir, threshold: str | None = None) -> np.ndarray:
    """Initiation-set membership per state at the run's (or the given) threshold."""
    from .core import PrimalOption, Tables

    run_dir = Path(run_dir)
    cfg = RunConfig.from_dict(json.loads(_artifact(run_dir, "meta.json").read_text("utf-8"))["config"])
    spec = ThresholdSpec.parse(threshold, cfg.tolerance) if threshold else cfg.threshold_spec
    g = read_table_csv(_artifact(run_dir, "g_table.csv"))
    mu = SourcePolicy(read_table_csv(_artifact(run_dir, "source_policy.csv")))
    q = read_table_csv(_artifact(run_dir, "q_learner.csv"))
    v = read_table_csv(_artifact(run_dir, "v_behavior.csv"))
    tables = Tables(q_recovery=q if cfg.algorithm == LISPR_RECOVERY else None,
                    q_student=q if cfg.algorithm == LISPR_STUDENT else None, v_behavior=v)
    p = PrimalOption(mu, g, spec)
    return np.array([in_initiation_set(p, s, tables) for s in range(q.shape[0])], dtype=float)


def export_heatmap(run_dir, table: str = "g", out_dir=None, threshold: str | None = None) -> dict:
    """Write ``heatmap_<table>.csv`` and, for LISPR runs, ``membership.csv`` (1 = primal)."""
    run_dir = Path(run_dir)
    cfg = RunConfig.from_dict(json.loads(_artifact(run_dir, "meta.json").read_text("utf-8"))["config"])
    _, meta = build_env(cfg.env, cfg.variant, cfg.gamma)
    out_dir = Path(out_dir) if out_dir is not None else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = render_values(state_table(run_dir, table), meta)
    paths = {"heatmap": out_dir / f"heatmap_{table}.csv"}
    write_grid_csv(grid, paths["heatmap"])
    result = {"heatmap": grid}
    if (run_dir / "source_policy.csv").exists():
        member = render_values(membership(run_dir, threshold), meta)
        paths["membership"] = out_dir / "membership.csv"
        write_grid_csv(member, paths["membership"])
        result["membership"] = member
    result["paths"] = paths
    return result
