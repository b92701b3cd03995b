"""Command-line entry point: ``fimkit <command>``.

Every command writes plain CSV/JSON files into an output directory together
with the effective configuration. Failures exit nonzero with one line on
stderr of the form ``fimkit: error[<category>]: <message>``.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import config as cfgmod
from .config import ConfigError, RunConfig
from .data import (PointCloud, add_noise, gen_swiss_roll, gen_tree, load_csv, save_csv,
                   swiss_roll_chart, swiss_roll_chart_jacobian, tree_landmarks, tree_regions)
from .diffusion import KernelConfig, diffuse, matrix_power, save_matrix
from .fim import FimField, fim_field
from .geodesic import (ChartMetric, EuclideanMetric, GeodesicConfig, LearnedFimMetric, SphereMetric,
                       sphere_great_circle, swiss_roll_geodesic, train_geodesic)
from .mds import phate_jsd_targets
from .nn import Mlp, TrainConfig, load_mlp, save_mlp, train
from .paramscan import volume_grid

FAILED_MARKER = "FAILED"
TIMINGS_FILE = "timings.json"
EXIT_FAILURE = 1
EXIT_USAGE = 2


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def _stage(name: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
        raise StageError(name, exc) from exc


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _prepare_out(out: str, cfg: RunConfig) -> Path:
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    marker = d / FAILED_MARKER
    if marker.exists():
        marker.unlink()
    (d / "config.json").write_text(cfg.dumps(), encoding="utf-8")
    return d


# ---------------------------------------------------------------------------
# pipeline

def make_data(cfg: RunConfig) -> PointCloud:
    dc = cfg.data
    if dc.kind == "tree":
        return gen_tree(dc.n_branches, dc.per_branch, dc.dim, dc.noise_sd, seed=dc.seed,
                        branch_length=dc.branch_length)
    if dc.kind == "swiss-roll":
        return gen_swiss_roll(dc.n, seed=dc.seed, noise_sd=dc.noise_sd)
    if dc.kind == "csv":
        if not dc.input:
            raise ConfigError("data.kind is 'csv' but data.input is not set")
        return load_csv(dc.input, has_header=dc.has_header, label_column=dc.label_column,
                        intrinsic_columns=dc.intrinsic_columns)
    raise ConfigError(f"unknown data.kind {dc.kind!r}")


def kernel_config(cfg: RunConfig) -> KernelConfig:
    k = cfg.kernel
    return KernelConfig(kind=k.kind, sigma=k.sigma, knn=k.knn, beta=k.beta, anisotropy=k.anisotropy)


def train_config(cfg: RunConfig) -> TrainConfig:
    t = cfg.training
    return TrainConfig(learning_rate=t.learning_rate, epochs=t.epochs, batch_size=t.batch_size,
                       weight_decay=t.weight_decay, seed=t.seed, pairs_per_batch=t.pairs_per_batch)


@dataclass
class PipelineResult:
    cloud: PointCloud
    targets: np.ndarray
    mlp: Mlp
    losses: List[float]
    field: FimField
    timings: Dict[str, float]


def run_pipeline(cfg: RunConfig, cloud: Optional[PointCloud] = None) -> PipelineResult:
    """diffuse -> MDS targets -> train -> FIM field, raising StageError on failure."""
    timings = {}

    def timed(name, fn, *args, **kw):
        t0 = time.perf_counter()
        out = _stage(name, fn, *args, **kw)
        timings[name] = time.perf_counter() - t0
        return out

    if cloud is None:
        cloud = timed("load", make_data, cfg)
    if cfg.data.input_noise > 0:
        cloud = add_noise(cloud, cfg.data.input_noise, seed=cfg.data.input_noise_seed)
    arch = list(cfg.network.arch)
    k = cfg.mds.k if cfg.mds.k is not None else arch[-1]
    op = timed("diffuse", diffuse, cloud, kernel_config(cfg))
    Pt = timed("power", matrix_power, op, cfg.diffusion.t)
    targets = timed("mds", phate_jsd_targets, Pt, k, cfg.mds.max_iters, cfg.mds.tol)
    mlp, losses = timed("train", train, cloud, targets, arch, train_config(cfg), cfg.network.activation)
    fld = timed("fim", fim_field, mlp, cloud, cfg.network.fim_mode)
    return PipelineResult(cloud, targets.Y, mlp, losses, fld, timings)


def region_means(cfg: RunConfig, res: PipelineResult) -> dict:
    """Mean FIM trace and volume near tree junctions versus near branch tips."""
    d = cfg.data
    junctions, tips = tree_landmarks(d.n_branches, d.per_branch, d.dim, d.seed, d.branch_length)
    junc, tip = tree_regions(res.cloud.points, junctions, tips, radius=0.1 * d.branch_length)
    out = {"junction_points": int(junc.sum()), "tip_points": int(tip.sum())}
    for name, vals in (("trace", res.field.trace), ("volume", res.field.volume)):
        out[f"{name}_junction"] = float(vals[junc].mean()) if junc.any() else None
        out[f"{name}_tip"] = float(vals[tip].mean())
    return out


def cmd_pipeline(cfg: RunConfig, out: Path) -> dict:
    res = run_pipeline(cfg)
    save_matrix(res.targets, out / "targets.csv", [f"y{j}" for j in range(res.targets.shape[1])])
    save_mlp(res.mlp, out / "model.json")
    save_matrix(np.column_stack([np.arange(1, len(res.losses) + 1), res.losses]),
                out / "loss.csv", ["epoch", "loss"])
    save_matrix(res.field.table(), out / "fim_field.csv", res.field.header())
    summary = {
        "n_points": res.cloud.n,
        "dim": res.cloud.dim,
        "seeds": {"data": cfg.data.seed, "training": cfg.training.seed,
                  "input_noise": cfg.data.input_noise_seed},
        "first_loss": res.losses[0] if res.losses else None,
        "final_loss": res.losses[-1] if res.losses else None,
    }
    if cfg.data.kind == "tree":
        summary["regions"] = region_means(cfg, res)
    _write_json(out / "summary.json", summary)
    # wall-clock times differ between runs, so they get their own file
    _write_json(out / TIMINGS_FILE, {k: round(v, 3) for k, v in res.timings.items()})
    return summary


# ---------------------------------------------------------------------------
# geodesics

def geodesic_config(cfg: RunConfig, **kw) -> GeodesicConfig:
    g = cfg.geodesic
    args = dict(lam=g.lam, n_steps=g.n_steps, epochs=g.epochs, learning_rate=g.learning_rate,
                schedule=g.schedule, final_lr_ratio=g.final_lr_ratio, seed=g.seed)
    args.update(kw)
    return GeodesicConfig(**args)


def _save_path(res, path: Path) -> None:
    d = res.path.shape[1]
    save_matrix(np.column_stack([res.times, res.path]), path, ["t"] + [f"x{j}" for j in range(d)])


def swiss_roll_pairs(n_points: int, n_pairs: int, seed: int):
    """A fixed anchor index and ``n_pairs`` distinct partner indices."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(n_points, size=n_pairs + 1, replace=False)
    return int(idx[0]), [int(i) for i in idx[1:]]


def run_swiss_roll_geodesics(cfg: RunConfig, out: Optional[Path] = None) -> dict:
    g = cfg.geodesic
    cloud = make_data(cfg) if cfg.data.kind == "swiss-roll" else gen_swiss_roll(cfg.data.n, seed=cfg.data.seed)
    if g.metric in ("learned-fim", "learned-fim-ambient"):
        if g.checkpoint:
            mlp = _stage("load", load_mlp, g.checkpoint)
        else:
            mlp = run_pipeline(_variant(cfg, "diffusion", "t", g.roll_t), cloud).mlp
            if out is not None:
                save_mlp(mlp, out / "model.json")
        metric = LearnedFimMetric(mlp, cfg.network.fim_mode)
    elif g.metric == "euclidean":
        metric = EuclideanMetric(cloud.dim)
    else:
        raise ConfigError(f"unknown geodesic.metric {g.metric!r}")
    on_chart = g.metric == "learned-fim"
    if on_chart:
        # paths live on the unrolled (arclength, height) chart of the roll
        metric = ChartMetric(metric, swiss_roll_chart, swiss_roll_chart_jacobian, 2)
        coords = cloud.intrinsic
    else:
        coords = cloud.points
    anchor, partners = swiss_roll_pairs(cloud.n, g.n_pairs, g.pair_seed)
    learned, oracle, misses = [], [], []
    for k, j in enumerate(partners):
        res = _stage("geodesic", train_geodesic, metric, coords[anchor], coords[j],
                     geodesic_config(cfg, epochs=g.pair_epochs))
        learned.append(res.length)
        misses.append(res.endpoint_error)
        oracle.append(swiss_roll_geodesic(cloud, anchor, j))
        if out is not None:
            _save_path(res, out / f"path_{k}.csv")
    corr = float(np.corrcoef(learned, oracle)[0, 1]) if len(partners) > 1 else float("nan")
    return {"anchor": anchor, "partners": partners, "learned_lengths": learned,
            "oracle_lengths": oracle, "endpoint_errors": misses, "correlation": corr, "correlation_type": "pearson",
            "metric": g.metric, "coordinates": "chart" if on_chart else "ambient"}


PRESET_ENDPOINTS = {
    "sphere": ([np.pi / 4, 0.0], [np.pi / 4, np.pi]),
    "euclidean": ([0.0, 0.0], [1.0, 0.0]),
}


def cmd_geodesic(cfg: RunConfig, out: Path) -> dict:
    g = cfg.geodesic
    if g.preset == "swiss-roll":
        summary = run_swiss_roll_geodesics(cfg, out)
        _write_json(out / "summary.json", summary)
        return summary
    if g.preset == "learned-fim":
        if not g.checkpoint:
            raise ConfigError("learned-fim preset needs geodesic.checkpoint")
        mlp = _stage("load", load_mlp, g.checkpoint)
        metric = LearnedFimMetric(mlp, cfg.network.fim_mode)
        if g.start is None or g.target is None:
            raise ConfigError("learned-fim preset needs geodesic.start and geodesic.target")
        start, target = g.start, g.target
    elif g.preset in PRESET_ENDPOINTS:
        metric = SphereMetric() if g.preset == "sphere" else EuclideanMetric(2)
        start, target = PRESET_ENDPOINTS[g.preset]
        start = g.start if g.start is not None else start
        target = g.target if g.target is not None else target
    else:
        raise ConfigError(f"unknown geodesic.preset {g.preset!r}")
    res = _stage("geodesic", train_geodesic, metric, start, target, geodesic_config(cfg))
    _save_path(res, out / "path.csv")
    summary = {"preset": g.preset, "length": res.length, "endpoint_error": res.endpoint_error,
               "epochs": g.epochs, "lambda": g.lam, "final_loss": res.loss_history[-1] if res.loss_history else None}
    if g.preset == "sphere":
        summary["oracle_length"] = sphere_great_circle(start, target)
        summary["min_colatitude"] = float(res.path[:, 0].min())
    _write_json(out / "summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# parameter scan and sensitivity

def scan_cloud(cfg: RunConfig) -> PointCloud:
    if cfg.data.kind == "tree" and cfg.scan.branch_length is not None:
        d = cfg.data
        cloud = gen_tree(d.n_branches, d.per_branch, d.dim, d.noise_sd * cfg.scan.branch_length,
                         seed=d.seed, branch_length=cfg.scan.branch_length)
    else:
        cloud = make_data(cfg)
    return cloud.subsample(min(cfg.scan.subsample, cloud.n), seed=cfg.scan.subsample_seed)


def cmd_param_scan(cfg: RunConfig, out: Path) -> dict:
    s = cfg.scan
    cloud = _stage("load", scan_cloud, cfg)
    grid = _stage("scan", volume_grid, cloud, tuple(s.t_range), tuple(s.sigma_range),
                  s.t_steps, s.sigma_steps, s.h_t, s.rel_h_sigma)
    table = np.full((len(grid.t_values) + 1, len(grid.sigma_values) + 1), np.nan)
    table[0, 1:] = grid.sigma_values
    table[1:, 0] = grid.t_values
    table[1:, 1:] = grid.volume
    save_matrix(table, out / "volume.csv")
    summary = {"t_range": list(s.t_range), "sigma_range": list(s.sigma_range),
               "t_steps": s.t_steps, "sigma_steps": s.sigma_steps, "subsample": cloud.n,
               "subsample_seed": s.subsample_seed,
               "failures": [{"t_index": i, "sigma_index": j, "error": e} for i, j, e in grid.failures]}
    _write_json(out / "scan.json", summary)
    if grid.failures:
        i, j, e = grid.failures[0]
        raise StageError("scan", RuntimeError(f"{len(grid.failures)} cells failed, first at ({i}, {j}): {e}"))
    return summary


def _variant(cfg: RunConfig, section: str, key: str, value) -> RunConfig:
    new = cfgmod.from_dict(cfg.to_dict())
    setattr(getattr(new, section), key, value)
    return new


SENSITIVITY_FACTORS = (("knn", "kernel", "knn", "knn_values"),
                       ("noise", "data", "input_noise", "noise_values"),
                       ("arch", "network", "arch", "arch_values"))


def correlation_table(traces) -> np.ndarray:
    """Pearson correlations between per-point trace vectors; NaN where a run failed."""
    n = len(traces)
    C = np.full((n, n), np.nan)
    for i in range(n):
        for j in range(n):
            if traces[i] is not None and traces[j] is not None:
                C[i, j] = 1.0 if i == j else float(np.corrcoef(traces[i], traces[j])[0, 1])
    return C


def run_sensitivity(cfg: RunConfig, out: Optional[Path] = None) -> Dict[str, np.ndarray]:
    base = make_data(cfg)
    tables, errors = {}, []
    for name, section, key, values_key in SENSITIVITY_FACTORS:
        values = getattr(cfg.sensitivity, values_key)
        traces = []
        for v in values:
            try:
                traces.append(run_pipeline(_variant(cfg, section, key, v), base).field.trace)
            except StageError as exc:
                traces.append(None)
                errors.append({"factor": name, "value": v, "error": str(exc)})
        tables[name] = correlation_table(traces)
        if out is not None:
            save_matrix(tables[name], out / f"sensitivity_{name}.csv", [str(v) for v in values])
    if out is not None:
        meta = {"correlation_type": "pearson", "statistic": "per-point FIM trace",
                "factors": {n: getattr(cfg.sensitivity, vk) for n, _, _, vk in SENSITIVITY_FACTORS},
                "failures": errors}
        _write_json(out / "sensitivity.json", meta)
    return tables


def cmd_sensitivity(cfg: RunConfig, out: Path) -> dict:
    tables = run_sensitivity(cfg, out)
    return {name: T.tolist() for name, T in tables.items()}


# ---------------------------------------------------------------------------
# gen

def cmd_gen(args) -> None:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.kind == "tree":
        pc = gen_tree(args.branches, args.per_branch, args.dim, args.noise, seed=args.seed,
                      branch_length=args.branch_length)
        meta = {"kind": "tree", "branches": args.branches, "per_branch": args.per_branch,
                "dim": args.dim, "noise_sd": args.noise, "branch_length": args.branch_length}
    else:
        pc = gen_swiss_roll(args.n, seed=args.seed, noise_sd=args.noise)
        meta = {"kind": "swiss-roll", "n": args.n, "noise_sd": args.noise}
    meta.update(seed=args.seed, rows=pc.n, columns=pc.dim)
    save_csv(pc, out)
    _write_json(out.with_suffix(".json"), meta)
    print(f"wrote {pc.n} points to {out}")


# ---------------------------------------------------------------------------
# argument handling

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fimkit", description="Fisher information metrics of point clouds.")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    gen = sub.add_parser("gen", help="generate a synthetic point cloud")
    gsub = gen.add_subparsers(dest="kind", metavar="kind")
    gsub.required = True
    tree = gsub.add_parser("tree", help="random branching tree")
    tree.add_argument("--branches", type=int, default=5)
    tree.add_argument("--per-branch", type=int, default=60)
    tree.add_argument("--dim", type=int, default=4)
    tree.add_argument("--noise", type=float, default=0.0)
    tree.add_argument("--branch-length", type=float, default=1.0)
    tree.add_argument("--seed", type=int, default=0)
    tree.add_argument("--out", default="tree.csv")
    roll = gsub.add_parser("swiss-roll", help="swiss roll with intrinsic coordinates")
    roll.add_argument("--n", type=int, default=300)
    roll.add_argument("--noise", type=float, default=0.0)
    roll.add_argument("--seed", type=int, default=0)
    roll.add_argument("--out", default="swiss_roll.csv")

    def with_config(sp):
        sp.add_argument("--config", help=f"JSON config path or a name inside ${cfgmod.CONFIG_DIR_ENV}")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value (JSON-parsed); repeatable")
        sp.add_argument("--out", required=True, help="output directory")
        return sp

    pipe = with_config(sub.add_parser("pipeline", help="diffusion, targets, training and FIM field"))
    pipe.add_argument("--input", help="CSV point cloud (sets data.kind=csv)")
    pipe.add_argument("--epochs", type=int, help="training epochs")
    geo = with_config(sub.add_parser("geodesic", help="neural-ODE geodesic"))
    geo.add_argument("--preset", choices=["sphere", "euclidean", "swiss-roll", "learned-fim"])
    geo.add_argument("--checkpoint", help="network checkpoint for learned-fim metrics")
    geo.add_argument("--epochs", type=int, help="geodesic epochs")
    with_config(sub.add_parser("param-scan", help="FIM volume over (t, sigma)"))
    with_config(sub.add_parser("sensitivity", help="trace correlations across hyperparameters"))
    return p


def effective_config(args) -> RunConfig:
    cfg = cfgmod.load(args.config, args.overrides)
    if getattr(args, "input", None):
        cfg.data.kind, cfg.data.input = "csv", args.input
    if args.command == "pipeline" and args.epochs is not None:
        cfg.training.epochs = args.epochs
    if args.command == "geodesic":
        if args.preset:
            cfg.geodesic.preset = args.preset
        if args.checkpoint:
            cfg.geodesic.checkpoint = args.checkpoint
        if args.epochs is not None:
            cfg.geodesic.epochs = args.epochs
    cfgmod.validate(cfg)
    # build each stage's own config once so range errors surface before any work starts
    kernel_config(cfg)
    train_config(cfg)
    geodesic_config(cfg)
    return cfg


COMMANDS = {"pipeline": cmd_pipeline, "geodesic": cmd_geodesic,
            "param-scan": cmd_param_scan, "sensitivity": cmd_sensitivity}


def _fail(category: str, message: str) -> int:
    print(f"fimkit: error[{category}]: {' '.join(str(message).split())}", file=sys.stderr)
    return EXIT_FAILURE


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "gen":
        try:
            cmd_gen(args)
        except (ValueError, OSError) as exc:
            return _fail("input", exc)
        return 0
    try:
        cfg = effective_config(args)
    except (ConfigError, TypeError, ValueError) as exc:
        return _fail("config", exc)
    try:
        out = _prepare_out(args.out, cfg)
    except OSError as exc:
        return _fail("io", exc)
    try:
        COMMANDS[args.command](cfg, out)
    except (StageError, ConfigError) as exc:
        stage = getattr(exc, "stage", "config")
        (out / FAILED_MARKER).write_text(f"{stage}\n{exc}\n", encoding="utf-8")
        category = "input" if stage == "load" else ("config" if stage == "config" else "stage")
        return _fail(category, exc)
    print(f"wrote outputs to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
