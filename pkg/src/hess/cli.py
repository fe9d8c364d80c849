"""Command-line driver: train, calibrate, sweep, infer, ablate, sanity, gradcheck.

Configuration is a flat ``key = value`` text file (``--config``) whose keys are
:class:`RunConfig` field names; command-line flags override file values, which
override defaults.  Exit codes: 0 success (or PASS), 1 usage error, 2
numerical or validation failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import statistics
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import attention, autodiff as ad, geometry, gradcheck, pipeline, report
from .pipeline import SyntheticScene, ToyModel, generate_scene
from .sensitivity import (SENSITIVITY_PARAMS, CalibrationError,
                          FingerprintMismatchError, HessTable, calibrate)

DEFAULT_GRID = ((1.0, 0.0), (0.97, 0.1), (0.9, 0.5), (0.7, 0.5), (0.4, 0.8))

# Offsets keep the train/calibration/evaluation scene sets disjoint for a
# given base seed.
TRAIN_SEED_OFFSET = 20_000
CALIB_SEED_OFFSET = 10_000
EVAL_SEED_OFFSET = 30_000


class UsageError(Exception):
    """Bad invocation: unknown keys, missing files, inconsistent flags."""


@dataclass
class RunConfig:
    """Every knob of the toolkit, with defaults that match the toy scale."""

    seed: int = 0
    n_layers: int = 4
    n_heads: int = 4
    d_model: int = 32
    d_head: int = 8
    n_views: int = 20
    tokens_per_view: int = 17
    block_size: int | None = None
    train_scenes: int = 4
    train_steps: int = 500
    train_stream: bool = True
    lr: float = 0.2
    conf_penalty: float = 0.05
    calib_scenes: int = 40
    eval_scenes: int = 10
    lam: float = 0.5
    eps: float = 0.05
    conf_cutoff: float = 1.0
    tau: float = 0.9
    rho: float = 0.5
    sens_param: str = "wq"
    protected: str = "anchor"
    equal_baselines: bool = False
    scaled_pooling: bool = False
    icp_iters: int = 20
    icp_tol: float = 1e-9
    threads: int = 1
    model_path: str | None = None
    scores_path: str | None = None
    out_dir: str = "runs"
    force: bool = False

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        for name in ("tau", "rho"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not (self.eps > 0.0 and math.isfinite(self.eps)):
            raise ValueError(f"eps must be positive and finite, got {self.eps}")
        if self.sens_param not in SENSITIVITY_PARAMS:
            raise ValueError(f"sens_param must be one of {SENSITIVITY_PARAMS}")
        if self.protected not in ("anchor", "per-frame", "none"):
            raise ValueError(f"unknown protection policy {self.protected!r}")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        for name in ("n_layers", "n_heads", "d_model", "d_head", "n_views",
                     "tokens_per_view", "train_scenes", "calib_scenes", "eval_scenes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.train_steps < 0 or self.lr <= 0.0:
            raise ValueError("train_steps must be >= 0 and lr > 0")
        paths = [p for p in (self.model_path, self.scores_path) if p]
        if len(paths) != len(set(paths)):
            raise ValueError("model and scores paths must be distinct")

    # -- scene batches -------------------------------------------------------
    def _scenes(self, offset: int, count: int) -> list[SyntheticScene]:
        return [generate_scene(self.seed + offset + i, self.n_views,
                               self.tokens_per_view, d_model=self.d_model)
                for i in range(count)]

    def train_source(self):
        """Scene supplier for training: streaming factory or a fixed list."""
        if self.train_stream:
            return pipeline.scene_stream(self.seed + TRAIN_SEED_OFFSET,
                                         self.n_views, self.tokens_per_view,
                                         d_model=self.d_model,
                                         batch=self.train_scenes)
        return self._scenes(TRAIN_SEED_OFFSET, self.train_scenes)

    def calib_batch(self) -> list[SyntheticScene]:
        return self._scenes(CALIB_SEED_OFFSET, self.calib_scenes)

    def eval_batch(self) -> list[SyntheticScene]:
        return self._scenes(EVAL_SEED_OFFSET, self.eval_scenes)

    def new_model(self) -> ToyModel:
        return ToyModel(self.n_layers, self.n_heads, self.d_model, self.d_head,
                        seed=self.seed)

    def run_kwargs(self) -> dict:
        return dict(block_size=self.block_size, protected=self.protected,
                    equal_baselines=self.equal_baselines,
                    scaled_pooling=self.scaled_pooling,
                    eps=self.eps, conf_cutoff=self.conf_cutoff,
                    icp_iters=self.icp_iters, icp_tol=self.icp_tol)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_BOOL_FIELDS = {"equal_baselines", "scaled_pooling", "force", "train_stream"}
_CONFIG_ALIASES = {"lambda": "lam"}


def parse_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{ln}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    try:
        if name in _BOOL_FIELDS:
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if name == "block_size":
            return None if raw.lower() in ("", "none") else int(raw)
        if "int" in str(kind):
            return int(raw)
        if "float" in str(kind):
            return float(raw)
        return raw
    except ValueError as exc:
        raise UsageError(f"config key {name!r}: {exc}") from None


def build_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        for key, raw in parse_config_file(args.config).items():
            name = _CONFIG_ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
            if name not in _FIELD_TYPES:
                raise UsageError(f"unknown config key {key!r}")
            values[name] = _coerce(name, raw)
    if "threads" not in values and "HESS_THREADS" in os.environ:
        values["threads"] = _coerce("threads", os.environ["HESS_THREADS"])
    for name in _FIELD_TYPES:
        cli_value = getattr(args, name, None)
        if cli_value is not None:
            values[name] = cli_value
    try:
        return RunConfig(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def load_grid(args: argparse.Namespace) -> list[tuple[float, float]]:
    """Grid file: one ``tau rho`` pair per line, ``#`` comments."""
    path = getattr(args, "grid", None)
    if not path:
        return [tuple(pair) for pair in DEFAULT_GRID]
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read grid file: {exc}") from None
    grid: list[tuple[float, float]] = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.replace(",", " ").split()
        if len(fields) != 2:
            raise UsageError(f"{path}:{ln}: expected 'tau rho', got {line!r}")
        tau, rho = (float(f) for f in fields)
        if not (0.0 <= tau <= 1.0 and 0.0 <= rho <= 1.0):
            raise UsageError(f"{path}:{ln}: tau/rho must be in [0, 1]")
        grid.append((tau, rho))
    if not grid:
        raise UsageError(f"grid file {path} contains no configurations")
    return grid


def _require_file(path: str | None, what: str) -> str:
    if not path:
        raise UsageError(f"--{what} is required")
    if not Path(path).is_file():
        raise UsageError(f"{what} file not found: {path}")
    return path


def _load_model(cfg: RunConfig) -> ToyModel:
    return ToyModel.load(_require_file(cfg.model_path, "model"))


def _load_table(cfg: RunConfig, model: ToyModel) -> HessTable:
    return HessTable.load(_require_file(cfg.scores_path, "scores"),
                          expect_fingerprint=model.fingerprint(), force=cfg.force)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(cfg: RunConfig, args) -> int:
    if not cfg.model_path:
        raise UsageError("--model is required (output path for the trained model)")
    if Path(cfg.model_path).exists() and not cfg.force:
        raise UsageError(f"{cfg.model_path} exists; pass --force to overwrite")
    model = cfg.new_model()
    losses = pipeline.train_toy(model, cfg.train_source(), cfg.train_steps,
                                cfg.lr, conf_penalty=cfg.conf_penalty)
    Path(cfg.model_path).parent.mkdir(parents=True, exist_ok=True)
    model.save(cfg.model_path)
    first = losses[0] if losses else math.nan
    last = losses[-1] if losses else math.nan
    print(f"trained {cfg.train_steps} steps on {cfg.train_scenes} scenes: "
          f"loss {first:.6g} -> {last:.6g}")
    print(f"model written to {cfg.model_path} (fingerprint {model.fingerprint()[:12]})")
    return 0


def cmd_calibrate(cfg: RunConfig, args) -> int:
    if args.train_first:
        if not cfg.model_path:
            raise UsageError("--model is required with --train-first")
        model = cfg.new_model()
        pipeline.train_toy(model, cfg.train_source(), cfg.train_steps, cfg.lr,
                           conf_penalty=cfg.conf_penalty)
        Path(cfg.model_path).parent.mkdir(parents=True, exist_ok=True)
        model.save(cfg.model_path)
        print(f"trained fresh model -> {cfg.model_path}")
    else:
        model = _load_model(cfg)
    if not cfg.scores_path:
        raise UsageError("--scores is required (output path for the table)")
    table = calibrate(model, cfg.calib_batch(), cfg.lam, cfg.eps,
                      conf_cutoff=cfg.conf_cutoff, sens_param=cfg.sens_param,
                      seed=cfg.seed, threads=cfg.threads,
                      icp_iters=cfg.icp_iters, icp_tol=cfg.icp_tol)
    Path(cfg.scores_path).parent.mkdir(parents=True, exist_ok=True)
    table.save(cfg.scores_path)
    print(f"calibrated on {table.meta.num_samples} samples "
          f"(lambda={cfg.lam}, sens_param={cfg.sens_param})")
    for layer in table.layers():
        heads = table.layer_heads(layer)
        scores = table.layer_scores(layer, "hess")
        ranked = sorted(zip(scores, heads), key=lambda sh: (-sh[0], sh[1]))
        top = ", ".join(f"h{h}={s:.4f}" for s, h in ranked[:3])
        print(f"  layer {layer}: {top}")
    print(f"table written to {cfg.scores_path}")
    return 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    model = _load_model(cfg)
    table = _load_table(cfg, model)
    grid = load_grid(args)
    modes = tuple(args.modes.split(",")) if args.modes else pipeline.RUN_MODES
    for mode in modes:
        if mode not in pipeline.RUN_MODES:
            raise UsageError(f"unknown mode {mode!r}")
    rows = pipeline.sweep(model, cfg.eval_batch(), table, grid, modes,
                          seed=cfg.seed, threads=cfg.threads, **cfg.run_kwargs())
    out = _out_dir(cfg)
    csv_path = out / "sweep.csv"
    report.write_sweep_csv(rows, csv_path)
    print(f"wrote {len(rows)} rows to {csv_path}")
    if args.svg:
        svg_path = out / "sweep_e_cam.svg"
        report.write_error_chart_svg(rows, svg_path, metric="e_cam")
        print(f"wrote chart to {svg_path}")
    return 0


def cmd_infer(cfg: RunConfig, args) -> int:
    model = _load_model(cfg)
    table = _load_table(cfg, model)
    scene = generate_scene(cfg.seed + EVAL_SEED_OFFSET, cfg.n_views,
                           cfg.tokens_per_view, d_model=cfg.d_model)
    result = pipeline.run_sparse(model, scene, table, cfg.tau, cfg.rho,
                                 mode="hess", **cfg.run_kwargs())
    print(f"tau={cfg.tau} rho={cfg.rho} sparsity={result.sparsity:.6g} "
          f"e_cam={result.e_cam:.6g} e_pc={result.e_pc:.6g}")
    if args.dump_alloc:
        out = _out_dir(cfg)
        alloc_path = out / "allocations.csv"
        report.write_allocations_csv(result.allocations, alloc_path)
        print(f"wrote allocations to {alloc_path}")
    return 0


def cmd_ablate(cfg: RunConfig, args) -> int:
    model = _load_model(cfg)
    table = _load_table(cfg, model)
    try:
        lambdas = [float(v) for v in args.lambdas.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--lambdas: {exc}") from None
    if not lambdas:
        raise UsageError("--lambdas produced no values")
    rows = pipeline.ablate_lambda(model, cfg.eval_batch(), table, lambdas,
                                  cfg.tau, cfg.rho, seed=cfg.seed,
                                  threads=cfg.threads, **cfg.run_kwargs())
    out = _out_dir(cfg)
    csv_path = out / "ablation.csv"
    report.write_ablation_csv(rows, csv_path)
    print(f"wrote {len(rows)} rows to {csv_path}")
    for r in rows:
        print(f"lambda={r.lam:.3g} sparsity={r.sparsity:.6g} "
              f"e_cam={r.e_cam:.6g} e_pc={r.e_pc:.6g}")
    return 0


def cmd_sanity(cfg: RunConfig, args) -> int:
    model = _load_model(cfg)
    table = _load_table(cfg, model)
    if cfg.eval_scenes < 10:
        raise UsageError("sanity needs at least 10 evaluation scenes")
    if args.tau is not None and args.rho is not None:
        tau, rho = cfg.tau, cfg.rho
    else:
        grid = load_grid(args)
        tau, rho = sorted(grid, key=lambda tr: (-tr[1], tr[0]))[0]
    scenes = cfg.eval_batch()
    per_mode: dict[str, list[float]] = {"hess": [], "reverse": []}
    sparsities: list[float] = []
    for scene in scenes:
        for mode in ("hess", "reverse"):
            r = pipeline.run_sparse(model, scene, table, tau, rho, mode=mode,
                                    **cfg.run_kwargs())
            per_mode[mode].append(r.e_cam)
            sparsities.append(r.sparsity)
    med_hess = statistics.median(per_mode["hess"])
    med_rev = statistics.median(per_mode["reverse"])
    mean_sparsity = sum(sparsities) / len(sparsities)
    print(f"tau={tau} rho={rho} mean sparsity={mean_sparsity:.6g} "
          f"median e_cam: hess={med_hess:.6g} reverse={med_rev:.6g}")
    if mean_sparsity <= 1e-12:
        print("INCONCLUSIVE: configuration achieves zero sparsity")
        return 0
    if med_hess < med_rev:
        print("PASS: sensitivity-guided budgets beat reversed budgets")
        return 0
    print("FAIL: reversed budgets did not degrade accuracy")
    return 2


def _gradcheck_suites(seed: int):
    """(name, result, default_tol) triples for every differentiable surface."""
    rng = np.random.default_rng(seed)
    suites = []

    # 1. every autodiff op, all entries, composite weighted-sum losses
    a = ad.Tensor(rng.uniform(-1, 1, (4, 3)))
    b = ad.Tensor(rng.uniform(-1, 1, (3, 5)))
    c = ad.Tensor(rng.uniform(-1, 1, (4, 3)))
    pos = ad.Tensor(rng.uniform(0.5, 1.5, (4, 3)))
    w_mm = rng.uniform(-1, 1, (4, 5))
    w_sm = rng.uniform(-1, 1, (4, 3))
    w_pool = rng.uniform(-1, 1, (2, 3))
    w_rows = rng.uniform(-1, 1, (4, 1))
    w_cat = rng.uniform(-1, 1, (4, 6))
    idx = np.array([0, 2, 2, 3])
    w_take = rng.uniform(-1, 1, (4, 3))

    def weighted(t, w):
        return ad.sum_all(ad.mul(t, ad.Tensor(w)))

    losses = {
        "matmul": lambda: weighted(ad.matmul(a, b), w_mm),
        "transpose": lambda: weighted(ad.transpose(ad.transpose(a)), w_sm),
        "add_sub_mul": lambda: weighted(ad.mul(ad.add(a, c), ad.sub(a, c)), w_sm),
        "scale_affine": lambda: weighted(ad.affine(ad.scale(a, 1.7), 0.5, 0.25), w_sm),
        "softmax_rows": lambda: weighted(ad.softmax_rows(a), w_sm),
        "avg_pool_rows": lambda: weighted(ad.avg_pool_rows(a, 2), w_pool),
        "row_sums": lambda: weighted(ad.row_sums(a), w_rows),
        "tanh": lambda: weighted(ad.tanh(a), w_sm),
        "softplus": lambda: weighted(ad.softplus(a), w_sm),
        "log": lambda: weighted(ad.log(pos), w_sm),
        "take_rows": lambda: weighted(ad.take_rows(a, idx), w_take),
        "concat_cols": lambda: weighted(ad.concat_cols([a, c]), w_cat),
    }
    worst = gradcheck.GradCheckResult(tol=1e-4)
    for name, build in losses.items():
        params = {"a": a, "b": b, "c": c, "pos": pos}
        res = gradcheck.check_gradients(build, params, tol=1e-4)
        worst.per_param[name] = res.max_rel_err
        worst.max_rel_err = max(worst.max_rel_err, res.max_rel_err)
    suites.append(("autodiff-ops", worst, 1e-4))

    # 2. geometric errors through a fixed transform
    pred = ad.Tensor(rng.uniform(-1, 1, (12, 3)))
    gt_cams = rng.uniform(-1, 1, (12, 3))
    rot = geometry.rotation_about_axis(rng.normal(size=3), 0.7)
    h = geometry.SimilarityTransform(1.3, rot, np.array([0.2, -0.1, 0.4]))
    res_cam = gradcheck.check_gradients(
        lambda: geometry.camera_pose_error(pred, gt_cams, h), {"pred": pred}, tol=1e-5)
    suites.append(("camera-error-grad", res_cam, 1e-5))

    pred_pts = ad.Tensor(rng.uniform(-1, 1, (15, 3)))
    gt_pts = rng.uniform(-1, 1, (9, 3))
    inliers = np.array([0, 3, 4, 7, 11])
    matches = gt_pts[rng.integers(0, 9, size=inliers.size)]
    res_pc = gradcheck.check_gradients(
        lambda: geometry.point_cloud_error_frozen(pred_pts, matches, h, inliers),
        {"pred": pred_pts}, tol=1e-4)
    suites.append(("point-error-grad", res_pc, 1e-4))

    # 3. head-level gradients through the full model
    scene = generate_scene(seed, n_views=3, tokens_per_view=5, d_model=16)
    model = ToyModel(n_layers=2, n_heads=2, d_model=16, d_head=4, seed=seed)
    head_params = {f"layer{hid.layer}.head{hid.head}.wq": t
                   for hid, t in model.sensitivity_params("wq").items()}

    def model_loss():
        pred = model.forward_dense(scene)
        return geometry.camera_pose_error(pred.cameras, scene.gt_cameras,
                                          geometry.SimilarityTransform.identity())

    res_model = gradcheck.check_gradients(model_loss, head_params, tol=1e-3,
                                          entries_per_param=10,
                                          rng=np.random.default_rng(seed))
    suites.append(("model-head-grads", res_model, 1e-3))
    return suites


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    failures = 0
    for name, result, default_tol in _gradcheck_suites(cfg.seed):
        tol = args.tol if args.tol is not None else default_tol
        ok = result.max_rel_err < tol
        print(f"{name}: max rel err {result.max_rel_err:.3e} "
              f"(tol {tol:.1e}) {'PASS' if ok else 'FAIL'}")
        failures += 0 if ok else 1
    if failures:
        print(f"FAIL: {failures} suite(s) above tolerance")
        return 2
    print("PASS: all gradient suites within tolerance")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("shared options")
    g.add_argument("--config", help="flat key=value configuration file")
    g.add_argument("--seed", type=int)
    g.add_argument("--lambda", dest="lam", type=float,
                   help="blend between the camera and point sensitivities")
    g.add_argument("--eps", type=float, help="squared-distance inlier threshold")
    g.add_argument("--tau", type=float, help="CDF coverage threshold")
    g.add_argument("--rho", type=float, help="sparse ratio floor")
    g.add_argument("--sens-param", dest="sens_param", choices=SENSITIVITY_PARAMS)
    g.add_argument("--equal-baselines", dest="equal_baselines",
                   action="store_true", default=None)
    g.add_argument("--scaled-pooling", dest="scaled_pooling",
                   action="store_true", default=None)
    g.add_argument("--protected", choices=("anchor", "per-frame", "none"))
    g.add_argument("--threads", type=int, help="worker threads (or HESS_THREADS)")
    g.add_argument("--model", dest="model_path", help="model file path")
    g.add_argument("--scores", dest="scores_path", help="score table path")
    g.add_argument("--out", dest="out_dir", help="output directory")
    g.add_argument("--force", action="store_true", default=None,
                   help="overwrite outputs / accept fingerprint mismatches")
    g.add_argument("--views", dest="n_views", type=int)
    g.add_argument("--tokens-per-view", dest="tokens_per_view", type=int)
    g.add_argument("--layers", dest="n_layers", type=int)
    g.add_argument("--heads", dest="n_heads", type=int)
    g.add_argument("--block-size", dest="block_size", type=int)
    g.add_argument("--steps", dest="train_steps", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--train-scenes", dest="train_scenes", type=int)
    g.add_argument("--calib-scenes", dest="calib_scenes", type=int)
    g.add_argument("--eval-scenes", dest="eval_scenes", type=int)

    parser = _Parser(prog="hess",
                     description="head-sensitivity-guided block-sparse attention toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train the toy model")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", parents=[common],
                       help="estimate per-head sensitivities")
    p.add_argument("--train-first", action="store_true",
                   help="train a fresh model before calibrating")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sweep", parents=[common],
                       help="evaluate a (tau, rho) grid across modes")
    p.add_argument("--grid", help="file of 'tau rho' lines")
    p.add_argument("--modes", help="comma list from hess,uniform,reverse")
    p.add_argument("--svg", action="store_true", help="also write a line chart")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("infer", parents=[common],
                       help="one sparse run at (tau, rho)")
    p.add_argument("--dump-alloc", action="store_true",
                   help="write per-layer allocation CSV")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("ablate-lambda", parents=[common],
                       help="re-run one config under different blends")
    p.add_argument("--lambdas", default="0,0.25,0.5,0.75,1",
                   help="comma list of blend values")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sanity", parents=[common],
                       help="check that guided budgets beat reversed ones")
    p.add_argument("--grid", help="file of 'tau rho' lines")
    p.set_defaults(func=cmd_sanity)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="finite-difference audit of all gradients")
    p.add_argument("--tol", type=float, help="override every suite tolerance")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = build_config(args)
        return args.func(cfg, args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
