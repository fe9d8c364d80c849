"""Synthetic multi-view testbed: scene generator, toy transformer, experiments.

The scene is a deliberately small stand-in for multi-view geometry: one shared
set of world points observed from every view.  Each view contributes one
camera token and one patch token per world point.  Information is split so
attention has real work to do:

* the camera token carries a *noisy* copy of its camera position;
* a patch token carries the exact camera-relative offset of its world point
  plus an independently *noisy* copy of the absolute position;
* matching view codes let tokens of one view find each other, and matching
  point codes link observations of the same world point across views.

Exact predictions therefore require aggregating other tokens (averaging away
the per-token noise), so masking attention blocks degrades accuracy in a
head-dependent way -- which is exactly what budget reallocation experiments
need to measure.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import attention, autodiff as ad, budget, geometry
from .attention import BlockSelection, HeadParams
from .autodiff import Tensor
from .budget import BudgetAllocation
from .geometry import CameraSet, PointCloud, SimilarityTransform
from .sensitivity import HeadId, HessTable

log = logging.getLogger(__name__)

# Feature-lift seed: one fixed random encoder shared by every scene, so a
# single model can learn to invert it.
LIFT_SEED = 20240917
CODE_DIM = 6
RAW_DIM = 3 + 3 + 2 + 2 * CODE_DIM
RING_RADIUS = 2.0
CAMERA_COPY_NOISE = 0.1
POINT_COPY_NOISE = 0.1

RUN_MODES = ("hess", "uniform", "reverse")


class TrainingDivergedError(RuntimeError):
    """The training loss left the realm of finite numbers."""


def _lift_matrix(d_model: int) -> np.ndarray:
    rng = np.random.default_rng([LIFT_SEED, d_model])
    return rng.normal(size=(RAW_DIM, d_model)) / math.sqrt(RAW_DIM)


@dataclass
class SyntheticScene:
    """One generated sample: token features plus ground-truth geometry."""

    seed: int
    n_views: int
    tokens_per_view: int
    token_features: np.ndarray
    gt_cameras: CameraSet
    gt_cloud: PointCloud
    camera_rows: np.ndarray
    patch_rows: np.ndarray
    patch_world_index: np.ndarray

    @property
    def n_tokens(self) -> int:
        return self.token_features.shape[0]

    @property
    def d_model(self) -> int:
        return self.token_features.shape[1]

    @property
    def gt_point_targets(self) -> np.ndarray:
        """Ground-truth world point for every patch token, in token order."""
        return self.gt_cloud.points[self.patch_world_index]


def generate_scene(seed: int, n_views: int = 20, tokens_per_view: int = 17,
                   *, d_model: int = 32, feature_noise: float = 0.01) -> SyntheticScene:
    """Sample a scene: ring of cameras, shared world points, lifted features.

    Needs ``tokens_per_view >= 4`` so the world cloud has at least three
    points and stays non-degenerate for alignment.
    """
    if n_views < 2:
        raise ValueError(f"need at least 2 views, got {n_views}")
    if tokens_per_view < 4:
        raise ValueError(
            f"need at least 4 tokens per view (3 world points), got {tokens_per_view}")
    rng = np.random.default_rng(seed)
    n_points = tokens_per_view - 1

    points = rng.uniform(-1.0, 1.0, size=(n_points, 3))
    angles = 2.0 * math.pi * np.arange(n_views) / n_views + 0.1 * rng.normal(size=n_views)
    radii = RING_RADIUS + 0.1 * rng.normal(size=n_views)
    cameras = np.stack([radii * np.cos(angles),
                        radii * np.sin(angles),
                        0.3 * rng.normal(size=n_views)], axis=1)

    def unit_rows(shape):
        m = rng.normal(size=shape)
        return m / np.linalg.norm(m, axis=1, keepdims=True)

    view_codes = unit_rows((n_views, CODE_DIM))
    point_codes = unit_rows((n_points, CODE_DIM))
    camera_copies = cameras + CAMERA_COPY_NOISE * rng.normal(size=cameras.shape)
    point_copies = (points[None, :, :]
                    + POINT_COPY_NOISE * rng.normal(size=(n_views, n_points, 3)))

    n_tokens = n_views * tokens_per_view
    raw = np.zeros((n_tokens, RAW_DIM))
    camera_rows = np.arange(n_views) * tokens_per_view
    patch_rows = np.array([i * tokens_per_view + 1 + j
                           for i in range(n_views) for j in range(n_points)])
    for i in range(n_views):
        cam_row = camera_rows[i]
        raw[cam_row, 0:3] = camera_copies[i]
        raw[cam_row, 6] = 1.0
        raw[cam_row, 8:8 + CODE_DIM] = view_codes[i]
        for j in range(n_points):
            row = cam_row + 1 + j
            raw[row, 0:3] = points[j] - cameras[i]
            raw[row, 3:6] = point_copies[i, j]
            raw[row, 7] = 1.0
            raw[row, 8:8 + CODE_DIM] = view_codes[i]
            raw[row, 8 + CODE_DIM:] = point_codes[j]

    features = raw @ _lift_matrix(d_model)
    features += feature_noise * rng.normal(size=features.shape)
    return SyntheticScene(
        seed=seed,
        n_views=n_views,
        tokens_per_view=tokens_per_view,
        token_features=features,
        gt_cameras=CameraSet(cameras),
        gt_cloud=PointCloud(points),
        camera_rows=camera_rows,
        patch_rows=patch_rows,
        patch_world_index=np.tile(np.arange(n_points), n_views),
    )


def scene_stream(base_seed: int, n_views: int, tokens_per_view: int, *,
                 d_model: int = 32, batch: int = 4, feature_noise: float = 0.01):
    """A ``step -> batch`` callable for streaming training.

    Every step gets a fresh deterministic batch (seeds advance by ``batch``
    per step), so the model cannot memorise individual scenes.
    """
    if batch < 1:
        raise ValueError(f"batch must be positive, got {batch}")

    def factory(step: int) -> list[SyntheticScene]:
        start = base_seed + step * batch
        return [generate_scene(start + j, n_views, tokens_per_view,
                               d_model=d_model, feature_noise=feature_noise)
                for j in range(batch)]

    return factory


@dataclass
class ScenePrediction:
    """Model outputs for one scene, still attached to whatever tape ran."""

    cameras: Tensor
    points: Tensor
    confidence: Tensor

    def camera_set(self) -> CameraSet:
        return CameraSet(self.cameras.data.copy())

    def point_cloud(self) -> PointCloud:
        return PointCloud(self.points.data.copy(),
                          confidence=self.confidence.data.reshape(-1).copy())


@dataclass
class _Layer:
    heads: list[HeadParams]
    w_out: Tensor
    w_ff1: Tensor
    w_ff2: Tensor


class ToyModel:
    """A small residual transformer with per-view camera and point readouts."""

    def __init__(self, n_layers: int = 4, n_heads: int = 4,
                 d_model: int = 32, d_head: int = 8, seed: int = 0):
        if min(n_layers, n_heads, d_model, d_head) < 1:
            raise ValueError("model dimensions must be positive")
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_model = d_model
        self.d_head = d_head
        rng = np.random.default_rng(seed)
        s = 1.0 / math.sqrt(d_model)

        def w(*shape):
            return Tensor(s * rng.normal(size=shape))

        self.layers = [
            _Layer(
                heads=[HeadParams(w(d_model, d_head), w(d_model, d_head), w(d_model, d_head))
                       for _ in range(n_heads)],
                w_out=w(n_heads * d_head, d_model),
                w_ff1=w(d_model, d_model),
                w_ff2=w(d_model, d_model),
            )
            for _ in range(n_layers)
        ]
        self.w_cam = w(d_model, 3)
        self.w_pt = w(d_model, 3)
        self.w_conf = w(d_model, 1)

    # -- parameter plumbing -------------------------------------------------
    def parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for li, layer in enumerate(self.layers):
            for hi, head in enumerate(layer.heads):
                out.append((f"layer{li}.head{hi}.wq", head.w_q))
                out.append((f"layer{li}.head{hi}.wk", head.w_k))
                out.append((f"layer{li}.head{hi}.wv", head.w_v))
            out.append((f"layer{li}.w_out", layer.w_out))
            out.append((f"layer{li}.w_ff1", layer.w_ff1))
            out.append((f"layer{li}.w_ff2", layer.w_ff2))
        out.append(("w_cam", self.w_cam))
        out.append(("w_pt", self.w_pt))
        out.append(("w_conf", self.w_conf))
        return out

    def head_ids(self) -> list[HeadId]:
        return [HeadId(li, hi) for li in range(self.n_layers) for hi in range(self.n_heads)]

    def sensitivity_params(self, which: str = "wq") -> dict[HeadId, Tensor]:
        attr = {"wq": "w_q", "wk": "w_k", "wv": "w_v"}.get(which)
        if attr is None:
            raise ValueError(f"unknown sensitivity parameter {which!r}")
        return {HeadId(li, hi): getattr(self.layers[li].heads[hi], attr)
                for li in range(self.n_layers) for hi in range(self.n_heads)}

    def zero_grad(self) -> None:
        for _, p in self.parameters():
            p.zero_grad()

    def clone(self) -> "ToyModel":
        other = ToyModel(self.n_layers, self.n_heads, self.d_model, self.d_head, seed=0)
        for (_, src), (_, dst) in zip(self.parameters(), other.parameters()):
            dst.data[...] = src.data
        return other

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for name, p in self.parameters():
            digest.update(f"{name}:{p.shape}|".encode())
            digest.update(p.data.astype("<f8").tobytes())
        return digest.hexdigest()

    # -- persistence: one JSON header line, then flat little-endian floats --
    def save(self, path) -> None:
        header = {
            "format": "hess-model-v1",
            "dims": {"n_layers": self.n_layers, "n_heads": self.n_heads,
                     "d_model": self.d_model, "d_head": self.d_head},
            "params": [{"name": name, "shape": list(p.shape)}
                       for name, p in self.parameters()],
            "fingerprint": self.fingerprint(),
        }
        blob = b"".join(p.data.astype("<f8").tobytes() for _, p in self.parameters())
        with open(path, "wb") as fh:
            fh.write(json.dumps(header).encode() + b"\n")
            fh.write(blob)

    @classmethod
    def load(cls, path) -> "ToyModel":
        with open(path, "rb") as fh:
            header_line = fh.readline()
            blob = fh.read()
        try:
            header = json.loads(header_line.decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"malformed model header: {exc}") from None
        if header.get("format") != "hess-model-v1":
            raise ValueError(f"unknown model format {header.get('format')!r}")
        try:
            dims = header["dims"]
            model = cls(n_layers=int(dims["n_layers"]), n_heads=int(dims["n_heads"]),
                        d_model=int(dims["d_model"]), d_head=int(dims["d_head"]), seed=0)
            header_names = [p["name"] for p in header["params"]]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"model header missing field: {exc}") from None
        params = model.parameters()
        if header_names != [name for name, _ in params]:
            raise ValueError("model header parameter list does not match architecture")
        offset = 0
        for spec, (_, tensor) in zip(header["params"], params):
            shape = tuple(int(v) for v in spec["shape"])
            if shape != tensor.shape:
                raise ValueError(f"shape mismatch for {spec['name']}: {shape} vs {tensor.shape}")
            count = int(np.prod(shape))
            chunk = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
            tensor.data[...] = chunk.reshape(shape)
            offset += count * 8
        if offset != len(blob):
            raise ValueError(f"model payload has {len(blob) - offset} trailing bytes")
        if model.fingerprint() != header.get("fingerprint"):
            raise ValueError("model fingerprint does not match its payload")
        return model

    # -- forward passes ------------------------------------------------------
    def _forward(self, features: np.ndarray, layer_plan=None) -> Tensor:
        x = Tensor(features)
        for li, layer in enumerate(self.layers):
            qkvs = [attention.project_qkv(x, hp) for hp in layer.heads]
            sels = None if layer_plan is None else layer_plan(li, qkvs)
            outs = []
            for hi, (q, k, v) in enumerate(qkvs):
                if sels is None:
                    outs.append(attention.dense_attention(q, k, v))
                else:
                    outs.append(attention.masked_attention(q, k, v, sels[hi]))
            x = ad.add(x, ad.matmul(ad.concat_cols(outs), layer.w_out))
            x = ad.add(x, ad.matmul(ad.tanh(ad.matmul(x, layer.w_ff1)), layer.w_ff2))
        return x

    def _readout(self, x: Tensor, scene: SyntheticScene) -> ScenePrediction:
        cam_feats = ad.take_rows(x, scene.camera_rows)
        patch_feats = ad.take_rows(x, scene.patch_rows)
        return ScenePrediction(
            cameras=ad.matmul(cam_feats, self.w_cam),
            points=ad.matmul(patch_feats, self.w_pt),
            confidence=ad.softplus(ad.matmul(patch_feats, self.w_conf)),
        )

    def forward_dense(self, scene: SyntheticScene) -> ScenePrediction:
        return self._readout(self._forward(scene.token_features), scene)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def training_loss(model: ToyModel, scene: SyntheticScene,
                  conf_penalty: float = 0.05) -> Tensor:
    """Camera error plus confidence-weighted point error on known matches.

    The inlier-filtered point error is undefined for an untrained model (the
    inlier set starts empty), so training scores points against their known
    correspondences, weighting each squared residual by the predicted
    confidence minus ``conf_penalty * log(confidence)``.  The penalty is what
    trains the confidence head: its optimum sits at ``conf = penalty / error``,
    so reliable points earn confidences above 1.
    """
    pred = model.forward_dense(scene)
    e_cam = geometry.camera_pose_error(pred.cameras, scene.gt_cameras,
                                       SimilarityTransform.identity())
    diff = ad.sub(pred.points, Tensor(scene.gt_point_targets))
    per_point = ad.row_sums(ad.mul(diff, diff))
    n = per_point.shape[0]
    weighted = ad.scale(ad.sum_all(ad.mul(pred.confidence, per_point)), 1.0 / (2.0 * n))
    penalty = ad.scale(ad.sum_all(ad.log(ad.affine(pred.confidence, 1.0, 1e-12))),
                       -conf_penalty / n)
    return ad.add(ad.add(e_cam, weighted), penalty)


def train_toy(model: ToyModel, scenes, steps: int,
              lr: float = 0.5, *, conf_penalty: float = 0.05,
              max_grad_norm: float = 5.0) -> list[float]:
    """Batch gradient descent with global grad-norm clipping.

    ``scenes`` is either a fixed list (full-batch descent, will memorise small
    batches) or a callable ``step -> list[SyntheticScene]`` that supplies a
    fresh batch every step (streaming descent, forces the scene-generic
    solution).  Returns the per-step mean training loss.  ``max_grad_norm <= 0``
    disables clipping.
    """
    if steps < 0:
        raise ValueError(f"steps must be non-negative, got {steps}")
    if not callable(scenes) and not scenes:
        raise ValueError("training needs at least one scene")
    params = [p for _, p in model.parameters()]
    losses: list[float] = []
    for step in range(steps):
        batch = scenes(step) if callable(scenes) else scenes
        if not batch:
            raise ValueError(f"scene source returned an empty batch at step {step}")
        model.zero_grad()
        total = 0.0
        for scene in batch:
            with ad.GraphTape() as tape:
                loss = training_loss(model, scene, conf_penalty)
            tape.backward(loss)
            total += loss.item()
        mean_loss = total / len(batch)
        if not math.isfinite(mean_loss):
            raise TrainingDivergedError(f"loss became {mean_loss} at step {step}")
        step_scale = 1.0 / len(batch)
        if max_grad_norm > 0.0:
            norm = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params))
            norm *= step_scale
            if norm > max_grad_norm:
                step_scale *= max_grad_norm / norm
        for p in params:
            p.data -= lr * step_scale * p.grad
        losses.append(mean_loss)
    return losses


# ---------------------------------------------------------------------------
# dense / sparse evaluation
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    """Aligned evaluation errors plus the sparsification bookkeeping."""

    e_cam: float
    e_pc: float
    sparsity: float
    prediction: ScenePrediction
    transform: SimilarityTransform
    allocations: dict[int, BudgetAllocation] = field(default_factory=dict)
    selections: dict[tuple[int, int], BlockSelection] = field(default_factory=dict)


def _evaluate(pred: ScenePrediction, scene: SyntheticScene, *,
              eps: float, conf_cutoff: float,
              icp_iters: int, icp_tol: float) -> tuple[float, float, SimilarityTransform]:
    try:
        h = geometry.align_clouds(pred.points.data, scene.gt_point_targets,
                                  scene.gt_cloud.points,
                                  icp_iters=icp_iters, icp_tol=icp_tol)
    except geometry.DegenerateGeometryError:
        # collapsed predictions admit no similarity fit; both errors are
        # undefined rather than zero
        return math.nan, math.nan, SimilarityTransform.identity()
    e_cam = geometry.camera_pose_error(pred.cameras.data, scene.gt_cameras, h).item()
    try:
        e_pc = geometry.point_cloud_error(
            pred.points.data, scene.gt_cloud, h, eps,
            conf_cutoff=conf_cutoff,
            confidence=pred.confidence.data.reshape(-1)).item()
    except geometry.EmptyInlierSetError:
        e_pc = math.nan
    return e_cam, e_pc, h


def run_dense(model: ToyModel, scene: SyntheticScene, *,
              eps: float = 0.05, conf_cutoff: float = 1.0,
              icp_iters: int = 20, icp_tol: float = 1e-9) -> RunResult:
    """Unmasked forward pass, then aligned camera/point errors."""
    pred = model.forward_dense(scene)
    e_cam, e_pc, h = _evaluate(pred, scene, eps=eps, conf_cutoff=conf_cutoff,
                               icp_iters=icp_iters, icp_tol=icp_tol)
    return RunResult(e_cam=e_cam, e_pc=e_pc, sparsity=0.0,
                     prediction=pred, transform=h)


def resolve_protected_tokens(scene: SyntheticScene, protected: str) -> tuple[int, ...]:
    """Map a protection policy name to concrete token indices.

    ``anchor`` protects the first camera token of the sequence; ``per-frame``
    protects every view's camera token (note that with one frame per block
    that makes every block protected); ``none`` disables protection.
    """
    if protected == "anchor":
        return (int(scene.camera_rows[0]),)
    if protected == "per-frame":
        return tuple(int(r) for r in scene.camera_rows)
    if protected == "none":
        return ()
    raise ValueError(f"unknown protection policy {protected!r}")


def reverse_ranking(scores: list[float]) -> list[float]:
    """Swap scores between ranks ``i`` and ``n-1-i`` (rank inversion)."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    out = list(scores)
    for pos, idx in enumerate(order):
        out[idx] = scores[order[len(order) - 1 - pos]]
    return out


def run_sparse(model: ToyModel, scene: SyntheticScene, table: HessTable | None,
               tau: float, rho: float, *, mode: str = "hess",
               block_size: int | None = None,
               protected: str = "anchor",
               equal_baselines: bool = False,
               scaled_pooling: bool = False,
               eps: float = 0.05, conf_cutoff: float = 1.0,
               icp_iters: int = 20, icp_tol: float = 1e-9) -> RunResult:
    """Masked forward pass with per-layer budget allocation.

    Per layer: pooled approximate maps give every head a baseline selection
    under the shared (tau, rho); the baselines pool into the layer budget,
    which is split according to the mode (``hess`` follows the table,
    ``reverse`` inverts its ranking, ``uniform`` keeps the baselines).
    """
    if mode not in RUN_MODES:
        raise ValueError(f"mode must be one of {RUN_MODES}, got {mode!r}")
    if mode != "uniform" and table is None:
        raise ValueError(f"mode {mode!r} needs a score table")
    b = scene.tokens_per_view if block_size is None else int(block_size)
    protected_tokens = resolve_protected_tokens(scene, protected)
    allocations: dict[int, BudgetAllocation] = {}
    selections: dict[tuple[int, int], BlockSelection] = {}

    def layer_plan(li: int, qkvs) -> list[BlockSelection]:
        maps = [attention.approx_map(q, k, b, protected_tokens, scaled=scaled_pooling)
                for (q, k, _) in qkvs]
        base_sels = [attention.select_blocks(m, tau, rho) for m in maps]
        baselines = [s.budget_used for s in base_sels]
        if equal_baselines:
            shared = int(round(sum(baselines) / len(baselines)))
            baselines = [shared] * len(baselines)
        n_blocks = maps[0].n_blocks
        if mode == "uniform":
            sels = (base_sels if not equal_baselines
                    else [attention.select_top_c(m, c) for m, c in zip(maps, baselines)])
            alloc = BudgetAllocation(ideal=tuple(float(c) for c in baselines),
                                     fixed_point=tuple(float(c) for c in baselines),
                                     final=tuple(baselines),
                                     c_total=sum(baselines), c_max=n_blocks,
                                     baselines=tuple(baselines))
        else:
            scores = table.layer_scores(li)
            if len(scores) != len(maps):
                raise ValueError(
                    f"score table has {len(scores)} heads for layer {li}, model has {len(maps)}")
            if mode == "reverse":
                scores = reverse_ranking(scores)
            alloc = budget.allocate_layer(scores, baselines, c_max=n_blocks)
            sels = [attention.select_top_c(m, c) for m, c in zip(maps, alloc.final)]
        allocations[li] = alloc
        for hi, sel in enumerate(sels):
            selections[(li, hi)] = sel
        return sels

    pred = model._readout(model._forward(scene.token_features, layer_plan), scene)
    e_cam, e_pc, h = _evaluate(pred, scene, eps=eps, conf_cutoff=conf_cutoff,
                               icp_iters=icp_iters, icp_tol=icp_tol)
    return RunResult(e_cam=e_cam, e_pc=e_pc,
                     sparsity=attention.achieved_sparsity(selections.values()),
                     prediction=pred, transform=h,
                     allocations=allocations, selections=selections)


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    """One aggregate line of a sweep report."""

    mode: str
    tau: float
    rho: float
    sparsity: float
    e_cam: float
    e_pc: float
    seed: int


def _mean_over_scenes(values: list[float]) -> float:
    finite = [v for v in values if math.isfinite(v)]
    return sum(finite) / len(finite) if finite else math.nan


def evaluate_config(model: ToyModel, scenes: list[SyntheticScene],
                    table: HessTable | None, tau: float, rho: float, mode: str,
                    *, threads: int = 1, **run_kwargs) -> tuple[float, float, float]:
    """Mean (sparsity, e_cam, e_pc) of one (tau, rho, mode) over scenes."""
    def one(scene):
        r = run_sparse(model, scene, table, tau, rho, mode=mode, **run_kwargs)
        return r.sparsity, r.e_cam, r.e_pc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, scenes))
    else:
        results = [one(s) for s in scenes]
    return (_mean_over_scenes([r[0] for r in results]),
            _mean_over_scenes([r[1] for r in results]),
            _mean_over_scenes([r[2] for r in results]))


def sweep(model: ToyModel, scenes: list[SyntheticScene], table: HessTable,
          configs: list[tuple[float, float]],
          modes: tuple[str, ...] = RUN_MODES, *,
          seed: int = 0, threads: int = 1, **run_kwargs) -> list[SweepRow]:
    """Evaluate every (tau, rho) x mode combination; one aggregate row each."""
    rows = []
    for tau, rho in configs:
        for mode in modes:
            sparsity, e_cam, e_pc = evaluate_config(
                model, scenes, table, tau, rho, mode, threads=threads, **run_kwargs)
            rows.append(SweepRow(mode=mode, tau=float(tau), rho=float(rho),
                                 sparsity=sparsity, e_cam=e_cam, e_pc=e_pc, seed=seed))
    return rows


@dataclass(frozen=True)
class AblationRow:
    """One aggregate line of a lambda ablation."""

    lam: float
    tau: float
    rho: float
    sparsity: float
    e_cam: float
    e_pc: float
    seed: int


def ablate_lambda(model: ToyModel, scenes: list[SyntheticScene], table: HessTable,
                  lambdas: list[float], tau: float, rho: float, *,
                  seed: int = 0, threads: int = 1, **run_kwargs) -> list[AblationRow]:
    """Recombine the stored per-error columns under each blend and re-run."""
    rows = []
    for lam in lambdas:
        blended = table.with_lambda(lam)
        sparsity, e_cam, e_pc = evaluate_config(
            model, scenes, blended, tau, rho, "hess", threads=threads, **run_kwargs)
        rows.append(AblationRow(lam=float(lam), tau=float(tau), rho=float(rho),
                                sparsity=sparsity, e_cam=e_cam, e_pc=e_pc, seed=seed))
    return rows
