"""Per-head sensitivity scores from empirical Fisher traces.

For each calibration sample the model runs densely, predictions are aligned to
the ground truth, and each of the two geometric errors is differentiated back
to every head's query projection (optionally key/value).  The per-head score
is the trace of the empirical Fisher information, i.e. the mean squared
gradient norm over samples, normalised within each layer and blended across
the two error terms by ``lam``.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from . import geometry

log = logging.getLogger(__name__)

SENSITIVITY_PARAMS = ("wq", "wk", "wv")


class HeadId(NamedTuple):
    layer: int
    head: int


class SampleSkipped(RuntimeError):
    """A calibration sample produced no usable gradient (skip it)."""


class CalibrationError(RuntimeError):
    """Calibration could not produce a table (e.g. every sample skipped)."""


class FingerprintMismatchError(RuntimeError):
    """A score table was calibrated against a different model."""


@dataclass(frozen=True)
class CalibrationMeta:
    num_samples: int
    seed: int | None
    model_fingerprint: str


@dataclass(frozen=True)
class HessTable:
    """Immutable per-head sensitivity scores plus calibration provenance.

    ``hess_cam``/``hess_pc`` hold the per-layer-normalised traces for the two
    error terms; ``hess`` is their ``lam``-blend.  Within every layer each of
    the three columns sums to 1.
    """

    lam: float
    hess_cam: dict[HeadId, float]
    hess_pc: dict[HeadId, float]
    hess: dict[HeadId, float]
    meta: CalibrationMeta

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        keys = set(self.hess_cam)
        if not keys or keys != set(self.hess_pc) or keys != set(self.hess):
            raise ValueError("score columns must cover the same non-empty head set")
        for hid in keys:
            if hid.layer < 0 or hid.head < 0:
                raise ValueError(f"negative head id {hid}")
            expect = self.lam * self.hess_cam[hid] + (1.0 - self.lam) * self.hess_pc[hid]
            if abs(self.hess[hid] - expect) > 1e-12:
                raise ValueError(f"combined score for {hid} does not match its parts")
        for layer in self.layers():
            heads = self.layer_heads(layer)
            for column in (self.hess_cam, self.hess_pc, self.hess):
                total = sum(column[HeadId(layer, h)] for h in heads)
                if abs(total - 1.0) > 1e-9:
                    raise ValueError(f"layer {layer} scores sum to {total!r}, not 1")

    def layers(self) -> list[int]:
        return sorted({hid.layer for hid in self.hess})

    def layer_heads(self, layer: int) -> list[int]:
        return sorted(hid.head for hid in self.hess if hid.layer == layer)

    def layer_scores(self, layer: int, column: str = "hess") -> list[float]:
        col = {"hess": self.hess, "hess_cam": self.hess_cam, "hess_pc": self.hess_pc}[column]
        return [col[HeadId(layer, h)] for h in self.layer_heads(layer)]

    def with_lambda(self, lam: float) -> "HessTable":
        """Recombine the stored per-error columns under a different blend."""
        lam = float(lam)
        combined = {hid: lam * self.hess_cam[hid] + (1.0 - lam) * self.hess_pc[hid]
                    for hid in self.hess_cam}
        return HessTable(lam=lam, hess_cam=dict(self.hess_cam),
                         hess_pc=dict(self.hess_pc), hess=combined, meta=self.meta)

    def to_json(self) -> str:
        payload = {
            "lambda": self.lam,
            "model_fingerprint": self.meta.model_fingerprint,
            "seed": self.meta.seed,
            "num_samples": self.meta.num_samples,
            "layers": [
                {
                    "layer": layer,
                    "heads": [
                        {
                            "head": head,
                            "hess_cam": self.hess_cam[HeadId(layer, head)],
                            "hess_pc": self.hess_pc[HeadId(layer, head)],
                            "hess": self.hess[HeadId(layer, head)],
                        }
                        for head in self.layer_heads(layer)
                    ],
                }
                for layer in self.layers()
            ],
        }
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "HessTable":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed score table JSON: {exc}") from None
        try:
            lam = float(payload["lambda"])
            meta = CalibrationMeta(
                num_samples=int(payload["num_samples"]),
                seed=None if payload["seed"] is None else int(payload["seed"]),
                model_fingerprint=str(payload["model_fingerprint"]),
            )
            cam, pc, combined = {}, {}, {}
            for layer_entry in payload["layers"]:
                layer = int(layer_entry["layer"])
                for head_entry in layer_entry["heads"]:
                    hid = HeadId(layer, int(head_entry["head"]))
                    if hid in combined:
                        raise ValueError(f"duplicate head {hid}")
                    cam[hid] = float(head_entry["hess_cam"])
                    pc[hid] = float(head_entry["hess_pc"])
                    combined[hid] = float(head_entry["hess"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"score table JSON missing field: {exc}") from None
        return cls(lam=lam, hess_cam=cam, hess_pc=pc, hess=combined, meta=meta)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path, expect_fingerprint: str | None = None,
             force: bool = False) -> "HessTable":
        table = cls.from_json(Path(path).read_text())
        if expect_fingerprint is not None and table.meta.model_fingerprint != expect_fingerprint:
            msg = (f"score table fingerprint {table.meta.model_fingerprint[:12]}... does not "
                   f"match model {expect_fingerprint[:12]}...")
            if force:
                log.warning("%s (continuing under force)", msg)
            else:
                raise FingerprintMismatchError(msg)
        return table


def fim_trace(grads: Sequence[np.ndarray]) -> float:
    """Trace of the empirical Fisher: the mean squared gradient norm.

    Identical to accumulating ``g g^T`` over samples and taking the trace of
    the mean, without ever forming the matrix.
    """
    grads = list(grads)
    if not grads:
        raise ValueError("fim_trace needs at least one gradient sample")
    return float(np.mean([float((np.asarray(g) ** 2).sum()) for g in grads]))


def normalize_layer(traces: Mapping[HeadId, float]) -> dict[HeadId, float]:
    """Normalise traces to sum to 1 within each layer.

    A layer whose traces are all zero falls back to uniform scores (with a
    warning) so downstream allocation still has weights to work with.
    """
    if not traces:
        raise ValueError("normalize_layer needs at least one trace")
    for hid, v in traces.items():
        if not np.isfinite(v) or v < 0.0:
            raise ValueError(f"trace for {hid} must be finite and non-negative, got {v}")
    out: dict[HeadId, float] = {}
    layers = sorted({hid.layer for hid in traces})
    for layer in layers:
        hids = sorted(h for h in traces if h.layer == layer)
        total = sum(traces[h] for h in hids)
        if total <= 0.0:
            log.warning("layer %d has all-zero traces; using uniform scores", layer)
            for h in hids:
                out[h] = 1.0 / len(hids)
        else:
            for h in hids:
                out[h] = traces[h] / total
    return out


def combine(hess_cam: Mapping[HeadId, float], hess_pc: Mapping[HeadId, float],
            lam: float, meta: CalibrationMeta) -> HessTable:
    """Blend the two normalised columns: ``lam * cam + (1 - lam) * pc``."""
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    if set(hess_cam) != set(hess_pc):
        raise ValueError("cam/pc head sets differ")
    combined = {hid: lam * hess_cam[hid] + (1.0 - lam) * hess_pc[hid] for hid in hess_cam}
    return HessTable(lam=float(lam), hess_cam=dict(hess_cam), hess_pc=dict(hess_pc),
                     hess=combined, meta=meta)


def per_sample_head_grads(model, scene, error_kind: str, *,
                          eps: float, conf_cutoff: float = 1.0,
                          sens_param: str = "wq",
                          icp_iters: int = 20, icp_tol: float = 1e-9,
                          ) -> dict[HeadId, np.ndarray]:
    """One dense forward + one backward; returns per-head parameter gradients.

    ``error_kind`` is ``"cam"`` or ``"pc"``.  Samples whose error is undefined
    (empty inlier set, degenerate alignment, non-finite value) raise
    :class:`SampleSkipped` so the caller can drop them.
    """
    if error_kind not in ("cam", "pc"):
        raise ValueError(f"error_kind must be 'cam' or 'pc', got {error_kind!r}")
    if sens_param not in SENSITIVITY_PARAMS:
        raise ValueError(f"sens_param must be one of {SENSITIVITY_PARAMS}, got {sens_param!r}")
    model.zero_grad()
    with ad.GraphTape() as tape:
        pred = model.forward_dense(scene)
        try:
            h = geometry.align_clouds(pred.points.data, scene.gt_point_targets,
                                      scene.gt_cloud.points,
                                      icp_iters=icp_iters, icp_tol=icp_tol)
            if error_kind == "cam":
                err = geometry.camera_pose_error(pred.cameras, scene.gt_cameras, h)
            else:
                err = geometry.point_cloud_error(
                    pred.points, scene.gt_cloud, h, eps,
                    conf_cutoff=conf_cutoff,
                    confidence=pred.confidence.data.reshape(-1))
        except geometry.EmptyInlierSetError as exc:
            raise SampleSkipped(f"empty inlier set: {exc}") from exc
        except geometry.DegenerateGeometryError as exc:
            raise SampleSkipped(f"degenerate alignment: {exc}") from exc
        if not np.isfinite(err.data):
            raise SampleSkipped(f"non-finite {error_kind} error")
    tape.backward(err)
    return {hid: t.grad.copy()
            for hid, t in model.sensitivity_params(sens_param).items()}


def calibrate(model, scenes: Iterable, lam: float, eps: float, *,
              conf_cutoff: float = 1.0, sens_param: str = "wq",
              seed: int | None = None, threads: int = 1,
              icp_iters: int = 20, icp_tol: float = 1e-9) -> HessTable:
    """Run both error backward passes per sample and build the score table.

    A sample is used only if *both* errors are defined on it, keeping the two
    Fisher estimates on the same sample set.  Results are reduced in sample
    order, so the table is byte-identical regardless of ``threads``.
    """
    scenes = list(scenes)
    if not scenes:
        raise CalibrationError("calibration needs at least one scene")
    head_ids = list(model.sensitivity_params(sens_param))

    def one_sample(scene):
        worker = model.clone()
        try:
            g_cam = per_sample_head_grads(worker, scene, "cam", eps=eps,
                                          conf_cutoff=conf_cutoff, sens_param=sens_param,
                                          icp_iters=icp_iters, icp_tol=icp_tol)
            g_pc = per_sample_head_grads(worker, scene, "pc", eps=eps,
                                         conf_cutoff=conf_cutoff, sens_param=sens_param,
                                         icp_iters=icp_iters, icp_tol=icp_tol)
        except SampleSkipped as exc:
            return exc
        return g_cam, g_pc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_sample, scenes))
    else:
        results = [one_sample(s) for s in scenes]

    cam_grads: dict[HeadId, list[np.ndarray]] = {hid: [] for hid in head_ids}
    pc_grads: dict[HeadId, list[np.ndarray]] = {hid: [] for hid in head_ids}
    used = 0
    for i, res in enumerate(results):
        if isinstance(res, SampleSkipped):
            log.warning("calibration sample %d skipped: %s", i, res)
            continue
        g_cam, g_pc = res
        for hid in head_ids:
            cam_grads[hid].append(g_cam[hid])
            pc_grads[hid].append(g_pc[hid])
        used += 1
    if used == 0:
        raise CalibrationError(f"all {len(scenes)} calibration samples were skipped")

    cam_traces = {hid: fim_trace(cam_grads[hid]) for hid in head_ids}
    pc_traces = {hid: fim_trace(pc_grads[hid]) for hid in head_ids}
    meta = CalibrationMeta(num_samples=used, seed=seed,
                           model_fingerprint=model.fingerprint())
    return combine(normalize_layer(cam_traces), normalize_layer(pc_traces), lam, meta)
