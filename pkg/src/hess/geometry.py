"""Point-cloud alignment and the two geometric error terms.

Alignment (Umeyama closed form, then point-to-point ICP) runs in plain numpy
on detached prediction values.  The resulting similarity transform enters the
error expressions only through a stop-gradient, so backward passes see it as a
constant: perturbing the transform changes the error value, but its leaves
receive exactly zero gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class DegenerateGeometryError(ValueError):
    """Source points are too degenerate (coincident/collinear) to align."""


class EmptyInlierSetError(RuntimeError):
    """No predicted point survived the confidence and distance filters."""


def _as_points(obj, name: str = "points") -> np.ndarray:
    if isinstance(obj, PointCloud):
        return obj.points
    if isinstance(obj, CameraSet):
        return obj.translations
    if isinstance(obj, Tensor):
        arr = obj.data
    else:
        arr = np.asarray(obj, dtype=np.float64)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {arr.shape}")
    return arr


@dataclass
class PointCloud:
    """3-D points with optional per-point confidence."""

    points: np.ndarray
    confidence: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("points must be finite")
        self.points = pts
        if self.confidence is not None:
            conf = np.asarray(self.confidence, dtype=np.float64)
            if conf.shape != (pts.shape[0],):
                raise ValueError(
                    f"confidence shape {conf.shape} does not match {pts.shape[0]} points")
            if not np.isfinite(conf).all():
                raise ValueError("confidence must be finite")
            if (conf < 0).any():
                raise ValueError("confidence must be non-negative")
            self.confidence = conf

    def __len__(self) -> int:
        return self.points.shape[0]

    # text format: one point per line, "x y z" or "x y z confidence",
    # '#' starts a comment
    def dumps(self) -> str:
        lines = []
        for i, p in enumerate(self.points):
            cols = [repr(float(v)) for v in p]
            if self.confidence is not None:
                cols.append(repr(float(self.confidence[i])))
            lines.append(" ".join(cols))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "PointCloud":
        pts, confs = [], []
        for ln, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) not in (3, 4):
                raise ValueError(f"line {ln}: expected 3 or 4 columns, got {len(fields)}")
            try:
                values = [float(f) for f in fields]
            except ValueError as exc:
                raise ValueError(f"line {ln}: {exc}") from None
            pts.append(values[:3])
            confs.append(values[3] if len(values) == 4 else None)
        if not pts:
            raise ValueError("point cloud text contains no points")
        has_conf = [c is not None for c in confs]
        if any(has_conf) and not all(has_conf):
            raise ValueError("confidence column must be present on all lines or none")
        conf_arr = np.array(confs, dtype=np.float64) if all(has_conf) else None
        return cls(points=np.array(pts, dtype=np.float64), confidence=conf_arr)

    def write_text(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def read_text(cls, path) -> "PointCloud":
        return cls.loads(Path(path).read_text())


@dataclass
class CameraSet:
    """Per-view camera translations (the toy pose representation)."""

    translations: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translations, dtype=np.float64)
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError(f"translations must have shape (n, 3), got {t.shape}")
        if t.shape[0] < 1:
            raise ValueError("camera set must contain at least one view")
        if not np.isfinite(t).all():
            raise ValueError("translations must be finite")
        self.translations = t

    def __len__(self) -> int:
        return self.translations.shape[0]


@dataclass(frozen=True)
class SimilarityTransform:
    """``p -> scale * rotation @ p + translation`` with a proper rotation."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "scale", float(self.scale))
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if self.scale <= 0.0 or not math.isfinite(self.scale):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if not np.isfinite(r).all() or not np.isfinite(t).all():
            raise ValueError("transform entries must be finite")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-8:
            raise ValueError("rotation is not orthonormal")
        if np.linalg.det(r) < 0.0:
            raise ValueError("rotation must be proper (det +1), not a reflection")

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(1.0, np.eye(3), np.zeros(3))

    @property
    def linear(self) -> np.ndarray:
        """The combined 3x3 linear part ``scale * rotation``."""
        return self.scale * self.rotation

    def apply(self, points) -> np.ndarray:
        pts = _as_points(points)
        return pts @ self.linear.T + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.linear
        m[:3, 3] = self.translation
        return m


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about ``axis`` by ``angle`` radians."""
    a = np.asarray(axis, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        raise ValueError("axis must be nonzero")
    x, y, z = a / norm
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def umeyama(src, dst) -> SimilarityTransform:
    """Closed-form similarity transform minimising ``|s R src + t - dst|^2``.

    Uses the SVD of the cross-covariance with the determinant correction, so a
    reflection is never returned even for planar sources.  Sources with fewer
    than 3 points or with rank < 2 raise :class:`DegenerateGeometryError`.
    """
    s_pts = _as_points(src, "src")
    d_pts = _as_points(dst, "dst")
    if s_pts.shape[0] != d_pts.shape[0]:
        raise ValueError(f"correspondence counts differ: {s_pts.shape[0]} vs {d_pts.shape[0]}")
    n = s_pts.shape[0]
    if n < 3:
        raise DegenerateGeometryError(f"need at least 3 correspondences, got {n}")
    mu_s = s_pts.mean(axis=0)
    mu_d = d_pts.mean(axis=0)
    cs = s_pts - mu_s
    cd = d_pts - mu_d
    sv = np.linalg.svd(cs, compute_uv=False)
    if sv[0] < 1e-12 or sv[1] < 1e-9 * sv[0]:
        raise DegenerateGeometryError("source points are coincident or collinear")
    cov = cd.T @ cs / n
    u, s, vt = np.linalg.svd(cov)
    d_fix = np.ones(3)
    if np.linalg.det(u @ vt) < 0.0:
        d_fix[2] = -1.0
    rotation = u @ np.diag(d_fix) @ vt
    var_src = float((cs * cs).sum()) / n
    scale = float((s * d_fix).sum()) / var_src
    if scale <= 0.0 or not math.isfinite(scale):
        raise DegenerateGeometryError(
            f"similarity fit collapsed to scale {scale!r}")
    translation = mu_d - scale * rotation @ mu_s
    return SimilarityTransform(scale, rotation, translation)


def nearest_neighbors(query, cloud) -> tuple[np.ndarray, np.ndarray]:
    """Exact brute-force nearest neighbour: indices and squared distances."""
    q = _as_points(query, "query")
    c = _as_points(cloud, "cloud")
    if c.shape[0] == 0:
        raise ValueError("cloud must be non-empty")
    idx = np.empty(q.shape[0], dtype=np.intp)
    sqd = np.empty(q.shape[0], dtype=np.float64)
    # chunk the quadratic distance table to bound memory
    chunk = max(1, int(4e6) // max(1, c.shape[0]))
    for lo in range(0, q.shape[0], chunk):
        hi = min(q.shape[0], lo + chunk)
        d2 = ((q[lo:hi, None, :] - c[None, :, :]) ** 2).sum(axis=2)
        idx[lo:hi] = d2.argmin(axis=1)
        sqd[lo:hi] = d2[np.arange(hi - lo), idx[lo:hi]]
    return idx, sqd


def nearest_sq_dist(point, cloud) -> float:
    """Squared distance from one point to its nearest cloud point."""
    p = np.asarray(point, dtype=np.float64).reshape(1, 3)
    _, sqd = nearest_neighbors(p, cloud)
    return float(sqd[0])


def icp_refine(src, dst, init: SimilarityTransform,
               max_iters: int = 20, tol: float = 1e-9) -> SimilarityTransform:
    """Point-to-point ICP: alternate NN matching and Umeyama refits.

    The objective (mean squared NN distance) never increases across accepted
    iterations; a refit that would increase it is rejected and iteration stops.
    ``max_iters=0`` returns ``init`` untouched.

    Similarity-transform ICP has a degenerate attractor: when the source has
    no real correspondence structure in the target, shrinking the scale maps
    everything onto one target point and drives the objective to zero.  Refits
    whose scale collapses far below the initial estimate are therefore treated
    as degenerate and rejected.
    """
    s_pts = _as_points(src, "src")
    d_pts = _as_points(dst, "dst")
    if s_pts.shape[0] == 0 or d_pts.shape[0] == 0:
        raise ValueError("icp_refine needs non-empty clouds")
    current = init
    idx, sqd = nearest_neighbors(current.apply(s_pts), d_pts)
    best_obj = float(sqd.mean())
    scale_floor = 1e-3 * init.scale
    for _ in range(max_iters):
        try:
            fit = umeyama(s_pts, d_pts[idx])
        except DegenerateGeometryError:
            break
        if fit.scale < scale_floor:
            break
        new_idx, new_sqd = nearest_neighbors(fit.apply(s_pts), d_pts)
        new_obj = float(new_sqd.mean())
        if new_obj > best_obj + 1e-15:
            break
        improvement = best_obj - new_obj
        current, best_obj, idx = fit, new_obj, new_idx
        if improvement < tol:
            break
    return current


def align_clouds(pred_points, gt_corresponding, gt_cloud,
                 *, icp_iters: int = 20, icp_tol: float = 1e-9) -> SimilarityTransform:
    """Coarse-to-fine alignment of predictions onto the ground-truth cloud.

    The coarse stage is Umeyama on known correspondences (synthetic scenes
    provide them); the fine stage is ICP against the full target cloud.
    """
    coarse = umeyama(pred_points, gt_corresponding)
    return icp_refine(pred_points, gt_cloud, coarse, max_iters=icp_iters, tol=icp_tol)


def inlier_set(pred: PointCloud | np.ndarray, gt, h: SimilarityTransform,
               eps: float, conf_cutoff: float = 1.0) -> np.ndarray:
    """Indices of confident predictions within ``eps`` squared distance of ``gt``.

    Points with confidence below ``conf_cutoff`` are excluded before the
    distance test; the threshold itself is strict (``< eps``).  Indices refer
    to positions in the original prediction array.
    """
    inliers, _ = _inliers_and_matches(pred, gt, h, eps, conf_cutoff,
                                      confidence=None)
    return inliers


def _confidence_of(pred, confidence) -> np.ndarray | None:
    if confidence is not None:
        return np.asarray(confidence, dtype=np.float64).reshape(-1)
    if isinstance(pred, PointCloud):
        return pred.confidence
    return None


def _inliers_and_matches(pred, gt, h, eps, conf_cutoff, confidence):
    if not (eps > 0.0) or not math.isfinite(eps):
        raise ValueError(f"eps must be positive and finite, got {eps}")
    pred_pts = _as_points(pred, "pred")
    gt_pts = _as_points(gt, "gt")
    conf = _confidence_of(pred, confidence)
    if conf is not None and conf.shape != (pred_pts.shape[0],):
        raise ValueError("confidence length does not match prediction count")
    transformed = h.apply(pred_pts)
    nn_idx, nn_sqd = nearest_neighbors(transformed, gt_pts)
    keep = nn_sqd < eps
    if conf is not None:
        keep &= conf >= conf_cutoff
    inliers = np.flatnonzero(keep)
    return inliers, nn_idx


def _transform_on_tape(points: Tensor, h: SimilarityTransform) -> tuple[Tensor, Tensor, Tensor]:
    """Apply ``h`` inside the graph with its entries behind a stop-gradient.

    Returns the transformed tensor plus the two transform leaves so callers
    (and tests) can assert that no gradient reaches them.
    """
    n = points.shape[0]
    linear_leaf = Tensor(h.linear.T.copy(), name="h_linear")
    shift_leaf = Tensor(np.tile(h.translation, (n, 1)), name="h_translation")
    moved = ad.matmul(points, ad.stop_gradient(linear_leaf))
    moved = ad.add(moved, ad.stop_gradient(shift_leaf))
    return moved, linear_leaf, shift_leaf


def _as_tensor(pred) -> Tensor:
    if isinstance(pred, Tensor):
        return pred
    return Tensor(_as_points(pred, "pred"))


def camera_pose_error(pred, gt, h: SimilarityTransform) -> Tensor:
    """Mean squared aligned-translation error, ``1/(2N) sum |H t_pred - t_gt|^2``.

    ``pred`` may be a tape tensor (differentiable path) or any (N, 3) array
    form.  The returned scalar carries ``h_leaves`` so the stop-gradient
    contract is checkable after a backward pass.
    """
    pred_t = _as_tensor(pred)
    gt_arr = _as_points(gt, "gt")
    if pred_t.shape != gt_arr.shape:
        raise ValueError(f"camera counts differ: {pred_t.shape} vs {gt_arr.shape}")
    n = gt_arr.shape[0]
    moved, linear_leaf, shift_leaf = _transform_on_tape(pred_t, h)
    diff = ad.sub(moved, Tensor(gt_arr))
    err = ad.scale(ad.sum_all(ad.mul(diff, diff)), 1.0 / (2.0 * n))
    err.h_leaves = (linear_leaf, shift_leaf)
    return err


def point_cloud_error(pred, gt, h: SimilarityTransform, eps: float,
                      *, conf_cutoff: float = 1.0, confidence=None) -> Tensor:
    """Mean squared inlier distance ``1/(2|I|) sum_{j in I} |H p_j - nn(p_j)|^2``.

    The inlier set, its nearest-neighbour matches and ``h`` are all computed
    from detached values and enter the graph as constants; gradients flow only
    into the predicted coordinates.  Raises :class:`EmptyInlierSetError` when
    nothing survives the filters.
    """
    pred_t = _as_tensor(pred)
    gt_pts = _as_points(gt, "gt")
    inliers, nn_idx = _inliers_and_matches(pred if isinstance(pred, PointCloud) else pred_t,
                                           gt_pts, h, eps, conf_cutoff, confidence)
    if inliers.size == 0:
        raise EmptyInlierSetError(
            f"no inliers: eps={eps}, cutoff={conf_cutoff}, {pred_t.shape[0]} predictions")
    err = point_cloud_error_frozen(pred_t, gt_pts[nn_idx[inliers]], h, inliers)
    err.inlier_indices = inliers
    return err


def point_cloud_error_frozen(pred, matched_gt, h: SimilarityTransform,
                             inliers=None) -> Tensor:
    """Point error with a *fixed* inlier set and matches.

    This is the exact piecewise branch that :func:`point_cloud_error`
    differentiates, exposed so finite-difference checks can evaluate the same
    function without correspondence switches.
    """
    pred_t = _as_tensor(pred)
    matched = _as_points(matched_gt, "matched_gt")
    if inliers is None:
        sel = pred_t
        if pred_t.shape[0] != matched.shape[0]:
            raise ValueError("prediction/match counts differ")
    else:
        idx = np.asarray(inliers, dtype=np.intp)
        if idx.size != matched.shape[0]:
            raise ValueError("inlier/match counts differ")
        sel = ad.take_rows(pred_t, idx)
    moved, linear_leaf, shift_leaf = _transform_on_tape(sel, h)
    diff = ad.sub(moved, Tensor(matched))
    err = ad.scale(ad.sum_all(ad.mul(diff, diff)), 1.0 / (2.0 * matched.shape[0]))
    err.h_leaves = (linear_leaf, shift_leaf)
    return err
