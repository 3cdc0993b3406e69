"""Sampled distributions, their derived distributions and the core.

A distribution is stored on a finite point set: every sample point carries an
orthonormal fiber basis (possibly empty).  Complex distributions live in
``C^n`` and their fibers are spans of (1,0) vectors; real ones live in ``R^d``.
Tangent spaces of a support are estimated by Gaussian-weighted local PCA, and
a fiber is intersected with the complexified tangent through a small
Hermitian eigenproblem that measures how far each fiber direction sits from
the tangent space.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from . import calc
from . import hypersurface as hs

ANGLE_TOL_DEG = 5.0
GAP_RATIO = 0.2
SCALE_FACTOR = 3.0
SCHEMA_VERSION = "1"


class InsufficientSamplingError(ValueError):
    """Too few neighbors inside the PCA radius."""

    def __init__(self, message, radius=None, found=0):
        super().__init__(message)
        self.radius = radius
        self.found = found


@dataclass(frozen=True)
class SampledDistribution:
    kind: str  # "real" or "complex"
    points: np.ndarray
    fibers: tuple
    source_tol: float = 0.0
    iteration: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("real", "complex"):
            raise ValueError(f"kind must be 'real' or 'complex', got {self.kind!r}")
        if len(self.points) != len(self.fibers):
            raise ValueError("points and fibers differ in length")

    @property
    def ambient_dim(self):
        return self.points.shape[1] if len(self.points) else 0

    def dims(self):
        return np.array([f.shape[1] for f in self.fibers], dtype=int)

    def support_mask(self):
        return self.dims() > 0

    def support(self):
        return self.points[self.support_mask()]

    def is_empty(self):
        return not np.any(self.support_mask())

    def real_coords(self, pts=None):
        pts = self.points if pts is None else pts
        if self.kind == "real":
            return np.asarray(pts, float)
        return _realify(pts)

    def to_json(self):
        cplx = self.kind == "complex"
        return {
            "schemaVersion": SCHEMA_VERSION,
            "kind": self.kind,
            "sourceTol": float(self.source_tol),
            "iteration": int(self.iteration),
            "points": [_flat(p, cplx) for p in self.points],
            "fibers": [
                {"shape": [int(f.shape[0]), int(f.shape[1])], "data": _flat(f.reshape(-1), cplx)}
                for f in self.fibers
            ],
        }

    @classmethod
    def from_json(cls, d):
        cplx = d["kind"] == "complex"
        pts = np.array([_unflat(p, cplx) for p in d["points"]])
        fibers = tuple(
            _unflat(f["data"], cplx).reshape(f["shape"]) for f in d["fibers"]
        )
        return cls(kind=d["kind"], points=pts, fibers=fibers,
                   source_tol=d["sourceTol"], iteration=d["iteration"])


def _flat(arr, cplx):
    arr = np.asarray(arr)
    if not cplx:
        return [float(x) for x in np.real(arr)]
    out = np.empty(2 * arr.size)
    out[0::2] = arr.real
    out[1::2] = arr.imag
    return [float(x) for x in out]


def _unflat(data, cplx):
    data = np.asarray(data, float)
    if not cplx:
        return data
    return data[0::2] + 1j * data[1::2]


def _realify(pts):
    pts = np.asarray(pts, complex)
    out = np.empty(pts.shape[:-1] + (2 * pts.shape[-1],))
    out[..., 0::2] = pts.real
    out[..., 1::2] = pts.imag
    return out


DISTRIBUTION_SCHEMA = {
    "type": "object",
    "required": ["schemaVersion", "kind", "sourceTol", "iteration", "points", "fibers"],
    "properties": {
        "schemaVersion": {"type": "string"},
        "kind": {"enum": ["real", "complex"]},
        "sourceTol": {"type": "number"},
        "iteration": {"type": "integer", "minimum": 0},
        "points": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "fibers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["shape", "data"],
                "properties": {
                    "shape": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                    "data": {"type": "array", "items": {"type": "number"}},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class TangentEstimate:
    point: np.ndarray
    basis: np.ndarray  # real coordinates, columns orthonormal
    spectrum_gap: float
    scale: float
    neighbors: int

    @property
    def dim(self):
        return self.basis.shape[1]


def levi_null(f, sample, rel_tol=1e-6):
    """Levi null distribution on a boundary sample, fibers in ambient coordinates.

    Raises :class:`calc.NotSemidefiniteError` at the first point whose Levi
    form is negative beyond the tolerance.
    """
    if len(sample) == 0:
        return SampledDistribution("complex", np.zeros((0, f.n), complex), (), rel_tol)
    L, ref = hs.levi_forms(f, sample)
    fibers = []
    for bp, Lp, rp in zip(sample, L, ref):
        try:
            K = calc.kernel_basis(Lp, rel_tol, ref=rp)
        except calc.NotSemidefiniteError as exc:
            raise calc.NotSemidefiniteError(
                f"Levi form not semidefinite at {bp.p!r}: {exc}", exc.min_eigenvalue) from exc
        fibers.append(calc.orthonormalize(bp.frame @ K) if K.shape[1] else
                      np.zeros((f.n, 0), complex))
    pts = np.array([bp.p for bp in sample])
    return SampledDistribution("complex", pts, tuple(fibers), rel_tol)


def default_scale(cloud):
    """SCALE_FACTOR times the median nearest-neighbor spacing of a point cloud."""
    cloud = np.asarray(cloud, float)
    if len(cloud) < 2:
        return 0.0
    d, _ = cKDTree(cloud).query(cloud, k=2)
    return SCALE_FACTOR * float(np.median(d[:, 1]))


def local_scales(cloud, tree=None):
    """SCALE_FACTOR times each point's nearest-neighbor distance (0 if alone)."""
    cloud = np.asarray(cloud, float)
    if len(cloud) < 2:
        return np.zeros(len(cloud))
    tree = tree if tree is not None else cKDTree(cloud)
    d, _ = tree.query(cloud, k=2)
    return SCALE_FACTOR * d[:, 1]


def tangent_estimate(cloud, p, scale, gap_ratio=GAP_RATIO, min_neighbors=1, tree=None):
    """Local PCA tangent space of a real point cloud at ``p``.

    Neighbors within ``scale`` (excluding ``p`` itself) are weighted by
    ``exp(-|q - p|^2 / (2 (scale/2)^2))``; the retained dimension is the number
    of singular values at least ``gap_ratio`` times the largest.  A point with
    no neighbors at all is isolated and gets the zero subspace.
    """
    cloud = np.asarray(cloud, float)
    p = np.asarray(p, float)
    d = len(p)
    tree = tree if tree is not None else (cKDTree(cloud) if len(cloud) else None)
    idx = [] if tree is None else tree.query_ball_point(p, scale * (1 + 1e-9))
    diffs = cloud[idx] - p if len(idx) else np.zeros((0, d))
    diffs = diffs[np.linalg.norm(diffs, axis=1) > 1e-12 * max(scale, 1.0)]
    if len(diffs) == 0:
        return TangentEstimate(p, np.zeros((d, 0)), 0.0, scale, 0)
    if len(diffs) < min_neighbors:
        raise InsufficientSamplingError(
            f"{len(diffs)} neighbors within radius {scale:.3g}, need {min_neighbors}",
            radius=scale, found=len(diffs))
    sig = scale / 2.0
    w = np.exp(-np.sum(diffs ** 2, axis=1) / (2 * sig * sig))
    _, s, vt = np.linalg.svd(np.sqrt(w)[:, None] * diffs, full_matrices=False)
    keep = s >= gap_ratio * s[0]
    k = int(np.sum(keep))
    gap = float(s[k] / s[k - 1]) if k < len(s) else 0.0
    return TangentEstimate(p, vt[:k].T.copy(), gap, scale, len(diffs))


def _complex_defect(T, n):
    """Hermitian form on C^n measuring distance of Z and iZ from span(T).

    ``T`` holds an orthonormal real basis in interleaved coordinates.  For a
    unit vector Z the form equals |(1-P)X(Z)|^2 + |(1-P)X(iZ)|^2, which is
    zero exactly when Z lies in the complexified tangent.
    """
    R = np.eye(2 * n) - T @ T.T
    xx, xy = R[0::2, 0::2], R[0::2, 1::2]
    yx, yy = R[1::2, 0::2], R[1::2, 1::2]
    A = 0.5 * (xx + yy + 1j * (yx - xy))
    B = 0.5 * (xx - yy + 1j * (yx + xy))
    return 2.0 * (A.conj().T @ A + (B.conj().T @ B).T)


def intersect_with_tangent(fiber, T, kind, angle_tol_deg=ANGLE_TOL_DEG):
    """Directions of ``fiber`` within ``angle_tol_deg`` of the (complexified) tangent."""
    k = fiber.shape[1]
    if k == 0:
        return fiber
    s2 = np.sin(np.deg2rad(angle_tol_deg)) ** 2
    if kind == "real":
        Q = fiber.T @ (np.eye(fiber.shape[0]) - T @ T.T) @ fiber
        w, v = np.linalg.eigh(0.5 * (Q + Q.T))
        return fiber @ v[:, w <= s2]
    H = fiber.conj().T @ _complex_defect(T, fiber.shape[0]) @ fiber
    w, v = np.linalg.eigh(calc.symmetrize(H))
    return fiber @ v[:, w <= 2 * s2]


def derived(dist, scale=None, angle_tol_deg=ANGLE_TOL_DEG, gap_ratio=GAP_RATIO,
            min_neighbors=1):
    """The derived distribution: each fiber cut down to the tangent of the support."""
    mask = dist.support_mask()
    if not np.any(mask):
        return replace(dist, iteration=dist.iteration + 1)
    cloud = dist.real_coords(dist.points[mask])
    tree = cKDTree(cloud)
    scales = np.full(len(cloud), np.nan) if scale is None else np.full(len(cloud), float(scale))
    if scale is None:
        scales = local_scales(cloud, tree)
    fibers = list(dist.fibers)
    for j, i in enumerate(np.flatnonzero(mask)):
        te = tangent_estimate(cloud, cloud[j], scales[j], gap_ratio, min_neighbors, tree)
        fibers[i] = intersect_with_tangent(dist.fibers[i], te.basis, dist.kind, angle_tol_deg)
    meta = dict(dist.meta, scale="local" if scale is None else float(scale))
    return replace(dist, fibers=tuple(fibers), iteration=dist.iteration + 1, meta=meta)


def same_distribution(a, b, angle_tol_deg=ANGLE_TOL_DEG):
    """Stabilization test: equal sampled supports, dimensions and fiber angles."""
    if len(a.points) != len(b.points) or not np.array_equal(a.support_mask(), b.support_mask()):
        return False
    if not np.array_equal(a.dims(), b.dims()):
        return False
    tol = np.deg2rad(angle_tol_deg)
    for fa, fb in zip(a.fibers, b.fibers):
        if fa.shape[1] and np.max(calc.principal_angles(fa, fb)) > tol:
            return False
    return True


@dataclass(frozen=True)
class CoreResult:
    core: SampledDistribution
    k: int
    stabilized: bool
    history: tuple  # support sizes of D, D', D'', ...


def iterate_to_core(dist, max_iter=10, scale=None, angle_tol_deg=ANGLE_TOL_DEG,
                    gap_ratio=GAP_RATIO, min_neighbors=1):
    """Iterate :func:`derived` until it stops changing.

    ``k`` is the index of the first iterate equal to its own derived
    distribution, so ``k = 0`` means the input is already its core.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    cur = replace(dist, iteration=0)
    history = [int(np.sum(cur.support_mask()))]
    for k in range(max_iter):
        nxt = derived(cur, scale, angle_tol_deg, gap_ratio, min_neighbors)
        if same_distribution(cur, nxt, angle_tol_deg):
            return CoreResult(cur, k, True, tuple(history))
        cur = nxt
        history.append(int(np.sum(cur.support_mask())))
    return CoreResult(cur, max_iter, False, tuple(history))


def zero_holo_dim_check(A, p, null_fiber, scale=None, angle_tol_deg=ANGLE_TOL_DEG,
                        gap_ratio=GAP_RATIO):
    """True when the complexified tangent of the set ``A`` at ``p`` meets the null fiber trivially."""
    A = np.asarray(A, complex)
    cloud = _realify(A)
    if scale is None:
        scale = default_scale(cloud) if len(cloud) > 1 else 1.0
    te = tangent_estimate(cloud, _realify(np.asarray(p, complex)[None])[0], scale, gap_ratio)
    kept = intersect_with_tangent(np.asarray(null_fiber, complex), te.basis, "complex",
                                  angle_tol_deg)
    return kept.shape[1] == 0


def hausdorff(a, b):
    """Symmetric Hausdorff distance between two finite real point sets."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if len(a) == 0 and len(b) == 0:
        return 0.0
    if len(a) == 0 or len(b) == 0:
        return np.inf
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(max(da.max(), db.max()))


def axes_example(m=101, half_width=1.0):
    """Real distribution ker(x dx (x) dx + y dy (x) dy) sampled on an m x m grid."""
    xs = np.linspace(-half_width, half_width, m)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    tol = 1e-12
    fibers = []
    for x, y in pts:
        cols = []
        if abs(x) <= tol:
            cols.append([1.0, 0.0])
        if abs(y) <= tol:
            cols.append([0.0, 1.0])
        fibers.append(np.array(cols, float).T.reshape(2, len(cols)))
    return SampledDistribution("real", pts, tuple(fibers), tol,
                               meta={"spacing": float(xs[1] - xs[0])})
