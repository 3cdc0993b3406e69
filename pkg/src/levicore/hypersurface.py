"""Boundary points, tangential frames and Levi forms of a defining function."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from . import calc

log = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-10
FRAME_TOL = 1e-9


class ProjectionError(RuntimeError):
    """Newton projection onto {r = 0} did not converge."""


class DegenerateGradientError(ValueError):
    """The (1,0) gradient of r vanishes (numerically) at a point."""


@dataclass(frozen=True)
class DefiningFunction:
    """A smooth real function r on (a box in) C^n; the domain is {r < 0}.

    ``expr(z, zb)`` receives lists of coordinate arrays (or :class:`calc.Jet`
    objects) for ``z`` and ``conj(z)`` and must be written with the
    ``calc`` elementary functions so both derivative backends apply.
    ``box`` lists ``(lo, hi)`` for the real coordinates ``x1, y1, x2, y2, ...``.
    ``strata`` optionally places ``count`` points exactly on analytic strata.
    """

    name: str
    n: int
    expr: Callable
    box: tuple
    params: dict = field(default_factory=dict)
    strata: Callable | None = None

    def __call__(self, p):
        return calc.evaluate(self, p)

    def contains(self, p, slack=0.0):
        pts = np.atleast_2d(np.asarray(p, complex))
        lo = np.array([b[0] for b in self.box]) - slack
        hi = np.array([b[1] for b in self.box]) + slack
        real = np.empty((len(pts), 2 * self.n))
        real[:, 0::2] = pts.real
        real[:, 1::2] = pts.imag
        inside = np.all((real >= lo) & (real <= hi), axis=1)
        return inside[0] if np.ndim(p) == 1 else inside

    def describe(self):
        return {"name": self.name, "n": self.n, "params": dict(self.params)}


@dataclass(frozen=True)
class BoundaryPoint:
    """Point of {r = 0} with its (1,0) gradient, normal N (Nr = 1) and frame."""

    p: np.ndarray
    dr: np.ndarray
    N: np.ndarray
    frame: np.ndarray  # n x (n-1), orthonormal basis of ker dr
    residual: float

    @property
    def n(self):
        return len(self.p)


class BoundarySample(list):
    """List of boundary points that remembers how many were requested."""

    def __init__(self, points=(), requested=0, strategy="", seed=None):
        super().__init__(points)
        self.requested = requested
        self.strategy = strategy
        self.seed = seed

    @property
    def partial(self):
        return len(self) < self.requested

    def positions(self):
        if not self:
            return np.zeros((0, 0), complex)
        return np.array([bp.p for bp in self])


def normal_field(dr):
    """N = conj(dr) / |dr|^2, so that dr(N) = 1."""
    dr = np.asarray(dr, complex)
    nrm2 = np.sum(np.abs(dr) ** 2, axis=-1, keepdims=True)
    return np.conj(dr) / nrm2


def tangential_frame(dr):
    """Deterministic orthonormal basis of ker dr.

    Gram-Schmidt over the canonical basis in index order, skipping the axis
    most parallel to conj(dr).
    """
    dr = np.asarray(dr, complex)
    n = len(dr)
    u = np.conj(dr) / np.linalg.norm(dr)
    skip = int(np.argmax(np.abs(u)))
    vecs = [u]
    out = []
    for j in range(n):
        if j == skip:
            continue
        e = np.zeros(n, complex)
        e[j] = 1.0
        for q in vecs:
            e = e - q * np.vdot(q, e)
        for q in vecs:  # second pass for stability
            e = e - q * np.vdot(q, e)
        e /= np.linalg.norm(e)
        vecs.append(e)
        out.append(e)
    return np.array(out).T.reshape(n, n - 1)


def _newton(f, z, tol, max_steps):
    """Batched Newton iteration along the real gradient: z <- z - (r/2) N."""
    z = np.array(z, dtype=complex, copy=True)
    done = np.zeros(len(z), bool)
    failed = np.zeros(len(z), bool)
    for _ in range(max_steps):
        active = ~(done | failed)
        if not np.any(active):
            break
        za = z[active]
        with np.errstate(all="ignore"):
            try:
                val, grad, _ = calc.jet_data(f, za)
                ok = np.isfinite(val) & np.all(np.isfinite(grad), axis=1)
            except calc.EvaluationError:
                val = np.array([_safe_value(f, q) for q in za])
                grad = np.array([_safe_grad(f, q) for q in za])
                ok = np.isfinite(val) & np.all(np.isfinite(grad), axis=1)
        idx = np.flatnonzero(active)
        gn = np.linalg.norm(np.where(np.isfinite(grad), grad, 0), axis=1)
        ok &= gn > 1e-10
        failed[idx[~ok]] = True
        conv = ok & (np.abs(val) <= tol)
        done[idx[conv]] = True
        step = ok & ~conv
        if np.any(step):
            N = normal_field(grad[step])
            z[idx[step]] = za[step] - 0.5 * val[step, None] * N
    return z, done & ~failed


def _safe_value(f, q):
    try:
        return calc.evaluate(f, q)
    except calc.EvaluationError:
        return np.nan


def _safe_grad(f, q):
    try:
        return calc.grad10(f, q)
    except calc.EvaluationError:
        return np.full(len(q), np.nan, complex)


def boundary_point(f, p, tol=BOUNDARY_TOL):
    """Build a :class:`BoundaryPoint` at a point already on the boundary."""
    p = np.asarray(p, complex)
    val, grad, _ = calc.jet_data(f, p)
    if np.linalg.norm(grad) < 1e-10:
        raise DegenerateGradientError(f"|dr| < 1e-10 at {p!r}")
    if abs(val) > tol:
        raise ProjectionError(f"|r(p)| = {abs(val):.2e} exceeds {tol:.1e}")
    return BoundaryPoint(p=p, dr=grad, N=normal_field(grad), frame=tangential_frame(grad),
                         residual=float(abs(val)))


def project_to_boundary(f, z0, boundary_tol=BOUNDARY_TOL, max_steps=50):
    """Newton-project ``z0`` onto {r = 0} and attach normal and frame."""
    z0 = np.asarray(z0, complex)
    val, grad, _ = calc.jet_data(f, z0)
    if np.linalg.norm(grad) < 1e-10:
        raise DegenerateGradientError(f"|dr| < 1e-10 at {z0!r}")
    z, ok = _newton(f, z0[None, :], boundary_tol, max_steps)
    if not ok[0]:
        raise ProjectionError(f"no convergence from {z0!r} in {max_steps} steps")
    return boundary_point(f, z[0], boundary_tol)


def levi_form(f, bp):
    """Levi form on the frame of ``bp``: F^* B F with B the mixed Hessian form."""
    B = calc.hess_mixed(f, bp.p)
    F = bp.frame
    return calc.symmetrize(F.conj().T @ B @ F)


def levi_forms(f, sample):
    """Levi forms and ambient Hessian norms for a list of boundary points."""
    if not sample:
        return np.zeros((0, 0, 0), complex), np.zeros(0)
    pts = np.array([bp.p for bp in sample])
    _, _, B = calc.jet_data(f, pts)
    F = np.array([bp.frame for bp in sample])
    L = np.conj(np.swapaxes(F, 1, 2)) @ B @ F
    return calc.symmetrize(L), np.linalg.norm(B, ord=2, axis=(1, 2))


def pseudoconvexity_report(f, sample, rel_tol=1e-6):
    """Smallest Levi eigenvalue over the sample and the points that violate PSD.

    A point violates when its smallest eigenvalue is below ``-rel_tol`` times
    the norm of the ambient mixed Hessian there.
    """
    if len(sample) == 0:
        raise ValueError("pseudoconvexity_report needs a nonempty sample")
    L, ref = levi_forms(f, sample)
    mins = np.linalg.eigvalsh(L)[:, 0]
    bad = np.flatnonzero(mins < -rel_tol * np.maximum(ref, 1.0))
    return {
        "min_eigenvalue": float(np.min(mins)),
        "violations": [
            {"point": _cplx(sample[i].p), "eigenvalue": float(mins[i])} for i in bad
        ],
        "count": len(sample),
    }


def _cplx(p):
    return [[float(c.real), float(c.imag)] for c in p]


def _box_arrays(f):
    lo = np.array([b[0] for b in f.box], float)
    hi = np.array([b[1] for b in f.box], float)
    return lo, hi


def _to_complex(real):
    return real[:, 0::2] + 1j * real[:, 1::2]


def _seeds(f, strategy, count, rng_seed, attempt):
    lo, hi = _box_arrays(f)
    if strategy == "grid":
        eng = qmc.Halton(d=2 * f.n, scramble=False)
        eng.fast_forward(1 + attempt * count)
        u = eng.random(count)
    else:
        rng = np.random.default_rng([rng_seed, attempt])
        u = rng.random((count, 2 * f.n))
    return _to_complex(lo + u * (hi - lo))


def sample_boundary(f, strategy="random", count=100, seed=0, boundary_tol=BOUNDARY_TOL,
                    max_attempts=8):
    """Deterministic sample of boundary points.

    ``grid`` projects a Halton point set of the box, ``random`` projects seeded
    uniform points, ``param`` asks the domain to place points on its analytic
    strata.  Returns a :class:`BoundarySample`; if fewer than ``count`` points
    could be produced the sample is marked partial and a warning is logged.
    """
    if strategy == "param":
        if f.strata is None:
            raise ValueError(f"domain {f.name!r} has no parametrized strata")
        pts = np.asarray(f.strata(count), complex)
        out = BoundarySample(requested=count, strategy=strategy, seed=seed)
        for p in pts:
            try:
                out.append(boundary_point(f, p, boundary_tol))
            except (ProjectionError, DegenerateGradientError):
                continue
        _warn_partial(f, out)
        return out
    if strategy not in ("grid", "random"):
        raise ValueError(f"unknown sampling strategy {strategy!r}")
    out = BoundarySample(requested=count, strategy=strategy, seed=seed)
    for attempt in range(max_attempts):
        need = count - len(out)
        if need <= 0:
            break
        z0 = _seeds(f, strategy, max(need, 8), seed, attempt)
        with np.errstate(all="ignore"):
            z, ok = _newton(f, z0, boundary_tol, 50)
        ok &= f.contains(z)
        for q in z[ok]:
            if len(out) >= count:
                break
            try:
                out.append(boundary_point(f, q, boundary_tol))
            except (ProjectionError, DegenerateGradientError):
                continue
    _warn_partial(f, out)
    return out


def _warn_partial(f, sample):
    if sample.partial:
        log.warning("%s: only %d of %d boundary points produced (%s)",
                    f.name, len(sample), sample.requested, sample.strategy)
