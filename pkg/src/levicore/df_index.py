"""Diederich-Fornaess index: a direct plurisubharmonicity scan and the norm formula.

For a defining function ``r`` and ``0 < delta <= 1`` the function ``-(-r)^delta`` is
plurisubharmonic where

    M_delta = B + (1 - delta) conj(dr) dr^T / (-r)

is positive semidefinite (``B`` the mixed Hessian form).  For ``r_c = exp(f) r``
one has ``M_delta(r_c) = exp(f) (A + (1 - delta) conj(u) u^T / (-r))`` with
``u = dr + r df`` and

    A = B + r (H_f + conj(df) df^T) + conj(df) dr^T + conj(dr) df^T,

so a gauge only needs the jets of ``r`` and of the basis functions at the grid.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import calc
from . import dangelo
from . import hypersurface as hs

log = logging.getLogger(__name__)

DEFECT_TOL = 1e-8
DELTA_RESOLUTION = 1e-3


class InvalidGridError(ValueError):
    """A collar grid point is not strictly inside the domain."""


@dataclass(frozen=True)
class CollarGrid:
    """Interior points with ``-eps0 < r < 0`` stratified by depth."""

    points: np.ndarray
    depths: np.ndarray       # target depth of each point
    r: np.ndarray            # actual r at each point
    strata: tuple
    eps0: float
    spacing: float

    def spec(self):
        return {"points": int(len(self.points)), "strata": [float(x) for x in self.strata],
                "eps0": self.eps0, "spacing": self.spacing}


def collar_grid(f, sample, eps0=0.1, strata=4, ratio=100.0, newton_steps=8):
    """Push boundary points inward to ``r = -d`` for geometric depths ``d``.

    The depths are ``eps0 / ratio^j`` for ``j = 0 .. strata-1`` scaled by a
    factor slightly below one so every point sits strictly inside the collar.
    """
    base = np.array([bp.p for bp in sample])
    if len(base) == 0:
        return CollarGrid(np.zeros((0, f.n), complex), np.zeros(0), np.zeros(0), (), eps0, 0.0)
    depths = tuple(0.9 * eps0 / ratio ** j for j in range(strata))
    pts, dep = [], []
    for d in depths:
        q = base.copy()
        for _ in range(newton_steps):
            val, g, _ = calc.jet_data(f, q)
            N = np.conj(g) / np.sum(np.abs(g) ** 2, axis=1, keepdims=True)
            q = q - 0.5 * (val + d)[:, None] * N
        pts.append(q)
        dep.append(np.full(len(q), d))
    pts = np.vstack(pts)
    dep = np.concatenate(dep)
    r = calc.evaluate(f, pts)
    keep = (r < 0) & (r > -eps0)
    if not np.all(keep):
        log.info("collar: dropped %d points outside (-eps0, 0)", int(np.sum(~keep)))
    pts, dep, r = pts[keep], dep[keep], r[keep]
    spacing = float(np.median(np.diff(np.sort(np.abs(base[:, 0]))))) if len(base) > 1 else 0.0
    return CollarGrid(pts, dep, r, depths, eps0, spacing)


@dataclass
class _GridJets:
    r: np.ndarray
    g: np.ndarray
    B: np.ndarray
    phi: np.ndarray | None = None
    dphi: np.ndarray | None = None
    hphi: np.ndarray | None = None


def _grid_jets(f, grid, basis=None):
    if np.any(grid.r >= 0):
        raise InvalidGridError("collar grid contains a point with r >= 0")
    r, g, B = calc.jet_data(f, grid.points)
    jets = _GridJets(r, g, B)
    if basis is not None:
        jets.phi, jets.dphi, jets.hphi = basis.data(grid.points)
    return jets


def _subset(jets, mask):
    pick = lambda a: None if a is None else a[mask]
    return _GridJets(jets.r[mask], jets.g[mask], jets.B[mask],
                     pick(jets.phi), pick(jets.dphi), pick(jets.hphi))


def _pieces(jets, c=None):
    """Return (A, u, kappa, scale) with M_delta = scale * (A + (1-delta) kappa conj(u) u^T)."""
    r, g, B = jets.r, jets.g, jets.B
    if c is None or jets.phi is None or not np.any(c):
        return B, g, 1.0 / (-r), np.ones(len(r))
    fv = jets.phi @ c
    df = np.einsum("pmj,m->pj", jets.dphi, c)
    Hf = np.einsum("pmab,m->pab", jets.hphi, c)
    cdf = np.conj(df)
    A = (B + r[:, None, None] * (Hf + cdf[:, :, None] * df[:, None, :])
         + cdf[:, :, None] * g[:, None, :] + np.conj(g)[:, :, None] * df[:, None, :])
    u = g + r[:, None] * df
    return A, u, 1.0 / (-r), np.exp(fv)


def _min_eigs(A, u, kappa, scale, delta):
    M = A + ((1.0 - delta) * kappa)[:, None, None] * (np.conj(u)[:, :, None] * u[:, None, :])
    M = 0.5 * (M + np.conj(np.swapaxes(M, 1, 2)))
    return scale * np.linalg.eigvalsh(M)[:, 0]


def psh_defect(f, delta, grid, jets=None, basis=None, coeffs=None):
    """Smallest eigenvalue of M_delta over the collar grid (for ``exp(f_c) r`` if a gauge is given)."""
    jets = jets or _grid_jets(f, grid, basis)
    A, u, kappa, scale = _pieces(jets, coeffs)
    return float(np.min(_min_eigs(A, u, kappa, scale, float(delta))))


def _rescaled(A, u, kappa, g):
    """Express the form in the basis ``[T, sqrt(-r) n]`` (``n`` the unit normal, ``T``
    its orthogonal complement), where every block is of order one.

    Returns ``(Ahat, w)`` with ``M_delta ~ Ahat + (1 - delta) kappa conj(w) w^T``;
    the rank-one part is kept as a vector so that no ``1/(-r)``-sized entries
    are ever formed.
    """
    m, n = g.shape
    nrm = np.conj(g) / np.linalg.norm(g, axis=1, keepdims=True)
    stack = np.concatenate([nrm[:, :, None], np.broadcast_to(np.eye(n), (m, n, n))], axis=2)
    Q = np.linalg.qr(stack)[0]                       # first column is a multiple of nrm
    P = np.concatenate([Q[:, :, 1:], nrm[:, :, None] / np.sqrt(kappa)[:, None, None]], axis=2)
    Ahat = np.conj(np.swapaxes(P, 1, 2)) @ A @ P
    w = np.einsum("pj,pjk->pk", u, P)
    return Ahat, w


def _normalized_min_eigs(Ahat, w, kappa, delta):
    """Smallest eigenvalue of the rescaled form divided by the depth ``-r``."""
    M = Ahat + ((1.0 - delta) * kappa)[:, None, None] * (np.conj(w)[:, :, None] * w[:, None, :])
    M = 0.5 * (M + np.conj(np.swapaxes(M, 1, 2)))
    return np.linalg.eigvalsh(M)[:, 0] * kappa


def _point_deltas(Ahat, w, kappa, tol, resolution):
    """Largest admissible delta at each point (0 when even delta -> 0 fails).

    A point admits ``delta`` when the normalized defect is at least ``-tol``.
    """
    lo = np.zeros(len(kappa))
    ok_one = _normalized_min_eigs(Ahat, w, kappa, 1.0) >= -tol
    ok_zero = _normalized_min_eigs(Ahat, w, kappa, 0.0) >= -tol
    lo[ok_one] = 1.0
    active = ~ok_one & ok_zero
    if np.any(active):
        a, ww, k = Ahat[active], w[active], kappa[active]
        l, h = np.zeros(len(k)), np.ones(len(k))
        while np.max(h - l) > resolution:
            mid = 0.5 * (l + h)
            good = _normalized_min_eigs(a, ww, k, mid) >= -tol
            l = np.where(good, mid, l)
            h = np.where(good, h, mid)
        lo[active] = l
    return lo


def best_delta(jets, coeffs=None, tol=DEFECT_TOL, resolution=DELTA_RESOLUTION, mask=None):
    """Smallest per-point admissible delta (over ``mask`` if given) and the per-point values."""
    A, u, kappa, _ = _pieces(jets, coeffs)
    Ahat, w = _rescaled(A, u, kappa, jets.g)
    d = _point_deltas(Ahat, w, kappa, tol, resolution)
    sel = d if mask is None else d[mask]
    return float(np.min(sel)) if len(sel) else 1.0, d


def _stratum_profile(grid, per):
    return [[float(d), float(np.min(per[grid.depths == d]))]
            for d in grid.strata if np.any(grid.depths == d)]


@dataclass
class RouteA:
    delta: float
    defect_curve: list
    coeffs: list
    basis: str
    resolution: float
    tol: float
    trace: dict = field(default_factory=dict)

    def to_json(self):
        return {"delta": self.delta, "defectCurve": self.defect_curve,
                "coefficients": self.coeffs, "basis": self.basis,
                "resolution": self.resolution, "defectTol": self.tol, "trace": self.trace}


def df_scan(f, grid, delta_grid=None, basis=None, warm_start=None, cfg=None,
            tol=DEFECT_TOL, resolution=DELTA_RESOLUTION):
    """Largest delta for which -(-r_c)^delta is psh on the thinnest sampled collar.

    The index only asks for plurisubharmonicity near the boundary, so the
    reported delta is the one on the stratum closest to the boundary; the full
    per-stratum profile goes into the trace.  Without a basis ``r_c = r``.  With
    a basis the gauge ``exp(f_c)`` is chosen by Nelder-Mead over the
    coefficients, started from ``warm_start`` (if any) and from zero.
    """
    cfg = cfg or dangelo.OptimizerConfig()
    if delta_grid is None:
        delta_grid = np.round(np.linspace(0.05, 0.95, 19), 10)
    delta_grid = np.asarray(sorted(delta_grid), float)
    if np.any((delta_grid <= 0) | (delta_grid >= 1)):
        raise ValueError("delta grid must lie in (0, 1)")
    if len(grid.points) == 0:
        return RouteA(1.0, [], [], "none", resolution, tol, {"note": "empty collar"})
    jets = _grid_jets(f, grid, basis)
    thin = grid.depths == min(d for d in grid.strata if np.any(grid.depths == d))
    c_best = None
    trace = {"starts": []}
    if basis is not None:
        starts = [np.zeros(basis.size)]
        if warm_start is not None and len(warm_start) == basis.size:
            starts.insert(0, np.asarray(warm_start, float))

        thin_jets = _subset(jets, thin)

        def obj(c):
            if np.max(np.abs(c)) > cfg.coef_bound:
                return 1.0
            return -best_delta(thin_jets, c, tol, resolution)[0]

        best_val = -1.0
        for x0 in starts:
            v0 = -obj(x0)
            x, val = x0, v0
            if v0 < 1.0 and cfg.max_evals > 0:
                res = minimize(obj, x0, method="Nelder-Mead",
                               options={"maxfev": cfg.max_evals, "xatol": 1e-6,
                                        "fatol": resolution, "adaptive": True})
                if -res.fun > v0:
                    x, val = np.asarray(res.x, float), float(-res.fun)
            trace["starts"].append(val)
            if val > best_val:
                best_val, c_best = val, np.asarray(x, float)
    delta, per = best_delta(jets, c_best, tol, resolution, thin)
    A, u, kappa, _ = _pieces(jets, c_best)
    sel = np.flatnonzero(thin)
    Ahat, w = _rescaled(A[sel], u[sel], kappa[sel], jets.g[sel])
    curve = [[float(d), float(np.min(_normalized_min_eigs(Ahat, w, kappa[sel], d)))]
             for d in delta_grid]
    worst = sel[int(np.argmin(per[sel]))]
    trace["strata"] = _stratum_profile(grid, per)
    trace["worstPoint"] = [[float(x.real), float(x.imag)] for x in grid.points[worst]]
    trace["worstDepth"] = float(grid.depths[worst])
    return RouteA(float(delta), curve, [] if c_best is None else [float(x) for x in c_best],
                  basis.id if basis is not None else "none", resolution, tol, trace)


@dataclass
class RouteB:
    df: float
    estimate: dangelo.NormEstimate

    def to_json(self):
        return {"df": self.df, "nEstimate": self.estimate.to_json(), "lowerBound": True}


def df_via_norm(f, dist, basis=None, K=np.inf, cfg=None, null_dist=None):
    """1 / (1 + n) with n from :func:`dangelo.optimize_n` (a lower estimate of DF)."""
    est = dangelo.optimize_n(f, dist, basis, K, cfg, null_dist)
    df = 1.0 / (1.0 + est.value) if np.isfinite(est.value) else 0.0
    return RouteB(float(df), est)


@dataclass
class DFReport:
    domain: dict
    route_a: RouteA | None
    route_b: RouteB | None
    grid: dict
    seeds: dict

    @property
    def gap(self):
        if self.route_a is None or self.route_b is None:
            return None
        return abs(self.route_a.delta - self.route_b.df)

    def to_json(self):
        return {
            "domain": self.domain.get("name"),
            "params": self.domain.get("params", {}),
            "routeA": None if self.route_a is None else self.route_a.to_json(),
            "routeB": None if self.route_b is None else self.route_b.to_json(),
            "agreementGap": self.gap,
            "seeds": self.seeds,
            "gridSpec": self.grid,
        }


DF_REPORT_SCHEMA = {
    "type": "object",
    "required": ["domain", "params", "routeA", "routeB", "agreementGap", "seeds", "gridSpec"],
    "properties": {
        "domain": {"type": "string"},
        "params": {"type": "object"},
        "routeA": {"anyOf": [{"type": "null"}, {
            "type": "object", "required": ["delta", "defectCurve"],
            "properties": {"delta": {"type": "number", "minimum": 0, "maximum": 1},
                           "defectCurve": {"type": "array"}}}]},
        "routeB": {"anyOf": [{"type": "null"}, {
            "type": "object", "required": ["df", "nEstimate"],
            "properties": {"df": {"type": "number", "minimum": 0, "maximum": 1}}}]},
        "agreementGap": {"anyOf": [{"type": "null"}, {"type": "number"}]},
        "seeds": {"type": "object"},
        "gridSpec": {"type": "object"},
    },
}


def reduction_check(f, null_dist, core, bases, K=np.inf, cfg=None):
    """Compare optimize_n on the null distribution and on its core for growing bases."""
    rows = []
    for basis in bases:
        on_null = dangelo.optimize_n(f, null_dist, basis, K, cfg)
        on_core = dangelo.optimize_n(f, core, basis, K, cfg, null_dist=null_dist)
        gap = on_null.value - on_core.value if np.isfinite(on_null.value) else np.inf
        rows.append({"basis": basis.id if basis is not None else "none",
                     "null": on_null.value, "core": on_core.value, "gap": gap,
                     "coreNotAbove": bool(on_core.value <= on_null.value + 1e-9)})
    gaps = [r["gap"] for r in rows]
    nonincreasing = all(b <= a + 1e-9 for a, b in zip(gaps, gaps[1:]))
    return {"rows": rows, "gapNonIncreasing": nonincreasing}


def key_lemma_check(f, bp, Z, angle_tol_deg=5.0):
    """|lhs - rhs| of the identity relating the normal derivative of the Levi form
    to d alpha and |alpha|^2 at a Levi null vector ``Z``."""
    Z = np.asarray(Z, complex)
    L = hs.levi_form(f, bp)
    ref = np.linalg.norm(calc.hess_mixed(f, bp.p), 2)
    K = bp.frame @ calc.kernel_basis(L, 1e-6, ref=ref, psd=False)
    if K.shape[1] == 0 or np.max(calc.principal_angles(Z[:, None], K)) > np.deg2rad(angle_tol_deg):
        raise dangelo.IllPosedFiberError("Z is not a Levi null vector at this point")
    lhs, rhs = dangelo.key_lemma_sides(f, bp, Z / np.linalg.norm(Z))
    return float(abs(lhs - rhs))
