"""D'Angelo forms on the Levi null distribution and the norm n_K.

Conventions (shared with :mod:`levicore.calc`): ``B[a, b] = d^2 r / dzbar_a dz_b``,
``N = conj(dr) / |dr|^2`` so that ``N r = 1``.  The D'Angelo form of ``r`` with
gauge ``f`` acts on (1,0) vectors through the covector

    a_j = sum_k conj(N_k) B[k, j] + df/dz_j,

i.e. ``alpha(Z) = N^* B Z + df(Z)``.  Replacing ``r`` by ``exp(f) r`` produces the
same covector on tangential vectors.  With ``J[k, j] = d a_j / dzbar_k`` the
Hermitian form of dbar alpha on a fiber ``F`` is ``-1/2 F^* J F`` and the wedge
form is ``1/2 conj(v) v^T`` with ``v = a F``.  Under these normalizations a
gauge ``f = |z|^2`` contributes ``-1/2`` times the identity to dbar alpha.
"""
from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import calc
from . import hypersurface as hs
from .distributions import SampledDistribution, ANGLE_TOL_DEG

log = logging.getLogger(__name__)

ATOL = 1e-9
BIG = 1e6


class IllPosedFiberError(ValueError):
    """A fiber handed to a form evaluation is not inside the Levi null space."""


class InvalidPairError(ValueError):
    """Two defining functions whose quotient is not positive near the boundary."""


# ---------------------------------------------------------------------------
# gauge bases
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Expr:
    expr: object
    n: int


@dataclass(frozen=True)
class GaugeBasis:
    """Real functions phi_1..phi_M used as gauge directions."""

    family: str
    n: int
    members: tuple
    params: dict = field(default_factory=dict)

    @property
    def size(self):
        return len(self.members)

    @property
    def id(self):
        extra = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.family}[{self.size}]" + (f"({extra})" if extra else "")

    def data(self, pts):
        """Values (P, M), (1,0) gradients (P, M, n) and mixed Hessians (P, M, n, n)."""
        pts = np.atleast_2d(np.asarray(pts, complex))
        P, M = len(pts), self.size
        vals = np.zeros((P, M))
        grads = np.zeros((P, M, self.n), complex)
        hess = np.zeros((P, M, self.n, self.n), complex)
        for m, e in enumerate(self.members):
            vals[:, m], grads[:, m], hess[:, m] = calc.jet_data(_Expr(e, self.n), pts)
        return vals, grads, hess

    def combine(self, coeffs):
        """The gauge function sum_m c_m phi_m as an expression in (z, zb)."""
        coeffs = np.asarray(coeffs, float)
        members = self.members

        def expr(z, zb):
            total = 0.0
            for c, e in zip(coeffs, members):
                if c != 0.0:
                    total = total + float(c) * e(z, zb)
            return total
        return expr

    def gram_condition(self, pts):
        vals, _, _ = self.data(pts)
        s = np.linalg.svd(vals, compute_uv=False)
        return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def _real_coord(j, imag, scale):
    if imag:
        return lambda z, zb: (z[j] - zb[j]) * (-0.5j / scale)
    return lambda z, zb: (z[j] + zb[j]) * (0.5 / scale)


def polynomial_basis(n, degree=4, scale=1.0):
    """Monomials in Re z_j / scale, Im z_j / scale of total degree 1..degree."""
    coords = [_real_coord(j, im, scale) for j in range(n) for im in (False, True)]
    members = []
    for deg in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(2 * n), deg):
            def mono(z, zb, combo=combo):
                out = 1.0
                for i in combo:
                    out = out * coords[i](z, zb)
                return out
            members.append(mono)
    return GaugeBasis("poly", n, tuple(members), {"degree": degree, "scale": scale})


def radial_basis(n, size=24, coord=0, center=0.0, half_width=1.0):
    """Chebyshev polynomials T_1..T_size of (log|z_coord|^2 - center) / half_width."""

    def member(k):
        def phi(z, zb):
            s = (calc.log(z[coord] * zb[coord]) - center) * (1.0 / half_width)
            t_prev, t_cur = 1.0, s
            for _ in range(k - 1):
                t_prev, t_cur = t_cur, 2.0 * s * t_cur - t_prev
            return t_cur
        return phi

    return GaugeBasis("radial", n, tuple(member(k) for k in range(1, size + 1)),
                      {"coord": coord, "center": center, "halfWidth": half_width})


def make_basis(spec, f):
    """Parse ``poly:<degree>``, ``radial:<size>`` or ``none`` for the domain ``f``."""
    if spec in (None, "", "none"):
        return None
    family, _, arg = str(spec).partition(":")
    if family == "poly":
        half = max(max(abs(lo), abs(hi)) for lo, hi in f.box)
        return polynomial_basis(f.n, int(arg or 4), scale=half)
    if family == "radial":
        half = float(f.params.get("t0", 1.0))
        return radial_basis(f.n, int(arg or 24), coord=0, half_width=half)
    raise ValueError(f"unknown gauge basis {spec!r}")


# ---------------------------------------------------------------------------
# the form itself
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DAngeloForm:
    """D'Angelo form of ``base`` shifted by the gauge ``sum c_m phi_m``."""

    base: hs.DefiningFunction
    basis: GaugeBasis | None = None
    coeffs: np.ndarray | None = None

    def __post_init__(self):
        if self.coeffs is not None:
            c = np.asarray(self.coeffs, float)
            if not np.all(np.isfinite(c)):
                raise ValueError("gauge coefficients must be finite")
            if self.basis is None or len(c) != self.basis.size:
                raise ValueError("coefficients do not match the gauge basis")
            object.__setattr__(self, "coeffs", c)

    @property
    def has_gauge(self):
        return self.coeffs is not None and np.any(self.coeffs != 0)

    def with_coeffs(self, coeffs):
        return DAngeloForm(self.base, self.basis, np.asarray(coeffs, float))

    def gauge_grad(self, pts):
        pts = np.atleast_2d(np.asarray(pts, complex))
        if not self.has_gauge:
            return np.zeros(pts.shape, complex)
        _, g, _ = self.basis.data(pts)
        return np.einsum("pmj,m->pj", g, self.coeffs)

    def covector(self, pts):
        pts = np.atleast_2d(np.asarray(pts, complex))
        return base_covector(self.base, pts) + self.gauge_grad(pts)

    def shifted_base(self):
        """The defining function exp(f) r carrying the gauge in its own form."""
        if not self.has_gauge:
            return self.base
        f = self.basis.combine(self.coeffs)
        r = self.base.expr
        return hs.DefiningFunction(self.base.name + "+gauge", self.base.n,
                                   lambda z, zb: calc.exp(f(z, zb)) * r(z, zb),
                                   self.base.box, dict(self.base.params))


def base_covector(f, pts):
    """Covector of N^* B at (batched) points; needs a nonvanishing gradient."""
    pts = np.atleast_2d(np.asarray(pts, complex))
    _, g, B = calc.jet_data(f, pts)
    gn = np.sum(np.abs(g) ** 2, axis=1)
    if np.any(gn < 1e-20):
        raise hs.DegenerateGradientError("|dr| < 1e-10 where the normal is needed")
    N = np.conj(g) / gn[:, None]
    return np.einsum("pa,pab->pb", np.conj(N), B)


def base_covector_derivatives(f, pts):
    """(d/dz_k a_j, d/dzbar_k a_j) of the base covector by finite differences."""
    return calc.wirtinger_fd(lambda q: base_covector(f, q), pts)


def alpha_eval(a, bp, Z):
    """alpha(Z) at a boundary point, Z a (1,0) vector."""
    return complex(a.covector(bp.p)[0] @ np.asarray(Z, complex))


def ambient_alpha(a, p):
    """(1,0) coefficients of the ambient real form; the form is 2 Re(sum a_j dz_j)."""
    p = np.asarray(p, complex)
    out = a.covector(p)
    return out[0] if p.ndim == 1 else out


def _ambient_J(a, pts):
    """d a_j / dzbar_k for the full covector (base by differences, gauge exact)."""
    pts = np.atleast_2d(np.asarray(pts, complex))
    dz, dzb = base_covector_derivatives(a.base, pts)
    if a.has_gauge:
        _, g, H = a.basis.data(pts)
        dzb = dzb + np.einsum("pmkj,m->pkj", H, a.coeffs)
    # dz is left without the gauge term: callers only use dzb with a gauge
    return dz, dzb


def _check_fiber(f, bp, fiber, angle_tol_deg):
    L = hs.levi_form(f, bp)
    ref = np.linalg.norm(calc.hess_mixed(f, bp.p), 2)
    K = bp.frame @ calc.kernel_basis(L, 1e-6, ref=ref, psd=False)
    tang = np.abs(bp.dr @ fiber).max() if fiber.size else 0.0
    ang = calc.principal_angles(fiber, K) if K.shape[1] >= fiber.shape[1] else [np.pi / 2]
    if tang > 1e-6 or (len(ang) and np.max(ang) > np.deg2rad(angle_tol_deg)):
        raise IllPosedFiberError(f"fiber is not inside the Levi null space at {bp.p!r}")


def dbar_alpha(a, bp, fiber, check=True, angle_tol_deg=ANGLE_TOL_DEG, raw=False):
    """Hermitian form of dbar alpha on the columns of ``fiber``."""
    F = np.asarray(fiber, complex)
    if check and F.shape[1]:
        _check_fiber(a.base, bp, F, angle_tol_deg)
    _, J = _ambient_J(a, bp.p)
    D = -0.5 * F.conj().T @ J[0] @ F
    return D if raw else calc.symmetrize(D)


def wedge_alpha(a, bp, fiber):
    """Rank-one form 1/2 conj(v) v^T with v_b = alpha(F_b)."""
    v = a.covector(bp.p)[0] @ np.asarray(fiber, complex)
    return 0.5 * np.outer(np.conj(v), v)


# ---------------------------------------------------------------------------
# affine data: every quantity is affine in the gauge coefficients
# ---------------------------------------------------------------------------

@dataclass
class AffineData:
    """Per-point affine pieces ``v = v0 + V c`` and ``D = D0 + sum c_m D_m``."""

    points: np.ndarray
    index: np.ndarray        # position of each point in the source distribution
    k: int
    v0: np.ndarray           # (P, k)
    V: np.ndarray            # (P, k, M)
    D0: np.ndarray           # (P, k, k)
    DM: np.ndarray           # (P, k, k, M)

    def v(self, c):
        return self.v0 + (self.V @ c if self.V.shape[-1] else 0.0)

    def D(self, c):
        D = self.D0 + (self.DM @ c if self.DM.shape[-1] else 0.0)
        return 0.5 * (D + np.conj(np.swapaxes(D, 1, 2)))


def affine_data(base, dist, basis=None, merge=True):
    """Group the support of ``dist`` by fiber dimension and precompute."""
    groups = []
    dims = dist.dims()
    M = basis.size if basis is not None else 0
    for k in sorted(set(dims[dims > 0])):
        idx = np.flatnonzero(dims == k)
        pts = dist.points[idx]
        F = np.array([dist.fibers[i] for i in idx])  # (P, n, k)
        a0 = base_covector(base, pts)
        _, dzb = base_covector_derivatives(base, pts)
        v0 = np.einsum("pj,pjk->pk", a0, F)
        D0 = -0.5 * np.einsum("pka,pkj,pjb->pab", np.conj(F), dzb, F)
        if M:
            _, g, H = basis.data(pts)
            V = np.einsum("pmj,pjk->pkm", g, F)
            DM = -0.5 * np.einsum("pia,pmij,pjb->pabm", np.conj(F), H, F)
        else:
            V = np.zeros((len(idx), k, 0), complex)
            DM = np.zeros((len(idx), k, k, 0), complex)
        g = AffineData(pts, idx, int(k), v0, V, D0, DM)
        groups.append(_merge_duplicates(g) if merge else g)
    return groups


def _merge_duplicates(g, digits=10):
    """Drop points whose constraint coincides with an earlier one.

    For a one-dimensional fiber the constraint ``1/2 |v0 + V c|^2 <= t D(c)``
    only depends on the real quadratic data (|v0|^2, Re conj(v0) V, Re V^* V)
    and on D, so rows that agree there are redundant (this happens on domains
    with a symmetry group).  ``index`` keeps every merged point for reporting.
    """
    if g.k != 1 or len(g.v0) < 2:
        return g
    v0, V = g.v0[:, 0], g.V[:, 0, :]
    sig = np.column_stack([
        np.abs(v0) ** 2,
        (np.conj(v0)[:, None] * V).real,
        np.einsum("pm,pl->pml", np.conj(V), V).real.reshape(len(v0), -1),
        g.D0[:, 0, 0].real,
        g.DM[:, 0, 0, :].real,
    ])
    scale = np.maximum(np.max(np.abs(sig), axis=1, keepdims=True), 1e-300)
    key = np.round(sig / scale, digits) * 1.0
    key = np.column_stack([key, np.round(np.log10(scale[:, 0]), digits)])
    _, first = np.unique(key, axis=0, return_index=True)
    first = np.sort(first)
    if len(first) == len(v0):
        return g
    return AffineData(g.points[first], g.index[first], 1, g.v0[first], g.V[first],
                      g.D0[first], g.DM[first])


def _ratios(group, c, atol=ATOL):
    v = group.v(c)
    D = group.D(c)
    if group.k == 1:
        A = 0.5 * np.abs(v[:, 0]) ** 2
        d = D[:, 0, 0].real
        out = np.where(d > atol, A / np.where(d > atol, d, 1.0), np.inf)
        out = np.where((A <= atol * atol) & (d >= -atol), 0.0, out)
        return out
    out = np.empty(len(v))
    for i in range(len(v)):
        W = 0.5 * np.outer(np.conj(v[i]), v[i])
        try:
            out[i] = calc.sup_ratio(W, D[i], atol=atol)
        except calc.InvalidFormError:
            out[i] = np.inf
    return out


def _surrogate(groups, c, atol=ATOL):
    """Finite stand-in for the ratio: exact where admissible, penalized elsewhere."""
    worst = 0.0
    for g in groups:
        v = g.v(c)
        D = g.D(c)
        if g.k == 1:
            A = 0.5 * np.abs(v[:, 0]) ** 2
            d = D[:, 0, 0].real
            ok = d > atol
            r = np.where(ok, A / np.where(ok, d, 1.0), BIG * (1.0 + atol - d + A))
            r = np.where((A <= atol * atol) & (d >= -atol), 0.0, r)
            worst = max(worst, float(np.max(r)))
        else:
            lam = np.linalg.eigvalsh(D)[:, 0]
            r = _ratios(g, c, atol)
            r = np.where(np.isfinite(r), r, BIG * (1.0 + np.maximum(atol - lam, 0.0)))
            worst = max(worst, float(np.max(r)))
    return worst


def _sizes(groups, c):
    if not groups:
        return np.zeros(0)
    return np.concatenate([np.linalg.norm(g.v(c), axis=1) for g in groups])


def n_of_form(a, dist, atol=ATOL, groups=None, detail=False):
    """sup over the sampled support of the wedge/dbar ratio (+inf allowed)."""
    if groups is None:
        groups = affine_data(a.base, dist, a.basis if a.has_gauge else None)
    if not groups:
        return (0.0, []) if detail else 0.0

    def coeffs_for(g):
        M = g.V.shape[-1]
        if not M:
            return np.zeros(0)
        return a.coeffs if a.coeffs is not None else np.zeros(M)

    per = [(g, _ratios(g, coeffs_for(g), atol)) for g in groups]
    value = max(float(np.max(r)) for _, r in per)
    if not detail:
        return value
    rows = []
    for g, r in per:
        for i, ri in zip(g.index, r):
            rows.append((float(ri), int(i)))
    rows.sort(key=lambda t: (-t[0], t[1]))
    return value, rows


def size_norm(a, null_dist):
    """sup of |alpha(Z)| over unit vectors Z in the sampled null fibers."""
    groups = affine_data(a.base, null_dist, a.basis if a.has_gauge else None)
    if not groups:
        return 0.0
    c = a.coeffs if a.has_gauge else np.zeros(0)
    return float(np.max(_sizes(groups, c)))


# ---------------------------------------------------------------------------
# optimization of the gauge
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerConfig:
    starts: int = 8
    max_evals: int = 2000
    seed: int = 0
    coef_bound: float = 1e3
    bisection_rel_tol: float = 1e-4
    bisection_max_steps: int = 40
    use_convex: bool = True
    atol: float = ATOL


@dataclass
class NormEstimate:
    value: float
    coeffs: np.ndarray
    basis_id: str
    K: float
    per_point: list
    size: float
    trace: dict
    seed: int
    upper_bound: bool = True

    def to_json(self):
        return {
            "value": _jnum(self.value),
            "upperBound": self.upper_bound,
            "coefficients": [float(x) for x in self.coeffs],
            "basis": self.basis_id,
            "K": _jnum(self.K),
            "size": _jnum(self.size),
            "perPoint": self.per_point,
            "seed": self.seed,
            "trace": self.trace,
        }


def _jnum(x):
    x = float(x)
    if np.isfinite(x):
        return x
    return "inf" if x > 0 else "-inf"


NORM_ESTIMATE_SCHEMA = {
    "type": "object",
    "required": ["value", "upperBound", "coefficients", "basis", "K", "size", "perPoint",
                 "seed", "trace"],
    "properties": {
        "value": {"anyOf": [{"type": "number", "minimum": 0}, {"const": "inf"}]},
        "upperBound": {"type": "boolean"},
        "coefficients": {"type": "array", "items": {"type": "number"}},
        "basis": {"type": "string"},
        "K": {"anyOf": [{"type": "number"}, {"const": "inf"}]},
        "size": {"anyOf": [{"type": "number"}, {"const": "inf"}]},
        "perPoint": {"type": "array"},
        "seed": {"type": "integer"},
        "trace": {"type": "object"},
    },
}


def _convex_step(groups, null_groups, t, K, cfg, M):
    """min s such that wedge <= t dbar + s at every point (and sizes <= K)."""
    import cvxpy as cp

    c = cp.Variable(M)
    s = cp.Variable()
    cons = [cp.norm(c, "inf") <= cfg.coef_bound]
    for g in groups:
        if g.k == 1:
            vr = g.v0[:, 0].real + g.V[:, 0, :].real @ c
            vi = g.v0[:, 0].imag + g.V[:, 0, :].imag @ c
            d = g.D0[:, 0, 0].real + g.DM[:, 0, 0, :].real @ c
            cons.append(0.5 * cp.square(vr) + 0.5 * cp.square(vi) <= t * d + s)
            continue
        k = g.k
        for i in range(len(g.v0)):
            Dc = g.D0[i] + sum(g.DM[i, :, :, m] * c[m] for m in range(M))
            v = g.v0[i] + g.V[i] @ c
            top = cp.hstack([t * Dc + s * np.eye(k), cp.reshape(cp.conj(v), (k, 1)) / np.sqrt(2)])
            bot = cp.hstack([cp.reshape(v, (1, k)) / np.sqrt(2), np.ones((1, 1))])
            X = cp.vstack([top, bot])
            Xr = cp.bmat([[cp.real(X), -cp.imag(X)], [cp.imag(X), cp.real(X)]])
            S = cp.Variable((2 * k + 2, 2 * k + 2), PSD=True)
            cons.append(S == 0.5 * (Xr + Xr.T))
    if np.isfinite(K):
        for g in null_groups:
            for j in range(g.k):
                vr = g.v0[:, j].real + g.V[:, j, :].real @ c
                vi = g.v0[:, j].imag + g.V[:, j, :].imag @ c
                if g.k == 1:
                    cons.append(cp.sqrt(cp.square(vr) + cp.square(vi)) <= K)
            if g.k > 1:
                for i in range(len(g.v0)):
                    v = g.v0[i] + g.V[i] @ c
                    cons.append(cp.norm(cp.hstack([cp.real(v), cp.imag(v)])) <= K)
    prob = cp.Problem(cp.Minimize(s), cons)
    for solver in ("CLARABEL", "SCS"):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                prob.solve(solver=solver)
            if c.value is not None and prob.status in ("optimal", "optimal_inaccurate"):
                return float(s.value), np.asarray(c.value, float)
        except Exception as exc:  # solver failure: try the next one
            log.debug("solver %s failed: %s", solver, exc)
    return np.inf, None


def optimize_n(base, dist, basis=None, K=np.inf, cfg=None, null_dist=None):
    """Upper estimate of n_K(dist) over gauges in ``basis``.

    A multistart Nelder-Mead search on a penalized sup-ratio gives a first
    candidate; bisection on the level ``t`` with a convex feasibility problem
    refines it.  Every reported number is the ratio of an actual gauge form
    evaluated on the sample, so the value bounds the true infimum from above
    (up to sampling).
    """
    cfg = cfg or OptimizerConfig()
    null_dist = dist if null_dist is None else null_dist
    M = basis.size if basis is not None else 0
    groups = affine_data(base, dist, basis)
    null_groups = groups if null_dist is dist else affine_data(base, null_dist, basis)
    trace = {"starts": [], "bisection": []}
    if not groups:
        return NormEstimate(0.0, np.zeros(M), basis.id if basis else "none", K, [], 0.0,
                            {"note": "empty support"}, cfg.seed)

    def admissible(c):
        return not np.isfinite(K) or not null_groups or np.max(_sizes(null_groups, c)) < K

    def value_of(c):
        if not admissible(c):
            return np.inf
        return max(float(np.max(_ratios(g, c, cfg.atol))) for g in groups)

    best_c = np.zeros(M)
    best = value_of(best_c)
    if M:
        rng = np.random.default_rng(cfg.seed)

        def objective(c):
            val = _surrogate(groups, c, cfg.atol)
            if np.isfinite(K) and null_groups:
                excess = np.max(_sizes(null_groups, c)) - K
                if excess >= 0:
                    val = max(val, BIG * (1.0 + excess))
            return val

        for s in range(cfg.starts):
            x0 = np.zeros(M) if s == 0 else rng.normal(scale=1.0, size=M) / np.sqrt(M)
            res = minimize(objective, x0, method="Nelder-Mead",
                           options={"maxfev": cfg.max_evals, "xatol": 1e-8, "fatol": 1e-10,
                                    "adaptive": True})
            val = value_of(res.x)
            trace["starts"].append(_jnum(val))
            if val < best:
                best, best_c = val, np.asarray(res.x, float)
        if cfg.use_convex:
            best, best_c = _bisect(groups, null_groups, K, cfg, M, best, best_c,
                                   value_of, trace)
    value, rows = n_of_form(DAngeloForm(base, basis, best_c) if M else DAngeloForm(base),
                            dist, cfg.atol, groups=groups, detail=True)
    if not admissible(best_c):
        value = np.inf
    per_point = [{"index": i, "point": _cplx(dist.points[i]), "ratio": _jnum(r)}
                 for r, i in rows[:5]]
    size = float(np.max(_sizes(null_groups, best_c))) if null_groups else 0.0
    return NormEstimate(value, best_c, basis.id if basis else "none", K, per_point, size,
                        trace, cfg.seed)


def _bisect(groups, null_groups, K, cfg, M, best, best_c, value_of, trace):
    hi = best
    if not np.isfinite(hi):
        hi = 1.0
        while hi < 1e8:
            s, c = _convex_step(groups, null_groups, hi, K, cfg, M)
            trace["bisection"].append([hi, _jnum(s)])
            if c is not None and s <= 0:
                val = value_of(c)
                if val < best:
                    best, best_c = val, c
                break
            hi *= 4.0
        else:
            return best, best_c
    lo = 0.0
    for _ in range(cfg.bisection_max_steps):
        if hi - lo <= cfg.bisection_rel_tol * hi:
            break
        t = 0.5 * (lo + hi)
        s, c = _convex_step(groups, null_groups, t, K, cfg, M)
        val = value_of(c) if c is not None else np.inf
        trace["bisection"].append([t, _jnum(s), _jnum(val)])
        if c is not None and s <= 1e-12:
            hi = t
            if val < best:
                best, best_c = val, c
        else:
            lo = t
    return best, best_c


def _cplx(p):
    return [[float(x.real), float(x.imag)] for x in np.asarray(p, complex)]


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------

def _test_gauge(a):
    if a.has_gauge:
        return a
    n = a.base.n
    basis = GaugeBasis("test", n, (lambda z, zb: 0.5 * (z[n - 1] + zb[n - 1]),), {})
    return DAngeloForm(a.base, basis, np.array([1.0]))


def consistency_suite(a, null_dist):
    """Residuals of three identities on the sampled null fibers.

    ``gauge``: alpha of exp(f) r equals alpha of r plus df on the fibers.
    ``closed``: d alpha vanishes on pairs of null vectors (both the (2,0) and
    the (1,1) parts).  ``hermitian``: the dbar form is conjugate symmetric.
    """
    mask = null_dist.support_mask()
    if not np.any(mask):
        return {"skipped": True, "reason": "empty null distribution"}
    idx = np.flatnonzero(mask)
    pts = null_dist.points[idx]
    ag = _test_gauge(a)
    shifted = ag.shifted_base()
    cov_shift = base_covector(shifted, pts)
    cov_gauge = ag.covector(pts)
    dz, dzb = base_covector_derivatives(a.base, pts)
    r_gauge = r_closed = r_herm = 0.0
    for q, i in enumerate(idx):
        F = null_dist.fibers[i]
        r_gauge = max(r_gauge, float(np.max(np.abs((cov_shift[q] - cov_gauge[q]) @ F))))
        G, J = dz[q], dzb[q]
        two_zero = F.T @ (G - G.T) @ F
        one_one = 0.5 * F.conj().T @ (J.conj().T - J) @ F
        r_closed = max(r_closed, float(np.max(np.abs(two_zero), initial=0.0)),
                       float(np.max(np.abs(one_one), initial=0.0)))
        D = -0.5 * F.conj().T @ J @ F
        r_herm = max(r_herm, float(np.max(np.abs(D - D.conj().T), initial=0.0)))
    return {"skipped": False, "points": int(len(idx)), "gauge": r_gauge,
            "closed": r_closed, "hermitian": r_herm,
            "thresholds": {"gauge": 1e-5, "closed": 1e-4, "hermitian": 1e-6}}


def sigma_distance(r1, r2, null_dist, depth=1e-4):
    """sup over null fibers of |Z f| where r2 = exp(f) r1.

    ``df`` at a boundary point is the limit of ``d log(r2 / r1)`` from inside;
    it is evaluated at three depths along the inward normal and extrapolated.
    """
    mask = null_dist.support_mask()
    if not np.any(mask):
        return 0.0
    worst = 0.0
    for i in np.flatnonzero(mask):
        p = null_dist.points[i]
        _, g1, _ = calc.jet_data(r1, p)
        N = np.conj(g1) / np.sum(np.abs(g1) ** 2)
        est = []
        for s in (depth, 2 * depth, 4 * depth):
            q = p - s * N
            v1, d1, _ = calc.jet_data(r1, q)
            v2, d2, _ = calc.jet_data(r2, q)
            if v1 >= 0 or v2 >= 0 or v2 / v1 <= 0:
                raise InvalidPairError(f"r2/r1 is not positive inside near {p!r}")
            est.append(d2 / v2 - d1 / v1)
        e1, e2, e4 = est
        df = (8 * e1 - 6 * e2 + e4) / 3.0  # removes the O(s) and O(s^2) terms
        worst = max(worst, float(np.max(np.abs(df @ null_dist.fibers[i]))))
    return worst


def key_lemma_sides(f, bp, Z):
    """Both sides of N(ddbar r(Z, Zbar)) = d alpha(Z, Zbar) - |alpha(Z)|^2 / 2 at ``bp``.

    ``Z`` is extended by projecting the constant vector onto ker dr at nearby
    points, so that ``Z r = 0`` identically.  Returns ``(lhs, rhs)``.
    """
    Z = np.asarray(Z, complex)

    def phi(q):
        _, g, B = calc.jet_data(f, q)
        N = np.conj(g) / np.sum(np.abs(g) ** 2, axis=1, keepdims=True)
        Zq = Z[None, :] - (g @ Z)[:, None] * N
        return 0.5 * np.real(np.einsum("pa,pab,pb->p", np.conj(Zq), B, Zq))

    dphi, _ = calc.wirtinger_fd(phi, bp.p[None])
    lhs = complex(bp.N @ dphi[0])
    _, J = base_covector_derivatives(f, bp.p[None])
    alpha = complex(base_covector(f, bp.p[None])[0] @ Z)
    rhs = complex(0.5 * Z.conj() @ J[0].conj().T @ Z) - 0.5 * abs(alpha) ** 2
    return lhs, rhs
