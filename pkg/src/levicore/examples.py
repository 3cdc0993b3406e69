"""Example domains with known answers, and the radial oracle for the annulus.

Worm conventions: ``t = log|z|^2``, ``h = beta * t`` and
``r = |w - exp(i h)|^2 - 1 + eta(t)`` with the sixth-power cap
``eta = cap * (max(0, t - t0)^6 + max(0, -t - t0)^6)``.  The flat annulus
``{w = 0, |t| <= t0}`` lies in the boundary and carries the Levi core.

On that annulus with a radial gauge ``f(t)`` the gauged D'Angelo form is
``(i beta + f'(t)) dz / z``, the wedge term is ``(beta^2 + f'^2) / (2|z|^2)``
and the dbar term is ``-f'' / (2|z|^2)``, so with ``g = f'`` the admissibility
condition at level ``lam`` reads ``beta^2 + g^2 <= -lam g'``.  The continuum
answer is ``beta * L / pi`` with ``L`` the length of the t-interval.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.stats import qmc

from . import calc
from .hypersurface import DefiningFunction


class UnknownDomainError(KeyError):
    pass


class BadParameterError(ValueError):
    pass


@dataclass(frozen=True)
class ExampleDomain:
    """A defining function plus what is known about it in closed form."""

    f: DefiningFunction
    locus: Callable | None = None         # count -> points of the weakly pseudoconvex locus
    null_fiber: Callable | None = None    # p -> exact (1,0) null fiber, n x k
    core_locus: Callable | None = None    # count -> points of the core support
    core_fiber: Callable | None = None    # p -> exact core fiber
    facts: dict = field(default_factory=dict)
    patch: Callable | None = None         # points -> mask of the chart used for the index scan

    @property
    def name(self):
        return self.f.name

    def metadata(self):
        return {"domain": self.f.describe(), "facts": self.facts}


def _sq(z, zb, j):
    return z[j] * zb[j]


def _box(n, half):
    return tuple((-half, half) for _ in range(2 * n))


def _empty(n):
    return lambda p: np.zeros((n, 0), complex)


# -- ball and ellipsoid ------------------------------------------------------

def ball(n=2):
    n = int(n)
    if n < 2:
        raise BadParameterError("ball needs n >= 2")
    f = DefiningFunction(
        "ball", n, lambda z, zb: sum(_sq(z, zb, j) for j in range(n)) - 1.0,
        _box(n, 1.25), {"n": n})
    return ExampleDomain(f, locus=lambda c: np.zeros((0, n), complex), null_fiber=_empty(n),
                         core_locus=lambda c: np.zeros((0, n), complex), core_fiber=_empty(n),
                         facts={"nullEmpty": True, "coreTrivial": True, "DF": 1.0,
                                "provenance": "trivial: strongly pseudoconvex"})


def ellipsoid(a=(1.0, 2.0)):
    a = tuple(float(x) for x in np.atleast_1d(a))
    if len(a) < 2 or min(a) <= 0:
        raise BadParameterError("ellipsoid needs at least two positive semi-axes")
    n = len(a)
    f = DefiningFunction(
        "ellipsoid", n,
        lambda z, zb: sum(_sq(z, zb, j) / (a[j] * a[j]) for j in range(n)) - 1.0,
        tuple(b for aj in a for b in [(-1.05 * aj, 1.05 * aj)] * 2), {"a": list(a)})
    return ExampleDomain(f, locus=lambda c: np.zeros((0, n), complex), null_fiber=_empty(n),
                         core_locus=lambda c: np.zeros((0, n), complex), core_fiber=_empty(n),
                         facts={"nullEmpty": True, "coreTrivial": True, "DF": 1.0,
                                "provenance": "trivial: strongly pseudoconvex"})


# -- quartic ------------------------------------------------------------------

def _circle(count):
    th = 2 * np.pi * np.arange(count) / count
    return np.column_stack([np.zeros(count), np.exp(1j * th)]).astype(complex)


def _quartic_strata(count):
    """Half the points on the weak circle, the rest spread over the boundary."""
    k = max(count // 2, 1)
    rest = count - k
    u = qmc.Halton(d=3, scramble=False).random(rest + 1)[1:]
    rho = u[:, 0]
    z1 = rho * np.exp(2j * np.pi * u[:, 1])
    z2 = np.sqrt(1 - rho ** 4) * np.exp(2j * np.pi * u[:, 2])
    return np.vstack([_circle(k), np.column_stack([z1, z2])])


def quartic():
    f = DefiningFunction(
        "quartic", 2, lambda z, zb: _sq(z, zb, 0) ** 2 + _sq(z, zb, 1) - 1.0,
        _box(2, 1.1), {}, strata=_quartic_strata)

    def null_fiber(p):
        if abs(p[0]) < 1e-12:
            return np.array([[1.0], [0.0]], complex)
        return np.zeros((2, 0), complex)

    return ExampleDomain(
        f, locus=_circle, null_fiber=null_fiber,
        core_locus=lambda c: np.zeros((0, 2), complex), core_fiber=_empty(2),
        facts={"weakLocus": "circle z1=0, |z2|=1", "nullFiber": "span d/dz1",
               "coreTrivial": True, "stabilization": 1, "n": 0.0, "DF": 1.0,
               "provenance": "derived: the circle has zero holomorphic dimension"})


# -- worm ---------------------------------------------------------------------

@dataclass(frozen=True)
class AnnulusProblem:
    """Radial norm problem for the class of d^c(beta log|z|^2) on r1 < |z| < r2."""

    r1: float
    r2: float
    beta: float
    m: int = 64

    def __post_init__(self):
        if not 0 < self.r1 < self.r2:
            raise BadParameterError("need 0 < r1 < r2")
        if self.m < 16:
            raise BadParameterError("mesh needs m >= 16")
        if self.beta < 0:
            raise BadParameterError("beta must be nonnegative")

    @property
    def length(self):
        """Length of the interval in t = log|z|^2."""
        return 2.0 * np.log(self.r2 / self.r1)

    def closed_form(self):
        return self.beta * self.length / np.pi


def worm(beta=1.0, t0=1.0, cap=1.0):
    beta, t0, cap = float(beta), float(t0), float(cap)
    if beta <= 0:
        raise BadParameterError("worm needs beta > 0")
    if t0 <= 0 or cap <= 0:
        raise BadParameterError("worm needs t0 > 0 and cap > 0")
    reach = cap ** (-1.0 / 6.0)  # eta reaches 1 at |t| = t0 + reach
    zmax = np.exp((t0 + reach) / 2) * 1.02

    def expr(z, zb):
        t = calc.log(z[0] * zb[0])
        e = calc.exp(1j * beta * t)
        eb = calc.exp(-1j * beta * t)
        eta = cap * (calc.ramp_pow(t - t0, 6) + calc.ramp_pow(-t - t0, 6))
        return (z[1] - e) * (zb[1] - eb) - 1.0 + eta

    def annulus(count, nt=None):
        """Polar grid on the flat annulus, angular step twice the radial step."""
        nt = nt or max(int(round(np.sqrt(count * t0 / np.pi))) + 1, 3)
        nth = max(count // nt, 4) if count else 4
        ts = np.linspace(-t0, t0, nt)
        th = 2 * np.pi * np.arange(nth) / nth
        T, TH = np.meshgrid(ts, th, indexing="ij")
        z = np.exp(T.ravel() / 2 + 1j * TH.ravel())
        return np.column_stack([z, np.zeros_like(z)])

    def strata(count):
        ann = annulus(max(3 * count // 4, 1))
        rest = count - len(ann)
        u = qmc.Halton(d=3, scramble=False).random(rest + 1)[1:]
        t = (2 * u[:, 0] - 1) * (t0 + 0.98 * reach)
        eta = cap * (np.maximum(t - t0, 0) ** 6 + np.maximum(-t - t0, 0) ** 6)
        psi = 2 * np.pi * u[:, 2]
        z = np.exp(t / 2 + 2j * np.pi * u[:, 1])
        w = np.exp(1j * beta * t) * (1 + np.sqrt(1 - eta) * np.exp(1j * psi))
        return np.vstack([ann, np.column_stack([z, w])])

    f = DefiningFunction(
        "worm", 2, expr, ((-zmax, zmax),) * 2 + ((-2.05, 2.05),) * 2,
        {"beta": beta, "t0": t0, "cap": cap}, strata=strata)

    def on_annulus(p):
        return abs(p[1]) < 1e-9 and abs(np.log(abs(p[0]) ** 2)) <= t0 + 1e-9

    def fiber(p):
        if on_annulus(p):
            return np.array([[1.0], [0.0]], complex)
        return np.zeros((2, 0), complex)

    prob = AnnulusProblem(np.exp(-t0 / 2), np.exp(t0 / 2), beta)
    n_val = prob.closed_form()
    return ExampleDomain(
        f, locus=annulus, null_fiber=fiber, core_locus=annulus, core_fiber=fiber,
        facts={"coreSupport": "annulus w=0, |log|z|^2| <= t0", "coreFiber": "span d/dz",
               "annulus": {"r1": prob.r1, "r2": prob.r2, "beta": beta},
               "nClosedForm": n_val, "DFClosedForm": 1.0 / (1.0 + n_val),
               "provenance": "derived: radial reduction on the flat annulus"},
        patch=lambda pts: np.abs(np.log(np.abs(np.atleast_2d(pts)[:, 0]) ** 2)) <= t0 + 1e-9)


# -- a domain that is not pseudoconvex ----------------------------------------

def dimple(a=4.0):
    a = float(a)

    def expr(z, zb):
        s = _sq(z, zb, 0) + _sq(z, zb, 1)
        return s - 1.0 - a * _sq(z, zb, 0) * _sq(z, zb, 1) + 0.5 * s ** 4

    f = DefiningFunction("dimple", 2, expr, _box(2, 1.3), {"a": a})
    return ExampleDomain(f, facts={"pseudoconvex": False,
                                   "provenance": "numerical: negative Levi eigenvalues"})


REGISTRY = {
    "ball": (ball, {"n": "int >= 2, default 2"}),
    "ellipsoid": (ellipsoid, {"a": "list of positive semi-axes, default [1, 2]"}),
    "quartic": (quartic, {}),
    "worm": (worm, {"beta": "float > 0, default 1", "t0": "float > 0, default 1",
                    "cap": "float > 0, default 1"}),
    "dimple": (dimple, {"a": "float, default 4 (not pseudoconvex)"}),
}


def make_domain(name, params=None):
    """Instantiate a registered example domain."""
    params = dict(params or {})
    if name not in REGISTRY:
        raise UnknownDomainError(f"unknown domain {name!r}; known: {sorted(REGISTRY)}")
    ctor, schema = REGISTRY[name]
    unknown = set(params) - set(schema)
    if unknown:
        raise BadParameterError(f"{name} does not take {sorted(unknown)}")
    return ctor(**params)


def list_domains():
    return {name: dict(schema) for name, (_, schema) in sorted(REGISTRY.items())}


# -- the annulus oracle -------------------------------------------------------

def _sweep_feasible(beta, lam, m, length):
    """Greedy sweep for the discretized condition at level ``lam``.

    Nodes g_0..g_{m-1} on the t-interval with trapezoid averaging of the
    left side:  beta^2 + (g_i^2 + g_{i+1}^2)/2 <= -lam (g_{i+1} - g_i)/dt.
    Starting from g_0 = c = lam/dt and always taking the largest admissible
    next value is optimal, since the budget for the next step increases with
    g_i on g_i <= c.
    """
    dt = length / (m - 1)
    c = lam / dt
    g = c
    for _ in range(m - 1):
        disc = 2 * c * c - (g - c) ** 2 - 2 * beta * beta
        if disc < 0:
            return False
        g = -c + np.sqrt(disc)
    return True


@dataclass(frozen=True)
class OracleResult:
    value: float
    raw: float
    m: int
    iterations: int
    lam_cap: float
    closed_form: float

    def to_json(self):
        return {"value": self.value, "raw": self.raw, "m": self.m,
                "iterations": self.iterations, "lamCap": self.lam_cap,
                "closedForm": self.closed_form}


def _bisect_level(beta, length, m, rel_tol, cap):
    if not _sweep_feasible(beta, cap, m, length):
        return np.inf, 0
    lo, hi = 0.0, min(cap, 4.0 * beta * length + 1e-300)
    while not _sweep_feasible(beta, hi, m, length):
        lo, hi = hi, min(2 * hi, cap)
    it = 0
    while hi - lo > rel_tol * hi and it < 200:
        mid = 0.5 * (lo + hi)
        if _sweep_feasible(beta, mid, m, length):
            hi = mid
        else:
            lo = mid
        it += 1
    return float(hi), it


def annulus_norm_oracle(prob, rel_tol=1e-12, lam_cap=None, extrapolate=True):
    """Smallest level at which some radial gauge satisfies the discretized condition.

    The sweep on ``m`` nodes overshoots the continuum value by a term that is
    linear in the mesh width (the first node may carry a very large
    derivative).  With ``extrapolate`` the reported value is the Richardson
    combination ``2 v(2m - 1) - v(m)`` of two nested meshes; ``raw`` keeps the
    plain ``m``-node value.
    """
    beta, L, m = float(prob.beta), prob.length, prob.m
    if beta == 0:
        return OracleResult(0.0, 0.0, m, 0, 0.0, 0.0)
    cap = lam_cap if lam_cap is not None else 1e6 * (beta * L + 1.0)
    raw, it = _bisect_level(beta, L, m, rel_tol, cap)
    value = raw
    if extrapolate and np.isfinite(raw):
        fine, it2 = _bisect_level(beta, L, 2 * m - 1, rel_tol, cap)
        value = 2.0 * fine - raw
        it += it2
    return OracleResult(float(value), float(raw), m, it, cap, prob.closed_form())


def oracle_convergence(prob, meshes=(32, 64, 128)):
    rows = []
    for m in meshes:
        res = annulus_norm_oracle(AnnulusProblem(prob.r1, prob.r2, prob.beta, m))
        rows.append({"m": m, "value": res.value, "raw": res.raw})
    return rows


# -- appendix norms -------------------------------------------------------------

@dataclass(frozen=True)
class AppendixNorms:
    l1: float
    linf: float
    n_annulus: float
    ratio: float
    degree: int

    def to_json(self):
        return {"L1": self.l1, "Linf": self.linf, "nA": self.n_annulus,
                "ratio": self.ratio, "degree": self.degree}


def _annulus_quadrature(prob, nr=48, nth=64):
    """Midpoint nodes and area weights (normalized to mean) on the annulus."""
    t_edges = np.linspace(np.log(prob.r1 ** 2), np.log(prob.r2 ** 2), nr + 1)
    t = 0.5 * (t_edges[1:] + t_edges[:-1])
    th = 2 * np.pi * (np.arange(nth) + 0.5) / nth
    T, TH = np.meshgrid(t, th, indexing="ij")
    z = np.exp(T / 2 + 1j * TH).ravel()
    w = np.exp(T).ravel()  # dA = (1/2) e^t dt dtheta
    return z, T.ravel(), w / w.sum()


def _laurent_features(z, d):
    cols = [np.ones_like(z.real)]
    for k in range(1, d + 1):
        for zk in (z ** k, z ** (-k)):
            cols.append(zk.real)
            cols.append(zk.imag)
    return np.column_stack(cols)


def appendix_norms(prob, degree=8, nr=48, nth=64):
    """Mean and sup distance from h = beta log|z|^2 to real parts of Laurent polynomials.

    Both minimizations are linear programs over the coefficients of
    ``Re(F)``; the L1 and Linf values are evaluated on the same quadrature so
    ``L1 <= Linf`` holds for every candidate.
    """
    beta = float(prob.beta)
    z, t, w = _annulus_quadrature(prob, nr, nth)
    h = beta * t
    if beta == 0:
        return AppendixNorms(0.0, 0.0, 0.0, float("nan"), degree)
    A = _laurent_features(z, degree)
    A = A / np.max(np.abs(A), axis=0)
    q, p = A.shape
    # Linf: min s  s.t. -s <= h - A c <= s
    cost = np.zeros(p + 1)
    cost[-1] = 1.0
    ub = np.vstack([np.hstack([-A, -np.ones((q, 1))]), np.hstack([A, -np.ones((q, 1))])])
    rhs = np.concatenate([-h, h])
    bounds = [(None, None)] * p + [(0, None)]
    res = linprog(cost, A_ub=ub, b_ub=rhs, bounds=bounds, method="highs")
    linf = float(np.max(np.abs(h - A @ res.x[:p])))
    # L1: min sum w_i e_i  s.t. -e <= h - A c <= e
    cost = np.concatenate([np.zeros(p), w])
    eye = sparse.identity(q, format="csr")
    ub = sparse.vstack([sparse.hstack([-A, -eye]), sparse.hstack([A, -eye])], format="csr")
    bounds = [(None, None)] * p + [(0, None)] * q
    res = linprog(cost, A_ub=ub, b_ub=rhs, bounds=bounds, method="highs")
    l1 = float(np.sum(w * np.abs(h - A @ res.x[:p])))
    n_a = annulus_norm_oracle(prob).value
    return AppendixNorms(l1, linf, n_a, l1 * l1 / (n_a * linf), degree)
