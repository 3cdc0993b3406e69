"""Complex differential calculus and small dense Hermitian linear algebra.

Conventions used throughout the package
---------------------------------------
Points of C^n are complex arrays of shape ``(n,)`` or batches ``(m, n)``.

A *Hermitian form* is stored as its matrix ``B`` acting on column vectors,
so that ``form(Z, conj(W)) = W^* B Z``.  ``hess_mixed`` therefore returns
``B[a, b] = d^2 f / dzbar_a dz_b`` (the conjugate of ``d^2 f / dz_a dzbar_b``
for real ``f``).  Restricting to a frame ``F`` (columns = vectors) is
``F^* B F``.

Two-forms are evaluated with the one-half convention
``(beta ^ gamma)(Z, Wbar) = 1/2 (beta(Z) gamma(Wbar) - beta(Wbar) gamma(Z))``,
so ``(alpha_10 ^ alpha_01)(Z, Zbar) = |alpha(Z)|^2 / 2``.  Every ``1/2`` that
comes from this convention is applied at the point where the form is built,
never hidden in a helper.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

EPS = np.finfo(float).eps
KERNEL_FLOOR = 1e-12
SYMMETRY_TOL = 1e-10


class EvaluationError(ValueError):
    """A defining function returned a non-finite value."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class NotSemidefiniteError(ValueError):
    """A form expected to be positive semidefinite has a negative direction."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class InvalidFormError(ValueError):
    """The right-hand form of a ratio problem is not semidefinite."""


# ---------------------------------------------------------------------------
# second-order jets
# ---------------------------------------------------------------------------

class Jet:
    """Truncated Taylor polynomial ``v + a e1 + b e2 + ab e1 e2`` with e1^2 = e2^2 = 0.

    Seeding one variable in ``e1`` and another in ``e2`` yields the mixed second
    derivative in the ``ab`` slot.  All parts are complex numpy arrays, so a
    single evaluation differentiates a whole batch of points.
    """

    __slots__ = ("v", "a", "b", "ab")
    __array_priority__ = 100

    def __init__(self, v, a=0.0, b=0.0, ab=0.0):
        self.v = v
        self.a = a
        self.b = b
        self.ab = ab

    @staticmethod
    def lift(x):
        return x if isinstance(x, Jet) else Jet(x)

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.v + other.v, self.a + other.a, self.b + other.b, self.ab + other.ab)
        return Jet(self.v + other, self.a, self.b, self.ab)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.v, -self.a, -self.b, -self.ab)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            return Jet(
                self.v * other.v,
                self.v * other.a + self.a * other.v,
                self.v * other.b + self.b * other.v,
                self.v * other.ab + self.a * other.b + self.b * other.a + self.ab * other.v,
            )
        return Jet(self.v * other, self.a * other, self.b * other, self.ab * other)

    __rmul__ = __mul__

    def reciprocal(self):
        return _chain(self, 1.0 / self.v, -1.0 / self.v**2, 2.0 / self.v**3)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, k):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise TypeError("Jet powers must be non-negative integers")
        out = Jet(np.ones_like(self.v))
        for _ in range(k):
            out = out * self
        return out


def _chain(x, g0, g1, g2):
    """Compose a scalar function with known value/derivatives g0, g1, g2 at x.v."""
    return Jet(g0, g1 * x.a, g1 * x.b, g1 * x.ab + g2 * x.a * x.b)


def exp(x):
    if isinstance(x, Jet):
        e = np.exp(x.v)
        return _chain(x, e, e, e)
    return np.exp(x)


def log(x):
    if isinstance(x, Jet):
        return _chain(x, np.log(x.v), 1.0 / x.v, -1.0 / x.v**2)
    return np.log(x)


def sin(x):
    if isinstance(x, Jet):
        s, c = np.sin(x.v), np.cos(x.v)
        return _chain(x, s, c, -s)
    return np.sin(x)


def cos(x):
    if isinstance(x, Jet):
        s, c = np.sin(x.v), np.cos(x.v)
        return _chain(x, c, -s, -c)
    return np.cos(x)


def sqrt(x):
    if isinstance(x, Jet):
        s = np.sqrt(x.v)
        return _chain(x, s, 0.5 / s, -0.25 / s**3)
    return np.sqrt(x)


def ramp_pow(x, k):
    """``max(0, Re x)^k`` for integer ``k >= 3``; the branch follows the real part."""
    if isinstance(x, Jet):
        t = np.maximum(np.real(x.v), 0.0)
        return _chain(x, t**k, k * t ** (k - 1), k * (k - 1) * t ** (k - 2))
    return np.maximum(np.real(x), 0.0) ** k


def real_part(x):
    """Evaluation value of a real-valued expression written in (z, zbar)."""
    return np.real(x.v if isinstance(x, Jet) else x)


# ---------------------------------------------------------------------------
# derivatives of a defining function
# ---------------------------------------------------------------------------

def _as_batch(p):
    p = np.asarray(p, dtype=complex)
    single = p.ndim == 1
    return np.atleast_2d(p), single


def _check_finite(values, pts, what):
    bad = ~np.all(np.isfinite(np.reshape(values, (len(pts), -1))), axis=1)
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise EvaluationError(f"non-finite {what} at point {pts[idx]!r}", point=pts[idx])


def evaluate(f, p):
    """Value of the real function ``f`` at ``p`` (batched)."""
    pts, single = _as_batch(p)
    z = [pts[:, j] for j in range(pts.shape[1])]
    val = real_part(f.expr(z, [np.conj(c) for c in z]))
    val = np.broadcast_to(val, (len(pts),)).astype(float)
    _check_finite(val, pts, "value")
    return val[0] if single else val


def _jet_pass(f, pts, bar_index, hol_index):
    """One jet evaluation with zbar_{bar_index} seeded in e1 and z_{hol_index} in e2."""
    m, n = pts.shape
    zero, one = np.zeros(m, complex), np.ones(m, complex)
    z, zb = [], []
    for j in range(n):
        z.append(Jet(pts[:, j], zero, one if j == hol_index else zero, zero))
        zb.append(Jet(np.conj(pts[:, j]), one if j == bar_index else zero, zero, zero))
    out = Jet.lift(f.expr(z, zb))
    return (np.broadcast_to(out.v, (m,)), np.broadcast_to(out.a, (m,)),
            np.broadcast_to(out.b, (m,)), np.broadcast_to(out.ab, (m,)))


def jet_data(f, p):
    """Value, (1,0) gradient and mixed Hessian form of ``f`` in one sweep.

    Returns ``(value, grad, hess)`` with ``grad[..., j] = df/dz_j`` and
    ``hess[..., a, b] = d^2 f / dzbar_a dz_b``.
    """
    pts, single = _as_batch(p)
    m, n = pts.shape
    value = np.empty(m)
    grad = np.empty((m, n), complex)
    hess = np.empty((m, n, n), complex)
    for a in range(n):
        for b in range(n):
            v, _, db, dab = _jet_pass(f, pts, a, b)
            hess[:, a, b] = dab
            if a == 0:
                grad[:, b] = db
        value[:] = np.real(v)
    _check_finite(hess, pts, "Hessian")
    _check_finite(grad, pts, "gradient")
    hess = 0.5 * (hess + np.conj(np.swapaxes(hess, -1, -2)))
    if single:
        return value[0], grad[0], hess[0]
    return value, grad, hess


def _fd_step(pts, order):
    return EPS ** (1.0 / order) * (1.0 + np.linalg.norm(pts, axis=1))


_D1 = ((-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0))  # /12h, fourth order


def _real_directions(n):
    dirs = []
    for j in range(n):
        e = np.zeros(n, complex)
        e[j] = 1.0
        dirs.append(e)
        dirs.append(1j * e)
    return dirs


def grad10_fd(f, p):
    """(1,0) gradient by fourth-order central differences in real coordinates."""
    pts, single = _as_batch(p)
    m, n = pts.shape
    h = _fd_step(pts, 5)[:, None]
    dirs = _real_directions(n)
    real_grad = np.zeros((m, 2 * n))
    for k, d in enumerate(dirs):
        acc = np.zeros(m)
        for s, c in _D1:
            acc += c * evaluate(f, pts + s * h * d)
        real_grad[:, k] = acc / (12.0 * h[:, 0])
    g = 0.5 * (real_grad[:, 0::2] - 1j * real_grad[:, 1::2])
    return g[0] if single else g


def wirtinger_fd(func, pts, order=5):
    """Derivatives ``d/dz_k`` and ``d/dzbar_k`` of an array-valued map, batched.

    ``func`` maps an ``(m, n)`` array of points to an ``(m, ...)`` array.
    Returns ``(dz, dzb)`` with the derivative index inserted at axis 1.
    """
    pts = np.atleast_2d(np.asarray(pts, complex))
    m, n = pts.shape
    h = _fd_step(pts, order)
    dirs = _real_directions(n)
    parts = []
    for d in dirs:
        acc = 0.0
        for s, c in _D1:
            acc = acc + c * np.asarray(func(pts + s * h[:, None] * d))
        parts.append(acc / (12.0 * h.reshape((m,) + (1,) * (np.ndim(acc) - 1))))
    dx = np.stack(parts[0::2], axis=1)
    dy = np.stack(parts[1::2], axis=1)
    return 0.5 * (dx - 1j * dy), 0.5 * (dx + 1j * dy)


def hess_mixed_fd(f, p):
    """Mixed Hessian form by nested fourth-order central differences."""
    pts, single = _as_batch(p)
    m, n = pts.shape
    # half the usual step: the worm's log|z|^2 phase makes the truncation term dominate
    h = 0.5 * _fd_step(pts, 6)[:, None]
    dirs = _real_directions(n)
    k2 = 2 * n
    real_hess = np.zeros((m, k2, k2))
    for i in range(k2):
        for j in range(i, k2):
            acc = np.zeros(m)
            for si, ci in _D1:
                for sj, cj in _D1:
                    acc += ci * cj * evaluate(f, pts + (si * dirs[i] + sj * dirs[j]) * h)
            real_hess[:, i, j] = real_hess[:, j, i] = acc / (144.0 * h[:, 0] ** 2)
    # d^2/dzbar_a dz_b = 1/4 (d_xa + i d_ya)(d_xb - i d_yb)
    xx = real_hess[:, 0::2, 0::2]
    yy = real_hess[:, 1::2, 1::2]
    xy = real_hess[:, 0::2, 1::2]  # [a, b] = d_xa d_yb
    yx = real_hess[:, 1::2, 0::2]  # [a, b] = d_ya d_xb
    hess = 0.25 * (xx + yy + 1j * (yx - xy))
    hess = 0.5 * (hess + np.conj(np.swapaxes(hess, -1, -2)))
    return hess[0] if single else hess


def grad10(f, p, backend="jet"):
    """(1,0) gradient ``(df/dz_1, ..., df/dz_n)`` of a real function.

    ``backend`` is ``"jet"`` (forward mode, exact to rounding) or ``"fd"``.
    """
    if backend == "fd":
        return grad10_fd(f, p)
    return jet_data(f, p)[1]


def hess_mixed(f, p, backend="jet"):
    """Mixed complex Hessian as a Hermitian form matrix, see module docstring."""
    if backend == "fd":
        return hess_mixed_fd(f, p)
    return jet_data(f, p)[2]


# ---------------------------------------------------------------------------
# Hermitian linear algebra
# ---------------------------------------------------------------------------

def symmetrize(H):
    H = np.asarray(H, dtype=complex)
    return 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))


def eig_herm(H):
    """Ascending real eigenvalues and orthonormal eigenvectors (columns)."""
    H = symmetrize(H)
    if H.shape[-1] > 16:
        raise ValueError("eig_herm is meant for forms of dimension <= 16")
    return np.linalg.eigh(H)


def kernel_basis(H, rel_tol=1e-6, ref=None, psd=True):
    """Orthonormal basis (columns) of the numerical kernel of ``H``.

    An eigenvalue counts as zero when ``|lambda| <= rel_tol * scale`` with
    ``scale = max(|lambda|_max, ref)``; ``ref`` supplies an external magnitude
    for forms whose own spectrum carries no scale (e.g. 1x1 Levi forms).  When
    the scale is below ``KERNEL_FLOOR`` the whole space is returned.  With
    ``psd=True`` a negative eigenvalue beyond the slack raises
    :class:`NotSemidefiniteError`.
    """
    w, v = eig_herm(H)
    k = len(w)
    scale = max(float(np.max(np.abs(w))) if k else 0.0, float(ref or 0.0))
    if scale <= KERNEL_FLOOR:
        return np.eye(k, dtype=complex)
    thresh = rel_tol * scale
    if psd and k and w[0] < -thresh:
        raise NotSemidefiniteError(
            f"form has eigenvalue {w[0]:.3e} below -{thresh:.1e}", min_eigenvalue=float(w[0]))
    return v[:, np.abs(w) <= thresh]


def sup_ratio(A, B, tol=1e-9, atol=0.0):
    """``inf{t > 0 : A <= t B}`` for Hermitian forms on a common frame.

    Returns ``0.0`` for ``A = 0`` and ``inf`` when ``A`` is positive somewhere on
    the numerical kernel of ``B``.  Raises :class:`InvalidFormError` if ``B`` has
    a negative eigenvalue beyond ``tol`` relative to its norm (or beyond
    ``atol``, whichever is larger).
    """
    A = symmetrize(A)
    B = symmetrize(B)
    if A.shape[-1] == 0:
        return 0.0
    wb, vb = np.linalg.eigh(B)
    wa = np.linalg.eigvalsh(A)
    a_scale = max(float(np.max(np.abs(wa))), 0.0)
    b_scale = float(np.max(np.abs(wb)))
    scale = max(a_scale, b_scale, KERNEL_FLOOR)
    cut = max(tol * scale, atol)
    if wb[0] < -cut:
        raise InvalidFormError(f"right-hand form has eigenvalue {wb[0]:.3e}")
    if a_scale <= max(KERNEL_FLOOR, atol * atol):
        return 0.0
    zero_b = wb <= cut
    if np.any(zero_b):
        K = vb[:, zero_b]
        if np.max(np.linalg.eigvalsh(symmetrize(K.conj().T @ A @ K))) > cut:
            return np.inf
    C = vb[:, ~zero_b]
    if C.shape[1] == 0:
        return 0.0
    ac = symmetrize(C.conj().T @ A @ C)
    bc = symmetrize(C.conj().T @ B @ C)
    lam = scipy.linalg.eigh(ac, bc, eigvals_only=True)
    return max(float(lam[-1]), 0.0)


def principal_angles(U, V):
    """Principal angles (radians, ascending) between column spans of U and V."""
    U = np.asarray(U, dtype=complex)
    V = np.asarray(V, dtype=complex)
    if U.shape[1] == 0 or V.shape[1] == 0:
        return np.zeros(0)
    return np.sort(scipy.linalg.subspace_angles(U, V))


def orthonormalize(vectors, tol=1e-10):
    """Orthonormal basis (columns) for the span of the given columns."""
    vectors = np.asarray(vectors, dtype=complex)
    if vectors.size == 0 or vectors.shape[1] == 0:
        return np.zeros((vectors.shape[0], 0), complex)
    u, s, _ = np.linalg.svd(vectors, full_matrices=False)
    if s[0] <= tol:
        return np.zeros((vectors.shape[0], 0), complex)
    return u[:, s > tol * s[0]]
