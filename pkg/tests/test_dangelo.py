import json

import jsonschema
import numpy as np
import pytest
from hypothesis import given, strategies as st

from levicore import dangelo as A, distributions as D, examples, hypersurface as hs
from levicore.hypersurface import DefiningFunction
from levicore import calc

from conftest import WORM_OPT


def _annulus_points(worm_domain, count=60):
    f = worm_domain.f
    return [hs.boundary_point(f, p) for p in worm_domain.core_locus(count)]


def test_unshifted_form_on_the_annulus_is_degenerate(worm_pipeline):
    a = A.DAngeloForm(worm_pipeline["f"])
    assert A.n_of_form(a, worm_pipeline["core"].core) == np.inf


def test_annulus_closed_form_of_the_base_covector(worm_domain):
    # on {w = 0} the form is i beta dz / z
    f = worm_domain.f
    for bp in _annulus_points(worm_domain, 12):
        a = A.base_covector(f, bp.p)[0]
        assert a[0] == pytest.approx(1j / bp.p[0], abs=1e-10)


def test_dbar_of_radial_gauge_on_annulus(worm_domain):
    # gauge f = t, f' = 1, f'' = 0: dbar term vanishes, wedge = (1 + 1) / (2|z|^2)
    basis = A.radial_basis(2, 2, half_width=1.0)
    a = A.DAngeloForm(worm_domain.f, basis, np.array([1.0, 0.0]))  # T_1(t) = t
    F = np.array([[1.0], [0.0]], complex)
    for bp in _annulus_points(worm_domain, 6):
        z2 = abs(bp.p[0]) ** 2
        assert abs(A.dbar_alpha(a, bp, F)[0, 0]) < 1e-7
        assert A.wedge_alpha(a, bp, F)[0, 0].real == pytest.approx(1.0 / z2, rel=1e-8)


def test_fiber_outside_null_space_is_rejected(worm_domain):
    bp = _annulus_points(worm_domain, 4)[0]
    with pytest.raises(A.IllPosedFiberError):
        A.dbar_alpha(A.DAngeloForm(worm_domain.f), bp, np.array([[0.0], [1.0]], complex))


@pytest.mark.parametrize("which", ["worm", "quartic"])
def test_consistency_suite(which, worm_pipeline, quartic_pipeline):
    pipe = worm_pipeline if which == "worm" else quartic_pipeline
    sub = _subsample(pipe["null"], 50)
    res = A.consistency_suite(A.DAngeloForm(pipe["f"]), sub)
    assert not res["skipped"] and res["points"] == 50
    for key, tol in res["thresholds"].items():
        assert res[key] < tol, key


def _subsample(d, k):
    idx = np.flatnonzero(d.support_mask())
    pick = idx[np.linspace(0, len(idx) - 1, k).astype(int)]
    return D.SampledDistribution(d.kind, d.points[pick], [d.fibers[i] for i in pick],
                                 d.source_tol, d.iteration, dict(d.meta))


def test_sigma_distance_detects_the_gauge(worm_pipeline):
    f = worm_pipeline["f"]
    sub = _subsample(worm_pipeline["null"], 10)
    assert A.sigma_distance(f, f, sub) < 1e-8
    g = DefiningFunction("g", 2, lambda z, zb: calc.exp(0.5 * (z[0] + zb[0])) * f.expr(z, zb),
                         f.box)
    # Z f for f = Re z and Z = d/dz is 1/2
    assert A.sigma_distance(f, g, sub) == pytest.approx(0.5, rel=1e-5)


def test_sigma_distance_rejects_sign_flip(worm_pipeline):
    f = worm_pipeline["f"]
    neg = DefiningFunction("neg", 2, lambda z, zb: -1.0 * f.expr(z, zb), f.box)
    with pytest.raises(A.InvalidPairError):
        A.sigma_distance(f, neg, _subsample(worm_pipeline["null"], 3))


def test_quartic_norm_is_zero(quartic_pipeline):
    est = A.optimize_n(quartic_pipeline["f"], quartic_pipeline["null"])
    assert est.value == 0.0


def test_norm_estimate_json(worm_pipeline):
    basis = A.radial_basis(2, 8, half_width=1.0)
    est = A.optimize_n(worm_pipeline["f"], worm_pipeline["core"].core, basis, cfg=WORM_OPT)
    blob = json.loads(json.dumps(est.to_json()))
    jsonschema.validate(blob, A.NORM_ESTIMATE_SCHEMA)
    assert blob["basis"] == basis.id
    # the reported value is the actual ratio of the reported gauge
    a = A.DAngeloForm(worm_pipeline["f"], basis, est.coeffs)
    assert A.n_of_form(a, worm_pipeline["core"].core) == pytest.approx(est.value, rel=1e-9)


def test_size_bound_makes_problem_infeasible(worm_pipeline):
    basis = A.radial_basis(2, 8, half_width=1.0)
    est = A.optimize_n(worm_pipeline["f"], worm_pipeline["core"].core, basis, K=0.5,
                       cfg=WORM_OPT)
    # |alpha(d/dz)| >= beta / |z| > 0.5 everywhere on the annulus
    assert est.value == np.inf


@given(st.floats(0.2, 3.0))
def test_ratio_scales_quadratically_in_the_form(t):
    # for the affine data of a single point: v -> t v, D -> t D gives ratio -> t ratio
    g = A.AffineData(np.zeros((1, 2)), np.array([0]), 1, np.array([[1.0 + 0j]]),
                     np.zeros((1, 1, 0)), np.array([[[0.5 + 0j]]]), np.zeros((1, 1, 1, 0)))
    gt = A.AffineData(g.points, g.index, 1, t * g.v0, g.V, t * g.D0, g.DM)
    r = A._ratios(g, np.zeros(0))[0]
    assert A._ratios(gt, np.zeros(0))[0] == pytest.approx(t * r)


def test_key_lemma_sides_agree(worm_domain):
    Z = np.array([1.0, 0.0], complex)
    for bp in _annulus_points(worm_domain, 8):
        lhs, rhs = A.key_lemma_sides(worm_domain.f, bp, Z)
        assert abs(lhs - rhs) < 1e-4


def test_basis_spec_parsing():
    f = examples.worm().f
    assert A.make_basis("none", f) is None
    assert A.make_basis("radial:6", f).size == 6
    assert A.make_basis("poly:2", f).size > 0
    with pytest.raises(ValueError):
        A.make_basis("fourier:3", f)
