import json

import jsonschema
import numpy as np
import pytest
from hypothesis import given, strategies as st

from levicore import dangelo as A, df_index as X, examples, hypersurface as hs


@pytest.fixture(scope="module")
def ball_grid():
    f = examples.ball().f
    return f, X.collar_grid(f, hs.sample_boundary(f, "random", 80, seed=0))


def test_collar_points_are_inside(ball_grid):
    f, grid = ball_grid
    assert np.all(grid.r < 0) and np.all(grid.r > -grid.eps0)
    for d in grid.strata:
        sel = grid.depths == d
        assert np.allclose(grid.r[sel], -d, rtol=1e-8)


def test_ball_scan_is_one(ball_grid):
    f, grid = ball_grid
    res = X.df_scan(f, grid)
    assert res.delta >= 0.999
    assert all(v > 0 for _, v in res.defect_curve)


@given(st.floats(0.01, 0.99))
def test_defect_is_monotone_in_delta(delta):
    f = examples.worm().f
    grid = X.collar_grid(f, hs.sample_boundary(f, "param", 40), strata=2)
    lo = X.psh_defect(f, delta, grid)
    hi = X.psh_defect(f, min(delta + 0.01, 0.999), grid)
    assert hi <= lo + 1e-12


def test_gauge_formula_matches_direct_hessian(worm_domain):
    # M_delta of exp(f) r computed in closed form equals the one from its own jets
    f = worm_domain.f
    basis = A.radial_basis(2, 3, half_width=1.0)
    c = np.array([0.3, -0.2, 0.1])
    grid = X.collar_grid(f, hs.sample_boundary(f, "param", 40), strata=2)
    shifted = A.DAngeloForm(f, basis, c).shifted_base()
    for delta in (0.2, 0.7):
        via_gauge = X.psh_defect(f, delta, grid, basis=basis, coeffs=c)
        direct = X.psh_defect(shifted, delta, grid)
        assert via_gauge == pytest.approx(direct, rel=1e-8, abs=1e-10)


def test_bad_delta_grid(ball_grid):
    f, grid = ball_grid
    with pytest.raises(ValueError):
        X.df_scan(f, grid, delta_grid=[0.5, 1.0])


def test_grid_with_outside_point_is_rejected(ball_grid):
    f, grid = ball_grid
    bad = X.CollarGrid(grid.points * 2, grid.depths, -grid.r, grid.strata, grid.eps0, 0.0)
    with pytest.raises(X.InvalidGridError):
        X.df_scan(f, bad)


def test_quartic_scan_with_gauge_basis():
    dom = examples.quartic()
    grid = X.collar_grid(dom.f, hs.sample_boundary(dom.f, "param", 200))
    res = X.df_scan(dom.f, grid, basis=A.make_basis("poly:4", dom.f),
                    cfg=A.OptimizerConfig(max_evals=50))
    assert res.delta >= 0.95


def test_report_schema(ball_grid):
    f, grid = ball_grid
    ra = X.df_scan(f, grid)
    rep = X.DFReport(f.describe(), ra, None, grid.spec(), {"sample": 0})
    blob = json.loads(json.dumps(rep.to_json()))
    jsonschema.validate(blob, X.DF_REPORT_SCHEMA)
    assert blob["agreementGap"] is None


def test_key_lemma_check_needs_null_vector(worm_domain):
    bp = hs.boundary_point(worm_domain.f, worm_domain.core_locus(8)[3])
    assert X.key_lemma_check(worm_domain.f, bp, [1.0, 0.0]) < 1e-4
    with pytest.raises(A.IllPosedFiberError):
        X.key_lemma_check(worm_domain.f, bp, [0.0, 1.0])


def test_worm_without_gauge_has_no_positive_exponent(worm_domain):
    # the canonical defining function is pluriharmonic along the annulus, so no
    # stratum close to the boundary admits a positive exponent
    f = worm_domain.f
    sample = hs.sample_boundary(f, "param", 1500)
    chart = [bp for bp, keep in zip(sample, worm_domain.patch(sample.positions())) if keep]
    grid = X.collar_grid(f, chart, strata=5)
    res = X.df_scan(f, grid)
    assert res.delta < 0.05
    assert all(d < 0.05 for _, d in res.trace["strata"][1:])
