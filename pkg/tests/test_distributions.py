import json

import jsonschema
import numpy as np
import pytest
from hypothesis import given, strategies as st

from levicore import distributions as D, examples, hypersurface as hs


def test_ball_null_distribution_is_empty():
    f = examples.ball().f
    null = D.levi_null(f, hs.sample_boundary(f, "random", 100, seed=0))
    assert null.is_empty()
    assert D.iterate_to_core(null).k == 0


def test_quartic_null_support_is_the_circle(quartic_pipeline):
    null = quartic_pipeline["null"]
    sup = null.support()
    assert len(sup) > 0
    assert np.max(np.abs(sup[:, 0])) < 1e-6
    assert np.allclose(np.abs(sup[:, 1]), 1.0)


def test_quartic_core_is_trivial_after_one_step(quartic_pipeline):
    res = D.iterate_to_core(quartic_pipeline["null"])
    assert res.stabilized and res.k == 1 and res.core.is_empty()


def test_axes_example_needs_two_steps():
    A = D.axes_example(101)
    scale = 1.2 * A.meta["spacing"]
    d1 = D.derived(A, scale=scale)
    assert d1.dims()[len(A.points) // 2] == 2
    res = D.iterate_to_core(A, scale=scale)
    assert res.k == 2 and res.core.is_empty()


def test_derived_never_grows(quartic_pipeline):
    null = quartic_pipeline["null"]
    d1 = D.derived(null)
    assert np.all(d1.dims() <= null.dims())


def test_json_roundtrip_and_schema(quartic_pipeline):
    null = quartic_pipeline["null"]
    blob = json.loads(json.dumps(null.to_json()))
    jsonschema.validate(blob, D.DISTRIBUTION_SCHEMA)
    back = D.SampledDistribution.from_json(blob)
    assert np.allclose(back.points, null.points)
    assert np.array_equal(back.dims(), null.dims())
    assert D.same_distribution(back, null)


@given(st.floats(0.1, 3.0), st.integers(3, 40))
def test_hausdorff_of_shifted_circle(shift, m):
    th = 2 * np.pi * np.arange(m) / m
    a = np.column_stack([np.cos(th), np.sin(th)])
    assert D.hausdorff(a, a + [shift, 0]) == pytest.approx(shift, rel=1e-9)
    assert D.hausdorff(a, a) == 0.0


def test_tangent_of_a_line_in_the_plane():
    t = np.linspace(-1, 1, 41)
    cloud = np.column_stack([t, 0 * t])
    est = D.tangent_estimate(cloud, cloud[20], scale=0.2)
    assert est.dim == 1
    assert abs(abs(est.basis[0, 0]) - 1) < 1e-9


def test_zero_holomorphic_dimension_of_circle():
    th = 2 * np.pi * np.arange(200) / 200
    A = np.column_stack([np.zeros(200), np.exp(1j * th)])
    fiber = np.array([[1.0], [0.0]], complex)
    assert D.zero_holo_dim_check(A, A[0], fiber)


def test_annulus_has_positive_holomorphic_dimension(worm_domain):
    A = worm_domain.core_locus(3000)
    fiber = np.array([[1.0], [0.0]], complex)
    assert not D.zero_holo_dim_check(A, A[len(A) // 2], fiber)
