"""End-to-end acceptance checks.

Each test prints one ``PASS``/``FAIL`` line naming its criterion, then asserts.
All tolerances are pinned in the constants below.
"""
import time

import numpy as np
import pytest

from levicore import calc, cli, dangelo as A, df_index as X, distributions as D
from levicore import examples as E, hypersurface as hs

# criterion 1
STRONG_SAMPLES = 500
STRONG_MIN_LEVI = 0.1
STRONG_SCAN_MIN = 0.999
STRONG_SECONDS = 10.0
# criterion 2
AXES_GRID = 101
AXES_SCALE_FACTOR = 1.2
# criterion 3
QUARTIC_SAMPLES = 400
QUARTIC_HAUSDORFF_SPACINGS = 2.0
QUARTIC_SCAN_MIN = 0.95
QUARTIC_SECONDS = 60.0
# criterion 4
WORM_SAMPLES = 6000
WORM_BASES = ("radial:24", "radial:32")
WORM_FIBER_DEG = 5.0
WORM_CORE_VS_NULL = 0.10
WORM_VS_ORACLE = 0.05
WORM_ROUTES = 0.10
WORM_SECONDS = 600.0
WORM_OPT = A.OptimizerConfig(starts=2, max_evals=500, seed=0)
WORM_SCAN = A.OptimizerConfig(starts=2, max_evals=300, seed=0)
# criterion 5
HOMOGENEITY_REL = 0.005
MESH_REL = 0.005
# criterion 6
SUITE_POINTS = 50
LEMMA_POINTS = 20
LEMMA_TOL = 1e-4
AD_FD_POINTS = 100
AD_FD_TOL = 1e-5
# criterion 7
APPENDIX_RATIO_REL = 0.10
# criterion 8
DETERMINISM_DOMAIN = "quartic"


def report(n, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    return ok


def _real(pts):
    pts = np.atleast_2d(pts)
    out = np.empty((len(pts), 2 * pts.shape[1]))
    out[:, 0::2] = pts.real
    out[:, 1::2] = pts.imag
    return out


def _nn_spacing(pts):
    from scipy.spatial import cKDTree
    r = _real(pts)
    d, _ = cKDTree(r).query(r, k=2)
    return float(np.max(d[:, 1]))


@pytest.mark.parametrize("name", ["ball", "ellipsoid"])
def test_1_strong_pseudoconvexity(name):
    t = time.perf_counter()
    f = E.make_domain(name).f
    sample = hs.sample_boundary(f, "random", STRONG_SAMPLES, seed=0)
    pc = hs.pseudoconvexity_report(f, sample)
    null = D.levi_null(f, sample)
    core = D.iterate_to_core(null)
    rb = X.df_via_norm(f, core.core)
    ra = X.df_scan(f, X.collar_grid(f, sample))
    secs = time.perf_counter() - t
    ok = (len(sample) == STRONG_SAMPLES and null.is_empty() and core.core.is_empty()
          and pc["min_eigenvalue"] >= STRONG_MIN_LEVI and rb.df == 1.0
          and ra.delta >= STRONG_SCAN_MIN and secs <= STRONG_SECONDS)
    assert report(1, ok, f"{name}: minLevi={pc['min_eigenvalue']:.3f} routeB={rb.df} "
                         f"routeA={ra.delta:.4f} in {secs:.1f}s")


def test_2_axes_example():
    A0 = D.axes_example(AXES_GRID)
    scale = AXES_SCALE_FACTOR * A0.meta["spacing"]
    d1 = D.derived(A0, scale=scale)
    d2 = D.derived(d1, scale=scale)
    origin = int(np.argmin(np.linalg.norm(A0.points, axis=1)))
    res = D.iterate_to_core(A0, scale=scale)
    ok = (d1.dims()[origin] == 2 and int(np.max(d2.dims())) == 0
          and res.k == 2 and res.stabilized and res.core.is_empty())
    assert report(2, ok, f"dim D'(0)={d1.dims()[origin]} max dim D''={np.max(d2.dims())} "
                         f"k={res.k} history={res.history}")


def test_3_quartic():
    t = time.perf_counter()
    dom = E.make_domain("quartic")
    f = dom.f
    sample = hs.sample_boundary(f, "param", QUARTIC_SAMPLES)
    null = D.levi_null(f, sample)
    circle = dom.locus(QUARTIC_SAMPLES // 2)
    spacing = 2 * np.sin(np.pi / len(circle))
    haus = D.hausdorff(_real(null.support()), _real(circle))
    res = D.iterate_to_core(null)
    est = A.optimize_n(f, null)
    rb = X.df_via_norm(f, res.core)
    ra = X.df_scan(f, X.collar_grid(f, sample), basis=A.make_basis("poly:4", f),
                   cfg=A.OptimizerConfig(max_evals=200))
    secs = time.perf_counter() - t
    ok = (haus <= QUARTIC_HAUSDORFF_SPACINGS * spacing and res.k == 1 and res.stabilized
          and res.core.is_empty() and est.value == 0.0 and rb.df == 1.0
          and ra.delta >= QUARTIC_SCAN_MIN and secs <= QUARTIC_SECONDS)
    assert report(3, ok, f"hausdorff={haus:.2e} (spacing {spacing:.2e}) k={res.k} "
                         f"n={est.value} routeB={rb.df} routeA={ra.delta:.4f} in {secs:.1f}s")


def test_4_worm(worm_pipeline, worm_domain):
    t = time.perf_counter()
    f, sample, null = worm_pipeline["f"], worm_pipeline["sample"], worm_pipeline["null"]
    res = worm_pipeline["core"]
    core = res.core
    ann = worm_domain.core_locus(int(0.75 * WORM_SAMPLES))
    haus = D.hausdorff(_real(core.support()), _real(ann))
    spacing = _nn_spacing(ann)
    ez = np.array([[1.0], [0.0]], complex)
    worst = max(np.rad2deg(np.max(calc.principal_angles(F, ez)))
                for F in core.fibers if F.shape[1])
    degenerate = A.n_of_form(A.DAngeloForm(f), core)
    bases = [A.make_basis(b, f) for b in WORM_BASES]
    red = X.reduction_check(f, null, core, bases, cfg=WORM_OPT)
    big = red["rows"][-1]
    oracle = E.annulus_norm_oracle(E.AnnulusProblem(**worm_domain.facts["annulus"])).value
    rel_null = abs(big["null"] - oracle) / oracle
    rel_core = abs(big["core"] - oracle) / oracle
    agree = abs(big["null"] - big["core"]) / big["core"]
    rb = X.df_via_norm(f, core, bases[-1], cfg=WORM_OPT, null_dist=null)
    keep = worm_domain.patch(sample.positions())
    chart = [bp for bp, k in zip(sample, keep) if k]
    ra = X.df_scan(f, X.collar_grid(f, chart), basis=bases[-1],
                   warm_start=rb.estimate.coeffs, cfg=WORM_SCAN)
    routes = abs(ra.delta - rb.df) / rb.df
    secs = time.perf_counter() - t
    ok = (res.stabilized and haus <= 2 * spacing and worst <= WORM_FIBER_DEG
          and degenerate == np.inf and agree <= WORM_CORE_VS_NULL and red["gapNonIncreasing"]
          and rel_null <= WORM_VS_ORACLE and rel_core <= WORM_VS_ORACLE
          and routes <= WORM_ROUTES and secs <= WORM_SECONDS)
    assert report(4, ok, f"hausdorff={haus:.2e} (2x spacing {2 * spacing:.2e}) "
                         f"fiber={worst:.1e}deg n(f=0)={degenerate} "
                         f"n(null)={big['null']:.4f} n(core)={big['core']:.4f} "
                         f"oracle={oracle:.4f} gaps={[r['gap'] for r in red['rows']]} "
                         f"routeA={ra.delta:.4f} routeB={rb.df:.4f} in {secs:.0f}s")


def test_5_oracle():
    def val(beta, m=64):
        return E.annulus_norm_oracle(E.AnnulusProblem(np.exp(-0.5), np.exp(0.5), beta, m)).value

    v0, v1, v2 = val(0.0), val(1.0), val(2.0)
    mesh = abs(val(1.0, 128) - v1) / val(1.0, 128)
    ok = (v0 == 0.0 and v1 > 0 and abs(v2 / v1 - 2.0) <= 2.0 * HOMOGENEITY_REL
          and mesh <= MESH_REL)
    assert report(5, ok, f"oracle(0)={v0} oracle(1)={v1:.5f} ratio={v2 / v1:.6f} "
                         f"mesh change={mesh:.2e}")


def _subsample(d, k):
    idx = np.flatnonzero(d.support_mask())
    pick = idx[np.linspace(0, len(idx) - 1, k).astype(int)]
    return D.SampledDistribution(d.kind, d.points[pick], [d.fibers[i] for i in pick],
                                 d.source_tol, d.iteration, dict(d.meta))


def test_6_identities(worm_pipeline, worm_domain):
    quartic = E.make_domain("quartic").f
    qnull = D.levi_null(quartic, hs.sample_boundary(quartic, "param", 4 * SUITE_POINTS))
    suites = {
        "quartic": A.consistency_suite(A.DAngeloForm(quartic), _subsample(qnull, SUITE_POINTS)),
        "worm": A.consistency_suite(A.DAngeloForm(worm_pipeline["f"]),
                                    _subsample(worm_pipeline["null"], SUITE_POINTS)),
    }
    suite_ok = all(not s["skipped"] and s["points"] == SUITE_POINTS
                   and all(s[k] < tol for k, tol in s["thresholds"].items())
                   for s in suites.values())
    pts = worm_domain.core_locus(LEMMA_POINTS)[:LEMMA_POINTS]
    lemma = max(X.key_lemma_check(worm_domain.f, hs.boundary_point(worm_domain.f, p), [1, 0])
                for p in pts)
    adfd = {}
    for name in E.REGISTRY:
        f = E.make_domain(name).f
        q = hs.sample_boundary(f, "random", AD_FD_POINTS, seed=11).positions()
        _, g, B = calc.jet_data(f, q)
        eg = np.abs(g - calc.grad10_fd(f, q)).max(axis=1) / (1 + np.abs(g).max(axis=1))
        eB = np.abs(B - calc.hess_mixed_fd(f, q)).max(axis=(1, 2)) / (1 + np.abs(B).max(axis=(1, 2)))
        adfd[name] = (len(q), float(max(eg.max(), eB.max())))
    ad_ok = all(cnt == AD_FD_POINTS and err <= AD_FD_TOL for cnt, err in adfd.values())
    ok = suite_ok and len(pts) == LEMMA_POINTS and lemma <= LEMMA_TOL and ad_ok
    summary = {k: {m: f"{s[m]:.1e}" for m in ("gauge", "closed", "hermitian")}
               for k, s in suites.items()}
    assert report(6, ok, f"suites={summary} keyLemma={lemma:.1e} "
                         f"adVsFd={ {k: f'{e:.1e}' for k, (_, e) in adfd.items()} }")


def test_7_appendix_norms():
    rows = []
    for beta in (0.5, 1.0):
        prob = E.AnnulusProblem(np.exp(-0.5), np.exp(0.5), beta)
        for d in (8, 12):
            rows.append((beta, d, E.appendix_norms(prob, degree=d)))
    order_ok = all(r.l1 <= r.linf for _, _, r in rows)
    drift = max(abs(rows[i + 1][2].ratio - rows[i][2].ratio) / rows[i][2].ratio
                for i in (0, 2))
    ok = order_ok and drift <= APPENDIX_RATIO_REL
    assert report(7, ok, "L1<=Linf on all; ratio " + ", ".join(
        f"b={b} d={d}: {r.ratio:.4f}" for b, d, r in rows) + f"; drift={drift:.1e} (report only)")


def test_8_determinism():
    cfg = cli.RunConfig(domain=DETERMINISM_DOMAIN, normalized=True, seed=3)
    a, code_a = cli.run(cfg, "analyze")
    b, code_b = cli.run(cli.RunConfig(domain=DETERMINISM_DOMAIN, normalized=True, seed=3),
                        "analyze")
    ok = code_a == code_b == 0 and cli.dumps(a) == cli.dumps(b)
    assert report(8, ok, f"{DETERMINISM_DOMAIN} analyze twice: identical={cli.dumps(a) == cli.dumps(b)}")
