"""Route A on the worm, stratum by stratum.

The scanned exponent only approaches 1/(1+n) as the collar shrinks, so this
prints the admissible exponent on each depth stratum for the canonical
defining function and for the gauge found by the norm optimizer.
"""
import argparse

from levicore import dangelo, df_index, distributions, examples, hypersurface


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--samples", type=int, default=6000)
    ap.add_argument("--strata", type=int, default=5)
    ap.add_argument("--basis", default="radial:32")
    args = ap.parse_args()

    dom = examples.make_domain("worm", {"beta": args.beta})
    f = dom.f
    sample = hypersurface.sample_boundary(f, "param", args.samples)
    core = distributions.iterate_to_core(distributions.levi_null(f, sample)).core
    basis = dangelo.make_basis(args.basis, f)
    rb = df_index.df_via_norm(f, core, basis, cfg=dangelo.OptimizerConfig(starts=2, max_evals=500))
    chart = [bp for bp, keep in zip(sample, dom.patch(sample.positions())) if keep]
    grid = df_index.collar_grid(f, chart, strata=args.strata)
    jets = df_index._grid_jets(f, grid, basis)
    print(f"route B: 1/(1+n) = {rb.df:.4f}")
    for label, c in (("r", None), ("exp(f) r", rb.estimate.coeffs)):
        _, per = df_index.best_delta(jets, c)
        for depth, delta in df_index._stratum_profile(grid, per):
            print(f"{label:9s} depth {depth:8.1e}  delta {delta:.4f}")


if __name__ == "__main__":
    main()
