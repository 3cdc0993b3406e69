"""How the gauge basis size moves the worm norm estimate toward the annulus oracle.

Usage: python scripts/worm_basis_study.py [--beta 1] [--samples 6000] [--sizes 8 16 24 32]
"""
import argparse
import json

import numpy as np

from levicore import dangelo, distributions, examples, hypersurface


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--samples", type=int, default=6000)
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 16, 24, 32])
    ap.add_argument("--out", default="")
    args = ap.parse_args()

    dom = examples.make_domain("worm", {"beta": args.beta})
    f = dom.f
    sample = hypersurface.sample_boundary(f, "param", args.samples)
    core = distributions.iterate_to_core(distributions.levi_null(f, sample)).core
    oracle = examples.annulus_norm_oracle(examples.AnnulusProblem(**dom.facts["annulus"])).value
    cfg = dangelo.OptimizerConfig(starts=2, max_evals=500)
    rows = []
    for m in args.sizes:
        est = dangelo.optimize_n(f, core, dangelo.make_basis(f"radial:{m}", f), cfg=cfg)
        rows.append({"size": m, "n": est.value, "relToOracle": est.value / oracle - 1})
        print(f"radial:{m:<3d} n = {est.value:.5f}  ({100 * (est.value / oracle - 1):+.2f}%)")
    print(f"oracle      n = {oracle:.5f}   closed form {dom.facts['nClosedForm']:.5f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"beta": args.beta, "oracle": oracle, "rows": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
