"""Annulus oracle: mesh convergence, homogeneity in beta, and the L1/Linf comparison."""
import numpy as np

from levicore import examples


def main():
    base = dict(r1=np.exp(-0.5), r2=np.exp(0.5))
    prob = examples.AnnulusProblem(beta=1.0, **base)
    print("m      extrapolated   raw")
    for row in examples.oracle_convergence(prob, (16, 32, 64, 128, 256)):
        print(f"{row['m']:<6d} {row['value']:.6f}       {row['raw']:.6f}")
    print(f"closed form {prob.closed_form():.6f}")
    print("beta   value    value/beta")
    for beta in (0.25, 0.5, 1.0, 2.0, 4.0):
        v = examples.annulus_norm_oracle(examples.AnnulusProblem(beta=beta, **base)).value
        print(f"{beta:<6.2f} {v:.5f}  {v / beta:.5f}")
    for d in (4, 8, 12):
        a = examples.appendix_norms(prob, degree=d)
        print(f"degree {d:2d}: L1 {a.l1:.4f}  Linf {a.linf:.4f}  ratio {a.ratio:.4f}")


if __name__ == "__main__":
    main()
