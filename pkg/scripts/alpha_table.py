"""Table of alpha(t) for the catalogued Bernstein functions.

    python3 scripts/alpha_table.py > alpha.csv
"""

import math

import numpy as np

from couplinglab import jumps

T = np.geomspace(0.05, 20, 13)


def main():
    print("S,param,t,alpha,rel_err,alpha_t_pow")
    for beta in (0.5, 1.0, 1.5):
        for t in T:
            a = jumps.bernstein_alpha("power", t, beta=beta)
            print(f"power,{beta},{t:.6g},{a.value!r},{a.rel_err:.2e},{a.value * t ** (1 / beta)!r}")
    for t in T:
        a = jumps.bernstein_alpha("log", t)
        val = "inf" if not a.finite else repr(a.value)
        print(f"log,,{t:.6g},{val},{a.rel_err:.2e},")
    # for S = log(1 + r) the integral is B(1/2, t - 1/2) once t > 1/2
    t = 2.0
    beta = math.exp(math.lgamma(0.5) + math.lgamma(t - 0.5) - math.lgamma(t))
    print(f"# log, t=2: quadrature {jumps.bernstein_alpha('log', t).value!r} vs beta function {beta!r}")


if __name__ == "__main__":
    main()
