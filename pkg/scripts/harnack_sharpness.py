"""Closed-form Harnack and log-Harnack margins for OU with f = exp(a x).

Shows how the margin depends on which one-sided constant is plugged in:
the drift-only constant (-1 for Z = -x) or the sigma-augmented one (-2).
"""

import math


from couplinglab import estimators as E
from couplinglab import functions as F
from couplinglab.sde import get_spec


def main():
    spec = get_spec("ou1")
    t, p = 1.0, 2.0
    print("a,x,y,K,harnack_lhs,harnack_rhs,log_lhs,log_rhs")
    for a in (0.5, 1.0, 2.0):
        f = F.explin(1, [a])
        for x, y in ((0.0, 1.0), (1.0, 0.0)):
            m, v = spec.gaussian_law([x], t)
            my, _ = spec.gaussian_law([y], t)
            lhs = f.gaussian_mean(m, v) ** p
            fp = F.power(f, p).gaussian_mean(my, v)
            log_lhs = float(a * m[0])
            for K in (-1.0, -2.0):
                rhs = fp * math.exp(E.harnack_exponent(p, K, t, abs(x - y)))
                log_rhs = math.log(f.gaussian_mean(my, v)) + E.log_harnack_constant(K, 1.0, t, abs(x - y))
                print(f"{a},{x},{y},{K},{lhs!r},{rhs!r},{log_lhs!r},{log_rhs!r}")


if __name__ == "__main__":
    main()
