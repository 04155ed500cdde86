#!/usr/bin/env python3
"""Deterministic check that the rescaled lattice generator converges.

Two tables over a grid of n:
  * without the barrier (beta=0): l1 distance between n^2 K_n G and
    kappa * G'' for a Schwartz-class G,
  * with the barrier (beta=1): the quadratic forms A (bulk) and B (barrier)
    behind the Dirichlet-form limit, against the closed-form target.

No simulation here, everything is summed exactly, so it runs in ~a minute.
"""

from slowbond.kernel import alpha_hat, build_kernel
from slowbond.fields import grad_op, make_test_function, norm_2bg
from slowbond.operator_limits import ab_values, knbeta_error

gamma, alpha = 3.0, 1.0
kern = build_kernel(gamma, cutoff=4096)
ahat = alpha_hat(alpha, kern)
n_grid = (32, 64, 128, 256)

G0 = make_test_function("gaussian-bump", {"center": 0.2, "width": 0.4},
                        "schwartz")
print(f"gamma={gamma}, beta=0, Schwartz G: l1 of n^2 K_n G - kappa G''")
for n in n_grid:
    err = knbeta_error(n, 0.0, gamma, G0, kern)
    print(f"  n={n:4d}  l1={err['l1']:.6e}  sup={err['sup']:.6e}")

G1 = make_test_function(
    "gaussian-bump",
    {"center": 0.3, "width": 0.4, "amplitude": 1.0,
     "center_minus": -0.3, "amplitude_minus": -0.6, "correction_width": 0.3},
    "robin", alpha_hat=ahat)
target = norm_2bg(grad_op(G1), 1.0, gamma, alpha_hat_val=ahat)
print(f"\ngamma={gamma}, beta=1, Robin G: ||grad G||^2 target = {target:.6f}")
for n in n_grid:
    ab = ab_values(n, 1.0, gamma, alpha, G1, kern)
    total = ab["A"] + ab["B"]
    print(f"  n={n:4d}  A={ab['A']:.6f}  B={ab['B']:.6f}"
          f"  A+B={total:.6f}  rel err={total/target - 1:+.2%}")
