#!/usr/bin/env python3
"""Simulate a few paths and print the martingale decomposition of the field.

Small system on purpose (n=32) so the whole thing runs in a couple of
seconds; bump n / replicas for real experiments.
"""

import numpy as np

from slowbond.kernel import BarrierParams, alpha_hat, build_kernel
from slowbond.process import SimParams, simulate
from slowbond.fields import make_test_function, martingale_decomposition, site_weights

gamma, beta, alpha, b = 3.0, 1.0, 1.0, 0.5
n, L = 32, 128
t_end = 0.05

kern = build_kernel(gamma, cutoff=2048)
ahat = alpha_hat(alpha, kern)
print(f"gamma={gamma}: kappa={kern.kappa_gamma:.6f}, alpha_hat={ahat:.6f}")

# a Robin-space test function: a bump on each side with a jump at 0
G = make_test_function(
    "gaussian-bump",
    {"center": 0.3, "width": 0.35, "amplitude": 1.0,
     "center_minus": -0.3, "amplitude_minus": -0.5, "correction_width": 0.3},
    "robin", alpha_hat=ahat)

params = SimParams(n=n, L=L, b=b, barrier=BarrierParams(alpha, beta),
                   kernel=kern, seed=2024, t_end=t_end,
                   record_times=np.linspace(0.0, t_end, 11))

wf, wl = site_weights(G, n, -L, 2 * L, beta, alpha, kern)
weights = np.vstack([wf, wl])

for rep in range(3):
    log = simulate(params, G=G, weight_arrays=weights,
                   record_snapshots=True, replica=rep)
    traj = martingale_decomposition(log, G, kern, beta, alpha, b)
    resid = np.max(np.abs(traj.Y - traj.Y[0] - traj.M - traj.C - traj.E))
    print(f"\nreplica {rep}: {int(log.n_swaps[-1])} swaps, "
          f"decomposition residual {resid:.2e}")
    print("    t        Y         M         [M]_real  <M>_pred")
    for i in range(0, 11, 2):
        print(f"  {traj.times[i]:.3f}  {traj.Y[i]:+.5f}  {traj.M[i]:+.5f}"
              f"  {traj.bracket_real[i]:.5f}   {traj.bracket_pred[i]:.5f}")
