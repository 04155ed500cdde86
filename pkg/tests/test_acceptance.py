"""End-to-end acceptance gates.

Each test prints a single PASS/FAIL line with the measured numbers before
asserting, so a full run reads as a ten-line scorecard.  These are the
Monte Carlo heavy checks: the whole file takes a couple of hours on one
core (A1 and A6 dominate).  Seeds are fixed; every statistical gate was
sized so the fixed-seed run passes with margin.
"""

import math

import numpy as np
from scipy.integrate import quad

from slowbond.kernel import BarrierParams, alpha_hat, build_kernel
from slowbond.process import SimParams, init_bernoulli, replica_seed, simulate
from slowbond.fields import (
    grad_op,
    fluctuation_field,
    make_test_function,
    martingale_decomposition,
    norm_2bg,
    site_weights,
)
from slowbond.operator_limits import (
    error_field_decay,
    kappa_partial,
    knbeta_error,
    slow_bond_mass,
)
from slowbond.semigroups import SemigroupEvaluator, apply, heat_kernel, pde_reference
from slowbond.stats import invariance_test, moment_estimates
from slowbond.oracle import small_window_comparison

KERN3 = build_kernel(3.0, 4096)
KERN2 = build_kernel(2.0, 4096)
AHAT = alpha_hat(1.0, KERN3)
KAPPA3 = KERN3.kappa_gamma
B = 0.5
CHI = B * (1.0 - B)

# two-sided bump with a sign change at the origin; interface-compatible
# versions of it are used wherever the barrier matters
TWO_SIDED = dict(center=0.15, width=0.2, amplitude=1.0,
                 center_minus=-0.15, amplitude_minus=-1.0, width_minus=0.2,
                 correction_width=0.15)


def _verdict(tag: str, ok: bool, detail: str) -> None:
    print(f"{tag}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{tag}: {detail}"


def test_a1_invariance():
    # Bernoulli(b) stays invariant under the slow-bond dynamics
    n, L, t, M = 128, 2048, 0.1, 10_000
    params = SimParams(n=n, L=L, b=B, barrier=BarrierParams(1.0, 1.0),
                       kernel=KERN3, seed=11, t_end=t,
                       record_times=np.array([0.0, t]))
    snaps = np.empty((M, 2 * L), dtype=np.uint8)
    for r in range(M):
        snaps[r] = simulate(params, record_snapshots=True, replica=r).snapshots[-1]
    out = invariance_test(snaps, B, level=0.001)
    _verdict("A1 invariance", out["verdict"] == "pass",
             f"max per-site chi-square {out['max_stat']:.2f} vs threshold "
             f"{out['threshold']:.2f}, {out['failures']} of {out['n_sites']} sites flagged")


def test_a2_initial_field_variance():
    n, M, seed = 128, 10_000, 23
    L = 3 * n
    G = make_test_function("gaussian-bump", {"center": 0.2, "width": 0.3}, "schwartz")
    target = CHI * quad(lambda u: float(G(u)) ** 2, -4, 4, epsabs=1e-12)[0]
    params = SimParams(n=n, L=L, b=B, barrier=BarrierParams(1.0, 0.0),
                       kernel=KERN3, seed=seed, t_end=0.0,
                       record_times=np.array([0.0]))
    ys = np.empty(M)
    for r in range(M):
        rng = np.random.default_rng(replica_seed(seed, r))
        cfg = init_bernoulli(params, rng)
        ys[r] = fluctuation_field(cfg.occupancy, G, n, B, cfg.x_lo)
    est = moment_estimates(ys)["var"]
    ok = abs(est["estimate"] - target) < 3.0 * est["se"]
    _verdict("A2 initial variance", ok,
             f"Var(Y_0)={est['estimate']:.5f} vs chi*intG^2={target:.5f}, "
             f"|diff|={abs(est['estimate'] - target):.5f} < 3se={3 * est['se']:.5f}")


def test_a3_quadratic_variation():
    n, M, t, seed = 256, 1000, 0.05, 37
    L = 3 * n
    rows = []
    ok = True
    for gamma, beta, space in ((3.0, 0.0, "schwartz"), (3.0, 1.0, "robin"),
                               (3.0, 2.0, "neumann"), (2.0, 0.0, "schwartz"),
                               (2.0, 2.0, "neumann")):
        kern = KERN3 if gamma > 2 else KERN2
        ah = alpha_hat(1.0, kern) if gamma > 2 else None
        if space == "schwartz":
            p = {"center": 0.2, "width": 0.3}
        else:
            p = dict(TWO_SIDED, width=0.3, width_minus=0.3)
        G = make_test_function("gaussian-bump", p, space,
                               alpha_hat=ah if space == "robin" else None)
        target = CHI * norm_2bg(grad_op(G), beta, gamma, alpha_hat_val=ah)
        params = SimParams(n=n, L=L, b=B, barrier=BarrierParams(1.0, beta),
                           kernel=kern, seed=seed, t_end=t,
                           record_times=np.array([0.0, t]))
        acc = 0.0
        for r in range(M):
            log = simulate(params, G=G, replica=r)
            acc += log.bracket_real[-1] - log.bracket_real[0]
        rate = acc / (M * t)
        rel = abs(rate - target) / target
        ok &= rel < 0.10
        rows.append(f"(b={beta:g},g={gamma:g}):{rel * 100:.1f}%")
    _verdict("A3 quadratic variation", ok,
             "rel err of [M]_t/t vs chi*||grad G||^2: " + " ".join(rows))


def test_a4_operator_convergence():
    G0 = make_test_function("gaussian-bump", {"center": 0.2, "width": 0.5}, "schwartz")
    Gn = make_test_function("gaussian-bump",
                            {"center": 0.3, "width": 0.4, "amplitude": 1.0,
                             "center_minus": -0.3, "amplitude_minus": 1.0,
                             "correction_width": 0.3},
                            "neumann")
    ok = True
    rows = []
    for label, G, beta, kern in (("g3b0", G0, 0.0, KERN3), ("g3b2", Gn, 2.0, KERN3),
                                 ("g2b0", G0, 0.0, KERN2)):
        errs = [knbeta_error(n, beta, kern.gamma, G, kern) for n in (64, 128, 256)]
        l1 = [e["l1"] for e in errs]
        sup = [e["sup"] for e in errs]
        ok &= l1[0] > l1[1] > l1[2]
        ok &= max(sup) < 1.5 * min(sup)  # bounded across the grid
        rows.append(f"{label}:l1={l1[0]:.3e}>{l1[1]:.3e}>{l1[2]:.3e}")
    _verdict("A4 operator convergence", ok, " ".join(rows))


def test_a5_constants():
    kp = kappa_partial(10 ** 6, 1, 3.0)
    sm = slow_bond_mass(10 ** 5, 3.0)
    two_m = 1.1106265353261489
    sigma2 = 1.5198177546350669
    ok = (abs(kp - 0.759909) < 1e-3
          and abs(sm["p_mass"] - two_m) < 1e-6
          and abs(sm["weighted_mass"] - sigma2) < 1e-4)
    _verdict("A5 constants", ok,
             f"kappa_partial={kp:.6f} (target 0.759909), "
             f"p_mass-2m={sm['p_mass'] - two_m:.2e}, "
             f"weighted-sigma2={sm['weighted_mass'] - sigma2:.2e}")


def _ou_prediction(G, kind: str, t: float) -> float:
    """chi(b) * int G (P_{kappa t} G) for any kind, split at the interface."""
    ev = SemigroupEvaluator(kind, alpha_hat=AHAT if kind == "Robin" else None)
    f = lambda u: float(G(u)) * apply(ev, KAPPA3 * t, G, u)
    s = max(G.numeric_support, 1.0)
    return CHI * (quad(f, -s, 0, epsabs=1e-10, limit=200)[0]
                  + quad(f, 0, s, epsabs=1e-10, limit=200)[0])


def test_a6_boundary_condition_separation():
    n, t, M = 256, 0.05, 10_000
    regimes = (
        (0.0, "Free", "schwartz", {"center": 0.2, "width": 0.15}, 77),
        (1.0, "Robin", "robin", TWO_SIDED, 101),
        (2.0, "Neumann", "neumann", TWO_SIDED, 202),
    )
    ok = True
    rows = []
    for beta, match, space, p, seed in regimes:
        G = make_test_function("gaussian-bump", p, space,
                               alpha_hat=AHAT if space == "robin" else None)
        preds = {k: _ou_prediction(G, k, t) for k in ("Free", "Robin", "Neumann")}
        params = SimParams(n=n, L=2 * n, b=B, barrier=BarrierParams(1.0, beta),
                           kernel=KERN3, seed=seed, t_end=t,
                           record_times=np.array([0.0, t]))
        Y = np.array([simulate(params, G=G, replica=r).Y for r in range(M)])
        d0 = Y[:, 0] - Y[:, 0].mean()
        dt = Y[:, 1] - Y[:, 1].mean()
        cov = float(np.sum(d0 * dt)) / (M - 1)
        hw = 1.96 * float((d0 * dt).std(ddof=1)) / math.sqrt(M)
        contained = abs(cov - preds[match]) <= hw
        others = [k for k in preds if k != match]
        excluded = all(abs(cov - preds[k]) > hw for k in others)
        gaps = min(abs(preds[k] - preds[match]) / hw for k in others)
        ok &= contained and excluded and gaps >= 4.0
        rows.append(f"beta={beta:g}: cov={cov:.5f}+-{hw:.5f} {match}={preds[match]:.5f}"
                    f" {'in' if contained else 'OUT'}, others "
                    f"{'out' if excluded else 'IN'}, min gap {gaps:.1f}hw")
    # independent Robin oracle: PDE solve of the interface problem
    Gr = make_test_function("gaussian-bump", TWO_SIDED, "robin", alpha_hat=AHAT)
    pde = pde_reference("Robin", t, Gr, kappa=KAPPA3, alpha_hat=AHAT)
    s = Gr.numeric_support
    pde_pred = CHI * (quad(lambda u: float(Gr(u)) * float(pde(u)), -s, 0,
                           epsabs=1e-10, limit=200)[0]
                      + quad(lambda u: float(Gr(u)) * float(pde(u)), 0, s,
                             epsabs=1e-10, limit=200)[0])
    kernel_pred = _ou_prediction(Gr, "Robin", t)
    ok &= abs(pde_pred - kernel_pred) < 5e-4
    rows.append(f"Robin pred kernel {kernel_pred:.5f} vs PDE {pde_pred:.5f}")
    _verdict("A6 boundary separation", ok, "; ".join(rows))


def test_a7_exact_oracle():
    out = small_window_comparison(seed=20260823, replicas=100_000)
    ok = out["tv_distance"] < 0.02 and out["qv_rel_err"] < 0.02
    _verdict("A7 exact oracle", ok,
             f"TV={out['tv_distance']:.4f} < 0.02, "
             f"qv rel err={out['qv_rel_err'] * 100:.2f}% < 2%")


def test_a8_semigroup_properties():
    g = lambda u: heat_kernel(0.3, u)
    checks = {}
    # Chapman-Kolmogorov on Free and Neumann
    ck = 0.0
    for kind in ("Free", "Neumann"):
        ev = SemigroupEvaluator(kind)
        lhs = apply(ev, 0.15, g, 0.4)
        rhs = apply(ev, 0.1, lambda u: apply(ev, 0.05, g, u), 0.4)
        ck = max(ck, abs(lhs - rhs))
    checks["chapman_kolmogorov"] = (ck, 1e-6)
    # Dirichlet absorbs at the origin, exactly
    dv = apply(SemigroupEvaluator("Dirichlet"), 0.1, g, 0.0)
    checks["dirichlet_zero"] = (abs(dv), 0.0)
    # Neumann: zero one-sided derivative at 0+
    Gn = make_test_function("gaussian-bump", {"center": 0.3, "width": 0.4}, "neumann")
    evn = SemigroupEvaluator("Neumann")
    h = 1e-4
    u0 = apply(evn, 0.05, Gn, 1e-9)
    d = (-3.0 * u0 + 4.0 * apply(evn, 0.05, Gn, h) - apply(evn, 0.05, Gn, 2 * h)) / (2 * h)
    checks["neumann_derivative"] = (abs(d), 1e-5)
    # Robin: flux-continuity with jump transmission alpha_hat
    Gr = make_test_function("gaussian-bump",
                            {"center": 0.3, "width": 0.4, "amplitude": 1.0,
                             "center_minus": -0.2, "amplitude_minus": -0.6},
                            "robin", alpha_hat=AHAT)
    evr = SemigroupEvaluator("Robin", alpha_hat=AHAT)
    t = 0.05
    up, up2 = apply(evr, t, Gr, h), apply(evr, t, Gr, 2 * h)
    um, um2 = apply(evr, t, Gr, -h), apply(evr, t, Gr, -2 * h)
    u0p, u0m = apply(evr, t, Gr, 1e-9), apply(evr, t, Gr, -1e-9)
    dp = (-3.0 * u0p + 4.0 * up - up2) / (2.0 * h)
    dm = (3.0 * u0m - 4.0 * um + um2) / (2.0 * h)
    jump = u0p - u0m
    checks["robin_interface"] = (max(abs(dp - AHAT * jump), abs(dm - AHAT * jump)), 1e-4)
    # Free-kind quadrature vs the Crank-Nicolson reference
    G0 = make_test_function("gaussian-bump", {"width": 0.5}, "schwartz")
    pde = pde_reference("Free", 0.1, G0, kappa=KAPPA3)
    ev0 = SemigroupEvaluator("Free")
    err = max(abs(float(pde(x)) - apply(ev0, KAPPA3 * 0.1, G0, float(x)))
              for x in np.linspace(-4.0, 4.0, 41))
    checks["free_vs_pde"] = (err, 1e-3)
    ok = all(v <= tol for v, tol in checks.values())
    _verdict("A8 semigroup properties", ok,
             " ".join(f"{k}={v:.2e}<={tol:g}" for k, (v, tol) in checks.items()))


def test_a9_error_field_decay():
    def builder(n):
        return make_test_function("gaussian-bump",
                                  dict(TWO_SIDED, amplitude_minus=-0.6),
                                  "robin", alpha_hat=AHAT)

    rep = error_field_decay([64, 128, 256], builder, KERN3, beta=1.0, alpha=1.0,
                            b=B, t_end=0.05, n_records=10, replicas=100, seed=314)
    vals = rep.metrics["sup_E_sq"]
    ok = rep.passed["sup_E_sq"]
    _verdict("A9 error-field decay", ok,
             "E[sup E_t^2] = " + " > ".join(f"{v:.2e}" for v in vals)
             + f", fitted decay n^-{rep.decay_exponent['sup_E_sq']:.2f}")


def test_a10_compensated_square_martingale():
    n, L, t_end, M = 64, 128, 0.05, 1000
    G = make_test_function("gaussian-bump", dict(TWO_SIDED, amplitude_minus=-0.6),
                           "robin", alpha_hat=AHAT)
    times = np.linspace(0.0, t_end, 11)
    params = SimParams(n=n, L=L, b=B, barrier=BarrierParams(1.0, 1.0),
                       kernel=KERN3, seed=555, t_end=t_end, record_times=times)
    wf, wl = site_weights(G, n, -L, 2 * L, 1.0, 1.0, KERN3)
    W = np.vstack([wf, wl])
    N = np.empty((M, len(times)))
    for r in range(M):
        log = simulate(params, G=G, weight_arrays=W, record_snapshots=True,
                       replica=r)
        traj = martingale_decomposition(log, G, KERN3, 1.0, 1.0, B)
        N[r] = traj.M ** 2 - traj.bracket_pred
    ok = True
    rows = []
    for j in (4, 10):  # two distinct positive times
        mean = float(N[:, j].mean())
        se = float(N[:, j].std(ddof=1)) / math.sqrt(M)
        ok &= abs(mean) < 3.0 * se
        rows.append(f"t={times[j]:.2f}: E[N]={mean:+.2e} (|z|={abs(mean) / se:.2f})")
    _verdict("A10 compensated square", ok, " ".join(rows))
