import math

import numpy as np
import pytest

from slowbond.kernel import alpha_hat, build_kernel
from slowbond.fields import grad_op, make_test_function, norm_2bg
from slowbond.operator_limits import (
    ConvergenceReport,
    ab_values,
    kappa_partial,
    knbeta_error,
    report_to_csv,
    slow_bond_mass,
)

KERN3 = build_kernel(3.0, 4096)
KERN2 = build_kernel(2.0, 4096)
AHAT = alpha_hat(1.0, KERN3)

KAPPA3 = 0.7599088773175334
TWO_M3 = 1.1106265353261489
SIGMA2_3 = 1.5198177546350669
C2 = 0.4159536862903535  # 1 / (2 zeta(3))


def schwartz_G(width=0.5):
    return make_test_function("gaussian-bump", {"width": width}, "schwartz")


def neumann_G():
    return make_test_function("gaussian-bump", {"center": 0.3, "width": 0.5},
                              "neumann")


def robin_G():
    return make_test_function("gaussian-bump",
                              {"center": 0.2, "width": 0.4, "amplitude": 1.0,
                               "center_minus": -0.1, "amplitude_minus": 0.6},
                              "robin", alpha_hat=AHAT)


# ---------------------------------------------------------------------------
# kappa_partial / slow_bond_mass: frozen constant oracles
# ---------------------------------------------------------------------------

def test_kappa_partial_gamma3():
    assert abs(kappa_partial(10**6, 1, 3.0) - KAPPA3) < 1e-3
    assert abs(kappa_partial(10**6, 1, 3.0) - 0.759909) < 1e-3


def test_kappa_partial_gamma2():
    # logarithmically slow convergence to c_2 = 1/(2 zeta(3))
    assert abs(kappa_partial(10**6, 1, 2.0) - C2) < 2e-2


def test_kappa_partial_monotone_in_C():
    assert kappa_partial(10**4, 2, 3.0) > kappa_partial(10**4, 1, 3.0)


def test_slow_bond_mass_gamma3():
    out = slow_bond_mass(10**5, 3.0)
    assert abs(out["p_mass"] - TWO_M3) < 1e-6
    assert abs(out["weighted_mass"] - SIGMA2_3) < 1e-4
    assert not out["weighted_diverges"]


def test_slow_bond_mass_gamma2_divergence():
    out = slow_bond_mass(10**4, 2.0)
    assert out["weighted_diverges"]


# ---------------------------------------------------------------------------
# knbeta_error
# ---------------------------------------------------------------------------

def test_knbeta_l1_decreases_gamma3_beta0():
    G = schwartz_G()
    e64 = knbeta_error(64, 0.0, 3.0, G, KERN3)
    e256 = knbeta_error(256, 0.0, 3.0, G, KERN3)
    assert e256["l1"] < e64["l1"]
    assert e64["truncation_bound"] < 1e-10 * max(e64["l1"], 1e-6)


def test_knbeta_sup_bounded_beta2():
    G = neumann_G()
    sups = [knbeta_error(n, 2.0, 3.0, G, KERN3)["sup"] for n in (32, 64)]
    assert max(sups) < 10.0


def test_knbeta_small_n_against_brute_force():
    # independent compensated-summation evaluation of the l1 sum at n=8
    n, beta, gamma = 8, 0.0, 3.0
    G = schwartz_G()
    kap = KAPPA3
    x_far = 2 * (math.ceil(n * G.numeric_support) + 2 * n) + n
    total = 0.0
    comp = 0.0
    r = np.arange(1, 20000, dtype=float)
    p = KERN3.c_gamma * r ** -4.0
    for x in range(-x_far, x_far + 1):
        gx = float(G(x / n))
        acc = float(np.sum((np.asarray(G((x + r) / n)) - gx) * p)
                    + np.sum((np.asarray(G((x - r) / n)) - gx) * p))
        term = abs(n * n * acc - kap * float(G(x / n, 2))) / n
        t = total + (term - comp)
        comp = (t - total) - (term - comp)
        total = t
    out = knbeta_error(n, beta, gamma, G, KERN3)
    assert out["l1"] == pytest.approx(total, rel=1e-4)


def test_knbeta_rejects_mismatched_space():
    with pytest.raises(ValueError):
        knbeta_error(32, 1.0, 3.0, schwartz_G(), KERN3)
    with pytest.raises(ValueError):
        knbeta_error(32, 0.0, 3.0, neumann_G(), KERN3)


# ---------------------------------------------------------------------------
# ab_values
# ---------------------------------------------------------------------------

def test_ab_beta0_B_vanishes_with_alpha1():
    G = schwartz_G()
    out = ab_values(256, 0.0, 3.0, 1.0, G, KERN3)
    assert out["B"] == 0.0
    target = norm_2bg(grad_op(G), 0.0, 3.0)
    assert abs(out["A"] - target) / target < 0.02


def test_ab_beta1_B_converges_to_boundary_term():
    G = robin_G()
    dG0 = grad_op(G).boundary("+", 0)
    target_B = (2.0 * KAPPA3 / AHAT) * dG0 ** 2
    b64 = ab_values(64, 1.0, 3.0, 1.0, G, KERN3)["B"]
    b512 = ab_values(512, 1.0, 3.0, 1.0, G, KERN3)["B"]
    assert abs(b512 - target_B) < abs(b64 - target_B)
    assert abs(b512 - target_B) / target_B < 0.05


def test_ab_sum_converges_to_gradient_norm():
    G = robin_G()
    target = norm_2bg(grad_op(G), 1.0, 3.0, AHAT)
    outs = [ab_values(n, 1.0, 3.0, 1.0, G, KERN3) for n in (64, 256)]
    vals = [o["A"] + o["B"] for o in outs]
    assert abs(vals[1] - target) < abs(vals[0] - target)
    assert abs(vals[1] - target) / target < 0.02


# ---------------------------------------------------------------------------
# ConvergenceReport / CSV
# ---------------------------------------------------------------------------

def test_report_monotone_flag_and_csv():
    rep = ConvergenceReport([8, 16, 32], 0.0, 3.0, "demo")
    rep.add_metric("l1_error", [0.4, 0.2, 0.1], 0.0)
    rep.add_metric("wobbly", [0.4, 0.5, 0.1], 0.0)
    assert rep.passed["l1_error"]
    assert not rep.passed["wobbly"]
    assert rep.decay_exponent["l1_error"] == pytest.approx(1.0, abs=0.05)
    csv = report_to_csv(rep)
    lines = csv.strip().splitlines()
    assert lines[0] == "n,beta,gamma,metric,value,target,abs_err"
    assert len(lines) == 7


def test_report_requires_increasing_grid():
    with pytest.raises(ValueError):
        ConvergenceReport([16, 8], 0.0, 3.0, "bad")
