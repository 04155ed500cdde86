"""Convergence metrics for the discrete operators.

Each metric is a lattice sum over all of Z, reported together with a
certified bound on whatever was not summed directly.  The far field is
handled by a binomial (multipole) expansion of p(x - y) about y = 0, whose
remainder is controlled by the ratio (support * n / x_start)^k, so the
reported truncation bound can be driven below 1e-10 of the value.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .fields import TestFunction, discrete_K, _tail_sum
from .kernel import JumpKernel, moment_constants, theta

__all__ = [
    "ConvergenceReport",
    "knbeta_error",
    "kappa_partial",
    "ab_values",
    "slow_bond_mass",
    "error_field_decay",
    "report_to_csv",
]

#: multipole order for the far-field expansion of p(x-y) in y/x
_MP_ORDER = 10



def _gen_binom(a: float, k: int) -> float:
    """Generalized binomial coefficient a(a-1)...(a-k+1)/k! (any real a)."""
    out = 1.0
    for i in range(k):
        out *= (a - i) / (i + 1)
    return out

def _space_for(beta: float, gamma: float) -> str:
    if beta < 1:
        return "schwartz"
    if beta == 1 and gamma > 2:
        return "robin"
    return "neumann"


def _require_tag(G: TestFunction, beta: float, gamma: float) -> None:
    want = _space_for(beta, gamma)
    if G.space_tag != want:
        raise ValueError(
            f"test function tagged {G.space_tag!r} but (beta={beta}, gamma={gamma}) "
            f"requires the {want!r} space"
        )


def _far_field_l1(G: TestFunction, n: int, x_start: int, beta: float,
                  kern: JumpKernel, theta_n: float) -> tuple[float, float]:
    """(value, certified_bound) of (theta/n) * sum_{|x| > x_start} |K G(x/n)|.

    Beyond x_start the function and all its derivatives vanish numerically,
    so K G(x/n) = sum_y p(y-x) G(y/n) there (for beta >= 1 the sum is over
    the same side as x).  Expanding p(y-x) about y = 0,

        sum_{x > X} (x - y)^(-g-1) = sum_k binom(-g-1, k) (-y)^k Z_k(X),

    with Z_k(X) = sum_{x > X} x^(-g-1-k) evaluated by Euler-Maclaurin.  The
    expansion converges geometrically in (y/x) <= support*n/x_start.
    """
    c, g = kern.c_gamma, kern.gamma
    y_half = int(math.ceil(n * G.numeric_support)) + 2 * n
    if x_start <= 2 * y_half:
        raise ValueError("far-field start must exceed twice the support radius")
    if beta >= 1 and max(abs(G.boundary("+", 1)), abs(G.boundary("-", 1))) > 1e-12:
        raise NotImplementedError(
            "far-field l1 with a nonzero boundary slope (beta >= 1, Robin "
            "functions) is not supported; the drift term has its own slowly "
            "decaying far field"
        )
    ks = np.arange(_MP_ORDER + 1)

    total = 0.0
    bound = 0.0
    ratio = y_half / x_start
    for sign in (+1.0, -1.0):  # x > x_start and x < -x_start
        if beta < 1:
            y = np.arange(-y_half, y_half + 1, dtype=np.float64)
        elif sign > 0:
            y = np.arange(0, y_half + 1, dtype=np.float64)
        else:
            y = np.arange(-y_half, 0, dtype=np.float64)
        gy = np.asarray(G(y / n), dtype=float)
        Sk = np.array([float(np.sum(gy * y ** k)) for k in ks])
        Ak = np.array([float(np.sum(np.abs(gy) * np.abs(y) ** k)) for k in ks])
        # f(x) = c sum_k binom(-g-1,k) (-sign)^k S_k |x|^(-g-1-k)
        terms = np.array([
            c * _gen_binom(-g - 1.0, k) * (-sign) ** k * Sk[k] * _tail_sum(g + 1.0 + k, x_start)
            for k in ks
        ])
        # sign certification: sum_{x}|f| equals |sum_x f| when the k = 0 term
        # dominates the rest pointwise over the whole far range
        sub = float(np.sum([abs(_gen_binom(-g - 1.0, k)) * Ak[k] * float(x_start) ** (-k)
                            for k in ks[1:]]))
        if abs(Sk[0]) <= 2.0 * sub:
            # no constant sign certifiable: report the upper bound as the
            # value and itself as the bound (caller decides if that is small)
            ub = c * (abs(Sk[0]) + sub) * _tail_sum(g + 1.0, x_start)
            total += ub
            bound += ub
            continue
        total += abs(float(np.sum(terms)))
        # series truncation: term_k <= c |binom| A_K y_half^(k-K) X^(-k) Z_0(X),
        # geometric in ratio = y_half / X < 1/2 beyond k = K
        rem = c * abs(_gen_binom(-g - 1.0, _MP_ORDER + 1)) * Ak[_MP_ORDER] * y_half \
            * float(x_start) ** (-(_MP_ORDER + 1.0)) * _tail_sum(g + 1.0, x_start)
        bound += rem / (1.0 - 2.0 * ratio)
    return total * theta_n / n, bound * theta_n / n


def knbeta_error(n: int, beta: float, gamma: float, G: TestFunction,
                 kern: JumpKernel | None = None) -> dict:
    """l1 and sup distance of Theta(n) K_{n,beta} G from kappa_gamma * G''.

    l1 = (1/n) sum_x |Theta K G(x/n) - kappa G''(x/n)| over all x, split into
    a direct near region |x| <= x_far and an analytic far field; sup is the
    max of |Theta K G(x/n)| over the near region (the far field is dominated
    by it for every case we evaluate, and is checked to be).
    """
    _require_tag(G, beta, gamma)
    if kern is None or kern.gamma != gamma:
        from .kernel import build_kernel

        kern = build_kernel(gamma, 4096)
    th = theta(n, gamma)
    kappa = kern.kappa_gamma

    x_far = 2 * (int(math.ceil(n * G.numeric_support)) + 2 * n) + n
    xs = np.arange(-x_far, x_far + 1)
    diffs = np.empty(len(xs))
    op_vals = np.empty(len(xs))
    for i, x in enumerate(xs):
        v = th * discrete_K(n, beta, G, int(x), kern)
        op_vals[i] = v
        diffs[i] = abs(v - kappa * float(G(x / n, 2)))
    l1_near = float(np.sum(diffs)) / n
    sup_val = float(np.max(np.abs(op_vals)))

    l1_far, far_bound = _far_field_l1(G, n, x_far, beta, kern, th)
    # neglected G'' beyond the near region: |G''| < 1e-14 there by support
    slack = 1e-14 * kappa * 2.0  # integrated tail of a sub-eps function
    return {
        "l1": l1_near + l1_far,
        "sup": sup_val,
        "truncation_bound": far_bound + slack,
    }


def kappa_partial(n: int, C: int, gamma: float) -> float:
    """(Theta(n)/n^2) sum_{r=1}^{Cn} r^2 p(r), the diffusivity partial sum."""
    if C not in (1, 2):
        raise ValueError(f"C must be 1 or 2, got {C}")
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    c_gamma, _, _, _ = moment_constants(float(gamma))
    r = np.arange(1, C * n + 1, dtype=np.float64)
    s = float(np.sum(r ** 2 * c_gamma * r ** (-gamma - 1.0)))
    if gamma == 2:
        harmonic = float(np.sum(1.0 / r))
        lo, hi = math.log(C * n + 1), 1.0 + math.log(C * n)
        if not (lo <= harmonic <= hi):
            raise AssertionError(
                f"harmonic sandwich violated: {lo} <= {harmonic} <= {hi}")
    return theta(n, gamma) / float(n) ** 2 * s


def _quadratic_sums(G: TestFunction, n: int, kern: JumpKernel) -> tuple[float, float, float]:
    """(full, slow, bound): unordered-bond sums of p(y-x)[G(y/n)-G(x/n)]^2.

    full is over all bonds, slow over those straddling the origin.  Bonds
    with exactly one end inside the numeric support and the other beyond the
    evaluation box contribute G(x/n)^2 * (analytic partial tail of p); the
    neglected cross terms are below 1e-14 * max|G| per bond and go into the
    certified bound.
    """
    c, g = kern.c_gamma, kern.gamma
    x0 = int(math.ceil(n * G.numeric_support))
    xd = x0 + n  # evaluation box half-width; G < 1e-14 outside |x| <= x0
    x = np.arange(-xd, xd + 1, dtype=np.int64)
    gv = np.asarray(G(x / n), dtype=float)
    n_pts = len(x)

    full = 0.0
    slow = 0.0
    for r in range(1, n_pts):
        p_r = c * float(r) ** (-g - 1.0)
        dg = gv[r:] - gv[:-r]
        full += p_r * float(np.sum(dg * dg))
        # slow bonds at spacing r: left end x in [-r, -1] (and inside the box)
        lo = max(0, xd - r)  # index of left end
        hi = xd  # exclusive: left ends are indices lo .. xd-1
        if lo < hi:
            ds = dg[lo:hi]
            slow += p_r * float(np.sum(ds * ds))

    # partner beyond the box: dg^2 = G(x/n)^2 up to 2 |G| * 1e-14 per bond
    inner = np.abs(x) <= x0
    xi = x[inner].astype(float)
    gi = gv[inner]
    t_right = np.array([_tail_sum(g + 1.0, xd - v) for v in xi])
    t_left = np.array([_tail_sum(g + 1.0, xd + v) for v in xi])
    full += c * float(np.sum(gi * gi * (t_right + t_left)))
    # slow such bonds: x < 0 with partner y > xd, or x >= 0 with partner < -xd
    neg = xi < 0
    slow += c * float(np.sum(gi[neg] ** 2 * t_right[neg]))
    slow += c * float(np.sum(gi[~neg] ** 2 * t_left[~neg]))

    # certified bound: cross terms 2|G(x)| * 1e-14, plus bonds with both ends
    # outside the box (each end < 1e-14)
    bound = 2e-14 * c * float(np.sum(np.abs(gi) * (t_right + t_left)))
    bound += 1e-28 * 4.0 * c * _tail_sum(g, 1.0)  # both-outside bonds, crude
    return full, slow, bound


def ab_values(n: int, beta: float, gamma: float, alpha: float,
              G: TestFunction, kern: JumpKernel | None = None) -> dict:
    """The quadratic-form sums A_{n,beta} and B_{n,beta}.

    Both are normalized over ordered pairs (twice the unordered bond sums) in
    every branch; with this convention A + B -> the squared norm of the
    gradient in every (beta, gamma) regime, B alone carries the barrier term
    (2 kappa / alpha_hat) [grad G(0)]^2 at beta = 1, gamma > 2.
    """
    _require_tag(G, beta, gamma)
    if kern is None or kern.gamma != gamma:
        from .kernel import build_kernel

        kern = build_kernel(gamma, 4096)
    th = theta(n, gamma)
    a_slow = alpha * float(n) ** (-beta)

    full, slow, bound = _quadratic_sums(G, n, kern)

    if beta < 1:
        A = th / n * 2.0 * full
        B = (a_slow - 1.0) * th / n * 2.0 * slow
    else:
        A = th / n * 2.0 * (full - slow)
        B = alpha * th * float(n) ** (-1.0 - beta) * 2.0 * slow
    return {"A": A, "B": B, "truncation_bound": th / n * 2.0 * bound}


def slow_bond_mass(cutoff: int, gamma: float = 3.0) -> dict:
    """Partial sums over slow bonds with both ends within +-cutoff.

    p_mass    -> 2m      (ordered pairs; each unordered bond counted twice)
    weighted  -> sigma^2 (gamma > 2; flagged divergent at gamma = 2)
    """
    c_gamma, m, sigma2, _ = moment_constants(float(gamma))
    r = np.arange(1, cutoff + 1, dtype=np.float64)
    p = c_gamma * r ** (-gamma - 1.0)
    # spacing r contributes r unordered bonds (x in [-r, -1]), all inside the
    # window for r <= cutoff
    p_mass = 2.0 * float(np.sum(r * p))
    p_tail = 2.0 * c_gamma * _tail_sum(gamma, cutoff)
    out = {"p_mass": p_mass, "p_mass_tail_bound": p_tail}
    if gamma > 2:
        out["weighted_mass"] = 2.0 * float(np.sum(r * r * p))
        out["weighted_tail_bound"] = 2.0 * c_gamma * _tail_sum(gamma - 1.0, cutoff)
        out["weighted_diverges"] = False
    else:
        out["weighted_mass"] = math.inf
        out["weighted_diverges"] = True
    return out


@dataclass
class ConvergenceReport:
    """Per-n metrics along an increasing grid, with trend flags."""

    n_grid: list[int]
    beta: float
    gamma: float
    function_id: str
    metrics: dict[str, list[float]] = field(default_factory=dict)
    targets: dict[str, float] = field(default_factory=dict)
    decay_exponent: dict[str, float] = field(default_factory=dict)
    passed: dict[str, bool] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n grid must be strictly increasing")

    def add_metric(self, name: str, values: list[float], target: float = 0.0) -> None:
        if not all(np.isfinite(values)):
            raise ValueError(f"metric {name} contains non-finite values")
        self.metrics[name] = list(values)
        self.targets[name] = target
        errs = np.abs(np.asarray(values) - target)
        self.passed[name] = bool(np.all(np.diff(errs) < 0))
        with np.errstate(divide="ignore"):
            ln, le = np.log(np.asarray(self.n_grid, float)), np.log(np.maximum(errs, 1e-300))
        slope = np.polyfit(ln, le, 1)[0]
        self.decay_exponent[name] = float(-slope)


def error_field_decay(n_grid: list[int], G_builder, kern: JumpKernel, beta: float,
                      alpha: float, b: float, t_end: float, n_records: int,
                      replicas: int, seed: int, window_factor: int = 2) -> ConvergenceReport:
    """Monte Carlo E[sup over recorded t of E_t^2] for each n in the grid."""
    from .fields import martingale_decomposition, site_weights
    from .process import SimParams, simulate
    from .kernel import BarrierParams

    report = ConvergenceReport(list(n_grid), beta, kern.gamma, "error-field")
    means, halfs = [], []
    for n in n_grid:
        G = G_builder(n)
        L = window_factor * n
        times = np.linspace(0.0, t_end, n_records + 1)
        params = SimParams(n=n, L=L, b=b, barrier=BarrierParams(alpha, beta),
                           kernel=kern, seed=seed, t_end=t_end, record_times=times)
        wf, wl = site_weights(G, n, -L, 2 * L, beta, alpha, kern)
        W = np.vstack([wf, wl])
        sups = np.empty(replicas)
        for rep in range(replicas):
            log = simulate(params, G=G, weight_arrays=W, replica=rep)
            traj = martingale_decomposition(log, G, kern, beta, alpha, b)
            sups[rep] = float(np.max(traj.E ** 2))
        means.append(float(sups.mean()))
        halfs.append(float(1.96 * sups.std(ddof=1) / math.sqrt(replicas)))
    report.add_metric("sup_E_sq", means, 0.0)
    report.metrics["sup_E_sq_ci_half"] = halfs
    return report


def report_to_csv(report: ConvergenceReport) -> str:
    """CSV rows `n,beta,gamma,metric,value,target,abs_err` (17 digits)."""
    buf = io.StringIO()
    buf.write("n,beta,gamma,metric,value,target,abs_err\n")
    for name, values in report.metrics.items():
        tgt = report.targets.get(name, 0.0)
        for n, v in zip(report.n_grid, values):
            buf.write(f"{n},{report.beta:.17g},{report.gamma:.17g},{name},"
                      f"{v:.17g},{tgt:.17g},{abs(v - tgt):.17g}\n")
    return buf.getvalue()
