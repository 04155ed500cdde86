"""The five limiting heat semigroups and OU covariance predictions.

Evaluators for the free, Neumann, Dirichlet, alpha-hat and Robin semigroups
(unit diffusivity; OU predictions evaluate them at rescaled time kappa * t),
plus an independent Crank-Nicolson reference solver used to cross-check the
quadrature evaluators.

The alpha-hat semigroup is an iterated integral in its raw form; Fubini
collapses it to a single quadrature against an erfcx-regularized kernel:

    P^a g(x) = int_0^inf [2a g(z) - g'(z)] [E(x,z) - E(x,-z)] dz,
    E(x,z)   = (1/2) erfcx((x - z + 4at) / (2 sqrt t)) exp(-(x-z)^2 / 4t),

which is numerically stable for all arguments (no e^{2ax} overflow).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu
from scipy.special import erfcx

from .fields import TestFunction, norm_2bg

__all__ = [
    "SemigroupEvaluator",
    "PDEReference",
    "heat_kernel",
    "apply",
    "ou_covariance",
    "mart_variance_profile",
    "pde_reference",
    "covariance_table_csv",
]

_KINDS = ("Free", "Neumann", "Dirichlet", "AlphaHat", "Robin")
_QUAD_OPTS = dict(epsabs=1e-10, epsrel=1e-10, limit=400)


def heat_kernel(t: float, x: float) -> float:
    """phi_t(x) = exp(-x^2 / 4t) / sqrt(4 pi t)."""
    if t <= 0:
        raise ValueError(f"heat kernel needs t > 0, got t={t}")
    return math.exp(-x * x / (4.0 * t)) / math.sqrt(4.0 * math.pi * t)


@dataclass(frozen=True)
class SemigroupEvaluator:
    """One of the five kinds, with quadrature policy fixed at construction."""

    kind: str
    alpha_hat: float | None = None
    radius: float = 30.0
    tol: float = 1e-8

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown semigroup kind {self.kind!r}")
        if self.kind in ("AlphaHat", "Robin"):
            if self.alpha_hat is None or self.alpha_hat <= 0:
                raise ValueError(f"{self.kind} requires alpha_hat > 0")

    def check_radius(self, t: float, support: float) -> None:
        need = 8.0 * math.sqrt(max(t, 0.0)) + support
        if self.radius < need:
            raise ValueError(
                f"truncation radius {self.radius} below required {need:.2f}")


def _deriv_of(g):
    """First derivative accessor; refuse objects without exact derivatives."""
    if isinstance(g, TestFunction) or hasattr(g, "__call__") and _accepts_order(g):
        return lambda u: g(u, 1)
    raise TypeError(
        "this semigroup needs the first derivative of g; pass a TestFunction "
        "or a callable accepting g(u, k)"
    )


def _accepts_order(g) -> bool:
    try:
        g(0.0, 1)
        return True
    except TypeError:
        return False


def _interior(lo, hi, *pts):
    return [p for p in pts if lo < p < hi] or None


def _free(t, g, x, radius):
    lo, hi = x - radius, x + radius
    f, _ = quad(lambda y: heat_kernel(t, x - y) * g(y),
                lo, hi, points=_interior(lo, hi, 0.0, x), **_QUAD_OPTS)
    return f


def _neumann(t, g, x, radius):
    s = 1.0 if x >= 0 else -1.0
    f, _ = quad(lambda y: (heat_kernel(t, x - s * y) + heat_kernel(t, x + s * y)) * g(s * y),
                0.0, radius, points=_interior(0.0, radius, abs(x)), **_QUAD_OPTS)
    return f


def _dirichlet(t, g, x, radius):
    f, _ = quad(lambda y: (heat_kernel(t, x - y) - heat_kernel(t, x + y)) * g(y),
                0.0, radius, points=_interior(0.0, radius, abs(x)), **_QUAD_OPTS)
    return f


def _alpha_kernel(t, a, x, z):
    # E(x, z) from the module docstring
    st = 2.0 * math.sqrt(t)
    w = (x - z + 4.0 * a * t) / st
    gauss = math.exp(-((x - z) ** 2) / (4.0 * t))
    if w >= 0.0:
        return 0.5 * erfcx(w) * gauss
    # erfcx blows up as e^{w^2} for w << 0; fold that factor analytically:
    # erfcx(w) = 2 e^{w^2} - erfcx(-w), and e^{w^2} * gauss = e^{2a(x-z)+4a^2 t}
    return math.exp(2.0 * a * (x - z) + 4.0 * a * a * t) - 0.5 * erfcx(-w) * gauss


def _alphahat(t, g, dg, x, a, radius):
    def integrand(z):
        return (2.0 * a * g(z) - dg(z)) * (_alpha_kernel(t, a, x, z) - _alpha_kernel(t, a, x, -z))

    f, _ = quad(integrand, 0.0, radius, points=_interior(0.0, radius, abs(x)),
                **_QUAD_OPTS)
    return f


def apply(ev: SemigroupEvaluator, t: float, g, x: float) -> float:
    """Evaluate (P_t g)(x) for the evaluator's kind (unit diffusivity time t)."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if t == 0.0:
        return float(g(x))
    support = getattr(g, "numeric_support", 10.0)
    ev.check_radius(t, support)
    r = ev.radius
    if ev.kind == "Free":
        return _free(t, g, x, r)
    if ev.kind == "Neumann":
        return _neumann(t, g, x, r)
    if ev.kind == "Dirichlet":
        return _dirichlet(t, g, x, r)
    if ev.kind == "AlphaHat":
        return _alphahat(t, g, _deriv_of(g), x, ev.alpha_hat, r)
    # Robin: even/odd split; the x < 0 branch mirrors through the origin
    a = ev.alpha_hat
    dg = _deriv_of(g)

    def eg(u):
        return 0.5 * (g(u) + g(-u))

    def og(u):
        return 0.5 * (g(u) - g(-u))

    def dog(u):
        return 0.5 * (dg(u) + dg(-u))

    if x >= 0:
        return _free(t, eg, x, r) + _alphahat(t, og, dog, x, a, r)
    return _free(t, eg, -x, r) - _alphahat(t, og, dog, -x, a, r)


def kind_for(beta: float, gamma: float) -> str:
    """The semigroup kind matching the (beta, gamma) regime."""
    if beta < 1:
        return "Free"
    if beta == 1 and gamma > 2:
        return "Robin"
    return "Neumann"


def ou_covariance(G1, G2, t: float, beta: float, gamma: float, alpha: float,
                  b: float, radius: float = 30.0) -> float:
    """Stationary OU covariance chi(b) int G1(u) (P_{kappa t} G2)(u) du.

    The semigroup kind follows the regime; time is rescaled by the
    diffusivity kappa_gamma since the kernels are written at unit diffusivity.
    """
    from .kernel import moment_constants

    _, m, sigma2, kappa = moment_constants(gamma)
    kind = kind_for(beta, gamma)
    ah = None
    if kind == "Robin":
        ah = 2.0 * alpha * m / sigma2
    for G in (G1, G2):
        if isinstance(G, TestFunction):
            want = {"Free": "schwartz", "Robin": "robin", "Neumann": "neumann"}[kind]
            if G.space_tag != want:
                raise ValueError(
                    f"function tagged {G.space_tag!r}; regime (beta={beta}, "
                    f"gamma={gamma}) requires {want!r}")
    ev = SemigroupEvaluator(kind, alpha_hat=ah, radius=radius)
    chi = b * (1.0 - b)
    ts = kappa * t
    s = getattr(G1, "numeric_support", 10.0)

    def integrand(u):
        return float(G1(u)) * apply(ev, ts, G2, u)

    left, _ = quad(integrand, -s, 0.0, epsabs=1e-8, limit=200)
    right, _ = quad(integrand, 0.0, s, epsabs=1e-8, limit=200)
    return chi * (left + right)


def _grad_evolved(ev: SemigroupEvaluator, ts: float, G, u: float, h: float = 1e-4) -> float:
    """d/du (P_ts G)(u) by Richardson-extrapolated central differences.

    Evaluation points are kept strictly on one side of the origin so the
    interface jump is never straddled.
    """
    side = 1.0 if u >= 0 else -1.0
    if abs(u) < 2.0 * h:
        u = side * 2.0 * h  # nudge off the interface, same side
    d1 = (apply(ev, ts, G, u + h) - apply(ev, ts, G, u - h)) / (2.0 * h)
    d2 = (apply(ev, ts, G, u + 2 * h) - apply(ev, ts, G, u - 2 * h)) / (4.0 * h)
    return (4.0 * d1 - d2) / 3.0


def mart_variance_profile(G, t: float, beta: float, gamma: float, alpha: float,
                          b: float, n_time: int = 8, n_space: int = 80) -> float:
    """chi(b) * int_0^t (squared 2-beta-gamma norm of grad P_{kappa r} G) dr.

    Gauss-Legendre in r; the space integral of the squared gradient uses a
    uniform grid per half-line (the integrand is smooth off the origin).
    """
    if t == 0.0:
        return 0.0
    from .kernel import moment_constants

    _, m, sigma2, kappa = moment_constants(gamma)
    kind = kind_for(beta, gamma)
    ah = 2.0 * alpha * m / sigma2 if kind == "Robin" else None
    ev = SemigroupEvaluator(kind, alpha_hat=ah)
    chi = b * (1.0 - b)
    s = getattr(G, "numeric_support", 6.0) + 8.0 * math.sqrt(kappa * t)

    nodes, weights = np.polynomial.legendre.leggauss(n_time)
    r_nodes = 0.5 * t * (nodes + 1.0)
    r_weights = 0.5 * t * weights

    total = 0.0
    for rv, rw in zip(r_nodes, r_weights):
        ts = kappa * rv
        us = np.linspace(1e-3, s, n_space)
        du = us[1] - us[0]
        grad_sq = 0.0
        for sign in (1.0, -1.0):
            vals = np.array([_grad_evolved(ev, ts, G, sign * u) ** 2 for u in us])
            grad_sq += float(np.trapezoid(vals, dx=du))
        norm = 2.0 * kappa * grad_sq
        if kind == "Robin":
            g0 = apply(ev, ts, G, 0.0)
            norm += 2.0 * kappa * g0 * g0 / ah
        total += rw * norm
    return chi * total


# ---------------------------------------------------------------------------
# PDE reference (independent oracle)
# ---------------------------------------------------------------------------

@dataclass
class PDEReference:
    """Finite-volume Crank-Nicolson solution of u_t = kappa u_xx."""

    kind: str
    x: np.ndarray  # node centers; origin on a cell boundary
    u: np.ndarray
    t: float
    kappa: float
    alpha_hat: float | None

    def __call__(self, xq):
        """Interpolate per side; never across the interface jump at 0."""
        xq = np.asarray(xq, dtype=float)
        mid = len(self.x) // 2
        xl, ul = self.x[:mid], self.u[:mid]
        xr, ur = self.x[mid:], self.u[mid:]
        # linear extrapolation into the half-cell next to the interface
        left = np.interp(np.minimum(xq, xl[-1]), xl, ul) \
            + np.clip(xq - xl[-1], 0.0, None) * (ul[-1] - ul[-2]) / (xl[-1] - xl[-2])
        right = np.interp(np.maximum(xq, xr[0]), xr, ur) \
            + np.clip(xq - xr[0], None, 0.0) * (ur[1] - ur[0]) / (xr[1] - xr[0])
        out = np.where(xq < 0, left, right)
        return out if out.ndim else float(out)


def _build_fv_matrix(n_cells: int, h: float, kind: str, alpha_hat: float | None):
    """Flux-form spatial operator A with the interface face in the middle.

    Second-order everywhere: interior faces use (u_{j+1} - u_j)/h; the
    interface face uses one-sided quadratic extrapolation of u(0+-) and
    imposes flux = alpha_hat [u(0+) - u(0-)] (Robin), 0 (Neumann), or the
    plain difference (Free).  Outer boundaries are absorbing (u = 0).
    """
    mid = n_cells // 2  # interface face sits between cells mid-1 and mid
    rows, cols, vals = [], [], []

    def add(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    # face fluxes F_f for f = 0..n_cells; du_j/dt ~ (F_{j+1} - F_j)/h
    # interior faces f between cells f-1 and f: F = (u_f - u_{f-1})/h
    # represent A directly: A[j, :] = (F_{j+1} - F_j)/h
    for j in range(n_cells):
        for f, sgn in ((j + 1, +1.0), (j, -1.0)):
            if f == 0 or f == n_cells:
                # absorbing outer boundary: ghost value -u adjacent => flux
                # -2u/h (u = 0 on the boundary face)
                add(j, j, sgn * (-2.0 / h) / h)
                continue
            if f == mid and kind != "Free":
                if kind == "Neumann":
                    continue  # zero flux
                a = alpha_hat
                # u(0-) ~ (3 u_{mid-1} - u_{mid-2})/2, u(0+) ~ (3 u_mid - u_{mid+1})/2
                add(j, mid, sgn * a * 1.5 / h)
                add(j, mid + 1, sgn * a * (-0.5) / h)
                add(j, mid - 1, sgn * a * (-1.5) / h)
                add(j, mid - 2, sgn * a * 0.5 / h)
                continue
            add(j, f, sgn * 1.0 / h / h)
            add(j, f - 1, sgn * (-1.0) / h / h)
    A = csc_matrix((vals, (rows, cols)), shape=(n_cells, n_cells))
    return A


def pde_reference(kind: str, t: float, g, kappa: float = 1.0,
                  alpha_hat: float | None = None, half_width: float = 12.0,
                  n_cells: int = 2400, n_steps: int | None = None) -> PDEReference:
    """Crank-Nicolson evolution of g under the kind's interface condition."""
    if kind not in ("Free", "Neumann", "Robin"):
        raise ValueError(f"pde_reference supports Free/Neumann/Robin, got {kind!r}")
    if kind == "Robin" and (alpha_hat is None or alpha_hat <= 0):
        raise ValueError("Robin kind requires alpha_hat > 0")
    if n_cells % 2:
        raise ValueError("n_cells must be even so the origin is a cell boundary")
    h = 2.0 * half_width / n_cells
    x = -half_width + h * (np.arange(n_cells) + 0.5)
    u = np.asarray([float(g(v)) for v in x])
    if t == 0.0:
        return PDEReference(kind, x, u, 0.0, kappa, alpha_hat)
    if n_steps is None:
        n_steps = max(200, int(math.ceil(kappa * t / (0.5 * h))))
    dt = t / n_steps
    # CFL-type sanity: CN is A-stable, but keep dt/h modest for accuracy
    if kappa * dt / h > 50.0:
        raise ValueError(
            f"step size dt={dt:.3g} too coarse for h={h:.3g}; refuse")
    A = _build_fv_matrix(n_cells, h, kind, alpha_hat) * kappa
    from scipy.sparse import identity

    lhs = splu(csc_matrix(identity(n_cells) - 0.5 * dt * A))
    rhs = identity(n_cells) + 0.5 * dt * A
    for _ in range(n_steps):
        u = lhs.solve(rhs @ u)
    return PDEReference(kind, x, u, t, kappa, alpha_hat)


def covariance_table_csv(rows: list[tuple[float, str, float]]) -> str:
    """CSV `t,kind,prediction` (17 significant digits)."""
    out = ["t,kind,prediction"]
    for t, kind, pred in rows:
        out.append(f"{t:.17g},{kind},{pred:.17g}")
    return "\n".join(out) + "\n"
