"""CTMC simulation of the exclusion process with a slow barrier on a window.

The process lives on a finite window [-L, L) with out-of-window jumps
suppressed; because p is symmetric this preserves reversibility of the
Bernoulli product measure restricted to the window, so invariance checks
remain exact.  Tiny windows (<= 12 sites) get a dense-generator oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from ._sim import run_path
from .kernel import BarrierParams, JumpKernel, theta

__all__ = [
    "Configuration",
    "SimParams",
    "EventLog",
    "is_slow_bond",
    "init_bernoulli",
    "simulate",
    "replica_seed",
    "build_generator_matrix",
    "evolve_exact",
    "export_snapshots",
]


def is_slow_bond(x: int, y: int) -> bool:
    """True iff the bond {x, y} straddles the origin: min < 0 <= max."""
    if x == y:
        raise ValueError("a bond needs two distinct sites")
    return min(x, y) < 0 <= max(x, y)


@dataclass
class Configuration:
    """Occupancy state on the window [x_lo, x_lo + len(occupancy))."""

    x_lo: int
    occupancy: np.ndarray  # uint8 per site

    @property
    def n_sites(self) -> int:
        return len(self.occupancy)

    @property
    def particle_count(self) -> int:
        return int(np.sum(self.occupancy))


@dataclass
class SimParams:
    n: int
    L: int
    b: float
    barrier: BarrierParams
    kernel: JumpKernel
    seed: int
    t_end: float
    record_times: np.ndarray

    def __post_init__(self) -> None:
        if not (0.0 < self.b < 1.0):
            raise ValueError(f"density b must be in (0,1), got {self.b}")
        if self.L < self.n:
            raise ValueError(f"window half-width L={self.L} must be >= n={self.n}")
        self.record_times = np.asarray(self.record_times, dtype=float)
        if np.any(np.diff(self.record_times) <= 0):
            raise ValueError("record_times must be strictly increasing")
        if self.record_times[-1] > self.t_end + 1e-12:
            raise ValueError("record_times exceed t_end")

    @property
    def a_slow(self) -> float:
        a = self.barrier.alpha * float(self.n) ** (-self.barrier.beta)
        if a > 1.0:
            raise ValueError(
                f"alpha*n^-beta = {a:.3g} > 1: envelope cannot represent "
                "super-unit slow rates (need alpha <= n^beta)"
            )
        return a

    @property
    def theta_n(self) -> float:
        return theta(self.n, self.kernel.gamma)


@dataclass
class EventLog:
    """Recorded outputs of one simulated path."""

    times: np.ndarray
    n: int
    x_lo: int
    b: float
    seed: int
    snapshots: np.ndarray | None  # (T, n_sites) uint8
    Y: np.ndarray | None  # field values when a test function was supplied
    int_weights: np.ndarray | None  # (K, T) exact time integrals
    bracket_real: np.ndarray | None
    n_swaps: np.ndarray | None


def replica_seed(seed: int, replica: int, stream: int = 0) -> int:
    """Deterministic per-replica 64-bit seed from the master seed."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(replica, stream))
    return int(ss.generate_state(1, np.uint64)[0])


def init_bernoulli(params: SimParams, rng: np.random.Generator) -> Configuration:
    """Product-Bernoulli(b) initial configuration on the window."""
    occ = (rng.random(2 * params.L) < params.b).astype(np.uint8)
    return Configuration(x_lo=-params.L, occupancy=occ)


def simulate(
    params: SimParams,
    config: Configuration | None = None,
    G=None,
    weight_arrays: np.ndarray | None = None,
    record_snapshots: bool = False,
    replica: int = 0,
) -> EventLog:
    """Run one path and record at params.record_times (macro time).

    G (a TestFunction) enables field tracking; weight_arrays, shape
    (K, n_sites), enables exact time integrals of sum_x (eta-b) w_k(x).
    """
    a_slow = params.a_slow  # validates
    kern = params.kernel
    if config is None:
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(entropy=params.seed, spawn_key=(replica, 1))))
        config = init_bernoulli(params, rng)
    eta = np.array(config.occupancy, dtype=np.uint8)
    n_sites = len(eta)
    x_lo = config.x_lo

    # one-sided alias table over r = 1..cutoff
    one_sided = kern.support_prob[kern.cutoff:]
    from .kernel import _build_alias

    cut, alias = _build_alias(one_sided)
    rate_macro = n_sites * float(np.sum(one_sided)) * params.theta_n

    if G is not None:
        from .fields import _check_support

        _check_support(G, params.n, x_lo, n_sites)
        gv = G.lattice_values(params.n, x_lo, n_sites)
    else:
        gv = np.zeros(n_sites)
    weights = weight_arrays if weight_arrays is not None else np.zeros((0, n_sites))

    times = params.record_times
    n_rec = len(times)
    snaps = np.zeros((n_rec if record_snapshots else 0, n_sites), dtype=np.uint8)
    Y_out = np.zeros(n_rec)
    int_out = np.zeros((weights.shape[0], n_rec))
    br_out = np.zeros(n_rec)
    nsw_out = np.zeros(n_rec, dtype=np.int64)

    seed = replica_seed(params.seed, replica)
    run_path(np.uint64(seed), eta, x_lo, cut, alias, rate_macro, a_slow,
             np.asarray(times, dtype=float), np.asarray(gv, dtype=float),
             np.asarray(weights, dtype=float), params.b, float(params.n),
             snaps, Y_out, int_out, br_out, nsw_out)

    return EventLog(
        times=np.asarray(times, dtype=float),
        n=params.n,
        x_lo=x_lo,
        b=params.b,
        seed=seed,
        snapshots=snaps if record_snapshots else None,
        Y=Y_out if G is not None else None,
        int_weights=int_out if weights.shape[0] else None,
        bracket_real=br_out if G is not None else None,
        n_swaps=nsw_out,
    )


# ---------------------------------------------------------------------------
# exact oracle for tiny windows
# ---------------------------------------------------------------------------

def build_generator_matrix(params: SimParams, x_lo: int, n_sites: int) -> np.ndarray:
    """Dense generator over all 2^n_sites states (accelerated: macro time).

    Entry Q[s, s'] for s' = s with sites (i, j) swapped equals
    Theta(n) * p(j-i) * r^n_{x_i, x_j} whenever the occupancies differ.
    """
    if n_sites > 12:
        raise ValueError(f"{n_sites} sites would need {2**n_sites} states; max is 12")
    kern = params.kernel
    a_slow = params.a_slow
    th = params.theta_n
    n_states = 1 << n_sites
    Q = np.zeros((n_states, n_states))
    for i in range(n_sites):
        for j in range(i + 1, n_sites):
            rate = kern.c_gamma * float(j - i) ** (-kern.gamma - 1.0) * th
            if is_slow_bond(x_lo + i, x_lo + j):
                rate *= a_slow
            bi, bj = 1 << i, 1 << j
            for s in range(n_states):
                occ_i, occ_j = bool(s & bi), bool(s & bj)
                if occ_i != occ_j:
                    s2 = s ^ bi ^ bj
                    Q[s, s2] += rate
    np.fill_diagonal(Q, Q.diagonal() - Q.sum(axis=1))
    return Q


def evolve_exact(Q: np.ndarray, dist: np.ndarray, t: float) -> np.ndarray:
    """dist * exp(tQ) by scaling-and-squaring, uniformization as fallback."""
    out = dist @ expm(Q * t)
    if abs(out.sum() - 1.0) > 1e-10 or out.min() < -1e-10:
        out = _evolve_uniformization(Q, dist, t)
    return out


def _evolve_uniformization(Q: np.ndarray, dist: np.ndarray, t: float) -> np.ndarray:
    lam = float(np.max(-np.diag(Q)))
    if lam * t == 0.0:
        return dist.copy()
    P = np.eye(len(Q)) + Q / lam
    # run the Poisson sum until the remaining mass is < 1e-14
    out = np.zeros_like(dist)
    term = dist.copy()
    logw = -lam * t
    w = np.exp(logw)
    total = 0.0
    k = 0
    while total < 1.0 - 1e-14 and k < 100000:
        out += w * term
        total += w
        k += 1
        term = term @ P
        w *= lam * t / k
    return out / max(total, 1e-300)


def stationary_distribution(n_sites: int, b: float) -> np.ndarray:
    """Product-Bernoulli(b) over the 2^n_sites states (bit i = site i)."""
    dist = np.ones(1)
    for _ in range(n_sites):
        dist = np.concatenate([dist * (1 - b), dist * b])
    return dist


def export_snapshots(log: EventLog) -> str:
    """One line per record time: `t,eta_bits_hex` (site x_lo is bit 0 / LSB)."""
    if log.snapshots is None:
        raise ValueError("snapshots were not recorded")
    lines = ["t,eta_bits_hex"]
    for t, row in zip(log.times, log.snapshots):
        bits = 0
        for i in range(len(row) - 1, -1, -1):
            bits = (bits << 1) | int(row[i])
        lines.append(f"{t:.17g},{bits:x}")
    return "\n".join(lines) + "\n"
