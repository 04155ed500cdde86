"""Experiment runner: config parsing, seeded execution, artifact persistence.

Config files are flat `key = value` text (# comments allowed).  Every key maps
1:1 to a module parameter and unknown keys are rejected up front.  Artifacts
embed the config hash and master seed; wall-clock timestamps only ever appear
in the sidecar `.meta.json` files so CSV bodies are byte-identical on rerun.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

# key -> (type, required-by-default); n_grid is a comma list
_SCHEMA = {
    "gamma": float,
    "beta": float,
    "alpha": float,
    "n": int,
    "n_grid": str,
    "window_halfwidth": int,
    "b": float,
    "seed": int,
    "t_end": float,
    "record_dt": float,
    "replicas": int,
    "cutoff": int,
    "output_dir": str,
    "tf.family": str,
    "tf.space": str,
    "tf.center": float,
    "tf.width": float,
    "tf.amplitude": float,
    "tf.center_minus": float,
    "tf.amplitude_minus": float,
    "tf.width_minus": float,
    "tf.order": int,
    "tf.correction_width": float,
}

_DEFAULTS = {
    "alpha": 1.0,
    "b": 0.5,
    "cutoff": 4096,
    "replicas": 100,
    "tf.family": "gaussian-bump",
    "tf.space": "auto",
    "tf.center": 0.0,
    "tf.width": 0.5,
    "tf.amplitude": 1.0,
    "output_dir": ".",
}


class ConfigError(Exception):
    pass


def parse_config(path: str) -> dict:
    cfg = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                cfg[key] = _SCHEMA[key](val)
            except ValueError:
                raise ConfigError(
                    f"{path}:{lineno}: key {key!r} expects "
                    f"{_SCHEMA[key].__name__}, got {val!r}") from None
    return cfg


def config_hash(cfg: dict) -> str:
    body = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(body.encode()).hexdigest()[:16]


def _require(cfg: dict, *keys: str) -> None:
    for k in keys:
        if k not in cfg:
            raise ConfigError(f"missing required config key {k!r}")


def _get(cfg: dict, key: str):
    if key in cfg:
        return cfg[key]
    if key in _DEFAULTS:
        return _DEFAULTS[key]
    raise ConfigError(f"missing required config key {key!r}")


def _workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get("SLOWBOND_WORKERS")
    return max(1, int(env)) if env else 1


def _build_test_function(cfg: dict, beta: float, gamma: float, alpha: float):
    from .kernel import build_kernel, alpha_hat
    from .fields import make_test_function
    from .operator_limits import _space_for

    space = _get(cfg, "tf.space")
    if space == "auto":
        space = _space_for(beta, gamma)
    ah = None
    if space == "robin":
        ah = alpha_hat(alpha, build_kernel(gamma, 64))
    params = {}
    for short in ("center", "width", "amplitude", "center_minus",
                  "amplitude_minus", "width_minus", "order", "correction_width"):
        key = f"tf.{short}"
        if key in cfg:
            params[short] = cfg[key]
        elif short in ("center", "width", "amplitude") and space != "schwartz":
            params[short] = _DEFAULTS[key]
    family = _get(cfg, "tf.family")
    return make_test_function(family, params, space, alpha_hat=ah), space


class ArtifactWriter:
    """Tracks written files so a failed run leaves nothing half-baked."""

    def __init__(self, out_dir: str, cfg: dict, seed: int):
        self.out_dir = out_dir
        self.header = f"# config_sha256={config_hash(cfg)}\n# seed={seed}\n"
        self.written: list[str] = []
        os.makedirs(out_dir, exist_ok=True)

    def write(self, name: str, body: str, stamped: bool = True) -> str:
        path = os.path.join(self.out_dir, name)
        with open(path, "w") as fh:
            if stamped:
                fh.write(self.header)
            fh.write(body)
        self.written.append(path)
        return path

    def write_json(self, name: str, doc: dict) -> str:
        stamped = {"config_sha256": self.header.split("=")[1].splitlines()[0],
                   "seed": int(self.header.rsplit("=", 1)[1])}
        stamped.update(doc)
        return self.write(name, json.dumps(stamped, indent=2) + "\n", stamped=False)

    def sidecar(self, name: str, extra: dict | None = None) -> None:
        meta = {"created_unix": time.time(), "files": [os.path.basename(p) for p in self.written]}
        if extra:
            meta.update(extra)
        path = os.path.join(self.out_dir, name)
        with open(path, "w") as fh:
            json.dump(meta, fh, indent=2)
        self.written.append(path)

    def rollback(self) -> None:
        for path in self.written:
            try:
                os.remove(path)
            except OSError:
                pass


def _run_ensemble(params, G, W, replicas: int, workers: int):
    """Replica fan-out; results aggregated in replica order regardless of
    completion order."""
    from .process import simulate

    if workers <= 1:
        return [simulate(params, G=G, weight_arrays=W, replica=r)
                for r in range(replicas)]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = {r: pool.submit(simulate, params, G=G, weight_arrays=W, replica=r)
                for r in range(replicas)}
        return [futs[r].result() for r in range(replicas)]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_simulate(cfg: dict, seed: int, out: ArtifactWriter, workers: int) -> None:
    from .kernel import BarrierParams, build_kernel
    from .process import SimParams
    from .fields import martingale_decomposition, site_weights, trajectory_to_csv

    _require(cfg, "gamma", "beta", "n", "t_end", "record_dt")
    gamma, beta = cfg["gamma"], cfg["beta"]
    alpha = _get(cfg, "alpha")
    n = cfg["n"]
    L = cfg.get("window_halfwidth", 2 * n)
    b = _get(cfg, "b")
    replicas = _get(cfg, "replicas")
    kern = build_kernel(gamma, _get(cfg, "cutoff"))
    G, _ = _build_test_function(cfg, beta, gamma, alpha)
    times = np.arange(0.0, cfg["t_end"] + 1e-12, cfg["record_dt"])
    params = SimParams(n=n, L=L, b=b, barrier=BarrierParams(alpha, beta),
                       kernel=kern, seed=seed, t_end=cfg["t_end"],
                       record_times=times)
    wf, wl = site_weights(G, n, -L, 2 * L, beta, alpha, kern)
    W = np.vstack([wf, wl])
    logs = _run_ensemble(params, G, W, replicas, workers)
    for r, log in enumerate(logs):
        traj = martingale_decomposition(log, G, kern, beta, alpha, b)
        out.write(f"trajectory_rep{r:05d}.csv", trajectory_to_csv(traj))
    out.sidecar("simulate.meta.json", {"replicas": replicas, "n": n})


def _cmd_verify_operators(cfg: dict, seed: int, out: ArtifactWriter, workers: int) -> int:
    from .kernel import build_kernel
    from .operator_limits import ConvergenceReport, knbeta_error, ab_values, report_to_csv
    from .fields import norm_2bg, grad_op

    gamma = cfg.get("gamma", 3.0)
    beta = cfg.get("beta", 0.0)
    alpha = _get(cfg, "alpha")
    grid = [int(s) for s in cfg.get("n_grid", "64,128,256").split(",")]
    kern = build_kernel(gamma, _get(cfg, "cutoff"))
    G, _ = _build_test_function(cfg, beta, gamma, alpha)
    report = ConvergenceReport(grid, beta, gamma, "bundled")
    l1s, sups, As, Bs = [], [], [], []
    for n in grid:
        r = knbeta_error(n, beta, gamma, G, kern)
        ab = ab_values(n, beta, gamma, alpha, G, kern)
        l1s.append(r["l1"])
        sups.append(r["sup"])
        As.append(ab["A"])
        Bs.append(ab["B"])
    ah = None
    if beta == 1 and gamma > 2:
        from .kernel import alpha_hat

        ah = alpha_hat(alpha, kern)
    tgt = norm_2bg(grad_op(G), beta, gamma, ah)
    report.add_metric("l1_error", l1s, 0.0)
    report.add_metric("sup_value", sups, 0.0)
    report.add_metric("A_plus_B", [a + b_ for a, b_ in zip(As, Bs)], tgt)
    out.write("operators.csv", report_to_csv(report))
    ok = report.passed["l1_error"]
    out.write_json("operators.json",
                   {"statistic": "l1 monotone decrease",
                    "verdict": "pass" if ok else "fail",
                    "l1": l1s, "n_grid": grid})
    out.sidecar("verify-operators.meta.json")
    return 0 if ok else 1


def _cmd_verify_semigroups(cfg: dict, seed: int, out: ArtifactWriter, workers: int) -> None:
    from .kernel import build_kernel, alpha_hat
    from .semigroups import (SemigroupEvaluator, apply, ou_covariance,
                             pde_reference, covariance_table_csv)

    gamma = cfg.get("gamma", 3.0)
    alpha = _get(cfg, "alpha")
    b = _get(cfg, "b")
    kern = build_kernel(gamma, 64)
    ah = alpha_hat(alpha, kern) if gamma > 2 else None

    checks = {}
    ev_d = SemigroupEvaluator("Dirichlet")
    checks["dirichlet_origin"] = abs(apply(ev_d, 0.1, lambda u: math.exp(-(u - 1) ** 2), 0.0))

    ev_f = SemigroupEvaluator("Free")
    from .semigroups import heat_kernel

    s, t = 0.05, 0.1
    lhs = apply(ev_f, s + t, lambda u: heat_kernel(0.3, u), 0.4)
    inner = lambda u: apply(ev_f, s, lambda v: heat_kernel(0.3, v), u)
    rhs = apply(ev_f, t, inner, 0.4)
    checks["chapman_kolmogorov"] = abs(lhs - rhs)

    G, _ = _build_test_function({**cfg, "tf.space": "schwartz"}, 0.0, gamma, alpha)
    pde = pde_reference("Free", 0.1, G, kappa=kern.kappa_gamma)
    xs = np.linspace(-4.0, 4.0, 33)
    checks["free_vs_pde"] = max(
        abs(float(pde(x)) - apply(ev_f, kern.kappa_gamma * 0.1, G, float(x))) for x in xs)

    rows = []
    for tt in (0.0, 0.025, 0.05, 0.1):
        for beta, kind in ((0.0, "Free"), (2.0, "Neumann")):
            Gk, _ = _build_test_function(
                {k: v for k, v in cfg.items() if k.startswith("tf.") and k != "tf.space"},
                beta, gamma, alpha)
            rows.append((tt, kind, ou_covariance(Gk, Gk, tt, beta, gamma, alpha, b)))
    out.write("covariance_table.csv", covariance_table_csv(rows))
    out.write_json("semigroups.json",
                   {"statistic": "semigroup property suite", "checks": checks,
                    "verdict": "pass" if checks["chapman_kolmogorov"] < 1e-6
                    and checks["dirichlet_origin"] < 1e-12
                    and checks["free_vs_pde"] < 1e-3 else "fail"})
    out.sidecar("verify-semigroups.meta.json")


def _cmd_oracle(cfg: dict, seed: int, out: ArtifactWriter, workers: int) -> int:
    from .oracle import small_window_comparison

    gamma = cfg.get("gamma", 3.0)
    replicas = _get(cfg, "replicas")
    res = small_window_comparison(seed=seed, gamma=gamma,
                                  beta=cfg.get("beta", 1.0),
                                  alpha=_get(cfg, "alpha"), b=_get(cfg, "b"),
                                  replicas=replicas)
    ok = res["tv_distance"] < 0.02 and res["qv_rel_err"] < 0.02
    res["verdict"] = "pass" if ok else "fail"
    out.write_json("oracle.json", res)
    out.sidecar("oracle.meta.json")
    return 0 if ok else 1


def _cmd_covariance(cfg: dict, seed: int, out: ArtifactWriter, workers: int) -> None:
    from .kernel import BarrierParams, build_kernel
    from .process import SimParams
    from .fields import site_weights
    from .semigroups import ou_covariance
    from .stats import ReplicaEnsemble, covariance_lag, summary_json

    _require(cfg, "gamma", "beta", "n", "t_end")
    gamma, beta, n = cfg["gamma"], cfg["beta"], cfg["n"]
    alpha = _get(cfg, "alpha")
    b = _get(cfg, "b")
    replicas = _get(cfg, "replicas")
    L = cfg.get("window_halfwidth", 2 * n)
    t_end = cfg["t_end"]
    kern = build_kernel(gamma, _get(cfg, "cutoff"))
    G, _ = _build_test_function(cfg, beta, gamma, alpha)
    times = np.array([0.0, t_end])
    params = SimParams(n=n, L=L, b=b, barrier=BarrierParams(alpha, beta),
                       kernel=kern, seed=seed, t_end=t_end, record_times=times)
    logs = _run_ensemble(params, G, None, replicas, workers)
    from .process import replica_seed

    ens = ReplicaEnsemble(times, np.array([lg.Y for lg in logs]),
                          [replica_seed(seed, r) for r in range(replicas)])
    est = covariance_lag(ens, t_end)
    pred = ou_covariance(G, G, t_end, beta, gamma, alpha, b)
    out.write_json("covariance.json", json.loads(summary_json(
        "Cov(Y_0, Y_t) vs OU prediction", est["estimate"], est["ci_lo"],
        est["ci_hi"], pred)))
    out.sidecar("covariance.meta.json")


def _cmd_report(cfg: dict, seed: int, out: ArtifactWriter, workers: int) -> int:
    verdicts = {}
    for name in sorted(os.listdir(out.out_dir)):
        if not name.endswith(".json") or name.endswith(".meta.json"):
            continue
        if name == "report.json":
            continue
        with open(os.path.join(out.out_dir, name)) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError:
                continue
        if "verdict" in doc:
            verdicts[name] = doc["verdict"]
    overall = "pass" if verdicts and all(v == "pass" for v in verdicts.values()) else "fail"
    out.write_json("report.json",
                   {"statistic": "aggregate", "verdicts": verdicts,
                    "verdict": overall})
    out.sidecar("report.meta.json")
    return 0 if overall == "pass" else 1


_COMMANDS = {
    "simulate": _cmd_simulate,
    "verify-operators": _cmd_verify_operators,
    "verify-semigroups": _cmd_verify_semigroups,
    "oracle": _cmd_oracle,
    "covariance": _cmd_covariance,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="slowbond")
    ap.add_argument("subcommand", choices=sorted(_COMMANDS))
    ap.add_argument("--config", required=True)
    ap.add_argument("--seed-override", type=int, default=None)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out", default=None)
    args = ap.parse_args(argv)

    try:
        cfg = parse_config(args.config)
        seed = args.seed_override if args.seed_override is not None else _get(cfg, "seed")
        out_dir = args.out if args.out is not None else _get(cfg, "output_dir")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2

    writer = ArtifactWriter(out_dir, cfg, seed)
    try:
        status = _COMMANDS[args.subcommand](cfg, seed, writer, _workers(args))
    except ConfigError as exc:
        writer.rollback()
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        writer.rollback()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return int(status or 0)


if __name__ == "__main__":
    sys.exit(main())
