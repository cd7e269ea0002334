"""Command-line harness: experiment orchestration and CSV/JSON emission.

Subcommands map to experiment kinds:

* ``outage``       outage probability versus SNR (optionally sweeping l)
* ``secrecy-rate`` mean secrecy rate versus SNR (optionally sweeping k)
* ``validate``     cross-module consistency suite, machine-readable report
* ``dist-check``   distributional probes (projection ratio, threshold events)

Presets ``fig2`` (n=4, k=10, gamma=1, l in {2,3,4}) and ``fig3``
(n=l=3, k in {4,6,8,10,12}) reproduce the headline experiments.
Outputs are byte-deterministic for a fixed spec and seed, independent of
the worker count.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from .channel import SystemConfig
from .kernels import active_backend, workers_from_env
from .outage import (
    DEFAULT_FIT_WINDOW_DB,
    InsufficientData,
    beta_ratio_check,
    diversity_slope,
    estimate_mean_rates,
    estimate_outage,
    outage_upper_bound,
    pout1_check,
    pout2_check,
)
from .validation import run_checks

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_IO = 3

_PRESETS = {
    "fig2": dict(kind="outage", n=4, k=10, l_sweep=(2, 3, 4), gamma=1.0,
                 trials=1_000_000, snr_db="0:45:2.5", mode="exact"),
    "fig3": dict(kind="secrecy-rate", n=3, l=3, k_sweep=(4, 6, 8, 10, 12),
                 gamma=1.0, trials=100_000, snr_db="0:40:5", mode="exact"),
}

_DEFAULT_TRIALS = {"outage": 1_000_000, "secrecy-rate": 100_000,
                   "validate": 0, "dist-check": 100_000}


class UsageError(Exception):
    """Bad flag combination; message names the offending flag."""


@dataclass
class ExperimentSpec:
    kind: str
    n: int
    k: int
    l: int | None
    m: int
    gamma: float
    epsilon: float
    seed: int
    snr_grid_db: tuple
    trials: int
    mode: str
    out_path: str | None
    l_sweep: tuple
    k_sweep: tuple
    label: str          # normalized flag record for the CSV header comment

    def config(self, l=None, k=None) -> SystemConfig:
        try:
            return SystemConfig(n=self.n, k=k if k is not None else self.k,
                                l=l if l is not None else self.l, m=self.m,
                                sigma2=1.0, snr=1.0, gamma=self.gamma,
                                epsilon=self.epsilon, seed=self.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None


def parse_snr_grid(text: str) -> tuple:
    """Parse ``lo:hi:step`` (inclusive) or a single value into a grid."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return (float(parts[0]),)
        if len(parts) != 3:
            raise ValueError
        lo, hi, step = (float(p) for p in parts)
    except ValueError:
        raise UsageError(f"--snr-db expects 'lo:hi:step' or a single value, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise UsageError("--snr-db needs step > 0 and hi >= lo")
    grid = np.arange(lo, hi + step / 2, step)
    if grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise UsageError("--snr-db grid must be strictly increasing")
    return tuple(float(x) for x in grid)


def parse_args(argv) -> ExperimentSpec:
    parser = argparse.ArgumentParser(
        prog="relaysec",
        description="Monte Carlo secrecy-rate and outage experiments for "
                    "untrusted amplify-and-forward relay networks.",
    )
    parser.add_argument("kind", nargs="?",
                        choices=["outage", "secrecy-rate", "validate", "dist-check"])
    parser.add_argument("--preset", choices=sorted(_PRESETS))
    parser.add_argument("--n", type=int, help="transmit antennas")
    parser.add_argument("--k", type=int, help="relay count")
    parser.add_argument("--l", type=int, help="selected relay count")
    parser.add_argument("--m", type=int, default=10, help="symbol pairs per relay")
    parser.add_argument("--gamma", type=float, help="secrecy-rate threshold (default 1.0)")
    parser.add_argument("--epsilon", type=float, default=0.05)
    parser.add_argument("--snr-db", dest="snr_db", help="grid as lo:hi:step, inclusive")
    parser.add_argument("--trials", type=int)
    parser.add_argument("--mode", choices=["exact", "asymptotic"])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", dest="out_path")
    args = parser.parse_args(argv)

    preset = dict(_PRESETS[args.preset]) if args.preset else {}
    kind = args.kind or preset.get("kind")
    if kind is None:
        raise UsageError("a command (outage, secrecy-rate, validate, dist-check) "
                         "or --preset is required")
    if preset and preset.get("kind") not in (None, kind):
        raise UsageError(f"--preset {args.preset} runs kind {preset['kind']!r}, not {kind!r}")

    def pick(flag, fallback=None):
        v = getattr(args, flag)
        return v if v is not None else preset.get(flag, fallback)

    n = pick("n")
    k = pick("k")
    l = pick("l")
    l_sweep = (l,) if l is not None else preset.get("l_sweep", ())
    k_sweep = (k,) if k is not None else preset.get("k_sweep", ())
    if kind in ("outage", "secrecy-rate", "dist-check"):
        if n is None:
            raise UsageError("--n is required (or use --preset)")
        if k is None and not k_sweep:
            raise UsageError("--k is required (or use --preset)")
        if l is None and not l_sweep:
            raise UsageError("--l is required (or use --preset)")
    elif kind == "validate":
        n = n if n is not None else 4
        k = k if k is not None else 10
        l = l if l is not None else 3
        l_sweep, k_sweep = (l,), (k,)

    grid_text = args.snr_db or preset.get("snr_db") or "0:40:5"
    trials = pick("trials", _DEFAULT_TRIALS[kind])
    if kind in ("outage", "secrecy-rate") and (trials is None or trials < 1):
        raise UsageError("--trials must be >= 1")
    mode = pick("mode", "exact")
    gamma = pick("gamma", 1.0)

    spec = ExperimentSpec(
        kind=kind, n=n, k=k if k is not None else (k_sweep[0] if k_sweep else None),
        l=l if l is not None else (l_sweep[0] if l_sweep else None),
        m=args.m, gamma=gamma, epsilon=args.epsilon, seed=args.seed,
        snr_grid_db=parse_snr_grid(grid_text), trials=int(trials), mode=mode,
        out_path=args.out_path, l_sweep=tuple(l_sweep), k_sweep=tuple(k_sweep),
        label="",
    )
    sweep = ",".join(str(v) for v in (spec.l_sweep if kind == "outage" else spec.k_sweep))
    spec.label = (
        f"kind={kind} preset={args.preset or '-'} n={spec.n} "
        f"k={sweep if kind == 'secrecy-rate' else spec.k} "
        f"l={sweep if kind == 'outage' else spec.l} m={spec.m} gamma={spec.gamma:g} "
        f"epsilon={spec.epsilon:g} snr_db={grid_text} trials={spec.trials} "
        f"mode={mode} seed={spec.seed}"
    )
    # validate every swept configuration eagerly so bad flags fail fast
    for lv in spec.l_sweep or (spec.l,):
        for kv in spec.k_sweep or (spec.k,):
            if lv is not None and kv is not None:
                spec.config(l=lv, k=kv)
    return spec


def _open_out(spec: ExperimentSpec):
    if spec.out_path is None:
        return sys.stdout, False
    try:
        return open(spec.out_path, "w", newline=""), True
    except OSError as exc:
        raise _IOFailure(f"cannot write {spec.out_path}: {exc}") from None


class _IOFailure(Exception):
    pass


def _fmt(x) -> str:
    if x is None:
        return "NA"
    return repr(float(x))


def run_outage(spec: ExperimentSpec, stream) -> None:
    stream.write(f"# relaysec {spec.label}\n")
    stream.write("snr_db,l,pout_mc,pout_ub,outage_count,trials\n")
    slopes = []
    for lv in spec.l_sweep:
        cfg = spec.config(l=lv)
        curve = estimate_outage(cfg, spec.snr_grid_db, spec.trials, spec.mode)
        for i, db in enumerate(curve.snr_db):
            stream.write(
                f"{_fmt(db)},{lv},{_fmt(curve.pout_mc[i])},{_fmt(curve.pout_ub[i])},"
                f"{curve.outage_count[i]},{curve.trials[i]}\n"
            )
        try:
            est = diversity_slope(curve, DEFAULT_FIT_WINDOW_DB)
            slopes.append(f"# slope l={lv}: {est.slope:.4f} "
                          f"window={est.fit_window_db[0]:g}:{est.fit_window_db[1]:g} "
                          f"points={est.points_used} residual={est.residual:.3e}")
        except InsufficientData as exc:
            slopes.append(f"# slope l={lv}: NA ({exc})")
    for line in slopes:
        stream.write(line + "\n")


def run_secrecy_rate(spec: ExperimentSpec, stream) -> None:
    stream.write(f"# relaysec {spec.label}\n")
    stream.write("snr_db,k,r_secrecy_mean,r_bob_mean,r_eve_max_mean,trials\n")
    for kv in spec.k_sweep:
        cfg = spec.config(k=kv)
        curve = estimate_mean_rates(cfg, spec.snr_grid_db, spec.trials, spec.mode)
        for i, db in enumerate(curve.snr_db):
            stream.write(
                f"{_fmt(db)},{kv},{_fmt(curve.r_secrecy_mean[i])},"
                f"{_fmt(curve.r_bob_mean[i])},{_fmt(curve.r_eve_max_mean[i])},"
                f"{curve.trials[i]}\n"
            )


def run_validate(spec: ExperimentSpec, stream) -> int:
    cfg = spec.config()
    results = run_checks(cfg)
    report = {
        "passed": all(r.passed for r in results),
        "backend": active_backend(),
        "checks": [r.as_dict() for r in results],
    }
    json.dump(report, stream, indent=2)
    stream.write("\n")
    return EXIT_OK if report["passed"] else EXIT_VALIDATION


def run_dist_check(spec: ExperimentSpec, stream) -> None:
    cfg = spec.config()
    beta = beta_ratio_check(cfg, spec.trials)
    pout1 = [pout1_check(cfg, db, spec.trials, key=100 + i)
             for i, db in enumerate(spec.snr_grid_db)]
    pout2 = pout2_check(cfg, spec.snr_grid_db, spec.trials)
    report = {
        "beta_ratio": {
            "samples": beta.samples,
            "ks_statistic": beta.ks_statistic,
            "ks_pvalue": beta.ks_pvalue,
            "ks_critical_1pct": beta.ks_critical_1pct,
            "par_mean": beta.par_mean,
            "perp_mean": beta.perp_mean,
            "passed": beta.passed,
        },
        "joint_threshold_event": [
            {
                "snr_db": r.snr_db,
                "freq_joint": r.freq_joint,
                "freq_selected": r.freq_selected,
                "freq_nonselected": r.freq_nonselected,
                "closed_nonselected": r.closed_nonselected,
                "product_estimate": r.product_estimate,
                "ci3_joint": r.ci3_joint,
                "ci3_nonselected": r.ci3_nonselected,
            }
            for r in pout1
        ],
        "gain_floor_event": {
            "snr_db": list(pout2.snr_db),
            "freq": list(pout2.freq),
            "printed_form": list(pout2.printed_form),
            "corrected_form": list(pout2.corrected_form),
            "fitted_scale": pout2.fitted_scale,
            "supports": pout2.supports,
        },
    }
    json.dump(report, stream, indent=2)
    stream.write("\n")


def main(argv=None) -> int:
    workers_from_env()
    try:
        spec = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:          # argparse's own exits
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK

    try:
        stream, owned = _open_out(spec)
    except _IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        if spec.kind == "outage":
            run_outage(spec, stream)
            return EXIT_OK
        if spec.kind == "secrecy-rate":
            run_secrecy_rate(spec, stream)
            return EXIT_OK
        if spec.kind == "dist-check":
            run_dist_check(spec, stream)
            return EXIT_OK
        return run_validate(spec, stream)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    finally:
        if owned:
            stream.close()


if __name__ == "__main__":
    sys.exit(main())
