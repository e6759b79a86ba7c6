"""Command-line harness: spectrum | fourier-verify | simulate | approximate | verify-all.

Each subcommand validates its configuration, runs the computation at the
given seed, writes CSVs (plus companion figures unless --no-plots) and a JSON
manifest into the output directory, and exits 0 only if every check passed.
Exit codes: 0 pass, 1 check failure, 2 config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

# Only stdlib at module level: FCS_THREADS must cap the BLAS pools before the
# first numpy import, which happens lazily inside the runners.
_SENTINEL = object()


def _apply_thread_cap() -> None:
    cap = os.environ.get("FCS_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def _b(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# name -> (type parser, default, help); shared across flags and config files
_COMMON = {
    "beta": (float, 1.0, "weight exponent of the target space"),
    "gamma": (float, 2.0, "weight exponent of the curve space (must exceed beta)"),
    "seed": (int, 1, "seed for every random draw"),
    "out-dir": (str, "out", "output directory"),
    "plots": (_b, True, "render companion figures next to the CSVs"),
}

_SIM = {
    "vol-c": (float, 0.02, "volatility scale c in c*exp(-a x)"),
    "vol-a": (float, 1.0, "volatility decay a in c*exp(-a x)"),
    "dt": (float, 1.0 / 252.0, "time step"),
    "t-max": (float, 0.25, "simulation horizon"),
    "paths": (int, 100, "number of Monte Carlo paths"),
    "x-max": (float, 3.0, "maturity truncation (grid extends to x-max + t-max)"),
    "h0-level": (float, 0.05, "flat initial curve level"),
    "h0-file": (str, "", "initial curve in the text format (overrides h0-level)"),
}

_SPEC: dict[str, dict] = {
    "spectrum": {
        **_COMMON,
        "cells": (int, 64, "basis size (one curve per grid cell)"),
        "x-max": (float, 40.0, "grid truncation point"),
        "growth": (float, 64.0, "last/first cell width ratio of the graded grid"),
    },
    "fourier-verify": {
        **_COMMON,
        "cells": (int, 256, "curve grid cells for the random ensemble"),
        "x-max": (float, 40.0, "curve grid truncation"),
        "curves": (int, 50, "random curves per ensemble check"),
    },
    "simulate": {
        **_COMMON,
        **_SIM,
        "x-probe": (float, 1.0, "maturity probed in the per-path CSV"),
        "snapshot-every": (int, 0, "write full-curve snapshots every k steps (0: never)"),
    },
    "approximate": {
        **_COMMON,
        **_SIM,
        "rank": (int, 4, "rank n of the finite-rank approximation"),
        "eps": (float, 0.01, "perturbation budget for the analyzing functionals"),
        "threshold-K": (float, 0.0, "stopping level (0: auto, twice the initial norm)"),
    },
    "verify-all": {
        **_COMMON,
    },
}


class _KeyError(Exception):
    pass


def _read_config_file(path: str, registry: dict) -> dict:
    from .errors import ConfigError

    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for ln, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key not in registry:
            raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
        parser = registry[key][0]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            raise ConfigError(
                f"{path}:{ln}: bad value for {key!r}: expected {parser.__name__}, got {val!r}"
            ) from exc
    return values


def parse_config(argv: list[str]) -> tuple[str, dict]:
    """Resolve (subcommand, settings): flags override file values override defaults."""
    from .errors import ConfigError

    parser = argparse.ArgumentParser(prog="fcs", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, registry in _SPEC.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key=value config file")
        for key, (typ, default, help_) in registry.items():
            dest = key.replace("-", "_")
            if typ is _b:
                group = p.add_mutually_exclusive_group()
                group.add_argument(f"--{key}", dest=dest, action="store_const", const=True)
                group.add_argument(f"--no-{key}", dest=dest, action="store_const", const=False)
                p.set_defaults(**{dest: _SENTINEL})
            else:
                p.add_argument(f"--{key}", dest=dest, type=typ, default=_SENTINEL, help=help_)

    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code not in (0, None):
            raise ConfigError("invalid command line") from None
        raise
    registry = _SPEC[ns.subcommand]
    from_file = _read_config_file(ns.config, registry) if ns.config else {}
    settings = {}
    for key, (_typ, default, _h) in registry.items():
        flag_val = getattr(ns, key.replace("-", "_"), _SENTINEL)
        if flag_val is not _SENTINEL and flag_val is not None:
            settings[key] = flag_val
        elif key in from_file:
            settings[key] = from_file[key]
        else:
            settings[key] = default
    return ns.subcommand, settings


# -- runners -----------------------------------------------------------------


def _weights(cfg: dict):
    from .curves import WeightParams
    from .errors import ConfigError

    try:
        return WeightParams(cfg["beta"], cfg["gamma"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _out_dir(cfg: dict) -> Path:
    return Path(cfg["out-dir"])


def run_spectrum(cfg: dict, out: Path, manifest) -> None:
    import numpy as np

    from .curves import Grid
    from .errors import ConfigError
    from .report import write_csv

    w = _weights(cfg)
    try:
        grid = Grid.geometric(cfg["x-max"], cfg["cells"], cfg["growth"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    from .spectral import BasisSet, assemble_gram, make_tn, operator_defect, singular_system

    sys_ = singular_system(assemble_gram(BasisSet(grid, w)))

    defects = np.array(
        [operator_defect(sys_, make_tn(sys_, n)) for n in range(1, sys_.n_modes + 1)]
    )
    rows = [
        (k + 1, float(sys_.s[k]), float(defects[k]))
        for k in range(sys_.n_modes)
    ]
    csv = write_csv(out / "spectrum.csv", ["k", "s_k", "defect_T_k"], rows)
    manifest.record_output(csv)

    decay_ok = bool(np.all(np.diff(sys_.s) <= 1e-15))
    manifest.add_check("spectrum_nonincreasing", decay_ok, float(np.max(np.diff(sys_.s), initial=-1.0)), 0.0)
    gap = float(np.max(np.abs(defects[:-1] - sys_.s[1:])))
    manifest.add_check("defect_equals_next_sv", gap <= 1e-10, gap, 1e-10)

    if cfg["plots"]:
        from .plots import plot_spectrum

        manifest.record_output(
            plot_spectrum(out / "spectrum.png", np.arange(1, sys_.n_modes + 1), sys_.s, defects)
        )


def _fourier_cases(cfg: dict, w):
    """(label, measured, bound) rows across the identity checks."""
    import numpy as np

    from .curves import Grid, embedding_constant_c3, hgamma_norm, l2_norm, random_h0_curve, reflect, weighted_lift
    from .fourier import (
        PROBE_FREQUENCIES,
        LineGrid,
        c0_bound_check,
        derivative_identity_check,
        fourier,
        functional_representation_check,
        line_samples,
        plancherel_check,
    )

    rng = np.random.default_rng(cfg["seed"])
    rows = []

    line = LineGrid(24.0, 4096)

    def packet(c, s, k):
        return lambda x: np.exp(-((x - c) ** 2) / (2.0 * s * s)) * np.cos(k * x)

    # Plancherel on random smooth decayed pairs
    worst = 0.0
    for _ in range(cfg["curves"]):
        f = line_samples(packet(rng.uniform(-3, 3), rng.uniform(0.6, 2.0), rng.uniform(0, 4)), line)
        g = line_samples(packet(rng.uniform(-3, 3), rng.uniform(0.6, 2.0), rng.uniform(0, 4)), line)
        lhs, rhs = plancherel_check(f, g)
        worst = max(worst, abs(lhs - rhs) / (1.0 + abs(rhs)))
    rows.append(("plancherel_ensemble", worst, 1e-6))

    # derivative multiplier identity on smooth packets
    worst = 0.0
    for _ in range(8):
        sc = line_samples(packet(rng.uniform(-2, 2), rng.uniform(0.8, 2.0), rng.uniform(0, 3)), line)
        worst = max(worst, derivative_identity_check(sc))
    rows.append(("derivative_identity", worst, 1e-4))

    # transform sup-norm against the discrete L1 mass
    worst = -np.inf
    for _ in range(cfg["curves"]):
        sc = line_samples(packet(rng.uniform(-3, 3), rng.uniform(0.5, 2.0), rng.uniform(0, 5)), line)
        spec = fourier(sc)
        l1 = float(np.sum(np.abs(sc.values))) * line.spacing
        worst = max(worst, float(np.max(np.abs(spec.values))) - l1 / math.sqrt(2.0 * math.pi))
    rows.append(("l1_c0_bound_violation", worst, 1e-12))

    # weighted-curve checks
    grid = Grid.geometric(cfg["x-max"], cfg["cells"], 64.0)
    worst_fr = 0.0
    worst_c0 = -np.inf
    worst_lift = 0.0
    for i in range(max(cfg["curves"] // 5, 4)):
        h = random_h0_curve(grid, w, rng)
        for xi in PROBE_FREQUENCIES:
            direct, paired = functional_representation_check(h, xi, w)
            worst_fr = max(worst_fr, abs(direct - paired) / (1.0 + abs(direct)))
        sup_ft, bound = c0_bound_check(h, w)
        worst_c0 = max(worst_c0, sup_ft - bound)
        mirrored = reflect(weighted_lift(h, w))
        half = 0.5 * np.diff(mirrored.nodes)
        l1 = float(np.sum((np.abs(mirrored.values[:-1]) + np.abs(mirrored.values[1:])) * half))
        worst_lift = max(worst_lift, l1 / (embedding_constant_c3(w) * hgamma_norm(h, w)))
    rows.append(("functional_representation", worst_fr, 1e-6))
    rows.append(("c0_bound_violation", worst_c0, 1e-6))
    rows.append(("lift_l1_over_c3_bound", worst_lift, 1.0))
    return rows


def run_fourier_verify(cfg: dict, out: Path, manifest) -> None:
    import numpy as np

    from .report import write_csv

    w = _weights(cfg)
    rows = _fourier_cases(cfg, w)
    csv_rows = [(name, float(meas), float(bound), meas <= bound) for name, meas, bound in rows]
    csv = write_csv(
        out / "fourier_checks.csv", ["check", "measured", "bound", "passed"], csv_rows
    )
    manifest.record_output(csv)
    for name, meas, bound in rows:
        manifest.add_check(name, meas <= bound, meas, bound)

    if cfg["plots"]:
        from .plots import plot_check_slacks

        labels = [r[0] for r in rows]
        manifest.record_output(
            plot_check_slacks(
                out / "fourier_checks.png",
                labels,
                np.array([max(r[1], 0.0) for r in rows]),
                np.array([max(r[2], 1e-12) for r in rows]),
            )
        )


def _sim_setup(cfg: dict):
    """Validated (weights, grid, h0, vol, config) shared by simulate/approximate."""
    from .curves import ForwardCurve, read_curve
    from .errors import ConfigError
    from .hjmm import SimConfig, extended_uniform_grid, vasicek_vol

    w = _weights(cfg)
    if cfg["dt"] <= 0.0 or cfg["t-max"] < cfg["dt"]:
        raise ConfigError(f"need 0 < dt <= t-max, got dt={cfg['dt']}, t-max={cfg['t-max']}")
    if cfg["paths"] < 1:
        raise ConfigError("paths must be positive")
    try:
        grid = extended_uniform_grid(cfg["x-max"], cfg["t-max"], cfg["dt"])
        sim = SimConfig(w, grid, cfg["dt"], cfg["t-max"], cfg["paths"], cfg["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg["h0-file"]:
        try:
            h0 = read_curve(cfg["h0-file"], grid)
        except Exception as exc:
            raise ConfigError(f"cannot load h0 from {cfg['h0-file']}: {exc}") from exc
    else:
        h0 = ForwardCurve.from_dcoef(grid, [0.0] * grid.n_cells, cfg["h0-level"])
    vol = vasicek_vol(grid, cfg["vol-c"], cfg["vol-a"])
    return w, grid, h0, vol, sim


def run_simulate(cfg: dict, out: Path, manifest) -> None:
    import numpy as np

    from .curves import write_curve
    from .hjmm import simulate
    from .report import write_csv

    w, grid, h0, vol, sim = _sim_setup(cfg)
    ens = simulate(h0, vol, sim)

    probe = min(cfg.get("x-probe", 1.0), grid.x_max)
    j = int(np.argmin(np.abs(grid.nodes - probe)))
    norms = np.stack([ens.hgamma_norms(p) for p in range(ens.n_paths)])
    rows = []
    for p in range(ens.n_paths):
        for i, t in enumerate(ens.times):
            rows.append(
                (p, float(t), float(norms[p, i]), float(ens.node_values[p, i, 0]), float(ens.node_values[p, i, j]))
            )
    csv = write_csv(out / "paths.csv", ["path", "t", "hgamma_norm", "r0", "r_probe"], rows)
    manifest.record_output(csv)

    every = int(cfg.get("snapshot-every", 0))
    if every > 0:
        for i in range(0, ens.n_steps + 1, every):
            snap = out / f"curve_p0_step{i:05d}.txt"
            write_curve(ens.path_curve(0, i), str(snap))
            manifest.record_output(snap)

    finite = bool(np.all(np.isfinite(norms)))
    manifest.add_check("paths_finite", finite, float(np.max(norms)), math.inf)

    if cfg["plots"]:
        from .plots import plot_path_norms

        manifest.record_output(plot_path_norms(out / "paths.png", ens.times, norms))


def run_approximate(cfg: dict, out: Path, manifest) -> None:
    import numpy as np

    from .approx import (
        audit_est_epsilon_n,
        audit_norm_conv,
        audit_uni_local,
        mean_square_error,
    )
    from .curves import hgamma_norm
    from .errors import ConfigError
    from .hjmm import simulate
    from .report import write_csv
    from .spectral import BasisSet, assemble_gram, make_tn, perturb_functionals, singular_system

    w, grid, h0, vol, sim = _sim_setup(cfg)
    n = cfg["rank"]
    if n < 1:
        raise ConfigError("rank must be positive")
    h0_norm = hgamma_norm(h0, w)
    K = cfg["threshold-K"] if cfg["threshold-K"] > 0.0 else 2.0 * h0_norm
    if K <= h0_norm:
        raise ConfigError(f"threshold-K={K} must exceed the initial norm {h0_norm:.6g}")

    ens = simulate(h0, vol, sim)
    sys_ = singular_system(assemble_gram(BasisSet(grid, w)))
    if n >= sys_.n_modes:
        raise ConfigError(f"rank {n} too large for {sys_.n_modes} retained modes")
    tn = make_tn(sys_, n)
    sn = perturb_functionals(sys_, n, cfg["eps"], cfg["seed"])

    reports = [
        audit_norm_conv(ens, tn),
        audit_est_epsilon_n(ens, sn),
        audit_uni_local(ens, sn, K),
    ]
    mse = mean_square_error(ens, sn)

    for rep in reports:
        csv = write_csv(
            out / f"audit_{rep.label}.csv",
            ["t", "path", "lhs", "rhs", "margin"],
            rep.rows(),
        )
        manifest.record_output(csv)
        manifest.add_check(rep.label, rep.passed, rep.worst_margin, 1.0)

    summary = [(rep.label, float(rep.worst_margin), rep.passed) for rep in reports]
    summary.append(("mean_square_error", float(mse.estimate), mse.passed))
    csv = write_csv(out / "audit_summary.csv", ["audit", "value", "passed"], summary)
    manifest.record_output(csv)
    manifest.add_check("mean_square_error", mse.passed, mse.estimate, mse.bound)

    if cfg["plots"]:
        from .plots import plot_audit_margins

        series = {rep.label: (rep.t, rep.margins) for rep in reports}
        manifest.record_output(plot_audit_margins(out / "audit_margins.png", series))


def run_verify_all(cfg: dict, out: Path, manifest) -> None:
    base = dict(cfg)
    spectrum_cfg = {**{k: v[1] for k, v in _SPEC["spectrum"].items()}, **base}
    run_spectrum(spectrum_cfg, out, manifest)

    fourier_cfg = {**{k: v[1] for k, v in _SPEC["fourier-verify"].items()}, **base}
    fourier_cfg["curves"] = 20
    fourier_cfg["cells"] = 192
    run_fourier_verify(fourier_cfg, out, manifest)

    sim_cfg = {**{k: v[1] for k, v in _SPEC["simulate"].items()}, **base}
    sim_cfg.update({"dt": 1.0 / 128.0, "t-max": 0.25, "paths": 25, "x-max": 3.0})
    run_simulate(sim_cfg, out, manifest)

    approx_cfg = {**{k: v[1] for k, v in _SPEC["approximate"].items()}, **base}
    approx_cfg.update({"dt": 1.0 / 128.0, "t-max": 0.25, "paths": 25, "x-max": 3.0})
    run_approximate(approx_cfg, out, manifest)


_RUNNERS = {
    "spectrum": run_spectrum,
    "fourier-verify": run_fourier_verify,
    "simulate": run_simulate,
    "approximate": run_approximate,
    "verify-all": run_verify_all,
}


def run(subcommand: str, cfg: dict):
    """Dispatch a validated config; returns the written manifest."""
    from .report import RunManifest

    out = _out_dir(cfg)
    manifest = RunManifest(subcommand, dict(cfg))
    _RUNNERS[subcommand](cfg, out, manifest)
    manifest.write(out / "manifest.json")
    return manifest


def main(argv: list[str] | None = None) -> int:
    _apply_thread_cap()
    from .errors import ConfigError, FcsError

    try:
        subcommand, cfg = parse_config(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = run(subcommand, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FcsError as exc:
        print(f"numeric failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3
    for check in manifest.checks:
        state = "PASS" if check.passed else "FAIL"
        print(f"[{state}] {check.name}: measured={check.measured:.6g} bound={check.bound:.6g}")
    return 0 if manifest.all_passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
