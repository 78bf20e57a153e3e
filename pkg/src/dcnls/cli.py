"""Command-line driver: run directories, manifests, CSV export.

Subcommands map to the library pipelines: `groundstate`, `spectrum`,
`profile`, `evolve`, `virial`, `rate`, and `report`.  Every run writes a
directory with self-describing CSV files (header row with names and
units) and an atomically written manifest listing configuration,
tolerances, wall-clock, outcome, and a checksum inventory of the
produced files.  Reruns with identical configuration produce
byte-identical data files.

Configuration precedence: command line > config file (flat key=value
lines) > defaults.
"""

import argparse
import hashlib
import json
import os
import sys
import time

__all__ = ["run_command", "main"]

_DEFAULTS = {
    "mu": 0.0,
    "grid_n": 1024,
    "rmax": 40.0,
    "lmax": 4,
    "k": 6,
    "b": 0.1,
    "d": 0.0,
    "preset": "minimal-mass",
    "out": "runs",
    "threads": 0,
    "seed": 0,
}

_FLOAT_KEYS = {"mu", "rmax", "b", "d"}
_INT_KEYS = {"grid_n", "lmax", "k", "threads", "seed"}


def _parse_config_file(path):
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {line!r}")
            key, val = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = val
    return values


def _coerce(key, val):
    if key in _FLOAT_KEYS:
        return float(val)
    if key in _INT_KEYS:
        return int(val)
    return val


def _fmt(x):
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _write_csv(path, header, columns):
    rows = len(columns[0])
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(rows):
            fh.write(",".join(_fmt(col[i]) for col in columns) + "\n")


def _checksum(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _finish_run(run_dir, command, cfg, status, started, extra=None):
    from . import __version__

    inventory = {}
    for name in sorted(os.listdir(run_dir)):
        if name == "manifest.json":
            continue
        inventory[name] = _checksum(os.path.join(run_dir, name))
    manifest = {
        "command": command,
        "configuration": {k: cfg[k] for k in sorted(cfg)},
        "code_version": __version__,
        "grid": {"n": cfg["grid_n"], "r_max": cfg["rmax"], "stretch": "tanh"},
        "tolerances": {
            "eq_residual": 1e-8,
            "pohozaev": 1e-6,
            "kernel_zero": 1e-6,
            "kernel_gap": 1e-3,
        },
        "wall_clock_seconds": time.time() - started,
        "status": status,
        "files": inventory,
    }
    if extra:
        manifest["summary"] = extra
    tmp = os.path.join(run_dir, "manifest.json.tmp")
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, os.path.join(run_dir, "manifest.json"))


def _field_csv(run_dir, name, grid, values):
    vals = values if hasattr(values, "real") else values
    _write_csv(
        os.path.join(run_dir, name),
        ["r[length]", "Re", "Im"],
        [grid.nodes, vals.real, getattr(vals, "imag", vals * 0.0)],
    )


def _cmd_groundstate(cfg, run_dir):
    import numpy as np

    from .groundstate import functional_report, solve_Q_mu
    from .grid import build_grid

    grid = build_grid(cfg["grid_n"], cfg["rmax"], "tanh")
    gs = solve_Q_mu(cfg["mu"], grid)
    _field_csv(run_dir, "Q_mu.csv", grid, gs.Q.values.astype(complex))
    rep = functional_report(gs)
    keys = sorted(rep)
    _write_csv(
        os.path.join(run_dir, "functional_report.csv"),
        keys,
        [[rep[k]] for k in keys],
    )
    return {"mass": rep["mass"], "eq_residual": rep["eq_residual"]}


def _cmd_spectrum(cfg, run_dir):
    from .grid import build_grid
    from .groundstate import solve_Q_mu
    from .linop import nondegeneracy_report

    grid = build_grid(cfg["grid_n"], cfg["rmax"], "tanh")
    gs = solve_Q_mu(cfg["mu"], grid)
    rep = nondegeneracy_report(gs, l_max=cfg["lmax"], k=cfg["k"])
    rows = []
    for (kind, l), entry in rep["channels"].items():
        for idx, ev in enumerate(entry["eigenvalues"]):
            rows.append((kind, l, idx, ev))
    _write_csv(
        os.path.join(run_dir, "spectrum.csv"),
        ["kind", "l", "index", "eigenvalue"],
        [[r[0] for r in rows], [r[1] for r in rows],
         [r[2] for r in rows], [r[3] for r in rows]],
    )
    if rep["status"] != "PASSED":
        raise RuntimeError(f"non-degeneracy report failed: {rep['failures']}")
    return {"status": rep["status"], "identities": rep["identities"]}


def _cmd_profile(cfg, run_dir):
    from .grid import build_grid
    from .groundstate import solve_Q_mu
    from .profile import build_hierarchy, residual_psi

    grid = build_grid(cfg["grid_n"], cfg["rmax"], "tanh")
    gs = solve_Q_mu(cfg["mu"], grid)
    ps = build_hierarchy(gs)
    for name, f in ps.fields().items():
        _field_csv(run_dir, f"{name}.csv", grid, f.values.astype(complex))
    _, sup, sup_grad = residual_psi(ps, cfg["b"], cfg["d"])
    return {
        "e_mu": ps.e_mu,
        "p_mu": ps.p_mu,
        "psi_weighted_sup": sup,
        "psi_grad_weighted_sup": sup_grad,
        "solvability": ps.solvability,
    }


def _evolve_pipeline(cfg):
    from .dynamics import evolve, make_initial_data
    from .grid import build_grid
    from .groundstate import solve_classical_Q, solve_Q_mu

    grid = build_grid(cfg["grid_n"], cfg["rmax"], "tanh")
    mu = cfg["mu"]
    if cfg["preset"] == "minimal-mass":
        from .profile import build_hierarchy

        gs = solve_Q_mu(mu, grid)
        ps = build_hierarchy(gs)
        # nudged just above critical mass: the truncated profile at exactly
        # critical mass bounces off the unstable manifold once resolved
        u0 = make_initial_data("minimal_mass_profile", gs=gs, ps=ps, b0=cfg["b"],
                               mass_factor=1.0005)
        traj = evolve(u0, mu, dt=1e-3, adaptive=True, t_final=30.0,
                      stop_grad_factor=10.5, lambda0=1.0, min_scale_cells=12.0,
                      record_every=40)
        return traj, gs, ps
    if cfg["preset"] == "gaussian":
        u0 = make_initial_data("gaussian", grid=grid, width=2.0, amplitude=1.0, mu=mu)
        traj = evolve(u0, mu, dt=1e-3, t_final=1.0)
        return traj, None, None
    if cfg["preset"] == "soliton":
        gs = solve_classical_Q(grid)
        u0 = make_initial_data("rescaled_soliton", gs=gs, alpha=1.2, beta=0.8, mu=mu)
        traj = evolve(u0, mu, dt=5e-4, t_final=8.0, adaptive=True,
                      stop_grad_factor=11.0, lambda0=1.0, record_every=20)
        return traj, gs, None
    raise ValueError(f"unknown preset {cfg['preset']!r}")


def _traj_csv(run_dir, traj):
    _write_csv(
        os.path.join(run_dir, "series.csv"),
        ["t[time]", "mass", "energy", "grad_norm", "variance", "momentum"],
        [traj.times, traj.mass, traj.energy, traj.grad_norm, traj.xu2, traj.momentum],
    )


def _cmd_evolve(cfg, run_dir):
    from .dynamics import blowup_fit, modulation_extract

    traj, gs, ps = _evolve_pipeline(cfg)
    _traj_csv(run_dir, traj)
    summary = {
        "stopped_by": traj.stopped_by,
        "t_final": traj.final.t,
        "mass_drift_rate": traj.mass_drift_rate(),
    }
    fit = blowup_fit(traj)
    summary["blowup_fit"] = fit
    if fit.get("detected") and ps is not None:
        trace = modulation_extract(traj, gs, ps)
        _write_csv(
            os.path.join(run_dir, "modulation.csv"),
            ["t[time]", "lambda", "b", "gamma", "residual"],
            [trace.times, trace.lam, trace.b, trace.gamma, trace.residual],
        )
    return summary


def _cmd_virial(cfg, run_dir):
    from .dynamics import virial_check

    traj, _, _ = _evolve_pipeline(cfg)
    _traj_csv(run_dir, traj)
    rep = virial_check(traj)
    return {"virial": rep}


def _cmd_rate(cfg, run_dir):
    from .grid import build_grid
    from .groundstate import perturbation_rate

    grid = build_grid(cfg["grid_n"], cfg["rmax"], "tanh")
    mus = [1e-4, 10 ** -3.5, 1e-3, 10 ** -2.5]
    rep = perturbation_rate(mus, grid)
    _write_csv(
        os.path.join(run_dir, "rate.csv"),
        ["mu", "h2_difference"],
        [rep["mu_used"], rep["h2_diffs"]],
    )
    return {"slope": rep["slope"], "fit_residual": rep["fit_residual"]}


def _cmd_report(cfg, run_dir):
    from .grid import build_grid
    from .groundstate import functional_report, solve_Q_mu
    from .hartree import calibrate_channel_coefficient
    from .linop import nondegeneracy_report
    from .profile import build_hierarchy, profile_constants

    grid = build_grid(cfg["grid_n"], cfg["rmax"], "tanh")
    gs = solve_Q_mu(cfg["mu"], grid)
    lines = []
    rep = functional_report(gs)
    lines.append(("groundstate_eq_residual", rep["eq_residual"], 1e-8))
    lines.append(("groundstate_pohozaev", rep["pohozaev_defect"], 1e-6))
    nd = nondegeneracy_report(gs, l_max=cfg["lmax"], k=cfg["k"])
    lines.append(("nondegeneracy", 0.0 if nd["status"] == "PASSED" else 1.0, 0.5))
    cal = calibrate_channel_coefficient(grid, 0)
    lines.append(("hartree_calibration_ratio_err", abs(cal["fitted_ratio"] - 1), 1e-4))
    ps = build_hierarchy(gs)
    e_mu, p_mu = profile_constants(ps)
    lines.append(("profile_solvability", max(ps.solvability.values()), 1e-6))
    lines.append(("e_mu_positive", 0.0 if e_mu > 0 else 1.0, 0.5))
    lines.append(("p_mu_positive", 0.0 if p_mu > 0 else 1.0, 0.5))
    names = [l[0] for l in lines]
    values = [l[1] for l in lines]
    bounds = [l[2] for l in lines]
    verdicts = ["PASS" if v <= b else "FAIL" for v, b in zip(values, bounds)]
    _write_csv(
        os.path.join(run_dir, "report.csv"),
        ["check", "value", "bound", "verdict"],
        [names, values, bounds, verdicts],
    )
    status = "PASSED" if all(v == "PASS" for v in verdicts) else "FAILED"
    if status != "PASSED":
        raise RuntimeError("report found failing checks")
    return {"report": status}


_COMMANDS = {
    "groundstate": _cmd_groundstate,
    "spectrum": _cmd_spectrum,
    "profile": _cmd_profile,
    "evolve": _cmd_evolve,
    "virial": _cmd_virial,
    "rate": _cmd_rate,
    "report": _cmd_report,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="dcnls",
        description="numerical laboratory for the doubly critical NLS",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", default=None, help="flat key=value file")
    parser.add_argument("--mu", type=float)
    parser.add_argument("--grid-n", dest="grid_n", type=int)
    parser.add_argument("--rmax", type=float)
    parser.add_argument("--lmax", type=int)
    parser.add_argument("--k", type=int)
    parser.add_argument("--b", type=float)
    parser.add_argument("--d", type=float)
    parser.add_argument("--preset", choices=["minimal-mass", "gaussian", "soliton"])
    parser.add_argument("--out", help="parent directory for run output")
    parser.add_argument("--threads", type=int, help="BLAS/OpenMP thread cap")
    parser.add_argument("--seed", type=int, help="seed for randomized sampling")
    return parser


def run_command(argv):
    """Execute one subcommand; returns the process exit code (0/1/2)."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    cfg = dict(_DEFAULTS)
    try:
        if args.config:
            for key, val in _parse_config_file(args.config).items():
                if key not in cfg:
                    raise ValueError(f"unknown config key {key!r}")
                cfg[key] = _coerce(key, val)
        for key in cfg:
            val = getattr(args, key, None)
            if val is not None:
                cfg[key] = val
    except (OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    if cfg["threads"]:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(cfg["threads"])

    run_dir = os.path.join(cfg["out"], f"{args.command}-mu{cfg['mu']:g}-n{cfg['grid_n']}")
    os.makedirs(run_dir, exist_ok=True)
    started = time.time()
    try:
        summary = _COMMANDS[args.command](cfg, run_dir)
    except Exception as exc:
        from .errors import ConfigurationError

        kind = "configuration" if isinstance(exc, ConfigurationError) else "numerical"
        _finish_run(run_dir, args.command, cfg, f"FAILED ({kind}): {exc}", started)
        print(f"{kind} failure: {exc}", file=sys.stderr)
        return 2 if kind == "configuration" else 1
    _finish_run(run_dir, args.command, cfg, "OK", started, extra=_jsonable(summary))
    print(f"wrote {run_dir}")
    return 0


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
