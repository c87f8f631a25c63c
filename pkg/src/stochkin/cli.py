"""Command-line entry point: ``stochkin <subcommand> [config.ini] [--out DIR]``.

Each run writes into ``<out>/<subcommand>-seed<master_seed>/``:

* ``run_record.txt``: config echo, code version, seed and one verdict line per claim
* ``timestamps.txt``: start and finish times (kept apart so reruns diff clean)
* one CSV per result table, and ``plot_<name>.csv`` log-log series per rate fit

Exit status is 0 when no verdict is FAIL, 1 on any FAIL, 2 on a configuration
error.  The worker count comes from ``STOCHKIN_WORKERS`` and never changes
the results.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, experiments as ex
from .config import SUBCOMMANDS, ConfigError, RunConfig, parse_config
from .duhamel import DuhamelConfig, picard_solve
from .fv import solve, trajectory_to_csv
from .kinetic import identity_suite
from .noise import sample_path, sample_seed

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(x) for x in r])
    return buf.getvalue()


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def _plot_rows(fit: ex.RateFit):
    return [(math.log10(s), math.log10(v)) for s, v in fit.points]


def output_dir(root, subcommand: str, master_seed: int) -> Path:
    return Path(root) / f"{subcommand}-seed{master_seed}"


def _initial(cfg: RunConfig):
    return ex.initial_field(cfg.ensemble())


def _run_solve(cfg: RunConfig, out: Path):
    spec = cfg.spec()
    ens = cfg.ensemble()
    s, nz = cfg.values["solver"], cfg.values["noise"]
    u0 = ex.initial_field(ens)
    seed = sample_seed(nz["master_seed"], nz["sample_index"])
    verdicts = []
    if s["method"] == "duhamel":
        dcfg = DuhamelConfig(n_modes=s["n_cells"], epsilon=s["epsilon"], n_time=s["n_time"])
        path = sample_path(seed, s["t_final"], min(nz["base_steps"], s["n_time"]))
        traj, iters, hist = picard_solve(spec, u0, dcfg, path)
        (out / "residuals.csv").write_text(
            _csv_text(("iteration", "residual"), [(i + 1, r) for i, r in enumerate(hist)]))
        solver = "duhamel"
    else:
        path = sample_path(seed, s["t_final"], nz["base_steps"])
        traj = solve(spec, u0, ens.solver_config(), path)
        solver = "fv"
    trajectory_to_csv(traj, out / "trajectory.csv", solver=solver)
    flux_zero = not np.any(spec.flux(np.linspace(-2, 2, 9)[:, None], np.linspace(0, 1, 8)[None, :]))
    sigma_zero = not np.any(spec.sigma(np.linspace(-2, 2, 9)))
    if flux_zero and sigma_zero and not spec.has_diffusion and s["epsilon"] > 0:
        k_max = max(1, s["n_cells"] // 8)
        errs = ex.heat_decay_errors(u0, traj.final, s["epsilon"], float(traj.times[-1]), k_max)
        worst = float(np.nanmax(errs)) if np.any(np.isfinite(errs)) else 0.0
        verdicts.append(ex.Verdict("AC3.heat_decay", ex.PASS if worst <= 0.02 else ex.FAIL,
                                   worst, 0.02, f"modes 1..{k_max} with nonzero initial amplitude"))
    return verdicts, {}


def _run_kinetic(cfg: RunConfig, out: Path):
    e = cfg.values["experiment"]
    checks = identity_suite(seed=cfg.master_seed, n_cases=e["n_cases"])
    rows = [(c.check_id, c.max_abs_error, c.tolerance, c.passed) for c in checks]
    tables = {"kinetic_checks": (("check_id", "max_abs_error", "tolerance", "pass"), rows)}
    verdicts = [ex.Verdict("AC1." + c.check_id, ex.PASS if c.passed else ex.FAIL,
                           c.max_abs_error, c.tolerance) for c in checks]
    if e["include_residual"]:
        rep = ex.kinetic_residual_study()
        tables.update(rep.tables)
        verdicts.extend(rep.verdicts)
    return verdicts, tables


def _run_experiment(cfg: RunConfig, out: Path):
    name = cfg.subcommand.replace("-", "_")
    ens = cfg.ensemble()
    if name == "temporal_bv":
        rep = ex.run_temporal_bv(ens, expected_beta=cfg.values["experiment"]["expected_beta"],
                                 beta_tolerance=cfg.values["experiment"]["beta_tolerance"])
    else:
        rep = ex.RUNNERS[name](ens)
    for fname, fit in rep.fits.items():
        if isinstance(fit, ex.RateFit):
            (out / f"plot_{fname}.csv").write_text(
                _csv_text(("log10_scale", "log10_value"), _plot_rows(fit)))
    return rep.verdicts, rep.tables


def run(subcommand: str, config: RunConfig, out_root=".", stream=None) -> int:
    """Execute one subcommand and persist its outputs; returns the exit status."""
    stream = sys.stdout if stream is None else stream
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    out = output_dir(out_root, subcommand, config.master_seed)
    out.mkdir(parents=True, exist_ok=True)
    if subcommand == "solve":
        verdicts, tables = _run_solve(config, out)
    elif subcommand == "kinetic-checks":
        verdicts, tables = _run_kinetic(config, out)
    else:
        verdicts, tables = _run_experiment(config, out)
    for tname, (header, rows) in tables.items():
        (out / f"{tname}.csv").write_text(_csv_text(header, rows))

    lines = [config.echo.rstrip("\n"), "",
             f"code_version = stochkin {__version__}",
             f"master_seed = {config.master_seed}", "", "# verdicts: claim status measured threshold note"]
    for v in verdicts:
        lines.append(f"{v.claim} {v.status} {_cell(float(v.measured))} {_cell(float(v.threshold))} {v.note}".rstrip())
    (out / "run_record.txt").write_text("\n".join(lines) + "\n")
    finished = _dt.datetime.now(_dt.timezone.utc).isoformat()
    (out / "timestamps.txt").write_text(f"started_at = {started}\nfinished_at = {finished}\n")
    for v in verdicts:
        print(f"{v.status:<12} {v.claim}: measured {float(v.measured):.6g} "
              f"(threshold {float(v.threshold):.6g}) {v.note}".rstrip(), file=stream)
    print(f"outputs in {out}", file=stream)
    return EXIT_FAIL if any(v.status == ex.FAIL for v in verdicts) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stochkin", description=__doc__.split("\n\n")[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("config", nargs="?", help="configuration file (see reference.ini)")
    ap.add_argument("--out", default="runs", help="root of the output directories")
    ap.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                    help="override one configuration value (repeatable)")
    return ap


def _apply_overrides(text: str, overrides) -> str:
    extra = []
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        lhs, val = item.split("=", 1)
        sec, key = lhs.split(".", 1)
        extra.append((sec.strip(), key.strip(), val.strip()))
    if not extra:
        return text
    # drop overridden keys from the file, then append the overrides per section
    lines, section = [], None
    drop = {(s, k) for s, k, _ in extra}
    for line in text.splitlines():
        s = line.split("#", 1)[0].strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif "=" in s and (section, s.split("=", 1)[0].strip()) in drop:
            lines.append("# (overridden) " + line)
            continue
        lines.append(line)
    for sec, key, val in extra:
        lines += [f"[{sec}]", f"{key} = {val}"]
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text() if args.config else ""
        cfg = parse_config(_apply_overrides(text, args.set), args.subcommand)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.subcommand, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
