"""Line-oriented run configuration.

::

    # comment
    [problem]
    problem = het_burgers
    eps_c = 0.5

    [experiment]
    n_samples = 128

Sections are ``[problem]``, ``[solver]``, ``[noise]`` and ``[experiment]``;
every key is documented in ``reference.ini`` next to this module.  Errors
carry the offending line number.  :attr:`RunConfig.echo` is a canonical
rendering of every effective value and parses back to the same config.
"""

from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .experiments import INITIAL_FAMILIES, EnsembleConfig
from .fv import SCHEMES
from .problem import BUILTINS, builtin_problem

SUBCOMMANDS = ("l1-stability", "fractional-bv", "continuous-dependence", "viscosity-cauchy",
               "temporal-bv", "kinetic-checks", "solve")
PERTURB_AXES = ("sigma", "diffusion", "flux_u", "div_flux")
REFERENCE_FILE = Path(__file__).with_name("reference.ini")


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _is_pow2(n):
    return n >= 1 and not n & (n - 1)


# key -> (kind, default, check, message); kind in int, float, str, floats, ints, bool
_C = {
    "positive": (lambda v: v > 0, "must be positive"),
    "nonneg": (lambda v: v >= 0, "must be non-negative"),
    "pow2": (_is_pow2, "must be a power of two"),
}

SCHEMA = {
    "problem": {
        "problem": ("str", None, (lambda v: v in BUILTINS, f"must be one of {sorted(BUILTINS)}")),
        "sigma0": ("float", 0.2, _C["nonneg"]),
        "noise": ("str", "linear", (lambda v: v in ("linear", "sqrt", "constant"),
                                    "must be linear, sqrt or constant")),
        "initial": ("str", "sine", (lambda v: v in INITIAL_FAMILIES,
                                    f"must be one of {list(INITIAL_FAMILIES)}")),
        "amplitude": ("float", 1.0, None),
        "offset": ("float", 0.0, None),
        "v_shift": ("float", 0.25, None),
        "v_lift": ("float", 0.0, None),
    },
    "solver": {
        "method": ("str", "fv", (lambda v: v in ("fv", "duhamel"), "must be fv or duhamel")),
        "n_cells": ("int", 128, (lambda v: 3 <= v <= 8192, "must lie in [3, 8192]")),
        "t_final": ("float", 0.5, _C["positive"]),
        "cfl": ("float", 0.4, (lambda v: 0 < v < 1, "must lie in (0, 1)")),
        "epsilon": ("float", 0.0, _C["nonneg"]),
        "flux_scheme": ("str", "local_lax_friedrichs", (lambda v: v in SCHEMES,
                                                         f"must be one of {list(SCHEMES)}")),
        "n_outputs": ("int", 16, _C["pow2"]),
        "n_time": ("int", 256, _C["pow2"]),
        "eps_ladder": ("floats", (0.1, 0.025, 0.00625, 0.0015625), None),
    },
    "noise": {
        "master_seed": ("int", 0, _C["nonneg"]),
        "sample_index": ("int", 0, _C["nonneg"]),
        "base_steps": ("int", 1, _C["pow2"]),
    },
    "experiment": {
        "experiment": ("str", None, None),
        "n_samples": ("int", 64, (lambda v: v >= 16, "must be at least 16")),
        "mu": ("float", 0.5, _C["positive"]),
        "perturb_axis": ("str", "sigma", (lambda v: v in PERTURB_AXES,
                                          f"must be one of {list(PERTURB_AXES)}")),
        "deltas": ("floats", (0.1, 0.0316227766, 0.01, 0.00316227766), None),
        "lags": ("ints", (1, 2, 4, 8), None),
        "confidence": ("float", 4.0, _C["positive"]),
        "c_margin": ("float", 10.0, _C["positive"]),
        "exponent_fraction": ("float", 0.8, _C["positive"]),
        "min_r_squared": ("float", 0.9, (lambda v: 0 <= v <= 1, "must lie in [0, 1]")),
        "tvd_tolerance": ("float", 1e-8, _C["nonneg"]),
        "block_size": ("int", 16, _C["positive"]),
        "expected_beta": ("float", None, None),
        "beta_tolerance": ("float", 0.1, _C["positive"]),
        "n_cases": ("int", 1000, _C["positive"]),
        "include_residual": ("bool", False, None),
    },
}

# keys of a builtin beyond sigma0 and noise, with their defaults
PROBLEM_PARAMS = {
    name: {k: p.default for k, p in inspect.signature(f).parameters.items()
           if k not in ("sigma0", "noise")}
    for name, f in BUILTINS.items()
}
ALL_PROBLEM_PARAMS = sorted({k for d in PROBLEM_PARAMS.values() for k in d})


def _parse_value(kind, raw, key, line):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError
        if kind in ("floats", "ints"):
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            conv = int if kind == "ints" else float
            vals = tuple(conv(p) for p in parts)
            if kind == "floats" and not all(math.isfinite(v) for v in vals):
                raise ValueError
            return vals
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind}", line) from None


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


@dataclass
class RunConfig:
    subcommand: str
    values: dict
    lines: dict = field(default_factory=dict)

    def get(self, section, key):
        return self.values[section][key]

    @property
    def problem_params(self) -> dict:
        p = self.values["problem"]
        params = {k: p[k] for k in PROBLEM_PARAMS.get(p["problem"], {})}
        params["sigma0"] = p["sigma0"]
        params["noise"] = p["noise"]
        return params

    def spec(self):
        return builtin_problem(self.values["problem"]["problem"], **self.problem_params)

    @property
    def master_seed(self) -> int:
        return self.values["noise"]["master_seed"]

    def ensemble(self) -> EnsembleConfig:
        p, s, e = self.values["problem"], self.values["solver"], self.values["experiment"]
        return EnsembleConfig(
            master_seed=self.master_seed, n_samples=e["n_samples"], n_cells=s["n_cells"],
            t_final=s["t_final"], problem=p["problem"],
            problem_params=tuple(sorted(self.problem_params.items())),
            cfl=s["cfl"], epsilon=s["epsilon"], flux_scheme=s["flux_scheme"],
            initial=p["initial"], amplitude=p["amplitude"], offset=p["offset"],
            v_shift=p["v_shift"], v_lift=p["v_lift"], n_outputs=s["n_outputs"],
            perturb_axis=e["perturb_axis"], deltas=e["deltas"], mu=e["mu"],
            eps_ladder=s["eps_ladder"], lags=e["lags"], confidence=e["confidence"],
            c_margin=e["c_margin"], exponent_fraction=e["exponent_fraction"],
            min_r_squared=e["min_r_squared"], tvd_tolerance=e["tvd_tolerance"],
            block_size=e["block_size"])

    @property
    def echo(self) -> str:
        out = [f"# stochkin {self.subcommand}"]
        for sec in SCHEMA:
            out.append(f"[{sec}]")
            for key in sorted(self.values[sec]):
                v = self.values[sec][key]
                if v is None:
                    continue
                out.append(f"{key} = {_fmt(v)}")
            out.append("")
        return "\n".join(out)


def _needs_problem(subcommand):
    return subcommand != "kinetic-checks"


def parse_config(text: str, subcommand: str) -> RunConfig:
    """Parse and validate ``text`` for ``subcommand``; raises :class:`ConfigError`."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}; choose from {list(SUBCOMMANDS)}")
    raw = {sec: {} for sec in SCHEMA}
    where = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if s.startswith("["):
            if not s.endswith("]"):
                raise ConfigError(f"malformed section header {s!r}", lineno)
            section = s[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]; expected one of "
                                  f"{['[%s]' % k for k in SCHEMA]}", lineno)
            continue
        if "=" not in s:
            raise ConfigError(f"expected key = value, got {s!r}", lineno)
        if section is None:
            raise ConfigError("key before any [section] header", lineno)
        key, val = (p.strip() for p in s.split("=", 1))
        known = key in SCHEMA[section] or (section == "problem" and key in ALL_PROBLEM_PARAMS)
        if not known:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno)
        if (section, key) in where:
            raise ConfigError(f"duplicate key {key!r} in [{section}] (lines "
                              f"{where[(section, key)]} and {lineno})", lineno)
        where[(section, key)] = lineno
        raw[section][key] = val

    values = {}
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (kind, default, check) in keys.items():
            line = where.get((sec, key))
            if key in raw[sec]:
                v = _parse_value(kind, raw[sec][key], key, line)
                if check is not None and not check[0](v):
                    raise ConfigError(f"{key} {check[1]}", line)
            else:
                v = default
            values[sec][key] = v

    pname = values["problem"]["problem"]
    if pname is None:
        if _needs_problem(subcommand):
            raise ConfigError("missing required key 'problem' in [problem]")
        pname = "het_burgers"
        values["problem"]["problem"] = pname
    allowed = PROBLEM_PARAMS[pname]
    for key in ALL_PROBLEM_PARAMS:
        if key in raw["problem"] and key not in allowed:
            raise ConfigError(f"key {key!r} does not apply to problem {pname}",
                              where[("problem", key)])
    for key, default in allowed.items():
        if key in raw["problem"]:
            values["problem"][key] = _parse_value("float", raw["problem"][key], key,
                                                  where[("problem", key)])
        else:
            values["problem"][key] = float(default)

    exp_name = values["experiment"]["experiment"]
    if exp_name is not None and exp_name.replace("_", "-") != subcommand:
        raise ConfigError(f"experiment = {exp_name} does not match subcommand {subcommand}",
                          where.get(("experiment", "experiment")))
    values["experiment"]["experiment"] = subcommand.replace("-", "_")

    cfg = RunConfig(subcommand, values, where)
    _cross_check(cfg)
    return cfg


def _cross_check(cfg: RunConfig):
    v, w = cfg.values, cfg.lines
    try:
        spec = cfg.spec()
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), w.get(("problem", "problem"))) from None
    mu = v["experiment"]["mu"]
    if not 0.0 < mu < spec.kappa_F1:
        raise ConfigError(f"mu must lie in (0, kappa_F1) = (0, {spec.kappa_F1:g})",
                          w.get(("experiment", "mu")))
    if v["solver"]["method"] == "duhamel" and v["solver"]["epsilon"] <= 0:
        raise ConfigError("method = duhamel needs epsilon > 0", w.get(("solver", "epsilon")))
    sub = cfg.subcommand
    d = v["experiment"]["deltas"]
    if sub == "continuous-dependence":
        line = w.get(("experiment", "deltas"))
        if len(d) < 4:
            raise ConfigError("deltas needs at least 4 values", line)
        if any(x <= 0 for x in d):
            raise ConfigError("deltas must be positive", line)
        if math.log10(max(d) / min(d)) < 1.5 - 1e-9:
            raise ConfigError("deltas must span at least 1.5 decades", line)
    if sub == "viscosity-cauchy":
        e = v["solver"]["eps_ladder"]
        if len(e) < 4 or any(x <= 0 for x in e) or any(b >= a for a, b in zip(e, e[1:])):
            raise ConfigError("eps_ladder needs at least 4 strictly decreasing positive values",
                              w.get(("solver", "eps_ladder")))
    if sub == "temporal-bv":
        lags = v["experiment"]["lags"]
        if len(lags) < 4 or any(x < 1 or x >= v["solver"]["n_outputs"] for x in lags):
            raise ConfigError("lags needs at least 4 values in 1..n_outputs-1",
                              w.get(("experiment", "lags")))
    if sub != "kinetic-checks":
        try:
            cfg.ensemble()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path, subcommand: str) -> RunConfig:
    return parse_config(Path(path).read_text(), subcommand)
