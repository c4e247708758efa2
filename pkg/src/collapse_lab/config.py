"""Flat key = value run configuration.

The schema is a fixed set of dotted keys (``problem.gamma``, ``init.u``,
``integrator.t_max``, ...).  Unknown keys are hard errors so that a typo in a
physical parameter cannot silently fall back to a default.  Every diagnostic
carries the offending line number and key.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import density, model
from .dynamics import IntegratorConfig, Method
from .model import Params, ParticleState, TimeScaling


class ConfigError(ValueError):
    """Raised for malformed, unknown, missing, or inconsistent keys."""


def _parse_float_list(text: str) -> list:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _parse_int_list(text: str) -> list:
    return [int(tok) for tok in text.replace(",", " ").split()]


# key -> (converter, description)
_SCHEMA = {
    "problem.gamma": (float, "interaction exponent, 0 <= gamma < 1"),
    "problem.mass": (float, "total mass M > 0"),
    "problem.n": (int, "particle count N >= 3"),
    "problem.time_scaling": (str, "paper | uniform"),
    "init.positions": (_parse_float_list, "explicit increasing positions"),
    "init.density": (str, "gaussian | uniform"),
    "init.mean": (float, "gaussian mean"),
    "init.sigma": (float, "gaussian standard deviation > 0"),
    "init.a": (float, "uniform support left endpoint"),
    "init.b": (float, "uniform support right endpoint"),
    "init.u": (float, "reduced left gap (N = 3)"),
    "init.v": (float, "reduced right gap (N = 3)"),
    "integrator.method": (str, "rk45 | implicit_euler"),
    "integrator.rtol": (float, "relative step tolerance"),
    "integrator.atol": (float, "absolute step tolerance"),
    "integrator.dt_init": (float, "initial step"),
    "integrator.dt_min": (float, "smallest admissible step"),
    "integrator.dt_max": (float, "largest admissible step"),
    "integrator.t_max": (float, "final time"),
    "integrator.collision_eps": (float, "gap size treated as a collision"),
    "integrator.sample_every": (float, "sampling cadence in time units"),
    "integrator.newton_tol": (float, "implicit-step Newton tolerance"),
    "integrator.newton_max_iter": (int, "implicit-step Newton iteration cap"),
    "outputs.trajectory_csv": (str, "trajectory CSV path"),
    "outputs.summary_json": (str, "summary record path"),
    "outputs.gnuplot": (str, "optional gnuplot script path"),
    "seed": (int, "seed for randomized sweeps and tests"),
    "phase.window_min": (float, "sweep window lower gap"),
    "phase.window_max": (float, "sweep window upper gap"),
    "phase.resolution": (int, "sweep grid resolution per axis"),
    "converge.n_list": (_parse_int_list, "particle counts for the bridge table"),
}

_INIT_VARIANTS = {
    "positions": ("init.positions",),
    "density": ("init.density",),
    "reduced": ("init.u", "init.v"),
}


@dataclass
class RunConfig:
    """Validated run description: problem, initial state, integrator, outputs."""

    values: dict = field(default_factory=dict)

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def require(self, key: str):
        if key not in self.values:
            raise ConfigError(f"missing required key '{key}' ({_SCHEMA[key][1]})")
        return self.values[key]

    @property
    def seed(self) -> int:
        return int(self.get("seed", 0))

    def params(self) -> Params:
        scaling_name = str(self.get("problem.time_scaling", "paper")).lower()
        try:
            scaling = TimeScaling(scaling_name)
        except ValueError:
            raise ConfigError(
                f"problem.time_scaling must be one of "
                f"{[m.value for m in TimeScaling]}, got '{scaling_name}'")
        try:
            return Params(gamma=self.require("problem.gamma"),
                          mass=self.require("problem.mass"),
                          n=self.require("problem.n"),
                          time_scaling=scaling)
        except (model.DomainError, ValueError) as exc:
            raise ConfigError(str(exc))

    def init_variant(self) -> str:
        present = [name for name, keys in _INIT_VARIANTS.items()
                   if any(k in self.values for k in keys)]
        if len(present) != 1:
            raise ConfigError(
                "exactly one init variant required: positions "
                "(init.positions), density (init.density + shape keys), or "
                f"reduced (init.u + init.v); found {present or 'none'}")
        return present[0]

    def density_spec(self):
        kind = str(self.require("init.density")).lower()
        if kind == "gaussian":
            return density.GaussianDensity(mean=float(self.get("init.mean", 0.0)),
                                           sigma=float(self.get("init.sigma", 1.0)),
                                           mass=self.require("problem.mass"))
        if kind == "uniform":
            return density.UniformDensity(a=self.require("init.a"),
                                          b=self.require("init.b"),
                                          mass=self.require("problem.mass"))
        raise ConfigError(f"init.density must be gaussian or uniform, got '{kind}'")

    def initial_state(self) -> tuple:
        """Build (state, params) from whichever init variant is present."""
        variant = self.init_variant()
        p = self.params()
        try:
            if variant == "positions":
                x = np.array(self.require("init.positions"), dtype=float)
                if len(x) != p.n:
                    raise ConfigError(
                        f"init.positions has {len(x)} entries but problem.n = {p.n}")
                return ParticleState(x), p
            if variant == "reduced":
                if p.n != 3:
                    raise ConfigError("reduced (u, v) init requires problem.n = 3")
                from .analysis import ReducedPoint
                return ReducedPoint(self.require("init.u"),
                                    self.require("init.v")).state(), p
            return density.quantile_init(self.density_spec(), p.n, p.gamma,
                                         p.time_scaling)
        except (model.DomainError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc))

    def integrator(self) -> IntegratorConfig:
        method_name = str(self.get("integrator.method", "rk45")).lower()
        try:
            method = Method(method_name)
        except ValueError:
            raise ConfigError(
                f"integrator.method must be one of {[m.value for m in Method]}, "
                f"got '{method_name}'")
        kwargs = {"method": method}
        for key in _SCHEMA:
            if key.startswith("integrator.") and key != "integrator.method":
                if key in self.values:
                    kwargs[key.split(".", 1)[1]] = self.values[key]
        try:
            return IntegratorConfig(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc))


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse `key = value` lines; '#' starts a comment, blank lines ignored."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                f"{source}:{lineno}: expected 'key = value', got '{raw.strip()}'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        converter, description = _SCHEMA[key]
        try:
            values[key] = converter(value)
        except ValueError:
            raise ConfigError(
                f"{source}:{lineno}: bad value for '{key}' "
                f"({description}): '{value}'")
    return RunConfig(values)


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), source=path)
