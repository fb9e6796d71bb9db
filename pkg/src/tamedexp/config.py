"""Experiment configuration files.

A config is an INI file with three sections; every key is optional and
unknown sections or keys are rejected::

    [problem]
    dim = 1                    ; state dimension
    beta1 = 0.1                ; linear noise coefficient
    beta2 = 0.0                ; nonlinear noise coefficient
    laplacian_scaling = literal  ; literal | fd
    nonlinear_drift = true     ; false drops X - X^3
    x0 =                       ; scalar or comma list, overrides the profile

    [run]
    schemes = GbmTamed, ExpTamed
    estimators = MLMCSR        ; any of Trad, MLMCL0, MLMC, MLMCSR
    reference = ExpTamed       ; reference scheme for Trad/MLMC/MLMCL0
    taming = reciprocal-norm   ; reciprocal-norm | none
    master_seed = 20240601
    dt_max =                   ; largest allowed step, coarsens n0 upward
    output_dir = out
    repeats = 1                ; timing repeats for `compare`

    [levels]
    n0 = 4
    finest_level = 8
    target_level =             ; default finest_level - 1
    samples_per_level = 10000  ; one count or finest_level + 1 counts
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace
from typing import Optional

from .exceptions import ConfigError, InvalidInputError
from .mlmc import ESTIMATORS, LevelSpec
from .problems import CubicBenchmark, Taming
from .schemes import SchemeKind

__all__ = ["ExperimentConfig", "load_config", "parse_config", "effective_levels"]

_KEYS = {
    "problem": {"dim", "beta1", "beta2", "laplacian_scaling", "nonlinear_drift", "x0"},
    "run": {"schemes", "estimators", "reference", "taming", "master_seed", "dt_max",
            "output_dir", "repeats"},
    "levels": {"n0", "finest_level", "target_level", "samples_per_level"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    problem: CubicBenchmark = field(default_factory=CubicBenchmark)
    schemes: tuple = (SchemeKind.GBM_TAMED, SchemeKind.EXP_TAMED)
    estimators: tuple = ("MLMCSR",)
    reference: SchemeKind = SchemeKind.EXP_TAMED
    taming: Taming = Taming.RECIPROCAL_NORM
    levels: LevelSpec = field(default_factory=lambda: LevelSpec(n0=4, finest_level=8))
    master_seed: int = 20240601
    dt_max: Optional[float] = None
    output_dir: str = "out"
    repeats: int = 1

    def with_seed(self, seed):
        return replace(self, master_seed=int(seed))


def _line_of(lines, section, key=None):
    in_section = False
    for no, raw in enumerate(lines, start=1):
        text = raw.strip()
        m = re.match(r"\[\s*([^\]]+?)\s*\]", text)
        if m:
            in_section = m.group(1) == section
            if key is None and in_section:
                return no
            continue
        if in_section and key is not None:
            if re.match(rf"{re.escape(key)}\s*[=:]", text, re.IGNORECASE):
                return no
    return None


def _list(value):
    return [v.strip() for v in value.split(",") if v.strip()]


def _bool(value):
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _strip_comment(value):
    return value.split(";", 1)[0].split("#", 1)[0].strip()


def parse_config(text):
    """Parse config `text` into an :class:`ExperimentConfig`.

    Raises
    ------
    ConfigError
        With the offending line number where one can be located.
    """
    lines = text.splitlines()
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("keys must live under a [section] header", exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("could not parse line", lineno) from None

    for section in parser.sections():
        if section not in _KEYS:
            raise ConfigError(f"unknown section [{section}]", _line_of(lines, section))
        for key in parser[section]:
            if key not in _KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", _line_of(lines, section, key))

    def get(section, key):
        if not parser.has_option(section, key):
            return None
        value = _strip_comment(parser[section][key])
        return value or None

    def convert(section, key, fn):
        value = get(section, key)
        if value is None:
            return None
        try:
            return fn(value)
        except (ValueError, InvalidInputError) as exc:
            raise ConfigError(f"[{section}] {key}: {exc}", _line_of(lines, section, key)) from None

    def scheme(name):
        try:
            return SchemeKind(name)
        except ValueError:
            raise ValueError(f"unknown scheme {name!r}") from None

    def estimator(name):
        if name not in ESTIMATORS:
            raise ValueError(f"unknown estimator {name!r}")
        return name

    default = ExperimentConfig()
    prob = {}
    for key, fn in [("dim", int), ("beta1", float), ("beta2", float),
                    ("laplacian_scaling", str), ("nonlinear_drift", _bool),
                    ("x0", lambda v: [float(x) for x in _list(v)])]:
        value = convert("problem", key, fn)
        if value is not None:
            prob[key] = value
    try:
        problem = CubicBenchmark(**prob)
    except InvalidInputError as exc:
        raise ConfigError(f"[problem] {exc}", _line_of(lines, "problem")) from None
    if problem.x0 is not None and len(problem.x0) not in (1, problem.dim):
        raise ConfigError(f"[problem] x0 needs 1 or {problem.dim} values", _line_of(lines, "problem", "x0"))

    schemes = convert("run", "schemes", lambda v: tuple(scheme(s) for s in _list(v)))
    estimators = convert("run", "estimators", lambda v: tuple(estimator(e) for e in _list(v)))
    for key, value in (("schemes", schemes), ("estimators", estimators)):
        if value is None and parser.has_option("run", key):
            raise ConfigError(f"[run] {key} must not be empty", _line_of(lines, "run", key))
    lv = {}
    for key in ("n0", "finest_level", "target_level"):
        value = convert("levels", key, int)
        if value is not None:
            lv[key] = value
    samples = convert("levels", "samples_per_level", lambda v: [int(x) for x in _list(v)])
    if samples is not None:
        lv["samples_per_level"] = samples[0] if len(samples) == 1 else samples
    base = default.levels
    lv = {"n0": base.n0, "finest_level": base.finest_level, **lv}
    try:
        levels = LevelSpec(**lv)
    except InvalidInputError as exc:
        raise ConfigError(f"[levels] {exc}", _line_of(lines, "levels")) from None

    seed = convert("run", "master_seed", int)
    if seed is not None and not 0 <= seed < 2**64:
        raise ConfigError("master_seed must be an unsigned 64-bit integer",
                          _line_of(lines, "run", "master_seed"))
    dt_max = convert("run", "dt_max", float)
    if dt_max is not None and not dt_max > 0:
        raise ConfigError("dt_max must be positive", _line_of(lines, "run", "dt_max"))
    repeats = convert("run", "repeats", int)
    if repeats is not None and repeats < 1:
        raise ConfigError("repeats must be >= 1", _line_of(lines, "run", "repeats"))

    cfg = ExperimentConfig(
        problem=problem,
        schemes=schemes if schemes is not None else default.schemes,
        estimators=estimators if estimators is not None else default.estimators,
        reference=convert("run", "reference", scheme) or default.reference,
        taming=convert("run", "taming", Taming) or default.taming,
        levels=levels,
        master_seed=seed if seed is not None else default.master_seed,
        dt_max=dt_max,
        output_dir=get("run", "output_dir") or default.output_dir,
        repeats=repeats or default.repeats,
    )
    effective_levels(cfg, horizon=1.0, lines=lines)
    return cfg


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def effective_levels(cfg, horizon=1.0, lines=None):
    """Apply ``dt_max``: drop coarse levels until ``T / n0 <= dt_max``."""
    spec = cfg.levels
    if cfg.dt_max is None:
        return spec
    n0, finest, target = spec.n0, spec.finest_level, spec.target_level
    samples = list(spec.samples_per_level)
    while horizon / n0 > cfg.dt_max * (1 + 1e-12):
        n0, finest, target = n0 * 2, finest - 1, target - 1
        samples.pop(0)
        if finest < 1 or target < 0:
            raise ConfigError(f"dt_max={cfg.dt_max} leaves no usable levels",
                              _line_of(lines or [], "run", "dt_max"))
    return LevelSpec(n0=n0, finest_level=finest, target_level=target, samples_per_level=samples)
