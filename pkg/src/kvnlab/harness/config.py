"""Sectioned ``key = value`` experiment configuration.

Example::

    # comments start with '#'
    [run]
    experiment = kvn
    dt = auto

    [grid]
    nq = 256

Unknown sections or keys are errors. Every error names the key path and,
where one exists, the line number.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

EXPERIMENTS = ("gaussian", "kvn", "doubled", "stabilizer", "deformation", "verify")
PERTURBATION_KINDS = ("none", "quartic_stabilizer", "hidden_coupling")
FORMATS = ("csv", "json", "binary")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str, line: Optional[int] = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{key}{where}: {message}")
        self.key = key
        self.line = line


# value parsers -------------------------------------------------------------

def _float(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "infinity", "+inf"):
        return math.inf
    val = float(t)
    if math.isnan(val):
        raise ValueError("nan is not allowed")
    return val


def _auto_float(text: str) -> Optional[float]:
    return None if text.strip().lower() == "auto" else _float(text)


def _int(text: str) -> int:
    return int(text.strip())


def _str(text: str) -> str:
    return text.strip()


def _float_list(text: str) -> Tuple[float, ...]:
    return tuple(_float(x) for x in text.split(",") if x.strip())


def _str_list(text: str) -> Tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _fmt(value: Any) -> str:
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    return str(value)


# sections ------------------------------------------------------------------

@dataclass(frozen=True)
class RunSection:
    experiment: str = ""
    dt: Optional[float] = None
    t_final: Optional[float] = None
    sample_stride: int = 100
    seed: int = 20240607


@dataclass(frozen=True)
class PhysicsSection:
    hbar: float = 1.0
    m: float = 1.0
    omega: float = 1.0

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega


@dataclass(frozen=True)
class GridSection:
    nq: int = 256
    np: int = 256
    q_min: float = -8.0
    q_max: float = 8.0
    p_min: float = -8.0
    p_max: float = 8.0


@dataclass(frozen=True)
class StateSection:
    q0: float = 0.5
    p0: float = 0.0
    sigma_q: float = 0.7
    sigma_p: float = 0.7
    phase_kp: float = 0.0
    alpha1: float = 1.0
    alpha2: float = 0.5
    n_trunc: int = 32


@dataclass(frozen=True)
class MeasurementSection:
    sigma_m: float = 0.5
    sigma_list: Tuple[float, ...] = (0.1, 1.0, 10.0)


@dataclass(frozen=True)
class PerturbationSection:
    kind: str = "none"
    lam: float = math.inf
    epsilon: float = 0.0
    lambda_list: Tuple[float, ...] = (5.0, 10.0, 20.0, 40.0, 80.0, math.inf)
    epsilon_list: Tuple[float, ...] = (0.0, 0.01, 0.05, 0.1)


@dataclass(frozen=True)
class IOSection:
    output_dir: str = "results"
    formats: Tuple[str, ...] = ("csv", "json")


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    physics: PhysicsSection = field(default_factory=PhysicsSection)
    grid: GridSection = field(default_factory=GridSection)
    state: StateSection = field(default_factory=StateSection)
    measurement: MeasurementSection = field(default_factory=MeasurementSection)
    perturbation: PerturbationSection = field(default_factory=PerturbationSection)
    io: IOSection = field(default_factory=IOSection)

    @property
    def experiment(self) -> str:
        return self.run.experiment

    def resolved_dt(self) -> float:
        return self.run.dt if self.run.dt is not None else self.physics.period / 2000

    def resolved_t_final(self) -> float:
        if self.run.t_final is not None:
            return self.run.t_final
        periods = {"gaussian": 10, "stabilizer": 2}.get(self.experiment, 1)
        return periods * self.physics.period

    def echo(self) -> Dict[str, Dict[str, Any]]:
        """Every effective parameter, with 'auto' values resolved."""
        out = {}
        for sec_name, attr in _SECTION_ATTRS.items():
            sec = getattr(self, attr)
            out[sec_name] = {key: _jsonable(getattr(sec, fname))
                             for key, (fname, _, _) in _SCHEMA[sec_name].items()}
        out["run"]["dt"] = self.resolved_dt()
        out["run"]["t_final"] = self.resolved_t_final()
        return out


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


# key -> (dataclass field name, parser, validator returning an error or None)
Validator = Callable[[Any], Optional[str]]


def _positive(v):
    return None if v > 0 else "must be positive"


def _positive_or_auto(v):
    return None if v is None or v > 0 else "must be positive or 'auto'"


def _pow2_named(name):
    def check(v):
        return None if v >= 8 and (v & (v - 1)) == 0 else f"{name} must be a power of two (>= 8)"
    return check


def _choice(options):
    def check(v):
        return None if v in options else f"must be one of {', '.join(options)}"
    return check


def _nonneg_list(v):
    return None if v and all(x >= 0 for x in v) else "must be a non-empty list of values >= 0"


def _positive_list(v):
    return None if v and all(x > 0 for x in v) else "must be a non-empty list of positive values"


def _formats(v):
    bad = [x for x in v if x not in FORMATS]
    return f"unknown format(s) {bad}; allowed {', '.join(FORMATS)}" if bad else None


def _ok(_):
    return None


def _experiment(v):
    if not v:
        return "experiment name must not be empty"
    return _choice(EXPERIMENTS)(v)


_SCHEMA: Dict[str, Dict[str, Tuple[str, Callable, Validator]]] = {
    "run": {
        "experiment": ("experiment", _str, _experiment),
        "dt": ("dt", _auto_float, _positive_or_auto),
        "t_final": ("t_final", _auto_float, _positive_or_auto),
        "sample_stride": ("sample_stride", _int, _positive),
        "seed": ("seed", _int, lambda v: None if v >= 0 else "must be >= 0"),
    },
    "physics": {
        "hbar": ("hbar", _float, _positive),
        "m": ("m", _float, _positive),
        "omega": ("omega", _float, _positive),
    },
    "grid": {
        "nq": ("nq", _int, _pow2_named("nq")),
        "np": ("np", _int, _pow2_named("np")),
        "q_min": ("q_min", _float, _ok),
        "q_max": ("q_max", _float, _ok),
        "p_min": ("p_min", _float, _ok),
        "p_max": ("p_max", _float, _ok),
    },
    "state": {
        "q0": ("q0", _float, _ok),
        "p0": ("p0", _float, _ok),
        "sigma_q": ("sigma_q", _float, _positive),
        "sigma_p": ("sigma_p", _float, _positive),
        "phase_kp": ("phase_kp", _float, _ok),
        "alpha1": ("alpha1", _float, _ok),
        "alpha2": ("alpha2", _float, _ok),
        "n_trunc": ("n_trunc", _int, lambda v: None if v >= 4 else "must be >= 4"),
    },
    "measurement": {
        "sigma_m": ("sigma_m", _float, _positive),
        "sigma_list": ("sigma_list", _float_list, _positive_list),
    },
    "perturbation": {
        "kind": ("kind", _str, _choice(PERTURBATION_KINDS)),
        "lambda": ("lam", _float, _positive),
        "epsilon": ("epsilon", _float, lambda v: None if v >= 0 else "must be >= 0"),
        "lambda_list": ("lambda_list", _float_list, _positive_list),
        "epsilon_list": ("epsilon_list", _float_list, _nonneg_list),
    },
    "io": {
        "output_dir": ("output_dir", _str, lambda v: None if v else "must not be empty"),
        "formats": ("formats", _str_list, _formats),
    },
}

_SECTION_ATTRS = {"run": "run", "physics": "physics", "grid": "grid", "state": "state",
                  "measurement": "measurement", "perturbation": "perturbation", "io": "io"}


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    values: Dict[str, Dict[str, Any]] = {s: {} for s in _SCHEMA}
    lines: Dict[str, int] = {}
    section: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(source, f"malformed section header {line!r}", lineno)
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(section, "unknown section", lineno)
            continue
        if "=" not in line:
            raise ConfigError(source, f"expected 'key = value', got {line!r}", lineno)
        key, value = (x.strip() for x in line.split("=", 1))
        if section is None:
            raise ConfigError(key, "key outside of any [section]", lineno)
        path = f"{section}.{key}"
        if key not in _SCHEMA[section]:
            raise ConfigError(path, "unknown key", lineno)
        if key in values[section]:
            raise ConfigError(path, "duplicate key", lineno)
        fname, parser, check = _SCHEMA[section][key]
        try:
            parsed = parser(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(path, f"cannot parse {value!r} ({exc})", lineno) from None
        problem = check(parsed)
        if problem:
            raise ConfigError(path, problem, lineno)
        values[section][fname] = parsed
        lines[path] = lineno

    sections = {}
    for sec_name, attr in _SECTION_ATTRS.items():
        cls = type(getattr(ExperimentConfig(), attr))
        sections[attr] = cls(**values[sec_name])
    cfg = ExperimentConfig(**sections)
    _cross_checks(cfg, lines)
    return cfg


def _cross_checks(cfg: ExperimentConfig, lines: Dict[str, int]) -> None:
    if not cfg.run.experiment:
        raise ConfigError("run.experiment", "experiment name must not be empty",
                          lines.get("run.experiment"))
    g = cfg.grid
    if not g.q_max > g.q_min:
        raise ConfigError("grid.q_max", "must exceed grid.q_min", lines.get("grid.q_max"))
    if not g.p_max > g.p_min:
        raise ConfigError("grid.p_max", "must exceed grid.p_min", lines.get("grid.p_max"))
    dt, t_final = cfg.resolved_dt(), cfg.resolved_t_final()
    n = round(t_final / dt)
    if cfg.experiment in ("kvn", "doubled", "deformation") and (
            n < 1 or not math.isclose(n * dt, t_final, rel_tol=1e-9)):
        raise ConfigError("run.t_final", f"must be a positive integer multiple of dt={dt!r}",
                          lines.get("run.t_final", lines.get("run.dt")))
    if cfg.experiment == "stabilizer":
        for key in ("alpha1", "alpha2"):
            a = getattr(cfg.state, key)
            if 4 * a * a >= cfg.state.n_trunc:
                raise ConfigError(f"state.{key}", f"too large for n_trunc={cfg.state.n_trunc}",
                                  lines.get(f"state.{key}"))
        if cfg.state.alpha2 == 0:
            raise ConfigError("state.alpha2", "must be non-zero for the stabilizer scan",
                              lines.get("state.alpha2"))
    if cfg.perturbation.kind == "quartic_stabilizer" and cfg.experiment in ("doubled",
                                                                             "deformation"):
        raise ConfigError("perturbation.kind",
                          "quartic_stabilizer applies to the stabilizer experiment only",
                          lines.get("perturbation.kind"))


def parse_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(str(path), "config file not found")
    return parse_config_text(p.read_text(), str(path))


def serialize_config(cfg: ExperimentConfig) -> str:
    """Text form that parses back to an identical config."""
    out: List[str] = []
    for sec_name, attr in _SECTION_ATTRS.items():
        sec = getattr(cfg, attr)
        out.append(f"[{sec_name}]")
        for key, (fname, _, _) in _SCHEMA[sec_name].items():
            out.append(f"{key} = {_fmt(getattr(sec, fname))}")
        out.append("")
    return "\n".join(out)


def default_config(experiment: str = "verify") -> ExperimentConfig:
    return replace(ExperimentConfig(), run=replace(RunSection(), experiment=experiment))
