"""Experiment configuration: a sectioned ``key = value`` text format.

Grammar (order-insensitive, ``#`` or ``;`` start comments)::

    [domain]      dim, m1, m2, rho, r_o, collar
    [damping]     profile, alpha_max, support
    [solver]      kind, N, resolution, dt, T, record_every
    [initial]     preset, mode, stack_start, stack_exponent, stack_count, modes
    [analysis]    fit_window, region, horizon, transient, positions, directions,
                  family_size
    [run]         seed

Required keys: ``domain.m1``, ``domain.rho``, ``domain.r_o``.  Everything
else has a default.  ``fit_window`` is two numbers separated by whitespace or
a comma; empty ``dt``/``horizon``/``collar``/``m2`` mean "derive it".
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import asdict, dataclass, field, fields

from .geometry import DampingField, DomainSpec, GeometryError, make_domain


class ConfigError(ValueError):
    """One or more configuration problems, each tagged with its key path."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in self.errors))


@dataclass(frozen=True)
class DomainBlock:
    m1: float
    rho: float
    r_o: float
    dim: int = 2
    m2: float | None = None
    collar: float | None = None


@dataclass(frozen=True)
class DampingBlock:
    profile: str = "indicator"
    alpha_max: float = 1.0
    support: str = "lateral"


@dataclass(frozen=True)
class SolverBlock:
    kind: str = "galerkin"
    N: int = 200
    resolution: int = 128
    dt: float | None = None
    T: float = 20.0
    record_every: float = 0.5


@dataclass(frozen=True)
class InitialBlock:
    preset: str = "single-mode"
    mode: int = 1
    stack_start: int = 3
    stack_exponent: float = 2.5
    stack_count: int = 0
    modes: int = 20


@dataclass(frozen=True)
class AnalysisBlock:
    fit_window: tuple = (10.0, 100.0)
    region: str = "omega+omega0"
    horizon: float | None = None
    transient: float = 0.0
    positions: int = 100
    directions: int = 100
    family_size: int = 50


@dataclass(frozen=True)
class RunBlock:
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    domain: DomainBlock
    damping: DampingBlock = field(default_factory=DampingBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    initial: InitialBlock = field(default_factory=InitialBlock)
    analysis: AnalysisBlock = field(default_factory=AnalysisBlock)
    run: RunBlock = field(default_factory=RunBlock)

    def domain_spec(self) -> DomainSpec:
        d = self.domain
        return make_domain(d.dim, d.m1, d.m2, d.rho, d.r_o, d.collar)

    def damping_field(self) -> DampingField:
        return DampingField(self.damping.profile, self.damping.alpha_max, self.damping.support)

    def horizon(self) -> float:
        if self.analysis.horizon is not None:
            return self.analysis.horizon
        return 4 * self.domain_spec().diameter

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return ExperimentConfig(self.domain, self.damping, self.solver, self.initial,
                                self.analysis, RunBlock(int(seed)))

    def digest(self) -> str:
        return hashlib.sha256(serialize_config(self).encode()).hexdigest()


SECTIONS = {
    "domain": DomainBlock,
    "damping": DampingBlock,
    "solver": SolverBlock,
    "initial": InitialBlock,
    "analysis": AnalysisBlock,
    "run": RunBlock,
}

CHOICES = {
    ("damping", "profile"): ("indicator", "smooth-bump"),
    ("damping", "support"): ("lateral", "boundary", "everywhere"),
    ("solver", "kind"): ("galerkin", "fdtd"),
    ("initial", "preset"): ("single-mode", "trapped-stack", "random-smooth"),
    ("analysis", "region"): ("omega", "omega0", "omega+omega0", "box"),
}

POSITIVE = {("domain", "m1"), ("domain", "m2"), ("domain", "rho"), ("domain", "r_o"),
            ("domain", "collar"), ("solver", "dt"), ("solver", "T"), ("solver", "record_every"),
            ("analysis", "horizon"), ("solver", "N"), ("solver", "resolution"),
            ("initial", "mode"), ("initial", "stack_start"), ("initial", "modes"),
            ("analysis", "family_size")}

NON_NEGATIVE = {("damping", "alpha_max"), ("initial", "stack_count"), ("analysis", "transient"),
                ("analysis", "positions"), ("analysis", "directions"), ("run", "seed")}


def _kind(cls, name):
    ann = {f.name: f.type for f in fields(cls)}[name]
    if "tuple" in ann:
        return "window"
    if ann.startswith("int"):
        return "int"
    if ann.startswith("float"):
        return "float"
    return "str"


def _convert(kind: str, raw: str):
    raw = raw.strip()
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "window":
        parts = raw.replace(",", " ").split()
        if len(parts) != 2:
            raise ValueError("expected two numbers")
        lo, hi = float(parts[0]), float(parts[1])
        if not 0 < lo < hi:
            raise ValueError("expected 0 < lo < hi")
        return (lo, hi)
    return raw


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([("<text>", str(exc).splitlines()[0])]) from exc

    errors = []
    for section in parser.sections():
        if section not in SECTIONS:
            errors.append((section, "unknown section"))
    values = {}
    for section, cls in SECTIONS.items():
        names = {f.name for f in fields(cls)}
        given = dict(parser.items(section)) if parser.has_section(section) else {}
        block = {}
        for key, raw in given.items():
            path = f"{section}.{key}"
            if key not in names:
                errors.append((path, "unknown key"))
                continue
            if raw.strip() == "":
                continue  # empty means default
            kind = _kind(cls, key)
            try:
                val = _convert(kind, raw)
            except ValueError as exc:
                errors.append((path, f"expected {kind}: {exc}"))
                continue
            if (section, key) in CHOICES and val not in CHOICES[(section, key)]:
                errors.append((path, f"must be one of {', '.join(CHOICES[(section, key)])}"))
                continue
            if (section, key) in POSITIVE and not val > 0:
                errors.append((path, "must be positive"))
                continue
            if (section, key) in NON_NEGATIVE and not val >= 0:
                errors.append((path, "must be >= 0"))
                continue
            block[key] = val
        values[section] = block
    for key in ("m1", "rho", "r_o"):
        if key not in values["domain"] and not any(p == f"domain.{key}" for p, _ in errors):
            errors.append((f"domain.{key}", "missing required key"))
    if values["domain"].get("dim", 2) not in (2, 3):
        errors.append(("domain.dim", "must be 2 or 3"))
    if errors:
        raise ConfigError(errors)

    cfg = ExperimentConfig(**{name: SECTIONS[name](**block) for name, block in values.items()})
    try:
        cfg.domain_spec()
    except GeometryError as exc:
        msg = str(exc)
        key = msg.split()[0]
        path = f"domain.{key}" if key in {f.name for f in fields(DomainBlock)} else "domain"
        raise ConfigError([(path, msg)]) from exc
    try:
        cfg.damping_field()
    except GeometryError as exc:
        raise ConfigError([("damping", str(exc))]) from exc
    s = cfg.solver
    if s.T > 0 and abs(round(s.T / s.record_every) * s.record_every - s.T) > 1e-9 * s.T:
        raise ConfigError([("solver.record_every", "T must be a whole multiple of record_every")])
    return cfg


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return " ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``parse_config`` of it gives back an equal config."""
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        for key, value in asdict(getattr(cfg, section)).items():
            if isinstance(value, list):
                value = tuple(value)
            lines.append(f"{key} = {_format(value)}")
        lines.append("")
    return "\n".join(lines)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([("<file>", str(exc))]) from exc
    return parse_config(text)
