"""Run configuration files (TOML syntax, a handful of sections).

Example::

    [mesh]
    kind = "quad"        # or file = "domain.vempoly"
    nx = 8
    ny = 8

    [coefficients]
    eps = 1.0
    bx = "1"
    by = "1"
    c = "1"
    f = "2*pi^2*sin(pi*x)*sin(pi*y) + ..."
    ub = "0"

    [exact]              # optional
    u = "sin(pi*x)*sin(pi*y)"
    ux = "pi*cos(pi*x)*sin(pi*y)"
    uy = "pi*sin(pi*x)*cos(pi*y)"

    [stabilization]
    delta_mode = "paper"

    [solver]
    method = "direct"
    tol = 1e-10

    [study]
    k = 2
    levels = 4
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .assembly import SOLVERS
from .expr import ParseError, compile_field
from .forms import CoefficientSet, StabilizationConfig
from .harness import ExactSolution
from .mesh import MESH_KINDS, PolyMesh, generate_mesh, read_mesh


class ConfigError(ValueError):
    pass


class ConfigNotFound(ConfigError):
    pass


SECTIONS = {
    "mesh": {"kind", "nx", "ny", "perturb", "seed", "file"},
    "coefficients": {"eps", "bx", "by", "c", "f", "ub", "divb", "c0"},
    "exact": {"u", "ux", "uy"},
    "stabilization": {f.name for f in dataclasses.fields(StabilizationConfig)},
    "solver": {"method", "tol", "max_iter", "threads"},
    "study": {"k", "levels", "n0"},
}


@dataclass
class MeshSpec:
    kind: str = "quad"
    nx: int = 8
    ny: int = 8
    perturb: float = 0.0
    seed: int = 0
    file: str | None = None

    def build(self, nx=None, ny=None) -> PolyMesh:
        if self.file is not None:
            return read_mesh(Path(self.file).read_bytes())
        return generate_mesh(self.kind, nx or self.nx, ny or self.ny, self.perturb, self.seed)


@dataclass
class RunConfig:
    coeffs: CoefficientSet
    mesh: MeshSpec = field(default_factory=MeshSpec)
    exact: ExactSolution | None = None
    stab: StabilizationConfig = field(default_factory=StabilizationConfig)
    method: str = "direct"
    tol: float = 1e-10
    max_iter: int | None = None
    threads: int = 1
    k: int = 2
    levels: int = 4
    n0: int = 4


def _field(section, key, value):
    if isinstance(value, bool):
        raise ConfigError(f"[{section}] {key}: expected an expression, got a boolean")
    if isinstance(value, (int, float)):
        value = repr(float(value))
    if not isinstance(value, str):
        raise ConfigError(f"[{section}] {key}: expected an expression string")
    try:
        return compile_field(value)
    except ParseError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def _number(section, key, value, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"[{section}] {key}: expected a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise ConfigError(f"[{section}] {key}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _string(section, key, value, choices=None):
    if not isinstance(value, str):
        raise ConfigError(f"[{section}] {key}: expected a string, got {value!r}")
    if choices is not None and value not in choices:
        raise ConfigError(f"[{section}] {key}: must be one of {', '.join(choices)}")
    return value


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error: {exc}") from exc
    for name, body in raw.items():
        if name not in SECTIONS or not isinstance(body, dict):
            raise ConfigError(f"unknown section [{name}]")
        extra = set(body) - SECTIONS[name]
        if extra:
            raise ConfigError(f"[{name}] unknown key(s): {', '.join(sorted(extra))}")

    co = raw.get("coefficients")
    if co is None or "eps" not in co:
        raise ConfigError("[coefficients] eps is required")
    kw = {"epsilon": _number("coefficients", "eps", co["eps"])}
    for key, name in (("bx", "bx"), ("by", "by"), ("c", "c"), ("f", "f"), ("ub", "u_b"),
                      ("divb", "div_b")):
        if key in co:
            kw[name] = _field("coefficients", key, co[key])
    if "c0" in co:
        kw["c0"] = _number("coefficients", "c0", co["c0"])
    try:
        coeffs = CoefficientSet(**kw)
    except ValueError as exc:
        raise ConfigError(f"[coefficients] {exc}") from exc

    exact = None
    if "exact" in raw:
        ex = raw["exact"]
        missing = {"u", "ux", "uy"} - set(ex)
        if missing:
            raise ConfigError(f"[exact] missing {', '.join(sorted(missing))}")
        exact = ExactSolution(*(_field("exact", k, ex[k]) for k in ("u", "ux", "uy")))

    ms = MeshSpec()
    m = raw.get("mesh", {})
    if "kind" in m:
        ms.kind = _string("mesh", "kind", m["kind"], MESH_KINDS)
    for key in ("nx", "ny", "seed"):
        if key in m:
            setattr(ms, key, _number("mesh", key, m[key], int))
    if "perturb" in m:
        ms.perturb = _number("mesh", "perturb", m["perturb"])
    if "file" in m:
        p = Path(_string("mesh", "file", m["file"]))
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        ms.file = str(p)

    st = raw.get("stabilization", {})
    skw = {}
    for key, value in st.items():
        if key in ("delta_mode", "load_mode"):
            skw[key] = _string("stabilization", key, value)
        else:
            skw[key] = _number("stabilization", key, value)
    try:
        stab = StabilizationConfig(**skw)
    except ValueError as exc:
        raise ConfigError(f"[stabilization] {exc}") from exc

    cfg = RunConfig(coeffs, ms, exact, stab)
    so = raw.get("solver", {})
    if "method" in so:
        cfg.method = _string("solver", "method", so["method"], SOLVERS)
    if "tol" in so:
        cfg.tol = _number("solver", "tol", so["tol"])
    if "max_iter" in so:
        cfg.max_iter = _number("solver", "max_iter", so["max_iter"], int)
    if "threads" in so:
        cfg.threads = _number("solver", "threads", so["threads"], int)
    sd = raw.get("study", {})
    for key in ("k", "levels", "n0"):
        if key in sd:
            setattr(cfg, key, _number("study", key, sd[key], int))
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if not 1 <= cfg.k <= 4:
        raise ConfigError(f"k must lie in [1, 4], got {cfg.k}")
    if not 1 <= cfg.levels <= 8:
        raise ConfigError(f"levels must lie in [1, 8], got {cfg.levels}")
    if cfg.n0 < 1 or cfg.mesh.nx < 1 or cfg.mesh.ny < 1:
        raise ConfigError("mesh counts must be positive")
    if not cfg.tol > 0:
        raise ConfigError("tol must be > 0")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigNotFound(f"config not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return parse_config(text, path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
