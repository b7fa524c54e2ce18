"""Run configuration files: INI-style sections with ``key = value`` lines.

Sections and keys::

    [problem]      gamma, epsilon | eps_list, dim, extents, bc, initial, center,
                   radius, height, clip, offset, values, reaction, smoothing_sigma
    [grid]         nx, T, nt, origin
    [solver]       any SolverConfig field
    [diagnostics]  radii, slab_radii, theta, margin, cylinder_radius, tol_nd,
                   bank_size, bank_scales, bank_seed, floor_refine
    [output]       dir, name

Lists are comma separated. Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from .errors import FormatError, ParameterError
from .grid import SpaceTimeGrid, make_grid
from .model import InitialDatum, ProblemSpec
from .newton import SolverConfig

_PROBLEM_KEYS = {"gamma", "epsilon", "eps_list", "dim", "extents", "bc", "initial", "center", "radius",
                 "height", "clip", "offset", "values", "reaction", "smoothing_sigma"}
_GRID_KEYS = {"nx", "T", "nt", "origin"}
_SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverConfig)}
_OUTPUT_KEYS = {"dir", "name"}


@dataclass(frozen=True)
class DiagnosticsConfig:
    radii: tuple[float, ...] = (0.05, 0.1, 0.2)
    slab_radii: tuple[float, ...] | None = None  # default: eps, 2 eps, T/4, T/2
    theta: float | None = None
    margin: float = 10.0
    cylinder_radius: float = 0.5
    tol_nd: float = 0.2
    bank_size: int = 12
    bank_scales: tuple[float, ...] = (0.125, 0.25, 0.5)
    bank_seed: int = 0
    floor_refine: bool = True

    def __post_init__(self):
        if not self.margin > 0 or not self.cylinder_radius > 0:
            raise ParameterError("margin and cylinder_radius must be positive")
        if self.theta is not None and not self.theta > 0:
            raise ParameterError("theta must be positive")
        if not 0 <= self.tol_nd < 1:
            raise ParameterError("tol_nd must lie in [0, 1)")


_DIAG_KEYS = {f.name for f in dataclasses.fields(DiagnosticsConfig)}


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec
    grid: SpaceTimeGrid
    solver: SolverConfig = field(default_factory=SolverConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    eps_list: tuple[float, ...] | None = None
    output_dir: str = "out"
    name: str = "field"

    def slab_radii(self, eps: float | None = None) -> tuple[float, ...]:
        if self.diagnostics.slab_radii is not None:
            return self.diagnostics.slab_radii
        e = self.problem.epsilon if eps is None else eps
        return (e, 2 * e, self.grid.T / 4, self.grid.T / 2)


# -- value parsing -------------------------------------------------------------


def _floats(text, key):
    try:
        return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())
    except ValueError:
        raise ParameterError(f"{key}: expected a comma separated list of numbers, got {text!r}") from None


def _float(text, key):
    try:
        return float(text)
    except ValueError:
        raise ParameterError(f"{key}: expected a number, got {text!r}") from None


def _int(text, key):
    try:
        return int(text)
    except ValueError:
        raise ParameterError(f"{key}: expected an integer, got {text!r}") from None


def _bool(text, key):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"{key}: expected true/false, got {text!r}")


def _check_keys(section, keys, allowed):
    unknown = sorted(set(keys) - allowed)
    if unknown:
        raise FormatError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keep "T" distinct from "t"
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise FormatError(f"unreadable config: {exc}") from None
    allowed = {"problem", "grid", "solver", "diagnostics", "output"}
    extra = sorted(set(cp.sections()) - allowed)
    if extra:
        raise FormatError(f"unknown section(s): {', '.join(extra)}")
    for sec in ("problem", "grid"):
        if not cp.has_section(sec):
            raise FormatError(f"missing section [{sec}]")

    p = dict(cp["problem"])
    _check_keys("problem", p, _PROBLEM_KEYS)
    g = dict(cp["grid"])
    _check_keys("grid", g, _GRID_KEYS)
    s = dict(cp["solver"]) if cp.has_section("solver") else {}
    _check_keys("solver", s, _SOLVER_KEYS)
    d = dict(cp["diagnostics"]) if cp.has_section("diagnostics") else {}
    _check_keys("diagnostics", d, _DIAG_KEYS)
    o = dict(cp["output"]) if cp.has_section("output") else {}
    _check_keys("output", o, _OUTPUT_KEYS)

    dim = _int(p.get("dim", "1"), "problem.dim")
    eps_list = _floats(p["eps_list"], "problem.eps_list") if "eps_list" in p else None
    if "epsilon" in p:
        eps = _float(p["epsilon"], "problem.epsilon")
    elif eps_list:
        eps = eps_list[0]
    else:
        eps = 0.1
    kind = p.get("initial", "zero").strip()
    datum_kw = {"kind": kind}
    if "center" in p:
        datum_kw["center"] = _floats(p["center"], "problem.center")
    if "radius" in p:
        datum_kw["radius"] = _float(p["radius"], "problem.radius")
    if "height" in p:
        datum_kw["height"] = _float(p["height"], "problem.height")
    if "offset" in p:
        datum_kw["offset"] = _float(p["offset"], "problem.offset")
    if "clip" in p:
        datum_kw["clip"] = _bool(p["clip"], "problem.clip")
    if "values" in p:
        datum_kw["values"] = _floats(p["values"], "problem.values")
    problem = ProblemSpec(
        gamma=_float(p.get("gamma", "1.0"), "problem.gamma"),
        epsilon=eps,
        dim=dim,
        bc=p.get("bc", "dirichlet").strip(),
        initial=InitialDatum(**datum_kw),
        smoothing_sigma=_float(p.get("smoothing_sigma", "0"), "problem.smoothing_sigma"),
        reaction=_bool(p.get("reaction", "true"), "problem.reaction"),
    )
    if eps_list is not None:
        for e in eps_list:
            problem.with_epsilon(e)  # validates the range
        if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
            raise ParameterError("problem.eps_list must be strictly decreasing")

    ext = _floats(p.get("extents", "-1, 1"), "problem.extents")
    if len(ext) == 2:
        extents = [ext] * dim
    elif len(ext) == 2 * dim:
        extents = [ext[2 * i: 2 * i + 2] for i in range(dim)]
    else:
        raise ParameterError(f"problem.extents needs 2 or {2 * dim} numbers")
    for key in ("nx", "T", "nt"):
        if key not in g:
            raise FormatError(f"missing key grid.{key}")
    nx = [_int(x, "grid.nx") for x in g["nx"].split(",") if x.strip()]
    origin = _floats(g["origin"], "grid.origin") if "origin" in g else None
    grid = make_grid(dim, extents, nx, _float(g["T"], "grid.T"), _int(g["nt"], "grid.nt"), origin)

    skw = {}
    for f in dataclasses.fields(SolverConfig):
        if f.name not in s:
            continue
        key = f"solver.{f.name}"
        if f.name == "sigma_schedule":
            skw[f.name] = _floats(s[f.name], key)
        elif f.name == "linear_solver":
            skw[f.name] = s[f.name].strip()
        elif f.type in ("bool", bool):
            skw[f.name] = _bool(s[f.name], key)
        elif f.type in ("int", int):
            skw[f.name] = _int(s[f.name], key)
        else:
            skw[f.name] = _float(s[f.name], key)
    solver = SolverConfig(**skw)

    dkw = {}
    for key, val in d.items():
        full = f"diagnostics.{key}"
        if key in ("radii", "slab_radii", "bank_scales"):
            dkw[key] = _floats(val, full)
        elif key in ("bank_size", "bank_seed"):
            dkw[key] = _int(val, full)
        elif key == "floor_refine":
            dkw[key] = _bool(val, full)
        elif key == "theta" and val.strip().lower() in ("", "auto"):
            dkw[key] = None
        else:
            dkw[key] = _float(val, full)
    diagnostics = DiagnosticsConfig(**dkw)

    return RunConfig(problem, grid, solver, diagnostics, eps_list,
                     o.get("dir", "out").strip(), o.get("name", "field").strip())


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_text(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config(to_text(c))`` reproduces ``c``."""
    pr = cfg.problem
    ini = pr.initial
    lines = ["[problem]", f"gamma = {_fmt(pr.gamma)}", f"epsilon = {_fmt(pr.epsilon)}"]
    if cfg.eps_list is not None:
        lines.append(f"eps_list = {_fmt(cfg.eps_list)}")
    lines += [
        f"dim = {pr.dim}",
        f"extents = {_fmt([x for e in cfg.grid.extents for x in e])}",
        f"bc = {pr.bc}",
        f"initial = {ini.kind}",
    ]
    if ini.kind == "bump":
        lines += [f"center = {_fmt(ini.center)}", f"radius = {_fmt(ini.radius)}",
                  f"height = {_fmt(ini.height)}", f"clip = {_fmt(ini.clip)}"]
    elif ini.kind == "alt_phillips":
        lines.append(f"offset = {_fmt(ini.offset)}")
    elif ini.kind == "tabulated":
        lines.append(f"values = {_fmt(ini.values)}")
    lines += [f"reaction = {_fmt(pr.reaction)}", f"smoothing_sigma = {_fmt(pr.smoothing_sigma)}", ""]
    g = cfg.grid
    lines += ["[grid]", f"nx = {_fmt(g.nx)}", f"T = {_fmt(g.T)}", f"nt = {g.nt}", f"origin = {_fmt(g.origin)}", ""]
    lines.append("[solver]")
    for f in dataclasses.fields(SolverConfig):
        v = getattr(cfg.solver, f.name)
        if v is not None:
            lines.append(f"{f.name} = {_fmt(v)}")
    lines += ["", "[diagnostics]"]
    for f in dataclasses.fields(DiagnosticsConfig):
        v = getattr(cfg.diagnostics, f.name)
        if v is not None:
            lines.append(f"{f.name} = {_fmt(v)}")
    lines += ["", "[output]", f"dir = {cfg.output_dir}", f"name = {cfg.name}", ""]
    return "\n".join(lines)
