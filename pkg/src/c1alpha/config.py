"""Run configuration: a flat ``key = value`` text format and its validation.

Example::

    # flat start towards a conformally flat metric
    domain = 0 1 0 1
    metric = conformal-flat 1.21
    initial = identity-flat
    resolution = 64
    alpha = 0.1

Lines are ``key = value``; ``#`` starts a comment.  Every problem found by
:func:`validate` is collected and reported together.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .construction import DEFAULT_GAMMA, DEFAULT_MAX_RESOLUTION, DEFAULT_MEMORY_LIMIT, ImmersionState
from .errors import ConfigError
from .grid import Grid
from .iteration import alpha_ceiling
from .synthetic import sphere_metric
from .tensors import pullback

SHORTNESS_TOL = 1e-12

METRIC_PRESETS = ("conformal-flat", "sphere-chart", "matrix")
INITIAL_PRESETS = ("identity-flat", "scaled-short", "file")


@dataclass
class RunConfig:
    domain: tuple = (0.0, 1.0, 0.0, 1.0)
    periodic: str = "none"
    n: int = 2
    m: int = 3
    metric: str = "conformal-flat 1.21"
    initial: str = "identity-flat"
    resolution: int = 64
    alpha: float = 0.1
    beta: float = 2.0
    K: str = "auto"
    delta0: str = "auto"
    mu0: str = "auto"
    max_stages: int = 5
    stage_constant: float = 1.0
    max_resolution: int = DEFAULT_MAX_RESOLUTION
    memory_limit: float = DEFAULT_MEMORY_LIMIT
    gamma: float = DEFAULT_GAMMA
    mesh_vertices: int = 513
    record_timing: bool = True
    seed: int = 0
    source: str = field(default="", repr=False)

    # -------------------------------------------------------------- derived

    def override(self, name):
        """Numeric value of an ``auto``-able override, or ``None``."""
        raw = str(getattr(self, name)).strip().lower()
        return None if raw == "auto" else float(raw)

    def grid(self) -> Grid:
        x0, x1, y0, y1 = self.domain
        per = {"none": (), "x": (0,), "y": (1,), "xy": (0, 1)}[self.periodic]
        res = self.resolution
        spacing, counts = [], []
        for a, (lo, hi) in enumerate(((x0, x1), (y0, y1))):
            if a in per:
                spacing.append((hi - lo) / res)
            else:
                spacing.append((hi - lo) / (res - 1))
            counts.append(res)
        return Grid(origin=(x0, y0), spacing=tuple(spacing), counts=tuple(counts),
                    periodic_axes=frozenset(per))

    def target_metric(self):
        """Constant ``(n, n)`` matrix or a callable of the coordinates."""
        kind, *args = self.metric.split()
        vals = [float(v) for v in args]
        if kind == "conformal-flat":
            return vals[0] * np.eye(self.n)
        if kind == "sphere-chart":
            return sphere_metric(vals[0])
        if kind == "matrix":
            g = np.zeros((2, 2))
            g[0, 0], g[0, 1], g[1, 1] = vals
            g[1, 0] = g[0, 1]
            return g
        raise ConfigError([f"metric: unknown preset {kind!r}"])

    def initial_state(self, grid=None) -> ImmersionState:
        grid = self.grid() if grid is None else grid
        kind, *args = self.initial.split(maxsplit=1)
        if kind == "identity-flat":
            return ImmersionState.flat(grid, self.m)
        if kind == "scaled-short":
            return ImmersionState.flat(grid, self.m, scale=float(args[0]))
        if kind == "file":
            path = Path(args[0])
            if not path.is_absolute() and self.source:
                path = Path(self.source).parent / path
            with np.load(path) as data:
                u = np.asarray(data["u"], dtype=float)
                if "grad_u" in data:
                    return ImmersionState(grid, u, np.asarray(data["grad_u"], dtype=float))
            return ImmersionState.from_samples(grid, u)
        raise ConfigError([f"initial: unknown preset {kind!r}"])


_KEYS = {f.name for f in fields(RunConfig)} - {"source"}


def _convert(key, raw):
    default = getattr(RunConfig, key, None)
    if key == "domain":
        vals = tuple(float(v) for v in raw.replace(",", " ").split())
        if len(vals) != 4:
            raise ValueError("expected four numbers x_lo x_hi y_lo y_hi")
        return vals
    if isinstance(default, bool):
        low = raw.lower()
        if low not in ("true", "false", "yes", "no", "1", "0"):
            raise ValueError("expected true or false")
        return low in ("true", "yes", "1")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config(text, source="") -> RunConfig:
    """Parse the flat key-value format; unknown keys and bad values are errors."""
    problems, values = [], {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in _KEYS:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in values:
            problems.append(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            problems.append(f"line {lineno}: {key}: {exc}")
    if problems:
        raise ConfigError(problems)
    return RunConfig(**values, source=str(source))


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), source=path)


def _check_number(problems, name, value, lo=None, hi=None, strict=True):
    if not np.isfinite(value):
        problems.append(f"{name}: must be finite")
    elif lo is not None and (value <= lo if strict else value < lo):
        problems.append(f"{name}: must be {'>' if strict else '>='} {lo}")
    elif hi is not None and value > hi:
        problems.append(f"{name}: must be <= {hi}")


def validate(cfg: RunConfig):
    """Every violated invariant of ``cfg`` (empty when valid)."""
    problems = []
    x0, x1, y0, y1 = cfg.domain
    if not (x0 < x1 and y0 < y1):
        problems.append("domain: bounds must satisfy x_lo < x_hi and y_lo < y_hi")
    if cfg.periodic not in ("none", "x", "y", "xy"):
        problems.append("periodic: expected none, x, y or xy")
    if cfg.n != 2:
        problems.append("n: only planar domains (n = 2) are supported")
    if cfg.m < cfg.n + 1:
        problems.append("m: codimension must be at least one (m >= n + 1)")
    if not 8 <= cfg.resolution <= cfg.max_resolution:
        problems.append(f"resolution: must lie in [8, max_resolution = {cfg.max_resolution}]")
    _check_number(problems, "beta", cfg.beta, 0.0)
    if cfg.n >= 1 and cfg.beta > 0:
        ceil_ = alpha_ceiling(cfg.n, cfg.beta)
        if not 0 < cfg.alpha < ceil_:
            problems.append(f"alpha: must satisfy 0 < alpha < min(1/(1+2n*), beta/2) = {ceil_:.6g}")
    for name in ("K", "delta0", "mu0"):
        try:
            v = cfg.override(name)
        except ValueError:
            problems.append(f"{name}: expected 'auto' or a number")
            continue
        if v is not None:
            _check_number(problems, name, v, 1.0 if name == "K" else 0.0)
    if cfg.max_stages < 1:
        problems.append("max_stages: must be >= 1")
    _check_number(problems, "stage_constant", cfg.stage_constant, 0.0)
    _check_number(problems, "gamma", cfg.gamma, 1.0)
    _check_number(problems, "memory_limit", cfg.memory_limit, 0.0)
    if cfg.mesh_vertices < 2:
        problems.append("mesh_vertices: must be >= 2")

    kind, *args = cfg.metric.split() or [""]
    want = {"conformal-flat": 1, "sphere-chart": 1, "matrix": 3}.get(kind)
    if want is None:
        problems.append(f"metric: unknown preset {kind!r} (expected one of {', '.join(METRIC_PRESETS)})")
    elif len(args) != want:
        problems.append(f"metric: {kind} takes {want} number(s)")
    else:
        try:
            vals = [float(a) for a in args]
        except ValueError:
            problems.append("metric: parameters must be numbers")
            vals = None
        if vals is not None:
            if kind in ("conformal-flat", "sphere-chart") and not vals[0] > 0:
                problems.append(f"metric: {kind} parameter must be positive")
            if kind == "matrix" and not (vals[0] > 0 and vals[0] * vals[2] - vals[1] ** 2 > 0):
                problems.append("metric: matrix must be positive definite")
            if kind == "sphere-chart" and not (0 < x0 and x1 < np.pi):
                problems.append("metric: sphere-chart needs theta = x inside (0, pi)")

    ikind, *iargs = cfg.initial.split(maxsplit=1) or [""]
    if ikind not in INITIAL_PRESETS:
        problems.append(f"initial: unknown preset {ikind!r} (expected one of {', '.join(INITIAL_PRESETS)})")
    elif ikind == "scaled-short":
        try:
            c = float(iargs[0])
            if not c > 0:
                problems.append("initial: scaled-short factor must be positive")
        except (IndexError, ValueError):
            problems.append("initial: scaled-short takes one number")
    elif ikind == "file":
        if not iargs:
            problems.append("initial: file takes a path")
        else:
            path = Path(iargs[0])
            if not path.is_absolute() and cfg.source:
                path = Path(cfg.source).parent / path
            if not path.exists():
                problems.append(f"initial: file {path} does not exist")

    # shortness needs a buildable grid, metric and initial map
    structural = ("domain", "periodic", "n:", "m:", "resolution", "metric", "initial")
    if not any(p.startswith(structural) for p in problems):
        problems.extend(_shortness_problems(cfg))
    return problems


def _shortness_problems(cfg):
    grid = cfg.grid()
    try:
        state = cfg.initial_state(grid)
    except (OSError, KeyError, ValueError) as exc:
        return [f"initial: cannot build the initial map ({exc})"]
    if state.u.shape != grid.shape + (cfg.m,):
        return [f"initial: expected samples of shape {grid.shape + (cfg.m,)}, got {state.u.shape}"]
    g = cfg.target_metric()
    gv = g(grid.coords()) if callable(g) else np.broadcast_to(g, grid.shape + (2, 2))
    gap = np.linalg.eigvalsh(gv - pullback(state.grad_u))[..., 0]
    if gap.min() < -SHORTNESS_TOL:
        idx = np.unravel_index(int(np.argmin(gap)), gap.shape)
        return [f"shortness: initial map is not short (u^#e <= g fails by {-gap.min():.4g} at {tuple(int(i) for i in idx)})"]
    return []


def check(cfg: RunConfig):
    problems = validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg
