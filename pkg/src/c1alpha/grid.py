"""Sampled-function calculus on uniform rectangular grids.

Fields are plain numpy arrays of shape ``grid.shape + value_shape`` wrapped in
:class:`GridField`.  Scalar fields have ``value_shape == ()``, vector fields
``(m,)``, matrix fields ``(m, n)``; symmetric tensors are stored as full
``(n, n)`` blocks that are symmetrized on construction.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import DomainError, ResolutionError

MAX_DERIVATIVE_ORDER = 4
ALL_PAIRS_LIMIT = 4096


@dataclass(frozen=True)
class Grid:
    """Uniform tensor-product grid.

    Non-periodic axes include both endpoints of their interval; periodic axes
    omit the right endpoint, which is identified with the left one.
    """

    origin: tuple
    spacing: tuple
    counts: tuple
    periodic_axes: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        object.__setattr__(self, "periodic_axes", frozenset(int(a) for a in self.periodic_axes))
        if not (len(self.origin) == len(self.spacing) == len(self.counts)):
            raise DomainError("origin, spacing and counts must have the same length")
        if any(h <= 0 for h in self.spacing):
            raise DomainError("grid spacing must be positive on every axis")
        if any(c < 4 for c in self.counts):
            raise ResolutionError("a grid needs at least 4 samples per axis")
        if any(a < 0 or a >= len(self.counts) for a in self.periodic_axes):
            raise DomainError("periodic axis index out of range")

    @classmethod
    def from_bounds(cls, lower, upper, counts, periodic=()):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        counts = np.atleast_1d(np.asarray(counts, dtype=int))
        if counts.size == 1 and lower.size > 1:
            counts = np.repeat(counts, lower.size)
        periodic = frozenset(periodic)
        spacing = []
        for ax, (a, b, c) in enumerate(zip(lower, upper, counts)):
            if b <= a:
                raise DomainError("upper bound must exceed lower bound")
            spacing.append((b - a) / (c if ax in periodic else c - 1))
        return cls(tuple(lower), tuple(spacing), tuple(counts), periodic)

    @property
    def ndim(self):
        return len(self.counts)

    @property
    def shape(self):
        return self.counts

    @property
    def size(self):
        return int(np.prod(self.counts))

    def is_periodic(self, axis):
        return axis in self.periodic_axes

    def axis_coords(self, axis):
        return self.origin[axis] + self.spacing[axis] * np.arange(self.counts[axis])

    def coords(self):
        """Sample coordinates as an array of shape ``shape + (ndim,)``."""
        axes = [self.axis_coords(a) for a in range(self.ndim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def extent(self, axis):
        """Length of the covered interval (period length on periodic axes)."""
        c = self.counts[axis] if self.is_periodic(axis) else self.counts[axis] - 1
        return c * self.spacing[axis]

    def crop(self, lo, hi):
        """Sub-grid dropping ``lo[a]`` leading and ``hi[a]`` trailing samples."""
        origin, counts = list(self.origin), list(self.counts)
        for a in range(self.ndim):
            if (lo[a] or hi[a]) and self.is_periodic(a):
                raise DomainError("cannot crop a periodic axis")
            origin[a] += lo[a] * self.spacing[a]
            counts[a] -= lo[a] + hi[a]
        return Grid(tuple(origin), self.spacing, tuple(counts), self.periodic_axes)

    def refine(self, factor=2):
        """Grid with ``factor`` times as many intervals on every axis."""
        counts = []
        for a, c in enumerate(self.counts):
            counts.append(c * factor if self.is_periodic(a) else (c - 1) * factor + 1)
        spacing = tuple(h / factor for h in self.spacing)
        return Grid(self.origin, spacing, tuple(counts), self.periodic_axes)


@dataclass(frozen=True, eq=False)
class GridField:
    """A function sampled on a :class:`Grid`.

    ``margin`` records, per axis, the physical width already cut away from
    the original domain on each side (mollification shrinks the valid region).
    """

    grid: Grid
    values: np.ndarray
    margin: tuple = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape[: self.grid.ndim] != self.grid.shape:
            raise DomainError(
                f"values of shape {values.shape} do not match grid shape {self.grid.shape}"
            )
        object.__setattr__(self, "values", values)
        if self.margin is None:
            object.__setattr__(self, "margin", (0.0,) * self.grid.ndim)

    @classmethod
    def tensor(cls, grid, values, margin=None):
        """Symmetric tensor field; the stored blocks are exactly symmetric."""
        values = np.asarray(values, dtype=float)
        values = 0.5 * (values + np.swapaxes(values, -1, -2))
        return cls(grid, values, margin)

    @classmethod
    def from_function(cls, grid, func, margin=None):
        x = grid.coords()
        return cls(grid, np.asarray(func(x), dtype=float), margin)

    @property
    def value_shape(self):
        return self.values.shape[self.grid.ndim:]

    def with_values(self, values):
        return replace(self, values=values)

    def crop(self, lo, hi):
        idx = tuple(slice(l, c - h) for l, h, c in zip(lo, hi, self.grid.counts))
        margin = tuple(
            m + max(l, h) * s for m, l, h, s in zip(self.margin, lo, hi, self.grid.spacing)
        )
        return GridField(self.grid.crop(lo, hi), self.values[idx], margin)

    def pointwise_norm(self):
        """Euclidean (Frobenius) norm of the value at every sample."""
        v = self.values.reshape(self.grid.shape + (-1,))
        return np.sqrt(np.sum(v * v, axis=-1))

    def sup(self):
        return float(np.max(self.pointwise_norm()))

    def _check_same_grid(self, other):
        if self.grid != other.grid:
            raise DomainError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, GridField):
            self._check_same_grid(other)
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, GridField):
            self._check_same_grid(other)
            return self.with_values(self.values - other.values)
        return self.with_values(self.values - other)

    def __mul__(self, scalar):
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


@lru_cache(maxsize=None)
def stencil_weights(offsets, order):
    """Weights ``w`` with ``sum(w_k f(x + o_k h)) = h**order f^(order)(x) + O(h**(len-order))``.

    Solved in exact rational arithmetic, so the usual dyadic stencils come out
    bit-exact.
    """
    n = len(offsets)
    A = [[Fraction(o) ** p / _factorial(p) for o in offsets] for p in range(n)]
    b = [Fraction(int(p == order)) for p in range(n)]
    w = _solve_fraction(A, b)
    return tuple(float(x) for x in w)


def _factorial(p):
    out = 1
    for i in range(2, p + 1):
        out *= i
    return out


def _solve_fraction(A, b):
    n = len(b)
    M = [row[:] + [b[i]] for i, row in enumerate(A)]
    for col in range(n):
        piv = next(r for r in range(col, n) if M[r][col] != 0)
        M[col], M[piv] = M[piv], M[col]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col] / M[col][col]
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    return [M[i][n] / M[i][i] for i in range(n)]


def _half_width(order):
    return (order + 1) // 2


def min_samples(order, periodic):
    if order == 0:
        return 1
    return 2 * _half_width(order) + 1 if periodic else order + 2


def diff_axis(values, axis, order, h, periodic):
    """Second-order accurate ``order``-th derivative of ``values`` along ``axis``."""
    if order == 0:
        return values
    n = values.shape[axis]
    if n < min_samples(order, periodic):
        raise ResolutionError(
            f"{n} samples cannot resolve a derivative of order {order} along axis {axis}"
        )
    p = _half_width(order)
    central = tuple(range(-p, p + 1))
    w = stencil_weights(central, order)
    v = np.moveaxis(values, axis, 0)
    out = np.zeros_like(v, dtype=float)
    if periodic:
        for o, wk in zip(central, w):
            if wk != 0.0:
                out += wk * np.roll(v, -o, axis=0)
    else:
        for o, wk in zip(central, w):
            if wk != 0.0:
                out[p : n - p] += wk * v[p + o : n - p + o]
        width = order + 2
        for i in range(p):
            offs = tuple(range(-i, -i + width))
            wl = stencil_weights(offs, order)
            out[i] = sum(wk * v[i + o] for o, wk in zip(offs, wl))
            j = n - 1 - i
            wr = stencil_weights(tuple(-o for o in offs), order)
            out[j] = sum(wk * v[j - o] for o, wk in zip(offs, wr))
    out /= h**order
    return np.moveaxis(out, 0, axis)


def finite_difference(field: GridField, multiindex) -> GridField:
    """Partial derivative ``d^a f`` for the multi-index ``a`` (axis powers).

    Central stencils in the interior, one-sided stencils of the same accuracy
    at non-periodic edges, exact wrap-around on periodic axes.
    """
    multiindex = tuple(int(a) for a in multiindex)
    grid = field.grid
    if len(multiindex) != grid.ndim or any(a < 0 for a in multiindex):
        raise DomainError("multi-index must give a nonnegative power for every axis")
    total = sum(multiindex)
    if total > MAX_DERIVATIVE_ORDER:
        raise DomainError(f"derivative order {total} exceeds {MAX_DERIVATIVE_ORDER}")
    for ax, a in enumerate(multiindex):
        if a and grid.counts[ax] < total + 2:
            raise ResolutionError(
                f"axis {ax} has {grid.counts[ax]} samples, order {total} needs {total + 2}"
            )
    values = np.asarray(field.values, dtype=float)
    for ax, a in enumerate(multiindex):
        values = diff_axis(values, ax, a, grid.spacing[ax], grid.is_periodic(ax))
    return field.with_values(values)


def gradient(field: GridField) -> np.ndarray:
    """All first partials stacked on a new trailing axis."""
    n = field.grid.ndim
    parts = [finite_difference(field, tuple(int(i == a) for i in range(n))).values
             for a in range(n)]
    return np.stack(parts, axis=-1)


def multiindices(n, order):
    """All multi-indices of length ``n`` with ``|a| == order``, in fixed order."""
    return [a for a in itertools.product(range(order + 1), repeat=n) if sum(a) == order]


@dataclass(frozen=True)
class HolderNorm:
    k: int
    alpha: float
    value: float
    sup_part: float
    seminorm: float


def interior_samples(grid, margin):
    """Samples to drop per side so that ``margin`` (physical) is excluded."""
    if np.isscalar(margin):
        margin = (margin,) * grid.ndim
    out = []
    for a, m in enumerate(margin):
        if grid.is_periodic(a) or m <= 0:
            out.append(0)
        else:
            out.append(int(np.ceil(m / grid.spacing[a] - 1e-9)))
    return tuple(out)


def c_norm(field: GridField, k: int, margin=0.0) -> float:
    """``sup_x sum_{|a|<=k} |d^a f(x)|`` on the interior."""
    return holder_norm(field, k, 0.0, margin=margin).value


def holder_norm(field: GridField, k: int, alpha: float, margin=0.0, pairs="auto") -> HolderNorm:
    """Discrete ``C^{k,alpha}`` norm.

    The seminorm sup runs over all sample pairs when the (interior) field has
    at most 4096 samples, otherwise over pairs at dyadic offsets 1, 2, 4, ...
    along each axis.  ``alpha == 0`` gives the plain ``C^k`` norm.
    """
    if not 0 <= k <= 2:
        raise DomainError("holder_norm supports k in {0, 1, 2}")
    if not 0.0 <= alpha < 1.0:
        raise DomainError("alpha must lie in [0, 1)")
    n = field.grid.ndim
    cut = interior_samples(field.grid, margin)
    acc = None
    top = []
    for order in range(k + 1):
        for a in multiindices(n, order):
            d = finite_difference(field, a).crop(cut, cut)
            mag = d.pointwise_norm()
            acc = mag if acc is None else acc + mag
            if order == k:
                top.append(d)
    sup_part = float(np.max(acc))
    semi = 0.0
    if alpha > 0.0:
        stacked = np.stack(
            [t.values.reshape(t.grid.shape + (-1,)) for t in top], axis=-2
        )
        semi = holder_seminorm(stacked, top[0].grid, alpha, pairs)
    return HolderNorm(k, float(alpha), sup_part + semi, sup_part, semi)


def holder_seminorm(values, grid, alpha, pairs="auto"):
    """``sup_{x != y} sum_a |D_a(x) - D_a(y)| / |x - y|^alpha``.

    ``values`` has shape ``grid.shape + (n_terms, n_components)``.
    """
    if pairs == "auto":
        pairs = "all" if grid.size <= ALL_PAIRS_LIMIT else "dyadic"
    if pairs == "all":
        return _seminorm_all_pairs(values, grid, alpha)
    if pairs == "dyadic":
        return _seminorm_dyadic(values, grid, alpha)
    raise DomainError(f"unknown pair set {pairs!r}")


def _seminorm_all_pairs(values, grid, alpha, block=256):
    pts = grid.coords().reshape(-1, grid.ndim)
    vals = values.reshape(pts.shape[0], *values.shape[grid.ndim:])
    best = 0.0
    for i0 in range(0, pts.shape[0], block):
        p = pts[i0 : i0 + block]
        dist = np.sqrt(np.sum((p[:, None, :] - pts[None, :, :]) ** 2, axis=-1))
        diff = vals[i0 : i0 + block, None] - vals[None, :]
        num = np.sum(np.sqrt(np.sum(diff * diff, axis=-1)), axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(dist > 0, num / np.where(dist > 0, dist, 1.0) ** alpha, 0.0)
        best = max(best, float(np.max(q)))
    return best


def _seminorm_dyadic(values, grid, alpha):
    best = 0.0
    for ax in range(grid.ndim):
        n = values.shape[ax]
        step = 1
        while step < n:
            lo = [slice(None)] * values.ndim
            hi = [slice(None)] * values.ndim
            lo[ax] = slice(0, n - step)
            hi[ax] = slice(step, n)
            diff = values[tuple(hi)] - values[tuple(lo)]
            num = np.sum(np.sqrt(np.sum(diff * diff, axis=-1)), axis=-1)
            best = max(best, float(np.max(num)) / (step * grid.spacing[ax]) ** alpha)
            step *= 2
    return best
