"""Convolution smoothing with a compactly supported radial bump.

Besides plain convolution this module provides the commutator
``(fg)*phi - (f*phi)(g*phi)`` and a probe that measures how fast the metric
pulled back by a mollified immersion approaches the original one.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.signal import fftconvolve

from .errors import InsufficientDataError, ResolutionError
from .fitting import loglog_fit
from .grid import GridField, c_norm
from .tensors import pullback


def bump(r):
    """``exp(-1/(1-r^2))`` on the open unit ball, zero outside."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def unit_second_moment(ndim):
    """``int y_1^2 phi(y) dy`` for the unit-mass bump in ``ndim`` dimensions."""
    f = lambda r, p: r**p * float(np.exp(-1.0 / (1.0 - r * r))) if r < 1 else 0.0
    mass = integrate.quad(f, 0.0, 1.0, args=(ndim - 1,), epsabs=0, epsrel=1e-13)[0]
    mom = integrate.quad(f, 0.0, 1.0, args=(ndim + 1,), epsabs=0, epsrel=1e-13)[0]
    return mom / mass / ndim


@dataclass(frozen=True, eq=False)
class MollifierKernel:
    """Sampled ``phi_ell`` on a grid of spacing ``spacing``.

    ``weights`` sum to one exactly up to rounding; ``second_moment`` is the
    continuous ``int y (x) y phi(y) dy`` of the unit kernel (a multiple of the
    identity), ``discrete_second_moment`` the same moment of the sampled
    weights in physical units.
    """

    ell: float
    spacing: tuple
    weights: np.ndarray
    radius_samples: tuple
    second_moment: np.ndarray
    discrete_second_moment: np.ndarray

    @property
    def ndim(self):
        return len(self.spacing)


def make_kernel(ell, spacing) -> MollifierKernel:
    spacing = tuple(float(h) for h in np.atleast_1d(spacing))
    if ell < 2.0 * max(spacing):
        raise ResolutionError(
            f"mollification radius {ell:g} is below two grid spacings ({max(spacing):g})"
        )
    radius = tuple(int(np.floor(ell / h)) for h in spacing)
    axes = [h * np.arange(-p, p + 1) for h, p in zip(spacing, radius)]
    y = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    r = np.sqrt(np.sum(y * y, axis=-1)) / ell
    w = bump(r)
    w /= w.sum()
    # exact mirror symmetry: average with every reflection
    for ax in range(w.ndim):
        w = 0.5 * (w + np.flip(w, axis=ax))
    w /= w.sum()
    n = len(spacing)
    m2 = unit_second_moment(n) * np.eye(n)
    yf = y.reshape(-1, n)
    dm2 = (yf * w.reshape(-1, 1)).T @ yf
    return MollifierKernel(float(ell), spacing, w, radius, m2, dm2)


def _conv_values(values, grid, kernel):
    n = grid.ndim
    pad = []
    for ax in range(n):
        p = kernel.radius_samples[ax] if grid.is_periodic(ax) else 0
        pad.append((p, p))
    pad += [(0, 0)] * (values.ndim - n)
    if any(p for p, _ in pad):
        values = np.pad(values, pad, mode="wrap")
    trailing = values.shape[n:]
    flat = values.reshape(values.shape[:n] + (-1,))
    out = []
    for c in range(flat.shape[-1]):
        out.append(fftconvolve(flat[..., c], kernel.weights, mode="valid"))
    res = np.stack(out, axis=-1)
    return res.reshape(res.shape[:n] + trailing)


def _valid_cut(grid, kernel):
    return tuple(0 if grid.is_periodic(a) else kernel.radius_samples[a] for a in range(grid.ndim))


def convolve(field: GridField, kernel: MollifierKernel) -> GridField:
    """``f * phi_ell``; non-periodic axes lose ``radius`` samples on each side."""
    grid = field.grid
    if tuple(grid.spacing) != tuple(kernel.spacing):
        kernel = make_kernel(kernel.ell, grid.spacing)
    cut = _valid_cut(grid, kernel)
    for a in range(grid.ndim):
        if grid.counts[a] - 2 * cut[a] < 4:
            raise ResolutionError("mollification leaves no valid interior")
    vals = _conv_values(np.asarray(field.values, dtype=float), grid, kernel)
    cropped = field.crop(cut, cut)
    return GridField(cropped.grid, vals, cropped.margin)


def commutator(f: GridField, g: GridField, kernel: MollifierKernel) -> GridField:
    """``(fg)*phi - (f*phi)(g*phi)`` on the valid interior (pointwise products)."""
    fg = f.with_values(f.values * g.values)
    cf, cg = convolve(f, kernel), convolve(g, kernel)
    return convolve(fg, kernel) - cf.with_values(cf.values * cg.values)


def mollify_gradient(grid, grad, kernel):
    """Mollified gradient field, together with the matching cropped grid."""
    field = convolve(GridField(grid, grad), kernel)
    return field.grid, field.values


@dataclass(frozen=True)
class ProbeResult:
    slope: float
    r2: float
    ells: tuple
    norms: tuple
    c0_norms: tuple


def quadratic_estimate_probe(v, ells, interior=0.0) -> ProbeResult:
    """Fitted exponent of ``ell -> ||(v*phi_ell)^# e - v^# e||_{C^1(K)}``.

    ``v`` is anything with ``grid`` and ``grad_u`` attributes (an
    :class:`~c1alpha.construction.ImmersionState`).  ``K`` is the domain shrunk
    by the largest radius plus ``interior``, identical for every radius.
    The fit is reported together with its r^2; a poor fit is not an error.
    """
    ells = sorted(float(e) for e in ells)
    if len(ells) < 3:
        raise InsufficientDataError("the quadratic-estimate probe needs at least 3 radii")
    grid = v.grid
    base = GridField(grid, pullback(v.grad_u))
    total = [int(np.ceil((max(ells) + interior) / h - 1e-9)) for h in grid.spacing]
    norms, c0 = [], []
    for ell in ells:
        kernel = make_kernel(ell, grid.spacing)
        mg = convolve(GridField(grid, v.grad_u), kernel)
        gl = GridField(mg.grid, pullback(mg.values), mg.margin)
        cut = _valid_cut(grid, kernel)
        diff = gl - base.crop(cut, cut)
        extra = tuple((t - c) * h for t, c, h in zip(total, cut, grid.spacing))
        norms.append(c_norm(diff, 1, margin=extra))
        c0.append(c_norm(diff, 0, margin=extra))
    fit = loglog_fit(ells, norms, min_points=3)
    return ProbeResult(fit.slope, fit.r2, tuple(ells), tuple(norms), tuple(c0))
