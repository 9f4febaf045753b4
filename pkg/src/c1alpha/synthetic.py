"""Synthetic fields and immersions with known regularity or geometry."""
from __future__ import annotations

import numpy as np

from .construction import ImmersionState
from .grid import Grid


def weierstrass(x, alpha, levels, amplitude=1.0):
    """``A sum_{j<=J} 2^{-alpha j} cos(2^j x)`` -- Holder-``alpha`` uniformly in ``J``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for j in range(levels + 1):
        out += 2.0 ** (-alpha * j) * np.cos(2.0**j * x)
    return amplitude * out


def periodic_line(n, period=2 * np.pi):
    """1-D periodic grid on ``[0, period)``."""
    return Grid(origin=(0.0,), spacing=(period / n,), counts=(n,), periodic_axes=frozenset({0}))


def flat_pullback_map(grid: Grid, alpha, levels, amplitude=0.5) -> ImmersionState:
    """``v(x) = (gamma_1(x_1), x_2, gamma_2(x_1))`` with ``gamma' = (cos t, sin t)``.

    ``t = weierstrass(x_1)`` is only Holder-``alpha``, so ``v`` is exactly
    ``C^{1,alpha}`` while its pullback metric is the identity.
    """
    if grid.ndim != 2:
        raise ValueError("flat_pullback_map lives on a 2-D grid")
    x = grid.coords()
    th = weierstrass(x[..., 0], alpha, levels, amplitude)
    c, s = np.cos(th), np.sin(th)
    # gamma by cumulative trapezoid along x_1 (values only; the gradient is exact)
    h = grid.spacing[0]
    g1 = np.concatenate([np.zeros_like(c[:1]), np.cumsum(0.5 * h * (c[1:] + c[:-1]), axis=0)])
    g2 = np.concatenate([np.zeros_like(s[:1]), np.cumsum(0.5 * h * (s[1:] + s[:-1]), axis=0)])
    u = np.stack([g1, x[..., 1], g2], axis=-1)
    grad = np.zeros(grid.shape + (3, 2))
    grad[..., 0, 0] = c
    grad[..., 2, 0] = s
    grad[..., 1, 1] = 1.0
    return ImmersionState(grid, u, grad)


def sphere_chart(R, grid: Grid) -> ImmersionState:
    """``(theta, phi) -> R (sin t cos p, sin t sin p, cos t)`` with outward normal."""
    x = grid.coords()
    t, p = x[..., 0], x[..., 1]
    st, ct, sp, cp = np.sin(t), np.cos(t), np.sin(p), np.cos(p)
    u = R * np.stack([st * cp, st * sp, ct], axis=-1)
    grad = np.empty(grid.shape + (3, 2))
    grad[..., :, 0] = R * np.stack([ct * cp, ct * sp, -st], axis=-1)
    grad[..., :, 1] = R * np.stack([-st * sp, st * cp, np.zeros_like(st)], axis=-1)
    return ImmersionState(grid, u, grad)


def sphere_metric(R):
    """The round metric ``diag(R^2, R^2 sin^2 theta)`` as a callable of the chart."""

    def g(x):
        st = np.sin(x[..., 0])
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = R * R
        out[..., 1, 1] = (R * st) ** 2
        return out

    return g


def cap_graph(R, half_width, counts) -> ImmersionState:
    """Upper hemisphere graph ``z = sqrt(R^2 - x^2 - y^2)`` over a centred square."""
    if half_width * np.sqrt(2) >= R:
        raise ValueError("square must lie inside the disc of radius R")
    grid = Grid.from_bounds((-half_width, -half_width), (half_width, half_width), counts)
    x = grid.coords()
    z = np.sqrt(R * R - x[..., 0] ** 2 - x[..., 1] ** 2)
    u = np.stack([x[..., 0], x[..., 1], z], axis=-1)
    grad = np.zeros(grid.shape + (3, 2))
    grad[..., 0, 0] = 1.0
    grad[..., 1, 1] = 1.0
    grad[..., 2, 0] = -x[..., 0] / z
    grad[..., 2, 1] = -x[..., 1] / z
    return ImmersionState(grid, u, grad)


def cap_half_width(R, height):
    """Half-width of the square chart carrying the cap of the given height.

    Midway between the cap's base radius and the largest admissible square,
    so the boundary image stays clear of the cap.
    """
    base = np.sqrt(R * R - (R - height) ** 2)
    top = R / np.sqrt(2)
    if base >= top:
        raise ValueError("cap too high for a graph chart over a square")
    return 0.5 * (base + top)


def convex_graph(a, b, half_width, counts) -> ImmersionState:
    """``z = (a x^2 + b y^2) / 2`` (positive curvature for ``a, b > 0``)."""
    grid = Grid.from_bounds((-half_width, -half_width), (half_width, half_width), counts)
    x = grid.coords()
    u = np.stack([x[..., 0], x[..., 1], 0.5 * (a * x[..., 0] ** 2 + b * x[..., 1] ** 2)], axis=-1)
    grad = np.zeros(grid.shape + (3, 2))
    grad[..., 0, 0] = 1.0
    grad[..., 1, 1] = 1.0
    grad[..., 2, 0] = a * x[..., 0]
    grad[..., 2, 1] = b * x[..., 1]
    return ImmersionState(grid, u, grad)


def convex_graph_curvature(a, b, x):
    """Exact Gauss curvature of :func:`convex_graph`."""
    p, q = a * x[..., 0], b * x[..., 1]
    return a * b / (1 + p * p + q * q) ** 2


def smooth_graph(grid: Grid, eps=0.2, k=1.0) -> ImmersionState:
    """``(x_1, x_2, eps sin(k x_1) sin(k x_2))`` -- a smooth non-flat immersion."""
    x = grid.coords()
    s1, s2 = np.sin(k * x[..., 0]), np.sin(k * x[..., 1])
    c1, c2 = np.cos(k * x[..., 0]), np.cos(k * x[..., 1])
    u = np.stack([x[..., 0], x[..., 1], eps * s1 * s2], axis=-1)
    grad = np.zeros(grid.shape + (3, 2))
    grad[..., 0, 0] = 1.0
    grad[..., 1, 1] = 1.0
    grad[..., 2, 0] = eps * k * c1 * s2
    grad[..., 2, 1] = eps * k * s1 * c2
    return ImmersionState(grid, u, grad)
