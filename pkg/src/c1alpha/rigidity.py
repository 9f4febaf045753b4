"""Curvature, Gauss maps and degree computations for sampled surfaces.

Gauss curvature is computed intrinsically from the metric (Christoffel
symbols and ``R_1212``, cross-checked with the Brioschi formula).  The
Brouwer degree of the Gauss map is evaluated on the piecewise-linear image:
every grid cell is split into two triangles, mapped to spherical triangles
by the normals, and a point's degree is the signed count of image triangles
containing it.  Spherical integrals use a Lambert equal-area lattice.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .construction import ImmersionState
from .errors import BoundaryProximityError, DomainError
from .grid import Grid, GridField, diff_axis
from .mollifier import make_kernel
from .tensors import det2, inv2, pullback

DEFAULT_SPHERE_RES = (200, 400)
_TIE_EPS = 1e-15


def _d(values, grid, axis):
    return diff_axis(values, axis, 1, grid.spacing[axis], grid.is_periodic(axis))


def _metric_values(g):
    if isinstance(g, GridField):
        return g.grid, np.asarray(g.values, dtype=float)
    raise DomainError("expected a metric GridField")


def christoffel(g: GridField) -> np.ndarray:
    """``Gamma^i_{jk} = g^{im} (d_k g_jm + d_j g_mk - d_m g_kj) / 2``.

    Returns an array of shape ``grid.shape + (2, 2, 2)`` indexed ``[i, j, k]``.
    """
    grid, gv = _metric_values(g)
    if grid.ndim != 2:
        raise DomainError("christoffel symbols are implemented for surfaces")
    det = det2(gv)
    if np.any(det <= 1e-14):
        raise DomainError("metric is singular")
    ginv = inv2(gv)
    dg = np.stack([_d(gv, grid, c) for c in range(2)], axis=-1)  # [a, b, c] = d_c g_ab
    # first kind: [j, k, m] = (d_k g_jm + d_j g_mk - d_m g_kj) / 2
    first = 0.5 * (np.einsum("...jmk->...jkm", dg) + np.einsum("...mkj->...jkm", dg)
                   - np.einsum("...kjm->...jkm", dg))
    gam = np.einsum("...im,...jkm->...ijk", ginv, first)
    return 0.5 * (gam + np.swapaxes(gam, -1, -2))


def _curvature_from_christoffel(grid, gv, gam):
    d1 = _d(gam, grid, 0)
    d2 = _d(gam, grid, 1)
    # R_1212 = g_2m (d_2 Gam^m_11 - d_1 Gam^m_12 + Gam^p_11 Gam^m_2p - Gam^p_12 Gam^m_1p)
    term = (d2[..., :, 0, 0] - d1[..., :, 0, 1]
            + np.einsum("...p,...mp->...m", gam[..., :, 0, 0], gam[..., :, 1, :])
            - np.einsum("...p,...mp->...m", gam[..., :, 0, 1], gam[..., :, 0, :]))
    r1212 = np.einsum("...m,...m->...", gv[..., 1, :], term)
    return r1212 / det2(gv)


def _curvature_brioschi(grid, gv):
    E, F, G = gv[..., 0, 0], gv[..., 0, 1], gv[..., 1, 1]
    Eu, Ev = _d(E, grid, 0), _d(E, grid, 1)
    Fu, Fv = _d(F, grid, 0), _d(F, grid, 1)
    Gu, Gv = _d(G, grid, 0), _d(G, grid, 1)
    Evv = diff_axis(E, 1, 2, grid.spacing[1], grid.is_periodic(1))
    Guu = diff_axis(G, 0, 2, grid.spacing[0], grid.is_periodic(0))
    Fuv = _d(Fu, grid, 1)
    m1 = np.stack([
        np.stack([-0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev], axis=-1),
        np.stack([Fv - 0.5 * Gu, E, F], axis=-1),
        np.stack([0.5 * Gv, F, G], axis=-1),
    ], axis=-2)
    z = np.zeros_like(E)
    m2 = np.stack([
        np.stack([z, 0.5 * Ev, 0.5 * Gu], axis=-1),
        np.stack([0.5 * Ev, E, F], axis=-1),
        np.stack([0.5 * Gu, F, G], axis=-1),
    ], axis=-2)
    det = E * G - F * F
    return (np.linalg.det(m1) - np.linalg.det(m2)) / det**2


def gauss_curvature(g: GridField, method="christoffel") -> GridField:
    """Intrinsic Gauss curvature ``R_1212 / det g``.

    ``method="brioschi"`` evaluates the expanded second-derivative formula
    instead; both are second-order accurate in the interior.
    """
    grid, gv = _metric_values(g)
    if method == "christoffel":
        k = _curvature_from_christoffel(grid, gv, christoffel(g))
    elif method == "brioschi":
        if np.any(det2(gv) <= 1e-14):
            raise DomainError("metric is singular")
        k = _curvature_brioschi(grid, gv)
    else:
        raise ValueError(f"unknown method {method!r}")
    return GridField(grid, k, g.margin)


@dataclass(frozen=True, eq=False)
class SurfacePatch:
    grid: Grid
    u: np.ndarray
    grad: np.ndarray
    N: np.ndarray
    g: np.ndarray
    kappa: np.ndarray
    dA: np.ndarray

    @property
    def cell_shape(self):
        return tuple(c - 1 for c in self.grid.counts)


def gauss_map(u, kappa=True) -> SurfacePatch:
    """Unit normal ``d_1 u x d_2 u / |d_1 u x d_2 u|`` with metric data.

    ``u`` is an :class:`ImmersionState` (exact gradient) or a vector
    :class:`GridField` (gradient by finite differences).
    """
    if isinstance(u, ImmersionState):
        grid, vals, grad = u.grid, u.u, u.grad_u
    else:
        grid, vals = u.grid, np.asarray(u.values, dtype=float)
        grad = np.stack([_d(vals, grid, a) for a in range(grid.ndim)], axis=-1)
    if grid.ndim != 2 or vals.shape[-1] != 3:
        raise DomainError("gauss_map needs a surface in R^3")
    cr = np.cross(grad[..., 0], grad[..., 1])
    nrm = np.linalg.norm(cr, axis=-1)
    if nrm.min() < 1e-12:
        idx = np.unravel_index(int(np.argmin(nrm)), nrm.shape)
        raise DomainError(f"degenerate immersion at {idx}")
    N = cr / nrm[..., None]
    g = pullback(grad)
    k = gauss_curvature(GridField(grid, g)).values if kappa else np.full(grid.shape, np.nan)
    return SurfacePatch(grid, vals, grad, N, g, k, np.sqrt(det2(g)))


def shape_operator_curvature(patch: SurfacePatch) -> np.ndarray:
    """``det(II) / det(I)`` with ``II_ij = d_i d_j u . N`` from second differences."""
    grid = patch.grid
    b = np.empty(grid.shape + (2, 2))
    for i in range(2):
        for j in range(2):
            d2 = _d(patch.grad[..., j], grid, i)
            b[..., i, j] = np.einsum("...a,...a->...", d2, patch.N)
    b = 0.5 * (b + np.swapaxes(b, -1, -2))
    return det2(b) / det2(patch.g)


# ------------------------------------------------------------ regions


def cell_centers(grid: Grid):
    x = [grid.axis_coords(a) for a in range(grid.ndim)]
    mids = [0.5 * (c[1:] + c[:-1]) for c in x]
    return np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1)


def region_mask(grid: Grid, region):
    """Boolean cell mask for ``region``.

    ``region`` is ``None`` (every cell), a boolean array over cells, a box
    ``((lo_1, lo_2), (hi_1, hi_2))`` in physical coordinates (cells entirely
    inside), or a callable of cell-centre coordinates.
    """
    shape = tuple(c - 1 for c in grid.counts)
    if region is None:
        return np.ones(shape, dtype=bool)
    if callable(region):
        return np.asarray(region(cell_centers(grid)), dtype=bool)
    if isinstance(region, np.ndarray) and region.dtype == bool:
        if region.shape != shape:
            raise DomainError(f"cell mask must have shape {shape}")
        return region
    lo, hi = np.asarray(region[0], dtype=float), np.asarray(region[1], dtype=float)
    masks = []
    for a in range(grid.ndim):
        x = grid.axis_coords(a)
        left, right = x[:-1], x[1:]
        masks.append((left >= lo[a] - 1e-12) & (right <= hi[a] + 1e-12))
    return np.logical_and.outer(*masks) if grid.ndim == 2 else masks[0]


def boundary_vertices(mask):
    """Vertex mask of the boundary of the union of the masked cells."""
    nx, ny = mask.shape
    pad = np.pad(mask, 1)
    # a vertex (i, j) touches cells (i-1..i, j-1..j); boundary if it touches both kinds
    touch = np.stack([pad[i:i + nx + 1, j:j + ny + 1] for i in (0, 1) for j in (0, 1)])
    return touch.any(axis=0) & ~touch.all(axis=0)


# ------------------------------------------------- triangulated image


@dataclass(frozen=True, eq=False)
class SphericalImage:
    """Oriented spherical triangles ``N(cell)`` of a masked set of cells."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    orientation: np.ndarray
    tree: cKDTree
    reach: float
    boundary_normals: np.ndarray
    edge_variation: float


def _triangles(N, mask):
    i, j = np.nonzero(mask)
    p00, p10, p11, p01 = N[i, j], N[i + 1, j], N[i + 1, j + 1], N[i, j + 1]
    a = np.concatenate([p00, p00])
    b = np.concatenate([p10, p11])
    c = np.concatenate([p11, p01])
    return a, b, c


def spherical_image(patch: SurfacePatch, region=None, N=None) -> SphericalImage:
    N = patch.N if N is None else N
    mask = region_mask(patch.grid, region)
    if not mask.any():
        raise DomainError("empty region")
    a, b, c = _triangles(N, mask)
    det = np.einsum("...i,...i->...", a, np.cross(b, c))
    orient = np.sign(det)
    orient[np.abs(det) <= _TIE_EPS] = 0.0
    cen = (a + b + c) / 3.0
    reach = float(max(np.max(np.linalg.norm(v - cen, axis=-1)) for v in (a, b, c)))
    tree = cKDTree(cen)
    bnd = N[boundary_vertices(mask)]
    ev = max(float(np.max(np.linalg.norm(np.diff(N, axis=0), axis=-1))),
             float(np.max(np.linalg.norm(np.diff(N, axis=1), axis=-1))))
    return SphericalImage(a, b, c, orient, tree, 1.5 * reach + 1e-12, bnd, ev)


def _contains(img: SphericalImage, yi, ti, Y):
    """Containment status of ``Y[yi]`` in triangles ``ti``: +1 inside, 0 outside, nan tie."""
    y = Y[yi]
    a, b, c = img.a[ti], img.b[ti], img.c[ti]
    s = img.orientation[ti]
    d1 = np.einsum("...i,...i->...", np.cross(a, b), y)
    d2 = np.einsum("...i,...i->...", np.cross(b, c), y)
    d3 = np.einsum("...i,...i->...", np.cross(c, a), y)
    front = np.einsum("...i,...i->...", a + b + c, y) > 0
    inside = front & (s * d1 > 0) & (s * d2 > 0) & (s * d3 > 0) & (s != 0)
    tie = front & (s != 0) & ((np.abs(d1) <= _TIE_EPS) | (np.abs(d2) <= _TIE_EPS)
                              | (np.abs(d3) <= _TIE_EPS)) & (s * np.minimum(np.minimum(d1 * s, d2 * s), d3 * s) >= -_TIE_EPS)
    return inside, tie


def _perturb(Y, step):
    """Deterministic small rotation of points (tie breaking)."""
    t = np.array([0.5773502691896258, 0.5773502691896258, 0.5773502691896258])
    d = np.cross(Y, t)
    n = np.linalg.norm(d, axis=-1, keepdims=True)
    d = np.where(n > 1e-8, d / np.maximum(n, 1e-300), np.array([1.0, 0.0, 0.0]))
    out = Y + step * d
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def degree_at(img: SphericalImage, Y, signed=True, tie_step=None):
    """Degree (or unsigned coverage count) at each row of ``Y``."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Y = Y / np.linalg.norm(Y, axis=-1, keepdims=True)
    tie_step = 0.5 * np.pi / DEFAULT_SPHERE_RES[0] if tie_step is None else tie_step
    out = np.zeros(Y.shape[0])
    todo = np.arange(Y.shape[0])
    pts = Y.copy()
    for _ in range(4):
        cand = img.tree.query_ball_point(pts[todo], img.reach)
        lens = np.fromiter((len(c) for c in cand), dtype=np.intp, count=len(cand))
        yi = np.repeat(np.arange(todo.size), lens)
        ti = np.fromiter((t for c in cand for t in c), dtype=np.intp, count=int(lens.sum()))
        inside, tie = _contains(img, yi, ti, pts[todo])
        w = img.orientation[ti] if signed else np.ones(ti.size)
        vals = np.bincount(yi, weights=w * inside, minlength=todo.size)
        tied = np.bincount(yi, weights=tie.astype(float), minlength=todo.size) > 0
        out[todo[~tied]] = vals[~tied]
        if not tied.any():
            break
        todo = todo[tied]
        pts[todo] = _perturb(pts[todo], tie_step)
    else:
        out[todo] = vals[tied]
    return np.rint(out).astype(int) if signed else out


def _check_boundary(img: SphericalImage, Y, cells=2.0):
    if img.boundary_normals.size == 0:
        return
    tree = cKDTree(img.boundary_normals)
    dist, _ = tree.query(np.atleast_2d(Y))
    limit = cells * img.edge_variation
    if np.any(dist <= max(limit, 1e-12)):
        raise BoundaryProximityError(
            f"point within {dist.min():.3e} of the boundary image (needs > {limit:.3e})"
        )


def degree_field(patch: SurfacePatch, region, Y, N=None, cells=2.0):
    """Degrees at the rows of ``Y`` plus a mask of the admissible points.

    A point is admissible when it is farther from the boundary image than
    ``cells`` grid-cells' worth of normal variation; degrees at the other
    points are returned but not meaningful.
    """
    img = spherical_image(patch, region, N)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Y = Y / np.linalg.norm(Y, axis=-1, keepdims=True)
    if img.boundary_normals.size:
        dist, _ = cKDTree(img.boundary_normals).query(Y)
        valid = dist > max(cells * img.edge_variation, 1e-12)
    else:
        valid = np.ones(Y.shape[0], dtype=bool)
    return degree_at(img, Y), valid


def brouwer_degree(patch: SurfacePatch, region, y, N=None) -> int:
    """``deg(y, V, N)`` for a single unit vector ``y``."""
    img = spherical_image(patch, region, N)
    y = np.asarray(y, dtype=float)
    y = y / np.linalg.norm(y)
    _check_boundary(img, y)
    return int(degree_at(img, y[None, :])[0])


# --------------------------------------------------- spherical lattice


@dataclass(frozen=True)
class SphereLattice:
    """Lambert equal-area lattice: ``nz`` bands uniform in ``z`` times ``nphi`` sectors."""

    nz: int
    nphi: int

    @property
    def cell_area(self):
        return 4 * np.pi / (self.nz * self.nphi)

    def centers(self):
        z = -1 + (np.arange(self.nz) + 0.5) * 2.0 / self.nz
        p = (np.arange(self.nphi) + 0.5) * 2 * np.pi / self.nphi
        Z, P = np.meshgrid(z, p, indexing="ij")
        s = np.sqrt(1 - Z * Z)
        return np.stack([s * np.cos(P), s * np.sin(P), Z], axis=-1).reshape(-1, 3)


def _cell_mean(v):
    return 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:])


def curvature_integral(patch: SurfacePatch, region, f, N=None) -> float:
    """Cell-midpoint quadrature of ``int_V f(N) kappa dA``."""
    N = patch.N if N is None else N
    mask = region_mask(patch.grid, region)
    Nc = _cell_mean(N)
    Nc = Nc / np.linalg.norm(Nc, axis=-1, keepdims=True)
    w = f(Nc) * _cell_mean(patch.kappa) * _cell_mean(patch.dA) * np.prod(patch.grid.spacing)
    return float(np.sum(w[mask]))


def change_of_variables_check(patch: SurfacePatch, region, f, lattice=None, N=None):
    """``int_V f(N) kappa dA`` against ``int_{S^2} f deg(., V, N)``.

    Returns ``(lhs, rhs, |lhs - rhs|)``.  ``f`` maps unit vectors (last axis)
    to values and must vanish on the boundary image.
    """
    lattice = lattice or SphereLattice(*DEFAULT_SPHERE_RES)
    grid = patch.grid
    N = patch.N if N is None else N
    mask = region_mask(grid, region)
    bnd = N[boundary_vertices(mask)]
    if bnd.size and np.max(np.abs(f(bnd))) > 0:
        raise DomainError("f does not vanish on the image of the boundary")
    lhs = curvature_integral(patch, mask, f, N)
    Y = lattice.centers()
    fy = f(Y)
    nz = fy != 0
    if not np.any(nz):
        return lhs, 0.0, abs(lhs)
    img = spherical_image(patch, mask, N)
    deg = degree_at(img, Y[nz])
    rhs = float(np.sum(fy[nz] * deg) * lattice.cell_area)
    return lhs, rhs, abs(lhs - rhs)


def extrinsic_curvature_sum(patch: SurfacePatch, sets, lattice=None, N=None) -> float:
    """``sum_i |N(E_i)|`` for pairwise disjoint cell sets ``E_i``."""
    lattice = lattice or SphereLattice(*DEFAULT_SPHERE_RES)
    masks = [region_mask(patch.grid, e) for e in sets]
    total = np.zeros_like(masks[0], dtype=int)
    for m in masks:
        total += m
    if total.max() > 1:
        raise DomainError("sets overlap")
    Y = lattice.centers()
    out = 0.0
    for m in masks:
        if not m.any():
            continue
        img = spherical_image(patch, m, N)
        cover = degree_at(img, Y, signed=False)
        out += float(np.count_nonzero(cover > 0)) * lattice.cell_area
    return out


def mollified_normals(state: ImmersionState, ell):
    """Unit normals of ``u * phi_ell`` (on the cropped grid) and that grid."""
    from .construction import mollify_state

    ms = mollify_state(state, make_kernel(ell, state.grid.spacing))
    cr = np.cross(ms.grad_u[..., 0], ms.grad_u[..., 1])
    return ms, cr / np.linalg.norm(cr, axis=-1, keepdims=True)


def curvature_measure_trend(state: ImmersionState, region, f, ells):
    """``int f(N^e) kappa^e dA^e`` over an ``e``-sweep of mollified maps.

    ``kappa^e`` is the extrinsic curvature of the mollified immersion.  Returns
    the values and their successive differences (a Cauchy trend).
    """
    vals = []
    for ell in ells:
        ms, _ = mollified_normals(state, ell)
        patch = gauss_map(ms, kappa=False)
        patch = SurfacePatch(patch.grid, patch.u, patch.grad, patch.N, patch.g,
                             shape_operator_curvature(patch), patch.dA)
        vals.append(curvature_integral(patch, _restrict(region, state.grid, patch.grid), f))
    vals = np.array(vals)
    return vals, np.abs(np.diff(vals))


def _restrict(region, grid, sub):
    """Carry a region to a cropped sub-grid (boxes and callables carry over)."""
    if isinstance(region, np.ndarray) and region.dtype == bool:
        off = [int(round((sub.origin[a] - grid.origin[a]) / grid.spacing[a])) for a in range(2)]
        n = [c - 1 for c in sub.counts]
        return region[off[0]:off[0] + n[0], off[1]:off[1] + n[1]]
    return region
