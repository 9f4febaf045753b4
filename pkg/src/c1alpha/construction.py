"""Corrugation steps and stages acting on sampled immersions.

An :class:`ImmersionState` carries the sampled map ``u`` together with its
first derivatives.  The derivatives are propagated by the chain rule through
every step, so the fast oscillation ``lambda x.nu`` is never differentiated
numerically; only the slowly varying factors (``Psi`` and the amplitude) are.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .corrugation import CorrugationTable, eval_gamma
from .errors import (
    AmplitudeError,
    C1AlphaError,
    DegeneracyError,
    DomainError,
    OscillationError,
    ParameterError,
    ResolutionError,
    StageAbort,
)
from .frame import PrimitiveFrame, decompose_defect
from .grid import Grid, GridField, diff_axis
from .mollifier import _conv_values, make_kernel
from .tensors import eig_sym, inv_spd, pullback

SAMPLES_PER_PERIOD = 16
DEFAULT_MAX_RESOLUTION = 4096
DEFAULT_MEMORY_LIMIT = 3.0e9
# nondegeneracy bound (1/gamma) I <= u^# e <= gamma I enforced after every step
DEFAULT_GAMMA = 8.0
# rough peak number of float64 values alive per grid sample during a stage
_DOUBLES_PER_SAMPLE = 160


@dataclass(frozen=True, eq=False)
class ImmersionState:
    """Sampled immersion ``u`` with exactly propagated first derivatives.

    ``u`` has shape ``grid.shape + (m,)`` and ``grad_u`` shape
    ``grid.shape + (m, n)`` with ``grad_u[..., a, j] = d_j u^a``.
    """

    grid: Grid
    u: np.ndarray
    grad_u: np.ndarray
    margin: tuple = None
    stage: int = 0
    step: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.margin is None:
            object.__setattr__(self, "margin", (0.0,) * self.grid.ndim)
        u = np.asarray(self.u, dtype=float)
        g = np.asarray(self.grad_u, dtype=float)
        if u.shape[: self.grid.ndim] != self.grid.shape or g.shape != u.shape + (self.grid.ndim,):
            raise DomainError("u and grad_u do not match the grid")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "grad_u", g)

    @property
    def n(self):
        return self.grid.ndim

    @property
    def m(self):
        return self.u.shape[-1]

    @property
    def u_field(self):
        return GridField(self.grid, self.u, self.margin)

    @property
    def grad_field(self):
        return GridField(self.grid, self.grad_u, self.margin)

    @classmethod
    def from_map(cls, grid, func, jac):
        """Sample ``func`` (values in R^m) and its Jacobian ``jac`` on ``grid``."""
        x = grid.coords()
        return cls(grid, np.asarray(func(x), dtype=float), np.asarray(jac(x), dtype=float))

    @classmethod
    def flat(cls, grid, m=None, scale=1.0):
        """``u(x) = scale * (x, 0, ..., 0)`` in R^m (default ``m = n + 1``)."""
        n = grid.ndim
        m = n + 1 if m is None else m
        x = grid.coords()
        u = np.zeros(grid.shape + (m,))
        u[..., :n] = scale * x
        grad = np.zeros(grid.shape + (m, n))
        for j in range(n):
            grad[..., j, j] = scale
        return cls(grid, u, grad)

    @classmethod
    def from_samples(cls, grid, u):
        """Immersion from samples only; derivatives by finite differences."""
        u = np.asarray(u, dtype=float)
        parts = [diff_axis(u, a, 1, grid.spacing[a], grid.is_periodic(a)) for a in range(grid.ndim)]
        return cls(grid, u, np.stack(parts, axis=-1))

    def with_meta(self, **kw):
        meta = dict(self.meta)
        meta.update(kw)
        return replace(self, meta=meta)


def pullback_metric(state: ImmersionState) -> GridField:
    """``grad_u^T grad_u`` from the stored derivatives."""
    return GridField.tensor(state.grid, pullback(state.grad_u), state.margin)


def metric_on_grid(g, grid: Grid) -> np.ndarray:
    """Target metric sampled on ``grid``.

    ``g`` may be a constant ``(n, n)`` matrix, a callable of the coordinates
    returning ``(..., n, n)``, or a :class:`GridField` (resampled if its grid
    differs).
    """
    n = grid.ndim
    if isinstance(g, GridField):
        if g.grid == grid:
            return np.asarray(g.values, dtype=float)
        return resample(g.grid, g.values, grid)
    if callable(g):
        return np.asarray(g(grid.coords()), dtype=float)
    g = np.asarray(g, dtype=float)
    if g.shape != (n, n):
        raise DomainError(f"constant metric must have shape {(n, n)}")
    return np.broadcast_to(g, grid.shape + (n, n))


def metric_defect(state: ImmersionState, g) -> float:
    """``sup_x |u^# e - g|`` (Frobenius) on the state's grid."""
    d = pullback(state.grad_u) - metric_on_grid(g, state.grid)
    return float(np.max(np.linalg.norm(d, axis=(-2, -1))))


def nondegeneracy_bounds(state: ImmersionState):
    """Smallest and largest eigenvalue of ``u^# e`` and the index of the worst."""
    ev = eig_sym(pullback(state.grad_u))
    lo, hi = ev[..., 0], ev[..., -1]
    worst = np.maximum(1.0 / np.maximum(lo, 1e-300), hi)
    idx = np.unravel_index(int(np.argmax(worst)), worst.shape)
    return float(lo.min()), float(hi.max()), idx


def is_nondegenerate(state: ImmersionState, gamma) -> bool:
    lo, hi, _ = nondegeneracy_bounds(state)
    return lo >= 1.0 / gamma and hi <= gamma


def gradient_consistency(state: ImmersionState) -> float:
    """Largest difference between differenced ``u`` and the stored gradient.

    The linear part along periodic axes is removed before differencing so
    that the wrap-around stencil sees a periodic function.
    """
    u = state.u
    A = _affine_part(state)
    if A is not None:
        u = u - state.grid.coords() @ A.T
    err = 0.0
    for a in range(state.n):
        d = diff_axis(u, a, 1, state.grid.spacing[a], state.grid.is_periodic(a))
        if A is not None:
            d = d + A[:, a]
        err = max(err, float(np.max(np.abs(d - state.grad_u[..., a]))))
    return err


def _second_derivatives(state: ImmersionState):
    """``d_i d_j u`` for ``i <= j`` by differencing the stored gradient."""
    out = []
    for i in range(state.n):
        for j in range(i, state.n):
            out.append(diff_axis(state.grad_u[..., j], i, 1, state.grid.spacing[i],
                                 state.grid.is_periodic(i)))
    return out


def c2_norm_estimate(state: ImmersionState) -> float:
    """``sup (|u| + sum_j |d_j u| + sum_{|a|=2} |d^a u|)``."""
    total = np.linalg.norm(state.u, axis=-1)
    total = total + np.sum(np.linalg.norm(state.grad_u, axis=-2), axis=-1)
    for d2 in _second_derivatives(state):
        total = total + np.linalg.norm(d2, axis=-1)
    return float(np.max(total))


def c1_distance(a: ImmersionState, b: ImmersionState) -> float:
    """``||a - b||_1`` from values and stored gradients (same grid)."""
    if a.grid != b.grid:
        raise DomainError("states live on different grids")
    du = np.linalg.norm(a.u - b.u, axis=-1)
    dg = np.sum(np.linalg.norm(a.grad_u - b.grad_u, axis=-2), axis=-1)
    return float(np.max(du + dg))


def c0_distance(a: ImmersionState, b: ImmersionState) -> float:
    if a.grid != b.grid:
        raise DomainError("states live on different grids")
    return float(np.max(np.linalg.norm(a.u - b.u, axis=-1)))


# ---------------------------------------------------------------- normals


@dataclass(frozen=True, eq=False)
class NormalFields:
    xi: np.ndarray  # (..., m)
    zeta: np.ndarray  # (..., m)
    psi: np.ndarray  # (..., m, 2)
    xi_norm: np.ndarray  # (...)


def wedge(grad):
    """Generalized cross product of the ``n`` columns of ``grad`` in R^{n+1}."""
    m, n = grad.shape[-2:]
    if m != n + 1:
        raise DomainError("the wedge of n tangent vectors needs m = n + 1")
    if n == 2:
        return np.cross(grad[..., 0], grad[..., 1])
    comps = []
    for a in range(m):
        rows = [b for b in range(m) if b != a]
        comps.append((-1) ** (a + n) * np.linalg.det(grad[..., rows, :]))
    return np.stack(comps, axis=-1)


def _xi(state, nu):
    ginv = inv_spd(pullback(state.grad_u))
    return np.einsum("...aj,...jk,k->...a", state.grad_u, ginv, nu)


def normal_fields(state: ImmersionState, nu, zeta=None, tol=1e-10) -> NormalFields:
    """``xi = grad u (u^# e)^{-1} nu``, the normal ``zeta`` and ``Psi``.

    ``zeta`` defaults to the wedge of the tangent vectors (``m = n + 1``); in
    higher codimension pass the field from :func:`normal_field_highcodim`.
    """
    nu = np.asarray(nu, dtype=float)
    if zeta is None:
        if state.m != state.n + 1:
            raise DomainError("m > n + 1 needs an explicit normal field")
        zeta = wedge(state.grad_u)
    xi = _xi(state, nu)
    xn = np.linalg.norm(xi, axis=-1)
    zn = np.linalg.norm(zeta, axis=-1)
    for name, arr in (("xi", xn), ("zeta", zn)):
        if arr.min() < 1e-8:
            idx = np.unravel_index(int(np.argmin(arr)), arr.shape)
            raise DegeneracyError(f"|{name}| = {arr.min():.3e} vanishes at {idx}")
    xi1 = xi / (xn * xn)[..., None]
    xi2 = zeta / (xn * zn)[..., None]
    psi = np.stack([xi1, xi2], axis=-1)
    # identities grad u^T Psi = |xi|^{-2} nu (x) e1 and Psi^T Psi = |xi|^{-2} I
    inv2 = 1.0 / (xn * xn)
    lhs = np.einsum("...aj,...ab->...jb", state.grad_u, psi)
    rhs = np.zeros_like(lhs)
    rhs[..., :, 0] = inv2[..., None] * nu
    scale = np.maximum(inv2, 1.0)[..., None, None]
    e1 = np.max(np.abs(lhs - rhs) / scale)
    ptp = np.einsum("...ab,...ac->...bc", psi, psi)
    e2 = np.max(np.abs(ptp - inv2[..., None, None] * np.eye(2)) / scale)
    if max(e1, e2) > tol:
        raise DegeneracyError(f"normal-field identities fail (residual {max(e1, e2):.3e})")
    return NormalFields(xi, zeta, psi, xn)


def unit_net(m, count=256, seed=0):
    """Deterministic net of unit vectors: the signed axes, then random points."""
    eye = np.eye(m)
    axes = np.concatenate([eye[::-1], -eye[::-1]])
    rng = np.random.default_rng(seed)
    extra = rng.standard_normal((max(count - axes.shape[0], 0), m))
    extra /= np.linalg.norm(extra, axis=1)[:, None]
    return np.concatenate([axes, extra])


def tangent_projection(state: ImmersionState, w):
    """``pi_x w`` onto span of the tangent vectors, for each ``w`` (last axis)."""
    ginv = inv_spd(pullback(state.grad_u))
    coef = np.einsum("...jk,...ak,...a->...j", ginv, state.grad_u, w)
    return np.einsum("...aj,...j->...a", state.grad_u, coef)


def normal_field_highcodim(state: ImmersionState, w=None, net_size=256, seed=0):
    """``zeta = w - pi_x w`` for a probe ``w`` with ``|pi_x w| <= 1/2`` everywhere.

    Without ``w`` a fixed unit-vector net is searched and the probe with the
    smallest worst-case projection is used.  Returns ``(zeta, w)``.
    """
    m = state.m
    if m < state.n + 1:
        raise DomainError("need m >= n + 1")
    candidates = [np.asarray(w, dtype=float)] if w is not None else list(unit_net(m, net_size, seed))
    best, best_val = None, np.inf
    for c in candidates:
        c = c / np.linalg.norm(c)
        worst = float(np.max(np.linalg.norm(tangent_projection(state, np.broadcast_to(c, state.u.shape)), axis=-1)))
        if worst < best_val:
            best, best_val = c, worst
    if best_val > 0.5:
        raise OscillationError(
            f"no probe keeps |pi_x w| <= 1/2 (best {best_val:.3f}); shrink the domain"
        )
    wf = np.broadcast_to(best, state.u.shape)
    return wf - tangent_projection(state, wf), best


# ------------------------------------------------------------------ step


@dataclass(frozen=True, eq=False)
class StepInput:
    """Data of one corrugation step: amplitude field, direction and scales."""

    a: np.ndarray
    nu: np.ndarray
    lam: float
    ell: float
    delta: float

    def validate(self):
        nu = np.asarray(self.nu, dtype=float)
        if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
            raise DomainError("nu must be a unit vector")
        a = np.asarray(self.a, dtype=float)
        if a.min() < 0:
            raise DomainError("amplitudes must be nonnegative")
        if a.max() > self.delta * (1 + 1e-12):
            raise DomainError(f"||a||_0 = {a.max():.4g} exceeds delta = {self.delta:.4g}")
        if self.lam * self.ell < 1.0 - 1e-12:
            raise ParameterError(f"lambda * ell = {self.lam * self.ell:.4g} < 1")


def check_sampling(lam, grid: Grid):
    if lam * max(grid.spacing) > 2 * np.pi / SAMPLES_PER_PERIOD * (1 + 1e-12):
        raise ResolutionError(
            f"frequency {lam:.4g} needs spacing <= {2 * np.pi / (SAMPLES_PER_PERIOD * lam):.3e}, "
            f"grid has {max(grid.spacing):.3e}"
        )


def _check_periodic_phase(lam, nu, grid):
    for a in range(grid.ndim):
        if grid.is_periodic(a) and nu[a] != 0.0:
            turns = lam * nu[a] * grid.spacing[a] * grid.counts[a] / (2 * np.pi)
            if abs(turns - round(turns)) > 1e-9:
                raise ParameterError(
                    f"phase is not periodic along axis {a} ({turns:.6g} turns per period)"
                )


def corrugation_step(state: ImmersionState, inp: StepInput, table: CorrugationTable,
                     zeta=None) -> ImmersionState:
    """``v = u + Psi Gamma(|xi| a, lambda x.nu) / lambda`` with its exact gradient."""
    inp.validate()
    grid = state.grid
    nu = np.asarray(inp.nu, dtype=float)
    check_sampling(inp.lam, grid)
    _check_periodic_phase(inp.lam, nu, grid)
    if zeta is None and state.m > state.n + 1:
        zeta, _ = normal_field_highcodim(state)
    nf = normal_fields(state, nu, zeta=zeta)
    at = nf.xi_norm * np.asarray(inp.a, dtype=float)
    if at.max() > table.delta_star:
        idx = np.unravel_index(int(np.argmax(at)), at.shape)
        raise AmplitudeError(
            f"amplitude {at.max():.4g} at {idx} exceeds the table range {table.delta_star}"
        )
    lam = float(inp.lam)
    phase = lam * np.einsum("...j,j->...", grid.coords(), nu)
    gam, gam_s, gam_t = eval_gamma(table, at, phase)
    psi = nf.psi
    v = state.u + np.einsum("...ab,...b->...a", psi, gam) / lam
    # d_j Psi and d_j a~ by finite differences of the slowly varying fields
    dpsi = np.stack([diff_axis(psi, j, 1, grid.spacing[j], grid.is_periodic(j))
                     for j in range(state.n)], axis=-1)
    dat = np.stack([diff_axis(at, j, 1, grid.spacing[j], grid.is_periodic(j))
                    for j in range(state.n)], axis=-1)
    main = np.einsum("...ab,...b->...a", psi, gam_t)[..., :, None] * nu
    e1 = np.einsum("...ab,...b->...a", psi, gam_s)[..., :, None] * dat[..., None, :] / lam
    e2 = np.einsum("...abj,...b->...aj", dpsi, gam) / lam
    grad_v = state.grad_u + main + e1 + e2
    return replace(state, u=v, grad_u=grad_v, step=state.step + 1)


# ----------------------------------------------------------------- stage


def _affine_part(state: ImmersionState):
    """Linear part ``A x`` of ``u`` along periodic axes (mean gradient)."""
    grid = state.grid
    per = [a for a in range(grid.ndim) if grid.is_periodic(a)]
    if not per:
        return None
    A = np.zeros((state.m, grid.ndim))
    for a in per:
        A[:, a] = np.mean(state.grad_u[..., a], axis=tuple(range(grid.ndim)))
    return A


def resample(grid: Grid, values, new_grid: Grid, order=3):
    """Cubic-spline resampling of ``values`` from ``grid`` onto ``new_grid``."""
    values = np.asarray(values, dtype=float)
    n = grid.ndim
    coords = []
    for a in range(n):
        x = new_grid.axis_coords(a)
        coords.append((x - grid.origin[a]) / grid.spacing[a])
    mesh = np.meshgrid(*coords, indexing="ij")
    periodic = all(grid.is_periodic(a) for a in range(n))
    mode = "grid-wrap" if periodic else "nearest"
    if any(grid.is_periodic(a) for a in range(n)) and not periodic:
        raise DomainError("mixed periodic/non-periodic resampling is not supported")
    trailing = values.shape[n:]
    flat = values.reshape(grid.shape + (-1,))
    out = np.empty(new_grid.shape + (flat.shape[-1],))
    for c in range(flat.shape[-1]):
        out[..., c] = ndimage.map_coordinates(flat[..., c], mesh, order=order, mode=mode)
    return out.reshape(new_grid.shape + trailing)


def stage_grid(grid: Grid, h_max, max_resolution=DEFAULT_MAX_RESOLUTION):
    """Grid on the same domain with spacing at most ``h_max`` on every axis."""
    counts = []
    for a in range(grid.ndim):
        ext = grid.spacing[a] * (grid.counts[a] if grid.is_periodic(a) else grid.counts[a] - 1)
        c = int(np.ceil(ext / h_max - 1e-9))
        counts.append(c if grid.is_periodic(a) else c + 1)
    if max(counts) > max_resolution:
        raise ResolutionError(
            f"stage needs {max(counts)} samples per axis, budget is {max_resolution}"
        )
    upper = [grid.origin[a] + grid.spacing[a] * (grid.counts[a] if grid.is_periodic(a)
                                                  else grid.counts[a] - 1)
             for a in range(grid.ndim)]
    periodic = [a for a in range(grid.ndim) if grid.is_periodic(a)]
    return Grid.from_bounds(grid.origin, upper, counts, periodic)


def regrid(state: ImmersionState, new_grid: Grid) -> ImmersionState:
    """Resample ``u`` and its stored gradient onto ``new_grid``."""
    A = _affine_part(state)
    u = state.u
    if A is not None:
        u = u - state.grid.coords() @ A.T
    u_new = resample(state.grid, u, new_grid)
    if A is not None:
        u_new = u_new + new_grid.coords() @ A.T
    g_new = resample(state.grid, state.grad_u, new_grid)
    return replace(state, grid=new_grid, u=u_new, grad_u=g_new,
                   meta={**state.meta, "regridded": True})


def mollify_state(state: ImmersionState, kernel) -> ImmersionState:
    """``u * phi`` and ``(grad u) * phi`` on the valid interior."""
    grid = state.grid
    A = _affine_part(state)
    u = state.u
    if A is not None:
        u = u - grid.coords() @ A.T
    cut = tuple(0 if grid.is_periodic(a) else kernel.radius_samples[a] for a in range(grid.ndim))
    for a in range(grid.ndim):
        if grid.counts[a] - 2 * cut[a] < 4:
            raise ResolutionError("mollification leaves no valid interior")
    new_grid = grid.crop(cut, cut)
    u_m = _conv_values(u, grid, kernel)
    if A is not None:
        u_m = u_m + new_grid.coords() @ A.T
    g_m = _conv_values(state.grad_u, grid, kernel)
    margin = tuple(m + c * h for m, c, h in zip(state.margin, cut, grid.spacing))
    return replace(state, grid=new_grid, u=u_m, grad_u=g_m, margin=margin)


def mollify_metric(g, grid: Grid, kernel):
    """Target metric mollified at the kernel scale, on the cropped grid."""
    cut = tuple(0 if grid.is_periodic(a) else kernel.radius_samples[a] for a in range(grid.ndim))
    new_grid = grid.crop(cut, cut)
    if not callable(g) and not isinstance(g, GridField):
        return metric_on_grid(g, new_grid)
    vals = metric_on_grid(g, grid)
    out = _conv_values(vals, grid, kernel)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


@dataclass
class StageReport:
    ell: float
    lambdas: list
    C: float
    r: float
    scale: float
    grid_counts: tuple
    amplitude_max: float
    amplitude_ratio: float
    defect_sup: float
    mollified_defect: float
    c1_increment: float
    c0_increment: float
    c2_estimate: float
    gamma_bounds: tuple
    wallclock_ms: float


def required_spacing(K, ell, n_star):
    lam_max = K ** n_star / ell
    return min(2 * np.pi / (SAMPLES_PER_PERIOD * lam_max), ell / 2.0), lam_max


def estimate_stage_memory(counts, m, n):
    return float(np.prod(counts)) * 8.0 * _DOUBLES_PER_SAMPLE * max(1.0, (m * n) / 6.0)


def run_stage(state: ImmersionState, g, K, delta, mu, frame: PrimitiveFrame,
              table: CorrugationTable, r=None, gamma=None,
              max_resolution=DEFAULT_MAX_RESOLUTION, memory_limit=DEFAULT_MEMORY_LIMIT,
              stage_index=None):
    """One stage: mollify, rescale, decompose and add ``n_*`` primitive metrics.

    Returns ``(v, report)``.  Errors inside a step are re-raised as
    :class:`StageAbort` carrying the stage and step indices.
    """
    t0 = time.perf_counter()
    K = float(K)
    ell = delta / mu
    r = 0.5 * frame.r if r is None else r
    gamma = DEFAULT_GAMMA if gamma is None else gamma
    nst = frame.n_star
    h_req, lam_max = required_spacing(K, ell, nst)
    sg = stage_grid(state.grid, h_req, max_resolution)
    mem = estimate_stage_memory(sg.counts, state.m, state.n)
    if mem > memory_limit:
        raise ResolutionError(
            f"stage grid {sg.counts} needs ~{mem / 1e9:.1f} GB, limit {memory_limit / 1e9:.1f} GB"
        )
    u_fine = regrid(state, sg)
    kernel = make_kernel(ell, sg.spacing)
    ut = mollify_state(u_fine, kernel)
    gt = mollify_metric(g, sg, kernel)
    defect = GridField.tensor(ut.grid, gt - pullback(ut.grad_u), ut.margin)
    try:
        dec = decompose_defect(defect, frame, delta, r=r, target=gt)
    except StageAbort as exc:
        raise type(exc)(str(exc), stage=stage_index, worst_index=exc.worst_index, cause=exc) from exc
    factor = 1.0 / np.sqrt(1.0 + dec.scale)
    u0 = replace(ut, u=factor * ut.u, grad_u=factor * ut.grad_u, step=0, stage=state.stage)
    amps = [factor * c.values for c in dec.coefficients]
    amp_max = max(float(a.max()) for a in amps)
    step_delta = max(delta, amp_max)
    cur = u0
    lambdas = []
    for j in range(nst):
        lam = K ** (j + 1) / ell
        lambdas.append(lam)
        inp = StepInput(amps[j], frame.nus[j], lam, ell * K ** (-j), step_delta)
        try:
            cur = corrugation_step(cur, inp, table)
        except C1AlphaError as exc:
            raise StageAbort(str(exc), stage=stage_index, step=j, cause=exc) from exc
        lo, hi, idx = nondegeneracy_bounds(cur)
        if lo < 1.0 / gamma or hi > gamma:
            raise StageAbort(
                f"nondegeneracy lost: eigenvalues in [{lo:.4g}, {hi:.4g}], gamma = {gamma:.4g}",
                stage=stage_index, step=j, worst_index=idx,
            )
    v = replace(cur, stage=state.stage + 1, step=0)
    u_ref = _crop_state(u_fine, v.grid)
    lo, hi, _ = nondegeneracy_bounds(v)
    report = StageReport(
        ell=ell,
        lambdas=lambdas,
        C=dec.C,
        r=dec.r,
        scale=dec.scale,
        grid_counts=tuple(v.grid.counts),
        amplitude_max=amp_max,
        amplitude_ratio=amp_max / delta,
        defect_sup=metric_defect(v, g),
        mollified_defect=float(np.max(defect.pointwise_norm())),
        c1_increment=c1_distance(v, u_ref),
        c0_increment=c0_distance(v, u_ref),
        c2_estimate=c2_norm_estimate(v),
        gamma_bounds=(lo, hi),
        wallclock_ms=(time.perf_counter() - t0) * 1e3,
    )
    return v, report


def _crop_state(state: ImmersionState, grid: Grid) -> ImmersionState:
    """Restrict ``state`` to a sub-grid sharing its lattice."""
    lo, hi = [], []
    for a in range(grid.ndim):
        off = (grid.origin[a] - state.grid.origin[a]) / state.grid.spacing[a]
        i0 = int(round(off))
        if abs(off - i0) > 1e-6 or grid.spacing[a] != state.grid.spacing[a]:
            raise DomainError("grids do not share a lattice")
        lo.append(i0)
        hi.append(state.grid.counts[a] - i0 - grid.counts[a])
    idx = tuple(slice(l, c - h) for l, h, c in zip(lo, hi, state.grid.counts))
    margin = tuple(m + max(l, h) * s for m, l, h, s in zip(state.margin, lo, hi, state.grid.spacing))
    return replace(state, grid=state.grid.crop(lo, hi), u=state.u[idx], grad_u=state.grad_u[idx],
                   margin=margin)
