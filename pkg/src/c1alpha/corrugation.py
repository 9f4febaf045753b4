"""The corrugation profile ``Gamma(s, t)`` and the inverse of ``J_0``.

``Gamma(s, .)`` is the 2*pi-periodic planar curve whose velocity
``dGamma/dt + e1 = sqrt(1+s^2) (cos(f sin t), sin(f sin t))`` has constant
length ``sqrt(1+s^2)``; closing the loop forces ``J_0(f(s)) = 1/sqrt(1+s^2)``.

The profile is tabulated once on an ``(s, t)`` lattice.  Values and the
s-derivative come from bicubic Hermite interpolation of the table, while
``dGamma/dt`` is re-evaluated from its closed form with an interpolated
phase amplitude ``f(s)``, so the pitch identity holds to rounding everywhere.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConstructionError, DomainError

TWO_PI = 2.0 * np.pi
J0_FIRST_ZERO = 2.404825557695773
QUAD_NODES = 512
DEFAULT_DELTA_STAR = 1.0

_MAGIC = b"C1ACORR\x00"
_VERSION = 1
_HEADER = struct.Struct("<8sIIId")


@lru_cache(maxsize=None)
def _quad_sines(m=QUAD_NODES):
    return np.sin(TWO_PI * np.arange(m) / m)


def j0(tau, m=QUAD_NODES):
    """``(1/2pi) int_0^{2pi} cos(tau sin t) dt`` by the m-node trapezoidal rule."""
    tau = np.asarray(tau, dtype=float)
    return np.mean(np.cos(tau[..., None] * _quad_sines(m)), axis=-1)


def one_minus_j0(tau, m=QUAD_NODES):
    """``1 - J_0(tau)`` without cancellation for small ``tau``."""
    tau = np.asarray(tau, dtype=float)
    half = np.sin(0.5 * tau[..., None] * _quad_sines(m))
    return np.mean(2.0 * half * half, axis=-1)


def j0_prime(tau, m=QUAD_NODES):
    tau = np.asarray(tau, dtype=float)
    st = _quad_sines(m)
    return -np.mean(np.sin(tau[..., None] * st) * st, axis=-1)


def _target_deficit(s):
    """``1 - (1+s^2)^{-1/2}`` in a cancellation-free form."""
    r = np.sqrt(1.0 + s * s)
    return s * s / (r * (1.0 + r))


def invert_j0(s, delta_star=DEFAULT_DELTA_STAR, tol=1e-15, max_iter=80):
    """The unique ``f`` in ``[0, j_{0,1})`` with ``J_0(f) = (1+s^2)^{-1/2}``.

    Safeguarded Newton iteration on ``1 - J_0(f) - (1 - (1+s^2)^{-1/2})``,
    falling back to bisection whenever a Newton step leaves the bracket.
    Works elementwise on arrays.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(~np.isfinite(s_arr)) or np.any(s_arr < 0) or np.any(s_arr > delta_star):
        raise DomainError(f"amplitude must lie in [0, {delta_star}]")
    s_flat = s_arr.ravel()
    q = _target_deficit(s_flat)
    lo = np.zeros_like(s_flat)
    hi = np.full_like(s_flat, J0_FIRST_ZERO)
    f = np.clip(np.sqrt(2.0) * s_flat, 0.0, 0.9 * J0_FIRST_ZERO)
    active = s_flat > 0
    f[~active] = 0.0
    for _ in range(max_iter):
        if not np.any(active):
            break
        fa = f[active]
        g = one_minus_j0(fa) - q[active]
        # 1 - J0 is increasing on the bracket
        lo_a = np.where(g < 0, fa, lo[active])
        hi_a = np.where(g > 0, fa, hi[active])
        dg = -j0_prime(fa)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(dg > 0, g / dg, np.inf)
        new = fa - step
        bad = ~np.isfinite(new) | (new < lo_a) | (new > hi_a)
        done = (np.abs(g) <= tol * q[active]) | (~bad & (np.abs(new - fa) <= 4e-16 * fa))
        new = np.where(bad, 0.5 * (lo_a + hi_a), new)
        new = np.where(done, fa, new)
        lo[active], hi[active], f[active] = lo_a, hi_a, new
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    out = f.reshape(s_arr.shape)
    return float(out) if out.ndim == 0 else out


def f_prime(s, f):
    """``f'(s)`` by implicit differentiation; ``sqrt(2)`` at ``s = 0``."""
    s = np.asarray(s, dtype=float)
    f = np.asarray(f, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -s * (1.0 + s * s) ** -1.5 / j0_prime(f)
    return np.where(s == 0, np.sqrt(2.0), out)


def _velocity(s, f, t):
    """``dGamma/dt`` from its closed form; shape ``broadcast + (2,)``."""
    r = np.sqrt(1.0 + s * s)
    th = f * np.sin(t)
    return np.stack([r * np.cos(th) - 1.0, r * np.sin(th)], axis=-1)


def _velocity_s(s, f, fp, t):
    """``d/ds dGamma/dt``."""
    r = np.sqrt(1.0 + s * s)
    st = np.sin(t)
    th = f * st
    c, sn = np.cos(th), np.sin(th)
    return np.stack([s / r * c - r * sn * fp * st, s / r * sn + r * c * fp * st], axis=-1)


def _spectral_primitive(samples, t_eval):
    """``int_0^t F`` for periodic samples ``F`` on a uniform m-node lattice.

    The mean of ``F`` contributes a linear drift; the remaining Fourier modes
    are integrated exactly.  ``samples`` has shape ``(rows, m, comps)``.
    """
    m = samples.shape[1]
    c = np.fft.fft(samples, axis=1) / m
    k = np.fft.fftfreq(m, d=1.0 / m)
    if m % 2 == 0:
        # split the Nyquist mode symmetrically so the primitive stays real
        c = c.copy()
        c[:, m // 2] *= 0.5
        c = np.concatenate([c, c[:, m // 2 : m // 2 + 1]], axis=1)
        k = np.concatenate([k, [m / 2]])
        k[m // 2] = -m / 2
    mean = c[:, 0, :].real
    kk = k[1:]
    phase = (np.exp(1j * np.outer(t_eval, kk)) - 1.0) / (1j * kk)
    body = np.einsum("tk,rkc->rtc", phase, c[:, 1:, :]).real
    return mean[:, None, :] * t_eval[None, :, None] + body, mean


@dataclass(frozen=True, eq=False)
class CorrugationTable:
    delta_star: float
    s_nodes: np.ndarray
    t_nodes: np.ndarray
    f_of_s: np.ndarray
    df_ds: np.ndarray
    gamma: np.ndarray
    dgamma_ds: np.ndarray
    dgamma_dt: np.ndarray
    d2gamma_dsdt: np.ndarray
    periodicity_residual: float

    @property
    def s_res(self):
        return self.s_nodes.size

    @property
    def t_res(self):
        return self.t_nodes.size - 1

    @property
    def ds(self):
        return self.delta_star / (self.s_res - 1)

    @property
    def dt(self):
        return TWO_PI / self.t_res


def build_profile(delta_star=DEFAULT_DELTA_STAR, s_res=129, t_res=256, quad_nodes=QUAD_NODES):
    """Tabulate ``Gamma``, ``dGamma/ds``, ``dGamma/dt`` and ``d2Gamma/dsdt``.

    ``s_res`` counts s-nodes on ``[0, delta_star]``; ``t_res`` counts intervals
    on ``[0, 2pi]`` (the endpoint row is stored too).
    """
    if not 0 < delta_star <= 2.0:
        raise DomainError("delta_star must lie in (0, 2]")
    if s_res < 64 or t_res < 64:
        raise DomainError("table resolutions must be at least 64")
    s = np.linspace(0.0, delta_star, s_res)
    t = TWO_PI * np.arange(t_res + 1) / t_res
    f = invert_j0(s, delta_star)
    fp = f_prime(s, f)
    tq = TWO_PI * np.arange(quad_nodes) / quad_nodes
    S, F, FP = s[:, None], f[:, None], fp[:, None]
    vel_q = _velocity(S, F, tq[None, :])
    vel_s_q = _velocity_s(S, F, FP, tq[None, :])
    gamma, drift = _spectral_primitive(vel_q, t)
    gamma_s, drift_s = _spectral_primitive(vel_s_q, t)
    closure = TWO_PI * np.max(np.abs(drift))
    if closure > 1e-8:
        raise ConstructionError(
            f"profile fails to close (residual {closure:.3e}); raise the quadrature resolution"
        )
    T = t[None, :]
    return CorrugationTable(
        delta_star=float(delta_star),
        s_nodes=s,
        t_nodes=t,
        f_of_s=f,
        df_ds=fp,
        gamma=gamma,
        dgamma_ds=gamma_s,
        dgamma_dt=_velocity(S, F, T),
        d2gamma_dsdt=_velocity_s(S, F, FP, T),
        periodicity_residual=float(np.max(np.abs(gamma[:, -1] - gamma[:, 0]))),
    )


@lru_cache(maxsize=4)
def default_table(delta_star=DEFAULT_DELTA_STAR):
    s_res = 1 + int(round(128 * max(1.0, delta_star)))
    return build_profile(delta_star, s_res=s_res, t_res=256)


def _hermite(u):
    u2 = u * u
    u3 = u2 * u
    return (2 * u3 - 3 * u2 + 1, u3 - 2 * u2 + u, -2 * u3 + 3 * u2, u3 - u2)


def _hermite_du(u):
    u2 = u * u
    return (6 * u2 - 6 * u, 3 * u2 - 4 * u + 1, -6 * u2 + 6 * u, 3 * u2 - 2 * u)


def reduce_angle(t):
    """``t mod 2pi`` in ``[0, 2pi)`` via the exact floating-point remainder."""
    r = np.fmod(np.asarray(t, dtype=float), TWO_PI)
    return np.where(r < 0, r + TWO_PI, r)


def eval_gamma(table: CorrugationTable, s, t):
    """``(Gamma, dGamma/ds, dGamma/dt)`` at amplitudes ``s`` and phases ``t``.

    Arrays broadcast; each output has a trailing axis of length 2.
    """
    s = np.asarray(s, dtype=float)
    if np.any(~np.isfinite(s)) or np.any(s < 0) or np.any(s > table.delta_star):
        raise DomainError(f"amplitude must lie in [0, {table.delta_star}]")
    t = reduce_angle(t)
    s, t = np.broadcast_arrays(s, t)
    ds, dt = table.ds, table.dt
    i = np.minimum((s / ds).astype(np.intp), table.s_res - 2)
    j = np.minimum((t / dt).astype(np.intp), table.t_res - 1)
    w = s / ds - i
    u = t / dt - j
    hw, hu = _hermite(w), _hermite(u)
    dhw = _hermite_du(w)
    # f(s) by cubic Hermite in s using the stored derivative
    fs = (hw[0] * table.f_of_s[i] + hw[1] * ds * table.df_ds[i]
          + hw[2] * table.f_of_s[i + 1] + hw[3] * ds * table.df_ds[i + 1])
    G, Gs, Gt, Gst = table.gamma, table.dgamma_ds, table.dgamma_dt, table.d2gamma_dsdt
    val = np.zeros(s.shape + (2,))
    val_w = np.zeros(s.shape + (2,))
    for a, (ha, hsa, dha, dhsa) in enumerate(((hw[0], hw[1], dhw[0], dhw[1]),
                                              (hw[2], hw[3], dhw[2], dhw[3]))):
        ii = i + a
        for b, (hb, htb) in enumerate(((hu[0], hu[1]), (hu[2], hu[3]))):
            jj = j + b
            g, gs, gt, gst = G[ii, jj], Gs[ii, jj], Gt[ii, jj], Gst[ii, jj]
            tt = hb[..., None] * g + (dt * htb)[..., None] * gt
            ts = hb[..., None] * gs + (dt * htb)[..., None] * gst
            val += ha[..., None] * tt + (ds * hsa)[..., None] * ts
            val_w += dha[..., None] * tt + (ds * dhsa)[..., None] * ts
    return val, val_w / ds, _velocity(s, fs, t)


def gamma2_constants(table: CorrugationTable):
    """Fitted constants of the linear-smallness bounds over the table nodes."""
    s = table.s_nodes[1:, None]
    return {
        "gamma": float(np.max(np.linalg.norm(table.gamma[1:], axis=-1) / s)),
        "dgamma_dt": float(np.max(np.linalg.norm(table.dgamma_dt[1:], axis=-1) / s)),
        "dsdt_gamma1": float(np.max(np.abs(table.d2gamma_dsdt[1:, :, 0]) / s)),
        "ds_gamma1": float(np.max(np.abs(table.dgamma_ds[1:, :, 0]) / s)),
    }


def dump_table(table: CorrugationTable, path):
    """Versioned little-endian binary dump."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, table.s_res, table.t_res, table.delta_star))
        fh.write(struct.pack("<d", table.periodicity_residual))
        for arr in (table.f_of_s, table.df_ds, table.gamma, table.dgamma_ds,
                    table.dgamma_dt, table.d2gamma_dsdt):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_table(path) -> CorrugationTable:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, version, s_res, t_res, delta_star = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise ConstructionError("not a corrugation table file")
    if version != _VERSION:
        raise ConstructionError(f"unsupported table version {version}")
    off = _HEADER.size
    (resid,) = struct.unpack_from("<d", data, off)
    off += 8

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape)
        off += 8 * count
        return arr.astype(float)

    S, T = s_res, t_res + 1
    f, fp = take((S,)), take((S,))
    arrays = [take((S, T, 2)) for _ in range(4)]
    return CorrugationTable(
        delta_star=float(delta_star),
        s_nodes=np.linspace(0.0, delta_star, S),
        t_nodes=TWO_PI * np.arange(T) / t_res,
        f_of_s=f,
        df_ds=fp,
        gamma=arrays[0],
        dgamma_ds=arrays[1],
        dgamma_dt=arrays[2],
        d2gamma_dsdt=arrays[3],
        periodicity_residual=resid,
    )
