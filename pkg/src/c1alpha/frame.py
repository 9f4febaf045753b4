"""Decomposition of metrics into primitive metrics ``a_k^2 nu_k (x) nu_k``.

A :class:`PrimitiveFrame` fixes ``n_* = n(n+1)/2`` unit directions around a
base metric ``g0`` together with the dual linear functionals ``L_k``, so that
every symmetric ``g`` equals ``sum_k L_k(g) nu_k (x) nu_k``.  Near ``g0`` all
coefficients stay above a positivity radius ``r``.

Matrix distances are Frobenius norms throughout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, DomainError
from .grid import GridField
from .tensors import sym_inv_sqrt, sym_sqrt


def n_star(n):
    return n * (n + 1) // 2


def _pairs(n):
    return [(i, j) for i in range(n) for j in range(i, n)]


def svec(g):
    """Coordinates ``(g_ij)_{i<=j}`` of (stacked) symmetric matrices."""
    n = g.shape[-1]
    return np.stack([g[..., i, j] for i, j in _pairs(n)], axis=-1)


def base_vectors(n):
    """The vectors ``e_i + e_j`` for ``i <= j`` (``2 e_i`` on the diagonal)."""
    eye = np.eye(n)
    return np.array([eye[i] + eye[j] for i, j in _pairs(n)])


@dataclass(frozen=True, eq=False)
class PrimitiveFrame:
    n: int
    g0: np.ndarray
    nus: np.ndarray  # (n_*, n)
    functionals: np.ndarray  # (n_*, n_*); L_k(g) = functionals[k] @ svec(g)
    r: float
    transform: np.ndarray  # L with L h L^T = g0

    @property
    def n_star(self):
        return self.nus.shape[0]

    def coefficients(self, g):
        """``L_k(g)`` for (stacked) symmetric ``g``; trailing axis indexes k."""
        return svec(np.asarray(g, dtype=float)) @ self.functionals.T

    def reconstruct(self, coeffs):
        """``sum_k c_k nu_k (x) nu_k``."""
        return np.einsum("...k,ki,kj->...ij", coeffs, self.nus, self.nus)

    def dual_norms(self):
        """Frobenius dual norm of each functional ``L_k``."""
        out = []
        for row in self.functionals:
            w = 0.0
            for c, (i, j) in zip(row, _pairs(self.n)):
                w += c * c if i == j else 0.5 * c * c
            out.append(np.sqrt(w))
        return np.array(out)


def random_unit_symmetric(n, count, rng):
    """``count`` symmetric matrices of unit Frobenius norm."""
    a = rng.standard_normal((count, n, n))
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    return a / np.linalg.norm(a, axis=(-2, -1))[:, None, None]


def build_frame(g0, seed=0, samples=1000, max_halvings=60, bisections=24) -> PrimitiveFrame:
    """Frame at ``g0`` with ``nu_k = L f_k / |L f_k|`` and ``L = g0^{1/2} h^{-1/2}``."""
    g0 = np.asarray(g0, dtype=float)
    if g0.ndim != 2 or g0.shape[0] != g0.shape[1]:
        raise DomainError("g0 must be a square matrix")
    if not np.allclose(g0, g0.T, rtol=0, atol=1e-12 * max(1.0, np.abs(g0).max())):
        raise DomainError("g0 must be symmetric")
    g0 = 0.5 * (g0 + g0.T)
    if np.linalg.eigvalsh(g0)[0] <= 1e-8:
        raise DomainError("g0 must be positive definite")
    n = g0.shape[0]
    f = base_vectors(n)
    h = f.T @ f
    L = sym_sqrt(g0) @ sym_inv_sqrt(h)
    lf = f @ L.T
    nus = lf / np.linalg.norm(lf, axis=1)[:, None]
    basis = svec(np.einsum("ki,kj->kij", nus, nus))  # (n_*, n_*): row k = svec(nu_k nu_k)
    functionals = np.linalg.inv(basis.T)
    frame = PrimitiveFrame(n, g0, nus, functionals, 0.0, L)

    # dyadic bracketing followed by bisection; a radius is accepted when it
    # passes the exact dual-norm bound and the sampled boundary check
    rng = np.random.default_rng(seed)
    dirs = random_unit_symmetric(n, samples, rng)
    base = frame.coefficients(g0)
    dual = frame.dual_norms()

    def ok(rad):
        if not np.all(base - rad * dual >= rad):
            return False
        return bool(np.all(frame.coefficients(g0 + rad * dirs) >= rad))

    hi = 2.0 ** np.ceil(np.log2(base.max()))
    lo = hi
    for _ in range(max_halvings):
        lo *= 0.5
        if ok(lo):
            break
        hi = lo
    else:
        raise DomainError("no positivity radius found")
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    r = lo
    return PrimitiveFrame(n, g0, nus, functionals, float(r), L)


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Output of :func:`decompose_defect`.

    ``coefficients[i]`` is the field ``a~_i``; ``scale = C delta^2 / r``.
    """

    coefficients: list
    h_tilde: GridField
    C: float
    r: float
    scale: float


def decompose_defect(defect: GridField, frame: PrimitiveFrame, delta, r=None, target=None,
                     C=None) -> Decomposition:
    """Amplitudes ``a~_i = (C delta^2 / r * L_i(h~))^{1/2}`` of the rescaled metric.

    ``defect`` is ``g~ - u~^# e`` and ``target`` the mollified metric ``g~``
    (defaults to the frame's base point).  ``h~ = g~ + r/(C delta^2) defect``
    must stay within ``2r`` of ``g0``; the default ``r`` is half the frame radius
    so that the frame is positive on that ball.  ``C`` defaults to the smallest
    value at least 1 that keeps the defect term within ``r``.
    """
    if r is None:
        r = 0.5 * frame.r
    d = np.asarray(defect.values, dtype=float)
    if target is None:
        gt = np.broadcast_to(frame.g0, d.shape)
    else:
        gt = np.asarray(target.values if isinstance(target, GridField) else target, dtype=float)
        gt = np.broadcast_to(gt, d.shape)
    dnorm = np.linalg.norm(d, axis=(-2, -1))
    if C is None:
        C = max(1.0, float(dnorm.max()) / delta**2)
    scale = C * delta**2 / r
    h = gt + d / scale
    dist = np.linalg.norm(h - frame.g0, axis=(-2, -1))
    if dist.max() > 2 * r * (1 + 1e-12):
        worst = np.unravel_index(int(np.argmax(dist)), dist.shape)
        raise AdmissibilityError(
            f"rescaled metric is {dist.max():.4g} from g0, beyond 2r = {2 * r:.4g}",
            worst_index=worst,
        )
    lk = frame.coefficients(h)
    if lk.min() < 0:
        worst = np.unravel_index(int(np.argmin(lk.min(axis=-1))), lk.shape[:-1])
        raise AdmissibilityError("negative frame coefficient", worst_index=worst)
    amps = np.sqrt(scale * lk)
    coeffs = [defect.with_values(amps[..., k]) for k in range(frame.n_star)]
    return Decomposition(coeffs, GridField.tensor(defect.grid, h, defect.margin), float(C),
                         float(r), float(scale))
