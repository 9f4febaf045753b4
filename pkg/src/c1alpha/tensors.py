"""Small pointwise linear-algebra helpers on stacked arrays."""
import numpy as np


def pullback(grad):
    """``grad^T grad`` for gradients of shape ``(..., m, n)``."""
    return np.einsum("...ai,...aj->...ij", grad, grad)


def sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def det2(g):
    return g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]


def inv2(g):
    """Closed-form inverse of stacked 2x2 matrices."""
    d = det2(g)
    out = np.empty_like(g)
    out[..., 0, 0] = g[..., 1, 1]
    out[..., 1, 1] = g[..., 0, 0]
    out[..., 0, 1] = -g[..., 0, 1]
    out[..., 1, 0] = -g[..., 1, 0]
    return out / d[..., None, None]


def inv_spd(g):
    if g.shape[-1] == 2:
        return inv2(g)
    return np.linalg.inv(g)


def eig_sym2(g):
    """Eigenvalues (ascending) of stacked symmetric 2x2 matrices."""
    a, b, c = g[..., 0, 0], 0.5 * (g[..., 0, 1] + g[..., 1, 0]), g[..., 1, 1]
    mean = 0.5 * (a + c)
    rad = np.sqrt(0.25 * (a - c) ** 2 + b * b)
    return np.stack([mean - rad, mean + rad], axis=-1)


def eig_sym(g):
    if g.shape[-1] == 2:
        return eig_sym2(g)
    return np.linalg.eigvalsh(g)


def sym_sqrt(g):
    """Symmetric square root of a symmetric positive semidefinite matrix."""
    w, v = np.linalg.eigh(g)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def sym_inv_sqrt(g):
    w, v = np.linalg.eigh(g)
    return (v / np.sqrt(w)) @ v.T
