import numpy as np
import pytest

from c1alpha.construction import (
    ImmersionState,
    StepInput,
    c0_distance,
    c1_distance,
    corrugation_step,
    gradient_consistency,
    is_nondegenerate,
    metric_defect,
    normal_field_highcodim,
    normal_fields,
    pullback_metric,
    run_stage,
)
from c1alpha.corrugation import TWO_PI, eval_gamma
from c1alpha.errors import (
    AmplitudeError,
    DomainError,
    OscillationError,
    ParameterError,
    ResolutionError,
    StageAbort,
)
from c1alpha.fitting import loglog_fit
from c1alpha.frame import build_frame
from c1alpha.grid import Grid
from c1alpha.probes import one_step_identity, step_sweep
from c1alpha.synthetic import smooth_graph, sphere_chart
from c1alpha.tensors import pullback

E1 = np.array([1.0, 0.0])


def _torus(n):
    return Grid((0.0, 0.0), (TWO_PI / n,) * 2, (n, n), frozenset({0, 1}))


def _unit_square(n=33):
    return Grid.from_bounds((0, 0), (1, 1), (n, n))


# ------------------------------------------------------------- pullback


def test_pullback_examples():
    g = _unit_square(9)
    np.testing.assert_array_equal(pullback_metric(ImmersionState.flat(g)).values,
                                  np.broadcast_to(np.eye(2), g.shape + (2, 2)))
    c = 1.7
    assert np.max(np.abs(pullback_metric(ImmersionState.flat(g, scale=c)).values
                         - c * c * np.eye(2))) <= 1e-14
    R = 2.5
    grid = Grid.from_bounds((0.3, 0.0), (2.8, 6.0), (40, 50))
    gm = pullback_metric(sphere_chart(R, grid)).values
    th = grid.coords()[..., 0]
    want = np.zeros(grid.shape + (2, 2))
    want[..., 0, 0] = R * R
    want[..., 1, 1] = (R * np.sin(th)) ** 2
    assert np.max(np.abs(gm - want)) <= 1e-13


# --------------------------------------------------------------- normals


def test_normal_fields_flat():
    nf = normal_fields(ImmersionState.flat(_unit_square(8)), E1)
    assert np.max(np.abs(nf.xi - [1, 0, 0])) == 0
    assert np.max(np.abs(nf.zeta - [0, 0, 1])) == 0
    psi = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    assert np.max(np.abs(nf.psi - psi)) == 0


def test_normal_identities_on_perturbed_map(rng):
    g = _torus(64)
    u = smooth_graph(g, 0.4, 2.0)
    nu = np.array([0.6, 0.8])
    nf = normal_fields(u, nu)
    inv2 = 1.0 / nf.xi_norm**2
    lhs = np.einsum("...aj,...ab->...jb", u.grad_u, nf.psi)
    want = np.zeros_like(lhs)
    want[..., :, 0] = inv2[..., None] * nu
    assert np.max(np.abs(lhs - want)) <= 1e-12
    ptp = np.einsum("...ab,...ac->...bc", nf.psi, nf.psi)
    assert np.max(np.abs(ptp - inv2[..., None, None] * np.eye(2))) <= 1e-12


def test_normal_fields_graph_closed_form():
    eps = 0.1
    g = _torus(32)
    x1 = g.coords()[..., 0]
    u = ImmersionState.from_map(
        g,
        lambda x: np.stack([x[..., 0], x[..., 1], eps * np.sin(x[..., 0])], axis=-1),
        lambda x: np.stack([np.stack([np.ones_like(x1), np.zeros_like(x1)], -1),
                            np.stack([np.zeros_like(x1), np.ones_like(x1)], -1),
                            np.stack([eps * np.cos(x1), np.zeros_like(x1)], -1)], axis=-2),
    )
    nf = normal_fields(u, E1)
    c = eps * np.cos(x1)
    xi = np.stack([np.ones_like(c), np.zeros_like(c), c], -1) / (1 + c * c)[..., None]
    zeta = np.stack([-c, np.zeros_like(c), np.ones_like(c)], -1)
    assert np.max(np.abs(nf.xi - xi)) <= 1e-15
    assert np.max(np.abs(nf.zeta - zeta)) <= 1e-15


def test_highcodim_examples():
    g = _unit_square(8)
    z, w = normal_field_highcodim(ImmersionState.flat(g), w=[0, 0, 1])
    assert np.max(np.abs(z - [0, 0, 1])) == 0
    z, w = normal_field_highcodim(ImmersionState.flat(g, m=4), w=[0, 0, 0, 1])
    assert np.max(np.abs(z - [0, 0, 0, 1])) == 0
    with pytest.raises(DomainError):
        normal_fields(ImmersionState.flat(g, m=4), E1)


def test_highcodim_tilted_plane_projection_oracle():
    A = np.array([[1.0, 0.2], [0.0, 1.0], [0.9, -0.4]])
    g = _unit_square(8)
    u = ImmersionState.from_map(g, lambda x: x @ A.T, lambda x: np.broadcast_to(A, x.shape[:-1] + (3, 2)))
    zeta, w = normal_field_highcodim(u)
    P = A @ np.linalg.inv(A.T @ A) @ A.T
    assert np.max(np.abs(zeta - (w - P @ w))) <= 1e-14
    assert np.linalg.norm(zeta, axis=-1).min() >= 0.5


def test_highcodim_oscillation_error():
    grid = Grid((0.3, 0.0), (2.5 / 31, TWO_PI / 32), (32, 32), frozenset({1}))
    with pytest.raises(OscillationError):
        normal_field_highcodim(sphere_chart(1.0, grid))


# ------------------------------------------------------------------ step


def test_zero_amplitude_step_is_identity(table):
    u = smooth_graph(_torus(128), 0.3)
    v = corrugation_step(u, StepInput(np.zeros(u.grid.shape), E1, 8.0, 1.0, 0.1), table)
    np.testing.assert_array_equal(v.u, u.u)
    np.testing.assert_array_equal(v.grad_u, u.grad_u)


@pytest.mark.parametrize("a0", [0.1, 0.3, 0.6])
def test_flat_constant_step_exact(a0, table):
    assert one_step_identity(a0, n=128, lam=8.0) <= 1e-8
    g = _torus(128)
    lam = 8.0
    v = corrugation_step(ImmersionState.flat(g), StepInput(np.full(g.shape, a0), E1, lam, 1.0, a0),
                         table)
    x = g.coords()
    gam, _, _ = eval_gamma(table, a0, lam * x[..., 0])
    want = np.stack([x[..., 0] + gam[..., 0] / lam, x[..., 1], gam[..., 1] / lam], axis=-1)
    assert np.max(np.abs(v.u - want)) <= 1e-14


def test_step_defect_scaling_and_increments():
    lams = np.array([8.0, 16.0, 32.0])
    defects, c1 = step_sweep(tuple(lams), n=512)
    assert abs(loglog_fit(lams, defects).slope + 1) <= 0.15
    assert (c1.max() - c1.min()) / c1.min() <= 0.2


def test_c0_increment_decays_like_one_over_lambda(table):
    g = _torus(512)
    u = smooth_graph(g, 0.3)
    a = 0.3 * (1 + 0.3 * np.sin(g.coords()[..., 1]))
    lams = np.array([8.0, 16.0, 32.0])
    c0 = [c0_distance(corrugation_step(u, StepInput(a, E1, lam, 1.0, a.max()), table), u)
          for lam in lams]
    c1 = [c1_distance(corrugation_step(u, StepInput(a, E1, lam, 1.0, a.max()), table), u)
          for lam in lams]
    assert abs(loglog_fit(lams, c0).slope + 1) <= 0.1
    C = max(c0 * lams) / a.max()
    assert np.all(np.array(c0) <= C * a.max() / lams)
    assert max(c1) <= 3 * a.max()


def test_step_keeps_gradient_consistent_and_nondegenerate(table):
    g = _torus(1024)
    u = smooth_graph(g, 0.3)
    a = np.full(g.shape, 0.3)
    v = corrugation_step(u, StepInput(a, E1, 16.0, 1.0, 0.3), table)
    # central differences of the corrugated map carry an O((lambda h)^2) error
    lam, h = 16.0, g.spacing[0]
    assert gradient_consistency(u) <= 1e-4
    assert gradient_consistency(v) <= (lam * h) ** 2 / 6 * 2.0
    assert is_nondegenerate(v, 8.0)


def test_step_errors(table):
    g = _torus(64)
    u = ImmersionState.flat(g)
    a = np.full(g.shape, 0.2)
    with pytest.raises(ResolutionError):
        corrugation_step(u, StepInput(a, E1, 64.0, 1.0, 0.2), table)
    with pytest.raises(AmplitudeError):
        big = np.full(g.shape, 1.2)
        corrugation_step(u, StepInput(big, E1, 2.0, 1.0, 1.2), table)
    with pytest.raises(DomainError):
        corrugation_step(u, StepInput(a, E1, 2.0, 1.0, 0.1), table)
    with pytest.raises(ParameterError):
        corrugation_step(u, StepInput(a, E1, 2.0, 0.1, 0.2), table)
    with pytest.raises(ParameterError):
        # a phase that does not close up on the torus
        corrugation_step(u, StepInput(a, E1, 2.5, 1.0, 0.2), table)


# ----------------------------------------------------------------- stage


def _zero_defect_stage(K, delta, mu, table):
    u = ImmersionState.flat(_unit_square())
    return run_stage(u, np.eye(2), K, delta, mu, build_frame(np.eye(2)), table)


def test_zero_defect_stage_scales_with_delta_squared(wide_table):
    reps = [_zero_defect_stage(2.0, d, 1.0, wide_table)[1] for d in (0.1, 0.05)]
    # the stage adds back the rescaling offset; what is left is a step error of order delta^2
    ratio = reps[0].defect_sup / reps[1].defect_sup
    assert abs(np.log2(ratio) - 2.0) <= 0.1
    c1 = [r.c1_increment / d for r, d in zip(reps, (0.1, 0.05))]
    assert abs(c1[0] - c1[1]) <= 0.05 * c1[0]
    assert all(r.mollified_defect <= 1e-12 for r in reps)


@pytest.mark.xfail(strict=True, reason="the step errors of the rescaling offset leave a defect "
                   "of about 66 delta^2; no discrete stage reaches the mollification error (zero)")
def test_zero_defect_stage_at_mollification_floor(wide_table):
    _, rep = _zero_defect_stage(2.0, 0.1, 1.0, wide_table)
    assert rep.defect_sup <= 1e-8


def test_c1_constant_stable_across_K(wide_table):
    delta = 0.1
    C = [(_zero_defect_stage(K, delta, 0.8, wide_table)[1].c1_increment / delta) for K in (2.0, 4.0)]
    assert abs(C[0] - C[1]) <= 0.1 * C[0]


@pytest.mark.xfail(strict=True, raises=ResolutionError,
                   reason="K = 8 needs lambda_max = 512/ell, about 10^4 samples per axis")
def test_c1_constant_at_K8(wide_table):
    _zero_defect_stage(8.0, 0.1, 0.8, wide_table)


@pytest.mark.xfail(strict=True, raises=StageAbort,
                   reason="rescaled amplitudes reach ~1.9 > delta* for delta^2 = 0.21")
def test_flat_start_one_stage_factor(table):
    u = ImmersionState.flat(_unit_square())
    g = 1.21 * np.eye(2)
    _, rep = run_stage(u, g, 4.0, np.sqrt(0.21), 3.67, build_frame(g), table)
    assert 2.0 <= metric_defect(u, g) / rep.defect_sup <= 8.0
