import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, special

from c1alpha.corrugation import (
    J0_FIRST_ZERO,
    TWO_PI,
    build_profile,
    dump_table,
    eval_gamma,
    gamma2_constants,
    invert_j0,
    j0,
    load_table,
)
from c1alpha.errors import ConstructionError, DomainError


def _bisect_oracle(s):
    target = 1.0 / np.sqrt(1.0 + s * s)
    return optimize.bisect(lambda f: special.j0(f) - target, 0.0, J0_FIRST_ZERO, xtol=1e-15)


def test_quadrature_j0_matches_scipy():
    tau = np.linspace(0.0, 2.4, 50)
    assert np.max(np.abs(j0(tau) - special.j0(tau))) <= 1e-14


def test_invert_at_zero_and_slope():
    assert invert_j0(0.0) == 0.0
    assert abs((invert_j0(1e-4) - invert_j0(0.0)) / 1e-4 - np.sqrt(2.0)) <= 1e-4


def test_invert_at_one_matches_bisection():
    f = invert_j0(1.0)
    assert abs(special.j0(f) - 1 / np.sqrt(2.0)) <= 1e-12
    assert f == pytest.approx(_bisect_oracle(1.0), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0))
def test_invert_residual(s):
    f = invert_j0(s)
    assert 0.0 <= f < J0_FIRST_ZERO
    assert abs(j0(f) - 1.0 / np.sqrt(1.0 + s * s)) <= 1e-12


def test_invert_domain():
    with pytest.raises(DomainError):
        invert_j0(-0.1)
    with pytest.raises(DomainError):
        invert_j0(1.5)
    assert invert_j0(1.5, delta_star=2.0) > invert_j0(1.0)


def test_table_invariants(table):
    assert table.periodicity_residual <= 1e-10
    v = table.dgamma_dt + np.array([1.0, 0.0])
    pitch = np.sum(v * v, axis=-1) - (1 + table.s_nodes[:, None] ** 2)
    assert np.max(np.abs(pitch)) <= 1e-10
    assert np.all(table.gamma[0] == 0.0) and np.all(table.dgamma_dt[0] == 0.0)
    assert table.f_of_s[0] == 0.0 and np.all(np.diff(table.f_of_s) > 0)
    assert table.f_of_s[-1] < J0_FIRST_ZERO
    assert np.max(np.abs(table.gamma[:, -1] - table.gamma[:, 0])) <= 1e-10


def test_profile_matches_direct_quadrature(table):
    s, t = 0.7, 2.3
    f = _bisect_oracle(s)
    r = np.sqrt(1 + s * s)
    g1 = integrate.quad(lambda x: r * np.cos(f * np.sin(x)) - 1, 0, t, epsabs=1e-14)[0]
    g2 = integrate.quad(lambda x: r * np.sin(f * np.sin(x)), 0, t, epsabs=1e-14)[0]
    val, _, _ = eval_gamma(table, s, t)
    assert np.max(np.abs(val - [g1, g2])) <= 1e-6


def test_pitch_example_exact(table):
    _, _, gt = eval_gamma(table, 0.5, 1.0)
    assert np.sum((gt + [1.0, 0.0]) ** 2) == pytest.approx(1.25, abs=1e-12)


def test_pitch_off_node(table, rng):
    s = rng.uniform(0, 1, 10_000)
    t = rng.uniform(-20, 20, 10_000)
    _, _, gt = eval_gamma(table, s, t)
    assert np.max(np.abs(np.sum((gt + [1.0, 0.0]) ** 2, axis=-1) - 1 - s * s)) <= 1e-8


def test_zero_row(table):
    t = np.linspace(-7, 7, 101)
    val, ds, dt = eval_gamma(table, 0.0, t)
    assert np.all(val == 0.0) and np.all(dt == 0.0)
    # only the s-derivative survives at s = 0 and its first component vanishes
    assert np.max(np.abs(ds[..., 0])) <= 1e-14
    assert np.max(np.abs(ds[..., 1])) > 0.1


def test_node_reproduction(table):
    i = np.arange(0, table.s_res, 7)
    j = np.arange(0, table.t_res, 5)
    S, T = np.meshgrid(table.s_nodes[i], table.t_nodes[j], indexing="ij")
    val, _, dt = eval_gamma(table, S, T)
    ref = table.gamma[np.ix_(i, j)]
    assert np.max(np.abs(val - ref)) <= 1e-15
    assert np.max(np.abs(dt - table.dgamma_dt[np.ix_(i, j)])) <= 1e-15


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(-50, 50))
def test_periodicity_bit_exact(s, t):
    from c1alpha.corrugation import default_table
    tab = default_table(1.0)
    shifted = t + TWO_PI
    a, b = eval_gamma(tab, s, t), eval_gamma(tab, s, shifted)
    if shifted - TWO_PI == t:
        # the shifted phase is representable: the remainders coincide bit for bit
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
    else:
        assert all(np.max(np.abs(x - y)) <= 1e-12 for x, y in zip(a, b))


def test_linear_smallness(table):
    c = gamma2_constants(table)
    assert all(np.isfinite(v) and 0 < v < 10 for v in c.values())
    s = table.s_nodes[1:, None]
    assert np.all(np.abs(table.d2gamma_dsdt[1:, :, 0]) <= c["dsdt_gamma1"] * s + 1e-15)


def test_eval_domain(table):
    with pytest.raises(DomainError):
        eval_gamma(table, -1e-3, 0.0)
    with pytest.raises(DomainError):
        eval_gamma(table, 1.0001, 0.0)


def test_build_profile_rejects_bad_parameters():
    with pytest.raises(DomainError):
        build_profile(2.5)
    with pytest.raises(DomainError):
        build_profile(1.0, s_res=32)
    with pytest.raises(ConstructionError):
        build_profile(2.0, s_res=64, t_res=64, quad_nodes=8)


def test_dump_load_roundtrip(table, tmp_path):
    path = tmp_path / "gamma.bin"
    dump_table(table, path)
    back = load_table(path)
    for name in ("s_nodes", "t_nodes", "f_of_s", "df_ds", "gamma", "dgamma_ds", "dgamma_dt",
                 "d2gamma_dsdt"):
        np.testing.assert_array_equal(getattr(back, name), getattr(table, name))
    assert back.delta_star == table.delta_star
    path.write_bytes(b"garbage" * 10)
    with pytest.raises(ConstructionError):
        load_table(path)
