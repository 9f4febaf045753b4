import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from c1alpha.errors import DomainError, ResolutionError
from c1alpha.grid import (
    Grid,
    GridField,
    c_norm,
    finite_difference,
    holder_norm,
    holder_seminorm,
    stencil_weights,
)
from c1alpha.synthetic import weierstrass


def _line(lo, hi, n, periodic=False):
    return Grid.from_bounds((lo,), (hi,), (n,), periodic=(0,) if periodic else ())


def test_grid_invariants():
    with pytest.raises(ResolutionError):
        Grid((0.0,), (0.1,), (3,))
    with pytest.raises(DomainError):
        Grid((0.0,), (0.0,), (8,))
    g = Grid.from_bounds((0, 0), (1, 2), (11, 21))
    assert g.spacing == (0.1, 0.1)
    p = Grid.from_bounds((0,), (1,), (10,), periodic=(0,))
    assert p.spacing == (0.1,) and p.extent(0) == pytest.approx(1.0)


def test_stencils_are_exact_rationals():
    assert stencil_weights((-1, 0, 1), 1) == (-0.5, 0.0, 0.5)
    assert stencil_weights((-1, 0, 1), 2) == (1.0, -2.0, 1.0)


@pytest.mark.parametrize("mi", [(1, 0), (0, 1), (2, 0), (1, 1), (0, 3), (2, 2)])
def test_derivative_of_constant_is_zero(mi):
    g = Grid.from_bounds((0, 0), (1, 1), (12, 12))
    f = GridField(g, np.full(g.shape, 7.5))
    assert np.max(np.abs(finite_difference(f, mi).values)) < 1e-9


def test_derivative_of_linear_is_one():
    g = Grid.from_bounds((0, 0), (1, 1), (200, 50))
    f = GridField.from_function(g, lambda x: x[..., 0])
    assert np.max(np.abs(finite_difference(f, (1, 0)).values - 1.0)) < 1e-12


def test_second_derivative_of_sine_within_h_squared():
    n = 256
    g = _line(0.0, 2 * np.pi, n + 1)
    h = g.spacing[0]
    f = GridField.from_function(g, lambda x: np.sin(x[..., 0]))
    d2 = finite_difference(f, (2,)).values
    x = g.axis_coords(0)
    err = np.max(np.abs(d2[1:-1] + np.sin(x[1:-1])))
    assert err <= h * h
    # one-sided boundary stencils keep the same order
    assert np.max(np.abs(d2 + np.sin(x))) <= 20 * h * h


def test_periodic_derivative_wraps_exactly():
    g = _line(0.0, 2 * np.pi, 64, periodic=True)
    f = GridField.from_function(g, lambda x: np.cos(3 * x[..., 0]))
    d = finite_difference(f, (1,)).values
    x = g.axis_coords(0)
    h = g.spacing[0]
    # central difference of cos(3x): -sin(3x) sin(3h)/h
    assert np.max(np.abs(d + np.sin(3 * x) * np.sin(3 * h) / h)) < 1e-12


def test_order_limits():
    g = Grid.from_bounds((0, 0), (1, 1), (5, 5))
    f = GridField(g, np.zeros(g.shape))
    with pytest.raises(DomainError):
        finite_difference(f, (3, 2))
    with pytest.raises(ResolutionError):
        finite_difference(f, (4, 0))


def test_holder_norm_of_constant():
    g = Grid.from_bounds((0, 0), (1, 1), (16, 16))
    hn = holder_norm(GridField(g, np.full(g.shape, 5.0)), 0, 0.5)
    assert hn.value == 5.0 and hn.seminorm == 0.0


def _brute_seminorm(x, v, alpha):
    d = np.abs(x[:, None] - x[None, :])
    num = np.abs(v[:, None] - v[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(d > 0, num / d**alpha, 0.0)
    return q.max()


@pytest.mark.parametrize("alpha", [0.3, 0.6])
def test_abs_power_seminorm_tends_to_one(alpha):
    errs = []
    for n in (64, 256, 1024):  # even counts: 0 is not a node
        g = _line(-1.0, 1.0, n)
        x = g.axis_coords(0)
        v = np.abs(x) ** alpha
        semi = holder_norm(GridField(g, v), 0, alpha).seminorm
        assert semi == pytest.approx(_brute_seminorm(x, v, alpha), rel=1e-12)
        # the best pair is (1, -h/2): 1 - semi is of order (h/2)^alpha
        assert 1.0 - semi <= 2 * (g.spacing[0] / 2) ** alpha
        errs.append(1.0 - semi)
    assert errs[0] > errs[1] > errs[2] > 0
    # with 0 on the grid the supremum is attained exactly
    g = _line(-1.0, 1.0, 257)
    v = np.abs(g.axis_coords(0)) ** alpha
    assert holder_norm(GridField(g, v), 0, alpha).seminorm == pytest.approx(1.0, abs=1e-12)


def test_interpolation_inequality_with_fitted_constant():
    g = _line(0.0, 2 * np.pi, 512, periodic=True)

    def ratio(k):
        f = GridField.from_function(g, lambda x: np.sin(k * x[..., 0]))
        return c_norm(f, 1) / np.sqrt(c_norm(f, 0) * c_norm(f, 2))

    # fitted on a smooth corpus bracketing the held-out frequency
    C = max(ratio(k) for k in (1, 2, 3, 6, 8))
    assert C <= np.sqrt(2.0)  # Landau's constant for the derivative parts
    f = GridField.from_function(g, lambda x: np.sin(4 * x[..., 0]))
    assert c_norm(f, 1) <= C * np.sqrt(c_norm(f, 0) * c_norm(f, 2))


fields_1d = arrays(np.float64, 24, elements=st.floats(-10, 10))


@settings(max_examples=60, deadline=None)
@given(fields_1d, st.floats(0.0, 0.9), st.floats(0.0, 0.09))
def test_holder_norm_monotone_on_unit_diameter(v, alpha, dalpha):
    g = _line(0.0, 1.0, 24)
    f = GridField(g, v)
    for k in (0, 1):
        lo = holder_norm(f, k, alpha).value
        assert holder_norm(f, k, alpha + dalpha).value >= lo - 1e-9 * (1 + lo)
        assert holder_norm(f, k + 1, alpha).value >= lo - 1e-9 * (1 + lo)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 48, elements=st.floats(-1, 1)), st.floats(0.05, 0.95))
def test_dyadic_seminorm_bounds(v, alpha):
    g = _line(0.0, 1.0, 48)
    vals = v[:, None, None]
    full = holder_seminorm(vals, g, alpha, "all")
    dyad = holder_seminorm(vals, g, alpha, "dyadic")
    assert dyad <= full * (1 + 1e-12) + 1e-300
    # chaining over the binary digits of the offset
    assert full <= dyad / (1 - 2.0**-alpha) * (1 + 1e-12) + 1e-300


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
def test_dyadic_seminorm_within_two_to_alpha_on_regular_corpus(alpha):
    g = _line(0.0, 1.0, 256)
    x = g.axis_coords(0)
    for v in (np.sin(5 * x), np.abs(x - 0.5) ** 0.5, np.exp(x) * np.cos(3 * x)):
        vals = v[:, None, None]
        full = holder_seminorm(vals, g, alpha, "all")
        dyad = holder_seminorm(vals, g, alpha, "dyadic")
        assert dyad <= full <= 2**alpha * dyad


def test_dyadic_two_to_alpha_factor_fails_on_rough_field():
    # a lacunary series defeats the 2^alpha factor; the chained bound still holds
    g = _line(0.0, 1.0, 64)
    v = weierstrass(6 * g.axis_coords(0), 0.5, 6)[:, None, None]
    full = holder_seminorm(v, g, 0.3, "all")
    dyad = holder_seminorm(v, g, 0.3, "dyadic")
    assert full > 2**0.3 * dyad
    assert full <= dyad / (1 - 2**-0.3)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (8, 9), elements=st.floats(-100, 100)),
       arrays(np.float64, (8, 9), elements=st.floats(-100, 100)),
       st.floats(-4, 4), st.sampled_from([(1, 0), (0, 1), (1, 1), (2, 0), (0, 2)]))
def test_finite_difference_is_linear(a, b, c, mi):
    # linear up to floating-point rounding of the reordered sums
    g = Grid.from_bounds((0, 0), (1, 2), (8, 9))
    fa, fb = GridField(g, a), GridField(g, b)
    da, db = finite_difference(fa, mi).values, finite_difference(fb, mi).values
    scale = 1e-12 * (np.abs(a).max() + np.abs(b).max() + 1.0) / min(g.spacing) ** sum(mi)
    assert np.max(np.abs(finite_difference(fa + fb, mi).values - (da + db))) <= 8 * scale
    assert np.max(np.abs(finite_difference(fa * c, mi).values - da * c)) <= 8 * scale * (1 + abs(c))
