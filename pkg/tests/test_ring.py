import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import smooth_field
from ringswarm.errors import (
    GridMismatchError,
    InvalidArgumentError,
    InvalidInputError,
    InvalidParameterError,
)
from ringswarm.ring import (
    DifferenceKernel,
    MorseKernel,
    RingField,
    RingGrid,
    TabulatedKernel,
    ZeroKernel,
    circular_convolution,
    convolution_derivative,
    ddx,
    kl_divergence,
    lp_norm,
    morse_kernel,
    von_mises_field,
    window_kernel,
    wrap_angle,
    wrapped_distance,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


# -- wrapping -------------------------------------------------------------


@pytest.mark.parametrize(
    "x, expected",
    [(0.0, 0.0), (1.5 * np.pi, -0.5 * np.pi), (-5 * np.pi, -np.pi), (np.pi, -np.pi)],
)
def test_wrap_known_values(x, expected):
    assert wrap_angle(x) == pytest.approx(expected, abs=1e-12)


@given(finite)
def test_wrap_range_idempotent_periodic(x):
    w = wrap_angle(x)
    assert -np.pi <= w < np.pi
    assert wrap_angle(w) == w
    assert wrap_angle(x + 2 * np.pi) == pytest.approx(w, abs=1e-9) or abs(
        abs(wrap_angle(x + 2 * np.pi) - w) - 2 * np.pi
    ) < 1e-9
    # same point on the circle
    assert math.isclose(math.cos(w), math.cos(x), abs_tol=1e-6)
    assert math.isclose(math.sin(w), math.sin(x), abs_tol=1e-6)


def test_wrap_rejects_nonfinite():
    with pytest.raises(InvalidArgumentError):
        wrap_angle(np.nan)
    with pytest.raises(InvalidArgumentError):
        wrap_angle([0.0, np.inf])


def test_wrap_array_keeps_shape():
    out = wrap_angle(np.linspace(-10, 10, 7).reshape(7, 1))
    assert out.shape == (7, 1)


def test_wrapped_distance():
    assert wrapped_distance(0.1, -0.1) == pytest.approx(0.2)
    assert wrapped_distance(3.0, -3.0) == pytest.approx(6.0 - 2 * np.pi)
    assert wrapped_distance(1.234, 1.234) == 0.0


@given(st.floats(-np.pi, np.pi, exclude_max=True), st.floats(-np.pi, np.pi, exclude_max=True))
def test_wrapped_distance_antisymmetric_off_seam(a, b):
    d = wrapped_distance(a, b)
    if abs(abs(d) - np.pi) > 1e-9:
        assert wrapped_distance(b, a) == pytest.approx(-d, abs=1e-12)


# -- grid and fields --------------------------------------------------------


def test_grid_nodes(grid):
    x = grid.x
    assert x[0] == -np.pi
    assert np.allclose(np.diff(x), 2 * np.pi / 256)
    assert x[-1] < np.pi


def test_grid_rejects_bad_size():
    with pytest.raises(InvalidParameterError):
        RingGrid(1)
    with pytest.raises(InvalidParameterError):
        RingGrid(2.5)


def test_constant_integral_exact(grid):
    assert grid.constant(3.0).integral() == pytest.approx(2 * np.pi * 3.0, rel=1e-14)


def test_field_arithmetic_and_mismatch(grid):
    a = grid.constant(2.0)
    b = grid.constant(0.5)
    assert np.all((a * b + 1 - b / 0.5).values == 1.0)
    assert np.all((-a).values == -2.0)
    assert np.all((3 - a).values == 1.0)
    with pytest.raises(GridMismatchError):
        a + RingGrid(64).constant(1.0)
    with pytest.raises(GridMismatchError):
        RingField(grid, np.zeros(10))


# -- kernels ------------------------------------------------------------------


def test_morse_limits_and_oddness():
    assert morse_kernel(1e-12) == pytest.approx(0.5, abs=1e-9)
    assert morse_kernel(0.0) == 0.0
    z = np.linspace(0.01, 3, 50)
    assert np.allclose(morse_kernel(-z), -morse_kernel(z))


def test_morse_against_high_precision():
    mpmath.mp.dps = 50
    exact = -mpmath.mpf("0.5") * mpmath.e ** (-2) + mpmath.e ** (-1)
    assert morse_kernel(1.0, 0.5, 0.5) == pytest.approx(float(exact), rel=1e-15)
    assert abs(float(exact) - 0.3002) < 1e-4


def test_morse_rejects_nonpositive_length():
    with pytest.raises(InvalidParameterError):
        morse_kernel(0.3, 0.5, 0.0)
    with pytest.raises(InvalidParameterError):
        MorseKernel(0.5, -1.0)


def test_window_kernel(grid, morse):
    full = window_kernel(morse, np.pi)
    assert np.array_equal(full.sample(grid), morse.sample(grid))
    narrow = window_kernel(morse, 0.1 * np.pi)
    assert narrow(0.5 * np.pi) == 0.0
    assert narrow(0.05 * np.pi) == morse(0.05 * np.pi)
    for bad in (0.0, -1.0, 4.0):
        with pytest.raises(InvalidParameterError):
            window_kernel(morse, bad)


def test_difference_kernel_norm_decreases_with_window(grid, morse):
    norms = [
        lp_norm(DifferenceKernel(window_kernel(morse, d), morse).on_grid(grid), 2)
        for d in np.linspace(0.05, 1.0, 40) * np.pi
    ]
    assert np.all(np.diff(norms) <= 1e-14)
    assert norms[-1] == 0.0


def test_periodic_seam_is_midpoint(morse):
    assert morse.periodic(-np.pi) == 0.0
    assert morse.periodic(np.pi) == 0.0


def test_tabulated_kernel_matches_formula(grid, morse):
    z = np.linspace(-np.pi, np.pi, 4001)
    tab = TabulatedKernel(z, morse(z))
    zz = np.linspace(-3, 3, 31)
    assert np.allclose(tab(zz), morse(zz), atol=1e-5)


# -- convolution ------------------------------------------------------------


def direct_convolution(kernel, rho):
    g = rho.grid
    m = g.m
    out = np.zeros(m)
    for j in range(m):
        for k in range(m):
            # integer lag j - k keeps the seam lag exactly at -pi
            lag = ((j - k + m // 2) % m - m // 2) * g.cell_width
            out[j] += kernel.periodic(lag) * rho.values[k]
    return out * g.cell_width


@pytest.mark.parametrize("kernel", [MorseKernel(0.5, 0.5), window_kernel(MorseKernel(), 0.4 * np.pi)])
def test_convolution_matches_direct_sum(kernel):
    g = RingGrid(64)
    rng = np.random.default_rng(3)
    for _ in range(3):
        rho = RingField(g, rng.normal(size=64))
        fast = circular_convolution(kernel, rho).values
        assert np.max(np.abs(fast - direct_convolution(kernel, rho))) < 1e-10


def test_morse_on_target_matches_direct_sum():
    g = RingGrid(64)
    rho = von_mises_field(0.0, 4.0, 100.0, g)
    fast = circular_convolution(MorseKernel(), rho).values
    assert np.max(np.abs(fast - direct_convolution(MorseKernel(), rho))) < 1e-10


def test_odd_kernel_on_uniform_is_zero(grid, morse):
    assert np.max(np.abs(circular_convolution(morse, grid.constant(100 / (2 * np.pi))).values)) < 1e-12
    assert np.all(circular_convolution(morse, grid.zeros()).values == 0.0)


def test_convolution_linear(grid, morse):
    rng = np.random.default_rng(0)
    a, b = smooth_field(grid, rng), smooth_field(grid, rng)
    lhs = circular_convolution(morse, 2.5 * a - 0.7 * b).values
    rhs = 2.5 * circular_convolution(morse, a).values - 0.7 * circular_convolution(morse, b).values
    assert np.allclose(lhs, rhs, atol=1e-13)


def test_convolution_derivative_commutes(morse):
    # both operators are circulant on the grid, so they commute up to roundoff,
    # which is stronger than the O(h^2) agreement of their continuous limits
    for m in (128, 256, 512):
        g = RingGrid(m)
        u = smooth_field(g, np.random.default_rng(11))
        a = ddx(circular_convolution(morse, u))
        b = convolution_derivative(morse, u)
        assert lp_norm(a - b, np.inf) < 1e-12 * max(1.0, lp_norm(a, np.inf))


def test_convolution_derivative_trivial(grid, morse):
    assert lp_norm(convolution_derivative(morse, grid.constant(4.0)), np.inf) < 1e-12
    rng = np.random.default_rng(1)
    assert np.all(convolution_derivative(ZeroKernel(), smooth_field(grid, rng)).values == 0)


# -- norms ------------------------------------------------------------------


def test_lp_norm_basics(grid):
    assert lp_norm(grid.constant(-2.0), 2) == pytest.approx(2 * np.sqrt(2 * np.pi))
    for p in (1, 2, np.inf):
        assert lp_norm(grid.zeros(), p) == 0.0
    assert lp_norm(grid.constant(-3.0), "inf") == 3.0
    with pytest.raises(InvalidParameterError):
        lp_norm(grid.zeros(), 3)


field_seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=1000, deadline=None)
@given(field_seeds)
def test_holder_instances(seed):
    g = RingGrid(64)
    rng = np.random.default_rng(seed)
    f1 = smooth_field(g, rng, offset=rng.normal())
    f2 = smooth_field(g, rng, offset=rng.normal())
    slack = 1e-12 * (1 + lp_norm(f1, 2) * lp_norm(f2, 2))
    assert lp_norm(f1 * f2, 1) <= lp_norm(f1, 2) * lp_norm(f2, 2) + slack
    assert lp_norm(f1 * f2, 2) <= lp_norm(f1, np.inf) * lp_norm(f2, 2) + slack


@settings(max_examples=1000, deadline=None)
@given(field_seeds)
def test_young_instance(seed):
    g = RingGrid(64)
    rng = np.random.default_rng(seed)
    f = smooth_field(g, rng, offset=rng.normal())
    u = smooth_field(g, rng, offset=rng.normal())
    tab = TabulatedKernel(g.x, f.values)
    conv = circular_convolution(tab, u)
    assert lp_norm(conv, np.inf) <= lp_norm(f, 2) * lp_norm(u, 2) * (1 + 1e-12)


# -- KL divergence ----------------------------------------------------------


def test_kl_trivial(target):
    assert kl_divergence(target, target) == 0.0
    assert kl_divergence(2 * target, target) == pytest.approx(0.0, abs=1e-15)


def test_kl_von_mises_vs_uniform_refined():
    coarse = RingGrid(256)
    fine = RingGrid(512)
    kl_c = kl_divergence(von_mises_field(0, 4, 1.0, coarse), coarse.constant(1.0))
    kl_f = kl_divergence(von_mises_field(0, 4, 1.0, fine), fine.constant(1.0))
    assert kl_c == pytest.approx(kl_f, rel=1e-10)
    # against the uniform density the divergence is k I1(k)/I0(k) - log I0(k)
    i0, i1 = mpmath.besseli(0, 4), mpmath.besseli(1, 4)
    exact = float(4 * i1 / i0 - mpmath.log(i0))
    assert kl_f == pytest.approx(exact, rel=1e-10)


@settings(max_examples=200, deadline=None)
@given(field_seeds)
def test_kl_nonnegative(seed):
    g = RingGrid(64)
    rng = np.random.default_rng(seed)
    p = RingField(g, np.exp(smooth_field(g, rng).values))
    q = RingField(g, np.exp(smooth_field(g, rng).values))
    assert kl_divergence(p, q) >= 0.0


def test_kl_rejects_negative(grid, target):
    bad = target.copy()
    bad.values[3] = -1.0
    with pytest.raises(InvalidInputError):
        kl_divergence(bad, target)
    with pytest.raises(InvalidInputError):
        kl_divergence(grid.zeros(), target)


def test_kl_zero_cells(grid, target):
    p = target.copy()
    p.values[:50] = 0.0
    assert np.isfinite(kl_divergence(p, target))
    assert np.isfinite(kl_divergence(target, p))


# -- von Mises --------------------------------------------------------------


def test_von_mises_field(grid):
    flat = von_mises_field(0.0, 0.0, 100.0, grid)
    assert np.allclose(flat.values, 100 / (2 * np.pi))
    vm = von_mises_field(0.0, 4.0, 100.0, grid)
    assert abs(vm.integral() - 100.0) < 1e-10
    assert np.argmin(np.abs(grid.x)) == np.argmax(vm.values)
    # symmetric about 0: x_k and x_{m-k} mirror each other
    assert np.allclose(vm.values[1:], vm.values[1:][::-1], rtol=1e-13)
    with pytest.raises(InvalidParameterError):
        von_mises_field(0.0, -1.0, 1.0, grid)
