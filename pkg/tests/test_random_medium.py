from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inclusion_spectra.random_medium import (
    Box,
    ConfigurationError,
    DensitySpec,
    ModelParams,
    OutOfWindowError,
    RejectedShiftError,
    constant_radii,
    derived_constants,
    eval_coefficient,
    eval_sharp_coefficient,
    sample_radii,
    shift_radii,
    witness_points,
)

P = ModelParams()  # d=2, eps=1/4, gamma=2, omega in [0.1, 0.2]
UNIT = Box.cube(1.0, 2)


def _radial_point(radii, r):
    c = radii.centers()[0]
    return c + np.array([r, 0.0])


# --- model parameters ---------------------------------------------------------


def test_params_reject_omega_plus_above_quarter():
    with pytest.raises(ConfigurationError):
        ModelParams(omega_plus=0.3)


def test_params_reject_small_gamma():
    with pytest.raises(ConfigurationError):
        ModelParams(gamma=1.5)


def test_params_dict_round_trip():
    p = ModelParams(density=DensitySpec("PolynomialThin", 2.0))
    assert ModelParams.from_dict(p.to_dict()) == p


def test_derived_constants_at_quarter_gamma_two():
    # alpha = 2(1 - 1/16) / (1/4) = 7.5; s0 = (1/4)/4; Lipschitz 4 / (1/16)
    c = derived_constants(P)
    assert c.alpha_epsilon == pytest.approx(7.5, rel=1e-15)
    assert c.s0 == pytest.approx(0.0625, rel=1e-15)
    assert c.layer_thickness == pytest.approx(0.015625, rel=1e-15)
    assert c.lipschitz_bound == pytest.approx(64.0, rel=1e-15)


# --- sampling -----------------------------------------------------------------


def test_non_integer_box_rejected():
    with pytest.raises(ConfigurationError):
        sample_radii(P, Box.cube(1.1, 2), seed=0)


def test_uniform_support_and_determinism():
    a = sample_radii(P, Box.cube(4.0, 2), seed=123, realization=7)
    b = sample_radii(P, Box.cube(4.0, 2), seed=123, realization=7)
    assert a.values.shape == (16, 16)
    assert np.all((a.values >= 0.1) & (a.values <= 0.2))
    assert np.array_equal(a.values, b.values)
    c = sample_radii(P, Box.cube(4.0, 2), seed=123, realization=8)
    assert not np.array_equal(a.values, c.values)


def test_boxes_share_cells_across_sizes():
    small = sample_radii(P, Box.cube(1.0, 2), seed=9, realization=2)
    large = sample_radii(P, Box.cube(2.0, 2), seed=9, realization=2)
    assert np.array_equal(small.values, large.values[:4, :4])


def test_polynomial_thin_tail_monte_carlo():
    p = ModelParams(density=DensitySpec("PolynomialThin", 2.0))
    # 10^5 cells in one sample: a 1-D window of 100000 cells
    p1 = ModelParams(d=1, density=p.density)
    radii = sample_radii(p1, Box.cube(25000.0, 1), seed=42)
    frac = float(np.mean(radii.values > 0.2 - 0.05))
    expected = (0.05 / 0.1) ** 2
    sigma = math.sqrt(expected * (1 - expected) / radii.values.size)
    assert expected == 0.25
    assert abs(frac - expected) <= 3 * sigma


def test_polynomial_thin_tail_closed_form():
    d = DensitySpec("PolynomialThin", 2.0)
    assert d.upper_tail(0.05, 0.1, 0.2) == pytest.approx(0.25)
    assert d.thinness_constant(0.1, 0.2) == pytest.approx(100.0)


# --- coefficient --------------------------------------------------------------


def test_coefficient_three_branches():
    radii = constant_radii(P, UNIT, 0.2)
    assert eval_coefficient(P, radii, _radial_point(radii, 0.02)) == 0.0625
    mid = 0.05 + P.epsilon**2 / 8
    assert mid == 0.0578125
    assert eval_coefficient(P, radii, _radial_point(radii, mid)) == pytest.approx(0.53125, abs=1e-14)
    assert eval_coefficient(P, radii, _radial_point(radii, 0.07)) == 1.0


def test_coefficient_continuous_at_branch_boundaries():
    radii = constant_radii(P, UNIT, 0.2)
    for r, v in ((0.05, 0.0625), (0.065625, 1.0)):
        for sign in (-1, 1):
            x = _radial_point(radii, r + sign * 1e-12)
            assert eval_coefficient(P, radii, x) == pytest.approx(v, abs=1e-9)


def test_sharp_coefficient_two_branches():
    radii = constant_radii(P, UNIT, 0.2)
    assert eval_sharp_coefficient(P, radii, _radial_point(radii, 0.02)) == 0.0625
    assert eval_sharp_coefficient(P, radii, _radial_point(radii, 0.0578125)) == 1.0
    assert eval_sharp_coefficient(P, radii, _radial_point(radii, 0.07)) == 1.0


def test_out_of_window_raises():
    radii = sample_radii(P, UNIT, seed=1)
    with pytest.raises(OutOfWindowError):
        eval_coefficient(P, radii, np.array([1.2, 0.5]))
    # the closed box boundary is in the window
    assert eval_coefficient(P, radii, np.array([1.0, 1.0])) == 1.0


# --- shifts -------------------------------------------------------------------


def test_shift_zero_is_identity():
    radii = sample_radii(P, UNIT, seed=3)
    assert shift_radii(radii, 0.0) is radii


def test_shift_down_by_s0_accepted():
    radii = constant_radii(P, UNIT, 0.1)
    out = shift_radii(radii, -0.0625)
    assert np.allclose(out.values, 0.0375)


def test_shift_beyond_quarter_rejected():
    radii = constant_radii(P, UNIT, 0.2)
    with pytest.raises(RejectedShiftError):
        shift_radii(radii, 0.2)


def test_shift_non_strict_keeps_containment_check():
    radii = constant_radii(P, UNIT, 0.2)
    grown = shift_radii(radii, 0.0625, strict=False)
    assert np.allclose(grown.values, 0.2625)
    with pytest.raises(RejectedShiftError):
        shift_radii(radii, 0.29, strict=False)


# --- properties ---------------------------------------------------------------

seeds = st.integers(min_value=0, max_value=2**63 - 1)


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_bounds_and_lipschitz(seed):
    radii = sample_radii(P, UNIT, seed)
    rng = np.random.default_rng(seed % 2**32)
    x = rng.uniform(0.0, 1.0, (2000, 2))
    a = eval_coefficient(P, radii, x)
    assert np.all((a >= P.epsilon**2) & (a <= 1.0))
    step = rng.normal(size=(2000, 2))
    step *= rng.uniform(1e-6, 5e-3, (2000, 1)) / np.linalg.norm(step, axis=1, keepdims=True)
    y = np.clip(x + step, 0.0, 1.0)
    dist = np.linalg.norm(x - y, axis=1)
    ok = dist > 0
    ratio = np.abs(a[ok] - eval_coefficient(P, radii, y)[ok]) / dist[ok]
    assert ratio.max() <= derived_constants(P).lipschitz_bound + 1e-12


@settings(max_examples=25, deadline=None)
@given(seed=seeds, s=st.floats(min_value=0.0, max_value=0.0625))
def test_coefficient_antitone_in_radii(seed, s):
    radii = sample_radii(P, UNIT, seed)
    grown = shift_radii(radii, s, strict=False)
    x = np.random.default_rng(seed % 2**32).uniform(0, 1, (2000, 2))
    assert np.all(eval_coefficient(P, grown, x) <= eval_coefficient(P, radii, x))


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_sharp_squeeze_pointwise(seed):
    # sharp field with radii grown by the layer thickness <= smooth <= sharp field
    radii = sample_radii(P, UNIT, seed)
    x = np.random.default_rng(seed % 2**32).uniform(0, 1, (4000, 2))
    s0 = derived_constants(P).s0
    lower = eval_sharp_coefficient(P, radii, x, dilation=s0)
    mid = eval_coefficient(P, radii, x)
    upper = eval_sharp_coefficient(P, radii, x)
    assert np.all(lower <= mid) and np.all(mid <= upper)


def test_witness_balls_inside_cells():
    for seed in range(20):
        radii = sample_radii(P, UNIT, seed)
        w = witness_points(P, radii)
        # largest witness ball is eps^gamma/10 * s0; compare with distance to cell faces
        rmax = w.ball_radius(derived_constants(P).s0)
        rel = w.points - radii.cell_indices() * P.epsilon
        assert np.all(rel - rmax > 0) and np.all(rel + rmax < P.epsilon)


@pytest.mark.parametrize("frac", [0.0, 0.25, 0.5, 1.0])
def test_witness_inequality(frac):
    s = frac * derived_constants(P).s0
    for seed in range(20):
        radii = sample_radii(P, UNIT, seed)
        w = witness_points(P, radii)
        grown = shift_radii(radii, s, strict=False)
        rng = np.random.default_rng(seed)
        for x in w.points:
            u = rng.normal(size=(100, 2))
            u *= (w.ball_radius(s) * rng.uniform(0, 1, (100, 1)) ** 0.5) / np.linalg.norm(u, axis=1, keepdims=True)
            y = x + u
            diff = eval_coefficient(P, radii, y) - eval_coefficient(P, grown, y)
            assert np.all(diff >= w.lower_bound(s) - 1e-12)
