"""Diagnostics: energy, norms, estimated constants, decay fitting."""

import numpy as np
import pytest

from chcda.diagnostics import (
    AnalysisConstants,
    estimate_constants,
    estimate_poincare,
    fit_decay_envelope,
    l2_error,
    l2_norm,
    energy,
    verify_grad_split,
)
from chcda.space import interpolate_nodal

from conftest import get_formset, get_space

SIGMA = 5.0
EPS = 0.05


def test_energy_pure_phases():
    # [TRIVIAL] phi = +-1 sits at the bottom of the double well with no
    # gradient: E = 0.  phi = 0 sits on the hump: E = 1/4.
    sp_ = get_space(8)
    nd = sp_.num_dofs
    assert abs(energy(sp_, np.ones(nd), EPS)) < 1e-13
    assert abs(energy(sp_, -np.ones(nd), EPS)) < 1e-13
    assert abs(energy(sp_, np.zeros(nd), EPS) - 0.25) < 1e-13


def test_energy_linear_profile_oracle():
    # [DERIVED] phi = x: int (x^2 - 1)^2 / 4 = 2/15 and the gradient term
    # adds eps^2 / 2
    sp_ = get_space(8)
    x = sp_.node_xy[:, 0].copy()
    expected = 2.0 / 15.0 + 0.5 * EPS * EPS
    assert abs(energy(sp_, x, EPS) - expected) < 1e-12


def test_energy_sign_symmetry(rng):
    sp_ = get_space(8)
    v = rng.standard_normal(sp_.num_dofs)
    assert energy(sp_, v, EPS) == energy(sp_, -v, EPS)


def test_energy_grows_with_eps(rng):
    sp_ = get_space(8)
    v = rng.standard_normal(sp_.num_dofs)
    assert energy(sp_, v, 0.1) > energy(sp_, v, 0.05)


def test_l2_norm_and_error():
    sp_ = get_space(32)
    fs = get_formset(32)
    M = fs.mass.matrix
    f = interpolate_nodal(sp_, lambda x, y: np.sin(np.pi * x))
    # ||sin(pi x)||_L2 over the unit square is sqrt(1/2); the interpolant
    # differs at the cubic interpolation order
    assert abs(l2_norm(M, f.values) - np.sqrt(0.5)) < 1e-5
    g = interpolate_nodal(sp_, lambda x, y: np.sin(np.pi * x) + 1.0)
    assert abs(l2_error(M, g.values, f.values) - 1.0) < 1e-12
    assert l2_error(M, f.values, f.values) == 0.0


def test_estimated_constants_n8_frozen():
    # [DERIVED] deflated extremal Rayleigh quotients at n = 8, sigma = 5,
    # frozen from the converged iteration (relative drift allowed 1%)
    sp_ = get_space(8)
    c = estimate_constants(sp_, SIGMA, fs=get_formset(8))
    assert abs(c.c_coer - 0.286575) < 0.01 * 0.286575
    assert abs(c.c_cont - 1.628103) < 0.01 * 1.628103
    assert abs(c.c_p - 0.365701) < 0.01 * 0.365701


def test_constants_sandwich_unity():
    # jump-free fields realize ratio 1 exactly, so the extremes straddle 1
    sp_ = get_space(8)
    c = estimate_constants(sp_, SIGMA, fs=get_formset(8))
    assert 0.0 < c.c_coer <= 1.0 <= c.c_cont


def test_constants_bracket_sampled_quotients(rng):
    # every sampled zero-mean quotient lies inside the estimated extremes
    sp_ = get_space(8)
    fs = get_formset(8)
    c = estimate_constants(sp_, SIGMA, fs=fs)
    A = fs.cip(SIGMA).matrix
    G = fs.norm_gram(SIGMA)
    M = fs.mass.matrix
    one = np.ones(sp_.num_dofs)
    total = one @ (M @ one)
    for _ in range(200):
        v = rng.standard_normal(sp_.num_dofs)
        v -= ((one @ (M @ v)) / total) * one
        q = (v @ (A @ v)) / (v @ (G @ v))
        assert c.c_coer - 1e-8 <= q <= c.c_cont + 1e-8, q


def test_poincare_constant_bounds_samples(rng):
    sp_ = get_space(8)
    fs = get_formset(8)
    c_p = estimate_poincare(sp_, SIGMA, fs=fs)
    assert c_p > 0
    M = fs.mass.matrix
    K = fs.stiffness.matrix
    G = fs.norm_gram(SIGMA)
    one = np.ones(sp_.num_dofs)
    total = one @ (M @ one)
    for _ in range(100):
        v = rng.standard_normal(sp_.num_dofs)
        v -= ((one @ (M @ v)) / total) * one
        l2 = np.sqrt(v @ (M @ v))
        h1 = np.sqrt(v @ (K @ v))
        h2 = np.sqrt(v @ (G @ v))
        assert l2 <= c_p * h1 * (1 + 1e-8)
        assert h1 <= c_p * h2 * (1 + 1e-8)


def test_grad_split_bound():
    # |(grad w, grad v)| <= sqrt(2) ||w||_{2,h} ||v||; the sampled worst
    # ratio stays under the bound including diagonal pairs w = v
    sp_ = get_space(16)
    worst = verify_grad_split(sp_, SIGMA, fs=get_formset(16), npairs=1000)
    assert worst <= np.sqrt(2.0) + 1e-10, worst
    assert worst > 0.0


def test_textbook_constants_preset():
    c = AnalysisConstants.textbook()
    assert c.c_coer == c.c_cont == c.c_p == c.c_i == 1.0
    assert c.c_inf == 1.0 and c.cdata_prime == 1.0


def test_decay_fit_recovers_synthetic_series():
    # e_m = 3 * r^-m + plateau with r = 1.1 and plateau = 1e-9; the series
    # is long enough that the last tenth sits flat on the plateau
    m = np.arange(400)
    plateau = 1e-9
    e = 3.0 * 1.1 ** (-m.astype(float)) + plateau
    fit = fit_decay_envelope(e)
    assert fit.decaying
    assert abs(fit.ratio - 1.1) < 0.011
    assert abs(fit.plateau - plateau) < 0.1 * plateau
    assert fit.rate < 0
    assert fit.window[0] == 2


def test_decay_fit_window_stops_at_plateau():
    m = np.arange(300)
    e = 10.0 * np.exp(-0.2 * m) + 1e-6
    fit = fit_decay_envelope(e)
    assert fit.decaying
    # the window must end before the series flattens out
    assert fit.window[1] < 150
    assert abs(fit.ratio - np.exp(0.2)) < 0.01 * np.exp(0.2)


def test_decay_fit_constant_series_not_decaying():
    fit = fit_decay_envelope(np.full(50, 0.7))
    assert not fit.decaying
    assert fit.plateau == 0.7


def test_decay_fit_zero_series_degenerate():
    fit = fit_decay_envelope(np.zeros(50))
    assert not fit.decaying
    assert fit.plateau == 0.0
    assert np.isnan(fit.ratio)


def test_decay_fit_growing_series_flagged():
    m = np.arange(60, dtype=float)
    e = 1e-6 * np.exp(0.1 * m)
    fit = fit_decay_envelope(e)
    assert not fit.decaying


def test_decay_fit_rejects_short_series():
    with pytest.raises(ValueError):
        fit_decay_envelope(np.ones(10))
    with pytest.raises(ValueError):
        fit_decay_envelope(np.ones((30, 2)))
