import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import eigh_tridiagonal

from inls_lab import FitDomainError, InsufficientData, ModulationUndefined
from inls_lab import harness
from inls_lab.evolution import EvolveConfig, evolve, rescale
from inls_lab.linearized import assemble
from inls_lab.modulation import (STRICHARTZ_PAIRS, AdmissiblePair, alpha_drift, check_admissible,
                                 comparability, decompose, delta, fit_phase, g_equation_residual,
                                 grad_power_integral, orthogonality_relative, rate_fit,
                                 strichartz_meter, virial_check, zeta_limit)
from inls_lab.radial_core import RadialField, inner, norm_lq, radial_derivative


def test_phase_examples(small_gs):
    Q = small_gs.field
    t = 0.37
    assert fit_phase(Q * np.exp(1j * t), t, small_gs) == pytest.approx(0.0, abs=1e-14)
    assert fit_phase(Q * np.exp(1j * (0.7 + t)), t, small_gs) == pytest.approx(0.7, abs=1e-14)
    z = fit_phase(-Q * np.exp(1j * t), t, small_gs)
    assert z == pytest.approx(math.pi, abs=1e-14) and -math.pi < z <= math.pi
    fr = decompose(-Q * np.exp(1j * t), t, small_gs)
    assert np.max(np.abs(fr.g.values)) < 1e-13 * np.max(Q.values)


def test_phase_branch_continuity(small_gs):
    Q = small_gs.field
    z = fit_phase(Q * np.exp(1j * (3.1 + 0.5)), 0.0, small_gs, previous=6.0)
    assert z == pytest.approx(3.6, abs=1e-13)


def test_phase_undefined_off_orbit(small_gs):
    Q = small_gs.field
    g = small_gs.grid
    w = g.sample(lambda r: np.exp(-r / 3) * np.cos(r))
    w = w - Q * (inner(w, Q).real / inner(Q, Q).real)
    with pytest.raises(ModulationUndefined):
        fit_phase(w, 0.0, small_gs)


def test_decompose_identity_and_scalar(small_gs):
    Q = small_gs.field
    fr = decompose(Q * np.exp(0.25j), 0.25, small_gs)
    assert abs(fr.alpha) < 1e-14 and fr.h_h1 < 1e-12 and fr.delta < 1e-10
    eps = 0.013
    fr = decompose(Q * ((1 + eps) * np.exp(0.25j)), 0.25, small_gs)
    assert fr.alpha == pytest.approx(eps, rel=1e-12)
    assert fr.h_h1 < 1e-12
    assert fr.in_window


def test_decompose_l_plus_direction(small_gs):
    pair = assemble(0.3, small_gs)
    _, vec = eigh_tridiagonal(pair.plus_diag, pair.off_diag, select="i", select_range=(1, 1))
    w = RadialField.from_v(small_gs.grid, vec[:, 0])
    lapq = small_gs.laplacian_q()
    w = w - small_gs.field * (inner(w, lapq).real / inner(small_gs.field, lapq).real)
    from inls_lab.radial_core import norm_h1_sq
    eps = 1e-4
    fr = decompose(small_gs.field + w * eps, 0.0, small_gs)
    assert abs(fr.alpha) < 10 * eps ** 2
    assert fr.h_h1 == pytest.approx(eps * math.sqrt(norm_h1_sq(w)), rel=1e-3)


def test_delta_examples(small_gs, gs05):
    Q = small_gs.field
    K = small_gs.kinetic_h
    assert delta(Q * np.exp(1.1j), small_gs) == pytest.approx(0.0, abs=1e-12 * K)
    assert delta(Q * 1.02, small_gs) == pytest.approx((1.02 ** 2 - 1) * K, rel=1e-10)
    lam = 1.1
    assert delta(rescale(gs05.field, lam, 0.5, "exact"), gs05) == pytest.approx(
        (lam ** 0.5 - 1) * gs05.kinetic_h, rel=1e-9)


def test_admissibility_examples():
    assert check_admissible((3, Fraction(18, 5)))
    assert check_admissible(AdmissiblePair(4, 3))
    assert AdmissiblePair(math.inf, 2).admissible
    assert check_admissible((2, 6))
    assert not check_admissible((3, 3))
    assert not check_admissible((1, Fraction(-6)))
    assert all(check_admissible(p) for p in STRICHARTZ_PAIRS)


@settings(max_examples=200)
@given(qn=st.integers(1, 60), qd=st.integers(1, 20), rn=st.integers(1, 60), rd=st.integers(1, 20))
def test_admissibility_matches_rational_arithmetic(qn, qd, rn, rd):
    q, r = Fraction(qn, qd), Fraction(rn, rd)
    want = q >= 2 and 2 / q + 3 / r == Fraction(3, 2)
    assert check_admissible((q, r)) is want


def _const_frames(f, ts, scale=lambda t: 1.0):
    return [(t, f * scale(t)) for t in ts]


def test_strichartz_meter_examples(small_grid):
    f = small_grid.sample(lambda r: np.exp(-r))
    ts = np.linspace(0, 2.0, 201)
    zero = _const_frames(f * 0.0, ts)
    assert strichartz_meter(zero, (0, 2), (4, 3)) == 0.0
    T = 2.0
    assert strichartz_meter(_const_frames(f, ts), (0, T), (4, 3)) == pytest.approx(
        T ** 0.25 * norm_lq(f, 3), rel=1e-10)
    got = strichartz_meter(_const_frames(f, ts, lambda t: math.exp(-t)), (0, T), (2, 6))
    want = math.sqrt((1 - math.exp(-2 * T)) / 2) * norm_lq(f, 6)
    assert got == pytest.approx(want, rel=1e-6)
    assert strichartz_meter(_const_frames(f, ts), (0, T), (math.inf, 2)) == pytest.approx(norm_lq(f, 2))
    with pytest.raises(ValueError):
        strichartz_meter(_const_frames(f, ts), (0, T), (3, 3))
    with pytest.raises(InsufficientData):
        strichartz_meter(_const_frames(f, ts), (0, 3.0), (4, 3))


def test_grad_power_integral(small_grid):
    f = small_grid.sample(lambda r: np.exp(-r))
    gn = norm_lq(RadialField(small_grid, radial_derivative(f)), 2)
    f = f * (1 / gn)
    ts = np.linspace(0.0, 60.0, 6001)
    frames = _const_frames(f, ts, lambda t: math.exp(-t))
    for t in (0.0, 1.0, 3.0):
        assert grad_power_integral(frames, (t, 60.0), 0.4) == pytest.approx(
            2.5 * math.exp(-0.4 * t), rel=1e-6)
    assert grad_power_integral(_const_frames(f * 0.0, ts), (0, 1), 0.4) == 0.0
    with pytest.raises(ValueError):
        grad_power_integral(frames, (0, 1), 0.0)


def test_virial_check_closed_forms():
    t = np.linspace(0, 3, 3001)
    lhs, (d1, d2), ratio = virial_check((t, np.exp(-t)), 0.5, 2.5)
    want = (math.exp(-0.5) - math.exp(-2.5)) / (math.exp(-0.5) + math.exp(-2.5))
    assert ratio == pytest.approx(want, rel=1e-8) and ratio < 1
    t = np.linspace(0, 1, 11)
    assert virial_check((t, np.full_like(t, 3.0)), 0.0, 1.0)[2] == pytest.approx(0.5)
    with pytest.raises(InsufficientData):
        virial_check((t, np.ones_like(t)), 0.0, 2.0)


def test_alpha_drift(small_gs):
    Q = small_gs.field
    frs = [decompose(Q * (1.01 * np.exp(1j * t)), t, small_gs) for t in (0.0, 0.5, 1.0)]
    assert alpha_drift(frs, 0.5, 0.5) == 0.0
    assert alpha_drift(frs, 0.0, 1.0) < 1e-14
    far = [decompose(Q * (1.5 * np.exp(1j * t)), t, small_gs) for t in (0.0, 0.5)]
    with pytest.raises(InsufficientData):
        alpha_drift(far, 0.0, 0.5)


def test_rate_fit_examples():
    t = np.linspace(0, 10, 50)
    fit = rate_fit((t, 3.0 * np.exp(-0.8 * t)))
    assert fit.c == pytest.approx(0.8, rel=1e-12) and fit.rms_log_residual < 1e-10
    assert fit.prefactor == pytest.approx(3.0)
    noisy = 3.0 * np.exp(-0.8 * t) * (1 + 0.01 * np.random.default_rng(1).standard_normal(t.size))
    assert rate_fit(list(zip(t, noisy))).c == pytest.approx(0.8, rel=0.05)
    with pytest.raises(FitDomainError):
        rate_fit((t[:5], np.exp(-t[:5])))
    with pytest.raises(FitDomainError):
        rate_fit((t, -np.exp(-t)))


def test_zeta_limit_closed_form():
    t = np.linspace(0, 10, 201)
    zl = zeta_limit((t, 0.3 + np.exp(-t)))
    assert zl.zeta0 == pytest.approx(0.3, abs=1e-3)
    # the envelope is exactly e^{-t} - e^{-10}
    want = rate_fit((t[:-1], np.exp(-t[:-1]) - np.exp(-10.0))).c
    assert zl.rate.c == pytest.approx(want, rel=1e-10)
    assert 0.9 < zl.rate.c < 1.2


def test_g_residual_on_standing_wave(small_gs):
    Q = small_gs.field
    frs = [decompose(Q * np.exp(1j * t), t, small_gs) for t in (0.1, 0.2, 0.3)]
    res, ratio = g_equation_residual(frs, small_gs, 0.3)
    assert res < 1e-9 and ratio == 0.0
    with pytest.raises(InsufficientData):
        g_equation_residual(frs[:2], small_gs, 0.3)


def test_g_residual_second_order_from_run():
    gs = harness.ground_state(0.3, 30.0, 1499)
    spec = harness.linear_spectrum(0.3, 30.0, 1499)
    u0 = harness.build_threshold_data(0.3, "unstable-eigenvector", -0.01, gs, spec)
    from inls_lab.modulation import decompose_trajectory
    res = []
    # frame spacing must resolve the fastest grid mode (lambda_max ~ 4/h^2)
    for D in (1e-4, 5e-5):
        tr = evolve(u0, EvolveConfig(dt0=D / 20, t_final=2 * D, sample_every=D), 0.3)
        res.append(g_equation_residual(decompose_trajectory(tr.times, tr.states, gs), gs, 0.3)[0])
    assert 3.2 < res[0] / res[1] < 4.8


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31), theta=st.floats(-math.pi, math.pi), t=st.floats(0, 5))
def test_orthogonality_and_gauge(seed, theta, t):
    gs = harness.ground_state(0.3, 30.0, 1499)
    g = gs.grid
    rng = np.random.default_rng(seed)
    bump = np.exp(-(g.nodes - rng.uniform(0, 5)) ** 2)
    pert = g.field(1e-2 * (rng.standard_normal() + 1j * rng.standard_normal()) * bump)
    u = (gs.field + pert) * np.exp(1j * t)
    fr = decompose(u, t, gs)
    o1, o2 = orthogonality_relative(fr, gs)
    assert o1 < 1e-10 and o2 < 1e-10
    fz = decompose(u * np.exp(1j * theta), t, gs)
    assert fz.alpha == pytest.approx(fr.alpha, rel=1e-9, abs=1e-15)
    assert fz.delta == pytest.approx(fr.delta, rel=1e-9, abs=1e-12)
    assert fz.h_h1 == pytest.approx(fr.h_h1, rel=1e-9, abs=1e-15)
    assert math.remainder(fz.zeta - fr.zeta - theta, 2 * math.pi) == pytest.approx(0, abs=1e-12)


def test_comparability_on_trapped_run(trapped_run):
    _, _, frames = trapped_run(0.3)
    d0 = 0.1 * harness.ground_state(0.3).kinetic_h
    c1 = comparability(frames, (1e-6, d0))
    _, _, frames2 = trapped_run(0.3, 11999)
    c2 = comparability(frames2, (1e-6, 0.1 * harness.ground_state(0.3, 60.0, 11999).kinetic_h))
    assert c1["n"] >= 8
    assert abs(c2["C_star"] / c1["C_star"] - 1) < 0.2
    assert abs(c2["g_over_delta_max"] / c1["g_over_delta_max"] - 1) < 0.2
