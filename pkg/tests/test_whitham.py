import math

import numpy as np
import pytest
from scipy import integrate

from wavebreak.errors import ConfigError, ResolutionLossError, UsageError
from wavebreak.kernels import KernelSpec, gaussian, sech2
from wavebreak.whitham import (Bump, ProfileSpec, RunOptions, WaveState, build_kernel, convolution_term,
                               evolve, extrema_of_slope, grid_points, run, spectral_derivative, step,
                               tail_fraction, validate_bound, wavenumbers)


def cosine_transform(kernel, k):
    val, _ = integrate.quad(lambda x: float(kernel(x)) * math.cos(k * x), 0, 60 * kernel.width, limit=400,
                            epsabs=1e-14, epsrel=1e-13)
    return 2 * val


# --- kernels ----------------------------------------------------------------------

@pytest.mark.parametrize("kernel", [gaussian(1.0), gaussian(0.5), sech2(1.0), sech2(2.0)])
@pytest.mark.parametrize("k", [0.0, 0.3, 1.0, 2.5])
def test_symbol_matches_fourier_integral(kernel, k):
    assert float(kernel.symbol(k)) == pytest.approx(cosine_transform(kernel, k), rel=1e-9, abs=1e-13)


@pytest.mark.parametrize("kernel", [gaussian(1.0), sech2(1.0), sech2(0.5)])
def test_inverse_transform_at_zero_is_one(kernel):
    assert kernel(0.0) == 1.0
    assert kernel.normalization() == pytest.approx(1.0, rel=1e-10)


def test_sech2_symbol_small_k():
    lam = 1.5
    assert float(sech2(lam).symbol(0.0)) == pytest.approx(2 * lam)
    assert float(sech2(lam).symbol(1e-6)) == pytest.approx(2 * lam, rel=1e-10)


def test_min_period():
    for ker in (gaussian(1.0), sech2(1.0)):
        L = ker.min_period()
        assert float(ker(L / 2)) == pytest.approx(1e-12, rel=1e-6)


def test_kernel_validation():
    with pytest.raises(ConfigError):
        KernelSpec("lorentz", 1.0)
    with pytest.raises(ConfigError):
        gaussian(-1.0)


def test_short_period_names_minimum():
    with pytest.raises(ConfigError, match="L >= 14.8"):
        build_kernel(gaussian(1.0), 10.0, 256)


# --- grid and profiles ---------------------------------------------------------------

def test_wave_state_checks():
    with pytest.raises(ConfigError):
        WaveState(10.0, 100, np.zeros(100))
    with pytest.raises(ConfigError):
        WaveState(10.0, 64, np.zeros(32))


def test_dealias_mask_keeps_lower_two_thirds():
    sym = build_kernel(gaussian(), 40.0, 96)
    assert sym.dealias.sum() == 96 // 3 + 1
    assert not sym.dealias[-1]


def test_profile_validation():
    with pytest.raises(ConfigError):
        ProfileSpec(((1.0, 0.0, -1.0),))
    with pytest.raises(ConfigError, match="closer"):
        ProfileSpec(((1.0, 0.0, 1.0), (-1.0, 9.0, 1.0)))
    ProfileSpec(((1.0, 0.0, 1.0), (-1.0, 10.0, 1.0)))
    with pytest.raises(ConfigError, match="decay"):
        ProfileSpec(((1.0, 15.0, 1.0),)).sample(40.0, 256)


def test_balanced_profile_extrema():
    prof = ProfileSpec.two_sided(-5.0, 3.5)
    assert prof.imbalance == pytest.approx(0.0, abs=1e-12)
    p = extrema_of_slope(prof.sample(160.0, 8192))
    assert p.m1 == pytest.approx(-5.0, abs=1e-9)
    assert p.m2 == pytest.approx(3.5, abs=1e-9)


def test_unbalanced_profile_is_shifted_by_mean_slope():
    prof = ProfileSpec(((-1.0, 0.0, 1.0), (1.0, 20.0, 1.0), (-1.0, -20.0, 1.0)))
    L = 100.0
    shift = prof.imbalance / L
    st = prof.sample(L, 2048)
    p = extrema_of_slope(st)
    # off-grid peaks: the parabolic refinement is good to about dx^4
    assert p.m1 == pytest.approx(-1.0 - shift, abs=1e-5)
    assert p.m2 == pytest.approx(1.0 - shift, abs=1e-5)
    assert st.samples[0] == pytest.approx(0.0, abs=1e-12)


def test_sampled_profile_matches_slope():
    prof = ProfileSpec(((0.7, -8.0, 1.5), (-0.7, 8.0, 1.5)))
    st = prof.sample(64.0, 1024)
    assert spectral_derivative(st) == pytest.approx(prof.slope(st.x), abs=1e-10)


def test_spectral_derivative_converges_fast():
    prof = ProfileSpec(((1.0, -6.0, 1.0), (-1.0, 6.0, 1.0)))
    errs = []
    for n in (64, 128):
        st = prof.sample(48.0, n)
        errs.append(np.max(np.abs(spectral_derivative(st) - prof.slope(st.x))))
    assert errs[1] < 1e-7 and errs[0] > 1e5 * errs[1]


def test_extrema_parabolic_refinement():
    L, n = 2 * math.pi, 64
    x = grid_points(L, n) + 0.01  # extremum off-grid
    st = WaveState(L, n, np.sin(x))
    p = extrema_of_slope(st)
    assert p.m1 == pytest.approx(-1.0, abs=1e-4)
    assert p.m2 == pytest.approx(1.0, abs=1e-4)


def test_tail_fraction():
    n = 96
    x = grid_points(2 * math.pi, n)
    assert tail_fraction(np.cos(x), n) == pytest.approx(0.0, abs=1e-25)
    assert tail_fraction(np.cos(30 * x), n) == pytest.approx(1.0)


# --- solver ---------------------------------------------------------------------------

def test_convolution_matches_quadrature():
    L, n = 80.0, 1024
    prof = ProfileSpec(((1.0, -10.0, 1.0), (-1.0, 10.0, 1.0)))
    st = prof.sample(L, n)
    for ker in (gaussian(1.0), sech2(1.0)):
        conv = convolution_term(st, build_kernel(ker, L, n))
        for j in range(0, n, 97):
            xj = st.x[j]
            ref = sum(integrate.quad(lambda s: float(ker(xj - s)) * float(prof.slope(s)), a, b, limit=400,
                                     epsabs=1e-14, epsrel=1e-13)[0]
                      for a, b in ((-60.0, -10.0), (-10.0, 10.0), (10.0, 60.0)))
            assert abs(conv[j] - ref) < 1e-8


def test_symbol_grid_mismatch():
    sym = build_kernel(gaussian(), 40.0, 128)
    with pytest.raises(UsageError):
        convolution_term(WaveState(40.0, 256, np.zeros(256)), sym)


def test_step_is_fourth_order():
    L, n = 40.0, 256
    sym = build_kernel(gaussian(1.0), L, n)
    st = ProfileSpec(((0.5, -5.0, 1.0), (-0.5, 5.0, 1.0))).sample(L, n)
    sols = [evolve(st, sym, 1.0, dt).samples for dt in (0.04, 0.02, 0.01)]
    order = math.log2(np.max(np.abs(sols[0] - sols[1])) / np.max(np.abs(sols[1] - sols[2])))
    assert order > 3.5


def test_linear_mode_travels_at_symbol_speed():
    L, n = 40.0, 256
    ker = gaussian(1.0)
    sym = build_kernel(ker, L, n)
    amp, k = 1e-6, 2 * math.pi * 3 / L
    x = grid_points(L, n)
    out = evolve(WaveState(L, n, amp * np.cos(k * x)), sym, 2.0, 0.01)
    expect = amp * np.cos(k * (x - float(ker.symbol(k)) * 2.0))
    assert np.max(np.abs(out.samples - expect)) < 10 * amp**2


def test_mean_is_conserved():
    L, n = 40.0, 256
    sym = build_kernel(sech2(1.0), 40.0, 256)
    st = ProfileSpec(((0.8, -5.0, 1.0), (-0.4, 5.0, 1.0))).sample(L, n)
    st = WaveState(L, n, st.samples + 0.3)
    out = evolve(st, sym, 3.0, 0.01)
    assert abs(out.mean() - st.mean()) <= 3.0 * 1e-10


def test_nonfinite_step_detected():
    sym = build_kernel(gaussian(), 40.0, 64)
    st = WaveState(40.0, 64, np.full(64, np.nan))
    with pytest.raises(ArithmeticError):
        step(st, 0.1, sym)


def test_small_data_does_not_break():
    rep = run(ProfileSpec(((-0.5, 0.0, 1.0), (0.5, 20.0, 1.0))), gaussian(1.0),
              RunOptions(n=2048, L=160.0, t_max=3.0))
    assert rep.status == "horizon" and rep.t_break_observed is None
    assert not rep.verdict.in_omega
    with pytest.raises(UsageError):
        validate_bound(rep)


def test_slopes_obey_extremum_inequalities():
    rep = run(ProfileSpec.two_sided(-5.0, 3.5), gaussian(1.0), RunOptions(t_max=0.6))
    t, m1, m2 = rep.column("t"), rep.column("m1"), rep.column("m2")
    mid = lambda a: 0.5 * (a[1:] + a[:-1])  # noqa: E731
    d1 = np.diff(m1) / np.diff(t)
    d2 = np.diff(m2) / np.diff(t)
    ok = np.abs(mid(m1)) < 50
    assert np.all((d1 - (-mid(m1) ** 2 + mid(m2) - mid(m1)))[ok] <= 1e-3)
    assert np.all((d2 - (-mid(m2) ** 2 + mid(m2) - mid(m1)))[ok] <= 1e-3)


def test_witness_breaking_time_is_grid_converged():
    opts = RunOptions(t_max=0.6)
    coarse = run(ProfileSpec.two_sided(-5.0, 3.5), gaussian(1.0), opts)
    fine = run(ProfileSpec.two_sided(-5.0, 3.5), gaussian(1.0), RunOptions(n=16384, t_max=0.6))
    assert coarse.status == fine.status == "breaking"
    assert coarse.t_break_observed == pytest.approx(fine.t_break_observed, rel=0.02)
    assert validate_bound(coarse)


def test_sech2_breaking_within_bound():
    rep = run(ProfileSpec.two_sided(-3.0, 1.0, 2.0), sech2(1.0), RunOptions(n=4096, t_max=2.0))
    assert rep.status == "breaking" and rep.bound_satisfied


def test_under_resolved_run_reports_resolution_loss():
    with pytest.raises(ResolutionLossError) as info:
        run(ProfileSpec.two_sided(-5.0, 3.5), gaussian(1.0), RunOptions(n=512, t_max=0.6))
    assert info.value.series is not None and len(info.value.series) > 10


def test_report_dict_fields():
    rep = run(ProfileSpec.two_sided(-5.0, 3.5), gaussian(1.0), RunOptions(n=2048, t_max=0.05))
    d = rep.to_dict()
    for key in ("m1_0", "m2_0", "g_value", "in_omega", "seliger_holds", "time_bound", "t_break_observed",
                "bound_satisfied"):
        assert key in d
    assert rep.series.shape[1] == 10


def test_bump_tuple_coercion():
    prof = ProfileSpec(((1.0, 0.0, 1.0),))
    assert prof.bumps[0] == Bump(1.0, 0.0, 1.0)
    assert wavenumbers(2 * math.pi, 8)[1] == pytest.approx(1.0)
