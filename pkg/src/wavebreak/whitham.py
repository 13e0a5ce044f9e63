"""Periodic pseudo-spectral solver for the Whitham-type equation

    u_t + u u_x + (K * u_x) = 0

on ``[-L/2, L/2)`` with ``n`` Fourier modes, tracking ``m1 = min u_x`` and
``m2 = max u_x`` up to gradient blow-up.

Transforms use numpy's ``rfft``/``irfft`` pair.  Pairing the Fourier
coefficients with the continuous symbol ``K^(k)`` is exact for the
periodised kernel: the Delta-x factor of the forward transform and the
``1/(n Delta-x)`` of the inverse cancel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import ConfigError, ResolutionLossError, UsageError
from .kernels import TAIL_TOL, KernelSpec
from .threshold import PhasePoint, classify


@dataclass(frozen=True)
class WaveState:
    L: float
    n: int
    samples: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        if self.n < 16 or self.n & (self.n - 1):
            raise ConfigError(f"mode count must be a power of two >= 16, got {self.n}")
        if not self.L > 0:
            raise ConfigError("period must be positive")
        if len(self.samples) != self.n:
            raise ConfigError("sample count does not match n")

    @property
    def x(self):
        return grid_points(self.L, self.n)

    @property
    def dx(self):
        return self.L / self.n

    def mean(self):
        return float(np.mean(self.samples))


def grid_points(L, n):
    return -0.5 * L + L * np.arange(n) / n


def wavenumbers(L, n):
    return 2.0 * math.pi * np.fft.rfftfreq(n, d=L / n)


@dataclass(frozen=True)
class DiscreteSymbol:
    """Kernel symbol and spectral tables for one grid."""

    L: float
    n: int
    kernel: KernelSpec
    kappa: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    dealias: np.ndarray = field(repr=False)  # 2/3 rule: keep |k| <= n/3

    def matches(self, state):
        return state.n == self.n and math.isclose(state.L, self.L, rel_tol=1e-14)

    def check(self, state):
        if not self.matches(state):
            raise UsageError(f"symbol built for (L={self.L}, n={self.n}) applied to (L={state.L}, n={state.n})")


def build_kernel(kernel, L, n):
    if kernel(0.5 * L) >= TAIL_TOL:
        raise ConfigError(f"kernel tail K(L/2) = {float(kernel(0.5 * L)):.3e} exceeds {TAIL_TOL:g}; "
                          f"use a period L >= {kernel.min_period():.6g}")
    kappa = wavenumbers(L, n)
    dealias = np.arange(kappa.size) <= n // 3
    return DiscreteSymbol(L, n, kernel, kappa, kernel.symbol(kappa), dealias)


@dataclass(frozen=True)
class Bump:
    amplitude: float
    center: float
    width: float


@dataclass(frozen=True)
class ProfileSpec:
    """Initial slope ``u0'(x) = sum_i c_i exp(-(x - x_i)^2 / w_i^2)``.

    ``u0`` is the erf antiderivative, shifted so that it vanishes at the
    boundary.  On a periodic grid the slope must integrate to zero; a
    nonzero ``sum c_i w_i sqrt(pi)`` is removed as a uniform slope offset,
    which moves both extrema by ``-imbalance / L``.
    """

    bumps: tuple

    def __post_init__(self):
        bumps = tuple(b if isinstance(b, Bump) else Bump(*b) for b in self.bumps)
        object.__setattr__(self, "bumps", bumps)
        if not bumps:
            raise ConfigError("profile needs at least one bump")
        for i, b in enumerate(bumps):
            if not all(math.isfinite(v) for v in (b.amplitude, b.center, b.width)):
                raise ConfigError(f"bumps[{i}] has a non-finite field")
            if not b.width > 0:
                raise ConfigError(f"bumps[{i}].width must be positive, got {b.width}")
        for i, a in enumerate(bumps):
            for j in range(i + 1, len(bumps)):
                b = bumps[j]
                need = 5.0 * (a.width + b.width)
                if abs(a.center - b.center) < need * (1.0 - 1e-12):
                    raise ConfigError(f"bumps[{i}] and bumps[{j}] are closer than 5*(w_i + w_j) = {need:g}")

    @classmethod
    def two_sided(cls, m1, m2, width=6.0):
        """Negative bump of amplitude ``m1`` at 0 flanked by two positive bumps of amplitude ``m2``.

        The flanking widths make the slope integrate to zero, so the extrema
        are ``(m1, m2)`` exactly up to exponentially small tails.
        """
        if not (m1 < 0 and m2 >= 0):
            raise ConfigError("two_sided needs m1 < 0 <= m2")
        if m2 == 0:
            return cls((Bump(m1, 0.0, width),))
        w2 = -m1 * width / (2.0 * m2)
        d = 5.0 * (width + w2)
        return cls((Bump(m2, -d, w2), Bump(m1, 0.0, width), Bump(m2, d, w2)))

    @property
    def imbalance(self):
        return sum(b.amplitude * b.width for b in self.bumps) * math.sqrt(math.pi)

    def slope(self, x):
        x = np.asarray(x, dtype=float)
        return sum(b.amplitude * np.exp(-(((x - b.center) / b.width) ** 2)) for b in self.bumps)

    def sample(self, L, n):
        x = grid_points(L, n)
        for i, b in enumerate(self.bumps):
            gap = min(b.center + 0.5 * L, 0.5 * L - b.center)
            if gap <= 0 or abs(b.amplitude) * math.exp(-((gap / b.width) ** 2)) >= TAIL_TOL:
                raise ConfigError(f"bumps[{i}] does not decay to {TAIL_TOL:g} inside the period L = {L}")
        offset = self.imbalance / L
        u = sum(0.5 * math.sqrt(math.pi) * b.amplitude * b.width * erf((x - b.center) / b.width)
                for b in self.bumps) - offset * x
        u0_left = sum(-0.5 * math.sqrt(math.pi) * b.amplitude * b.width for b in self.bumps) + offset * 0.5 * L
        return WaveState(L, n, u - u0_left, 0.0)

    def describe(self):
        return [{"amplitude": b.amplitude, "center": b.center, "width": b.width} for b in self.bumps]


def spectral_derivative(state, uh=None):
    kappa = wavenumbers(state.L, state.n)
    if uh is None:
        uh = np.fft.rfft(state.samples)
    return np.fft.irfft(1j * kappa * uh, state.n)


def convolution_term(state, symbol):
    """``(K * u_x)(x_j)`` evaluated spectrally on the grid."""
    symbol.check(state)
    uh = np.fft.rfft(state.samples)
    return np.fft.irfft(1j * symbol.kappa * symbol.values * uh, state.n)


def _rhs(u, symbol):
    uh = np.fft.rfft(u)
    nl = np.fft.rfft(u * u)
    nl[~symbol.dealias] = 0.0
    return np.fft.irfft(-1j * symbol.kappa * (0.5 * nl + symbol.values * uh), symbol.n)


class NonFiniteState(ArithmeticError):
    """The solution left the representable range during a step."""


def step(state, dt, symbol):
    """One classical fourth-order Runge-Kutta step of ``u_t = -(u^2/2)_x - K * u_x``."""
    symbol.check(state)
    u = state.samples
    k1 = _rhs(u, symbol)
    k2 = _rhs(u + 0.5 * dt * k1, symbol)
    k3 = _rhs(u + 0.5 * dt * k2, symbol)
    k4 = _rhs(u + dt * k3, symbol)
    out = u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"non-finite samples after step to t = {state.time + dt:.6g}")
    return WaveState(state.L, state.n, out, state.time + dt)


def evolve(state, symbol, t_end, dt):
    """Fixed-step integration to ``t_end`` (last step shortened to land exactly)."""
    nsteps = max(1, int(math.ceil((t_end - state.time) / dt - 1e-9)))
    h = (t_end - state.time) / nsteps
    for _ in range(nsteps):
        state = step(state, h, symbol)
    return state


def _refine(f, i, sign):
    """Extremum of the parabola through ``f[i-1], f[i], f[i+1]`` (periodic)."""
    fm, f0, fp = f[i - 1], f[i], f[(i + 1) % len(f)]
    curv = fm - 2.0 * f0 + fp
    if sign * curv <= 0.0:
        return float(f0)
    return float(f0 - (fp - fm) ** 2 / (8.0 * curv))


def extrema_of_slope(state, with_index=False):
    """``(min u_x, max u_x)`` from the spectral slope, refined by a 3-point parabola."""
    ux = spectral_derivative(state)
    i1, i2 = int(np.argmin(ux)), int(np.argmax(ux))
    p = PhasePoint(_refine(ux, i1, +1.0), _refine(ux, i2, -1.0))
    return (p, i1, i2) if with_index else p


def tail_fraction(values, n):
    """Energy share of the top third of the retained (un-dealiased) modes, mean excluded."""
    uh = np.fft.rfft(values) if values.dtype.kind != "c" else values
    energy = np.abs(uh[1:n // 3 + 1]) ** 2
    total = energy.sum()
    if total == 0.0:
        return 0.0
    cut = (2 * (n // 3)) // 3
    return float(energy[cut:].sum() / total)


@dataclass(frozen=True)
class RunOptions:
    n: int = 8192
    L: float = 160.0
    t_max: float = 1.0
    cfl: float = 0.3
    slope_cfl: float = 0.02  # dt <= slope_cfl / max|u_x|
    break_slope: float = 200.0
    tail_limit: float = 1e-2
    bound_tol: float = 0.05


SERIES_COLUMNS = ("t", "m1", "m2", "u_min", "u_max", "tail_fraction", "slope_tail_fraction",
                  "mean", "i_min", "i_max")


@dataclass
class BreakingReport:
    m1_0: float
    m2_0: float
    verdict: object  # ThresholdVerdict, or None when (m1_0, m2_0) is not admissible
    t_break_observed: float | None
    bound_satisfied: bool | None
    series: np.ndarray = field(repr=False)  # columns SERIES_COLUMNS
    status: str = "horizon"  # "breaking" or "horizon"
    meta: dict = field(default_factory=dict)

    def column(self, name):
        return self.series[:, SERIES_COLUMNS.index(name)]

    def to_dict(self):
        v = self.verdict
        return {
            "m1_0": self.m1_0,
            "m2_0": self.m2_0,
            "g_value": None if v is None else v.g_value,
            "in_omega": None if v is None else v.in_omega,
            "seliger_holds": None if v is None else v.seliger_holds,
            "time_bound": None if v is None or math.isinf(v.time_bound) else v.time_bound,
            "t_break_observed": self.t_break_observed,
            "bound_satisfied": self.bound_satisfied,
            "status": self.status,
            **self.meta,
        }


def _extrapolated_zero(ts, r):
    slope, icept = np.polyfit(ts, r, 1)
    return -icept / slope if slope < 0 else math.inf


def _row(state, uh, kappa):
    ux = np.fft.irfft(1j * kappa * uh, state.n)
    i1, i2 = int(np.argmin(ux)), int(np.argmax(ux))
    u = state.samples
    return [state.time, _refine(ux, i1, +1.0), _refine(ux, i2, -1.0), u.min(), u.max(),
            tail_fraction(uh, state.n), tail_fraction(1j * kappa * uh, state.n),
            uh[0].real / state.n, i1, i2]


def run(profile, kernel, opts=None):
    """Evolve ``profile`` until breaking, the horizon, or loss of resolution.

    Breaking is declared once ``m1 <= -break_slope`` and the straight line
    through the last three ``(t, 1/|m1|)`` samples reaches zero before
    ``t_max``; that zero is the observed breaking time.
    """
    opts = opts or RunOptions()
    symbol = build_kernel(kernel, opts.L, opts.n)
    state = profile.sample(opts.L, opts.n)
    kappa = symbol.kappa
    rows = [_row(state, np.fft.rfft(state.samples), kappa)]
    m1_0, m2_0 = rows[0][1], rows[0][2]
    try:
        verdict = classify(m1_0, m2_0)
    except ValueError:
        verdict = None
    meta = {"n": opts.n, "L": opts.L, "kernel": kernel.describe(), "profile": profile.describe()}

    def report(t_break, status):
        bound_ok = None
        if t_break is not None and verdict is not None and verdict.in_omega:
            bound_ok = bool(t_break <= verdict.time_bound * (1.0 + opts.bound_tol))
        return BreakingReport(m1_0, m2_0, verdict, t_break, bound_ok, np.array(rows, dtype=float), status, meta)

    while state.time < opts.t_max * (1.0 - 1e-12):
        m1, m2 = rows[-1][1], rows[-1][2]
        umax = max(abs(rows[-1][3]), abs(rows[-1][4]), 1e-12)
        dt = min(opts.cfl * state.dx / umax, opts.slope_cfl / max(abs(m1), abs(m2), 1e-12),
                 opts.t_max - state.time)
        try:
            state = step(state, dt, symbol)
        except NonFiniteState as exc:
            raise ResolutionLossError(f"{exc}; increase n (currently {opts.n})",
                                      np.array(rows, dtype=float)) from None
        rows.append(_row(state, np.fft.rfft(state.samples), kappa))
        m1 = rows[-1][1]
        if m1 <= -opts.break_slope and len(rows) >= 3:
            tail = np.array(rows[-3:])
            t_star = _extrapolated_zero(tail[:, 0], 1.0 / np.abs(tail[:, 1]))
            if t_star <= opts.t_max:
                return report(float(t_star), "breaking")
        if rows[-1][5] > opts.tail_limit:
            raise ResolutionLossError(
                f"spectral tail fraction {rows[-1][5]:.3g} > {opts.tail_limit:g} at t = {state.time:.6g} "
                f"with m1 = {m1:.4g}; increase n (currently {opts.n})", np.array(rows, dtype=float))
    return report(None, "horizon")


def validate_bound(report, tol=0.05):
    """True iff the observed breaking time respects ``T <= -2/G`` up to ``1 + tol``."""
    if report.verdict is None or not report.verdict.in_omega:
        raise UsageError("bound validation needs an initial slope pair inside the breaking region")
    if report.t_break_observed is None:
        raise UsageError("report has no observed breaking time")
    return bool(report.t_break_observed <= report.verdict.time_bound * (1.0 + tol))
