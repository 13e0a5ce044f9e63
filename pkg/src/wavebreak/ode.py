"""Auxiliary extremum dynamics: equality system, slack-perturbed inequality
system, equilibria, stable-manifold tracing and blow-up classification grids.

The planar field is

    F(x, y) = -x**2 + y - x,    H(x, y) = -y**2 + y - x,

with ``x = m1`` and ``y = m2``.  The inequality system is realised as
``x' = F - a(t)``, ``y' = H - b(t)`` for nonnegative slack functions.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dopri import DormandPrince, integrate
from .errors import DomainError, IntegrationError
from .threshold import X_INTERCEPT, PhasePoint, eval_G, separatrix_y


class Outcome(enum.Enum):
    BLOW_UP = "blow-up"
    CONVERGED = "converged-to-origin"
    DOMAIN_EXIT = "domain-exit"
    HORIZON = "horizon-reached"
    FAILED = "integration-failure"


_CODES = list(Outcome)


@dataclass(frozen=True)
class IntegrationOptions:
    rtol: float = 1e-10
    atol: float = 1e-12
    t_max: float = 1e5
    blowup: float = 1e6
    origin_tol: float = 1e-4
    max_steps: int = 200_000
    # record only at multiples of sample_dt (plus the final point) when set
    sample_dt: float | None = None


SWEEP_OPTIONS = IntegrationOptions(rtol=1e-8, atol=1e-10)


def vector_field(x, y, k0=1.0):
    """``(F, H)`` for a kernel with ``K(0) = k0`` (``k0 = 1`` is the normalised field)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return -x * x + k0 * (y - x), -y * y + k0 * (y - x)


def rhs_equality(p, k0=1.0):
    f, h = vector_field(p[0], p[1], k0)
    return float(f), float(h)


def jacobian(x, y):
    return np.array([[-2.0 * x - 1.0, 1.0], [-1.0, -2.0 * y + 1.0]])


@dataclass(frozen=True)
class EquilibriumReport:
    location: PhasePoint
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    classification: str  # "hyperbolic-saddle", "degenerate" or "other"


def _classify_equilibrium(eig, tol=1e-12):
    if np.all(np.abs(eig.imag) <= tol):
        lo, hi = np.sort(eig.real)
        if lo < -tol and hi > tol:
            return "hyperbolic-saddle"
    if np.any(np.abs(eig) <= tol):
        return "degenerate"
    return "other"


def analyze_equilibria():
    """The two equilibria ``(-2, 2)`` and ``(0, 0)`` with their linearisations."""
    reports = []
    for x, y in [(-2.0, 2.0), (0.0, 0.0)]:
        jac = jacobian(x, y)
        eig = np.linalg.eigvals(jac).astype(complex)
        reports.append(EquilibriumReport(PhasePoint(x, y), jac, eig, _classify_equilibrium(eig)))
    return reports


@dataclass(frozen=True)
class SlackPair:
    """Nonnegative forcing ``(a(t), b(t))`` turning the inequalities into equations.

    ``breakpoints`` lists the times where either function is discontinuous;
    the integrator lands on them exactly.
    """

    a: object
    b: object
    breakpoints: tuple = ()
    label: str = "custom"
    # (edges, a_levels, b_levels) for piecewise-constant slack; enables batched evaluation
    table: tuple | None = field(default=None, compare=False, repr=False)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.maximum(self.a(t), 0.0), np.maximum(self.b(t), 0.0)

    @classmethod
    def zero(cls):
        return cls.constant(0.0, 0.0)

    @classmethod
    def constant(cls, a, b):
        if a < 0 or b < 0:
            raise DomainError("slack values must be nonnegative")
        return cls(lambda t: np.full(np.shape(t), float(a)), lambda t: np.full(np.shape(t), float(b)),
                   label=f"constant(a={a}, b={b})")

    @classmethod
    def piecewise_random(cls, seed, t_end=1.0, pieces=16, high=2.0):
        """Independent uniform ``[0, high]`` levels on ``pieces`` equal intervals."""
        rng = np.random.default_rng(seed)
        edges = np.linspace(0.0, t_end, pieces + 1)
        av = rng.uniform(0.0, high, pieces)
        bv = rng.uniform(0.0, high, pieces)

        def lookup(levels):
            def f(t):
                i = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, pieces - 1)
                return levels[i]
            return f

        return cls(lookup(av), lookup(bv), tuple(edges[1:-1]), label=f"piecewise(seed={seed})",
                   table=(edges, av, bv))

    @classmethod
    def sinusoidal(cls, amplitude, omega, phase=0.0, offset=0.0):
        """``max(0, offset + amplitude sin(omega t + phase))`` on both channels, b shifted by a quarter period."""
        def a(t):
            return offset + amplitude * np.sin(omega * t + phase)

        def b(t):
            return offset + amplitude * np.cos(omega * t + phase)

        return cls(a, b, label=f"sinusoidal(A={amplitude}, w={omega})")


class SlackBatch:
    """One slack pair per row of a batch integration."""

    def __init__(self, slacks):
        self.slacks = list(slacks)
        self.breakpoints = tuple(sorted({b for s in self.slacks for b in s.breakpoints}))
        tables = [s.table for s in self.slacks]
        self._stacked = None
        if all(t is not None for t in tables) and all(np.array_equal(t[0], tables[0][0]) for t in tables):
            self._edges = tables[0][0]
            self._stacked = (np.array([t[1] for t in tables]), np.array([t[2] for t in tables]))

    def __len__(self):
        return len(self.slacks)

    def __call__(self, t, rows):
        if self._stacked is not None:
            i = np.clip(np.searchsorted(self._edges, t, side="right") - 1, 0, len(self._edges) - 2)
            return self._stacked[0][rows, i], self._stacked[1][rows, i]
        ab = np.array([self.slacks[r](tt) for r, tt in zip(rows, t)], dtype=float).reshape(len(rows), 2)
        return ab[:, 0], ab[:, 1]


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    points: np.ndarray  # shape (n, 2): columns m1, m2
    outcome: Outcome
    t_event: float | None = None
    steps: int = 0
    extras: dict = field(default_factory=dict, compare=False)

    @property
    def m1(self):
        return self.points[:, 0]

    @property
    def m2(self):
        return self.points[:, 1]

    @property
    def g(self):
        """Threshold function along the trajectory (NaN where ``m2 <= m1``)."""
        out = np.full(len(self.times), np.nan)
        ok = self.m2 > self.m1
        out[ok] = eval_G(self.m1[ok], self.m2[ok])
        return out

    @property
    def separatrix_distance(self):
        """``V = m2 - g(m1)`` with ``g`` the separatrix height; NaN off ``-50 <= m1 <= -4/e``."""
        out = np.full(len(self.times), np.nan)
        ok = (self.m1 <= X_INTERCEPT) & (self.m1 >= -50.0)
        if ok.any():
            out[ok] = self.m2[ok] - separatrix_y(self.m1[ok])
        return out


def _blowup_time(ht, hr):
    """Zero of the least-squares line through three ``(t, 1/|m1|)`` samples (row-wise)."""
    tm = ht.mean(axis=1, keepdims=True)
    rm = hr.mean(axis=1, keepdims=True)
    slope = np.sum((ht - tm) * (hr - rm), axis=1) / np.sum((ht - tm) ** 2, axis=1)
    est = tm[:, 0] - rm[:, 0] / slope
    return np.where(slope < 0, est, ht[:, -1])


def _make_rhs(slack):
    if isinstance(slack, SlackBatch):
        def fun(t, y, rows):
            f, h = vector_field(y[:, 0], y[:, 1])
            a, b = slack(t, rows)
            return np.stack([f - a, h - b], axis=1)
        return fun
    if slack is None:
        def fun(t, y):
            f, h = vector_field(y[:, 0], y[:, 1])
            return np.stack([f, h], axis=1)
    else:
        def fun(t, y):
            f, h = vector_field(y[:, 0], y[:, 1])
            a, b = slack(t)
            return np.stack([f - a, h - b], axis=1)
    return fun


def _drive(y0, opts, slack=None, inequality=False, record=False):
    """Integrate a batch of starts until each one reaches an outcome."""
    y0 = np.array(y0, dtype=float, ndmin=2)
    n = len(y0)
    tstops = []
    if slack is not None:
        tstops.extend(slack.breakpoints)
    sample_stops = None
    if opts.sample_dt:
        nsamp = int(math.floor(opts.t_max / opts.sample_dt))
        sample_stops = opts.sample_dt * np.arange(1, nsamp + 1)
        tstops.extend(sample_stops)
    solver = DormandPrince(_make_rhs(slack), 0.0, y0, opts.t_max, opts.rtol, opts.atol,
                           tstops=tstops or None, row_aware=isinstance(slack, SlackBatch))

    codes = np.full(n, _CODES.index(Outcome.HORIZON))
    t_event = np.full(n, np.nan)
    with np.errstate(divide="ignore"):
        r0 = 1.0 / np.abs(y0[:, 0])
    hist_t = np.tile([np.nan, np.nan, 0.0], (n, 1))
    hist_r = np.column_stack([np.full(n, np.nan), np.full(n, np.nan), r0])
    prev = y0.copy()
    rec_t = [[0.0] for _ in range(n)] if record else None
    rec_y = [[y0[i].copy()] for i in range(n)] if record else None
    sample_set = set(sample_stops.tolist()) if sample_stops is not None else None

    while solver.active.any():
        over = solver.active & (solver.nsteps >= opts.max_steps)
        if over.any():
            solver.failed[over] = True
            solver.deactivate(over)
        acc = solver.step()
        if acc.size == 0:
            continue
        t = solver.t[acc]
        y = solver.y[acc]
        hist_t[acc] = np.column_stack([hist_t[acc, 1], hist_t[acc, 2], t])
        hist_r[acc] = np.column_stack([hist_r[acc, 1], hist_r[acc, 2], 1.0 / np.abs(y[:, 0])])

        blow = y[:, 0] <= -opts.blowup
        shrinking = (np.abs(y[:, 0]) <= np.abs(prev[acc, 0])) & (np.abs(y[:, 1]) <= np.abs(prev[acc, 1]))
        conv = ~blow & shrinking & (np.hypot(y[:, 0], y[:, 1]) <= opts.origin_tol)
        if inequality:
            leave = ~blow & ~conv & ((y[:, 1] < 0.0) | (y[:, 1] - y[:, 0] <= -X_INTERCEPT))
        else:
            leave = np.zeros_like(blow)
        prev[acc] = y

        if blow.any():
            rows = acc[blow]
            codes[rows] = _CODES.index(Outcome.BLOW_UP)
            t_event[rows] = _blowup_time(hist_t[rows], hist_r[rows])
        for mask, kind in ((conv, Outcome.CONVERGED), (leave, Outcome.DOMAIN_EXIT)):
            if mask.any():
                codes[acc[mask]] = _CODES.index(kind)
                t_event[acc[mask]] = t[mask]
        finished = blow | conv | leave
        solver.deactivate(acc[finished])

        if record:
            for j, i in enumerate(acc):
                if sample_set is None or finished[j] or t[j] in sample_set or not solver.active[i]:
                    rec_t[i].append(float(t[j]))
                    rec_y[i].append(y[j].copy())

    codes[solver.failed] = _CODES.index(Outcome.FAILED)
    return codes, t_event, solver, rec_t, rec_y


def _trajectory(i, codes, t_event, solver, rt, ry):
    times, points = np.array(rt[i]), np.array(ry[i])
    outcome = _CODES[codes[i]]
    te = None if outcome in (Outcome.HORIZON, Outcome.FAILED) else float(t_event[i])
    return Trajectory(times, points, outcome, te, int(solver.nsteps[i]))


def _single(p0, opts, slack, inequality):
    p0 = PhasePoint.physical(*p0)
    traj = _trajectory(0, *_drive([p0], opts, slack, inequality, record=True))
    if traj.outcome is Outcome.FAILED:
        raise IntegrationError(f"integration failed at t = {traj.times[-1]:.6g} before reaching an outcome",
                               traj)
    return traj


def integrate_equality(p0, opts=None):
    """Integrate the equality system from ``p0`` until blow-up, convergence or the horizon."""
    return _single(p0, opts or IntegrationOptions(), None, inequality=False)


def integrate_inequality(p0, slack, opts=None):
    """Integrate ``x' = F - a(t)``, ``y' = H - b(t)``.

    Stops with ``DOMAIN_EXIT`` once ``y < 0`` or ``y - x <= 4/e``; the
    breaking-region results are only claimed inside that domain.
    """
    return _single(p0, opts or IntegrationOptions(), slack, inequality=True)


def integrate_inequality_batch(points, slacks, opts=None):
    """Batched :func:`integrate_inequality`, one slack pair per start.

    Failed rows come back with outcome ``FAILED`` instead of raising.
    """
    pts = [PhasePoint.physical(*p) for p in points]
    if len(slacks) != len(pts):
        raise DomainError("need one slack pair per start")
    res = _drive(pts, opts or IntegrationOptions(), SlackBatch(slacks), inequality=True, record=True)
    return [_trajectory(i, *res) for i in range(len(pts))]


def integrate_equality_batch(points, opts=None):
    """Batched :func:`integrate_equality`; failed rows carry outcome ``FAILED``."""
    pts = [PhasePoint.physical(*p) for p in points]
    res = _drive(pts, opts or IntegrationOptions(), None, inequality=False, record=True)
    return [_trajectory(i, *res) for i in range(len(pts))]


@dataclass(frozen=True)
class StableManifold:
    upper: np.ndarray  # (n, 2), arc-length samples heading to m1 -> -inf
    lower: np.ndarray  # (n, 2), ends on the m1 axis at the x-intercept


def stable_eigenvector():
    jac = jacobian(-2.0, 2.0)
    lam, vec = np.linalg.eig(jac)
    v = vec[:, np.argmin(lam.real)].real
    return v / np.linalg.norm(v)


def trace_stable_manifold(arc_length, step, eps=1e-6, rtol=1e-12, atol=1e-14):
    """Both branches of the saddle's stable manifold, sampled every ``step`` of arc length.

    Integrates the reversed, unit-speed field ``-f/|f|`` from
    ``(-2, 2) +- eps * v_stable``; the lower branch is cut where it meets
    ``m2 = 0``.
    """
    if not (arc_length > 0 and step > 0):
        raise DomainError("arc_length and step must be positive")
    v = stable_eigenvector()
    if v[1] > 0:
        v = -v  # +v now points down towards the m1 axis

    def fun(s, y):
        f, h = vector_field(y[:, 0], y[:, 1])
        norm = np.hypot(f, h)
        return -np.stack([f, h], axis=1) / norm[:, None]

    stops = step * np.arange(1, int(math.floor(arc_length / step)) + 1)
    branches = {}
    for name, sign in (("lower", 1.0), ("upper", -1.0)):
        start = np.array([-2.0, 2.0]) + sign * eps * v

        def stop(ts, ys, name=name):
            return name == "lower" and ys[-1][1] < 0.0

        ts, ys, hit = integrate(fun, 0.0, start, arc_length, rtol=rtol, atol=atol, tstops=stops,
                                stop=stop, max_step=step)
        keep = np.isin(ts, stops)
        keep[0] = True
        pts = ys[keep]
        if hit:
            end = _land_on_axis(fun, ys[-2], ys[-1], rtol, atol)
            pts = np.vstack([pts[pts[:, 1] >= 0.0], end])
        branches[name] = pts
    return StableManifold(upper=branches["upper"], lower=branches["lower"])


def _land_on_axis(fun, before, after, rtol, atol, iters=8):
    """Point where the traced curve meets ``m2 = 0``, by Newton on the arc length from ``before``."""
    before = np.asarray(before, dtype=float)
    ds = before[1] / (before[1] - after[1]) * np.linalg.norm(after - before)
    p = before
    for _ in range(iters):
        _, ys, _ = integrate(fun, 0.0, before, ds, rtol=rtol, atol=atol)
        p = ys[-1]
        dyds = fun(np.zeros(1), p[None, :])[0, 1]
        corr = p[1] / dyds
        ds -= corr
        if abs(corr) < 1e-15:
            break
    return np.array([p[0], 0.0]) if abs(p[1]) < 1e-12 else p


@dataclass(frozen=True)
class ClassificationMap:
    xs: np.ndarray
    ys: np.ndarray
    outcome: np.ndarray  # (ny, nx) array of Outcome
    g: np.ndarray  # (ny, nx)
    t_event: np.ndarray  # (ny, nx), NaN when no event
    band: float

    @property
    def blowup(self):
        return np.vectorize(lambda o: o is Outcome.BLOW_UP, otypes=[bool])(self.outcome)

    def stats(self):
        outside = np.abs(self.g) > self.band
        agree = self.blowup == (self.g < 0)
        failed = np.vectorize(lambda o: o is Outcome.FAILED, otypes=[bool])(self.outcome)
        n_cmp = int(outside.sum())
        n_agree = int((agree & outside).sum())
        return {
            "cells": int(self.g.size),
            "compared": n_cmp,
            "agreeing": n_agree,
            "agreement": n_agree / n_cmp if n_cmp else 1.0,
            "in_band": int((~outside).sum()),
            "failed": int(failed.sum()),
        }

    def nearest(self, m1, m2):
        i = int(np.argmin(np.abs(self.ys - m2)))
        j = int(np.argmin(np.abs(self.xs - m1)))
        return self.outcome[i, j]


def _classify_chunk(points, opts):
    codes, t_event, _, _, _ = _drive(points, opts)
    return codes, t_event


def classify_grid(x_range, y_range, nx, ny, opts=SWEEP_OPTIONS, band=0.05, workers=1):
    """Run the equality system from every node of an ``nx`` by ``ny`` grid.

    The BlowUp-versus-G<0 agreement is reported through
    :meth:`ClassificationMap.stats`; cells with ``|G| <= band`` straddle the
    separatrix and are excluded from it.
    """
    if nx < 2 or ny < 2:
        raise DomainError("grid needs at least 2 nodes per axis")
    xs = np.linspace(*x_range, nx)
    ys = np.linspace(*y_range, ny)
    if xs.max() > 0 or ys.min() < 0:
        raise DomainError("grid must lie in the second quadrant")
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    if workers <= 1:
        codes, t_event = _classify_chunk(pts, opts)
    else:
        chunks = np.array_split(pts, workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_classify_chunk, chunks, [opts] * len(chunks)))
        codes = np.concatenate([p[0] for p in parts])
        t_event = np.concatenate([p[1] for p in parts])
    outcome = np.array([_CODES[c] for c in codes], dtype=object).reshape(X.shape)
    return ClassificationMap(xs, ys, outcome, eval_G(X, Y), t_event.reshape(X.shape), band)


def sweep_options(tol=None):
    return SWEEP_OPTIONS if tol is None else replace(SWEEP_OPTIONS, rtol=tol, atol=tol * 1e-2)
