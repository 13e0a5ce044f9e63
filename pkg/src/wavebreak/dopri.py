"""Dormand-Prince 5(4) stepping for a batch of independent initial values.

Every row of the state array carries its own time and step size, so a whole
grid of planar initial conditions advances together in one numpy sweep per
attempted step.  Rows are retired by the caller (blow-up, convergence,
domain exit) or by reaching ``t_end``.
"""
import numpy as np

from .errors import IntegrationError

# Butcher tableau (Dormand & Prince 1980)
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
EPS = np.finfo(float).eps


def _rms(x):
    return np.sqrt(np.mean(x * x, axis=-1))


class DormandPrince:
    """Adaptive explicit stepper over rows of ``y0`` (shape ``(n, dim)``).

    ``fun(t, y)`` receives a time vector of shape ``(m,)`` and states of
    shape ``(m, dim)`` for the currently stepping rows and must return the
    derivative with the shape of ``y``.  ``tstops`` are times every row must
    land on exactly (output samples, forcing discontinuities).  With
    ``row_aware`` the row indices are passed as a third argument, for
    right-hand sides that differ between rows.
    """

    def __init__(self, fun, t0, y0, t_end, rtol=1e-8, atol=1e-10, tstops=None,
                 max_step=np.inf, h0=None, row_aware=False):
        self.fun = fun if row_aware else (lambda t, y, rows: fun(t, y))
        self.y = np.array(y0, dtype=float, ndmin=2)
        n = self.y.shape[0]
        self.t = np.full(n, float(t0))
        self.t_end = float(t_end)
        self.rtol, self.atol = rtol, atol
        self.max_step = max_step
        stops = np.unique(np.append(np.asarray(tstops if tstops is not None else [], float), self.t_end))
        self.stops = stops[stops > t0]
        self.next_stop = np.zeros(n, dtype=int)
        self.active = np.ones(n, dtype=bool)
        self.failed = np.zeros(n, dtype=bool)
        self.nsteps = np.zeros(n, dtype=int)
        self._all = np.arange(n)
        self.f = np.asarray(self.fun(self.t, self.y, self._all), dtype=float)
        self.h = self._initial_step() if h0 is None else np.full(n, float(h0))

    def _initial_step(self):
        # Hairer, Norsett & Wanner, Solving ODEs I, sec. II.4
        scale = self.atol + self.rtol * np.abs(self.y)
        d0 = _rms(self.y / scale)
        d1 = _rms(self.f / scale)
        with np.errstate(divide="ignore", invalid="ignore"):
            h0 = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / d1)
        h0 = np.minimum(h0, self.t_end - self.t)
        y1 = self.y + h0[:, None] * self.f
        f1 = np.asarray(self.fun(self.t + h0, y1, self._all), dtype=float)
        d2 = _rms((f1 - self.f) / scale) / h0
        dm = np.maximum(d1, d2)
        with np.errstate(divide="ignore"):
            h1 = np.where(dm <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / dm) ** 0.2)
        return np.minimum(np.minimum(100 * h0, h1), self.max_step)

    def deactivate(self, rows):
        self.active[rows] = False

    def step(self):
        """Attempt one step on all active rows; return the rows that advanced."""
        idx = np.flatnonzero(self.active)
        if idx.size == 0:
            return idx
        t, y, f = self.t[idx], self.y[idx], self.f[idx]
        stop_i = np.minimum(self.next_stop[idx], self.stops.size - 1)
        target = self.stops[stop_i]
        h = np.minimum(self.h[idx], self.max_step)
        land = t + h >= target - 4 * EPS * np.maximum(1.0, np.abs(target))
        h = np.where(land, target - t, h)

        k = [f]
        for s in range(1, 7):
            ys = y + h[:, None] * sum(a * kk for a, kk in zip(A[s], k) if a != 0.0)
            k.append(np.asarray(self.fun(t + C[s] * h, ys, idx), dtype=float))
        y_new = y + h[:, None] * sum(b * kk for b, kk in zip(B, k) if b != 0.0)
        err_vec = h[:, None] * sum(e * kk for e, kk in zip(E, k) if e != 0.0)
        scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
        with np.errstate(invalid="ignore", over="ignore"):
            err = _rms(err_vec / scale)
        finite = np.all(np.isfinite(y_new), axis=1) & np.isfinite(err)
        err = np.where(finite, err, np.inf)
        accept = err <= 1.0

        with np.errstate(divide="ignore"):
            factor = np.where(err == 0.0, MAX_FACTOR, SAFETY * err ** -0.2)
        factor = np.clip(factor, MIN_FACTOR, MAX_FACTOR)
        factor = np.where(accept, factor, np.minimum(factor, 1.0))
        # a step shortened to land on a stop should not shrink the next proposal
        self.h[idx] = np.where(land & accept, np.maximum(h * factor, self.h[idx]), h * factor)

        acc = idx[accept]
        t_acc = np.where(land[accept], target[accept], t[accept] + h[accept])
        self.t[acc] = t_acc
        self.y[acc] = y_new[accept]
        self.f[acc] = k[6][accept]
        self.nsteps[acc] += 1
        self.next_stop[acc] += land[accept]

        done = acc[self.t[acc] >= self.t_end]
        self.active[done] = False

        rej = idx[~accept]
        tiny = self.h[rej] < 16 * EPS * np.maximum(1.0, np.abs(self.t[rej]))
        if tiny.any():
            bad = rej[tiny]
            self.failed[bad] = True
            self.active[bad] = False
        return acc


def integrate(fun, t0, y0, t_end, rtol=1e-8, atol=1e-10, tstops=None, max_steps=1_000_000,
              stop=None, max_step=np.inf):
    """Integrate a single initial value, recording every accepted step.

    ``stop(t, y_history)`` may return a truthy value to end integration after
    an accepted step; that value is returned as the third item.  Raises
    :class:`IntegrationError` on step-size underflow.
    """
    solver = DormandPrince(fun, t0, np.atleast_2d(y0), t_end, rtol, atol, tstops, max_step)
    ts = [float(t0)]
    ys = [solver.y[0].copy()]
    reason = None
    while solver.active[0]:
        if solver.nsteps[0] >= max_steps:
            raise IntegrationError("step budget exhausted", (np.array(ts), np.array(ys)))
        acc = solver.step()
        if acc.size:
            ts.append(float(solver.t[0]))
            ys.append(solver.y[0].copy())
            if stop is not None:
                reason = stop(ts, ys)
                if reason:
                    break
    if solver.failed[0]:
        raise IntegrationError(f"step size underflow at t = {solver.t[0]:.6g}",
                               (np.array(ts), np.array(ys)))
    return np.array(ts), np.array(ys), reason
