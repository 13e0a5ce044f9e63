"""Closed-form breaking threshold for the extremum dynamics.

The state of the reduced dynamics is the pair ``(m1, m2)`` of the spatial
infimum and supremum of the slope ``u_x``.  With ``z = m2 - m1`` and
``v = m1 + m2`` the threshold function is

    G(m1, m2) = v + S(z),   S(z) = sgn(4 - z) * sqrt(W(z)),
    W(z) = z**2 - 4 z ln(z/4) - 4 z,

and the breaking region is ``{G < 0}`` in the second quadrant.  Its boundary
``G = 0`` is the stable manifold of the saddle ``(-2, 2)`` of

    m1' = -m1**2 + m2 - m1,   m2' = -m2**2 + m2 - m1.

All functions are vectorised over numpy arrays; scalar input gives a float.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, ParameterError

SADDLE = (-2.0, 2.0)
X_INTERCEPT = -4.0 / math.e
K_SADDLE = 1.0 - math.log(4.0)
C_SADDLE = 4.0 * K_SADDLE

ROOT_TOL = 1e-10
IDENTITY_TOL = 1e-12


class PhasePoint(NamedTuple):
    """A pair ``(m1, m2) = (inf u_x, sup u_x)``.

    The plain constructor does no checking so that math tests can probe
    any point; use :meth:`physical` for data that must lie in the second
    quadrant.
    """

    m1: float
    m2: float

    @classmethod
    def physical(cls, m1, m2):
        m1, m2 = float(m1), float(m2)
        if not (m1 <= 0.0 <= m2):
            raise DomainError(f"({m1}, {m2}) is not in the second quadrant m1 <= 0 <= m2")
        if not m2 > m1:
            raise DomainError("m2 - m1 must be positive")
        return cls(m1, m2)


@dataclass(frozen=True)
class ThresholdVerdict:
    point: PhasePoint
    g_value: float
    in_omega: bool
    seliger_holds: bool
    time_bound: float  # +inf when g_value >= 0


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def _log1p_minus(e):
    """``log(1 + e) - e`` without cancellation for small ``|e|``."""
    e = np.asarray(e, dtype=float)
    small = np.abs(e) < 0.25
    es = np.where(small, e, 0.0)
    # Horner on sum_{k>=2} (-1)^(k+1) e^k / k, 30 terms reach double precision at |e| = 1/4
    acc = np.zeros_like(es)
    for k in range(31, 1, -1):
        acc = es * acc + (-1.0) ** (k + 1) / k
    series = acc * es * es
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = np.log1p(e) - e
    return np.where(small, series, direct)


def eval_W(z):
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise DomainError("W(z) needs z > 0")
    # near the double root z = 4 use -4z (ln(1+e) - e), e = z/4 - 1, which vanishes exactly there
    e = z / 4.0 - 1.0
    near = np.abs(e) < 0.25
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = z * (z - 4.0 * np.log(z / 4.0) - 4.0)
    return _scalar_or_array(np.where(near, -4.0 * z * _log1p_minus(np.where(near, e, 0.0)), direct))


def eval_S(z):
    z = np.asarray(z, dtype=float)
    w = np.maximum(eval_W(z), 0.0)  # clip rounding noise around z = 4
    return _scalar_or_array(np.sign(4.0 - z) * np.sqrt(w))


def eval_S_prime(z):
    """Derivative ``S'(z) = W'(z) / (2 S(z))``, with its limit ``-1/sqrt(2)`` at z = 4."""
    z = np.asarray(z, dtype=float)
    s = np.asarray(eval_S(z))
    e = z / 4.0 - 1.0
    wp = 4.0 * e - 4.0 * _log1p_minus(e)  # 2z - 4 ln(z/4) - 8
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(s != 0.0, wp / (2.0 * s), -1.0 / math.sqrt(2.0))
    return _scalar_or_array(out)


def eval_G(m1, m2):
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    if np.any(~(m2 > m1)):
        raise DomainError("G(m1, m2) needs m2 > m1")
    return _scalar_or_array(m1 + m2 + np.asarray(eval_S(m2 - m1)))


def seliger_holds(m1, m2, k0=1.0):
    """Classical half-plane criterion ``m1 + m2 <= -2 K(0)``."""
    return _scalar_or_array(np.asarray(m1) + np.asarray(m2) <= -2.0 * k0)


def classify(m1, m2):
    p = PhasePoint.physical(m1, m2)
    g = eval_G(p.m1, p.m2)
    inside = bool(g < 0.0 and p.m1 < 0.0 and p.m2 >= 0.0)
    return ThresholdVerdict(
        point=p,
        g_value=g,
        in_omega=inside,
        seliger_holds=bool(seliger_holds(p.m1, p.m2)),
        time_bound=-2.0 / g if inside else math.inf,
    )


def breaking_time_bound(m1, m2, k0=1.0):
    """Upper bound on the breaking time for a kernel with ``K(0) = k0``.

    The substitution ``m = k0 * mu``, ``t = tau / k0`` maps the general
    extremum inequalities onto the normalised ones, so the bound of the
    normalised problem is evaluated at ``(m1/k0, m2/k0)`` and divided by k0.
    """
    if not k0 > 0:
        raise ParameterError(f"K(0) must be positive, got {k0}")
    v = classify(m1 / k0, m2 / k0)
    if not v.in_omega:
        return math.inf
    return -2.0 / (k0 * v.g_value)


def first_integral_level(m1, m2):
    """Level ``m1 m2 / (m1 - m2) - ln(m2 - m1)``, constant on trajectories.

    It equals ``1 - ln 4`` exactly on the level set through the saddle.
    """
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    if np.any(~(m2 > m1)):
        raise DomainError("first integral needs m2 > m1")
    return _scalar_or_array(m1 * m2 / (m1 - m2) - np.log(m2 - m1))


def first_integral_residual(m1, m2):
    """``m1 m2 - (m1 - m2)(ln(m2 - m1) + 1 - ln 4)``: zero on the saddle's level set.

    Off that level set the residual is ``(m1 - m2) * (level - K_SADDLE)`` and
    varies along a trajectory; use :func:`first_integral_level` to test
    conservation.
    """
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    if np.any(~(m2 > m1)):
        raise DomainError("first integral needs m2 > m1")
    return _scalar_or_array(m1 * m2 - (m1 - m2) * (np.log(m2 - m1) + K_SADDLE))


def separatrix_y(x, tol=ROOT_TOL, max_iter=400):
    """Height of the separatrix ``G(x, y) = 0`` above ``x <= -4/e``.

    G is nondecreasing in y there, so the root is isolated by bisection on
    ``[max(0, -x - 4), |x| e^4]``, the upper end doubled until it brackets.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if np.any(~(x <= X_INTERCEPT)):
        raise DomainError("separatrix_y needs x <= -4/e")

    lo = np.maximum(0.0, -x - 4.0)
    lo = np.where(eval_G(x, lo) > 0.0, 0.0, lo)
    hi = np.abs(x) * math.e**4
    for _ in range(200):
        short = eval_G(x, hi) < 0.0
        if not short.any():
            break
        hi = np.where(short, 2.0 * hi + 1.0, hi)
    else:
        raise DomainError("could not bracket the separatrix")

    done = np.abs(eval_G(x, lo)) <= tol * 1e-2  # the intercept itself
    y0 = lo.copy()
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        g = eval_G(x, mid)
        neg = g < 0.0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
        if np.all((hi - lo <= 4.0 * np.finfo(float).eps * np.maximum(hi, 1.0)) | done):
            break
    y = np.where(done, y0, 0.5 * (lo + hi))
    return float(y[0]) if scalar else y
