"""Smooth, even, decreasing, integrable kernels with ``K(0) = 1``.

Each kernel carries its real-space form and its continuous Fourier symbol
``K^(k) = int K(x) exp(-i k x) dx``, which is what multiplies ``i k u^`` in
the convolution term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import ConfigError

TAIL_TOL = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    kind: str  # "gaussian" (width = sigma) or "sech2" (width = lambda)
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "sech2"):
            raise ConfigError(f"unknown kernel kind {self.kind!r}; use 'gaussian' or 'sech2'")
        if not (math.isfinite(self.width) and self.width > 0):
            raise ConfigError(f"kernel width must be positive, got {self.width}")

    @property
    def k0(self):
        return 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            return np.exp(-0.5 * (x / self.width) ** 2)
        return 1.0 / np.cosh(np.minimum(np.abs(x / self.width), 350.0)) ** 2

    def symbol(self, kappa):
        kappa = np.asarray(kappa, dtype=float)
        s = self.width
        if self.kind == "gaussian":
            return s * math.sqrt(2.0 * math.pi) * np.exp(-0.5 * (s * kappa) ** 2)
        # pi s^2 k / sinh(pi s k / 2) = 2 s * q / sinh(q), q = pi s |k| / 2
        q = 0.5 * math.pi * s * np.abs(kappa)
        with np.errstate(over="ignore", invalid="ignore"):
            ratio = np.where(q < 1e-4, 1.0 - q * q / 6.0,
                             2.0 * q * np.exp(-q) / -np.expm1(-2.0 * np.maximum(q, 1e-4)))
        return 2.0 * s * ratio

    def min_period(self, tail=TAIL_TOL):
        """Smallest period ``L`` with ``K(L/2) <= tail``."""
        if self.kind == "gaussian":
            return 2.0 * self.width * math.sqrt(2.0 * math.log(1.0 / tail))
        half = optimize.brentq(lambda x: math.log(self(x)) - math.log(tail), 0.0, 100.0 * self.width)
        return 2.0 * half

    def normalization(self):
        """``(1/2pi) int symbol`` by adaptive quadrature; equals ``K(0) = 1``."""
        val, _ = integrate.quad(lambda k: float(self.symbol(k)), 0.0, np.inf, epsabs=1e-14, epsrel=1e-13,
                                limit=200)
        return 2.0 * val / (2.0 * math.pi)

    def describe(self):
        return {"kind": self.kind, "width": self.width}


def gaussian(sigma=1.0):
    return KernelSpec("gaussian", sigma)


def sech2(lam=1.0):
    return KernelSpec("sech2", lam)
