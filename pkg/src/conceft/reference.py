"""Orthonormal reference families: Hermite windows and generalized Morse wavelets.

Hermite windows live in the time domain (seconds); Morse wavelets are
stored as real frequency profiles, evaluated on demand at any frequency
since the CWT needs them at ``a * xi`` for every scale ``a``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import eval_genlaguerre, gammaln

GRAM_TOL = 1e-6
TAIL_TOL = 1e-12


class ConstructionError(ValueError):
    pass


class FamilyKind(str, enum.Enum):
    HERMITE = "hermite"
    MORSE = "morse"


def hermite_functions(J: int, x: np.ndarray):
    """Orthonormal Hermite functions h_0..h_{J-1} and their derivatives at ``x``.

    Uses the stable three-term recurrence; derivatives follow from
    ``h_n' = sqrt(n/2) h_{n-1} - sqrt((n+1)/2) h_{n+1}``.
    """
    x = np.asarray(x, dtype=float)
    h = np.zeros((J + 1,) + x.shape)
    h[0] = np.pi ** -0.25 * np.exp(-x ** 2 / 2)
    if J >= 1:
        h[1] = np.sqrt(2.0) * x * h[0]
    for n in range(1, J):
        h[n + 1] = np.sqrt(2.0 / (n + 1)) * x * h[n] - np.sqrt(n / (n + 1)) * h[n - 1]
    dh = np.empty((J,) + x.shape)
    for n in range(J):
        lower = np.sqrt(n / 2) * h[n - 1] if n > 0 else 0.0
        dh[n] = lower - np.sqrt((n + 1) / 2) * h[n + 1]
    return h[:J], dh


@dataclass(frozen=True)
class ReferenceFamily:
    """J orthonormal tapers plus derivative tapers.

    For ``HERMITE`` the tapers are sampled on ``grid`` (seconds). For
    ``MORSE`` they are sampled on the frequency grid ``grid`` (in units where
    the order-0 peak is at 1) and can be re-evaluated exactly with
    :meth:`profile`.
    """
    kind: FamilyKind
    J: int
    params: dict
    grid: np.ndarray
    tapers: np.ndarray
    d_tapers: np.ndarray

    @property
    def spacing(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def gram(self) -> np.ndarray:
        return self.tapers @ self.tapers.T * self.spacing

    def profile(self, xi: np.ndarray, orders=None) -> np.ndarray:
        """Morse frequency profiles ``psi_hat_k(xi)``, shape (len(orders), *xi.shape)."""
        if self.kind is not FamilyKind.MORSE:
            raise TypeError("profile() is defined for Morse families only")
        orders = range(self.J) if orders is None else orders
        return np.array([_morse_profile(k, self.params["beta"], self.params["gamma"], xi)
                         for k in orders])

    def window(self, t: np.ndarray, orders=None, derivative: bool = False) -> np.ndarray:
        """Hermite windows (or their time derivatives) at times ``t`` in seconds."""
        if self.kind is not FamilyKind.HERMITE:
            raise TypeError("window() is defined for Hermite families only")
        sigma = self.params["sigma"]
        h, dh = hermite_functions(self.J, np.asarray(t) / sigma)
        out = dh / sigma ** 1.5 if derivative else h / np.sqrt(sigma)
        return out if orders is None else out[list(orders)]

    def reconstruction_constants(self) -> np.ndarray:
        """Per-order ``int_0^inf psi_hat_k(u) / u du`` (Morse only)."""
        if self.kind is not FamilyKind.MORSE:
            raise TypeError("reconstruction constants are defined for Morse families")
        b, g = self.params["beta"], self.params["gamma"]
        hi = 4.0 * self.params["support_hi"]
        return np.array([integrate.quad(lambda u: _morse_profile(k, b, g, u) / u,
                                        0, hi, limit=400, points=[1.0])[0]
                         for k in range(self.J)])

    def time_halfwidth(self, q: float = 3.0) -> float:
        """``q`` times the largest time-domain standard deviation in the family.

        For Morse wavelets the value is in units of scale (multiply by ``a``).
        """
        if self.kind is FamilyKind.HERMITE:
            sd = self.params["sigma"] * np.sqrt(self.J - 0.5)
        else:
            # time spread of psi from the frequency profile: ||psi_hat'||^2 / (4 pi^2)
            x = self.grid
            d = np.gradient(self.tapers, x, axis=1)
            sd = np.sqrt(np.max(np.sum(d ** 2, axis=1) * self.spacing) / (4 * np.pi ** 2))
        return float(q * sd)


def hermite_windows(J: int, sigma: float) -> ReferenceFamily:
    """First ``J`` Hermite functions dilated by ``sigma`` seconds.

    The order-0 window is ``sigma**-0.5 * pi**-0.25 * exp(-t**2 / (2 sigma**2))``.
    The sampling grid uses ``sigma / 64`` spacing and is widened until the
    tail mass of every order drops below 1e-12.
    """
    if J < 1:
        raise ConstructionError("J must be >= 1")
    if not sigma > 0:
        raise ConstructionError("sigma must be positive")
    dx = 1.0 / 64
    half = 6.0 * np.sqrt(2 * np.log(J + 2))
    for _ in range(40):
        x = np.arange(-half, half + dx / 2, dx)
        h, dh = hermite_functions(J, x)
        edge = np.abs(x) > half - 1.0
        tail = np.max(np.sum(h[:, edge] ** 2, axis=1) * dx)
        if tail < TAIL_TOL:
            break
        half *= 1.25
    else:
        raise ConstructionError(f"cannot hold J={J} Hermite functions at tolerance")
    fam = ReferenceFamily(FamilyKind.HERMITE, J, {"sigma": float(sigma)},
                          x * sigma, h / np.sqrt(sigma), dh / sigma ** 1.5)
    _check_gram(fam)
    return fam


def _morse_peak(beta: float, gamma: float) -> float:
    return (beta / gamma) ** (1.0 / gamma)


def _morse_profile(k: int, beta: float, gamma: float, xi) -> np.ndarray:
    """Unit-norm order-``k`` Morse wavelet in frequency, peak of order 0 at 1."""
    xi = np.asarray(xi, dtype=float)
    wp = _morse_peak(beta, gamma)
    c = (2 * beta + 1 - gamma) / gamma
    log_norm = 0.5 * (np.log(2 * gamma * wp) + c * np.log(2.0) + gammaln(k + 1) - gammaln(k + c + 1))
    w = np.where(xi > 0, xi * wp, 1.0)
    wg = w ** gamma
    logmag = beta * np.log(w) - wg + log_norm
    val = np.exp(logmag) * eval_genlaguerre(k, c, 2 * wg)
    return np.where(xi > 0, val, 0.0)


def morse_wavelets(beta: float, gamma: float, J: int, points_per_unit: int = 4096) -> ReferenceFamily:
    """First ``J`` generalized Morse wavelets as real frequency profiles.

    Built as ``w**beta exp(-w**gamma) L_k^c(2 w**gamma)`` with
    ``c = (2 beta + 1 - gamma) / gamma`` and analytic unit-norm constants;
    orthonormality is then checked on the sampling grid.
    """
    if not (beta > 0 and gamma > 0):
        raise ConstructionError("beta and gamma must be positive")
    if J < 1:
        raise ConstructionError("J must be >= 1")
    # upper edge: the highest order's envelope has decayed far below tolerance
    hi = 1.0
    probe = np.linspace(0, 1, 64)
    while True:
        tail = np.abs(np.array([_morse_profile(k, beta, gamma, hi * (1 + probe))
                                for k in range(J)])).max()
        if tail < 1e-14 or hi > 1e3:
            break
        hi *= 1.25
    xi = np.arange(0, int(hi * points_per_unit) + 1) / points_per_unit
    psi = np.array([_morse_profile(k, beta, gamma, xi) for k in range(J)])
    dpsi = 2 * np.pi * xi * psi
    fam = ReferenceFamily(FamilyKind.MORSE, J,
                          {"beta": float(beta), "gamma": float(gamma), "support_hi": float(hi)},
                          xi, psi, dpsi)
    _check_gram(fam)
    return fam


def _check_gram(fam: ReferenceFamily):
    err = np.abs(fam.gram() - np.eye(fam.J)).max()
    if err > GRAM_TOL:
        raise ConstructionError(
            f"{fam.kind.value} family not orthonormal at tolerance (max dev {err:.2e})")


@dataclass(frozen=True)
class ProjectionSet:
    vectors: np.ndarray
    seed: int

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def J(self) -> int:
        return self.vectors.shape[1]


def random_unit_vectors(N: int, J: int, seed: int) -> ProjectionSet:
    """``N`` i.i.d. uniform points on the unit sphere in ``R^J``."""
    if N < 1 or J < 1:
        raise ValueError("N and J must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(7,)))
    g = rng.standard_normal((N, J))
    norms = np.linalg.norm(g, axis=1)
    # zero-norm draws have probability zero; redraw defensively
    while np.any(norms == 0):
        bad = norms == 0
        g[bad] = rng.standard_normal((int(bad.sum()), J))
        norms = np.linalg.norm(g, axis=1)
    return ProjectionSet(g / norms[:, None], int(seed))


def export_family_csv(path, fam: ReferenceFamily):
    cols = [fam.grid] + list(fam.tapers) + list(fam.d_tapers)
    header = ",".join(["grid"] + [f"taper{k}" for k in range(fam.J)]
                      + [f"dtaper{k}" for k in range(fam.J)])
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header,
               comments="", fmt="%.17g")
