"""Duct geometry, uniform-flow parameters, transverse modes, and axial dispersion.

The duct occupies ``{(x1, x2): x1 in R, 0 < x2 < d}`` with rigid walls
(homogeneous Neumann condition).  A uniform subsonic mean flow of Mach
number ``M`` runs along ``x1``.  Time-harmonic pressure fields separate
into cosine transverse modes ``phi_n`` and axial waves ``exp(i beta x1)``
whose wavenumbers solve the convected dispersion quadratic

    -(1 - M^2) beta^2 - 2 k M beta + k^2 = n^2 pi^2 / d^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, CutoffResonanceError, DomainError

# Relative distance (in units of k) kept from the cutoff-resonance set
# k = sqrt(1 - M^2) n pi / d.  Boundary-coefficient denominators degenerate
# there, so construction refuses near-resonant configs outright.
TOL_CUTOFF = 1e-8

PROPAGATING = "propagating"
EVANESCENT = "evanescent"


@dataclass(frozen=True)
class DuctConfig:
    """Physical setup of the duct problem.

    Attributes:
        d: duct height (> 0).
        M: Mach number of the uniform flow, 0 <= M < 1.
        k: wavenumber.  Exactly one of ``k``/``omega`` may be omitted; the
            other is filled from ``k = omega / c0``.
        omega: angular frequency.
        c0: sound speed (default 1.0).
        x_minus, x_plus: axial endpoints of the computational domain.
        L: absorbing-layer length (> 0).
    """

    d: float
    M: float
    x_minus: float
    x_plus: float
    L: float
    k: float = 0.0
    omega: float = 0.0
    c0: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.M < 1.0:
            raise ConfigError(f"Mach number must satisfy 0 <= M < 1, got M={self.M}")
        if self.d <= 0.0:
            raise ConfigError(f"duct height must be positive, got d={self.d}")
        if self.L <= 0.0:
            raise ConfigError(f"layer length must be positive, got L={self.L}")
        if not self.x_minus < self.x_plus:
            raise ConfigError(
                f"domain endpoints must satisfy x_minus < x_plus, "
                f"got ({self.x_minus}, {self.x_plus})"
            )
        if self.c0 <= 0.0:
            raise ConfigError(f"sound speed must be positive, got c0={self.c0}")
        k, omega = self.k, self.omega
        if k == 0.0 and omega == 0.0:
            raise ConfigError("one of k or omega must be given (nonzero)")
        if k == 0.0:
            k = omega / self.c0
        elif omega == 0.0:
            omega = k * self.c0
        elif abs(k - omega / self.c0) > 1e-12 * abs(k):
            raise ConfigError(
                f"inconsistent frequency data: k={k} but omega/c0={omega / self.c0}"
            )
        if k <= 0.0:
            raise ConfigError(f"wavenumber must be positive, got k={k}")
        object.__setattr__(self, "k", float(k))
        object.__setattr__(self, "omega", float(omega))
        self._check_cutoff_resonance()

    def _check_cutoff_resonance(self):
        root = math.sqrt(1.0 - self.M * self.M)
        n_hi = int(self.k * self.d / (math.pi * root)) + 2
        for n in range(1, n_hi + 1):
            if abs(self.k - root * n * math.pi / self.d) <= TOL_CUTOFF * self.k:
                raise ConfigError(
                    f"k={self.k} is within {TOL_CUTOFF:g}*k of the cutoff resonance "
                    f"sqrt(1-M^2)*n*pi/d at n={n}; boundary coefficients degenerate there"
                )

    @property
    def one_minus_m2(self) -> float:
        return 1.0 - self.M * self.M


@dataclass(frozen=True)
class DispersionTable:
    """Axial wavenumbers ``beta_n^{+-}`` for modes ``n = 0 .. n_max - 1``."""

    n_max: int
    beta_plus: np.ndarray
    beta_minus: np.ndarray
    kind: tuple
    K0: float
    N0: int

    def __post_init__(self):
        if self.n_max < 1:
            raise ConfigError("dispersion table needs at least one mode")


def mode_shape(n: int, x2, d: float):
    """Orthonormal transverse mode phi_n(x2) on (0, d).

    phi_0 = 1/sqrt(d) and phi_n = sqrt(2/d) cos(n pi x2 / d) for n >= 1.
    Accepts scalar or array ``x2``; values outside [0, d] raise DomainError.
    """
    if n < 0:
        raise DomainError(f"mode index must be >= 0, got {n}")
    x2a = np.asarray(x2, dtype=float)
    if np.any(x2a < 0.0) or np.any(x2a > d):
        raise DomainError(f"transverse coordinate outside [0, {d}]")
    if n == 0:
        out = np.full_like(x2a, 1.0 / math.sqrt(d))
    else:
        out = math.sqrt(2.0 / d) * np.cos(n * math.pi * x2a / d)
    return out if out.ndim else float(out)


def cutoff_numbers(cfg: DuctConfig):
    """Return (K0, N0) with K0 = k d / (pi sqrt(1 - M^2)) and N0 = floor(K0)."""
    k0 = cfg.k * cfg.d / (math.pi * math.sqrt(cfg.one_minus_m2))
    return k0, int(math.floor(k0))


def axial_wavenumbers(n: int, cfg: DuctConfig):
    """Both roots (beta_plus, beta_minus) of the dispersion quadratic for mode n.

    The branch is decided by the sign of the discriminant
    ``k^2 - (1 - M^2) n^2 pi^2 / d^2``: positive gives two real (propagating)
    roots with beta_plus > beta_minus, negative gives the conjugate-like
    evanescent pair with Im(beta_plus) > 0.  A discriminant within the
    cutoff tolerance of zero raises CutoffResonanceError.

    Roots are computed and returned in the platform's extended precision:
    the residual contract (1e-12 * max(1, k^2), at any mode index) sits
    below double-precision quantization once n^2 pi^2 / d^2 >> k^2, so the
    extra mantissa bits are load-bearing, not cosmetic.
    """
    if n < 0:
        raise DomainError(f"mode index must be >= 0, got {n}")
    k = np.longdouble(cfg.k)
    m2 = 1.0 - np.longdouble(cfg.M) ** 2
    disc = k * k - m2 * (n * _pi_ld() / np.longdouble(cfg.d)) ** 2
    if abs(disc) <= (TOL_CUTOFF * cfg.k) ** 2:
        raise CutoffResonanceError(
            f"mode n={n} is numerically at cutoff (discriminant {float(disc):.3e})"
        )
    if disc > 0.0:
        root = np.sqrt(disc)
        return (
            np.clongdouble((-k * cfg.M + root) / m2),
            np.clongdouble((-k * cfg.M - root) / m2),
        )
    root = np.sqrt(-disc)
    return (
        np.clongdouble(-k * cfg.M / m2) + 1j * np.clongdouble(root / m2),
        np.clongdouble(-k * cfg.M / m2) - 1j * np.clongdouble(root / m2),
    )


def _pi_ld():
    # pi to long-double precision (float64 pi plus its leading correction)
    return np.longdouble(math.pi) + np.longdouble(1.2246467991473532e-16)


def axial_wavenumbers64(n: int, cfg: DuctConfig):
    """Plain double-precision view of the axial wavenumber pair."""
    bp, bm = axial_wavenumbers(n, cfg)
    return complex(bp), complex(bm)


def dispersion_residual(beta: complex, n: int, cfg: DuctConfig) -> float:
    """|-(1-M^2) beta^2 - 2 k M beta + k^2 - n^2 pi^2 / d^2|.

    Evaluated in extended precision so the reported value reflects the
    root's accuracy rather than cancellation noise of the evaluation.
    """
    k = np.longdouble(cfg.k)
    m2 = 1.0 - np.longdouble(cfg.M) ** 2
    b = np.clongdouble(beta)
    val = -m2 * b * b - 2.0 * k * cfg.M * b + k * k - (n * _pi_ld() / np.longdouble(cfg.d)) ** 2
    return float(abs(val))


def dispersion_table(cfg: DuctConfig, n_max: int) -> DispersionTable:
    """Tabulate beta_n^{+-} and mode kinds for n = 0 .. n_max - 1."""
    k0, n0 = cutoff_numbers(cfg)
    bp = np.empty(n_max, dtype=np.clongdouble)
    bm = np.empty(n_max, dtype=np.clongdouble)
    kinds = []
    for n in range(n_max):
        bp[n], bm[n] = axial_wavenumbers(n, cfg)
        kinds.append(PROPAGATING if bp[n].imag == 0.0 else EVANESCENT)
    return DispersionTable(
        n_max=n_max, beta_plus=bp, beta_minus=bm, kind=tuple(kinds), K0=k0, N0=n0
    )
