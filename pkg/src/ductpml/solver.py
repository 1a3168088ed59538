"""Per-mode 1D finite-element solves and 2D field assembly.

Because the layer stretches only x1 and the transverse operator is
diagonal in the cosine basis, the 2D problems reduce exactly to decoupled
complex two-point boundary-value problems per mode:

    (1 - M^2) p_n'' + 2 i k M p_n' + (k^2 - n^2 pi^2 / d^2) p_n = f_n

with one of three closures:
  * ``dtn``: Robin conditions p_n' = i beta_n^{+-} p_n at x^{+-}
    (exact nonreflecting closure),
  * ``pml_full``: the stretched operator on the enlarged interval
    including both layers, Dirichlet at the outer ends,
  * ``pml_reduced``: Robin conditions with the finite-layer coefficients
    nu_n^{+-} in place of beta_n^{+-}.

Discretization is piecewise-linear elements on a uniform grid with the
convection term assembled from the weak form, alpha-weighted terms by
2-point Gauss per element, and a direct banded (tridiagonal) solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from . import pml as pml_mod
from .duct import DuctConfig, axial_wavenumbers64, cutoff_numbers, mode_shape
from .errors import ConfigError, DomainError, GridMismatchError
from .noise import (
    ModalFunctionSource,
    ModeBoxSource,
    NoiseRealization,
    PiecewiseConstantAxial,
    SmoothAxial,
    modal_source_coefficients,
    noise_modal_matrix,
)

DTN = "dtn"
PML_FULL = "pml_full"
PML_REDUCED = "pml_reduced"

_GAUSS4_NODES = np.array(
    [-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526]
)
_GAUSS4_WEIGHTS = np.array(
    [0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538]
)


@dataclass(frozen=True)
class Grid1D:
    """Uniform axial grid with n_cells elements (n_cells + 1 nodes)."""

    x_start: float
    x_end: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 8:
            raise ConfigError(f"grid needs at least 8 cells, got {self.n_cells}")
        if not self.x_start < self.x_end:
            raise ConfigError("grid needs x_start < x_end")

    @property
    def delta(self) -> float:
        return (self.x_end - self.x_start) / self.n_cells

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_start, self.x_end, self.n_nodes)


def omega_b_grid(cfg: DuctConfig, delta: float) -> Grid1D:
    """Grid over the computational interval with spacing as close to delta as possible."""
    n = max(8, round((cfg.x_plus - cfg.x_minus) / delta))
    return Grid1D(cfg.x_minus, cfg.x_plus, n)


def omega_full_grid(cfg: DuctConfig, delta: float) -> Grid1D:
    """Aligned grid over the enlarged interval [x_minus - L, x_plus + L].

    The interface points x^{+-} must land on nodes so that restrictions to
    the computational interval are exact; this requires L to be an integer
    multiple of the spacing.
    """
    n_b = max(8, round((cfg.x_plus - cfg.x_minus) / delta))
    d_actual = (cfg.x_plus - cfg.x_minus) / n_b
    n_lay = round(cfg.L / d_actual)
    if abs(n_lay * d_actual - cfg.L) > 1e-9 * max(1.0, cfg.L):
        raise ConfigError(
            f"layer length {cfg.L} is not an integer multiple of the grid "
            f"spacing {d_actual}; pick a compatible delta"
        )
    return Grid1D(cfg.x_minus - cfg.L, cfg.x_plus + cfg.L, n_b + 2 * n_lay)


def default_delta(cfg: DuctConfig) -> float:
    """Default spacing min(1/(16 k), L/64): resolves both the wave and the layer."""
    return min(1.0 / (16.0 * cfg.k), cfg.L / 64.0)


@dataclass
class ModalSolution:
    """Per-mode nodal values; the 2D field is sum_n values[n](x1) phi_n(x2)."""

    grid: Grid1D
    values: np.ndarray  # (n_modes, n_nodes) complex
    formulation: str
    tail_estimate: float = 0.0

    @property
    def n_modes(self) -> int:
        return self.values.shape[0]

    def restrict(self, x_lo: float, x_hi: float) -> "ModalSolution":
        """Restriction to aligned subinterval nodes (exact, no interpolation)."""
        nodes = self.grid.nodes()
        dx = self.grid.delta
        i_lo = int(round((x_lo - self.grid.x_start) / dx))
        i_hi = int(round((x_hi - self.grid.x_start) / dx))
        ok = (
            0 <= i_lo < i_hi <= self.grid.n_cells
            and abs(nodes[i_lo] - x_lo) < 1e-9 * max(1.0, abs(x_lo))
            and abs(nodes[i_hi] - x_hi) < 1e-9 * max(1.0, abs(x_hi))
        )
        if not ok:
            raise GridMismatchError(
                f"[{x_lo}, {x_hi}] does not align with the grid nodes"
            )
        return ModalSolution(
            grid=Grid1D(x_lo, x_hi, i_hi - i_lo),
            values=self.values[:, i_lo : i_hi + 1].copy(),
            formulation=self.formulation,
            tail_estimate=self.tail_estimate,
        )


# ---------------------------------------------------------------------------
# Loads
# ---------------------------------------------------------------------------


def piecewise_load_matrix(grid: Grid1D, breaks: np.ndarray) -> np.ndarray:
    """Map segment values (constant on [breaks[j], breaks[j+1])) to hat loads.

    Column j holds the exact integrals of every hat function against the
    indicator of segment j; multiplying by segment values gives the load
    vector.  Segments are clipped to the grid.
    """
    nodes = grid.nodes()
    dx = grid.delta
    out = np.zeros((grid.n_nodes, len(breaks) - 1))
    for j in range(len(breaks) - 1):
        s = max(float(breaks[j]), grid.x_start)
        e = min(float(breaks[j + 1]), grid.x_end)
        if e <= s:
            continue
        ie_lo = min(max(int((s - grid.x_start) / dx), 0), grid.n_cells - 1)
        ie_hi = min(max(int(math.ceil((e - grid.x_start) / dx)) - 1, ie_lo), grid.n_cells - 1)
        for ei in range(ie_lo, ie_hi + 1):
            lo = max(s, nodes[ei])
            hi = min(e, nodes[ei + 1])
            if hi <= lo:
                continue
            width = hi - lo
            out[ei, j] += width * ((nodes[ei + 1] - lo) + (nodes[ei + 1] - hi)) / (2.0 * dx)
            out[ei + 1, j] += width * ((lo - nodes[ei]) + (hi - nodes[ei])) / (2.0 * dx)
    return out


def _load_vector(parts, grid: Grid1D) -> np.ndarray:
    """Right-hand side integrals of f_n against the hat basis."""
    load = np.zeros(grid.n_nodes, dtype=complex)
    nodes = grid.nodes()
    dx = grid.delta
    for part in parts:
        if isinstance(part, PiecewiseConstantAxial):
            load += piecewise_load_matrix(grid, part.breaks) @ np.asarray(
                part.values, dtype=complex
            )
        elif isinstance(part, SmoothAxial):
            lo_cell = max(int((part.x_lo - grid.x_start) / dx) - 1, 0)
            hi_cell = min(int((part.x_hi - grid.x_start) / dx) + 1, grid.n_cells - 1)
            for ei in range(lo_cell, hi_cell + 1):
                xa, xb = nodes[ei], nodes[ei + 1]
                xg = 0.5 * (xa + xb) + 0.5 * dx * _GAUSS4_NODES
                wg = 0.5 * dx * _GAUSS4_WEIGHTS
                fg = np.asarray([part.fn(x) for x in xg], dtype=complex)
                load[ei] += np.sum(wg * fg * (xb - xg) / dx)
                load[ei + 1] += np.sum(wg * fg * (xg - xa) / dx)
        else:
            raise ConfigError(f"unsupported axial profile {type(part).__name__}")
    return load


# ---------------------------------------------------------------------------
# Matrix assembly (tridiagonal, stored as (sub, diag, sup))
# ---------------------------------------------------------------------------


def _assemble_interior(n: int, cfg: DuctConfig, grid: Grid1D):
    """Weak form of the constant-coefficient mode operator, no boundary terms.

    Rows are -(1-M^2) * stiffness + 2ikM * convection + gamma * mass with
    gamma = k^2 - n^2 pi^2 / d^2; the convection matrix is the exact
    integral of w_trial' against w_test (skew plus boundary diagonal).
    """
    m2 = cfg.one_minus_m2
    gamma = cfg.k ** 2 - (n * math.pi / cfg.d) ** 2
    conv = 2j * cfg.k * cfg.M
    dx = grid.delta
    nn = grid.n_nodes
    diag = np.empty(nn, dtype=complex)
    diag[:] = -m2 * 2.0 / dx + gamma * 2.0 * dx / 3.0
    diag[0] = -m2 / dx + gamma * dx / 3.0 + conv * (-0.5)
    diag[-1] = -m2 / dx + gamma * dx / 3.0 + conv * 0.5
    sup = np.full(nn - 1, -m2 * (-1.0 / dx) + conv * 0.5 + gamma * dx / 6.0, dtype=complex)
    sub = np.full(nn - 1, -m2 * (-1.0 / dx) + conv * (-0.5) + gamma * dx / 6.0, dtype=complex)
    return sub, diag, sup


def _assemble_pml_interior(n: int, cfg: DuctConfig, profile, grid: Grid1D):
    """Stretched weak form with alpha-dependent coefficients by 2-pt Gauss."""
    m2 = cfg.one_minus_m2
    k = cfg.k
    dx = grid.delta
    nodes = grid.nodes()
    mid = 0.5 * (nodes[:-1] + nodes[1:])
    off = 0.5 * dx / math.sqrt(3.0)
    xg = np.stack([mid - off, mid + off], axis=1)  # (n_cells, 2)
    ag = pml_mod.alpha(profile, xg.ravel(), cfg.omega).reshape(xg.shape)
    apg = pml_mod.alpha_prime(profile, xg.ravel(), cfg.omega).reshape(xg.shape)
    zg = (
        k * k / (m2 * ag)
        - ag * (cfg.M * k) ** 2 / m2
        - (n * math.pi / cfg.d) ** 2 / ag
    )
    wg = 0.5 * dx
    # shape functions at the two Gauss points: N1 = (xb-x)/dx, N2 = (x-xa)/dx
    n1 = np.array([0.5 + 0.5 / math.sqrt(3.0), 0.5 - 0.5 / math.sqrt(3.0)])
    n2 = 1.0 - n1
    s_el = wg * np.sum(ag, axis=1) / (dx * dx)  # common factor of the 2x2 block
    conv = 2j * k * cfg.M
    ikm = 1j * k * cfg.M

    def quad(a_weights, fa, fb):
        # sum over Gauss points of weight * coeff * f_test * f_trial
        return wg * np.sum(a_weights * fa[None, :] * fb[None, :], axis=1)

    nn = grid.n_nodes
    diag = np.zeros(nn, dtype=complex)
    sub = np.zeros(nn - 1, dtype=complex)
    sup = np.zeros(nn - 1, dtype=complex)

    # stiffness: integral alpha * w_trial' * w_test'
    diag[:-1] += -m2 * s_el
    diag[1:] += -m2 * s_el
    sup += m2 * s_el
    sub += m2 * s_el
    # convection: 2ikM * integral alpha * w_trial' * w_test
    c11 = quad(ag, n1, np.full(2, -1.0 / dx))
    c12 = quad(ag, n1, np.full(2, 1.0 / dx))
    c21 = quad(ag, n2, np.full(2, -1.0 / dx))
    c22 = quad(ag, n2, np.full(2, 1.0 / dx))
    diag[:-1] += conv * c11
    diag[1:] += conv * c22
    sup += conv * c12
    sub += conv * c21
    # ikM * integral alpha' * w_trial * w_test  and  mass with coefficient z
    for coeff, gvals in ((ikm, apg), (1.0, zg)):
        m11 = quad(gvals, n1, n1)
        m12 = quad(gvals, n1, n2)
        m22 = quad(gvals, n2, n2)
        diag[:-1] += coeff * m11
        diag[1:] += coeff * m22
        sup += coeff * m12
        sub += coeff * m12
    return sub, diag, sup


def _solve_tridiag(sub, diag, sup, rhs):
    ab = np.zeros((3, diag.size), dtype=complex)
    ab[0, 1:] = sup
    ab[1, :] = diag
    ab[2, :-1] = sub
    try:
        return solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:  # ill-posedness; excluded by the
        raise DomainError(f"singular mode system: {exc}") from exc  # cutoff guard


def _check_omega_b_grid(cfg: DuctConfig, grid: Grid1D):
    if (
        abs(grid.x_start - cfg.x_minus) > 1e-9 * max(1.0, abs(cfg.x_minus))
        or abs(grid.x_end - cfg.x_plus) > 1e-9 * max(1.0, abs(cfg.x_plus))
    ):
        raise GridMismatchError(
            f"grid [{grid.x_start}, {grid.x_end}] must span the computational "
            f"interval [{cfg.x_minus}, {cfg.x_plus}]"
        )


def _solve_robin(n, parts, cfg, grid, robin_plus, robin_minus):
    _check_omega_b_grid(cfg, grid)
    sub, diag, sup = _assemble_interior(n, cfg, grid)
    bc = 1j * cfg.one_minus_m2
    diag = diag.copy()
    diag[-1] += bc * robin_plus
    diag[0] -= bc * robin_minus
    return _solve_tridiag(sub, diag, sup, _load_vector(parts, grid))


def solve_mode_dtn(n: int, source, cfg: DuctConfig, grid: Grid1D) -> np.ndarray:
    """Exact-DtN solve: Robin coefficients are the axial wavenumbers."""
    bp, bm = axial_wavenumbers64(n, cfg)
    parts = _as_parts(source, n, cfg)
    return _solve_robin(n, parts, cfg, grid, bp, bm)


def solve_mode_pml_reduced(
    n: int, source, cfg: DuctConfig, profile, grid: Grid1D
) -> np.ndarray:
    """Reduced solve on the computational interval with finite-layer nu's."""
    nu_p = pml_mod.nu_coefficients(n, "+", profile, cfg)
    nu_m = pml_mod.nu_coefficients(n, "-", profile, cfg)
    parts = _as_parts(source, n, cfg)
    return _solve_robin(n, parts, cfg, grid, nu_p, nu_m)


def solve_mode_pml_full(
    n: int, source, cfg: DuctConfig, profile, grid: Grid1D
) -> np.ndarray:
    """Full stretched solve on the enlarged interval, Dirichlet outer ends."""
    lo = cfg.x_minus - cfg.L
    hi = cfg.x_plus + cfg.L
    if (
        abs(grid.x_start - lo) > 1e-9 * max(1.0, abs(lo))
        or abs(grid.x_end - hi) > 1e-9 * max(1.0, abs(hi))
    ):
        raise GridMismatchError(
            f"grid [{grid.x_start}, {grid.x_end}] must span [{lo}, {hi}]"
        )
    sub, diag, sup = _assemble_pml_interior(n, cfg, profile, grid)
    parts = _as_parts(source, n, cfg)
    load = _load_vector(parts, grid)
    out = np.zeros(grid.n_nodes, dtype=complex)
    out[1:-1] = _solve_tridiag(sub[1:-1], diag[1:-1], sup[1:-1], load[1:-1])
    return out


def _as_parts(source, n, cfg):
    """Normalize a source (or mixed list of sources and axial parts) to parts."""
    if isinstance(source, (PiecewiseConstantAxial, SmoothAxial)):
        return [source]
    if isinstance(source, (list, tuple)):
        parts = []
        for s in source:
            parts.extend(_as_parts(s, n, cfg))
        return parts
    if isinstance(source, (NoiseRealization, ModeBoxSource, ModalFunctionSource)):
        return modal_source_coefficients(source, n, cfg)
    raise ConfigError(f"unsupported source {type(source).__name__}")


# ---------------------------------------------------------------------------
# Multi-mode driver, field assembly, norms
# ---------------------------------------------------------------------------


def solve_full(
    cfg: DuctConfig,
    source,
    formulation: str,
    grid: Grid1D,
    n_modes: Optional[int] = None,
    profile=None,
) -> ModalSolution:
    """Solve every mode 0 .. n_modes-1 for the combined source.

    ``source`` may mix deterministic parts and noise realizations (list).
    A heuristic estimate of the truncated modal tail (last-mode norm times
    mode count, reflecting the 1/n^2 solution decay for noise-like sources)
    is reported on the result.
    """
    if formulation not in (DTN, PML_FULL, PML_REDUCED):
        raise ConfigError(f"unknown formulation {formulation!r}")
    if formulation in (PML_FULL, PML_REDUCED) and profile is None:
        raise ConfigError("PML formulations need a profile")
    if n_modes is None:
        _, n0 = cutoff_numbers(cfg)
        n_modes = n0 + 30
    sources = source if isinstance(source, (list, tuple)) else [source]
    noise_mats = [
        noise_modal_matrix(s, n_modes, cfg)
        for s in sources
        if isinstance(s, NoiseRealization)
    ]
    det_sources = [s for s in sources if not isinstance(s, NoiseRealization)]
    values = np.empty((n_modes, grid.n_nodes), dtype=complex)
    for n in range(n_modes):
        parts = modal_source_coefficients(det_sources, n, cfg)
        parts += [
            PiecewiseConstantAxial(breaks=breaks, values=vals[n])
            for breaks, vals in noise_mats
        ]
        if formulation == DTN:
            values[n] = solve_mode_dtn(n, parts, cfg, grid)
        elif formulation == PML_REDUCED:
            values[n] = solve_mode_pml_reduced(n, parts, cfg, profile, grid)
        else:
            values[n] = solve_mode_pml_full(n, parts, cfg, profile, grid)
    sol = ModalSolution(grid=grid, values=values, formulation=formulation)
    last = math.sqrt(
        float(np.trapezoid(np.abs(values[-1]) ** 2, dx=grid.delta))
    )
    sol.tail_estimate = last * n_modes
    return sol


def assemble_field(sol: ModalSolution, points, cfg: DuctConfig) -> np.ndarray:
    """Evaluate sum_n p_n(x1) phi_n(x2) with linear interpolation in x1."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    x1, x2 = pts[:, 0], pts[:, 1]
    nodes = sol.grid.nodes()
    eps = 1e-12 * max(1.0, abs(sol.grid.x_end - sol.grid.x_start))
    if np.any(x1 < sol.grid.x_start - eps) or np.any(x1 > sol.grid.x_end + eps):
        raise DomainError("axial coordinate outside the solution grid")
    if np.any(x2 < 0.0) or np.any(x2 > cfg.d):
        raise DomainError("transverse coordinate outside the duct")
    out = np.zeros(pts.shape[0], dtype=complex)
    for n in range(sol.n_modes):
        pn = np.interp(x1, nodes, sol.values[n].real) + 1j * np.interp(
            x1, nodes, sol.values[n].imag
        )
        out += pn * mode_shape(n, x2, cfg.d)
    return out[0] if single else out


def _restrict_to_omega_b(sol: ModalSolution, cfg: DuctConfig) -> ModalSolution:
    if (
        abs(sol.grid.x_start - cfg.x_minus) < 1e-12
        and abs(sol.grid.x_end - cfg.x_plus) < 1e-12
    ):
        return sol
    return sol.restrict(cfg.x_minus, cfg.x_plus)


def l2_norm_omega_b(sol: ModalSolution, cfg: DuctConfig) -> float:
    """L2 norm over the computational domain: Parseval across modes,
    trapezoid along the axis."""
    s = _restrict_to_omega_b(sol, cfg)
    total = float(
        np.sum(np.trapezoid(np.abs(s.values) ** 2, dx=s.grid.delta, axis=1))
    )
    return math.sqrt(total)


def l2_error(a: ModalSolution, b: ModalSolution) -> float:
    """Parseval/trapezoid norm of (a - b); operands must share grid and modes."""
    if a.grid != b.grid:
        raise GridMismatchError(f"grids differ: {a.grid} vs {b.grid}")
    if a.values.shape != b.values.shape:
        raise GridMismatchError(
            f"mode counts differ: {a.values.shape} vs {b.values.shape}"
        )
    diff = np.abs(a.values - b.values) ** 2
    return math.sqrt(float(np.sum(np.trapezoid(diff, dx=a.grid.delta, axis=1))))


def condition_estimate(
    n: int,
    cfg: DuctConfig,
    grid: Grid1D,
    formulation: str = DTN,
    profile=None,
) -> float:
    """1-norm condition estimate of the assembled mode matrix."""
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    if formulation == DTN:
        bp, bm = axial_wavenumbers64(n, cfg)
        sub, diag, sup = _assemble_interior(n, cfg, grid)
        diag = diag.copy()
        diag[-1] += 1j * cfg.one_minus_m2 * bp
        diag[0] -= 1j * cfg.one_minus_m2 * bm
    elif formulation == PML_REDUCED:
        sub, diag, sup = _assemble_interior(n, cfg, grid)
        diag = diag.copy()
        diag[-1] += 1j * cfg.one_minus_m2 * pml_mod.nu_coefficients(n, "+", profile, cfg)
        diag[0] -= 1j * cfg.one_minus_m2 * pml_mod.nu_coefficients(n, "-", profile, cfg)
    elif formulation == PML_FULL:
        sub, diag, sup = _assemble_pml_interior(n, cfg, profile, grid)
        sub, diag, sup = sub[1:-1], diag[1:-1], sup[1:-1]
    else:
        raise ConfigError(f"unknown formulation {formulation!r}")
    mat = sp.diags([sub, diag, sup], offsets=[-1, 0, 1], format="csc")
    lu = spla.splu(mat)
    inv_op = spla.LinearOperator(
        mat.shape,
        matvec=lambda v: lu.solve(v.astype(complex)),
        rmatvec=lambda v: lu.solve(v.astype(complex), trans="T"),
        dtype=complex,
    )
    norm_a = spla.norm(mat, 1)
    norm_inv = spla.onenormest(inv_op)
    return float(norm_a * norm_inv)
