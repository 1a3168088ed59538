"""Monte Carlo convergence studies and rate-fitting utilities.

Three error mechanisms are measured at desk scale:

* ``run_h_study``: mean-square distance between solutions driven by one
  white-noise path discretized at nested mesh levels; the coupling through
  a single path is what turns the refinement error into a measurable
  quantity with the expected near-quadratic rate in the cell diameter.
* ``run_L_study``: deterministic distance between the exact-DtN solve and
  the reduced finite-layer solve as the layer grows; decays exponentially
  in the effective absorbed mass (integral of min(1, sigma/omega)).
* ``run_equivalence_check``: full-layer versus reduced solves restricted
  to the computational interval; they discretize the same continuous
  solution, so the gap closes at the discretization order.
* ``run_total_error_study``: the combined (h, L) error table.

Every study is a pure function of (configuration, base_seed): seeds are
``base_seed + sample_index``, per-seed work is independent, and
aggregation runs in a fixed order, so thread counts can never change any
output bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .duct import DuctConfig, axial_wavenumbers64, cutoff_numbers
from .errors import ConfigError, GridMismatchError, InsufficientDataError, StudyError
from .noise import (
    ModeBoxSource,
    NoiseMesh,
    modal_source_coefficients,
    realization_levels,
    sample,
    transverse_cell_integrals,
)
from .pml import (
    PmlProfile,
    dtn_gap_bound,
    nu_coefficients,
    sigma_tilde_integral,
    theoretical_decay_constant,
)
from .solver import (
    DTN,
    Grid1D,
    ModalSolution,
    _assemble_interior,
    _load_vector,
    _solve_tridiag,
    default_delta,
    l2_norm_omega_b,
    omega_b_grid,
    omega_full_grid,
    piecewise_load_matrix,
    solve_mode_pml_full,
    solve_mode_pml_reduced,
)

RATE_PASS_THRESHOLD = 1.8
RATE_STDERR_THRESHOLD = 0.15
DECAY_CONSTANT_RTOL = 0.25
EQUIV_ORDER_THRESHOLD = 1.9


@dataclass
class StudyResult:
    """Per-point estimates with standard errors plus the fitted rate."""

    kind: str
    abscissae: np.ndarray
    error_mean: np.ndarray
    error_stderr: np.ndarray
    excluded: np.ndarray
    fitted_rate: float
    rate_stderr: float
    theory_rate: float
    passed: bool
    n_samples: int
    base_seed: int
    extra: dict = field(default_factory=dict)


@dataclass
class TotalErrorResult:
    """Mean-square error table over the (cell diameter, layer length) grid."""

    h_values: np.ndarray
    l_values: np.ndarray
    abscissae_l: np.ndarray  # absorbed-mass integrals per layer length
    error_mean: np.ndarray  # (n_h, n_L)
    error_stderr: np.ndarray
    n_samples: int
    base_seed: int


def mc_estimate(estimator: Callable[[int], float], n_samples: int, base_seed: int):
    """(mean, standard error) of estimator(seed) over consecutive seeds."""
    if n_samples < 2:
        raise ConfigError("mc_estimate needs n_samples >= 2")
    vals = np.empty(n_samples)
    for i in range(n_samples):
        seed = base_seed + i
        try:
            vals[i] = float(estimator(seed))
        except Exception as exc:  # noqa: BLE001 - reported with the failing seed
            raise StudyError(f"estimator failed at seed {seed}: {exc}") from exc
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(n_samples))


def fit_rate(abscissae, values, std_errors=None, transform: str = "loglog"):
    """Weighted least-squares slope of transformed data.

    ``loglog`` fits ln(value) against ln(abscissa); ``loglinear`` fits
    ln(value) against the raw abscissa.  Weights are the delta-method
    variances (stderr/value)^2 when standard errors are supplied.  Returns
    (slope, slope_stderr).
    """
    x = np.asarray(abscissae, dtype=float)
    v = np.asarray(values, dtype=float)
    if x.size < 3:
        raise InsufficientDataError(f"need >= 3 points to fit, got {x.size}")
    if np.any(v <= 0.0):
        raise InsufficientDataError("values must be positive for a log fit")
    if transform == "loglog":
        x = np.log(x)
    elif transform != "loglinear":
        raise ConfigError(f"unknown transform {transform!r}")
    y = np.log(v)
    if std_errors is not None and np.any(np.asarray(std_errors) > 0.0):
        var = (np.asarray(std_errors, dtype=float) / v) ** 2
        var = np.maximum(var, 1e-300)
        w = 1.0 / var
    else:
        w = np.ones_like(v)
    wsum = np.sum(w)
    xbar = np.sum(w * x) / wsum
    ybar = np.sum(w * y) / wsum
    sxx = np.sum(w * (x - xbar) ** 2)
    if sxx <= 0.0:
        raise InsufficientDataError("degenerate abscissae")
    slope = float(np.sum(w * (x - xbar) * (y - ybar)) / sxx)
    if std_errors is not None and np.any(np.asarray(std_errors) > 0.0):
        slope_stderr = float(math.sqrt(1.0 / sxx))
    else:
        resid = y - (ybar + slope * (x - xbar))
        dof = max(x.size - 2, 1)
        slope_stderr = float(math.sqrt(np.sum(resid ** 2) / dof / sxx))
    return slope, slope_stderr


# ---------------------------------------------------------------------------
# Batched per-mode solve machinery shared by the studies
# ---------------------------------------------------------------------------


def _robin_matrix(n: int, cfg: DuctConfig, grid: Grid1D, r_plus, r_minus):
    sub, diag, sup = _assemble_interior(n, cfg, grid)
    diag = diag.copy()
    bc = 1j * cfg.one_minus_m2
    diag[-1] += bc * r_plus
    diag[0] -= bc * r_minus
    return sub, diag, sup


def _noise_tables(mesh: NoiseMesh, levels: Sequence[int], grid: Grid1D, n_modes: int, d: float):
    """Per-level transverse integrals and segment-to-load matrices."""
    trans = {}
    loadmap = {}
    for lv in levels:
        x1_edges, x2_edges = mesh.edges(lv)
        trans[lv] = transverse_cell_integrals(x2_edges, n_modes, d)
        loadmap[lv] = piecewise_load_matrix(grid, x1_edges)
    return trans, loadmap


def _map_threads(fn, args, threads: int):
    """Apply fn over args, serial or thread-pooled; output order is fixed."""
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, args))
    return [fn(a) for a in args]


def run_h_study(
    cfg: DuctConfig,
    profile: Optional[PmlProfile],
    h_levels: Sequence[float],
    n_samples: int,
    base_seed: int,
    rect=None,
    delta: Optional[float] = None,
    n_modes: Optional[int] = None,
    ref_refine: int = 2,
    threads: int = 0,
) -> StudyResult:
    """Noise-refinement study: mean-square solution distance per mesh level.

    ``h_levels`` are cell diameters relative to the forcing-rectangle
    diagonal (dyadic, e.g. 1/8, 1/16, 1/32).  One finest-level path per
    seed is coarsened to every requested level; the exact-DtN solve driven
    by each level is compared with the solve at the reference level
    (``ref_refine`` dyadic steps below the finest requested).  The profile
    argument is accepted for interface symmetry; the study solves with the
    exact nonreflecting closure.
    """
    del profile
    if n_samples < 2:
        raise ConfigError("h study needs n_samples >= 2")
    rel = sorted(float(h) for h in h_levels)
    if rel[0] <= 0.0:
        raise ConfigError("relative diameters must be positive")
    base = round(1.0 / rel[-1])
    if abs(base * rel[-1] - 1.0) > 1e-9:
        raise ConfigError("coarsest relative diameter must be 1/integer")
    level_of = {}
    for r in rel:
        lv = math.log2(rel[-1] / r)
        if abs(lv - round(lv)) > 1e-9:
            raise GridMismatchError(f"levels {h_levels} are not dyadically nested")
        level_of[r] = int(round(lv))
    n_levels_used = max(level_of.values()) + 1
    total_levels = n_levels_used + ref_refine
    if rect is None:
        rect = default_forcing_rect(cfg)
    mesh = NoiseMesh(rect=tuple(rect), levels=total_levels, base_shape=(base, base))
    grid = omega_b_grid(cfg, delta if delta is not None else default_delta(cfg))
    if n_modes is None:
        _, n0 = cutoff_numbers(cfg)
        n_modes = n0 + 30

    used = sorted(level_of.values())
    ref_level = total_levels - 1
    all_levels = used + [ref_level]
    trans, loadmap = _noise_tables(mesh, all_levels, grid, n_modes, cfg.d)

    # per-seed, per-level scaled noise matrices
    noise_by_level = {lv: [] for lv in all_levels}
    for i in range(n_samples):
        levels = realization_levels(sample(mesh, base_seed + i))
        for lv in all_levels:
            amp = 1.0 / math.sqrt(mesh.cell_area(lv))
            noise_by_level[lv].append(levels[lv].xi * amp)
    stacks = {lv: np.stack(noise_by_level[lv]) for lv in all_levels}

    def mode_err2(n: int) -> np.ndarray:
        bp, bm = axial_wavenumbers64(n, cfg)
        sub, diag, sup = _robin_matrix(n, cfg, grid, bp, bm)
        sols = {}
        for lv in all_levels:
            seg = stacks[lv] @ trans[lv][n]  # (n_samples, n1)
            rhs = (loadmap[lv] @ seg.T).astype(complex)  # (n_nodes, n_samples)
            sols[lv] = _solve_tridiag(sub, diag, sup, rhs)
        out = np.empty((n_samples, len(used)))
        for j, lv in enumerate(used):
            diff2 = np.abs(sols[lv] - sols[ref_level]) ** 2
            out[:, j] = np.trapezoid(diff2, dx=grid.delta, axis=0)
        return out

    per_mode = _map_threads(mode_err2, range(n_modes), threads)
    err2 = np.sum(np.stack(per_mode), axis=0)  # (n_samples, n_levels_used)

    mean = err2.mean(axis=0)
    stderr = err2.std(axis=0, ddof=1) / math.sqrt(n_samples)
    diam = np.array([mesh.cell_diameter(lv) for lv in used])
    excluded = mean < 3.0 * stderr  # indistinguishable from the MC noise floor
    usable = ~excluded
    if np.sum(usable) >= 3:
        slope, slope_se = fit_rate(diam[usable], mean[usable], stderr[usable], "loglog")
    else:
        slope, slope_se = float("nan"), float("nan")
    passed = (
        np.isfinite(slope)
        and slope >= RATE_PASS_THRESHOLD
        and slope_se < RATE_STDERR_THRESHOLD
    )
    return StudyResult(
        kind="h",
        abscissae=diam,
        error_mean=mean,
        error_stderr=stderr,
        excluded=excluded,
        fitted_rate=slope,
        rate_stderr=slope_se,
        theory_rate=2.0,
        passed=bool(passed),
        n_samples=n_samples,
        base_seed=base_seed,
        extra={"relative_h": np.asarray(rel)[::-1], "mesh_levels": used},
    )


def default_forcing_rect(cfg: DuctConfig):
    """Centered rectangle covering the middle half of the computational domain."""
    cx = 0.5 * (cfg.x_minus + cfg.x_plus)
    wx = 0.25 * (cfg.x_plus - cfg.x_minus)
    return (cx - wx, cx + wx, 0.25 * cfg.d, 0.75 * cfg.d)


def default_l_study_source(cfg: DuctConfig) -> ModeBoxSource:
    """Box source in the first evanescent mode N0 + 1.

    The layer-length error constant is set by that mode once the absorption
    saturates, so exciting it is what makes the fitted decay measurable.
    """
    _, n0 = cutoff_numbers(cfg)
    rect = default_forcing_rect(cfg)
    return ModeBoxSource(mode=n0 + 1, x_lo=rect[0], x_hi=rect[1], amplitude=1.0)


def _solve_modes_robin(cfg, grid, n_modes, source, robin_of_n):
    values = np.empty((n_modes, grid.n_nodes), dtype=complex)
    for n in range(n_modes):
        parts = modal_source_coefficients(source, n, cfg)
        rp, rm = robin_of_n(n)
        sub, diag, sup = _robin_matrix(n, cfg, grid, rp, rm)
        values[n] = _solve_tridiag(sub, diag, sup, _load_vector(parts, grid))
    return values


def run_L_study(
    cfg: DuctConfig,
    l_values: Sequence[float],
    sigma_plus: float,
    source=None,
    sigma_minus: Optional[float] = None,
    delta: Optional[float] = None,
    n_modes: Optional[int] = None,
) -> StudyResult:
    """Layer-length study: exact-DtN versus reduced finite-layer solve.

    Both solves share the grid and interior discretization, so their
    distance isolates the layer truncation.  The fit is log(error) against
    the absorbed-mass abscissa; the reference slope is the negative of the
    theoretical decay constant.
    """
    if sigma_minus is None:
        sigma_minus = sigma_plus
    if source is None:
        source = default_l_study_source(cfg)
    grid = omega_b_grid(cfg, delta if delta is not None else default_delta(cfg))
    if n_modes is None:
        _, n0 = cutoff_numbers(cfg)
        n_modes = n0 + 30

    def beta_robin(n):
        return axial_wavenumbers64(n, cfg)

    dtn_vals = _solve_modes_robin(cfg, grid, n_modes, source, beta_robin)
    dtn_sol = ModalSolution(grid=grid, values=dtn_vals, formulation=DTN)
    dtn_norm = l2_norm_omega_b(dtn_sol, cfg)

    errors = []
    abscissae = []
    bound_flags = []
    for L in l_values:
        cfg_l = replace(cfg, L=float(L))
        profile = PmlProfile(
            sigma_plus=sigma_plus,
            sigma_minus=sigma_minus,
            x_plus=cfg.x_plus,
            x_minus=cfg.x_minus,
            L=float(L),
        )

        def nu_robin(n, profile=profile, cfg_l=cfg_l):
            return (
                nu_coefficients(n, "+", profile, cfg_l),
                nu_coefficients(n, "-", profile, cfg_l),
            )

        red_vals = _solve_modes_robin(cfg_l, grid, n_modes, source, nu_robin)
        diff = np.abs(red_vals - dtn_vals) ** 2
        errors.append(
            math.sqrt(float(np.sum(np.trapezoid(diff, dx=grid.delta, axis=1))))
        )
        abscissae.append(sigma_tilde_integral(profile, "+", float(L), cfg.omega))
        _, n0 = cutoff_numbers(cfg_l)
        bound_flags.append(dtn_gap_bound(n0 + 1, "+", profile, cfg_l).applicable)

    errors = np.asarray(errors)
    abscissae = np.asarray(abscissae)
    floor = 1e-12 * max(dtn_norm, 1e-300)
    excluded = errors < floor
    usable = ~excluded
    c2 = theoretical_decay_constant(cfg)
    if np.sum(usable) >= 3:
        slope, slope_se = fit_rate(
            abscissae[usable], errors[usable], None, "loglinear"
        )
    else:
        slope, slope_se = float("nan"), float("nan")
    monotone = bool(np.all(np.diff(errors[usable]) < 0.0))
    passed = (
        np.isfinite(slope)
        and abs(slope + c2) <= DECAY_CONSTANT_RTOL * c2
        and monotone
    )
    return StudyResult(
        kind="L",
        abscissae=abscissae,
        error_mean=errors,
        error_stderr=np.zeros_like(errors),
        excluded=excluded,
        fitted_rate=slope,
        rate_stderr=slope_se,
        theory_rate=-c2,
        passed=bool(passed),
        n_samples=1,
        base_seed=0,
        extra={"l_values": np.asarray(list(l_values), dtype=float),
               "dtn_norm": dtn_norm, "monotone": monotone,
               "bound_applicable": bound_flags},
    )


def run_equivalence_check(
    cfg: DuctConfig,
    profile: PmlProfile,
    source=None,
    deltas: Sequence[float] = (1 / 128, 1 / 256, 1 / 512),
    n_modes: Optional[int] = None,
) -> StudyResult:
    """Full-layer versus reduced solves on the computational interval.

    Returns the max nodal difference per spacing and the observed
    convergence order (both discretizations approximate the same continuous
    solution to second order, so the difference closes at that order).
    """
    if source is None:
        source = default_l_study_source(cfg)
    if n_modes is None:
        _, n0 = cutoff_numbers(cfg)
        n_modes = n0 + 5
    diffs = []
    for d in deltas:
        gb = omega_b_grid(cfg, d)
        gf = omega_full_grid(cfg, d)
        worst = 0.0
        for n in range(n_modes):
            full = solve_mode_pml_full(n, source, cfg, profile, gf)
            red = solve_mode_pml_reduced(n, source, cfg, profile, gb)
            i0 = round((cfg.x_minus - gf.x_start) / gf.delta)
            i1 = round((cfg.x_plus - gf.x_start) / gf.delta)
            worst = max(worst, float(np.max(np.abs(full[i0 : i1 + 1] - red))))
        diffs.append(worst)
    diffs = np.asarray(diffs)
    deltas = np.asarray(list(deltas), dtype=float)
    if diffs.size >= 3 and np.all(diffs > 0.0):
        slope, slope_se = fit_rate(deltas, diffs, None, "loglog")
        passed = slope >= EQUIV_ORDER_THRESHOLD
    else:
        slope, slope_se = float("nan"), float("nan")
        passed = bool(np.all(diffs == 0.0))
    return StudyResult(
        kind="equiv",
        abscissae=deltas,
        error_mean=diffs,
        error_stderr=np.zeros_like(diffs),
        excluded=np.zeros(diffs.size, dtype=bool),
        fitted_rate=slope,
        rate_stderr=slope_se,
        theory_rate=2.0,
        passed=bool(passed),
        n_samples=1,
        base_seed=0,
        extra={},
    )


def run_total_error_study(
    cfg: DuctConfig,
    h_levels: Sequence[float],
    l_values: Sequence[float],
    sigma_plus: float,
    n_samples: int,
    base_seed: int,
    source=None,
    rect=None,
    delta: Optional[float] = None,
    n_modes: Optional[int] = None,
    ref_refine: int = 2,
    threads: int = 0,
) -> TotalErrorResult:
    """Combined noise-refinement and layer-length error table.

    Per seed, the reference is the exact-DtN solve driven by the
    reference-level noise (plus the deterministic source); each table entry
    compares it against the reduced solve with layer L driven by level-h
    noise.  For large L the columns reproduce the refinement study; for the
    finest h the rows reproduce the layer decay.
    """
    if source is None:
        source = default_l_study_source(cfg)
    rel = sorted(float(h) for h in h_levels)
    base = round(1.0 / rel[-1])
    level_of = [int(round(math.log2(rel[-1] / r))) for r in rel]
    total_levels = max(level_of) + 1 + ref_refine
    if rect is None:
        rect = default_forcing_rect(cfg)
    mesh = NoiseMesh(rect=tuple(rect), levels=total_levels, base_shape=(base, base))
    grid = omega_b_grid(cfg, delta if delta is not None else default_delta(cfg))
    if n_modes is None:
        _, n0 = cutoff_numbers(cfg)
        n_modes = n0 + 30
    used = sorted(level_of)
    ref_level = total_levels - 1
    all_levels = used + [ref_level]
    trans, loadmap = _noise_tables(mesh, all_levels, grid, n_modes, cfg.d)
    stacks = {lv: [] for lv in all_levels}
    for i in range(n_samples):
        levels = realization_levels(sample(mesh, base_seed + i))
        for lv in all_levels:
            amp = 1.0 / math.sqrt(mesh.cell_area(lv))
            stacks[lv].append(levels[lv].xi * amp)
    stacks = {lv: np.stack(v) for lv, v in stacks.items()}

    profiles = [
        PmlProfile(
            sigma_plus=sigma_plus,
            sigma_minus=sigma_plus,
            x_plus=cfg.x_plus,
            x_minus=cfg.x_minus,
            L=float(L),
        )
        for L in l_values
    ]
    cfgs_l = [replace(cfg, L=float(L)) for L in l_values]

    def mode_err2(n: int) -> np.ndarray:
        bp, bm = axial_wavenumbers64(n, cfg)
        det_load = _load_vector(modal_source_coefficients(source, n, cfg), grid)
        rhs = {}
        for lv in all_levels:
            seg = stacks[lv] @ trans[lv][n]
            rhs[lv] = (loadmap[lv] @ seg.T).astype(complex) + det_load[:, None]
        sub, diag, sup = _robin_matrix(n, cfg, grid, bp, bm)
        ref = _solve_tridiag(sub, diag, sup, rhs[ref_level])
        out = np.zeros((n_samples, len(used), len(profiles)))
        for j_l, (prof, cfg_l) in enumerate(zip(profiles, cfgs_l)):
            nu_p = nu_coefficients(n, "+", prof, cfg_l)
            nu_m = nu_coefficients(n, "-", prof, cfg_l)
            sub_r, diag_r, sup_r = _robin_matrix(n, cfg_l, grid, nu_p, nu_m)
            for j_h, lv in enumerate(used):
                sol = _solve_tridiag(sub_r, diag_r, sup_r, rhs[lv])
                diff2 = np.abs(sol - ref) ** 2
                out[:, j_h, j_l] = np.trapezoid(diff2, dx=grid.delta, axis=0)
        return out

    per_mode = _map_threads(mode_err2, range(n_modes), threads)
    err2 = np.sum(np.stack(per_mode), axis=0)
    mean = err2.mean(axis=0)
    stderr = err2.std(axis=0, ddof=1) / math.sqrt(n_samples)
    diam = np.array([mesh.cell_diameter(lv) for lv in used])
    abscissae_l = np.array(
        [sigma_tilde_integral(p, "+", p.L, cfg.omega) for p in profiles]
    )
    return TotalErrorResult(
        h_values=diam,
        l_values=np.asarray(list(l_values), dtype=float),
        abscissae_l=abscissae_l,
        error_mean=mean,
        error_stderr=stderr,
        n_samples=n_samples,
        base_seed=base_seed,
    )
