"""Discretized spatial white noise on a nested rectangular mesh.

The forcing rectangle is split into congruent half-open cells; each cell
carries an i.i.d. standard normal draw ``xi_i`` and the piecewise-constant
field is ``Wdot_h(x) = xi_i / sqrt(|K_i|)`` on cell ``K_i``.  The mesh is
dyadически nested across refinement levels so that coarsening a fine
realization (summing children with weight sqrt(|child|/|parent|) = 1/2)
yields the coarse-level noise driven by the *same* underlying path; that
coupling is what makes the refinement studies measure a convergent error.

Sampling is counter-based: the draws for the subtree below each coarsest
cell come from an independent Philox stream keyed by (seed, coarse cell
index), laid out in Morton (bit-interleaved) order.  The result depends
only on (seed, mesh) - never on evaluation order or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .duct import DuctConfig
from .errors import ConfigError, DomainError

_U64 = np.uint64
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class NoiseMesh:
    """Nested dyadic rectangular mesh over the forcing support.

    rect is (x1_lo, x1_hi, x2_lo, x2_hi); level 0 is the coarsest grid of
    base_shape cells and each level quarters the cells of the previous one.
    """

    rect: tuple
    levels: int
    base_shape: tuple

    def __post_init__(self):
        x1_lo, x1_hi, x2_lo, x2_hi = self.rect
        if not (x1_lo < x1_hi and x2_lo < x2_hi):
            raise DomainError(f"degenerate mesh rectangle {self.rect}")
        if self.levels < 1:
            raise ConfigError("mesh needs at least one level")
        if min(self.base_shape) < 1:
            raise ConfigError("coarsest grid must have at least one cell per axis")

    @property
    def finest_level(self) -> int:
        return self.levels - 1

    def shape(self, level: int):
        self._check_level(level)
        return (self.base_shape[0] << level, self.base_shape[1] << level)

    def cell_size(self, level: int):
        n1, n2 = self.shape(level)
        x1_lo, x1_hi, x2_lo, x2_hi = self.rect
        return ((x1_hi - x1_lo) / n1, (x2_hi - x2_lo) / n2)

    def cell_area(self, level: int) -> float:
        w1, w2 = self.cell_size(level)
        return w1 * w2

    def cell_diameter(self, level: int) -> float:
        w1, w2 = self.cell_size(level)
        return math.hypot(w1, w2)

    def edges(self, level: int):
        n1, n2 = self.shape(level)
        x1_lo, x1_hi, x2_lo, x2_hi = self.rect
        return np.linspace(x1_lo, x1_hi, n1 + 1), np.linspace(x2_lo, x2_hi, n2 + 1)

    def _check_level(self, level: int):
        if not 0 <= level < self.levels:
            raise DomainError(f"level {level} outside 0..{self.levels - 1}")


@dataclass(frozen=True)
class NoiseRealization:
    """One noise path restricted to a mesh level; xi has shape(level)."""

    mesh: NoiseMesh
    level: int
    xi: np.ndarray
    seed: int

    def __post_init__(self):
        if self.xi.shape != self.mesh.shape(self.level):
            raise ConfigError(
                f"xi shape {self.xi.shape} does not match level {self.level}"
            )
        self.xi.setflags(write=False)


def build_mesh(rect, finest_h: float, levels: int) -> NoiseMesh:
    """Mesh whose finest-level cell diagonal is at most finest_h.

    Cell counts per axis are the smallest multiples of 2^(levels-1) that keep
    each finest side below finest_h/sqrt(2); the per-level diameter then
    halves exactly from one level to the next.
    """
    if finest_h <= 0.0:
        raise DomainError(f"finest_h must be positive, got {finest_h}")
    if levels < 1:
        raise ConfigError(f"levels must be >= 1, got {levels}")
    x1_lo, x1_hi, x2_lo, x2_hi = rect
    if not (x1_lo < x1_hi and x2_lo < x2_hi):
        raise DomainError(f"degenerate mesh rectangle {rect}")
    scale = 1 << (levels - 1)
    base = []
    for length in (x1_hi - x1_lo, x2_hi - x2_lo):
        n_fine = max(1, math.ceil(math.sqrt(2.0) * length / finest_h - 1e-12))
        base.append(max(1, math.ceil(n_fine / scale - 1e-12)))
    return NoiseMesh(rect=tuple(map(float, rect)), levels=levels, base_shape=tuple(base))


@lru_cache(maxsize=32)
def _morton_scatter(bits: int):
    """Fine-cell offsets (di, dj) of Morton codes 0 .. 4^bits - 1."""
    t = np.arange(1 << (2 * bits), dtype=np.uint64)
    di = np.zeros_like(t)
    dj = np.zeros_like(t)
    for b in range(bits):
        di |= ((t >> _U64(2 * b + 1)) & _U64(1)) << _U64(b)
        dj |= ((t >> _U64(2 * b)) & _U64(1)) << _U64(b)
    return di.astype(np.int64), dj.astype(np.int64)


def sample(mesh: NoiseMesh, seed: int) -> NoiseRealization:
    """Draw the finest-level realization for the given seed."""
    bits = mesh.finest_level
    m1, m2 = mesh.base_shape
    n1, n2 = mesh.shape(mesh.finest_level)
    di, dj = _morton_scatter(bits)
    per_tree = 1 << (2 * bits)
    xi = np.empty((n1, n2), dtype=float)
    seed_word = _U64(int(seed) & _MASK64)
    for a1 in range(m1):
        for a2 in range(m2):
            key = np.array([seed_word, _U64(a1 * m2 + a2)], dtype=_U64)
            gen = np.random.Generator(np.random.Philox(key=key))
            vals = gen.standard_normal(per_tree)
            block = np.empty((1 << bits, 1 << bits), dtype=float)
            block[di, dj] = vals
            xi[a1 << bits : (a1 + 1) << bits, a2 << bits : (a2 + 1) << bits] = block
    return NoiseRealization(mesh=mesh, level=mesh.finest_level, xi=xi, seed=int(seed))


def coarsen(r: NoiseRealization) -> NoiseRealization:
    """Aggregate one level up: parent xi = (sum of 4 children) / 2.

    The weight sqrt(|child| / |parent|) = 1/2 makes the coarse xi the exact
    cell integrals of the same white-noise path, unit variance preserved.
    """
    if r.level == 0:
        raise DomainError("already at the coarsest level")
    xi = r.xi
    coarse = 0.5 * (xi[0::2, 0::2] + xi[1::2, 0::2] + xi[0::2, 1::2] + xi[1::2, 1::2])
    return NoiseRealization(mesh=r.mesh, level=r.level - 1, xi=coarse, seed=r.seed)


def realization_levels(r: NoiseRealization):
    """All levels of one path, coarsest first (repeated coarsening of r)."""
    out = [r]
    while out[-1].level > 0:
        out.append(coarsen(out[-1]))
    return list(reversed(out))


def evaluate_wh(r: NoiseRealization, x):
    """Piecewise-constant noise field xi_i / sqrt(|K_i|) at point(s) x.

    Cells are half-open ([lo, hi) in both axes), so points on the upper or
    right mesh boundary evaluate to 0 like any outside point.
    """
    x1, x2 = x
    scalar = np.ndim(x1) == 0 and np.ndim(x2) == 0
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    x1_lo, x1_hi, x2_lo, x2_hi = r.mesh.rect
    w1, w2 = r.mesh.cell_size(r.level)
    i1 = np.floor((x1 - x1_lo) / w1).astype(int)
    i2 = np.floor((x2 - x2_lo) / w2).astype(int)
    n1, n2 = r.mesh.shape(r.level)
    inside = (i1 >= 0) & (i1 < n1) & (i2 >= 0) & (i2 < n2)
    inside &= (x1 >= x1_lo) & (x1 < x1_hi) & (x2 >= x2_lo) & (x2 < x2_hi)
    out = np.zeros_like(x1)
    amp = 1.0 / math.sqrt(r.mesh.cell_area(r.level))
    out[inside] = r.xi[i1[inside], i2[inside]] * amp
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Sources and their per-mode axial reductions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModeBoxSource:
    """Deterministic source amplitude * indicator[x_lo, x_hi](x1) * phi_mode(x2)."""

    mode: int
    x_lo: float
    x_hi: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise DomainError("box source needs x_lo < x_hi")


@dataclass(frozen=True)
class ModalFunctionSource:
    """Deterministic source fn(x1) * phi_mode(x2) with fn supported in [x_lo, x_hi]."""

    mode: int
    fn: Callable
    x_lo: float
    x_hi: float


@dataclass(frozen=True)
class PiecewiseConstantAxial:
    """Axial profile constant on [breaks[j], breaks[j+1]); exact hat-function loads."""

    breaks: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.breaks) != len(self.values) + 1:
            raise ConfigError("piecewise-constant profile needs len(breaks) = len(values)+1")


@dataclass(frozen=True)
class SmoothAxial:
    """Axial profile given by a callable on its support [x_lo, x_hi]."""

    fn: Callable
    x_lo: float
    x_hi: float


def transverse_cell_integrals(x2_edges: np.ndarray, n_modes: int, d: float) -> np.ndarray:
    """Integrals of phi_n over every [x2_edges[j], x2_edges[j+1]), all n at once."""
    e = np.asarray(x2_edges, dtype=float)
    out = np.empty((n_modes, e.size - 1), dtype=float)
    out[0] = np.diff(e) / math.sqrt(d)
    if n_modes > 1:
        n = np.arange(1, n_modes)[:, None]
        s = np.sin(n * math.pi * e[None, :] / d)
        out[1:] = math.sqrt(2.0 / d) * (d / (math.pi * n)) * np.diff(s, axis=1)
    return out


def transverse_mode_integral(n: int, a: float, b: float, d: float) -> float:
    """Integral of phi_n over [a, b] in closed form."""
    if n == 0:
        return (b - a) / math.sqrt(d)
    return (
        math.sqrt(2.0 / d)
        * (d / (n * math.pi))
        * (math.sin(n * math.pi * b / d) - math.sin(n * math.pi * a / d))
    )


def noise_modal_matrix(r: NoiseRealization, n_modes: int, cfg: DuctConfig):
    """Axial breakpoints and segment values of f_n for all modes at once.

    Returns (breaks, values) with values[n, j1] = sum_j2 T[n, j2] *
    xi[j1, j2] / sqrt(|K|); the transverse cell integrals T are analytic.
    """
    x1_edges, x2_edges = r.mesh.edges(r.level)
    t = transverse_cell_integrals(x2_edges, n_modes, cfg.d)
    amp = 1.0 / math.sqrt(r.mesh.cell_area(r.level))
    values = (r.xi * amp) @ t.T  # (n1, n_modes)
    return x1_edges, values.T.copy()


def modal_source_coefficients(source, n: int, cfg: DuctConfig):
    """Axial coefficient profile f_n(x1) of one transverse mode.

    ``source`` may be a NoiseRealization, a ModeBoxSource, a
    ModalFunctionSource, or a sequence of these; the result is a list of
    axial profile parts (possibly empty when the mode is not excited).
    """
    if isinstance(source, (list, tuple)):
        parts = []
        for s in source:
            parts.extend(modal_source_coefficients(s, n, cfg))
        return parts
    if isinstance(source, NoiseRealization):
        breaks, values = noise_modal_matrix(source, n + 1, cfg)
        return [PiecewiseConstantAxial(breaks=breaks, values=values[n])]
    if isinstance(source, ModeBoxSource):
        if source.mode != n:
            return []
        return [
            PiecewiseConstantAxial(
                breaks=np.array([source.x_lo, source.x_hi]),
                values=np.array([source.amplitude], dtype=complex),
            )
        ]
    if isinstance(source, ModalFunctionSource):
        if source.mode != n:
            return []
        return [SmoothAxial(fn=source.fn, x_lo=source.x_lo, x_hi=source.x_hi)]
    raise ConfigError(f"unsupported source type {type(source).__name__}")
