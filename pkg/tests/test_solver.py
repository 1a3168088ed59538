import math

import numpy as np
import pytest

from ductpml import DuctConfig
from ductpml.duct import axial_wavenumbers64, cutoff_numbers, mode_shape
from ductpml.errors import ConfigError, GridMismatchError
from ductpml.greens import _betas_block, _exp_cell_integrals
from ductpml.noise import ModalFunctionSource, ModeBoxSource, build_mesh
from ductpml.pml import PmlProfile
from ductpml.solver import (
    Grid1D,
    ModalSolution,
    assemble_field,
    condition_estimate,
    default_delta,
    l2_error,
    l2_norm_omega_b,
    omega_b_grid,
    omega_full_grid,
    piecewise_load_matrix,
    solve_full,
    solve_mode_dtn,
    solve_mode_pml_full,
    solve_mode_pml_reduced,
)


def make_cfg(M=0.3, k=5.0, L=1.0):
    return DuctConfig(d=1.0, M=M, k=k, x_minus=-1.0, x_plus=1.0, L=L)


def oracle_box_solution(n, cfg, grid, x_lo=-0.25, x_hi=0.25, amp=1.0):
    """Exact single-mode response to a box source via the outgoing kernel."""
    bp, bm, c = _betas_block(cfg, n, n + 1)
    nodes = grid.nodes()
    out = np.empty(nodes.size, dtype=complex)
    for i, x1 in enumerate(nodes):
        if x1 <= x_lo:
            v = _exp_cell_integrals(bm, x_lo, x_hi, x1)[0]
        elif x1 >= x_hi:
            v = _exp_cell_integrals(bp, x_lo, x_hi, x1)[0]
        else:
            v = (
                _exp_cell_integrals(bp, x_lo, x1, x1)[0]
                + _exp_cell_integrals(bm, x1, x_hi, x1)[0]
            )
        out[i] = amp * c[0] * v
    return out


class Bump:
    """Smooth compactly supported bump with analytic derivatives."""

    def __init__(self, center=0.1, width=0.45):
        self.c = center
        self.w = width

    def _t(self, x):
        return (x - self.c) / self.w

    def value(self, x):
        t = self._t(x)
        if abs(t) >= 1.0:
            return 0.0
        return math.exp(-1.0 / (1.0 - t * t))

    def d1(self, x):
        t = self._t(x)
        if abs(t) >= 1.0:
            return 0.0
        s1 = -2.0 * t / (1.0 - t * t) ** 2
        return self.value(x) * s1 / self.w

    def d2(self, x):
        t = self._t(x)
        if abs(t) >= 1.0:
            return 0.0
        u = 1.0 - t * t
        s1 = -2.0 * t / u ** 2
        s2 = (-2.0 * u - 8.0 * t * t) / u ** 3
        return self.value(x) * (s1 * s1 + s2) / (self.w * self.w)


def manufactured_source(n, cfg, bump):
    """f_n = (1-M^2) p'' + 2ikM p' + (k^2 - n^2 pi^2/d^2) p for p = bump."""
    gamma = cfg.k ** 2 - (n * math.pi / cfg.d) ** 2

    def fn(x):
        return (
            cfg.one_minus_m2 * bump.d2(x)
            + 2j * cfg.k * cfg.M * bump.d1(x)
            + gamma * bump.value(x)
        )

    return ModalFunctionSource(mode=n, fn=fn, x_lo=bump.c - bump.w, x_hi=bump.c + bump.w)


class TestGrid:
    def test_minimum_cells(self):
        with pytest.raises(ConfigError):
            Grid1D(0.0, 1.0, 4)

    def test_default_delta(self):
        cfg = make_cfg()
        assert default_delta(cfg) == pytest.approx(min(1 / 80, 1 / 64))

    def test_full_grid_alignment_required(self):
        cfg = DuctConfig(d=1.0, M=0.0, k=5.0, x_minus=-1.0, x_plus=1.0, L=0.957)
        with pytest.raises(ConfigError):
            omega_full_grid(cfg, 1 / 16)


class TestLoads:
    def test_piecewise_matrix_total_mass(self):
        grid = Grid1D(-1.0, 1.0, 64)
        breaks = np.array([-0.63, -0.2, 0.44])
        mat = piecewise_load_matrix(grid, breaks)
        # hat functions partition unity: column sums equal segment lengths
        np.testing.assert_allclose(mat.sum(axis=0), np.diff(breaks), atol=1e-14)

    def test_segments_clipped_to_grid(self):
        grid = Grid1D(-1.0, 1.0, 16)
        mat = piecewise_load_matrix(grid, np.array([-2.0, 0.0]))
        assert mat.sum(axis=0)[0] == pytest.approx(1.0)


class TestModeSolves:
    def test_zero_source_gives_zero(self):
        cfg = make_cfg()
        grid = omega_b_grid(cfg, 1 / 64)
        gridf = omega_full_grid(cfg, 1 / 64)
        profile = PmlProfile.quadratic(cfg, 5.0)
        zero = ModeBoxSource(mode=9, x_lo=-0.1, x_hi=0.1, amplitude=0.0)
        assert np.all(solve_mode_dtn(1, zero, cfg, grid) == 0.0)
        assert np.all(solve_mode_pml_reduced(1, zero, cfg, profile, grid) == 0.0)
        assert np.all(solve_mode_pml_full(1, zero, cfg, profile, gridf) == 0.0)

    @pytest.mark.parametrize("n", [0, 1, 2, 4])
    def test_dtn_matches_kernel_oracle(self, n):
        cfg = make_cfg()
        box = ModeBoxSource(mode=n, x_lo=-0.25, x_hi=0.25)
        errs = []
        for cells in (256, 512, 1024):
            grid = Grid1D(cfg.x_minus, cfg.x_plus, cells)
            sol = solve_mode_dtn(n, box, cfg, grid)
            exact = oracle_box_solution(n, cfg, grid)
            num = np.trapezoid(np.abs(sol - exact) ** 2, dx=grid.delta)
            den = np.trapezoid(np.abs(exact) ** 2, dx=grid.delta)
            errs.append(math.sqrt(num / den))
        assert errs[-1] < 1e-3  # delta = 1/512
        order = np.polyfit(np.log([256, 512, 1024]), np.log(errs), 1)[0]
        assert -order >= 1.9

    def test_outgoing_wave_content(self):
        # right of the source the solution must be outgoing: projecting on
        # exp(-ikx) (the incoming wave at M=0) leaves < 1e-3 relative
        cfg = make_cfg(M=0.0)
        box = ModeBoxSource(mode=0, x_lo=-0.25, x_hi=0.25)
        grid = Grid1D(cfg.x_minus, cfg.x_plus, 1024)
        sol = solve_mode_dtn(0, box, cfg, grid)
        nodes = grid.nodes()
        window = (nodes >= 0.4) & (nodes <= 0.9)
        x = nodes[window]
        vals = sol[window]
        # joint least-squares split (the two windowed waves are not
        # orthogonal, so independent projections would cross-talk)
        basis = np.stack([np.exp(1j * cfg.k * x), np.exp(-1j * cfg.k * x)], axis=1)
        coeffs, *_ = np.linalg.lstsq(basis, vals, rcond=None)
        a_out, a_in = coeffs
        assert abs(a_in) / abs(a_out) < 1e-3

    def test_full_layer_dirichlet_ends(self):
        cfg = make_cfg()
        profile = PmlProfile.quadratic(cfg, 5.0)
        grid = omega_full_grid(cfg, 1 / 32)
        sol = solve_mode_pml_full(1, ModeBoxSource(mode=1, x_lo=-0.2, x_hi=0.2), cfg, profile, grid)
        assert sol[0] == 0.0 and sol[-1] == 0.0

    def test_layer_decay_with_absorption_strength(self):
        cfg = make_cfg()
        peaks = []
        for sp in (1.0, 2.0, 4.0, 8.0):
            profile = PmlProfile.quadratic(cfg, sp)
            grid = omega_full_grid(cfg, 1 / 64)
            sol = solve_mode_pml_full(
                0, ModeBoxSource(mode=0, x_lo=-0.2, x_hi=0.2), cfg, profile, grid
            )
            nodes = grid.nodes()
            layer = nodes >= cfg.x_plus + 0.5 * cfg.L
            peaks.append(float(np.max(np.abs(sol[layer]))))
        assert all(b < a for a, b in zip(peaks, peaks[1:]))

    def test_evanescent_full_matches_dtn_without_absorption(self):
        # strongly evanescent mode dies before the outer wall, so even a
        # zero-absorption Dirichlet extension reproduces the exact solve
        cfg = make_cfg(L=1.0)
        profile = PmlProfile.quadratic(cfg, 0.0, 0.0)
        n = 5
        box = ModeBoxSource(mode=n, x_lo=-0.2, x_hi=0.2)
        gb = omega_b_grid(cfg, 1 / 128)
        gf = omega_full_grid(cfg, 1 / 128)
        dtn = solve_mode_dtn(n, box, cfg, gb)
        full = solve_mode_pml_full(n, box, cfg, profile, gf)
        i0 = round((cfg.x_minus - gf.x_start) / gf.delta)
        i1 = round((cfg.x_plus - gf.x_start) / gf.delta)
        rel = np.max(np.abs(full[i0 : i1 + 1] - dtn)) / np.max(np.abs(dtn))
        assert rel < 1e-6

    def test_reduced_approaches_dtn_for_thick_layer(self):
        cfg = make_cfg(L=8.0)
        profile = PmlProfile.quadratic(cfg, 500.0)
        grid = omega_b_grid(cfg, 1 / 64)
        box = ModeBoxSource(mode=1, x_lo=-0.2, x_hi=0.2)
        a = solve_mode_dtn(1, box, cfg, grid)
        b = solve_mode_pml_reduced(1, box, cfg, profile, grid)
        assert np.max(np.abs(a - b)) < 1e-10

    @pytest.mark.parametrize("formulation", ["dtn", "pml_reduced", "pml_full"])
    def test_manufactured_solution_order(self, formulation):
        cfg = make_cfg()
        profile = PmlProfile.quadratic(cfg, 5.0)
        bump = Bump()
        n = 1
        src = manufactured_source(n, cfg, bump)
        errs = []
        cells = (128, 256, 512)
        for nc in cells:
            if formulation == "pml_full":
                grid = omega_full_grid(cfg, 2.0 / nc)
                sol = solve_mode_pml_full(n, src, cfg, profile, grid)
            elif formulation == "pml_reduced":
                grid = Grid1D(cfg.x_minus, cfg.x_plus, nc)
                sol = solve_mode_pml_reduced(n, src, cfg, profile, grid)
            else:
                grid = Grid1D(cfg.x_minus, cfg.x_plus, nc)
                sol = solve_mode_dtn(n, src, cfg, grid)
            nodes = grid.nodes()
            exact = np.array([bump.value(x) for x in nodes])
            errs.append(
                math.sqrt(np.trapezoid(np.abs(sol - exact) ** 2, dx=grid.delta))
            )
        order = np.polyfit(np.log(cells), np.log(errs), 1)[0]
        assert -order >= 1.9

    def test_robin_sign_is_the_outgoing_one(self):
        # flipping the Robin coefficients to the incoming branch must ruin
        # the kernel-oracle agreement; guards the boundary-term sign
        from ductpml.solver import _solve_robin
        from ductpml.noise import modal_source_coefficients

        cfg = make_cfg()
        n = 0
        box = ModeBoxSource(mode=0, x_lo=-0.25, x_hi=0.25)
        grid = Grid1D(cfg.x_minus, cfg.x_plus, 512)
        bp, bm = axial_wavenumbers64(n, cfg)
        parts = modal_source_coefficients(box, n, cfg)
        good = _solve_robin(n, parts, cfg, grid, bp, bm)
        flipped = _solve_robin(n, parts, cfg, grid, bm, bp)
        exact = oracle_box_solution(n, cfg, grid)
        err_good = np.max(np.abs(good - exact))
        err_flip = np.max(np.abs(flipped - exact))
        assert err_good < 1e-3 * np.max(np.abs(exact))
        assert err_flip > 100 * err_good


class TestSolveFullAndFields:
    def test_single_mode_source_decouples(self):
        cfg = make_cfg()
        grid = omega_b_grid(cfg, 1 / 32)
        sol = solve_full(cfg, ModeBoxSource(mode=1, x_lo=-0.2, x_hi=0.2), "dtn", grid, 6)
        energies = np.sum(np.abs(sol.values) ** 2, axis=1)
        assert energies[1] > 0.0
        others = np.delete(energies, 1)
        assert np.max(others) <= 1e-13 * energies[1]

    def test_linearity(self):
        cfg = make_cfg()
        grid = omega_b_grid(cfg, 1 / 32)
        s1 = ModeBoxSource(mode=0, x_lo=-0.3, x_hi=0.0, amplitude=1.0)
        s2 = ModeBoxSource(mode=0, x_lo=0.0, x_hi=0.3, amplitude=2.0)
        a = solve_full(cfg, [s1], "dtn", grid, 2)
        b = solve_full(cfg, [s2], "dtn", grid, 2)
        ab = solve_full(cfg, [s1, s2], "dtn", grid, 2)
        assert np.max(np.abs(ab.values - a.values - b.values)) < 1e-12

    def test_noise_zero_realization(self):
        cfg = make_cfg()
        mesh = build_mesh((-0.5, 0.5, 0.25, 0.75), 0.3, 1)
        from ductpml.noise import NoiseRealization

        r = NoiseRealization(mesh=mesh, level=0, xi=np.zeros(mesh.shape(0)), seed=0)
        grid = omega_b_grid(cfg, 1 / 32)
        sol = solve_full(cfg, [r], "dtn", grid, 4)
        assert np.all(sol.values == 0.0)

    def test_field_assembly_basis_and_interpolation(self):
        cfg = make_cfg()
        grid = omega_b_grid(cfg, 1 / 32)
        sol = solve_full(cfg, ModeBoxSource(mode=2, x_lo=-0.2, x_hi=0.2), "dtn", grid, 4)
        # phi_2 vanishes at x2 = 0.25
        assert abs(assemble_field(sol, (0.5, 0.25), cfg)) < 1e-14
        # at grid nodes the interpolation is exact
        x2 = 0.6
        val = assemble_field(sol, (grid.nodes()[10], x2), cfg)
        expect = sol.values[2, 10] * mode_shape(2, x2, cfg.d)
        assert val == pytest.approx(expect, rel=1e-12)

    def test_field_outside_domain_rejected(self):
        cfg = make_cfg()
        grid = omega_b_grid(cfg, 1 / 32)
        sol = solve_full(cfg, ModeBoxSource(mode=0, x_lo=-0.2, x_hi=0.2), "dtn", grid, 2)
        with pytest.raises(Exception):
            assemble_field(sol, (5.0, 0.5), cfg)

    def test_parseval_matches_tensor_quadrature(self):
        cfg = make_cfg()
        grid = omega_b_grid(cfg, 1 / 64)
        src = [
            ModeBoxSource(mode=0, x_lo=-0.3, x_hi=0.1, amplitude=1.0),
            ModeBoxSource(mode=1, x_lo=-0.1, x_hi=0.3, amplitude=0.7),
            ModeBoxSource(mode=3, x_lo=-0.2, x_hi=0.2, amplitude=0.4),
        ]
        sol = solve_full(cfg, src, "dtn", grid, 6)
        norm = l2_norm_omega_b(sol, cfg)
        x1 = np.linspace(cfg.x_minus, cfg.x_plus, 257)
        x2 = np.linspace(0.0, cfg.d, 129)
        xx1, xx2 = np.meshgrid(x1, x2, indexing="ij")
        pts = np.stack([xx1.ravel(), xx2.ravel()], axis=1)
        vals = assemble_field(sol, pts, cfg).reshape(xx1.shape)
        quad = np.trapezoid(np.trapezoid(np.abs(vals) ** 2, x2, axis=1), x1)
        assert math.sqrt(quad) == pytest.approx(norm, rel=1e-3)

    def test_reciprocity_at_zero_mach(self):
        # swap a point-like (narrow box) source and receiver; pairing the
        # solution with the receiver's own load functional makes the exact
        # symmetry of the zero-flow operator visible at machine precision
        cfg = make_cfg(M=0.0)
        grid = omega_b_grid(cfg, 1 / 256)
        w = 2 * grid.delta
        n_modes = 12
        xa, xb = (-0.4, 0.31), (0.5, 0.77)

        def narrow(center, mode):
            return ModeBoxSource(
                mode=mode, x_lo=center - w, x_hi=center + w, amplitude=1.0 / (2 * w)
            )

        def receive(sol, point):
            breaks = np.array([point[0] - w, point[0] + w])
            weights = piecewise_load_matrix(sol.grid, breaks)[:, 0] / (2 * w)
            out = 0.0
            for m in range(sol.n_modes):
                out += (weights @ sol.values[m]) * mode_shape(m, point[1], cfg.d)
            return out

        val_ab = 0.0
        val_ba = 0.0
        for m in range(n_modes):
            sa = solve_full(cfg, narrow(xa[0], m), "dtn", grid, n_modes)
            val_ab += receive(sa, xb) * mode_shape(m, xa[1], cfg.d)
            sb = solve_full(cfg, narrow(xb[0], m), "dtn", grid, n_modes)
            val_ba += receive(sb, xa) * mode_shape(m, xb[1], cfg.d)
        assert abs(val_ab - val_ba) / abs(val_ab) < 1e-6
        # and the interpolated-field version agrees at discretization order
        approx_ab = sum(
            assemble_field(solve_full(cfg, narrow(xa[0], m), "dtn", grid, n_modes), xb, cfg)
            * mode_shape(m, xa[1], cfg.d)
            for m in range(n_modes)
        )
        assert abs(approx_ab - val_ab) / abs(val_ab) < 1e-3


class TestNormsAndErrors:
    def test_zero_norm(self):
        cfg = make_cfg()
        grid = omega_b_grid(cfg, 1 / 16)
        sol = ModalSolution(grid=grid, values=np.zeros((2, grid.n_nodes), complex), formulation="dtn")
        assert l2_norm_omega_b(sol, cfg) == 0.0

    def test_constant_mode_norm(self):
        cfg = make_cfg()
        grid = omega_b_grid(cfg, 1 / 16)
        vals = np.zeros((3, grid.n_nodes), complex)
        vals[1] = 1.0
        sol = ModalSolution(grid=grid, values=vals, formulation="dtn")
        assert l2_norm_omega_b(sol, cfg) ** 2 == pytest.approx(2.0)  # axial length

    def test_triangle_inequality(self):
        cfg = make_cfg()
        grid = omega_b_grid(cfg, 1 / 16)
        rng = np.random.default_rng(0)

        def rand_sol():
            v = rng.normal(size=(3, grid.n_nodes)) + 1j * rng.normal(size=(3, grid.n_nodes))
            return ModalSolution(grid=grid, values=v, formulation="dtn")

        a, b, c = rand_sol(), rand_sol(), rand_sol()
        assert l2_error(a, c) <= l2_error(a, b) + l2_error(b, c) + 1e-12

    def test_grid_mismatch_rejected(self):
        cfg = make_cfg()
        g1 = omega_b_grid(cfg, 1 / 16)
        g2 = omega_b_grid(cfg, 1 / 32)
        a = ModalSolution(grid=g1, values=np.zeros((2, g1.n_nodes), complex), formulation="dtn")
        b = ModalSolution(grid=g2, values=np.zeros((2, g2.n_nodes), complex), formulation="dtn")
        with pytest.raises(GridMismatchError):
            l2_error(a, b)

    def test_restriction_alignment(self):
        cfg = make_cfg()
        gf = omega_full_grid(cfg, 1 / 16)
        sol = ModalSolution(grid=gf, values=np.ones((1, gf.n_nodes), complex), formulation="pml_full")
        r = sol.restrict(cfg.x_minus, cfg.x_plus)
        assert r.grid.x_start == cfg.x_minus and r.grid.x_end == cfg.x_plus
        with pytest.raises(GridMismatchError):
            sol.restrict(cfg.x_minus + 0.013, cfg.x_plus)


class TestConditioning:
    @pytest.mark.parametrize("formulation", ["dtn", "pml_reduced", "pml_full"])
    def test_condition_estimate_bounded(self, formulation):
        cfg = make_cfg()
        profile = PmlProfile.quadratic(cfg, 5.0)
        _, n0 = cutoff_numbers(cfg)
        grid = (
            omega_full_grid(cfg, default_delta(cfg))
            if formulation == "pml_full"
            else omega_b_grid(cfg, default_delta(cfg))
        )
        for n in (0, n0, n0 + 1, n0 + 10):
            est = condition_estimate(n, cfg, grid, formulation, profile)
            assert est < 1e8
