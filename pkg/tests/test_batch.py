import numpy as np
import pytest

from levyreg.batch import (
    doss_terminals,
    flow_map_array,
    flow_sensitivity_array,
    marcus_terminals,
    ode_terminals,
    pack_paths,
)
from levyreg.fields import make_diffusion_field, make_scalar_field
from levyreg.flow_engine import solve_random_ode
from levyreg.levy_spec import FiniteAtomic, LevyTriplet
from levyreg.marcus import flow_with_sensitivity, jump_flow_phi, marcus_solve
from levyreg.path_sampler import sample_path
from levyreg.rng import RngStream
from levyreg.transforms import doss_sussman_solve

A_FIELD = make_scalar_field("logistic-slope",
                            {"low": 0.0, "high": 0.8, "rate": 1.1, "center": 0.3})
SIGMA = make_diffusion_field("logistic-slope",
                             {"low": 0.8, "high": 1.6, "rate": 0.9, "center": 0.0})
TRIPLET = LevyTriplet(drift=0.15, jumps=FiniteAtomic(((0.4, 2.0), (-0.3, 1.5))))
TRIPLET_BROWN = LevyTriplet(drift=0.15, jumps=FiniteAtomic(((0.4, 2.0),)),
                            brownian_variance=0.3)


def draw_paths(triplet, n, seed, cells):
    return [sample_path(triplet, 1.0, 0.1, rng=RngStream(seed, i),
                        brownian_cells=cells)
            for i in range(n)]


class TestFlowArrays:
    def test_flow_map_matches_scalar(self):
        rng = np.random.default_rng(1)
        ys = rng.uniform(-1.0, 1.0, 16)
        us = rng.uniform(-0.8, 0.8, 16)
        got = flow_map_array(SIGMA, ys, us)
        for y, u, g in zip(ys, us, got):
            assert g == pytest.approx(jump_flow_phi(SIGMA, float(y), float(u), 1e-12),
                                      abs=1e-8)

    def test_sensitivity_matches_scalar(self):
        rng = np.random.default_rng(2)
        ys = rng.uniform(-1.0, 1.0, 8)
        us = rng.uniform(-0.8, 0.8, 8)
        phi, acc = flow_sensitivity_array(SIGMA, ys, us)
        for y, u, p, a_ in zip(ys, us, phi, acc):
            sp, sa = flow_with_sensitivity(SIGMA, float(y), float(u))
            assert p == pytest.approx(sp, abs=1e-10)
            assert a_ == pytest.approx(sa, abs=1e-10)


class TestOdeTerminals:
    def test_matches_scalar_solver(self):
        cells = 256
        paths = draw_paths(TRIPLET, 8, 31, None)
        packed = pack_paths(paths, cells)
        x_term, y_term = ode_terminals(A_FIELD, packed, 0.2)
        for p, xt, yt in zip(paths, x_term, y_term):
            sol = solve_random_ode(A_FIELD, p, 0.2, 1.0 / cells)
            assert xt == pytest.approx(sol.terminal_x, abs=1e-7)
            assert yt == pytest.approx(sol.terminal_y, abs=1e-7)

    def test_matches_scalar_solver_with_brownian(self):
        cells = 128
        paths = draw_paths(TRIPLET_BROWN, 6, 32, cells)
        packed = pack_paths(paths, cells)
        x_term, _ = ode_terminals(A_FIELD, packed, -0.1)
        for p, xt in zip(paths, x_term):
            sol = solve_random_ode(A_FIELD, p, -0.1, 1.0 / cells)
            assert xt == pytest.approx(sol.terminal_x, abs=1e-6)

    def test_no_jump_paths_bitwise_identical(self):
        quiet = LevyTriplet(drift=0.3, jumps=FiniteAtomic(((1.0, 0.0),)))
        paths = draw_paths(quiet, 5, 33, None)
        packed = pack_paths(paths, 64)
        x_term, _ = ode_terminals(A_FIELD, packed, 0.0)
        assert np.all(x_term == x_term[0])

    def test_chunking_invariance(self):
        cells = 128
        paths = draw_paths(TRIPLET, 12, 34, None)
        full, _ = ode_terminals(A_FIELD, pack_paths(paths, cells), 0.2)
        first, _ = ode_terminals(A_FIELD, pack_paths(paths[:5], cells), 0.2)
        second, _ = ode_terminals(A_FIELD, pack_paths(paths[5:], cells), 0.2)
        assert np.array_equal(full, np.concatenate([first, second]))


class TestMarcusTerminals:
    def test_matches_scalar_solver(self):
        cells = 256
        paths = draw_paths(TRIPLET, 8, 41, None)
        packed = pack_paths(paths, cells)
        got = marcus_terminals(A_FIELD, SIGMA, packed, 0.1)
        for p, xt in zip(paths, got):
            traj = marcus_solve(A_FIELD, SIGMA, p, 0.1, 1.0 / cells)
            assert xt == pytest.approx(traj.terminal, abs=2e-4)

    def test_matches_scalar_solver_with_brownian(self):
        cells = 128
        paths = draw_paths(TRIPLET_BROWN, 6, 42, cells)
        packed = pack_paths(paths, cells)
        got = marcus_terminals(A_FIELD, SIGMA, packed, 0.1)
        for p, xt in zip(paths, got):
            traj = marcus_solve(A_FIELD, SIGMA, p, 0.1, 1.0 / cells)
            assert xt == pytest.approx(traj.terminal, abs=2e-4)

    def test_unit_sigma_matches_ode_engine(self):
        ones = make_diffusion_field("constant", {"level": 1.0})
        cells = 128
        paths = draw_paths(TRIPLET, 6, 43, None)
        packed = pack_paths(paths, cells)
        marc = marcus_terminals(A_FIELD, ones, packed, 0.2)
        ode, _ = ode_terminals(A_FIELD, packed, 0.2)
        assert np.max(np.abs(marc - ode)) < 1e-4


class TestDossTerminals:
    def test_matches_scalar_solver(self):
        cells = 64
        paths = draw_paths(TRIPLET_BROWN, 4, 51, cells)
        packed = pack_paths(paths, cells)
        got = doss_terminals(A_FIELD, SIGMA, packed, 0.1)
        for p, xt in zip(paths, got):
            scalar = doss_sussman_solve(A_FIELD, SIGMA, p, 0.1, 1.0 / cells)
            assert xt == pytest.approx(scalar, abs=1e-6)

    def test_matches_marcus_engine(self):
        cells = 128
        paths = draw_paths(TRIPLET_BROWN, 64, 52, cells)
        packed = pack_paths(paths, cells)
        doss = doss_terminals(A_FIELD, SIGMA, packed, 0.1)
        marc = marcus_terminals(A_FIELD, SIGMA, packed, 0.1)
        assert np.max(np.abs(doss - marc)) < 5e-3
