import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from levyreg.levy_spec import DensityForm, FiniteAtomic, LevyTriplet, dyadic_family
from levyreg.path_sampler import (
    LevyPath,
    NotEnoughMarkedJumps,
    decompose_first_jump,
    resample_first_jump_time,
    sample_path,
    shift_jump_time,
)
from levyreg.rng import RngStream

# chi-square 0.999 quantile, 9 degrees of freedom
CHI2_CRIT_999_DF9 = 27.877


def simple_path(jumps, horizon=1.0, drift=0.0):
    times = np.array([t for t, _ in jumps])
    sizes = np.array([s for _, s in jumps])
    return LevyPath(horizon, drift, times, sizes)


class TestLevyPath:
    def test_pure_drift_terminal(self):
        triplet = LevyTriplet(drift=0.3, jumps=FiniteAtomic(((1.0, 0.0),)))
        path = sample_path(triplet, 1.0, 0.5, rng=RngStream(1, 0))
        assert path.n_jumps == 0
        assert path.terminal == pytest.approx(0.3)

    def test_cadlag_evaluation(self):
        path = simple_path([(0.5, 1.0)], drift=1.0)
        assert path.value(0.5) == pytest.approx(1.5)
        assert path.left_value(0.5) == pytest.approx(0.5)
        assert path.value(0.25) == pytest.approx(0.25)
        assert path.value(0.0) == 0.0

    def test_rejects_bad_jumps(self):
        with pytest.raises(ValueError):
            simple_path([(0.5, 1.0), (0.5, 2.0)])
        with pytest.raises(ValueError):
            simple_path([(0.0, 1.0)])
        with pytest.raises(ValueError):
            simple_path([(1.5, 1.0)])
        with pytest.raises(ValueError):
            simple_path([(0.5, 0.0)])

    def test_csv_rows(self):
        path = simple_path([(0.5, 1.0), (0.8, -0.2)], drift=0.3)
        rows = path.to_csv_rows()
        assert rows[0] == ("drift", 0.0, 0.3)
        assert ("jump", 0.5, 1.0) in rows
        assert ("jump", 0.8, -0.2) in rows
        assert all(kind in ("drift", "jump", "brown") for kind, _, _ in rows)


class TestSamplePath:
    def test_poisson_jump_count_mean(self):
        triplet = LevyTriplet(drift=0.0, jumps=FiniteAtomic(((1.0, 2.0),)))
        n = 100_000
        counts = np.array([
            sample_path(triplet, 1.0, 0.5, rng=RngStream(7, i)).n_jumps
            for i in range(n)])
        assert counts.mean() == pytest.approx(2.0, abs=3.0 * math.sqrt(2.0 / n))

    def test_poisson_chi_square_gof(self):
        lam = 2.0
        triplet = LevyTriplet(drift=0.0, jumps=FiniteAtomic(((1.0, lam),)))
        n = 100_000
        counts = np.array([
            sample_path(triplet, 1.0, 0.5, rng=RngStream(123, i)).n_jumps
            for i in range(n)])
        # bins 0..8 plus a >=9 tail: 10 cells, 9 degrees of freedom
        observed = np.array([(counts == k).sum() for k in range(9)]
                            + [(counts >= 9).sum()], dtype=float)
        pmf = np.array([math.exp(-lam) * lam ** k / math.factorial(k)
                        for k in range(9)])
        expected = np.concatenate([pmf, [1.0 - pmf.sum()]]) * n
        chi2 = float(((observed - expected) ** 2 / expected).sum())
        assert chi2 < CHI2_CRIT_999_DF9

    def test_dyadic_family_terminal_mean(self):
        triplet = LevyTriplet(drift=0.0, jumps=dyadic_family(12))
        n = 10_000
        terms = np.array([
            sample_path(triplet, 1.0, 2.0 ** -12, rng=RngStream(3, i)).terminal
            for i in range(n)])
        # analytic mean of the compound Poisson: sum 2^n * 2^-n = 12, var = sum 2^-n
        var = sum(2.0 ** -n for n in range(1, 13))
        assert terms.mean() == pytest.approx(12.0, abs=4.0 * math.sqrt(var / n))

    def test_uniform_jump_times(self):
        triplet = LevyTriplet(drift=0.0, jumps=FiniteAtomic(((1.0, 5.0),)))
        times = np.concatenate([
            sample_path(triplet, 2.0, 0.5, rng=RngStream(9, i)).jump_times
            for i in range(4000)])
        assert times.min() > 0.0 and times.max() <= 2.0
        assert times.mean() == pytest.approx(1.0, abs=4.0 * (2.0 / math.sqrt(12.0)) / math.sqrt(len(times)))

    def test_compensation_shifts_drift(self):
        spec = FiniteAtomic(((0.5, 2.0), (2.0, 1.0)))
        triplet = LevyTriplet(drift=1.0, jumps=spec)
        p0 = sample_path(triplet, 1.0, 0.1, compensate=False, rng=RngStream(1, 1))
        p1 = sample_path(triplet, 1.0, 0.1, compensate=True, rng=RngStream(1, 1))
        # only sizes in (0.1, 1] compensate: 0.5 * 2.0 = 1.0
        assert p0.drift_rate == pytest.approx(1.0)
        assert p1.drift_rate == pytest.approx(0.0)
        assert np.array_equal(p0.jump_times, p1.jump_times)

    def test_density_spec_sizes_land_above_trunc(self):
        spec = DensityForm(intensity=lambda z: abs(z) ** -1.5, abs_max=1.0)
        triplet = LevyTriplet(drift=0.0, jumps=spec)
        path = sample_path(triplet, 1.0, 0.05, rng=RngStream(21, 0))
        assert path.n_jumps > 0
        assert np.all(np.abs(path.jump_sizes) >= 0.05)
        assert np.all(np.abs(path.jump_sizes) <= 1.0)

    def test_density_spec_size_law(self):
        # one-sided |z|^-3/2 above 0.25: P(size > s) = (s^-1/2 - 1) / (0.25^-1/2 - 1)
        spec = DensityForm(intensity=lambda z: abs(z) ** -1.5, abs_max=1.0,
                           two_sided=False)
        triplet = LevyTriplet(drift=0.0, jumps=spec)
        sizes = np.concatenate([
            sample_path(triplet, 1.0, 0.25, rng=RngStream(4, i)).jump_sizes
            for i in range(3000)])
        frac = (sizes > 0.5).mean()
        expected = (0.5 ** -0.5 - 1.0) / (0.25 ** -0.5 - 1.0)
        assert frac == pytest.approx(expected, abs=4.0 / math.sqrt(len(sizes)))

    def test_brownian_skeleton_variance(self):
        triplet = LevyTriplet(drift=0.0, jumps=FiniteAtomic(((1.0, 0.0),)),
                              brownian_variance=0.5)
        terms = np.array([
            sample_path(triplet, 1.0, 0.5, rng=RngStream(2, i),
                        brownian_cells=256).terminal
            for i in range(20_000)])
        assert terms.mean() == pytest.approx(0.0, abs=4.0 * math.sqrt(0.5 / 20_000))
        assert terms.var() == pytest.approx(0.5, rel=0.06)

    def test_deterministic_across_runs_and_threads(self):
        triplet = LevyTriplet(drift=0.1, jumps=FiniteAtomic(((1.0, 3.0), (-0.5, 2.0))))

        def draw(i):
            p = sample_path(triplet, 1.0, 0.1, rng=RngStream(42, i))
            return p.jump_times.tobytes() + p.jump_sizes.tobytes()

        serial = [draw(i) for i in range(64)]
        serial_again = [draw(i) for i in reversed(range(64))][::-1]
        with ThreadPoolExecutor(max_workers=8) as pool:
            threaded = list(pool.map(draw, range(64)))
        assert serial == serial_again == threaded

    def test_infinite_rate_above_trunc_rejected(self):
        spec = DensityForm(intensity=lambda z: abs(z) ** -3.5, abs_max=1.0)
        triplet = LevyTriplet(drift=0.0, jumps=spec)
        with pytest.raises(ValueError):
            sample_path(triplet, 1.0, -0.5, rng=RngStream(0, 0))


class TestDecomposition:
    def test_direct_selection(self):
        path = simple_path([(0.2, 0.05), (0.5, 0.05), (0.7, 1.0)])
        d = decompose_first_jump(path, 0.01, 0.1)
        assert d.T == 0.2
        assert d.T2 == 0.5
        assert d.marked_size == 0.05
        assert d.residual.n_jumps == 2

    def test_not_enough_marked(self):
        path = simple_path([(0.2, 0.05), (0.5, 0.05), (0.7, 1.0)])
        with pytest.raises(NotEnoughMarkedJumps):
            decompose_first_jump(path, 0.5, 2.0)

    def test_residual_removes_exactly_one(self):
        triplet = LevyTriplet(drift=0.0, jumps=FiniteAtomic(((0.3, 6.0),)))
        for i in range(20):
            path = sample_path(triplet, 1.0, 0.1, rng=RngStream(8, i))
            if path.n_jumps < 2:
                continue
            d = decompose_first_jump(path, 0.1, 0.5)
            assert d.residual.n_jumps == path.n_jumps - 1
            assert d.T not in d.residual.jump_times

    def test_resample_uniform_mean(self):
        path = simple_path([(0.2, 0.05), (0.5, 0.05), (0.7, 1.0)])
        d = decompose_first_jump(path, 0.01, 0.1)
        n = 100_000
        gen = RngStream(77, 0).generator()
        draws = np.array([
            resample_first_jump_time(d, gen=gen).jump_times.min() for i in range(n)])
        ratio = draws / d.T2
        assert ratio.mean() == pytest.approx(0.5, abs=3.0 * math.sqrt(1.0 / 12.0 / n))

    def test_resample_preserves_sizes_and_terminal(self):
        triplet = LevyTriplet(drift=0.2, jumps=FiniteAtomic(((0.3, 6.0), (1.5, 1.0))))
        done = 0
        for i in range(40):
            path = sample_path(triplet, 1.0, 0.1, rng=RngStream(5, i))
            try:
                d = decompose_first_jump(path, 0.1, 0.5)
            except NotEnoughMarkedJumps:
                continue
            new = resample_first_jump_time(d, rng=RngStream(5, i).child(1))
            assert new.n_jumps == path.n_jumps
            assert sorted(new.jump_sizes) == sorted(path.jump_sizes)
            if d.T2 < path.horizon:
                assert new.terminal == pytest.approx(path.terminal, abs=1e-12)
            done += 1
        assert done >= 20

    def test_roundtrip_preserves_conditioning_data(self):
        triplet = LevyTriplet(drift=0.0, jumps=FiniteAtomic(((0.3, 8.0),)))
        for i in range(20):
            path = sample_path(triplet, 1.0, 0.1, rng=RngStream(13, i))
            if path.n_jumps < 2:
                continue
            d = decompose_first_jump(path, 0.1, 0.5)
            new = resample_first_jump_time(d, rng=RngStream(13, i).child(2))
            d2 = decompose_first_jump(new, 0.1, 0.5)
            assert d2.T2 == d.T2
            assert d2.marked_size == d.marked_size
            assert np.array_equal(d2.residual.jump_times, d.residual.jump_times)
            assert np.array_equal(d2.residual.jump_sizes, d.residual.jump_sizes)


class TestShiftJumpTime:
    def test_zero_shift_identity(self):
        path = simple_path([(0.2, 0.05), (0.5, 0.05)])
        shifted = shift_jump_time(path, 0, 0.0)
        assert np.array_equal(shifted.jump_times, path.jump_times)

    def test_locality_and_terminal_invariance(self):
        path = simple_path([(0.2, 1.0), (0.6, -0.5)], drift=0.3)
        shifted = shift_jump_time(path, 0, 0.1)
        for s in (0.05, 0.15):
            assert shifted.value(s) == pytest.approx(path.value(s))
        assert shifted.terminal == pytest.approx(path.terminal)

    def test_ordering_violation_rejected(self):
        path = simple_path([(0.2, 1.0), (0.6, -0.5)])
        with pytest.raises(ValueError):
            shift_jump_time(path, 0, 0.5)
        with pytest.raises(ValueError):
            shift_jump_time(path, 0, -0.2)
        with pytest.raises(ValueError):
            shift_jump_time(path, 1, 0.5)
