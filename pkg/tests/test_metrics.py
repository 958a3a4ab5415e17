import numpy as np
import pytest
from scipy import stats

from bsrkit.metrics import (NmseCurve, ci95, defect_estimate, nmse_db,
                            untied_gain, wasserstein1)


class TestNmse:
    def test_perfect_estimate_sentinel(self):
        x = np.ones((3, 2))
        assert nmse_db(x, x) == float("-inf")

    def test_zero_estimate_is_zero_db(self):
        x = np.random.default_rng(0).standard_normal((4, 3))
        assert nmse_db(np.zeros_like(x), x) == 0.0

    def test_quarter_energy(self):
        x = np.zeros((2, 2))
        x[0, 0] = 2.0
        est = x.copy()
        est[0, 0] = 1.0  # error energy 1 = (1/4)*||x||^2
        expected = 10.0 * np.log10(0.25)
        assert abs(nmse_db(est, x) - expected) <= 1e-9
        assert expected == pytest.approx(-6.0206, abs=1e-4)

    def test_zero_truth_error(self):
        with pytest.raises(ValueError):
            nmse_db(np.ones((2, 2)), np.zeros((2, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            nmse_db(np.zeros((2, 2)), np.zeros((2, 3)))


class TestGain:
    def test_improvement_is_negative(self):
        assert untied_gain(-10.0, -8.0) == -2.0

    def test_equal_inputs(self):
        assert untied_gain(-5.5, -5.5) == 0.0


class TestCi95:
    def test_constant_samples_zero_width(self):
        mean, lo, hi = ci95([2.0, 2.0, 2.0])
        assert (mean, lo, hi) == (2.0, 2.0, 2.0)

    def test_two_sample_arithmetic(self):
        mean, lo, hi = ci95([0.0, 2.0])
        assert mean == 1.0
        half = 1.96 * 1.0 / np.sqrt(2.0)
        assert hi - mean == pytest.approx(half, rel=1e-12)
        assert mean - lo == pytest.approx(half, rel=1e-12)

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        mean, lo, hi = ci95(rng.standard_normal(40))
        assert hi - mean == pytest.approx(mean - lo, rel=1e-12)

    def test_width_shrinks_like_sqrt_n(self):
        rng = np.random.default_rng(2)
        base = rng.standard_normal(400)
        _, lo1, hi1 = ci95(base[:100])
        _, lo2, hi2 = ci95(np.tile(base[:100], 4))  # same spread, 4x n
        assert (hi2 - lo2) == pytest.approx((hi1 - lo1) / 2.0, rel=1e-12)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            ci95([1.0])


class TestDefectEstimate:
    def test_one_hot_rows(self):
        x = np.zeros((4, 3))
        x[1] = [1.0, 2.0, 1.0]
        x[3] = [0.5, 0.5, 1.0]
        prof = defect_estimate(x)
        assert prof[1] == 1.0
        assert prof[3] == pytest.approx(0.5)
        assert prof[0] == prof[2] == 0.0

    def test_zero_input(self):
        assert np.array_equal(defect_estimate(np.zeros((3, 2))), np.zeros(3))

    def test_row_sum_oracle(self):
        rng = np.random.default_rng(3)
        x = np.abs(rng.standard_normal((6, 4)))
        sums = x.sum(axis=1)
        assert np.allclose(defect_estimate(x), sums / sums.max(), rtol=1e-14)

    def test_keeps_negative_dips(self):
        x = np.array([[1.0, 1.0], [-0.5, -0.5]])
        prof = defect_estimate(x)
        assert prof[0] == 1.0 and prof[1] == pytest.approx(-0.5)


class TestWasserstein:
    def test_identical(self):
        u = np.array([0.2, 0.5, 0.3])
        assert wasserstein1(u, u) == 0.0

    def test_extreme_transport(self):
        n = 9
        u = np.zeros(n); u[0] = 1.0
        v = np.zeros(n); v[-1] = 1.0
        assert wasserstein1(u, v) == 1.0

    def test_half_transport(self):
        n = 9
        u = np.zeros(n); u[0] = 1.0
        v = np.zeros(n); v[(n - 1) // 2] = 1.0
        assert wasserstein1(u, v) == 0.5

    def test_scipy_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n = int(rng.integers(2, 40))
            u = rng.random(n)
            v = rng.random(n)
            positions = np.linspace(0.0, 1.0, n)
            expected = stats.wasserstein_distance(positions, positions, u, v)
            assert wasserstein1(u, v) == pytest.approx(expected, abs=1e-12)

    def test_metric_properties(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            n = int(rng.integers(2, 20))
            u, v, w = rng.random((3, n))
            duv = wasserstein1(u, v)
            dvu = wasserstein1(v, u)
            assert duv == pytest.approx(dvu, abs=1e-15)
            assert 0.0 <= duv <= 1.0
            duw = wasserstein1(u, w)
            dwv = wasserstein1(w, v)
            assert duv <= duw + dwv + 1e-12
        # identity of indiscernibles on normalized inputs
        u = rng.random(8)
        assert wasserstein1(u, 3.0 * u) == pytest.approx(0.0, abs=1e-15)

    def test_errors(self):
        with pytest.raises(ValueError):
            wasserstein1([-1.0, 1.0], [1.0, 0.0])
        with pytest.raises(ValueError):
            wasserstein1([0.0, 0.0], [1.0, 0.0])
        with pytest.raises(ValueError):
            wasserstein1([1.0, 0.0], [1.0, 0.0, 0.0])

    def test_single_bin(self):
        assert wasserstein1([2.0], [5.0]) == 0.0


class TestCurve:
    def test_from_samples(self):
        rng = np.random.default_rng(6)
        per_instance = rng.standard_normal((10, 4)) - 5.0
        curve = NmseCurve.from_samples(per_instance)
        assert curve.n_samples == 10
        assert len(curve.mean) == 4
        assert np.all(curve.lower <= curve.mean)
        assert np.all(curve.mean <= curve.upper)

    def test_csv(self, tmp_path):
        curve = NmseCurve.from_samples(np.zeros((3, 2)))
        path = tmp_path / "curve.csv"
        curve.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "iteration,nmse_mean_db,ci95_lower,ci95_upper"
        assert len(lines) == 3

    def test_plots_render(self, tmp_path):
        from bsrkit.metrics import plot_nmse_curves, plot_profiles

        curve = NmseCurve.from_samples(
            np.random.default_rng(7).standard_normal((5, 6)))
        p1 = tmp_path / "curve.svg"
        plot_nmse_curves({"solver": curve}, p1)
        assert p1.stat().st_size > 500
        p2 = tmp_path / "profiles.svg"
        plot_profiles({"a": np.ones(10), "b": np.zeros(10)}, p2,
                      pixel_pitch=0.05)
        assert p2.stat().st_size > 500
