import numpy as np
import pytest

from bsrkit.datagen import (Dataset, GaussianCaseConfig, ThermalCaseConfig,
                            ThermalPSFConfig, gen_defect_pattern,
                            gen_gaussian_problem, gen_illumination,
                            gen_thermal_problem, load_dataset, paint_runs,
                            save_dataset, thermal_psf)


class TestGaussian:
    def test_entry_variance(self):
        cfg = GaussianCaseConfig(n_r=8, n_meas=4, n_d=128, n_b=2, n_test=1,
                                 pnz=0.1, seed=0)
        # 128 x 32 is too few entries; use a wider config for the statistic
        cfg = GaussianCaseConfig(n_r=32, n_meas=32, n_d=128, n_b=2, n_test=1,
                                 pnz=0.1, seed=0)
        ds = gen_gaussian_problem(cfg)
        entries = ds.model.entries
        assert entries.size >= 1e5
        var = float(np.var(entries))
        assert abs(var - 1.0 / 128) <= 0.05 / 128

    def test_active_block_fraction(self):
        cfg = GaussianCaseConfig(n_r=32, n_meas=4, n_d=16, n_b=150, n_test=1,
                                 pnz=0.2, seed=1)
        ds = gen_gaussian_problem(cfg)
        active = np.any(ds.x_train != 0.0, axis=2)
        frac = float(np.mean(active))
        n = active.size
        sigma = np.sqrt(0.2 * 0.8 / n)
        assert abs(frac - 0.2) <= 4 * sigma

    def test_pnz_one_no_zero_rows(self):
        cfg = GaussianCaseConfig(n_r=16, n_meas=4, n_d=8, n_b=5, n_test=1,
                                 pnz=1.0, seed=2)
        ds = gen_gaussian_problem(cfg)
        assert np.all(np.any(ds.x_train != 0.0, axis=2))

    def test_noise_variance(self):
        cfg = GaussianCaseConfig(n_r=16, n_meas=16, n_d=64, n_b=100, n_test=1,
                                 pnz=0.1, snr_db=20.0, seed=3)
        ds = gen_gaussian_problem(cfg)
        clean = (ds.x_train.reshape(100, -1) @ ds.model.entries.T)[:, :, None]
        noise = ds.y_train - clean
        mu_sq = 0.1 * 16 * 16 / 64
        target = mu_sq / 100.0
        assert abs(float(np.var(noise)) - target) <= 0.05 * target

    def test_determinism_and_fixed_operator(self):
        cfg = GaussianCaseConfig(n_r=8, n_meas=4, n_d=16, n_b=3, n_test=2,
                                 seed=7)
        d1 = gen_gaussian_problem(cfg)
        d2 = gen_gaussian_problem(cfg)
        assert np.array_equal(d1.model.entries, d2.model.entries)
        assert np.array_equal(d1.x_train, d2.x_train)
        assert np.array_equal(d1.y_test, d2.y_test)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            gen_gaussian_problem(GaussianCaseConfig(pnz=0.0))
        with pytest.raises(ValueError):
            gen_gaussian_problem(GaussianCaseConfig(n_r=0))


class TestPatterns:
    def test_paint_single_run(self):
        mask = np.zeros(64, dtype=bool)
        mask[30] = True
        out = paint_runs(mask, 20, 1.0, 0.0)
        assert out.sum() == 20.0
        lo = 30 - 9  # (20-1)//2 leading pixels
        assert np.all(out[lo:lo + 20] == 1.0)

    def test_paint_overlap_merges(self):
        mask = np.zeros(32, dtype=bool)
        mask[[10, 12]] = True
        out = paint_runs(mask, 8, 1.0, 0.0)
        assert set(np.unique(out)) == {0.0, 1.0}
        assert out.sum() == 10.0  # union of [7,15) and [9,17)

    def test_defect_limit_pnz_zero(self):
        cfg = ThermalCaseConfig(n_r=64, n_meas=2, n_b=1, defect_pnz=0.0,
                                n_test=1)
        rng = np.random.default_rng(0)
        a = gen_defect_pattern(cfg, rng)
        assert np.all(a == cfg.absorption_levels[0])

    def test_defect_width_arithmetic(self):
        # width 1 mm at 0.05 mm pitch paints runs of 20 pixels
        cfg = ThermalCaseConfig(n_r=512, n_meas=2, n_b=1, defect_width=1.0,
                                pixel_pitch=0.05, defect_pnz=1.0 / 512,
                                n_test=1)
        rng = np.random.default_rng(12)
        for _ in range(50):
            a = gen_defect_pattern(cfg, rng)
            n_high = int(np.sum(a == 1.0))
            if n_high:
                assert n_high % 20 == 0 or n_high >= 20 - 10  # boundary clip
                break
        else:
            pytest.fail("no defect drawn in 50 tries")

    def test_defect_binary_levels(self):
        cfg = ThermalCaseConfig(n_r=128, n_meas=2, n_b=1, defect_pnz=0.1,
                                n_test=1)
        a = gen_defect_pattern(cfg, np.random.default_rng(3))
        assert set(np.unique(a)).issubset({0.0, 1.0})

    def test_illumination(self):
        cfg = ThermalCaseConfig(n_r=128, n_meas=2, n_b=1, illum_pnz=0.0,
                                n_test=1)
        rng = np.random.default_rng(4)
        assert np.all(gen_illumination(cfg, rng) == 0.0)
        cfg = ThermalCaseConfig(n_r=256, n_meas=2, n_b=1, illum_pnz=0.05,
                                line_width=0.8, pixel_pitch=0.05, n_test=1)
        line = gen_illumination(cfg, np.random.default_rng(5))
        assert set(np.unique(line)).issubset({0.0, 1.0})
        assert line.sum() > 0


class TestPsf:
    def test_delta_limit(self):
        cfg = ThermalPSFConfig(diffusivity=1e-12, evaluation_time=1e-6,
                               pulse_length=0.0, kernel_radius=4)
        k = thermal_psf(cfg, pixel_pitch=0.05)
        expected = np.zeros(9)
        expected[4] = 1.0
        assert np.allclose(k.taps, expected, atol=1e-12)

    def test_symmetry_and_unit_sum(self):
        cfg = ThermalPSFConfig(diffusivity=0.2, evaluation_time=0.5,
                               pulse_length=0.2, kernel_radius=33)
        k = thermal_psf(cfg, pixel_pitch=0.05)
        assert np.array_equal(k.taps, k.taps[::-1])
        assert abs(k.taps.sum() - 1.0) <= 1e-12
        assert np.all(k.taps >= 0.0)
        assert np.argmax(k.taps) == 33

    def test_truncation_warning(self):
        cfg = ThermalPSFConfig(diffusivity=0.5, evaluation_time=2.0,
                               pulse_length=0.0, kernel_radius=3)
        with pytest.warns(RuntimeWarning, match="mass"):
            thermal_psf(cfg, pixel_pitch=0.05)


class TestThermalProblem:
    def small_cfg(self, **kw):
        base = dict(n_r=64, n_meas=6, n_b=4, n_test=3, pixel_pitch=0.05,
                    defect_pnz=0.05, illum_pnz=0.05,
                    psf=ThermalPSFConfig(diffusivity=0.02, evaluation_time=0.5,
                                         pulse_length=0.2, kernel_radius=12))
        base.update(kw)
        return ThermalCaseConfig(**base)

    def test_zero_absorption_zero_everything(self):
        cfg = self.small_cfg(defect_pnz=0.0, absorption_levels=(0.0, 1.0))
        ds = gen_thermal_problem(cfg)
        assert np.all(ds.x_train == 0.0)
        # SNR is undefined for zero clean data: sigma collapses to zero
        assert np.all(ds.y_train == 0.0)

    def test_signal_is_illumination_times_absorption(self):
        cfg = self.small_cfg()
        ds = gen_thermal_problem(cfg)
        # active pixels must sit where the defect pattern is active
        for b in range(cfg.n_b):
            support = np.any(ds.x_train[b] != 0.0, axis=1)
            assert np.all(ds.defects_train[b][support] == 1.0)

    def test_noise_variance(self):
        cfg = self.small_cfg(n_b=40, n_meas=20, snr_db=8.0, defect_pnz=0.1,
                             illum_pnz=0.1, seed=6)
        ds = gen_thermal_problem(cfg)
        from bsrkit.linop import conv_same

        clean = conv_same(ds.x_train, ds.model.kernel.taps, axis=1)
        noise = ds.y_train - clean
        mu_sq = float(np.mean(clean ** 2))
        target = mu_sq / 10 ** 0.8
        assert abs(float(np.var(noise)) - target) <= 0.05 * target

    def test_clean_data_matches_dense_oracle(self):
        cfg = self.small_cfg(n_r=24, n_meas=3, n_b=2, n_test=1, snr_db=300.0,
                             defect_pnz=0.2, illum_pnz=0.2)
        ds = gen_thermal_problem(cfg)
        mat = ds.model.materialize_dense()
        for b in range(2):
            ref = (mat @ ds.x_train[b].reshape(-1)).reshape(24, 3)
            assert np.allclose(ds.y_train[b], ref, rtol=1e-7, atol=1e-9)

    def test_paper_scale_shapes(self):
        cfg = ThermalCaseConfig(n_r=1280, n_meas=150, n_b=150, n_test=2,
                                seed=0, psf=ThermalPSFConfig(kernel_radius=24))
        ds = gen_thermal_problem(cfg)
        assert ds.x_train.shape == (150, 1280, 150)
        assert ds.y_train.shape == (150, 1280, 150)
        assert ds.model.signal_shape == (1280, 150)

    def test_determinism(self):
        cfg = self.small_cfg(seed=9)
        d1 = gen_thermal_problem(cfg)
        d2 = gen_thermal_problem(cfg)
        assert np.array_equal(d1.x_test, d2.x_test)
        assert np.array_equal(d1.y_train, d2.y_train)
        assert np.array_equal(d1.defects_test, d2.defects_test)


class TestRoundtrip:
    @pytest.mark.parametrize("kind", ["gaussian", "thermal"])
    def test_save_load(self, tmp_path, kind):
        if kind == "gaussian":
            ds = gen_gaussian_problem(
                GaussianCaseConfig(n_r=8, n_meas=4, n_d=16, n_b=3, n_test=2,
                                   seed=5))
        else:
            ds = gen_thermal_problem(
                ThermalCaseConfig(n_r=32, n_meas=4, n_b=3, n_test=2, seed=5,
                                  psf=ThermalPSFConfig(kernel_radius=10,
                                                       diffusivity=0.02)))
        out = tmp_path / "ds"
        save_dataset(ds, out)
        back = load_dataset(out)
        assert back.kind == ds.kind
        assert np.array_equal(back.x_train, ds.x_train)
        assert np.array_equal(back.y_test, ds.y_test)
        assert back.model.signal_shape == ds.model.signal_shape
        if kind == "thermal":
            assert np.array_equal(back.defects_train, ds.defects_train)
            assert np.array_equal(back.model.kernel.taps, ds.model.kernel.taps)
        else:
            assert np.array_equal(back.model.entries, ds.model.entries)
