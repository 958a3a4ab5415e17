"""Synthetic problem generation.

Two families:

* Gaussian case - dense sensing matrix with entries N(0, 1/n_data),
  block-sparse targets (a row of the signal matrix is active with
  probability ``pnz``, active entries are unit normal), noise calibrated
  to an SNR whose signal power is the analytic mean pnz*n_r*n_meas/n_d.
* Thermal convolution case - defect/illumination run patterns on a pixel
  grid, blurred by a surrogate diffusion kernel, noise calibrated to the
  mean squared clean measurement of the training split.

Everything is deterministic given (config, seed); independent purposes
draw from independently spawned seed streams.
"""

import os
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import fileio
from .linop import ConvKernel, ConvolutionModel, DenseModel, conv_same


@dataclass
class GaussianCaseConfig:
    n_r: int = 32
    n_meas: int = 32
    n_d: int = 128
    n_b: int = 150
    pnz: float = 0.1
    snr_db: float = 20.0
    seed: int = 0
    n_test: int = 250

    def validate(self):
        if min(self.n_r, self.n_meas, self.n_d, self.n_b, self.n_test) < 1:
            raise ValueError("all dimensions must be >= 1")
        if not 0.0 < self.pnz <= 1.0:
            raise ValueError("pnz must lie in (0, 1]")


@dataclass
class ThermalPSFConfig:
    """Surrogate diffusion blur: a normalized Gaussian in space whose width
    grows with diffusivity and an effective time that includes half the
    excitation pulse."""

    diffusivity: float = 0.1      # length^2 / time
    evaluation_time: float = 0.5  # time
    pulse_length: float = 0.2     # time
    amplitude: float = 1.0
    kernel_radius: int = 24       # taps on each side of the center

    def validate(self):
        if min(self.diffusivity, self.evaluation_time, self.amplitude) <= 0:
            raise ValueError("physical PSF parameters must be positive")
        if self.pulse_length < 0:
            raise ValueError("pulse_length must be nonnegative")
        if self.kernel_radius < 0:
            raise ValueError("kernel_radius must be nonnegative")


@dataclass
class ThermalCaseConfig:
    n_r: int = 1280
    n_meas: int = 150
    n_b: int = 150
    defect_width: float = 1.0       # length units (e.g. mm)
    defect_pnz: float = 0.01
    absorption_levels: tuple = (0.0, 1.0)   # (defect-free, defective)
    line_width: float = 0.8
    illum_pnz: float = 0.01
    snr_db: float = 8.0
    pixel_pitch: float = 0.05       # length units per pixel
    psf: ThermalPSFConfig = field(default_factory=ThermalPSFConfig)
    seed: int = 0
    n_test: int = 250

    def validate(self):
        if min(self.n_r, self.n_meas, self.n_b, self.n_test) < 1:
            raise ValueError("all dimensions must be >= 1")
        if self.defect_width <= 0 or self.line_width <= 0 or self.pixel_pitch <= 0:
            raise ValueError("widths and pixel pitch must be positive")
        for p in (self.defect_pnz, self.illum_pnz):
            if not 0.0 <= p <= 1.0:
                raise ValueError("pnz values must lie in [0, 1]")
        low, high = self.absorption_levels
        if not (0.0 <= low <= 1.0 and 0.0 <= high <= 1.0):
            raise ValueError("absorption levels must lie in [0, 1]")
        self.psf.validate()


@dataclass
class Dataset:
    """Generated problem: the forward model plus train/test batches.

    Batched arrays use a leading batch axis: signals are
    (n_batch, n_r, n_meas); measurements are (n_batch, n_r, n_meas) for
    the convolution case and (n_batch, n_d, 1) for the Gaussian case.
    Thermal datasets also carry the per-instance defect patterns.
    """

    kind: str
    model: object
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    manifest: dict
    defects_train: Optional[np.ndarray] = None
    defects_test: Optional[np.ndarray] = None


def _block_sparse_signals(rng, n_instances, n_r, n_meas, pnz) -> np.ndarray:
    x = np.zeros((n_instances, n_r, n_meas))
    for b in range(n_instances):
        active = rng.random(n_r) < pnz
        values = rng.standard_normal((int(active.sum()), n_meas))
        x[b, active, :] = values
    return x


def gen_gaussian_problem(cfg: GaussianCaseConfig) -> Dataset:
    """Dense sensing problem with block-sparse targets and 20 dB-style noise."""
    cfg.validate()
    streams = np.random.SeedSequence(cfg.seed).spawn(5)
    rng_a, rng_xtr, rng_ntr, rng_xte, rng_nte = map(np.random.default_rng, streams)

    n = cfg.n_r * cfg.n_meas
    entries = rng_a.standard_normal((cfg.n_d, n)) / np.sqrt(cfg.n_d)
    model = DenseModel(entries, cfg.n_r, cfg.n_meas)

    mu_sq = cfg.pnz * n / cfg.n_d
    sigma = float(np.sqrt(mu_sq / 10.0 ** (cfg.snr_db / 10.0)))

    def make_split(rng_x, rng_n, count):
        x = _block_sparse_signals(rng_x, count, cfg.n_r, cfg.n_meas, cfg.pnz)
        y_clean = (x.reshape(count, n) @ entries.T)[:, :, None]
        y = y_clean + sigma * rng_n.standard_normal(y_clean.shape)
        return x, y, y_clean

    x_train, y_train, yc_train = make_split(rng_xtr, rng_ntr, cfg.n_b)
    x_test, y_test, _ = make_split(rng_xte, rng_nte, cfg.n_test)

    noise_power = float(np.mean((y_train - yc_train) ** 2))
    manifest = {
        "schema_version": fileio.SCHEMA_VERSION,
        "kind": "gaussian",
        "config": asdict(cfg),
        "realized": {
            "mu_sq": mu_sq,
            "sigma_noise": sigma,
            "snr_db_empirical": float(10.0 * np.log10(mu_sq / noise_power))
            if noise_power > 0 else None,
        },
    }
    return Dataset(kind="gaussian", model=model, x_train=x_train,
                   y_train=y_train, x_test=x_test, y_test=y_test,
                   manifest=manifest)


def paint_runs(center_mask, width_px, high, low) -> np.ndarray:
    """Paint contiguous runs of ``width_px`` pixels (value ``high``) centered
    at each flagged pixel of ``center_mask``; overlapping runs merge."""
    n = center_mask.size
    out = np.full(n, float(low))
    width_px = max(int(width_px), 1)
    lead = (width_px - 1) // 2
    for c in np.flatnonzero(center_mask):
        lo = max(c - lead, 0)
        hi = min(lo + width_px, n)
        out[lo:hi] = high
    return out


def gen_defect_pattern(cfg: ThermalCaseConfig, rng) -> np.ndarray:
    """Absorption vector: runs of round(defect_width/pixel_pitch) pixels at
    the high level, drawn with per-pixel center probability defect_pnz."""
    centers = rng.random(cfg.n_r) < cfg.defect_pnz
    width_px = int(round(cfg.defect_width / cfg.pixel_pitch))
    low, high = cfg.absorption_levels
    return paint_runs(centers, width_px, high, low)


def gen_illumination(cfg: ThermalCaseConfig, rng) -> np.ndarray:
    """Unit-amplitude illumination runs of round(line_width/pixel_pitch)
    pixels, freshly drawn per measurement."""
    centers = rng.random(cfg.n_r) < cfg.illum_pnz
    width_px = int(round(cfg.line_width / cfg.pixel_pitch))
    return paint_runs(centers, width_px, 1.0, 0.0)


def thermal_psf(cfg: ThermalPSFConfig, pixel_pitch) -> ConvKernel:
    """Symmetric nonnegative surrogate blur kernel, normalized to unit sum.

    Taps follow exp(-r^2 / (4 * diffusivity * t_eff)) with
    t_eff = evaluation_time + pulse_length / 2, truncated at
    ``kernel_radius`` taps each side.  Warns when the truncation drops
    more than 0.1% of the mass.
    """
    cfg.validate()
    if pixel_pitch <= 0:
        raise ValueError("pixel_pitch must be positive")
    t_eff = cfg.evaluation_time + cfg.pulse_length / 2.0
    denom = 4.0 * cfg.diffusivity * t_eff

    def profile(radius):
        r = np.arange(-radius, radius + 1) * pixel_pitch
        return cfg.amplitude * np.exp(-(r * r) / denom)

    taps = profile(cfg.kernel_radius)
    wide = profile(max(4 * cfg.kernel_radius, cfg.kernel_radius + 64))
    if taps.sum() < 0.999 * wide.sum():
        warnings.warn(
            f"kernel_radius={cfg.kernel_radius} holds only "
            f"{taps.sum() / wide.sum():.4%} of the blur mass", RuntimeWarning)
    return ConvKernel(taps / taps.sum(), pixel_pitch=pixel_pitch)


def gen_thermal_problem(cfg: ThermalCaseConfig) -> Dataset:
    """Convolution problem: signals are illumination*absorption products,
    measurements their blurred, noisy images."""
    cfg.validate()
    streams = np.random.SeedSequence(cfg.seed).spawn(6)
    (rng_dtr, rng_itr, rng_ntr,
     rng_dte, rng_ite, rng_nte) = map(np.random.default_rng, streams)

    kernel = thermal_psf(cfg.psf, cfg.pixel_pitch)
    model = ConvolutionModel(kernel, (cfg.n_r, cfg.n_meas))

    def make_split(rng_d, rng_i, count):
        x = np.zeros((count, cfg.n_r, cfg.n_meas))
        defects = np.zeros((count, cfg.n_r))
        for b in range(count):
            a = gen_defect_pattern(cfg, rng_d)
            defects[b] = a
            for m in range(cfg.n_meas):
                x[b, :, m] = gen_illumination(cfg, rng_i) * a
        y_clean = conv_same(x, kernel.taps, axis=1)
        return x, defects, y_clean

    x_train, d_train, yc_train = make_split(rng_dtr, rng_itr, cfg.n_b)
    x_test, d_test, yc_test = make_split(rng_dte, rng_ite, cfg.n_test)

    mu_sq = float(np.mean(yc_train ** 2))
    sigma = float(np.sqrt(mu_sq / 10.0 ** (cfg.snr_db / 10.0))) if mu_sq > 0 else 0.0
    y_train = yc_train + sigma * rng_ntr.standard_normal(yc_train.shape)
    y_test = yc_test + sigma * rng_nte.standard_normal(yc_test.shape)

    noise_power = float(np.mean((y_train - yc_train) ** 2))
    manifest = {
        "schema_version": fileio.SCHEMA_VERSION,
        "kind": "thermal",
        "config": _thermal_cfg_dict(cfg),
        "realized": {
            "mu_sq_clean_train": mu_sq,
            "sigma_noise": sigma,
            "snr_db_empirical": float(10.0 * np.log10(mu_sq / noise_power))
            if noise_power > 0 else None,
        },
    }
    return Dataset(kind="thermal", model=model, x_train=x_train,
                   y_train=y_train, x_test=x_test, y_test=y_test,
                   manifest=manifest, defects_train=d_train, defects_test=d_test)


def _thermal_cfg_dict(cfg: ThermalCaseConfig) -> dict:
    d = asdict(cfg)
    d["absorption_levels"] = [float(v) for v in cfg.absorption_levels]
    return d


_SPLIT_FILES = ("x_train", "y_train", "x_test", "y_test")


def save_dataset(ds: Dataset, out_dir) -> None:
    """Write batches, the forward model, and the manifest to a directory."""
    os.makedirs(out_dir, exist_ok=True)
    files = {}
    for name in _SPLIT_FILES:
        fname = f"{name}.bsr"
        fileio.write_array(os.path.join(out_dir, fname), getattr(ds, name))
        files[name] = fname
    if ds.kind == "gaussian":
        fileio.write_array(os.path.join(out_dir, "model.bsr"), ds.model.entries)
        files["model"] = "model.bsr"
    else:
        fileio.write_array(os.path.join(out_dir, "model.bsr"), ds.model.kernel.taps)
        files["model"] = "model.bsr"
        for name, arr in (("defects_train", ds.defects_train),
                          ("defects_test", ds.defects_test)):
            fname = f"{name}.bsr"
            fileio.write_array(os.path.join(out_dir, fname), arr)
            files[name] = fname
    manifest = dict(ds.manifest)
    manifest["files"] = files
    fileio.write_json(os.path.join(out_dir, "manifest.json"), manifest)


def load_dataset(data_dir) -> Dataset:
    manifest = fileio.read_json(os.path.join(data_dir, "manifest.json"))
    kind = manifest.get("kind")
    if kind not in ("gaussian", "thermal"):
        raise fileio.DataFormatError(f"{data_dir}: unknown dataset kind {kind!r}")
    arrays = {name: fileio.read_array(os.path.join(data_dir, f"{name}.bsr"))
              for name in _SPLIT_FILES}
    cfg = manifest["config"]
    model_arr = fileio.read_array(os.path.join(data_dir, "model.bsr"))
    if kind == "gaussian":
        model = DenseModel(model_arr, cfg["n_r"], cfg["n_meas"])
        defects_train = defects_test = None
    else:
        kernel = ConvKernel(model_arr.reshape(-1), pixel_pitch=cfg["pixel_pitch"])
        model = ConvolutionModel(kernel, (cfg["n_r"], cfg["n_meas"]))
        defects_train = fileio.read_array(os.path.join(data_dir, "defects_train.bsr"))
        defects_test = fileio.read_array(os.path.join(data_dir, "defects_test.bsr"))
    return Dataset(kind=kind, model=model, manifest=manifest,
                   defects_train=defects_train, defects_test=defects_test,
                   **arrays)
