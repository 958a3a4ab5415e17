"""Quantitative evaluation: NMSE in dB, confidence intervals, tied-vs-untied
gain, defect-profile extraction, and the 1-Wasserstein distance between
normalized 1-D profiles."""

from dataclasses import dataclass
from typing import Optional

import numpy as np


def nmse_db(estimate, truth) -> float:
    """10*log10(||truth - estimate||_F^2 / ||truth||_F^2).

    A perfect estimate returns -inf; an identically-zero truth is an error.
    """
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError("estimate and truth shapes differ")
    denom = float(np.sum(truth * truth))
    if denom == 0.0:
        raise ValueError("NMSE undefined for identically-zero ground truth")
    num = float(np.sum((truth - estimate) ** 2))
    if num == 0.0:
        return float("-inf")
    return 10.0 * np.log10(num / denom)


def untied_gain(nmse_untied, nmse_tied) -> float:
    """NMSE gain of untied over tied learning; positive means degradation."""
    return float(nmse_untied) - float(nmse_tied)


def ci95(samples):
    """Normal-approximation 95% interval: mean +/- 1.96*std/sqrt(n), ddof=0."""
    samples = np.asarray(samples, dtype=float).ravel()
    n = samples.size
    if n < 2:
        raise ValueError("need at least 2 samples for a confidence interval")
    mean = float(np.mean(samples))
    half = 1.96 * float(np.std(samples)) / np.sqrt(n)
    return mean, mean - half, mean + half


def defect_estimate(xhat) -> np.ndarray:
    """Sum the reconstruction over measurements and max-normalize.

    Row sums approximate the defect pattern when many structured
    illuminations cover the field; the peak is scaled to 1 so profiles are
    comparable across runs.  Sign is kept (artifacts can dip below zero).
    An all-zero input returns the zero vector.
    """
    xhat = np.asarray(xhat, dtype=float)
    if xhat.ndim != 2:
        raise ValueError("expected a 2-D (n_blocks, n_meas) reconstruction")
    sums = np.sum(xhat, axis=1)
    peak = float(np.max(sums)) if sums.size else 0.0
    if peak > 0.0:
        return sums / peak
    if np.all(sums == 0.0):
        return sums
    return sums / float(np.max(np.abs(sums)))


def wasserstein1(u, v) -> float:
    """1-Wasserstein distance between nonnegative 1-D profiles, in [0, 1].

    Each profile is normalized to unit mass, positions are mapped to
    [0, 1], and the distance is the summed absolute CDF difference scaled
    by 1/(N-1).  Point masses at opposite ends give exactly 1.
    """
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise ValueError("profiles must have equal length")
    if np.any(u < 0) or np.any(v < 0):
        raise ValueError("profiles must be nonnegative")
    mu, mv = float(np.sum(u)), float(np.sum(v))
    if mu == 0.0 or mv == 0.0:
        raise ValueError("profiles must have positive mass")
    n = u.size
    if n == 1:
        return 0.0
    cdf_u = np.cumsum(u) / mu
    cdf_v = np.cumsum(v) / mv
    return float(np.sum(np.abs(cdf_u - cdf_v)) / (n - 1))


@dataclass
class NmseCurve:
    """Mean NMSE (dB) per iteration/depth over a test set, with 95% CI."""

    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_samples: int

    @classmethod
    def from_samples(cls, per_instance) -> "NmseCurve":
        """Build from an (n_instances, n_points) array of NMSE values."""
        per_instance = np.asarray(per_instance, dtype=float)
        if per_instance.ndim != 2 or per_instance.shape[0] < 2:
            raise ValueError("need a 2-D array with >= 2 instances")
        stats = [ci95(per_instance[:, j]) for j in range(per_instance.shape[1])]
        mean, lower, upper = (np.array(col) for col in zip(*stats))
        return cls(mean=mean, lower=lower, upper=upper,
                   n_samples=per_instance.shape[0])

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "nmse_mean_db", "ci95_lower", "ci95_upper"])
            for i in range(len(self.mean)):
                writer.writerow([i, repr(float(self.mean[i])),
                                 repr(float(self.lower[i])),
                                 repr(float(self.upper[i]))])


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    matplotlib.rcParams["svg.hashsalt"] = "bsrkit"
    import matplotlib.pyplot as plt

    return plt


def _save_svg(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_nmse_curves(curves: dict, path, xlabel="iteration") -> None:
    """SVG line plot of one or more NmseCurve objects with CI bands."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, curve in curves.items():
        xs = np.arange(len(curve.mean))
        ax.plot(xs, curve.mean, label=f"{label} (n={curve.n_samples})")
        ax.fill_between(xs, curve.lower, curve.upper, alpha=0.25)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("NMSE [dB]")
    ax.legend()
    ax.grid(True, alpha=0.4)
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def plot_profiles(profiles: dict, path, pixel_pitch=None) -> None:
    """SVG line plot of 1-D defect/amplitude profiles."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for label, prof in profiles.items():
        prof = np.asarray(prof, dtype=float)
        xs = np.arange(prof.size)
        if pixel_pitch:
            xs = xs * pixel_pitch
        ax.plot(xs, prof, label=label)
    ax.set_xlabel("position" + ("" if not pixel_pitch else " [length units]"))
    ax.set_ylabel("normalized amplitude")
    ax.legend()
    ax.grid(True, alpha=0.4)
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)
