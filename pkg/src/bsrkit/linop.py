"""Linear forward models with exact adjoints and Lipschitz upper bounds.

Two operator families cover the toolkit:

* ``ConvolutionModel`` - 1-D same-size convolution with zero padding,
  applied independently to each measurement column.  The adjoint is the
  cross-correlation (true transpose), which coincides with a second
  convolution only for symmetric kernels.
* ``DenseModel`` - a dense matrix acting on the row-major vectorization
  of the signal (blocks = positions, contiguous in the vectorized index).

Both expose ``apply``, ``adjoint``, ``lipschitz_bound`` and
``materialize_dense`` so solvers and tests can treat them uniformly.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

MATERIALIZE_GUARD = 4096


def conv_same(x, taps, axis=0):
    """Zero-padded same-size convolution along ``axis``.

    Direct summation (no frequency-domain path); this is the reference
    implementation all accelerated paths must agree with.
    """
    taps = np.asarray(taps, dtype=float)
    return ndimage.convolve1d(np.asarray(x, dtype=float), taps, axis=axis,
                              mode="constant", cval=0.0)


def corr_same(x, taps, axis=0):
    """Zero-padded same-size cross-correlation: the exact transpose of
    :func:`conv_same` with the same taps."""
    taps = np.asarray(taps, dtype=float)
    return ndimage.correlate1d(np.asarray(x, dtype=float), taps, axis=axis,
                               mode="constant", cval=0.0)


def conv_same_matrix(taps, n) -> np.ndarray:
    """Banded n-by-n matrix T with T @ v == conv_same(v, taps)."""
    taps = np.asarray(taps, dtype=float)
    if taps.ndim != 1 or taps.size % 2 == 0:
        raise ValueError("taps must be a 1-D odd-length vector")
    c = (taps.size - 1) // 2
    mat = np.zeros((n, n))
    for t in range(taps.size):
        off = t - c  # y[i] += taps[t] * x[i - off]
        rows = np.arange(max(0, off), min(n, n + off))
        mat[rows, rows - off] += taps[t]
    return mat


def power_iteration(gram_apply, n, iters=200, tol=1e-10, seed=0) -> float:
    """Largest eigenvalue of a symmetric PSD operator by power iteration.

    ``gram_apply`` maps a length-n vector to the operator applied to it.
    Runs at most ``iters`` iterations, stopping once the eigen-residual
    ||Gv - lam*v|| drops below ``tol``-relative.  The returned value is
    inflated by twice the final residual: the result stays an upper
    estimate of the top eigenvalue even when a near-degenerate spectrum
    keeps plain power iteration from converging within the budget.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    resid = 0.0
    for _ in range(iters):
        w = gram_apply(v)
        lam = float(v @ w)
        resid = float(np.linalg.norm(w - lam * v))
        if resid <= tol * max(1.0, abs(lam)):
            break
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
    return lam + 2.0 * resid


@dataclass
class ConvKernel:
    """Odd-length 1-D blur kernel; ``pixel_pitch`` is metadata (length per tap)."""

    taps: np.ndarray
    pixel_pitch: float = 1.0

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=float)
        if self.taps.ndim != 1 or self.taps.size < 1:
            raise ValueError("kernel taps must be a nonempty 1-D vector")
        if self.taps.size % 2 == 0:
            raise ValueError("kernel length must be odd")
        if not np.all(np.isfinite(self.taps)):
            raise ValueError("kernel taps must be finite")

    @property
    def radius(self) -> int:
        return (self.taps.size - 1) // 2


class LinearModel:
    """Common interface for the forward operators used by the solvers."""

    signal_shape: tuple
    data_shape: tuple

    def apply(self, x):
        raise NotImplementedError

    def adjoint(self, r):
        raise NotImplementedError

    def lipschitz_bound(self) -> float:
        """Upper bound on the squared spectral norm of the operator."""
        raise NotImplementedError

    def materialize_dense(self) -> np.ndarray:
        """Explicit matrix M with apply(x) == (M @ vec(x)).reshape(data_shape).

        Guarded to small instances; intended as a brute-force oracle.
        """
        raise NotImplementedError

    def _check_signal(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != self.signal_shape:
            raise ValueError(
                f"signal shape {x.shape} does not match model {self.signal_shape}")
        return x

    def _check_data(self, r):
        r = np.asarray(r, dtype=float)
        if r.shape != self.data_shape:
            raise ValueError(
                f"data shape {r.shape} does not match model {self.data_shape}")
        return r

    def _guard(self):
        n = int(np.prod(self.signal_shape))
        if n > MATERIALIZE_GUARD:
            raise ValueError(
                f"refusing to materialize: {n} > {MATERIALIZE_GUARD} signal entries")


class ConvolutionModel(LinearModel):
    """Same-size zero-padded convolution applied to each measurement column."""

    def __init__(self, kernel: ConvKernel, signal_shape):
        if not isinstance(kernel, ConvKernel):
            kernel = ConvKernel(np.asarray(kernel, dtype=float))
        n_r, n_meas = map(int, signal_shape)
        if n_r < 1 or n_meas < 1:
            raise ValueError("signal_shape entries must be >= 1")
        self.kernel = kernel
        self.signal_shape = (n_r, n_meas)
        self.data_shape = (n_r, n_meas)

    @property
    def taps(self) -> np.ndarray:
        return self.kernel.taps

    def apply(self, x):
        x = self._check_signal(x)
        return conv_same(x, self.kernel.taps, axis=0)

    def adjoint(self, r):
        r = self._check_data(r)
        return corr_same(r, self.kernel.taps, axis=0)

    def lipschitz_bound(self) -> float:
        # Max squared DFT magnitude on a grid no coarser than the zero-padded
        # support: the linear-convolution matrix is a submatrix of the
        # circulant on that length, so this upper-bounds ||T||^2.
        n_fft = self.signal_shape[0] + self.kernel.taps.size - 1
        spectrum = np.fft.fft(self.kernel.taps, n=n_fft)
        return float(np.max(np.abs(spectrum) ** 2))

    def materialize_dense(self) -> np.ndarray:
        self._guard()
        n_r, n_meas = self.signal_shape
        band = conv_same_matrix(self.kernel.taps, n_r)
        if n_meas == 1:
            return band
        return np.kron(band, np.eye(n_meas))


class DenseModel(LinearModel):
    """Dense matrix acting on the row-major vectorization of the signal."""

    def __init__(self, entries, block_count, block_size):
        entries = np.asarray(entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] < 1:
            raise ValueError("entries must be a 2-D matrix with >= 1 row")
        if not np.all(np.isfinite(entries)):
            raise ValueError("entries must be finite")
        if entries.shape[1] != int(block_count) * int(block_size):
            raise ValueError("column count must equal block_count * block_size")
        self.entries = entries
        self.block_count = int(block_count)
        self.block_size = int(block_size)
        self.signal_shape = (self.block_count, self.block_size)
        self.data_shape = (entries.shape[0], 1)

    def apply(self, x):
        x = self._check_signal(x)
        return (self.entries @ x.reshape(-1))[:, None]

    def adjoint(self, r):
        r = self._check_data(r)
        return (self.entries.T @ r[:, 0]).reshape(self.signal_shape)

    def lipschitz_bound(self) -> float:
        a = self.entries
        if a.shape[0] <= a.shape[1]:
            gram = a @ a.T
        else:
            gram = a.T @ a
        return power_iteration(lambda v: gram @ v, gram.shape[0])

    def materialize_dense(self) -> np.ndarray:
        self._guard()
        return self.entries.copy()
