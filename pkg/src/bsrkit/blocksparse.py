"""Joint (block) sparsity: row-norm structure, the l2,1-regularized
objective, the block soft-thresholding operator and its exact
reverse-mode derivative.

Signals are real matrices of shape (n_blocks, n_meas): row k collects the
values of block k across all measurement columns.
"""

import numpy as np


def block_norms(x) -> np.ndarray:
    """Euclidean norm of each row (block) of ``x``."""
    x = _check_signal(x)
    return np.sqrt(np.sum(x * x, axis=1))


def l21_norm(x) -> float:
    """Sum of row norms (the l2,1 norm)."""
    return float(np.sum(block_norms(x)))


def objective(model, x, t, lam) -> float:
    """Data fit plus regularization: ||model(x) - t||_F^2 + lam * ||x||_2,1."""
    x = _check_signal(x)
    r = model.apply(x) - np.asarray(t, dtype=float)
    return float(np.sum(r * r) + lam * l21_norm(x))


def block_soft_threshold(x, lam) -> np.ndarray:
    """Scale each row by max(0, 1 - lam/||row||); zero rows stay zero.

    ``lam`` may be any finite real: negative values rescale rows by a
    factor > 1 (the affine branch), they never gate rows off.
    """
    x = _check_signal(x)
    out, _, _, _ = _bst_forward(x, float(lam), m_axis=1)
    return out


def block_soft_threshold_vjp(x, lam, upstream):
    """Vector-Jacobian product of :func:`block_soft_threshold`.

    Returns ``(dx, dlam)`` for the given upstream cotangent.  Rows at the
    nondifferentiable boundary ||row|| == lam take the zero branch;
    exactly-zero rows contribute nothing.
    """
    x = _check_signal(x)
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != x.shape:
        raise ValueError("upstream shape must match signal shape")
    return _bst_vjp(x, float(lam), upstream, m_axis=1)


def _check_signal(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError("signal must be a 2-D (n_blocks, n_meas) matrix")
    return x


# Internal ND forms shared with the network forward/backward, which keeps
# layer states with an extra batch axis.  ``m_axis`` selects the
# measurement axis the row norms reduce over.

def _bst_forward(x, lam, m_axis):
    norms = np.sqrt(np.sum(x * x, axis=m_axis, keepdims=True))
    active = norms > max(lam, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(active, 1.0 - lam / np.where(active, norms, 1.0), 0.0)
    return scale * x, norms, scale, active


def _bst_vjp(x, lam, upstream, m_axis):
    _, norms, scale, active = _bst_forward(x, lam, m_axis)
    dots = np.sum(x * upstream, axis=m_axis, keepdims=True)
    safe = np.where(active, norms, 1.0)
    dx = np.where(active, scale * upstream + (lam / safe ** 3) * dots * x, 0.0)
    # Fixed reduction order (C-order sum) for reproducibility.
    dlam = -float(np.sum(np.where(active, dots / safe, 0.0)))
    return dx, dlam
