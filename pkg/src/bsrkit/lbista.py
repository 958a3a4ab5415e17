"""Unrolled learned block-ISTA network: parameter store, initialization,
and forward passes (plain and taped) for tied and untied weight sharing.

Layer recursion (1-based layer index i, thresholds lam[i-1]):

    tied:    x_0 = B y                (un-thresholded, exposed for stage-0)
             x_1 = eta(B y)
             x_i = eta(S x_{i-1} + B y),        i >= 2
    untied:  x_0 = 0
             x_i = eta(S_{i-1} x_{i-1} + B_{i-1} y),  i >= 1

At initialization B represents 2*gamma*(adjoint of the forward model) and
S represents I - B*model, which makes the untied forward coincide with
BISTA iterate-for-iterate.  For the convolution variant the trainable
weights are kernel taps (B on the model's support, S on the composed
2*N_k-1 support); a pair of small frozen corner blocks completes S so
that S x == x - B(model(x)) holds exactly on the zero-padded domain,
where a banded matrix alone cannot represent the composition.
"""

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fileio
from .blocksparse import _bst_forward
from .linop import ConvolutionModel, DenseModel, conv_same_matrix


@dataclass
class NetworkParams:
    """Trainable variables plus the fixed structure they are bound to.

    ``b_weights``/``s_weights`` hold one array for tied mode and one per
    layer for untied mode: kernel taps for the convolution variant, full
    matrices for the dense variant.  ``s_boundary`` is the frozen
    (top, bottom) corner pair of the convolution S operator (None when
    the kernel has radius 0 or for dense models).
    """

    mode: str
    variant: str
    n_layers: int
    signal_shape: tuple
    data_dim: int
    lambdas: np.ndarray
    b_weights: list
    s_weights: list
    s_boundary: Optional[tuple] = None
    gamma: float = 0.0
    lambda0: float = 0.0

    def weight_index(self, layer: int) -> int:
        """Index into the weight lists for 1-based layer ``layer``."""
        return 0 if self.mode == "tied" else layer - 1

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            mode=self.mode, variant=self.variant, n_layers=self.n_layers,
            signal_shape=tuple(self.signal_shape), data_dim=self.data_dim,
            lambdas=self.lambdas.copy(),
            b_weights=[w.copy() for w in self.b_weights],
            s_weights=[w.copy() for w in self.s_weights],
            s_boundary=None if self.s_boundary is None else
            (self.s_boundary[0].copy(), self.s_boundary[1].copy()),
            gamma=self.gamma, lambda0=self.lambda0)


@dataclass
class ForwardTape:
    """Intermediates retained by :func:`forward_tape` for the reverse sweep."""

    depth: int
    n_batch: int
    y_cols: np.ndarray
    states: list            # packed x_0 .. x_depth
    pres: list              # packed pre-activations v_1 .. v_depth
    s_mats: list            # materialized per executed layer (shared when tied)
    b_mats: list


def init_params(model, gamma, lambda0, n_layers, mode) -> NetworkParams:
    """Initialize network weights so the untied forward reproduces BISTA.

    gamma must lie in (0, 1/lipschitz_bound]; every layer threshold starts
    at ``lambda0``.  Tied mode stores one shared weight pair, untied mode
    replicates it per layer.
    """
    n_layers = int(n_layers)
    if n_layers < 1:
        raise ValueError("n_layers must be >= 1")
    if mode not in ("tied", "untied"):
        raise ValueError(f"unknown mode {mode!r}")
    gamma = float(gamma)
    lip = model.lipschitz_bound()
    if gamma <= 0.0 or (lip > 0 and gamma > (1.0 + 1e-9) / lip):
        raise ValueError(f"gamma={gamma} outside (0, 1/L] with 1/L={1.0 / lip:.6g}")

    if isinstance(model, ConvolutionModel):
        variant = "conv"
        n_r = model.signal_shape[0]
        phi = model.kernel.taps
        b = 2.0 * gamma * phi[::-1].copy()
        composed = np.convolve(b, phi)            # full support, 2*N_k - 1
        s = -composed
        s[phi.size - 1] += 1.0                    # centered unit impulse
        c = (phi.size - 1) // 2
        boundary = None
        if c > 0:
            t_b = conv_same_matrix(b, n_r)
            t_phi = conv_same_matrix(phi, n_r)
            corr = conv_same_matrix(composed, n_r) - t_b @ t_phi
            boundary = (corr[:c, :c].copy(), corr[n_r - c:, n_r - c:].copy())
        b_w, s_w = b, s
        data_dim = n_r
    elif isinstance(model, DenseModel):
        variant = "dense"
        a = model.entries
        b_w = 2.0 * gamma * a.T
        s_w = np.eye(a.shape[1]) - b_w @ a
        boundary = None
        data_dim = a.shape[0]
    else:
        raise ValueError(f"unsupported model type {type(model).__name__}")

    copies = 1 if mode == "tied" else n_layers
    return NetworkParams(
        mode=mode, variant=variant, n_layers=n_layers,
        signal_shape=tuple(model.signal_shape), data_dim=data_dim,
        lambdas=np.full(n_layers, float(lambda0)),
        b_weights=[b_w.copy() for _ in range(copies)],
        s_weights=[s_w.copy() for _ in range(copies)],
        s_boundary=boundary, gamma=gamma, lambda0=float(lambda0))


def s_matrix(params, idx) -> np.ndarray:
    """Materialize the S operator of weight slot ``idx`` as a matrix."""
    if params.variant == "dense":
        return params.s_weights[idx]
    n_r = params.signal_shape[0]
    mat = conv_same_matrix(params.s_weights[idx], n_r)
    if params.s_boundary is not None:
        c = params.s_boundary[0].shape[0]
        mat[:c, :c] += params.s_boundary[0]
        mat[n_r - c:, n_r - c:] += params.s_boundary[1]
    return mat


def b_matrix(params, idx) -> np.ndarray:
    """Materialize the B operator of weight slot ``idx`` as a matrix."""
    if params.variant == "dense":
        return params.b_weights[idx]
    return conv_same_matrix(params.b_weights[idx], params.signal_shape[0])


def _data_shape(params):
    if params.variant == "conv":
        return (params.data_dim, params.signal_shape[1])
    return (params.data_dim, 1)


def _pack_y(params, y):
    """Batch measurements to a (dim, columns) matrix for matmul layers."""
    y = np.asarray(y, dtype=float)
    dshape = _data_shape(params)
    if y.shape == dshape:
        y = y[None]
    elif y.ndim != 3 or y.shape[1:] != dshape:
        raise ValueError(f"measurement shape {y.shape} does not match {dshape}")
    n_batch = y.shape[0]
    return y.transpose(1, 0, 2).reshape(dshape[0], -1), n_batch


def pack_signals(params, x):
    """Batch signals (n_batch, n_r, n_meas) into packed column layout."""
    x = np.asarray(x, dtype=float)
    n_r, n_meas = params.signal_shape
    if x.shape == (n_r, n_meas):
        x = x[None]
    elif x.ndim != 3 or x.shape[1:] != (n_r, n_meas):
        raise ValueError(f"signal shape {x.shape} does not match {(n_r, n_meas)}")
    n_batch = x.shape[0]
    if params.variant == "conv":
        return x.transpose(1, 0, 2).reshape(n_r, -1), n_batch
    return x.reshape(n_batch, n_r * n_meas).T.copy(), n_batch


def unpack_signals(params, cols, n_batch):
    """Inverse of :func:`pack_signals`."""
    n_r, n_meas = params.signal_shape
    if params.variant == "conv":
        return cols.reshape(n_r, n_batch, n_meas).transpose(1, 0, 2)
    return cols.T.reshape(n_batch, n_r, n_meas)


def _threshold_view(params, cols, n_batch):
    """Reshape packed columns so the measurement axis is reducible."""
    n_r, n_meas = params.signal_shape
    if params.variant == "conv":
        return cols.reshape(n_r, n_batch, n_meas), 2
    return cols.reshape(n_r, n_meas, n_batch), 1


def threshold_cols(params, cols, lam, n_batch):
    view, m_axis = _threshold_view(params, cols, n_batch)
    out, _, _, _ = _bst_forward(view, float(lam), m_axis)
    return out.reshape(cols.shape)


def _signal_cols_shape(params, n_batch):
    n_r, n_meas = params.signal_shape
    if params.variant == "conv":
        return (n_r, n_batch * n_meas)
    return (n_r * n_meas, n_batch)


def _run_layers(params, y, depth, keep_tape):
    depth = params.n_layers if depth is None else int(depth)
    if depth < 0 or depth > params.n_layers:
        raise ValueError(f"depth must be in [0, {params.n_layers}]")
    y_cols, n_batch = _pack_y(params, y)

    tied = params.mode == "tied"
    n_mats = 1 if tied else max(depth, 1)
    s_mats = [s_matrix(params, i) for i in range(n_mats)]
    b_mats = [b_matrix(params, i) for i in range(n_mats)]

    if tied:
        by = b_mats[0] @ y_cols
        x = by.copy()
    else:
        x = np.zeros(_signal_cols_shape(params, n_batch))

    states = [x]
    pres = []
    for i in range(1, depth + 1):
        w = params.weight_index(i)
        if tied:
            pre = by if i == 1 else s_mats[0] @ x + by
        else:
            pre = s_mats[w] @ x + b_mats[w] @ y_cols
        x = threshold_cols(params, pre, params.lambdas[i - 1], n_batch)
        states.append(x)
        if keep_tape:
            pres.append(pre)
    tape = None
    if keep_tape:
        tape = ForwardTape(depth=depth, n_batch=n_batch, y_cols=y_cols,
                           states=states, pres=pres, s_mats=s_mats,
                           b_mats=b_mats)
    return states, tape, n_batch


def forward(params, y, depth=None) -> np.ndarray:
    """Network output after ``depth`` layers (default: all of them).

    Depth 0 returns the un-thresholded B y in tied mode and zero in untied
    mode.  ``y`` may be a single measurement set or a batch with a leading
    axis; the output shape mirrors the input.
    """
    y_arr = np.asarray(y, dtype=float)
    single = y_arr.shape == _data_shape(params)
    states, _, n_batch = _run_layers(params, y_arr, depth, keep_tape=False)
    out = unpack_signals(params, states[-1], n_batch)
    return out[0] if single else out


def forward_tape(params, y, depth=None):
    """Like :func:`forward` but retains per-layer intermediates.

    Returns (outputs, tape): outputs[i] is the batched signal after layer
    i (index 0 is the starting state).
    """
    states, tape, n_batch = _run_layers(params, y, depth, keep_tape=True)
    outputs = [unpack_signals(params, s, n_batch) for s in states]
    return outputs, tape


def save_params(params: NetworkParams, out_dir, training_provenance=None):
    """Write weights (one array file each) plus a JSON manifest."""
    os.makedirs(out_dir, exist_ok=True)
    files = {}
    for name, arrs in (("B", params.b_weights), ("S", params.s_weights)):
        for i, arr in enumerate(arrs):
            fname = f"{name}_{i}.bsr"
            fileio.write_array(os.path.join(out_dir, fname), arr)
            files[f"{name}_{i}"] = fname
    if params.s_boundary is not None:
        fileio.write_array(os.path.join(out_dir, "S_boundary_top.bsr"),
                           params.s_boundary[0])
        fileio.write_array(os.path.join(out_dir, "S_boundary_bot.bsr"),
                           params.s_boundary[1])
        files["S_boundary"] = ["S_boundary_top.bsr", "S_boundary_bot.bsr"]
    manifest = {
        "schema_version": fileio.SCHEMA_VERSION,
        "kind": "lbista-params",
        "mode": params.mode,
        "variant": params.variant,
        "n_layers": params.n_layers,
        "signal_shape": list(params.signal_shape),
        "data_dim": params.data_dim,
        "gamma": params.gamma,
        "lambda0": params.lambda0,
        "lambdas": [float(v) for v in params.lambdas],
        "files": files,
        "training": training_provenance,
    }
    fileio.write_json(os.path.join(out_dir, "manifest.json"), manifest)


def load_params(params_dir) -> NetworkParams:
    manifest = fileio.read_json(os.path.join(params_dir, "manifest.json"))
    if manifest.get("kind") != "lbista-params":
        raise fileio.DataFormatError(f"{params_dir}: not a params directory")
    mode = manifest["mode"]
    n = 1 if mode == "tied" else int(manifest["n_layers"])
    b_weights = [fileio.read_array(os.path.join(params_dir, f"B_{i}.bsr"))
                 for i in range(n)]
    s_weights = [fileio.read_array(os.path.join(params_dir, f"S_{i}.bsr"))
                 for i in range(n)]
    if manifest["variant"] == "conv":
        b_weights = [w.reshape(-1) for w in b_weights]
        s_weights = [w.reshape(-1) for w in s_weights]
    boundary = None
    if "S_boundary" in manifest["files"]:
        boundary = (
            fileio.read_array(os.path.join(params_dir, "S_boundary_top.bsr")),
            fileio.read_array(os.path.join(params_dir, "S_boundary_bot.bsr")))
    return NetworkParams(
        mode=mode, variant=manifest["variant"], n_layers=int(manifest["n_layers"]),
        signal_shape=tuple(manifest["signal_shape"]),
        data_dim=int(manifest["data_dim"]),
        lambdas=np.array(manifest["lambdas"], dtype=float),
        b_weights=b_weights, s_weights=s_weights, s_boundary=boundary,
        gamma=float(manifest["gamma"]), lambda0=float(manifest["lambda0"]))
