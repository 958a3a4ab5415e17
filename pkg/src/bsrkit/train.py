"""Training of the unrolled network: exact reverse-mode gradients through
the taped forward pass, a from-scratch Adam optimizer, and the layerwise
train-then-refine schedule.

The schedule walks stages i = 0..K.  At stage i the loss is taken on the
depth-i output; if the stage owns trainable variables (tied: the stage
threshold, untied: the stage weights and threshold) Adam runs on those for
``maxiter`` steps; afterwards each refinement multiplier f runs Adam on
the full variable set at rate train_rate*f for another ``maxiter`` steps.
Every loop gets a fresh step counter and fresh Adam moments.  Gradients
are full-batch; training is deterministic (no RNG anywhere).
"""

import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .blocksparse import _bst_vjp
from .lbista import (NetworkParams, _run_layers, _threshold_view, init_params,
                     pack_signals)


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class TrainConfig:
    """Layerwise training schedule parameters."""

    mode: str = "tied"
    n_layers: int = 6
    gamma: Optional[float] = None      # None: 1/(2*lipschitz_bound)
    lambda0: float = 4e-3
    train_rate: float = 1e-3
    refinements: Sequence[float] = (0.5, 0.1, 0.05)
    maxiter: int = 1000
    n_batch: Optional[int] = None      # validated against the data when set
    seed: Optional[int] = None         # provenance only; training has no RNG

    def validate(self):
        if self.mode not in ("tied", "untied"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if self.train_rate <= 0:
            raise ValueError("train_rate must be positive")
        if int(self.maxiter) < 1:
            raise ValueError("maxiter must be >= 1")
        for f in self.refinements:
            if not 0.0 < f <= 1.0:
                raise ValueError("refinement multipliers must lie in (0, 1]")


@dataclass
class TrainReport:
    """Per-loop loss curves plus summary values; timing kept separate so
    artifact comparisons can exclude it."""

    stages: list
    final_lambdas: list
    initial_loss: float
    final_loss: float
    total_steps: int
    wall_time_s: float
    seed: Optional[int]
    config: dict

    def to_json_dict(self) -> dict:
        out = {
            "stages": [dict(s, loss=[float(v) for v in s["loss"]])
                       for s in self.stages],
            "final_lambdas": [float(v) for v in self.final_lambdas],
            "initial_loss": float(self.initial_loss),
            "final_loss": float(self.final_loss),
            "total_steps": int(self.total_steps),
            "seed": self.seed,
            "config": self.config,
            "timing": {"wall_time_s": float(self.wall_time_s)},
        }
        return out

    def loss_curves_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stage", "phase", "refinement", "step", "loss"])
            for s in self.stages:
                f = "" if s["f"] is None else repr(float(s["f"]))
                for t, val in enumerate(s["loss"]):
                    writer.writerow([s["stage"], s["phase"], f, t, repr(float(val))])


@dataclass
class Grads:
    """Gradients mirroring the trainable variables of a NetworkParams."""

    lambdas: np.ndarray
    b_weights: list
    s_weights: list


def loss(xhat, xstar) -> float:
    """Half squared error summed over positions and measurements, averaged
    over the batch elements."""
    xhat = np.asarray(xhat, dtype=float)
    xstar = np.asarray(xstar, dtype=float)
    if xhat.shape != xstar.shape:
        raise ValueError("estimate and target shapes differ")
    n_batch = 1 if xhat.ndim == 2 else xhat.shape[0]
    diff = xhat - xstar
    return 0.5 * float(np.sum(diff * diff)) / n_batch


def _zero_grads(params: NetworkParams) -> Grads:
    return Grads(
        lambdas=np.zeros(params.n_layers),
        b_weights=[np.zeros_like(w) for w in params.b_weights],
        s_weights=[np.zeros_like(w) for w in params.s_weights])


def _taps_grad_from_dense(dense, n_taps) -> np.ndarray:
    """Collapse a dense operator gradient onto banded Toeplitz taps."""
    c = (n_taps - 1) // 2
    return np.array([np.trace(dense, offset=c - t) for t in range(n_taps)])


def _backprop_cols(params: NetworkParams, tape, xstar_cols) -> Grads:
    """Reverse sweep on packed column states; returns full-variable grads."""
    grads = _zero_grads(params)
    depth = tape.depth
    n_batch = tape.n_batch
    tied = params.mode == "tied"
    y_t = tape.y_cols.T

    n_r = params.signal_shape[0]
    if params.variant == "conv":
        db_dense = [np.zeros((n_r, n_r)) for _ in params.b_weights]
        ds_dense = [np.zeros((n_r, n_r)) for _ in params.s_weights]
    else:
        db_dense = grads.b_weights
        ds_dense = grads.s_weights

    u = (tape.states[depth] - xstar_cols) / n_batch
    if depth == 0:
        if tied:
            db_dense[0] += u @ y_t
    else:
        for i in range(depth, 0, -1):
            pre = tape.pres[i - 1]
            view, m_axis = _threshold_view(params, pre, n_batch)
            du_view, dlam = _bst_vjp(view, float(params.lambdas[i - 1]),
                                     u.reshape(view.shape), m_axis)
            du = du_view.reshape(pre.shape)
            grads.lambdas[i - 1] += dlam
            w = params.weight_index(i)
            db_dense[w] += du @ y_t
            if i >= 2:
                ds_dense[w] += du @ tape.states[i - 1].T
                s_mat = tape.s_mats[0 if tied else w]
                u = s_mat.T @ du
            # layer 1 consumes no prior state (tied: B y only; untied: zero),
            # so nothing propagates further and untied dS_0 from this edge is 0.

    if params.variant == "conv":
        for j, dm in enumerate(db_dense):
            grads.b_weights[j] += _taps_grad_from_dense(dm, params.b_weights[j].size)
        for j, dm in enumerate(ds_dense):
            grads.s_weights[j] += _taps_grad_from_dense(dm, params.s_weights[j].size)
    return grads


def backprop(params: NetworkParams, tape, xstar) -> Grads:
    """Gradients of :func:`loss` on the taped output w.r.t. every trainable
    variable (thresholds and both weight families, tied or untied)."""
    xstar_cols, n_batch = pack_signals(params, xstar)
    if n_batch != tape.n_batch or xstar_cols.shape != tape.states[0].shape:
        raise ValueError("target batch does not match the taped forward pass")
    return _backprop_cols(params, tape, xstar_cols)


# Trainable-variable handles: ("lam", i), ("B", j), ("S", j).

def get_var(params: NetworkParams, ref):
    kind, idx = ref
    if kind == "lam":
        return params.lambdas[idx]
    if kind == "B":
        return params.b_weights[idx]
    if kind == "S":
        return params.s_weights[idx]
    raise KeyError(ref)


def set_var(params: NetworkParams, ref, value):
    kind, idx = ref
    if kind == "lam":
        params.lambdas[idx] = float(value)
    elif kind == "B":
        params.b_weights[idx] = value
    elif kind == "S":
        params.s_weights[idx] = value
    else:
        raise KeyError(ref)


def get_grad(grads: Grads, ref):
    kind, idx = ref
    if kind == "lam":
        return grads.lambdas[idx]
    if kind == "B":
        return grads.b_weights[idx]
    if kind == "S":
        return grads.s_weights[idx]
    raise KeyError(ref)


def stage_var_list(params: NetworkParams, stage: int):
    """Variables trained in the layer phase of ``stage`` (empty at stage 0)."""
    if stage == 0:
        return []
    if params.mode == "tied":
        return [("lam", stage - 1)]
    return [("S", stage - 1), ("B", stage - 1), ("lam", stage - 1)]


def full_var_list(params: NetworkParams):
    """All trainable variables (the refinement var list)."""
    refs = []
    for j in range(len(params.s_weights)):
        refs.append(("S", j))
        refs.append(("B", j))
    refs.extend(("lam", i) for i in range(params.n_layers))
    return refs


class AdamState:
    """Bias-corrected Adam over a fixed list of variable handles."""

    def __init__(self, params: NetworkParams, var_refs, lr,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.var_refs = list(var_refs)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {ref: np.zeros_like(np.asarray(get_var(params, ref), dtype=float))
                  for ref in self.var_refs}
        self.v = {ref: np.zeros_like(np.asarray(get_var(params, ref), dtype=float))
                  for ref in self.var_refs}

    def step(self, params: NetworkParams, grads: Grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for ref in self.var_refs:
            g = np.asarray(get_grad(grads, ref), dtype=float)
            self.m[ref] = b1 * self.m[ref] + (1.0 - b1) * g
            self.v[ref] = b2 * self.v[ref] + (1.0 - b2) * g * g
            m_hat = self.m[ref] / corr1
            v_hat = self.v[ref] / corr2
            update = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            set_var(params, ref, np.asarray(get_var(params, ref), dtype=float) - update)
        return params


def adam_step(state: AdamState, params: NetworkParams, grads: Grads):
    """One Adam update; returns (state, params) with params mutated in place."""
    state.step(params, grads)
    return state, params


def train_layerwise(trainset, model, cfg: TrainConfig):
    """Run the full layerwise schedule on (x_star, y) training batches.

    ``trainset`` is a pair of batched arrays: targets (n_batch, n_r, n_meas)
    and measurements with matching leading axis.  Returns the trained
    NetworkParams and a TrainReport.  Deterministic given identical inputs.
    """
    cfg.validate()
    x_star, y = trainset
    x_star = np.asarray(x_star, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(x_star)) and np.all(np.isfinite(y))):
        raise ValueError("training data must be finite")
    if x_star.ndim != 3 or y.ndim != 3 or x_star.shape[0] != y.shape[0]:
        raise ValueError("trainset arrays must be batched with a shared leading axis")
    if cfg.n_batch is not None and x_star.shape[0] != cfg.n_batch:
        raise ValueError(
            f"data batch {x_star.shape[0]} does not match cfg.n_batch={cfg.n_batch}")

    gamma = cfg.gamma
    if gamma is None:
        gamma = 0.5 / model.lipschitz_bound()
    params = init_params(model, gamma, cfg.lambda0, cfg.n_layers, cfg.mode)
    xstar_cols, n_batch = pack_signals(params, x_star)

    def depth_loss(depth):
        states, tape, _ = _run_layers(params, y, depth, keep_tape=True)
        diff = states[depth] - xstar_cols
        return 0.5 * float(np.sum(diff * diff)) / n_batch, tape, states

    maxiter = int(cfg.maxiter)
    stages = []
    total_steps = 0
    start = time.perf_counter()
    initial_loss, _, _ = depth_loss(cfg.n_layers)

    def run_loop(stage, phase, var_refs, lr, fm):
        nonlocal total_steps
        adam = AdamState(params, var_refs, lr=lr)
        curve = np.empty(maxiter)
        for t in range(maxiter):
            value, tape, _ = depth_loss(stage)
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"nonfinite loss at stage {stage} phase {phase}"
                    + ("" if fm is None else f" (f={fm})") + f" step {t}")
            grads = _backprop_cols(params, tape, xstar_cols)
            adam.step(params, grads)
            curve[t] = value
        total_steps += maxiter
        stages.append({"stage": stage, "phase": phase, "f": fm, "lr": lr,
                       "steps": maxiter, "loss": curve})

    for i in range(cfg.n_layers + 1):
        refs = stage_var_list(params, i)
        if refs:
            run_loop(i, "layer", refs, cfg.train_rate, None)
        for fm in cfg.refinements:
            run_loop(i, "refine", full_var_list(params), cfg.train_rate * fm, fm)

    final_loss, _, _ = depth_loss(cfg.n_layers)
    cfg_dict = asdict(cfg)
    cfg_dict["refinements"] = [float(f) for f in cfg.refinements]
    cfg_dict["gamma"] = float(gamma)
    report = TrainReport(
        stages=stages,
        final_lambdas=[float(v) for v in params.lambdas],
        initial_loss=initial_loss,
        final_loss=final_loss,
        total_steps=total_steps,
        wall_time_s=time.perf_counter() - start,
        seed=cfg.seed,
        config=cfg_dict,
    )
    return params, report
