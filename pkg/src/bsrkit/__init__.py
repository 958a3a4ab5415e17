"""Block-sparse recovery toolkit.

Joint-sparse (l2,1) inverse problems with multiple measurement vectors:
the classical block iterative shrinkage thresholding solver (BISTA), its
learned unrolled counterpart (LBISTA, tied and untied), synthetic problem
generation for Gaussian and photothermal convolution setups, measurement
preprocessing, and quantitative evaluation.
"""

__version__ = "0.1.0"

from .linop import ConvKernel, ConvolutionModel, DenseModel, LinearModel
from .blocksparse import (
    block_norms,
    block_soft_threshold,
    block_soft_threshold_vjp,
    l21_norm,
    objective,
)
from .bista import SolveTrace, bista_solve
from .lbista import NetworkParams, forward, forward_tape, init_params
from .train import AdamState, TrainConfig, TrainReport, train_layerwise

__all__ = [
    "ConvKernel",
    "ConvolutionModel",
    "DenseModel",
    "LinearModel",
    "block_norms",
    "l21_norm",
    "objective",
    "block_soft_threshold",
    "block_soft_threshold_vjp",
    "SolveTrace",
    "bista_solve",
    "NetworkParams",
    "init_params",
    "forward",
    "forward_tape",
    "AdamState",
    "TrainConfig",
    "TrainReport",
    "train_layerwise",
    "__version__",
]
