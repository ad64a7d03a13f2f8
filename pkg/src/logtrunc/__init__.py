"""Log-truncated robust M-estimation for heavy-tailed data."""
from .bounds import (BoundInputs, DnnBlock, covering_log_bound, dnn_bound, excess_bound_thm1,
                     excess_bound_thm2, l2_bound_corollary, qr_hetero_bound)
from .datagen import Dataset, NoiseSpec
from .losses import LossFn, parse_loss
from .model import LinearParams, MlpParams, backward, predict
from .solver import (AlphaInputs, SgdConfig, TruncatedObjective, default_alpha, estimate_dispersion,
                     sgd_fit, truncated_risk, truncated_risk_grad, tune_hyperparams)
from .truncation import HighOrderFn, TruncationSpec, c1_constants, psi_deriv, psi_eval

__version__ = "0.1.0"
