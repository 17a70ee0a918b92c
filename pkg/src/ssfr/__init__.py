"""Semi-structured function-on-function regression.

An interpretable tensor-product spline part plus an optional neural network,
trained jointly on the discretized functional risk, with post-hoc
orthogonalization to restore identifiability of the spline part.
"""

from .dataio import (
    FunctionalDataset,
    Standardizer,
    apply_standardizer,
    fit_standardizer,
    load_csv,
    load_manifest,
    save_dataset,
    split,
    split_rows,
)
from .deep import DeepConfig, DeepNet, FunctionalLayer, deep_backward, deep_forward
from .errors import (
    CapacityError,
    CheckpointError,
    ContractViolation,
    DegenerateDataError,
    FormatError,
    InvalidArgumentError,
    ParseError,
    SSFRError,
    TrainingFailure,
)
from .grid import BasisSystem, Grid, bspline_basis, grid_from_spec, make_uniform_grid, trapezoid_weights
from .metrics import EvalReport, evaluate, functional_r2, mse_relative_diff, rel_rmse, surface_error
from .model import SemiStructuredModel, build_model, load_model, predict, predict_parts, save_model
from .pho import assemble_omega, corrected_surfaces, orthogonalize_model, pho_correct
from .simgen import SimConfig, generate
from .structured import StructuredPart, build_structured_part, encode, structured_forward, surface
from .training import TrainConfig, TrainReport, grad_check, select_smoothing, train

__version__ = "0.1.0"
