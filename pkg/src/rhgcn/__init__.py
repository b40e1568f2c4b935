"""Residual hyperbolic graph convolutional networks on product Lorentz manifolds."""

__version__ = "0.1.0"

from .errors import (
    CapabilityError,
    ConfigError,
    DimensionError,
    FormatError,
    NumericError,
    UsageError,
)
from .lorentz import (
    DEFAULT_TOLS,
    LorentzPoint,
    TangentVector,
    Tolerances,
    canonical_origin,
    exp_map,
    log_map,
    lorentz_distance,
    lorentz_inner,
    lorentz_norm,
    parallel_transport,
    project_to_manifold,
    project_to_tangent,
)
from .manifold_ops import (
    LorentzBatch,
    lift_features,
    lorentz_activation,
    lorentz_add,
    lorentz_matvec,
    lorentz_scalar_mul,
)
from .product import (
    ProductPoint,
    ProductSpec,
    build_product,
    lift_to_product,
    parse_signature,
    product_exp,
    product_log,
)
from .graph import (
    NodeDataset,
    SparseGraph,
    build_graph,
    load_dataset,
    normalized_adjacency,
    save_dataset,
    spectral_gap,
    synth_graph,
)
from .autodiff import GradCheckResult, Tape, Tensor, grad_check
from .model import (
    LayerParams,
    ModelConfig,
    ModelParams,
    NoiseSpec,
    accuracy,
    forward,
    hgc_layer,
    hyperdrop,
    init_params,
    load_checkpoint,
    loss_nll,
    save_checkpoint,
)
from .diagnostics import (
    decay_bound_check,
    dirichlet_energy,
    lemma1_check,
    oversmoothing_report,
    product_energy,
    run_energy_trace,
)
from .config import RunConfig
from .training import run_sweep, run_training, train_model
