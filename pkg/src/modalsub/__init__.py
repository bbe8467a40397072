"""Self-supervised nonlinear modal subspaces for deformable bodies.

Train a small network mapping modal coordinates to energy-minimizing mesh
deformations without any simulation data, then use it for reduced implicit
dynamics, keyframe interpolation, and quantitative comparison against a
constrained-minimization oracle.
"""

from .config import DatasetSpec, ExperimentConfig, inline_mesh_source
from .dynamics import (
    DynamicsState,
    Trajectory,
    interpolate_keyframes,
    make_initial_state,
    sample_keyframe_path,
    simulate,
    step,
)
from .energy import (
    Attachment,
    DiscreteShellModel,
    StvkSolidModel,
    build_energy_model,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    FingerprintMismatchError,
    MeshFormatError,
    ModalSubError,
    NumericalError,
)
from .estimators import NonlinearSubspace
from .evaluation import MetricsReport, build_report, compare_reports
from .mesh import (
    MaterialParams,
    Mesh,
    compute_rest_data,
    load_tet_mesh,
    load_tri_mesh,
    make_rect_sheet,
)
from .modes import LinearModeBasis, linear_displacement, linear_modes
from .oracle import (
    OracleDataset,
    generate_oracle_dataset,
    load_dataset,
    oracle_solve,
    save_dataset,
)
from .sampling import box_from_half_width, grid_coords, random_coords
from .subspace import (
    SubspaceModel,
    TrainConfig,
    TrainingHistory,
    load_checkpoint,
    save_checkpoint,
    train,
    train_supervised_l2,
)

__version__ = "0.1.0"

__all__ = [
    "Attachment",
    "ConfigError",
    "ConvergenceError",
    "DatasetSpec",
    "DiscreteShellModel",
    "DynamicsState",
    "ExperimentConfig",
    "FingerprintMismatchError",
    "LinearModeBasis",
    "MaterialParams",
    "Mesh",
    "MeshFormatError",
    "MetricsReport",
    "ModalSubError",
    "NonlinearSubspace",
    "NumericalError",
    "OracleDataset",
    "StvkSolidModel",
    "SubspaceModel",
    "TrainConfig",
    "TrainingHistory",
    "Trajectory",
    "box_from_half_width",
    "build_energy_model",
    "build_report",
    "compare_reports",
    "compute_rest_data",
    "generate_oracle_dataset",
    "grid_coords",
    "inline_mesh_source",
    "interpolate_keyframes",
    "linear_displacement",
    "linear_modes",
    "load_checkpoint",
    "load_dataset",
    "load_tet_mesh",
    "load_tri_mesh",
    "make_initial_state",
    "make_rect_sheet",
    "oracle_solve",
    "random_coords",
    "sample_keyframe_path",
    "save_checkpoint",
    "save_dataset",
    "simulate",
    "step",
    "train",
    "train_supervised_l2",
    "__version__",
]
