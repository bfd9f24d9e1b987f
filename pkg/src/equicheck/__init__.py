"""Symmetry diagnostics for point-cloud models.

Measures how equivariant a model actually is: per-irrep equivariance errors,
character-projection spectra of internal features, exact group-average
quadrature, symmetry purification of linear readouts, and a wire protocol for
probing external models.
"""

__version__ = "1.0.0"

from .cloud import (
    CoincidentPointsError,
    DecoratedPointCloud,
    XYZParseError,
    act,
    pairwise_edges,
    read_xyz,
    write_xyz,
)
from .metrics import (
    CountingProbe,
    DegenerateNormError,
    HeatmapTable,
    NumericalInconsistencyError,
    ProbeFunction,
    SpectrumReport,
    accumulate_heatmap,
    character_projection,
    character_projection_direct,
    equivariance_error,
    equivariance_error_direct,
    sum_rule_check,
)
from .o3 import (
    GroupElement,
    IrrepLabel,
    WignerBlock,
    cartesian_rank2_to_spherical,
    character,
    real_solid_harmonics,
    spherical_to_cartesian_rank2,
    wigner_d,
    wigner_rotation_stack,
)
from .protocol import (
    ProbeSession,
    ProtocolError,
    RemoteProbeFunction,
    cloud_from_wire,
    cloud_to_wire,
    connect_subprocess,
    connect_tcp,
    serve_stdio,
    serve_tcp,
)
from .purify import (
    NormalAccumulator,
    PurifiedReadout,
    ReadoutSample,
    assemble,
    contaminated_fixture,
    empirical_loss,
    evaluate_tradeoff,
    loss_terms,
    solve,
)
from .quadrature import (
    GridCapacityError,
    O3Grid,
    build_so3_grid,
    extend_to_o3,
    haar_average,
    max_band_limit,
    orthogonality_residual,
    random_group_element,
)
from .targets import (
    ConformerSpec,
    chbrclf_geometry,
    constant_vector_probe,
    oracle,
    pseudoscalar_Q,
    rattled_conformers,
)
from .toy import (
    HeadSpec,
    ToyNet,
    ToyNetConfig,
    TrainConfig,
    TrainingDivergedError,
    train,
)

__all__ = [
    "__version__",
    # clouds
    "DecoratedPointCloud", "act", "pairwise_edges", "read_xyz", "write_xyz",
    "XYZParseError", "CoincidentPointsError",
    # group theory
    "IrrepLabel", "GroupElement", "WignerBlock", "wigner_d",
    "wigner_rotation_stack", "character", "real_solid_harmonics",
    "cartesian_rank2_to_spherical", "spherical_to_cartesian_rank2",
    # quadrature
    "O3Grid", "build_so3_grid", "extend_to_o3", "haar_average",
    "max_band_limit", "orthogonality_residual", "random_group_element",
    "GridCapacityError",
    # metrics
    "ProbeFunction", "CountingProbe", "SpectrumReport", "HeatmapTable",
    "equivariance_error", "equivariance_error_direct", "character_projection",
    "character_projection_direct", "sum_rule_check", "accumulate_heatmap",
    "NumericalInconsistencyError", "DegenerateNormError",
    # purification
    "ReadoutSample", "NormalAccumulator", "PurifiedReadout", "assemble",
    "solve", "loss_terms", "empirical_loss", "evaluate_tradeoff",
    "contaminated_fixture",
    # targets
    "pseudoscalar_Q", "oracle", "constant_vector_probe", "chbrclf_geometry",
    "ConformerSpec", "rattled_conformers",
    # toy model
    "ToyNet", "ToyNetConfig", "TrainConfig", "HeadSpec", "train",
    "TrainingDivergedError",
    # protocol
    "ProbeSession", "RemoteProbeFunction", "ProtocolError", "serve_stdio",
    "serve_tcp", "connect_tcp", "connect_subprocess",
    "cloud_to_wire", "cloud_from_wire",
]
