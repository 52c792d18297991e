"""Physics-driven point-cloud pretraining engine.

Elastic FEM ground truth on Delaunay tet meshes, unsigned-distance field
sampling, the three loss kernels, and a small dual-task network with exact
gradients, plus the dataset/training pipeline tying them together.
"""

from .continuum import (
    NodalResidualField,
    cell_strain_stress,
    deformation_gradient,
    nodal_equilibrium_residual,
    shape_matrix,
    strain,
    stress,
)
from .dataset import (
    DatasetConfig,
    build_dataset,
    build_sample,
    config_hash,
    load_manifest,
    load_training_samples,
    material_from_dict,
    material_to_dict,
)
from .delaunay import (
    Circumsphere,
    circumsphere,
    delaunay3d,
    largest_component,
    prune_oversized,
    signed_volume,
)
from .errors import (
    DatasetError,
    DegenerateGeometryError,
    ElastoPointError,
    MaterialError,
    MeshError,
    ParseError,
    SolverError,
)
from .fem import (
    MaterialForceSpec,
    SparseSystem,
    assemble,
    assemble_stiffness,
    element_stiffness,
    lame_from_E_nu,
    make_material,
    reactions,
    solve_displacement,
)
from .geometry import PointCloud, TetMesh, Transform, build_tet_mesh, normalize_unit_sphere
from .inertia import ForceSpec, inertia_matrix, make_force_spec, principal_axes
from .io import (
    dumps_17g,
    fmt17,
    load_displacement_field,
    load_point_cloud,
    load_query_set,
    load_tet_mesh,
    save_displacement_field,
    save_point_cloud,
    save_query_set,
    save_tet_mesh,
    tet_mesh_roundtrip,
)
from .losses import (
    LossReport,
    data_fidelity_loss,
    implicit_loss,
    loss_report,
    physics_informed_loss,
    total_loss,
)
from .network import (
    NetworkConfig,
    TrainingSample,
    deformation_vector,
    encoder_forward,
    implicit_decoder_forward,
    init_params,
    load_checkpoint,
    mesh_processor_forward,
    phys_decoder_forward,
    sample_grads,
    sample_losses,
    save_checkpoint,
)
from .shapes import gen_cloud, gen_shapes, sample_shape
from .training import (
    TrainConfig,
    TrainState,
    ablation_suite,
    adam_step,
    cosine_lr,
    export_embeddings,
    featurize,
    fit_linear_probe,
    init_state,
    pretrain,
    probe_classify,
)
from .udf import QuerySet, build_query_set, sample_queries, udf_brute_force, udf_ground_truth

__version__ = "0.1.0"

__all__ = [
    "Circumsphere",
    "DatasetConfig",
    "DatasetError",
    "DegenerateGeometryError",
    "ElastoPointError",
    "ForceSpec",
    "LossReport",
    "MaterialError",
    "MaterialForceSpec",
    "MeshError",
    "NetworkConfig",
    "NodalResidualField",
    "ParseError",
    "PointCloud",
    "QuerySet",
    "SolverError",
    "SparseSystem",
    "TetMesh",
    "TrainConfig",
    "TrainState",
    "TrainingSample",
    "Transform",
    "ablation_suite",
    "adam_step",
    "assemble",
    "assemble_stiffness",
    "build_dataset",
    "build_query_set",
    "build_sample",
    "build_tet_mesh",
    "cell_strain_stress",
    "circumsphere",
    "config_hash",
    "cosine_lr",
    "data_fidelity_loss",
    "deformation_gradient",
    "deformation_vector",
    "delaunay3d",
    "dumps_17g",
    "element_stiffness",
    "encoder_forward",
    "export_embeddings",
    "featurize",
    "fit_linear_probe",
    "fmt17",
    "gen_cloud",
    "gen_shapes",
    "implicit_decoder_forward",
    "implicit_loss",
    "inertia_matrix",
    "init_params",
    "init_state",
    "lame_from_E_nu",
    "largest_component",
    "load_checkpoint",
    "load_displacement_field",
    "load_manifest",
    "load_point_cloud",
    "load_query_set",
    "load_tet_mesh",
    "load_training_samples",
    "loss_report",
    "make_force_spec",
    "make_material",
    "material_from_dict",
    "material_to_dict",
    "mesh_processor_forward",
    "nodal_equilibrium_residual",
    "normalize_unit_sphere",
    "physics_informed_loss",
    "phys_decoder_forward",
    "pretrain",
    "reactions",
    "principal_axes",
    "probe_classify",
    "prune_oversized",
    "sample_grads",
    "sample_losses",
    "sample_queries",
    "sample_shape",
    "save_checkpoint",
    "save_displacement_field",
    "save_point_cloud",
    "save_query_set",
    "save_tet_mesh",
    "shape_matrix",
    "signed_volume",
    "solve_displacement",
    "strain",
    "stress",
    "tet_mesh_roundtrip",
    "total_loss",
    "udf_brute_force",
    "udf_ground_truth",
]
