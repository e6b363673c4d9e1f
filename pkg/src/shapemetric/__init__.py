"""Geometry, sampling, SDF, isosurface and metric tooling for evaluating
single-view 3D shape reconstructions."""

from .config import EmptyPolicy, EvalConfig, IouMode, Occluder
from .errors import (
    DegenerateGeometryError,
    EmptyGeometryError,
    GridDataError,
    ManifestError,
    MeshFormatError,
    MeshStructureError,
    ShapeMetricError,
)
from .floor import FloorCurve, sampling_floor
from .harness import (
    AggregateReport,
    DatasetManifest,
    ManifestEntry,
    Split,
    aggregate_by_class,
    load_manifest,
    run_eval,
)
from .isosurface import marching_cubes
from .mesh import Aabb, TriangleMesh, load_mesh, normalize_to_unit_cube, save_mesh
from .metrics import MetricReport, chamfer, evaluate_pair, fscore, iou_points, normal_consistency
from .pose import DofTag, PivotMode, RigidPose, apply_pose, sample_pose, sample_pose_2dof, sample_pose_3dof
from .sampling import SurfacePointSet, sample_surface, sample_volume_uniform
from .sdf import SdfGrid, SdfSampleSet, evaluate_grid, generate_training_samples, signed_distance
from .visibility import CameraRig, classify_visibility, evaluate_decomposed, render_maps

__version__ = "0.1.0"
