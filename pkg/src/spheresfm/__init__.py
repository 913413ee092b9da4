"""spheresfm: 3D reconstruction from full-view equirectangular panoramas.

Two-view and N-view pose recovery from point correspondences on the unit
sphere, sparse triangulation, spherical rectification, dense disparity and
depth, and colored point-cloud export, with a CLI and an HTTP API backing
the annotation UI.
"""

from .sphere_cam import (
    CameraPose,
    EquirectImage,
    ImageSize,
    angles_to_bearing,
    bearing_to_angles,
    bearing_to_disk,
    bearing_to_pixel,
    pixel_to_angles,
    pixel_to_bearing,
    project_point,
    sample_bilinear,
)
from .epipolar import (
    RansacParams,
    TwoViewSolution,
    epipolar_curve,
    epipolar_residual,
    epipolar_residuals,
    epipoles_from_F,
    estimate_F_linear,
    estimate_F_ransac,
    filter_matches_by_F,
    fundamental_from_pose,
    resolve_signs,
    rotation_from_epipoles,
    triangulate_two_view,
)
from .registration import (
    MultiviewPoint,
    PairEstimate,
    PlanarRig,
    Track,
    estimate_positions,
    estimate_rotations,
    refine_positions,
    triangulate_multiview,
    triangulate_rays,
    yaw_matrix,
)
from .correspondence import (
    Correspondence,
    CubeFaceSet,
    augment_pool,
    build_tracks,
    cubeface_to_equirect,
    equirect_to_cubeface,
    equirect_to_cubemap,
    import_matches,
)
from .rectify import (
    DenseCloud,
    DisparityMap,
    DisparityParams,
    RectifiedPair,
    compute_disparity,
    dense_cloud,
    disparity_to_range,
    rectification_rotations,
    rectify_pair,
)
from .ply import read_ply, write_ply

__version__ = "0.1.0"
