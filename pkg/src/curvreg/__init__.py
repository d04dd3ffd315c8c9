"""Point-cloud registration from curvelet features of spherical range images."""

from .curvelet import CurveletConfig, CurveletPyramid, fdct_forward, fdct_inverse, reconstruct_scale
from .errors import CurvRegError
from .evaluation import accumulate_map, ecdf, integrate_trajectory, pair_error, rmse
from .features import DetectorConfig, FeatureSet, Keypoint, extract_features
from .geometry import PointCloud, RigidTransform, compose, estimate_rigid_svd, rotation_distance
from .matching import Match, RansacConfig, match_nn, ransac_filter
from .pipeline import PipelineConfig, RegistrationResult, register_pair
from .rangeimage import ProjectionModel, RangeImage, make_range_image

__version__ = "0.1.0"
