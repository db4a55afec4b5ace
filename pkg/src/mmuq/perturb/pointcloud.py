"""Point cloud perturbation operators.

Colors, when present, travel with their points: ``subsample`` keeps the
color rows of the kept points and the geometric operators leave colors
untouched.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import InvariantViolation
from ..media import PointCloudContent
from .kinds import DEFAULT_PARAMS, PerturbParams, PointCloudKind, check_degree


def _bbox_diagonal(points: np.ndarray) -> float:
    return float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))


def subsample(
    cloud: PointCloudContent,
    degree: float,
    rng: np.random.Generator,
    params: PerturbParams = DEFAULT_PARAMS,
) -> PointCloudContent:
    """Keep ``ceil((1 - degree * subsample_fraction) * P)`` random points.

    Selection is without replacement; kept points stay in input order.
    """
    degree = check_degree(degree)
    p = len(cloud.points)
    keep = int(math.ceil((1.0 - degree * params.subsample_fraction) * p))
    keep = max(1, min(keep, p))
    if keep == p:
        return cloud
    idx = np.sort(rng.choice(p, size=keep, replace=False))
    points = tuple(cloud.points[int(i)] for i in idx)
    colors = None
    if cloud.colors is not None:
        colors = tuple(cloud.colors[int(i)] for i in idx)
    return PointCloudContent(points=points, colors=colors)


def jitter(
    cloud: PointCloudContent,
    degree: float,
    rng: np.random.Generator,
    params: PerturbParams = DEFAULT_PARAMS,
) -> PointCloudContent:
    """Add isotropic Gaussian noise scaled to the bounding box diagonal.

    Noise sigma is ``degree * jitter_scale * diagonal``; a degenerate cloud
    with zero diagonal is returned unchanged.
    """
    degree = check_degree(degree)
    if degree == 0.0:
        return cloud
    pts = cloud.to_array()
    sigma = degree * params.jitter_scale * _bbox_diagonal(pts)
    if sigma == 0.0:
        return cloud
    out = pts + rng.normal(0.0, sigma, size=pts.shape)
    return PointCloudContent.from_arrays(out, _colors_array(cloud))


def rotate3d(
    cloud: PointCloudContent,
    degree: float,
    params: PerturbParams = DEFAULT_PARAMS,
) -> PointCloudContent:
    """Rotate by ``degree * rotate3d_max_deg`` about the vertical axis.

    The axis is the z axis through the centroid, so pairwise distances and
    the centroid itself are preserved exactly up to rounding.
    """
    degree = check_degree(degree)
    if degree == 0.0:
        return cloud
    theta = math.radians(degree * params.rotate3d_max_deg)
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    pts = cloud.to_array()
    centroid = pts.mean(axis=0)
    out = (pts - centroid) @ rot.T + centroid
    return PointCloudContent.from_arrays(out, _colors_array(cloud))


def scale(
    cloud: PointCloudContent,
    degree: float,
    params: PerturbParams = DEFAULT_PARAMS,
) -> PointCloudContent:
    """Scale uniformly by ``1 + degree * scale_factor`` about the centroid."""
    degree = check_degree(degree)
    if degree == 0.0:
        return cloud
    factor = 1.0 + degree * params.scale_factor
    pts = cloud.to_array()
    centroid = pts.mean(axis=0)
    out = centroid + (pts - centroid) * factor
    return PointCloudContent.from_arrays(out, _colors_array(cloud))


def _colors_array(cloud: PointCloudContent):
    return None if cloud.colors is None else np.asarray(cloud.colors)


def perturb_pointcloud(
    cloud: PointCloudContent,
    kind: PointCloudKind,
    degree: float,
    rng: np.random.Generator,
    params: PerturbParams = DEFAULT_PARAMS,
) -> PointCloudContent:
    if kind is PointCloudKind.SUBSAMPLE:
        return subsample(cloud, degree, rng, params)
    if kind is PointCloudKind.JITTER:
        return jitter(cloud, degree, rng, params)
    if kind is PointCloudKind.ROTATE3D:
        return rotate3d(cloud, degree, params)
    if kind is PointCloudKind.SCALE:
        return scale(cloud, degree, params)
    raise InvariantViolation(f"unknown point cloud kind {kind!r}")
