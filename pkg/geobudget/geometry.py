"""
Rectangular ranges in the plane: signed boundary distance and the shifted
categorization threshold for noisy distances.
"""

import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

PARALLEL_TOL = 1e-9


class GeometryError(ValueError):
    """Raised for degenerate ranges or invalid threshold arguments."""


def projection_coefficient(p: np.ndarray, q: np.ndarray, x: np.ndarray) -> np.ndarray:
    """argmin_a ||a p + (1 - a) q - x|| for each row of x."""
    direction = p - q
    return ((x - q) @ direction) / float(direction @ direction)


def _segment_distance(p: np.ndarray, q: np.ndarray, x: np.ndarray, a: np.ndarray) -> np.ndarray:
    clipped = np.clip(a, 0.0, 1.0)[:, None]
    nearest = clipped * p + (1.0 - clipped) * q
    return np.linalg.norm(nearest - x, axis=1)


@dataclass(frozen=True)
class Rectangle:
    """Vertices u, v, w, z with uv parallel to wz and uw parallel to vz (z opposite u)."""
    u: Tuple[float, float]
    v: Tuple[float, float]
    w: Tuple[float, float]
    z: Tuple[float, float]

    def __post_init__(self):
        u, v, w, z = self.vertices
        scale = max(1.0, float(np.abs(np.stack([u, v, w, z])).max()))
        if not np.allclose(v - u, z - w, atol=PARALLEL_TOL * scale, rtol=0):
            raise GeometryError("Edges uv and wz are not parallel and of equal length")
        if not np.allclose(w - u, z - v, atol=PARALLEL_TOL * scale, rtol=0):
            raise GeometryError("Edges uw and vz are not parallel and of equal length")
        if self.length <= 0 or self.width <= 0:
            raise GeometryError("Rectangle has zero area")
        if abs(float((v - u) @ (w - u))) > PARALLEL_TOL * scale * self.length * self.width:
            raise GeometryError("Adjacent edges are not perpendicular")

    @property
    def vertices(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.asarray(vertex, dtype=float).reshape(2) for vertex in (self.u, self.v, self.w, self.z))

    @property
    def length(self) -> float:
        u, v, _, _ = self.vertices
        return float(np.linalg.norm(v - u))

    @property
    def width(self) -> float:
        u, _, w, _ = self.vertices
        return float(np.linalg.norm(w - u))

    @property
    def center(self) -> np.ndarray:
        u, _, _, z = self.vertices
        return (u + z) / 2.0

    @classmethod
    def axis_aligned(cls, center: Sequence[float], length: float, width: float) -> "Rectangle":
        cx, cy = (float(c) for c in center)
        hl, hw = length / 2.0, width / 2.0
        return cls((cx - hl, cy - hw), (cx + hl, cy - hw), (cx - hl, cy + hw), (cx + hl, cy + hw))

    @classmethod
    def square(cls, center: Sequence[float], side: float) -> "Rectangle":
        return cls.axis_aligned(center, side, side)

    def contains(self, x) -> Union[bool, np.ndarray]:
        return proj_gamma(self, x) < 0


def proj_gamma(rect: Rectangle, x) -> Union[float, np.ndarray]:
    """Signed distance from x to the rectangle's boundary, negative inside.

    Accepts one point of shape (2,) or a batch of shape (n, 2).
    """
    points = np.asarray(x, dtype=float)
    single = points.ndim == 1
    points = np.atleast_2d(points)
    if points.shape[1] != 2:
        raise GeometryError(f"Expected planar points, got shape {np.asarray(x).shape}")
    u, v, w, z = rect.vertices
    edges = ((u, v), (u, w), (v, z), (w, z))
    coefficients = [projection_coefficient(p, q, points) for p, q in edges]
    inside = np.all([(a >= 0.0) & (a <= 1.0) for a in coefficients], axis=0)
    distances = np.min([_segment_distance(p, q, points, a) for (p, q), a in zip(edges, coefficients)], axis=0)
    signed = np.where(inside, -distances, distances)
    return float(signed[0]) if single else signed


def eta_threshold(gamma: float, l: float, w: float) -> float:
    """Categorization threshold -a * gamma that balances the noisy bands inside and outside a range.

    When l, w > 2 gamma the inner band is a rectangular annulus; otherwise it is the whole range.
    """
    if not (gamma > 0 and l > 0 and w > 0):
        raise GeometryError(f"eta needs positive gamma, l, w; got {gamma}, {l}, {w}")
    s = l + w
    if l > 2.0 * gamma and w > 2.0 * gamma:
        return -(4.0 * gamma * s - 4.0 * gamma * math.sqrt(s * s - 16.0 * gamma * gamma)) / (16.0 * gamma)
    return -(8.0 * gamma * gamma + 2.0 * gamma * s - 2.0 * gamma * math.sqrt(s * s + 4.0 * l * w)) / (8.0 * gamma)


def user_threshold(rho: float, l: float, w: float, shift: bool = True) -> float:
    """eta_i = eta(1 / sqrt(2 rho_i)), or 0 without shifting."""
    if not shift:
        return 0.0
    return eta_threshold(1.0 / math.sqrt(2.0 * rho), l, w)
