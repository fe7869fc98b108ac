"""Geodetic and local-plane geometry.

Positions enter as latitude/longitude degrees and are projected onto a local
equirectangular plane (meters east/north of an origin) before any path
distance is computed. The projection is only meant for small areas such as a
single archipelago route.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
METERS_PER_DEG_LAT = math.pi * EARTH_RADIUS_M / 180.0

# cos(lat) below this is treated as a polar (degenerate) origin
_MIN_COS_LAT = 1e-9


class GeoError(ValueError):
    """Invalid coordinate or projection."""


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        validate_latlon(self.lat, self.lon)


@dataclass(frozen=True)
class LocalPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeoError(f"non-finite local point ({self.x}, {self.y})")


@dataclass(frozen=True)
class Projection:
    origin: GeoPoint
    meters_per_deg_lat: float
    meters_per_deg_lon: float

    def __post_init__(self):
        if not (self.meters_per_deg_lat > 0 and self.meters_per_deg_lon > 0):
            raise GeoError("projection scale factors must be positive")

    def to_dict(self) -> dict:
        return {"origin": {"lat": self.origin.lat, "lon": self.origin.lon}}

    @classmethod
    def from_dict(cls, data: dict) -> "Projection":
        o = data["origin"]
        return make_projection(GeoPoint(float(o["lat"]), float(o["lon"])))

    def forward(self, lat, lon) -> np.ndarray:
        """Vectorised projection; returns an (n, 2) array of (x, y) meters."""
        lat = np.asarray(lat, dtype=float)
        lon = np.asarray(lon, dtype=float)
        x = (lon - self.origin.lon) * self.meters_per_deg_lon
        y = (lat - self.origin.lat) * self.meters_per_deg_lat
        return np.column_stack([x, y])

    def inverse(self, xy) -> tuple[np.ndarray, np.ndarray]:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        lat = self.origin.lat + xy[:, 1] / self.meters_per_deg_lat
        lon = self.origin.lon + xy[:, 0] / self.meters_per_deg_lon
        return lat, lon


def validate_latlon(lat: float, lon: float) -> None:
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise GeoError(f"non-finite coordinate ({lat}, {lon})")
    if not -90.0 <= lat <= 90.0:
        raise GeoError(f"latitude {lat} outside [-90, 90]")
    if not -180.0 <= lon <= 180.0:
        raise GeoError(f"longitude {lon} outside [-180, 180]")


def make_projection(origin: GeoPoint) -> Projection:
    coslat = math.cos(math.radians(origin.lat))
    if coslat < _MIN_COS_LAT:
        raise GeoError(f"polar projection origin {origin} is degenerate")
    return Projection(origin, METERS_PER_DEG_LAT, METERS_PER_DEG_LAT * coslat)


def projection_for(lat, lon) -> Projection:
    """Projection anchored at the centroid of a point cloud.

    Rejects clouds that straddle the antimeridian.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if lat.size == 0:
        raise GeoError("cannot anchor a projection on zero points")
    if float(lon.max() - lon.min()) > 180.0:
        raise GeoError("point cloud straddles the antimeridian")
    return make_projection(GeoPoint(float(lat.mean()), float(lon.mean())))


def project(p: GeoPoint, proj: Projection) -> LocalPoint:
    return LocalPoint(
        (p.lon - proj.origin.lon) * proj.meters_per_deg_lon,
        (p.lat - proj.origin.lat) * proj.meters_per_deg_lat,
    )


def unproject(q: LocalPoint, proj: Projection) -> GeoPoint:
    return GeoPoint(
        proj.origin.lat + q.y / proj.meters_per_deg_lat,
        proj.origin.lon + q.x / proj.meters_per_deg_lon,
    )


def euclidean_distance(a: LocalPoint, b: LocalPoint) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    return float(haversine_array(a.lat, a.lon, b.lat, b.lon))


def haversine_array(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters, broadcasting over numpy inputs."""
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
