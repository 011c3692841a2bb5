"""Analytic convex shape fixtures with closed-form support and gauge functions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import GeometryError, cross2

SHAPE_KINDS = ("disk", "square", "reuleaux", "triangle", "ellipse", "polygon")


def _wrap(a):
    return np.mod(a + np.pi, 2 * np.pi) - np.pi


@dataclass(frozen=True)
class Shape:
    """A convex body described by a closed enum of analytic kinds.

    Parameters depend on ``kind``:
      disk: radius; square: side, angle; reuleaux: width, angle;
      triangle: side, angle (equilateral, centroid at ``center``);
      ellipse: a, b (semi-axes along x and y); polygon: vertices.
    """

    kind: str
    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    side: float = 1.0
    width: float = 1.0
    a: float = 1.0
    b: float = 1.0
    angle: float = 0.0
    vertices: tuple | None = None

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise GeometryError(f"unknown shape kind {self.kind!r}")
        if self.kind == "polygon":
            if self.vertices is None or len(self.vertices) < 3:
                raise GeometryError("polygon shape needs at least 3 vertices")
            v = np.asarray(self.vertices, dtype=float)
            e = np.roll(v, -1, axis=0) - v
            turns = cross2(e, np.roll(e, -1, axis=0))
            scale = float(np.abs(v).max()) ** 2 + 1e-300
            if turns.min() < -1e-12 * scale or turns.sum() <= 0:
                raise GeometryError("polygon descriptor is not convex and CCW")

    # corner points used by several kinds
    def _corners(self) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        if self.kind == "square":
            t = self.angle + np.pi / 4 + np.arange(4) * np.pi / 2
            r = self.side / np.sqrt(2)
        elif self.kind == "triangle":
            t = self.angle + np.pi / 2 + np.arange(3) * 2 * np.pi / 3
            r = self.side / np.sqrt(3)
        elif self.kind == "reuleaux":
            t = self.angle + np.pi / 2 + np.arange(3) * 2 * np.pi / 3
            r = self.width / np.sqrt(3)
        elif self.kind == "polygon":
            return np.asarray(self.vertices, dtype=float)
        else:
            raise AssertionError(self.kind)
        return c + r * np.stack([np.cos(t), np.sin(t)], axis=1)

    def support(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        u = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        c = np.asarray(self.center, dtype=float)
        shift = u @ c
        if self.kind == "disk":
            return self.radius + shift
        if self.kind == "ellipse":
            ca, sa = np.cos(self.angle), np.sin(self.angle)
            ux = u[..., 0] * ca + u[..., 1] * sa
            uy = -u[..., 0] * sa + u[..., 1] * ca
            return np.sqrt((self.a * ux) ** 2 + (self.b * uy) ** 2) + shift
        if self.kind in ("square", "triangle", "polygon"):
            return (u @ self._corners().T).max(axis=-1)
        # Reuleaux: hull of three arcs of radius w centred at the corners
        v = self._corners()
        w = self.width
        phi = self.angle + np.pi / 2 + np.arange(3) * 2 * np.pi / 3
        terms = []
        for k in range(3):
            d = np.maximum(np.abs(_wrap(theta - (phi[k] + np.pi))) - np.pi / 6, 0.0)
            terms.append(u @ v[k] + w * np.cos(np.minimum(d, np.pi)))
        return np.max(terms, axis=0)

    def gauge(self, theta) -> np.ndarray:
        """Gauge function 1/radial(theta) about the origin (origin must be inside)."""
        theta = np.asarray(theta, dtype=float)
        u = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        c = np.asarray(self.center, dtype=float)
        if self.kind == "disk":
            uc = u @ c
            disc = uc ** 2 - c @ c + self.radius ** 2
            if np.any(disc <= 0) or c @ c >= self.radius ** 2:
                raise GeometryError("origin outside disk")
            return 1.0 / (uc + np.sqrt(disc))
        if self.kind == "ellipse":
            ca, sa = np.cos(self.angle), np.sin(self.angle)
            # solve |M (t u - c)| = 1 for the positive root t
            m = np.array([[ca / self.a, sa / self.a], [-sa / self.b, ca / self.b]])
            mu = u @ m.T
            mc = m @ c
            qa = (mu ** 2).sum(-1)
            qb = -2 * mu @ mc
            qc = mc @ mc - 1
            if qc >= 0:
                raise GeometryError("origin outside ellipse")
            t = (-qb + np.sqrt(qb ** 2 - 4 * qa * qc)) / (2 * qa)
            return 1.0 / t
        if self.kind in ("square", "triangle", "polygon"):
            v = self._corners()
            e = np.roll(v, -1, axis=0) - v
            nrm = np.stack([e[:, 1], -e[:, 0]], axis=1)
            off = (nrm * v).sum(axis=1)
            if np.any(off <= 0):
                raise GeometryError("origin not strictly inside polygon")
            return ((u @ nrm.T) / off).max(axis=-1)
        v = self._corners()
        w = self.width
        t = np.full(theta.shape, np.inf)
        for k in range(3):
            uv = u @ v[k]
            disc = uv ** 2 - v[k] @ v[k] + w ** 2
            t = np.minimum(t, uv + np.sqrt(disc))
        return 1.0 / t

    def diameter(self) -> float:
        if self.kind == "disk":
            return 2 * self.radius
        if self.kind == "ellipse":
            return 2 * max(self.a, self.b)
        if self.kind == "reuleaux":
            return self.width
        v = self._corners()
        d = v[:, None] - v[None]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def area(self) -> float:
        if self.kind == "disk":
            return np.pi * self.radius ** 2
        if self.kind == "ellipse":
            return np.pi * self.a * self.b
        if self.kind == "reuleaux":
            return (np.pi - np.sqrt(3)) / 2 * self.width ** 2
        v = self._corners()
        return 0.5 * float(cross2(v, np.roll(v, -1, axis=0)).sum())

    def perimeter(self) -> float:
        if self.kind == "disk":
            return 2 * np.pi * self.radius
        if self.kind == "reuleaux":
            return np.pi * self.width
        if self.kind == "ellipse":
            t = np.linspace(0, 2 * np.pi, 20001)
            x = np.stack([self.a * np.cos(t), self.b * np.sin(t)], axis=1)
            return float(np.hypot(*np.diff(x, axis=0).T).sum())
        v = self._corners()
        return float(np.hypot(*(np.roll(v, -1, axis=0) - v).T).sum())


def shape_from_dict(d: dict) -> Shape:
    d = dict(d)
    kind = d.pop("kind")
    if "vertices" in d and d["vertices"] is not None:
        d["vertices"] = tuple(tuple(map(float, p)) for p in d["vertices"])
    if "center" in d:
        d["center"] = tuple(map(float, d["center"]))
    return Shape(kind=kind, **d)
