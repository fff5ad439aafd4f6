"""Chart-level linear algebra: tangent vectors, planes, frames and angles.

Every registered model expresses its metric as the Euclidean metric on the
chart components (flat product metric for the suspension chart, an invariant
orthonormal frame for the geodesic chart), so all norms and angles below are
plain Euclidean ones on 3-vectors of components.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import SingularMap, ZeroVector

ZERO_NORM_TOL = 1e-14
SINGULAR_TOL = 1e-12
FRAME_INDEPENDENCE_TOL = 1e-8
PLANE_CONTAINMENT_TOL = 1e-10


def unit(v: np.ndarray) -> np.ndarray:
    """Normalize a vector, raising ZeroVector below the zero tolerance."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < ZERO_NORM_TOL:
        raise ZeroVector("cannot normalize a vector of norm %.3g" % n)
    return v / n


def angle_between_lines(u, v) -> float:
    """Angle in [0, pi/2] between the lines spanned by u and v."""
    u = unit(u)
    v = unit(v)
    c = abs(float(np.dot(u, v)))
    return float(np.arccos(np.clip(c, 0.0, 1.0)))


def angle_vector_to_plane_normal(v, n) -> float:
    """Angle in [0, pi/2] between vector v and the plane with normal n."""
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv < ZERO_NORM_TOL:
        raise ZeroVector("angle of a zero vector to a plane is undefined")
    n = unit(n)
    s = abs(float(np.dot(n, v))) / nv
    return float(np.arcsin(np.clip(s, 0.0, 1.0)))


@dataclass(frozen=True)
class ModelPoint:
    """A point of a registered model, in canonical chart coordinates.

    coords has length 3 for the suspension chart (x, y, s) and length 4 for
    the geodesic chart (flattened 2x2 group matrix).
    """

    model_id: str
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))

    def __eq__(self, other):
        return (
            isinstance(other, ModelPoint)
            and self.model_id == other.model_id
            and np.array_equal(self.coords, other.coords)
        )


@dataclass(frozen=True)
class TangentVector:
    """Tangent vector at a base point, as components in the model frame."""

    base: ModelPoint
    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=float)
        if c.shape != (3,):
            raise ValueError("tangent components must be a 3-vector")
        object.__setattr__(self, "components", c)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.components))

    def unit(self) -> "TangentVector":
        return TangentVector(self.base, unit(self.components))


@dataclass(frozen=True)
class Plane:
    """A tangent 2-plane stored by its unit normal covector.

    Normals rather than spanning pairs: the transported plane stays well
    conditioned even when candidate spanning vectors align.
    """

    base: ModelPoint
    normal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "normal", unit(self.normal))

    @staticmethod
    def spanned_by(base: ModelPoint, u, v) -> "Plane":
        n = np.cross(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        if np.linalg.norm(n) < ZERO_NORM_TOL:
            raise ZeroVector("spanning vectors are collinear")
        return Plane(base, n)

    def contains(self, v, tol: float = PLANE_CONTAINMENT_TOL) -> bool:
        return angle_vector_to_plane_normal(v, self.normal) <= tol

    def angle_to_vector(self, v) -> float:
        return angle_vector_to_plane_normal(v, self.normal)


@dataclass(frozen=True)
class LinearMap3:
    """A 3x3 chart-coordinate linear map between tangent spaces."""

    matrix: np.ndarray
    source: Optional[ModelPoint] = None
    target: Optional[ModelPoint] = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("matrix must be 3x3")
        object.__setattr__(self, "matrix", m)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))

    def inverse(self) -> "LinearMap3":
        if abs(self.det) < SINGULAR_TOL:
            raise SingularMap("determinant %.3g below tolerance" % self.det)
        return LinearMap3(np.linalg.inv(self.matrix), self.target, self.source)

    def __matmul__(self, other: "LinearMap3") -> "LinearMap3":
        return LinearMap3(self.matrix @ other.matrix, other.source, self.target)

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(v, dtype=float)


def angle_line_plane(v: TangentVector, plane: Plane) -> float:
    """Angle in [0, pi/2] between a tangent line and a plane.

    Zero exactly when v lies in the plane; pi/2 when v is normal to it.
    """
    return angle_vector_to_plane_normal(v.components, plane.normal)


def transport_plane(L: LinearMap3, plane: Plane) -> Plane:
    """Image of a plane under an invertible map: normal moves by inv-transpose."""
    m = L.matrix
    if abs(np.linalg.det(m)) < SINGULAR_TOL:
        raise SingularMap("cannot transport a plane by a singular map")
    n = np.linalg.solve(m.T, plane.normal)
    base = L.target if L.target is not None else plane.base
    return Plane(base, n)


def transport_normals(matrices: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Batched plane transport: inverse-transpose applied to unit normals.

    matrices: (N, 3, 3), normals: (N, 3); returns unit normals (N, 3).
    """
    out = np.linalg.solve(np.transpose(matrices, (0, 2, 1)), normals[..., None])[..., 0]
    norms = np.linalg.norm(out, axis=-1, keepdims=True)
    if np.any(norms < ZERO_NORM_TOL):
        raise SingularMap("plane transport produced a zero normal")
    return out / norms


@dataclass(frozen=True)
class SplittingFrame:
    """Ordered (stable, center, unstable) unit directions at a point.

    The two invariant planes spanned by (e_s, e_c) and (e_c, e_u) are
    derived on construction and checked for consistency.
    """

    base: ModelPoint
    e_s: np.ndarray
    e_c: np.ndarray
    e_u: np.ndarray
    p_cs: Plane = field(init=False)
    p_cu: Plane = field(init=False)

    def __post_init__(self):
        for name in ("e_s", "e_c", "e_u"):
            object.__setattr__(self, name, unit(getattr(self, name)))
        det = float(np.linalg.det(np.column_stack([self.e_s, self.e_c, self.e_u])))
        if abs(det) < FRAME_INDEPENDENCE_TOL:
            raise ZeroVector("frame directions are not independent (det %.3g)" % det)
        p_cs = Plane.spanned_by(self.base, self.e_s, self.e_c)
        p_cu = Plane.spanned_by(self.base, self.e_c, self.e_u)
        for plane, vecs in ((p_cs, (self.e_s, self.e_c)), (p_cu, (self.e_c, self.e_u))):
            for v in vecs:
                if not plane.contains(v):
                    raise ZeroVector("frame plane does not contain its spanning vector")
        object.__setattr__(self, "p_cs", p_cs)
        object.__setattr__(self, "p_cu", p_cu)

    def basis_matrix(self) -> np.ndarray:
        """Columns (e_s, e_c, e_u)."""
        return np.column_stack([self.e_s, self.e_c, self.e_u])

    def angles_to(self, other: "SplittingFrame") -> np.ndarray:
        """Per-direction line angles to another frame."""
        return np.array(
            [
                angle_between_lines(self.e_s, other.e_s),
                angle_between_lines(self.e_c, other.e_c),
                angle_between_lines(self.e_u, other.e_u),
            ]
        )
