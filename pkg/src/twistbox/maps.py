"""Elementary map pieces and their compositions.

A MapPiece is an elementary diffeomorphism of a registered model (flow-time
map, Dehn twist, fiber conjugacy, identity) exposing batched evaluation and
differentials; a ComposedMap is a finite ordered sequence of pieces, applied
left to right, with the chain-rule differential and the concatenated
mapping-class word.

Fiber conjugacy pieces that do not commute with the gluing automorphism are
chart-level test doubles (they evaluate fine on the fundamental chart but do
not descend to the quotient); the honest pipeline uses flow maps and glued
twists only.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .linalg import LinearMap3, ModelPoint
from .words import Word

FD_STEP = 1e-6


class MapPiece:
    """Base class: an elementary self-map of a model."""

    kind = "identity"

    def __init__(self, model, word: Word | None = None):
        self.model = model
        self.word = word if word is not None else Word()

    # -- batch interface ----------------------------------------------------

    def apply_batch(self, pts: np.ndarray) -> np.ndarray:
        return np.array(pts, dtype=float)

    def differential_batch(self, pts: np.ndarray) -> np.ndarray:
        return np.tile(np.eye(3), (len(np.atleast_2d(pts)), 1, 1))

    def apply_with_differential(self, pts: np.ndarray):
        return self.apply_batch(pts), self.differential_batch(pts)

    def inverse(self) -> "MapPiece":
        return self

    def describe(self) -> dict:
        return {"kind": self.kind}

    def __repr__(self):
        return "%s(%s)" % (type(self).__name__, self.describe())


class IdentityPiece(MapPiece):
    kind = "identity"


class FlowTimePiece(MapPiece):
    """Time-t map of the model flow."""

    kind = "flow-time"

    def __init__(self, model, t: float):
        super().__init__(model)
        self.t = float(t)

    def apply_batch(self, pts):
        out, _ = self.model.flow(np.atleast_2d(np.asarray(pts, dtype=float)), self.t)
        return out

    def apply_with_differential(self, pts):
        return self.model.flow(np.atleast_2d(np.asarray(pts, dtype=float)), self.t)

    def differential_batch(self, pts):
        _, mats = self.model.flow(np.atleast_2d(np.asarray(pts, dtype=float)), self.t)
        return mats

    def inverse(self):
        return FlowTimePiece(self.model, -self.t)

    def describe(self):
        return {"kind": self.kind, "t": self.t}


class FiberMapPiece(MapPiece):
    """(x, y, s) -> (B(x, y) + shift mod 1, s) for an integer B, |det B| = 1.

    Descends to the suspension only when B commutes with the gluing matrix
    and the shift is compatible; otherwise it is a chart-level test double.
    """

    kind = "conjugacy"

    def __init__(self, model, B=None, shift=(0.0, 0.0)):
        super().__init__(model)
        B = np.eye(2, dtype=np.int64) if B is None else np.asarray(B, dtype=np.int64)
        if abs(int(round(float(np.linalg.det(B.astype(float)))))) != 1:
            raise DomainError("fiber matrix must have determinant +-1")
        self.B = B
        self.shift = np.asarray(shift, dtype=float)

    def apply_batch(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        fiber = np.mod(pts[:, :2] @ self.B.T.astype(float) + self.shift, 1.0)
        return np.column_stack([fiber, pts[:, 2]])

    def differential_batch(self, pts):
        n = len(np.atleast_2d(pts))
        m = np.eye(3)
        m[:2, :2] = self.B
        return np.tile(m, (n, 1, 1))

    def inverse(self):
        Binv = np.round(np.linalg.inv(self.B.astype(float))).astype(np.int64)
        return FiberMapPiece(self.model, Binv, -(Binv.astype(float) @ self.shift))

    def describe(self):
        return {"kind": self.kind, "B": self.B.tolist(), "shift": self.shift.tolist()}


class FiberRotationPiece(MapPiece):
    """Rotate the fiber plane by an s-dependent angle (test double).

    Used to build adversarial connecting maps that carry the unstable
    eigendirection onto the stable one at some heights.
    """

    kind = "conjugacy"

    def __init__(self, model, turns: float = 0.5, sign: int = 1):
        super().__init__(model)
        self.turns = float(turns)
        self.sign = 1 if sign >= 0 else -1

    def _theta(self, s):
        return self.sign * 2.0 * np.pi * self.turns * s / self.model.roof

    def apply_batch(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        th = self._theta(pts[:, 2])
        c, sn = np.cos(th), np.sin(th)
        x = c * pts[:, 0] - sn * pts[:, 1]
        y = sn * pts[:, 0] + c * pts[:, 1]
        return np.column_stack([np.mod(x, 1.0), np.mod(y, 1.0), pts[:, 2]])

    def differential_batch(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        th = self._theta(pts[:, 2])
        dth = self.sign * 2.0 * np.pi * self.turns / self.model.roof
        c, sn = np.cos(th), np.sin(th)
        n = len(pts)
        m = np.tile(np.eye(3), (n, 1, 1))
        m[:, 0, 0] = c
        m[:, 0, 1] = -sn
        m[:, 1, 0] = sn
        m[:, 1, 1] = c
        m[:, 0, 2] = dth * (-sn * pts[:, 0] - c * pts[:, 1])
        m[:, 1, 2] = dth * (c * pts[:, 0] - sn * pts[:, 1])
        return m

    def inverse(self):
        return FiberRotationPiece(self.model, self.turns, -self.sign)

    def describe(self):
        return {"kind": self.kind, "rotation_turns": self.sign * self.turns}


class ComposedMap:
    """Ordered composition of map pieces, applied left to right."""

    def __init__(self, pieces):
        pieces = list(pieces)
        if not pieces:
            raise ValueError("a composed map needs at least one piece")
        model = pieces[0].model
        for p in pieces:
            if p.model is not model:
                raise DomainError("all pieces of a composition share one model")
        self.pieces = pieces
        self.model = model

    @property
    def word(self) -> Word:
        w = Word()
        for p in self.pieces:
            w = w * p.word
        return w

    def apply_batch(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        for p in self.pieces:
            pts = p.apply_batch(pts)
        return pts

    def apply_with_differential(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        mats = np.tile(np.eye(3), (len(pts), 1, 1))
        for p in self.pieces:
            pts, dm = p.apply_with_differential(pts)
            mats = np.einsum("nij,njk->nik", dm, mats)
        return pts, mats

    def differential_batch(self, pts):
        _, mats = self.apply_with_differential(pts)
        return mats

    def inverse(self) -> "ComposedMap":
        return ComposedMap([p.inverse() for p in reversed(self.pieces)])

    def then(self, other) -> "ComposedMap":
        more = other.pieces if isinstance(other, ComposedMap) else [other]
        return ComposedMap(self.pieces + list(more))

    def iterate(self, m: int) -> "ComposedMap":
        if m < 1:
            raise ValueError("iterate count must be >= 1")
        return ComposedMap(self.pieces * m)

    def orbit_with_differentials(self, pts, steps: int):
        """Apply the map `steps` times; return per-step points and matrices.

        points[k] is the k-th image (points[0] the input), mats[k] the
        differential of one application at points[k].
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        points = [pts]
        mats = []
        for _ in range(steps):
            nxt, dm = self.apply_with_differential(points[-1])
            points.append(nxt)
            mats.append(dm)
        return points, mats

    def describe(self):
        return [p.describe() for p in self.pieces]

    def __repr__(self):
        return "ComposedMap(%d pieces, word=%s)" % (len(self.pieces), self.word)


def compose(*pieces) -> ComposedMap:
    flat = []
    for p in pieces:
        if isinstance(p, ComposedMap):
            flat.extend(p.pieces)
        else:
            flat.append(p)
    return ComposedMap(flat)


# ---------------------------------------------------------------- point API


def apply_map(cmap, p: ModelPoint) -> ModelPoint:
    """Image of a single model point under a composed map (or piece)."""
    model = cmap.model
    coords = model.require_point(p)
    out = cmap.apply_batch(coords[None, :])[0]
    return ModelPoint(model.model_id, model.canonicalize(out))


def differential(cmap, p: ModelPoint) -> LinearMap3:
    """Chain-rule differential of a composed map at a single point."""
    model = cmap.model
    coords = model.require_point(p)
    pts, mats = (
        cmap.apply_with_differential(coords[None, :])
        if hasattr(cmap, "apply_with_differential")
        else (cmap.apply_batch(coords[None, :]), cmap.differential_batch(coords[None, :]))
    )
    target = ModelPoint(model.model_id, model.canonicalize(pts[0]))
    return LinearMap3(mats[0], source=p, target=target)


def finite_difference_differential(cmap, pts, step: float = FD_STEP) -> np.ndarray:
    """Central-difference differential of a map, chart-identification aware.

    Independent derivative oracle used by the self-tests; never consulted by
    the maps themselves.
    """
    model = cmap.model
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = len(pts)
    out = np.empty((n, 3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = step
        plus = cmap.apply_batch(model.displace(pts, e[None, :]))
        minus = cmap.apply_batch(model.displace(pts, -e[None, :]))
        out[:, :, j] = model.chart_diff(plus, minus) / (2.0 * step)
    return out
