"""Suspension of a hyperbolic torus automorphism, with time changes and an
optional inserted flow box.

Chart: (x, y, s) with the fiber (x, y) in R^2/Z^2 and s in [0, roof), glued
by (x, y, roof) ~ (A(x, y), 0).  The base model has roof 1; a model with a
flow box of length eta has roof 1 + eta, the box occupying s in [0, eta)
where the speed is identically 1, and the original chart occupying
s in [eta, 1 + eta) carrying the (optional) time change.

The metric is the flat product metric, so chart components are orthonormal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadCollar,
    DomainError,
    IntegrationError,
    NotHyperbolic,
    NotUnimodular,
    OutsideBox,
)
from .fields import CollarTimeChange, ConstantField, make_field
from .linalg import LinearMap3, ModelPoint, SplittingFrame

RK4_STEP = 1e-3
CROSSING_TOL = 1e-12
MAX_FLOW_TIME = 1e6
SEAM_TOL = 1e-6


def _wrap_unit(a):
    return np.mod(a, 1.0)


def _wrap_centered(a):
    return np.mod(a + 0.5, 1.0) - 0.5


@dataclass(frozen=True)
class EtaChartPoint:
    """A flow-box point in straightened coordinates (t, u, v), t in [0, 1]."""

    t: float
    u: float
    v: float


class SuspensionModel:
    """Suspension flow of a hyperbolic A in SL(2, Z), speed field rho."""

    def __init__(self, A, rho=None, eta: float = 0.0, model_id: str | None = None):
        A = np.asarray(A)
        if A.shape != (2, 2) or not np.all(A == np.round(A)):
            raise NotUnimodular("A must be an integer 2x2 matrix")
        A = A.astype(np.int64)
        det = int(round(float(np.linalg.det(A.astype(float)))))
        if det != 1:
            raise NotUnimodular("A must have determinant 1, got %d" % det)
        tr = int(A[0, 0] + A[1, 1])
        if abs(tr) <= 2:
            raise NotHyperbolic("|trace A| = %d <= 2" % abs(tr))
        if tr < 0:
            raise NotHyperbolic("positive-trace hyperbolic A required (trace %d)" % tr)
        if eta < 0:
            raise ValueError("eta must be non-negative")

        self.A = A
        self.Ainv = np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]], dtype=np.int64)
        self.eta = float(eta)
        self.roof = 1.0 + self.eta
        self.field = make_field(rho)
        self.model_id = model_id or (
            "suspension[%d,%d;%d,%d]eta=%g" % (A[0, 0], A[0, 1], A[1, 0], A[1, 1], eta)
        )

        # eigen data: lam_u > 1 > lam_s > 0, unit fiber eigenvectors
        disc = float(tr) ** 2 - 4.0
        self.lam_u = (tr + np.sqrt(disc)) / 2.0
        self.lam_s = (tr - np.sqrt(disc)) / 2.0
        e_u = np.array([1.0, (self.lam_u - A[0, 0]) / A[0, 1]])
        e_s = np.array([1.0, (self.lam_s - A[0, 0]) / A[0, 1]])
        self.e_u = e_u / np.linalg.norm(e_u)
        self.e_s = e_s / np.linalg.norm(e_s)

        self._Af = A.astype(float)
        self._Ainvf = self.Ainv.astype(float)
        self._validate_field()

    # ------------------------------------------------------------------ setup

    def _validate_field(self):
        xs = (np.arange(8) + 0.5) / 8.0
        X, Y, S = np.meshgrid(xs, xs, np.linspace(0.0, 0.999, 8), indexing="ij")
        vals = self._speed(np.column_stack([X.ravel(), Y.ravel(), S.ravel() * self.roof]))
        if np.any(vals <= 0):
            raise DomainError("speed field must be positive on the chart")
        self.rho_min = float(np.min(vals))
        self.rho_max = float(np.max(vals))
        if self.constant_speed is not None:
            return
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        fx, fy = X.ravel(), Y.ravel()
        if self.eta > 0:
            # box gluing needs unit speed on both sides of the original fiber
            for sv in (0.0, 1.0 - 1e-9):
                v = self.field.value(fx, fy, np.full_like(fx, sv))
                if np.max(np.abs(v - 1.0)) > SEAM_TOL:
                    raise DomainError(
                        "time change must equal 1 near the insertion fiber "
                        "(use a collared field)"
                    )
        else:
            top = self.field.value(fx, fy, np.full_like(fx, 1.0 - 1e-9))
            img = _wrap_unit(np.column_stack([fx, fy]) @ self._Af.T)
            bot = self.field.value(img[:, 0], img[:, 1], np.zeros_like(fx))
            if np.max(np.abs(top - bot)) > SEAM_TOL:
                raise DomainError("rho is not well defined on the glued manifold")

    @property
    def constant_speed(self):
        c = getattr(self.field, "constant", None)
        if c is None:
            return None
        if self.eta > 0 and c != 1.0:
            return None
        return float(c)

    # ------------------------------------------------------- chart operations

    def canonicalize(self, pts):
        pts = np.array(pts, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != 3 or not np.all(np.isfinite(pts)):
            raise DomainError("suspension points are finite (x, y, s) triples")
        for _ in range(10000):
            over = pts[:, 2] >= self.roof
            under = pts[:, 2] < 0.0
            if not (np.any(over) or np.any(under)):
                break
            if np.any(over):
                pts[over, :2] = pts[over, :2] @ self._Af.T
                pts[over, 2] -= self.roof
            if np.any(under):
                pts[under, :2] = pts[under, :2] @ self._Ainvf.T
                pts[under, 2] += self.roof
        else:
            raise DomainError("point too far outside the chart to canonicalize")
        pts[:, :2] = _wrap_unit(pts[:, :2])
        return pts[0] if single else pts

    def point(self, x, y, s) -> ModelPoint:
        return ModelPoint(self.model_id, self.canonicalize(np.array([x, y, s])))

    def require_point(self, p: ModelPoint) -> np.ndarray:
        if not isinstance(p, ModelPoint) or p.model_id != self.model_id:
            raise DomainError("point does not belong to model %s" % self.model_id)
        c = np.asarray(p.coords, dtype=float)
        if c.shape != (3,) or not np.all(np.isfinite(c)):
            raise DomainError("invalid suspension chart coordinates")
        return self.canonicalize(c)

    def chart_diff(self, q, p):
        """Minimal tangent representative of q - p across chart identifications."""
        single = np.asarray(q).ndim == 1 and np.asarray(p).ndim == 1
        q = np.atleast_2d(np.asarray(q, dtype=float))
        p = np.atleast_2d(np.asarray(p, dtype=float))
        q, p = np.broadcast_arrays(q, p)
        best = None
        best_norm = None
        for j, B in ((-1, self._Af), (0, None), (1, self._Ainvf)):
            fiber = q[:, :2] if B is None else q[:, :2] @ B.T
            d = np.column_stack(
                [_wrap_centered(fiber - p[:, :2]), q[:, 2] + j * self.roof - p[:, 2]]
            )
            n = np.linalg.norm(d, axis=1)
            if best is None:
                best, best_norm = d.copy(), n
            else:
                take = n < best_norm
                best[take] = d[take]
                best_norm = np.minimum(best_norm, n)
        return best[0] if single else best

    def displace(self, p, v):
        single = np.asarray(p).ndim == 1
        p = np.atleast_2d(np.asarray(p, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        out = np.atleast_2d(self.canonicalize(p + v))
        return out[0] if single else out

    def distance(self, q, p):
        d = self.chart_diff(q, p)
        return np.linalg.norm(np.atleast_2d(d), axis=1)

    def random_points(self, n, rng):
        pts = rng.random((n, 3))
        pts[:, 2] *= self.roof
        return pts

    def grid_points(self, shape):
        nx, ny, ns = shape
        gx = (np.arange(nx) + 0.5) / nx
        gy = (np.arange(ny) + 0.5) / ny
        gs = (np.arange(ns) + 0.5) / ns * self.roof
        X, Y, S = np.meshgrid(gx, gy, gs, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel(), S.ravel()])

    # ---------------------------------------------------------------- speeds

    def _speed(self, pts):
        x, y, s = pts[:, 0], pts[:, 1], pts[:, 2]
        if self.eta == 0:
            return np.asarray(self.field.value(x, y, s), dtype=float)
        out = np.ones(len(pts))
        part = s >= self.eta
        if np.any(part):
            out[part] = self.field.value(x[part], y[part], s[part] - self.eta)
        return out

    def _speed_grad(self, pts):
        x, y, s = pts[:, 0], pts[:, 1], pts[:, 2]
        if self.eta == 0:
            return np.asarray(self.field.gradient(x, y, s), dtype=float)
        out = np.zeros((len(pts), 3))
        part = s >= self.eta
        if np.any(part):
            out[part] = self.field.gradient(x[part], y[part], s[part] - self.eta)
        return out

    def _speed_and_grad(self, pts):
        x, y, s = pts[:, 0], pts[:, 1], pts[:, 2]
        if self.eta == 0:
            v, g = self.field.value_and_gradient(x, y, s)
            return np.asarray(v, dtype=float), np.asarray(g, dtype=float)
        v = np.ones(len(pts))
        g = np.zeros((len(pts), 3))
        part = s >= self.eta
        if np.any(part):
            vv, gg = self.field.value_and_gradient(x[part], y[part], s[part] - self.eta)
            v[part] = vv
            g[part] = gg
        return v, g

    def speed(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        v = self._speed(pts)
        return v if len(v) > 1 else float(v[0])

    # ------------------------------------------------------------------ flow

    def flow(self, pts, t):
        """Time-t map of the flow of rho * d/ds, with its differential.

        pts: (N, 3) or (3,) chart points; t: scalar or (N,) times.
        Returns (points, matrices) with matrices of shape (N, 3, 3).
        Exact for constant speed; RK4 with located roof crossings otherwise.
        """
        single = np.asarray(pts).ndim == 1
        pts = np.atleast_2d(np.asarray(pts, dtype=float)).copy()
        n = len(pts)
        t = np.broadcast_to(np.asarray(t, dtype=float), (n,)).copy()
        if np.any(np.abs(t) > MAX_FLOW_TIME):
            raise ValueError("|t| exceeds the sanity bound %g" % MAX_FLOW_TIME)

        c = self.constant_speed
        if c is not None:
            out, mats = self._flow_exact(pts, c * t)
        else:
            out, mats = self._flow_rk4(pts, t)
        if single:
            return out[0], mats[0]
        return out, mats

    def _flow_exact(self, pts, t_eff):
        s_total = pts[:, 2] + t_eff
        k = np.floor(s_total / self.roof).astype(np.int64)
        s_new = s_total - k * self.roof
        # guard roundoff at the roof
        s_new = np.where(s_new >= self.roof, s_new - self.roof, s_new)
        s_new = np.where(s_new < 0.0, s_new + self.roof, s_new)
        fiber = pts[:, :2].copy()
        mats = np.tile(np.eye(3), (len(pts), 1, 1))
        kk = k.copy()
        for _ in range(int(np.max(np.abs(kk))) if len(kk) else 0):
            fwd = kk > 0
            bwd = kk < 0
            if not (np.any(fwd) or np.any(bwd)):
                break
            if np.any(fwd):
                fiber[fwd] = _wrap_unit(fiber[fwd] @ self._Af.T)
                mats[fwd, :2, :] = self._Af @ mats[fwd, :2, :]
                kk[fwd] -= 1
            if np.any(bwd):
                fiber[bwd] = _wrap_unit(fiber[bwd] @ self._Ainvf.T)
                mats[bwd, :2, :] = self._Ainvf @ mats[bwd, :2, :]
                kk[bwd] += 1
        out = np.column_stack([fiber, s_new])
        return out, mats

    def _field_at(self, x, y, s):
        if self.eta == 0:
            v, g = self.field.value_and_gradient(x, y, s)
            return np.asarray(v, dtype=float), np.asarray(g, dtype=float)
        v = np.ones(len(s))
        g = np.zeros((len(s), 3))
        part = s >= self.eta
        if np.any(part):
            vv, gg = self.field.value_and_gradient(x[part], y[part], s[part] - self.eta)
            v[part] = vv
            g[part] = gg
        return v, g

    def _rk4_step(self, pts, mats, h):
        """One vectorized RK4 step of the flow + variational equations.

        Between roof crossings only s and the bottom cocycle row evolve (the
        fiber coordinates are constant and the fiber rows of the variational
        matrix are frozen), so the integrated state is (s, M[2, :]).

        h: per-element step sizes (N,), possibly signed.
        """
        x, y = pts[:, 0], pts[:, 1]
        m01 = mats[:, :2, :]

        def deriv(s, m2):
            rho, grad = self._field_at(x, y, s)
            dm2 = (
                grad[:, 0, None] * m01[:, 0, :]
                + grad[:, 1, None] * m01[:, 1, :]
                + grad[:, 2, None] * m2
            )
            return rho, dm2

        s0 = pts[:, 2]
        m0 = mats[:, 2, :]
        hc = h[:, None]
        k1s, k1m = deriv(s0, m0)
        k2s, k2m = deriv(s0 + 0.5 * h * k1s, m0 + 0.5 * hc * k1m)
        k3s, k3m = deriv(s0 + 0.5 * h * k2s, m0 + 0.5 * hc * k2m)
        k4s, k4m = deriv(s0 + h * k3s, m0 + hc * k3m)
        new_p = pts.copy()
        new_p[:, 2] = s0 + h * (k1s + 2 * k2s + 2 * k3s + k4s) / 6.0
        new_m = mats.copy()
        new_m[:, 2, :] = m0 + hc * (k1m + 2 * k2m + 2 * k3m + k4m) / 6.0
        return new_p, new_m

    def _locate_crossings(self, pts, mats, h, forward):
        """Sub-step times tau at which each element's s hits the roof (or 0).

        Vectorized bisection on the sub-step size; returns the crossed states
        with the gluing jump already applied.
        """
        lo = np.zeros(len(h))
        hi = np.abs(h)
        target = np.where(forward, self.roof, 0.0)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            q, _ = self._rk4_step(pts, mats, np.copysign(mid, h))
            err = q[:, 2] - target
            inside = np.where(forward, err >= 0.0, err <= 0.0)
            hi = np.where(inside, mid, hi)
            lo = np.where(inside, lo, mid)
            if np.max(hi - lo) < CROSSING_TOL:
                break
        tau = np.copysign(0.5 * (lo + hi), h)
        q, mm = self._rk4_step(pts, mats, tau)
        if np.max(np.abs(q[:, 2] - target)) > 1e-9:
            raise IntegrationError("failed to locate a roof crossing")
        # apply the gluing jump on both the point and the cocycle matrix
        q = q.copy()
        mm = mm.copy()
        fwd = forward
        if np.any(fwd):
            q[fwd, :2] = _wrap_unit(q[fwd, :2] @ self._Af.T)
            q[fwd, 2] = 0.0
            mm[fwd, :2, :] = self._Af @ mm[fwd, :2, :]
        bwd = ~forward
        if np.any(bwd):
            q[bwd, :2] = _wrap_unit(q[bwd, :2] @ self._Ainvf.T)
            q[bwd, 2] = self.roof
            mm[bwd, :2, :] = self._Ainvf @ mm[bwd, :2, :]
        return tau, q, mm

    def _flow_rk4(self, pts, t):
        n = len(pts)
        mats = np.tile(np.eye(3), (n, 1, 1))
        remaining = t.copy()
        tmax = float(np.max(np.abs(t)))
        guard = (
            int(np.ceil(tmax / RK4_STEP))
            + int(np.ceil(tmax * self.rho_max / self.roof))
            + 16
        )
        for _ in range(guard):
            active = np.abs(remaining) > 1e-15
            if not np.any(active):
                break
            h = np.zeros(n)
            h[active] = np.clip(remaining[active], -RK4_STEP, RK4_STEP)
            new_p, new_m = self._rk4_step(pts, mats, h)
            crossed_up = active & (new_p[:, 2] >= self.roof)
            crossed_dn = active & (new_p[:, 2] < 0.0)
            ok = active & ~crossed_up & ~crossed_dn
            pts[ok] = new_p[ok]
            mats[ok] = new_m[ok]
            remaining[ok] -= h[ok]
            crossed = crossed_up | crossed_dn
            if np.any(crossed):
                idx = np.nonzero(crossed)[0]
                tau, q, mm = self._locate_crossings(
                    pts[idx], mats[idx], h[idx], crossed_up[idx]
                )
                pts[idx] = q
                mats[idx] = mm
                remaining[idx] -= tau
        else:
            raise IntegrationError("flow integration exceeded its step guard")
        # a backward jump may legitimately end exactly at s = roof; move such
        # points (and their cocycle matrices) to the canonical representative
        over = pts[:, 2] >= self.roof
        if np.any(over):
            pts[over, :2] = pts[over, :2] @ self._Af.T
            pts[over, 2] -= self.roof
            mats[over, :2, :] = self._Af @ mats[over, :2, :]
        pts[:, :2] = _wrap_unit(pts[:, :2])
        return pts, mats

    # ------------------------------------------------------ reference objects

    def reference_frame_vectors(self):
        e_s3 = np.array([self.e_s[0], self.e_s[1], 0.0])
        e_c3 = np.array([0.0, 0.0, 1.0])
        e_u3 = np.array([self.e_u[0], self.e_u[1], 0.0])
        return e_s3, e_c3, e_u3

    def reference_frame(self, p=None) -> SplittingFrame:
        """Exact splitting frame of the unit-speed suspension.

        Exact (invariant) only when the speed is constant; for genuine time
        changes it is the natural comparison frame, not an invariant one.
        """
        coords = np.zeros(3) if p is None else np.asarray(p, dtype=float)
        e_s3, e_c3, e_u3 = self.reference_frame_vectors()
        return SplittingFrame(ModelPoint(self.model_id, coords), e_s3, e_c3, e_u3)

    def flow_direction(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        v = np.zeros((len(pts), 3))
        v[:, 2] = self._speed(pts)
        return v

    # ------------------------------------------------------------- flow box

    def in_box(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.eta == 0:
            return np.zeros(len(pts), dtype=bool)
        return (pts[:, 2] >= 0.0) & (pts[:, 2] <= self.eta)

    def straighten(self, p) -> EtaChartPoint:
        """Box chart (t, u, v): orbit segments become horizontal t-lines."""
        if self.eta == 0:
            raise OutsideBox("model has no flow box (eta = 0)")
        c = np.asarray(p.coords if isinstance(p, ModelPoint) else p, dtype=float)
        if not (0.0 <= c[2] <= self.eta):
            raise OutsideBox("s = %.6g is outside the flow box [0, %g]" % (c[2], self.eta))
        return EtaChartPoint(t=float(c[2] / self.eta), u=float(c[0]), v=float(c[1]))

    def unstraighten(self, q: EtaChartPoint):
        if self.eta == 0:
            raise OutsideBox("model has no flow box (eta = 0)")
        if not (0.0 <= q.t <= 1.0):
            raise OutsideBox("t = %.6g is outside [0, 1]" % q.t)
        return np.array([_wrap_unit(q.u), _wrap_unit(q.v), q.t * self.eta])

    def straightening_matrix(self) -> np.ndarray:
        """DH_eta on the box, mapping (dx, dy, ds) to (dt, du, dv)."""
        if self.eta == 0:
            raise OutsideBox("model has no flow box (eta = 0)")
        return np.array(
            [[0.0, 0.0, 1.0 / self.eta], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
        )

    # ------------------------------------------------------------------ I/O

    def to_config(self):
        cfg = {
            "kind": "suspension",
            "A": [[int(self.A[0, 0]), int(self.A[0, 1])],
                  [int(self.A[1, 0]), int(self.A[1, 1])]],
            "eta": self.eta,
        }
        if isinstance(self.field, ConstantField):
            cfg["rho"] = self.field.constant
        else:
            cfg["rho"] = self.field.describe()
        return cfg

    @staticmethod
    def from_config(cfg):
        return make_suspension(cfg["A"], cfg.get("rho"), cfg.get("eta", 0.0))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_config(), fh, indent=2, sort_keys=True)


def make_suspension(A, rho=None, eta: float = 0.0) -> SuspensionModel:
    """Suspension model of a hyperbolic A in SL(2, Z) with speed field rho."""
    return SuspensionModel(A, rho=rho, eta=eta)


def flow(model: SuspensionModel, p: ModelPoint, t: float):
    """Single-point flow: returns (ModelPoint, LinearMap3)."""
    coords = model.require_point(p)
    q, m = model.flow(coords, float(t))
    target = ModelPoint(model.model_id, q)
    return target, LinearMap3(m, source=p, target=target)


def collar_time_change(eta: float, eps: float = 0.2) -> CollarTimeChange:
    """The explicit collar reparametrization field rho_eta (see fields)."""
    if eps >= 0.5:
        raise BadCollar("collar does not fit a roof-1 chart")
    return CollarTimeChange(eta, eps)


def box_conjugacy_to_base(model: SuspensionModel, tc: CollarTimeChange):
    """Map from the box-extended chart onto the base chart carrying orbits of
    the unit box flow to orbits of the collar-time-changed flow.

    Identity away from the extended collar around the box; inside, the
    flow-time coordinate from the box entry torus is compressed by psi.  The
    fiber bookkeeping routes through the entry torus so that the gluing loci
    of the two charts correspond.
    """
    if model.eta <= 0:
        raise OutsideBox("conjugacy needs a box model (eta > 0)")
    if abs(model.eta - tc.eta) > 1e-12:
        raise ValueError("time change and model have different eta")
    eps, eta, roof = tc.eps, tc.eta, model.roof
    Af = model._Af
    Ainvf = model._Ainvf

    def apply(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        fiber = pts[:, :2].copy()
        s = pts[:, 2].copy()
        out_fiber = fiber.copy()
        out_s = s - eta
        upper = s >= roof - eps  # collar part reached by flowing backward
        lower = s <= eta + eps  # the box and a bit beyond
        inside = upper | lower
        if np.any(inside):
            t = np.where(upper, s - roof, s)[inside]
            entry = fiber[inside]
            up_sel = upper[inside]
            entry[up_sel] = _wrap_unit(entry[up_sel] @ Af.T)
            u = tc.psi(t)
            neg = u < 0.0
            ef = entry.copy()
            ef[neg] = _wrap_unit(ef[neg] @ Ainvf.T)
            out_fiber[inside] = ef
            out_s[inside] = np.where(neg, 1.0 + u, u)
        return np.column_stack([out_fiber, out_s])

    return apply


def pushed_box_frame(model: SuspensionModel, p, frame: SplittingFrame | None = None):
    """Push a splitting frame at a box point through the straightening chart.

    Returns (pushed unit directions in (t, u, v) coordinates as a dict,
    angles of the pushed strong directions to the horizontal fiber
    eigendirections).
    """
    coords = np.asarray(p.coords if isinstance(p, ModelPoint) else p, dtype=float)
    if not model.in_box(coords)[0]:
        raise OutsideBox("point is not in the flow box")
    if frame is None:
        frame = model.reference_frame(coords)
    H = model.straightening_matrix()

    def push(v):
        w = H @ v
        return w / np.linalg.norm(w)

    pushed = {
        "e_s": push(frame.e_s),
        "e_c": push(frame.e_c),
        "e_u": push(frame.e_u),
    }
    horiz_s = np.array([0.0, model.e_s[0], model.e_s[1]])
    horiz_u = np.array([0.0, model.e_u[0], model.e_u[1]])
    from .linalg import angle_between_lines

    angles = {
        "ss_to_horizontal": angle_between_lines(pushed["e_s"], horiz_s),
        "uu_to_horizontal": angle_between_lines(pushed["e_u"], horiz_u),
    }
    return pushed, angles
