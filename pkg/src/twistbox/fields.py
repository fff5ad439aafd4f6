"""Scalar speed fields on the suspension chart.

A field supplies values and chart gradients of a positive function
rho(x, y, s); the flow module integrates the vector field rho * d/ds.
Expression fields are parsed with sympy from a small language
(+, -, *, /, sin, cos, exp, numeric constants, pi and the coordinates
x, y, s) so that model files stay plain JSON.
"""

from __future__ import annotations

import numpy as np
import sympy as sp

from .errors import BadCollar

_X, _Y, _S = sp.symbols("x y s")
_ALLOWED = {"x": _X, "y": _Y, "s": _S, "sin": sp.sin, "cos": sp.cos,
            "exp": sp.exp, "pi": sp.pi}


def smoothstep(u):
    """Order-7 polynomial smoothstep on [0,1]; C^3-flat at both ends."""
    u = np.clip(u, 0.0, 1.0)
    return u**4 * (35.0 - 84.0 * u + 70.0 * u**2 - 20.0 * u**3)


def smoothstep_d(u):
    """Derivative of the order-7 smoothstep: 140 u^3 (1-u)^3 on [0,1]."""
    u = np.asarray(u, dtype=float)
    inside = (u > 0.0) & (u < 1.0)
    return np.where(inside, 140.0 * u**3 * (1.0 - u) ** 3, 0.0)


def smoothstep_d2(u):
    u = np.asarray(u, dtype=float)
    inside = (u > 0.0) & (u < 1.0)
    return np.where(inside, 420.0 * u**2 * (1.0 - u) ** 2 * (1.0 - 2.0 * u), 0.0)


def smoothstep_integral(u):
    """Antiderivative of the order-7 smoothstep with value 0 at u=0."""
    u = np.asarray(u, dtype=float)
    uc = np.clip(u, 0.0, 1.0)
    base = uc**5 * (7.0 - 14.0 * uc + 10.0 * uc**2 - 2.5 * uc**3)
    # beyond u=1 the step is identically 1
    return base + np.where(u > 1.0, u - 1.0, 0.0)


class ConstantField:
    """rho identically equal to a positive constant."""

    def __init__(self, value: float = 1.0):
        if value <= 0:
            raise ValueError("constant speed must be positive")
        self.constant = float(value)

    def value(self, x, y, s):
        return np.full(np.broadcast(x, y, s).shape or (), self.constant)

    def gradient(self, x, y, s):
        shape = np.broadcast(x, y, s).shape or ()
        return np.zeros(shape + (3,))

    def value_and_gradient(self, x, y, s):
        return self.value(x, y, s), self.gradient(x, y, s)

    def describe(self):
        return repr(self.constant)


class ExprField:
    """Speed field given by an expression in the model file language."""

    def __init__(self, expression: str):
        self.expression = expression
        expr = sp.sympify(expression, locals=dict(_ALLOWED))
        free = expr.free_symbols - {_X, _Y, _S}
        if free:
            raise ValueError("unknown symbols in rho expression: %s" % free)
        self._expr = expr
        self._val = sp.lambdify((_X, _Y, _S), expr, "numpy")
        self._grad = [
            sp.lambdify((_X, _Y, _S), sp.diff(expr, v), "numpy") for v in (_X, _Y, _S)
        ]

    @property
    def constant(self):
        return float(self._expr) if self._expr.is_number else None

    def value(self, x, y, s):
        out = self._val(x, y, s)
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(x, y, s).shape or ()).copy()

    def gradient(self, x, y, s):
        shape = np.broadcast(x, y, s).shape or ()
        cols = []
        for g in self._grad:
            gv = np.asarray(g(x, y, s), dtype=float)
            cols.append(np.broadcast_to(gv, shape))
        return np.stack(cols, axis=-1)

    def value_and_gradient(self, x, y, s):
        return self.value(x, y, s), self.gradient(x, y, s)

    def describe(self):
        return self.expression


class CollaredField:
    """An expression field flattened to 1 near the transverse fiber.

    Inserting a flow box at s = 0 needs unit speed near the insertion fiber,
    so arbitrary pre-time-changes are masked by a plateau bump in s:
    rho = 1 + (raw - 1) * chi(s), with chi == 0 on [0, w] and [1-w, 1] and
    chi == 1 on [2w, 1-2w].
    """

    def __init__(self, raw: ExprField, width: float = 0.1):
        if not 0 < width <= 0.25:
            raise ValueError("mask width must lie in (0, 0.25]")
        self.raw = raw
        self.width = float(width)
        self.constant = None

    def _chi(self, s):
        w = self.width
        d = np.minimum(np.mod(s, 1.0), 1.0 - np.mod(s, 1.0))
        return smoothstep((d - w) / w)

    def _chi_d(self, s):
        w = self.width
        sm = np.mod(s, 1.0)
        d = np.minimum(sm, 1.0 - sm)
        sign = np.where(sm <= 0.5, 1.0, -1.0)
        return sign * smoothstep_d((d - w) / w) / w

    def value(self, x, y, s):
        return 1.0 + (self.raw.value(x, y, s) - 1.0) * self._chi(s)

    def gradient(self, x, y, s):
        chi = self._chi(s)
        g = self.raw.gradient(x, y, s) * chi[..., None]
        g[..., 2] += (self.raw.value(x, y, s) - 1.0) * self._chi_d(s)
        return g

    def value_and_gradient(self, x, y, s):
        chi = self._chi(s)
        raw = self.raw.value(x, y, s)
        g = self.raw.gradient(x, y, s) * chi[..., None]
        g[..., 2] += (raw - 1.0) * self._chi_d(s)
        return 1.0 + (raw - 1.0) * chi, g

    def describe(self):
        return "collared(%s, w=%g)" % (self.raw.describe(), self.width)


class CollarTimeChange:
    """The time change that realizes a length-eta flow box in a collar.

    An increasing reparametrization psi: [-eps, eps+eta] -> [-eps, eps] with
    psi' <= 1 and psi - x flat to third order at the endpoints compresses the
    extended collar back onto the original one; the associated speed field is
    psi' o psi^{-1} inside |s| <= eps around the fiber and 1 elsewhere.

    psi' is built directly as 1 - depth * w(x) with w a plateau bump (zero
    within 0.1*eps of the endpoints, order-7 smoothstep ramps of width
    0.4*eps, one in between), which fixes depth = eta / (eta + 1.4*eps) and
    keeps psi' >= 1.4*eps / (eta + 1.4*eps) > 0 for every eta.
    """

    PLATEAU = 0.1
    RAMP = 0.4

    def __init__(self, eta: float, eps: float = 0.2):
        if eta <= 0:
            raise ValueError("eta must be positive")
        if not 0 < eps <= 0.2:
            raise BadCollar("collar half-width must lie in (0, 0.2]")
        self.eta = float(eta)
        self.eps = float(eps)
        self.length = 2 * self.eps + self.eta
        self._p = self.PLATEAU * self.eps
        self._r = self.RAMP * self.eps
        self._mass = self.eta + (2 * self.eps - 2 * self._p - self._r)
        self.depth = self.eta / self._mass
        self.rho_min = 1.0 - self.depth
        self.constant = None
        # monotone table seeding the Newton inversion of psi
        self._inv_x = np.linspace(-self.eps, self.eps + self.eta, 32769)
        self._inv_u = self.psi(self._inv_x)
        self._build_fast_table()

    # -- the bump w and its antiderivative ---------------------------------

    def _w(self, x):
        x = np.asarray(x, dtype=float)
        d = np.minimum(x + self.eps, self.eps + self.eta - x)
        return smoothstep((d - self._p) / self._r)

    def _w_d(self, x):
        x = np.asarray(x, dtype=float)
        d_left = x + self.eps
        d_right = self.eps + self.eta - x
        left = d_left <= d_right
        d = np.where(left, d_left, d_right)
        sign = np.where(left, 1.0, -1.0)
        return sign * smoothstep_d((d - self._p) / self._r) / self._r

    # -- psi and derived quantities -----------------------------------------

    def psi_prime(self, x):
        return 1.0 - self.depth * self._w(x)

    def psi_second(self, x):
        return -self.depth * self._w_d(x)

    def psi(self, x):
        x = np.asarray(x, dtype=float)
        return -self.eps + (x + self.eps) - self.depth * self._int_w(x)

    def _int_w(self, x):
        """Integral of w from -eps to x (branch-free closed form)."""
        t = np.asarray(x, dtype=float) + self.eps  # offset from left end, in [0, L]
        p, r, L = self._p, self._r, self.length
        t1 = smoothstep_integral(np.clip((t - p) / r, 0.0, 1.0))
        t2 = smoothstep_integral(np.clip((L - p - t) / r, 0.0, 1.0))
        return r * (t1 - t2 + 0.5) + np.clip(t - p - r, 0.0, L - 2.0 * (p + r))

    def psi_inverse(self, u):
        """Invert the monotone psi: table lookup plus two Newton steps."""
        u = np.asarray(u, dtype=float)
        scalar = u.ndim == 0
        uu = np.atleast_1d(u)
        x = np.interp(uu, self._inv_u, self._inv_x)
        for _ in range(2):
            d = np.maximum(self.psi_prime(x), 0.25 * self.rho_min)
            x = np.clip(x - (self.psi(x) - uu) / d, -self.eps, self.eps + self.eta)
        return float(x[0]) if scalar else x

    # -- the speed field on the base chart ----------------------------------

    def _build_fast_table(self):
        """Cubic Hermite tables of rho(u) and rho'(u) over the collar.

        Nodes sit on the x-grid (so their u-spacing shrinks exactly where the
        profile varies fastest); evaluation is a bracket lookup plus one
        Hermite polynomial, which keeps the flow integrator off the psi
        inversion path.
        """
        p, r, L = self._p, self._r, self.length
        a = -self.eps
        ramp1 = np.linspace(a + p, a + p + r, 4097)
        ramp2 = np.linspace(a + L - p - r, a + L - p, 4097)
        # rho is exactly constant on the three plateaus, so two nodes each
        x = np.concatenate([[a], ramp1, ramp2, [a + L]])
        u = self.psi(x)
        rho = self.psi_prime(x)
        drho = self.psi_second(x) / rho
        self._tab_u = u
        self._tab_rho = rho
        self._tab_drho = drho

    def _fast_rho(self, u):
        """Hermite evaluation of (rho, drho/du) on collar coordinates."""
        tu, tr, td = self._tab_u, self._tab_rho, self._tab_drho
        i = np.clip(np.searchsorted(tu, u) - 1, 0, len(tu) - 2)
        u0 = tu[i]
        du = tu[i + 1] - u0
        t = (u - u0) / du
        t2 = t * t
        t3 = t2 * t
        h00 = 2 * t3 - 3 * t2 + 1
        h10 = t3 - 2 * t2 + t
        h01 = -2 * t3 + 3 * t2
        h11 = t3 - t2
        r0, r1 = tr[i], tr[i + 1]
        d0, d1 = td[i], td[i + 1]
        val = h00 * r0 + h10 * du * d0 + h01 * r1 + h11 * du * d1
        dh00 = (6 * t2 - 6 * t) / du
        dh10 = 3 * t2 - 4 * t + 1
        dh01 = (6 * t - 6 * t2) / du
        dh11 = 3 * t2 - 2 * t
        der = dh00 * r0 + dh10 * d0 + dh01 * r1 + dh11 * d1
        return np.minimum(val, 1.0), der

    def _collar_coord(self, s):
        sm = np.mod(np.asarray(s, dtype=float), 1.0)
        return np.where(sm <= 0.5, sm, sm - 1.0)

    def value(self, x, y, s):
        shape = np.broadcast(x, y, s).shape
        u = np.atleast_1d(np.broadcast_to(self._collar_coord(s), shape)).ravel()
        out = np.ones_like(u)
        inside = np.abs(u) <= self.eps
        if np.any(inside):
            out[inside] = self._fast_rho(u[inside])[0]
        return out.reshape(shape) if shape else float(out[0])

    def gradient(self, x, y, s):
        shape = np.broadcast(x, y, s).shape
        u = np.atleast_1d(np.broadcast_to(self._collar_coord(s), shape)).ravel()
        g = np.zeros(u.shape + (3,))
        inside = np.abs(u) <= self.eps
        if np.any(inside):
            g[inside, 2] = self._fast_rho(u[inside])[1]
        return g.reshape(shape + (3,)) if shape else g[0]

    def value_and_gradient(self, x, y, s):
        shape = np.broadcast(x, y, s).shape
        u = np.atleast_1d(np.broadcast_to(self._collar_coord(s), shape)).ravel()
        val = np.ones_like(u)
        g = np.zeros(u.shape + (3,))
        inside = np.abs(u) <= self.eps
        if np.any(inside):
            v, d = self._fast_rho(u[inside])
            val[inside] = v
            g[inside, 2] = d
        if shape:
            return val.reshape(shape), g.reshape(shape + (3,))
        return float(val[0]), g[0]

    def value_exact(self, u):
        """rho at a collar coordinate via the psi inversion (reference path)."""
        xx = self.psi_inverse(np.asarray(u, dtype=float))
        return self.psi_prime(xx)

    def transit_time(self):
        """Time for the slowed flow to cross the collar: the box length plus
        the two half-collars."""
        return self.length

    def describe(self):
        return "collar_time_change(eta=%g, eps=%g)" % (self.eta, self.eps)


def eta_time_change(eta: float, eps: float = 0.2) -> CollarTimeChange:
    """Speed field whose flow is smoothly conjugate to the box-extended flow."""
    return CollarTimeChange(eta, eps)


def make_field(spec):
    """Field from a JSON-friendly description: None, number, or expression."""
    if spec is None:
        return ConstantField(1.0)
    if isinstance(spec, (int, float)):
        return ConstantField(float(spec))
    if isinstance(spec, str):
        f = ExprField(spec)
        c = f.constant
        return ConstantField(c) if c is not None else f
    if isinstance(spec, (ConstantField, ExprField, CollaredField, CollarTimeChange)):
        return spec
    raise ValueError("cannot build a speed field from %r" % (spec,))
