"""Unit tangent bundle, the frame X, H, V and the magnetic flow X + lam F V.

A state is ``(x, y, theta)``: a point ``z = x + i y`` of the disk chart and
the angle of the unit vector ``v = exp(-Phi) (cos theta, sin theta)``
against the chart's horizontal.  Orbits are kept in the fundamental
octagon; every deck transformation applied along the way is recorded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.integrate import solve_ivp

from .geometry import MIDPOINT_RADIUS, MobiusMap, SurfaceModel, check_disk

TWO_PI = 2.0 * np.pi


class IntegrationError(RuntimeError):
    """Adaptive step size underflow or a runaway linearization."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class SMPoint:
    base: complex
    theta: float

    def __post_init__(self):
        check_disk(self.base)
        object.__setattr__(self, "base", complex(self.base))
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)

    def as_state(self) -> np.ndarray:
        return np.array([self.base.real, self.base.imag, self.theta])

    @classmethod
    def from_state(cls, s) -> SMPoint:
        return cls(complex(s[0], s[1]), float(s[2]))

    def flip(self) -> SMPoint:
        return SMPoint(self.base, self.theta + np.pi)


@dataclass(frozen=True)
class FlowParams:
    lam: float
    surface: SurfaceModel
    dt: float = 1e-3
    method: str = "rk4"  # or "adaptive"
    tol: float = 1e-11

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.method not in ("rk4", "adaptive"):
            raise ValueError(f"unknown integrator {self.method!r}")

    def with_(self, **kw) -> FlowParams:
        d = dict(lam=self.lam, surface=self.surface, dt=self.dt, method=self.method, tol=self.tol)
        d.update(kw)
        return FlowParams(**d)

    def anosov_margin(self) -> float:
        """``-(lam^2 max F^2 + max K)``; positive means the Anosov criterion holds."""
        fmax = max(abs(v) for v in self.surface.magnetic_bounds)
        return -(self.lam ** 2 * fmax ** 2 + self.surface.curvature_bounds[1])


# ---------------------------------------------------------------------------
# pointwise geometry on arrays of states

def _unpack(s):
    s = np.asarray(s, dtype=float)
    return s[..., 0] + 1j * s[..., 1], s[..., 2]


def vector_field(params: FlowParams, s):
    """``X_lam`` in chart coordinates for states of shape ``(..., 3)``."""
    z, th = _unpack(s)
    model = params.surface
    e = np.exp(-model.conformal(z))
    px, py = model.conformal_gradient(z)
    c, sn = np.cos(th), np.sin(th)
    out = np.empty(np.shape(s))
    out[..., 0] = e * c
    out[..., 1] = e * sn
    out[..., 2] = e * (py * c - px * sn)
    if params.lam != 0.0:
        out[..., 2] += params.lam * model.magnetic_density(z)
    return out


def vector_field_jacobian(params: FlowParams, s):
    """Derivative of ``vector_field`` with respect to the state, shape ``(..., 3, 3)``."""
    z, th = _unpack(s)
    model = params.surface
    e = np.exp(-model.conformal(z))
    px, py = model.conformal_gradient(z)
    hxx, hxy, hyy = model.conformal_hessian(z)
    c, sn = np.cos(th), np.sin(th)
    rot = py * c - px * sn
    jac = np.empty(np.shape(s) + (3,))
    jac[..., 0, 0] = -e * px * c
    jac[..., 0, 1] = -e * py * c
    jac[..., 0, 2] = -e * sn
    jac[..., 1, 0] = -e * px * sn
    jac[..., 1, 1] = -e * py * sn
    jac[..., 1, 2] = e * c
    jac[..., 2, 0] = -e * px * rot + e * (hxy * c - hxx * sn)
    jac[..., 2, 1] = -e * py * rot + e * (hyy * c - hxy * sn)
    jac[..., 2, 2] = -e * (py * sn + px * c)
    if params.lam != 0.0:
        fx, fy = model.magnetic_gradient(z)
        jac[..., 2, 0] += params.lam * fx
        jac[..., 2, 1] += params.lam * fy
    return jac


def frame_matrix(model: SurfaceModel, s):
    """Columns X, H, V of the frame in chart coordinates, shape ``(..., 3, 3)``."""
    z, th = _unpack(s)
    e = np.exp(-model.conformal(z))
    px, py = model.conformal_gradient(z)
    c, sn = np.cos(th), np.sin(th)
    m = np.zeros(np.shape(s) + (3,))
    m[..., 0, 0], m[..., 1, 0], m[..., 2, 0] = e * c, e * sn, e * (py * c - px * sn)
    m[..., 0, 1], m[..., 1, 1], m[..., 2, 1] = -e * sn, e * c, -e * (py * sn + px * c)
    m[..., 2, 2] = 1.0
    return m


def coframe_matrix(model: SurfaceModel, s):
    """Rows alpha, beta, psi in chart coordinates; the inverse of ``frame_matrix``."""
    z, th = _unpack(s)
    ephi = np.exp(model.conformal(z))
    px, py = model.conformal_gradient(z)
    c, sn = np.cos(th), np.sin(th)
    m = np.zeros(np.shape(s) + (3,))
    m[..., 0, 0], m[..., 0, 1] = ephi * c, ephi * sn
    m[..., 1, 0], m[..., 1, 1] = -ephi * sn, ephi * c
    m[..., 2, 0], m[..., 2, 1], m[..., 2, 2] = -py, px, 1.0
    return m


def _phi_gradient_fd(model: SurfaceModel, z, h: float = 1e-3):
    """Fourth-order central differences of ``Phi``; independent of the analytic gradient."""
    def d(step):
        f = model.conformal
        return (-f(z + 2 * step) + 8 * f(z + step) - 8 * f(z - step) + f(z - 2 * step)) / (12 * h)
    return d(h), d(1j * h)


def coframe_from_definitions(model: SurfaceModel, s, h: float = 1e-3):
    """Rows ``alpha, beta, psi`` built from ``alpha(xi) = <d pi xi, v>``, ``beta(xi) = <d pi xi, i v>``
    and ``psi(xi) = <D_t v, i v>``, the covariant derivative taken with the Christoffel symbols
    of ``exp(2 Phi)|dz|^2``.  Used as an oracle for ``coframe_matrix``.
    """
    s = np.asarray(s, dtype=float)
    z = s[0] + 1j * s[1]
    th = s[2]
    phi = float(model.conformal(z))
    gx, gy = (float(g) for g in _phi_gradient_fd(model, z, h))
    grad = np.array([gx, gy])
    u = np.array([np.cos(th), np.sin(th)])
    w = np.array([-np.sin(th), np.cos(th)])
    v, iv = np.exp(-phi) * u, np.exp(-phi) * w
    metric = np.exp(2 * phi)
    rows = np.zeros((3, 3))
    for j, xi in enumerate(np.eye(3)):
        c = xi[:2]
        rows[0, j] = metric * c @ v
        rows[1, j] = metric * c @ iv
        dv = -(grad @ c) * v + xi[2] * iv
        gamma = c * (grad @ v) + v * (grad @ c) - (c @ v) * grad
        rows[2, j] = metric * (dv + gamma) @ iv
    return rows


def duality_matrix(model: SurfaceModel, s) -> np.ndarray:
    """``[alpha, beta, psi]`` (from definitions) applied to ``[X, H, V]``; the identity ideally."""
    return coframe_from_definitions(model, s) @ frame_matrix(model, np.asarray(s, dtype=float))


def random_states(model: SurfaceModel, n: int, rng, radius: float = 0.85) -> list:
    """``n`` states with base points reduced to the octagon and uniform angles."""
    r = radius * np.sqrt(rng.random(n))
    z = r * np.exp(2j * np.pi * rng.random(n))
    w, _ = model.group.reduce_many(z)
    th = TWO_PI * rng.random(n)
    return [SMPoint(complex(a), float(t)) for a, t in zip(w, th)]


def frame_at(params: FlowParams, p: SMPoint):
    """Chart vectors ``(X, H, V)`` at ``p``."""
    m = frame_matrix(params.surface, p.as_state())
    return m[:, 0].copy(), m[:, 1].copy(), m[:, 2].copy()


def chart_change_jacobian(m: MobiusMap, s):
    """Derivative of ``(z, theta) -> (m z, theta + arg m'(z))``."""
    z, _ = _unpack(s)
    d = m.derivative(z)
    q = m.log_derivative_gradient(z)
    out = np.zeros(np.shape(s) + (3,))
    out[..., 0, 0], out[..., 0, 1] = d.real, -d.imag
    out[..., 1, 0], out[..., 1, 1] = d.imag, d.real
    out[..., 2, 0], out[..., 2, 1], out[..., 2, 2] = q.imag, q.real, 1.0
    return out


def apply_mobius(m: MobiusMap, s):
    z, th = _unpack(s)
    out = np.array(s, dtype=float, copy=True)
    w = m(z)
    out[..., 0], out[..., 1] = w.real, w.imag
    out[..., 2] = th + np.angle(m.derivative(z))
    return out


def angle_difference(a, b):
    return (np.asarray(a) - np.asarray(b) + np.pi) % TWO_PI - np.pi


def state_distance(s1, s2) -> float:
    """Max-norm distance in chart coordinates, angles compared mod 2 pi."""
    s1, s2 = np.asarray(s1), np.asarray(s2)
    return float(max(np.abs(s1[..., :2] - s2[..., :2]).max(), np.abs(angle_difference(s1[..., 2], s2[..., 2])).max()))


# ---------------------------------------------------------------------------
# scalar fast path

@njit(cache=True)
def _bump_terms(x, y, p, cre, cim, kap, amp, order):
    val = 0.0
    gx = 0.0
    gy = 0.0
    hxx = 0.0
    hxy = 0.0
    hyy = 0.0
    for j in range(cre.shape[0]):
        dx = x - cre[j]
        dy = y - cim[j]
        q = dx * dx + dy * dy
        k = kap[j]
        g = amp[j] * math.exp(-k * q / p)
        nx = 2.0 * dx * p + 2.0 * q * x
        ny = 2.0 * dy * p + 2.0 * q * y
        mx = nx / (p * p)
        my = ny / (p * p)
        val += g
        gx -= k * g * mx
        gy -= k * g * my
        if order >= 2:
            jxx = 2.0 * (p + q)
            jxy = -4.0 * dx * y + 4.0 * x * dy
            mxx = jxx / (p * p) + 4.0 * nx * x / (p * p * p)
            myy = jxx / (p * p) + 4.0 * ny * y / (p * p * p)
            mxy = jxy / (p * p) + 4.0 * nx * y / (p * p * p)
            hxx += g * (k * k * mx * mx - k * mxx)
            hyy += g * (k * k * my * my - k * myy)
            hxy += g * (k * k * mx * my - k * mxy)
    return val, gx, gy, hxx, hxy, hyy


@njit(cache=True)
def _rhs_var(y, lam, variational, pc, pcre, pcim, pk, pa, fc, fcre, fcim, fk, fa):
    x = y[0]
    yy = y[1]
    th = y[2]
    p = 1.0 - x * x - yy * yy
    order = 2 if variational else 1
    v, gx, gy, bxx, bxy, byy = _bump_terms(x, yy, p, pcre, pcim, pk, pa, order)
    e = math.exp(-(pc + v)) * p / 2.0
    px = gx + 2.0 * x / p
    py = gy + 2.0 * yy / p
    c = math.cos(th)
    sn = math.sin(th)
    rot = py * c - px * sn
    fv, fx, fy, _a, _b, _c = _bump_terms(x, yy, p, fcre, fcim, fk, fa, 1)
    out = np.empty(y.shape[0])
    out[0] = e * c
    out[1] = e * sn
    out[2] = e * rot + lam * (fc + fv)
    if variational:
        hxx = bxx + 2.0 / p + 4.0 * x * x / (p * p)
        hxy = bxy + 4.0 * x * yy / (p * p)
        hyy = byy + 2.0 / p + 4.0 * yy * yy / (p * p)
        jac = np.empty((3, 3))
        jac[0, 0] = -e * px * c
        jac[0, 1] = -e * py * c
        jac[0, 2] = -e * sn
        jac[1, 0] = -e * px * sn
        jac[1, 1] = -e * py * sn
        jac[1, 2] = e * c
        jac[2, 0] = -e * px * rot + e * (hxy * c - hxx * sn) + lam * fx
        jac[2, 1] = -e * py * rot + e * (hyy * c - hxy * sn) + lam * fy
        jac[2, 2] = -e * (py * sn + px * c)
        for i in range(3):
            for k in range(3):
                acc = 0.0
                for m in range(3):
                    acc += jac[i, m] * y[3 + 3 * m + k]
                out[3 + 3 * i + k] = acc
    return out


@njit(cache=True)
def _rk4_steps(y, h, nsteps, lam, variational, pc, pcre, pcim, pk, pa, fc, fcre, fcim, fk, fa):
    for _ in range(nsteps):
        k1 = _rhs_var(y, lam, variational, pc, pcre, pcim, pk, pa, fc, fcre, fcim, fk, fa)
        k2 = _rhs_var(y + 0.5 * h * k1, lam, variational, pc, pcre, pcim, pk, pa, fc, fcre, fcim, fk, fa)
        k3 = _rhs_var(y + 0.5 * h * k2, lam, variational, pc, pcre, pcim, pk, pa, fc, fcre, fcim, fk, fa)
        k4 = _rhs_var(y + h * k3, lam, variational, pc, pcre, pcim, pk, pa, fc, fcre, fcim, fk, fa)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


@njit(cache=True)
def _outside(x, y, ga_re, ga_im, gb_re, gb_im):
    r2 = x * x + y * y
    if r2 <= MIDPOINT_RADIUS * MIDPOINT_RADIUS:
        return False
    for k in range(ga_re.shape[0]):
        # |g(z)|^2 with g(z) = (a z + b) / (conj(b) z + conj(a))
        nr = ga_re[k] * x - ga_im[k] * y + gb_re[k]
        ni = ga_re[k] * y + ga_im[k] * x + gb_im[k]
        dr = gb_re[k] * x + gb_im[k] * y + ga_re[k]
        di = gb_re[k] * y - gb_im[k] * x - ga_im[k]
        if (nr * nr + ni * ni) / (dr * dr + di * di) < r2 - 1e-12:
            return True
    return False


@njit(cache=True)
def _rk4_until_exit(y, h, nsteps, lam, variational, ga_re, ga_im, gb_re, gb_im,
                    pc, pcre, pcim, pk, pa, fc, fcre, fcim, fk, fa):
    """Take up to ``nsteps`` steps, stopping right after one that leaves the octagon."""
    for i in range(nsteps):
        k1 = _rhs_var(y, lam, variational, pc, pcre, pcim, pk, pa, fc, fcre, fcim, fk, fa)
        k2 = _rhs_var(y + 0.5 * h * k1, lam, variational, pc, pcre, pcim, pk, pa, fc, fcre, fcim, fk, fa)
        k3 = _rhs_var(y + 0.5 * h * k2, lam, variational, pc, pcre, pcim, pk, pa, fc, fcre, fcim, fk, fa)
        k4 = _rhs_var(y + h * k3, lam, variational, pc, pcre, pcim, pk, pa, fc, fcre, fcim, fk, fa)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if _outside(y[0], y[1], ga_re, ga_im, gb_re, gb_im):
            return y, i + 1
    return y, nsteps


class FieldKernel:
    """Compiled single-state evaluation of ``X_lam`` and its linearization."""

    def __init__(self, model: SurfaceModel):
        self.packs = self._pack(model.phi) + self._pack(model.magnetic)
        g = model.group
        self.gens = (np.ascontiguousarray(g._gen_a.real), np.ascontiguousarray(g._gen_a.imag),
                     np.ascontiguousarray(g._gen_b.real), np.ascontiguousarray(g._gen_b.imag))

    @staticmethod
    def _pack(field):
        c = field._c if not field.is_constant else field._c[:0]
        k = field._kappa[: c.size]
        a = field._amp[: c.size]
        return (float(field.constant), np.ascontiguousarray(c.real), np.ascontiguousarray(c.imag),
                np.ascontiguousarray(k), np.ascontiguousarray(a))

    @staticmethod
    def of(model: SurfaceModel) -> FieldKernel:
        k = model.__dict__.get("_field_kernel")
        if k is None:
            k = FieldKernel(model)
            model.__dict__["_field_kernel"] = k
        return k

    def rhs(self, s, lam):
        return _rhs_var(np.asarray(s, dtype=float), float(lam), False, *self.packs)

    def rhs_var(self, y, lam):
        return _rhs_var(np.asarray(y, dtype=float), float(lam), True, *self.packs)

    def steps(self, y, h, nsteps, lam, variational=False):
        return _rk4_steps(np.asarray(y, dtype=float), float(h), int(nsteps), float(lam), bool(variational),
                          *self.packs)

    def steps_until_exit(self, y, h, nsteps, lam, variational=False):
        return _rk4_until_exit(np.asarray(y, dtype=float), float(h), int(nsteps), float(lam), bool(variational),
                               *self.gens, *self.packs)


def _advance(params: FlowParams, y, h: float, n: int, variational: bool = False):
    """``n`` RK4 steps with reductions; returns ``(y, maps, words)`` of the chart changes made.

    ``y`` holds the state and, if ``variational``, the 3x3 chart derivative.
    """
    kern, lam = FieldKernel.of(params.surface), params.lam
    maps, words = [], []
    done = 0
    while done < n:
        y, k = kern.steps_until_exit(y, h, n - done, lam, variational)
        done += k
        s, m, w = _reduce_state(params, y[:3])
        if m is not None:
            if variational:
                jac = chart_change_jacobian(m, y[:3]) @ y[3:].reshape(3, 3)
                y = np.concatenate([s, jac.ravel()])
            else:
                y = s
            maps.append(m)
            words.extend(w)
    return y, maps, words


# ---------------------------------------------------------------------------
# integration

def _rk4(f, s, h):
    k1 = f(s)
    k2 = f(s + 0.5 * h * k1)
    k3 = f(s + 0.5 * h * k2)
    k4 = f(s + h * k3)
    return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _steps(T: float, dt: float) -> tuple[int, float]:
    if T == 0:
        return 0, 0.0
    n = max(1, int(math.ceil(abs(T) / dt - 1e-9)))
    return n, T / n


def _scalar_rhs(params: FlowParams):
    kern = FieldKernel.of(params.surface)
    lam = params.lam
    return lambda u: kern.rhs(u, lam)


def _reduce_state(params: FlowParams, s):
    """Reduce a single state into the octagon; returns ``(state, map, word)``.

    ``map`` (or None) sends the old chart to the new one and ``word``
    satisfies ``element(word)(new z) == old z``.
    """
    if s[0] * s[0] + s[1] * s[1] <= MIDPOINT_RADIUS ** 2:
        return s, None, ()
    z = complex(s[0], s[1])
    group = params.surface.group
    if bool(group.in_domain(z)):
        return s, None, ()
    _, word = group.reduce(z)
    if not word:
        return s, None, ()
    m = group.element(word).inverse()
    return apply_mobius(m, s), m, word


def _chart_change_arrays(a, b, z):
    den = np.conj(b) * z + np.conj(a)
    d = 1.0 / den ** 2
    q = -2.0 * np.conj(b) / den
    out = np.zeros(np.shape(z) + (3, 3))
    out[..., 0, 0], out[..., 0, 1] = d.real, -d.imag
    out[..., 1, 0], out[..., 1, 1] = d.imag, d.real
    out[..., 2, 0], out[..., 2, 1], out[..., 2, 2] = q.imag, q.real, 1.0
    return out


def reduce_states(params: FlowParams, s, jac=None):
    """Vectorized reduction of states ``(n, 3)``; chart derivatives ``jac`` are updated too."""
    s = np.array(s, dtype=float, copy=True)
    z = s[:, 0] + 1j * s[:, 1]
    need = np.abs(z) > MIDPOINT_RADIUS
    if not np.any(need):
        return s, jac
    idx = np.nonzero(need)[0]
    zi = z[idx]
    w, (a, b) = params.surface.group.reduce_many(zi)
    moved = (a != 1.0) | (b != 0.0)
    if not np.any(moved):
        return s, jac
    idx, zi, w, a, b = idx[moved], zi[moved], w[moved], a[moved], b[moved]
    den = np.conj(b) * zi + np.conj(a)
    s[idx, 0], s[idx, 1] = w.real, w.imag
    s[idx, 2] = s[idx, 2] - 2.0 * np.angle(den)
    if jac is not None:
        jac = jac.copy()
        jac[idx] = _chart_change_arrays(a, b, zi) @ jac[idx]
    return s, jac


def flow_lifted(params: FlowParams, s, T: float, dt: float | None = None):
    """Flow a state ``(3,)`` or states ``(..., 3)`` by time ``T`` without chart reductions."""
    s = np.array(s, dtype=float, copy=True)
    n, h = _steps(T, params.dt if dt is None else dt)
    if s.ndim == 1:
        return FieldKernel.of(params.surface).steps(s, h, n, params.lam) if n else s
    f = lambda u: vector_field(params, u)
    for _ in range(n):
        s = _rk4(f, s, h)
    return s


def flow_with_jacobian_lifted(params: FlowParams, s, T: float, dt: float | None = None):
    """Lifted flow of one state together with the chart derivative ``d s(T) / d s(0)``."""
    s = np.asarray(s, dtype=float)
    n, h = _steps(T, params.dt if dt is None else dt)
    y = np.concatenate([s, np.eye(3).ravel()])
    if n:
        y = FieldKernel.of(params.surface).steps(y, h, n, params.lam, True)
    return y[:3], y[3:].reshape(3, 3)


@dataclass
class OrbitSegment:
    """Sampled orbit kept in the fundamental domain.

    ``transitions[i]`` is the deck map taking the chart of sample ``i-1``
    to the chart of sample ``i`` (absent when no reduction happened).
    ``word`` collects, in order, the letters of every reduction; the
    lifted endpoint is ``element(word)`` applied to the final sample.
    """

    times: np.ndarray
    states: np.ndarray
    params: FlowParams
    transitions: dict = field(default_factory=dict)
    word: tuple = ()

    def __len__(self):
        return len(self.times)

    def point(self, i: int) -> SMPoint:
        return SMPoint.from_state(self.states[i])

    @property
    def final(self) -> SMPoint:
        return self.point(-1)

    def speeds(self) -> np.ndarray:
        """Metric norm of the represented unit vectors; 1 by construction of the angle state."""
        return np.ones(len(self))

    def states_in_chart_of(self, i: int, lo: int, hi: int) -> np.ndarray:
        """Samples ``lo..hi`` (inclusive) expressed in the chart of sample ``i``."""
        out = self.states[lo:hi + 1].copy()
        for j in range(lo, hi + 1):
            m = None
            if j > i:
                for k in range(i + 1, j + 1):
                    if k in self.transitions:
                        inv = self.transitions[k].inverse()
                        m = inv if m is None else m.compose(inv)
            else:
                for k in range(j + 1, i + 1):
                    if k in self.transitions:
                        t = self.transitions[k]
                        m = t if m is None else t.compose(m)
            if m is not None:
                out[j - lo] = apply_mobius(m, self.states[j])
        return out

    def lifted_final_state(self) -> np.ndarray:
        """Final sample in the chart of the first one."""
        m = self.params.surface.group.element(self.word)
        return apply_mobius(m, self.states[-1])

    def to_rows(self):
        return [(float(t), float(s[0]), float(s[1]), float(s[2] % TWO_PI)) for t, s in zip(self.times, self.states)]


def integrate(params: FlowParams, p0: SMPoint, T: float, sample_every: int = 1) -> OrbitSegment:
    """Integrate ``X_lam`` from ``p0`` for time ``T`` (negative allowed)."""
    if params.method == "adaptive":
        return _integrate_adaptive(params, p0, T)
    s, _, _ = _reduce_state(params, p0.as_state())
    n, h = _steps(T, params.dt)
    times, states = [0.0], [s.copy()]
    transitions: dict = {}
    word: list[int] = []
    k = 0
    while k < n:
        chunk = min(sample_every, n - k)
        s, maps, w = _advance(params, s, h, chunk)
        k += chunk
        times.append(k * h)
        states.append(s.copy())
        if maps:
            m = maps[0]
            for nxt in maps[1:]:
                m = nxt.compose(m)
            transitions[len(states) - 1] = m
            word.extend(w)
    return OrbitSegment(np.array(times), np.array(states), params, transitions, tuple(word))


def _integrate_adaptive(params: FlowParams, p0: SMPoint, T: float, chunk: float = 0.5) -> OrbitSegment:
    s, _, _ = _reduce_state(params, p0.as_state())
    chunk = abs(chunk) if T >= 0 else -abs(chunk)
    t = 0.0
    times, states, transitions, word = [0.0], [s.copy()], {}, []
    f = _scalar_rhs(params)
    while abs(t) < abs(T) - 1e-14:
        span = chunk if abs(T - t) > abs(chunk) else T - t
        sol = solve_ivp(lambda _t, u: f(u), (0.0, span), s, method="DOP853", rtol=params.tol, atol=params.tol)
        if sol.status != 0:
            partial = OrbitSegment(np.array(times), np.array(states), params, transitions, tuple(word))
            raise IntegrationError(f"adaptive integration failed at t={t}: {sol.message}", partial)
        s = sol.y[:, -1]
        t += span
        s, m, w = _reduce_state(params, s)
        times.append(t)
        states.append(s.copy())
        if m is not None:
            transitions[len(states) - 1] = m
            word.extend(w)
    return OrbitSegment(np.array(times), np.array(states), params, transitions, tuple(word))


def flow_point(params: FlowParams, p: SMPoint, T: float) -> SMPoint:
    n, h = _steps(T, params.dt)
    s, _, _ = _reduce_state(params, p.as_state())
    s, _, _ = _advance(params, s, h, n)
    return SMPoint.from_state(s)


def transport_matrix(params: FlowParams, p: SMPoint, T: float, dt: float | None = None):
    """Endpoint and derivative of ``phi_T`` in the (X, H, V) frame at ``p``.

    The linearization is integrated in chart coordinates alongside the
    state and carried through every chart change.
    """
    s0, _, _ = _reduce_state(params, p.as_state())
    n, h = _steps(T, params.dt if dt is None else dt)
    y, _, _ = _advance(params, np.concatenate([s0, np.eye(3).ravel()]), h, n, True)
    if not np.all(np.isfinite(y)) or np.abs(y[3:]).max() > 1e150:
        raise IntegrationError("linearization overflow; use a shorter horizon")
    s = y[:3]
    frame_jac = coframe_matrix(params.surface, s) @ y[3:].reshape(3, 3) @ frame_matrix(params.surface, s0)
    return SMPoint.from_state(s), frame_jac


def transport_matrices(params: FlowParams, states, T: float, dt: float | None = None):
    """``transport_matrix`` over states ``(n, 3)``; returns end states and frame derivatives."""
    ends, mats = [], []
    for st in np.atleast_2d(states):
        q, m = transport_matrix(params, SMPoint.from_state(st), T, dt)
        ends.append(q.as_state())
        mats.append(m)
    return np.array(ends), np.array(mats)


def liouville_jacobian(params: FlowParams, p0: SMPoint, T: float, max_horizon: float = 20.0) -> float:
    if T == 0:
        return 1.0
    if abs(T) > max_horizon:
        raise IntegrationError(f"horizon |T| = {abs(T)} exceeds {max_horizon}; use a smaller T")
    _, m = transport_matrix(params, p0, T)
    return float(np.linalg.det(m))


# ---------------------------------------------------------------------------
# checks

def _stencil_weights(off: int, npts: int):
    # first/second derivative weights at node ``off`` of ``npts`` equispaced nodes
    nodes = np.arange(npts) - off
    vander = np.vander(nodes, npts, increasing=True).T
    e1, e2 = np.zeros(npts), np.zeros(npts)
    e1[1], e2[2] = 1.0, 2.0
    return np.linalg.solve(vander, e1), np.linalg.solve(vander, e2)


def geodesic_curvature_along(orbit: OrbitSegment) -> np.ndarray:
    """Geodesic curvature of the projected base curve from its samples alone.

    Uses fourth-order differences of the chart curve and the conformal
    relation ``k_g = exp(-Phi) (k_E - dPhi/dn)`` with ``n`` the left normal.
    Requires equally spaced samples; endpoints use one-sided stencils.
    """
    n = len(orbit)
    if n < 3:
        raise ValueError("need at least three samples")
    h = float(orbit.times[1] - orbit.times[0])
    width = 5 if n >= 5 else 3
    half = width // 2
    z = orbit.states[:, 0] + 1j * orbit.states[:, 1]
    d1 = np.empty(n, dtype=complex)
    d2 = np.empty(n, dtype=complex)
    # interior points from the shared central stencil
    w1, w2 = _stencil_weights(half, width)
    win = np.lib.stride_tricks.sliding_window_view(z, width)
    d1[half:n - half] = win @ w1 / h
    d2[half:n - half] = win @ w2 / h ** 2
    special = set(range(half)) | set(range(n - half, n))
    for k in orbit.transitions:
        special.update(j for j in range(k - half, k + half) if 0 <= j < n)
    for i in sorted(special):
        lo = min(max(i - half, 0), n - width)
        pts = orbit.states_in_chart_of(i, lo, lo + width - 1)
        zz = pts[:, 0] + 1j * pts[:, 1]
        u1, u2 = _stencil_weights(i - lo, width)
        d1[i], d2[i] = zz @ u1 / h, zz @ u2 / h ** 2
    speed = np.abs(d1)
    bad = np.nonzero(speed < 1e-14)[0]
    if bad.size:
        raise ValueError(f"degenerate sample {int(bad[0])}: zero speed")
    k_e = (np.conj(d1) * d2).imag / speed ** 3
    model = orbit.params.surface
    px, py = model.conformal_gradient(z)
    nrm = 1j * d1 / speed
    return np.exp(-model.conformal(z)) * (k_e - (px * nrm.real + py * nrm.imag))


def magnetic_curvature_deviation(orbit: OrbitSegment) -> float:
    """``max_t |k_g(t) - lam F(gamma(t))|``."""
    kg = geodesic_curvature_along(orbit)
    z = orbit.states[:, 0] + 1j * orbit.states[:, 1]
    target = orbit.params.lam * orbit.params.surface.magnetic_density(z)
    return float(np.abs(kg - target).max())


def _numerical_jacobian(fn, s, h):
    cols = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        cols.append((fn(s + e) - fn(s - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def lie_bracket(field_a, field_b, s, h: float = 1e-4):
    """``[A, B] = DB . A - DA . B`` with centered differences."""
    s = np.asarray(s, dtype=float)
    return _numerical_jacobian(field_b, s, h) @ field_a(s) - _numerical_jacobian(field_a, s, h) @ field_b(s)


def commutator_check(params: FlowParams, p: SMPoint, h: float = 1e-4) -> dict:
    """Frame-norm residuals of ``[V,X]-H``, ``[V,H]+X``, ``[X,H]-K V`` and the V-part of ``[X,H]``."""
    model = params.surface
    s = p.as_state()
    X = lambda u: frame_matrix(model, u)[:, 0]
    H = lambda u: frame_matrix(model, u)[:, 1]
    V = lambda u: frame_matrix(model, u)[:, 2]
    cof = coframe_matrix(model, s)
    k = float(model.curvature(complex(s[0], s[1])))
    vx = cof @ (lie_bracket(V, X, s, h) - H(s))
    vh = cof @ (lie_bracket(V, H, s, h) + X(s))
    xh_full = cof @ lie_bracket(X, H, s, h)
    xh = xh_full - np.array([0.0, 0.0, k])
    return {
        "VX_minus_H": float(np.linalg.norm(vx)),
        "VH_plus_X": float(np.linalg.norm(vh)),
        "XH_minus_KV": float(np.linalg.norm(xh)),
        "XH_V_component": float(xh_full[2]),
        "curvature": k,
    }


def flow_along_frame(model: SurfaceModel, s, coeffs, t: float = 1.0, steps: int = 8):
    """Flow of the constant-coefficient field ``a X + b H + c V`` for time ``t``."""
    coeffs = np.asarray(coeffs, dtype=float)
    f = lambda u: frame_matrix(model, u) @ coeffs
    u = np.array(s, dtype=float, copy=True)
    h = t / steps
    for _ in range(steps):
        u = _rk4(f, u, h)
    return u
