"""Hyperbolic surface backends on the genus-2 regular octagon quotient.

Points of the universal cover are complex numbers in the open unit disk.
The base metric is the hyperbolic one, ``4|dz|^2 / (1 - |z|^2)^2``; a
variable-curvature surface is obtained by a conformal change
``exp(2 phi) * g_hyp`` where ``phi`` is a group-invariant sum of bumps.
The magnetic density ``F`` uses the same representation.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

INRADIUS = float(np.arccosh(1.0 + np.sqrt(2.0)))
CIRCUMRADIUS = float(np.arccosh((1.0 + np.sqrt(2.0)) ** 2))
# disk (Euclidean) radii of side midpoints and vertices
MIDPOINT_RADIUS = float(np.tanh(INRADIUS / 2.0))
VERTEX_RADIUS = float(np.tanh(CIRCUMRADIUS / 2.0))
SURFACE_AREA = 4.0 * np.pi  # hyperbolic area of a genus-2 surface

# g0 g3 g6 g1 g4 g7 g2 g5 = identity, found by exhaustive search over
# cyclically reduced products of the eight side pairings.
RELATOR = (0, 3, 6, 1, 4, 7, 2, 5)

BOUNDARY_GUARD = 1e-12
BUMP_CUTOFF_EXPONENT = 42.0  # bumps are dropped where exp(-x) < exp(-42)


class GeometryError(ValueError):
    """Point outside the unit disk or otherwise outside the model's domain."""


class OutOfReachError(GeometryError):
    """Fundamental-domain reduction did not finish within the word budget."""


def check_disk(z):
    z = np.asarray(z, dtype=complex)
    if np.any(~np.isfinite(z)) or np.any(np.abs(z) >= 1.0 - BOUNDARY_GUARD):
        raise GeometryError("point outside the open unit disk")
    return z


def hyperbolic_distance(z, w=0.0):
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    r = np.abs(z - w) / np.abs(1.0 - np.conj(w) * z)
    return 2.0 * np.arctanh(np.minimum(r, 1.0 - 1e-16))


def disk_point_at(distance, angle):
    """Point at hyperbolic ``distance`` from 0 in direction ``angle``."""
    return np.tanh(np.asarray(distance) / 2.0) * np.exp(1j * np.asarray(angle))


@dataclass(frozen=True)
class MobiusMap:
    """Disk automorphism ``z -> (a z + b) / (conj(b) z + conj(a))``, ``|a|^2 - |b|^2 = 1``."""

    a: complex
    b: complex

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return (self.a * z + self.b) / (np.conj(self.b) * z + np.conj(self.a))

    @classmethod
    def identity(cls) -> MobiusMap:
        return cls(1.0 + 0j, 0j)

    @classmethod
    def translation(cls, angle: float, distance: float) -> MobiusMap:
        """Hyperbolic translation by ``distance`` along the diameter at ``angle``."""
        return cls(complex(np.cosh(distance / 2.0)), complex(np.sinh(distance / 2.0) * np.exp(1j * angle)))

    @classmethod
    def moving_to_origin(cls, w: complex) -> MobiusMap:
        s = 1.0 / np.sqrt(1.0 - abs(w) ** 2)
        return cls(complex(s), complex(-w * s))

    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [np.conj(self.b), np.conj(self.a)]])

    def determinant(self) -> float:
        return float(abs(self.a) ** 2 - abs(self.b) ** 2)

    def normalized(self) -> MobiusMap:
        d = np.sqrt(self.determinant())
        return MobiusMap(self.a / d, self.b / d)

    def compose(self, other: MobiusMap) -> MobiusMap:
        """``self o other``, renormalized to unit determinant."""
        a = self.a * other.a + self.b * np.conj(other.b)
        b = self.a * other.b + self.b * np.conj(other.a)
        return MobiusMap(complex(a), complex(b)).normalized()

    def inverse(self) -> MobiusMap:
        return MobiusMap(np.conj(self.a), -self.b)

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        return 1.0 / (np.conj(self.b) * z + np.conj(self.a)) ** 2

    def log_derivative_gradient(self, z):
        """``M''(z) / M'(z)``."""
        z = np.asarray(z, dtype=complex)
        return -2.0 * np.conj(self.b) / (np.conj(self.b) * z + np.conj(self.a))

    @property
    def trace(self) -> float:
        return float(2.0 * self.a.real)

    def translation_length(self) -> float:
        t = abs(self.a.real)
        if t <= 1.0:
            return 0.0
        return float(2.0 * np.arccosh(t))

    def fixed_points(self) -> tuple[complex, complex]:
        """Repelling and attracting boundary fixed points of a hyperbolic map."""
        c, a, b = np.conj(self.b), self.a, self.b
        # c z^2 + (conj(a) - a) z - b = 0
        roots = np.roots([c, np.conj(a) - a, -b])
        derivs = [abs(self.derivative(r)) for r in roots]
        order = np.argsort(derivs)[::-1]  # repelling point has |M'| > 1
        return complex(roots[order[0]]), complex(roots[order[1]])

    def distance_to_identity(self) -> float:
        m = self.matrix()
        return float(min(np.abs(m - np.eye(2)).max(), np.abs(m + np.eye(2)).max()))


@dataclass(frozen=True)
class GroupElement:
    map: MobiusMap
    word: tuple[int, ...]


def word_to_string(word) -> str:
    return " ".join(f"g{k}" for k in word)


def free_reduce(word) -> tuple[int, ...]:
    """Cancel adjacent inverse letters (``g_k g_{k+4}``)."""
    out: list[int] = []
    for k in word:
        if out and (out[-1] + 4) % 8 == k:
            out.pop()
        else:
            out.append(int(k))
    return tuple(out)


def parse_word(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(k) for k in text)
    return tuple(int(tok.strip().lstrip("g")) for tok in str(text).replace(",", " ").split() if tok.strip())


class FuchsianGroup:
    """Surface group of the regular octagon with vertex angle pi/4.

    Generator ``k`` translates along the diameter at angle ``k pi/4`` by
    twice the inradius, pairing side ``k+4`` with side ``k``;
    ``g_{k+4} = g_k^{-1}``.
    """

    def __init__(self, max_word_length: int = 8):
        self.max_word_length = int(max_word_length)
        self.generators = tuple(MobiusMap.translation(k * np.pi / 4.0, 2.0 * INRADIUS) for k in range(8))
        self._gen_a = np.array([g.a for g in self.generators])
        self._gen_b = np.array([g.b for g in self.generators])
        self._tile_cache: dict[float, list[GroupElement]] = {}

    @staticmethod
    def inverse_letter(k: int) -> int:
        return (k + 4) % 8

    def element(self, word) -> MobiusMap:
        m = MobiusMap.identity()
        for k in parse_word(word):
            m = m.compose(self.generators[k])
        return m

    def relator_residual(self) -> float:
        return self.element(RELATOR).distance_to_identity()

    def side_midpoint(self, k: int) -> complex:
        return complex(disk_point_at(INRADIUS, k * np.pi / 4.0))

    def vertex(self, k: int) -> complex:
        """Vertex between sides ``k`` and ``k+1``."""
        return complex(disk_point_at(CIRCUMRADIUS, (k + 0.5) * np.pi / 4.0))

    def _images_abs(self, z):
        z = np.asarray(z, dtype=complex)[..., None]
        return np.abs((self._gen_a * z + self._gen_b) / (np.conj(self._gen_b) * z + np.conj(self._gen_a)))

    def in_domain(self, z, tol: float = 1e-12):
        """Closed Dirichlet octagon: no generator moves ``z`` closer to 0."""
        z = np.asarray(z, dtype=complex)
        return np.all(self._images_abs(z) >= np.abs(z)[..., None] - tol, axis=-1)

    def reduce(self, z, max_steps: int | None = None) -> tuple[complex, tuple[int, ...]]:
        """Return ``(w, word)`` with ``w`` in the octagon and ``element(word)(w) == z``."""
        z = complex(check_disk(z))
        steps = self.max_word_length if max_steps is None else max_steps
        w = z
        applied: list[int] = []
        for _ in range(steps + 1):
            images = self._images_abs(w)
            k = int(np.argmin(images))
            if images[k] >= abs(w) - 1e-14:
                word = tuple(self.inverse_letter(j) for j in applied)
                return w, word
            w = complex(self.generators[k](w))
            applied.append(k)
        raise OutOfReachError(f"reduction of {z!r} did not finish within {steps} steps")

    def reduce_many(self, z, max_steps: int | None = None):
        """Vectorized reduction; returns ``(w, maps)`` where ``maps`` holds (a, b) arrays with ``w = M(z)``."""
        z = check_disk(z).copy()
        a = np.ones_like(z)
        b = np.zeros_like(z)
        steps = self.max_word_length if max_steps is None else max_steps
        for _ in range(steps + 1):
            images = self._images_abs(z)
            k = np.argmin(images, axis=-1)
            best = np.take_along_axis(images, k[..., None], axis=-1)[..., 0]
            move = best < np.abs(z) - 1e-14
            if not np.any(move):
                return z, (a, b)
            ga, gb = self._gen_a[k[move]], self._gen_b[k[move]]
            zm = z[move]
            z[move] = (ga * zm + gb) / (np.conj(gb) * zm + np.conj(ga))
            a_new = ga * a[move] + gb * np.conj(b[move])
            b_new = ga * b[move] + gb * np.conj(a[move])
            a[move], b[move] = a_new, b_new
        raise OutOfReachError("vectorized reduction did not finish within the word budget")

    def tiles_within(self, radius: float) -> list[GroupElement]:
        """Group elements whose tile center ``g(0)`` lies within ``radius`` of 0.

        Breadth-first over tile adjacency (right multiplication by the
        side pairings), capped at ``max_word_length`` letters.
        """
        key = round(float(radius), 6)
        if key in self._tile_cache:
            return self._tile_cache[key]
        search = radius + CIRCUMRADIUS + 0.5
        ident = GroupElement(MobiusMap.identity(), ())
        seen = {(0.0, 0.0)}
        out = [ident]
        queue = deque([ident])
        while queue:
            el = queue.popleft()
            if len(el.word) >= self.max_word_length:
                continue
            for k, g in enumerate(self.generators):
                m = el.map.compose(g)
                c = complex(m(0.0))
                if hyperbolic_distance(c) > search:
                    continue
                tag = (round(c.real, 9), round(c.imag, 9))
                if tag in seen:
                    continue
                seen.add(tag)
                new = GroupElement(m, el.word + (k,))
                out.append(new)
                queue.append(new)
        result = [e for e in out if hyperbolic_distance(e.map(0.0)) <= radius]
        self._tile_cache[key] = result
        return result


@dataclass(frozen=True)
class Bump:
    """Radial bump ``amplitude * exp(-2 (cosh d - 1) / width^2)``; ~ Gaussian in distance d."""

    center: complex
    width: float
    amplitude: float

    def to_dict(self) -> dict:
        return {"center": [float(np.real(self.center)), float(np.imag(self.center))],
                "width": float(self.width), "amplitude": float(self.amplitude)}

    @classmethod
    def from_dict(cls, d: dict) -> Bump:
        c = d["center"]
        center = complex(c[0], c[1]) if isinstance(c, (list, tuple)) else complex(c)
        return cls(center, float(d["width"]), float(d["amplitude"]))


# points handled without reduction lie within this distance of the origin
COVER_RADIUS = CIRCUMRADIUS + 1.0


class BumpField:
    """Group-invariant scalar ``constant + sum_gamma sum_bumps b(gamma^-1 z)``.

    Orbit images of bump centers are precomputed for every point within
    ``COVER_RADIUS`` of the origin; farther points are reduced first.
    """

    def __init__(self, group: FuchsianGroup, bumps=(), constant: float = 0.0):
        self.group = group
        self.bumps = tuple(bumps)
        self.constant = float(constant)
        centers, kappas, amps = [], [], []
        self.truncation_bound = 0.0
        for bump in self.bumps:
            if bump.width <= 0:
                raise ValueError("bump width must be positive")
            c0 = complex(check_disk(bump.center))
            cut = float(np.arccosh(1.0 + BUMP_CUTOFF_EXPONENT * bump.width ** 2 / 2.0))
            reach = COVER_RADIUS + cut
            for el in group.tiles_within(reach + hyperbolic_distance(c0)):
                c = complex(el.map(c0))
                if hyperbolic_distance(c) <= reach:
                    centers.append(c)
                    kappas.append(4.0 / ((1.0 - abs(c) ** 2) * bump.width ** 2))
                    amps.append(bump.amplitude)
            self.truncation_bound += abs(bump.amplitude) * np.exp(-BUMP_CUTOFF_EXPONENT)
        self._c = np.array(centers, dtype=complex)
        self._kappa = np.array(kappas, dtype=float)
        self._amp = np.array(amps, dtype=float)

    @property
    def is_constant(self) -> bool:
        return len(self.bumps) == 0 or all(b.amplitude == 0 for b in self.bumps)

    def to_dict(self) -> dict:
        return {"constant": self.constant, "bumps": [b.to_dict() for b in self.bumps]}

    def _localize(self, z):
        z = check_disk(z)
        far = hyperbolic_distance(z) > COVER_RADIUS - 0.5
        if not np.any(far):
            return z
        flat = np.atleast_1d(z).copy()
        mask = np.atleast_1d(far)
        flat[mask], _ = self.group.reduce_many(flat[mask])
        return flat.reshape(np.shape(z))

    def _terms(self, z):
        z = np.asarray(z, dtype=complex)[..., None]
        p = 1.0 - np.abs(z) ** 2
        d = z - self._c
        q = np.abs(d) ** 2
        m = q / p
        g = self._amp * np.exp(-self._kappa * m)
        return z, p, d, q, m, g

    def value(self, z):
        z = self._localize(z)
        if self._c.size == 0:
            return np.full(np.shape(z), self.constant)
        *_, g = self._terms(z)
        return self.constant + g.sum(axis=-1)

    def gradient(self, z):
        """Euclidean chart gradient ``(f_x, f_y)``; ``z`` must lie near the octagon."""
        z = check_disk(z)
        if self._c.size == 0:
            zero = np.zeros(np.shape(z))
            return zero, zero.copy()
        zz, p, d, q, m, g = self._terms(z)
        # grad m = (2 (z - c) p + 2 q z) / p^2 as a complex number x + i y
        gm = (2.0 * d * p + 2.0 * q * zz) / p ** 2
        gc = (-self._kappa * g * gm).sum(axis=-1)
        return gc.real, gc.imag

    def hessian(self, z):
        """``(f_xx, f_xy, f_yy)`` in the chart."""
        z = check_disk(z)
        if self._c.size == 0:
            zero = np.zeros(np.shape(z))
            return zero, zero.copy(), zero.copy()
        zz, p, d, q, m, g = self._terms(z)
        x, y = zz.real, zz.imag
        dx, dy = d.real, d.imag
        nx = 2.0 * dx * p + 2.0 * q * x
        ny = 2.0 * dy * p + 2.0 * q * y
        # Jacobian of N = 2 (z - c) p + 2 q z
        jxx = 2.0 * (p + q) - 4.0 * dx * x + 4.0 * x * dx
        jyy = 2.0 * (p + q) - 4.0 * dy * y + 4.0 * y * dy
        jxy = -4.0 * dx * y + 4.0 * x * dy  # dN_x/dy
        jyx = -4.0 * dy * x + 4.0 * y * dx  # dN_y/dx
        mxx = jxx / p ** 2 + 4.0 * nx * x / p ** 3
        myy = jyy / p ** 2 + 4.0 * ny * y / p ** 3
        mxy = jxy / p ** 2 + 4.0 * nx * y / p ** 3
        mx, my = nx / p ** 2, ny / p ** 2
        k = self._kappa
        fxx = (g * (k ** 2 * mx * mx - k * mxx)).sum(axis=-1)
        fyy = (g * (k ** 2 * my * my - k * myy)).sum(axis=-1)
        fxy = (g * (k ** 2 * mx * my - k * mxy)).sum(axis=-1)
        return fxx, fxy, fyy


@dataclass(frozen=True)
class OctagonQuadrature:
    """Gauss-Legendre rule on the octagon in hyperbolic polar coordinates.

    The octagon is cut into 16 right triangles (center, side midpoint,
    vertex); the radial extent along a ray at offset ``psi`` from the
    midpoint direction is ``artanh(tanh(inradius) / cos psi)``.
    """

    points: np.ndarray
    weights: np.ndarray  # hyperbolic area weights, summing to 4 pi

    @classmethod
    def build(cls, order: int = 24) -> OctagonQuadrature:
        xg, wg = np.polynomial.legendre.leggauss(order)
        half = np.pi / 8.0
        pts, wts = [], []
        for k in range(8):
            for lo, hi in ((-half, 0.0), (0.0, half)):
                psi = 0.5 * (hi - lo) * (xg + 1.0) + lo
                wpsi = 0.5 * (hi - lo) * wg
                rmax = np.arctanh(np.tanh(INRADIUS) / np.cos(psi))
                rho = 0.5 * rmax[:, None] * (xg[None, :] + 1.0)
                wrho = 0.5 * rmax[:, None] * wg[None, :]
                ang = k * np.pi / 4.0 + psi[:, None] + 0.0 * rho
                pts.append(disk_point_at(rho, ang).ravel())
                wts.append((wpsi[:, None] * wrho * np.sinh(rho)).ravel())
        return cls(np.concatenate(pts), np.concatenate(wts))


@dataclass
class SurfaceModel:
    """Conformally perturbed hyperbolic metric plus magnetic density.

    ``phi`` is the conformal exponent over the hyperbolic base and
    ``magnetic`` is ``F`` in ``Omega = F * Omega_a``.
    """

    group: FuchsianGroup
    phi: BumpField
    magnetic: BumpField
    seed: int = 0
    label: str = ""

    @classmethod
    def constant(cls, magnetic: float = 1.0, scale_exponent: float = 0.0, max_word_length: int = 8) -> SurfaceModel:
        group = FuchsianGroup(max_word_length)
        return cls(group, BumpField(group, (), scale_exponent), BumpField(group, (), magnetic), label="constant")

    @classmethod
    def perturbed(cls, amplitude: float = -0.1, center: complex = 0.3 + 0.15j, width: float = 0.6,
                  magnetic: float = 1.0, max_word_length: int = 8) -> SurfaceModel:
        """Shipped variable-curvature model: one conformal bump, constant ``F``.

        The default amplitude is negative; a positive bump of this size
        concentrated enough to matter pushes K above zero near its center.
        """
        return cls.from_spec([Bump(center, width, amplitude)], (), 0.0, magnetic, max_word_length, label="perturbed")

    @classmethod
    def from_spec(cls, phi_bumps=(), magnetic_bumps=(), phi_constant: float = 0.0, magnetic_constant: float = 1.0,
                  max_word_length: int = 8, seed: int = 0, label: str = "") -> SurfaceModel:
        group = FuchsianGroup(max_word_length)
        return cls(group, BumpField(group, phi_bumps, phi_constant), BumpField(group, magnetic_bumps, magnetic_constant),
                   seed=seed, label=label)

    @classmethod
    def from_dict(cls, d: dict) -> SurfaceModel:
        phi = d.get("phi", {})
        mag = d.get("magnetic", {})
        return cls.from_spec(
            [Bump.from_dict(b) for b in phi.get("bumps", [])],
            [Bump.from_dict(b) for b in mag.get("bumps", [])],
            float(phi.get("constant", 0.0)),
            float(mag.get("constant", 1.0)),
            int(d.get("max_word_length", 8)),
            int(d.get("seed", 0)),
            str(d.get("label", "")),
        )

    def to_dict(self) -> dict:
        return {"label": self.label, "phi": self.phi.to_dict(), "magnetic": self.magnetic.to_dict(),
                "max_word_length": self.group.max_word_length, "seed": self.seed}

    @property
    def has_constant_curvature(self) -> bool:
        return self.phi.is_constant

    @property
    def has_constant_magnetic(self) -> bool:
        return self.magnetic.is_constant

    # conformal exponent of the full metric: phi + log(2 / (1 - |z|^2))
    def conformal(self, z):
        z = check_disk(z)
        return self.phi.value(z) + np.log(2.0 / (1.0 - np.abs(z) ** 2))

    def conformal_gradient(self, z):
        z = check_disk(z)
        px, py = self.phi.gradient(z)
        p = 1.0 - np.abs(z) ** 2
        return px + 2.0 * z.real / p, py + 2.0 * z.imag / p

    def conformal_hessian(self, z):
        z = check_disk(z)
        hxx, hxy, hyy = self.phi.hessian(z)
        p = 1.0 - np.abs(z) ** 2
        x, y = z.real, z.imag
        return (hxx + 2.0 / p + 4.0 * x * x / p ** 2,
                hxy + 4.0 * x * y / p ** 2,
                hyy + 2.0 / p + 4.0 * y * y / p ** 2)

    def hyperbolic_laplacian_phi(self, z):
        z = check_disk(z)
        hxx, _, hyy = self.phi.hessian(z)
        return (1.0 - np.abs(z) ** 2) ** 2 / 4.0 * (hxx + hyy)

    def curvature(self, z):
        """Gaussian curvature ``exp(-2 phi) (-1 - Lap_hyp phi)``."""
        z = check_disk(z)
        if self.phi.is_constant:
            return np.full(np.shape(z), -np.exp(-2.0 * self.phi.constant))
        return np.exp(-2.0 * self.phi.value(z)) * (-1.0 - self.hyperbolic_laplacian_phi(z))

    def magnetic_density(self, z):
        return self.magnetic.value(z)

    def magnetic_gradient(self, z):
        return self.magnetic.gradient(z)

    def metric_factor(self, z):
        """``exp(2 Phi)``: the metric is this times the Euclidean one."""
        return np.exp(2.0 * self.conformal(z))

    @cached_property
    def quadrature(self) -> OctagonQuadrature:
        return OctagonQuadrature.build()

    def integrate(self, values_fn) -> float:
        """Integral over the surface against the area form of this metric."""
        q = self.quadrature
        w = q.weights * np.exp(2.0 * self.phi.value(q.points))
        return float(np.sum(w * values_fn(q.points)))

    @cached_property
    def area(self) -> float:
        return self.integrate(lambda z: np.ones(np.shape(z)))

    @cached_property
    def cohomology_constant(self) -> float:
        """``c`` in ``Omega = c K Omega_a + d theta``; Gauss-Bonnet gives ``int K = -4 pi``."""
        return -self.integrate(self.magnetic.value) / SURFACE_AREA

    @cached_property
    def mean_magnetic(self) -> float:
        """``int F dmu`` for the normalized Liouville measure."""
        return self.integrate(self.magnetic.value) / self.area

    @cached_property
    def curvature_bounds(self) -> tuple[float, float]:
        if self.phi.is_constant:
            k = float(self.curvature(0.0))
            return k, k
        q = self.quadrature
        k = self.curvature(q.points)
        return float(k.min()), float(k.max())

    @cached_property
    def magnetic_bounds(self) -> tuple[float, float]:
        if self.magnetic.is_constant:
            return self.magnetic.constant, self.magnetic.constant
        f = self.magnetic.value(self.quadrature.points)
        return float(f.min()), float(f.max())

    def christoffel(self, z):
        """``Gamma[k, i, j]`` for ``exp(2 Phi) |dz|^2``: ``d_j Phi delta_ki + d_i Phi delta_kj - d_k Phi delta_ij``."""
        px, py = self.conformal_gradient(complex(check_disk(z)))
        d = np.array([float(px), float(py)])
        gam = np.zeros((2, 2, 2))
        eye = np.eye(2)
        for k in range(2):
            for i in range(2):
                for j in range(2):
                    gam[k, i, j] = eye[k, i] * d[j] + eye[k, j] * d[i] - eye[i, j] * d[k]
        return gam


def curvature_at(model: SurfaceModel, p) -> float:
    return float(model.curvature(complex(check_disk(p))))


def reduce_to_fundamental_domain(group: FuchsianGroup, z) -> tuple[complex, tuple[int, ...]]:
    return group.reduce(z)


def christoffel_at(model: SurfaceModel, p) -> np.ndarray:
    return model.christoffel(p)


def curvature_fd(model: SurfaceModel, z, h: float = 2e-3):
    """Oracle ``K = -exp(-2 Phi) Lap Phi`` from fourth-order differences of the full log metric factor."""
    z = np.asarray(z, dtype=complex)
    f = model.conformal
    lap = -60.0 * f(z)
    for d in (h, 1j * h):
        lap = lap + 16.0 * (f(z + d) + f(z - d)) - (f(z + 2 * d) + f(z - 2 * d))
    lap = lap / (12.0 * h ** 2)
    return -np.exp(-2.0 * f(z)) * lap

