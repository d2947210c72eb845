"""Vertical Fourier analysis on a discretized unit tangent bundle.

Functions on ``SM`` are stored as fiber Fourier coefficients over base nodes
covering the octagon.  With ``theta`` the chart angle of the unit vector,

    X = eta+ + eta-,   H = i (eta+ - eta-),   V = d/dtheta,

and on a coefficient ``g_n``

    (eta+ g)_{n+1} = e^{-Phi} (d_z g_n - n g_n d_z Phi)
    (eta- g)_{n-1} = e^{-Phi} (d_zbar g_n + n g_n d_zbar Phi).

Base derivatives use least-squares cubic stencils whose neighbors may be
ghosts: images ``gamma(q)`` of nodes under neighboring tiles.  A ghost carries
the fiber rotation of its pairing, so mode ``n`` reads ``g_n(q) e^{-i n arg gamma'(q)}``.
"""

from __future__ import annotations

import warnings
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .geometry import CIRCUMRADIUS, Bump, BumpField, MobiusMap, SurfaceModel, hyperbolic_distance


class HypothesisViolation(ValueError):
    """A theorem's hypothesis fails; the message names the failed inequality."""


class BandOverflowError(ValueError):
    pass


class AliasingWarning(UserWarning):
    pass


ALIASING_THRESHOLD = 1e-8


# ---------------------------------------------------------------------------
# grid

def _geodesic(a: complex, b: complex):
    """Constant-speed geodesic ``[0, 1] -> disk`` from ``a`` to ``b`` and its derivative."""
    m = MobiusMap.moving_to_origin(a)
    w = complex(m(b))
    beta = np.exp(1j * np.angle(w)) if abs(w) > 0 else 1.0
    dist = 2.0 * np.arctanh(abs(w))
    inv = m.inverse()

    def curve(t):
        r = np.tanh(0.5 * dist * np.asarray(t))
        zeta = r * beta
        return inv(zeta), inv.derivative(zeta) * 0.5 * dist * (1.0 - r * r) * beta

    return curve


def _coons_kite(k: int, group, s, t):
    """Coons patch over the kite (0, M_k, V_k, M_{k+1}); returns points and area Jacobian."""
    o = 0j
    mk, mk1, vk = group.side_midpoint(k), group.side_midpoint((k + 1) % 8), group.vertex(k)
    bottom, right = _geodesic(o, mk), _geodesic(mk, vk)
    top, left = _geodesic(mk1, vk), _geodesic(o, mk1)
    b, db = bottom(s)
    tp, dtp = top(s)
    lf, dlf = left(t)
    rt, drt = right(t)
    p = ((1 - t) * b + t * tp + (1 - s) * lf + s * rt
         - ((1 - s) * (1 - t) * o + s * (1 - t) * mk + (1 - s) * t * mk1 + s * t * vk))
    ps = (1 - t) * db + t * dtp - lf + rt - (-(1 - t) * o + (1 - t) * mk - t * mk1 + t * vk)
    pt = -b + tp + (1 - s) * dlf + s * drt - (-(1 - s) * o - s * mk + (1 - s) * mk1 + s * vk)
    jac = np.abs((np.conj(ps) * pt).imag)
    return p, jac


def _simpson(n: int) -> np.ndarray:
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * n)


@dataclass
class SMGrid:
    """Base nodes on the octagon times ``n_theta`` equispaced fiber angles.

    ``weights`` approximate the normalized area form at the nodes (Simpson
    on each kite); the Liouville weight of ``(node, theta_j)`` is
    ``weights[i] / n_theta``.
    """

    model: SurfaceModel
    resolution: int
    n_theta: int
    nodes: np.ndarray             # representative locations, complex
    weights: np.ndarray           # base weights, sum 1
    area: float
    point_z: np.ndarray           # stencil points: copies in the octagon plus ghosts
    point_node: np.ndarray
    point_phase: np.ndarray       # chart value of mode n at the point is g_n[node] e^{-i n phase}
    stencil_idx: np.ndarray       # (nodes, k) indices into the point arrays
    stencil_dx: np.ndarray
    stencil_dy: np.ndarray
    pairing_residual: float
    mesh: float                   # largest hyperbolic node spacing along kite lines
    _ops: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, model: SurfaceModel, resolution: int = 8, n_theta: int = 32, neighbors: int = 16,
              degree: int = 3) -> SMGrid:
        if resolution % 2:
            raise ValueError("resolution must be even (Simpson weights)")
        if n_theta < 4 or n_theta & (n_theta - 1):
            raise ValueError("n_theta must be a power of two >= 4")
        group = model.group
        u = np.linspace(0.0, 1.0, resolution + 1)
        s, t = np.meshgrid(u, u, indexing="ij")
        ws = _simpson(resolution)
        wq = np.outer(ws, ws)
        zs, wts, on_side = [], [], []
        mesh = 0.0
        for k in range(8):
            z, jac = _coons_kite(k, group, s, t)
            zs.append(z.ravel())
            wts.append((wq * jac * model.metric_factor(z)).ravel())
            on_side.append(((s == 1.0) | (t == 1.0)).ravel())
            mesh = max(mesh, float(np.max(hyperbolic_distance_pairs(z[1:, :], z[:-1, :]))),
                       float(np.max(hyperbolic_distance_pairs(z[:, 1:], z[:, :-1]))))
        copies = np.concatenate(zs)
        copy_w = np.concatenate(wts)
        side = np.concatenate(on_side)

        # merge coincident copies, then identify paired sides with their fiber rotation
        tree = cKDTree(np.c_[copies.real, copies.imag])
        links: list[list[tuple[int, float]]] = [[] for _ in copies]
        for i, j in tree.query_pairs(1e-10):
            links[i].append((j, 0.0))
            links[j].append((i, 0.0))
        pair_res = 0.0
        bidx = np.nonzero(side)[0]
        for g in group.generators:
            img = g(copies[bidx])
            dist, j = tree.query(np.c_[img.real, img.imag])
            hit = dist < 1e-8
            for src, dst, d in zip(bidx[hit], j[hit], dist[hit]):
                # value at dst = value at src rotated by arg g'(src)
                rot = float(np.angle(g.derivative(copies[src])))
                links[src].append((dst, rot))
                links[dst].append((src, -rot))
                back = g.inverse()(copies[dst])
                pair_res = max(pair_res, float(d), float(abs(back - copies[src])))
        rep = -np.ones(len(copies), dtype=int)
        phase = np.zeros(len(copies))
        nodes, node_w = [], []
        for start in range(len(copies)):
            if rep[start] >= 0:
                continue
            label = len(nodes)
            nodes.append(copies[start])
            node_w.append(0.0)
            rep[start] = label
            stack = [start]
            while stack:
                i = stack.pop()
                node_w[label] += copy_w[i]
                for j, rot in links[i]:
                    if rep[j] < 0:
                        rep[j] = label
                        phase[j] = phase[i] + rot
                        stack.append(j)
        nodes = np.array(nodes)
        node_w = np.array(node_w)
        area = float(node_w.sum())

        # ghosts: images of copies under tiles touching the octagon, kept near the boundary
        spacing, _ = tree.query(np.c_[copies.real, copies.imag], k=neighbors + 1)
        reach = spacing[:, -1]
        gz, gn, gp = [], [], []
        for el in group.tiles_within(2.0 * CIRCUMRADIUS + 0.05):
            if not el.word:
                continue
            img = el.map(copies)
            d, j = tree.query(np.c_[img.real, img.imag])
            keep = (d < 1.5 * reach[j]) & (d > 1e-9)
            if np.any(keep):
                gz.append(img[keep])
                gn.append(rep[keep])
                gp.append(phase[keep] + np.angle(el.map.derivative(copies[keep])))
        # stencil points: one copy per distinct location, plus ghosts
        first = np.ones(len(copies), dtype=bool)
        for i in range(len(copies)):
            for j, rot in links[i]:
                if rot == 0.0 and j < i:
                    first[i] = False
        pz = np.concatenate([copies[first]] + gz)
        pn = np.concatenate([rep[first]] + gn)
        pp = np.concatenate([phase[first]] + gp)
        pz, uniq = np.unique(np.round(pz, 11), return_index=True)
        pz, pn, pp = pz, pn[uniq], pp[uniq]
        ptree = cKDTree(np.c_[pz.real, pz.imag])
        _, idx = ptree.query(np.c_[nodes.real, nodes.imag], k=neighbors)
        cx, cy = _polynomial_stencils(nodes, pz[idx], degree)
        return cls(model, resolution, n_theta, nodes, node_w / area, area, pz, pn, pp, idx, cx, cy,
                   pair_res, mesh)

    def __repr__(self):
        return f"SMGrid({self.model.label or 'model'}, resolution={self.resolution}, nodes={self.size}, n_theta={self.n_theta})"

    # -- basic structure
    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.n_theta // 2, self.n_theta // 2)

    @property
    def thetas(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_theta) / self.n_theta

    def column(self, n: int) -> int:
        c = n + self.n_theta // 2
        if not 0 <= c < self.n_theta:
            raise BandOverflowError(f"mode {n} outside the band [{-self.n_theta // 2}, {self.n_theta // 2})")
        return c

    @cached_property
    def e_minus_phi(self) -> np.ndarray:
        return np.exp(-self.model.conformal(self.nodes))

    @cached_property
    def dz_phi(self) -> np.ndarray:
        px, py = self.model.conformal_gradient(self.nodes)
        return 0.5 * (px - 1j * py)

    @cached_property
    def conformal_grad(self) -> tuple[np.ndarray, np.ndarray]:
        return self.model.conformal_gradient(self.nodes)

    @cached_property
    def magnetic(self) -> np.ndarray:
        return np.asarray(self.model.magnetic_density(self.nodes), dtype=float) * np.ones(self.size)

    @cached_property
    def curvature(self) -> np.ndarray:
        return np.asarray(self.model.curvature(self.nodes), dtype=float) * np.ones(self.size)

    @property
    def A(self) -> float:
        """``min(-K/2)`` over the nodes and the surface quadrature points."""
        return float(min(np.min(-self.curvature), -self.model.curvature_bounds[1]) / 2.0)

    def derivative_matrices(self, n: int):
        """Chart derivatives ``(D_x, D_y)`` acting on mode-``n`` coefficients."""
        key = ("d", n)
        if key not in self._ops:
            rows = np.repeat(np.arange(self.size), self.stencil_idx.shape[1])
            pts = self.stencil_idx.ravel()
            rot = np.exp(-1j * n * self.point_phase[pts])
            cols = self.point_node[pts]
            shape = (self.size, self.size)
            dx = sparse.csr_matrix((self.stencil_dx.ravel() * rot, (rows, cols)), shape=shape)
            dy = sparse.csr_matrix((self.stencil_dy.ravel() * rot, (rows, cols)), shape=shape)
            self._ops[key] = (dx, dy)
        return self._ops[key]

    def eta_blocks(self, n: int):
        """Sparse maps ``g_n -> (eta+ g)_{n+1}`` and ``g_n -> (eta- g)_{n-1}``."""
        key = ("eta", n)
        if key not in self._ops:
            dx, dy = self.derivative_matrices(n)
            e = sparse.diags(self.e_minus_phi)
            dz = 0.5 * (dx - 1j * dy)
            dzb = 0.5 * (dx + 1j * dy)
            up = e @ (dz - sparse.diags(n * self.dz_phi))
            down = e @ (dzb + sparse.diags(n * np.conj(self.dz_phi)))
            self._ops[key] = (up.tocsr(), down.tocsr())
        return self._ops[key]

    # -- fields
    def zeros(self) -> FourierField:
        return FourierField(self, np.zeros((self.size, self.n_theta), dtype=complex))

    def field_from_modes(self, modes: dict) -> FourierField:
        f = self.zeros()
        for n, v in modes.items():
            f.coeffs[:, self.column(int(n))] = v
        return f

    def sample(self, fn) -> np.ndarray:
        """Samples ``fn(z, theta)`` on the node-by-angle grid."""
        return np.asarray(fn(self.nodes[:, None], self.thetas[None, :]), dtype=float)

    def pullback(self, values) -> FourierField:
        """A function on the base as an ``H_0`` field."""
        return self.field_from_modes({0: np.asarray(values, dtype=complex)})

    def integrate_base(self, values) -> float:
        return float(np.real(np.sum(self.weights * values)))

    def summary(self) -> dict:
        return {"resolution": self.resolution, "n_theta": self.n_theta, "nodes": self.size,
                "unknowns": self.size * self.n_theta, "mesh": self.mesh, "weight_sum": float(self.weights.sum()),
                "area": self.area, "pairing_residual": self.pairing_residual,
                "ghosts": int(len(self.point_z) - np.unique(self.point_node).size)}


def hyperbolic_distance_pairs(z, w):
    return 2.0 * np.arctanh(np.abs(z - w) / np.abs(1.0 - np.conj(w) * z))


def _polynomial_stencils(centers, neighbors, degree: int = 2):
    """First-derivative weights of the least-squares polynomial fit through each neighbor set."""
    d = neighbors - centers[:, None]
    scale = np.abs(d).max(axis=1, keepdims=True)
    x, y = (d / scale).real, (d / scale).imag
    vand = np.stack([x ** (k - j) * y ** j for k in range(degree + 1) for j in range(k + 1)], axis=-1)
    pinv = np.linalg.pinv(vand)
    return pinv[:, 1, :] / scale, pinv[:, 2, :] / scale


# ---------------------------------------------------------------------------
# fields

@dataclass
class FourierField:
    """Coefficients ``(node, mode)``; column ``c`` holds mode ``c - n_theta/2``."""

    grid: SMGrid
    coeffs: np.ndarray

    def __repr__(self):
        return f"FourierField({self.grid!r}, norm={self.norm():.3e})"

    def mode(self, n: int) -> np.ndarray:
        return self.coeffs[:, self.grid.column(n)]

    def copy(self) -> FourierField:
        return FourierField(self.grid, self.coeffs.copy())

    def __add__(self, other):
        return FourierField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return FourierField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, c):
        return FourierField(self.grid, self.coeffs * c)

    __rmul__ = __mul__

    def restrict(self, modes) -> FourierField:
        out = self.grid.zeros()
        for n in modes:
            c = self.grid.column(int(n))
            out.coeffs[:, c] = self.coeffs[:, c]
        return out

    def samples(self) -> np.ndarray:
        """Values on the fiber grid ``theta_j``."""
        n = self.grid.n_theta
        return n * np.fft.ifft(np.fft.ifftshift(self.coeffs, axes=1), axis=1)

    def mode_energies(self) -> np.ndarray:
        """``||f_n||^2`` for every mode, in band order."""
        return np.real(self.grid.weights @ np.abs(self.coeffs) ** 2)

    def norm(self) -> float:
        return float(np.sqrt(self.mode_energies().sum()))

    def inner(self, other: FourierField) -> complex:
        """Liouville ``L^2`` product, linear in the first slot."""
        return complex(np.sum(self.grid.weights[:, None] * self.coeffs * np.conj(other.coeffs)))

    def mean(self) -> complex:
        return complex(np.sum(self.grid.weights * self.mode(0)))

    def reality_defect(self) -> float:
        """``max |conj(f_n) - f_{-n}|`` over ``|n| < n_theta/2``."""
        h = self.grid.n_theta // 2
        worst = 0.0
        for n in range(1, h):
            worst = max(worst, float(np.max(np.abs(np.conj(self.mode(n)) - self.mode(-n)), initial=0.0)))
        return max(worst, float(np.max(np.abs(self.mode(0).imag), initial=0.0)))

    def support(self, tol: float) -> list[int]:
        e = np.sqrt(self.mode_energies())
        return [int(n) for n, v in zip(self.grid.modes, e) if v > tol]


def project_modes(grid: SMGrid, samples) -> FourierField:
    """Fiber DFT of samples ``(node, theta_j)``; warns when the Nyquist mode carries energy."""
    samples = np.asarray(samples)
    if samples.shape != (grid.size, grid.n_theta):
        raise ValueError(f"expected samples of shape {(grid.size, grid.n_theta)}, got {samples.shape}")
    c = np.fft.fftshift(np.fft.fft(samples, axis=1), axes=1) / grid.n_theta
    f = FourierField(grid, c)
    e = f.mode_energies()
    total = e.sum()
    if total > 0 and e[0] > ALIASING_THRESHOLD * total:
        warnings.warn(f"top fiber mode carries {e[0] / total:.2e} of the energy; fiber resolution too low",
                      AliasingWarning, stacklevel=2)
    return f


def apply_V(f: FourierField) -> FourierField:
    return FourierField(f.grid, f.coeffs * (1j * f.grid.modes)[None, :])


def _band_guard(f: FourierField, n: int, op: str):
    total = max(float(f.mode_energies().sum()), 1e-300)
    e = float(np.real(f.grid.weights @ np.abs(f.mode(n)) ** 2))
    if e > 1e-24 * total:
        raise BandOverflowError(f"{op} would shift mode {n} out of the band; raise n_theta")


def apply_eta_plus(f: FourierField) -> FourierField:
    g = f.grid
    h = g.n_theta // 2
    _band_guard(f, h - 1, "eta+")
    out = g.zeros()
    for n in range(-h, h - 1):
        v = f.mode(n)
        if np.any(v):
            out.coeffs[:, g.column(n + 1)] = g.eta_blocks(n)[0] @ v
    return out


def apply_eta_minus(f: FourierField) -> FourierField:
    g = f.grid
    h = g.n_theta // 2
    _band_guard(f, -h, "eta-")
    out = g.zeros()
    for n in range(-h + 1, h):
        v = f.mode(n)
        if np.any(v):
            out.coeffs[:, g.column(n - 1)] = g.eta_blocks(n)[1] @ v
    return out


def apply_X(f: FourierField) -> FourierField:
    return apply_eta_plus(f) + apply_eta_minus(f)


def apply_H(f: FourierField) -> FourierField:
    return 1j * (apply_eta_plus(f) - apply_eta_minus(f))


def apply_X_lambda(f: FourierField, lam: float) -> FourierField:
    """Per-mode formula ``eta+ g_{n-1} + eta- g_{n+1} + i n lam F g_n``."""
    out = apply_X(f)
    if lam != 0.0:
        out.coeffs += lam * f.grid.magnetic[:, None] * f.coeffs * (1j * f.grid.modes)[None, :]
    return out


def apply_X_lambda_direct(f: FourierField, lam: float) -> FourierField:
    """``X_lam`` assembled on the fiber grid from chart derivatives and ``lam F d/dtheta``."""
    g = f.grid
    dx, dy = g.zeros(), g.zeros()
    for n in g.modes:
        v = f.mode(int(n))
        if np.any(v):
            mx, my = g.derivative_matrices(int(n))
            dx.coeffs[:, g.column(int(n))] = mx @ v
            dy.coeffs[:, g.column(int(n))] = my @ v
    fx, fy, ft = dx.samples(), dy.samples(), apply_V(f).samples()
    c, s = np.cos(g.thetas)[None, :], np.sin(g.thetas)[None, :]
    px, py = g.conformal_grad
    e = g.e_minus_phi[:, None]
    val = e * (c * fx + s * fy + (py[:, None] * c - px[:, None] * s) * ft) + lam * g.magnetic[:, None] * ft
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasingWarning)
        return project_modes(g, val)


# ---------------------------------------------------------------------------
# analytic sections of the mode line bundles

_TILE_ARRAYS: dict = {}


def _tile_arrays(group, radius: float):
    key = (id(group), float(radius))
    if key not in _TILE_ARRAYS:
        tiles = group.tiles_within(radius)
        _TILE_ARRAYS[key] = (np.array([t.map.a for t in tiles], dtype=complex),
                             np.array([t.map.b for t in tiles], dtype=complex))
    return _TILE_ARRAYS[key]


SECTION_CUTOFF = 37.0  # exp(-37) < 1e-16


def _gaussian_bump(sigma, sigma_w):
    """``exp(-sigma / sigma_w)`` truncated below ``exp(-37)``, and its ``sigma`` derivative."""
    x = sigma / sigma_w
    val = np.where(x < SECTION_CUTOFF, np.exp(-np.minimum(x, SECTION_CUTOFF)), 0.0)
    return val, -val / sigma_w


@dataclass
class SectionTerm:
    center: complex
    width: float       # hyperbolic width: the bump is exp(-(cosh d - 1) / (cosh width - 1))
    coefficient: complex


class Section:
    """Smooth section of the mode-``n`` bundle: an orbit sum of bumps truncated below 1e-16.

    ``s(z) = sum_gamma sum_terms c b(d(z, gamma c0)) e^{i n arg (gamma^-1)'(z)}`` satisfies
    ``s(gamma z) = s(z) e^{-i n arg gamma'(z)}``, so ``s(z) e^{i n theta}`` is a function on ``SM``.
    The orbit sum is complete on the hyperbolic disk of radius ``cover`` about the origin.
    """

    def __init__(self, model: SurfaceModel, n: int, terms, cover: float = CIRCUMRADIUS):
        self.model = model
        self.n = int(n)
        self.terms = list(terms)
        self.cover = float(cover)
        centers, radii, coefs, inv_a, inv_b = [], [], [], [], []
        for term in self.terms:
            sigma_w = np.cosh(term.width) - 1.0
            support = float(np.arccosh(1.0 + SECTION_CUTOFF * sigma_w))
            reach = self.cover + support + hyperbolic_distance(term.center) + 0.1
            ta, tb = _tile_arrays(model.group, np.ceil(2.0 * reach) / 2.0)
            c = (ta * term.center + tb) / (np.conj(tb) * term.center + np.conj(ta))
            keep = hyperbolic_distance(c) <= self.cover + support + 0.1
            centers.append(c[keep])
            radii.append(np.full(keep.sum(), sigma_w))
            coefs.append(np.full(keep.sum(), term.coefficient, dtype=complex))
            inv_a.append(np.conj(ta[keep]))
            inv_b.append(-tb[keep])
        cat = lambda xs, dt: np.concatenate(xs) if xs else np.zeros(0, dtype=dt)
        self._c = cat(centers, complex)
        self._smax = cat(radii, float)
        self._coef = cat(coefs, complex)
        self._ia = cat(inv_a, complex)
        self._ib = cat(inv_b, complex)

    def evaluate(self, z):
        """Values, ``d_z`` and ``d_zbar`` at chart points ``z`` within ``cover`` of the origin."""
        z = np.asarray(z, dtype=complex)
        shape = z.shape
        z = z.ravel()
        if z.size and hyperbolic_distance(z).max() > self.cover + 0.1:
            raise ValueError(f"point beyond the section cover radius {self.cover:.3f}")
        pz = 1.0 - np.abs(z) ** 2
        pc = 1.0 - np.abs(self._c) ** 2
        dist2 = np.abs(z[:, None] - self._c[None, :]) ** 2
        sigma = 2.0 * dist2 / (pz[:, None] * pc[None, :])
        i, j = np.nonzero(sigma < SECTION_CUTOFF * self._smax[None, :])
        zi, dc = z[i], z[i] - self._c[j]
        b, db = _gaussian_bump(sigma[i, j], self._smax[j])
        ds = 2.0 / pc[j] * (np.conj(dc) / pz[i] + dist2[i, j] * np.conj(zi) / pz[i] ** 2)
        den = np.conj(self._ib[j]) * zi + np.conj(self._ia[j])
        unit = np.conj(den) / np.abs(den)
        core = self._coef[j] * unit ** (2 * self.n)   # (m'/|m'|)^n with m' = den^-2
        ll = -2.0 * np.conj(self._ib[j]) / den        # m''/m'
        val = np.zeros(len(z), dtype=complex)
        dz = np.zeros_like(val)
        dzb = np.zeros_like(val)
        np.add.at(val, i, core * b)
        np.add.at(dz, i, core * (db * ds + b * 0.5 * self.n * ll))
        np.add.at(dzb, i, core * (db * np.conj(ds) - b * 0.5 * self.n * np.conj(ll)))
        return val.reshape(shape), dz.reshape(shape), dzb.reshape(shape)


def random_section(model: SurfaceModel, n: int, rng: np.random.Generator, terms: int = 3,
                   width: tuple[float, float] = (0.7, 1.0), spread: float = 1.2,
                   cover: float = CIRCUMRADIUS) -> Section:
    out = []
    for _ in range(terms):
        r = np.tanh(rng.uniform(0.0, spread) / 2.0)
        c = r * np.exp(2j * np.pi * rng.uniform())
        coef = complex(rng.normal(), rng.normal())
        out.append(SectionTerm(complex(c), float(rng.uniform(*width)), coef))
    return Section(model, n, out, cover)


@dataclass
class AnalyticField:
    """A band-limited function on ``SM`` given by sections per mode (complex; use ``realify`` for real ones)."""

    model: SurfaceModel
    sections: dict  # n -> list[Section]

    def mode_data(self, n: int, z):
        val = np.zeros(np.shape(z), dtype=complex)
        dz = np.zeros_like(val)
        dzb = np.zeros_like(val)
        for s in self.sections.get(n, []):
            v, a, b = s.evaluate(z)
            val, dz, dzb = val + v, dz + a, dzb + b
        return val, dz, dzb

    @property
    def band(self) -> int:
        return max((abs(n) for n in self.sections), default=0)

    def on_grid(self, grid: SMGrid) -> FourierField:
        return grid.field_from_modes({n: self.mode_data(n, grid.nodes)[0] for n in self.sections})

    def x_lambda_exact(self, grid: SMGrid, lam: float) -> FourierField:
        """``X_lam`` applied analytically, sampled at the nodes."""
        out = grid.zeros()
        e, pz = grid.e_minus_phi, grid.dz_phi
        for n in self.sections:
            v, dz, dzb = self.mode_data(n, grid.nodes)
            up = e * (dz - n * v * pz)
            down = e * (dzb + n * v * np.conj(pz))
            out.coeffs[:, grid.column(n + 1)] += up
            out.coeffs[:, grid.column(n - 1)] += down
            if lam != 0.0:
                out.coeffs[:, grid.column(n)] += 1j * n * lam * grid.magnetic * v
        return out


def random_single_mode(model: SurfaceModel, n: int, rng: np.random.Generator, terms: int = 3) -> AnalyticField:
    return AnalyticField(model, {n: [random_section(model, n, rng, terms)]})


def random_band_field(model: SurfaceModel, band: int, rng: np.random.Generator, terms: int = 2,
                      real: bool = True) -> AnalyticField:
    """Random field with modes ``|n| <= band``; real fields pair mode ``n`` with the conjugate at ``-n``."""
    secs: dict = {}
    for n in range(0 if real else -band, band + 1):
        s = random_section(model, n, rng, terms)
        secs.setdefault(n, []).append(s)
        if real:
            conj = Section(model, -n, [SectionTerm(t.center, t.width, np.conj(t.coefficient)) for t in s.terms])
            if n == 0:
                secs[0].append(conj)
            else:
                secs.setdefault(-n, []).append(conj)
    return AnalyticField(model, secs)


def exact_one_form(model: SurfaceModel, potential: BumpField) -> Callable[[np.ndarray], dict]:
    """Mode data of ``dh`` restricted to ``SM``: ``(dh)_1 = e^{-Phi} d_z h``, ``(dh)_{-1}`` its conjugate."""
    def modes(z):
        hx, hy = potential.gradient(z)
        one = np.exp(-model.conformal(z)) * 0.5 * (hx - 1j * hy)
        return {1: one, -1: np.conj(one)}
    return modes


def default_potential(model: SurfaceModel) -> BumpField:
    """A fixed non-symmetric smooth function on the surface used by the exact-form experiments."""
    return BumpField(model.group, (Bump(0.35 + 0.1j, 0.9, 1.0), Bump(-0.2 - 0.4j, 0.7, -0.6)), 0.0)


# ---------------------------------------------------------------------------
# Proposition 4.1 checks

def adjointness_residual(f: FourierField, g: FourierField) -> complex:
    """``<eta+ f, g> + <f, eta- g>``; vanishes when ``-eta-`` is the transpose of ``eta+``."""
    return apply_eta_plus(f).inner(g) + f.inner(apply_eta_minus(g))


def mode_locality_residual(f: FourierField, n: int) -> float:
    """Energy of ``(X - iH)/2 f`` outside mode ``n+1``, relative to ``||f||^2``; ``f`` lives in ``H_n``."""
    x = apply_X_lambda_direct(f, 0.0)
    # H on the fiber grid: rotate the derivative direction by a quarter turn
    h = _apply_H_direct(f)
    up = (x - 1j * h) * 0.5
    e = up.mode_energies()
    e[f.grid.column(n + 1)] = 0.0
    return float(e.sum() / max(f.norm() ** 2, 1e-300))


def _apply_H_direct(f: FourierField) -> FourierField:
    g = f.grid
    dx, dy = g.zeros(), g.zeros()
    for n in g.modes:
        v = f.mode(int(n))
        if np.any(v):
            mx, my = g.derivative_matrices(int(n))
            dx.coeffs[:, g.column(int(n))] = mx @ v
            dy.coeffs[:, g.column(int(n))] = my @ v
    fx, fy, ft = dx.samples(), dy.samples(), apply_V(f).samples()
    c, s = np.cos(g.thetas)[None, :], np.sin(g.thetas)[None, :]
    px, py = g.conformal_grad
    e = g.e_minus_phi[:, None]
    val = e * (-s * fx + c * fy - (py[:, None] * s + px[:, None] * c) * ft)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasingWarning)
        return project_modes(g, val)


def energy_inequality_check(f: FourierField, n: int, A: float | None = None, normalize: bool = True) -> float:
    """Slack ``||eta+ f||^2 - A n ||f||^2 - ||eta- f||^2`` for ``f`` in ``H_n``, ``n >= 0``."""
    if n < 0:
        raise ValueError("the energy inequality is stated for n >= 0")
    if A is None:
        A = f.grid.A
    f = f.restrict([n])
    if normalize:
        nrm = f.norm()
        if nrm == 0:
            raise ValueError("zero field")
        f = f * (1.0 / nrm)
    up = apply_eta_plus(f).norm() ** 2
    down = apply_eta_minus(f).norm() ** 2
    return float(up - A * n * f.norm() ** 2 - down)


def mode_transport_residual(g: FourierField, lam: float) -> np.ndarray:
    """Per-mode ``||(X_lam g)_n^direct - (X_lam g)_n^formula||`` in band order."""
    a = apply_X_lambda_direct(g, lam)
    b = apply_X_lambda(g, lam)
    return np.sqrt((a - b).mode_energies())


# ---------------------------------------------------------------------------
# recurrence of the Fourier-support argument

@dataclass
class RecurrenceReport:
    N: int
    lam: float
    A: float
    a: dict
    b: dict
    r: dict
    slack: dict
    violations: list
    precheck: float
    tolerance: float

    def to_dict(self) -> dict:
        key = lambda d: {str(k): float(v) for k, v in d.items()}
        return {"N": self.N, "lam": self.lam, "A": self.A, "a": key(self.a), "b": key(self.b), "r": key(self.r),
                "slack": key(self.slack), "violations": list(self.violations), "precheck": self.precheck,
                "tolerance": self.tolerance}


def mode_equation_residuals(g: FourierField, lam: float, f: FourierField | None = None) -> np.ndarray:
    """``||eta+ g_{n-1} + eta- g_{n+1} + i n lam F g_n - f_n||`` per mode."""
    r = apply_X_lambda(g, lam)
    if f is not None:
        r = r - f
    return np.sqrt(r.mode_energies())


def recurrence_diagnostics(g: FourierField, N: int, lam: float, tolerance: float, A: float | None = None,
                           precheck_tolerance: float | None = None) -> RecurrenceReport:
    """Sequences ``a_n, b_n, r_n`` and the indices ``n > N+2`` where ``b_{n+1} - b_{n-1} - r_n < -tolerance``.

    Gated on ``F`` constant, ``A - lam^2 >= 0`` and the homogeneous mode
    equation holding for ``n > N`` (within ``precheck_tolerance``).
    """
    grid = g.grid
    if not grid.model.has_constant_magnetic:
        raise HypothesisViolation("recurrence diagnostics need F constant (mode equation without F)")
    if A is None:
        A = grid.A
    if A - lam ** 2 < 0:
        raise HypothesisViolation(f"A-lambda^2>=0 fails: A={A:.6g}, lambda={lam:.6g}")
    lam_eff = lam * float(grid.magnetic[0])
    h = grid.n_theta // 2
    res = mode_equation_residuals(g, lam_eff)
    tail = res[[grid.column(n) for n in range(N + 1, h)]]
    gnorm = max(g.norm(), 1e-300)
    precheck = float(tail.max() / gnorm) if tail.size else 0.0
    ptol = tolerance if precheck_tolerance is None else precheck_tolerance
    if precheck > ptol:
        raise HypothesisViolation(
            f"homogeneous mode equation eta+g_(n-1)+eta-g_(n+1)+in lambda g_n=0 (n>N) fails: "
            f"relative residual {precheck:.3e} > {ptol:.3e}")

    top = h - 2
    up = {}
    for n in range(-1, top + 1):
        blk = grid.eta_blocks(n)[0] @ g.mode(n)
        up[n] = float(np.real(grid.weights @ np.abs(blk) ** 2))
    norm2 = {n: float(np.real(grid.weights @ np.abs(g.mode(n)) ** 2)) for n in range(-h, h)}
    a = {n: up[n] + up[n - 1] for n in range(0, top + 1)}
    b = {n: a[n] + a[n - 1] for n in range(1, top + 1)}
    r, slack, viol = {}, {}, []
    lam2 = lam_eff ** 2
    for n in range(N + 3, top):
        r[n] = (-(n - 2) ** 2 * lam2 * norm2[n - 2] + (n - 1) * (A - 2 * lam2) * norm2[n - 1]
                + (2 * A * n + lam2 * n * n) * norm2[n] + A * (n + 1) * norm2[n + 1])
        slack[n] = b[n + 1] - b[n - 1] - r[n]
        if slack[n] < -tolerance:
            viol.append(n)
    return RecurrenceReport(N, lam, A, a, b, r, slack, viol, precheck, tolerance)


# ---------------------------------------------------------------------------
# suites with mesh-measured tolerances

def refinement_tolerance(coarse, fine) -> tuple[float, float]:
    """``tau = 2 |R_h - R_{h/2}|`` and the observed order ``log2(R_h / R_{h/2})``."""
    coarse, fine = float(coarse), float(fine)
    tau = 2.0 * abs(coarse - fine)
    order = float(np.log2(coarse / fine)) if coarse > 0 and fine > 0 else float("nan")
    return tau, order


def grid_pair(model: SurfaceModel, resolution: int = 8, n_theta: int = 32) -> tuple[SMGrid, SMGrid]:
    return SMGrid.build(model, resolution, n_theta), SMGrid.build(model, 2 * resolution, n_theta)


def adjointness_suite(grids, pairs: int = 20, band: int = 4, seed: int = 0) -> dict:
    """Relative adjointness residuals on random real band-limited pairs at both resolutions."""
    model = grids[0].model
    rng = np.random.default_rng(seed)
    res = np.zeros((pairs, len(grids)))
    for k in range(pairs):
        f = random_band_field(model, band, rng)
        g = random_band_field(model, band, rng)
        for j, grid in enumerate(grids):
            a, b = f.on_grid(grid), g.on_grid(grid)
            res[k, j] = abs(adjointness_residual(a, b)) / (a.norm() * b.norm())
    coarse, fine = res[:, 0].max(), res[:, 1].max()
    tau, order = refinement_tolerance(coarse, fine)
    return {"residuals": res.tolist(), "max_coarse": float(coarse), "max_fine": float(fine),
            "tau_grid": tau, "order": order, "pass": bool(coarse < tau and order >= 1.8)}


def mode_locality_suite(grid: SMGrid, tau_grid: float, fields: int = 20, n: int = 2, seed: int = 1) -> dict:
    rng = np.random.default_rng(seed)
    vals = [np.sqrt(mode_locality_residual(random_single_mode(grid.model, n, rng).on_grid(grid), n))
            for _ in range(fields)]
    worst = float(max(vals))
    return {"n": n, "max_off_target": worst, "tau_grid": tau_grid, "pass": bool(worst < tau_grid)}


def energy_inequality_suite(grids, modes=range(7), fields: int = 100, seed: int = 2, A: float | None = None) -> dict:
    """Slack of the energy inequality on random unit single-mode fields, with ``tau_ineq`` per mode."""
    model = grids[0].model
    if A is None:
        A = min(g.A for g in grids)
    rng = np.random.default_rng(seed)
    out = {"A": A, "modes": {}}
    ok = True
    for n in modes:
        s = np.zeros((fields, len(grids)))
        for k in range(fields):
            fld = random_single_mode(model, n, rng)
            for j, grid in enumerate(grids):
                s[k, j] = energy_inequality_check(fld.on_grid(grid), n, A)
        tau = 2.0 * float(np.abs(s[:, 0] - s[:, 1]).max())
        passed = bool(np.all(s[:, 0] >= -tau))
        ok &= passed
        out["modes"][str(n)] = {"min_slack": float(s[:, 0].min()), "min_slack_fine": float(s[:, 1].min()),
                                "tau_ineq": tau, "pass": passed}
    out["pass"] = bool(ok)
    return out


def mode_transport_suite(grid: SMGrid, tau_grid: float, lams=(0.0, 0.2), fields: int = 20, band: int = 4,
                         seed: int = 3) -> dict:
    rng = np.random.default_rng(seed)
    worst = {}
    for lam in lams:
        w = 0.0
        for _ in range(fields):
            g = random_band_field(grid.model, band, rng).on_grid(grid)
            w = max(w, float(mode_transport_residual(g, lam).max() / g.norm()))
        worst[str(lam)] = w
    return {"max_residual": worst, "tau_grid": tau_grid, "pass": bool(all(v < tau_grid for v in worst.values()))}
