"""Return times between transversals, the longitudinal KAM-cocycle and regularity scans.

The transversal at ``p`` is ``Sigma_p(u, s)``: the time-1 flow of the
constant-coefficient frame field ``u e_u + s e_s`` started at ``p``, with
``e_u, e_s`` the strong bundle vectors of ``splitting.strong_bundles``.
It is tangent to ``E^u + E^s`` and its axes span unit transverse area, so
the holonomy between transversals along an orbit has linear part
``diag(a, 1/a)``; this is what makes ``K`` additive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flow import (
    FlowParams, SMPoint, TWO_PI, _advance, _reduce_state, _steps, angle_difference, apply_mobius,
    coframe_matrix, flow_along_frame, flow_lifted, frame_matrix, vector_field,
)
from .geometry import free_reduce
from .splitting import StrongBundles, strong_bundles


class ChartMismatchError(RuntimeError):
    """No intersection of an orbit with a transversal within the time cap."""


class UnreliableSampleError(RuntimeError):
    def __init__(self, message, values=()):
        super().__init__(message)
        self.values = tuple(values)


@dataclass
class AdaptedChart:
    p: SMPoint
    state: np.ndarray
    bundles: StrongBundles
    eps: float
    u_curve: np.ndarray
    s_curve: np.ndarray
    params: FlowParams
    steps: int = 6

    @property
    def e_u(self) -> np.ndarray:
        return self.bundles.e_u

    @property
    def e_s(self) -> np.ndarray:
        return self.bundles.e_s

    def point(self, u: float, s: float) -> np.ndarray:
        """``Sigma_p(u, s)`` in the chart of ``p``."""
        coeffs = u * self.e_u + s * self.e_s
        return flow_along_frame(self.params.surface, self.state, coeffs, 1.0, self.steps)

    def tangency_error(self) -> float:
        """Angle between the chart curves' initial secants and ``E^u``, ``E^s`` (radians)."""
        cof = coframe_matrix(self.params.surface, self.state)
        errs = []
        for curve, e in ((self.u_curve, self.e_u), (self.s_curve, self.e_s)):
            mid = len(curve) // 2
            sec = cof @ np.r_[curve[mid + 1][:2] - curve[mid - 1][:2],
                              angle_difference(curve[mid + 1][2], curve[mid - 1][2])]
            c = abs(sec @ e) / (np.linalg.norm(sec) * np.linalg.norm(e))
            errs.append(float(np.arccos(min(1.0, c))))
        return max(errs)


def build_adapted_chart(params: FlowParams, p: SMPoint, eps: float = 1e-2, horizon: float = 30.0,
                        samples: int = 9, bundles: StrongBundles | None = None) -> AdaptedChart:
    """Transversal chart at ``p`` with sampled curves along ``E^u`` and ``E^s``."""
    if not 0 < eps <= 0.05:
        raise ValueError("eps must lie in (0, 0.05]; shrink the chart")
    state, _, _ = _reduce_state(params, p.as_state())
    p = SMPoint.from_state(state)
    if bundles is None:
        bundles = strong_bundles(params, p, horizon)
    chart = AdaptedChart(p, state, bundles, eps, np.empty((0, 3)), np.empty((0, 3)), params)
    sig = np.linspace(-eps, eps, samples)
    chart.u_curve = np.array([chart.point(t, 0.0) for t in sig])
    chart.s_curve = np.array([chart.point(0.0, t) for t in sig])
    if np.abs(chart.u_curve[:, :2]).max() >= 0.999 or np.abs(chart.s_curve[:, :2]).max() >= 0.999:
        raise ValueError("chart leaves the disk chart; shrink eps")
    return chart


# ---------------------------------------------------------------------------
# return times

@dataclass
class ReturnMap:
    """Precomputed data for ``f_T`` between the charts at ``p`` and ``q = phi_T p``."""

    params: FlowParams
    chart_p: AdaptedChart
    chart_q: AdaptedChart
    T: float
    word: tuple  # element(word)(q chart) = chart of p, lifted
    dt: float
    time_cap: float = 0.1
    noise: float = 0.0

    def _to_p_chart(self, x):
        h = _steps(-self.T, self.dt)[1]
        n = _steps(-self.T, self.dt)[0]
        y, _, words = _advance(self.params, np.asarray(x, dtype=float), h, n)
        w = free_reduce(tuple(self.word) + tuple(words))
        if w:
            y = apply_mobius(self.params.surface.group.element(w), y)
        return y

    def __call__(self, u: float, s: float) -> float:
        """Signed time from ``Sigma_q(u, s)`` to ``phi_T(Delta_p)``."""
        x = self._to_p_chart(self.chart_q.point(u, s))
        cp = self.chart_p
        jac = np.column_stack([
            frame_matrix(self.params.surface, cp.state) @ cp.e_u,
            frame_matrix(self.params.surface, cp.state) @ cp.e_s,
            -vector_field(self.params, cp.state),
        ])
        c = np.zeros(3)
        polish = 0
        for _ in range(60):
            target = flow_lifted(self.params, x, c[2], dt=max(abs(c[2]), 1e-300)) if c[2] != 0 else x
            g = cp.point(c[0], c[1]) - target
            g[2] = angle_difference(g[2], 0.0)
            step = np.linalg.solve(jac, g)
            c -= step
            # chord iterations converge linearly; polish twice once at the noise level
            if np.abs(step).max() < 1e-13:
                polish += 1
                if polish > 2:
                    break
        else:
            raise ChartMismatchError("return-time Newton iteration did not converge")
        if abs(c[2]) > self.time_cap:
            raise ChartMismatchError(f"return time {c[2]} exceeds the cap {self.time_cap}")
        return float(c[2])


def return_map(params: FlowParams, chart_p: AdaptedChart, T: float, chart_q: AdaptedChart | None = None,
               horizon: float = 30.0) -> ReturnMap:
    n, h = _steps(T, params.dt)
    y, _, words = _advance(params, chart_p.state.copy(), h, n)
    if chart_q is None:
        chart_q = build_adapted_chart(params, SMPoint.from_state(y), chart_p.eps, horizon)
    rm = ReturnMap(params, chart_p, chart_q, T, tuple(words), params.dt)
    rm.noise = abs(rm(0.0, 0.0))
    return rm


def return_time(params: FlowParams, chart_p: AdaptedChart, chart_q: AdaptedChart, T: float,
                u: float, s: float) -> float:
    """``f_T(u, s)``; ``chart_q`` must sit at ``phi_T(p)``."""
    return return_map(params, chart_p, T, chart_q)(u, s)


# ---------------------------------------------------------------------------
# the cocycle

@dataclass
class CocycleSample:
    p: SMPoint
    T: float
    h: float
    value: float
    error: float
    coarse: float = 0.0
    fine: float = 0.0
    noise_floor: float = 0.0

    @property
    def significant(self) -> bool:
        """``|K| > 10 x error``."""
        return abs(self.value) > 10.0 * self.error

    def to_dict(self) -> dict:
        return {"x": self.p.base.real, "y": self.p.base.imag, "theta": self.p.theta, "T": self.T, "h": self.h,
                "value": self.value, "error": self.error, "coarse": self.coarse, "fine": self.fine,
                "noise_floor": self.noise_floor}


def _mixed(f, h):
    return (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h)


def cocycle_from_map(rm: ReturnMap, h: float) -> CocycleSample:
    coarse = _mixed(rm, h)
    fine = _mixed(rm, h / 2.0)
    value = (4.0 * fine - coarse) / 3.0
    floor = 2.0 * max(rm.noise, 1e-15) / (h / 2.0) ** 2
    err = abs(fine - coarse) + floor
    return CocycleSample(rm.chart_p.p, rm.T, h, float(value), float(err), float(coarse), float(fine), float(floor))


def kam_cocycle(params: FlowParams, p: SMPoint, T: float, h: float = 2e-3, eps: float = 1e-2,
                horizon: float = 30.0, chart_p: AdaptedChart | None = None,
                chart_q: AdaptedChart | None = None, strict: bool = False) -> CocycleSample:
    """``K(p, T)`` by a centered mixed difference of ``f_T`` with a Richardson error estimate."""
    if not 0 < h <= eps:
        raise ValueError("h must lie inside the chart radius")
    if chart_p is None:
        chart_p = build_adapted_chart(params, p, eps, horizon)
    rm = return_map(params, chart_p, T, chart_q, horizon)
    sample = cocycle_from_map(rm, h)
    if strict and sample.noise_floor > abs(sample.fine - sample.coarse) and sample.noise_floor > abs(sample.value):
        raise UnreliableSampleError("noise floor exceeds the signal", (sample.coarse, sample.fine))
    return sample


def additivity_residual(params: FlowParams, p: SMPoint, T: float, S: float, h: float = 2e-3,
                        eps: float = 1e-2, horizon: float = 30.0) -> dict:
    """``K(p, T+S) - K(phi_T p, S) - K(p, T)`` with the combined error budget."""
    chart_p = build_adapted_chart(params, p, eps, horizon)
    rm_t = return_map(params, chart_p, T, None, horizon)
    chart_mid = rm_t.chart_q
    rm_s = return_map(params, chart_mid, S, None, horizon)
    rm_ts = return_map(params, chart_p, T + S, None, horizon)
    k_t, k_s, k_ts = (cocycle_from_map(r, h) for r in (rm_t, rm_s, rm_ts))
    return {
        "residual": k_ts.value - k_s.value - k_t.value,
        "budget": k_ts.error + k_s.error + k_t.error,
        "K_T": k_t.value, "K_S": k_s.value, "K_TS": k_ts.value,
    }


@dataclass
class ObstructionReport:
    period: float
    pieces: int
    h: float
    value: float
    error: float
    direct: float | None = None
    direct_error: float | None = None
    samples: list = field(default_factory=list)

    @property
    def significant(self) -> bool:
        return abs(self.value) > 10.0 * self.error

    def to_dict(self) -> dict:
        return {"period": self.period, "pieces": self.pieces, "h": self.h, "value": self.value,
                "error": self.error, "direct": self.direct, "direct_error": self.direct_error,
                "significant": self.significant, "samples": [s.to_dict() for s in self.samples]}


def periodic_obstruction(params: FlowParams, seed: SMPoint, period: float, h: float = 2e-3,
                         pieces: int = 10, eps: float = 1e-2, horizon: float = 30.0,
                         closing_tol: float = 1e-6, direct: bool = False) -> ObstructionReport:
    """Sum of ``K(p_i, P / pieces)`` around a closed orbit; zero when ``K`` is a coboundary."""
    end = _closing_gap(params, seed, period)
    if end > closing_tol:
        raise ValueError(f"orbit does not close: gap {end:.2e} > {closing_tol:.0e}")
    dtau = period / pieces
    chart = build_adapted_chart(params, seed, eps, horizon)
    first = chart
    samples = []
    for i in range(pieces):
        rm = return_map(params, chart, dtau, None, horizon)
        samples.append(cocycle_from_map(rm, h))
        chart = rm.chart_q
    total = float(sum(s.value for s in samples))
    err = float(sum(s.error for s in samples))
    rep = ObstructionReport(period, pieces, h, total, err, samples=samples)
    if direct:
        d = cocycle_from_map(return_map(params, first, period, None, horizon), h)
        rep.direct, rep.direct_error = d.value, d.error
    return rep


def _closing_gap(params: FlowParams, seed: SMPoint, period: float) -> float:
    s0, _, _ = _reduce_state(params, seed.as_state())
    n, h = _steps(period, params.dt)
    y, _, _ = _advance(params, s0.copy(), h, n)
    z0, z1 = complex(s0[0], s0[1]), complex(y[0], y[1])
    if abs(z1 - z0) > 1e-3:
        # the end point can land on a paired side; compare after reducing both
        y, _, _ = _reduce_state(params, y)
    return float(max(abs(y[0] - s0[0]), abs(y[1] - s0[1]), abs(angle_difference(y[2], s0[2]))))


# ---------------------------------------------------------------------------
# contact form

def contact_check(params: FlowParams, orbit, theta=None) -> dict:
    """Evaluate ``(-alpha - lam c psi + lam pi^* theta)(X_lam)`` along orbit samples.

    ``alpha`` and ``psi`` are applied to the chart vector field numerically.
    ``theta`` is an optional callable ``(z, angle) -> theta_x(v)`` giving
    the 1-form in ``Omega = c K Omega_a + d theta``; it vanishes when
    ``K`` and ``F`` are constant.
    """
    model = params.surface
    lam = params.lam
    c = model.cohomology_constant
    st = orbit.states
    cof = coframe_matrix(model, st)
    xl = vector_field(params, st)
    alpha = np.einsum("ij,ij->i", cof[:, 0, :], xl)
    psi = np.einsum("ij,ij->i", cof[:, 2, :], xl)
    vals = -alpha - lam * c * psi
    z = st[:, 0] + 1j * st[:, 1]
    if theta is not None:
        vals = vals + lam * np.asarray(theta(z, st[:, 2]))
    f = model.magnetic_density(z)
    expected = -1.0 - lam ** 2 * f * c
    constant_case = model.has_constant_curvature and model.has_constant_magnetic
    return {
        "values": vals,
        "expected": expected,
        "deviation": float(np.abs(vals - expected).max()),
        "fluctuation": float(vals.max() - vals.min()),
        "constant": float(expected.mean()) if constant_case else None,
        "c": c,
        "theta_included": theta is not None or constant_case,
    }


# ---------------------------------------------------------------------------
# regularity

@dataclass
class RegularityReport:
    scales: np.ndarray
    first: np.ndarray   # sup |f(x+t) - f(x)| / t
    second: np.ndarray  # sup |f(x+t) + f(x-t) - 2 f(x)| / t
    classification: str
    kink: float | None = None

    def __post_init__(self):
        if np.any(np.diff(self.scales) >= 0):
            raise ValueError("scales must be strictly decreasing")

    def to_rows(self):
        return [(float(t), float(a), float(b)) for t, a, b in zip(self.scales, self.first, self.second)]


def zygmund_lipschitz_scan(x, f, t_min: float = 2.0 ** -12, t_max: float = 2.0 ** -4) -> RegularityReport:
    """Difference-quotient tables over dyadic scales and a regularity verdict.

    Verdicts: ``smooth`` (second quotient decays), ``lipschitz`` (both bounded,
    with the location of the largest second difference reported as a kink),
    ``zygmund`` (second bounded, first growing), ``not-zygmund``.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    if len(x) < 64:
        raise ValueError("need at least 64 samples")
    dx = np.diff(x)
    if not np.allclose(dx, dx[0], rtol=1e-9, atol=0.0):
        raise ValueError("samples must be equally spaced")
    dx = float(dx[0])
    ks = []
    t = t_max
    while t >= t_min * (1 - 1e-12):
        k = int(round(t / dx))
        if k >= 1 and 2 * k < len(x) and (not ks or k < ks[-1]):
            ks.append(k)
        t /= 2.0
    if len(ks) < 3:
        raise ValueError("sampling too coarse for the requested scales")
    ks = np.array(ks)
    scales = ks * dx
    first, second, where = [], [], []
    for k, t in zip(ks, scales):
        d1 = np.abs(f[k:] - f[:-k]) / t
        d2 = np.abs(f[2 * k:] + f[:-2 * k] - 2.0 * f[k:-k]) / t
        first.append(d1.max())
        second.append(d2.max())
        where.append(x[k + int(np.argmax(d2))])
    first, second = np.array(first), np.array(second)
    r1 = first[-1] / max(first[0], 1e-300)
    r2 = second[-1] / max(second[0], 1e-300)
    growth = scales[0] / scales[-1]
    kink = None
    if second[-1] < 1e-12 or r2 < 0.1:
        verdict = "smooth"
    elif r2 > 4.0 and second[-1] > 1e-8:
        verdict = "not-zygmund"
    elif r1 > 1.5 and r1 > np.log2(growth) / 4.0:
        verdict = "zygmund"
    else:
        verdict = "lipschitz"
        kink = float(where[-1])
    return RegularityReport(scales, first, second, verdict, kink)


def splitting_sum_along_transversal(params: FlowParams, p: SMPoint, width: float = 0.05, samples: int = 65,
                                    direction=(0.0, 1.0, 0.0), horizon: float = 30.0):
    """``u_u + u_s`` sampled along a frame-geodesic transversal through ``p``."""
    from .splitting import stable_slope, unstable_slope

    xs = np.linspace(-width / 2.0, width / 2.0, samples)
    out = []
    st = p.as_state()
    for t in xs:
        q = SMPoint.from_state(flow_along_frame(params.surface, st, np.asarray(direction) * t, 1.0, 4))
        out.append(unstable_slope(params, q, horizon) + stable_slope(params, q, horizon))
    return xs, np.array(out)
