"""Anosov splitting of the magnetic flow from its linearization.

Transverse vectors are taken modulo the flow direction ``X_lam``.  A
class ``a X + b H + c V`` is represented by ``(b, c - lam F a)``; the slope
of a line is ``u = (c - lam F a) / b``.  In constant curvature ``-1`` with
``F = 1`` the reduced equation is ``b' = c~``, ``c~' = (1 - lam^2) b`` and
the bundles have slopes ``+-sqrt(1 - lam^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flow import FlowParams, IntegrationError, SMPoint, transport_matrix

HORIZON_CAP = 120.0


class SlopeConvergenceError(RuntimeError):
    def __init__(self, message, iterates=()):
        super().__init__(message)
        self.iterates = tuple(iterates)


class HyperbolicityError(RuntimeError):
    """Fitted dichotomy rates fail rho < 1 < eta."""


def variational_transport(params: FlowParams, p: SMPoint, T: float, chunk: float = 10.0):
    """Derivative of ``phi_T`` in the (X, H, V) frame at ``p`` (3x3)."""
    if abs(T) > HORIZON_CAP:
        raise IntegrationError(f"|T| = {abs(T)} exceeds the horizon cap {HORIZON_CAP}")
    _, m, _ = _chunked_transport(params, p, T, chunk)
    return m


def _chunked_transport(params, p, T, chunk):
    # product of chunk derivatives; returns (end point, matrix, log scale) with matrix * exp(scale) the derivative
    n = max(1, int(np.ceil(abs(T) / chunk - 1e-12)))
    step = T / n
    total = np.eye(3)
    scale = 0.0
    q = p
    for _ in range(n):
        q, d = transport_matrix(params, q, step)
        total = d @ total
        mx = np.abs(total).max()
        total /= mx
        scale += np.log(mx)
    return q, total * np.exp(scale), scale


def reduce_frame_matrix(d: np.ndarray, lam: float, f_start: float, f_end: float) -> np.ndarray:
    """2x2 action on classes modulo ``X_lam`` in the ``(b, c - lam F a)`` coordinates."""
    embed = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    project = np.array([[0.0, 1.0, 0.0], [-lam * f_end, 0.0, 1.0]])
    return project @ d @ embed


def reduced_transport(params: FlowParams, p: SMPoint, T: float, chunk: float = 10.0):
    """End point, normalized reduced 2x2 matrix and its log scale."""
    n = max(1, int(np.ceil(abs(T) / chunk - 1e-12)))
    step = T / n
    total = np.eye(2)
    scale = 0.0
    q = p
    model = params.surface
    for _ in range(n):
        f0 = float(model.magnetic_density(q.base))
        q, d = transport_matrix(params, q, step)
        f1 = float(model.magnetic_density(q.base))
        total = reduce_frame_matrix(d, params.lam, f0, f1) @ total
        mx = np.abs(total).max()
        total /= mx
        scale += np.log(mx)
    return q, total, scale


def _contracted_direction(r: np.ndarray) -> np.ndarray:
    _, _, vt = np.linalg.svd(r)
    v = vt[-1]
    return v if v[0] >= 0 else -v


def _slope(v: np.ndarray) -> float:
    if abs(v[0]) < 1e-300:
        return float("inf")
    return float(v[1] / v[0])


def _slope_pair(params, p, horizon, forward: bool, tol: float):
    # The bundle at p is the direction most contracted by the flow toward
    # (E^s) or away from (E^u) p; two horizons give a convergence check.
    sign = 1.0 if forward else -1.0
    q, r1, s1 = reduced_transport(params, p, sign * horizon)
    _, r2, s2 = reduced_transport(params, q, sign * horizon)
    v1 = _contracted_direction(r1)
    v2 = _contracted_direction(r2 @ r1)
    u1, u2 = _slope(v1), _slope(v2)
    if not np.isfinite(u2) or abs(u2 - u1) > tol:
        kind = "stable" if forward else "unstable"
        raise SlopeConvergenceError(f"{kind} slope not converged at horizon {horizon}: {u1} vs {u2}", (u1, u2))
    return u2, v2, (r1, s1), (r2 @ r1, s1 + s2)


def unstable_slope(params: FlowParams, p: SMPoint, horizon: float = 30.0, tol: float = 1e-6) -> float:
    return _slope_pair(params, p, horizon, False, tol)[0]


def stable_slope(params: FlowParams, p: SMPoint, horizon: float = 30.0, tol: float = 1e-6) -> float:
    return _slope_pair(params, p, horizon, True, tol)[0]


@dataclass
class SplittingSample:
    p: SMPoint
    u_s: float
    u_u: float
    growth_rate: float
    horizon: float

    def __post_init__(self):
        if not (np.isfinite(self.u_s) and np.isfinite(self.u_u)):
            raise ValueError("slopes must be finite")

    @property
    def gap(self) -> float:
        return self.u_u - self.u_s

    def to_dict(self) -> dict:
        return {"x": self.p.base.real, "y": self.p.base.imag, "theta": self.p.theta, "u_s": self.u_s,
                "u_u": self.u_u, "gap": self.gap, "growth_rate": self.growth_rate, "horizon": self.horizon}


def splitting_at(params: FlowParams, p: SMPoint, horizon: float = 30.0, tol: float = 1e-6) -> SplittingSample:
    """Both slopes plus the empirical expansion rate of E^u over one horizon."""
    u_s = _slope_pair(params, p, horizon, True, tol)[0]
    u_u = _slope_pair(params, p, horizon, False, tol)[0]
    rate = expansion_rate(params, p, u_u, horizon)
    if not u_u > u_s:
        raise ValueError(f"bundles not transverse at {p}: u_u={u_u}, u_s={u_s}")
    return SplittingSample(p, u_s, u_u, rate, horizon)


def expansion_rate(params: FlowParams, p: SMPoint, u_u: float, horizon: float) -> float:
    """``log`` growth per unit time of ``(1, u_u)`` between horizons ``T`` and ``2T``.

    Differencing two horizons cancels the bounded prefactor of the growth.
    """
    v = np.array([1.0, u_u])
    q, r1, s1 = reduced_transport(params, p, horizon)
    w1 = r1 @ v
    _, r2, s2 = reduced_transport(params, q, horizon)
    w2 = r2 @ w1
    return float((np.log(np.linalg.norm(w2)) + s2 - np.log(np.linalg.norm(w1))) / horizon)


def transported_slope(params: FlowParams, p: SMPoint, u: float, t: float) -> tuple[SMPoint, float]:
    """Push the line of slope ``u`` at ``p`` for time ``t``; return the end point and the new slope."""
    q, r, _ = reduced_transport(params, p, t)
    w = r @ np.array([1.0, u])
    return q, _slope(w)


def growth_rate_of_generic_vector(params: FlowParams, p: SMPoint, T: float, vector=(1.0, 0.3)) -> float:
    """Log-growth per unit time of a transverse vector under the linearization."""
    _, r, s = reduced_transport(params, p, T)
    w = r @ np.asarray(vector, dtype=float)
    return float((np.log(np.linalg.norm(w) / np.linalg.norm(vector)) + s) / T)


# ---------------------------------------------------------------------------
# dichotomy constants

@dataclass
class DichotomyReport:
    C: float
    eta: float
    rho: float
    times: list = field(default_factory=list)
    samples: int = 0

    @property
    def margin(self) -> float:
        return float(min(self.eta - 1.0, 1.0 - self.rho))

    def to_dict(self) -> dict:
        return {"C": self.C, "eta": self.eta, "rho": self.rho, "margin": self.margin,
                "times": list(self.times), "samples": self.samples}


def dichotomy_fit(params: FlowParams, points, times=(1.0, 2.0, 3.0, 4.0, 5.0, 6.0),
                  horizon: float = 30.0) -> DichotomyReport:
    """Fit ``|dphi_t E^s| <= C rho^t`` and ``|dphi_-t E^u| <= C eta^-t`` over an ensemble.

    Norms are taken in the reduced ``(b, c~)`` coordinates; rates come from
    least squares on log-norms and ``C`` is the smallest constant making
    both fitted bounds hold on every sample.
    """
    times = np.asarray(sorted(times), dtype=float)
    ts, log_s, log_u = [], [], []
    for p in points:
        _, v_s, _, _ = _slope_pair(params, p, horizon, True, 1e-6)
        _, v_u, _, _ = _slope_pair(params, p, horizon, False, 1e-6)
        for sign, v, store in ((1.0, v_s, log_s), (-1.0, v_u, log_u)):
            q, acc, prev, cum = p, v / np.linalg.norm(v), 0.0, 0.0
            for t in times:
                q, r, s = reduced_transport(params, q, sign * (t - prev))
                acc = r @ acc
                nrm = np.linalg.norm(acc)
                cum += np.log(nrm) + s
                store.append(cum)
                acc = acc / nrm
                prev = t
        ts.extend(times)
    ts = np.asarray(ts)
    log_s, log_u = np.asarray(log_s), np.asarray(log_u)
    design = np.c_[np.ones_like(ts), ts]
    (cs, slope_s), *_ = np.linalg.lstsq(design, log_s, rcond=None)
    (cu, slope_u), *_ = np.linalg.lstsq(design, log_u, rcond=None)
    rho, eta = float(np.exp(slope_s)), float(np.exp(-slope_u))
    c = float(max(np.exp(log_s - ts * slope_s).max(), np.exp(log_u - ts * slope_u).max()))
    report = DichotomyReport(C=c, eta=eta, rho=rho, times=list(times), samples=len(points))
    if not (rho < 1.0 < eta):
        raise HyperbolicityError(f"fitted rates violate rho < 1 < eta: rho={rho}, eta={eta}")
    return report


# ---------------------------------------------------------------------------
# strong bundles as frame vectors

def _chunk_matrices(params: FlowParams, p: SMPoint, T: float, chunk: float):
    n = max(1, int(np.ceil(abs(T) / chunk - 1e-12)))
    step = T / n
    mats, q = [], p
    for _ in range(n):
        q, d = transport_matrix(params, q, step)
        mats.append(d)
    return mats


def _inverse_iteration(mats, start):
    # direction at the base point most contracted by mats[-1] ... mats[0]
    w = np.asarray(start, dtype=float)
    history = []
    for d in reversed(mats):
        w = np.linalg.solve(d, w)
        w /= np.linalg.norm(w)
        history.append(w.copy())
    return w, history


@dataclass
class StrongBundles:
    """Frame coefficients ``(a, b, c)`` of E^u and E^s at ``p``.

    Scaled so their reduced coordinates are ``(1, u) / sqrt(u_u - u_s)``,
    which makes ``det[e_u, e_s] = -1`` in the ``(b, c~)`` plane.
    """

    p: SMPoint
    e_u: np.ndarray
    e_s: np.ndarray
    u_u: float
    u_s: float
    convergence: float

    @property
    def gap(self) -> float:
        return self.u_u - self.u_s


def strong_bundles(params: FlowParams, p: SMPoint, horizon: float = 30.0, chunk: float = 1.0,
                   tol: float = 1e-7) -> StrongBundles:
    """E^u and E^s by inverse iteration over well-conditioned chunk derivatives."""
    f = float(params.surface.magnetic_density(p.base))
    lam = params.lam
    out = {}
    worst = 0.0
    start = np.array([0.3, 1.0, 0.7])
    for kind, sign in (("u", -1.0), ("s", 1.0)):
        mats = _chunk_matrices(params, p, sign * horizon, chunk)
        w, _ = _inverse_iteration(mats, start)
        half = _inverse_iteration(mats[: len(mats) // 2], start)[0]
        three = _inverse_iteration(mats[: (3 * len(mats)) // 4], start)[0]
        e1 = min(np.linalg.norm(w - half), np.linalg.norm(w + half))
        e2 = min(np.linalg.norm(w - three), np.linalg.norm(w + three))
        # geometric convergence: the error at the full horizon is about e2^2 / e1
        diff = e2 * e2 / e1 if e1 > 1e-300 else e2
        worst = max(worst, diff)
        if diff > tol:
            raise SlopeConvergenceError(f"E^{kind} not converged at horizon {horizon}: change {diff:.2e}",
                                        (half, w))
        if w[1] < 0:
            w = -w
        out[kind] = w
    slopes = {k: (v[2] - lam * f * v[0]) / v[1] for k, v in out.items()}
    gap = slopes["u"] - slopes["s"]
    if not gap > 0:
        raise ValueError(f"bundles not transverse at {p}")
    scale = 1.0 / np.sqrt(gap)
    e_u = out["u"] / out["u"][1] * scale
    e_s = out["s"] / out["s"][1] * scale
    return StrongBundles(p, e_u, e_s, float(slopes["u"]), float(slopes["s"]), float(worst))
