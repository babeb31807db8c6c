"""Critical case lam = 2/(1-m): the sphere flow, separable solutions and the phase plane.

The sphere flow is alpha_t = LB(alpha^m) + A alpha^m.  Separable solutions
alpha = tau(t) beta^{1/m} reduce it to LB(beta) + A beta = C beta^{1/m}, which on
the circle is the conservative oscillator beta'' = -beta (A - C beta^{1/m - 1}).
"""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .angular import AngularGeometry, AngularProfile
from .regimes import critical_coefficient_A

log = logging.getLogger(__name__)

__all__ = [
    "SphereState",
    "CriticalTrajectory",
    "CriticalFlowError",
    "evolve_critical",
    "SeparableSolution",
    "separable_solution",
    "fixed_point",
    "hamiltonian_energy",
    "Orbit",
    "OrbitProfile",
    "trace_orbit",
    "linear_period",
    "period_curve",
    "shoot_period",
    "orbit_sweep",
]


# ---------------------------------------------------------------------------
# sphere flow


class CriticalFlowError(RuntimeError):
    """Positivity was lost; carries the last state and a blow-down time estimate."""

    def __init__(self, msg: str, t: float, blowdown_estimate: float, last: "SphereState | None" = None):
        super().__init__(msg)
        self.t = t
        self.blowdown_estimate = blowdown_estimate
        self.last = last


@dataclass(frozen=True)
class SphereState:
    profile: AngularProfile
    t: float
    A: float

    def __post_init__(self) -> None:
        if not self.profile.is_positive:
            raise ValueError("sphere state must stay positive")


@dataclass
class CriticalTrajectory:
    states: list
    n: int
    m: float
    A: float
    nfev: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def values(self) -> np.ndarray:
        return np.array([s.profile.values for s in self.states])

    def to_csv(self, path) -> None:
        th = self.states[0].profile.theta
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"theta={x:.10g}" for x in th])
            for s in self.states:
                w.writerow([repr(float(s.t))] + [repr(float(v)) for v in s.profile.values])


def evolve_critical(
    alpha0: AngularProfile,
    n: int,
    m: float,
    T: float,
    dt: float,
    rtol: float = 1e-11,
    atol: float = 1e-13,
    floor: float = 1e-8,
) -> CriticalTrajectory:
    """Integrate alpha_t = LB(alpha^m) + A alpha^m with spectral LB, output every ``dt``.

    The semi-discrete system is stiff, so an implicit fifth-order Radau
    integrator with the exact Jacobian (LB + A) diag(m alpha^{m-1}) is used,
    with its own error-controlled step size.  If min alpha falls to ``floor``
    times its initial minimum the run stops with CriticalFlowError.
    """
    geom = alpha0.geometry
    if geom.n != n:
        raise ValueError("profile dimension differs from n")
    if not alpha0.is_positive:
        raise ValueError("initial profile must be positive")
    if T < 0 or dt <= 0:
        raise ValueError("need T >= 0 and dt > 0")
    A = critical_coefficient_A(n, m)
    states = [SphereState(alpha0, 0.0, A)]
    if T == 0:
        return CriticalTrajectory(states, n, m, A)
    M = geom.lb_matrix + A * np.eye(geom.node_count)
    lo = floor * float(alpha0.values.min())

    def rhs(t, a):
        return M @ np.power(np.maximum(a, lo), m)

    def jac(t, a):
        return M * (m * np.power(np.maximum(a, lo), m - 1.0))[None, :]

    def positivity(t, a):
        return float(a.min()) - lo

    positivity.terminal = True
    positivity.direction = -1

    k = max(1, int(round(T / dt)))
    t_out = np.linspace(0.0, T, k + 1)
    sol = solve_ivp(rhs, (0.0, T), alpha0.values, method="Radau", t_eval=t_out, jac=jac,
                    rtol=rtol, atol=atol, events=positivity)
    for t, a in zip(sol.t[1:], sol.y.T[1:]):
        states.append(SphereState(alpha0.with_values(a), float(t), A))
    if sol.status == 1 or not sol.success:
        t_stop = float(sol.t_events[0][0]) if sol.status == 1 else float(sol.t[-1])
        est = _blowdown_estimate(states, m)
        raise CriticalFlowError(
            f"positivity lost near t={t_stop:.6g}; estimated vanishing time {est:.6g}",
            t_stop, est, states[-1],
        )
    return CriticalTrajectory(states, n, m, A, nfev=int(sol.nfev))


def _blowdown_estimate(states: list, m: float) -> float:
    """Linear extrapolation of min alpha^{1-m} to zero (exact for spatially constant data)."""
    if len(states) < 2:
        return float("nan")
    y = [float(s.profile.values.min()) ** (1.0 - m) for s in states[-2:]]
    t = [s.t for s in states[-2:]]
    slope = (y[1] - y[0]) / (t[1] - t[0])
    return t[1] - y[1] / slope if slope < 0 else float("inf")


# ---------------------------------------------------------------------------
# separable solutions


def fixed_point(A: float, C: float, m: float) -> float:
    """Constant solution beta = (A/C)^{m/(1-m)} of LB(beta) + A beta = C beta^{1/m}."""
    if A * C <= 0:
        raise ValueError("the constant solution needs A and C of the same nonzero sign")
    return (A / C) ** (m / (1.0 - m))


@dataclass
class OrbitProfile:
    """A periodic beta(theta) stored by Fourier coefficients over its own period."""

    period: float
    coeffs: np.ndarray  # rfft coefficients of uniform samples over one period
    count: int

    @classmethod
    def from_samples(cls, values: np.ndarray, period: float) -> "OrbitProfile":
        v = np.asarray(values, dtype=float)
        return cls(float(period), np.fft.rfft(v) / v.size, v.size)

    def _eval(self, theta, order: int) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        kk = 2 * np.pi * np.arange(self.coeffs.size) / self.period
        w = np.full(self.coeffs.size, 2.0)
        w[0] = 1.0
        if self.count % 2 == 0:
            w[-1] = 1.0
        c = self.coeffs * w * (1j * kk) ** order
        return np.real(np.exp(1j * np.multiply.outer(th, kk)) @ c)

    def __call__(self, theta) -> np.ndarray:
        return self._eval(theta, 0)

    def lb(self, theta) -> np.ndarray:
        return self._eval(theta, 2)


class _ProfileBeta:
    def __init__(self, beta: AngularProfile):
        from .angular import laplace_beltrami

        self.profile = beta
        self._lb = laplace_beltrami(beta)

    def __call__(self, theta):
        return self.profile(theta)

    def lb(self, theta):
        return self._lb(theta)


@dataclass
class SeparableSolution:
    beta: object
    C: float
    t0: float
    m: float
    A: float

    def tau(self, t):
        return ((1.0 - self.m) * self.C * np.asarray(t, dtype=float) + self.t0) ** (1.0 / (1.0 - self.m))

    def tau_dot(self, t):
        return self.C * self.tau(t) ** self.m

    def __call__(self, theta, t):
        return self.tau(t) * self.beta(theta) ** (1.0 / self.m)

    def residual(self, theta, t, relative: bool = True) -> np.ndarray:
        """alpha_t - LB(alpha^m) - A alpha^m at (theta, t), using alpha^m = tau^m beta."""
        th, tt = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(t, dtype=float))
        b, lb = self.beta(th), self.beta.lb(th)
        tm = self.tau(tt) ** self.m
        a_t = self.tau_dot(tt) * b ** (1.0 / self.m)
        diff = tm * lb
        react = self.A * tm * b
        res = a_t - diff - react
        if not relative:
            return res
        return res / np.maximum.reduce([np.abs(a_t), np.abs(diff), np.abs(react)])

    def tau_identity_error(self, t) -> float:
        """|tau' - C tau^m| with tau' from a central difference, relative."""
        t = np.asarray(t, dtype=float)
        h = 1e-6
        fd = (self.tau(t + h) - self.tau(t - h)) / (2 * h)
        return float(np.max(np.abs(fd - self.tau_dot(t)) / np.abs(self.tau_dot(t))))


def separable_solution(beta, C: float, t0: float, n: int, m: float, A: float | None = None) -> SeparableSolution:
    """alpha(theta, t) = tau(t) beta^{1/m}(theta) with tau = ((1-m) C t + t0)^{1/(1-m)}.

    ``beta`` is an AngularProfile or an OrbitProfile.  A sign mismatch
    between C and A only warns: tau then vanishes or blows up in finite time.
    """
    if t0 <= 0:
        raise ValueError("t0 must be positive")
    if A is None:
        A = critical_coefficient_A(n, m)
    if isinstance(beta, AngularProfile):
        if not beta.is_positive:
            raise ValueError("beta must be positive")
        beta = _ProfileBeta(beta)
    elif np.any(beta(np.linspace(0, beta.period, 257)) <= 0):
        raise ValueError("beta must be positive")
    if A * C < 0:
        warnings.warn("C and A have opposite signs; tau reaches 0 or infinity in finite time", RuntimeWarning)
    return SeparableSolution(beta, float(C), float(t0), float(m), float(A))


# ---------------------------------------------------------------------------
# phase plane


def _force(beta: float, A: float, C: float, m: float) -> float:
    return -beta * (A - C * beta ** (1.0 / m - 1.0))


def hamiltonian_energy(beta, v, A: float, C: float, m: float):
    """E = v^2/2 + A beta^2/2 - C beta^{1/m+1}/(1/m+1)."""
    b = np.asarray(beta, dtype=float)
    if np.any(b <= 0):
        raise ValueError("energy needs beta > 0")
    p = 1.0 / m + 1.0
    E = 0.5 * np.asarray(v, dtype=float) ** 2 + 0.5 * A * b**2 - C * b**p / p
    return float(E) if np.ndim(E) == 0 else E


def linear_period(A: float, C: float, m: float) -> float:
    """2 pi / sqrt(V''(P)); V''(P) = A (1 - 1/m), positive only when A < 0."""
    curv = A * (1.0 - 1.0 / m)
    return 2 * np.pi / math.sqrt(curv) if curv > 0 else float("inf")


@dataclass
class Orbit:
    t: np.ndarray
    beta: np.ndarray
    v: np.ndarray
    energy: float
    period: float
    closure_error: float
    status: str  # closed | degenerate | non_closing | positivity_lost | escaped
    candidate: bool  # beta > 0 along the whole orbit
    energy_drift: float  # |E at section returns - E0| per unit time
    energy_oscillation: float  # max |E - E0| over all steps
    returns: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @property
    def closed(self) -> bool:
        return self.status in ("closed", "degenerate")

    def profile(self, count: int = 256) -> OrbitProfile:
        """beta over one period on ``count`` uniform points, by cubic Hermite interpolation."""
        if not self.closed or not np.isfinite(self.period):
            raise ValueError("only closed orbits define a periodic profile")
        if self.status == "degenerate":
            return OrbitProfile.from_samples(np.full(count, self.beta[0]), self.period)
        s = np.arange(count) * self.period / count + self.returns[0]
        return OrbitProfile.from_samples(_hermite(self.t, self.beta, self.v, s), self.period)

    def to_csv(self, path, stride: int = 100) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["beta", "v", "t"])
            for b, vv, tt in zip(self.beta[::stride], self.v[::stride], self.t[::stride]):
                w.writerow([repr(float(b)), repr(float(vv)), repr(float(tt))])

    def summary(self) -> dict:
        keys = ("energy", "period", "closure_error", "status", "candidate", "energy_drift", "energy_oscillation")
        d = {k: getattr(self, k) for k in keys}
        d.update(self.params)
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = None
        return d


def _hermite(t, y, dy, s):
    """Cubic Hermite interpolation of samples (t, y, y') at points s."""
    i = np.clip(np.searchsorted(t, s) - 1, 0, len(t) - 2)
    h = t[i + 1] - t[i]
    x = (s - t[i]) / h
    h00 = 2 * x**3 - 3 * x**2 + 1
    h10 = x**3 - 2 * x**2 + x
    h01 = -2 * x**3 + 3 * x**2
    h11 = x**3 - x**2
    return h00 * y[i] + h10 * h * dy[i] + h01 * y[i + 1] + h11 * h * dy[i + 1]


def _crossing(t0, b0, v0, f0, t1, b1, v1, f1):
    """Time where v = 0 between two steps (Hermite in v with v' = f), and beta there."""
    h = t1 - t0

    def vh(x):
        return ((2 * x**3 - 3 * x**2 + 1) * v0 + (x**3 - 2 * x**2 + x) * h * f0
                + (-2 * x**3 + 3 * x**2) * v1 + (x**3 - x**2) * h * f1)

    x = brentq(vh, 0.0, 1.0, xtol=1e-15) if v0 != 0 else 0.0
    bx = ((2 * x**3 - 3 * x**2 + 1) * b0 + (x**3 - 2 * x**2 + x) * h * v0
          + (-2 * x**3 + 3 * x**2) * b1 + (x**3 - x**2) * h * v1)
    return t0 + x * h, bx


def trace_orbit(
    start: tuple[float, float],
    A: float,
    C: float,
    m: float,
    h: float = 1e-4,
    n_returns: int = 1,
    max_time: float = 200.0,
    escape: float = 1e3,
) -> Orbit:
    """Leapfrog (velocity Verlet) with fixed step ``h`` from ``start`` = (beta, v).

    The Poincare section is v = 0 with beta > P, crossed from v > 0 to v < 0
    (the turning point at maximal beta).  With a start on the section, the
    period is the first return time and the closure error is the phase-space
    distance to the start; otherwise both are measured between the first
    two crossings.  ``n_returns`` further crossings are used to measure the
    secular energy drift.
    """
    params = {"A": A, "C": C, "m": m, "h": h, "start": [float(start[0]), float(start[1])]}
    b, v = float(start[0]), float(start[1])
    if b <= 0:
        raise ValueError("start must have beta > 0")
    try:
        P = fixed_point(A, C, m)
    except ValueError:
        P = 0.0
    E0 = hamiltonian_energy(b, v, A, C, m)
    if A * C > 0 and abs(b - P) < 1e-14 and v == 0.0:
        per = linear_period(A, C, m)
        return Orbit(np.array([0.0]), np.array([b]), np.array([v]), E0, per, 0.0,
                     "degenerate", True, 0.0, 0.0, [], params)

    on_section = v == 0.0 and b > P
    max_steps = int(math.ceil(max_time / h))
    ts, bs, vs = [0.0], [b], [v]
    f = _force(b, A, C, m)
    crossings = [(0.0, b)] if on_section else []
    need = n_returns + 1 if on_section else n_returns + 2
    status = "non_closing"
    t = 0.0
    for i in range(1, max_steps + 1):
        vh = v + 0.5 * h * f
        b_new = b + h * vh
        if b_new <= 0:
            status = "positivity_lost"
            break
        f_new = _force(b_new, A, C, m)
        v_new = vh + 0.5 * h * f_new
        t_new = i * h
        if v > 0 >= v_new and b_new > P:
            crossings.append(_crossing(t, b, v, f, t_new, b_new, v_new, f_new))
        t, b, v, f = t_new, b_new, v_new, f_new
        ts.append(t)
        bs.append(b)
        vs.append(v)
        if abs(b) > escape:
            status = "escaped"
            break
        if len(crossings) >= need:
            status = "closed"
            break
    tt, bb, vv = np.array(ts), np.array(bs), np.array(vs)
    E = hamiltonian_energy(np.maximum(bb, 1e-300), vv, A, C, m)
    osc = float(np.max(np.abs(E - E0)))
    period = closure = drift = float("nan")
    if status in ("closed", "non_closing") and len(crossings) >= 2:
        status = "closed"
        (ta, ba), (tb, bb_) = crossings[0], crossings[1]
        period = tb - ta
        closure = abs(bb_ - ba)  # both points lie on v = 0
        Ec = [hamiltonian_energy(x, 0.0, A, C, m) for _, x in crossings]
        drift = max(abs(e - Ec[0]) / (tc - crossings[0][0]) for e, (tc, _) in zip(Ec[1:], crossings[1:]))
        # keep one period of samples starting at the first crossing
        if not on_section:
            keep = tt >= ta - h
            tt, bb, vv = tt[keep], bb[keep], vv[keep]
    candidate = bool(np.all(bb > 0)) and status == "closed"
    return Orbit(tt, bb, vv, E0, period, closure, status, candidate, drift, osc,
                 [c[0] for c in crossings], params)


def period_curve(
    amplitudes: Sequence[float], A: float, C: float, m: float, h: float = 1e-4, resonance_tol: float = 1e-3, k_max: int = 8
) -> list[dict]:
    """Orbit period against starting beta on the section, flagging near-resonant periods 2 pi / k."""
    rows = []
    for a in amplitudes:
        o = trace_orbit((float(a), 0.0), A, C, m, h=h)
        row = {"beta0": float(a), "period": o.period, "status": o.status, "closure_error": o.closure_error}
        row["near_resonant_k"] = None
        if o.closed and np.isfinite(o.period):
            for k in range(1, k_max + 1):
                if abs(o.period - 2 * np.pi / k) <= resonance_tol * 2 * np.pi / k:
                    row["near_resonant_k"] = k
        rows.append(row)
    return rows


def shoot_period(target: float, A: float, C: float, m: float, beta_max: float, h: float = 1e-4, tol: float = 1e-8) -> float | None:
    """Starting beta in (P, beta_max) on the section whose orbit period equals ``target``, if bracketed."""
    P = fixed_point(A, C, m)

    def g(b0):
        o = trace_orbit((b0, 0.0), A, C, m, h=h)
        return (o.period if o.closed else float("inf")) - target

    lo = P * (1 + 1e-4)
    g_lo, g_hi = g(lo), g(beta_max)
    if not (np.isfinite(g_lo) and np.isfinite(g_hi)) or g_lo * g_hi > 0:
        return None
    return float(brentq(g, lo, beta_max, xtol=tol))


def orbit_sweep(starts: Sequence[tuple[float, float]], A: float, C: float, m: float, h: float = 1e-3, max_time: float = 50.0) -> list[Orbit]:
    """Independent orbits from many starts (coarser default step for surveys)."""
    return [trace_orbit(s, A, C, m, h=h, max_time=max_time) for s in starts]


def write_orbits_json(orbits: Sequence[Orbit], path) -> None:
    with open(path, "w") as fh:
        json.dump([o.summary() for o in orbits], fh, indent=2, sort_keys=True)
