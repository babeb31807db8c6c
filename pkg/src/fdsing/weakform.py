"""Distributional identities around a point singularity.

Fields are evaluated in polar coordinates about the (possibly moving)
singular point: ``u(r, omega, t)`` with ``omega`` an array of unit vectors of
shape ``(..., n)``.  The test function lives in Cartesian space,
``x = xi(t) + r omega``.

Annulus integrals over ``B_{3eps} \\ B_eps``:

    H = int u eta phi_t,    I = int u^m eta Lap(phi),
    J = 2 int u^m eta' omega.grad(phi),    K = int u^m phi (eta'' + (n-1) eta'/r),

with ``K = (n-1) K1 + K2 - K3``.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import roots_gegenbauer, roots_legendre

from .regimes import sphere_area

log = logging.getLogger(__name__)

__all__ = [
    "Cutoff",
    "build_cutoff",
    "TestFunction",
    "sphere_quadrature",
    "boundary_integrals",
    "dirac_coefficient",
    "weak_residual_no_source",
    "SyntheticField",
    "StationaryField",
    "TrajectoryField",
    "richardson_limit",
    "WeakReport",
    "Extrapolation",
]


# ---------------------------------------------------------------------------
# cutoff


@dataclass(frozen=True)
class Cutoff:
    """C^2 cutoff eta_eps(r) = eta_1(r / eps); 0 below eps, 1 above 3 eps.

    On [1, 2]: eta_1 = x^3 - x^4/2 with x = r - 1; on [2, 3] the mirror
    image 1 - (y^3 - y^4/2) with y = 3 - r.  eta'' >= 0 then <= 0, sign change at 2.
    """

    epsilon: float

    c1: float = 1.0  # eps * eta'(2 eps)
    c2: float = 1.5  # eps^2 * max |eta''|

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def _parts(self, r):
        rho = np.asarray(r, dtype=float) / self.epsilon
        x = np.clip(rho - 1.0, 0.0, 1.0)
        y = np.clip(3.0 - rho, 0.0, 1.0)
        lower = rho <= 2.0
        return rho, x, y, lower

    def __call__(self, r):
        rho, x, y, lower = self._parts(r)
        return np.where(lower, x**3 - 0.5 * x**4, 1.0 - (y**3 - 0.5 * y**4))

    def d1(self, r):
        rho, x, y, lower = self._parts(r)
        return np.where(lower, 3 * x**2 - 2 * x**3, 3 * y**2 - 2 * y**3) / self.epsilon

    def d2(self, r):
        rho, x, y, lower = self._parts(r)
        return np.where(lower, 6 * x - 6 * x**2, -(6 * y - 6 * y**2)) / self.epsilon**2

    def verify(self, n_samples: int = 1000) -> dict:
        """Check the defining properties at sample points; returns worst violations."""
        e = self.epsilon
        r = np.linspace(0.0, 4.0 * e, n_samples)
        eta, d1, d2 = self(r), self.d1(r), self.d2(r)
        inner, outer = r <= e, r >= 3 * e
        first, second = (r >= e) & (r <= 2 * e), (r >= 2 * e) & (r <= 3 * e)
        # C^2: one-sided limits agree at the three break points
        h = 1e-9 * e
        jumps = [
            max(abs(f(b + h) - f(b - h)) * s for f, s in ((self, 1.0), (self.d1, e), (self.d2, e * e)))
            for b in (e, 2 * e, 3 * e)
        ]
        return {
            "zero_inside": float(np.max(np.abs(eta[inner]))),
            "one_outside": float(np.max(np.abs(eta[outer] - 1.0))),
            "convex_first": float(max(0.0, -d2[first].min())),
            "concave_second": float(max(0.0, d2[second].max())),
            "d1_bound": float(max(0.0, d1.max() - self.c1 / e, -d1.min())),
            "d2_bound": float(max(0.0, np.abs(d2).max() - self.c2 / e**2)),
            "c2_jump": float(max(jumps)),
        }


def build_cutoff(epsilon: float, check: bool = True) -> Cutoff:
    c = Cutoff(float(epsilon))
    if check:
        worst = c.verify()
        bad = {k: v for k, v in worst.items() if v > 1e-6}
        if bad:
            raise AssertionError(f"cutoff properties violated: {bad}")
    return c


# ---------------------------------------------------------------------------
# test function


def _bump(s):
    """psi(s) = exp(1 - 1/(1 - s^2)) on |s| < 1, with psi'(s) = s g(s)."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    q = np.where(inside, 1.0 - s * s, 1.0)
    psi = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
    g = np.where(inside, -2.0 * psi / q**2, 0.0)
    # g' = -2 psi' q^-2 - 8 s psi q^-3
    gp = np.where(inside, -2.0 * s * g / q**2 - 8.0 * s * psi / q**3, 0.0)
    return psi, g, gp


@dataclass(frozen=True)
class TestFunction:
    """phi(x, t) = psi(|x - c| / R) chi(t), psi and chi smooth bumps (chi on the window)."""

    __test__ = False  # not a pytest class

    center: tuple
    radius: float = 1.0
    window: tuple = (0.25, 1.75)

    def __post_init__(self) -> None:
        if self.radius <= 0 or not self.window[1] > self.window[0]:
            raise ValueError("need radius > 0 and a nonempty time window")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    @property
    def n(self) -> int:
        return len(self.center)

    def _tau(self, t):
        t0, t1 = self.window
        return (2.0 * np.asarray(t, dtype=float) - t0 - t1) / (t1 - t0), 2.0 / (t1 - t0)

    def chi(self, t):
        return _bump(self._tau(t)[0])[0]

    def chi_t(self, t):
        tau, k = self._tau(t)
        _, g, _ = _bump(tau)
        return tau * g * k

    def _space(self, x):
        d = np.asarray(x, dtype=float) - np.asarray(self.center)
        s = np.linalg.norm(d, axis=-1) / self.radius
        return d, s, _bump(s)

    def __call__(self, x, t):
        _, _, (psi, _, _) = self._space(x)
        return psi * self.chi(t)

    def dt(self, x, t):
        _, _, (psi, _, _) = self._space(x)
        return psi * self.chi_t(t)

    def grad(self, x, t):
        d, s, (_, g, _) = self._space(x)
        # grad psi(|d|/R) = psi'(s) d / (R |d|) = g(s) d / R^2
        return (g / self.radius**2 * np.asarray(self.chi(t)))[..., None] * d

    def lap(self, x, t):
        _, s, (_, g, gp) = self._space(x)
        return (self.n * g + s * gp) / self.radius**2 * self.chi(t)


# ---------------------------------------------------------------------------
# quadrature


@lru_cache(maxsize=32)
def sphere_quadrature(n: int, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors and weights on S^{n-1}; weights sum to |S^{n-1}|.

    Product rule: uniform nodes on the circle, Gauss-Gegenbauer in the
    cosine of each further polar angle (axis e_n at each level).
    """
    if n < 2:
        raise ValueError("sphere quadrature needs n >= 2")
    if n == 2:
        k = 2 * order
        th = 2.0 * np.pi * (np.arange(k) + 0.5) / k
        return np.column_stack([np.cos(th), np.sin(th)]), np.full(k, 2.0 * np.pi / k)
    sub, wsub = sphere_quadrature(n - 1, order)
    x, w = roots_gegenbauer(order, (n - 2) / 2.0)  # weight (1-x^2)^{(n-3)/2}
    sin = np.sqrt(1.0 - x * x)
    pts = np.concatenate([np.column_stack([s * sub, np.full(len(sub), c)]) for c, s in zip(x, sin)])
    wts = np.concatenate([wi * wsub for wi in w])
    return pts, wts


def _gauss(a: float, b: float, k: int):
    x, w = roots_legendre(k)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


# ---------------------------------------------------------------------------
# fields in polar coordinates about xi(t)


class PolarField:
    """Interface: ``u(r, omega, t)`` plus dimension, exponent and path of the singular point."""

    n: int
    m: float

    def xi(self, t) -> np.ndarray:
        return np.zeros(np.shape(t) + (self.n,))

    def xi_dot(self, t) -> np.ndarray:
        return np.zeros(np.shape(t) + (self.n,))

    def k_m(self, t):
        """k^m(t), the expected Dirac weight divided by (n-2)|S^{n-1}|."""
        raise NotImplementedError

    def __call__(self, r, omega, t):
        raise NotImplementedError

    def um(self, r, omega, t):
        return self(r, omega, t) ** self.m


@dataclass
class StationaryField(PolarField):
    """u = K r^{-(n-2)/m} about a fixed point."""

    K: float
    n: int
    m: float
    center: tuple | None = None

    def xi(self, t):
        c = np.zeros(self.n) if self.center is None else np.asarray(self.center, dtype=float)
        return np.broadcast_to(c, np.shape(t) + (self.n,))

    def k_m(self, t):
        return self.K**self.m + 0.0 * np.asarray(t)

    def __call__(self, r, omega, t):
        return self.K * np.asarray(r, dtype=float) ** (-(self.n - 2) / self.m)

    def um(self, r, omega, t):
        return self.K**self.m * np.asarray(r, dtype=float) ** (2.0 - self.n)


@dataclass
class SyntheticField(PolarField):
    """u^m = k^m (r^{2-n} + b(t) r^{-lam_t}), with b(t) = b0 e^{Bt} and xi(t) = xi0 + t v."""

    n: int
    m: float
    lam_t: float
    k: float = 1.0
    b0: float = 1.5
    B: float = 0.5
    velocity: tuple = ()
    xi0: tuple = ()

    def __post_init__(self) -> None:
        self.velocity = tuple(self.velocity) if self.velocity else (0.0,) * self.n
        self.xi0 = tuple(self.xi0) if self.xi0 else (0.0,) * self.n

    @property
    def a(self) -> float:
        return self.n - 2.0 - self.lam_t

    def b(self, t):
        return self.b0 * np.exp(self.B * np.asarray(t, dtype=float))

    def xi(self, t):
        t = np.asarray(t, dtype=float)
        return np.asarray(self.xi0) + t[..., None] * np.asarray(self.velocity)

    def xi_dot(self, t):
        return np.broadcast_to(np.asarray(self.velocity, dtype=float), np.shape(t) + (self.n,))

    def k_m(self, t):
        return self.k**self.m + 0.0 * np.asarray(t)

    def um(self, r, omega, t):
        r = np.asarray(r, dtype=float)
        return self.k**self.m * (r ** (2.0 - self.n) + self.b(t) * r ** (-self.lam_t))

    def __call__(self, r, omega, t):
        return self.um(r, omega, t) ** (1.0 / self.m)

    def l_terms(self, eps: float, t: float, k: int = 64) -> tuple[float, float, float]:
        """L1, L2, L3 of the proof; each scales exactly like eps^a."""
        cut = Cutoff(eps)
        a = self.a
        r1, w1 = _gauss(eps, 2 * eps, k)
        r2, w2 = _gauss(2 * eps, 3 * eps, k)
        b = float(self.b(t))
        L1 = b * np.sum(w1 * r1 ** (a + 1) * cut.d2(r1))
        L2 = b * np.sum(w2 * r2 ** (a + 1) * -cut.d2(r2))
        L3 = b * (np.sum(w1 * r1**a * cut.d1(r1)) + np.sum(w2 * r2**a * cut.d1(r2)))
        return float(L1), float(L2), float(L3)


class ClosedFormField(PolarField):
    """Adapter for an envelope-style ``w(r, theta, t)`` around a fixed point.

    theta is the angle to the e_n axis (zonal) or the planar angle (n = 2).
    """

    def __init__(self, form, n: int, m: float, k_m: Callable | None = None):
        self.form, self.n, self.m = form, n, m
        self._k_m = k_m

    def k_m(self, t):
        if self._k_m is None:
            raise ValueError("this field carries no Dirac weight")
        return self._k_m(t)

    def __call__(self, r, omega, t):
        return self.form(r, omega_to_theta(omega), t)


def omega_to_theta(omega: np.ndarray) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if omega.shape[-1] == 2:
        return np.mod(np.arctan2(omega[..., 1], omega[..., 0]), 2 * np.pi)
    return np.arccos(np.clip(omega[..., -1], -1.0, 1.0))


class TrajectoryField(PolarField):
    """Interpolant of solver snapshots: spectral in theta, cubic in ln r on log(w).

    Time lookup is exact at snapshot times (the weak-form quadrature asks the
    solver for snapshots at its Gauss nodes) and linear in between.
    """

    def __init__(self, trajectory, params):
        self.n, self.m = params.n, params.m
        self.grid = trajectory.grid
        self.times = np.array([t for t, _ in trajectory.snapshots])
        self._logw = [np.log(v) for _, v in trajectory.snapshots]
        self._cache: dict = {}

    @property
    def r_range(self) -> tuple[float, float]:
        return float(self.grid.r[0]), float(self.grid.r[-1])

    def _spline(self, i: int, theta: np.ndarray) -> CubicSpline:
        g = self.grid.geometry
        key = (i, theta.tobytes())
        if key not in self._cache:
            coeffs = g.forward(self._logw[i])  # (Ns, modes)
            if g.is_circle:
                on_theta = np.stack([g.evaluate(c, theta) for c in coeffs])
            else:
                on_theta = coeffs @ g._zonal_basis(theta).T
            if len(self._cache) > 256:
                self._cache.clear()
            self._cache[key] = CubicSpline(self.grid.s, on_theta, axis=0)
        return self._cache[key]

    def _log_w(self, i: int, s_u: np.ndarray, theta_u: np.ndarray) -> np.ndarray:
        return self._spline(i, theta_u)(s_u)

    def __call__(self, r, omega, t):
        r = np.asarray(r, dtype=float)
        theta = omega_to_theta(omega)
        r, theta = np.broadcast_arrays(r, theta)
        lo, hi = self.r_range
        if np.any(r < lo * (1 - 1e-12)):
            raise ValueError("radius below the excised core of the simulation")
        s_u, i_s = np.unique(np.log(np.clip(r, lo, hi)), return_inverse=True)
        th_u, i_th = np.unique(theta, return_inverse=True)
        t = float(t)
        j = int(np.searchsorted(self.times, t - 1e-12))
        if j < len(self.times) and abs(self.times[j] - t) < 1e-12:
            table = self._log_w(j, s_u, th_u)
        else:
            j = min(max(j, 1), len(self.times) - 1)
            t0, t1 = self.times[j - 1], self.times[j]
            lam = (t - t0) / (t1 - t0)
            table = (1 - lam) * self._log_w(j - 1, s_u, th_u) + lam * self._log_w(j, s_u, th_u)
        return np.exp(table[i_s.reshape(r.shape), i_th.reshape(r.shape)])


# ---------------------------------------------------------------------------
# integrals


@dataclass
class AnnulusValues:
    H: float
    I: float
    J: float
    K: float
    K1: float
    K2: float
    K3: float
    H_transport: float  # int u phi d_t eta_eps(|x - xi(t)|); vanishes in the limit for moving xi
    phi_inf: float
    phi_sup: float
    quad_error: float

    @property
    def total(self) -> float:
        return self.H + self.I + self.J + self.K

    def as_dict(self) -> dict:
        d = asdict(self)
        d["total"] = self.total
        return d


def boundary_integrals(
    u: PolarField,
    phi: TestFunction,
    epsilon: float,
    t: float,
    n_radial: int = 24,
    sphere_order: int = 16,
    check_quadrature: bool = False,
) -> AnnulusValues:
    """H, I, J, K and the K split at one time by tensor Gauss quadrature."""
    vals = _annulus(u, phi, epsilon, t, n_radial, sphere_order)
    err = 0.0
    if check_quadrature:
        fine = _annulus(u, phi, epsilon, t, 2 * n_radial, sphere_order + 8)
        scale = max(abs(fine[k]) for k in ("H", "I", "J", "K")) + 1e-300
        err = max(abs(fine[k] - vals[k]) for k in ("H", "I", "J", "K", "K1", "K2", "K3")) / scale
        vals = fine
        if err > 1e-8:
            log.warning("annulus quadrature not converged at eps=%g t=%g: rel err %.2e", epsilon, t, err)
    return AnnulusValues(**vals, quad_error=err)


def _annulus(u, phi, eps, t, n_radial, sphere_order) -> dict:
    n = u.n
    cut = Cutoff(eps)
    om, wom = sphere_quadrature(n, sphere_order)
    r1, w1 = _gauss(eps, 2 * eps, n_radial)
    r2, w2 = _gauss(2 * eps, 3 * eps, n_radial)
    r = np.concatenate([r1, r2])
    wr = np.concatenate([w1, w2])
    first = np.concatenate([np.ones_like(r1, dtype=bool), np.zeros_like(r2, dtype=bool)])
    R = r[:, None]
    x = u.xi(t)[None, None, :] + R[..., None] * om[None, :, :]
    W = (wr * r ** (n - 1))[:, None] * wom[None, :]
    uu = u(np.broadcast_to(R, W.shape), np.broadcast_to(om, W.shape + (n,)), t)
    um = uu**u.m
    p = phi(x, t)
    eta, d1, d2 = cut(R), cut.d1(R), cut.d2(R)
    om_grad = np.sum(phi.grad(x, t) * om[None, :, :], axis=-1)
    xi_dot = u.xi_dot(t)
    H = np.sum(W * uu * eta * phi.dt(x, t))
    Htr = np.sum(W * uu * p * d1 * -(om @ xi_dot)[None, :])
    I = np.sum(W * um * eta * phi.lap(x, t))
    J = 2.0 * np.sum(W * um * d1 * om_grad)
    K = np.sum(W * um * p * (d2 + (n - 1) * d1 / R))
    K1 = np.sum(W * um * p * d1 / R)
    K2 = np.sum((W * um * p * d2)[first])
    K3 = np.sum((W * um * p * -d2)[~first])
    return dict(
        H=float(H), I=float(I), J=float(J), K=float(K), K1=float(K1), K2=float(K2), K3=float(K3),
        H_transport=float(Htr), phi_inf=float(p.min()), phi_sup=float(p.max()),
    )


# ---------------------------------------------------------------------------
# extrapolation


@dataclass
class Extrapolation:
    limit: float
    uncertainty: float
    exponent: float  # estimated leading error exponent p in S(eps) = S0 + c eps^p
    running: list  # extrapolant after each term (nan for the first two)
    converged: bool
    flags: list = field(default_factory=list)


def _wynn_columns(S: np.ndarray) -> list[np.ndarray]:
    """Even columns eps_2, eps_4, ... of Wynn's epsilon table (Shanks transforms)."""
    prev = np.zeros(S.size + 1)
    cur = S.astype(float)
    cols = []
    k = 0
    while cur.size >= 2:
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.diff(cur)
            nxt = prev[1 : cur.size] + 1.0 / d
        prev, cur = cur, nxt
        k += 1
        if k % 2 == 0:
            if not np.all(np.isfinite(cur)):
                break
            cols.append(cur.copy())
    return cols


def richardson_limit(
    eps: Sequence[float],
    values: Sequence[float],
    min_exponent: float = 1e-3,
    method: str = "wynn",
) -> Extrapolation:
    """Limit of S(eps) as eps -> 0 on a decreasing geometric schedule.

    ``aitken`` assumes one error term c eps^p, re-estimating p from each
    consecutive triple.  ``wynn`` (default) applies the epsilon algorithm,
    which removes several power-law terms at once on a geometric schedule,
    and keeps the even column whose last two entries agree best.  The
    uncertainty is the gap between the last two extrapolants.
    """
    e = np.asarray(eps, dtype=float)
    S = np.asarray(values, dtype=float)
    if e.size < 3:
        raise ValueError("need at least three schedule points")
    ratio = e[1:] / e[:-1]
    if not np.allclose(ratio, ratio[0], rtol=1e-9) or not 0 < ratio[0] < 1:
        raise ValueError("epsilon schedule must be decreasing geometric")
    if method not in ("wynn", "aitken"):
        raise ValueError(f"unknown extrapolation method {method!r}")
    q = ratio[0]
    running = [np.nan, np.nan]
    exps = [np.nan, np.nan]
    for k in range(2, S.size):
        d1, d2 = S[k - 1] - S[k - 2], S[k] - S[k - 1]
        if d1 == 0 or d2 == 0 or d1 * d2 < 0:
            running.append(S[k])
            exps.append(np.nan)
            continue
        p = np.log(d2 / d1) / np.log(q)
        exps.append(p)
        running.append(S[k] - d2 / (q ** (-p) - 1.0) if p > 0 else np.nan)
    flags = []
    tail = np.diff(S[-4:])
    if np.any(tail[1:] * tail[:-1] < 0):
        flags.append("non_monotone_tail")
    p_last = exps[-1]
    if not np.isfinite(p_last) or p_last <= min_exponent:
        flags.append("non_convergent")
    r = np.asarray(running)
    good = np.isfinite(r)
    if good.sum() >= 2:
        lim = float(r[good][-1])
        unc = float(abs(r[good][-1] - r[good][-2]))
    else:
        lim, unc = float(S[-1]), float(abs(S[-1] - S[-2]))
    if method == "wynn":
        best = None
        for col in _wynn_columns(S):
            if col.size >= 2:
                gap = abs(col[-1] - col[-2])
                if best is None or gap < best[1]:
                    best = (float(col[-1]), float(gap))
        if best is not None:
            lim, unc = best
    if "non_monotone_tail" in flags:
        unc = max(unc, float(np.max(np.abs(tail))))
    return Extrapolation(
        limit=lim,
        uncertainty=unc,
        exponent=float(p_last) if np.isfinite(p_last) else float("nan"),
        running=[float(v) for v in r],
        converged="non_convergent" not in flags,
        flags=flags,
    )


def default_schedule(eps0: float = 0.1, ratio: float = 0.5, count: int = 8) -> np.ndarray:
    return eps0 * ratio ** np.arange(count)


def time_nodes(phi: TestFunction, k: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes over the test function's window."""
    return _gauss(phi.window[0], phi.window[1], k)


# ---------------------------------------------------------------------------
# reports


@dataclass
class WeakReport:
    kind: str
    epsilons: list
    rows: list  # per eps: time-integrated H, I, J, K, K1, K2, K3, H_transport, total
    extrapolation: Extrapolation
    target: float | None = None
    weight: float | None = None  # int phi(xi(t), t) dt (times k^m where known)
    scale: float | None = None
    extras: dict = field(default_factory=dict)

    @property
    def limit(self) -> float:
        return self.extrapolation.limit

    @property
    def relative_error(self) -> float | None:
        if self.target is None or self.target == 0:
            return None
        return abs(self.limit - self.target) / abs(self.target)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["limit"] = self.limit
        d["relative_error"] = self.relative_error
        return d

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def to_csv(self, path) -> None:
        keys = ["epsilon", "H", "I", "J", "K", "K1", "K2", "K3", "H_transport", "total", "extrapolant"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(keys)
            for eps, row, ext in zip(self.epsilons, self.rows, self.extrapolation.running):
                w.writerow([repr(float(eps))] + [repr(float(row.get(k, np.nan))) for k in keys[1:-1]] + [repr(float(ext))])


def _time_integrated(u, phi, eps, tn, tw, n_radial, sphere_order) -> dict:
    acc: dict = {}
    for t, w in zip(tn, tw):
        v = boundary_integrals(u, phi, eps, t, n_radial, sphere_order).as_dict()
        for k in ("H", "I", "J", "K", "K1", "K2", "K3", "H_transport", "total"):
            acc[k] = acc.get(k, 0.0) + w * v[k]
    return acc


def dirac_coefficient(
    u: PolarField,
    phi: TestFunction,
    epsilon_schedule: Sequence[float] | None = None,
    n_time: int = 32,
    n_radial: int = 24,
    sphere_order: int = 16,
) -> WeakReport:
    """Extrapolate int (H + I + J + K) dt as eps -> 0.

    The target is (n-2)|S^{n-1}| int k^m(t) phi(xi(t), t) dt when the field
    knows its weight k^m.
    """
    eps = np.asarray(epsilon_schedule if epsilon_schedule is not None else default_schedule(), dtype=float)
    tn, tw = time_nodes(phi, n_time)
    rows = [_time_integrated(u, phi, e, tn, tw, n_radial, sphere_order) for e in eps]
    ext = richardson_limit(eps, [r["total"] for r in rows])
    n = u.n
    try:
        weight = float(np.sum(tw * u.k_m(tn) * phi(u.xi(tn), tn)))
        target = (n - 2) * sphere_area(n) * weight
    except (NotImplementedError, ValueError):
        weight, target = None, None
    rep = WeakReport("dirac", eps.tolist(), rows, ext, target=target, weight=weight)
    if isinstance(u, SyntheticField):
        L = np.array([[u.l_terms(e, t) for e in eps] for t in tn])  # (time, eps, 3)
        Lint = np.abs(np.einsum("t,tej->ej", tw, L))
        slopes = [float(np.polyfit(np.log(eps), np.log(Lint[:, j]), 1)[0]) for j in range(3)]
        rep.extras["L_terms"] = Lint.tolist()
        rep.extras["L_exponents"] = slopes
        rep.extras["a"] = u.a
        if u.a <= 0:
            ext.flags.append("hypothesis_a_nonpositive")
            ext.converged = False
    return rep


def _outer_integral(u, phi, eps, t, n_panels_geo, n_panels_lin, k, sphere_order, r_cap=None) -> tuple[float, float]:
    """int_{|x - xi| > eps} (u phi_t + u^m Lap phi) dx and the same with absolute values."""
    n = u.n
    om, wom = sphere_quadrature(n, sphere_order)
    xi = u.xi(t)
    c = np.asarray(phi.center)
    r_out = np.linalg.norm(xi - c) + phi.radius
    if r_cap is not None:
        r_out = min(r_out, r_cap)
    if r_out <= eps:
        return 0.0, 0.0
    split = min(max(eps * 2.0, 0.1 * r_out), r_out)
    edges = np.unique(np.concatenate([
        np.geomspace(eps, split, n_panels_geo + 1),
        np.linspace(split, r_out, n_panels_lin + 1),
    ]))
    total, scale = 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        r, w = _gauss(a, b, k)
        R = r[:, None]
        W = (w * r ** (n - 1))[:, None] * wom[None, :]
        x = xi[None, None, :] + R[..., None] * om[None, :, :]
        uu = u(np.broadcast_to(R, W.shape), np.broadcast_to(om, W.shape + (n,)), t)
        f1 = uu * phi.dt(x, t)
        f2 = uu**u.m * phi.lap(x, t)
        total += float(np.sum(W * (f1 + f2)))
        scale += float(np.sum(W * (np.abs(f1) + np.abs(f2))))
    return total, scale


def weak_residual_no_source(
    u: PolarField,
    phi: TestFunction,
    epsilon_schedule: Sequence[float] | None = None,
    n_time: int = 32,
    sphere_order: int = 8,
    n_panels: tuple[int, int] = (12, 24),
    k: int = 12,
    r_cap: float | None = None,
) -> WeakReport:
    """Extrapolated -int int_{|x - xi| > eps} (u phi_t + u^m Lap phi) dx dt.

    Zero in the limit for a source-free distributional solution.  ``scale``
    is the same integral of absolute values, the yardstick for "zero".
    """
    eps = np.asarray(epsilon_schedule if epsilon_schedule is not None else default_schedule(), dtype=float)
    tn, tw = time_nodes(phi, n_time)
    rows, scales = [], []
    for e in eps:
        tot, sc = 0.0, 0.0
        for t, w in zip(tn, tw):
            a, b = _outer_integral(u, phi, e, t, n_panels[0], n_panels[1], k, sphere_order, r_cap)
            tot += w * a
            sc += w * b
        rows.append({"total": -tot, "scale": sc})
        scales.append(sc)
    ext = richardson_limit(eps, [r["total"] for r in rows])
    return WeakReport("no_source", eps.tolist(), rows, ext, target=0.0, scale=float(scales[-1]))
