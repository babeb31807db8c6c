"""Local L^p diagnostics near a singular point or a singular ray.

Divergence is read off from how the excised integral I(eps) scales as the
excised ball (or cylinder) shrinks, never from the size of a single value.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit
from scipy.special import roots_legendre

from .angular import AngularGeometry
from .regimes import sphere_area

log = logging.getLogger(__name__)

__all__ = [
    "local_lp_mass",
    "traveling_wave_lp_mass",
    "divergence_diagnosis",
    "LpReport",
    "snaking_threshold",
    "SnakingThreshold",
    "lp_schedule",
]


def _gauss(a, b, k):
    x, w = roots_legendre(k)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def lp_schedule(eps0: float = 1e-6, ratio: float = 0.1, count: int = 12) -> np.ndarray:
    return eps0 * ratio ** np.arange(count)


def _log_panels(a: float, b: float, breaks: Sequence[float] = (), per_decade: float = 1.0) -> np.ndarray:
    """Panel edges in ln r between a and b, roughly ``per_decade`` panels per factor 10."""
    la, lb = math.log(a), math.log(b)
    k = max(2, int(math.ceil((lb - la) / math.log(10.0) * per_decade)))
    edges = list(np.linspace(la, lb, k + 1))
    for x in breaks:
        if a < x < b:
            edges.append(math.log(x))
    return np.unique(edges)


def _radial_integral(f: Callable, a: float, b: float, n: int, breaks=(), k: int = 16) -> float:
    """int_a^b f(r) r^{n-1} dr with Gauss nodes in s = ln r."""
    total = 0.0
    e = _log_panels(a, b, breaks)
    for s0, s1 in zip(e[:-1], e[1:]):
        s, w = _gauss(s0, s1, k)
        r = np.exp(s)
        total += float(np.sum(w * f(r) * r**n))
    return total


def local_lp_mass(
    u: Callable,
    p: float,
    epsilon: float,
    n: int,
    geometry: AngularGeometry | None = None,
    window: tuple[float, float] = (0.0, 1.0),
    radius: float = 1.0,
    n_time: int = 16,
    k: int = 16,
    kink: Callable | None = None,
) -> float:
    """int over ``window`` of int_{B_radius \\ B_eps} u^p dx dt.

    ``u(r, theta, t)`` in polar form about the singular point; ``geometry``
    supplies the angular nodes and sphere weights (isotropic if omitted).
    ``kink(t)`` adds a panel break where the integrand is not smooth.
    u^p is formed as exp(p log u) so large values do not overflow early.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    if not 0 < epsilon < radius:
        raise ValueError("epsilon must lie in (0, radius)")
    if geometry is None:
        thetas, wth = np.zeros(1), np.array([sphere_area(n)])
    else:
        thetas, wth = geometry.theta, geometry.weights
    ts, wt = _gauss(window[0], window[1], n_time)
    if kink is None:
        kink = getattr(u, "kink_radius", None)
    total = 0.0
    for t, w in zip(ts, wt):
        br = ()
        if kink is not None:
            rk = float(np.asarray(kink(t)))
            br = (rk,) if np.isfinite(rk) else ()

        def f(r, t=t):
            R, TH = np.meshgrid(r, thetas, indexing="ij")
            with np.errstate(divide="ignore", over="ignore", under="ignore"):
                vals = np.exp(p * np.log(np.asarray(u(R, TH, t), dtype=float)))
            return vals @ wth

        total += w * _radial_integral(f, epsilon, radius, n, br, k)
    return float(total)


def traveling_wave_lp_mass(
    C: float, n: int, m: float, p: float, epsilon: float, n_t: int = 24, n_y: int = 24, k: int = 16
) -> float:
    """I(eps) for the cylindrical wave with a = e_n over [0,1] x B'_1 x [-1,0], |x'| >= eps.

    Coordinates y = t - x_n and rho = |x'| / y, in which
    I = C^p |S^{n-2}| int_0^1 int_t^{1+t} y^{n-1-kp} int_{eps/y}^{1/y} rho^{n-2} (sqrt(rho^2+1) - 1)^{-kp} drho dy dt,
    k = 1/(1-m).  The bracket is evaluated as rho^2/(sqrt(rho^2+1)+1) to avoid cancellation.
    """
    if n < 2 or not 0 < m < 1:
        raise ValueError("need n >= 2 and 0 < m < 1")
    kp = p / (1.0 - m)
    area = sphere_area(n - 1) if n >= 3 else 2.0
    ts, wt = _gauss(0.0, 1.0, n_t)
    total = 0.0
    for t, w_t in zip(ts, wt):
        # split y at 1 where the rho range [eps/y, 1/y] crosses rho = 1
        ys, wy = [], []
        for a, b in ((t, 1.0), (1.0, 1.0 + t)):
            if b > a:
                y, w = _gauss(a, b, n_y)
                ys.append(y)
                wy.append(w)
        for y, w in zip(np.concatenate(ys), np.concatenate(wy)):
            lo, hi = epsilon / y, 1.0 / y
            if hi <= lo:
                continue

            def g(rho):
                bracket = rho * rho / (np.sqrt(rho * rho + 1.0) + 1.0)
                return bracket ** (-kp)

            inner = _radial_integral(g, lo, hi, n - 1, breaks=(1.0,), k=k)  # rho^{n-2} weight
            total += w_t * w * y ** (n - 1 - kp) * inner
    return float(C**p * area * total)


# ---------------------------------------------------------------------------
# diagnosis


def _boxcox(eps, c0, c1, q):
    # c0 + c1 (eps^{-q} - 1)/q; q -> 0 gives c0 + c1 ln(1/eps)
    L = -np.log(eps)
    x = q * L
    small = np.abs(x) < 1e-6
    with np.errstate(over="ignore"):
        val = np.where(small, L * (1 + x / 2 + x * x / 6), np.expm1(np.where(small, 0.0, x)) / np.where(small, 1.0, q))
    return c0 + c1 * val


@dataclass
class LpReport:
    p: float
    region: dict
    epsilons: list
    values: list
    classification: str  # finite | power_divergent | log_divergent | ambiguous
    exponent: float  # Box-Cox q: > 0 power, ~0 log, < 0 finite
    exponent_sigma: float
    fits: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def divergent(self) -> bool:
        return self.classification in ("power_divergent", "log_divergent")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["divergent"] = self.divergent
        for key in ("exponent", "exponent_sigma"):
            if not math.isfinite(d[key]):
                d[key] = None  # keep the JSON strict
        return d

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", "I"])
            for e, v in zip(self.epsilons, self.values):
                w.writerow([repr(float(e)), repr(float(v))])


def divergence_diagnosis(
    epsilons: Sequence[float],
    values: Sequence[float],
    p: float = 1.0,
    region: dict | None = None,
    q_tol: float = 0.1,
    tail: int | None = None,
) -> LpReport:
    """Classify I(eps) as finite, log-divergent or power-divergent.

    A Box-Cox family c0 + c1 (eps^{-q} - 1)/q contains both candidate laws
    (q > 0 power, q -> 0 logarithm, q < 0 convergent).  q is fitted on the
    tail of the schedule; the verdict needs q clear of the bands
    [-q_tol, q_tol] by three standard errors, else "ambiguous".  The
    separate power and log fits are reported alongside.
    """
    e = np.asarray(epsilons, dtype=float)
    v = np.asarray(values, dtype=float)
    if e.size < 5:
        raise ValueError("need at least five (eps, I) samples")
    order = np.argsort(-e)
    e, v = e[order], v[order]
    if tail is not None:
        e, v = e[-tail:], v[-tail:]
    notes = []
    scale = max(np.max(np.abs(v)), 1e-300)
    y = v / scale

    inc = np.abs(np.diff(v[-3:]))
    if np.all(inc <= 1e-12 * np.abs(v[-1])):
        # the sequence has settled to rounding level: nothing left to fit
        return LpReport(p, region or {}, e.tolist(), v.tolist(), "finite", float("-inf"), 0.0,
                        {}, ["values settled to rounding level on the tail"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OptimizeWarning)
        return _diagnose(e, v, y, scale, p, region, q_tol, notes)


def _diagnose(e, v, y, scale, p, region, q_tol, notes) -> LpReport:
    # separate candidates
    L = -np.log(e)
    A = np.column_stack([np.ones_like(L), L])
    c_log, res_log, *_ = np.linalg.lstsq(A, y, rcond=None)
    r_log = float(np.sqrt(np.mean((A @ c_log - y) ** 2)))
    try:
        popt_p, _ = curve_fit(lambda x, c0, c1, q: c0 + c1 * x**(-q), e, y, p0=(y[0], 1e-3, 0.5), maxfev=20000)
        r_pow = float(np.sqrt(np.mean((popt_p[0] + popt_p[1] * e ** (-popt_p[2]) - y) ** 2)))
    except (RuntimeError, ValueError):
        popt_p, r_pow = (np.nan, np.nan, np.nan), float("inf")

    # unified fit
    slope0 = (y[-1] - y[-2]) / (L[-1] - L[-2])
    best = None
    for q0 in (-0.5, 0.0, 0.5, 1.5, 3.0):
        try:
            popt, pcov = curve_fit(_boxcox, e, y, p0=(y[0], slope0 if q0 == 0 else slope0 * 0.5, q0), maxfev=20000)
        except (RuntimeError, ValueError):
            continue
        r = float(np.sqrt(np.mean((_boxcox(e, *popt) - y) ** 2)))
        if best is None or r < best[2]:
            best = (popt, pcov, r)
    if best is None:
        raise RuntimeError("no fit converged for the divergence diagnosis")
    popt, pcov, r_bc = best
    q = float(popt[2])
    sig = float(np.sqrt(abs(pcov[2, 2]))) if np.all(np.isfinite(pcov)) else float("inf")

    if q - 3 * sig > q_tol:
        cls = "power_divergent"
    elif q + 3 * sig < -q_tol:
        cls = "finite"
    elif abs(q) + 3 * sig <= q_tol:
        cls = "log_divergent" if popt[1] > 0 else "finite"
    else:
        cls = "ambiguous"
        notes.append("exponent interval straddles a classification threshold")
    if cls == "log_divergent" and np.isfinite(r_pow) and r_pow < 0.9 * r_log and popt_p[2] > q_tol:
        notes.append("power fit has clearly smaller residual than the log fit")
    return LpReport(
        p=p,
        region=region or {},
        epsilons=e.tolist(),
        values=v.tolist(),
        classification=cls,
        exponent=q,
        exponent_sigma=sig,
        fits={
            "boxcox": {"c0": float(popt[0] * scale), "c1": float(popt[1] * scale), "q": q, "rms": r_bc},
            "log": {"c0": float(c_log[0] * scale), "c1": float(c_log[1] * scale), "rms": r_log},
            "power": {"c0": float(popt_p[0] * scale), "c1": float(popt_p[1] * scale), "q": float(popt_p[2]), "rms": r_pow},
        },
        notes=notes,
    )


@dataclass(frozen=True)
class SnakingThreshold:
    threshold: float
    no_p_at_least_one: bool
    m_starstar: float


def snaking_threshold(n: int, m: float) -> SnakingThreshold:
    """p-threshold (1-m)(n-1)/2 below which the lower bound integral is finite.

    No p >= 1 passes exactly when the threshold is at most 1, i.e. m >= m^*.
    """
    if n < 2 or not 0 < m < 1:
        raise ValueError("need n >= 2 and 0 < m < 1")
    thr = (1.0 - m) * (n - 1) / 2.0
    m_ss = (n - 3) / (n - 1) if n >= 3 else 0.0
    return SnakingThreshold(thr, bool(thr <= 1.0), m_ss)
