"""Angular profiles on S^{n-1} restricted to one nontrivial direction.

Two geometries are supported:

* ``circle`` (n = 2): uniform periodic nodes, Fourier basis, eigenvalue -k^2.
* ``zonal`` (n >= 3): profiles depending on the polar angle only, sampled at
  Gauss-Gegenbauer nodes in x = cos(theta) (poles excluded).  The basis is the
  Gegenbauer family C_l^{(n-2)/2}, with Laplace-Beltrami eigenvalue
  -l(l + n - 2).

Nodal values and spectral coefficients are related by an exact square
transform, so a nodal profile always round-trips.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import eval_gegenbauer, roots_gegenbauer

from .regimes import ProblemParams, sphere_area

__all__ = [
    "AngularGeometry",
    "AngularProfile",
    "laplace_beltrami",
    "sigma_profile",
    "profile_extrema",
    "ProfileExtrema",
    "builtin_profile",
]


@dataclass(frozen=True)
class AngularGeometry:
    n: int
    node_count: int
    mode: str = ""

    def __post_init__(self) -> None:
        mode = self.mode or ("circle" if self.n == 2 else "zonal")
        if mode == "circle" and self.n != 2:
            raise ValueError("circle geometry requires n = 2")
        if mode == "zonal" and self.n < 3:
            raise ValueError("zonal geometry requires n >= 3")
        if mode not in ("circle", "zonal"):
            raise ValueError(f"unknown angular mode {mode!r}")
        if self.node_count < 1:
            raise ValueError("node_count must be positive")
        object.__setattr__(self, "mode", mode)

    @property
    def is_circle(self) -> bool:
        return self.mode == "circle"

    # -- nodes and quadrature -------------------------------------------------
    @cached_property
    def _zonal_rule(self) -> tuple[np.ndarray, np.ndarray]:
        a = (self.n - 2) / 2.0
        x, w = roots_gegenbauer(self.node_count, a)
        order = np.argsort(-x)  # ascending theta
        return x[order], w[order]

    @cached_property
    def theta(self) -> np.ndarray:
        if self.is_circle:
            return 2.0 * np.pi * np.arange(self.node_count) / self.node_count
        return np.arccos(self._zonal_rule[0])

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights for integration over S^{n-1}; they sum to |S^{n-1}|."""
        if self.is_circle:
            return np.full(self.node_count, 2.0 * np.pi / self.node_count)
        return sphere_area(self.n - 1) * self._zonal_rule[1]

    @property
    def area(self) -> float:
        return sphere_area(self.n)

    # -- spectral basis -------------------------------------------------------
    @cached_property
    def degrees(self) -> np.ndarray:
        if self.is_circle:
            return np.arange(self.node_count // 2 + 1)
        return np.arange(self.node_count)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        k = self.degrees.astype(float)
        if self.is_circle:
            return -(k**2)
        return -k * (k + self.n - 2)

    @cached_property
    def _zonal_norms(self) -> np.ndarray:
        x, w = self._zonal_rule
        a = (self.n - 2) / 2.0
        vals = np.array([eval_gegenbauer(l, a, x) for l in self.degrees])
        return np.sqrt(np.sum(w * vals**2, axis=1))

    def _zonal_basis(self, theta: np.ndarray) -> np.ndarray:
        a = (self.n - 2) / 2.0
        x = np.cos(np.asarray(theta, dtype=float))
        vals = np.array([eval_gegenbauer(l, a, x) for l in self.degrees])
        return (vals / self._zonal_norms[:, None]).T

    @cached_property
    def _zonal_Q(self) -> np.ndarray:
        return self._zonal_basis(self.theta)

    def forward(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.is_circle:
            return np.fft.rfft(values, axis=-1)
        _, w = self._zonal_rule
        return (values * w) @ self._zonal_Q

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        if self.is_circle:
            return np.fft.irfft(coeffs, n=self.node_count, axis=-1)
        return np.asarray(coeffs) @ self._zonal_Q.T

    def evaluate(self, coeffs: np.ndarray, theta) -> np.ndarray:
        """Evaluate the band-limited interpolant at arbitrary angles."""
        theta = np.asarray(theta, dtype=float)
        if self.is_circle:
            N = self.node_count
            k = self.degrees
            wk = np.full(k.shape, 2.0)
            wk[0] = 1.0
            if N % 2 == 0:
                wk[-1] = 1.0
            phase = np.exp(1j * np.multiply.outer(theta, k))
            return (phase * (wk * coeffs)).real.sum(axis=-1) / N
        return self._zonal_basis(theta.ravel()).dot(coeffs).reshape(theta.shape)

    @cached_property
    def lb_matrix(self) -> np.ndarray:
        """Dense spectral Laplace-Beltrami matrix acting on nodal values."""
        N = self.node_count
        if self.is_circle:
            eye = np.eye(N)
            L = np.fft.irfft(self.eigenvalues[:, None] * np.fft.rfft(eye, axis=0), n=N, axis=0)
        else:
            _, w = self._zonal_rule
            Q = self._zonal_Q
            L = (Q * self.eigenvalues) @ (Q.T * w)
        # round-off in the high modes leaks into row sums; constants must map to 0
        L[np.diag_indices(N)] -= L.sum(axis=1)
        return L

    @cached_property
    def fv_matrix(self) -> np.ndarray:
        """Second-order finite-volume Laplace-Beltrami matrix.

        Off-diagonal entries are nonnegative, so backward Euler steps built on
        it satisfy a discrete comparison principle.
        """
        N = self.node_count
        L = np.zeros((N, N))
        if N == 1:
            return L
        th = self.theta
        if self.is_circle:
            h = 2.0 * np.pi / N
            for j in range(N):
                L[j, j] = -2.0 / h**2
                L[j, (j + 1) % N] += 1.0 / h**2
                L[j, (j - 1) % N] += 1.0 / h**2
            return L
        p = self.n - 2
        faces = np.concatenate([[0.0], 0.5 * (th[1:] + th[:-1]), [np.pi]])
        # cell measure: integral of sin^p over each cell
        from scipy.integrate import quad

        vol = np.array(
            [quad(lambda s: np.sin(s) ** p, faces[j], faces[j + 1])[0] for j in range(N)]
        )
        for j in range(N - 1):
            g = np.sin(faces[j + 1]) ** p / (th[j + 1] - th[j])
            L[j, j] -= g / vol[j]
            L[j, j + 1] += g / vol[j]
            L[j + 1, j + 1] -= g / vol[j + 1]
            L[j + 1, j] += g / vol[j + 1]
        return L

    def dense_theta(self, factor: int = 4) -> np.ndarray:
        M = max(factor * self.node_count, 8)
        if self.is_circle:
            return 2.0 * np.pi * np.arange(M) / M
        return np.linspace(0.0, np.pi, M + 1)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


@dataclass(frozen=True, eq=False)
class AngularProfile:
    geometry: AngularGeometry
    values: np.ndarray
    projection_error: float = field(default=0.0)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float).copy()
        if v.shape != (self.geometry.node_count,):
            raise ValueError(
                f"profile has {v.shape} values, geometry expects {self.geometry.node_count}"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @cached_property
    def spectral_coeffs(self) -> np.ndarray:
        return self.geometry.forward(self.values)

    @property
    def theta(self) -> np.ndarray:
        return self.geometry.theta

    @property
    def is_positive(self) -> bool:
        return bool(np.all(self.values > 0))

    @property
    def is_constant(self) -> bool:
        return bool(np.ptp(self.values) <= 1e-14 * max(1.0, np.abs(self.values).max()))

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.is_constant:
            return np.full(theta.shape, self.values[0])
        return self.geometry.evaluate(self.spectral_coeffs, theta)

    def power(self, p: float) -> "AngularProfile":
        if np.any(self.values <= 0):
            raise ValueError("fractional powers need a positive profile")
        return AngularProfile(self.geometry, self.values**p)

    def with_values(self, values: np.ndarray) -> "AngularProfile":
        return AngularProfile(self.geometry, values)

    def integrate(self) -> float:
        return self.geometry.integrate(self.values)

    # -- constructors -----------------------------------------------------------
    @classmethod
    def constant(cls, geometry: AngularGeometry, c: float = 1.0) -> "AngularProfile":
        return cls(geometry, np.full(geometry.node_count, float(c)))

    @classmethod
    def from_function(
        cls, geometry: AngularGeometry, f: Callable[[np.ndarray], np.ndarray]
    ) -> "AngularProfile":
        """Sample ``f`` at the nodes and record how far the interpolant is from ``f``."""
        vals = np.broadcast_to(np.asarray(f(geometry.theta), dtype=float), geometry.theta.shape)
        prof = cls(geometry, vals)
        dense = geometry.dense_theta(8)
        exact = np.broadcast_to(np.asarray(f(dense), dtype=float), dense.shape)
        err = float(np.max(np.abs(prof(dense) - exact)) / max(1e-300, np.max(np.abs(exact))))
        return cls(geometry, vals, projection_error=err)

    @classmethod
    def from_csv(cls, path: str | Path, geometry: AngularGeometry) -> "AngularProfile":
        """Load ``(angle, value)`` rows and resample them onto the geometry's nodes."""
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    continue  # header line
        if not rows:
            raise ValueError(f"no (angle, value) rows in {path}")
        data = np.array(sorted(rows))
        th, v = data[:, 0], data[:, 1]
        if np.any(v <= 0):
            raise ValueError("profile values must be positive")
        if len(th) == geometry.node_count and np.allclose(th, geometry.theta, atol=1e-9):
            return cls(geometry, v)
        from scipy.interpolate import CubicSpline

        if geometry.is_circle:
            thp = np.concatenate([th, [th[0] + 2 * np.pi]])
            vp = np.concatenate([v, [v[0]]])
            spl = CubicSpline(thp, vp, bc_type="periodic")
            f = lambda t: spl(np.mod(t - th[0], 2 * np.pi) + th[0])  # noqa: E731
        else:
            spl = CubicSpline(th, v, bc_type="clamped")
            f = lambda t: spl(np.clip(t, th[0], th[-1]))  # noqa: E731
        return cls.from_function(geometry, f)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "value"])
            for t, v in zip(self.theta, self.values):
                w.writerow([repr(float(t)), repr(float(v))])


def builtin_profile(
    geometry: AngularGeometry, family: str, amplitude: float = 0.0, degree: int = 1, base: float = 1.0
) -> AngularProfile:
    """Named profile families: ``constant``, ``cosine`` and ``zonal_harmonic``."""
    if family == "constant":
        return AngularProfile.constant(geometry, base)
    if family == "cosine":
        return AngularProfile.from_function(
            geometry, lambda t: base + amplitude * np.cos(degree * t)
        )
    if family == "zonal_harmonic":
        if geometry.is_circle:
            return builtin_profile(geometry, "cosine", amplitude, degree, base)
        a = (geometry.n - 2) / 2.0
        c1 = eval_gegenbauer(degree, a, 1.0)
        return AngularProfile.from_function(
            geometry, lambda t: base + amplitude * eval_gegenbauer(degree, a, np.cos(t)) / c1
        )
    raise ValueError(f"unknown profile family {family!r}")


def laplace_beltrami(p: AngularProfile, geometry: AngularGeometry | None = None) -> AngularProfile:
    geom = p.geometry
    if geometry is not None and geometry != geom:
        raise ValueError("profile does not live on the requested geometry")
    return AngularProfile(geom, geom.lb_matrix @ p.values)


def sigma_profile(p: AngularProfile, params: ProblemParams) -> AngularProfile:
    """sigma = LB(alpha^m) + m lam (m lam - n + 2) alpha^m, nodewise."""
    if not p.is_positive:
        raise ValueError("sigma needs a positive profile")
    if p.geometry.n != params.n:
        raise ValueError("profile dimension differs from params.n")
    am = p.power(params.m)
    ml = params.m * params.lam
    return AngularProfile(p.geometry, laplace_beltrami(am).values + ml * (ml - params.n + 2) * am.values)


@dataclass(frozen=True)
class ProfileExtrema:
    alpha_min: float
    alpha_max: float
    sigma_max: float
    max_abs_lb: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def profile_extrema(p: AngularProfile, params: ProblemParams, oversample: int = 4) -> ProfileExtrema:
    """Extrema of alpha, sigma and |LB(alpha^m)| on an oversampled angular grid."""
    if oversample < 4:
        raise ValueError("oversampling factor must be at least 4")
    geom = p.geometry
    th = np.concatenate([geom.dense_theta(oversample), geom.theta])
    lb = laplace_beltrami(p.power(params.m))
    sig = sigma_profile(p, params)
    a = p(th)
    return ProfileExtrema(
        alpha_min=float(a.min()),
        alpha_max=float(a.max()),
        sigma_max=float(np.max(sig(th))),
        max_abs_lb=float(np.max(np.abs(lb(th)))) if not p.is_constant else 0.0,
    )
