"""Parameter bundle, critical exponents and regime classification.

Everything here is pure and cheap; the other modules take a
:class:`ProblemParams` and call into these helpers for validation.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

__all__ = [
    "ProblemParams",
    "CriticalExponents",
    "A2Verdict",
    "Regime",
    "critical_exponents",
    "check_assumption_A2",
    "classify_singularity_regime",
    "critical_coefficient_A",
    "critical_lambda",
]

DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class ProblemParams:
    """Dimension, diffusion exponent and singularity exponents.

    ``lam`` is the leading singular exponent, ``nu`` the exponent of the
    first correction in ``u^m``, and ``xi0`` the singular point.
    """

    n: int
    m: float
    lam: float
    nu: float
    xi0: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"dimension n must be an integer >= 2, got {self.n}")
        if not 0.0 < self.m < 1.0:
            raise ValueError(f"diffusion exponent m must lie in (0, 1), got {self.m}")
        if self.lam <= 0 or self.nu <= 0:
            raise ValueError("singularity exponents lam and nu must be positive")
        xi0 = tuple(float(v) for v in self.xi0) if self.xi0 else (0.0,) * int(self.n)
        if len(xi0) != self.n:
            raise ValueError(f"xi0 must have {self.n} components, got {len(xi0)}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "xi0", xi0)

    @property
    def q(self) -> float:
        """Exponent m(lam - nu) shared by the subsolution and the Lp estimates."""
        return self.m * (self.lam - self.nu)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["xi0"] = list(self.xi0)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemParams":
        allowed = {"n", "m", "lam", "nu", "xi0"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown problem keys: {sorted(unknown)}")
        return cls(
            n=d["n"], m=d["m"], lam=d["lam"], nu=d["nu"], xi0=tuple(d.get("xi0", ()))
        )


@dataclass(frozen=True)
class CriticalExponents:
    n: int
    m_c: Fraction
    m_star: Fraction
    m_starstar: Fraction

    def as_floats(self) -> dict[str, float]:
        return {
            "m_c": float(self.m_c),
            "m_star": float(self.m_star),
            "m_starstar": float(self.m_starstar),
        }


@dataclass(frozen=True)
class A2Verdict:
    passed: bool
    margins: tuple[float, float, float]

    LABELS = ("lam - 2/(1-m)", "(1-m)lam - 2 - m(lam-nu)", "min(nu, lam-nu)")

    def failed_conditions(self) -> list[str]:
        return [lab for lab, mg in zip(self.LABELS, self.margins) if not mg > 0]


@dataclass(frozen=True)
class Regime:
    tag: str  # "super_critical" | "sub_critical" | "critical"
    gap: float  # lam - 2/(1-m)


def critical_exponents(n: int) -> CriticalExponents:
    """Exact m_c = (n-2)/n, m_* = (n-2)/(n-1) and m^* = (n-3)/(n-1) (0 for n=2)."""
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n}")
    n = int(n)
    m_c = Fraction(n - 2, n)
    m_star = Fraction(n - 2, n - 1)
    m_ss = Fraction(n - 3, n - 1) if n >= 3 else Fraction(0)
    return CriticalExponents(n, m_c, m_star, m_ss)


def critical_lambda(m: float) -> float:
    return 2.0 / (1.0 - m)


def check_assumption_A2(params: ProblemParams) -> A2Verdict:
    m, lam, nu = params.m, params.lam, params.nu
    margins = (
        lam - critical_lambda(m),
        (1.0 - m) * lam - 2.0 - m * (lam - nu),
        min(nu, lam - nu),
    )
    return A2Verdict(all(mg > 0 for mg in margins), margins)


def classify_singularity_regime(m: float, lam: float, tol: float = DEFAULT_TOL) -> Regime:
    gap = lam - critical_lambda(m)
    if gap > tol:
        return Regime("super_critical", gap)
    if gap < -tol:
        return Regime("sub_critical", gap)
    return Regime("critical", gap)


def critical_coefficient_A(n: int, m: float) -> float:
    """A = m lam (m lam - n + 2) evaluated at lam = 2/(1-m)."""
    if not 0.0 < m < 1.0:
        raise ValueError(f"m must lie in (0, 1), got {m}")
    ml = m * critical_lambda(m)
    return ml * (ml - n + 2)


def critical_coefficient_A_alt(n: int, m: float) -> float:
    # second printed form 2mn(m - m_c)/(1-m)^2, kept for cross-checking
    m_c = (n - 2) / n
    return 2.0 * m * n * (m - m_c) / (1.0 - m) ** 2


def exponent_table(ns: Sequence[int]) -> list[dict]:
    rows = []
    for n in ns:
        ce = critical_exponents(n)
        rows.append(
            {
                "n": n,
                "m_c": str(ce.m_c),
                "m_star": str(ce.m_star),
                "m_starstar": str(ce.m_starstar),
                "m_c_float": float(ce.m_c),
                "m_star_float": float(ce.m_star),
                "m_starstar_float": float(ce.m_starstar),
            }
        )
    return rows


def sphere_area(n: int) -> float:
    """Hypervolume |S^{n-1}| of the unit sphere in R^n."""
    from scipy.special import gamma

    return float(2.0 * np.pi ** (n / 2.0) / gamma(n / 2.0))
