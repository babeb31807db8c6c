"""Backward-Euler / Newton integrator for the singular equation in s = ln r.

The unknown ``w(s_i, theta_j)`` lives on a uniform grid in s times the
angular nodes.  In these variables

    w_t = e^{-2s} [ (w^m)_ss + (n-2) (w^m)_s + LB(w^m) ]

with the singularity excised at r_min and Dirichlet traces imposed at both
radial ends.  Each step solves ``w - dt L(w^m) = w_old + dt f`` by damped
Newton with a sparse LU factorization.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .angular import AngularGeometry, AngularProfile
from .envelopes import ClosedForm
from .regimes import ProblemParams

log = logging.getLogger(__name__)

__all__ = [
    "RadialGrid",
    "Field",
    "SolverConfig",
    "SolverError",
    "initialize",
    "advance",
    "simulate",
    "Trajectory",
    "SandwichReport",
    "fit_asymptotic_coefficient",
    "AsymptoticFit",
]


class SolverError(RuntimeError):
    """Newton or positivity failure that survived the retry policy."""

    def __init__(self, msg: str, diagnostics: dict | None = None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class RadialGrid:
    s_min: float
    s_max: float
    Ns: int
    geometry: AngularGeometry

    def __post_init__(self) -> None:
        if self.Ns < 3 or not self.s_max > self.s_min:
            raise ValueError("need Ns >= 3 and s_max > s_min")

    @classmethod
    def from_radii(cls, r_min: float, r_max: float, Ns: int, geometry: AngularGeometry) -> "RadialGrid":
        if r_min <= 0:
            raise ValueError("r_min must be positive: the singular point is excised")
        return cls(float(np.log(r_min)), float(np.log(r_max)), Ns, geometry)

    @property
    def s(self) -> np.ndarray:
        return np.linspace(self.s_min, self.s_max, self.Ns)

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.s)

    @property
    def ds(self) -> float:
        return (self.s_max - self.s_min) / (self.Ns - 1)

    @property
    def theta(self) -> np.ndarray:
        return self.geometry.theta

    @property
    def Nth(self) -> int:
        return self.geometry.node_count

    def mesh(self):
        return np.meshgrid(self.r, self.theta, indexing="ij")


@dataclass
class Field:
    grid: RadialGrid
    t: float
    values: np.ndarray  # shape (Ns, Ntheta)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.Ns, self.grid.Nth):
            raise ValueError("field values do not match the grid")
        if not np.all(self.values > 0):
            raise ValueError("field must be positive at every node")

    def copy(self) -> "Field":
        return Field(self.grid, self.t, self.values.copy())

    def to_csv(self, path) -> None:
        header = "r," + ",".join(f"theta={th:.12g}" for th in self.grid.theta)
        data = np.column_stack([self.grid.r, self.values])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


@dataclass
class SolverConfig:
    dt_initial: float = 1e-2
    t_end: float = 1.0
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    bc_mode: str = "pin_supersolution"  # | "pin_asymptotic" | "pin_field" | "neumann"
    sandwich_tolerance: float = 1e-3
    angular_scheme: str = "spectral"  # | "fv"
    dt_max: float = 5e-2
    dt_growth: float = 1.25
    max_halvings: int = 20
    snapshot_times: Sequence[float] = ()
    harness: bool = False  # drop the radial e^{-2s} and (n-2) terms, for conservation checks

    def __post_init__(self) -> None:
        if self.t_end < 0 or self.dt_initial <= 0 or self.newton_tol <= 0:
            raise ValueError("t_end >= 0 and positive dt_initial / newton_tol required")
        if self.bc_mode not in ("pin_supersolution", "pin_asymptotic", "pin_field", "neumann"):
            raise ValueError(f"unknown bc_mode {self.bc_mode!r}")
        if self.angular_scheme not in ("spectral", "fv"):
            raise ValueError(f"unknown angular_scheme {self.angular_scheme!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snapshot_times"] = list(self.snapshot_times)
        return d


# ---------------------------------------------------------------------------
# operator assembly


class _Operator:
    """Sparse linear operator L acting on w^m at all nodes (boundary rows included)."""

    def __init__(self, grid: RadialGrid, n: int, cfg: SolverConfig):
        Ns, Nt, ds = grid.Ns, grid.Nth, grid.ds
        s = grid.s
        if cfg.harness:
            weight = np.ones(Ns)
            k = 0.0
        else:
            weight = np.exp(-2.0 * s)
            k = float(n - 2)
        # flux form e^{-ns} d_s(e^{(n-2)s} d_s phi) with the face conductance
        # integrated exactly, so constants and r^{2-n} are discrete steady states
        if k == 0.0:
            up = 1.0 / ds**2
        else:
            up = k / (ds * -np.expm1(-k * ds))
        dn = up * np.exp(-k * ds)
        main = np.full(Ns, -(up + dn))
        lower = np.full(Ns - 1, dn)
        upper = np.full(Ns - 1, up)
        if cfg.bc_mode == "neumann":
            main[0] = -up
            main[-1] = -dn
        radial = sp.diags([lower, main, upper], [-1, 0, 1], shape=(Ns, Ns))
        radial = sp.diags(weight) @ radial
        ang = grid.geometry.lb_matrix if cfg.angular_scheme == "spectral" else grid.geometry.fv_matrix
        self.L = (sp.kron(radial, sp.identity(Nt)) + sp.kron(sp.diags(weight), sp.csr_matrix(ang))).tocsr()
        self.Ns, self.Nt = Ns, Nt
        self.dirichlet = cfg.bc_mode != "neumann"

    def apply(self, phi: np.ndarray) -> np.ndarray:
        return (self.L @ phi.ravel()).reshape(self.Ns, self.Nt)


_OP_CACHE: dict = {}


def _operator(grid: RadialGrid, n: int, cfg: SolverConfig) -> _Operator:
    key = (grid, n, cfg.bc_mode == "neumann", cfg.angular_scheme, cfg.harness)
    if key not in _OP_CACHE:
        if len(_OP_CACHE) > 8:
            _OP_CACHE.clear()
        _OP_CACHE[key] = _Operator(grid, n, cfg)
    return _OP_CACHE[key]


# ---------------------------------------------------------------------------
# boundary traces


class BoundaryTrace:
    """Dirichlet data at the two radial ends as a function of time."""

    def __init__(self, fn: Callable[[np.ndarray, np.ndarray, float], np.ndarray]):
        self.fn = fn

    def __call__(self, grid: RadialGrid, t: float) -> tuple[np.ndarray, np.ndarray]:
        th = grid.theta
        r = grid.r
        return (
            np.asarray(self.fn(np.full(th.shape, r[0]), th, t), dtype=float),
            np.asarray(self.fn(np.full(th.shape, r[-1]), th, t), dtype=float),
        )


def supersolution_trace(sup_env: ClosedForm) -> BoundaryTrace:
    return BoundaryTrace(lambda r, th, t: sup_env(r, th, t))


def asymptotic_trace(params: ProblemParams, alpha: AngularProfile, a: Callable) -> BoundaryTrace:
    """(alpha^m r^{-m lam} + a(t) r^{-m nu})^{1/m}."""
    m = params.m

    def fn(r, th, t):
        return (alpha(th) ** m * r ** (-m * params.lam) + a(t) * r ** (-m * params.nu)) ** (1.0 / m)

    return BoundaryTrace(fn)


# ---------------------------------------------------------------------------
# initialisation


@dataclass
class InitialFit:
    exponent: float  # fitted decay exponent of u0 at the smallest radii
    radii: tuple[float, float]


def initialize(u0: Callable, grid: RadialGrid, m: float | None = None, fit_nodes: int = 8) -> tuple[Field, InitialFit]:
    """Sample u0 at the nodes and fit its power law near the excised point.

    With ``m`` given the fit is on ``u0^m`` (so the slope estimates m*lam);
    otherwise on ``u0`` itself.
    """
    R, TH = grid.mesh()
    vals = np.asarray(u0(R, TH), dtype=float)
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise ValueError("initial datum must be positive and finite at every node")
    k = min(fit_nodes, grid.Ns)
    y = np.log(vals[:k] ** (m if m else 1.0))
    x = np.log(grid.r[:k])
    slopes = np.polyfit(x, y, 1)[0]
    exponent = float(-np.mean(np.atleast_1d(slopes)))
    return Field(grid, 0.0, vals), InitialFit(exponent, (float(grid.r[0]), float(grid.r[k - 1])))


# ---------------------------------------------------------------------------
# one step


@dataclass
class StepInfo:
    dt: float
    newton_iters: int
    halvings: int


def _newton_solve(
    w_old: np.ndarray,
    dt: float,
    op: _Operator,
    m: float,
    bc: tuple[np.ndarray, np.ndarray] | None,
    source: np.ndarray | None,
    cfg: SolverConfig,
) -> tuple[np.ndarray, int]:
    Ns, Nt = w_old.shape
    N = Ns * Nt
    rhs = w_old + (dt * source if source is not None else 0.0)
    w = w_old.copy()
    if bc is not None:
        w[0], w[-1] = bc
    interior = np.ones((Ns, Nt), dtype=bool)
    if bc is not None:
        interior[0] = interior[-1] = False
    mask = interior.ravel()
    eye = sp.identity(N, format="csr")
    # rows of Dirichlet nodes are replaced by identity
    keep = sp.diags(mask.astype(float))
    fixed = sp.diags((~mask).astype(float))
    Lk = keep @ op.L
    for it in range(1, cfg.newton_max_iter + 1):
        phi = w**m
        F = w - rhs - dt * op.apply(phi)
        F[~interior] = 0.0
        dphi = m * w ** (m - 1.0)
        J = eye - dt * (Lk @ sp.diags(dphi.ravel()))
        J = (keep @ J + fixed).tocsc()
        try:
            delta = splu(J).solve(-F.ravel()).reshape(Ns, Nt)
        except RuntimeError as exc:  # singular factor
            raise _StepFailure(f"linear solve failed: {exc}") from exc
        if not np.all(np.isfinite(delta)):
            raise _StepFailure("non-finite Newton update")
        # damping keeps every node above 10% of its current value
        ratio = delta / w
        worst = ratio.min()
        lam = 1.0 if worst > -0.9 else 0.9 / -worst
        w = w + lam * delta
        if np.any(w <= 0):
            raise _StepFailure("positivity lost in Newton update")
        if lam == 1.0 and np.max(np.abs(ratio)) < cfg.newton_tol:
            return w, it
    raise _StepFailure(f"Newton did not converge in {cfg.newton_max_iter} iterations")


class _StepFailure(RuntimeError):
    pass


def advance(
    field: Field,
    dt: float,
    config: SolverConfig,
    n: int,
    m: float,
    trace: BoundaryTrace | None = None,
    source: Callable | None = None,
) -> tuple[Field, StepInfo]:
    """One backward-Euler step (retried with halved dt on failure).

    If a halving is needed the step is completed as several smaller
    sub-steps, so the returned field is always at ``field.t + dt``.
    ``source(R, TH, t)`` adds a forcing term, used for manufactured solutions.
    """
    grid = field.grid
    op = _operator(grid, n, config)
    if config.bc_mode in ("pin_supersolution", "pin_asymptotic") and trace is None:
        raise ValueError("Dirichlet bc_mode needs a boundary trace")
    R, TH = grid.mesh()
    t0 = field.t
    t_target = t0 + dt
    w = field.values
    t = t0
    h = dt
    halvings = 0
    iters = 0
    while t < t_target - 1e-14 * max(1.0, abs(t_target)):
        h = min(h, t_target - t)
        tn = t + h
        if config.bc_mode == "neumann":
            bc = None
        elif config.bc_mode == "pin_field":
            bc = (field.values[0], field.values[-1])
        else:
            bc = trace(grid, tn)
        f = np.asarray(source(R, TH, tn)) if source is not None else None
        try:
            w_new, k = _newton_solve(w, h, op, m, bc, f, config)
        except _StepFailure as exc:
            halvings += 1
            if halvings > config.max_halvings:
                raise SolverError(
                    f"step failed after {config.max_halvings} halvings: {exc}",
                    {"t": t, "dt": h, "reason": str(exc)},
                ) from exc
            h *= 0.5
            continue
        w, t = w_new, tn
        iters += k
    return Field(grid, t_target, w), StepInfo(dt, iters, halvings)


# ---------------------------------------------------------------------------
# full simulation


@dataclass
class SandwichReport:
    times: list = field(default_factory=list)
    lower_violation: list = field(default_factory=list)  # max (w- - w)_+ / w
    upper_violation: list = field(default_factory=list)  # max (w - w+)_+ / w
    max_violation: float = 0.0
    tolerance: float = 1e-3
    passed: bool = True

    def record(self, t: float, w: np.ndarray, lo: np.ndarray | None, hi: np.ndarray | None) -> float:
        lv = float(np.max(np.maximum(lo - w, 0.0) / w)) if lo is not None else 0.0
        uv = float(np.max(np.maximum(w - hi, 0.0) / w)) if hi is not None else 0.0
        self.times.append(float(t))
        self.lower_violation.append(lv)
        self.upper_violation.append(uv)
        worst = max(lv, uv)
        self.max_violation = max(self.max_violation, worst)
        self.passed = self.max_violation < self.tolerance
        return worst

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trajectory:
    grid: RadialGrid
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # list of (t, values)
    steps: list = field(default_factory=list)

    @property
    def final(self) -> Field:
        t, v = self.snapshots[-1]
        return Field(self.grid, t, v)

    def field_at(self, i: int) -> Field:
        t, v = self.snapshots[i]
        return Field(self.grid, t, v)

    def metadata(self) -> dict:
        g = self.grid
        return {
            "s_min": g.s_min,
            "s_max": g.s_max,
            "Ns": g.Ns,
            "n_theta": g.Nth,
            "angular_mode": g.geometry.mode,
            "snapshot_times": [t for t, _ in self.snapshots],
            "n_steps": len(self.steps),
            "step_dts": [s.dt for s in self.steps],
        }


def simulate(
    u0: Callable | Field,
    grid: RadialGrid,
    params: ProblemParams,
    config: SolverConfig,
    upper: ClosedForm | None = None,
    lower: ClosedForm | None = None,
    trace: BoundaryTrace | None = None,
    store_every_step: bool = False,
) -> tuple[Trajectory, SandwichReport]:
    """Integrate to ``config.t_end`` and monitor the sandwich ``lower <= w <= upper``.

    With ``bc_mode = pin_supersolution`` the traces come from ``upper``.
    Aborts with :class:`SolverError` if the relative violation stays above
    ``config.sandwich_tolerance`` for three consecutive steps.
    """
    n, m = params.n, params.m
    field = u0 if isinstance(u0, Field) else initialize(u0, grid)[0]
    if trace is None and config.bc_mode == "pin_supersolution":
        if upper is None:
            raise ValueError("pin_supersolution needs the upper envelope")
        trace = supersolution_trace(upper)
    R, TH = grid.mesh()
    report = SandwichReport(tolerance=config.sandwich_tolerance)

    def envelopes(t):
        lo = lower(R, TH, t) if lower is not None else None
        hi = upper(R, TH, t) if upper is not None else None
        return lo, hi

    traj = Trajectory(grid)
    traj.snapshots.append((field.t, field.values.copy()))
    report.record(field.t, field.values, *envelopes(field.t))
    snaps = sorted(float(s) for s in config.snapshot_times if 0 < s <= config.t_end)
    dt = config.dt_initial
    bad = 0
    while field.t < config.t_end - 1e-12:
        target = config.t_end
        nxt = [s for s in snaps if s > field.t + 1e-12]
        if nxt:
            target = min(target, nxt[0])
        h = min(dt, target - field.t)
        field, info = advance(field, h, config, n, m, trace)
        traj.steps.append(info)
        worst = report.record(field.t, field.values, *envelopes(field.t))
        bad = bad + 1 if worst >= config.sandwich_tolerance else 0
        if bad >= 3:
            raise SolverError(
                "sandwich violated persistently",
                {"t": field.t, "violation": worst, "report": report.to_dict()},
            )
        hit_snap = bool(nxt) and abs(field.t - nxt[0]) < 1e-12
        if store_every_step or hit_snap:
            traj.snapshots.append((field.t, field.values.copy()))
        if info.halvings == 0:
            dt = min(dt * config.dt_growth, config.dt_max)
        else:
            dt = max(h / 2**info.halvings, 1e-12)
    if traj.snapshots[-1][0] < field.t - 1e-12 or len(traj.snapshots) == 1 and field.t > 0:
        traj.snapshots.append((field.t, field.values.copy()))
    return traj, report


# ---------------------------------------------------------------------------
# asymptotic fit


@dataclass
class AsymptoticFit:
    alpha_hat: AngularProfile
    remainder_exponent: float
    remainder_exponents: np.ndarray
    coefficients: np.ndarray  # (Ntheta, 3): c1 (r^{-m lam}), c2 (r^{-m nu}), c0 (constant)
    condition_number: float
    ill_conditioned: bool


def fit_asymptotic_coefficient(
    field: Field,
    params: ProblemParams,
    window: tuple[int, int] | None = None,
) -> AsymptoticFit:
    """Per-angle least squares of w^m on r^{-m lam}, r^{-m nu} and a constant.

    alpha_hat = c1^{1/m}; the remainder exponent is the log-log slope of
    w^m - c1 r^{-m lam} - c0.
    """
    grid = field.grid
    if window is None:
        # skip the few nodes next to the pinned inner trace
        lo = min(max(5, grid.Ns // 32), grid.Ns - 6)
        window = (lo, max(lo + 6, grid.Ns // 2))
    lo, hi = window
    if hi - lo < 6:
        raise ValueError("asymptotic fit window needs at least 6 radial nodes")
    m = params.m
    r = grid.r[lo:hi]
    phi = field.values[lo:hi] ** m
    X = np.column_stack([r ** (-m * params.lam), r ** (-m * params.nu), np.ones_like(r)])
    scale = np.abs(X).max(axis=0)
    Xs = X / scale
    cond = float(np.linalg.cond(Xs))
    coef, *_ = np.linalg.lstsq(Xs, phi, rcond=None)
    coef = (coef / scale[:, None]).T  # (Ntheta, 3)
    c1 = coef[:, 0]
    if np.any(c1 <= 0):
        raise ValueError("fitted leading coefficient is not positive")
    alpha_hat = AngularProfile(grid.geometry, c1 ** (1.0 / m))
    rem = phi - np.outer(X[:, 0], c1) - coef[:, 2][None, :]
    slopes = np.empty(grid.Nth)
    lr = np.log(r)
    for j in range(grid.Nth):
        slopes[j] = np.polyfit(lr, np.log(np.abs(rem[:, j])), 1)[0]
    return AsymptoticFit(
        alpha_hat=alpha_hat,
        remainder_exponent=float(np.median(slopes)),
        remainder_exponents=slopes,
        coefficients=coef,
        condition_number=cond,
        ill_conditioned=cond > 1e12,
    )


# ---------------------------------------------------------------------------
# manufactured solution


@dataclass
class ConvergenceStudy:
    Ns: list
    errors: list
    orders: list

    @property
    def observed_order(self) -> float:
        return float(self.orders[-1])

    def to_dict(self) -> dict:
        return asdict(self)


def _manufactured(n: int, m: float, geometry: AngularGeometry):
    """w = (1+t) g(s, theta), g = 2 + sin(s) (1 + 0.3 Y(theta)); linear in t so
    backward Euler has no temporal error and only the spatial order is seen."""
    th = geometry.theta
    Y = np.cos(th)

    def g(s):
        return 2.0 + np.sin(s)[:, None] * (1.0 + 0.3 * Y)[None, :]

    def w(s, t):
        return (1.0 + t) * g(s)

    def source(s, t):
        G = g(s)
        ang = (1.0 + 0.3 * Y)[None, :]
        gs = np.cos(s)[:, None] * ang
        gss = -np.sin(s)[:, None] * ang
        c = (1.0 + t) ** m
        phis = c * m * G ** (m - 1) * gs
        phiss = c * (m * (m - 1) * G ** (m - 2) * gs**2 + m * G ** (m - 1) * gss)
        # angular part: LB(g^m) computed spectrally, exact to round-off for this resolution
        lb = c * (geometry.lb_matrix @ (G**m).T).T
        return G - np.exp(-2.0 * s)[:, None] * (phiss + (n - 2) * phis + lb)

    return w, source


def manufactured_convergence(
    n: int = 2,
    m: float = 0.5,
    Ns_list: Sequence[int] = (17, 33, 65, 129),
    n_theta: int = 16,
    t_end: float = 0.2,
    dt: float = 0.05,
    s_range: tuple[float, float] = (0.0, 2.0),
) -> ConvergenceStudy:
    """Refinement study in ds against a forced exact solution; returns max-norm errors."""
    geometry = AngularGeometry(n, n_theta)
    w_exact, src = _manufactured(n, m, geometry)
    errors = []
    cfg = SolverConfig(dt_initial=dt, t_end=t_end, bc_mode="pin_asymptotic", newton_tol=1e-13)
    for Ns in Ns_list:
        grid = RadialGrid(s_range[0], s_range[1], Ns, geometry)
        s = grid.s
        ends = s[[0, -1]]

        def exact_ends(r, th, t, ends=ends):
            inner = np.isclose(np.log(r), ends[0])
            vals = w_exact(ends, t)
            return np.where(inner, vals[0], vals[1])

        trace = BoundaryTrace(exact_ends)
        field = Field(grid, 0.0, w_exact(s, 0.0))
        t = 0.0
        while t < t_end - 1e-12:
            field, _ = advance(field, dt, cfg, n, m, trace, source=lambda R, TH, tt, s=s: src(s, tt))
            t = field.t
        errors.append(float(np.max(np.abs(field.values - w_exact(s, t)))))
    orders = [float("nan")] + [
        float(np.log(errors[i - 1] / errors[i]) / np.log((Ns_list[i] - 1) / (Ns_list[i - 1] - 1)))
        for i in range(1, len(errors))
    ]
    return ConvergenceStudy(list(Ns_list), errors, orders)
