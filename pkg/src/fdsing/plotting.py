"""Standalone SVG figures for the CLI reports.

Output is deterministic: a fixed SVG hash salt and no date metadata, so
identical inputs give byte-identical files.
"""
from __future__ import annotations

import logging
import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

log = logging.getLogger(__name__)

__all__ = ["emit_plots", "KINDS"]

KINDS = ("lp", "weakform", "sandwich", "profile", "phase", "flow")

_RC = {
    "svg.hashsalt": "fdsing",
    "svg.fonttype": "none",
    "figure.figsize": (5.0, 3.6),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _lp(report: dict, out: Path, stem: str) -> list[Path]:
    e, v = np.asarray(report["epsilons"]), np.asarray(report["values"])
    fig, ax = plt.subplots()
    ax.loglog(e, np.abs(v), "o-", ms=3, label="I(eps)")
    ax.set_xlabel("eps")
    ax.set_ylabel("excised integral")
    ax.set_title(f"{report.get('classification', '')}, q = {report.get('exponent') or float('nan'):.4g}")
    ax.invert_xaxis()
    ax.legend()
    return [_save(fig, out / f"{stem}.svg")]


def _weakform(report: dict, out: Path, stem: str) -> list[Path]:
    e = np.asarray(report["epsilons"])
    tot = np.array([r["total"] for r in report["rows"]])
    fig, ax = plt.subplots()
    ax.semilogx(e, tot, "o-", ms=3, label="annulus total")
    lim = report["extrapolation"]["limit"]
    ax.axhline(lim, color="k", lw=0.8, ls="--", label="extrapolated")
    if report.get("target") is not None:
        ax.axhline(report["target"], color="C3", lw=0.8, ls=":", label="target")
    ax.set_xlabel("eps")
    ax.invert_xaxis()
    ax.legend()
    return [_save(fig, out / f"{stem}.svg")]


def _sandwich(report: dict, out: Path, stem: str) -> list[Path]:
    paths = []
    fig, ax = plt.subplots()
    t = np.asarray(report["times"])
    ax.semilogy(t, np.maximum(report["lower_violation"], 1e-18), label="below lower envelope")
    ax.semilogy(t, np.maximum(report["upper_violation"], 1e-18), label="above upper envelope")
    ax.axhline(report["tolerance"], color="k", lw=0.8, ls="--", label="tolerance")
    ax.set_xlabel("t")
    ax.set_ylabel("relative violation")
    ax.legend()
    paths.append(_save(fig, out / f"{stem}_margins.svg"))
    curves = report.get("curves")
    if curves:
        fig, ax = plt.subplots()
        r = np.asarray(curves["r"])
        ax.loglog(r, curves["lower"], label="lower envelope")
        ax.loglog(r, curves["solution"], label="solution")
        ax.loglog(r, curves["upper"], label="upper envelope")
        ax.set_xlabel("r")
        ax.set_title(f"theta = {curves['theta']:.3g}, t = {curves['t']:.3g}")
        ax.legend()
        paths.append(_save(fig, out / f"{stem}_bracket.svg"))
    return paths


def _profile(report: dict, out: Path, stem: str) -> list[Path]:
    fig, ax = plt.subplots()
    th = np.asarray(report["theta"])
    ax.plot(th, report["alpha"], label="alpha")
    ax.plot(th, report["alpha_hat"], "o", ms=3, label="fitted")
    ax.set_xlabel("theta")
    ax.legend()
    return [_save(fig, out / f"{stem}.svg")]


def _phase(report: dict, out: Path, stem: str) -> list[Path]:
    fig, ax = plt.subplots()
    for orb in report["orbits"]:
        ax.plot(orb["beta"], orb["v"], lw=0.8)
    if report.get("center") is not None:
        ax.plot([report["center"]], [0.0], "k+", ms=8)
    ax.set_xlabel("beta")
    ax.set_ylabel("v")
    return [_save(fig, out / f"{stem}.svg")]


def _flow(report: dict, out: Path, stem: str) -> list[Path]:
    fig, ax = plt.subplots()
    th = np.asarray(report["theta"])
    for t, vals in zip(report["times"], report["values"]):
        ax.plot(th, vals, lw=0.8, label=f"t={t:.3g}")
    ax.set_xlabel("theta")
    ax.set_ylabel("alpha")
    if len(report["times"]) <= 8:
        ax.legend()
    return [_save(fig, out / f"{stem}.svg")]


_DISPATCH = {
    "lp": _lp,
    "weakform": _weakform,
    "sandwich": _sandwich,
    "profile": _profile,
    "phase": _phase,
    "flow": _flow,
}


def emit_plots(report: dict, kind: str, out_dir, stem: str | None = None) -> list[Path]:
    """Write the SVG figures for one report; failures only warn and return []."""
    if kind not in _DISPATCH:
        raise ValueError(f"unknown plot kind {kind!r}")
    out = Path(out_dir)
    if kind in ("lp", "weakform") and not report.get("epsilons"):
        warnings.warn("empty epsilon schedule: nothing to plot", RuntimeWarning)
        return []
    try:
        with plt.rc_context(_RC):
            return _DISPATCH[kind](report, out, stem or kind)
    except Exception as exc:  # plotting must never sink a run
        warnings.warn(f"plot {kind!r} skipped: {exc}", RuntimeWarning)
        plt.close("all")
        return []


