"""Least-squares power-law fits on log-log axes."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MIN_POINTS = 4


class InsufficientPointsError(ValueError):
    """Fewer than MIN_POINTS points fall inside the fit window."""


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    n_points: int


def fit_slope(x, y, window: tuple[float, float] | None = None, min_points: int = MIN_POINTS) -> SlopeFit:
    """OLS of log y on log x using the points with lo <= y <= hi (and y > 0)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    lo, hi = window if window is not None else (0.0, np.inf)
    keep = (y > 0) & (y >= lo) & (y <= hi) & (x > 0)
    if keep.sum() < min_points:
        below = int(np.sum(y < lo))
        above = int(np.sum(y > hi))
        raise InsufficientPointsError(
            f"{int(keep.sum())} of {y.size} points inside window [{lo:g}, {hi:g}] "
            f"({below} below, {above} above); need at least {min_points}"
        )
    lx, ly = np.log(x[keep]), np.log(y[keep])
    n = lx.size
    xm = lx.mean()
    sxx = np.sum((lx - xm) ** 2)
    slope = float(np.sum((lx - xm) * (ly - ly.mean())) / sxx)
    intercept = float(ly.mean() - slope * xm)
    resid = ly - (intercept + slope * lx)
    stderr = float(np.sqrt(np.sum(resid**2) / (n - 2) / sxx)) if n > 2 else float("nan")
    return SlopeFit(slope, stderr, intercept, n)


def fit_csv(path, window: tuple[float, float] | None = None, x_col: str = "tau", y_col: str | None = None,
            group_col: str | None = "schedule") -> dict[str, SlopeFit]:
    """Fit each group of a sweep CSV; y defaults to E_res, falling back to P_ex_1."""
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InsufficientPointsError(f"{path} has no data rows")
    if y_col is None:
        y_col = next((c for c in ("E_res", "P_ex_1", "P_ex") if c in rows[0]), None)
        if y_col is None:
            raise ValueError(f"no metric column found in {path}; pass y_col")
    groups: dict[str, list[dict]] = {}
    for r in rows:
        key = "-".join(r[c] for c in (group_col, "mode", "regime") if c and c in r) or "all"
        groups.setdefault(key, []).append(r)
    return {k: fit_slope([float(r[x_col]) for r in g], [float(r[y_col]) for r in g], window)
            for k, g in groups.items()}


def parse_window(text: str) -> tuple[float, float]:
    lo, _, hi = text.partition(":")
    if not hi:
        raise ValueError(f"window must look like lo:hi, got {text!r}")
    return float(lo), float(hi)
