"""Shared weighted least-squares helpers for slope extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFit


@dataclass
class LineFit:
    slope: float
    intercept: float
    slope_stderr: float
    intercept_stderr: float
    n: int


def weighted_line_fit(x, y, w=None) -> LineFit:
    """Weighted least squares y ~ intercept + slope * x.

    Slope uncertainty comes from the weighted residual variance scaled by the
    design covariance, so a noiseless input recovers the line exactly with
    zero quoted error.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 3:
        raise DegenerateFit(f"need at least 3 points, got {x.size}")
    w = np.ones_like(x) if w is None else np.asarray(w, dtype=float)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise DegenerateFit("weights must be positive and finite")
    sw = w.sum()
    xbar = (w * x).sum() / sw
    sxx = (w * (x - xbar) ** 2).sum()
    if sxx <= 0.0:
        raise DegenerateFit("x values coincide; slope is unidentifiable")
    slope = (w * (x - xbar) * y).sum() / sxx
    intercept = (w * y).sum() / sw - slope * xbar
    resid = y - intercept - slope * x
    dof = x.size - 2
    s2 = (w * resid**2).sum() / dof if dof > 0 else 0.0
    return LineFit(
        slope=float(slope),
        intercept=float(intercept),
        slope_stderr=float(np.sqrt(s2 / sxx)),
        intercept_stderr=float(np.sqrt(s2 * (1.0 / sw + xbar**2 / sxx))),
        n=int(x.size),
    )


def loglog_fit(points) -> LineFit:
    """Weighted least squares on (log x, log y) for positive points.

    points is an iterable of (x, y) or (x, y, weight) with x, y > 0.
    """
    xs, ys, ws = [], [], []
    for pt in points:
        x, y = pt[0], pt[1]
        w = pt[2] if len(pt) > 2 else 1.0
        if x <= 0 or y <= 0:
            raise DegenerateFit(f"log-log fit needs positive coordinates, got ({x}, {y})")
        xs.append(np.log(x))
        ys.append(np.log(y))
        ws.append(w)
    return weighted_line_fit(xs, ys, ws)
