"""Least-squares power-law fits shared by the slope diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .io import write_csv, write_json


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    xlabel: str = "t"
    ylabel: str = "norm"
    base: str = "e"

    def to_csv(self, path):
        write_csv(path, [self.xlabel, self.ylabel], zip(self.x.tolist(), self.y.tolist()))

    def to_json(self, path):
        write_json(path, {"slope": self.slope, "intercept": self.intercept,
                          "log_base": self.base, "n_points": int(len(self.x))})


def fit_loglog(x, y, min_points=3, base="e", xlabel="t", ylabel="norm"):
    """Slope of log y against log x. Base 2 logs on both axes when base == "2"."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < min_points:
        raise ValueError(f"degenerate fit: need >= {min_points} positive points, got {ok.sum()}")
    log = np.log2 if base == "2" else np.log
    slope, intercept = np.polyfit(log(x[ok]), log(y[ok]), 1)
    return SlopeFit(float(slope), float(intercept), x[ok], y[ok], xlabel, ylabel, base)


def fit_linear_in_level(j, y, min_points=3):
    """log2 slope of y against the integer level j."""
    j = np.asarray(j, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (y > 0) & np.isfinite(y)
    if ok.sum() < min_points:
        raise ValueError(f"degenerate fit: need >= {min_points} positive points, got {ok.sum()}")
    slope, intercept = np.polyfit(j[ok], np.log2(y[ok]), 1)
    return SlopeFit(float(slope), float(intercept), j[ok], y[ok], "j", "block_norm", "2")
