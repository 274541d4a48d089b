"""Least-squares fits in transformed coordinates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData

MODELS = ("power_law", "log_growth", "geometric")
MIN_ROWS = 4


@dataclass(frozen=True)
class FitReport:
    """Result of :func:`fit`.

    ``params`` holds ``exponent``/``prefactor`` (power law ``y = A x^k``),
    ``slope``/``intercept`` (``y = c log x + b``) or ``rate``/``prefactor``
    (``y = A C^x``).  ``r2`` is computed in the transformed coordinates.
    """

    model: str
    params: dict
    r2: float
    rows: tuple

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.model == "power_law":
            return p["prefactor"] * x ** p["exponent"]
        if self.model == "log_growth":
            return p["slope"] * np.log(x) + p["intercept"]
        return p["prefactor"] * p["rate"] ** x


def _linear(u, v):
    A = np.vstack([u, np.ones_like(u)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, v, rcond=None)
    resid = v - (slope * u + icpt)
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    if ss_tot == 0:
        r2 = 1.0 if ss_res == 0 else 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return float(slope), float(icpt), r2


def fit(model: str, rows) -> FitReport:
    """Fit ``rows`` of ``(x, y)``.

    Raises
    ------
    InsufficientData
        With fewer than four rows.
    ValueError
        For an unknown model or non-positive data where logarithms are needed.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    rows = tuple((float(x), float(y)) for x, y in rows)
    if len(rows) < MIN_ROWS:
        raise InsufficientData(f"{model} fit needs at least {MIN_ROWS} rows, got {len(rows)}")
    x = np.array([r[0] for r in rows])
    y = np.array([r[1] for r in rows])
    if model == "power_law":
        if np.any(x <= 0) or np.any(y <= 0):
            raise ValueError("power-law fit needs positive data")
        k, b, r2 = _linear(np.log(x), np.log(y))
        params = {"exponent": k, "prefactor": float(np.exp(b))}
    elif model == "log_growth":
        if np.any(x <= 0):
            raise ValueError("log-growth fit needs positive x")
        c, b, r2 = _linear(np.log(x), y)
        params = {"slope": c, "intercept": b}
    else:
        if np.any(y <= 0):
            raise ValueError("geometric fit needs positive y")
        c, b, r2 = _linear(x, np.log(y))
        params = {"rate": float(np.exp(c)), "prefactor": float(np.exp(b))}
    return FitReport(model, params, r2, rows)
