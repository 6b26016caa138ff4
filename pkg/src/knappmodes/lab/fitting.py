"""Critical exponents and log-log power-law fits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonPositiveValue, QOutOfRange, TooFewPoints

MIN_POINTS = 5
MAX_RESIDUAL = 0.2


def critical_exponents(n, q):
    """``(q_c, mu(q))`` with ``q_c = 2(n+1)/(n-1)``.

    ``mu(q) = n(1/2 - 1/q) - 1/2`` above ``q_c`` and ``(n-1)/2 (1/2 - 1/q)``
    on ``2 < q <= q_c``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not q > 2:
        raise QOutOfRange(f"q = {q} must exceed 2")
    qc = 2 * (n + 1) / (n - 1)
    if q > qc:
        mu = n * (0.5 - 1 / q) - 0.5
    else:
        mu = (n - 1) / 2 * (0.5 - 1 / q)
    return qc, mu


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    intercept: float
    max_residual: float
    count: int

    @property
    def reportable(self):
        return self.count >= MIN_POINTS and self.max_residual < MAX_RESIDUAL


def fit_exponent(pairs):
    """Least-squares slope of ``log value`` against ``log abscissa``.

    Raises
    ------
    TooFewPoints
        Fewer than five pairs.
    NonPositiveValue
        Some abscissa or value is not positive.
    """
    arr = np.asarray(list(pairs), dtype=float)
    if arr.ndim != 2 or len(arr) < MIN_POINTS:
        raise TooFewPoints(f"need at least {MIN_POINTS} points, got {len(arr)}")
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise NonPositiveValue("abscissas and values must be positive and finite")
    lx, ly = np.log(arr[:, 0]), np.log(arr[:, 1])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return ScalingFit(exponent=float(slope), intercept=float(intercept),
                      max_residual=float(np.max(np.abs(resid))), count=len(arr))


def leave_one_out_spread(pairs):
    """Largest change of the exponent when any single pair is dropped."""
    pairs = list(pairs)
    base = fit_exponent(pairs).exponent
    return max(abs(fit_exponent(pairs[:i] + pairs[i + 1:]).exponent - base) for i in range(len(pairs)))


def evaluate_column(rows, expr):
    """Evaluate ``col``, ``col1 / col2`` or ``col1 * col2`` on each row."""
    expr = expr.replace(" ", "")
    for op in ("/", "*"):
        if op in expr:
            a, b = expr.split(op, 1)
            va, vb = evaluate_column(rows, a), evaluate_column(rows, b)
            return [x / y if op == "/" else x * y for x, y in zip(va, vb)]
    if expr == "lambda_delta":
        return [float(r["lambda"]) * float(r["delta"]) for r in rows]
    return [float(r[expr]) for r in rows]


def fit_columns(rows, x, y):
    xs, ys = evaluate_column(rows, x), evaluate_column(rows, y)
    return fit_exponent(list(zip(xs, ys)))

