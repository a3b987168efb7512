"""Beta-posterior probability kernels.

Every toxicity model in this package is beta-binomial: when ``n``
patients have been treated at a dose and ``y`` of them had a
dose-limiting toxicity (DLT), the dose's toxicity probability carries a
Beta(y + 1, n - y + 1) posterior under a Uniform(0, 1) prior. The
functions below compute interval and tail probabilities of that
posterior. All of them are pure and thread-safe.

Parameters here are small integers plus one, so the standard continued
fraction evaluation used by :func:`scipy.special.betainc` is accurate to
well below 1e-12 absolute error; counts up to about 1e6 are supported.
"""

from __future__ import annotations

from typing import NamedTuple

from scipy.special import betainc as _betainc


class DoseData(NamedTuple):
    """Observed tally at one dose: patients treated and DLTs seen."""

    n: int
    y: int


def _as_dose_data(data) -> DoseData:
    n, y = data
    if n < 0 or y < 0 or y > n:
        raise ValueError(f"invalid dose tally (n={n}, y={y}): need 0 <= y <= n")
    return DoseData(int(n), int(y))


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """CDF of the Beta(a, b) distribution at x, i.e. I_x(a, b).

    Raises ValueError for x outside [0, 1] or non-positive a, b.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if a <= 0.0 or b <= 0.0:
        raise ValueError(f"shape parameters must be positive, got a={a}, b={b}")
    return float(_betainc(a, b, x))


def posterior_interval_prob(lo: float, hi: float, data) -> float:
    """Pr(p in (lo, hi) | data) under the Beta(y + 1, n - y + 1) posterior."""
    if lo >= hi:
        raise ValueError(f"empty interval: lo={lo} >= hi={hi}")
    n, y = _as_dose_data(data)
    a, b = y + 1.0, n - y + 1.0
    return float(
        regularized_incomplete_beta(hi, a, b) - regularized_incomplete_beta(lo, a, b)
    )


def posterior_exceed_prob(phi: float, data) -> float:
    """Pr(p > phi | data) under the Beta(y + 1, n - y + 1) posterior.

    This is the tail mass used by the overdose-control (elimination)
    rule. phi must lie strictly inside (0, 1).
    """
    if not 0.0 < phi < 1.0:
        raise ValueError(f"phi={phi} outside (0, 1)")
    n, y = _as_dose_data(data)
    return 1.0 - float(_betainc(y + 1.0, n - y + 1.0, phi))
