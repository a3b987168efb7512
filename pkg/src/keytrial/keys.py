"""Key partition, dose-transition decisions and pre-tabulated boundaries.

The keyboard design covers (0, 1) with equal-width toxicity intervals
("keys") around a target key (phi - eps1, phi + eps2). After each cohort
it finds the key carrying the most posterior mass at the current dose
and escalates, retains, or de-escalates depending on whether that
strongest key sits below, on, or above the target key. Because the rule
only looks at the local tally (n, y), it can be tabulated up front as a
pair of DLT boundaries per n, which is what :class:`DesignTables` does
for the trial engine.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import betainc as _betainc

from .betaprob import _as_dose_data, posterior_exceed_prob

# Key probabilities within this relative distance of the maximum are
# treated as tied; ties are resolved toward the target key and, between
# equidistant keys, toward the higher-toxicity side so a tie can never
# cause an escalation. Relative, so the comparison survives tallies
# whose posterior mass makes every key probability tiny.
_TIE_REL = 1e-9


class Decision(Enum):
    ESCALATE = "escalate"
    RETAIN = "retain"
    DEESCALATE = "deescalate"


@dataclass(frozen=True)
class KeyPartition:
    """Equal-width keys spanning (0, 1) around the target key.

    edges[i] and edges[i+1] bound key i; edges[target_index] is the
    lower end of the target key. Residual stubs of width less than
    eps1 + eps2 at the two ends of (0, 1) are not keys and carry no
    weight in the strongest-key search.
    """

    phi: float
    eps1: float
    eps2: float
    edges: tuple[float, ...]
    target_index: int

    @property
    def width(self) -> float:
        return self.eps1 + self.eps2

    @property
    def n_keys(self) -> int:
        return len(self.edges) - 1

    @property
    def keys(self) -> list[tuple[float, float]]:
        return list(zip(self.edges[:-1], self.edges[1:]))

    @property
    def target_key(self) -> tuple[float, float]:
        return self.edges[self.target_index], self.edges[self.target_index + 1]


def build_keys(phi: float, eps1: float, eps2: float) -> KeyPartition:
    """Tile (0, 1) with keys of width eps1 + eps2 around the target key.

    Keys are added on both sides of (phi - eps1, phi + eps2) for as long
    as a full-width key still fits inside [0, 1]; narrower residual ends
    are dropped. Raises ValueError when the target key itself does not
    sit strictly inside (0, 1).
    """
    if not 0.0 < phi < 1.0:
        raise ValueError(f"phi={phi} outside (0, 1)")
    if eps1 <= 0.0 or eps2 <= 0.0:
        raise ValueError(f"eps1={eps1} and eps2={eps2} must be positive")
    lo, hi = phi - eps1, phi + eps2
    if lo <= 0.0 or hi >= 1.0:
        raise ValueError(
            f"target key ({lo}, {hi}) must lie strictly inside (0, 1)"
        )
    width = eps1 + eps2
    # 1e-9 absorbs float noise when the outermost key lands exactly on 0 or 1.
    n_left = int(math.floor(lo / width + 1e-9))
    n_right = int(math.floor((1.0 - hi) / width + 1e-9))
    edges = [lo + (i - n_left) * width for i in range(n_left + n_right + 2)]
    edges[0] = max(edges[0], 0.0)
    edges[-1] = min(edges[-1], 1.0)
    return KeyPartition(phi, eps1, eps2, tuple(edges), n_left)


def _interval_probs(n: int, y, edges) -> np.ndarray:
    """Posterior mass of each interval between consecutive edges.

    y may be a scalar or an array; rows of the result follow y. Each
    interval is evaluated from whichever posterior tail is smaller, so
    intervals far from the bulk of the mass keep small relative error
    instead of cancelling to noise.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    a = y[:, None] + 1.0
    b = n - y[:, None] + 1.0
    e = np.asarray(edges, dtype=float)[None, :]
    cdf = _betainc(a, b, e)
    sf = _betainc(b, a, 1.0 - e)  # upper-tail mass at each edge
    from_below = cdf[:, 1:] - cdf[:, :-1]
    from_above = sf[:, :-1] - sf[:, 1:]
    probs = np.where(cdf[:, :-1] > 0.5, from_above, from_below)
    return np.maximum(probs, 0.0)


def _tie_rank(n_keys: int, target_index: int) -> np.ndarray:
    """Preference rank of each key for breaking ties (lower wins)."""
    idx = np.arange(n_keys)
    order = np.lexsort((-idx, np.abs(idx - target_index)))
    rank = np.empty(n_keys, dtype=int)
    rank[order] = np.arange(n_keys)
    return rank


def _pick_strongest(probs: np.ndarray, target_index: int) -> np.ndarray:
    """Row-wise argmax with the tie rule; probs has shape (m, K)."""
    rank = _tie_rank(probs.shape[1], target_index)
    mx = probs.max(axis=1, keepdims=True)
    tied = probs >= mx * (1.0 - _TIE_REL)
    ranked = np.where(tied, rank[None, :], probs.shape[1] + 1)
    return np.argmin(ranked, axis=1)


def _strongest_rows(n: int, y, edges, target_index: int) -> np.ndarray:
    """Strongest-key indices for a batch of y values at one n.

    When every key probability underflows to zero the posterior sits
    entirely in a residual end, so the choice falls back to comparing
    the posterior mean against the outermost key edges.
    """
    y = np.atleast_1d(np.asarray(y))
    probs = _interval_probs(n, y, edges)
    chosen = _pick_strongest(probs, target_index)
    dead = probs.max(axis=1) == 0.0
    if np.any(dead):
        mean = (y[dead] + 1.0) / (n + 2.0)
        below = mean < edges[0]
        above = mean > edges[-1]
        fallback = np.full(mean.shape, target_index, dtype=chosen.dtype)
        fallback[below] = 0
        fallback[above] = len(edges) - 2
        chosen[dead] = fallback
    return chosen


def strongest_key(data, partition: KeyPartition) -> int:
    """Index of the key with the largest posterior probability.

    Exact ties go to the key nearest the target and, between two
    equidistant keys, to the higher-toxicity one; with no data at all
    every key ties and the target key wins.
    """
    n, y = _as_dose_data(data)
    return int(_strongest_rows(n, y, partition.edges, partition.target_index)[0])


def _to_decision(chosen: int, target_index: int) -> Decision:
    if chosen < target_index:
        return Decision.ESCALATE
    if chosen > target_index:
        return Decision.DEESCALATE
    return Decision.RETAIN


def decide(data, partition: KeyPartition) -> Decision:
    """Escalate, retain, or de-escalate from the tally at the current dose."""
    return _to_decision(strongest_key(data, partition), partition.target_index)


def decide_three_key(data, phi: float, eps1: float, eps2: float) -> Decision:
    """Equivalent rule that compares only the target key and its neighbours.

    Valid when both neighbour keys fit inside (0, 1), i.e.
    phi - 2*eps1 - eps2 > 0 and phi + eps1 + 2*eps2 < 1; raises
    ValueError otherwise. Uses the same tie resolution as
    :func:`strongest_key`.
    """
    k1_lo = phi - 2.0 * eps1 - eps2
    k2_hi = phi + eps1 + 2.0 * eps2
    if k1_lo <= 0.0 or k2_hi >= 1.0:
        raise ValueError(
            f"three-key rule needs phi-2*eps1-eps2 > 0 and phi+eps1+2*eps2 < 1, "
            f"got ({k1_lo}, {k2_hi})"
        )
    n, y = _as_dose_data(data)
    edges = (k1_lo, phi - eps1, phi + eps2, k2_hi)
    return _to_decision(int(_strongest_rows(n, y, edges, 1)[0]), 1)


def should_eliminate(data, phi: float, c: float) -> bool:
    """True when Pr(p > phi | data) >= c, flagging the dose as overly toxic."""
    if not 0.0 < c < 1.0:
        raise ValueError(f"cutoff c={c} outside (0, 1)")
    return posterior_exceed_prob(phi, data) >= c


# ---------------------------------------------------------------------------
# Pre-tabulated boundaries
# ---------------------------------------------------------------------------

# "never escalate" is encoded as -1 and "never de-escalate" as n + 1 so
# each row stays a total order on y.
NEVER_ESCALATE = -1


@dataclass(frozen=True)
class DecisionTable:
    """Escalation/de-escalation DLT boundaries for n = 1..n_max."""

    phi: float
    eps1: float
    eps2: float
    n_max: int
    escalate_if_at_most: tuple[int, ...]
    deescalate_if_at_least: tuple[int, ...]

    def row(self, n: int) -> tuple[int, int]:
        if not 1 <= n <= self.n_max:
            raise ValueError(f"n={n} outside 1..{self.n_max}")
        return self.escalate_if_at_most[n - 1], self.deescalate_if_at_least[n - 1]

    def rows(self) -> list[tuple[int, int, int]]:
        return [
            (n, e, d)
            for n, (e, d) in enumerate(
                zip(self.escalate_if_at_most, self.deescalate_if_at_least), start=1
            )
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["n", "escalate_le", "deescalate_ge"])
        writer.writerows(self.rows())
        return buf.getvalue()

    def to_json_dict(self) -> dict:
        return {
            "phi": self.phi,
            "eps1": self.eps1,
            "eps2": self.eps2,
            "n_max": self.n_max,
            "rows": [
                {"n": n, "escalate_le": e, "deescalate_ge": d}
                for n, e, d in self.rows()
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    def to_markdown(self) -> str:
        lines = ["| n | escalate if DLTs <= | de-escalate if DLTs >= |",
                 "|---|---------------------|-------------------------|"]
        for n, e, d in self.rows():
            esc = "never" if e == NEVER_ESCALATE else str(e)
            lines.append(f"| {n} | {esc} | {d} |")
        return "\n".join(lines) + "\n"


def _boundaries_by_scan(n: int, partition: KeyPartition) -> tuple[int, int]:
    """(max y that escalates, min y that de-escalates) by scanning all y."""
    chosen = _strongest_rows(
        n, np.arange(n + 1), partition.edges, partition.target_index
    )
    esc = np.nonzero(chosen < partition.target_index)[0]
    de = np.nonzero(chosen > partition.target_index)[0]
    e = int(esc.max()) if esc.size else NEVER_ESCALATE
    d = int(de.min()) if de.size else n + 1
    return e, d


def build_decision_table(
    phi: float, eps1: float, eps2: float, n_max: int
) -> DecisionTable:
    """Scan y = 0..n for each n = 1..n_max and record the decision boundaries."""
    if n_max < 1:
        raise ValueError(f"n_max={n_max} must be >= 1")
    partition = build_keys(phi, eps1, eps2)
    esc, de = [], []
    for n in range(1, n_max + 1):
        e, d = _boundaries_by_scan(n, partition)
        esc.append(e)
        de.append(d)
    return DecisionTable(phi, eps1, eps2, n_max, tuple(esc), tuple(de))


class DesignTables:
    """Cached per-n decision and elimination boundaries for one design.

    Small n are computed by full scans over y; beyond ``scan_limit`` the
    boundaries are located by bisection, relying on the monotonicity of
    the decision in y (escalate ... retain ... de-escalate). Instances
    are safe to share across threads once built; lazy fills are
    idempotent.
    """

    def __init__(self, partition: KeyPartition, cutoff: float, scan_limit: int = 256):
        if not 0.0 < cutoff < 1.0:
            raise ValueError(f"cutoff={cutoff} outside (0, 1)")
        self.partition = partition
        self.cutoff = cutoff
        self.scan_limit = scan_limit
        self._bounds: dict[int, tuple[int, int]] = {}
        self._elim: dict[int, int] = {}
        self._target_prob: dict[tuple[int, int], float] = {}

    # -- decision boundaries ------------------------------------------------

    def boundaries(self, n: int) -> tuple[int, int]:
        got = self._bounds.get(n)
        if got is None:
            if n <= self.scan_limit:
                got = _boundaries_by_scan(n, self.partition)
            else:
                got = self._boundaries_by_bisect(n)
            self._bounds[n] = got
        return got

    def _decide_sign(self, n: int, y: int) -> int:
        chosen = int(
            _strongest_rows(n, y, self.partition.edges, self.partition.target_index)[0]
        )
        return (chosen > self.partition.target_index) - (
            chosen < self.partition.target_index
        )

    def _boundaries_by_bisect(self, n: int) -> tuple[int, int]:
        if self._decide_sign(n, 0) == -1:
            lo, hi = 0, n
            while lo < hi:
                mid = (lo + hi + 1) // 2
                if self._decide_sign(n, mid) == -1:
                    lo = mid
                else:
                    hi = mid - 1
            e = lo
        else:
            e = NEVER_ESCALATE
        if self._decide_sign(n, n) == 1:
            lo, hi = 0, n
            while lo < hi:
                mid = (lo + hi) // 2
                if self._decide_sign(n, mid) == 1:
                    hi = mid
                else:
                    lo = mid + 1
            d = lo
        else:
            d = n + 1
        return e, d

    def decide_counts(self, n: int, y: int) -> Decision:
        e, d = self.boundaries(n)
        if y <= e:
            return Decision.ESCALATE
        if y >= d:
            return Decision.DEESCALATE
        return Decision.RETAIN

    # -- elimination --------------------------------------------------------

    def elim_min_dlt(self, n: int) -> int:
        """Smallest y for which the dose is eliminated; n + 1 when none is."""
        got = self._elim.get(n)
        if got is None:
            phi, c = self.partition.phi, self.cutoff
            if n <= self.scan_limit:
                y = np.arange(n + 1)
                exceed = 1.0 - _betainc(y + 1.0, n - y + 1.0, phi)
                hits = np.nonzero(exceed >= c)[0]
                got = int(hits.min()) if hits.size else n + 1
            else:
                # Pr(p > phi) grows with y, so bisect for the first hit.
                def exceed(y: int) -> float:
                    return 1.0 - float(_betainc(y + 1.0, n - y + 1.0, phi))

                if exceed(n) < c:
                    got = n + 1
                else:
                    lo, hi = 0, n
                    while lo < hi:
                        mid = (lo + hi) // 2
                        if exceed(mid) >= c:
                            hi = mid
                        else:
                            lo = mid + 1
                    got = lo
            self._elim[n] = got
        return got

    # -- target-key posterior probability -----------------------------------

    def target_key_prob(self, n: int, y: int) -> float:
        got = self._target_prob.get((n, y))
        if got is None:
            lo, hi = self.partition.target_key
            a, b = y + 1.0, n - y + 1.0
            got = float(_betainc(a, b, hi) - _betainc(a, b, lo))
            self._target_prob[(n, y)] = got
        return got

    def prefill(self, n_max: int) -> None:
        for n in range(1, n_max + 1):
            self.boundaries(n)
            self.elim_min_dlt(n)
