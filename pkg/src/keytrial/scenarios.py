"""Random dose-toxicity matrices for drug-combination simulations.

Generates J x K toxicity probability matrices that respect the
combination partial order (toxicity nondecreasing in each agent's dose
level). Construction:

1. pick a cell (j, k) uniformly and fix its probability at the target
   rate phi;
2. lay a pivotal path p11 -> ... -> pj1 -> ... -> pjk -> ... -> pjK
   -> ... -> pJK (down column 1, across row j, down column K), which
   splits the matrix into an upper block UB and a lower block LB;
3. fill the path before (j, k) with an ordered Uniform(0, phi) sample
   and the path after it with an ordered Uniform(phi, p_max) sample,
   where p_max is drawn from Beta(mu, 1 - mu) with
   mu = 1 - exp(-(J*K)/8), floored at phi + 0.05;
4. fill UB rows j-1 up to 1 left to right, each cell Uniform(left
   neighbour, below neighbour); fill LB rows j+1 down to J right to
   left, each cell Uniform(above neighbour, right neighbour).

Draw order is fixed so a scripted draw source reproduces a matrix
exactly: the cell index (one integers(J*K) call, row-major), p_max (one
beta(mu, 1-mu) call, only when the after segment is non-empty and
``pmax_fixed_at_mean`` is off), the before-segment uniforms, the
after-segment uniforms, the UB fills, then the LB fills, each as one
uniform(lo, hi) call. Any object with ``integers``, ``uniform`` and
``beta`` methods works as the draw source; ``numpy.random.Generator``
is the usual choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class ScenarioExhaustedError(RuntimeError):
    """Rejection sampling failed to hit the requested MTD count."""


@dataclass(frozen=True)
class ToxScenario:
    """A J x K matrix of true toxicity probabilities.

    ``probs`` is row-major with 1-based dose (j, k) at
    probs[j-1][k-1]; ``mtd_location`` is the cell pinned at phi.
    """

    probs: tuple[tuple[float, ...], ...]
    mtd_location: tuple[int, int]
    phi: float

    @property
    def rows(self) -> int:
        return len(self.probs)

    @property
    def cols(self) -> int:
        return len(self.probs[0])

    def prob(self, j: int, k: int) -> float:
        return self.probs[j - 1][k - 1]

    def to_json_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "phi": self.phi,
            "probs": [list(row) for row in self.probs],
            "mtd_location": list(self.mtd_location),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ToxScenario":
        return cls(
            probs=tuple(tuple(float(p) for p in row) for row in doc["probs"]),
            mtd_location=(int(doc["mtd_location"][0]), int(doc["mtd_location"][1])),
            phi=float(doc["phi"]),
        )


@dataclass
class GeneratorConfig:
    rows: int
    cols: int
    phi: float
    eps1: float
    eps2: float
    target_mtd_count: int | None = None
    max_attempts: int = 10_000
    pmax_fixed_at_mean: bool = False

    def validate(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be >= 1")
        if not 0.0 < self.phi < 1.0:
            raise ValueError(f"phi={self.phi} outside (0, 1)")
        if self.eps1 < 0.0 or self.eps2 < 0.0:
            raise ValueError("eps1 and eps2 must be >= 0")
        if self.target_mtd_count is not None and self.target_mtd_count < 1:
            raise ValueError("target_mtd_count must be >= 1 when set")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


def pmax_mean(rows: int, cols: int) -> float:
    """Mean of the p_max law: 1 - exp(-(J*K)/8)."""
    return 1.0 - math.exp(-(rows * cols) / 8.0)


def generate_scenario(
    rows: int,
    cols: int,
    phi: float,
    rng,
    pmax_fixed_at_mean: bool = False,
) -> ToxScenario:
    """One random partial-order toxicity matrix with p[mtd] = phi."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if not 0.0 < phi < 1.0:
        raise ValueError(f"phi={phi} outside (0, 1)")
    idx = int(rng.integers(rows * cols))
    j, k = idx // cols + 1, idx % cols + 1

    p = [[0.0] * cols for _ in range(rows)]
    p[j - 1][k - 1] = phi

    # pivotal path cells before and after (j, k)
    before = [(r, 1) for r in range(1, j)] + [(j, c) for c in range(1, k)]
    after = [(j, c) for c in range(k + 1, cols + 1)] + [
        (r, cols) for r in range(j + 1, rows + 1)
    ]

    if after:
        mu = pmax_mean(rows, cols)
        p_max = mu if pmax_fixed_at_mean else float(rng.beta(mu, 1.0 - mu))
        p_max = max(p_max, phi + 0.05)
    lo_draws = sorted(float(rng.uniform(0.0, phi)) for _ in before)
    hi_draws = sorted(float(rng.uniform(phi, p_max)) for _ in after)
    for (r, c), v in zip(before, lo_draws):
        p[r - 1][c - 1] = v
    for (r, c), v in zip(after, hi_draws):
        p[r - 1][c - 1] = v

    # upper block: rows j-1 .. 1, left to right; Uniform(left, below)
    for r in range(j - 1, 0, -1):
        for c in range(2, cols + 1):
            lo = p[r - 1][c - 2]
            hi = p[r][c - 1]
            p[r - 1][c - 1] = float(rng.uniform(lo, hi))
    # lower block: rows j+1 .. J, right to left; Uniform(above, right)
    for r in range(j + 1, rows + 1):
        for c in range(cols - 1, 0, -1):
            lo = p[r - 2][c - 1]
            hi = p[r - 1][c]
            p[r - 1][c - 1] = float(rng.uniform(lo, hi))

    return ToxScenario(tuple(tuple(row) for row in p), (j, k), phi)


def count_mtds(scenario: ToxScenario, phi: float, eps1: float, eps2: float) -> int:
    """Cells whose true toxicity lies within [phi - eps1, phi + eps2]."""
    lo, hi = phi - eps1 - 1e-12, phi + eps2 + 1e-12
    return sum(lo <= v <= hi for row in scenario.probs for v in row)


def generate_with_mtd_count(config: GeneratorConfig, rng) -> ToxScenario:
    """Rejection-sample scenarios until the acceptable-dose count matches.

    Raises ScenarioExhaustedError after ``config.max_attempts`` misses.
    With no target count set, returns the first draw.
    """
    config.validate()
    for _ in range(config.max_attempts):
        scenario = generate_scenario(
            config.rows, config.cols, config.phi, rng, config.pmax_fixed_at_mean
        )
        if config.target_mtd_count is None:
            return scenario
        if count_mtds(scenario, config.phi, config.eps1, config.eps2) == (
            config.target_mtd_count
        ):
            return scenario
    raise ScenarioExhaustedError(
        f"no scenario with {config.target_mtd_count} acceptable doses in "
        f"{config.max_attempts} attempts"
    )


def validate_partial_order(scenario: ToxScenario) -> bool:
    """True when the matrix is nondecreasing along every row and column."""
    p = scenario.probs
    for j in range(scenario.rows):
        for k in range(scenario.cols):
            if k + 1 < scenario.cols and p[j][k] > p[j][k + 1]:
                return False
            if j + 1 < scenario.rows and p[j][k] > p[j + 1][k]:
                return False
    return True
