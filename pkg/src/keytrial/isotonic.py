"""Weighted isotonic regression under the matrix partial order.

Projects a matrix of raw toxicity estimates onto the cone of matrices
that are nondecreasing along every row and every column, in the
weighted least-squares sense. The projection alternates weighted
pool-adjacent-violators passes over row chains and column chains with
Dykstra correction vectors, which converges to the exact projection
onto the intersection of the two cones.

Cells can be masked out (untried or eliminated doses); masked cells are
excluded from both the order constraints and the objective and come
back as NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class IsotonicConvergenceError(RuntimeError):
    pass


@dataclass
class WeightedMatrix:
    values: np.ndarray
    weights: np.ndarray
    mask: np.ndarray  # True where the cell participates

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if not (self.values.shape == self.weights.shape == self.mask.shape):
            raise ValueError("values, weights and mask must share one shape")
        if self.values.ndim != 2:
            raise ValueError("expected a 2-D matrix")
        if np.any(self.weights[self.mask] <= 0.0):
            raise ValueError("weights must be positive on active cells")


def _pava(values: list[float], weights: list[float]) -> list[float]:
    """Weighted nondecreasing pool-adjacent-violators on one chain."""
    # blocks of (weight sum, weighted value sum, length)
    blocks: list[list[float]] = []
    for v, w in zip(values, weights):
        blocks.append([w, w * v, 1])
        while len(blocks) > 1:
            w2, s2, c2 = blocks[-1]
            w1, s1, c1 = blocks[-2]
            if s1 * w2 <= s2 * w1:  # means already ordered
                break
            blocks.pop()
            blocks[-1] = [w1 + w2, s1 + s2, c1 + c2]
    out: list[float] = []
    for w, s, c in blocks:
        out.extend([s / w] * c)
    return out


def _chains(mask: np.ndarray) -> tuple[list[list[tuple[int, int]]], list[list[tuple[int, int]]]]:
    """Active-cell index chains for every row and every column."""
    rows, cols = mask.shape
    row_chains = []
    for j in range(rows):
        chain = [(j, k) for k in range(cols) if mask[j, k]]
        if len(chain) > 1:
            row_chains.append(chain)
    col_chains = []
    for k in range(cols):
        chain = [(j, k) for j in range(rows) if mask[j, k]]
        if len(chain) > 1:
            col_chains.append(chain)
    return row_chains, col_chains


def _project_chains(x: np.ndarray, weights: np.ndarray, chains) -> np.ndarray:
    out = x.copy()
    for chain in chains:
        vals = [x[ij] for ij in chain]
        wts = [weights[ij] for ij in chain]
        for ij, v in zip(chain, _pava(vals, wts)):
            out[ij] = v
    return out


def matrix_isotonic(
    data: WeightedMatrix, tol: float = 1e-11, max_cycles: int = 10_000
) -> np.ndarray:
    """Weighted least-squares projection onto the row/column-monotone cone.

    Returns a matrix matching ``data.values`` in shape with NaN at
    masked-out cells. Raises IsotonicConvergenceError if successive
    iterates still move more than ``tol`` in max-norm after
    ``max_cycles`` row+column cycles.
    """
    mask = data.mask
    row_chains, col_chains = _chains(mask)
    x = np.where(mask, data.values, np.nan)
    if not row_chains and not col_chains:
        return x
    w = data.weights
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    prev = x
    for _ in range(max_cycles):
        y = _project_chains(prev + p, w, row_chains)
        p = prev + p - y
        x_new = _project_chains(y + q, w, col_chains)
        q = y + q - x_new
        delta = np.nanmax(np.abs(x_new - prev)) if mask.any() else 0.0
        prev = x_new
        if delta < tol:
            return prev
    raise IsotonicConvergenceError(
        f"no convergence to {tol} within {max_cycles} cycles"
    )
