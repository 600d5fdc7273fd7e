"""Unbiased maximum mean discrepancy between generated and reference samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class KernelConfig:
    """RBF kernel exp(-||a-b||^2 / (2 sigma^2)); bandwidth may be a positive
    number or the string "median" for the median pairwise-distance heuristic."""

    kind: str = "rbf"
    bandwidth: float | str = "median"

    def __post_init__(self):
        if self.kind != "rbf":
            raise ValueError(f"unsupported kernel kind {self.kind!r}")
        if not isinstance(self.bandwidth, str):
            if self.bandwidth <= 0:
                raise ValueError("bandwidth must be positive")
        elif self.bandwidth != "median":
            raise ValueError(f"unknown bandwidth rule {self.bandwidth!r}")


def _flatten(samples: np.ndarray) -> np.ndarray:
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 1:
        return arr[:, None]
    return arr.reshape(arr.shape[0], -1)


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # ||a-b||^2 = ||a||^2 + ||b||^2 - 2 a.b, floored at 0 against roundoff
    d = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.maximum(d, 0.0)


def median_heuristic(samples: np.ndarray) -> float:
    """Median pairwise Euclidean distance of the combined sample set.

    Zero distances are excluded; if every pair coincides the fallback is 1.0.
    """
    flat = _flatten(samples)
    if flat.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    d = np.sqrt(_sq_dists(flat, flat))
    upper = d[np.triu_indices(flat.shape[0], k=1)]
    nonzero = upper[upper > 0.0]
    if nonzero.size == 0:
        return 1.0
    return float(np.median(nonzero))


def mmd_unbiased(
    gen_set: np.ndarray,
    ref_set: np.ndarray,
    kernel: KernelConfig | None = None,
) -> float:
    """Three-term unbiased MMD^2 estimate between two sample sets.

    Sequences (sets of matrices) are flattened to vectors before kernel
    evaluation.  The estimate may be slightly negative for same-distribution
    sets.
    """
    kernel = kernel or KernelConfig()
    g = _flatten(gen_set)
    r = _flatten(ref_set)
    n, m = g.shape[0], r.shape[0]
    if n < 2 or m < 2:
        raise ValueError("need at least 2 samples on each side")
    if g.shape[1] != r.shape[1]:
        raise ValueError(
            f"sample length mismatch: {g.shape[1]} vs {r.shape[1]}"
        )

    if isinstance(kernel.bandwidth, str):
        sigma = median_heuristic(np.concatenate([g, r], axis=0))
    else:
        sigma = float(kernel.bandwidth)

    k_gg = np.exp(-_sq_dists(g, g) / (2.0 * sigma**2))
    k_rr = np.exp(-_sq_dists(r, r) / (2.0 * sigma**2))
    k_gr = np.exp(-_sq_dists(g, r) / (2.0 * sigma**2))

    term_gg = (k_gg.sum() - np.trace(k_gg)) / (n * (n - 1))
    term_rr = (k_rr.sum() - np.trace(k_rr)) / (m * (m - 1))
    term_gr = 2.0 * k_gr.sum() / (m * n)
    return float(term_gg - term_gr + term_rr)
