"""Principal component fitting, projection and SPE residual distances.

The eigensolver is a self-contained cyclic Jacobi sweep over the (small)
covariance matrix, so results are deterministic across platforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class PcaModel:
    """Fitted principal components.

    ``loadings`` holds one unit-norm principal direction per row (n x m),
    ordered by descending eigenvalue of the training covariance.
    """

    mean: np.ndarray
    loadings: np.ndarray
    eigenvalues: np.ndarray
    total_variance: float

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.loadings = np.asarray(self.loadings, dtype=np.float64)
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64)
        if self.loadings.ndim != 2:
            raise ValueError("loadings must be 2-D (components x variables)")
        n, m = self.loadings.shape
        if n > m:
            raise ValueError("cannot keep more components than variables")
        if self.mean.shape != (m,):
            raise ValueError("mean length does not match loadings columns")
        if self.eigenvalues.shape != (n,):
            raise ValueError("one eigenvalue per retained component required")

    @property
    def n_components(self) -> int:
        return self.loadings.shape[0]

    @property
    def n_variables(self) -> int:
        return self.loadings.shape[1]

    def to_json(self) -> str:
        return json.dumps(
            {
                "mean": self.mean.tolist(),
                "loadings": self.loadings.tolist(),
                "eigenvalues": self.eigenvalues.tolist(),
                "total_variance": self.total_variance,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "PcaModel":
        d = json.loads(text)
        return cls(
            mean=np.asarray(d["mean"]),
            loadings=np.asarray(d["loadings"]),
            eigenvalues=np.asarray(d["eigenvalues"]),
            total_variance=float(d["total_variance"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "PcaModel":
        return cls.from_json(Path(path).read_text())


def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvectors) with eigenvalues descending and
    eigenvectors as columns.
    """
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, atol=1e-10):
        raise ValueError("matrix must be symmetric")
    m = a.shape[0]
    v = np.eye(m)
    scale = np.abs(a).max() or 1.0
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = a[p, q]
                if abs(apq) <= 1e-30 * scale:
                    continue
                # classic stable rotation angle computation
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(m)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    eigenvalues = np.diag(a).copy()
    order = np.argsort(eigenvalues)[::-1]
    return eigenvalues[order], v[:, order]


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each component row positive."""
    out = components.copy()
    for i in range(out.shape[0]):
        j = int(np.argmax(np.abs(out[i])))
        if out[i, j] < 0:
            out[i] = -out[i]
    return out


def fit_pca(data: np.ndarray, n_components: int) -> PcaModel:
    """Fit principal components on (normal) training rows.

    Components are eigenvectors of the sample covariance (ddof=1) of the
    mean-centered data, descending by eigenvalue.  Zero-variance data yields
    zero eigenvalues, not an error.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("data must be 2-D (rows x variables)")
    n_rows, m = data.shape
    if n_rows < 2:
        raise ValueError("need at least 2 rows to fit")
    if not 1 <= n_components <= m:
        raise ValueError(f"n_components must be in [1, {m}]")
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / (n_rows - 1)
    eigenvalues, eigenvectors = jacobi_eigh(cov)
    eigenvalues = np.maximum(eigenvalues, 0.0)
    loadings = _fix_signs(eigenvectors[:, :n_components].T)
    return PcaModel(
        mean=mean,
        loadings=loadings,
        eigenvalues=eigenvalues[:n_components],
        total_variance=float(eigenvalues.sum()),
    )


def project(model: PcaModel, data: np.ndarray) -> np.ndarray:
    """Project rows into the retained principal subspace: (X - mean) @ P.T."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != model.n_variables:
        raise ValueError(
            f"data must be (rows x {model.n_variables}), got {data.shape}"
        )
    return (data - model.mean) @ model.loadings.T


def reconstruct(model: PcaModel, scores: np.ndarray) -> np.ndarray:
    """Map projected scores back to the original variable space."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] != model.n_components:
        raise ValueError(
            f"scores must be (rows x {model.n_components}), got {scores.shape}"
        )
    return scores @ model.loadings + model.mean


def variance_ratios(model: PcaModel) -> np.ndarray:
    """Fraction of total training variance captured by each component."""
    if model.total_variance <= 0.0:
        return np.zeros(model.n_components)
    return model.eigenvalues / model.total_variance


def spe(model: PcaModel, data: np.ndarray) -> np.ndarray:
    """Squared prediction error: distance from the principal subspace, per row."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != model.n_variables:
        raise ValueError(
            f"data must be (rows x {model.n_variables}), got {data.shape}"
        )
    centered = data - model.mean
    residual = centered - (centered @ model.loadings.T) @ model.loadings
    return np.sum(residual * residual, axis=1)
