"""Mapping test windows back into the generator's latent space.

The inversion minimizes 1 - similarity(window, G(z)) over z by gradient
descent through the frozen generator, with backtracking step halving and a
configurable number of restarts.  Similarity is the per-column Pearson
correlation averaged over columns, so it is bounded and scale invariant.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import lstm
from .gan import Generator

MAX_HALVINGS = 10


@dataclass
class InversionConfig:
    max_iterations: int = 200
    learning_rate: float = 0.2
    restarts: int = 3
    tolerance: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")


@dataclass
class InversionResult:
    latent: np.ndarray          # (length, latent_dim)
    error: float                # 1 - similarity at the returned latent
    iterations: int             # accepted descent steps
    reconstruction: np.ndarray  # generator output at the returned latent


def similarity(x: np.ndarray, y: np.ndarray) -> float:
    """Mean per-column Pearson correlation between two equal-shape windows.

    A constant column in either input contributes 0 for that column.
    """
    return _similarity_and_grad(x, y, want_grad=False)[0]


def _similarity_and_grad(x, y, want_grad=True):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("windows must be (timesteps >= 2, columns)")
    steps, cols = x.shape
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    sx = np.sqrt(np.sum(xc * xc, axis=0))
    sy = np.sqrt(np.sum(yc * yc, axis=0))
    ok = (sx > 0.0) & (sy > 0.0)
    r = np.zeros(cols)
    denom = np.where(ok, sx * sy, 1.0)
    r[ok] = np.sum(xc * yc, axis=0)[ok] / denom[ok]
    sim = float(r.mean())
    if not want_grad:
        return sim, None
    # d r_j / d y[:, j] = xc/(sx sy) - r * yc / sy^2  (0 for degenerate columns)
    grad = np.zeros_like(y)
    sy_safe = np.where(ok, sy, 1.0)
    grad[:, ok] = (
        xc[:, ok] / denom[ok] - r[ok] * yc[:, ok] / (sy_safe[ok] ** 2)
    ) / cols
    return sim, grad


def residual(window: np.ndarray, reconstruction: np.ndarray) -> np.ndarray:
    """Per-timestep sum of absolute differences across variables."""
    w = np.asarray(window, dtype=np.float64)
    r = np.asarray(reconstruction, dtype=np.float64)
    if w.shape != r.shape:
        raise ValueError(f"shape mismatch: {w.shape} vs {r.shape}")
    return np.sum(np.abs(w - r), axis=1)


def _error_and_grad(window: np.ndarray, recon: np.ndarray):
    sim, grad = _similarity_and_grad(window, recon)
    return 1.0 - sim, None if grad is None else -grad


def _descend(gen: Generator, window: np.ndarray, z0: np.ndarray, config: InversionConfig):
    """One gradient-descent run; returns None if the error turns non-finite."""
    z = z0.copy()
    recon, cache = lstm.forward_batch(gen.net, z[None])
    recon = recon[0]
    err, err_grad = _error_and_grad(window, recon)
    if not np.isfinite(err):
        return None
    iterations = 0
    step = config.learning_rate
    for _ in range(config.max_iterations):
        if err <= config.tolerance:
            break
        grads = lstm.backward_batch(gen.net, cache, err_grad[None])
        z_grad = grads.inputs[0]
        if not np.all(np.isfinite(z_grad)):
            return None
        accepted = False
        halvings = 0
        for halvings in range(MAX_HALVINGS + 1):
            z_try = z - step * z_grad
            recon_try, cache_try = lstm.forward_batch(gen.net, z_try[None])
            recon_try = recon_try[0]
            err_try, grad_try = _error_and_grad(window, recon_try)
            if np.isfinite(err_try) and err_try < err:
                z, recon, cache = z_try, recon_try, cache_try
                err, err_grad = err_try, grad_try
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # no direction of improvement within the backtracking budget
        if halvings == 0:
            # clean acceptance: let the step grow back, capped at 50x the base rate
            step = min(step * 1.5, 50.0 * config.learning_rate)
        iterations += 1
    return InversionResult(latent=z, error=err, iterations=iterations, reconstruction=recon)


def invert(gen: Generator, window: np.ndarray, config: InversionConfig) -> InversionResult:
    """Best-of-restarts latent recovery for one test window."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise ValueError("window must be (timesteps, columns)")
    if window.shape[1] != gen.feature_dim:
        raise ValueError(
            f"window has {window.shape[1]} columns, generator emits {gen.feature_dim}"
        )
    rng = np.random.default_rng(config.seed)
    best: InversionResult | None = None
    for _ in range(config.restarts):
        z0 = rng.standard_normal((window.shape[0], gen.latent_dim))
        result = _descend(gen, window, z0, config)
        if result is None:
            continue
        if best is None or result.error < best.error:
            best = result
    if best is None:
        raise RuntimeError("all inversion restarts diverged")
    return best


def _invert_indexed(args):
    gen, window, config, index = args
    cfg = InversionConfig(
        max_iterations=config.max_iterations,
        learning_rate=config.learning_rate,
        restarts=config.restarts,
        tolerance=config.tolerance,
        seed=config.seed + index,
    )
    return invert(gen, window, cfg)


def invert_many(
    gen: Generator,
    windows: np.ndarray,
    config: InversionConfig,
    workers: int = 1,
) -> list[InversionResult]:
    """Invert a batch of windows; windows are independent, so this is
    embarrassingly parallel.  Window i uses seed config.seed + i regardless of
    worker count, keeping results deterministic."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 3:
        raise ValueError("windows must be (count, timesteps, columns)")
    tasks = [(gen, windows[i], config, i) for i in range(windows.shape[0])]
    if workers == 1 or len(tasks) <= 1:
        return [_invert_indexed(t) for t in tasks]
    max_workers = workers if workers > 0 else None
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_invert_indexed, tasks, chunksize=8))
