"""Small numerical helpers shared by the estimators."""

from __future__ import annotations

import numpy as np

# Central 7-point first-derivative weights.  Exact for polynomials of degree
# <= 6, which covers every BCH-generated map in groups of step <= 6.
_STENCIL_OFFSETS = np.array([-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0])
_STENCIL_WEIGHTS = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0


def poly_derivative(fn, h: float = 0.25):
    """Derivative at 0 of ``s -> fn(s)`` for polynomial ``fn`` of degree <= 6.

    ``fn`` receives an array of shape (7,) of offsets and must return an
    array whose first axis has length 7.
    """
    vals = np.asarray(fn(h * _STENCIL_OFFSETS), dtype=float)
    return np.tensordot(_STENCIL_WEIGHTS, vals, axes=(0, 0)) / h


def richardson(values, ratio: float = 2.0, order_start: int = 1, order_step: int = 1):
    """Extrapolate ``values[k] = A + a1 t_k^p + a2 t_k^(p+r) + ...`` with ``t_{k+1} = t_k / ratio``.

    ``p`` is ``order_start`` and ``r`` is ``order_step`` (2 for symmetric
    difference quotients).
    Returns ``(estimate, error, table_size)`` where ``error`` is the smallest
    difference between neighbouring tableau entries, used as the estimate's
    error proxy.  Works for vector values.
    """
    vals = [np.asarray(v, dtype=float) for v in values]
    if not vals:
        raise ValueError("richardson needs at least one value")
    if len(vals) == 1:
        return vals[0], np.inf, 1
    table = [vals]
    best = vals[-1]
    best_err = float(np.max(np.abs(vals[-1] - vals[-2])))
    for j in range(1, len(vals)):
        prev = table[-1]
        factor = ratio ** (order_start + order_step * (j - 1))
        row = [prev[k + 1] + (prev[k + 1] - prev[k]) / (factor - 1.0) for k in range(len(prev) - 1)]
        table.append(row)
        for k in range(len(row)):
            err = float(np.max(np.abs(row[k] - prev[k + 1])))
            if err < best_err:
                best, best_err = row[k], err
    return best, best_err, len(vals)


def sphere_directions(m: int, n: int, seed: int = 0) -> np.ndarray:
    """``n`` deterministic, roughly uniform unit vectors in R^m (Sobol points, normalised)."""
    from scipy.stats import qmc

    if m == 1:
        base = np.array([[1.0], [-1.0]])
        return np.resize(base, (max(n, 2), 1))
    pts = qmc.Sobol(d=m, scramble=True, seed=seed).random(n)
    # inverse-normal keeps the radial projection uniform on the sphere
    from scipy.stats import norm

    g = norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def rng_for(seed, *keys) -> np.random.Generator:
    """Counter-based generator addressed by ``(seed, *keys)``.

    Streams for distinct keys are independent, so cells may be processed in
    any order or in parallel without changing results.
    """
    ss = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return np.random.Generator(np.random.Philox(ss))
