"""Homogeneous norms, left-invariant distances, cones and the splitting constant."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .algebra import GradedAlgebra, SpecError
from .numerics import rng_for

KINDS = ("d_inf", "cygan_koranyi", "custom_homnorm")


class HomogeneousDistance:
    """A left-invariant homogeneous distance ``d(x, y) = ||x^{-1} y||``.

    kinds
      ``d_inf``           ``max_i eps_i |x_i|^(1/i)``, per-layer Euclidean ``|x_i|``.
      ``cygan_koranyi``   ``(|z|^4 + 16 t^2)^(1/4)``, Heisenberg fixtures only.
      ``custom_homnorm``  either the gauge ``(sum_i (eps_i |x_i|^(1/i))^P)^(1/P)``
                          given ``weights`` and ``power``, or a user callable
                          ``norm_fn`` (vectorised over the last axis) together
                          with ``layer_bounds``.
    """

    def __init__(self, alg: GradedAlgebra, kind: str = "d_inf", weights=None,
                 power: float | None = None, norm_fn=None, layer_bounds=None):
        if kind not in KINDS:
            raise SpecError(f"unknown distance kind {kind!r}; expected one of {KINDS}")
        self.alg = alg
        self.kind = kind
        if weights is None:
            weights = [1.0] * alg.step
        weights = [float(w) for w in weights]
        if len(weights) != alg.step or any(w <= 0 for w in weights):
            raise SpecError(f"need {alg.step} positive layer weights, got {weights}")
        self.weights = tuple(weights)
        self.power = None if power is None else float(power)
        self.norm_fn = norm_fn
        self._layer_bounds = layer_bounds
        if kind == "cygan_koranyi":
            if alg.step != 2 or alg.layer_dims[1] != 1:
                raise SpecError("cygan_koranyi is only offered on Heisenberg groups")
        if kind == "custom_homnorm":
            if norm_fn is None and self.power is None:
                raise SpecError("custom_homnorm needs either 'power' or a norm callable")
            if norm_fn is not None and layer_bounds is None:
                raise SpecError("a custom norm callable must come with layer_bounds")

    def __repr__(self) -> str:
        return f"<HomogeneousDistance {self.kind} weights={list(self.weights)}>"

    def params(self) -> dict:
        out = {"kind": self.kind, "weights": list(self.weights)}
        if self.power is not None:
            out["power"] = self.power
        return out

    def _layer_gauges(self, x: np.ndarray) -> np.ndarray:
        alg = self.alg
        cols = []
        for s in range(1, alg.step + 1):
            r = np.linalg.norm(x[..., alg.layer_slice(s)], axis=-1)
            cols.append(self.weights[s - 1] * r ** (1.0 / s))
        return np.stack(cols, axis=-1)

    def norm(self, x) -> np.ndarray:
        x = self.alg._check(x)
        if self.kind == "d_inf":
            return self._layer_gauges(x).max(axis=-1)
        if self.kind == "cygan_koranyi":
            z = np.linalg.norm(x[..., :-1], axis=-1)
            t = x[..., -1]
            return (z**4 + 16.0 * t**2) ** 0.25
        if self.norm_fn is not None:
            return np.asarray(self.norm_fn(x), dtype=float)
        g = self._layer_gauges(x)
        if np.isinf(self.power):
            return g.max(axis=-1)
        return (g**self.power).sum(axis=-1) ** (1.0 / self.power)

    def __call__(self, x, y) -> np.ndarray:
        return self.norm(self.alg.multiply(self.alg.inverse(x), y))

    distance = __call__

    def layer_bounds(self, radius: float) -> np.ndarray:
        """Per-layer Euclidean radii ``r_i`` with ``||x|| <= radius => |x_i| <= r_i``."""
        alg = self.alg
        if self._layer_bounds is not None:
            return np.asarray(self._layer_bounds(radius), dtype=float)
        if self.kind == "cygan_koranyi":
            return np.array([radius, radius**2 / 4.0])
        # the max gauge is dominated by every l^P gauge built on the same weights
        return np.array([(radius / self.weights[s - 1]) ** s for s in range(1, alg.step + 1)])


def make_distance(alg: GradedAlgebra, spec) -> HomogeneousDistance:
    """Build a distance from a name (``dinf``, ``d_inf``, ``cygan_koranyi``, ``ck``) or a dict."""
    if spec is None:
        return HomogeneousDistance(alg)
    if isinstance(spec, HomogeneousDistance):
        return spec
    if isinstance(spec, str):
        aliases = {"dinf": "d_inf", "d_inf": "d_inf", "ck": "cygan_koranyi",
                   "cygan_koranyi": "cygan_koranyi", "koranyi": "cygan_koranyi"}
        if spec not in aliases:
            raise SpecError(f"unknown distance {spec!r}")
        return HomogeneousDistance(alg, aliases[spec])
    kind = spec.get("kind", "d_inf")
    kind = {"dinf": "d_inf", "ck": "cygan_koranyi"}.get(kind, kind)
    params = dict(spec.get("params", {}))
    return HomogeneousDistance(alg, kind, weights=params.get("weights"), power=params.get("power"))


def hom_norm(d: HomogeneousDistance, x) -> np.ndarray:
    return d.norm(x)


def distance(d: HomogeneousDistance, x, y) -> np.ndarray:
    return d(x, y)


def unit_sphere_points(d: HomogeneousDistance, basis: np.ndarray, n: int, rng) -> np.ndarray:
    """Random points of norm 1 in the span of ``basis`` (columns), via radial dilation."""
    k = basis.shape[1]
    pts = rng.standard_normal((n, k)) @ basis.T
    r = d.norm(pts)
    keep = r > 1e-300
    pts, r = pts[keep], r[keep]
    return d.alg.dilate(1.0 / r, pts)


def dist_to_subgroup(d: HomogeneousDistance, x, basis: np.ndarray, starts: int = 20,
                     maxiter: int = 400, seed: int = 0) -> tuple[float, np.ndarray]:
    """``dist(x, H) = min_h d(x, h)`` over the span of ``basis``; returns (value, minimiser).

    Multistart Nelder-Mead in H-coordinates.  The first start is the
    orthogonal projection of ``x``; the others are perturbations of it.
    """
    x = np.asarray(x, dtype=float)
    basis = np.asarray(basis, dtype=float)
    if basis.shape[1] == 0:
        return float(d.norm(x)), np.zeros_like(x)
    c0, *_ = np.linalg.lstsq(basis, x, rcond=None)
    scale = max(float(np.linalg.norm(x)), 1e-3)
    rng = rng_for(seed, 11)

    def obj(c):
        return float(d(x, basis @ c))

    best_val, best_c = obj(c0), c0
    if best_val == 0.0:
        return 0.0, basis @ c0
    for k in range(starts):
        start = c0 if k == 0 else c0 + scale * rng.standard_normal(c0.shape)
        res = minimize(obj, start, method="Nelder-Mead",
                       options={"maxiter": maxiter, "xatol": 1e-10 * scale, "fatol": 1e-12})
        if res.fun < best_val:
            best_val, best_c = float(res.fun), res.x
    return best_val, basis @ best_c


@dataclass(frozen=True)
class Cone:
    vertex: np.ndarray
    axis: np.ndarray  # columns span the axis subgroup
    opening: float

    def __post_init__(self):
        if not 0.0 < self.opening < 1.0:
            raise ValueError(f"cone opening must lie in (0,1), got {self.opening}")


def in_cone(x, cone: Cone, d: HomogeneousDistance, rtol: float = 1e-6, seed: int = 0) -> bool:
    alg = d.alg
    y = alg.multiply(alg.inverse(cone.vertex), x)
    ny = float(d.norm(y))
    if ny == 0.0:
        return True
    dist, _ = dist_to_subgroup(d, y, cone.axis, seed=seed)
    return dist <= cone.opening * ny * (1.0 + rtol) + rtol * ny


def estimate_c0(couple, d: HomogeneousDistance, n: int = 20000, seed: int = 0,
                refine: bool = True) -> dict:
    """Sampled minimum of ``||w v||`` over ``||w|| + ||v|| = 1``.

    The result is an upper bound on the splitting constant.  Returns a dict
    with ``value``, ``w`` and ``v``.
    """
    W, V = couple.W, couple.V
    if W.dim == 0 or V.dim == 0:
        raise SpecError("degenerate couple: one factor is trivial")
    alg = d.alg
    rng = rng_for(seed, 13)
    w_hat = unit_sphere_points(d, W.basis, n, rng)
    v_hat = unit_sphere_points(d, V.basis, n, rng)
    m = min(len(w_hat), len(v_hat))
    w_hat, v_hat = w_hat[:m], v_hat[:m]
    lam = rng.uniform(0.0, 1.0, m)
    lam = np.clip(lam, 1e-9, 1 - 1e-9)
    w = alg.dilate(lam, w_hat)
    v = alg.dilate(1.0 - lam, v_hat)
    vals = d.norm(alg.multiply(w, v))
    k = int(np.argmin(vals))
    best = (float(vals[k]), w[k], v[k])

    if refine:
        cw = W.basis.T @ w[k]
        cv = V.basis.T @ v[k]
        nw = cw.size

        def obj(c):
            ww = W.basis @ c[:nw]
            vv = V.basis @ c[nw:]
            s = float(d.norm(ww) + d.norm(vv))
            if s == 0.0:
                return np.inf
            ww = alg.dilate(1.0 / s, ww)
            vv = alg.dilate(1.0 / s, vv)
            return float(d.norm(alg.multiply(ww, vv)))

        res = minimize(obj, np.concatenate([cw, cv]), method="Nelder-Mead",
                       options={"maxiter": 2000, "xatol": 1e-10, "fatol": 1e-12})
        if res.fun < best[0]:
            c = res.x
            ww, vv = W.basis @ c[:nw], V.basis @ c[nw:]
            s = float(d.norm(ww) + d.norm(vv))
            best = (float(res.fun), alg.dilate(1.0 / s, ww), alg.dilate(1.0 / s, vv))
    return {"value": best[0], "w": best[1], "v": best[2], "n_samples": int(m)}


def validate_homogeneous_distance(d: HomogeneousDistance, n: int = 10000, seed: int = 0) -> dict:
    """Sample triples and report the worst triangle, invariance and homogeneity defects."""
    if n <= 0:
        return {}
    alg = d.alg
    rng = rng_for(seed, 17)

    def points(k):
        p = rng.uniform(-1.0, 1.0, (k, alg.dim))
        return alg.dilate(np.exp(rng.uniform(np.log(0.1), np.log(3.0), k)), p)

    x, y, z, g = points(n), points(n), points(n), points(n)
    dxz, dxy, dyz = d(x, z), d(x, y), d(y, z)
    tri = dxz - dxy - dyz
    k = int(np.argmax(tri))
    left = np.abs(d(alg.multiply(g, x), alg.multiply(g, y)) - dxy)
    t = np.exp(rng.uniform(np.log(0.1), np.log(10.0), n))
    homog = np.abs(d(alg.dilate(t, x), alg.dilate(t, y)) - t * dxy) / np.maximum(1.0, t * dxy)
    sym = np.abs(d.norm(alg.inverse(x)) - d.norm(x))
    return {
        "n_samples": int(n),
        "triangle_violation": float(max(tri[k], 0.0)),
        "worst_triple": [x[k].tolist(), y[k].tolist(), z[k].tolist()],
        "left_invariance_residual": float(left.max()),
        "homogeneity_residual": float(homog.max()),
        "symmetry_residual": float(sym.max()),
    }
