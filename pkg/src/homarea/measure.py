"""Slice volumes, spherical factors, blow-up densities, Pansu differentials and level sets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .algebra import GradedAlgebra
from .exterior import orienting_unit, wedge, wedge_all
from .graph import IntrinsicMap
from .metric import HomogeneousDistance
from .numerics import richardson, rng_for
from .splitting import ComplementaryCouple, HomogeneousSubgroup, _orthonormalize


@dataclass
class MeasureEstimate:
    """An estimate with its error: a standard error for ``monte_carlo``,
    a resolution bound for ``grid``."""

    value: float
    std_error: float
    n_samples: int
    method: str = "monte_carlo"

    def to_dict(self) -> dict:
        return asdict(self)


def _basis_of(S) -> np.ndarray:
    """Canonical orthonormal basis of the span: Gram-Schmidt on ``P e_1, ..., P e_q``
    with ``P`` the orthogonal projector, so it depends on the subspace only."""
    cols = _orthonormalize(np.asarray(getattr(S, "basis", S), dtype=float))
    canon = _orthonormalize(cols @ cols.T, tol=1e-6)
    return canon if canon.shape[1] == cols.shape[1] else cols


def sample_ball(d: HomogeneousDistance, n: int, rng, radius: float = 1.0) -> np.ndarray:
    """``n`` points uniform (Lebesgue) in the closed ball ``B(0, radius)``, by rejection."""
    alg = d.alg
    r = d.layer_bounds(radius)
    half = np.concatenate([np.full(alg.layer_dims[s], r[s]) for s in range(alg.step)])
    out, have = [], 0
    while have < n:
        batch = rng.uniform(-half, half, (max(4 * n, 1024), alg.dim))
        batch = batch[d.norm(batch) <= radius]
        out.append(batch)
        have += len(batch)
    return np.concatenate(out)[:n]


# -- slices and spherical factors ----------------------------------------------------------

def _slice_bounds(B: np.ndarray, d: HomogeneousDistance, z) -> np.ndarray:
    alg = d.alg
    R = float(d.norm(z)) + 1.0
    r = d.layer_bounds(R)
    half = np.zeros(B.shape[1])
    for s in range(1, alg.step + 1):
        half += np.linalg.norm(B[alg.layer_slice(s)], axis=0) * r[s - 1]
    return 1.05 * half


def _inside_fn(B, d, z):
    alg = d.alg
    z_inv = alg.inverse(np.asarray(z, dtype=float))

    def inside(u):
        out = np.empty(u.shape[0], dtype=bool)
        for a in range(0, u.shape[0], 500000):
            chunk = u[a:a + 500000] @ B.T
            out[a:a + 500000] = d.norm(alg.multiply(z_inv, chunk)) <= 1.0
        return out

    return inside


def _grid_volume(inside, lo, hi, n_axis):
    k = lo.size
    axes = [np.linspace(lo[i], hi[i], n_axis + 1) for i in range(k)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    flags = inside(mesh).reshape((n_axis + 1,) * k)
    counts = np.zeros((n_axis,) * k, dtype=np.int32)
    for corner in np.ndindex(*(2,) * k):
        sl = tuple(slice(c, c + n_axis) for c in corner)
        counts += flags[sl]
    full = 2**k
    cell = float(np.prod((hi - lo) / n_axis))
    mixed = (counts > 0) & (counts < full)
    n_in = int((counts == full).sum())
    # a mixed cell contributes its fraction of inside corners
    frac = float(counts[mixed].sum()) / full
    return cell * (n_in + frac), 0.5 * cell * int(mixed.sum()), flags, axes


def slice_volume(S, z, d: HomogeneousDistance, method: str = "grid", n: int = 250000,
                 seed: int = 0) -> MeasureEstimate:
    """Euclidean volume of ``{u : ||z^-1 psi(u)|| <= 1}`` with ``psi`` the orthonormal
    parametrisation of the subspace ``S``."""
    B = _basis_of(S)
    k = B.shape[1]
    if k == 0:
        raise ValueError("slice of a zero-dimensional subspace")
    z = np.asarray(z, dtype=float)
    inside = _inside_fn(B, d, z)
    half = _slice_bounds(B, d, z)
    lo, hi = -half, half
    if method == "monte_carlo":
        rng = rng_for(seed, 53)
        u = rng.uniform(lo, hi, (n, k))
        hit = inside(u)
        vol = float(np.prod(hi - lo))
        p = hit.mean()
        return MeasureEstimate(vol * p, vol * np.sqrt(p * (1 - p) / n), n, "monte_carlo")
    if method != "grid":
        raise ValueError(f"unknown method {method!r}")
    # coarse pass to shrink the box around the slice, then the fine pass
    coarse = max(8, min(64, int(round(n ** (1.0 / k))) // 4))
    _, _, flags, axes = _grid_volume(inside, lo, hi, coarse)
    if not flags.any():
        return MeasureEstimate(0.0, 0.0, n, "grid")
    idx = np.argwhere(flags)
    step = (hi - lo) / coarse
    new_lo = np.array([axes[i][idx[:, i].min()] for i in range(k)]) - step
    new_hi = np.array([axes[i][idx[:, i].max()] for i in range(k)]) + step
    lo, hi = np.maximum(lo, new_lo), np.minimum(hi, new_hi)
    n_axis = max(4, int(round(n ** (1.0 / k))))
    for _ in range(8):
        value, bound, flags, _ = _grid_volume(inside, lo, hi, n_axis)
        # a slice reaching a face of the shrunken box was clipped by the coarse
        # pass: push that face out by one coarse step and measure again
        low = np.array([flags.take(0, axis=i).any() for i in range(k)])
        high = np.array([flags.take(-1, axis=i).any() for i in range(k)])
        if np.any(low & (lo <= -half + 1e-12)) or np.any(high & (hi >= half - 1e-12)):
            raise ArithmeticError("slice touches the bounding box: distance bounds look invalid")
        if not (low.any() or high.any()):
            break
        lo = np.where(low, np.maximum(lo - step, -half), lo)
        hi = np.where(high, np.minimum(hi + step, half), hi)
    return MeasureEstimate(value, bound, int((n_axis + 1) ** k), "grid")


@dataclass
class SphericalFactor:
    value: float
    error: float
    argmax: list
    center_value: float
    center_error: float
    n_evaluations: int
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _project_to_ball(d, z):
    nz = float(d.norm(z))
    if nz > 1.0:
        return d.alg.dilate(1.0 / nz, z)
    return z


def spherical_factor(S, d: HomogeneousDistance, starts: int = 4, maxiter: int = 120,
                     n_opt: int = 20000, n_final: int = 1000000, seed: int = 0) -> SphericalFactor:
    """``max_{z in B(0,1)} H^n(S & B(z,1))`` by multistart Nelder-Mead over centres.

    The search uses a coarse slice estimate; the best centre and ``z = 0``
    are then re-measured at ``n_final`` and the larger is returned.
    """
    alg = d.alg
    B = _basis_of(S)
    k = B.shape[1]
    method = "grid" if k <= 3 else "monte_carlo"
    rng = rng_for(seed, 59)
    n_eval = 0

    def objective(zc):
        nonlocal n_eval
        n_eval += 1
        zz = _project_to_ball(d, zc)
        return -slice_volume(B, zz, d, method=method, n=n_opt, seed=seed).value

    zero = np.zeros(alg.dim)
    best_z, best_val = zero, objective(zero)
    inits = [zero] + list(sample_ball(d, max(starts - 1, 0), rng)) if starts > 1 else [zero]
    for z0 in inits:
        res = minimize(objective, z0, method="Nelder-Mead",
                       options={"maxiter": maxiter, "initial_simplex": z0 + np.vstack(
                           [np.zeros(alg.dim), 0.25 * np.eye(alg.dim)]), "xatol": 1e-4, "fatol": 1e-6})
        if res.fun < best_val:
            best_val, best_z = float(res.fun), _project_to_ball(d, res.x)
    center = slice_volume(B, zero, d, method=method, n=n_final, seed=seed)
    at_best = slice_volume(B, best_z, d, method=method, n=n_final, seed=seed)
    notes = []
    if at_best.value > center.value:
        value, err, arg = at_best.value, at_best.std_error, best_z
    else:
        value, err, arg = center.value, center.std_error, zero
        if not np.allclose(best_z, 0):
            notes.append("search optimum did not beat the centre at final resolution")
    return SphericalFactor(float(value), float(err), [float(v) for v in arg], float(center.value),
                           float(center.std_error), n_eval, notes)


def family_member(couple: ComplementaryCouple, rng) -> HomogeneousSubgroup:
    """A random subgroup ``U_1 + V_2 + ... + V_s`` complementary to a horizontal ``V``."""
    alg, V = couple.alg, couple.V
    n1 = alg.layer_dims[0]
    m1 = n1 - V.dim
    for _ in range(100):
        U1 = rng.standard_normal((m1, n1))
        vecs = np.zeros((m1, alg.dim))
        vecs[:, :n1] = U1
        higher = np.eye(alg.dim)[n1:]
        try:
            U = HomogeneousSubgroup(alg, np.concatenate([vecs, higher]), name="family")
            ComplementaryCouple(U, V)
            return U
        except ValueError:
            continue
    raise RuntimeError("could not draw a complementary subgroup")


def pushforward_volume(source: HomogeneousSubgroup, target: ComplementaryCouple, box,
                       n: int = 100000, seed: int = 0, replicates: int = 16,
                       probe: int = 2**14) -> MeasureEstimate:
    """Hit-or-miss volume of ``pi_T^{T,V}(B)`` for a box ``B`` in source coordinates.

    ``target`` is the couple ``(T, V)``; the source must be complementary to
    ``V`` as well.  Points of a box around the image (orthonormal
    T-coordinates) are tested by mapping them back with ``pi_S^{S,V}``,
    which inverts the restricted projection.  The points are ``replicates``
    independently scrambled Sobol sets of at least ``n`` points in total; the
    standard error is the spread of the replicate estimates.
    """
    T, V = target.W, target.V
    back = ComplementaryCouple(source, V)
    lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
    k = lo.size
    pts = qmc.scale(qmc.Sobol(d=k, scramble=True, seed=rng_for(seed, 47)).random(probe), lo, hi)
    corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(k, -1).T
    img = T.to_coords(target.pi_W(source.from_coords(np.concatenate([pts, corners]))))
    tlo, thi = img.min(axis=0), img.max(axis=0)
    pad = 0.02 * (thi - tlo) + 1e-12
    tlo, thi = tlo - pad, thi + pad
    per = 2 ** int(np.ceil(np.log2(max(n / replicates, 2))))
    for _ in range(6):
        span = thi - tlo
        fractions, touched = [], False
        for r in range(replicates):
            u = qmc.Sobol(d=k, scramble=True, seed=rng_for(seed, 48, r)).random(per)
            ct = qmc.scale(u, tlo, thi)
            sc = source.to_coords(back.pi_W(T.from_coords(ct)))
            hit = np.all((sc >= lo) & (sc <= hi), axis=-1)
            fractions.append(hit.mean())
            edge = (ct[hit] < tlo + 0.005 * span) | (ct[hit] > thi - 0.005 * span)
            touched |= bool(np.any(edge))
        if not touched:
            break
        # the probe missed part of the image: grow the box and start again
        tlo, thi = tlo - 0.25 * span, thi + 0.25 * span
    vol = float(np.prod(thi - tlo))
    fr = np.array(fractions)
    return MeasureEstimate(vol * float(fr.mean()), vol * float(fr.std(ddof=1)) / np.sqrt(replicates),
                           int(per * replicates), "monte_carlo")


# -- graph measure and blow-ups -------------------------------------------------------------

@dataclass
class Ball:
    center: np.ndarray
    radius: float
    d: HomogeneousDistance

    def contains(self, p):
        return self.d(self.center, p) <= self.radius


@dataclass
class CoordBox:
    lo: np.ndarray
    hi: np.ndarray

    def contains(self, p):
        p = np.asarray(p, dtype=float)
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)


def graph_mu(phi: IntrinsicMap, region, n: int = 100000, seed: int = 0, box=None) -> MeasureEstimate:
    """``int_{Phi^-1(region)} J Phi dH^m`` by Monte Carlo over a W-coordinate box."""
    box = box if box is not None else phi.box
    if box is None:
        raise ValueError("graph_mu needs a sampling box in W-coordinates")
    lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
    rng = rng_for(seed, 61)
    c = rng.uniform(lo, hi, (n, lo.size))
    w = phi.couple.W.from_coords(c)
    ok = phi.in_domain(w)
    P = phi.graph_point(w[ok], check=False)
    hit = np.zeros(n, dtype=bool)
    hit[np.flatnonzero(ok)] = region.contains(P)
    if not hit.any():
        return MeasureEstimate(0.0, 0.0, n, "monte_carlo")
    vals = np.zeros(n)
    vals[hit] = phi.jacobian(c[hit])
    vol = float(np.prod(hi - lo))
    return MeasureEstimate(vol * float(vals.mean()), vol * float(vals.std(ddof=1)) / np.sqrt(n), n, "monte_carlo")


@dataclass
class BlowupReport:
    point: list
    t_schedule: list
    per_t: list
    density: float
    density_error: float
    beta: float
    beta_error: float
    relative_gap: float
    tangent_basis: list
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _projection_box(couple: ComplementaryCouple, d: HomogeneousDistance, radius: float, rng,
                    n: int = 20000) -> tuple[np.ndarray, np.ndarray]:
    """Box (W-coordinates) containing ``pi_W(B(0, radius))``, with 25% padding."""
    g = sample_ball(d, n, rng, radius)
    # push some samples to the sphere so the extremes are represented
    g = np.concatenate([g, d.alg.dilate(radius / np.maximum(d.norm(g), 1e-300), g)])
    c = couple.W.to_coords(couple.pi_W(g))
    half = 1.25 * np.abs(c).max(axis=0)
    return -half, half


def _scaled_sample(couple, phi, x, x_inv, t, lo, hi, n, seed, ti, which, flags):
    """Rescaled graph points ``delta_{1/t}(x^-1 Phi(sigma_x(delta_t eta)))`` and ``J Phi`` there,
    for scrambled Sobol points ``eta`` in the box."""
    alg, W = couple.alg, couple.W
    sobol = qmc.Sobol(d=lo.size, scramble=True, seed=rng_for(seed, 71, ti, which))
    eta = qmc.scale(sobol.random(n), lo, hi)
    w = couple.pi_W(alg.multiply(x, alg.dilate(t, W.from_coords(eta))))
    ok = phi.in_domain(w)
    if not ok.all():
        flags.append(f"t={t:g}: {int((~ok).sum())} samples outside the domain were dropped")
    jac = np.zeros(n)
    jac[ok] = phi.jacobian(W.to_coords(w[ok]))
    P = np.zeros_like(w)
    P[ok] = phi.graph_point(w[ok], check=False)
    rel = alg.dilate(1.0 / t, alg.multiply(x_inv, P))
    rel[~ok] = np.inf
    return rel, jac, eta


def default_blowup_schedule() -> np.ndarray:
    return 2.0 ** -np.arange(3, 10)


def federer_density(phi: IntrinsicMap, zeta, d: HomogeneousDistance, t_schedule=None,
                    centers_per_t: int = 64, n_mc: int = 2**15, seed: int = 0,
                    refine: bool = True, beta: SphericalFactor | None = None,
                    beta_kw: dict | None = None) -> BlowupReport:
    """Blow-up of the graph measure at ``x = Phi(zeta)``.

    For each scale ``t`` this maximises ``mu(B(y, t)) / t^M`` over centres
    ``y = x delta_t(z)``, ``z`` in the unit ball (so ``x`` lies in the ball),
    then extrapolates the maxima linearly to ``t = 0`` and compares with the
    spherical factor of the tangent subgroup.

    The integral is taken in rescaled variables ``w = sigma_x(delta_t eta)``:
    ``sigma_x`` preserves Lebesgue measure on W and ``delta_t`` scales it by
    ``t^M``, so no division by small numbers is needed.
    """
    couple, alg = phi.couple, phi.alg
    ts = default_blowup_schedule() if t_schedule is None else np.asarray(t_schedule, float)
    if np.any(np.diff(ts) >= 0):
        raise ValueError("t schedule must be strictly decreasing")
    zeta = np.asarray(zeta, dtype=float)
    x = phi.graph_point(zeta)
    x_inv = alg.inverse(x)
    lo, hi = _projection_box(couple, d, 2.0, rng_for(seed, 67))
    box_vol = float(np.prod(hi - lo))
    flags = []
    per_t = []
    for ti, t in enumerate(ts):
        # one point set selects the centre, an independent one measures it,
        # so the reported maximum carries no selection bias
        select = _scaled_sample(couple, phi, x, x_inv, t, lo, hi, n_mc, seed, ti, 0, flags)
        measure_set = _scaled_sample(couple, phi, x, x_inv, t, lo, hi, n_mc, seed, ti, 1, flags)

        def ratio(z, sample=select, with_hits=False):
            rel, jac, _ = sample
            z = _project_to_ball(d, np.asarray(z, dtype=float))
            inside = d.norm(alg.multiply(alg.inverse(z), rel)) <= 1.0
            vals = np.where(inside, jac, 0.0)
            if with_hits:
                return vals, inside
            return box_vol * float(vals.mean())

        centers = sample_ball(d, centers_per_t, rng_for(seed, 73, ti))
        scores = np.array([ratio(z) for z in centers])
        k = int(np.argmax(scores))
        best_z, best = centers[k], float(scores[k])
        if refine:
            res = minimize(lambda z: -ratio(z), best_z, method="Nelder-Mead",
                           options={"maxiter": 150, "initial_simplex": best_z + np.vstack(
                               [np.zeros(alg.dim), 0.1 * np.eye(alg.dim)])})
            if -res.fun > best:
                best_z = _project_to_ball(d, res.x)
        vals, inside = ratio(best_z, sample=measure_set, with_hits=True)
        value = box_vol * float(vals.mean())
        se = box_vol * float(vals.std(ddof=1)) / np.sqrt(n_mc)
        rel_pts = measure_set[2]
        span = hi - lo
        near_edge = np.any((rel_pts[inside] < lo + 0.02 * span) | (rel_pts[inside] > hi - 0.02 * span))
        if near_edge:
            flags.append(f"t={t:g}: hits near the sampling box edge, box may be too small")
        per_t.append({"t": float(t), "value": value, "std_error": se, "center": [float(v) for v in best_z]})

    tv = np.array([r["t"] for r in per_t])
    yv = np.array([r["value"] for r in per_t])
    sv = np.array([max(r["std_error"], 1e-12) for r in per_t])
    A = np.stack([np.ones_like(tv), tv], axis=1)
    coef, *_ = np.linalg.lstsq(A, yv, rcond=None)
    density = float(coef[0])
    cov = np.linalg.pinv(A.T @ A) @ A.T @ np.diag(sv**2) @ A @ np.linalg.pinv(A.T @ A)
    density_err = float(np.sqrt(cov[0, 0]))
    if np.max(sv / np.maximum(yv, 1e-12)) > 0.05:
        flags.append("Monte Carlo noise above 5% at some scale; raise n_mc")
    L = phi.differential(zeta)
    if beta is None:
        beta = spherical_factor(L.U, d, seed=seed, **(beta_kw or {}))
    gap = abs(density - beta.value) / beta.value
    return BlowupReport(
        point=[float(v) for v in x],
        t_schedule=[float(t) for t in ts],
        per_t=per_t,
        density=density,
        density_error=density_err,
        beta=beta.value,
        beta_error=beta.error,
        relative_gap=float(gap),
        tangent_basis=L.U.basis.T.tolist(),
        flags=flags,
    )


# -- Pansu differentials and level sets ------------------------------------------------------

@dataclass
class PansuDifferential:
    """Matrix of an h-homomorphism in exponential coordinates (target dim x source dim)."""

    matrix: np.ndarray
    errors: np.ndarray
    homomorphism_residual: float
    homogeneity_residual: float
    converged: bool

    def __call__(self, v):
        return np.asarray(v, dtype=float) @ self.matrix.T


def _target_ops(target: GradedAlgebra | None, p: int):
    if target is None:
        return (lambda a, b: a + b), (lambda a: -a), (lambda t, a: a * t)
    return target.multiply, target.inverse, target.dilate


def pansu_differential(f, x, alg: GradedAlgebra, target: GradedAlgebra | None = None,
                       t_schedule=None, tol: float = 1e-7, seed: int = 0) -> PansuDifferential:
    """Columns ``L(e_j) = lim delta_{1/t}(f(x)^-1 f(x delta_t e_j))`` by Richardson extrapolation.

    ``target`` is the graded algebra of the target group; ``None`` means an
    abelian ``R^p`` with all coordinates in degree one.
    """
    x = np.asarray(x, dtype=float)
    ts = 0.1 * 0.5 ** np.arange(9) if t_schedule is None else np.asarray(t_schedule, float)
    fx = np.asarray(f(x), dtype=float)
    p = fx.size
    mul, inv, dil = _target_ops(target, p)
    fx_inv = inv(fx)
    cols, errs = [], []
    for j in range(1, alg.dim + 1):
        vals = []
        for t in ts:
            step = alg.dilate(t, alg.basis(j))
            vals.append(dil(1.0 / t, mul(fx_inv, np.asarray(f(alg.multiply(x, step)), float))))
        est, err, _ = richardson(vals, ratio=float(ts[0] / ts[1]))
        cols.append(est)
        errs.append(err)
    Lm = np.stack(cols, axis=1)
    rng = rng_for(seed, 79)
    a = rng.uniform(-1, 1, (32, alg.dim))
    b = rng.uniform(-1, 1, (32, alg.dim))
    hom = np.abs(alg.multiply(a, b) @ Lm.T - mul(a @ Lm.T, b @ Lm.T)).max()
    tt = np.exp(rng.uniform(-2, 2, 32))
    homog = np.abs(alg.dilate(tt, a) @ Lm.T - dil(tt[:, None] if target is None else tt, a @ Lm.T)).max()
    errs = np.array(errs, dtype=float)
    return PansuDifferential(Lm, errs, float(hom), float(homog), bool(errs.max() <= tol))


def _subspace_basis(V) -> np.ndarray:
    return _basis_of(V)


def jacobians_JH_JV(rows, V) -> tuple[float, float]:
    """``J_H = |R^1 ^ ... ^ R^p|`` and ``J_V`` with the rows projected onto ``V``."""
    R = np.atleast_2d(np.asarray(rows, dtype=float))
    B = _subspace_basis(V)
    if R.shape[0] > B.shape[1]:
        raise ValueError(f"p = {R.shape[0]} exceeds dim V = {B.shape[1]}")
    JH = wedge_all(R).norm()
    JV = wedge_all(R @ B @ B.T).norm()
    return float(JH), float(JV)


@dataclass
class ImplicitSolution:
    point: np.ndarray
    residual: float
    iterations: int


def solve_implicit(f, couple: ComplementaryCouple, w, v0=None, tol: float = 1e-12,
                   max_iter: int = 50) -> ImplicitSolution:
    """Find ``v in V`` with ``f(w v) = 0`` by damped Newton.

    The update is ``v <- v delta`` with ``delta in V`` solving
    ``Df(w v)|_V delta = -f(w v)``, where ``Df`` is the Pansu differential.
    """
    alg, V = couple.alg, couple.V
    w = np.asarray(w, dtype=float)
    v = np.zeros(alg.dim) if v0 is None else np.asarray(v0, dtype=float)
    fx = np.atleast_1d(np.asarray(f(alg.multiply(w, v)), float))
    res = float(np.linalg.norm(fx))
    for it in range(max_iter):
        if res <= tol:
            return ImplicitSolution(v, res, it)
        D = pansu_differential(f, alg.multiply(w, v), alg).matrix @ V.basis
        if D.shape[0] != D.shape[1] or abs(np.linalg.det(D)) < 1e-12:
            raise ArithmeticError("singular restricted differential: J_V f vanishes")
        step = np.linalg.solve(D, -fx)
        lam = 1.0
        for _ in range(40):
            cand = alg.multiply(v, V.from_coords(lam * step))
            fc = np.atleast_1d(np.asarray(f(alg.multiply(w, cand)), float))
            rc = float(np.linalg.norm(fc))
            if rc < res:
                break
            lam *= 0.5
        else:
            raise ArithmeticError(f"Newton stalled at residual {res:.3g}")
        v, fx, res = cand, fc, rc
    if res > tol * 100:
        raise ArithmeticError(f"Newton did not converge: residual {res:.3g}")
    return ImplicitSolution(v, res, max_iter)


def implicit_map(f, couple: ComplementaryCouple, box=None, name: str = "implicit") -> IntrinsicMap:
    """The map ``phi`` with ``f(w phi(w)) = 0``, evaluated point by point."""

    def ev(w):
        w = np.asarray(w, dtype=float)
        flat = w.reshape(-1, w.shape[-1])
        out = np.array([solve_implicit(f, couple, wi).point for wi in flat])
        return out.reshape(w.shape)

    return IntrinsicMap(couple, ev, box=box, name=name)


def level_set_jacobian_ratio(f, V, W, x, alg: GradedAlgebra) -> float:
    """``|V ^ W| J_H f(x) / J_V f(x)``."""
    rows = pansu_differential(f, x, alg).matrix
    JH, JV = jacobians_JH_JV(rows, V)
    if JV < 1e-14:
        raise ArithmeticError("J_V f vanishes at x")
    vw = wedge(orienting_unit(V), orienting_unit(W)).norm()
    return vw * JH / JV


# -- end-to-end area check -----------------------------------------------------------------------

def area_check(phi: IntrinsicMap, region, d: HomogeneousDistance, n: int = 100000,
               k_points: int = 2, n_family: int = 10, seed: int = 0, blowup_kw: dict | None = None,
               gap_tol: float = 0.10, spread_tol: float = 0.02, beta_kw: dict | None = None) -> dict:
    """Check the area formula on ``Phi(region)``, ``region`` a W-coordinate box.

    Reports the graph measure, Federer densities at sampled points against the
    spherical factor of their tangents, and, when the spherical factor is
    constant over the sampled tangents, the implied spherical measure of the
    region and of its two halves.
    """
    lo, hi = np.asarray(region[0], float), np.asarray(region[1], float)
    couple = phi.couple
    mu = graph_mu(phi, CoordBox(np.full(phi.alg.dim, -np.inf), np.full(phi.alg.dim, np.inf)), n=n,
                  seed=seed, box=(lo, hi))
    rng = rng_for(seed, 83)
    pts = rng.uniform(lo + 0.25 * (hi - lo), hi - 0.25 * (hi - lo), (k_points, lo.size))
    checks = []
    betas = []
    for i, c in enumerate(pts):
        zeta = couple.W.from_coords(c)
        rep = federer_density(phi, zeta, d, seed=seed + i, beta_kw=beta_kw, **(blowup_kw or {}))
        checks.append({"w": c.tolist(), "density": rep.density, "beta": rep.beta,
                       "relative_gap": rep.relative_gap, "flags": rep.flags})
        betas.append(rep.beta)
    symmetric = None
    omega = None
    if couple.V.is_horizontal():
        for _ in range(n_family):
            U = family_member(couple, rng)
            betas.append(spherical_factor(U, d, seed=seed, **(beta_kw or {})).value)
        spread = (max(betas) - min(betas)) / float(np.mean(betas))
        symmetric = bool(spread <= spread_tol)
        omega = float(np.mean(betas))
    else:
        spread = float("nan")
    report = {
        "graph_measure": mu.to_dict(),
        "density_checks": checks,
        "densities_pass": all(ch["relative_gap"] <= gap_tol for ch in checks),
        "beta_spread": float(spread),
        "rotationally_symmetric": symmetric,
    }
    if symmetric:
        mid = 0.5 * (lo + hi)
        halves = []
        for a, b in ((lo, np.where(np.arange(lo.size) == 0, mid, hi)),
                     (np.where(np.arange(lo.size) == 0, mid, lo), hi)):
            m = graph_mu(phi, CoordBox(np.full(phi.alg.dim, -np.inf), np.full(phi.alg.dim, np.inf)),
                         n=n, seed=seed + 1, box=(a, b))
            halves.append(m)
        total = mu.value / omega
        parts = sum(h.value for h in halves) / omega
        err = np.sqrt(mu.std_error**2 + sum(h.std_error**2 for h in halves)) / omega
        report.update({
            "omega": omega,
            "spherical_measure": total,
            "spherical_measure_halves": [h.value / omega for h in halves],
            "halves_consistent": bool(abs(total - parts) <= 3 * err + 1e-12),
        })
    report["pass"] = bool(report["densities_pass"] and (symmetric is not False)
                          and report.get("halves_consistent", True))
    return report
