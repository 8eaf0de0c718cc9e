"""Intrinsic graphs, intrinsically linear maps and intrinsic Jacobians."""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .algebra import SpecError, heisenberg
from .exterior import orienting_unit, wedge
from .numerics import poly_derivative, richardson, rng_for, sphere_directions
from .splitting import ComplementaryCouple, HomogeneousSubgroup, named_subgroups


class DomainError(ValueError):
    pass


class IntrinsicMap:
    """A map ``phi: A -> V`` on a subset of ``W`` for a couple ``(W, V)``.

    ``evaluator`` maps points of W (shape (..., q)) to points of V.  Optional
    extras:

    * ``box``: ``(lo, hi)`` in orthonormal W-coordinates, used as the domain
      and as the default sampling region;
    * ``in_domain``: predicate on W points overriding the box;
    * ``gradient``: W-coordinates -> (..., p, n1 - p) matrix of the intrinsic
      differential when V is horizontal and orthogonal to W.
    """

    def __init__(self, couple: ComplementaryCouple, evaluator, box=None, in_domain=None,
                 gradient=None, name: str | None = None):
        self.couple = couple
        self.alg = couple.alg
        self.evaluator = evaluator
        self.box = None if box is None else (np.asarray(box[0], float), np.asarray(box[1], float))
        self._in_domain = in_domain
        self.gradient = gradient
        self.name = name or "phi"

    def __repr__(self) -> str:
        return f"<IntrinsicMap {self.name}>"

    def in_domain(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if self._in_domain is not None:
            return np.asarray(self._in_domain(w), dtype=bool)
        if self.box is None:
            return np.ones(w.shape[:-1], dtype=bool)
        c = self.couple.W.to_coords(w)
        return np.all((c >= self.box[0]) & (c <= self.box[1]), axis=-1)

    def __call__(self, w) -> np.ndarray:
        return np.asarray(self.evaluator(np.asarray(w, dtype=float)), dtype=float)

    def graph_point(self, w, check: bool = True) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if check and not np.all(self.in_domain(w)):
            raise DomainError("graph_point called outside the domain of phi")
        return self.alg.multiply(w, self(w))

    def phi_tilde(self, c) -> np.ndarray:
        """``phi`` in coordinates: W-coordinates -> V-coordinates."""
        return self.couple.V.to_coords(self(self.couple.W.from_coords(c)))

    def jacobian(self, c) -> np.ndarray:
        """Intrinsic Jacobian at W-coordinates ``c`` (vectorised when a gradient is known)."""
        c = np.asarray(c, dtype=float)
        if self.gradient is not None:
            return jacobian_minors_batch(self.gradient(c))
        flat = c.reshape(-1, c.shape[-1])
        out = np.array([
            jacobian_wedge(self.couple, estimate_intrinsic_differential(self, self.couple.W.from_coords(ci)))
            for ci in flat
        ])
        return out.reshape(c.shape[:-1])

    def differential(self, w) -> "IntrinsicLinearMap":
        """Intrinsic differential at ``w``: analytic when a gradient is known, estimated otherwise."""
        w = np.asarray(w, dtype=float)
        if self.gradient is not None:
            return IntrinsicLinearMap.from_matrix(self.couple, self.gradient(self.couple.W.to_coords(w)))
        return estimate_intrinsic_differential(self, w)


def graph_point(phi: IntrinsicMap, w) -> np.ndarray:
    return phi.graph_point(w)


# -- intrinsically linear maps ------------------------------------------------------

def _require_orthogonal_horizontal(couple: ComplementaryCouple):
    V, W = couple.V, couple.W
    if not V.is_horizontal():
        raise SpecError("this operation needs a horizontal V")
    if np.abs(V.basis.T @ W.basis).max(initial=0.0) > 1e-10:
        raise SpecError("this operation needs V orthogonal to W")


class IntrinsicLinearMap:
    """An intrinsically linear map ``L: W -> V`` represented by its graph subgroup ``U``.

    ``L(w) = pi_V^{U,V}(w)^{-1}`` so that ``w L(w) = pi_U^{U,V}(w) in U``.
    """

    def __init__(self, couple: ComplementaryCouple, U: HomogeneousSubgroup, matrix=None):
        self.couple = couple
        self.alg = couple.alg
        self.U = U
        self._UV = ComplementaryCouple(U, couple.V)
        self._matrix = None if matrix is None else np.asarray(matrix, dtype=float)
        self.diagnostics: dict = {}

    def __repr__(self) -> str:
        return f"<IntrinsicLinearMap U={self.U!r}>"

    def __call__(self, w) -> np.ndarray:
        return self.alg.inverse(self._UV.project(w)[1])

    @classmethod
    def from_subgroup(cls, couple: ComplementaryCouple, U: HomogeneousSubgroup):
        return cls(couple, U)

    @classmethod
    def from_matrix(cls, couple: ComplementaryCouple, M) -> "IntrinsicLinearMap":
        """Horizontal-V representation: ``M`` is p x (n1 - p), rows over the V-basis,
        columns over the layer-1 W-basis."""
        _require_orthogonal_horizontal(couple)
        W, V, alg = couple.W, couple.V, couple.alg
        M = np.asarray(M, dtype=float).reshape(V.dim, W.layer_dims[0])
        W1 = W.layer_bases[1]
        lifted = W1 + V.basis @ M
        higher = W.basis[:, W.layer_dims[0]:]
        U = HomogeneousSubgroup(alg, np.concatenate([lifted, higher], axis=1).T, name="graph(L)")
        return cls(couple, U, matrix=M)

    @classmethod
    def from_map(cls, couple: ComplementaryCouple, fn, n_check: int = 64, seed: int = 0,
                 tol: float = 1e-8) -> "IntrinsicLinearMap":
        """Graph subgroup of a callable ``fn: W -> V``, after checking homogeneity and graph closure."""
        alg, W = couple.alg, couple.W
        rng = rng_for(seed, 31)
        c = rng.uniform(-1, 1, (n_check, W.dim))
        w = W.from_coords(c)
        t = np.exp(rng.uniform(np.log(0.2), np.log(5.0), n_check))
        lhs = np.asarray(fn(alg.dilate(t, w)), float)
        rhs = alg.dilate(t, np.asarray(fn(w), float))
        err = float(np.abs(lhs - rhs).max() / max(1.0, np.abs(rhs).max()))
        if err > tol:
            raise SpecError(f"map is not homogeneous: |L(d_t w) - d_t L(w)| = {err:.3g}")
        vecs = []
        for j in range(W.dim):
            s = W.basis_layers[j]
            wj = W.basis[:, j]
            u = alg.multiply(wj, np.asarray(fn(wj), float))
            part = np.zeros(alg.dim)
            part[alg.layer_slice(s)] = u[alg.layer_slice(s)]
            vecs.append(part)
        U = HomogeneousSubgroup(alg, np.array(vecs), name="graph(L)")
        L = cls(couple, U)
        gp = alg.multiply(w, np.asarray(fn(w), float))
        res = float(U.residual(gp).max())
        if res > 1e-8 * max(1.0, np.abs(gp).max()):
            raise SpecError(f"graph of the map is not a subgroup (residual {res:.3g})")
        return L

    def matrix(self) -> np.ndarray:
        """``p x (n1 - p)`` matrix of ``L`` on the layer-1 W-basis (horizontal V only)."""
        if self._matrix is not None:
            return self._matrix
        _require_orthogonal_horizontal(self.couple)
        W1 = self.couple.W.layer_bases[1]
        return self.couple.V.to_coords(self(W1.T)).T

    def is_homogeneous(self, n: int = 64, seed: int = 0, tol: float = 1e-9) -> bool:
        alg, W = self.alg, self.couple.W
        rng = rng_for(seed, 37)
        w = W.from_coords(rng.uniform(-1, 1, (n, W.dim)))
        t = np.exp(rng.uniform(np.log(0.2), np.log(5.0), n))
        return bool(np.abs(self(alg.dilate(t, w)) - alg.dilate(t, self(w))).max() <= tol * 25)


def graph_subgroup(L: IntrinsicLinearMap) -> HomogeneousSubgroup:
    return L.U


def il_distance(L, T, d, n: int = 4096, seed: int = 0) -> float:
    """``sup d(L(w), T(w))`` over a deterministic sample of the unit sphere of W."""
    W = L.couple.W
    dirs = sphere_directions(W.dim, n, seed=seed)
    w = W.from_coords(dirs)
    w = d.alg.dilate(1.0 / d.norm(w), w)
    return float(d(L(w), T(w)).max())


# -- numerical intrinsic differential ---------------------------------------------------

def default_t_schedule() -> np.ndarray:
    return 0.1 * 0.5 ** np.arange(11)


def translated_at(phi: IntrinsicMap, x):
    """``eta -> phi_{x^-1}(eta) = pi_V(x eta)^-1 phi(sigma_x(eta))``."""
    couple, alg = phi.couple, phi.alg

    def evaluate(eta):
        w0, v0 = couple.project(alg.multiply(x, eta))
        return alg.multiply(alg.inverse(v0), phi(w0))

    return evaluate


def estimate_intrinsic_differential(phi: IntrinsicMap, w_bar, t_schedule=None, d=None,
                                    strict: bool = False, tol: float = 1e-6) -> IntrinsicLinearMap:
    """Estimate ``d phi_{w_bar}`` from the blow-ups ``delta_{1/t} phi_{x^-1}(delta_t w_j)``.

    Each W-basis direction is extrapolated to ``t -> 0``; the result carries
    ``diagnostics`` with per-direction error estimates, the residual of the
    defining limit at the smallest ``t`` and a convergence flag.
    """
    from .metric import HomogeneousDistance

    couple, alg, W = phi.couple, phi.alg, phi.couple.W
    w_bar = np.asarray(w_bar, dtype=float)
    x = phi.graph_point(w_bar)
    f = translated_at(phi, x)
    ts = default_t_schedule() if t_schedule is None else np.asarray(t_schedule, float)
    if np.any(np.diff(ts) >= 0):
        raise ValueError("t schedule must be strictly decreasing")
    ratio = float(ts[0] / ts[1]) if len(ts) > 1 else 2.0
    vecs, errors = [], []
    for j in range(W.dim):
        wj = W.basis[:, j]
        s = W.basis_layers[j]
        vals = [alg.dilate(1.0 / t, f(alg.dilate(t, wj))) for t in ts]
        est, err, _ = richardson(vals, ratio=ratio)
        errors.append(float(err))
        part = np.zeros(alg.dim)
        sl = alg.layer_slice(s)
        part[sl] = wj[sl] + est[sl]
        vecs.append(part)
    U = HomogeneousSubgroup(alg, np.array(vecs), name="tangent", check=False)
    L = IntrinsicLinearMap(couple, U)
    d = d or HomogeneousDistance(alg)
    dirs = sphere_directions(W.dim, 256, seed=1)
    wu = W.from_coords(dirs)
    wu = alg.dilate(1.0 / d.norm(wu), wu)
    t_min = float(ts[-1])
    wt = alg.dilate(t_min, wu)
    resid = d.norm(alg.multiply(alg.inverse(L(wt)), f(wt))) / t_min
    converged = bool(max(errors, default=0.0) <= tol)
    L.diagnostics = {
        "direction_errors": errors,
        "residual_at_min_t": float(resid.max()),
        "t_min": t_min,
        "converged": converged,
    }
    if strict and not converged:
        raise ArithmeticError(f"intrinsic differential did not converge: {errors}")
    return L


# -- projected vector fields and intrinsic partial derivatives ---------------------------

def _direction(alg, j):
    if isinstance(j, (int, np.integer)):
        return alg.basis(int(j))
    return np.asarray(j, dtype=float)


def projected_vector_field(phi: IntrinsicMap, j, w) -> np.ndarray:
    """``d(pi_W)_{Phi(w)} X_j(Phi(w))`` in orthonormal W-coordinates.

    ``j`` is a 1-based basis index (or a vector) of a horizontal direction.
    Differentiates ``s -> pi_W(Phi(w) (s e_j))``, a polynomial of degree at
    most the step, with an exact stencil.
    """
    couple, alg = phi.couple, phi.alg
    _require_orthogonal_horizontal(couple)
    e = _direction(alg, j)
    w = np.asarray(w, dtype=float)
    p = phi.graph_point(w)

    def curve(s):
        steps = s.reshape((-1,) + (1,) * p.ndim) * e
        return couple.pi_W(alg.multiply(p, steps))

    return couple.W.to_coords(poly_derivative(curve))


def _rk4(field, c0, s, n_steps):
    h = s / n_steps
    c = np.asarray(c0, dtype=float)
    for _ in range(n_steps):
        k1 = field(c)
        k2 = field(c + 0.5 * h * k1)
        k3 = field(c + 0.5 * h * k2)
        k4 = field(c + h * k3)
        c = c + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return c


def integral_curve(phi: IntrinsicMap, j, c0, s: float, tol: float = 1e-8, max_doublings: int = 12):
    """End point (W-coordinates) of the projected-field integral curve from ``c0`` after time ``s``.

    The step count doubles until halving the step changes the end point by < ``tol``.
    """
    W = phi.couple.W

    def field(c):
        return projected_vector_field(phi, j, W.from_coords(c))

    def check(c):
        if not np.all(phi.in_domain(W.from_coords(c))):
            raise DomainError("integral curve left the domain")

    n = 4
    prev = _rk4(field, c0, s, n)
    check(prev)
    for _ in range(max_doublings):
        n *= 2
        cur = _rk4(field, c0, s, n)
        check(cur)
        if np.max(np.abs(cur - prev)) < tol:
            return cur
        prev = cur
    return prev


def intrinsic_partial_derivative(phi: IntrinsicMap, j, w_tilde, s_schedule=None,
                                 perturb: float = 1e-6, seed: int = 0) -> dict:
    """``D^phi_{X_j} phi~`` at W-coordinates ``w_tilde`` via symmetric quotients along the curve.

    Also differentiates along a curve started at a slightly perturbed point and
    reports the disagreement.
    """
    w_tilde = np.asarray(w_tilde, dtype=float)
    ss = 0.05 * 0.5 ** np.arange(6) if s_schedule is None else np.asarray(s_schedule, float)

    def derivative(c0):
        base = []
        for s in ss:
            fwd = integral_curve(phi, j, c0, s, tol=1e-12)
            bwd = integral_curve(phi, j, c0, -s, tol=1e-12)
            base.append((phi.phi_tilde(fwd) - phi.phi_tilde(bwd)) / (2 * s))
        return richardson(base, ratio=float(ss[0] / ss[1]), order_start=2, order_step=2)

    value, err, _ = derivative(w_tilde)
    rng = rng_for(seed, 41)
    alt, _, _ = derivative(w_tilde + perturb * rng.standard_normal(w_tilde.shape))
    return {
        "value": np.asarray(value),
        "error": float(err),
        "perturbed_disagreement": float(np.max(np.abs(alt - value))),
    }


def intrinsic_gradient(phi: IntrinsicMap, w_tilde, **kw) -> np.ndarray:
    """Matrix ``p x (n1 - p)`` of intrinsic partial derivatives along the layer-1 W-basis."""
    W1 = phi.couple.W.layer_bases[1]
    cols = [intrinsic_partial_derivative(phi, W1[:, k], w_tilde, **kw)["value"] for k in range(W1.shape[1])]
    return np.stack(cols, axis=-1)


# -- Jacobians ----------------------------------------------------------------------------

def jacobian_wedge(couple: ComplementaryCouple, L: IntrinsicLinearMap) -> float:
    """``|V ^ W| / |V ^ U|`` with ``U`` the graph subgroup of ``L``."""
    v = orienting_unit(couple.V)
    num = wedge(v, orienting_unit(couple.W)).norm()
    den = wedge(v, orienting_unit(L.U)).norm()
    if den < 1e-14:
        raise ValueError("degenerate graph subgroup: |V ^ U| vanishes")
    return num / den


def jacobian_minors(grad, max_explicit: int = 6) -> float:
    """``sqrt(1 + sum of all squared minors)`` of a ``p x (n1 - p)`` matrix."""
    M = np.atleast_2d(np.asarray(grad, dtype=float))
    if M.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {M.shape}")
    p, r = M.shape
    if min(p, r) > max_explicit:
        return jacobian_gram(M)
    total = 1.0
    for ell in range(1, min(p, r) + 1):
        for rows in combinations(range(p), ell):
            for cols in combinations(range(r), ell):
                total += np.linalg.det(M[np.ix_(rows, cols)]) ** 2
    return float(np.sqrt(total))


def jacobian_gram(grad) -> float:
    """``sqrt(det(I + M^T M))``, the Euclidean Jacobian of ``[M; I]``."""
    M = np.atleast_2d(np.asarray(grad, dtype=float))
    return float(np.sqrt(np.linalg.det(np.eye(M.shape[1]) + M.T @ M)))


def jacobian_minors_batch(grads) -> np.ndarray:
    """Vectorised ``jacobian_gram`` over leading axes."""
    M = np.asarray(grads, dtype=float)
    r = M.shape[-1]
    return np.sqrt(np.linalg.det(np.eye(r) + np.swapaxes(M, -1, -2) @ M))


def _graph_map(L: IntrinsicLinearMap):
    alg = L.alg
    return lambda w: alg.multiply(w, L(w))


def jacobian_measure_mc(couple: ComplementaryCouple, L: IntrinsicLinearMap, box, n: int = 100000,
                        seed: int = 0, method: str = "hit_or_miss"):
    """Monte Carlo ``H^m(G(L)(B)) / H^m(B)`` for a W-coordinate box ``B``.

    ``hit_or_miss`` samples a box around the image in orthonormal
    U-coordinates and tests membership by projecting back to W (the
    projection restricted to U inverts the graph map).  ``area`` integrates
    the Euclidean Jacobian of the coordinate graph map over ``B``.
    """
    from .measure import MeasureEstimate

    W, U = couple.W, L.U
    lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
    vol_B = float(np.prod(hi - lo))
    if vol_B <= 0:
        raise ValueError("box must have positive volume")
    rng = rng_for(seed, 43)
    G = _graph_map(L)
    if method == "area":
        c = rng.uniform(lo, hi, (n, lo.size))
        cols = []
        for k in range(lo.size):
            e = np.zeros(lo.size)
            e[k] = 1.0
            cols.append(poly_derivative(lambda s: G(W.from_coords(c[None] + s[:, None, None] * e))))
        D = np.stack(cols, axis=-1)
        jac = np.sqrt(np.linalg.det(np.swapaxes(D, -1, -2) @ D))
        return MeasureEstimate(float(jac.mean()), float(jac.std(ddof=1) / np.sqrt(n)), n, "monte_carlo")
    if method != "hit_or_miss":
        raise ValueError(f"unknown method {method!r}")

    from .measure import pushforward_volume

    image = pushforward_volume(W, ComplementaryCouple(U, couple.V), (lo, hi), n=n, seed=seed)
    return MeasureEstimate(image.value / vol_B, image.std_error / vol_B, n, "monte_carlo")


# -- fixtures -------------------------------------------------------------------------------

def heisenberg_couple():
    alg = heisenberg(1)
    subs = named_subgroups(alg)
    return ComplementaryCouple(subs["vertical"], subs["horizontal"])


def phi_fixture(name: str, couple: ComplementaryCouple | None = None, box=None) -> IntrinsicMap:
    """Built-in maps on the Heisenberg couple W = span(e2, e3), V = span(e1).

    ``zero``, ``linear:a`` (phi(0,y,t) = (a y, 0, 0)) and ``parabola``
    (phi(0,y,t) = (-y^2, 0, 0)).
    """
    couple = couple or heisenberg_couple()
    if couple.alg.layer_dims != (2, 1):
        raise SpecError("built-in maps live on heisenberg1")
    if box is None:
        box = ([-2.0, -2.0], [2.0, 2.0])
    name = name.strip()
    if name == "zero":
        a = 0.0
    elif name.startswith("linear"):
        arg = name[len("linear"):].strip("(): ")
        a = float(arg) if arg else 1.0
    elif name == "parabola":
        def ev(w):
            out = np.zeros_like(w)
            out[..., 0] = -w[..., 1] ** 2
            return out

        def grad(c):
            c = np.asarray(c, float)
            return (-2.0 * c[..., 0])[..., None, None]

        return IntrinsicMap(couple, ev, box=box, gradient=grad, name="parabola")
    else:
        raise SpecError(f"unknown map fixture {name!r}; expected zero, linear:a or parabola")

    def ev(w):
        out = np.zeros_like(w)
        out[..., 0] = a * w[..., 1]
        return out

    def grad(c):
        c = np.asarray(c, float)
        return np.full(c.shape[:-1] + (1, 1), a)

    label = "zero" if name == "zero" else f"linear:{a:g}"
    return IntrinsicMap(couple, ev, box=box, gradient=grad, name=label)
