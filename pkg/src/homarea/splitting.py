"""Homogeneous subgroups, complementary couples and the associated projections."""

from __future__ import annotations

import numpy as np

from .algebra import GradedAlgebra, SpecError, ValidationReport
from .numerics import rng_for

RANK_TOL = 1e-10
CLOSURE_TOL = 1e-9


class SubgroupError(SpecError):
    def __init__(self, message, report: ValidationReport | None = None):
        super().__init__(message)
        self.report = report


def _orthonormalize(vectors: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Modified Gram-Schmidt on columns; keeps already orthonormal input unchanged."""
    out = []
    for v in vectors.T:
        v = v.astype(float).copy()
        for _ in range(2):
            for u in out:
                v -= (u @ v) * u
        nv = np.linalg.norm(v)
        if nv > tol:
            out.append(v / nv)
    if not out:
        return np.zeros((vectors.shape[0], 0))
    return np.stack(out, axis=1)


def _in_span(basis: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """Residual norms of the columns of ``vecs`` after projecting on the orthonormal ``basis``."""
    if basis.shape[1] == 0:
        return np.linalg.norm(vecs, axis=0)
    return np.linalg.norm(vecs - basis @ (basis.T @ vecs), axis=0)


def validate_subgroup(alg: GradedAlgebra, vectors) -> ValidationReport:
    """Check gradedness, bracket closure and dilation invariance of a spanning set."""
    report = ValidationReport()
    vecs = np.atleast_2d(np.asarray(vectors, dtype=float))
    if vecs.shape[-1] != alg.dim:
        report.add("dimension", expected=alg.dim, got=int(vecs.shape[-1]))
        return report
    span = _orthonormalize(vecs.T)
    scale = np.maximum(np.linalg.norm(vecs, axis=1), 1.0)
    for idx, v in enumerate(vecs):
        for s in range(1, alg.step + 1):
            part = np.zeros(alg.dim)
            part[alg.layer_slice(s)] = v[alg.layer_slice(s)]
            res = float(_in_span(span, part[:, None])[0])
            if res > CLOSURE_TOL * scale[idx]:
                report.add("graded", vector=idx, layer=s, residual=res, value=v.tolist())
                break
    k = span.shape[1]
    for a in range(k):
        for b in range(a + 1, k):
            br = alg.bracket(span[:, a], span[:, b])
            res = float(_in_span(span, br[:, None])[0])
            if res > CLOSURE_TOL:
                report.add("bracket_closed", pair=[a, b], residual=res)
    for t in (0.5, 3.0):
        moved = alg.dilate(t, span.T).T
        res = float(_in_span(span, moved).max()) if k else 0.0
        if res > CLOSURE_TOL * max(1.0, t**alg.step):
            report.add("dilation_invariant", t=t, residual=res)
    return report


class HomogeneousSubgroup:
    """A graded, bracket-closed subspace with per-layer orthonormal bases.

    ``basis`` is a (q, k) matrix whose columns are orthonormal and ordered
    by layer; ``layer_bases[s]`` holds the columns lying in layer ``s``.
    """

    def __init__(self, alg: GradedAlgebra, vectors, name: str | None = None, check: bool = True):
        self.alg = alg
        self.name = name
        vecs = np.asarray(vectors, dtype=float).reshape(-1, alg.dim)
        if check:
            report = validate_subgroup(alg, vecs)
            if not report.ok:
                first = report.violations[0]
                raise SubgroupError(f"not a homogeneous subgroup: {first}", report)
        cols, layer_bases, layer_of = [], {}, []
        for s in range(1, alg.step + 1):
            sl = alg.layer_slice(s)
            part = np.zeros_like(vecs)
            part[:, sl] = vecs[:, sl]
            ob = _orthonormalize(part.T)
            layer_bases[s] = ob
            cols.append(ob)
            layer_of += [s] * ob.shape[1]
        self.basis = np.concatenate(cols, axis=1) if cols else np.zeros((alg.dim, 0))
        self.layer_bases = layer_bases
        self.basis_layers = np.array(layer_of, dtype=int)
        self.dim = self.basis.shape[1]
        self.layer_dims = tuple(layer_bases[s].shape[1] for s in range(1, alg.step + 1))
        self.hausdorff_dim = int(sum(s * m for s, m in enumerate(self.layer_dims, start=1)))
        self.projector = self.basis @ self.basis.T

    def __repr__(self) -> str:
        label = self.name or "subgroup"
        return f"<HomogeneousSubgroup {label} layers={list(self.layer_dims)}>"

    def to_coords(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.basis

    def from_coords(self, c) -> np.ndarray:
        return np.asarray(c, dtype=float) @ self.basis.T

    def residual(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - x @ self.projector, axis=-1)

    def is_horizontal(self) -> bool:
        return all(m == 0 for m in self.layer_dims[1:])


def subgroup(alg: GradedAlgebra, vectors, name=None) -> HomogeneousSubgroup:
    return HomogeneousSubgroup(alg, vectors, name=name)


def named_subgroups(alg: GradedAlgebra) -> dict:
    """``vertical = span(e2,...,eq)`` and ``horizontal = span(e1)``."""
    q = alg.dim
    eye = np.eye(q)
    return {
        "vertical": HomogeneousSubgroup(alg, eye[1:], name="vertical"),
        "horizontal": HomogeneousSubgroup(alg, eye[:1], name="horizontal"),
    }


class ComplementaryCouple:
    """An ordered couple (W, V) with ``G = W V`` and ``W & V = {0}``.

    The order matters: ``project`` returns the factors of ``g = w v``.
    """

    def __init__(self, W: HomogeneousSubgroup, V: HomogeneousSubgroup):
        if W.alg is not V.alg and (W.alg.layer_dims != V.alg.layer_dims
                                   or not np.array_equal(W.alg.structure, V.alg.structure)):
            raise SpecError("couple members live in different groups")
        alg = W.alg
        self.alg, self.W, self.V = alg, W, V
        if W.dim + V.dim != alg.dim:
            raise SubgroupError(f"dimension deficit: dim W + dim V = {W.dim + V.dim} != {alg.dim}")
        self.layer_table = []
        self._solvers = {}
        for s in range(1, alg.step + 1):
            sl = alg.layer_slice(s)
            Ws = W.layer_bases[s][sl]
            Vs = V.layer_bases[s][sl]
            m, l = Ws.shape[1], Vs.shape[1]
            if m + l != alg.layer_dims[s - 1]:
                raise SubgroupError(f"layer {s}: dimensions {m}+{l} != {alg.layer_dims[s - 1]}")
            block = np.concatenate([Ws, Vs], axis=1)
            sv = np.linalg.svd(block, compute_uv=False) if block.size else np.array([1.0])
            if sv.min() < 1e-9:
                raise SubgroupError(f"overlap: W and V intersect in layer {s}")
            self._solvers[s] = (np.linalg.inv(block), Ws, Vs, m)
            self.layer_table.append((m, l))

    def __repr__(self) -> str:
        return f"<ComplementaryCouple W={self.W!r} V={self.V!r}>"

    def project(self, g):
        """Return ``(w, v)`` with ``g = w v``, solving one linear system per layer."""
        alg = self.alg
        g = alg._check(g)
        w = np.zeros_like(g)
        v = np.zeros_like(g)
        for s in range(1, alg.step + 1):
            sl = alg.layer_slice(s)
            inv, Ws, Vs, m = self._solvers[s]
            if s == 1:
                r = g[..., sl]
            else:
                # layer s of w v with w_s = v_s = 0 is the BCH correction from lower layers
                r = g[..., sl] - alg.multiply(w, v)[..., sl]
            c = r @ inv.T
            w[..., sl] = c[..., :m] @ Ws.T
            v[..., sl] = c[..., m:] @ Vs.T
        return w, v

    def pi_W(self, g):
        return self.project(g)[0]

    def pi_V(self, g):
        return self.project(g)[1]

    def reversed(self) -> "ComplementaryCouple":
        return ComplementaryCouple(self.V, self.W)


def validate_couple(W: HomogeneousSubgroup, V: HomogeneousSubgroup) -> ComplementaryCouple:
    return ComplementaryCouple(W, V)


def project(couple: ComplementaryCouple, g):
    return couple.project(g)


def restricted_projection(couple: ComplementaryCouple, U: HomogeneousSubgroup | None, u):
    """``pi_W`` restricted to ``U``; ``U`` must be complementary to ``couple.V``."""
    if U is not None:
        ComplementaryCouple(U, couple.V)
        if np.any(U.residual(u) > 1e-9 * np.maximum(1.0, np.linalg.norm(u, axis=-1))):
            raise ValueError("point is not in U")
    return couple.pi_W(u)


def sigma_translate(couple: ComplementaryCouple, x, eta):
    """``sigma_x(eta) = pi_W(x eta)``."""
    return couple.pi_W(couple.alg.multiply(x, eta))


def translate_map(couple: ComplementaryCouple, phi, x):
    """Translate an intrinsic map by ``x``: ``phi_x(eta) = pi_V(x^-1 eta)^-1 phi(sigma_{x^-1}(eta))``.

    ``phi`` is any callable W -> V, optionally with an ``in_domain`` method.
    Returns an :class:`homarea.graph.IntrinsicMap` whose domain is the
    translated domain ``A_x``.
    """
    from .graph import IntrinsicMap

    alg = couple.alg
    x = np.asarray(x, dtype=float)
    x_inv = alg.inverse(x)
    base_domain = getattr(phi, "in_domain", None)

    def evaluator(eta):
        moved = alg.multiply(x_inv, eta)
        w0, v0 = couple.project(moved)
        return alg.multiply(alg.inverse(v0), phi(w0))

    def in_domain(eta):
        if base_domain is None:
            return np.ones(np.shape(eta)[:-1], dtype=bool)
        return base_domain(sigma_translate(couple, x_inv, eta))

    return IntrinsicMap(couple, evaluator, in_domain=in_domain, name=f"translated({getattr(phi, 'name', 'phi')})")


def intrinsic_lipschitz_estimate(couple: ComplementaryCouple, phi, d, n: int = 5000,
                                 box=None, seed: int = 0) -> dict:
    """Largest sampled ratio ``||pi_V(P^-1 Q)|| / ||pi_W(P^-1 Q)||`` over graph pairs.

    This is a lower bound on the intrinsic Lipschitz constant.  Pairs whose
    W-part vanishes are skipped and counted.
    """
    alg = couple.alg
    rng = rng_for(seed, 23)
    if box is None:
        box = getattr(phi, "box", None)
    if box is None:
        lo, hi = -np.ones(couple.W.dim), np.ones(couple.W.dim)
    else:
        lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
    c1 = rng.uniform(lo, hi, (n, lo.size))
    c2 = rng.uniform(lo, hi, (n, lo.size))
    w1, w2 = couple.W.from_coords(c1), couple.W.from_coords(c2)
    P = alg.multiply(w1, phi(w1))
    Q = alg.multiply(w2, phi(w2))
    g = alg.multiply(alg.inverse(P), Q)
    pw, pv = couple.project(g)
    nw, nv = d.norm(pw), d.norm(pv)
    ok = nw > 1e-12
    ratios = nv[ok] / nw[ok]
    return {
        "value": float(ratios.max()) if ratios.size else 0.0,
        "n_pairs": int(n),
        "skipped": int((~ok).sum()),
    }
