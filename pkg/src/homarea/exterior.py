"""Multivectors over an orthonormal basis: wedge, norm, Hodge star, orienting units."""

from __future__ import annotations

from itertools import combinations

import numpy as np

ZERO_TOL = 1e-14


def _merge_sign(I: tuple, J: tuple) -> int:
    """Sign of the permutation sorting the concatenation ``I + J`` (both increasing)."""
    inversions = 0
    for i in I:
        for j in J:
            if i > j:
                inversions += 1
    return -1 if inversions % 2 else 1


class Multivector:
    """A homogeneous k-vector in R^q, stored as {increasing 1-based index tuple: coefficient}."""

    __slots__ = ("q", "k", "coeffs")

    def __init__(self, q: int, k: int, coeffs=None):
        self.q, self.k = int(q), int(k)
        if not 0 <= self.k <= self.q:
            raise ValueError(f"degree {k} outside 0..{q}")
        clean = {}
        for idx, c in (coeffs or {}).items():
            idx = tuple(int(i) for i in idx)
            if len(idx) != self.k or any(b <= a for a, b in zip(idx, idx[1:])):
                raise ValueError(f"index {idx} must be strictly increasing of length {k}")
            if idx and not (1 <= idx[0] and idx[-1] <= self.q):
                raise ValueError(f"index {idx} outside 1..{q}")
            if c != 0.0:
                clean[idx] = clean.get(idx, 0.0) + float(c)
        self.coeffs = clean

    @classmethod
    def vector(cls, v) -> "Multivector":
        v = np.asarray(v, dtype=float)
        return cls(v.size, 1, {(i + 1,): c for i, c in enumerate(v) if c != 0.0})

    @classmethod
    def basis_blade(cls, q: int, idx) -> "Multivector":
        idx = tuple(sorted(idx))
        return cls(q, len(idx), {idx: 1.0})

    def __repr__(self) -> str:
        terms = " + ".join(f"{c:.6g} e{''.join(map(str, i))}" for i, c in sorted(self.coeffs.items()))
        return f"Multivector(q={self.q}, k={self.k}: {terms or '0'})"

    def __add__(self, other: "Multivector") -> "Multivector":
        self._same_space(other)
        out = dict(self.coeffs)
        for i, c in other.coeffs.items():
            out[i] = out.get(i, 0.0) + c
        return Multivector(self.q, self.k, out)

    def __sub__(self, other: "Multivector") -> "Multivector":
        return self + other * -1.0

    def __mul__(self, s: float) -> "Multivector":
        return Multivector(self.q, self.k, {i: s * c for i, c in self.coeffs.items()})

    __rmul__ = __mul__

    def __xor__(self, other: "Multivector") -> "Multivector":
        return wedge(self, other)

    def _same_space(self, other):
        if (self.q, self.k) != (other.q, other.k):
            raise ValueError("multivectors of different shape")

    def norm(self) -> float:
        return float(np.sqrt(sum(c * c for c in self.coeffs.values())))

    def dot(self, other: "Multivector") -> float:
        self._same_space(other)
        return float(sum(c * other.coeffs.get(i, 0.0) for i, c in self.coeffs.items()))

    def get(self, idx) -> float:
        return self.coeffs.get(tuple(idx), 0.0)

    def allclose(self, other: "Multivector", atol: float = 1e-12) -> bool:
        diff = self - other
        return all(abs(c) <= atol for c in diff.coeffs.values())


def wedge(a: Multivector, b: Multivector) -> Multivector:
    if a.q != b.q:
        raise ValueError("wedge of multivectors in different ambient spaces")
    if a.k + b.k > a.q:
        raise ValueError(f"degree overflow: {a.k} + {b.k} > {a.q}")
    out: dict[tuple, float] = {}
    for I, ca in a.coeffs.items():
        sI = set(I)
        for J, cb in b.coeffs.items():
            if sI.intersection(J):
                continue
            K = tuple(sorted(I + J))
            out[K] = out.get(K, 0.0) + _merge_sign(I, J) * ca * cb
    return Multivector(a.q, a.k + b.k, out)


def wedge_all(vectors) -> Multivector:
    """``v_1 ^ ... ^ v_k`` for the rows of ``vectors``."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    q = vectors.shape[1]
    acc = Multivector(q, 0, {(): 1.0})
    for v in vectors:
        acc = wedge(acc, Multivector.vector(v))
    return acc


def _basis_columns(S) -> np.ndarray:
    cols = getattr(S, "basis", S)
    return np.asarray(cols, dtype=float)


def orienting_unit(S) -> Multivector:
    """Unit simple k-vector of a subspace (a subgroup or a (q, k) column matrix).

    The sign is fixed so the first nonzero coefficient is positive.
    """
    cols = _basis_columns(S)
    if cols.ndim != 2 or cols.shape[1] == 0:
        raise ValueError("orienting unit of a zero-dimensional subspace")
    ortho = []
    for v in cols.T:
        v = v.copy()
        for _ in range(2):
            for u in ortho:
                v -= (u @ v) * u
        nv = np.linalg.norm(v)
        if nv < 1e-12:
            raise ValueError("spanning set is linearly dependent")
        ortho.append(v / nv)
    blade = wedge_all(np.array(ortho))
    for idx in sorted(blade.coeffs):
        c = blade.coeffs[idx]
        if abs(c) > 1e-12:
            if c < 0:
                blade = blade * -1.0
            break
    return blade


def hodge_star(eta: Multivector, orientation: Multivector) -> Multivector:
    """The (q-k)-vector with ``xi ^ *eta = <xi, eta> e`` for every k-vector ``xi``."""
    q = eta.q
    if orientation.q != q or orientation.k != q:
        raise ValueError("orientation must be a q-vector of the same space")
    full = tuple(range(1, q + 1))
    s = orientation.get(full)
    if abs(abs(s) - 1.0) > 1e-12:
        raise ValueError(f"orientation must have unit norm, got {abs(s)}")
    out = {}
    for I, c in eta.coeffs.items():
        comp = tuple(i for i in full if i not in I)
        out[comp] = s * c * _merge_sign(I, comp)
    return Multivector(q, q - eta.k, out)


def standard_orientation(q: int) -> Multivector:
    return Multivector.basis_blade(q, range(1, q + 1))


def wedge_ratio(V, W, U) -> float:
    """``|V ^ U| / |V ^ W|`` built from orienting units."""
    v = orienting_unit(V)
    den = wedge(v, orienting_unit(W)).norm()
    if den < 1e-12:
        raise ValueError("|V ^ W| vanishes: W and V are not complementary")
    return wedge(v, orienting_unit(U)).norm() / den


def all_index_sets(q: int, k: int):
    return list(combinations(range(1, q + 1), k))
