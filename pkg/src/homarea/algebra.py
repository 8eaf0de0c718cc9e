"""Graded nilpotent Lie algebras and the group law in exponential coordinates.

Points are numpy arrays whose last axis has length ``dim``; every operation
broadcasts over leading axes, so a batch of 10**4 points is one call.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

MAX_STEP = 6

# Right-nested brackets [a1,[a2,[...,[x,y]]]] with rational weights.  Obtained
# from log(exp(x)exp(y)) in the free algebra truncated at degree 6 and mapped
# to Lie form by the Dynkin projection; words whose innermost bracket is [a,a]
# were dropped and "...yx" folded into "...xy".
BCH_TERMS: dict[int, tuple[tuple[str, Fraction], ...]] = {
    2: (("xy", Fraction(1, 2)),),
    3: (("xxy", Fraction(1, 12)), ("yxy", Fraction(-1, 12))),
    4: (("xyxy", Fraction(-1, 48)), ("yxxy", Fraction(-1, 48))),
    5: (
        ("xxxxy", Fraction(-1, 720)),
        ("xyxxy", Fraction(-1, 120)),
        ("xyyxy", Fraction(-1, 360)),
        ("yxxxy", Fraction(1, 360)),
        ("yxyxy", Fraction(1, 120)),
        ("yyyxy", Fraction(1, 720)),
    ),
    6: (
        ("xxxyxy", Fraction(1, 2160)),
        ("xxyxxy", Fraction(-1, 1440)),
        ("xxyyxy", Fraction(-1, 1440)),
        ("xyxxxy", Fraction(1, 2160)),
        ("xyxyxy", Fraction(1, 360)),
        ("xyyxxy", Fraction(-1, 1440)),
        ("xyyyxy", Fraction(1, 2160)),
        ("yxxxxy", Fraction(1, 2160)),
        ("yxxyxy", Fraction(-1, 1440)),
        ("yxyxxy", Fraction(1, 360)),
        ("yxyyxy", Fraction(1, 2160)),
        ("yyxxxy", Fraction(-1, 1440)),
        ("yyxyxy", Fraction(-1, 1440)),
        ("yyyxxy", Fraction(1, 2160)),
    ),
}

# d/ds log(exp(g) exp(s v)) at s=0 equals sum_n c_n ad_g^n v, where the c_n
# are the Taylor coefficients of z / (1 - exp(-z)).
_LEFT_FIELD_COEFFS = (
    Fraction(1),
    Fraction(1, 2),
    Fraction(1, 12),
    Fraction(0),
    Fraction(-1, 720),
    Fraction(0),
)


class SpecError(ValueError):
    """Raised for malformed or unsupported group specifications."""


@dataclass
class ValidationReport:
    """Collected violations; an empty report means the object is valid."""

    violations: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, kind: str, **detail) -> None:
        self.violations.append({"kind": kind, **detail})

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": self.violations}


class GradedAlgebra:
    """A graded nilpotent Lie algebra given by layer sizes and structure constants.

    ``brackets`` is a sparse list of ``(i, j, k, c)`` meaning
    ``[e_i, e_j] = c e_k + ...`` with 1-based indices in the graded basis.
    The antisymmetric partner ``(j, i, k, -c)`` is filled in automatically;
    contradicting entries raise :class:`SpecError`.
    """

    def __init__(self, layer_dims, brackets=(), name: str | None = None):
        layer_dims = [int(n) for n in layer_dims]
        if not layer_dims or any(n <= 0 for n in layer_dims):
            raise SpecError(f"layer dimensions must be positive, got {layer_dims}")
        if len(layer_dims) > MAX_STEP:
            raise SpecError(
                f"step {len(layer_dims)} exceeds the supported maximum {MAX_STEP}"
            )
        self.name = name
        self.layer_dims = tuple(layer_dims)
        self.step = len(layer_dims)
        self.dim = sum(layer_dims)
        self.offsets = tuple(int(h) for h in np.concatenate([[0], np.cumsum(layer_dims)]))
        self.degrees = np.concatenate(
            [np.full(n, s + 1) for s, n in enumerate(layer_dims)]
        )
        self.degrees.setflags(write=False)

        q = self.dim
        table = np.zeros((q, q, q))
        given: dict[tuple[int, int, int], float] = {}
        for entry in brackets:
            i, j, k, c = entry
            i, j, k, c = int(i) - 1, int(j) - 1, int(k) - 1, float(c)
            for idx in (i, j, k):
                if not 0 <= idx < q:
                    raise SpecError(f"bracket index {idx + 1} outside 1..{q}")
            for key, val in (((i, j, k), c), ((j, i, k), -c)):
                if key in given and abs(given[key] - val) > 1e-12:
                    a, b, cc = (t + 1 for t in key)
                    raise SpecError(
                        f"conflicting structure constants for [e{a},e{b}] -> e{cc}:"
                        f" {given[key]} vs {val}"
                    )
                given[key] = val
            table[i, j, k] = c
            table[j, i, k] = -c
        self.structure = table
        self.structure.setflags(write=False)
        self._raw_brackets = [(int(i), int(j), int(k), float(c)) for i, j, k, c in brackets]

    def __repr__(self) -> str:
        label = self.name or "GradedAlgebra"
        return f"<{label} layers={list(self.layer_dims)}>"

    # -- basis bookkeeping -------------------------------------------------

    def layer_slice(self, s: int) -> slice:
        """Coordinate slice of layer ``s`` (1-based)."""
        if not 1 <= s <= self.step:
            raise IndexError(f"layer {s} outside 1..{self.step}")
        return slice(self.offsets[s - 1], self.offsets[s])

    def basis(self, j: int) -> np.ndarray:
        """Basis vector ``e_j`` (1-based)."""
        if not 1 <= j <= self.dim:
            raise IndexError(f"basis index {j} outside 1..{self.dim}")
        e = np.zeros(self.dim)
        e[j - 1] = 1.0
        return e

    def layer_of(self, j: int) -> int:
        return int(self.degrees[j - 1])

    @property
    def hausdorff_dim(self) -> int:
        return int(self.degrees.sum())

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ValueError(f"expected last axis of length {self.dim}, got shape {x.shape}")
        return x

    # -- Lie algebra ---------------------------------------------------------

    def bracket(self, x, y) -> np.ndarray:
        x, y = self._check(x), self._check(y)
        return np.einsum("...i,...j,ijk->...k", x, y, self.structure)

    def ad_matrix(self, g) -> np.ndarray:
        """Matrix of ``ad_g`` acting on column vectors: ``ad_g @ v = [g, v]``."""
        g = self._check(g)
        return np.einsum("...i,ijk->...kj", g, self.structure)

    # -- group law -----------------------------------------------------------

    def multiply(self, x, y) -> np.ndarray:
        """Group product in exponential coordinates via the truncated BCH series."""
        x, y = self._check(x), self._check(y)
        x, y = np.broadcast_arrays(x, y)
        out = x + y
        if self.step == 1:
            return out
        letters = {"x": x, "y": y}
        cache: dict[str, np.ndarray] = {"y": y}

        def nested(word: str) -> np.ndarray:
            if word not in cache:
                cache[word] = self.bracket(letters[word[0]], nested(word[1:]))
            return cache[word]

        for degree in range(2, self.step + 1):
            for word, coeff in BCH_TERMS[degree]:
                out = out + float(coeff) * nested(word)
        return out

    def inverse(self, x) -> np.ndarray:
        return -self._check(x)

    def dilate(self, t, x) -> np.ndarray:
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr <= 0):
            raise ValueError(f"dilation factor must be positive, got {t}")
        x = self._check(x)
        return x * t_arr[..., None] ** self.degrees

    def layer_project(self, j: int, x) -> np.ndarray:
        """Truncate to layers ``1..j``."""
        if not 1 <= j <= self.step:
            raise IndexError(f"layer index {j} outside 1..{self.step}")
        x = self._check(x).copy()
        x[..., self.offsets[j]:] = 0.0
        return x

    def left_invariant_field(self, v, g) -> np.ndarray:
        """Value at ``g`` of the left-invariant field equal to ``v`` at the identity.

        ``v`` may be a vector or a 1-based basis index.
        """
        if isinstance(v, (int, np.integer)):
            v = self.basis(int(v))
        v = self._check(v)
        g = self._check(g)
        v = np.broadcast_to(v, np.broadcast_shapes(v.shape, g.shape))
        out = v.copy()
        term = v
        for n in range(1, self.step):
            term = self.bracket(g, term)
            c = _LEFT_FIELD_COEFFS[n]
            if c:
                out = out + float(c) * term
        return out

    # -- validation ------------------------------------------------------------

    def validate(self, tol: float = 1e-12) -> ValidationReport:
        return validate_spec(self, tol)

    def to_json(self) -> dict:
        return {
            "layers": list(self.layer_dims),
            "brackets": [{"i": i, "j": j, "k": k, "c": c} for i, j, k, c in self._raw_brackets],
        }


def validate_spec(alg: GradedAlgebra, tol: float = 1e-12) -> ValidationReport:
    """Check antisymmetry, grading and the Jacobi identity on all basis triples."""
    report = ValidationReport()
    C = alg.structure
    q = alg.dim
    anti = np.argwhere(np.abs(C + C.transpose(1, 0, 2)) > tol)
    for i, j, k in anti:
        if i < j:
            report.add("antisymmetry", i=int(i) + 1, j=int(j) + 1, k=int(k) + 1)
    deg = alg.degrees
    for i, j, k in np.argwhere(np.abs(C) > tol):
        if deg[k] != deg[i] + deg[j]:
            report.add("grading", i=int(i) + 1, j=int(j) + 1, k=int(k) + 1)
    # J[a,b,c,:] = [e_a,[e_b,e_c]] + [e_b,[e_c,e_a]] + [e_c,[e_a,e_b]]
    inner = np.einsum("bcm,amk->abck", C, C)
    jac = inner + inner.transpose(1, 2, 0, 3) + inner.transpose(2, 0, 1, 3)
    bad = np.argwhere(np.abs(jac).max(axis=-1) > tol)
    for a, b, c in bad:
        if a < b < c:
            report.add(
                "jacobi",
                i=int(a) + 1,
                j=int(b) + 1,
                k=int(c) + 1,
                residual=float(np.abs(jac[a, b, c]).max()),
            )
    del q
    return report


# -- fixtures and spec files -------------------------------------------------------

def heisenberg(n: int = 1) -> GradedAlgebra:
    """Heisenberg algebra of dimension 2n+1 with [e_{2i-1}, e_{2i}] = e_{2n+1}."""
    top = 2 * n + 1
    brackets = [(2 * i - 1, 2 * i, top, 1.0) for i in range(1, n + 1)]
    return GradedAlgebra([2 * n, 1], brackets, name=f"heisenberg{n}")


def engel() -> GradedAlgebra:
    return GradedAlgebra([2, 1, 1], [(1, 2, 3, 1.0), (1, 3, 4, 1.0)], name="engel")


FIXTURES = {
    "heisenberg1": lambda: heisenberg(1),
    "heisenberg2": lambda: heisenberg(2),
    "engel": engel,
}


def fixture(name: str) -> GradedAlgebra:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise SpecError(f"unknown group fixture {name!r}; known: {sorted(FIXTURES)}") from None


def algebra_from_dict(doc: dict) -> GradedAlgebra:
    if "layers" not in doc:
        raise SpecError("group spec needs a 'layers' field")
    entries = []
    for b in doc.get("brackets", []):
        try:
            entries.append((b["i"], b["j"], b["k"], b["c"]))
        except (KeyError, TypeError):
            raise SpecError(f"bracket entry {b!r} needs fields i, j, k, c") from None
    return GradedAlgebra(doc["layers"], entries, name=doc.get("name"))


def load_spec_file(path) -> dict:
    """Read a JSON group spec; JSON syntax errors propagate as ``json.JSONDecodeError``."""
    text = Path(path).read_text()
    return json.loads(text)
