"""Independent oracles: faithful strictly upper-triangular matrix representations.

The group product is computed as ``log(exp(X) exp(Y))`` with finite power
series (exact for nilpotent matrices), so it shares no code with the
truncated BCH table used by the package.
"""

import numpy as np


def _E(n, i, j):
    m = np.zeros((n, n))
    m[i - 1, j - 1] = 1.0
    return m


def representation(name):
    """Matrices ``M_k`` with ``[M_i, M_j] = sum_k c_ij^k M_k`` for the fixture ``name``."""
    if name == "heisenberg1":
        return [_E(3, 1, 2), _E(3, 2, 3), _E(3, 1, 3)]
    if name == "heisenberg2":
        return [_E(4, 1, 2), _E(4, 2, 4), _E(4, 1, 3), _E(4, 3, 4), _E(4, 1, 4)]
    if name == "engel":
        return [_E(4, 1, 2) + _E(4, 2, 3) + _E(4, 3, 4), _E(4, 3, 4), _E(4, 2, 4), _E(4, 1, 4)]
    raise KeyError(name)


def _expm_nil(X):
    n = X.shape[-1]
    out = np.broadcast_to(np.eye(n), X.shape).copy()
    term = out.copy()
    for k in range(1, n):
        term = term @ X / k
        out = out + term
    return out


def _logm_unipotent(G):
    n = G.shape[-1]
    N = G - np.eye(n)
    out = np.zeros_like(G)
    term = np.broadcast_to(np.eye(n), G.shape).copy()
    for k in range(1, n):
        term = term @ N
        out = out + ((-1) ** (k + 1) / k) * term
    return out


class MatrixGroup:
    def __init__(self, name):
        self.mats = np.array(representation(name))
        q = len(self.mats)
        self._flat = self.mats.reshape(q, -1).T
        self._pinv = np.linalg.pinv(self._flat)

    def to_matrix(self, x):
        return np.tensordot(np.asarray(x, float), self.mats, axes=(-1, 0))

    def to_coords(self, X):
        X = np.asarray(X, float)
        flat = X.reshape(X.shape[:-2] + (-1,))
        return flat @ self._pinv.T

    def multiply(self, x, y):
        G = _expm_nil(self.to_matrix(x)) @ _expm_nil(self.to_matrix(y))
        return self.to_coords(_logm_unipotent(G))

    def bracket(self, x, y):
        X, Y = self.to_matrix(x), self.to_matrix(y)
        return self.to_coords(X @ Y - Y @ X)

    def representation_residual(self, alg):
        """Largest defect of ``[M_i, M_j] - sum_k c_ij^k M_k``."""
        q = len(self.mats)
        worst = 0.0
        for i in range(q):
            for j in range(q):
                lhs = self.mats[i] @ self.mats[j] - self.mats[j] @ self.mats[i]
                rhs = np.tensordot(alg.structure[i, j], self.mats, axes=(0, 0))
                worst = max(worst, float(np.abs(lhs - rhs).max()))
        return worst


def euclidean_area_of_linear_graph(M):
    """Euclidean area factor of ``c -> (c, M c)`` by the Gram determinant of the full Jacobian."""
    M = np.atleast_2d(np.asarray(M, float))
    J = np.vstack([np.eye(M.shape[1]), M])
    return float(np.sqrt(np.linalg.det(J.T @ J)))
