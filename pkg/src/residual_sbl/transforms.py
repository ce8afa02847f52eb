"""Sparsifying prior transforms: local differencing, concentration factor, residual.

All 1D transforms are dense ``n x n`` matrices on the periodic grid. The 2D
version applies a 1D transform along both image axes and stacks the two
outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.linalg as sla

DEFAULT_ZETA = 0.25


@dataclass(frozen=True)
class StencilCoefficients:
    p: int
    q: np.ndarray  # q[l] = binom(2p, p + l) for l = 0..p
    q0: int

    @classmethod
    def of_order(cls, p: int) -> "StencilCoefficients":
        if p < 0:
            raise ValueError("order parameter p must be nonnegative")
        q = np.array([comb(2 * p, p + l) for l in range(p + 1)], dtype=float)
        return cls(p, q, comb(2 * p, p))


@dataclass(frozen=True, eq=False)
class PriorTransform:
    kind: str
    n: int
    p: int
    zeta: float | None
    matrix: np.ndarray

    @property
    def K(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def apply(self, x):
        return self.matrix @ x

    def adjoint(self, u):
        return self.matrix.T @ u

    def squared_adjoint(self, w):
        """``(Phi * Phi)^T w``: the diagonal of ``Phi^T diag(w) Phi``."""
        return (self.matrix**2).T @ w

    def null_space(self, rtol: float = 1e-10) -> np.ndarray:
        """Orthonormal basis of the kernel, one vector per column."""
        return sla.null_space(self.matrix, rcond=rtol)

    def to_csv(self, path):
        np.savetxt(path, self.matrix, delimiter=",", fmt="%.17g")


def _check(n, p):
    if n % 2:
        raise ValueError("grid size must be even")
    if n <= 2 * p + 2:
        raise ValueError(f"grid of {n} points is too small for order p={p}")


def local_transform(n: int, p: int = 0) -> PriorTransform:
    """(2p+1)-order periodic differencing scaled by ``1/binom(2p, p)``.

    Row j evaluates ``sum_l (-1)^l binom(2p+1, p-l) (f[j+1+l] - f[j-l]) / q0``.
    """
    _check(n, p)
    q0 = comb(2 * p, p)
    M = np.zeros((n, n))
    rows = np.arange(n)
    for l in range(p + 1):
        c = (-1) ** l * comb(2 * p + 1, p - l) / q0
        M[rows, (rows + 1 + l) % n] += c
        M[rows, (rows - l) % n] -= c
    return PriorTransform("local", n, p, None, M)


def concentration_transform(n: int, p: int = 0, zeta: float = DEFAULT_ZETA) -> PriorTransform:
    """Fourier concentration-factor jump detector evaluated at ``s_{j+zeta}``.

    Uses the trigonometric factor ``sigma_{2p+1}``. The Nyquist mode k = n/2
    enters with weight 1/2, as the +-n/2 pair of a symmetric partial sum.
    """
    _check(n, p)
    if not 0 <= zeta < 1:
        raise ValueError("zeta must lie in [0, 1)")
    q0 = comb(2 * p, p)
    ds = 2 * np.pi / n
    d = np.arange(n)[:, None] - np.arange(n)[None, :]
    phi_plus = d + (0.5 + zeta)
    phi_minus = d - (0.5 - zeta)
    k = np.arange(1, n // 2 + 1)
    w = np.sin(k * ds / 2) ** (2 * p)
    w[-1] *= 0.5
    M = np.zeros((n, n))
    for kk, wk in zip(k, w):
        M += wk * (np.cos(kk * ds * phi_plus) - np.cos(kk * ds * phi_minus))
    M *= 2 ** (2 * p + 1) / (n * q0)
    return PriorTransform("global", n, p, zeta, M)


def residual_transform(n: int, p: int = 0, zeta: float = DEFAULT_ZETA) -> PriorTransform:
    T = local_transform(n, p)
    S = concentration_transform(n, p, zeta)
    return PriorTransform("residual", n, p, zeta, T.matrix - S.matrix)


def make_transform(kind: str, n: int, p: int = 0, zeta: float = DEFAULT_ZETA) -> PriorTransform:
    if kind == "local":
        return local_transform(n, p)
    if kind == "global":
        return concentration_transform(n, p, zeta)
    if kind == "residual":
        return residual_transform(n, p, zeta)
    raise ValueError(f"unknown transform kind {kind!r}")


class StackedTransform:
    """A 1D transform applied along every column and every row of an n x n image.

    Output is ``[row-direction block; column-direction block]``, each n*n long
    and column-major. With B the 1D matrix this is
    ``vstack(kron(B, I), kron(I, B))`` acting on ``vec(X)``.
    """

    MAX_DENSE_N = 64

    def __init__(self, base: PriorTransform):
        self.base = base
        self.n = base.n
        self.kind = base.kind
        self.p = base.p
        self.zeta = base.zeta
        self._B = base.matrix
        self._B2 = base.matrix**2

    @property
    def K(self) -> int:
        return 2 * self.n * self.n

    @property
    def cols(self) -> int:
        return self.n * self.n

    def _img(self, v):
        return v.reshape(self.n, self.n, order="F")

    def apply(self, x):
        X = self._img(x)
        rows = X @ self._B.T
        cols = self._B @ X
        return np.concatenate([rows.ravel(order="F"), cols.ravel(order="F")])

    def adjoint(self, u):
        N = self.cols
        U_rows, U_cols = self._img(u[:N]), self._img(u[N:])
        return (U_rows @ self._B + self._B.T @ U_cols).ravel(order="F")

    def squared_adjoint(self, w):
        N = self.cols
        W_rows, W_cols = self._img(w[:N]), self._img(w[N:])
        return (W_rows @ self._B2 + self._B2.T @ W_cols).ravel(order="F")

    def null_space(self, rtol: float = 1e-10) -> np.ndarray:
        """Images whose rows and columns all lie in the 1D kernel: kron(N, N)."""
        N = self.base.null_space(rtol)
        return np.kron(N, N)

    @property
    def matrix(self) -> np.ndarray:
        if self.n > self.MAX_DENSE_N:
            raise ValueError(f"dense 2D transform refused for n={self.n}")
        eye = np.eye(self.n)
        return np.vstack([np.kron(self._B, eye), np.kron(eye, self._B)])


def stack_2d(base: PriorTransform, n: int) -> StackedTransform:
    if base.n != n or base.matrix.shape != (n, n):
        raise ValueError(f"base transform has size {base.n}, image side is {n}")
    return StackedTransform(base)
