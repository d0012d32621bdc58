"""Regularised Gram matrices with a maintained inverse, and ridge solves.

The accumulator tracks ``I + sum_t phi_t phi_t^T`` together with its inverse.
The inverse is updated with the Sherman-Morrison identity and recomputed
from scratch every :data:`REFACTOR_EVERY` updates so rounding drift stays
bounded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidDimensionError, InvalidInputError, NormViolationError

NORM_SLACK = 1e-9
REFACTOR_EVERY = 256


class CovarianceAccumulator:
    """``Lambda = I + sum phi phi^T`` with its inverse kept in sync.

    Single writer: :meth:`update` mutates in place and returns ``self``.
    """

    __slots__ = ("dim", "matrix", "inverse", "count", "_since_refactor")

    def __init__(self, dim: int):
        if int(dim) != dim or dim < 1:
            raise InvalidDimensionError(f"dimension must be a positive integer, got {dim!r}")
        self.dim = int(dim)
        self.matrix = np.eye(self.dim)
        self.inverse = np.eye(self.dim)
        self.count = 0
        self._since_refactor = 0

    def _check(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (self.dim,):
            raise InvalidDimensionError(
                f"expected a vector of length {self.dim}, got shape {phi.shape}"
            )
        return phi

    def update(self, phi) -> "CovarianceAccumulator":
        phi = self._check(phi)
        norm = float(np.sqrt(phi @ phi))
        if norm > 1.0 + NORM_SLACK:
            raise NormViolationError(f"feature norm {norm!r} exceeds 1")
        self.matrix += np.outer(phi, phi)
        self.count += 1
        self._since_refactor += 1
        if self._since_refactor >= REFACTOR_EVERY:
            self.refactor()
        else:
            v = self.inverse @ phi
            self.inverse -= np.outer(v, v) / (1.0 + phi @ v)
        return self

    @classmethod
    def from_rows(cls, rows) -> "CovarianceAccumulator":
        """Batch construction equivalent to updating with every row in turn."""
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2:
            raise InvalidDimensionError(f"expected a 2-d array of rows, got shape {rows.shape}")
        acc = cls(rows.shape[1])
        if rows.shape[0]:
            norms = np.sqrt(np.einsum("ij,ij->i", rows, rows))
            if norms.max() > 1.0 + NORM_SLACK:
                raise NormViolationError(f"feature norm {norms.max()!r} exceeds 1")
            acc.matrix += rows.T @ rows
            acc.count = rows.shape[0]
            acc.refactor()
        return acc

    def refactor(self) -> None:
        """Recompute the inverse from the matrix (Cholesky based)."""
        chol = np.linalg.cholesky(self.matrix)
        inv_chol = np.linalg.solve(chol, np.eye(self.dim))
        inv = inv_chol.T @ inv_chol
        self.inverse = 0.5 * (inv + inv.T)
        self._since_refactor = 0

    def quadratic_form(self, phi) -> float:
        phi = self._check(phi)
        return max(float(phi @ self.inverse @ phi), 0.0)

    def quadratic_forms(self, rows) -> np.ndarray:
        """``phi^T Lambda^{-1} phi`` for every row of a ``(n, d)`` array."""
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != self.dim:
            raise InvalidDimensionError(
                f"expected rows of length {self.dim}, got shape {rows.shape}"
            )
        return np.maximum(np.einsum("ij,jk,ik->i", rows, self.inverse, rows), 0.0)

    def copy(self) -> "CovarianceAccumulator":
        other = CovarianceAccumulator(self.dim)
        other.matrix = self.matrix.copy()
        other.inverse = self.inverse.copy()
        other.count = self.count
        other._since_refactor = self._since_refactor
        return other

    def __repr__(self) -> str:
        return f"CovarianceAccumulator(dim={self.dim}, count={self.count})"


@dataclass(frozen=True, eq=False)
class RidgeSolution:
    weights: np.ndarray
    design: CovarianceAccumulator


def cov_new(dim: int) -> CovarianceAccumulator:
    return CovarianceAccumulator(dim)


def cov_rank1_update(acc: CovarianceAccumulator, phi) -> CovarianceAccumulator:
    return acc.update(phi)


def quadratic_form(acc: CovarianceAccumulator, phi) -> float:
    return acc.quadratic_form(phi)


def ridge_solve(
    acc: CovarianceAccumulator, features: Sequence, targets: Sequence[float]
) -> RidgeSolution:
    """Weights ``Lambda^{-1} sum_t phi_t y_t`` for the data already in ``acc``.

    ``features`` must be the vectors that were fed to ``acc`` (in order);
    only their count is checked, not their values.
    """
    targets = np.asarray(targets, dtype=float).reshape(-1)
    n = len(features)
    if n != targets.shape[0]:
        raise InvalidInputError(f"{n} feature vectors but {targets.shape[0]} targets")
    if n != acc.count:
        raise InvalidInputError(
            f"accumulator holds {acc.count} updates but {n} feature vectors were given"
        )
    if n == 0:
        return RidgeSolution(np.zeros(acc.dim), acc)
    phis = np.asarray(features, dtype=float).reshape(n, -1)
    if phis.shape[1] != acc.dim:
        raise InvalidDimensionError(f"features have length {phis.shape[1]}, expected {acc.dim}")
    return RidgeSolution(acc.inverse @ (phis.T @ targets), acc)


def elliptical_potential(phis) -> np.ndarray:
    """Per-step ``phi_k^T Lambda_k^{-1} phi_k`` for a sequence fed one at a time.

    ``Lambda_k`` holds the identity plus the first ``k - 1`` vectors. A
    ``(B, K, d)`` input runs ``B`` independent sequences side by side and
    returns a ``(B, K)`` array.
    """
    phis = np.asarray(phis, dtype=float)
    if phis.ndim == 2:
        return elliptical_potential(phis[None])[0]
    if phis.ndim != 3:
        raise InvalidDimensionError(f"expected (K, d) or (B, K, d), got shape {phis.shape}")
    B, K, d = phis.shape
    norms = np.sqrt(np.einsum("bkd,bkd->bk", phis, phis))
    if norms.size and norms.max() > 1.0 + NORM_SLACK:
        raise NormViolationError(f"feature norm {norms.max()!r} exceeds 1")
    mat = np.broadcast_to(np.eye(d), (B, d, d)).copy()
    inv = mat.copy()
    out = np.empty((B, K))
    for k in range(K):
        phi = phis[:, k]
        v = np.einsum("bij,bj->bi", inv, phi)
        q = np.maximum(np.einsum("bi,bi->b", phi, v), 0.0)
        out[:, k] = q
        mat += phi[:, :, None] * phi[:, None, :]
        if (k + 1) % REFACTOR_EVERY == 0:
            inv = np.linalg.inv(mat)
            inv = 0.5 * (inv + np.swapaxes(inv, 1, 2))
        else:
            inv -= v[:, :, None] * v[:, None, :] / (1.0 + q)[:, None, None]
    return out
