"""Exact LE solve through banded Cholesky factors.

The LE posterior over x^F is written in the coordinates x^F = F w + Z c,
where the orthonormal columns of Z span the complement of range(F). The
likelihood only sees w, so the precision over w,

    Q = F^T D F + H^T H / N0,    D = diag(1 / v_A),

is banded once real and imaginary parts are interleaved per symbol. The 2 nu
coordinates c couple to w through R = F^T D Z and are eliminated with a
2 nu x 2 nu Schur complement. Posterior variances only need the band of
Q^-1, which the Takahashi recursion reads off the Cholesky factor.

The result equals the dense solve of (G + D) in exact arithmetic.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse

from .errors import NumericalError
from .messages import GaussianMessageVec

logger = logging.getLogger(__name__)


def interleave_permutation(n_symbols: int) -> np.ndarray:
    """Indices into [re; im] that produce the order re_0, im_0, re_1, im_1, ..."""
    index = np.arange(n_symbols)
    return np.column_stack([index, index + n_symbols]).ravel()


def to_lower_band(matrix: sparse.spmatrix, width: int) -> np.ndarray:
    """Lower band storage ``ab[d, i] = A[i + d, i]`` of a symmetric matrix."""
    n = matrix.shape[0]
    ab = np.zeros((width + 1, n))
    for d in range(width + 1):
        ab[d, : n - d] = matrix.diagonal(-d)
    return ab


def band_to_sparse(ab: np.ndarray) -> sparse.csr_matrix:
    """Symmetric sparse matrix from its lower band storage."""
    width, n = ab.shape[0] - 1, ab.shape[1]
    lower = [ab[d, : n - d] for d in range(1, width + 1)]
    offsets = [0] + [-d for d in range(1, width + 1)] + list(range(1, width + 1))
    return sparse.diags([ab[0]] + lower + lower, offsets, shape=(n, n), format="csr")


def band_inverse(factor: np.ndarray) -> np.ndarray:
    """Band of A^-1 from the lower banded Cholesky factor L of A = L L^T.

    Rows are filled from the last one upwards with

        S_ij = delta_ij / L_ii^2 - (1 / L_ii) sum_{k > i} L_ki S_kj,   j >= i,

    which only touches entries of S inside the band.

    Args:
        factor: Lower band storage of L, shape (b + 1, n)

    Returns:
        Lower band storage of A^-1, shape (b + 1, n)
    """
    width, n = factor.shape[0] - 1, factor.shape[1]
    # Zero padding past row n keeps every window the same shape.
    sigma = np.zeros((width + 1, n + width))
    lower = np.zeros((width + 1, n + width))
    lower[:, :n] = factor
    for d in range(1, width + 1):
        lower[d, n - d : n] = 0.0

    rows, cols = np.meshgrid(np.arange(width), np.arange(width), indexing="ij")
    offset = np.abs(rows - cols)
    base = np.minimum(rows, cols)

    for i in range(n - 1, -1, -1):
        pivot = lower[0, i]
        column = lower[1:, i]
        window = sigma[offset, i + 1 + base]
        below = -(window @ column) / pivot
        sigma[1:, i] = below
        sigma[0, i] = 1.0 / pivot**2 - (column @ below) / pivot
    return sigma[:, :n]


@dataclass(frozen=True)
class BandedLinearEstimator:
    """Gaussian posterior of x^F given y and a diagonal prior, in O(N b^2).

    Attributes:
        F: Real target matrix with interleaved columns, 2(N+nu) x 2N
        H: Real channel matrix with interleaved columns, 2(N+L) x 2N
        Z: Orthonormal basis of the complement of range(F), 2(N+nu) x 2nu
        likelihood: H^T H / N0 with interleaved rows and columns
        n0: Noise variance per real component
        width: Lower bandwidth of Q
    """

    F: sparse.csr_matrix
    H: sparse.csr_matrix
    Z: np.ndarray
    likelihood: sparse.csr_matrix
    n0: float
    width: int

    @classmethod
    def build(
        cls, F_real: np.ndarray, H_real: np.ndarray, n0: float, nu: int, memory: int
    ) -> "BandedLinearEstimator":
        """Precompute the interleaved sparse operators of one design.

        Raises:
            NumericalError: If F does not have full column rank
        """
        n_positions, n_columns = F_real.shape
        order = interleave_permutation(n_columns // 2)
        F = sparse.csr_matrix(F_real[:, order])
        H = sparse.csr_matrix(H_real[:, order])

        if nu:
            Z = linalg.null_space(F_real.T)
        else:
            Z = np.zeros((n_positions, 0))
        if Z.shape[1] != 2 * nu:
            raise NumericalError(
                f"Target matrix has a {Z.shape[1]}-dimensional left null space, "
                f"expected {2 * nu}"
            )

        width = min(2 * max(nu, memory) + 1, n_columns - 1)
        logger.debug(
            f"Banded LE: {n_columns} unknowns, bandwidth {width}, "
            f"{Z.shape[1]} complement directions"
        )
        return cls(
            F=F,
            H=H,
            Z=Z,
            likelihood=sparse.csr_matrix(H.T @ H) / n0,
            n0=n0,
            width=width,
        )

    def estimate(self, y: np.ndarray, prior: GaussianMessageVec) -> GaussianMessageVec:
        """Posterior mean and marginal variances of x^F.

        Raises:
            NumericalError: If Q or its Schur complement is not positive definite
        """
        precision = 1.0 / prior.var
        information = precision * prior.mean

        Q = self.F.T @ sparse.diags(precision) @ self.F + self.likelihood
        try:
            factor = linalg.cholesky_banded(to_lower_band(Q, self.width), lower=True)
        except linalg.LinAlgError:
            raise NumericalError("Banded LE precision matrix is not positive definite")

        rhs = self.F.T @ information + self.H.T @ y / self.n0
        w = linalg.cho_solve_banded((factor, True), rhs)
        covariance_band = band_to_sparse(band_inverse(factor))
        var = np.asarray(
            self.F.multiply(self.F @ covariance_band).sum(axis=1)
        ).ravel()
        mean = self.F @ w

        if self.Z.shape[1]:
            weighted_Z = precision[:, None] * self.Z
            R = self.F.T @ weighted_Z
            gain = linalg.cho_solve_banded((factor, True), R)
            schur = self.Z.T @ weighted_Z - R.T @ gain
            try:
                schur_factor = linalg.cho_factor(schur)
            except linalg.LinAlgError:
                raise NumericalError(
                    "Schur complement of the banded LE is not positive definite",
                    condition_number=float(np.linalg.cond(schur)),
                )
            c = linalg.cho_solve(schur_factor, self.Z.T @ information - gain.T @ rhs)
            mean = mean - self.F @ (gain @ c) + self.Z @ c

            coupling = self.F @ gain - self.Z
            spread = linalg.cho_solve(schur_factor, coupling.T).T
            var = var + np.sum(spread * coupling, axis=1)

        return GaussianMessageVec(mean, var)
