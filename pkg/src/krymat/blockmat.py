"""Block-matrix algebra over the Frobenius inner product.

A block row stacks m matrices of common shape n x s side by side into one
n x (m*s) array.  All higher-level algorithms in this package reduce to four
kernels on this layout: the Frobenius inner product, the blockwise inner
product matrix (diamond), application of a small coefficient matrix through
the Kronecker pattern V (S kron I_s), and a global QR factorization.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError

DEFAULT_RANK_TOL = 1e-12

# Reorthogonalize when one Gram-Schmidt pass eats more than this fraction
# of a block's norm (the usual twice-is-enough drop test).
REORTH_DROP = 1.0 / np.sqrt(2.0)


def frob_inner(y, z):
    """Frobenius inner product tr(Y^T Z) of two equally shaped matrices."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if y.shape != z.shape:
        raise DimensionError(f"frob_inner: shapes {y.shape} and {z.shape} differ")
    return float(np.sum(y * z))


@dataclass(frozen=True)
class BlockRow:
    """m blocks of shape n x width stored contiguously as one n x (m*width) array."""

    data: np.ndarray
    width: int

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=float))
        object.__setattr__(self, "data", data)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DimensionError(f"block row needs a 2-d array, got shape {data.shape}")
        if self.width < 1 or data.shape[1] % self.width != 0:
            raise DimensionError(
                f"{data.shape[1]} columns do not split into blocks of width {self.width}"
            )
        if not np.isfinite(data).all():
            raise NumericError("block row contains non-finite entries")

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def m(self):
        return self.data.shape[1] // self.width

    def block(self, j):
        """The j-th block (0-based), a view of shape n x width."""
        s = self.width
        return self.data[:, j * s : (j + 1) * s]

    def narrow(self, m):
        """Block row made of the first m blocks (shares storage)."""
        if not 1 <= m <= self.m:
            raise DimensionError(f"cannot narrow {self.m} blocks to {m}")
        return BlockRow(self.data[:, : m * self.width], self.width)

    def with_width(self, width):
        """Reinterpret the same columns with a different block width."""
        return BlockRow(self.data, width)

    def _cube(self):
        return self.data.reshape(self.n, self.m, self.width)


@dataclass(frozen=True)
class BlockBasis(BlockRow):
    """Block row whose blocks are F-orthonormal to within ``tol``."""

    tol: float = DEFAULT_RANK_TOL

    def orth_defect(self):
        """|| V^T diamond V - I ||_F, the F-orthonormality defect."""
        g = diamond(self, self)
        return float(np.linalg.norm(g - np.eye(self.m)))

    def narrow(self, m):
        if not 1 <= m <= self.m:
            raise DimensionError(f"cannot narrow {self.m} blocks to {m}")
        return BlockBasis(self.data[:, : m * self.width], self.width, self.tol)

    def with_width(self, width):
        return BlockBasis(self.data, width, self.tol)


def diamond(zb, wb):
    """Blockwise inner-product matrix [<Z_i, W_j>_F] of two block rows.

    Accepts BlockRow operands or plain arrays paired as (array, width) via
    BlockRow construction by the caller.  The result is an m x l dense array.
    """
    if zb.n != wb.n or zb.width != wb.width:
        raise DimensionError(
            f"diamond: incompatible operands n={zb.n}/{wb.n}, width={zb.width}/{wb.width}"
        )
    return np.einsum("xis,xjs->ij", zb._cube(), wb._cube(), optimize=True)


def kron_apply(vb, s_mat):
    """Evaluate V (S kron I_width) blockwise, without forming the Kronecker product.

    The j-th output block is sum_i S[i, j] * V_i; the result has S.shape[1]
    blocks of the same width as ``vb``.
    """
    s_mat = np.asarray(s_mat, dtype=float)
    if s_mat.ndim == 1:
        s_mat = s_mat[:, None]
    if s_mat.shape[0] != vb.m:
        raise DimensionError(
            f"kron_apply: S has {s_mat.shape[0]} rows but V has {vb.m} blocks"
        )
    out = np.einsum("xis,iq->xqs", vb._cube(), s_mat, optimize=True)
    return BlockRow(out.reshape(vb.n, s_mat.shape[1] * vb.width), vb.width)


def global_qr(zb, tol=DEFAULT_RANK_TOL, scale=None):
    """Global QR factorization Z = Q (R kron I_width) by modified Gram-Schmidt.

    Returns ``(q, r, deficient)`` where ``q`` is a BlockBasis, ``r`` the m x m
    upper triangular coefficient matrix and ``deficient`` the tuple of block
    indices whose remainder fell below ``tol`` times the reference scale
    (``||Z||_F`` unless a caller supplies ``scale``, a scalar or one value per
    block, as the Arnoldi processes do for already-orthogonalized remainders).
    Deficient blocks are zeroed in ``q`` and skipped in later
    orthogonalizations; the caller decides how to treat the rank drop.  One
    reorthogonalization pass is run whenever a block loses more than 1/sqrt(2)
    of its norm.
    """
    n, m, s = zb.n, zb.m, zb.width
    if scale is None:
        scales = np.full(m, float(np.linalg.norm(zb.data)))
    else:
        scales = np.broadcast_to(np.asarray(scale, dtype=float), (m,))
    q = np.zeros((n, m * s))
    r = np.zeros((m, m))
    kept = []
    deficient = []
    for j in range(m):
        w = zb.block(j).copy()
        norm0 = np.linalg.norm(w)
        for i in kept:
            qi = q[:, i * s : (i + 1) * s]
            rij = float(np.sum(qi * w))
            r[i, j] += rij
            w -= rij * qi
        if np.linalg.norm(w) < REORTH_DROP * norm0:
            for i in kept:
                qi = q[:, i * s : (i + 1) * s]
                rij = float(np.sum(qi * w))
                r[i, j] += rij
                w -= rij * qi
        rjj = float(np.linalg.norm(w))
        r[j, j] = rjj
        if rjj <= tol * scales[j]:
            deficient.append(j)
        else:
            q[:, j * s : (j + 1) * s] = w / rjj
            kept.append(j)
    return BlockBasis(q, s, tol), r, tuple(deficient)
