"""Dense small-scale kernels.

Matrix exponential and the first exponential-integrator function, algebraic
Lyapunov solves through the real Schur form, Gramian integrals by the Van Loan
block-exponential construction, the 2-logarithmic norm and truncated symmetric
factorizations.  Everything here is dense and guarded by the configured cap.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .config import check_dense_cap
from .errors import DimensionError, IllPosedError, NumericError

SYM_CHECK_TOL = 1e-13


def _square(m, who):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{who}: expected a square matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise NumericError(f"{who}: matrix contains non-finite entries")
    return m


def symmetrize(y, check_tol=SYM_CHECK_TOL):
    """Return (Y + Y^T)/2, first checking the asymmetry is roundoff-sized."""
    y = _square(y, "symmetrize")
    if check_tol is not None:
        scale = np.linalg.norm(y)
        if scale > 0 and np.abs(y - y.T).max() > check_tol * scale:
            raise NumericError("matrix is not symmetric to within tolerance")
    return 0.5 * (y + y.T)


def expm(m):
    """Matrix exponential by scaling and squaring with a Pade approximant."""
    m = _square(m, "expm")
    check_dense_cap(m.shape[0], "expm")
    e = sla.expm(m)
    if not np.isfinite(e).all():
        raise NumericError("expm overflowed")
    return e


def phi1(m):
    """psi_1(M) = M^{-1}(e^M - I), with psi_1(0) = I.

    Evaluated as the top-right block of exp([[M, I], [0, 0]]), which stays
    accurate for singular and near-singular M.
    """
    m = _square(m, "phi1")
    k = m.shape[0]
    check_dense_cap(k, "phi1")
    aug = np.zeros((2 * k, 2 * k))
    aug[:k, :k] = m
    aug[:k, k:] = np.eye(k)
    return expm(aug)[:k, k:]


def _quasi_tri_eigvals(ts):
    """Eigenvalues read off the diagonal 1x1/2x2 blocks of a real Schur form."""
    k = ts.shape[0]
    eigs = []
    i = 0
    while i < k:
        if i + 1 < k and ts[i + 1, i] != 0.0:
            tr = ts[i, i] + ts[i + 1, i + 1]
            det = ts[i, i] * ts[i + 1, i + 1] - ts[i, i + 1] * ts[i + 1, i]
            disc = 0.25 * tr * tr - det
            im = np.sqrt(max(-disc, 0.0))
            eigs.append(complex(0.5 * tr, im))
            eigs.append(complex(0.5 * tr, -im))
            i += 2
        else:
            eigs.append(complex(ts[i, i], 0.0))
            i += 1
    return np.array(eigs)


def lyap_solve(t_mat, q_mat):
    """Solve T Y + Y T^T + Q = 0 for symmetric Q (Bartels-Stewart).

    One real Schur reduction of T, then a quasi-triangular Sylvester solve
    (LAPACK trsyl); no complex arithmetic.  Raises IllPosedError when some
    eigenvalue pair satisfies lambda_i + lambda_j ~ 0.
    """
    t_mat = _square(t_mat, "lyap_solve")
    q_mat = symmetrize(q_mat)
    k = t_mat.shape[0]
    if q_mat.shape[0] != k:
        raise DimensionError("lyap_solve: T and Q orders differ")
    check_dense_cap(k, "lyap_solve")
    ts, u = sla.schur(t_mat, output="real")
    lam = _quasi_tri_eigvals(ts)
    pair_min = np.abs(lam[:, None] + lam[None, :]).min()
    scale = max(1.0, float(np.abs(lam).max()))
    if pair_min <= 1e-12 * scale:
        raise IllPosedError(
            f"Lyapunov operator is singular: min |lambda_i + lambda_j| = {pair_min:.3e}"
        )
    qs = u.T @ (-q_mat) @ u
    x, sc, info = lapack.dtrsyl(ts, ts, qs, tranb="T")
    if info < 0:
        raise IllPosedError(f"trsyl failed with info={info}")
    y = u @ (x / sc) @ u.T
    return symmetrize(y, check_tol=None)


def _vanloan_segment(h, q_outer, t):
    """exp(t [[H, qq^T], [0, -H^T]]) read off as (Gram(t), e^{tH})."""
    k = h.shape[0]
    blk = np.zeros((2 * k, 2 * k))
    blk[:k, :k] = h
    blk[:k, k:] = q_outer
    blk[k:, k:] = -h.T
    p = sla.expm(t * blk)
    if not np.isfinite(p).all():
        raise NumericError("vanloan_gram: block exponential overflowed")
    w = p[:k, k:] @ p[:k, :k].T
    return 0.5 * (w + w.T), p[:k, :k]


# Largest ||t H||_1 handed to one block exponential; larger segments risk
# overflow of the e^{+tH^T} block and cancellation in the read-off product.
VANLOAN_THETA = 4.0


def _segment_count(h, t):
    scale = float(np.linalg.norm(h, 1))
    return max(1, int(np.ceil(abs(t) * scale / VANLOAN_THETA)))


def vanloan_gram(h, q, t):
    """Gramian integral int_0^t e^{sH} qq^T e^{sH^T} ds, symmetric PSD.

    ``q`` may be a vector (rank-one integrand) or an k x r matrix.  The
    integral is accumulated over segments short enough that each block
    exponential stays well scaled, so stiff H and large t are safe.
    """
    h = _square(h, "vanloan_gram")
    k = h.shape[0]
    check_dense_cap(k, "vanloan_gram")
    if t < 0:
        raise ValueError("vanloan_gram: t must be nonnegative")
    q = np.asarray(q, dtype=float)
    if q.ndim == 1:
        q = q[:, None]
    if q.shape[0] != k:
        raise DimensionError("vanloan_gram: q does not match the order of H")
    if t == 0:
        return np.zeros((k, k))
    q_outer = q @ q.T
    nseg = _segment_count(h, t)
    d = t / nseg
    wd, ed = _vanloan_segment(h, q_outer, d)
    w = wd
    for _ in range(nseg - 1):
        w = wd + ed @ w @ ed.T
        w = 0.5 * (w + w.T)
    return w


def vanloan_gram_nodes(h, q, step, nsteps):
    """Gramians at t_k = k*step for k = 0..nsteps, plus the propagators e^{t_k H}.

    Uses the splitting W(t + s) = W(s) + e^{sH} W(t) e^{sH^T} so the block
    exponential is evaluated once, not per node.
    """
    h = _square(h, "vanloan_gram_nodes")
    k = h.shape[0]
    check_dense_cap(k, "vanloan_gram_nodes")
    if step <= 0 or nsteps < 0:
        raise ValueError("vanloan_gram_nodes: need step > 0 and nsteps >= 0")
    q = np.asarray(q, dtype=float)
    if q.ndim == 1:
        q = q[:, None]
    q_outer = q @ q.T
    nseg = _segment_count(h, step)
    d = step / nseg
    wd, ed = _vanloan_segment(h, q_outer, d)
    wh, eh = wd, ed
    for _ in range(nseg - 1):
        wh = wd + ed @ wh @ ed.T
        eh = ed @ eh
    wh = 0.5 * (wh + wh.T)
    grams = [np.zeros((k, k))]
    props = [np.eye(k)]
    for _ in range(nsteps):
        w = wh + eh @ grams[-1] @ eh.T
        grams.append(0.5 * (w + w.T))
        props.append(eh @ props[-1])
    return grams, props


def lognorm2(a):
    """2-logarithmic norm, half the largest eigenvalue of A + A^T."""
    a = _square(a, "lognorm2")
    check_dense_cap(a.shape[0], "lognorm2")
    return 0.5 * float(np.linalg.eigvalsh(a + a.T).max())


@dataclass(frozen=True)
class LowRankFactor:
    """Z and a +/-1 signature with Y ~ Z diag(signs) Z^T, columns by decreasing weight."""

    z: np.ndarray
    signs: np.ndarray

    @property
    def rank(self):
        return self.z.shape[1]

    def assemble(self):
        return (self.z * self.signs) @ self.z.T


def trunc_sym_factor(y, tol):
    """Spectrally truncated factorization of a symmetric matrix.

    Keeps eigenpairs with |lambda| > tol * |lambda|_max and returns
    Z = U sqrt(|lambda|) together with sign(lambda), so the reconstruction
    error satisfies ||Y - Z diag(signs) Z^T||_2 <= tol * |lambda|_max.
    """
    y = symmetrize(y)
    check_dense_cap(y.shape[0], "trunc_sym_factor")
    lam, u = np.linalg.eigh(y)
    amax = np.abs(lam).max() if lam.size else 0.0
    keep = np.abs(lam) > tol * amax
    lam, u = lam[keep], u[:, keep]
    order = np.argsort(-np.abs(lam))
    lam, u = lam[order], u[:, order]
    z = u * np.sqrt(np.abs(lam))
    signs = np.where(lam >= 0, 1.0, -1.0)
    return LowRankFactor(z, signs)
