"""Problem definitions, sparse storage and factorization, Matrix Market I/O,
and built-in test-problem generators.

Sparse matrices are scipy CSR throughout; a problem bundle on disk is a
directory holding Matrix Market files plus a ``problem.cfg`` manifest naming
the members and the time horizon.
"""

import configparser
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .blockmat import BlockRow, global_qr
from .errors import DimensionError, FactorizationError, ParseError

SparseMat = sp.csr_matrix


def _as_square_sparse(a, who):
    if not sp.issparse(a):
        raise DimensionError(f"{who}: expected a sparse matrix")
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{who}: expected square, got {a.shape}")
    return a.tocsr()


def _full_rank_warning(mat, name):
    """Advisory full-column-rank check through the global QR rank signal."""
    arr = np.asarray(mat, dtype=float)
    if arr.shape[1] == 0:
        return
    _, _, deficient = global_qr(BlockRow(arr, 1))
    if deficient:
        warnings.warn(f"{name} looks rank deficient (columns {list(deficient)})",
                      stacklevel=3)


@dataclass(frozen=True)
class GenSylvesterProblem:
    """d/dt X = sum_i A_i X B_i + C on [t0, tf] with X(t0) = X0."""

    a_list: tuple
    b_list: tuple
    c: np.ndarray
    x0: np.ndarray = None
    t0: float = 0.0
    tf: float = 1.0

    def __post_init__(self):
        a_list = tuple(_as_square_sparse(a, "GenSylvesterProblem A_i") for a in self.a_list)
        b_list = tuple(_as_square_sparse(b, "GenSylvesterProblem B_i") for b in self.b_list)
        object.__setattr__(self, "a_list", a_list)
        object.__setattr__(self, "b_list", b_list)
        if len(a_list) != len(b_list) or not a_list:
            raise DimensionError("need equally many A_i and B_i terms, at least one")
        n = a_list[0].shape[0]
        p = b_list[0].shape[0]
        if any(a.shape[0] != n for a in a_list) or any(b.shape[0] != p for b in b_list):
            raise DimensionError("inconsistent operator orders across terms")
        c = np.asarray(self.c, dtype=float)
        if c.shape != (n, p):
            raise DimensionError(f"C must be {n} x {p}, got {c.shape}")
        object.__setattr__(self, "c", c)
        if self.x0 is not None:
            x0 = np.asarray(self.x0, dtype=float)
            if x0.shape != (n, p):
                raise DimensionError(f"X0 must be {n} x {p}, got {x0.shape}")
            object.__setattr__(self, "x0", x0)
        if not self.t0 < self.tf:
            raise DimensionError("need t0 < tf")
        _full_rank_warning(c, "right-hand side C")

    @property
    def q(self):
        return len(self.a_list)

    @property
    def n(self):
        return self.a_list[0].shape[0]

    @property
    def p(self):
        return self.b_list[0].shape[0]

    def initial_value(self):
        return np.zeros((self.n, self.p)) if self.x0 is None else self.x0


@dataclass(frozen=True)
class DLEProblem:
    """d/dt X = A X + X A^T + B B^T on [t0, tf] with X(t0) = Z0 Z0^T."""

    a: sp.spmatrix
    b: np.ndarray
    z0: np.ndarray = None
    t0: float = 0.0
    tf: float = 1.0

    def __post_init__(self):
        a = _as_square_sparse(self.a, "DLEProblem")
        object.__setattr__(self, "a", a)
        b = np.asarray(self.b, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        if b.shape[0] != a.shape[0]:
            raise DimensionError("B row count does not match A")
        object.__setattr__(self, "b", b)
        if self.z0 is not None:
            z0 = np.asarray(self.z0, dtype=float)
            if z0.ndim == 1:
                z0 = z0[:, None]
            if z0.shape[0] != a.shape[0]:
                raise DimensionError("Z0 row count does not match A")
            object.__setattr__(self, "z0", z0)
        if not self.t0 < self.tf:
            raise DimensionError("need t0 < tf")
        if b.shape[1] > max(1, a.shape[0] // 10):
            warnings.warn("B is not low rank relative to n (p > n/10)", stacklevel=2)
        _full_rank_warning(b, "factor B")

    @property
    def n(self):
        return self.a.shape[0]

    @property
    def p(self):
        return self.b.shape[1]


class LinearSolver:
    """Reusable sparse LU of A for the repeated A^{-1} applications."""

    def __init__(self, a):
        a = _as_square_sparse(a, "LinearSolver")
        self.shape = a.shape
        try:
            self._lu = spla.splu(a.tocsc())
        except RuntimeError as exc:
            raise FactorizationError(f"sparse LU failed: {exc}") from exc

    def solve(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape[0] != self.shape[0]:
            raise DimensionError("right-hand side rows do not match A")
        return self._lu.solve(w)


def solve_with(solver, w):
    """Columns x with A x = w through a prefactored LinearSolver."""
    return solver.solve(w)


def gsylv_apply(problem, x):
    """Apply the generalized Sylvester operator X -> sum_i A_i X B_i."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n, problem.p):
        raise DimensionError(f"operand must be {problem.n} x {problem.p}, got {x.shape}")
    out = np.zeros_like(x)
    for a_i, b_i in zip(problem.a_list, problem.b_list):
        out += (b_i.T @ (a_i @ x).T).T
    return out


def gsylv_apply_t(problem, x):
    """Transpose operator X -> sum_i A_i^T X B_i^T (unused by the Galerkin method)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for a_i, b_i in zip(problem.a_list, problem.b_list):
        out += (b_i @ (a_i.T @ x).T).T
    return out


# ---------------------------------------------------------------------------
# Matrix Market I/O (coordinate and array, real entries only)

def _mm_tokens(header_line):
    toks = header_line.strip().split()
    if len(toks) != 5 or toks[0] != "%%MatrixMarket":
        raise ParseError("expected '%%MatrixMarket matrix <format> <field> <symmetry>'", 1)
    return [t.lower() for t in toks[1:]]


def read_matrix_market(path):
    """Read a real Matrix Market file into a CSR matrix (coordinate) or ndarray (array).

    Symmetric storage is expanded to full.  Complex, pattern and hermitian
    files are rejected; malformed content raises ParseError with the line
    number.
    """
    path = Path(path)
    with open(path, "r") as fh:
        lines = fh.readlines()
    if not lines:
        raise ParseError("empty file", 1)
    obj, fmt, field_kind, symmetry = _mm_tokens(lines[0])
    if obj != "matrix":
        raise ParseError(f"unsupported object {obj!r}", 1)
    if fmt not in ("coordinate", "array"):
        raise ParseError(f"unsupported format {fmt!r}", 1)
    if field_kind not in ("real", "integer"):
        raise ParseError(f"unsupported field {field_kind!r} (real only)", 1)
    if symmetry not in ("general", "symmetric"):
        raise ParseError(f"unsupported symmetry {symmetry!r}", 1)

    body = [(i + 1, ln.strip()) for i, ln in enumerate(lines[1:], start=1)
            if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise ParseError("missing size line", len(lines))
    size_lineno, size_line = body[0]
    entries = body[1:]
    sizes = size_line.split()

    if fmt == "coordinate":
        if len(sizes) != 3:
            raise ParseError("coordinate size line needs 'rows cols nnz'", size_lineno)
        try:
            nrows, ncols, nnz = (int(s) for s in sizes)
        except ValueError:
            raise ParseError(f"bad size line {size_line!r}", size_lineno) from None
        if len(entries) != nnz:
            raise ParseError(f"expected {nnz} entries, found {len(entries)}",
                             size_lineno)
        rows, cols, vals = [], [], []
        for lineno, ln in entries:
            toks = ln.split()
            if len(toks) != 3:
                raise ParseError(f"bad coordinate entry {ln!r}", lineno)
            try:
                i, j, v = int(toks[0]), int(toks[1]), float(toks[2])
            except ValueError:
                raise ParseError(f"bad coordinate entry {ln!r}", lineno) from None
            if not (1 <= i <= nrows and 1 <= j <= ncols):
                raise ParseError(f"index ({i}, {j}) out of bounds", lineno)
            rows.append(i - 1)
            cols.append(j - 1)
            vals.append(v)
            if symmetry == "symmetric" and i != j:
                rows.append(j - 1)
                cols.append(i - 1)
                vals.append(v)
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols)).tocsr()
        mat.sum_duplicates()
        mat.sort_indices()
        return mat

    if len(sizes) != 2:
        raise ParseError("array size line needs 'rows cols'", size_lineno)
    try:
        nrows, ncols = (int(s) for s in sizes)
    except ValueError:
        raise ParseError(f"bad size line {size_line!r}", size_lineno) from None
    if symmetry == "symmetric":
        expected = nrows * (nrows + 1) // 2
    else:
        expected = nrows * ncols
    if len(entries) != expected:
        raise ParseError(f"expected {expected} values, found {len(entries)}", size_lineno)
    vals = []
    for lineno, ln in entries:
        toks = ln.split()
        if len(toks) != 1:
            raise ParseError(f"bad array value {ln!r}", lineno)
        try:
            vals.append(float(toks[0]))
        except ValueError:
            raise ParseError(f"bad array value {ln!r}", lineno) from None
    dense = np.zeros((nrows, ncols))
    if symmetry == "symmetric":
        k = 0
        for j in range(ncols):
            for i in range(j, nrows):
                dense[i, j] = vals[k]
                dense[j, i] = vals[k]
                k += 1
    else:
        dense = np.asarray(vals).reshape((nrows, ncols), order="F")
    return dense


def write_matrix_market(path, mat, comment=None):
    """Write a sparse matrix (coordinate) or ndarray (array), 17 significant digits."""
    path = Path(path)
    with open(path, "w") as fh:
        if sp.issparse(mat):
            coo = mat.tocoo()
            fh.write("%%MatrixMarket matrix coordinate real general\n")
            if comment:
                fh.write(f"% {comment}\n")
            fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
            order = np.lexsort((coo.col, coo.row))
            for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{i + 1} {j + 1} {v:.17g}\n")
        else:
            arr = np.asarray(mat, dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            fh.write("%%MatrixMarket matrix array real general\n")
            if comment:
                fh.write(f"% {comment}\n")
            fh.write(f"{arr.shape[0]} {arr.shape[1]}\n")
            for v in arr.flatten(order="F"):
                fh.write(f"{v:.17g}\n")


# ---------------------------------------------------------------------------
# Test-problem generators

def gen_laplacian2d(n0):
    """5-point Laplacian on the unit square (Dirichlet), scaled by -(n0+1)^2.

    The scaling makes the operator stable: all eigenvalues are negative.
    """
    if n0 < 2:
        raise ValueError("gen_laplacian2d: need n0 >= 2")
    h2 = float((n0 + 1) ** 2)
    ones = np.ones(n0)
    t = sp.diags([ones[:-1], -2.0 * ones, ones[:-1]], [-1, 0, 1], format="csr")
    eye = sp.identity(n0, format="csr")
    a = h2 * (sp.kron(eye, t) + sp.kron(t, eye))
    a = a.tocsr()
    a.eliminate_zeros()      # kron keeps structural zeros of the identity factor
    a.sum_duplicates()
    a.sort_indices()
    return a


def gen_random_stable(n, density=0.1, shift=1.0, seed=0):
    """Sparse random A made stable and nonsingular by diagonal dominance."""
    rng = np.random.default_rng(seed)
    nnz = max(n, int(density * n * n))
    rows = rng.integers(0, n, nnz)
    cols = rng.integers(0, n, nnz)
    vals = rng.standard_normal(nnz)
    a = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    a.sum_duplicates()
    row_sums = np.asarray(np.abs(a).sum(axis=1)).ravel()
    a = a - sp.diags(row_sums + shift)
    a = a.tocsr()
    a.sort_indices()
    return a


def random_full_rank(n, p, seed=0):
    """Dense n x p factor with unit Frobenius norm."""
    rng = np.random.default_rng(seed)
    b = rng.standard_normal((n, p))
    return b / np.linalg.norm(b)


def gen_dle_problem(n0=10, p=2, seed=0, t0=0.0, tf=1.0):
    """Laplacian DLE fixture: A = gen_laplacian2d(n0), random unit-norm B."""
    a = gen_laplacian2d(n0)
    b = random_full_rank(a.shape[0], p, seed)
    return DLEProblem(a, b, t0=t0, tf=tf)


def gen_sylvester_q2(n, p, seed=0, t0=0.0, tf=1.0):
    """Two-term fixture A1 X B1 + A2 X B2 with the Lyapunov-like pattern
    B1 = I_p and A2 = I_n, both A1 and B2 stable."""
    rng = np.random.default_rng(seed)
    a1 = gen_random_stable(n, density=0.1, seed=seed)
    b2_dense = rng.standard_normal((p, p))
    b2_dense = b2_dense - (np.abs(np.linalg.eigvals(b2_dense).real).max() + 1.0) * np.eye(p)
    c = rng.standard_normal((n, p))
    c /= np.linalg.norm(c)
    return GenSylvesterProblem(
        (a1, sp.identity(n, format="csr")),
        (sp.identity(p, format="csr"), sp.csr_matrix(b2_dense)),
        c, t0=t0, tf=tf,
    )


# ---------------------------------------------------------------------------
# Problem bundles on disk

MANIFEST_NAME = "problem.cfg"


def save_problem(problem, out_dir):
    """Write a problem bundle (Matrix Market members + manifest) to a directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = configparser.ConfigParser()
    manifest["problem"] = {"t0": f"{problem.t0:.17g}", "tf": f"{problem.tf:.17g}"}
    members = {}
    if isinstance(problem, DLEProblem):
        manifest["problem"]["kind"] = "dle"
        members["A"] = problem.a
        members["B"] = problem.b
        if problem.z0 is not None:
            members["Z0"] = problem.z0
    elif isinstance(problem, GenSylvesterProblem):
        manifest["problem"]["kind"] = "gensylv"
        manifest["problem"]["q"] = str(problem.q)
        for i, (a_i, b_i) in enumerate(zip(problem.a_list, problem.b_list), start=1):
            members[f"A{i}"] = a_i
            members[f"B{i}"] = b_i
        members["C"] = problem.c
        if problem.x0 is not None:
            members["X0"] = problem.x0
    else:
        raise TypeError(f"cannot save problem of type {type(problem).__name__}")
    manifest["matrices"] = {name: f"{name}.mtx" for name in members}
    for name, mat in members.items():
        write_matrix_market(out_dir / f"{name}.mtx", mat)
    with open(out_dir / MANIFEST_NAME, "w") as fh:
        manifest.write(fh)
    return out_dir


def load_problem(bundle_dir):
    """Load a problem bundle written by save_problem."""
    bundle_dir = Path(bundle_dir)
    manifest_path = bundle_dir / MANIFEST_NAME
    if not manifest_path.exists():
        raise ParseError(f"no {MANIFEST_NAME} in {bundle_dir}")
    manifest = configparser.ConfigParser()
    manifest.read(manifest_path)
    kind = manifest.get("problem", "kind", fallback=None)
    t0 = manifest.getfloat("problem", "t0", fallback=0.0)
    tf = manifest.getfloat("problem", "tf", fallback=1.0)
    files = dict(manifest["matrices"]) if manifest.has_section("matrices") else {}

    def member(name, required=True):
        key = name.lower()
        if key not in files:
            if required:
                raise ParseError(f"manifest is missing matrix {name!r}")
            return None
        return read_matrix_market(bundle_dir / files[key])

    if kind == "dle":
        a = member("A")
        b = member("B")
        z0 = member("Z0", required=False)
        b = np.asarray(b.todense()) if sp.issparse(b) else b
        return DLEProblem(sp.csr_matrix(a), b, z0=z0, t0=t0, tf=tf)
    if kind == "gensylv":
        q = manifest.getint("problem", "q")
        a_list = [sp.csr_matrix(member(f"A{i}")) for i in range(1, q + 1)]
        b_list = [sp.csr_matrix(member(f"B{i}")) for i in range(1, q + 1)]
        c = member("C")
        c = np.asarray(c.todense()) if sp.issparse(c) else c
        x0 = member("X0", required=False)
        if x0 is not None and sp.issparse(x0):
            x0 = np.asarray(x0.todense())
        return GenSylvesterProblem(tuple(a_list), tuple(b_list), c, x0=x0, t0=t0, tf=tf)
    raise ParseError(f"unknown problem kind {kind!r}")
