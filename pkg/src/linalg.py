"""
Exact linear algebra over the rationals.

Every rank, null space, solve and determinant used by the verification layer
goes through ``sympy``'s ``DomainMatrix`` over ``QQ``; matrices are always
``DomainMatrix`` instances and vectors are plain lists of ``QQ`` elements.
"""
import numpy as np
from sympy import QQ
from sympy.polys.matrices import DomainMatrix

from .exceptions import InconsistentInput
from .utils import to_float, to_rational

ZERO = QQ(0)
ONE = QQ(1)


def from_rows(rows, ncols=None):
    """
    Builds a rational matrix from a list of rows.

    Parameters
    ----------
    rows : list of lists
           Entries are ints or ``QQ`` elements.
    ncols : int
            Number of columns, required when ``rows`` is empty.
    """
    rows = [[QQ.convert(x) for x in r] for r in rows]
    if ncols is None:
        ncols = len(rows[0]) if rows else 0
    return DomainMatrix(rows, (len(rows), ncols), QQ)


def from_columns(columns, nrows):
    cols = list(columns)
    rows = [[c[i] for c in cols] for i in range(nrows)]
    return from_rows(rows, len(cols))


def to_rows(M):
    m, n = M.shape
    if m == 0 or n == 0:
        return [[ZERO] * n for _ in range(m)]
    return M.to_list()


def columns(M):
    rows = to_rows(M)
    m, n = M.shape
    return [[rows[i][j] for i in range(m)] for j in range(n)]


def zeros(m, n):
    return DomainMatrix([[ZERO] * n for _ in range(m)], (m, n), QQ)


def eye(n):
    return DomainMatrix(
        [[ONE if i == j else ZERO for j in range(n)] for i in range(n)], (n, n), QQ
    )


def column(vector):
    return from_rows([[x] for x in vector], 1)


def row(vector):
    return from_rows([list(vector)], len(vector))


def matmul(A, B):
    if A.shape[1] != B.shape[0]:
        raise ValueError("Shape mismatch {} x {}".format(A.shape, B.shape))
    if 0 in A.shape or 0 in B.shape:
        return zeros(A.shape[0], B.shape[1])
    return A * B


def matvec(A, v):
    return [x[0] for x in to_rows(matmul(A, column(v)))] if A.shape[0] else []


def add(A, B):
    if 0 in A.shape:
        return A
    return A + B


def sub(A, B):
    if 0 in A.shape:
        return A
    return A - B


def scale(A, c):
    c = QQ.convert(c)
    return from_rows([[c * x for x in r] for r in to_rows(A)], A.shape[1])


def transpose(A):
    m, n = A.shape
    if m == 0 or n == 0:
        return zeros(n, m)
    return A.transpose()


def hstack(*blocks):
    blocks = [B for B in blocks if B is not None]
    nrows = blocks[0].shape[0]
    rows = [[] for _ in range(nrows)]
    for B in blocks:
        if B.shape[0] != nrows:
            raise ValueError("hstack of matrices with different row counts")
        for i, r in enumerate(to_rows(B)):
            rows[i].extend(r)
    return from_rows(rows, sum(B.shape[1] for B in blocks))


def vstack(*blocks, ncols=None):
    blocks = [B for B in blocks if B is not None]
    if not blocks:
        return zeros(0, ncols or 0)
    ncols = blocks[0].shape[1]
    rows = []
    for B in blocks:
        if B.shape[1] != ncols:
            raise ValueError("vstack of matrices with different column counts")
        rows.extend(to_rows(B))
    return from_rows(rows, ncols)


def block_diag(*blocks):
    m = sum(B.shape[0] for B in blocks)
    n = sum(B.shape[1] for B in blocks)
    rows = [[ZERO] * n for _ in range(m)]
    i0 = j0 = 0
    for B in blocks:
        for i, r in enumerate(to_rows(B)):
            rows[i0 + i][j0 : j0 + B.shape[1]] = r
        i0 += B.shape[0]
        j0 += B.shape[1]
    return from_rows(rows, n)


def kron(A, B):
    ra, rb = to_rows(A), to_rows(B)
    (ma, na), (mb, nb) = A.shape, B.shape
    rows = []
    for i in range(ma):
        for k in range(mb):
            rows.append([ra[i][j] * rb[k][l] for j in range(na) for l in range(nb)])
    return from_rows(rows, na * nb)


def select_rows(A, indices):
    rows = to_rows(A)
    return from_rows([rows[i] for i in indices], A.shape[1])


def select_columns(A, indices):
    rows = to_rows(A)
    return from_rows([[r[j] for j in indices] for r in rows], len(indices))


def is_zero(A):
    return all(x == 0 for r in to_rows(A) for x in r)


def rref(A):
    """
    Reduced row echelon form.

    Returns
    -------
    rows : list of lists
           The nonzero rows of the reduced matrix.
    pivots : tuple of int
             Pivot column of each returned row.
    """
    m, n = A.shape
    if m == 0 or n == 0:
        return [], ()
    # Incidence matrices are very sparse; the sparse reduction scales to
    # thousands of columns where the dense one does not.
    R, pivots = A.to_sparse().rref()
    dod = R.to_dod()
    rows = [
        [dod.get(i, {}).get(j, ZERO) for j in range(n)] for i in range(len(pivots))
    ]
    return rows, tuple(pivots)


def from_dod(entries, shape):
    """Sparse rational matrix from ``{row: {column: value}}``."""
    dod = {
        i: {j: QQ.convert(x) for j, x in r.items() if x != 0}
        for i, r in entries.items()
    }
    dod = {i: r for i, r in dod.items() if r}
    return DomainMatrix.from_dod(dod, shape, QQ).to_dense()


def rank(A):
    return len(rref(A)[1])


def nullspace(A):
    """
    Basis of the right kernel, one column per free variable.

    The basis is deterministic: the vector attached to a free column has a
    one in that column and zeros in the other free columns.
    """
    m, n = A.shape
    rows, pivots = rref(A)
    pivot_set = set(pivots)
    free = [j for j in range(n) if j not in pivot_set]
    basis = []
    for f in free:
        v = [ZERO] * n
        v[f] = ONE
        for r, p in zip(rows, pivots):
            v[p] = -r[f]
        basis.append(v)
    return from_columns(basis, n)


def left_nullspace(A):
    return transpose(nullspace(transpose(A)))


def solve_with_constraints(A, B):
    """
    Particular solutions of ``A X = B`` column by column, together with the
    compatibility constraints on the right hand side.

    Returns
    -------
    X : DomainMatrix of shape (n, s)
        Particular solution with free variables set to zero. Its columns are
        linear in the columns of ``B``.
    C : DomainMatrix of shape (c, s)
        ``A X = B a`` is solvable for a combination ``a`` of the columns of
        ``B`` exactly when ``C a = 0``.
    """
    m, n = A.shape
    s = B.shape[1]
    if m == 0:
        return zeros(n, s), zeros(0, s)
    rows, pivots = rref(hstack(A, B))
    X = [[ZERO] * s for _ in range(n)]
    constraints = []
    for r, p in zip(rows, pivots):
        if p < n:
            X[p] = list(r[n:])
        else:
            constraints.append(list(r[n:]))
    # Rows of the reduced matrix that vanish on A but not on B are all pivoted
    # beyond column n; re-reducing them gives a clean constraint basis.
    C = from_rows(constraints, s)
    if constraints:
        crow, _ = rref(C)
        C = from_rows(crow, s)
    return from_rows(X, s), C


def solve(A, B):
    """Particular solution of ``A X = B``; raises when inconsistent."""
    X, C = solve_with_constraints(A, B)
    if C.shape[0] and not is_zero(C):
        raise InconsistentInput("Linear system has no solution.")
    return X


def solve_vector(A, b):
    X = solve(A, column(b))
    return [r[0] for r in to_rows(X)]


def inverse(A):
    n = A.shape[0]
    if n == 0:
        return zeros(0, 0)
    return A.inv()


def det(A):
    if A.shape[0] == 0:
        return ONE
    return A.det()


def row_basis(A):
    rows, _ = rref(A)
    return from_rows(rows, A.shape[1])


def independent_columns(A):
    return rref(A)[1]


def independent_rows(A):
    return rref(transpose(A))[1]


def in_column_span(A, v):
    if A.shape[1] == 0:
        return all(x == 0 for x in v)
    return rank(hstack(A, column(v))) == rank(A)


def same_column_span(A, B):
    ra, rb = rank(A), rank(B)
    if ra != rb:
        return False
    if ra == 0:
        return True
    return rank(hstack(A, B)) == ra


def same_row_span(A, B):
    return same_column_span(transpose(A), transpose(B))


def to_numpy(A):
    m, n = A.shape
    out = np.zeros((m, n))
    for i, r in enumerate(to_rows(A)):
        for j, x in enumerate(r):
            if x != 0:
                out[i, j] = to_float(x)
    return out


def from_numpy(array):
    """Exact rational image of a float array (binary64 values are rationals)."""
    array = np.atleast_2d(np.asarray(array, dtype=float))
    return from_rows(
        [[to_rational(float(x)) for x in r] for r in array], array.shape[1]
    )


class CoordinateMap:
    """
    Exact coordinates with respect to the columns of a full column rank
    matrix ``B``.

    A square invertible submatrix on independent rows is factored once, so
    that coordinates of any vector cost one product; membership in the
    column span is then checked on the remaining rows.
    """

    def __init__(self, B):
        self.B = B
        self.shape = B.shape
        m, n = B.shape
        if n == 0:
            self.rows = ()
            self.inverse = zeros(0, 0)
            return
        self.rows = independent_rows(B)
        if len(self.rows) != n:
            raise ValueError("Basis matrix does not have full column rank.")
        self.inverse = inverse(select_rows(B, self.rows))
        self._B_rows = to_rows(B)
        self._inv_rows = to_rows(self.inverse)

    def coordinates(self, v, check=True):
        """
        Parameters
        ----------
        v : list of QQ
            Vector of length ``B.shape[0]``.
        check : boolean
                Wether to verify that ``v`` lies in the column span.

        Returns
        -------
        x : list of QQ, or None when ``v`` is not in the span and ``check``
            is set.
        """
        n = self.shape[1]
        if n == 0:
            if check and any(x != 0 for x in v):
                return None
            return []
        w = [v[i] for i in self.rows]
        x = [sum((a * b for a, b in zip(r, w)), ZERO) for r in self._inv_rows]
        if check:
            for i, r in enumerate(self._B_rows):
                if sum((a * b for a, b in zip(r, x)), ZERO) != v[i]:
                    return None
        return x
