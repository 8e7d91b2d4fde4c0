"""
Product complexes and tensor product element systems.

The cells of a product complex are the products U x V of cells of the
factors. Pieces are concatenations of factor pieces, charts concatenate the
factor charts, and the k-forms of U x V are spanned by the wedge products of
pulled back factor forms of degrees l and k - l.
"""
from sympy import QQ

from . import linalg
from .complex import Cell, Complex
from .exceptions import NonComplex, PreconditionFailed
from .fesystem import ElementSystem
from .polyforms import project_pullback, wedge

ZERO = QQ(0)


def product_cell_id(U, V):
    return "{}x{}".format(U, V)


def product_complex(first, second, name=None):
    """
    Product of two complexes. The orientation of U x V is the product
    orientation, so that incidence numbers follow the graded Leibniz rule.
    """
    cells = []
    for U in first:
        for V in second:
            support = tuple(
                (p + q, s * t) for p, s in U.support for q, t in V.support
            )
            cells.append(
                Cell(
                    product_cell_id(U.id, V.id),
                    U.dim + V.dim,
                    support,
                    {"factors": (U.id, V.id)},
                )
            )
    name = name or "{} x {}".format(first.name or "first", second.name or "second")
    out = Complex(first.factors + second.factors, cells, name=name)
    for k in range(out.dim - 1):
        dd = linalg.matmul(out.coboundary_matrix(k + 1), out.coboundary_matrix(k))
        if not linalg.is_zero(dd):
            raise NonComplex("Product orientations break the coboundary in degree {}".format(k))
    out.factor_complexes = (first, second)
    return out


class TensorSystem(ElementSystem):
    """
    Tensor product of element systems A on U and B on V.

    The basis of C^k(U x V) is ordered by the degree l of the first factor,
    then by the basis of A^l(U), then by the basis of B^{k-l}(V).
    """

    kind = "tensor"

    def __init__(self, first, second, complex_=None, threads=1, verbose=False):
        complex_ = complex_ or product_complex(first.complex, second.complex)
        super().__init__(complex_, threads, verbose)
        self.first = first
        self.second = second
        self._nfactors = len(first.complex.factors)

    def factors_of(self, cid):
        return self.complex.cell(cid).meta["factors"]

    def blocks(self, cid, k):
        """
        Blocks (l, dim A^l(U), dim B^{k-l}(V), offset) of the basis of
        C^k(U x V).
        """
        U, V = self.factors_of(cid)
        mu = self.first.complex.cell(U).dim
        mv = self.second.complex.cell(V).dim
        out, offset = [], 0
        for l in range(max(0, k - mv), min(mu, k) + 1):
            da = self.first.space(U, l).dim
            db = self.second.space(V, k - l).dim
            out.append((l, da, db, offset))
            offset += da * db
        return out

    def _raw_families(self, cid, k):
        U, V = self.factors_of(cid)
        cell = self.complex.cell(cid)
        cu = self.first.complex.cell(U)
        cv = self.second.complex.cell(V)
        n = cell.dim
        positions = []
        for p in cell.pieces:
            pu, pv = p[: self._nfactors], p[self._nfactors :]
            positions.append((cu.pieces.index(pu), cv.pieces.index(pv)))
        families = []
        for l, _, _, _ in self.blocks(cid, k):
            A = self.first.space(U, l)
            B = self.second.space(V, k - l)
            for a in A.families:
                for b in B.families:
                    families.append(
                        tuple(
                            wedge(
                                project_pullback(a[i], 0, n),
                                project_pullback(b[j], cu.dim, n),
                            )
                            for i, j in positions
                        )
                    )
        return families

    def product_vector(self, cid, k, l, x, y):
        """Coordinates in C^k(U x V) of the product of A^l(U) and B^{k-l}(V) elements."""
        width = self.space(cid, k).dim
        out = [ZERO] * width
        for l_, da, db, offset in self.blocks(cid, k):
            if l_ != l:
                continue
            for a, xa in enumerate(x):
                if xa == 0:
                    continue
                for b, yb in enumerate(y):
                    out[offset + a * db + b] = xa * yb
        return out


def tensor_system(first, second, threads=1, verbose=False):
    return TensorSystem(first, second, threads=threads, verbose=verbose)


def _graded_product(da, db, k):
    return sum(
        da[l] * db[k - l]
        for l in range(len(da))
        if 0 <= k - l < len(db)
    )


def _boundary_dims(system, cid):
    cx = system.complex
    m = cx.cell(cid).dim
    if m == 0:
        return [0]
    boundary = [c for c in cx.closure(cid) if c != cid]
    return [system.global_space(boundary, k).dim for k in range(m + 1)]


def _closure_dims(system, cid):
    cx = system.complex
    closure = cx.closure(cid)
    return [system.global_space(closure, k).dim for k in range(cx.cell(cid).dim + 1)]


def tensor_dimension_checks(first, second, product=None):
    """
    Verdicts transferring structure from the factors to their tensor
    product, each computed from both sides independently:

    - ``kernels``: C_0^k(U x V) is spanned by the products of the kernels
      A_0^l(U) and B_0^{k-l}(V), by exact span equality;
    - ``global_dimensions``: dim C^k = sum_l dim A^l dim B^{k-l} over the
      whole complexes;
    - ``extensions``: the product admits extensions, and the boundary of
      every product cell satisfies the Mayer-Vietoris count;
    - ``local_exactness``: C is locally exact exactly when both factors
      are (Kunneth).

    Raises PreconditionFailed when a factor does not admit extensions.
    """
    for slot, system in (("first", first), ("second", second)):
        ext = system.check_extensions()
        if not all(all(v.values()) for v in ext.values()):
            raise PreconditionFailed(
                "The {} factor does not admit extensions".format(slot), slot=slot
            )
    C = product or TensorSystem(first, second)
    cx = C.complex
    A, B = first.complex, second.complex

    kernels = {}
    for cell in cx:
        U, V = C.factors_of(cell.id)
        verdicts = {}
        for k in range(cell.dim + 1):
            cols = []
            for l, _, _, _ in C.blocks(cell.id, k):
                for x in linalg.columns(first.kernel_space(U, l)):
                    for y in linalg.columns(second.kernel_space(V, k - l)):
                        cols.append(C.product_vector(cell.id, k, l, x, y))
            width = C.space(cell.id, k).dim
            P = linalg.from_columns(cols, width) if cols else linalg.zeros(width, 0)
            verdicts[k] = linalg.same_column_span(P, C.kernel_space(cell.id, k))
        kernels[cell.id] = verdicts

    da = [first.global_space(None, k).dim for k in range(A.dim + 1)]
    db = [second.global_space(None, k).dim for k in range(B.dim + 1)]
    global_dims = []
    for k in range(cx.dim + 1):
        lhs = C.global_space(None, k).dim
        rhs = _graded_product(da, db, k)
        global_dims.append({"product": lhs, "factors": rhs, "equal": lhs == rhs})

    extensions = {}
    mayer_vietoris = {}
    for cell in cx:
        U, V = C.factors_of(cell.id)
        extensions[cell.id] = all(C.extension_verdicts(cell.id).values())
        if cell.dim == 0:
            mayer_vietoris[cell.id] = True
            continue
        bu, bv = _boundary_dims(first, U), _boundary_dims(second, V)
        cu, cv = _closure_dims(first, U), _closure_dims(second, V)
        direct = _boundary_dims(C, cell.id)
        counted = [
            _graded_product(bu, cv, k) + _graded_product(cu, bv, k) - _graded_product(bu, bv, k)
            for k in range(cell.dim + 1)
        ]
        mayer_vietoris[cell.id] = direct == counted

    exactness = {}
    for cell in cx:
        U, V = C.factors_of(cell.id)
        product_closed = C.exactness_verdicts(cell.id)["closed"]
        factors_closed = (
            first.exactness_verdicts(U)["closed"] and second.exactness_verdicts(V)["closed"]
        )
        exactness[cell.id] = {"product": product_closed, "factors": factors_closed}

    verdict = {
        "kernels": all(all(v.values()) for v in kernels.values()),
        "global_dimensions": all(g["equal"] for g in global_dims),
        "extensions": all(extensions.values()) and all(mayer_vietoris.values()),
        "local_exactness": all(v["product"] == v["factors"] for v in exactness.values()),
    }
    return {
        "verdict": verdict,
        "kernels": {c: {str(k): b for k, b in v.items()} for c, v in kernels.items()},
        "global_dimensions": global_dims,
        "extensions": extensions,
        "mayer_vietoris": mayer_vietoris,
        "local_exactness": exactness,
    }
