"""
Locally harmonic forms.

A k-form u on a cell T is harmonic for a scalar product a on the spaces of
T when du is a-orthogonal to dA_0^k(T) and u is a-orthogonal to
dA_0^{k-1}(T). The locally harmonic subsystem keeps the forms whose traces
on every subcell are harmonic; its De Rham map onto cochains is an
isomorphism, which gives the canonical cochain-indexed basis.
"""
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch
from sympy import QQ

from . import linalg
from .exceptions import (
    DimensionMismatch,
    NotCompatible,
    NotExtendable,
    NotInParentSpace,
    ParentNotCompatible,
    QuadratureFailure,
    SequenceInexact,
)
from .complex import build_simplicial
from .fesystem import ElementSystem, GlobalSpace, TrimmedSystem
from .polyforms import (
    PolyForm,
    d,
    inverse_metric_minors,
    mass_matrix,
    piece_mass_matrix,
    wedge,
)
from .quadrature import product_rule
from .utils import condition_warning, to_float, to_rational

ZERO = QQ(0)


@dataclass
class CellProduct:
    """
    Gram matrix of a scalar product on A^k(T), in the local basis.

    ``gram`` is always exact. Weighted products are computed in floating
    point and lifted to the rationals they represent. Unit products on
    pieces with an irrational volume factor scale the exact reference
    products by the lifted float root.
    """

    cid: str
    k: int
    gram: object
    weight: str
    condition: float = None


class Products:
    """
    Per-cell scalar products on the spaces of an element system.

    Parameters
    ----------
    system : ElementSystem
    metric : None, matrix or callable
             Constant ambient metric, or a function of a piece returning
             one (piecewise constant metrics). Euclidean when ``None``.
    alpha : None, sequence or callable
            Constant ambient 1-form (or function of the cell id) defining
            the exponential weight exp(-sign beta_T), with beta_T the zero
            mean affine function on T such that d beta_T = alpha. ``None``
            gives the unit weight and exact Gram matrices.
    sign : +1 or -1
           Upwinding direction.
    degree : int
             Exactness degree of the weighted quadrature.
    """

    def __init__(self, system, metric=None, alpha=None, sign=1, degree=None):
        self.system = system
        self.complex = system.complex
        self.metric = metric
        self.alpha = alpha
        self.sign = sign
        self.degree = degree
        self._cache = {}

    @property
    def weighted(self):
        return self.alpha is not None

    def _metric(self, piece):
        if self.metric is None:
            return None
        if callable(self.metric):
            return self.metric(piece)
        return self.metric

    def _alpha(self, cid):
        a = self.alpha(cid) if callable(self.alpha) else self.alpha
        return np.asarray([to_float(x) for x in a], dtype=float)

    def centroid(self, cid):
        """Volume weighted centroid of a cell, in floating point."""
        cx = self.complex
        total, acc = 0.0, np.zeros(cx.ambient_dim)
        for p in cx.cell(cid).pieces:
            chart = cx.chart(p)
            vol = chart.volume_float() / np.prod([math.factorial(m) for m in chart.shape])
            acc += vol * np.array([to_float(x) for x in cx.barycenter(p)])
            total += vol
        return acc / total

    def beta(self, cid):
        """The affine function beta_T as a torch callable of ambient points."""
        a = self._alpha(cid)
        c = self.centroid(cid)

        def beta(x):
            at = torch.tensor(a, dtype=x.dtype, device=x.device)
            ct = torch.tensor(c, dtype=x.dtype, device=x.device)
            return (x - ct) @ at

        return beta

    def product(self, cid, k):
        key = (cid, k)
        if key not in self._cache:
            self._cache[key] = self._compute(cid, k)
        return self._cache[key]

    def gram(self, cid, k):
        return self.product(cid, k).gram

    def _compute(self, cid, k):
        cx = self.complex
        space = self.system.space(cid, k)
        pieces = cx.cell(cid).pieces
        if not self.weighted:
            G = linalg.zeros(space.dim, space.dim)
            for i, p in enumerate(pieces):
                basis = [fam[i] for fam in space.families]
                G = linalg.add(
                    G, piece_mass_matrix(basis, cx.chart(p), self._metric(p))
                )
            return CellProduct(cid, k, G, "unit")
        beta = self.beta(cid)
        sign = self.sign

        def weight(x):
            return torch.exp(-sign * beta(x))

        G = np.zeros((space.dim, space.dim))
        for i, p in enumerate(pieces):
            basis = [fam[i] for fam in space.families]
            if not basis:
                continue
            G += mass_matrix(
                basis,
                cx.chart(p),
                weight=weight,
                ambient_metric=self._metric(p),
                degree=self.degree,
            )
        if space.dim:
            if not np.all(np.isfinite(G)):
                raise QuadratureFailure("Weighted Gram matrix of {} is not finite".format(cid))
            G = 0.5 * (G + G.T)
            try:
                np.linalg.cholesky(G)
            except np.linalg.LinAlgError:
                raise QuadratureFailure(
                    "Weighted Gram matrix of {} is not positive definite".format(cid)
                ) from None
            cond = float(np.linalg.cond(G))
            if cond > condition_warning:
                warnings.warn(
                    "Weighted Gram matrix of {} (k={}) has condition number {:.3e}".format(
                        cid, k, cond
                    )
                )
        else:
            cond = 1.0
        exact = linalg.from_numpy(G) if space.dim else linalg.zeros(0, 0)
        return CellProduct(cid, k, exact, "upwind", cond)


def l2_products(system, metric=None):
    return Products(system, metric=metric)


def upwinded_products(system, alpha, sign=1, degree=None):
    """
    Exponentially weighted products a(u, v) = int_T exp(-sign beta_T) u.v.

    With ``alpha`` zero the weight is one and the Gram matrices agree with
    the unit ones up to quadrature roundoff.
    """
    return Products(system, alpha=alpha, sign=sign, degree=degree)


def harmonic_rows(system, products, cid, k):
    """
    Rows of the conditions du _|_ dA_0^k(T) and u _|_ dA_0^{k-1}(T), acting
    on coordinates in A^k(T).
    """
    m = system.complex.cell(cid).dim
    n = system.space(cid, k).dim
    blocks = []
    if k < m:
        D = system.d_matrix(cid, k)
        DK = linalg.matmul(D, system.kernel_space(cid, k))
        M = products.gram(cid, k + 1)
        blocks.append(linalg.matmul(linalg.transpose(DK), linalg.matmul(M, D)))
    if k >= 1:
        D = system.d_matrix(cid, k - 1)
        DK = linalg.matmul(D, system.kernel_space(cid, k - 1))
        M = products.gram(cid, k)
        blocks.append(linalg.matmul(linalg.transpose(DK), M))
    return linalg.vstack(*blocks, ncols=n)


def _coordinates(system, cid, k, u):
    if isinstance(u, (list, tuple)) and u and not hasattr(u[0], "terms"):
        return [to_rational(x) if not hasattr(x, "denominator") else x for x in u]
    x = system.space(cid, k).coordinates(tuple(u))
    if x is None:
        raise NotInParentSpace("Form is not in A^{}({})".format(k, cid))
    return x


def a_harmonic_check(system, u, cid, k, products):
    """
    Wether u (a family of forms or coordinates in A^k(T)) is harmonic on T.
    """
    x = _coordinates(system, cid, k, u)
    H = harmonic_rows(system, products, cid, k)
    return all(v == 0 for v in linalg.matvec(H, x)) if H.shape[0] else True


def _require_exact(system, cid):
    if not system.exactness_verdicts(cid)["boundary"]:
        raise SequenceInexact(
            "The sequence with boundary conditions is not exact on {}".format(cid)
        )


def harmonic_extension(system, boundary, cid, k, products):
    """
    The unique harmonic extension to T of boundary data.

    Parameters
    ----------
    boundary : dict
               Coordinates of the data on the faces of T of dimension >= k
               (missing faces are zero).

    Returns
    -------
    x : list
        Coordinates of the extension in A^k(T).
    """
    cx = system.complex
    if k >= cx.cell(cid).dim:
        raise SequenceInexact("Harmonic extension needs k < dim T.")
    _require_exact(system, cid)
    faces = [f for f in cx.faces(cid) if cx.cell(f).dim >= k]
    g = []
    for f in faces:
        n = system.space(f, k).dim
        g.extend(boundary.get(f, [ZERO] * n))
    R = system.boundary_matrix(cid, k)
    X, C = linalg.solve_with_constraints(R, linalg.column(g))
    if C.shape[0] and not linalg.is_zero(C):
        raise NotExtendable("Boundary data on {} has no extension".format(cid))
    xp = [r[0] for r in linalg.to_rows(X)]
    K = system.kernel_space(cid, k)
    if K.shape[1] == 0:
        return xp
    H = harmonic_rows(system, products, cid, k)
    HK = linalg.matmul(H, K)
    if linalg.rank(HK) != K.shape[1]:
        raise SequenceInexact("Harmonic extension on {} is not unique".format(cid))
    rhs = [-v for v in linalg.matvec(H, xp)]
    y = linalg.solve_vector(HK, rhs)
    return [a + b for a, b in zip(xp, linalg.matvec(K, y))]


def harmonic_top_form(system, cid, alpha, products):
    """The harmonic top degree form on T with integral ``alpha``."""
    m = system.complex.cell(cid).dim
    _require_exact(system, cid)
    n = system.space(cid, m).dim
    rows = [system.integral_vector(cid)]
    rhs = [to_rational(alpha)]
    if m >= 1:
        H = harmonic_rows(system, products, cid, m)
        rows.extend(linalg.to_rows(H))
        rhs.extend([ZERO] * H.shape[0])
    A = linalg.from_rows(rows, n)
    if linalg.rank(A) != n:
        raise SequenceInexact("Harmonic top form on {} is not unique".format(cid))
    return linalg.solve_vector(A, rhs)


class HarmonicSubsystem(ElementSystem):
    """
    Subsystem of locally harmonic forms of a parent system.

    A^k(T) keeps the parent forms whose trace on every subcell T' of
    dimension >= k satisfies the harmonic conditions on T'.
    """

    kind = "harmonic"

    def __init__(self, parent, products, threads=1, verbose=False):
        super().__init__(parent.complex, threads, verbose)
        self.parent = parent
        self.products = products
        self._bases = {}

    def signature(self, cid):
        # Harmonic conditions depend on the cell geometry.
        return None

    def harmonic_basis(self, cid, k):
        """Basis of the locally harmonic forms, as parent coordinates."""
        key = (cid, k)
        if key not in self._bases:
            cx = self.complex
            P = self.parent
            n = P.space(cid, k).dim
            blocks = []
            for sub in cx.closure(cid):
                if cx.cell(sub).dim < k:
                    continue
                H = harmonic_rows(P, self.products, sub, k)
                if H.shape[0]:
                    blocks.append(linalg.matmul(H, P.restriction_matrix(cid, sub, k)))
            S = linalg.vstack(*blocks, ncols=n)
            self._bases[key] = linalg.nullspace(S) if S.shape[0] else linalg.eye(n)
        return self._bases[key]

    def _raw_families(self, cid, k):
        space = self.parent.space(cid, k)
        return [space.combine(col) for col in linalg.columns(self.harmonic_basis(cid, k))]


def locally_harmonic_subsystem(parent, products, verify=True, threads=1, verbose=False):
    """
    Builds the locally harmonic subsystem and, when ``verify`` is set, checks
    that it is compatible and that its De Rham maps are invertible.
    """
    report = parent.compatibility()
    if not report.compatible:
        raise ParentNotCompatible(
            "Parent system is not compatible; failing cells {}".format(report.failing_cells())
        )
    sub = HarmonicSubsystem(parent, products, threads, verbose)
    if verify:
        if not sub.compatibility().compatible:
            raise NotCompatible("Locally harmonic subsystem is not compatible.")
        for k in range(parent.complex.dim + 1):
            rho = sub.de_rham_matrix(k)
            if rho.shape[0] != rho.shape[1] or linalg.det(rho) == 0:
                raise NotCompatible("De Rham map of degree {} is not invertible".format(k))
        if verbose:
            print("Locally harmonic subsystem verified.")
    return sub


def canonical_harmonic_basis(subsystem, k):
    """
    Global basis of the locally harmonic k-forms dual to the k-cells: the
    form attached to a k-cell c has integral one on c and zero on the other
    k-cells. It is the harmonic top form on c, extended harmonically to the
    cells around it by increasing dimension.

    Returns
    -------
    space : GlobalSpace
            Families in the subsystem bases; ``space.labels`` lists the
            k-cells in basis order.
    """
    parent = subsystem.parent
    products = subsystem.products
    cx = subsystem.complex
    labels = cx.cells_of_dim(k)
    cells = [c.id for c in cx if c.dim >= k]
    families = []
    for c in labels:
        values = {c: harmonic_top_form(parent, c, 1, products)}
        for cell in cx:
            if cell.dim <= k:
                continue
            faces = [f for f in cx.faces(cell.id) if f in values]
            if not faces:
                continue
            values[cell.id] = harmonic_extension(
                parent, {f: values[f] for f in faces}, cell.id, k, products
            )
        family = {}
        for cid, x in values.items():
            own = subsystem.space(cid, k)
            y = own.coordinates(parent.space(cid, k).combine(x))
            if y is None:
                raise NotCompatible("Harmonic extension left the subsystem on {}".format(cid))
            if any(v != 0 for v in y):
                family[cid] = y
        families.append(family)
    space = GlobalSpace(subsystem, k, cells, families, list(labels))
    space.labels = labels
    for i, c in enumerate(labels):
        for j, fam in enumerate(families):
            w = subsystem.integral_vector(c)
            v = fam.get(c)
            value = sum((a * b for a, b in zip(w, v)), ZERO) if v else ZERO
            if value != (1 if i == j else 0):
                raise NotCompatible("De Rham image of the canonical basis is not the identity.")
    return space


def gauge_residual(complex_, cid, v, alpha, degree=12):
    """
    Weak residual of the weighted harmonic equations for u = exp(beta_T) v.

    ``v`` is a constant k-form in the chart coordinates of a simplex cell
    and ``alpha`` a constant ambient 1-form. The residual is the largest of
    |int exp(-beta) u.dw| over bubbles w of degree k - 1 and
    |int exp(-beta) du.dw| over bubbles w of degree k, the bubbles being
    the trimmed forms of order 3 vanishing on the boundary of the cell.
    """
    cell = complex_.cell(cid)
    if len(cell.pieces) != 1 or len(complex_.chart(cell.pieces[0]).shape) != 1:
        raise DimensionMismatch("Gauge residual is computed on simplex cells.")
    chart = complex_.chart(cell.pieces[0])
    m, k = chart.dim, v.degree
    J = linalg.from_rows(chart.embed.linear, m)
    a = linalg.matvec(linalg.transpose(J), [to_rational(x) for x in alpha])
    a_form = PolyForm.zero(m, 1)
    for i, c in enumerate(a):
        a_form = a_form + PolyForm.dx(m, (i,)) * c

    points, weights = product_rule(chart.shape, degree, torch.float64, "cpu")
    center = torch.full((m,), 1.0 / (m + 1), dtype=torch.float64)
    beta = (points - center) @ torch.tensor([to_float(c) for c in a], dtype=torch.float64)
    scale = torch.exp(beta)[:, None]
    u = scale * v.evaluate_batch(points)
    du = scale * wedge(a_form, v).evaluate_batch(points) if k < m else None
    w_exp = weights * torch.exp(-beta)
    G = chart.metric()

    reference = _reference_system(m)
    top = "-".join(str(i) for i in range(m + 1))

    def pairings(values, j):
        g = torch.tensor(linalg.to_numpy(inverse_metric_minors(G, j + 1)))
        space = reference.space(top, j)
        out = []
        for col in linalg.columns(reference.kernel_space(top, j)):
            dw = d(space.combine(col)[0]).evaluate_batch(points)
            out.append(float(torch.einsum("qi,ij,qj,q->", values, g, dw, w_exp).abs()))
        return out

    residuals = []
    if k >= 1:
        residuals.extend(pairings(u, k - 1))
    if du is not None:
        residuals.extend(pairings(du, k))
    return max(residuals, default=0.0)


@lru_cache(maxsize=None)
def _reference_system(m):
    vertices = [[0] * m] + [[1 if i == j else 0 for i in range(m)] for j in range(m)]
    return TrimmedSystem(build_simplicial(vertices, [list(range(m + 1))]), 3)
