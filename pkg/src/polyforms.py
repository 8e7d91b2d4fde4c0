"""
Polynomial differential forms with exact rational coefficients.

A form of degree k on R^n is stored as a map from (alpha, I) to a rational
coefficient, alpha a monomial exponent of length n and I a strictly
increasing tuple of k coordinate indices, standing for x^alpha dx_I.
"""
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch
from sympy import QQ

from . import linalg
from .exceptions import (
    DegreeMismatch,
    DimensionMismatch,
    NotASubsimplex,
    QuadratureUnavailable,
    ZeroDegree,
)
from .quadrature import product_rule
from .utils import rational_str, to_float, to_rational

ZERO = QQ(0)
ONE = QQ(1)


class PolyForm:
    __slots__ = ("dim", "degree", "terms")

    def __init__(self, dim, degree, terms=None):
        """
        Parameters
        ----------
        dim : int
              Dimension n of the coordinate space.
        degree : int
                 Form degree k, 0 <= k <= n.
        terms : dict
                Map (alpha, I) -> rational coefficient. Zero entries are
                dropped.
        """
        if degree < 0 or degree > dim:
            raise DimensionMismatch(
                "Form degree {} outside [0, {}]".format(degree, dim)
            )
        self.dim = dim
        self.degree = degree
        self.terms = {}
        if terms:
            for key, c in terms.items():
                if c != 0:
                    self.terms[key] = QQ.convert(c)

    @classmethod
    def zero(cls, dim, degree):
        return cls(dim, degree)

    @classmethod
    def constant(cls, dim, value=1):
        return cls(dim, 0, {((0,) * dim, ()): to_rational(value)})

    @classmethod
    def monomial(cls, dim, alpha, I=(), coeff=1):
        return cls(dim, len(I), {(tuple(alpha), tuple(I)): to_rational(coeff)})

    @classmethod
    def coordinate(cls, dim, i):
        alpha = [0] * dim
        alpha[i] = 1
        return cls.monomial(dim, alpha)

    @classmethod
    def dx(cls, dim, I):
        return cls.monomial(dim, (0,) * dim, tuple(I))

    # Arithmetic

    def _check(self, other):
        if self.dim != other.dim or self.degree != other.degree:
            raise DimensionMismatch(
                "Cannot combine forms ({}, {}) and ({}, {})".format(
                    self.dim, self.degree, other.dim, other.degree
                )
            )

    def __add__(self, other):
        self._check(other)
        terms = dict(self.terms)
        for key, c in other.terms.items():
            terms[key] = terms.get(key, ZERO) + c
        return PolyForm(self.dim, self.degree, terms)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return PolyForm(self.dim, self.degree, {k: -c for k, c in self.terms.items()})

    def __mul__(self, scalar):
        if isinstance(scalar, PolyForm):
            return wedge(self, scalar)
        s = scalar if isinstance(scalar, int) else to_rational(scalar)
        return PolyForm(self.dim, self.degree, {k: s * c for k, c in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, PolyForm):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.degree == other.degree
            and self.terms == other.terms
        )

    def __repr__(self):
        if not self.terms:
            return "PolyForm(0; dim={}, deg={})".format(self.dim, self.degree)
        parts = []
        for (alpha, I), c in sorted(self.terms.items()):
            mono = "*".join(
                "x{}^{}".format(i, a) if a > 1 else "x{}".format(i)
                for i, a in enumerate(alpha)
                if a
            )
            dxs = "^".join("dx{}".format(i) for i in I)
            parts.append("*".join(p for p in (rational_str(c), mono, dxs) if p))
        return " + ".join(parts)

    def is_zero(self):
        return not self.terms

    @property
    def poly_degree(self):
        if not self.terms:
            return -1
        return max(sum(alpha) for alpha, _ in self.terms)

    def is_homogeneous(self):
        return len({sum(alpha) for alpha, _ in self.terms}) <= 1

    def components(self):
        """Map I -> polynomial (dict alpha -> coefficient)."""
        comps = {}
        for (alpha, I), c in self.terms.items():
            comps.setdefault(I, {})[alpha] = c
        return comps

    def evaluate(self, point):
        """
        Exact value of the form at a rational point.

        Returns
        -------
        values : dict
                 Map I -> rational coefficient of dx_I at the point.
        """
        point = [to_rational(x) if not hasattr(x, "denominator") else x for x in point]
        out = {}
        for (alpha, I), c in self.terms.items():
            v = c
            for x, a in zip(point, alpha):
                if a:
                    v *= x**a
            out[I] = out.get(I, ZERO) + v
        return out

    def evaluate_batch(self, points):
        """
        Float values at a batch of points.

        Parameters
        ----------
        points : torch tensor of shape (N, dim)

        Returns
        -------
        values : torch tensor of shape (N, C(dim, degree))
                 Columns follow ``alt_indices(dim, degree)``.
        """
        index = {I: j for j, I in enumerate(alt_indices(self.dim, self.degree))}
        out = torch.zeros(
            points.shape[0], len(index), dtype=points.dtype, device=points.device
        )
        for (alpha, I), c in self.terms.items():
            term = torch.full(
                (points.shape[0],), to_float(c), dtype=points.dtype, device=points.device
            )
            for i, a in enumerate(alpha):
                if a:
                    term = term * points[:, i] ** a
            out[:, index[I]] += term
        return out

    def to_dict(self):
        return {
            "dim": self.dim,
            "deg": self.degree,
            "terms": [
                {"alpha": list(alpha), "I": list(I), "coeff": rational_str(c)}
                for (alpha, I), c in sorted(self.terms.items())
            ],
        }

    @classmethod
    def from_dict(cls, data):
        terms = {
            (tuple(t["alpha"]), tuple(t["I"])): to_rational(t["coeff"])
            for t in data["terms"]
        }
        return cls(data["dim"], data["deg"], terms)


# Index helpers


@lru_cache(maxsize=None)
def alt_indices(n, k):
    """Strictly increasing index tuples of length k, in lexicographic order."""
    return tuple(itertools.combinations(range(n), k))


@lru_cache(maxsize=None)
def monomials(n, p):
    """
    Exponents of all monomials of degree at most p in n variables, by
    increasing degree and lexicographically decreasing within a degree
    (x before y).
    """
    out = []
    for deg in range(p + 1):
        level = [
            a for a in itertools.product(range(deg + 1), repeat=n) if sum(a) == deg
        ]
        out.extend(sorted(level, reverse=True))
    return tuple(out)


def _insert_sign(j, I):
    """Sign and index of dx_j ^ dx_I, or (0, None) when j is in I."""
    if j in I:
        return 0, None
    pos = sum(1 for i in I if i < j)
    return (-1) ** pos, tuple(sorted(I + (j,)))


def _merge_sign(I, J):
    """Sign of the permutation sorting I + J, or 0 when they overlap."""
    if set(I) & set(J):
        return 0
    inversions = sum(1 for i in I for j in J if i > j)
    return -1 if inversions % 2 else 1


# Exterior calculus


def d(u):
    """Exterior derivative. The derivative of a top degree form is zero."""
    if u.degree == u.dim:
        return PolyForm(u.dim, u.degree)
    terms = {}
    for (alpha, I), c in u.terms.items():
        for j, a in enumerate(alpha):
            if a == 0:
                continue
            sign, J = _insert_sign(j, I)
            if not sign:
                continue
            beta = alpha[:j] + (a - 1,) + alpha[j + 1 :]
            key = (beta, J)
            terms[key] = terms.get(key, ZERO) + sign * a * c
    return PolyForm(u.dim, u.degree + 1, terms)


def wedge(u, v):
    """Wedge product; zero form when the degrees overflow the dimension."""
    if u.dim != v.dim:
        raise DimensionMismatch("Wedge of forms on R^{} and R^{}".format(u.dim, v.dim))
    k = u.degree + v.degree
    if k > u.dim:
        return PolyForm(u.dim, u.dim)
    terms = {}
    for (a, I), c in u.terms.items():
        for (b, J), e in v.terms.items():
            sign = _merge_sign(I, J)
            if not sign:
                continue
            key = (tuple(x + y for x, y in zip(a, b)), tuple(sorted(I + J)))
            terms[key] = terms.get(key, ZERO) + sign * c * e
    return PolyForm(u.dim, k, terms)


def koszul(u):
    """Contraction with the identity vector field x."""
    if u.degree == 0:
        raise ZeroDegree("The Koszul operator lowers the degree of a k-form, k >= 1.")
    terms = {}
    for (alpha, I), c in u.terms.items():
        for p, i in enumerate(I):
            beta = alpha[:i] + (alpha[i] + 1,) + alpha[i + 1 :]
            key = (beta, I[:p] + I[p + 1 :])
            terms[key] = terms.get(key, ZERO) + (-1) ** p * c
    return PolyForm(u.dim, u.degree - 1, terms)


@dataclass(frozen=True)
class AffineEmbed:
    """
    Affine map t -> offset + linear @ t from R^m (source) to R^n (target).

    ``linear`` is stored as a tuple of n rows of length m.
    """

    linear: tuple
    offset: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "linear", tuple(tuple(to_rational(x) for x in r) for r in self.linear)
        )
        object.__setattr__(self, "offset", tuple(to_rational(x) for x in self.offset))
        if len(self.linear) != len(self.offset):
            raise DimensionMismatch("Offset length differs from target dimension.")

    @property
    def target_dim(self):
        return len(self.offset)

    @property
    def source_dim(self):
        return len(self.linear[0]) if self.linear else 0

    @classmethod
    def identity(cls, n):
        return cls(
            tuple(tuple(1 if i == j else 0 for j in range(n)) for i in range(n)),
            (0,) * n,
        )

    def is_embedding(self):
        if self.source_dim == 0:
            return True
        return linalg.rank(linalg.from_rows(self.linear, self.source_dim)) == self.source_dim

    def __call__(self, t):
        t = [to_rational(x) if not hasattr(x, "denominator") else x for x in t]
        return tuple(
            b + sum((a * x for a, x in zip(r, t)), ZERO)
            for r, b in zip(self.linear, self.offset)
        )

    def compose(self, inner):
        """self o inner."""
        A = linalg.from_rows(self.linear, self.source_dim)
        B = linalg.from_rows(inner.linear, inner.source_dim)
        AB = linalg.to_rows(linalg.matmul(A, B))
        off = self(inner.offset)
        return AffineEmbed(tuple(tuple(r) for r in AB), off)


def _poly_mul(p, q):
    out = {}
    for a, c in p.items():
        for b, e in q.items():
            key = tuple(x + y for x, y in zip(a, b))
            out[key] = out.get(key, ZERO) + c * e
    return {k: v for k, v in out.items() if v != 0}


def pullback(phi, u):
    """
    Pullback of the form u on R^n along the affine map phi : R^m -> R^n.
    """
    if phi.target_dim != u.dim:
        raise DimensionMismatch(
            "Map target dimension {} differs from form dimension {}".format(
                phi.target_dim, u.dim
            )
        )
    m = phi.source_dim
    k = u.degree
    if k > m:
        raise DimensionMismatch(
            "A {}-form has no nonzero pullback to R^{}".format(k, m)
        )
    # x_i as polynomials in t
    zero_alpha = (0,) * m
    linear_polys = []
    for r, b in zip(phi.linear, phi.offset):
        poly = {}
        if b != 0:
            poly[zero_alpha] = b
        for j, a in enumerate(r):
            if a != 0:
                e = [0] * m
                e[j] = 1
                poly[tuple(e)] = a
        linear_polys.append(poly)
    powers = {}

    def power(i, e):
        key = (i, e)
        if key not in powers:
            if e == 0:
                powers[key] = {zero_alpha: ONE}
            else:
                powers[key] = _poly_mul(power(i, e - 1), linear_polys[i])
        return powers[key]

    # dx_I -> sum_J det(A[I, J]) dt_J
    minors = {}

    def minor(I):
        if I not in minors:
            out = {}
            for J in alt_indices(m, k):
                if k == 0:
                    out[J] = ONE
                    continue
                M = linalg.from_rows([[phi.linear[i][j] for j in J] for i in I], k)
                val = linalg.det(M)
                if val != 0:
                    out[J] = val
            minors[I] = out
        return minors[I]

    terms = {}
    for (alpha, I), c in u.terms.items():
        poly = {zero_alpha: c}
        for i, a in enumerate(alpha):
            if a:
                poly = _poly_mul(poly, power(i, a))
        for J, mval in minor(I).items():
            for beta, pc in poly.items():
                key = (beta, J)
                terms[key] = terms.get(key, ZERO) + pc * mval
    return PolyForm(m, k, terms)


def project_pullback(u, offset, n):
    """
    Pullback along the coordinate projection R^n -> R^{u.dim} that keeps the
    coordinates offset, ..., offset + u.dim - 1.
    """
    if offset + u.dim > n:
        raise DimensionMismatch("Projection block exceeds the product dimension.")
    before, after = (0,) * offset, (0,) * (n - offset - u.dim)
    terms = {
        (before + alpha + after, tuple(i + offset for i in I)): c
        for (alpha, I), c in u.terms.items()
    }
    return PolyForm(n, u.degree, terms)


# Polynomial spaces


def full_poly_basis(p, k, n):
    """Basis of PA_p^k(R^n): monomials of degree <= p times dx_I."""
    if p < 0:
        return []
    return [
        PolyForm.monomial(n, alpha, I)
        for alpha in monomials(n, p)
        for I in alt_indices(n, k)
    ]


def term_index(forms):
    """Deterministic index of all (alpha, I) keys appearing in ``forms``."""
    keys = set()
    for f in forms:
        keys.update(f.terms)
    return {key: i for i, key in enumerate(sorted(keys))}


def coefficient_matrix(forms, index=None):
    """
    Matrix whose columns are the coefficient vectors of ``forms``.

    Returns
    -------
    M : DomainMatrix
    index : dict
            Map (alpha, I) -> row.
    """
    if index is None:
        index = term_index(forms)
    rows = [[ZERO] * len(forms) for _ in range(len(index))]
    for j, f in enumerate(forms):
        for key, c in f.terms.items():
            rows[index[key]][j] = c
    return linalg.from_rows(rows, len(forms)), index


def independent_subset(forms):
    """First-independent forms, in the given order."""
    if not forms:
        return []
    M, _ = coefficient_matrix(forms)
    return [forms[j] for j in linalg.independent_columns(M)]


@lru_cache(maxsize=None)
def _trimmed_basis_cached(p, k, n):
    generators = list(full_poly_basis(p - 1, k, n))
    if k + 1 <= n:
        generators += [koszul(v) for v in full_poly_basis(p - 1, k + 1, n)]
    generators = [g for g in generators if not g.is_zero()]
    return tuple(independent_subset(generators))


def trimmed_basis(p, k, n):
    """
    Basis of the trimmed space PA_{p-1}^k + kappa PA_{p-1}^{k+1} on R^n.

    Generators are taken in the order monomial-lex for PA_{p-1}^k, then the
    Koszul images, and the first independent ones are kept.
    """
    if p < 1:
        return []
    return list(_trimmed_basis_cached(p, k, n))


def trimmed_dimension(p, k, n):
    """Closed form C(p+n, p+k) C(p+k-1, k)."""
    if p < 1:
        return 0
    return math.comb(p + n, p + k) * math.comb(p + k - 1, k)


def in_span(forms, u):
    """Exact membership of u in the span of ``forms``."""
    index = term_index(list(forms) + [u])
    M, _ = coefficient_matrix(list(forms), index)
    v, _ = coefficient_matrix([u], index)
    return linalg.in_column_span(M, [r[0] for r in linalg.to_rows(v)])


def is_in_trimmed(u, p):
    return in_span(trimmed_basis(p, u.degree, u.dim), u)


# Whitney forms


def barycentric(m, i):
    """Barycentric coordinate lambda_i of the reference m-simplex."""
    if i == 0:
        terms = {((0,) * m, ()): ONE}
        for j in range(m):
            e = [0] * m
            e[j] = 1
            terms[(tuple(e), ())] = -ONE
        return PolyForm(m, 0, terms)
    e = [0] * m
    e[i - 1] = 1
    return PolyForm.monomial(m, e)


def whitney_form(simplex, sub):
    """
    Whitney form of a subsimplex, in the reference chart of the simplex.

    Parameters
    ----------
    simplex : int or sequence of vertex ids
              The cell T; an int m stands for the reference m-simplex with
              local vertices 0..m.
    sub : sequence of vertex ids
          The subsimplex sigma, a subset of the vertices of T.

    Returns
    -------
    w : PolyForm
        k! sum_i (-1)^i lambda_{sigma_i} dlambda_{sigma_0} ^ ... (omit i) ...
        normalized so that its integral over sigma is one.
    """
    verts = tuple(range(simplex + 1)) if isinstance(simplex, int) else tuple(simplex)
    m = len(verts) - 1
    sub = tuple(sub)
    if not set(sub) <= set(verts) or len(set(sub)) != len(sub) or not sub:
        raise NotASubsimplex("{} is not a subsimplex of {}".format(sub, verts))
    local = [verts.index(v) for v in sub]
    k = len(local) - 1
    lam = [barycentric(m, i) for i in local]
    dlam = [d(x) for x in lam]
    w = PolyForm(m, k)
    for i in range(k + 1):
        term = lam[i]
        for j in range(k + 1):
            if j != i:
                term = wedge(term, dlam[j])
        w = w + term * ((-1) ** i)
    return w * math.factorial(k)


# Integration


def reference_integral(u, shape=None):
    """
    Integral of a top degree form over its reference domain, a product of
    reference simplices of dimensions ``shape`` (one simplex by default),
    oriented by the coordinate order.
    """
    shape = tuple(shape) if shape is not None else (u.dim,)
    if u.degree != u.dim or sum(shape) != u.dim:
        raise DegreeMismatch(
            "Integrating a {}-form over a {}-dimensional domain".format(
                u.degree, sum(shape)
            )
        )
    total = ZERO
    for (alpha, _), c in u.terms.items():
        total += c * monomial_integral(alpha, shape)
    return total


@lru_cache(maxsize=None)
def monomial_integral(alpha, shape):
    """Integral of t^alpha over a product of reference simplices."""
    value = ONE
    start = 0
    for m in shape:
        a = alpha[start : start + m]
        num = 1
        for x in a:
            num *= math.factorial(x)
        value *= QQ(num, math.factorial(sum(a) + m))
        start += m
    return value


def simplex_embed(vertices):
    """Chart map of a simplex given by its vertex coordinates."""
    v0 = [to_rational(x) for x in vertices[0]]
    cols = [[to_rational(x) - y for x, y in zip(v, v0)] for v in vertices[1:]]
    n = len(v0)
    linear = tuple(tuple(c[i] for c in cols) for i in range(n))
    return AffineEmbed(linear, tuple(v0))


def integrate(u, chain):
    """
    Exact integral of an ambient form over an oriented simplicial chain.

    Parameters
    ----------
    u : PolyForm
        Form on R^n.
    chain : list of (vertices, sign)
            Each simplex is given by its vertex coordinates, oriented by the
            listed vertex order, with an orientation sign.
    """
    total = ZERO
    for vertices, sign in chain:
        m = len(vertices) - 1
        if u.degree != m:
            raise DegreeMismatch(
                "Integrating a {}-form over a {}-simplex".format(u.degree, m)
            )
        total += sign * reference_integral(pullback(simplex_embed(vertices), u))
    return total


# Charts and L2 products


def _is_square(q):
    n, d_ = int(q.numerator), int(q.denominator)
    if n < 0:
        return None
    rn, rd = math.isqrt(n), math.isqrt(d_)
    if rn * rn == n and rd * rd == d_:
        return QQ(rn, rd)
    return None


@dataclass(frozen=True)
class Chart:
    """
    Reference chart of a piece: a product of reference simplices of
    dimensions ``shape`` mapped affinely into the ambient space.
    """

    embed: AffineEmbed
    shape: tuple

    @property
    def dim(self):
        return sum(self.shape)

    def metric(self, ambient_metric=None):
        """Chart metric J^T M J."""
        J = linalg.from_rows(self.embed.linear, self.dim)
        if ambient_metric is None:
            return linalg.matmul(linalg.transpose(J), J)
        M = linalg.from_rows(ambient_metric, self.embed.target_dim)
        return linalg.matmul(linalg.transpose(J), linalg.matmul(M, J))

    def gram_determinant(self, ambient_metric=None):
        if self.dim == 0:
            return ONE
        return linalg.det(self.metric(ambient_metric))

    def has_rational_volume(self, ambient_metric=None):
        return _is_square(self.gram_determinant(ambient_metric)) is not None

    def volume_factor(self, ambient_metric=None):
        """
        Exact sqrt(det G). Raises QuadratureUnavailable when it is
        irrational, as for slanted edges or non flat lower dimensional
        pieces.
        """
        g = self.gram_determinant(ambient_metric)
        root = _is_square(g)
        if root is None:
            raise QuadratureUnavailable(
                "Volume factor sqrt({}) of the piece is irrational".format(rational_str(g))
            )
        return root

    def volume_float(self, ambient_metric=None):
        return math.sqrt(max(to_float(self.gram_determinant(ambient_metric)), 0.0))

    def to_ambient(self, points):
        """Float image of chart points, points a torch tensor (N, dim)."""
        A = torch.tensor(
            [[to_float(x) for x in r] for r in self.embed.linear],
            dtype=points.dtype,
            device=points.device,
        ).reshape(self.embed.target_dim, self.dim)
        b = torch.tensor(
            [to_float(x) for x in self.embed.offset],
            dtype=points.dtype,
            device=points.device,
        )
        return points @ A.T + b


def inverse_metric_minors(G, k):
    """Matrix of det(G^{-1}[I, J]) over k-index pairs."""
    n = G.shape[0]
    Ginv = linalg.to_rows(linalg.inverse(G)) if n else []
    idx = alt_indices(n, k)
    rows = []
    for I in idx:
        r = []
        for J in idx:
            if k == 0:
                r.append(ONE)
            else:
                r.append(linalg.det(linalg.from_rows([[Ginv[i][j] for j in J] for i in I], k)))
        rows.append(r)
    return linalg.from_rows(rows, len(idx))


def reference_products(basis, shape=None):
    """
    Exact integrals over the reference domain of products of components.

    Returns
    -------
    table : dict
            Map (a, b, I, J) -> integral of u_a,I * u_b,J.
    """
    shape = tuple(shape) if shape is not None else (basis[0].dim if basis else 0,)
    comps = [u.components() for u in basis]
    table = {}
    for a, ca in enumerate(comps):
        for b in range(a, len(comps)):
            cb = comps[b]
            for I, pa in ca.items():
                for J, pb in cb.items():
                    val = ZERO
                    for alpha, c in pa.items():
                        for beta, e in pb.items():
                            key = tuple(x + y for x, y in zip(alpha, beta))
                            val += c * e * monomial_integral(key, shape)
                    if val != 0:
                        table[(a, b, I, J)] = val
                        table[(b, a, J, I)] = val
    return table


def _unit_products(basis, shape, g_rows, idx, table=None):
    if table is None:
        table = reference_products(basis, shape)
    N = len(basis)
    rows = [[ZERO] * N for _ in range(N)]
    for (a, b, I, J), val in table.items():
        gij = g_rows[idx.index(I)][idx.index(J)]
        if gij != 0:
            rows[a][b] += gij * val
    return linalg.from_rows(rows, N)


def mass_matrix(
    basis,
    chart=None,
    weight=None,
    ambient_metric=None,
    table=None,
    degree=None,
    rule=None,
    exact=True,
):
    """
    Gram matrix of the L2 product of forms given in a chart.

    Parameters
    ----------
    basis : list of PolyForm
            Forms of a common degree, in chart coordinates.
    chart : Chart
            Geometry of the piece. ``None`` means the reference simplex with
            its own Euclidean metric.
    weight : callable or None
             ``None`` for the exact unit weight path. Otherwise a function of
             ambient points (torch tensor (N, n)) returning the weight values
             (N,); the product is then computed by quadrature in floating
             point.
    ambient_metric : list of lists
                     Constant ambient metric, Euclidean when ``None``.
    table : dict
            Cached ``reference_products(basis, shape)``.
    degree : int
             Polynomial exactness degree of the quadrature rule.
    rule : tuple
           Cached quadrature rule (points, weights) on the reference domain.
    exact : boolean
            Wether the unit weight path returns an exact matrix. Pieces
            with an irrational volume factor sqrt(det G) then raise
            QuadratureUnavailable; with ``exact`` unset the exact reference
            products are scaled by the float volume factor.

    Returns
    -------
    M : DomainMatrix (exact path) or np.ndarray (float paths)
    """
    if not basis:
        return linalg.zeros(0, 0) if weight is None and exact else np.zeros((0, 0))
    n = basis[0].dim
    k = basis[0].degree
    shape = chart.shape if chart is not None else (n,)
    G = chart.metric(ambient_metric) if chart is not None else linalg.eye(n)
    g = inverse_metric_minors(G, k)
    idx = alt_indices(n, k)
    g_rows = linalg.to_rows(g)
    if weight is None:
        R = _unit_products(basis, shape, g_rows, idx, table)
        if not exact:
            vol = chart.volume_float(ambient_metric) if chart is not None else 1.0
            return vol * linalg.to_numpy(R)
        vol = chart.volume_factor(ambient_metric) if chart is not None else ONE
        return linalg.scale(R, vol)
    if chart is None:
        raise QuadratureUnavailable("Weighted products need a chart.")
    if rule is None:
        pdeg = max(u.poly_degree for u in basis)
        rule = product_rule(shape, degree or 2 * max(pdeg, 0) + 6, torch.float64, "cpu")
    points, weights = rule
    values = torch.stack([u.evaluate_batch(points) for u in basis])  # (N, Q, C)
    gmat = torch.tensor(linalg.to_numpy(g), dtype=points.dtype)
    w = weights * weight(chart.to_ambient(points))
    # sum_q w_q u_a(q)^T g u_b(q)
    gram = torch.einsum("aqi,ij,bqj,q->ab", values, gmat, values, w)
    return chart.volume_float(ambient_metric) * gram.numpy()


def piece_mass_matrix(basis, chart, ambient_metric=None):
    """
    Unit weight Gram matrix on a piece as an exact matrix. The exact
    reference products are scaled by sqrt(det G), exact when rational and
    otherwise the rational value of its binary64 root, so linear relations
    among the products hold exactly.
    """
    if not basis:
        return linalg.zeros(0, 0)
    if chart.has_rational_volume(ambient_metric):
        vol = chart.volume_factor(ambient_metric)
    else:
        vol = to_rational(chart.volume_float(ambient_metric))
    n = basis[0].dim
    k = basis[0].degree
    g = inverse_metric_minors(chart.metric(ambient_metric), k)
    R = _unit_products(basis, chart.shape, linalg.to_rows(g), alt_indices(n, k))
    return linalg.scale(R, vol)
