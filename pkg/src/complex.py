"""
Cellular complexes over a substrate of flat pieces.

A piece is a simplex, or a product of simplices for product complexes. It is
keyed by a tuple of factor simplices, each a sorted tuple of vertex ids of
that factor: ``((0, 1, 2),)`` is a triangle, ``((0, 1), (3, 4))`` a square.
Every cell is an oriented union of top-dimensional pieces (its support), so
single simplices, agglomerations of fine simplices and products of cells
share one code path for faces, incidence numbers and coboundaries.
"""
import itertools
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

from sympy import QQ

from . import linalg
from .exceptions import (
    DegenerateSimplex,
    DimensionMismatch,
    NonComplex,
    NotManifoldLike,
    NotRefinement,
    NotSimplicial,
    UnknownCell,
    ZeroCell,
)
from .polyforms import AffineEmbed, Chart
from .utils import to_rational

ZERO = QQ(0)
ONE = QQ(1)


# Pieces


def piece_shape(piece):
    return tuple(len(s) - 1 for s in piece)


def piece_dim(piece):
    return sum(len(s) - 1 for s in piece)


def piece_id(piece):
    return "x".join("-".join(str(v) for v in s) for s in piece)


def piece_facets(piece):
    """
    Codimension one faces of a piece with their incidence numbers.

    For a simplex the face omitting the i-th vertex has sign (-1)^i; on a
    product the sign of a face of the j-th factor is shifted by the
    dimensions of the factors before it.
    """
    out = []
    offset = 0
    for f, s in enumerate(piece):
        m = len(s) - 1
        if m > 0:
            for i in range(m + 1):
                face = piece[:f] + (s[:i] + s[i + 1 :],) + piece[f + 1 :]
                out.append((face, (-1) ** (offset + i)))
        offset += m
    return out


def piece_subpieces(piece):
    """All faces of a piece, itself included."""
    per_factor = [
        [c for r in range(1, len(s) + 1) for c in itertools.combinations(s, r)]
        for s in piece
    ]
    return [tuple(p) for p in itertools.product(*per_factor)]


def is_subpiece(sub, piece):
    return len(sub) == len(piece) and all(set(a) <= set(b) for a, b in zip(sub, piece))


@lru_cache(maxsize=None)
def _local_embedding(shape, positions):
    """
    Reference map of a face into a piece, from the positions of the face
    vertices among the piece vertices (factor by factor). Vertex position
    0 sits at the origin and position a >= 1 at the unit vector e_{a-1}.
    """
    n = sum(shape)
    sub_dims = [len(p) - 1 for p in positions]
    m = sum(sub_dims)
    linear = [[ZERO] * m for _ in range(n)]
    offset = [ZERO] * n
    row0 = col0 = 0
    for mf, pos in zip(shape, positions):
        a0 = pos[0]
        if a0 >= 1:
            offset[row0 + a0 - 1] = ONE
        for j, a in enumerate(pos[1:]):
            if a >= 1:
                linear[row0 + a - 1][col0 + j] += ONE
            if a0 >= 1:
                linear[row0 + a0 - 1][col0 + j] -= ONE
        row0 += mf
        col0 += len(pos) - 1
    return AffineEmbed(tuple(tuple(r) for r in linear), tuple(offset))


def piece_embedding(sub, piece):
    """Affine map from the reference chart of ``sub`` into that of ``piece``."""
    if not is_subpiece(sub, piece):
        raise NonComplex("{} is not a face of {}".format(sub, piece))
    positions = tuple(tuple(s.index(v) for v in w) for w, s in zip(sub, piece))
    return _local_embedding(piece_shape(piece), positions)


def _orient_pieces(pieces):
    """
    Coherent orientation signs of a connected set of equidimensional pieces.

    Pieces sharing a facet get opposite induced orientations on it. Returns
    a list of signs aligned with ``pieces``.
    """
    pieces = list(pieces)
    if len(pieces) == 1:
        return [1]
    by_facet = {}
    for idx, p in enumerate(pieces):
        for f, o in piece_facets(p):
            by_facet.setdefault(f, []).append((idx, o))
    signs = [0] * len(pieces)
    signs[0] = 1
    queue = deque([0])
    while queue:
        idx = queue.popleft()
        for f, o in piece_facets(pieces[idx]):
            for jdx, o2 in by_facet[f]:
                if jdx == idx:
                    continue
                s = -signs[idx] * o * o2
                if signs[jdx] == 0:
                    signs[jdx] = s
                    queue.append(jdx)
                elif signs[jdx] != s:
                    raise NonComplex("Support is not orientable.")
    if 0 in signs:
        raise NonComplex("Support is not connected through facets.")
    return signs


@dataclass(frozen=True)
class Cell:
    """
    A cell: an oriented union of pieces of dimension ``dim``.

    ``support`` is a tuple of (piece, sign) pairs. ``meta`` holds builder
    specific data (the primal cell of a dual cell, the factor ids of a
    product cell, ...).
    """

    id: str
    dim: int
    support: tuple
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def pieces(self):
        return tuple(p for p, _ in self.support)


@dataclass
class Cochain:
    """Values on the k-cells of a complex."""

    degree: int
    values: dict

    def vector(self, complex_):
        return [to_rational(self.values.get(c, 0)) for c in complex_.cells_of_dim(self.degree)]


class Complex:
    """
    Immutable cellular complex.

    Parameters
    ----------
    factors : tuple of vertex tables
              One table of rational coordinates per factor; a simplicial
              complex has a single factor.
    cells : list of Cell
            Cells of all dimensions, closed under faces.
    fine : Complex
           The complex whose cells are the pieces of this one, when cells
           are unions of several pieces. ``None`` when every cell is a
           single piece.
    name : str
           Label used in reports.
    """

    def __init__(self, factors, cells, fine=None, name=None):
        self.factors = tuple(tuple(tuple(v) for v in table) for table in factors)
        self.factor_dims = tuple(len(t[0]) if t else 0 for t in self.factors)
        self.ambient_dim = sum(self.factor_dims)
        self.fine = fine
        self.name = name
        cells = sorted(cells, key=lambda c: c.dim)
        self._cells = {}
        for c in cells:
            if c.id in self._cells:
                raise NonComplex("Duplicate cell id {}".format(c.id))
            if not c.support:
                raise NonComplex("Cell {} has an empty support".format(c.id))
            for p, _ in c.support:
                if piece_dim(p) != c.dim or len(p) != len(self.factors):
                    raise NonComplex("Cell {} has a piece of wrong shape".format(c.id))
            self._cells[c.id] = c
        self.dim = max((c.dim for c in cells), default=-1)
        self._by_dim = [[] for _ in range(self.dim + 1)]
        for c in cells:
            self._by_dim[c.dim].append(c.id)
        self._index = {
            cid: i for ids in self._by_dim for i, cid in enumerate(ids)
        }
        self.owner = {}
        for c in cells:
            for p, s in c.support:
                if p in self.owner:
                    raise NonComplex(
                        "Piece {} belongs to cells {} and {}".format(
                            p, self.owner[p][0], c.id
                        )
                    )
                self.owner[p] = (c.id, s)
        self._faces = {c.id: self._compute_faces(c) for c in cells}
        self._cofaces = {cid: [] for cid in self._cells}
        for cid, faces in self._faces.items():
            for f in faces:
                self._cofaces[f].append(cid)
        self._closures = {}
        self._interior = None
        self._simplicial = len(self.factors) == 1 and all(
            len(c.support) == 1 for c in cells
        )

    def _compute_faces(self, cell):
        if cell.dim == 0:
            return {}
        chain = {}
        for p, s in cell.support:
            for f, o in piece_facets(p):
                chain[f] = chain.get(f, 0) + s * o
        faces = {}
        covered = {}
        for f, c in chain.items():
            if c == 0:
                continue
            if abs(c) > 1:
                raise NonComplex("Cell {} is not coherently oriented".format(cell.id))
            if f not in self.owner:
                raise NonComplex(
                    "Boundary of cell {} is not a union of cells".format(cell.id)
                )
            fid, sf = self.owner[f]
            o = c * sf
            if faces.setdefault(fid, o) != o:
                raise NonComplex(
                    "Inconsistent orientation of face {} in {}".format(fid, cell.id)
                )
            covered[fid] = covered.get(fid, 0) + 1
        for fid, n in covered.items():
            if n != len(self._cells[fid].support):
                raise NonComplex(
                    "Face {} is only partly on the boundary of {}".format(fid, cell.id)
                )
        return faces

    # Queries

    def __contains__(self, cid):
        return cid in self._cells

    def __len__(self):
        return len(self._cells)

    def __iter__(self):
        return iter(self._cells.values())

    def cell(self, cid):
        try:
            return self._cells[cid]
        except KeyError:
            raise UnknownCell("Unknown cell {}".format(cid)) from None

    @property
    def cells(self):
        return list(self._cells.values())

    def cells_of_dim(self, k):
        if k < 0 or k > self.dim:
            return []
        return list(self._by_dim[k])

    def index(self, cid):
        """Position of a cell among the cells of its dimension."""
        self.cell(cid)
        return self._index[cid]

    def counts(self):
        return tuple(len(ids) for ids in self._by_dim)

    def faces(self, cid):
        """Codimension one faces of a cell with their incidence numbers."""
        self.cell(cid)
        return dict(self._faces[cid])

    def cofaces(self, cid):
        self.cell(cid)
        return list(self._cofaces[cid])

    def closure(self, cid):
        """Ids of the subcells of a cell, itself included, in complex order."""
        self.cell(cid)
        if cid not in self._closures:
            seen = {cid}
            stack = [cid]
            while stack:
                for f in self._faces[stack.pop()]:
                    if f not in seen:
                        seen.add(f)
                        stack.append(f)
            self._closures[cid] = [c for c in self._cells if c in seen]
        return list(self._closures[cid])

    def top_cells(self):
        return [cid for cid in self._cells if not self._cofaces[cid]]

    def is_subcell(self, sub, cid):
        return sub in set(self.closure(cid))

    def incidence(self, cid, sub):
        """
        Relative orientation o(T, T') of two cells: +-1 when T' is a
        codimension one face of T, 0 otherwise.
        """
        self.cell(cid)
        self.cell(sub)
        return self._faces[cid].get(sub, 0)

    @property
    def is_simplicial(self):
        return self._simplicial

    def simplex(self, cid):
        """Vertex tuple of a cell of a simplicial complex."""
        c = self.cell(cid)
        if len(self.factors) != 1 or len(c.support) != 1:
            raise NotSimplicial("Cell {} is not a simplex".format(cid))
        return c.support[0][0][0]

    # Geometry

    def chart(self, piece):
        """Chart of a piece: its reference product of simplices in R^n."""
        linear_cols = []
        offset = []
        row0 = 0
        blocks = []
        for table, s, n in zip(self.factors, piece, self.factor_dims):
            v0 = table[s[0]]
            offset.extend(v0)
            blocks.append(
                (row0, [[x - y for x, y in zip(table[v], v0)] for v in s[1:]])
            )
            row0 += n
        m = piece_dim(piece)
        linear = [[ZERO] * m for _ in range(self.ambient_dim)]
        col0 = 0
        for row0, cols in blocks:
            for j, col in enumerate(cols):
                for i, x in enumerate(col):
                    linear[row0 + i][col0 + j] = x
            col0 += len(cols)
        return Chart(
            AffineEmbed(tuple(tuple(r) for r in linear), tuple(offset)),
            piece_shape(piece),
        )

    def barycenter(self, piece):
        out = []
        for table, s in zip(self.factors, piece):
            n = QQ(len(s))
            out.extend(sum((table[v][i] for v in s), ZERO) / n for i in range(len(table[s[0]])))
        return tuple(out)

    def cell_barycenter(self, cid):
        """Average of the barycenters of the support pieces."""
        pts = [self.barycenter(p) for p in self.cell(cid).pieces]
        n = QQ(len(pts))
        return tuple(sum(c, ZERO) / n for c in zip(*pts))

    def _chart_coordinates(self, piece, x):
        """Reference coordinates of an ambient point in a piece, or None."""
        chart = self.chart(piece)
        m = chart.dim
        rhs = [a - b for a, b in zip(x, chart.embed.offset)]
        if m == 0:
            return () if all(r == 0 for r in rhs) else None
        J = linalg.from_rows(chart.embed.linear, m)
        X, C = linalg.solve_with_constraints(J, linalg.column(rhs))
        if C.shape[0] and not linalg.is_zero(C):
            return None
        return tuple(r[0] for r in linalg.to_rows(X))

    def piece_contains(self, piece, x):
        t = self._chart_coordinates(piece, x)
        if t is None:
            return False
        start = 0
        for m in piece_shape(piece):
            block = t[start : start + m]
            if any(v < 0 for v in block) or sum(block, ZERO) > 1:
                return False
            start += m
        return True

    # Subcomplexes

    def subcomplex(self, ids, name=None):
        ids = set(ids)
        for cid in ids:
            for f in self.faces(cid):
                if f not in ids:
                    raise NonComplex(
                        "Cells are not closed under faces: {} misses {}".format(cid, f)
                    )
        return Complex(
            self.factors,
            [c for c in self if c.id in ids],
            fine=self.fine,
            name=name,
        )

    def closure_complex(self, cid):
        return self.subcomplex(self.closure(cid), name=cid)

    def boundary_subcomplex(self, cid):
        """The cellular complex carried by the boundary of a cell."""
        if self.cell(cid).dim == 0:
            raise ZeroCell("A vertex has no boundary complex.")
        return self.subcomplex(
            [c for c in self.closure(cid) if c != cid], name="boundary " + cid
        )

    def skeleton(self, m):
        if m < 0 or m > self.dim:
            raise DimensionMismatch("Skeleton dimension {} out of range".format(m))
        return self.subcomplex([c.id for c in self if c.dim <= m])

    def domain_boundary(self):
        """
        Subcomplex on the boundary of the carrier: closure of the (d-1)-cells
        with a single coface.
        """
        d = self.dim
        ids = set()
        for cid in self.cells_of_dim(d - 1):
            cof = [c for c in self._cofaces[cid] if self._cells[c].dim == d]
            if len(cof) == 1:
                ids.update(self.closure(cid))
        return self.subcomplex(ids, name="boundary")

    def carrier_pieces(self, cid):
        """All faces of the support pieces of a cell."""
        out = set()
        for p in self.cell(cid).pieces:
            out.update(piece_subpieces(p))
        return out

    def carrier_complex(self, cid):
        """
        The complex of all pieces of the closed support of a cell, each
        piece a cell of its own (ids are piece ids).
        """
        pieces = sorted(self.carrier_pieces(cid), key=lambda p: (piece_dim(p), p))
        return piece_complex(self.factors, pieces)

    def interior_cell(self, piece):
        """The cell whose relative interior contains a piece of the substrate."""
        if piece in self.owner:
            return self.owner[piece][0]
        if self._interior is None:
            interior = {}
            for c in self:
                faces = set()
                for f in self.closure(c.id):
                    if f != c.id:
                        faces |= self.carrier_pieces(f)
                for p in self.carrier_pieces(c.id) - faces:
                    if p in interior:
                        raise NonComplex(
                            "Cells {} and {} overlap".format(interior[p], c.id)
                        )
                    interior[p] = c.id
            self._interior = interior
        if piece not in self._interior:
            raise UnknownCell("Piece {} is not in the complex".format(piece))
        return self._interior[piece]

    def containing_piece(self, cid, sub):
        """A support piece of cell ``cid`` having ``sub`` as a face."""
        for p in self.cell(cid).pieces:
            if is_subpiece(sub, p):
                return p
        raise NonComplex("Piece {} is not in the closure of {}".format(sub, cid))

    # Cochains

    def coboundary_matrix(self, k):
        """
        Incidence matrix of the coboundary C^k -> C^{k+1}, rows indexed by
        the (k+1)-cells and columns by the k-cells.
        """
        if k < 0 or k >= self.dim:
            raise DimensionMismatch(
                "Coboundary degree {} outside [0, {})".format(k, self.dim)
            )
        rows = {}
        for i, cid in enumerate(self._by_dim[k + 1]):
            rows[i] = {self._index[f]: QQ(o) for f, o in self._faces[cid].items()}
        return linalg.from_dod(rows, (len(self._by_dim[k + 1]), len(self._by_dim[k])))

    def cochain(self, k, values):
        unknown = set(values) - set(self.cells_of_dim(k))
        if unknown:
            raise UnknownCell("Not {}-cells: {}".format(k, sorted(unknown)))
        return Cochain(k, {c: to_rational(v) for c, v in values.items()})

    def coboundary(self, cochain):
        vec = linalg.matvec(self.coboundary_matrix(cochain.degree), cochain.vector(self))
        return Cochain(
            cochain.degree + 1,
            dict(zip(self.cells_of_dim(cochain.degree + 1), vec)),
        )

    def betti_numbers(self):
        ranks = [linalg.rank(self.coboundary_matrix(k)) for k in range(self.dim)]
        out = []
        for k in range(self.dim + 1):
            r_out = ranks[k] if k < self.dim else 0
            r_in = ranks[k - 1] if k > 0 else 0
            out.append(len(self._by_dim[k]) - r_out - r_in)
        return tuple(out)

    def euler_characteristic(self):
        return sum((-1) ** k * n for k, n in enumerate(self.counts()))

    # Validation

    def cell_homology_report(self):
        """
        Homological proxy of the ball condition: each closed cell has the
        Betti numbers of a point and its boundary those of a sphere.
        """
        report = []
        for c in self:
            if c.dim == 0:
                continue
            support = self.carrier_complex(c.id).betti_numbers()
            boundary = self.boundary_subcomplex(c.id).betti_numbers()
            ball = (1,) + (0,) * c.dim
            sphere = (2,) if c.dim == 1 else (1,) + (0,) * (c.dim - 2) + (1,)
            report.append(
                {
                    "id": c.id,
                    "dim": c.dim,
                    "support_betti": list(support),
                    "boundary_betti": list(boundary),
                    "ok": support == ball and boundary == sphere,
                }
            )
        return report

    def validate(self, proxy=True):
        """
        Checks that the intersection of two cells is a union of cells, that
        cell interiors are disjoint, that dd = 0, and optionally the
        homological ball proxy. Raises NonComplex on failure.
        """
        for k in range(self.dim - 1):
            prod = linalg.matmul(self.coboundary_matrix(k + 1), self.coboundary_matrix(k))
            if not linalg.is_zero(prod):
                raise NonComplex("Coboundary does not square to zero in degree {}".format(k))
        carriers = {c.id: self.carrier_pieces(c.id) for c in self}
        seen = {}
        for cid, pieces in carriers.items():
            for p in pieces:
                seen.setdefault(p, []).append(cid)
        for p in seen:
            # raises when the piece is in no interior
            self.interior_cell(p)
        for cid, pieces in carriers.items():
            neighbours = {c for p in pieces for c in seen[p] if c != cid}
            for other in neighbours:
                common = pieces & carriers[other]
                for p in common:
                    if not carriers[self.interior_cell(p)] <= common:
                        raise NonComplex(
                            "Intersection of {} and {} is not a union of cells".format(
                                cid, other
                            )
                        )
        if proxy:
            bad = [r["id"] for r in self.cell_homology_report() if not r["ok"]]
            if bad:
                raise NonComplex("Cells fail the ball/sphere proxy: {}".format(bad))
        return True


def piece_complex(factors, pieces, name=None):
    """Complex whose cells are single pieces, positively oriented."""
    cells = [Cell(piece_id(p), piece_dim(p), ((p, 1),)) for p in pieces]
    return Complex(factors, cells, name=name)


# Builders


def build_simplicial(vertices, top_simplices, name=None):
    """
    Simplicial complex from vertex coordinates and top simplices.

    Parameters
    ----------
    vertices : list of coordinate lists
               Rational coordinates (ints, ``"p/q"`` strings, ...).
    top_simplices : list of vertex id lists
                    Simplices are closed under faces; each simplex is
                    oriented by increasing vertex ids.
    """
    coords = tuple(tuple(to_rational(x) for x in v) for v in vertices)
    n = len(coords[0]) if coords else 0
    if any(len(v) != n for v in coords):
        raise NonComplex("Vertices have different numbers of coordinates.")
    tops = []
    for s in top_simplices:
        s = tuple(int(v) for v in s)
        if any(v < 0 or v >= len(coords) for v in s):
            raise NonComplex("Simplex {} uses an unknown vertex".format(s))
        if len(set(s)) != len(s):
            raise DegenerateSimplex("Simplex {} repeats a vertex".format(s))
        s = tuple(sorted(s))
        m = len(s) - 1
        if m > n:
            raise DegenerateSimplex("Simplex {} exceeds the ambient dimension".format(s))
        if m > 0:
            edges = [[a - b for a, b in zip(coords[v], coords[s[0]])] for v in s[1:]]
            if linalg.rank(linalg.from_rows(edges, n)) != m:
                raise DegenerateSimplex(
                    "Vertices of simplex {} are affinely dependent".format(s)
                )
        tops.append(s)
    if len(set(tops)) != len(tops):
        raise NonComplex("A top simplex is declared twice.")
    top_set = set(tops)
    faces = set()
    for s in tops:
        for r in range(1, len(s) + 1):
            for f in itertools.combinations(s, r):
                if f != s and f in top_set:
                    raise NonComplex(
                        "Declared simplex {} is a face of {}".format(f, s)
                    )
                faces.add(f)
    used = {v for s in faces for v in s}
    faces.update((v,) for v in range(len(coords)) if v not in used)
    ordered = sorted(faces, key=lambda f: (len(f), f))
    cells = [
        Cell("-".join(str(v) for v in f), len(f) - 1, (((f,), 1),), {"simplex": f})
        for f in ordered
    ]
    return Complex((coords,), cells, name=name)


def build_cells(fine, supports, name=None):
    """
    Complex of cells given by explicit supports in a simplicial complex.

    Parameters
    ----------
    fine : Complex
           The underlying simplicial complex.
    supports : list of (id, list of simplices) or (id, list, meta)
               Each support is a connected set of equidimensional fine
               simplices, given as vertex tuples; orientations are chosen
               coherently.
    """
    if not fine.is_simplicial:
        raise NotSimplicial("Supports must live in a simplicial complex.")
    cells = []
    for entry in supports:
        cid, simplices = entry[0], entry[1]
        meta = entry[2] if len(entry) > 2 else {}
        pieces = [(tuple(sorted(int(v) for v in s)),) for s in simplices]
        for p in pieces:
            if piece_id(p) not in fine:
                raise NonComplex("Cell {} uses an unknown simplex {}".format(cid, p))
        dims = {piece_dim(p) for p in pieces}
        if len(dims) != 1:
            raise NonComplex("Support of {} mixes dimensions".format(cid))
        signs = _orient_pieces(pieces)
        cells.append(Cell(str(cid), dims.pop(), tuple(zip(pieces, signs)), meta))
    return Complex(fine.factors, cells, fine=fine, name=name)


def _hyperplane_key(fine, simplex):
    """Canonical affine span of a simplex."""
    coords = fine.factors[0]
    v0 = coords[simplex[0]]
    n = len(v0)
    edges = [[a - b for a, b in zip(coords[v], v0)] for v in simplex[1:]]
    rows, pivots = linalg.rref(linalg.from_rows(edges, n))
    base = list(v0)
    for r, p in zip(rows, pivots):
        c = base[p]
        base = [b - c * x for b, x in zip(base, r)]
    return tuple(tuple(r) for r in rows), tuple(base)


def agglomerate(fine, groups, name=None):
    """
    Coarse complex whose top cells are unions of fine top simplices.

    Lower dimensional cells are the connected strata of fine simplices
    sharing the same set of containing coarse top cells and the same set
    of flat domain boundary pieces through them.

    Parameters
    ----------
    fine : Complex
           Simplicial complex.
    groups : list of (id, list of simplices)
             Partition of the fine top simplices.
    """
    if not fine.is_simplicial:
        raise NotSimplicial("Agglomeration needs a simplicial complex.")
    tops = set(fine.top_cells())
    owner = {}
    for gid, simplices in groups:
        for s in simplices:
            key = piece_id((tuple(sorted(int(v) for v in s)),))
            if key not in tops:
                raise NonComplex("{} is not a top simplex of the fine mesh".format(key))
            if key in owner:
                raise NonComplex("Simplex {} is in two groups".format(key))
            owner[key] = str(gid)
    if set(owner) != tops:
        raise NonComplex("Groups do not cover the fine top simplices.")
    d = fine.dim
    groups_of = {}
    for top, gid in owner.items():
        for f in fine.closure(top):
            groups_of.setdefault(f, set()).add(gid)
    planes_of = {}
    for cid in fine.cells_of_dim(d - 1):
        if len(fine.cofaces(cid)) == 1:
            key = _hyperplane_key(fine, fine.simplex(cid))
            for f in fine.closure(cid):
                planes_of.setdefault(f, set()).add(key)
    label = {
        c.id: (frozenset(groups_of.get(c.id, ())), frozenset(planes_of.get(c.id, ())))
        for c in fine
    }
    by_label = {}
    for c in fine:
        by_label.setdefault(label[c.id], []).append(c.id)
    supports = []
    counters = {}
    for lab, ids in by_label.items():
        remaining = set(ids)
        for k in range(d, -1, -1):
            level = [c for c in ids if c in remaining and fine.cell(c).dim == k]
            while level:
                comp = _facet_component(fine, level[0], set(level), label)
                for c in comp:
                    level.remove(c)
                    for f in fine.closure(c):
                        if label[f] == lab:
                            remaining.discard(f)
                if k == d:
                    cid = owner[comp[0]]
                elif k == 0:
                    cid = "v" + comp[0]
                else:
                    counters[k] = counters.get(k, 0) + 1
                    cid = "c{}_{}".format(k, counters[k] - 1)
                supports.append((cid, [fine.simplex(c) for c in comp], {"fine": comp}))
    supports.sort(key=lambda e: (fine.cell(e[2]["fine"][0]).dim, fine.index(e[2]["fine"][0])))
    # top cells keep the group ids; merge pieces of the same group
    merged = {}
    for cid, simplices, meta in supports:
        if cid in merged:
            raise NonComplex("Group {} is not connected".format(cid))
        merged[cid] = (cid, simplices, meta)
    return build_cells(fine, list(merged.values()), name=name)


def _facet_component(fine, start, pool, label):
    """Connected component of ``start`` in ``pool`` through same-label facets."""
    comp = [start]
    seen = {start}
    queue = deque([start])
    lab = label[start]
    while queue:
        c = queue.popleft()
        for f in fine.faces(c):
            if label[f] != lab:
                continue
            for other in fine.cofaces(f):
                if other in pool and other not in seen:
                    seen.add(other)
                    comp.append(other)
                    queue.append(other)
    return sorted(comp, key=fine.index)


def barycentric_refinement(complex_, name=None):
    """
    Barycentric refinement of a simplicial complex.

    Refined vertices are the barycenters of the cells, numbered in complex
    order (so original vertices keep their ids). Refined simplices are the
    chains of cells ordered by inclusion.

    Returns
    -------
    fine : Complex
    parent : dict
             Map from each refined cell id to the id of the smallest cell
             of ``complex_`` containing it.
    """
    if not complex_.is_simplicial:
        raise NotSimplicial("Barycentric refinement needs a simplicial complex.")
    order = complex_.cells
    number = {c.id: i for i, c in enumerate(order)}
    vertices = [complex_.barycenter(c.support[0][0]) for c in order]
    tops = []
    for cid in complex_.top_cells():
        s = complex_.simplex(cid)
        for perm in itertools.permutations(s):
            chain = [
                number["-".join(str(v) for v in sorted(perm[: j + 1]))]
                for j in range(len(perm))
            ]
            tops.append(chain)
    fine = build_simplicial(vertices, tops, name=name)
    parent = {}
    for c in fine:
        parent[c.id] = order[max(fine.simplex(c.id))].id
    return fine, parent


def dual_complex(complex_, name=None):
    """
    Dual cellular complex of a simplicial complex triangulating a manifold
    with boundary.

    The dual of a k-simplex s is the union of the barycentric refinement
    simplices of chains s = s_0 < s_1 < ... < s_{d-k} with increasing
    dimensions. Simplices on the domain boundary also receive the duals
    taken inside the boundary, so that the result is a cellular complex
    on the same carrier. Supports live in the barycentric refinement,
    available as ``dual.fine``.
    """
    if not complex_.is_simplicial:
        raise NotSimplicial("The dual complex is built from a simplicial complex.")
    d = complex_.dim
    for cid in complex_.cells_of_dim(d - 1):
        if len(complex_.cofaces(cid)) > 2:
            raise NotManifoldLike("Facet {} has more than two cofaces".format(cid))
    for c in complex_:
        if c.dim < d and not complex_.cofaces(c.id):
            raise NotManifoldLike("Complex is not pure: {}".format(c.id))
    fine, _ = barycentric_refinement(complex_)
    number = {c.id: i for i, c in enumerate(complex_.cells)}
    boundary = set(complex_.domain_boundary().cells_of_dim(d - 1)) if d > 0 else set()
    boundary_ids = set()
    for cid in boundary:
        boundary_ids.update(complex_.closure(cid))

    def chains(cid, top, allowed):
        if complex_.cell(cid).dim == top:
            return [[cid]]
        out = []
        for up in complex_.cofaces(cid):
            if up in allowed:
                out.extend([cid] + rest for rest in chains(up, top, allowed))
        return out

    everything = set(c.id for c in complex_)
    supports = []
    for c in complex_:
        simplices = [
            tuple(sorted(number[x] for x in ch)) for ch in chains(c.id, d, everything)
        ]
        supports.append(("*" + c.id, simplices, {"primal": c.id, "boundary": False}))
    for c in complex_:
        if c.id in boundary_ids and c.dim <= d - 1:
            simplices = [
                tuple(sorted(number[x] for x in ch))
                for ch in chains(c.id, d - 1, boundary_ids)
            ]
            supports.append(
                ("*b" + c.id, simplices, {"primal": c.id, "boundary": True})
            )
    supports.sort(key=lambda e: -complex_.cell(e[2]["primal"]).dim)
    return build_cells(fine, supports, name=name)


def refinement_cochain_map(fine, coarse, parent, k):
    """
    Cochain morphism from a refinement to the coarse complex.

    Entry (T, T') is +-1 when the fine k-cell T' lies in the coarse k-cell
    T with the same/opposite orientation, and 0 otherwise.

    Parameters
    ----------
    fine, coarse : Complex
    parent : dict
             Map fine cell id -> smallest coarse cell containing it.
    k : int

    Returns
    -------
    iota : DomainMatrix of shape (#coarse k-cells, #fine k-cells)
    """
    if fine.ambient_dim != coarse.ambient_dim:
        raise NotRefinement("Complexes live in different spaces.")
    for c in fine:
        if c.id not in parent:
            raise NotRefinement("Cell {} has no parent".format(c.id))
        p = parent[c.id]
        if p not in coarse:
            raise NotRefinement("Unknown parent cell {}".format(p))
        if coarse.cell(p).dim < c.dim:
            raise NotRefinement("Parent {} of {} is too small".format(p, c.id))
    rows = {}
    covered = set()
    for j, cid in enumerate(fine.cells_of_dim(k)):
        p = parent[cid]
        if coarse.cell(p).dim != k:
            continue
        rows.setdefault(coarse.index(p), {})[j] = QQ(_relative_sign(fine, cid, coarse, p))
        covered.add(p)
    if set(coarse.cells_of_dim(k)) - covered:
        raise NotRefinement("Some coarse {}-cells contain no fine cell".format(k))
    return linalg.from_dod(rows, (len(coarse.cells_of_dim(k)), len(fine.cells_of_dim(k))))


def _relative_sign(fine, fid, coarse, cid):
    """Relative orientation of a fine cell inside an equidimensional coarse cell."""
    fcell = fine.cell(fid)
    piece, s_fine = fcell.support[0]
    if fcell.dim == 0:
        return 1
    x = fine.barycenter(piece)
    for cpiece, s_coarse in coarse.cell(cid).support:
        if coarse.piece_contains(cpiece, x):
            J = linalg.from_rows(coarse.chart(cpiece).embed.linear, fcell.dim)
            Jf = linalg.from_rows(fine.chart(piece).embed.linear, fcell.dim)
            A = linalg.solve(J, Jf)
            det = linalg.det(A)
            if det == 0:
                raise NotRefinement("Cell {} is not inside {}".format(fid, cid))
            return s_fine * s_coarse * (1 if det > 0 else -1)
    raise NotRefinement("Cell {} is not inside {}".format(fid, cid))
