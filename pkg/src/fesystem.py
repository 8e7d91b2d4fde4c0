"""
Finite element systems over cellular complexes.

An element system attaches to each cell T and degree k a finite space
A^k(T) of polynomial k-forms, closed under the exterior derivative and under
pullback to subcells. Spaces are stored as lists of *families*: a family is
a tuple of forms aligned with the support pieces of the cell, each written in
the reference chart of its piece. Every verdict (extensions, local
exactness, cohomology) is an exact rank computation over the rationals.
"""
import itertools
from dataclasses import dataclass, field

from sympy import QQ

from . import linalg
from .complex import piece_dim, piece_embedding, piece_id, piece_shape
from .exceptions import (
    ConditionViolated,
    NotASubcell,
    NotCompatible,
    NotInSpace,
    OrderNotMonotone,
)
from .polyforms import (
    PolyForm,
    d,
    full_poly_basis,
    pullback,
    reference_integral,
    trimmed_basis,
)
from .utils import map_cells

ZERO = QQ(0)
ONE = QQ(1)


class LocalSpace:
    """
    A basis of A^k(T), independent of the cell it was built for.

    Parameters
    ----------
    k : int
        Form degree.
    shapes : tuple
             Reference shapes of the support pieces.
    families : list of tuples of PolyForm
               Linearly independent families; ``families[j][i]`` is the form
               of the j-th basis element on the i-th piece.
    """

    def __init__(self, k, shapes, families):
        self.k = k
        self.shapes = tuple(shapes)
        self.families = [tuple(f) for f in families]
        self.dim = len(self.families)
        keys = set()
        for fam in self.families:
            for i, u in enumerate(fam):
                keys.update((i,) + key for key in u.terms)
        self.index = {key: r for r, key in enumerate(sorted(keys))}
        self._map = None

    def vector(self, family):
        """Flat coefficient vector of a family, or None if a term is foreign."""
        v = [ZERO] * len(self.index)
        for i, u in enumerate(family):
            for key, c in u.terms.items():
                r = self.index.get((i,) + key)
                if r is None:
                    return None
                v[r] = c
        return v

    def matrix(self):
        return linalg.from_columns(
            [self.vector(f) for f in self.families], len(self.index)
        )

    def coordinates(self, family):
        """Exact coordinates of a family, or None when it is not in the space."""
        v = self.vector(family)
        if v is None:
            return None
        if self._map is None:
            self._map = linalg.CoordinateMap(self.matrix())
        return self._map.coordinates(v)

    def combine(self, coeffs):
        out = [PolyForm(sum(s), self.k) for s in self.shapes]
        for c, fam in zip(coeffs, self.families):
            if c != 0:
                out = [a + u * c for a, u in zip(out, fam)]
        return tuple(out)

    def constant(self):
        """The family equal to 1 on every piece (degree zero only)."""
        return tuple(PolyForm.constant(sum(s)) for s in self.shapes)


class GlobalSpace:
    """
    Basis of the inverse limit A^k over a subcomplex: families of per-cell
    coefficient vectors with matching traces on shared subcells.

    ``families[j]`` maps cell ids to coefficient vectors in the local bases;
    cells where the family vanishes are omitted.
    """

    def __init__(self, system, k, cells, families, homes):
        self.system = system
        self.k = k
        self.cells = list(cells)
        self.families = families
        self.homes = homes
        self.dim = len(families)
        self._on_cell = {c: [] for c in self.cells}
        for j, fam in enumerate(families):
            for c in fam:
                self._on_cell[c].append(j)
        self._maps = {}
        self._stacked = None

    def value(self, j, cid):
        n = self.system.space(cid, self.k).dim
        return list(self.families[j].get(cid, [ZERO] * n))

    def element(self, coeffs):
        """Per-cell coefficient vectors of a combination of basis families."""
        out = {}
        for c in self.cells:
            n = self.system.space(c, self.k).dim
            v = [ZERO] * n
            for j in self._on_cell[c]:
                if coeffs[j] != 0:
                    v = [a + coeffs[j] * b for a, b in zip(v, self.families[j][c])]
            out[c] = v
        return out

    def forms(self, coeffs):
        """Per-cell families of forms of a combination of basis families."""
        return {
            c: self.system.space(c, self.k).combine(v)
            for c, v in self.element(coeffs).items()
        }

    def coordinates(self, element):
        """
        Coordinates of a per-cell element in this basis; raises NotInSpace
        when the element is not compatible or not in the spaces.
        """
        x = self._coordinates(element)
        if x is None:
            raise NotInSpace("Element is not in the global space.")
        return x

    def _coordinates(self, element):
        if self.dim == 0:
            ok = all(all(v == 0 for v in element.get(c, ())) for c in self.cells)
            return [] if ok else None
        if any(h is None for h in self.homes):
            return self._stacked_coordinates(element)
        coeffs = [ZERO] * self.dim
        for c in self.cells:
            n = self.system.space(c, self.k).dim
            r = list(element.get(c, [ZERO] * n))
            own = []
            for j in self._on_cell[c]:
                if self.homes[j] == c:
                    own.append(j)
                elif coeffs[j] != 0:
                    r = [a - coeffs[j] * b for a, b in zip(r, self.families[j][c])]
            if not own:
                if any(a != 0 for a in r):
                    return None
                continue
            if c not in self._maps:
                self._maps[c] = linalg.CoordinateMap(
                    linalg.from_columns([self.families[j][c] for j in own], n)
                )
            x = self._maps[c].coordinates(r)
            if x is None:
                return None
            for j, a in zip(own, x):
                coeffs[j] = a
        return coeffs

    def _offsets(self):
        offsets, total = {}, 0
        for c in self.cells:
            offsets[c] = total
            total += self.system.space(c, self.k).dim
        return offsets, total

    def matrix(self):
        """All families stacked cell by cell, one column per family."""
        offsets, total = self._offsets()
        dod = {}
        for j, fam in enumerate(self.families):
            for c, v in fam.items():
                for i, a in enumerate(v):
                    if a != 0:
                        dod.setdefault(offsets[c] + i, {})[j] = a
        return linalg.from_dod(dod, (total, self.dim))

    def _stacked_coordinates(self, element):
        if self._stacked is None:
            self._stacked = linalg.CoordinateMap(self.matrix())
        offsets, total = self._offsets()
        v = [ZERO] * total
        for c, vec in element.items():
            if c in offsets:
                v[offsets[c] : offsets[c] + len(vec)] = vec
        return self._stacked.coordinates(v)


@dataclass
class CompatibilityReport:
    """Extension and exactness verdicts with the dimension tables."""

    extensions: dict
    exactness: dict
    dimensions: dict
    global_dimensions: list
    kernel_sums: list
    dimension_equality: list
    lower_bounds: dict
    equivalence: dict
    failures: list = field(default_factory=list)

    @property
    def admits_extensions(self):
        return all(all(v.values()) for v in self.extensions.values())

    @property
    def locally_exact(self):
        return all(v["closed"] for v in self.exactness.values())

    @property
    def compatible(self):
        return self.admits_extensions and self.locally_exact

    def failing_cells(self):
        bad = [c for c, v in self.extensions.items() if not all(v.values())]
        bad += [c for c, v in self.exactness.items() if not v["closed"] and c not in bad]
        return bad

    def to_dict(self):
        return {
            "compatible": self.compatible,
            "admits_extensions": self.admits_extensions,
            "locally_exact": self.locally_exact,
            "extensions": {
                c: {str(k): b for k, b in v.items()} for c, v in self.extensions.items()
            },
            "exactness": self.exactness,
            "dimensions": self.dimensions,
            "global_dimensions": self.global_dimensions,
            "kernel_sums": self.kernel_sums,
            "dimension_equality": self.dimension_equality,
            "lower_bounds": self.lower_bounds,
            "exactness_equivalence": self.equivalence,
            "failing_cells": self.failing_cells(),
            "failures": self.failures,
        }


class ElementSystem:
    """
    Base class of element systems.

    Subclasses provide ``_raw_families(cid, k)``, the families spanning a
    space that contains A^k(T), and may ask for the trace constraints of
    variable orders through ``_needs_constraints``.

    Parameters
    ----------
    complex_ : Complex
    threads : int
              Workers of the per-cell checks.
    verbose : boolean
              Wether to show progress bars.
    """

    kind = "system"

    def __init__(self, complex_, threads=1, verbose=False):
        self.complex = complex_
        self.threads = threads
        self.verbose = verbose
        self._spaces = {}
        self._restrictions = {}
        self._dmats = {}
        self._integrals = {}
        self._globals = {}
        self._kernels = {}
        self._checks = {}
        self._signatures = {}

    # Subclass hooks

    def _raw_families(self, cid, k):
        raise NotImplementedError

    def _needs_constraints(self, cid, k):
        return False

    def _order_value(self, cid, k):
        """Order data deciding A^k(cid); used to share identical simplices."""
        return None

    # Sharing of reference spaces

    def _local_subsimplices(self, cid):
        s = self.complex.simplex(cid)
        out = []
        for r in range(1, len(s) + 1):
            for pos in itertools.combinations(range(len(s)), r):
                out.append((pos, "-".join(str(s[i]) for i in pos)))
        return out

    def signature(self, cid):
        """
        Key shared by all simplices carrying the same reference spaces, or
        None when the cell has its own spaces.
        """
        if cid not in self._signatures:
            cx = self.complex
            cell = cx.cell(cid)
            sig = None
            if cx.fine is None and cx.is_simplicial and cell.support[0][1] == 1:
                profile = tuple(
                    self._order_value(sub, k)
                    for _, sub in self._local_subsimplices(cid)
                    for k in range(cell.dim + 1)
                )
                sig = (type(self).__name__, cell.dim, profile)
            self._signatures[cid] = sig
        return self._signatures[cid]

    def _key(self, cid, k):
        sig = self.signature(cid)
        return (sig, k) if sig is not None else (cid, k)

    # Spaces

    def space(self, cid, k):
        """The LocalSpace A^k(T)."""
        key = self._key(cid, k)
        if key not in self._spaces:
            self._spaces[key] = self._build_space(cid, k)
        return self._spaces[key]

    def _build_space(self, cid, k):
        cell = self.complex.cell(cid)
        shapes = [piece_shape(p) for p in cell.pieces]
        if k < 0 or k > cell.dim:
            return LocalSpace(k, shapes, [])
        families = self._raw_families(cid, k)
        if families and self._needs_constraints(cid, k):
            families = self._constrain(cid, k, families)
        return LocalSpace(k, shapes, families)

    def dims(self, cid):
        return [self.space(cid, k).dim for k in range(self.complex.cell(cid).dim + 1)]

    def restrict(self, cid, sub, family):
        """Trace of a family of cell ``cid`` on its subcell ``sub``."""
        cx = self.complex
        cell = cx.cell(cid)
        position = {p: i for i, p in enumerate(cell.pieces)}
        out = []
        for p in cx.cell(sub).pieces:
            host = cx.containing_piece(cid, p)
            u = family[position[host]]
            if host == p:
                out.append(u)
            else:
                out.append(pullback(piece_embedding(p, host), u))
        return tuple(out)

    def _constrain(self, cid, k, raw):
        """
        Keep the combinations of ``raw`` whose traces on every facet lie in
        the facet space (variable orders).
        """
        cx = self.complex
        faces = [f for f in cx.faces(cid) if cx.cell(f).dim >= k]
        blocks = []
        for f in faces:
            target = self.space(f, k)
            traces = [self.restrict(cid, f, fam) for fam in raw]
            keys = set(target.index)
            for fam in traces:
                for i, u in enumerate(fam):
                    keys.update((i,) + key for key in u.terms)
            index = {key: r for r, key in enumerate(sorted(keys))}

            def vec(fam):
                v = [ZERO] * len(index)
                for i, u in enumerate(fam):
                    for key, c in u.terms.items():
                        v[index[(i,) + key]] = c
                return v

            blocks.append(([vec(t) for t in traces], [vec(t) for t in target.families], len(index)))
        if not blocks:
            return raw
        ncols = len(raw) + sum(len(b[1]) for b in blocks)
        dod = {}
        row0 = 0
        col0 = len(raw)
        for traces, targets, nrows in blocks:
            for j, v in enumerate(traces):
                for i, a in enumerate(v):
                    if a != 0:
                        dod.setdefault(row0 + i, {})[j] = a
            for j, v in enumerate(targets):
                for i, a in enumerate(v):
                    if a != 0:
                        dod.setdefault(row0 + i, {})[col0 + j] = -a
            row0 += nrows
            col0 += len(targets)
        N = linalg.nullspace(linalg.from_dod(dod, (row0, ncols)))
        C = linalg.select_rows(N, range(len(raw)))
        keep = linalg.independent_columns(C)
        cols = linalg.columns(C)
        local = LocalSpace(k, [piece_shape(p) for p in cx.cell(cid).pieces], raw)
        return [local.combine(cols[j]) for j in keep]

    def restriction_matrix(self, cid, sub, k):
        """
        Matrix of the trace A^k(T) -> A^k(T') in the two bases.

        Raises NotASubcell when T' is not a subcell of T, and NotInSpace
        when a trace leaves A^k(T').
        """
        cx = self.complex
        if not cx.is_subcell(sub, cid):
            raise NotASubcell("{} is not a subcell of {}".format(sub, cid))
        A = self.space(cid, k)
        B = self.space(sub, k)
        if sub == cid:
            return linalg.eye(A.dim)
        sig, sig_sub = self.signature(cid), self.signature(sub)
        if sig is not None and sig_sub is not None:
            s, t = cx.simplex(cid), cx.simplex(sub)
            key = (sig, sig_sub, tuple(s.index(v) for v in t), k)
        else:
            key = (cid, sub, k)
        if key not in self._restrictions:
            cols = []
            for fam in A.families:
                x = B.coordinates(self.restrict(cid, sub, fam))
                if x is None:
                    raise NotInSpace(
                        "Trace of A^{}({}) on {} leaves A^{}({})".format(k, cid, sub, k, sub)
                    )
                cols.append(x)
            self._restrictions[key] = linalg.from_columns(cols, B.dim)
        return self._restrictions[key]

    def d_matrix(self, cid, k):
        """Matrix of d : A^k(T) -> A^{k+1}(T)."""
        key = (self._key(cid, k), self._key(cid, k + 1))
        if key not in self._dmats:
            A = self.space(cid, k)
            B = self.space(cid, k + 1)
            cols = []
            for fam in A.families:
                dfam = tuple(d(u) if u.degree < u.dim else None for u in fam)
                if any(u is None for u in dfam):
                    cols.append([])
                    continue
                x = B.coordinates(dfam)
                if x is None:
                    raise NotInSpace(
                        "d maps A^{}({}) outside A^{}({})".format(k, cid, k + 1, cid)
                    )
                cols.append(x)
            self._dmats[key] = (
                linalg.from_columns(cols, B.dim) if B.dim else linalg.zeros(0, A.dim)
            )
        return self._dmats[key]

    def integral_vector(self, cid):
        """Integrals over T of the top degree basis families of A^m(T)."""
        cell = self.complex.cell(cid)
        key = self._key(cid, cell.dim)
        if key not in self._integrals:
            A = self.space(cid, cell.dim)
            signs = [s for _, s in cell.support]
            self._integrals[key] = [
                sum(
                    (s * reference_integral(u, shape) for s, u, shape in zip(signs, fam, A.shapes)),
                    ZERO,
                )
                for fam in A.families
            ]
        return self._integrals[key]

    def cell_integral(self, cid, family):
        cell = self.complex.cell(cid)
        return sum(
            (
                s * reference_integral(u, piece_shape(p))
                for (p, s), u in zip(cell.support, family)
            ),
            ZERO,
        )

    # Kernels and global spaces

    def boundary_matrix(self, cid, k):
        """Stacked traces of A^k(T) on the faces of T of dimension >= k."""
        cx = self.complex
        A = self.space(cid, k)
        faces = [f for f in cx.faces(cid) if cx.cell(f).dim >= k]
        blocks = [self.restriction_matrix(cid, f, k) for f in faces]
        return linalg.vstack(*blocks, ncols=A.dim) if blocks else linalg.zeros(0, A.dim)

    def kernel_space(self, cid, k):
        """Basis of A_0^k(T), as columns of coordinates in A^k(T)."""
        key = self._key(cid, k)
        if key not in self._kernels:
            A = self.space(cid, k)
            R = self.boundary_matrix(cid, k)
            self._kernels[key] = linalg.nullspace(R) if R.shape[0] else linalg.eye(A.dim)
        return self._kernels[key]

    def _ids(self, subcomplex):
        if subcomplex is None:
            return [c.id for c in self.complex]
        if hasattr(subcomplex, "cells"):
            return [c.id for c in subcomplex.cells]
        return list(subcomplex)

    def global_space(self, subcomplex=None, k=0):
        """
        Basis of the inverse limit A^k over a subcomplex (whole complex by
        default), built by sweeping cells by increasing dimension.

        Each cell first extends the families already defined on its
        boundary (families that cannot be extended are recombined away),
        then contributes a basis of A_0^k(T).
        """
        ids = self._ids(subcomplex)
        key = (frozenset(ids), k)
        if key not in self._globals:
            self._globals[key] = self._sweep(ids, k)
        return self._globals[key]

    def _sweep(self, ids, k):
        cx = self.complex
        idset = set(ids)
        for c in idset:
            for f in cx.faces(c):
                if f not in idset:
                    raise NotASubcell("Cells are not closed under faces: {} misses {}".format(c, f))
        order = [c.id for c in cx if c.id in idset and c.dim >= k]
        families = []
        homes = []
        for cid in order:
            A = self.space(cid, k)
            if A.dim == 0:
                continue
            faces = [f for f in cx.faces(cid) if cx.cell(f).dim >= k]
            if not faces:
                kernel = linalg.eye(A.dim)
            else:
                R = self.boundary_matrix(cid, k)
                touching = [j for j, fam in enumerate(families) if any(f in fam for f in faces)]
                if touching:
                    rows = []
                    for f in faces:
                        n = self.space(f, k).dim
                        block = [families[j].get(f, [ZERO] * n) for j in touching]
                        rows.extend([[col[i] for col in block] for i in range(n)])
                    G = linalg.from_rows(rows, len(touching))
                    X, C = linalg.solve_with_constraints(R, G)
                    if C.shape[0] and not linalg.is_zero(C):
                        N = linalg.nullspace(C)
                        mixed = []
                        for col in linalg.columns(N):
                            fam = {}
                            for a, j in zip(col, touching):
                                if a == 0:
                                    continue
                                for c, v in families[j].items():
                                    w = fam.get(c, [ZERO] * len(v))
                                    fam[c] = [x + a * y for x, y in zip(w, v)]
                            mixed.append({c: v for c, v in fam.items() if any(x != 0 for x in v)})
                        X = linalg.matmul(X, N)
                        keep = [j for j in range(len(families)) if j not in set(touching)]
                        families = [families[j] for j in keep] + mixed
                        homes = [homes[j] for j in keep] + [None] * len(mixed)
                        touching = list(range(len(keep), len(families)))
                    for j, col in zip(touching, linalg.columns(X)):
                        if any(x != 0 for x in col):
                            families[j][cid] = col
                kernel = linalg.nullspace(R)
            for col in linalg.columns(kernel):
                families.append({cid: col})
                homes.append(cid)
        cells = [c.id for c in cx if c.id in idset and c.dim >= k]
        return GlobalSpace(self, k, cells, families, homes)

    def global_d_matrix(self, k):
        """Matrix of d : A^k(T) -> A^{k+1}(T) over the whole complex."""
        src = self.global_space(None, k)
        dst = self.global_space(None, k + 1)
        cols = []
        for j in range(src.dim):
            element = {}
            for cid, v in src.families[j].items():
                if self.complex.cell(cid).dim >= k + 1:
                    element[cid] = linalg.matvec(self.d_matrix(cid, k), v)
            cols.append(dst.coordinates(element))
        return linalg.from_columns(cols, dst.dim) if dst.dim else linalg.zeros(0, src.dim)

    def de_rham_matrix(self, k):
        """Matrix of the De Rham map A^k(T) -> C^k(T): integrals over k-cells."""
        space = self.global_space(None, k)
        cells = self.complex.cells_of_dim(k)
        rows = []
        for cid in cells:
            w = self.integral_vector(cid)
            row = []
            for j in range(space.dim):
                v = space.families[j].get(cid)
                row.append(sum((a * b for a, b in zip(w, v)), ZERO) if v else ZERO)
            rows.append(row)
        return linalg.from_rows(rows, space.dim)

    def constant_family(self, cid):
        return self.space(cid, 0).constant()

    # Verdicts

    def _cached_check(self, name, cid, func):
        sig = self.signature(cid)
        key = (name, sig if sig is not None else cid)
        if key not in self._checks:
            self._checks[key] = func(cid)
        return self._checks[key]

    def extension_verdicts(self, cid):
        """
        Per degree, wether the trace A^k(T) -> A^k(dT) is onto: the rank of
        the stacked traces equals the dimension of the inverse limit on the
        boundary.
        """
        return self._cached_check("extensions", cid, self._extension_verdicts)

    def _extension_verdicts(self, cid):
        cx = self.complex
        m = cx.cell(cid).dim
        if m == 0:
            return {0: True}
        boundary = [c for c in cx.closure(cid) if c != cid]
        out = {}
        for k in range(m + 1):
            A = self.space(cid, k)
            subs = [c for c in boundary if cx.cell(c).dim >= k]
            blocks = [self.restriction_matrix(cid, c, k) for c in subs]
            R = linalg.vstack(*blocks, ncols=A.dim)
            out[k] = linalg.rank(R) == self.global_space(boundary, k).dim
        return out

    def exactness_verdicts(self, cid):
        return self._cached_check("exactness", cid, self._exactness_verdicts)

    def _exactness_verdicts(self, cid):
        """
        Exactness of 0 -> R -> A^0(T) -> ... -> A^m(T) -> 0 ("closed") and of
        0 -> A_0^0(T) -> ... -> A_0^m(T) -> R -> 0, the last arrow being
        integration ("boundary").
        """
        m = self.complex.cell(cid).dim
        dims = self.dims(cid)
        D = [self.d_matrix(cid, k) for k in range(m)]
        ranks = [linalg.rank(M) for M in D]
        constants = self.space(cid, 0).coordinates(self.constant_family(cid)) is not None
        closed = constants
        for k in range(m + 1):
            ker = dims[k] - (ranks[k] if k < m else 0)
            img = ranks[k - 1] if k > 0 else 1
            closed = closed and ker == img
        K = [self.kernel_space(cid, k) for k in range(m + 1)]
        kdims = [M.shape[1] for M in K]
        kranks = [linalg.rank(linalg.matmul(D[k], K[k])) for k in range(m)]
        integral = linalg.row(self.integral_vector(cid)) if dims[m] else linalg.zeros(1, 0)
        r_int = linalg.rank(integral) if dims[m] else 0
        boundary = r_int == 1
        for k in range(m + 1):
            out_rank = kranks[k] if k < m else r_int
            in_rank = kranks[k - 1] if k > 0 else 0
            boundary = boundary and kdims[k] - out_rank == in_rank
        return {"closed": bool(closed), "boundary": bool(boundary)}

    def check_extensions(self):
        ids = [c.id for c in self.complex]
        results = map_cells(
            self.extension_verdicts, ids, self.threads, "extensions", self.verbose
        )
        return dict(zip(ids, results))

    def check_local_exactness(self):
        ids = [c.id for c in self.complex]
        results = map_cells(
            self.exactness_verdicts, ids, self.threads, "exactness", self.verbose
        )
        return dict(zip(ids, results))

    def compatibility(self):
        """Both verdicts of every cell, with the dimension identities."""
        cx = self.complex
        extensions = self.check_extensions()
        exactness = self.check_local_exactness()
        dimensions = {}
        lower_bounds = {}
        for c in cx:
            kernels = [self.kernel_space(c.id, k).shape[1] for k in range(c.dim + 1)]
            dims = self.dims(c.id)
            dimensions[c.id] = {"A": dims, "A0": kernels}
            closure = [cx.cell(s).dim for s in cx.closure(c.id)]
            lower_bounds[c.id] = [dims[k] >= closure.count(k) for k in range(c.dim + 1)]
        global_dims, sums, equality, failures = [], [], [], []
        for k in range(cx.dim + 1):
            g = self.global_space(None, k).dim
            s = sum(dimensions[c.id]["A0"][k] for c in cx if c.dim >= k)
            global_dims.append(g)
            sums.append(s)
            ext_k = all(v.get(k, True) for v in extensions.values())
            equality.append(g == s)
            if g > s or (ext_k and g != s):
                failures.append(
                    "dimension identity fails in degree {}: {} vs {}".format(k, g, s)
                )
        equivalence = {}
        for cid, ext in extensions.items():
            if all(ext.values()):
                same = exactness[cid]["closed"] == exactness[cid]["boundary"]
                equivalence[cid] = same
                if not same:
                    failures.append("exactness variants disagree on {}".format(cid))
        report = CompatibilityReport(
            extensions=extensions,
            exactness=exactness,
            dimensions=dimensions,
            global_dimensions=global_dims,
            kernel_sums=sums,
            dimension_equality=equality,
            lower_bounds=lower_bounds,
            equivalence=equivalence,
            failures=failures,
        )
        if self.verbose:
            print(
                "Compatible: {} (extensions {}, exact {})".format(
                    report.compatible, report.admits_extensions, report.locally_exact
                )
            )
        return report

    def verify_closure(self):
        """
        Checks closure under d and under traces to faces for every basis
        family; raises NotInSpace on the first failure.
        """
        cx = self.complex

        def check(cid):
            m = cx.cell(cid).dim
            for k in range(m + 1):
                if k < m:
                    self.d_matrix(cid, k)
                for f in cx.faces(cid):
                    if cx.cell(f).dim >= k:
                        self.restriction_matrix(cid, f, k)
            return True

        map_cells(check, [c.id for c in cx], self.threads, "closure", self.verbose)
        return True

    def discrete_betti_numbers(self):
        cx = self.complex
        dims = [self.global_space(None, k).dim for k in range(cx.dim + 1)]
        ranks = [linalg.rank(self.global_d_matrix(k)) for k in range(cx.dim)]
        return tuple(
            dims[k] - (ranks[k] if k < cx.dim else 0) - (ranks[k - 1] if k > 0 else 0)
            for k in range(cx.dim + 1)
        )

    def discrete_cohomology_check(self, report=None):
        """
        Compares the cohomology of (A(T), d) with the cochain cohomology and
        checks that the De Rham map induces isomorphisms.
        """
        report = report or self.compatibility()
        if not report.compatible:
            raise NotCompatible(
                "Cohomology check needs a compatible system; failing cells {}".format(
                    report.failing_cells()
                )
            )
        cx = self.complex
        discrete = self.discrete_betti_numbers()
        cochain = cx.betti_numbers()
        injective, surjective = [], []
        commutes = True
        for k in range(cx.dim + 1):
            rho = self.de_rham_matrix(k)
            if k < cx.dim:
                lhs = linalg.matmul(self.de_rham_matrix(k + 1), self.global_d_matrix(k))
                rhs = linalg.matmul(cx.coboundary_matrix(k), rho)
                commutes = commutes and linalg.is_zero(linalg.sub(lhs, rhs))
                Z = linalg.nullspace(self.global_d_matrix(k))
                zc = len(cx.cells_of_dim(k)) - linalg.rank(cx.coboundary_matrix(k))
            else:
                Z = linalg.eye(self.global_space(None, k).dim)
                zc = len(cx.cells_of_dim(k))
            image = linalg.matmul(rho, Z)
            if k > 0:
                delta = cx.coboundary_matrix(k - 1)
                both = linalg.rank(linalg.hstack(image, delta))
                r_delta = linalg.rank(delta)
            else:
                both = linalg.rank(image)
                r_delta = 0
            injective.append(both - r_delta == discrete[k])
            surjective.append(both == zc)
        verdict = discrete == cochain and all(injective) and all(surjective) and commutes
        return {
            "discrete_betti": list(discrete),
            "cochain_betti": list(cochain),
            "equal": discrete == cochain,
            "injective": injective,
            "surjective": surjective,
            "commutes": commutes,
            "verdict": verdict,
        }

    def de_rham_global(self, coeffs, k):
        """Cochain of integrals over the k-cells of a global element."""
        rho = self.de_rham_matrix(k)
        values = linalg.matvec(rho, coeffs)
        return self.complex.cochain(k, dict(zip(self.complex.cells_of_dim(k), values)))

    def element_forms(self, cid, k, coeffs):
        """Per-piece forms of a local element, keyed by piece id."""
        fam = self.space(cid, k).combine(coeffs)
        return {piece_id(p): u for p, u in zip(self.complex.cell(cid).pieces, fam)}


def _order_function(order):
    """
    Normalizes an order specification into a function of the cell id.

    ``order`` is an int, a callable, or a mapping with optional ``default``
    and ``per_cell`` entries (or a plain cell id -> int mapping).
    """
    if callable(order):
        return order
    if isinstance(order, int):
        return lambda cid: order
    if "per_cell" in order or "default" in order:
        per_cell = dict(order.get("per_cell", {}))
        default = order.get("default")
    else:
        per_cell, default = dict(order), None

    def func(cid):
        if cid in per_cell:
            return int(per_cell[cid])
        if default is None:
            raise OrderNotMonotone("No order given for cell {}".format(cid))
        return int(default)

    return func


class TrimmedSystem(ElementSystem):
    """
    Trimmed polynomial system of variable order.

    A[pi]^k(T) is the set of forms of the trimmed space of order pi(T)
    whose traces on every subcell T' lie in A[pi]^k(T'). With a constant
    order this is the trimmed system, and order 1 gives Whitney forms.

    Cells made of several simplices of ``complex_.fine`` carry the global
    trimmed space of the fine simplices of their closure.
    """

    kind = "trimmed"

    def __init__(self, complex_, order=1, threads=1, verbose=False):
        super().__init__(complex_, threads, verbose)
        self.order = _order_function(order)
        self._orders = {}
        for c in complex_:
            p = int(self.order(c.id))
            if p < 1:
                raise OrderNotMonotone("Order of {} is {} < 1".format(c.id, p))
            self._orders[c.id] = p
        for c in complex_:
            for f in complex_.faces(c.id):
                if self._orders[f] > self._orders[c.id]:
                    raise OrderNotMonotone(
                        "Order of face {} exceeds order of {}".format(f, c.id)
                    )
        self._fine_systems = {}

    def order_of(self, cid):
        return self._orders[cid]

    def _order_value(self, cid, k):
        return self._orders[cid]

    def _fine_system(self, p):
        if p not in self._fine_systems:
            self._fine_systems[p] = TrimmedSystem(self.complex.fine, p)
        return self._fine_systems[p]

    def _raw_families(self, cid, k):
        cell = self.complex.cell(cid)
        p = self._orders[cid]
        if len(cell.support) == 1:
            return [(u,) for u in trimmed_basis(p, k, cell.dim)]
        return _fine_families(self.complex, self._fine_system(p), cid, k)

    def _needs_constraints(self, cid, k):
        p = self._orders[cid]
        return any(self._orders[c] < p for c in self.complex.closure(cid))


class PolynomialSystem(ElementSystem):
    """
    Full polynomial system: A^k(T) = PA_{pi(T,k)}^k(T).

    ``order`` gives pi(T, k) either directly as a callable of (cell id, k)
    or as a per-cell order p with pi(T, k) = p - drop k. A negative value
    stands for the zero space.
    """

    kind = "polynomial"

    def __init__(self, complex_, order=1, drop=1, threads=1, verbose=False):
        super().__init__(complex_, threads, verbose)
        if callable(order):
            try:
                order(next(iter(complex_)).id, 0)
                self.order = order
            except TypeError:
                base = order
                self.order = lambda cid, k: int(base(cid)) - drop * k
        else:
            base = _order_function(order)
            self.order = lambda cid, k: int(base(cid)) - drop * k
        self.drop = drop
        self._orders = {
            (c.id, k): int(self.order(c.id, k)) for c in complex_ for k in range(c.dim + 1)
        }
        for c in complex_:
            for k in range(c.dim + 1):
                p = self._orders[(c.id, k)]
                for f in complex_.faces(c.id):
                    if k <= complex_.cell(f).dim and self._orders[(f, k)] < p:
                        raise ConditionViolated(
                            "pi({}, {}) < pi({}, {})".format(f, k, c.id, k)
                        )
                if k < c.dim and self._orders[(c.id, k + 1)] < p - 1:
                    raise ConditionViolated(
                        "pi({}, {}) < pi({}, {}) - 1".format(c.id, k + 1, c.id, k)
                    )
        self._fine_systems = {}

    def order_of(self, cid, k):
        return self._orders[(cid, k)]

    def _order_value(self, cid, k):
        return self._orders.get((cid, k))

    def _fine_system(self, cid):
        m = self.complex.cell(cid).dim
        profile = tuple(self._orders[(cid, k)] for k in range(m + 1))
        if profile not in self._fine_systems:
            self._fine_systems[profile] = PolynomialSystem(
                self.complex.fine,
                lambda c, k: profile[k] if k < len(profile) else -1,
            )
        return self._fine_systems[profile]

    def _raw_families(self, cid, k):
        cell = self.complex.cell(cid)
        if len(cell.support) == 1:
            return [(u,) for u in full_poly_basis(self._orders[(cid, k)], k, cell.dim)]
        return _fine_families(self.complex, self._fine_system(cid), cid, k)


def _fine_families(complex_, fine_system, cid, k):
    """
    Families of a cell made of several fine simplices: the global space of
    the fine system over the closure of its support.
    """
    cell = complex_.cell(cid)
    ids = [piece_id(p) for p in sorted(complex_.carrier_pieces(cid), key=lambda p: (piece_dim(p), p))]
    space = fine_system.global_space(ids, k)
    out = []
    for j in range(space.dim):
        fam = []
        for p in cell.pieces:
            pid = piece_id(p)
            fam.append(fine_system.space(pid, k).combine(space.value(j, pid))[0])
        out.append(tuple(fam))
    return out


# Module level operations


def trimmed_system(complex_, order=1, threads=1, verbose=False):
    return TrimmedSystem(complex_, order, threads, verbose)


def polynomial_system(complex_, order=1, drop=1, threads=1, verbose=False):
    return PolynomialSystem(complex_, order, drop, threads, verbose)


def restriction_matrix(system, cid, sub, k):
    return system.restriction_matrix(cid, sub, k)


def global_space(system, subcomplex=None, k=0):
    return system.global_space(subcomplex, k)


def kernel_space(system, cid, k):
    return system.kernel_space(cid, k)


def check_extensions(system):
    return system.check_extensions()


def check_local_exactness(system):
    return system.check_local_exactness()


def compatibility(system):
    return system.compatibility()


def de_rham_global(system, coeffs, k):
    return system.de_rham_global(coeffs, k)


def discrete_cohomology_check(system):
    return system.discrete_cohomology_check()


def subspace_equal(A, B):
    """Exact equality of the column spans of two coordinate matrices."""
    return linalg.same_column_span(A, B)
