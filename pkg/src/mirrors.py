"""
Degrees of freedom as mirror systems.

A k-mirror on a cell T is a finite set of linear functionals on k-forms on
T. Functionals are evaluated exactly, in one of three representations:

- ``weight``: u -> int_T v ^ u for a polynomial weight v of degree dim T - k,
- ``product``: u -> a(u, v), or a(du, v), for a partner family v,
- ``covector``: a row against the basis of A^k(T) of a declared host system.

A mirror system is faithful to an element system when the pairing of each
cell's mirror with the kernel A_0^k(T) is square and invertible. It then
defines an interpolator by sweeping cells by increasing dimension.
"""
from dataclasses import dataclass

import numpy as np
import torch
from sympy import QQ

from . import linalg
from .complex import piece_shape
from .exceptions import (
    ExtensionsUnverified,
    HostSpaceTooSmall,
    InconsistentInput,
    NotCompatible,
    NotExtendable,
    NotFaithful,
    NotFaithfulInputs,
    NotSimplicial,
    PreconditionFailed,
)
from .fesystem import TrimmedSystem
from .harmonic import harmonic_extension, harmonic_top_form
from .polyforms import (
    PolyForm,
    d,
    full_poly_basis,
    mass_matrix,
    piece_mass_matrix,
    pullback,
    reference_integral,
    wedge,
)
from .samplers import RationalSampler
from .utils import map_cells, rational_str

ZERO = QQ(0)


@dataclass(eq=False)
class MirrorFunctional:
    """
    A linear functional on k-forms on a cell.

    Exactly one of ``weight``, ``partner`` and ``covector`` is set. Weights
    and partners are families of forms aligned with the cell pieces.
    """

    cid: str
    k: int
    weight: tuple = None
    partner: tuple = None
    derivative: bool = False
    products: object = None
    covector: tuple = None
    host: object = None

    @property
    def kind(self):
        if self.weight is not None:
            return "weight"
        if self.partner is not None:
            return "product"
        return "covector"

    def __call__(self, complex_, family):
        """Exact value on a family of k-forms on the cell."""
        cell = complex_.cell(self.cid)
        if self.kind == "weight":
            total = ZERO
            for (p, s), v, u in zip(cell.support, self.weight, family):
                total += s * reference_integral(wedge(v, u), piece_shape(p))
            return total
        if self.kind == "product":
            if self.derivative:
                family = tuple(d(u) for u in family)
            total = ZERO
            for (p, _), v, u in zip(cell.support, self.partner, family):
                total += _pair(complex_, p, u, v, self.products, self.cid)
            return total
        x = self.host.space(self.cid, self.k).coordinates(tuple(family))
        if x is None:
            raise HostSpaceTooSmall(
                "Form is outside the host space of a mirror on {}".format(self.cid)
            )
        return sum((a * b for a, b in zip(self.covector, x)), ZERO)


def _pair(complex_, piece, u, v, products, cid):
    chart = complex_.chart(piece)
    metric = products._metric(piece) if products is not None else None
    if products is None or not products.weighted:
        return linalg.to_rows(piece_mass_matrix([u, v], chart, metric))[0][1]
    beta = products.beta(cid)
    sign = products.sign
    M = mass_matrix(
        [u, v],
        chart,
        weight=lambda x: torch.exp(-sign * beta(x)),
        ambient_metric=metric,
        degree=products.degree,
    )
    return linalg.to_rows(linalg.from_numpy(np.array([[M[0, 1]]])))[0][0]


class MirrorSystem:
    """
    Map (cell id, k) -> list of MirrorFunctional.

    Parameters
    ----------
    complex_ : Complex
    functionals : dict
    host : ElementSystem
           Polynomial host space the functionals are evaluated on by the
           commutation checks.
    kind : str
    """

    def __init__(self, complex_, functionals, host=None, kind="custom"):
        self.complex = complex_
        self._functionals = functionals
        self.host = host
        self.kind = kind
        self._covectors = {}

    def functionals(self, cid, k):
        return list(self._functionals.get((cid, k), []))

    def count(self, cid, k):
        return len(self._functionals.get((cid, k), []))

    def evaluate(self, cid, k, family):
        return [l(self.complex, family) for l in self.functionals(cid, k)]

    def covectors(self, cid, k, system):
        """Rows of the functionals against the basis of A^k(T) of ``system``."""
        key = (cid, k, id(system))
        if key not in self._covectors:
            space = system.space(cid, k)
            rows = [
                [l(self.complex, fam) for fam in space.families]
                for l in self.functionals(cid, k)
            ]
            self._covectors[key] = linalg.from_rows(rows, space.dim)
        return self._covectors[key]

    def pairing_matrix(self, cid, k, system):
        """Pairing of the cell's mirror with A_0^k(T)."""
        return linalg.matmul(self.covectors(cid, k, system), system.kernel_space(cid, k))

    def total(self, k):
        return sum(self.count(c.id, k) for c in self.complex if c.dim >= k)


def canonical_trimmed_mirrors(p, complex_, q=1):
    """
    Canonical degrees of freedom of the trimmed system of order p: on a
    cell of dimension m, the moments against full polynomial (m - k)-forms
    of degree p - m + k - 1.

    The trimmed system of order p + q is declared as host.
    """
    if not complex_.is_simplicial:
        raise NotSimplicial("Canonical trimmed mirrors need a simplicial complex.")
    functionals = {}
    for cell in complex_:
        m = cell.dim
        for k in range(m + 1):
            r = p - m + k - 1
            functionals[(cell.id, k)] = [
                MirrorFunctional(cell.id, k, weight=(v,))
                for v in full_poly_basis(r, m - k, m)
            ]
    host = TrimmedSystem(complex_, p + q)
    return MirrorSystem(complex_, functionals, host, "canonical")


def _partners(space, columns):
    return [space.combine(col) for col in columns]


def l2_mirrors(system, products=None, host=None):
    """Moments against the kernel: {u -> a(u, v) : v in A_0^k(T)}."""
    functionals = {}
    for cell in system.complex:
        for k in range(cell.dim + 1):
            space = system.space(cell.id, k)
            K = system.kernel_space(cell.id, k)
            functionals[(cell.id, k)] = [
                MirrorFunctional(cell.id, k, partner=v, products=products)
                for v in _partners(space, linalg.columns(K))
            ]
    return MirrorSystem(system.complex, functionals, host, "l2")


def harmonic_mirrors(system, products=None, host=None):
    """
    Projection based degrees of freedom: moments against dA_0^{k-1}(T),
    completed by the integral in top degree and by the moments of du
    against dA_0^k(T) below it.
    """
    report = system.compatibility()
    if not report.compatible:
        raise NotCompatible(
            "Harmonic mirrors need a compatible system; failing cells {}".format(
                report.failing_cells()
            )
        )
    cx = system.complex
    functionals = {}
    for cell in cx:
        m = cell.dim
        for k in range(m + 1):
            out = []
            if k >= 1:
                out.extend(
                    MirrorFunctional(cell.id, k, partner=v, products=products)
                    for v in _exact_kernel(system, cell.id, k - 1)
                )
            if k == m:
                out.append(
                    MirrorFunctional(
                        cell.id,
                        k,
                        weight=_ones(cell),
                    )
                )
            else:
                out.extend(
                    MirrorFunctional(cell.id, k, partner=v, derivative=True, products=products)
                    for v in _exact_kernel(system, cell.id, k)
                )
            functionals[(cell.id, k)] = out
    return MirrorSystem(cx, functionals, host, "harmonic")


def _ones(cell):
    return [PolyForm.constant(sum(piece_shape(p))) for p in cell.pieces]


def _exact_kernel(system, cid, k):
    """Independent families spanning dA_0^k(T), as forms of degree k + 1."""
    DK = linalg.matmul(system.d_matrix(cid, k), system.kernel_space(cid, k))
    cols = linalg.columns(DK)
    target = system.space(cid, k + 1)
    return [target.combine(cols[j]) for j in linalg.independent_columns(DK)]


@dataclass
class FaithfulnessReport:
    faithful: bool
    cells: dict
    subcomplexes: list

    def to_dict(self):
        return {
            "faithful": self.faithful,
            "cells": {c: {str(k): v for k, v in r.items()} for c, r in self.cells.items()},
            "subcomplexes": self.subcomplexes,
        }


def mirror_matrix(mirrors, system, ids, k):
    """Matrix of all functionals of the cells ``ids`` on the global space over them."""
    space = system.global_space(ids, k)
    rows = []
    for cid in space.cells:
        C = mirrors.covectors(cid, k, system)
        for r in linalg.to_rows(C):
            rows.append(
                [
                    sum((a * b for a, b in zip(r, space.value(j, cid))), ZERO)
                    for j in range(space.dim)
                ]
            )
    return linalg.from_rows(rows, space.dim)


def faithfulness_check(mirrors, system, samples=3, seed=0):
    """
    Checks that every pairing matrix is square and invertible, and spot
    checks that the global mirror map is invertible on the closures of a
    few random cells.

    Raises ExtensionsUnverified when the system does not admit extensions.
    """
    extensions = system.check_extensions()
    if not all(all(v.values()) for v in extensions.values()):
        raise ExtensionsUnverified("Faithfulness needs a system admitting extensions.")
    cx = system.complex

    def cell_verdicts(cid):
        out = {}
        for k in range(cx.cell(cid).dim + 1):
            P = mirrors.pairing_matrix(cid, k, system)
            out[k] = P.shape[0] == P.shape[1] and linalg.det(P) != 0
        return out

    ids = [c.id for c in cx]
    cells = dict(zip(ids, map_cells(cell_verdicts, ids, system.threads, "pairings", system.verbose)))
    faithful = all(all(v.values()) for v in cells.values())
    spot = []
    if faithful:
        sampler = RationalSampler(seed)
        for cid in sampler.subset(ids, samples):
            closure = cx.closure(cid)
            ok = True
            for k in range(cx.cell(cid).dim + 1):
                M = mirror_matrix(mirrors, system, closure, k)
                ok = ok and M.shape[0] == M.shape[1] and linalg.det(M) != 0
            spot.append({"cell": cid, "invertible": ok})
            faithful = faithful and ok
    if system.verbose:
        print("Faithful: {}".format(faithful))
    return FaithfulnessReport(faithful, cells, spot)


def ambient_family(complex_, cid, u):
    """Pullbacks of an ambient form to the charts of the pieces of a cell."""
    return tuple(pullback(complex_.chart(p).embed, u) for p in complex_.cell(cid).pieces)


def ambient_families(complex_, u, ids=None):
    ids = ids if ids is not None else [c.id for c in complex_ if c.dim >= u.degree]
    return {cid: ambient_family(complex_, cid, u) for cid in ids}


class Interpolator:
    """
    Projection onto an element system commuting with restrictions, computed
    cell by cell by increasing dimension. Subclasses define the value on a
    cell from the input family and the already interpolated boundary.
    """

    def __init__(self, system):
        self.system = system
        self.complex = system.complex

    def apply_cell(self, cid, k, family, boundary):
        raise NotImplementedError

    def _inputs(self, u, k, ids):
        if hasattr(u, "terms"):
            return ambient_families(self.complex, u, ids)
        return u

    def apply(self, u, k, ids=None, check=True):
        """
        Interpolates u over a subcomplex (whole complex by default).

        Parameters
        ----------
        u : PolyForm or dict
            An ambient form, or per-cell families of forms consistent under
            traces.

        Returns
        -------
        element : dict
                  Cell id -> coordinates in A^k(T).
        """
        cx = self.complex
        if ids is None:
            ids = [c.id for c in cx]
        ids = [c.id for c in cx if c.id in set(ids) and c.dim >= k]
        families = self._inputs(u, k, ids)
        if check:
            self._check_consistent(families, k)
        out = {}
        for cid in ids:
            faces = [f for f in cx.faces(cid) if cx.cell(f).dim >= k]
            out[cid] = self.apply_cell(cid, k, families[cid], {f: out[f] for f in faces})
        return out

    def _check_consistent(self, families, k):
        cx = self.complex
        for cid, fam in families.items():
            for f in cx.faces(cid):
                if f in families and cx.cell(f).dim >= k:
                    trace = self.system.restrict(cid, f, fam)
                    if any(a != b for a, b in zip(trace, families[f])):
                        raise InconsistentInput(
                            "Input traces disagree between {} and {}".format(cid, f)
                        )

    def coefficients(self, u, k):
        """Interpolant in the coordinates of the global space."""
        return self.system.global_space(None, k).coordinates(self.apply(u, k))

    def is_projection(self, k, samples=2, seed=0):
        """Elements of A^k are fixed, on random global combinations."""
        space = self.system.global_space(None, k)
        sampler = RationalSampler(seed)
        for _ in range(samples):
            x = sampler(space.dim)
            element = space.element(x)
            families = {c: self.system.space(c, k).combine(v) for c, v in element.items()}
            if self.apply(families, k) != element:
                return False
        return True

    def commutes_with_restriction(self, u, k):
        """Interpolating on the closure of a cell gives the trace of the interpolant."""
        cx = self.complex
        full = self.apply(u, k)
        families = self._inputs(u, k, list(full))
        for cid in full:
            closure = cx.closure(cid)
            local = self.apply({c: families[c] for c in closure if c in families}, k, closure, check=False)
            for sub, v in local.items():
                R = self.system.restriction_matrix(cid, sub, k)
                if linalg.matvec(R, full[cid]) != v:
                    return False
        return True

    def d_commutation_residual(self, u, k):
        """
        Cells where d I u and I du differ, for an ambient or per-cell
        (k)-form u whose derivative is taken piece by piece.
        """
        cx = self.complex
        Iu = self.apply(u, k)
        if hasattr(u, "terms"):
            du = d(u)
        else:
            du = {c: tuple(d(x) for x in fam) for c, fam in u.items() if cx.cell(c).dim > k}
        Idu = self.apply(du, k + 1)
        bad = []
        for cid, v in Idu.items():
            if linalg.matvec(self.system.d_matrix(cid, k), Iu[cid]) != v:
                bad.append(cid)
        return bad


def _particular_extension(system, cid, k, boundary):
    cx = system.complex
    faces = [f for f in cx.faces(cid) if cx.cell(f).dim >= k]
    g = []
    for f in faces:
        g.extend(boundary.get(f, [ZERO] * system.space(f, k).dim))
    R = system.boundary_matrix(cid, k)
    X, C = linalg.solve_with_constraints(R, linalg.column(g))
    if C.shape[0] and not linalg.is_zero(C):
        raise NotExtendable("Boundary data on {} has no extension".format(cid))
    return [r[0] for r in linalg.to_rows(X)]


class MirrorInterpolator(Interpolator):
    """Interpolator defined by equal mirror images on every cell."""

    def __init__(self, mirrors, system):
        super().__init__(system)
        self.mirrors = mirrors
        self._solvers = {}

    def _solver(self, cid, k):
        key = (cid, k)
        if key not in self._solvers:
            C = self.mirrors.covectors(cid, k, self.system)
            K = self.system.kernel_space(cid, k)
            P = linalg.matmul(C, K)
            if P.shape[0] != P.shape[1] or linalg.det(P) == 0:
                raise NotFaithful("Mirror of {} in degree {} is not faithful".format(cid, k))
            self._solvers[key] = (C, K, linalg.inverse(P))
        return self._solvers[key]

    def apply_cell(self, cid, k, family, boundary):
        C, K, Pinv = self._solver(cid, k)
        xp = _particular_extension(self.system, cid, k, boundary) if boundary else None
        target = self.mirrors.evaluate(cid, k, family)
        if xp is None:
            xp = [ZERO] * self.system.space(cid, k).dim
        rhs = [a - b for a, b in zip(target, linalg.matvec(C, xp))] if target else []
        if K.shape[1] == 0:
            return xp
        y = linalg.matvec(Pinv, rhs)
        return [a + b for a, b in zip(xp, linalg.matvec(K, y))]


def interpolate(mirrors, system, u, k):
    """
    The element of A^k with the same mirror image as u, in global
    coordinates, together with the per-cell coordinates.
    """
    interpolator = MirrorInterpolator(mirrors, system)
    element = interpolator.apply(u, k)
    return system.global_space(None, k).coordinates(element), element


def extension_from_mirrors(mirrors, system, boundary, cid, k):
    """
    The extension of boundary data annihilated by the mirror of the cell.

    Returns coordinates in A^k(T).
    """
    xp = _particular_extension(system, cid, k, boundary)
    C = mirrors.covectors(cid, k, system)
    K = system.kernel_space(cid, k)
    if K.shape[1] == 0:
        return xp
    P = linalg.matmul(C, K)
    if P.shape[0] != P.shape[1] or linalg.det(P) == 0:
        raise NotFaithful("Mirror of {} in degree {} is not faithful".format(cid, k))
    y = linalg.matvec(linalg.inverse(P), [-x for x in linalg.matvec(C, xp)])
    return [a + b for a, b in zip(xp, linalg.matvec(K, y))]


class Extensions:
    """
    Extension operators A^k(boundary of T) -> A^k(T), with the top degree
    map R -> A^m(T) of the extension diagram.
    """

    def __init__(self, system):
        self.system = system

    def extend(self, cid, k, boundary):
        raise NotImplementedError

    def top(self, cid, value):
        """
        d E u scaled to integral ``value``, for a boundary (m-1)-form u with
        nonzero integral.
        """
        system = self.system
        cx = system.complex
        m = cx.cell(cid).dim
        boundary = [c for c in cx.closure(cid) if c != cid]
        space = system.global_space(boundary, m - 1)
        for j in range(space.dim):
            element = space.element([1 if i == j else 0 for i in range(space.dim)])
            total = _boundary_integral(system, cid, element)
            if total != 0:
                faces = {f: element[f] for f in cx.faces(cid) if f in element}
                dEu = linalg.matvec(system.d_matrix(cid, m - 1), self.extend(cid, m - 1, faces))
                return [QQ.convert(value) / total * x for x in dEu]
        raise NotExtendable("No boundary form of {} has a nonzero integral".format(cid))


class MirrorExtensions(Extensions):
    """Extension operators defined by a faithful mirror system."""

    def __init__(self, mirrors, system):
        super().__init__(system)
        self.mirrors = mirrors

    def extend(self, cid, k, boundary):
        return extension_from_mirrors(self.mirrors, self.system, boundary, cid, k)


class HarmonicExtensions(Extensions):
    """Harmonic extension operators for a scalar product."""

    def __init__(self, system, products):
        super().__init__(system)
        self.products = products

    def extend(self, cid, k, boundary):
        return harmonic_extension(self.system, boundary, cid, k, self.products)

    def top(self, cid, value):
        return harmonic_top_form(self.system, cid, value, self.products)


class L2Projections:
    """Cellwise a-projections of forms onto A^k(T)."""

    def __init__(self, system, products=None):
        self.system = system
        self.products = products

    def project(self, cid, k, family):
        system = self.system
        cx = system.complex
        space = system.space(cid, k)
        if space.dim == 0:
            return []
        G = linalg.zeros(space.dim, space.dim)
        b = [ZERO] * space.dim
        for i, p in enumerate(cx.cell(cid).pieces):
            basis = [fam[i] for fam in space.families] + [family[i]]
            metric = self.products._metric(p) if self.products is not None else None
            M = linalg.to_rows(piece_mass_matrix(basis, cx.chart(p), metric))
            G = linalg.add(G, linalg.from_rows([r[:-1] for r in M[:-1]], space.dim))
            b = [x + r[-1] for x, r in zip(b, M[:-1])]
        return linalg.solve_vector(G, b)


class InterpolatorProjections:
    """Cellwise projections given by an interpolator run on the closure of the cell."""

    def __init__(self, interpolator):
        self.interpolator = interpolator
        self.system = interpolator.system

    def project(self, cid, k, family):
        cx = self.system.complex
        closure = cx.closure(cid)
        families = {c: self.system.restrict(cid, c, family) for c in closure if cx.cell(c).dim >= k}
        return self.interpolator.apply(families, k, closure, check=False)[cid]


class EPInterpolator(Interpolator):
    """
    Extension-projection interpolator: J u = P u + E(J du_boundary - trace P u)
    below the top degree and J u = P u in top degree.
    """

    def __init__(self, system, extensions, projections):
        super().__init__(system)
        self.extensions = extensions
        self.projections = projections
        self.report = {}

    def apply_cell(self, cid, k, family, boundary):
        cx = self.complex
        Pu = self.projections.project(cid, k, family)
        if k == cx.cell(cid).dim:
            return Pu
        data = {}
        for f, v in boundary.items():
            R = self.system.restriction_matrix(cid, f, k)
            data[f] = [a - b for a, b in zip(v, linalg.matvec(R, Pu))]
        Ev = self.extensions.extend(cid, k, data)
        return [a + b for a, b in zip(Pu, Ev)]


def _boundary_integral(system, cid, element):
    """Integral over the boundary of T of an (m-1)-form given on the facets."""
    cx = system.complex
    total = ZERO
    for f in cx.faces(cid):
        if cx.cell(f).dim == cx.cell(cid).dim - 1 and f in element:
            w = system.integral_vector(f)
            total += cx.incidence(cid, f) * sum((a * b for a, b in zip(w, element[f])), ZERO)
    return total


def _check_extensions_commute(system, extensions, cid):
    """Failing slot of the extension diagram on a cell, or None."""
    cx = system.complex
    m = cx.cell(cid).dim
    boundary = [c for c in cx.closure(cid) if c != cid]
    if m == 0:
        return None
    one = system.space(cid, 0).coordinates(system.constant_family(cid))
    faces = {f: linalg.matvec(system.restriction_matrix(cid, f, 0), one) for f in cx.faces(cid)}
    if extensions.extend(cid, 0, faces) != one:
        return "E^0"
    for k in range(m):
        space = system.global_space(boundary, k)
        for j in range(space.dim):
            element = space.element([1 if i == j else 0 for i in range(space.dim)])
            faces = {f: element[f] for f in cx.faces(cid) if f in element}
            Eu = extensions.extend(cid, k, faces)
            dEu = linalg.matvec(system.d_matrix(cid, k), Eu)
            if k < m - 1:
                du = {
                    f: linalg.matvec(system.d_matrix(f, k), element[f])
                    for f in cx.faces(cid)
                    if f in element and cx.cell(f).dim >= k + 1
                }
                if extensions.extend(cid, k + 1, du) != dEu:
                    return "E^{}".format(k)
            else:
                integral = _boundary_integral(system, cid, element)
                top = extensions.top(cid, integral)
                if top != dEu:
                    return "E^{}".format(m)
    return None


def _check_projections(system, projections, cid, samples, sampler, degree):
    """Failing slot of the projection conditions on a cell, or None."""
    cx = system.complex
    m = cx.cell(cid).dim
    n = cx.ambient_dim
    for k in range(m + 1):
        for _ in range(samples):
            u = sampler.form(n, k, degree)
            fam = ambient_family(cx, cid, u)
            Pu = projections.project(cid, k, fam)
            if k < m:
                Pdu = projections.project(cid, k + 1, ambient_family(cx, cid, d(u)))
                if linalg.matvec(system.d_matrix(cid, k), Pu) != Pdu:
                    return "P.d^{}".format(k)
            else:
                w = system.integral_vector(cid)
                if sum((a * b for a, b in zip(w, Pu)), ZERO) != system.cell_integral(cid, fam):
                    return "P.integral"
    return None


def ep_interpolator(system, extensions, projections, samples=2, seed=0, degree=None):
    """
    Builds the extension-projection interpolator after checking that the
    extensions commute with d (including the top degree tail) and that the
    projections commute with d and preserve integrals.

    Raises PreconditionFailed naming the failing slot. The commutation with
    d and the preservation of integrals of the result are recorded in
    ``report`` on random polynomial inputs.
    """
    cx = system.complex
    sampler = RationalSampler(seed)
    degree = degree if degree is not None else 2
    for cell in cx:
        slot = _check_extensions_commute(system, extensions, cell.id)
        if slot is not None:
            raise PreconditionFailed(
                "Extensions do not commute on {} at {}".format(cell.id, slot), slot=slot
            )
        slot = _check_projections(system, projections, cell.id, samples, sampler, degree)
        if slot is not None:
            raise PreconditionFailed(
                "Projections fail on {} at {}".format(cell.id, slot), slot=slot
            )
    J = EPInterpolator(system, extensions, projections)
    commutes, integrals = True, True
    for k in range(cx.dim + 1):
        u = sampler.form(cx.ambient_dim, k, degree + 1)
        if k < cx.dim:
            commutes = commutes and not J.d_commutation_residual(u, k)
        Ju = J.apply(u, k)
        for cid in cx.cells_of_dim(k):
            w = system.integral_vector(cid)
            value = sum((a * b for a, b in zip(w, Ju[cid])), ZERO)
            integrals = integrals and value == system.cell_integral(cid, ambient_family(cx, cid, u))
    J.report = {"commutes": commutes, "preserves_integrals": integrals}
    return J


def _host_covectors(mirrors, host, cid, k):
    """Functionals of a cell as rows against the host basis of A^k(T)."""
    return mirrors.covectors(cid, k, host)


def commutation_check(mirrors, system, host=None, samples=2, seed=0):
    """
    Checks that l o d lies in the span of the (k-1)-mirrors of the closure
    of T for every functional l of every cell, by exact rank on the host
    space, and compares d I u with I d u on random host elements.
    """
    host = host or mirrors.host
    if host is None:
        raise HostSpaceTooSmall("Commutation check needs a host space.")
    cx = system.complex
    _require_contains(host, system)
    failures = []
    for cell in cx:
        T = cell.id
        for k in range(1, cell.dim + 1):
            L = _host_covectors(mirrors, host, T, k)
            if L.shape[0] == 0:
                continue
            Ld = linalg.matmul(L, host.d_matrix(T, k - 1))
            blocks = []
            for sub in cx.closure(T):
                if cx.cell(sub).dim >= k - 1 and mirrors.count(sub, k - 1):
                    Z = _host_covectors(mirrors, host, sub, k - 1)
                    blocks.append(linalg.matmul(Z, host.restriction_matrix(T, sub, k - 1)))
            S = linalg.vstack(*blocks, ncols=Ld.shape[1])
            rs = linalg.rank(S)
            for i, r in enumerate(linalg.to_rows(Ld)):
                if linalg.rank(linalg.vstack(S, linalg.row(r))) != rs:
                    failures.append({"cell": T, "k": k, "functional": i})
    interpolator = MirrorInterpolator(mirrors, system)
    sampler = RationalSampler(seed)
    sampled = True
    for k in range(cx.dim):
        space = host.global_space(None, k)
        for _ in range(samples):
            element = space.element(sampler(space.dim))
            families = {c: host.space(c, k).combine(v) for c, v in element.items()}
            if interpolator.d_commutation_residual(families, k):
                sampled = False
    verdict = not failures
    if system.verbose:
        print("Commuting mirrors: {} (sampled {})".format(verdict, sampled))
    return {"commutes": verdict, "sampled": sampled, "failures": failures}


def _require_contains(host, system):
    for cell in system.complex:
        for k in range(cell.dim + 1):
            space = system.space(cell.id, k)
            H = host.space(cell.id, k)
            for fam in space.families:
                if H.coordinates(fam) is None:
                    raise HostSpaceTooSmall(
                        "Host space misses A^{}({})".format(k, cell.id)
                    )


def mirror_coboundary_check(mirrors, host):
    """
    Exact check of the diagram delta o Phi = Phi o d on the global host
    spaces, with delta the adjoint of l -> l o d expressed in the mirrors.
    """
    cx = host.complex
    ids = [c.id for c in cx]
    out = []
    for k in range(1, cx.dim + 1):
        Phi_k = mirror_matrix(mirrors, host, ids, k)
        Phi_prev = mirror_matrix(mirrors, host, ids, k - 1)
        lhs = linalg.matmul(Phi_k, host.global_d_matrix(k - 1))
        # lhs = C Phi_prev, with C the transpose of delta
        X, cons = linalg.solve_with_constraints(linalg.transpose(Phi_prev), linalg.transpose(lhs))
        solvable = not (cons.shape[0] and not linalg.is_zero(cons))
        if solvable:
            C = linalg.transpose(X)
            solvable = linalg.is_zero(linalg.sub(linalg.matmul(C, Phi_prev), lhs))
        out.append(solvable)
    return {"commutes": all(out), "per_degree": out}


def mirror_from_ie(interpolator, extensions, host):
    """
    The mirror system of an (interpolator, extension) pair: on each cell,
    the annihilator in the host space of the kernel of (id - E trace) o I.
    """
    system = interpolator.system
    _require_contains(host, system)
    cx = system.complex
    functionals = {}
    for cell in cx:
        T = cell.id
        closure = cx.closure(T)
        for k in range(cell.dim + 1):
            H = host.space(T, k)
            cols = []
            for fam in H.families:
                families = {c: host.restrict(T, c, fam) for c in closure if cx.cell(c).dim >= k}
                Iu = interpolator.apply(families, k, closure, check=False)
                faces = {f: Iu[f] for f in cx.faces(T) if f in Iu}
                if faces:
                    Eu = extensions.extend(T, k, faces)
                    cols.append([a - b for a, b in zip(Iu[T], Eu)])
                else:
                    cols.append(Iu[T])
            Q = linalg.from_columns(cols, system.space(T, k).dim)
            N = linalg.nullspace(Q)
            rows = linalg.to_rows(linalg.left_nullspace(N)) if N.shape[1] else linalg.to_rows(linalg.eye(H.dim))
            functionals[(T, k)] = [
                MirrorFunctional(T, k, covector=tuple(r), host=host) for r in rows
            ]
    return MirrorSystem(cx, functionals, host, "ie")


def tensor_mirrors(first, second, product_system, first_system, second_system):
    """
    Tensor product of mirror systems on a product complex: on U x V in
    degree k, the products of the l-mirrors of U with the (k - l)-mirrors
    of V, as covectors against the tensor basis of ``product_system``.
    """
    for mirrors, system in ((first, first_system), (second, second_system)):
        try:
            if not faithfulness_check(mirrors, system).faithful:
                raise NotFaithfulInputs("Tensor mirrors need faithful factors.")
        except ExtensionsUnverified:
            raise NotFaithfulInputs("Tensor mirrors need factors admitting extensions.") from None
    cx = product_system.complex
    functionals = {}
    for cell in cx:
        U, V = cell.meta["factors"]
        for k in range(cell.dim + 1):
            rows = []
            for block, (l, du, dv, offset) in enumerate(product_system.blocks(cell.id, k)):
                CU = linalg.to_rows(first.covectors(U, l, first_system))
                CV = linalg.to_rows(second.covectors(V, k - l, second_system))
                width = product_system.space(cell.id, k).dim
                for ru in CU:
                    for rv in CV:
                        r = [ZERO] * width
                        for a, x in enumerate(ru):
                            for b, y in enumerate(rv):
                                r[offset + a * dv + b] = x * y
                        rows.append(r)
            functionals[(cell.id, k)] = [
                MirrorFunctional(cell.id, k, covector=tuple(r), host=product_system) for r in rows
            ]
    return MirrorSystem(cx, functionals, product_system, "tensor")


def dof_table(mirrors, system):
    """Rows (cell, k, index, covector) of the functionals against A^k(T)."""
    table = []
    for cell in system.complex:
        for k in range(cell.dim + 1):
            C = mirrors.covectors(cell.id, k, system)
            for i, r in enumerate(linalg.to_rows(C)):
                table.append(
                    {
                        "cell": cell.id,
                        "k": k,
                        "index": i,
                        "covector": [rational_str(x) for x in r],
                    }
                )
    return table
