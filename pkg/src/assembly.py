"""
Global Galerkin matrices and the discrete Hodge Laplacian eigenproblem.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import linalg
from .exceptions import NotCompatible, SolverBreakdown
from .fesystem import TrimmedSystem
from .harmonic import l2_products
from .mirrors import ambient_family
from .samplers import RationalSampler
from .utils import map_cells, zero_mode_tolerance


@dataclass
class AssembledPair:
    """
    Galerkin matrices of degree k in the global basis.

    ``derivative`` is the exact matrix of d : A^k -> A^{k+1} and
    ``stiffness`` = D^T M_{k+1} D.
    """

    k: int
    mass: np.ndarray
    derivative: object
    stiffness: np.ndarray
    next_mass: np.ndarray = None

    @property
    def dim(self):
        return self.mass.shape[0]


def global_mass(system, k, products=None):
    """Float mass matrix of the global space of degree k, summed over top cells."""
    products = products or l2_products(system)
    space = system.global_space(None, k)
    cx = system.complex
    N = space.dim
    tops = cx.cells_of_dim(cx.dim)

    def block(cid):
        js = space._on_cell.get(cid, [])
        if not js:
            return js, None
        F = linalg.from_columns([space.families[j][cid] for j in js], system.space(cid, k).dim)
        G = products.gram(cid, k)
        return js, linalg.to_numpy(linalg.matmul(linalg.transpose(F), linalg.matmul(G, F)))

    M = np.zeros((N, N))
    for js, B in map_cells(block, tops, system.threads, "mass", system.verbose):
        if B is not None:
            M[np.ix_(js, js)] += B
    return M


def assemble(system, k, products=None, check=True):
    """
    Mass and stiffness matrices of degree k. The system is checked to be
    compatible first.
    """
    if check:
        report = system.compatibility()
        if not report.compatible:
            raise NotCompatible(
                "Assembly needs a compatible system; failing cells {}".format(
                    report.failing_cells()
                )
            )
    products = products or l2_products(system)
    M = global_mass(system, k, products)
    cx = system.complex
    if k < cx.dim:
        D = system.global_d_matrix(k)
        M1 = global_mass(system, k + 1, products)
        Df = linalg.to_numpy(D)
        K = Df.T @ M1 @ Df
    else:
        D = linalg.zeros(0, M.shape[0])
        M1 = np.zeros((0, 0))
        K = np.zeros_like(M)
    if system.verbose:
        print("Assembled degree {}: {} unknowns".format(k, M.shape[0]))
    return AssembledPair(k, M, D, 0.5 * (K + K.T), M1)


def _generalized_eigenvalues(K, M):
    try:
        values = scipy.linalg.eigh(K, M, eigvals_only=True)
    except (np.linalg.LinAlgError, ValueError) as err:
        raise SolverBreakdown("Generalized eigenproblem failed: {}".format(err)) from None
    if not np.all(np.isfinite(values)):
        raise SolverBreakdown("Generalized eigenproblem returned non finite values.")
    return np.sort(values)


def _split_zero_modes(values):
    scale = max(abs(values).max(), 1.0) if values.size else 1.0
    zero = np.abs(values) <= zero_mode_tolerance * scale
    return values[~zero], int(zero.sum())


def hodge_eigenvalues(system, k, count, pair=None):
    """
    The ``count`` smallest nonzero eigenvalues of d*d on A^k, from
    K u = lambda M u. Zero modes are filtered with a tolerance relative to
    the largest eigenvalue; fewer available eigenvalues than requested are
    returned with a warning.
    """
    pair = pair or assemble(system, k)
    values, _ = _split_zero_modes(_generalized_eigenvalues(pair.stiffness, pair.mass))
    if values.size < count:
        warnings.warn(
            "Only {} nonzero eigenvalues available, {} requested".format(values.size, count)
        )
    return values[:count]


def hodge_zero_modes(system, k):
    """
    Nullity of the full Hodge Laplacian D^T M D + M D' M'^-1 D'^T M in
    degree k, compared with the Betti number of the complex.
    """
    cx = system.complex
    pair = assemble(system, k)
    L = pair.stiffness.copy()
    if k > 0:
        prev = assemble(system, k - 1, check=False)
        Dp = linalg.to_numpy(prev.derivative)
        MDp = pair.mass @ Dp
        try:
            L += MDp @ scipy.linalg.solve(prev.mass, MDp.T, assume_a="pos")
        except (np.linalg.LinAlgError, ValueError) as err:
            raise SolverBreakdown("Mass matrix solve failed: {}".format(err)) from None
    values = _generalized_eigenvalues(0.5 * (L + L.T), pair.mass)
    _, zeros = _split_zero_modes(values)
    betti = cx.betti_numbers()[k]
    return {"zero_modes": zeros, "betti": betti, "equal": zeros == betti}


def square_eigenvalues(k, count):
    """
    Nonzero eigenvalues of d*d on the unit square: Neumann Laplacian
    eigenvalues for functions, and the Dirichlet ones (carried by the curl)
    for 1-forms.
    """
    start = 0 if k == 0 else 1
    n = int(math.sqrt(count)) + 4
    values = sorted(
        (a * a + b * b) * math.pi**2
        for a in range(start, start + n)
        for b in range(start, start + n)
        if a or b
    )
    return np.array(values[:count])


def convergence_table(meshes, k, count, order=1, oracle=square_eigenvalues):
    """
    Eigenvalue errors against an oracle over a sequence of meshes, with the
    empirical orders between consecutive meshes.

    Parameters
    ----------
    meshes : list of (h, Complex)
    """
    exact = oracle(k, count)
    rows = []
    for h, cx in meshes:
        system = TrimmedSystem(cx, order)
        values = hodge_eigenvalues(system, k, count)
        errors = np.abs(values - exact[: values.size]) / exact[: values.size]
        rows.append({"h": h, "eigenvalues": values, "errors": errors})
    for prev, row in zip(rows, rows[1:]):
        ratio = np.log(prev["errors"] / row["errors"]) / np.log(prev["h"] / row["h"])
        row["orders"] = ratio
    rows[0]["orders"] = np.full(count, np.nan)
    return rows


def basis_change_invariance(system, k, count, seed=0, pair=None):
    """
    Largest relative change of the eigenvalues under a random exact
    invertible change of global basis.
    """
    pair = pair or assemble(system, k)
    S = linalg.to_numpy(RationalSampler(seed).invertible(pair.dim))
    before = hodge_eigenvalues(system, k, count, pair)
    changed = AssembledPair(k, S.T @ pair.mass @ S, None, S.T @ pair.stiffness @ S)
    after = hodge_eigenvalues(system, k, count, changed)
    return float(np.max(np.abs(after - before) / np.abs(before))) if before.size else 0.0


def commuting_diagram_report(system, interpolator, samples=2, degree=2, seed=0):
    """
    Checks d I = I d on random polynomial forms, the preservation of
    integrals over the cells, and the induced maps on cohomology (iso when
    integrals are preserved and the De Rham maps are).
    """
    cx = system.complex
    sampler = RationalSampler(seed)
    failures = []
    commutes, integrals = True, True
    for k in range(cx.dim + 1):
        for _ in range(samples):
            u = sampler.form(cx.ambient_dim, k, degree)
            if k < cx.dim:
                bad = interpolator.d_commutation_residual(u, k)
                if bad:
                    commutes = False
                    failures.append({"check": "dI=Id", "k": k, "cells": bad})
            Iu = interpolator.apply(u, k)
            for cid in cx.cells_of_dim(k):
                w = system.integral_vector(cid)
                value = sum((a * b for a, b in zip(w, Iu[cid])), linalg.ZERO)
                if value != system.cell_integral(cid, ambient_family(cx, cid, u)):
                    integrals = False
                    failures.append({"check": "rho I = rho", "k": k, "cells": [cid]})
    cohomology = system.discrete_cohomology_check()
    return {
        "commutes": commutes,
        "preserves_integrals": integrals,
        "cohomology_isomorphism": integrals and cohomology["verdict"],
        "failures": failures,
        "verdict": commutes and integrals and cohomology["verdict"],
    }
