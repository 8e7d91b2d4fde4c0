import numpy as np
import pytest

from src.assembly import (
    assemble,
    basis_change_invariance,
    commuting_diagram_report,
    convergence_table,
    hodge_eigenvalues,
    hodge_zero_modes,
    square_eigenvalues,
)
from src.exceptions import NotCompatible
from src.fesystem import PolynomialSystem, TrimmedSystem
from src.mirrors import MirrorInterpolator, canonical_trimmed_mirrors
from utils.meshes import load_mesh
from .conftest import get_mesh, mesh_path


def test_mass_and_stiffness_of_whitney_functions(triangle):
    pair = assemble(TrimmedSystem(triangle, 1), 0)
    assert pair.dim == 3
    assert np.all(np.linalg.eigvalsh(pair.mass) > 0)
    assert np.linalg.matrix_rank(pair.stiffness) == 2
    assert np.allclose(pair.stiffness, pair.stiffness.T)


@pytest.mark.parametrize("name", ["square2", "annulus"])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_zero_modes_are_betti_numbers(name, k):
    result = hodge_zero_modes(TrimmedSystem(get_mesh(name), 1), k)
    assert result["equal"]
    assert result["zero_modes"] == result["betti"]


def test_too_few_eigenvalues_warns(triangle):
    with pytest.warns(UserWarning):
        values = hodge_eigenvalues(TrimmedSystem(triangle, 1), 0, 5)
    assert values.size == 2
    assert np.all(values > 0)


def test_eigenvalues_do_not_depend_on_the_basis(square2):
    system = TrimmedSystem(square2, 1)
    assert basis_change_invariance(system, 0, 3, seed=1) < 1e-6
    assert basis_change_invariance(system, 1, 3, seed=2) < 1e-6


def test_square_oracle():
    values = square_eigenvalues(0, 3)
    assert np.allclose(values, np.pi**2 * np.array([1, 1, 2]))
    assert np.allclose(square_eigenvalues(1, 1), 2 * np.pi**2)


@pytest.mark.slow
def test_square_eigenvalues_converge():
    system = TrimmedSystem(get_mesh("square8"), 1)
    values = hodge_eigenvalues(system, 0, 3)
    exact = square_eigenvalues(0, 3)
    assert np.all(np.abs(values - exact) / exact < 0.1)


@pytest.mark.slow
def test_convergence_orders():
    meshes = [(1 / 4, get_mesh("square4")), (1 / 8, get_mesh("square8"))]
    rows = convergence_table(meshes, 0, 2)
    assert np.all(rows[1]["errors"] < rows[0]["errors"])
    assert np.all(rows[1]["orders"] > 1.5)


@pytest.mark.parametrize("p", [1, 2])
def test_commuting_diagram(triangle, p):
    system = TrimmedSystem(triangle, p)
    interpolator = MirrorInterpolator(canonical_trimmed_mirrors(p, triangle), system)
    report = commuting_diagram_report(system, interpolator, samples=1)
    assert report["verdict"]
    assert report["commutes"] and report["preserves_integrals"]
    assert report["cohomology_isomorphism"]
    assert report["failures"] == []


def test_assembly_needs_compatibility():
    data = load_mesh(mesh_path("counterexample_triangle"))
    system = PolynomialSystem(data.complex, {"default": 1, "per_cell": data.orders["per_cell"]})
    with pytest.raises(NotCompatible):
        assemble(system, 0)
