import pytest

from src import linalg
from src.complex import (
    barycentric_refinement,
    build_cells,
    build_simplicial,
    dual_complex,
    refinement_cochain_map,
)
from src.exceptions import (
    DegenerateSimplex,
    DimensionMismatch,
    NonComplex,
    NotManifoldLike,
    NotSimplicial,
    UnknownCell,
    ZeroCell,
)
from .conftest import fixture_meshes, get_mesh


@pytest.mark.parametrize("name", fixture_meshes)
def test_coboundary_squares_to_zero(name):
    cx = get_mesh(name)
    for k in range(cx.dim - 1):
        prod = linalg.matmul(cx.coboundary_matrix(k + 1), cx.coboundary_matrix(k))
        assert linalg.is_zero(prod)
    assert cx.validate()


@pytest.mark.parametrize(
    "name, betti",
    [
        ("triangle", (1, 0, 0)),
        ("two_triangles", (1, 0, 0)),
        ("annulus", (1, 1, 0)),
        ("tet_boundary", (1, 0, 1)),
        ("triangle_boundary", (1, 1)),
        ("tetrahedron", (1, 0, 0, 0)),
        ("agglomerated_square", (1, 0, 0)),
    ],
)
def test_betti_numbers(name, betti):
    assert get_mesh(name).betti_numbers() == betti


def test_triangle_incidences(triangle):
    assert triangle.faces("0-1-2") == {"1-2": 1, "0-2": -1, "0-1": 1}
    assert triangle.faces("0-1") == {"1": 1, "0": -1}
    assert triangle.counts() == (3, 3, 1)
    assert triangle.closure("0-1") == ["0", "1", "0-1"]


def test_unknown_cell(triangle):
    with pytest.raises(UnknownCell):
        triangle.faces("7-8")
    with pytest.raises(ZeroCell):
        triangle.boundary_subcomplex("0")


def test_degenerate_simplex():
    with pytest.raises(DegenerateSimplex):
        build_simplicial([[0, 0], [1, 1], [2, 2]], [[0, 1, 2]])
    with pytest.raises(DegenerateSimplex):
        build_simplicial([[0, 0], [1, 0]], [[0, 0]])


def test_declared_face_is_rejected():
    with pytest.raises(NonComplex):
        build_simplicial([[0, 0], [1, 0], [0, 1]], [[0, 1, 2], [0, 1]])


def test_coboundary_of_cochain(triangle):
    c = triangle.cochain(0, {"0": 1, "1": 3, "2": "1/2"})
    dc = triangle.coboundary(c)
    assert dc.values["0-1"] == 2
    assert triangle.coboundary(dc).values["0-1-2"] == 0


@pytest.mark.parametrize("name", ["triangle", "two_triangles", "tet_boundary"])
def test_refinement_keeps_betti_numbers(name):
    cx = get_mesh(name)
    fine, parent = barycentric_refinement(cx)
    assert fine.betti_numbers() == cx.betti_numbers()
    for k in range(cx.dim):
        lhs = linalg.matmul(cx.coboundary_matrix(k), refinement_cochain_map(fine, cx, parent, k))
        rhs = linalg.matmul(
            refinement_cochain_map(fine, cx, parent, k + 1), fine.coboundary_matrix(k)
        )
        assert linalg.is_zero(linalg.sub(lhs, rhs))


def test_refinement_counts(triangle):
    fine, _ = barycentric_refinement(triangle)
    assert fine.counts() == (7, 12, 6)


def test_dual_of_two_triangles(two_triangles):
    dual = dual_complex(two_triangles)
    assert dual.counts() == (6, 9, 4)
    assert dual.betti_numbers() == (1, 0, 0)
    primal = sorted(dual.cell(c).meta["primal"] for c in dual.cells_of_dim(2))
    assert primal == ["0", "1", "2", "3"]
    assert dual.validate()


def test_dual_needs_manifold():
    fan = build_simplicial(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 0]],
        [[0, 1, 2], [0, 1, 3], [0, 1, 4]],
    )
    with pytest.raises(NotManifoldLike):
        dual_complex(fan)


def test_dual_needs_simplices(agglomerated):
    with pytest.raises(NotSimplicial):
        dual_complex(agglomerated)


def test_agglomerated_square(agglomerated):
    assert agglomerated.counts()[2] == 4
    assert agglomerated.euler_characteristic() == 1
    assert all(r["ok"] for r in agglomerated.cell_homology_report())
    assert len(agglomerated.cell("Q00").pieces) == 2


def test_skeleton_and_boundary(tetrahedron):
    edges = tetrahedron.skeleton(1)
    assert edges.counts() == (4, 6)
    assert edges.betti_numbers() == (1, 3)
    sphere = tetrahedron.boundary_subcomplex("0-1-2-3")
    assert sphere.betti_numbers() == (1, 0, 1)
    with pytest.raises(DimensionMismatch):
        tetrahedron.skeleton(4)
    with pytest.raises(ZeroCell):
        tetrahedron.boundary_subcomplex("0")


def test_explicit_support_cells(two_triangles):
    square = build_cells(
        two_triangles,
        [("0", [[0]]), ("1", [[1]]), ("2", [[2]]), ("3", [[3]]),
         ("a", [[0, 1]]), ("b", [[1, 3]]), ("c", [[2, 3]]), ("e", [[0, 2]]),
         ("Q", [[0, 1, 3], [0, 2, 3]])],
    )
    assert square.counts() == (4, 4, 1)
    assert set(square.faces("Q")) == {"a", "b", "c", "e"}
    assert square.betti_numbers() == (1, 0, 0)
    with pytest.raises(NonComplex):
        build_cells(two_triangles, [("x", [[1, 2]])])
