import pytest

from src import linalg
from src.exceptions import ConditionViolated, NotCompatible, NotASubcell, OrderNotMonotone
from src.fesystem import PolynomialSystem, TrimmedSystem, subspace_equal
from utils.meshes import load_mesh, load_orders
from utils.process_flags import build_system, order_specification
from .conftest import get_mesh, mesh_path, orders_dir


def orders_path(name):
    return "{}/{}.json".format(orders_dir, name)


def test_whitney_dimensions(triangle):
    system = TrimmedSystem(triangle, 1)
    assert system.dims("0-1-2") == [3, 3, 1]
    assert [system.kernel_space("0-1-2", k).shape[1] for k in range(3)] == [0, 0, 1]


def test_trimmed_order_two_dimensions(triangle):
    system = TrimmedSystem(triangle, 2)
    assert system.dims("0-1-2") == [6, 8, 3]
    assert [system.kernel_space("0-1-2", k).shape[1] for k in range(3)] == [0, 2, 3]


@pytest.mark.parametrize("p, expected", [(2, 3), (3, 4)])
def test_variable_order_vertex_spaces(triangle, p, expected):
    # order p on the triangle, 1 on its faces: traces on edges must be affine
    system = TrimmedSystem(triangle, {"default": 1, "per_cell": {"0-1-2": p}})
    assert system.dims("0-1-2")[0] == expected
    assert system.compatibility().compatible


def test_full_polynomial_dimensions(triangle):
    system = PolynomialSystem(triangle, 1, drop=0)
    assert system.dims("0-1-2") == [3, 6, 3]
    assert PolynomialSystem(triangle, 2, drop=1).dims("0-1-2") == [6, 6, 1]


def test_kernel_of_cubic_bubbles(triangle):
    assert PolynomialSystem(triangle, 2, drop=0).kernel_space("0-1-2", 0).shape[1] == 0
    assert PolynomialSystem(triangle, 3, drop=0).kernel_space("0-1-2", 0).shape[1] == 1


def test_order_errors(triangle):
    with pytest.raises(OrderNotMonotone):
        TrimmedSystem(triangle, {"default": 2, "per_cell": {"0-1": 3}})
    with pytest.raises(OrderNotMonotone):
        TrimmedSystem(triangle, 0)
    with pytest.raises(ConditionViolated):
        PolynomialSystem(triangle, {"default": 2, "per_cell": {"0-1": 1}}, drop=0)


def test_restriction_matrices(triangle):
    system = TrimmedSystem(triangle, 1)
    R = system.restriction_matrix("0-1-2", "0-1-2", 1)
    assert linalg.is_zero(linalg.sub(R, linalg.eye(3)))
    R = system.restriction_matrix("0-1-2", "0-1", 1)
    assert linalg.rank(R) == 1
    composed = linalg.matmul(
        system.restriction_matrix("0-1", "1", 0),
        system.restriction_matrix("0-1-2", "0-1", 0),
    )
    direct = system.restriction_matrix("0-1-2", "1", 0)
    assert linalg.is_zero(linalg.sub(composed, direct))
    with pytest.raises(NotASubcell):
        system.restriction_matrix("0-1", "2", 0)


def test_global_dimensions(two_triangles, triangle):
    system = TrimmedSystem(two_triangles, 1)
    assert [system.global_space(None, k).dim for k in range(3)] == [4, 5, 2]
    boundary = TrimmedSystem(triangle, 1).global_space(triangle.boundary_subcomplex("0-1-2"), 0)
    assert boundary.dim == 3


@pytest.mark.parametrize("name", ["triangle", "two_triangles", "tetrahedron", "annulus"])
@pytest.mark.parametrize("p", [1, 2])
def test_trimmed_systems_are_compatible(name, p):
    if name == "tetrahedron" and p == 2:
        pytest.skip("covered by the slow suite")
    report = TrimmedSystem(get_mesh(name), p).compatibility()
    assert report.compatible
    assert all(report.dimension_equality)
    assert not report.failures
    assert all(all(v) for v in report.lower_bounds.values())


@pytest.mark.slow
def test_tetrahedron_order_two_is_compatible(tetrahedron):
    assert TrimmedSystem(tetrahedron, 2).compatibility().compatible


@pytest.mark.parametrize(
    "mesh, failing",
    [
        ("counterexample_triangle", ["0-1-2"]),
        ("counterexample_two_triangles", ["0-1-3"]),
    ],
)
def test_counterexamples_fail_on_expected_cells(mesh, failing):
    data = load_mesh(mesh_path(mesh))
    spec = dict(data.orders)
    spec.setdefault("drop", 1)
    report = build_system(data.complex, spec).compatibility()
    assert not report.compatible
    assert report.failing_cells() == failing
    assert report.to_dict()["failing_cells"] == failing


@pytest.mark.parametrize(
    "mesh, orders",
    [
        ("triangle", "triangle_mixed"),
        ("two_triangles", "two_triangles_mixed"),
        ("tetrahedron", "tetrahedron_mixed"),
    ],
)
def test_variable_order_files_are_compatible(mesh, orders):
    spec = load_orders(orders_path(orders))
    spec.setdefault("per_cell", {})
    spec.setdefault("drop", 1)
    system = build_system(get_mesh(mesh), spec)
    assert system.compatibility().compatible


def test_orders_file_wins(tmp_path):
    class Args:
        orders = orders_path("counterexample_edge")
        mesh_data = load_mesh(mesh_path("triangle"))
        family = "trimmed"
        order = 3

    spec = order_specification(Args)
    assert spec["family"] == "polynomial"
    assert spec["default"] == 1


@pytest.mark.parametrize(
    "name, betti",
    [("annulus", (1, 1, 0)), ("tet_boundary", (1, 0, 1)), ("two_triangles", (1, 0, 0))],
)
def test_discrete_cohomology(name, betti):
    check = TrimmedSystem(get_mesh(name), 1).discrete_cohomology_check()
    assert check["verdict"]
    assert tuple(check["discrete_betti"]) == betti
    assert tuple(check["cochain_betti"]) == betti


def test_cohomology_needs_compatibility():
    data = load_mesh(mesh_path("counterexample_triangle"))
    system = build_system(data.complex, dict(data.orders))
    with pytest.raises(NotCompatible):
        system.discrete_cohomology_check()


def test_whitney_family_maps_to_indicator(two_triangles):
    system = TrimmedSystem(two_triangles, 1)
    space = system.global_space(None, 1)
    edges = two_triangles.cells_of_dim(1)
    rho = linalg.to_rows(system.de_rham_matrix(1))
    # every global Whitney family is the indicator of one edge
    for j in range(space.dim):
        column = [r[j] for r in rho]
        assert sorted(column) == [0] * (len(edges) - 1) + [1]
    zero = system.de_rham_global([0] * space.dim, 1)
    assert all(v == 0 for v in zero.values.values())


def test_de_rham_commutes_with_d(square2):
    system = TrimmedSystem(square2, 2)
    for k in range(2):
        lhs = linalg.matmul(system.de_rham_matrix(k + 1), system.global_d_matrix(k))
        rhs = linalg.matmul(square2.coboundary_matrix(k), system.de_rham_matrix(k))
        assert linalg.is_zero(linalg.sub(lhs, rhs))


def test_closure_and_subspace_equality(agglomerated):
    system = TrimmedSystem(agglomerated, 1)
    assert system.verify_closure()
    K = system.kernel_space("Q00", 2)
    doubled = linalg.scale(K, 2)
    assert subspace_equal(K, doubled)
    assert not subspace_equal(K, linalg.zeros(K.shape[0], 0))


def test_threads_do_not_change_verdicts(annulus):
    serial = TrimmedSystem(annulus, 1, threads=1).compatibility().to_dict()
    threaded = TrimmedSystem(annulus, 1, threads=4).compatibility().to_dict()
    assert serial == threaded
