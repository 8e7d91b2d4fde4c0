import pytest

from src import linalg
from src.exceptions import PreconditionFailed
from src.fesystem import PolynomialSystem, TrimmedSystem
from src.tensorfes import TensorSystem, product_complex, tensor_dimension_checks
from utils.meshes import load_mesh
from .conftest import mesh_path


def factors(name):
    product = load_mesh(mesh_path(name)).complex
    return product, product.factor_complexes


def test_product_complex_of_intervals(interval, interval2):
    square = product_complex(interval, interval2)
    assert [len(square.cells_of_dim(k)) for k in range(3)] == [6, 7, 2]
    for k in range(square.dim - 1):
        dd = linalg.matmul(square.coboundary_matrix(k + 1), square.coboundary_matrix(k))
        assert linalg.is_zero(dd)
    assert tuple(square.betti_numbers()) == (1, 0, 0)


@pytest.mark.parametrize("name", ["interval_x_interval", "interval_x_interval2"])
@pytest.mark.parametrize("p, q", [(1, 1), (1, 2), (2, 2)])
def test_tensor_verdicts(name, p, q):
    product, (first, second) = factors(name)
    A, B = TrimmedSystem(first, p), TrimmedSystem(second, q)
    checks = tensor_dimension_checks(A, B, TensorSystem(A, B, product))
    assert checks["verdict"] == {
        "kernels": True,
        "global_dimensions": True,
        "extensions": True,
        "local_exactness": True,
    }


def test_tensor_blocks_and_dimensions(interval):
    A, B = TrimmedSystem(interval, 2), TrimmedSystem(interval, 1)
    C = TensorSystem(A, B)
    top = C.complex.cells_of_dim(2)[0]
    # P2^- on an interval: 3 functions and 2 one-forms
    assert C.dims(top) == [6, 3 * 1 + 2 * 2, 2]
    assert [(l, da, db) for l, da, db, _ in C.blocks(top, 1)] == [(0, 3, 1), (1, 2, 2)]
    dims = [C.global_space(None, k).dim for k in range(3)]
    assert dims == [3 * 2, 3 * 1 + 2 * 2, 2 * 1]
    assert C.compatibility().compatible


def test_product_vector_places_blocks(interval):
    A = TrimmedSystem(interval, 1)
    C = TensorSystem(A, A)
    top = C.complex.cells_of_dim(2)[0]
    x = [linalg.ONE]
    v = C.product_vector(top, 2, 1, x, [linalg.ONE])
    assert v == [linalg.ONE]
    w = C.product_vector(top, 1, 0, [1, 2], [3])
    assert w[:2] == [3, 6] and all(c == 0 for c in w[2:])


def test_factor_without_extensions():
    data = load_mesh(mesh_path("counterexample_triangle"))
    bad = PolynomialSystem(data.complex, {"default": 1, "per_cell": data.orders["per_cell"]})
    good = TrimmedSystem(load_mesh(mesh_path("interval")).complex, 1)
    with pytest.raises(PreconditionFailed) as err:
        tensor_dimension_checks(bad, good)
    assert err.value.slot == "first"
    with pytest.raises(PreconditionFailed) as err:
        tensor_dimension_checks(good, bad)
    assert err.value.slot == "second"
