import math

import pytest
from sympy import QQ

from src import linalg
from src.complex import dual_complex
from src.exceptions import NotInParentSpace, ParentNotCompatible, SequenceInexact
from src.fesystem import PolynomialSystem, TrimmedSystem
from src.harmonic import (
    HarmonicSubsystem,
    a_harmonic_check,
    canonical_harmonic_basis,
    gauge_residual,
    harmonic_extension,
    harmonic_top_form,
    l2_products,
    locally_harmonic_subsystem,
    upwinded_products,
)
from src.polyforms import PolyForm, reference_integral, whitney_form
from src.samplers import UniformSampler
from utils.meshes import load_mesh
from .conftest import get_mesh, mesh_path


def test_constants_are_harmonic(triangle):
    system = TrimmedSystem(triangle, 2)
    products = l2_products(system)
    assert a_harmonic_check(system, (PolyForm.constant(2, 3),), "0-1-2", 0, products)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_whitney_forms_are_harmonic_for_any_metric(triangle, seed):
    system = TrimmedSystem(triangle, 3)
    products = l2_products(system, UniformSampler(seed).spd(2))
    for sub in [(0,), (1,), (2,), (0, 1), (1, 2), (0, 2), (0, 1, 2)]:
        w = whitney_form(2, sub)
        assert a_harmonic_check(system, (w,), "0-1-2", w.degree, products)


def test_edge_bubble_is_not_harmonic(triangle):
    system = TrimmedSystem(triangle, 2)
    products = l2_products(system)
    K = system.kernel_space("0-1-2", 1)
    bubble = [row[0] for row in linalg.to_rows(K)]
    assert not a_harmonic_check(system, bubble, "0-1-2", 1, products)


def test_form_outside_parent(triangle):
    system = TrimmedSystem(triangle, 1)
    with pytest.raises(NotInParentSpace):
        a_harmonic_check(
            system, (PolyForm.monomial(2, (1, 1)),), "0-1-2", 0, l2_products(system)
        )


def test_harmonic_extension(triangle):
    system = TrimmedSystem(triangle, 2)
    products = l2_products(system)
    zero = harmonic_extension(system, {}, "0-1-2", 1, products)
    assert all(v == 0 for v in zero)
    one = {f: system.space(f, 0).coordinates((PolyForm.constant(1, 3),)) for f in triangle.faces("0-1-2")}
    x = harmonic_extension(system, one, "0-1-2", 0, products)
    assert system.space("0-1-2", 0).combine(x) == (PolyForm.constant(2, 3),)
    with pytest.raises(SequenceInexact):
        harmonic_extension(system, {}, "0-1-2", 2, products)


def test_harmonic_top_form_integral(triangle):
    system = TrimmedSystem(triangle, 2)
    x = harmonic_top_form(system, "0-1-2", QQ(3, 2), l2_products(system))
    w = system.integral_vector("0-1-2")
    assert sum(a * b for a, b in zip(w, x)) == QQ(3, 2)


def test_harmonic_subsystem_of_whitney_forms(two_triangles):
    parent = TrimmedSystem(two_triangles, 2)
    sub = locally_harmonic_subsystem(parent, l2_products(parent))
    assert isinstance(sub, HarmonicSubsystem)
    # Whitney forms are exactly the locally harmonic trimmed forms
    for c in two_triangles:
        assert sub.dims(c.id) == TrimmedSystem(two_triangles, 1).dims(c.id)
    assert sub.compatibility().compatible


def test_parent_must_be_compatible():
    data = load_mesh(mesh_path("counterexample_triangle"))
    parent = PolynomialSystem(data.complex, {"default": 1, "per_cell": data.orders["per_cell"]})
    with pytest.raises(ParentNotCompatible):
        locally_harmonic_subsystem(parent, l2_products(parent))


@pytest.mark.parametrize("name", ["two_triangles", "square2"])
def test_dual_mesh_canonical_basis(name):
    primal = get_mesh(name)
    dual = dual_complex(primal)
    parent = TrimmedSystem(dual, 1)
    sub = locally_harmonic_subsystem(parent, l2_products(parent))
    for k in range(dual.dim + 1):
        space = canonical_harmonic_basis(sub, k)
        assert space.dim == len(dual.cells_of_dim(k))
        assert space.labels == dual.cells_of_dim(k)
        rho = sub.de_rham_matrix(k)
        coords = linalg.from_columns(
            [space.system.global_space(None, k).coordinates(space.element(
                [1 if i == j else 0 for i in range(space.dim)]
            )) for j in range(space.dim)],
            space.dim,
        )
        assert linalg.is_zero(linalg.sub(linalg.matmul(rho, coords), linalg.eye(space.dim)))
        for family in space.families:
            for cid, y in family.items():
                forms = sub.space(cid, k).combine(y)
                assert a_harmonic_check(parent, forms, cid, k, sub.products)
    assert sub.discrete_cohomology_check()["verdict"]


def test_upwinded_products_with_zero_weight(triangle):
    system = TrimmedSystem(triangle, 1)
    unit = l2_products(system)
    weighted = upwinded_products(system, [0, 0])
    for k in range(3):
        A = linalg.to_numpy(unit.gram("0-1-2", k))
        B = linalg.to_numpy(weighted.gram("0-1-2", k))
        assert abs(A - B).max() < 1e-12


def test_upwinded_whitney_subsystem(two_triangles):
    parent = TrimmedSystem(two_triangles, 1)
    sub = locally_harmonic_subsystem(parent, upwinded_products(parent, [1, -QQ(1, 2)]))
    assert sub.compatibility().compatible


@pytest.mark.parametrize("k", [0, 1, 2])
def test_exponential_gauge(triangle, k):
    v = PolyForm.constant(2) if k == 0 else (PolyForm.dx(2, (0,)) if k == 1 else PolyForm.dx(2, (0, 1)))
    assert gauge_residual(triangle, "0-1-2", v, [QQ(1, 2), 1]) < 1e-10


def test_dual_edge_splits_by_arclength():
    # boundary dual of vertex 1: half edges of lengths 1/2 and sqrt(2)/2
    dual = dual_complex(get_mesh("triangle"))
    parent = TrimmedSystem(dual, 1)
    sub = locally_harmonic_subsystem(parent, l2_products(parent))
    space = canonical_harmonic_basis(sub, 1)
    for label in ["*b1", "*b2"]:
        family = space.families[space.labels.index(label)]
        forms = sub.element_forms(label, 1, family[label])
        assert sorted(forms) == (["1-3", "1-5"] if label == "*b1" else ["2-4", "2-5"])
        parts = sorted(abs(float(reference_integral(u))) for u in forms.values())
        assert parts[0] == pytest.approx(math.sqrt(2) - 1, abs=1e-9)
        assert parts[1] == pytest.approx(2 - math.sqrt(2), abs=1e-9)
