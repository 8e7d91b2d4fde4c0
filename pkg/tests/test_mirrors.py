import pytest

from src import linalg
from src.exceptions import ExtensionsUnverified, InconsistentInput, NotFaithful, PreconditionFailed
from src.fesystem import PolynomialSystem, TrimmedSystem
from src.harmonic import l2_products
from src.mirrors import (
    HarmonicExtensions,
    InterpolatorProjections,
    L2Projections,
    MirrorExtensions,
    MirrorInterpolator,
    MirrorSystem,
    ambient_family,
    canonical_trimmed_mirrors,
    commutation_check,
    dof_table,
    ep_interpolator,
    extension_from_mirrors,
    faithfulness_check,
    harmonic_mirrors,
    interpolate,
    l2_mirrors,
    mirror_coboundary_check,
    mirror_from_ie,
    tensor_mirrors,
)
from src.polyforms import PolyForm
from src.samplers import RationalSampler
from src.tensorfes import TensorSystem
from utils.meshes import load_mesh
from .conftest import get_mesh, mesh_path


@pytest.mark.parametrize("name", ["triangle", "two_triangles"])
@pytest.mark.parametrize("p", [1, 2, 3])
def test_canonical_mirrors_are_faithful(name, p):
    cx = get_mesh(name)
    system = TrimmedSystem(cx, p)
    assert faithfulness_check(canonical_trimmed_mirrors(p, cx), system).faithful


def test_canonical_mirror_counts(triangle):
    mirrors = canonical_trimmed_mirrors(2, triangle)
    assert mirrors.count("0-1-2", 1) == 2
    assert mirrors.count("0-1-2", 0) == 0
    assert mirrors.count("0-1", 1) == 2
    whitney = canonical_trimmed_mirrors(1, triangle)
    assert whitney.count("0-1-2", 2) == 1
    assert whitney.count("0-1-2", 1) == 0


@pytest.mark.parametrize("p", [1, 2])
def test_canonical_mirrors_commute(triangle, p):
    mirrors = canonical_trimmed_mirrors(p, triangle)
    system = TrimmedSystem(triangle, p)
    report = commutation_check(mirrors, system)
    assert report["commutes"] and report["sampled"]
    assert mirror_coboundary_check(mirrors, mirrors.host)["commutes"]


def test_interpolation_is_a_projection(two_triangles):
    system = TrimmedSystem(two_triangles, 2)
    interpolator = MirrorInterpolator(canonical_trimmed_mirrors(2, two_triangles), system)
    for k in range(3):
        assert interpolator.is_projection(k)


def test_interpolation_commutes_with_d(two_triangles):
    system = TrimmedSystem(two_triangles, 2)
    mirrors = canonical_trimmed_mirrors(2, two_triangles)
    interpolator = MirrorInterpolator(mirrors, system)
    sampler = RationalSampler(4)
    for k in range(2):
        u = sampler.form(2, k, 3)
        assert interpolator.d_commutation_residual(u, k) == []
        assert interpolator.commutes_with_restriction(u, k)


def test_interpolation_matches_mirror_images(triangle):
    system = TrimmedSystem(triangle, 2)
    mirrors = canonical_trimmed_mirrors(2, triangle)
    u = RationalSampler(9).form(2, 1, 3)
    _, element = interpolate(mirrors, system, u, 1)
    for cid, x in element.items():
        family = system.space(cid, 1).combine(x)
        original = ambient_family(triangle, cid, u)
        assert mirrors.evaluate(cid, 1, family) == mirrors.evaluate(cid, 1, original)
    zero, _ = interpolate(mirrors, system, PolyForm.zero(2, 1), 1)
    assert all(v == 0 for v in zero)


def test_inconsistent_input(two_triangles):
    system = TrimmedSystem(two_triangles, 1)
    interpolator = MirrorInterpolator(canonical_trimmed_mirrors(1, two_triangles), system)
    families = {c.id: (PolyForm.constant(c.dim),) for c in two_triangles}
    families["0"] = (PolyForm.constant(0, 2),)
    with pytest.raises(InconsistentInput):
        interpolator.apply(families, 0)


def test_l2_mirrors_are_faithful_but_do_not_commute(triangle):
    system = TrimmedSystem(triangle, 2)
    mirrors = l2_mirrors(system, host=TrimmedSystem(triangle, 3))
    assert faithfulness_check(mirrors, system).faithful
    assert not commutation_check(mirrors, system)["commutes"]


@pytest.mark.parametrize("p", [1, 2])
def test_harmonic_mirrors(triangle, p):
    system = TrimmedSystem(triangle, p)
    mirrors = harmonic_mirrors(system, l2_products(system), host=TrimmedSystem(triangle, p + 1))
    assert faithfulness_check(mirrors, system).faithful
    assert commutation_check(mirrors, system)["commutes"]
    if p == 1:
        assert [f.kind for f in mirrors.functionals("0-1-2", 2)] == ["weight"]


def test_empty_mirror_is_not_faithful(triangle):
    system = TrimmedSystem(triangle, 2)
    empty = MirrorSystem(triangle, {})
    assert not faithfulness_check(empty, system).faithful
    with pytest.raises(NotFaithful):
        MirrorInterpolator(empty, system).apply(RationalSampler(0).form(2, 1, 1), 1)


def test_faithfulness_needs_extensions():
    data = load_mesh(mesh_path("counterexample_triangle"))
    system = PolynomialSystem(data.complex, {"default": 1, "per_cell": data.orders["per_cell"]})
    with pytest.raises(ExtensionsUnverified):
        faithfulness_check(canonical_trimmed_mirrors(1, data.complex), system)


def test_extensions_from_mirrors(triangle):
    system = TrimmedSystem(triangle, 2)
    mirrors = canonical_trimmed_mirrors(2, triangle)
    zero = extension_from_mirrors(mirrors, system, {}, "0-1-2", 1)
    assert all(v == 0 for v in zero)
    sampler = RationalSampler(2)
    boundary = [c for c in triangle.closure("0-1-2") if c != "0-1-2"]
    space = system.global_space(boundary, 1)
    element = space.element(sampler(space.dim))
    faces = {f: element[f] for f in triangle.faces("0-1-2")}
    x = extension_from_mirrors(mirrors, system, faces, "0-1-2", 1)
    for f, v in faces.items():
        assert linalg.matvec(system.restriction_matrix("0-1-2", f, 1), x) == v


def test_whitney_extension_is_the_interpolant(triangle):
    system = TrimmedSystem(triangle, 1)
    mirrors = canonical_trimmed_mirrors(1, triangle)
    # affine function with vertex values 1, 2, 5
    f = PolyForm.constant(2) + PolyForm.coordinate(2, 0) + PolyForm.coordinate(2, 1) * 4
    data = {
        e: system.space(e, 0).coordinates(ambient_family(triangle, e, f))
        for e in triangle.faces("0-1-2")
    }
    x = extension_from_mirrors(mirrors, system, data, "0-1-2", 0)
    assert system.space("0-1-2", 0).combine(x) == ambient_family(triangle, "0-1-2", f)


def test_ep_interpolator_with_l2_projection_fails(triangle):
    system = TrimmedSystem(triangle, 2)
    products = l2_products(system)
    with pytest.raises(PreconditionFailed) as err:
        ep_interpolator(system, HarmonicExtensions(system, products), L2Projections(system, products))
    assert err.value.slot is not None


def test_ep_interpolator_commutes(triangle):
    system = TrimmedSystem(triangle, 1)
    mirrors = canonical_trimmed_mirrors(1, triangle)
    projections = InterpolatorProjections(MirrorInterpolator(mirrors, system))
    J = ep_interpolator(system, HarmonicExtensions(system, l2_products(system)), projections)
    assert J.report == {"commutes": True, "preserves_integrals": True}
    assert J.is_projection(1)


def test_mirror_from_interpolator_and_extension(triangle):
    system = TrimmedSystem(triangle, 1)
    mirrors = canonical_trimmed_mirrors(1, triangle)
    interpolator = MirrorInterpolator(mirrors, system)
    recovered = mirror_from_ie(interpolator, MirrorExtensions(mirrors, system), mirrors.host)
    assert faithfulness_check(recovered, system).faithful
    for cell in triangle:
        for k in range(cell.dim + 1):
            A = mirrors.covectors(cell.id, k, mirrors.host)
            B = recovered.covectors(cell.id, k, mirrors.host)
            assert linalg.same_row_span(A, B)


def test_tensor_mirrors_of_intervals():
    product = load_mesh(mesh_path("interval_x_interval")).complex
    first, second = product.factor_complexes
    A, B = TrimmedSystem(first, 1), TrimmedSystem(second, 1)
    C = TensorSystem(A, B, product)
    mirrors = tensor_mirrors(
        canonical_trimmed_mirrors(1, first), canonical_trimmed_mirrors(1, second), C, A, B
    )
    assert mirrors.total(0) == 4
    assert mirrors.total(1) == 4
    assert mirrors.total(2) == 1
    assert faithfulness_check(mirrors, C).faithful


def test_dof_table(triangle):
    system = TrimmedSystem(triangle, 2)
    table = dof_table(canonical_trimmed_mirrors(2, triangle), system)
    assert len(table) == sum(system.global_space(None, k).dim for k in range(3))
    assert {row["cell"] for row in table if row["k"] == 2} == {"0-1-2"}
    assert all(isinstance(x, str) for row in table for x in row["covector"])
