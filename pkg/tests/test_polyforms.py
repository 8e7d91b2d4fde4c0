import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from sympy import QQ

from src import linalg
from src.exceptions import (
    DegreeMismatch,
    DimensionMismatch,
    NotASubsimplex,
    QuadratureUnavailable,
    ZeroDegree,
)
from src.polyforms import (
    AffineEmbed,
    Chart,
    PolyForm,
    d,
    full_poly_basis,
    integrate,
    is_in_trimmed,
    koszul,
    mass_matrix,
    monomial_integral,
    piece_mass_matrix,
    pullback,
    reference_integral,
    trimmed_basis,
    trimmed_dimension,
    wedge,
    whitney_form,
)
from src.samplers import RationalSampler

seeds = st.integers(min_value=0, max_value=2**16)
dims = st.integers(min_value=1, max_value=3)


def random_form(seed, dim, degree, p=2):
    return RationalSampler(seed).form(dim, degree, p)


def homogeneous(u, r):
    return PolyForm(u.dim, u.degree, {key: c for key, c in u.terms.items() if sum(key[0]) == r})


@settings(max_examples=20, deadline=None)
@given(seed=seeds, dim=dims, data=st.data())
def test_dd_is_zero(seed, dim, data):
    k = data.draw(st.integers(min_value=0, max_value=dim))
    assert d(d(random_form(seed, dim, k, 3))).is_zero()


@settings(max_examples=20, deadline=None)
@given(seed=seeds, dim=dims, data=st.data())
def test_koszul_squares_to_zero(seed, dim, data):
    k = data.draw(st.integers(min_value=min(2, dim), max_value=dim))
    u = random_form(seed, dim, k)
    if k >= 2:
        assert koszul(koszul(u)).is_zero()


@settings(max_examples=20, deadline=None)
@given(seed=seeds, dim=dims, data=st.data())
def test_homotopy_formula(seed, dim, data):
    k = data.draw(st.integers(min_value=0, max_value=dim))
    r = data.draw(st.integers(min_value=0, max_value=3))
    u = homogeneous(random_form(seed, dim, k, 3), r)
    lhs = PolyForm.zero(dim, k)
    if k >= 1:
        lhs = lhs + d(koszul(u))
    if k < dim:
        lhs = lhs + koszul(d(u))
    assert lhs == u * (r + k)


@settings(max_examples=20, deadline=None)
@given(seed=seeds, data=st.data())
def test_leibniz_rule(seed, data):
    dim = 3
    k = data.draw(st.integers(min_value=0, max_value=2))
    l = data.draw(st.integers(min_value=0, max_value=dim - k - 1))
    u = random_form(seed, dim, k)
    v = random_form(seed + 1, dim, l)
    lhs = d(wedge(u, v))
    rhs = wedge(d(u), v) + wedge(u, d(v)) * ((-1) ** k)
    assert lhs == rhs


@settings(max_examples=15, deadline=None)
@given(seed=seeds, data=st.data())
def test_pullback_commutes_with_d(seed, data):
    n = data.draw(st.integers(min_value=1, max_value=3))
    m = data.draw(st.integers(min_value=1, max_value=3))
    k = data.draw(st.integers(min_value=0, max_value=min(n, m) - 1))
    sampler = RationalSampler(seed)
    phi = AffineEmbed(tuple(tuple(sampler(m)) for _ in range(n)), tuple(sampler(n)))
    u = random_form(seed + 7, n, k)
    assert pullback(phi, d(u)) == d(pullback(phi, u))


@settings(max_examples=15, deadline=None)
@given(seed=seeds, dim=st.integers(min_value=1, max_value=3))
def test_stokes_on_reference_simplex(seed, dim):
    u = random_form(seed, dim, dim - 1, 3)
    verts = [[0] * dim] + [[1 if i == j else 0 for i in range(dim)] for j in range(dim)]
    boundary = [(verts[:i] + verts[i + 1 :], (-1) ** i) for i in range(dim + 1)]
    assert integrate(d(u), [(verts, 1)]) == integrate(u, boundary)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_trimmed_dimensions(n, p):
    for k in range(n + 1):
        assert len(trimmed_basis(p, k, n)) == trimmed_dimension(p, k, n)
        assert trimmed_dimension(p, k, n) == math.comb(p + n, p + k) * math.comb(p + k - 1, k)


def test_trimmed_examples():
    # Whitney forms on a triangle and Nedelec edge elements of order 2
    assert [len(trimmed_basis(1, k, 2)) for k in range(3)] == [3, 3, 1]
    assert [len(trimmed_basis(2, k, 2)) for k in range(3)] == [6, 8, 3]
    assert trimmed_basis(0, 1, 2) == []


def test_wedge_of_trimmed_forms():
    for u in trimmed_basis(1, 1, 2):
        for v in trimmed_basis(1, 1, 2):
            assert is_in_trimmed(wedge(u, v), 2)


@pytest.mark.parametrize(
    "sub",
    [(0,), (1,), (0, 1), (1, 2), (0, 2), (0, 1, 2)],
)
def test_whitney_forms_integrate_to_one(sub):
    w = whitney_form(2, sub)
    verts = [[0, 0], [1, 0], [0, 1]]
    if len(sub) == 1:
        assert w.evaluate(verts[sub[0]]).get((), 0) == 1
    else:
        assert integrate(w, [([verts[i] for i in sub], 1)]) == 1
        other = [s for s in [(0, 1), (1, 2), (0, 2)] if len(s) == len(sub) and s != sub]
        for s in other:
            assert integrate(w, [([verts[i] for i in s], 1)]) == 0


def test_whitney_errors():
    with pytest.raises(NotASubsimplex):
        whitney_form(2, (0, 3))


def test_koszul_and_degree_errors():
    with pytest.raises(ZeroDegree):
        koszul(PolyForm.constant(2))
    with pytest.raises(DimensionMismatch):
        PolyForm(2, 3)
    with pytest.raises(DegreeMismatch):
        reference_integral(PolyForm.constant(2))
    phi = AffineEmbed(((1,), (0,)), (0, 0))
    with pytest.raises(DimensionMismatch):
        pullback(phi, PolyForm.dx(2, (0, 1)))


def test_monomial_integrals():
    assert monomial_integral((0, 0), (2,)) == QQ(1, 2)
    assert monomial_integral((1, 0), (2,)) == QQ(1, 6)
    # unit square as a product of two intervals
    assert monomial_integral((1, 1), (1, 1)) == QQ(1, 4)


def test_batch_evaluation_matches_exact():
    u = random_form(3, 2, 1, 3)
    points = [[QQ(1, 3), QQ(1, 4)], [QQ(2, 5), QQ(-1, 2)]]
    values = u.evaluate_batch(torch.tensor([[float(x) for x in p] for p in points], dtype=torch.float64))
    for row, p in zip(values, points):
        exact = u.evaluate(p)
        for j, I in enumerate([(0,), (1,)]):
            assert abs(float(row[j]) - float(exact.get(I, 0))) < 1e-12


def test_serialization():
    u = random_form(5, 3, 2)
    assert PolyForm.from_dict(u.to_dict()) == u
    data = PolyForm.dx(2, (0,)).to_dict()
    assert data == {"dim": 2, "deg": 1, "terms": [{"alpha": [0, 0], "I": [0], "coeff": "1"}]}


def test_full_polynomial_basis_size():
    assert len(full_poly_basis(2, 1, 2)) == 12
    assert full_poly_basis(-1, 0, 2) == []


def test_slanted_segment_volume():
    chart = Chart(AffineEmbed(((1,), (1,)), (0, 0)), (1,))
    assert not chart.has_rational_volume()
    assert chart.volume_float() == pytest.approx(math.sqrt(2))
    one = [PolyForm.constant(1)]
    with pytest.raises(QuadratureUnavailable):
        mass_matrix(one, chart)
    assert mass_matrix(one, chart, exact=False)[0, 0] == pytest.approx(math.sqrt(2))
    assert linalg.to_numpy(piece_mass_matrix(one, chart))[0, 0] == pytest.approx(math.sqrt(2))
    # dt has length 1 / sqrt(2) in the induced metric
    dt = [PolyForm.monomial(1, (0,), (0,))]
    assert linalg.to_numpy(piece_mass_matrix(dt, chart))[0, 0] == pytest.approx(1 / math.sqrt(2))


def test_axis_segment_volume_is_exact():
    chart = Chart(AffineEmbed(((2,), (0,)), (0, 0)), (1,))
    assert chart.volume_factor() == QQ(2)
    M = piece_mass_matrix([PolyForm.constant(1), PolyForm.coordinate(1, 0)], chart)
    assert linalg.to_rows(M) == [[QQ(2), QQ(1)], [QQ(1), QQ(2, 3)]]
