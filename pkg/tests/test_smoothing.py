import numpy as np
import pytest
import torch

from src.exceptions import DomainExceeded
from src.samplers import RationalSampler
from src.smoothing import (
    SampledForm,
    bump,
    commutation_residual,
    linearity_residual,
    locality_check,
    macroelement_check,
    make_kernel,
    mesh_scale_field,
    periodic_projection_demo,
    regularize,
    scale_field_constant,
    scaling_covariance_residual,
)
from utils.meshes import graded_interval, structured_square, uniform_interval
from utils.pipelines import sinusoidal_form, wavy_scale

unit_box = (np.zeros(2), np.ones(2))


@pytest.fixture(scope="module")
def points():
    generator = torch.Generator().manual_seed(0)
    return 0.3 + 0.4 * torch.rand(20, 2, dtype=torch.float64, generator=generator)


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("p", [0, 1, 2, 3])
def test_kernel_moments(p, d):
    kernel = make_kernel(p, d)
    assert kernel.moment_errors() <= 1e-10
    assert abs(kernel.moment((0,) * d) - 1.0) <= 1e-10


def test_kernel_errors():
    with pytest.raises(ValueError):
        make_kernel(-1, 2)
    with pytest.raises(ValueError):
        make_kernel(1, 4)


def test_bump_and_profile():
    assert float(bump(torch.tensor(0.0))) == pytest.approx(np.exp(-1.0))
    assert float(bump(torch.tensor(1.0))) == 0.0
    positive = make_kernel(0, 2, positive=True)
    table = positive.table(11)
    assert np.all(table["value"] >= 0)
    assert table["value"][-1] == 0.0
    # kernels preserving higher degrees change sign
    assert np.any(make_kernel(2, 2).table()["value"] < 0)


@pytest.mark.parametrize("p", [0, 1, 2, 3])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_polynomials_are_reproduced(points, p, k):
    u = RationalSampler(p + 10 * k).form(2, k, p)
    f = SampledForm.from_polyform(u, unit_box)
    value = regularize(f, wavy_scale(), 0.05, make_kernel(p, 2), points)
    assert float((value - u.evaluate_batch(points)).abs().max()) <= 1e-8


def test_regularization_commutes_with_d(points):
    residual = commutation_residual(
        sinusoidal_form(), scale_field_constant(1.0), 0.05, make_kernel(1, 2), points[:5]
    )
    assert residual <= 1e-5


def test_regularization_with_varying_scale_commutes(points):
    residual = commutation_residual(
        sinusoidal_form(), wavy_scale(), 0.05, make_kernel(1, 2), points[:5]
    )
    assert residual <= 1e-5


def test_locality():
    x = torch.tensor([0.5, 0.5], dtype=torch.float64)
    assert locality_check(sinusoidal_form(), wavy_scale(), 0.1, make_kernel(1, 2), x) == 0.0


def test_linearity(points):
    kernel = make_kernel(1, 2)
    sampler = RationalSampler(3)
    u = SampledForm.from_polyform(sampler.form(2, 1, 2), unit_box)
    v = SampledForm.from_polyform(sampler.form(2, 1, 3), unit_box)
    assert linearity_residual(u, v, 2.0, -0.5, wavy_scale(), 0.05, kernel, points) < 1e-12


@pytest.mark.parametrize("s, b", [(2.0, [0.1, -0.2]), (0.5, [0.0, 0.3])])
def test_scaling_covariance(s, b):
    x = torch.tensor([[0.5, 0.5], [0.4, 0.6]], dtype=torch.float64)
    residual = scaling_covariance_residual(
        sinusoidal_form(), wavy_scale(), 0.05, make_kernel(1, 2), x, s, b
    )
    assert residual < 1e-10


def test_balls_leaving_the_domain():
    u = SampledForm.from_polyform(RationalSampler(0).form(2, 0, 1), unit_box)
    with pytest.raises(DomainExceeded):
        regularize(u, scale_field_constant(1.0), 0.05, make_kernel(1, 2), [0.01, 0.5])


def test_uniform_mesh_scale_field():
    field = mesh_scale_field(uniform_interval(8))
    low, high = field.bounds
    assert low == pytest.approx(1.0, abs=1e-8)
    assert high == pytest.approx(1.0, abs=1e-8)


def test_graded_mesh_scale_field():
    field = mesh_scale_field(graded_interval(6))
    low, high = field.bounds
    assert 0.5 <= low <= high <= 2.0
    assert set(field.constants) == set(graded_interval(6).cells_of_dim(1))


def test_macroelements():
    square = structured_square(4)
    small = macroelement_check(square, scale_field_constant(0.25), 0.01)
    assert all(small.values())
    large = macroelement_check(square, scale_field_constant(1.0), 1.0)
    assert not all(large.values())


def test_periodic_projection():
    result = periodic_projection_demo(32, 1, 0.5)
    assert "projection_residual" not in result
    assert result["commutation_residual"] < 1e-8
    assert result["interpolation_error"] < 0.05


@pytest.mark.parametrize("epsilon", [0.25, 0.5])
def test_periodic_projection_converges(epsilon):
    errors = [periodic_projection_demo(n, 1, epsilon)["interpolation_error"] for n in (16, 32, 64)]
    # second order on Whitney forms: halving h divides the nodal error by about 4
    assert errors[0] / errors[1] > 3.0
    assert errors[1] / errors[2] > 3.0
