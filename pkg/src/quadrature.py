import itertools

import numpy as np
import torch
from scipy.special import roots_jacobi


def legendre(n, dtype, device):
    """
    Return the locations and weights of Gauss-Legendre quadrature on [0, 1].

    Parameters
    ----------
    n : integer
        Number of evaluation points.
    dtype : data-type
            The dtype of the returned tensors.
    device : torch.device
             The device in which the tensors are stored.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    return (
        torch.tensor((x + 1.0) / 2.0, dtype=dtype, device=device),
        torch.tensor(w / 2.0, dtype=dtype, device=device),
    )


def _jacobi01(n, a):
    """Gauss-Jacobi rule on [0, 1] for the weight (1 - u)^a, as numpy arrays."""
    if a == 0:
        x, w = np.polynomial.legendre.leggauss(n)
    else:
        x, w = roots_jacobi(n, a, 0)
    return (x + 1.0) / 2.0, w / 2.0 ** (a + 1)


def _simplex_points(m, n):
    """Collapsed-coordinate rule on the reference m-simplex, as numpy arrays."""
    if m == 0:
        return np.zeros((1, 0)), np.ones(1)
    u, wu = _jacobi01(n, m - 1)
    sub_x, sub_w = _simplex_points(m - 1, n)
    points, weights = [], []
    for ui, wi in zip(u, wu):
        for xj, wj in zip(sub_x, sub_w):
            points.append(np.concatenate([[ui], (1.0 - ui) * xj]))
            weights.append(wi * wj)
    return np.array(points).reshape(-1, m), np.array(weights)


def simplex_rule(m, degree, dtype, device):
    """
    Return the locations and weights of a conical product Gauss-Jacobi rule
    on the reference m-simplex {t >= 0, sum t <= 1}.

    The rule integrates polynomials of total degree ``degree`` exactly.

    Parameters
    ----------
    m : integer
        Dimension of the simplex.
    degree : integer
             Polynomial degree of exactness.
    dtype : data-type
            The dtype of the returned tensors.
    device : torch.device
             The device in which the tensors are stored.
    """
    n = max(degree, 0) // 2 + 1
    x, w = _simplex_points(m, n)
    return (
        torch.tensor(x, dtype=dtype, device=device),
        torch.tensor(w, dtype=dtype, device=device),
    )


def product_rule(shape, degree, dtype, device):
    """
    Tensor product of simplex rules over a product of reference simplices of
    dimensions ``shape``; coordinates are concatenated in factor order.
    """
    rules = [simplex_rule(m, degree, torch.float64, "cpu") for m in shape]
    points, weights = [], []
    for combo in itertools.product(*[range(r[1].shape[0]) for r in rules]):
        points.append(torch.cat([r[0][i] for r, i in zip(rules, combo)]))
        weights.append(np.prod([float(r[1][i]) for r, i in zip(rules, combo)]))
    dim = sum(shape)
    x = torch.stack(points).reshape(-1, dim) if dim else torch.zeros(len(points), 0)
    return (
        x.to(dtype=dtype, device=device),
        torch.tensor(weights, dtype=dtype, device=device),
    )


def ball_rule(d, radial, angular, dtype, device):
    """
    Return the locations and weights of a polar product rule on the unit
    ball of R^d.

    Radial nodes are Gauss-Legendre on [0, 1] with the r^(d-1) Jacobian in
    the weights. Angular integration is exact for trigonometric (d = 2) or
    spherical (d = 3) polynomials up to the resolution ``angular``.

    Parameters
    ----------
    d : integer
        Dimension of the ball, 1 <= d <= 3.
    radial : integer
             Number of radial nodes.
    angular : integer
              Angular resolution.
    dtype : data-type
            The dtype of the returned tensors.
    device : torch.device
             The device in which the tensors are stored.

    Returns
    -------
    points : torch tensor of shape (Q, d)
    weights : torch tensor of shape (Q,)
    radii : torch tensor of shape (Q,)
    """
    r, wr = np.polynomial.legendre.leggauss(radial)
    r, wr = (r + 1.0) / 2.0, wr / 2.0
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
        wdir = np.array([1.0, 1.0])
    elif d == 2:
        theta = 2.0 * np.pi * np.arange(angular) / angular
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        wdir = np.full(angular, 2.0 * np.pi / angular)
    elif d == 3:
        ct, wt = np.polynomial.legendre.leggauss(angular)
        phi = 2.0 * np.pi * np.arange(2 * angular) / (2 * angular)
        st = np.sqrt(1.0 - ct**2)
        dirs = np.array(
            [[s * np.cos(p), s * np.sin(p), c] for c, s in zip(ct, st) for p in phi]
        )
        wdir = np.array([w * np.pi / angular for w in wt for _ in phi])
    else:
        raise ValueError("Ball rules are available for 1 <= d <= 3.")
    points = (r[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    weights = (wr[:, None] * r[:, None] ** (d - 1) * wdir[None, :]).reshape(-1)
    radii = np.repeat(r, dirs.shape[0])
    return (
        torch.tensor(points, dtype=dtype, device=device),
        torch.tensor(weights, dtype=dtype, device=device),
        torch.tensor(radii, dtype=dtype, device=device),
    )
