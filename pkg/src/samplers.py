import numpy as np
import torch
from sympy import QQ

from . import linalg
from .polyforms import PolyForm, alt_indices, monomials


class Sampler:
    def __init__(self, seed):
        """
        Generates reproducible random inputs for the verification layer.

        Parameters:
        -----------
        seed : int
               Integer value used to generate reproducible results.
        """
        self.seed = seed
        self.rng = np.random.default_rng(self.seed)

    def reset_seed(self):
        """
        Sets the random seed so that the same random samples can be
        generated if desired.
        """
        self.rng = np.random.default_rng(self.seed)

    def __call__(self):
        raise NotImplementedError


class RationalSampler(Sampler):
    """Small rationals p/q with |p| <= bound and 1 <= q <= denominator."""

    def __init__(self, seed, bound=5, denominator=3):
        super().__init__(seed)
        self.bound = bound
        self.denominator = denominator

    def __call__(self, size):
        """
        Returns
        -------
        samples : list of QQ of length size
        """
        num = self.rng.integers(-self.bound, self.bound + 1, size=size)
        den = self.rng.integers(1, self.denominator + 1, size=size)
        return [QQ(int(a), int(b)) for a, b in zip(num, den)]

    def nonzero(self, size):
        out = self(size)
        return [x if x != 0 else QQ(1) for x in out]

    def form(self, dim, degree, p):
        """Random form of polynomial degree <= p in dim variables."""
        keys = [(a, I) for a in monomials(dim, p) for I in alt_indices(dim, degree)]
        return PolyForm(dim, degree, dict(zip(keys, self(len(keys)))))

    def invertible(self, n, attempts=20):
        """Random exact invertible matrix."""
        for _ in range(attempts):
            M = linalg.from_rows([self(n) for _ in range(n)], n)
            if linalg.det(M) != 0:
                return M
        return linalg.eye(n)

    def subset(self, items, size):
        idx = self.rng.choice(len(items), size=min(size, len(items)), replace=False)
        return [items[i] for i in sorted(idx)]


class UniformSampler(Sampler):
    def __init__(self, seed, dtype=torch.float64, device="cpu"):
        super().__init__(seed)
        self.dtype = dtype
        self.device = device

    def __call__(self, size, low=0.0, high=1.0):
        """
        Returns
        -------
        samples : torch tensor of shape (size)
                  A sample from a Uniform distribution U(low, high).
        """
        return torch.tensor(
            self.rng.uniform(low, high, size=size), dtype=self.dtype, device=self.device
        )

    def spd(self, n, spread=1.0):
        """Random symmetric positive definite matrix as a rational list of rows."""
        A = self.rng.uniform(-spread, spread, size=(n, n))
        M = A @ A.T + n * np.eye(n)
        return [[QQ(int(round(8 * x)), 8) for x in r] for r in 0.5 * (M + M.T)]
