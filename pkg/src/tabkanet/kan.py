"""B-spline bases and the Kolmogorov-Arnold layer.

Each edge ``p -> q`` of a :class:`KanLayer` carries its own univariate function

    phi_qp(x) = w_qp * silu(x) + sum_j c_qpj * B_j(x)

and each output sums its incoming edges. Stacking two layers gives the usual
inner/outer composition ``f(x) = sum_q Phi_q(sum_p phi_qp(x_p))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .nn import Module, Parameter


@dataclass(frozen=True)
class SplineGrid:
    """Uniform knot vector on ``[lower, upper]`` extended by ``order`` knots per side."""

    lower: float = -2.0
    upper: float = 2.0
    grid_size: int = 5
    order: int = 3

    def __post_init__(self):
        if self.grid_size < 1:
            raise ValueError(f"grid_size must be >= 1, got {self.grid_size}")
        if self.order < 0:
            raise ValueError(f"spline order must be >= 0, got {self.order}")
        if not self.lower < self.upper:
            raise ValueError(f"grid domain needs lower < upper, got [{self.lower}, {self.upper}]")

    @property
    def step(self) -> float:
        return (self.upper - self.lower) / self.grid_size

    @property
    def knots(self) -> np.ndarray:
        k = self.order
        return self.lower + self.step * np.arange(-k, self.grid_size + k + 1, dtype=np.float64)

    @property
    def n_basis(self) -> int:
        return self.grid_size + self.order


def _interval(x: np.ndarray, grid: SplineGrid) -> np.ndarray:
    # Knot-interval index of each x, clamped to the domain so values outside
    # evaluate the boundary polynomial piece.
    j = np.floor((x - grid.lower) / grid.step).astype(np.int64)
    return np.clip(j, 0, grid.grid_size - 1) + grid.order


def _basis_and_lower(x: np.ndarray, grid: SplineGrid) -> tuple[np.ndarray, np.ndarray | None]:
    """Degree-k bases and the degree-(k-1) bases (for the derivative)."""
    t = grid.knots
    k = grid.order
    x = np.asarray(x, dtype=np.float64)
    xe = x[..., None]
    nb0 = len(t) - 1
    B = (np.arange(nb0) == _interval(x, grid)[..., None]).astype(np.float64)
    prev = None
    for p in range(1, k + 1):
        left_den = t[p:nb0] - t[:nb0 - p]
        right_den = t[p + 1:nb0 + 1] - t[1:nb0 - p + 1]
        prev = B
        B = ((xe - t[:nb0 - p]) / left_den * B[..., :-1]
             + (t[p + 1:nb0 + 1] - xe) / right_den * B[..., 1:])
    return B, prev


def bspline_basis(x, grid: SplineGrid) -> np.ndarray:
    """Cox-de Boor basis values, shape ``x.shape + (G + k,)``.

    Inside ``[lower, upper]`` the values are nonnegative and sum to one.
    Outside, each input is evaluated on the polynomial piece of the nearest
    boundary interval.
    """
    return _basis_and_lower(x, grid)[0]


def bspline_basis_derivative(x, grid: SplineGrid) -> np.ndarray:
    """d/dx of :func:`bspline_basis`, same shape."""
    B, lower = _basis_and_lower(x, grid)
    k = grid.order
    if k == 0:
        return np.zeros_like(B)
    t = grid.knots
    nb = B.shape[-1]
    a = k / (t[k:k + nb] - t[:nb])
    b = k / (t[k + 1:k + 1 + nb] - t[1:nb + 1])
    return a * lower[..., :-1] - b * lower[..., 1:]


def spline_features(x: Tensor, grid: SplineGrid) -> Tensor:
    """Differentiable basis expansion: ``B x d`` -> ``B x d x (G + k)``."""
    B, lower = _basis_and_lower(x.data, grid)

    def backward(g):
        k = grid.order
        if k == 0:
            return (np.zeros_like(x.data),)
        t = grid.knots
        nb = B.shape[-1]
        a = k / (t[k:k + nb] - t[:nb])
        b = k / (t[k + 1:k + 1 + nb] - t[1:nb + 1])
        dB = a * lower[..., :-1] - b * lower[..., 1:]
        return ((g * dB).sum(axis=-1),)

    return ag._make(B, (x,), backward)


class KanLayer(Module):
    """Fully connected KAN layer: ``out_dim x in_dim`` learnable edge functions."""

    def __init__(self, in_dim: int, out_dim: int, grid: SplineGrid,
                 base_weight: np.ndarray, spline_coeffs: np.ndarray):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.grid = grid
        self.base_weight = Parameter(base_weight)
        self.spline_coeffs = Parameter(spline_coeffs)
        if self.base_weight.shape != (out_dim, in_dim):
            raise ValueError(f"base_weight shape {self.base_weight.shape} != {(out_dim, in_dim)}")
        if self.spline_coeffs.shape != (out_dim, in_dim, grid.n_basis):
            raise ValueError(f"spline_coeffs shape {self.spline_coeffs.shape} "
                             f"!= {(out_dim, in_dim, grid.n_basis)}")

    def forward(self, x: Tensor) -> Tensor:
        rows = x.shape[0]
        base = ag.matmul(ag.silu(x), ag.transpose(self.base_weight))
        feats = ag.reshape(spline_features(x, self.grid), (rows, self.in_dim * self.grid.n_basis))
        coeffs = ag.reshape(self.spline_coeffs, (self.out_dim, self.in_dim * self.grid.n_basis))
        return base + ag.matmul(feats, ag.transpose(coeffs))


def kan_init(in_dim: int, out_dim: int, grid: SplineGrid | None = None, scale: float = 1.0,
             rng: np.random.Generator | None = None, seed: int | None = None) -> KanLayer:
    """Base weights ~ U(-s, s), s = scale/sqrt(in_dim); spline coefficients ~ N(0, 0.1*scale)."""
    if in_dim < 1 or out_dim < 1:
        raise ValueError(f"KAN dims must be >= 1, got {in_dim} -> {out_dim}")
    grid = grid or SplineGrid()
    rng = rng if rng is not None else np.random.default_rng(seed)
    s = scale / math.sqrt(in_dim)
    base = rng.uniform(-s, s, size=(out_dim, in_dim)) if s > 0 else np.zeros((out_dim, in_dim))
    coeffs = rng.normal(0.0, 0.1 * scale, size=(out_dim, in_dim, grid.n_basis)) if scale > 0 \
        else np.zeros((out_dim, in_dim, grid.n_basis))
    return KanLayer(in_dim, out_dim, grid, base, coeffs)


def kan_forward(layer: KanLayer, x) -> Tensor:
    return layer(ag.as_tensor(x))


class KanStack(Module):
    """Consecutive KAN layers, e.g. widths ``[n, 64, n*d]``."""

    def __init__(self, widths: list[int], grid: SplineGrid, rng: np.random.Generator,
                 scale: float = 1.0):
        if len(widths) < 2:
            raise ValueError("a KAN stack needs at least input and output widths")
        self.widths = list(widths)
        self.layers = [kan_init(a, b, grid, scale, rng) for a, b in zip(widths, widths[1:])]

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x
