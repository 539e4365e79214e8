"""
Fourier transforms and function-space norms of grid functions on ``εℕ``. A grid function stands
for its piecewise-linear interpolation, extended by zero one cell past the last node.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy import integrate

from .scaling import RescaledInterface


__all__ = [
    "c_coef",
    "FourierGrid",
    "fourier_hat",
    "direct_fourier_quadrature",
    "norm_h_neg_s0",
    "slobodeckij_seminorm",
    "norm_w_s1_r",
    "norm_c_rho",
    "norm_holder",
]


def c_coef(zeta, epsilon: float):
    """``c_{ζ,ε} = 2 (1 - cos ζε) / (ε ζ^2) = ε sinc^2(ζε/2)``, equal to ``ε`` at ``ζ = 0``."""
    out = epsilon * np.sinc(np.asarray(zeta, dtype=np.float64) * epsilon / (2 * np.pi)) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass
class FourierGrid:
    epsilon: float
    zeta: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.zeta)

    def to_csv(self, path: str):
        np.savetxt(
            path,
            np.column_stack([self.zeta, self.values.real, self.values.imag]),
            delimiter=",",
            header="zeta,re,im",
            comments="",
            fmt="%.17g",
        )


def _grid_values(g: Union[RescaledInterface, np.ndarray], epsilon: Optional[float]):
    if isinstance(g, RescaledInterface):
        if g.rho is None:
            raise ValueError("divergent tail: set the exponential weight rho on the interface")
        return g.weighted(), g.epsilon
    if epsilon is None:
        raise ValueError("epsilon is required for raw grid values")
    return np.asarray(g, dtype=np.float64), epsilon


def fourier_hat(
    g: Union[RescaledInterface, np.ndarray], zeta: np.ndarray, epsilon: Optional[float] = None
) -> FourierGrid:
    """
    ``ĝ(ζ) = c_{ζ,ε} Σ_n e^{-iζn} g(n)``, the exact transform of the interpolated grid function.

    Args:
        g: weighted interface (``rho`` set) or grid values with ``g(0) = 0``.
        zeta (np.ndarray): frequencies.
        epsilon (float): grid spacing, required for raw values.
    """
    values, epsilon = _grid_values(g, epsilon)
    if abs(values[0]) > 1e-14:
        raise ValueError("grid function must vanish at 0")

    zeta = np.atleast_1d(np.asarray(zeta, dtype=np.float64))
    support = np.flatnonzero(values)
    x = epsilon * support
    v = values[support]

    out = np.zeros(len(zeta), dtype=np.complex128)
    block = max(1, (1 << 22) // max(1, len(support)))
    for i in range(0, len(zeta), block):
        z = zeta[i : i + block]
        out[i : i + block] = np.exp(-1j * z[:, None] * x[None, :]) @ v
    out *= c_coef(zeta, epsilon)
    return FourierGrid(epsilon, zeta, out)


def direct_fourier_quadrature(
    values: np.ndarray, epsilon: float, zeta: np.ndarray, order: int = 16
) -> np.ndarray:
    """``∫ g(x) e^{-iζx} dx`` of the interpolation by Gauss-Legendre quadrature on every cell."""
    values = np.append(np.asarray(values, dtype=np.float64), 0.0)
    zeta = np.atleast_1d(np.asarray(zeta, dtype=np.float64))
    nodes, weights = np.polynomial.legendre.leggauss(order)
    lam = (nodes + 1) / 2

    cells = np.arange(len(values) - 1)
    x = epsilon * (cells[:, None] + lam[None, :]).ravel()
    f = ((1 - lam) * values[:-1, None] + lam * values[1:, None]).ravel()
    w = np.tile(weights * epsilon / 2, len(cells))
    return np.exp(-1j * zeta[:, None] * x[None, :]) @ (w * f)


def norm_h_neg_s0(
    f: Union[RescaledInterface, np.ndarray],
    epsilon: Optional[float] = None,
    s0: float = 1.0,
    Z: Optional[float] = None,
    dzeta: Optional[float] = None,
    return_tail: bool = False,
) -> Union[float, Tuple[float, float]]:
    """
    ``(∫ (1 + ζ^2)^{-s0} |f̂(ζ)|^2 dζ)^{1/2}`` with Simpson's rule on ``[-Z, Z]``.

    The step defaults to ``π / (8 x_max)`` so that the oscillations of ``f̂`` are resolved, and
    ``Z`` to ``20π/ε``. The neglected tail of the squared integral is bounded by the smaller of
    ``2 ‖f‖_1^2 Z^{1-2s0} / (2s0 - 1)`` and ``32 (Σ|g|)^2 ε^{-2} Z^{-2s0-3} / (2s0 + 3)``.

    Args:
        f: weighted interface or grid values.
        epsilon (float): grid spacing, required for raw values.
        s0 (float): order, above 1/2. Defaults to 1.
        Z (float): frequency cutoff.
        dzeta (float): frequency step.
        return_tail (bool): also return the tail bound. Defaults to False.

    Raises:
        ValueError: if the tail bound exceeds 10% of the computed integral.
    """
    if s0 <= 0.5:
        raise ValueError("s0 must exceed 1/2")
    values, epsilon = _grid_values(f, epsilon)
    if not np.any(values):
        return (0.0, 0.0) if return_tail else 0.0

    Z = 20 * np.pi / epsilon if Z is None else Z
    x_max = epsilon * len(values)
    dzeta = np.pi / (8 * x_max) if dzeta is None else dzeta
    n = int(math.ceil(Z / dzeta))
    n += n % 2
    zeta = np.linspace(0, Z, n + 1)

    hat = fourier_hat(values, zeta, epsilon).values
    # |f̂(-ζ)| = |f̂(ζ)| for real f
    head = 2 * integrate.simpson((1 + zeta**2) ** (-s0) * np.abs(hat) ** 2, x=zeta)

    total = np.abs(values).sum()
    tail = min(
        2 * (epsilon * total) ** 2 * Z ** (1 - 2 * s0) / (2 * s0 - 1),
        32 * total**2 / epsilon**2 * Z ** (-2 * s0 - 3) / (2 * s0 + 3),
    )
    if tail > 0.1 * head:
        raise ValueError(
            f"frequency cutoff Z={Z:.4g} too small: tail bound {tail:.4g} exceeds 10% of {head:.4g}"
        )

    logging.debug(f"H^-{s0} norm on {n + 1} frequencies, tail bound {tail:.3g}")
    norm = float(np.sqrt(head))
    return (norm, float(tail)) if return_tail else norm


def _cells(values, epsilon, lo, hi):
    n_cells = len(values) - 1
    first = 0 if lo is None else int(math.ceil(lo / epsilon - 1e-9))
    last = n_cells if hi is None else int(math.floor(hi / epsilon + 1e-9))
    if not 0 <= first < last <= n_cells:
        raise ValueError("domain bounds must contain at least one grid cell")
    return first, last


def slobodeckij_seminorm(
    f: np.ndarray,
    epsilon: float,
    s1: float = 0.25,
    r: float = 4.0,
    subcells: int = 8,
    lo: Optional[float] = None,
    hi: Optional[float] = None,
) -> float:
    """
    ``∫∫ |f(x) - f(y)|^r / |x - y|^{s1 r + 1} dx dy`` over ``[lo, hi]^2`` (the ``r``-th power of the
    seminorm).

    Each cell is split into ``subcells`` pieces of width ``δ`` and pairs of pieces are integrated
    with the midpoint rule, except near the diagonal: a piece against itself or its neighbour in
    the same cell is integrated exactly (``f`` is linear there, the integrand is
    ``|a|^r |x - y|^{r(1 - s1) - 1}``) and neighbours across a node use a 4x4 Gauss rule.
    """
    if not 0 < s1 < 0.5:
        raise ValueError("s1 must lie in (0, 1/2)")
    if r < 1:
        raise ValueError("r must be at least 1")
    values = np.asarray(f, dtype=np.float64)
    first, last = _cells(values, epsilon, lo, hi)
    slopes = np.diff(values)[first:last] / epsilon

    m = subcells
    delta = epsilon / m
    cell_of = np.repeat(np.arange(first, last), m)
    y = epsilon * cell_of + delta * (np.tile(np.arange(m), last - first) + 0.5)
    fy = np.interp(y, epsilon * np.arange(len(values)), values)
    q = s1 * r + 1
    p = r - q

    far = 0.0
    N = len(y)
    block = max(1, (1 << 22) // N)
    idx = np.arange(N)
    for i in range(0, N, block):
        rows = idx[i : i + block]
        gap = np.abs(rows[:, None] - idx[None, :])
        dist = np.abs(y[rows, None] - y[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.abs(fy[rows, None] - fy[None, :]) ** r / dist**q
        far += terms[gap >= 2].sum()
    far *= delta**2

    a_r = np.abs(np.repeat(slopes, m)) ** r
    diag = a_r.sum() * 2 * delta ** (p + 2) / ((p + 1) * (p + 2))

    same = cell_of[:-1] == cell_of[1:]
    adjacent = 2 * a_r[:-1][same].sum() * ((2 * delta) ** (p + 2) - 2 * delta ** (p + 2)) / (
        (p + 1) * (p + 2)
    )

    nodes, weights = np.polynomial.legendre.leggauss(4)
    u = (nodes + 1) / 2 * delta
    w = weights * delta / 2
    straddle = 0.0
    for i in np.flatnonzero(~same):
        node = epsilon * cell_of[i + 1]
        left = node - u
        right = node + u
        fl = np.interp(left, epsilon * np.arange(len(values)), values)
        fr = np.interp(right, epsilon * np.arange(len(values)), values)
        integrand = np.abs(fl[:, None] - fr[None, :]) ** r / (right[None, :] - left[:, None]) ** q
        straddle += 2 * w @ integrand @ w

    total = far + diag + adjacent + straddle
    if not np.isfinite(total):
        raise ValueError("Slobodeckij seminorm is not finite")
    return float(total)


def norm_w_s1_r(
    f: np.ndarray,
    epsilon: float,
    s1: float = 0.25,
    r: float = 4.0,
    subcells: int = 8,
    lo: Optional[float] = None,
    hi: Optional[float] = None,
) -> float:
    """``(‖f‖_{L^r}^r + [f]_{s1,r}^r)^{1/r}`` on ``[lo, hi]``, defaulting to the whole grid."""
    values = np.asarray(f, dtype=np.float64)
    first, last = _cells(values, epsilon, lo, hi)

    nodes, weights = np.polynomial.legendre.leggauss(8)
    lam = (nodes + 1) / 2
    seg = (1 - lam) * values[first:last, None] + lam * values[first + 1 : last + 1, None]
    lr = float((np.abs(seg) ** r @ (weights * epsilon / 2)).sum())

    total = lr + slobodeckij_seminorm(values, epsilon, s1, r, subcells, lo, hi)
    if not np.isfinite(total):
        raise ValueError("W^{s1,r} norm is not finite")
    return total ** (1 / r)


def norm_c_rho(f: np.ndarray, epsilon: float, rho: float = 1.0) -> float:
    """``sup_x e^{-ρx} |f(x)|`` over the grid nodes."""
    values = np.asarray(f, dtype=np.float64)
    return float(np.max(np.exp(-rho * epsilon * np.arange(len(values))) * np.abs(values)))


def norm_holder(f: np.ndarray, epsilon: float, b: float = 0.25) -> float:
    """
    ``sup |f| + sup |f(x) - f(y)| / |x - y|^b`` with the quotient restricted to grid pairs, hence
    to ``|x - y| >= ε``.
    """
    if not 0 < b < 1:
        raise ValueError("Hölder exponent must lie in (0, 1)")
    values = np.asarray(f, dtype=np.float64)
    quotient = 0.0
    for lag in range(1, len(values)):
        diff = np.abs(values[lag:] - values[:-lag]).max()
        quotient = max(quotient, diff / (lag * epsilon) ** b)
    return float(np.abs(values).max() + quotient)
