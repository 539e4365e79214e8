"""
Reference solver for the reflected stochastic heat equation on the half-line
``∂_t u = ∂_x^2 u + √2 Ẇ + η``, ``u >= 0``, ``u(t, 0) = 0``, and exact Bessel(3) profiles.

The scheme is explicit Euler followed by a projection onto ``u >= 0``; the projected deficit
times ``dx`` is the reflection mass of the step. The right end ``x_max`` carries a homogeneous
Neumann condition. Fields may carry leading replica axes; space is always the last axis.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Union

import numpy as np
from scipy import stats

from ..dynamics.simulate import RngStream, as_generator
from ..utils.utils import TestFunction, _optional_tqdm


__all__ = [
    "SheGrid",
    "SheState",
    "SchemeInstabilityError",
    "Bessel3Path",
    "SheRunResult",
    "sample_bessel3",
    "bessel3_marginal_cdf",
    "she_step",
    "she_run",
]


class SchemeInstabilityError(FloatingPointError):
    """The explicit scheme blew up."""


@dataclass(frozen=True)
class SheGrid:
    """
    Args:
        dx (float): spatial step.
        dt (float): time step, at most ``dx^2 / 4``.
        x_max (float): right end of the domain.
    """

    dx: float
    dt: float
    x_max: float

    def __post_init__(self):
        if self.dx <= 0 or self.dt <= 0:
            raise ValueError("dx and dt must be positive")
        if self.dt > self.dx**2 / 4 * (1 + 1e-12):
            raise ValueError(
                f"unstable grid: dt / dx^2 = {self.ratio:.4g} exceeds 1/4 for the explicit scheme"
            )

    @classmethod
    def from_dx(cls, dx: float, x_max: float, ratio: float = 0.25) -> "SheGrid":
        return cls(dx, ratio * dx**2, x_max)

    @property
    def ratio(self) -> float:
        return self.dt / self.dx**2

    @property
    def n(self) -> int:
        return int(round(self.x_max / self.dx)) + 1

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(self.n)


@dataclass
class SheState:
    """Field ``u`` (space on the last axis), cumulative reflection mass per cell and time."""

    u: np.ndarray
    eta_mass: np.ndarray = None
    time: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        if self.eta_mass is None:
            self.eta_mass = np.zeros_like(self.u)
        if np.any(self.u < 0):
            raise ValueError("the field must be nonnegative")
        if np.any(self.u[..., 0] != 0):
            raise ValueError("the field must vanish at x = 0")

    def copy(self) -> "SheState":
        return SheState(self.u.copy(), self.eta_mass.copy(), self.time)


@dataclass
class Bessel3Path:
    x: np.ndarray
    values: np.ndarray


def sample_bessel3(
    grid: SheGrid, rng: Union[RngStream, np.random.Generator, int, None] = None, size: int = None
) -> Bessel3Path:
    """
    Norm of a 3-dimensional Brownian path on the grid, ``size`` paths stacked on the first axis
    when given.
    """
    gen = as_generator(rng)
    shape = (grid.n - 1, 3) if size is None else (size, grid.n - 1, 3)
    steps = gen.normal(0.0, math.sqrt(grid.dx), shape)
    path = np.cumsum(steps, axis=-2)
    values = np.linalg.norm(path, axis=-1)
    pad = [(0, 0)] * (values.ndim - 1) + [(1, 0)]
    return Bessel3Path(grid.x, np.pad(values, pad))


def bessel3_marginal_cdf(x: float, r):
    """CDF of ``|N(0, x I_3)|`` at ``r``."""
    if x <= 0:
        raise ValueError("position must be positive")
    return stats.chi.cdf(r, df=3, scale=math.sqrt(x))


def _laplacian(u: np.ndarray, dx: float) -> np.ndarray:
    lap = np.zeros_like(u)
    lap[..., 1:-1] = (u[..., 2:] - 2 * u[..., 1:-1] + u[..., :-2]) / dx**2
    # Neumann ghost node u[n] = u[n-2]
    lap[..., -1] = 2 * (u[..., -2] - u[..., -1]) / dx**2
    return lap


def _step(u, grid: SheGrid, xi: np.ndarray, blowup: float):
    u_tilde = u + grid.dt * _laplacian(u, grid.dx) + math.sqrt(2 * grid.dt / grid.dx) * xi
    u_tilde[..., 0] = 0.0
    if not np.all(np.isfinite(u_tilde)) or np.abs(u_tilde).max() > blowup:
        raise SchemeInstabilityError(f"field magnitude exceeded {blowup:g}")
    deficit = np.maximum(-u_tilde, 0.0)
    u_new = np.maximum(u_tilde, 0.0)
    return u_new, deficit * grid.dx


def she_step(
    state: SheState,
    grid: SheGrid,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[np.ndarray] = None,
    blowup: float = 1e6,
) -> SheState:
    """
    One step of the scheme: ``ũ = u + dt Δu + √(2 dt / dx) ξ`` followed by
    ``u ← max(ũ, 0)`` and ``η += max(-ũ, 0) dx``. Without ``rng`` and ``noise`` the step is
    deterministic.

    Raises:
        SchemeInstabilityError
    """
    if noise is None:
        noise = np.zeros_like(state.u) if rng is None else rng.standard_normal(state.u.shape)
    u_new, increment = _step(state.u, grid, noise, blowup)
    assert np.all(u_new >= 0), "field went negative"
    return SheState(u_new, state.eta_mass + increment, state.time + grid.dt)


@dataclass
class SheRunResult:
    """
    Args:
        state (SheState): final state.
        eta_record (np.ndarray): reflection mass per time bin and cell, bins on the first axis.
        bin_edges (np.ndarray): time bin edges.
        times (np.ndarray): recording times of the observables.
        observed (Dict): per test function, arrays ``value`` (``⟨u_t, φ⟩``), and the cumulative
          ``drift``, ``noise`` and ``eta`` integrals of the weak form, one row per recording time.
        max_residual (float): largest per-step weak-form residual relative to its terms.
        support_defect (float): largest ``Σ u_post η_increment`` over the steps.
    """

    state: SheState
    eta_record: np.ndarray
    bin_edges: np.ndarray
    times: np.ndarray
    observed: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)
    max_residual: float = 0.0
    support_defect: float = 0.0


def she_run(
    u0: np.ndarray,
    horizon: float,
    grid: SheGrid,
    rng: Union[RngStream, np.random.Generator, int, None] = None,
    observers: Sequence[TestFunction] = (),
    eta_bins: int = 1,
    observe_at: Optional[float] = None,
    noise: bool = True,
    max_records: int = 1000,
    blowup: float = 1e6,
    use_tqdm: bool = False,
) -> SheRunResult:
    """
    Runs the scheme from ``u0`` up to ``horizon``, with ``dt`` shrunk so that a whole number of
    steps fits.

    Args:
        u0 (np.ndarray): nonnegative initial field vanishing at 0, optionally with replica axes.
        horizon (float): final time.
        grid (SheGrid): discretization.
        rng: noise source.
        observers (Sequence[TestFunction]): test functions with ``φ(0) = 0`` whose weak-form terms
          are recorded.
        eta_bins (int): number of time bins of the reflection record. Defaults to 1.
        observe_at (float): position that will be observed; warns when it sits within ``2√t`` of
          ``x_max``.
        noise (bool): drive with white noise. Defaults to True.
        max_records (int): maximum number of recorded observer rows. Defaults to 1000.
        blowup (float): instability threshold on ``|u|``. Defaults to 1e6.
        use_tqdm (bool): show a progress bar. Defaults to False.

    Returns:
        SheRunResult
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if observe_at is not None and observe_at + 2 * math.sqrt(horizon) > grid.x_max:
        warnings.warn(
            f"Observation point {observe_at} lies within 2*sqrt(t) of x_max = {grid.x_max}; "
            "the Neumann boundary may bias the result",
            RuntimeWarning,
        )

    # a zero horizon takes no step and returns the initial field
    n_steps = max(1, int(math.ceil(horizon / grid.dt - 1e-9))) if horizon > 0 else 0
    if n_steps:
        grid = replace(grid, dt=horizon / n_steps)
    gen = as_generator(rng)
    state = SheState(np.array(u0, dtype=np.float64, copy=True))
    assert state.u.shape[-1] == grid.n, "initial field does not match the grid"

    stride = max(1, n_steps // max_records)
    n_rec = n_steps // stride + 1
    x = grid.x
    phis = {}
    for i, phi in enumerate(observers):
        if not phi.vanishes_at_zero:
            raise ValueError("observer test functions must vanish at 0")
        w = phi(x)
        lap_w = np.zeros_like(w)
        lap_w[1:-1] = (w[2:] - 2 * w[1:-1] + w[:-2]) / grid.dx**2
        phis[f"{phi.name}_{i}"] = (w, lap_w)

    batch = state.u.shape[:-1]
    observed = {
        key: {k: np.zeros((n_rec,) + batch) for k in ("value", "drift", "noise", "eta")}
        for key in phis
    }
    running = {key: {k: np.zeros(batch) for k in ("drift", "noise", "eta")} for key in phis}
    for key, (w, _) in phis.items():
        observed[key]["value"][0] = state.u @ w * grid.dx

    eta_record = np.zeros((eta_bins,) + state.u.shape)
    bin_edges = np.linspace(0, horizon, eta_bins + 1)
    max_residual = 0.0
    support_defect = 0.0
    amplitude = math.sqrt(2 * grid.dt / grid.dx)

    logging.info(f"Running the reflected SHE scheme for {n_steps} steps on {grid.n} cells")
    for step in _optional_tqdm(range(1, n_steps + 1), use_tqdm, total=n_steps, desc="SHE"):
        xi = gen.standard_normal(state.u.shape) if noise else np.zeros_like(state.u)
        u_old = state.u
        u_new, increment = _step(u_old, grid, xi, blowup)

        support_defect = max(support_defect, float(np.abs(u_new * increment).sum()))
        bin_idx = min(int((step - 0.5) * eta_bins / n_steps), eta_bins - 1)
        eta_record[bin_idx] += increment

        for key, (w, lap_w) in phis.items():
            before = u_old @ w * grid.dx
            after = u_new @ w * grid.dx
            drift = grid.dt * (u_old @ lap_w) * grid.dx
            noise_term = amplitude * (xi[..., 1:] @ w[1:]) * grid.dx
            eta_term = increment @ w
            scale = np.abs(before) + np.abs(after) + np.abs(drift) + np.abs(noise_term) + np.abs(eta_term)
            with np.errstate(divide="ignore", invalid="ignore"):
                rel = np.where(scale > 0, np.abs(after - before - drift - noise_term - eta_term) / scale, 0.0)
            max_residual = max(max_residual, float(np.max(rel)))

            running[key]["drift"] += drift
            running[key]["noise"] += noise_term
            running[key]["eta"] += eta_term
            if step % stride == 0:
                row = step // stride
                observed[key]["value"][row] = after
                for k in ("drift", "noise", "eta"):
                    observed[key][k][row] = running[key][k]

        state = SheState(u_new, state.eta_mass + increment, state.time + grid.dt)

    times = grid.dt * stride * np.arange(n_rec)
    return SheRunResult(state, eta_record, bin_edges, times, observed, max_residual, support_defect)
