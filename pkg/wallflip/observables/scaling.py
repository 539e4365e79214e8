"""
Diffusively rescaled observables of a simulated interface.

With space scaled by ``ε``, time by ``ε^2`` and heights by ``√ε``, every term of the semi-discrete
equation tested against ``φ`` is a weighted sum over sites of a piecewise-constant function of
time. ``_replay_features`` walks through an :class:`EventHistory` once, updating the running sums
around each flip in ``O(1)`` and integrating them exactly between events.

Times passed to the public functions are scaled times ``t``; histories are kept in unscaled time
``t / ε^2``.
"""

import logging
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from numba import njit

from ..dynamics.interface import InterfaceState
from ..dynamics.simulate import EventHistory
from ..utils.utils import TestFunction


__all__ = [
    "WindowViolation",
    "QuadratureError",
    "RescaledInterface",
    "rescale",
    "window_margin",
    "required_sites",
    "check_window",
    "hat_weights",
    "DiscreteNoisePath",
    "noise_path",
    "bracket",
    "ReflectionMeasure",
    "reflection_measure",
    "support_identity",
    "ErrorTerm",
    "inner_product_mismatch_bound",
    "laplacian_mismatch_bound",
    "error_term",
    "semidiscrete_residual",
    "observable_row",
    "interpolation_gap",
    "time_interpolated",
    "increment_norms",
    "increment_scaling",
]


class WindowViolation(ValueError):
    """A test function reaches too close to the truncation boundary of the lattice."""


class QuadratureError(RuntimeError):
    """Quadrature refinement did not settle; carries the last two values compared."""

    def __init__(self, coarse: float, fine: float):
        super().__init__(f"quadrature refinement failed: coarse value {coarse!r}, fine value {fine!r}")
        self.coarse = coarse
        self.fine = fine


@dataclass
class RescaledInterface:
    """
    ``h^ε(εk) = √ε h(k)`` on the grid ``εk, k = 0..L+1``, linearly interpolated in between.
    With ``rho`` set, ``g^ε(x) = e^{-ρx} h^ε(x)`` is available through :meth:`g`.
    """

    epsilon: float
    values: np.ndarray
    rho: Optional[float] = None

    @property
    def x(self) -> np.ndarray:
        return self.epsilon * np.arange(len(self.values))

    def __call__(self, x):
        return np.interp(x, self.x, self.values)

    def weighted(self) -> np.ndarray:
        """Grid values of ``g^ε``."""
        if self.rho is None:
            raise ValueError("exponential weight rho is not set")
        return np.exp(-self.rho * self.x) * self.values

    def g(self, x):
        if self.rho is None:
            raise ValueError("exponential weight rho is not set")
        return np.exp(-self.rho * np.asarray(x)) * self(x)


def rescale(
    snapshot: Union[InterfaceState, EventHistory, np.ndarray],
    epsilon: float,
    t: Optional[float] = None,
    rho: Optional[float] = None,
) -> RescaledInterface:
    """
    Args:
        snapshot: a state, a raw height array, or a history together with a scaled time ``t``.
        epsilon (float): scale in ``(0, 1]``.
        t (float): scaled time, required for histories.
        rho (float): optional exponential weight.
    """
    assert 0 < epsilon <= 1, "epsilon must lie in (0, 1]"
    if isinstance(snapshot, EventHistory):
        if t is None:
            raise ValueError("a scaled time is needed to rescale a history")
        snapshot = snapshot.state_at(_unscaled(snapshot, t, epsilon))
    heights = snapshot.heights if isinstance(snapshot, InterfaceState) else np.asarray(snapshot)
    return RescaledInterface(epsilon, np.sqrt(epsilon) * heights.astype(np.float64), rho)


def _unscaled(history: EventHistory, t: float, epsilon: float) -> float:
    u = t / epsilon**2
    if u > history.horizon and math.isclose(u, history.horizon, rel_tol=1e-9):
        u = history.horizon
    if not history.t0 <= u <= history.horizon:
        raise ValueError(
            f"scaled time {t} is outside the history [{history.t0 * epsilon**2}, "
            f"{history.horizon * epsilon**2}]"
        )
    return u


def window_margin(horizon: float) -> float:
    """Default margin ``2 √T`` for a scaled horizon ``T``."""
    return 2 * math.sqrt(max(horizon, 0.0))


def required_sites(epsilon: float, A: float, horizon: float, margin: Optional[float] = None) -> int:
    """Smallest ``L`` satisfying the window rule ``εL >= A + margin``, plus one site."""
    margin = window_margin(horizon) if margin is None else margin
    return int(math.ceil((A + margin) / epsilon)) + 1


def check_window(
    epsilon: float, L: int, A: float, horizon: float, margin: Optional[float] = None
):
    """
    Enforces the window rule ``εL >= A + margin`` for a test function supported in ``[0, A]``
    observed up to scaled time ``horizon``.

    Raises:
        WindowViolation
    """
    margin = window_margin(horizon) if margin is None else margin
    if epsilon * L < A + margin:
        raise WindowViolation(
            f"window rule eps*L >= A + margin violated: {epsilon}*{L} = {epsilon * L:.6g} < "
            f"{A:.6g} + {margin:.6g}"
        )


def hat_weights(
    f: Callable, epsilon: float, n_nodes: int, tol: float = 1e-8, max_doublings: int = 12
) -> np.ndarray:
    """
    ``∫ hat_k(x) f(x) dx`` for the hat functions of the grid ``εk, k < n_nodes``, so that
    ``Σ_k v_k w_k`` is the exact integral of ``f`` against the linear interpolation of ``v``.

    Each cell is integrated with composite Simpson rules, doubling the number of panels until two
    successive results agree to ``tol`` relative to the largest weight.

    Raises:
        QuadratureError: if ``max_doublings`` refinements do not settle.
    """
    cells = np.arange(n_nodes - 1)

    def simpson(m):
        lam = np.linspace(0, 1, m + 1)
        coef = np.ones(m + 1)
        coef[1:-1:2] = 4
        coef[2:-1:2] = 2
        coef /= 3 * m
        fx = f(epsilon * (cells[:, None] + lam[None, :]))
        w = np.zeros(n_nodes)
        w[:-1] += epsilon * (fx * (coef * (1 - lam))).sum(axis=1)
        w[1:] += epsilon * (fx * (coef * lam)).sum(axis=1)
        return w

    prev = simpson(2)
    for i in range(max_doublings):
        cur = simpson(2 ** (i + 2))
        diff = np.abs(cur - prev)
        if diff.max() <= tol * np.abs(cur).max():
            return cur
        prev = cur

    worst = int(np.argmax(diff))
    raise QuadratureError(float(prev[worst]), float(cur[worst]))


@njit(cache=True)
def _site_terms(h, k):
    lap = h[k + 1] + h[k - 1] - 2 * h[k]
    corner = 1.0 if lap != 0 else 0.0
    allowed = lap if h[k] + lap >= 0 else 0
    blocked = 1.0 if (h[k] == 1 and h[k - 1] == 0 and h[k + 1] == 0) else 0.0
    return float(lap), float(allowed), corner, blocked


@njit(cache=True)
def _replay_features(h0, times, sites, deltas, outcomes, t0, weights, queries, n_window):
    m, n_pts = weights.shape
    L = n_pts - 2
    nq = queries.shape[0]
    h = h0.copy()

    int_h = np.zeros((m, nq))
    int_lap = np.zeros((m, nq))
    int_allowed = np.zeros((m, nq))
    int_corner = np.zeros((m, nq))
    int_blocked = np.zeros((m, nq))
    int_blocked_h = np.zeros((m, nq))
    jump = np.zeros((m, nq))
    max_jump = np.zeros(m)
    sup_h = np.zeros(nq)

    s_h = np.zeros(m)
    s_lap = np.zeros(m)
    s_allowed = np.zeros(m)
    s_corner = np.zeros(m)
    s_blocked = np.zeros(m)
    s_blocked_h = np.zeros(m)

    a_h = np.zeros(m)
    a_lap = np.zeros(m)
    a_allowed = np.zeros(m)
    a_corner = np.zeros(m)
    a_blocked = np.zeros(m)
    a_blocked_h = np.zeros(m)
    a_jump = np.zeros(m)

    for j in range(m):
        for k in range(n_pts):
            s_h[j] += weights[j, k] * h[k]
        for k in range(1, L + 1):
            lap, allowed, corner, blocked = _site_terms(h, k)
            s_lap[j] += weights[j, k] * lap
            s_allowed[j] += weights[j, k] * allowed
            s_corner[j] += weights[j, k] * corner
            s_blocked[j] += weights[j, k] * blocked
            s_blocked_h[j] += weights[j, k] * blocked * h[k]

    h_max = 0
    for k in range(min(n_window, n_pts - 1) + 1):
        h_max = max(h_max, h[k])

    t = t0
    e = 0
    n_events = times.shape[0]
    for q in range(nq):
        tq = queries[q]
        while e < n_events and times[e] <= tq:
            if outcomes[e] == 0:
                dt = times[e] - t
                for j in range(m):
                    a_h[j] += s_h[j] * dt
                    a_lap[j] += s_lap[j] * dt
                    a_allowed[j] += s_allowed[j] * dt
                    a_corner[j] += s_corner[j] * dt
                    a_blocked[j] += s_blocked[j] * dt
                    a_blocked_h[j] += s_blocked_h[j] * dt
                t = times[e]

                n = sites[e]
                d = deltas[e]
                lo = max(1, n - 1)
                hi = min(L, n + 1)
                for sign in (-1.0, 1.0):
                    if sign > 0:
                        h[n] += d
                    for k in range(lo, hi + 1):
                        lap, allowed, corner, blocked = _site_terms(h, k)
                        for j in range(m):
                            w = sign * weights[j, k]
                            s_lap[j] += w * lap
                            s_allowed[j] += w * allowed
                            s_corner[j] += w * corner
                            s_blocked[j] += w * blocked
                            s_blocked_h[j] += w * blocked * h[k]

                for j in range(m):
                    jmp = weights[j, n] * d
                    a_jump[j] += jmp
                    s_h[j] += jmp
                    if abs(jmp) > max_jump[j]:
                        max_jump[j] = abs(jmp)

                if n <= n_window and h[n] > h_max:
                    h_max = h[n]
            e += 1

        dt = tq - t
        for j in range(m):
            a_h[j] += s_h[j] * dt
            a_lap[j] += s_lap[j] * dt
            a_allowed[j] += s_allowed[j] * dt
            a_corner[j] += s_corner[j] * dt
            a_blocked[j] += s_blocked[j] * dt
            a_blocked_h[j] += s_blocked_h[j] * dt
            int_h[j, q] = a_h[j]
            int_lap[j, q] = a_lap[j]
            int_allowed[j, q] = a_allowed[j]
            int_corner[j, q] = a_corner[j]
            int_blocked[j, q] = a_blocked[j]
            int_blocked_h[j, q] = a_blocked_h[j]
            jump[j, q] = a_jump[j]
        sup_h[q] = h_max
        t = tq

    return (
        int_h,
        int_lap,
        int_allowed,
        int_corner,
        int_blocked,
        int_blocked_h,
        jump,
        max_jump,
        sup_h,
    )


_FEATURES = (
    "int_h",
    "int_lap",
    "int_allowed",
    "int_corner",
    "int_blocked",
    "int_blocked_h",
    "jump",
    "max_jump",
    "sup_h",
)


def _features(
    history: EventHistory, weights: np.ndarray, queries: np.ndarray, n_window: int = 0
) -> Dict[str, np.ndarray]:
    """
    Time integrals from ``history.t0`` to each unscaled query of the weighted sums over sites of
    the height, Laplacian, allowed Laplacian, corner and blocked indicators, with the accumulated
    weighted flip jumps and the running sup of the height on the window.
    """
    queries = np.asarray(queries, dtype=np.float64)
    assert np.all(np.diff(queries) >= 0), "query times must be sorted"
    assert queries[0] >= history.t0 and queries[-1] <= history.horizon, "query outside history"
    weights = np.ascontiguousarray(np.atleast_2d(weights), dtype=np.float64)
    assert weights.shape[1] == history.L + 2, "one weight per site 0..L+1"

    out = _replay_features(
        history.h0,
        history.times,
        history.sites,
        history.deltas,
        history.outcomes,
        history.t0,
        weights,
        queries,
        n_window,
    )
    return dict(zip(_FEATURES, out))


def _grid(history: EventHistory, epsilon: float) -> np.ndarray:
    return epsilon * np.arange(history.L + 2)


def _check_phi(history: EventHistory, phi: TestFunction, epsilon: float, margin: Optional[float]):
    if not phi.vanishes_at_zero:
        raise ValueError("the test function must vanish at 0")
    check_window(
        epsilon, history.L, phi.A, (history.horizon - history.t0) * epsilon**2, margin=margin
    )


@dataclass
class DiscreteNoisePath:
    """
    ``t -> W^ε_t(φ)`` as a jump part (flip contributions) plus a continuous, piecewise-linear
    compensator known exactly at the ``knots``.
    """

    epsilon: float
    knots: np.ndarray
    compensator: np.ndarray
    jump_times: np.ndarray
    jumps: np.ndarray

    def jump_part(self, t):
        idx = np.searchsorted(self.jump_times, t, side="right")
        return np.concatenate([[0.0], np.cumsum(self.jumps)])[idx]

    def compensator_part(self, t):
        return np.interp(t, self.knots, self.compensator)

    def __call__(self, t):
        return self.jump_part(t) + self.compensator_part(t)

    @property
    def max_jump(self) -> float:
        return float(np.abs(self.jumps).max()) if len(self.jumps) else 0.0


def noise_path(
    history: EventHistory, phi: TestFunction, epsilon: float, margin: Optional[float] = None
) -> DiscreteNoisePath:
    """
    Discrete martingale ``W^ε(φ)``: jumps ``(ε/√2) Δ^ε h^ε_{s-}(x) φ(x)`` at every allowed flip,
    compensated by ``-(ε/√2) ∫ Σ_x Δ^ε h^ε_s(x) 1{allowed} φ(x) ε^{-2} ds``.

    Raises:
        WindowViolation
    """
    _check_phi(history, phi, epsilon, margin)
    w = phi(_grid(history, epsilon))
    flips = history.flips
    flip_times = history.times[flips]

    knots = np.concatenate([[history.t0], flip_times, [history.horizon]])
    feats = _features(history, w, knots)

    scale = epsilon**1.5 / math.sqrt(2)
    jumps = scale * w[history.sites[flips]] * history.deltas[flips]
    bound = math.sqrt(2) * epsilon**1.5 * np.abs(w).max()
    assert np.all(np.abs(jumps) <= bound * (1 + 1e-12)), "noise jump exceeds √2 ε^{3/2} ‖φ‖_∞"

    return DiscreteNoisePath(
        epsilon,
        knots * epsilon**2,
        -scale * feats["int_allowed"][0],
        flip_times * epsilon**2,
        jumps,
    )


def bracket(
    history: EventHistory, phi: TestFunction, epsilon: float, t: float
) -> Tuple[float, float]:
    """
    ``A1 = ½ Σ_x ∫_0^t (Δ^ε h^ε_s(x))^2 φ(x)^2 ds`` and ``A2``, the same restricted to blocked
    sites. The predictable bracket of ``W^ε(φ)`` is ``A1 - A2``.
    """
    u = _unscaled(history, t, epsilon)
    w2 = phi(_grid(history, epsilon)) ** 2
    feats = _features(history, w2, [history.t0, u])
    # (Δ^ε h)^2 = 4ε at corners
    return 2 * epsilon**3 * feats["int_corner"][0, 1], 2 * epsilon**3 * feats["int_blocked"][0, 1]


@njit(cache=True)
def _is_blocked(h, k):
    return h[k] == 1 and h[k - 1] == 0 and h[k + 1] == 0


@njit(cache=True)
def _blocked_episodes(h0, times, sites, deltas, outcomes, t0, horizon):
    h = h0.copy()
    L = h.shape[0] - 2
    n_flips = 0
    for e in range(outcomes.shape[0]):
        if outcomes[e] == 0:
            n_flips += 1

    cap = L + 3 * n_flips + 1
    ep_site = np.empty(cap, dtype=np.int64)
    ep_start = np.empty(cap)
    ep_end = np.empty(cap)
    since = np.full(L + 2, -1.0)
    before = np.zeros(3, dtype=np.bool_)

    for k in range(1, L + 1):
        if _is_blocked(h, k):
            since[k] = t0

    count = 0
    for e in range(times.shape[0]):
        if outcomes[e] != 0:
            continue
        n = sites[e]
        lo = max(1, n - 1)
        hi = min(L, n + 1)
        for k in range(lo, hi + 1):
            before[k - lo] = _is_blocked(h, k)
        h[n] += deltas[e]
        for k in range(lo, hi + 1):
            now = _is_blocked(h, k)
            if before[k - lo] and not now:
                ep_site[count] = k
                ep_start[count] = since[k]
                ep_end[count] = times[e]
                count += 1
                since[k] = -1.0
            elif now and not before[k - lo]:
                since[k] = times[e]

    for k in range(1, L + 1):
        if since[k] >= 0:
            ep_site[count] = k
            ep_start[count] = since[k]
            ep_end[count] = horizon
            count += 1

    return ep_site[:count], ep_start[:count], ep_end[:count]


@njit(cache=True)
def _bin_episodes(ep_site, ep_start, ep_end, t0, bin_width, n_bins, n_sites):
    occupation = np.zeros((n_bins, n_sites))
    for i in range(ep_site.shape[0]):
        a = ep_start[i]
        b = ep_end[i]
        k = min(int((a - t0) / bin_width), n_bins - 1)
        while a < b:
            edge = t0 + (k + 1) * bin_width if k < n_bins - 1 else b
            seg = min(b, edge)
            occupation[k, ep_site[i]] += seg - a
            a = seg
            k += 1
    return occupation


@dataclass
class ReflectionMeasure:
    """
    Discrete reflection measure binned in time: ``mass[i, k]`` is the ``η^ε`` mass of site
    ``x = εk`` during ``[bin_edges[i], bin_edges[i+1])`` (scaled times).
    """

    epsilon: float
    bin_edges: np.ndarray
    mass: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.epsilon * np.arange(self.mass.shape[1])

    def total_mass(self) -> float:
        return float(self.mass.sum())

    def integrate(self, psi: Callable) -> float:
        """``∫∫ ψ(x) η^ε(dt, dx)``."""
        return float(self.mass.sum(axis=0) @ psi(self.x))

    def integrate_time_space(self, psi: Callable) -> float:
        """``∫∫ ψ(t, x) η^ε(dt, dx)`` with ``ψ`` evaluated at bin midpoints."""
        mid = (self.bin_edges[:-1] + self.bin_edges[1:]) / 2
        return float((self.mass * psi(mid[:, None], self.x[None, :])).sum())

    def to_csv(self, path: str):
        bins, sites = np.nonzero(self.mass)
        np.savetxt(
            path,
            np.column_stack(
                [self.x[sites], self.bin_edges[bins], self.bin_edges[bins + 1], self.mass[bins, sites]]
            ),
            delimiter=",",
            header="x,t_start,t_end,mass",
            comments="",
            fmt="%.17g",
        )


def reflection_measure(
    history: EventHistory, epsilon: float, bin_width: Optional[float] = None
) -> ReflectionMeasure:
    """
    ``η^ε(dt, dx) = (2/√ε) Σ_k 1{site k blocked} δ_{εk}(dx) dt``, accumulated exactly from the
    blocked episodes of the history into time bins of scaled width ``bin_width`` (default ``ε^2``).
    """
    bin_width = epsilon**2 if bin_width is None else bin_width
    if bin_width <= 0:
        raise ValueError("bin width must be positive")

    bw = bin_width / epsilon**2
    duration = history.horizon - history.t0
    n_bins = max(1, int(math.ceil(duration / bw - 1e-12)))

    episodes = _blocked_episodes(
        history.h0,
        history.times,
        history.sites,
        history.deltas,
        history.outcomes,
        history.t0,
        history.horizon,
    )
    occupation = _bin_episodes(*episodes, history.t0, bw, n_bins, history.L + 2)

    edges = (history.t0 + bw * np.arange(n_bins + 1)) * epsilon**2
    edges[-1] = history.horizon * epsilon**2
    # dt in scaled time is ε^2 times the unscaled occupation
    return ReflectionMeasure(epsilon, edges, 2 / math.sqrt(epsilon) * epsilon**2 * occupation)


def support_identity(
    history: EventHistory,
    psi: Callable,
    epsilon: float,
    bin_width: Optional[float] = None,
) -> Tuple[float, float]:
    """
    Both sides of ``∫ x ψ(x) h^ε dη^ε = √ε ∫ x ψ(x) dη^ε``. The left side is accumulated from the
    heights at blocked sites during the replay, the right side from the binned measure.
    """
    x = _grid(history, epsilon)
    w = x * psi(x)
    feats = _features(history, w, [history.t0, history.horizon])
    # (2/√ε) ε^2 dt-weight times h^ε = √ε h
    lhs = 2 * epsilon**2 * feats["int_blocked_h"][0, 1]
    rhs = math.sqrt(epsilon) * reflection_measure(history, epsilon, bin_width).integrate(
        lambda y: y * psi(y)
    )
    return float(lhs), float(rhs)


@dataclass
class ErrorTerm:
    """The six pieces of ``R^ε_t(φ)``, their sum, and the mismatch bound it should respect."""

    discrete_t: float
    continuum_t: float
    discrete_0: float
    continuum_0: float
    drift: float
    laplacian: float
    value: float
    bound: float

    def to_dict(self) -> Dict:
        return asdict(self)


def _sup_window(h: Union[RescaledInterface, np.ndarray], A: float, epsilon: float) -> float:
    values = h.values if isinstance(h, RescaledInterface) else np.asarray(h, dtype=np.float64)
    n = min(len(values) - 1, int(math.floor(A / epsilon)))
    return float(np.abs(values[: n + 1]).max())


def inner_product_mismatch_bound(
    h: Union[RescaledInterface, np.ndarray], phi: TestFunction, epsilon: float
) -> float:
    """``ε A ‖h^ε‖_{∞,[0,A]} ‖φ'‖_∞`` bounding ``|⟨h^ε, φ⟩_ε - ⟨h^ε, φ⟩|``."""
    return epsilon * phi.A * _sup_window(h, phi.A, epsilon) * phi.sup(1)


def laplacian_mismatch_bound(
    h: Union[RescaledInterface, np.ndarray], phi: TestFunction, epsilon: float
) -> float:
    """``ε A ‖h^ε‖_{∞,[0,A]} ‖φ'''‖_∞`` bounding the drift mismatch per unit of scaled time."""
    return epsilon * phi.A * _sup_window(h, phi.A, epsilon) * phi.sup(3)


def observable_row(
    history: EventHistory,
    phi: TestFunction,
    epsilon: float,
    t: float,
    psi: Optional[Callable] = None,
    margin: Optional[float] = None,
) -> Dict[str, float]:
    """
    Every scaled observable at time ``t`` from a single replay: the terms of the semi-discrete
    equation, the noise, the bracket pieces, the reflection mass, the error term and both sides of
    the support identity (with ``x ψ(x)``, ``ψ ≡ 1`` by default).
    """
    _check_phi(history, phi, epsilon, margin)
    u = _unscaled(history, t, epsilon)
    x = _grid(history, epsilon)
    n_nodes = len(x)
    psi = psi or (lambda y: np.ones_like(y))

    weights = np.stack(
        [
            phi(x),
            phi(x) ** 2,
            hat_weights(phi, epsilon, n_nodes),
            hat_weights(lambda y: phi.derivative(y, 2), epsilon, n_nodes),
            np.ones(n_nodes),
            x * psi(x),
        ]
    )
    n_window = int(math.floor(phi.A / epsilon))
    f = _features(history, weights, [history.t0, u], n_window)

    # end-point pairings come from snapshots, not from the replayed jumps
    h_0 = history.state_at(history.t0).heights
    h_t = history.state_at(u).heights

    e15 = epsilon**1.5
    discrete_t = e15 * float(weights[0] @ h_t)
    discrete_0 = e15 * float(weights[0] @ h_0)
    drift = e15 * f["int_lap"][0, 1]
    noise = e15 / math.sqrt(2) * (f["jump"][0, 1] - f["int_allowed"][0, 1])
    eta_phi = 2 * e15 * f["int_blocked"][0, 1]

    lhs = discrete_t
    rhs = discrete_0 + drift + math.sqrt(2) * noise + eta_phi
    scale = abs(discrete_t) + abs(discrete_0) + abs(drift) + abs(math.sqrt(2) * noise) + abs(eta_phi)

    continuum_t = math.sqrt(epsilon) * float(weights[2] @ h_t)
    continuum_0 = math.sqrt(epsilon) * float(weights[2] @ h_0)
    laplacian = epsilon**2.5 * f["int_h"][3, 1]
    r_eps = discrete_t - continuum_t - discrete_0 + continuum_0 - drift + laplacian

    sup_h = math.sqrt(epsilon) * f["sup_h"][1]
    bound = epsilon * phi.A * sup_h * (2 * phi.sup(1) + t * phi.sup(3))

    return {
        "epsilon": epsilon,
        "t": t,
        "W": noise,
        "A1": 2 * epsilon**3 * f["int_corner"][1, 1],
        "A2": 2 * epsilon**3 * f["int_blocked"][1, 1],
        "eta_mass": 2 * e15 * f["int_blocked"][4, 1],
        "eta_phi": eta_phi,
        "drift": drift,
        "discrete_t": discrete_t,
        "discrete_0": discrete_0,
        "continuum_t": continuum_t,
        "continuum_0": continuum_0,
        "laplacian": laplacian,
        "residual": lhs - rhs,
        "residual_scale": scale,
        "R_eps": r_eps,
        "R_bound": bound,
        "max_jump": e15 / math.sqrt(2) * f["max_jump"][0],
        "support_lhs": 2 * epsilon**2 * f["int_blocked_h"][5, 1],
        "support_rhs": math.sqrt(epsilon) * 2 * e15 * f["int_blocked"][5, 1],
    }


def error_term(
    history: EventHistory,
    phi: TestFunction,
    epsilon: float,
    t: float,
    margin: Optional[float] = None,
    return_terms: bool = False,
) -> Union[float, ErrorTerm]:
    """
    ``R^ε_t(φ) = ⟨h_t, φ⟩_ε - ⟨h_t, φ⟩ - ⟨h_0, φ⟩_ε + ⟨h_0, φ⟩ - ∫_0^t ε^{-2} ⟨Δ^ε h_s, φ⟩_ε ds
    + ∫_0^t ⟨h_s, φ''⟩ ds``, with continuum inner products of the interpolated profile computed
    through :func:`hat_weights`.

    Args:
        history (EventHistory): simulated run.
        phi (TestFunction): test function with ``φ(0) = 0``, inside the window.
        epsilon (float): scale.
        t (float): scaled time.
        margin (float): window margin override.
        return_terms (bool): return the :class:`ErrorTerm` breakdown. Defaults to False.

    Raises:
        WindowViolation, QuadratureError
    """
    row = observable_row(history, phi, epsilon, t, margin=margin)
    if not return_terms:
        return row["R_eps"]
    return ErrorTerm(
        row["discrete_t"],
        row["continuum_t"],
        row["discrete_0"],
        row["continuum_0"],
        row["drift"],
        row["laplacian"],
        row["R_eps"],
        row["R_bound"],
    )


def semidiscrete_residual(
    history: EventHistory,
    phi: TestFunction,
    epsilon: float,
    t: float,
    margin: Optional[float] = None,
    relative: bool = False,
) -> float:
    """
    ``⟨h_t, φ⟩_ε - ⟨h_0, φ⟩_ε - ∫_0^t ε^{-2} ⟨Δ^ε h_s, φ⟩_ε ds - √2 W^ε_t(φ) - ∫∫ φ dη^ε``,
    which vanishes up to rounding. With ``relative``, divided by the sum of the terms' magnitudes.
    """
    row = observable_row(history, phi, epsilon, t, margin=margin)
    if not relative:
        return row["residual"]
    return abs(row["residual"]) / row["residual_scale"] if row["residual_scale"] else 0.0


@njit(cache=True)
def _interpolation_gap(h0, times, sites, deltas, outcomes, t0, limit, n_units, weights):
    h = h0.copy()
    n_pts = h.shape[0]
    snaps = np.zeros((n_units + 1, n_pts), dtype=np.int64)
    snaps[0] = h
    e = 0
    for j in range(1, n_units + 1):
        while e < times.shape[0] and times[e] <= t0 + j:
            if outcomes[e] == 0:
                h[sites[e]] += deltas[e]
            e += 1
        snaps[j] = h

    h = h0.copy()
    gap = 0.0
    for e in range(times.shape[0]):
        if times[e] > limit:
            break
        if outcomes[e] != 0:
            continue
        n = sites[e]
        j = int(math.floor(times[e] - t0))
        lam = times[e] - t0 - j
        if j >= n_units:
            break
        interp = (1 - lam) * snaps[j, n] + lam * snaps[j + 1, n]
        before = h[n]
        after = before + deltas[e]
        gap = max(gap, weights[n] * max(abs(interp - before), abs(interp - after)))
        h[n] = after
    return gap


def interpolation_gap(history: EventHistory, epsilon: float, T: float, rho: float = 1.0) -> float:
    """
    ``sup_{t <= T} sup_x |ḡ^ε_t(x) - g^ε_t(x)|`` where ``ḡ^ε`` interpolates the path linearly
    between integer unscaled times and ``g^ε = e^{-ρx} h^ε``. The spatial sup is taken on the grid.
    Only complete unit intervals inside the history are used.
    """
    T_u = T / epsilon**2
    n_units = int(math.ceil(T_u - 1e-9))
    if history.t0 + n_units > history.horizon:
        n_units = int(math.floor(history.horizon - history.t0))
    if n_units <= 0:
        return 0.0

    weights = math.sqrt(epsilon) * np.exp(-rho * _grid(history, epsilon))
    limit = history.t0 + min(T_u, n_units)
    return float(
        _interpolation_gap(
            history.h0,
            history.times,
            history.sites,
            history.deltas,
            history.outcomes,
            history.t0,
            limit,
            n_units,
            weights,
        )
    )


def time_interpolated(history: EventHistory, u: float) -> np.ndarray:
    """Heights ``(1 - λ) h_{⌊u⌋} + λ h_{⌊u⌋+1}`` at unscaled time ``u`` (counted from ``t0``)."""
    k = math.floor(u)
    lam = u - k
    lower = history.state_at(history.t0 + k).heights.astype(np.float64)
    if lam == 0:
        return lower
    upper = history.state_at(history.t0 + k + 1).heights.astype(np.float64)
    return (1 - lam) * lower + lam * upper


def increment_norms(
    history: EventHistory,
    epsilon: float,
    lags: Sequence[float],
    s: float = 0.0,
    s0: float = 1.0,
    rho: float = 1.0,
    Z: Optional[float] = None,
) -> np.ndarray:
    """``‖ḡ^ε_{s+τ} - ḡ^ε_s‖_{H^{-s0}}`` for each scaled lag ``τ``."""
    from .norms import norm_h_neg_s0

    weight = math.sqrt(epsilon) * np.exp(-rho * _grid(history, epsilon))
    base = weight * time_interpolated(history, s / epsilon**2)
    out = []
    for lag in lags:
        moved = weight * time_interpolated(history, (s + lag) / epsilon**2)
        out.append(norm_h_neg_s0(moved - base, epsilon, s0=s0, Z=Z))
    return np.array(out)


def increment_scaling(
    histories: Sequence[EventHistory],
    epsilon: float,
    lags: Sequence[float],
    s0: float = 1.0,
    rho: float = 1.0,
    s: float = 0.0,
) -> Tuple[float, float]:
    """
    Log-log slope of the replica mean of ``‖ḡ^ε_{s+τ} - ḡ^ε_s‖_{H^{-s0}}`` against ``τ``. Lags
    below ``ε^2`` sit in the linearised regime and are dropped with a warning.

    Returns:
        Tuple[float, float]: slope and standard error.
    """
    from ..evaluation.stats import loglog_slope

    if len(histories) < 2:
        raise ValueError("increment scaling needs at least 2 replicas")

    lags = np.asarray(lags, dtype=np.float64)
    kept = lags[lags >= epsilon**2]
    if len(kept) < len(lags):
        warnings.warn(f"Dropping {len(lags) - len(kept)} lags below eps^2 = {epsilon**2}", RuntimeWarning)
    if len(kept) < 4 or kept.max() < 10 * kept.min():
        raise ValueError("need at least 4 lags spanning a decade")

    norms = np.array([increment_norms(h, epsilon, kept, s=s, s0=s0, rho=rho) for h in histories])
    logging.info(f"Increment norms over {len(histories)} replicas at lags {kept.tolist()}")
    return loglog_slope(kept, norms.mean(axis=0))
