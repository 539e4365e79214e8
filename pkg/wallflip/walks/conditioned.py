"""
Samplers, exact oracles and couplings for the simple random walk conditioned to stay
nonnegative, i.e. the Doob transform of the simple walk by ``x -> x + 1``.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from numba import njit
from scipy.special import gammaln

from ..dynamics.interface import InterfaceState
from ..dynamics.simulate import as_generator
from ..utils.utils import TestFunction


__all__ = [
    "WEDGE",
    "VEE",
    "FLAT",
    "transition_prob",
    "WalkPath",
    "sample_pi_path",
    "sample_pi_paths",
    "sample_stationary_state",
    "ExactPmf",
    "exact_pmf",
    "closed_form_pmf",
    "exact_pmf_rational",
    "enumerate_paths",
    "doob_weight",
    "equal_weight_check",
    "CoupledPair",
    "sample_coupled_pair",
    "sample_coupled_paths",
    "coupling_violations",
    "corner_density_statistic",
    "occupation_statistic",
    "MomentRow",
    "moment_growth_check",
    "stochastic_domination_check",
]


# symbols driving the two-step coupling
WEDGE = 0
VEE = 1
FLAT = 2


def transition_prob(k: Union[int, np.ndarray], direction: Union[str, int] = "up"):
    """
    One-step transition probabilities of the conditioned walk from height ``k``.

    Args:
        k (Union[int, np.ndarray]): current height(s), nonnegative.
        direction (Union[str, int]): ``"up"``/``+1`` or ``"down"``/``-1``.

    Returns:
        ``(k + 2) / (2 (k + 1))`` for up and ``k / (2 (k + 1))`` for down.
    """
    k_arr = np.asarray(k, dtype=np.float64)
    if np.any(k_arr < 0):
        raise ValueError("height must be nonnegative")

    if direction in ("up", 1):
        p = (k_arr + 2) / (2 * (k_arr + 1))
    elif direction in ("down", -1):
        p = k_arr / (2 * (k_arr + 1))
    else:
        raise ValueError(f"unknown direction {direction}")

    return float(p) if np.ndim(k) == 0 else p


@dataclass
class WalkPath:
    """Path ``X_0..X_N`` with ``X_0 = 0``, unit steps and values in ℕ."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        assert self.values.ndim == 1 and len(self.values) >= 1, "a path needs at least X_0"
        if self.values[0] != 0:
            raise ValueError("a walk path starts at 0")
        if np.any(np.abs(np.diff(self.values)) != 1):
            raise ValueError("walk steps must be +1 or -1")
        if np.any(self.values < 0):
            raise ValueError("walk path leaves ℕ")

    @property
    def n(self) -> int:
        return len(self.values) - 1

    def __len__(self) -> int:
        return len(self.values)


@njit(cache=True)
def _pi_paths(u):
    size, n = u.shape
    out = np.zeros((size, n + 1), dtype=np.int64)
    for r in range(size):
        x = 0
        for i in range(n):
            if u[r, i] < (x + 2) / (2.0 * (x + 1)):
                x += 1
            else:
                x -= 1
            out[r, i + 1] = x
    return out


def sample_pi_paths(n: int, size: int, rng=None) -> np.ndarray:
    """``size`` independent paths of length ``n`` under π, as an array of shape ``[size, n + 1]``."""
    assert n >= 0, "path length must be nonnegative"
    gen = as_generator(rng)
    return _pi_paths(gen.random((size, n)))


def sample_pi_path(n: int, rng=None) -> WalkPath:
    """First ``n`` steps of the conditioned walk started at 0."""
    return WalkPath(sample_pi_paths(n, 1, rng)[0])


def sample_stationary_state(L: int, rng=None, time: float = 0.0) -> InterfaceState:
    """Interface on sites ``0..L+1`` drawn from π, the reversible law of the dynamics."""
    return InterfaceState(sample_pi_paths(L + 1, 1, rng)[0], time)


@dataclass
class ExactPmf:
    """Marginal law of ``X_n``: ``probabilities[k] = π(X_n = k)`` for ``k = 0..n``."""

    n: int
    probabilities: np.ndarray

    def __post_init__(self):
        assert len(self.probabilities) == self.n + 1, "one probability per height 0..n"
        total = math.fsum(self.probabilities)
        assert abs(total - 1) <= 1e-12, f"probabilities sum to {total}"
        off_parity = self.probabilities[(self.n + 1) % 2 :: 2]
        assert np.all(off_parity == 0), "mass outside the parity class of n"

    @property
    def heights(self) -> np.ndarray:
        return np.arange(self.n % 2, self.n + 1, 2)

    def as_dict(self) -> Dict[int, float]:
        return {int(k): float(self.probabilities[k]) for k in self.heights}

    def mean(self) -> float:
        return float(np.dot(np.arange(self.n + 1), self.probabilities))

    def to_csv(self, path: str):
        np.savetxt(
            path,
            np.column_stack([self.heights, self.probabilities[self.heights]]),
            delimiter=",",
            header="height,probability",
            comments="",
            fmt=["%d", "%.17g"],
        )


def exact_pmf(n: int) -> ExactPmf:
    """
    Law of ``X_n`` by forward recursion over the transition kernel, ``O(n^2)``.
    """
    assert n >= 0, "step index must be nonnegative"
    heights = np.arange(n + 1)
    up = transition_prob(heights, "up")
    down = transition_prob(heights, "down")

    p = np.zeros(n + 1)
    p[0] = 1.0
    for _ in range(n):
        new = np.zeros(n + 1)
        new[1:] += p[:-1] * up[:-1]
        new[:-1] += p[1:] * down[1:]
        p = new

    # renormalise with a compensated sum
    p /= math.fsum(p)
    return ExactPmf(n, p)


def closed_form_pmf(n: int) -> np.ndarray:
    """
    ``π(X_n = k) = (k + 1)^2 / (j + 1) * C(n, j) / 2^n`` with ``j = (n + k) / 2``: Doob weight
    times the ballot count of nonnegative paths ending at ``k``.
    """
    k = np.arange(n % 2, n + 1, 2)
    j = (n + k) // 2
    log_binom = gammaln(n + 1) - gammaln(j + 1) - gammaln(n - j + 1)
    p = np.zeros(n + 1)
    p[k] = np.exp(2 * np.log(k + 1) - np.log(j + 1) + log_binom - n * np.log(2))
    return p


def enumerate_paths(n: int) -> np.ndarray:
    """All nonnegative simple paths of length ``n`` from 0, shape ``[count, n + 1]``."""
    if n > 24:
        raise ValueError("exhaustive enumeration is limited to n <= 24")
    codes = np.arange(2**n, dtype=np.int64)[:, None]
    steps = 1 - 2 * ((codes >> np.arange(n)) & 1)
    paths = np.concatenate([np.zeros((2**n, 1), dtype=np.int64), np.cumsum(steps, axis=1)], axis=1)
    return paths[paths.min(axis=1) >= 0]


def doob_weight(path: Union[WalkPath, Sequence[int], np.ndarray], exact: bool = False):
    """
    π-weight ``(X_n + 1) 2^{-n}`` of the cylinder set fixed by ``path``.

    Paths leaving ℕ have weight 0; this is flagged with a ``RuntimeWarning``.

    Args:
        path: a walk path of length ``n`` starting at 0 with unit steps.
        exact (bool): return a ``Fraction`` instead of a float. Defaults to False.
    """
    values = path.values if isinstance(path, WalkPath) else np.asarray(path, dtype=np.int64)
    if values[0] != 0 or np.any(np.abs(np.diff(values)) != 1):
        raise ValueError("not a simple path from 0")

    n = len(values) - 1
    if np.any(values < 0):
        warnings.warn("path leaves ℕ, its π-weight is 0", RuntimeWarning)
        return Fraction(0) if exact else 0.0

    if exact:
        return Fraction(int(values[-1]) + 1, 2**n)
    return (int(values[-1]) + 1) / 2**n


def exact_pmf_rational(n: int) -> Dict[int, Fraction]:
    """Law of ``X_n`` in exact arithmetic, aggregated from the Doob weights of all paths."""
    if n > 16:
        raise ValueError("rational enumeration is limited to n <= 16")
    pmf: Dict[int, Fraction] = {}
    for path in enumerate_paths(n):
        end = int(path[-1])
        pmf[end] = pmf.get(end, Fraction(0)) + doob_weight(path, exact=True)
    return dict(sorted(pmf.items()))


def equal_weight_check(n: int, weight: Optional[Callable] = None) -> bool:
    """
    Exhaustively checks that ``weight`` is a probability on nonnegative paths of length ``n``
    and is unchanged by every interior corner flip that keeps the path nonnegative.

    Args:
        n (int): path length, at most 16.
        weight (Callable): path -> weight. Defaults to the exact Doob weight.
    """
    if n > 16:
        raise ValueError("exhaustive check is limited to n <= 16")
    if weight is None:

        def weight(p):
            return doob_weight(p, exact=True)

    paths = enumerate_paths(n)
    weights = [weight(p) for p in paths]

    if isinstance(weights[0], Fraction):
        if sum(weights) != 1:
            return False
    elif abs(math.fsum(weights) - 1) > 1e-12:
        return False

    for path, w in zip(paths, weights):
        for j in range(1, n):
            lap = path[j + 1] + path[j - 1] - 2 * path[j]
            if lap == 0 or path[j] + lap < 0:
                continue
            flipped = path.copy()
            flipped[j] += lap
            w_flipped = weight(flipped)
            if isinstance(w, Fraction):
                if w_flipped != w:
                    return False
            elif not math.isclose(w_flipped, w, rel_tol=1e-12, abs_tol=0.0):
                return False

    return True


@dataclass
class CoupledPair:
    """Conditioned walk ``X`` and simple walk ``S`` driven by the same two-step symbols."""

    x: WalkPath
    s: np.ndarray
    symbols: np.ndarray
    b: np.ndarray
    b_tilde: np.ndarray


@njit(cache=True)
def _coupled_paths(u_w, u_b, u_bt):
    size, half = u_w.shape
    x = np.zeros((size, 2 * half + 1), dtype=np.int64)
    s = np.zeros((size, 2 * half + 1), dtype=np.int64)
    w = np.zeros((size, half), dtype=np.int8)
    b = np.zeros((size, half), dtype=np.bool_)
    bt = np.zeros((size, half), dtype=np.bool_)

    for r in range(size):
        xv = 0
        sv = 0
        for i in range(half):
            if u_w[r, i] < 0.25:
                sym = 0
            elif u_w[r, i] < 0.5:
                sym = 1
            else:
                sym = 2
            # B_{n,k} with parameter (k + 3) / (2k + 2), equal to 1 at k = 1
            bb = u_b[r, i] < (xv + 3) / (2.0 * xv + 2)
            bbt = u_bt[r, i] < 0.5
            w[r, i] = sym
            b[r, i] = bb
            bt[r, i] = bbt

            if sym == 0:
                x1, x2 = xv + 1, xv
            elif xv == 0:
                x1, x2 = 1, 2
            elif sym == 1:
                x1, x2 = xv - 1, xv
            elif bb:
                x1, x2 = xv + 1, xv + 2
            else:
                x1, x2 = xv - 1, xv - 2

            if sym == 0:
                s1, s2 = sv + 1, sv
            elif sym == 1:
                s1, s2 = sv - 1, sv
            elif bbt:
                s1, s2 = sv + 1, sv + 2
            else:
                s1, s2 = sv - 1, sv - 2
            if i == 0:
                # S starts with a +1 step; reflecting the first pair keeps its corner
                s1, s2 = abs(s1), abs(s2)

            x[r, 2 * i + 1] = x1
            x[r, 2 * i + 2] = x2
            s[r, 2 * i + 1] = s1
            s[r, 2 * i + 2] = s2
            xv = x2
            sv = s2

    return x, s, w, b, bt


def sample_coupled_paths(n: int, size: int, rng=None):
    """
    Batched coupling. Returns ``(x, s, symbols, b, b_tilde)`` with path arrays of shape
    ``[size, n + 1]`` and per-pair-of-steps arrays of shape ``[size, n // 2]``.
    """
    if n < 2 or n % 2:
        raise ValueError("coupled paths need an even length n >= 2")
    gen = as_generator(rng)
    half = n // 2
    u_w = gen.random((size, half))
    u_b = gen.random((size, half))
    u_bt = gen.random((size, half))
    return _coupled_paths(u_w, u_b, u_bt)


def sample_coupled_pair(n: int, rng=None) -> CoupledPair:
    """
    Builds ``(X, S)`` two steps at a time from i.i.d. symbols ``∧, ∨, −`` with probabilities
    ``1/4, 1/4, 1/2``. ``X`` has law π and ``S`` is a simple symmetric walk whose first
    step is +1, so ``S_n - 1`` is a simple walk of ``n - 1`` steps.
    """
    x, s, w, b, bt = sample_coupled_paths(n, 1, rng)
    return CoupledPair(WalkPath(x[0]), s[0], w[0], b[0], bt[0])


def coupling_violations(x, s: Optional[np.ndarray] = None) -> Union[int, np.ndarray]:
    """
    Counts the odd indices ``2n+1`` where
    ``|1{ΔX_{2n+1} != 0} - 1{ΔS_{2n+1} != 0}| > 1{X_{2n} = 0}``. Accepts single paths or
    batches along the first axis, or a :class:`CoupledPair` alone.
    """
    if isinstance(x, CoupledPair):
        x, s = x.x.values, x.s
    x = np.asarray(x)
    s = np.asarray(s)
    odd = np.arange(1, x.shape[-1] - 1, 2)
    corner_x = (x[..., odd + 1] + x[..., odd - 1] - 2 * x[..., odd]) != 0
    corner_s = (s[..., odd + 1] + s[..., odd - 1] - 2 * s[..., odd]) != 0
    at_zero = x[..., odd - 1] == 0
    violations = np.abs(corner_x.astype(int) - corner_s.astype(int)) > at_zero
    return violations.sum(axis=-1)


def _path_values(path) -> np.ndarray:
    return path.values if isinstance(path, WalkPath) else np.asarray(path)


def corner_density_statistic(path, phi: TestFunction, N: float) -> Union[float, np.ndarray]:
    """
    ``(1/N) Σ_n 1{ΔX_n != 0} φ(n/N)`` over the interior indices of the path. Batched along the
    first axis if given a 2D array.
    """
    values = _path_values(path)
    last = values.shape[-1] - 2
    if last < math.ceil(phi.A * N):
        raise ValueError(
            f"path of length {values.shape[-1] - 1} too short for N={N} and support up to {phi.A}"
        )
    n = np.arange(1, last + 1)
    corners = (values[..., 2:] + values[..., :-2] - 2 * values[..., 1:-1]) != 0
    return (corners * phi(n / N)).sum(axis=-1) / N


def occupation_statistic(path, k: int, phi: TestFunction, N: float) -> Union[float, np.ndarray]:
    """``(1/N) Σ_n 1{X_n = k} φ(n/N)``. Batched along the first axis if given a 2D array."""
    values = _path_values(path)
    last = values.shape[-1] - 1
    if last < math.ceil(phi.A * N):
        raise ValueError(f"path of length {last} too short for N={N} and support up to {phi.A}")
    n = np.arange(last + 1)
    return ((values == k) * phi(n / N)).sum(axis=-1) / N


@dataclass
class MomentRow:
    kind: str
    order: int
    scales: List[int]
    moments: List[float]
    stderrs: List[float]
    slope: float
    slope_stderr: float
    stable: bool = True


def moment_growth_check(
    orders: Sequence[int],
    lengths: Sequence[int],
    replicas: int,
    rng=None,
    chunk_size: int = 1000,
    max_rel_stderr: float = 0.1,
) -> List[MomentRow]:
    """
    Log-log growth exponents of ``π[X_n^{2k}]`` against ``n``, of ``π[(X_n - X_m)^{2k}]``
    against ``n - m`` with ``m = n // 2``, and of ``E[S_n^{2k}]`` for a simple walk control.

    A row is flagged unstable (with a warning, not an error) when any moment estimate has a
    relative standard error above ``max_rel_stderr``.

    Args:
        orders (Sequence[int]): moment orders ``k``.
        lengths (Sequence[int]): path lengths ``n``, spanning at least a decade.
        replicas (int): number of sampled paths.
        rng: random stream, generator or seed.
        chunk_size (int): paths sampled at once. Defaults to 1000.
        max_rel_stderr (float): stability flag threshold. Defaults to 0.1.

    Returns:
        List[MomentRow]: one row per ``(kind, k)``.
    """
    from ..evaluation.stats import RunningStats, loglog_slope

    lengths = sorted(int(n) for n in lengths)
    if len(lengths) < 2 or lengths[-1] < 10 * lengths[0]:
        raise ValueError("lengths must include at least 2 values spanning a decade")

    gen = as_generator(rng)
    kinds = ("marginal", "increment", "simple_walk")
    stats = {(kind, k, n): RunningStats() for kind in kinds for k in orders for n in lengths}
    idx = np.array(lengths)
    mid = idx // 2

    done = 0
    while done < replicas:
        size = min(chunk_size, replicas - done)
        paths = sample_pi_paths(lengths[-1], size, gen)
        walk = np.concatenate(
            [np.zeros((size, 1)), np.cumsum(gen.choice([-1.0, 1.0], (size, lengths[-1])), axis=1)],
            axis=1,
        )
        samples = {
            "marginal": paths[:, idx].astype(np.float64),
            "increment": (paths[:, idx] - paths[:, mid]).astype(np.float64),
            "simple_walk": walk[:, idx],
        }
        for kind in kinds:
            for k in orders:
                powered = samples[kind] ** (2 * k)
                for j, n in enumerate(lengths):
                    stats[(kind, k, n)].update(powered[:, j])
        done += size

    rows = []
    for kind in kinds:
        scales = list(idx - mid) if kind == "increment" else lengths
        for k in orders:
            cells = [stats[(kind, k, n)] for n in lengths]
            moments = [c.mean for c in cells]
            stderrs = [c.stderr for c in cells]
            slope, slope_err = loglog_slope(scales, moments, min_points=2)
            stable = all(se <= max_rel_stderr * m for m, se in zip(moments, stderrs))
            if not stable:
                warnings.warn(
                    f"Too few replicas ({replicas}) for a stable {kind} moment regression of order {k}",
                    RuntimeWarning,
                )
            rows.append(
                MomentRow(kind, k, [int(s) for s in scales], moments, stderrs, slope, slope_err, stable)
            )
            logging.info(f"{kind} moment of order {2 * k}: slope {slope:.4f} ± {slope_err:.4f}")

    return rows


def stochastic_domination_check(n: int, m: int, replicas: int, rng=None) -> Dict[str, float]:
    """
    Empirical check of ``(X_n - X_m)_- ≼ (X_n - X_m)_+ ≼ X_{n-m}`` through the tail functions
    ``c -> P(· > c)`` at every integer threshold.

    Returns:
        Dict[str, float]: the largest standardized excess ``z`` of the smaller variable's tail
        over the larger one's, for each of the two dominations (``"neg_vs_pos"`` and
        ``"pos_vs_fresh"``), plus the number of thresholds compared.
    """
    assert n > m >= 0, "need n > m"
    gen = as_generator(rng)
    paths = sample_pi_paths(n, replicas, gen)
    fresh = sample_pi_paths(n - m, replicas, gen)[:, -1]

    inc = paths[:, n] - paths[:, m]
    neg = np.maximum(-inc, 0)
    pos = np.maximum(inc, 0)

    c = np.arange(0, max(neg.max(), pos.max(), fresh.max()) + 1)

    def tail(v):
        return (v[:, None] > c[None, :]).mean(axis=0)

    def excess(smaller, larger):
        p_s, p_l = tail(smaller), tail(larger)
        se = np.sqrt((p_s * (1 - p_s) + p_l * (1 - p_l)) / replicas)
        z = np.divide(p_s - p_l, se, out=np.zeros_like(se), where=se > 0)
        return float(z.max())

    return {
        "neg_vs_pos": excess(neg, pos),
        "pos_vs_fresh": excess(pos, fresh),
        "thresholds": int(len(c)),
    }
