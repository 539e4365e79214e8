from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence, Set, Union

import numpy as np


__all__ = [
    "InvalidStateError",
    "Outcome",
    "InterfaceState",
    "validate_state",
    "discrete_laplacian",
    "attempt_flip",
    "blocked_sites",
    "corner_sites",
    "generator_rate_check",
]


class InvalidStateError(ValueError):
    """Raised when a height profile breaks the pinning, path or hard-wall constraint."""


class Outcome(IntEnum):
    FLIPPED = 0
    BLOCKED = 1
    NO_CORNER = 2

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "")


@dataclass
class InterfaceState:
    """
    Height profile on sites ``0..L+1`` with ``heights[0] = 0`` pinned and ``heights[L+1]`` frozen.
    Only sites ``1..L`` carry clocks.
    """

    heights: np.ndarray
    time: float = 0.0

    @property
    def L(self) -> int:
        return len(self.heights) - 2

    def copy(self) -> "InterfaceState":
        return InterfaceState(self.heights.copy(), self.time)


def validate_state(heights: Union[Sequence[int], np.ndarray], time: float = 0.0) -> InterfaceState:
    """
    Checks a height sequence against the interface constraints and wraps it into an
    :class:`InterfaceState`.

    Args:
        heights (Union[Sequence[int], np.ndarray]): integer heights on sites ``0..L+1``.
        time (float): unscaled time attached to the state. Defaults to 0.

    Returns:
        InterfaceState: a state owning an ``int64`` copy of ``heights``.

    Raises:
        InvalidStateError: naming the first offending site.
    """
    h = np.asarray(heights)
    if h.ndim != 1 or len(h) < 2:
        raise InvalidStateError("a state needs at least 2 sites")

    if not np.all(np.equal(np.mod(h, 1), 0)):
        raise InvalidStateError("heights must be integers")

    h = h.astype(np.int64)

    if h[0] != 0:
        raise InvalidStateError("pinning violated at site 0")

    bad_path = np.flatnonzero(np.abs(np.diff(h)) != 1)
    bad_wall = np.flatnonzero(h < 0)

    first_path = bad_path[0] if len(bad_path) else len(h)
    first_wall = bad_wall[0] if len(bad_wall) else len(h)

    if first_path < len(h) and first_path <= first_wall:
        raise InvalidStateError(f"path constraint violated at site {first_path}")
    if first_wall < len(h):
        raise InvalidStateError(f"hard wall violated at site {first_wall}")

    return InterfaceState(h, float(time))


def _check_site(state: InterfaceState, n: int):
    if not 1 <= n <= state.L:
        raise ValueError(f"site {n} out of range 1..{state.L}")


def discrete_laplacian(state: InterfaceState, n: int) -> int:
    """``h(n+1) + h(n-1) - 2h(n)``, one of -2, 0 or 2."""
    _check_site(state, n)
    h = state.heights
    return int(h[n + 1] + h[n - 1] - 2 * h[n])


def attempt_flip(state: InterfaceState, n: int) -> Outcome:
    """
    Rings the clock at site ``n``: flips the corner in place unless there is no corner or the
    flip would go below the wall.
    """
    lap = discrete_laplacian(state, n)
    if lap == 0:
        return Outcome.NO_CORNER
    if state.heights[n] + lap < 0:
        return Outcome.BLOCKED

    state.heights[n] += lap
    return Outcome.FLIPPED


def _interior_masks(h: np.ndarray):
    lap = h[2:] + h[:-2] - 2 * h[1:-1]
    corners = lap != 0
    blocked = (h[1:-1] == 1) & (h[:-2] == 0) & (h[2:] == 0)
    return lap, corners, blocked


def blocked_sites(state: InterfaceState) -> Set[int]:
    """Sites holding a height-1 peak over two zeros, the only configuration the wall forbids."""
    _, _, blocked = _interior_masks(state.heights)
    return set((np.flatnonzero(blocked) + 1).tolist())


def corner_sites(state: InterfaceState) -> Set[int]:
    """Sites with ``Δh != 0``."""
    _, corners, _ = _interior_masks(state.heights)
    return set((np.flatnonzero(corners) + 1).tolist())


def generator_rate_check(state: InterfaceState) -> np.ndarray:
    """
    Action of the generator on the coordinate maps ``h -> h(n)`` for ``n = 1..L``, i.e. the
    instantaneous mean height drift ``Δh(n) 1{h(n) + Δh(n) >= 0}`` at every site.
    """
    lap, _, _ = _interior_masks(state.heights)
    allowed = state.heights[1:-1] + lap >= 0
    return np.where(allowed, lap, 0).astype(np.float64)
