import itertools
import math

import numpy as np
import pytest

from wallflip.dynamics.interface import (
    InvalidStateError,
    Outcome,
    attempt_flip,
    blocked_sites,
    corner_sites,
    discrete_laplacian,
    generator_rate_check,
    validate_state,
)


@pytest.fixture
def mixed_state():
    # site 1 blocked, site 2 a valley, site 3 a slope, site 4 a peak
    return validate_state([0, 1, 0, 1, 2, 1])


def test_validate_state_accepts_paths() -> None:
    state = validate_state([0, 1, 0, 1, 2], time=3.5)
    assert state.L == 3
    assert state.time == 3.5
    assert state.heights.dtype == np.int64


@pytest.mark.parametrize(
    "heights, message",
    [
        ([1, 0], "pinning"),
        ([0, 1, 1], "path constraint violated at site 1"),
        ([0, -1, 0], "hard wall violated at site 1"),
        ([0, 1.5, 0], "integers"),
        ([0], "at least 2 sites"),
    ],
)
def test_validate_state_rejects(heights, message) -> None:
    with pytest.raises(InvalidStateError, match=message):
        validate_state(heights)


def test_discrete_laplacian_range(mixed_state) -> None:
    assert [discrete_laplacian(mixed_state, n) for n in range(1, 5)] == [-2, 2, 0, -2]
    with pytest.raises(ValueError):
        discrete_laplacian(mixed_state, 0)
    with pytest.raises(ValueError):
        discrete_laplacian(mixed_state, 5)


def test_attempt_flip_outcomes(mixed_state) -> None:
    assert attempt_flip(mixed_state, 1) == Outcome.BLOCKED
    assert attempt_flip(mixed_state, 3) == Outcome.NO_CORNER
    assert attempt_flip(mixed_state, 2) == Outcome.FLIPPED
    assert mixed_state.heights.tolist() == [0, 1, 2, 1, 2, 1]
    validate_state(mixed_state.heights)


def test_outcome_labels() -> None:
    assert Outcome.FLIPPED.label == "flipped"
    assert Outcome.BLOCKED.label == "blocked"
    assert Outcome.NO_CORNER.label == "nocorner"


def test_corner_and_blocked_sets(mixed_state) -> None:
    assert corner_sites(mixed_state) == {1, 2, 4}
    assert blocked_sites(mixed_state) == {1}
    assert blocked_sites(mixed_state) <= corner_sites(mixed_state)


def test_generator_rate_check(mixed_state) -> None:
    np.testing.assert_array_equal(generator_rate_check(mixed_state), [0.0, 2.0, 0.0, -2.0])


def test_random_flips_keep_constraints() -> None:
    rng = np.random.default_rng(7)
    state = validate_state(np.arange(22) % 2)
    for n in rng.integers(1, state.L + 1, 5000):
        before = state.heights.copy()
        outcome = attempt_flip(state, int(n))
        validate_state(state.heights)
        if outcome != Outcome.FLIPPED:
            np.testing.assert_array_equal(state.heights, before)
        else:
            assert np.abs(state.heights - before).sum() == 2


def _paths(L):
    for steps in itertools.product((-1, 1), repeat=L + 1):
        h = np.concatenate([[0], np.cumsum(steps)])
        if h.min() >= 0:
            yield validate_state(h)


@pytest.mark.parametrize("L", range(1, 9))
def test_blocked_sites_are_the_flips_through_the_wall(L) -> None:
    count = 0
    for state in _paths(L):
        h = state.heights
        through = {n for n in range(1, L + 1) if h[n] + discrete_laplacian(state, n) < 0}
        assert blocked_sites(state) == through
        count += 1
    # non-negative paths of L + 1 steps
    assert count == math.comb(L + 1, (L + 1) // 2)


@pytest.mark.parametrize("L", [3, 6, 8])
def test_flip_is_an_involution(L) -> None:
    for state in _paths(L):
        for n in corner_sites(state) - blocked_sites(state):
            flipped = state.copy()
            assert attempt_flip(flipped, n) == Outcome.FLIPPED
            validate_state(flipped.heights)
            assert attempt_flip(flipped, n) == Outcome.FLIPPED
            np.testing.assert_array_equal(flipped.heights, state.heights)
