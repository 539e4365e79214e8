import json

import numpy as np
import pytest

from wallflip.dynamics.interface import Outcome, generator_rate_check, validate_state
from wallflip.dynamics.simulate import (
    EventHistory,
    FlowBalanceObserver,
    RngStream,
    SuperpositionClock,
    as_generator,
    empirical_drift,
    run_until,
    step_to_next_event,
)
from wallflip.observables.scaling import bracket, noise_path
from wallflip.utils.utils import TestFunction
from wallflip.walks.conditioned import sample_stationary_state


@pytest.fixture
def history():
    gen = RngStream(11, 0).generator()
    state = sample_stationary_state(30, gen)
    _, hist = run_until(state, 40.0, SuperpositionClock(30, gen), debug=True)
    return hist


def test_streams_are_reproducible_and_distinct() -> None:
    a = RngStream(5, 1).generator().random(4)
    b = RngStream(5, 1).generator().random(4)
    c = RngStream(5, 2).generator().random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    assert RngStream(5).spawn(2) == RngStream(5, 2)


def test_as_generator_accepts_seeds() -> None:
    np.testing.assert_array_equal(as_generator(3).random(3), np.random.default_rng(3).random(3))
    gen = np.random.default_rng(1)
    assert as_generator(gen) is gen


def test_run_keeps_constraints_and_replays(history) -> None:
    assert len(history) > 0
    assert np.all(np.diff(history.times) >= 0)
    assert np.all(history.outcomes != Outcome.NO_CORNER)
    final = history.final_state()
    validate_state(final.heights)
    assert final.time == 40.0


def test_split_run_matches_single_run() -> None:
    L = 20
    h0 = sample_stationary_state(L, RngStream(3, 9).generator()).heights

    state = validate_state(h0)
    _, full = run_until(state, 30.0, SuperpositionClock(L, RngStream(3, 0)))

    split = validate_state(h0)
    clock = SuperpositionClock(L, RngStream(3, 0))
    _, first = run_until(split, 12.0, clock)
    _, second = run_until(split, 30.0, clock)

    np.testing.assert_array_equal(state.heights, split.heights)
    np.testing.assert_array_equal(full.sites, np.concatenate([first.sites, second.sites]))
    np.testing.assert_allclose(full.times, np.concatenate([first.times, second.times]), rtol=1e-12)


def test_record_null_keeps_every_ring() -> None:
    gen = RngStream(2).generator()
    state = sample_stationary_state(10, gen)
    _, hist = run_until(state, 20.0, SuperpositionClock(10, gen), record_null=True)
    assert len(hist) == hist.n_rings
    assert np.any(hist.outcomes == Outcome.NO_CORNER)
    assert np.all(hist.deltas[hist.outcomes == Outcome.NO_CORNER] == 0)


def test_zero_sites_give_frozen_history() -> None:
    state = validate_state([0, 1])
    _, hist = run_until(state, 5.0, SuperpositionClock(1, 0))
    assert len(hist) == 0
    assert state.time == 5.0


def test_horizon_before_state_time_raises() -> None:
    state = validate_state([0, 1, 0], time=2.0)
    with pytest.raises(ValueError):
        run_until(state, 1.0, SuperpositionClock(1, 0))


def test_interval_counts_match_intervals(history) -> None:
    counts = history.interval_counts()
    intervals = list(history.intervals())
    assert len(counts) == len(intervals) == len(history) + 1
    for row, interval in zip(counts, intervals):
        assert row[0] == interval.t_start and row[1] == interval.t_end
        assert row[2] == len(interval.corners)
        assert row[3] == len(interval.blocked)
        assert interval.blocked <= interval.corners


def test_state_at_bounds(history) -> None:
    with pytest.raises(ValueError):
        history.state_at(history.horizon + 1)
    np.testing.assert_array_equal(history.state_at(history.t0).heights, history.h0)


def test_exports(history, tmp_path) -> None:
    history.to_jsonl(tmp_path / "events.jsonl")
    lines = (tmp_path / "events.jsonl").read_text().splitlines()
    assert len(lines) == len(history)
    assert set(json.loads(lines[0])) == {"t", "site", "delta", "outcome"}

    history.intervals_to_csv(tmp_path / "intervals.csv")
    rows = (tmp_path / "intervals.csv").read_text().splitlines()
    assert rows[0] == "t_start,t_end,n_corners,n_blocked"
    assert len(rows) == len(history) + 2


def test_flow_balance_observer_counts_window_flips() -> None:
    hist = EventHistory(
        np.array([0, 1, 0, 1, 0]),
        0.0,
        3.0,
        times=[1.0, 2.0, 2.5],
        sites=[2, 2, 1],
        deltas=[2, -2, -2],
        outcomes=[Outcome.FLIPPED, Outcome.FLIPPED, Outcome.BLOCKED],
    )
    observer = FlowBalanceObserver(start=1, width=3)
    hist.replay([observer])
    assert observer.flow_balance_report() == [((1, 0, 1), (1, 2, 1), 1, 1, 0.0)]

    merged = FlowBalanceObserver(1, 3).merge(observer).merge(observer)
    assert merged.flow_balance_report()[0][2:4] == (2, 2)


def test_step_to_next_event() -> None:
    state = validate_state([0, 1, 0, 1, 0])
    clock = SuperpositionClock(3, RngStream(4))
    event, state = step_to_next_event(state, clock)
    assert event.time == state.time > 0
    assert 1 <= event.site <= 3
    validate_state(state.heights)


@pytest.mark.slow
def test_empirical_drift_matches_generator() -> None:
    state = validate_state([0, 1, 0, 1, 2, 1])
    mean, stderr = empirical_drift(state, 0.01, 4000, rng=RngStream(8))
    exact = generator_rate_check(state)
    assert np.all(np.abs(mean - exact) <= 5 * stderr + 0.2)



def test_clock_is_a_rate_L_poisson_process() -> None:
    L, T = 50, 0.4
    clock = SuperpositionClock(L, RngStream(6), chunk_size=1 << 18)
    waits = clock.waits

    assert np.mean(waits) == pytest.approx(1 / L, rel=0.01)
    site_counts = np.bincount(clock.sites, minlength=L + 1)
    assert site_counts[0] == 0
    expected = len(waits) / L
    assert np.all(np.abs(site_counts[1:] - expected) <= 5 * np.sqrt(expected))

    # arrivals in disjoint windows of length T
    arrivals = np.cumsum(waits)
    n_windows = int(arrivals[-1] // T)
    counts = np.bincount((arrivals // T).astype(np.int64), minlength=n_windows)[:n_windows]
    assert np.mean(counts) == pytest.approx(L * T, abs=4 * np.sqrt(L * T / n_windows))
    assert np.var(counts) == pytest.approx(L * T, abs=1.2)


def test_draws_follow_the_chunk_across_refills() -> None:
    clock = SuperpositionClock(7, RngStream(2), chunk_size=8)
    first = (clock.waits.copy(), clock.sites.copy())
    drawn = [clock.draw() for _ in range(8)]
    assert [w for w, _ in drawn] == first[0].tolist()
    assert [n for _, n in drawn] == first[1].tolist()
    assert clock.exhausted
    wait, site = clock.draw()
    assert clock.pos == 1
    assert (wait, site) == (clock.waits[0], clock.sites[0])


def _event_sequence(seed, stream_id, L=25, horizon=30.0):
    stream = RngStream(seed, stream_id)
    gen = stream.generator()
    state = sample_stationary_state(L, gen)
    _, hist = run_until(state, horizon, SuperpositionClock(L, gen), record_null=True)
    return hist


def test_event_sequence_is_reproducible_per_stream() -> None:
    a = _event_sequence(4, 3)
    b = _event_sequence(4, 3)
    c = _event_sequence(4, 5)

    np.testing.assert_array_equal(a.h0, b.h0)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.sites, b.sites)
    np.testing.assert_array_equal(a.deltas, b.deltas)
    np.testing.assert_array_equal(a.outcomes, b.outcomes)
    assert a.n_rings == b.n_rings

    n = min(len(a), len(c))
    assert not np.array_equal(a.sites[:n], c.sites[:n])


@pytest.mark.slow
def test_noise_martingale_is_centered() -> None:
    eps, L, T = 0.2, 16, 0.25
    phi = TestFunction.smooth_bump(1.0, 0.75)
    values, brackets = [], []
    for replica in range(1000):
        gen = RngStream(31, replica).generator()
        state = sample_stationary_state(L, gen)
        _, hist = run_until(state, T / eps**2, SuperpositionClock(L, gen))
        values.append(noise_path(hist, phi, eps)(T))
        A1, A2 = bracket(hist, phi, eps, T)
        brackets.append(A1 - A2)

    values = np.asarray(values)
    stderr = values.std(ddof=1) / np.sqrt(len(values))
    assert abs(values.mean()) <= 4 * stderr
    # second moment of the martingale is the mean predictable bracket
    assert np.mean(values**2) == pytest.approx(np.mean(brackets), rel=0.25)
