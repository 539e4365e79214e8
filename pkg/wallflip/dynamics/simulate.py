"""
Event-driven simulation of the corner-flip dynamics above the wall.

The ``L`` unit-rate site clocks are superposed into a single rate-``L`` clock whose rings are
assigned to a uniform site. Waiting times and sites are drawn from numpy in chunks and consumed
by a JIT-compiled loop, which keeps runs reproducible for a given ``(seed, stream_id)``.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterator, List, Sequence, Tuple, Union

import numpy as np
from numba import njit

from .interface import InterfaceState, Outcome, attempt_flip


__all__ = [
    "RngStream",
    "as_generator",
    "SuperpositionClock",
    "FlipEvent",
    "IntervalSummary",
    "EventHistory",
    "Observer",
    "FlowBalanceObserver",
    "step_to_next_event",
    "run_until",
    "empirical_drift",
]


_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class RngStream:
    """
    Replica random stream. The ``(seed, stream_id)`` pair is mixed into a Philox key, so distinct
    replicas get independent counter-based streams.
    """

    seed: int
    stream_id: int = 0

    @property
    def key(self) -> int:
        return _splitmix64((self.seed & _MASK64) ^ _splitmix64(self.stream_id & _MASK64))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key))

    def spawn(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


def as_generator(rng: Union[RngStream, np.random.Generator, int, None]) -> np.random.Generator:
    """Accepts a stream, a generator, an integer seed or None."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


class SuperpositionClock:
    """
    Rate-``L`` exponential clock with uniform site marks, served from pre-drawn chunks.

    The simulation loop stores the unused remainder of an interrupted waiting time back into the
    chunk, so splitting a run at intermediate horizons reproduces the same event sequence.
    """

    def __init__(
        self,
        L: int,
        rng: Union[RngStream, np.random.Generator, int, None] = None,
        chunk_size: int = 1 << 16,
    ):
        assert L >= 1, "the clock needs at least one site"
        self.L = L
        self.chunk_size = chunk_size
        self._gen = as_generator(rng)
        self.refill()

    def refill(self):
        self.waits = self._gen.exponential(1.0 / self.L, self.chunk_size)
        self.sites = self._gen.integers(1, self.L + 1, self.chunk_size, dtype=np.int64)
        self.pos = 0

    @property
    def exhausted(self) -> bool:
        return self.pos >= self.chunk_size

    def draw(self) -> Tuple[float, int]:
        if self.exhausted:
            self.refill()
        wait, site = float(self.waits[self.pos]), int(self.sites[self.pos])
        self.pos += 1
        return wait, site


@dataclass(frozen=True)
class FlipEvent:
    time: float
    site: int
    delta: int
    outcome: Outcome

    def to_record(self) -> Dict:
        return {
            "t": self.time,
            "site": self.site,
            "delta": self.delta,
            "outcome": self.outcome.label,
        }


@dataclass(frozen=True)
class IntervalSummary:
    t_start: float
    t_end: float
    corners: FrozenSet[int]
    blocked: FrozenSet[int]


@njit(cache=True)
def _advance(
    h,
    t,
    horizon,
    waits,
    sites,
    pos,
    rec_times,
    rec_sites,
    rec_deltas,
    rec_outcomes,
    record,
    record_null,
    debug,
):
    n_rec = 0
    n_rings = 0
    while pos < waits.shape[0]:
        w = waits[pos]
        if t + w > horizon:
            waits[pos] = w - (horizon - t)
            return horizon, pos, n_rec, n_rings, True

        t += w
        n = sites[pos]
        pos += 1
        n_rings += 1

        lap = h[n + 1] + h[n - 1] - 2 * h[n]
        if lap == 0:
            outcome = 2
        elif h[n] + lap < 0:
            outcome = 1
        else:
            h[n] += lap
            outcome = 0

        if debug:
            assert h[0] == 0, "pinning violated"
            assert h[n] >= 0, "hard wall violated"
            assert abs(h[n] - h[n - 1]) == 1 and abs(h[n + 1] - h[n]) == 1, "path violated"

        if record and (outcome != 2 or record_null):
            rec_times[n_rec] = t
            rec_sites[n_rec] = n
            rec_deltas[n_rec] = lap
            rec_outcomes[n_rec] = outcome
            n_rec += 1

    return t, pos, n_rec, n_rings, False


class EventHistory:
    """
    Time-ordered record of a run: the initial profile plus the recorded events. Any intermediate
    configuration, corner set or blocked set is recovered by replaying the flips.
    """

    def __init__(
        self,
        h0: np.ndarray,
        t0: float,
        horizon: float,
        times: np.ndarray,
        sites: np.ndarray,
        deltas: np.ndarray,
        outcomes: np.ndarray,
        n_rings: int = 0,
    ):
        self.h0 = np.asarray(h0, dtype=np.int64)
        self.t0 = float(t0)
        self.horizon = float(horizon)
        self.times = np.asarray(times, dtype=np.float64)
        self.sites = np.asarray(sites, dtype=np.int64)
        self.deltas = np.asarray(deltas, dtype=np.int64)
        self.outcomes = np.asarray(outcomes, dtype=np.int8)
        self.n_rings = n_rings

    @classmethod
    def frozen(cls, state: InterfaceState, horizon: float) -> "EventHistory":
        """History of a configuration that does not move on ``[state.time, horizon]``."""
        empty = np.zeros(0)
        return cls(state.heights.copy(), state.time, horizon, empty, empty, empty, empty)

    @property
    def L(self) -> int:
        return len(self.h0) - 2

    def __len__(self) -> int:
        return len(self.times)

    @property
    def events(self) -> List[FlipEvent]:
        return [
            FlipEvent(float(t), int(n), int(d), Outcome(int(o)))
            for t, n, d, o in zip(self.times, self.sites, self.deltas, self.outcomes)
        ]

    @property
    def flips(self) -> np.ndarray:
        return self.outcomes == Outcome.FLIPPED

    def state_at(self, t: float) -> InterfaceState:
        """Configuration at unscaled time ``t`` (events at time ``t`` included)."""
        if not self.t0 <= t <= self.horizon:
            raise ValueError(f"time {t} outside the history [{self.t0}, {self.horizon}]")
        last = np.searchsorted(self.times, t, side="right")
        h = self.h0.copy()
        mask = self.flips[:last]
        np.add.at(h, self.sites[:last][mask], self.deltas[:last][mask])
        return InterfaceState(h, float(t))

    def final_state(self) -> InterfaceState:
        return self.state_at(self.horizon)

    def intervals(self) -> Iterator[IntervalSummary]:
        """
        Yields the inter-event intervals partitioning ``[t0, horizon]`` with the corner and
        blocked sets holding on each of them.
        """
        h = self.h0.copy()
        start = self.t0
        for t, n, d, o in zip(self.times, self.sites, self.deltas, self.outcomes):
            yield IntervalSummary(start, float(t), *_corner_blocked(h))
            if o == Outcome.FLIPPED:
                h[n] += d
            start = float(t)
        yield IntervalSummary(start, self.horizon, *_corner_blocked(h))

    def interval_counts(self) -> np.ndarray:
        """Array of rows ``(t_start, t_end, n_corners, n_blocked)``, one per interval."""
        return _interval_counts(
            self.h0, self.t0, self.horizon, self.times, self.sites, self.deltas, self.outcomes
        )

    def replay(self, observers: Sequence["Observer"]):
        """Feeds every interval and event, in order, to the observers."""
        if not observers:
            return
        h = self.h0.copy()
        start = self.t0
        for event in self.events:
            for obs in observers:
                obs.on_interval(start, event.time, h)
            for obs in observers:
                obs.on_event(event, h)
            if event.outcome == Outcome.FLIPPED:
                h[event.site] += event.delta
            start = event.time
        for obs in observers:
            obs.on_interval(start, self.horizon, h)

    def to_jsonl(self, path: str):
        with open(path, "w") as f:
            for event in self.events:
                f.write(json.dumps(event.to_record()) + "\n")

    def intervals_to_csv(self, path: str):
        np.savetxt(
            path,
            self.interval_counts(),
            delimiter=",",
            header="t_start,t_end,n_corners,n_blocked",
            comments="",
            fmt=["%.17g", "%.17g", "%d", "%d"],
        )


def _corner_blocked(h: np.ndarray):
    lap = h[2:] + h[:-2] - 2 * h[1:-1]
    corners = np.flatnonzero(lap != 0) + 1
    blocked = np.flatnonzero((h[1:-1] == 1) & (h[:-2] == 0) & (h[2:] == 0)) + 1
    return frozenset(corners.tolist()), frozenset(blocked.tolist())


@njit(cache=True)
def _site_state(h, k):
    lap = h[k + 1] + h[k - 1] - 2 * h[k]
    corner = 1 if lap != 0 else 0
    blocked = 1 if (h[k] == 1 and h[k - 1] == 0 and h[k + 1] == 0) else 0
    return corner, blocked


@njit(cache=True)
def _interval_counts(h0, t0, horizon, times, sites, deltas, outcomes):
    h = h0.copy()
    L = h.shape[0] - 2
    n_corner = 0
    n_blocked = 0
    for k in range(1, L + 1):
        c, b = _site_state(h, k)
        n_corner += c
        n_blocked += b

    out = np.empty((times.shape[0] + 1, 4))
    start = t0
    for e in range(times.shape[0]):
        out[e, 0] = start
        out[e, 1] = times[e]
        out[e, 2] = n_corner
        out[e, 3] = n_blocked
        if outcomes[e] == 0:
            n = sites[e]
            for k in range(max(1, n - 1), min(L, n + 1) + 1):
                c, b = _site_state(h, k)
                n_corner -= c
                n_blocked -= b
            h[n] += deltas[e]
            for k in range(max(1, n - 1), min(L, n + 1) + 1):
                c, b = _site_state(h, k)
                n_corner += c
                n_blocked += b
        start = times[e]

    last = times.shape[0]
    out[last, 0] = start
    out[last, 1] = horizon
    out[last, 2] = n_corner
    out[last, 3] = n_blocked
    return out


class Observer:
    """Hook invoked once per interval and once per event while a history is replayed."""

    def on_interval(self, t_start: float, t_end: float, heights: np.ndarray):
        pass

    def on_event(self, event: FlipEvent, heights: np.ndarray):
        pass


class FlowBalanceObserver(Observer):
    """
    Counts transitions between local configurations on the window of sites
    ``start..start+width-1``. Under a reversible stationary law, the number of ``a -> b``
    transitions matches the number of ``b -> a`` transitions up to noise.
    """

    def __init__(self, start: int = 1, width: int = 4):
        self.start = start
        self.width = width
        self.counts = Counter()

    def on_event(self, event: FlipEvent, heights: np.ndarray):
        if event.outcome != Outcome.FLIPPED:
            return
        if not self.start <= event.site < self.start + self.width:
            return
        window = heights[self.start : self.start + self.width]
        before = tuple(window.tolist())
        after = list(before)
        after[event.site - self.start] += event.delta
        self.counts[(before, tuple(after))] += 1

    def merge(self, other: "FlowBalanceObserver") -> "FlowBalanceObserver":
        self.counts.update(other.counts)
        return self

    def flow_balance_report(self) -> List[Tuple[tuple, tuple, int, int, float]]:
        """
        Returns:
            List[Tuple]: ``(a, b, n_ab, n_ba, z)`` for every unordered pair of window
            configurations seen at least once, with ``z = (n_ab - n_ba) / sqrt(n_ab + n_ba)``.
        """
        rows = []
        seen = set()
        for a, b in sorted(self.counts):
            if (b, a) in seen:
                continue
            seen.add((a, b))
            n_ab, n_ba = self.counts[(a, b)], self.counts[(b, a)]
            rows.append((a, b, n_ab, n_ba, (n_ab - n_ba) / np.sqrt(n_ab + n_ba)))
        return rows


def step_to_next_event(
    state: InterfaceState, clock: SuperpositionClock
) -> Tuple[FlipEvent, InterfaceState]:
    """
    Advances the state by one ring of the superposed clock, recording the attempted flip whatever
    its outcome.
    """
    assert clock.L == state.L, "clock and state disagree on the number of sites"
    wait, site = clock.draw()
    state.time += wait
    lap = int(state.heights[site + 1] + state.heights[site - 1] - 2 * state.heights[site])
    outcome = attempt_flip(state, site)
    return FlipEvent(state.time, site, lap, outcome), state


def run_until(
    state: InterfaceState,
    horizon: float,
    clock: SuperpositionClock,
    observers: Sequence[Observer] = (),
    record: bool = True,
    record_null: bool = False,
    debug: bool = False,
) -> Tuple[InterfaceState, EventHistory]:
    """
    Simulates the dynamics up to unscaled time ``horizon``. ``state`` is advanced in place.

    Args:
        state (InterfaceState): starting configuration, modified in place.
        horizon (float): final unscaled time, at least ``state.time``.
        clock (SuperpositionClock): clock for ``state.L`` sites.
        observers (Sequence[Observer]): called once per interval and once per recorded event.
        record (bool): keep flipped and blocked events in the history. Defaults to True.
        record_null (bool): also keep rings at non-corner sites. Defaults to False.
        debug (bool): check the path, wall and pinning constraints after every event.
          Defaults to False.

    Returns:
        Tuple[InterfaceState, EventHistory]: the final state and the history of the run.
    """
    if horizon < state.time:
        raise ValueError(f"horizon {horizon} is before the current time {state.time}")

    h = state.heights
    h0 = h.copy()
    t0 = state.time

    if state.L == 0:
        state.time = float(horizon)
        history = EventHistory.frozen(InterfaceState(h0, t0), horizon)
        history.replay(observers)
        return state, history

    assert clock.L == state.L, "clock and state disagree on the number of sites"

    size = clock.chunk_size if record else 0
    buf_t = np.empty(size)
    buf_n = np.empty(size, dtype=np.int64)
    buf_d = np.empty(size, dtype=np.int64)
    buf_o = np.empty(size, dtype=np.int8)

    chunks = []
    n_rings = 0
    t = float(state.time)
    done = False
    while not done:
        if clock.exhausted:
            clock.refill()
        t, pos, n_rec, rings, done = _advance(
            h,
            t,
            float(horizon),
            clock.waits,
            clock.sites,
            clock.pos,
            buf_t,
            buf_n,
            buf_d,
            buf_o,
            record,
            record_null,
            debug,
        )
        clock.pos = pos
        n_rings += rings
        if n_rec:
            chunks.append(
                (buf_t[:n_rec].copy(), buf_n[:n_rec].copy(), buf_d[:n_rec].copy(), buf_o[:n_rec].copy())
            )

    state.time = float(horizon)

    if chunks:
        times, sites, deltas, outcomes = (np.concatenate(c) for c in zip(*chunks))
    else:
        times, sites, deltas, outcomes = (np.zeros(0) for _ in range(4))

    logging.debug(f"Simulated {n_rings} clock rings on {state.L} sites up to time {horizon}")

    history = EventHistory(h0, t0, horizon, times, sites, deltas, outcomes, n_rings)
    history.replay(observers)
    return state, history


def empirical_drift(
    state: InterfaceState,
    duration: float,
    replicas: int,
    rng: Union[RngStream, np.random.Generator, int, None] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Monte Carlo estimate of the mean height change per unit time at every site ``1..L``, started
    from a fixed ``state``. For small ``duration`` it approaches :func:`generator_rate_check`.

    Returns:
        Tuple[np.ndarray, np.ndarray]: mean drift per site and its standard error.
    """
    gen = as_generator(rng)
    changes = np.empty((replicas, state.L))
    for i in range(replicas):
        s = state.copy()
        clock = SuperpositionClock(state.L, gen, chunk_size=1 << 10)
        run_until(s, state.time + duration, clock, record=False)
        changes[i] = (s.heights[1:-1] - state.heights[1:-1]) / duration

    return changes.mean(axis=0), changes.std(axis=0, ddof=1) / np.sqrt(replicas)
