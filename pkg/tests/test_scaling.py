import math

import numpy as np
import pytest

from wallflip.dynamics.interface import Outcome, validate_state
from wallflip.dynamics.simulate import EventHistory, RngStream, SuperpositionClock, run_until
from wallflip.observables import scaling
from wallflip.observables.scaling import (
    ErrorTerm,
    QuadratureError,
    WindowViolation,
    bracket,
    check_window,
    error_term,
    hat_weights,
    increment_norms,
    increment_scaling,
    inner_product_mismatch_bound,
    interpolation_gap,
    laplacian_mismatch_bound,
    noise_path,
    observable_row,
    reflection_measure,
    required_sites,
    rescale,
    semidiscrete_residual,
    support_identity,
    time_interpolated,
)
from wallflip.utils.utils import TestFunction
from wallflip.walks.conditioned import sample_stationary_state


EPS = 0.1
L = 40
T = 0.5


@pytest.fixture
def phi():
    return TestFunction.smooth_bump(1.0, 0.75)


@pytest.fixture
def psi():
    return TestFunction.plateau(0.0, 1.5, 0.25)


@pytest.fixture(scope="module")
def stationary_history():
    gen = RngStream(21).generator()
    state = sample_stationary_state(L, gen)
    _, history = run_until(state, T / EPS**2, SuperpositionClock(L, gen))
    return history


def _single_flip(time=0.3, site=10, horizon=2.0, n_sites=20):
    h0 = np.arange(n_sites + 2) % 2
    return EventHistory(h0, 0.0, horizon, [time], [site], [2], [Outcome.FLIPPED])


def test_rescale() -> None:
    h = rescale(validate_state([0, 1, 0]), 0.25)
    np.testing.assert_allclose(h.values, [0.0, 0.5, 0.0])
    assert h(0.125) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        h.weighted()
    assert rescale(np.array([0, 1, 0]), 0.25, rho=1.0).g(0.25) == pytest.approx(0.5 * math.exp(-0.25))


def test_rescale_history_needs_time() -> None:
    history = _single_flip()
    with pytest.raises(ValueError):
        rescale(history, EPS)
    assert rescale(history, EPS, t=0.01).values[10] == pytest.approx(2 * math.sqrt(EPS))


def test_window_rule(phi) -> None:
    with pytest.raises(WindowViolation, match="window rule"):
        check_window(0.1, 20, phi.A, 1.0)
    L_min = required_sites(0.1, phi.A, 1.0)
    check_window(0.1, L_min, phi.A, 1.0)
    check_window(0.1, 18, phi.A, 1.0, margin=0.0)


def test_hat_weights_integrate_linear_interpolants() -> None:
    w = hat_weights(lambda y: np.ones_like(y), 0.1, 11)
    np.testing.assert_allclose(w, [0.05] + [0.1] * 9 + [0.05])

    w = hat_weights(np.sin, 0.05, 41)
    nodes = 0.05 * np.arange(41)
    # the weights integrate sin against the interpolant of x^2, close to the exact integral
    exact = 2 * 2 * np.sin(2) + (2 - 4) * np.cos(2) - 2
    assert w @ nodes**2 == pytest.approx(exact, rel=1e-3)


def test_hat_weights_report_failed_refinement() -> None:
    with pytest.raises(QuadratureError):
        hat_weights(lambda y: np.sin(1e6 * y), 0.1, 5, max_doublings=2)


def test_single_flip_noise_jump(phi) -> None:
    history = _single_flip()
    path = noise_path(history, phi, EPS, margin=0.0)
    expected = math.sqrt(2) * EPS**1.5 * phi(1.0)
    assert path.jumps.tolist() == pytest.approx([expected])
    assert path.max_jump == pytest.approx(expected)
    assert path.jump_part(0.3 * EPS**2 / 2) == 0.0
    assert path.jump_part(EPS**2) == pytest.approx(expected)
    assert path.compensator_part(0.0) == 0.0


def test_down_flip_of_unit_weight_jumps_by_sqrt2_eps() -> None:
    one = TestFunction.from_callables(
        [
            lambda x: np.where((x > 0) & (x < 1.5), 1.0, 0.0),
            lambda x: 0 * x,
            lambda x: 0 * x,
            lambda x: 0 * x,
        ],
        (0.0, 1.5),
    )
    h0 = np.array([0, 1, 2, 1, 2, 1] + [0, 1] * 8)
    history = EventHistory(h0, 0.0, 1.0, [0.5], [2], [-2], [Outcome.FLIPPED])
    path = noise_path(history, one, EPS, margin=0.0)
    assert path.jumps[0] == pytest.approx(-math.sqrt(2) * EPS**1.5)


def test_noise_requires_vanishing_test_function() -> None:
    ones = TestFunction.from_callables([np.ones_like, np.zeros_like, np.zeros_like, np.zeros_like], (0, 1))
    with pytest.raises(ValueError):
        noise_path(_single_flip(), ones, EPS, margin=0.0)


def test_frozen_staircase(phi) -> None:
    state = validate_state(np.arange(L + 2))
    history = EventHistory.frozen(state, 1.0 / EPS**2)
    row = observable_row(history, phi, EPS, 1.0, margin=0.0)
    for key in ("W", "A1", "A2", "eta_mass", "eta_phi", "drift"):
        assert row[key] == 0.0
    assert row["discrete_t"] == row["discrete_0"]
    assert abs(row["R_eps"]) <= row["R_bound"]
    assert abs(row["laplacian"]) < 1e-6


def test_frozen_zigzag_bracket(phi) -> None:
    h0 = np.arange(L + 2) % 2
    history = EventHistory.frozen(validate_state(h0), 1.0 / EPS**2)
    w2 = phi(EPS * np.arange(L + 2)) ** 2
    A1, A2 = bracket(history, phi, EPS, 1.0)
    # every interior site is a corner; the odd ones are blocked peaks
    assert A1 == pytest.approx(2 * EPS * w2[1 : L + 1].sum())
    assert A2 == pytest.approx(2 * EPS * w2[1 : L + 1 : 2].sum())


def test_semidiscrete_identity_is_exact(stationary_history, phi) -> None:
    assert len(stationary_history) > 0
    assert semidiscrete_residual(stationary_history, phi, EPS, T, relative=True) <= 1e-8


def test_observable_row_consistency(stationary_history, phi, psi) -> None:
    row = observable_row(stationary_history, phi, EPS, T, psi=psi)

    A1, A2 = bracket(stationary_history, phi, EPS, T)
    assert row["A1"] == pytest.approx(A1, rel=1e-12)
    assert row["A2"] == pytest.approx(A2, rel=1e-12, abs=1e-15)
    assert 0 <= row["A2"] <= row["A1"]

    W = noise_path(stationary_history, phi, EPS)(T)
    assert row["W"] == pytest.approx(W, rel=1e-9, abs=1e-12)
    assert row["max_jump"] <= math.sqrt(2) * EPS**1.5 * phi.sup() * (1 + 1e-12)

    measure = reflection_measure(stationary_history, EPS)
    assert row["eta_mass"] == pytest.approx(measure.total_mass(), rel=1e-9, abs=1e-15)
    assert np.all(measure.mass >= 0)
    assert measure.bin_edges[-1] == pytest.approx(T)

    terms = error_term(stationary_history, phi, EPS, T, return_terms=True)
    assert isinstance(terms, ErrorTerm)
    assert terms.value == pytest.approx(row["R_eps"])
    assert abs(terms.value) <= terms.bound
    assert error_term(stationary_history, phi, EPS, T) == pytest.approx(row["R_eps"])


def test_residual_uses_snapshots_at_both_ends(stationary_history, phi, monkeypatch) -> None:
    history = stationary_history
    row = observable_row(history, phi, EPS, T)
    h_t = history.state_at(T / EPS**2).heights
    expected = EPS**1.5 * np.sum(phi(EPS * np.arange(L + 2)) * h_t)
    assert row["discrete_t"] == pytest.approx(expected, rel=1e-12)

    # a replay that loses one flip disagrees with the snapshot by exactly that flip; the lost flip
    # has no later flip next to it, so the lossy replay only visits valid configurations
    weight = phi(EPS * history.sites)
    flips = np.flatnonzero(history.flips)
    settled = [
        e for e in flips
        if weight[e] > 0.1 and np.all(np.abs(history.sites[flips[flips > e]] - history.sites[e]) > 1)
    ]
    lost = settled[-1]
    keep = np.arange(len(history)) != lost
    replayed = scaling._features

    def lossy_features(hist, *args, **kwargs):
        partial = EventHistory(
            hist.h0,
            hist.t0,
            hist.horizon,
            hist.times[keep],
            hist.sites[keep],
            hist.deltas[keep],
            hist.outcomes[keep],
        )
        return replayed(partial, *args, **kwargs)

    monkeypatch.setattr(scaling, "_features", lossy_features)
    residual = semidiscrete_residual(history, phi, EPS, T)
    assert residual == pytest.approx(EPS**1.5 * weight[lost] * history.deltas[lost], rel=1e-8)


def test_support_identity(stationary_history, psi) -> None:
    lhs, rhs = support_identity(stationary_history, psi, EPS)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-14)
    lhs, rhs = support_identity(stationary_history, psi, EPS, bin_width=0.1)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-14)


def test_mismatch_bounds(stationary_history, phi) -> None:
    h = rescale(stationary_history.final_state(), EPS)
    lattice = EPS * np.sum(h.values * phi(h.x))
    continuum = np.sum(h.values * hat_weights(phi, EPS, len(h.values)))
    bound = inner_product_mismatch_bound(h, phi, EPS)
    assert abs(lattice - continuum) <= bound

    n = int(phi.A / EPS)
    expected = EPS * phi.A * np.abs(h.values[: n + 1]).max() * phi.sup(1)
    assert bound == pytest.approx(expected)
    assert laplacian_mismatch_bound(2 * h.values, phi, EPS) == pytest.approx(
        2 * laplacian_mismatch_bound(h, phi, EPS)
    )


def test_reflection_measure_bins(stationary_history, tmp_path) -> None:
    fine = reflection_measure(stationary_history, EPS)
    coarse = reflection_measure(stationary_history, EPS, bin_width=0.1)
    assert coarse.mass.shape[0] == 5
    np.testing.assert_allclose(coarse.mass.sum(axis=0), fine.mass.sum(axis=0), rtol=1e-9, atol=1e-15)
    assert coarse.integrate(lambda x: np.ones_like(x)) == pytest.approx(coarse.total_mass())
    with pytest.raises(ValueError):
        reflection_measure(stationary_history, EPS, bin_width=0.0)

    coarse.to_csv(tmp_path / "eta.csv")
    assert (tmp_path / "eta.csv").read_text().startswith("x,t_start,t_end,mass")


def test_window_violation_is_raised(stationary_history) -> None:
    wide = TestFunction.smooth_bump(2.0, 1.5)
    with pytest.raises(WindowViolation):
        observable_row(stationary_history, wide, EPS, T)


def test_interpolation_gap_of_single_flip() -> None:
    history = _single_flip(time=0.3, site=10, horizon=2.0)
    gap = interpolation_gap(history, EPS, 2 * EPS**2, rho=1.0)
    assert gap == pytest.approx(1.4 * math.sqrt(EPS) * math.exp(-EPS * 10), rel=1e-12)
    assert time_interpolated(history, 0.5)[10] == pytest.approx(1.0)
    assert interpolation_gap(history, EPS, 0.0) == 0.0


def test_increment_norms_vanish_at_zero_lag(stationary_history) -> None:
    norms = increment_norms(stationary_history, EPS, [0.0, 0.1])
    assert norms[0] == 0.0
    assert norms[1] > 0


def test_increment_scaling_validates_lags() -> None:
    frozen = EventHistory.frozen(validate_state(np.arange(L + 2) % 2), 1.0 / EPS**2)
    lags = [0.02, 0.05, 0.1, 0.2]
    with pytest.raises(ValueError):
        increment_scaling([frozen], EPS, lags)
    with pytest.warns(RuntimeWarning):
        with pytest.raises(ValueError):
            increment_scaling([frozen, frozen], EPS, [0.001, 0.05, 0.1, 0.2])
