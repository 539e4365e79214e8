import numpy as np
import pytest

from wallflip.utils.utils import TestFunction, build_test_function, smoothstep, write_csv


def test_smoothstep_limits() -> None:
    s = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    np.testing.assert_allclose(smoothstep(s), [0.0, 0.0, 0.5, 1.0, 1.0])
    for k in (1, 2, 3):
        np.testing.assert_array_equal(smoothstep(np.array([0.0, 1.0]), k), [0.0, 0.0])
    with pytest.raises(ValueError):
        smoothstep(s, 4)


@pytest.mark.parametrize(
    "phi",
    [TestFunction.smooth_bump(1.0, 0.75), TestFunction.plateau(0.0, 1.5, 0.25)],
    ids=["bump", "plateau"],
)
def test_derivative_evaluators(phi) -> None:
    assert phi.vanishes_at_zero
    assert phi.check_derivatives()
    assert phi(phi.A + 0.1) == 0.0


def test_bump_values() -> None:
    phi = TestFunction.smooth_bump(1.0, 0.75, height=2.0)
    assert phi.A == 1.75
    assert phi(1.0) == pytest.approx(2 * np.exp(-1))
    assert phi.sup() == pytest.approx(2 * np.exp(-1), rel=1e-6)
    assert 0 < phi.squared_norm() < phi.sup() * phi.integral()


def test_plateau_is_one_inside() -> None:
    psi = TestFunction.plateau(0.0, 1.5, 0.25)
    np.testing.assert_allclose(psi(np.linspace(0.25, 1.25, 11)), 1.0)
    assert psi.integral() == pytest.approx(1.25, rel=1e-7)


def test_from_callables() -> None:
    phi = TestFunction.from_callables(
        [np.sin, np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x)], (0.0, np.pi)
    )
    assert phi.vanishes_at_zero
    assert phi.derivative(0.0, 3) == -1.0


def test_build_test_function() -> None:
    assert build_test_function({"kind": "bump", "center": 1.0, "width": 0.5}).name == "bump"
    assert build_test_function({"kind": "plateau", "lo": 0, "hi": 1, "ramp": 0.2}).A == 1
    with pytest.raises(ValueError):
        build_test_function({"kind": "wavelet"})


def test_write_csv(tmp_path) -> None:
    write_csv(tmp_path / "out.csv", {"a": [1, 2], "b": np.array([0.5, 0.25])})
    assert (tmp_path / "out.csv").read_text().splitlines() == ["a,b", "1,0.5", "2,0.25"]
