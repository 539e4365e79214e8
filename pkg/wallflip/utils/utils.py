from dataclasses import dataclass
from math import comb
from typing import Callable, Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy import integrate
from tqdm import tqdm


__all__ = [
    "TestFunction",
    "smoothstep",
    "build_test_function",
    "write_csv",
]


def _optional_tqdm(iter_obj, use_tqdm, total=None, desc=None):
    if use_tqdm:
        return tqdm(iter_obj, total=total, desc=desc)
    else:
        return iter_obj


def smoothstep(s: np.ndarray, k: int = 0) -> np.ndarray:
    """
    ``k``-th derivative (``k <= 3``) of the septic smoothstep ``s^4 (35 - 84 s + 70 s^2 - 20 s^3)``,
    clamped to 0 for ``s <= 0`` and 1 for ``s >= 1``. It is C^3 with vanishing derivatives up to
    order 3 at both ends.
    """
    s = np.asarray(s, dtype=np.float64)
    inside = (s > 0) & (s < 1)
    u = np.clip(s, 0, 1)

    if k == 0:
        out = u**4 * (35 - 84 * u + 70 * u**2 - 20 * u**3)
        return np.where(s >= 1, 1.0, np.where(inside, out, 0.0))
    elif k == 1:
        out = 140 * u**3 * (1 - u) ** 3
    elif k == 2:
        out = 420 * u**2 * (1 - u) ** 2 * (1 - 2 * u)
    elif k == 3:
        out = 840 * u * (1 - u) * (1 - 5 * u + 5 * u**2)
    else:
        raise ValueError("only derivatives up to order 3 are available")

    return np.where(inside, out, 0.0)


def _bump(u: np.ndarray, k: int) -> np.ndarray:
    # derivatives of exp(-1 / (1 - u^2)) via its logarithmic derivative a = -2u / s^2, s = 1 - u^2
    u = np.asarray(u, dtype=np.float64)
    s = 1 - u**2
    # exp(-100) is far below double precision relative to the peak
    inside = s > 1e-2
    s = np.where(inside, s, 1.0)
    g = np.where(inside, np.exp(-1 / s), 0.0)

    if k == 0:
        return g

    a = -2 * u / s**2
    if k == 1:
        return a * g

    da = -2 / s**2 - 8 * u**2 / s**3
    if k == 2:
        return (da + a**2) * g

    dda = -24 * u / s**3 - 48 * u**3 / s**4
    if k == 3:
        return (dda + 3 * a * da + a**3) * g

    raise ValueError("only derivatives up to order 3 are available")


@dataclass(frozen=True)
class TestFunction:
    """
    Compactly supported test function with derivative evaluators up to order 3.

    Args:
        derivatives (Callable): ``derivatives(x, k)`` evaluates the ``k``-th derivative at ``x``.
        support (Tuple[float, float]): interval outside of which the function vanishes.
        name (str): label used in reports.
    """

    __test__ = False

    derivatives: Callable[[np.ndarray, int], np.ndarray]
    support: Tuple[float, float]
    name: str = "phi"

    def __call__(self, x):
        return self.derivatives(np.asarray(x, dtype=np.float64), 0)

    def derivative(self, x, k: int = 1):
        return self.derivatives(np.asarray(x, dtype=np.float64), k)

    @property
    def A(self) -> float:
        """Right end of the support."""
        return self.support[1]

    @property
    def vanishes_at_zero(self) -> bool:
        return bool(abs(self(0.0)) <= 1e-14)

    def sup(self, k: int = 0, points: int = 4001) -> float:
        x = np.linspace(*self.support, points)
        return float(np.max(np.abs(self.derivative(x, k))))

    def integral(self) -> float:
        return integrate.quad(lambda x: float(self(x)), *self.support, limit=200)[0]

    def squared_norm(self) -> float:
        return integrate.quad(lambda x: float(self(x)) ** 2, *self.support, limit=200)[0]

    def check_derivatives(self, points: int = 200, rel_tol: float = 1e-6) -> bool:
        """
        Compares every derivative evaluator with a central difference of the one below it, on
        the cell midpoints of a uniform probe grid over the support.
        """
        lo, hi = self.support
        x = lo + (np.arange(points) + 0.5) * (hi - lo) / points
        step = 1e-6 * (hi - lo)
        for k in range(1, 4):
            exact = self.derivative(x, k)
            fd = (self.derivative(x + step, k - 1) - self.derivative(x - step, k - 1)) / (2 * step)
            scale = max(np.max(np.abs(exact)), 1e-300)
            if np.max(np.abs(exact - fd)) > rel_tol * scale:
                return False
        return True

    @classmethod
    def smooth_bump(cls, center: float, width: float, height: float = 1.0) -> "TestFunction":
        """``height * exp(-1 / (1 - u^2))`` with ``u = (x - center) / width``, C-infinity."""

        def derivatives(x, k):
            return height * width ** (-k) * _bump((x - center) / width, k)

        return cls(derivatives, (center - width, center + width), name="bump")

    @classmethod
    def plateau(cls, lo: float, hi: float, ramp: float) -> "TestFunction":
        """Equal to 1 on ``[lo + ramp, hi - ramp]``, rising and falling through smoothsteps."""
        assert hi - lo >= 2 * ramp > 0, "plateau ramps overlap"

        def derivatives(x, k):
            u = (x - lo) / ramp
            v = (hi - x) / ramp
            total = np.zeros_like(x)
            # Leibniz rule on smoothstep(u) * smoothstep(v)
            for j in range(k + 1):
                total = total + comb(k, j) * smoothstep(u, j) * smoothstep(v, k - j) * (
                    (1 / ramp) ** j * (-1 / ramp) ** (k - j)
                )
            return total

        return cls(derivatives, (lo, hi), name="plateau")

    @classmethod
    def from_callables(
        cls, funcs: Sequence[Callable], support: Tuple[float, float], name: str = "phi"
    ) -> "TestFunction":
        """Builds a test function from ``[f, f', f'', f''']``."""
        assert len(funcs) == 4, "need the function and its first three derivatives"

        def derivatives(x, k):
            return np.asarray(funcs[k](x), dtype=np.float64) * np.ones_like(x)

        return cls(derivatives, tuple(support), name=name)


def build_test_function(spec: Dict) -> TestFunction:
    """
    Builds a test function from a plan entry, e.g. ``{"kind": "bump", "center": 1.0,
    "width": 0.75}`` or ``{"kind": "plateau", "lo": 0.0, "hi": 1.2, "ramp": 0.1}``.
    """
    kind = spec.get("kind", "bump")
    if kind == "bump":
        return TestFunction.smooth_bump(spec["center"], spec["width"], spec.get("height", 1.0))
    elif kind == "plateau":
        return TestFunction.plateau(spec["lo"], spec["hi"], spec["ramp"])
    else:
        raise ValueError(f"unknown test function kind {kind}")


def write_csv(path: str, columns: Dict[str, Union[np.ndarray, List]], fmt: str = "%.17g"):
    """Writes equal-length columns to a CSV file with a header row."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[n], dtype=np.float64) for n in names])
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt=fmt)
