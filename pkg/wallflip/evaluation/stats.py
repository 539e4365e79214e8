import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from scipy import stats

from ..dynamics.simulate import RngStream
from ..utils.utils import _optional_tqdm


__all__ = [
    "Estimate",
    "RunningStats",
    "ks_test",
    "bonferroni_z",
    "loglog_slope",
    "smoothed_lattice_cdf",
    "lattice_jitter",
    "run_replicas",
]


T = TypeVar("T")


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    count: int

    def to_dict(self) -> Dict:
        return asdict(self)


class RunningStats:
    """
    Streaming mean and variance. ``merge`` combines accumulators (Chan et al. pairwise update),
    so replica results can be aggregated in any order or grouping.
    """

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0

    def push(self, value: float):
        self.update(np.array([value], dtype=np.float64))

    def update(self, values: np.ndarray) -> "RunningStats":
        values = np.asarray(values, dtype=np.float64).ravel()
        if not len(values):
            return self
        batch = RunningStats()
        batch.count = len(values)
        batch.mean = float(values.mean())
        batch._m2 = float(((values - batch.mean) ** 2).sum())
        return self.merge(batch)

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self._m2 = other.count, other.mean, other._m2
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / n
        self._m2 += other._m2 + delta**2 * self.count * other.count / n
        self.count = n
        return self

    @property
    def variance(self) -> float:
        return self._m2 / (self.count - 1) if self.count > 1 else float("nan")

    @property
    def stderr(self) -> float:
        return float(np.sqrt(self.variance / self.count)) if self.count > 1 else float("nan")

    def estimate(self) -> Estimate:
        return Estimate(self.mean, self.stderr, self.count)


def bonferroni_z(z: float, comparisons: int) -> float:
    """
    Critical standardized value for the largest of ``comparisons`` statistics, keeping the
    family-wise false-alarm rate at that of a single ``z``-sigma test.
    """
    if z <= 0:
        raise ValueError("nominal z must be positive")
    return float(stats.norm.isf(stats.norm.sf(z) / max(int(comparisons), 1)))


def ks_test(samples: np.ndarray, cdf: Callable) -> Tuple[float, float]:
    """
    Two-sided one-sample Kolmogorov-Smirnov test.

    Args:
        samples (np.ndarray): at least 50 finite samples.
        cdf (Callable): vectorized reference CDF.

    Returns:
        Tuple[float, float]: the statistic D and its asymptotic p-value.
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if len(samples) < 50:
        raise ValueError(f"KS test needs at least 50 samples, got {len(samples)}")
    if not np.all(np.isfinite(samples)) or np.ptp(samples) == 0:
        raise ValueError("degenerate sample")

    res = stats.kstest(samples, cdf, method="asymp")
    return float(res.statistic), float(res.pvalue)


def loglog_slope(
    scales: Sequence[float], values: Sequence[float], min_points: int = 3
) -> Tuple[float, float]:
    """
    Least-squares slope of ``log(values)`` against ``log(scales)``.

    Args:
        scales (Sequence[float]): positive scales spanning at least a factor 4.
        values (Sequence[float]): positive values.
        min_points (int): minimum number of pairs. Defaults to 3.

    Returns:
        Tuple[float, float]: slope and its standard error.
    """
    scales = np.asarray(scales, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    assert scales.shape == values.shape, "scales and values have different lengths"

    if len(scales) < min_points:
        raise ValueError(f"need at least {min_points} points for a log-log regression")
    if np.any(scales <= 0) or np.any(values <= 0):
        raise ValueError("log-log regression needs positive scales and values")
    if scales.max() < 4 * scales.min():
        raise ValueError("scales must span at least a factor 4")

    res = stats.linregress(np.log(scales), np.log(values))
    stderr = float(res.stderr) if len(scales) > 2 else 0.0
    return float(res.slope), stderr


def smoothed_lattice_cdf(
    values: np.ndarray, probabilities: np.ndarray, spacing: float
) -> Callable[[np.ndarray], np.ndarray]:
    """
    CDF of ``V + U`` where ``V`` has the given lattice law and ``U`` is uniform on
    ``[-spacing/2, spacing/2]``. KS tests on lattice data compare jittered samples with it.
    """
    values = np.asarray(values, dtype=np.float64)
    probabilities = np.asarray(probabilities, dtype=np.float64)

    def cdf(y):
        y = np.asarray(y, dtype=np.float64)
        frac = np.clip((y[..., None] - (values - spacing / 2)) / spacing, 0, 1)
        return (frac * probabilities).sum(axis=-1)

    return cdf


def lattice_jitter(samples: np.ndarray, spacing: float, rng) -> np.ndarray:
    """Adds independent uniform noise on ``[-spacing/2, spacing/2]``."""
    samples = np.asarray(samples, dtype=np.float64)
    return samples + rng.uniform(-spacing / 2, spacing / 2, samples.shape)


def run_replicas(
    fn: Callable[[RngStream], T],
    replicas: int,
    seed: int,
    parallelism: Optional[int] = None,
    first_stream: int = 0,
    use_tqdm: bool = False,
    desc: str = None,
) -> List[T]:
    """
    Runs ``fn`` on the streams ``(seed, first_stream + i)`` for ``i < replicas`` and returns the
    results in replica order, independently of the degree of parallelism.

    Args:
        fn (Callable): picklable function of an :class:`RngStream`.
        replicas (int): number of replicas.
        seed (int): base seed.
        parallelism (int): worker processes. Defaults to the number of available cores.
        first_stream (int): offset of the first stream id. Defaults to 0.
        use_tqdm (bool): show a progress bar. Defaults to False.
        desc (str): progress bar label.

    Returns:
        List: ``fn`` outputs in replica order.
    """
    streams = [RngStream(seed, first_stream + i) for i in range(replicas)]
    if parallelism is None:
        parallelism = os.cpu_count() or 1

    if parallelism <= 1 or replicas <= 1:
        return list(_optional_tqdm(map(fn, streams), use_tqdm, total=replicas, desc=desc))

    logging.info(f"Running {replicas} replicas on {parallelism} processes")
    chunksize = max(1, replicas // (4 * parallelism))
    with ProcessPoolExecutor(max_workers=parallelism) as executor:
        return list(
            _optional_tqdm(
                executor.map(fn, streams, chunksize=chunksize), use_tqdm, total=replicas, desc=desc
            )
        )
