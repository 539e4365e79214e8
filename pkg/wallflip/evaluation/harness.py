"""
Acceptance suites. Each suite runs its replicas through :func:`run_replicas`, aggregates them and
appends named criteria (statistic, threshold, verdict) and tables to a :class:`StatReport`.
"""

import csv
import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from .. import __version__
from ..config import ConfigError, plan_hash
from ..continuum.she import SheGrid, bessel3_marginal_cdf, sample_bessel3, she_run
from ..dynamics.simulate import FlowBalanceObserver, RngStream, SuperpositionClock, run_until
from ..observables.norms import c_coef, direct_fourier_quadrature, fourier_hat
from ..observables.scaling import (
    check_window,
    increment_norms,
    observable_row,
    reflection_measure,
    support_identity,
)
from ..utils.utils import TestFunction, build_test_function
from ..walks.conditioned import (
    closed_form_pmf,
    corner_density_statistic,
    coupling_violations,
    exact_pmf,
    moment_growth_check,
    occupation_statistic,
    sample_coupled_paths,
    sample_pi_paths,
    sample_stationary_state,
    stochastic_domination_check,
)
from .stats import (
    RunningStats,
    bonferroni_z,
    ks_test,
    lattice_jitter,
    loglog_slope,
    run_replicas,
    smoothed_lattice_cdf,
)


__all__ = ["SUITES", "STREAM_OFFSETS", "ExperimentPlan", "CriterionResult", "StatReport", "run_plan"]


SUITES = ("walk", "norms", "stationarity", "bracket", "reflection", "she")

# first stream id of each suite; the reflection suite replays the bracket streams
STREAM_OFFSETS = {
    "walk": 1 << 24,
    "norms": 2 << 24,
    "stationarity": 3 << 24,
    "flow": 4 << 24,
    "bracket": 5 << 24,
    "reflection": 5 << 24,
    "she": 6 << 24,
    "export": 7 << 24,
}


@dataclass
class ExperimentPlan:
    """Resolved experiment plan, see ``wallflip/resources/default_plan.json``."""

    experiment: str
    seed: int
    out: str
    run: List[str]
    test_functions: Dict[str, Dict]
    norms: Dict[str, float]
    simulate: Dict[str, Any]
    suites: Dict[str, Dict[str, Any]]
    thresholds: Dict[str, float]
    parallelism: Optional[int] = None
    use_tqdm: bool = False
    schema_version: int = 1

    @classmethod
    def from_dict(cls, plan: Dict) -> "ExperimentPlan":
        return cls(**plan)

    def to_dict(self) -> Dict:
        return asdict(self)

    @property
    def hash(self) -> str:
        return plan_hash(self.to_dict())

    @property
    def phi(self) -> TestFunction:
        return build_test_function(self.test_functions["phi"])

    @property
    def psi(self) -> TestFunction:
        return build_test_function(self.test_functions["psi"])

    def validate(self, suites: Sequence[str]):
        """
        Checks the replica counts and the window rule of the requested suites.

        Raises:
            ConfigError: on unknown suites or fewer than 2 replicas.
            WindowViolation
        """
        for name in suites:
            if name not in SUITES:
                raise ConfigError(f"unknown suite {name}")
            params = self.suites.get(name, {})
            for key, value in params.items():
                if key.endswith("replicas") and key != "increment_replicas" and value < 2:
                    raise ConfigError(f"suite {name} needs at least 2 replicas, got {key}={value}")
            if name in ("bracket", "reflection"):
                for eps in params["epsilons"]:
                    check_window(eps, params["L"], self.phi.A, params["t"])


@dataclass
class CriterionResult:
    """Verdict of one named acceptance criterion. Non-gating criteria are reported only."""

    name: str
    statistic: float
    threshold: float
    comparison: str
    passed: bool
    gating: bool = True
    details: Dict[str, Any] = field(default_factory=dict)


@dataclass
class StatReport:
    """
    Report of a plan run. ``body`` holds everything that depends on the plan and seed only;
    ``meta`` holds timings and the creation time.
    """

    experiment: str
    seed: int
    plan_hash: str
    criteria: List[CriterionResult] = field(default_factory=list)
    statistics: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    tables: Dict[str, Dict[str, list]] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria if c.gating)

    def add(self, criterion: CriterionResult):
        level = logging.INFO if criterion.passed or not criterion.gating else logging.WARNING
        logging.log(
            level,
            f"{criterion.name}: {criterion.statistic:.6g} {criterion.comparison} "
            f"{criterion.threshold:.6g} -> {'pass' if criterion.passed else 'FAIL'}",
        )
        self.criteria.append(criterion)

    def body(self) -> Dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "plan_hash": self.plan_hash,
            "passed": self.passed,
            "criteria": [asdict(c) for c in self.criteria],
            "statistics": self.statistics,
            "tables": self.tables,
        }

    def to_json(self) -> str:
        return json.dumps(
            {"schema_version": 1, "body": self.body(), "meta": self.meta},
            indent=2,
            sort_keys=True,
            default=_to_builtin,
        )

    def write(self, out_dir: str):
        """Writes ``report.json``, ``criteria.csv`` and one CSV per table."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        _write_table(
            out / "criteria.csv",
            {
                key: [getattr(c, key) for c in self.criteria]
                for key in ("name", "statistic", "comparison", "threshold", "passed", "gating")
            },
        )
        for name, table in self.tables.items():
            _write_table(out / f"{name}.csv", table)
        logging.info(f"Report written to {out}")


def _to_builtin(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj)} is not JSON serializable")


def _write_table(path: Path, columns: Dict[str, list]):
    names = list(columns)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(names)
        writer.writerows(zip(*(columns[n] for n in names)))


def _decreasing(values: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def _run(plan: ExperimentPlan, fn, replicas: int, stream: int, desc: str) -> list:
    return run_replicas(
        fn,
        replicas,
        plan.seed,
        parallelism=plan.parallelism,
        first_stream=stream,
        use_tqdm=plan.use_tqdm,
        desc=desc,
    )


def _simulate(L: int, horizon: float, stream: RngStream, **kwargs):
    gen = stream.generator()
    state = sample_stationary_state(L, gen)
    return run_until(state, horizon, SuperpositionClock(L, gen), **kwargs)


# replica workers are module-level so that process pools can pickle them


def _stationarity_worker(spec: Dict, stream: RngStream) -> np.ndarray:
    state, _ = _simulate(spec["L"], spec["horizon"], stream, record=False)
    return state.heights[spec["sites"]]


def _flow_worker(spec: Dict, stream: RngStream) -> FlowBalanceObserver:
    observer = FlowBalanceObserver(spec["flow_start"], spec["flow_width"])
    _simulate(spec["L"], spec["flow_horizon"], stream, observers=[observer])
    return observer


def _bracket_worker(spec: Dict, stream: RngStream) -> Dict:
    eps, t = spec["epsilon"], spec["t"]
    phi = build_test_function(spec["phi"])
    psi = build_test_function(spec["psi"])
    _, history = _simulate(spec["L"], t / eps**2, stream)

    row = observable_row(history, phi, eps, t, psi=psi)
    row["support_lhs"], row["support_rhs"] = support_identity(history, psi, eps)
    if stream.stream_id < spec["increments_until"]:
        row["increments"] = increment_norms(
            history, eps, spec["lags"], s0=spec["s0"], rho=spec["rho"]
        ).tolist()
    return row


def _reflection_worker(spec: Dict, stream: RngStream) -> Dict:
    eps, t = spec["epsilon"], spec["t"]
    psi = build_test_function(spec["psi"])
    _, history = _simulate(spec["L"], t / eps**2, stream)
    measure = reflection_measure(history, eps, spec["bin_width"])
    lhs, rhs = support_identity(history, psi, eps, spec["bin_width"])
    return {
        "support_lhs": lhs,
        "support_rhs": rhs,
        "total_mass": measure.total_mass(),
        "min_mass": float(measure.mass.min()),
    }


def _she_worker(spec: Dict, stream: RngStream) -> Dict:
    gen = stream.generator()
    grid = SheGrid.from_dx(spec["dx"], spec["x_max"], spec["ratio"])
    u0 = sample_bessel3(grid, gen, size=spec["batch"]).values
    result = she_run(u0, spec["t"], grid, gen, observe_at=spec["x0"])
    idx = int(round(spec["x0"] / grid.dx))
    return {
        "samples": result.state.u[:, idx],
        "support_defect": result.support_defect,
        "min_u": float(result.state.u.min()),
    }


def _relative_gap(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def suite_walk(plan: ExperimentPlan, report: StatReport):
    """Conditioned-walk limits, coupling, static invariance principle and moment growth."""
    p, th = plan.suites["walk"], plan.thresholds
    phi = plan.phi
    gen = RngStream(plan.seed, STREAM_OFFSETS["walk"]).generator()
    integral = phi.integral()

    N = p["N"]
    paths = sample_pi_paths(int(math.ceil(phi.A * N)) + 2, p["paths"], gen)
    density = corner_density_statistic(paths, phi, N)
    report.statistics["corner_density"] = RunningStats().update(density).estimate().to_dict()
    gap = abs(density.mean() - integral / 2) / integral
    report.add(CriterionResult("corner_density", gap, th["corner_density_rel"], "<=", gap <= th["corner_density_rel"]))

    k = p["occupation_level"]
    occupation = occupation_statistic(paths, k, phi, N).mean()
    small = occupation_statistic(paths[:, : int(math.ceil(phi.A * p["N_small"])) + 1], k, phi, p["N_small"]).mean()
    rel = occupation / integral
    report.add(
        CriterionResult(
            "transience",
            rel,
            th["transience_rel"],
            "<=",
            rel <= th["transience_rel"] and occupation < small,
            details={"mean": occupation, "mean_small_N": small},
        )
    )

    n = p["coupled_length"]
    x, s, _, _, _ = sample_coupled_paths(n, p["coupled_pairs"], gen)
    violations = int(coupling_violations(x, s).sum())
    report.add(
        CriterionResult(
            "coupling_domination", violations, th["coupling_violations"], "<=", violations <= th["coupling_violations"]
        )
    )

    heights = np.arange(n % 2, n + 1, 2)
    x_cdf = smoothed_lattice_cdf(heights, closed_form_pmf(n)[heights], 2.0)
    _, p_x = ks_test(lattice_jitter(x[:, -1], 2.0, gen), x_cdf)
    # S_n - 1 is a simple walk of n - 1 steps
    ends = np.arange(2 - n, n + 1, 2)
    s_cdf = smoothed_lattice_cdf(ends, stats.binom.pmf((ends + n - 2) // 2, n - 1, 0.5), 2.0)
    _, p_s = ks_test(lattice_jitter(s[:, -1], 2.0, gen), s_cdf)
    p_min = min(p_x, p_s)
    report.add(
        CriterionResult(
            "coupling_marginals", p_min, th["marginal_p"], ">=", p_min >= th["marginal_p"],
            details={"p_conditioned": p_x, "p_simple": p_s},
        )
    )

    eps, x0 = p["static_epsilon"], p["static_x"]
    m = int(round(x0 / eps))
    values = math.sqrt(eps) * sample_pi_paths(m, p["static_samples"], gen)[:, m]
    D, _ = ks_test(lattice_jitter(values, 2 * math.sqrt(eps), gen), lambda r: bessel3_marginal_cdf(x0, r))
    report.add(CriterionResult("static_invariance", D, th["static_ks"], "<=", D <= th["static_ks"]))

    rows = moment_growth_check(p["moment_orders"], p["moment_lengths"], p["moment_replicas"], gen)
    report.tables["moments"] = {
        "kind": [r.kind for r in rows],
        "order": [r.order for r in rows],
        "slope": [r.slope for r in rows],
        "slope_stderr": [r.slope_stderr for r in rows],
        "stable": [r.stable for r in rows],
    }
    for r in rows:
        if r.kind == "simple_walk":
            continue
        bound = r.order + th["moment_slack"]
        report.add(CriterionResult(f"moment_exponent_{r.kind}_{r.order}", r.slope, bound, "<=", r.slope <= bound))

    dom = stochastic_domination_check(p["domination_n"], p["domination_m"], p["domination_replicas"], gen)
    z = max(dom["neg_vs_pos"], dom["pos_vs_fresh"])
    # one-sided excess at every threshold of both dominations
    critical = bonferroni_z(th["domination_z"], 2 * dom["thresholds"])
    report.add(
        CriterionResult("stochastic_domination", z, critical, "<=", z <= critical,
                        details={**dom, "nominal_z": th["domination_z"]})
    )


def suite_norms(plan: ExperimentPlan, report: StatReport):
    """Lattice-sum Fourier formula against direct quadrature, and the range of ``c_{ζ,ε}``."""
    p, th = plan.suites["norms"], plan.thresholds
    gen = RngStream(plan.seed, STREAM_OFFSETS["norms"]).generator()
    eps = p["epsilon"]
    zeta = np.linspace(-p["zeta_max"], p["zeta_max"], p["zeta_points"])

    worst = 0.0
    hermitian = 0.0
    for _ in range(p["functions"]):
        g = gen.normal(size=p["points"])
        g[0] = 0.0
        lattice = fourier_hat(g, zeta, eps).values
        worst = max(worst, float(np.abs(lattice - direct_fourier_quadrature(g, eps, zeta)).max()))
        hermitian = max(hermitian, float(np.abs(lattice - np.conj(lattice[::-1])).max()))
    report.add(
        CriterionResult(
            "fourier_transform", worst, th["fourier_abs"], "<=", worst <= th["fourier_abs"],
            details={"hermitian_defect": hermitian},
        )
    )

    dense = np.linspace(-50 / eps, 50 / eps, 100001)
    c = c_coef(dense, eps)
    excess = max(float(-c.min()), float(c.max() - eps), 0.0)
    report.add(CriterionResult("c_coef_range", excess, 1e-15 * eps, "<=", excess <= 1e-15 * eps))


def suite_stationarity(plan: ExperimentPlan, report: StatReport):
    """Marginals of the dynamics started from π, and flow balance of local transitions."""
    p, th = plan.suites["stationarity"], plan.thresholds
    spec = dict(p)
    heights = np.array(
        _run(plan, partial(_stationarity_worker, spec), p["replicas"], STREAM_OFFSETS["stationarity"], "stationarity")
    )
    gen = RngStream(plan.seed, STREAM_OFFSETS["stationarity"] - 1).generator()
    for j, n in enumerate(p["sites"]):
        pmf = exact_pmf(n)
        cdf = smoothed_lattice_cdf(pmf.heights, pmf.probabilities[pmf.heights], 2.0)
        D, pvalue = ks_test(lattice_jitter(heights[:, j], 2.0, gen), cdf)
        report.add(
            CriterionResult(f"stationarity_site_{n}", D, th["stationarity_ks"], "<=", D <= th["stationarity_ks"],
                            details={"p_value": pvalue})
        )

    observers = _run(plan, partial(_flow_worker, spec), p["flow_replicas"], STREAM_OFFSETS["flow"], "flow balance")
    merged = FlowBalanceObserver(p["flow_start"], p["flow_width"])
    for obs in observers:
        merged.merge(obs)
    rows = [r for r in merged.flow_balance_report() if r[2] + r[3] >= p["flow_min_count"]]
    report.tables["flow_balance"] = {
        "a": [" ".join(map(str, r[0])) for r in rows],
        "b": [" ".join(map(str, r[1])) for r in rows],
        "n_ab": [r[2] for r in rows],
        "n_ba": [r[3] for r in rows],
        "z": [r[4] for r in rows],
    }
    z = max((abs(r[4]) for r in rows), default=0.0)
    # two-sided per pair, family-wise rate 2 sf(z) split over the pairs
    critical = bonferroni_z(th["flow_balance_z"], len(rows))
    report.add(
        CriterionResult("flow_balance", z, critical, "<=", z <= critical,
                        details={"pairs": len(rows), "nominal_z": th["flow_balance_z"]})
    )


def suite_bracket(plan: ExperimentPlan, report: StatReport):
    """
    Semi-discrete identity, bracket convergence, returns to zero, support identity and error term
    across the ``ε`` ladder, plus the increment-scaling diagnostic.
    """
    p, th = plan.suites["bracket"], plan.thresholds
    phi = plan.phi
    # the bracket of W(φ) at time t tends to t ∫φ²
    target = p["t"] * phi.squared_norm()
    epsilons = sorted(p["epsilons"], reverse=True)

    table = {k: [] for k in ("epsilon", "t", "replica", "W", "A1", "A2", "eta_mass", "residual", "R_eps")}
    per_eps = {k: [] for k in ("epsilon", "bracket_error", "bracket_stderr", "A2", "A2_stderr", "R_abs", "R_stderr")}
    max_residual = 0.0
    max_support = 0.0
    increments = []

    for i, eps in enumerate(epsilons):
        first = STREAM_OFFSETS["bracket"] + (i << 16)
        use_increments = p["increment_epsilon"] is not None and math.isclose(eps, p["increment_epsilon"])
        spec = {
            "epsilon": eps,
            "t": p["t"],
            "L": p["L"],
            "phi": plan.test_functions["phi"],
            "psi": plan.test_functions["psi"],
            "lags": p["increment_lags"],
            "increments_until": first + p["increment_replicas"] if use_increments else -1,
            "s0": plan.norms["s0"],
            "rho": plan.norms["rho"],
        }
        rows = _run(plan, partial(_bracket_worker, spec), p["replicas"], first, f"bracket eps={eps}")

        err = RunningStats().update(np.array([abs(r["A1"] - r["A2"] - target) for r in rows]))
        a2 = RunningStats().update(np.array([r["A2"] for r in rows]))
        r_abs = RunningStats().update(np.array([abs(r["R_eps"]) for r in rows]))
        for key, value in (
            ("epsilon", eps),
            ("bracket_error", err.mean),
            ("bracket_stderr", err.stderr),
            ("A2", a2.mean),
            ("A2_stderr", a2.stderr),
            ("R_abs", r_abs.mean),
            ("R_stderr", r_abs.stderr),
        ):
            per_eps[key].append(value)

        for j, r in enumerate(rows):
            max_residual = max(max_residual, abs(r["residual"]) / r["residual_scale"] if r["residual_scale"] else 0.0)
            max_support = max(max_support, _relative_gap(r["support_lhs"], r["support_rhs"]))
            for key in table:
                table[key].append(j if key == "replica" else r[key])
            if "increments" in r:
                increments.append(r["increments"])

    report.tables["observables"] = table
    report.tables["bracket_by_epsilon"] = per_eps
    report.statistics["bracket_by_epsilon"] = per_eps

    report.add(
        CriterionResult("semidiscrete_identity", max_residual, th["semidiscrete_residual"], "<=",
                        max_residual <= th["semidiscrete_residual"])
    )

    last = per_eps["bracket_error"][-1] / target
    report.add(
        CriterionResult("bracket_convergence", last, th["bracket_rel"], "<=",
                        last <= th["bracket_rel"] and _decreasing(per_eps["bracket_error"]),
                        details={"decreasing": _decreasing(per_eps["bracket_error"])})
    )

    last = per_eps["A2"][-1] / target
    report.add(
        CriterionResult("returns_to_zero", last, th["returns_rel"], "<=",
                        last <= th["returns_rel"] and _decreasing(per_eps["A2"]),
                        details={"decreasing": _decreasing(per_eps["A2"])})
    )

    report.add(CriterionResult("support_condition", max_support, th["support_rel"], "<=", max_support <= th["support_rel"]))

    slope, slope_err = loglog_slope(epsilons, per_eps["R_abs"], min_points=2)
    report.add(
        CriterionResult("error_term", slope, th["error_slope"], ">=",
                        slope >= th["error_slope"] and _decreasing(per_eps["R_abs"]),
                        details={"slope_stderr": slope_err, "decreasing": _decreasing(per_eps["R_abs"])})
    )

    if len(increments) >= 2:
        means = np.mean(increments, axis=0)
        slope, slope_err = loglog_slope(p["increment_lags"], means)
        ok = slope >= th["increment_slope"]
        if not ok:
            warnings.warn(f"Increment scaling slope {slope:.3f} below {th['increment_slope']}", RuntimeWarning)
        report.add(
            CriterionResult("increment_scaling", slope, th["increment_slope"], ">=", ok, gating=False,
                            details={"slope_stderr": slope_err, "replicas": len(increments)})
        )


def suite_reflection(plan: ExperimentPlan, report: StatReport):
    """Support identity of the binned reflection measure, on the bracket suite's runs."""
    p, th = plan.suites["reflection"], plan.thresholds
    worst = 0.0
    min_mass = 0.0
    masses = {"epsilon": [], "eta_mass": [], "eta_mass_stderr": []}
    for i, eps in enumerate(sorted(p["epsilons"], reverse=True)):
        spec = {
            "epsilon": eps,
            "t": p["t"],
            "L": p["L"],
            "psi": plan.test_functions["psi"],
            "bin_width": p["bin_width"],
        }
        first = STREAM_OFFSETS["reflection"] + (i << 16)
        rows = _run(plan, partial(_reflection_worker, spec), p["replicas"], first, f"reflection eps={eps}")
        worst = max([worst] + [_relative_gap(r["support_lhs"], r["support_rhs"]) for r in rows])
        min_mass = min([min_mass] + [r["min_mass"] for r in rows])
        mass = RunningStats().update(np.array([r["total_mass"] for r in rows]))
        masses["epsilon"].append(eps)
        masses["eta_mass"].append(mass.mean)
        masses["eta_mass_stderr"].append(mass.stderr)

    report.tables["reflection_mass"] = masses
    report.add(
        CriterionResult("support_identity", worst, th["support_rel"], "<=",
                        worst <= th["support_rel"] and min_mass >= 0, details={"min_mass": min_mass})
    )


def suite_she(plan: ExperimentPlan, report: StatReport):
    """Bessel(3) invariance of the reflected stochastic heat equation scheme."""
    p, th = plan.suites["she"], plan.thresholds
    batches = int(math.ceil(p["replicas"] / p["batch"]))
    rows = _run(plan, partial(_she_worker, dict(p)), batches, STREAM_OFFSETS["she"], "she")
    samples = np.concatenate([r["samples"] for r in rows])[: p["replicas"]]
    D, pvalue = ks_test(samples, lambda r: bessel3_marginal_cdf(p["x0"], r))
    report.statistics["she_marginal"] = RunningStats().update(samples).estimate().to_dict()
    report.add(
        CriterionResult(
            "spde_invariance", D, th["spde_ks"], "<=",
            D <= th["spde_ks"] and all(r["min_u"] >= 0 for r in rows),
            details={
                "p_value": pvalue,
                "support_defect": max(r["support_defect"] for r in rows),
            },
        )
    )


_SUITE_FUNCTIONS = {
    "walk": suite_walk,
    "norms": suite_norms,
    "stationarity": suite_stationarity,
    "bracket": suite_bracket,
    "reflection": suite_reflection,
    "she": suite_she,
}


def run_plan(
    plan: ExperimentPlan, suites: Optional[Sequence[str]] = None, out: Optional[str] = None, write: bool = True
) -> StatReport:
    """
    Runs the requested suites (by default those listed in ``plan.run``) and writes the report.

    Args:
        plan (ExperimentPlan): resolved plan.
        suites (Sequence[str]): suite names. Defaults to ``plan.run``.
        out (str): output directory. Defaults to ``plan.out``.
        write (bool): write the report files. Defaults to True.

    Returns:
        StatReport
    """
    suites = list(plan.run if suites is None else suites)
    plan.validate(suites)

    report = StatReport(plan.experiment, plan.seed, plan.hash)
    report.meta = {
        "created": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
        "runtime_seconds": {},
    }
    for name in suites:
        logging.info(f"Running the {name} suite")
        start = time.perf_counter()
        _SUITE_FUNCTIONS[name](plan, report)
        report.meta["runtime_seconds"][name] = time.perf_counter() - start

    logging.info(f"{sum(c.passed for c in report.criteria)} of {len(report.criteria)} criteria passed")
    if write:
        report.write(out or plan.out)
    return report
