"""
``wallflip`` command line: ``simulate``, ``verify <suite>`` and ``export <what>``.

Exit codes are 0 on success, 1 when a gating criterion fails, 2 on usage or configuration errors
and 3 on window-rule violations.
"""

import argparse
import json
import logging
import math
from pathlib import Path
from typing import List, Optional

import numpy as np

from .config import ConfigError, load_config
from .continuum.she import SheGrid, sample_bessel3, she_run
from .dynamics.simulate import RngStream, SuperpositionClock, run_until
from .evaluation.harness import STREAM_OFFSETS, SUITES, ExperimentPlan, run_plan
from .observables.norms import fourier_hat
from .observables.scaling import WindowViolation, check_window, observable_row, rescale
from .utils.utils import write_csv
from .walks.conditioned import exact_pmf, sample_pi_paths, sample_stationary_state


EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_WINDOW = 3

EXPORTS = ("pmf", "fourier", "marginals", "fields")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment plan")
    common.add_argument("--seed", type=int, help="base seed, overrides the plan and WALLFLIP_SEED")
    common.add_argument(
        "--parallelism", type=int, help="worker processes, overrides WALLFLIP_PARALLELISM"
    )
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument(
        "--dry-run", action="store_true", help="print the resolved plan without running it"
    )
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(
        prog="wallflip", description="Corner-flip interface above a hard wall: runs and checks"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="simulate and export events and observables")

    verify = sub.add_parser("verify", parents=[common], help="run an acceptance suite")
    verify.add_argument("suite", choices=list(SUITES) + ["all"])

    export = sub.add_parser("export", parents=[common], help="write reference data as CSV")
    export.add_argument("what", choices=EXPORTS)
    export.add_argument("--n", type=int, default=10, help="walk length for the pmf export")
    export.add_argument(
        "--times", type=float, nargs="+", help="snapshot times for the fields export"
    )
    return parser


def cmd_simulate(plan: ExperimentPlan, args: Optional[argparse.Namespace] = None) -> int:
    """
    Runs ``simulate.replicas`` stationary starts per ``ε`` and writes per run the event log
    (JSON lines) and interval table, plus one observable table for all runs.
    """
    sim = plan.simulate
    phi, psi = plan.phi, plan.psi
    out = Path(plan.out) / "simulate"
    out.mkdir(parents=True, exist_ok=True)

    for eps in sim["epsilons"]:
        check_window(eps, sim["L"], phi.A, sim["horizon"])

    columns = {k: [] for k in ("epsilon", "t", "replica", "W", "A1", "A2", "eta_mass", "residual", "R_eps")}
    for i, eps in enumerate(sim["epsilons"]):
        for r in range(sim["replicas"]):
            gen = RngStream(plan.seed, (i << 16) + r).generator()
            state = sample_stationary_state(sim["L"], gen)
            _, history = run_until(
                state,
                sim["horizon"] / eps**2,
                SuperpositionClock(sim["L"], gen),
                record_null=sim["record_null"],
            )
            tag = f"eps{eps:g}_r{r}"
            history.to_jsonl(out / f"events_{tag}.jsonl")
            history.intervals_to_csv(out / f"intervals_{tag}.csv")

            row = observable_row(history, phi, eps, sim["horizon"], psi=psi)
            row["replica"] = r
            for key in columns:
                columns[key].append(row[key])
            logging.info(f"eps={eps:g} replica {r}: {len(history)} events")

    write_csv(out / "observables.csv", columns)
    return EXIT_OK


def cmd_verify(plan: ExperimentPlan, suite: str) -> int:
    suites = list(SUITES) if suite == "all" else [suite]
    report = run_plan(plan, suites)
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_export(plan: ExperimentPlan, what: str, n: int = 10, times: Optional[List[float]] = None) -> int:
    out = Path(plan.out) / "export"
    out.mkdir(parents=True, exist_ok=True)
    gen = RngStream(plan.seed, STREAM_OFFSETS["export"]).generator()

    if what == "pmf":
        exact_pmf(n).to_csv(out / f"pmf_n{n}.csv")

    elif what == "fourier":
        eps, L = plan.simulate["epsilons"][0], plan.simulate["L"]
        h = rescale(sample_stationary_state(L, gen), eps, rho=plan.norms["rho"])
        zeta = np.linspace(-np.pi / eps, np.pi / eps, 401)
        fourier_hat(h, zeta).to_csv(out / "fourier.csv")

    elif what == "marginals":
        walk = plan.suites["walk"]
        eps, x0 = walk["static_epsilon"], walk["static_x"]
        m = int(round(x0 / eps))
        values = math.sqrt(eps) * sample_pi_paths(m, walk["static_samples"], gen)[:, m]
        write_csv(out / "marginals.csv", {"value": values})

    elif what == "fields":
        p = plan.suites["she"]
        grid = SheGrid.from_dx(p["dx"], p["x_max"], p["ratio"])
        u = sample_bessel3(grid, gen).values
        now = 0.0
        for t in sorted(times or [p["t"]]):
            if t > now:
                result = she_run(u, t - now, grid, gen, observe_at=p["x0"])
                u = result.state.u
                write_csv(out / f"eta_t{t:g}.csv", {"x": grid.x, "eta": result.eta_record.sum(axis=0)})
                now = t
            write_csv(out / f"field_t{t:g}.csv", {"x": grid.x, "u": u})

    logging.info(f"Exported {what} to {out}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
    )

    try:
        config = load_config(args.config, seed=args.seed, parallelism=args.parallelism)
        if args.out is not None:
            config["out"] = str(args.out)
        plan = ExperimentPlan.from_dict(config)

        if args.command == "verify":
            plan.validate(list(SUITES) if args.suite == "all" else [args.suite])
        if args.dry_run:
            print(json.dumps(plan.to_dict(), indent=2, sort_keys=True))
            return EXIT_OK

        if args.command == "simulate":
            return cmd_simulate(plan, args)
        elif args.command == "verify":
            return cmd_verify(plan, args.suite)
        else:
            return cmd_export(plan, args.what, args.n, args.times)

    except ConfigError as e:
        logging.error(str(e))
        return EXIT_USAGE
    except WindowViolation as e:
        logging.error(str(e))
        return EXIT_WINDOW


if __name__ == "__main__":
    raise SystemExit(main())
