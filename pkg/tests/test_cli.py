import json

import pytest

from wallflip.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, EXIT_WINDOW, main


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv("WALLFLIP_SEED", raising=False)
    monkeypatch.delenv("WALLFLIP_PARALLELISM", raising=False)


def _config(tmp_path, plan) -> str:
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(plan))
    return str(path)


def test_simulate_writes_outputs(tmp_path) -> None:
    config = _config(
        tmp_path, {"simulate": {"epsilons": [0.5], "L": 10, "horizon": 0.5, "replicas": 2}}
    )
    assert main(["simulate", "--config", config, "--out", str(tmp_path)]) == EXIT_OK

    out = tmp_path / "simulate"
    rows = (out / "observables.csv").read_text().splitlines()
    assert rows[0].split(",") == ["epsilon", "t", "replica", "W", "A1", "A2", "eta_mass", "residual", "R_eps"]
    assert len(rows) == 3
    assert (out / "events_eps0.5_r0.jsonl").exists()
    assert (out / "intervals_eps0.5_r1.csv").exists()


def test_window_violation_exit_code(tmp_path) -> None:
    config = _config(tmp_path, {"simulate": {"epsilons": [0.5], "L": 4, "horizon": 0.5}})
    assert main(["simulate", "--config", config, "--out", str(tmp_path)]) == EXIT_WINDOW


def test_malformed_config_exit_code(tmp_path) -> None:
    path = tmp_path / "plan.json"
    path.write_text("{")
    assert main(["simulate", "--config", str(path)]) == EXIT_USAGE


def test_schema_violation_exit_code(tmp_path) -> None:
    config = _config(tmp_path, {"simulate": {"L": 0}})
    assert main(["simulate", "--config", config]) == EXIT_USAGE


def test_verify_rejects_single_replica(tmp_path) -> None:
    config = _config(tmp_path, {"suites": {"stationarity": {"replicas": 1}}})
    assert main(["verify", "all", "--config", config]) == EXIT_USAGE


def test_bad_arguments_exit_code() -> None:
    assert main([]) == EXIT_USAGE
    assert main(["fly"]) == EXIT_USAGE
    assert main(["verify", "everything"]) == EXIT_USAGE


def test_dry_run_prints_resolved_plan(capsys) -> None:
    assert main(["verify", "norms", "--seed", "7", "--dry-run"]) == EXIT_OK
    plan = json.loads(capsys.readouterr().out)
    assert plan["seed"] == 7


def test_verify_exit_codes(tmp_path) -> None:
    config = _config(tmp_path, {"suites": {"norms": {"functions": 3}}})
    assert main(["verify", "norms", "--config", config, "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "report.json").exists()

    strict = _config(tmp_path, {"suites": {"norms": {"functions": 3}}, "thresholds": {"fourier_abs": 1e-300}})
    assert main(["verify", "norms", "--config", strict, "--out", str(tmp_path)]) == EXIT_FAILED


def test_export_pmf(tmp_path) -> None:
    assert main(["export", "pmf", "--n", "10", "--out", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "export" / "pmf_n10.csv").read_text().splitlines()
    assert rows[0] == "height,probability"
    assert len(rows) == 7


def test_export_fourier_and_marginals(tmp_path) -> None:
    assert main(["export", "fourier", "--out", str(tmp_path)]) == EXIT_OK
    assert len((tmp_path / "export" / "fourier.csv").read_text().splitlines()) == 402

    config = _config(tmp_path, {"suites": {"walk": {"static_samples": 100}}})
    assert main(["export", "marginals", "--config", config, "--out", str(tmp_path)]) == EXIT_OK
    assert len((tmp_path / "export" / "marginals.csv").read_text().splitlines()) == 101


def test_export_fields(tmp_path) -> None:
    config = _config(tmp_path, {"suites": {"she": {"dx": 0.05, "x_max": 2.0}}})
    args = ["export", "fields", "--config", config, "--out", str(tmp_path), "--times", "0.02", "0.01"]
    assert main(args) == EXIT_OK
    out = tmp_path / "export"
    for name in ("field_t0.01.csv", "field_t0.02.csv", "eta_t0.01.csv", "eta_t0.02.csv"):
        rows = (out / name).read_text().splitlines()
        assert len(rows) == 42
