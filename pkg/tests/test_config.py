import json

import pytest

from wallflip.config import ConfigError, default_plan, load_config, plan_hash, validate_plan


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv("WALLFLIP_SEED", raising=False)
    monkeypatch.delenv("WALLFLIP_PARALLELISM", raising=False)


def _write(tmp_path, plan) -> str:
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(plan))
    return str(path)


def test_default_plan_is_valid() -> None:
    plan = default_plan()
    validate_plan(plan)
    assert load_config() == plan


def test_flow_and_domination_gates_use_three_sigma() -> None:
    thresholds = default_plan()["thresholds"]
    assert thresholds["flow_balance_z"] == 3.0
    assert thresholds["domination_z"] == 3.0


def test_partial_plan_is_merged(tmp_path) -> None:
    plan = load_config(_write(tmp_path, {"simulate": {"L": 80}, "seed": 3}))
    assert plan["simulate"]["L"] == 80
    assert plan["simulate"]["horizon"] == default_plan()["simulate"]["horizon"]
    assert plan["seed"] == 3


def test_overrides_take_precedence(tmp_path, monkeypatch) -> None:
    path = _write(tmp_path, {"seed": 3})
    monkeypatch.setenv("WALLFLIP_SEED", "5")
    monkeypatch.setenv("WALLFLIP_PARALLELISM", "2")
    assert load_config(path)["seed"] == 5
    assert load_config(path)["parallelism"] == 2
    assert load_config(path, seed=7)["seed"] == 7


def test_bad_environment_value(monkeypatch) -> None:
    monkeypatch.setenv("WALLFLIP_SEED", "abc")
    with pytest.raises(ConfigError, match="WALLFLIP_SEED"):
        load_config()


@pytest.mark.parametrize(
    "plan, where",
    [
        ({"simulate": {"L": 0}}, "simulate/L"),
        ({"suites": {"walk": {"coupled_length": 7}}}, "suites/walk/coupled_length"),
        ({"typo": 1}, "<root>"),
        ({"run": ["walk", "fly"]}, "run/1"),
    ],
)
def test_schema_violations(tmp_path, plan, where) -> None:
    with pytest.raises(ConfigError, match=f"invalid plan at {where}"):
        load_config(_write(tmp_path, plan))


def test_unreadable_plans(tmp_path) -> None:
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="malformed JSON"):
        load_config(bad)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    with pytest.raises(ConfigError, match="JSON object"):
        load_config(_write(tmp_path, [1, 2]))


def test_plan_hash() -> None:
    plan = default_plan()
    assert plan_hash(plan) == plan_hash(json.loads(json.dumps(plan)))
    assert len(plan_hash(plan)) == 64
    plan["seed"] += 1
    assert plan_hash(plan) != plan_hash(default_plan())
