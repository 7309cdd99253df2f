import json

import pytest

from shipems.config import (
    SCHEMA,
    SOURCES,
    ConfigError,
    ToolkitConfig,
    config_from_dict,
    dump_config,
    load_config,
    reference,
    reference_markdown,
)


def test_defaults_round_trip_json_and_yaml(tmp_path):
    cfg = ToolkitConfig()
    for fmt, name in (("json", "c.json"), ("yaml", "c.yaml")):
        dump_config(cfg, tmp_path / name, fmt)
        assert load_config(tmp_path / name) == cfg


def test_partial_file_overrides_one_value(tmp_path):
    (tmp_path / "c.yaml").write_text("simulation:\n  aging: eol\nstrategy:\n  name: ecms\n")
    cfg = load_config(tmp_path / "c.yaml")
    sim = cfg.sim_config()
    assert sim.aging == "eol" and sim.strategy.name == "ecms"
    assert cfg.fuel_cell == ToolkitConfig().fuel_cell


@pytest.mark.parametrize(
    "doc",
    [
        {"plant": {"fuel_cell": {"E_oc": 700}}},
        {"bogus": 1},
        {"costs": {"other": {}}},
        {"schema": "shipems.config/0"},
        {"limits": {"SoC_min": 0.9}},
        {"strategy": {"name": "mpc"}},
        {"forecaster": {"grid": "huge"}},
        [],
    ],
)
def test_invalid_documents_rejected(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_config("/nonexistent/config.yaml")


def test_unparseable_file(tmp_path):
    (tmp_path / "bad.yaml").write_text("a: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")


def test_every_key_has_a_source():
    ref = reference()
    assert {r["key"] for r in ref} == set(SOURCES)
    assert all(r["source"] for r in ref)
    md = reference_markdown()
    assert md.startswith(f"# Configuration reference ({SCHEMA})")
    assert md.count("\n| `") == len(ref)


def test_system_reflects_settings():
    cfg = config_from_dict({"strategy": {"k_soc": 1000.0, "p_fc_ref_ratio": 0.5}})
    system = cfg.system()
    assert system.k_soc == 1000.0
    assert system.P_fc_ref("bol") == pytest.approx(2075.0)


def test_dump_is_plain_json():
    data = json.loads(dump_config(ToolkitConfig()))
    assert data["schema"] == SCHEMA
    assert data["plant"]["battery"]["C_bat"] == 3125.0
    assert "c_deg" not in data["costs"]["prices"]
