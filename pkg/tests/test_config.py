import json

import pytest

from carnot_rearrange.config import (
    ALL_CHECKS,
    BUNDLED,
    bundled_config,
    config_from_dict,
    load_config,
)
from carnot_rearrange.errors import InputError


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_load(name):
    cfg = bundled_config(name)
    assert cfg.fields
    assert set(cfg.checks) <= set(ALL_CHECKS)


def test_defaults():
    cfg = config_from_dict({"group": "euclidean2"})
    assert cfg.gauges == ["euclidean"]
    assert cfg.levels == 512 and cfg.p_values == [1.0, 2.0]
    assert cfg.tolerance("equimeasurability") == 0.01


@pytest.mark.parametrize("bad,key", [
    ({"group": "engel"}, "config.group"),
    ({"group": "heisenberg1", "gauges": ["riemannian"]}, "config.gauges"),
    ({"group": "heisenberg1", "resolution": -1}, "config.resolution"),
    ({"group": "heisenberg1", "p_values": [0.5]}, "config.p_values"),
    ({"group": "heisenberg1", "checks": ["magic"]}, "config.checks"),
    ({"group": "heisenberg1", "colour": "red"}, "config:"),
    ({"group": "heisenberg1", "fields": [{"builder": "nope"}]}, "config.fields"),
    ({"group": "heisenberg1", "fields": [{"builder": "cone", "path": "u.csv"}]}, "config.fields"),
    ({"gauges": ["koranyi"]}, "config.group"),
])
def test_bad_configs_name_the_key(bad, key):
    with pytest.raises(InputError, match=key.replace(".", r"\.")):
        config_from_dict(bad)


def test_hash_ignores_out_and_workers():
    a = config_from_dict({"group": "euclidean1", "out": "x", "workers": 1})
    b = config_from_dict({"group": "euclidean1", "out": "y", "workers": 8})
    c = config_from_dict({"group": "euclidean1", "seed": 1})
    assert a.config_hash() == b.config_hash() != c.config_hash()
    assert len(a.config_hash()) == 16


def test_yaml_and_json_agree(tmp_path):
    d = {"group": "euclidean1", "fields": [{"builder": "tent"}], "resolution": 64}
    (tmp_path / "a.json").write_text(json.dumps(d))
    (tmp_path / "a.yaml").write_text("group: euclidean1\nfields:\n  - builder: tent\nresolution: 64\n")
    assert load_config(tmp_path / "a.json").config_hash() == load_config(tmp_path / "a.yaml").config_hash()


def test_relative_field_paths(tmp_path):
    (tmp_path / "cfg.yaml").write_text("group: euclidean1\nfields:\n  - path: data/u.csv\n")
    cfg = load_config(tmp_path / "cfg.yaml")
    assert cfg.fields[0].path == str((tmp_path / "data" / "u.csv").resolve())
    assert cfg.fields[0].label == "u"


def test_load_bundled_by_name():
    assert load_config("euclidean-smoke").group == "euclidean1"


def test_missing_and_unparseable(tmp_path):
    with pytest.raises(InputError, match="not found"):
        load_config(tmp_path / "nope.yaml")
    (tmp_path / "bad.yaml").write_text("group: [unclosed\n")
    with pytest.raises(InputError, match="cannot parse"):
        load_config(tmp_path / "bad.yaml")
