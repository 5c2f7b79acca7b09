import csv
import json
from pathlib import Path

import pytest

from rieszbal.cli import load_config, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, obj, name="scene.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj, indent=2) if not isinstance(obj, str) else obj)
    return str(p)


def one_node_scene():
    return {
        "version": 1,
        "kernel": {"n": 3, "alpha": 2.0, "beta": 0.5},
        "levels": [0],
        "sets": {"P": {"type": "points", "points": [[0, 0, 0]], "spacing": [1.0]}},
        "task": {"set": "P"},
    }


def test_one_node_capacity(tmp_path):
    cfg = write(tmp_path, one_node_scene())
    assert main(["capacity", "--config", cfg, "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "capacity.json").read_text())
    assert rep["results"]["levels"][0]["capacity"] == pytest.approx(0.5)
    assert rep["config"]["task"]["set"] == "P"


def test_unknown_key_reports_line(tmp_path, capsys):
    text = json.dumps(one_node_scene(), indent=2).replace('"task"', '"tusk"')
    cfg = write(tmp_path, text)
    assert main(["capacity", "--config", cfg, "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "line" in err and "tusk" in err
    assert not (tmp_path / "capacity.json").exists()


def test_bad_json_reports_line(tmp_path, capsys):
    cfg = write(tmp_path, '{\n  "version": 1,\n  "kernel": {\n}')
    assert main(["capacity", "--config", cfg]) == 1
    assert "line" in capsys.readouterr().err


def test_unknown_reference(tmp_path, capsys):
    scene = one_node_scene()
    scene["task"]["set"] = "missing"
    assert main(["capacity", "--config", write(tmp_path, scene)]) == 1
    assert "missing" in capsys.readouterr().err


def test_missing_file(tmp_path):
    assert main(["capacity", "--config", str(tmp_path / "nope.json")]) == 1


def test_bad_level_flag(tmp_path):
    assert main(["capacity", "--config", write(tmp_path, one_node_scene()), "--level", "-1"]) == 1


def test_level_flag_runs_zero_to_l(tmp_path):
    cfg = str(CONFIGS / "sphere_capacity.json")
    assert main(["capacity", "--config", cfg, "--out", str(tmp_path), "--level", "1"]) == 0
    rep = json.loads((tmp_path / "capacity.json").read_text())
    assert [r["level"] for r in rep["results"]["levels"]] == [0, 1]


def test_same_scene_same_bytes(tmp_path):
    cfg = write(tmp_path, one_node_scene())
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    assert main(["capacity", "--config", cfg, "--out", str(a)]) == 0
    assert main(["capacity", "--config", cfg, "--out", str(b)]) == 0
    assert (a / "capacity.json").read_bytes() == (b / "capacity.json").read_bytes()


def test_balayage_on_target_identity(tmp_path):
    scene = {
        "version": 1,
        "kernel": {"n": 3, "alpha": 2.0, "beta": 0.5},
        "levels": [0],
        "sets": {"P": {"type": "points", "points": [[0, 0, 0], [1, 0, 0], [0, 1, 0]], "spacing": [1, 1, 1]}},
        "measures": {"mu": {"type": "diracs", "points": [[1, 0, 0]], "weights": [2.0]}},
        "task": {"measure": "mu", "target": "P"},
    }
    assert main(["balayage", "--config", write(tmp_path, scene), "--out", str(tmp_path)]) == 0
    lvl = json.loads((tmp_path / "balayage.json").read_text())["results"]["levels"][0]
    assert lvl["deficit_ratio"] == pytest.approx(0.0, abs=1e-9)
    rows = list(csv.DictReader((tmp_path / "balayage.csv").open()))
    assert len(rows) == 3


def test_wiener_require_conclusive_exit_code(tmp_path):
    # two shells only: too few terms for any tail fit
    scene = {
        "version": 1,
        "kernel": {"n": 3, "alpha": 2.0, "beta": 0.5},
        "levels": [0],
        "sets": {"S": {"type": "sphere", "center": [0, 0, 0], "radius": 1.5}},
        "task": {"set": "S", "center": [0, 0, 0], "q": [2.0], "k_range": [0, 0]},
    }
    cfg = write(tmp_path, scene)
    assert main(["wiener", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert main(["wiener", "--config", cfg, "--out", str(tmp_path), "--require-conclusive"]) == 3


def test_load_config_rejects_wrong_version():
    scene = one_node_scene()
    scene["version"] = 2
    with pytest.raises(ValueError, match="version"):
        load_config(json.dumps(scene), "capacity")


@pytest.mark.parametrize("name, command", [
    ("sphere_capacity.json", "capacity"),
    ("dirac_sphere_balayage.json", "balayage"),
    ("five_sources.json", "balayage"),
    ("rotation_wiener.json", "wiener"),
    ("kelvin_check.json", "kelvin-check"),
    ("mass_deficit.json", "mass-deficit"),
])
def test_shipped_configs_parse(name, command):
    cfg = load_config((CONFIGS / name).read_text(), command)
    assert cfg.levels
