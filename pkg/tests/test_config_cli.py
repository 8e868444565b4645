import copy
import json

import pytest

from clpwan import cli
from clpwan.config import config_hash, effective_config, locate_line, scenario_from_config, validate
from clpwan.errors import ConfigError
from clpwan.radio import builtin_registry, default_config

SMALL = ["--workload", "emotion-interaction"]


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return str(path)


def small_config():
    cfg = default_config()
    cfg["workload"]["presets"]["emotion-interaction"]["duration_s"] = 60.0
    cfg["engine"]["bootstrap"]["count"] = 40
    return cfg


class TestListTechnologies:
    def test_text_has_eight_rows(self, capsys):
        assert cli.main(["list-technologies"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 1 + 8
        assert [ln.split()[0] for ln in lines[1:]] == list(builtin_registry().ids)

    def test_json_round_trip(self, capsys):
        assert cli.main(["list-technologies", "--format", "json"]) == 0
        data = json.loads(capsys.readouterr().out)
        assert builtin_registry().with_overrides(data["technologies"]) == builtin_registry()
        cfg = default_config()
        cfg["technologies"] = data["technologies"]
        assert validate(cfg) == []

    def test_override_shows(self, tmp_path, capsys):
        cfg = default_config()
        cfg["technologies"]["LORA"]["data_rate_bps"] = 12345
        assert cli.main(["list-technologies", "--config", write(tmp_path, cfg)]) == 0
        lora = next(ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("LORA"))
        assert "12345" in lora.split()


class TestValidate:
    def test_default_ok(self, tmp_path):
        assert cli.main(["validate", write(tmp_path, default_config())]) == 0

    def test_missing_workload(self, tmp_path, capsys):
        cfg = default_config()
        del cfg["workload"]
        assert cli.main(["validate", "--config", write(tmp_path, cfg)]) == 1
        assert "workload" in capsys.readouterr().err

    def test_all_violations_printed(self, tmp_path, capsys):
        cfg = default_config()
        cfg["technologies"]["LORA"]["data_rate_bps"] = -5
        cfg["engine"]["k"] = 0
        path = write(tmp_path, cfg)
        assert cli.main(["validate", path]) == 1
        err = capsys.readouterr().err.splitlines()
        assert any("technologies.LORA.data_rate_bps" in ln for ln in err)
        assert any("engine.k" in ln for ln in err)
        # diagnostics carry the line of the offending key
        text = open(path).read()
        k_line = next(i for i, ln in enumerate(text.splitlines(), 1) if '"k"' in ln)
        assert any(f":{k_line}: engine.k" in ln for ln in err)

    def test_unknown_key(self, tmp_path, capsys):
        cfg = default_config()
        cfg["engine"]["bogus"] = 1
        assert cli.main(["validate", write(tmp_path, cfg)]) == 1
        assert "engine.bogus: unknown key" in capsys.readouterr().err

    def test_semantic_checks(self):
        cfg = default_config()
        cfg["simulation"]["modes"] = ["hybrid", "fixed:ZIGBEE"]
        cfg["simulation"]["bucket_edges_bytes"] = [1, 100, 50]
        cfg["workload"]["active"] = "nope"
        keys = {d.key for d in validate(cfg)}
        assert keys == {"simulation.modes.1", "simulation.bucket_edges_bytes", "workload.active"}

    def test_missing_file(self, tmp_path):
        assert cli.main(["validate", str(tmp_path / "absent.json")]) == 2

    def test_bad_json(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text("{ not json")
        assert cli.main(["validate", str(path)]) == 1


def test_partial_sections_take_defaults():
    cfg = {"workload": {"active": "sensor-telemetry"}, "engine": {"k": 3}, "simulation": {}}
    assert validate(cfg) == []
    eff = effective_config(cfg)
    assert eff["engine"]["k"] == 3 and eff["engine"]["epsilon"] == 1e-6
    sc = scenario_from_config(cfg)
    assert sc.workload.name == "sensor-telemetry" and sc.engine.k == 3


def test_scenario_from_invalid_config():
    cfg = default_config()
    cfg["simulation"]["edge_capacity"] = -1
    with pytest.raises(ConfigError) as exc:
        scenario_from_config(cfg)
    assert exc.value.key == "simulation.edge_capacity"


def test_locate_line():
    text = '{\n  "a": {\n    "b": 1\n  }\n}'
    assert locate_line(text, ["a", "b"]) == 3
    assert locate_line(None, ["a"]) is None


def test_config_hash_ignores_key_order():
    a = {"x": 1, "y": [1, 2]}
    assert config_hash(a) == config_hash({"y": [1, 2], "x": 1})


class TestRun:
    def test_two_modes(self, tmp_path):
        out = tmp_path / "out"
        rc = cli.main(["run", "--config", write(tmp_path, small_config()), "--out", str(out),
                       "--mode", "hybrid", "--mode", "fixed:WIFI"] + SMALL)
        assert rc == 0
        names = sorted(p.name for p in out.iterdir())
        assert [n for n in names if n.startswith("metrics-")] == ["metrics-fixed-WIFI.csv", "metrics-hybrid.csv"]
        assert [n for n in names if n.startswith("comparison")] == ["comparison.csv"]
        manifest = json.loads((out / "manifest.json").read_text())
        assert sorted(manifest["files"]) == names
        assert manifest["modes"] == ["hybrid", "fixed:WIFI"] and manifest["seed"] == 7
        assert manifest["config_sha256"] == config_hash(manifest["config"])
        header = (out / "metrics-hybrid.csv").read_text().splitlines()[0]
        assert header == "t_s,device_id,mode,chosen,delay_s,energy_j,tier,feasible,entropy,admitted"
        assert (out / "delay.svg").read_text().startswith("<svg")

    def test_negative_rate_rejected(self, tmp_path, capsys):
        cfg = small_config()
        cfg["technologies"]["LORA"]["data_rate_bps"] = -1
        out = tmp_path / "out"
        assert cli.main(["run", "--config", write(tmp_path, cfg), "--out", str(out)]) == 1
        assert "technologies.LORA.data_rate_bps" in capsys.readouterr().err
        assert not out.exists()
        assert list(tmp_path.iterdir()) == [tmp_path / "cfg.json"]

    def test_manifest_rerun_is_byte_identical(self, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        assert cli.main(["run", "--config", write(tmp_path, small_config()), "--out", str(first),
                         "--mode", "hybrid", "--mode", "fixed:LTE", "--seed", "11"] + SMALL) == 0
        assert cli.main(["run", "--manifest", str(first / "manifest.json"), "--out", str(second)]) == 0
        for name in ("metrics-hybrid.csv", "metrics-fixed-LTE.csv", "dataset-hybrid.jsonl", "comparison.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes()
        assert json.loads((second / "manifest.json").read_text())["seed"] == 11

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert cli.main(["run", "--config", write(tmp_path, small_config()), "--out", str(blocker / "out"),
                         "--mode", "fixed:WIFI"] + SMALL) == 2

    def test_missing_config(self, tmp_path):
        assert cli.main(["run", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == 2
        assert not (tmp_path / "o").exists()

    def test_bad_mode_argument(self, tmp_path, capsys):
        rc = cli.main(["run", "--config", write(tmp_path, small_config()), "--out", str(tmp_path / "o"),
                       "--mode", "fixed:ZIGBEE"])
        assert rc == 1 and "ZIGBEE" in capsys.readouterr().err

    def test_existing_out_dir_is_updated(self, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        (out / "keep.txt").write_text("k")
        assert cli.main(["run", "--config", write(tmp_path, small_config()), "--out", str(out),
                         "--mode", "fixed:BLE"] + SMALL) == 0
        assert (out / "keep.txt").exists() and (out / "metrics-fixed-BLE.csv").exists()
        assert not any(p.name.startswith(".clpwan-") for p in tmp_path.iterdir())
