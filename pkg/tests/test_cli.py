"""Command-line behavior: artifacts, overwrite protection, exit codes."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import pytest

from dualplc.cli import (
    SHIPPED_CONFIGS,
    main,
    resolve_config_path,
    set_by_dotted_key,
)
from dualplc.core import ConfigError, default_config, default_traffic, load_config
from dualplc.metrics import load_cycles, load_summary


@pytest.fixture()
def short_config_path(tmp_path) -> str:
    """A fast 3 x 1 s dual configuration on disk."""
    cfg = dataclasses.replace(
        default_config(),
        traffic=default_traffic(attack_rate_per_s=20_000.0, segment_s=1))
    path = tmp_path / "short.json"
    path.write_text(json.dumps(cfg.to_json()), encoding="utf-8")
    return str(path)


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------


def test_unknown_flag_exits_one(capsys):
    assert main(["sim-run", "--bogus"]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_subcommand_exits_one(capsys):
    assert main([]) == 1


def test_unknown_config_name_exits_one(capsys, tmp_path):
    rc = main(["sim-run", "--config", "no-such-config",
               "--out", str(tmp_path / "out")])
    assert rc == 1
    err = capsys.readouterr().err
    assert "no-such-config" in err
    assert "dual-default" in err  # the message lists what *is* shipped


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------


def test_every_shipped_config_resolves_and_loads():
    for name in SHIPPED_CONFIGS:
        path = resolve_config_path(name)
        assert path.is_file()
        if name.startswith("live"):
            continue  # different schema, exercised in the live tests
        load_config(str(path))


def test_shipped_name_with_json_suffix_also_resolves():
    assert resolve_config_path("dual-default.json").is_file()


def test_a_real_file_beats_the_shipped_names(short_config_path):
    assert resolve_config_path(short_config_path) == Path(short_config_path)


def test_unknown_name_raises_config_error():
    with pytest.raises(ConfigError):
        resolve_config_path("definitely-not-configured")


# ---------------------------------------------------------------------------
# sim-run
# ---------------------------------------------------------------------------


def test_sim_run_writes_the_three_artifacts(short_config_path, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["sim-run", "--config", short_config_path,
                 "--out", str(out)]) == 0
    assert (out / "cycles.csv").is_file()
    assert (out / "summary.csv").is_file()
    assert (out / "run-manifest.json").is_file()

    records = load_cycles(str(out / "cycles.csv"))
    assert len(records) == 3000
    assert all(r.total_us == 1000 for r in records)

    summaries = load_summary(str(out / "summary.csv"))
    assert [s.segment for s in summaries] == ["pre_idle", "attack", "post_idle"]

    manifest = json.loads((out / "run-manifest.json").read_text())
    assert manifest["cycles"] == 3000
    assert manifest["mode"] == "dual"
    assert manifest["seed"] == 42
    assert manifest["nominal_us"] == 1000
    assert manifest["overrun_count"] == 0
    assert len(manifest["trace_sha256"]) == 64
    assert set(manifest["net_segments"]) == {"pre_idle", "attack", "post_idle"}

    assert "3000 cycles" in capsys.readouterr().out


def test_sim_run_refuses_to_overwrite(short_config_path, tmp_path, capsys):
    out = str(tmp_path / "run")
    assert main(["sim-run", "--config", short_config_path, "--out", out]) == 0
    capsys.readouterr()
    assert main(["sim-run", "--config", short_config_path, "--out", out]) == 1
    assert "refusing to overwrite" in capsys.readouterr().err
    assert main(["sim-run", "--config", short_config_path, "--out", out,
                 "--force"]) == 0


def test_sim_run_seed_override_lands_in_the_manifest(short_config_path, tmp_path):
    out = tmp_path / "run"
    assert main(["sim-run", "--config", short_config_path,
                 "--out", str(out), "--seed", "7"]) == 0
    manifest = json.loads((out / "run-manifest.json").read_text())
    assert manifest["seed"] == 7
    assert manifest["config"]["seed"] == 7


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def test_report_prints_the_segment_table(short_config_path, tmp_path, capsys):
    out = str(tmp_path / "run")
    main(["sim-run", "--config", short_config_path, "--out", out])
    capsys.readouterr()
    assert main(["report", "--in", out]) == 0
    text = capsys.readouterr().out
    assert "nominal cycle: 1000 us" in text
    for label in ("pre_idle", "attack", "post_idle"):
        assert label in text


def test_report_without_cycles_csv_exits_one(tmp_path, capsys):
    empty = tmp_path / "nothing"
    empty.mkdir()
    assert main(["report", "--in", str(empty)]) == 1
    assert "no cycles.csv found" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# sim-sweep
# ---------------------------------------------------------------------------


def test_sim_sweep_writes_one_row_per_value(tmp_path, capsys):
    cfg = dataclasses.replace(
        default_config(mode="baseline"),
        traffic=default_traffic(attack_rate_per_s=10_000.0, segment_s=1))
    cfg_path = tmp_path / "base.json"
    cfg_path.write_text(json.dumps(cfg.to_json()), encoding="utf-8")

    out = tmp_path / "sweep"
    rc = main(["sim-sweep", "--config", str(cfg_path),
               "--param", "traffic.segments.1.arrival.rate",
               "--values", "10000,25000",
               "--out", str(out)])
    assert rc == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "param,value,cycles,min_us,max_us,mean_us,median_us"
    assert len(lines) == 3
    assert lines[1].startswith("traffic.segments.1.arrival.rate,10000,")
    assert lines[2].startswith("traffic.segments.1.arrival.rate,25000,")
    # heavier flood, slower mean cycle
    mean_lo = float(lines[1].split(",")[5])
    mean_hi = float(lines[2].split(",")[5])
    assert mean_hi > mean_lo
    assert (out / "sweep-manifest.json").is_file()


def test_sim_sweep_rejects_unknown_keys(short_config_path, tmp_path, capsys):
    rc = main(["sim-sweep", "--config", short_config_path,
               "--param", "budget.nonexistent",
               "--values", "1,2",
               "--out", str(tmp_path / "sweep")])
    assert rc == 1
    assert "unknown key" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# dotted-key assignment
# ---------------------------------------------------------------------------


def test_dotted_key_sets_nested_dict_values():
    doc = {"budget": {"target_cycle": 1000}}
    set_by_dotted_key(doc, "budget.target_cycle", 2000)
    assert doc["budget"]["target_cycle"] == 2000


def test_dotted_key_indexes_into_lists():
    doc = {"segments": [{"rate": 1}, {"rate": 2}]}
    set_by_dotted_key(doc, "segments.1.rate", 99)
    assert doc["segments"][1]["rate"] == 99


def test_dotted_key_cannot_invent_schema():
    with pytest.raises(ConfigError):
        set_by_dotted_key({"a": 1}, "b", 2)


def test_dotted_key_validates_list_indices():
    with pytest.raises(ConfigError):
        set_by_dotted_key({"xs": [1, 2]}, "xs.5", 0)
    with pytest.raises(ConfigError):
        set_by_dotted_key({"xs": [1, 2]}, "xs.first", 0)


def test_dotted_key_rejects_descending_into_scalars():
    with pytest.raises(ConfigError):
        set_by_dotted_key({"a": 1}, "a.b", 2)


# ---------------------------------------------------------------------------
# live-flood argument validation (socket behavior lives in the live tests)
# ---------------------------------------------------------------------------


def test_flood_rejects_bad_payload_sizes(capsys):
    rc = main(["live-flood", "--target", "127.0.0.1:1", "--rate", "10",
               "--duration", "0.1", "--payload-size", "0"])
    assert rc == 1
    assert "payload" in capsys.readouterr().err


def test_flood_rejects_negative_rate(capsys):
    rc = main(["live-flood", "--target", "127.0.0.1:1", "--rate", "-5",
               "--duration", "0.1"])
    assert rc == 1


def test_flood_rate_zero_sends_nothing(capsys):
    # rate 0 is the control run: it returns at once without touching a socket
    rc = main(["live-flood", "--target", "127.0.0.1:9", "--rate", "0",
               "--duration", "0.2"])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["packets_sent"] == 0
    assert report["achieved_rate_per_s"] == 0.0
