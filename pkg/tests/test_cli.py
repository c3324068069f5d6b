import json

import pandas as pd
import pytest
import yaml

from edgeplan import __version__
from edgeplan.cli import build_parser, run_command


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("city")
    code = run_command(["synth", "--city", "--n-stations", "24", "--days", "7", "--bursts", "20",
                        "--seed", "1", "--out", str(out)])
    assert code == 0
    return out


def _read_csv(path):
    return pd.read_csv(path, comment="#")


def test_synth_city_writes_reproducible_settings(fixture_dir):
    for name in ("stations.csv", "trace.csv", "neighborhood.json", "benchmark.json", "benchmark.yaml"):
        assert (fixture_dir / name).is_file()
    settings = yaml.safe_load((fixture_dir / "benchmark.yaml").read_text())
    assert settings["bursts"] == 20 and settings["K"] > 0
    assert (fixture_dir / "benchmark.yaml").read_text().startswith("# config_hash=")
    meta = json.loads((fixture_dir / "benchmark.json").read_text())
    assert meta["stations"] == 24 and meta["provenance"]["version"] == __version__


def _base(fixture_dir):
    return ["--stations", str(fixture_dir / "stations.csv"), "--trace", str(fixture_dir / "trace.csv"),
            "--neighborhood", str(fixture_dir / "neighborhood.json")]


def test_analyze_and_represent(fixture_dir, tmp_path):
    assert run_command(["analyze", *_base(fixture_dir)[:4], "--out", str(tmp_path)]) == 0
    stats = (tmp_path / "stats.csv").read_text()
    assert stats.startswith("# config_hash=")
    assert len(_read_csv(tmp_path / "variation_lag24.csv")) > 0
    assert run_command(["represent", *_base(fixture_dir)[:4], "--out", str(tmp_path)]) == 0
    reps = json.loads((tmp_path / "representatives.json").read_text())
    assert "provenance" in reps


@pytest.mark.parametrize("scheme", ["srpf", "mincost"])
def test_place_schedule_simulate(fixture_dir, tmp_path, scheme):
    K = yaml.safe_load((fixture_dir / "benchmark.yaml").read_text())["K"]
    base = _base(fixture_dir)
    assert run_command(["place", *base, "--K", str(K), "--C", "5", "--scheme", scheme, "--out", str(tmp_path)]) == 0
    placement = json.loads((tmp_path / "placement.json").read_text())
    assert sum(e["count"] for e in placement["servers"]) == K
    assert placement["scheme"] == scheme
    pfile = str(tmp_path / "placement.json")
    assert run_command(["simulate", *base, "--placement", pfile, "--bursts", "5", "--out", str(tmp_path)]) == 0
    assert len(_read_csv(tmp_path / "report.csv")) == 5
    sdir = tmp_path / "sched"
    assert run_command(["schedule", *base, "--placement", pfile, "--E-s", "1", "--out", str(sdir)]) == 0
    plan = json.loads((sdir / "schedule.json").read_text())
    assert len(plan["slots"]) == 24 and set(plan["cost"]) == {"running", "switching", "total"}
    assert run_command(["simulate", *base, "--schedule", str(sdir / "schedule.json"), "--C", "5",
                        "--out", str(sdir)]) == 0
    report = json.loads((sdir / "report.json").read_text())
    assert "energy" in report and report["aggregate"]["frames"] == 7 * 24


def test_schedule_toggles(fixture_dir, tmp_path):
    base = _base(fixture_dir)
    assert run_command(["place", *base, "--K", "60", "--out", str(tmp_path)]) == 0
    pfile = str(tmp_path / "placement.json")
    counts = {}
    for flag in ("--no-switching-cost", "--always-on"):
        d = tmp_path / flag.strip("-")
        assert run_command(["schedule", *base, "--placement", pfile, flag, "--out", str(d)]) == 0
        counts[flag] = json.loads((d / "schedule.json").read_text())
    assert counts["--always-on"]["switches"] == 0
    assert counts["--no-switching-cost"]["strategy"] == "per_slot"


def test_compare_writes_six_reports_and_manifest(fixture_dir, tmp_path):
    code = run_command(["compare", "--config", str(fixture_dir / "benchmark.yaml"), "--bursts", "8",
                        "--k", "4", "--zone-size", "3.0", "--out", str(tmp_path)])
    assert code == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest["policies"]) == {"Random", "Clustering", "Uniform", "TwithoutLB", "TwithLB", "RO_RP"}
    for kind, entry in manifest["policies"].items():
        rep = tmp_path / entry["report"]
        assert rep.read_text().startswith("# config_hash=")
        assert len(_read_csv(rep)) == 8


def test_outputs_are_byte_identical_across_runs(fixture_dir, tmp_path):
    args = ["place", *_base(fixture_dir), "--K", "50", "--scheme", "rr", "--seed", "3"]
    assert run_command([*args, "--out", str(tmp_path / "a")]) == 0
    assert run_command([*args, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "placement.json").read_bytes() == (tmp_path / "b" / "placement.json").read_bytes()


def test_missing_file_names_the_path(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    code = run_command(["analyze", "--stations", str(missing), "--trace", str(missing), "--out", str(tmp_path)])
    assert code != 0
    assert str(missing) in capsys.readouterr().err


def test_bad_settings_fail_with_diagnostics(fixture_dir, tmp_path, capsys):
    base = _base(fixture_dir)
    assert run_command(["place", *base, "--out", str(tmp_path)]) != 0
    assert "--K" in capsys.readouterr().err
    assert run_command(["place", *base, "--K", "0", "--out", str(tmp_path)]) != 0
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("K: 10\nwidth: 3\n")
    assert run_command(["place", "--config", str(cfg), *base, "--out", str(tmp_path)]) != 0
    assert "width" in capsys.readouterr().err


def test_unknown_flag_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        run_command(["place", "--frobnicate"])
    assert info.value.code != 0
    assert "place" in build_parser().format_help()
