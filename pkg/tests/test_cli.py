"""Config validation, artifact determinism, and replay round trips.

Most tests drive `main` with real argv vectors, so flag parsing, exit
codes, and the env-seed override are exercised by the same calls that
check artifact bytes.  Checksum assertions read the manifest only; no
test reaches into private helpers to recompute digests.
"""

import json
import math
import os

import pytest

from floorwalk import artifacts as art
from floorwalk.cli import RunConfig, main, replay, run, validate_config
from floorwalk.errors import ChecksumMismatch, ConfigInvalid, IoError
from floorwalk.lab import CLAIMS
from floorwalk.lattice import Cluster, vertical_segment


def _manifest(outdir):
    with open(os.path.join(outdir, "manifest.json"), encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# artifact primitives


def test_canonical_json_ignores_key_order():
    a = art.canonical_json({"b": 1, "a": [2, {"y": 0, "x": 1}]})
    b = art.canonical_json({"a": [2, {"x": 1, "y": 0}], "b": 1})
    assert a == b
    assert " " not in a


def test_config_hash_tracks_inputs_only():
    h = art.config_hash("kernel", {"radius": 30}, 4)
    assert len(h) == 12 and int(h, 16) >= 0
    assert h == art.config_hash("kernel", {"radius": 30}, 4)
    assert h != art.config_hash("kernel", {"radius": 30}, 5)
    assert h != art.config_hash("kernel", {"radius": 31}, 4)


def test_format_cell_round_trips_doubles():
    for x in (0.1, 1.0 / 3.0, math.pi, 1e-17, -2.5e300, 0.0):
        assert float(art.format_cell(x)) == x
    assert art.format_cell(None) == ""
    assert art.format_cell(True) == "1"
    assert art.format_cell(-7) == "-7"
    assert art.format_cell("visits_mc") == "visits_mc"


def test_csv_writer_puts_hash_first(tmp_path):
    path = tmp_path / "t.csv"
    art.write_csv(path, "a,b", [(1, 0.5), (None, "x")], "deadbeef0123")
    lines = path.read_text().splitlines()
    assert lines[0] == "# config=deadbeef0123"
    assert lines[1] == "a,b"
    assert lines[2] == "1,0.5"
    assert lines[3] == ",x"


def test_output_lock_is_exclusive_and_released(tmp_path):
    with art.OutputLock(str(tmp_path)):
        assert (tmp_path / ".lock").exists()
        with pytest.raises(IoError, match="locked"):
            art.OutputLock(str(tmp_path)).__enter__()
    assert not (tmp_path / ".lock").exists()


# ---------------------------------------------------------------------------
# config validation


def test_rejects_wrong_parameter_type():
    with pytest.raises(ConfigInvalid) as err:
        validate_config({"command": "hm-exact",
                         "params": {"segment": "four"}})
    assert err.value.pointer == "/params/segment"
    assert "expected integer" in str(err.value)


def test_rejects_bool_where_integer_expected():
    with pytest.raises(ConfigInvalid) as err:
        validate_config({"command": "dla-discrete",
                         "params": {"n_steps": True}})
    assert err.value.pointer == "/params/n_steps"


def test_rejects_unknown_keys_at_both_levels():
    with pytest.raises(ConfigInvalid) as err:
        validate_config({"command": "kernel", "params": {"radius": 9},
                         "extra": 1})
    assert err.value.pointer == "/extra"
    with pytest.raises(ConfigInvalid) as err:
        validate_config({"command": "kernel",
                         "params": {"radius": 9, "bogus": 2}})
    assert err.value.pointer == "/params/bogus"


def test_rejects_unknown_command():
    with pytest.raises(ConfigInvalid) as err:
        validate_config({"command": "hm-exactly", "params": {}})
    assert err.value.pointer == "/command"


def test_required_parameters_enforced():
    with pytest.raises(ConfigInvalid) as err:
        validate_config({"command": "hm-mc",
                         "params": {"segment": 4, "x1": 0, "x2": 1}})
    assert err.value.pointer == "/params/samples"


def test_cluster_source_must_be_unambiguous():
    with pytest.raises(ConfigInvalid, match="exactly one"):
        validate_config({"command": "hm-exact", "params": {}})
    with pytest.raises(ConfigInvalid, match="exactly one"):
        validate_config({"command": "hm-exact",
                         "params": {"segment": 4, "cluster_path": "c.txt"}})


def test_seed_must_fit_in_64_bits():
    base = {"command": "kernel", "params": {"radius": 9}}
    for bad in (-1, 2**64, "7", True):
        with pytest.raises(ConfigInvalid) as err:
            validate_config({**base, "seed": bad})
        assert err.value.pointer == "/seed"
    cfg = validate_config({**base, "seed": 2**64 - 1})
    assert cfg.seed == 2**64 - 1


def test_growth_kind_and_verify_claim_are_vetted():
    with pytest.raises(ConfigInvalid) as err:
        validate_config({"command": "growth",
                         "params": {"kind": "eager", "t_max": 1.0,
                                    "width": 4, "height": 4}})
    assert err.value.pointer == "/params/kind"
    with pytest.raises(ConfigInvalid) as err:
        validate_config({"command": "verify",
                         "params": {"claim": "thm-9.9"}})
    assert err.value.pointer == "/params/claim"


def test_default_output_dir_names_command_and_hash():
    cfg = validate_config({"command": "kernel", "params": {"radius": 9}})
    assert cfg == RunConfig(
        command="kernel", params={"radius": 9}, seed=0,
        output_dir="kernel-" + art.config_hash("kernel", {"radius": 9}, 0))


def test_int_list_parameters_must_be_nonempty_int_lists():
    with pytest.raises(ConfigInvalid) as err:
        validate_config({"command": "hm-limit",
                         "params": {"segment": 4, "x1": 0, "x2": 1,
                                    "schedule": [8, "16"]}})
    assert err.value.pointer == "/params/schedule"
    with pytest.raises(ConfigInvalid):
        validate_config({"command": "hm-limit",
                         "params": {"segment": 4, "x1": 0, "x2": 1,
                                    "schedule": []}})


# ---------------------------------------------------------------------------
# runs and artifacts


def test_run_writes_artifacts_manifest_and_releases_lock(tmp_path):
    out = tmp_path / "seg"
    code = main(["hm-exact", "--segment", "6", "--output-dir", str(out)])
    assert code == 0
    doc = _manifest(out)
    assert sorted(doc["artifacts"]) == ["cluster.txt", "profile.csv"]
    assert doc["config"]["params"] == {"segment": 6}
    assert doc["meta"]["sites"] == 7
    assert not (out / ".lock").exists()
    first = (out / "profile.csv").read_text().splitlines()[0]
    assert first == "# config=" + doc["config_hash"]
    assert doc["versions"]["floorwalk"]


def test_snapshot_header_survives_a_round_trip(tmp_path):
    out = tmp_path / "seg"
    assert main(["hm-exact", "--segment", "5",
                 "--output-dir", str(out)]) == 0
    text = (out / "cluster.txt").read_text()
    assert text.startswith("# config=")
    assert (Cluster.from_text(text).sorted_sites()
            == vertical_segment(5).sorted_sites())


def test_snapshot_feeds_back_in_as_cluster_path(tmp_path):
    first = tmp_path / "a"
    second = tmp_path / "b"
    assert main(["hm-exact", "--segment", "5",
                 "--output-dir", str(first)]) == 0
    assert main(["hm-exact", "--cluster-path", str(first / "cluster.txt"),
                 "--output-dir", str(second)]) == 0
    assert ((first / "profile.csv").read_text().splitlines()[2:]
            == (second / "profile.csv").read_text().splitlines()[2:])


def test_repeat_runs_produce_identical_checksums(tmp_path):
    argv = ["dla-discrete", "--n-steps", "60", "--seed", "11"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(argv + ["--output-dir", str(a)]) == 0
    assert main(argv + ["--output-dir", str(b)]) == 0
    assert _manifest(a)["artifacts"] == _manifest(b)["artifacts"]


def test_seed_changes_artifact_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["dla-discrete", "--n-steps", "60", "--seed", "1",
                 "--output-dir", str(a)]) == 0
    assert main(["dla-discrete", "--n-steps", "60", "--seed", "2",
                 "--output-dir", str(b)]) == 0
    assert (_manifest(a)["artifacts"]["events.csv"]
            != _manifest(b)["artifacts"]["events.csv"])


def test_growth_and_tail_artifacts(tmp_path):
    g = tmp_path / "g"
    assert main(["growth", "--kind", "slowed", "--t-max", "1.5",
                 "--width", "10", "--height", "10", "--seed", "3",
                 "--output-dir", str(g)]) == 0
    lines = (g / "arrows.csv").read_text().splitlines()
    assert lines[1] == "t,sx1,sx2,tx1,tx2,accepted"
    assert _manifest(g)["meta"]["overflow"] in (False, True)
    t = tmp_path / "t"
    assert main(["tail", "--t", "0.01", "--n-max", "3", "--runs", "500",
                 "--seed", "1", "--output-dir", str(t)]) == 0
    header = (t / "tail.csv").read_text().splitlines()[1]
    assert header == "n,empirical,stderr,bound,runs,discarded"


def test_locked_directory_refuses_a_second_run(tmp_path):
    out = tmp_path / "busy"
    out.mkdir()
    (out / ".lock").touch()
    assert main(["kernel", "--radius", "20",
                 "--output-dir", str(out)]) == 1
    with pytest.raises(IoError, match="locked"):
        run(RunConfig("kernel", {"radius": 20}, 0, str(out)))


# ---------------------------------------------------------------------------
# flags, config files, environment


def test_usage_errors_exit_one(capsys):
    assert main(["kernel", "--no-such-flag"]) == 1
    assert main(["kernel", "--radius", "nine"]) == 1
    assert "error:" in capsys.readouterr().err


def test_config_file_replaces_flags(tmp_path):
    out = tmp_path / "r"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "command": "hm-exact", "params": {"segment": 7}, "seed": 2,
        "output_dir": str(out)}))
    assert main(["hm-exact", "--segment", "3",
                 "--config", str(cfg)]) == 0
    doc = _manifest(out)
    assert doc["config"]["params"]["segment"] == 7
    assert doc["config"]["seed"] == 2


def test_config_file_command_must_match_subcommand(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"command": "kernel",
                               "params": {"radius": 9}}))
    assert main(["hm-exact", "--config", str(cfg)]) == 1
    assert "/command" in capsys.readouterr().err


def test_env_seed_overrides_flag_and_file(tmp_path, monkeypatch):
    out = tmp_path / "r"
    monkeypatch.setenv("FLOORWALK_SEED", "77")
    assert main(["hm-mc", "--segment", "4", "--x1", "0", "--x2", "2",
                 "--samples", "400", "--seed", "3",
                 "--output-dir", str(out)]) == 0
    doc = _manifest(out)
    assert doc["config"]["seed"] == 77
    assert (out / "mc.csv").read_text().splitlines()[-1].endswith(",77")
    monkeypatch.setenv("FLOORWALK_SEED", "many")
    assert main(["kernel", "--radius", "20",
                 "--output-dir", str(tmp_path / "x")]) == 1


def test_schedule_flag_splits_on_commas(tmp_path):
    out = tmp_path / "r"
    assert main(["hm-limit", "--segment", "4", "--x1", "0", "--x2", "2",
                 "--schedule", "8,16,32", "--output-dir", str(out)]) == 0
    assert _manifest(out)["config"]["params"]["schedule"] == [8, 16, 32]
    row = (out / "limit.csv").read_text().splitlines()[-1]
    assert row.split(",")[3] == "1"


# ---------------------------------------------------------------------------
# verify command


def test_verify_emits_report_points_and_registry(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "--claim", "lemma-4.4", "--m-list", "2,3,4",
                 "--output-dir", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["claim_id"] == "lemma-4.4"
    assert report["verdict"] == "consistent"
    assert report["config_hash"] == _manifest(out)["config_hash"]
    registry = json.loads((out / "registry.json").read_text())
    assert set(registry["claims"]) == set(CLAIMS)
    lines = (out / "points.csv").read_text().splitlines()
    assert lines[1] == "parameter,estimate,stderr"
    assert lines[2].startswith("m=2,0.1875")


def test_verify_breached_claim_exits_two(tmp_path):
    out = tmp_path / "v"
    code = main(["verify", "--claim", "lemma-4.3", "--r-list", "4,8",
                 "--samples", "4000", "--seed", "7",
                 "--output-dir", str(out)])
    assert code == 2
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"] == "violated"


def test_verify_suite_claim_accepts_ensemble_overrides(tmp_path):
    out = tmp_path / "v"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "command": "verify",
        "params": {"claim": "thm-1.6", "segments": [16, 32, 64],
                   "singles": [8, 16], "animals": {"count": 0, "size": 2},
                   "dla": {"runs": 0, "steps": 1}},
        "seed": 11, "output_dir": str(out)}))
    assert main(["verify", "--config", str(cfg)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["claim_id"] == "thm-1.6"
    assert report["verdict"] == "consistent"
    assert report["inputs"]["segments"] == [16, 32, 64]


# ---------------------------------------------------------------------------
# replay


def _fresh_manifest(tmp_path, argv):
    out = tmp_path / "orig"
    assert main(argv + ["--output-dir", str(out)]) == 0
    return out / "manifest.json"


def test_replay_confirms_a_fresh_manifest(tmp_path):
    path = _fresh_manifest(
        tmp_path, ["dla-discrete", "--n-steps", "40", "--seed", "5"])
    assert main(["replay", str(path)]) == 0


def test_replay_flags_divergent_checksums(tmp_path):
    path = _fresh_manifest(
        tmp_path, ["hm-mc", "--segment", "4", "--x1", "0", "--x2", "2",
                   "--samples", "300", "--seed", "5"])
    doc = json.loads(path.read_text())
    doc["config"]["seed"] = 6
    path.write_text(json.dumps(doc))
    with pytest.raises(ChecksumMismatch) as err:
        replay(str(path))
    assert "mc.csv" in str(err.value)
    assert main(["replay", str(path)]) == 1


def test_replay_requires_recorded_artifacts_to_exist(tmp_path):
    path = _fresh_manifest(tmp_path, ["kernel", "--radius", "20"])
    os.unlink(path.parent / "kernel.csv")
    with pytest.raises(IoError, match="kernel.csv"):
        replay(str(path))


def test_replay_rejects_garbage_manifests(tmp_path):
    missing = tmp_path / "none.json"
    with pytest.raises(IoError):
        replay(str(missing))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(IoError, match="JSON"):
        replay(str(bad))
    hollow = tmp_path / "hollow.json"
    hollow.write_text(json.dumps({"config": {}}))
    with pytest.raises(IoError, match="artifacts"):
        replay(str(hollow))
