import json

import pytest

from iotscope.cli import build_parser, main
from iotscope.flowmeter import FEATURE_NAMES
from iotscope.ids import example_db_text, parse_rules

from scripted import write_script_pcap

SUBCOMMANDS = [
    ["extract"], ["split"], ["train"], ["eval"], ["grid-search"], ["rules", "gen"],
    ["rules", "match"], ["dns-report"], ["synth", "corpus"], ["synth", "pcap"],
]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.mark.parametrize("cmd", SUBCOMMANDS, ids=" ".join)
def test_help_lists_flags_and_defaults(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main(cmd + ["--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[cmd[0]]
    if len(cmd) == 2:
        sub = sub._subparsers._group_actions[0].choices[cmd[1]]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text
    if cmd == ["synth", "corpus"]:
        assert "(default: 42)" in text


def test_usage_error_names_the_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--model", "svm", "--train", "x", "--out", "y"])
    assert exc.value.code == 2
    assert "--model" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["extract", "a.pcap"])
    assert exc.value.code == 2
    assert "--out" in capsys.readouterr().err


def test_domain_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.pcap"
    bad.write_bytes(b"not a capture at all")
    assert run("extract", bad, "--out", tmp_path / "o.csv") == 1
    assert "MalformedPcap" in capsys.readouterr().err
    assert run("dns-report", "--pcap", tmp_path / "missing.pcap") == 1
    assert "IoError" in capsys.readouterr().err


def test_extract_empty_pcap(empty_pcap, tmp_path):
    out = tmp_path / "e.csv"
    assert run("extract", empty_pcap, "--label", "Hub", "--out", out) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1
    assert lines[0].split(",")[:63] == list(FEATURE_NAMES)


def test_train_rf_defaults(tmp_path):
    ds = tmp_path / "d.csv"
    assert run("synth", "pcap", "--category", "Hub", "--duration", 20, "--out",
               tmp_path / "h.pcap") == 0
    assert run("synth", "pcap", "--category", "Appliance", "--duration", 20, "--out",
               tmp_path / "a.pcap") == 0
    assert run("extract", tmp_path / "h.pcap", "--label", "Hub", "--out", tmp_path / "h.csv") == 0
    assert run("extract", tmp_path / "a.pcap", "--label", "Appliance",
               "--out", tmp_path / "a.csv") == 0
    rows = (tmp_path / "h.csv").read_text().splitlines()
    rows += (tmp_path / "a.csv").read_text().splitlines()[1:]
    ds.write_text("\n".join(rows) + "\n")
    assert run("train", "--model", "rf", "--train", ds, "--out", tmp_path / "m.json") == 0
    params = json.loads((tmp_path / "m.json").read_text())["params"]
    assert params["n_trees"] == 200 and params["max_features"] == 63


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth corpus -> extract -> split -> train -> eval, run twice."""
    outs = []
    for run_dir in ("one", "two"):
        d = tmp_path_factory.mktemp(run_dir)
        assert run("synth", "corpus", "--seed", 3, "--per-category", 1, "--duration", 20,
                   "--out", d / "corpus") == 0
        manifest = (d / "corpus" / "manifest.csv").read_text().splitlines()[1:]
        parts = []
        for line in manifest:
            name, label = line.split(",")[:2]
            csv = d / f"{name}.csv"
            assert run("extract", d / "corpus" / name, "--label", label, "--out", csv) == 0
            parts.append(csv.read_text().splitlines())
        (d / "all.csv").write_text("\n".join(parts[0] + [r for p in parts[1:] for r in p[1:]])
                                   + "\n")
        assert run("split", "--in", d / "all.csv", "--train", d / "train.csv",
                   "--test", d / "test.csv", "--seed", 1) == 0
        assert run("train", "--model", "rf", "--n-trees", 25, "--train", d / "train.csv",
                   "--out", d / "rf.json", "--seed", 5) == 0
        assert run("eval", "--model", d / "rf.json", "--test", d / "test.csv",
                   "--report", d / "report.json") == 0
        outs.append(d)
    return outs


def test_pipeline_report(pipeline):
    report = json.loads((pipeline[0] / "report.json").read_text())
    assert 0.0 <= report["accuracy"] <= 1.0


@pytest.mark.parametrize("name", ["all.csv", "train.csv", "test.csv", "rf.json", "report.json",
                                  "corpus/manifest.csv", "corpus/NonIoT_Active_00.pcap"])
def test_pipeline_is_byte_identical(pipeline, name):
    a, b = pipeline
    assert (a / name).read_bytes() == (b / name).read_bytes()


def test_grid_search_command(pipeline, tmp_path):
    out = tmp_path / "grid.json"
    assert run("grid-search", "--model", "knn", "--train", pipeline[0] / "all.csv",
               "--folds", 2, "--grid", '{"k": [1, 3]}', "--out", out) == 0
    doc = json.loads(out.read_text())
    assert doc["best_params"]["k"] in (1, 3)


def test_rules_commands(tmp_path, capsys):
    db = tmp_path / "db.json"
    db.write_text(example_db_text())
    rules = tmp_path / "local.rules"
    assert run("rules", "gen", "--db", db, "--out", rules) == 0
    assert len(parse_rules(rules)) == 14
    pcap = tmp_path / "s.pcap"
    _, expected = write_script_pcap(pcap)
    log = tmp_path / "alerts.log"
    assert run("rules", "match", "--rules", rules, "--pcap", pcap, "--alerts", log) == 0
    assert len(log.read_text().splitlines()) == len(expected)
    assert run("dns-report", "--pcap", pcap) == 0
    assert "music.example.com" in capsys.readouterr().out


def test_config_file_overrides_split_fraction(tmp_path, pipeline):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"split": {"fraction": 0.5}}))
    assert run("--config", cfg, "split", "--in", pipeline[0] / "all.csv",
               "--train", tmp_path / "a.csv", "--test", tmp_path / "b.csv") == 0
    n_train = len((tmp_path / "a.csv").read_text().splitlines())
    n_test = len((tmp_path / "b.csv").read_text().splitlines())
    assert abs(n_train - n_test) <= 6


def test_extract_labels_the_zero_coded_category(handshake_pcap, tmp_path):
    out = tmp_path / "s.csv"
    assert run("extract", handshake_pcap, "--label", "Surveillance", "--out", out) == 0
    header, row = out.read_text().splitlines()
    assert header.endswith(",label") and row.endswith(",Surveillance")


def test_extract_from_manifest(tmp_path):
    assert run("synth", "corpus", "--seed", 2, "--per-category", 1, "--duration", 10,
               "--out", tmp_path / "c") == 0
    out = tmp_path / "flows.csv"
    assert run("extract", "--manifest", tmp_path / "c" / "manifest.csv", "--out", out) == 0
    labels = {line.rsplit(",", 1)[1] for line in out.read_text().splitlines()[1:]}
    assert labels == {"Surveillance", "Hub", "EnergyManagement", "Appliance",
                      "StreamingDevices", "NonIoT"}


def test_extract_source_flags_are_exclusive(tmp_path, handshake_pcap, capsys):
    manifest = tmp_path / "manifest.csv"
    manifest.write_text("file,label,mode,seed\n")
    assert run("extract", handshake_pcap, "--manifest", manifest, "--out", tmp_path / "o") == 1
    assert run("extract", "--label", "Hub", "--manifest", manifest,
               "--out", tmp_path / "o") == 1
    assert run("extract", "--out", tmp_path / "o") == 1
    assert "no pcap files" in capsys.readouterr().err
