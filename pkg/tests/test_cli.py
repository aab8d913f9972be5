import json

import pytest

from qkdcoexist import cli
from qkdcoexist.cli import EXIT_DATA, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE, main


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    codes = {
        "gen-data": main(["gen-data", "--seed", "0", "--out", str(root / "data")]),
        "train": main(["train", "--seed", "0", "--data", str(root / "data/dataset.csv"), "--out", str(root / "model")]),
        "eval": main(["eval", "--seed", "0", "--trees", "20", "--data", str(root / "data/dataset.csv"), "--out", str(root / "eval")]),
        "scenario": main(["scenario", "--models", str(root / "model/predictor.json"), "--out", str(root / "scen")]),
        "report": main(["report", "--log", str(root / "scen/records.jsonl"), "--out", str(root / "report")]),
    }
    return root, codes


def test_pipeline_exit_codes(pipeline):
    _, codes = pipeline
    assert codes == dict.fromkeys(codes, EXIT_OK)


def test_pipeline_outputs(pipeline):
    root, _ = pipeline
    expected = {
        "data": {"dataset.csv", "dataset.channels.json", "config_echo_gen-data.json"},
        "model": {"predictor.json", "config_echo_train.json"},
        "eval": {"eval.csv", "eval_per_set.csv", "eval.txt", "eval_mse.png", "config_echo_eval.json"},
        "scen": {"records.jsonl", "scenario.csv", "scenario.txt", "scenario.png", "config_echo_scenario.json"},
        "report": {"report.txt", "report.csv", "report.png", "config_echo_report.json"},
    }
    for d, names in expected.items():
        assert {p.name for p in (root / d).iterdir()} == names
    assert not [p for p in root.iterdir() if p.name.startswith(".")]


def test_eval_table_layout(pipeline):
    root, _ = pipeline
    lines = (root / "eval/eval.txt").read_text().splitlines()
    assert [line.split()[0] for line in lines[2:]] == ["RF", "LS", "KN", "Lasso", "Ridge", "Mean"]
    assert lines[0].split() == ["model", "noise_rate", "MSE", "skr", "MSE", "qber", "MSE"]


def test_scenario_report_contents(pipeline):
    root, _ = pipeline
    text = (root / "scen/scenario.txt").read_text()
    assert text.count("reallocate:") >= 1
    rows = (root / "scen/scenario.csv").read_text().splitlines()
    assert len(rows) == 1 + 4
    report = (root / "report/report.txt").read_text()
    for stage in ("initial", "stage1", "stage2", "stage3"):
        assert stage in report
    assert "out_port=4 wavelength_nm=1554.134" in report


def test_config_echo(pipeline):
    root, _ = pipeline
    echo = json.loads((root / "data/config_echo_gen-data.json").read_text())
    assert echo["seed"] == 0 and echo["subcommand"] == "gen-data"
    assert echo["config"]["grid"]["anchor_thz"] == 191.45
    echo = json.loads((root / "scen/config_echo_scenario.json").read_text())
    assert set(echo["threshold"]) == {"min_skr", "max_qber", "max_noise_rate"}
    assert echo["plans"]["A"] == [75, 77, 79, 81, 83, 85, 87, 89]


def test_gen_data_deterministic(pipeline, tmp_path):
    root, _ = pipeline
    assert main(["gen-data", "--seed", "0", "--out", str(tmp_path)]) == EXIT_OK
    for name in ("dataset.csv", "dataset.channels.json"):
        assert (tmp_path / name).read_bytes() == (root / "data" / name).read_bytes()


def test_scenario_trains_its_own_model(tmp_path, capsys):
    code = main(
        ["scenario", "--seed", "0", "--model", "KN", "--k", "3", "--threshold-qber", "0.05",
         "--plan", "A=A-literal", "--out", str(tmp_path)]
    )
    assert code == EXIT_OK
    echo = json.loads((tmp_path / "config_echo_scenario.json").read_text())
    assert echo["model"]["k"] == 3 and echo["threshold"]["max_qber"] == 0.05
    assert echo["plans"]["A"][2] == 70
    assert "scenario field-trial (model KN)" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["gen-data"],
        ["gen-data", "--out", "x"],
        ["train", "--seed", "0", "--data", "nowhere.csv", "--out", "x"],
        ["train", "--model", "SVM", "--data", "d.csv", "--out", "x"],
        ["eval", "--data", "d.csv", "--out", "x", "--k", "notanint"],
        ["scenario", "--seed", "0", "--plan", "A", "--out", "x"],
        ["scenario", "--seed", "0", "--k", "0", "--model", "KN", "--out", "x"],
    ],
)
def test_usage_errors(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as exc:
        raise SystemExit(main(argv))
    assert exc.value.code == EXIT_USAGE
    assert not (tmp_path / "x").exists()
    err = capsys.readouterr().err
    assert err.count("\n") == 1


def test_data_error_removes_partial_outputs(tmp_path, pipeline, capsys):
    root, _ = pipeline
    bad = tmp_path / "bad.csv"
    bad.write_text((root / "data/dataset.csv").read_text().replace("fiber_loss_db", "loss"))
    (tmp_path / "bad.channels.json").write_text((root / "data/dataset.channels.json").read_text())
    out = tmp_path / "out"
    assert main(["train", "--seed", "0", "--data", str(bad), "--out", str(out)]) == EXIT_DATA
    assert "fiber_loss_db" in capsys.readouterr().err
    assert not out.exists()
    assert sorted(p.name for p in tmp_path.iterdir()) == ["bad.channels.json", "bad.csv"]


def test_corrupt_predictor_is_data_error(tmp_path):
    bad = tmp_path / "p.json"
    bad.write_text('{"format": "something-else"}')
    assert main(["scenario", "--models", str(bad), "--out", str(tmp_path / "o")]) == EXIT_DATA
    assert not (tmp_path / "o").exists()


def test_corrupt_log_is_data_error(tmp_path):
    log = tmp_path / "r.jsonl"
    log.write_text('{"seq": 1, "kind": "action", "payload": {}}\n{oops\n{"seq": 3}\n')
    assert main(["report", "--log", str(log), "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_bad_config_is_data_error(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("grid:\n  wrong: 1\n")
    assert main(["gen-data", "--seed", "0", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_internal_error_exit_code(tmp_path, monkeypatch):
    def boom(args, config, stage):
        (stage / "half-written.csv").write_text("partial")
        raise RuntimeError("boom")

    monkeypatch.setitem(cli.COMMANDS, "gen-data", boom)
    out = tmp_path / "o"
    assert main(["gen-data", "--seed", "0", "--out", str(out)]) == EXIT_INTERNAL
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []
