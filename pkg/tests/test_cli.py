import json

import pytest

from advrecon.cli import main

SMALL = ["--window-size", "50", "--latent-dim", "8", "--set", "batch_size=32", "--set", "encoder_hidden=16",
         "--set", "decoder_hidden=16", "--set", "critic_filters=16"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_help_lists_every_key(capsys):
    from advrecon.config import PipelineConfig

    for cmd in ("detect", "ablate"):
        with pytest.raises(SystemExit):
            main([cmd, "--help"])
        out = capsys.readouterr().out
        for key in PipelineConfig().to_dict():
            assert key in out
        for paper in ("[paper: 100]", "[paper: 20]", "[paper: 64]", "[paper: 0.5]", "[paper: 0.1]", "[paper: 4.0]"):
            assert paper in out


def test_config_error_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "synth", "--out-dir", tmp_path, "--set", "nope=1")
    assert code == 1
    payload = json.loads(err)
    assert payload["error"] == "config_error" and payload["exit_code"] == 1


def test_data_error_exit_code(capsys, tmp_path):
    (tmp_path / "bad.csv").write_text("0,1\n1,x\n")
    code, _, err = run(capsys, "train", tmp_path / "bad.csv", "--model-dir", tmp_path / "m", "--iterations", 1)
    assert code == 2
    assert "line 2" in json.loads(err)["message"]
    code, _, err = run(capsys, "detect", tmp_path / "missing.csv")
    assert code == 2


def test_training_error_exit_code(capsys, tmp_path):
    run(capsys, "synth", "--out-dir", tmp_path, "--length", 600)
    code, _, err = run(capsys, "train", tmp_path / "signal.csv", "--model-dir", tmp_path / "m", "--iterations", 2,
                       *SMALL, "--set", "learning_rate=1e30")
    assert code == 3
    assert json.loads(err)["error"] == "training_error"


def test_evaluate_empty_predictions(capsys, tmp_path):
    (tmp_path / "a.json").write_text("[]")
    (tmp_path / "l.json").write_text("[[1, 2], [5, 6], [9, 9]]")
    code, out, _ = run(capsys, "evaluate", tmp_path / "a.json", tmp_path / "l.json")
    assert code == 0
    m = json.loads(out)
    assert (m["precision"], m["recall"], m["f1"]) == (0, 0, 0)


def test_train_one_iteration_bundle(capsys, tmp_path):
    run(capsys, "synth", "--out-dir", tmp_path, "--length", 600)
    code, _, _ = run(capsys, "train", tmp_path / "signal.csv", "--model-dir", tmp_path / "m", "--iterations", 1, *SMALL)
    assert code == 0
    for name in ("spec.json", "encoder.pt", "decoder.pt", "critic_x.pt", "critic_z.pt", "training_log.csv"):
        assert (tmp_path / "m" / name).exists()
    code, _, _ = run(capsys, "detect", tmp_path / "signal.csv", "--model", tmp_path / "m",
                     "--out", tmp_path / "a.json", "--scores", tmp_path / "s.csv")
    assert code == 0
    assert isinstance(json.loads((tmp_path / "a.json").read_text()), list)


def test_detect_then_evaluate_spike_corpus(capsys, tmp_path):
    run(capsys, "synth", "--out-dir", tmp_path, "--length", 600, "--layout", "spike")
    code, _, _ = run(capsys, "detect", tmp_path / "signal.csv", "--out", tmp_path / "a.json",
                     "--fusion", "error", "--error", "point", "--iterations", 60, *SMALL)
    assert code == 0
    code, out, _ = run(capsys, "evaluate", tmp_path / "a.json", tmp_path / "labels.json")
    assert json.loads(out)["f1"] == 1.0


def test_ablate_writes_table(capsys, tmp_path):
    run(capsys, "synth", "--out-dir", tmp_path, "--length", 600)
    code, out, _ = run(capsys, "ablate", tmp_path / "manifest.json", "--out-dir", tmp_path / "out",
                       "--iterations", 2, *SMALL)
    assert code == 0
    assert out.splitlines()[0] == "variant,synthetic,Mean±Std"
    assert len(out.splitlines()) == 11
    for name in ("report.csv", "signals.csv", "datasets.csv"):
        assert (tmp_path / "out" / name).exists()
