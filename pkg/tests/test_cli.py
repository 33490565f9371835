import numpy as np
import pytest

from uit import cli, weightfile
from uit.dsp import write_wav
from uit.labels import DEFAULT_LABELS


def kv(out):
    return dict(line.split("=", 1) for line in out.strip().splitlines())


def test_analyze_kv(capsys):
    assert cli.main(["analyze", "--model", "uit-xs", "--format", "kv"]) == 0
    d = kv(capsys.readouterr().out)
    assert abs(int(d["params"]) / 1.5e6 - 1) < 0.05
    assert float(d["mflops"]) == pytest.approx(34.33, abs=0.01)


def test_analyze_text_and_ablation_flags(capsys):
    assert cli.main(["analyze", "--model", "uit-3xs", "--attention", "standard", "--activation", "gelu"]) == 0
    assert "M_pk" in capsys.readouterr().out


def test_analyze_unknown_model(capsys):
    assert cli.main(["analyze", "--model", "nope"]) != 0
    assert "nope" in capsys.readouterr().err


def test_unknown_subcommand_and_flag():
    with pytest.raises(SystemExit) as e:
        cli.main(["frobnicate"])
    assert e.value.code != 0
    with pytest.raises(SystemExit) as e:
        cli.main(["analyze", "--bogus"])
    assert e.value.code != 0


def test_features_writes_tensor_file(tmp_path, capsys):
    write_wav(tmp_path / "a.wav", np.zeros(16000))
    out = tmp_path / "f.uitw"
    assert cli.main(["features", str(tmp_path / "a.wav"), "--out", str(out), "--format", "kv"]) == 0
    assert kv(capsys.readouterr().out)["frames"] == "97"
    assert weightfile.load(out)["logmel"].shape == (97, 64)


def test_features_missing_file(tmp_path, capsys):
    assert cli.main(["features", str(tmp_path / "missing.wav")]) == 1
    assert "missing.wav" in capsys.readouterr().err


def test_infer_on_silence(tmp_path, capsys):
    write_wav(tmp_path / "s.wav", np.zeros(24000))
    w = tmp_path / "w.uitw"
    assert cli.main(["init", "--model", "uit-3xs", "--random", "--out", str(w)]) == 0
    capsys.readouterr()
    rc = cli.main(["infer", str(tmp_path / "s.wav"), "--weights", str(w), "--model", "uit-3xs",
                   "--top-k", "3", "--format", "kv"])
    assert rc == 0
    d = kv(capsys.readouterr().out)
    assert d["chunks"] == "2"
    assert d["keyword"] in DEFAULT_LABELS.keywords + ["<none>"]
    assert {"event.1", "event.2", "event.3"} <= set(d)


def test_infer_weight_mismatch(tmp_path, capsys):
    write_wav(tmp_path / "s.wav", np.zeros(16000))
    w = tmp_path / "w.uitw"
    cli.main(["init", "--model", "uit-3xs", "--out", str(w)])
    assert cli.main(["infer", str(tmp_path / "s.wav"), "--weights", str(w), "--model", "uit-xs"]) == 1
    assert "blocks.4" in capsys.readouterr().err


def test_eval(tmp_path, capsys):
    rng = np.random.default_rng(0)
    scores = rng.uniform(size=(6, 537)).astype(np.float32)
    truths = np.zeros((6, 537), np.float32)
    truths[:, 0] = [1, 0, 1, 0, 1, 0]
    truths[0, 530] = 1
    weightfile.save(tmp_path / "s.uitw", {"scores": scores})
    weightfile.save(tmp_path / "t.uitw", {"truths": truths})
    assert cli.main(["eval", "--scores", str(tmp_path / "s.uitw"), "--truths", str(tmp_path / "t.uitw"),
                     "--format", "kv"]) == 0
    d = kv(capsys.readouterr().out)
    assert 0 <= float(d["mAP"]) <= 1 and "kws_accuracy" in d


def test_bench_kv(capsys):
    assert cli.main(["bench", "--models", "uit-3xs", "--trials", "3", "--warmup", "1", "--format", "kv"]) == 0
    d = kv(capsys.readouterr().out)
    assert d["uit-3xs.trials"] == "3" and float(d["uit-3xs.mean_ms"]) > 0


def test_gradcheck_command(capsys):
    assert cli.main(["gradcheck", "--seeds", "2", "--format", "kv"]) == 0
    assert kv(capsys.readouterr().out)["status"] == "pass"


def test_train_toy_command(tmp_path, capsys):
    log = tmp_path / "loss.txt"
    assert cli.main(["train-toy", "--epochs", "2", "--steps-per-epoch", "2", "--log", str(log),
                     "--out", str(tmp_path / "w.uitw")]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "epoch loss lr"
    assert len(log.read_text().splitlines()) == 2
    assert "head.weight" in weightfile.load(tmp_path / "w.uitw")
