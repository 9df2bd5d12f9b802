import json
from pathlib import Path

import numpy as np
import pytest

from crab import checkpoint, cli
from crab.dataset import LabeledCorpus, LabeledExample, load_corpus, save_corpus
from crab.errors import NumericError
from crab.synthetic import separable_corpus

FIXTURES = Path(__file__).parent / "fixtures"
SMALL_FLAGS = ["--dim", "16", "--max-len", "8", "--fc1", "16", "--fc2", "16", "--layers", "1",
               "--batch-size", "8", "--lr", "3e-3"]


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def splits(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    save_corpus(separable_corpus(11, n=40), d / "train.tsv")
    save_corpus(separable_corpus(11, n=40), d / "val.tsv")
    return d


@pytest.fixture(scope="module")
def trained(splits):
    out = splits / "model.crab"
    assert cli.main(["train", str(splits / "train.tsv"), "--val", str(splits / "val.tsv"), "--out", str(out),
                     "--history", str(splits / "hist.txt"), "--epochs", "30", "--seed", "2", *SMALL_FLAGS]) == 0
    return out


def test_preprocess_golden(tmp_path, capsys):
    out = tmp_path / "norm.tsv"
    code, _, _ = run(capsys, "preprocess", FIXTURES / "tweets50.tsv", "--out", out)
    assert code == 0
    assert out.read_bytes() == (FIXTURES / "tweets50.normalized.tsv").read_bytes()


def test_preprocess_idempotent_to_stdout(capsys):
    golden = FIXTURES / "tweets50.normalized.tsv"
    code, out, _ = run(capsys, "preprocess", golden)
    assert code == 0 and out == golden.read_text(encoding="utf-8")


def test_preprocess_empty_and_errors(tmp_path, capsys):
    empty = tmp_path / "e.tsv"
    empty.write_text("#classes\ta\tb\n", encoding="utf-8")
    code, out, _ = run(capsys, "preprocess", empty)
    assert code == 0 and out == "#classes\ta\tb\n"
    bad = tmp_path / "bad.tsv"
    bad.write_text("#classes\ta\nb\tnope\n", encoding="utf-8")
    code, out, err = run(capsys, "preprocess", bad)
    assert code == 2 and out == "" and "line 2" in err


def _balanced(n_per=25):
    ex = [LabeledExample(f"text {k} {i}", k) for k in range(4) for i in range(n_per)]
    return LabeledCorpus(ex, ["a", "b", "c", "d"])


def test_split_floor_rule_and_table(tmp_path, capsys):
    src = tmp_path / "all.tsv"
    save_corpus(_balanced(), src)
    code, out, _ = run(capsys, "split", src, "--out-dir", tmp_path / "s")
    assert code == 0
    sizes = {n: [0] * 4 for n in ("train", "val", "test")}
    for n in sizes:
        for ex in load_corpus(tmp_path / "s" / f"{n}.tsv").examples:
            sizes[n][ex.label] += 1
    assert sizes == {"train": [20] * 4, "val": [2] * 4, "test": [3] * 4}
    lines = out.splitlines()
    assert lines[0].split() == ["Class", "a", "b", "c", "d", "Total"]
    assert lines[1].split() == ["train", "20", "20", "20", "20", "80"]
    assert lines[-1].split() == ["total", "25", "25", "25", "25", "100"]


def test_split_reproducible_and_degenerate(tmp_path, capsys):
    src = tmp_path / "all.tsv"
    save_corpus(_balanced(7), src)
    for d in ("x", "y"):
        assert run(capsys, "split", src, "--out-dir", tmp_path / d, "--seed", "9")[0] == 0
    for n in ("train", "val", "test"):
        assert (tmp_path / "x" / f"{n}.tsv").read_bytes() == (tmp_path / "y" / f"{n}.tsv").read_bytes()
    assert run(capsys, "split", src, "--out-dir", tmp_path / "z", "--ratios", "1", "0", "0")[0] == 0
    assert len(load_corpus(tmp_path / "z" / "train.tsv")) == 28
    assert len(load_corpus(tmp_path / "z" / "test.tsv")) == 0


def test_split_empty_class(tmp_path, capsys):
    src = tmp_path / "all.tsv"
    save_corpus(LabeledCorpus([LabeledExample("x", 0)], ["a", "ghost"]), src)
    code, _, err = run(capsys, "split", src, "--out-dir", tmp_path / "s")
    assert code == 2 and "ghost" in err


def test_train_writes_model_and_history(trained, splits):
    model, meta = checkpoint.load(trained)
    assert model.head_config.sentence_layer_enabled
    assert meta["seed"] == 2 and meta["epochs"] == 30
    rows = (splits / "hist.txt").read_text().splitlines()
    assert rows[0] == "# crab-history v1" and len(rows) == 32
    assert max(float(r.split("\t")[3]) for r in rows[2:]) >= 0.9


def test_train_vocab_from_train_split_only(splits, tmp_path, capsys):
    val = load_corpus(splits / "val.tsv")
    leaky = val.with_texts([t + " zzleak" for t in val.texts])
    save_corpus(leaky, tmp_path / "val.tsv")
    out = tmp_path / "m.crab"
    assert run(capsys, "train", splits / "train.tsv", "--val", tmp_path / "val.tsv", "--out", out,
               "--epochs", "1", *SMALL_FLAGS)[0] == 0
    vocab = checkpoint.load(out)[0].vocab
    assert "zzleak" not in vocab
    base, _ = checkpoint.load(out)
    assert run(capsys, "train", splits / "train.tsv", "--out", tmp_path / "n.crab", "--epochs", "1",
               *SMALL_FLAGS)[0] == 0
    assert checkpoint.load(tmp_path / "n.crab")[0].vocab.itos == base.vocab.itos


def test_ablation_flags(splits, tmp_path, capsys):
    shapes = {}
    for heads in (1, 2, 4):
        out = tmp_path / f"m{heads}.crab"
        assert run(capsys, "train", splits / "train.tsv", "--out", out, "--epochs", "0", "--heads", heads,
                   *SMALL_FLAGS)[0] == 0
        model, _ = checkpoint.load(out)
        assert model.head_config.m == heads and len(model.head_params.A) == heads
        shapes[heads] = {k: v.shape for k, v in model.parameters().items() if not k.startswith("head.A")}
    assert shapes[1] | {"head.W_fc2": None} == shapes[2] | {"head.W_fc2": None}
    out = tmp_path / "nosa.crab"
    assert run(capsys, "train", splits / "train.tsv", "--out", out, "--epochs", "0", "--sentence-layer", "off",
               *SMALL_FLAGS)[0] == 0
    assert checkpoint.load(out)[0].head_config.sentence_layer_enabled is False


def test_evaluate_matches_training_metadata(trained, splits, capsys):
    code, out, _ = run(capsys, "evaluate", trained, splits / "train.tsv")
    assert code == 0
    meta = checkpoint.load(trained)[1]
    lines = dict(line.split("\t", 1) for line in out.splitlines()[1:6])
    assert lines["accuracy"] == f"{meta['train_report']['accuracy']:.4f}"
    assert lines["macro_f1"] == f"{meta['train_report']['macro_f1']:.4f}"
    assert json.dumps(meta["train_report"]["confusion"]) in json.dumps(meta)


def test_evaluate_empty_set(trained, tmp_path, capsys):
    empty = tmp_path / "e.tsv"
    save_corpus(separable_corpus(0, n=4).subset([]), empty)
    code, out, err = run(capsys, "evaluate", trained, empty)
    assert code != 0 and "empty evaluation set" in err and out == ""


def test_evaluate_compare(tmp_path, capsys):
    (tmp_path / "a").write_text("0.71\n0.69\n0.74\n0.70\n")
    (tmp_path / "b").write_text("# baseline\n0.68\n0.70\n0.69\n0.66\n")
    code, out, _ = run(capsys, "evaluate", "--compare", tmp_path / "a", tmp_path / "b")
    assert code == 0
    t, p = (float(line.split("\t")[1]) for line in out.splitlines())
    assert t > 0 and 0 < p < 0.5


def test_predict(trained, capsys):
    code, out, _ = run(capsys, "predict", trained, "", "some words here", "some words here")
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 3 and lines[1] == lines[2]
    model, _ = checkpoint.load(trained)
    for line in lines:
        label, *probs = line.split("\t")
        assert label in model.class_names
        values = [float(p.split("=")[1]) for p in probs]
        assert len(values) == 4 and abs(sum(values) - 1) <= 2e-4
        assert label == model.class_names[int(np.argmax(values))]


def test_exit_codes(tmp_path, capsys, monkeypatch, splits):
    assert run(capsys, "train")[0] == 1
    assert run(capsys, "bogus")[0] == 1
    assert run(capsys, "evaluate")[0] == 1
    assert run(capsys, "evaluate", tmp_path / "missing.crab", tmp_path / "x.tsv")[0] == 2
    (tmp_path / "junk.crab").write_bytes(b"nope")
    assert run(capsys, "predict", tmp_path / "junk.crab", "hi")[0] == 2

    def explode(*a, **k):
        raise NumericError("non-finite loss nan at epoch 1, batch 1")

    monkeypatch.setattr(cli, "fit", explode)
    code, _, err = run(capsys, "train", splits / "train.tsv", "--out", tmp_path / "m.crab", *SMALL_FLAGS)
    assert code == 3 and "epoch 1, batch 1" in err
