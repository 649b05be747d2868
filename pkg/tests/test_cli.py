import json
import os

import pytest

from c2q import corpus
from c2q.cli import run

TINY = ["--embed-dim", "8", "--hidden", "8", "--max-len", "8"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One preprocess -> vocab -> tiny train pipeline shared by the tests."""
    root = tmp_path_factory.mktemp("cli")
    data = str(root / "data")
    code = run(["preprocess", "--input", "data/sample_posts.jsonl",
                "--out-dir", data, "--val-count", "10", "--test-count", "10",
                "--seed", "1"])
    assert code == 0

    # shrink the training set so the tiny model trains in seconds
    pairs = corpus.read_pairs(os.path.join(data, "train.jsonl"))
    small_train = os.path.join(data, "small_train.jsonl")
    corpus.write_pairs(pairs[:8], small_train)
    small_test = os.path.join(data, "small_test.jsonl")
    corpus.write_pairs(corpus.read_pairs(os.path.join(data, "test.jsonl"))[:4],
                       small_test)

    vocab_path = os.path.join(data, "vocab.txt")
    assert run(["build-vocab", "--pairs", small_train, "--out", vocab_path,
                "--min-freq", "0"]) == 0

    ckpt = os.path.join(data, "model.ckpt")
    assert run(["train", "--train-pairs", small_train, "--vocab", vocab_path,
                "--checkpoint", ckpt, "--epochs", "1", "--batch-size", "4",
                "--lr", "0.05"] + TINY) == 0
    return {"data": data, "train": small_train, "test": small_test,
            "vocab": vocab_path, "ckpt": ckpt}


def test_preprocess_outputs(workdir):
    data = workdir["data"]
    for name in ("train.jsonl", "val.jsonl", "test.jsonl",
                 "preprocess_report.json"):
        assert os.path.exists(os.path.join(data, name))
    with open(os.path.join(data, "preprocess_report.json")) as fh:
        report = json.load(fh)
    assert report["val"] == 10 and report["test"] == 10
    assert set(report["skipped"]) == {"low_score", "no_code", "empty_title",
                                      "malformed_markers"}


def test_vocab_file_header(workdir):
    with open(workdir["vocab"]) as fh:
        assert fh.readline().startswith("C2Q-VOCAB v1 count=")


def test_generate_stdout_lines(workdir, capsys, tmp_path):
    snippets = tmp_path / "snippets.jsonl"
    snippets.write_text('{"code": "x = foo(1)"}\n{"code": "y = bar(2)"}\n')
    assert run(["generate", "--checkpoint", workdir["ckpt"],
                "--vocab", workdir["vocab"], "--input", str(snippets),
                "--greedy"]) == 0
    lines = capsys.readouterr().out.strip("\n").split("\n")
    assert len(lines) == 2


def test_generate_beam_matches_rerun(workdir, capsys, tmp_path):
    snippets = tmp_path / "snippets.jsonl"
    snippets.write_text('{"code": "z = compute(a, b)"}\n')
    outs = []
    for _ in range(2):
        assert run(["generate", "--checkpoint", workdir["ckpt"],
                    "--vocab", workdir["vocab"], "--input", str(snippets),
                    "--beam", "3"]) == 0
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]


def test_evaluate_report_schema(workdir, capsys, tmp_path):
    out = tmp_path / "report.json"
    assert run(["evaluate", "--checkpoint", workdir["ckpt"],
                "--vocab", workdir["vocab"], "--test-pairs", workdir["test"],
                "--greedy", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert set(report) == {"bleu1", "bleu2", "bleu3", "bleu4",
                           "rouge1", "rouge2", "rougeL", "pairs"}
    assert report == json.loads(capsys.readouterr().out)


def test_ir_baseline_report(workdir, capsys):
    assert run(["ir-baseline", "--train-pairs", workdir["train"],
                "--test-pairs", workdir["test"]]) == 0
    report = json.loads(capsys.readouterr().out)
    assert 0.0 <= report["bleu1"] <= 1.0


def test_dedup_outputs(workdir, capsys, tmp_path):
    out_pairs = tmp_path / "clean.jsonl"
    report_path = tmp_path / "dedup.json"
    assert run(["dedup", "--train-pairs", workdir["train"],
                "--test-pairs", workdir["test"], "--vocab", workdir["vocab"],
                "--out-pairs", str(out_pairs), "--report", str(report_path),
                "--checkpoint", workdir["ckpt"], "--delta", "0.8"]) == 0
    report = json.loads(report_path.read_text())
    kept = corpus.read_pairs(str(out_pairs))
    assert report["kept"] == len(kept)
    assert report["kept"] + report["removed"] == \
        len(corpus.read_pairs(workdir["test"]))


def test_retrieve_format(workdir, capsys, tmp_path):
    snippets = tmp_path / "snippets.jsonl"
    first = corpus.read_pairs(workdir["train"])[0]
    snippets.write_text(json.dumps({"code_tokens": first.code_tokens}) + "\n")
    assert run(["retrieve", "--train-pairs", workdir["train"],
                "--vocab", workdir["vocab"], "--checkpoint", workdir["ckpt"],
                "--input", str(snippets), "--top", "2"]) == 0
    lines = capsys.readouterr().out.strip("\n").split("\n")
    assert len(lines) == 2
    sim, doc_id, title = lines[0].split("\t")
    assert float(sim) == pytest.approx(1.0)
    assert int(doc_id) == first.id


def test_missing_required_flag_is_usage_error(capsys):
    assert run(["build-vocab", "--out", "x"]) == 1
    assert "error kind=usage" in capsys.readouterr().err


def test_unknown_command_is_usage_error(capsys):
    assert run(["frobnicate"]) == 1


def test_missing_input_file_is_data_error(capsys):
    assert run(["preprocess", "--input", "/no/such/file.jsonl",
                "--out-dir", "/tmp/never"]) == 2
    assert "error kind=data" in capsys.readouterr().err


def test_bad_checkpoint_is_data_error(workdir, capsys, tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    snippets = tmp_path / "s.jsonl"
    snippets.write_text('{"code": "x = 1"}\n')
    assert run(["generate", "--checkpoint", str(bad),
                "--vocab", workdir["vocab"], "--input", str(snippets)]) == 2


def test_config_file_provides_defaults(workdir, capsys, tmp_path):
    cfg = tmp_path / "c2q.cfg"
    cfg.write_text("min_freq = 0\n\n# comment line\n")
    out = tmp_path / "vocab_cfg.txt"
    assert run(["build-vocab", "--config", str(cfg),
                "--pairs", workdir["train"], "--out", str(out)]) == 0
    with open(out) as fh, open(workdir["vocab"]) as ref:
        pass  # both exist; sizes compared below
    size_cfg = json.loads(capsys.readouterr().out)["vocab_size"]
    # same min_freq=0 as the fixture vocab but over the full small corpus
    assert size_cfg >= 4


def test_config_flag_wins_over_file(workdir, capsys, tmp_path):
    cfg = tmp_path / "c2q.cfg"
    cfg.write_text("min_freq=5\n")
    out_low = tmp_path / "v_low.txt"
    assert run(["build-vocab", "--config", str(cfg), "--pairs",
                workdir["train"], "--out", str(out_low),
                "--min-freq", "0"]) == 0
    size_flag = json.loads(capsys.readouterr().out)["vocab_size"]
    out_high = tmp_path / "v_high.txt"
    assert run(["build-vocab", "--config", str(cfg), "--pairs",
                workdir["train"], "--out", str(out_high)]) == 0
    size_cfg = json.loads(capsys.readouterr().out)["vocab_size"]
    assert size_flag > size_cfg


def test_config_unknown_key_rejected(workdir, capsys, tmp_path):
    cfg = tmp_path / "c2q.cfg"
    cfg.write_text("bogus_key=1\n")
    assert run(["build-vocab", "--config", str(cfg), "--pairs",
                workdir["train"], "--out", str(tmp_path / "v.txt")]) == 2
    assert "bogus_key" in capsys.readouterr().err


def test_config_malformed_line_rejected(workdir, capsys, tmp_path):
    cfg = tmp_path / "c2q.cfg"
    cfg.write_text("not a key value line\n")
    assert run(["build-vocab", "--config", str(cfg), "--pairs",
                workdir["train"], "--out", str(tmp_path / "v.txt")]) == 2


def test_threads_env_same_output(workdir, capsys, tmp_path, monkeypatch):
    snippets = tmp_path / "snippets.jsonl"
    snippets.write_text('{"code": "a = f(1)"}\n{"code": "b = g(2)"}\n'
                        '{"code": "c = h(3)"}\n')
    argv = ["generate", "--checkpoint", workdir["ckpt"],
            "--vocab", workdir["vocab"], "--input", str(snippets), "--greedy"]
    assert run(argv) == 0
    serial = capsys.readouterr().out
    monkeypatch.setenv("C2Q_THREADS", "3")
    assert run(argv) == 0
    assert capsys.readouterr().out == serial
