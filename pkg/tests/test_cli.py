"""Command-line surface: exit codes, artifact files, determinism, and
the printed parameter-count strings."""

import json
import os
import subprocess
import sys
import time

import pytest

from ranlab.cli import parse_config_text
from ranlab.errors import ConfigError

TINY_CONFIG = """\
# tiny character model, fast enough for tests
kind = ran-simplified
hidden_dims = 16
embedding_dim = 16
vocab_mode = char
vocab_size = none
dropout_rate = 0.0
lr_initial = 1.0
lr_decay = 1.0
decay_start_epoch = 1
max_epochs = 2
batch_size = 4
bptt_length = 16
clip_norm = 5.0
seed = 11
"""


def run_cli(*args, env=None, cwd=None):
    full_env = dict(os.environ)
    full_env.pop("RANLAB_SEED", None)
    if env:
        full_env.update(env)
    return subprocess.run(
        [sys.executable, "-m", "ranlab", *args],
        capture_output=True, text=True, env=full_env, cwd=cwd,
    )


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One shared tiny training run: corpus, config, and output dir."""
    root = tmp_path_factory.mktemp("cli-run")
    corpus = root / "corpus.txt"
    corpus.write_text("ab" * 400 + "\n")
    config = root / "tiny.cfg"
    config.write_text(TINY_CONFIG)
    out = root / "run"
    result = run_cli("train", "--config", str(config), "--corpus", str(corpus),
                     "--out", str(out))
    assert result.returncode == 0, result.stderr
    return {"root": root, "corpus": corpus, "config": config, "out": out}


# ----------------------------------------------------------------- params


PARAM_CASES = [
    (["--kind", "lstm", "--dh", "650", "--di", "650", "--layers", "2"],
     "6,765,200 (6.77M)"),
    (["--kind", "ran-general", "--dh", "650", "--di", "650", "--layers", "2"],
     "4,227,600 (4.23M)"),
    (["--kind", "lstm", "--dh", "1500", "--di", "1500", "--layers", "2"],
     "36,012,000 (36.01M)"),
    (["--kind", "ran-general", "--dh", "1500", "--di", "1500", "--layers", "2"],
     "22,506,000 (22.51M)"),
    (["--kind", "lstm", "--dh", "2048", "--di", "512", "--projection", "512"],
     "9,445,376 (9.45M)"),
    (["--kind", "ran-general", "--dh", "2048", "--di", "512", "--projection", "512"],
     "6,295,552 (6.30M)"),
]


@pytest.mark.parametrize("args,expected", PARAM_CASES)
def test_params_prints_exact_counts(args, expected):
    result = run_cli("params", *args)
    assert result.returncode == 0
    assert result.stdout.splitlines()[0] == expected


def test_params_notes_nearby_quoted_figure():
    result = run_cli("params", "--kind", "lstm", "--dh", "1500", "--di", "1500",
                     "--layers", "2")
    assert "36.02M" in result.stdout
    result = run_cli("params", "--kind", "lstm", "--dh", "650", "--di", "650",
                     "--layers", "2")
    assert "note" not in result.stdout


def test_params_json_matches_human_output():
    result = run_cli("params", "--kind", "gru", "--dh", "650", "--json")
    payload = json.loads(result.stdout)
    assert payload["total"] == 2_536_950
    assert payload["millions"] == "2.54"


def test_params_rejects_unknown_kind():
    result = run_cli("params", "--kind", "elman", "--dh", "10")
    assert result.returncode == 2


# ------------------------------------------------------------------ train


def test_train_missing_corpus_exits_3(tmp_path):
    missing = tmp_path / "no-such-corpus.txt"
    result = run_cli("train", "--corpus", str(missing), "--out", str(tmp_path / "o"))
    assert result.returncode == 3
    assert str(missing) in result.stderr


def test_train_writes_artifacts(trained):
    assert (trained["out"] / "metrics.tsv").is_file()
    assert (trained["out"] / "model.ckpt").is_file()
    lines = (trained["out"] / "metrics.tsv").read_text().strip().split("\n")
    assert len(lines) == 2  # one per epoch


def test_train_same_seed_is_byte_identical(trained, tmp_path):
    result = run_cli("train", "--config", str(trained["config"]),
                     "--corpus", str(trained["corpus"]), "--out", str(tmp_path))
    assert result.returncode == 0
    assert (tmp_path / "metrics.tsv").read_bytes() == \
        (trained["out"] / "metrics.tsv").read_bytes()
    assert (tmp_path / "model.ckpt").read_bytes() == \
        (trained["out"] / "model.ckpt").read_bytes()


def test_seed_flag_and_env_agree(trained, tmp_path):
    by_flag, by_env, other = tmp_path / "flag", tmp_path / "env", tmp_path / "other"
    base = ["train", "--config", str(trained["config"]),
            "--corpus", str(trained["corpus"])]
    assert run_cli(*base, "--seed", "123", "--out", str(by_flag)).returncode == 0
    assert run_cli(*base, "--out", str(by_env),
                   env={"RANLAB_SEED": "123"}).returncode == 0
    assert run_cli(*base, "--seed", "999", "--out", str(other)).returncode == 0
    flag_bytes = (by_flag / "metrics.tsv").read_bytes()
    assert flag_bytes == (by_env / "metrics.tsv").read_bytes()
    assert flag_bytes != (other / "metrics.tsv").read_bytes()


def test_train_divergence_exits_4(trained, tmp_path):
    config = tmp_path / "diverge.cfg"
    config.write_text(TINY_CONFIG + "lr_initial = 1e30\nclip_norm = none\n"
                      "output_activation = identity\n")
    result = run_cli("train", "--config", str(config),
                     "--corpus", str(trained["corpus"]), "--out", str(tmp_path / "o"))
    assert result.returncode == 4
    assert "diverged" in result.stderr


def test_train_rejects_unknown_config_key(trained, tmp_path):
    config = tmp_path / "bad.cfg"
    config.write_text(TINY_CONFIG + "momentum = 0.9\n")
    result = run_cli("train", "--config", str(config),
                     "--corpus", str(trained["corpus"]), "--out", str(tmp_path / "o"))
    assert result.returncode == 2
    assert "momentum" in result.stderr


# ------------------------------------------------------------- eval, trace


def test_eval_matches_metrics_log(trained):
    result = run_cli("eval", "--checkpoint", str(trained["out"] / "model.ckpt"),
                     "--corpus", str(trained["corpus"]))
    assert result.returncode == 0, result.stderr
    report = dict(line.split("\t") for line in result.stdout.strip().split("\n"))
    last = (trained["out"] / "metrics.tsv").read_text().strip().split("\n")[-1]
    _, _, _, valid_nats, valid_ppl, valid_bpc = last.split("\t")
    assert report["nats"] == valid_nats
    assert report["perplexity"] == valid_ppl
    assert report["bpc"] == valid_bpc


def test_trace_dot_edge_count(trained, tmp_path):
    text = tmp_path / "probe.txt"
    text.write_text("abab")
    result = run_cli("trace", "--checkpoint", str(trained["out"] / "model.ckpt"),
                     "--input", str(text), "--format", "dot")
    assert result.returncode == 0, result.stderr
    assert result.stdout.count("->") == 3
    assert result.stdout.startswith("digraph attribution {")


def test_trace_two_tokens_single_edge(trained, tmp_path):
    text = tmp_path / "pair.txt"
    text.write_text("ab")
    result = run_cli("trace", "--checkpoint", str(trained["out"] / "model.ckpt"),
                     "--input", str(text), "--format", "dot")
    assert result.stdout.count("->") == 1


def test_trace_tsv_artifact(trained, tmp_path):
    text = tmp_path / "probe.txt"
    text.write_text("ababab")
    out = tmp_path / "trace.tsv"
    result = run_cli("trace", "--checkpoint", str(trained["out"] / "model.ckpt"),
                     "--input", str(text), "--format", "tsv", "--out", str(out))
    assert result.returncode == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0].startswith("t\ttoken")
    assert len(lines) == 6  # header plus T-1 rows


# -------------------------------------------------------------- selfcheck


def test_selfcheck_quick_passes_fast():
    start = time.perf_counter()
    result = run_cli("selfcheck", "--quick")
    elapsed = time.perf_counter() - start
    assert result.returncode == 0, result.stdout + result.stderr
    assert elapsed < 60
    lines = result.stdout.strip().split("\n")
    assert len(lines) == 7
    assert all(line.startswith("ok ") for line in lines)


def test_selfcheck_fault_injection_fails_named_check():
    result = run_cli("selfcheck", "--quick", "--inject-fault", "negate-forget-gate")
    assert result.returncode == 1
    assert "FAIL state-reconstruction" in result.stdout
    assert "state-reconstruction" in result.stderr


# ------------------------------------------------------------ config files


def test_config_preset_expansion_and_override():
    config = parse_config_text("preset = ptb-medium\nmax_epochs = 3\n")
    assert config.hidden_dims == (650, 650)
    assert config.max_epochs == 3
    assert config.dropout_rate == 0.5


def test_config_rejects_malformed_lines():
    with pytest.raises(ConfigError):
        parse_config_text("kind ran-general\n")
    with pytest.raises(ConfigError):
        parse_config_text("preset = no-such-preset\n")
    with pytest.raises(ConfigError):
        parse_config_text("batch_size = twenty\n")


def test_config_comments_and_none_values():
    config = parse_config_text(
        "# a comment\n\nkind = gru  # trailing comment\nclip_norm = none\n"
        "hidden_dims = 32,16\n"
    )
    assert config.kind.value == "gru"
    assert config.clip_norm is None
    assert config.hidden_dims == (32, 16)
