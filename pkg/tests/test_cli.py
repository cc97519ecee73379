import pytest
import yaml

from convmt.cli import main
from convmt.config import DEFAULTS, describe_defaults, load_config
from convmt.errors import ConfigError
from convmt.metrics import EvalReport
from convmt.subword import SubwordModel
from convmt.toydata import reversal_pairs
from convmt.training import Checkpoint


class TestLoadConfig:
    def test_defaults_without_file(self):
        cfg = load_config()
        assert cfg == DEFAULTS
        assert cfg is not DEFAULTS  # caller gets a private copy

    def test_file_values_override_defaults(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("seed: 9\nmodel:\n  layers: 5\n", encoding="utf-8")
        cfg = load_config(path)
        assert cfg["seed"] == 9
        assert cfg["model"]["layers"] == 5
        assert cfg["model"]["embed_dim"] == DEFAULTS["model"]["embed_dim"]

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("model:\n  n_heads: 8\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="model.n_heads"):
            load_config(path)
        path.write_text("optimizer: adam\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="optimizer"):
            load_config(path)

    def test_dotted_overrides(self):
        cfg = load_config(overrides=["training.schedule.base_lr=0.5",
                                     "decoding.beam_width=3",
                                     "filter.langid_enabled=true"])
        assert cfg["training"]["schedule"]["base_lr"] == 0.5
        assert cfg["decoding"]["beam_width"] == 3
        assert cfg["filter"]["langid_enabled"] is True

    def test_overrides_beat_file(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("seed: 9\n", encoding="utf-8")
        cfg = load_config(path, overrides=["seed=11"])
        assert cfg["seed"] == 11

    def test_bad_overrides_rejected(self):
        with pytest.raises(ConfigError, match="key=value"):
            load_config(overrides=["seed"])
        with pytest.raises(ConfigError, match="unknown"):
            load_config(overrides=["model.heads=4"])
        with pytest.raises(ConfigError, match="unknown"):
            load_config(overrides=["nonexistent.child=1"])

    def test_non_mapping_file_rejected(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("- a\n- b\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_describe_defaults_is_valid_yaml(self):
        assert yaml.safe_load(describe_defaults()) == DEFAULTS


@pytest.fixture()
def toy_files(tmp_path):
    """Small bitext files plus the derived artifacts directory."""
    pairs = reversal_pairs(40, vocab_size=8, min_len=2, max_len=5, seed=1)
    (tmp_path / "in.src").write_text(
        "".join(s + "\n" for s, _ in pairs), encoding="utf-8")
    (tmp_path / "in.tgt").write_text(
        "".join(t + "\n" for _, t in pairs), encoding="utf-8")
    return tmp_path


class TestExitCodes:
    def test_missing_file_is_exit_3(self, tmp_path):
        assert main(["train-tokenizer", "--input", str(tmp_path / "nope"),
                     "--output", str(tmp_path / "out")]) == 3

    def test_config_error_is_exit_2(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("bogus_key: 1\n", encoding="utf-8")
        assert main(["run-pipeline", "--config", str(bad)]) == 2

    def test_format_error_is_exit_4(self, tmp_path):
        junk = tmp_path / "junk.ckpt"
        junk.write_bytes(b"garbage bytes")
        assert main(["average-checkpoints", "--output",
                     str(tmp_path / "o.ckpt"), str(junk)]) == 4

    def test_data_error_is_exit_5(self, toy_files):
        # misaligned bitext
        (toy_files / "short.tgt").write_text("only one line\n",
                                             encoding="utf-8")
        assert main(["filter-corpus",
                     "--source", str(toy_files / "in.src"),
                     "--target", str(toy_files / "short.tgt"),
                     "--out-source", str(toy_files / "o.src"),
                     "--out-target", str(toy_files / "o.tgt")]) == 5


class TestTokenizerCommands:
    @pytest.mark.parametrize("kind", ["bpe", "unigram"])
    def test_train_encode_decode_round_trip(self, toy_files, kind):
        model_path = toy_files / f"{kind}.subword"
        assert main(["train-tokenizer", "--input", str(toy_files / "in.src"),
                     "--output", str(model_path), "--kind", kind,
                     "--vocab-budget", "40"]) == 0
        model = SubwordModel.load(model_path)
        assert model.kind == kind

        ids_path = toy_files / "ids.txt"
        assert main(["encode", "--model", str(model_path),
                     "--input", str(toy_files / "in.src"),
                     "--output", str(ids_path)]) == 0
        text_path = toy_files / "round.txt"
        assert main(["encode", "--decode", "--model", str(model_path),
                     "--input", str(ids_path),
                     "--output", str(text_path)]) == 0
        original = (toy_files / "in.src").read_text(encoding="utf-8")
        assert text_path.read_text(encoding="utf-8") == original


class TestFilterCommand:
    def test_length_filter(self, toy_files):
        assert main(["filter-corpus",
                     "--source", str(toy_files / "in.src"),
                     "--target", str(toy_files / "in.tgt"),
                     "--out-source", str(toy_files / "f.src"),
                     "--out-target", str(toy_files / "f.tgt"),
                     "--min-tokens", "3", "--max-tokens", "4"]) == 0
        kept = (toy_files / "f.src").read_text(encoding="utf-8").splitlines()
        assert kept
        assert all(3 <= len(l.split()) <= 4 for l in kept)


class TestEvaluateCommand:
    def test_prints_report_and_writes_json(self, tmp_path, capsys):
        (tmp_path / "hyp").write_text("a b c d\n", encoding="utf-8")
        (tmp_path / "ref").write_text("a b c d\n", encoding="utf-8")
        json_path = tmp_path / "report.json"
        assert main(["evaluate", "--hypotheses", str(tmp_path / "hyp"),
                     "--references", str(tmp_path / "ref"),
                     "--output-json", str(json_path)]) == 0
        out = capsys.readouterr().out
        assert "BLEU = 100.00" in out
        report = EvalReport.from_json(json_path.read_text(encoding="utf-8"))
        assert report.bleu == pytest.approx(100.0)


def write_pipeline_config(tmp_path, data_dir, out_dir, **extra):
    cfg = {
        "seed": 0,
        "output_dir": str(out_dir),
        "corpus": {
            "source_lang": "src", "target_lang": "tgt",
            "train_source": str(data_dir / "train.src"),
            "train_target": str(data_dir / "train.tgt"),
            "dev_source": str(data_dir / "dev.src"),
            "dev_target": str(data_dir / "dev.tgt"),
            "test_source": str(data_dir / "test.src"),
            "test_target": str(data_dir / "test.tgt"),
        },
        "tokenizer": {"kind": "bpe", "vocab_budget": 60},
        "filter": {"langid_enabled": False, "length_enabled": False},
        "model": {"embed_dim": 24, "hidden_dim": 24, "layers": 1,
                  "dropout": 0.1, "max_positions": 64},
        "training": {"max_epochs": 10, "patience": 10,
                     "batch_token_budget": 600,
                     "schedule": {"kind": "fixed", "base_lr": 0.25}},
        "decoding": {"beam_width": 3, "max_len": 24},
        "backtranslation": {"enabled": False},
    }
    cfg.update(extra)
    path = tmp_path / "pipeline.yaml"
    path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return path


@pytest.fixture()
def pipeline_data(tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    pairs = reversal_pairs(160, vocab_size=8, min_len=2, max_len=5, seed=2)
    splits = {"train": pairs[:120], "dev": pairs[120:140],
              "test": pairs[140:]}
    for name, chunk in splits.items():
        (data / f"{name}.src").write_text(
            "".join(s + "\n" for s, _ in chunk), encoding="utf-8")
        (data / f"{name}.tgt").write_text(
            "".join(t + "\n" for _, t in chunk), encoding="utf-8")
    return tmp_path, data


class TestPipelineCommands:
    def test_run_pipeline_produces_artifacts(self, pipeline_data):
        tmp_path, data = pipeline_data
        out = tmp_path / "run"
        cfg_path = write_pipeline_config(tmp_path, data, out)
        assert main(["run-pipeline", "--config", str(cfg_path)]) == 0
        assert (out / "hypotheses.txt").exists()
        assert (out / "report.json").exists()
        report = EvalReport.from_json(
            (out / "report.json").read_text(encoding="utf-8"))
        assert report.sentences == 20
        best = Checkpoint.load(out / "forward" / "best.ckpt")
        assert best.config.embed_dim == 24

    def test_translate_and_average_commands(self, pipeline_data):
        tmp_path, data = pipeline_data
        out = tmp_path / "run"
        cfg_path = write_pipeline_config(tmp_path, data, out)
        assert main(["run-pipeline", "--config", str(cfg_path)]) == 0

        ckpts = sorted((out / "forward").glob("epoch*.ckpt"))
        assert len(ckpts) >= 2
        avg = tmp_path / "avg.ckpt"
        assert main(["average-checkpoints", "--output", str(avg),
                     str(ckpts[-2]), str(ckpts[-1])]) == 0
        assert Checkpoint.load(avg).metadata["averaged_from"]

        hyp = tmp_path / "hyp.txt"
        assert main(["translate", "--checkpoint",
                     str(out / "forward" / "best.ckpt"),
                     "--source-tokenizer", str(out / "tokenizer.source"),
                     "--target-tokenizer", str(out / "tokenizer.target"),
                     "--input", str(data / "test.src"),
                     "--output", str(hyp),
                     "--beam-width", "3", "--max-len", "24"]) == 0
        lines = hyp.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 20

    def test_set_override_reaches_pipeline(self, pipeline_data):
        tmp_path, data = pipeline_data
        out = tmp_path / "run2"
        cfg_path = write_pipeline_config(tmp_path, data, out)
        assert main(["run-pipeline", "--config", str(cfg_path),
                     "--set", "model.embed_dim=16",
                     "--set", "model.hidden_dim=16",
                     "--set", "training.max_epochs=1"]) == 0
        best = Checkpoint.load(out / "forward" / "best.ckpt")
        assert best.config.embed_dim == 16
