import hashlib
import json

import pytest

from gaf_attn.cli import DEFAULTS, build_parser, run_command, validate_config
from gaf_attn.gaf import load_cache
from gaf_attn.model import load_checkpoint

SMALL_NET = ["--filters", "2,2,4,4", "--grid", "2"]


def digest(path):
    h = hashlib.sha256()
    for f in sorted(p for p in path.rglob("*") if p.is_file()):
        h.update(f.relative_to(path).as_posix().encode())
        h.update(f.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("d") / "ds"
    assert run_command(["synth", "--out", str(out), "--subjects", "1", "--trials", "6", "--seed", "1"]) == 0
    return out


class TestValidateConfig:
    def test_empty_is_defaults(self):
        cfg, errors = validate_config({})
        assert errors == [] and cfg == DEFAULTS

    def test_batch_size(self):
        _, errors = validate_config({"batch_size": 8})
        assert len(errors) == 1 and "batch_size must be 1" in errors[0]

    def test_negative_lr(self):
        _, errors = validate_config({"base_lr": -1})
        assert any("base_lr" in e for e in errors)

    def test_collects_every_error(self):
        _, errors = validate_config({"batch_size": 8, "base_lr": -1, "n_folds": 1, "bogus": 3})
        assert len(errors) == 4


class TestSynth:
    def test_repeatable(self, tmp_path):
        argv = ["synth", "--subjects", "2", "--trials", "10", "--seed", "1", "--out"]
        assert run_command([*argv, str(tmp_path / "a")]) == 0
        assert run_command([*argv, str(tmp_path / "b")]) == 0
        assert digest(tmp_path / "a") == digest(tmp_path / "b")

    def test_env_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GAF_ATTN_SEED", "7")
        assert run_command(["synth", "--subjects", "1", "--trials", "2", "--out", str(tmp_path / "e")]) == 0
        assert json.loads((tmp_path / "e" / "manifest.json").read_text())["seed"] == 7

    def test_flag_beats_config_file(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"trials_per_subject": 2, "seed": 3}))
        argv = ["synth", "--config", str(cfg), "--subjects", "1", "--seed", "4", "--out", str(tmp_path / "o")]
        assert run_command(argv) == 0
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["seed"] == 4 and manifest["config"]["trials_per_subject"] == 2


class TestScore:
    def test_identical_rows(self, tmp_path, capsys):
        f = tmp_path / "t.csv"
        f.write_text("heard,written\nthe|cat|sat,the|cat|sat\na|b,A|b.\n")
        assert run_command(["score", "--in", str(f)]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert [line.rsplit(",", 1)[1] for line in lines[1:]] == ["100.0", "100.0"]

    def test_empty_heard(self, tmp_path, capsys):
        f = tmp_path / "t.csv"
        f.write_text("heard,written\n,a\n")
        assert run_command(["score", "--in", str(f)]) == 1
        assert capsys.readouterr().err.startswith("error: load: ")


class TestPipeline:
    def test_encode_export_train_predict(self, dataset, tmp_path, capsys):
        cache = tmp_path / "cache"
        assert run_command(["encode", "--dataset", str(dataset), "--out", str(cache), "--paa", "16"]) == 0
        images, meta = load_cache(cache)
        assert images[0].size == 16 and meta["encode"]["paa_target"] == 16 and meta["seed"] == 0

        pgm = tmp_path / "a.pgm"
        argv = ["export-image", "--dataset", str(dataset), "--subject", "1", "--trial", "1", "--paa", "16"]
        assert run_command([*argv, "--channel", "3", "--out", str(pgm)]) == 0
        assert pgm.read_bytes().startswith(b"P5\n16 16\n255\n")

        run = tmp_path / "run"
        argv = ["train", "--dataset", str(cache), "--out", str(run), "--folds", "3", "--epochs", "1", *SMALL_NET]
        assert run_command(argv) == 0
        report = json.loads((run / "report.json").read_text())
        assert report["config"]["paa_target"] == 16 and report["seed"] == 0
        assert report["n_train"] == 4 and report["n_val"] == 2
        _, extra = load_checkpoint(run / "model.gafm")
        assert extra["config"]["conv_filters"] == [2, 2, 4, 4]

        capsys.readouterr()
        argv = ["predict", "--checkpoint", str(run / "model.gafm"), "--dataset", str(dataset)]
        assert run_command([*argv, "--subject", "1", "--trial", "2"]) == 0
        assert 0.0 <= float(capsys.readouterr().out) <= 100.0

    def test_cv_report_and_curves(self, dataset, tmp_path):
        out = tmp_path / "cv" / "r.json"
        argv = ["cv", "--dataset", str(dataset), "--out", str(out), "--folds", "3", "--epochs", "2", "--paa", "16"]
        assert run_command([*argv, "--seed", "7", *SMALL_NET]) == 0
        report = json.loads(out.read_text())
        assert len(report["fold_maes"]) == 3 and report["seed"] == 7
        assert report["config"]["resolved"]["paa_target"] == 16
        curves = (tmp_path / "cv" / "r_curves.csv").read_text().splitlines()
        assert len(curves) == 1 + 3 * 2

    def test_unknown_trial(self, dataset, tmp_path, capsys):
        argv = ["export-image", "--dataset", str(dataset), "--subject", "1", "--trial", "99"]
        assert run_command([*argv, "--out", str(tmp_path / "x.pgm")]) == 1
        assert capsys.readouterr().err.startswith("error: argument: ")


class TestErrors:
    def test_config_errors_single_line(self, dataset, tmp_path, capsys):
        argv = ["cv", "--dataset", str(dataset), "--batch-size", "8", "--lr", "-1", "--out", str(tmp_path / "r.json")]
        assert run_command(argv) == 1
        err = capsys.readouterr().err
        assert err.count("\n") == 1 and err.startswith("error: config: ")
        assert "batch_size" in err and "base_lr" in err

    def test_missing_file(self, tmp_path, capsys):
        argv = ["predict", "--checkpoint", str(tmp_path / "none"), "--dataset", str(tmp_path)]
        assert run_command([*argv, "--subject", "1", "--trial", "1"]) == 1
        assert capsys.readouterr().err.startswith("error: ")

    @pytest.mark.parametrize("argv", [["frobnicate"], ["synth", "--out", "x", "--bogus"], ["synth"]])
    def test_usage_exit_2(self, argv, capsys):
        with pytest.raises(SystemExit) as exc:
            run_command(argv)
        assert exc.value.code == 2
        assert capsys.readouterr().err.startswith("error: usage: ")

    def test_help_lists_defaults(self, capsys):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["cv", "--help"])
        out = capsys.readouterr().out
        for text in ["(default: 0.0025)", "(default: 0.9)", "(default: 15)", "(default: 12)", "(default: 128)"]:
            assert text in out
