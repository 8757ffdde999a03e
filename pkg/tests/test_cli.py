import json

import numpy as np
import pytest
from click.testing import CliRunner

from corrdyn.cli import main
from corrdyn.model import load_recording
from corrdyn.pipeline import OUTPUT_ROOT_ENV


@pytest.fixture
def runner():
    return CliRunner()


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def phrase_data(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    spec = _write(d / "spec.toml", 'seed = 3\n[synth]\nkind = "phrases"\nsubjects = 1\nn_phrases = 4\n')
    res = CliRunner().invoke(main, ["synth", str(spec), "--out", str(d / "data")])
    assert res.exit_code == 0, res.output
    return d / "data"


class TestSynth:
    def test_phrase_outputs(self, phrase_data):
        names = sorted(p.name for p in phrase_data.iterdir())
        assert names == ["montage.csv", "pipeline.toml", "s01_reverse.csv", "s01_reverse_events.csv",
                         "s01_standard.csv", "s01_standard_events.csv", "truth.json"]
        truth = json.loads((phrase_data / "truth.json").read_text())
        assert truth["seed"] == 3 and len(truth["recordings"]) == 2

    def test_components(self, runner, tmp_path):
        spec = _write(tmp_path / "c.toml", '[synth]\nkind = "components"\nn_conditions = 6\nn_electrodes = 5\n'
                                           'window = [0, 20]\nnoise_sigma = 0.5\n')
        res = runner.invoke(main, ["synth", str(spec), "--out", str(tmp_path / "o"), "--seed", "4"])
        assert res.exit_code == 0, res.output
        erps = sorted((tmp_path / "o" / "erps").iterdir())
        assert len(erps) == 6
        rec = load_recording(erps[0])
        assert rec.data.shape == (5, 20)
        truth = json.loads((tmp_path / "o" / "truth.json").read_text())
        assert truth["noise_sigma"] == 0.5

    def test_unknown_kind(self, runner, tmp_path):
        spec = _write(tmp_path / "bad.toml", '[synth]\nkind = "music"\n')
        res = runner.invoke(main, ["synth", str(spec), "--out", str(tmp_path / "o")])
        assert res.exit_code == 2 and "unknown synth kind" in res.output

    def test_too_few_conditions(self, runner, tmp_path):
        spec = _write(tmp_path / "c.toml", '[synth]\nkind = "components"\nn_conditions = 3\nwindow = [0, 10]\n')
        res = runner.invoke(main, ["synth", str(spec), "--out", str(tmp_path / "o")])
        assert res.exit_code == 2 and "need more than 3" in res.output

    def test_bad_section(self, runner, tmp_path):
        spec = _write(tmp_path / "bad.toml", '[synth]\nvoices = 3\n')
        assert runner.invoke(main, ["synth", str(spec), "--out", str(tmp_path / "o")]).exit_code == 2

    def test_output_root(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
        spec = _write(tmp_path / "c.toml", '[output]\ndir = "rel"\n[synth]\nkind = "components"\n'
                                           'n_conditions = 5\nn_electrodes = 4\nwindow = [0, 10]\n')
        res = runner.invoke(main, ["synth", str(spec)])
        assert res.exit_code == 0 and (tmp_path / "rel" / "truth.json").is_file()


class TestRunAndFriends:
    def test_run_generated_config(self, runner, phrase_data, tmp_path):
        out = tmp_path / "run"
        res = runner.invoke(main, ["run", str(phrase_data / "pipeline.toml"), "--out", str(out)])
        assert res.exit_code == 0, res.output
        man = json.loads((out / "manifest.json").read_text())
        # montage plus one recording and one event list per order
        assert len(man["inputs"]) == 5
        assert set(man["recipes"]) == {"overall-standard", "content-words-64", "categories-mean"}

        # compare two saved solutions
        a = out / "recipes" / "content-words-64" / "solution.json"
        b = out / "recipes" / "categories-mean" / "solution.json"
        res = runner.invoke(main, ["compare", str(a), str(b), "--ka", "2", "--kb", "2",
                                   "--out", str(tmp_path / "cos.csv")])
        assert res.exit_code == 0, res.output
        lines = res.output.splitlines()
        assert lines[0] == ",EGV1_b,EGV2_b" and lines[-1].startswith("shared columns:")
        full = np.loadtxt(tmp_path / "cos.csv", delimiter=",", skiprows=1, usecols=(1, 2))
        assert full.shape == (2, 2) and ((full >= 0) & (full <= 1)).all()

        # no shared columns: electrodes x time vs conditions x (electrode, time)
        c = out / "recipes" / "overall-standard" / "solution.json"
        res = runner.invoke(main, ["compare", str(a), str(c)])
        assert res.exit_code == 2 and "share no column" in res.output

        # figures are re-rendered byte-identically
        before = {p: p.read_bytes() for p in out.rglob("*.svg")}
        for p in before:
            p.unlink()
        res = runner.invoke(main, ["figures", str(out)])
        assert res.exit_code == 0
        assert {p: p.read_bytes() for p in out.rglob("*.svg")} == before

    def test_preprocess(self, runner, phrase_data, tmp_path):
        out = tmp_path / "erps"
        res = runner.invoke(main, ["preprocess", str(phrase_data / "pipeline.toml"), "--out", str(out),
                                   "--lp", "30", "--hp", "0", "--baseline=-100:0"])
        assert res.exit_code == 0, res.output
        grand = sorted(p.name for p in (out / "grand").iterdir())
        assert "phrase-standard.csv" in grand and "phrase-reverse.csv" in grand
        rec = load_recording(out / "s01" / "phrase-standard.csv")
        assert rec.data.shape[0] == 102
        assert rec.start_time == -250.0 and rec.n_samples == 2100

    def test_run_config_error(self, runner, tmp_path):
        cfg = _write(tmp_path / "c.toml", '[synth]\nsubjects = 1\n')
        res = runner.invoke(main, ["run", str(cfg), "--out", str(tmp_path / "o")])
        assert res.exit_code == 2 and "recipe" in res.output

    def test_run_recipe_error(self, runner, tmp_path):
        cfg = _write(tmp_path / "c.toml", '[synth]\nsubjects = 1\nn_phrases = 2\n'
                                          '[[recipe]]\nname = "none"\nmatch = { role = "adverb" }\n')
        res = runner.invoke(main, ["run", str(cfg), "--out", str(tmp_path / "o")])
        assert res.exit_code == 1 and "fewer than 2 rows" in res.output
        assert (tmp_path / "o" / "manifest.json").is_file()

    def test_missing_config(self, runner, tmp_path):
        assert runner.invoke(main, ["run", str(tmp_path / "nope.toml")]).exit_code == 2

    def test_help(self, runner):
        res = runner.invoke(main, ["--help"])
        assert res.exit_code == 0
        for cmd in ("synth", "preprocess", "run", "compare", "figures"):
            assert cmd in res.output
