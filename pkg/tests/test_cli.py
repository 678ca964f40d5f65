import subprocess
import sys

import pytest

from repsense import __version__
from repsense.classify import GaussianNbModel
from repsense.cli import main
from repsense.recording import Exercise


def _files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--athletes", "2", "--seed", "7", "--out", str(out)]) == 0
    return out


class TestSynth:
    def test_layout(self, corpus_dir):
        sessions = sorted(p.name for p in (corpus_dir / "sessions").iterdir())
        assert len(sessions) == 16
        assert sessions[0] == "a00_BC"
        assert (corpus_dir / "sessions" / "a00_PU" / "manifest.txt").is_file()
        lines = (corpus_dir / "ground_truth.csv").read_text().splitlines()
        assert len(lines) == 16 * 60
        assert lines[0].startswith("a00,CR,0,0,")

    def test_byte_identical_rerun(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["synth", "--athletes", "1", "--seed", "3", "--dropout", "0.1", "--out", str(a)]) == 0
        assert main(["synth", "--athletes", "1", "--seed", "3", "--dropout", "0.1", "--out", str(b)]) == 0
        fa, fb = _files(a), _files(b)
        fa.pop("run_manifest.txt"), fb.pop("run_manifest.txt")
        assert fa == fb

    def test_run_manifest(self, corpus_dir):
        text = (corpus_dir / "run_manifest.txt").read_text()
        assert "command=synth\n" in text
        assert "seed=7\n" in text
        assert f"version={__version__}\n" in text


class TestSegment:
    def test_counts(self, corpus_dir, tmp_path):
        assert main(["segment", "--corpus", str(corpus_dir), "--out", str(tmp_path)]) == 0
        rows = (tmp_path / "counts.csv").read_text().splitlines()
        assert rows[0] == "session_id,exercise,sets,frames,anchor"
        assert len(rows) == 17
        for row in rows[1:]:
            _, _, sets, frames, _ = row.split(",")
            assert sets == "3" and abs(int(frames) - 60) <= 3
        assert len(list((tmp_path / "segments").glob("*.txt"))) == 16


class TestEvaluate:
    def test_split_is_reproducible(self, corpus_dir, tmp_path):
        args = ["evaluate", "--corpus", str(corpus_dir), "--seed", "5", "--configs", "ALL,BL", "--both"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        fa, fb = _files(tmp_path / "a"), _files(tmp_path / "b")
        assert sorted(fa) == sorted(
            ["split_ALL_cpu.txt", "split_ALL_nocpu.txt", "split_BL_cpu.txt", "split_BL_nocpu.txt",
             "summary.csv", "run_manifest.txt"]
        )
        fa.pop("run_manifest.txt"), fb.pop("run_manifest.txt")
        assert fa == fb
        assert fa["summary.csv"].decode().splitlines()[0] == "config,with_cpu,accuracy"

    def test_cross_validation_accuracy(self, corpus_dir, tmp_path):
        args = ["evaluate", "--corpus", str(corpus_dir), "--protocol", "cv", "--configs", "ALL", "--out", str(tmp_path)]
        assert main(args) == 0
        text = (tmp_path / "cv_ALL_cpu.txt").read_text()
        accuracy = float(next(l for l in text.splitlines() if l.startswith("accuracy,")).split(",")[1])
        assert accuracy >= 0.9
        assert "protocol,cv" in text

    def test_bad_config_name_exits_2(self, corpus_dir, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["evaluate", "--corpus", str(corpus_dir), "--configs", "BOGUS", "--out", str(tmp_path)])
        assert info.value.code == 2

    def test_missing_corpus_exits_1(self, tmp_path):
        assert main(["evaluate", "--corpus", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 1


class TestTrain:
    def test_models_load(self, corpus_dir, tmp_path):
        args = ["train", "--corpus", str(corpus_dir), "--configs", "TR,CPU_ONLY", "--without-cpu", "--out", str(tmp_path)]
        assert main(args) == 0
        names = sorted(p.name for p in tmp_path.glob("model_*.txt"))
        assert names == ["model_CPU_ONLY_cpu.txt", "model_TR_nocpu.txt"]
        model = GaussianNbModel.load(tmp_path / "model_TR_nocpu.txt")
        assert model.classes == tuple(Exercise)
        assert all(name.startswith("wrist_right.") or name == "duration" for name in model.layout)


class TestConfigFile:
    def test_overrides_recorded(self, corpus_dir, tmp_path):
        cfg = tmp_path / "seg.cfg"
        cfg.write_text("filter_order=3\nfilter_cutoff=4.0\n")
        out = tmp_path / "o"
        assert main(["segment", "--corpus", str(corpus_dir), "--config", str(cfg), "--out", str(out)]) == 0
        text = (out / "run_manifest.txt").read_text()
        assert "override.filter_cutoff=4.0" in text and "override.filter_order=3" in text

    @pytest.mark.parametrize("body", ["nonsense_key=1\n", "filter_order=abc\n", "filter_cutoff=40\n"])
    def test_bad_config_exits_2(self, corpus_dir, tmp_path, body):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(body)
        assert main(["segment", "--corpus", str(corpus_dir), "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "repsense", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert __version__ in proc.stdout
