from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repsense import evalkit, synthgen
from repsense.errors import ConfigError, SplitError
from repsense.evalkit import ConfigName, EvaluationReport, Protocol, SensorConfig
from repsense.recording import Exercise, SensorPosition

P = SensorPosition
E = Exercise


def _labels(counts):
    return [E(c) for c, n in enumerate(counts) for _ in range(n)]


class TestConfigs:
    def test_nineteen_standard_configs(self):
        configs = evalkit.standard_configs()
        assert len(configs) == 19
        assert len({c.label for c in configs}) == 19
        assert configs[-1].name is ConfigName.CPU_ONLY

    def test_group_positions(self):
        assert SensorConfig(ConfigName.TL, False).positions == {P.WRIST_LEFT}
        assert SensorConfig(ConfigName.T, False).positions == {P.WRIST_LEFT, P.WRIST_RIGHT}
        assert SensorConfig(ConfigName.B, True).positions == {P.FOOT_LEFT, P.FOOT_RIGHT, P.CHEST}
        assert SensorConfig(ConfigName.L, False).positions == {P.WRIST_LEFT, P.FOOT_LEFT}
        assert SensorConfig(ConfigName.ALL, False).positions == {p for p in P if not p.is_cpu}
        assert SensorConfig(ConfigName.CPU_ONLY, True).positions == {P.CHEST}
        with pytest.raises(ValueError):
            SensorConfig(ConfigName.CPU_ONLY, False)

    def test_missing_channels(self, small_corpus):
        session = small_corpus.sessions[0]
        ids = [c for c in session.channel_ids if c.position is not P.FOOT_LEFT]
        with pytest.raises(ConfigError):
            SensorConfig(ConfigName.BL, False).channels(ids)
        assert SensorConfig(ConfigName.BR, False).channels(ids)


class TestReport:
    def test_toy_matrix_hand_computed(self):
        cm = np.zeros((8, 8), dtype=int)
        cm[:3, :3] = [[5, 1, 0], [2, 6, 2], [0, 0, 4]]
        r = EvaluationReport(cm, None, Protocol.SPLIT_80_20, 0)
        assert r.total == 20
        assert r.overall_accuracy == 15 / 20
        rec = r.per_class_recall
        assert rec[E.CR] == 5 / 6 and rec[E.LU] == 6 / 10 and rec[E.JJ] == 1.0
        assert np.isnan(rec[E.PU])

    def test_format(self):
        cm = np.eye(8, dtype=int) * 3
        cfg = SensorConfig(ConfigName.R, True)
        text = EvaluationReport(cm, cfg, Protocol.CV_K4, 42).format()
        lines = text.splitlines()
        assert lines[0] == "3,0,0,0,0,0,0,0"
        assert lines[8] == "recall,CR,1.0"
        assert lines[-4:] == ["accuracy,1.0", "protocol,cv", "config,R,1", "seed,42"]

    def test_confusion_matrix(self):
        cm = evalkit.confusion_matrix([0, 0, 7, 7, 7], [0, 5, 7, 7, 5])
        assert cm[0, 0] == 1 and cm[0, 5] == 1 and cm[7, 7] == 2 and cm[7, 5] == 1
        assert cm.sum() == 5

    def test_summary_csv(self):
        r = EvaluationReport(np.eye(8, dtype=int), SensorConfig(ConfigName.TR, False), Protocol.SPLIT_80_20, 0)
        assert evalkit.summary_csv([r]) == "config,with_cpu,accuracy\nTR,0,1.0\n"


class TestSplit:
    def test_exact_fifth(self):
        train, test = evalkit.split_80_20(_labels([25, 25, 25, 25]), seed=1)
        assert Counter(_labels([25] * 4)[i] for i in test) == {E(c): 5 for c in range(4)}
        assert len(train) == 80
        assert set(train).isdisjoint(test)

    def test_deterministic(self):
        labels = _labels([30, 17, 44])
        a, b = evalkit.split_80_20(labels, 9), evalkit.split_80_20(labels, 9)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        assert not np.array_equal(a[1], evalkit.split_80_20(labels, 10)[1])

    def test_corpus_scale_counts(self):
        counts = [1152, 1150, 1153, 1149, 1155, 1151, 1150, 1010]
        labels = _labels(counts)
        _, test = evalkit.split_80_20(labels, 0)
        expected = sum(int(np.floor(0.2 * n + 0.5)) for n in counts)
        assert len(test) == expected
        assert abs(len(test) - 0.2 * sum(counts)) <= 8

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(5, 400), min_size=1, max_size=8), st.integers(0, 10**6))
    def test_stratified_fraction(self, counts, seed):
        labels = _labels(counts)
        train, test = evalkit.split_80_20(labels, seed)
        assert sorted(np.concatenate([train, test]).tolist()) == list(range(len(labels)))
        per_class = Counter(labels[i] for i in test)
        for c, n in enumerate(counts):
            assert abs(per_class[E(c)] - 0.2 * n) <= 1

    def test_too_few(self):
        with pytest.raises(SplitError):
            evalkit.split_80_20(_labels([4]), 0)


class TestFolds:
    def test_single_class_eight(self):
        folds = evalkit.stratified_folds(_labels([8]), 4, 0)
        assert [len(f) for f in folds] == [2, 2, 2, 2]
        assert sorted(np.concatenate(folds).tolist()) == list(range(8))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(4, 300), min_size=1, max_size=8), st.integers(2, 6), st.integers(0, 10**6))
    def test_partition_and_balance(self, counts, k, seed):
        counts = [max(n, k) for n in counts]
        labels = _labels(counts)
        folds = evalkit.stratified_folds(labels, k, seed)
        assert len(folds) == k
        assert sorted(np.concatenate(folds).tolist()) == list(range(len(labels)))
        for c, n in enumerate(counts):
            sizes = [sum(1 for i in f if labels[i] == E(c)) for f in folds]
            assert max(sizes) - min(sizes) <= 1
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1

    def test_errors(self):
        with pytest.raises(SplitError):
            evalkit.stratified_folds(_labels([3]), 4, 0)
        with pytest.raises(SplitError):
            evalkit.stratified_folds(_labels([10]), 1, 0)


class TestProtocols:
    @pytest.fixture
    def separable(self, rng):
        X = np.vstack([rng.normal(10 * c, 1, (40, 3)) for c in range(2)])
        return X, _labels([40, 40]), ("a", "b", "c")

    def test_cv_separable(self, separable):
        X, labels, layout = separable
        r = evalkit.cross_validate(X, labels, layout, 4, 0)
        assert r.overall_accuracy == 1.0
        assert r.total == len(labels)
        assert r.protocol is Protocol.CV_K4

    def test_split_row_sums(self, separable):
        X, labels, layout = separable
        r = evalkit.evaluate_split(X, labels, layout, 3)
        _, test = evalkit.split_80_20(labels, 3)
        rows = r.confusion.sum(axis=1)
        assert rows[0] == sum(1 for i in test if labels[i] == E.CR)
        assert r.total == len(test) == len(r.test_ids)


class TestFrameTable:
    def test_columns_and_restrict(self, small_corpus):
        table = evalkit.frame_table(small_corpus.sessions)
        assert len(table) == table.features.shape[0]
        assert set(table.labels) == set(Exercise)
        X, layout = table.restrict(SensorConfig(ConfigName.BL, False))
        assert all(name.startswith("foot_left.") or name == "duration" for name in layout)
        assert X.shape == (len(table), len(layout))
        assert np.array_equal(X[:, -1], table.features[:, -1])

    def test_ablation_bookkeeping(self, small_corpus):
        table = evalkit.frame_table(small_corpus.sessions)
        reports = evalkit.run_ablation(table, seed=5)
        assert len(reports) == 19
        assert len({r.test_ids for r in reports}) == 1
        assert all(r.total == len(reports[0].test_ids) for r in reports)
        again = evalkit.run_ablation(table, seed=5)
        assert [r.format() for r in reports] == [r.format() for r in again]

    def test_cpu_only_chance_when_chest_is_silent(self):
        sigs = synthgen.chest_silenced()
        corpus = synthgen.generate_corpus(3, seed=4, signatures=sigs)
        table = evalkit.frame_table(corpus.sessions)
        cpu, full = evalkit.run_ablation(
            table, [SensorConfig(ConfigName.CPU_ONLY, True), SensorConfig(ConfigName.ALL, False)], seed=0
        )
        assert cpu.overall_accuracy <= 1 / 8 + 0.1
        assert full.overall_accuracy > 0.8


class TestSegmentationScore:
    def test_matching(self):
        truth = [(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]
        frames = [(0.05, 1.1), (1.1, 2.0), (2.5, 3.0)]
        s = evalkit.score_segmentation(frames, truth)
        assert s.matched == 2 and s.n_true == 3 and s.n_frames == 3
        assert s.max_deviation == pytest.approx(0.1)

    def test_one_to_one(self):
        s = evalkit.score_segmentation([(0.0, 1.0)], [(0.0, 1.0), (0.0, 1.0)])
        assert s.matched == 1

    def test_break_skipped(self):
        skipped = [(0.0, 5.0), (21.1, 50.0)]
        assert evalkit.break_skipped(skipped, (20.0, 21.0), (50.1, 51.1))
        assert not evalkit.break_skipped(skipped, (20.0, 21.0), (52.0, 53.0))
        assert not evalkit.break_skipped([(21.5, 50.0)], (20.0, 21.0), (50.1, 51.1))
