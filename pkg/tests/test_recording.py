import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repsense.errors import AlignmentError, EmptyInputError, OrderingError, ParseError
from repsense.recording import (
    Axis,
    ChannelId,
    Exercise,
    Modality,
    SensorPosition,
    SensorRecording,
    Session,
    SessionManifest,
    align_session,
    format_sensor_file,
    grid_length,
    load_session,
    parse_sensor_file,
    read_session_dir,
    write_sensor_file,
    write_session_dir,
)

P = SensorPosition


def _recording(pos, rate, seconds, fn, gyro=False, offset_ms=0):
    n = int(seconds * rate) + 1
    stamps = offset_ms + np.round(np.arange(n) * 1000.0 / rate).astype(np.int64)
    t = stamps / 1000.0
    accel = np.column_stack([fn(t), fn(t) * 0.5, fn(t) - 1.0])
    g = np.column_stack([fn(t) * 10, fn(t) * 20, fn(t) * 30]) if gyro else None
    return SensorRecording(pos, rate, stamps, accel, g)


class TestEnums:
    def test_five_positions_chest_is_cpu(self):
        assert len(SensorPosition) == 5
        assert [p for p in SensorPosition if p.is_cpu] == [P.CHEST]

    def test_slug_round_trip(self):
        for p in SensorPosition:
            assert SensorPosition.from_slug(p.slug) is p

    def test_exercise_parse(self):
        assert Exercise.parse("pu") is Exercise.PU
        assert [e.name for e in Exercise] == ["CR", "LU", "JJ", "BC", "SQ", "MC", "RT", "PU"]

    def test_channel_name_round_trip_and_order(self):
        ids = [ChannelId(p, m, a) for p in SensorPosition for m in Modality for a in Axis]
        assert len(ids) == 30
        assert sorted(ids) == ids
        assert [c.ordinal for c in ids] == list(range(30))
        for c in ids:
            assert ChannelId.parse(c.name) == c


class TestParse:
    def test_minimal_accel_file(self):
        rec = parse_sensor_file(b"0,0.01,-0.02,0.98\n20,0.02,-0.01,0.99\n", P.WRIST_LEFT)
        assert len(rec) == 2
        assert rec.timestamps.tolist() == [0, 20]
        assert not rec.has_gyro
        np.testing.assert_array_equal(rec.accel[1], [0.02, -0.01, 0.99])

    def test_seven_columns_has_gyro(self):
        rec = parse_sensor_file("0,0,0,1,5,6,7\n25,0,0,1,8,9,10\n", P.FOOT_LEFT, 40)
        assert rec.has_gyro
        assert rec.gyro[1].tolist() == [8.0, 9.0, 10.0]
        assert len(rec.channel_ids) == 6

    def test_timestamps_normalized(self):
        rec = parse_sensor_file("1000,0,0,1\n1020,0,0,1\n", P.CHEST)
        assert rec.timestamps.tolist() == [0, 20]
        raw = parse_sensor_file("1000,0,0,1\n1020,0,0,1\n", P.CHEST, normalize=False)
        assert raw.timestamps.tolist() == [1000, 1020]

    def test_empty_file(self):
        with pytest.raises(EmptyInputError):
            parse_sensor_file(b"", P.CHEST)

    @pytest.mark.parametrize(
        "text, line",
        [
            ("0,0,0,1\n20,0,0\n", 2),
            ("0,0,0,1\n20,0,x,1\n", 2),
            ("0,0,0,1,2\n", 1),
            ("0,0,0,1\n\n40,0,0,1\n", 2),
            ("0,0,0,1\n20.5,0,0,1\n", 2),
            ("0,0,0,1\n20,nan,0,1\n", 2),
        ],
    )
    def test_malformed_rows_report_line(self, text, line):
        with pytest.raises(ParseError) as info:
            parse_sensor_file(text, P.CHEST)
        assert info.value.line_number == line

    @pytest.mark.parametrize("text", ["0,0,0,1\n20,0,0,1\n20,0,0,1\n", "0,0,0,1\n20,0,0,1\n10,0,0,1\n"])
    def test_non_monotonic_timestamps(self, text):
        with pytest.raises(OrderingError) as info:
            parse_sensor_file(text, P.CHEST)
        assert info.value.line_number == 3

    def test_generated_file_round_trips_bit_exact(self, rng, tmp_path):
        n = 60 * 50 + 1
        stamps = np.arange(n, dtype=np.int64) * 20
        rec = SensorRecording(P.WRIST_RIGHT, 50, stamps, rng.normal(0, 1, (n, 3)), rng.normal(0, 50, (n, 3)))
        path = tmp_path / "wrist_right.csv"
        write_sensor_file(rec, path)
        assert parse_sensor_file(path.read_bytes(), P.WRIST_RIGHT, 50) == rec

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(
            st.tuples(*[st.floats(allow_nan=False, allow_infinity=False, width=64)] * 3),
            min_size=1,
            max_size=30,
        ),
        st.lists(st.integers(1, 10_000), min_size=30, max_size=30),
    )
    def test_format_parse_lossless(self, rows, gaps):
        stamps = np.cumsum([0] + gaps[: len(rows) - 1]).astype(np.int64)
        rec = SensorRecording(P.CHEST, 50, stamps, np.array(rows, dtype=np.float64))
        text = format_sensor_file(rec)
        assert parse_sensor_file(text, P.CHEST, 50) == rec
        assert format_sensor_file(parse_sensor_file(text, P.CHEST, 50)) == text


class TestRecordingInvariants:
    def test_rejects_unsorted_timestamps(self):
        with pytest.raises(ValueError):
            SensorRecording(P.CHEST, 50, [0, 20, 10], np.zeros((3, 3)))

    def test_arrays_read_only(self):
        rec = _recording(P.CHEST, 50, 2, np.sin)
        with pytest.raises(ValueError):
            rec.accel[0, 0] = 1.0

    def test_profile_rates(self):
        assert _recording(P.CHEST, 150, 2, np.sin).matches_profile
        assert not _recording(P.CHEST, 64, 2, np.sin).matches_profile


class TestAlign:
    def test_native_rate_is_identity(self):
        rec = _recording(P.CHEST, 50, 10, lambda t: np.sin(2 * np.pi * 0.7 * t), gyro=True)
        s = align_session([rec])
        np.testing.assert_array_equal(s.data, rec.values())
        assert s.channel_ids == rec.channel_ids

    def test_constants_preserved_across_rates(self):
        a = SensorRecording(P.WRIST_LEFT, 40, np.arange(401) * 25, np.ones((401, 3)))
        b = SensorRecording(P.FOOT_LEFT, 50, np.arange(501) * 20, np.ones((501, 3)))
        s = align_session([b, a], 50)
        assert np.all(s.data == 1.0)

    def test_sine_150hz_to_50hz(self):
        rec = _recording(P.CHEST, 150, 10, lambda t: np.sin(2 * np.pi * 2.0 * t))
        s = align_session([rec], 50)
        t = (s.start_ms + np.arange(s.n_samples) * 20.0) / 1000.0
        err = np.max(np.abs(s.column(ChannelId(P.CHEST, Modality.ACCEL, Axis.X)) - np.sin(2 * np.pi * 2.0 * t)))
        assert err < 0.01

    def test_grid_covers_overlap(self):
        a = _recording(P.CHEST, 100, 10, np.sin, offset_ms=0)
        b = _recording(P.WRIST_LEFT, 40, 10, np.cos, offset_ms=730)
        s = align_session([a, b], 50)
        assert s.start_ms == 730
        assert s.n_samples == grid_length(10_000 - 730, 50) == math.floor(9270 * 50 / 1000) + 1

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1100, 20_000), st.sampled_from([25.0, 40.0, 50.0, 64.0, 100.0]), st.integers(0, 500))
    def test_length_and_bracketing(self, span_ms, rate, offset):
        n = span_ms // 10 + 1
        rng = np.random.default_rng(span_ms)
        a = SensorRecording(P.CHEST, 100, np.arange(n) * 10, rng.normal(size=(n, 3)))
        m = (span_ms + offset) // 25 + 1
        b = SensorRecording(P.FOOT_RIGHT, 40, np.arange(m) * 25 - offset, rng.normal(size=(m, 3)))
        s = align_session([a, b], rate)
        overlap = min(a.timestamps[-1], b.timestamps[-1]) - max(a.timestamps[0], b.timestamps[0])
        assert s.n_samples == math.floor(overlap * rate / 1000 + 1e-9) + 1
        grid = s.start_ms + np.arange(s.n_samples) * 1000.0 / rate
        grid[-1] = min(grid[-1], overlap + s.start_ms)
        t = a.timestamps.astype(float)
        k = np.clip(np.searchsorted(t, grid, side="right") - 1, 0, len(t) - 2)
        lo = np.minimum(a.accel[k, 0], a.accel[k + 1, 0])
        hi = np.maximum(a.accel[k, 0], a.accel[k + 1, 0])
        col = s.data[:, 0]
        assert np.all(col >= lo - 1e-12) and np.all(col <= hi + 1e-12)

    def test_short_overlap_rejected(self):
        a = _recording(P.CHEST, 50, 2, np.sin)
        b = _recording(P.WRIST_LEFT, 50, 2, np.sin, offset_ms=1200)
        with pytest.raises(AlignmentError):
            align_session([a, b])

    def test_duplicate_positions_rejected(self):
        a = _recording(P.CHEST, 50, 2, np.sin)
        with pytest.raises(AlignmentError):
            align_session([a, a])


class TestSession:
    def test_channel_limits_and_lookup(self):
        s = align_session([_recording(p, 50, 3, np.sin, gyro=True) for p in SensorPosition])
        assert len(s.channel_ids) == 30
        c = ChannelId(P.FOOT_LEFT, Modality.GYRO, Axis.Z)
        assert np.array_equal(s.column(c), s.data[:, s.column_index(c)])
        assert s.duration == pytest.approx(3.0)

    def test_rejects_unordered_channels(self):
        ids = (ChannelId(P.WRIST_LEFT, Modality.ACCEL, Axis.X), ChannelId(P.CHEST, Modality.ACCEL, Axis.X))
        with pytest.raises(ValueError):
            Session("s", "a", None, ids, np.zeros((5, 2)), 50.0)


class TestSessionDir:
    def test_manifest_round_trip(self):
        m = SessionManifest("s1", "a01", Exercise.MC, {P.CHEST: 100.0, P.WRIST_LEFT: 50.0})
        assert SessionManifest.parse(m.format()) == m
        u = SessionManifest("s2", "a02", None, {P.CHEST: 62.5})
        assert SessionManifest.parse(u.format()) == u

    def test_directory_round_trip(self, tmp_path):
        recs = [
            _recording(P.CHEST, 100, 5, np.sin, gyro=True, offset_ms=3),
            _recording(P.FOOT_LEFT, 50, 5, np.cos),
        ]
        write_session_dir(tmp_path / "s", recs, "s", "a00", Exercise.SQ)
        manifest, back = read_session_dir(tmp_path / "s")
        assert manifest.exercise is Exercise.SQ
        assert back == sorted(recs, key=lambda r: r.position)
        session = load_session(tmp_path / "s")
        ref = align_session(recs, session_id="s", athlete_id="a00", exercise=Exercise.SQ)
        np.testing.assert_array_equal(session.data, ref.data)
