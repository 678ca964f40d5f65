"""Sensor/session data model, the per-sensor text format, and stream alignment.

Units are fixed: acceleration in g, rotation rate in degrees/second and
timestamps in integer milliseconds.  A session directory holds one
``<position>.csv`` per sensor plus a ``manifest.txt`` of ``key=value`` lines.
"""

from __future__ import annotations

import io
import math
import os
import tempfile
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from repsense.errors import (
    AlignmentError,
    EmptyInputError,
    OrderingError,
    ParseError,
    SensorFileError,
)

PROFILE_RATES = frozenset({40.0, 50.0, 100.0, 150.0})
DEFAULT_COMMON_RATE = 50.0


class SensorPosition(IntEnum):
    CHEST = 0
    WRIST_LEFT = 1
    WRIST_RIGHT = 2
    FOOT_LEFT = 3
    FOOT_RIGHT = 4

    @property
    def slug(self) -> str:
        return self.name.lower()

    @property
    def is_cpu(self) -> bool:
        # the chest sensor is the phone acting as central processing unit
        return self is SensorPosition.CHEST

    @classmethod
    def from_slug(cls, slug: str) -> "SensorPosition":
        try:
            return cls[slug.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown sensor position {slug!r}") from None


EXTREMITIES = (
    SensorPosition.WRIST_LEFT,
    SensorPosition.WRIST_RIGHT,
    SensorPosition.FOOT_LEFT,
    SensorPosition.FOOT_RIGHT,
)


class Modality(IntEnum):
    ACCEL = 0
    GYRO = 1


class Axis(IntEnum):
    X = 0
    Y = 1
    Z = 2


class Exercise(IntEnum):
    """The eight study exercises, in label order."""

    CR = 0  # crunch
    LU = 1  # lunge
    JJ = 2  # jumping jack
    BC = 3  # bicycle crunch
    SQ = 4  # squat
    MC = 5  # mountain climber
    RT = 6  # russian twist
    PU = 7  # pushup

    @classmethod
    def parse(cls, text: str) -> "Exercise":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown exercise label {text!r}") from None


@dataclass(frozen=True, order=True)
class ChannelId:
    position: SensorPosition
    modality: Modality
    axis: Axis

    @property
    def ordinal(self) -> int:
        return int(self.position) * 6 + int(self.modality) * 3 + int(self.axis)

    @property
    def name(self) -> str:
        return f"{self.position.slug}.{self.modality.name.lower()}.{self.axis.name.lower()}"

    @classmethod
    def parse(cls, name: str) -> "ChannelId":
        try:
            pos, mod, ax = name.strip().split(".")
            return cls(SensorPosition[pos.upper()], Modality[mod.upper()], Axis[ax.upper()])
        except (ValueError, KeyError):
            raise ValueError(f"bad channel name {name!r}") from None

    def __str__(self) -> str:
        return self.name


def channels_for(position: SensorPosition, has_gyro: bool) -> tuple[ChannelId, ...]:
    modalities = (Modality.ACCEL, Modality.GYRO) if has_gyro else (Modality.ACCEL,)
    return tuple(ChannelId(position, m, a) for m in modalities for a in Axis)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SensorRecording:
    """One sensor position's sample stream.

    ``timestamps`` are int64 milliseconds, ``accel`` is (n, 3) in g and
    ``gyro`` is (n, 3) in deg/s or ``None`` for accelerometer-only boards.
    """

    position: SensorPosition
    nominal_rate: float
    timestamps: np.ndarray
    accel: np.ndarray
    gyro: np.ndarray | None = None

    def __post_init__(self) -> None:
        ts = np.ascontiguousarray(self.timestamps, dtype=np.int64)
        accel = np.ascontiguousarray(self.accel, dtype=np.float64).reshape(-1, 3)
        if ts.ndim != 1 or len(ts) != len(accel):
            raise ValueError("timestamps and accel must have matching lengths")
        if len(ts) and np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        gyro = self.gyro
        if gyro is not None:
            gyro = np.ascontiguousarray(gyro, dtype=np.float64).reshape(-1, 3)
            if len(gyro) != len(ts):
                raise ValueError("gyro length differs from timestamps")
            gyro = _readonly(gyro)
        if not self.nominal_rate > 0:
            raise ValueError("nominal_rate must be positive")
        object.__setattr__(self, "timestamps", _readonly(ts))
        object.__setattr__(self, "accel", _readonly(accel))
        object.__setattr__(self, "gyro", gyro)
        object.__setattr__(self, "position", SensorPosition(self.position))
        object.__setattr__(self, "nominal_rate", float(self.nominal_rate))

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def has_gyro(self) -> bool:
        return self.gyro is not None

    @property
    def matches_profile(self) -> bool:
        return self.nominal_rate in PROFILE_RATES

    @property
    def channel_ids(self) -> tuple[ChannelId, ...]:
        return channels_for(self.position, self.has_gyro)

    def values(self) -> np.ndarray:
        """(n, 3) or (n, 6) matrix in channel order."""
        if self.gyro is None:
            return self.accel
        return np.hstack([self.accel, self.gyro])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SensorRecording):
            return NotImplemented
        if (self.gyro is None) != (other.gyro is None):
            return False
        return (
            self.position == other.position
            and self.nominal_rate == other.nominal_rate
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.accel, other.accel)
            and (self.gyro is None or np.array_equal(self.gyro, other.gyro))
        )


@dataclass(frozen=True, eq=False)
class Session:
    """Aligned multi-sensor recording; one column per channel, canonical order."""

    session_id: str
    athlete_id: str
    exercise: Exercise | None
    channel_ids: tuple[ChannelId, ...]
    data: np.ndarray
    common_rate: float
    start_ms: float = 0.0
    _index: Mapping[ChannelId, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        ids = tuple(self.channel_ids)
        if data.ndim != 2 or data.shape[1] != len(ids):
            raise ValueError("data must be (samples, channels) matching channel_ids")
        if len(ids) > 30:
            raise ValueError("a session holds at most 30 channels")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate channel ids")
        if list(ids) != sorted(ids):
            raise ValueError("channel_ids must be in canonical order")
        if not np.all(np.isfinite(data)):
            raise ValueError("session data contains non-finite values")
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "channel_ids", ids)
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(ids)})

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def duration(self) -> float:
        return (self.n_samples - 1) / self.common_rate

    @property
    def positions(self) -> frozenset[SensorPosition]:
        return frozenset(c.position for c in self.channel_ids)

    def column_index(self, channel: ChannelId) -> int:
        return self._index[channel]

    def column(self, channel: ChannelId) -> np.ndarray:
        return self.data[:, self._index[channel]]

    def times(self) -> np.ndarray:
        """Grid times in seconds since the session's first aligned sample."""
        return np.arange(self.n_samples) / self.common_rate


# --- per-sensor text format -------------------------------------------------


def _fmt(x: float) -> str:
    # repr of a Python float is the shortest string that parses back exactly
    return repr(float(x))


def format_sensor_file(recording: SensorRecording) -> str:
    cols = [recording.accel[:, 0], recording.accel[:, 1], recording.accel[:, 2]]
    if recording.gyro is not None:
        cols += [recording.gyro[:, 0], recording.gyro[:, 1], recording.gyro[:, 2]]
    rows = zip(recording.timestamps.tolist(), *(c.tolist() for c in cols))
    return "".join(",".join([str(t), *map(_fmt, vals)]) + "\n" for t, *vals in rows)


def write_sensor_file(recording: SensorRecording, path: str | os.PathLike) -> None:
    _atomic_write(Path(path), format_sensor_file(recording))


def _parse_slow(lines: list[str]) -> tuple[np.ndarray, np.ndarray]:
    """Line-by-line parse; only reached when the fast path fails, to locate errors."""
    width = None
    stamps: list[int] = []
    values: list[list[float]] = []
    for number, line in enumerate(lines, start=1):
        fields = line.split(",")
        if width is None:
            width = len(fields)
            if width not in (4, 7):
                raise ParseError(number, f"expected 4 or 7 columns, got {width}")
        elif len(fields) != width:
            raise ParseError(number, f"expected {width} columns, got {len(fields)}")
        try:
            stamp = int(fields[0])
        except ValueError:
            raise ParseError(number, f"timestamp {fields[0]!r} is not an integer") from None
        try:
            row = [float(f) for f in fields[1:]]
        except ValueError:
            raise ParseError(number, "non-numeric sample value") from None
        if not all(math.isfinite(v) for v in row):
            raise ParseError(number, "non-finite sample value")
        stamps.append(stamp)
        values.append(row)
    return np.asarray(stamps, dtype=np.int64), np.asarray(values, dtype=np.float64)


def parse_sensor_file(
    data: bytes | str,
    position: SensorPosition,
    nominal_rate: float = DEFAULT_COMMON_RATE,
    *,
    normalize: bool = True,
) -> SensorRecording:
    """Parse ``timestamp_ms,ax,ay,az[,gx,gy,gz]`` rows into a recording.

    With ``normalize`` timestamps are shifted so the first sample is at 0 ms.
    Session loading passes ``normalize=False`` to keep the shared session clock.
    """
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    lines = [ln[:-1] if ln.endswith("\r") else ln for ln in lines]
    if not lines:
        raise EmptyInputError("sensor file is empty")
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            raise ParseError(number, "blank line")

    try:
        table = np.loadtxt(io.StringIO("\n".join(lines)), delimiter=",", dtype=np.float64, ndmin=2)
        stamps_f = table[:, 0]
        stamps = stamps_f.astype(np.int64)
        fast_ok = (
            table.shape[1] in (4, 7)
            and np.array_equal(stamps, stamps_f)
            and np.all(np.isfinite(table))
            and all("." not in ln.split(",", 1)[0] and "e" not in ln.split(",", 1)[0].lower() for ln in lines)
        )
        values = table[:, 1:]
    except ValueError:
        fast_ok = False
    if not fast_ok:
        stamps, values = _parse_slow(lines)

    steps = np.diff(stamps)
    if np.any(steps <= 0):
        bad = int(np.argmax(steps <= 0)) + 2
        raise OrderingError(bad, "timestamps must be strictly increasing")
    if normalize:
        stamps = stamps - stamps[0]
    gyro = values[:, 3:6] if values.shape[1] == 6 else None
    return SensorRecording(position, nominal_rate, stamps, values[:, 0:3], gyro)


# --- alignment ----------------------------------------------------------------


def grid_length(overlap_ms: float, common_rate: float) -> int:
    # guard against 2999.9999999 style rounding when the product is integral
    return int(math.floor(overlap_ms * common_rate / 1000.0 + 1e-9)) + 1


def align_session(
    recordings: Sequence[SensorRecording],
    common_rate: float = DEFAULT_COMMON_RATE,
    *,
    session_id: str = "session",
    athlete_id: str = "unknown",
    exercise: Exercise | None = None,
) -> Session:
    """Linearly interpolate every channel onto a uniform grid over the overlap."""
    if not recordings:
        raise AlignmentError("no recordings to align")
    if not common_rate > 0:
        raise AlignmentError("common_rate must be positive")
    positions = [r.position for r in recordings]
    if len(set(positions)) != len(positions):
        raise AlignmentError("duplicate sensor positions")
    if any(len(r) < 2 for r in recordings):
        raise AlignmentError("each recording needs at least two samples")

    start = max(int(r.timestamps[0]) for r in recordings)
    end = min(int(r.timestamps[-1]) for r in recordings)
    if end - start < 1000:
        raise AlignmentError(f"recordings overlap for {max(end - start, 0)} ms, need at least 1000 ms")

    n = grid_length(end - start, common_rate)
    grid = start + np.arange(n) * (1000.0 / common_rate)
    # the last grid point may exceed ``end`` by rounding only
    grid[-1] = min(grid[-1], end)

    columns: list[tuple[ChannelId, np.ndarray]] = []
    for rec in sorted(recordings, key=lambda r: r.position):
        t = rec.timestamps.astype(np.float64)
        vals = rec.values()
        for j, cid in enumerate(rec.channel_ids):
            columns.append((cid, np.interp(grid, t, vals[:, j])))
    ids = tuple(c for c, _ in columns)
    data = np.column_stack([v for _, v in columns])
    return Session(session_id, athlete_id, exercise, ids, data, float(common_rate), float(start))


# --- session directories -------------------------------------------------------


@dataclass(frozen=True)
class SessionManifest:
    session_id: str
    athlete_id: str
    exercise: Exercise | None
    rates: Mapping[SensorPosition, float]

    def format(self) -> str:
        lines = [
            f"session_id={self.session_id}",
            f"athlete_id={self.athlete_id}",
            f"exercise={self.exercise.name if self.exercise is not None else 'unlabeled'}",
        ]
        for pos in sorted(self.rates):
            lines.append(f"rate.{pos.slug}={_fmt_rate(self.rates[pos])}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "SessionManifest":
        kv = parse_key_values(text)
        try:
            session_id = kv["session_id"]
            athlete_id = kv["athlete_id"]
            label = kv["exercise"]
        except KeyError as exc:
            raise SensorFileError(f"manifest lacks {exc.args[0]!r}") from None
        exercise = None if label == "unlabeled" else Exercise.parse(label)
        rates = {
            SensorPosition.from_slug(k[len("rate."):]): float(v)
            for k, v in kv.items()
            if k.startswith("rate.")
        }
        return cls(session_id, athlete_id, exercise, rates)


def _fmt_rate(rate: float) -> str:
    return str(int(rate)) if float(rate).is_integer() else repr(float(rate))


def parse_key_values(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(number, f"expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_session_dir(
    directory: str | os.PathLike,
    recordings: Iterable[SensorRecording],
    session_id: str,
    athlete_id: str,
    exercise: Exercise | None,
) -> Path:
    directory = Path(directory)
    recordings = list(recordings)
    for rec in recordings:
        write_sensor_file(rec, directory / f"{rec.position.slug}.csv")
    manifest = SessionManifest(
        session_id, athlete_id, exercise, {r.position: r.nominal_rate for r in recordings}
    )
    _atomic_write(directory / "manifest.txt", manifest.format())
    return directory


def read_session_dir(directory: str | os.PathLike) -> tuple[SessionManifest, list[SensorRecording]]:
    directory = Path(directory)
    manifest = SessionManifest.parse((directory / "manifest.txt").read_text(encoding="utf-8"))
    recordings = []
    for pos in SensorPosition:
        path = directory / f"{pos.slug}.csv"
        if not path.exists():
            continue
        rate = manifest.rates.get(pos, DEFAULT_COMMON_RATE)
        recordings.append(parse_sensor_file(path.read_bytes(), pos, rate, normalize=False))
    if not recordings:
        raise EmptyInputError(f"no sensor files in {directory}")
    return manifest, recordings


def load_session(directory: str | os.PathLike, common_rate: float = DEFAULT_COMMON_RATE) -> Session:
    manifest, recordings = read_session_dir(directory)
    return align_session(
        recordings,
        common_rate,
        session_id=manifest.session_id,
        athlete_id=manifest.athlete_id,
        exercise=manifest.exercise,
    )
