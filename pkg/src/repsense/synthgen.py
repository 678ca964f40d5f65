"""Synthetic labeled workouts with known repetition boundaries.

Each exercise is a harmonic series per channel with a fixed posture (gravity on
one accelerometer axis per sensor).  Fatigue shrinks amplitude and stretches the
period repetition by repetition within a set, and a band-limited shiver grows
towards the end of each set.  Breaks carry sensor noise only.

The dominant channel of every signature has zero phase and a fundamental-led
waveform, so each repetition starts at an upward zero crossing of that channel.
Other channels get a slow random wobble on top of their pattern, which keeps
the dominant channel the most periodic one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Mapping, Sequence

import numpy as np

from repsense.recording import (
    Axis,
    ChannelId,
    Exercise,
    Modality,
    SensorPosition,
    SensorRecording,
    Session,
    align_session,
    DEFAULT_COMMON_RATE,
)

P = SensorPosition


class RateProfile(Enum):
    LG_50HZ_ACCEL = "lg"
    HTC_40HZ_ACCEL_GYRO = "htc"

    @property
    def cpu_rate(self) -> float:
        return 100.0 if self is RateProfile.LG_50HZ_ACCEL else 150.0

    @property
    def external_rate(self) -> float:
        return 50.0 if self is RateProfile.LG_50HZ_ACCEL else 40.0

    @property
    def external_gyro(self) -> bool:
        return self is RateProfile.HTC_40HZ_ACCEL_GYRO

    def rate(self, position: SensorPosition) -> float:
        return self.cpu_rate if position.is_cpu else self.external_rate

    def has_gyro(self, position: SensorPosition) -> bool:
        # the phone always provides its gyroscope
        return position.is_cpu or self.external_gyro


@dataclass(frozen=True)
class ChannelMotion:
    amplitude: float
    phase: float = 0.0
    harmonics: tuple[float, ...] = (1.0,)
    baseline: float = 0.0

    def waveform(self, theta: np.ndarray) -> np.ndarray:
        """Unit-amplitude pattern at cycle angle ``theta`` (radians)."""
        out = np.zeros_like(theta)
        for h, w in enumerate(self.harmonics, start=1):
            if w:
                out += w * np.sin(h * (theta + self.phase))
        return out


@dataclass(frozen=True)
class ExerciseSignature:
    label: Exercise
    fundamental_period: float
    channels: Mapping[ChannelId, ChannelMotion]
    dominant_channel: ChannelId
    # slow random motion on non-dominant channels, as a fraction of their amplitude
    wobble: float = 0.25
    # half-width of the per-athlete uniform perturbation of periods and amplitudes
    variability: float = 0.10
    # multiplies the session's amplitude decay for exhausting exercises
    fatigue_scale: float = 1.0
    # relative spread of the range of motion between single repetitions
    depth_jitter: float = 0.0

    def __post_init__(self) -> None:
        if not 0.5 <= self.fundamental_period <= 4.0:
            raise ValueError("fundamental_period must lie in [0.5, 4] s")
        if self.dominant_channel not in self.channels:
            raise ValueError("dominant channel has no motion")

    def motion(self, channel: ChannelId) -> ChannelMotion:
        return self.channels.get(channel, ChannelMotion(0.0))


@dataclass(frozen=True)
class FatigueModel:
    amplitude_decay: float = 0.008
    period_growth: float = 0.006
    shiver_amplitude: float = 0.04
    shiver_band: tuple[float, float] = (6.0, 11.0)

    def __post_init__(self) -> None:
        if min(self.amplitude_decay, self.period_growth, self.shiver_amplitude) < 0:
            raise ValueError("fatigue parameters must be non-negative")
        if self.period_growth > 0.02:
            raise ValueError("period_growth is limited to 2% per repetition")


NO_FATIGUE = FatigueModel(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SessionScript:
    sets: int = 3
    reps_per_set: int = 20
    break_duration: float = 30.0
    noise_floor: float = 0.02
    gyro_noise: float = 1.5
    lead_in: float = 5.0
    tail: float = 5.0
    # per-repetition random tempo change (relative std)
    tempo_jitter: float = 0.0
    # repetitions not performed at the end of each set
    missing: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.sets < 1 or self.reps_per_set < 1:
            raise ValueError("sets and reps_per_set must be at least 1")
        if self.break_duration < 0 or self.noise_floor < 0:
            raise ValueError("break_duration and noise_floor must be non-negative")

    def rep_counts(self) -> tuple[int, ...]:
        missing = tuple(self.missing) + (0,) * (self.sets - len(self.missing))
        return tuple(max(self.reps_per_set - m, 1) for m in missing[: self.sets])


@dataclass(frozen=True)
class RepTruth:
    set_index: int
    rep_index: int
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class GroundTruth:
    session_id: str
    athlete_id: str
    label: Exercise
    dominant_channel: ChannelId
    reps: tuple[RepTruth, ...]
    duration: float

    @property
    def set_spans(self) -> list[tuple[float, float]]:
        spans = []
        for s in sorted({r.set_index for r in self.reps}):
            reps = [r for r in self.reps if r.set_index == s]
            spans.append((reps[0].start, reps[-1].end))
        return spans

    @property
    def breaks(self) -> list[tuple[float, float]]:
        spans = self.set_spans
        return [(a[1], b[0]) for a, b in zip(spans[:-1], spans[1:])]

    def format_lines(self) -> str:
        return "".join(
            f"{self.athlete_id},{self.label.name},{r.set_index},{r.rep_index},{r.start!r},{r.end!r}\n"
            for r in self.reps
        )


# --- default signatures ---------------------------------------------------------

_GRAVITY = {
    "standing": {P.CHEST: (Axis.X, 1.0), P.WRIST_LEFT: (Axis.Y, -1.0), P.WRIST_RIGHT: (Axis.Y, -1.0),
                 P.FOOT_LEFT: (Axis.Z, 1.0), P.FOOT_RIGHT: (Axis.Z, 1.0)},
    "supine": {P.CHEST: (Axis.Z, -1.0), P.WRIST_LEFT: (Axis.Z, -1.0), P.WRIST_RIGHT: (Axis.Z, -1.0),
               P.FOOT_LEFT: (Axis.Z, 1.0), P.FOOT_RIGHT: (Axis.Z, 1.0)},
    "reclined": {P.CHEST: (Axis.Z, -1.0), P.WRIST_LEFT: (Axis.X, 1.0), P.WRIST_RIGHT: (Axis.X, 1.0),
                 P.FOOT_LEFT: (Axis.X, -1.0), P.FOOT_RIGHT: (Axis.X, -1.0)},
    "plank": {P.CHEST: (Axis.Z, 1.0), P.WRIST_LEFT: (Axis.Z, 1.0), P.WRIST_RIGHT: (Axis.Z, 1.0),
              P.FOOT_LEFT: (Axis.X, 1.0), P.FOOT_RIGHT: (Axis.X, 1.0)},
}

# label: (period s, posture, dominant channel, per-position accel amplitudes in g, harmonics)
# wrists and feet share one amplitude triple per side pair; the right side is phase shifted
_DESIGN = {
    Exercise.CR: (2.0, "supine", "chest.accel.x",
                  {P.CHEST: (0.50, 0.06, 0.30), "wrists": (0.35, 0.08, 0.25), "feet": (0.03, 0.02, 0.04)},
                  {"wrists": (1.0, 0.2), "feet": (1.0,)}),
    Exercise.LU: (2.6, "standing", "chest.accel.x",
                  {P.CHEST: (0.45, 0.10, 0.15), "wrists": (0.20, 0.12, 0.10), "feet": (0.30, 0.40, 0.25)},
                  {"feet": (0.6, 1.0, 0.2)}),
    Exercise.JJ: (1.2, "standing", "wrist_left.accel.y",
                  {P.CHEST: (0.50, 0.10, 0.12), "wrists": (0.40, 0.90, 0.35), "feet": (0.45, 0.30, 0.25)},
                  {"wrists": (1.0, 0.3, 0.1), "feet": (0.5, 1.0)}),
    Exercise.BC: (1.6, "reclined", "foot_left.accel.y",
                  {P.CHEST: (0.20, 0.18, 0.15), "wrists": (0.25, 0.20, 0.22), "feet": (0.30, 0.55, 0.30)},
                  {"feet": (1.0, 0.25), P.CHEST: (0.4, 1.0)}),
    Exercise.SQ: (2.4, "standing", "chest.accel.x",
                  {P.CHEST: (0.40, 0.06, 0.18), "wrists": (0.30, 0.20, 0.12), "feet": (0.03, 0.03, 0.05)},
                  {"wrists": (1.0, 0.5)}),
    Exercise.MC: (1.9, "plank", "chest.accel.x",
                  {P.CHEST: (0.32, 0.07, 0.25), "wrists": (0.08, 0.06, 0.10), "feet": (0.20, 0.15, 0.22)},
                  {"feet": (1.0, 0.6)}),
    Exercise.RT: (1.4, "reclined", "chest.accel.y",
                  {P.CHEST: (0.10, 0.42, 0.15), "wrists": (0.18, 0.50, 0.20), "feet": (0.06, 0.10, 0.05)},
                  {P.CHEST: (1.0, 0.2), "wrists": (1.0, 0.35)}),
    Exercise.PU: (2.05, "plank", "chest.accel.x",
                  {P.CHEST: (0.46, 0.07, 0.36), "wrists": (0.08, 0.06, 0.10), "feet": (0.20, 0.15, 0.22)},
                  {"feet": (1.0, 0.6)}),
}

# pushups share the mountain climber's plank; shallow pushups look like climbs
_DEPTH_JITTER = {Exercise.PU: 0.25}

_GROUP = {P.CHEST: P.CHEST, P.WRIST_LEFT: "wrists", P.WRIST_RIGHT: "wrists",
          P.FOOT_LEFT: "feet", P.FOOT_RIGHT: "feet"}
_DEFAULT_HARMONICS = (1.0, 0.3, 0.1)
_GYRO_PER_G = 120.0


def _build_signature(label: Exercise) -> ExerciseSignature:
    period, posture, dominant_name, amps, harmonics = _DESIGN[label]
    dominant = ChannelId.parse(dominant_name)
    channels: dict[ChannelId, ChannelMotion] = {}
    for pos in SensorPosition:
        group = _GROUP[pos]
        accel = amps[group]
        harm = harmonics.get(group, _DEFAULT_HARMONICS)
        g_axis, g_sign = _GRAVITY[posture][pos]
        side = 1.7 if pos in (P.WRIST_RIGHT, P.FOOT_RIGHT) else 0.0
        for axis in Axis:
            cid = ChannelId(pos, Modality.ACCEL, axis)
            phase = 0.0 if cid == dominant else 0.45 * int(pos) + 1.1 * int(axis) + side + 0.3 * int(label)
            h = (1.0, 0.3, 0.1) if cid == dominant else harm
            channels[cid] = ChannelMotion(accel[axis], phase, h, g_sign if axis == g_axis else 0.0)
            # rotation rate follows the acceleration of the neighbouring axis
            gyro_amp = _GYRO_PER_G * accel[(axis + 2) % 3]
            channels[ChannelId(pos, Modality.GYRO, axis)] = ChannelMotion(
                gyro_amp, 0.8 + 0.5 * int(axis) + side + 0.2 * int(pos), harm, 0.0
            )
    return ExerciseSignature(
        label,
        period,
        channels,
        dominant,
        depth_jitter=_DEPTH_JITTER.get(label, 0.0),
    )


DEFAULT_SIGNATURES: Mapping[Exercise, ExerciseSignature] = {lbl: _build_signature(lbl) for lbl in Exercise}


def chest_silenced(
    signatures: Mapping[Exercise, ExerciseSignature] = DEFAULT_SIGNATURES,
    common_period: float | None = 1.8,
) -> dict[Exercise, ExerciseSignature]:
    """Signatures whose chest channels carry noise only.

    The chest loses its motion and keeps one upright gravity baseline for
    every exercise. With ``common_period`` every exercise also shares one
    tempo, so nothing about the class leaks into chest features or frame
    durations.
    """
    g_axis, g_sign = _GRAVITY["standing"][P.CHEST]
    out = {}
    for label, sig in signatures.items():
        channels = {
            cid: (
                ChannelMotion(0.0, baseline=g_sign if cid.modality is Modality.ACCEL and cid.axis is g_axis else 0.0)
                if cid.position is P.CHEST
                else m
            )
            for cid, m in sig.channels.items()
        }
        candidates = [c for c in channels if c.position is not P.CHEST and c.modality is Modality.ACCEL]
        dominant = max(candidates, key=lambda c: (channels[c].amplitude, -c.ordinal))
        channels[dominant] = replace(channels[dominant], phase=0.0, harmonics=(1.0, 0.3, 0.1))
        period = common_period if common_period is not None else sig.fundamental_period
        out[label] = replace(sig, channels=channels, dominant_channel=dominant, fundamental_period=period)
    return out


# --- generation ---------------------------------------------------------------------


def _band_noise(rng: np.random.Generator, n: int, rate: float, lo: float, hi: float) -> np.ndarray:
    """Unit-variance Gaussian noise restricted to [lo, hi] Hz by spectral masking."""
    if n < 4:
        return np.zeros(n)
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / rate)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    out = np.fft.irfft(spec, n)
    sd = out.std()
    return out / sd if sd > 0 else out


@dataclass(frozen=True)
class _RepPlan:
    set_index: int
    rep_index: int
    start: float
    duration: float
    amplitude: float


def _plan_reps(
    rng: np.random.Generator,
    period: float,
    fatigue: FatigueModel,
    script: SessionScript,
    depth_jitter: float = 0.0,
) -> tuple[list[_RepPlan], float]:
    plans = []
    t = script.lead_in
    counts = script.rep_counts()
    for s, count in enumerate(counts):
        for k in range(count):
            jitter = 1.0 + script.tempo_jitter * rng.standard_normal() if script.tempo_jitter else 1.0
            dur = period * (1.0 + fatigue.period_growth) ** k * max(jitter, 0.5)
            amp = (1.0 - fatigue.amplitude_decay) ** k
            if depth_jitter:
                amp *= max(1.0 + depth_jitter * rng.standard_normal(), 0.5)
            plans.append(_RepPlan(s, k, t, dur, amp))
            t += dur
        if s < len(counts) - 1:
            t += script.break_duration
    return plans, t


def synthesize_recordings(
    signature: ExerciseSignature,
    fatigue: FatigueModel = FatigueModel(),
    script: SessionScript = SessionScript(),
    athlete_seed: int = 0,
    rate_profile: RateProfile = RateProfile.LG_50HZ_ACCEL,
    *,
    athlete_id: str | None = None,
) -> tuple[list[SensorRecording], GroundTruth]:
    """Per-sensor recordings at the profile's native rates plus their ground truth."""
    rng = np.random.default_rng(np.random.SeedSequence([int(athlete_seed), int(signature.label)]))
    v = signature.variability
    period = signature.fundamental_period * rng.uniform(1.0 - v, 1.0 + v)
    gain = rng.uniform(1.0 - v, 1.0 + v)
    channel_gain = {cid: rng.uniform(1.0 - v, 1.0 + v) for cid in sorted(signature.channels)}

    if signature.fatigue_scale != 1.0:
        fatigue = replace(
            fatigue,
            amplitude_decay=min(fatigue.amplitude_decay * signature.fatigue_scale, 0.5),
        )
    plans, end_of_work = _plan_reps(rng, period, fatigue, script, signature.depth_jitter)
    total = math.ceil(end_of_work + script.tail)
    rep_starts = np.array([p.start for p in plans])
    rep_ends = np.array([p.start + p.duration for p in plans])
    set_bounds = {}
    for p in plans:
        lo, hi = set_bounds.get(p.set_index, (p.start, p.start + p.duration))
        set_bounds[p.set_index] = (min(lo, p.start), max(hi, p.start + p.duration))

    athlete = athlete_id if athlete_id is not None else f"a{int(athlete_seed)}"
    recordings = []
    for pos in SensorPosition:
        rate = rate_profile.rate(pos)
        n = int(math.floor(total * rate + 1e-9)) + 1
        stamps = np.round(np.arange(n) * (1000.0 / rate)).astype(np.int64)
        t = stamps / 1000.0

        idx = np.searchsorted(rep_starts, t, side="right") - 1
        valid = idx >= 0
        idx_c = np.clip(idx, 0, len(plans) - 1)
        active = valid & (t < rep_ends[idx_c])
        durations = np.array([p.duration for p in plans])[idx_c]
        amps = np.array([p.amplitude for p in plans])[idx_c]
        theta = 2.0 * np.pi * (t - rep_starts[idx_c]) / durations
        ramp = np.zeros(n)
        for s, (lo, hi) in set_bounds.items():
            inside = (t >= lo) & (t < hi)
            ramp[inside] = (t[inside] - lo) / (hi - lo)

        modalities = [Modality.ACCEL] + ([Modality.GYRO] if rate_profile.has_gyro(pos) else [])
        blocks = {}
        for mod in modalities:
            block = np.empty((n, 3))
            for axis in Axis:
                cid = ChannelId(pos, mod, axis)
                m = signature.motion(cid)
                amp = m.amplitude * gain * channel_gain.get(cid, 1.0)
                x = np.full(n, m.baseline)
                x += np.where(active, amp * amps * m.waveform(theta), 0.0)
                if cid != signature.dominant_channel and amp > 0 and signature.wobble > 0:
                    x += active * (signature.wobble * amp) * _band_noise(rng, n, rate, 0.2, 3.0)
                if mod is Modality.ACCEL:
                    if fatigue.shiver_amplitude > 0:
                        lo, hi = fatigue.shiver_band
                        x += fatigue.shiver_amplitude * ramp * _band_noise(rng, n, rate, lo, hi)
                    x += script.noise_floor * rng.standard_normal(n)
                else:
                    x += script.gyro_noise * rng.standard_normal(n)
                block[:, axis] = x
            blocks[mod] = block
        recordings.append(
            SensorRecording(pos, rate, stamps, blocks[Modality.ACCEL], blocks.get(Modality.GYRO))
        )

    truth = GroundTruth(
        session_id=f"{athlete}_{signature.label.name}",
        athlete_id=athlete,
        label=signature.label,
        dominant_channel=signature.dominant_channel,
        reps=tuple(RepTruth(p.set_index, p.rep_index, p.start, p.start + p.duration) for p in plans),
        duration=float(total),
    )
    return recordings, truth


def generate_session(
    signature: ExerciseSignature,
    fatigue: FatigueModel = FatigueModel(),
    script: SessionScript = SessionScript(),
    athlete_seed: int = 0,
    rate_profile: RateProfile = RateProfile.LG_50HZ_ACCEL,
    *,
    athlete_id: str | None = None,
    common_rate: float = DEFAULT_COMMON_RATE,
) -> tuple[Session, GroundTruth]:
    recordings, truth = synthesize_recordings(
        signature, fatigue, script, athlete_seed, rate_profile, athlete_id=athlete_id
    )
    session = align_session(
        recordings,
        common_rate,
        session_id=truth.session_id,
        athlete_id=truth.athlete_id,
        exercise=truth.label,
    )
    return session, truth


# --- corpora ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusSpec:
    n_athletes: int = 20
    seed: int = 0
    labels: tuple[Exercise, ...] = tuple(Exercise)
    dropout: float = 0.0
    rate_profile: RateProfile = RateProfile.LG_50HZ_ACCEL
    fatigue: FatigueModel = FatigueModel()
    script: SessionScript = SessionScript(tempo_jitter=0.02)
    signatures: Mapping[Exercise, ExerciseSignature] = field(default_factory=lambda: dict(DEFAULT_SIGNATURES))

    def __post_init__(self) -> None:
        if self.n_athletes < 1:
            raise ValueError("n_athletes must be at least 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


def athlete_seed(corpus_seed: int, athlete: int) -> int:
    return int(np.random.SeedSequence([int(corpus_seed), int(athlete)]).generate_state(1)[0])


def iter_corpus(spec: CorpusSpec) -> Iterator[tuple[list[SensorRecording], GroundTruth]]:
    """Recordings and truth per (athlete, exercise), in athlete-major order."""
    for a in range(spec.n_athletes):
        seed = athlete_seed(spec.seed, a)
        for label in spec.labels:
            script = spec.script
            if spec.dropout > 0:
                drop_rng = np.random.default_rng(np.random.SeedSequence([seed, int(label), 1]))
                missing = tuple(int(m) for m in drop_rng.binomial(script.reps_per_set, spec.dropout, script.sets))
                script = replace(script, missing=missing)
            yield synthesize_recordings(
                spec.signatures[label],
                spec.fatigue,
                script,
                seed,
                spec.rate_profile,
                athlete_id=f"a{a:02d}",
            )


@dataclass(frozen=True)
class Corpus:
    sessions: tuple[Session, ...]
    truths: tuple[GroundTruth, ...]

    @property
    def n_repetitions(self) -> int:
        return sum(len(t.reps) for t in self.truths)


def generate_corpus(
    n_athletes: int = 20,
    labels: Sequence[Exercise] = tuple(Exercise),
    seed: int = 0,
    *,
    dropout: float = 0.0,
    rate_profile: RateProfile = RateProfile.LG_50HZ_ACCEL,
    signatures: Mapping[Exercise, ExerciseSignature] | None = None,
    fatigue: FatigueModel | None = None,
    script: SessionScript | None = None,
    common_rate: float = DEFAULT_COMMON_RATE,
) -> Corpus:
    spec = CorpusSpec(
        n_athletes=n_athletes,
        seed=seed,
        labels=tuple(labels),
        dropout=dropout,
        rate_profile=rate_profile,
        **({"signatures": signatures} if signatures is not None else {}),
        **({"fatigue": fatigue} if fatigue is not None else {}),
        **({"script": script} if script is not None else {}),
    )
    return corpus_from_spec(spec, common_rate)


def corpus_from_spec(spec: CorpusSpec, common_rate: float = DEFAULT_COMMON_RATE) -> Corpus:
    sessions, truths = [], []
    for recordings, truth in iter_corpus(spec):
        sessions.append(
            align_session(
                recordings,
                common_rate,
                session_id=truth.session_id,
                athlete_id=truth.athlete_id,
                exercise=truth.label,
            )
        )
        truths.append(truth)
    return Corpus(tuple(sessions), tuple(truths))
