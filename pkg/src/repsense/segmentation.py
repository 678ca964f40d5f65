"""Activity detection and per-repetition framing of a continuous session.

The anchor channel is the one with the most sustained periodicity.  Sliding
windows over it are scored with the normalized autocorrelation; runs of
periodic windows become candidate sets.  Inside a set, frame boundaries are
placed one period apart and snapped to upward zero crossings of the lowpassed,
set-mean-removed anchor, so a frame grows when the athlete slows down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from repsense import dsp
from repsense.errors import NoActivityError
from repsense.recording import ChannelId, Session


@dataclass(frozen=True)
class SegmentationConfig:
    window_s: float = 8.0
    hop_s: float = 1.0
    strength_floor: float = dsp.STRENGTH_FLOOR
    min_period: float = dsp.MIN_PERIOD
    max_period: float = dsp.MAX_PERIOD
    filter_order: int = dsp.DEFAULT_ORDER
    filter_cutoff: float = dsp.DEFAULT_CUTOFF
    filter_mode: dsp.FilterMode = dsp.FilterMode.ZERO_PHASE
    min_frames: int = 3
    # a frame whose peak-to-peak swing is below this fraction of the set's
    # reference swing ends the set
    amplitude_ratio: float = 0.35
    # at a set edge, motion within this fraction of the reference swing counts as rest
    quiet_ratio: float = 0.1
    # streaming hook: a fixed initial frame length (s) instead of the autocorrelation estimate
    initial_period: float | None = None

    def filter_spec(self, sample_rate: float) -> dsp.ButterworthSpec:
        return dsp.ButterworthSpec(self.filter_order, self.filter_cutoff, sample_rate, self.filter_mode)


DEFAULT_CONFIG = SegmentationConfig()


@dataclass(frozen=True, eq=False)
class RepetitionFrame:
    start: int
    end: int
    channel_slice: np.ndarray = field(repr=False)
    channel_ids: tuple[ChannelId, ...] = field(repr=False)
    anchor_channel: ChannelId
    period_at_cut: float
    sample_rate: float

    @property
    def n_samples(self) -> int:
        return self.end - self.start

    @property
    def duration(self) -> float:
        return (self.end - self.start) / self.sample_rate

    @property
    def start_s(self) -> float:
        return self.start / self.sample_rate

    @property
    def end_s(self) -> float:
        return self.end / self.sample_rate


@dataclass(frozen=True)
class SegmentedSet:
    start: float
    end: float
    frames: tuple[RepetitionFrame, ...]


@dataclass(frozen=True)
class SegmentationResult:
    sets: tuple[SegmentedSet, ...]
    anchor_channel: ChannelId | None
    skipped_spans: tuple[tuple[float, float], ...]

    @property
    def frames(self) -> list[RepetitionFrame]:
        return [f for s in self.sets for f in s.frames]

    def format_report(self) -> str:
        """One ``set_index,frame_index,start_s,end_s,anchor_channel`` line per frame."""
        lines = []
        for si, s in enumerate(self.sets):
            for fi, f in enumerate(s.frames):
                lines.append(f"{si},{fi},{f.start_s!r},{f.end_s!r},{f.anchor_channel.name}")
        return "".join(line + "\n" for line in lines)


@dataclass(frozen=True)
class RepetitionCounts:
    per_set: tuple[int, ...]
    total: int


def count_repetitions(result: SegmentationResult) -> RepetitionCounts:
    per_set = tuple(len(s.frames) for s in result.sets)
    return RepetitionCounts(per_set, sum(per_set))


def _window_geometry(session: Session, config: SegmentationConfig) -> tuple[int, int]:
    window = int(round(config.window_s * session.common_rate))
    hop = max(int(round(config.hop_s * session.common_rate)), 1)
    return min(window, session.n_samples), hop


def channel_scores(session: Session, config: SegmentationConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Mean windowed periodicity strength per channel (session column order).

    Channels that never reach the strength floor in any window score ``nan``.
    """
    window, hop = _window_geometry(session, config)
    scores = np.empty(len(session.channel_ids))
    for j in range(len(session.channel_ids)):
        _, _, strengths = dsp.window_periodicity(
            session.data[:, j], session.common_rate, window, hop, config.min_period, config.max_period
        )
        scores[j] = strengths.mean() if np.any(strengths >= config.strength_floor) else np.nan
    return scores


def select_anchor_channel(session: Session, config: SegmentationConfig = DEFAULT_CONFIG) -> ChannelId:
    """Channel with the greatest mean periodicity; ties go to the lower ordinal."""
    if not session.channel_ids:
        raise NoActivityError("session has no channels")
    scores = channel_scores(session, config)
    if np.all(np.isnan(scores)):
        raise NoActivityError("no channel shows periodic activity")
    # columns are in canonical order, so the first maximum is the lowest ordinal
    return session.channel_ids[int(np.nanargmax(scores))]


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive (first, last) index pairs of consecutive True values."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2])]


def _swing(x: np.ndarray) -> float:
    if len(x) == 0:
        return 0.0
    return float(np.max(x) - np.min(x))


def _nearest(candidates: np.ndarray, target: float, prefer_late: bool) -> int:
    dist = np.abs(candidates - target)
    best = np.flatnonzero(dist == dist.min())
    return int(candidates[best[-1] if prefer_late else best[0]])


def _walk(
    centered: np.ndarray,
    crossings: np.ndarray,
    seed: int,
    period: float,
    lo: int,
    hi: int,
    threshold: float,
    direction: int,
) -> list[int]:
    """Boundaries reached from ``seed`` stepping one period at a time.

    Each step snaps to the upward crossing nearest the nominal boundary, no
    closer than half a period and no further than two periods.  Walking stops
    when no crossing qualifies or the new frame's swing drops below threshold.
    """
    bounds: list[int] = []
    b = seed
    min_step = max(int(math.ceil(0.5 * period)), 1)
    max_step = int(math.floor(2.0 * period))
    while True:
        if direction > 0:
            ok = (crossings >= b + min_step) & (crossings <= min(b + max_step, hi + 1))
        else:
            ok = (crossings <= b - min_step) & (crossings >= max(b - max_step, lo))
        cands = crossings[ok]
        if len(cands) == 0:
            break
        # on a tie prefer the longer frame: enlarge rather than shrink
        c = _nearest(cands, b + direction * period, prefer_late=direction > 0)
        a, z = (b, c) if direction > 0 else (c, b)
        if _swing(centered[a:z]) < threshold:
            break
        bounds.append(c)
        b = c
    return bounds


def _rest_band(rest: np.ndarray) -> tuple[float, float]:
    """Median and a robust 3-sigma half-width of a resting stretch."""
    median = float(np.median(rest))
    return median, 3.0 * 1.4826 * float(np.median(np.abs(rest - median)))


def _trim_set_edges(centered: np.ndarray, bounds: list[int], quiet: float, period: float) -> list[int]:
    """Move the outer edges of a set to where its motion leaves and rejoins rest.

    Zero-crossing snapping can land in the break next to a set, since break
    noise also crosses the level.  A stretch of at least 0.15 period within
    ``quiet`` of the level at a set edge is taken as rest; the edge moves to the
    last (first) sample inside that stretch's noise band.  Frames keep at least
    half a period.
    """
    bounds = list(bounds)
    min_rest = 0.15 * period
    a, b = bounds[0], bounds[1]
    loud = np.flatnonzero(np.abs(centered[a:b]) > quiet)
    if len(loud) and loud[0] >= min_rest:
        onset = a + int(loud[0])
        median, width = _rest_band(centered[a:onset])
        inside = np.flatnonzero(np.abs(centered[a:onset] - median) <= width)
        if len(inside):
            start = a + int(inside[-1]) + 1
            if b - start >= 0.5 * period:
                bounds[0] = start
    y, z = bounds[-2], bounds[-1]
    loud = np.flatnonzero(np.abs(centered[y:z]) > quiet)
    if len(loud) and (z - y) - 1 - loud[-1] >= min_rest:
        offset = y + int(loud[-1]) + 1
        median, width = _rest_band(centered[offset:z])
        inside = np.flatnonzero(np.abs(centered[offset:z] - median) <= width)
        if len(inside):
            end = offset + int(inside[0])
            if end - y >= 0.5 * period:
                bounds[-1] = end
    return bounds


def _frame_bounds(
    centered: np.ndarray, w0: int, window: int, period: float, lo: int, hi: int, threshold: float
) -> list[int]:
    crossings = dsp.upward_crossings(centered[lo : hi + 1]) + lo
    n = len(centered)
    # a session edge is a boundary when the signal, extrapolated one sample, rises through zero there
    if lo == 0 and n > 1 and centered[0] >= 0 > 2 * centered[0] - centered[1]:
        crossings = np.concatenate([[0], crossings])
    if hi == n - 1 and n > 1 and centered[-1] < 0 <= 2 * centered[-1] - centered[-2]:
        crossings = np.concatenate([crossings, [n]])
    inside = crossings[(crossings >= max(w0, lo)) & (crossings < w0 + window)]
    if len(inside) == 0:
        return []
    seed = _nearest(inside, w0 + window / 2.0, prefer_late=False)
    back = _walk(centered, crossings, seed, period, lo, hi, threshold, -1)
    fwd = _walk(centered, crossings, seed, period, lo, hi, threshold, +1)
    return back[::-1] + [seed] + fwd


def segment(session: Session, config: SegmentationConfig = DEFAULT_CONFIG) -> SegmentationResult:
    rate = session.common_rate
    whole = ((0.0, session.duration),)
    try:
        anchor = select_anchor_channel(session, config)
    except NoActivityError:
        return SegmentationResult((), None, whole)

    raw = session.column(anchor)
    smooth = dsp.butterworth_lowpass(raw, config.filter_spec(rate))
    window, hop = _window_geometry(session, config)
    starts, lags, strengths = dsp.window_periodicity(
        raw, rate, window, hop, config.min_period, config.max_period
    )
    active = strengths >= config.strength_floor

    sets: list[SegmentedSet] = []
    last_end = 0
    for first, last in _runs(active):
        lo = max(int(starts[first]), last_end)
        hi = min(int(starts[last]) + window, session.n_samples - 1)
        # seed from the most periodic window of the run; it lies inside the activity
        best = first + int(np.argmax(strengths[first : last + 1]))
        w0 = int(starts[best])
        if w0 + window <= lo:
            continue
        if config.initial_period is not None:
            period = config.initial_period * rate
        else:
            period = float(lags[best])
        # mean over whole periods only, so partial cycles do not bias the level
        whole = max(int(window // period), 1) * int(round(period))
        level = float(smooth[w0 : w0 + min(whole, window)].mean())
        ref = np.percentile(smooth[w0 : w0 + window], [1.0, 99.0])
        threshold = config.amplitude_ratio * float(ref[1] - ref[0])
        bounds = _frame_bounds(smooth - level, w0, window, period, lo, hi, threshold)
        if len(bounds) > 1:
            # second pass with the mean of the set itself
            level = float(smooth[bounds[0] : bounds[-1]].mean())
            bounds = _frame_bounds(smooth - level, w0, window, period, lo, hi, threshold)
        if len(bounds) - 1 < config.min_frames:
            continue
        bounds = _trim_set_edges(smooth - level, bounds, config.quiet_ratio * float(ref[1] - ref[0]), period)
        frames = tuple(
            RepetitionFrame(
                a,
                z,
                session.data[a:z],
                session.channel_ids,
                anchor,
                period / rate,
                rate,
            )
            for a, z in zip(bounds[:-1], bounds[1:])
        )
        sets.append(SegmentedSet(bounds[0] / rate, bounds[-1] / rate, frames))
        last_end = bounds[-1]

    return SegmentationResult(tuple(sets), anchor, _complement(sets, session.duration))


def _complement(sets: Sequence[SegmentedSet], duration: float) -> tuple[tuple[float, float], ...]:
    spans = []
    cursor = 0.0
    for s in sets:
        if s.start > cursor:
            spans.append((cursor, s.start))
        cursor = s.end
    if cursor < duration:
        spans.append((cursor, duration))
    return tuple(spans)
