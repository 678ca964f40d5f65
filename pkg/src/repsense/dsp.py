"""Numerical kernels used by segmentation.

Butterworth lowpass (second-order sections, step-matched initial state;
the zero-phase mode also pads with an odd extension),
biased normalized autocorrelation, autocorrelation period estimation and
zero-crossing detection.  Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import fft as sp_fft
from scipy import signal as sp_signal

from repsense.errors import (
    DegenerateSignalError,
    FilterSpecError,
    NoPeriodError,
    SignalTooShortError,
)

DEFAULT_ORDER = 4
DEFAULT_CUTOFF = 5.0
STRENGTH_FLOOR = 0.4
MIN_PERIOD = 0.4
MAX_PERIOD = 5.0


class FilterMode(Enum):
    CAUSAL = "causal"
    ZERO_PHASE = "zero_phase"


@dataclass(frozen=True)
class ButterworthSpec:
    order: int = DEFAULT_ORDER
    cutoff: float = DEFAULT_CUTOFF
    sample_rate: float = 50.0
    mode: FilterMode = FilterMode.ZERO_PHASE

    def __post_init__(self) -> None:
        if int(self.order) != self.order or self.order < 1:
            raise FilterSpecError(f"order must be a positive integer, got {self.order}")
        if not self.sample_rate > 0:
            raise FilterSpecError("sample_rate must be positive")
        if not 0 < self.cutoff < self.sample_rate / 2:
            raise FilterSpecError(
                f"cutoff {self.cutoff} Hz must lie in (0, {self.sample_rate / 2}) Hz"
            )

    def sos(self) -> np.ndarray:
        # bilinear transform of the analog prototype with the cutoff prewarped
        return sp_signal.butter(self.order, self.cutoff, btype="low", output="sos", fs=self.sample_rate)

    def magnitude(self, freq: np.ndarray | float) -> np.ndarray:
        """Closed-form single-pass magnitude of the prewarped bilinear design."""
        f = np.asarray(freq, dtype=np.float64)
        warped = np.tan(np.pi * f / self.sample_rate) / np.tan(np.pi * self.cutoff / self.sample_rate)
        return 1.0 / np.sqrt(1.0 + warped ** (2 * self.order))


@dataclass(frozen=True)
class PeriodEstimate:
    lag: int
    period: float
    strength: float


def _sosfilt_matched(sos: np.ndarray, x: np.ndarray) -> np.ndarray:
    zi = sp_signal.sosfilt_zi(sos) * x[0]
    y, _ = sp_signal.sosfilt(sos, x, zi=zi)
    return y


def butterworth_lowpass(signal: np.ndarray, spec: ButterworthSpec) -> np.ndarray:
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    if len(x) < 3 * spec.order:
        raise SignalTooShortError(f"need at least {3 * spec.order} samples, got {len(x)}")
    sos = spec.sos()
    if spec.mode is FilterMode.CAUSAL:
        return _sosfilt_matched(sos, x)
    # odd extension of three cutoff periods per order keeps the edges on the signal
    pad = min(len(x) - 1, int(round(3 * spec.order * spec.sample_rate / spec.cutoff)))
    fb = sp_signal.sosfiltfilt(sos, x, padtype="odd", padlen=pad)
    # forward-backward and backward-forward differ only by their edge transients;
    # their mean is exactly mirror-symmetric for mirror-symmetric input
    bf = sp_signal.sosfiltfilt(sos, x[::-1], padtype="odd", padlen=pad)[::-1]
    return np.ascontiguousarray(0.5 * (fb + bf))


# --- autocorrelation ----------------------------------------------------------


def _autocorr_rows(centered: np.ndarray, n_lags: int) -> np.ndarray:
    """Biased raw autocorrelation of each row, lags 0..n_lags-1, via FFT."""
    n = centered.shape[-1]
    nfft = sp_fft.next_fast_len(2 * n - 1, real=True)
    spec = np.fft.rfft(centered, nfft, axis=-1)
    ac = np.fft.irfft(spec.real**2 + spec.imag**2, nfft, axis=-1)
    return ac[..., :n_lags]


def normalized_autocorrelation(signal: np.ndarray, max_lag: int) -> np.ndarray:
    """Mean-removed biased autocorrelation with lag 0 scaled to exactly 1."""
    x = np.asarray(signal, dtype=np.float64)
    if not 1 <= max_lag < len(x):
        raise ValueError(f"need len(signal) > max_lag >= 1, got len={len(x)} max_lag={max_lag}")
    if np.ptp(x) == 0:
        raise DegenerateSignalError("autocorrelation of a constant signal is undefined")
    centered = x - x.mean()
    ac = _autocorr_rows(centered, max_lag + 1)
    energy = float(np.dot(centered, centered))
    out = ac / energy
    out[0] = 1.0
    return out


def best_peaks(acf: np.ndarray, min_lag: int, max_lag: int) -> tuple[np.ndarray, np.ndarray]:
    """Highest local maximum of each normalized ACF row within [min_lag, max_lag].

    ``acf`` must cover lags up to ``max_lag + 1``.  Rows without a local maximum
    in range get lag -1 and strength 0.
    """
    acf = np.atleast_2d(acf)
    lo = max(int(min_lag), 1)
    hi = min(int(max_lag), acf.shape[1] - 2)
    if hi < lo:
        return np.full(acf.shape[0], -1), np.zeros(acf.shape[0])
    centre = acf[:, lo : hi + 1]
    left = acf[:, lo - 1 : hi]
    right = acf[:, lo + 1 : hi + 2]
    is_peak = (centre > left) & (centre >= right)
    masked = np.where(is_peak, centre, -np.inf)
    idx = np.argmax(masked, axis=1)
    best = masked[np.arange(acf.shape[0]), idx]
    found = np.isfinite(best)
    lags = np.where(found, idx + lo, -1)
    strengths = np.where(found, np.clip(best, 0.0, 1.0), 0.0)
    return lags, strengths


def estimate_period(
    signal: np.ndarray,
    sample_rate: float,
    min_period: float = MIN_PERIOD,
    max_period: float = MAX_PERIOD,
    strength_floor: float = STRENGTH_FLOOR,
) -> PeriodEstimate:
    """Period from the highest in-range local maximum of the autocorrelation."""
    if not max_period > min_period > 0:
        raise ValueError("need max_period > min_period > 0")
    x = np.asarray(signal, dtype=np.float64)
    if len(x) < 2 * max_period * sample_rate:
        raise SignalTooShortError(
            f"signal spans {len(x) / sample_rate:.3f} s, need {2 * max_period} s"
        )
    min_lag = int(np.ceil(min_period * sample_rate))
    max_lag = int(np.floor(max_period * sample_rate))
    acf = normalized_autocorrelation(x, max_lag + 1)
    lags, strengths = best_peaks(acf, min_lag, max_lag)
    lag, strength = int(lags[0]), float(strengths[0])
    if lag < 0:
        raise NoPeriodError("no autocorrelation peak within the period range")
    if strength < strength_floor:
        raise NoPeriodError(f"best peak strength {strength:.3f} is below floor {strength_floor}")
    return PeriodEstimate(lag, lag / sample_rate, strength)


def window_periodicity(
    signal: np.ndarray,
    sample_rate: float,
    window: int,
    hop: int,
    min_period: float = MIN_PERIOD,
    max_period: float = MAX_PERIOD,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Score sliding windows of ``signal`` for periodicity.

    Returns ``(starts, lags, strengths)`` per window.  The usable period range is
    capped at half the window so at least two cycles are visible.  Windows that
    are constant or have no in-range peak score 0 with lag -1.
    """
    x = np.asarray(signal, dtype=np.float64)
    window = min(int(window), len(x))
    hop = max(int(hop), 1)
    frames = np.lib.stride_tricks.sliding_window_view(x, window)[::hop]
    starts = np.arange(frames.shape[0]) * hop
    min_lag = int(np.ceil(min_period * sample_rate))
    max_lag = min(int(np.floor(max_period * sample_rate)), window // 2)
    centered = frames - frames.mean(axis=1, keepdims=True)
    live = np.ptp(frames, axis=1) > 0
    ac = _autocorr_rows(centered, max_lag + 2)
    energy = np.einsum("ij,ij->i", centered, centered)
    acf = np.zeros_like(ac)
    acf[live] = ac[live] / energy[live, None]
    lags, strengths = best_peaks(acf, min_lag, max_lag)
    lags = np.where(live, lags, -1)
    strengths = np.where(live, strengths, 0.0)
    return starts, lags, strengths


# --- zero crossings ----------------------------------------------------------------


def resolved_signs(signal: np.ndarray) -> np.ndarray:
    """Signs of the mean-removed signal with exact zeros taking the next non-zero sign.

    Trailing zeros take the last non-zero sign; an all-zero input stays all zero.
    """
    x = np.asarray(signal, dtype=np.float64)
    if len(x) == 0:
        return np.zeros(0, dtype=np.int8)
    s = np.sign(x - x.mean()).astype(np.int8)
    nz = np.flatnonzero(s)
    if len(nz) == 0:
        return s
    # index of the next non-zero sample at or after each position
    pos = np.searchsorted(nz, np.arange(len(s)), side="left")
    pos = np.minimum(pos, len(nz) - 1)
    return s[nz[pos]]


def zero_crossings(signal: np.ndarray) -> np.ndarray:
    """Indices ``i`` where the mean-removed sign differs between ``i`` and ``i + 1``."""
    s = resolved_signs(signal)
    if len(s) < 2:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(s[:-1] != s[1:]).astype(np.int64)


def upward_crossings(centered: np.ndarray) -> np.ndarray:
    """Boundary samples (first non-negative sample) of negative-to-positive crossings.

    ``centered`` is used as given; callers remove whatever mean they need first.
    """
    s = np.sign(np.asarray(centered, dtype=np.float64)).astype(np.int8)
    nz = np.flatnonzero(s)
    if len(nz) < 2:
        return np.zeros(0, dtype=np.int64)
    pos = np.minimum(np.searchsorted(nz, np.arange(len(s))), len(nz) - 1)
    s = s[nz[pos]]
    return (np.flatnonzero((s[:-1] < 0) & (s[1:] > 0)) + 1).astype(np.int64)
