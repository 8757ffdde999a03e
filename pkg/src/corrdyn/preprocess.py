"""Signal conditioning: zero-phase Butterworth filtering, epoching,
artifact rejection, condition averaging and baseline correction."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from ._validation import frozen, ms_to_samples
from .model import Recording, TimeWindow

logger = logging.getLogger(__name__)

DB_PER_OCTAVE_PER_ORDER = 6


@dataclass(frozen=True, eq=False)
class FilterSpec:
    """A digital Butterworth filter held as a cascade of biquads.

    ``order`` is the order of the full filter; for a band-stop that is twice
    the order of the low-pass prototype.
    """

    kind: str
    cutoff_hz: float | tuple
    order: int
    fs: float
    sos: np.ndarray

    def __post_init__(self):
        if self.order < 2 or self.order % 2:
            raise ValueError(f"filter order must be even and >= 2, got {self.order}")
        if not self.is_stable():
            raise ValueError("filter cascade is unstable")

    def poles(self):
        return np.concatenate([np.roots(section[3:]) for section in self.sos])

    def is_stable(self):
        return bool(np.all(np.abs(self.poles()) < 1.0))

    def response(self, freqs_hz):
        """Complex single-pass frequency response at ``freqs_hz``."""
        freqs = np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64))
        _, h = signal.sosfreqz(self.sos, worN=freqs, fs=self.fs)
        return h

    def gain_db(self, freqs_hz):
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.response(freqs_hz)))

    @property
    def characteristic_hz(self):
        """Frequency setting the slowest time constant of the cascade."""
        if self.kind == "bandstop":
            lo, hi = self.cutoff_hz
            return hi - lo
        return float(self.cutoff_hz)


def design_butterworth(kind, cutoff_hz, slope_db_per_octave, fs, zero_phase_slope=False):
    """Design a Butterworth filter whose single-pass asymptotic roll-off is
    ``slope_db_per_octave`` (6 dB/octave per order).

    With ``zero_phase_slope`` the slope is read as that of the
    forward-backward response instead, which halves the order.
    """
    if kind not in ("highpass", "lowpass", "bandstop"):
        raise ValueError(f"unknown filter kind {kind!r}")
    step = DB_PER_OCTAVE_PER_ORDER * (2 if zero_phase_slope else 1)
    if slope_db_per_octave <= 0 or slope_db_per_octave % step:
        raise ValueError(f"slope must be a positive multiple of {step} dB/octave, got {slope_db_per_octave}")
    order = int(slope_db_per_octave // step)
    nyquist = fs / 2.0
    if kind == "bandstop":
        lo, hi = (float(c) for c in cutoff_hz)
        if not 0 < lo < hi < nyquist:
            raise ValueError(f"band-stop edges must satisfy 0 < lo < hi < {nyquist}")
        if order % 2:
            raise ValueError("band-stop order must be even")
        sos = signal.butter(order // 2, [lo, hi], btype="bandstop", fs=fs, output="sos")
        cutoff = (lo, hi)
    else:
        cutoff = float(cutoff_hz)
        if not 0 < cutoff < nyquist:
            raise ValueError(f"cutoff {cutoff} Hz must lie in (0, {nyquist}) Hz")
        sos = signal.butter(order, cutoff, btype=kind, fs=fs, output="sos")
    return FilterSpec(kind, cutoff, order, float(fs), frozen(sos))


def design_notch(center_hz, fs, bandwidth_hz=5.0, order=4):
    """Band-stop Butterworth of ``order`` centred on ``center_hz``."""
    half = bandwidth_hz / 2.0
    return design_butterworth(
        "bandstop", (center_hz - half, center_hz + half), order * DB_PER_OCTAVE_PER_ORDER, fs
    )


def pad_length(spec, n_samples):
    tau = spec.fs / (2.0 * math.pi * spec.characteristic_hz)
    n = max(int(math.ceil(3 * tau)), 3 * (2 * len(spec.sos) + 1))
    return min(n, n_samples - 1)


def filtfilt_array(data, spec):
    """Forward-backward filter each row of ``data``."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        return filtfilt_array(x[None, :], spec)[0]
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite samples")
    # odd padding of ~3 time constants; scipy's default padlen is far too short for 0.1 Hz
    return signal.sosfiltfilt(np.array(spec.sos), x, axis=1, padtype="odd", padlen=pad_length(spec, x.shape[1]))


def filter_zero_phase(rec, spec):
    if rec.fs != spec.fs:
        raise ValueError(f"recording fs {rec.fs} does not match filter fs {spec.fs}")
    return rec.replace_data(filtfilt_array(rec.data, spec))


@dataclass(frozen=True, eq=False)
class EpochSet:
    """Stimulus-locked segments of one condition, stacked as
    ``(n_epochs, n_channels, n_times)``."""

    condition_label: str
    channels: tuple
    window: TimeWindow
    fs: float
    data: np.ndarray
    kept: np.ndarray = None
    skipped: tuple = ()

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError("epoch data must be (n_epochs, n_channels, n_times)")
        if data.shape[1] != len(self.channels):
            raise ValueError("epoch channel count does not match labels")
        if data.shape[2] != self.window.n_samples(self.fs):
            raise ValueError("epoch length inconsistent with window and fs")
        object.__setattr__(self, "data", frozen(data))
        kept = np.ones(len(data), bool) if self.kept is None else np.asarray(self.kept, bool).copy()
        if kept.shape != (len(data),):
            raise ValueError("kept mask must have one flag per epoch")
        kept.setflags(write=False)
        object.__setattr__(self, "kept", kept)

    @property
    def epochs(self):
        return list(self.data)

    @property
    def n_kept(self):
        return int(self.kept.sum())

    @property
    def n_rejected(self):
        return len(self.data) - self.n_kept


def epoch(rec, events, window):
    """Cut one segment per event; events whose window leaves the recording are
    skipped and logged."""
    offset = ms_to_samples(window.start_ms, rec.fs)
    length = window.n_samples(rec.fs)
    grouped, skipped = {}, {}
    for ev in events:
        start = ev.onset_sample + offset
        if start < 0 or start + length > rec.n_samples:
            logger.warning(
                "event %r at sample %d: window %s exceeds recording, skipped",
                ev.condition_label, ev.onset_sample, window,
            )
            skipped.setdefault(ev.condition_label, []).append(ev.onset_sample)
            grouped.setdefault(ev.condition_label, [])
            continue
        grouped.setdefault(ev.condition_label, []).append(rec.data[:, start:start + length])
    out = {}
    for label, segs in grouped.items():
        data = np.stack(segs) if segs else np.empty((0, len(rec.channels), length))
        out[label] = EpochSet(label, rec.channels, window, rec.fs, data, skipped=tuple(skipped.get(label, ())))
    return out


def reject_artifacts(epochs, threshold_uv=100.0):
    """Keep an epoch iff its peak |amplitude| over all channels and samples is
    at most ``threshold_uv``; epoch samples are never modified."""
    if threshold_uv <= 0:
        raise ValueError("threshold must be positive")
    if len(epochs.data):
        peak = np.abs(epochs.data).max(axis=(1, 2))
    else:
        peak = np.empty(0)
    kept = peak <= threshold_uv
    logger.info(
        "%s: kept %d of %d epochs at %.1f uV", epochs.condition_label, kept.sum(), len(kept), threshold_uv
    )
    if len(kept) and not kept.any():
        logger.warning("%s: every epoch rejected", epochs.condition_label)
    return replace(epochs, kept=kept)


@dataclass(frozen=True, eq=False)
class ConditionERP:
    condition_label: str
    channels: tuple
    window: TimeWindow
    fs: float
    data: np.ndarray
    n_epochs: int = 1
    baseline: TimeWindow | None = None
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "data", frozen(self.data))
        if self.n_epochs < 1:
            raise ValueError("an ERP needs at least one epoch")
        if self.data.shape != (len(self.channels), self.window.n_samples(self.fs)):
            raise ValueError(
                f"ERP data shape {self.data.shape} inconsistent with "
                f"{len(self.channels)} channels and window {self.window}"
            )

    @property
    def times_ms(self):
        return self.window.start_ms + np.arange(self.data.shape[1]) * 1000.0 / self.fs

    def sample_range(self, window):
        """Index slice covering ``window`` (must lie inside the ERP window)."""
        if not self.window.contains(window):
            raise ValueError(f"window {window} not covered by ERP window {self.window}")
        i0 = ms_to_samples(window.start_ms - self.window.start_ms, self.fs)
        return slice(i0, i0 + window.n_samples(self.fs))

    def select_channels(self, labels):
        idx = [self.channels.index(lab) for lab in labels]
        return replace(self, channels=tuple(labels), data=self.data[idx])

    def to_recording(self):
        return Recording(self.channels, self.fs, self.data, self.window.start_ms)


def average_condition(epochs):
    if epochs.n_kept == 0:
        raise ValueError(f"{epochs.condition_label}: no kept epochs to average")
    data = epochs.data[epochs.kept].mean(axis=0)
    return ConditionERP(epochs.condition_label, epochs.channels, epochs.window, epochs.fs, data, epochs.n_kept)


def grand_mean(erps, label=None):
    """Equal-weight mean of per-subject ERPs of one condition."""
    erps = list(erps)
    if not erps:
        raise ValueError("no ERPs to average")
    first = erps[0]
    for e in erps[1:]:
        if e.channels != first.channels or e.window != first.window or e.fs != first.fs:
            raise ValueError("ERPs disagree on channels, window or sampling rate")
    data = np.mean(np.stack([e.data for e in erps]), axis=0)
    return ConditionERP(
        label or first.condition_label, first.channels, first.window, first.fs, data,
        sum(e.n_epochs for e in erps), first.baseline, dict(first.attributes),
    )


def baseline_correct(erp, baseline):
    """Subtract each channel's mean over ``baseline``."""
    sl = erp.sample_range(baseline)
    data = erp.data - erp.data[:, sl].mean(axis=1, keepdims=True)
    return replace(erp, data=data, baseline=baseline)


@dataclass(frozen=True)
class PreprocessSettings:
    hp: float | None = 0.1
    lp: float | None = 100.0
    notch: float | None = 50.0
    notch_width: float = 5.0
    notch_order: int = 4
    slope: int = 48
    zero_phase_slope: bool = False
    reject_uv: float = 100.0
    baseline: TimeWindow = TimeWindow(-250.0, 0.0)
    epoch: TimeWindow = TimeWindow(-250.0, 500.0)

    def filters(self, fs):
        specs = []
        if self.hp:
            specs.append(design_butterworth("highpass", self.hp, self.slope, fs, self.zero_phase_slope))
        if self.lp:
            specs.append(design_butterworth("lowpass", self.lp, self.slope, fs, self.zero_phase_slope))
        if self.notch:
            specs.append(design_notch(self.notch, fs, self.notch_width, self.notch_order))
        return specs


def apply_filters(rec, settings):
    for spec in settings.filters(rec.fs):
        rec = filter_zero_phase(rec, spec)
    return rec


def erps_from_epochs(epoch_sets, settings):
    """Reject, average and baseline-correct each condition's epochs;
    conditions left without any kept epoch are dropped with a warning."""
    out = {}
    for label, eps in epoch_sets.items():
        eps = reject_artifacts(eps, settings.reject_uv)
        if eps.n_kept == 0:
            logger.warning("condition %r has no usable epochs", label)
            continue
        out[label] = baseline_correct(average_condition(eps), settings.baseline)
    return out


def preprocess_recording(rec, events, settings=PreprocessSettings()):
    """Filter, epoch, reject, average and baseline-correct one recording.

    Returns ``{condition_label: ConditionERP}``.
    """
    rec = apply_filters(rec, settings)
    return erps_from_epochs(epoch(rec, events, settings.epoch), settings)
