"""Assemble analysis tables from condition ERPs."""

from __future__ import annotations

import numpy as np

from .ca import LAYOUT_CONDITIONS, LAYOUT_ELECTRODES, AnalysisMatrix
from .profiles import electrode_time_label, format_ms


def _bin_samples(bin_ms, fs):
    n = bin_ms * fs / 1000.0
    if n < 1 or abs(n - round(n)) > 1e-9:
        raise ValueError(f"bin of {bin_ms} ms is not a whole number of samples at {fs} Hz")
    return int(round(n))


def _binned(erp, window, bin_ms):
    width = _bin_samples(bin_ms, erp.fs)
    n_bins = window.duration_ms / bin_ms
    if abs(n_bins - round(n_bins)) > 1e-9:
        raise ValueError(f"window {window} is not a whole number of {bin_ms} ms bins")
    n_bins = int(round(n_bins))
    block = erp.data[:, erp.sample_range(window)]
    binned = block[:, :n_bins * width].reshape(block.shape[0], n_bins, width).mean(axis=2)
    starts = window.start_ms + np.arange(n_bins) * bin_ms
    return binned, starts


def build_condition_matrix(erps, window, bin_ms=2.0):
    """Conditions x electrode-time table of mean microvolts per
    (electrode, time bin); columns are electrode-major, labelled
    ``<electrode>@<bin start ms>``."""
    erps = list(erps)
    if not erps:
        raise ValueError("no ERPs given")
    first = erps[0]
    for e in erps[1:]:
        if e.channels != first.channels or e.fs != first.fs:
            raise ValueError("ERPs disagree on channels or sampling rate")
    rows = []
    starts = None
    for e in erps:
        binned, starts = _binned(e, window, bin_ms)
        rows.append(binned.ravel())
    cols = tuple(electrode_time_label(ch, t) for ch in first.channels for t in starts)
    return AnalysisMatrix(
        np.vstack(rows), tuple(e.condition_label for e in erps), cols, LAYOUT_CONDITIONS,
        (window.start_ms, window.end_ms), float(bin_ms),
        row_attributes=tuple(dict(e.attributes) for e in erps),
    )


def build_electrode_time_matrix(grand, window, bin_ms=10.0):
    """Electrodes x time table of one (grand-mean) ERP."""
    binned, starts = _binned(grand, window, bin_ms)
    return AnalysisMatrix(
        binned, grand.channels, tuple(format_ms(t) for t in starts), LAYOUT_ELECTRODES,
        (window.start_ms, window.end_ms), float(bin_ms),
    )
