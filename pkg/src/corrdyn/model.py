"""Recordings, montages, event lists and their file formats.

Recording file
    A UTF-8 header line ``channels=<n>;fs=<hz>;samples=<m>;unit=uV`` with
    optional ``start=<ms>``, ``format=csv|f64le`` and ``labels=A,B,...`` keys,
    followed by either one CSV row per channel (``label,v1,...,vm``) or, for
    ``format=f64le``, a channel-major block of little-endian float64 values.
    The binary form requires ``labels`` in the header.

Montage CSV
    ``label,x,y,z,peripheral`` with the peripheral flag optional (0 or 1).

Events CSV
    ``onset_sample,condition_label,key=value;key=value``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._validation import check_unique, frozen

UNIT = "uV"


class FormatError(ValueError):
    """Raised when an input file does not follow the documented layout."""


@dataclass(frozen=True)
class TimeWindow:
    """Half-open interval ``[start_ms, end_ms)`` relative to an event onset."""

    start_ms: float
    end_ms: float

    def __post_init__(self):
        if not self.start_ms < self.end_ms:
            raise ValueError(f"empty time window [{self.start_ms}, {self.end_ms})")

    @classmethod
    def parse(cls, text):
        """Parse ``"start:end"`` (milliseconds)."""
        try:
            a, b = str(text).split(":")
            return cls(float(a), float(b))
        except ValueError as exc:
            raise ValueError(f"cannot parse time window {text!r}; expected start:end") from exc

    def contains(self, other):
        return self.start_ms <= other.start_ms and other.end_ms <= self.end_ms

    @property
    def duration_ms(self):
        return self.end_ms - self.start_ms

    def n_samples(self, fs):
        return int(round(self.duration_ms * fs / 1000.0))


@dataclass(frozen=True, eq=False)
class Recording:
    """Multichannel signal in microvolts, channels x samples."""

    channels: tuple
    fs: float
    data: np.ndarray
    start_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(str(c) for c in self.channels))
        object.__setattr__(self, "data", frozen(self.data))
        if not self.fs > 0:
            raise ValueError(f"sampling rate must be positive, got {self.fs}")
        if self.data.ndim != 2 or self.data.shape[0] != len(self.channels):
            raise ValueError(
                f"data has shape {self.data.shape} but there are {len(self.channels)} channels"
            )
        check_unique(self.channels, "channel label")

    @property
    def n_samples(self):
        return self.data.shape[1]

    @property
    def times_ms(self):
        return self.start_time + np.arange(self.n_samples) * 1000.0 / self.fs

    def index(self, label):
        try:
            return self.channels.index(label)
        except ValueError:
            raise KeyError(f"unknown channel {label!r}") from None

    def replace_data(self, data):
        return Recording(self.channels, self.fs, data, self.start_time)

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return (
            self.channels == other.channels
            and self.fs == other.fs
            and self.start_time == other.start_time
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )

    __hash__ = None


def select_channels(rec, labels):
    """Return a recording holding only ``labels``, in the requested order."""
    labels = list(labels)
    idx = [rec.index(lab) for lab in labels]
    return Recording(labels, rec.fs, rec.data[idx], rec.start_time)


def _parse_header(line):
    fields = {}
    for part in line.strip().split(";"):
        if not part:
            continue
        if "=" not in part:
            raise FormatError(f"malformed header field {part!r}")
        key, value = part.split("=", 1)
        fields[key.strip()] = value.strip()
    for key in ("channels", "fs", "samples", "unit"):
        if key not in fields:
            raise FormatError(f"header is missing {key!r}")
    if fields["unit"] != UNIT:
        raise FormatError(f"unsupported unit {fields['unit']!r}; expected {UNIT}")
    try:
        n_ch = int(fields["channels"])
        n_samp = int(fields["samples"])
        fs = float(fields["fs"])
        start = float(fields.get("start", 0.0))
    except ValueError as exc:
        raise FormatError(f"malformed header: {exc}") from exc
    labels = fields["labels"].split(",") if fields.get("labels") else None
    return n_ch, n_samp, fs, start, fields.get("format", "csv"), labels


def load_recording(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    raw = path.read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FormatError("missing header line")
    n_ch, n_samp, fs, start, fmt, labels = _parse_header(raw[:nl].decode("utf-8"))
    body = raw[nl + 1:]

    if fmt == "f64le":
        if labels is None:
            raise FormatError("binary recordings need labels in the header")
        if len(labels) != n_ch:
            raise FormatError(f"channel mismatch: header declares {n_ch}, labels give {len(labels)}")
        expected = n_ch * n_samp * 8
        if len(body) != expected:
            raise FormatError(f"binary block has {len(body)} bytes, expected {expected}")
        data = np.frombuffer(body, dtype="<f8").reshape(n_ch, n_samp)
    elif fmt == "csv":
        rows = [r for r in csv.reader(io.StringIO(body.decode("utf-8"))) if r]
        if len(rows) != n_ch:
            raise FormatError(f"channel mismatch: header declares {n_ch}, body has {len(rows)} rows")
        if labels is None:
            labels = [r[0] for r in rows]
            rows = [r[1:] for r in rows]
        elif len(labels) != n_ch:
            raise FormatError(f"channel mismatch: header declares {n_ch}, labels give {len(labels)}")
        for lab, r in zip(labels, rows):
            if len(r) != n_samp:
                raise FormatError(
                    f"sample mismatch on channel {lab!r}: header declares {n_samp}, row has {len(r)}"
                )
        try:
            data = np.array([[float(v) for v in r] for r in rows], dtype=np.float64)
        except ValueError as exc:
            raise FormatError(f"non-numeric sample: {exc}") from exc
        data = data.reshape(n_ch, n_samp)
    else:
        raise FormatError(f"unknown body format {fmt!r}")
    return Recording(labels, fs, data, start)


def save_recording(rec, path, fmt="csv"):
    header = (
        f"channels={len(rec.channels)};fs={rec.fs!r};samples={rec.n_samples};unit={UNIT}"
        f";start={rec.start_time!r};format={fmt}"
    )
    path = Path(path)
    if fmt == "f64le":
        header += ";labels=" + ",".join(rec.channels)
        block = np.ascontiguousarray(rec.data, dtype="<f8").tobytes()
        path.write_bytes(header.encode("utf-8") + b"\n" + block)
    elif fmt == "csv":
        lines = [header]
        for lab, row in zip(rec.channels, rec.data):
            lines.append(",".join([lab] + [repr(float(v)) for v in row]))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


@dataclass(frozen=True)
class MontageEntry:
    label: str
    x: float
    y: float
    z: float
    peripheral: bool = False


@dataclass(frozen=True)
class Montage:
    """Electrode positions on the unit head sphere.

    Axes: +x right ear, +y nose, +z vertex.
    """

    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        check_unique(self.labels, "electrode label")
        for e in self.entries:
            norm = float(np.sqrt(e.x ** 2 + e.y ** 2 + e.z ** 2))
            if not 0.5 <= norm <= 1.5:
                raise ValueError(f"electrode {e.label!r} has coordinate norm {norm:.3f} outside [0.5, 1.5]")

    @property
    def labels(self):
        return tuple(e.label for e in self.entries)

    @property
    def central_labels(self):
        """Labels of all non-peripheral electrodes, in montage order."""
        return tuple(e.label for e in self.entries if not e.peripheral)

    @property
    def peripheral_labels(self):
        return tuple(e.label for e in self.entries if e.peripheral)

    def positions(self, labels=None):
        lookup = {e.label: e for e in self.entries}
        labels = self.labels if labels is None else labels
        out = []
        for lab in labels:
            if lab not in lookup:
                raise KeyError(f"electrode {lab!r} missing from montage")
            e = lookup[lab]
            out.append((e.x, e.y, e.z))
        return np.array(out, dtype=np.float64).reshape(-1, 3)


def load_montage(path):
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and row[0].strip().lower() == "label":
                continue
            if len(row) not in (4, 5):
                raise FormatError(f"line {lineno}: expected label,x,y,z[,peripheral]")
            try:
                x, y, z = (float(v) for v in row[1:4])
                periph = row[4].strip() if len(row) == 5 else "0"
                if periph not in ("0", "1"):
                    raise ValueError(f"peripheral flag must be 0 or 1, got {periph!r}")
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}") from exc
            entries.append(MontageEntry(row[0].strip(), x, y, z, periph == "1"))
    return Montage(entries)


def save_montage(montage, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "x", "y", "z", "peripheral"])
        for e in montage.entries:
            w.writerow([e.label, repr(e.x), repr(e.y), repr(e.z), int(e.peripheral)])
    return Path(path)


def synthetic_montage(n_electrodes=128, n_peripheral=26):
    """Quasi-uniform cap layout with the lowest ``n_peripheral`` sites flagged.

    Sites follow a Fibonacci spiral from the vertex down to ~20 degrees below
    the equator; labels are ``E1..En``.
    """
    if not 0 <= n_peripheral < n_electrodes:
        raise ValueError("n_peripheral must be in [0, n_electrodes)")
    k = np.arange(n_electrodes)
    z = 1.0 - (k + 0.5) / n_electrodes * 1.35
    rho = np.sqrt(1.0 - z ** 2)
    phi = k * np.pi * (3.0 - np.sqrt(5.0))
    x, y = rho * np.cos(phi), rho * np.sin(phi)
    cutoff = n_electrodes - n_peripheral
    entries = [
        MontageEntry(f"E{i + 1}", float(x[i]), float(y[i]), float(z[i]), bool(i >= cutoff))
        for i in range(n_electrodes)
    ]
    return Montage(entries)


@dataclass(frozen=True)
class Event:
    onset_sample: int
    condition_label: str
    attributes: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class EventList:
    events: tuple

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        onsets = [e.onset_sample for e in self.events]
        if any(b < a for a, b in zip(onsets, onsets[1:])):
            raise ValueError("non-monotone onsets")

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def check_bounds(self, rec):
        for e in self.events:
            if not 0 <= e.onset_sample < rec.n_samples:
                raise ValueError(f"event onset {e.onset_sample} outside recording of {rec.n_samples} samples")

    def where(self, **attrs):
        """Events whose attributes match every ``key=value`` given."""
        return EventList(
            e for e in self.events if all(e.attributes.get(k) == v for k, v in attrs.items())
        )


def _format_attributes(attrs):
    for k, v in attrs.items():
        if any(ch in f"{k}{v}" for ch in ";=,\n"):
            raise ValueError(f"attribute {k}={v} contains a reserved character")
    return ";".join(f"{k}={v}" for k, v in attrs.items())


def _parse_attributes(text, lineno):
    attrs = {}
    for part in text.split(";"):
        if not part:
            continue
        if "=" not in part:
            raise FormatError(f"line {lineno}: malformed attribute {part!r}")
        k, v = part.split("=", 1)
        attrs[k] = v
    return attrs


def load_events(path):
    events = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row:
                continue
            if lineno == 1 and row[0].strip() == "onset_sample":
                continue
            if len(row) not in (2, 3):
                raise FormatError(f"line {lineno}: expected onset_sample,condition_label[,attributes]")
            try:
                onset = int(row[0])
            except ValueError as exc:
                raise FormatError(f"line {lineno}: bad onset {row[0]!r}") from exc
            attrs = _parse_attributes(row[2], lineno) if len(row) == 3 else {}
            events.append(Event(onset, row[1], attrs))
    return EventList(events)


def save_events(events: Iterable[Event] | EventList, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["onset_sample", "condition_label", "attributes"])
        for e in events:
            w.writerow([e.onset_sample, e.condition_label, _format_attributes(e.attributes)])
    return Path(path)


def condition_attributes(events: Sequence[Event]):
    """Map each condition label to the attributes its events share."""
    out = {}
    for e in events:
        shared = out.get(e.condition_label)
        if shared is None:
            out[e.condition_label] = dict(e.attributes)
        else:
            for k in [k for k in shared if shared[k] != e.attributes.get(k)]:
                del shared[k]
    return out
