"""Synthetic data with known structure.

Two generators live here:

* :func:`plant_components` builds condition ERPs as a sum of rank-one
  spatial x temporal components with per-condition loadings plus noise, so a
  correspondence analysis can be scored against the planted truth with
  :func:`recovery_score`.
* :func:`synth_phrase_recording` renders a continuous recording of phrases
  shown word by word (content words 500 ms, function words 110 ms, a 500 ms
  period and a 530 ms blank), with word-locked responses and an event list
  whose attributes support the 64-condition design.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .model import Event, EventList, Montage, Recording, synthetic_montage
from .preprocess import ConditionERP
from .profiles import parse_electrode_time

_UNIT_TOL = 1e-9
_ORTHO_TOL = 1e-9
_TIE_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class PlantedComponent:
    """Rank-one pattern ``sqrt(variance) * loadings (x) spatial (x) temporal``.

    ``spatial`` and ``temporal`` are unit-norm; with unit-norm loadings the
    component's squared Frobenius norm equals ``variance``.
    """

    spatial: np.ndarray
    temporal: np.ndarray
    loadings: np.ndarray
    variance: float = 1.0

    def __post_init__(self):
        for name in ("spatial", "temporal", "loadings"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64).copy())
        for name in ("spatial", "temporal"):
            norm = np.linalg.norm(getattr(self, name))
            if abs(norm - 1.0) > _UNIT_TOL:
                raise ValueError(f"{name} pattern must be unit-norm (got {norm:.6g})")
        if self.variance < 0:
            raise ValueError("variance must be >= 0")

    @property
    def amplitude(self):
        return math.sqrt(self.variance)

    @property
    def strength(self):
        """Squared Frobenius norm of the planted condition x electrode-time block."""
        return self.variance * float(self.loadings @ self.loadings)

    def pattern(self):
        """Electrode-major flattened spatial x temporal vector (unit norm)."""
        return np.outer(self.spatial, self.temporal).ravel()

    def to_dict(self):
        return {"spatial": self.spatial.tolist(), "temporal": self.temporal.tolist(),
                "loadings": self.loadings.tolist(), "variance": self.variance}


@dataclass(frozen=True, eq=False)
class GroundTruth:
    components: tuple
    noise_sigma: float = 0.0
    seed: int = 0
    orthogonal: bool = True
    centered: bool = True
    noise_color: str = "white"
    conditions: tuple = ()
    electrodes: tuple = ()
    times_ms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        if self.noise_color not in ("white", "pink"):
            raise ValueError(f"unknown noise color {self.noise_color!r}")
        if self.centered:
            for k, comp in enumerate(self.components):
                L = comp.loadings
                if abs(L.mean()) > 1e-12 * max(1.0, float(np.abs(L).max())):
                    raise ValueError(f"component {k} loadings are not centered")
        if self.orthogonal:
            for a in range(len(self.components)):
                for b in range(a + 1, len(self.components)):
                    ca, cb = self.components[a], self.components[b]
                    inner = (ca.amplitude * cb.amplitude * float(ca.loadings @ cb.loadings)
                             * float(ca.spatial @ cb.spatial) * float(ca.temporal @ cb.temporal))
                    if abs(inner) > _ORTHO_TOL:
                        raise ValueError(f"components {a} and {b} are not orthogonal (<A,B>_F = {inner:.3g})")

    def signal_matrix(self):
        """Noise-free conditions x (electrode-major) electrode-time matrix."""
        comps = self.components
        n_rows = len(comps[0].loadings)
        out = np.zeros((n_rows, comps[0].spatial.size * comps[0].temporal.size))
        for c in comps:
            out += c.amplitude * np.outer(c.loadings, c.pattern())
        return out

    def to_dict(self):
        return {
            "format": "corrdyn-ground-truth", "version": 1,
            "components": [c.to_dict() for c in self.components],
            "noise_sigma": self.noise_sigma, "seed": self.seed, "orthogonal": self.orthogonal,
            "centered": self.centered, "noise_color": self.noise_color,
            "conditions": list(self.conditions), "electrodes": list(self.electrodes),
            "times_ms": list(self.times_ms),
        }

    @classmethod
    def from_dict(cls, d):
        comps = [PlantedComponent(**c) for c in d["components"]]
        return cls(comps, d["noise_sigma"], d["seed"], d["orthogonal"], d["centered"],
                   d["noise_color"], tuple(d["conditions"]), tuple(d["electrodes"]), tuple(d["times_ms"]))

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True), encoding="utf-8")
        return Path(path)


def colored_noise(rng, shape, sigma, color="white"):
    """Gaussian noise with standard deviation ``sigma``; ``pink`` shapes the
    spectrum along the last axis as 1/f in power."""
    white = rng.standard_normal(shape)
    if color == "white" or sigma == 0:
        return sigma * white
    n = shape[-1]
    spec = np.fft.rfft(white, axis=-1)
    f = np.arange(spec.shape[-1], dtype=np.float64)
    f[0] = 1.0
    spec /= np.sqrt(f)
    pink = np.fft.irfft(spec, n=n, axis=-1)
    pink -= pink.mean(axis=-1, keepdims=True)
    return sigma * pink / pink.std()


def plant_components(truth, conditions, electrodes, window, fs):
    """Render one ConditionERP per condition from ``truth``.

    Returns ``(erps, truth)`` where ``truth`` carries the labels used.
    """
    conditions, electrodes = tuple(conditions), tuple(electrodes)
    n_t = window.n_samples(fs)
    for k, c in enumerate(truth.components):
        if c.spatial.size != len(electrodes) or c.temporal.size != n_t or c.loadings.size != len(conditions):
            raise ValueError(
                f"component {k} has dims ({c.loadings.size}, {c.spatial.size}, {c.temporal.size}); "
                f"expected ({len(conditions)}, {len(electrodes)}, {n_t})"
            )
    data = np.zeros((len(conditions), len(electrodes), n_t))
    for c in truth.components:
        data += c.amplitude * c.loadings[:, None, None] * np.outer(c.spatial, c.temporal)[None]
    if truth.noise_sigma > 0:
        rng = np.random.default_rng(truth.seed)
        data += colored_noise(rng, data.shape, truth.noise_sigma, truth.noise_color)
    times = window.start_ms + np.arange(n_t) * 1000.0 / fs
    truth = GroundTruth(truth.components, truth.noise_sigma, truth.seed, truth.orthogonal, truth.centered,
                        truth.noise_color, conditions, electrodes, tuple(float(t) for t in times))
    erps = [ConditionERP(lab, electrodes, window, fs, data[i]) for i, lab in enumerate(conditions)]
    return erps, truth


def _orthonormal_centered(rng, n, k):
    A = rng.standard_normal((n, k))
    A -= A.mean(axis=0)
    Q, R = np.linalg.qr(A)
    return Q * np.sign(np.diag(R))


def gaussian_bump(n, center, width):
    t = np.arange(n, dtype=np.float64)
    g = np.exp(-0.5 * ((t - center) / width) ** 2)
    return g / np.linalg.norm(g)


def random_ground_truth(n_conditions, n_electrodes, n_times, variances=(5.0, 3.0, 1.0), *,
                        snr=None, noise_sigma=0.0, seed=0, noise_color="white"):
    """Orthogonal planted components with centered, orthonormal loadings.

    Spatial patterns are zero-sum and mutually orthonormal; temporal
    waveforms are Gaussian bumps spread over the window.  With ``snr`` set,
    the noise sigma is ``rms(signal) / snr``.
    """
    k = len(variances)
    if min(n_conditions, n_electrodes) <= k:
        raise ValueError(f"{k} centered orthogonal components need more than {k} conditions and electrodes")
    rng = np.random.default_rng(seed)
    loadings = _orthonormal_centered(rng, n_conditions, k)
    spatial = _orthonormal_centered(rng, n_electrodes, k)
    comps = []
    for i, var in enumerate(variances):
        center = (i + 1) * n_times / (k + 1)
        temporal = gaussian_bump(n_times, center, max(2.0, n_times / (4 * k + 4)))
        comps.append(PlantedComponent(spatial[:, i], temporal, loadings[:, i], float(var)))
    if snr is not None:
        rms = math.sqrt(sum(variances) / (n_conditions * n_electrodes * n_times))
        noise_sigma = rms / snr
    return GroundTruth(comps, float(noise_sigma), seed, noise_color=noise_color)


class AxisRecovery(NamedTuple):
    axis: int
    component: int
    cos: float
    loading_corr: float


@dataclass(frozen=True)
class RecoveryReport:
    axes: tuple
    order_match: bool | None
    tie: bool

    @property
    def min_cos(self):
        return min(a.cos for a in self.axes) if self.axes else float("nan")


def _truth_columns(sol, truth):
    """Index of each solution column in the truth's electrode-major layout."""
    n_t = len(truth.components[0].temporal)
    if truth.electrodes and truth.times_ms:
        e_idx = {e: i for i, e in enumerate(truth.electrodes)}
        t_idx = {round(t, 6): i for i, t in enumerate(truth.times_ms)}
        idx = []
        for lab in sol.col_labels:
            e, t = parse_electrode_time(lab)
            idx.append(e_idx[e] * n_t + t_idx[round(t, 6)])
        return np.array(idx)
    return np.asarray(sol.kept_cols)


def recovery_score(sol, truth):
    """Match each axis to the planted component whose electrode-time pattern
    it best aligns with (|cos| against the column eigenvector)."""
    cols = _truth_columns(sol, truth)
    if truth.conditions:
        r_idx = {c: i for i, c in enumerate(truth.conditions)}
        rows = np.array([r_idx[lab] for lab in sol.row_labels])
    else:
        rows = np.asarray(sol.kept_rows)
    patterns = np.array([c.pattern()[cols] for c in truth.components])
    patterns /= np.linalg.norm(patterns, axis=1, keepdims=True)
    axes = []
    for k in range(min(sol.n_axes, len(truth.components))):
        v = sol.col_eigvecs[:, k]
        cos = np.abs(patterns @ v) / np.linalg.norm(v)
        best = int(np.argmax(cos))
        L = truth.components[best].loadings[rows]
        F = sol.row_coords[:, k]
        if np.std(L) > 0 and np.std(F) > 0:
            corr = float(np.corrcoef(F, L)[0, 1])
        else:
            corr = float("nan")
        axes.append(AxisRecovery(k, best, float(cos[best]), corr))
    strengths = np.array([c.strength for c in truth.components])
    ranked = np.sort(strengths)
    tie = bool(np.any(np.diff(ranked) <= _TIE_RTOL * np.maximum(ranked[1:], 1e-300)))
    if tie:
        order_match = None
    else:
        expected = list(np.argsort(-strengths, kind="stable")[:len(axes)])
        order_match = [a.component for a in axes] == expected
    return RecoveryReport(tuple(axes), order_match, tie)


# -- phrase recordings ---------------------------------------------------

CATEGORIES = (
    ("animals", True), ("people", True), ("fruits", True), ("bodyparts", True),
    ("clothing", False), ("tools", False), ("vehicles", False), ("household", False),
)

# (role, is_content); "target"/"other" nouns are resolved per phrase
TEMPLATES = {
    "standard": (("det", False), ("subject", True), ("verb", True), ("det", False), ("object", True)),
    "reverse": (("det", False), ("object", True), ("pronoun", False), ("verb", True),
                ("det", False), ("subject", True)),
}

PATTERN_DIRECTIONS = {
    "central": (0.0, 0.0, 1.0),
    "frontal": (0.0, 0.7, 0.7),
    "mid-frontal": (0.0, 0.45, 0.9),
    "left-frontal": (-0.55, 0.6, 0.55),
    "right-frontal": (0.55, 0.6, 0.55),
    "left-temporal": (-0.9, 0.0, 0.3),
    "right-temporal": (0.9, 0.0, 0.3),
    "occipital": (0.0, -0.8, 0.5),
    "left-occipital": (-0.4, -0.75, 0.45),
    "right-parietal": (0.55, -0.45, 0.7),
}


def spatial_blob(montage, pattern, width_rad=0.45, labels=None):
    """Gaussian bump over the scalp around a named direction, peak value 1."""
    direction = np.asarray(PATTERN_DIRECTIONS[pattern], dtype=np.float64)
    direction /= np.linalg.norm(direction)
    pos = montage.positions(labels)
    pos = pos / np.linalg.norm(pos, axis=1, keepdims=True)
    angle = np.arccos(np.clip(pos @ direction, -1.0, 1.0))
    return np.exp(-0.5 * (angle / width_rad) ** 2)


@dataclass(frozen=True)
class WordResponse:
    """Word-locked response: a positive Gaussian peak with optional negative
    flanking troughs, scaled to ``amplitude_uv`` at the pattern centre."""

    peak_ms: float = 300.0
    peak_width_ms: float = 60.0
    trough_ms: tuple = (25.0, 525.0)
    trough_width_ms: float = 50.0
    trough_ratio: float = 0.5
    amplitude_uv: float = 4.0
    pattern: str = "mid-frontal"

    def waveform(self, fs):
        end = max((self.peak_ms,) + tuple(self.trough_ms)) + 4 * max(self.peak_width_ms, self.trough_width_ms)
        t = np.arange(int(math.ceil(end * fs / 1000.0))) * 1000.0 / fs
        w = np.exp(-0.5 * ((t - self.peak_ms) / self.peak_width_ms) ** 2)
        for tm in self.trough_ms:
            w -= self.trough_ratio * np.exp(-0.5 * ((t - tm) / self.trough_width_ms) ** 2)
        return self.amplitude_uv * w


@dataclass(frozen=True)
class Effect:
    """Extra response added to words whose attributes match ``match``."""

    match: dict
    peak_ms: float
    amplitude_uv: float
    pattern: str
    width_ms: float = 40.0

    def applies(self, attrs):
        for k, v in self.match.items():
            allowed = v if isinstance(v, (list, tuple)) else (v,)
            if attrs.get(k) not in allowed:
                return False
        return True

    def waveform(self, fs):
        t = np.arange(int(math.ceil((self.peak_ms + 4 * self.width_ms) * fs / 1000.0))) * 1000.0 / fs
        return self.amplitude_uv * np.exp(-0.5 * ((t - self.peak_ms) / self.width_ms) ** 2)


DEMO_EFFECTS = (
    Effect({"role": "verb", "order": "reverse"}, 250.0, 3.0, "left-frontal"),
    Effect({"position": "initial"}, 150.0, 2.0, "occipital"),
    Effect({"biological": "yes", "target": "yes"}, 400.0, 1.5, "right-parietal"),
    Effect({"biological": "no", "target": "yes"}, 400.0, -1.5, "right-parietal"),
)


@dataclass(frozen=True)
class PhraseSpec:
    order: str = "standard"
    n_phrases: int = 48
    fs: float = 1000.0
    content_ms: float = 500.0
    function_ms: float = 110.0
    period_ms: float = 500.0
    blank_ms: float = 530.0
    lead_ms: float = 1000.0
    tail_ms: float = 2500.0
    response: WordResponse = WordResponse()
    effects: tuple = ()
    noise_uv: float = 5.0
    noise_color: str = "white"
    line_noise_uv: float = 0.0
    line_hz: float = 50.0
    drift_uv: float = 0.0
    seed: int = 0
    montage: Montage | None = None
    categories: tuple = CATEGORIES

    def __post_init__(self):
        if self.order not in TEMPLATES:
            raise ValueError(f"unknown phrase order {self.order!r}")
        if self.n_phrases < 1:
            raise ValueError("need at least one phrase")

    def duration_ms(self, kind_is_content):
        return self.content_ms if kind_is_content else self.function_ms

    @property
    def phrase_body_ms(self):
        return sum(self.duration_ms(c) for _, c in TEMPLATES[self.order])

    @property
    def trial_ms(self):
        return self.phrase_body_ms + self.period_ms + self.blank_ms


def word_attributes(order, role, category, biological, target_role):
    """Attributes of one content word in a phrase whose target noun (category
    carrier) has grammatical role ``target_role``."""
    positions = {"standard": {"subject": "initial", "verb": "medial", "object": "final"},
                 "reverse": {"object": "initial", "verb": "medial", "subject": "final"}}
    attrs = {"role": role, "order": order, "position": positions[order][role]}
    if role == "verb":
        attrs.update(target="yes", argument=target_role, category=category,
                     biological="yes" if biological else "no")
        label = f"verb-{order}-{target_role}-{category}"
    elif role == target_role:
        attrs.update(target="yes", category=category, biological="yes" if biological else "no")
        label = f"{role}-{order}-{category}"
    else:
        attrs.update(target="no")
        label = f"filler-{role}-{order}"
    return label, attrs


def synth_phrase_recording(spec=PhraseSpec()):
    """Render a continuous recording and its event list.

    Phrase ``i`` carries category ``i % 8`` on its subject (even blocks of
    eight) or object (odd blocks).  Each phrase emits a ``phrase-<order>``
    event at its first word plus one event per content word.
    """
    montage = spec.montage or synthetic_montage()
    fs = spec.fs
    rng = np.random.default_rng(spec.seed)
    template = TEMPLATES[spec.order]
    n_total = int(math.ceil((spec.lead_ms + spec.n_phrases * spec.trial_ms + spec.tail_ms) * fs / 1000.0))
    labels = montage.labels
    data = np.zeros((len(labels), n_total))

    base_spatial = spatial_blob(montage, spec.response.pattern)
    base_wave = spec.response.waveform(fs)
    effect_parts = [(e, spatial_blob(montage, e.pattern), e.waveform(fs)) for e in spec.effects]

    def add(onset, spatial, wave):
        stop = min(n_total, onset + len(wave))
        data[:, onset:stop] += np.outer(spatial, wave[:stop - onset])

    events = []
    t_ms = spec.lead_ms
    for i in range(spec.n_phrases):
        category, bio = spec.categories[i % len(spec.categories)]
        target_role = "subject" if (i // len(spec.categories)) % 2 == 0 else "object"
        events.append(Event(int(round(t_ms * fs / 1000.0)), f"phrase-{spec.order}",
                            {"role": "phrase", "order": spec.order, "index": str(i)}))
        for role, is_content in template:
            onset = int(round(t_ms * fs / 1000.0))
            if is_content:
                label, attrs = word_attributes(spec.order, role, category, bio, target_role)
                attrs["index"] = str(i)
                events.append(Event(onset, label, attrs))
                add(onset, base_spatial, base_wave)
                for eff, sp, wv in effect_parts:
                    if eff.applies(attrs):
                        add(onset, sp, wv)
            t_ms += spec.duration_ms(is_content)
        t_ms += spec.period_ms + spec.blank_ms

    if spec.noise_uv > 0:
        data += colored_noise(rng, data.shape, spec.noise_uv, spec.noise_color)
    t = np.arange(n_total) / fs
    if spec.line_noise_uv:
        phase = rng.uniform(0, 2 * np.pi, size=(len(labels), 1))
        data += spec.line_noise_uv * np.sin(2 * np.pi * spec.line_hz * t[None, :] + phase)
    if spec.drift_uv:
        slopes = rng.uniform(-1, 1, size=(len(labels), 1))
        data += spec.drift_uv * slopes * (t[None, :] / t[-1] - 0.5)
    return Recording(labels, fs, data, 0.0), EventList(events)


def phrase_truth(spec):
    """JSON-ready description of what :func:`synth_phrase_recording` planted."""
    return {
        "format": "corrdyn-phrase-truth", "version": 1, "order": spec.order,
        "n_phrases": spec.n_phrases, "fs": spec.fs, "seed": spec.seed,
        "timing_ms": {"content": spec.content_ms, "function": spec.function_ms,
                      "period": spec.period_ms, "blank": spec.blank_ms, "lead": spec.lead_ms},
        "response": spec.response.__dict__ | {"trough_ms": list(spec.response.trough_ms)},
        "effects": [e.__dict__ for e in spec.effects],
        "noise_uv": spec.noise_uv, "line_noise_uv": spec.line_noise_uv, "drift_uv": spec.drift_uv,
    }
