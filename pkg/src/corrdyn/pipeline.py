"""Config-driven analysis runs.

A run preprocesses every subject, forms grand-mean condition ERPs, builds
one analysis table per recipe, fits a correspondence analysis, derives
eigenvector profiles and runs the requested comparisons.  Everything is
collected into a :class:`ReportBundle` whose files, including the manifest,
are a pure function of the config and seed.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .ca import (ENCODINGS, LAYOUT_CONDITIONS, LAYOUT_ELECTRODES, CaSolution, correspondence_analysis,
                 encode_nonnegative, flip_axes, project_supplementary_rows)
from .matrices import build_condition_matrix, build_electrode_time_matrix
from .model import (TimeWindow, condition_attributes, load_events, load_montage, load_recording,
                    save_montage, select_channels, synthetic_montage)
from .preprocess import (ConditionERP, PreprocessSettings, apply_filters, baseline_correct, epoch,
                         grand_mean, reject_artifacts)
from .profiles import (contribution_curves, detect_extrema, group_representative_electrodes,
                       time_coordinate_curve)
from .stats import anova_oneway, cosine_table, pearson_with_p, sign_test
from .synth import DEMO_EFFECTS, PhraseSpec, synth_phrase_recording

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

logger = logging.getLogger(__name__)

SCHEMA = "corrdyn-pipeline/1"
MANIFEST_SCHEMA = "corrdyn-manifest/1"
OUTPUT_ROOT_ENV = "CORRDYN_OUTPUT_ROOT"
SOURCE_WORDS = "words"
SOURCE_PHRASE = "phrase"


class ConfigError(ValueError):
    pass


class RecipeError(ValueError):
    pass


# -- recipes -------------------------------------------------------------

@dataclass(frozen=True)
class Recipe:
    """One analysis: which rows, which window and how to encode them.

    ``match`` keeps conditions whose attributes take one of the listed values
    for every key; ``exclude`` then drops conditions matching all of its
    keys.  ``group_by`` averages the selected conditions sharing a value of
    that attribute into one row.  Phrase recipes analyse the grand-mean
    ``phrase-<order>`` ERP as an electrodes x time table.
    """

    name: str
    source: str = SOURCE_WORDS
    match: dict = field(default_factory=dict)
    exclude: dict = field(default_factory=dict)
    group_by: str | None = None
    order: str = "standard"
    window: TimeWindow = TimeWindow(50.0, 500.0)
    bin_ms: float = 2.0
    encoding: str = "global-shift"
    n_axes: int | None = 5
    figure_axes: int = 3
    smooth_ms: float = 10.0
    prominence: float = 0.2
    top_frac: float = 0.1
    corr_threshold: float = 0.8

    def __post_init__(self):
        if self.source not in (SOURCE_WORDS, SOURCE_PHRASE):
            raise ConfigError(f"recipe {self.name}: unknown source {self.source!r}")
        if self.encoding not in ENCODINGS:
            raise ConfigError(f"recipe {self.name}: unknown encoding {self.encoding!r}")
        if self.bin_ms <= 0:
            raise ConfigError(f"recipe {self.name}: bin_ms must be positive")
        if "/" in self.name or not self.name:
            raise ConfigError(f"invalid recipe name {self.name!r}")

    @property
    def layout(self):
        return LAYOUT_ELECTRODES if self.source == SOURCE_PHRASE else LAYOUT_CONDITIONS

    def to_dict(self):
        d = {k: copy.deepcopy(v) for k, v in self.__dict__.items()}
        d["window"] = [self.window.start_ms, self.window.end_ms]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["window"] = _window(d.get("window", [50.0, 500.0]), "window")
        return cls(**d)


_NOUNS = {"role": ["subject", "object"], "target": "yes"}
_PHRASE = {"source": SOURCE_PHRASE, "window": TimeWindow(0.0, 1850.0), "bin_ms": 10.0}

PRESETS = {
    "overall-standard": dict(_PHRASE, order="standard"),
    "overall-reverse": dict(_PHRASE, order="reverse"),
    "content-words-64": dict(match={"target": "yes"}),
    "nouns+std-verbs": dict(match={"target": "yes"}, exclude={"role": "verb", "order": "reverse"}),
    "all-verbs": dict(match={"role": "verb"}),
    "all-nouns": dict(match=_NOUNS),
    "categories-mean": dict(match=_NOUNS, group_by="category"),
    "verbs-standard": dict(match={"role": "verb", "order": "standard"}),
    "verbs-reverse": dict(match={"role": "verb", "order": "reverse"}),
}

_RECIPE_KEYS = {f for f in Recipe.__dataclass_fields__} - {"name"}


def make_recipe(name=None, preset=None, **overrides):
    """Recipe from a named preset plus overrides."""
    unknown = set(overrides) - _RECIPE_KEYS
    if unknown:
        raise ConfigError(f"unknown recipe keys: {sorted(unknown)}")
    base = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        base = copy.deepcopy(PRESETS[preset])
    base.update(overrides)
    if "window" in base:
        base["window"] = _window(base["window"], "window")
    return Recipe(name=name or preset, **base)


def _window(value, what):
    if isinstance(value, TimeWindow):
        return value
    if isinstance(value, str):
        return TimeWindow.parse(value)
    try:
        a, b = value
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what} must be [start, end] or 'start:end', got {value!r}") from exc
    return TimeWindow(float(a), float(b))


def matches(attrs, criteria):
    for key, want in criteria.items():
        allowed = want if isinstance(want, (list, tuple)) else (want,)
        if attrs.get(key) not in {str(a) for a in allowed}:
            return False
    return True


def select_rows(erps, recipe):
    """Condition ERPs a word recipe analyses, in label order (grouped rows
    in group-value order)."""
    rows = [
        erps[lab] for lab in sorted(erps)
        if matches(erps[lab].attributes, recipe.match)
        and not (recipe.exclude and matches(erps[lab].attributes, recipe.exclude))
    ]
    if recipe.group_by:
        groups = {}
        for e in rows:
            key = e.attributes.get(recipe.group_by)
            if key is None:
                raise RecipeError(f"recipe {recipe.name}: condition {e.condition_label} lacks "
                                  f"attribute {recipe.group_by!r}")
            groups.setdefault(key, []).append(e)
        grouped = []
        for key in sorted(groups):
            members = groups[key]
            shared = {k: v for k, v in members[0].attributes.items()
                      if all(m.attributes.get(k) == v for m in members)}
            g = grand_mean(members, label=str(key))
            grouped.append(replace(g, attributes=shared | {recipe.group_by: key}))
        rows = grouped
    if len(rows) < 2:
        raise RecipeError(f"recipe {recipe.name}: fewer than 2 rows ({len(rows)} selected)")
    return rows


def build_recipe_matrix(recipe, word_erps, phrase_erps):
    if recipe.source == SOURCE_PHRASE:
        label = f"phrase-{recipe.order}"
        if label not in phrase_erps:
            raise RecipeError(f"recipe {recipe.name}: no {label!r} ERP available")
        m = build_electrode_time_matrix(phrase_erps[label], recipe.window, recipe.bin_ms)
        if m.shape[0] < 2:
            raise RecipeError(f"recipe {recipe.name}: fewer than 2 rows ({m.shape[0]} electrodes)")
        return m
    return build_condition_matrix(select_rows(word_erps, recipe), recipe.window, recipe.bin_ms)


# -- config --------------------------------------------------------------

@dataclass(frozen=True)
class SubjectInput:
    id: str
    recordings: tuple  # ((recording path, events path), ...)


@dataclass(frozen=True)
class SynthSettings:
    subjects: int = 4
    orders: tuple = ("standard", "reverse")
    n_phrases: int = 48
    noise_uv: float = 5.0
    noise_color: str = "white"
    line_noise_uv: float = 0.0
    drift_uv: float = 0.0
    effects: str = "demo"

    def phrase_spec(self, order, seed, montage):
        effects = DEMO_EFFECTS if self.effects == "demo" else ()
        return PhraseSpec(order=order, n_phrases=self.n_phrases, noise_uv=self.noise_uv,
                          noise_color=self.noise_color, line_noise_uv=self.line_noise_uv,
                          drift_uv=self.drift_uv, effects=effects, seed=seed, montage=montage)


@dataclass(frozen=True, eq=False)
class PipelineConfig:
    raw: dict
    seed: int
    output_dir: Path
    preprocess: PreprocessSettings
    phrase_epoch: TimeWindow
    recipes: tuple
    comparisons: tuple
    channels: object = "central"
    montage_path: Path | None = None
    subjects: tuple = ()
    synth: SynthSettings | None = None
    jobs: int = 1
    base_dir: Path | None = None

    @property
    def config_sha256(self):
        return hashlib.sha256(_canonical(self.raw).encode()).hexdigest()


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def demo_config_path():
    return Path(str(resources.files("corrdyn") / "data" / "demo.toml"))


def read_config_file(path):
    """Parse a TOML config, or the config embedded in a run manifest."""
    path = Path(path)
    if str(path) == "demo":
        path = demo_config_path()
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        doc = json.loads(text)
        if doc.get("schema") != MANIFEST_SCHEMA:
            raise ConfigError(f"{path}: not a corrdyn manifest")
        base = doc.get("base_dir")
        return doc["config"], Path(base) if base else path.parent
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return raw, path.parent.resolve()


def load_config(path, seed=None, output_dir=None, jobs=None):
    raw, base = read_config_file(path)
    return parse_config(raw, base, seed=seed, output_dir=output_dir, jobs=jobs)


def _settings(section):
    known = {"hp", "lp", "notch", "notch_width", "notch_order", "slope", "zero_phase_slope",
             "reject_uv", "baseline", "epoch", "phrase_epoch", "channels"}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown [preprocess] keys: {sorted(unknown)}")
    kw = {}
    for key in ("hp", "lp", "notch"):
        if key in section:
            v = section[key]
            kw[key] = None if v in (0, False, "off", "none") else float(v)
    for key, cast in (("notch_width", float), ("notch_order", int), ("slope", int), ("reject_uv", float),
                      ("zero_phase_slope", bool)):
        if key in section:
            kw[key] = cast(section[key])
    for key in ("baseline", "epoch"):
        if key in section:
            kw[key] = _window(section[key], key)
    settings = PreprocessSettings(**kw)
    if not settings.epoch.contains(settings.baseline):
        raise ConfigError(f"baseline {settings.baseline} outside epoch {settings.epoch}")
    return settings


def parse_config(raw, base_dir=None, seed=None, output_dir=None, jobs=None):
    raw = copy.deepcopy(raw)
    if raw.get("schema", SCHEMA) != SCHEMA:
        raise ConfigError(f"unsupported schema {raw.get('schema')!r}; expected {SCHEMA!r}")
    raw["schema"] = SCHEMA
    if seed is not None:
        raw["seed"] = int(seed)
    raw.setdefault("seed", 0)
    base_dir = Path(base_dir) if base_dir is not None else Path.cwd()

    prep = raw.get("preprocess", {})
    settings = _settings(prep)
    phrase_epoch = _window(prep.get("phrase_epoch", [-250.0, 1850.0]), "phrase_epoch")
    if not phrase_epoch.contains(settings.baseline):
        raise ConfigError(f"baseline {settings.baseline} outside phrase epoch {phrase_epoch}")

    recipes = []
    for entry in raw.get("recipe", []):
        entry = dict(entry)
        name, preset = entry.pop("name", None), entry.pop("preset", None)
        if name is None and preset is None:
            raise ConfigError("each [[recipe]] needs a name or a preset")
        recipes.append(make_recipe(name, preset, **entry))
    if not recipes:
        raise ConfigError("config declares no [[recipe]]")
    names = [r.name for r in recipes]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate recipe names in {names}")
    for r in recipes:
        bounds = phrase_epoch if r.source == SOURCE_PHRASE else settings.epoch
        if not bounds.contains(r.window):
            raise ConfigError(f"recipe {r.name}: window {r.window} outside epoch {bounds}")

    comparisons = tuple(dict(c) for c in raw.get("compare", []))
    for c in comparisons:
        if c.get("kind") not in COMPARISONS:
            raise ConfigError(f"unknown comparison kind {c.get('kind')!r}; choose from {sorted(COMPARISONS)}")
        refs = ("a", "b") if c["kind"] == "cosine" else ("recipe",)
        for key in refs:
            if c.get(key) not in names:
                raise ConfigError(f"{c['kind']} comparison refers to unknown recipe {c.get(key)!r}")

    out = output_dir or raw.get("output", {}).get("dir", "corrdyn-out")
    out = Path(out)
    if not out.is_absolute():
        root = os.environ.get(OUTPUT_ROOT_ENV)
        out = (Path(root) / out) if root else (Path.cwd() / out)

    inputs = raw.get("input")
    synth = raw.get("synth")
    if (inputs is None) == (synth is None):
        raise ConfigError("config needs exactly one of [input] or [synth]")
    subjects, synth_settings, montage_path = (), None, None
    if inputs is not None:
        if "montage" in inputs:
            montage_path = (base_dir / inputs["montage"]).resolve()
        subs = []
        for s in inputs.get("subject", []):
            recs = s.get("recordings") or [{"recording": s["recording"], "events": s["events"]}]
            subs.append(SubjectInput(str(s["id"]), tuple(
                ((base_dir / r["recording"]).resolve(), (base_dir / r["events"]).resolve()) for r in recs)))
        if not subs:
            raise ConfigError("[input] lists no subjects")
        subjects = tuple(subs)
    else:
        kw = dict(synth)
        if "orders" in kw:
            kw["orders"] = tuple(kw["orders"])
        try:
            synth_settings = SynthSettings(**kw)
        except TypeError as exc:
            raise ConfigError(f"bad [synth] section: {exc}") from exc

    return PipelineConfig(
        raw=raw, seed=int(raw["seed"]), output_dir=out, preprocess=settings, phrase_epoch=phrase_epoch,
        recipes=tuple(recipes), comparisons=comparisons, channels=prep.get("channels", "central"),
        montage_path=montage_path, subjects=subjects, synth=synth_settings,
        jobs=int(jobs if jobs is not None else raw.get("jobs", 1)),
        base_dir=base_dir if inputs is not None else None,
    )


# -- subjects ------------------------------------------------------------

def derived_seed(*keys):
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def subject_seeds(config):
    """Per-recording seeds of a synthetic run, derived from the run seed."""
    if config.synth is None:
        return {}
    return {f"s{i + 1:02d}/{order}": derived_seed(config.seed, i, oi)
            for i in range(config.synth.subjects) for oi, order in enumerate(config.synth.orders)}


def channel_selection(montage, choice):
    if choice == "central":
        return montage.central_labels
    if choice == "all":
        return montage.labels
    return tuple(choice)


@dataclass(frozen=True, eq=False)
class SubjectData:
    id: str
    words: dict
    phrases: dict
    n_rejected: int = 0


def _accumulate(acc, epoch_sets, settings):
    rejected = 0
    for label, eps in epoch_sets.items():
        eps = reject_artifacts(eps, settings.reject_uv)
        rejected += eps.n_rejected
        if eps.n_kept == 0:
            continue
        total, n, _ = acc.get(label, (0.0, 0, None))
        acc[label] = (total + eps.data[eps.kept].sum(axis=0), n + eps.n_kept, eps)
    return rejected


def _finish(acc, attrs, settings):
    out = {}
    for label, (total, n, eps) in sorted(acc.items()):
        erp = ConditionERP(label, eps.channels, eps.window, eps.fs, total / n, n,
                           attributes=dict(attrs.get(label, {})))
        out[label] = baseline_correct(erp, settings.baseline)
    return out


def process_subject(subject_id, recordings, settings, phrase_epoch, channels):
    """Filter each ``(Recording, EventList)`` once, then epoch word and phrase
    events separately; epochs of a condition pool across recordings."""
    words, phrases, all_events = {}, {}, []
    rejected = 0
    for rec, events in recordings:
        rec = apply_filters(select_channels(rec, channels), settings)
        evs = list(events)
        all_events.extend(evs)
        w = [e for e in evs if e.attributes.get("role") != "phrase"]
        p = [e for e in evs if e.attributes.get("role") == "phrase"]
        rejected += _accumulate(words, epoch(rec, w, settings.epoch), settings)
        rejected += _accumulate(phrases, epoch(rec, p, phrase_epoch), settings)
    attrs = condition_attributes(all_events)
    return SubjectData(subject_id, _finish(words, attrs, settings), _finish(phrases, attrs, settings), rejected)


def grand_means(subjects, key):
    by_label = {}
    for s in subjects:
        for lab, erp in getattr(s, key).items():
            by_label.setdefault(lab, []).append(erp)
    return {lab: grand_mean(erps) for lab, erps in sorted(by_label.items())}


# -- recipe results ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AxisProfile:
    axis: int
    times_ms: np.ndarray
    curve: np.ndarray          # time CTR (conditions) or time coordinates (electrodes)
    extrema: tuple
    curves: object = None      # ElectrodeCurves for conditions layout
    groups: tuple = ()


def analyse_profiles(sol, recipe):
    """Per-axis curves, extrema and electrode groups used by tables and
    figures."""
    out = []
    for k in range(min(recipe.figure_axes, sol.n_axes)):
        if sol.layout == LAYOUT_ELECTRODES:
            times, values = time_coordinate_curve(sol, k)
            ext = detect_extrema(times, values, recipe.smooth_ms, recipe.prominence)
            out.append(AxisProfile(k, times, values, tuple(ext)))
        else:
            if sol.encoding == "doubling":
                break
            curves = contribution_curves(sol, k)
            tc = curves.time_ctr()
            ext = [e for e in detect_extrema(curves.times_ms, tc, recipe.smooth_ms, recipe.prominence)
                   if e.polarity == "max"]
            groups = group_representative_electrodes(curves, recipe.top_frac, recipe.corr_threshold)
            out.append(AxisProfile(k, curves.times_ms, tc, tuple(ext), curves, tuple(groups)))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class RecipeResult:
    recipe: Recipe
    solution: CaSolution
    profiles: tuple
    matrix: object = None
    encoder: object = None


def orient_by_field_power(sol, matrix):
    """Flip electrodes x time axes so time coordinates correlate positively
    with global field power (spatial std of the raw ERP per time bin).
    Doubled tables have no one-to-one time columns and are left as fitted."""
    if sol.encoding == "doubling" or sol.n_axes == 0:
        return sol
    gfp = np.asarray(matrix.values)[:, sol.kept_cols][sol.kept_rows].std(axis=0)
    gfp = gfp - gfp.mean()
    score = gfp @ (sol.col_coords - sol.col_coords.mean(axis=0))
    out = flip_axes(sol, np.where(score < 0, -1.0, 1.0))
    out.provenance["orientation"] = "field-power"
    return out


def run_recipe(recipe, word_erps, phrase_erps):
    m = build_recipe_matrix(recipe, word_erps, phrase_erps)
    encoded, enc = encode_nonnegative(m, recipe.encoding)
    limit = min(encoded.shape) - 1
    n_axes = None if recipe.n_axes is None else min(recipe.n_axes, limit)
    sol = correspondence_analysis(encoded, n_axes)
    if sol.layout == LAYOUT_ELECTRODES:
        sol = orient_by_field_power(sol, m)
    sol.provenance["encoder"] = {"strategy": enc.strategy, "shift": enc.shift_}
    sol.provenance["recipe"] = recipe.name
    return RecipeResult(recipe, sol, analyse_profiles(sol, recipe), m, enc)


# -- comparisons ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ComparisonResult:
    id: str
    kind: str
    spec: dict
    result: dict
    table: object = None


def _word_result(results, name, kind):
    res = results.get(name)
    if res is None:
        raise RecipeError(f"{kind}: recipe {name!r} did not produce a solution")
    if res.recipe.source != SOURCE_WORDS:
        raise RecipeError(f"{kind}: recipe {name!r} is not a condition analysis")
    return res


def _axis(spec, sol):
    axis = int(spec.get("axis", 1)) - 1
    if not 0 <= axis < sol.n_axes:
        raise RecipeError(f"axis {axis + 1} not available (solution has {sol.n_axes})")
    return axis


def project_erps(res, erps):
    """Supplementary coordinates of condition ERPs in a recipe's space."""
    m = build_condition_matrix(erps, res.recipe.window, res.recipe.bin_ms)
    return project_supplementary_rows(res.solution, res.encoder.transform(m.values))


def _cosine(spec, results, ctx):
    a, b = (results.get(spec[k]) for k in ("a", "b"))
    if a is None or b is None:
        raise RecipeError("cosine: a referenced recipe did not produce a solution")
    t = cosine_table(a.solution, b.solution, spec.get("ka"), spec.get("kb"))
    return {"n_shared": t.n_shared, "values": t.values.tolist()}, t


def _pearson(spec, results, ctx):
    res = _word_result(results, spec["recipe"], "pearson")
    k = _axis(spec, res.solution)
    pair = spec.get("pair_by", "category")
    means = []
    for side in ("x", "y"):
        erps = [e for lab, e in sorted(ctx["words"].items()) if matches(e.attributes, spec[side])]
        if not erps:
            raise RecipeError(f"pearson: no conditions match {side}={spec[side]}")
        coords = project_erps(res, erps)[:, k]
        by = {}
        for e, c in zip(erps, coords):
            by.setdefault(e.attributes.get(pair), []).append(c)
        means.append({key: float(np.mean(v)) for key, v in by.items() if key is not None})
    keys = sorted(set(means[0]) & set(means[1]))
    r = pearson_with_p([means[0][q] for q in keys], [means[1][q] for q in keys])
    return {"r": r.statistic, "p_value": r.p_value, "n": r.n, "df": list(r.df), "pairs": keys,
            "x": [means[0][q] for q in keys], "y": [means[1][q] for q in keys]}, None


def _anova(spec, results, ctx):
    res = _word_result(results, spec["recipe"], "anova")
    k = _axis(spec, res.solution)
    erps = [e for lab, e in sorted(ctx["words"].items()) if matches(e.attributes, spec.get("project", {}))]
    if not erps:
        raise RecipeError("anova: no conditions to project")
    coords = project_erps(res, erps)[:, k]
    by = {}
    for e, c in zip(erps, coords):
        by.setdefault(e.attributes.get(spec["group_by"]), []).append(float(c))
    keys = sorted(key for key in by if key is not None)
    t = anova_oneway([by[q] for q in keys])
    return {"F": t.statistic, "p_value": t.p_value, "n": t.n, "df": list(t.df), "groups": keys,
            "group_n": [len(by[q]) for q in keys], "group_mean": [float(np.mean(by[q])) for q in keys]}, None


def _sign(spec, results, ctx):
    res = _word_result(results, spec["recipe"], "sign-test")
    k = _axis(spec, res.solution)
    diffs, ids = [], []
    for subj in ctx["subjects"]:
        try:
            rows = select_rows(subj.words, res.recipe)
        except RecipeError:
            continue
        a = [i for i, e in enumerate(rows) if matches(e.attributes, spec["a"])]
        b = [i for i, e in enumerate(rows) if matches(e.attributes, spec["b"])]
        if not a or not b:
            continue
        coords = project_erps(res, rows)[:, k]
        diffs.append(float(coords[a].mean() - coords[b].mean()))
        ids.append(subj.id)
    if not diffs:
        raise RecipeError("sign-test: no subject has conditions on both sides")
    t = sign_test(diffs)
    return {"positive": t.statistic, "p_value": t.p_value, "n": t.n, "subjects": ids, "diffs": diffs}, None


COMPARISONS = {"cosine": _cosine, "pearson": _pearson, "anova": _anova, "sign-test": _sign}


def run_comparison(index, spec, results, ctx):
    cid = f"{index + 1:02d}-{spec['kind']}"
    result, table = COMPARISONS[spec["kind"]](spec, results, ctx)
    return ComparisonResult(cid, spec["kind"], dict(spec), result, table)


# -- run -----------------------------------------------------------------

@dataclass(eq=False)
class ReportBundle:
    montage: object
    results: list
    comparisons: list
    errors: list
    seeds: dict = field(default_factory=dict)
    config: PipelineConfig | None = None
    n_rejected: dict = field(default_factory=dict)

    def result(self, name):
        for r in self.results:
            if r.recipe.name == name:
                return r
        raise KeyError(name)

    @property
    def ok(self):
        return not self.errors


def load_subject(subject, montage, settings, phrase_epoch, channels):
    recs = []
    for rec_path, ev_path in subject.recordings:
        recs.append((load_recording(rec_path), load_events(ev_path)))
    return process_subject(subject.id, recs, settings, phrase_epoch, channels)


def synth_subject(i, config, montage, channels, seeds):
    sid = f"s{i + 1:02d}"
    recs = []
    for order in config.synth.orders:
        spec = config.synth.phrase_spec(order, seeds[f"{sid}/{order}"], montage)
        recs.append(synth_phrase_recording(spec))
    return process_subject(sid, recs, config.preprocess, config.phrase_epoch, channels)


def _map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def run_pipeline(config, write=True):
    """Execute the configured run; with ``write`` the bundle is emitted to
    ``config.output_dir``.  Recipe and comparison failures are collected in
    ``bundle.errors``; I/O errors propagate."""
    seeds = subject_seeds(config)
    if config.synth is not None:
        montage = load_montage(config.montage_path) if config.montage_path else synthetic_montage()
    else:
        if config.montage_path is None:
            raise ConfigError("[input] needs a montage")
        montage = load_montage(config.montage_path)
    channels = channel_selection(montage, config.channels)

    if config.synth is not None:
        subjects = _map(lambda i: synth_subject(i, config, montage, channels, seeds),
                        list(range(config.synth.subjects)), config.jobs)
    else:
        subjects = _map(lambda s: load_subject(s, montage, config.preprocess, config.phrase_epoch, channels),
                        list(config.subjects), config.jobs)
    words = grand_means(subjects, "words")
    phrases = grand_means(subjects, "phrases")

    errors = []

    def attempt(recipe):
        try:
            return run_recipe(recipe, words, phrases)
        except (ValueError, IndexError, KeyError) as exc:
            return exc

    results = []
    for recipe, out in zip(config.recipes, _map(attempt, list(config.recipes), config.jobs)):
        if isinstance(out, Exception):
            errors.append(f"recipe {recipe.name}: {out}")
            logger.error("recipe %s failed: %s", recipe.name, out)
        else:
            results.append(out)

    by_name = {r.recipe.name: r for r in results}
    ctx = {"words": words, "subjects": subjects}
    comparisons = []
    for i, spec in enumerate(config.comparisons):
        try:
            comparisons.append(run_comparison(i, spec, by_name, ctx))
        except (ValueError, IndexError, KeyError) as exc:
            errors.append(f"comparison {i + 1} ({spec.get('kind')}): {exc}")
            logger.error("comparison %d failed: %s", i + 1, exc)

    bundle = ReportBundle(montage, results, comparisons, errors, seeds, config,
                          {s.id: s.n_rejected for s in subjects})
    if write:
        write_bundle(bundle, config.output_dir)
    return bundle


# -- bundle I/O ----------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def versions():
    import scipy
    import sklearn
    return {"corrdyn": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__, "python": platform.python_version()}


def _json_dump(obj, path):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return Path(path)


def write_bundle(bundle, out_dir):
    from .report import emit_figures, emit_tables

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_tables(bundle, out_dir)
    emit_figures(bundle, out_dir)
    write_manifest(bundle, out_dir)
    return out_dir


def write_manifest(bundle, out_dir):
    out_dir = Path(out_dir)
    files = sorted(p for p in out_dir.rglob("*") if p.is_file() and p.name != "manifest.json")
    cfg = bundle.config
    inputs = {}
    if cfg is not None:
        for s in cfg.subjects:
            for rec, ev in s.recordings:
                for p in (rec, ev):
                    inputs[str(p)] = _sha256(p)
        if cfg.montage_path:
            inputs[str(cfg.montage_path)] = _sha256(cfg.montage_path)
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "config": cfg.raw if cfg else None,
        "config_sha256": cfg.config_sha256 if cfg else None,
        "base_dir": str(cfg.base_dir) if cfg is not None and cfg.base_dir is not None else None,
        "seed": cfg.seed if cfg else None,
        "seeds": bundle.seeds,
        "versions": versions(),
        "recipes": [r.recipe.name for r in bundle.results],
        "errors": list(bundle.errors),
        "inputs": inputs,
        "files": {p.relative_to(out_dir).as_posix(): _sha256(p) for p in files},
    }
    return _json_dump(manifest, out_dir / "manifest.json")


def load_bundle(directory):
    """Read back what :func:`write_bundle` wrote (solutions, recipes,
    comparison results and montage); profiles are recomputed."""
    directory = Path(directory)
    index = json.loads((directory / "bundle.json").read_text(encoding="utf-8"))
    montage = load_montage(directory / "montage.csv")
    results = []
    for entry in index["recipes"]:
        recipe = Recipe.from_dict(entry["recipe"])
        sol = CaSolution.from_json(directory / entry["solution"])
        results.append(RecipeResult(recipe, sol, analyse_profiles(sol, recipe)))
    comparisons = [ComparisonResult(c["id"], c["kind"], c["spec"], c["result"]) for c in index["comparisons"]]
    return ReportBundle(montage, results, comparisons, list(index["errors"]), index.get("seeds", {}))


def save_bundle_index(bundle, out_dir):
    out_dir = Path(out_dir)
    index = {
        "format": "corrdyn-bundle", "version": 1,
        "recipes": [{"name": r.recipe.name, "recipe": r.recipe.to_dict(), "layout": r.solution.layout,
                     "solution": f"recipes/{r.recipe.name}/solution.json"} for r in bundle.results],
        "comparisons": [{"id": c.id, "kind": c.kind, "spec": c.spec, "result": c.result}
                        for c in bundle.comparisons],
        "errors": list(bundle.errors),
        "seeds": bundle.seeds,
        "rejected_epochs": bundle.n_rejected,
    }
    save_montage(bundle.montage, out_dir / "montage.csv")
    return _json_dump(index, out_dir / "bundle.json")
