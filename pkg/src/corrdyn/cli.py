"""Command-line entry point: ``corrdyn synth|preprocess|run|compare|figures``."""

from __future__ import annotations

import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import click

from .ca import CaSolution
from .model import (TimeWindow, load_montage, save_events, save_montage, save_recording,
                    synthetic_montage)
from .pipeline import (OUTPUT_ROOT_ENV, ConfigError, SynthSettings, channel_selection, grand_means,
                       load_subject, synth_subject, derived_seed, load_bundle, load_config,
                       read_config_file, run_pipeline, subject_seeds)
from .report import emit_figures
from .stats import cosine_table
from .synth import phrase_truth, plant_components, random_ground_truth, synth_phrase_recording

logger = logging.getLogger("corrdyn")


def _out_dir(value, default):
    out = Path(value or default)
    if not out.is_absolute() and os.environ.get(OUTPUT_ROOT_ENV):
        out = Path(os.environ[OUTPUT_ROOT_ENV]) / out
    out.mkdir(parents=True, exist_ok=True)
    return out


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more log output.")
def main(verbose):
    """Correspondence analysis of evoked-response recordings."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _fail(msg):
    click.echo(f"error: {msg}", err=True)
    sys.exit(2)


@main.command()
@click.argument("spec", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), help="Output directory.")
@click.option("--seed", type=int, help="Override the spec's seed.")
def synth(spec, out, seed):
    """Generate synthetic data described by SPEC (a TOML file).

    ``kind = "phrases"`` writes one recording and event list per subject and
    phrase order plus a ready-to-run ``pipeline.toml``; ``kind =
    "components"`` writes planted condition ERPs.  Both write the montage
    and ``truth.json``.
    """
    raw = read_config_file(spec)[0]
    section = dict(raw.get("synth", {}))
    kind = section.pop("kind", "phrases")
    seed = int(raw.get("seed", 0) if seed is None else seed)
    out = _out_dir(out, raw.get("output", {}).get("dir", "corrdyn-synth"))
    montage = synthetic_montage()
    save_montage(montage, out / "montage.csv")

    if kind == "phrases":
        if "orders" in section:
            section["orders"] = tuple(section["orders"])
        try:
            settings = SynthSettings(**section)
        except TypeError as exc:
            _fail(f"bad [synth] section: {exc}")
        truth, subjects = {"kind": "phrases", "seed": seed, "recordings": []}, []
        for i in range(settings.subjects):
            sid = f"s{i + 1:02d}"
            recs = []
            for oi, order in enumerate(settings.orders):
                ps = settings.phrase_spec(order, derived_seed(seed, i, oi), montage)
                rec, events = synth_phrase_recording(ps)
                stem = f"{sid}_{order}"
                save_recording(rec, out / f"{stem}.csv")
                save_events(events, out / f"{stem}_events.csv")
                recs.append({"recording": f"{stem}.csv", "events": f"{stem}_events.csv"})
                truth["recordings"].append(dict(phrase_truth(ps), subject=sid, file=f"{stem}.csv"))
            subjects.append((sid, recs))
        (out / "truth.json").write_text(json.dumps(truth, sort_keys=True, indent=1) + "\n", encoding="utf-8")
        _write_input_config(out, seed, subjects)
    elif kind == "components":
        n_cond = int(section.get("n_conditions", 64))
        window = TimeWindow(*section.get("window", (50.0, 500.0)))
        fs = float(section.get("fs", 1000.0))
        electrodes = montage.central_labels[: int(section.get("n_electrodes", len(montage.central_labels)))]
        n_t = window.n_samples(fs)
        try:
            gt = random_ground_truth(n_cond, len(electrodes), n_t, tuple(section.get("variances", (5.0, 3.0, 1.0))),
                                     snr=section.get("snr"), noise_sigma=float(section.get("noise_sigma", 0.0)),
                                     seed=seed, noise_color=section.get("noise_color", "white"))
        except ValueError as exc:
            _fail(str(exc))
        conditions = [f"c{i + 1:02d}" for i in range(n_cond)]
        erps, gt = plant_components(gt, conditions, electrodes, window, fs)
        (out / "erps").mkdir(exist_ok=True)
        for e in erps:
            save_recording(e.to_recording(), out / "erps" / f"{e.condition_label}.csv")
        gt.to_json(out / "truth.json")
    else:
        _fail(f"unknown synth kind {kind!r}; use 'phrases' or 'components'")
    click.echo(str(out))


def _write_input_config(out, seed, subjects):
    lines = ['schema = "corrdyn-pipeline/1"', f"seed = {seed}", "", "[output]", 'dir = "corrdyn-out"', "",
             "[input]", 'montage = "montage.csv"', ""]
    for sid, recs in subjects:
        lines += ["[[input.subject]]", f'id = "{sid}"', "recordings = ["]
        lines += [f'  {{ recording = "{r["recording"]}", events = "{r["events"]}" }},' for r in recs]
        lines += ["]", ""]
    for preset in ("overall-standard", "content-words-64", "categories-mean"):
        lines += ["[[recipe]]", f'preset = "{preset}"', ""]
    (out / "pipeline.toml").write_text("\n".join(lines), encoding="utf-8")


def _window_option(value):
    return None if value is None else TimeWindow.parse(value)


@main.command()
@click.argument("config")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory (default <output.dir>/erps).")
@click.option("--seed", type=int, help="Override the config's seed.")
@click.option("--hp", type=float, help="High-pass cutoff in Hz (0 disables).")
@click.option("--lp", type=float, help="Low-pass cutoff in Hz (0 disables).")
@click.option("--notch", type=float, help="Notch centre in Hz (0 disables).")
@click.option("--slope", type=int, help="Filter roll-off in dB/octave (multiple of 6).")
@click.option("--reject-uv", type=float, help="Artifact threshold in microvolts.")
@click.option("--baseline", help="Baseline window, e.g. -250:0 (ms).")
@click.option("--epoch", "epoch_", help="Epoch window, e.g. -250:500 (ms).")
def preprocess(config, out, seed, hp, lp, notch, slope, reject_uv, baseline, epoch_):
    """Filter, epoch, reject and average every subject of CONFIG; writes
    per-subject and grand-mean ERPs."""
    try:
        cfg = load_config(config, seed=seed)
    except (ConfigError, OSError) as exc:
        _fail(str(exc))
    over = {k: v for k, v in dict(hp=hp, lp=lp, notch=notch, slope=slope, reject_uv=reject_uv,
                                  baseline=_window_option(baseline), epoch=_window_option(epoch_)).items()
            if v is not None}
    for key in ("hp", "lp", "notch"):
        if over.get(key) == 0:
            over[key] = None
    settings = replace(cfg.preprocess, **over)
    bundle_cfg = replace(cfg, preprocess=settings)
    montage = load_montage(cfg.montage_path) if cfg.montage_path else synthetic_montage()
    channels = channel_selection(montage, cfg.channels)
    if cfg.synth is not None:
        seeds = subject_seeds(cfg)
        subjects = [synth_subject(i, bundle_cfg, montage, channels, seeds) for i in range(cfg.synth.subjects)]
    else:
        subjects = [load_subject(s, montage, settings, cfg.phrase_epoch, channels) for s in cfg.subjects]
    out = Path(out) if out else cfg.output_dir / "erps"
    for s in subjects:
        d = out / s.id
        d.mkdir(parents=True, exist_ok=True)
        for lab, erp in {**s.words, **s.phrases}.items():
            save_recording(erp.to_recording(), d / f"{lab}.csv")
    grand = out / "grand"
    grand.mkdir(parents=True, exist_ok=True)
    for key in ("words", "phrases"):
        for lab, erp in grand_means(subjects, key).items():
            save_recording(erp.to_recording(), grand / f"{lab}.csv")
    click.echo(str(out))


@main.command()
@click.argument("config")
@click.option("--seed", type=int, help="Override the config's seed.")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory.")
@click.option("--jobs", type=int, help="Worker threads for subjects and recipes.")
def run(config, seed, out, jobs):
    """Run every recipe and comparison of CONFIG ("demo" for the bundled
    demo, or a previous run's manifest.json)."""
    try:
        cfg = load_config(config, seed=seed, output_dir=out, jobs=jobs)
    except (ConfigError, OSError) as exc:
        _fail(str(exc))
    bundle = run_pipeline(cfg)
    for err in bundle.errors:
        click.echo(f"error: {err}", err=True)
    click.echo(str(cfg.output_dir))
    sys.exit(1 if bundle.errors else 0)


@main.command()
@click.argument("sol_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("sol_b", type=click.Path(exists=True, dir_okay=False))
@click.option("--ka", type=int, help="Axes of the first solution (default all).")
@click.option("--kb", type=int, help="Axes of the second solution (default all).")
@click.option("--out", type=click.Path(dir_okay=False), help="Write the full-precision CSV here.")
@click.option("--decimals", type=int, default=2, show_default=True, help="Decimals in the printed table.")
def compare(sol_a, sol_b, ka, kb, out, decimals):
    """Print the |cos| table between the axes of two solution files."""
    a, b = CaSolution.from_json(sol_a), CaSolution.from_json(sol_b)
    try:
        table = cosine_table(a, b, ka, kb)
    except ValueError as exc:
        _fail(str(exc))
    if out:
        table.to_csv(out)
    click.echo(table.to_csv(decimals=decimals), nl=False)
    click.echo(f"shared columns: {table.n_shared}")


@main.command()
@click.argument("bundle", type=click.Path(exists=True, file_okay=False))
def figures(bundle):
    """Re-render the SVG figures of a run directory."""
    b = load_bundle(bundle)
    for p in emit_figures(b, bundle):
        click.echo(str(p))


if __name__ == "__main__":  # pragma: no cover
    main()
