"""Write a :class:`~corrdyn.pipeline.ReportBundle` to disk as tables and
SVG figures.  Both emitters are deterministic given the bundle."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import render
from .ca import LAYOUT_ELECTRODES
from .profiles import electrode_map, format_ms, scalp_map, topography

INSET_GRID = 32


def _recipe_dir(out_dir, result):
    d = Path(out_dir) / "recipes" / result.recipe.name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(path, lines):
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)


def emit_tables(bundle, out_dir):
    """Solutions, CA tables, curves, extrema, groups and comparison results.
    Returns the written paths."""
    from .pipeline import save_bundle_index

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [save_bundle_index(bundle, out_dir), out_dir / "montage.csv"]
    for res in bundle.results:
        d = _recipe_dir(out_dir, res)
        sol = res.solution
        keep_table = sol.layout == LAYOUT_ELECTRODES
        p = d / "solution.json"
        sol.to_json(p, include_table=keep_table)
        paths.append(p)
        paths.extend(sol.write_csvs(d))
        ext_lines = ["axis,time_ms,value,polarity"]
        grp_lines = ["axis,group,total_ctr,electrodes"]
        for prof in res.profiles:
            a = prof.axis + 1
            if prof.curves is not None:
                paths.append(prof.curves.to_csv(d / f"curves_axis{a}.csv"))
            paths.append(_write(d / f"time_curve_axis{a}.csv",
                                ["time_ms,value"] + [f"{format_ms(t)},{float(v)!r}"
                                                     for t, v in zip(prof.times_ms, prof.curve)]))
            ext_lines += [f"{a},{format_ms(e.time_ms)},{e.value!r},{e.polarity}" for e in prof.extrema]
            grp_lines += [f"{a},{gi + 1},{g.total_ctr!r},{';'.join(g.electrodes)}"
                          for gi, g in enumerate(prof.groups)]
        paths.append(_write(d / "extrema.csv", ext_lines))
        paths.append(_write(d / "groups.csv", grp_lines))

    cdir = out_dir / "comparisons"
    if bundle.comparisons:
        cdir.mkdir(exist_ok=True)
    for c in bundle.comparisons:
        p = cdir / f"{c.id}.json"
        p.write_text(json.dumps({"id": c.id, "kind": c.kind, "spec": c.spec, "result": c.result},
                                sort_keys=True, indent=1) + "\n", encoding="utf-8")
        paths.append(p)
        if c.kind == "cosine":
            table = c.table
            if table is None:
                from .stats import CosineTable
                vals = np.asarray(c.result["values"], dtype=float)
                table = CosineTable(vals, tuple(range(vals.shape[0])), tuple(range(vals.shape[1])),
                                    c.result["n_shared"])
            for fname, decimals in ((f"{c.id}.csv", None), (f"{c.id}_report.csv", 2)):
                table.to_csv(cdir / fname, decimals=decimals)
                paths.append(cdir / fname)
    return paths


def _erp_values(sol):
    """Signed ERP table behind an electrodes x time solution (undoing a
    global shift; other encodings are shown as encoded)."""
    table = np.asarray(sol.table, dtype=np.float64)
    enc = sol.provenance.get("encoder", {})
    if enc.get("strategy") == "global-shift":
        table = table + enc["shift"]
    return table


def recipe_figures(res, montage):
    """``{filename: Svg}`` for one recipe result."""
    sol, name = res.solution, res.recipe.name
    figs = {"factor_map.svg": render.factor_map(sol, 0, 1, f"{name}: factor map")}
    if sol.layout == LAYOUT_ELECTRODES:
        times = np.array([float(c) for c in sol.col_labels])
        erp = _erp_values(sol) if np.size(sol.table) else None
        bound = float(np.abs(erp).max()) if erp is not None else 0.0
        for prof in res.profiles:
            topos = []
            if erp is not None:
                for ex in prof.extrema:
                    j = int(np.argmin(np.abs(times - ex.time_ms)))
                    topos.append(scalp_map(sol.row_labels, erp[:, j], montage, INSET_GRID, bound, ex.time_ms))
            a = prof.axis + 1
            figs[f"time_curve_axis{a}.svg"] = render.time_curve_figure(
                prof.times_ms, prof.curve, prof.extrema, topos, f"{name}: axis {a} time coordinates")
            figs[f"electrode_map_axis{a}.svg"] = render.topomap_figure(
                electrode_map(sol, prof.axis, montage, 48), f"{name}: axis {a} electrode coordinates")
    else:
        for prof in res.profiles:
            topos = [topography(sol, prof.axis, ex.time_ms, montage, INSET_GRID, prof.curves)
                     for ex in prof.extrema]
            a = prof.axis + 1
            figs[f"profile_axis{a}.svg"] = render.profile_figure(
                prof.curves, prof.groups, prof.extrema, topos, f"{name}: axis {a} eigenvector profile")
    return figs


def emit_figures(bundle, out_dir):
    paths = []
    for res in bundle.results:
        d = _recipe_dir(out_dir, res)
        for fname, svg in recipe_figures(res, bundle.montage).items():
            paths.append(svg.save(d / fname))
    return paths
