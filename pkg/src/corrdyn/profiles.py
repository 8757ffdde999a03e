"""Eigenvector profiles: electrode curves over time, extrema, representative
electrode groups and scalp topographies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from ._validation import check_fraction
from .ca import LAYOUT_CONDITIONS, LAYOUT_ELECTRODES

ELECTRODE_TIME_SEP = "@"


def format_ms(t):
    return f"{float(t):g}"


def electrode_time_label(electrode, t_ms):
    return f"{electrode}{ELECTRODE_TIME_SEP}{format_ms(t_ms)}"


def parse_electrode_time(label):
    electrode, sep, t = label.rpartition(ELECTRODE_TIME_SEP)
    if not sep:
        raise ValueError(f"column label {label!r} is not of the form <electrode>@<ms>")
    return electrode, float(t)


def _check_axis(sol, axis):
    if not 0 <= axis < sol.n_axes:
        raise IndexError(f"axis {axis} not in solution with {sol.n_axes} axes")


@dataclass(frozen=True, eq=False)
class ElectrodeCurves:
    """Per-electrode time courses of one axis.

    ``signed`` holds column standard coordinates and ``ctr`` the column
    contributions, both shaped ``(n_electrodes, n_times)``.  ``col_index``
    maps each cell back to its solution column (-1 where the column was
    dropped as all-zero).
    """

    axis: int
    electrodes: tuple
    times_ms: np.ndarray
    signed: np.ndarray
    ctr: np.ndarray
    col_index: np.ndarray

    def flatten(self):
        """Signed and CTR values back in solution column order."""
        mask = self.col_index >= 0
        n = int(self.col_index.max()) + 1 if mask.any() else 0
        signed, ctr = np.empty(n), np.empty(n)
        signed[self.col_index[mask]] = self.signed[mask]
        ctr[self.col_index[mask]] = self.ctr[mask]
        return signed, ctr

    def electrode_ctr(self):
        return self.ctr.sum(axis=1)

    def time_ctr(self):
        return self.ctr.sum(axis=0)

    def to_csv(self, path):
        lines = ["time_ms,electrode,signed,ctr"]
        for ti, t in enumerate(self.times_ms):
            for ei, e in enumerate(self.electrodes):
                lines.append(f"{format_ms(t)},{e},{self.signed[ei, ti]!r},{self.ctr[ei, ti]!r}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        return path


def contribution_curves(sol, axis):
    if sol.layout != LAYOUT_CONDITIONS:
        raise ValueError("contribution curves need a conditions x electrode-time solution; "
                         "use time_coordinate_curve for electrodes x time")
    if sol.encoding == "doubling":
        raise ValueError("contribution curves need a one-to-one column encoding")
    _check_axis(sol, axis)
    parsed = [parse_electrode_time(lab) for lab in sol.col_labels]
    parsed_all = parsed + [parse_electrode_time(lab) for lab in sol.dropped_cols]
    electrodes = tuple(dict.fromkeys(e for e, _ in parsed_all))
    times = np.array(sorted({t for _, t in parsed_all}))
    e_idx = {e: i for i, e in enumerate(electrodes)}
    t_idx = {t: i for i, t in enumerate(times)}
    shape = (len(electrodes), len(times))
    signed = np.full(shape, np.nan)
    ctr = np.zeros(shape)
    col_index = np.full(shape, -1, dtype=np.int64)
    std = sol.col_standard[:, axis]
    contrib = sol.col_ctr[:, axis]
    for j, (e, t) in enumerate(parsed):
        cell = (e_idx[e], t_idx[t])
        signed[cell] = std[j]
        ctr[cell] = contrib[j]
        col_index[cell] = j
    return ElectrodeCurves(axis, electrodes, times, signed, ctr, col_index)


def time_coordinate_curve(sol, axis):
    """``(times_ms, coordinates)`` of the time columns on ``axis``."""
    if sol.layout != LAYOUT_ELECTRODES:
        raise ValueError("time coordinate curves need an electrodes x time solution")
    times = np.array([float(lab) for lab in sol.col_labels])
    if sol.n_axes == 0 and axis == 0:
        return times, np.zeros(len(times))
    _check_axis(sol, axis)
    return times, sol.col_coords[:, axis].copy()


class Extremum(NamedTuple):
    time_ms: float
    value: float
    polarity: str


def smooth_curve(times_ms, values, smooth_ms):
    values = np.asarray(values, dtype=np.float64)
    if smooth_ms <= 0 or len(values) < 2:
        return values.copy()
    dt = float(np.median(np.diff(times_ms)))
    width = int(round(smooth_ms / dt))
    if width < 2:
        return values.copy()
    return uniform_filter1d(values, size=width, mode="nearest")


def detect_extrema(times_ms, values, smooth_ms=10.0, prominence_frac=0.2):
    """Local maxima and minima of the moving-average-smoothed curve whose
    prominence is at least ``prominence_frac`` times the largest |value|."""
    if smooth_ms < 0:
        raise ValueError("smooth_ms must be >= 0")
    check_fraction(prominence_frac, "prominence_frac", high_open=True)
    times = np.asarray(times_ms, dtype=np.float64)
    y = smooth_curve(times, values, smooth_ms)
    peak = float(np.max(np.abs(y))) if len(y) else 0.0
    if peak == 0.0:
        return []
    threshold = prominence_frac * peak
    found = []
    for sign, polarity in ((1.0, "max"), (-1.0, "min")):
        idx, _ = find_peaks(sign * y, prominence=threshold)
        found.extend((int(i), polarity) for i in idx)
    found.sort()
    return [Extremum(float(times[i]), float(y[i]), pol) for i, pol in found]


@dataclass(frozen=True, eq=False)
class ElectrodeGroup:
    electrodes: tuple
    mean_curve: np.ndarray
    total_ctr: float


def _corr(a, b):
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    return float(a @ b) / den if den > 0 else float("nan")


def group_representative_electrodes(curves, top_frac=0.25, corr_threshold=0.8):
    """Greedy correlation clustering of the highest-contributing electrodes.

    Electrodes are ranked by total CTR; the top ``ceil(top_frac * n)`` with
    non-negligible contribution are visited in rank order and each joins the
    first group whose seed curve it correlates with at ``>= corr_threshold``.
    A threshold of 0 imposes no correlation constraint (a single group).
    """
    check_fraction(top_frac, "top_frac")
    if not 0 <= corr_threshold < 1:
        raise ValueError(f"corr_threshold out of range: {corr_threshold}")
    totals = curves.electrode_ctr()
    n_top = int(math.ceil(top_frac * len(curves.electrodes)))
    order = np.argsort(-totals, kind="stable")[:n_top]
    floor = 1e-12 * max(float(totals.sum()), 1e-300)
    order = [i for i in order if totals[i] > floor]
    signed = np.nan_to_num(curves.signed)

    groups = []  # list of member index lists; seed is first member
    for i in order:
        for members in groups:
            if corr_threshold == 0 or _corr(signed[i], signed[members[0]]) >= corr_threshold:
                members.append(i)
                break
        else:
            groups.append([i])
    return [
        ElectrodeGroup(tuple(curves.electrodes[i] for i in m), signed[m].mean(axis=0), float(totals[m].sum()))
        for m in groups
    ]


def azimuthal_equidistant(xyz):
    """Project head-sphere positions to the plane; distance from the origin is
    the great-circle angle from the vertex, nose towards +y."""
    xyz = np.atleast_2d(np.asarray(xyz, dtype=np.float64))
    unit = xyz / np.linalg.norm(xyz, axis=1, keepdims=True)
    theta = np.arccos(np.clip(unit[:, 2], -1.0, 1.0))
    phi = np.arctan2(unit[:, 1], unit[:, 0])
    return np.column_stack([theta * np.cos(phi), theta * np.sin(phi)])


def idw(sites, values, points, power=2.0):
    """Inverse-distance-weighted interpolation, exact at ``sites``."""
    sites = np.asarray(sites, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d2 = ((points[:, None, :] - sites[None, :, :]) ** 2).sum(axis=2)
    out = np.empty(len(points))
    hit = d2 < 1e-24
    exact = hit.any(axis=1)
    out[exact] = values[np.argmax(hit[exact], axis=1)]
    w = 1.0 / d2[~exact] ** (power / 2.0)
    out[~exact] = (w @ values) / w.sum(axis=1)
    return out


@dataclass(frozen=True, eq=False)
class TopoMap:
    """Interpolated scalp map on a ``grid_n x grid_n`` square covering the head
    disk; cells outside the disk are NaN.  ``bounds`` is the shared symmetric
    color range."""

    time_ms: float | None
    electrodes: tuple
    sites: np.ndarray
    values: np.ndarray
    grid_x: np.ndarray
    grid_y: np.ndarray
    grid: np.ndarray
    radius: float
    bounds: tuple

    def interpolate(self, points):
        return idw(self.sites, self.values, points)

    def centroid(self):
        """|value|-weighted centroid of the grid."""
        w = np.nan_to_num(np.abs(self.grid))
        gx, gy = np.meshgrid(self.grid_x, self.grid_y)
        total = w.sum()
        return float((w * gx).sum() / total), float((w * gy).sum() / total)


def scalp_map(electrodes, values, montage, grid_n=64, bound=None, time_ms=None):
    values = np.asarray(values, dtype=np.float64)
    sites = azimuthal_equidistant(montage.positions(electrodes))
    radius = 1.05 * float(np.max(np.linalg.norm(sites, axis=1)))
    axis = np.linspace(-radius, radius, grid_n)
    gx, gy = np.meshgrid(axis, axis)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    inside = (pts ** 2).sum(axis=1) <= radius ** 2
    grid = np.full(len(pts), np.nan)
    grid[inside] = idw(sites, np.nan_to_num(values), pts[inside])
    if bound is None:
        bound = float(np.nanmax(np.abs(values))) if len(values) else 0.0
    return TopoMap(time_ms, tuple(electrodes), sites, np.nan_to_num(values), axis, axis.copy(),
                   grid.reshape(grid_n, grid_n), radius, (-bound, bound))


def topography(sol, axis, time_ms, montage, grid_n=64, curves=None):
    """Scalp map of the axis's signed eigenvector values at ``time_ms``; the
    color bound is the largest |value| over the whole window."""
    curves = curves if curves is not None else contribution_curves(sol, axis)
    times = curves.times_ms
    if not times[0] <= time_ms <= times[-1]:
        raise ValueError(f"time {time_ms} ms outside analysed window [{times[0]}, {times[-1]}]")
    ti = int(np.argmin(np.abs(times - time_ms)))
    bound = float(np.nanmax(np.abs(curves.signed)))
    return scalp_map(curves.electrodes, curves.signed[:, ti], montage, grid_n, bound, float(times[ti]))


def electrode_map(sol, axis, montage, grid_n=64):
    """Scalp map of electrode row coordinates for an electrodes x time solution."""
    if sol.layout != LAYOUT_ELECTRODES:
        raise ValueError("electrode maps need an electrodes x time solution")
    _check_axis(sol, axis)
    return scalp_map(sol.row_labels, sol.row_coords[:, axis], montage, grid_n)
