"""Correspondence analysis of nonnegative tables.

The decomposition follows the usual chi-square geometry: with the
correspondence matrix ``P = X / N``, row masses ``r`` and column masses ``c``,
the standardized residuals ``S = D_r^{-1/2} (P - r c^T) D_c^{-1/2}`` are
factored by SVD, ``S = U diag(sigma) V^T``.  Row principal coordinates are
``F = D_r^{-1/2} U diag(sigma)`` and column principal coordinates
``G = D_c^{-1/2} V diag(sigma)``.

Signed amplitudes (microvolt means) are first mapped to a nonnegative table
with :class:`NonnegativeEncoder`.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_finite_2d, check_nonnegative, frozen

logger = logging.getLogger(__name__)

LAYOUT_CONDITIONS = "conditions x electrode-time"
LAYOUT_ELECTRODES = "electrodes x time"
ENCODINGS = ("global-shift", "doubling", "absolute")
MAX_DEFAULT_AXES = 10
_TIE_RTOL = 1e-12
_LEAD_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class AnalysisMatrix:
    """A labelled table ready for (or produced by) encoding."""

    values: np.ndarray
    row_labels: tuple
    col_labels: tuple
    layout: str = LAYOUT_CONDITIONS
    window: tuple | None = None
    bin_ms: float | None = None
    encoding: str | None = None
    row_attributes: tuple = ()

    def __post_init__(self):
        values = check_finite_2d(self.values, "values")
        object.__setattr__(self, "values", frozen(values))
        object.__setattr__(self, "row_labels", tuple(self.row_labels))
        object.__setattr__(self, "col_labels", tuple(self.col_labels))
        if values.shape != (len(self.row_labels), len(self.col_labels)):
            raise ValueError(
                f"values shape {values.shape} does not match "
                f"{len(self.row_labels)} row and {len(self.col_labels)} column labels"
            )
        if self.row_attributes and len(self.row_attributes) != len(self.row_labels):
            raise ValueError("row_attributes must have one entry per row")

    @property
    def shape(self):
        return self.values.shape

    def transpose(self):
        layout = LAYOUT_ELECTRODES if self.layout == LAYOUT_CONDITIONS else LAYOUT_CONDITIONS
        return replace(self, values=self.values.T, row_labels=self.col_labels,
                       col_labels=self.row_labels, layout=layout, row_attributes=())

    def select_rows(self, labels):
        index = {lab: i for i, lab in enumerate(self.row_labels)}
        idx = [index[lab] for lab in labels]
        attrs = tuple(self.row_attributes[i] for i in idx) if self.row_attributes else ()
        return replace(self, values=self.values[idx], row_labels=tuple(labels), row_attributes=attrs)


class NonnegativeEncoder(TransformerMixin, BaseEstimator):
    """Map a signed table to a nonnegative one.

    Parameters
    ----------
    strategy : {"global-shift", "doubling", "absolute"}
        ``global-shift`` subtracts the fitted global minimum from every cell.
        ``doubling`` replaces column j by the pair ``(x - min_j, max_j - x)``
        using the fitted per-column extremes.  ``absolute`` takes ``|x|``.
    """

    def __init__(self, strategy="global-shift"):
        self.strategy = strategy

    def fit(self, X, y=None):
        if self.strategy not in ENCODINGS:
            raise ValueError(f"unknown encoding {self.strategy!r}; choose from {ENCODINGS}")
        X = check_finite_2d(X)
        self.n_features_in_ = X.shape[1]
        self.shift_ = float(X.min())
        self.col_min_ = X.min(axis=0)
        self.col_max_ = X.max(axis=0)
        if self._encode(X).sum() <= 0:
            raise ValueError("encoded table has zero total mass (constant input)")
        return self

    def _encode(self, X):
        if self.strategy == "global-shift":
            return X - self.shift_
        if self.strategy == "absolute":
            return np.abs(X)
        out = np.empty((X.shape[0], 2 * X.shape[1]))
        out[:, 0::2] = X - self.col_min_
        out[:, 1::2] = self.col_max_ - X
        return out

    def transform(self, X):
        check_is_fitted(self, "shift_")
        X = check_finite_2d(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        return self._encode(X)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "shift_")
        if input_features is None:
            input_features = [f"x{j}" for j in range(self.n_features_in_)]
        if self.strategy != "doubling":
            return np.asarray(input_features, dtype=object)
        return np.asarray([f"{f}{s}" for f in input_features for s in ("+", "-")], dtype=object)


def encode_nonnegative(m, strategy="global-shift"):
    """Encode an :class:`AnalysisMatrix`; returns the matrix and fitted encoder."""
    enc = NonnegativeEncoder(strategy).fit(m.values)
    cols = tuple(enc.get_feature_names_out(list(m.col_labels)))
    out = replace(m, values=enc.transform(m.values), col_labels=cols, encoding=strategy)
    return out, enc


class AxisInertia(NamedTuple):
    axis: int
    eigenvalue: float
    percent: float
    cumulative: float


@dataclass(frozen=True, eq=False)
class CaSolution:
    """Result of :func:`correspondence_analysis`.

    Axes are indexed from 0.  ``col_eigvecs`` holds the right singular vectors
    of the standardized residuals; ``col_standard`` is the same basis divided
    by ``sqrt(col_masses)``.
    """

    row_labels: tuple
    col_labels: tuple
    row_masses: np.ndarray
    col_masses: np.ndarray
    singular_values: np.ndarray
    total_inertia: float
    row_coords: np.ndarray
    col_coords: np.ndarray
    row_eigvecs: np.ndarray
    col_eigvecs: np.ndarray
    row_sqdist: np.ndarray
    col_sqdist: np.ndarray
    table: np.ndarray
    layout: str = LAYOUT_CONDITIONS
    encoding: str | None = None
    window: tuple | None = None
    bin_ms: float | None = None
    kept_rows: np.ndarray = None
    kept_cols: np.ndarray = None
    dropped_rows: tuple = ()
    dropped_cols: tuple = ()
    rank_deficient: bool = False
    row_attributes: tuple = ()
    provenance: dict = field(default_factory=dict)

    @property
    def n_axes(self):
        return len(self.singular_values)

    @property
    def eigenvalues(self):
        return self.singular_values ** 2

    @property
    def row_standard(self):
        return self.row_eigvecs / np.sqrt(self.row_masses)[:, None]

    @property
    def col_standard(self):
        return self.col_eigvecs / np.sqrt(self.col_masses)[:, None]

    @property
    def row_ctr(self):
        return self.row_eigvecs ** 2

    @property
    def col_ctr(self):
        return self.col_eigvecs ** 2

    @property
    def row_cos2(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            out = self.row_coords ** 2 / self.row_sqdist[:, None]
        return np.nan_to_num(out)

    @property
    def col_cos2(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            out = self.col_coords ** 2 / self.col_sqdist[:, None]
        return np.nan_to_num(out)

    def inertia_summary(self):
        return inertia_summary(self)

    def project_rows(self, rows):
        return project_supplementary_rows(self, rows)

    def reconstruct(self):
        """Correspondence matrix rebuilt from the retained axes."""
        inner = 1.0 + (self.row_coords / self.singular_values) @ self.col_coords.T if self.n_axes else 1.0
        return np.outer(self.row_masses, self.col_masses) * inner

    def axis_label(self, k):
        return f"Axis {k + 1}"

    # -- serialization -------------------------------------------------

    _ARRAYS = ("row_masses", "col_masses", "singular_values", "row_coords", "col_coords",
               "row_eigvecs", "col_eigvecs", "row_sqdist", "col_sqdist", "table",
               "kept_rows", "kept_cols")

    def to_dict(self, include_table=True):
        """JSON-ready dict; ``include_table=False`` omits the fitted table
        (it can be large and is not needed to use the solution)."""
        d = {
            "format": "corrdyn-ca-solution",
            "version": 1,
            "row_labels": list(self.row_labels),
            "col_labels": list(self.col_labels),
            "total_inertia": self.total_inertia,
            "eigenvalues": self.eigenvalues.tolist(),
            "layout": self.layout,
            "encoding": self.encoding,
            "window": list(self.window) if self.window is not None else None,
            "bin_ms": self.bin_ms,
            "dropped_rows": list(self.dropped_rows),
            "dropped_cols": list(self.dropped_cols),
            "rank_deficient": self.rank_deficient,
            "row_attributes": [dict(a) for a in self.row_attributes],
            "provenance": self.provenance,
        }
        names = [n for n in self._ARRAYS if include_table or n != "table"]
        for name in names:
            d[name] = np.asarray(getattr(self, name)).tolist()
        d["shapes"] = {name: list(np.shape(getattr(self, name))) for name in names}
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "corrdyn-ca-solution":
            raise ValueError("not a serialized CA solution")
        arrays = {}
        for name in cls._ARRAYS:
            dtype = np.int64 if name.startswith("kept") else np.float64
            if name not in d:
                arrays[name] = np.empty((0, 0))
                continue
            arrays[name] = np.asarray(d[name], dtype=dtype).reshape(d["shapes"][name])
        return cls(
            row_labels=tuple(d["row_labels"]), col_labels=tuple(d["col_labels"]),
            total_inertia=d["total_inertia"], layout=d["layout"], encoding=d["encoding"],
            window=tuple(d["window"]) if d["window"] is not None else None, bin_ms=d["bin_ms"],
            dropped_rows=tuple(d["dropped_rows"]), dropped_cols=tuple(d["dropped_cols"]),
            rank_deficient=d["rank_deficient"],
            row_attributes=tuple(d.get("row_attributes", ())),
            provenance=d.get("provenance", {}), **arrays,
        )

    def to_json(self, path=None, include_table=True):
        text = json.dumps(self.to_dict(include_table), sort_keys=True)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_json(cls, source):
        text = Path(source).read_text(encoding="utf-8") if not str(source).lstrip().startswith("{") else source
        return cls.from_dict(json.loads(text))

    def write_csvs(self, directory, prefix=""):
        """Write row, column and inertia tables; returns the written paths."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        k = self.n_axes
        axes = [str(i + 1) for i in range(k)]
        paths = []

        def dump(name, header, rows):
            p = directory / f"{prefix}{name}.csv"
            lines = [",".join(header)] + [",".join(r) for r in rows]
            p.write_text("\n".join(lines) + "\n", encoding="utf-8")
            paths.append(p)

        dump(
            "rows",
            ["label", "mass"] + [f"F{a}" for a in axes] + [f"ctr{a}" for a in axes] + [f"cos2_{a}" for a in axes],
            ([lab, repr(float(m))] + [repr(float(v)) for v in np.concatenate([f, c, q])]
             for lab, m, f, c, q in zip(self.row_labels, self.row_masses, self.row_coords,
                                         self.row_ctr, self.row_cos2)),
        )
        dump(
            "columns",
            ["label", "mass"] + [f"G{a}" for a in axes] + [f"std{a}" for a in axes] + [f"ctr{a}" for a in axes],
            ([lab, repr(float(m))] + [repr(float(v)) for v in np.concatenate([g, s, c])]
             for lab, m, g, s, c in zip(self.col_labels, self.col_masses, self.col_coords,
                                         self.col_standard, self.col_ctr)),
        )
        dump(
            "inertia",
            ["axis", "eigenvalue", "percent", "cumulative"],
            ([str(a.axis + 1), repr(a.eigenvalue), repr(a.percent), repr(a.cumulative)]
             for a in inertia_summary(self)),
        )
        return paths


def default_n_axes(shape):
    return max(0, min(min(shape) - 1, MAX_DEFAULT_AXES))


def _orient_and_order(U, s, V, col_masses):
    """Fix axis signs (largest |standard coordinate| column positive) and order
    tied singular values by the index of that column."""
    std = np.abs(V) / np.sqrt(col_masses)[:, None]
    # first column within rounding of the maximum, so that ties do not hinge on last-bit noise
    near = std >= std.max(axis=0, keepdims=True) * (1.0 - _LEAD_RTOL)
    lead = np.argmax(near, axis=0)
    signs = np.sign(V[lead, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    U, V = U * signs, V * signs

    order = np.arange(len(s))
    i = 0
    while i < len(s):
        j = i + 1
        while j < len(s) and abs(s[j] - s[i]) <= _TIE_RTOL * max(s[i], 1e-300):
            j += 1
        if j - i > 1:
            order[i:j] = i + np.argsort(lead[i:j], kind="stable")
        i = j
    return U[:, order], s[order], V[:, order]


def correspondence_analysis(matrix, n_axes=None, row_labels=None, col_labels=None):
    """Correspondence analysis of a nonnegative table.

    Parameters
    ----------
    matrix : AnalysisMatrix or array-like
        Nonnegative table with a positive grand total.
    n_axes : int, optional
        Number of axes to keep; defaults to ``min(rows, cols) - 1`` capped at
        10.  When the table has lower rank, fewer axes are returned and
        ``rank_deficient`` is set.

    Returns
    -------
    CaSolution
    """
    meta = {}
    if isinstance(matrix, AnalysisMatrix):
        meta = dict(layout=matrix.layout, encoding=matrix.encoding, window=matrix.window,
                    bin_ms=matrix.bin_ms)
        row_labels, col_labels = matrix.row_labels, matrix.col_labels
        row_attrs = matrix.row_attributes
        X = check_nonnegative(matrix.values, "matrix")
    else:
        X = check_nonnegative(matrix, "matrix")
        row_attrs = ()
    n_rows, n_cols = X.shape
    row_labels = tuple(row_labels) if row_labels is not None else tuple(str(i) for i in range(n_rows))
    col_labels = tuple(col_labels) if col_labels is not None else tuple(str(j) for j in range(n_cols))

    total = X.sum()
    if not total > 0:
        raise ValueError("table has zero total mass")

    kept_rows = np.flatnonzero(X.sum(axis=1) > 0)
    kept_cols = np.flatnonzero(X.sum(axis=0) > 0)
    dropped_rows = tuple(row_labels[i] for i in np.setdiff1d(np.arange(n_rows), kept_rows))
    dropped_cols = tuple(col_labels[j] for j in np.setdiff1d(np.arange(n_cols), kept_cols))
    if dropped_rows or dropped_cols:
        logger.warning("dropping %d all-zero rows and %d all-zero columns",
                       len(dropped_rows), len(dropped_cols))
    X = X[np.ix_(kept_rows, kept_cols)]
    row_labels = tuple(row_labels[i] for i in kept_rows)
    col_labels = tuple(col_labels[j] for j in kept_cols)
    if row_attrs:
        row_attrs = tuple(row_attrs[i] for i in kept_rows)

    limit = min(X.shape) - 1
    if n_axes is None:
        n_axes = default_n_axes(X.shape)
    elif n_axes > limit:
        raise ValueError(f"n_axes={n_axes} exceeds min(rows, cols) - 1 = {limit}")

    P = X / total
    r = P.sum(axis=1)
    c = P.sum(axis=0)
    sr, sc = np.sqrt(r), np.sqrt(c)
    S = (P - np.outer(r, c)) / np.outer(sr, sc)
    S2 = S * S
    total_inertia = float(S2.sum())

    U, s, Vt = np.linalg.svd(S, full_matrices=False)
    tol = max(S.shape) * np.finfo(float).eps * max(1.0, s[0] if len(s) else 0.0)
    rank = int(np.sum(s > tol))
    k = min(n_axes, rank)
    rank_deficient = rank < n_axes
    if rank_deficient:
        logger.warning("table rank supports %d axes, %d requested", rank, n_axes)
    U, s, V = U[:, :k], s[:k], Vt[:k].T
    U, s, V = _orient_and_order(U, s, V, c)

    return CaSolution(
        row_labels=row_labels, col_labels=col_labels,
        row_masses=frozen(r), col_masses=frozen(c), singular_values=frozen(s),
        total_inertia=total_inertia,
        row_coords=frozen(U * s / sr[:, None]), col_coords=frozen(V * s / sc[:, None]),
        row_eigvecs=frozen(U), col_eigvecs=frozen(V),
        row_sqdist=frozen(S2.sum(axis=1) / r), col_sqdist=frozen(S2.sum(axis=0) / c),
        table=frozen(X), kept_rows=kept_rows, kept_cols=kept_cols,
        dropped_rows=dropped_rows, dropped_cols=dropped_cols, rank_deficient=rank_deficient,
        row_attributes=row_attrs, provenance={"shape": [n_rows, n_cols], "grand_total": float(total)},
        **meta,
    )


def project_supplementary_rows(sol, rows, col_labels=None):
    """Place extra rows in the factor space of ``sol``.

    ``rows`` must be encoded the same way as the fitted table and carry
    either the fitted columns or the pre-drop column set.  Each row's profile
    is multiplied by the column standard coordinates.
    """
    if isinstance(rows, AnalysisMatrix):
        col_labels, rows = rows.col_labels, rows.values
    X = check_finite_2d(np.atleast_2d(rows), "rows")
    n_source = sol.provenance.get("shape", [None, len(sol.col_labels)])[1]
    if col_labels is not None:
        col_labels = tuple(col_labels)
        if col_labels != sol.col_labels:
            if len(col_labels) == n_source and tuple(col_labels[j] for j in sol.kept_cols) == sol.col_labels:
                X = X[:, sol.kept_cols]
            else:
                raise ValueError("column mismatch between supplementary rows and solution")
    elif X.shape[1] != len(sol.col_labels):
        if X.shape[1] == n_source:
            X = X[:, sol.kept_cols]
        else:
            raise ValueError(
                f"column mismatch: solution has {len(sol.col_labels)} columns, rows have {X.shape[1]}"
            )
    sums = X.sum(axis=1)
    if np.any(sums <= 0):
        raise ValueError("supplementary rows must have a positive total")
    return (X / sums[:, None]) @ sol.col_standard


def flip_axes(sol, signs):
    """Copy of ``sol`` with axis ``k`` multiplied by ``signs[k]`` (+1 or -1).

    Axis signs are arbitrary in CA; this lets callers apply a presentation
    convention after fitting.
    """
    signs = np.asarray(signs, dtype=np.float64)
    if signs.shape != (sol.n_axes,) or not np.all(np.abs(signs) == 1):
        raise ValueError("signs must hold one +1/-1 per axis")
    return replace(
        sol, row_coords=frozen(sol.row_coords * signs), col_coords=frozen(sol.col_coords * signs),
        row_eigvecs=frozen(sol.row_eigvecs * signs), col_eigvecs=frozen(sol.col_eigvecs * signs),
        provenance=dict(sol.provenance),
    )


def inertia_summary(sol):
    lam = sol.eigenvalues
    if sol.total_inertia > 0:
        pct = 100.0 * lam / sol.total_inertia
    else:
        pct = np.zeros_like(lam)
    cum = np.cumsum(pct)
    return [AxisInertia(i, float(l), float(p), float(q)) for i, (l, p, q) in enumerate(zip(lam, pct, cum))]


class CorrespondenceAnalysis(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`correspondence_analysis`.

    ``fit`` expects a nonnegative table (chain a :class:`NonnegativeEncoder`
    in a pipeline for signed data).  ``transform`` projects rows as
    supplementary points; ``fit_transform`` returns the fitted rows'
    principal coordinates.

    Parameters
    ----------
    n_components : int, optional
        Number of axes; see :func:`correspondence_analysis`.
    """

    def __init__(self, n_components=None):
        self.n_components = n_components

    def fit(self, X, y=None):
        if isinstance(X, AnalysisMatrix):
            self.solution_ = correspondence_analysis(X, self.n_components)
            self.n_features_in_ = X.shape[1]
        else:
            X = check_nonnegative(X)
            self.n_features_in_ = X.shape[1]
            self.solution_ = correspondence_analysis(X, self.n_components)
        sol = self.solution_
        self.singular_values_ = sol.singular_values
        self.eigenvalues_ = sol.eigenvalues
        self.total_inertia_ = sol.total_inertia
        self.explained_inertia_ = sol.eigenvalues / sol.total_inertia if sol.total_inertia > 0 else sol.eigenvalues
        self.row_masses_ = sol.row_masses
        self.column_masses_ = sol.col_masses
        self.row_coordinates_ = sol.row_coords
        self.column_coordinates_ = sol.col_coords
        return self

    def transform(self, X):
        check_is_fitted(self, "solution_")
        return project_supplementary_rows(self.solution_, X)

    def fit_transform(self, X, y=None):
        return self.fit(X).row_coordinates_

    def column_coordinates(self, X=None):
        check_is_fitted(self, "solution_")
        return self.solution_.col_coords
