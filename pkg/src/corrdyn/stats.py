"""Eigenvector cosine tables and the classical tests used to compare
analyses: Pearson correlation, exact sign test, one-way ANOVA."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import betainc

# p-values are reported in (0, 1]; exact zeros (perfect fits) are floored here
P_FLOOR = np.finfo(float).tiny


class TestResult(NamedTuple):
    __test__ = False

    statistic: float
    p_value: float
    n: int
    kind: str
    tails: int = 2
    df: tuple = ()


def _clip_p(p):
    return float(min(1.0, max(P_FLOOR, p)))


@dataclass(frozen=True, eq=False)
class CosineTable:
    """|cos| between axis eigenvectors of two analyses (rows: analysis A)."""

    values: np.ndarray
    row_axes: tuple
    col_axes: tuple
    n_shared: int

    def to_csv(self, path=None, decimals=None):
        fmt = (lambda v: f"{v:.{decimals}f}") if decimals is not None else repr
        lines = [",".join([""] + [f"EGV{k + 1}_b" for k in self.col_axes])]
        for k, row in zip(self.row_axes, self.values):
            lines.append(",".join([f"EGV{k + 1}_a"] + [fmt(float(v)) for v in row]))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def cosine_table(a, b, ka=None, kb=None):
    """Absolute cosines between the column eigenvectors of two solutions,
    restricted to their shared column labels.

    The eigenvectors are the right singular vectors of each analysis's
    standardized residual matrix.
    """
    ka = a.n_axes if ka is None else ka
    kb = b.n_axes if kb is None else kb
    if ka > a.n_axes or kb > b.n_axes:
        raise ValueError(f"requested {ka}x{kb} axes but solutions have {a.n_axes} and {b.n_axes}")
    index_b = {lab: j for j, lab in enumerate(b.col_labels)}
    shared = [(i, index_b[lab]) for i, lab in enumerate(a.col_labels) if lab in index_b]
    if not shared:
        raise ValueError("solutions share no column labels")
    ia, ib = (np.array(x) for x in zip(*shared))
    u = a.col_eigvecs[ia, :ka]
    v = b.col_eigvecs[ib, :kb]
    nu = np.linalg.norm(u, axis=0)
    nv = np.linalg.norm(v, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.abs(u.T @ v) / np.outer(nu, nv)
    cos = np.clip(np.nan_to_num(cos), 0.0, 1.0)
    return CosineTable(cos, tuple(range(ka)), tuple(range(kb)), len(shared))


def t_two_sided_p(t, df):
    """Two-sided p-value of Student's t via the regularized incomplete beta."""
    if math.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def f_upper_p(F, dfn, dfd):
    if math.isinf(F):
        return 0.0
    if F <= 0:
        return 1.0
    return float(betainc(dfd / 2.0, dfn / 2.0, dfd / (dfd + dfn * F)))


def pearson_with_p(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and of equal length")
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 pairs")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ValueError("constant input has no correlation")
    r = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    df = n - 2
    t = math.inf if abs(r) == 1.0 else r * math.sqrt(df) / math.sqrt(1.0 - r * r)
    return TestResult(r, _clip_p(t_two_sided_p(abs(t), df)), n, "pearson", 2, (df,))


def sign_test(diffs):
    """Exact two-sided binomial(n, 1/2) test on the signs of ``diffs``;
    exact zeros are dropped."""
    d = np.asarray(diffs, dtype=np.float64).ravel()
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise ValueError("all differences are zero")
    k = int((d > 0).sum())
    tail = sum(math.comb(n, i) for i in range(min(k, n - k) + 1))
    p = 2 * tail / 2 ** n
    return TestResult(float(k), _clip_p(p), n, "sign", 2)


def anova_oneway(groups):
    """Classical one-way ANOVA F test.

    All-identical data (no variance anywhere) returns ``F = 0, p = 1``; groups
    that are internally constant but differ give ``F = inf``.
    """
    groups = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(groups) < 2 or any(len(g) < 2 for g in groups):
        raise ValueError("need at least 2 groups of at least 2 values")
    allv = np.concatenate(groups)
    N, g = len(allv), len(groups)
    grand = allv.mean()
    ss_between = float(sum(len(x) * (x.mean() - grand) ** 2 for x in groups))
    ss_within = float(sum(((x - x.mean()) ** 2).sum() for x in groups))
    dfn, dfd = g - 1, N - g
    if ss_within == 0:
        F = 0.0 if ss_between == 0 else math.inf
    else:
        F = (ss_between / dfn) / (ss_within / dfd)
    return TestResult(F, _clip_p(f_upper_p(F, dfn, dfd)), N, "anova", 1, (dfn, dfd))
