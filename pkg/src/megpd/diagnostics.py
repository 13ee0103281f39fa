"""Model checking: empirical chi curves, QQ data, bootstrap envelopes and recovery metrics."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .dataset import Dataset, _json_default
from .egpd import egpd_quantile
from .errors import DataError, InsufficientDataError, InvalidParameterError
from .model import PARAM_NAMES, MegpdParams, simulate

MIN_CHI_SIZE = 100
MIN_BOOTSTRAP = 200
QQ_TARGETS = ("margin1", "margin2", "sum")


def default_levels(tail):
    """101 equispaced levels on [0.8, 0.995] (upper) or [0.005, 0.2] (lower)."""
    if tail == "upper":
        return np.linspace(0.8, 0.995, 101)
    if tail == "lower":
        return np.linspace(0.005, 0.2, 101)
    raise ValueError(f"tail must be 'upper' or 'lower', got {tail!r}")


def default_probs():
    return np.linspace(0.01, 0.99, 99)


def _values(data):
    return data.values if isinstance(data, Dataset) else np.asarray(data, dtype=float)


def empirical_margins(data):
    """Rank-based margins ``rank / (n + 1)`` (average ranks for ties) and per-column tie counts.

    The tie count of a column is the number of observations whose value is
    shared with at least one other observation.
    """
    y = _values(data)
    n = y.shape[0]
    u = np.column_stack([rankdata(y[:, j], method="average") for j in range(y.shape[1])]) / (n + 1)
    ties = []
    for j in range(y.shape[1]):
        _, counts = np.unique(y[:, j], return_counts=True)
        ties.append(int(counts[counts > 1].sum()))
    return u, ties


def _chi_from_margins(u, tail, levels):
    levels = np.asarray(levels, dtype=float)
    if tail == "upper":
        joint = (u[:, 0][:, None] > levels) & (u[:, 1][:, None] > levels)
        return joint.mean(axis=0) / (1.0 - levels)
    if tail == "lower":
        joint = (u[:, 0][:, None] < levels) & (u[:, 1][:, None] < levels)
        return joint.mean(axis=0) / levels
    raise ValueError(f"tail must be 'upper' or 'lower', got {tail!r}")


def chi_empirical(data, tail="upper", levels=None):
    """Empirical chi measure at each level.

    Upper: ``P(F1 > q, F2 > q) / (1 - q)``; lower: ``P(F1 < q, F2 < q) / q``, with
    the margins replaced by their empirical rank transforms.
    """
    y = _values(data)
    if y.ndim != 2 or y.shape[1] != 2:
        raise DataError(f"chi needs an n x 2 matrix, got shape {y.shape}")
    if y.shape[0] < MIN_CHI_SIZE:
        raise InsufficientDataError(f"chi needs at least {MIN_CHI_SIZE} rows, got {y.shape[0]}")
    levels = default_levels(tail) if levels is None else np.asarray(levels, dtype=float)
    if np.any((levels <= 0) | (levels >= 1)):
        raise ValueError("levels must lie strictly inside (0, 1)")
    u, _ = empirical_margins(y)
    return _chi_from_margins(u, tail, levels)


def _target_values(y, target):
    if target == "margin1":
        return y[:, 0]
    if target == "margin2":
        return y[:, 1]
    if target == "sum":
        return y.sum(axis=1)
    raise ValueError(f"target must be one of {QQ_TARGETS}, got {target!r}")


def sample_quantiles(data, target, probs):
    return np.quantile(_target_values(_values(data), target), probs)


@dataclass
class Envelope:
    """Bootstrap bands around a curve-valued statistic."""

    center: np.ndarray
    pointwise: tuple
    overall: tuple
    B: int
    level: float
    mode: str
    curves: np.ndarray = field(repr=False, default=None)

    def inside_overall(self, curve):
        curve = np.asarray(curve)
        return (curve >= self.overall[0]) & (curve <= self.overall[1])

    def inside_pointwise(self, curve):
        curve = np.asarray(curve)
        return (curve >= self.pointwise[0]) & (curve <= self.pointwise[1])


def rank_envelope(curves, level=0.95):
    """Global envelope containing at least ``level`` of the curves entirely.

    Each curve's extreme rank is the smallest of its two-sided pointwise ranks
    over the grid; with ``k`` the largest value such that at least
    ``ceil(level * B)`` curves have extreme rank ``>= k``, the band runs from the
    ``k``-th smallest to the ``k``-th largest value at every grid point.
    """
    curves = np.asarray(curves, dtype=float)
    B = curves.shape[0]
    need = int(np.ceil(level * B - 1e-9))
    lo_rank = rankdata(curves, method="max", axis=0)
    hi_rank = B + 1 - rankdata(curves, method="min", axis=0)
    extreme = np.minimum(lo_rank, hi_rank).min(axis=1)
    ks = np.sort(extreme)[::-1]
    k = int(ks[need - 1])
    srt = np.sort(curves, axis=0)
    return srt[k - 1], srt[B - k]


def _check_bootstrap(B, level):
    if B < MIN_BOOTSTRAP:
        raise InvalidParameterError(f"need B >= {MIN_BOOTSTRAP} bootstrap replicates, got {B}")
    if not 0 < level < 1:
        raise InvalidParameterError(f"level must lie in (0, 1), got {level}")
    if B * (1 - level) < 1:
        raise InvalidParameterError(f"B={B} too small for level {level}")


def bootstrap_envelope(statistic, data, mode="nonparametric", params=None, B=MIN_BOOTSTRAP,
                       level=0.95, rng=None, threads=1):
    """Pointwise and overall bootstrap bands for a curve-valued ``statistic(Dataset)``.

    ``mode="nonparametric"`` resamples rows with replacement; ``"parametric"``
    simulates ``B`` datasets of the same size from ``params``.  Replicate ``b``
    uses the ``b``-th child stream of ``rng`` so the result does not depend on
    ``threads``.  The overall band is the rank envelope widened where needed to
    contain the pointwise band.
    """
    _check_bootstrap(B, level)
    data = data if isinstance(data, Dataset) else Dataset(np.asarray(data, dtype=float))
    if mode == "parametric":
        if params is None:
            raise InvalidParameterError("parametric bootstrap needs params")
        params = params if isinstance(params, MegpdParams) else MegpdParams.from_vector(params)
    elif mode != "nonparametric":
        raise ValueError(f"mode must be 'nonparametric' or 'parametric', got {mode!r}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    children = rng.spawn(B)
    y, n = data.values, data.n

    def one(child):
        if mode == "parametric":
            yb = simulate(params, n, child)
        else:
            yb = Dataset(y[child.integers(0, n, n)])
        return np.asarray(statistic(yb), dtype=float)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            curves = np.array(list(pool.map(one, children)))
    else:
        curves = np.array([one(c) for c in children])
    alpha = (1 - level) / 2
    p_lo, p_hi = np.quantile(curves, [alpha, 1 - alpha], axis=0)
    o_lo, o_hi = rank_envelope(curves, level)
    o_lo, o_hi = np.minimum(o_lo, p_lo), np.maximum(o_hi, p_hi)
    return Envelope(curves.mean(axis=0), (p_lo, p_hi), (o_lo, o_hi), B, level, mode, curves)


@dataclass
class ChiCurve:
    levels: np.ndarray
    chi_hat: np.ndarray
    tail: str
    pointwise_band: tuple | None = None
    overall_band: tuple | None = None
    B: int = 0
    model_chi: np.ndarray | None = None
    ties: list | None = None

    def rows(self):
        header = ["level", "chi_hat"]
        cols = [self.levels, self.chi_hat]
        if self.model_chi is not None:
            header.append("chi_model")
            cols.append(self.model_chi)
        for name, band in (("pointwise", self.pointwise_band), ("overall", self.overall_band)):
            if band is not None:
                header += [f"{name}_lo", f"{name}_hi"]
                cols += list(band)
        return header, np.column_stack(cols)

    def to_csv(self, path):
        _write_table(path, *self.rows())


@dataclass
class QqData:
    probs: np.ndarray
    observed_q: np.ndarray
    simulated_q: np.ndarray
    target: str
    pointwise_band: tuple | None = None
    overall_band: tuple | None = None
    B: int = 0

    def rows(self):
        header = ["prob", "observed_q", "simulated_q"]
        cols = [self.probs, self.observed_q, self.simulated_q]
        for name, band in (("pointwise", self.pointwise_band), ("overall", self.overall_band)):
            if band is not None:
                header += [f"{name}_lo", f"{name}_hi"]
                cols += list(band)
        return header, np.column_stack(cols)

    def to_csv(self, path):
        _write_table(path, *self.rows())


def _write_table(path, header, table):
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, table, delimiter=",", fmt="%.17g")


def qq_model_vs_data(data, params, target="sum", probs=None, m=None, rng=None):
    """Observed versus model quantiles of one margin or of the row sum.

    The model quantiles come from ``m`` simulated rows (default ``100 n``).
    """
    data = data if isinstance(data, Dataset) else Dataset(np.asarray(data, dtype=float))
    params = params if isinstance(params, MegpdParams) else MegpdParams.from_vector(params)
    probs = default_probs() if probs is None else np.asarray(probs, dtype=float)
    m = 100 * data.n if m is None else int(m)
    sim = simulate(params, m, rng)
    return QqData(probs, sample_quantiles(data, target, probs), sample_quantiles(sim, target, probs), target)


def radial_quantiles(params, probs):
    """Exact quantiles of the row sum, which follows the radial eGPD law."""
    params = params if isinstance(params, MegpdParams) else MegpdParams.from_vector(params)
    return egpd_quantile(np.asarray(probs, dtype=float), params.radial)


def chi_curve(data, tail, params=None, levels=None, B=MIN_BOOTSTRAP, level=0.95, mode="parametric",
              rng=None, m=None, threads=1):
    """Observed chi curve with bootstrap bands.

    In parametric mode the bands come from datasets simulated at ``params`` and
    the model curve is computed from ``m`` simulated rows (default ``100 n``).
    """
    data = data if isinstance(data, Dataset) else Dataset(np.asarray(data, dtype=float))
    levels = default_levels(tail) if levels is None else np.asarray(levels, dtype=float)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    boot_rng, model_rng = rng.spawn(2)
    chi = chi_empirical(data, tail, levels)
    _, ties = empirical_margins(data)
    env = bootstrap_envelope(lambda d: chi_empirical(d, tail, levels), data, mode, params, B, level,
                             boot_rng, threads)
    model_chi = None
    if params is not None:
        sim = simulate(params, 100 * data.n if m is None else int(m), model_rng)
        model_chi = chi_empirical(sim, tail, levels)
    return ChiCurve(levels, chi, tail, env.pointwise, env.overall, B, model_chi, ties)


def qq_with_bands(data, params, target="sum", probs=None, B=MIN_BOOTSTRAP, level=0.95, rng=None,
                  m=None, threads=1):
    """QQ data whose bands are parametric-bootstrap envelopes of size-``n`` sample quantiles."""
    data = data if isinstance(data, Dataset) else Dataset(np.asarray(data, dtype=float))
    probs = default_probs() if probs is None else np.asarray(probs, dtype=float)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    boot_rng, model_rng = rng.spawn(2)
    qq = qq_model_vs_data(data, params, target, probs, m, model_rng)
    env = bootstrap_envelope(lambda d: sample_quantiles(d, target, probs), data, "parametric", params,
                             B, level, boot_rng, threads)
    qq.pointwise_band, qq.overall_band, qq.B = env.pointwise, env.overall, B
    return qq


def _as_matrix(params_list):
    rows = []
    for p in params_list:
        rows.append(p.as_vector() if isinstance(p, MegpdParams) else np.asarray(p, dtype=float))
    return np.array(rows, dtype=float)


@dataclass
class RecoveryTable:
    names: tuple
    bias: np.ndarray
    rmse: np.ndarray
    median_abs_error: np.ndarray
    variance: np.ndarray

    def to_dict(self):
        return {name: {"bias": float(self.bias[i]), "rmse": float(self.rmse[i]),
                       "median_abs_error": float(self.median_abs_error[i]),
                       "variance": float(self.variance[i])}
                for i, name in enumerate(self.names)}

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["parameter", "bias", "rmse", "median_abs_error", "variance"])
            for i, name in enumerate(self.names):
                w.writerow([name] + [repr(float(a[i])) for a in
                                     (self.bias, self.rmse, self.median_abs_error, self.variance)])


def recovery_metrics(true_params, estimates, names=PARAM_NAMES):
    """Per-parameter bias, RMSE, median absolute error and error variance.

    ``variance`` is the sample variance of ``estimate - truth``; for replicates at
    one fixed truth it equals the variance of the estimates.
    """
    truth, est = _as_matrix(true_params), _as_matrix(estimates)
    if truth.shape != est.shape:
        raise DataError(f"{truth.shape[0]} true parameter sets but {est.shape[0]} estimates")
    if truth.shape[0] < 2:
        raise DataError("recovery metrics need at least 2 replicates")
    err = est - truth
    return RecoveryTable(tuple(names), err.mean(axis=0), np.sqrt((err**2).mean(axis=0)),
                         np.median(np.abs(err), axis=0), err.var(axis=0, ddof=1))


def write_recovery_csv(path, true_params, estimates):
    """Write one row per replicate with true and estimated values, for recovery plots."""
    truth, est = _as_matrix(true_params), _as_matrix(estimates)
    header = [f"true_{n}" for n in PARAM_NAMES] + [f"est_{n}" for n in PARAM_NAMES]
    _write_table(path, header, np.hstack([truth, est]))


@dataclass
class DiagnosticsReport:
    chi: list = field(default_factory=list)
    qq: list = field(default_factory=list)
    recovery: RecoveryTable | None = None
    manifest: dict = field(default_factory=dict)

    def write(self, outdir):
        """Write one CSV per curve or table plus ``manifest.json``; returns the written paths."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        files = []
        for c in self.chi:
            p = outdir / f"chi_{c.tail}.csv"
            c.to_csv(p)
            files.append(p)
        for q in self.qq:
            p = outdir / f"qq_{q.target}.csv"
            q.to_csv(p)
            files.append(p)
        if self.recovery is not None:
            p = outdir / "recovery.csv"
            self.recovery.to_csv(p)
            files.append(p)
        man = dict(self.manifest)
        man["files"] = [f.name for f in files]
        man["chi_ties"] = {c.tail: c.ties for c in self.chi}
        mp = outdir / "manifest.json"
        mp.write_text(json.dumps(man, indent=2, default=_json_default))
        return files + [mp]
