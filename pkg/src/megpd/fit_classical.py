"""Hybrid likelihood / simulated-moment estimation of the bivariate model.

Stages:

1. eGPD maximum likelihood on the radii ``||y_i||_1`` (the radius equals R exactly);
2. symmetric-Beta maximum likelihood on the angles of the rows whose radius is
   below the ``q_L`` or above the ``q_U`` empirical radius quantile;
3. simulated method of moments for ``theta_omega`` with the other five
   parameters fixed at their stage 1-2 estimates.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import betaln, digamma

from .dataset import Dataset
from .egpd import MIN_FIT_SIZE, EgpdParams, fit_egpd_mle
from .errors import InsufficientDataError, MegpdError
from .model import MegpdParams, RadialAngularDraws, draw_radial_angular
from .moments import DEFAULT_SIMS

log = logging.getLogger(__name__)

THETA_CAP = 200.0
THETA_FLOOR = 1e-3
MIN_TAIL_POINTS = 30
MIN_HYBRID_SIZE = 200
GRID_SIZE = 21
MOM_BLOCK = 25_000


class FlatObjectiveWarning(UserWarning):
    """theta_omega is not identified by the moment criterion within Monte Carlo noise."""


class HybridFitError(MegpdError):
    def __init__(self, stage, cause, partial):
        self.stage = stage
        self.partial = partial
        super().__init__(f"hybrid fit failed at stage {stage!r}: {cause}")


@dataclass
class AngularReport:
    tail: str
    threshold: float
    n_used: int
    n_excluded: int
    boundary_hit: str | None
    loglik: float

    def to_dict(self):
        return asdict(self)


@dataclass
class MomFit:
    theta_omega: float
    objective: float
    criterion: str
    grid: np.ndarray
    grid_objective: np.ndarray
    bootstrap_se: float
    flat: bool
    n_sims: int
    seed: int | None

    def to_dict(self):
        d = asdict(self)
        d["grid"] = self.grid.tolist()
        d["grid_objective"] = self.grid_objective.tolist()
        return d


@dataclass
class HybridFit:
    params: MegpdParams
    thresholds: tuple
    counts: tuple
    mom_objective: float
    reports: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "method": "hybrid",
            "estimates": self.params.to_dict(),
            "thresholds": {"r0_L": self.thresholds[0], "r0_U": self.thresholds[1]},
            "counts": dict(zip(("n_total", "n_lower", "n_upper"), self.counts)),
            "mom_objective": self.mom_objective,
            "reports": {k: (v.to_dict() if hasattr(v, "to_dict") else v) for k, v in self.reports.items()},
        }


def _as_dataset(data):
    return data if isinstance(data, Dataset) else Dataset(np.asarray(data, dtype=float))


def fit_radial(data, min_size=MIN_FIT_SIZE, **kwargs):
    """eGPD MLE of the radial law from the row sums."""
    data = _as_dataset(data)
    return fit_egpd_mle(data.radii(), min_size=min_size, **kwargs)


def beta_symmetric_loglik(theta, mean_log_vv, n):
    """Symmetric Beta(theta, theta) log-likelihood from its sufficient statistic."""
    return n * ((theta - 1.0) * mean_log_vv - betaln(theta, theta))


def fit_beta_symmetric(v, cap=THETA_CAP, floor=THETA_FLOOR):
    """MLE of ``theta`` for ``v ~ Beta(theta, theta)``; angles must lie strictly inside (0, 1).

    Solves ``2 psi(theta) - 2 psi(2 theta) = mean(log v(1 - v))``.  Returns
    ``(theta_hat, boundary)`` where ``boundary`` is ``"upper"``/``"lower"``
    when the root lies beyond the cap/floor.
    """
    v = np.asarray(v, dtype=float)
    s = float(np.mean(np.log(v) + np.log1p(-v)))
    return _solve_beta_score(s, cap, floor)


def _solve_beta_score(s, cap, floor):
    def score(log_t):
        t = np.exp(log_t)
        return 2.0 * digamma(t) - 2.0 * digamma(2.0 * t) - s

    lo, hi = np.log(floor), np.log(cap)
    if score(hi) <= 0:
        return cap, "upper"
    if score(lo) >= 0:
        return floor, "lower"
    root = optimize.brentq(score, lo, hi, xtol=1e-14, rtol=1e-14)
    return float(np.exp(root)), None


def tail_indices(radii, tail, quantile_level):
    """Index mask and threshold of the rows in the requested radial tail."""
    thr = float(np.quantile(radii, quantile_level))
    if tail == "lower":
        return radii < thr, thr
    if tail == "upper":
        return radii > thr, thr
    raise ValueError(f"tail must be 'lower' or 'upper', got {tail!r}")


def fit_angular(data, tail, quantile_level, cap=THETA_CAP, min_points=MIN_TAIL_POINTS):
    """Beta(theta, theta) MLE from the angles of rows in one radial tail.

    Angles exactly at 0 or 1 are dropped and counted in the report.
    """
    data = _as_dataset(data)
    radii = data.radii()
    mask, thr = tail_indices(radii, tail, quantile_level)
    y = data.values[mask]
    inside = (y[:, 0] > 0) & (y[:, 1] > 0)
    n_excluded = int(np.count_nonzero(~inside))
    y = y[inside]
    if y.shape[0] < min_points:
        raise InsufficientDataError(
            f"{tail} tail at level {quantile_level} has {y.shape[0]} usable angles, need {min_points}")
    r = y.sum(axis=1)
    # log v + log(1 - v) from the components avoids cancellation in 1 - v
    s = float(np.mean(np.log(y[:, 0]) + np.log(y[:, 1]) - 2.0 * np.log(r)))
    theta, boundary = _solve_beta_score(s, cap, THETA_FLOOR)
    report = AngularReport(tail, thr, int(y.shape[0]), n_excluded, boundary,
                           float(beta_symmetric_loglik(theta, s, y.shape[0])))
    return theta, report


def _nested_draws(params, m, seq):
    """Radial/angular draws in fixed-size blocks, one child seed per block.

    The first ``m`` rows are the same for every total ``m' >= m`` drawn from the
    same seed, so refining ``m`` only adds draws.
    """
    sizes = [MOM_BLOCK] * (m // MOM_BLOCK) + ([m % MOM_BLOCK] if m % MOM_BLOCK else [])
    parts = [draw_radial_angular(params, k, np.random.default_rng(child))
             for k, child in zip(sizes, seq.spawn(len(sizes)))]
    return RadialAngularDraws(*(np.concatenate([getattr(p, f) for p in parts])
                                for f in ("u0", "r", "l", "u")))


def _mom_grid(size):
    return np.linspace(0.0, 0.5, size + 2)[1:-1]


def fit_omega_mom(data, fixed, m=DEFAULT_SIMS, seed=None, criterion="cov",
                  grid_size=GRID_SIZE, n_boot=50):
    """Simulated method-of-moments estimate of ``theta_omega``.

    ``fixed`` is ``(EgpdParams, theta_L, theta_U)``.  One set of radial and
    angular draws is reused for every candidate ``theta_omega`` (common random
    numbers), so the objective is a deterministic, smooth function of
    ``theta_omega``; the draws for ``2m`` extend those for ``m``.  The grid
    minimizer is refined by a bounded golden-section / parabolic search between
    its neighbours.

    ``criterion="cov"`` matches the 2 x 2 covariance matrix; ``"moments"``
    matches the first and second marginal moments of both components.
    """
    data = _as_dataset(data)
    radial, theta_l, theta_u = fixed
    radial = radial if isinstance(radial, EgpdParams) else EgpdParams(*radial)
    proto = MegpdParams(radial, theta_l, theta_u, 0.25)
    ss = np.random.SeedSequence(seed)
    sim_seq, boot_seq = ss.spawn(2)
    draws = _nested_draws(proto, int(m), sim_seq)
    y_obs = data.values

    if criterion == "cov":
        def summary(y):
            dev = y - y.mean(axis=0)
            return (dev.T @ dev).ravel() / (y.shape[0] - 1)
    elif criterion == "moments":
        def summary(y):
            return np.concatenate([y.mean(axis=0), (y**2).mean(axis=0)])
    else:
        raise ValueError(f"unknown criterion {criterion!r}")

    target = summary(y_obs)

    def model_summary(theta_omega):
        _, y = draws.combine(theta_omega)
        return summary(y)

    def objective(theta_omega):
        return float(np.sum((model_summary(theta_omega) - target) ** 2))

    grid = _mom_grid(grid_size)
    values = np.array([objective(t) for t in grid])
    i = int(np.argmin(values))
    lo = grid[i - 1] if i > 0 else 1e-6
    hi = grid[i + 1] if i < len(grid) - 1 else 0.5 - 1e-6
    res = optimize.minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-6})
    theta_hat, obj = (float(res.x), float(res.fun)) if res.fun <= values[i] else (float(grid[i]), float(values[i]))

    # objective noise from resampling the observed rows, model summary held fixed
    model_at_hat = model_summary(theta_hat)
    brng = np.random.default_rng(boot_seq)
    n = y_obs.shape[0]
    boot = np.empty(n_boot)
    for b in range(n_boot):
        yb = y_obs[brng.integers(0, n, n)]
        boot[b] = np.sum((model_at_hat - summary(yb)) ** 2)
    boot_se = float(np.std(boot, ddof=1))
    flat = bool(np.ptp(values) < 2.0 * boot_se)
    if flat:
        warnings.warn(f"moment objective is flat in theta_omega (range {np.ptp(values):.3g} "
                      f"< 2 x bootstrap SE {boot_se:.3g})", FlatObjectiveWarning, stacklevel=2)
    return MomFit(theta_hat, obj, criterion, grid, values, boot_se, flat, m,
                  seed if isinstance(seed, (int, type(None))) else None)


def fit_hybrid(data, q_L=0.10, q_U=0.95, m=DEFAULT_SIMS, seed=0, criterion="cov",
               min_size=MIN_HYBRID_SIZE):
    """Run the three estimation stages and assemble a :class:`HybridFit`.

    A failure at any stage raises :class:`HybridFitError` carrying the stage
    name and the reports of the stages that completed.
    """
    data = _as_dataset(data)
    if data.n < min_size:
        raise InsufficientDataError(f"hybrid fit needs at least {min_size} rows, got {data.n}")
    if not q_L < q_U:
        raise ValueError(f"need q_L < q_U, got {q_L}, {q_U}")
    reports = {}
    t0 = time.perf_counter()

    stage = "radial"
    try:
        radial, reports["radial"] = fit_radial(data)
        stage = "angular_lower"
        theta_l, reports["angular_lower"] = fit_angular(data, "lower", q_L)
        stage = "angular_upper"
        theta_u, reports["angular_upper"] = fit_angular(data, "upper", q_U)
        stage = "omega_mom"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FlatObjectiveWarning)
            mom = fit_omega_mom(data, (radial, theta_l, theta_u), m=m, seed=seed, criterion=criterion)
        reports["omega_mom"] = mom
        if mom.flat:
            log.warning("theta_omega weakly identified: moment objective flat within Monte Carlo noise")
    except Exception as exc:
        raise HybridFitError(stage, exc, reports) from exc

    params = MegpdParams(radial, theta_l, theta_u, mom.theta_omega)
    lower, upper = reports["angular_lower"], reports["angular_upper"]
    log.debug("hybrid fit took %.2f s", time.perf_counter() - t0)
    return HybridFit(
        params=params,
        thresholds=(lower.threshold, upper.threshold),
        counts=(data.n, lower.n_used + lower.n_excluded, upper.n_used + upper.n_excluded),
        mom_objective=mom.objective,
        reports=reports,
    )
