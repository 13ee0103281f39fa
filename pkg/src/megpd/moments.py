"""Monte Carlo moments and covariances of the bivariate model.

Each Monte Carlo routine computes two routes from independent random streams:

* direct: sample moments of simulated ``Y``;
* decomposed: the binomial/product expansion of ``Y = R((1-w)L + wU)`` with
  closed-form Beta factors and one-dimensional Monte Carlo over ``u0 = F_R(R)``
  for the radial-weight expectations.

Agreement of the two routes is reported as a z-score against their combined
standard error.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, comb

from .egpd import egpd_quantile
from .model import MegpdParams, _as_generator, simulate, weight_fn

DEFAULT_SIMS = 100_000
MIN_SIMS = 10_000
AGREEMENT_Z = 4.0


@dataclass
class MomentEstimate:
    value: float
    std_error: float
    n_sims: int
    seed: int | None
    warning: str | None = None
    decomposed: MomentEstimate | None = None

    @property
    def agreement_z(self):
        """|direct - decomposed| in units of the combined standard error."""
        if self.decomposed is None:
            return None
        se = math.hypot(self.std_error, self.decomposed.std_error)
        diff = abs(self.value - self.decomposed.value)
        return 0.0 if diff == 0 else (diff / se if se > 0 else math.inf)

    @property
    def consistent(self):
        z = self.agreement_z
        return None if z is None else z <= AGREEMENT_Z


def beta_moment(a, l):
    """``E(V^l)`` for ``V ~ Beta(a, a)`` and integer ``l >= 0``."""
    if l < 0 or int(l) != l:
        raise ValueError(f"l must be a nonnegative integer, got {l}")
    out = 1.0
    for i in range(int(l)):
        out *= (a + i) / (2 * a + i)
    return out


def beta_power_moment(a, p):
    """``E(V^p) = B(a + p, a) / B(a, a)`` for real ``p``; ``inf`` when ``a + p <= 0``."""
    if a + p <= 0:
        return math.inf
    return float(np.exp(betaln(a + p, a) - betaln(a, a)))


def _as_params(params):
    return params if isinstance(params, MegpdParams) else MegpdParams.from_vector(params)


def _streams(seed):
    ss = np.random.SeedSequence(seed)
    direct, decomposed = ss.spawn(2)
    return np.random.default_rng(direct), np.random.default_rng(decomposed)


def _radial_weight_draws(params, m, rng):
    rng = _as_generator(rng)
    u0 = rng.random(m)
    u0[u0 == 0.0] = np.finfo(float).tiny
    r = egpd_quantile(u0, params.radial)
    return r, weight_fn(u0, params.theta_omega)


def _mean_se(x):
    m = x.shape[0]
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(m))


def _check_sims(m):
    if m < MIN_SIMS:
        raise ValueError(f"need at least {MIN_SIMS} simulations, got {m}")


def moment_mc(params, j, q, m=DEFAULT_SIMS, seed=None):
    """Monte Carlo estimate of ``E(Y_j^q)`` with the decomposed route attached.

    ``j`` is the 0-based component index.  When ``xi >= 1/q`` the moment may not
    exist; a warning is issued and recorded on the estimate.
    """
    params = _as_params(params)
    if j not in (0, 1):
        raise ValueError(f"component index must be 0 or 1, got {j}")
    if q < 1 or int(q) != q:
        raise ValueError(f"q must be a positive integer, got {q}")
    _check_sims(m)
    warning = None
    if params.radial.xi >= 1.0 / q:
        warning = f"xi={params.radial.xi} >= 1/q={1.0 / q}: E(Y^{q}) may not exist"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)

    rng_direct, rng_decomp = _streams(seed)
    y = simulate(params, m, rng_direct).values[:, j]
    value, se = _mean_se(y**q)

    r, w = _radial_weight_draws(params, m, rng_decomp)
    # E(L_j^l) and E(U_j^l) do not depend on j for symmetric Beta angles
    terms = np.zeros(m)
    for l in range(q + 1):
        coef = comb(q, l, exact=True) * beta_moment(params.theta_L, l) * beta_moment(params.theta_U, q - l)
        terms += coef * r**q * (1.0 - w) ** l * w ** (q - l)
    d_value, d_se = _mean_se(terms)
    decomposed = MomentEstimate(d_value, d_se, m, seed, warning)
    return MomentEstimate(value, se, m, seed, warning, decomposed)


def _angular_cross(a, j, k):
    """``E(V_j V_k)`` for the simplex vector ``(V, 1 - V)``, ``V ~ Beta(a, a)``."""
    second = beta_moment(a, 2)
    return second if j == k else 0.5 - second


def sample_covariance(y):
    """Unbiased sample covariance of an ``n x 2`` array and the per-entry standard errors."""
    m = y.shape[0]
    dev = y - y.mean(axis=0)
    cov = dev.T @ dev / (m - 1)
    se = np.empty((2, 2))
    for j in range(2):
        for k in range(2):
            se[j, k] = np.std(dev[:, j] * dev[:, k], ddof=1) / np.sqrt(m)
    return cov, se


def covariance_expansion(params, r, w):
    """Covariance matrix from the radial-weight draws ``(r, w)`` via the eight-term expansion.

    Returns ``(cov, se)`` with standard errors from the delta method.
    """
    a_l, a_u = params.theta_L, params.theta_U
    m = r.shape[0]
    terms = np.column_stack([
        r**2 * (1 - w) ** 2,
        r**2 * (1 - w) * w,
        r**2 * w**2,
        r * (1 - w),
        r * w,
    ])
    mu = terms.mean(axis=0)
    sigma = np.cov(terms, rowvar=False) / m
    e_l = e_u = 0.5
    cov = np.empty((2, 2))
    se = np.empty((2, 2))
    for j in range(2):
        for k in range(2):
            ll = _angular_cross(a_l, j, k)
            uu = _angular_cross(a_u, j, k)
            lu = 2 * e_l * e_u
            a, b, c, d, e = mu
            cov[j, k] = (a * ll + b * lu + c * uu
                         - d * d * e_l * e_l - d * e * lu - e * e * e_u * e_u)
            grad = np.array([ll, lu, uu,
                             -2 * d * e_l * e_l - e * lu,
                             -2 * e * e_u * e_u - d * lu])
            se[j, k] = np.sqrt(grad @ sigma @ grad)
    return cov, se


def covariance_mc(params, m=DEFAULT_SIMS, seed=None):
    """Monte Carlo covariance matrix of ``Y`` as a 2 x 2 nested list of :class:`MomentEstimate`.

    Each entry carries the expansion route in ``.decomposed``.  A warning is
    raised when ``xi >= 1/2`` (covariance may not exist).
    """
    params = _as_params(params)
    _check_sims(m)
    warning = None
    if params.radial.xi >= 0.5:
        warning = f"xi={params.radial.xi} >= 1/2: covariance may not exist"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    rng_direct, rng_decomp = _streams(seed)
    y = simulate(params, m, rng_direct).values
    cov, se = sample_covariance(y)
    r, w = _radial_weight_draws(params, m, rng_decomp)
    cov_d, se_d = covariance_expansion(params, r, w)
    return [[MomentEstimate(float(cov[j, k]), float(se[j, k]), m, seed, warning,
                            MomentEstimate(float(cov_d[j, k]), float(se_d[j, k]), m, seed, warning))
             for k in range(2)] for j in range(2)]


def covariance_values(estimates):
    """Plain 2 x 2 array of the direct values in a :func:`covariance_mc` result."""
    return np.array([[e.value for e in row] for row in estimates])
