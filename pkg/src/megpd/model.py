"""Bivariate multivariate-eGPD generative model.

A draw is ``Y = R * ((1 - w) * L + w * U)`` with ``R`` eGPD distributed,
``L = (V_L, 1 - V_L)`` and ``U = (V_U, 1 - V_U)`` for symmetric Beta variables
``V_L``, ``V_U``, and ``w = omega(F_R(R))``.  Since ``L`` and ``U`` lie on the
simplex, ``||Y||_1 = R`` for every draw.

Random stream layout
--------------------
For a block of ``n`` rows drawn from one generator the consumption order is
fixed: ``n`` uniforms for ``u0 = F_R(R)``, then the ``2n`` gamma variates for
``V_L`` (plus ``2n`` uniforms when ``theta_L < 1``), then the same for ``V_U``.
``theta_omega`` never touches the stream, so datasets simulated with the same
seed but different ``theta_omega`` share ``R``, ``L`` and ``U`` exactly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .dataset import Dataset
from .egpd import EgpdParams, egpd_quantile
from .errors import DomainError, InvalidParameterError

PARAM_NAMES = ("kappa", "sigma", "xi", "theta_L", "theta_U", "theta_omega")


@dataclass(frozen=True)
class MegpdParams:
    radial: EgpdParams
    theta_L: float
    theta_U: float
    theta_omega: float

    def __post_init__(self):
        if not isinstance(self.radial, EgpdParams):
            object.__setattr__(self, "radial", EgpdParams(*self.radial))
        for name in ("theta_L", "theta_U", "theta_omega"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not np.isfinite(v):
                raise InvalidParameterError(f"{name} must be finite, got {v}")
        if self.radial.xi <= 0:
            raise InvalidParameterError(f"xi must be > 0 for the multivariate model, got {self.radial.xi}")
        if self.theta_L <= 0:
            raise InvalidParameterError(f"theta_L must be > 0, got {self.theta_L}")
        if self.theta_U <= 0:
            raise InvalidParameterError(f"theta_U must be > 0, got {self.theta_U}")
        if not 0 < self.theta_omega < 0.5:
            raise InvalidParameterError(f"theta_omega must lie in (0, 0.5), got {self.theta_omega}")

    @classmethod
    def from_vector(cls, v):
        v = [float(x) for x in v]
        if len(v) != 6:
            raise InvalidParameterError(f"expected 6 parameters {PARAM_NAMES}, got {len(v)}")
        return cls(EgpdParams(v[0], v[1], v[2]), v[3], v[4], v[5])

    def as_vector(self):
        r = self.radial
        return np.array([r.kappa, r.sigma, r.xi, self.theta_L, self.theta_U, self.theta_omega])

    def to_dict(self):
        return dict(zip(PARAM_NAMES, (float(x) for x in self.as_vector())))

    @classmethod
    def from_dict(cls, d):
        return cls.from_vector([d[k] for k in PARAM_NAMES])

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return MegpdParams.from_dict(d)

    @property
    def lower_moment_condition(self):
        """True when E(L_j^-kappa) is finite, i.e. ``theta_L > kappa``."""
        return self.theta_L > self.radial.kappa


def weight_fn(u, theta_omega):
    """Beta(3, 3) CDF evaluated at ``(u - theta_omega) / (1 - 2 theta_omega)``, clamped to [0, 1]."""
    if not 0 < theta_omega < 0.5:
        raise InvalidParameterError(f"theta_omega must lie in (0, 0.5), got {theta_omega}")
    u_arr = np.asarray(u, dtype=float)
    if np.any(~((u_arr >= 0) & (u_arr <= 1))):
        raise DomainError("weight_fn requires 0 <= u <= 1")
    t = np.clip((u_arr - theta_omega) / (1.0 - 2.0 * theta_omega), 0.0, 1.0)
    out = t**3 * (10.0 - 15.0 * t + 6.0 * t * t)
    return float(out) if np.ndim(u) == 0 else out


def _log_gamma_variates(a, size, rng):
    """log of Gamma(a, 1) draws, stable for shapes well below 1.

    For ``a < 1`` uses ``G(a) = G(a + 1) * U ** (1 / a)`` in log space so tiny
    variates do not underflow to zero.
    """
    if a >= 1:
        return np.log(rng.standard_gamma(a, size))
    g = rng.standard_gamma(a + 1.0, size)
    u = rng.random(size)
    u[u == 0.0] = np.finfo(float).tiny
    return np.log(g) + np.log(u) / a


def _beta_symmetric_pair(a, size, rng):
    """``(V, 1 - V)`` for ``V ~ Beta(a, a)``, each side accurate near 0."""
    if not a > 0 or not np.isfinite(a):
        raise InvalidParameterError(f"Beta shape must be positive and finite, got {a}")
    lg = _log_gamma_variates(a, (2,) + tuple(np.atleast_1d(size)), rng)
    d = lg[0] - lg[1]
    return expit(d), expit(-d)


def beta_symmetric_sample(a, rng=None, size=None):
    """Draw from Beta(a, a) as ``G1 / (G1 + G2)`` with independent Gamma(a) variates."""
    rng = np.random.default_rng(rng)
    v, _ = _beta_symmetric_pair(a, 1 if size is None else size, rng)
    return float(v[0]) if size is None else v


@dataclass(frozen=True)
class LatentDraw:
    r: float
    u0: float
    l: np.ndarray
    u: np.ndarray
    w: float
    y: np.ndarray


@dataclass
class LatentSample:
    """Column-oriented latent variables for ``n`` draws; indexing yields :class:`LatentDraw`."""

    r: np.ndarray
    u0: np.ndarray
    l: np.ndarray
    u: np.ndarray
    w: np.ndarray
    y: np.ndarray

    def __len__(self):
        return self.r.shape[0]

    def __getitem__(self, i):
        return LatentDraw(float(self.r[i]), float(self.u0[i]), self.l[i].copy(), self.u[i].copy(),
                          float(self.w[i]), self.y[i].copy())

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


@dataclass
class RadialAngularDraws:
    """The theta_omega-free part of a simulation, reusable across weight parameters."""

    u0: np.ndarray
    r: np.ndarray
    l: np.ndarray
    u: np.ndarray

    def combine(self, theta_omega):
        w = weight_fn(self.u0, theta_omega)
        return w, _mix(self.r, self.l, self.u, w)


def _mix(r, l, u, w):
    return r[:, None] * ((1.0 - w)[:, None] * l + w[:, None] * u)


def _as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def draw_radial_angular(params, n, rng):
    """Draw ``u0``, ``R``, ``L``, ``U`` for ``n`` rows from a single stream."""
    rng = _as_generator(rng)
    u0 = rng.random(n)
    u0[u0 == 0.0] = np.finfo(float).tiny
    r = egpd_quantile(u0, params.radial)
    l1, l2 = _beta_symmetric_pair(params.theta_L, n, rng)
    u1, u2 = _beta_symmetric_pair(params.theta_U, n, rng)
    return RadialAngularDraws(u0, np.asarray(r), np.column_stack([l1, l2]), np.column_stack([u1, u2]))


def _draw_blocks(params, n, rng, streams, threads):
    rng = _as_generator(rng)
    if streams <= 1:
        return draw_radial_angular(params, n, rng)
    children = rng.spawn(streams)
    sizes = [n // streams + (1 if i < n % streams else 0) for i in range(streams)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(lambda a: draw_radial_angular(params, *a), zip(sizes, children)))
    return RadialAngularDraws(*(np.concatenate([getattr(p, f) for p in parts])
                                for f in ("u0", "r", "l", "u")))


def _validate(params, n):
    if not isinstance(params, MegpdParams):
        params = MegpdParams.from_vector(params)
    if int(n) != n or n < 1:
        raise InvalidParameterError(f"n must be a positive integer, got {n}")
    return params, int(n)


def simulate_latent(params, n, rng=None, *, streams=1, threads=1):
    """Simulate ``n`` draws and keep every latent variable.

    With ``streams > 1`` the rows are split into that many contiguous blocks,
    each drawn from an independent child of ``rng``; the output depends on
    ``streams`` but not on ``threads``.
    """
    params, n = _validate(params, n)
    base = _draw_blocks(params, n, rng, streams, threads)
    w, y = base.combine(params.theta_omega)
    return LatentSample(base.r, base.u0, base.l, base.u, w, y)


def simulate(params, n, rng=None, *, streams=1, threads=1):
    """Simulate an ``n x 2`` :class:`Dataset` from the model."""
    params, n = _validate(params, n)
    lat = simulate_latent(params, n, rng, streams=streams, threads=threads)
    return Dataset(lat.y, provenance={"simulated": params.to_dict()})
