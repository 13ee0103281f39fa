"""Neural Bayes point estimator built on a DeepSets network.

The network maps a dataset ``{y_i}`` to ``output_map(phi(mean_i psi(vst(y_i)) ++ log n))``,
where ``psi`` and ``phi`` are ReLU multilayer perceptrons and ``output_map``
squashes each output through a logistic onto its prior range.  Forward and
backward passes are written out by hand in numpy.

Weight layout
-------------
All weights live in one flat float64 vector.  Layers are stored in order,
``psi`` first and then ``phi``; each layer contributes its ``(fan_in, fan_out)``
weight matrix in C order followed by its bias of length ``fan_out``.

Model file
----------
A UTF-8 JSON object::

    {"format": "megpd-nbe", "format_version": 1,
     "architecture": {...}, "prior": {...}, "training_log": {...},
     "weights": {"dtype": "<f8", "count": N, "sha256": "...", "data": "<base64>"}}

``data`` is the little-endian float64 weight vector; ``sha256`` is taken over
those raw bytes.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.special import expit

from .dataset import Dataset
from .errors import (CorruptModelError, DataError, InvalidParameterError, PriorMismatchError,
                     TrainingDivergedError, VersionMismatchError)
from .model import PARAM_NAMES, MegpdParams, simulate

log = logging.getLogger(__name__)

FORMAT_NAME = "megpd-nbe"
FORMAT_VERSION = 1
PRIOR_NUDGE = 1e-6
# keeps squashed outputs off the open-interval endpoints of xi and theta_omega
OUTPUT_EDGE = 1e-9


def vst(x):
    """Variance-stabilizing transform ``sign(x) * log(1 + |x|) - 1``."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.log1p(np.abs(x)) - 1.0


@dataclass(frozen=True)
class PriorSpec:
    """Independent uniform prior over the six parameters and the sample size."""

    kappa: tuple = (0.1, 10.0)
    sigma: tuple = (0.1, 3.0)
    xi: tuple = (0.0, 0.5)
    theta_L: tuple = (0.1, 20.0)
    theta_U: tuple = (0.1, 20.0)
    theta_omega: tuple = (0.0, 0.5)
    n_range: tuple = (1000, 4000)

    def __post_init__(self):
        for name in PARAM_NAMES:
            lo, hi = (float(x) for x in getattr(self, name))
            object.__setattr__(self, name, (lo, hi))
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise InvalidParameterError(f"prior range for {name} must satisfy lo < hi, got {(lo, hi)}")
        lo_n, hi_n = self.n_range
        if int(lo_n) != lo_n or int(hi_n) != hi_n or not 1 <= lo_n <= hi_n:
            raise InvalidParameterError(f"n_range must be positive integers, got {self.n_range}")
        object.__setattr__(self, "n_range", (int(lo_n), int(hi_n)))

    @property
    def lower(self):
        return np.array([getattr(self, k)[0] for k in PARAM_NAMES], dtype=float)

    @property
    def upper(self):
        return np.array([getattr(self, k)[1] for k in PARAM_NAMES], dtype=float)

    def standardize(self, theta):
        """Map parameter vectors affinely onto [0, 1] per component."""
        return (np.asarray(theta, dtype=float) - self.lower) / (self.upper - self.lower)

    def unstandardize(self, s):
        return self.lower + np.asarray(s, dtype=float) * (self.upper - self.lower)

    def median(self):
        return 0.5 * (self.lower + self.upper)

    def to_dict(self):
        return {k: list(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: tuple(v) for k, v in d.items()})


@dataclass(frozen=True)
class NbeArchitecture:
    input_dim: int = 2
    width: int = 128
    psi_depth: int = 3
    phi_depth: int = 3
    summary_dim: int = 128
    output_dim: int = 6

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if int(v) != v or v < 1:
                raise InvalidParameterError(f"{f.name} must be a positive integer, got {v}")
            object.__setattr__(self, f.name, int(v))

    def psi_shapes(self):
        dims = [self.input_dim] + [self.width] * self.psi_depth + [self.summary_dim]
        return list(zip(dims[:-1], dims[1:]))

    def phi_shapes(self):
        dims = [self.summary_dim + 1] + [self.width] * self.phi_depth + [self.output_dim]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_params(self):
        return sum(i * o + o for i, o in self.psi_shapes() + self.phi_shapes())

    def offsets(self):
        """``(name, start, shape)`` for every weight and bias block of the flat vector."""
        out, pos = [], 0
        for net, shapes in (("psi", self.psi_shapes()), ("phi", self.phi_shapes())):
            for i, (fi, fo) in enumerate(shapes):
                out.append((f"{net}{i}.W", pos, (fi, fo)))
                pos += fi * fo
                out.append((f"{net}{i}.b", pos, (fo,)))
                pos += fo
        return out

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _unpack(arch, flat):
    """Views ``(psi_layers, phi_layers)`` of ``[(W, b), ...]`` into the flat vector."""
    layers = []
    pos = 0
    for fi, fo in arch.psi_shapes() + arch.phi_shapes():
        w = flat[pos:pos + fi * fo].reshape(fi, fo)
        pos += fi * fo
        b = flat[pos:pos + fo]
        pos += fo
        layers.append((w, b))
    k = len(arch.psi_shapes())
    return layers[:k], layers[k:]


def init_weights(arch, rng=None):
    """He-uniform weights (limit ``sqrt(6 / fan_in)``) and zero biases."""
    rng = np.random.default_rng(rng)
    flat = np.zeros(arch.n_params)
    psi, phi = _unpack(arch, flat)
    for w, _ in psi + phi:
        limit = np.sqrt(6.0 / w.shape[0])
        w[...] = rng.uniform(-limit, limit, w.shape)
    return flat


@dataclass
class NbeModel:
    architecture: NbeArchitecture
    weights: np.ndarray
    prior: PriorSpec
    training_log: dict = field(default_factory=dict)
    loss: str = "l1"

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1 or self.weights.size != self.architecture.n_params:
            raise InvalidParameterError(
                f"weight vector has {self.weights.size} entries, architecture needs {self.architecture.n_params}")

    @property
    def validation_risk(self):
        return self.training_log.get("best_val_risk", np.inf)

    def estimate(self, data):
        return deepsets_forward(self, data)


# ---------------------------------------------------------------- network


def _mlp_forward(layers, h, keep):
    acts = [h]
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        h = h @ w
        h += b
        if i < last:
            np.maximum(h, 0, out=h)
            if keep:
                acts.append(h)
    return h, acts


def _mlp_backward(layers, grads, acts, g, need_input_grad=False):
    """Accumulate parameter gradients into ``grads``; returns the input gradient if asked."""
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        gw, gb = grads[i]
        a_in = acts[i]
        gw[...] = a_in.T @ g
        gb[...] = g.sum(axis=0)
        if i > 0:
            g = g @ w.T
            # acts[i] is the ReLU output feeding layer i
            g *= a_in > 0
        elif need_input_grad:
            return g @ w.T
    return None


def _segment_starts(counts):
    starts = np.zeros(len(counts), dtype=np.intp)
    np.cumsum(counts[:-1], out=starts[1:])
    return starts


def _pool(z, counts):
    # per-segment sums of contiguous row blocks are much faster than reduceat on axis 0
    out = np.empty((len(counts), z.shape[1]), dtype=z.dtype)
    for i, (a, k) in enumerate(zip(_segment_starts(counts), counts)):
        z[a:a + k].sum(axis=0, out=out[i])
    return out / counts[:, None].astype(z.dtype)


def _phi_input(pooled, counts):
    return np.concatenate([pooled, np.log(counts.astype(pooled.dtype))[:, None]], axis=1)


def _network_output(arch, flat, x, counts, keep=False):
    psi, phi = _unpack(arch, flat)
    z, psi_acts = _mlp_forward(psi, x, keep)
    pooled = _pool(z, counts)
    o, phi_acts = _mlp_forward(phi, _phi_input(pooled, counts), keep)
    return expit(o), pooled, (psi_acts, phi_acts)


def loss_and_grad(arch, flat, x, counts, targets):
    """Mean L1 loss on standardized parameters and its gradient w.r.t. the flat weights.

    ``x`` stacks the transformed rows of all datasets in the batch, ``counts``
    gives the number of rows of each consecutive dataset, and ``targets`` are
    the standardized parameters (``len(counts) x 6``).  Computation runs in
    ``flat.dtype``.
    """
    counts = np.asarray(counts)
    s, _, (psi_acts, phi_acts) = _network_output(arch, flat, x, counts, keep=True)
    nb = len(counts)
    diff = s - targets
    loss = float(np.abs(diff).sum(axis=1).mean())

    grad = np.zeros_like(flat)
    psi, phi = _unpack(arch, flat)
    gpsi, gphi = _unpack(arch, grad)
    g = np.sign(diff) * s * (1.0 - s) / nb
    g_in = _mlp_backward(phi, gphi, phi_acts, g.astype(flat.dtype, copy=False), need_input_grad=True)
    g_pooled = g_in[:, :arch.summary_dim] / counts[:, None].astype(flat.dtype)
    g_z = np.repeat(g_pooled, counts, axis=0)
    _mlp_backward(psi, gpsi, psi_acts, g_z)
    return loss, grad


def _prepare(values, input_dim):
    """Canonically ordered, transformed rows of one dataset.

    Sorting the rows first makes the floating-point mean exactly invariant to
    the order in which replicates are supplied.
    """
    y = np.asarray(values, dtype=float)
    if y.ndim != 2 or y.shape[1] != input_dim:
        raise DataError(f"expected an n x {input_dim} matrix, got shape {y.shape}")
    if y.shape[0] < 1:
        raise DataError("dataset has no rows")
    order = np.lexsort(y.T[::-1])
    return vst(y[order])


def _values(data):
    return data.values if isinstance(data, Dataset) else np.asarray(data, dtype=float)


def _squashed_to_params(prior, s):
    s = np.clip(s, OUTPUT_EDGE, 1.0 - OUTPUT_EDGE)
    return prior.unstandardize(s)


def pooled_summary(model, data):
    """Mean of ``psi`` over the rows of ``data`` (the permutation-invariant summary)."""
    x = _prepare(_values(data), model.architecture.input_dim)
    psi, _ = _unpack(model.architecture, model.weights)
    z, _ = _mlp_forward(psi, x, keep=False)
    return _pool(z, np.array([x.shape[0]]))[0]


def estimate_vector(model, data):
    """Point estimate as a length-6 array inside the prior ranges."""
    x = _prepare(_values(data), model.architecture.input_dim)
    s, _, _ = _network_output(model.architecture, model.weights, x, np.array([x.shape[0]]))
    return _squashed_to_params(model.prior, s[0])


def deepsets_forward(model, data):
    """Apply the trained estimator to one dataset and return :class:`MegpdParams`."""
    return MegpdParams.from_vector(estimate_vector(model, data))


def estimate_batch(model, datasets, batch_size=64):
    """Estimates (``len(datasets) x 6``) for many datasets, batched through the network."""
    arch = model.architecture
    out = []
    for i in range(0, len(datasets), batch_size):
        xs = [_prepare(_values(d), arch.input_dim) for d in datasets[i:i + batch_size]]
        counts = np.array([x.shape[0] for x in xs])
        s, _, _ = _network_output(arch, model.weights, np.concatenate(xs), counts)
        out.append(_squashed_to_params(model.prior, s))
    return np.concatenate(out) if out else np.empty((0, 6))


# ---------------------------------------------------------------- training data


def _prior_arrays(prior, K, rng):
    rng = np.random.default_rng(rng)
    if int(K) != K or K < 1:
        raise InvalidParameterError(f"K must be a positive integer, got {K}")
    K = int(K)
    theta = rng.uniform(prior.lower, prior.upper, size=(K, 6))
    theta[:, 2] = np.maximum(theta[:, 2], PRIOR_NUDGE)
    theta[:, 5] = np.clip(theta[:, 5], PRIOR_NUDGE, 0.5 - PRIOR_NUDGE)
    n = rng.integers(prior.n_range[0], prior.n_range[1] + 1, size=K)
    return theta, n


def prior_sample(prior, K, rng=None):
    """``K`` independent ``(MegpdParams, n)`` draws from the prior.

    ``xi`` is floored at 1e-6 and ``theta_omega`` kept 1e-6 inside (0, 0.5), since
    the model needs both strictly inside their intervals.
    """
    theta, n = _prior_arrays(prior, K, rng)
    return [(MegpdParams.from_vector(t), int(k)) for t, k in zip(theta, n)]


@dataclass
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 10
    max_epochs: int = 500
    max_seconds: float | None = None
    validation_fraction: float = 0.1
    dtype: str = "float32"
    workers: int = 1
    queue_size: int = 4

    def to_dict(self):
        return asdict(self)


class _PairSource:
    """Parameter draws plus a per-pair seed so each dataset can be re-simulated on demand."""

    def __init__(self, prior, K, seq):
        param_seq, data_seq = seq.spawn(2)
        self.theta, self.n = _prior_arrays(prior, K, np.random.default_rng(param_seq))
        self.targets = prior.standardize(self.theta)
        self._data_seq = data_seq

    def __len__(self):
        return len(self.n)

    def dataset(self, k):
        seq = np.random.SeedSequence(self._data_seq.entropy,
                                     spawn_key=self._data_seq.spawn_key + (int(k),))
        params = MegpdParams.from_vector(self.theta[k])
        return simulate(params, int(self.n[k]), np.random.default_rng(seq)).values

    def batch(self, idx, dtype, pool=None):
        sims = list(pool.map(self.dataset, idx)) if pool is not None else [self.dataset(k) for k in idx]
        xs = [_prepare(y, 2) for y in sims]
        x = np.concatenate(xs).astype(dtype, copy=False)
        return x, self.n[idx].copy(), self.targets[idx].astype(dtype)


def _producer(source, batches, dtype, workers, out, stop):
    try:
        pool = ThreadPoolExecutor(workers) if workers > 1 else None
        try:
            for idx in batches:
                if stop.is_set():
                    return
                out.put(source.batch(idx, dtype, pool))
        finally:
            if pool is not None:
                pool.shutdown()
        out.put(None)
    except BaseException as exc:  # surfaced in the consumer
        out.put(exc)


def _iterate_batches(source, batches, dtype, workers, queue_size):
    """Yield batches simulated by a background producer over a bounded queue."""
    out = queue.Queue(maxsize=max(1, queue_size))
    stop = threading.Event()
    th = threading.Thread(target=_producer, args=(source, batches, dtype, workers, out, stop), daemon=True)
    th.start()
    try:
        while True:
            item = out.get()
            if item is None:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        # drain so the producer can exit if it is blocked on put
        while th.is_alive():
            try:
                out.get(timeout=0.05)
            except queue.Empty:
                pass
        th.join()


def _risk(arch, flat, batches):
    total, count = 0.0, 0
    for x, counts, targets in batches:
        s, _, _ = _network_output(arch, flat, x, counts)
        total += float(np.abs(s - targets).sum(axis=1).sum())
        count += len(counts)
    return total / count


def train_nbe(prior=None, arch=None, K=100_000, seed=None, hyper=None, progress=None):
    """Train a neural Bayes estimator by minimizing the mean L1 loss on standardized parameters.

    Training pairs are drawn once from the prior; their datasets are re-simulated
    from per-pair seeds every epoch by a producer thread, so memory does not grow
    with ``K``.  ``ceil(K * validation_fraction)`` extra pairs are simulated once
    for validation.  Adam updates run on float64 master weights while the
    network is evaluated in ``hyper.dtype``.  Training stops after ``patience``
    epochs without a new minimum of the validation risk (or at ``max_epochs`` /
    ``max_seconds``) and the best checkpoint is returned.
    """
    prior = prior or PriorSpec()
    arch = arch or NbeArchitecture()
    hyper = hyper or TrainConfig()
    if K < 1:
        raise InvalidParameterError(f"K must be positive, got {K}")
    dtype = np.dtype(hyper.dtype)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    init_seq, train_seq, val_seq, order_seq = root.spawn(4)

    weights = init_weights(arch, np.random.default_rng(init_seq))
    train = _PairSource(prior, K, train_seq)
    n_val = max(1, int(np.ceil(K * hyper.validation_fraction)))
    val = _PairSource(prior, n_val, val_seq)
    bs = hyper.batch_size
    val_batches = [val.batch(np.arange(i, min(i + bs, n_val)), dtype) for i in range(0, n_val, bs)]
    baseline = float(np.mean(np.abs(val.targets - 0.5).sum(axis=1)))

    m = np.zeros_like(weights)
    v = np.zeros_like(weights)
    step = 0
    order_rng = np.random.default_rng(order_seq)
    best = (np.inf, weights.copy(), 0)
    history = []
    stop_reason = "max_epochs"
    t_start = time.perf_counter()

    for epoch in range(1, hyper.max_epochs + 1):
        t0 = time.perf_counter()
        perm = order_rng.permutation(K)
        batches = [perm[i:i + bs] for i in range(0, K, bs)]
        total = 0.0
        for b, (x, counts, targets) in enumerate(
                _iterate_batches(train, batches, dtype, hyper.workers, hyper.queue_size)):
            loss, grad = loss_and_grad(arch, weights.astype(dtype), x, counts, targets)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDivergedError(f"non-finite training risk at epoch {epoch}, batch {b}")
            grad = grad.astype(np.float64)
            step += 1
            m = hyper.beta1 * m + (1 - hyper.beta1) * grad
            v = hyper.beta2 * v + (1 - hyper.beta2) * grad * grad
            m_hat = m / (1 - hyper.beta1**step)
            v_hat = v / (1 - hyper.beta2**step)
            weights -= hyper.learning_rate * m_hat / (np.sqrt(v_hat) + hyper.adam_eps)
            total += loss * len(counts)
        train_risk = total / K
        val_risk = _risk(arch, weights.astype(dtype), val_batches)
        if not np.isfinite(val_risk):
            raise TrainingDivergedError(f"non-finite validation risk at epoch {epoch}")
        # wall-clock time is logged but kept out of the model so reruns are byte-identical
        history.append({"epoch": epoch, "train_risk": train_risk, "val_risk": val_risk})
        log.info("epoch %d: train %.5f  val %.5f  (%.1f s)", epoch, train_risk, val_risk,
                 time.perf_counter() - t0)
        if progress is not None:
            progress(history[-1])
        if val_risk < best[0]:
            best = (val_risk, weights.copy(), epoch)
        elif epoch - best[2] >= hyper.patience:
            stop_reason = "patience"
            break
        if hyper.max_seconds is not None and time.perf_counter() - t_start > hyper.max_seconds:
            stop_reason = "max_seconds"
            break

    training_log = {
        "epochs": history,
        "stop_reason": stop_reason,
        "best_epoch": best[2],
        "best_val_risk": best[0],
        "baseline_val_risk": baseline,
        "K": int(K),
        "n_validation": n_val,
        "seed": _seed_record(root),
        "config": hyper.to_dict(),
    }
    return NbeModel(arch, best[1], prior, training_log)


def _seed_record(seq):
    entropy = seq.entropy
    entropy = [int(e) for e in entropy] if isinstance(entropy, (list, tuple)) else int(entropy)
    return {"entropy": entropy, "spawn_key": [int(k) for k in seq.spawn_key]}


def constant_predictor_risk(prior, thetas):
    """L1 risk of always predicting the prior midpoint, on standardized parameters."""
    return float(np.mean(np.abs(prior.standardize(thetas) - 0.5).sum(axis=1)))


def l1_risk(prior, thetas, estimates):
    return float(np.mean(np.abs(prior.standardize(estimates) - prior.standardize(thetas)).sum(axis=1)))


# ---------------------------------------------------------------- ensembles


def ensemble_estimate(models, data, aggregate="best"):
    """Combine several estimators trained under one prior.

    ``aggregate="best"`` returns the estimate of the member with the lowest
    validation risk; ``"median"`` takes the per-parameter median of all members.
    """
    models = list(models)
    if not models:
        raise InvalidParameterError("need at least one model")
    prior = models[0].prior
    for mdl in models[1:]:
        if mdl.prior != prior:
            raise PriorMismatchError("ensemble members were trained under different priors")
    if aggregate == "best":
        chosen = min(models, key=lambda mdl: mdl.validation_risk)
        return deepsets_forward(chosen, data)
    if aggregate == "median":
        est = np.array([estimate_vector(mdl, data) for mdl in models])
        return MegpdParams.from_vector(np.median(est, axis=0))
    raise ValueError(f"unknown aggregate {aggregate!r}")


# ---------------------------------------------------------------- persistence


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def save_model(model, path):
    raw = model.weights.astype("<f8").tobytes()
    doc = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "architecture": model.architecture.to_dict(),
        "prior": model.prior.to_dict(),
        "loss": model.loss,
        "training_log": _json_safe(model.training_log),
        "weights": {
            "dtype": "<f8",
            "count": int(model.weights.size),
            "sha256": hashlib.sha256(raw).hexdigest(),
            "data": base64.b64encode(raw).decode("ascii"),
        },
    }
    Path(path).write_text(json.dumps(doc))


def load_model(path, expected_architecture=None):
    """Read a model file written by :func:`save_model`.

    Raises :class:`CorruptModelError` for unreadable or checksum-failing files and
    :class:`VersionMismatchError` for an unknown format version or an
    architecture header that does not match the payload (or
    ``expected_architecture``).
    """
    try:
        doc = json.loads(Path(path).read_text())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptModelError(f"{path}: not a readable model file ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise CorruptModelError(f"{path}: missing {FORMAT_NAME!r} format tag")
    if doc.get("format_version") != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {doc.get('format_version')!r}, this build reads {FORMAT_VERSION}")
    try:
        arch = NbeArchitecture.from_dict(doc["architecture"])
        prior = PriorSpec.from_dict(doc["prior"])
        wdoc = doc["weights"]
        raw = base64.b64decode(wdoc["data"], validate=True)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModelError(f"{path}: malformed model file ({exc})") from None
    if hashlib.sha256(raw).hexdigest() != wdoc.get("sha256"):
        raise CorruptModelError(f"{path}: weight checksum mismatch")
    weights = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if weights.size != arch.n_params or wdoc.get("count") != weights.size:
        raise VersionMismatchError(
            f"{path}: architecture header needs {arch.n_params} weights, payload has {weights.size}")
    if expected_architecture is not None and arch != expected_architecture:
        raise VersionMismatchError(f"{path}: architecture {arch} differs from expected {expected_architecture}")
    log_doc = doc.get("training_log", {})
    if isinstance(log_doc.get("best_val_risk"), str):
        log_doc["best_val_risk"] = float(log_doc["best_val_risk"])
    return NbeModel(arch, weights, prior, log_doc, doc.get("loss", "l1"))
