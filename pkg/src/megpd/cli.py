"""Command-line interface: ``megpd simulate | fit | train | diagnose | ingest``.

Exit codes: 0 success, 2 configuration error, 3 data or fit error, 4 training
divergence.  Options may also come from a JSON file given with ``--config``
(keys are option names with dashes or underscores); explicit flags win.
``--threads`` defaults to the ``MEGPD_THREADS`` environment variable, else 1.
Each output is accompanied by a JSON manifest holding the resolved options.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data_io import FALL_WINTER, load_station_csv, make_pair_dataset
from .dataset import Dataset, _json_default
from .diagnostics import DiagnosticsReport, chi_curve, qq_with_bands
from .errors import (DataError, InvalidParameterError, MegpdError, ModelFileError, ParseError,
                     TrainingDivergedError)
from .fit_classical import HybridFitError, fit_hybrid
from .model import PARAM_NAMES, MegpdParams, simulate
from .moments import DEFAULT_SIMS
from .nbe import (NbeArchitecture, PriorSpec, TrainConfig, ensemble_estimate, load_model, save_model,
                  train_nbe)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4
THREADS_ENV = "MEGPD_THREADS"

log = logging.getLogger("megpd")


class ConfigError(Exception):
    pass


def _parse_params(text):
    try:
        values = [float(v) for v in str(text).split(",")] if not isinstance(text, list) else [float(v) for v in text]
    except ValueError:
        raise ConfigError(f"--params must be six comma-separated numbers, got {text!r}") from None
    if len(values) != 6:
        raise ConfigError(f"--params needs six values {','.join(PARAM_NAMES)}, got {len(values)}")
    try:
        return MegpdParams.from_vector(values)
    except InvalidParameterError as exc:
        raise ConfigError(f"invalid parameters: {exc}") from None


def _default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _manifest(args, **extra):
    opts = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    out = {"program": "megpd", "version": __version__, "command": args.command, "options": opts}
    out.update(extra)
    return out


def _need_seed(args):
    if args.seed is None:
        raise ConfigError(f"'{args.command}' is stochastic and requires --seed")


def _load_dataset(path):
    try:
        return Dataset.from_csv(path)
    except FileNotFoundError:
        raise DataError(f"data file {path} not found") from None


# ---------------------------------------------------------------- subcommands


def cmd_simulate(args):
    _need_seed(args)
    if args.params is None:
        raise ConfigError("simulate requires --params")
    params = _parse_params(args.params)
    if args.n is None or args.n < 1:
        raise ConfigError("simulate requires a positive --n")
    rng = np.random.default_rng(args.seed)
    data = simulate(params, args.n, rng, streams=args.streams, threads=args.threads)
    out = Path(args.out)
    data.to_csv(out)
    data.write_manifest(out.with_suffix(out.suffix + ".manifest.json"), run=_manifest(args))
    return EXIT_OK


def _fit_once(data, args, models, seed):
    if args.method == "hybrid":
        fit = fit_hybrid(data, q_L=args.q_lower, q_U=args.q_upper, m=args.m, seed=seed,
                         criterion=args.criterion)
        return fit.params, fit.to_dict()
    params = ensemble_estimate(models, data, aggregate=args.aggregate)
    return params, {"method": "nbe", "estimates": params.to_dict(), "members": len(models),
                    "aggregate": args.aggregate}


def cmd_fit(args):
    if args.data is None:
        raise ConfigError("fit requires --data")
    if args.method == "hybrid" or args.bootstrap:
        _need_seed(args)
    models = []
    if args.method == "nbe":
        if not args.model:
            raise ConfigError("--method nbe requires at least one --model")
        try:
            models = [load_model(p) for p in args.model]
        except FileNotFoundError as exc:
            raise DataError(f"model file not found: {exc.filename}") from None
    data = _load_dataset(args.data)
    root = np.random.SeedSequence(args.seed)
    fit_seq, boot_seq = root.spawn(2)
    fit_seed = int(fit_seq.generate_state(1)[0])
    params, result = _fit_once(data, args, models, fit_seed)
    if args.bootstrap:
        children = boot_seq.spawn(args.bootstrap)
        est = []
        for child in children:
            sim_seq, refit_seq = child.spawn(2)
            sim = simulate(params, data.n, np.random.default_rng(sim_seq))
            est.append(_fit_once(sim, args, models, int(refit_seq.generate_state(1)[0]))[0].as_vector())
        est = np.array(est)
        lo, hi = np.percentile(est, [2.5, 97.5], axis=0)
        result["bootstrap"] = {"B": args.bootstrap, "kind": "parametric",
                               "intervals": {n: [float(a), float(b)] for n, a, b in zip(PARAM_NAMES, lo, hi)}}
    result["manifest"] = _manifest(args)
    _write_json(args.out, result)
    return EXIT_OK


def cmd_train(args):
    _need_seed(args)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    arch = NbeArchitecture(width=args.width, summary_dim=args.summary_dim)
    hyper = TrainConfig(batch_size=args.batch_size, learning_rate=args.learning_rate,
                        patience=args.patience, max_epochs=args.max_epochs, dtype=args.dtype,
                        workers=args.threads)
    prior = PriorSpec()
    rows, files = [], []
    for i, seq in enumerate(np.random.SeedSequence(args.seed).spawn(args.members)):
        model = train_nbe(prior, arch, K=args.K, seed=seq, hyper=hyper)
        path = outdir / f"member_{i}.json"
        save_model(model, path)
        files.append(path.name)
        rows += [[i, e["epoch"], repr(e["train_risk"]), repr(e["val_risk"])]
                 for e in model.training_log["epochs"]]
    with (outdir / "training_log.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["member", "epoch", "train_risk", "val_risk"])
        w.writerows(rows)
    _write_json(outdir / "manifest.json", _manifest(args, files=files))
    return EXIT_OK


def _params_for_diagnose(args):
    if args.params is not None:
        return _parse_params(args.params)
    if args.fit is not None:
        try:
            doc = json.loads(Path(args.fit).read_text())
            return MegpdParams.from_dict(doc["estimates"])
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read estimates from {args.fit}: {exc}") from None
    raise ConfigError("diagnose requires --params or --fit")


def cmd_diagnose(args):
    params = _params_for_diagnose(args)
    _need_seed(args)
    if args.data is None:
        raise ConfigError("diagnose requires --data")
    data = _load_dataset(args.data)
    rng = np.random.default_rng(args.seed)
    seqs = rng.spawn(5)
    report = DiagnosticsReport(manifest=_manifest(args))
    for tail, r in zip(("upper", "lower"), seqs[:2]):
        report.chi.append(chi_curve(data, tail, params, B=args.B, rng=r, threads=args.threads))
    for target, r in zip(("margin1", "margin2", "sum"), seqs[2:]):
        report.qq.append(qq_with_bands(data, params, target, B=args.B, rng=r, threads=args.threads))
    report.write(args.out_dir)
    return EXIT_OK


def cmd_ingest(args):
    if not args.station_a or not args.station_b:
        raise ConfigError("ingest requires --station-a and --station-b")
    try:
        a = load_station_csv(args.station_a, args.format, drop_suspect=not args.keep_suspect)
        b = load_station_csv(args.station_b, args.format, drop_suspect=not args.keep_suspect)
    except FileNotFoundError as exc:
        raise DataError(f"station file not found: {exc.filename}") from None
    months = tuple(int(m) for m in str(args.months).split(","))
    try:
        y0, y1 = (int(v) for v in str(args.years).split("-"))
    except ValueError:
        raise ConfigError(f"--years must look like 1999-2024, got {args.years!r}") from None
    data = make_pair_dataset(a, b, months=months, years=(y0, y1), scale=not args.no_scale)
    out = Path(args.out)
    data.to_csv(out)
    data.write_manifest(out.with_suffix(out.suffix + ".manifest.json"), run=_manifest(args))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults")
    common.add_argument("--seed", type=int, help="random seed (required for stochastic commands)")
    common.add_argument("--threads", type=int, default=_default_threads(),
                        help=f"worker threads (default ${THREADS_ENV} or 1); 1 is deterministic")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="megpd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"megpd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = sub.choices

    p = sub.add_parser("simulate", parents=[common], help="simulate a dataset from the model")
    p.add_argument("--params", help="kappa,sigma,xi,theta_L,theta_U,theta_omega")
    p.add_argument("--n", type=int)
    p.add_argument("--streams", type=int, default=1, help="independent random streams (blocks of rows)")
    p.add_argument("--out", default="simulated.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="estimate parameters from a dataset CSV")
    p.add_argument("--data")
    p.add_argument("--method", choices=("hybrid", "nbe"), default="hybrid")
    p.add_argument("--model", action="append", help="NBE model file (repeat for an ensemble)")
    p.add_argument("--aggregate", choices=("best", "median"), default="best")
    p.add_argument("--q-lower", type=float, default=0.10)
    p.add_argument("--q-upper", type=float, default=0.95)
    p.add_argument("--m", type=int, default=DEFAULT_SIMS, help="simulations for the moment criterion")
    p.add_argument("--criterion", choices=("cov", "moments"), default="cov")
    p.add_argument("--bootstrap", type=int, default=0, metavar="B",
                   help="parametric-bootstrap replicates for percentile intervals")
    p.add_argument("--out", default="fit.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("train", parents=[common], help="train neural Bayes estimators")
    p.add_argument("--out-dir", default="models")
    p.add_argument("--members", type=int, default=5)
    p.add_argument("--K", type=int, default=100_000)
    p.add_argument("--max-epochs", type=int, default=500)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--summary-dim", type=int, default=128)
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("diagnose", parents=[common], help="chi curves and QQ data with bootstrap bands")
    p.add_argument("--data")
    p.add_argument("--params", help="kappa,sigma,xi,theta_L,theta_U,theta_omega")
    p.add_argument("--fit", help="fit JSON written by 'megpd fit'")
    p.add_argument("--B", type=int, default=200)
    p.add_argument("--out-dir", default="diagnostics")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("ingest", parents=[common], help="build a scaled pair dataset from two station files")
    p.add_argument("--station-a")
    p.add_argument("--station-b")
    p.add_argument("--format", choices=("eca_d", "plain"), default="eca_d")
    p.add_argument("--months", default=",".join(str(m) for m in FALL_WINTER))
    p.add_argument("--years", default="1999-2024")
    p.add_argument("--no-scale", action="store_true")
    p.add_argument("--keep-suspect", action="store_true")
    p.add_argument("--out", default="pair.csv")
    p.set_defaults(func=cmd_ingest)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from the ``--config`` JSON file, if any."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    sub = parser.subcommands[args.command]
    known = {a.dest for a in sub._actions}
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise ConfigError(f"unknown config keys for '{args.command}': {unknown}")
    if "params" in cfg and isinstance(cfg["params"], list):
        cfg["params"] = ",".join(str(v) for v in cfg["params"])
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None):
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except ConfigError as exc:
        print(f"megpd: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidParameterError) as exc:
        print(f"megpd: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"megpd: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except HybridFitError as exc:
        print(f"megpd: fit failed at stage '{exc.stage}': {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, ParseError, ModelFileError, MegpdError, OSError) as exc:
        print(f"megpd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
