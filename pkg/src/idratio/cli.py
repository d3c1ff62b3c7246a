"""Command-line front end: ``idratio {generate,knn,estimate,sweep}``.

Every file written is accompanied by ``<stem>.manifest.json`` holding the
command line, seed, input digest, library version, timestamp and the fully
resolved parameters. Exit codes: 0 success, 1 runtime/data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import IdRatioError
from .estimators import (
    RECORD_FIELDS,
    IdEstimate,
    cride_bayes,
    cride_mle,
    gride_mle,
    gride_posterior,
    twonn_bayes,
    twonn_ls,
    twonn_mle,
)
from .geometry import (
    NeighborTable,
    consecutive_ratios,
    deduplicate,
    default_threads,
    generic_ratios,
    knn_table,
    load_point_cloud,
)
from .scale import DEFAULT_DECIMATION_REPLICATES, DEFAULT_N1, gride_sweep, twonn_decimation_sweep
from .synthgen import SPIRAL_NOISE_SD, gaussian_orthonoise, pivot_process, spiral3d, uniform_hypercube

METHODS = ("twonn-ls", "twonn-mle", "twonn-bayes", "cride", "cride-bayes", "gride", "gride-bayes")
THREADS_ENV = "IDRATIO_THREADS"


class UsageError(Exception):
    """Bad flag combination detected after parsing (exit code 2)."""


# ---------------------------------------------------------------- helpers

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _stem(path):
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".json", ".csv") else p


def _write_manifest(args, argv, outputs, resolved, input_path=None):
    stem = _stem(outputs[0])
    manifest = {
        "command": ["idratio", *argv],
        "subcommand": args.command,
        "seed": args.seed,
        "input": str(input_path) if input_path else None,
        "input_sha256": _sha256(input_path) if input_path else None,
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "parameters": resolved,
        "outputs": [str(o) for o in outputs],
    }
    path = Path(f"{stem}.manifest.json")
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _resolved(args):
    skip = {"func", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _load(args):
    cloud = load_point_cloud(args.input, format=args.format, has_header=args.header)
    if args.dedupe:
        cloud = deduplicate(cloud)
    return cloud


def _threads(args):
    return default_threads() if args.threads is None else args.threads


def _neighbors(args, cloud, K):
    """kNN table of order ``K``, read from or stored in ``--cache-dir`` when given."""
    cache = None
    if args.cache_dir:
        key = f"{_sha256(args.input)}-{args.format}-{int(args.header)}-{int(args.dedupe)}"
        cache = Path(args.cache_dir) / f"knn-{hashlib.sha256(key.encode()).hexdigest()[:20]}-K{K}-euclidean.npz"
        if cache.exists():
            with np.load(cache) as z:
                return NeighborTable(z["distances"], z["indices"], "euclidean")
    table = knn_table(cloud, K, threads=_threads(args))
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        np.savez(cache, distances=table.distances, indices=table.indices)
    return table


def _order_for(args):
    if args.method.startswith("twonn"):
        return 2, "TWO-NN needs 2 neighbors"
    if args.method.startswith("cride"):
        return args.L, f"cride with L={args.L}"
    return args.n2, f"gride with n1={args.n1}, n2={args.n2}"


def _resolve_k(args, cloud, need, what):
    if args.k is not None and args.k < need:
        raise IdRatioError(f"{what} needs neighbor order {need} but --k {args.k} was given; use --k {need}")
    K = need if args.k is None else args.k
    if K > cloud.n - 1:
        raise IdRatioError(f"{what} needs {need} neighbors but the dataset has only {cloud.n} points")
    return K


# ---------------------------------------------------------------- commands

def cmd_generate(args, argv):
    if args.kind == "spiral":
        cloud = spiral3d(args.n, args.noise_sd, args.seed)
    elif args.kind == "pivot":
        proc = pivot_process(args.n, args.d, args.rho, args.seed)
        cloud = proc.with_pivot() if args.with_pivot else proc.cloud
    elif args.kind == "gaussian":
        cloud = gaussian_orthonoise(args.n, args.signal_dim, args.noise_dim, args.sigma2, args.seed)
    else:
        cloud = uniform_hypercube(args.n, args.d, args.seed)
    cloud.to_csv(args.output)
    _write_manifest(args, argv, [args.output], _resolved(args))
    print(f"wrote {cloud.n} x {cloud.D} points to {args.output}")
    return 0


def cmd_knn(args, argv):
    cloud = _load(args)
    if args.k is None:
        raise UsageError("knn requires --k")
    table = _neighbors(args, cloud, _resolve_k(args, cloud, args.k, "knn"))
    table.to_csv(args.output)
    _write_manifest(args, argv, [args.output], _resolved(args), args.input)
    print(f"wrote {table.n} x {table.K} neighbor table to {args.output}")
    return 0


def _estimate(args, table, cloud):
    m = args.method
    if m.startswith("twonn"):
        mu = generic_ratios(table, 1, 2)
        if m == "twonn-ls":
            return twonn_ls(mu, args.trim, args.level)
        if m == "twonn-mle":
            return twonn_mle(mu, args.level)
        b = twonn_bayes(mu, args.prior_shape, args.prior_rate, args.level)
        return IdEstimate(b.mean, b.credible_low, b.credible_high, args.level, m, len(mu),
                          scale=mu.mean_scale, n1=1, n2=2)
    if m.startswith("cride"):
        ratios = consecutive_ratios(table, args.L)
        scale = float(np.mean((table.distances[:, 0] + table.distances[:, args.L - 1]) / 2))
        if m == "cride":
            return replace(cride_mle(ratios, args.level), scale=scale)
        b = cride_bayes(ratios, args.prior_shape, args.prior_rate, args.level)
        return IdEstimate(b.mean, b.credible_low, b.credible_high, args.level, m,
                          ratios.n * (ratios.L - 1), scale=scale, L=args.L)
    mu = generic_ratios(table, args.n1, args.n2)
    d_max = args.d_max if args.d_max is not None else 10.0 * cloud.D
    if m == "gride":
        return gride_mle(mu, args.level, args.uncertainty, args.bootstrap_reps, args.seed, d_max)
    post = gride_posterior(mu, args.prior_shape, args.prior_rate, args.level, d_max=d_max)
    return IdEstimate(post.mean, post.credible_low, post.credible_high, args.level, m, len(mu),
                      scale=mu.mean_scale, n1=args.n1, n2=args.n2)


def cmd_estimate(args, argv):
    if args.method.startswith("gride") and not 1 <= args.n1 < args.n2:
        raise UsageError("need 1 <= --n1 < --n2")
    if args.method.startswith("cride") and args.L < 2:
        raise UsageError("need --L >= 2")
    cloud = _load(args)
    need, what = _order_for(args)
    K = _resolve_k(args, cloud, need, what)
    est = _estimate(args, _neighbors(args, cloud, K), cloud)
    record = est.to_record()
    if record["seed"] is None and args.method == "gride" and args.uncertainty == "bootstrap":
        record["seed"] = args.seed
    text = json.dumps(record, indent=2) + "\n"
    print(
        f"{est.method}: d_hat={est.d_hat:.6g} [{est.interval_low:.6g}, {est.interval_high:.6g}] "
        f"({100 * est.level:g}%) n_eff={est.n_eff}"
    )
    if args.output is None:
        sys.stdout.write(text)
        return 0
    stem = _stem(args.output)
    json_path, csv_path = Path(f"{stem}.json"), Path(f"{stem}.csv")
    json_path.write_text(text, encoding="utf-8")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        writer.writerow(["" if record[k] is None else (repr(record[k]) if isinstance(record[k], float)
                                                      else record[k]) for k in RECORD_FIELDS])
    _write_manifest(args, argv, [json_path, csv_path], _resolved(args), args.input)
    return 0


def cmd_sweep(args, argv):
    cloud = _load(args)
    descriptor = os.path.basename(args.input)
    if args.protocol == "decimation":
        table = twonn_decimation_sweep(
            cloud, args.halvings, args.replicates, args.level, args.seed, _threads(args), descriptor
        )
    else:
        n1_values = tuple(args.n1) if args.n1 else DEFAULT_N1
        need = args.ratio * max(n1_values)
        K = _resolve_k(args, cloud, need, f"sweep with ratio {args.ratio} up to n1={max(n1_values)}")
        d_max = args.d_max if args.d_max is not None else 10.0 * cloud.D
        table = gride_sweep(
            _neighbors(args, cloud, K), args.ratio, n1_values, args.level, args.uncertainty,
            args.bootstrap_reps, args.seed, d_max, descriptor,
        )
    if args.output is None:
        table.to_csv(sys.stdout)
        return 0
    table.to_csv(args.output)
    _write_manifest(args, argv, [args.output], _resolved(args), args.input)
    print(f"wrote {len(table)} sweep rows to {args.output}")
    return 0


# ---------------------------------------------------------------- parser

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _level(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"level must lie in (0, 1), got {text}")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    common.add_argument("--threads", type=_positive_int, default=None,
                        help=f"worker threads for kNN (default ${THREADS_ENV} or 1)")
    common.add_argument("--dedupe", action="store_true", help="drop exact duplicate points first")
    common.add_argument("--k", type=_positive_int, default=None, help="neighbor order of the kNN table")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("input", help="point cloud file")
    data.add_argument("--format", choices=("csv", "whitespace"), default="csv")
    data.add_argument("--header", action="store_true", help="input has a header row")
    data.add_argument("--cache-dir", default=None, help="cache kNN tables here (npz)")

    parser = argparse.ArgumentParser(prog="idratio", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"idratio {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic point cloud")
    g.add_argument("kind", choices=("spiral", "pivot", "gaussian", "uniform"))
    g.add_argument("output")
    g.add_argument("--n", type=_positive_int, required=True, help="number of points")
    g.add_argument("--d", type=_positive_int, default=None, help="dimension (pivot, uniform)")
    g.add_argument("--rho", type=float, default=1.0, help="pivot process density")
    g.add_argument("--with-pivot", action="store_true", help="prepend the pivot as row 0")
    g.add_argument("--noise-sd", type=float, default=SPIRAL_NOISE_SD)
    g.add_argument("--signal-dim", type=_positive_int, default=2)
    g.add_argument("--noise-dim", type=int, default=1)
    g.add_argument("--sigma2", type=float, default=1e-4)
    g.set_defaults(func=cmd_generate)

    k = sub.add_parser("knn", parents=[common, data], help="write the kNN table as CSV")
    k.add_argument("-o", "--output", required=True)
    k.set_defaults(func=cmd_knn)

    e = sub.add_parser("estimate", parents=[common, data], help="estimate the intrinsic dimension")
    e.add_argument("--method", choices=METHODS, default="twonn-mle")
    e.add_argument("--level", type=_level, default=0.95)
    e.add_argument("--n1", type=_positive_int, default=1)
    e.add_argument("--n2", type=_positive_int, default=2)
    e.add_argument("--L", type=int, default=5, help="Cride neighbor count")
    e.add_argument("--trim", type=float, default=0.1, help="TWO-NN LS trimmed fraction")
    e.add_argument("--uncertainty", choices=("fisher", "bootstrap"), default="fisher")
    e.add_argument("--bootstrap-reps", type=_positive_int, default=200)
    e.add_argument("--prior-shape", type=float, default=1.0)
    e.add_argument("--prior-rate", type=float, default=1.0)
    e.add_argument("--d-max", type=float, default=None, help="upper search limit (default 10 D)")
    e.add_argument("-o", "--output", default=None, help="output stem; writes .json, .csv, .manifest.json")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("sweep", parents=[common, data], help="id versus scale")
    s.add_argument("--protocol", choices=("gride", "decimation"), default="gride")
    s.add_argument("--ratio", type=int, default=2, help="n2 / n1")
    s.add_argument("--n1", type=_positive_int, nargs="+", default=None,
                   help="n1 grid (default 1 2 4 ... 256)")
    s.add_argument("--level", type=_level, default=0.95)
    s.add_argument("--uncertainty", choices=("fisher", "bootstrap"), default="fisher")
    s.add_argument("--bootstrap-reps", type=_positive_int, default=200)
    s.add_argument("--halvings", type=int, default=10)
    s.add_argument("--replicates", type=_positive_int, default=DEFAULT_DECIMATION_REPLICATES)
    s.add_argument("--d-max", type=float, default=None)
    s.add_argument("-o", "--output", default=None)
    s.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    if args.command == "generate" and args.kind in ("pivot", "uniform") and args.d is None:
        parser.error(f"generate {args.kind} requires --d")
    if getattr(args, "ratio", 2) < 2:
        parser.error("--ratio must be >= 2")
    try:
        return args.func(args, argv)
    except UsageError as exc:
        parser.error(str(exc))
    except (IdRatioError, ValueError, RuntimeError, OSError, FloatingPointError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        diag = getattr(exc, "diagnostics", None)
        if diag:
            err["diagnostics"] = {k: (v if isinstance(v, (int, float, str)) else repr(v)) for k, v in diag.items()}
        print(json.dumps(err), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
