"""Command-line front end: normalize, index, compare, simulate.

Exit codes: 0 success, 2 input/validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from autosynth import __version__
from autosynth.autoencoder import AutoSynthError, TrainConfig, TrainingError, autosynth_index
from autosynth.baselines import ampi_index, hierarchical_index, mean_index, pca_index
from autosynth.data import DatasetError, IndexResult, Method, load_dataset
from autosynth.evaluation import compare_methods, stress
from autosynth.normalize import Goalposts, NormalizedMatrix, normalize
from autosynth.simulation import DgpKind, DgpSpec, SimulationError, run_study

log = logging.getLogger("autosynth")

EXIT_INPUT = 2
EXIT_NUMERIC = 3
QUANTILES = (5, 25, 50, 75, 95)


class UsageError(Exception):
    """Bad input detected by the CLI itself (exit code 2)."""


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, args, inputs) -> None:
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
              if k not in ("func", "out", "quiet")}
    manifest = {
        "command": args.command,
        "config_snapshot": config,
        "seed": args.seed,
        "tool_version": __version__,
        "input_digests": {str(p): _sha256(p) for p in inputs if p is not None and Path(p).exists()},
    }
    _write_json(out / "manifest.json", manifest)


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_index_csv(path: Path, units, result: IndexResult) -> None:
    _write_csv(path, ["unit_id", "value", "rank"],
               ([u, fmt(v), int(r)] for u, v, r in zip(units, result.values, result.ranks)))


def read_index_csv(path) -> tuple[list[str], np.ndarray]:
    units, values = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "unit_id" not in reader.fieldnames or "value" not in reader.fieldnames:
            raise UsageError(f"{path}: expected columns unit_id,value[,rank]")
        for lineno, row in enumerate(reader, start=2):
            try:
                values.append(float(row["value"]))
            except (TypeError, ValueError):
                raise UsageError(f"{path}: row {lineno}: bad value {row['value']!r}") from None
            units.append(row["unit_id"])
    return units, np.array(values)


def read_normalized(path, meta=None) -> NormalizedMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3:
        raise UsageError(f"{path}: need a header and at least 2 rows")
    names = tuple(rows[0][1:])
    units, table = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(rows[0]):
            raise UsageError(f"{path}: row {lineno} has {len(row)} fields, expected {len(rows[0])}")
        units.append(row[0])
        try:
            table.append([float(c) for c in row[1:]])
        except ValueError:
            raise UsageError(f"{path}: row {lineno} has a non-numeric cell") from None
    values = np.array(table)
    if not np.isfinite(values).all():
        raise UsageError(f"{path}: non-finite values")
    weights = None
    if meta is not None:
        raw = np.array([float(meta.get(n, {}).get("weight", 1.0 / len(names))) for n in names])
        weights = raw / raw.sum()
    return NormalizedMatrix.from_array(values, units=tuple(units), names=names, weights=weights)


def _load_raw(args):
    meta_path = args.meta
    if meta_path is None or not Path(meta_path).exists():
        what = "no metadata file given" if meta_path is None else f"metadata file {meta_path} not found"
        print(f"warning: {what}; using positive polarity and uniform weights", file=sys.stderr)
        meta_path = None
    return load_dataset(args.data, meta_path, impute=args.impute), meta_path


def _summary(args, header, rows) -> None:
    if args.quiet:
        return
    print("\t".join(header))
    for row in rows:
        print("\t".join(f"{v:.2f}" if isinstance(v, float) else str(v) for v in row))


def cmd_normalize(args) -> None:
    dataset, meta_path = _load_raw(args)
    goalposts = None
    if args.goalposts is not None:
        with open(args.goalposts, encoding="utf-8") as fh:
            goalposts = Goalposts.from_json(json.load(fh), dataset.names)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        R = normalize(dataset, goalposts)
    for note in R.warnings:
        print(f"warning: {note}", file=sys.stderr)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "normalized.csv", ["unit_id", *R.names],
               ([u, *map(fmt, row)] for u, row in zip(R.units, R.values)))
    gp = R.goalposts.to_json(R.names)
    gp["polarity"] = {m.name: m.polarity.value for m in dataset.indicators}
    gp["warnings"] = list(R.warnings)
    _write_json(out / "goalposts.json", gp)
    write_manifest(out, args, [args.data, meta_path, args.goalposts])
    _summary(args, ["indicator", "min", "max"],
             [(n, float(c.min()), float(c.max())) for n, c in zip(R.names, R.values.T)])


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        hidden_width=args.hidden,
        learning_rate=args.lr,
        max_epochs=args.epochs,
        tolerance=args.tolerance,
        seed=args.seed,
    )


def _compute(method: Method, R: NormalizedMatrix, args):
    compass = ampi_index(R, args.sign)
    report = {"method": method.value}
    if method is Method.MEAN:
        result = mean_index(R)
    elif method is Method.AMPI:
        result = compass
        report["sign"] = args.sign
    elif method is Method.PCA:
        result, model = pca_index(R, compass)
        report["explained_variance_ratio"] = model.explained_variance_ratio
        report["component"] = dict(zip(R.names, map(float, model.component)))
    else:
        res = autosynth_index(R, _train_config(args), args.replications, compass, n_jobs=args.threads)
        result = res.index
        q = np.percentile(result.ensemble, QUANTILES, axis=1)
        report.update({
            "replications": args.replications,
            "failures": res.failures,
            "relevance": dict(zip(R.names, map(float, res.relevance))),
            "flipped_replications": int(res.flipped.sum()),
            "losses": [float(v) for v in res.losses],
            "quantiles": {
                u: {f"q{p}": float(q[k, i]) for k, p in enumerate(QUANTILES)}
                for i, u in enumerate(R.units)
            },
        })
    report["polarity_flipped"] = bool(result.polarity_flipped)
    return result, report


def cmd_index(args) -> None:
    method = Method(args.method)
    out = args.out
    inputs = [args.data, args.normalized, args.meta]
    if args.hierarchical:
        if args.data is None:
            raise UsageError("--hierarchical needs the raw --data file (domains come from metadata)")
        dataset, _ = _load_raw(args)
        kwargs = {"sign": args.sign}
        if method is Method.AUTOSYNTH:
            kwargs.update(config=_train_config(args), replications=args.replications)
        per_domain, final = hierarchical_index(dataset, method, **kwargs)
        out.mkdir(parents=True, exist_ok=True)
        for domain, res in per_domain.items():
            safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in domain)
            write_index_csv(out / f"domain_{safe}.csv", dataset.units, res)
        write_index_csv(out / "index.csv", dataset.units, final)
        _write_json(out / "report.json", {
            "method": method.value,
            "hierarchical": True,
            "domains": list(per_domain),
            "polarity_flipped": bool(final.polarity_flipped),
        })
        write_manifest(out, args, inputs)
        _summary(args, ["unit_id", "value", "rank"],
                 sorted(zip(dataset.units, map(float, final.values), final.ranks), key=lambda t: t[2]))
        return

    if args.normalized is not None:
        meta = None
        if args.meta is not None and Path(args.meta).exists():
            with open(args.meta, encoding="utf-8") as fh:
                meta = json.load(fh)
        R = read_normalized(args.normalized, meta)
    elif args.data is not None:
        dataset, _ = _load_raw(args)
        R = normalize(dataset)
    else:
        raise UsageError("give either --normalized or --data")

    result, report = _compute(method, R, args)
    out.mkdir(parents=True, exist_ok=True)
    write_index_csv(out / "index.csv", R.units, result)
    _write_json(out / "report.json", report)
    if args.ensemble_out and result.ensemble is not None:
        _write_csv(out / "ensemble.csv",
                   ["unit_id", *(f"rep{k}" for k in range(result.ensemble.shape[1]))],
                   ([u, *map(fmt, row)] for u, row in zip(R.units, result.ensemble)))
    write_manifest(out, args, inputs)
    _summary(args, ["unit_id", "value", "rank"],
             sorted(zip(R.units, map(float, result.values), result.ranks), key=lambda t: t[2]))


def cmd_compare(args) -> None:
    R = read_normalized(args.normalized)
    labels, results = [], []
    for spec in args.index:
        label, _, path = spec.rpartition("=")
        label = label or Path(path).stem
        units, values = read_index_csv(path)
        if sorted(units) != sorted(R.units):
            raise UsageError(f"{path}: unit set differs from {args.normalized}")
        order = {u: i for i, u in enumerate(units)}
        aligned = values[[order[u] for u in R.units]]
        labels.append(label)
        results.append(IndexResult(Method.MEAN, aligned, units=R.units))
    reports, corr = compare_methods(R, results, labels=labels)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "stress.csv", ["method", "stress", "rank_stress"],
               ([r.method, fmt(r.stress), fmt(r.rank_stress)] for r in reports))
    _write_csv(out / "spearman.csv", ["method", *labels],
               ([lab, *map(fmt, row)] for lab, row in zip(labels, corr)))
    report = {
        "n_units": len(R.units),
        "methods": [{"method": r.method, "stress": r.stress, "rank_stress": r.rank_stress}
                    for r in reports],
        "spearman": {a: dict(zip(labels, map(float, row))) for a, row in zip(labels, corr)},
    }
    inputs = [args.normalized, *(s.rpartition("=")[2] for s in args.index)]
    if args.ensemble is not None:
        units, ens = _read_ensemble(args.ensemble)
        if sorted(units) != sorted(R.units):
            raise UsageError(f"{args.ensemble}: unit set differs from {args.normalized}")
        order = {u: i for i, u in enumerate(units)}
        ens = ens[[order[u] for u in R.units]]
        values = [stress(R, ens[:, k]) for k in range(ens.shape[1])]
        _write_csv(out / "ensemble_stress.csv", ["replication", "stress"],
                   ([k, fmt(v)] for k, v in enumerate(values)))
        report["ensemble_stress"] = values
        inputs.append(args.ensemble)
    _write_json(out / "report.json", report)
    write_manifest(out, args, inputs)
    _summary(args, ["method", "stress", "rank_stress"],
             [(r.method, r.stress, r.rank_stress) for r in reports])


def _read_ensemble(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    try:
        units = [r[0] for r in rows[1:]]
        values = np.array([[float(c) for c in r[1:]] for r in rows[1:]])
    except (IndexError, ValueError):
        raise UsageError(f"{path}: malformed ensemble file") from None
    return units, values


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _choice_list(choices):
    def parse(text: str) -> list[str]:
        items = [t.strip() for t in text.split(",") if t.strip()]
        bad = [t for t in items if t not in choices]
        if bad or not items:
            raise argparse.ArgumentTypeError(f"invalid choice(s) {bad}; pick from {sorted(choices)}")
        return items
    return parse


def cmd_simulate(args) -> None:
    specs = [DgpSpec(kind, n=n, seed=args.seed) for kind in args.dgp for n in args.n]
    config = _train_config(args)
    report = run_study(specs, args.methods, args.reps, config, ensemble=args.ensemble,
                       n_jobs=args.threads)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", report.to_json())
    _write_csv(out / "stress.csv", ["dgp", "n", "method", "replication", "stress", "rank_stress"],
               ([k, n, m, r, fmt(s), fmt(rs)] for k, n, m, r, s, rs in report.rows()))
    write_manifest(out, args, [])
    _summary(args, ["dgp", "n", "method", "median_stress", "median_rank_stress"],
             [(c["dgp"], c["n"], c["method"], c["median_stress"], c["median_rank_stress"])
              for c in report.to_json()["cells"]])


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master random seed")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker processes for ensembles")
    common.add_argument("--quiet", action="store_true", help="suppress the stdout summary")

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--hidden", type=int, default=None, help="hidden width (default ceil(p/2))")
    training.add_argument("--epochs", type=int, default=2000)
    training.add_argument("--lr", type=float, default=1e-3)
    training.add_argument("--tolerance", type=float, default=1e-6)

    raw = argparse.ArgumentParser(add_help=False)
    raw.add_argument("--meta", type=Path, default=None, help="indicator metadata JSON")
    raw.add_argument("--impute", choices=["median"], default=None,
                     help="fill missing cells with the column median instead of failing")

    parser = argparse.ArgumentParser(prog="autosynth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("normalize", parents=[common, raw], help="rescale indicators to [70, 130]")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--goalposts", type=Path, default=None, help="JSON with supplied goalposts")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("index", parents=[common, raw, training], help="build a composite index")
    p.add_argument("--method", choices=[m.value for m in Method], required=True)
    p.add_argument("--data", type=Path, default=None, help="raw CSV (normalized automatically)")
    p.add_argument("--normalized", type=Path, default=None, help="normalized matrix CSV")
    p.add_argument("--sign", choices=["plus", "minus"], default="plus", help="AMPI penalty sign")
    p.add_argument("--replications", type=int, default=500)
    p.add_argument("--ensemble-out", action="store_true", help="also write ensemble.csv")
    p.add_argument("--hierarchical", action="store_true", help="aggregate within domains first")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("compare", parents=[common], help="stress and rank agreement of indices")
    p.add_argument("--normalized", type=Path, required=True)
    p.add_argument("--index", nargs="+", required=True, metavar="[LABEL=]PATH")
    p.add_argument("--ensemble", type=Path, default=None, help="ensemble.csv from index")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", parents=[common, training], help="Monte Carlo comparison")
    p.add_argument("--dgp", type=_choice_list({k.value for k in DgpKind}), default=["mixed"])
    p.add_argument("--n", type=_int_list, default=[50, 250, 1000])
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--methods", type=_choice_list({m.value for m in Method}),
                   default=[m.value for m in Method])
    p.add_argument("--ensemble", type=int, default=10, help="AutoSynth ensemble per replication")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (UsageError, DatasetError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (AutoSynthError, TrainingError, SimulationError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return 0


if __name__ == "__main__":
    sys.exit(main())
