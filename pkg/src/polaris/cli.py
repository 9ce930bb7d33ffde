"""``polaris`` command line: synth, train, analyze, probe, track, replay.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import SUBSETS, ClassifierConfig, VariableAssignment, classify_variables, subset_types, summarise_assignment
from .dynamics import (
    DEFAULT_THRESHOLD,
    count_exceedances,
    exceedance_json,
    load_snapshot_paths,
    snapshot_series,
)
from .errors import EmptySubsetError, PolarisError, TrainingDivergedError, UndefinedMetricError
from .manifest import RunManifest, load_manifest
from .metrics import DEFAULT_BINS, metric_report
from .probe import ProbeConfig, probe_all_subsets
from .representation import RepresentationSet, load_matrix, save_matrix
from .synth import SynthSpec, generate
from .vae import (
    OBJECTIVES,
    Architecture,
    ObjectiveConfig,
    extract_representations,
    init_model,
    load_model,
    make_toy_dataset,
    save_model,
    train,
)

log = logging.getLogger("polaris")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
MATRIX_FILES = {"mean": "mean.bin", "variance": "variance.bin", "sampled": "sampled.bin"}


class UsageError(Exception):
    """Bad arguments or inputs; maps to exit code 2."""


def default_seed() -> int:
    raw = os.environ.get("POLARIS_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"POLARIS_SEED must be an integer, got {raw!r}") from None


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def save_representations(rep: RepresentationSet, out: Path) -> None:
    for kind, name in MATRIX_FILES.items():
        save_matrix(rep.matrix(kind), out / name, "binary")


def load_representations(directory) -> RepresentationSet:
    directory = Path(directory)
    if not directory.is_dir():
        raise UsageError(f"representation directory {directory} does not exist")
    mats = {}
    for kind, name in MATRIX_FILES.items():
        path = directory / name
        if not path.exists():
            raise UsageError(f"missing {path}")
        mats[kind] = load_matrix(path, "binary")
    noise = directory / "noise.bin"
    return RepresentationSet(noise=load_matrix(noise, "binary") if noise.exists() else None, **mats)


# -- synth -----------------------------------------------------------------


def cmd_synth(args) -> int:
    try:
        data = json.loads(Path(args.spec).read_text())
    except FileNotFoundError:
        raise UsageError(f"spec file {args.spec} not found") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed spec JSON: {exc}") from None
    if args.seed is not None:
        data["seed"] = args.seed
    spec = SynthSpec.from_dict(data)
    out = _out_dir(args.out)
    manifest = RunManifest("synth", args.argv, {"spec": spec.to_dict()}, seeds={"spec": spec.seed})
    manifest.add_input(args.spec)
    output = generate(spec)
    save_representations(output.rep, out)
    _write(out / "synth.json", output.sidecar_json() + "\n")
    manifest.record_outputs(out)
    manifest.write(out)
    return EXIT_OK


# -- train -----------------------------------------------------------------


def _objective_from_args(args) -> ObjectiveConfig:
    return ObjectiveConfig(
        kind=args.objective, beta=args.beta, gamma=args.gamma, c_max=args.c_max,
        anneal_steps=args.anneal_steps, lambda_od=args.lambda_od, lambda_d=args.lambda_d,
    )


def cmd_train(args) -> int:
    seed = default_seed() if args.seed is None else args.seed
    config = _objective_from_args(args)
    out = _out_dir(args.out)
    dataset_info = {"seed": seed, "subsample": args.subsample, "label_factor": args.label_factor}
    arch = Architecture(hidden=tuple(args.hidden), latent_dim=args.latent_dim, activation=args.activation)
    params = {
        "objective": config.to_dict(), "dataset": dataset_info, "architecture": arch.to_dict(),
        "steps": args.steps, "batch_size": args.batch_size, "lr": args.lr, "snapshot_every": args.snapshot_every,
    }
    manifest = RunManifest("train", args.argv, params, seeds={"train": seed})
    dataset = make_toy_dataset(seed, args.subsample, args.label_factor)
    model = init_model(arch, seed)
    try:
        model, train_log = train(
            model, dataset, config, args.steps, args.batch_size, args.lr,
            snapshot_every=args.snapshot_every, seed=seed,
            snapshot_dir=out / "snapshots" if args.snapshot_every else None,
            header={"dataset": dataset_info},
        )
    except TrainingDivergedError as exc:
        manifest.status = "diverged"
        manifest.details = {"failing_step": exc.step}
        manifest.record_outputs(out)
        manifest.write(out)
        raise
    save_model(model, out / "model.vaes")
    _write(out / "train_log.csv", train_log.to_csv())
    manifest.details = {"snapshots": train_log.snapshots}
    manifest.record_outputs(out)
    manifest.write(out)
    return EXIT_OK


def _dataset_for(model):
    info = (model.meta.get("config") or {}).get("dataset") or {}
    return make_toy_dataset(info.get("seed", model.seed), info.get("subsample"), info.get("label_factor", "shape"))


# -- analyze ---------------------------------------------------------------


def _representations_from_args(args, manifest: RunManifest) -> RepresentationSet:
    if (args.reps is None) == (args.model is None):
        raise UsageError("give exactly one of --reps or --model")
    if args.reps is not None:
        manifest.add_input(args.reps)
        return load_representations(args.reps)
    path = Path(args.model)
    if not path.exists():
        raise UsageError(f"model file {path} not found")
    manifest.add_input(path)
    model = load_model(path)
    dataset = _dataset_for(model)
    seed = default_seed() if args.seed is None else args.seed
    manifest.seeds["extraction"] = seed
    manifest.details["with_replacement"] = args.n_examples > dataset.n
    return extract_representations(model, dataset, args.n_examples, seed, args.draws)


def cmd_analyze(args) -> int:
    kinds = args.kind or ["mean", "sampled"]
    if any(k not in ("mean", "sampled") for k in kinds):
        raise UsageError("metrics are defined on --kind mean and sampled only")
    subsets = args.subset or ["full", "active", "active+mixed"]
    out = _out_dir(args.out)
    manifest = RunManifest("analyze", args.argv, {
        "alpha": args.alpha, "bins": args.bins, "kinds": kinds, "subsets": subsets,
        "n_examples": args.n_examples, "draws": args.draws, "vae_strength": args.vae_strength,
    })
    rep = _representations_from_args(args, manifest)
    assignment = classify_variables(rep.variance, ClassifierConfig(args.alpha))
    n_active, n_passive, n_mixed = summarise_assignment(assignment)

    reports, skipped = [], []
    for kind in kinds:
        for label in subsets:
            try:
                reports.append(metric_report(rep, assignment, kind, subset_types(label), args.bins).to_dict())
            except EmptySubsetError as exc:
                skipped.append({"kind": kind, "subset": label, "reason": str(exc)})
            except UndefinedMetricError as exc:
                skipped.append({"kind": kind, "subset": label, "reason": str(exc), "partial": exc.partial.to_dict()})
    report = {
        "format_version": 1,
        "assignment": assignment.to_dict(),
        "counts": {"active": n_active, "passive": n_passive, "mixed": n_mixed},
        "reports": reports,
        "skipped": skipped,
    }
    _write(out / "report.json", _dump(report))
    _write(out / "assignment.json", _dump(assignment.to_dict()))
    strength = "" if args.vae_strength is None else f"{args.vae_strength:.17g}"
    _write(out / "variable_counts.csv", _csv(
        ["regularisation_strength", "n_active", "n_passive", "n_mixed"],
        [[strength, n_active, n_passive, n_mixed]],
    ))
    _write(out / "metrics_vs_passive.csv", _csv(
        ["kind", "subset", "n_passive", "tc_nats", "mi_avg_nats", "erank"],
        [[r["kind"], r["subset"], n_passive, _num(r["tc_nats"]), _num(r["mi_avg_nats"]), _num(r["erank"])]
         for r in reports if r["subset"] == "full"],
    ))
    _write(out / "subset_comparison.csv", _csv(
        ["kind", "subset", "dims", "tc_nats", "mi_avg_nats"],
        [[r["kind"], r["subset"], r["dims"], _num(r["tc_nats"]), _num(r["mi_avg_nats"])] for r in reports],
    ))
    manifest.record_outputs(out)
    manifest.write(out)
    if not reports:
        log.error("every requested subset was skipped")
        return EXIT_USAGE
    return EXIT_OK


def _num(v) -> str:
    return "" if v is None else f"{v:.17g}"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# -- probe -----------------------------------------------------------------


def load_labels(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"label file {path} not found")
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text())
        labels = data.get("labels") if isinstance(data, dict) else data
        if labels is None:
            raise UsageError(f"{path} holds no labels")
        return np.asarray(labels)
    rows = [r for r in csv.reader(io.StringIO(path.read_text())) if r]
    if len(rows) < 2:
        raise UsageError(f"{path} holds no labels")
    return np.asarray([r[0] for r in rows[1:]])


def cmd_probe(args) -> int:
    seed = default_seed() if args.seed is None else args.seed
    out = _out_dir(args.out)
    config = ProbeConfig(max_iter=args.max_iter, folds=args.folds, seed=seed)
    manifest = RunManifest("probe", args.argv, {
        "kind": args.kind, "alpha": args.alpha, "folds": args.folds, "max_iter": args.max_iter,
        "l2_grid": list(config.l2_grid), "vae_strength": args.vae_strength,
    }, seeds={"probe": seed})
    rep = load_representations(args.reps)
    manifest.add_input(args.reps)
    labels = load_labels(args.labels)
    manifest.add_input(args.labels)
    if labels.size != rep.n_examples:
        raise UsageError(f"{labels.size} labels for {rep.n_examples} examples")
    if args.assignment:
        manifest.add_input(args.assignment)
        assignment = VariableAssignment.from_dict(json.loads(Path(args.assignment).read_text()))
    else:
        assignment = classify_variables(rep.variance, ClassifierConfig(args.alpha))
    sweep = probe_all_subsets(rep, assignment, args.kind, labels, config)
    _write(out / "probe.json", sweep.to_json() + "\n")
    _write(out / "probe.csv", sweep.to_csv(args.vae_strength))
    manifest.record_outputs(out)
    manifest.write(out)
    return EXIT_OK


# -- track -----------------------------------------------------------------


def cmd_track(args) -> int:
    directory = Path(args.snapshots)
    if not directory.is_dir():
        raise UsageError(f"snapshot directory {directory} does not exist")
    paths = load_snapshot_paths(directory)
    if len(paths) < 2:
        raise UsageError(f"need at least 2 snapshots in {directory}, found {len(paths)}")
    if not (0.0 < args.threshold < 1.0):
        raise UsageError("--threshold must lie in (0, 1)")
    seed = default_seed() if args.eval_seed is None else args.eval_seed
    out = _out_dir(args.out)
    manifest = RunManifest("track", args.argv, {"threshold": args.threshold, "n_examples": args.n_examples},
                           seeds={"eval": seed})
    manifest.add_input(directory)
    first = load_model(paths[0])
    series = snapshot_series(paths, _dataset_for(first), seed, args.n_examples)
    corr = series.correlations(args.threshold)
    counts = count_exceedances(corr)
    # variable types as seen by the last snapshot
    types = classify_variables(series.reps[-1].variance, ClassifierConfig(args.alpha)).types
    _write(out / "correlations.csv", corr.to_csv())
    _write(out / "exceedances.json", exceedance_json(corr, counts, types) + "\n")
    manifest.record_outputs(out)
    manifest.write(out)
    return EXIT_OK


# -- replay ----------------------------------------------------------------


def cmd_replay(args) -> int:
    recorded = load_manifest(args.manifest)
    argv = list(recorded["argv"])
    if "--out" not in argv:
        raise UsageError("manifest argv has no --out")
    with tempfile.TemporaryDirectory() as tmp:
        target = Path(args.out) if args.out else Path(tmp) / "replay"
        argv[argv.index("--out") + 1] = str(target)
        code = main(argv)
        if code != EXIT_OK:
            return code
        replayed = load_manifest(target / "manifest.json")
    mismatched = sorted(
        k for k in set(recorded["outputs"]) | set(replayed["outputs"])
        if recorded["outputs"].get(k) != replayed["outputs"].get(k)
    )
    if mismatched:
        log.error("replay produced different artifacts: %s", ", ".join(mismatched))
        return EXIT_NUMERIC
    print(f"replay reproduced {len(recorded['outputs'])} artifacts")
    return EXIT_OK


# -- plumbing --------------------------------------------------------------


def _out_dir(path) -> Path:
    if path is None:
        raise UsageError("--out is required")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polaris", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"polaris {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate an oracle representation set from a JSON spec")
    p.add_argument("spec")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a VAE on the toy sprite dataset")
    p.add_argument("--objective", choices=OBJECTIVES, default="beta")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--c-max", type=float, default=0.0)
    p.add_argument("--anneal-steps", type=int, default=1)
    p.add_argument("--lambda-od", type=float, default=0.0)
    p.add_argument("--lambda-d", type=float, default=0.0)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int)
    p.add_argument("--snapshot-every", type=int, default=0)
    p.add_argument("--subsample", type=int)
    p.add_argument("--label-factor", default="shape")
    p.add_argument("--hidden", type=int, nargs="+", default=[256, 256])
    p.add_argument("--latent-dim", type=int, default=10)
    p.add_argument("--activation", choices=("relu", "tanh"), default="relu")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", help="classify variables and measure TC / MI / effective rank")
    p.add_argument("--reps", help="directory holding mean.bin, variance.bin, sampled.bin")
    p.add_argument("--model", help="model snapshot to encode the toy dataset with")
    p.add_argument("--n-examples", type=int, default=10000)
    p.add_argument("--draws", type=int, default=1, help="noise draws per example")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--kind", action="append", help="mean or sampled (repeatable)")
    p.add_argument("--subset", action="append", choices=list(SUBSETS))
    p.add_argument("--vae-strength", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("probe", help="logistic-regression probes over variable subsets")
    p.add_argument("--reps", required=True)
    p.add_argument("--labels", required=True, help="CSV with a header and one label per row, or JSON with a 'labels' list")
    p.add_argument("--assignment")
    p.add_argument("--kind", choices=("mean", "sampled"), default="sampled")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--seed", type=int)
    p.add_argument("--vae-strength", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("track", help="correlation dynamics across training snapshots")
    p.add_argument("snapshots")
    p.add_argument("--eval-seed", type=int)
    p.add_argument("--n-examples", type=int)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("replay", help="re-run a manifest and compare artifact hashes")
    p.add_argument("manifest")
    p.add_argument("--out")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (TrainingDivergedError, ArithmeticError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (PolarisError, ValueError, KeyError, TypeError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
