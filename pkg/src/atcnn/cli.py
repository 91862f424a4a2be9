"""Command line entry point: ``atcnn <subcommand> [options]``.

Exit statuses:
  0  success
  1  pipeline failure (bad data, divergence, corrupt model file, ...)
  2  usage error or missing manifest
  3  incomplete ensemble (a class model is missing)
  4  empty partition
  5  untrained class (model file missing for a single-class command)
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .constants import CLASS_INDEX, CLASSES, LEADS
from .data import EcgRecord, by_partition, load_dataset, save_dataset, stack
from .ensemble import MultiLabelEnsemble, decisions_csv, predict_batch, read_decisions_csv, risk_stratify
from .errors import AtcnnError, EnsembleIncompleteError
from .leadselect import rank_leads, sweep_subsets
from .metrics import evaluate, roc_csv
from .model import ArchConfig, forward, init_parameters
from .serialization import load_model, save_model
from .signal import FilterSpec, preprocess_record
from .synthetic import SyntheticSpec, generate_synthetic, single_lead_spec
from .training import TrainConfig, binary_split, build_subdataset, train_binary

log = logging.getLogger("atcnn")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INCOMPLETE, EXIT_EMPTY, EXIT_UNTRAINED = range(6)


class CliError(Exception):
    def __init__(self, message: str, status: int):
        super().__init__(message)
        self.status = status


def model_path(models_dir, cls: str) -> Path:
    return Path(models_dir) / f"{cls}.atcn"


def trainlog_path(models_dir, cls: str) -> Path:
    return Path(models_dir) / f"{cls}.trainlog.jsonl"


def class_seed(seed: int, cls: str) -> int:
    return seed + CLASS_INDEX[cls]


def _classes(token: str) -> list[str]:
    return list(CLASSES) if token == "ALL" else [token]


def _load(manifest) -> list[EcgRecord]:
    path = Path(manifest)
    if not path.is_file():
        raise CliError(f"manifest not found: {path}", EXIT_USAGE)
    return load_dataset(path)


def _partition(records, name: str) -> list[EcgRecord]:
    rs = by_partition(records, name)
    if not rs:
        raise CliError(f"partition {name!r} is empty", EXIT_EMPTY)
    return rs


def _load_class_model(models_dir, cls: str):
    path = model_path(models_dir, cls)
    if not path.is_file():
        raise CliError(f"class {cls} is not trained (no {path})", EXIT_UNTRAINED)
    return load_model(path)


def _load_ensemble(models_dir, threshold: float) -> MultiLabelEnsemble:
    models = {c: load_model(model_path(models_dir, c)) for c in CLASSES
              if model_path(models_dir, c).is_file()}
    ens = MultiLabelEnsemble(models, threshold)
    ens.check_complete()
    return ens


def _train_config(args, cls: str) -> TrainConfig:
    return TrainConfig(target=cls, lr=args.lr, batch_size=args.batch, max_epochs=args.epochs,
                       patience=args.patience, seed=class_seed(args.seed, cls))


def _arch(args, input_length: int) -> ArchConfig:
    return ArchConfig(input_length=input_length, channels=args.channels, variant=args.variant)


# -- subcommands ---------------------------------------------------------------

def cmd_synth(args) -> int:
    kw = dict(n_samples=args.samples, seed=args.seed, noise_std=args.noise)
    if args.single_lead:
        cls = "CD" if args.cls == "ALL" else args.cls
        spec = single_lead_spec(target=cls, lead=args.single_lead, **kw)
    else:
        spec = SyntheticSpec(**kw)
    records = generate_synthetic(spec, args.n)
    path = save_dataset(records, Path(args.out) / "manifest.json")
    print(f"wrote {len(records)} records to {path}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    records = _load(args.manifest)
    spec = FilterSpec(sampling_rate_hz=records[0].sampling_rate if records else 100.0)
    out = [replace(r, signal=preprocess_record(r.signal, spec)) for r in records]
    path = save_dataset(out, Path(args.out) / "manifest.json")
    print(f"preprocessed {len(out)} records into {path}")
    return EXIT_OK


def _train_one(args, cls: str, dev: list[EcgRecord]) -> str:
    cfg = _train_config(args, cls)
    train, val = build_subdataset(dev, cls, seed=cfg.seed)
    model = init_parameters(_arch(args, train.X.shape[-1]), cls, seed=cfg.seed)
    best, tlog = train_binary(model, train, val, cfg)
    save_model(best, model_path(args.models_dir, cls))
    tlog.save(trainlog_path(args.models_dir, cls))
    last = tlog.epochs[-1]
    return (f"{cls}: {len(tlog.epochs)} epochs, best epoch {tlog.best_epoch}, "
            f"val loss {last['val_loss']:.4f}")


def cmd_train(args) -> int:
    dev = _partition(_load(args.manifest), "development")
    Path(args.models_dir).mkdir(parents=True, exist_ok=True)
    classes = _classes(args.cls)
    if args.parallel and len(classes) > 1:
        with ProcessPoolExecutor() as pool:
            lines = list(pool.map(_train_one, [args] * len(classes), classes, [dev] * len(classes)))
    else:
        lines = [_train_one(args, c, dev) for c in classes]
    for line in lines:
        print(line)
    return EXIT_OK


def cmd_predict(args) -> int:
    records = _partition(_load(args.manifest), args.partition)
    ens = _load_ensemble(args.models_dir, args.threshold)
    X, _, ids = stack(records)
    text = decisions_csv(predict_batch(ens, X, ids))
    _emit(text, args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    records = _partition(_load(args.manifest), args.partition)
    _, truth, ids = stack(records)
    if args.predictions:
        decisions = read_decisions_csv(Path(args.predictions).read_text())
        by_id = {d.record_id: d for d in decisions}
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise CliError(f"no prediction for {len(missing)} records, e.g. {missing[0]}", EXIT_FAIL)
        decisions = [by_id[i] for i in ids]
    else:
        ens = _load_ensemble(args.models_dir, args.threshold)
        X, _, _ = stack(records)
        decisions = predict_batch(ens, X, ids)
    pred = np.stack([d.labels for d in decisions])
    scores = np.stack([d.probs for d in decisions])
    report = evaluate(pred, truth, scores)
    strata = risk_stratify(decisions, truth)
    text = report.to_text() + "Risk groups\t" + json.dumps(strata, sort_keys=True) + "\n"
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text)
        for cr in report.classes:
            if cr.roc is not None:
                (out / f"roc_{cr.name}.csv").write_text(roc_csv(cr.roc))
    return EXIT_OK


def cmd_select_leads(args) -> int:
    records = _load(args.manifest)
    dev = _partition(records, "development")
    _partition(records, "test")
    lines = []
    for cls in _classes(args.cls):
        model = _load_class_model(args.models_dir, cls)
        cfg = _train_config(args, cls)
        train, val = build_subdataset(dev, cls, seed=cfg.seed)
        test = binary_split(by_partition(records, "test"), cls)
        ranking = rank_leads(model, val.X)
        log.info("%s lead ranking: %s", cls, ranking.names)
        result = sweep_subsets(ranking, train, val, test, model.config, cfg,
                               improvement_tol=args.improvement_tol)
        lines.append(result.to_csv() if not lines else result.to_csv().split("\n", 1)[1])
        print(f"{cls}: ranking {' '.join(ranking.names)}; optimal k={result.optimal_k} "
              f"({' '.join(LEADS[i] for i in result.optimal_subset)}), F1 {result.optimal_f1:.4f}")
    if args.out:
        _emit("".join(lines), args.out)
    return EXIT_OK


def cmd_export_attention(args) -> int:
    records = _partition(_load(args.manifest), args.partition)
    model = _load_class_model(args.models_dir, args.cls)
    if model.config.variant in ("no_attention_gap",):
        raise CliError(f"{args.cls} model has no attention layers", EXIT_FAIL)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    X, _, ids = stack(records)
    with open(out / "alpha.csv", "w", newline="") as fa, open(out / "beta.csv", "w", newline="") as fb:
        wa, wb = csv.writer(fa, lineterminator="\n"), csv.writer(fb, lineterminator="\n")
        wa.writerow(["record_id", "lead", "sample_index", "weight"])
        wb.writerow(["record_id", "lead", "weight"])
        for s in range(0, len(X), 64):
            trace = forward(model, X[s:s + 64])
            for j, rid in enumerate(ids[s:s + 64]):
                for m, lead in enumerate(trace.leads):
                    for n, a in enumerate(trace.alpha[j, m]):
                        wa.writerow([rid, LEADS[lead], n, f"{a:.8g}"])
                if trace.beta is not None:
                    for lead in range(len(LEADS)):
                        wb.writerow([rid, LEADS[lead], f"{trace.beta[j, lead]:.8g}"])
    print(f"wrote attention for {len(ids)} records to {out}")
    return EXIT_OK


def _emit(text: str, out):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="atcnn", description=__doc__.split("\n")[0],
                                epilog="exit codes: 0 ok, 1 failure, 2 usage/missing manifest, "
                                       "3 incomplete ensemble, 4 empty partition, 5 untrained class",
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, manifest=True, cls=False, models=False, hyper=False):
        if manifest:
            sp.add_argument("--manifest", required=True)
        if cls:
            sp.add_argument("--class", dest="cls", default="ALL", choices=list(CLASSES) + ["ALL"])
        if models:
            sp.add_argument("--models-dir", default="models")
        sp.add_argument("--seed", type=int, default=0)
        if hyper:
            sp.add_argument("--lr", type=float, default=1e-3)
            sp.add_argument("--batch", type=int, default=32)
            sp.add_argument("--epochs", type=int, default=100)
            sp.add_argument("--patience", type=int, default=10)
            sp.add_argument("--channels", type=int, default=32)
            sp.add_argument("--variant", default="full",
                            choices=["full", "traditional_conv", "no_attention_gap"])
        sp.add_argument("--out")

    sp = sub.add_parser("synth", help="write a synthetic dataset")
    common(sp, manifest=False, cls=True)
    sp.add_argument("--n", type=int, default=600)
    sp.add_argument("--samples", type=int, default=500)
    sp.add_argument("--noise", type=float, default=0.05)
    sp.add_argument("--single-lead", help="carry one class on this lead only (e.g. V1)")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("preprocess", help="band-pass filter and z-score every record")
    common(sp)
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("train", help="train one or all binary classifiers")
    common(sp, cls=True, models=True, hyper=True)
    sp.add_argument("--parallel", action="store_true", help="train ALL classes in worker processes")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict", help="multi-label decisions from the five models")
    common(sp, models=True)
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.add_argument("--partition", default="test")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("evaluate", help="per-class metrics, exact match and ROC")
    common(sp, models=True)
    sp.add_argument("--predictions", help="decision CSV from predict; otherwise predict now")
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.add_argument("--partition", default="test")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("select-leads", help="rank leads by spatial attention and sweep subsets")
    common(sp, cls=True, models=True, hyper=True)
    sp.add_argument("--improvement-tol", type=float, default=0.005)
    sp.set_defaults(func=cmd_select_leads)

    sp = sub.add_parser("export-attention", help="write temporal and spatial attention as CSV")
    common(sp, models=True)
    sp.add_argument("--class", dest="cls", required=True, choices=list(CLASSES))
    sp.add_argument("--partition", default="test")
    sp.set_defaults(func=cmd_export_attention)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("synth", "export-attention") and not args.out:
        print(f"atcnn {args.command}: --out is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except CliError as exc:
        print(f"atcnn {args.command}: {exc}", file=sys.stderr)
        return exc.status
    except EnsembleIncompleteError as exc:
        print(f"atcnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except (AtcnnError, ValueError, OSError) as exc:
        print(f"atcnn {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
