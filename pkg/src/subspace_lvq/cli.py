"""Command-line entry point.

One executable exposes the full pipeline: synthetic data generation,
training, evaluation, prediction, explanation, corpus scoring, ranking,
annotation sampling, calibration, and an analytic-gradient self check.

Options may come from a flat ``key = value`` config file (``--config``);
explicit flags win over file values.  Commands that write files require
``--out`` and leave a run manifest there: written with status "running"
before long work starts and finalized on completion, so interrupted runs
are detectable.  Logs go to stderr; data goes to stdout or files, never
interleaved.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .corpus import (
    batch_score,
    calibrate,
    corpus_to_subspaces,
    count_above,
    ingest,
    prepare_document,
    rank,
    read_annotations,
    read_scored,
    sample_for_annotation,
    split,
    write_corpus,
    write_scored,
)
from .embedding import load_embeddings, load_stopwords
from .errors import PER_RECORD_ERRORS, DimensionError, ToolkitError, UsageError
from .explain import explanation_report, write_reports_csv, write_reports_jsonl
from .geometry import DISTANCE_KINDS
from .model import TrainConfig, classify, evaluate, run_gradient_checks, train
from .model_io import load_model, model_checksum, save_model
from .synth import generate as generate_synthetic, write_synthetic

log = logging.getLogger("subspace_lvq.cli")

GRAD_CHECK_TOLERANCE = 1e-5

_DEFAULTS = {
    "d": 50,
    "beta": 5.0,
    "distance": "chordal",
    "epochs": 100,
    "lr_w": 0.05,
    "lr_lambda": 0.005,
    "per_class": 1,
    "top_k": 20,
    "per_band": 20,
    "docs_per_class": 200,
    "dim": 50,
}

_CONVERTERS = {
    "d": int, "epochs": int, "seed": int, "top_k": int, "per_band": int,
    "per_class": int, "docs_per_class": int, "dim": int,
    "beta": float, "lr_w": float, "lr_lambda": float, "train_fraction": float,
    "threshold": float, "target_precision": float,
}

_KNOWN_KEYS = {
    "embeddings", "stopwords", "corpus", "model", "out", "scored", "annotations",
    "distance", "positive_label", "bands",
} | set(_CONVERTERS)


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` comments and blank lines ignored."""
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _KNOWN_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


class Options:
    """Merged view of flags, config file and defaults; flags win."""

    def __init__(self, args: argparse.Namespace):
        self._args = vars(args)
        config_path = self._args.get("config")
        self._file = read_config_file(config_path) if config_path else {}

    def get(self, name, convert=None, default=None, required=False):
        convert = convert or _CONVERTERS.get(name, str)
        value = self._args.get(name)
        if value is None and name in self._file:
            raw = self._file[name]
            try:
                value = convert(raw)
            except ValueError as exc:
                raise UsageError(f"config value {name} = {raw!r}: {exc}") from exc
        if value is None:
            value = _DEFAULTS.get(name, default)
        if value is None and required:
            raise UsageError(f"missing required option --{name.replace('_', '-')}")
        return value


def parse_bands(text: str) -> list[tuple[float, float]]:
    """Comma-separated half-open percentile ranges, e.g. '87:88,88:89'."""
    bands = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        pieces = part.split(":")
        if len(pieces) != 2:
            raise UsageError(f"band {part!r} is not of the form lo:hi")
        try:
            bands.append((float(pieces[0]), float(pieces[1])))
        except ValueError as exc:
            raise UsageError(f"band {part!r}: {exc}") from exc
    if not bands:
        raise UsageError("no percentile bands given")
    return bands


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class Manifest:
    """Run manifest under the output directory."""

    def __init__(self, out_dir: Path, command: str, snapshot: dict):
        self.path = out_dir / "manifest.json"
        self.data = {
            "command": command,
            "config": snapshot,
            "started_at": _utcnow(),
            "status": "running",
            "outputs": [],
        }
        self._write()

    def _write(self):
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")

    def add_output(self, path: Path):
        self.data["outputs"].append(str(path))

    def finalize(self, **extra):
        self.data.update(extra)
        self.data["finished_at"] = _utcnow()
        self.data["status"] = "complete"
        self._write()


def _out_dir(opts, required=True) -> Path | None:
    out = opts.get("out", required=required)
    if out is None:
        return None
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _snapshot(opts: Options, keys) -> dict:
    return {k: opts.get(k) for k in keys}


def _load_pipeline_inputs(opts, model=None):
    table = load_embeddings(opts.get("embeddings", required=True))
    stoplist = load_stopwords(opts.get("stopwords"))
    if model is not None and table.dim != model.embedding_dim:
        raise DimensionError(
            f"embedding dimension {table.dim} does not match model "
            f"dimension {model.embedding_dim}"
        )
    return table, stoplist


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth_data(opts: Options) -> int:
    seed = opts.get("seed", int, required=True)
    out = _out_dir(opts)
    manifest = Manifest(out, "synth-data",
                        _snapshot(opts, ["seed", "docs_per_class", "dim", "out"]))
    corpus = generate_synthetic(
        docs_per_class=opts.get("docs_per_class", int),
        dim=opts.get("dim", int),
        seed=seed,
    )
    paths = write_synthetic(corpus, out)
    for p in paths.values():
        manifest.add_output(p)
    manifest.finalize()
    print(f"corpus {paths['corpus']}")
    print(f"embeddings {paths['embeddings']}")
    print(f"truth {paths['truth']}")
    return 0


def _train_config(opts) -> TrainConfig:
    kind = opts.get("distance")
    if kind not in DISTANCE_KINDS:
        raise UsageError(f"--distance must be one of {'/'.join(DISTANCE_KINDS)}")
    return TrainConfig(
        subspace_dim=opts.get("d", int),
        seed=opts.get("seed", int, required=True),
        beta=opts.get("beta", float),
        distance_kind=kind,
        lr_prototype=opts.get("lr_w", float),
        lr_relevance=opts.get("lr_lambda", float),
        epochs=opts.get("epochs", int),
        prototypes_per_class=opts.get("per_class", int),
    )


def cmd_train(opts: Options) -> int:
    config = _train_config(opts)
    out = _out_dir(opts)
    snapshot = _snapshot(opts, ["embeddings", "stopwords", "corpus", "out", "d", "beta",
                                "distance", "epochs", "lr_w", "lr_lambda", "per_class",
                                "seed", "train_fraction"])
    manifest = Manifest(out, "train", snapshot)
    table, stoplist = _load_pipeline_inputs(opts)
    if config.subspace_dim > table.dim:
        raise DimensionError(
            f"subspace dimension {config.subspace_dim} exceeds embedding "
            f"dimension {table.dim}"
        )
    records = ingest(opts.get("corpus", required=True))

    fraction = opts.get("train_fraction", float)
    test_records = None
    if fraction is not None:
        train_records, test_records = split(records, fraction, config.seed)
        write_corpus(train_records, out / "train.jsonl")
        write_corpus(test_records, out / "test.jsonl")
        manifest.add_output(out / "train.jsonl")
        manifest.add_output(out / "test.jsonl")
        log.info("split: %d train / %d test", len(train_records), len(test_records))
    else:
        train_records = records

    examples, skipped = corpus_to_subspaces(train_records, table, stoplist, config.subspace_dim)
    if skipped:
        log.warning("%d training records skipped", len(skipped))
    state = train(examples, config)

    model_path = out / "model.bin"
    save_model(state, model_path)
    manifest.add_output(model_path)

    log_path = out / "training_log.csv"
    with log_path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "mean_cost", "train_accuracy"])
        for epoch, cost, acc in state.training_log:
            writer.writerow([epoch, format(cost, ".17g"), format(acc, ".17g")])
    manifest.add_output(log_path)

    print(f"model {model_path}")
    print(f"train_accuracy {state.training_log[-1][2]!r}")

    if test_records is not None:
        test_examples, test_skipped = corpus_to_subspaces(
            test_records, table, stoplist, config.subspace_dim)
        if test_skipped:
            log.warning("%d test records skipped", len(test_skipped))
        report = evaluate(state, test_examples)
        print(f"test_accuracy {report.accuracy!r}")

    manifest.finalize(model_checksum=model_checksum(model_path))
    return 0


def cmd_evaluate(opts: Options) -> int:
    state = load_model(opts.get("model", required=True))
    table, stoplist = _load_pipeline_inputs(opts, model=state)
    records = ingest(opts.get("corpus", required=True))
    examples, skipped = corpus_to_subspaces(records, table, stoplist, state.subspace_dim)
    if skipped:
        log.warning("%d records skipped", len(skipped))
    report = evaluate(state, examples)
    print(f"accuracy {report.accuracy!r}")
    for label in sorted(report.per_class):
        metrics = report.per_class[label]
        print(f"class {label} precision {metrics['precision']!r} "
              f"recall {metrics['recall']!r} support {int(metrics['support'])}")
    out = _out_dir(opts, required=False)
    if out is not None:
        manifest = Manifest(out, "evaluate",
                            _snapshot(opts, ["model", "corpus", "embeddings", "stopwords", "out"]))
        path = out / "evaluation.json"
        path.write_text(json.dumps({
            "accuracy": report.accuracy,
            "per_class": report.per_class,
            "confusion": [[t, p, c] for (t, p), c in sorted(report.confusion.items())],
            "skipped": skipped,
        }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        manifest.add_output(path)
        manifest.finalize()
    return 0


def cmd_predict(opts: Options) -> int:
    state = load_model(opts.get("model", required=True))
    table, stoplist = _load_pipeline_inputs(opts, model=state)
    records = ingest(opts.get("corpus", required=True))
    rows = []
    skipped = []
    for rec in records:
        try:
            _, _, sub = prepare_document(rec.case_id, rec.text, table, stoplist,
                                         state.subspace_dim)
            label, dists = classify(sub, state)
        except PER_RECORD_ERRORS as exc:
            skipped.append((rec.case_id, str(exc)))
            log.warning("skipping %s: %s", rec.case_id, exc)
            continue
        rows.append([rec.case_id, label] + [format(v, ".17g") for v in dists])
    header = ["case_id", "predicted_label"] + [
        f"dist_{i}_{p.label}" for i, p in enumerate(state.prototypes)
    ]
    out = _out_dir(opts, required=False)
    if out is None:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows(rows)
    else:
        manifest = Manifest(out, "predict",
                            _snapshot(opts, ["model", "corpus", "embeddings", "stopwords", "out"]))
        path = out / "predictions.csv"
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
        manifest.add_output(path)
        manifest.finalize(skipped=len(skipped))
        print(f"predictions {path}")
    return 0


def cmd_explain(opts: Options) -> int:
    state = load_model(opts.get("model", required=True))
    table, stoplist = _load_pipeline_inputs(opts, model=state)
    records = ingest(opts.get("corpus", required=True))
    top_k = opts.get("top_k", int)
    positive = opts.get("positive_label")
    out = _out_dir(opts)
    manifest = Manifest(out, "explain",
                        _snapshot(opts, ["model", "corpus", "embeddings", "stopwords",
                                         "top_k", "positive_label", "out"]))
    reports = []
    skipped = []
    for rec in records:
        try:
            reports.append(explanation_report(rec, state, table, stoplist, top_k, positive))
        except PER_RECORD_ERRORS as exc:
            skipped.append((rec.case_id, str(exc)))
            log.warning("skipping %s: %s", rec.case_id, exc)
    jsonl_path = out / "explanations.jsonl"
    csv_path = out / "explanations.csv"
    write_reports_jsonl(reports, jsonl_path)
    write_reports_csv(reports, csv_path)
    manifest.add_output(jsonl_path)
    manifest.add_output(csv_path)
    manifest.finalize(skipped=len(skipped))
    print(f"explanations {jsonl_path}")
    print(f"explained {len(reports)}")
    return 0


def cmd_score_corpus(opts: Options) -> int:
    state = load_model(opts.get("model", required=True))
    positive = opts.get("positive_label", required=True)
    table, stoplist = _load_pipeline_inputs(opts, model=state)
    records = ingest(opts.get("corpus", required=True))
    out = _out_dir(opts)
    manifest = Manifest(out, "score-corpus",
                        _snapshot(opts, ["model", "corpus", "embeddings", "stopwords",
                                         "positive_label", "threshold", "out"]))
    scored, skipped = batch_score(records, state, table, stoplist, positive)
    ranked = rank(scored)
    path = out / "scored.csv"
    write_scored(ranked, path)
    manifest.add_output(path)
    if skipped:
        skip_path = out / "skipped.csv"
        with skip_path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["case_id", "reason"])
            writer.writerows(skipped)
        manifest.add_output(skip_path)
    manifest.finalize(scored=len(ranked), skipped=len(skipped))
    print(f"scored {path}")
    threshold = opts.get("threshold", float)
    if threshold is not None:
        print(f"above_threshold {count_above(ranked, threshold)}")
    return 0


def cmd_rank(opts: Options) -> int:
    scored = read_scored(opts.get("scored", required=True))
    ranked = rank(scored)
    out = _out_dir(opts, required=False)
    if out is None:
        writer = csv.writer(sys.stdout)
        writer.writerow(["case_id", "score", "percentile", "predicted_label"])
        for s in ranked:
            writer.writerow([s.case_id, format(s.score, ".17g"),
                             format(s.percentile, ".17g"), s.predicted_label])
    else:
        manifest = Manifest(out, "rank", _snapshot(opts, ["scored", "out"]))
        path = out / "ranked.csv"
        write_scored(ranked, path)
        manifest.add_output(path)
        manifest.finalize()
        print(f"ranked {path}")
    return 0


def cmd_sample(opts: Options) -> int:
    seed = opts.get("seed", int, required=True)
    scored = rank(read_scored(opts.get("scored", required=True)))
    bands = parse_bands(opts.get("bands", required=True))
    per_band = opts.get("per_band", int)
    out = _out_dir(opts)
    manifest = Manifest(out, "sample",
                        _snapshot(opts, ["scored", "bands", "per_band", "seed", "out"]))
    sampled = sample_for_annotation(scored, bands, per_band, seed)
    path = out / "sample.csv"
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["band_lo", "band_hi", "case_id"])
        for (lo, hi), ids in sampled.items():
            for case_id in ids:
                writer.writerow([format(lo, "g"), format(hi, "g"), case_id])
    manifest.add_output(path)
    manifest.finalize(sampled=sum(len(v) for v in sampled.values()))
    print(f"sample {path}")
    return 0


def cmd_calibrate(opts: Options) -> int:
    scored = rank(read_scored(opts.get("scored", required=True)))
    annotations = read_annotations(opts.get("annotations", required=True))
    bands = parse_bands(opts.get("bands", required=True))
    target = opts.get("target_precision", float)
    out = _out_dir(opts)
    manifest = Manifest(out, "calibrate",
                        _snapshot(opts, ["scored", "annotations", "bands",
                                         "target_precision", "out"]))
    report = calibrate(scored, annotations, bands, target)
    path = out / "calibration.json"
    path.write_text(json.dumps({
        "target_precision": report.target_precision,
        "threshold_score": report.threshold_score,
        "bands": [{
            "percentile_lo": b.lo,
            "percentile_hi": b.hi,
            "score_low": b.score_low,
            "score_high": b.score_high,
            "cases": b.case_count,
            "annotated": b.annotated_count,
            "positive": b.positive_count,
            "fraction_positive": b.fraction_positive,
        } for b in report.bands],
    }, indent=2) + "\n", encoding="utf-8")
    manifest.add_output(path)
    manifest.finalize()
    print(f"calibration {path}")
    for b in report.bands:
        fraction = "undefined" if b.fraction_positive is None else repr(b.fraction_positive)
        print(f"band {b.lo:g}:{b.hi:g} cases {b.case_count} "
              f"annotated {b.annotated_count} fraction_positive {fraction}")
    if target is not None:
        print(f"threshold_score "
              f"{'none' if report.threshold_score is None else repr(report.threshold_score)}")
    return 0


def cmd_grad_check(opts: Options) -> int:
    seed = opts.get("seed", int, default=20240)
    results, worst, elapsed = run_gradient_checks(base_seed=seed)
    for r in results:
        log.info("dim=%d d=%d kind=%s seed=%d rel_error=%.3e",
                 r.embedding_dim, r.subspace_dim, r.kind, r.seed, r.rel_error)
    print(f"max_relative_error {worst:.6e}")
    print(f"elapsed_seconds {elapsed:.2f}")
    if worst < GRAD_CHECK_TOLERANCE:
        print(f"grad_check PASS (tolerance {GRAD_CHECK_TOLERANCE:g})")
        return 0
    print(f"grad_check FAIL (tolerance {GRAD_CHECK_TOLERANCE:g})")
    return 1


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subspace-lvq",
        description="Prototype-based subspace document classification and corpus triage.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="flat key=value config file; flags override")
        p.add_argument("--embeddings", help="embedding file (word + floats per line)")
        p.add_argument("--stopwords", help="stop-word file (default: packaged English list)")
        p.add_argument("--corpus", help="corpus JSON-lines file or directory of .txt files")
        p.add_argument("--model", help="model file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--scored", help="scored-cases CSV (from score-corpus/rank)")
        p.add_argument("--annotations", help="annotation JSON-lines file")
        p.add_argument("--d", type=int, help="subspace dimension (default 50)")
        p.add_argument("--beta", type=float, help="sigmoid slope (default 5)")
        p.add_argument("--distance", choices=list(DISTANCE_KINDS), help="distance kind")
        p.add_argument("--epochs", type=int, help="training epochs (default 100)")
        p.add_argument("--lr-w", dest="lr_w", type=float, help="prototype learning rate")
        p.add_argument("--lr-lambda", dest="lr_lambda", type=float,
                       help="relevance learning rate")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--train-fraction", dest="train_fraction", type=float,
                       help="train split fraction in (0,1)")
        p.add_argument("--positive-label", dest="positive_label", help="positive class label")
        p.add_argument("--threshold", type=float, help="score threshold")
        p.add_argument("--top-k", dest="top_k", type=int, help="words per explanation")
        p.add_argument("--bands", help="percentile bands, e.g. '87:88,88:89'")
        p.add_argument("--per-band", dest="per_band", type=int, help="samples per band")
        p.add_argument("--per-class", dest="per_class", type=int, help="prototypes per class")
        p.add_argument("--target-precision", dest="target_precision", type=float,
                       help="calibration target precision")
        p.add_argument("--docs-per-class", dest="docs_per_class", type=int,
                       help="synthetic documents per class")
        p.add_argument("--dim", type=int, help="synthetic embedding dimension")
        return p

    add("synth-data", cmd_synth_data, "generate the synthetic two-class corpus")
    add("train", cmd_train, "train a classifier on a labeled corpus")
    add("evaluate", cmd_evaluate, "accuracy and per-class metrics on a labeled corpus")
    add("predict", cmd_predict, "nearest-prototype labels for a corpus")
    add("explain", cmd_explain, "per-word impact reports for a corpus")
    add("score-corpus", cmd_score_corpus, "probability-score and rank a corpus")
    add("rank", cmd_rank, "sort a scored file and fill percentiles")
    add("calibrate", cmd_calibrate, "per-band positive fractions from annotations")
    add("sample", cmd_sample, "sample cases per percentile band for annotation")
    add("grad-check", cmd_grad_check, "verify analytic gradients against finite differences")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = Options(args)
        return args.func(opts)
    except ToolkitError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
