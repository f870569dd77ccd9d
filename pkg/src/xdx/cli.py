"""Command-line surface for batch operation.

Exit codes: 0 success, 1 validation error (nothing written), 2 runtime
failure (partial outputs removed). Errors print a single machine-parsable
line ``error[<CODE>]: message`` to standard error. ``XDX_SEED`` serves as
the fallback seed when ``--seed`` is absent; ``--config`` supplies
defaults from a JSON file which explicit flags override.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .anchor import AnchorConfig, find_anchor
from .classifier import BaselineConfig, fit_baseline, load_model, save_model
from .corpus import (
    Corpus,
    TokenizerConfig,
    build_level_split,
    content_tokens,
    load_corpus,
    write_corpus_jsonl,
    write_split_manifest,
)
from .errors import XdxError
from .harness import (
    EXPLAINER_NAMES,
    ExperimentSpec,
    SyntheticSpec,
    run_experiment,
)
from .metrics import classification_report, roc_auc, write_report_csv, write_roc_csv
from .perturbation import PerturbationConfig, call_predictor
from .remote import remote_predictor
from .shapley import EXACT_MODE_MAX_D, MODE_SAMPLED, ShapConfig, shap_explain
from .surrogate import eli5_explain, lime_explain
from .synthetic import generate_synthetic_corpora

METHODS = EXPLAINER_NAMES


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures to exit code 1
        raise CliError("USAGE", message)


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="global seed (fallback: XDX_SEED env, then 0)")
    common.add_argument("--out-dir", default=None, help="output directory (default ./xdx-out)")
    common.add_argument("--threads", type=int, default=None, help="cap on explainer-internal parallelism (default: cpu count)")
    common.add_argument("--config", default=None, help="JSON file with flag defaults; explicit flags win")
    return common


CORPUS_FORMAT_HELP = (
    "Corpus files: CSV with header text,label,domain (labels real/0 or fake/1, "
    "case-insensitive, UTF-8, quoted fields allowed) or JSONL with the same "
    "keys plus an optional id."
)


def build_parser() -> _Parser:
    common = _common_flags()
    parser = _Parser(prog="xdx", description="Cross-domain text classification explainability toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "ingest", parents=[common], help="normalize a labeled corpus to JSONL",
        epilog=CORPUS_FORMAT_HELP,
    )
    p.add_argument("--input", required=True, help="CSV or JSONL corpus (columns: text,label,domain)")
    p.add_argument("--format", choices=("csv", "jsonl"), default=None)
    p.add_argument("--name", required=True, help="corpus name; also the output file stem")

    p = sub.add_parser("synth", parents=[common], help="generate synthetic single-domain and mixed corpora")
    p.add_argument("--n-per-domain", type=int, default=None)
    p.add_argument("--signal", type=float, default=None)
    p.add_argument("--n-informative", type=int, default=None)
    p.add_argument("--n-neutral", type=int, default=None)

    p = sub.add_parser(
        "split", parents=[common], help="build a level split and write its manifest",
        epilog=CORPUS_FORMAT_HELP + " The manifest is JSONL: a provenance header object, "
        "then one {id, partition} row per sample.",
    )
    _corpus_flags(p)
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--ratios", default=None, help="train,val,test fractions (default 0.6,0.2,0.2)")
    p.add_argument("--balance", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--swap", action=argparse.BooleanOptionalAction, default=None,
                   help="exchange the level-2/level-3 orientations")

    p = sub.add_parser("train", parents=[common], help="train the baseline classifier on a level split")
    _corpus_flags(p)
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--ratios", default=None)
    p.add_argument("--balance", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--swap", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--model-out", default=None, help="model file path (default <out-dir>/model.xdxm)")
    _baseline_flags(p)

    p = sub.add_parser("eval", parents=[common], help="evaluate a saved model on a corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", choices=("csv", "jsonl"), default=None)

    p = sub.add_parser(
        "explain", parents=[common], help="explain one text with one method",
        epilog="Prints one JSON record to stdout: surrogates carry "
        "{method, text, prediction, class_probs, score?, intercept, weights, fidelity, seed}; "
        "anchor carries {anchor, precision, coverage, found}; shap carries "
        "{fx, base_value, phi, residual, mode}.",
    )
    p.add_argument("--method", required=True, help="|".join(METHODS))
    p.add_argument("--text", required=True)
    p.add_argument("--model", default=None, help="saved baseline model file")
    p.add_argument("--remote", default=None, help="served predictor endpoint URL")
    _explainer_flags(p)

    p = sub.add_parser(
        "experiment", parents=[common], help="run one full cross-domain experiment",
        epilog="Writes to --out-dir: result.json, report.csv, roc_<partition>.csv, "
        "explanations.jsonl, scorecard.csv, provenance.json. " + CORPUS_FORMAT_HELP,
    )
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--synthetic", action="store_true", help="use generated corpora instead of files")
    p.add_argument("--single", default=None)
    p.add_argument("--mixed", default=None)
    p.add_argument("--single-format", choices=("csv", "jsonl"), default=None)
    p.add_argument("--mixed-format", choices=("csv", "jsonl"), default=None)
    p.add_argument("--n-per-domain", type=int, default=None)
    p.add_argument("--signal", type=float, default=None)
    p.add_argument("--explainers", default=None, help="comma list, default lime,anchor,shap,eli5")
    p.add_argument("--ratios", default=None)
    p.add_argument("--balance", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--swap", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--k-random", type=int, default=None)
    p.add_argument("--split-seed", type=int, default=None)
    p.add_argument("--train-seed", type=int, default=None)
    p.add_argument("--explain-seed", type=int, default=None)
    _baseline_flags(p)
    _explainer_flags(p)

    p = sub.add_parser("compare", parents=[common], help="run all four explainers on one text")
    p.add_argument("--text", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--remote", default=None)
    _explainer_flags(p)

    return parser


def _corpus_flags(p) -> None:
    p.add_argument("--single", required=True, help="single-domain corpus file")
    p.add_argument("--mixed", default=None, help="mixed corpus file (levels 2-4)")
    p.add_argument("--single-format", choices=("csv", "jsonl"), default=None)
    p.add_argument("--mixed-format", choices=("csv", "jsonl"), default=None)


def _baseline_flags(p) -> None:
    p.add_argument("--hidden-units", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--vocab-size", type=int, default=None)
    p.add_argument("--max-len", type=int, default=None, help="tokenizer truncation length")


def _explainer_flags(p) -> None:
    p.add_argument("--n-samples", type=int, default=None, help="perturbations per surrogate fit")
    p.add_argument("--kernel-width", type=float, default=None)
    p.add_argument("--k", type=int, default=None, help="features per explanation (default 5)")
    p.add_argument("--n-coalitions", type=int, default=None)
    p.add_argument("--shap-target", choices=("log_odds", "probability"), default=None)
    p.add_argument("--anchor-threshold", type=float, default=None)


class _Options:
    """Flag values merged with --config file defaults."""

    def __init__(self, args: argparse.Namespace, config: dict):
        self.args = args
        self.config = config

    def get(self, key: str, default=None):
        value = getattr(self.args, key, None)
        if value is not None:
            return value
        if key in self.config:
            return self.config[key]
        return default

    def seed(self) -> int:
        value = self.get("seed")
        if value is not None:
            return int(value)
        env = os.environ.get("XDX_SEED")
        return int(env) if env else 0

    def out_dir(self) -> Path:
        return Path(self.get("out_dir", "xdx-out"))

    def threads(self) -> int:
        return int(self.get("threads", os.cpu_count() or 1))


def _parse_ratios(raw) -> tuple[float, float, float]:
    if raw is None:
        return (0.6, 0.2, 0.2)
    if isinstance(raw, (list, tuple)):
        parts = [float(x) for x in raw]
    else:
        parts = [float(x) for x in str(raw).split(",")]
    if len(parts) != 3:
        raise CliError("BAD_RATIOS", f"expected three fractions, got {raw!r}")
    return tuple(parts)  # type: ignore[return-value]


def _check_level(level: int) -> int:
    if level not in (1, 2, 3, 4):
        raise CliError("BAD_LEVEL", f"level must be 1..4, got {level}")
    return level


def _check_file(path, flag: str) -> Path:
    if path is None:
        raise CliError("MISSING_INPUT", f"{flag} is required")
    p = Path(path)
    if not p.is_file():
        raise CliError("MISSING_INPUT", f"{flag}: no such file: {p}")
    return p


def _infer_format(path: Path, explicit) -> str:
    if explicit:
        return explicit
    suffix = path.suffix.lower().lstrip(".")
    if suffix in ("csv", "jsonl"):
        return suffix
    raise CliError("BAD_FORMAT", f"cannot infer format of {path}; pass --format")


def _load(path: Path, fmt: str, name: str) -> Corpus:
    return load_corpus(path, fmt, name)


def _predictor_from(opts: _Options):
    model_path = opts.get("model")
    endpoint = opts.get("remote")
    if (model_path is None) == (endpoint is None):
        raise CliError("BAD_PREDICTOR", "exactly one of --model or --remote is required")
    if endpoint is not None:
        return remote_predictor(endpoint)
    return load_model(_check_file(model_path, "--model"))


def _perturbation_config(opts: _Options, seed: int) -> PerturbationConfig:
    return PerturbationConfig(
        n_samples=int(opts.get("n_samples", 500)),
        kernel_width=float(opts.get("kernel_width", 25.0)),
        seed=seed,
    )


def _baseline_config(opts: _Options, seed: int) -> BaselineConfig:
    return BaselineConfig(
        hidden_units=int(opts.get("hidden_units", 768)),
        dropout=float(opts.get("dropout", 0.3)),
        learning_rate=float(opts.get("learning_rate", 2e-5)),
        epochs=int(opts.get("epochs", 10)),
        batch_size=int(opts.get("batch_size", 32)),
        vocab_size=int(opts.get("vocab_size", 5000)),
        seed=seed,
        tokenizer=TokenizerConfig(max_len=int(opts.get("max_len", 15))),
    )


# --- commands -----------------------------------------------------------------


def _cmd_ingest(opts: _Options) -> int:
    path = _check_file(opts.get("input"), "--input")
    fmt = _infer_format(path, opts.get("format"))
    name = opts.get("name")
    corpus = _load(path, fmt, name)
    out_dir = opts.out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / f"{name}.jsonl"
    write_corpus_jsonl(corpus, out)
    counts = corpus.class_counts
    print(f"wrote {out} ({len(corpus)} samples: {counts})")
    return 0


def _cmd_synth(opts: _Options) -> int:
    single, mixed = generate_synthetic_corpora(
        n_per_domain=int(opts.get("n_per_domain", 500)),
        signal=float(opts.get("signal", 1.0)),
        n_informative=int(opts.get("n_informative", 6)),
        n_neutral=int(opts.get("n_neutral", 18)),
        seed=opts.seed(),
    )
    out_dir = opts.out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    write_corpus_jsonl(single, out_dir / "single.jsonl")
    write_corpus_jsonl(mixed, out_dir / "mixed.jsonl")
    print(f"wrote {out_dir / 'single.jsonl'} ({len(single)}) and {out_dir / 'mixed.jsonl'} ({len(mixed)})")
    return 0


def _build_split(opts: _Options):
    level = _check_level(int(opts.get("level")))
    single_path = _check_file(opts.get("single"), "--single")
    single = _load(single_path, _infer_format(single_path, opts.get("single_format")), single_path.stem)
    mixed = None
    if opts.get("mixed") is not None:
        mixed_path = _check_file(opts.get("mixed"), "--mixed")
        mixed = _load(mixed_path, _infer_format(mixed_path, opts.get("mixed_format")), mixed_path.stem)
    elif level != 1:
        raise CliError("MISSING_INPUT", f"level {level} requires --mixed")
    effective = level
    if bool(opts.get("swap", False)) and level in (2, 3):
        effective = {2: 3, 3: 2}[level]
    split = build_level_split(
        single,
        mixed,
        effective,
        ratios=_parse_ratios(opts.get("ratios")),
        seed=opts.seed(),
        balance=bool(opts.get("balance", True)),
    )
    return split


def _cmd_split(opts: _Options) -> int:
    split = _build_split(opts)
    out_dir = opts.out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / "split.jsonl"
    write_split_manifest(split, out)
    sizes = {name: len(c) for name, c in split.partitions().items()}
    print(f"wrote {out} {sizes}")
    return 0


def _cmd_train(opts: _Options) -> int:
    split = _build_split(opts)
    config = _baseline_config(opts, opts.seed())
    model = fit_baseline(split, config)
    out_dir = opts.out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    model_out = Path(opts.get("model_out") or out_dir / "model.xdxm")
    save_model(model, model_out)
    last = model.history[-1]
    print(
        f"wrote {model_out} (epochs={len(model.history)} "
        f"train_acc={last.train_accuracy:.3f} val_acc={last.val_accuracy:.3f})"
    )
    return 0


def _cmd_eval(opts: _Options) -> int:
    model = load_model(_check_file(opts.get("model"), "--model"))
    corpus_path = _check_file(opts.get("corpus"), "--corpus")
    corpus = _load(corpus_path, _infer_format(corpus_path, opts.get("format")), corpus_path.stem)
    probs = call_predictor(model, [s.text for s in corpus], threads=opts.threads())
    truths = [s.label for s in corpus]
    rep = classification_report([p.label for p in probs], truths)
    auc = roc_auc([p.p_fake for p in probs], truths)
    out_dir = opts.out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report_csv({"eval": rep}, level=0, path=out_dir / "report.csv")
    write_roc_csv(auc, out_dir / "roc.csv")
    print(f"accuracy={rep.accuracy:.4f} auc={auc.auc:.4f} -> {out_dir}")
    return 0


def _explain_one(opts: _Options, predictor, method: str, text: str, seed: int) -> dict:
    k = int(opts.get("k", 5))
    threads = opts.threads()
    if method == "lime":
        return lime_explain(predictor, text, _perturbation_config(opts, seed), k=k, threads=threads).to_record()
    if method == "eli5":
        return eli5_explain(predictor, text, _perturbation_config(opts, seed), k=k, threads=threads).to_record()
    if method == "anchor":
        config = AnchorConfig(
            precision_threshold=float(opts.get("anchor_threshold", 0.95)), seed=seed
        )
        return find_anchor(predictor, text, config, threads=threads).to_record()
    if method == "shap":
        d = len(content_tokens(text))
        mode = MODE_SAMPLED if d > EXACT_MODE_MAX_D else "exact"
        config = ShapConfig(
            mode=mode,
            n_coalitions=int(opts.get("n_coalitions", 2048)),
            target=opts.get("shap_target", "log_odds"),
            seed=seed,
        )
        return shap_explain(predictor, text, config, threads=threads).to_record()
    raise CliError("BAD_METHOD", f"unknown method {method!r} (expected one of {', '.join(METHODS)})")


def _cmd_explain(opts: _Options) -> int:
    method = opts.get("method")
    if method not in METHODS:
        raise CliError("BAD_METHOD", f"unknown method {method!r} (expected one of {', '.join(METHODS)})")
    predictor = _predictor_from(opts)
    record = _explain_one(opts, predictor, method, opts.get("text"), opts.seed())
    print(json.dumps(record, sort_keys=True))
    return 0


def _cmd_compare(opts: _Options) -> int:
    predictor = _predictor_from(opts)
    text = opts.get("text")
    seed = opts.seed()
    rows = []
    for method in METHODS:
        record = _explain_one(opts, predictor, method, text, seed)
        if method == "anchor":
            detail = (
                " AND ".join(record["anchor"])
                if record["found"] and record["anchor"]
                else ("(empty rule)" if record["found"] else "No anchor found")
            )
            headline = f"precision={record['precision']:.3f} coverage={record['coverage']:.3f}"
        elif method == "shap":
            top = sorted(record["phi"], key=lambda e: -abs(e["value"]))[: int(opts.get("k", 5))]
            detail = ", ".join(f"{e['token']}:{e['value']:+.3f}" for e in top)
            headline = f"fx={record['fx']:.3f} base={record['base_value']:.3f}"
        else:
            detail = ", ".join(f"{e['token']}:{e['weight']:+.3f}" for e in record["weights"])
            if method == "eli5":
                headline = f"score={record['score']:+.3f}"
            else:
                headline = f"p_fake={record['class_probs'][1]:.3f}"
        rows.append((method, record["prediction"], headline, detail))

    widths = [max(len(str(row[i])) for row in rows + [("method", "prediction", "summary", "top features")]) for i in range(4)]
    header = ("method", "prediction", "summary", "top features")
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in rows:
        print("  ".join(str(cell).ljust(w) for cell, w in zip(row, widths)))
    return 0


def _cmd_experiment(opts: _Options) -> int:
    level = _check_level(int(opts.get("level")))
    seed = opts.seed()
    split_seed = int(opts.get("split_seed", seed))
    train_seed = int(opts.get("train_seed", seed + 1))
    explain_seed = int(opts.get("explain_seed", seed + 2))

    explainers_raw = opts.get("explainers")
    explainers = (
        tuple(x.strip() for x in explainers_raw.split(",") if x.strip())
        if explainers_raw
        else EXPLAINER_NAMES
    )
    unknown = set(explainers) - set(EXPLAINER_NAMES)
    if not explainers or unknown:
        raise CliError("BAD_EXPLAINERS", f"explainers must be a nonempty subset of {EXPLAINER_NAMES}")

    spec = ExperimentSpec(
        level=level,
        explainers=explainers,
        split_seed=split_seed,
        train_seed=train_seed,
        explain_seed=explain_seed,
        ratios=_parse_ratios(opts.get("ratios")),
        balance=bool(opts.get("balance", True)),
        swap=bool(opts.get("swap", False)),
        k_random=int(opts.get("k_random", 3)),
        top_k=int(opts.get("k", 5)),
        threads=opts.threads(),
        baseline=_baseline_config(opts, train_seed),
        perturbation=_perturbation_config(opts, explain_seed),
        anchor=AnchorConfig(precision_threshold=float(opts.get("anchor_threshold", 0.95)), seed=explain_seed),
        shap=ShapConfig(
            n_coalitions=int(opts.get("n_coalitions", 2048)),
            target=opts.get("shap_target", "log_odds"),
            seed=explain_seed,
        ),
    )
    if bool(opts.get("synthetic", False)):
        spec.synthetic = SyntheticSpec(
            n_per_domain=int(opts.get("n_per_domain", 500)),
            signal=float(opts.get("signal", 1.0)),
            seed=split_seed,
        )
    else:
        single = _check_file(opts.get("single"), "--single")
        spec.single_path = str(single)
        spec.single_format = _infer_format(single, opts.get("single_format"))
        if opts.get("mixed") is not None:
            mixed = _check_file(opts.get("mixed"), "--mixed")
            spec.mixed_path = str(mixed)
            spec.mixed_format = _infer_format(mixed, opts.get("mixed_format"))
        elif level != 1:
            raise CliError("MISSING_INPUT", f"level {level} requires --mixed")

    out_dir = opts.out_dir()
    result = run_experiment(spec, out_dir=out_dir)
    test_report = result.reports["test"]
    ranked = [s.explainer for s in result.scorecard.ranked()]
    times = {
        name: f"{score.mean_wall_time:.3f}s"
        for name, score in sorted(result.scorecard.scores.items())
    }
    print(f"level {level}: test accuracy={test_report.accuracy:.4f} auc={result.aucs['test'].auc:.4f}")
    print(f"explainer ranking: {', '.join(ranked)} (mean wall time per explanation: {times})")
    print(f"outputs -> {out_dir}")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "synth": _cmd_synth,
    "split": _cmd_split,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "explain": _cmd_explain,
    "experiment": _cmd_experiment,
    "compare": _cmd_compare,
}

_EXPERIMENT_OUTPUTS = (
    "result.json",
    "report.csv",
    "roc_train.csv",
    "roc_validation.csv",
    "roc_test.csv",
    "explanations.jsonl",
    "scorecard.csv",
    "provenance.json",
)


def _cleanup_partial(opts: _Options, command: str, started: float) -> None:
    """Best-effort removal of files this invocation wrote before failing.

    Only touches the command's standard output names, and only when their
    mtime falls after the invocation started, so outputs of an earlier
    successful run survive a failed rerun.
    """
    try:
        out_dir = opts.out_dir()
    except Exception:
        return
    names = {
        "experiment": _EXPERIMENT_OUTPUTS,
        "eval": ("report.csv", "roc.csv"),
        "split": ("split.jsonl",),
        "synth": ("single.jsonl", "mixed.jsonl"),
    }.get(command, ())
    for name in names:
        for candidate in (out_dir / name, out_dir / f"{name}.tmp"):
            try:
                if candidate.exists() and candidate.stat().st_mtime >= started - 1.0:
                    candidate.unlink()
            except OSError:
                pass


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    started = time.time()
    try:
        args = parser.parse_args(argv)
    except CliError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1

    config: dict = {}
    command = getattr(args, "command", None)
    try:
        if getattr(args, "config", None):
            config_path = Path(args.config)
            if not config_path.is_file():
                raise CliError("MISSING_INPUT", f"--config: no such file: {config_path}")
            config = json.loads(config_path.read_text(encoding="utf-8"))
        opts = _Options(args, config)
        return _COMMANDS[command](opts)
    except CliError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except XdxError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        _cleanup_partial(_Options(args, config), command, started)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort runtime failure path
        print(f"error[RUNTIME]: {exc}", file=sys.stderr)
        _cleanup_partial(_Options(args, config), command, started)
        return 2


if __name__ == "__main__":
    sys.exit(main())
