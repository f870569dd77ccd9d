"""Cross-domain experiment orchestration.

One experiment = build the level split, train or attach a predictor,
evaluate every partition, pick the test-case battery (one exemplar per
prediction outcome plus random draws), run the requested explainers on
each battery case, and score the explainers against each other.

Everything is driven by three seeds (split, train, explain); a rerun with
the same spec produces byte-identical output files. Wall-clock timings
are kept in memory for console reporting but never serialized, precisely
so that reruns stay byte-identical.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, replace
from itertools import combinations
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .anchor import AnchorConfig, find_anchor
from .classifier import BaselineConfig, ProbVector, fit_baseline
from .corpus import (
    Corpus,
    Label,
    LevelSplit,
    build_level_split,
    content_tokens,
    load_corpus,
)
from .metrics import (
    AucResult,
    ClassificationReport,
    classification_report,
    roc_auc,
    write_report_csv,
    write_roc_csv,
)
from .perturbation import PerturbationConfig, call_predictor
from .remote import remote_predictor
from .shapley import (
    EXACT_MODE_MAX_D,
    MODE_EXACT,
    MODE_SAMPLED,
    ShapConfig,
    dummy_violation,
    shap_explain,
)
from .surrogate import eli5_explain, lime_explain
from .synthetic import generate_synthetic_corpora

EXPLAINER_NAMES = ("lime", "anchor", "shap", "eli5")
STABILITY_SEEDS = 5

CATEGORY_CORRECT_REAL = "correct_real"
CATEGORY_CORRECT_FAKE = "correct_fake"
CATEGORY_REAL_AS_FAKE = "real_mis_as_fake"
CATEGORY_FAKE_AS_REAL = "fake_mis_as_real"

# Row names used in rendered reports for the four outcome slots; these
# follow the legacy detector-report convention rather than the standard
# confusion terminology, which metrics.py uses exclusively.
REPORT_LABELS = {
    CATEGORY_CORRECT_REAL: "True positive",
    CATEGORY_REAL_AS_FAKE: "True negative",
    CATEGORY_CORRECT_FAKE: "False positive",
    CATEGORY_FAKE_AS_REAL: "False negative",
}

@dataclass(frozen=True)
class SyntheticSpec:
    n_per_domain: int = 500
    signal: float = 1.0
    n_informative: int = 6
    n_neutral: int = 18
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "n_per_domain": self.n_per_domain,
            "signal": self.signal,
            "n_informative": self.n_informative,
            "n_neutral": self.n_neutral,
            "seed": self.seed,
        }


@dataclass
class ExperimentSpec:
    level: int
    explainers: tuple[str, ...] = EXPLAINER_NAMES
    split_seed: int = 0
    train_seed: int = 1
    explain_seed: int = 2
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    balance: bool = True
    swap: bool = False
    k_random: int = 3
    top_k: int = 5
    threads: int = 1
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    remote_endpoint: str | None = None
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    anchor: AnchorConfig = field(default_factory=AnchorConfig)
    shap: ShapConfig = field(default_factory=ShapConfig)
    single_corpus: Corpus | None = None
    mixed_corpus: Corpus | None = None
    single_path: str | None = None
    mixed_path: str | None = None
    single_format: str = "jsonl"
    mixed_format: str = "jsonl"
    synthetic: SyntheticSpec | None = None

    def validate(self) -> None:
        if self.level not in (1, 2, 3, 4):
            raise ValueError(f"level must be in 1..4, got {self.level}")
        if not self.explainers:
            raise ValueError("at least one explainer is required")
        unknown = set(self.explainers) - set(EXPLAINER_NAMES)
        if unknown:
            raise ValueError(f"unknown explainers: {sorted(unknown)}")
        sources = [
            self.single_corpus is not None,
            self.single_path is not None,
            self.synthetic is not None,
        ]
        if sum(sources) != 1:
            raise ValueError("exactly one corpus source (in-memory, paths, or synthetic) is required")


@dataclass(frozen=True)
class BatteryCase:
    slot: str
    report_label: str
    sample_id: str
    text: str
    truth: Label
    prediction: Label
    probs: ProbVector

    def to_dict(self) -> dict:
        return {
            "slot": self.slot,
            "report_label": self.report_label,
            "sample_id": self.sample_id,
            "text": self.text,
            "truth": self.truth.value,
            "prediction": self.prediction.value,
            "probs": [self.probs.p_real, self.probs.p_fake],
        }


@dataclass
class TestCaseBattery:
    cases: list[BatteryCase]
    absent: list[str]

    def to_dict(self) -> dict:
        return {"cases": [c.to_dict() for c in self.cases], "absent": list(self.absent)}


def category_of(truth: Label, prediction: Label) -> str:
    if truth is Label.REAL:
        return CATEGORY_CORRECT_REAL if prediction is Label.REAL else CATEGORY_REAL_AS_FAKE
    return CATEGORY_CORRECT_FAKE if prediction is Label.FAKE else CATEGORY_FAKE_AS_REAL


def select_battery(
    predictor: Callable[[Sequence[str]], list[ProbVector]],
    test: Corpus,
    k_random: int = 3,
    seed: int = 0,
    threads: int = 1,
) -> TestCaseBattery:
    """Pick the highest-confidence exemplar per outcome category plus
    k uniformly random test samples; impossible categories are flagged."""
    if len(test) == 0:
        raise ValueError("test corpus is empty")
    probs = call_predictor(predictor, [s.text for s in test], threads=threads)
    best: dict[str, tuple[float, int]] = {}
    for index, (sample, prob) in enumerate(zip(test, probs)):
        category = category_of(sample.label, prob.label)
        confidence = prob.confidence()
        if category not in best or confidence > best[category][0]:
            best[category] = (confidence, index)

    cases: list[BatteryCase] = []
    absent: list[str] = []
    for category in (
        CATEGORY_CORRECT_REAL,
        CATEGORY_REAL_AS_FAKE,
        CATEGORY_CORRECT_FAKE,
        CATEGORY_FAKE_AS_REAL,
    ):
        if category not in best:
            absent.append(category)
            continue
        index = best[category][1]
        sample, prob = test.samples[index], probs[index]
        cases.append(
            BatteryCase(
                slot=category,
                report_label=REPORT_LABELS[category],
                sample_id=sample.id,
                text=sample.text,
                truth=sample.label,
                prediction=prob.label,
                probs=prob,
            )
        )

    rng = np.random.default_rng(seed)
    draw = rng.choice(len(test), size=min(k_random, len(test)), replace=False)
    for rank, index in enumerate(draw, start=1):
        sample, prob = test.samples[int(index)], probs[int(index)]
        cases.append(
            BatteryCase(
                slot=f"random_{rank}",
                report_label=f"Random {rank}",
                sample_id=sample.id,
                text=sample.text,
                truth=sample.label,
                prediction=prob.label,
                probs=prob,
            )
        )
    return TestCaseBattery(cases=cases, absent=absent)


@dataclass
class CaseExplanations:
    """All repeats of one explainer on one battery case."""

    slot: str
    explainer: str
    primary_record: dict
    top_position_sets: list[set[int]]
    fidelity: float | None = None
    anchor_precision: float | None = None
    anchor_found: bool | None = None
    shap_residual: float | None = None
    shap_dummy: float | None = None
    wall_times: list[float] = field(default_factory=list)


@dataclass
class ExplainerScore:
    explainer: str
    fidelity: float | None
    anchor_precision: float | None
    anchor_found_rate: float | None
    shap_additivity_residual: float | None
    shap_dummy_violation: float | None
    stability: float
    mean_wall_time: float  # console-only; never serialized

    def primary(self) -> float:
        if self.fidelity is not None:
            return self.fidelity
        if self.anchor_precision is not None:
            return self.anchor_precision * (self.anchor_found_rate or 0.0)
        if self.shap_additivity_residual is not None:
            return 1.0 - min(1.0, self.shap_additivity_residual)
        return 0.0

    def to_dict(self) -> dict:
        return {
            "explainer": self.explainer,
            "fidelity": self.fidelity,
            "anchor_precision": self.anchor_precision,
            "anchor_found_rate": self.anchor_found_rate,
            "shap_additivity_residual": self.shap_additivity_residual,
            "shap_dummy_violation": self.shap_dummy_violation,
            "stability": self.stability,
            "primary": self.primary(),
        }


@dataclass
class ExplainerScorecard:
    scores: dict[str, ExplainerScore]

    def ranked(self) -> list[ExplainerScore]:
        return sorted(
            self.scores.values(),
            key=lambda s: (-s.primary(), -s.stability, s.explainer),
        )

    def to_dict(self) -> dict:
        return {
            "scores": {name: score.to_dict() for name, score in sorted(self.scores.items())},
            "ranking": [s.explainer for s in self.ranked()],
        }


def _jaccard(a: set[int], b: set[int]) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def score_explainers(entries: list[CaseExplanations]) -> ExplainerScorecard:
    """Aggregate per-case explanation quality into one scorecard."""
    scores: dict[str, ExplainerScore] = {}
    for name in dict.fromkeys(e.explainer for e in entries):
        group = [e for e in entries if e.explainer == name]
        per_case = [
            np.mean([_jaccard(a, b) for a, b in combinations(e.top_position_sets, 2)])
            for e in group
            if len(e.top_position_sets) >= 2
        ]
        stability = float(np.mean(per_case)) if per_case else 1.0
        times = [t for e in group for t in e.wall_times]
        wall = float(np.mean(times)) if times else 0.0

        def _mean(values: list[float | None]) -> float | None:
            present = [v for v in values if v is not None]
            return float(np.mean(present)) if present else None

        scores[name] = ExplainerScore(
            explainer=name,
            fidelity=_mean([e.fidelity for e in group]),
            anchor_precision=_mean([e.anchor_precision for e in group]),
            anchor_found_rate=(
                float(np.mean([e.anchor_found for e in group]))
                if group[0].anchor_found is not None
                else None
            ),
            shap_additivity_residual=_mean([e.shap_residual for e in group]),
            shap_dummy_violation=_mean([e.shap_dummy for e in group]),
            stability=stability,
            mean_wall_time=wall,
        )
    return ExplainerScorecard(scores=scores)


@dataclass
class ExperimentResult:
    level: int
    reports: dict[str, ClassificationReport]
    aucs: dict[str, AucResult]
    battery: TestCaseBattery
    explanations: list[CaseExplanations]
    scorecard: ExplainerScorecard
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "reports": {name: rep.to_dict() for name, rep in self.reports.items()},
            "aucs": {name: auc.to_dict() for name, auc in self.aucs.items()},
            "battery": self.battery.to_dict(),
            "explanations": [
                {"case": e.slot, **e.primary_record} for e in self.explanations
            ],
            "scorecard": self.scorecard.to_dict(),
            "provenance": self.provenance,
        }


def _resolve_corpora(spec: ExperimentSpec) -> tuple[Corpus, Corpus | None, dict]:
    if spec.synthetic is not None:
        single, mixed = generate_synthetic_corpora(
            n_per_domain=spec.synthetic.n_per_domain,
            n_informative=spec.synthetic.n_informative,
            n_neutral=spec.synthetic.n_neutral,
            signal=spec.synthetic.signal,
            seed=spec.synthetic.seed,
        )
        source = {"kind": "synthetic", **spec.synthetic.to_dict()}
    elif spec.single_path is not None:
        single = load_corpus(spec.single_path, spec.single_format, name=Path(spec.single_path).stem)
        mixed = (
            load_corpus(spec.mixed_path, spec.mixed_format, name=Path(spec.mixed_path).stem)
            if spec.mixed_path
            else None
        )
        source = {"kind": "files", "single": str(spec.single_path), "mixed": str(spec.mixed_path)}
    else:
        single, mixed = spec.single_corpus, spec.mixed_corpus
        source = {"kind": "memory"}
    checksums = {"single": single.checksum()}
    if mixed is not None:
        checksums["mixed"] = mixed.checksum()
    source["checksums"] = checksums
    return single, mixed, source


def _resolve_predictor(spec: ExperimentSpec, split: LevelSplit):
    if spec.remote_endpoint:
        return remote_predictor(spec.remote_endpoint), None
    model = fit_baseline(split, replace(spec.baseline, seed=spec.train_seed))
    return model, model


def _shap_config_for(spec: ExperimentSpec, text: str, seed: int) -> ShapConfig:
    d = len(content_tokens(text, spec.baseline.tokenizer))
    mode = spec.shap.mode
    if mode == MODE_EXACT and d > EXACT_MODE_MAX_D:
        mode = MODE_SAMPLED
    return replace(spec.shap, mode=mode, seed=seed)


def _explain_once(spec: ExperimentSpec, predictor, explainer: str, text: str, seed: int):
    if explainer == "lime":
        return lime_explain(
            predictor,
            text,
            config=replace(spec.perturbation, seed=seed),
            k=spec.top_k,
            tokenizer=spec.baseline.tokenizer,
            threads=spec.threads,
        )
    if explainer == "eli5":
        return eli5_explain(
            predictor,
            text,
            config=replace(spec.perturbation, seed=seed),
            k=spec.top_k,
            tokenizer=spec.baseline.tokenizer,
            threads=spec.threads,
        )
    if explainer == "anchor":
        return find_anchor(
            predictor,
            text,
            config=replace(spec.anchor, seed=seed),
            tokenizer=spec.baseline.tokenizer,
            threads=spec.threads,
        )
    if explainer == "shap":
        return shap_explain(
            predictor,
            text,
            config=_shap_config_for(spec, text, seed),
            tokenizer=spec.baseline.tokenizer,
            threads=spec.threads,
        )
    raise ValueError(f"unknown explainer {explainer!r}")


def _explain_battery(spec: ExperimentSpec, predictor, battery: TestCaseBattery) -> list[CaseExplanations]:
    entries: list[CaseExplanations] = []
    for case_index, case in enumerate(battery.cases):
        base_seed = spec.explain_seed + 7919 * case_index
        for explainer in spec.explainers:
            sets: list[set[int]] = []
            wall_times: list[float] = []
            primary = None
            for rep in range(STABILITY_SEEDS):
                started = time.perf_counter()
                explanation = _explain_once(spec, predictor, explainer, case.text, base_seed + rep)
                wall_times.append(time.perf_counter() - started)
                if rep == 0:
                    primary = explanation
                if explainer == "lime":
                    sets.append(explanation.top_positions())
                elif explainer == "eli5":
                    sets.append(explanation.top_positions(spec.top_k))
                elif explainer == "shap":
                    sets.append(explanation.top_positions(spec.top_k))
                else:
                    sets.append(explanation.top_positions())

            entry = CaseExplanations(
                slot=case.slot,
                explainer=explainer,
                primary_record=primary.to_record(),
                top_position_sets=sets,
                wall_times=wall_times,
            )
            if explainer == "lime":
                entry.fidelity = primary.local_fit
            elif explainer == "eli5":
                entry.fidelity = primary.fidelity
            elif explainer == "anchor":
                entry.anchor_precision = primary.precision
                entry.anchor_found = primary.found
            else:
                entry.shap_residual = primary.additivity_residual
                entry.shap_dummy = dummy_violation(primary)
            entries.append(entry)
    return entries


def run_experiment(spec: ExperimentSpec, out_dir: str | Path | None = None) -> ExperimentResult:
    """Execute one full experiment; optionally write the output layout.

    All-or-nothing: nothing is written until every stage has finished.
    """
    spec.validate()
    single, mixed, source = _resolve_corpora(spec)

    effective_level = spec.level
    if spec.swap and spec.level in (2, 3):
        effective_level = {2: 3, 3: 2}[spec.level]
    split = build_level_split(
        single, mixed, effective_level, spec.ratios, spec.split_seed, spec.balance
    )

    predictor, _model = _resolve_predictor(spec, split)

    reports: dict[str, ClassificationReport] = {}
    aucs: dict[str, AucResult] = {}
    for name, corpus in split.partitions().items():
        probs = call_predictor(predictor, [s.text for s in corpus], threads=spec.threads)
        predictions = [p.label for p in probs]
        truths = [s.label for s in corpus]
        reports[name] = classification_report(predictions, truths)
        aucs[name] = roc_auc([p.p_fake for p in probs], truths)

    battery = select_battery(predictor, split.test, spec.k_random, spec.explain_seed, spec.threads)
    explanations = _explain_battery(spec, predictor, battery)
    scorecard = score_explainers(explanations)

    provenance = {
        "level": spec.level,
        "effective_level": effective_level,
        "swap": spec.swap,
        "ratios": list(spec.ratios),
        "balance": spec.balance,
        "seeds": {"split": spec.split_seed, "train": spec.train_seed, "explain": spec.explain_seed},
        "k_random": spec.k_random,
        "top_k": spec.top_k,
        "explainers": list(spec.explainers),
        "classifier": (
            {"kind": "remote", "endpoint": spec.remote_endpoint}
            if spec.remote_endpoint
            else {
                "kind": "baseline",
                "hidden_units": spec.baseline.hidden_units,
                "dropout": spec.baseline.dropout,
                "learning_rate": spec.baseline.learning_rate,
                "epochs": spec.baseline.epochs,
                "batch_size": spec.baseline.batch_size,
                "vocab_size": spec.baseline.vocab_size,
            }
        ),
        "perturbation": {
            "n_samples": spec.perturbation.n_samples,
            "kernel_width": spec.perturbation.kernel_width,
            "mask_policy": spec.perturbation.mask_policy,
        },
        "anchor": {
            "precision_threshold": spec.anchor.precision_threshold,
            "confidence": spec.anchor.confidence,
            "tolerance": spec.anchor.tolerance,
            "beam_width": spec.anchor.beam_width,
            "batch_size": spec.anchor.batch_size,
            "max_perturbations": spec.anchor.max_perturbations,
        },
        "shap": {
            "mode": spec.shap.mode,
            "n_coalitions": spec.shap.n_coalitions,
            "target": spec.shap.target,
        },
        "source": source,
        "split_sizes": {name: len(corpus) for name, corpus in split.partitions().items()},
    }

    result = ExperimentResult(
        level=spec.level,
        reports=reports,
        aucs=aucs,
        battery=battery,
        explanations=explanations,
        scorecard=scorecard,
        provenance=provenance,
    )
    if out_dir is not None:
        write_outputs(result, Path(out_dir))
    return result


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_outputs(result: ExperimentResult, out_dir: Path) -> None:
    """Write the per-run output layout; each file is replaced atomically."""
    out_dir.mkdir(parents=True, exist_ok=True)

    _atomic_write(
        out_dir / "result.json", json.dumps(result.to_dict(), sort_keys=True, indent=2) + "\n"
    )

    tmp = out_dir / "report.csv.tmp"
    write_report_csv(result.reports, result.level, tmp)
    os.replace(tmp, out_dir / "report.csv")

    for partition, auc in result.aucs.items():
        tmp = out_dir / f"roc_{partition}.csv.tmp"
        write_roc_csv(auc, tmp)
        os.replace(tmp, out_dir / f"roc_{partition}.csv")

    lines = [
        json.dumps({"case": e.slot, **e.primary_record}, sort_keys=True)
        for e in result.explanations
    ]
    _atomic_write(out_dir / "explanations.jsonl", "\n".join(lines) + ("\n" if lines else ""))

    card = result.scorecard.to_dict()
    header = (
        "explainer,fidelity,anchor_precision,anchor_found_rate,"
        "shap_additivity_residual,shap_dummy_violation,stability,primary,rank"
    )
    rows = [header]
    ranking = card["ranking"]
    for name in sorted(card["scores"]):
        s = card["scores"][name]
        cells = [
            name,
            *(
                "" if s[key] is None else f"{s[key]:.6f}"
                for key in (
                    "fidelity",
                    "anchor_precision",
                    "anchor_found_rate",
                    "shap_additivity_residual",
                    "shap_dummy_violation",
                    "stability",
                    "primary",
                )
            ),
            str(ranking.index(name) + 1),
        ]
        rows.append(",".join(cells))
    _atomic_write(out_dir / "scorecard.csv", "\n".join(rows) + "\n")

    _atomic_write(
        out_dir / "provenance.json", json.dumps(result.provenance, sort_keys=True, indent=2) + "\n"
    )
