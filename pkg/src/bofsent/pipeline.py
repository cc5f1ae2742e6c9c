"""Stage runner: extraction, training, evaluation and prediction over a corpus.

Stages hand data to each other through files under one output directory and
record the configuration hash that produced each stage, refusing to consume
artifacts built under a different configuration unless forced. Given the same
inputs, configuration and seed, every stage writes byte-identical artifacts
regardless of worker count.
"""
from __future__ import annotations

import datetime as _dt
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import classifier, codebook, fusion, metrics
from .config import PipelineConfig, derive_seed, extract_hash, train_hash
from .corpus import Manifest, Polarity, filter_split
from .descriptors import DescriptorSet, read_descriptors, write_descriptors
from .prosody import extract_audio_descriptors, read_pcm
from .video import extract_video_descriptors, read_frame_volume

logger = logging.getLogger(__name__)

MODALITIES = ("audio", "video")


class PipelineError(RuntimeError):
    """A stage cannot run: missing inputs, bad labels, or unusable artifacts."""


class StaleArtifactsError(PipelineError):
    """Artifacts on disk were produced under a different configuration."""


# ---------------------------------------------------------------------------
# artifact layout and stage state


def descriptor_path(out_dir: Path, modality: str, segment_id: str) -> Path:
    return out_dir / "descriptors" / modality / f"{segment_id}.dsc"


def codebook_path(out_dir: Path, modality: str) -> Path:
    return out_dir / "models" / f"{modality}.gmm"


def svm_path(out_dir: Path, modality: str) -> Path:
    return out_dir / "models" / f"{modality}.svm"


def _state_path(out_dir: Path) -> Path:
    return out_dir / "artifacts.json"


def load_state(out_dir: Path) -> dict:
    path = _state_path(out_dir)
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def _save_state(out_dir: Path, state: dict) -> None:
    state = dict(state)
    state["updated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    path = _state_path(out_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(state, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# extract


@dataclass
class ExtractResult:
    extracted: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


def _extract_one(manifest: Manifest, segment, modality: str, config: PipelineConfig, dst: Path) -> None:
    if modality == "audio":
        signal = read_pcm(manifest.resolve(segment.audio_path), segment.sample_rate)
        rows = extract_audio_descriptors(signal, config.audio)
    else:
        volume = read_frame_volume(manifest.resolve(segment.video_path))
        rows = extract_video_descriptors(volume, config.video)
    dst.parent.mkdir(parents=True, exist_ok=True)
    write_descriptors(dst, DescriptorSet(segment_id=segment.id, descriptors=rows.astype(np.float32)))


def run_extract(
    manifest: Manifest,
    config: PipelineConfig,
    out_dir: str | Path,
    modalities: tuple[str, ...] = MODALITIES,
    workers: int = 1,
    force: bool = False,
) -> ExtractResult:
    """Extract descriptors for every manifest segment, one file per (segment, modality).

    Outputs that already exist under the current extraction configuration are
    skipped; per-segment failures are logged and collected while the rest of
    the run continues.
    """
    out_dir = Path(out_dir)
    for modality in modalities:
        if modality not in MODALITIES:
            raise ValueError(f"unknown modality {modality!r}")
    state = load_state(out_dir)
    current_hash = extract_hash(config)
    fresh = state.get("extract", {}).get("hash") == current_hash

    jobs = []
    result = ExtractResult()
    for modality in modalities:
        for segment in manifest:
            dst = descriptor_path(out_dir, modality, segment.id)
            if fresh and not force and dst.exists():
                result.skipped.append(f"{modality}:{segment.id}")
                continue
            jobs.append((segment, modality, dst))

    def run_job(job):
        segment, modality, dst = job
        _extract_one(manifest, segment, modality, config, dst)

    if workers <= 1:
        for job in jobs:
            try:
                run_job(job)
                result.extracted.append(f"{job[1]}:{job[0].id}")
            except Exception as exc:  # noqa: BLE001 - per-segment isolation is the contract
                logger.error("extraction failed for %s/%s: %s", job[1], job[0].id, exc)
                result.failures[f"{job[1]}:{job[0].id}"] = str(exc)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_job, job): job for job in jobs}
            for future, job in futures.items():
                try:
                    future.result()
                    result.extracted.append(f"{job[1]}:{job[0].id}")
                except Exception as exc:  # noqa: BLE001
                    logger.error("extraction failed for %s/%s: %s", job[1], job[0].id, exc)
                    result.failures[f"{job[1]}:{job[0].id}"] = str(exc)

    state["extract"] = {"hash": current_hash, "seed": config.seed}
    _save_state(out_dir, state)
    result.extracted.sort()
    return result


# ---------------------------------------------------------------------------
# shared loading helpers


def _check_extract_state(out_dir: Path, config: PipelineConfig, force: bool) -> None:
    recorded = load_state(out_dir).get("extract", {}).get("hash")
    current = extract_hash(config)
    if recorded is None:
        raise PipelineError(f"{out_dir}: no extraction artifacts recorded; run extract first")
    if recorded != current:
        if force:
            logger.warning("descriptor artifacts were built under a different configuration (forced)")
        else:
            raise StaleArtifactsError(
                "descriptors were extracted under a different configuration "
                f"(recorded {recorded}, current {current}); re-extract or pass force"
            )


def _check_train_state(out_dir: Path, config: PipelineConfig, force: bool) -> None:
    _check_extract_state(out_dir, config, force)
    recorded = load_state(out_dir).get("train", {}).get("hash")
    current = train_hash(config)
    if recorded is None:
        raise PipelineError(f"{out_dir}: no trained models recorded; run train first")
    if recorded != current:
        if force:
            logger.warning("models were trained under a different configuration (forced)")
        else:
            raise StaleArtifactsError(
                "models were trained under a different configuration "
                f"(recorded {recorded}, current {current}); re-train or pass force"
            )


def _load_sets(manifest: Manifest, out_dir: Path, modality: str) -> list[DescriptorSet]:
    sets = []
    missing = []
    for segment in manifest:
        path = descriptor_path(out_dir, modality, segment.id)
        if not path.exists():
            missing.append(segment.id)
            continue
        dset = read_descriptors(path)
        if dset.segment_id != segment.id:
            raise PipelineError(f"{path}: holds descriptors for {dset.segment_id!r}, expected {segment.id!r}")
        sets.append(dset)
    if missing:
        raise PipelineError(
            f"missing {modality} descriptors for {len(missing)} segment(s): {', '.join(missing[:5])}"
            + ("..." if len(missing) > 5 else "")
        )
    return sets


# ---------------------------------------------------------------------------
# train


@dataclass
class TrainResult:
    codebooks: dict[str, codebook.GmmCodebook]
    models: dict[str, classifier.LinearSvmModel]
    selected_c: dict[str, float]


def run_train(
    manifest: Manifest, config: PipelineConfig, out_dir: str | Path, force: bool = False
) -> TrainResult:
    """Fit a codebook and an SVM per modality from the training split."""
    out_dir = Path(out_dir)
    _check_extract_state(out_dir, config, force)
    train_manifest = filter_split(manifest, "train")
    if len(train_manifest) == 0:
        raise PipelineError("training split is empty")
    labels = [segment.label() for segment in train_manifest]
    if len(set(labels)) < 2:
        only = labels[0].name.lower()
        raise PipelineError(f"training split holds only {only} segments; both classes are required")

    codebooks = {}
    models = {}
    selected = {}
    for modality in MODALITIES:
        sets = _load_sets(train_manifest, out_dir, modality)
        labelled = list(zip(sets, labels))
        data = codebook.sample_balanced(
            labelled, config.sample_budget, derive_seed(config.seed, "sample", modality)
        )
        book = codebook.fit_gmm(
            data,
            config.codebook_size,
            derive_seed(config.seed, "gmm", modality),
            max_iters=config.gmm_max_iters,
            tol=config.gmm_tol,
            variance_floor_scale=config.variance_floor_scale,
            modality=modality,
        )
        X = np.stack([codebook.encode(book, dset).values for dset in sets])
        y = np.array([label.value for label in labels], dtype=np.float64)
        cv_seed = derive_seed(config.seed, "cv", modality)
        table = classifier.cv_accuracy_table(
            X,
            y,
            cv_seed,
            n_folds=config.cv_folds,
            c_grid=config.c_grid(),
            max_epochs=config.svm_max_epochs,
            tol=config.svm_tol,
        )
        best_c, best_acc = table[0]
        for C, acc in table[1:]:
            if acc > best_acc:
                best_c, best_acc = C, acc
        model = classifier.train_svm(
            X,
            y,
            best_c,
            derive_seed(config.seed, "svm", modality),
            max_epochs=config.svm_max_epochs,
            tol=config.svm_tol,
        )
        logger.info("%s: selected C=%g (cv accuracy %.4f)", modality, best_c, best_acc)

        out_dir.joinpath("models").mkdir(parents=True, exist_ok=True)
        codebook.write_codebook(codebook_path(out_dir, modality), book)
        classifier.write_svm_model(svm_path(out_dir, modality), model)
        _write_json(
            out_dir / "models" / f"{modality}_cv.json",
            {"selected_c": best_c, "table": [[C, acc] for C, acc in table]},
        )
        codebooks[modality] = book
        models[modality] = model
        selected[modality] = best_c

    state = load_state(out_dir)
    state["train"] = {"hash": train_hash(config), "seed": config.seed}
    _save_state(out_dir, state)
    return TrainResult(codebooks=codebooks, models=models, selected_c=selected)


# ---------------------------------------------------------------------------
# scoring, evaluation, prediction


def _load_models(out_dir: Path) -> tuple[dict, dict]:
    codebooks = {}
    models = {}
    for modality in MODALITIES:
        cb_path = codebook_path(out_dir, modality)
        model_path = svm_path(out_dir, modality)
        for path in (cb_path, model_path):
            if not path.exists():
                raise PipelineError(f"missing trained artifact {path}; run train first")
        codebooks[modality] = codebook.read_codebook(cb_path)
        models[modality] = classifier.read_svm_model(model_path)
    return codebooks, models


def _segment_scores(
    segments: Manifest, out_dir: Path, codebooks: dict, models: dict
) -> dict[str, dict[str, float]]:
    """Normalized confidence per segment and modality, plus the raw distance."""
    scores: dict[str, dict[str, float]] = {seg.id: {} for seg in segments}
    for modality in MODALITIES:
        sets = _load_sets(segments, out_dir, modality)
        book = codebooks[modality]
        model = models[modality]
        X = np.stack([codebook.encode(book, dset).values for dset in sets])
        distances = classifier.decision_distances(model, X)
        confidences = classifier.normalize_score(model, distances)
        for segment, distance, confidence in zip(segments, distances, confidences):
            scores[segment.id][modality] = float(confidence)
            scores[segment.id][f"{modality}_distance"] = float(distance)
    return scores


def _write_score_file(out_dir: Path, name: str, segments: Manifest, scores: dict) -> Path:
    rows = []
    for segment in segments:
        rows.append((segment.id, "audio", scores[segment.id]["audio"]))
        rows.append((segment.id, "video", scores[segment.id]["video"]))
    path = out_dir / "scores" / f"{name}.tsv"
    path.parent.mkdir(parents=True, exist_ok=True)
    fusion.write_scores(path, rows)
    return path


def _fuse(pairs: list[fusion.ScorePair], mode: str, theta: float | None) -> list[fusion.FusedPrediction]:
    if mode == "score":
        if theta is None:
            raise ValueError("score-level fusion requires a weight")
        return [fusion.score_level_fuse(pair, theta) for pair in pairs]
    if mode == "output":
        return [fusion.output_level_fuse(pair) for pair in pairs]
    raise ValueError(f"unknown fusion mode {mode!r}")


@dataclass
class EvaluateResult:
    reports: dict[str, metrics.MetricReport]
    theta: float | None
    fusion_mode: str
    report_paths: dict[str, Path]


def run_evaluate(
    manifest: Manifest,
    split: str,
    config: PipelineConfig,
    out_dir: str | Path,
    fusion_mode: str | None = None,
    theta: float | None = None,
    force: bool = False,
) -> EvaluateResult:
    """Score one split, fuse, and write per-modality plus fused metric reports.

    With score-level fusion and no fixed weight, the weight is grid-searched
    on this split and the per-candidate trace is written next to the reports.
    The selected weight is recorded for later ``predict`` runs.
    """
    out_dir = Path(out_dir)
    _check_train_state(out_dir, config, force)
    mode = fusion_mode or config.fusion_mode
    segments = filter_split(manifest, split)
    if len(segments) == 0:
        raise PipelineError(f"split {split!r} is empty")
    truth_labels = [segment.label() for segment in segments]
    truth_sentiment = [segment.sentiment for segment in segments]
    if len(set(truth_labels)) < 2:
        raise PipelineError(f"split {split!r} holds a single class; evaluation metrics need both")

    codebooks, models = _load_models(out_dir)
    scores = _segment_scores(segments, out_dir, codebooks, models)
    _write_score_file(out_dir, split, segments, scores)

    reports: dict[str, metrics.MetricReport] = {}
    report_paths: dict[str, Path] = {}
    reports_dir = out_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)

    for modality in MODALITIES:
        pred_labels = [
            Polarity.POSITIVE if scores[seg.id][f"{modality}_distance"] > 0 else Polarity.NEGATIVE
            for seg in segments
        ]
        pred_sentiment = [metrics.scale_confidence(scores[seg.id][modality]) for seg in segments]
        report = metrics.compute_report(pred_labels, truth_labels, pred_sentiment, truth_sentiment)
        reports[modality] = report
        base = reports_dir / f"{split}_{modality}"
        _write_json(base.with_suffix(".json"), report.to_dict())
        base.with_suffix(".txt").write_text(
            metrics.format_report(report, title=f"{modality} / {split}"), encoding="utf-8"
        )
        report_paths[modality] = base.with_suffix(".json")

    pairs = [
        fusion.ScorePair(
            segment_id=seg.id,
            video_score=scores[seg.id]["video"],
            audio_score=scores[seg.id]["audio"],
            truth=label,
        )
        for seg, label in zip(segments, truth_labels)
    ]

    chosen_theta: float | None = None
    if mode == "score":
        chosen_theta = theta if theta is not None else config.theta
        candidates = config.theta_candidates()
        trace = [
            {"theta": candidate, "error": fusion.evaluate_theta(pairs, candidate)}
            for candidate in candidates
        ]
        source = "fixed"
        if chosen_theta is None:
            chosen_theta = fusion.grid_search_theta(pairs, candidates)
            source = "grid-search"
        _write_json(
            reports_dir / f"{split}_theta_trace.json",
            {"selected": chosen_theta, "source": source, "trace": trace},
        )
        state = load_state(out_dir)
        state["fusion"] = {"theta": chosen_theta, "split": split}
        _save_state(out_dir, state)

    fused = _fuse(pairs, mode, chosen_theta)
    fused_labels = [pred.label for pred in fused]
    fused_sentiment = [metrics.scale_confidence(pred.fused_score) for pred in fused]
    fused_report = metrics.compute_report(fused_labels, truth_labels, fused_sentiment, truth_sentiment)
    reports["fused"] = fused_report
    base = reports_dir / f"{split}_fused_{mode}"
    _write_json(base.with_suffix(".json"), fused_report.to_dict())
    base.with_suffix(".txt").write_text(
        metrics.format_report(fused_report, title=f"fused ({mode}) / {split}"), encoding="utf-8"
    )
    report_paths["fused"] = base.with_suffix(".json")

    predictions_path = out_dir / "predictions" / f"{split}.tsv"
    _write_prediction_file(predictions_path, segments, scores, fused)

    return EvaluateResult(reports=reports, theta=chosen_theta, fusion_mode=mode, report_paths=report_paths)


def _write_prediction_file(path: Path, segments: Manifest, scores: dict, fused) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["id\taudio_score\tvideo_score\tfused_score\tlabel\tsentiment"]
    fused_by_id = {pred.segment_id: pred for pred in fused}
    for segment in segments:
        pred = fused_by_id[segment.id]
        sentiment = metrics.scale_confidence(pred.fused_score)
        lines.append(
            f"{segment.id}\t{scores[segment.id]['audio']!r}\t{scores[segment.id]['video']!r}"
            f"\t{pred.fused_score!r}\t{pred.label.name.lower()}\t{sentiment!r}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_predict(
    manifest: Manifest,
    config: PipelineConfig,
    out_dir: str | Path,
    split: str | None = None,
    fusion_mode: str | None = None,
    theta: float | None = None,
    force: bool = False,
) -> Path:
    """Emit fused predictions (no ground truth needed) for a manifest or one split.

    The fusion weight falls back, in order: explicit argument, config value,
    the weight recorded by the last score-level evaluation, equal weights.
    """
    out_dir = Path(out_dir)
    _check_train_state(out_dir, config, force)
    mode = fusion_mode or config.fusion_mode
    segments = filter_split(manifest, split) if split else manifest
    if len(segments) == 0:
        raise PipelineError("no segments to predict")

    codebooks, models = _load_models(out_dir)
    scores = _segment_scores(segments, out_dir, codebooks, models)

    chosen_theta: float | None = None
    if mode == "score":
        if theta is not None:
            chosen_theta = theta
        elif config.theta is not None:
            chosen_theta = config.theta
        else:
            recorded = load_state(out_dir).get("fusion", {}).get("theta")
            chosen_theta = float(recorded) if recorded is not None else 0.5

    pairs = [
        fusion.ScorePair(
            segment_id=seg.id,
            video_score=scores[seg.id]["video"],
            audio_score=scores[seg.id]["audio"],
        )
        for seg in segments
    ]
    fused = _fuse(pairs, mode, chosen_theta)
    name = split if split else "all"
    path = out_dir / "predictions" / f"{name}.tsv"
    _write_prediction_file(path, segments, scores, fused)
    return path
