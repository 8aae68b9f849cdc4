"""Evaluation runs and metrics reports.

A report holds one row per evaluation condition (noise type, SNR,
enhancement on/off) with top-1 and top-k accuracy. The JSON form is the
normative artifact and is byte-deterministic for a fixed config and
seeds: keys are sorted and no timestamps or absolute paths are embedded.
A human-readable aligned table and a delimited plot-data file are derived
from it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .checkpoint import load_into
from .config import BASELINE, Condition, RunConfig, work_paths
from .data import DatasetManifest, NoiseBank
from .dsp import (
    EVAL_CENTER_CROP,
    Waveform,
    compress,
    fix_length,
    load_wav,
    mix_at_snr,
    stft_magnitude,
)
from .errors import ConfigError, DataError
from .labels import LabelScheme, evaluate, predict_label, topk_correct
from .nets import ComposedNet, freeze
from .seeding import derive_seed
from .training import build_enh_net, build_sid_net, compute_features

REPORT_FORMAT = 1


@dataclass
class MetricsReport:
    config_hash: str
    rows: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_json_bytes(self) -> bytes:
        payload = {
            "config_hash": self.config_hash,
            "format": REPORT_FORMAT,
            "meta": self.meta,
            "rows": self.rows,
        }
        return (json.dumps(payload, sort_keys=True, indent=1) + "\n").encode("utf-8")

    def write(self, path) -> None:
        Path(path).write_bytes(self.to_json_bytes())

    @classmethod
    def load(cls, path) -> "MetricsReport":
        with open(path) as fh:
            payload = json.load(fh)
        if payload.get("format") != REPORT_FORMAT:
            raise DataError(f"{path}: unsupported report format")
        return cls(
            config_hash=payload["config_hash"],
            rows=payload["rows"],
            meta=payload.get("meta", {}),
        )


def default_model_tag(config: RunConfig) -> str:
    if config.labels.labeling == BASELINE:
        return "baseline"
    return f"multi-label-n{config.labels.num_subgroups}"


def _spectrogram_batch(features, utt_ids, target_frames, dtype=np.float32):
    arrays = [
        fix_length(features[u], target_frames, EVAL_CENTER_CROP).values.astype(dtype)
        for u in utt_ids
    ]
    return np.stack(arrays)


def evaluate_run(
    config: RunConfig,
    test_manifest: DatasetManifest,
    noise_bank: NoiseBank | None = None,
    model_tag: str | None = None,
) -> MetricsReport:
    """Score the configured checkpoints under every eval condition.

    Test noise segments are drawn only from the bank's test halves. The
    checkpoints' config hashes must match the current config.
    """
    paths = work_paths(config)
    config_hash = config.config_hash()
    scheme = config.scheme(test_manifest.num_speakers)
    model_tag = model_tag or default_model_tag(config)
    conditions = config.eval.conditions
    if not conditions:
        raise ConfigError("no evaluation conditions configured")

    sid = build_sid_net(config, test_manifest.num_speakers)
    load_into(paths.id_checkpoint, sid.parameters(), expected_hash=config_hash)
    freeze(sid.parameters())
    composed = None
    if any(c.enhancement for c in conditions):
        if not Path(paths.enh_checkpoint).is_file():
            raise DataError(
                f"conditions request enhancement but {paths.enh_checkpoint} "
                "does not exist; run enhancement training first"
            )
        enh = build_enh_net(config)
        load_into(paths.enh_checkpoint, enh.parameters(), expected_hash=config_hash)
        freeze(enh.parameters())
        composed = ComposedNet(enh, sid)

    noisy_conditions = [c for c in conditions if c.noise is not None]
    if noisy_conditions and noise_bank is None:
        raise DataError(
            f"conditions {[c.label for c in noisy_conditions]} need a noise bank"
        )

    utt_ids = [row.utt_id for row in test_manifest.rows]
    speakers = {
        row.utt_id: test_manifest.speaker_index(row) for row in test_manifest.rows
    }
    waves: dict[str, Waveform] = {
        row.utt_id: load_wav(row.wav_path, expected_rate=config.features.sample_rate)
        for row in test_manifest.rows
    }
    clean_features = None
    target = config.features.target_frames
    batch_size = config.eval.batch_size
    top_k = config.eval.top_k
    repeat = max(1, config.eval.repeat)

    rows = []
    for condition in conditions:
        correct = total = top_hits = ties = 0
        for r in range(repeat):
            if condition.noise is None:
                if clean_features is None:
                    clean_features = compute_features(test_manifest, config.features)
                features = clean_features
            else:
                noise_half = noise_bank.test_half(condition.noise)
                features = {}
                for utt_id in utt_ids:
                    offset_seed = derive_seed(
                        config.eval.seed, "eval-mix", condition.label, r, utt_id
                    )
                    noisy = mix_at_snr(
                        waves[utt_id], noise_half, condition.snr_db, offset_seed
                    )
                    features[utt_id] = compress(
                        stft_magnitude(noisy, config.features)
                    )
            pairs = []
            for start in range(0, len(utt_ids), batch_size):
                batch_ids = utt_ids[start : start + batch_size]
                stacked = _spectrogram_batch(features, batch_ids, target)
                if condition.enhancement:
                    logits = composed.forward(Tensor(stacked[:, None, :, :]))
                else:
                    logits = sid.forward(Tensor(stacked))
                for i, utt_id in enumerate(batch_ids):
                    row_logits = logits.data[i]
                    label, tied = predict_label(row_logits)
                    pairs.append((label, speakers[utt_id]))
                    ties += int(tied)
                    top_hits += int(
                        topk_correct(row_logits, speakers[utt_id], top_k, scheme)
                    )
            result = evaluate(pairs, scheme)
            correct += result.correct
            total += result.total
        rows.append(
            {
                "model": model_tag,
                "noise": condition.noise or "clean",
                "snr_db": condition.snr_db,
                "enhancement": condition.enhancement,
                "correct": correct,
                "total": total,
                "accuracy_pct": 100.0 * correct / total,
                "topk_pct": 100.0 * top_hits / total,
                "argmax_ties": ties,
            }
        )
    return MetricsReport(
        config_hash=config_hash,
        rows=rows,
        meta={
            "model": model_tag,
            "num_speakers": test_manifest.num_speakers,
            "num_subgroups": scheme.num_subgroups,
            "num_test_utterances": len(test_manifest),
            "top_k": top_k,
            "repeat": repeat,
            "eval_seed": config.eval.seed,
        },
    )


def merge_reports(reports) -> MetricsReport:
    """Combine per-model reports for side-by-side tables and plots."""
    reports = list(reports)
    if not reports:
        raise DataError("nothing to merge")
    if len(reports) == 1:
        return reports[0]
    merged_rows = []
    hashes = {}
    for report in reports:
        merged_rows.extend(report.rows)
        model = report.meta.get("model", "?")
        hashes[model] = report.config_hash
    return MetricsReport(
        config_hash="merged",
        rows=merged_rows,
        meta={"config_hashes": hashes},
    )


def _condition_key(row) -> tuple:
    return (row["noise"], row["snr_db"])


def _condition_heading(row) -> str:
    if row["noise"] == "clean":
        return "clean"
    return f"{row['noise']}@{row['snr_db']:g}dB"


def _series_name(row) -> str:
    return f"{row['model']}/{'enh' if row['enhancement'] else 'raw'}"


def render_table(report: MetricsReport) -> str:
    """Aligned text table: one row per condition, one accuracy column per
    model/enhancement series (top-k in parentheses)."""
    conditions: list[tuple] = []
    series: list[str] = []
    cells: dict[tuple, dict[str, str]] = {}
    for row in report.rows:
        key = _condition_key(row)
        name = _series_name(row)
        if key not in conditions:
            conditions.append(key)
        if name not in series:
            series.append(name)
        cells.setdefault(key, {})[name] = (
            f"{row['accuracy_pct']:.1f} ({row['topk_pct']:.1f})"
        )
    headings = ["condition"] + series
    table_rows = []
    for key in conditions:
        heading = _condition_heading({"noise": key[0], "snr_db": key[1]})
        table_rows.append([heading] + [cells[key].get(s, "-") for s in series])
    widths = [
        max(len(headings[i]), *(len(r[i]) for r in table_rows))
        for i in range(len(headings))
    ]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headings, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for r in table_rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    lines.append("")
    lines.append("accuracy % (top-k %) per condition")
    return "\n".join(lines) + "\n"


def emit_plot_data(report: MetricsReport) -> str:
    """Delimited long-format series data for external plotting tools.

    One line per (series, condition) point; accuracies keep full float
    precision so that parsing the file reproduces the report exactly.
    """
    if not report.rows:
        raise DataError("cannot emit plot data for an empty report")
    lines = ["series\tcondition\taccuracy_pct\ttopk_pct"]
    ordered = sorted(
        range(len(report.rows)),
        key=lambda i: (_series_name(report.rows[i]), i),
    )
    for i in ordered:
        row = report.rows[i]
        lines.append(
            "\t".join(
                (
                    _series_name(row),
                    _condition_heading(row),
                    repr(row["accuracy_pct"]),
                    repr(row["topk_pct"]),
                )
            )
        )
    return "\n".join(lines) + "\n"


def parse_plot_data(text: str) -> list[dict]:
    """Inverse of emit_plot_data (used for round-trip verification)."""
    lines = [line for line in text.splitlines() if line]
    header = lines[0].split("\t")
    out = []
    for line in lines[1:]:
        values = line.split("\t")
        entry = dict(zip(header, values))
        entry["accuracy_pct"] = float(entry["accuracy_pct"])
        entry["topk_pct"] = float(entry["topk_pct"])
        out.append(entry)
    return out
