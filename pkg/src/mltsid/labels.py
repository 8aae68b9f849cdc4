"""Subgroup label expansion and alias-based evaluation.

The strategy: partition each speaker's utterances into ``num_subgroups``
round-robin subgroups, and give subgroup ``m`` of speaker ``s`` the
training label ``s + num_speakers * m``. Every subgroup contains every
speaker, so the expanded label space of size N*C is the disjoint union
of N complete label sets ("alias sets"). At test time a prediction is
correct when it hits any alias of the true speaker, i.e. when
``predicted_label mod num_speakers == true_speaker``: the argmax over
the expanded space acts as a maximum vote among N implicit classifiers.

Everything here is a pure function over immutable inputs and independent
of any network.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError

LABEL_MAP_HEADER = ("utt_id", "speaker_string", "speaker_index", "subgroup", "train_label")


@dataclass(frozen=True)
class LabelScheme:
    """C speakers split into N subgroups; expanded label space N*C."""

    num_speakers: int
    num_subgroups: int = 1

    def __post_init__(self):
        if self.num_speakers < 2:
            raise ValueError("a label scheme needs at least 2 speakers")
        if self.num_subgroups < 1:
            raise ValueError("subgroup count must be >= 1")

    @property
    def num_labels(self) -> int:
        return self.num_speakers * self.num_subgroups

    def aliases(self, speaker: int) -> list[int]:
        """All expanded labels denoting this speaker."""
        return [expand_label(speaker, m, self) for m in range(self.num_subgroups)]


@dataclass(frozen=True)
class LabeledUtterance:
    utt_id: str
    speaker: int
    subgroup: int
    train_label: int


@dataclass(frozen=True)
class EvalResult:
    correct: int
    total: int
    accuracy: float
    per_speaker: dict[int, tuple[int, int]]


def expand_label(speaker: int, subgroup: int, scheme: LabelScheme) -> int:
    """Training label of (speaker, subgroup): speaker + C * subgroup."""
    if not 0 <= speaker < scheme.num_speakers:
        raise ValueError(f"speaker {speaker} out of range [0, {scheme.num_speakers})")
    if not 0 <= subgroup < scheme.num_subgroups:
        raise ValueError(f"subgroup {subgroup} out of range [0, {scheme.num_subgroups})")
    return speaker + scheme.num_speakers * subgroup


def base_speaker(label: int, scheme: LabelScheme) -> int:
    """Invert expand_label: the speaker a training label denotes."""
    if not 0 <= label < scheme.num_labels:
        raise ValueError(f"label {label} out of range [0, {scheme.num_labels})")
    return label % scheme.num_speakers


def is_correct(predicted_label: int, true_speaker: int, scheme: LabelScheme) -> bool:
    """Whether a predicted expanded label aliases the true speaker."""
    if not 0 <= predicted_label < scheme.num_labels:
        raise ValueError(
            f"label {predicted_label} out of range [0, {scheme.num_labels})"
        )
    return predicted_label % scheme.num_speakers == true_speaker


def assign_subgroups(utterances, scheme: LabelScheme) -> list[LabeledUtterance]:
    """Round-robin subgroup assignment within each speaker.

    ``utterances`` is an iterable of (utt_id, speaker_index). Within each
    speaker, utterances in sorted utt_id order get subgroup = index mod N,
    so per-speaker subgroup sizes differ by at most one and every speaker
    appears in every subgroup. Output order follows the input order.
    """
    items = list(utterances)
    by_speaker: dict[int, list[str]] = {}
    for utt_id, speaker in items:
        if not 0 <= speaker < scheme.num_speakers:
            raise ValueError(
                f"speaker index {speaker} out of range [0, {scheme.num_speakers})"
            )
        by_speaker.setdefault(speaker, []).append(utt_id)
    subgroup_of: dict[str, int] = {}
    for speaker, ids in by_speaker.items():
        if len(ids) < scheme.num_subgroups:
            raise DataError(
                f"speaker {speaker} has {len(ids)} utterances; subgroup count "
                f"{scheme.num_subgroups} requires at least that many"
            )
        for index, utt_id in enumerate(sorted(ids)):
            subgroup_of[utt_id] = index % scheme.num_subgroups
    labeled = []
    for utt_id, speaker in items:
        subgroup = subgroup_of[utt_id]
        labeled.append(
            LabeledUtterance(
                utt_id=utt_id,
                speaker=speaker,
                subgroup=subgroup,
                train_label=expand_label(speaker, subgroup, scheme),
            )
        )
    return labeled


def evaluate(predictions, scheme: LabelScheme) -> EvalResult:
    """Count alias hits over (predicted_label, true_speaker) pairs."""
    correct = 0
    total = 0
    per_speaker: dict[int, list[int]] = {}
    for predicted_label, true_speaker in predictions:
        hit = is_correct(predicted_label, true_speaker, scheme)
        entry = per_speaker.setdefault(true_speaker, [0, 0])
        if hit:
            correct += 1
            entry[0] += 1
        total += 1
        entry[1] += 1
    if total == 0:
        raise ValueError("cannot evaluate an empty prediction list")
    return EvalResult(
        correct=correct,
        total=total,
        accuracy=correct / total,
        per_speaker={s: (c, t) for s, (c, t) in sorted(per_speaker.items())},
    )


def predict_label(logits) -> tuple[int, bool]:
    """Argmax label and whether the maximum was tied.

    Ties break toward the lowest label index (numpy argmax order).
    """
    values = np.asarray(logits)
    label = int(np.argmax(values))
    tied = bool(np.count_nonzero(values == values[label]) > 1)
    return label, tied


def topk_correct(
    logits,
    true_speaker: int,
    k: int,
    scheme: LabelScheme,
    collapse: bool = False,
) -> bool:
    """Whether any of the k highest-logit labels aliases the true speaker.

    Ties break toward lower label indices. With ``collapse=True`` the
    check instead ranks speakers by the maximum over each speaker's
    aliases before taking top-k; this collapsed scoring is an optional
    extension, not part of the core strategy.
    """
    values = np.asarray(logits, dtype=np.float64)
    if values.shape != (scheme.num_labels,):
        raise ValueError(
            f"logits shape {values.shape} does not match the expanded label "
            f"space ({scheme.num_labels},)"
        )
    if k < 1:
        raise ValueError("k must be >= 1")
    if collapse:
        if k > scheme.num_speakers:
            raise ValueError("k exceeds the number of speakers")
        speaker_scores = values.reshape(scheme.num_subgroups, scheme.num_speakers).max(
            axis=0
        )
        top = np.argsort(-speaker_scores, kind="stable")[:k]
        return true_speaker in top
    if k > scheme.num_labels:
        raise ValueError("k exceeds the expanded label space size")
    top = np.argsort(-values, kind="stable")[:k]
    return any(is_correct(int(label), true_speaker, scheme) for label in top)


def write_label_map(path, manifest_rows, labeled) -> None:
    """Audit export: one row per utterance with its expanded label.

    ``manifest_rows`` maps utt_id -> speaker_string; ``labeled`` is the
    assign_subgroups output.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t")
        writer.writerow(LABEL_MAP_HEADER)
        for item in labeled:
            writer.writerow(
                (
                    item.utt_id,
                    manifest_rows[item.utt_id],
                    item.speaker,
                    item.subgroup,
                    item.train_label,
                )
            )


def read_label_map(path) -> list[LabeledUtterance]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = tuple(next(reader))
        if header != LABEL_MAP_HEADER:
            raise DataError(f"{path}: unexpected label map header {header}")
        return [
            LabeledUtterance(
                utt_id=row[0],
                speaker=int(row[2]),
                subgroup=int(row[3]),
                train_label=int(row[4]),
            )
            for row in reader
        ]
