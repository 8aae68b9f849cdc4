"""Training schedules: the identification net on clean speech, then the
enhancement net through the frozen identifier on noisy speech.

Runs are deterministic for a fixed config: every shuffle, crop, mixing
offset, and weight draw is derived from the config's seeds. A non-finite
loss or gradient aborts with DivergenceError.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor, backward, softmax_cross_entropy
from .checkpoint import load_into, save_checkpoint, serialize_params
from .config import BASELINE, RunConfig, work_paths
from .data import DatasetManifest, NoiseBank, SplitSpec, load_manifest, split_dataset
from .dsp import (
    TRAIN_RANDOM_CROP,
    FrameSpec,
    Spectrogram,
    compress,
    fix_length,
    load_wav,
    mix_at_snr,
    stft_magnitude,
)
from .errors import CheckpointError, ConfigError
from .labels import assign_subgroups, write_label_map
from .nets import (
    ComposedNet,
    EnhancementNet,
    EnhancementNetConfig,
    SpeakerIdNet,
    SpeakerIdNetConfig,
    freeze,
)
from .optim import make_optimizer
from .seeding import derive_seed


@dataclass(frozen=True)
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    config_hash: str
    step_losses: list[float]
    epoch_losses: list[float]


def prepare_run(config: RunConfig) -> tuple[DatasetManifest, DatasetManifest]:
    """Split the manifest per speaker and export the label map."""
    paths = work_paths(config)
    paths.root.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(config.data.manifest)
    spec = SplitSpec(
        train_fraction=config.data.train_fraction,
        seed=config.data.split_seed,
        noise_halving_seed=config.data.noise_halving_seed,
    )
    train, test = split_dataset(manifest, spec)
    train.write(paths.train_manifest)
    test.write(paths.test_manifest)
    scheme = config.scheme(manifest.num_speakers)
    labeled = assign_subgroups(train.labeling_pairs(), scheme)
    speaker_strings = {row.utt_id: row.speaker_string for row in train.rows}
    write_label_map(paths.label_map, speaker_strings, labeled)
    return train, test


def compute_features(manifest: DatasetManifest, spec: FrameSpec) -> dict[str, Spectrogram]:
    """Compressed magnitude spectrograms for every manifest row."""
    features = {}
    for row in manifest.rows:
        wave = load_wav(row.wav_path, expected_rate=spec.sample_rate)
        features[row.utt_id] = compress(stft_magnitude(wave, spec))
    return features


def compute_noisy_features(
    manifest: DatasetManifest,
    spec: FrameSpec,
    noise,
    snr_db: float,
    mix_seed: int,
) -> dict[str, Spectrogram]:
    """Like compute_features, but each utterance is first mixed with a
    seeded noise segment at the requested SNR (one fixed mixture per
    utterance)."""
    features = {}
    for row in manifest.rows:
        wave = load_wav(row.wav_path, expected_rate=spec.sample_rate)
        noisy = mix_at_snr(wave, noise, snr_db, derive_seed(mix_seed, "mix", row.utt_id))
        features[row.utt_id] = compress(stft_magnitude(noisy, spec))
    return features


def _stack_batch(features, utt_ids, target_frames, seed, epoch, dtype):
    arrays = []
    for utt_id in utt_ids:
        cropped = fix_length(
            features[utt_id],
            target_frames,
            TRAIN_RANDOM_CROP,
            seed=derive_seed(seed, "crop", epoch, utt_id),
        )
        arrays.append(cropped.values.astype(dtype, copy=False))
    return np.stack(arrays)


def _train_labels(config: RunConfig, manifest: DatasetManifest, scheme):
    """utt_id -> training label, per the configured labeling mode."""
    if config.labels.labeling == BASELINE:
        return {row.utt_id: manifest.speaker_index(row) for row in manifest.rows}
    labeled = assign_subgroups(manifest.labeling_pairs(), scheme)
    return {item.utt_id: item.train_label for item in labeled}


def build_sid_net(config: RunConfig, num_speakers: int, dtype=np.float32) -> SpeakerIdNet:
    scheme = config.scheme(num_speakers)
    net_config = SpeakerIdNetConfig(
        output_dim=scheme.num_labels,
        conv_filters=tuple(config.speaker_id.conv_filters),
        fc_dims=config.fc_dims(),
    )
    return SpeakerIdNet(
        net_config,
        n_bins=config.features.n_bins,
        seed=derive_seed(config.optimizer.seed, "sid-init"),
        dtype=dtype,
    )


def build_enh_net(config: RunConfig, dtype=np.float32) -> EnhancementNet:
    return EnhancementNet(
        EnhancementNetConfig.standard(config.enhancement.channels),
        seed=derive_seed(config.enhancement.seed, "enh-init"),
        dtype=dtype,
    )


def _write_log(path, config_hash, step_losses, epoch_losses):
    with open(path, "w") as fh:
        json.dump(
            {
                "config_hash": config_hash,
                "epoch_losses": epoch_losses,
                "step_losses": step_losses,
            },
            fh,
            sort_keys=True,
            indent=1,
        )


def train_id(
    config: RunConfig,
    train_manifest: DatasetManifest,
    features: dict[str, Spectrogram] | None = None,
) -> TrainResult:
    """Train the identification net on clean compressed spectrograms."""
    paths = work_paths(config)
    paths.root.mkdir(parents=True, exist_ok=True)
    scheme = config.scheme(train_manifest.num_speakers)
    label_of = _train_labels(config, train_manifest, scheme)
    if features is None:
        features = compute_features(train_manifest, config.features)
    net = build_sid_net(config, train_manifest.num_speakers)
    optimizer = make_optimizer(
        config.optimizer.algorithm, net.parameters(), config.optimizer.learning_rate
    )
    utt_ids = [row.utt_id for row in train_manifest.rows]
    seed = config.optimizer.seed
    batch_size = config.optimizer.batch_size
    step_losses: list[float] = []
    epoch_losses: list[float] = []
    for epoch in range(config.optimizer.epochs):
        order = np.random.default_rng(derive_seed(seed, "shuffle", epoch)).permutation(
            len(utt_ids)
        )
        epoch_steps = []
        for start in range(0, len(order), batch_size):
            batch_ids = [utt_ids[i] for i in order[start : start + batch_size]]
            inputs = _stack_batch(
                features, batch_ids, config.features.target_frames, seed, epoch,
                net.dtype,
            )
            labels = np.array([label_of[u] for u in batch_ids], dtype=np.int64)
            logits = net.forward(Tensor(inputs))
            loss = softmax_cross_entropy(logits, labels)
            backward(loss, params=net.parameters())
            optimizer.step()
            step_losses.append(loss.item())
            epoch_steps.append(loss.item())
        epoch_losses.append(float(np.mean(epoch_steps)))
    config_hash = config.config_hash()
    save_checkpoint(paths.id_checkpoint, net.parameters(), config_hash)
    _write_log(paths.id_log, config_hash, step_losses, epoch_losses)
    return TrainResult(
        checkpoint_path=paths.id_checkpoint,
        log_path=paths.id_log,
        config_hash=config_hash,
        step_losses=step_losses,
        epoch_losses=epoch_losses,
    )


def _enh_training_subset(manifest: DatasetManifest, per_speaker: int) -> list[str]:
    if per_speaker <= 0:
        return [row.utt_id for row in manifest.rows]
    by_speaker: dict[str, list[str]] = {}
    for row in manifest.rows:
        by_speaker.setdefault(row.speaker_string, []).append(row.utt_id)
    subset = []
    for speaker in sorted(by_speaker):
        subset.extend(sorted(by_speaker[speaker])[:per_speaker])
    return subset


def train_enh(
    config: RunConfig,
    train_manifest: DatasetManifest,
    noise_bank: NoiseBank | None,
) -> TrainResult:
    """Train the enhancement net through the frozen identification net.

    The identifier is loaded from the run's checkpoint and left untouched;
    its serialized bytes are verified unchanged after training.
    """
    paths = work_paths(config)
    enh_cfg = config.enhancement
    config_hash = config.config_hash()

    if not Path(paths.id_checkpoint).is_file():
        raise CheckpointError(
            f"identification checkpoint not found at {paths.id_checkpoint}; "
            "run identification training first"
        )
    sid = build_sid_net(config, train_manifest.num_speakers)
    id_reference = Path(paths.id_checkpoint).read_bytes()
    load_into(paths.id_checkpoint, sid.parameters(), expected_hash=config_hash)
    freeze(sid.parameters())

    enh = build_enh_net(config)
    composed = ComposedNet(enh, sid)
    optimizer = make_optimizer("adam", enh.parameters(), enh_cfg.learning_rate)

    if np.isinf(enh_cfg.train_snr_db):
        noise_half = None
    else:
        if noise_bank is None:
            raise ConfigError(
                "enhancement training at finite SNR needs a noise bank "
                "(set [data] noise_dir)"
            )
        noise_half = noise_bank.train_half(enh_cfg.train_noise)

    subset = _enh_training_subset(train_manifest, enh_cfg.utts_per_speaker)
    subset_rows = [row for row in train_manifest.rows if row.utt_id in set(subset)]
    subset_manifest = DatasetManifest(subset_rows, check_paths=False, min_utterances=1)
    scheme = config.scheme(train_manifest.num_speakers)
    label_of = _train_labels(config, train_manifest, scheme)
    if noise_half is None:
        features = compute_features(subset_manifest, config.features)
    else:
        features = compute_noisy_features(
            subset_manifest, config.features, noise_half, enh_cfg.train_snr_db,
            mix_seed=enh_cfg.seed,
        )

    crop = enh_cfg.crop_frames or config.features.target_frames
    seed = enh_cfg.seed
    step_losses: list[float] = []
    epoch_losses: list[float] = []
    for epoch in range(enh_cfg.epochs):
        order = np.random.default_rng(derive_seed(seed, "shuffle", epoch)).permutation(
            len(subset)
        )
        epoch_steps = []
        for start in range(0, len(order), enh_cfg.batch_size):
            batch_ids = [subset[i] for i in order[start : start + enh_cfg.batch_size]]
            stacked = _stack_batch(features, batch_ids, crop, seed, epoch, enh.dtype)
            inputs = stacked[:, None, :, :]  # singleton channel axis
            labels = np.array([label_of[u] for u in batch_ids], dtype=np.int64)
            logits = composed.forward(Tensor(inputs))
            loss = softmax_cross_entropy(logits, labels)
            backward(loss, params=enh.parameters())
            optimizer.step()
            step_losses.append(loss.item())
            epoch_steps.append(loss.item())
        epoch_losses.append(float(np.mean(epoch_steps)))

    id_after = serialize_params(sid.parameters(), config_hash)
    if id_after != id_reference:
        raise CheckpointError(
            "frozen identification parameters changed during enhancement training"
        )
    save_checkpoint(paths.enh_checkpoint, enh.parameters(), config_hash)
    _write_log(paths.enh_log, config_hash, step_losses, epoch_losses)
    return TrainResult(
        checkpoint_path=paths.enh_checkpoint,
        log_path=paths.enh_log,
        config_hash=config_hash,
        step_losses=step_losses,
        epoch_losses=epoch_losses,
    )
