"""Run configuration: one INI-style file with sections
[data], [features], [labels], [speaker_id], [enhancement], [optimizer],
[eval]. Every resolved config has a stable SHA-256 hash that is recorded
in checkpoints and metrics reports; a hash mismatch at evaluation time is
an error.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .dsp import FrameSpec
from .errors import ConfigError
from .labels import LabelScheme
from .nets import FC_DIMS_BASELINE, FC_DIMS_MULTI_LABEL, TOY_CONV_FILTERS

MULTI_LABEL = "multi-label"
BASELINE = "baseline"


@dataclass(frozen=True)
class DataConfig:
    manifest: str = "manifest.csv"
    workdir: str = "work"
    train_fraction: float = 0.75
    split_seed: int = 17
    noise_halving_seed: int = 29
    noise_dir: str = ""


@dataclass(frozen=True)
class LabelConfig:
    num_subgroups: int = 1
    labeling: str = MULTI_LABEL

    def __post_init__(self):
        if self.labeling not in (MULTI_LABEL, BASELINE):
            raise ConfigError(f"unknown labeling mode {self.labeling!r}")
        if self.num_subgroups < 1:
            raise ConfigError("num_subgroups must be >= 1")
        if self.labeling == BASELINE and self.num_subgroups != 1:
            raise ConfigError("baseline labeling implies a single subgroup")


@dataclass(frozen=True)
class SpeakerIdConfig:
    conv_filters: tuple[int, int, int, int] = TOY_CONV_FILTERS
    fc_dims: tuple[int, ...] = ()  # empty: resolved from the labeling mode


@dataclass(frozen=True)
class EnhancementConfig:
    channels: int = 8  # desk-scale default; the full-scale stack uses 48
    learning_rate: float = 1e-3
    batch_size: int = 8
    epochs: int = 2
    crop_frames: int = 0  # 0: train on full target_frames crops
    utts_per_speaker: int = 0  # 0: use every training utterance
    train_noise: str = "white"
    train_snr_db: float = 10.0
    seed: int = 23


@dataclass(frozen=True)
class OptimizerConfig:
    algorithm: str = "adam"
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 50
    seed: int = 7


@dataclass(frozen=True)
class Condition:
    """One evaluation cell: noise type (or clean), SNR, enhancement flag."""

    noise: str | None
    snr_db: float | None
    enhancement: bool

    @property
    def label(self) -> str:
        base = "clean" if self.noise is None else f"{self.noise}@{self.snr_db:g}dB"
        return f"{base}/{'enh' if self.enhancement else 'raw'}"

    def to_text(self) -> str:
        noise = self.noise or "clean"
        snr = "" if self.snr_db is None else f"{self.snr_db:g}"
        return f"{noise}:{snr}:{'on' if self.enhancement else 'off'}"


def parse_condition(text: str) -> Condition:
    parts = text.strip().split(":")
    if len(parts) != 3:
        raise ConfigError(
            f"condition {text!r} must be 'noise:snr:on|off' (use 'clean::off')"
        )
    noise, snr, enh = (p.strip() for p in parts)
    if enh not in ("on", "off"):
        raise ConfigError(f"condition {text!r}: enhancement must be 'on' or 'off'")
    if noise == "clean":
        if snr:
            raise ConfigError(f"condition {text!r}: clean conditions take no SNR")
        return Condition(None, None, enh == "on")
    if not snr:
        raise ConfigError(f"condition {text!r}: noisy conditions need an SNR")
    return Condition(noise, float(snr), enh == "on")


@dataclass(frozen=True)
class EvalConfig:
    conditions: tuple[Condition, ...] = (Condition(None, None, False),)
    top_k: int = 5
    repeat: int = 1
    batch_size: int = 32
    seed: int = 101


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    features: FrameSpec = field(default_factory=FrameSpec)
    labels: LabelConfig = field(default_factory=LabelConfig)
    speaker_id: SpeakerIdConfig = field(default_factory=SpeakerIdConfig)
    enhancement: EnhancementConfig = field(default_factory=EnhancementConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def scheme(self, num_speakers: int) -> LabelScheme:
        n = 1 if self.labels.labeling == BASELINE else self.labels.num_subgroups
        return LabelScheme(num_speakers=num_speakers, num_subgroups=n)

    def fc_dims(self) -> tuple[int, ...]:
        if self.speaker_id.fc_dims:
            return self.speaker_id.fc_dims
        if self.labels.labeling == BASELINE:
            return FC_DIMS_BASELINE
        return FC_DIMS_MULTI_LABEL

    def canonical_lines(self) -> list[str]:
        lines = []

        def emit(section, key, value):
            if isinstance(value, float):
                value = repr(value)
            elif isinstance(value, (tuple, list)):
                value = ",".join(str(v) for v in value)
            lines.append(f"{section}.{key}={value}")

        d = self.data
        for key in ("manifest", "workdir", "train_fraction", "split_seed",
                    "noise_halving_seed", "noise_dir"):
            emit("data", key, getattr(d, key))
        f = self.features
        for key in ("sample_rate", "window_ms", "hop_ms", "fft_size",
                    "compression_exponent", "target_frames", "window"):
            emit("features", key, getattr(f, key))
        for key in ("num_subgroups", "labeling"):
            emit("labels", key, getattr(self.labels, key))
        emit("speaker_id", "conv_filters", self.speaker_id.conv_filters)
        emit("speaker_id", "fc_dims", self.fc_dims())
        e = self.enhancement
        for key in ("channels", "learning_rate", "batch_size", "epochs",
                    "crop_frames", "utts_per_speaker", "train_noise",
                    "train_snr_db", "seed"):
            emit("enhancement", key, getattr(e, key))
        o = self.optimizer
        for key in ("algorithm", "learning_rate", "batch_size", "epochs", "seed"):
            emit("optimizer", key, getattr(o, key))
        ev = self.eval
        emit("eval", "conditions", ";".join(c.to_text() for c in ev.conditions))
        for key in ("top_k", "repeat", "batch_size", "seed"):
            emit("eval", key, getattr(ev, key))
        return lines

    def config_hash(self) -> str:
        digest = hashlib.sha256()
        for line in self.canonical_lines():
            digest.update(line.encode("utf-8"))
            digest.update(b"\n")
        return digest.hexdigest()


@dataclass(frozen=True)
class WorkPaths:
    """Standard file layout inside a run's working directory."""

    root: Path

    @property
    def train_manifest(self) -> Path:
        return self.root / "train_manifest.csv"

    @property
    def test_manifest(self) -> Path:
        return self.root / "test_manifest.csv"

    @property
    def label_map(self) -> Path:
        return self.root / "label_map.tsv"

    @property
    def id_checkpoint(self) -> Path:
        return self.root / "id_model.ckpt"

    @property
    def enh_checkpoint(self) -> Path:
        return self.root / "enh_model.ckpt"

    @property
    def id_log(self) -> Path:
        return self.root / "id_train_log.json"

    @property
    def enh_log(self) -> Path:
        return self.root / "enh_train_log.json"

    @property
    def metrics_json(self) -> Path:
        return self.root / "metrics.json"

    @property
    def metrics_table(self) -> Path:
        return self.root / "metrics.txt"

    @property
    def plot_data(self) -> Path:
        return self.root / "plot_data.tsv"


def work_paths(config: RunConfig) -> WorkPaths:
    return WorkPaths(Path(config.data.workdir))


_INT = ("int", int)
_FLOAT = ("float", float)
_STR = ("str", str)
_INT_TUPLE = ("int list", lambda s: tuple(int(v) for v in s.split(",") if v.strip()))

_SECTION_FIELDS = {
    "data": {
        "manifest": _STR,
        "workdir": _STR,
        "train_fraction": _FLOAT,
        "split_seed": _INT,
        "noise_halving_seed": _INT,
        "noise_dir": _STR,
    },
    "features": {
        "sample_rate": _INT,
        "window_ms": _FLOAT,
        "hop_ms": _FLOAT,
        "fft_size": _INT,
        "compression_exponent": _FLOAT,
        "target_frames": _INT,
        "window": _STR,
    },
    "labels": {"num_subgroups": _INT, "labeling": _STR},
    "speaker_id": {"conv_filters": _INT_TUPLE, "fc_dims": _INT_TUPLE},
    "enhancement": {
        "channels": _INT,
        "learning_rate": _FLOAT,
        "batch_size": _INT,
        "epochs": _INT,
        "crop_frames": _INT,
        "utts_per_speaker": _INT,
        "train_noise": _STR,
        "train_snr_db": _FLOAT,
        "seed": _INT,
    },
    "optimizer": {
        "algorithm": _STR,
        "learning_rate": _FLOAT,
        "batch_size": _INT,
        "epochs": _INT,
        "seed": _INT,
    },
    "eval": {
        "conditions": ("condition list",
                       lambda s: tuple(parse_condition(c)
                                       for c in s.split(";") if c.strip())),
        "top_k": _INT,
        "repeat": _INT,
        "batch_size": _INT,
        "seed": _INT,
    },
}

_SECTION_TYPES = {
    "data": DataConfig,
    "features": FrameSpec,
    "labels": LabelConfig,
    "speaker_id": SpeakerIdConfig,
    "enhancement": EnhancementConfig,
    "optimizer": OptimizerConfig,
    "eval": EvalConfig,
}


def load_config(path) -> RunConfig:
    """Parse a config file; missing keys take their documented defaults."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}")

    sections = {}
    for section in parser.sections():
        if section not in _SECTION_FIELDS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        fields = _SECTION_FIELDS[section]
        kwargs = {}
        for key, raw in parser.items(section):
            if key not in fields:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            kind, convert = fields[key]
            try:
                kwargs[key] = convert(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(
                    f"{path}: [{section}] {key} must be {kind}: {exc}"
                )
        try:
            sections[section] = _SECTION_TYPES[section](**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: invalid [{section}] section: {exc}")
    try:
        return RunConfig(
            data=sections.get("data", DataConfig()),
            features=sections.get("features", FrameSpec()),
            labels=sections.get("labels", LabelConfig()),
            speaker_id=sections.get("speaker_id", SpeakerIdConfig()),
            enhancement=sections.get("enhancement", EnhancementConfig()),
            optimizer=sections.get("optimizer", OptimizerConfig()),
            eval=sections.get("eval", EvalConfig()),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}")


def write_config(path, config: RunConfig) -> None:
    """Serialize a config back to INI (used by `synth-data --emit-config`)."""
    parser = configparser.ConfigParser(interpolation=None)
    for line in config.canonical_lines():
        dotted, value = line.split("=", 1)
        section, key = dotted.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)
    with open(path, "w") as fh:
        parser.write(fh)
