"""Dataset handling: manifests, per-speaker splits, synthetic voices,
and the noise bank.

A manifest is a CSV with header ``utt_id,wav_path,speaker``. Speaker
strings are densified to contiguous indices in sorted order; the string
ids are kept for reporting. The synthetic corpus is a desk-scale stand-in
for a real recording collection: each speaker is a seeded generative
voice (fundamental frequency, harmonic decay, and formant-like spectral
envelope) with per-utterance jitter in pitch, amplitude, and noise.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import Waveform, load_wav, save_wav
from .errors import ManifestError
from .seeding import derive_seed, derived_rng

MANIFEST_HEADER = ("utt_id", "wav_path", "speaker")

# Voice generator spacing: adjacent fundamentals differ by 4 %, which
# keeps speakers apart even under the +-1 % per-utterance pitch jitter.
_F0_BASE_HZ = 85.0
_F0_STEP = 1.04
_MAX_HARMONICS = 40


@dataclass(frozen=True)
class ManifestRow:
    utt_id: str
    wav_path: str
    speaker_string: str


class DatasetManifest:
    """Validated utterance collection with densified speaker indices."""

    def __init__(self, rows, check_paths: bool = True, min_utterances: int = 2):
        self.rows: list[ManifestRow] = list(rows)
        if not self.rows:
            raise ManifestError("empty manifest")
        seen = set()
        for row in self.rows:
            if row.utt_id in seen:
                raise ManifestError(f"duplicate utt_id {row.utt_id!r}")
            seen.add(row.utt_id)
        speakers = sorted({row.speaker_string for row in self.rows})
        self.speaker_to_index: dict[str, int] = {s: i for i, s in enumerate(speakers)}
        self.index_to_speaker: list[str] = speakers
        counts = [0] * len(speakers)
        for row in self.rows:
            counts[self.speaker_to_index[row.speaker_string]] += 1
        for speaker, count in zip(speakers, counts):
            if count < min_utterances:
                raise ManifestError(
                    f"speaker {speaker!r} has only {count} utterance(s); "
                    f"need at least {min_utterances}"
                )
        self.per_speaker_counts: list[int] = counts
        if check_paths:
            for row in self.rows:
                if not Path(row.wav_path).is_file():
                    raise ManifestError(f"missing file for {row.utt_id!r}: {row.wav_path}")

    @property
    def num_speakers(self) -> int:
        return len(self.index_to_speaker)

    def __len__(self) -> int:
        return len(self.rows)

    def speaker_index(self, row: ManifestRow) -> int:
        return self.speaker_to_index[row.speaker_string]

    def labeling_pairs(self) -> list[tuple[str, int]]:
        """(utt_id, speaker_index) pairs for subgroup assignment."""
        return [(row.utt_id, self.speaker_index(row)) for row in self.rows]

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(MANIFEST_HEADER)
            for row in self.rows:
                writer.writerow((row.utt_id, row.wav_path, row.speaker_string))


def load_manifest(path, check_paths: bool = True,
                  min_utterances: int = 2) -> DatasetManifest:
    """Read and validate a manifest CSV."""
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}")
    with fh:
        reader = csv.reader(fh)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise ManifestError(f"empty manifest: {path}")
        if header != MANIFEST_HEADER:
            raise ManifestError(
                f"{path}: expected header {','.join(MANIFEST_HEADER)}, "
                f"got {','.join(header)}"
            )
        rows = []
        for line in reader:
            if not line:
                continue
            if len(line) != 3:
                raise ManifestError(f"{path}: malformed row {line!r}")
            rows.append(ManifestRow(*line))
    if not rows:
        raise ManifestError(f"empty manifest: {path}")
    return DatasetManifest(rows, check_paths=check_paths)


@dataclass(frozen=True)
class SplitSpec:
    """Per-speaker 3:1 split parameters (both sides keep all speakers)."""

    train_fraction: float = 0.75
    seed: int = 17
    noise_halving_seed: int = 29

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")


def split_dataset(
    manifest: DatasetManifest, spec: SplitSpec
) -> tuple[DatasetManifest, DatasetManifest]:
    """Seeded per-speaker partition into train and test manifests.

    Each speaker contributes ceil(train_fraction * count) utterances to
    the training side, so both sides contain every speaker. Speakers too
    small to leave a test utterance are an error.
    """
    by_speaker: dict[str, list[ManifestRow]] = {}
    for row in manifest.rows:
        by_speaker.setdefault(row.speaker_string, []).append(row)
    train_rows: list[ManifestRow] = []
    test_rows: list[ManifestRow] = []
    for speaker in sorted(by_speaker):
        rows = sorted(by_speaker[speaker], key=lambda r: r.utt_id)
        n_train = math.ceil(spec.train_fraction * len(rows))
        if n_train >= len(rows):
            raise ManifestError(
                f"speaker {speaker!r} has {len(rows)} utterances; too few for "
                f"a {spec.train_fraction:g} train fraction"
            )
        order = derived_rng(spec.seed, "split", speaker).permutation(len(rows))
        shuffled = [rows[i] for i in order]
        train_rows.extend(shuffled[:n_train])
        test_rows.extend(shuffled[n_train:])
    train_rows.sort(key=lambda r: r.utt_id)
    test_rows.sort(key=lambda r: r.utt_id)
    return (
        DatasetManifest(train_rows, check_paths=False, min_utterances=1),
        DatasetManifest(test_rows, check_paths=False, min_utterances=1),
    )


def _speaker_voice(seed: int, speaker: int) -> dict:
    """Seeded per-speaker generative voice parameters."""
    rng = derived_rng(seed, "voice", speaker)
    formants = []
    for low, high in ((300.0, 900.0), (900.0, 2200.0), (2200.0, 4000.0)):
        formants.append(
            {
                "center_hz": float(rng.uniform(low, high)),
                "bandwidth_hz": float(rng.uniform(80.0, 220.0)),
                "gain": float(rng.uniform(0.6, 1.0)),
            }
        )
    return {
        "f0_hz": _F0_BASE_HZ * _F0_STEP**speaker,
        "harmonic_decay": float(rng.uniform(0.80, 0.95)),
        "formants": formants,
    }


def _envelope_gain(freq_hz: float, voice: dict) -> float:
    gain = 0.08  # spectral floor keeps every harmonic audible
    for formant in voice["formants"]:
        delta = (freq_hz - formant["center_hz"]) / formant["bandwidth_hz"]
        gain += formant["gain"] * math.exp(-0.5 * delta * delta)
    return gain


def synth_utterance(voice: dict, seed: int, duration_s: float,
                    sample_rate: int) -> Waveform:
    """One jittered harmonic utterance of a synthetic speaker."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = voice["f0_hz"] * (1.0 + rng.uniform(-0.01, 0.01))
    decay = voice["harmonic_decay"]
    nyquist_cap = 0.45 * sample_rate
    n_harmonics = min(_MAX_HARMONICS, int(nyquist_cap / f0))
    signal = np.zeros(n)
    for h in range(1, n_harmonics + 1):
        freq = h * f0
        amp = decay**h * _envelope_gain(freq, voice)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        signal += amp * np.sin(2.0 * math.pi * freq * t + phase)
    # slow amplitude modulation so utterances are not stationary
    am_rate = rng.uniform(2.0, 6.0)
    am_phase = rng.uniform(0.0, 2.0 * math.pi)
    signal *= 1.0 + 0.15 * np.sin(2.0 * math.pi * am_rate * t + am_phase)
    peak = np.abs(signal).max()
    scale = rng.uniform(0.5, 1.0)
    signal *= 0.6 * scale / peak
    noise_level = rng.uniform(0.001, 0.004)
    signal += noise_level * rng.standard_normal(n)
    return Waveform(signal, sample_rate)


def synth_dataset(
    out_dir,
    num_speakers: int = 20,
    utts_per_speaker: int = 40,
    duration_s: float = 3.0,
    seed: int = 0,
    sample_rate: int = 16000,
) -> DatasetManifest:
    """Generate a synthetic corpus: WAV files, manifest.csv, voices.json.

    Distinct speakers get distinct fundamental frequencies spaced by 4 %,
    all voice parameters are written to voices.json for audit.
    """
    if num_speakers < 2 or utts_per_speaker < 2:
        raise ValueError("need at least 2 speakers and 2 utterances each")
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    voices = {}
    rows = []
    for s in range(num_speakers):
        speaker_string = f"spk{s:03d}"
        voice = _speaker_voice(seed, s)
        voices[speaker_string] = voice
        for u in range(utts_per_speaker):
            utt_id = f"{speaker_string}_utt{u:03d}"
            wav_path = wav_dir / f"{utt_id}.wav"
            waveform = synth_utterance(
                voice, derive_seed(seed, "utt", s, u), duration_s, sample_rate
            )
            save_wav(wav_path, waveform)
            rows.append(ManifestRow(utt_id, str(wav_path), speaker_string))
    manifest = DatasetManifest(rows, check_paths=False)
    manifest.write(out_dir / "manifest.csv")
    with open(out_dir / "voices.json", "w") as fh:
        json.dump(voices, fh, indent=2, sort_keys=True)
    return manifest


def load_voices(out_dir) -> dict:
    with open(Path(out_dir) / "voices.json") as fh:
        return json.load(fh)


class NoiseBank:
    """Named noise waveforms, each halved into disjoint mix segments.

    The first half of each file feeds training mixtures and the second
    half feeds test mixtures (or swapped, per the halving seed), so the
    same noise samples are never used on both sides.
    """

    def __init__(self, waves: dict[str, Waveform], halving_seed: int = 29):
        if not waves:
            raise ManifestError("noise bank is empty")
        self.waves = dict(sorted(waves.items()))
        self.halving_seed = halving_seed
        swap = bool(derived_rng(halving_seed, "halving").integers(0, 2))
        self._train_first = not swap

    def names(self) -> list[str]:
        return list(self.waves)

    def _wave(self, name: str) -> Waveform:
        try:
            return self.waves[name]
        except KeyError:
            raise ManifestError(
                f"unknown noise type {name!r}; bank has {self.names()}"
            )

    def half_ranges(self, name: str) -> tuple[tuple[int, int], tuple[int, int]]:
        """(train_range, test_range) as half-open sample intervals."""
        n = len(self._wave(name))
        first, second = (0, n // 2), (n // 2, n)
        return (first, second) if self._train_first else (second, first)

    def train_half(self, name: str) -> Waveform:
        wave = self._wave(name)
        lo, hi = self.half_ranges(name)[0]
        return Waveform(wave.samples[lo:hi], wave.sample_rate)

    def test_half(self, name: str) -> Waveform:
        wave = self._wave(name)
        lo, hi = self.half_ranges(name)[1]
        return Waveform(wave.samples[lo:hi], wave.sample_rate)

    @classmethod
    def from_dir(cls, noise_dir, sample_rate: int = 16000,
                 halving_seed: int = 29) -> "NoiseBank":
        noise_dir = Path(noise_dir)
        waves = {}
        for path in sorted(noise_dir.glob("*.wav")):
            waves[path.stem] = load_wav(path, expected_rate=sample_rate)
        if not waves:
            raise ManifestError(f"no .wav files in noise directory {noise_dir}")
        return cls(waves, halving_seed=halving_seed)


def synth_noise_bank(
    out_dir,
    duration_s: float = 60.0,
    seed: int = 0,
    sample_rate: int = 16000,
) -> list[str]:
    """Write synthetic noise WAVs (white, pink, hum) for desk-scale runs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = int(round(duration_s * sample_rate))
    written = []

    rng = derived_rng(seed, "noise", "white")
    white = 0.25 * rng.standard_normal(n)
    save_wav(out_dir / "white.wav", Waveform(white, sample_rate))
    written.append("white")

    # pink noise via 1/sqrt(f) spectral shaping
    rng = derived_rng(seed, "noise", "pink")
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    shaping = np.ones_like(freqs)
    shaping[1:] = 1.0 / np.sqrt(freqs[1:])
    pink = np.fft.irfft(spectrum * shaping, n=n)
    pink *= 0.25 / np.std(pink)
    save_wav(out_dir / "pink.wav", Waveform(pink, sample_rate))
    written.append("pink")

    rng = derived_rng(seed, "noise", "hum")
    t = np.arange(n) / sample_rate
    hum = np.zeros(n)
    for harmonic, amp in ((1, 1.0), (2, 0.5), (3, 0.25)):
        hum += amp * np.sin(2.0 * math.pi * 50.0 * harmonic * t)
    hum = 0.2 * hum / np.abs(hum).max() + 0.02 * rng.standard_normal(n)
    save_wav(out_dir / "hum.wav", Waveform(hum, sample_rate))
    written.append("hum")
    return written
