"""Exception hierarchy shared across the package.

The CLI maps these onto distinct process exit codes; see ``cli.EXIT_CODES``.
"""


class MltsidError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(MltsidError):
    """Malformed or inconsistent run configuration."""


class DataError(MltsidError):
    """Invalid dataset, manifest, or audio input."""


class ManifestError(DataError):
    """Manifest violates its invariants (duplicates, counts, paths)."""


class AudioFormatError(DataError):
    """File is not an uncompressed 16-bit PCM WAV payload."""


class SampleRateMismatchError(DataError):
    """Audio sample rate differs from the configured pipeline rate."""


class ChannelCountError(DataError):
    """Audio is not single-channel."""


class ShortSignalError(DataError):
    """Waveform too short for one analysis window."""


class SilentSignalError(DataError):
    """Signal power is zero where a signal-to-noise ratio is required."""


class CheckpointError(MltsidError):
    """Checkpoint file is malformed or does not match the network."""


class CheckpointHashError(CheckpointError):
    """Checkpoint was produced under a different configuration."""


class DivergenceError(MltsidError):
    """Training produced a non-finite loss or gradient."""
