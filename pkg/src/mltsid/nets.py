"""The two networks: a dilated-convolution ratio-mask enhancement net and
a 1-D convolutional speaker identification net.

The enhancement net is an 11-layer stack of same-padded 2-D convolutions
over (frequency, time); the final 1-channel sigmoid layer produces a
ratio mask in (0,1) that multiplies the input spectrum pointwise. The
identification net treats the frequency bins as input channels of four
1-D convolutions over time, followed by global average pooling and a
fully connected stack; the speaker embedding is the last hidden FC
activation.

A network instance is confined to one execution context while training;
read-only inference on frozen parameters may be shared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Parameter,
    Tensor,
    conv1d,
    conv2d_dilated,
    dense,
    global_avg_pool,
    mul,
    relu,
    reshape,
    sigmoid,
)
from .seeding import derived_rng

ENH_LAYER_COUNT = 11
ENH_KERNELS = (
    (1, 7),
    (7, 1),
    (5, 5),
    (5, 5),
    (5, 5),
    (5, 5),
    (5, 5),
    (5, 5),
    (5, 5),
    (5, 5),
    (1, 1),
)
ENH_DILATIONS = (
    (1, 1),
    (1, 1),
    (1, 1),
    (2, 1),
    (4, 1),
    (8, 1),
    (1, 1),
    (2, 2),
    (4, 4),
    (8, 8),
    (1, 1),
)
DEFAULT_ENH_CHANNELS = 48

ID_KERNEL_SIZES = (5, 7, 1, 1)
ID_STRIDES = (1, 2, 1, 1)
DEFAULT_CONV_FILTERS = (1000, 1000, 1000, 1500)
TOY_CONV_FILTERS = (32, 32, 32, 64)

FC_DIMS_MULTI_LABEL = (1500,)
FC_DIMS_BASELINE = (1500, 600)
FC_DIMS_EXTRA_LAYER = (1500, 2500, 600)

OUTPUT_INIT_GAIN = 0.1


@dataclass(frozen=True)
class EnhLayerSpec:
    kernel: tuple[int, int]
    dilation: tuple[int, int]
    out_channels: int
    activation: str  # "relu" or "sigmoid"


@dataclass(frozen=True)
class EnhancementNetConfig:
    """Fixed 11-layer mask-net structure with a configurable width."""

    layers: tuple[EnhLayerSpec, ...]

    def __post_init__(self):
        if len(self.layers) != ENH_LAYER_COUNT:
            raise ValueError(f"enhancement net must have {ENH_LAYER_COUNT} layers")
        for i, layer in enumerate(self.layers):
            if layer.kernel != ENH_KERNELS[i] or layer.dilation != ENH_DILATIONS[i]:
                raise ValueError(
                    f"layer {i + 1} must use kernel {ENH_KERNELS[i]} with "
                    f"dilation {ENH_DILATIONS[i]}"
                )
            if layer.out_channels < 1:
                raise ValueError("layer widths must be positive")
        last = self.layers[-1]
        if last.out_channels != 1 or last.activation != "sigmoid":
            raise ValueError("final layer must be a 1-channel sigmoid")
        if any(layer.activation != "relu" for layer in self.layers[:-1]):
            raise ValueError("hidden layers must use relu")

    @classmethod
    def standard(cls, channels: int = DEFAULT_ENH_CHANNELS) -> "EnhancementNetConfig":
        layers = [
            EnhLayerSpec(ENH_KERNELS[i], ENH_DILATIONS[i], channels, "relu")
            for i in range(ENH_LAYER_COUNT - 1)
        ]
        layers.append(EnhLayerSpec(ENH_KERNELS[-1], ENH_DILATIONS[-1], 1, "sigmoid"))
        return cls(tuple(layers))

    def parameter_count(self, in_channels: int = 1) -> int:
        total = 0
        for layer in self.layers:
            k_f, k_t = layer.kernel
            total += layer.out_channels * (in_channels * k_f * k_t + 1)
            in_channels = layer.out_channels
        return total


@dataclass(frozen=True)
class SpeakerIdNetConfig:
    """Four 1-D conv layers (kernels 5,7,1,1; strides 1,2,1,1), global
    average pooling, then a fully connected stack ending in the expanded
    label space."""

    output_dim: int
    conv_filters: tuple[int, int, int, int] = DEFAULT_CONV_FILTERS
    fc_dims: tuple[int, ...] = FC_DIMS_MULTI_LABEL

    def __post_init__(self):
        if len(self.conv_filters) != 4:
            raise ValueError("exactly four conv layers are required")
        if any(f < 1 for f in self.conv_filters):
            raise ValueError("conv filter counts must be positive")
        if len(self.fc_dims) < 1 or any(d < 1 for d in self.fc_dims):
            raise ValueError("at least one hidden FC layer is required")
        if self.output_dim < 2:
            raise ValueError("output dimension must cover at least 2 labels")

    @classmethod
    def for_scheme(cls, scheme, conv_filters=DEFAULT_CONV_FILTERS,
                   fc_dims=FC_DIMS_MULTI_LABEL) -> "SpeakerIdNetConfig":
        """Config whose output dimension is the scheme's N*C label space."""
        return cls(
            output_dim=scheme.num_labels,
            conv_filters=tuple(conv_filters),
            fc_dims=tuple(fc_dims),
        )

    @property
    def embedding_dim(self) -> int:
        return self.fc_dims[-1]

    def parameter_count(self, n_bins: int) -> int:
        total = 0
        in_ch = n_bins
        for filters, k in zip(self.conv_filters, ID_KERNEL_SIZES):
            total += filters * (in_ch * k + 1)
            in_ch = filters
        d = in_ch
        for width in self.fc_dims:
            total += width * (d + 1)
            d = width
        total += self.output_dim * (d + 1)
        return total


def _he_uniform(rng, shape, fan_in, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class EnhancementNet:
    """Ratio-mask generator: input (1, F, T) -> mask and enhanced spectrum."""

    def __init__(self, config: EnhancementNetConfig, seed: int = 0,
                 dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self._params: list[Parameter] = []
        in_ch = 1
        self._layers = []
        for i, layer in enumerate(config.layers):
            k_f, k_t = layer.kernel
            fan_in = in_ch * k_f * k_t
            rng = derived_rng(seed, "enh", i)
            shape = (layer.out_channels, in_ch, k_f, k_t)
            if layer.activation == "relu":
                values = _he_uniform(rng, shape, fan_in, self.dtype)
            else:
                values = _glorot_uniform(rng, shape, fan_in, layer.out_channels,
                                         self.dtype)
            weight = Parameter(values, name=f"conv{i + 1}.weight")
            bias = Parameter(np.zeros(layer.out_channels, dtype=self.dtype),
                             name=f"conv{i + 1}.bias")
            self._params += [weight, bias]
            self._layers.append((weight, bias, layer))
            in_ch = layer.out_channels
        _check_unique_names(self._params)

    def parameters(self) -> list[Parameter]:
        return list(self._params)

    def forward_layers(self, x: Tensor) -> list[Tensor]:
        """All layer activations, in order (last one is the mask)."""
        outputs = []
        h = x
        for weight, bias, layer in self._layers:
            h = conv2d_dilated(h, weight, bias, dilation=layer.dilation)
            h = relu(h) if layer.activation == "relu" else sigmoid(h)
            outputs.append(h)
        return outputs

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Return (mask, enhanced) where enhanced = mask * x pointwise."""
        mask = self.forward_layers(x)[-1]
        return mask, mul(mask, x)


class SpeakerIdNet:
    """Speaker classifier over (n_bins, T) compressed magnitude spectra."""

    def __init__(self, config: SpeakerIdNetConfig, n_bins: int, seed: int = 0,
                 dtype=np.float32):
        self.config = config
        self.n_bins = n_bins
        self.dtype = np.dtype(dtype)
        self._params: list[Parameter] = []
        self._conv = []
        in_ch = n_bins
        for i, (filters, k) in enumerate(zip(config.conv_filters, ID_KERNEL_SIZES)):
            rng = derived_rng(seed, "sid-conv", i)
            weight = Parameter(
                _he_uniform(rng, (filters, in_ch, k), in_ch * k, self.dtype),
                name=f"conv{i + 1}.weight",
            )
            bias = Parameter(np.zeros(filters, dtype=self.dtype),
                             name=f"conv{i + 1}.bias")
            self._params += [weight, bias]
            self._conv.append((weight, bias, ID_STRIDES[i]))
            in_ch = filters
        self._fc = []
        d = in_ch
        for i, width in enumerate(config.fc_dims):
            rng = derived_rng(seed, "sid-fc", i)
            weight = Parameter(
                _he_uniform(rng, (width, d), d, self.dtype),
                name=f"fc{i + 1}.weight",
            )
            bias = Parameter(np.zeros(width, dtype=self.dtype), name=f"fc{i + 1}.bias")
            self._params += [weight, bias]
            self._fc.append((weight, bias))
            d = width
        rng = derived_rng(seed, "sid-out")
        # damped so initial logits sit near zero: first-batch loss starts
        # at the uniform-prediction value ln(output_dim)
        self._out_weight = Parameter(
            OUTPUT_INIT_GAIN
            * _glorot_uniform(rng, (config.output_dim, d), d, config.output_dim,
                              self.dtype),
            name="output.weight",
        )
        self._out_bias = Parameter(np.zeros(config.output_dim, dtype=self.dtype),
                                   name="output.bias")
        self._params += [self._out_weight, self._out_bias]
        _check_unique_names(self._params)

    def parameters(self) -> list[Parameter]:
        return list(self._params)

    def embed(self, x: Tensor) -> Tensor:
        """Speaker embedding: the last hidden FC activation (post-relu)."""
        h = x
        for weight, bias, stride in self._conv:
            h = conv1d(h, weight, bias, stride=stride, padding="same")
            h = relu(h)
        h = global_avg_pool(h)
        for weight, bias in self._fc:
            h = dense(h, weight, bias)
            h = relu(h)
        return h

    def forward(self, x: Tensor) -> Tensor:
        """Logits over the expanded label space; no output activation."""
        return dense(self.embed(x), self._out_weight, self._out_bias)


class ComposedNet:
    """Enhancement front end feeding the identification net.

    Gradients flow through the mask into the enhancement parameters, so
    the front end can be trained against the classifier's loss while the
    classifier itself stays frozen.
    """

    def __init__(self, enhancement: EnhancementNet, speaker_id: SpeakerIdNet):
        self.enhancement = enhancement
        self.speaker_id = speaker_id

    def parameters(self) -> list[Parameter]:
        return self.enhancement.parameters() + self.speaker_id.parameters()

    def forward(self, x: Tensor) -> Tensor:
        """x has shape (1, F, T) or (B, 1, F, T); returns sid logits."""
        _, enhanced = self.enhancement.forward(x)
        if enhanced.ndim == 3:
            squeezed = reshape(enhanced, enhanced.shape[1:])
        else:
            batch, _, n_f, n_t = enhanced.shape
            squeezed = reshape(enhanced, (batch, n_f, n_t))
        return self.speaker_id.forward(squeezed)


def freeze(params) -> None:
    """Stop gradient computation for these parameters."""
    for p in params:
        p.requires_grad = False


def _check_unique_names(params):
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise ValueError("parameter names must be unique within a network")
