"""Network architectures and parameter containers.

Two architectures: a fully connected predictor (relu hidden layers,
linear output) mapping an encoded window of past channel estimates to
the next channel vector, and an untrained sequence generator (1x1
convolutions over the time axis, length-doubling upsampling, relu, then
per-channel batch normalization) whose output is fit directly to one
noisy trace during denoising.

Parameters live in a :class:`ModelParams` list of named tensors and can
be saved to / loaded from a small binary checkpoint (magic ``MPR1``)
that records the architecture and rejects mismatched loads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, add, batchnorm, matmul, relu, reshape, upsample_linear
from .errors import ConfigurationError, DataError, DimensionError, IntegrityError
from .seeding import substream

CHECKPOINT_MAGIC = b"MPR1"


@dataclass(frozen=True)
class MlpSpec:
    """Fully connected predictor: input -> hidden_layers x hidden_width -> output."""

    input_dim: int
    hidden_layers: int
    hidden_width: int
    output_dim: int

    def __post_init__(self):
        for name in ("input_dim", "hidden_layers", "hidden_width", "output_dim"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")


@dataclass(frozen=True)
class DipSpec:
    """Untrained generator: ``depth`` hidden conv layers, the first
    depth-1 of them doubling the sequence length, then a linear conv
    head, so the output is (out_channels, base_len * 2**(depth-1))."""

    depth: int
    filters: int
    base_len: int
    out_channels: int

    def __post_init__(self):
        for name in ("depth", "filters", "base_len", "out_channels"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")

    @property
    def out_len(self) -> int:
        return self.base_len * 2 ** (self.depth - 1)


class ModelParams:
    """Ordered, named parameter tensors plus the spec that shaped them."""

    def __init__(self, spec, tensors, names):
        if len(tensors) != len(names):
            raise DimensionError(f"{len(tensors)} tensors but {len(names)} names")
        self.spec = spec
        self.tensors = list(tensors)
        self.names = list(names)

    def __len__(self) -> int:
        return len(self.tensors)

    def __iter__(self):
        return iter(self.tensors)

    def clone(self) -> "ModelParams":
        """Deep copy with fresh gradient-tracking leaves."""
        fresh = [Tensor(t.data.copy(), requires_grad=True) for t in self.tensors]
        return ModelParams(self.spec, fresh, self.names)

    def replace_tensors(self, tensors) -> "ModelParams":
        return ModelParams(self.spec, tensors, self.names)

    def n_scalars(self) -> int:
        return sum(t.size for t in self.tensors)


def conv1x1(filters: Tensor, x: Tensor, bias: Tensor | None = None) -> Tensor:
    """Pointwise convolution over a (channels, length) sequence.

    With kernel size 1 this is exactly ``filters @ x`` for a
    (out_channels, in_channels) filter bank, plus an optional
    per-output-channel bias.
    """
    out = matmul(filters, x)
    if bias is not None:
        out = add(out, reshape(bias, (bias.size, 1)))
    return out


def mlp_forward(params: ModelParams, x) -> Tensor:
    """Run the predictor on a (batch, input_dim) design matrix."""
    spec = params.spec
    if not isinstance(spec, MlpSpec):
        raise ConfigurationError(f"mlp_forward needs MlpSpec parameters, got {type(spec).__name__}")
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise DimensionError(
            f"input shape {x.shape} does not match (batch, {spec.input_dim})"
        )
    out = x
    n_layers = spec.hidden_layers + 1
    for i in range(n_layers):
        w = params.tensors[2 * i]
        b = params.tensors[2 * i + 1]
        if w.ndim != 2 or out.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
            raise DimensionError(
                f"layer {i + 1}: activations {out.shape} do not match "
                f"weight {w.shape} / bias {b.shape}"
            )
        out = add(matmul(out, w), b)
        if i < n_layers - 1:
            out = relu(out)
    return out


def dip_forward(params: ModelParams, z1) -> Tensor:
    """Run the generator on its fixed (filters, base_len) input."""
    spec = params.spec
    if not isinstance(spec, DipSpec):
        raise ConfigurationError(f"dip_forward needs DipSpec parameters, got {type(spec).__name__}")
    z = z1 if isinstance(z1, Tensor) else Tensor(np.asarray(z1, dtype=np.float64))
    if z.shape != (spec.filters, spec.base_len):
        raise DimensionError(
            f"generator input shape {z.shape} does not match ({spec.filters}, {spec.base_len})"
        )
    k = 0
    for i in range(spec.depth):
        f = params.tensors[k]
        if f.ndim != 2 or f.shape[1] != z.shape[0]:
            raise DimensionError(
                f"layer {i + 1}: filters {f.shape} do not match input channels {z.shape[0]}"
            )
        z = conv1x1(f, z)
        if i < spec.depth - 1:
            z = upsample_linear(z)
        z = relu(z)
        z = batchnorm(z, params.tensors[k + 1], params.tensors[k + 2])
        k += 3
    head = params.tensors[k]
    if head.ndim != 2 or head.shape[1] != z.shape[0]:
        raise DimensionError(
            f"output layer: filters {head.shape} do not match input channels {z.shape[0]}"
        )
    return conv1x1(head, z, bias=params.tensors[k + 1])


def _glorot(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


def init_params(spec, seed: int) -> ModelParams:
    """Fresh parameters: Glorot-uniform weights, zero biases, identity norms."""
    rng = substream(seed, "init")
    tensors, names = [], []

    def leaf(data, name):
        tensors.append(Tensor(data, requires_grad=True))
        names.append(name)

    if isinstance(spec, MlpSpec):
        dims = ([spec.input_dim] + [spec.hidden_width] * spec.hidden_layers
                + [spec.output_dim])
        for i in range(len(dims) - 1):
            leaf(_glorot(rng, (dims[i], dims[i + 1]), dims[i], dims[i + 1]), f"w{i + 1}")
            leaf(np.zeros(dims[i + 1]), f"b{i + 1}")
    elif isinstance(spec, DipSpec):
        for i in range(spec.depth):
            leaf(_glorot(rng, (spec.filters, spec.filters), spec.filters, spec.filters),
                 f"conv{i + 1}")
            leaf(np.ones(spec.filters), f"scale{i + 1}")
            leaf(np.zeros(spec.filters), f"shift{i + 1}")
        leaf(_glorot(rng, (spec.out_channels, spec.filters), spec.filters, spec.out_channels),
             "conv_out")
        leaf(np.zeros(spec.out_channels), "bias_out")
    else:
        raise ConfigurationError(f"unknown spec type: {type(spec).__name__}")
    return ModelParams(spec, tensors, names)


_SPEC_KINDS = {MlpSpec: 0, DipSpec: 1}
_SPEC_FIELDS = {
    0: ("input_dim", "hidden_layers", "hidden_width", "output_dim"),
    1: ("depth", "filters", "base_len", "out_channels"),
}


def save_checkpoint(path, params: ModelParams) -> None:
    """Write parameters plus their architecture descriptor."""
    kind = _SPEC_KINDS.get(type(params.spec))
    if kind is None:
        raise ConfigurationError(f"cannot checkpoint spec type {type(params.spec).__name__}")
    fields = [getattr(params.spec, f) for f in _SPEC_FIELDS[kind]]
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<BI", kind, len(fields)))
        fh.write(struct.pack(f"<{len(fields)}I", *fields))
        fh.write(struct.pack("<I", len(params.tensors)))
        for t in params.tensors:
            fh.write(struct.pack("<I", t.ndim))
            fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path, expected_spec=None) -> ModelParams:
    """Read a checkpoint; optionally insist on a particular architecture."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:4] != CHECKPOINT_MAGIC:
        raise IntegrityError(f"{path}: bad magic at byte 0 (expected {CHECKPOINT_MAGIC!r})")
    pos = 4

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(raw):
            raise IntegrityError(f"{path}: truncated at byte {pos}")
        vals = struct.unpack_from(fmt, raw, pos)
        pos += size
        return vals

    kind, n_fields = take("<BI")
    if kind not in _SPEC_FIELDS:
        raise IntegrityError(f"{path}: unknown architecture kind {kind}")
    field_names = _SPEC_FIELDS[kind]
    if n_fields != len(field_names):
        raise IntegrityError(f"{path}: expected {len(field_names)} spec fields, got {n_fields}")
    fields = take(f"<{n_fields}I")
    spec = (MlpSpec if kind == 0 else DipSpec)(**dict(zip(field_names, fields)))
    if expected_spec is not None and spec != expected_spec:
        raise DataError(f"{path}: checkpoint architecture {spec} does not match {expected_spec}")
    reference = init_params(spec, seed=0)
    (count,) = take("<I")
    if count != len(reference.tensors):
        raise IntegrityError(f"{path}: expected {len(reference.tensors)} tensors, got {count}")
    tensors = []
    for ref in reference.tensors:
        (ndim,) = take("<I")
        shape = take(f"<{ndim}I")
        if shape != ref.shape:
            raise IntegrityError(f"{path}: tensor shape {shape} does not match {ref.shape}")
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        fmt_size = n * 8
        if pos + fmt_size > len(raw):
            raise IntegrityError(f"{path}: truncated tensor data at byte {pos}")
        data = np.frombuffer(raw, dtype="<f8", count=n, offset=pos).reshape(shape).copy()
        pos += fmt_size
        tensors.append(Tensor(data, requires_grad=True))
    if pos != len(raw):
        raise IntegrityError(f"{path}: {len(raw) - pos} trailing bytes")
    return ModelParams(spec, tensors, reference.names)
