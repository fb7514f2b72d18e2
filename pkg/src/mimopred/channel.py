"""Time-varying uplink channel simulation and least-squares estimation.

Each user's channel is a sum of plane-wave paths with random complex
gains, arrival angles, and Doppler phase rates, observed at a
half-wavelength uniform linear array over equally spaced slots.  Pilots
are the unit symbol, so least-squares estimation reduces to a per-slot
rescaling of the received vector.

Traces can be written to and read from a small binary container
(magic ``MCH1``) for caching and cross-run reuse.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DataError, DimensionError, IntegrityError
from .seeding import substream

SPEED_OF_LIGHT = 2.998e8  # m/s

TRACE_MAGIC = b"MCH1"


@dataclass(frozen=True)
class SimConfig:
    """Geometry, mobility, and noise settings for one simulation run."""

    n_antennas: int
    n_ue: int
    n_slots: int
    snr_db: float
    carrier_hz: float = 2.3e9
    speed_kmh: float = 3.0
    slot_s: float = 0.04
    paths: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.n_antennas < 1:
            raise ConfigurationError(f"n_antennas must be >= 1, got {self.n_antennas}")
        if self.n_ue < 1:
            raise ConfigurationError(f"n_ue must be >= 1, got {self.n_ue}")
        if self.n_slots < 2:
            raise ConfigurationError(f"n_slots must be >= 2, got {self.n_slots}")
        if self.paths < 1:
            raise ConfigurationError(f"paths must be >= 1, got {self.paths}")
        if self.carrier_hz <= 0:
            raise ConfigurationError(f"carrier_hz must be positive, got {self.carrier_hz}")
        if self.speed_kmh < 0:
            raise ConfigurationError(f"speed_kmh must be non-negative, got {self.speed_kmh}")
        if self.slot_s <= 0:
            raise ConfigurationError(f"slot_s must be positive, got {self.slot_s}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be non-negative, got {self.seed}")

    @property
    def doppler_hz(self) -> float:
        """Maximum Doppler shift v * f_c / c."""
        return (self.speed_kmh / 3.6) * self.carrier_hz / SPEED_OF_LIGHT

    @property
    def rho(self) -> float:
        """Linear transmit SNR."""
        return 10.0 ** (self.snr_db / 10.0)

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, seed=seed)


@dataclass
class ChannelTrace:
    """True channel of one user: complex (n_antennas, n_slots)."""

    ue_id: int
    h: np.ndarray


@dataclass
class LsTrace:
    """Least-squares channel estimates of one user, same layout as the truth."""

    ue_id: int
    h_ls: np.ndarray
    snr_db: float
    denoised: bool = False


def _complex_noise(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def gen_trace(cfg: SimConfig, ue_id: int) -> ChannelTrace:
    """Draw one user's channel trajectory.

    Per path: a unit-power complex gain, an arrival angle uniform on
    (-pi/2, pi/2) driving the array response, and a motion direction
    uniform on (0, 2*pi) driving the Doppler phase rate.  The 1/sqrt(P)
    scaling keeps E||h||^2 equal to the antenna count.
    """
    if not 0 <= ue_id < cfg.n_ue:
        raise ConfigurationError(f"ue_id {ue_id} outside 0..{cfg.n_ue - 1}")
    rng = substream(cfg.seed, "sim", ue_id)
    p = cfg.paths
    gains = _complex_noise(rng, (p,))
    arrival = rng.uniform(-np.pi / 2.0, np.pi / 2.0, p)
    motion = rng.uniform(0.0, 2.0 * np.pi, p)
    antennas = np.arange(cfg.n_antennas)
    steering = np.exp(1j * np.pi * np.outer(antennas, np.sin(arrival)))
    rate = 2.0 * np.pi * cfg.doppler_hz * np.cos(motion) * cfg.slot_s  # rad per slot
    phases = np.exp(1j * np.outer(rate, np.arange(cfg.n_slots)))
    h = (steering * gains) @ phases / np.sqrt(p)
    return ChannelTrace(ue_id, h)


def receive(trace: ChannelTrace, cfg: SimConfig) -> np.ndarray:
    """Received pilot observations sqrt(rho) * h + w, unit-variance noise."""
    if trace.h.shape != (cfg.n_antennas, cfg.n_slots):
        raise DimensionError(
            f"trace shape {trace.h.shape} does not match config "
            f"({cfg.n_antennas}, {cfg.n_slots})"
        )
    rng = substream(cfg.seed, "noise", trace.ue_id)
    return np.sqrt(cfg.rho) * trace.h + _complex_noise(rng, trace.h.shape)


def ls_estimate(y: np.ndarray, cfg: SimConfig, ue_id: int) -> LsTrace:
    """Per-slot least-squares estimate y / sqrt(rho) under unit pilots.

    The estimate equals the true channel plus noise of variance 1/rho
    per complex entry.
    """
    y = np.asarray(y)
    if y.ndim != 2:
        raise DimensionError(f"received signal must be 2-d, got shape {y.shape}")
    if cfg.rho <= 0.0:
        raise ConfigurationError("ls_estimate needs a positive linear SNR")
    return LsTrace(ue_id=ue_id, h_ls=y / np.sqrt(cfg.rho), snr_db=cfg.snr_db)


def observe(trace: ChannelTrace, cfg: SimConfig) -> LsTrace:
    """Simulate reception and estimation in one step."""
    return ls_estimate(receive(trace, cfg), cfg, trace.ue_id)


def save_traces(path, matrices) -> None:
    """Write complex (M, N) matrices to an ``MCH1`` container.

    Layout: magic, then u32 little-endian M, N, count, then per matrix
    the row-major float64 entries interleaved (re, im).
    """
    matrices = [np.asarray(m) for m in matrices]
    if not matrices:
        raise IntegrityError("refusing to write an empty trace container")
    m, n = matrices[0].shape
    for mat in matrices:
        if mat.ndim != 2 or mat.shape != (m, n):
            raise DimensionError(f"all traces must share shape ({m}, {n}), got {mat.shape}")
    with open(path, "wb") as fh:
        fh.write(TRACE_MAGIC)
        fh.write(struct.pack("<III", m, n, len(matrices)))
        for mat in matrices:
            block = np.empty((m, n, 2), dtype="<f8")
            block[:, :, 0] = mat.real
            block[:, :, 1] = mat.imag
            fh.write(block.tobytes())


def read_bytes(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise DataError(f"cannot read trace file {path}: {exc}") from exc


def parse_trace_block(raw: bytes, path) -> tuple[list[np.ndarray], int]:
    """Parse one trace block from ``raw``; returns (matrices, end offset).

    The block may be followed by other sections (the task container
    appends an index), so trailing bytes are the caller's business.
    """
    if raw[:4] != TRACE_MAGIC:
        raise IntegrityError(f"{path}: bad magic at byte 0 (expected {TRACE_MAGIC!r})")
    if len(raw) < 16:
        raise IntegrityError(f"{path}: truncated header at byte {len(raw)}")
    m, n, count = struct.unpack_from("<III", raw, 4)
    if m < 1 or n < 1:
        raise IntegrityError(f"{path}: invalid dimensions ({m}, {n}) at byte 4")
    need = 16 + count * m * n * 16
    if len(raw) < need:
        raise IntegrityError(
            f"{path}: expected {need} bytes for {count} traces, parsing failed at byte {len(raw)}"
        )
    out = []
    for k in range(count):
        offset = 16 + k * m * n * 16
        block = np.frombuffer(raw, dtype="<f8", count=m * n * 2, offset=offset)
        block = block.reshape(m, n, 2)
        out.append(block[:, :, 0] + 1j * block[:, :, 1])
    return out, need


def load_traces(path) -> list[np.ndarray]:
    """Read back matrices written by :func:`save_traces`.

    Corruption is reported with the byte offset where parsing failed.
    """
    raw = read_bytes(path)
    out, end = parse_trace_block(raw, path)
    if end != len(raw):
        raise IntegrityError(f"{path}: {len(raw) - end} trailing bytes after trace block")
    return out
