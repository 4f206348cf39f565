"""Core sample-domain types shared by every stage of the pipeline.

Complex baseband samples are dimensionless full-scale amplitudes; a
PowerCalibration fixes which absolute power (dBm) amplitude 1.0 corresponds
to. Timeline positions are integer sample indices at a stated rate --
seconds appear only at the edges (scenario files, reports).

All types here are immutable values after construction and safe to share
between workers. Randomness comes from named Philox substreams so that
results never depend on scheduling or draw order.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class IQBuffer:
    """A finite block of complex baseband samples on a sample timeline.

    `start_sample` is the position of samples[0] on the owning timeline,
    in samples at `sample_rate_hz`. Treat `samples` as read-only.
    """

    samples: np.ndarray
    sample_rate_hz: float
    start_sample: int = 0

    def __post_init__(self):
        arr = np.ascontiguousarray(self.samples, dtype=np.complex128)
        if not math.isfinite(self.sample_rate_hz) or self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if arr.ndim != 1:
            raise ValueError(f"samples must be 1-d, got shape {arr.shape}")
        if arr.size and not np.isfinite(arr.view(np.float64)).all():
            raise ValueError("samples contain NaN or Inf")
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "start_sample", int(self.start_sample))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def end_sample(self) -> int:
        """One past the last occupied timeline position."""
        return self.start_sample + self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class BandSpec:
    """The emulated band: one stream rate, one (informational) RF center."""

    center_frequency_hz: float = 868e6
    stream_rate_hz: float = 1.5e6
    usable_bandwidth_hz: float = 1.5e6

    def __post_init__(self):
        if self.stream_rate_hz <= 0:
            raise ValueError("stream_rate_hz must be positive")
        if not 0 < self.usable_bandwidth_hz <= self.stream_rate_hz:
            raise ValueError(
                f"usable_bandwidth_hz {self.usable_bandwidth_hz} must be in "
                f"(0, stream_rate_hz={self.stream_rate_hz}]"
            )


@dataclass(frozen=True)
class PowerCalibration:
    """Maps digital amplitude to absolute power: |s| = 1.0 <=> full_scale_dbm."""

    full_scale_dbm: float = 0.0


def dbm_to_amplitude(p_dbm: float, cal: PowerCalibration = PowerCalibration()) -> float:
    """Amplitude whose mean-square power is `p_dbm` under the calibration."""
    return 10.0 ** ((p_dbm - cal.full_scale_dbm) / 20.0)


def amplitude_to_dbm(a: float, cal: PowerCalibration = PowerCalibration()) -> float:
    if a <= 0:
        raise ValueError(f"amplitude must be positive, got {a}")
    return 20.0 * math.log10(a) + cal.full_scale_dbm


def buffer_power_dbm(buf: IQBuffer, cal: PowerCalibration = PowerCalibration()) -> float:
    """Mean-square power of a buffer in dBm under the calibration."""
    if len(buf) == 0:
        raise ValueError("cannot measure power of an empty buffer")
    mean_sq = float(np.mean(np.abs(buf.samples) ** 2))
    if mean_sq == 0.0:
        return -math.inf
    return 10.0 * math.log10(mean_sq) + cal.full_scale_dbm


class Rng:
    """Deterministic random source with independent named substreams.

    Every substream is a counter-based Philox generator keyed by
    SHA-256(seed, role, ids...). Identical seeds reproduce identical
    substream outputs regardless of how draws interleave across
    substreams, which keeps parallel runs bit-reproducible.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    def key(self, role: str, *ids) -> np.ndarray:
        """128-bit Philox key for the (role, ids...) substream."""
        tag = "|".join([str(self.seed), role, *map(str, ids)])
        digest = hashlib.sha256(tag.encode("utf-8")).digest()
        return np.frombuffer(digest[:16], dtype=np.uint64)

    def substream(self, role: str, *ids) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key(role, *ids)))
