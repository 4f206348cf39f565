"""Per-gateway IQ stream assembly: superposition, noise, channel extraction.

Every burst is resampled to the stream rate, frequency-shifted to its
channel offset with phase referenced to the global timeline origin (so the
relative carrier phase of overlapping bursts is reproducible), and summed
in ascending (device_id, start_sample) order -- a canonical order because
floating-point addition is not associative. Interference needs no model
here: it is whatever the superposed samples do to the demodulators.

Thermal noise is added once, at stream level, as complex white Gaussian
noise addressed by absolute sample index: sample n always consumes Philox
words 2n and 2n+1 of the gateway's noise substream, so the same scenario
produces bit-identical streams for any block size or worker count.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import IQBuffer, BandSpec, PowerCalibration
from .resample import Resampler, ResamplerSpec, StreamingResampler, output_length, resample

log = logging.getLogger("iqsim.mixer")

_TWO_NEG53 = 2.0 ** -53


@dataclass(frozen=True)
class NoiseSpec:
    """Receiver-referred thermal noise floor."""

    density_dbm_per_hz: float = -174.0
    receiver_noise_figure_db: float = 6.0

    def floor_dbm(self, bandwidth_hz: float) -> float:
        return self.density_dbm_per_hz + self.receiver_noise_figure_db + 10.0 * math.log10(bandwidth_hz)


@dataclass(frozen=True)
class PlacedBurst:
    """A propagated burst scheduled on a gateway's stream timeline.

    `waveform` stays at its native rate; `start_sample` is where the
    resampled burst begins, in stream samples.
    """

    waveform: IQBuffer
    carrier_offset_hz: float
    start_sample: int
    source_device_id: str = ""

    def contained_in(self, band: BandSpec) -> bool:
        return abs(self.carrier_offset_hz) + self.waveform.sample_rate_hz / 2 <= band.stream_rate_hz / 2


def frequency_shift(buf: IQBuffer, offset_hz: float) -> IQBuffer:
    """Translate a buffer by offset_hz, phase-referenced to timeline origin.

    Sample n is multiplied by exp(j*2*pi*offset*(start_sample + n)/rate), so
    two overlapping bursts keep a reproducible relative carrier phase no
    matter how the stream is blocked.
    """
    rate = buf.sample_rate_hz
    if abs(offset_hz) >= rate / 2:
        raise ValueError(f"|offset_hz|={abs(offset_hz)} must be < rate/2 = {rate / 2}")
    if offset_hz == 0.0 or len(buf) == 0:
        return buf
    # divide before multiplying: (start+n)/rate stays small, keeping the
    # reduced phase accurate for timeline positions far from the origin
    t = (buf.start_sample + np.arange(len(buf))) / rate
    cycles = np.mod(offset_hz * t, 1.0)
    return IQBuffer(buf.samples * np.exp(2j * np.pi * cycles), rate, buf.start_sample)


class NoiseSource:
    """White complex Gaussian noise indexed by absolute stream sample.

    Words are drawn from a keyed Philox counter stream and turned into
    normals with Box-Muller; u64 w maps to the uniform ((w >> 11) + 1) *
    2^-53 in (0, 1]. Per-component standard deviation is `sigma`.
    """

    def __init__(self, key: np.ndarray, sigma: float):
        self.key = np.asarray(key, dtype=np.uint64)
        self.sigma = float(sigma)

    @staticmethod
    def sigma_for(noise: NoiseSpec, stream_rate_hz: float, cal: PowerCalibration) -> float:
        power = 10.0 ** ((noise.floor_dbm(stream_rate_hz) - cal.full_scale_dbm) / 10.0)
        return math.sqrt(power / 2.0)

    def block(self, start_sample: int, count: int) -> np.ndarray:
        if count <= 0:
            return np.zeros(0, dtype=np.complex128)
        word0 = 2 * start_sample
        counter0 = word0 // 4
        skip = word0 - 4 * counter0
        bg = np.random.Philox(key=self.key, counter=np.array([counter0, 0, 0, 0], dtype=np.uint64))
        raw = bg.random_raw(skip + 2 * count)[skip:]
        u = ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_NEG53
        radius = np.sqrt(-2.0 * np.log(u[0::2]))
        theta = 2.0 * np.pi * u[1::2]
        return (self.sigma * radius) * (np.cos(theta) + 1j * np.sin(theta))


class MixDiagnostics:
    """Counts bursts rejected for spectral containment violations."""

    def __init__(self):
        self.rejected_bursts = 0


def _sorted_bursts(bursts) -> list[PlacedBurst]:
    return sorted(bursts, key=lambda b: (b.source_device_id, b.start_sample))


def render_burst(burst: PlacedBurst, stream_rate_hz: float, spec: ResamplerSpec) -> IQBuffer:
    """Resample a burst to the stream rate and shift it to its channel."""
    resampled = resample(burst.waveform, stream_rate_hz, spec)
    placed = IQBuffer(resampled.samples, stream_rate_hz, burst.start_sample)
    return frequency_shift(placed, burst.carrier_offset_hz)


def rendered_length(burst: PlacedBurst, stream_rate_hz: float) -> int:
    return output_length(len(burst.waveform), burst.waveform.sample_rate_hz, stream_rate_hz)


def mix(
    bursts,
    band: BandSpec,
    noise: NoiseSpec | None,
    window: tuple[int, int],
    noise_key: np.ndarray | None = None,
    spec: ResamplerSpec = ResamplerSpec(),
    cal: PowerCalibration = PowerCalibration(),
    diagnostics: MixDiagnostics | None = None,
    _rendered: dict | None = None,
) -> IQBuffer:
    """Superpose bursts over [window_start, window_end) and add noise.

    Bursts violating spectral containment are skipped with a diagnostic,
    never silently aliased. Passing noise=None (or no noise_key) disables
    the noise floor, leaving pure superposition.
    """
    start, end = int(window[0]), int(window[1])
    if end < start:
        raise ValueError(f"window end {end} before start {start}")
    out = np.zeros(end - start, dtype=np.complex128)
    for burst in _sorted_bursts(bursts):
        if not burst.contained_in(band):
            if diagnostics is not None:
                diagnostics.rejected_bursts += 1
            log.warning(
                "burst from %s rejected: |%.0f| Hz + %.0f/2 Hz exceeds stream rate %.0f/2",
                burst.source_device_id,
                burst.carrier_offset_hz,
                burst.waveform.sample_rate_hz,
                band.stream_rate_hz,
            )
            continue
        b_start = burst.start_sample
        b_end = b_start + rendered_length(burst, band.stream_rate_hz)
        lo, hi = max(start, b_start), min(end, b_end)
        if lo >= hi:
            continue
        if _rendered is not None and id(burst) in _rendered:
            rendered = _rendered[id(burst)]
        else:
            rendered = render_burst(burst, band.stream_rate_hz, spec)
            if _rendered is not None:
                _rendered[id(burst)] = rendered
        out[lo - start : hi - start] += rendered.samples[lo - b_start : hi - b_start]
    if noise is not None and noise_key is not None:
        sigma = NoiseSource.sigma_for(noise, band.stream_rate_hz, cal)
        out += NoiseSource(noise_key, sigma).block(start, end - start)
    return IQBuffer(out, band.stream_rate_hz, start)


def channelize(
    stream: IQBuffer,
    channel_offset_hz: float,
    channel_rate_hz: float,
    spec: ResamplerSpec = ResamplerSpec(),
) -> IQBuffer:
    """Extract one channel: shift to baseband, then decimate to its rate."""
    if abs(channel_offset_hz) + channel_rate_hz / 2 > stream.sample_rate_hz / 2:
        raise ValueError(
            f"channel at {channel_offset_hz} Hz / {channel_rate_hz} Hz not contained "
            f"in stream rate {stream.sample_rate_hz}"
        )
    return resample(frequency_shift(stream, -channel_offset_hz), channel_rate_hz, spec)


class StreamingChannelizer:
    """Block-wise channelize() with results identical to the one-shot call."""

    def __init__(
        self,
        stream_rate_hz: float,
        channel_offset_hz: float,
        channel_rate_hz: float,
        spec: ResamplerSpec = ResamplerSpec(),
        stream_start_sample: int = 0,
    ):
        if abs(channel_offset_hz) + channel_rate_hz / 2 > stream_rate_hz / 2:
            raise ValueError("channel not contained in stream")
        self.offset_hz = channel_offset_hz
        self.stream_rate_hz = stream_rate_hz
        self.channel_rate_hz = channel_rate_hz
        self._resampler = StreamingResampler(stream_rate_hz, channel_rate_hz, spec)
        self._in_count = 0
        self._parts: list[np.ndarray] = []
        self._start = stream_start_sample

    def feed(self, block: IQBuffer) -> None:
        shifted = frequency_shift(block, -self.offset_hz)
        self._in_count += len(block)
        part = self._resampler.feed(shifted.samples)
        if part.size:
            self._parts.append(part)

    def finish(self) -> IQBuffer:
        total = output_length(self._in_count, self.stream_rate_hz, self.channel_rate_hz)
        tail = self._resampler.flush(total)
        if tail.size:
            self._parts.append(tail)
        samples = np.concatenate(self._parts) if self._parts else np.zeros(0, dtype=np.complex128)
        start = int(math.floor(self._start * self.channel_rate_hz / self.stream_rate_hz + 0.5))
        return IQBuffer(samples, self.channel_rate_hz, start)
