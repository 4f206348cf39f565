"""Arbitrary-ratio polyphase resampling with a windowed-sinc filter bank.

The prototype lowpass is a Kaiser-windowed sinc of num_phases * taps_per_phase
taps, designed at the virtual rate num_phases * in_rate with passband edge
0.45 * min(in_rate, out_rate) / 2. Each output sample evaluates one phase of
the bank at the input time m * in_rate / out_rate, linearly interpolating
between adjacent phases, so any (including irrational) rate ratio is
supported.

Group delay is compensated inside the index mapping: output sample m sits at
input time m / ratio, so a burst resampled from timeline position S lands at
round(S * ratio) with alignment error below one output sample (the residual
skew from the even-length prototype is 1/(2*num_phases) input samples).
Outputs before the first and after the last input sample see zeros: a burst
never leaks outside its nominal extent.

Equal in/out rates short-circuit to the identity: resampling is skipped, not
approximated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


@dataclass(frozen=True)
class ResamplerSpec:
    taps_per_phase: int = 32
    num_phases: int = 128
    kaiser_beta: float = 8.6

    def __post_init__(self):
        if self.taps_per_phase < 8:
            raise ValueError("taps_per_phase must be >= 8")
        if self.num_phases < 32:
            raise ValueError("num_phases must be >= 32")


_BANK_CACHE: dict[tuple, np.ndarray] = {}


def _filter_bank(in_rate: float, out_rate: float, spec: ResamplerSpec) -> np.ndarray:
    """Polyphase bank, shape (num_phases + 1, taps_per_phase + 1).

    Column c of row p multiplies input sample x[k_hi - taps + 1 + c], where
    k_hi is the newest sample phase p touches. Rows 0..P-1 leave the last
    column zero; row P is phase 0 advanced by one input sample (first column
    zero), so interpolating between phase P-1 and the wrapped phase 0 reads
    one shared window.
    """
    key = (float(in_rate), float(out_rate), spec)
    bank = _BANK_CACHE.get(key)
    if bank is not None:
        return bank

    phases, taps = spec.num_phases, spec.taps_per_phase
    length = phases * taps
    cutoff_hz = 0.45 * min(in_rate, out_rate) / 2.0
    fcv = cutoff_hz / (phases * in_rate)  # cycles per virtual sample
    n = np.arange(length) - (length - 1) / 2.0
    proto = 2.0 * fcv * np.sinc(2.0 * fcv * n) * np.kaiser(length, spec.kaiser_beta)
    proto *= phases  # restore passband gain after phase decomposition

    bank = np.zeros((phases + 1, taps + 1), dtype=np.float64)
    for p in range(phases):
        bank[p, :taps] = proto[p::phases][::-1]
    bank[phases, 1:] = bank[0, :taps]
    bank = np.ascontiguousarray(bank)
    _BANK_CACHE[key] = bank
    return bank


@njit(cache=True, nogil=True, fastmath=True)
def _resample_core(xp, bank, step, c0, phases, taps, m0, x0, out):  # pragma: no cover - jitted
    ncols = taps + 1
    pad = taps + 1
    for i in range(out.size):
        v = (m0 + i) * step
        j0 = int(math.floor(v))
        mu = v - j0
        jc = j0 + c0
        a = jc % phases
        k_hi = (jc - a) // phases
        base = k_hi - taps + 1 - x0 + pad
        re = 0.0
        im = 0.0
        for t in range(ncols):
            c = (1.0 - mu) * bank[a, t] + mu * bank[a + 1, t]
            s = xp[base + t]
            re += c * s.real
            im += c * s.imag
        out[i] = complex(re, im)


def _resample_numpy(xp, bank, step, c0, phases, taps, m0, x0, out):
    """Vectorized reference path: used when numba is unavailable, and by
    tests as an independent check of the jitted kernel."""
    pad = taps + 1
    chunk = 1 << 15
    offsets = np.arange(taps + 1)
    for lo in range(0, out.size, chunk):
        m = np.arange(m0 + lo, m0 + min(lo + chunk, out.size))
        v = m * step
        j0 = np.floor(v).astype(np.int64)
        mu = v - j0
        jc = j0 + c0
        a = jc % phases
        k_hi = (jc - a) // phases
        base = k_hi - taps + 1 - x0 + pad
        windows = xp[base[:, None] + offsets]
        coeffs = (1.0 - mu)[:, None] * bank[a] + mu[:, None] * bank[a + 1]
        out[lo : lo + m.size] = np.einsum("mt,mt->m", coeffs, windows)


def output_length(in_len: int, in_rate: float, out_rate: float) -> int:
    return int(math.floor(in_len * out_rate / in_rate + 0.5))


class Resampler:
    """One (in_rate, out_rate, spec) conversion, reusable across buffers.

    `compute(x, m_start, m_count, x0)` evaluates output samples
    [m_start, m_start + m_count) given input samples x covering absolute
    input indices [x0, x0 + len(x)); indices outside x are taken as zero.
    """

    def __init__(self, in_rate: float, out_rate: float, spec: ResamplerSpec = ResamplerSpec()):
        if not (in_rate > 0 and out_rate > 0) or not (math.isfinite(in_rate) and math.isfinite(out_rate)):
            raise ValueError(f"rates must be positive and finite, got {in_rate}, {out_rate}")
        self.in_rate = float(in_rate)
        self.out_rate = float(out_rate)
        self.spec = spec
        self.ratio = self.out_rate / self.in_rate
        self.bank = _filter_bank(in_rate, out_rate, spec)
        self.step = spec.num_phases * self.in_rate / self.out_rate  # virtual samples per output
        self.c0 = (spec.num_phases * spec.taps_per_phase) // 2

    def compute(self, x: np.ndarray, m_start: int, m_count: int, x0: int = 0) -> np.ndarray:
        taps = self.spec.taps_per_phase
        xp = np.zeros(x.size + 2 * (taps + 1), dtype=np.complex128)
        xp[taps + 1 : taps + 1 + x.size] = x
        out = np.empty(m_count, dtype=np.complex128)
        core = _resample_core if _HAVE_NUMBA else _resample_numpy
        core(xp, self.bank, self.step, self.c0, self.spec.num_phases, taps, m_start, x0, out)
        return out

    def newest_input_needed(self, m: int) -> int:
        """Largest absolute input index output sample m can depend on."""
        jc = int(math.floor(m * self.step)) + self.c0
        return (jc - jc % self.spec.num_phases) // self.spec.num_phases + 1

    def emittable_through(self, available: int) -> int:
        """Count of output samples computable with `available` input samples."""
        if available <= 0:
            return 0
        phases = self.spec.num_phases
        m = max(0, int(((available - 2) * phases - self.c0) / self.step) - 2)
        while self.newest_input_needed(m) <= available - 1:
            m += 1
        return m


def resample(buf, out_rate_hz: float, spec: ResamplerSpec = ResamplerSpec()):
    """Resample a buffer to a new rate; see the module docstring for timing.

    Output length is round(len * out_rate / in_rate); the output's
    start_sample is the input's start position rescaled to the output rate.
    """
    from .core import IQBuffer

    if not (out_rate_hz > 0) or not math.isfinite(out_rate_hz):
        raise ValueError(f"out_rate_hz must be positive and finite, got {out_rate_hz}")
    if out_rate_hz == buf.sample_rate_hz:
        return buf
    rs = Resampler(buf.sample_rate_hz, out_rate_hz, spec)
    out_len = output_length(len(buf), buf.sample_rate_hz, out_rate_hz)
    start = int(math.floor(buf.start_sample * rs.ratio + 0.5))
    if out_len == 0:
        return IQBuffer(np.zeros(0, dtype=np.complex128), out_rate_hz, start)
    out = rs.compute(buf.samples, 0, out_len, 0)
    return IQBuffer(out, out_rate_hz, start)


class StreamingResampler:
    """Chunk-by-chunk resampling that matches the one-shot result exactly.

    Feed input chunks in order; each call returns the newly computable
    output samples. `flush()` returns the tail once the input has ended.
    Output across feed()+flush() equals resample() on the concatenated
    input, sample for sample.
    """

    def __init__(self, in_rate: float, out_rate: float, spec: ResamplerSpec = ResamplerSpec()):
        self._rs = Resampler(in_rate, out_rate, spec)
        self._keep = 2 * (spec.taps_per_phase + 2)
        self._tail = np.zeros(0, dtype=np.complex128)
        self._tail_x0 = 0  # absolute input index of _tail[0]
        self._in_count = 0
        self._m_next = 0

    @property
    def ratio(self) -> float:
        return self._rs.ratio

    def feed(self, chunk: np.ndarray) -> np.ndarray:
        chunk = np.asarray(chunk, dtype=np.complex128)
        x = np.concatenate([self._tail, chunk])
        self._in_count += chunk.size
        out = self._emit(x, self._rs.emittable_through(self._in_count))
        if x.size > self._keep:
            self._tail_x0 += x.size - self._keep
            x = x[-self._keep :]
        self._tail = x
        return out

    def flush(self, total_out_len: int | None = None) -> np.ndarray:
        """Emit the remaining outputs; missing future input reads as zero."""
        if total_out_len is None:
            total_out_len = output_length(self._in_count, self._rs.in_rate, self._rs.out_rate)
        return self._emit(self._tail, total_out_len)

    def _emit(self, x: np.ndarray, m_stop: int) -> np.ndarray:
        count = m_stop - self._m_next
        if count <= 0:
            return np.zeros(0, dtype=np.complex128)
        out = self._rs.compute(x, self._m_next, count, self._tail_x0)
        self._m_next = m_stop
        return out
