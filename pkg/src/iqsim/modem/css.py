"""Chirp-spread-spectrum modem (LoRa-style), critically sampled.

Modulation: symbol s in [0, N), N = 2^SF, is the cyclically shifted
upchirp x_s[n] = exp(j*2*pi*n*(s/N + n/(2N) - 1/2)), one sample per chip
(native rate == chirp bandwidth). A frame is:

    preamble_upchirps base upchirps | sync symbols 16, 24 |
    2.25 base downchirps | data symbols

where the data symbols carry length|payload|crc16 bits MSB-first in
groups of SF bits, zero-padded at the tail. No Gray mapping, coding, or
whitening: integrity comes from the CRC alone.

Demodulation: multiplying a window by the conjugate base upchirp turns a
symbol into a complex tone whose N-point DFT argmax is the symbol value.
A window misaligned by d samples inside the preamble reads bin d, and an
integer-bin carrier offset f reads bin d+f, so the receiver aligns its
symbol grid by subtracting the preamble bin; that single correction
absorbs timing and integer CFO together (fractional CFO/timing tracking
is deliberately not attempted). A preamble is declared when at least
`min_preamble_windows` consecutive symbol-spaced windows agree on one
argmax bin, each with DFT peak-to-mean magnitude ratio of at least
`peak_to_mean_min`; both thresholds are scale-free, so decisions are
invariant under positive scaling of the stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import IQBuffer, PowerCalibration, amplitude_to_dbm
from .framing import (
    Frame,
    PacketOutcome,
    bits_to_bytes,
    bits_to_symbols,
    bytes_to_bits,
    symbols_to_bits,
    unpack_wire_bits,
)

SYNC_SYMBOLS = (16, 24)
DOWNCHIRPS = 2.25  # two full base downchirps plus a quarter chirp


@dataclass(frozen=True)
class CssParams:
    spreading_factor: int = 7
    chirp_bandwidth_hz: float = 125e3
    preamble_upchirps: int = 8

    def __post_init__(self):
        if not 7 <= self.spreading_factor <= 12:
            raise ValueError(f"spreading_factor must be in [7, 12], got {self.spreading_factor}")
        if self.chirp_bandwidth_hz <= 0:
            raise ValueError("chirp_bandwidth_hz must be positive")
        if self.preamble_upchirps < 4:
            raise ValueError("preamble_upchirps must be >= 4")

    @property
    def n_chips(self) -> int:
        """Symbol alphabet size and samples per symbol."""
        return 1 << self.spreading_factor

    @property
    def native_rate_hz(self) -> float:
        return self.chirp_bandwidth_hz

    @property
    def symbol_duration_s(self) -> float:
        return self.n_chips / self.chirp_bandwidth_hz

    @property
    def occupied_bandwidth_hz(self) -> float:
        return self.chirp_bandwidth_hz


@dataclass(frozen=True)
class CssDemodConfig:
    """Receiver thresholds; defaults are the shipped operating point."""

    min_preamble_windows: int = 6
    peak_to_mean_min: float = 4.0
    sync_tolerance_bins: int = 1


# Chirp tables per spreading factor: base upchirp plus the constant phase
# that turns roll(base, -s) into the symbol-s waveform.
_CHIRP_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _chirp_table(sf: int) -> tuple[np.ndarray, np.ndarray]:
    cached = _CHIRP_CACHE.get(sf)
    if cached is not None:
        return cached
    n_chips = 1 << sf
    n = np.arange(n_chips)
    base = np.exp(2j * np.pi * n * (n / (2.0 * n_chips) - 0.5))
    s = np.arange(n_chips)
    # x_s[n] = base[(n+s) mod N] * exp(-j*2*pi*(s^2/(2N) - s/2))
    shift_phase = np.exp(-2j * np.pi * (s * s / (2.0 * n_chips) - s / 2.0))
    _CHIRP_CACHE[sf] = (base, shift_phase)
    return base, shift_phase


def css_modulate_symbol(symbol: int, p: CssParams) -> IQBuffer:
    """One upchirp symbol at native rate; every sample has unit magnitude."""
    n_chips = p.n_chips
    if not 0 <= symbol < n_chips:
        raise ValueError(f"symbol must be in [0, {n_chips}), got {symbol}")
    base, shift_phase = _chirp_table(p.spreading_factor)
    return IQBuffer(np.roll(base, -symbol) * shift_phase[symbol], p.native_rate_hz)


def frame_symbols(frame: Frame, p: CssParams) -> np.ndarray:
    """Data symbol values for a frame (length|payload|crc bits, SF per symbol)."""
    return bits_to_symbols(bytes_to_bits(frame.to_wire_bytes()), p.spreading_factor)


def frame_sample_count(payload_len: int, p: CssParams) -> int:
    """Total native samples of a frame with the given payload length."""
    n_chips = p.n_chips
    data_bits = 8 * (1 + payload_len + 2)
    n_data = -(-data_bits // p.spreading_factor)
    return (p.preamble_upchirps + 2 + n_data) * n_chips + 2 * n_chips + n_chips // 4


def frame_duration_s(payload_len: int, p: CssParams) -> float:
    return frame_sample_count(payload_len, p) / p.native_rate_hz


def css_modulate_frame(frame: Frame, p: CssParams) -> IQBuffer:
    n_chips = p.n_chips
    base, shift_phase = _chirp_table(p.spreading_factor)
    downchirp = np.conj(base)
    symbols = frame_symbols(frame, p)

    out = np.empty(frame_sample_count(len(frame.payload), p), dtype=np.complex128)
    pos = 0
    for _ in range(p.preamble_upchirps):
        out[pos : pos + n_chips] = base
        pos += n_chips
    for sync in SYNC_SYMBOLS:
        out[pos : pos + n_chips] = np.roll(base, -sync) * shift_phase[sync]
        pos += n_chips
    for _ in range(2):
        out[pos : pos + n_chips] = downchirp
        pos += n_chips
    quarter = n_chips // 4
    out[pos : pos + quarter] = downchirp[:quarter]
    pos += quarter
    for s in symbols:
        out[pos : pos + n_chips] = np.roll(base, -int(s)) * shift_phase[s]
        pos += n_chips
    return IQBuffer(out, p.native_rate_hz)


def _window_bins(stream: np.ndarray, starts: np.ndarray, base_conj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dechirp windows at the given start indices; return (argmax, peak/mean)."""
    n_chips = base_conj.size
    windows = stream[starts[:, None] + np.arange(n_chips)]
    spectra = np.abs(np.fft.fft(windows * base_conj, axis=1))
    peaks = spectra.max(axis=1)
    means = spectra.mean(axis=1)
    np.maximum(means, 1e-300, out=means)  # all-zero windows read ratio 0
    return spectra.argmax(axis=1), peaks / means


def _detection_candidates(stream: np.ndarray, p: CssParams, cfg: CssDemodConfig) -> list[tuple[int, int]]:
    """Scan for preamble runs; return (window_position, bin) candidates.

    Windows are examined at a quarter-symbol hop, grouped into the four
    alignment classes whose members are exactly one symbol apart.
    Scanning is chunked to bound memory on long streams.
    """
    n_chips = p.n_chips
    hop = n_chips // 4
    if stream.size < n_chips:
        return []

    candidates: list[tuple[int, int]] = []
    chunk = max(512 * n_chips, 1 << 18)
    # A run is at most preamble+sync windows long; the overlap keeps every
    # run that starts inside a chunk fully visible to that chunk's scan.
    overlap = (p.preamble_upchirps + 4) * n_chips
    for chunk_start in range(0, stream.size, chunk):
        seg = stream[chunk_start : chunk_start + chunk + overlap]
        if seg.size < n_chips:
            break
        n_rows = (seg.size - n_chips) // hop + 1
        starts = np.arange(n_rows) * hop
        base, _ = _chirp_table(p.spreading_factor)
        bins, ratios = _window_bins(seg, starts, np.conj(base))
        for phase in range(4):
            cls_bins = bins[phase::4]
            cls_ratio = ratios[phase::4]
            if cls_bins.size == 0:
                continue
            good = cls_ratio >= cfg.peak_to_mean_min
            run_len = 0
            run_bin = -1
            for i in range(cls_bins.size):
                if good[i] and cls_bins[i] == run_bin:
                    run_len += 1
                elif good[i]:
                    run_bin = int(cls_bins[i])
                    run_len = 1
                else:
                    run_bin = -1
                    run_len = 0
                if run_len == cfg.min_preamble_windows:
                    q = chunk_start + (phase + 4 * (i - run_len + 1)) * hop
                    if q < chunk_start + chunk or chunk_start == 0:
                        candidates.append((q, run_bin))
    candidates.sort()
    return candidates


def css_demodulate(
    stream: IQBuffer,
    p: CssParams,
    cfg: CssDemodConfig = CssDemodConfig(),
    cal: PowerCalibration = PowerCalibration(),
) -> list[PacketOutcome]:
    """Detect and decode every frame in a native-rate stream.

    Pure function of its inputs: no randomness, no state. Absence of
    packets yields an empty list, never an error.
    """
    n_chips = p.n_chips
    x = stream.samples
    base, _ = _chirp_table(p.spreading_factor)
    base_conj = np.conj(base)
    data_offset = 2 * n_chips + 2 * n_chips + n_chips // 4  # sync + 2.25 downchirps

    outcomes: list[PacketOutcome] = []
    consumed_until = -1

    def window_symbol(pos: int) -> tuple[int, float]:
        b, r = _window_bins(x, np.array([pos]), base_conj)
        return int(b[0]), float(r[0])

    for q, preamble_bin in _detection_candidates(x, p, cfg):
        aligned = q - preamble_bin
        if aligned < 0:
            aligned += n_chips
        if aligned <= consumed_until:
            continue

        # Walk symbol-spaced windows until the sync pair appears.
        sync_at = -1
        for k in range(p.preamble_upchirps + 4):
            pos = aligned + k * n_chips
            if pos + 2 * n_chips > x.size:
                break
            b0, _r0 = window_symbol(pos)
            if abs(b0 - SYNC_SYMBOLS[0]) <= cfg.sync_tolerance_bins:
                b1, _r1 = window_symbol(pos + n_chips)
                if abs(b1 - SYNC_SYMBOLS[1]) <= cfg.sync_tolerance_bins:
                    sync_at = pos
                    break
        if sync_at < 0:
            continue

        frame_start = sync_at - p.preamble_upchirps * n_chips
        data_start = sync_at + data_offset
        if data_start + 2 * n_chips > x.size:
            continue

        # Length byte first, then the rest of the wire bits.
        head_syms = -(-8 // p.spreading_factor)
        starts = data_start + np.arange(head_syms) * n_chips
        head_bins, _ = _window_bins(x, starts, base_conj)
        length = _symbols_to_length(head_bins, p)
        if length is None:
            continue
        total_bits = 8 * (1 + length + 2)
        n_data = -(-total_bits // p.spreading_factor)
        frame_end = data_start + n_data * n_chips
        if frame_end > x.size:
            continue
        starts = data_start + np.arange(n_data) * n_chips
        data_bins, _ = _window_bins(x, starts, base_conj)
        parsed = unpack_wire_bits(symbols_to_bits(data_bins, p.spreading_factor))
        if parsed is None:
            continue
        payload, crc_ok = parsed

        power = float(np.mean(np.abs(x[max(frame_start, 0) : frame_end]) ** 2))
        rssi = amplitude_to_dbm(np.sqrt(power), cal) if power > 0 else -np.inf
        outcomes.append(
            PacketOutcome(
                payload_decoded=payload,
                crc_ok=crc_ok,
                start_sample=stream.start_sample + frame_start,
                rssi_dbm=rssi,
            )
        )
        consumed_until = frame_end - n_chips  # allow back-to-back frames
    return outcomes


def _symbols_to_length(head_bins: np.ndarray, p: CssParams) -> int | None:
    bits = symbols_to_bits(head_bins, p.spreading_factor)
    length = int(bits_to_bytes(bits[:8])[0]) if bits.size >= 8 else 0
    if not 1 <= length <= 255:
        return None
    return length
