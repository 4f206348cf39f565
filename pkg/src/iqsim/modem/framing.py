"""Payload framing shared by all modems: CRC-16 integrity and bit packing.

The CRC is CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection,
no final xor). Check value: crc16(b"123456789") == 0x29B1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_PAYLOAD_BYTES = 255

# FSK/DBPSK byte framing: preamble 0xAA x4, sync word 0x2DD4, then
# length byte | payload | crc16 (big-endian).
BYTE_PREAMBLE = bytes([0xAA] * 4)
SYNC_WORD = bytes([0x2D, 0xD4])


def _build_crc_table() -> np.ndarray:
    table = np.zeros(256, dtype=np.uint16)
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) if crc & 0x8000 else (crc << 1)
            crc &= 0xFFFF
        table[byte] = crc
    return table


_CRC_TABLE = _build_crc_table()


def crc16(payload: bytes) -> int:
    """CRC-16/CCITT-FALSE over a byte string."""
    crc = 0xFFFF
    for byte in payload:
        crc = ((crc << 8) & 0xFFFF) ^ int(_CRC_TABLE[(crc >> 8) ^ byte])
    return crc


@dataclass(frozen=True)
class Frame:
    """One payload plus its integrity checksum."""

    payload: bytes
    crc: int = field(init=False)

    def __post_init__(self):
        if not 1 <= len(self.payload) <= MAX_PAYLOAD_BYTES:
            raise ValueError(f"payload must be 1..{MAX_PAYLOAD_BYTES} bytes, got {len(self.payload)}")
        object.__setattr__(self, "payload", bytes(self.payload))
        object.__setattr__(self, "crc", crc16(self.payload))

    def to_wire_bytes(self) -> bytes:
        """length byte | payload | crc16, the on-air byte layout."""
        return bytes([len(self.payload)]) + self.payload + self.crc.to_bytes(2, "big")


@dataclass
class PacketOutcome:
    """Result of one demodulation attempt at a gateway.

    `device_id` is the ground-truth link filled in by scoring, never by the
    demodulator itself. `start_sample` is on the timeline of the stream the
    demodulator consumed.
    """

    payload_decoded: bytes
    crc_ok: bool
    start_sample: int
    rssi_dbm: float
    detected: bool = True
    gateway_id: str = ""
    device_id: str | None = None

    def __post_init__(self):
        if self.crc_ok and not self.detected:
            raise ValueError("crc_ok implies detected")


def bytes_to_bits(data: bytes) -> np.ndarray:
    """MSB-first bit array (uint8 of 0/1)."""
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def bits_to_bytes(bits: np.ndarray) -> bytes:
    """Inverse of bytes_to_bits; trailing partial byte is dropped."""
    usable = (len(bits) // 8) * 8
    return np.packbits(np.asarray(bits[:usable], dtype=np.uint8)).tobytes()


def bits_to_symbols(bits: np.ndarray, bits_per_symbol: int) -> np.ndarray:
    """Group MSB-first bits into symbol values, zero-padding the tail."""
    n_sym = -(-len(bits) // bits_per_symbol)
    padded = np.zeros(n_sym * bits_per_symbol, dtype=np.uint8)
    padded[: len(bits)] = bits
    weights = 1 << np.arange(bits_per_symbol - 1, -1, -1, dtype=np.int64)
    return padded.reshape(n_sym, bits_per_symbol) @ weights


def symbols_to_bits(symbols: np.ndarray, bits_per_symbol: int) -> np.ndarray:
    """Inverse of bits_to_symbols (including any pad bits at the tail)."""
    symbols = np.asarray(symbols, dtype=np.int64)
    shifts = np.arange(bits_per_symbol - 1, -1, -1, dtype=np.int64)
    return ((symbols[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def unpack_wire_bits(bits: np.ndarray) -> tuple[bytes, bool] | None:
    """Parse length|payload|crc from a demodulated bit array.

    Returns (payload, crc_ok), or None if the bits cannot hold a frame
    (bad length byte or truncated stream).
    """
    if len(bits) < 8:
        return None
    length = int(bits_to_bytes(bits[:8])[0])
    if not 1 <= length <= MAX_PAYLOAD_BYTES:
        return None
    total_bits = 8 * (1 + length + 2)
    if len(bits) < total_bits:
        return None
    wire = bits_to_bytes(bits[:total_bits])
    payload = wire[1 : 1 + length]
    crc_rx = int.from_bytes(wire[1 + length : 3 + length], "big")
    return payload, crc_rx == crc16(payload)
