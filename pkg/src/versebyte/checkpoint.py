"""Binary checkpoint container.

Layout: magic ``VBT1``, format version (u32 LE), canonical-JSON config
(u64 LE length prefix), then one blob per parameter in canonical name
order (u64 LE byte length, raw little-endian float32 data), and a
trailing CRC-32 (u32 LE) over all preceding bytes.
"""

import json
import struct
import zlib

import numpy as np

from .autodiff import Tensor
from .model import ModelConfig, ModelParams, param_shapes

MAGIC = b"VBT1"
FORMAT_VERSION = 1
_MAX_CONFIG_BYTES = 1 << 20


class CheckpointError(Exception):
    """Base class for unreadable or damaged checkpoint files."""


class BadMagicError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


def _canonical_config_bytes(config: ModelConfig) -> bytes:
    return json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(params: ModelParams, config: ModelConfig, path) -> None:
    """Write params + config; the round trip through load is bit-exact."""
    payload = bytearray()
    payload += MAGIC
    payload += struct.pack("<I", FORMAT_VERSION)
    cfg = _canonical_config_bytes(config)
    payload += struct.pack("<Q", len(cfg))
    payload += cfg
    for name in param_shapes(config):
        blob = np.ascontiguousarray(params[name].data, dtype="<f4").tobytes()
        payload += struct.pack("<Q", len(blob))
        payload += blob
    payload += struct.pack("<I", zlib.crc32(bytes(payload)))
    with open(path, "wb") as fh:
        fh.write(bytes(payload))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedError(
                f"checkpoint ends at byte {len(self.buf)}, needed {self.pos + n}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out


def _parse_header(reader: _Reader) -> ModelConfig:
    magic = reader.take(4)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<I", reader.take(4))
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack("<Q", reader.take(8))
    if cfg_len > _MAX_CONFIG_BYTES:
        raise CheckpointError(f"implausible config length {cfg_len}")
    try:
        return ModelConfig.from_dict(json.loads(reader.take(cfg_len).decode("utf-8")))
    except (ValueError, TypeError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"unreadable checkpoint config: {exc}") from exc


def _expected_total(buf: bytes) -> int:
    """Full file size implied by the header, for truncation diagnosis."""
    reader = _Reader(buf)
    config = _parse_header(reader)
    total = reader.pos
    for shape in param_shapes(config).values():
        total += 8 + 4 * int(np.prod(shape))
    return total + 4


def load_checkpoint(path):
    """Read a checkpoint back into (ModelParams, ModelConfig).

    Raises TruncatedError for files that stop early, ChecksumError when the
    CRC does not match, BadMagicError / UnsupportedVersionError for files
    from a different format or version.
    """
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 20:
        raise TruncatedError(f"checkpoint is only {len(buf)} bytes")

    (stored_crc,) = struct.unpack("<I", buf[-4:])
    if zlib.crc32(buf[:-4]) != stored_crc:
        # distinguish a clean truncation from in-place corruption; a file
        # whose header parses but claims more bytes than exist was cut short
        try:
            total = _expected_total(buf)
            if total > len(buf):
                raise TruncatedError(
                    f"checkpoint is {len(buf)} bytes but header implies {total}")
        except TruncatedError:
            raise
        except CheckpointError:
            pass
        raise ChecksumError("checkpoint CRC mismatch: file is corrupted")

    reader = _Reader(buf[:-4])
    config = _parse_header(reader)
    tensors = {}
    for name, shape in param_shapes(config).items():
        (blob_len,) = struct.unpack("<Q", reader.take(8))
        expected = 4 * int(np.prod(shape))
        if blob_len != expected:
            raise CheckpointError(
                f"parameter {name}: blob is {blob_len} bytes, expected {expected}")
        data = np.frombuffer(reader.take(blob_len), dtype="<f4").reshape(shape)
        tensors[name] = Tensor(data.copy(), requires_grad=True)
    if reader.pos != len(reader.buf):
        raise CheckpointError(f"{len(reader.buf) - reader.pos} unexpected trailing bytes")
    return ModelParams(config, tensors), config
