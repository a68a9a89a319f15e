"""Binary checkpoint format.

Layout (all integers little-endian u32)::

    b"CRSL" | version | header length | header (UTF-8 JSON)
    then per parameter: name length | name | rank | dims... | f64 payload
    then CRC32 of every preceding byte
"""

import hashlib
import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from crossl.core.config import AggregatorSpec, EncoderSpec, ModalityConfig
from crossl.core.errors import ChecksumError, FormatError
from crossl.core.log import logger
from crossl.kernel import Parameter
from crossl.model.network import ModelState, parameter_shapes

MAGIC = b"CRSL"
CHECKPOINT_VERSION = 1

_U32 = struct.Struct("<I")


def checkpoint_bytes(state: ModelState) -> bytes:
    """Serialize a model; identical states give identical bytes."""
    header = json.dumps(state.spec_document(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, _U32.pack(CHECKPOINT_VERSION), _U32.pack(len(header)), header]
    for name, param in state.params.items():
        encoded = name.encode("utf-8")
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(param.value.ndim))
        parts.extend(_U32.pack(dim) for dim in param.shape)
        parts.append(np.ascontiguousarray(param.value, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body))


def checkpoint_id(state: ModelState) -> str:
    """Hex sha256 of the serialized checkpoint."""
    return hashlib.sha256(checkpoint_bytes(state)).hexdigest()


class _Reader:
    def __init__(self, data: bytes, end: int):
        self.data = data
        self.end = end
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > self.end:
            raise FormatError(f"truncated {what}", offset=self.offset)
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def parse_checkpoint(data: bytes) -> ModelState:
    """
    Rebuild a model from checkpoint bytes.

    Args:
        data: Complete file contents

    Returns:
        ModelState, bit-identical to the one serialized

    Raises:
        FormatError: Bad magic, unsupported version, truncation or malformed
            structure; the message carries the byte offset
        ChecksumError: CRC32 trailer mismatch
    """
    if len(data) < 16:
        raise FormatError("file too short to be a checkpoint", offset=len(data))
    if data[:4] != MAGIC:
        raise FormatError("bad magic, not a crossl checkpoint", offset=0)
    version = _U32.unpack(data[4:8])[0]
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported format version {version}", offset=4)

    body_end = len(data) - 4
    reader = _Reader(data, body_end)
    reader.offset = 8
    header_len = reader.u32("header length")
    header_offset = reader.offset
    try:
        header = json.loads(reader.take(header_len, "header").decode("utf-8"))
        modalities = [ModalityConfig.model_validate(m) for m in header["modalities"]]
        encoder = EncoderSpec.model_validate(header["encoder"])
        aggregator = AggregatorSpec.model_validate(header["aggregator"])
        num_classes = int(header["num_classes"])
        trainable = dict(header["trainable"])
    except FormatError:
        raise
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError, ValidationError) as e:
        raise FormatError(f"invalid header: {e}", offset=header_offset) from e

    expected = parameter_shapes(modalities, encoder, aggregator, num_classes)
    values: dict[str, np.ndarray] = {}
    while reader.offset < body_end:
        start = reader.offset
        name_len = reader.u32("parameter name length")
        try:
            name = reader.take(name_len, "parameter name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError("parameter name is not UTF-8", offset=start) from e
        rank = reader.u32("parameter rank")
        dims = tuple(reader.u32("parameter dims") for _ in range(rank))
        if expected.get(name) != dims:
            raise FormatError(f"unexpected parameter {name!r} with shape {dims}", offset=start)
        size = int(np.prod(dims, dtype=np.int64))
        payload = reader.take(8 * size, f"payload of {name}")
        values[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)

    if list(values) != list(expected):
        raise FormatError("parameter set does not match the header specs", offset=reader.offset)

    stored = _U32.unpack(data[body_end:])[0]
    if stored != zlib.crc32(data[:body_end]):
        raise ChecksumError("checksum mismatch", offset=body_end)

    params = {
        name: Parameter(value, name=name, trainable=bool(trainable.get(name, True)))
        for name, value in values.items()
    }
    return ModelState(modalities, encoder, aggregator, num_classes, params)


def save_checkpoint(state: ModelState, path: str | Path) -> None:
    """
    Write a checkpoint atomically (temporary file, then rename).

    Args:
        state: Model to persist
        path: Destination file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(checkpoint_bytes(state))
    os.replace(tmp, path)
    logger.debug("Saved checkpoint", extra={"path": str(path)})


def load_checkpoint(path: str | Path) -> ModelState:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Raises:
        FormatError: If the file is malformed (see ``parse_checkpoint``)
        OSError: If the file cannot be read
    """
    return parse_checkpoint(Path(path).read_bytes())
