"""On-disk dataset format: a JSON manifest plus one binary payload per modality.

Payload layout (integers little-endian u32)::

    b"CRSD" | version | N | T | C | N*T*C little-endian f64 | CRC32

Labels, availability and splits are ASCII text with one record per window.
"""

import json
import os
import struct
import zlib
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from crossl.core.config import ModalityConfig
from crossl.core.errors import ChecksumError, DatasetError, FormatError
from crossl.core.log import logger
from crossl.data.dataset import SPLITS, MultimodalDataset

PAYLOAD_MAGIC = b"CRSD"
PAYLOAD_VERSION = 1
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"

_HEADER = struct.Struct("<4sIIII")
_U32 = struct.Struct("<I")
_UNLABELED = "unlabeled"


class ModalityEntry(ModalityConfig):
    """Manifest record of one modality."""

    payload_file: str = Field(..., description="Payload file name relative to the manifest")


class DatasetManifest(BaseModel):
    """Schema of ``manifest.json``."""

    model_config = ConfigDict(extra="forbid")

    format_version: int = Field(..., description="Manifest format version")
    num_classes: int = Field(..., gt=0, description="Number of classes")
    modalities: List[ModalityEntry] = Field(..., min_length=1, description="Modalities in model order")
    labels_file: Optional[str] = Field(default=None, description="Labels file, absent for unlabelled data")
    availability_file: str = Field(..., description="Availability flags file")
    splits_file: str = Field(..., description="Split tags file")


def encode_payload(window: np.ndarray) -> bytes:
    """Serialize a [N, T, C] window tensor."""
    n, t, c = window.shape
    body = _HEADER.pack(PAYLOAD_MAGIC, PAYLOAD_VERSION, n, t, c) + np.ascontiguousarray(
        window, dtype="<f8"
    ).tobytes()
    return body + _U32.pack(zlib.crc32(body))


def decode_payload(data: bytes) -> np.ndarray:
    """
    Parse a payload file.

    Raises:
        FormatError: Bad magic/version or size mismatch, with byte offset
        ChecksumError: CRC32 trailer mismatch
    """
    if len(data) < _HEADER.size + 4:
        raise FormatError("payload too short", offset=len(data))
    magic, version, n, t, c = _HEADER.unpack_from(data)
    if magic != PAYLOAD_MAGIC:
        raise FormatError("bad payload magic", offset=0)
    if version != PAYLOAD_VERSION:
        raise FormatError(f"unsupported payload version {version}", offset=4)
    expected = _HEADER.size + 8 * n * t * c + 4
    if len(data) != expected:
        raise FormatError(f"payload holds {len(data)} bytes, header implies {expected}", offset=min(len(data), expected))
    if _U32.unpack_from(data, len(data) - 4)[0] != zlib.crc32(data[:-4]):
        raise ChecksumError("payload checksum mismatch", offset=len(data) - 4)
    values = np.frombuffer(data, dtype="<f8", count=n * t * c, offset=_HEADER.size)
    return values.astype(np.float64).reshape(n, t, c)


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_dataset(dataset: MultimodalDataset, directory: str | Path) -> Path:
    """
    Write the manifest and payload files.

    Args:
        dataset: Dataset to persist
        directory: Target directory, created if missing

    Returns:
        Path of the written manifest
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    entries = []
    for modality, window in zip(dataset.modalities, dataset.windows):
        payload_file = f"{modality.name}.crsd"
        _write_atomic(directory / payload_file, encode_payload(window))
        entries.append(ModalityEntry(**modality.model_dump(), payload_file=payload_file))

    labels_file = None
    if dataset.labels is not None and dataset.labeled is not None:
        labels_file = "labels.txt"
        lines = [
            str(label) if keep else f"{label} {_UNLABELED}"
            for label, keep in zip(dataset.labels.tolist(), dataset.labeled.tolist())
        ]
        _write_atomic(directory / labels_file, "".join(f"{line}\n" for line in lines).encode("ascii"))

    availability = "".join(
        "".join("1" if flag else "0" for flag in row) + "\n" for row in dataset.availability.tolist()
    )
    _write_atomic(directory / "availability.txt", availability.encode("ascii"))
    _write_atomic(
        directory / "splits.txt", "".join(f"{split}\n" for split in dataset.splits.tolist()).encode("ascii")
    )

    manifest = DatasetManifest(
        format_version=MANIFEST_VERSION,
        num_classes=dataset.num_classes,
        modalities=entries,
        labels_file=labels_file,
        availability_file="availability.txt",
        splits_file="splits.txt",
    )
    manifest_path = directory / MANIFEST_NAME
    text = json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
    _write_atomic(manifest_path, text.encode("utf-8"))
    logger.info("Saved dataset", extra={"path": str(directory), "samples": dataset.size})
    return manifest_path


def _read_lines(directory: Path, name: str, field: str) -> list[str]:
    path = directory / name
    try:
        text = path.read_text(encoding="ascii")
    except FileNotFoundError as e:
        raise DatasetError(f"file not found: {path}", field=field) from e
    except UnicodeDecodeError as e:
        raise DatasetError(f"{path} is not ASCII", field=field) from e
    return text.splitlines()


def load_dataset(manifest_path: str | Path) -> MultimodalDataset:
    """
    Load and validate a dataset written by ``save_dataset``.

    Args:
        manifest_path: Path of ``manifest.json`` (or its directory)

    Returns:
        MultimodalDataset

    Raises:
        DatasetError: Missing file, dimension mismatch against the manifest or
            label out of range; the message names the offending field
        FormatError: Corrupt payload file
    """
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_NAME
    directory = manifest_path.parent
    try:
        manifest = DatasetManifest.model_validate_json(manifest_path.read_bytes())
    except FileNotFoundError as e:
        raise DatasetError(f"file not found: {manifest_path}", field="manifest") from e
    except ValidationError as e:
        first = e.errors()[0]
        raise DatasetError(first["msg"], field=".".join(str(p) for p in first["loc"]) or "manifest") from e
    if manifest.format_version != MANIFEST_VERSION:
        raise DatasetError(f"unsupported version {manifest.format_version}", field="format_version")

    windows = []
    for index, entry in enumerate(manifest.modalities):
        field = f"modalities[{index}]"
        path = directory / entry.payload_file
        try:
            window = decode_payload(path.read_bytes())
        except FileNotFoundError as e:
            raise DatasetError(f"file not found: {path}", field=f"{field}.payload_file") from e
        _, t, c = window.shape
        if t != entry.window_len:
            raise DatasetError(f"payload has {t} rows, manifest declares {entry.window_len}", field=f"{field}.window_len")
        if c != entry.channels:
            raise DatasetError(f"payload has {c} channels, manifest declares {entry.channels}", field=f"{field}.channels")
        windows.append(window)

    n = windows[0].shape[0]
    for index, window in enumerate(windows):
        if window.shape[0] != n:
            raise DatasetError(f"{window.shape[0]} windows, expected {n}", field=f"modalities[{index}]")

    m = len(windows)
    availability_lines = _read_lines(directory, manifest.availability_file, "availability_file")
    if len(availability_lines) != n or any(len(line) != m or set(line) - {"0", "1"} for line in availability_lines):
        raise DatasetError(f"expected {n} lines of {m} '0'/'1' flags", field="availability_file")
    availability = np.array([[flag == "1" for flag in line] for line in availability_lines], dtype=bool).reshape(n, m)

    splits = _read_lines(directory, manifest.splits_file, "splits_file")
    if len(splits) != n or set(splits) - set(SPLITS):
        raise DatasetError(f"expected {n} lines from {SPLITS}", field="splits_file")

    labels = labeled = None
    if manifest.labels_file is not None:
        label_lines = _read_lines(directory, manifest.labels_file, "labels_file")
        if len(label_lines) != n:
            raise DatasetError(f"{len(label_lines)} labels for {n} windows", field="labels_file")
        values, flags = [], []
        for number, line in enumerate(label_lines, start=1):
            parts = line.split()
            if not parts or len(parts) > 2 or (len(parts) == 2 and parts[1] != _UNLABELED):
                raise DatasetError(f"malformed line {number}: {line!r}", field="labels_file")
            try:
                value = int(parts[0])
            except ValueError as e:
                raise DatasetError(f"malformed line {number}: {line!r}", field="labels_file") from e
            if not 0 <= value < manifest.num_classes:
                raise DatasetError(
                    f"label {value} on line {number} outside [0, {manifest.num_classes})", field="labels_file"
                )
            values.append(value)
            flags.append(len(parts) == 1)
        labels = np.array(values, dtype=np.int64)
        labeled = np.array(flags, dtype=bool)

    modalities = tuple(ModalityConfig(**entry.model_dump(exclude={"payload_file"})) for entry in manifest.modalities)
    dataset = MultimodalDataset(
        modalities=modalities,
        windows=tuple(windows),
        availability=availability,
        splits=np.array(splits),
        num_classes=manifest.num_classes,
        labels=labels,
        labeled=labeled,
    )
    logger.info("Loaded dataset", extra={"path": str(directory), "samples": n, "modalities": m})
    return dataset
