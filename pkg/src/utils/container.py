"""
Versioned binary containers

Layout (little-endian):
    magic      4 bytes
    version    uint16
    header_len uint32
    header     UTF-8 JSON (sorted keys), lists the block shapes
    blocks     row-major float64 arrays, back to back
"""
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from src.exceptions import InputError

logger = logging.getLogger(__name__)

_PREFIX = struct.Struct("<4sHI")


def write_container(
    path: Path,
    magic: bytes,
    version: int,
    header: Dict[str, Any],
    blocks: Sequence[np.ndarray]
) -> Path:
    """
    Write header and float64 blocks to a binary container

    Args:
        path: Destination file
        magic: 4-byte format tag
        version: Format version
        header: JSON-serializable metadata
        blocks: Arrays stored as float64 in order

    Returns:
        Path written
    """
    arrays = [np.ascontiguousarray(b, dtype="<f8") for b in blocks]
    full_header = dict(header)
    full_header["blocks"] = [list(a.shape) for a in arrays]
    header_bytes = json.dumps(full_header, sort_keys=True, ensure_ascii=False).encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(magic, version, len(header_bytes)))
        f.write(header_bytes)
        for a in arrays:
            f.write(a.tobytes())
    logger.debug(f"Wrote {magic.decode()} container {path} ({len(arrays)} blocks)")
    return path


def read_container(path: Path, magic: bytes, version: int) -> Tuple[Dict[str, Any], List[np.ndarray]]:
    """
    Read a container written by `write_container`

    Returns:
        (header, blocks); raises InputError on a malformed file
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _PREFIX.size:
        raise InputError(f"{path}: truncated container")
    found_magic, found_version, header_len = _PREFIX.unpack_from(data, 0)
    if found_magic != magic:
        raise InputError(f"{path}: expected {magic!r} container, found {found_magic!r}")
    if found_version != version:
        raise InputError(f"{path}: unsupported version {found_version} (expected {version})")

    offset = _PREFIX.size
    try:
        header = json.loads(data[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise InputError(f"{path}: corrupt header ({e})") from e
    offset += header_len

    blocks = []
    for shape in header.get("blocks", []):
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(data):
            raise InputError(f"{path}: truncated block of shape {shape}")
        blocks.append(np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64))
        offset += nbytes
    if offset != len(data):
        raise InputError(f"{path}: {len(data) - offset} trailing bytes")
    return header, blocks
