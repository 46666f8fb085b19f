"""Checkpoint persistence: framed binary with a text header.

Layout: magic, 8-byte little-endian header length, UTF-8 JSON header
(format version, architecture, task, trained coverage, optional calibration
result), float64 little-endian parameter payload in declaration order
followed by batchnorm running statistics, and an 8-byte checksum trailer
(leading bytes of SHA-256 over everything before it). The binary payload
makes round-trips bit-exact; the text header keeps files inspectable.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .calibrate import CalibrationResult
from .model import ArchitectureConfig, SelectiveNet

__all__ = ["save_model", "load_model", "IntegrityError", "VersionError"]

_MAGIC = b"SPCKPT\x00"
FORMAT_VERSION = 1


class IntegrityError(IOError):
    """Checksum mismatch or truncated checkpoint file."""


class VersionError(IOError):
    """Checkpoint format version is not supported by this reader."""


def _model_arrays(model):
    return [p.data for p in model.parameters()] + model.running_stats()


def save_model(model, calibration, path, inference_only=False):
    """Write a checkpoint; optionally drop the training-only auxiliary head."""
    if inference_only and model.h_head is not None:
        slim = SelectiveNet(
            ArchitectureConfig(**{**model.config.to_dict(),
                                  "auxiliary_head": False}),
            model.seed, selective=model.selective)
        src = {id(p) for p in model.h_head.parameters()}
        kept = [p.data for p in model.parameters() if id(p) not in src]
        for dst, val in zip(slim.parameters(), kept):
            dst.data = val.copy()
        for dst, val in zip(slim.running_stats(), model.running_stats()):
            dst[...] = val
        slim.target_coverage = model.target_coverage
        model = slim

    arrays = _model_arrays(model)
    header = {
        "format_version": FORMAT_VERSION,
        "architecture": model.config.to_dict(),
        "selective": model.selective,
        "seed": model.seed,
        "trained_coverage": model.target_coverage,
        "calibration": calibration.to_dict() if calibration else None,
        "array_sizes": [int(a.size) for a in arrays],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                       for a in arrays)
    body = _MAGIC + struct.pack("<Q", len(header_bytes)) + header_bytes + payload
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(hashlib.sha256(body).digest()[:8])


def load_model(path):
    """Read a checkpoint; returns ``(model, calibration_or_None)``.

    Fails loudly: wrong magic or version, or any corrupted byte, raises
    before any model state is built.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_MAGIC) + 16 or not blob.startswith(_MAGIC):
        raise IntegrityError(f"{path}: not a checkpoint file")
    body, trailer = blob[:-8], blob[-8:]
    if hashlib.sha256(body).digest()[:8] != trailer:
        raise IntegrityError(f"{path}: checksum mismatch")
    off = len(_MAGIC)
    (hlen,) = struct.unpack_from("<Q", body, off)
    off += 8
    header = json.loads(body[off:off + hlen].decode("utf-8"))
    off += hlen
    if header["format_version"] != FORMAT_VERSION:
        raise VersionError(
            f"{path}: format version {header['format_version']} not supported "
            f"(reader supports {FORMAT_VERSION})")

    config = ArchitectureConfig.from_dict(header["architecture"])
    model = SelectiveNet(config, header["seed"], selective=header["selective"])
    model.target_coverage = header["trained_coverage"]
    arrays = _model_arrays(model)
    sizes = header["array_sizes"]
    if sizes != [int(a.size) for a in arrays]:
        raise IntegrityError(f"{path}: payload layout does not match architecture")
    expected = 8 * sum(sizes)
    if len(body) - off != expected:
        raise IntegrityError(f"{path}: payload truncated")
    for a in arrays:
        n = a.size * 8
        a[...] = np.frombuffer(body[off:off + n], dtype="<f8").reshape(a.shape)
        off += n
    calib = (CalibrationResult.from_dict(header["calibration"])
             if header["calibration"] else None)
    return model, calib
