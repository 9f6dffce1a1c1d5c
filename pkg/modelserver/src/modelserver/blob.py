"""Wire codec for latent tensors.

A blob is a JSON object with three fields: ``shape`` (four positive ints,
L x C x h x w), ``data`` (base64 of the little-endian float32 buffer), and
``crc32`` (checksum of the raw buffer, unsigned). Both sides of the protocol
validate structure, length, and checksum before touching the numbers.
"""

import base64
import binascii

import numpy as np


class BlobError(ValueError):
    """A latent blob failed structural or checksum validation."""


def encode(array: np.ndarray) -> dict:
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim != 4:
        raise BlobError(f"latent tensor must have 4 dims, got {arr.ndim}")
    payload = arr.tobytes()
    return {
        "shape": [int(d) for d in arr.shape],
        "data": base64.b64encode(payload).decode("ascii"),
        "crc32": binascii.crc32(payload) & 0xFFFFFFFF,
    }


def decode(obj) -> np.ndarray:
    if not isinstance(obj, dict):
        raise BlobError("latent blob must be an object")
    try:
        shape = tuple(int(d) for d in obj["shape"])
        data_b64 = obj["data"]
        crc = int(obj["crc32"])
    except (KeyError, TypeError, ValueError) as e:
        raise BlobError(f"latent blob missing or invalid field: {e}") from e
    if len(shape) != 4 or any(d <= 0 for d in shape):
        raise BlobError(f"latent blob shape must be 4 positive dims, got {shape}")
    if not isinstance(data_b64, str):
        raise BlobError("latent blob data must be a base64 string")
    try:
        payload = base64.b64decode(data_b64, validate=True)
    except (binascii.Error, TypeError) as e:
        raise BlobError(f"latent blob base64 invalid: {e}") from e
    expected = int(np.prod(shape)) * 4
    if len(payload) != expected:
        raise BlobError(
            f"latent blob payload is {len(payload)} bytes, expected {expected}")
    if binascii.crc32(payload) & 0xFFFFFFFF != crc:
        raise BlobError("latent blob checksum mismatch")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
