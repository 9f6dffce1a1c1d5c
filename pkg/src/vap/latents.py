"""Latent encoding, resampling, serialization, and the on-disk memory bank.

The encoder is a fixed bank of eight linear block filters over an 8x8
spatial grid: overall mean, per-channel RGB means, horizontal and vertical
gray gradients, temporal gray difference, and gray variance. It is cheap,
deterministic, and sensitive to exactly the things a dynamics predictor can
get wrong (appearance, motion, texture), which is all the selection stage
needs from it.
"""

from __future__ import annotations

import binascii
import hashlib
import json
import logging
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptEntry, FingerprintMismatch, RemoteProtocolError, ShapeMismatch
from .ingest import GRID, VideoClip

log = logging.getLogger("vap.latents")

CHANNELS = (
    "mean", "red", "green", "blue",
    "grad_x", "grad_y", "temporal_diff", "variance",
)

BANK_DIR_ENV = "VAP_BANK_DIR"


@dataclass(frozen=True)
class EncoderConfig:
    spatial_stride: int = GRID
    temporal_stride: int = 1
    channel_filters: tuple[str, ...] = CHANNELS

    def __post_init__(self):
        if self.spatial_stride != GRID:
            raise ShapeMismatch(f"spatial_stride is fixed at {GRID}")
        if self.temporal_stride not in (1, 4):
            raise ShapeMismatch(
                f"temporal_stride must be 1 or 4, got {self.temporal_stride}")
        if self.channel_filters != CHANNELS:
            raise ShapeMismatch("channel_filters is a fixed bank; do not override")

    @property
    def channels(self) -> int:
        return len(self.channel_filters)

    @property
    def fingerprint(self) -> str:
        desc = f"v1|s{self.spatial_stride}|t{self.temporal_stride}|" + ",".join(self.channel_filters)
        return hashlib.sha256(desc.encode()).hexdigest()[:16]


@dataclass(eq=False)
class LatentFrame:
    """One latent grid (C, h, w) float32; source_index is None for generated frames."""

    grid: np.ndarray
    source_index: int | None

    @property
    def is_generated(self) -> bool:
        return self.source_index is None


@dataclass(eq=False)
class LatentSequence:
    video_id: str
    encoder_fingerprint: str
    latents: list[LatentFrame]

    def __len__(self) -> int:
        return len(self.latents)

    def stack(self) -> np.ndarray:
        """(L, C, h, w) float32 view of the sequence."""
        return np.stack([lf.grid for lf in self.latents])

    def source_indices(self) -> list[int]:
        return [-1 if lf.source_index is None else lf.source_index
                for lf in self.latents]


def _block_stats(pixels: np.ndarray, prev_gray_mean: np.ndarray | None) -> np.ndarray:
    """Filter bank over one batch of frames.

    pixels: (T, H, W, 3) float32 in [0, 1]. Returns (T, C, h, w) float32.
    prev_gray_mean: (h, w) block gray means preceding the batch, or None.
    """
    t, height, width, _ = pixels.shape
    h, w = height // GRID, width // GRID

    gray = pixels.mean(axis=3)
    gb = gray.reshape(t, h, GRID, w, GRID)

    mean_all = pixels.reshape(t, h, GRID, w, GRID, 3).mean(axis=(2, 4, 5))
    rgb = pixels.reshape(t, h, GRID, w, GRID, 3).mean(axis=(2, 4))

    grad_x = np.diff(gb, axis=4).mean(axis=(2, 4))
    grad_y = np.diff(gb, axis=2).mean(axis=(2, 4))

    gmean = gb.mean(axis=(2, 4))
    tdiff = np.empty_like(gmean)
    tdiff[1:] = gmean[1:] - gmean[:-1]
    tdiff[0] = 0.0 if prev_gray_mean is None else gmean[0] - prev_gray_mean

    var = gb.var(axis=(2, 4))

    out = np.stack(
        [mean_all, rgb[..., 0], rgb[..., 1], rgb[..., 2],
         grad_x, grad_y, tdiff, var],
        axis=1,
    )
    return out.astype(np.float32)


def encode_clip(clip: VideoClip, config: EncoderConfig | None = None) -> LatentSequence:
    """Encode every frame (or 4-frame block) of a clip into latent grids."""
    config = config or EncoderConfig()
    total = len(clip)
    if total == 0:
        raise ShapeMismatch(f"clip {clip.video_id} has no frames")
    if clip.width % GRID or clip.height % GRID:
        raise ShapeMismatch(
            f"frame size {clip.width}x{clip.height} not divisible by {GRID}")

    pixels = clip.pixel_array().astype(np.float32) / 255.0

    if config.temporal_stride == 4:
        length = -(-total // 4)  # ceil
        pooled = np.empty((length,) + pixels.shape[1:], dtype=np.float32)
        sources = []
        for i in range(length):
            chunk = pixels[i * 4:(i + 1) * 4]
            pooled[i] = chunk.mean(axis=0)
            sources.append(i * 4)
        pixels = pooled
    else:
        sources = list(range(total))

    grids = _block_stats(pixels, prev_gray_mean=None)
    frames = [LatentFrame(grid=grids[i], source_index=sources[i])
              for i in range(grids.shape[0])]
    return LatentSequence(clip.video_id, config.fingerprint, frames)


def encode_frames(pixel_frames: list[np.ndarray], video_id: str = "",
                  config: EncoderConfig | None = None) -> LatentSequence:
    """Encode bare (H, W, 3) uint8 arrays; used by servers that get raw frames."""
    config = config or EncoderConfig()
    if not pixel_frames:
        raise ShapeMismatch("no frames to encode")
    arr = np.stack(pixel_frames).astype(np.float32) / 255.0
    if arr.shape[1] % GRID or arr.shape[2] % GRID:
        raise ShapeMismatch(f"frame size {arr.shape[2]}x{arr.shape[1]} not divisible by {GRID}")
    if config.temporal_stride != 1:
        raise ShapeMismatch("encode_frames supports temporal_stride=1 only")
    grids = _block_stats(arr, prev_gray_mean=None)
    frames = [LatentFrame(grid=grids[i], source_index=i) for i in range(len(pixel_frames))]
    return LatentSequence(video_id, config.fingerprint, frames)


def upsample_to_length(seq: LatentSequence, target_length: int,
                       method: str = "linear") -> LatentSequence:
    """Stretch a latent sequence to target_length frames.

    ``nearest`` repeats source grids (index floor(j*L/T)); ``linear``
    interpolates between neighbours with exact endpoints. Original grids are
    reused by reference wherever a target position lands exactly on one.
    """
    length = len(seq)
    if length == 0:
        raise ShapeMismatch("cannot upsample an empty sequence")
    if target_length < 1:
        raise ShapeMismatch(f"target_length must be >= 1, got {target_length}")
    if method not in ("nearest", "linear"):
        raise ShapeMismatch(f"method must be nearest|linear, got {method!r}")

    if target_length == length:
        return LatentSequence(seq.video_id, seq.encoder_fingerprint, list(seq.latents))

    out: list[LatentFrame] = []
    if method == "nearest":
        for j in range(target_length):
            src = seq.latents[j * length // target_length]
            out.append(LatentFrame(grid=src.grid, source_index=src.source_index))
    else:
        if length == 1:
            for _ in range(target_length):
                out.append(LatentFrame(grid=seq.latents[0].grid,
                                       source_index=seq.latents[0].source_index))
        else:
            denom = max(target_length - 1, 1)
            for j in range(target_length):
                pos = j * (length - 1) / denom
                lo = int(pos)
                frac = pos - lo
                if frac == 0.0:
                    src = seq.latents[lo]
                    out.append(LatentFrame(grid=src.grid, source_index=src.source_index))
                else:
                    blended = ((1.0 - frac) * seq.latents[lo].grid
                               + frac * seq.latents[lo + 1].grid).astype(np.float32)
                    out.append(LatentFrame(grid=blended, source_index=None))
    return LatentSequence(seq.video_id, seq.encoder_fingerprint, out)


# --- wire blob (shared with the predictor protocol) ---------------------------

def blob_encode(array: np.ndarray) -> dict:
    """Pack an (L, C, h, w) float32 array into the JSON wire form."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    payload = arr.tobytes()
    import base64
    return {
        "shape": [int(d) for d in arr.shape],
        "data": base64.b64encode(payload).decode("ascii"),
        "crc32": binascii.crc32(payload) & 0xFFFFFFFF,
    }


def blob_decode(obj) -> np.ndarray:
    """Inverse of blob_encode; validates structure, length, and checksum."""
    import base64
    if not isinstance(obj, dict):
        raise RemoteProtocolError("latent blob must be an object")
    try:
        shape = tuple(int(d) for d in obj["shape"])
        data_b64 = obj["data"]
        crc = int(obj["crc32"])
    except (KeyError, TypeError, ValueError) as e:
        raise RemoteProtocolError(f"latent blob missing/invalid field: {e}") from e
    if len(shape) != 4 or any(d <= 0 for d in shape):
        raise RemoteProtocolError(f"latent blob shape must be 4 positive dims, got {shape}")
    try:
        payload = base64.b64decode(data_b64, validate=True)
    except (binascii.Error, TypeError) as e:
        raise RemoteProtocolError(f"latent blob base64 invalid: {e}") from e
    expected = int(np.prod(shape)) * 4
    if len(payload) != expected:
        raise RemoteProtocolError(
            f"latent blob payload is {len(payload)} bytes, expected {expected}")
    if binascii.crc32(payload) & 0xFFFFFFFF != crc:
        raise RemoteProtocolError("latent blob checksum mismatch")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()


# --- .lat file format ----------------------------------------------------------

_MAGIC = b"VAPL"


def sequence_to_bytes(seq: LatentSequence,
                      predictor_fingerprint: str | None = None) -> bytes:
    stacked = np.ascontiguousarray(seq.stack(), dtype="<f4")
    payload = stacked.tobytes()
    header = json.dumps({
        "shape": list(stacked.shape),
        "encoder_fingerprint": seq.encoder_fingerprint,
        "predictor_fingerprint": predictor_fingerprint,
        "video_id": seq.video_id,
        "source_indices": seq.source_indices(),
        "crc32": binascii.crc32(payload) & 0xFFFFFFFF,
    }, sort_keys=True).encode("utf-8")
    return _MAGIC + struct.pack("<I", len(header)) + header + payload


def sequence_from_bytes(data: bytes) -> LatentSequence:
    if len(data) < 8 or data[:4] != _MAGIC:
        raise CorruptEntry("bad magic")
    (hlen,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + hlen:
        raise CorruptEntry("truncated header")
    try:
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
        shape = tuple(int(d) for d in header["shape"])
        fp = str(header["encoder_fingerprint"])
        video_id = str(header["video_id"])
        sources = [int(s) for s in header["source_indices"]]
        crc = int(header["crc32"])
    except (ValueError, KeyError, UnicodeDecodeError) as e:
        raise CorruptEntry(f"bad header: {e}") from e
    payload = data[8 + hlen:]
    if len(payload) != int(np.prod(shape)) * 4:
        raise CorruptEntry("truncated payload")
    if binascii.crc32(payload) & 0xFFFFFFFF != crc:
        raise CorruptEntry("checksum mismatch")
    if len(sources) != shape[0]:
        raise CorruptEntry("source index count disagrees with shape")
    stacked = np.frombuffer(payload, dtype="<f4").reshape(shape)
    frames = [LatentFrame(grid=stacked[i].copy(),
                          source_index=None if sources[i] < 0 else sources[i])
              for i in range(shape[0])]
    return LatentSequence(video_id, fp, frames)


# --- memory bank -----------------------------------------------------------------

@dataclass(frozen=True)
class CacheKey:
    video_id: str
    encoder_fingerprint: str
    role: str = "real"  # "real" | "generated"
    predictor_fingerprint: str | None = None

    def __post_init__(self):
        if self.role not in ("real", "generated"):
            raise CorruptEntry(f"role must be real|generated, got {self.role!r}")
        if (self.role == "generated") != (self.predictor_fingerprint is not None):
            raise CorruptEntry("generated entries need a predictor fingerprint; real ones must not have one")


@dataclass
class BankStat:
    entries: int
    total_bytes: int
    hits: int = 0
    misses: int = 0


def default_bank_root() -> Path:
    env = os.environ.get(BANK_DIR_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "vap" / "bank"


class MemoryBank:
    """Disk cache of latent sequences, keyed by video, encoder, and role.

    Entries live at ``<root>/<video_id>/<role>-<fingerprint>.lat`` and are
    written atomically (temp file then rename) so readers never observe a
    partial entry. Corrupt entries read as misses with a warning.
    """

    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else default_bank_root()
        self.hits = 0
        self.misses = 0

    def _path(self, key: CacheKey) -> Path:
        fp = key.encoder_fingerprint
        if key.predictor_fingerprint is not None:
            fp = f"{fp}.{key.predictor_fingerprint}"
        safe_vid = key.video_id.replace("/", "_")
        return self.root / safe_vid / f"{key.role}-{fp}.lat"

    def put(self, key: CacheKey, seq: LatentSequence) -> Path:
        if seq.encoder_fingerprint != key.encoder_fingerprint:
            raise FingerprintMismatch(
                f"sequence fingerprint {seq.encoder_fingerprint} vs key {key.encoder_fingerprint}")
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        blob = sequence_to_bytes(seq, predictor_fingerprint=key.predictor_fingerprint)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(blob)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return path

    def get(self, key: CacheKey) -> LatentSequence | None:
        path = self._path(key)
        if not path.exists():
            self.misses += 1
            return None
        try:
            seq = sequence_from_bytes(path.read_bytes())
        except CorruptEntry as e:
            log.warning("bank entry %s is corrupt (%s); treating as miss", path, e)
            self.misses += 1
            return None
        self.hits += 1
        return seq

    def stat(self) -> BankStat:
        entries = 0
        total = 0
        if self.root.exists():
            for p in self.root.rglob("*.lat"):
                entries += 1
                total += p.stat().st_size
        return BankStat(entries=entries, total_bytes=total,
                        hits=self.hits, misses=self.misses)

    def clear(self) -> int:
        removed = 0
        if self.root.exists():
            for p in sorted(self.root.rglob("*.lat")):
                p.unlink()
                removed += 1
            for d in sorted((d for d in self.root.rglob("*") if d.is_dir()),
                            reverse=True):
                try:
                    d.rmdir()
                except OSError:
                    pass
        return removed
