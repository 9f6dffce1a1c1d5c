"""Frame-sequence loading, resizing, and index sampling.

A clip is a list of RGB frames with a nominal frame rate. Frame sources are
directories of numbered PNGs (``<video_id>/000000.png``, ...) with an
optional ``meta.json`` sidecar carrying ``{"fps": <float>}``. Container
files are handed to an external decoder when one is installed.
"""

from __future__ import annotations

import json
import math
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    DecoderUnavailable,
    EmptySequence,
    InvalidCount,
    InvalidDimensions,
    InvalidFps,
    MissingPath,
    UnreadableFrame,
)

# All pixel geometry in the pipeline lives on an 8-pixel grid so that the
# block encoder divides frames evenly.
GRID = 8

DEFAULT_WIDTH = 720
DEFAULT_HEIGHT = 480
DEFAULT_FPS = 30.0

_FRAME_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(eq=False)
class Frame:
    """One decoded RGB frame; ``pixels`` is an (H, W, 3) uint8 array."""

    index: int
    pixels: np.ndarray
    timestamp_s: float


@dataclass(eq=False)
class VideoClip:
    video_id: str
    frames: list[Frame]
    fps: float
    width: int
    height: int

    def __len__(self) -> int:
        return len(self.frames)

    def pixel_array(self) -> np.ndarray:
        """Stack frames into a (T, H, W, 3) uint8 array."""
        return np.stack([f.pixels for f in self.frames])


@dataclass(frozen=True)
class IndexSet:
    """A strictly increasing set of frame indices inside [0, universe_size)."""

    indices: tuple[int, ...]
    universe_size: int

    def __post_init__(self):
        if self.universe_size < 0:
            raise InvalidCount(f"universe_size must be >= 0, got {self.universe_size}")
        prev = -1
        for i in self.indices:
            if not isinstance(i, (int, np.integer)):
                raise InvalidCount(f"index {i!r} is not an integer")
            if i <= prev:
                raise InvalidCount(f"indices must be strictly increasing, got {self.indices}")
            if not 0 <= i < self.universe_size:
                raise InvalidCount(
                    f"index {i} outside [0, {self.universe_size})")
            prev = i
        # normalize numpy ints so serialization stays plain
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    def __iter__(self):
        return iter(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, idx) -> bool:
        return idx in self.indices


def _load_image_directory(path: Path, video_id: str, fps: float | None) -> VideoClip:
    files = sorted(
        p for p in path.iterdir()
        if p.is_file() and p.suffix.lower() in _FRAME_SUFFIXES
    )
    if not files:
        raise EmptySequence(f"no frame files under {path}")

    if fps is None:
        meta = path / "meta.json"
        if meta.exists():
            try:
                fps = float(json.loads(meta.read_text())["fps"])
            except (ValueError, KeyError, json.JSONDecodeError) as e:
                raise UnreadableFrame(f"bad sidecar {meta}: {e}") from e
        else:
            fps = DEFAULT_FPS
    if not math.isfinite(fps) or fps <= 0:
        raise InvalidFps(f"fps must be positive and finite, got {fps}")

    frames: list[Frame] = []
    shape = None
    for i, f in enumerate(files):
        try:
            with Image.open(f) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        except OSError as e:
            raise UnreadableFrame(f"cannot decode {f}: {e}") from e
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise UnreadableFrame(
                f"{f} has shape {arr.shape[:2]}, expected {shape[:2]}")
        frames.append(Frame(index=i, pixels=arr, timestamp_s=i / fps))

    h, w = shape[0], shape[1]
    return VideoClip(video_id=video_id, frames=frames, fps=fps, width=w, height=h)


def load_frame_sequence(path: str | Path, layout: str = "image_directory",
                        fps: float | None = None) -> VideoClip:
    """Load a clip from disk.

    ``layout`` is ``"image_directory"`` (numbered stills plus optional
    ``meta.json``) or ``"container"`` (decode via ffmpeg into a temp
    directory first). fps precedence: explicit argument, then sidecar,
    then 30.0.
    """
    path = Path(path)
    if not path.exists():
        raise MissingPath(str(path))

    if layout == "image_directory":
        if not path.is_dir():
            raise MissingPath(f"{path} is not a directory")
        return _load_image_directory(path, video_id=path.name, fps=fps)

    if layout == "container":
        if shutil.which("ffmpeg") is None:
            raise DecoderUnavailable("ffmpeg not found on PATH")
        with tempfile.TemporaryDirectory(prefix="vap-decode-") as tmp:
            out_pattern = str(Path(tmp) / "%06d.png")
            proc = subprocess.run(
                ["ffmpeg", "-nostdin", "-loglevel", "error", "-i", str(path),
                 "-start_number", "0", out_pattern],
                capture_output=True, text=True,
            )
            if proc.returncode != 0:
                raise UnreadableFrame(f"decoder failed on {path}: {proc.stderr.strip()}")
            clip = _load_image_directory(Path(tmp), video_id=path.stem, fps=fps)
            return clip

    raise MissingPath(f"unknown layout {layout!r}")


def resize_clip(clip: VideoClip, width: int = DEFAULT_WIDTH,
                height: int = DEFAULT_HEIGHT) -> VideoClip:
    """Bilinear-resize every frame. Dimensions must sit on the 8-pixel grid."""
    for name, v in (("width", width), ("height", height)):
        if v < GRID or v % GRID != 0:
            raise InvalidDimensions(
                f"{name} must be >= {GRID} and divisible by {GRID}, got {v}")
    if width == clip.width and height == clip.height:
        return VideoClip(clip.video_id, list(clip.frames), clip.fps,
                         clip.width, clip.height)

    out = []
    for f in clip.frames:
        im = Image.fromarray(f.pixels).resize((width, height), Image.BILINEAR)
        out.append(Frame(f.index, np.asarray(im, dtype=np.uint8), f.timestamp_s))
    return VideoClip(clip.video_id, out, clip.fps, width, height)


def uniform_sample(total: int, count: int) -> IndexSet:
    """Pick ``count`` evenly spaced indices from [0, total): index_j = floor(j*T/k)."""
    if not 1 <= count <= total:
        raise InvalidCount(f"count must be in [1, {total}], got {count}")
    return IndexSet(tuple(j * total // count for j in range(count)), total)


def shift_sample(total: int, count: int, direction: str = "middle") -> IndexSet:
    """Uniform sampling with the whole comb shifted left or right.

    The shift is a third of one sampling block, clamped into range; any
    collisions after clamping are pushed to the nearest free index upward.
    """
    if direction not in ("left", "middle", "right"):
        raise InvalidCount(f"direction must be left|middle|right, got {direction!r}")
    base = uniform_sample(total, count)
    if direction == "middle":
        return base
    shift = int((total / count) // 3)
    if shift == 0:
        return base
    delta = shift if direction == "right" else -shift
    raw = [min(total - 1, max(0, i + delta)) for i in base]

    used: set[int] = set()
    placed: list[int] = []
    overflow = 0
    for idx in raw:
        while idx in used:
            idx += 1
        if idx >= total:
            overflow += 1
            continue
        used.add(idx)
        placed.append(idx)
    # clamping at the top edge can run out of room upward; fall back to the
    # highest indices still free (count <= total guarantees space exists)
    if overflow:
        free = (i for i in range(total - 1, -1, -1) if i not in used)
        for _ in range(overflow):
            idx = next(free)
            used.add(idx)
            placed.append(idx)
    return IndexSet(tuple(sorted(placed)), total)


def fps_sample(clip: VideoClip, target_fps: float) -> IndexSet:
    """One index per 1/target_fps seconds of video time."""
    if not math.isfinite(target_fps) or target_fps <= 0:
        raise InvalidFps(f"target_fps must be positive and finite, got {target_fps}")
    if not math.isfinite(clip.fps) or clip.fps <= 0:
        raise InvalidFps(f"clip fps must be positive and finite, got {clip.fps}")
    total = len(clip)
    if total == 0:
        raise EmptySequence(f"clip {clip.video_id} has no frames")

    step = clip.fps / target_fps
    picked: list[int] = []
    j = 0
    while True:
        idx = math.floor(j * step)
        if idx >= total:
            break
        if not picked or idx > picked[-1]:
            picked.append(idx)
        j += 1
    return IndexSet(tuple(picked), total)
