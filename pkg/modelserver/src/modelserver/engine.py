"""Latent backends.

The echo backend runs without any model weights: /encode block-averages
pixels into a fixed 8-channel grid and /predict holds each conditioning
latent forward until the next one. Real generative backends would slot in
behind the same two methods; asking for one without its weights installed
fails loudly at startup rather than quietly at request time.
"""

import time

import numpy as np

from .config import ServerConfig

LATENT_CHANNELS = 8
BLOCK = 8  # spatial pixels per latent cell


class ModelUnavailable(RuntimeError):
    """The configured backend cannot run on this machine."""


class EchoEngine:
    def __init__(self, config: ServerConfig):
        self.config = config

    def encode_frames(self, frames: list[np.ndarray]) -> np.ndarray:
        """Pool H x W x 3 uint8 frames into (N, 8, H//8, W//8) latents."""
        grids = []
        for pixels in frames:
            h8 = (pixels.shape[0] // BLOCK) * BLOCK
            w8 = (pixels.shape[1] // BLOCK) * BLOCK
            if h8 == 0 or w8 == 0:
                raise ValueError(
                    f"frame {pixels.shape[1]}x{pixels.shape[0]} is smaller "
                    f"than one {BLOCK}x{BLOCK} block")
            x = pixels[:h8, :w8].astype(np.float32) / 255.0
            blocks = x.reshape(h8 // BLOCK, BLOCK, w8 // BLOCK, BLOCK, 3)
            mean_rgb = blocks.mean(axis=(1, 3))            # (h, w, 3)
            dx = np.abs(np.diff(x, axis=1)).mean(axis=-1)
            dy = np.abs(np.diff(x, axis=0)).mean(axis=-1)
            grid = np.stack([
                mean_rgb.mean(axis=-1),
                mean_rgb[..., 0],
                mean_rgb[..., 1],
                mean_rgb[..., 2],
                _pool(dx, h8, w8 - 1),
                _pool(dy, h8 - 1, w8),
                blocks.std(axis=(1, 3, 4)),
                blocks.max(axis=(1, 3, 4)) - blocks.min(axis=(1, 3, 4)),
            ]).astype(np.float32)
            grids.append(grid)
        shapes = {g.shape for g in grids}
        if len(shapes) != 1:
            raise ValueError(f"frames disagree on size: {sorted(shapes)}")
        return np.stack(grids)

    def predict(self, anchors: np.ndarray, indices: list[int],
                target_length: int) -> np.ndarray:
        """Hold extrapolation: each frame copies the latest anchor at or
        before it; frames before the first anchor copy the first."""
        if self.config.predict_delay_s > 0:
            time.sleep(self.config.predict_delay_s)
        idx = np.asarray(indices)
        out = np.empty((target_length,) + anchors.shape[1:], dtype=np.float32)
        for t in range(target_length):
            pos = int(np.searchsorted(idx, t, side="right")) - 1
            out[t] = anchors[max(pos, 0)]
        return out


def _pool(diff: np.ndarray, h: int, w: int) -> np.ndarray:
    """Block-average a gradient map whose short axis lost one pixel."""
    padded = np.zeros((((h + BLOCK - 1) // BLOCK) * BLOCK,
                       ((w + BLOCK - 1) // BLOCK) * BLOCK), dtype=np.float32)
    padded[:diff.shape[0], :diff.shape[1]] = diff
    return padded.reshape(padded.shape[0] // BLOCK, BLOCK,
                          padded.shape[1] // BLOCK, BLOCK).mean(axis=(1, 3))


def build_engine(config: ServerConfig) -> EchoEngine:
    if config.model == "echo":
        return EchoEngine(config)
    raise ModelUnavailable(
        f"backend {config.model!r} needs locally installed weights; "
        f"only the weights-free echo backend ships with this package")
