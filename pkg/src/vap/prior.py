"""Latent dynamics prediction: extrapolate a full latent sequence from anchors.

Given latents at a few anchor indices, a predictor fills in the remaining
positions. Built-in predictors are analytic (hold, linear, ssim-guided
recursive interpolation); ``remote`` delegates to an HTTP model server that
speaks the latent wire protocol.
"""

from __future__ import annotations

import base64
import hashlib
import io
import logging
import time
from dataclasses import dataclass

import numpy as np
import requests

from .errors import (
    FingerprintMismatch,
    RemoteProtocolError,
    RemoteUnavailable,
    ShapeMismatch,
)
from .ingest import Frame, IndexSet
from .latents import LatentFrame, LatentSequence, blob_decode, blob_encode

log = logging.getLogger("vap.prior")

PREDICTOR_KINDS = ("hold", "linear", "ssim_recursive", "remote")

# Standard stabilizer constants for structural similarity.
SSIM_K1 = 0.01
SSIM_K2 = 0.03

DEFAULT_SSIM_THRESHOLD = 0.90


@dataclass(frozen=True)
class PredictorConfig:
    kind: str = "linear"
    ssim_threshold: float = DEFAULT_SSIM_THRESHOLD
    remote_endpoint: str | None = None
    timeout_s: float = 120.0
    retries: int = 3
    backoff_s: float = 1.0

    def __post_init__(self):
        if self.kind not in PREDICTOR_KINDS:
            raise ShapeMismatch(f"kind must be one of {PREDICTOR_KINDS}, got {self.kind!r}")
        if (self.kind == "remote") != (self.remote_endpoint is not None):
            raise ShapeMismatch("remote_endpoint is required iff kind='remote'")
        if not 0.0 <= self.ssim_threshold <= 1.0:
            raise ShapeMismatch(f"ssim_threshold must be in [0, 1], got {self.ssim_threshold}")

    @property
    def fingerprint(self) -> str:
        desc = f"p1|{self.kind}|th{self.ssim_threshold:.6f}|{self.remote_endpoint or ''}"
        return hashlib.sha256(desc.encode()).hexdigest()[:16]


@dataclass(eq=False)
class PredictorRequest:
    video_id: str
    initial_indices: IndexSet
    initial_latents: LatentSequence
    question: str
    answers: list[str]
    generation_prompt: str
    target_length: int

    def validate(self) -> None:
        k = len(self.initial_indices)
        if k == 0:
            raise ShapeMismatch("need at least one anchor")
        if k != len(self.initial_latents):
            raise ShapeMismatch(
                f"{k} anchor indices but {len(self.initial_latents)} latents")
        if self.target_length < self.initial_indices.indices[-1] + 1:
            raise ShapeMismatch(
                f"target_length {self.target_length} shorter than last anchor index "
                f"{self.initial_indices.indices[-1]}")
        shapes = {lf.grid.shape for lf in self.initial_latents.latents}
        if len(shapes) != 1:
            raise ShapeMismatch(f"anchor latents disagree on shape: {shapes}")


# --- structural similarity over latent grids -------------------------------------

def _ssim_grids(ga: np.ndarray, gb: np.ndarray) -> float:
    """Per-channel global-statistics SSIM, averaged over channels.

    Dynamic range is the largest absolute value present in either input;
    two all-zero grids compare as 1.0.
    """
    if ga.shape != gb.shape:
        raise ShapeMismatch(f"grids {ga.shape} vs {gb.shape}")
    a = ga.astype(np.float64)
    b = gb.astype(np.float64)
    drange = max(np.abs(a).max(), np.abs(b).max())
    if drange == 0.0:
        return 1.0
    # Work at unit dynamic range: mathematically identical (the stabilizers
    # scale with drange) but immune to under/overflow at extreme magnitudes.
    a = a / drange
    b = b / drange
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2

    vals = []
    for c in range(a.shape[0]):
        xa, xb = a[c], b[c]
        mua, mub = xa.mean(), xb.mean()
        da, db = xa - mua, xb - mub
        var_a = (da * da).mean()
        var_b = (db * db).mean()
        cov = (da * db).mean()
        num = (2.0 * mua * mub + c1) * (2.0 * cov + c2)
        den = (mua * mua + mub * mub + c1) * (var_a + var_b + c2)
        vals.append(num / den)
    return float(np.mean(vals))


def ssim(a: LatentFrame, b: LatentFrame) -> float:
    return _ssim_grids(a.grid, b.grid)


def recursive_interpolate(left: np.ndarray, right: np.ndarray, span: int,
                          threshold: float = DEFAULT_SSIM_THRESHOLD) -> list[np.ndarray]:
    """Fill ``span`` interior grids between two endpoint grids.

    Subdivision inserts the elementwise midpoint and recurses on both halves;
    a sub-span whose endpoints already agree (ssim >= threshold) is filled
    linearly and not subdivided further.
    """
    if left.shape != right.shape:
        raise ShapeMismatch(f"endpoints {left.shape} vs {right.shape}")
    if span < 0:
        raise ShapeMismatch(f"span must be >= 0, got {span}")
    if span == 0:
        return []

    total = span + 1  # number of gaps between position 0 and position span+1
    values: dict[int, np.ndarray] = {0: left.astype(np.float64),
                                     total: right.astype(np.float64)}

    def fill_linear(lo: int, hi: int) -> None:
        vlo, vhi = values[lo], values[hi]
        for p in range(lo + 1, hi):
            t = (p - lo) / (hi - lo)
            values[p] = (1.0 - t) * vlo + t * vhi

    def rec(lo: int, hi: int) -> None:
        if hi - lo <= 1:
            return
        if _ssim_grids(values[lo], values[hi]) >= threshold:
            fill_linear(lo, hi)
            return
        mid = (lo + hi) // 2
        values[mid] = 0.5 * (values[lo] + values[hi])
        rec(lo, mid)
        rec(mid, hi)

    rec(0, total)
    # positions never visited (odd splits with early stops) get linear fill
    known = sorted(values)
    for i in range(len(known) - 1):
        if known[i + 1] - known[i] > 1:
            fill_linear(known[i], known[i + 1])
    return [values[p].astype(np.float32) for p in range(1, total)]


# --- built-in predictors -----------------------------------------------------------

def _predict_hold(req: PredictorRequest) -> list[LatentFrame]:
    anchors = dict(zip(req.initial_indices.indices, req.initial_latents.latents))
    idxs = req.initial_indices.indices
    out: list[LatentFrame] = []
    for t in range(req.target_length):
        src = idxs[0]
        for i in idxs:
            if i <= t:
                src = i
            else:
                break
        a = anchors[src]
        out.append(a if src == t else LatentFrame(grid=a.grid, source_index=None))
    return out


def _predict_linear(req: PredictorRequest) -> list[LatentFrame]:
    anchors = dict(zip(req.initial_indices.indices, req.initial_latents.latents))
    idxs = req.initial_indices.indices
    out: list[LatentFrame] = [None] * req.target_length  # type: ignore[list-item]
    for t, lf in anchors.items():
        out[t] = lf
    # before the first anchor and after the last: hold
    for t in range(idxs[0]):
        out[t] = LatentFrame(grid=anchors[idxs[0]].grid, source_index=None)
    for t in range(idxs[-1] + 1, req.target_length):
        out[t] = LatentFrame(grid=anchors[idxs[-1]].grid, source_index=None)
    for lo, hi in zip(idxs, idxs[1:]):
        glo = anchors[lo].grid.astype(np.float64)
        ghi = anchors[hi].grid.astype(np.float64)
        for t in range(lo + 1, hi):
            frac = (t - lo) / (hi - lo)
            grid = ((1.0 - frac) * glo + frac * ghi).astype(np.float32)
            out[t] = LatentFrame(grid=grid, source_index=None)
    return out


def _predict_ssim_recursive(req: PredictorRequest, threshold: float) -> list[LatentFrame]:
    anchors = dict(zip(req.initial_indices.indices, req.initial_latents.latents))
    idxs = req.initial_indices.indices
    out: list[LatentFrame] = [None] * req.target_length  # type: ignore[list-item]
    for t, lf in anchors.items():
        out[t] = lf
    for t in range(idxs[0]):
        out[t] = LatentFrame(grid=anchors[idxs[0]].grid, source_index=None)
    for t in range(idxs[-1] + 1, req.target_length):
        out[t] = LatentFrame(grid=anchors[idxs[-1]].grid, source_index=None)
    for lo, hi in zip(idxs, idxs[1:]):
        span = hi - lo - 1
        if span <= 0:
            continue
        interior = recursive_interpolate(anchors[lo].grid, anchors[hi].grid,
                                         span, threshold)
        for off, grid in enumerate(interior, start=1):
            out[lo + off] = LatentFrame(grid=grid, source_index=None)
    return out


def predict_full(req: PredictorRequest, config: PredictorConfig) -> LatentSequence:
    """Produce latents for every index in [0, target_length).

    Built-in predictors return the anchor latents unchanged (by reference)
    at their own indices.
    """
    req.validate()
    if config.kind == "remote":
        return remote_predict(req, config)
    if config.kind == "hold":
        frames = _predict_hold(req)
    elif config.kind == "linear":
        frames = _predict_linear(req)
    else:
        frames = _predict_ssim_recursive(req, config.ssim_threshold)
    return LatentSequence(req.video_id, req.initial_latents.encoder_fingerprint, frames)


# --- remote protocol client ---------------------------------------------------------

def _retrying(call, *, retries: int, backoff_s: float, what: str):
    delay = backoff_s
    last: Exception | None = None
    for attempt in range(retries):
        try:
            resp = call()
        except requests.RequestException as e:
            last = e
            log.warning("%s attempt %d/%d failed: %s", what, attempt + 1, retries, e)
        else:
            if resp.status_code == 503 and attempt < retries - 1:
                log.warning("%s attempt %d/%d: server busy", what, attempt + 1, retries)
            else:
                return resp
        if attempt < retries - 1:
            time.sleep(delay)
            delay *= 2
    raise RemoteUnavailable(f"{what} failed after {retries} attempts: {last}")


def fetch_health(endpoint: str, *, timeout_s: float = 10.0,
                 retries: int = 3, backoff_s: float = 1.0) -> dict:
    resp = _retrying(
        lambda: requests.get(f"{endpoint.rstrip('/')}/health", timeout=timeout_s),
        retries=retries, backoff_s=backoff_s, what="health check")
    if resp.status_code != 200:
        raise RemoteProtocolError(f"/health returned {resp.status_code}")
    try:
        payload = resp.json()
        return {
            "latent_fingerprint": str(payload["latent_fingerprint"]),
            "max_target_length": int(payload["max_target_length"]),
        }
    except (ValueError, KeyError, TypeError) as e:
        raise RemoteProtocolError(f"/health payload invalid: {e}") from e


def remote_predict(req: PredictorRequest, config: PredictorConfig) -> LatentSequence:
    """Ask a model server for the full latent sequence.

    The server must advertise the same latent fingerprint as the request's
    anchors and must return exactly target_length finite latent frames.
    """
    req.validate()
    endpoint = config.remote_endpoint
    assert endpoint is not None
    health = fetch_health(endpoint, retries=config.retries, backoff_s=config.backoff_s)
    if health["latent_fingerprint"] != req.initial_latents.encoder_fingerprint:
        raise FingerprintMismatch(
            f"server speaks {health['latent_fingerprint']}, "
            f"request uses {req.initial_latents.encoder_fingerprint}")

    body = {
        "initial_indices": list(req.initial_indices.indices),
        "initial_latents": blob_encode(req.initial_latents.stack()),
        "question": req.question,
        "answers": list(req.answers),
        "prompt": req.generation_prompt,
        "target_length": req.target_length,
    }
    resp = _retrying(
        lambda: requests.post(f"{endpoint.rstrip('/')}/predict", json=body,
                              timeout=config.timeout_s),
        retries=config.retries, backoff_s=config.backoff_s, what="predict")
    if resp.status_code != 200:
        raise RemoteProtocolError(f"/predict returned {resp.status_code}: {resp.text[:200]}")
    try:
        payload = resp.json()
    except ValueError as e:
        raise RemoteProtocolError(f"/predict returned non-JSON body: {e}") from e
    arr = blob_decode(payload.get("latents"))
    if arr.shape[0] != req.target_length:
        raise RemoteProtocolError(
            f"server returned {arr.shape[0]} latents, expected {req.target_length}")
    anchor_shape = req.initial_latents.latents[0].grid.shape
    if arr.shape[1:] != anchor_shape:
        raise RemoteProtocolError(
            f"server latent grid shape {arr.shape[1:]} differs from anchors {anchor_shape}")
    if not np.isfinite(arr).all():
        raise RemoteProtocolError("server returned non-finite latents")
    frames = [LatentFrame(grid=arr[i], source_index=None)
              for i in range(arr.shape[0])]
    return LatentSequence(req.video_id, req.initial_latents.encoder_fingerprint, frames)


def remote_encode(frames: list[Frame], endpoint: str, video_id: str = "",
                  *, timeout_s: float = 120.0, retries: int = 3,
                  backoff_s: float = 1.0) -> LatentSequence:
    """Encode frames through a model server's /encode route."""
    from PIL import Image

    if not frames:
        raise ShapeMismatch("no frames to encode")
    health = fetch_health(endpoint, retries=retries, backoff_s=backoff_s)
    encoded = []
    for f in frames:
        buf = io.BytesIO()
        Image.fromarray(f.pixels).save(buf, format="PNG")
        encoded.append(base64.b64encode(buf.getvalue()).decode("ascii"))
    resp = _retrying(
        lambda: requests.post(f"{endpoint.rstrip('/')}/encode",
                              json={"frames": encoded}, timeout=timeout_s),
        retries=retries, backoff_s=backoff_s, what="encode")
    if resp.status_code != 200:
        raise RemoteProtocolError(f"/encode returned {resp.status_code}: {resp.text[:200]}")
    try:
        payload = resp.json()
    except ValueError as e:
        raise RemoteProtocolError(f"/encode returned non-JSON body: {e}") from e
    arr = blob_decode(payload.get("latents"))
    if arr.shape[0] != len(frames):
        raise RemoteProtocolError(
            f"server encoded {arr.shape[0]} latents for {len(frames)} frames")
    out = [LatentFrame(grid=arr[i], source_index=frames[i].index)
           for i in range(arr.shape[0])]
    return LatentSequence(video_id, health["latent_fingerprint"], out)
