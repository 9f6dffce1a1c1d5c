"""The HTTP surface: /health, /encode, /predict.

Requests and responses are JSON; latents travel as checksummed blobs. One
/predict runs at a time, a bounded number more may wait, and everything
past that is refused with 503 so callers can back off instead of piling up.
"""

import base64
import binascii
import io
import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import blob
from .config import ServerConfig
from .engine import EchoEngine, build_engine

log = logging.getLogger("modelserver")

MAX_BODY_BYTES = 64 * 1024 * 1024


class Busy(Exception):
    pass


class BadRequest(Exception):
    pass


class PredictGate:
    """Admission control: one request in flight, queue_size waiting."""

    def __init__(self, queue_size: int):
        self._slots = threading.Semaphore(queue_size + 1)
        self._turn = threading.Semaphore(1)

    def acquire(self):
        if not self._slots.acquire(blocking=False):
            raise Busy
        self._turn.acquire()

    def release(self):
        self._turn.release()
        self._slots.release()


class ModelHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, config: ServerConfig, engine):
        super().__init__(address, _Handler)
        self.config = config
        self.engine = engine
        self.gate = PredictGate(config.queue_size)


class _Handler(BaseHTTPRequestHandler):
    server: ModelHTTPServer

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    def _reply(self, status: int, payload: dict):
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _fail(self, status: int, message: str):
        self._reply(status, {"error": message})

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length <= 0:
            raise BadRequest("missing request body")
        try:
            obj = json.loads(self.rfile.read(length))
        except (ValueError, UnicodeDecodeError) as e:
            raise BadRequest(f"body is not valid JSON: {e}") from e
        if not isinstance(obj, dict):
            raise BadRequest("body must be a JSON object")
        return obj

    def do_GET(self):
        if self.path != "/health":
            self._fail(404, f"no such route: {self.path}")
            return
        cfg = self.server.config
        self._reply(200, {
            "latent_fingerprint": cfg.latent_fingerprint,
            "max_target_length": cfg.max_target_length,
            "model": cfg.model,
            "device": cfg.device,
            "denoise_steps": cfg.denoise_steps,
            "guidance_scale": cfg.guidance_scale,
        })

    def do_POST(self):
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY_BYTES:
            self._fail(413, f"request body over {MAX_BODY_BYTES} bytes")
            return
        try:
            if self.path == "/encode":
                self._encode()
            elif self.path == "/predict":
                self._predict()
            else:
                self._fail(404, f"no such route: {self.path}")
        except BadRequest as e:
            self._fail(400, str(e))
        except Exception:
            log.exception("unhandled error on %s", self.path)
            self._fail(500, "internal error")

    def _encode(self):
        from PIL import Image, UnidentifiedImageError

        body = self._read_json()
        frames_b64 = body.get("frames")
        if not isinstance(frames_b64, list) or not frames_b64:
            raise BadRequest("frames must be a non-empty list of base64 PNGs")
        frames = []
        for i, entry in enumerate(frames_b64):
            if not isinstance(entry, str):
                raise BadRequest(f"frame {i} is not a base64 string")
            try:
                raw = base64.b64decode(entry, validate=True)
            except (binascii.Error, TypeError) as e:
                raise BadRequest(f"frame {i} base64 invalid: {e}") from e
            try:
                image = Image.open(io.BytesIO(raw))
                image.load()
            except (UnidentifiedImageError, OSError) as e:
                raise BadRequest(f"frame {i} is not a decodable image: {e}") from e
            frames.append(np.asarray(image.convert("RGB")))
        try:
            latents = self.server.engine.encode_frames(frames)
        except ValueError as e:
            raise BadRequest(str(e)) from e
        self._reply(200, {"latents": blob.encode(latents)})

    def _predict(self):
        body = self._read_json()
        try:
            indices = list(body["initial_indices"])
            latents_obj = body["initial_latents"]
            target_length = body["target_length"]
            question = body.get("question", "")
            answers = body.get("answers", [])
            prompt = body.get("prompt", "")
        except KeyError as e:
            raise BadRequest(f"missing field {e.args[0]!r}") from e
        if not isinstance(target_length, int) or isinstance(target_length, bool):
            raise BadRequest("target_length must be an integer")
        if target_length < 1:
            raise BadRequest(f"target_length must be >= 1, got {target_length}")
        if not isinstance(question, str) or not isinstance(prompt, str):
            raise BadRequest("question and prompt must be strings")
        if not isinstance(answers, list):
            raise BadRequest("answers must be a list")
        if (not indices or not all(isinstance(i, int) and not isinstance(i, bool)
                                   for i in indices)
                or any(b <= a for a, b in zip(indices, indices[1:]))):
            raise BadRequest("initial_indices must be strictly increasing ints")
        try:
            anchors = blob.decode(latents_obj)
        except blob.BlobError as e:
            raise BadRequest(str(e)) from e
        if anchors.shape[0] != len(indices):
            raise BadRequest(
                f"{anchors.shape[0]} latents for {len(indices)} indices")
        if indices[0] < 0 or indices[-1] >= target_length:
            raise BadRequest(
                f"indices must lie in [0, {target_length}), got "
                f"{indices[0]}..{indices[-1]}")
        if not np.isfinite(anchors).all():
            raise BadRequest("initial latents contain non-finite values")

        cfg = self.server.config
        if target_length > cfg.max_target_length:
            self._fail(413, f"target_length {target_length} over limit "
                            f"{cfg.max_target_length}")
            return
        try:
            self.server.gate.acquire()
        except Busy:
            self._fail(503, "predictor busy and queue full, retry later")
            return
        try:
            predicted = self.server.engine.predict(anchors, indices,
                                                   target_length)
        finally:
            self.server.gate.release()
        self._reply(200, {"latents": blob.encode(predicted)})


def build_server(config: ServerConfig, engine=None) -> ModelHTTPServer:
    """Bind the service; caller starts it with serve_forever()."""
    engine = engine if engine is not None else build_engine(config)
    return ModelHTTPServer((config.host, config.port), config, engine)


def echo_mode(config: ServerConfig) -> ModelHTTPServer:
    """A bound server on the weights-free echo backend, whatever the config
    names as its model. Exists so CI and contract tests never need weights."""
    return build_server(config, EchoEngine(config))


def serve(config: ServerConfig) -> None:
    """Run the configured backend until interrupted."""
    server = build_server(config)
    log.info("serving %s on http://%s:%d", config.model,
             config.host, server.server_address[1])
    try:
        server.serve_forever()
    finally:
        server.server_close()
