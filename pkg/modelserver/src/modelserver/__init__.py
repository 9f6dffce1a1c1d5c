"""HTTP shim serving frame encoding and latent-sequence prediction.

The package speaks a small JSON protocol over three routes (/health,
/encode, /predict) and ships a weights-free echo backend so integration
and contract tests run anywhere.
"""

from .app import build_server, echo_mode, serve
from .blob import BlobError, decode as blob_decode, encode as blob_encode
from .config import ConfigError, ServerConfig, load_config
from .engine import EchoEngine, ModelUnavailable, build_engine

__version__ = "0.1.0"

__all__ = [
    "BlobError",
    "ConfigError",
    "EchoEngine",
    "ModelUnavailable",
    "ServerConfig",
    "__version__",
    "blob_decode",
    "blob_encode",
    "build_engine",
    "build_server",
    "echo_mode",
    "load_config",
    "serve",
]
