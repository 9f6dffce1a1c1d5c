"""In-process server harness for tests and contract fixtures."""

import threading
from contextlib import contextmanager

from .app import echo_mode
from .config import ServerConfig


@contextmanager
def serve_background(**overrides):
    """Run an echo-backend server on an ephemeral port; yields its base URL."""
    config = ServerConfig(**{"port": 0, **overrides})
    server = echo_mode(config)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://{config.host}:{server.server_address[1]}"
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)
