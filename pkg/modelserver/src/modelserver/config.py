"""Server configuration and the key = value file format that feeds it."""

from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    """Bad configuration value or unparseable config file."""


@dataclass
class ServerConfig:
    model: str = "echo"              # backend identifier; "echo" needs no weights
    device: str = "cpu"
    latent_fingerprint: str = "0000000000000000"
    max_target_length: int = 1024
    denoise_steps: int = 50
    guidance_scale: float = 1.15258426
    host: str = "127.0.0.1"
    port: int = 8748                 # 0 asks the OS for an ephemeral port
    queue_size: int = 4              # waiting requests beyond the one in flight
    predict_delay_s: float = 0.0     # simulated backend latency, for load tests

    def __post_init__(self):
        if not self.model:
            raise ConfigError("model must be non-empty")
        if not self.latent_fingerprint:
            raise ConfigError("latent_fingerprint must be non-empty")
        if self.max_target_length < 1:
            raise ConfigError(
                f"max_target_length must be >= 1, got {self.max_target_length}")
        if self.denoise_steps < 1:
            raise ConfigError(f"denoise_steps must be >= 1, got {self.denoise_steps}")
        if self.guidance_scale <= 0:
            raise ConfigError(
                f"guidance_scale must be positive, got {self.guidance_scale}")
        if not 0 <= self.port <= 65535:
            raise ConfigError(f"port must be in [0, 65535], got {self.port}")
        if self.queue_size < 0:
            raise ConfigError(f"queue_size must be >= 0, got {self.queue_size}")
        if self.predict_delay_s < 0:
            raise ConfigError(
                f"predict_delay_s must be >= 0, got {self.predict_delay_s}")


def _scalar(raw: str, where: str):
    if raw.startswith('"'):
        if len(raw) < 2 or not raw.endswith('"'):
            raise ConfigError(f"{where}: unterminated string {raw!r}")
        return raw[1:-1]
    if raw == "true":
        return True
    if raw == "false":
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def load_config(path: str | Path) -> ServerConfig:
    """Parse ``key = value`` lines into a ServerConfig.

    Values are quoted strings, true/false, numbers, or bare words. Blank
    lines and everything after an unquoted # are ignored. Keys outside
    ServerConfig are errors, as are values of the wrong type.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    known = {f.name: f.type for f in fields(ServerConfig)}
    values = {}
    for line_no, line in enumerate(path.read_text().splitlines(), 1):
        where = f"{path}:{line_no}"
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{where}: expected key = value")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in known:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if not raw.startswith('"') and "#" in raw:
            raw = raw.split("#", 1)[0].strip()
        if not raw:
            raise ConfigError(f"{where}: missing value for {key!r}")
        value = _scalar(raw, where)
        want = known[key]
        if want is int and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigError(f"{where}: {key} must be an integer, got {value!r}")
        if want is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{where}: {key} must be a number, got {value!r}")
            value = float(value)
        if want is str and not isinstance(value, str):
            raise ConfigError(f"{where}: {key} must be a string, got {value!r}")
        values[key] = value
    return ServerConfig(**values)
