"""Command-line entry point: ``modelserver --config path``."""

import argparse
import logging
import sys

from .app import serve
from .config import ConfigError, ServerConfig, load_config
from .engine import ModelUnavailable


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="modelserver",
        description="Serve /health, /encode, and /predict over HTTP.")
    parser.add_argument("--config", metavar="PATH",
                        help="key = value config file; defaults apply if omitted")
    parser.add_argument("--verbose", action="store_true",
                        help="log requests to stderr")
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr)
    try:
        config = load_config(args.config) if args.config else ServerConfig()
        serve(config)
    except (ConfigError, ModelUnavailable) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
