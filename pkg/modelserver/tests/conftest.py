import importlib.util

# the primary suite must run even when the server package is not installed
if importlib.util.find_spec("modelserver") is None:
    collect_ignore_glob = ["*"]
