"""
The command-line surface, end to end
=====================================

Everything the library does is reachable from the `vap` command. This script
drives the whole loop in a throwaway directory: synthesize a corpus, select
frames (twice, to show the latent cache paying off), evaluate with the mock
oracle, sweep one ablation axis, and inspect the cache.
"""

import json
import tempfile
from pathlib import Path

from vap.cli import main

root = Path(tempfile.mkdtemp(prefix="vap-demo-"))
corpus = root / "corpus"
bank = root / "bank"
print("working in", root)

# --- 1. synthesize a small annotated corpus
rc = main(["synth", "--out", str(corpus), "--count", "4", "--seed", "3",
           "--total-frames", "64", "--anomaly-count", "2",
           "--anomaly-kind", "spawn"])
assert rc == 0
print("qa items:", sum(1 for _ in (corpus / "qa.jsonl").open()))

# --- 2. select frames; the first run fills the latent cache
for attempt in ("cold", "warm"):
    out = root / f"sel-{attempt}"
    rc = main(["select", "--corpus", str(corpus), "--out", str(out),
               "--bank-dir", str(bank), "--frames", "6",
               "--exclude-initial"])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    print(f"select ({attempt}): {manifest['videos_done']} videos, "
          f"bank hits={manifest['bank']['hits']} "
          f"misses={manifest['bank']['misses']}")

selections = root / "sel-cold" / "selections.jsonl"
first = json.loads(selections.open().readline())
print("first selection:", first["video_id"], "->", first["indices"])

# --- 3. evaluate two policies against the mock oracle
ev = root / "eval"
rc = main(["eval", "--dataset", str(corpus / "qa.jsonl"),
           "--schema", "synthetic", "--out", str(ev),
           "--corpus", str(corpus), "--selections", str(selections),
           "--policy", "most_surprising,random", "--frames", "6"])
assert rc == 0
for policy in ("most_surprising", "random"):
    report = json.loads((ev / f"report-{policy}.json").read_text())
    print(f"eval [{policy}]: accuracy {report['accuracy']:.4f} "
          f"over {report['total']} items")

# --- 4. sweep the frame budget and watch accuracy saturate
ab = root / "ablation"
rc = main(["ablate", "--axis", "frames", "--values", "2,4,8",
           "--corpus", str(corpus), "--dataset", str(corpus / "qa.jsonl"),
           "--schema", "synthetic", "--out", str(ab),
           "--bank-dir", str(bank)])
assert rc == 0
table = json.loads((ab / "ablation.json").read_text())
for row in table["rows"]:
    print(f"ablate frames={row['value']}: accuracy {row['accuracy']:.4f}")
print("non-decreasing:", table["non_decreasing"])

# --- 5. the cache is plain files; stat it and sweep it away
print("\ncache contents:")
rc = main(["cache", "stat", "--bank-dir", str(bank)])
assert rc == 0
rc = main(["cache", "clear", "--bank-dir", str(bank)])
assert rc == 0
