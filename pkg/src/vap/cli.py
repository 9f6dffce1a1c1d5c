"""Command line entry points: synth, select, eval, compare, ablate, cache.

Option precedence is flags over environment over config file. The config
file is a flat key/value document; see parse_config_file for the exact
grammar. Progress and failures are logged as JSON lines on stderr; result
files are JSON or JSONL. Exit codes: 0 success, 2 partial failure (some
videos failed but the run finished), 1 fatal.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import evalharness, ingest, latents, prior, select, synthworld, vlmclient
from .errors import ConfigError, Unparseable, VapError

log = logging.getLogger("vap.cli")

_ENV_KEYS = {
    "bank_dir": latents.BANK_DIR_ENV,
    "vlm_endpoint": vlmclient.ENDPOINT_ENV,
    "vlm_model": vlmclient.MODEL_ENV,
    "vlm_key": vlmclient.KEY_ENV,
}

MAX_JOBS = 8


class _JsonLineFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "ts": round(record.created, 3),
            "level": record.levelname.lower(),
            "logger": record.name,
            "message": record.getMessage(),
        }
        extra = getattr(record, "fields", None)
        if isinstance(extra, dict):
            payload.update(extra)
        return json.dumps(payload, sort_keys=True)


def _setup_logging(verbose: bool) -> None:
    root = logging.getLogger("vap")
    if not any(isinstance(h, logging.StreamHandler) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(_JsonLineFormatter())
        root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def _event(name: str, **fields) -> None:
    log.info(name, extra={"fields": fields})


# --- config file -------------------------------------------------------------------


def parse_config_file(path: str | Path) -> dict:
    """Parse a flat key/value config document.

    Grammar, one assignment per line:
        key = value
    where key is [A-Za-z_][A-Za-z0-9_]* and value is one of
        "double quoted string"  (no escapes)
        true | false
        integer | float
        bare string (no commas)
        comma,separated,list of the scalar forms above
    Blank lines and lines starting with '#' are ignored; '#' after a value
    starts a comment unless inside quotes. No sections, no nesting.
    """
    out: dict = {}
    text = Path(path).read_text(encoding="utf-8")
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected key = value")
        key, _, rest = line.partition("=")
        key = key.strip()
        if not key.replace("_", "").isalnum() or key[0].isdigit():
            raise ConfigError(f"{path}:{line_no}: bad key {key!r}")
        value = rest.strip()
        if value.startswith('"'):
            end = value.find('"', 1)
            if end < 0:
                raise ConfigError(f"{path}:{line_no}: unterminated string")
            out[key] = value[1:end]
            continue
        if "#" in value:
            value = value.split("#", 1)[0].strip()
        if value == "":
            raise ConfigError(f"{path}:{line_no}: missing value for {key!r}")
        if "," in value:
            out[key] = [_scalar(v.strip(), path, line_no) for v in value.split(",")]
        else:
            out[key] = _scalar(value, path, line_no)
    return out


def _scalar(token: str, path, line_no: int):
    if token in ("true", "false"):
        return token == "true"
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        pass
    if not token:
        raise ConfigError(f"{path}:{line_no}: empty list element")
    return token


def _effective(flag_value, key: str, file_cfg: dict, default=None):
    """flags > environment > config file > built-in default."""
    if flag_value is not None:
        return flag_value
    env_name = _ENV_KEYS.get(key)
    if env_name and os.environ.get(env_name):
        return os.environ[env_name]
    if key in file_cfg:
        return file_cfg[key]
    return default


# --- select pipeline ----------------------------------------------------------------


@dataclass
class SelectOptions:
    corpus: Path
    out: Path
    predictor: str = "linear"
    endpoint: str | None = None
    initial_frames: int = 16
    frames: int = 8
    policy: str = "most_surprising"
    metric: str = "cosine"
    shift: str = "middle"
    exclude_initial: bool = False
    min_gap: int = 0
    seed: int = 0
    bank_dir: str | None = None
    jobs: int = 1
    resize: tuple[int, int] | None = None
    fps: float | None = None
    ssim_threshold: float = prior.DEFAULT_SSIM_THRESHOLD


def _video_dirs(corpus: Path) -> list[Path]:
    return sorted(p for p in corpus.iterdir() if p.is_dir())


def _predictor_config(opts: SelectOptions) -> prior.PredictorConfig:
    return prior.PredictorConfig(
        kind=opts.predictor,
        ssim_threshold=opts.ssim_threshold,
        remote_endpoint=opts.endpoint if opts.predictor == "remote" else None,
    )


def _anchor_fingerprint(pcfg: prior.PredictorConfig, anchors: ingest.IndexSet) -> str:
    desc = f"{pcfg.fingerprint}|{anchors.universe_size}|" + ",".join(
        str(i) for i in anchors.indices)
    return hashlib.sha256(desc.encode()).hexdigest()[:16]


def _select_one(video_dir: Path, opts: SelectOptions, bank: latents.MemoryBank,
                encoder_cfg: latents.EncoderConfig,
                pcfg: prior.PredictorConfig) -> select.SelectionResult:
    clip = ingest.load_frame_sequence(video_dir, fps=opts.fps)
    if opts.resize is not None:
        clip = ingest.resize_clip(clip, *opts.resize)

    real_key = latents.CacheKey(clip.video_id, encoder_cfg.fingerprint, "real")
    real = bank.get(real_key)
    if real is None:
        real = latents.encode_clip(clip, encoder_cfg)
        bank.put(real_key, real)

    total = len(real)
    anchors = ingest.shift_sample(total, min(opts.initial_frames, total), opts.shift)
    initial = latents.LatentSequence(
        clip.video_id, real.encoder_fingerprint,
        [real.latents[i] for i in anchors])

    gen_fp = _anchor_fingerprint(pcfg, anchors)
    gen_key = latents.CacheKey(clip.video_id, encoder_cfg.fingerprint,
                               "generated", gen_fp)
    predicted = bank.get(gen_key)
    if predicted is None:
        req = prior.PredictorRequest(
            video_id=clip.video_id,
            initial_indices=anchors,
            initial_latents=initial,
            question="",
            answers=[],
            generation_prompt="",
            target_length=total,
        )
        predicted = prior.predict_full(req, pcfg)
        bank.put(gen_key, predicted)

    profile = select.score_frames(real, predicted, opts.metric)
    exclude = set(anchors.indices) if opts.exclude_initial else None
    return _apply_policy(profile, opts.policy, opts.frames, opts.seed,
                         exclude=exclude, min_gap=opts.min_gap)


def _apply_policy(profile: select.SimilarityProfile, policy: str, n: int,
                  seed: int, exclude=None, min_gap: int = 0
                  ) -> select.SelectionResult:
    total = len(profile)
    if policy == "most_surprising":
        return select.select_most_surprising(profile, n, exclude=exclude,
                                             min_gap=min_gap)
    if policy == "least_surprising":
        return select.select_least_surprising(profile, n, exclude=exclude,
                                              min_gap=min_gap)
    if policy == "random":
        r = select.select_random(total, n, seed)
        return select.SelectionResult(policy=r.policy, indices=r.indices,
                                      video_id=profile.video_id,
                                      metric=profile.metric,
                                      scores=profile.scores, seed=seed)
    if policy == "uniform":
        r = select.select_uniform(total, n)
        return select.SelectionResult(policy=r.policy, indices=r.indices,
                                      video_id=profile.video_id,
                                      metric=profile.metric,
                                      scores=profile.scores)
    raise ConfigError(f"unknown policy {policy!r}")


def run_select(opts: SelectOptions) -> tuple[list[select.SelectionResult], list[dict]]:
    """Score and select for every video directory under the corpus root.

    Failures are isolated per video: one bad video is logged and skipped,
    the rest of the run continues.
    """
    bank = latents.MemoryBank(opts.bank_dir)
    encoder_cfg = latents.EncoderConfig()
    pcfg = _predictor_config(opts)
    jobs = max(1, min(MAX_JOBS, opts.jobs))

    dirs = _video_dirs(opts.corpus)
    results: list[select.SelectionResult] = []
    failures: list[dict] = []

    def work(vdir: Path):
        started = time.perf_counter()
        res = _select_one(vdir, opts, bank, encoder_cfg, pcfg)
        _event("video_selected", video_id=vdir.name,
               elapsed_ms=round(1000 * (time.perf_counter() - started), 1))
        return res

    if jobs == 1:
        for vdir in dirs:
            try:
                results.append(work(vdir))
            except VapError as e:
                failures.append({"video_id": vdir.name, "error": str(e)})
                log.error("video failed", extra={"fields": {
                    "video_id": vdir.name, "error": str(e)}})
    else:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(work, vdir): vdir for vdir in dirs}
            for fut, vdir in futures.items():
                try:
                    results.append(fut.result())
                except VapError as e:
                    failures.append({"video_id": vdir.name, "error": str(e)})
                    log.error("video failed", extra={"fields": {
                        "video_id": vdir.name, "error": str(e)}})
        results.sort(key=lambda r: r.video_id)

    opts.out.mkdir(parents=True, exist_ok=True)
    select.write_selections(opts.out / "selections.jsonl", results)
    manifest = {
        "command": "select",
        "config": {
            "corpus": str(opts.corpus),
            "predictor": opts.predictor,
            "initial_frames": opts.initial_frames,
            "frames": opts.frames,
            "policy": opts.policy,
            "metric": opts.metric,
            "shift": opts.shift,
            "exclude_initial": opts.exclude_initial,
            "min_gap": opts.min_gap,
            "seed": opts.seed,
        },
        "encoder_fingerprint": encoder_cfg.fingerprint,
        "predictor_fingerprint": pcfg.fingerprint,
        "videos_done": len(results),
        "videos_failed": len(failures),
        "failures": failures,
        "bank": {"hits": bank.hits, "misses": bank.misses},
    }
    (opts.out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return results, failures


# --- eval pipeline -----------------------------------------------------------------


@dataclass
class EvalOptions:
    dataset: Path
    schema: str
    out: Path
    corpus: Path | None = None
    selections: Path | None = None
    policies: tuple[str, ...] = ("most_surprising",)
    frames: int = 8
    seed: int = 0
    oracle: str = "mock"  # "mock" | "vlm"
    vlm_endpoint: str | None = None
    vlm_model: str = "mock"
    vlm_key: str | None = None
    fixtures: Path | None = None
    label: str = "run"


def _records_for_policy(policy: str, opts: EvalOptions,
                        items: list[evalharness.QAItem],
                        profiles: dict[str, select.SimilarityProfile],
                        annotations: dict[str, synthworld.SurpriseAnnotation],
                        clips_dir: Path | None
                        ) -> list[evalharness.ResultRecord]:
    schema = evalharness.SCHEMAS[opts.schema]
    records: list[evalharness.ResultRecord] = []
    selections: dict[str, select.SelectionResult] = {}
    for vid, profile in profiles.items():
        n = min(opts.frames, len(profile))
        selections[vid] = _apply_policy(profile, policy, n, opts.seed)

    for item in items:
        if item.video_id not in selections:
            raise ConfigError(f"no selection for video {item.video_id!r}")
        sel = selections[item.video_id]
        started = time.perf_counter()
        if opts.oracle == "mock":
            truth = annotations[item.video_id].for_item(item.item_id)
            text = vlmclient.mock_oracle(item, sel.indices, truth)
            wall = 0.0
        else:
            template = vlmclient.TEMPLATES[schema.template_id]
            clip = ingest.load_frame_sequence(clips_dir / item.video_id)
            frames = [clip.frames[i] for i in sel.indices]
            req = vlmclient.render_prompt(template, item, frames,
                                          model_id=opts.vlm_model)
            text = vlmclient.complete(req, opts.vlm_endpoint, opts.vlm_key,
                                      fixtures_dir=opts.fixtures)
            wall = time.perf_counter() - started
        if isinstance(text, vlmclient.Blocked):
            records.append(evalharness.ResultRecord(
                item_id=item.item_id, parsed=None, drop_reason="blocked",
                frames_used=len(sel.indices), wall_clock_s=wall))
            continue
        try:
            parsed = vlmclient.parse_answer(text, schema.protocol)
        except Unparseable:
            records.append(evalharness.ResultRecord(
                item_id=item.item_id, parsed=None, drop_reason="unparseable",
                frames_used=len(sel.indices), wall_clock_s=wall))
            continue
        records.append(evalharness.ResultRecord(
            item_id=item.item_id, parsed=parsed,
            frames_used=len(sel.indices), wall_clock_s=wall))
    return records


def run_eval(opts: EvalOptions) -> dict[str, evalharness.RunReport]:
    items = evalharness.load_dataset(opts.dataset, opts.schema)

    if opts.selections is None:
        raise ConfigError("eval needs --selections (run `vap select` first)")
    rows = select.read_selections(opts.selections)
    profiles: dict[str, select.SimilarityProfile] = {}
    for r in rows:
        if r.scores is None:
            raise ConfigError(
                f"selection row for {r.video_id!r} carries no scores; "
                "re-run select to produce score-bearing selections")
        profiles[r.video_id] = select.SimilarityProfile(
            r.video_id, r.metric or "cosine", r.scores)

    annotations: dict[str, synthworld.SurpriseAnnotation] = {}
    if opts.oracle == "mock":
        if opts.corpus is None:
            raise ConfigError("mock oracle needs --corpus for annotations.jsonl")
        annotations = synthworld.load_annotations(opts.corpus / "annotations.jsonl")

    opts.out.mkdir(parents=True, exist_ok=True)
    reports: dict[str, evalharness.RunReport] = {}
    for policy in opts.policies:
        records = _records_for_policy(policy, opts, items, profiles,
                                      annotations, opts.corpus)
        label = f"{opts.label}-{policy}" if len(opts.policies) > 1 else opts.label
        report = evalharness.evaluate_run(records, items, label=label)
        reports[policy] = report
        stem = f"report-{policy}" if len(opts.policies) > 1 else "report"
        with open(opts.out / f"records-{policy}.jsonl", "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
        (opts.out / f"{stem}.json").write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        (opts.out / f"{stem}.txt").write_text(report.render_text() + "\n",
                                              encoding="utf-8")
        _event("eval_done", policy=policy, accuracy=round(report.accuracy, 4),
               drop_rate=round(report.drop_rate, 4))
    return reports


# --- argument plumbing ---------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key=value config file")
    p.add_argument("--verbose", action="store_true")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="vap",
        description="Expectation-driven keyframe selection and evaluation.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _add_common(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--total-frames", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--objects", type=int)
    p.add_argument("--anomaly-count", type=int)
    p.add_argument("--anomaly-kind", choices=synthworld.ANOMALY_KINDS)
    p.add_argument("--anomaly-window", type=int)

    p = sub.add_parser("select", help="score videos and pick keyframes")
    _add_common(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--predictor", choices=prior.PREDICTOR_KINDS)
    p.add_argument("--endpoint")
    p.add_argument("--initial-frames", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--policy", choices=select.POLICIES)
    p.add_argument("--metric", choices=select.METRICS)
    p.add_argument("--shift", choices=("left", "middle", "right"))
    p.add_argument("--exclude-initial", action="store_true", default=None)
    p.add_argument("--min-gap", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--bank-dir")
    p.add_argument("--jobs", type=int)
    p.add_argument("--resize", help="WIDTHxHEIGHT, e.g. 720x480")
    p.add_argument("--fps", type=float)
    p.add_argument("--ssim-threshold", type=float)

    p = sub.add_parser("eval", help="answer questions from selected frames")
    _add_common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--schema", choices=sorted(evalharness.SCHEMAS))
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--corpus", type=Path)
    p.add_argument("--selections", type=Path)
    p.add_argument("--policy", help="policy or comma list of policies")
    p.add_argument("--frames", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--oracle", choices=("mock", "vlm"))
    p.add_argument("--vlm-endpoint")
    p.add_argument("--vlm-model")
    p.add_argument("--vlm-key")
    p.add_argument("--fixtures", type=Path)
    p.add_argument("--label")

    p = sub.add_parser("compare", help="compare two run reports")
    _add_common(p)
    p.add_argument("--baseline", type=Path, required=True,
                   help="report JSON, or JSON list of reports")
    p.add_argument("--candidate", type=Path, required=True)
    p.add_argument("--mode", choices=("iso_compute", "iso_accuracy"),
                   required=True)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("ablate", help="sweep one axis and evaluate each value")
    _add_common(p)
    p.add_argument("--axis", choices=("frames", "initial_frames", "shift"),
                   required=True)
    p.add_argument("--values", required=True, help="comma separated values")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--schema", choices=sorted(evalharness.SCHEMAS))
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--predictor", choices=prior.PREDICTOR_KINDS)
    p.add_argument("--endpoint")
    p.add_argument("--initial-frames", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--policy", choices=select.POLICIES)
    p.add_argument("--metric", choices=select.METRICS)
    p.add_argument("--shift", choices=("left", "middle", "right"))
    p.add_argument("--seed", type=int)
    p.add_argument("--bank-dir")

    p = sub.add_parser("cache", help="inspect or clear the latent bank")
    _add_common(p)
    p.add_argument("action", choices=("stat", "clear"))
    p.add_argument("--bank-dir")

    return ap


def _parse_resize(spec: str) -> tuple[int, int]:
    try:
        w, h = spec.lower().split("x")
        return int(w), int(h)
    except ValueError as e:
        raise ConfigError(f"bad --resize {spec!r}, expected WIDTHxHEIGHT") from e


def _cmd_synth(args, file_cfg: dict) -> int:
    template = synthworld.WorldConfig(
        total_frames=int(_effective(args.total_frames, "total_frames", file_cfg, 128)),
        width=int(_effective(args.width, "width", file_cfg, 160)),
        height=int(_effective(args.height, "height", file_cfg, 96)),
        n_objects=int(_effective(args.objects, "objects", file_cfg, 3)),
        anomaly_count=int(_effective(args.anomaly_count, "anomaly_count", file_cfg, 4)),
        anomaly_kind=str(_effective(args.anomaly_kind, "anomaly_kind", file_cfg, "teleport")),
        anomaly_window=int(_effective(args.anomaly_window, "anomaly_window", file_cfg, 5)),
    )
    count = int(_effective(args.count, "count", file_cfg, 8))
    seed = int(_effective(args.seed, "seed", file_cfg, 0))
    ids = synthworld.generate_corpus(template, count, seed, args.out)
    _event("corpus_written", videos=len(ids), out=str(args.out))
    print(f"wrote {len(ids)} videos to {args.out}")
    return 0


def _select_options(args, file_cfg: dict) -> SelectOptions:
    resize = _effective(args.resize, "resize", file_cfg)
    return SelectOptions(
        corpus=args.corpus,
        out=args.out,
        predictor=str(_effective(args.predictor, "predictor", file_cfg, "linear")),
        endpoint=_effective(args.endpoint, "endpoint", file_cfg),
        initial_frames=int(_effective(args.initial_frames, "initial_frames", file_cfg, 16)),
        frames=int(_effective(args.frames, "frames", file_cfg, 8)),
        policy=str(_effective(args.policy, "policy", file_cfg, "most_surprising")),
        metric=str(_effective(args.metric, "metric", file_cfg, "cosine")),
        shift=str(_effective(args.shift, "shift", file_cfg, "middle")),
        exclude_initial=bool(_effective(args.exclude_initial, "exclude_initial",
                                        file_cfg, False)),
        min_gap=int(_effective(args.min_gap, "min_gap", file_cfg, 0)),
        seed=int(_effective(args.seed, "seed", file_cfg, 0)),
        bank_dir=_effective(args.bank_dir, "bank_dir", file_cfg),
        jobs=int(_effective(args.jobs, "jobs", file_cfg, 1)),
        resize=_parse_resize(resize) if resize else None,
        fps=_effective(args.fps, "fps", file_cfg),
        ssim_threshold=float(_effective(
            getattr(args, "ssim_threshold", None), "ssim_threshold", file_cfg,
            prior.DEFAULT_SSIM_THRESHOLD)),
    )


def _cmd_select(args, file_cfg: dict) -> int:
    opts = _select_options(args, file_cfg)
    results, failures = run_select(opts)
    print(f"selected for {len(results)} videos, {len(failures)} failed")
    if failures and results:
        return 2
    if failures:
        return 1
    return 0


def _cmd_eval(args, file_cfg: dict) -> int:
    policy_raw = str(_effective(args.policy, "policy", file_cfg, "most_surprising"))
    policies = tuple(p.strip() for p in policy_raw.split(",") if p.strip())
    for p in policies:
        if p not in select.POLICIES:
            raise ConfigError(f"unknown policy {p!r}")
    opts = EvalOptions(
        dataset=args.dataset,
        schema=str(_effective(args.schema, "schema", file_cfg, "synthetic")),
        out=args.out,
        corpus=args.corpus,
        selections=_effective(args.selections, "selections", file_cfg),
        policies=policies,
        frames=int(_effective(args.frames, "frames", file_cfg, 8)),
        seed=int(_effective(args.seed, "seed", file_cfg, 0)),
        oracle=str(_effective(args.oracle, "oracle", file_cfg, "mock")),
        vlm_endpoint=_effective(args.vlm_endpoint, "vlm_endpoint", file_cfg),
        vlm_model=str(_effective(args.vlm_model, "vlm_model", file_cfg, "mock")),
        vlm_key=_effective(args.vlm_key, "vlm_key", file_cfg),
        fixtures=args.fixtures,
        label=str(_effective(args.label, "label", file_cfg, "run")),
    )
    if opts.selections is not None:
        opts.selections = Path(opts.selections)
    reports = run_eval(opts)
    for policy, report in reports.items():
        print(report.render_text())
        print()
    return 0


def _load_reports(path: Path) -> list[evalharness.RunReport]:
    obj = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(obj, list):
        return [evalharness.RunReport.from_dict(o) for o in obj]
    return [evalharness.RunReport.from_dict(obj)]


def _cmd_compare(args, file_cfg: dict) -> int:
    baseline = _load_reports(args.baseline)
    candidate = _load_reports(args.candidate)
    comparison = evalharness.compare_runs(baseline, candidate, args.mode)
    print(comparison.to_text())
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(comparison.to_dict(), indent=2,
                                       sort_keys=True), encoding="utf-8")
    return 0


def _cmd_ablate(args, file_cfg: dict) -> int:
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values is empty")
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    schema = str(_effective(args.schema, "schema", file_cfg, "synthetic"))

    rows = []
    for value in values:
        sel_args = argparse.Namespace(
            corpus=args.corpus, out=out / f"sel-{args.axis}-{value}",
            predictor=args.predictor, endpoint=args.endpoint,
            initial_frames=args.initial_frames, frames=args.frames,
            policy=args.policy, metric=args.metric, shift=args.shift,
            exclude_initial=None, min_gap=None, seed=args.seed,
            bank_dir=args.bank_dir, jobs=None, resize=None, fps=None,
            ssim_threshold=None)
        opts = _select_options(sel_args, file_cfg)
        if args.axis == "frames":
            opts.frames = int(value)
        elif args.axis == "initial_frames":
            opts.initial_frames = int(value)
        else:
            if value not in ("left", "middle", "right"):
                raise ConfigError(f"shift value must be left|middle|right, got {value!r}")
            opts.shift = value
        results, failures = run_select(opts)
        if failures and not results:
            return 1

        eopts = EvalOptions(
            dataset=args.dataset, schema=schema,
            out=out / f"eval-{args.axis}-{value}",
            corpus=args.corpus,
            selections=opts.out / "selections.jsonl",
            policies=(opts.policy,),
            frames=opts.frames, seed=opts.seed,
            label=f"{args.axis}={value}",
        )
        report = run_eval(eopts)[opts.policy]
        rows.append({"value": value, "accuracy": report.accuracy,
                     "accuracy_strict": report.accuracy_strict,
                     "drop_rate": report.drop_rate,
                     "frames": opts.frames,
                     "initial_frames": opts.initial_frames,
                     "shift": opts.shift})

    table = {"axis": args.axis, "rows": rows}
    accs = [r["accuracy"] for r in rows]
    if args.axis == "frames":
        table["non_decreasing"] = all(a <= b + 1e-12 for a, b in zip(accs, accs[1:]))
    if args.axis == "shift":
        table["max_spread_pts"] = round(100 * (max(accs) - min(accs)), 2)
    (out / "ablation.json").write_text(
        json.dumps(table, indent=2, sort_keys=True), encoding="utf-8")

    width = max(len(str(r["value"])) for r in rows)
    print(f"axis: {args.axis}")
    for r in rows:
        print(f"  {str(r['value']):<{width}}  accuracy={100 * r['accuracy']:.1f}%  "
              f"drop_rate={100 * r['drop_rate']:.2f}%")
    return 0


def _cmd_cache(args, file_cfg: dict) -> int:
    bank = latents.MemoryBank(_effective(args.bank_dir, "bank_dir", file_cfg))
    if args.action == "stat":
        st = bank.stat()
        print(json.dumps({"root": str(bank.root), "entries": st.entries,
                          "total_bytes": st.total_bytes}, indent=2))
    else:
        removed = bank.clear()
        print(f"removed {removed} entries from {bank.root}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "select": _cmd_select,
    "eval": _cmd_eval,
    "compare": _cmd_compare,
    "ablate": _cmd_ablate,
    "cache": _cmd_cache,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _setup_logging(getattr(args, "verbose", False))
    file_cfg: dict = {}
    if getattr(args, "config", None):
        file_cfg = parse_config_file(args.config)
    try:
        return _COMMANDS[args.command](args, file_cfg)
    except VapError as e:
        log.error("fatal", extra={"fields": {"error": str(e),
                                             "kind": type(e).__name__}})
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
