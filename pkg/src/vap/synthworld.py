"""Synthetic videos with scripted surprises, plus ground truth and QA.

Scenes contain bright shapes drifting on a dark background with elastic
wall bounces. Each anomaly occupies one time window and either teleports an
object, flips its color, or spawns an extra object; outside its window the
scene follows nominal dynamics exactly, so prediction error has a known
place to live. Everything derives deterministically from the config seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InfeasibleConfig, IoError
from .evalharness import QAItem, item_to_json
from .ingest import Frame, IndexSet, VideoClip

ANOMALY_KINDS = ("color_flip", "teleport", "spawn")

# window placement keeps anomalies away from clip edges and each other so
# each one is separately measurable
_EDGE_MARGIN = 8
_MIN_SEPARATION = 12
_START_GRID = 8
_START_PHASE = 1

# colors are kept at similar total energy so anomalies on different objects
# perturb the latents by comparable amounts
_PALETTE = (
    ("red", (210, 70, 70)),
    ("green", (70, 210, 70)),
    ("blue", (70, 70, 210)),
    ("yellow", (175, 175, 60)),
    ("magenta", (175, 60, 175)),
    ("cyan", (60, 175, 175)),
    ("orange", (205, 135, 60)),
    ("purple", (135, 85, 205)),
)

_BACKGROUND = (14, 14, 18)

# Anomalies stay violently dynamic inside their window (the affected thing
# moves or flickers every frame) so that even an anchor frame landing inside
# the window only explains itself, never its neighbours. Amplitudes grow
# with the phase so each window has one clearly most-surprising frame, the
# next a bit less, and so on; a global top-n then spreads across windows
# instead of exhausting its budget on a single one.
_JITTER = (
    (0, 0), (10, -6), (-14, 8), (16, -9),
    (-20, 10), (22, -8), (-24, 9), (26, -10),
)
_HOP_X = max(abs(x) for x, _ in _JITTER)
_HOP_Y = max(abs(y) for _, y in _JITTER)

# Spawn anomalies render one bright disk per in-window frame, at positions
# far apart from each other and from every moving object, so no frame is
# explained by an anchor landing elsewhere in the window. Disk areas follow
# a geometric ladder of "rungs" interleaved across windows: each window owns
# one clearly-largest disk, but earlier windows hold systematically higher
# rungs. A greedy most-surprising sweep therefore drains windows
# progressively (a small budget covers the strongest windows first, a larger
# budget reaches them all), and the ordering is independent of where the
# anchor frames fall.
#
# Within a window the ladder peaks at the center phase and leaves the
# smallest disks at the edges and at phase 1. Evenly spaced anchor sets meet
# grid-aligned windows (see _place_windows) only at phase 1, so an anchor
# landing inside a window absorbs a minor rung and bleeds only a small disk
# into the predictions of neighbouring frames; the dominant rungs, and hence
# the selection ranking, stay put.
_SPAWN_COLOR = (235, 235, 235)
_SPAWN_RADIUS = 16.0
_RUNG_DECAY = 0.85
_SPAWN_RUNGS = (
    (16, 9, 1, 2, 4),
    (17, 12, 3, 5, 7),
    (18, 14, 6, 8, 10),
    (20, 19, 11, 13, 15),
)
_SPAWN_CLEARANCES = (34.0, 28.0, 22.0, 16.0, 10.0)
_SPAWN_MIN_SPACING = 40.0


@dataclass(frozen=True)
class WorldConfig:
    total_frames: int = 128
    width: int = 160
    height: int = 96
    n_objects: int = 3
    anomaly_count: int = 4
    anomaly_kind: str = "teleport"
    anomaly_window: int = 5
    fps: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.total_frames < 1:
            raise InfeasibleConfig(f"total_frames must be >= 1, got {self.total_frames}")
        if self.width % 8 or self.height % 8 or self.width < 32 or self.height < 32:
            raise InfeasibleConfig(
                f"frame size {self.width}x{self.height} must be >=32 and on the 8-grid")
        if not 1 <= self.n_objects <= len(_PALETTE):
            raise InfeasibleConfig(f"n_objects must be in [1, {len(_PALETTE)}]")
        if self.anomaly_count < 0:
            raise InfeasibleConfig("anomaly_count must be >= 0")
        if self.anomaly_window < 1:
            raise InfeasibleConfig("anomaly_window must be >= 1")
        if self.anomaly_kind not in ANOMALY_KINDS:
            raise InfeasibleConfig(
                f"anomaly_kind must be one of {ANOMALY_KINDS}, got {self.anomaly_kind!r}")


@dataclass(frozen=True)
class SurpriseWindow:
    start: int
    end: int  # half-open
    kind: str
    item_id: str


@dataclass(frozen=True)
class SurpriseAnnotation:
    video_id: str
    windows: tuple[SurpriseWindow, ...]

    def for_item(self, item_id: str) -> "SurpriseAnnotation":
        return SurpriseAnnotation(
            self.video_id,
            tuple(w for w in self.windows if w.item_id == item_id))


@dataclass(frozen=True)
class _ObjectSpec:
    shape: str  # "circle" | "rect"
    color_name: str
    color: tuple[int, int, int]
    size: float
    pos0: tuple[float, float]
    vel: tuple[float, float]


def _place_windows(rng: np.random.Generator, cfg: WorldConfig) -> list[int]:
    """Sample pairwise-disjoint window start indices, or fail loudly.

    Starts snap to an 8-frame grid with offset 1 where the clip leaves room
    for it: evenly spaced anchor sets then meet every window at the same
    in-window phase, so a window's interaction with the anchors is decided
    by the world, not by where the sampling grid happens to fall.
    """
    if cfg.anomaly_count == 0:
        return []
    lo = _EDGE_MARGIN
    hi = cfg.total_frames - cfg.anomaly_window - _EDGE_MARGIN
    if hi < lo:
        raise InfeasibleConfig(
            f"{cfg.total_frames} frames leave no room for a window of "
            f"{cfg.anomaly_window} inside the edge margins")
    aligned = [s for s in range(lo, hi + 1) if s % _START_GRID == _START_PHASE]
    pool = aligned if len(aligned) >= cfg.anomaly_count else list(range(lo, hi + 1))
    for _ in range(500):
        starts = sorted(int(pool[int(rng.integers(0, len(pool)))])
                        for _ in range(cfg.anomaly_count))
        ok = all(b - a >= cfg.anomaly_window + _MIN_SEPARATION
                 for a, b in zip(starts, starts[1:]))
        if ok:
            return starts
    raise InfeasibleConfig(
        f"cannot place {cfg.anomaly_count} disjoint windows of "
        f"{cfg.anomaly_window} in {cfg.total_frames} frames")


def _spawn_radius(window_index: int, phase: int, window_width: int) -> float:
    """Disk radius for one in-window frame, from the rung ladder."""
    col = 4 if window_width <= 1 else int(round(phase * 4 / (window_width - 1)))
    row = _SPAWN_RUNGS[window_index % len(_SPAWN_RUNGS)]
    factor = _RUNG_DECAY ** (row[col] - 1)
    # windows beyond the ladder repeat it slightly shrunk
    factor *= 0.9 ** (window_index // len(_SPAWN_RUNGS))
    return _SPAWN_RADIUS * math.sqrt(factor)


def _spawn_sites(cfg: WorldConfig, trajectories: np.ndarray,
                 start: int, end: int) -> list[tuple[float, float]]:
    """Five well-separated spots that stay clear of every moving object
    for the duration of one window. Deterministic; relaxes the clearance
    requirement stepwise if the scene is crowded."""
    xs = np.arange(20.0, cfg.width - 19.0, 4.0)
    ys = np.arange(20.0, cfg.height - 19.0, 4.0)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    t0, t1 = max(start - 1, 0), min(end + 1, cfg.total_frames)
    occ = trajectories[t0:t1].reshape(-1, 2)
    clear = np.hypot(pts[:, None, 0] - occ[None, :, 0],
                     pts[:, None, 1] - occ[None, :, 1]).min(axis=1)

    picked = None
    for clearance in _SPAWN_CLEARANCES:
        keep = clear >= clearance
        if int(keep.sum()) < 5:
            continue
        cand, cd = pts[keep], clear[keep]
        chosen = [int(np.argmax(cd))]
        while len(chosen) < 5:
            sep = np.full(len(cand), np.inf)
            for c in chosen:
                sep = np.minimum(sep, np.hypot(cand[:, 0] - cand[c, 0],
                                               cand[:, 1] - cand[c, 1]))
            # clearance as a tiny tiebreak between equally-separated spots
            chosen.append(int(np.argmax(sep + 1e-3 * cd)))
        picked = cand[chosen]
        if min(float(np.hypot(*(picked[i] - picked[j])))
               for i in range(5) for j in range(i + 1, 5)) >= _SPAWN_MIN_SPACING:
            break
    if picked is None:
        raise InfeasibleConfig(
            f"no room for spawn sites in a {cfg.width}x{cfg.height} scene")
    return [(float(x), float(y)) for x, y in picked]


def _simulate(cfg: WorldConfig, objects: list[_ObjectSpec]) -> np.ndarray:
    """Nominal trajectories with elastic bounces: (T, n_objects, 2) float."""
    pos = np.array([o.pos0 for o in objects], dtype=np.float64)
    vel = np.array([o.vel for o in objects], dtype=np.float64)
    sizes = np.array([o.size for o in objects], dtype=np.float64)
    bounds = np.array([cfg.width, cfg.height], dtype=np.float64)

    out = np.empty((cfg.total_frames, len(objects), 2))
    for t in range(cfg.total_frames):
        out[t] = pos
        pos = pos + vel
        for axis in range(2):
            low = sizes + 1.0
            high = bounds[axis] - sizes - 1.0
            under = pos[:, axis] < low
            over = pos[:, axis] > high
            pos[under, axis] = 2 * low[under] - pos[under, axis]
            pos[over, axis] = 2 * high[over] - pos[over, axis]
            vel[under | over, axis] *= -1
    return out


def _draw(canvas: np.ndarray, xx: np.ndarray, yy: np.ndarray,
          shape: str, cx: float, cy: float, size: float,
          color: tuple[int, int, int]) -> None:
    if shape == "circle":
        mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= size * size
    else:
        mask = (np.abs(xx - cx) <= size) & (np.abs(yy - cy) <= size * 0.75)
    canvas[mask] = color


def _question_text(ordinal: int) -> str:
    return (f"Which unexpected event occurs in segment {ordinal} "
            f"of the video?")


_EVENT_TEXT = {
    "teleport": "the {color} {shape} suddenly jumps to a different part of the scene",
    "color_flip": "the {color} {shape} abruptly changes color",
    "spawn": "a bright extra object suddenly appears in the scene",
}

_DISTRACTOR_POOL = (
    "the {color} {shape} fades out gradually",
    "the {color} {shape} starts spinning in place",
    "all objects freeze for a moment",
    "the background flashes brightly",
    "nothing unusual happens in this segment",
    "the {color} {shape} splits into two copies",
    "the camera pans to a different scene",
)


def generate_video(cfg: WorldConfig, video_id: str | None = None
                   ) -> tuple[VideoClip, SurpriseAnnotation, list[QAItem]]:
    """Render one scripted video with its ground truth and QA items."""
    rng = np.random.default_rng(cfg.seed)
    video_id = video_id or f"synth-{cfg.seed}"

    palette_order = rng.permutation(len(_PALETTE))
    objects: list[_ObjectSpec] = []
    for i in range(cfg.n_objects):
        name, color = _PALETTE[palette_order[i]]
        shape = "circle" if rng.random() < 0.5 else "rect"
        size = float(rng.uniform(10.5, 11.5))
        pos0 = (float(rng.uniform(size + 2, cfg.width - size - 2)),
                float(rng.uniform(size + 2, cfg.height - size - 2)))
        angle = float(rng.uniform(0, 2 * np.pi))
        speed = float(rng.uniform(0.005, 0.012))
        objects.append(_ObjectSpec(shape, name, color, size, pos0,
                                   (speed * np.cos(angle), speed * np.sin(angle))))

    trajectories = _simulate(cfg, objects)
    starts = _place_windows(rng, cfg)

    windows: list[SurpriseWindow] = []
    targets: list[int] = []
    spawn_plan: list[dict[int, tuple[float, float, float]]] = []
    items: list[QAItem] = []
    for j, s in enumerate(starts):
        item_id = f"{video_id}-q{j}"
        windows.append(SurpriseWindow(start=s, end=s + cfg.anomaly_window,
                                      kind=cfg.anomaly_kind, item_id=item_id))
        target = int(rng.integers(0, cfg.n_objects))
        targets.append(target)
        plan: dict[int, tuple[float, float, float]] = {}
        if cfg.anomaly_kind == "spawn":
            sites = _spawn_sites(cfg, trajectories, s, s + cfg.anomaly_window)
            radii = [_spawn_radius(j, p, cfg.anomaly_window)
                     for p in range(cfg.anomaly_window)]
            # biggest disk gets the spot clearest of the moving objects
            for rank, p in enumerate(sorted(range(len(radii)),
                                            key=lambda p: -radii[p])):
                sx, sy = sites[rank % len(sites)]
                plan[p] = (sx, sy, radii[p])
        spawn_plan.append(plan)

        obj = objects[target]
        correct_text = _EVENT_TEXT[cfg.anomaly_kind].format(
            color=obj.color_name, shape=obj.shape)
        distractor_idx = rng.permutation(len(_DISTRACTOR_POOL))[:4]
        other = objects[(target + 1) % cfg.n_objects]
        distractors = [
            _DISTRACTOR_POOL[d].format(color=other.color_name, shape=other.shape)
            for d in distractor_idx
        ]
        answer = int(rng.integers(0, 5))
        options = distractors[:answer] + [correct_text] + distractors[answer:]
        items.append(QAItem(item_id=item_id, video_id=video_id,
                            question=_question_text(j + 1),
                            options=tuple(options), answer=answer,
                            qtype=cfg.anomaly_kind))

    xx, yy = np.meshgrid(np.arange(cfg.width, dtype=np.float64),
                         np.arange(cfg.height, dtype=np.float64))
    frames: list[Frame] = []
    for t in range(cfg.total_frames):
        canvas = np.empty((cfg.height, cfg.width, 3), dtype=np.uint8)
        canvas[:] = _BACKGROUND
        active = next((j for j, w in enumerate(windows)
                       if w.start <= t < w.end), None)
        phase = 0 if active is None else t - windows[active].start
        jx, jy = _JITTER[phase % len(_JITTER)]
        anomalous_draw = None
        for i, obj in enumerate(objects):
            cx, cy = trajectories[t, i]
            color = obj.color
            if active is not None and targets[active] == i:
                kind = cfg.anomaly_kind
                if kind == "teleport":
                    # jump to the far corner of a hop-safe box (guarantees a
                    # large displacement in both axes), then hop around the
                    # new spot every frame without ever clipping at a wall
                    lo_x, hi_x = obj.size + 1 + _HOP_X, cfg.width - obj.size - 1 - _HOP_X
                    lo_y, hi_y = obj.size + 1 + _HOP_Y, cfg.height - obj.size - 1 - _HOP_Y
                    cx = (lo_x if cx > cfg.width / 2 else hi_x) + jx
                    cy = (lo_y if cy > cfg.height / 2 else hi_y) + jy
                elif kind == "color_flip":
                    # slide further toward the complement every frame
                    frac = 0.4 + 0.6 * min(phase, 4) / 4.0
                    color = tuple(int(round(c + frac * ((255 - c) - c)))
                                  for c in obj.color)
                # defer so the anomalous object is drawn on top
                anomalous_draw = (obj.shape, cx, cy, obj.size, color)
                continue
            _draw(canvas, xx, yy, obj.shape, cx, cy, obj.size, color)
        if anomalous_draw is not None:
            _draw(canvas, xx, yy, *anomalous_draw)
        if active is not None and cfg.anomaly_kind == "spawn":
            sx, sy, radius = spawn_plan[active][phase]
            _draw(canvas, xx, yy, "circle", sx, sy, radius, _SPAWN_COLOR)
        frames.append(Frame(index=t, pixels=canvas, timestamp_s=t / cfg.fps))

    clip = VideoClip(video_id=video_id, frames=frames, fps=cfg.fps,
                     width=cfg.width, height=cfg.height)
    annotation = SurpriseAnnotation(video_id=video_id, windows=tuple(windows))
    return clip, annotation, items


def iter_corpus(template: WorldConfig, count: int, seed: int):
    """Yield (video_id, clip, annotation, items); video i uses seed + i."""
    for i in range(count):
        cfg = replace(template, seed=seed + i)
        video_id = f"v{i:04d}"
        clip, annotation, items = generate_video(cfg, video_id=video_id)
        yield video_id, clip, annotation, items


def generate_corpus(template: WorldConfig, count: int, seed: int,
                    out_dir: str | Path) -> list[str]:
    """Write a corpus to disk: frame directories plus annotation/QA manifests.

    Layout: <out_dir>/<video_id>/000000.png ... plus meta.json per video,
    and top-level annotations.jsonl / qa.jsonl. Returns the video ids.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        video_ids: list[str] = []
        with open(out / "annotations.jsonl", "w", encoding="utf-8") as ann_fh, \
                open(out / "qa.jsonl", "w", encoding="utf-8") as qa_fh:
            for video_id, clip, annotation, items in iter_corpus(template, count, seed):
                vdir = out / video_id
                vdir.mkdir(exist_ok=True)
                for f in clip.frames:
                    Image.fromarray(f.pixels).save(vdir / f"{f.index:06d}.png")
                (vdir / "meta.json").write_text(
                    json.dumps({"fps": clip.fps}), encoding="utf-8")
                ann_fh.write(json.dumps({
                    "video_id": video_id,
                    "windows": [
                        {"start": w.start, "end": w.end, "kind": w.kind,
                         "item_id": w.item_id}
                        for w in annotation.windows
                    ],
                }, sort_keys=True) + "\n")
                for item in items:
                    qa_fh.write(json.dumps(item_to_json(item), sort_keys=True) + "\n")
                video_ids.append(video_id)
        return video_ids
    except OSError as e:
        raise IoError(f"corpus write failed under {out}: {e}") from e


def load_annotations(path: str | Path) -> dict[str, SurpriseAnnotation]:
    """Read an annotations.jsonl manifest back into per-video ground truth."""
    out: dict[str, SurpriseAnnotation] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            windows = tuple(
                SurpriseWindow(start=int(w["start"]), end=int(w["end"]),
                               kind=w["kind"], item_id=w["item_id"])
                for w in obj["windows"]
            )
            out[obj["video_id"]] = SurpriseAnnotation(obj["video_id"], windows)
    return out


def surprise_recall(selected: IndexSet, annotation: SurpriseAnnotation,
                    slack: int = 2) -> float:
    """Fraction of surprise windows with a selected index within slack frames.

    A window [start, end) is hit when some selected index lies in
    [start - slack, end - 1 + slack]. No windows means nothing to miss (1.0).
    """
    if not annotation.windows:
        return 1.0
    hits = 0
    for w in annotation.windows:
        lo, hi = w.start - slack, w.end - 1 + slack
        if any(lo <= idx <= hi for idx in selected):
            hits += 1
    return hits / len(annotation.windows)


def empirical_random_recall(annotations: list[SurpriseAnnotation], total: int,
                            n: int, trials: int, seed: int,
                            slack: int = 2) -> float:
    """Mean recall of seeded random selections, spread across the videos.

    Trial t draws n of ``total`` indices uniformly without replacement and
    scores them against video t mod len(annotations).
    """
    if not annotations:
        raise InfeasibleConfig("need at least one annotated video")
    rng = np.random.default_rng(seed)
    per_video = [[] for _ in annotations]
    for t in range(trials):
        per_video[t % len(annotations)].append(t)

    recalls = np.empty(trials)
    for vid_i, trial_ids in enumerate(per_video):
        if not trial_ids:
            continue
        ann = annotations[vid_i]
        k = len(trial_ids)
        keys = rng.random((k, total))
        picks = np.argpartition(keys, n - 1, axis=1)[:, :n]
        if not ann.windows:
            recalls[trial_ids] = 1.0
            continue
        hit_counts = np.zeros(k)
        for w in ann.windows:
            lo, hi = w.start - slack, w.end - 1 + slack
            hit = ((picks >= lo) & (picks <= hi)).any(axis=1)
            hit_counts += hit
        recalls[trial_ids] = hit_counts / len(ann.windows)
    return float(recalls.mean())
