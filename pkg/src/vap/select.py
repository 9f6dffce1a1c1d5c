"""Frame scoring and selection policies.

Each real latent is compared against the predicted latent at the same index.
Where prediction and reality disagree most, something unexpected happened;
those are the frames worth sending to the answering model.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    FingerprintMismatch,
    InvalidCount,
    LengthMismatch,
    NonFiniteInput,
    NotEnoughEligible,
    ShapeMismatch,
)
from .ingest import IndexSet, uniform_sample
from .latents import LatentFrame, LatentSequence

POLICIES = ("most_surprising", "least_surprising", "random", "uniform")
METRICS = ("cosine", "latent_perceptual", "dot")


def _check_pair(a: LatentFrame, b: LatentFrame) -> tuple[np.ndarray, np.ndarray]:
    if a.grid.shape != b.grid.shape:
        raise ShapeMismatch(f"grids {a.grid.shape} vs {b.grid.shape}")
    ga = a.grid.astype(np.float64)
    gb = b.grid.astype(np.float64)
    if not (np.isfinite(ga).all() and np.isfinite(gb).all()):
        raise NonFiniteInput("latent grids must be finite")
    return ga, gb


def cosine_similarity(a: LatentFrame, b: LatentFrame) -> float:
    """Cosine of the angle between two flattened latent grids.

    Either norm zero compares as 0.0; bitwise-identical nonzero grids
    compare as exactly 1.0.
    """
    ga, gb = _check_pair(a, b)
    na = float(np.linalg.norm(ga))
    nb = float(np.linalg.norm(gb))
    if na == 0.0 or nb == 0.0:
        return 0.0
    if np.array_equal(ga, gb):
        return 1.0
    val = float(np.dot(ga.ravel(), gb.ravel()) / (na * nb))
    return max(-1.0, min(1.0, val))


def dot_similarity(a: LatentFrame, b: LatentFrame) -> float:
    """Unnormalized inner product; kept as a deliberately scale-sensitive baseline."""
    ga, gb = _check_pair(a, b)
    return float(np.dot(ga.ravel(), gb.ravel()))


_AUGMENTATIONS = ("identity", "hflip", "shift", "scale")


def _augment(grid: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return grid
    if kind == "hflip":
        return grid[:, :, ::-1]
    if kind == "shift":
        return np.roll(grid, 1, axis=2)
    if kind == "scale":
        return 0.9 * grid
    raise ShapeMismatch(f"unknown augmentation {kind!r}")


def latent_perceptual_distance(a: LatentFrame, b: LatentFrame) -> float:
    """Energy-normalized squared error, averaged over channels and a small
    augmentation ensemble (identity, horizontal flip, one-cell cyclic width
    shift, 0.9x amplitude). Zero iff the grids are identical; symmetric."""
    ga, gb = _check_pair(a, b)
    terms = []
    for kind in _AUGMENTATIONS:
        xa = _augment(ga, kind)
        xb = _augment(gb, kind)
        for c in range(xa.shape[0]):
            num = float(((xa[c] - xb[c]) ** 2).mean())
            den = 1.0 + float((xa[c] ** 2).mean()) + float((xb[c] ** 2).mean())
            terms.append(num / den)
    return float(np.mean(terms))


@dataclass(frozen=True)
class SimilarityProfile:
    """Per-index agreement between real and predicted latents. Higher = more
    expected; the interesting frames sit at the low end."""

    video_id: str
    metric: str
    scores: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.scores)


def score_frames(real: LatentSequence, predicted: LatentSequence,
                 metric: str = "cosine") -> SimilarityProfile:
    if metric not in METRICS:
        raise ShapeMismatch(f"metric must be one of {METRICS}, got {metric!r}")
    if len(real) != len(predicted):
        raise LengthMismatch(f"{len(real)} real vs {len(predicted)} predicted latents")
    if real.encoder_fingerprint != predicted.encoder_fingerprint:
        raise FingerprintMismatch(
            f"{real.encoder_fingerprint} vs {predicted.encoder_fingerprint}")

    if metric == "cosine":
        fn = cosine_similarity
    elif metric == "dot":
        fn = dot_similarity
    else:
        def fn(a, b):  # distance flipped so low still means surprising
            return -latent_perceptual_distance(a, b)

    scores = tuple(fn(r, p) for r, p in zip(real.latents, predicted.latents))
    return SimilarityProfile(real.video_id, metric, scores)


@dataclass(frozen=True)
class SelectionResult:
    policy: str
    indices: IndexSet
    video_id: str = ""
    metric: str | None = None
    scores: tuple[float, ...] | None = None
    seed: int | None = None


def _greedy_pick(order: list[int], n: int, min_gap: int) -> list[int]:
    chosen: list[int] = []
    for idx in order:
        if min_gap > 0 and any(abs(idx - c) < min_gap for c in chosen):
            continue
        chosen.append(idx)
        if len(chosen) == n:
            break
    if len(chosen) < n:
        raise NotEnoughEligible(
            f"could only place {len(chosen)} of {n} indices with min_gap={min_gap}")
    return sorted(chosen)


def _ranked_select(profile: SimilarityProfile, n: int, *, descending: bool,
                   exclude=None, min_gap: int = 0) -> SelectionResult:
    total = len(profile)
    excluded = set(exclude) if exclude is not None else set()
    eligible = [i for i in range(total) if i not in excluded]
    if n < 1:
        raise InvalidCount(f"n must be >= 1, got {n}")
    if n > len(eligible):
        raise NotEnoughEligible(f"{len(eligible)} eligible indices, need {n}")
    if min_gap < 0:
        raise InvalidCount(f"min_gap must be >= 0, got {min_gap}")

    if descending:
        order = sorted(eligible, key=lambda i: (-profile.scores[i], i))
        policy = "least_surprising"
    else:
        order = sorted(eligible, key=lambda i: (profile.scores[i], i))
        policy = "most_surprising"
    picked = _greedy_pick(order, n, min_gap)
    return SelectionResult(policy=policy, indices=IndexSet(tuple(picked), total),
                           video_id=profile.video_id, metric=profile.metric,
                           scores=profile.scores)


def select_most_surprising(profile: SimilarityProfile, n: int, exclude=None,
                           min_gap: int = 0) -> SelectionResult:
    """Pick the n lowest-scoring indices (score ascending, index ascending
    tiebreak), optionally skipping an exclude set and enforcing a minimum
    spacing between picks in rank order."""
    return _ranked_select(profile, n, descending=False, exclude=exclude,
                          min_gap=min_gap)


def select_least_surprising(profile: SimilarityProfile, n: int, exclude=None,
                            min_gap: int = 0) -> SelectionResult:
    """Mirror of select_most_surprising with descending score order."""
    return _ranked_select(profile, n, descending=True, exclude=exclude,
                          min_gap=min_gap)


def select_random(total: int, n: int, seed: int) -> SelectionResult:
    if not 1 <= n <= total:
        raise InvalidCount(f"n must be in [1, {total}], got {n}")
    picked = sorted(random.Random(seed).sample(range(total), n))
    return SelectionResult(policy="random",
                           indices=IndexSet(tuple(picked), total), seed=seed)


def select_uniform(total: int, n: int) -> SelectionResult:
    return SelectionResult(policy="uniform", indices=uniform_sample(total, n))


# --- selection files --------------------------------------------------------------

def selection_to_json(result: SelectionResult) -> dict:
    return {
        "video_id": result.video_id,
        "policy": result.policy,
        "metric": result.metric,
        "n": len(result.indices),
        "indices": list(result.indices.indices),
        "scores": list(result.scores) if result.scores is not None else None,
        "seed": result.seed,
        "universe_size": result.indices.universe_size,
    }


def selection_from_json(obj: dict) -> SelectionResult:
    scores = obj.get("scores")
    return SelectionResult(
        policy=obj["policy"],
        indices=IndexSet(tuple(int(i) for i in obj["indices"]),
                         int(obj["universe_size"])),
        video_id=obj.get("video_id", ""),
        metric=obj.get("metric"),
        scores=tuple(float(s) for s in scores) if scores is not None else None,
        seed=obj.get("seed"),
    )


def write_selections(path: str | Path, results: list[SelectionResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(selection_to_json(r), sort_keys=True) + "\n")


def read_selections(path: str | Path) -> list[SelectionResult]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(selection_from_json(json.loads(line)))
    return out
