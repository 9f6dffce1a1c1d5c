"""
A pocket-size benchmark with a deterministic answerer
======================================================

Builds a 12-video corpus, answers its questions with the mock oracle under
three selection policies, and aggregates the runs exactly the way a real
benchmark would: accuracy, drop rate, frames per question, then an
equal-compute comparison between two of the runs.
"""

from vap.evalharness import ResultRecord, compare_runs, evaluate_run
from vap.ingest import uniform_sample
from vap.latents import EncoderConfig, LatentSequence, encode_clip
from vap.prior import PredictorConfig, PredictorRequest, predict_full
from vap.select import (score_frames, select_least_surprising,
                        select_most_surprising, select_random)
from vap.synthworld import WorldConfig, iter_corpus
from vap.vlmclient import mock_oracle, parse_answer

BUDGET = 8

# --- score 12 scripted videos once, reuse the profiles for every policy
base = WorldConfig(total_frames=128, anomaly_count=4, anomaly_window=5,
                   anomaly_kind="spawn", seed=11)
profiles, anchor_sets, truths, all_items = {}, {}, {}, []
for _, clip, truth, items in iter_corpus(base, 12, seed=11):
    vid = clip.video_id
    total = len(clip.frames)
    anchors = uniform_sample(total, 16)
    real = encode_clip(clip, EncoderConfig())
    initial = LatentSequence(vid, real.encoder_fingerprint,
                             [real.latents[i] for i in anchors])
    request = PredictorRequest(video_id=vid, initial_indices=anchors,
                               initial_latents=initial, question="",
                               answers=[], generation_prompt="",
                               target_length=total)
    profiles[vid] = score_frames(real, predict_full(
        request, PredictorConfig(kind="linear")), "cosine")
    anchor_sets[vid] = set(anchors.indices)
    truths[vid] = truth
    all_items.extend(items)
print(f"corpus ready: {len(profiles)} videos, {len(all_items)} questions")


def answer_run(label, choose):
    """One full run: pick frames per video, ask the oracle per question."""
    records = []
    for item in all_items:
        picked = choose(item.video_id)
        reply = mock_oracle(item, picked,
                            truths[item.video_id].for_item(item.item_id))
        records.append(ResultRecord(item_id=item.item_id,
                                    parsed=parse_answer(reply, "egoschema"),
                                    frames_used=len(picked)))
    return evaluate_run(records, all_items, label=label)


runs = {}
runs["most_surprising"] = answer_run(
    "most_surprising",
    lambda vid: select_most_surprising(
        profiles[vid], BUDGET, exclude=anchor_sets[vid]).indices.indices)
runs["random"] = answer_run(
    "random",
    lambda vid: select_random(len(profiles[vid]), BUDGET,
                              seed=int(vid[1:])).indices.indices)
runs["least_surprising"] = answer_run(
    "least_surprising",
    lambda vid: select_least_surprising(
        profiles[vid], BUDGET, exclude=anchor_sets[vid]).indices.indices)

print(f"\n{'policy':<18} {'accuracy':>8} {'drop':>6} {'frames/q':>9}")
for label, report in runs.items():
    print(f"{label:<18} {report.accuracy:>8.4f} {report.drop_rate:>6.2f} "
          f"{report.mean_frames_per_question:>9.1f}")

# --- equal-compute pairing: same frame budget, who answers better?
paired = compare_runs([runs["random"]], [runs["most_surprising"]],
                      "iso_compute")
print()
print(paired.to_text())
