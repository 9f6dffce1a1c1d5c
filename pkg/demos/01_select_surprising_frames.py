"""
Selecting surprising frames from a scripted video
==================================================

Walks the selection pipeline end to end on one synthetic clip: sample a few
anchor frames, predict the full latent sequence from them, score every real
frame against its prediction, and keep the frames the predictor got wrong.
The clip carries ground-truth anomaly windows, so we can check the answer.
"""

import numpy as np

from vap.ingest import uniform_sample
from vap.latents import EncoderConfig, LatentSequence, encode_clip
from vap.prior import PredictorConfig, PredictorRequest, predict_full
from vap.select import score_frames, select_most_surprising
from vap.synthworld import WorldConfig, generate_video

# --- one deterministic world with four scripted anomalies
cfg = WorldConfig(total_frames=128, anomaly_count=4, anomaly_window=5,
                  anomaly_kind="spawn", seed=7)
clip, truth, items = generate_video(cfg, "demo")
total = len(clip.frames)
print(f"video: {total} frames at {clip.width}x{clip.height}")
print("ground-truth windows:",
      [(w.start, w.end) for w in truth.windows])

# --- k uniformly spaced anchors stand in for "what we have seen so far"
anchors = uniform_sample(total, 16)
print("anchor indices:", list(anchors))

# --- encode the real frames once; reuse the anchor latents as conditioning
real = encode_clip(clip, EncoderConfig())
initial = LatentSequence("demo", real.encoder_fingerprint,
                         [real.latents[i] for i in anchors])

# --- predict the whole sequence from the anchors alone
request = PredictorRequest(video_id="demo", initial_indices=anchors,
                           initial_latents=initial, question="",
                           answers=[], generation_prompt="",
                           target_length=total)
predicted = predict_full(request, PredictorConfig(kind="linear"))

# --- cosine agreement per index: low score = the prediction missed
profile = score_frames(real, predicted, "cosine")
scores = np.asarray(profile.scores)
print(f"\nscore range: [{scores.min():.5f}, {scores.max():.5f}]")
for w in truth.windows:
    inside = scores[w.start:w.end].min()
    print(f"window {w.start:3d}..{w.end - 1:3d}: lowest score {inside:.5f}")

# --- keep the 8 most surprising frames, never re-picking an anchor
result = select_most_surprising(profile, 8, exclude=set(anchors.indices))
picked = result.indices.indices
print("\nselected:", list(picked))

hits = [idx for idx in picked
        if any(w.start <= idx < w.end for w in truth.windows)]
covered = {(w.start, w.end) for w in truth.windows
           for idx in picked if w.start <= idx < w.end}
print(f"{len(hits)} of 8 picks land inside a window; "
      f"{len(covered)} of {len(truth.windows)} windows covered")

# --- the same questions a real evaluation would ask about this clip
print("\nsample question:", items[0].question)
for j, option in enumerate(items[0].options):
    marker = "*" if j == items[0].answer else " "
    print(f"  {marker} ({j}) {option}")
