"""
How the desk-scale predictor fills the gaps
============================================

The predictor only ever sees a handful of anchor latents. Everything between
them is made up, and this script shows the three ways of making it up: hold
the last anchor, interpolate linearly, or bisect recursively with a
similarity check that stops early once the endpoints agree.
"""

import numpy as np

from vap.latents import LatentFrame
from vap.prior import recursive_interpolate, ssim


def sim(a, b):
    return ssim(LatentFrame(a, 0), LatentFrame(b, 1))


# --- structural similarity on tiny grids, by hand
flat = np.full((1, 2, 2), 0.5)
bumpy = np.array([[[0.9, 0.1], [0.1, 0.9]]])
print("ssim(flat, flat)  =", sim(flat, flat))
print("ssim(flat, bumpy) =", round(sim(flat, bumpy), 5))
x = np.array([[[1.0, -1.0]]])
print("ssim(x, -x)       =", round(sim(x, -x), 5),
      "(sign flip is as different as it gets)")

# --- recursive bisection between two endpoint grids
left = np.zeros((1, 1, 1))
right = np.ones((1, 1, 1))
span = 4  # four interior frames to invent

filled = recursive_interpolate(left, right, span, threshold=1.0)
print("\nendpoints 0 and 1, threshold 1.0 (never stop early):")
print("  interior values:", [float(g[0, 0, 0]) for g in filled])
print("  midpoints of midpoints, so quarter steps with a floor bias")

# with distant endpoints the similarity check fails and bisection recurses;
# with near-identical endpoints it stops at once and fills linearly
near_right = np.full((1, 1, 1), 1.01)
near_left = np.ones((1, 1, 1))
print("\nendpoints 1.0 and 1.01, default threshold:")
print("  ssim =", round(sim(near_left, near_right), 5))
filled = recursive_interpolate(near_left, near_right, span)
print("  interior values:", [round(float(g[0, 0, 0]), 4) for g in filled])
print("  early stop: plain linear steps, no bisection bias")

# --- the bias disappears exactly when the span is one less than a power of 2
print("\nfloor bias by span (endpoints 0 and 1, threshold 1.0):")
for span in (3, 4, 7, 10):
    filled = recursive_interpolate(left, right, span, threshold=1.0)
    vals = [round(float(g[0, 0, 0]), 4) for g in filled]
    linear = [round((i + 1) / (span + 1), 4) for i in range(span)]
    tag = "matches linear" if vals == linear else "floor-biased"
    print(f"  span {span:2d}: {vals}  ({tag})")
