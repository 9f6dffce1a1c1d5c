"""Similarity metric, recursive interpolation, and the anchor predictors."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from vap import (
    IndexSet,
    LatentFrame,
    LatentSequence,
    PredictorConfig,
    PredictorRequest,
    ShapeMismatch,
    predict_full,
    recursive_interpolate,
    ssim,
)
from vap.prior import _ssim_grids


def lf(grid):
    return LatentFrame(grid=np.asarray(grid, dtype=np.float32), source_index=0)


def grids(*values, shape=(1, 2, 2)):
    return [np.full(shape, float(v), dtype=np.float32) for v in values]


def make_request(anchor_indices, anchor_grids, target_length, total=None):
    total = total if total is not None else target_length
    idx = IndexSet(tuple(anchor_indices), total)
    frames = [LatentFrame(grid=np.asarray(g, dtype=np.float32), source_index=i)
              for i, g in zip(anchor_indices, anchor_grids)]
    seq = LatentSequence("vid", "fp16charsabcdef0", frames)
    return PredictorRequest(
        video_id="vid", initial_indices=idx, initial_latents=seq,
        question="what changed?", answers=["a", "b"],
        generation_prompt="continue the scene", target_length=target_length)


class TestSsim:
    def test_identical_grids_score_one(self):
        g = np.random.default_rng(0).standard_normal((8, 3, 3))
        assert _ssim_grids(g, g) == 1.0

    def test_sign_flip_two_value_oracle(self):
        # zero-mean +-1 pattern against its negation: both mean terms vanish,
        # covariance is exactly -variance, so the score is
        # (-2 + 0.0009) / (2 + 0.0009) = -19991/20009
        x = np.array([[[1.0, -1.0]]])
        assert _ssim_grids(x, -x) == -19991 / 20009

    def test_all_zero_pair_scores_one(self):
        z = np.zeros((2, 2, 2))
        assert _ssim_grids(z, z) == 1.0

    def test_wrapper_matches_grids(self):
        a, b = grids(0.2, 0.7)
        assert ssim(lf(a), lf(b)) == _ssim_grids(a, b)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            _ssim_grids(np.zeros((1, 2, 2)), np.zeros((1, 2, 3)))

    def test_extreme_magnitudes_stay_finite(self):
        # the stabilizers scale with dynamic range; without internal
        # rescaling they under/overflow at these magnitudes and yield NaN
        tiny = np.full((2, 3, 3), 3.4e-247)
        zero = np.zeros((2, 3, 3))
        huge = np.full((2, 3, 3), 1e300)
        for pair in ((zero, tiny), (tiny, zero), (huge, -huge)):
            s = _ssim_grids(*pair)
            assert np.isfinite(s) and -1.0 <= s <= 1.0

    @given(hnp.arrays(np.float64, (2, 3, 3),
                      elements=st.floats(-100, 100)),
           hnp.arrays(np.float64, (2, 3, 3),
                      elements=st.floats(-100, 100)))
    @settings(max_examples=100)
    def test_symmetric_and_bounded(self, a, b):
        s = _ssim_grids(a, b)
        assert s == _ssim_grids(b, a)
        assert -1.0 - 1e-12 <= s <= 1.0 + 1e-12


class TestRecursiveInterpolate:
    def test_span_zero_is_empty(self):
        a, b = grids(0, 1)
        assert recursive_interpolate(a, b, 0) == []

    def test_span_one_is_midpoint(self):
        a, b = grids(0, 1)
        (mid,) = recursive_interpolate(a, b, 1)
        assert np.allclose(mid, 0.5)

    def test_power_of_two_spans_match_linear(self):
        a, b = grids(0, 1)
        for span in (1, 3, 7, 15, 31):
            out = recursive_interpolate(a, b, span, threshold=1.0)
            expected = np.linspace(0.0, 1.0, span + 2)[1:-1]
            got = [float(g[0, 0, 0]) for g in out]
            assert got == pytest.approx(list(expected), abs=1e-6), span

    def test_floor_bias_on_other_spans(self):
        # bisection picks floor midpoints, so span 4 lands off the linear grid
        a, b = grids(0, 1)
        out = recursive_interpolate(a, b, 4, threshold=1.0)
        assert [float(g[0, 0, 0]) for g in out] == [0.25, 0.5, 0.75, 0.875]

    def test_early_stop_fills_linearly(self):
        # endpoints similar enough to clear the threshold: one linear fill,
        # no bisection artifacts
        a = np.ones((1, 2, 2))
        b = 1.01 * np.ones((1, 2, 2))
        out = recursive_interpolate(a, b, 4, threshold=0.9)
        got = [float(g[0, 0, 0]) for g in out]
        expected = [1.0 + 0.01 * t / 5 for t in range(1, 5)]
        assert got == pytest.approx(expected, abs=1e-6)

    def test_output_dtype_and_count(self):
        a, b = grids(0, 5)
        out = recursive_interpolate(a, b, 6)
        assert len(out) == 6
        assert all(g.dtype == np.float32 for g in out)

    def test_errors(self):
        a, b = grids(0, 1)
        with pytest.raises(ShapeMismatch):
            recursive_interpolate(a, np.zeros((2, 2, 2)), 3)
        with pytest.raises(ShapeMismatch):
            recursive_interpolate(a, b, -1)

    @given(span=st.integers(0, 40),
           va=st.floats(-10, 10), vb=st.floats(-10, 10))
    @settings(max_examples=80)
    def test_values_stay_in_hull(self, span, va, vb):
        a, b = grids(va, vb)
        out = recursive_interpolate(a, b, span)
        lo, hi = min(va, vb), max(va, vb)
        for g in out:
            assert lo - 1e-4 <= float(g[0, 0, 0]) <= hi + 1e-4


class TestPredictorConfig:
    def test_kind_validation(self):
        with pytest.raises(ShapeMismatch):
            PredictorConfig(kind="quadratic")

    def test_remote_needs_endpoint(self):
        with pytest.raises(ShapeMismatch):
            PredictorConfig(kind="remote")
        with pytest.raises(ShapeMismatch):
            PredictorConfig(kind="linear", remote_endpoint="http://x")
        PredictorConfig(kind="remote", remote_endpoint="http://x")  # ok

    def test_threshold_range(self):
        with pytest.raises(ShapeMismatch):
            PredictorConfig(ssim_threshold=1.5)

    def test_fingerprints_distinguish_kinds(self):
        fps = {PredictorConfig(kind=k).fingerprint
               for k in ("hold", "linear", "ssim_recursive")}
        assert len(fps) == 3
        assert all(len(f) == 16 for f in fps)


class TestRequestValidation:
    def test_happy_path(self):
        make_request([0, 4], grids(0, 1), 6).validate()

    def test_needs_an_anchor(self):
        req = make_request([0], grids(0), 4)
        object.__setattr__(req.initial_indices, "indices", ())
        req.initial_latents.latents.clear()
        with pytest.raises(ShapeMismatch):
            req.validate()

    def test_index_latent_count_mismatch(self):
        req = make_request([0, 4], grids(0), 6)
        with pytest.raises(ShapeMismatch):
            req.validate()

    def test_target_must_cover_last_anchor(self):
        req = make_request([0, 4], grids(0, 1), 4, total=8)
        with pytest.raises(ShapeMismatch):
            req.validate()

    def test_anchor_shapes_must_agree(self):
        req = make_request([0, 4], [np.zeros((1, 2, 2)), np.zeros((1, 2, 3))], 6)
        with pytest.raises(ShapeMismatch):
            req.validate()


class TestPredictFull:
    def test_hold_repeats_last_anchor(self):
        req = make_request([0, 4], grids(0, 1), 6)
        out = predict_full(req, PredictorConfig(kind="hold"))
        vals = [float(f.grid[0, 0, 0]) for f in out.latents]
        assert vals == [0, 0, 0, 0, 1, 1]
        assert out.latents[0] is req.initial_latents.latents[0]
        assert out.latents[4] is req.initial_latents.latents[1]
        assert out.latents[2].is_generated

    def test_linear_interpolates_between_anchors(self):
        req = make_request([0, 4], grids(0, 1), 7)
        out = predict_full(req, PredictorConfig(kind="linear"))
        vals = [float(f.grid[0, 0, 0]) for f in out.latents]
        assert vals == pytest.approx([0, 0.25, 0.5, 0.75, 1, 1, 1])

    def test_linear_holds_outside_anchor_range(self):
        req = make_request([2, 4], grids(5, 9), 6)
        out = predict_full(req, PredictorConfig(kind="linear"))
        vals = [float(f.grid[0, 0, 0]) for f in out.latents]
        assert vals == pytest.approx([5, 5, 5, 7, 9, 9])

    def test_recursive_quarters_on_span_three(self):
        req = make_request([0, 4], grids(0, 1), 5)
        out = predict_full(req, PredictorConfig(kind="ssim_recursive",
                                                ssim_threshold=1.0))
        vals = [float(f.grid[0, 0, 0]) for f in out.latents]
        assert vals == pytest.approx([0, 0.25, 0.5, 0.75, 1])

    def test_full_anchor_coverage_is_identity(self):
        for kind in ("hold", "linear", "ssim_recursive"):
            req = make_request([0, 1, 2], grids(3, 1, 4), 3)
            out = predict_full(req, PredictorConfig(kind=kind))
            assert all(o is a for o, a in
                       zip(out.latents, req.initial_latents.latents)), kind

    def test_metadata_carried_through(self):
        req = make_request([0, 3], grids(0, 1), 4)
        out = predict_full(req, PredictorConfig(kind="linear"))
        assert out.video_id == "vid"
        assert out.encoder_fingerprint == "fp16charsabcdef0"
        assert len(out) == 4

    @given(st.data())
    @settings(max_examples=60)
    def test_anchors_always_exact(self, data):
        total = data.draw(st.integers(2, 24))
        k = data.draw(st.integers(1, total))
        anchor_idx = sorted(data.draw(
            st.sets(st.integers(0, total - 1), min_size=k, max_size=k)))
        values = data.draw(st.lists(st.floats(-5, 5), min_size=len(anchor_idx),
                                    max_size=len(anchor_idx)))
        kind = data.draw(st.sampled_from(["hold", "linear", "ssim_recursive"]))
        req = make_request(anchor_idx, grids(*values), total)
        out = predict_full(req, PredictorConfig(kind=kind))
        assert len(out) == total
        for i, a in zip(anchor_idx, req.initial_latents.latents):
            assert out.latents[i] is a
        assert np.isfinite(out.stack()).all()
