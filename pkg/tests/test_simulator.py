import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import snapdiff.simulator as sim
from snapdiff import (
    CaptureMode,
    ExpectedWells,
    ModulationPattern,
    SceneSpec,
    SensorConfig,
    capture,
    capture_wells,
    integrate_sequence,
    integrate_wells,
    sample_frame,
    sample_frames,
    sample_sequential_frames,
    skellam_moments,
)
from _stats import diff_central_moments, se_of_mean, se_of_sample_variance

SEED = 0xBADC0FFEE


def cfg(eta=1.0, rho=1.0, read=0.0, w=4, h=4):
    return SensorConfig(contrast=eta, gain=rho, read_variance=read, width=w, height=h)


def flat_scene(a, b, amb, shape):
    return SceneSpec(np.full(shape, a), np.full(shape, b), np.full(shape, amb))


# ---------------------------------------------------------------- patterns


def test_pattern_factories_and_duty():
    assert ModulationPattern.square_5050().duty() == 0.5
    assert ModulationPattern.constant_on().duty() == 1.0
    assert ModulationPattern.constant_off().duty() == 0.0
    p = ModulationPattern.single_transition(0.25)
    assert p.duty() == pytest.approx(0.75)  # level 0 first, then 1


def test_pattern_validation():
    with pytest.raises(ValueError):
        ModulationPattern("asymmetric_split", (0.5, 0.5), 0)
    with pytest.raises(ValueError):
        ModulationPattern("asymmetric_split", (1.5,), 0)
    with pytest.raises(ValueError):
        ModulationPattern.single_transition(0.0)
    with pytest.raises(ValueError):
        ModulationPattern("nonsense")


@settings(max_examples=80)
@given(
    ts=st.lists(
        st.floats(min_value=0.01, max_value=0.99), min_size=0, max_size=6, unique=True
    ),
    level=st.integers(min_value=0, max_value=1),
)
def test_duty_complement_sums_to_one(ts, level):
    p = ModulationPattern("asymmetric_split", tuple(sorted(ts)), level)
    assert p.duty() + p.complement().duty() == pytest.approx(1.0)


@settings(max_examples=40)
@given(
    ts=st.lists(
        st.floats(min_value=0.01, max_value=0.99), min_size=1, max_size=5, unique=True
    ),
    level=st.integers(min_value=0, max_value=1),
)
def test_overlap_agrees_with_dense_sampling(ts, level):
    p = ModulationPattern("asymmetric_split", tuple(sorted(ts)), level)
    grid = (np.arange(20_000) + 0.5) / 20_000
    f = np.zeros(grid.size)
    for a, b, lv in p.segments():
        if lv == 1:
            f[(grid >= a) & (grid < b)] = 1.0
    for t0, t1 in [(0.0, 1.0), (0.25, 0.5), (0.1, 0.93)]:
        approx = f[(grid >= t0) & (grid < t1)].sum() / 20_000
        assert p.in_phase_overlap(t0, t1) == pytest.approx(approx, abs=1e-3)


# ---------------------------------------------------------- well integration


def test_anti_phase_sources_separate_perfectly():
    config = cfg()
    wells = integrate_wells(
        flat_scene(100.0, 40.0, 0.0, config.shape), ModulationPattern.square_5050(), config
    )
    assert np.all(wells.plus == 100.0)
    assert np.all(wells.minus == 40.0)


def test_ambient_splits_evenly_and_cancels_in_mean():
    config = cfg()
    wells = integrate_wells(
        flat_scene(0.0, 0.0, 200.0, config.shape), ModulationPattern.square_5050(), config
    )
    assert np.all(wells.plus == 100.0)
    assert np.all(wells.minus == 100.0)
    mean, _ = skellam_moments(wells, config)
    assert np.all(mean == 0.0)


def test_constant_patterns_route_everything_one_way():
    config = cfg()
    scene = flat_scene(30.0, 20.0, 10.0, config.shape)
    on = integrate_wells(scene, ModulationPattern.constant_on(), config)
    assert np.all(on.plus == 40.0) and np.all(on.minus == 0.0)
    off = integrate_wells(scene, ModulationPattern.constant_off(), config)
    assert np.all(off.plus == 0.0) and np.all(off.minus == 30.0)


def test_asymmetric_split_divides_ambient():
    config = cfg()
    wells = integrate_wells(
        flat_scene(0.0, 0.0, 80.0, config.shape),
        ModulationPattern.single_transition(0.5),
        config,
    )
    assert np.all(wells.plus == 40.0) and np.all(wells.minus == 40.0)


@settings(max_examples=50)
@given(
    a=st.floats(min_value=0.0, max_value=1e4),
    b=st.floats(min_value=0.0, max_value=1e4),
    amb=st.floats(min_value=0.0, max_value=1e4),
)
def test_ambient_leaves_expected_difference_unchanged(a, b, amb):
    config = cfg(eta=0.7, rho=1.3, read=2.0)
    base = integrate_wells(
        flat_scene(a, b, 0.0, config.shape), ModulationPattern.square_5050(), config
    )
    lit = integrate_wells(
        flat_scene(a, b, amb, config.shape), ModulationPattern.square_5050(), config
    )
    m0, v0 = skellam_moments(base, config)
    m1, v1 = skellam_moments(lit, config)
    assert np.allclose(m0, m1)
    assert np.allclose(v1 - v0, config.gain**2 * config.contrast**2 * amb)


def _sequence_quadrature(seq, pattern, steps=10_000):
    """Dense-sampling oracle for the piecewise-constant time integral."""
    k = seq.shape[0]
    ts = (np.arange(steps) + 0.5) / steps
    sample = np.minimum((ts * k).astype(int), k - 1)
    f = np.zeros(steps)
    for a, b, lv in pattern.segments():
        if lv == 1:
            f[(ts >= a) & (ts < b)] = 1.0
    g = seq[sample]  # (steps, H, W)
    plus = np.tensordot(f, g, axes=(0, 0)) / steps
    minus = np.tensordot(1.0 - f, g, axes=(0, 0)) / steps
    return plus, minus


def test_sequence_integration_matches_quadrature():
    config = cfg(w=3, h=2)
    k = 16
    ramp = np.linspace(0.0, 1.0, k)[:, None, None] * np.ones((k, 2, 3))
    for pattern in [
        ModulationPattern.single_transition(0.5),
        ModulationPattern.single_transition(0.3, initial_level=1),
        ModulationPattern("asymmetric_split", (0.2, 0.7), 0),
    ]:
        wells = integrate_sequence(ramp, pattern, config)
        oplus, ominus = _sequence_quadrature(ramp, pattern)
        assert np.allclose(wells.plus, oplus, atol=2e-4)
        assert np.allclose(wells.minus, ominus, atol=2e-4)


def test_ramp_scene_puts_late_mass_in_plus_well():
    config = cfg(w=1, h=1)
    k = 16
    ramp = ((np.arange(k) + 0.5) / k)[:, None, None] * np.ones((k, 1, 1))
    wells = integrate_sequence(ramp, ModulationPattern.single_transition(0.5), config)
    assert wells.plus[0, 0] > wells.minus[0, 0]
    assert wells.plus[0, 0] + wells.minus[0, 0] == pytest.approx(0.5, rel=1e-12)


def test_constant_sequence_splits_by_transition():
    config = cfg(w=2, h=2)
    seq = np.full((8, 2, 2), 3.0)
    wells = integrate_sequence(seq, ModulationPattern.single_transition(0.5), config)
    assert np.allclose(wells.plus, 1.5)
    assert np.allclose(wells.minus, 1.5)


def test_balanced_pattern_makes_dynamics_invisible():
    # the high-frequency 50/50 wave splits every instant evenly, so even a
    # time-varying sequence lands symmetrically in the wells
    config = cfg(w=2, h=2)
    seq = np.linspace(0.0, 4.0, 8)[:, None, None] * np.ones((8, 2, 2))
    wells = integrate_sequence(seq, ModulationPattern.square_5050(), config)
    assert np.allclose(wells.plus, wells.minus)
    assert np.allclose(wells.plus + wells.minus, seq.mean(axis=0))


def test_integration_validates_shapes():
    config = cfg(w=4, h=4)
    with pytest.raises(ValueError):
        integrate_wells(flat_scene(1, 1, 0, (3, 3)), ModulationPattern.square_5050(), config)
    with pytest.raises(ValueError):
        integrate_sequence(np.zeros((1, 4, 4)), ModulationPattern.square_5050(), config)


# ------------------------------------------------------------------ sampling


def test_empty_wells_and_no_read_noise_give_zero_frame():
    config = cfg(read=0.0)
    frame = sample_frame(ExpectedWells.constant(0.0, 0.0, config.shape), config, SEED, 0)
    assert not frame.values.any()


def test_sample_frame_matches_analytic_moments():
    config = cfg(eta=0.5, read=10.0, w=1, h=1)
    wells = ExpectedWells.constant(100.0, 40.0, config.shape)
    n = 100_000
    frames = sample_frames(wells, config, SEED, np.arange(n))
    pix = frames[:, 0, 0]
    var, mu4 = diff_central_moments(100.0, 40.0, 0.5, 1.0, 10.0)
    assert abs(pix.mean() - 30.0) < 3.0 * se_of_mean(var, n)
    assert abs(pix.var(ddof=1) - 45.0) < 3.0 * se_of_sample_variance(var, mu4, n)


def test_sampling_is_deterministic_and_batch_consistent():
    config = cfg(eta=0.8, read=5.0)
    wells = ExpectedWells.constant(60.0, 10.0, config.shape)
    a = sample_frames(wells, config, SEED, np.arange(10))
    b = sample_frames(wells, config, SEED, np.arange(10))
    assert np.array_equal(a, b)
    single = sample_frame(wells, config, SEED, 7)
    assert np.array_equal(a[7], single.values)
    assert single.seed == SEED and single.frame_index == 7


def test_chunk_size_cannot_change_frames(monkeypatch):
    config = cfg(eta=0.8, read=5.0, w=8, h=8)
    wells = ExpectedWells.constant(60.0, 10.0, config.shape)
    ref = sample_frames(wells, config, SEED, np.arange(32))
    monkeypatch.setattr(sim, "_CHUNK_ELEMENTS", 64)
    tiny = sample_frames(wells, config, SEED, np.arange(32))
    assert np.array_equal(ref, tiny)


def test_sequential_doubles_read_variance_at_zero_signal():
    config = cfg(read=10.0, w=2, h=2)
    wells = ExpectedWells.constant(0.0, 0.0, config.shape)
    n = 20_000
    seq = sample_sequential_frames(wells, config, SEED, np.arange(n))
    snap = sample_frames(wells, config, SEED, np.arange(n))
    se20 = se_of_sample_variance(20.0, 3 * 400.0, n)
    se10 = se_of_sample_variance(10.0, 3 * 100.0, n)
    assert abs(seq.var(ddof=1) - 20.0) < 3.0 * se20 * 2
    assert abs(snap.var(ddof=1) - 10.0) < 3.0 * se10 * 2


def test_readout_models_agree_without_read_noise():
    config = cfg(eta=1.0, read=0.0, w=2, h=2)
    wells = ExpectedWells.constant(100.0, 40.0, config.shape)
    idx = np.arange(2_000)
    seq = sample_sequential_frames(wells, config, SEED, idx)
    snap = sample_frames(wells, config, SEED, idx)
    assert np.array_equal(seq, snap)
    var, mu4 = diff_central_moments(100.0, 40.0, 1.0, 1.0, 0.0)
    n = seq.size
    assert abs(seq.var(ddof=1) - 140.0) < 3.0 * se_of_sample_variance(var, mu4, n)


@pytest.mark.parametrize("plus,minus", [(0.0, 0.0), (50.0, 50.0), (200.0, 30.0)])
def test_sequential_minus_snapshot_variance_is_read_term(plus, minus):
    config = cfg(eta=0.6, read=8.0, w=2, h=2)
    wells = ExpectedWells.constant(plus, minus, config.shape)
    n = 30_000
    seq = sample_sequential_frames(wells, config, SEED, np.arange(n))
    snap = sample_frames(wells, config, SEED, np.arange(n))
    var, mu4 = diff_central_moments(plus, minus, 0.6, 1.0, 8.0)
    var2, mu42 = diff_central_moments(plus, minus, 0.6, 1.0, 16.0)
    se = np.hypot(
        se_of_sample_variance(var, mu4, n * 4), se_of_sample_variance(var2, mu42, n * 4)
    )
    delta = seq.var(ddof=1) - snap.var(ddof=1)
    assert abs(delta - 8.0) < 3.0 * se


# ------------------------------------------------------------------ capture


def test_temporal_capture_of_static_scene_is_zero_mean():
    config = cfg(read=0.0, w=4, h=4)
    seq = np.full((16, 4, 4), 10.0)
    wells, border = capture_wells(
        seq, ModulationPattern.square_5050(), CaptureMode.temporal_gradient(0.5), config
    )
    assert border is None
    assert np.allclose(wells.plus, wells.minus)
    frames = sample_frames(wells, config, SEED, np.arange(20_000))
    assert abs(frames.mean()) < 3.0 * se_of_mean(10.0, frames.size)


def test_temporal_capture_requires_sequence():
    config = cfg()
    scene = flat_scene(1.0, 1.0, 0.0, config.shape)
    with pytest.raises(ValueError):
        capture(scene, ModulationPattern.square_5050(), CaptureMode.temporal_gradient(0.5), config, SEED, 0)


def test_spatial_shift_of_uniform_image_cancels_away_from_border():
    config = cfg(read=0.0, w=8, h=8)
    img = np.full(config.shape, 25.0)
    wells, border = capture_wells(
        img, ModulationPattern.square_5050(), CaptureMode.spatial_shift(1, 0), config
    )
    mean, _ = skellam_moments(wells, config)
    assert np.all(mean[:, 1:] == 0.0)
    assert np.all(border[:, 0]) and not border[:, 1:].any()
    frame = capture(img, ModulationPattern.square_5050(), CaptureMode.spatial_shift(1, 0), config, SEED, 0)
    assert frame.border_mask is not None
    assert np.array_equal(frame.border_mask, border)


def test_spatial_shift_step_edge_responds_at_edge_only():
    config = cfg(read=0.0, w=8, h=4)
    img = np.zeros(config.shape)
    img[:, 4:] = 30.0  # step edge between columns 3 and 4
    wells, border = capture_wells(
        img, ModulationPattern.square_5050(), CaptureMode.spatial_shift(1, 0), config
    )
    mean, _ = skellam_moments(wells, config)
    # brute-force oracle: difference of the image and its shifted copy
    oracle = img - np.pad(img, ((0, 0), (1, 0)))[:, :-1]
    assert np.array_equal(mean[~border], oracle[~border])
    interior = mean[:, 1:]
    assert np.all(interior[:, 3] == 30.0)
    assert np.count_nonzero(interior) == interior.shape[0]


def test_spatial_shift_validates_inputs():
    config = cfg(w=4, h=4)
    img = np.ones(config.shape)
    with pytest.raises(ValueError):
        capture_wells(img, ModulationPattern.square_5050(), CaptureMode.spatial_shift(4, 0), config)
    with pytest.raises(ValueError):
        capture_wells(
            flat_scene(1, 1, 0, config.shape),
            ModulationPattern.square_5050(),
            CaptureMode.spatial_shift(1, 0),
            config,
        )


def test_capture_dispatches_sequential_mode():
    config = cfg(read=25.0, w=2, h=2)
    scene = flat_scene(0.0, 0.0, 0.0, config.shape)
    pattern = ModulationPattern.square_5050()
    snap = capture(scene, pattern, CaptureMode.snapshot(), config, SEED, 3)
    seq = capture(scene, pattern, CaptureMode.sequential(), config, SEED, 3)
    assert not np.array_equal(snap.values, seq.values)
    # same photons (none here), different read draws
    assert snap.values.shape == seq.values.shape


def test_capture_mode_validation():
    with pytest.raises(ValueError):
        CaptureMode.temporal_gradient(0.0)
    with pytest.raises(ValueError):
        CaptureMode("bogus")
