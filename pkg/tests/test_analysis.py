import csv
import json

import numpy as np
import pytest

from snapdiff import (
    ExpectedWells,
    SensorConfig,
    intensity_sweep,
    ratio_at_zero,
    sample_frames,
    sample_sequential_frames,
    variance_field,
    variance_histogram,
    weighted_linear_fit,
)
from snapdiff import scenes
from snapdiff.analysis import LinearFit, _ratio_from_fits, report_to_csv, report_to_json
from snapdiff.simulator import ModulationPattern, integrate_wells

SEED = 0xACE0FBA5E


def cfg(eta=1.0, rho=1.0, read=0.0, w=8, h=8):
    return SensorConfig(contrast=eta, gain=rho, read_variance=read, width=w, height=h)


# ------------------------------------------------------------ variance field


def test_identical_frames_have_zero_variance_field():
    frames = np.tile(np.arange(16.0).reshape(4, 4), (5, 1, 1))
    assert not variance_field(frames).any()


def test_variance_field_needs_two_frames():
    with pytest.raises(ValueError):
        variance_field(np.zeros((1, 4, 4)))


def test_variance_fields_of_both_readouts_at_dark():
    config = cfg(read=10.0, w=16, h=16)
    wells = ExpectedWells.constant(0.0, 0.0, config.shape)
    snap = variance_field(sample_frames(wells, config, SEED, np.arange(400)))
    seq = variance_field(sample_sequential_frames(wells, config, SEED + 1, np.arange(400)))
    assert snap.mean() == pytest.approx(10.0, rel=0.05)
    assert seq.mean() == pytest.approx(20.0, rel=0.05)


def test_snapshot_histogram_sits_left_of_sequential():
    """Variance histogram comparison on the polarization scene."""
    h = w = 16
    scene = scenes.polarization_scene(
        np.full((h, w), 50.0), np.full((h, w), 300.0)
    )
    config = cfg(eta=0.9, read=12.0, w=w, h=h)
    wells = integrate_wells(scene, ModulationPattern.square_5050(), config)
    n = 100
    snap = variance_field(sample_frames(wells, config, SEED, np.arange(n)))
    seq = variance_field(sample_sequential_frames(wells, config, SEED + 1, np.arange(n)))
    assert snap.mean() < seq.mean()
    edges_s, counts_s = variance_histogram(snap)
    assert counts_s.sum() == snap.size
    # histogram is invariant to pixel permutation
    perm = np.random.default_rng(0).permutation(snap.size)
    edges_p, counts_p = variance_histogram(snap.ravel()[perm].reshape(snap.shape))
    assert np.array_equal(edges_s, edges_p) and np.array_equal(counts_s, counts_p)


# --------------------------------------------------------------- linear fit


def test_fit_recovers_exact_line():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    fit = weighted_linear_fit(x, 5.0 + 2.0 * x, np.full(4, 0.1))
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.intercept == pytest.approx(5.0, abs=1e-12)
    assert fit.chi2 == pytest.approx(0.0, abs=1e-18)


def test_fit_uncertainties_match_closed_form():
    # equal sigmas: classic OLS formulas
    x = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    y = np.array([1.1, 2.9, 5.2, 6.8, 9.1])
    s = 0.5
    fit = weighted_linear_fit(x, y, np.full(5, s))
    n = x.size
    sxx = ((x - x.mean()) ** 2).sum()
    assert fit.slope_se == pytest.approx(s / np.sqrt(sxx))
    assert fit.intercept_se == pytest.approx(s * np.sqrt(1.0 / n + x.mean() ** 2 / sxx))


def test_fit_rejects_degenerate_input():
    with pytest.raises(ValueError):
        weighted_linear_fit([1.0, 1.0, 1.0], [1.0, 2.0, 3.0], [0.1, 0.1, 0.1])
    with pytest.raises(ValueError):
        weighted_linear_fit([1.0, 2.0], [1.0, 2.0], [0.1, 0.0])


# -------------------------------------------------------------------- ratio


def test_ratio_propagation_matches_hand_calculation():
    fit_pre = LinearFit(1.0, 10.0, 0.0, 0.22, 0.0, 4)
    fit_post = LinearFit(1.0, 20.0, 0.0, 0.30, 0.0, 4)
    est = _ratio_from_fits(fit_pre, fit_post)
    assert est.defined
    assert est.value == pytest.approx(2.0)
    assert est.sigma == pytest.approx(2.0 * np.hypot(0.30 / 20.0, 0.22 / 10.0))


def test_equal_intercepts_give_unit_ratio():
    fit = LinearFit(1.0, 7.0, 0.0, 0.1, 0.0, 4)
    est = _ratio_from_fits(fit, fit)
    assert est.value == pytest.approx(1.0)


def test_non_positive_intercept_is_undefined():
    fit_pre = LinearFit(1.0, -0.2, 0.0, 0.1, 0.0, 4)
    fit_post = LinearFit(1.0, 5.0, 0.0, 0.1, 0.0, 4)
    est = _ratio_from_fits(fit_pre, fit_post)
    assert not est.defined
    assert np.isnan(est.value)
    assert "undefined" in est.note


# -------------------------------------------------------------------- sweep


@pytest.fixture(scope="module")
def sweep_report():
    config = cfg(eta=1.0, read=10.0, w=16, h=16)
    return intensity_sweep([0.0, 50.0, 100.0, 200.0], config, 400, seed=SEED)


def test_sweep_intercepts_recover_read_terms(sweep_report):
    r = sweep_report
    assert r.fit_pre.intercept == pytest.approx(10.0, abs=3.0 * r.fit_pre.intercept_se)
    assert r.fit_post.intercept == pytest.approx(20.0, abs=3.0 * r.fit_post.intercept_se)
    assert r.ratio.defined
    assert r.ratio.value == pytest.approx(2.0, abs=3.0 * r.ratio.sigma)


def test_sweep_slopes_follow_shot_noise_scaling(sweep_report):
    # variance grows by gain^2 contrast^2 * d(sum of wells)/d(level) = 2
    for fit in (sweep_report.fit_pre, sweep_report.fit_post):
        assert fit.slope == pytest.approx(2.0, abs=3.0 * fit.slope_se)


def test_sweep_difference_is_read_variance(sweep_report):
    r = sweep_report
    delta = r.var_post - r.var_pre
    se = np.hypot(r.se_pre, r.se_post)
    assert np.all(np.abs(delta - 10.0) < 3.0 * se)


def test_sweep_histograms_cover_all_pixels(sweep_report):
    for edges, counts in (sweep_report.hist_pre, sweep_report.hist_post):
        assert counts.sum() == 16 * 16
        assert edges.size == counts.size + 1
    assert np.all(sweep_report.var_pre >= 0.0)


def test_ratio_at_zero_reads_report(sweep_report):
    est = ratio_at_zero(sweep_report)
    assert est.value == sweep_report.ratio.value


def test_sweep_without_read_noise_has_tiny_intercepts():
    config = cfg(eta=0.8, read=0.0, w=8, h=8)
    report = intensity_sweep([0.0, 40.0, 80.0], config, 300, seed=SEED + 7)
    assert abs(report.fit_pre.intercept) < 5.0 * max(report.fit_pre.intercept_se, 1e-9)
    assert abs(report.fit_post.intercept) < 5.0 * max(report.fit_post.intercept_se, 1e-9)
    # slopes agree within uncertainty
    se = np.hypot(report.fit_pre.slope_se, report.fit_post.slope_se)
    assert abs(report.fit_pre.slope - report.fit_post.slope) < 3.0 * se
    # ratio at zero: either undefined (intercept noise) or near 1 is fine;
    # with zero intercepts anything finite must come from noise
    if report.ratio.defined:
        assert report.ratio.value == pytest.approx(1.0, abs=6.0 * report.ratio.sigma)


def test_sweep_validation():
    config = cfg()
    with pytest.raises(ValueError):
        intensity_sweep([0.0, 1.0], config, 10)
    with pytest.raises(ValueError):
        intensity_sweep([1.0, 1.0, 1.0], config, 10)
    with pytest.raises(ValueError):
        intensity_sweep([0.0, 1.0, 2.0], config, 1)


def test_report_serialization(tmp_path, sweep_report):
    csv_path = tmp_path / "sweep.csv"
    json_path = tmp_path / "sweep.json"
    report_to_csv(sweep_report, csv_path)
    report_to_json(sweep_report, json_path)
    with open(csv_path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["level", "var_pre", "se_pre", "var_post", "se_post"]
    assert len(rows) == 1 + sweep_report.levels.size
    doc = json.loads(json_path.read_text())
    assert doc["ratio_defined"]
    assert doc["ratio"] == pytest.approx(sweep_report.ratio.value)
    assert doc["intercept_pre"] == pytest.approx(sweep_report.fit_pre.intercept)
