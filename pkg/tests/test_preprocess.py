import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrdyn.model import Event, EventList, Recording, TimeWindow
from corrdyn.preprocess import (ConditionERP, EpochSet, PreprocessSettings, average_condition,
                                baseline_correct, design_butterworth, design_notch, epoch, filter_zero_phase,
                                filtfilt_array, grand_mean, preprocess_recording, reject_artifacts)

from _oracles import butterworth_lowpass_db

FS = 1000.0


def _epochs(data, window=None, label="c"):
    data = np.asarray(data, dtype=float)
    window = window or TimeWindow(0, data.shape[2])
    return EpochSet(label, tuple(f"E{i}" for i in range(data.shape[1])), window, FS, data)


def _erp(data, window, label="c"):
    data = np.asarray(data, dtype=float)
    return ConditionERP(label, tuple(f"E{i}" for i in range(len(data))), window, FS, data)


class TestDesign:
    def test_lowpass_default_setting(self):
        spec = design_butterworth("lowpass", 100, 48, FS)
        assert spec.order == 8
        assert abs(spec.gain_db(100.0)[0] + 3.0103) < 0.1

    def test_lowpass_matches_bilinear_oracle(self):
        spec = design_butterworth("lowpass", 100, 48, FS)
        f = np.array([10.0, 50.0, 100.0, 150.0, 200.0, 300.0])
        np.testing.assert_allclose(spec.gain_db(f), butterworth_lowpass_db(f, 100, 8, FS), atol=1e-8)

    def test_octave_attenuation(self):
        spec = design_butterworth("lowpass", 100, 48, FS)
        g100, g200 = spec.gain_db([100.0, 200.0])
        assert g100 - g200 >= 45.0

    def test_asymptotic_slope_within_5pct(self):
        # far from Nyquist, well above the cutoff, at a low cutoff
        spec = design_butterworth("lowpass", 10, 48, FS)
        g1, g2 = spec.gain_db([40.0, 80.0])
        assert abs((g1 - g2) - 48) / 48 < 0.05

    def test_highpass_blocks_dc(self):
        spec = design_butterworth("highpass", 0.1, 48, FS)
        assert abs(spec.response(0.0)[0]) < 1e-12

    def test_zero_phase_slope_halves_order(self):
        assert design_butterworth("lowpass", 100, 48, FS, zero_phase_slope=True).order == 4
        with pytest.raises(ValueError):
            design_butterworth("lowpass", 100, 18, FS, zero_phase_slope=True)

    @pytest.mark.parametrize("kind,cutoff,slope", [("lowpass", 500, 48), ("lowpass", 100, 45),
                                                   ("highpass", 0, 48), ("notakind", 10, 48),
                                                   ("lowpass", 100, 6)])
    def test_errors(self, kind, cutoff, slope):
        with pytest.raises(ValueError):
            design_butterworth(kind, cutoff, slope, FS)

    def test_shipped_specs_stable(self):
        for spec in PreprocessSettings().filters(FS):
            assert spec.is_stable()
            assert spec.order % 2 == 0

    @pytest.mark.xfail(strict=True, reason="0.1 Hz order-8 high-pass keeps ~2e-5 of its impulse energy past 10 s")
    def test_impulse_energy_tail(self):
        for spec in PreprocessSettings().filters(FS):
            from scipy import signal
            x = np.zeros(int(40 * FS))
            x[0] = 1
            h = signal.sosfilt(np.array(spec.sos), x)
            assert (h[int(10 * FS):] ** 2).sum() / (h ** 2).sum() < 1e-8

    def test_impulse_energy_tail_fast_filters(self):
        from scipy import signal
        s = PreprocessSettings()
        for spec in [design_butterworth("lowpass", s.lp, s.slope, FS), design_notch(50, FS)]:
            x = np.zeros(int(20 * FS))
            x[0] = 1
            h = signal.sosfilt(np.array(spec.sos), x)
            assert (h[int(10 * FS):] ** 2).sum() / (h ** 2).sum() < 1e-8


class TestZeroPhase:
    def test_dc_through_highpass(self):
        spec = design_butterworth("highpass", 0.1, 48, FS)
        rec = Recording(["A"], FS, np.full((1, 20000), 7.0))
        out = filter_zero_phase(rec, spec)
        assert np.abs(out.data).max() < 0.01
        assert 20 * np.log10(7.0 / np.abs(out.data).max()) >= 60

    def test_symmetric_pulse_no_shift(self):
        n = np.arange(10001)
        x = np.exp(-0.5 * ((n - 5000) / 20.0) ** 2)
        for spec in [design_butterworth("lowpass", 100, 48, FS), design_butterworth("lowpass", 10, 48, FS)]:
            y = filtfilt_array(x, spec)
            assert abs(int(np.argmax(y)) - 5000) <= 1

    def test_notch_attenuates_50hz(self):
        t = np.arange(20000) / FS
        x = np.sin(2 * np.pi * 50 * t)
        y = filtfilt_array(x, design_notch(50, FS))
        steady = slice(5000, 15000)
        atten = 20 * np.log10(np.sqrt(np.mean(x[steady] ** 2)) / np.sqrt(np.mean(y[steady] ** 2)))
        assert atten >= 30

    def test_shape_preserved_and_fs_checked(self):
        spec = design_butterworth("lowpass", 100, 48, FS)
        rec = Recording(["A", "B"], FS, np.random.default_rng(0).normal(size=(2, 500)))
        assert filter_zero_phase(rec, spec).data.shape == (2, 500)
        with pytest.raises(ValueError, match="fs"):
            filter_zero_phase(Recording(["A"], 500.0, np.zeros((1, 100))), spec)

    def test_non_finite(self):
        x = np.zeros(100)
        x[3] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            filtfilt_array(x, design_butterworth("lowpass", 100, 48, FS))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31), st.floats(-5, 5), st.floats(-5, 5))
    def test_linearity(self, seed, a, b):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=(2, 800))
        spec = design_butterworth("lowpass", 40, 48, FS)
        lhs = filtfilt_array(a * x + b * y, spec)
        rhs = a * filtfilt_array(x, spec) + b * filtfilt_array(y, spec)
        scale = max(np.abs(rhs).max(), 1e-300)
        assert np.abs(lhs - rhs).max() <= 1e-9 * scale + 1e-12


class TestEpoch:
    def test_ramp_slice(self):
        rec = Recording(["A"], FS, np.arange(1000.0)[None, :])
        sets = epoch(rec, EventList([Event(500, "x")]), TimeWindow(-2, 2))
        np.testing.assert_array_equal(sets["x"].data[0, 0], [498, 499, 500, 501])

    def test_same_label_grouped(self):
        rec = Recording(["A"], FS, np.zeros((1, 1000)))
        sets = epoch(rec, EventList([Event(100, "x"), Event(400, "x")]), TimeWindow(-10, 10))
        assert len(sets["x"].epochs) == 2

    def test_out_of_bounds_skipped(self, caplog):
        rec = Recording(["A"], FS, np.zeros((1, 1000)))
        sets = epoch(rec, EventList([Event(3, "x"), Event(600, "x")]), TimeWindow(-250, 100))
        assert len(sets["x"].epochs) == 1
        assert sets["x"].skipped == (3,)
        assert "skipped" in caplog.text


class TestReject:
    def test_boundary_cases(self):
        data = np.zeros((2, 1, 5))
        data[0, 0, 2] = 150.0
        data[1, 0, 1] = -99.9
        out = reject_artifacts(_epochs(data), 100)
        np.testing.assert_array_equal(out.kept, [False, True])

    def test_kept_samples_untouched(self):
        data = np.random.default_rng(2).normal(0, 60, size=(20, 3, 10))
        out = reject_artifacts(_epochs(data), 100)
        np.testing.assert_array_equal(out.data, data)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.floats(1, 200), st.floats(1, 200))
    def test_monotone_in_threshold(self, seed, t1, t2):
        lo, hi = sorted((t1, t2))
        data = np.random.default_rng(seed).normal(0, 50, size=(15, 2, 8))
        eps = _epochs(data)
        a, b = reject_artifacts(eps, lo).kept, reject_artifacts(eps, hi).kept
        assert not (a & ~b).any()
        peaks = np.abs(data).max(axis=(1, 2))
        np.testing.assert_array_equal(a, peaks <= lo)

    def test_threshold_positive(self):
        with pytest.raises(ValueError):
            reject_artifacts(_epochs(np.zeros((1, 1, 3))), 0)


class TestAverage:
    def test_constants(self):
        data = np.stack([np.ones((1, 4)), 3 * np.ones((1, 4))])
        np.testing.assert_array_equal(average_condition(_epochs(data)).data, 2 * np.ones((1, 4)))

    def test_single_epoch_identity(self):
        data = np.random.default_rng(3).normal(size=(1, 2, 6))
        erp = average_condition(_epochs(data))
        np.testing.assert_array_equal(erp.data, data[0])
        assert erp.n_epochs == 1

    def test_no_kept(self):
        eps = reject_artifacts(_epochs(np.full((2, 1, 3), 500.0)), 100)
        with pytest.raises(ValueError, match="no kept"):
            average_condition(eps)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31))
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        data = rng.normal(0, 10, size=(9, 2, 5))
        perm = rng.permutation(9)
        a = average_condition(_epochs(data)).data
        b = average_condition(_epochs(data[perm])).data
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)

    def test_grand_mean_monte_carlo(self):
        rng = np.random.default_rng(18)
        w = TimeWindow(0, 50)
        effect = np.sin(np.linspace(0, 3, 50))[None, :] * np.ones((4, 1))
        sigma = 2.0
        subs = [_erp(effect + rng.normal(0, sigma, effect.shape), w) for _ in range(18)]
        gm = grand_mean(subs)
        # 3 sigma/sqrt(n) holds per cell with probability 0.997; 200 cells
        assert np.mean(np.abs(gm.data - effect) <= 3 * sigma / np.sqrt(18)) >= 0.98
        assert gm.n_epochs == 18

    def test_grand_mean_mismatch(self):
        with pytest.raises(ValueError):
            grand_mean([_erp(np.zeros((1, 5)), TimeWindow(0, 5)), _erp(np.zeros((2, 5)), TimeWindow(0, 5))])


class TestBaseline:
    W = TimeWindow(-250, 500)

    def test_constant_to_zero(self):
        erp = _erp(np.full((2, 750), 5.0), self.W)
        assert np.abs(baseline_correct(erp, TimeWindow(-250, 0)).data).max() == 0

    def test_shift(self):
        x = np.full((1, 750), 5.0)
        x[0, 250:] = 8.0
        out = baseline_correct(_erp(x, self.W), TimeWindow(-250, 0))
        np.testing.assert_allclose(out.data[0, 250:], 3.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31))
    def test_mean_zero_idempotent_commutes(self, seed):
        rng = np.random.default_rng(seed)
        erp = _erp(rng.normal(40, 30, size=(4, 750)), self.W)
        bl = TimeWindow(-250, 0)
        once = baseline_correct(erp, bl)
        assert np.abs(once.data[:, :250].mean(axis=1)).max() < 1e-12
        np.testing.assert_allclose(baseline_correct(once, bl).data, once.data, atol=1e-12)
        sel = ["E3", "E1"]
        np.testing.assert_array_equal(baseline_correct(erp.select_channels(sel), bl).data,
                                      once.select_channels(sel).data)

    def test_outside_window(self):
        with pytest.raises(ValueError):
            baseline_correct(_erp(np.zeros((1, 750)), self.W), TimeWindow(-300, 0))


def test_preprocess_recording_end_to_end():
    rng = np.random.default_rng(5)
    n = 6000
    data = rng.normal(0, 1, size=(2, n))
    onsets = [1000, 2500, 4000]
    t = np.arange(750)
    bump = 10 * np.exp(-0.5 * ((t - 550) / 25.0) ** 2)
    for o in onsets:
        data[:, o - 250:o + 500] += bump
    data[0, 2600:2650] = 500.0  # artifact in the second epoch
    rec = Recording(["A", "B"], FS, data)
    ev = EventList([Event(o, "w") for o in onsets])
    erps = preprocess_recording(rec, ev, PreprocessSettings(notch=None))
    erp = erps["w"]
    assert erp.n_epochs == 2
    assert abs(erp.times_ms[np.argmax(erp.data[1])] - 300) <= 10
    assert np.abs(erp.data[:, :250].mean(axis=1)).max() < 1e-12
