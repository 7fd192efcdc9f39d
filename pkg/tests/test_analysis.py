import numpy as np
import pytest

from parsrc.analysis import (
    ToneSpec,
    alias_attenuation_experiment,
    folded_frequency,
    gen_multitone,
    multitone_experiment,
    octave_multitone,
    settle_outputs,
    spectrum,
)
from parsrc.errors import ClipError, InsufficientData
from parsrc.pipeline import SrcConfig, cascade_gain_db
from parsrc.stream import SerialStream


class TestMultitone:
    def test_empty_count(self):
        assert len(gen_multitone([ToneSpec(1.0)], 10.0, 0)) == 0

    def test_requires_tones(self):
        with pytest.raises(ValueError):
            gen_multitone([], 10.0, 5)

    def test_nyquist(self):
        with pytest.raises(ValueError):
            gen_multitone([ToneSpec(5.0)], 10.0, 5)

    def test_clip_and_headroom(self):
        tones = octave_multitone(1.0)
        with pytest.raises(ClipError):
            gen_multitone(tones, 20e9, 4000, width=16)
        s = gen_multitone(tones, 20e9, 4000, width=16, headroom_db=1.0)
        assert np.abs(s.samples).max() == pytest.approx(32768 * 10 ** (-1 / 20), abs=1)

    def test_eight_equal_peaks(self):
        rate, n = 20e9, 20000
        s = gen_multitone(octave_multitone(1.0), rate, n)
        spec = spectrum(s)
        levels = [spec.level_db(t.frequency_hz) for t in octave_multitone(1.0)]
        assert np.allclose(levels, 0.0, atol=0.01)


class TestSpectrum:
    def test_bin_centred_tone(self):
        n = 4096
        s = gen_multitone([ToneSpec(100 * 1e3 / n)], 1e3, n)
        spec = spectrum(s)
        assert spec.level_db(100 * 1e3 / n) == pytest.approx(0.0, abs=0.01)
        assert int(np.argmax(spec.power_db)) == 100

    def test_fixed_full_scale(self):
        n = 2048
        s = gen_multitone([ToneSpec(64 / n, 0.99)], 1.0, n, width=16)
        assert spectrum(s).level_db(64 / n) == pytest.approx(20 * np.log10(0.99), abs=0.01)

    def test_dc(self):
        s = SerialStream(np.full(256, 0.25))
        rect = spectrum(s, window="rect")
        assert int(np.argmax(rect.power_db)) == 0
        assert rect.power_db[1:].max() < -250
        bh = spectrum(s)
        assert bh.power_db[0] == pytest.approx(20 * np.log10(0.25), abs=1e-9)
        assert bh.power_db[4:].max() < -250

    def test_white_noise_floor(self, rng):
        sigma, size, segs = 0.1, 1024, 64
        s = SerialStream(rng.normal(0, sigma, size * segs))
        spec = spectrum(s, size)
        expected = 10 * np.log10(4 * sigma**2 * spec.enbw_bins / size)
        interior = spec.power_db[2:-2]
        assert abs(np.median(interior) - expected) < 0.5
        # averaging 64 segments keeps bins within a few dB
        assert np.mean(np.abs(interior - expected) < 3) > 0.99

    @pytest.mark.parametrize("window", ["blackmanharris", "hann", "rect"])
    def test_parseval(self, rng, window):
        n = 1 << 17
        tones = gen_multitone([ToneSpec(50.3, 0.7), ToneSpec(310.0, 0.2)], 1000.0, n)
        noise = SerialStream(rng.normal(0, 0.3, n))
        for s in (tones, noise):
            assert abs(spectrum(s, 1024, window).parseval_error_db()) < 0.1

    def test_short_stream(self):
        with pytest.raises(InsufficientData):
            spectrum(SerialStream(np.zeros(10)), 16)
        with pytest.raises(InsufficientData):
            spectrum(SerialStream(np.zeros(0)))


class TestExperiments:
    def test_folding(self):
        assert folded_frequency(7.04e6, 250e3) == pytest.approx(40e3)
        assert folded_frequency(7.2e6, 250e3) == pytest.approx(50e3)

    def test_settle_covers_impulse(self):
        assert settle_outputs(SrcConfig.for_factor(80)) >= 8

    def test_alias_float_agrees_with_prediction(self):
        cfg = SrcConfig.for_factor(80, kind="float")
        res = alias_attenuation_experiment(cfg, ToneSpec(50e3, 0.5), ToneSpec(7.04e6, 0.5))
        assert res.rejection_db >= 70
        assert abs(res.rejection_db - res.predicted_rejection_db) <= 1
        assert abs(res.desired_error_db) <= 0.8

    def test_alias_fixed(self):
        cfg = SrcConfig.for_factor(80)
        res = alias_attenuation_experiment(cfg, ToneSpec(50e3, 0.5), ToneSpec(7.04e6, 0.5))
        assert res.rejection_db >= 70
        assert abs(res.desired_error_db - res.predicted_desired_db) < 0.05

    def test_alias_at_cic_null(self):
        cfg = SrcConfig.for_factor(80, kind="float")
        # 7 MHz is a multiple of the 1 MHz spacing of the 20 MHz / 20 CIC nulls
        assert cascade_gain_db(cfg, 7e6 / 20e6, exact=True) <= -100
        res = alias_attenuation_experiment(cfg, ToneSpec(50e3, 0.5), ToneSpec(7e6, 0.5))
        assert res.rejection_db >= 100

    def test_alias_outside_band(self):
        with pytest.raises(ValueError):
            alias_attenuation_experiment(SrcConfig.for_factor(80), ToneSpec(50e3), ToneSpec(7.12e6))

    def test_multitone_bounded_by_ripple(self):
        from parsrc.pipeline import cascade_response

        cfg = SrcConfig.for_factor(80, kind="float")
        res = multitone_experiment(cfg, octave_multitone())
        ripple = cascade_response(cfg).passband_ripple_db
        assert res.worst_error_db <= ripple + 0.01
        assert np.allclose(res.errors_db, res.predicted_db, atol=0.01)
