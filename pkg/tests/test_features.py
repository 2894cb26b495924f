import numpy as np
import pytest

from coughscreen import dsp, features


def make_spectra(rows, sample_rate=16000, n_fft=2048):
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    bin_freqs = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    assert rows.shape[1] == bin_freqs.size
    return dsp.MagnitudeSpectra(rows, bin_freqs, n_fft)


def one_hot_row(bin_idx, value=1.0, n_bins=1025):
    row = np.zeros(n_bins)
    for b, v in zip(np.atleast_1d(bin_idx), np.atleast_1d(value)):
        row[b] = v
    return row


class TestSpectralShape:
    def test_centroid_single_mass(self):
        spectra = make_spectra(one_hot_row(128))  # bin 128 = 1000 Hz
        assert features.spectral_centroid(spectra)[0] == pytest.approx(1000.0)

    def test_centroid_flat_spectrum(self):
        spectra = make_spectra(np.ones(1025))
        assert features.spectral_centroid(spectra)[0] == pytest.approx(
            spectra.bin_freqs.mean())

    def test_centroid_two_equal_masses(self):
        spectra = make_spectra(one_hot_row([64, 192], [1.0, 1.0]))  # 500 and 1500 Hz
        assert features.spectral_centroid(spectra)[0] == pytest.approx(1000.0)

    def test_centroid_zero_frame(self):
        assert features.spectral_centroid(make_spectra(np.zeros(1025)))[0] == 0.0

    def test_bandwidth_single_line(self):
        assert features.spectral_bandwidth(make_spectra(one_hot_row(128)))[0] == \
            pytest.approx(0.0)

    def test_bandwidth_two_unit_masses_direct_substitution(self):
        # oracle by direct substitution: (1*500^2 + 1*500^2)^(1/2)
        spectra = make_spectra(one_hot_row([64, 192], [1.0, 1.0]))
        expected = np.sqrt(2 * 500.0 ** 2)
        assert features.spectral_bandwidth(spectra)[0] == pytest.approx(expected)
        assert expected == pytest.approx(707.1, abs=0.05)

    def test_bandwidth_homogeneity(self):
        rng = np.random.default_rng(0)
        row = rng.uniform(0, 1, 1025)
        b1 = features.spectral_bandwidth(make_spectra(row))[0]
        b4 = features.spectral_bandwidth(make_spectra(4.0 * row))[0]
        assert b4 == pytest.approx(2.0 * b1, rel=1e-12)

    def test_rolloff_single_bin(self):
        spectra = make_spectra(one_hot_row(300))
        assert features.spectral_rolloff(spectra)[0] == pytest.approx(
            spectra.bin_freqs[300])

    def test_rolloff_flat_100_bins_cumulative_oracle(self):
        row = np.zeros(1025)
        row[:100] = 1.0
        spectra = make_spectra(row)
        # cumulative-sum oracle: first index where cumsum >= 0.85 * total
        energy = row ** 2
        cum = np.cumsum(energy)
        idx = int(np.argmax(cum >= 0.85 * cum[-1]))
        assert idx == 84  # the 85th bin, 1-indexed
        assert features.spectral_rolloff(spectra)[0] == pytest.approx(
            spectra.bin_freqs[idx])

    def test_rolloff_zero_frame(self):
        assert features.spectral_rolloff(make_spectra(np.zeros(1025)))[0] == 0.0

    def test_flatness_flat_spectrum(self):
        assert features.spectral_flatness(make_spectra(np.ones(1025)))[0] == \
            pytest.approx(1.0)

    def test_flatness_single_line_closed_form(self):
        spectra = make_spectra(one_hot_row(128))
        n = 1025
        floor = 1e-10
        gm = np.exp((np.log(1.0) + (n - 1) * np.log(floor)) / n)
        am = (1.0 + (n - 1) * floor) / n
        expected = gm / am
        got = features.spectral_flatness(spectra)[0]
        assert got == pytest.approx(expected, rel=1e-10)
        assert got < 1e-5

    def test_flatness_in_unit_interval(self):
        rng = np.random.default_rng(1)
        spectra = make_spectra(rng.uniform(0, 2, (50, 1025)))
        f = features.spectral_flatness(spectra)
        assert np.all(f >= 0.0) and np.all(f <= 1.0 + 1e-12)

    def test_flatness_zero_frame(self):
        assert features.spectral_flatness(make_spectra(np.zeros(1025)))[0] == 0.0


def mfcc_oracle(mag_row, sample_rate=16000, n_fft=2048, n_filters=40, n_mfcc=13):
    """Straight-line loop reimplementation: filterbank, floored log, DCT-II."""
    def hz_to_mel(f):
        if f < 1000.0:
            return f / (200.0 / 3.0)
        return 15.0 + 27.0 * np.log(f / 1000.0) / np.log(6.4)

    def mel_to_hz(m):
        if m < 15.0:
            return m * (200.0 / 3.0)
        return 1000.0 * np.exp(np.log(6.4) * (m - 15.0) / 27.0)

    bin_freqs = [k * sample_rate / n_fft for k in range(n_fft // 2 + 1)]
    edges = [mel_to_hz(hz_to_mel(0.0) + (hz_to_mel(8000.0) - hz_to_mel(0.0)) * i / (n_filters + 1))
             for i in range(n_filters + 2)]
    power = [m * m for m in mag_row]
    logE = []
    for m in range(n_filters):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        acc = 0.0
        for k, f in enumerate(bin_freqs):
            if lo < f < hi:
                w = (f - lo) / (mid - lo) if f <= mid else (hi - f) / (hi - mid)
                acc += w * power[k]
            elif f == mid:
                acc += power[k]
        logE.append(np.log(max(acc, 1e-10)))
    coeffs = []
    for i in range(n_mfcc):
        scale = np.sqrt(1.0 / n_filters) if i == 0 else np.sqrt(2.0 / n_filters)
        coeffs.append(scale * sum(logE[j] * np.cos(np.pi * i * (2 * j + 1) / (2 * n_filters))
                                  for j in range(n_filters)))
    return np.array(coeffs)


class TestMfcc:
    def test_silence_dct_of_constant(self):
        spectra = make_spectra(np.zeros(1025))
        out = features.mfcc(spectra)[0]
        assert out[0] == pytest.approx(np.sqrt(40) * np.log(1e-10))
        np.testing.assert_allclose(out[1:], 0.0, atol=1e-9)

    def test_amplitude_doubling_shifts_dc_only(self):
        rng = np.random.default_rng(2)
        row = rng.uniform(0.1, 1.0, 1025)
        base = features.mfcc(make_spectra(row))[0]
        doubled = features.mfcc(make_spectra(2.0 * row))[0]
        assert doubled[0] - base[0] == pytest.approx(np.sqrt(1 / 40) * 40 * np.log(4.0))
        np.testing.assert_allclose(doubled[1:], base[1:], atol=1e-9)

    def test_white_noise_against_loop_oracle(self):
        rng = np.random.default_rng(3)
        t = rng.standard_normal(512)
        fm = dsp.window_hamming(dsp.FrameMatrix(t[None, :], 256, False, 16000))
        spectra = dsp.magnitude_spectrum(fm)
        got = features.mfcc(spectra)[0]
        expected = mfcc_oracle(spectra.X[0])
        np.testing.assert_allclose(got, expected, rtol=1e-8, atol=1e-8)


class TestChroma:
    def test_single_line_at_a440(self):
        # nearest bin to 440 Hz is 56 (437.5 Hz)
        out = features.chroma(make_spectra(one_hot_row(56)))[0]
        assert out[9] == pytest.approx(1.0)
        assert out.sum() == pytest.approx(1.0)

    def test_octave_equivalence(self):
        out = features.chroma(make_spectra(one_hot_row([56, 113], [1.0, 1.0])))[0]
        assert out[9] == pytest.approx(1.0)
        assert np.count_nonzero(out) == 1

    def test_two_pitch_classes_bin_assignment_oracle(self):
        # 437.5 Hz -> class A, 523.4 Hz (bin 67) -> class C; equal energies
        bins = [56, 67]
        out = features.chroma(make_spectra(one_hot_row(bins, [1.0, 1.0])))[0]
        # oracle: fold each bin individually
        freqs = np.array(bins) * 16000 / 2048
        classes = (np.rint(12 * np.log2(freqs / 440.0)).astype(int) + 9) % 12
        assert sorted(classes) == [0, 9]
        for c in classes:
            assert out[c] == pytest.approx(1.0)
        assert out.sum() == pytest.approx(2.0)

    def test_zero_frame_all_zero(self):
        np.testing.assert_array_equal(
            features.chroma(make_spectra(np.zeros(1025)))[0], 0.0)


def summarize_oracle(x):
    """Brute-force functionals: direct moment loops, explicit rank interpolation."""
    x = list(map(float, x))
    n = len(x)
    mu = sum(x) / n
    var = sum((v - mu) ** 2 for v in x) / (n - 1) if n > 1 else 0.0
    std = var ** 0.5
    skew = 0.0
    if n >= 3 and std > 0:
        m2 = sum((v - mu) ** 2 for v in x) / n
        m3 = sum((v - mu) ** 3 for v in x) / n
        skew = (n * (n - 1)) ** 0.5 / (n - 2) * m3 / m2 ** 1.5
    kurt = 0.0
    if n >= 4 and std > 0:
        s4 = sum((v - mu) ** 4 for v in x)
        kurt = ((n + 1) * n / ((n - 1) ** 3 * (n - 2) * (n - 3)) * s4 / std ** 4
                - 3.0 * (n - 1) ** 2 / ((n - 2) * (n - 3)))
    xs = sorted(x)
    pcts = []
    for q in (0.10, 0.25, 0.50, 0.75, 0.90):
        h = (n - 1) * q
        lo = int(np.floor(h))
        frac = h - lo
        pcts.append(xs[lo] + frac * (xs[min(lo + 1, n - 1)] - xs[lo]) if n > 1 else xs[0])
    return [mu, std, skew, kurt] + pcts


class TestSummarize:
    def test_constant_trajectory(self):
        s = features.summarize([5.0, 5.0, 5.0, 5.0])
        assert (s.mean, s.std, s.skew, s.kurt) == (5.0, 0.0, 0.0, 0.0)
        assert (s.p10, s.p25, s.p50, s.p75, s.p90) == (5.0,) * 5

    def test_symmetric_sequence(self):
        s = features.summarize([1, 2, 3, 4, 5])
        assert s.mean == pytest.approx(3.0)
        assert s.std == pytest.approx(np.sqrt(2.5))
        assert s.skew == pytest.approx(0.0, abs=1e-12)
        assert s.p50 == pytest.approx(3.0)

    def test_kurtosis_hand_evaluated(self):
        # direct substitution with L=5: lead = 30/384, sum dev^4 = 34, s^4 = 6.25
        lead = 30 / (4 ** 3 * 3 * 2)
        expected = lead * 34 / 6.25 - 3 * 16 / 6
        assert expected == pytest.approx(-7.575)
        assert features.summarize([1, 2, 3, 4, 5]).kurt == pytest.approx(expected)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            features.summarize([])

    def test_matches_brute_force_on_random_trajectories(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n = int(rng.integers(4, 65))
            x = rng.standard_normal(n) * rng.uniform(0.5, 10)
            got = features.summarize(x).as_array()
            np.testing.assert_allclose(got, summarize_oracle(x), rtol=1e-10, atol=1e-10)

    def test_short_trajectory_guards(self):
        two = features.summarize([1.0, 3.0])
        assert (two.skew, two.kurt) == (0.0, 0.0)
        assert two.std == pytest.approx(np.sqrt(2.0))
        three = features.summarize([1.0, 2.0, 4.0])
        assert three.skew != 0.0
        assert three.kurt == 0.0

    def test_percentile_monotonicity(self):
        rng = np.random.default_rng(8)
        for _ in range(300):
            x = rng.standard_normal(int(rng.integers(1, 50)))
            s = features.summarize(x)
            assert s.p10 <= s.p25 <= s.p50 <= s.p75 <= s.p90


class TestExtract:
    def test_vector_length_any_half_second_recording(self):
        rng = np.random.default_rng(9)
        w = dsp.Waveform(rng.uniform(-0.5, 0.5, 8000), 16000)
        vec = features.extract(w)
        assert vec.shape == (261,)
        assert np.isfinite(vec).all()

    def test_silence_closed_form(self):
        vec = features.extract(dsp.Waveform(np.zeros(8000), 16000))
        expected = np.zeros(261)
        # the constant mfcc DC coefficient fills mean and all percentiles
        c0 = np.sqrt(40) * np.log(1e-10)
        base = 4 * 9  # after centroid/bandwidth/rolloff/flatness blocks
        for func_idx in (0, 4, 5, 6, 7, 8):
            expected[base + func_idx] = c0
        np.testing.assert_allclose(vec, expected, atol=1e-9)

    def test_frame_order_irrelevant(self):
        rng = np.random.default_rng(10)
        w = dsp.Waveform(rng.uniform(-0.5, 0.5, 8000), 16000)
        spectra = dsp.magnitude_spectrum(dsp.window_hamming(dsp.frame(w)))
        per_frame = features.frame_features(spectra)
        perm = rng.permutation(per_frame.shape[0])
        direct = np.concatenate([features.summarize(per_frame[:, j]).as_array()
                                 for j in range(29)])
        shuffled = np.concatenate([features.summarize(per_frame[perm, j]).as_array()
                                   for j in range(29)])
        np.testing.assert_allclose(direct, shuffled, rtol=1e-9, atol=1e-9)

    def test_wrong_sample_rate_rejected(self):
        with pytest.raises(ValueError):
            features.extract(dsp.Waveform(np.ones(100), 44100))

    def test_column_names_layout(self):
        assert len(features.VECTOR_COLUMN_NAMES) == 261
        assert features.VECTOR_COLUMN_NAMES[0] == "centroid_mean"
        assert features.VECTOR_COLUMN_NAMES[9] == "bandwidth_mean"
        assert features.VECTOR_COLUMN_NAMES[-1] == "chroma11_p90"

    def test_short_recording_padded(self):
        w = dsp.Waveform(np.ones(1000) * 0.1, 16000)
        assert features.extract(w).shape == (261,)

    def test_longer_recording_still_261(self):
        rng = np.random.default_rng(13)
        w = dsp.Waveform(rng.uniform(-0.5, 0.5, 16000), 16000)
        vec = features.extract(w)
        assert vec.shape == (261,)
        assert np.isfinite(vec).all()

    def test_per_frame_invariants_on_real_signal(self):
        rng = np.random.default_rng(11)
        w = dsp.Waveform(rng.uniform(-0.8, 0.8, 8000), 16000)
        spectra = dsp.magnitude_spectrum(dsp.window_hamming(dsp.frame(w)))
        flat = features.spectral_flatness(spectra)
        roll = features.spectral_rolloff(spectra)
        band = features.spectral_bandwidth(spectra)
        assert np.all((flat >= 0) & (flat <= 1 + 1e-12))
        assert np.all(roll <= 8000.0)
        assert np.all(band >= 0)

    def test_bandwidth_zero_iff_single_nonzero_bin(self):
        rng = np.random.default_rng(12)
        single = one_hot_row(int(rng.integers(1, 1024)), 2.0)
        assert features.spectral_bandwidth(make_spectra(single))[0] == pytest.approx(0.0)
        double = one_hot_row([10, 500], [1.0, 1.0])
        assert features.spectral_bandwidth(make_spectra(double))[0] > 0
