import numpy as np
import pytest
from scipy.signal import lfilter

from cepstra.audio import AudioBuffer, CorpusSpec, synth_corpus
from cepstra.dsp import apply_filterbank
from cepstra.features import (
    DEFAULT_CONFIG,
    FEATURE_KINDS,
    FeatureConfig,
    FeatureMatrix,
    _gammatone_bank,
    _gfcc_compressed,
    _pncc_environmental,
    _power,
    add_deltas,
    concat_static,
    extract,
    extract_gfcc,
    extract_lsf,
    extract_mfcc,
    extract_pncc,
    extract_plp,
    extract_static,
    intensity_to_loudness,
    lpc_to_lsf,
    lsf_to_lpc,
    power_law,
    read_feature,
    write_feature,
    write_feature_csv,
)

SILENCE = AudioBuffer(np.zeros(16000), 16000)


def _stationary_vowel(duration_s=1.5, f0=100.0):
    """Fixed AR filter excited by a pulse train whose period divides the hop,
    so every analysis frame sees the identical waveform."""
    sr = 16000
    n = int(duration_s * sr)
    excitation = np.zeros(n)
    period = int(round(sr / f0))
    excitation[::period] += 1.0
    a = np.real(np.poly([0.97 * np.exp(1j * 2 * np.pi * 500 / sr),
                         0.97 * np.exp(-1j * 2 * np.pi * 500 / sr),
                         0.95 * np.exp(1j * 2 * np.pi * 1400 / sr),
                         0.95 * np.exp(-1j * 2 * np.pi * 1400 / sr)]))
    x = lfilter([1.0], a, excitation)
    return AudioBuffer(0.5 * x / np.abs(x).max(), sr)


class TestMfcc:
    def test_silence_constant_vector(self):
        fm = extract_mfcc(SILENCE)
        assert fm.n_frames > 0
        assert np.allclose(fm.values, fm.values[0][None, :])

    def test_dim_and_frame_count(self, speech_buffer):
        fm = extract_mfcc(speech_buffer)
        assert fm.dim == 13
        n = len(speech_buffer)
        assert fm.n_frames == (n - 400) // 160 + 1

    def test_stationary_vowel_stability(self):
        fm = extract_mfcc(_stationary_vowel())
        values = fm.values[5:-5]  # skip filter warm-up frames
        for c in range(1, 5):
            col = values[:, c]
            assert np.std(col) / abs(np.mean(col)) < 0.1

    def test_empty_audio_rejected(self):
        with pytest.raises(ValueError):
            extract_mfcc(AudioBuffer(np.zeros(0), 16000))


class TestGfcc:
    def test_frame_rate_100hz(self, speech_buffer):
        fm = extract_gfcc(speech_buffer)
        assert fm.frame_rate == pytest.approx(100.0)

    def test_amplitude_compression_law(self, speech_buffer):
        g = 3.7
        base = _gfcc_compressed(speech_buffer, DEFAULT_CONFIG)
        scaled = _gfcc_compressed(
            AudioBuffer(speech_buffer.samples * g, 16000), DEFAULT_CONFIG)
        assert np.allclose(scaled, g ** (2.0 / 3.0) * base, rtol=1e-10)

    def test_silence_constant_vector(self):
        fm = extract_gfcc(SILENCE)
        assert np.allclose(fm.values, fm.values[0][None, :])

    def test_dim(self, speech_buffer):
        assert extract_gfcc(speech_buffer).dim == 13


class TestPncc:
    def test_noise_floor_subtraction(self, speech_buffer, white_buffer):
        cfg = DEFAULT_CONFIG

        def surviving_power(buf):
            _, power = _power(buf, cfg, preemph=True)
            channels = apply_filterbank(power, _gammatone_bank(cfg, cfg.n_gammatone_pncc))
            ratio, _ = _pncc_environmental(channels, cfg)
            return (channels * ratio).mean() / channels.mean()

        assert surviving_power(white_buffer) < 0.1 * surviving_power(speech_buffer)

    def test_power_law_doubling(self):
        assert power_law(2.0**15) == pytest.approx(2.0 * power_law(1.0), rel=1e-12)

    def test_dim_and_finite_on_noise(self, white_buffer):
        fm = extract_pncc(white_buffer)
        assert fm.dim == 13
        assert np.all(np.isfinite(fm.values))

    def test_silence_finite(self):
        fm = extract_pncc(SILENCE)
        assert np.all(np.isfinite(fm.values))


class TestPlp:
    def test_loudness_compression_stage(self):
        x = np.array([0.1, 1.0, 7.0])
        assert np.allclose(intensity_to_loudness(8.0 * x), 2.0 * intensity_to_loudness(x),
                           rtol=1e-12)

    def test_stability_on_corpus(self):
        total = unstable = 0
        for _, _, buf in synth_corpus(CorpusSpec(4, 2, duration_s=1.0), seed=3):
            fm = extract_plp(buf)
            total += fm.n_frames
            unstable += fm.meta["unstable_frames"]
        assert unstable <= 0.01 * total

    def test_dim(self, speech_buffer):
        assert extract_plp(speech_buffer).dim == 13


class TestLsf:
    def test_strictly_increasing_in_range(self, speech_buffer):
        fm = extract_lsf(speech_buffer)
        assert fm.dim == 10
        assert np.all(fm.values > 0.0)
        assert np.all(fm.values < np.pi)
        assert np.all(np.diff(fm.values, axis=1) > 0)

    def test_ar2_pole_angle_bracketed(self):
        theta = 1.1
        a = np.real(np.poly([0.9 * np.exp(1j * theta), 0.9 * np.exp(-1j * theta)]))
        lsf = lpc_to_lsf(-a[1:])
        assert lsf[0] < theta < lsf[1]

    def test_reconstruction_round_trip(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            poles = []
            for _ in range(5):
                radius = rng.uniform(0.5, 0.97)
                angle = rng.uniform(0.05, np.pi - 0.05)
                poles += [radius * np.exp(1j * angle), radius * np.exp(-1j * angle)]
            lpc = -np.real(np.poly(poles))[1:]
            assert np.abs(lsf_to_lpc(lpc_to_lsf(lpc)) - lpc).max() < 1e-6

    def test_odd_order_rejected(self):
        with pytest.raises(ValueError):
            lpc_to_lsf(np.zeros(5))

    def test_silence_counts_unstable(self):
        fm = extract_lsf(SILENCE)
        assert fm.meta["unstable_frames"] == fm.n_frames
        assert np.all(np.diff(fm.values, axis=1) > 0)  # fallback stays ordered


class TestDeltas:
    def test_constant_features_zero_deltas(self):
        static = FeatureMatrix(np.tile(np.arange(13.0), (20, 1)), "mfcc", 100.0)
        out = add_deltas(static)
        assert out.dim == 39
        assert np.allclose(out.values[:, 13:], 0.0)

    def test_linear_ramp_exact_slope(self):
        slope = 0.7
        t = np.arange(30.0)[:, None]
        static = FeatureMatrix(np.tile(slope * t, (1, 13)), "mfcc", 100.0)
        out = add_deltas(static, window=2)
        deltas = out.values[:, 13:26]
        assert np.allclose(deltas[2:-2], slope)
        ddeltas = out.values[:, 26:]
        assert np.allclose(ddeltas[4:-4], 0.0)

    def test_dim_contract(self, speech_buffer):
        out = add_deltas(extract_mfcc(speech_buffer))
        assert out.dim == 39

    def test_short_input_edge_replication(self):
        static = FeatureMatrix(np.ones((2, 13)), "mfcc", 100.0)
        out = add_deltas(static, window=2)
        assert out.n_frames == 2
        assert np.allclose(out.values[:, 13:], 0.0)

    def test_wrong_dim_rejected(self):
        static = FeatureMatrix(np.ones((5, 10)), "lsf", 100.0)
        with pytest.raises(ValueError):
            add_deltas(static)


class TestConcat:
    def test_gfcc_plus_pncc(self, speech_buffer):
        a = extract_gfcc(speech_buffer)
        b = extract_pncc(speech_buffer)
        fused = concat_static(a, b)
        assert fused.dim == 26
        assert fused.label == "combo"

    def test_self_concat_rows(self, speech_buffer):
        a = extract_gfcc(speech_buffer)
        fused = concat_static(a, a)
        assert np.array_equal(fused.values[:, :13], fused.values[:, 13:])

    def test_frame_count_mismatch_rejected(self):
        a = FeatureMatrix(np.ones((5, 13)), "gfcc", 100.0)
        b = FeatureMatrix(np.ones((4, 13)), "pncc", 100.0)
        with pytest.raises(ValueError, match="frame-count"):
            concat_static(a, b)


class TestInvariants:
    def test_determinism(self, speech_buffer):
        for kind in ("mfcc", "pncc", "lsf"):
            a = extract(speech_buffer, kind)
            b = extract(speech_buffer, kind)
            assert np.array_equal(a.values, b.values)

    def test_identical_frame_counts(self, speech_buffer):
        counts = {base: extract_static(speech_buffer, base).n_frames
                  for base in ("mfcc", "gfcc", "pncc", "plp", "lsf")}
        assert len(set(counts.values())) == 1

    def test_kind_dims(self, speech_buffer):
        expected = {"mfcc": 39, "gfcc": 39, "pncc": 39, "plp": 39, "lsf": 10,
                    "gfcc+pncc": 26, "plp+gfcc": 26, "plp+pncc": 26}
        for kind in FEATURE_KINDS:
            assert extract(speech_buffer, kind).dim == expected[kind]

    def test_unknown_kind(self, speech_buffer):
        with pytest.raises(ValueError):
            extract(speech_buffer, "bogus")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FeatureConfig(n_ceps=30)   # exceeds channel counts
        with pytest.raises(ValueError):
            FeatureConfig(n_mel=0)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            FeatureMatrix(np.array([[np.nan] * 13]), "mfcc", 100.0)


class TestFeatureFiles:
    def test_binary_round_trip(self, tmp_path, speech_buffer):
        fm = extract(speech_buffer, "mfcc")
        path = tmp_path / "x.cbfm"
        write_feature(fm, path)
        back = read_feature(path)
        assert back.label == fm.label
        assert back.dim == fm.dim
        assert back.n_frames == fm.n_frames
        assert back.frame_rate == pytest.approx(fm.frame_rate)
        assert np.allclose(back.values, fm.values, atol=1e-5)  # f32 storage

    def test_magic_checked(self, tmp_path):
        path = tmp_path / "bad.cbfm"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            read_feature(path)

    def test_csv_loads_as_table(self, tmp_path, speech_buffer):
        fm = extract(speech_buffer, "mfcc")
        path = tmp_path / "x.csv"
        write_feature_csv(fm, path)
        table = np.loadtxt(path, delimiter=",", skiprows=1)
        assert table.shape == (fm.n_frames, 39)
        header = path.read_text().splitlines()[0]
        assert header.split(",")[0] == "mfcc_00"
