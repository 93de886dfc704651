import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cepstra.audio import AudioBuffer, CorpusSpec, synth_corpus
from cepstra.noise import (
    CLEAN_KEY,
    SILENT_DB,
    NoiseInventory,
    SnrGrid,
    corrupt_corpus,
    measure_power_db,
    mix_at_snr,
    synth_noise,
)


def _noise_gain(speech: AudioBuffer, mixed: AudioBuffer, segment_power_db: float) -> float:
    residual = mixed.samples - speech.samples
    return math.sqrt(np.mean(residual**2) / 10 ** (segment_power_db / 10.0))


class TestMeasurePower:
    def test_ones(self):
        assert measure_power_db(AudioBuffer(np.ones(100), 16000)) == pytest.approx(0.0)

    def test_full_scale_sine(self):
        n = 16000  # 100 Hz over 1 s: integer periods
        x = np.sin(2 * np.pi * 100 * np.arange(n) / 16000)
        assert measure_power_db(AudioBuffer(x, 16000)) == pytest.approx(-3.0103, abs=0.01)

    def test_silent_marker(self):
        assert measure_power_db(AudioBuffer(np.zeros(10), 16000)) == SILENT_DB

    def test_empty_error(self):
        with pytest.raises(ValueError):
            measure_power_db(AudioBuffer(np.zeros(0), 16000))


class TestMixAtSnr:
    def test_unit_gain_at_zero_snr(self, speech_buffer, white_buffer):
        # equal-power segment: pre-scale noise to the speech power
        p_s = measure_power_db(speech_buffer)
        mixed = mix_at_snr(speech_buffer, white_buffer, 0.0, seed=1)
        residual = mixed.samples - speech_buffer.samples
        p_n = 10 * math.log10(np.mean(residual**2))
        assert p_n == pytest.approx(p_s, abs=1e-6)

    def test_plus_six_db_gain(self, speech_buffer, white_buffer):
        m0 = mix_at_snr(speech_buffer, white_buffer, 0.0, seed=1)
        m6 = mix_at_snr(speech_buffer, white_buffer, 6.0, seed=1)
        r0 = m0.samples - speech_buffer.samples
        r6 = m6.samples - speech_buffer.samples
        # same segment, so the gain ratio is exactly 10^(-6/20)
        ratio = math.sqrt(np.mean(r6**2) / np.mean(r0**2))
        assert ratio == pytest.approx(10 ** (-6.0 / 20.0), rel=1e-6)

    def test_deterministic(self, speech_buffer, white_buffer):
        a = mix_at_snr(speech_buffer, white_buffer, 3.0, seed=42)
        b = mix_at_snr(speech_buffer, white_buffer, 3.0, seed=42)
        assert np.array_equal(a.samples, b.samples)

    def test_gain_strictly_decreasing_in_snr(self, speech_buffer, white_buffer):
        gains = []
        for snr in (-6.0, 0.0, 6.0, 12.0, 18.0):
            mixed = mix_at_snr(speech_buffer, white_buffer, snr, seed=7)
            residual = mixed.samples - speech_buffer.samples
            gains.append(np.sqrt(np.mean(residual**2)))
        assert all(b < a for a, b in zip(gains, gains[1:]))

    def test_silent_speech_rejected(self, white_buffer):
        with pytest.raises(ValueError, match="silent"):
            mix_at_snr(AudioBuffer(np.zeros(1000), 16000), white_buffer, 0.0, seed=0)

    def test_rate_mismatch(self, speech_buffer):
        noise = AudioBuffer(np.random.default_rng(0).standard_normal(8000), 8000)
        with pytest.raises(ValueError, match="mismatch"):
            mix_at_snr(speech_buffer, noise, 0.0, seed=0)

    @given(st.integers(0, 2**31 - 1), st.floats(-20.0, 30.0))
    @settings(max_examples=60, deadline=None)
    def test_snr_accuracy(self, seed, target):
        rng = np.random.default_rng(seed)
        speech = AudioBuffer(rng.uniform(-0.5, 0.5, 4000), 16000)
        noise = AudioBuffer(rng.standard_normal(9000) * 0.2, 16000)
        mixed = mix_at_snr(speech, noise, target, seed=seed)
        residual = mixed.samples - speech.samples
        achieved = measure_power_db(speech) - 10 * math.log10(np.mean(residual**2))
        assert achieved == pytest.approx(target, abs=0.01)


@pytest.fixture(scope="module")
def corpus():
    return synth_corpus(CorpusSpec(2, 2, duration_s=1.0), seed=9)


@pytest.fixture(scope="module")
def inventory():
    return NoiseInventory({
        kind: synth_noise(kind, 2.0, 16000, seed=1) for kind in ("white", "babble", "machine")
    })


class TestCorruptCorpus:
    def test_grid_shape(self, corpus, inventory):
        grid = SnrGrid((-6.0, 0.0, 6.0, 12.0, 18.0))
        out = corrupt_corpus(corpus, inventory, grid, seed=4)
        assert len(out) == 16  # 3 noises x 5 levels + clean
        assert CLEAN_KEY in out
        for key, cell in out.items():
            assert len(cell) == len(corpus)

    def test_empty_grid_clean_only(self, corpus, inventory):
        out = corrupt_corpus(corpus, inventory, SnrGrid(()), seed=4)
        assert list(out) == [CLEAN_KEY]

    def test_per_utterance_snr(self, corpus, inventory):
        out = corrupt_corpus(corpus, inventory, SnrGrid((6.0,)), seed=4)
        clean = {(s, u): b for s, u, b in out[CLEAN_KEY]}
        for s, u, mixed in out[("white", 6.0)]:
            residual = mixed.samples - clean[(s, u)].samples
            achieved = measure_power_db(clean[(s, u)]) - 10 * math.log10(np.mean(residual**2))
            assert achieved == pytest.approx(6.0, abs=0.01)

    def test_deterministic(self, corpus, inventory):
        grid = SnrGrid((0.0,))
        a = corrupt_corpus(corpus, inventory, grid, seed=11)
        b = corrupt_corpus(corpus, inventory, grid, seed=11)
        for key in a:
            for (_, _, x), (_, _, y) in zip(a[key], b[key]):
                assert np.array_equal(x.samples, y.samples)


class TestInventoryAndGrid:
    def test_short_noise_rejected(self):
        with pytest.raises(ValueError, match=">= 1 s"):
            NoiseInventory({"blip": AudioBuffer(np.random.default_rng(0).standard_normal(800), 16000)})

    def test_rate_disagreement_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="sample rate"):
            NoiseInventory({
                "a": AudioBuffer(rng.standard_normal(16000), 16000),
                "b": AudioBuffer(rng.standard_normal(8000), 8000),
            })

    def test_grid_must_increase(self):
        with pytest.raises(ValueError):
            SnrGrid((0.0, 0.0, 6.0))
        with pytest.raises(ValueError):
            SnrGrid((6.0, 0.0))


class TestSynthNoise:
    def test_deterministic(self):
        a = synth_noise("white", 1.0, 16000, seed=2)
        b = synth_noise("white", 1.0, 16000, seed=2)
        assert np.array_equal(a.samples, b.samples)

    @pytest.mark.parametrize("kind", ["white", "babble", "machine"])
    def test_kinds(self, kind):
        buf = synth_noise(kind, 1.0, 16000, seed=3)
        assert len(buf) == 16000
        assert np.abs(buf.samples).max() == pytest.approx(0.5)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown noise kind"):
            synth_noise("pink", 1.0, 16000, seed=0)
