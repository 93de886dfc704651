import numpy as np
import pytest

from cepstra.audio import AudioBuffer, CorpusSpec, synth_utterance


@pytest.fixture(scope="session")
def speech_buffer() -> AudioBuffer:
    """A 1.5 s synthetic voiced utterance at 16 kHz."""
    return synth_utterance(CorpusSpec(2, 1, duration_s=1.5), seed=11, speaker_idx=0, utt_idx=0)


@pytest.fixture(scope="session")
def white_buffer(speech_buffer) -> AudioBuffer:
    rng = np.random.default_rng(0)
    return AudioBuffer(0.3 * rng.standard_normal(len(speech_buffer)), speech_buffer.sample_rate)
