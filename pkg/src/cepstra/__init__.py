"""cepstra: speaker-identification workbench.

Auditory front-ends (MFCC, GFCC, PNCC, PLP, LSF), diagonal-covariance GMM
speaker models trained by EM, SNR-controlled noise corruption, and an
evaluation grid producing identification-rate tables.
"""

from .audio import AudioBuffer, CorpusSpec, load_wav, resample, save_wav, synth_corpus
from .features import FeatureConfig, FeatureMatrix, extract
from .gmm import GmmModel, score_utterance, train_em
from .noise import NoiseInventory, SnrGrid, mix_at_snr
from .experiment import ExperimentConfig, identification_rate, identify, run_grid

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer", "CorpusSpec", "load_wav", "save_wav", "resample", "synth_corpus",
    "FeatureConfig", "FeatureMatrix", "extract",
    "GmmModel", "train_em", "score_utterance",
    "NoiseInventory", "SnrGrid", "mix_at_snr",
    "ExperimentConfig", "identify", "identification_rate", "run_grid",
    "__version__",
]
