"""Speech emotion recognition: MFCC features, augmentation and an attention 1D-CNN."""

__version__ = "0.1.0"

from .audio_io import AudioClip, IngestConfig, decode_wav, encode_wav, read_wav, resample, standardize_duration
from .augment import AugmentConfig, add_noise, expand_dataset, pitch_shift
from .dsp import DspConfig, MfccFeatures, demo_spectra, extract_mfcc

__all__ = [
    "AudioClip", "AugmentConfig", "DspConfig", "IngestConfig", "MfccFeatures", "add_noise",
    "decode_wav", "demo_spectra", "encode_wav", "expand_dataset", "extract_mfcc", "pitch_shift",
    "read_wav", "resample", "standardize_duration",
]
