from .dump import read_features, write_features
from .extractors import (
    DIMS, KINDS, AlignmentExtractor, AlignmentFeature, DetectorExtractor, DetectorFeature,
    DetectorFrameFeatures, alignment_matrix, applause_features, delta_mfcc, detector_matrices,
    iter_alignment_features, iter_detector_features, music_features, speech_features,
)
from .mfcc import (
    ALIGN_DIM, LOG_FLOOR, alignment_features, magnitude_spectrum, mel_filterbank, mfcc,
    mfcc_from_spectrum,
)
from .spectral import DEFAULT_BANDS, cfa, cft, fluctogram, spectral_measures

__all__ = [
    "ALIGN_DIM", "DEFAULT_BANDS", "DIMS", "KINDS", "LOG_FLOOR",
    "AlignmentExtractor", "AlignmentFeature", "DetectorExtractor", "DetectorFeature",
    "DetectorFrameFeatures", "alignment_features", "alignment_matrix", "applause_features",
    "cfa", "cft", "delta_mfcc", "detector_matrices", "fluctogram", "iter_alignment_features",
    "iter_detector_features", "magnitude_spectrum", "mel_filterbank", "mfcc",
    "mfcc_from_spectrum", "music_features", "read_features", "speech_features",
    "spectral_measures", "write_features",
]
