"""Unified keyword-spotting and audio-tagging transformers (UiT) in numpy."""
from .complexity import ComplexityReport, analyze, count_flops, count_params, peak_memory
from .dsp import AugmentSpec, MelConfig, augment_waveform, log_mel, spec_augment
from .estimators import LogMelTransformer, PatchTokenizer, UiTTagger
from .labels import DEFAULT_LABELS, LabelSpace
from .metrics import average_precision, kws_accuracy, kws_decide, mean_ap
from .model import PRESETS, UiTConfig, WeightStore, forward, patchify, preset, score
from .runtime import bench, infer_clip

__version__ = "0.1.0"
