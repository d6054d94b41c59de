"""Logical anomaly classification by verifying declarative scene constraints.

Scenario rules are written in a small constraint language, compiled into atomic
questions, answered by a pluggable answerer, and aggregated into a label set
with an evidence trail. Evaluation, augmentation, and difficulty-aware
resampling tools sit on top.
"""

from .aggregator import UnanswerablePolicy, Verdict, aggregate, classify, truth_labels
from .answerer import AnswerRecord, GroundTruthProvider, NoiseProfile, NoisyProvider, RemoteProvider
from .errors import LogiclsError
from .generate import generate_scene, realizable_sets
from .lang import compile_spec, parse, parse_file, serialize
from .metrics import binary_f1, evaluate_dataset, macro_f1
from .resampler import difficulty, sample_batch, sampling_plan, simulate_training
from .scene import BBox, LabelSet, ObjectInstance, Scene, load_scene, save_scene

__version__ = "0.1.0"

__all__ = [
    "AnswerRecord", "BBox", "GroundTruthProvider", "LabelSet", "LogiclsError", "NoiseProfile",
    "NoisyProvider", "ObjectInstance", "RemoteProvider", "Scene", "UnanswerablePolicy", "Verdict",
    "aggregate", "binary_f1", "classify", "compile_spec", "difficulty", "evaluate_dataset",
    "generate_scene", "load_scene", "macro_f1", "parse", "parse_file", "realizable_sets",
    "sample_batch", "sampling_plan", "save_scene", "serialize", "simulate_training", "truth_labels",
]
