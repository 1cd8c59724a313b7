"""Frame-based polyphonic note transcription toolkit."""

from .audio import AudioFrame, FrameGeometry, Recording, extract_frame, load_wav, region_offsets
from .dataset import DatasetSplit, NoteEvent, labels_at, load_labels
from .filterbank import Filterbank, FilterbankSpec, Spectrogram, build, jacobian
from .models import ModelSpec, build_model, predict
from .synth import SynthSpec, midi_to_hz, synth_corpus
from .training import TrainConfig, TrainerState, train

__all__ = [
    "AudioFrame", "FrameGeometry", "Recording", "extract_frame", "load_wav",
    "region_offsets", "DatasetSplit", "NoteEvent", "labels_at", "load_labels",
    "Filterbank", "FilterbankSpec", "Spectrogram", "build", "jacobian",
    "ModelSpec", "build_model", "predict",
    "SynthSpec", "midi_to_hz", "synth_corpus",
    "TrainConfig", "TrainerState", "train",
]

__version__ = "0.1.0"
