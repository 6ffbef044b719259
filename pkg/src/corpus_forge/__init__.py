"""corpus-forge: speech corpus construction and ASR evaluation toolkit.

Pipeline modules, one per stage:

- audio: WAVE decode/encode, downmix, polyphase resampling, dBFS
- vad: per-frame Voice/Silence/Other classification, pluggable detectors
- segmenter: chunk validity gate, speech spans, master index
- sampler: reproducible fixed-length corpus draws from the index
- ngram: modified Kneser-Ney n-gram models, ARPA interchange
- ctc: greedy and prefix-beam CTC decoding with shallow LM fusion
- evaluation: WER, stratified reports, sentence-disjoint splits
- cli: the `corpus-forge` entry point tying it all together
"""

__version__ = "0.1.0"

from .audio import AudioBuffer, FrameParams, load_audio
from .vad import FrameLabel, Label, VadConfig
from .segmenter import MasterIndexEntry, SpeechSpan

__all__ = [
    "AudioBuffer",
    "FrameLabel",
    "FrameParams",
    "Label",
    "MasterIndexEntry",
    "SpeechSpan",
    "VadConfig",
    "load_audio",
    "__version__",
]
