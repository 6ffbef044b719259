"""Exception taxonomy shared by all corpus-forge modules.

Every error the toolkit raises deliberately derives from CorpusForgeError,
so the CLI can map failures to exit codes without catching bare Exception.
"""


class CorpusForgeError(Exception):
    """Base class for all toolkit errors."""


# -- audio ------------------------------------------------------------------

class FormatError(CorpusForgeError):
    """Malformed RIFF/WAVE container."""


class UnsupportedCodec(CorpusForgeError):
    """WAVE file whose codec is not integer PCM or 32-bit float."""


class EmptyAudio(CorpusForgeError):
    """WAVE file with a zero-length sample payload."""


class EmptyFrame(CorpusForgeError):
    """dBFS requested for an empty sample slice."""


# -- vad / segmenter --------------------------------------------------------

class TooShort(CorpusForgeError):
    """Buffer shorter than a single analysis frame."""


class FrameCountMismatch(CorpusForgeError):
    """External label file frame count differs from the audio."""


class ParseError(CorpusForgeError):
    """Malformed line in a text artifact (label file, index, manifest...)."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class OverlapError(CorpusForgeError):
    """Master index holds overlapping spans for one file."""


class MissingDuration(CorpusForgeError):
    """Indexed file absent from the duration table."""


# -- sampler ----------------------------------------------------------------

class NoCandidates(CorpusForgeError):
    """No span can host a single placement after filtering."""


class SaturationWarning(UserWarning):
    """Candidate placements ran out before the requested hours were reached."""


class CutError(CorpusForgeError):
    """A manifest entry could not be cut from its source file."""

    def __init__(self, sample_id, message):
        super().__init__(f"sample {sample_id}: {message}")
        self.sample_id = sample_id


# -- ngram-lm ---------------------------------------------------------------

class EmptyCorpus(CorpusForgeError):
    """Training or evaluation text contains no tokens."""


class ArpaCountError(CorpusForgeError):
    """ARPA \\data\\ counts disagree with the listed n-grams."""


class ArpaConsistencyError(CorpusForgeError):
    """ARPA n-gram whose prefix or suffix is missing from the model."""


# -- ctc-decoder ------------------------------------------------------------

class ConfigError(CorpusForgeError):
    """Invalid decoding or pipeline configuration."""


# -- eval -------------------------------------------------------------------

class EmptyReference(CorpusForgeError):
    """WER requested against an empty reference."""


class EmptyEvalSet(CorpusForgeError):
    """Aggregate scoring over zero records."""


class MissingMetadata(CorpusForgeError):
    """Record lacks the metadata key a stratified report groups by."""

    def __init__(self, utterance_id, key):
        super().__init__(f"record {utterance_id!r} has no metadata key {key!r}")
        self.utterance_id = utterance_id
        self.key = key


class TooFewSentences(CorpusForgeError):
    """Dataset has fewer than two unique sentences to split."""
