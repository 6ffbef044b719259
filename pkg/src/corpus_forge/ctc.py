"""CTC posterior decoding: greedy collapse and prefix beam search with
optional shallow fusion of an n-gram language model.

Beam search keeps, per collapsed label prefix, the pair of path masses
ending in blank / non-blank (log10). Merging is by sum, so with an
unbounded beam and no pruning the top hypothesis is the exact marginal
argmax over all alignments. The LM is fused at word boundaries: each
completed word contributes alpha * log10 P(word | previous words) plus a
flat word-insertion bonus beta.

A beam width of 1 short-circuits to greedy decoding (the two are defined
to coincide); its hypothesis is scored by exact forward rescoring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError
from .ngram import BOS, NGramModel

LOG10_TINY = -400.0  # well below any admissible path mass


@dataclass(frozen=True)
class CtcPosteriors:
    probs: np.ndarray  # T x V, rows sum to 1
    alphabet: tuple[str, ...]
    blank_index: int
    sep_index: int = -1  # -1: no word separator in the alphabet

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", p)
        if p.ndim != 2 or p.shape[0] < 1:
            raise ConfigError("posteriors must be a T x V matrix with T >= 1")
        if p.shape[1] != len(self.alphabet):
            raise ConfigError(
                f"alphabet size {len(self.alphabet)} != matrix width {p.shape[1]}"
            )
        if not 0 <= self.blank_index < len(self.alphabet):
            raise ConfigError(f"blank_index {self.blank_index} outside alphabet")
        if self.sep_index >= len(self.alphabet):
            raise ConfigError(f"sep_index {self.sep_index} outside alphabet")
        rows = p.sum(axis=1)
        worst = float(np.max(np.abs(rows - 1.0)))
        if worst > 1e-5:
            raise ConfigError(f"posterior rows must sum to 1 (off by {worst:.2e})")

    @property
    def n_frames(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class FusionConfig:
    alpha: float = 0.5
    beta: float = 1.0
    beam_width: int = 32
    prune_log10: float | None = -5.0  # None disables the admission floor

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.beam_width < 1:
            raise ConfigError(f"beam_width must be >= 1, got {self.beam_width}")


@dataclass(frozen=True)
class Hypothesis:
    text: str
    ctc_log10: float
    lm_log10: float
    word_count: int
    total: float


def _log10addexp(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log10(1.0 + 10.0 ** (lo - hi))


def _render(labels: tuple[int, ...], post: CtcPosteriors) -> str:
    return "".join(
        " " if i == post.sep_index else post.alphabet[i] for i in labels
    )


def _words(labels: tuple[int, ...], post: CtcPosteriors):
    """Completed words and trailing partial word of a label prefix."""
    words, current = [], []
    for i in labels:
        if i == post.sep_index:
            if current:
                words.append("".join(current))
            current = []
        else:
            current.append(post.alphabet[i])
    return words, "".join(current)


def greedy_decode(post: CtcPosteriors) -> str:
    """Per-frame argmax (ties to the lowest index), collapse, drop blanks."""
    best = np.argmax(post.probs, axis=1)
    labels = []
    prev = -1
    for i in best:
        i = int(i)
        if i != prev and i != post.blank_index:
            labels.append(i)
        prev = i
    return _render(tuple(labels), post)


def ctc_rescore(post: CtcPosteriors, labels: tuple[int, ...]) -> float:
    """log10 of the total alignment mass collapsing to `labels` (forward pass)."""
    with np.errstate(divide="ignore"):
        logp = np.log10(post.probs)
    ext = [post.blank_index]
    for i in labels:
        ext.extend((i, post.blank_index))
    n = len(ext)
    alpha = np.full(n, -math.inf)
    alpha[0] = logp[0][ext[0]]
    if n > 1:
        alpha[1] = logp[0][ext[1]]
    for t in range(1, post.n_frames):
        nxt = np.full(n, -math.inf)
        for s in range(n):
            acc = alpha[s]
            if s >= 1:
                acc = _log10addexp(acc, alpha[s - 1])
            if s >= 2 and ext[s] != post.blank_index and ext[s] != ext[s - 2]:
                acc = _log10addexp(acc, alpha[s - 2])
            nxt[s] = acc + logp[t][ext[s]]
        alpha = nxt
    out = alpha[-1]
    if n > 1:
        out = _log10addexp(out, alpha[-2])
    return float(out)


class _Beam:
    __slots__ = ("p_b", "p_nb", "lm_sum", "n_words")

    def __init__(self, lm_sum: float = 0.0, n_words: int = 0):
        self.p_b = -math.inf
        self.p_nb = -math.inf
        self.lm_sum = lm_sum
        self.n_words = n_words

    @property
    def p_total(self) -> float:
        return _log10addexp(self.p_b, self.p_nb)


def beam_decode(
    post: CtcPosteriors,
    cfg: FusionConfig,
    lm: NGramModel | None = None,
) -> list[Hypothesis]:
    """Ranked hypotheses from prefix beam search with shallow LM fusion."""
    if cfg.alpha > 0 and lm is None:
        raise ConfigError("alpha > 0 requires a language model")

    if cfg.beam_width == 1:
        return [_greedy_hypothesis(post, cfg, lm)]

    def word_logp(word: str, prev_words: list[str]) -> float:
        if lm is None:
            return 0.0
        return lm.logprob(word, (BOS, *prev_words))

    with np.errstate(divide="ignore"):
        logp = np.log10(post.probs)

    root = _Beam()
    root.p_b = 0.0
    beams: dict[tuple[int, ...], _Beam] = {(): root}

    for t in range(post.n_frames):
        frame = logp[t]
        if cfg.prune_log10 is None:
            admitted = [v for v in range(len(frame)) if frame[v] > -math.inf]
        else:
            admitted = [v for v in range(len(frame)) if frame[v] >= cfg.prune_log10]
        nxt: dict[tuple[int, ...], _Beam] = {}

        def state_for(prefix: tuple[int, ...], parent: _Beam, new_symbol: int):
            st = nxt.get(prefix)
            if st is None:
                if new_symbol == post.sep_index:
                    words, partial = _words(prefix[:-1], post)
                    lm_sum = parent.lm_sum
                    n_words = parent.n_words
                    if partial:
                        lm_sum += word_logp(partial, words)
                        n_words += 1
                    st = _Beam(lm_sum, n_words)
                else:
                    st = _Beam(parent.lm_sum, parent.n_words)
                nxt[prefix] = st
            return st

        for prefix, st in beams.items():
            last = prefix[-1] if prefix else -1
            p_total = st.p_total
            for v in admitted:
                lp = float(frame[v])
                if v == post.blank_index:
                    if p_total > -math.inf:
                        cur = state_for(prefix, st, -1)
                        cur.p_b = _log10addexp(cur.p_b, p_total + lp)
                elif v == last:
                    if st.p_nb > -math.inf:
                        cur = state_for(prefix, st, -1)
                        cur.p_nb = _log10addexp(cur.p_nb, st.p_nb + lp)
                    if st.p_b > -math.inf:
                        ext = state_for(prefix + (v,), st, v)
                        ext.p_nb = _log10addexp(ext.p_nb, st.p_b + lp)
                else:
                    if p_total > -math.inf:
                        ext = state_for(prefix + (v,), st, v)
                        ext.p_nb = _log10addexp(ext.p_nb, p_total + lp)

        ranked = sorted(
            nxt.items(),
            key=lambda kv: (
                -(kv[1].p_total + cfg.alpha * kv[1].lm_sum + cfg.beta * kv[1].n_words),
                kv[0],
            ),
        )
        beams = dict(ranked[: cfg.beam_width])

    out = []
    for prefix, st in beams.items():
        words, partial = _words(prefix, post)
        lm_sum, n_words = st.lm_sum, st.n_words
        if partial:
            lm_sum += word_logp(partial, words)
            n_words += 1
        total = st.p_total + cfg.alpha * lm_sum + cfg.beta * n_words
        out.append(
            Hypothesis(
                text=_render(prefix, post),
                ctc_log10=st.p_total,
                lm_log10=lm_sum,
                word_count=n_words,
                total=total,
            )
        )
    out.sort(key=lambda h: (-h.total, h.text))
    return out


def _greedy_hypothesis(post: CtcPosteriors, cfg: FusionConfig, lm) -> Hypothesis:
    best = np.argmax(post.probs, axis=1)
    labels = []
    prev = -1
    for i in best:
        i = int(i)
        if i != prev and i != post.blank_index:
            labels.append(i)
        prev = i
    labels = tuple(labels)
    words, partial = _words(labels, post)
    all_words = words + ([partial] if partial else [])
    lm_sum = 0.0
    if lm is not None:
        for k, w in enumerate(all_words):
            lm_sum += lm.logprob(w, (BOS, *all_words[:k]))
    ctc = ctc_rescore(post, labels)
    total = ctc + cfg.alpha * lm_sum + cfg.beta * len(all_words)
    return Hypothesis(_render(labels, post), ctc, lm_sum, len(all_words), total)


# -- posterior file io ---------------------------------------------------------
#
# header: `T V blank_index sep_index`, then the alphabet line (space-separated
# symbols), then T lines of V probabilities.

def read_posteriors(source) -> CtcPosteriors:
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = [ln for ln in text.splitlines()]
    if not lines:
        raise ParseError(1, "empty posterior file")
    head = lines[0].split()
    if len(head) != 4:
        raise ParseError(1, "header must be 'T V blank_index sep_index'")
    try:
        t, v, blank, sep = (int(x) for x in head)
    except ValueError:
        raise ParseError(1, f"non-integer header field in {lines[0]!r}") from None
    if len(lines) < 2:
        raise ParseError(2, "missing alphabet line")
    alphabet = tuple(lines[1].split())
    if len(alphabet) != v:
        raise ParseError(2, f"alphabet has {len(alphabet)} symbols, header says {v}")
    rows = []
    for k in range(t):
        line_no = 3 + k
        if 2 + k >= len(lines):
            raise ParseError(line_no, f"expected {t} posterior rows, file ends early")
        fields = lines[2 + k].split()
        if len(fields) != v:
            raise ParseError(line_no, f"expected {v} probabilities, got {len(fields)}")
        try:
            rows.append([float(x) for x in fields])
        except ValueError:
            raise ParseError(line_no, "non-numeric probability") from None
    return CtcPosteriors(np.array(rows), alphabet, blank, sep)


def write_posteriors(post: CtcPosteriors, sink) -> None:
    own = not hasattr(sink, "write")
    fh = open(sink, "w", encoding="utf-8") if own else sink
    try:
        fh.write(f"{post.n_frames} {len(post.alphabet)} {post.blank_index} {post.sep_index}\n")
        fh.write(" ".join(post.alphabet) + "\n")
        for row in post.probs:
            fh.write(" ".join(f"{x:.12g}" for x in row) + "\n")
    finally:
        if own:
            fh.close()
