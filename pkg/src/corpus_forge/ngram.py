"""Back-off n-gram language models with modified Kneser-Ney smoothing.

Training follows the interpolated, three-discount scheme: per order, the
discounts D1, D2, D3+ come from the count-of-counts
(Dk = k - (k+1) * (n1 / (n1 + 2*n2)) * (n[k+1] / n[k])), the highest order
uses raw counts, and lower orders use continuation counts (number of
distinct left extensions) except for n-grams anchored at the sentence
start, which cannot be left-extended and keep their raw counts. The
interpolated distribution is stored in standard back-off (ARPA) form: the
probability entry of a seen n-gram is its fully interpolated value and the
back-off weight of a context is its interpolation constant.

All probabilities and weights are log10, per ARPA convention.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .errors import ArpaConsistencyError, ArpaCountError, ConfigError, EmptyCorpus, ParseError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

#: log10 stand-in for "probability zero" entries (the <s> token, empty gammas)
LOG10_ZERO = -99.0

MAX_ORDER = 5


class DiscountFallback(UserWarning):
    """Count-of-counts too sparse for the discount formula; using 0.75."""


@dataclass
class NGramModel:
    order: int
    vocab: dict[str, int]
    probs: dict[tuple[str, ...], float]
    backoffs: dict[tuple[str, ...], float] = field(default_factory=dict)

    def logprob(self, word: str, history=()) -> float:
        """log10 P(word | history) via longest-match back-off."""
        w = word if (word,) in self.probs else UNK
        if (w,) not in self.probs:
            raise ConfigError("model has no <unk> entry; cannot score unknown tokens")
        hist = tuple(t if (t,) in self.probs else UNK for t in history)
        hist = hist[-(self.order - 1):] if self.order > 1 else ()
        acc = 0.0
        while True:
            gram = hist + (w,)
            if gram in self.probs and self.probs[gram] > LOG10_ZERO:
                return acc + self.probs[gram]
            if not hist:
                return acc + self.probs[(w,)]
            acc += self.backoffs.get(hist, 0.0)
            hist = hist[1:]

    def score(self, tokens) -> float:
        """log10 probability of a sentence, with <s> padding and </s> end."""
        hist = (BOS,)
        total = 0.0
        for tok in tokens:
            total += self.logprob(tok, hist)
            hist += (tok,)
        return total + self.logprob(EOS, hist)

    def perplexity(self, lines) -> float:
        """10^(-logprob/token) over token lines; </s> counted, <s> not."""
        total = 0.0
        tokens = 0
        for line in lines:
            toks = line.split() if isinstance(line, str) else list(line)
            if not toks:
                continue
            total += self.score(toks)
            tokens += len(toks) + 1
        if tokens == 0:
            raise EmptyCorpus("no tokens to evaluate")
        return 10.0 ** (-total / tokens)

    def grams_of_order(self, n: int) -> list[tuple[str, ...]]:
        return sorted(g for g in self.probs if len(g) == n)


def _discounts(nk: Counter, order_label: str) -> tuple[float, float, float]:
    n1, n2, n3, n4 = nk[1], nk[2], nk[3], nk[4]
    if n1 == 0 or n2 == 0:
        warnings.warn(
            f"{order_label}: count-of-counts n1={n1}, n2={n2}; "
            "falling back to a fixed discount of 0.75",
            DiscountFallback,
        )
        return 0.75, 0.75, 0.75
    y = n1 / (n1 + 2.0 * n2)
    d1 = 1.0 - 2.0 * y * n2 / n1
    d2 = 2.0 - 3.0 * y * n3 / n2
    if n3 > 0:
        d3 = 3.0 - 4.0 * y * n4 / n3
    else:
        warnings.warn(
            f"{order_label}: no count-of-count mass at 3; using 0.75 for D3+",
            DiscountFallback,
        )
        d3 = 0.75
    clamp = lambda v, hi: min(max(v, 0.0), hi)
    return clamp(d1, 1.0), clamp(d2, 2.0), clamp(d3, 3.0)


def _apply_discount(count: int, d: tuple[float, float, float]) -> float:
    if count == 1:
        return d[0]
    if count == 2:
        return d[1]
    return d[2]


def train(corpus, order: int = 4, min_count=None) -> NGramModel:
    """Estimate a modified Kneser-Ney model from whitespace-tokenized lines.

    ``corpus`` is any iterable of sentence strings (or token lists); blank
    lines are skipped. ``min_count`` optionally prunes n-grams seen fewer
    times per order (a list indexed by order-1); prefixes and suffixes of
    surviving higher-order n-grams are always retained so the model stays
    internally consistent.
    """
    if not 1 <= order <= MAX_ORDER:
        raise ConfigError(f"order must be in 1..{MAX_ORDER}, got {order}")
    if min_count is None:
        min_count = [1] * order
    if len(min_count) != order or any(m < 1 for m in min_count):
        raise ConfigError("min_count needs one threshold >= 1 per order")

    raw = [None] + [Counter() for _ in range(order)]
    left = [None] + [defaultdict(set) for _ in range(order)]
    n_sentences = 0
    for line in corpus:
        toks = line.split() if isinstance(line, str) else list(line)
        if not toks:
            continue
        n_sentences += 1
        t = [BOS] + toks + [EOS]
        for i in range(len(t)):
            for n in range(1, order + 1):
                if i + n > len(t):
                    break
                g = tuple(t[i : i + n])
                raw[n][g] += 1
                if n < order and i > 0:
                    left[n][g].add(t[i - 1])
    if n_sentences == 0:
        raise EmptyCorpus("training corpus has no tokens")

    # adjusted counts: raw at the top order, continuation counts below
    # (except <s>-anchored n-grams, which keep raw counts)
    adj = {}
    for n in range(1, order + 1):
        if n == order:
            adj[n] = dict(raw[n])
        else:
            adj[n] = {
                g: (c if g[0] == BOS else len(left[n][g]))
                for g, c in raw[n].items()
            }

    # prune, then close under prefixes/suffixes of kept higher-order grams
    kept = {order: {g for g, c in adj[order].items() if c >= min_count[order - 1]}}
    for n in range(order - 1, 0, -1):
        need = set()
        for g in kept[n + 1]:
            need.add(g[:-1])
            need.add(g[1:])
        kept[n] = {g for g, c in adj[n].items() if c >= min_count[n - 1]}
        kept[n] |= {g for g in need if g in adj[n]}

    probs: dict[tuple[str, ...], float] = {}
    backoffs: dict[tuple[str, ...], float] = {}

    # unigrams: interpolate with the uniform distribution over the
    # predictable vocabulary (observed words, </s>, <unk>; never <s>)
    uni = {g: adj[1][g] for g in kept[1] if g != (BOS,)}
    if not uni:
        raise EmptyCorpus("no unigrams survived counting")
    d1 = _discounts(Counter(uni.values()), "order 1")
    den = sum(uni.values())
    vocab_pred = sorted({g[0] for g in uni} | {UNK, EOS})
    gamma = sum(_apply_discount(c, d1) for c in uni.values()) / den
    unif = 1.0 / len(vocab_pred)
    p_uni = {w: gamma * unif for w in vocab_pred}
    for g, c in uni.items():
        p_uni[g[0]] += max(c - _apply_discount(c, d1), 0.0) / den
    for w, p in p_uni.items():
        probs[(w,)] = math.log10(max(p, 1e-99))
    probs[(BOS,)] = LOG10_ZERO

    # helper over the partially built model: full interpolated P(w | hist)
    def lower_prob(w: str, hist: tuple[str, ...]) -> float:
        acc = 0.0
        while True:
            g = hist + (w,)
            if g in probs and probs[g] > LOG10_ZERO:
                return 10.0 ** (acc + probs[g])
            if not hist:
                return 10.0 ** (acc + probs[(w,)])
            acc += backoffs.get(hist, 0.0)
            hist = hist[1:]

    for n in range(2, order + 1):
        counts = {g: adj[n][g] for g in kept[n]}
        if not counts:
            continue
        dn = _discounts(Counter(counts.values()), f"order {n}")
        by_context = defaultdict(dict)
        for g, c in counts.items():
            by_context[g[:-1]][g[-1]] = c
        for h, ext in by_context.items():
            den = sum(ext.values())
            gamma = sum(_apply_discount(c, dn) for c in ext.values()) / den
            backoffs[h] = math.log10(max(gamma, 1e-99))
            for w, c in ext.items():
                p = max(c - _apply_discount(c, dn), 0.0) / den
                p += gamma * lower_prob(w, h[1:])
                probs[h + (w,)] = math.log10(max(p, 1e-99))

    vocab = {UNK: 0, BOS: 1, EOS: 2}
    for w in vocab_pred:
        if w not in vocab:
            vocab[w] = len(vocab)
    return NGramModel(order=order, vocab=vocab, probs=probs, backoffs=backoffs)


# -- ARPA interchange ----------------------------------------------------------

def write_arpa(model: NGramModel, sink, comments: list[str] | None = None) -> None:
    """Standard ARPA layout; anything before the \\data\\ marker is comment."""
    own = not hasattr(sink, "write")
    fh = open(sink, "w", encoding="utf-8") if own else sink
    try:
        for line in comments or []:
            fh.write(f"# {line}\n")
        sections = {n: model.grams_of_order(n) for n in range(1, model.order + 1)}
        fh.write("\\data\\\n")
        for n in range(1, model.order + 1):
            fh.write(f"ngram {n}={len(sections[n])}\n")
        for n in range(1, model.order + 1):
            fh.write(f"\n\\{n}-grams:\n")
            for g in sections[n]:
                line = f"{model.probs[g]:.7f}\t{' '.join(g)}"
                if g in model.backoffs:
                    line += f"\t{model.backoffs[g]:.7f}"
                fh.write(line + "\n")
        fh.write("\n\\end\\\n")
    finally:
        if own:
            fh.close()


def read_arpa(source) -> NGramModel:
    """Parse ARPA text; validates section counts and prefix/suffix closure."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = text.splitlines()

    declared: dict[int, int] = {}
    i = 0
    while i < len(lines) and lines[i].strip() != "\\data\\":
        i += 1
    if i == len(lines):
        raise ParseError(1, "no \\data\\ section")
    i += 1
    while i < len(lines):
        s = lines[i].strip()
        if not s:
            i += 1
            continue
        if s.startswith("\\"):
            break
        if not s.startswith("ngram "):
            raise ParseError(i + 1, f"unexpected line in \\data\\ section: {s!r}")
        try:
            n_s, count_s = s[len("ngram "):].split("=")
            declared[int(n_s)] = int(count_s)
        except ValueError:
            raise ParseError(i + 1, f"malformed ngram count line: {s!r}") from None
        i += 1
    if not declared:
        raise ParseError(i, "\\data\\ section declares no orders")
    order = max(declared)

    probs: dict[tuple[str, ...], float] = {}
    backoffs: dict[tuple[str, ...], float] = {}
    seen_counts = {n: 0 for n in declared}
    current = None
    while i < len(lines):
        s = lines[i].strip()
        i += 1
        if not s:
            continue
        if s == "\\end\\":
            current = None
            break
        if s.startswith("\\") and s.endswith("-grams:"):
            try:
                current = int(s[1:-len("-grams:")])
            except ValueError:
                raise ParseError(i, f"malformed section header {s!r}") from None
            if current not in declared:
                raise ArpaCountError(f"section \\{current}-grams: was not declared")
            continue
        if current is None:
            raise ParseError(i, f"n-gram line outside any section: {s!r}")
        fields = s.split()
        if len(fields) == current + 1:
            bow = None
        elif len(fields) == current + 2:
            bow = float(fields[-1])
        else:
            raise ParseError(i, f"expected {current + 1} or {current + 2} fields")
        try:
            logp = float(fields[0])
        except ValueError:
            raise ParseError(i, f"bad log probability {fields[0]!r}") from None
        gram = tuple(fields[1 : current + 1])
        probs[gram] = logp
        if bow is not None:
            backoffs[gram] = bow
        seen_counts[current] += 1

    for n, want in declared.items():
        if seen_counts[n] != want:
            raise ArpaCountError(
                f"\\data\\ declares {want} {n}-grams, body lists {seen_counts[n]}"
            )
    for gram in probs:
        if len(gram) < 2:
            continue
        if gram[:-1] not in probs:
            raise ArpaConsistencyError(f"{' '.join(gram)}: prefix missing from model")
        if gram[1:] not in probs:
            raise ArpaConsistencyError(f"{' '.join(gram)}: suffix missing from model")
    for gram in backoffs:
        if gram not in probs:
            raise ArpaConsistencyError(
                f"back-off weight for unlisted n-gram {' '.join(gram)}"
            )

    vocab = {}
    for w in (UNK, BOS, EOS):
        if (w,) in probs:
            vocab[w] = len(vocab)
    for g in sorted(g for g in probs if len(g) == 1):
        if g[0] not in vocab:
            vocab[g[0]] = len(vocab)
    return NGramModel(order=order, vocab=vocab, probs=probs, backoffs=backoffs)
