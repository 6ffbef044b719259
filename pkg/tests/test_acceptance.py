"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to get one PASS line per
criterion (a failed assertion is the FAIL line).
"""

import json
import math
import time

import numpy as np
import pytest
from scipy.stats import chisquare

from conftest import build_apricot_fixture, build_synthetic_archive, run_cli
from corpus_forge.ctc import FusionConfig, beam_decode, greedy_decode
from corpus_forge.evaluation import grid_report, split_by_sentence, wer
from corpus_forge.ngram import read_arpa, write_arpa
from corpus_forge.sampler import SampleRequest, sample_corpus, write_manifest
from corpus_forge.segmenter import MasterIndexEntry, SpeechSpan, parse_master_index, speech_ratio
from test_ctc import NO_LM, brute_force_marginals, random_posteriors
from test_evaluation import brute_edit_distance
from test_ngram import CORPUS, oracle_bigram_mkn, train_quiet


def report(n, text):
    print(f"ACCEPTANCE {n:02d} PASS: {text}")


@pytest.fixture(scope="module")
def archive(tmp_path_factory):
    return build_synthetic_archive(tmp_path_factory.mktemp("acceptance"))


@pytest.fixture(scope="module")
def scanned(archive, tmp_path_factory):
    index_path = tmp_path_factory.mktemp("idx") / "master.idx"
    t0 = time.perf_counter()
    code, _ = run_cli(
        "scan", "--in", archive["audio_root"], "--index", index_path,
        "--backend", f"file:{archive['labels_root']}", "--jobs", 1,
    )
    elapsed = time.perf_counter() - t0
    assert code == 0
    return {"index_path": index_path, "elapsed": elapsed, **archive}


def test_criterion_01_synthetic_archive_recovery(scanned):
    entries = parse_master_index(scanned["index_path"])
    got = {}
    for e in entries:
        got.setdefault(e.file_path, []).append((e.span.start_ms, e.span.end_ms))
    for rel, want in scanned["expected_spans"].items():
        assert len(got.get(rel, [])) == len(want), rel
        for (gs, ge), (ws, we) in zip(got[rel], want):
            assert abs(gs - ws) <= 1000, (rel, gs, ws)
            assert abs(ge - we) <= 1000, (rel, ge, we)
    assert scanned["elapsed"] < 10.0
    report(1, f"3-file archive recovered exactly in {scanned['elapsed']:.2f}s")


def test_criterion_02_speech_ratio_statistic(scanned):
    entries = parse_master_index(scanned["index_path"])
    ratio = speech_ratio(entries, scanned["durations"])
    assert ratio == pytest.approx(0.50, abs=0.02)
    report(2, f"speech_ratio = {ratio:.4f} (designed 0.50 +- 0.02)")


def test_criterion_03_sampler_determinism_and_coverage(tmp_path):
    import datetime
    import io

    d = datetime.date(2019, 3, 1)
    index = [MasterIndexEntry("f.wav", "P4", d, SpeechSpan(0, 600000, 600))]
    out = sample_corpus(index, SampleRequest(target_hours=0.1, seed=11))
    assert len(out) == 12
    starts = sorted(e.cut_start_ms for e in out)
    assert all(b - a >= 30000 for a, b in zip(starts, starts[1:]))

    def manifest_bytes(seed):
        sink = io.StringIO()
        write_manifest(sample_corpus(index, SampleRequest(target_hours=0.1, seed=seed)), sink)
        return sink.getvalue()

    assert manifest_bytes(11) == manifest_bytes(11)

    slot_index = [
        MasterIndexEntry(f"f{k}.wav", "P4", d, SpeechSpan(0, 30000 * k, 30 * k))
        for k in (1, 2, 3, 4)
    ]
    counts = {f"f{k}.wav": 0 for k in (1, 2, 3, 4)}
    n = 10_000
    for seed in range(n):
        picked = sample_corpus(slot_index, SampleRequest(target_hours=1e-6, seed=seed))
        counts[picked[0].source_path] += 1
    observed = [counts[f"f{k}.wav"] for k in (1, 2, 3, 4)]
    expected = [n * k / 10 for k in (1, 2, 3, 4)]
    p = chisquare(observed, expected).pvalue
    assert p > 0.01
    report(3, f"12 disjoint placements, byte-identical reruns, chi2 p = {p:.3f}")


def test_criterion_04_ctc_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        post = random_posteriors(rng, t_max=6, v_max=4)
        truth = brute_force_marginals(post)
        hyps = beam_decode(post, FusionConfig(beam_width=4096, **NO_LM))
        best = max(truth.values())
        assert abs(10 ** hyps[0].ctc_log10 - best) < 1e-9
        for h in hyps:
            labels = tuple(post.alphabet.index(c) for c in h.text)
            worst = max(worst, abs(10 ** h.ctc_log10 - truth[labels]))
    elapsed = time.perf_counter() - t0
    assert worst < 1e-9
    assert elapsed < 60.0
    report(4, f"200 matrices vs brute force: max |dp| = {worst:.2e} in {elapsed:.1f}s")


def test_criterion_05_lm_correctness(tmp_path):
    # hand-computable corpus (8 tokens + markers) against the independent oracle
    p_uni, p_bi, gammas = oracle_bigram_mkn(CORPUS)
    model = train_quiet(CORPUS, order=2)
    for w, p in p_uni.items():
        assert abs(model.probs[(w,)] - math.log10(p)) < 1e-9
    for g, p in p_bi.items():
        assert abs(model.probs[g] - math.log10(p)) < 1e-9
    for u, g in gammas.items():
        assert abs(model.backoffs[(u,)] - math.log10(g)) < 1e-9

    rng = np.random.default_rng(71)
    vocab = [f"w{i}" for i in range(10)]
    lines = [" ".join(rng.choice(vocab, size=rng.integers(2, 9))) for _ in range(150)]
    big = train_quiet(lines, order=4)

    arpa = tmp_path / "model.arpa"
    write_arpa(big, arpa)
    again = read_arpa(arpa)
    for _ in range(20):
        probe = list(rng.choice(vocab + ["oov"], size=rng.integers(1, 8)))
        assert abs(again.score(probe) - big.score(probe)) < 1e-4

    v_pred = [w for w in big.vocab if w != "<s>"]
    for _ in range(100):
        ctx = tuple(rng.choice(vocab + ["<s>", "oov"], size=rng.integers(0, 4)))
        total = sum(10 ** big.logprob(w, ctx) for w in v_pred)
        assert abs(total - 1.0) < 1e-6
    report(5, "hand-computed MKN at 1e-9, ARPA probes at 1e-4, 100 contexts at 1e-6")


def test_criterion_06_lm_fusion_direction():
    post, lm = build_apricot_fixture()
    raw = beam_decode(post, FusionConfig(alpha=0.0, beta=0.0, beam_width=256, prune_log10=None))
    assert raw[0].text == greedy_decode(post) == "aprik aprik"
    fused = beam_decode(
        post, FusionConfig(alpha=2.0, beta=0.0, beam_width=256, prune_log10=None), lm
    )
    assert fused[0].text == "aprikos"
    report(6, "alpha=0 reproduces greedy 'aprik aprik'; alpha=2 flips to 'aprikos'")


def test_criterion_07_wer_oracle():
    rng = np.random.default_rng(404)
    alphabet = list("abcde")
    for _ in range(1000):
        ref = [str(x) for x in rng.choice(alphabet, size=rng.integers(1, 11))]
        hyp = [str(x) for x in rng.choice(alphabet, size=rng.integers(0, 11))]
        assert wer(ref, hyp).errors == brute_edit_distance(tuple(ref), tuple(hyp))

    b = wer("a b c d e".split(), "a b c d e".split())
    assert (b.errors, b.ref_tokens, b.wer) == (0, 5, 0.0)
    b = wer("a b c".split(), "a x c d".split())
    assert (b.substitutions, b.insertions, b.deletions) == (1, 1, 0)
    assert b.wer == pytest.approx(2 / 3)
    b = wer("a b c".split(), [])
    assert (b.substitutions, b.insertions, b.deletions, b.wer) == (0, 0, 3, 1.0)
    report(7, "1000 random pairs match the recursive oracle exactly; fixed examples hold")


def test_criterion_08_split_hygiene():
    rng = np.random.default_rng(808)
    rows = [(f"unique sentence number {i} spoken aloud", f"spk{i % 40}", "X")
            for i in range(900)]
    for k in range(100):  # 10% of the 1000 rows repeat an existing sentence
        i = int(rng.integers(0, 900))
        rows.append((rows[i][0], f"spk{(i + 7) % 40}", "Y"))
    assert len(rows) == 1000
    unique = len({r[0] for r in rows})
    train_idx, test_idx = split_by_sentence(rows, 0.02, seed=99)
    train_sents = {rows[i][0] for i in train_idx}
    test_sents = {rows[i][0] for i in test_idx}
    assert not train_sents & test_sents
    assert len(test_sents) == math.ceil(0.02 * unique) == 18
    assert len(train_idx) + len(test_idx) == 1000
    report(8, f"zero sentence overlap; test side holds exactly {len(test_sents)} of {unique} sentences")


def test_criterion_09_stratified_grid():
    from corpus_forge.evaluation import EvalRecord

    planted = {
        ("dalarna", "base"): (3, 60), ("dalarna", "tuned"): (1, 60),
        ("norrland", "base"): (6, 60), ("norrland", "tuned"): (2, 60),
        ("stockholm", "base"): (2, 40), ("stockholm", "tuned"): (1, 40),
    }
    records = []
    for (region, model), (errors, tokens) in planted.items():
        n_records = tokens // 10
        for i in range(n_records):
            bad = errors if i == 0 else 0
            hyp = ["x"] * bad + ["t"] * (10 - bad) if bad else ["t"] * 10
            records.append(
                EvalRecord(
                    f"{region}-{model}-{i}", ("t",) * 10, tuple(hyp),
                    {"region": region, "model": model},
                )
            )
    grid = grid_report(records, "region", "model", min_support=5)
    assert list(grid) == ["dalarna", "norrland", "stockholm"]
    for (region, model), (errors, tokens) in planted.items():
        cell = grid[region][model]
        assert cell.breakdown.wer == errors / tokens  # exact, pooled integers
    assert grid["stockholm"]["base"].low_support  # 4 records < 5
    assert not grid["dalarna"]["base"].low_support
    report(9, "planted region x model error rates reproduced exactly, low-support flagged")


def test_criterion_10_end_to_end_determinism(archive, tmp_path):
    # identical inputs, config, seed and output paths; reruns overwrite and
    # must reproduce every artifact byte for byte, at any worker count
    def pipeline(jobs):
        work = tmp_path
        index = work / "master.idx"
        code, _ = run_cli(
            "scan", "--in", archive["audio_root"], "--index", index,
            "--backend", f"file:{archive['labels_root']}", "--jobs", jobs,
        )
        assert code == 0
        out = work / "corpus"
        code, _ = run_cli(
            "sample", "--index", index, "--hours", 0.02, "--seed", 5,
            "--out", out, "--audio-root", archive["audio_root"], "--jobs", jobs,
        )
        assert code == 0

        post, lm = build_apricot_fixture()
        from corpus_forge.ctc import write_posteriors
        from corpus_forge.ngram import write_arpa as _write_arpa

        write_posteriors(post, work / "post.txt")
        _write_arpa(lm, work / "lm.arpa")
        code, decoded = run_cli(
            "decode", "--post", work / "post.txt", "--arpa", work / "lm.arpa",
            "--alpha", 2.0, "--beta", 0.0, "--beam", 256, "--no-prune",
        )
        assert code == 0

        records = work / "records.jsonl"
        records.write_text(
            json.dumps({
                "utterance_id": "u0", "reference": "aprikos",
                "hypothesis": decoded.strip(), "metadata": {"region": "X"},
            }) + "\n",
            encoding="utf-8",
        )
        rep = work / "report.json"
        code, _ = run_cli("eval", "--records", records, "--stratify", "region",
                          "--min-support", 1, "--out", rep)
        assert code == 0

        blobs = {"index": index.read_bytes(), "decode": decoded.encode(),
                 "report": rep.read_bytes(),
                 "manifest": (out / "manifest.jsonl").read_bytes()}
        for wav in sorted(out.rglob("*.wav")):
            blobs[str(wav.relative_to(out))] = wav.read_bytes()
        return blobs

    first = pipeline(1)
    second = pipeline(1)
    third = pipeline(8)
    assert first == second
    assert first == third
    report(10, f"{len(first)} artifacts byte-identical across reruns and jobs 1 vs 8")
