"""corpus-forge command line: scan / vad / sample / lm-train / lm-eval /
decode / eval / split / report.

Exit codes: 0 success, 1 partial failure (per-item errors were collected
and logged), 2 usage or configuration errors. Logs go to stderr; data goes
to files or stdout only.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import datetime
import json
import logging
import os
import re
import sys
from pathlib import Path

from . import __version__
from .audio import FrameParams, frame_view, load_audio
from .config import PipelineConfig, load_config, merge_overrides
from .ctc import FusionConfig, beam_decode, read_posteriors
from .errors import CorpusForgeError, ParseError
from .evaluation import (
    aggregate,
    GroupStats,
    grid_report,
    read_records,
    report_json,
    report_table,
    split_by_sentence,
    stratified_report,
)
from .ngram import read_arpa, train, write_arpa
from .sampler import SampleRequest, cut_samples, sample_corpus, write_manifest
from .segmenter import (
    ChunkValidityConfig,
    MasterIndexEntry,
    SpeechSpan,
    parse_master_index,
    spans_from_labels,
    speech_ratio,
    write_master_index,
)
from .vad import (
    EnergyHeuristicDetector,
    VadConfig,
    classify_frames,
    ingest_external_labels,
    write_labels,
)

log = logging.getLogger("corpus-forge")

_DATE_RE = re.compile(r"(\d{4}-\d{2}-\d{2})")
_YEAR_RE = re.compile(r"^(\d{4})$")


# -- scan ---------------------------------------------------------------------

def _derive_metadata(rel: str) -> tuple[str, datetime.date]:
    """Channel and date from the archive path convention
    <channel>/<date-or-year>/.../file.wav; falls back to unknown/epoch."""
    parts = Path(rel).parts
    channel = parts[0] if len(parts) > 1 else "unknown"
    m = _DATE_RE.search(rel)
    if m:
        try:
            return channel, datetime.date.fromisoformat(m.group(1))
        except ValueError:
            pass
    for part in parts[1:]:
        y = _YEAR_RE.match(part)
        if y:
            return channel, datetime.date(int(y.group(1)), 1, 1)
    return channel, datetime.date(1970, 1, 1)


def _read_meta_table(path) -> dict[str, tuple[str, datetime.date]]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            s = line.rstrip("\n")
            if not s.strip() or s.startswith("#"):
                continue
            parts = s.split("\t")
            if len(parts) != 3:
                raise ParseError(line_no, f"expected path<TAB>channel<TAB>date, got {s!r}")
            try:
                out[parts[0]] = (parts[1], datetime.date.fromisoformat(parts[2]))
            except ValueError as exc:
                raise ParseError(line_no, str(exc)) from None
    return out


def _scan_worker(task):
    """Per-file scan: (rel, duration_ms, [(start, end, chunks)]) or error str."""
    root, rel, backend_desc, cfg = task
    try:
        buf = load_audio(Path(root) / rel, cfg.rate)
        vad_cfg = VadConfig(
            level=cfg.vad_level,
            voice_threshold=cfg.voice_threshold,
            silence_dbfs=cfg.silence_dbfs,
        )
        params = FrameParams(cfg.frame_ms)
        if backend_desc.startswith("file:"):
            labels_root = backend_desc[len("file:"):]
            expected = len(frame_view(buf, params))
            labels = ingest_external_labels(
                Path(labels_root) / (rel + ".labels"), expected, vad_cfg
            )
        else:
            labels = classify_frames(buf, params, vad_cfg, EnergyHeuristicDetector())
        validity = ChunkValidityConfig(
            min_voice_ratio=cfg.min_voice_ratio,
            max_voice_ratio=cfg.max_voice_ratio,
            min_silence_ratio=cfg.min_silence_ratio,
            max_silence_ratio=cfg.max_silence_ratio,
            max_other_ratio=cfg.max_other_ratio,
        )
        spans = spans_from_labels(
            labels, validity, cfg.frames_per_chunk, cfg.frame_ms, cfg.min_span_ms
        )
        return rel, buf.duration_ms, [(s.start_ms, s.end_ms, s.chunk_count) for s in spans], None
    except (CorpusForgeError, OSError) as exc:
        return rel, 0, [], f"{type(exc).__name__}: {exc}"


def _cmd_scan(args) -> int:
    cfg = _effective_config(args)
    root = Path(args.in_dir)
    if not root.is_dir():
        raise CorpusForgeError(f"--in {root}: not a directory")
    rels = sorted(
        p.relative_to(root).as_posix() for p in root.rglob("*.wav") if p.is_file()
    )
    if not rels:
        raise CorpusForgeError(f"--in {root}: no .wav files found")
    meta = _read_meta_table(args.meta) if args.meta else {}
    log.info("scan: %d files under %s (jobs=%d)", len(rels), root, args.jobs)

    tasks = [(str(root), rel, args.backend, cfg) for rel in rels]
    results = _run_parallel(_scan_worker, tasks, args.jobs)

    entries = []
    durations = {}
    failures = 0
    for rel, duration_ms, spans, err in results:
        if err is not None:
            failures += 1
            log.error("scan: %s: %s", rel, err)
            continue
        durations[rel] = duration_ms
        channel, date = meta.get(rel) or _derive_metadata(rel)
        for start, end, chunks in spans:
            entries.append(
                MasterIndexEntry(rel, channel, date, SpeechSpan(start, end, chunks))
            )
    write_master_index(entries, args.index, comments=cfg.echo())
    if durations:
        ratio = speech_ratio(entries, durations)
        log.info(
            "scan: %d spans from %d files, speech_ratio=%.4f", len(entries),
            len(durations), ratio,
        )
    if failures:
        log.error("scan: %d of %d files failed", failures, len(rels))
        return 1
    return 0


def _cmd_vad(args) -> int:
    cfg = _effective_config(args)
    buf = load_audio(args.in_file, cfg.rate)
    vad_cfg = VadConfig(
        level=cfg.vad_level,
        voice_threshold=cfg.voice_threshold,
        silence_dbfs=cfg.silence_dbfs,
    )
    params = FrameParams(cfg.frame_ms)
    if args.backend.startswith("file:"):
        expected = len(frame_view(buf, params))
        labels = ingest_external_labels(args.backend[len("file:"):], expected, vad_cfg)
    else:
        labels = classify_frames(buf, params, vad_cfg, EnergyHeuristicDetector())
    if args.out:
        write_labels(labels, args.out)
    else:
        write_labels(labels, sys.stdout)
    counts = {}
    for lab in labels:
        counts[lab.label.name] = counts.get(lab.label.name, 0) + 1
    log.info("vad: %d frames %s", len(labels), counts)
    return 0


# -- sample -------------------------------------------------------------------

def _cut_worker(task):
    entry, audio_root, rate = task
    errs = cut_samples([entry], audio_root, rate)
    return [str(e) for e in errs]


def _cmd_sample(args) -> int:
    cfg = _effective_config(args)
    index = parse_master_index(args.index, chunk_ms=cfg.chunk_ms)
    req = SampleRequest(
        target_hours=args.hours,
        seed=args.seed,
        span_ms=cfg.span_ms,
        channel_filter=frozenset(args.channel) if args.channel else None,
        date_from=args.date_from,
        date_to=args.date_to,
    )
    out_dir = Path(args.out)
    manifest = sample_corpus(index, req, out_dir=str(out_dir))
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.jsonl"
    write_manifest(manifest, manifest_path)
    (out_dir / "manifest.meta.json").write_text(
        json.dumps({"config": cfg.echo(), "seed": args.seed, "hours": args.hours},
                   indent=2) + "\n",
        encoding="utf-8",
    )
    log.info("sample: %d placements -> %s", len(manifest), manifest_path)
    if args.manifest_only:
        return 0

    tasks = [(e, args.audio_root, cfg.rate) for e in manifest]
    errors = [msg for msgs in _run_parallel(_cut_worker, tasks, args.jobs) for msg in msgs]
    for msg in errors:
        log.error("sample: %s", msg)
    if errors:
        log.error("sample: %d of %d cuts failed", len(errors), len(manifest))
        return 1
    log.info("sample: wrote %d cuts under %s", len(manifest), out_dir)
    return 0


# -- language model -----------------------------------------------------------

def _cmd_lm_train(args) -> int:
    cfg = _effective_config(args)
    min_count = None
    if args.min_count:
        min_count = [int(x) for x in args.min_count.split(",")]
    with open(args.in_file, "r", encoding="utf-8") as fh:
        model = train(fh, order=cfg.lm_order, min_count=min_count)
    write_arpa(model, args.out, comments=cfg.echo())
    counts = {n: len(model.grams_of_order(n)) for n in range(1, model.order + 1)}
    log.info("lm-train: order=%d grams=%s -> %s", model.order, counts, args.out)
    return 0


def _cmd_lm_eval(args) -> int:
    model = read_arpa(args.arpa)
    with open(args.in_file, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    ppl = model.perplexity(lines)
    tokens = sum(len(ln.split()) + 1 for ln in lines)
    print(json.dumps({"perplexity": round(ppl, 6), "tokens": tokens,
                      "sentences": len(lines)}))
    return 0


# -- decode ---------------------------------------------------------------------

def _cmd_decode(args) -> int:
    cfg = _effective_config(args)
    post = read_posteriors(args.post)
    lm = read_arpa(args.arpa) if args.arpa else None
    alpha = cfg.alpha if args.arpa else (args.alpha if args.alpha is not None else 0.0)
    beta = cfg.beta if args.arpa else (args.beta if args.beta is not None else 0.0)
    fusion = FusionConfig(
        alpha=alpha,
        beta=beta,
        beam_width=cfg.beam_width,
        prune_log10=None if args.no_prune else args.prune_log10,
    )
    hyps = beam_decode(post, fusion, lm)
    if args.nbest > 1:
        for h in hyps[: args.nbest]:
            print(json.dumps({
                "text": h.text, "total": round(h.total, 6),
                "ctc_log10": round(h.ctc_log10, 6), "lm_log10": round(h.lm_log10, 6),
                "word_count": h.word_count,
            }, ensure_ascii=False))
    else:
        print(hyps[0].text)
    return 0


# -- eval / split / report -------------------------------------------------------

def _cmd_eval(args) -> int:
    cfg = _effective_config(args)
    records = read_records(args.records)
    if args.stratify:
        groups = stratified_report(records, args.stratify, args.min_support)
    else:
        total = aggregate(records)
        groups = {"all": GroupStats(total, len(records), len(records) < args.min_support)}
    sys.stdout.write(report_table(groups))
    if args.out:
        Path(args.out).write_text(report_json(groups, cfg.echo()) + "\n", encoding="utf-8")
        log.info("eval: report -> %s", args.out)
    return 0


def _cmd_split(args) -> int:
    with open(args.in_file, "r", encoding="utf-8") as fh:
        rows = [line.rstrip("\n").split("\t") for line in fh if line.strip()]
    train_idx, test_idx = split_by_sentence(rows, args.test_fraction, args.seed)
    out_train = args.out_train or (args.in_file + ".train")
    out_test = args.out_test or (args.in_file + ".test")
    for path, idxs in ((out_train, train_idx), (out_test, test_idx)):
        with open(path, "w", encoding="utf-8") as fh:
            for i in idxs:
                fh.write("\t".join(rows[i]) + "\n")
    log.info(
        "split: %d rows -> %d train / %d test (fraction=%s seed=%d)",
        len(rows), len(train_idx), len(test_idx), args.test_fraction, args.seed,
    )
    return 0


def _cmd_report(args) -> int:
    cfg = _effective_config(args)
    records = read_records(args.records)
    grid = grid_report(records, args.rows, args.cols, args.min_support)
    cols = sorted({c for row in grid.values() for c in row})
    header = [args.rows + "\\" + args.cols] + cols
    lines = [header]
    for row in grid:
        cells = [row]
        for c in cols:
            st = grid[row].get(c)
            if st is None:
                cells.append("-")
            else:
                cells.append(f"{st.breakdown.wer:.4f}" + ("*" if st.low_support else ""))
        lines.append(cells)
    widths = [max(len(r[c]) for r in lines) for c in range(len(header))]
    for r in lines:
        sys.stdout.write("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() + "\n")
    sys.stdout.write("(* = low support)\n")
    if args.out:
        Path(args.out).write_text(report_json(grid, cfg.echo()) + "\n", encoding="utf-8")
        log.info("report: grid -> %s", args.out)
    return 0


# -- shared plumbing -------------------------------------------------------------

def _run_parallel(fn, tasks, jobs: int):
    """Map fn over tasks preserving order; sequential when jobs == 1."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _effective_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {}
    for flag, key in (
        ("rate", "rate"),
        ("frame_ms", "frame_ms"),
        ("frames_per_chunk", "frames_per_chunk"),
        ("level", "vad_level"),
        ("voice_threshold", "voice_threshold"),
        ("silence_dbfs", "silence_dbfs"),
        ("min_voice_ratio", "min_voice_ratio"),
        ("max_voice_ratio", "max_voice_ratio"),
        ("min_silence_ratio", "min_silence_ratio"),
        ("max_silence_ratio", "max_silence_ratio"),
        ("max_other_ratio", "max_other_ratio"),
        ("min_span_ms", "min_span_ms"),
        ("span_ms", "span_ms"),
        ("order", "lm_order"),
        ("alpha", "alpha"),
        ("beta", "beta"),
        ("beam", "beam_width"),
    ):
        if hasattr(args, flag) and getattr(args, flag) is not None:
            overrides[key] = getattr(args, flag)
    return merge_overrides(cfg, overrides)


def _add_config_flag(p):
    p.add_argument("--config", help="pipeline config file (key = value lines)")


def _add_jobs_flag(p):
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker processes (default: logical CPUs)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="corpus-forge",
        description="speech corpus construction and ASR evaluation toolkit",
    )
    ap.add_argument("--version", action="version", version=f"corpus-forge {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="index viable speech spans in a WAVE archive")
    p.add_argument("--in", dest="in_dir", required=True, help="archive root directory")
    p.add_argument("--index", required=True, help="output master index file")
    p.add_argument("--backend", default="builtin",
                   help="'builtin' or 'file:<labels_root>' for external VAD labels")
    p.add_argument("--meta", help="optional TSV: path<TAB>channel<TAB>date")
    p.add_argument("--rate", type=int)
    p.add_argument("--frame-ms", dest="frame_ms", type=int)
    p.add_argument("--frames-per-chunk", dest="frames_per_chunk", type=int)
    p.add_argument("--level", type=int, help="vad sensitivity level 0..4")
    p.add_argument("--voice-threshold", dest="voice_threshold", type=float)
    p.add_argument("--silence-dbfs", dest="silence_dbfs", type=float)
    p.add_argument("--min-voice-ratio", dest="min_voice_ratio", type=float)
    p.add_argument("--max-voice-ratio", dest="max_voice_ratio", type=float)
    p.add_argument("--min-silence-ratio", dest="min_silence_ratio", type=float)
    p.add_argument("--max-silence-ratio", dest="max_silence_ratio", type=float)
    p.add_argument("--max-other-ratio", dest="max_other_ratio", type=float)
    p.add_argument("--min-span-ms", dest="min_span_ms", type=int)
    _add_config_flag(p)
    _add_jobs_flag(p)
    p.set_defaults(handler=_cmd_scan)

    p = sub.add_parser("vad", help="per-frame voice/silence/other labels for one file")
    p.add_argument("--in", dest="in_file", required=True, help="WAVE file")
    p.add_argument("--backend", default="builtin",
                   help="'builtin' or 'file:<label_file>' to re-validate external labels")
    p.add_argument("--level", type=int)
    p.add_argument("--voice-threshold", dest="voice_threshold", type=float)
    p.add_argument("--silence-dbfs", dest="silence_dbfs", type=float)
    p.add_argument("--rate", type=int)
    p.add_argument("--frame-ms", dest="frame_ms", type=int)
    p.add_argument("--out", help="label file (default: stdout)")
    _add_config_flag(p)
    p.set_defaults(handler=_cmd_vad)

    p = sub.add_parser("sample", help="draw a corpus of fixed-length cuts from an index")
    p.add_argument("--index", required=True)
    p.add_argument("--hours", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--span-ms", dest="span_ms", type=int)
    p.add_argument("--channel", action="append", help="repeatable channel filter")
    p.add_argument("--from", dest="date_from", type=datetime.date.fromisoformat)
    p.add_argument("--to", dest="date_to", type=datetime.date.fromisoformat)
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--audio-root", dest="audio_root", default=".",
                   help="root the index file paths are relative to")
    p.add_argument("--manifest-only", dest="manifest_only", action="store_true",
                   help="write the manifest without cutting audio")
    p.add_argument("--rate", type=int)
    _add_config_flag(p)
    _add_jobs_flag(p)
    p.set_defaults(handler=_cmd_sample)

    p = sub.add_parser("lm-train", help="train a Kneser-Ney n-gram model to ARPA")
    p.add_argument("--in", dest="in_file", required=True, help="token lines, one sentence per line")
    p.add_argument("--out", required=True, help="output ARPA file")
    p.add_argument("--order", type=int)
    p.add_argument("--min-count", dest="min_count",
                   help="comma list, one count threshold per order")
    _add_config_flag(p)
    p.set_defaults(handler=_cmd_lm_train)

    p = sub.add_parser("lm-eval", help="perplexity of a text under an ARPA model")
    p.add_argument("--arpa", required=True)
    p.add_argument("--in", dest="in_file", required=True)
    p.set_defaults(handler=_cmd_lm_eval)

    p = sub.add_parser("decode", help="beam-decode a CTC posterior file")
    p.add_argument("--post", required=True, help="posterior matrix file")
    p.add_argument("--arpa", help="ARPA model for shallow fusion")
    p.add_argument("--alpha", type=float, help="LM weight (requires --arpa if > 0)")
    p.add_argument("--beta", type=float, help="word insertion bonus")
    p.add_argument("--beam", type=int, help="beam width")
    p.add_argument("--prune-log10", dest="prune_log10", type=float, default=-5.0,
                   help="per-frame admission floor (log10)")
    p.add_argument("--no-prune", dest="no_prune", action="store_true")
    p.add_argument("--nbest", type=int, default=1)
    _add_config_flag(p)
    p.set_defaults(handler=_cmd_decode)

    p = sub.add_parser("eval", help="WER over JSONL records, optionally stratified")
    p.add_argument("--records", required=True)
    p.add_argument("--stratify", help="metadata key to group by")
    p.add_argument("--min-support", dest="min_support", type=int, default=10)
    p.add_argument("--out", help="write machine-readable JSON report here")
    _add_config_flag(p)
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("split", help="sentence-disjoint train/test split of a TSV")
    p.add_argument("--in", dest="in_file", required=True,
                   help="TSV rows: sentence<TAB>speaker<TAB>region")
    p.add_argument("--test-fraction", dest="test_fraction", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", dest="out_train")
    p.add_argument("--out-test", dest="out_test")
    p.set_defaults(handler=_cmd_split)

    p = sub.add_parser("report", help="two-way WER grid (e.g. region x model)")
    p.add_argument("--records", required=True)
    p.add_argument("--rows", required=True, help="metadata key for grid rows")
    p.add_argument("--cols", required=True, help="metadata key for grid columns")
    p.add_argument("--min-support", dest="min_support", type=int, default=10)
    p.add_argument("--out", help="write machine-readable JSON report here")
    _add_config_flag(p)
    p.set_defaults(handler=_cmd_report)

    return ap


def main(argv=None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except CorpusForgeError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
