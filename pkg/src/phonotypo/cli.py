"""
Command-line front end.

Subcommands: g2p, align, measure, quality, analyze, retention, textgrid.
Settings come from an optional INI file (``--config``) and are overridden
by flags; the ``PHONOTYPO_WORKERS`` environment variable overrides the
configured worker count. Relative paths resolve against the corpus root.

Exit codes: 0 success, 1 partial success (inputs skipped and reported),
2 configuration or input error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import os
import sys
from collections import Counter, defaultdict
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping, Optional

from . import __version__
from .aligner import AlignerConfig, TrainingUtterance, align_corpus, train
from .core import PhonotypoError, Pronunciation, Utterance
from .g2p import (OOV_POLICIES, GraphemeTable, Lexicon, MissingPronunciationError, RemapRules,
                  UnmappedGraphemeError, lookup_pronunciations, remap_pronunciation, tokenize,
                  word_counts)
from .markup import read_markup, read_textgrid, write_markup, write_textgrid
from .measures import (SIBILANT_COLUMNS, VOWEL_COLUMNS, LabelClasses, measure_sibilant,
                       measure_vowel, read_measures_csv, sibilant_row, vowel_row, write_csv)
from .quality import expected_cepstra, levenshtein, mcd, midpoint_match, weighted_per
from .signal import mel_cepstra, read_wav
from .typology import (FeatureTable, FilterConfig, RetentionReport, Token, dispersion_study,
                       filter_corpus, group_by_reading, retention_stats, scatter_rows,
                       uniformity_table)

logger = logging.getLogger("phonotypo")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


class ConfigError(PhonotypoError):
    pass


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class PipelineConfig:
    root: Path = Path(".")
    out: Path = Path("out")
    reading_id: str = "reading"
    language: str = "und"
    utterances: Optional[Path] = None
    audio_dir: Optional[Path] = None
    table: Optional[Path] = None
    lexicon: Optional[Path] = None
    remap: Optional[Path] = None
    oov_policy: str = "pass-through"
    include_fallback: bool = False
    aligner: AlignerConfig = field(default_factory=AlignerConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)

    def path(self, p) -> Optional[Path]:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.root / p

    def require(self, p, what: str) -> Path:
        path = self.path(p)
        if path is None:
            raise ConfigError(f"no {what} given")
        if not path.exists():
            raise ConfigError(f"{what} not found: {path}")
        return path


_SECTIONS = {
    "corpus": ("root", "reading_id", "language", "utterances", "audio_dir"),
    "g2p": ("table", "lexicon", "remap", "oov_policy", "include_fallback"),
    "output": ("out",),
}


def _coerce(value: str, like):
    if isinstance(like, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def _apply_section(obj, section: Mapping[str, str], name: str):
    kw = {}
    known = {f.name: getattr(obj, f.name) for f in fields(obj)}
    for key, value in section.items():
        if key not in known:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        try:
            kw[key] = _coerce(value, known[key])
        except ValueError as e:
            raise ConfigError(f"[{name}] {key}: {e}") from e
    try:
        return type(obj)(**{**known, **kw})
    except ValueError as e:
        raise ConfigError(f"[{name}] {e}") from e


def load_config(path: Optional[str]) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"config file not found: {path}")
    base = Path(path).resolve().parent
    for section in parser.sections():
        items = dict(parser.items(section))
        if section == "aligner":
            cfg.aligner = _apply_section(cfg.aligner, items, section)
        elif section == "filter":
            cfg.filter = _apply_section(cfg.filter, items, section)
        elif section in _SECTIONS:
            for key, value in items.items():
                if key not in _SECTIONS[section]:
                    raise ConfigError(f"[{section}] unknown key {key!r}")
                if key == "include_fallback":
                    cfg.include_fallback = _coerce(value, True)
                elif key in ("reading_id", "language", "oov_policy"):
                    setattr(cfg, key, value)
                else:
                    setattr(cfg, key, Path(value))
        else:
            raise ConfigError(f"unknown config section [{section}]")
    if not cfg.root.is_absolute():
        cfg.root = base / cfg.root
    return cfg


def _override(cfg: PipelineConfig, args) -> PipelineConfig:
    for name in ("root", "out", "utterances", "audio_dir", "table", "lexicon", "remap"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, Path(v))
    for name in ("reading_id", "language", "oov_policy"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if getattr(args, "include_fallback", False):
        cfg.include_fallback = True
    al = {}
    for name in ("min_iters", "max_iters", "criterion", "mixtures"):
        v = getattr(args, name, None)
        if v is not None:
            al[name] = v
    if getattr(args, "no_silence", False):
        al["optional_silence"] = False
    workers = os.environ.get("PHONOTYPO_WORKERS")
    if workers:
        try:
            al["workers"] = int(workers)
        except ValueError:
            raise ConfigError(f"PHONOTYPO_WORKERS must be an integer, got {workers!r}")
    if getattr(args, "workers", None) is not None:
        al["workers"] = args.workers
    if al:
        cfg.aligner = AlignerConfig(**{**cfg.aligner.__dict__, **al})
    if cfg.oov_policy not in OOV_POLICIES:
        raise ConfigError(f"oov_policy must be one of {OOV_POLICIES}")
    if len(cfg.language) != 3 or not cfg.language.isalpha():
        raise ConfigError(f"language must be an ISO 639-3 code, got {cfg.language!r}")
    if cfg.aligner.workers < 1:
        raise ConfigError("workers must be >= 1")
    return cfg


def _out(cfg: PipelineConfig, *parts) -> Path:
    p = cfg.path(cfg.out).joinpath(*parts)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------------------
# Corpus input
# ---------------------------------------------------------------------------


@dataclass
class CorpusUtterance:
    utterance: Utterance
    audio: Optional[Path]


def read_utterances(cfg: PipelineConfig) -> list[CorpusUtterance]:
    """``utterance_id``, ``text`` and optional ``audio`` and ``mcd`` columns."""
    path = cfg.require(cfg.utterances, "utterance list")
    audio_dir = cfg.path(cfg.audio_dir) or path.parent
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        missing = {"utterance_id", "text"} - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path}: missing column(s) {sorted(missing)}")
        for rec in reader:
            mcd_val = (rec.get("mcd") or "").strip()
            audio = (rec.get("audio") or "").strip()
            utt = Utterance(rec["utterance_id"], rec["text"], audio,
                            mcd=float(mcd_val) if mcd_val else None)
            out.append(CorpusUtterance(utt, audio_dir / audio if audio else None))
    if not out:
        raise ConfigError(f"{path}: no utterances")
    return out


def _pronouncer(cfg: PipelineConfig):
    table = GraphemeTable.load(cfg.require(cfg.table, "grapheme table")) if cfg.table \
        else GraphemeTable.default()
    lexicon = Lexicon.load(cfg.require(cfg.lexicon, "lexicon")) if cfg.lexicon else None
    rules = RemapRules.load(cfg.require(cfg.remap, "remap rules")) if cfg.remap else None
    unmapped: Counter = Counter()

    def pronounce(text: str) -> list[Pronunciation]:
        prons = []
        for word, _ in tokenize(text, table.casefold):
            if lexicon is None or lexicon.get(word) is None or cfg.include_fallback:
                table.expand_word(word, "skip", 0, unmapped)
            try:
                p = lookup_pronunciations(word, lexicon, table, cfg.oov_policy,
                                          cfg.include_fallback)
            except MissingPronunciationError:
                continue
            if rules is not None:
                p = remap_pronunciation(p, rules)
            prons.append(p)
        return prons

    return pronounce, unmapped


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_g2p(cfg: PipelineConfig) -> int:
    utts = read_utterances(cfg)
    pronounce, unmapped = _pronouncer(cfg)
    for cu in utts:
        rows = []
        for p in pronounce(cu.utterance.text):
            for v, labels in enumerate(p.variants):
                rows.append((p.word, v, " ".join(labels), p.source.value))
        with open(_out(cfg, "pron", f"{cu.utterance.id}.tsv"), "w", newline="",
                  encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(("word", "variant", "labels", "source"))
            w.writerows(rows)
    with open(_out(cfg, "oov.tsv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(("grapheme", "count"))
        for g, n in sorted(unmapped.items()):
            w.writerow((g, n))
    logger.info("%d utterances, %d unmapped grapheme tokens", len(utts), sum(unmapped.values()))
    return EXIT_OK


def _features(path: Path):
    return mel_cepstra(read_wav(path))


def cmd_align(cfg: PipelineConfig) -> int:
    utts = read_utterances(cfg)
    pronounce, _ = _pronouncer(cfg)
    corpus, discarded = [], []
    for cu in utts:
        uid = cu.utterance.id
        words = tuple(pronounce(cu.utterance.text))
        if not words:
            discarded.append((uid, "no pronounceable words"))
            continue
        if cu.audio is None:
            discarded.append((uid, "no audio"))
            continue
        try:
            feats = _features(cu.audio)
        except (OSError, ValueError, PhonotypoError) as e:
            discarded.append((uid, f"unreadable audio: {e}"))
            continue
        corpus.append(TrainingUtterance(uid, feats, words))
    if not corpus:
        raise ConfigError("no usable utterances to train on")
    result = train(corpus, cfg.aligner)
    model = result.model
    model.save(_out(cfg, "model.json"))
    alignments = align_corpus(model, corpus, cfg.reading_id, cfg.aligner.workers)
    segments, mcd_rows = [], []
    for u, res in zip(corpus, alignments):
        if not res.aligned:
            discarded.append((u.id, f"unaligned: {res.reason}"))
            continue
        segments.extend(res.segments)
        duration = u.features.n_frames * u.features.frame_step_s
        _out(cfg, "textgrid", f"{u.id}.TextGrid").write_text(
            write_textgrid(res.segments, xmax=duration), encoding="utf-8")
        proxy = mcd(u.features, expected_cepstra(model, res, u.features))
        mcd_rows.append((u.id, repr(round(proxy, 6))))
    write_markup(_out(cfg, "markup.tsv"), segments)
    _write_tsv(_out(cfg, "utterance_mcd.tsv"), ("utterance_id", "mcd"), mcd_rows)
    _write_tsv(_out(cfg, "discarded.tsv"), ("utterance_id", "reason"), discarded)
    _write_tsv(_out(cfg, "training.tsv"), ("iteration", "criterion", "log_likelihood"),
               [(i + 1, repr(c), repr(ll)) for i, (c, ll)
                in enumerate(zip(result.history, result.loglik_history))])
    logger.info("aligned %d of %d utterances in %d iterations", len(mcd_rows), len(utts),
                result.n_iterations)
    return EXIT_OK


def _write_tsv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_tsv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


def _utterance_mcd(cfg: PipelineConfig, source: str, utts) -> dict[str, Optional[float]]:
    if source == "external":
        return {cu.utterance.id: cu.utterance.mcd for cu in utts}
    path = cfg.path(cfg.out) / "utterance_mcd.tsv"
    if not path.exists():
        raise ConfigError(f"proxy MCD file not found (run align first): {path}")
    return {r["utterance_id"]: float(r["mcd"]) for r in _read_tsv(path)}


def cmd_measure(cfg: PipelineConfig, markup: Optional[str], mcd_source: str,
                classes_path: Optional[str]) -> int:
    utts = read_utterances(cfg)
    audio = {cu.utterance.id: cu.audio for cu in utts}
    mcds = _utterance_mcd(cfg, mcd_source, utts)
    classes = (LabelClasses.parse(cfg.require(classes_path, "label class table")
                                  .read_text(encoding="utf-8"))
               if classes_path else LabelClasses.default())
    markup_path = cfg.require(markup, "markup") if markup else cfg.path(cfg.out) / "markup.tsv"
    if not markup_path.exists():
        raise ConfigError(f"markup not found: {markup_path}")
    by_utt = defaultdict(list)
    for seg in read_markup(markup_path):
        by_utt[seg.utterance_id].append(seg)
    vowels, sibilants, skipped = [], [], []
    for uid in sorted(by_utt):
        path = audio.get(uid)
        try:
            wav = read_wav(path) if path is not None else None
        except (OSError, ValueError, PhonotypoError) as e:
            wav = None
            logger.warning("%s: %s", uid, e)
        if wav is None:
            skipped.append(uid)
            continue
        for seg in sorted(by_utt[uid], key=lambda s: s.token_index):
            if classes.is_vowel(seg.label):
                vowels.append(vowel_row(measure_vowel(wav, seg), mcds.get(uid)))
            elif classes.is_sibilant(seg.label):
                sibilants.append(sibilant_row(measure_sibilant(wav, seg), mcds.get(uid)))
    write_csv(_out(cfg, "vowels.csv"), VOWEL_COLUMNS, vowels)
    write_csv(_out(cfg, "sibilants.csv"), SIBILANT_COLUMNS, sibilants)
    meta = {"mcd_source": mcd_source, "kurtosis": "excess", "variance_units": "Hz^2",
            "formant_numbering": "candidates wider than 700 Hz skipped",
            "skipped_utterances": skipped}
    _out(cfg, "measures_meta.json").write_text(json.dumps(meta, indent=1) + "\n",
                                               encoding="utf-8")
    if skipped:
        logger.warning("no audio for %d utterance(s): %s", len(skipped), ", ".join(skipped))
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_quality(cfg: PipelineConfig, markup: str, reference: str,
                hyp_lexicon: Optional[str], ref_lexicon: Optional[str]) -> int:
    hyp = read_markup(cfg.require(markup, "markup"))
    ref = read_markup(cfg.require(reference, "reference markup"))
    reading = cfg.reading_id
    metrics: list[tuple] = []
    hyp_by, ref_by = defaultdict(list), defaultdict(list)
    for s in hyp:
        hyp_by[s.utterance_id].append(s)
    for s in ref:
        ref_by[s.utterance_id].append(s)
    label_tally = defaultdict(lambda: [0, 0, 0, 0])  # lev hits, hyp tokens, mid hits, mid pairs
    matches, acc_num, acc_den, berr, mid_hit, mid_n, skipped = [], 0, 0, [], 0, 0, []
    for uid in sorted(hyp_by):
        h = sorted(hyp_by[uid], key=lambda s: s.token_index)
        r = sorted(ref_by.get(uid, []), key=lambda s: s.token_index)
        if not r:
            skipped.append(uid)
            continue
        ali = levenshtein([s.label for s in r], [s.label for s in h])
        for op in ali.ops:
            if op.hyp_index is not None:
                lab = h[op.hyp_index].label
                label_tally[lab][1] += 1
                label_tally[lab][0] += op.op == "match"
        acc_num += ali.count("match")
        acc_den += len(h)
        rep = midpoint_match(h, r)
        for p in rep.pairs:
            label_tally[p.hyp.label][3] += 1
            label_tally[p.hyp.label][2] += p.label_match
            matches.append((reading, uid, p.hyp.token_index, p.hyp.label, p.ref.token_index,
                            p.ref.label, int(p.label_match), repr(round(p.boundary_error_s, 6))))
            if p.label_match:
                berr.append(p.boundary_error_s)
        mid_hit += sum(p.label_match for p in rep.pairs)
        mid_n += len(rep.pairs)
    metrics.append((reading, "pronunciation_accuracy",
                    100.0 * acc_num / acc_den if acc_den else math.nan))
    metrics.append((reading, "midpoint_accuracy", 100.0 * mid_hit / mid_n if mid_n else math.nan))
    metrics.append((reading, "boundary_error_s", math.fsum(berr) / len(berr) if berr else math.nan))
    if hyp_lexicon and ref_lexicon:
        hl = Lexicon.load(cfg.require(hyp_lexicon, "hypothesis lexicon"))
        rl = Lexicon.load(cfg.require(ref_lexicon, "reference lexicon"))
        freqs = None
        if cfg.utterances is not None:
            freqs = word_counts(cu.utterance.text for cu in read_utterances(cfg))
        words = sorted(set(hl.entries) & set(rl.entries))
        summary = weighted_per({w: rl.entries[w].variants[0] for w in words},
                               {w: hl.entries[w].variants[0] for w in words}, freqs)
        n_tokens = sum(freqs.get(w, 0) for w in words) if freqs else math.nan
        metrics += [(reading, "per_types", summary.type_per),
                    (reading, "per_tokens", summary.token_per),
                    (reading, "n_types", summary.n_words),
                    (reading, "n_tokens", n_tokens)]
    _write_tsv(_out(cfg, "quality.tsv"), ("reading", "metric", "value"),
               [(a, b, _num(c)) for a, b, c in metrics])
    _write_tsv(_out(cfg, "quality_by_label.tsv"),
               ("reading", "label", "hyp_tokens", "levenshtein_accuracy", "midpoint_pairs",
                "midpoint_accuracy"),
               [(reading, lab, t[1], _num(100.0 * t[0] / t[1] if t[1] else math.nan), t[3],
                 _num(100.0 * t[2] / t[3] if t[3] else math.nan))
                for lab, t in sorted(label_tally.items())])
    _write_tsv(_out(cfg, "midpoint_matches.tsv"),
               ("reading", "utterance", "token_index", "label", "ref_token_index", "ref_label",
                "match", "boundary_error_s"), matches)
    if skipped:
        logger.warning("no reference for %d utterance(s)", len(skipped))
        return EXIT_PARTIAL
    return EXIT_OK


def _num(x) -> str:
    if isinstance(x, float):
        return "" if not math.isfinite(x) else repr(round(x, 6))
    return str(x)


def _tokens_from_csv(path: Path, kind: str, classes: LabelClasses,
                     midpoint: dict) -> list[Token]:
    out = []
    for row in read_measures_csv(path):
        if kind == "vowel":
            f1, f2, peak = row.get("F1_50"), row.get("F2_50"), math.nan
        else:
            f1 = f2 = math.nan
            peak = row.get("midpeak_postalv" if classes.classify(row.label)
                           == "sibilant-postalveolar" else "midpeak_alv")
        out.append(Token(row.reading, row.utterance, row.token_index, row.label, kind,
                         row.duration_s, f1, f2, peak, row.utterance_mcd, row.failed,
                         midpoint.get((row.reading, row.utterance, row.token_index))))
    return out


def _reading_mcd(tokens: list[Token], path: Optional[Path]) -> dict[str, Optional[float]]:
    if path is not None:
        return {r["reading"]: float(r["mean_mcd"]) for r in _read_tsv(path)}
    per = defaultdict(dict)
    for t in tokens:
        if t.utterance_mcd is not None:
            per[t.reading][t.utterance] = t.utterance_mcd
    return {r: math.fsum(v.values()) / len(v) for r, v in per.items()}


def cmd_analyze(cfg: PipelineConfig, vowel_csvs, sibilant_csvs, reading_mcd: Optional[str],
                midpoint_files, svg: bool) -> int:
    classes = LabelClasses.default()
    midpoint = {}
    for p in midpoint_files or ():
        for r in _read_tsv(cfg.require(p, "midpoint match file")):
            midpoint[(r["reading"], r["utterance"], int(r["token_index"]))] = r["match"] == "1"
    tokens: list[Token] = []
    for p in vowel_csvs or ():
        tokens += _tokens_from_csv(cfg.require(p, "vowel measures"), "vowel", classes, midpoint)
    for p in sibilant_csvs or ():
        tokens += _tokens_from_csv(cfg.require(p, "sibilant measures"), "sibilant", classes,
                                   midpoint)
    if not tokens:
        raise ConfigError("no measured tokens given")
    gate = _reading_mcd(tokens, cfg.require(reading_mcd, "reading MCD table")
                        if reading_mcd else None)
    kept, reports = filter_corpus(tokens, gate, cfg.filter)
    write_retention_reports(_out(cfg, "retention_reports.tsv"), reports)
    write_retention_summary(_out(cfg, "retention.tsv"), retention_stats(reports))

    diagnostics: list[str] = []
    vowels = group_by_reading(t for t in kept if t.kind == "vowel")
    sibs = group_by_reading(t for t in kept if t.kind == "sibilant")
    features = FeatureTable.default()
    tables = {}
    if vowels:
        tables["f1_erb"] = uniformity_table(vowels, None, "f1_erb", cfg.filter,
                                            features=features, diagnostics=diagnostics)
        tables["f2_erb"] = uniformity_table(vowels, None, "f2_erb", cfg.filter,
                                            features=features, diagnostics=diagnostics)
    if sibs:
        labels = sorted({t.label for ts in sibs.values() for t in ts})
        pairs = [("s", "z")] if {"s", "z"} <= set(labels) else None
        tables["midpeak_erb"] = uniformity_table(sibs, pairs, "midpeak_erb", cfg.filter,
                                                 diagnostics=diagnostics)
    for measure, rows in tables.items():
        _write_tsv(_out(cfg, f"uniformity_{measure}.tsv"),
                   ("label_a", "label_b", "feature_match", "n_readings", "r", "rho", "p",
                    "p_adjusted", "bh_reject", "significant"),
                   [(r.pair[0], r.pair[1], "" if r.feature_match is None else int(r.feature_match),
                     r.n_readings, _num(r.r), _num(r.rho) if r.rho is not None else "",
                     _num(r.p), _num(r.p_adjusted), int(r.bh_reject), int(r.significant))
                    for r in rows])
        if rows:
            top = rows[0]
            _write_tsv(_out(cfg, f"scatter_{measure}.tsv"),
                       ("reading", f"mean_{top.pair[0]}", f"mean_{top.pair[1]}",
                        f"sd_{top.pair[0]}", f"sd_{top.pair[1]}", "half_axis_x", "half_axis_y"),
                       [(n, *(_num(v) for v in vals)) for n, *vals in scatter_rows(top)])
            if svg:
                from .plotting import plot_pair_scatter

                plot_pair_scatter(top, _out(cfg, f"scatter_{measure}.svg"), measure)
    if len(vowels) >= 3:
        try:
            d = dispersion_study(vowels, diagnostics)
            rows = [("spearman", _num(d.spearman.r) if d.spearman else "",
                     _num(d.spearman.p) if d.spearman else ""),
                    ("pearson", _num(d.pearson.r) if d.pearson else "",
                     _num(d.pearson.p) if d.pearson else "")]
            _write_tsv(_out(cfg, "dispersion.tsv"), ("statistic", "value", "p"), rows)
            _write_tsv(_out(cfg, "entropy.tsv"), ("reading", "n_vowels", "entropy_nats"),
                       [(r, n, _num(h)) for r, n, h in zip(d.readings, d.inventory_sizes,
                                                           d.entropies)])
        except PhonotypoError as e:
            diagnostics.append(f"dispersion study skipped: {e}")
    else:
        diagnostics.append(f"dispersion study needs 3 readings, have {len(vowels)}")
    _out(cfg, "diagnostics.txt").write_text("".join(d + "\n" for d in diagnostics),
                                            encoding="utf-8")
    return EXIT_OK


REPORT_COLUMNS = ("reading", "kind", "n_input", "reading_passed", "removed_reading_mcd",
                  "removed_midpoint", "removed_utterance_mcd", "removed_failure",
                  "removed_duration", "removed_outlier", "n_output", "Midpoint", "MCD",
                  "Outlier", "AGG")


def write_retention_reports(path, reports) -> None:
    rows = []
    for r in reports:
        rows.append((r.reading, r.kind, r.n_input, int(r.reading_passed),
                     *(r.removed[s] for s in ("reading_mcd", "midpoint", "utterance_mcd",
                                              "failure", "duration", "outlier")),
                     r.n_output, *(_num(r.standalone[c]) if r.standalone[c] is not None else ""
                                   for c in ("Midpoint", "MCD", "Outlier", "AGG"))))
    _write_tsv(path, REPORT_COLUMNS, rows)


def read_retention_reports(path) -> list[RetentionReport]:
    out = []
    for r in _read_tsv(path):
        removed = {k[len("removed_"):]: int(v) for k, v in r.items() if k.startswith("removed_")}
        standalone = {c: float(r[c]) if r[c] else None for c in ("Midpoint", "MCD", "Outlier", "AGG")}
        out.append(RetentionReport(r["reading"], r["kind"], int(r["n_input"]), removed,
                                   int(r["n_output"]), standalone, r["reading_passed"] == "1"))
    return out


def write_retention_summary(path, summary) -> None:
    _write_tsv(path, ("kind", "filter", "n_readings", "min", "median", "mean", "max"),
               [(s.kind, s.column, s.n_readings, _num(s.min), _num(s.median), _num(s.mean),
                 _num(s.max)) for s in summary])


def cmd_retention(cfg: PipelineConfig, reports: list[str]) -> int:
    all_reports = []
    for p in reports:
        all_reports += read_retention_reports(cfg.require(p, "retention reports"))
    if not all_reports:
        raise ConfigError("no retention reports given")
    write_retention_summary(_out(cfg, "retention.tsv"), retention_stats(all_reports))
    return EXIT_OK


def cmd_textgrid(cfg: PipelineConfig, markup: Optional[str], textgrids: list[str],
                 tier: Optional[str]) -> int:
    if markup and not textgrids:
        by_utt = defaultdict(list)
        for s in read_markup(cfg.require(markup, "markup")):
            by_utt[s.utterance_id].append(s)
        for uid in sorted(by_utt):
            _out(cfg, "textgrid", f"{uid}.TextGrid").write_text(
                write_textgrid(by_utt[uid]), encoding="utf-8")
        return EXIT_OK
    if textgrids:
        segs = []
        for p in textgrids:
            path = cfg.require(p, "TextGrid")
            segs += read_textgrid(path, tier, utterance_id=path.stem, reading_id=cfg.reading_id)
        write_markup(_out(cfg, markup or "markup.tsv"), segs)
        return EXIT_OK
    raise ConfigError("textgrid needs --markup (to export) or TextGrid files (to import)")


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--root", help="corpus root for relative paths")
    common.add_argument("--out", help="output directory")
    common.add_argument("--reading-id", dest="reading_id")
    common.add_argument("--language", help="ISO 639-3 code")
    common.add_argument("--workers", type=int)
    common.add_argument("-v", "--verbose", action="count", default=0)

    corpus = argparse.ArgumentParser(add_help=False)
    corpus.add_argument("--utterances", help="TSV with utterance_id, text, audio, mcd")
    corpus.add_argument("--audio-dir", dest="audio_dir")

    g2p = argparse.ArgumentParser(add_help=False)
    g2p.add_argument("--table", help="grapheme table TSV (default: built-in Latin table)")
    g2p.add_argument("--lexicon", help="pronunciation lexicon TSV")
    g2p.add_argument("--remap", help="label remapping rules TSV")
    g2p.add_argument("--oov-policy", dest="oov_policy", choices=OOV_POLICIES)
    g2p.add_argument("--include-fallback", dest="include_fallback", action="store_true",
                     help="add the table expansion as an extra variant of lexicon words")

    p = argparse.ArgumentParser(prog="phonotypo", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("g2p", parents=[common, corpus, g2p], help="write pronunciations")

    al = sub.add_parser("align", parents=[common, corpus, g2p], help="train and align")
    al.add_argument("--min-iters", dest="min_iters", type=int)
    al.add_argument("--max-iters", dest="max_iters", type=int)
    al.add_argument("--criterion", choices=("loglik", "mcd"))
    al.add_argument("--mixtures", type=int)
    al.add_argument("--no-silence", dest="no_silence", action="store_true")

    me = sub.add_parser("measure", parents=[common, corpus], help="vowel and sibilant measures")
    me.add_argument("--markup", help="standoff markup TSV (default: <out>/markup.tsv)")
    me.add_argument("--mcd-source", dest="mcd_source", choices=("external", "proxy"),
                    default="external")
    me.add_argument("--classes", help="label class table TSV")

    qu = sub.add_parser("quality", parents=[common, corpus], help="alignment quality metrics")
    qu.add_argument("--markup", required=True)
    qu.add_argument("--reference", required=True, help="reference markup TSV")
    qu.add_argument("--hyp-lexicon", dest="hyp_lexicon")
    qu.add_argument("--ref-lexicon", dest="ref_lexicon")

    an = sub.add_parser("analyze", parents=[common], help="filtering and typology tables")
    an.add_argument("--vowels", nargs="*", default=[])
    an.add_argument("--sibilants", nargs="*", default=[])
    an.add_argument("--reading-mcd", dest="reading_mcd", help="TSV: reading, mean_mcd")
    an.add_argument("--midpoint", nargs="*", default=[], help="midpoint_matches.tsv files")
    an.add_argument("--svg", action="store_true", help="also render scatter plots")

    re_ = sub.add_parser("retention", parents=[common], help="summarise retention reports")
    re_.add_argument("reports", nargs="+")

    tg = sub.add_parser("textgrid", parents=[common], help="convert markup and TextGrids")
    tg.add_argument("--markup", help="markup TSV to export, or output name on import")
    tg.add_argument("textgrids", nargs="*", help="TextGrid files to import")
    tg.add_argument("--tier")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _override(load_config(args.config), args)
        if args.command == "g2p":
            return cmd_g2p(cfg)
        if args.command == "align":
            return cmd_align(cfg)
        if args.command == "measure":
            return cmd_measure(cfg, args.markup, args.mcd_source, args.classes)
        if args.command == "quality":
            return cmd_quality(cfg, args.markup, args.reference, args.hyp_lexicon,
                               args.ref_lexicon)
        if args.command == "analyze":
            return cmd_analyze(cfg, args.vowels, args.sibilants, args.reading_mcd,
                               args.midpoint, args.svg)
        if args.command == "retention":
            return cmd_retention(cfg, args.reports)
        if args.command == "textgrid":
            return cmd_textgrid(cfg, args.markup, args.textgrids, args.tier)
    except (PhonotypoError, UnmappedGraphemeError, OSError, configparser.Error) as e:
        print(f"phonotypo {args.command}: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
