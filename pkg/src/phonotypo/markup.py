"""
Standoff markup TSV and Praat TextGrid reading and writing.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .core import SegmentRecord, Source, StructuralError

COLUMNS = ("reading_id", "utterance_id", "token_index", "label", "prev", "next",
           "start_s", "duration_s", "word", "source")
TIER_NAME = "phones"


def _t(x: float) -> str:
    return f"{x:.4f}"


def write_markup(path, segments: Iterable[SegmentRecord]) -> None:
    """Write segments as tab-separated standoff markup, edges rounded to 0.1 ms."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(COLUMNS)
        for s in segments:
            # round both edges so neighbours keep sharing a boundary; the
            # first pass removes float noise that would split a tie
            a, b = round(round(s.start_s, 9), 4), round(round(s.end_s, 9), 4)
            w.writerow([s.reading_id, s.utterance_id, s.token_index, s.label, s.prev or "",
                        s.next or "", _t(a), _t(b - a), s.word or "", s.source.value])


def read_markup(path) -> list[SegmentRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise StructuralError(f"{path}: expected columns {', '.join(COLUMNS)}")
        for lineno, rec in enumerate(reader, 2):
            try:
                out.append(SegmentRecord(
                    rec["utterance_id"], int(rec["token_index"]), rec["label"],
                    float(rec["start_s"]), float(rec["duration_s"]), rec["prev"] or None,
                    rec["next"] or None, rec["word"] or None, Source(rec["source"]),
                    rec["reading_id"]))
            except (ValueError, StructuralError) as e:
                raise StructuralError(f"{path}:{lineno}: {e}") from e
    return out


# ---------------------------------------------------------------------------
# TextGrid
# ---------------------------------------------------------------------------


def _q(text: str) -> str:
    return '"' + text.replace('"', '""') + '"'


def _num(x: float) -> str:
    return repr(round(float(x), 6))


def write_textgrid(segments: Sequence[SegmentRecord], xmax: Optional[float] = None,
                   xmin: float = 0.0, tier: str = TIER_NAME) -> str:
    """Long-form TextGrid text with one interval tier; gaps get empty intervals."""
    segs = sorted(segments, key=lambda s: s.start_s)
    end = max([s.end_s for s in segs] + [xmax if xmax is not None else xmin])
    intervals: list[tuple[float, float, str]] = []
    t = xmin
    for s in segs:
        a, b = round(s.start_s, 6), round(s.end_s, 6)
        if a > t + 1e-9:
            intervals.append((t, a, ""))
        elif a < t - 1e-9:
            raise StructuralError(f"overlapping segments at {s.start_s}")
        intervals.append((a, b, s.label))
        t = b
    if end > t + 1e-9:
        intervals.append((t, end, ""))
    if not intervals:
        intervals.append((xmin, end, ""))
    lines = [
        'File type = "ooTextFile"', 'Object class = "TextGrid"', "",
        f"xmin = {_num(xmin)}", f"xmax = {_num(end)}", "tiers? <exists>", "size = 1",
        "item []:", "    item [1]:", '        class = "IntervalTier"',
        f"        name = {_q(tier)}", f"        xmin = {_num(xmin)}",
        f"        xmax = {_num(end)}", f"        intervals: size = {len(intervals)}",
    ]
    for i, (a, b, text) in enumerate(intervals, 1):
        lines += [f"        intervals [{i}]:", f"            xmin = {_num(a)}",
                  f"            xmax = {_num(b)}", f"            text = {_q(text)}"]
    return "\n".join(lines) + "\n"


class TextGridError(StructuralError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


_TOKEN = re.compile(r'"((?:[^"]|"")*)"|([-+0-9.eE]+)|(<exists>)|(\S+)')


def _tokens(text: str):
    """Yield (lineno, kind, value) for strings and numbers, skipping labels."""
    lineno = 1
    pos = 0
    for m in _TOKEN.finditer(text):
        lineno += text.count("\n", pos, m.start())
        pos = m.start()
        if m.group(1) is not None:
            yield lineno, "str", m.group(1).replace('""', '"')
        elif m.group(2) is not None:
            try:
                yield lineno, "num", float(m.group(2))
            except ValueError:
                continue
        elif m.group(3) is not None:
            yield lineno, "flag", True


def parse_textgrid(text: str, tier: Optional[str] = None, utterance_id: str = "",
                   reading_id: str = "") -> list[SegmentRecord]:
    """Parse long- or short-form TextGrid text into segments of one tier.

    Both forms reduce to the same stream of quoted strings and numbers once
    the ``name =`` and ``[i]:`` decorations are ignored. Empty intervals are
    skipped. ``tier`` selects an interval tier by name (default: first).
    """
    toks = list(_tokens(text))
    it = iter(toks)

    def take(kind, what):
        try:
            ln, k, v = next(it)
        except StopIteration:
            raise TextGridError(toks[-1][0] if toks else 1, f"unexpected end of file, expected {what}")
        if k != kind:
            raise TextGridError(ln, f"expected {what}, got {v!r}")
        return ln, v

    _, ftype = take("str", "file type")
    ln, cls = take("str", "object class")
    if ftype != "ooTextFile" or cls != "TextGrid":
        raise TextGridError(ln, "not a TextGrid text file")
    take("num", "xmin")
    take("num", "xmax")
    take("flag", "tiers? <exists>")
    ln, size = take("num", "tier count")
    chosen = None
    for _ in range(int(size)):
        ln, tcls = take("str", "tier class")
        _, name = take("str", "tier name")
        take("num", "tier xmin")
        take("num", "tier xmax")
        ln, n = take("num", "interval count")
        items = []
        for _ in range(int(n)):
            if tcls == "IntervalTier":
                ln, a = take("num", "interval xmin")
                _, b = take("num", "interval xmax")
                _, lab = take("str", "interval text")
                if b < a:
                    raise TextGridError(ln, f"interval ends before it starts ({a} > {b})")
                items.append((a, b, lab))
            elif tcls == "TextTier":
                take("num", "point time")
                take("str", "point mark")
            else:
                raise TextGridError(ln, f"unknown tier class {tcls!r}")
        if chosen is None and tcls == "IntervalTier" and (tier is None or name == tier):
            chosen = items
    if chosen is None:
        raise TextGridError(ln, f"no interval tier named {tier!r}" if tier else "no interval tier")
    segs = []
    for a, b, lab in chosen:
        if lab.strip():
            segs.append(SegmentRecord(utterance_id, len(segs), lab.strip(), a, b - a,
                                      source=Source.EXTERNAL, reading_id=reading_id))
    from .core import annotate_context

    return annotate_context(segs)


def read_textgrid(path, tier: Optional[str] = None, **kw) -> list[SegmentRecord]:
    return parse_textgrid(Path(path).read_text(encoding="utf-8"), tier, **kw)
