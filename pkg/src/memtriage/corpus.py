"""Case layout on disk, manifest ingestion, and printable-string extraction.

A case is a directory holding one JSON manifest plus one subdirectory per
timed memory dump (``<index>/memdump.bin`` and/or ``<index>/plugins/``).
String extraction treats "printable" as Unicode categories L/N/P/S/Zs plus
tab, decoded as UTF-8; invalid byte sequences terminate a run.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

DEFAULT_MIN_RUN_LEN = 4
STREAM_BUFFER_SIZE = 1 << 20

PLATFORMS = ("android-linux", "windows")


class CaseError(Exception):
    """Missing, malformed, or internally inconsistent case manifest."""


class ScanError(Exception):
    """I/O failure while scanning a raw dump; records how far the scan got."""

    def __init__(self, message: str, bytes_scanned: int):
        super().__init__(message)
        self.bytes_scanned = bytes_scanned


@dataclass(frozen=True)
class StringRun:
    """One maximal printable run: decoded text, byte offset, character count."""

    text: str
    offset: int
    length: int

    def to_dict(self) -> dict:
        return {"text": self.text, "offset": self.offset, "length": self.length}


@dataclass
class DumpCase:
    index: int
    raw_dump_path: Path | None = None
    plugin_dir: Path | None = None
    byte_size: int = 0

    @property
    def source_kind(self) -> str:
        # Plugin output implies a full-RAM capture was analysed; a bare
        # binary blob is a target-process dump read via strings only.
        return "full_ram" if self.plugin_dir is not None else "target_process"


@dataclass
class CaseManifest:
    case_id: str
    platform: str
    cadence_seconds: int
    dumps: list[DumpCase] = field(default_factory=list)
    label_hint: str | None = None
    root: Path | None = None


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise CaseError(message)


def load_case(manifest_path: str | Path) -> CaseManifest:
    """Load and validate a case manifest, resolving paths relative to it.

    Raises CaseError naming the offending field for any schema violation,
    for dump index gaps, and for byte_size mismatches against the actual
    raw dump file.
    """
    path = Path(manifest_path)
    if not path.is_file():
        raise CaseError(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise CaseError(f"unreadable manifest {path}: {exc}") from exc

    _require(isinstance(raw, dict), "manifest: expected a JSON object")
    case_id = raw.get("case_id")
    _require(isinstance(case_id, str) and case_id != "", "case_id: non-empty string required")
    platform = raw.get("platform")
    _require(platform in PLATFORMS, f"platform: must be one of {PLATFORMS}, got {platform!r}")
    cadence = raw.get("cadence_seconds")
    _require(isinstance(cadence, int) and not isinstance(cadence, bool) and cadence > 0,
             f"cadence_seconds: positive integer required, got {cadence!r}")
    label_hint = raw.get("label_hint")
    _require(label_hint is None or isinstance(label_hint, str), "label_hint: string or null")

    entries = raw.get("dumps")
    _require(isinstance(entries, list), "dumps: list required")
    _require(len(entries) > 0, "dumps: empty case (at least one dump required)")

    root = path.parent
    dumps: list[DumpCase] = []
    for pos, entry in enumerate(entries):
        where = f"dumps[{pos}]"
        _require(isinstance(entry, dict), f"{where}: object required")
        idx = entry.get("index")
        _require(isinstance(idx, int) and not isinstance(idx, bool) and idx >= 0,
                 f"{where}.index: non-negative integer required")
        raw_dump = entry.get("raw_dump")
        plugin_dir = entry.get("plugin_dir")
        _require(raw_dump is not None or plugin_dir is not None,
                 f"{where}: at least one of raw_dump, plugin_dir required")

        raw_path = None
        byte_size = 0
        if raw_dump is not None:
            _require(isinstance(raw_dump, str), f"{where}.raw_dump: string path required")
            raw_path = root / raw_dump
            _require(raw_path.is_file(), f"{where}.raw_dump: file not found: {raw_path}")
            actual = raw_path.stat().st_size
            declared = entry.get("byte_size")
            if declared is not None:
                _require(isinstance(declared, int) and declared >= 0,
                         f"{where}.byte_size: non-negative integer required")
                _require(declared == actual,
                         f"{where}.byte_size: expected {actual}, found {declared}")
            byte_size = actual

        plug_path = None
        if plugin_dir is not None:
            _require(isinstance(plugin_dir, str), f"{where}.plugin_dir: string path required")
            plug_path = root / plugin_dir
            _require(plug_path.is_dir(), f"{where}.plugin_dir: directory not found: {plug_path}")

        dumps.append(DumpCase(index=idx, raw_dump_path=raw_path,
                              plugin_dir=plug_path, byte_size=byte_size))

    dumps.sort(key=lambda d: d.index)
    seen = set()
    for d in dumps:
        _require(d.index not in seen, f"dumps: duplicate index {d.index}")
        seen.add(d.index)
    for want, d in enumerate(dumps):
        _require(d.index == want, f"dumps: index gap at {want} (found {d.index})")

    return CaseManifest(case_id=case_id, platform=platform, cadence_seconds=cadence,
                        dumps=dumps, label_hint=label_hint, root=root)


# ---------------------------------------------------------------------------
# Printable-run scanning

_ASCII_PRINTABLE = tuple(b == 0x09 or 0x20 <= b <= 0x7E for b in range(256))

# UTF-8 sequence length per lead byte; 0 marks bytes that can never lead a
# valid sequence (continuation bytes, overlong leads 0xC0/0xC1, > 0xF4).
_UTF8_SEQ_LEN = tuple(
    1 if b < 0x80 else
    2 if 0xC2 <= b <= 0xDF else
    3 if 0xE0 <= b <= 0xEF else
    4 if 0xF0 <= b <= 0xF4 else 0
    for b in range(256)
)

# Bytes that can neither start nor continue a run: control bytes except tab.
_GAP_RE = re.compile(rb"[\x00-\x08\x0a-\x1f\x7f]+")

_category_cache: dict[str, bool] = {}


def _printable_char(ch: str) -> bool:
    hit = _category_cache.get(ch)
    if hit is None:
        cat = unicodedata.category(ch)
        hit = cat[0] in "LNPS" or cat == "Zs" or ch == "\t"
        _category_cache[ch] = hit
    return hit


def extract_strings(data: bytes, min_len: int = DEFAULT_MIN_RUN_LEN) -> list[StringRun]:
    """Return every maximal printable run of at least min_len characters.

    Runs are non-overlapping and ordered by byte offset. Offsets are byte
    offsets into the input; lengths are character counts (multi-byte UTF-8
    characters count once).
    """
    if min_len < 1:
        raise ValueError("min_len must be >= 1")
    runs: list[StringRun] = []
    chars: list[str] = []
    start = 0
    i = 0
    n = len(data)
    ascii_ok = _ASCII_PRINTABLE
    seq_len = _UTF8_SEQ_LEN
    while i < n:
        b = data[i]
        if b < 0x80:
            if ascii_ok[b]:
                if not chars:
                    start = i
                chars.append(chr(b))
                i += 1
                continue
            if chars:
                if len(chars) >= min_len:
                    runs.append(StringRun("".join(chars), start, len(chars)))
                chars = []
                i += 1
            else:
                gap = _GAP_RE.match(data, i)
                i = gap.end() if gap else i + 1
            continue
        seq = seq_len[b]
        ch = None
        if seq and i + seq <= n:
            try:
                ch = data[i:i + seq].decode("utf-8")
            except UnicodeDecodeError:
                ch = None
        if ch is not None and _printable_char(ch):
            if not chars:
                start = i
            chars.append(ch)
            i += seq
        else:
            if chars:
                if len(chars) >= min_len:
                    runs.append(StringRun("".join(chars), start, len(chars)))
                chars = []
            i += seq if ch is not None else 1
    if len(chars) >= min_len:
        runs.append(StringRun("".join(chars), start, len(chars)))
    return runs


@dataclass(frozen=True)
class ScanSummary:
    runs: int
    bytes_scanned: int


class _StreamScanner:
    """Incremental run scanner fed chunk by chunk.

    Keeps at most 3 carried bytes (an incomplete UTF-8 tail) between chunks
    plus the currently open run, so runs spanning chunk boundaries are never
    split. Peak memory is O(chunk size + longest run).
    """

    def __init__(self, min_len: int, sink: Callable[[StringRun], None] | None):
        self._min_len = min_len
        self._sink = sink
        self._tail = b""
        self._tail_abs = 0
        self._chars: list[str] = []
        self._start = 0
        self.run_count = 0

    def _close(self) -> None:
        if len(self._chars) >= self._min_len:
            text = "".join(self._chars)
            self.run_count += 1
            if self._sink is not None:
                self._sink(StringRun(text, self._start, len(self._chars)))
        self._chars = []

    def _consume(self, buf: bytes, base: int, final: bool) -> int:
        i = 0
        n = len(buf)
        while i < n:
            b = buf[i]
            if b < 0x80:
                if _ASCII_PRINTABLE[b]:
                    if not self._chars:
                        self._start = base + i
                    self._chars.append(chr(b))
                    i += 1
                    continue
                if self._chars:
                    self._close()
                    i += 1
                else:
                    gap = _GAP_RE.match(buf, i)
                    i = gap.end() if gap else i + 1
                continue
            seq = _UTF8_SEQ_LEN[b]
            if seq == 0:
                if self._chars:
                    self._close()
                i += 1
                continue
            if i + seq > n:
                if not final:
                    break  # sequence may complete in the next chunk
                if self._chars:
                    self._close()
                i += 1
                continue
            try:
                ch = buf[i:i + seq].decode("utf-8")
            except UnicodeDecodeError:
                ch = None
            if ch is not None and _printable_char(ch):
                if not self._chars:
                    self._start = base + i
                self._chars.append(ch)
                i += seq
            else:
                if self._chars:
                    self._close()
                i += seq if ch is not None else 1
        return i

    def feed(self, chunk: bytes) -> None:
        buf = self._tail + chunk
        consumed = self._consume(buf, self._tail_abs, final=False)
        self._tail = buf[consumed:]
        self._tail_abs += consumed

    def finish(self) -> None:
        if self._tail:
            self._consume(self._tail, self._tail_abs, final=True)
            self._tail_abs += len(self._tail)
            self._tail = b""
        self._close()


def scan_bytes_streaming(data_chunks, min_len: int,
                         sink: Callable[[StringRun], None] | None) -> int:
    """Feed an iterable of byte chunks through the incremental scanner."""
    scanner = _StreamScanner(min_len, sink)
    for chunk in data_chunks:
        scanner.feed(chunk)
    scanner.finish()
    return scanner.run_count


def scan_dump_streaming(raw_dump_path: str | Path,
                        min_len: int = DEFAULT_MIN_RUN_LEN,
                        sink: Callable[[StringRun], None] | None = None,
                        buffer_size: int = STREAM_BUFFER_SIZE) -> ScanSummary:
    """Scan a raw dump file with a fixed read buffer.

    Produces the same run set as extract_strings over the whole file without
    loading it into memory. An I/O failure mid-scan raises ScanError carrying
    the byte offset reached.
    """
    if min_len < 1:
        raise ValueError("min_len must be >= 1")
    path = Path(raw_dump_path)
    scanner = _StreamScanner(min_len, sink)
    total = 0
    try:
        with open(path, "rb") as fh:
            while True:
                chunk = fh.read(buffer_size)
                if not chunk:
                    break
                total += len(chunk)
                scanner.feed(chunk)
    except OSError as exc:
        raise ScanError(f"I/O failure scanning {path} at byte {total}: {exc}", total) from exc
    scanner.finish()
    return ScanSummary(runs=scanner.run_count, bytes_scanned=total)
