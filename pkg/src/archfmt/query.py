"""Run the three workload types uniformly over four storage backends.

Backends: ``warc`` (full sequential scan), ``warc_cdx`` (index lookup plus
positioned reads), ``carc`` (columnar with pushdown), ``rarc`` (row-binary
full scan).  Every query reports an order-insensitive digest of the matched
records so backends can be checked against each other.
"""

from __future__ import annotations

import hashlib
import re
from urllib.parse import urldefrag, urljoin
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

from . import carc, cdx, rarc, warc
from .carc import ScanPredicate
from .convert import CANONICAL_SCHEMA, COL, CanonicalRecord, to_canonical
from .errors import BackendUnavailable
from .iostats import IoTracker, Measurement

BACKENDS = ("warc", "warc_cdx", "carc", "rarc")
META_COLUMNS = tuple(c.name for c in CANONICAL_SCHEMA.columns if c.name not in ("payload", "http_headers"))
DEFAULT_META_PROJECTION = ("urlkey", "timestamp", "digest")


@dataclass(frozen=True)
class QuerySpec:
    kind: str  # count | meta | records | scan_extract
    time_range: Optional[tuple[int, int]] = None  # epoch ms, inclusive
    urlkeys: Optional[tuple[str, ...]] = None
    projection: tuple[str, ...] = DEFAULT_META_PROJECTION
    extractor: str = "text"  # scan_extract only

    def __post_init__(self):
        if self.time_range is not None and self.urlkeys is not None:
            raise ValueError("at most one predicate")


@dataclass(frozen=True)
class DatasetPaths:
    warc_files: tuple[str, ...] = ()
    cdx: Optional[str] = None
    carc: Optional[str] = None
    rarc: Optional[str] = None

    @property
    def warc_dir(self) -> str:
        return str(Path(self.warc_files[0]).parent)


@dataclass
class QueryResult:
    rows: Optional[list]
    measurement: Measurement
    backend: str
    record_ids_digest: str


class _DigestAcc:
    """Order-insensitive digest over (urlkey, timestamp, digest) triples."""

    def __init__(self):
        self.triples: list[tuple] = []

    def add(self, urlkey, timestamp, digest):
        self.triples.append((urlkey, timestamp, digest))

    def hexdigest(self) -> str:
        h = hashlib.sha256()
        for u, t, d in sorted(self.triples):
            h.update(f"{u}\x1f{t}\x1f{d}\n".encode("utf-8"))
        return h.hexdigest()


def _count_digest(n: int) -> str:
    return hashlib.sha256(f"count:{n}".encode()).hexdigest()


def _matches_row(row: tuple, spec: QuerySpec) -> bool:
    if spec.time_range is not None:
        lo, hi = spec.time_range
        return lo <= row[COL["timestamp"]] <= hi
    if spec.urlkeys is not None:
        return row[COL["urlkey"]] in spec.urlkeys
    return True


def _predicate(spec: QuerySpec) -> Optional[ScanPredicate]:
    if spec.time_range is not None:
        return ScanPredicate.range("timestamp", *spec.time_range)
    if spec.urlkeys is not None:
        return ScanPredicate.isin("urlkey", spec.urlkeys)
    return None


def _iter_warc_rows(paths: DatasetPaths, tracker: IoTracker) -> Iterator[tuple]:
    for file in paths.warc_files:
        for record, _loc in warc.scan_warc(file, tracker=tracker):
            if record.record_type != "response":
                continue
            yield to_canonical(record).to_row()


def _iter_rarc_rows(paths: DatasetPaths, tracker: IoTracker) -> Iterator[tuple]:
    yield from rarc.read_rarc(paths.rarc, tracker=tracker)


def _require(value, what: str, backend: str):
    if not value:
        raise BackendUnavailable(f"backend {backend} needs {what}")
    return value


def _read_cdx_entries(paths: DatasetPaths, tracker: IoTracker) -> list[cdx.CdxEntry]:
    path = _require(paths.cdx, "a CDX index", "warc_cdx")
    entries = list(cdx.parse_cdx(path))
    tracker.open_count += 1
    tracker.seek_count += 1
    tracker.bytes_read += Path(path).stat().st_size
    return entries


def _filter_entries(entries, spec: QuerySpec) -> list[cdx.CdxEntry]:
    if spec.time_range is not None:
        lo, hi = spec.time_range
        return [e for e in entries if lo <= cdx.parse_timestamp14(e.timestamp14) <= hi]
    if spec.urlkeys is not None:
        keys = set(spec.urlkeys)
        return [e for e in entries if e.urlkey in keys]
    return list(entries)


def run_query(
    spec: QuerySpec, backend: str, paths: DatasetPaths, keep_rows: bool = True
) -> QueryResult:
    """Execute a count/meta/records query on one backend."""
    if backend not in BACKENDS:
        raise BackendUnavailable(backend)
    tracker = IoTracker()
    acc = _DigestAcc()
    rows: Optional[list] = [] if keep_rows else None
    n = 0
    proj_idx = [COL[name] for name in spec.projection]

    def take(row: tuple):
        nonlocal n
        n += 1
        acc.add(row[COL["urlkey"]], row[COL["timestamp"]], row[COL["digest"]])
        if rows is not None:
            rows.append(row if spec.kind == "records" else tuple(row[i] for i in proj_idx))

    if backend in ("warc", "rarc"):
        if backend == "warc":
            _require(paths.warc_files, "WARC files", backend)
            source = _iter_warc_rows(paths, tracker)
        else:
            _require(paths.rarc, "an RARC file", backend)
            source = _iter_rarc_rows(paths, tracker)
        for row in source:
            if _matches_row(row, spec):
                take(row)
        digest = _count_digest(n) if spec.kind == "count" else acc.hexdigest()
        if spec.kind == "count":
            rows = [n]

    elif backend == "warc_cdx":
        entries = _filter_entries(_read_cdx_entries(paths, tracker), spec)
        if spec.kind == "count":
            n = len(entries)
            rows = [n]
            digest = _count_digest(n)
        elif spec.kind == "meta":
            for e in entries:
                row = _entry_row(e)
                take(row)
            digest = acc.hexdigest()
        else:  # records: positioned reads
            for record in cdx.iter_fetch_records(entries, paths.warc_dir, tracker):
                take(to_canonical(record).to_row())
            digest = acc.hexdigest()

    else:  # carc
        path = _require(paths.carc, "a CARC file", backend)
        pred = _predicate(spec)
        if spec.kind == "count":
            if pred is None:
                footer = carc.read_footer(path, tracker)
                n = footer.total_rows
            else:
                for _ in carc.read_carc(path, projection=(), pred=pred, tracker=tracker):
                    n += 1
            rows = [n]
            digest = _count_digest(n)
        else:
            if spec.kind == "meta":
                needed = tuple(dict.fromkeys(spec.projection + ("urlkey", "timestamp", "digest")))
            else:
                needed = None  # full projection
            schema = CANONICAL_SCHEMA
            if needed is None:
                positions = {name: i for i, name in enumerate(COL)}
            else:
                in_schema_order = [c.name for c in schema.columns if c.name in needed]
                positions = {name: i for i, name in enumerate(in_schema_order)}
            for frag in carc.read_carc(path, projection=needed, pred=pred, tracker=tracker):
                n += 1
                acc.add(
                    frag[positions["urlkey"]], frag[positions["timestamp"]], frag[positions["digest"]]
                )
                if rows is not None:
                    if spec.kind == "records":
                        rows.append(frag)
                    else:
                        rows.append(tuple(frag[positions[name]] for name in spec.projection))
            digest = acc.hexdigest()

    return QueryResult(
        rows=rows,
        measurement=tracker.measurement(records_out=n),
        backend=backend,
        record_ids_digest=digest,
    )


def _entry_row(e: cdx.CdxEntry) -> tuple:
    """Canonical-row-shaped tuple backed by CDX fields only."""
    return (
        e.urlkey,
        e.original_url,
        cdx.parse_timestamp14(e.timestamp14),
        "response",
        e.mime,
        int(e.status) if e.status.isdigit() else -1,
        e.digest,
        -1,  # payload length not recorded in CDX
        None,
        b"",
    )


# --- payload extractors -------------------------------------------------------

_COMMENT_RE = re.compile(rb"<!--.*?-->", re.S)
_SCRIPT_RE = re.compile(rb"<(script|style)\b[^>]*>.*?</\1\s*>", re.S | re.I)
_TAG_RE = re.compile(rb"<[^>]*>")
_WS_RE = re.compile(r"\s+")
_ENTITY_RE = re.compile(r"&(#[0-9]+|#[xX][0-9a-fA-F]+|amp|lt|gt|quot|apos);")
_NAMED_ENTITIES = {"amp": "&", "lt": "<", "gt": ">", "quot": '"', "apos": "'"}
_HREF_RE = re.compile(rb"""<a\s[^>]*?href\s*=\s*("[^"]*"|'[^']*'|[^\s>]+)""", re.I)


def _entity_sub(m: re.Match) -> str:
    body = m.group(1)
    if body.startswith("#"):
        try:
            code = int(body[2:], 16) if body[1] in "xX" else int(body[1:])
            return chr(code)
        except (ValueError, OverflowError):
            return m.group(0)
    return _NAMED_ENTITIES[body]


def extract_text(payload: bytes, mime: str) -> str:
    """Visible text of an HTML payload; empty string for anything else."""
    if mime.split(";")[0].strip().lower() != "text/html":
        return ""
    b = _COMMENT_RE.sub(b" ", payload)
    b = _SCRIPT_RE.sub(b" ", b)
    b = _TAG_RE.sub(b" ", b)
    text = b.decode("utf-8", errors="replace")
    if "&" in text:
        text = _ENTITY_RE.sub(_entity_sub, text)
    return _WS_RE.sub(" ", text).strip()


def extract_links(payload: bytes, base_url: str) -> list[str]:
    """Anchor hrefs in document order, resolved against base_url, fragments stripped."""
    out = []
    for m in _HREF_RE.finditer(payload):
        raw = m.group(1)
        if raw[:1] in (b'"', b"'"):
            raw = raw[1:-1]
        if (
            (raw[:7] == b"http://" or raw[:8] == b"https://")
            and b"&" not in raw
            and not raw[-1:].isspace()
        ):
            out.append(raw.split(b"#", 1)[0].decode("utf-8", "replace"))
            continue
        href = raw.decode("utf-8", errors="replace").strip()
        if "&" in href:
            href = _ENTITY_RE.sub(_entity_sub, href)
        if not href:
            continue
        if href.startswith("http://") or href.startswith("https://"):
            out.append(href.partition("#")[0])
            continue
        try:
            resolved = urldefrag(urljoin(base_url, href)).url
        except ValueError:
            continue
        if resolved.startswith("http://") or resolved.startswith("https://"):
            out.append(resolved)
    return out


def _escape_derived(s: str) -> str:
    return s.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


_EXTRACT_COLUMNS = ("mime", "digest", "url", "payload")


def _iter_extract_rows(backend: str, paths: DatasetPaths, tracker: IoTracker) -> Iterator[tuple]:
    """Yield (mime, digest, url, payload) per record; carc projects the columns."""
    pick = tuple(COL[name] for name in _EXTRACT_COLUMNS)
    if backend == "warc":
        _require(paths.warc_files, "WARC files", backend)
        for row in _iter_warc_rows(paths, tracker):
            yield tuple(row[i] for i in pick)
    elif backend == "warc_cdx":
        entries = _read_cdx_entries(paths, tracker)
        for record in cdx.iter_fetch_records(entries, paths.warc_dir, tracker):
            row = to_canonical(record).to_row()
            yield tuple(row[i] for i in pick)
    elif backend == "carc":
        path = _require(paths.carc, "a CARC file", backend)
        in_schema_order = [c.name for c in CANONICAL_SCHEMA.columns if c.name in _EXTRACT_COLUMNS]
        reorder = tuple(in_schema_order.index(name) for name in _EXTRACT_COLUMNS)
        for frag in carc.read_carc(
            path, projection=_EXTRACT_COLUMNS, tracker=tracker, bytes_view=True
        ):
            yield tuple(frag[i] for i in reorder)
    elif backend == "rarc":
        _require(paths.rarc, "an RARC file", backend)
        for row in rarc.read_rarc(paths.rarc, tracker=tracker, bytes_view=True):
            yield tuple(row[i] for i in pick)
    else:
        raise BackendUnavailable(backend)


def scan_extract(
    backend: str, paths: DatasetPaths, extractor: str, out_path
) -> tuple[str, Measurement]:
    """Derive (digest, extracted text or links) for every HTML record.

    Output lines are sorted so the derived file is byte-identical across
    backends regardless of their storage order.
    """
    tracker = IoTracker()
    lines = []
    for mime, digest, url, payload in _iter_extract_rows(backend, paths, tracker):
        if mime.split(";")[0].strip().lower() != "text/html":
            continue
        if extractor == "links":
            derived = " ".join(extract_links(payload, url))
        else:
            derived = extract_text(payload, mime)
        lines.append(f"{digest}\t{_escape_derived(derived)}\n")
    lines.sort()
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)
    return str(out_path), tracker.measurement(records_out=len(lines))
