import hashlib
import random

import pytest

from archfmt import cdx
from archfmt.bench import selectivity_ranges, selectivity_url_lists
from archfmt.convert import convert
from archfmt.errors import BackendUnavailable
from archfmt.query import (
    BACKENDS,
    DatasetPaths,
    QuerySpec,
    extract_links,
    extract_text,
    run_query,
    scan_extract,
)
from archfmt.warc import write_warc

from conftest import synth_records


def test_count_matches_generator(corpus):
    n = corpus["spec"].record_count
    spec = QuerySpec(kind="count")
    for backend in BACKENDS:
        result = run_query(spec, backend, corpus["paths"])
        assert result.rows == [n]
        assert result.backend == backend


def test_meta_empty_time_range_all_backends(corpus):
    spec = QuerySpec(kind="meta", time_range=(1, 2))  # 1970: nothing there
    digests = set()
    for backend in BACKENDS:
        result = run_query(spec, backend, corpus["paths"])
        assert result.rows == []
        digests.add(result.record_ids_digest)
    assert len(digests) == 1


def test_records_url_list_matches_warc_oracle(corpus):
    entries = list(cdx.parse_cdx(corpus["paths"].cdx))
    by_key = {}
    for e in entries:
        by_key.setdefault(e.urlkey, []).append(e)
    keys = sorted(by_key, key=lambda k: -len(by_key[k]))[:3]
    expected = sum(len(by_key[k]) for k in keys)
    spec = QuerySpec(kind="records", urlkeys=tuple(keys))
    oracle = run_query(spec, "warc", corpus["paths"])
    assert len(oracle.rows) == expected
    for backend in ("warc_cdx", "carc", "rarc"):
        result = run_query(spec, backend, corpus["paths"])
        assert result.record_ids_digest == oracle.record_ids_digest
        assert len(result.rows) == expected


def test_backend_equivalence_randomized(corpus):
    rng = random.Random(31)
    paths = corpus["paths"]
    time_lo, time_hi = corpus["spec"].time_range
    all_keys = sorted({e.urlkey for e in cdx.parse_cdx(paths.cdx)})
    for _ in range(12):
        kind = rng.choice(["count", "meta", "records"])
        if rng.random() < 0.5:
            a = rng.randint(time_lo, time_hi)
            spec = QuerySpec(kind=kind, time_range=(a, a + rng.randint(0, time_hi - a)))
        else:
            spec = QuerySpec(
                kind=kind, urlkeys=tuple(rng.sample(all_keys, rng.randint(1, 5)))
            )
        digests = {run_query(spec, b, paths).record_ids_digest for b in BACKENDS}
        assert len(digests) == 1, f"backends disagree for {spec}"


def test_type1_payload_avoidance(corpus):
    paths = corpus["paths"]
    spec = QuerySpec(kind="meta", time_range=corpus["spec"].time_range)
    carc_result = run_query(spec, "carc", paths)
    import os

    assert carc_result.measurement.bytes_read < 0.2 * os.path.getsize(paths.carc)
    cdx_result = run_query(spec, "warc_cdx", paths)
    assert cdx_result.measurement.open_count == 1  # the CDX file only, no WARC


def test_monotone_io_warc_cdx_and_constant_warc(corpus):
    paths = corpus["paths"]
    ranges = selectivity_ranges(paths.cdx, [0.1, 0.5, 1.0])
    cdx_bytes, warc_bytes, matched = [], [], []
    for lo, hi in ranges:
        spec = QuerySpec(kind="records", time_range=(lo, hi))
        r1 = run_query(spec, "warc_cdx", paths, keep_rows=False)
        r2 = run_query(spec, "warc", paths, keep_rows=False)
        cdx_bytes.append(r1.measurement.bytes_read)
        warc_bytes.append(r2.measurement.bytes_read)
        matched.append(r1.measurement.records_out)
    assert matched == sorted(matched) and matched[0] < matched[-1]
    assert cdx_bytes == sorted(cdx_bytes) and cdx_bytes[0] < cdx_bytes[-1]
    assert len(set(warc_bytes)) == 1  # full scan regardless of selectivity


def test_missing_artifact_raises(corpus):
    paths = DatasetPaths(warc_files=corpus["paths"].warc_files, cdx=None, carc=None, rarc=None)
    for backend in ("warc_cdx", "carc", "rarc"):
        with pytest.raises(BackendUnavailable):
            run_query(QuerySpec(kind="count"), backend, paths)


# --- extractors --------------------------------------------------------------

def test_extract_text_tag_stripping():
    assert extract_text(b"<p>Hello <b>world</b></p>", "text/html") == "Hello world"


def test_extract_text_script_and_entities():
    assert extract_text(b"<script>x=1</script>Hi&amp;Bye", "text/html") == "Hi&Bye"


def test_extract_text_non_html():
    assert extract_text(b"\x89PNG...", "image/png") == ""


def test_extract_text_comments_numeric_entities_whitespace():
    html = b"<!-- no -->  A&#65;&#x42;   <style>p{}</style> B\n\nC  "
    assert extract_text(html, "text/html") == "AAB B C"


def test_extract_links_root_relative():
    assert extract_links(b'<a href="/about">', "http://x.com/home") == ["http://x.com/about"]


def test_extract_links_relative_and_absolute():
    html = b'<a href="b.html"><a href="http://y.com/">'
    assert extract_links(html, "http://x.com/a/") == [
        "http://x.com/a/b.html",
        "http://y.com/",
    ]


def test_extract_links_none():
    assert extract_links(b"<p>nothing here</p>", "http://x.com/") == []


def test_extract_links_fragments_and_duplicates():
    html = b'<a href="/p#frag"><a href="/p">'
    assert extract_links(html, "http://x.com/") == ["http://x.com/p", "http://x.com/p"]


# --- scan_extract -------------------------------------------------------------

def make_dataset(tmp_path, records):
    warc_path = tmp_path / "d.warc.gz"
    write_warc(records, warc_path, mode="member_gzip")
    cdx_path = tmp_path / "d.cdx"
    cdx.build_cdx([warc_path], cdx_path)
    carc_m = convert([warc_path], "carc", tmp_path / "carc")
    rarc_m = convert([warc_path], "rarc", tmp_path / "rarc")
    return DatasetPaths(
        warc_files=(str(warc_path),), cdx=str(cdx_path), carc=carc_m.output, rarc=rarc_m.output
    )


@pytest.mark.parametrize("extractor", ["text", "links"])
def test_scan_extract_identical_across_backends(tmp_path, extractor):
    paths = make_dataset(tmp_path, synth_records(5, seed=40))
    digests = {}
    for backend in BACKENDS:
        out = tmp_path / f"{backend}.{extractor}.tsv"
        scan_extract(backend, paths, extractor, out)
        digests[backend] = hashlib.sha256(out.read_bytes()).hexdigest()
        assert sum(1 for _ in open(out)) == 5
    assert len(set(digests.values())) == 1


def test_scan_extract_images_only(tmp_path):
    paths = make_dataset(tmp_path, synth_records(4, seed=41, html=False))
    out = tmp_path / "img.tsv"
    scan_extract("carc", paths, "text", out)
    assert out.read_bytes() == b""


def test_scan_extract_seek_counts(tmp_path):
    paths = make_dataset(tmp_path, synth_records(8, seed=42))
    _, m_cdx = scan_extract("warc_cdx", paths, "links", tmp_path / "a.tsv")
    assert m_cdx.seek_count >= 8  # one positioned read per record (+ CDX pass)
    assert m_cdx.seek_count <= 8 + 2
    _, m_warc = scan_extract("warc", paths, "links", tmp_path / "b.tsv")
    assert m_warc.seek_count == len(paths.warc_files)


def test_url_list_selectivity_helper(corpus):
    paths = corpus["paths"]
    n = corpus["spec"].record_count
    lists = selectivity_url_lists(paths.cdx, [0.1, 1.0], seed=2)
    full = QuerySpec(kind="count", urlkeys=lists[1])
    assert run_query(full, "carc", paths).rows == [n]
    part = run_query(QuerySpec(kind="count", urlkeys=lists[0]), "carc", paths).rows[0]
    assert abs(part / n - 0.1) <= 0.1 * 0.1 + 2 / n
