import random

import pytest

from archfmt import cdx, query
from archfmt.bench import SyntheticSpec, generate_corpus
from archfmt.convert import convert
from archfmt.warc import make_record


def synth_records(n, seed=0, html=True):
    """Small handmade records, distinct from the bench generator."""
    rng = random.Random(seed)
    records = []
    for i in range(n):
        if html:
            body = f"<html><body><p>page {i} {'x' * rng.randint(10, 200)}</p></body></html>".encode()
            mime = "text/html"
        else:
            body = bytes(rng.randrange(256) for _ in range(rng.randint(20, 300)))
            mime = "application/octet-stream"
        http = (
            f"HTTP/1.1 200 OK\r\nContent-Type: {mime}\r\nContent-Length: {len(body)}\r\n\r\n"
        ).encode() + body
        records.append(
            make_record(
                record_id=f"<urn:uuid:00000000-0000-4000-8000-{i:012d}>",
                record_type="response",
                target_uri=f"http://site{i % 5}.example/p/{i}",
                warc_date=f"2018-05-2{rng.randint(0, 2)}T{rng.randint(0, 23):02d}:{rng.randint(0, 59):02d}:{rng.randint(0, 59):02d}Z",
                content_type="application/http; msgtype=response",
                block=http,
            )
        )
    return records


def request_record(i):
    body = b"GET / HTTP/1.1\r\nHost: x\r\n\r\n"
    return make_record(
        record_id=f"<urn:uuid:00000000-0000-4000-9000-{i:012d}>",
        record_type="request",
        target_uri=f"http://site{i % 5}.example/p/{i}",
        warc_date="2018-05-21T12:00:00Z",
        content_type="application/http; msgtype=request",
        block=body,
    )


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Seed-42 generator corpus with CDX, CARC (time-sorted) and RARC artifacts."""
    root = tmp_path_factory.mktemp("corpus42")
    spec = SyntheticSpec(record_count=500, payload_mean_bytes=1500, domain_count=10, seed=42)
    warc_files = generate_corpus(spec, root / "warc")
    cdx_path = root / "index.cdx"
    cdx.build_cdx(warc_files, cdx_path)
    carc_manifest = convert(warc_files, "carc", root / "carc", sort="timestamp", rows_per_group=64)
    rarc_manifest = convert(warc_files, "rarc", root / "rarc", seed=7, rows_per_block=50)
    return {
        "spec": spec,
        "root": root,
        "paths": query.DatasetPaths(
            warc_files=tuple(warc_files),
            cdx=str(cdx_path),
            carc=carc_manifest.output,
            rarc=rarc_manifest.output,
        ),
    }
