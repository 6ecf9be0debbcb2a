import os
import random
import struct

import pytest

from archfmt.errors import SyncLost
from archfmt.rarc import (
    encode_block,
    read_header,
    read_rarc,
    read_rarc_rows,
    resync,
    write_rarc,
)
from test_carc import SCHEMA, make_rows


def header_len(path):
    with open(path, "rb") as fh:
        _, _, _, hlen = read_header(fh, str(path))
    return hlen


def test_zero_rows_header_only(tmp_path):
    path = tmp_path / "zero.rarc"
    write_rarc([], SCHEMA, path)
    assert os.path.getsize(path) == header_len(path)
    rows, _ = read_rarc_rows(path)
    assert rows == []


def test_block_sizes_ceiling_division(tmp_path):
    path = tmp_path / "b.rarc"
    write_rarc(make_rows(2500), SCHEMA, path, rows_per_block=1024)
    with open(path, "rb") as fh:
        _, _, sync, hlen = read_header(fh, str(path))
        fh.seek(hlen)
        counts = []
        while True:
            head = fh.read(20)
            if not head:
                break
            count, ulen, clen = struct.unpack("<IQQ", head)
            counts.append(count)
            fh.seek(clen, 1)
            assert fh.read(16) == sync
    assert counts == [1024, 1024, 452]


def test_two_seeds_same_rows_different_markers(tmp_path):
    rows = make_rows(500, seed=1)
    a, b = tmp_path / "a.rarc", tmp_path / "b.rarc"
    write_rarc(rows, SCHEMA, a, seed=1)
    write_rarc(rows, SCHEMA, b, seed=2)
    with open(a, "rb") as fh:
        _, _, sync_a, _ = read_header(fh, str(a))
    with open(b, "rb") as fh:
        _, _, sync_b, _ = read_header(fh, str(b))
    assert sync_a != sync_b
    assert read_rarc_rows(a)[0] == read_rarc_rows(b)[0] == rows


def test_roundtrip_2500(tmp_path):
    rows = make_rows(2500, seed=5)
    path = tmp_path / "rt.rarc"
    write_rarc(rows, SCHEMA, path)
    got, m = read_rarc_rows(path)
    assert got == rows
    assert m.bytes_read == os.path.getsize(path)
    assert m.seek_count == 1


def test_truncated_mid_block(tmp_path):
    rows = make_rows(300, seed=6)
    path = tmp_path / "full.rarc"
    write_rarc(rows, SCHEMA, path, rows_per_block=100)
    data = path.read_bytes()
    cut = tmp_path / "cut.rarc"
    cut.write_bytes(data[: len(data) - 37])  # inside the last block
    got = []
    with pytest.raises(SyncLost):
        for row in read_rarc(cut):
            got.append(row)
    assert got == rows[:200]  # two complete blocks survive


def test_empty_after_header(tmp_path):
    path = tmp_path / "full.rarc"
    write_rarc(make_rows(10), SCHEMA, path)
    empty = tmp_path / "hdr.rarc"
    empty.write_bytes(path.read_bytes()[: header_len(path)])
    rows, _ = read_rarc_rows(empty)
    assert rows == []


def test_resync_from_zero_and_eof(tmp_path):
    rows = make_rows(777, seed=7)
    path = tmp_path / "r.rarc"
    write_rarc(rows, SCHEMA, path, rows_per_block=50)
    assert list(resync(path, 0)) == rows
    assert list(resync(path, header_len(path))) == rows
    assert list(resync(path, os.path.getsize(path))) == []


def test_resync_midpoint_partition(tmp_path):
    rows = make_rows(900, seed=8)
    path = tmp_path / "m.rarc"
    write_rarc(rows, SCHEMA, path, rows_per_block=64)
    size = os.path.getsize(path)
    mid = size // 2
    first = list(resync(path, 0))
    second = list(resync(path, mid))
    # reader 1 claims blocks found in [0, mid), reader 2 the rest
    claimed_first = first[: len(first) - len(second)]
    assert claimed_first + second == rows
    assert len(set(map(tuple, claimed_first)) & set(map(tuple, second))) == 0


@pytest.mark.parametrize("rows_per_block", [1, 13, 1024])
@pytest.mark.parametrize("codec", ["none", "gzip"])
def test_roundtrip_all_options(tmp_path, rows_per_block, codec):
    rows = make_rows(200, seed=rows_per_block)
    path = tmp_path / f"rt{rows_per_block}{codec}.rarc"
    write_rarc(rows, SCHEMA, path, rows_per_block=rows_per_block, codec=codec)
    got, _ = read_rarc_rows(path)
    assert got == rows


def test_split_partition_100_points(tmp_path):
    rows = make_rows(600, seed=9)
    path = tmp_path / "split.rarc"
    write_rarc(rows, SCHEMA, path, rows_per_block=37)
    size = os.path.getsize(path)
    rng = random.Random(10)
    for _ in range(100):
        s = rng.randint(1, size)
        lo_rows = list(resync(path, 0))
        hi_rows = list(resync(path, s))
        # suffix property: hi_rows is a suffix of lo_rows; the split partitions
        assert lo_rows == rows
        assert hi_rows == rows[len(rows) - len(hi_rows) :]


def test_concatenatability(tmp_path):
    rows_a = make_rows(130, seed=11)
    rows_b = make_rows(70, seed=12)
    a = tmp_path / "a.rarc"
    write_rarc(rows_a, SCHEMA, a, rows_per_block=50, seed=3)
    with open(a, "rb") as fh:
        schema, codec, sync, _ = read_header(fh, str(a))
    blob = bytearray(a.read_bytes())
    for start in range(0, len(rows_b), 50):
        blob += encode_block(rows_b[start : start + 50], schema, codec, sync)
    merged = tmp_path / "merged.rarc"
    merged.write_bytes(bytes(blob))
    got, _ = read_rarc_rows(merged)
    assert got == rows_a + rows_b


def test_bytes_view_yields_equal_views(tmp_path):
    from archfmt.rarc import read_rarc

    rows = make_rows(150, seed=22)
    path = tmp_path / "v.rarc"
    write_rarc(rows, SCHEMA, path, rows_per_block=40)
    got = []
    for row in read_rarc(path, bytes_view=True):
        assert isinstance(row[-1], memoryview)
        # detach before the next block recycles the buffer
        got.append(tuple(bytes(v) if isinstance(v, memoryview) else v for v in row))
    assert got == rows
