"""Tests for feature-as-a-counter parsing: timestamps, counting, chunk merge, readers, stream files."""

import gzip
import time
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from mbda.config.loader import load_config
from mbda.errors import ConfigError, DataError
from mbda.parsing.parser import (
    FeatureStream,
    count_features,
    extract_timestamp,
    is_line_local,
    leading_literal,
    merge_streams,
    parse_files,
    parse_source,
)
from mbda.parsing.reader import encode_raw, iter_lines, plan_chunks
from mbda.parsing.streams import read_stream, write_stream
from tests.conftest import CONFIG_YAML, fw_line, ids_line

MINI_YAML = """
common_interval: 60
sources:
  - name: s
    interval: 60
    timestamp_pattern: '^(\\S+ \\S+)'
    timestamp_format: '%Y-%m-%d %H:%M:%S'
    features:
      - {name: a, pattern: 'a'}
      - {name: b, pattern: 'b'}
"""


@pytest.fixture
def mini():
    return load_config(MINI_YAML).source("s")


def epoch(*args) -> int:
    return int(datetime(*args, tzinfo=timezone.utc).timestamp())


def test_extract_timestamp(config):
    ts = datetime(2012, 4, 5, 17, 51, 3, tzinfo=timezone.utc)
    assert extract_timestamp(fw_line(ts, "Allow", "TCP", 80, "S"), config.source("fw")) == ts
    assert extract_timestamp(ids_line(ts, "x", 2), config.source("ids")) == ts


def test_extract_timestamp_errors(config):
    with pytest.raises(DataError, match="unparseable timestamp"):
        extract_timestamp("no time here", config.source("fw"))
    with pytest.raises(DataError):
        extract_timestamp("2012-13-45 99:00:00 bad", config.source("fw"))


def test_extract_timestamp_utc_offset():
    doc = MINI_YAML.replace("    interval: 60\n", "    interval: 60\n    utc_offset: '+02:00'\n")
    spec = load_config(doc).source("s")
    dt = extract_timestamp("2012-04-05 02:00:00 x", spec)
    assert dt == datetime(2012, 4, 5, 0, 0, tzinfo=timezone.utc)


def test_interval_assignment(mini):
    stream, stats = parse_source(["2012-04-05 17:51:03 a"], mini)
    assert stream.starts.tolist() == [epoch(2012, 4, 5, 17, 51)]
    assert stream.counts.tolist() == [[1, 0]]
    assert stats.lines_read == 1 and stats.lines_unparseable == 0


def test_occurrence_counting(mini):
    stream, _ = parse_source(["2012-04-05 17:51:03 a a a"], mini)
    # 'a' occurs 3 times in the payload; the timestamp text has none
    assert stream.counts.tolist() == [[3, 0]]


def test_unparseable_lines_counted_not_fatal(mini):
    lines = ["garbage", "2012-04-05 17:51:03 b", "2012-99-05 17:51:03 b"]
    stream, stats = parse_source(lines, mini)
    assert stats.lines_read == 3
    assert stats.lines_unparseable == 2
    assert stream.counts.tolist() == [[0, 1]]


def test_interior_gaps_zero_filled(mini):
    lines = ["2012-04-05 00:00:10 a", "2012-04-05 00:03:10 b"]
    stream, stats = parse_source(lines, mini)
    assert len(stream) == 4
    assert stream.counts.tolist() == [[1, 0], [0, 0], [0, 0], [0, 1]]
    assert stats.intervals == 4


def test_empty_input(mini):
    stream, stats = parse_source([], mini)
    assert len(stream) == 0
    assert stream.counts.shape == (0, 2)
    assert stats.lines_read == 0


def test_line_order_does_not_matter(mini):
    lines = ["2012-04-05 00:02:00 a", "2012-04-05 00:00:00 ab", "2012-04-05 00:02:59 b"]
    s1, _ = parse_source(lines, mini)
    s2, _ = parse_source(list(reversed(lines)), mini)
    assert s1.equals(s2)


def test_count_features(config):
    ts = datetime(2012, 4, 5, tzinfo=timezone.utc)
    lines = [fw_line(ts, "Deny", "TCP", 22, "S"), fw_line(ts, "Allow", "UDP", 80, "-")]
    counts = count_features(lines, config.source("fw"))
    names = config.source("fw").feature_names
    assert dict(zip(names, counts.tolist())) == {
        "deny": 1, "allow": 1, "tcp": 1, "udp": 1, "port_22": 1, "port_80": 1,
        "port_443": 0, "flag_syn": 1, "port_6667": 0, "flag_finurg": 0,
    }
    assert count_features([], config.source("fw")).tolist() == [0] * 10


def test_merge_is_associative_over_any_split(mini):
    lines = [f"2012-04-05 00:{m:02d}:{s:02d} {'a' * (m % 3)}{'b' * (s % 2)}" for m in range(10) for s in (5, 17, 40)]
    whole, _ = parse_source(lines, mini)
    for cut in (1, 7, 15, 29):
        left, _ = parse_source(lines[:cut], mini)
        right, _ = parse_source(lines[cut:], mini)
        assert merge_streams([left, right]).equals(whole)
        assert merge_streams([right, left]).equals(whole)


def test_merge_rejects_different_shapes(mini, config):
    a, _ = parse_source([], mini)
    b, _ = parse_source([], config.source("fw"))
    with pytest.raises(DataError):
        merge_streams([a, b])


def test_feature_stream_invariants():
    with pytest.raises(DataError, match="strictly increasing"):
        FeatureStream("s", 60, ("a",), np.array([120, 60]), np.array([[1], [1]]))
    with pytest.raises(DataError, match="aligned"):
        FeatureStream("s", 60, ("a",), np.array([30]), np.array([[1]]))
    with pytest.raises(DataError, match="negative"):
        FeatureStream("s", 60, ("a",), np.array([60]), np.array([[-1]]))


def test_from_rows_adds_duplicates():
    s = FeatureStream.from_rows("s", 60, ["a"], [(120, [1]), (0, [2]), (120, [3])])
    assert s.starts.tolist() == [0, 60, 120]
    assert s.counts.tolist() == [[2], [0], [4]]


# --- readers ---

def test_iter_lines_offsets_and_crlf(tmp_path):
    p = tmp_path / "x.log"
    p.write_bytes(b"one\r\ntwo\nthree")
    assert list(iter_lines(p)) == [(0, "one"), (5, "two"), (9, "three")]


def test_iter_lines_ranges_partition_file(tmp_path):
    p = tmp_path / "x.log"
    p.write_bytes(b"".join(f"line {i}\n".encode() for i in range(100)))
    whole = list(iter_lines(p))
    for n in (2, 3, 7):
        parts = [item for start, end in plan_chunks(p, n) for item in iter_lines(p, start=start, end=end)]
        assert parts == whole


def test_gzip_input(tmp_path):
    p = tmp_path / "x.log.gz"
    with gzip.open(p, "wb") as fh:
        fh.write(b"2012-04-05 00:00:01 aa\n")
    assert plan_chunks(p, 4) == [(0, None)]
    assert [raw for _, raw in iter_lines(p)] == ["2012-04-05 00:00:01 aa"]


def test_invalid_utf8_survives_round_trip(tmp_path):
    p = tmp_path / "x.log"
    data = b"2012-04-05 00:00:01 a\xff\xfe"
    p.write_bytes(data + b"\n")
    [(_, raw)] = list(iter_lines(p))
    assert encode_raw(raw) == data


def test_missing_input_names_path(tmp_path, mini):
    with pytest.raises(DataError, match="nope.log"):
        parse_files([tmp_path / "nope.log"], mini)


def test_parse_files_requires_paths(mini):
    with pytest.raises(ConfigError):
        parse_files([], mini)


def test_parse_files_split_across_files_matches_single(tmp_path, mini):
    lines = [f"2012-04-05 00:{m:02d}:00 ab a" for m in range(20)]
    (tmp_path / "all.log").write_text("\n".join(lines) + "\n")
    (tmp_path / "p1.log").write_text("\n".join(lines[:8]) + "\n")
    (tmp_path / "p2.log").write_text("\n".join(lines[8:]) + "\n")
    whole, _ = parse_files([tmp_path / "all.log"], mini)
    split, stats = parse_files([tmp_path / "p1.log", tmp_path / "p2.log"], mini)
    assert split.equals(whole)
    assert stats.lines_read == 20


def test_parse_files_worker_count_does_not_matter(tmp_path, mini):
    lines = [f"2012-04-05 00:{m % 60:02d}:{m % 7:02d} {'a' * (m % 4)} b" for m in range(300)]
    (tmp_path / "x.log").write_text("\n".join(lines) + "\n")
    one, _ = parse_files([tmp_path / "x.log"], mini, workers=1)
    three, _ = parse_files([tmp_path / "x.log"], mini, workers=3)
    assert three.equals(one)


# --- stream files ---

def test_stream_file_round_trip(tmp_path, config):
    ts = datetime(2012, 4, 5, tzinfo=timezone.utc)
    stream, _ = parse_source([fw_line(ts, "Deny", "TCP", 22, "S")], config.source("fw"))
    path = tmp_path / "fw.csv"
    write_stream(stream, path)
    header = path.read_text().splitlines()[0]
    assert header.startswith("timestamp,fw.deny,fw.allow")
    assert path.read_text().splitlines()[1].startswith("2012-04-05T00:00:00Z,1,0")
    assert read_stream(path, config.source("fw")).equals(stream)


def test_read_stream_header_mismatch(tmp_path, config):
    ts = datetime(2012, 4, 5, tzinfo=timezone.utc)
    stream, _ = parse_source([fw_line(ts, "Deny", "TCP", 22, "S")], config.source("fw"))
    write_stream(stream, tmp_path / "fw.csv")
    with pytest.raises(ConfigError, match="header"):
        read_stream(tmp_path / "fw.csv", load_config(CONFIG_YAML).source("ids"))


def test_read_stream_rejects_bad_cells(tmp_path, mini):
    p = tmp_path / "s.csv"
    p.write_text("timestamp,s.a,s.b\n2012-04-05T00:00:00Z,1,x\n")
    with pytest.raises(DataError, match="integers"):
        read_stream(p, mini)
    p.write_text("timestamp,s.a,s.b\n2012-04-05T00:00:00Z,1,-2\n")
    with pytest.raises(DataError, match="nonnegative"):
        read_stream(p, mini)


# --- block counting ---

MIXED_YAML = """
common_interval: 60
sources:
  - name: s
    interval: 60
    timestamp_pattern: '^(\\S+ \\S+)'
    timestamp_format: '%Y-%m-%d %H:%M:%S'
    features:
      - {name: lit, pattern: 'ab'}
      - {name: word, pattern: 'a\\b'}
      - {name: empty, pattern: 'x*'}
      - {name: quant, pattern: 'b{2}'}
      - {name: alt, pattern: 'a|b'}
      - {name: head, pattern: '^\\S+'}
      - {name: tail, pattern: 'b$'}
      - {name: space, pattern: '\\s+b'}
      - {name: negated, pattern: '[^a]b'}
      - {name: nocase, pattern: '(?i)A'}
"""


def test_is_line_local():
    for pattern in ("ab", "dport=80\\b", "a.c", "\\d+", "(a)\\1", "x*", "a\\.b", "[a-z]+"):
        assert is_line_local(pattern), pattern
    for pattern in ("^a", "a$", "\\s", "\\W", "\\D", "\\S+", "[^a]", "(?s)a.b", "(?<=x)a", "a\\nb", "\\x0a", "a\nb"):
        assert not is_line_local(pattern), pattern


def test_leading_literal():
    assert leading_literal("dport=80\\b") == "dport=80"
    assert leading_literal("action=Deny") == "action=Deny"
    assert leading_literal("abc*") == "ab"
    assert leading_literal("ab{2}") == "a"
    assert leading_literal("ab+") == "ab"
    assert leading_literal("ab|cd") == ""
    assert leading_literal("(ab)") == ""


def test_block_counts_equal_line_by_line_counts():
    spec = load_config(MIXED_YAML).source("s")
    lines = [
        "2012-04-05 00:00:01 ab a bb",
        "2012-04-05 00:00:02 b",
        "2012-04-05 00:00:03 ",
        "2012-04-05 00:00:04 xxa aab bbbb",
        "2012-04-05 00:01:00 Ab b ab",
        "2012-04-05 00:01:30 a",
        "2012-04-05 00:01:31 b",
    ]
    stream, _ = parse_source(lines, spec)
    assert stream.counts[0].tolist() == count_features(lines[:4], spec).tolist()
    assert stream.counts[1].tolist() == count_features(lines[4:], spec).tolist()


def test_block_counts_across_block_boundary(mini, monkeypatch):
    monkeypatch.setattr("mbda.parsing.parser._BLOCK_LINES", 3)
    lines = [f"2012-04-05 00:00:{s:02d} {'a' * (s % 4)}b" for s in range(20)]
    stream, _ = parse_source(lines, mini)
    assert stream.counts.tolist() == [count_features(lines, mini).tolist()]


@pytest.mark.slow
def test_parse_throughput_with_100_features(tmp_path, record_property):
    ports = list(range(1000, 1100))
    features = "\n".join(f"      - {{name: port_{p}, pattern: 'dport={p}\\b'}}" for p in ports)
    doc = f"""
common_interval: 60
sources:
  - name: fw
    interval: 60
    timestamp_pattern: '^(\\d{{4}}-\\d{{2}}-\\d{{2}} \\d{{2}}:\\d{{2}}:\\d{{2}})'
    timestamp_format: '%Y-%m-%d %H:%M:%S'
    features:
{features}
"""
    spec = load_config(doc).source("fw")
    rng = np.random.default_rng(3)
    t0 = datetime(2012, 4, 5, tzinfo=timezone.utc)
    lines = [
        fw_line(t0 + timedelta(seconds=i // 8), "Allow", "TCP", int(rng.choice(ports)), "S", host=i % 250)
        for i in range(40_000)
    ]
    path = tmp_path / "fw.log"
    path.write_text("\n".join(lines) + "\n")
    size_mb = path.stat().st_size / 1e6

    begin = time.perf_counter()
    stream, stats = parse_files([path], spec)
    parse_s = time.perf_counter() - begin
    begin = time.perf_counter()
    reference = count_features(lines, spec)
    per_line_s = time.perf_counter() - begin

    throughput = size_mb / parse_s
    record_property("parse_mb_per_s", round(throughput, 2))
    print(f"parse throughput {throughput:.1f} MB/s over {size_mb:.1f} MB, line-by-line {size_mb / per_line_s:.1f} MB/s")
    assert stats.lines_read == len(lines)
    assert stream.counts.sum(axis=0).tolist() == reference.tolist()
    assert parse_s * 2 < per_line_s
