import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgeguard.errors import DimensionError, DomainError, ParameterError, ParseError, SchemaError
from edgeguard.features import (FEATURES, FlowRecord, WideFlowRecord, format_flow_csv, labels_of,
                                mutual_information, parse_flow_csv, records_to_matrix, select_features)

HEADER = ",".join(FEATURES) + ",label\n"
ROW = "10,1500,2.0,5.0,6,4,150,2,benign\n"


def test_header_and_one_row():
    recs = parse_flow_csv(HEADER + ROW)
    assert len(recs) == 1
    assert recs[0].pkts_total == 10 and recs[0].label == "benign"


def test_header_only_gives_empty_list():
    assert parse_flow_csv(HEADER) == []


def test_non_numeric_cell_reports_line_two():
    with pytest.raises(ParseError, match="line 2"):
        parse_flow_csv(HEADER + ROW.replace("10,", "abc,", 1))


def test_missing_column_is_named():
    header = HEADER.replace("duration,", "")
    with pytest.raises(SchemaError, match="duration"):
        parse_flow_csv(header + "10,1500,5.0,6,4,150,2,benign\n")


def test_negative_value_is_domain_error():
    with pytest.raises(DomainError):
        parse_flow_csv(HEADER + ROW.replace("1500", "-1"))


def test_packet_counts_must_be_consistent():
    with pytest.raises(DomainError):
        FlowRecord(pkts_total=3, pkts_in=5)


def test_zero_duration_drops_rate():
    assert FlowRecord(pkts_total=1, duration=0.0, pkt_rate=9.0).pkt_rate == 0.0


def test_columns_are_mapped_by_name():
    cols = list(reversed(FEATURES))
    values = {name: str(i + 1) for i, name in enumerate(FEATURES)}
    values["pkts_total"] = "20"
    text = ",".join(cols) + "\n" + ",".join(values[c] for c in cols) + "\n"
    (rec,) = parse_flow_csv(text)
    assert rec.bytes_total == 2.0 and rec.flags == 8


finite = st.floats(0, 1e6, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(finite, finite, finite, st.integers(0, 255)), min_size=1, max_size=10))
def test_csv_round_trip(rows):
    recs = [FlowRecord(pkts_total=a + b, bytes_total=c, duration=1.0, pkts_in=a, pkts_out=b, flags=f,
                       label="attack" if f % 2 else "benign") for a, b, c, f in rows]
    back = parse_flow_csv(format_flow_csv(recs))
    assert back == recs
    assert np.array_equal(records_to_matrix(back), records_to_matrix(recs))
    assert list(labels_of(back)) == [1 if r.flags % 2 else 0 for r in recs]


def test_mi_identical_binary_is_one_bit():
    assert mutual_information([0, 1, 0, 1], [0, 1, 0, 1]) == pytest.approx(1.0, abs=1e-12)


def test_mi_constant_is_zero():
    assert mutual_information([3, 3, 3, 3], [0, 1, 0, 1]) == 0.0


def test_mi_uniform_product_is_zero():
    assert mutual_information([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-12)


def test_mi_length_mismatch():
    with pytest.raises(DimensionError):
        mutual_information([0, 1], [0, 1, 1])


def _wide(columns, labels):
    names = tuple(columns)
    return [WideFlowRecord(names, tuple(columns[n][i] for n in names), "attack" if y else "benign")
            for i, y in enumerate(labels)]


def test_duplicate_column_dropped_by_correlation(rng):
    a = rng.normal(size=60)
    y = (a > 0).astype(int)
    data = _wide({"a": a, "b": a.copy(), "c": rng.normal(size=60)}, y)
    rep = select_features(data, corr_threshold=0.95, k=2)
    assert "b" in rep.dropped_by_correlation
    assert sorted(rep.selected) == ["a", "c"]


def test_informative_columns_win_ties_by_name(rng):
    y = np.array([0, 1] * 40)
    data = _wide({"copy": y.astype(float), "noise": rng.normal(size=80), "inverted": 1.0 - y}, y)
    rep = select_features(data, corr_threshold=1.0, k=2)
    assert rep.selected == ("copy", "inverted")
    assert rep.mi_scores["copy"] == pytest.approx(1.0)


def test_k_beyond_survivors_rejected(rng):
    a = rng.normal(size=20)
    with pytest.raises(ParameterError):
        select_features(_wide({"a": a, "b": a}, a > 0), k=2)
