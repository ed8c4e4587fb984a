import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dagtune.space import Continuous, ParamDef, ParamSpace
from dagtune.trace import (
    CorruptTraceError,
    LogAnnotation,
    LogParseWarning,
    TraceRecord,
    TraceStore,
    parse_log,
    to_matrix,
)

ANN = LogAnnotation(r"^(\S+)\s+([-+0-9.eE]+)")


def _record(step, metrics=None, objectives=None, x=0.5):
    return TraceRecord(
        step=step,
        config={"x": x},
        metrics=metrics if metrics is not None else {"a.b": 1.0},
        objectives=objectives if objectives is not None else {"obj": 2.0},
        wall_seconds=0.25,
        seed=7,
    )


class TestAnnotation:
    def test_pattern_must_compile(self):
        with pytest.raises(ValueError):
            LogAnnotation(r"([unclosed")

    def test_exactly_two_groups(self):
        with pytest.raises(ValueError):
            LogAnnotation(r"^(\S+)$")
        with pytest.raises(ValueError):
            LogAnnotation(r"^(\S+) (\S+) (\S+)$")


class TestParseLog:
    def test_direct_capture(self):
        out = parse_log("system.l2.overall_hits 1024", ANN)
        assert out == {"system.l2.overall_hits": 1024.0}

    def test_empty_input(self):
        with pytest.warns(LogParseWarning):
            assert parse_log("", ANN) == {}

    def test_duplicate_key_overwrites(self):
        assert parse_log("a.b 1\na.b 2", ANN) == {"a.b": 2.0}

    def test_unparseable_value_skipped(self):
        with pytest.warns(LogParseWarning):
            out = parse_log("a.b 1.5e+.bad\nc.d 2", ANN)
        assert out == {"c.d": 2.0}

    def test_never_yields_non_finite(self):
        ann = LogAnnotation(r"^(\S+)\s+(\S+)")
        with pytest.warns(LogParseWarning):
            out = parse_log("a inf\nb nan\nc 3.0", ann)
        assert out == {"c": 3.0}
        assert all(np.isfinite(v) for v in out.values())


class TestAppend:
    def test_fresh_store_grows(self, tmp_path):
        store = TraceStore.open(tmp_path / "t.jsonl")
        store.append(_record(0))
        assert len(store) == 1

    def test_step_mismatch_rejected(self, tmp_path):
        store = TraceStore.open(tmp_path / "t.jsonl")
        for i in range(3):
            store.append(_record(i))
        with pytest.raises(ValueError, match="step"):
            store.append(_record(2))

    def test_append_survives_process_kill(self, tmp_path):
        # child appends one record then dies without any cleanup
        path = tmp_path / "t.jsonl"
        code = f"""
import os
from dagtune.trace import TraceStore, TraceRecord
store = TraceStore.open({str(path)!r})
store.append(TraceRecord(0, {{"x": 0.5}}, {{"a.b": 1.0}}, {{"obj": 2.0}}, 0.1, 7))
os._exit(1)
"""
        proc = subprocess.run([sys.executable, "-c", code])
        assert proc.returncode == 1
        store = TraceStore.open(path)
        assert len(store) == 1
        assert store.records[0].objectives == {"obj": 2.0}


class TestLoad:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "t.jsonl"
        store = TraceStore.open(path)
        for i in range(5):
            store.append(_record(i, x=0.1 * i + 1 / 3))
        store.close()
        again = TraceStore.open(path)
        assert again.records == store.records

    def test_bit_exact_floats(self, tmp_path):
        path = tmp_path / "t.jsonl"
        store = TraceStore.open(path)
        weird = {"m.x": 0.1 + 0.2, "m.y": 1e-300, "m.z": 12345.678901234567}
        store.append(_record(0, metrics=weird))
        store.close()
        again = TraceStore.open(path)
        for k, v in weird.items():
            assert again.records[0].metrics[k] == v

    def test_trailing_partial_line_discarded(self, tmp_path):
        path = tmp_path / "t.jsonl"
        store = TraceStore.open(path)
        for i in range(5):
            store.append(_record(i))
        store.close()
        with open(path, "a") as fh:
            fh.write('{"step": 5, "config": {"x": 0.5}, "metr')
        with pytest.warns(LogParseWarning):
            again = TraceStore.open(path)
        assert len(again) == 5

    def test_malformed_middle_line_is_corruption(self, tmp_path):
        path = tmp_path / "t.jsonl"
        store = TraceStore.open(path)
        for i in range(3):
            store.append(_record(i))
        store.close()
        lines = path.read_text().splitlines()
        lines[1] = lines[1][:20]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorruptTraceError):
            TraceStore.open(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text("")
        assert len(TraceStore.open(path)) == 0

    def test_field_names_are_stable(self, tmp_path):
        # the on-disk schema is an external interface
        path = tmp_path / "t.jsonl"
        store = TraceStore.open(path)
        store.append(_record(0))
        store.close()
        obj = json.loads(path.read_text().splitlines()[0])
        assert set(obj) == {"step", "config", "metrics", "objectives", "wall_seconds", "seed"}


class TestToMatrix:
    def setup_method(self):
        self.space = ParamSpace([ParamDef("x", Continuous(0.0, 1.0))])

    def test_dense_two_records(self, tmp_path):
        store = TraceStore.open(tmp_path / "t.jsonl")
        store.append(_record(0, metrics={"a.b": 1.0, "c.d": 2.0}))
        store.append(_record(1, metrics={"a.b": 3.0, "c.d": 4.0}))
        names, rows = to_matrix(store, self.space)
        assert names == ["x", "a.b", "c.d", "obj"]
        assert rows.shape == (2, 4)
        assert not np.isnan(rows).any()

    def test_missing_metric_marker(self, tmp_path):
        store = TraceStore.open(tmp_path / "t.jsonl")
        store.append(_record(0, metrics={"a.b": 1.0, "c.d": 2.0}))
        store.append(_record(1, metrics={"a.b": 3.0}))
        names, rows = to_matrix(store, self.space)
        assert np.isnan(rows[1, names.index("c.d")])

    def test_header_determinism(self, tmp_path):
        store = TraceStore.open(tmp_path / "t.jsonl")
        store.append(_record(0, metrics={"z.z": 1.0, "a.a": 2.0}, objectives={"o2": 1.0, "o1": 2.0}))
        n1, _ = to_matrix(store, self.space)
        n2, _ = to_matrix(store, self.space)
        assert n1 == n2

    def test_empty_store_rejected(self, tmp_path):
        store = TraceStore.open(tmp_path / "t.jsonl")
        with pytest.raises(ValueError):
            to_matrix(store, self.space)


@settings(max_examples=50, deadline=None)
@given(
    values=st.lists(
        st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=8
    )
)
def test_json_round_trip_property(tmp_path_factory, values):
    rec = TraceRecord(
        step=0,
        config={"x": 0.5},
        metrics={f"m.k{i}": v for i, v in enumerate(values)},
        objectives={"obj": values[0]},
        wall_seconds=0.0,
        seed=1,
    )
    assert TraceRecord.from_json(rec.to_json()) == rec
