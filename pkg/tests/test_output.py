"""Tests for the report and table writers."""

import json
import math

import numpy as np
import pandas as pd

from acbounds.fixedpoint import FixedPointResult
from acbounds.output import (
    MANIFEST_FILE,
    export_extremizer_plot_data,
    format_real,
    render_json,
    write_fixed_point,
    write_json,
    write_kernel,
    write_manifest,
)
from acbounds.stepspace import StepFunction
from acbounds.utils.get_hash import get_hash


def test_reals_keep_seventeen_digits():
    assert format_real(0.1) == "0.10000000000000001"
    assert float(format_real(1 / 3)) == 1 / 3


def test_render_json():
    text = render_json({"a": 0.1, "b": [1, True, None], "c": math.nan, "d": {}, "e": 'say "hi"'})
    data = json.loads(text)
    assert data == {"a": 0.1, "b": [1, True, None], "c": None, "d": {}, "e": 'say "hi"'}
    assert '"a": 0.10000000000000001' in text
    assert render_json(np.float64(2.5)) == "2.5"
    assert render_json(np.int64(3)) == "3"
    assert render_json(np.bool_(False)) == "false"


def test_extremizer_is_normalized(tmp_path):
    f = StepFunction(0.1, 0.3, [0.0, 1.0, 3.0, 3.0, 1.0, 0.0])
    path = export_extremizer_plot_data(f, tmp_path / "extremizer.tsv")
    frame = pd.read_csv(path, sep="\t")
    assert list(frame.columns) == ["x", "value"]
    np.testing.assert_allclose(frame["x"], [-0.25, -0.15, -0.05, 0.05, 0.15, 0.25], atol=1e-15)
    l1 = 0.1 * frame["value"].abs().sum()
    l2 = math.sqrt(0.1 * (frame["value"] ** 2).sum())
    assert abs(l1 * l2 - 1.0) < 1e-10


def test_kernel_table(tmp_path, box_kernel):
    frame = pd.read_csv(write_kernel(box_kernel, tmp_path / "kernel.tsv"), sep="\t")
    assert list(frame.columns) == ["k", "s", "w_tilde"]
    assert len(frame) == box_kernel.n
    np.testing.assert_array_equal(frame["w_tilde"].to_numpy(), box_kernel.values)


def test_fixed_point_files(tmp_path):
    result = FixedPointResult(
        value=0.5,
        extremizer=StepFunction(0.5, 0.5, [1.0, 1.0]),
        iterations=1,
        converged=True,
        last_delta=0.0,
        trace=((0, 0.5, math.nan), (1, 0.5, 0.0)),
    )
    trace_path, extremizer_path = write_fixed_point(result, tmp_path)
    trace = pd.read_csv(trace_path, sep="\t")
    assert list(trace.columns) == ["iteration", "value", "sup_change"]
    assert trace["iteration"].tolist() == [0, 1]
    assert math.isnan(trace["sup_change"][0])
    assert extremizer_path.exists()


def test_manifest(tmp_path):
    artifact = write_json({"x": 1.0}, tmp_path / "report.json")
    config = {"weight": "box", "delta": 0.05}
    path = write_manifest(tmp_path, [artifact, artifact], config, "solve")
    manifest = json.loads(path.read_text())
    assert path.name == MANIFEST_FILE
    assert manifest["command"] == "solve"
    assert manifest["config_hash"] == get_hash(config)
    assert manifest["artifacts"] == {"report.json": get_hash(artifact)}

    first = path.read_bytes()
    write_manifest(tmp_path, [artifact], config, "solve")
    assert path.read_bytes() == first
