import math
import xml.etree.ElementTree as ET

import pytest

from hess import report
from hess.budget import BudgetAllocation
from hess.pipeline import AblationRow, SweepRow


def sweep_rows():
    return [
        SweepRow(mode="hess", tau=0.9, rho=0.5, sparsity=0.1 + 0.2,
                 e_cam=0.025019, e_pc=1e-17, seed=7),
        SweepRow(mode="uniform", tau=0.9, rho=0.5, sparsity=0.31,
                 e_cam=0.034, e_pc=0.002, seed=7),
        SweepRow(mode="hess", tau=0.4, rho=0.8, sparsity=0.41,
                 e_cam=0.063, e_pc=0.004, seed=7),
        SweepRow(mode="uniform", tau=0.4, rho=0.8, sparsity=0.42,
                 e_cam=0.076, e_pc=0.005, seed=7),
    ]


# ---------------------------------------------------------------------------
# CSV round trips
# ---------------------------------------------------------------------------

def test_sweep_csv_round_trip_is_exact():
    rows = sweep_rows()
    text = report.sweep_rows_to_csv(rows)
    assert text.startswith(report.SWEEP_HEADER + "\n")
    back = report.sweep_rows_from_csv(text)
    assert back == rows  # repr serialisation keeps every bit
    assert report.sweep_rows_to_csv(back) == text


def test_sweep_csv_rejects_wrong_header():
    with pytest.raises(ValueError):
        report.sweep_rows_from_csv("a,b,c\n1,2,3\n")


def test_sweep_csv_empty_rows_is_header_only():
    assert report.sweep_rows_to_csv([]) == report.SWEEP_HEADER + "\n"
    assert report.sweep_rows_from_csv(report.SWEEP_HEADER + "\n") == []


def test_sweep_csv_file_round_trip(tmp_path):
    path = tmp_path / "sweep.csv"
    report.write_sweep_csv(sweep_rows(), path)
    assert report.read_sweep_csv(path) == sweep_rows()


def test_sweep_csv_deterministic_bytes():
    assert report.sweep_rows_to_csv(sweep_rows()) == report.sweep_rows_to_csv(sweep_rows())


def test_ablation_csv_layout(tmp_path):
    rows = [AblationRow(lam=0.25, tau=0.9, rho=0.5, sparsity=0.3,
                        e_cam=0.03, e_pc=0.001, seed=3)]
    text = report.ablation_rows_to_csv(rows)
    lines = text.splitlines()
    assert lines[0] == report.ABLATION_HEADER
    assert lines[1] == "0.25,0.9,0.5,0.3,0.03,0.001,3"
    path = tmp_path / "ablation.csv"
    report.write_ablation_csv(rows, path)
    assert path.read_text() == text


def test_allocations_csv_columns():
    alloc = BudgetAllocation(ideal=(70.0, 10.0, 10.0, 10.0),
                             fixed_point=(40.0, 20.0, 20.0, 20.0),
                             final=(40, 20, 20, 20), c_total=100, c_max=40,
                             baselines=(25, 25, 25, 25),
                             weights=(0.7, 0.1, 0.1, 0.1))
    text = report.allocations_to_csv({2: alloc})
    lines = text.splitlines()
    assert lines[0] == report.ALLOCATION_HEADER
    assert len(lines) == 5
    assert lines[1] == "2,0,0.7,25,70.0,40"
    assert lines[4] == "2,3,0.1,25,10.0,20"


def test_allocations_csv_handles_missing_metadata(tmp_path):
    alloc = BudgetAllocation(ideal=(5.0, 5.0), fixed_point=(5.0, 5.0),
                             final=(5, 5), c_total=10, c_max=8)
    text = report.allocations_to_csv({0: alloc})
    assert text.splitlines()[1] == "0,0,,,5.0,5"
    path = tmp_path / "alloc.csv"
    report.write_allocations_csv({0: alloc}, path)
    assert path.read_text() == text


def test_allocations_csv_sorted_by_layer():
    a = BudgetAllocation(ideal=(1.0,), fixed_point=(1.0,), final=(1,),
                         c_total=1, c_max=2)
    text = report.allocations_to_csv({3: a, 1: a, 2: a})
    layers = [ln.split(",")[0] for ln in text.splitlines()[1:]]
    assert layers == ["1", "2", "3"]


# ---------------------------------------------------------------------------
# SVG chart
# ---------------------------------------------------------------------------

def test_error_chart_is_valid_svg_with_one_line_per_mode():
    svg = report.error_chart_svg(sweep_rows())
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    polylines = [el for el in root.iter() if el.tag.endswith("polyline")]
    assert len(polylines) == 2
    circles = [el for el in root.iter() if el.tag.endswith("circle")]
    assert len(circles) == 4
    labels = {el.text for el in root.iter() if el.tag.endswith("text")}
    assert {"hess", "uniform"} <= labels


def test_error_chart_drops_nonfinite_points():
    rows = sweep_rows() + [SweepRow(mode="hess", tau=0.2, rho=0.9, sparsity=0.5,
                                    e_cam=math.nan, e_pc=math.nan, seed=7)]
    svg = report.error_chart_svg(rows)
    root = ET.fromstring(svg)
    circles = [el for el in root.iter() if el.tag.endswith("circle")]
    assert len(circles) == 4


def test_error_chart_single_point_degenerate_range():
    rows = [SweepRow(mode="hess", tau=1.0, rho=0.0, sparsity=0.0,
                     e_cam=0.02, e_pc=0.001, seed=0)]
    root = ET.fromstring(report.error_chart_svg(rows, metric="e_pc"))
    assert any(el.tag.endswith("polyline") for el in root.iter())


def test_error_chart_validates_metric_and_data():
    with pytest.raises(ValueError):
        report.error_chart_svg(sweep_rows(), metric="loss")
    nan_row = SweepRow(mode="hess", tau=0.5, rho=0.5, sparsity=math.nan,
                       e_cam=math.nan, e_pc=math.nan, seed=0)
    with pytest.raises(ValueError):
        report.error_chart_svg([nan_row])


def test_error_chart_file_writer(tmp_path):
    path = tmp_path / "chart.svg"
    report.write_error_chart_svg(sweep_rows(), path, metric="e_cam")
    ET.fromstring(path.read_text())
