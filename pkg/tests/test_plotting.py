"""Chart rendering from the exported CSV schemas."""

from __future__ import annotations

import csv

import pytest

from ihckit.exceptions import SchemaError
from ihckit.plotting import plot_calibration, plot_confusion, plot_sweep, render_all

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


@pytest.fixture()
def calibration_csv(tmp_path):
    rows = [
        [b / 10, (b + 1) / 10, 10 * b, 0.05 + b / 10, 0.04 + b / 10] for b in range(10)
    ]
    return write_csv(
        tmp_path / "cal.csv",
        ["bin_lower", "bin_upper", "count", "mean_confidence", "accuracy"],
        rows,
    )


@pytest.fixture()
def confusion_csv(tmp_path):
    return write_csv(
        tmp_path / "conf.csv",
        ["label\\pred", "normal", "cancer"],
        [["normal", 8, 2], ["cancer", 1, 9]],
    )


@pytest.fixture()
def sweep_csv(tmp_path):
    rows = [
        ["intensity", "none", 0, 0.9, 0.0],
        ["intensity", "salt_pepper", 1, 0.85, -0.05],
        ["intensity", "salt_pepper", 2, 0.8, -0.1],
        ["location", "none", 0, 0.88, 0.0],
        ["location", "cutout", 1, 0.87, -0.01],
    ]
    return write_csv(
        tmp_path / "sweep.csv",
        ["task", "kind", "level", "accuracy", "delta_vs_baseline"],
        rows,
    )


class TestRenderers:
    def test_calibration_png(self, calibration_csv, tmp_path):
        out = tmp_path / "cal.png"
        plot_calibration(calibration_csv, out)
        assert out.read_bytes()[:8] == PNG_MAGIC

    def test_confusion_png(self, confusion_csv, tmp_path):
        out = tmp_path / "conf.png"
        plot_confusion(confusion_csv, out)
        assert out.read_bytes()[:8] == PNG_MAGIC

    def test_sweep_png(self, sweep_csv, tmp_path):
        out = tmp_path / "sweep.png"
        plot_sweep(sweep_csv, out)
        assert out.read_bytes()[:8] == PNG_MAGIC

    def test_large_confusion_matrix(self, tmp_path):
        classes = [f"c{i}" for i in range(58)]
        rows = [[name] + [1] * 58 for name in classes]
        path = write_csv(tmp_path / "big.csv", ["label\\pred", *classes], rows)
        out = tmp_path / "big.png"
        plot_confusion(path, out)
        assert out.read_bytes()[:8] == PNG_MAGIC


class TestSchemaGuards:
    def test_calibration_header(self, tmp_path):
        bad = write_csv(tmp_path / "bad.csv", ["a", "b"], [[1, 2]])
        with pytest.raises(SchemaError, match="calibration"):
            plot_calibration(bad, tmp_path / "x.png")

    def test_confusion_header(self, tmp_path):
        bad = write_csv(tmp_path / "bad.csv", ["rows", "x"], [["x", 1]])
        with pytest.raises(SchemaError, match="confusion"):
            plot_confusion(bad, tmp_path / "x.png")

    def test_sweep_header(self, tmp_path):
        bad = write_csv(tmp_path / "bad.csv", ["task", "kind"], [["a", "b"]])
        with pytest.raises(SchemaError, match="sweep"):
            plot_sweep(bad, tmp_path / "x.png")

    def test_empty_file(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.touch()
        with pytest.raises(SchemaError, match="empty"):
            plot_calibration(empty, tmp_path / "x.png")


class TestRenderAll:
    def test_renders_given_inputs_only(self, calibration_csv, sweep_csv, tmp_path):
        out_dir = tmp_path / "plots"
        written = render_all(out_dir, calibration=calibration_csv, sweep=sweep_csv)
        assert [p.name for p in written] == ["calibration.png", "sweep.png"]
        assert all(p.exists() for p in written)
        assert not (out_dir / "confusion.png").exists()

    def test_empty_call_creates_nothing(self, tmp_path):
        out_dir = tmp_path / "plots"
        assert render_all(out_dir) == []
