import numpy as np
import pytest

from countcopula.data import ObservationTable, ingest_csv, write_csv
from countcopula.errors import IngestError, InputError


def write_lines(tmp_path, lines, name="counts.csv"):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestObservationTable:
    def test_basic_construction(self):
        t = ObservationTable(
            species_names=("a", "b"),
            years=[2002, 2002],
            days=[1, 2],
            counts=[[0, 1], [2, 3]],
        )
        assert t.n_rows == 2
        assert t.n_species == 2
        assert t.year_levels() == (2002,)

    def test_day_range_checked(self):
        with pytest.raises(InputError):
            ObservationTable(("a",), [2002], [366], [[1]])

    def test_negative_counts_rejected(self):
        with pytest.raises(InputError):
            ObservationTable(("a",), [2002], [3], [[-1]])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InputError):
            ObservationTable(("a", "b"), [2002], [3], [[1]])


class TestIngestYearDay:
    def test_reads_counts(self, tmp_path):
        path = write_lines(tmp_path, [
            "year,day,grebe,coot",
            "2002,1,4,0",
            "2002,2,5,1",
        ])
        t = ingest_csv(path, ["grebe", "coot"])
        np.testing.assert_array_equal(t.counts, [[4, 0], [5, 1]])
        np.testing.assert_array_equal(t.days, [1, 2])
        assert t.rows_dropped == 0

    def test_species_order_follows_request(self, tmp_path):
        path = write_lines(tmp_path, [
            "year,day,grebe,coot",
            "2002,1,4,0",
        ])
        t = ingest_csv(path, ["coot", "grebe"])
        np.testing.assert_array_equal(t.counts, [[0, 4]])

    def test_missing_cells_drop_whole_row(self, tmp_path):
        """Complete cases only: any missing species value discards the row."""
        path = write_lines(tmp_path, [
            "year,day,a,b",
            "2002,1,1,2",
            "2002,2,,2",
            "2002,3,1,NA",
            "2002,4,3,4",
        ])
        t = ingest_csv(path, ["a", "b"])
        assert t.n_rows == 2
        assert t.rows_dropped == 2

    def test_day_out_of_range(self, tmp_path):
        path = write_lines(tmp_path, ["year,day,a", "2002,366,1"])
        with pytest.raises(IngestError, match="line 2"):
            ingest_csv(path, ["a"])

    def test_negative_count_reported_with_line(self, tmp_path):
        path = write_lines(tmp_path, ["year,day,a", "2002,5,1", "2002,6,-2"])
        with pytest.raises(IngestError, match="line 3"):
            ingest_csv(path, ["a"])

    def test_unknown_species_column(self, tmp_path):
        path = write_lines(tmp_path, ["year,day,a", "2002,5,1"])
        with pytest.raises(IngestError, match="unknown species"):
            ingest_csv(path, ["b"])

    def test_empty_file(self, tmp_path):
        path = write_lines(tmp_path, [""])
        with pytest.raises(IngestError):
            ingest_csv(path, ["a"])

    def test_all_rows_filtered(self, tmp_path):
        path = write_lines(tmp_path, ["year,day,a", "2002,5,x"])
        with pytest.raises(IngestError, match="no complete rows"):
            ingest_csv(path, ["a"])


class TestIngestDates:
    def test_date_column_parsed(self, tmp_path):
        path = write_lines(tmp_path, [
            "date,a",
            "2003-01-01,2",
            "2003-12-31,3",
        ])
        t = ingest_csv(path, ["a"])
        np.testing.assert_array_equal(t.years, [2003, 2003])
        np.testing.assert_array_equal(t.days, [1, 365])

    def test_leap_day_dropped_and_counted_separately(self, tmp_path):
        path = write_lines(tmp_path, [
            "date,a",
            "2004-02-28,1",
            "2004-02-29,9",
            "2004-03-01,2",
            "2004-12-31,3",
        ])
        t = ingest_csv(path, ["a"])
        assert t.leap_rows_dropped == 1
        assert t.rows_dropped == 0
        # later days renumbered onto the 365-day grid
        np.testing.assert_array_equal(t.days, [59, 60, 365])

    def test_non_leap_year_unchanged(self, tmp_path):
        path = write_lines(tmp_path, ["date,a", "2003-03-01,2"])
        t = ingest_csv(path, ["a"])
        assert t.days[0] == 60

    def test_malformed_date_reports_line(self, tmp_path):
        path = write_lines(tmp_path, ["date,a", "2003-01-01,2", "03/04/2003,2"])
        with pytest.raises(IngestError, match="line 3"):
            ingest_csv(path, ["a"])

    def test_century_leap_rule(self, tmp_path):
        # 1900 was not a leap year; 2000 was
        path = write_lines(tmp_path, ["date,a", "2000-03-01,1"])
        t = ingest_csv(path, ["a"])
        assert t.days[0] == 60


class TestRoundTrip:
    def test_write_then_ingest_is_identity(self, tmp_path):
        rng = np.random.default_rng(0)
        t = ObservationTable(
            species_names=("a", "b", "c"),
            years=np.repeat([2002, 2003], 10),
            days=np.tile(np.arange(1, 11), 2),
            counts=rng.integers(0, 50, size=(20, 3)),
        )
        path = tmp_path / "out.csv"
        write_csv(t, path)
        back = ingest_csv(path, ["a", "b", "c"])
        np.testing.assert_array_equal(back.counts, t.counts)
        np.testing.assert_array_equal(back.years, t.years)
        np.testing.assert_array_equal(back.days, t.days)

    def test_written_bytes_deterministic(self, tmp_path):
        t = ObservationTable(("a",), [2002], [7], [[3]])
        p1, p2 = tmp_path / "x1.csv", tmp_path / "x2.csv"
        write_csv(t, p1)
        write_csv(t, p2)
        assert p1.read_bytes() == p2.read_bytes()
