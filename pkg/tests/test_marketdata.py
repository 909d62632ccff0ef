"""Bar validation, CSV ingestion, and synthetic market generation."""

import datetime as dt

import numpy as np
import pytest

from alphamix.dataset import make_labels
from alphamix.marketdata import Bar, DataError, MarketFrame, load_csv, synth_market


def bar(date, o=100.0, h=101.0, lo=99.0, c=100.0, adj=None):
    return Bar(date, o, h, lo, c, adj if adj is not None else c)


class TestValidation:
    def test_high_below_low_rejected(self):
        bad = Bar(dt.date(2020, 1, 2), 100.0, 99.0, 101.0, 100.0, 100.0)
        with pytest.raises(DataError):
            MarketFrame({"A": [bad]})

    def test_nonpositive_price_rejected(self):
        bad = Bar(dt.date(2020, 1, 2), 100.0, 101.0, 99.0, -1.0, 100.0)
        with pytest.raises(DataError, match="close"):
            MarketFrame({"A": [bad]})

    def test_duplicate_date_rejected(self):
        d = dt.date(2020, 1, 2)
        with pytest.raises(DataError, match="duplicate"):
            MarketFrame({"A": [bar(d), bar(d)]})

    def test_calendar_is_union(self):
        frame = MarketFrame({
            "A": [bar(dt.date(2020, 1, 2)), bar(dt.date(2020, 1, 3))],
            "B": [bar(dt.date(2020, 1, 3)), bar(dt.date(2020, 1, 6))],
        })
        assert frame.calendar == (dt.date(2020, 1, 2), dt.date(2020, 1, 3), dt.date(2020, 1, 6))


CSV_HEADER = "date,open,high,low,close,adj_close,volume\n"


class TestLoadCsv:
    def test_well_formed(self, tmp_path):
        f = tmp_path / "AAA.csv"
        f.write_text(CSV_HEADER
                     + "2020-01-02,10,11,9,10.5,10.5,1000\n"
                     + "2020-01-03,10.5,11,10,10.8,10.8,900\n"
                     + "2020-01-06,10.8,11.2,10.6,11.0,11.0,800\n")
        frame = load_csv(f)
        assert frame.stock_ids == ["AAA"]
        assert len(frame.stocks["AAA"]) == 3

    def test_out_of_order_sorted_with_warning(self, tmp_path, caplog):
        f = tmp_path / "BBB.csv"
        f.write_text(CSV_HEADER
                     + "2020-01-03,10.5,11,10,10.8,10.8,900\n"
                     + "2020-01-02,10,11,9,10.5,10.5,1000\n")
        with caplog.at_level("WARNING"):
            frame = load_csv(f)
        assert "out of order" in caplog.text
        dates = [b.date for b in frame.stocks["BBB"]]
        assert dates == sorted(dates)

    def test_high_below_low_names_row(self, tmp_path):
        f = tmp_path / "CCC.csv"
        f.write_text(CSV_HEADER + "2020-01-02,10,9.5,10.4,10.2,10.2,1\n")
        with pytest.raises(DataError, match=r"CCC\.csv:2"):
            load_csv(f)

    def test_bad_number_names_field(self, tmp_path):
        f = tmp_path / "DDD.csv"
        f.write_text(CSV_HEADER + "2020-01-02,10,11,9,oops,10,1\n")
        with pytest.raises(DataError, match="'close'"):
            load_csv(f)

    def test_long_format_with_symbol_column(self, tmp_path):
        f = tmp_path / "all.csv"
        f.write_text("symbol,date,open,high,low,close,adj_close\n"
                     "X,2020-01-02,10,11,9,10.5,10.5\n"
                     "Y,2020-01-02,20,22,19,21,21\n"
                     "X,2020-01-03,10.5,11,10,10.8,10.8\n")
        frame = load_csv(f)
        assert sorted(frame.stock_ids) == ["X", "Y"]

    def test_directory_of_files(self, tmp_path):
        for name in ("AAA", "BBB"):
            (tmp_path / f"{name}.csv").write_text(
                CSV_HEADER + "2020-01-02,10,11,9,10.5,10.5,1\n")
        frame = load_csv(tmp_path)
        assert sorted(frame.stock_ids) == ["AAA", "BBB"]

    def test_missing_header_field(self, tmp_path):
        f = tmp_path / "EEE.csv"
        f.write_text("date,open,high,low,close\n2020-01-02,10,11,9,10.5\n")
        with pytest.raises(DataError, match="adj_close"):
            load_csv(f)


class TestSynthMarket:
    def test_same_seed_identical(self):
        a = synth_market(3, 2, 80, "trend")
        b = synth_market(3, 2, 80, "trend")
        for sid in a.stock_ids:
            for x, y in zip(a.stocks[sid], b.stocks[sid]):
                assert x == y

    def test_different_seed_differs(self):
        a = synth_market(3, 1, 80, "trend")
        b = synth_market(4, 1, 80, "trend")
        assert a.stocks["S000"][5] != b.stocks["S000"][5]

    def test_trend_has_positive_mean_return(self):
        frame = synth_market(0, 20, 400, "trend")
        rets = []
        for bars in frame.stocks.values():
            closes = np.array([b.close for b in bars])
            rets.append(np.diff(closes) / closes[:-1])
        assert np.concatenate(rets).mean() > 0

    def test_noise_labels_near_even(self):
        frame = synth_market(1, 15, 700, "noise")
        ys = []
        for bars in frame.stocks.values():
            for t in range(len(bars) - 1):
                ys.append(make_labels(bars, t, 1)[0])
        ys = ys[:10000]
        assert len(ys) >= 10000
        frac_up = np.mean(ys)
        assert abs(frac_up - 0.5) < 0.05

    def test_min_days_enforced(self):
        with pytest.raises(DataError):
            synth_market(0, 1, 59, "trend")

    def test_bars_are_valid(self):
        frame = synth_market(2, 3, 100, "meanrevert")
        assert frame.n_days() == 100
