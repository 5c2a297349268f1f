"""Daily price loading, log-returns and chronological train/test splits."""

from __future__ import annotations

import bisect
import csv
import io
import os
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import BinaryIO, TextIO, Union

import numpy as np

from marketstates.config import MIN_TEST_DAYS
from marketstates.errors import DataError

Source = Union[str, os.PathLike, bytes, BinaryIO, TextIO]


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Close prices on strictly increasing dates."""

    dates: tuple[date, ...]
    prices: np.ndarray
    asset_id: str = ""

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "dates", tuple(self.dates))
        if prices.ndim != 1 or len(prices) != len(self.dates):
            raise DataError("dates and prices must be 1-D and of equal length")
        if len(prices) < 2:
            raise DataError("a price series needs at least 2 rows")
        if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
            raise DataError("non-positive price")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing")

    def __len__(self) -> int:
        return len(self.prices)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PriceSeries):
            return NotImplemented
        return (
            self.asset_id == other.asset_id
            and self.dates == other.dates
            and np.array_equal(self.prices, other.prices)
        )


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    """Daily log-returns, each dated by the later day of its price pair."""

    dates: tuple[date, ...]
    returns: np.ndarray
    asset_id: str = ""

    def __post_init__(self):
        returns = np.asarray(self.returns, dtype=float)
        returns.setflags(write=False)
        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "dates", tuple(self.dates))
        if returns.ndim != 1 or len(returns) != len(self.dates):
            raise DataError("dates and returns must be 1-D and of equal length")

    def __len__(self) -> int:
        return len(self.returns)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ReturnSeries):
            return NotImplemented
        return (
            self.asset_id == other.asset_id
            and self.dates == other.dates
            and np.array_equal(self.returns, other.returns)
        )

    def slice(self, start: int, stop: int) -> "ReturnSeries":
        return ReturnSeries(self.dates[start:stop], self.returns[start:stop], self.asset_id)


def _read_text(source: Source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, (str, os.PathLike)):
        return Path(source).read_text(encoding="utf-8")
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data


def load_prices(source: Source, asset_id: str = "") -> PriceSeries:
    """Parse a ``date,close`` CSV into a sorted :class:`PriceSeries`.

    ``source`` may be a path, raw bytes, or a binary/text stream. Extra
    columns are ignored. Rows may come in any order.

    Raises:
        DataError: malformed row (with its line number), duplicate date,
            non-positive price, or fewer than two rows.
    """
    text = _read_text(source)
    if text.startswith("\ufeff"):
        text = text[1:]
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise DataError("empty CSV") from None
    if "date" not in header or "close" not in header:
        raise DataError("CSV header must contain 'date' and 'close'")
    i_date, i_close = header.index("date"), header.index("close")

    rows: dict[date, float] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            d = date.fromisoformat(row[i_date].strip())
            p = float(row[i_close])
        except (IndexError, ValueError) as exc:
            raise DataError(f"malformed row at line {line_no}: {exc}") from None
        if not np.isfinite(p) or p <= 0:
            raise DataError(f"non-positive price at line {line_no}")
        if d in rows:
            raise DataError(f"duplicate date {d.isoformat()} at line {line_no}")
        rows[d] = p

    if len(rows) < 2:
        raise DataError("fewer than 2 rows")
    dates = sorted(rows)
    return PriceSeries(tuple(dates), np.array([rows[d] for d in dates]), asset_id)


def write_prices(p: PriceSeries, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("date,close\n")
        for d, price in zip(p.dates, p.prices):
            fh.write(f"{d.isoformat()},{float(price)!r}\n")


def load_data_dir(data_dir: str | os.PathLike) -> dict[str, PriceSeries]:
    """Load every ``<asset_id>.csv`` in a directory, keyed and ordered by asset id."""
    paths = sorted(Path(data_dir).glob("*.csv"))
    return {path.stem: load_prices(path, path.stem) for path in paths}


def log_returns(p: PriceSeries) -> ReturnSeries:
    logs = np.log(p.prices)
    return ReturnSeries(p.dates[1:], np.diff(logs), p.asset_id)


def split_by_date(
    r: ReturnSeries,
    train_start: date,
    train_end: date,
    min_train: int = 1,
    min_test: int = MIN_TEST_DAYS,
) -> tuple[ReturnSeries, ReturnSeries]:
    """Split returns into ``[train_start, train_end]`` and everything after ``train_end``.

    ``min_train`` is normally ``max(horizons) + 1``; the caller knows the horizons.
    """
    if not train_start < train_end:
        raise DataError("train_start must precede train_end")
    if len(r) == 0 or train_start > r.dates[-1] or train_end < r.dates[0]:
        raise DataError("training window outside the series range")
    lo = bisect.bisect_left(r.dates, train_start)
    hi = bisect.bisect_right(r.dates, train_end)
    if hi >= len(r):
        raise DataError("empty test remainder")
    if hi - lo < min_train:
        raise DataError(f"training window too short: {hi - lo} rows, need {min_train}")
    if len(r) - hi < min_test:
        raise DataError(f"test window too short: {len(r) - hi} rows, need {min_test}")
    return r.slice(lo, hi), r.slice(hi, len(r))
