"""Local price-file ingestion and simple-return panels.

The expected file format is CSV with a header row: one date column plus one
column per ticker.  Cleaning follows drop-row semantics: any return row
containing a missing or non-finite value is removed whole, and the count of
dropped rows is reported on the panel.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .stochastics import RngStream, SamplePanel, normals_from, uniforms_from


@dataclass(frozen=True)
class PricePanel:
    """Dated price matrix; missing cells are NaN, dates strictly increasing."""

    dates: tuple[dt.date, ...]
    tickers: tuple[str, ...]
    prices: np.ndarray

    def __post_init__(self) -> None:
        prices = np.asarray(self.prices, dtype=np.float64)
        if prices.shape != (len(self.dates), len(self.tickers)):
            raise DataFormatError(
                f"price matrix shape {prices.shape} does not match "
                f"{len(self.dates)} dates x {len(self.tickers)} tickers"
            )
        if len(set(self.tickers)) != len(self.tickers):
            raise DataFormatError("duplicate ticker names")
        for prev, cur in zip(self.dates, self.dates[1:]):
            if cur <= prev:
                raise DataFormatError(f"dates not strictly increasing at {cur}")
        if np.any(np.isinf(prices)):
            raise DataFormatError("price matrix contains infinities")
        object.__setattr__(self, "prices", prices)


@dataclass(frozen=True)
class ReturnsPanel:
    """Simple returns per date/ticker; rows with bad values already dropped."""

    dates: tuple[dt.date, ...]
    tickers: tuple[str, ...]
    returns: np.ndarray
    dropped_rows: int = 0

    def __post_init__(self) -> None:
        returns = np.asarray(self.returns, dtype=np.float64)
        if returns.shape != (len(self.dates), len(self.tickers)):
            raise DataFormatError("returns matrix shape mismatch")
        if returns.size and not np.all(np.isfinite(returns)):
            raise DataFormatError("returns must be finite after cleaning")
        object.__setattr__(self, "returns", returns)

    def to_sample_panel(self) -> SamplePanel:
        return SamplePanel(values=self.returns, column_names=self.tickers)


def load_price_csv(
    path: str | Path,
    date_column: str = "Date",
    date_format: str = "%Y-%m-%d",
) -> PricePanel:
    """Parse a price CSV into a panel sorted by ascending date.

    Non-numeric price cells become NaN (recorded as missing); unparseable
    dates, duplicate dates, a missing date column, or fewer than two data
    rows raise :class:`DataFormatError`.
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"price file not found: {path}")
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        if date_column not in header:
            raise DataFormatError(f"date column {date_column!r} not in header {header}")
        date_idx = header.index(date_column)
        tickers = tuple(h for i, h in enumerate(header) if i != date_idx)
        if not tickers:
            raise DataFormatError(f"{path} has no ticker columns")
        rows: list[tuple[dt.date, list[float]]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            try:
                date = dt.datetime.strptime(row[date_idx].strip(), date_format).date()
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: unparseable date {row[date_idx]!r}") from exc
            values = []
            for i, cell in enumerate(row):
                if i == date_idx:
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    values.append(math.nan)
            rows.append((date, values))
    if len(rows) < 2:
        raise DataFormatError(f"{path}: need at least 2 data rows, got {len(rows)}")
    rows.sort(key=lambda r: r[0])
    dates = tuple(r[0] for r in rows)
    if len(set(dates)) != len(dates):
        dupes = sorted({d for d in dates if dates.count(d) > 1})
        raise DataFormatError(f"{path}: duplicate dates {dupes}")
    prices = np.array([r[1] for r in rows], dtype=np.float64)
    return PricePanel(dates=dates, tickers=tickers, prices=prices)


def to_simple_returns(panel: PricePanel) -> ReturnsPanel:
    """Per-ticker simple returns p_t / p_{t-1} - 1 with whole-row cleaning.

    Rows containing any NaN or infinity (e.g. from a zero prior price or a
    missing cell) are dropped entirely; the drop count is recorded.
    """
    if len(panel.dates) < 2:
        raise DataFormatError("need at least 2 price rows to compute returns")
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = panel.prices[1:] / panel.prices[:-1] - 1.0
    keep = np.all(np.isfinite(raw), axis=1)
    dropped = int((~keep).sum())
    if not keep.any():
        raise DataFormatError("every return row was dropped during cleaning")
    dates = tuple(d for d, k in zip(panel.dates[1:], keep) if k)
    return ReturnsPanel(
        dates=dates, tickers=panel.tickers, returns=raw[keep], dropped_rows=dropped
    )


def subset(panel: ReturnsPanel, n_days: int, n_assets: int) -> ReturnsPanel:
    """First ``n_days`` rows and ``n_assets`` columns, in stored order."""
    if n_days < 1 or n_assets < 1:
        raise DataFormatError(f"subset of {n_days} days x {n_assets} assets is degenerate")
    if len(panel.dates) < n_days:
        raise DataFormatError(f"panel has {len(panel.dates)} rows, {n_days} requested")
    if len(panel.tickers) < n_assets:
        raise DataFormatError(f"panel has {len(panel.tickers)} tickers, {n_assets} requested")
    return ReturnsPanel(
        dates=panel.dates[:n_days],
        tickers=panel.tickers[:n_assets],
        returns=panel.returns[:n_days, :n_assets],
        dropped_rows=panel.dropped_rows,
    )


def write_demo_prices(
    path: str | Path,
    n_days: int = 1200,
    n_tickers: int = 6,
    seed: int = 7,
) -> Path:
    """Write the deterministic demo fixture: geometric random-walk prices.

    Per-ticker drift and volatility come from channels 0/1 of the seed
    stream and daily shocks from channel 2, so the file content is a pure
    function of (seed, n_days, n_tickers).
    """
    if n_days < 2 or n_tickers < 1:
        raise DataFormatError("demo fixture needs n_days >= 2 and n_tickers >= 1")
    stream = RngStream(seed=seed)
    drift = uniforms_from(stream.generator(0), -2e-4, 8e-4, n_tickers)
    vol = uniforms_from(stream.generator(1), 0.008, 0.025, n_tickers)
    shocks = normals_from(stream.generator(2), (n_days - 1) * n_tickers).reshape(
        n_days - 1, n_tickers
    )
    log_paths = np.vstack([np.zeros(n_tickers), np.cumsum(drift + vol * shocks, axis=0)])
    prices = 100.0 * np.exp(log_paths)
    start = dt.date(2018, 1, 1)
    dates = [start + dt.timedelta(days=i) for i in range(n_days)]
    tickers = [f"TICK{j}" for j in range(n_tickers)]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["Date", *tickers])
        for i, date in enumerate(dates):
            writer.writerow([date.isoformat(), *(repr(float(p)) for p in prices[i])])
    return path
