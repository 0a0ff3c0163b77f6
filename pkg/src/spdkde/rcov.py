"""Realized-covariance ingestion: intraday prices to a daily SPD series.

The pipeline is: parse an intraday price CSV, difference log prices within
each day, accumulate the outer products of the return vectors into one
realized covariance matrix per day, and hand the strictly positive definite
days to the density estimators.
"""

from __future__ import annotations

import csv
import datetime as dt
import warnings
from dataclasses import dataclass

import numpy as np

from . import matcore
from .errors import DataError
from .estimators import SpdSeries

__all__ = [
    "PriceTable",
    "RcSeries",
    "parse_price_csv",
    "intraday_log_returns",
    "realized_cov_daily",
    "series_stats",
    "rc_to_spd_series",
    "write_rc_csv",
    "write_stats_csv",
]


@dataclass
class PriceTable:
    """Validated intraday price records for a set of assets."""

    assets: list
    timestamps: list  # datetime objects, strictly increasing within a day
    prices: np.ndarray  # shape (n_rows, n_assets)


@dataclass
class RcSeries:
    """Daily realized covariance matrices with per-day diagnostics.

    ``singular`` flags days whose matrix failed the strict SPD test (they are
    kept in the series and only excluded when converting to an estimator
    sample).  ``corr`` holds NaN for days where a zero variance makes the
    realized correlation undefined.
    """

    dates: list
    matrices: np.ndarray  # (n, d, d), symmetric positive semidefinite
    singular: np.ndarray  # (n,) bool
    variances: np.ndarray  # (n, d)
    corr: np.ndarray  # (n,) realized correlation (d == 2), else NaN


def parse_price_csv(path, fill: str = "ffill") -> PriceTable:
    """Parse a price CSV with header ``timestamp,<asset1>,<asset2>,...``.

    Missing price cells are forward-filled from the asset's last seen price
    (``fill="ffill"``) or the whole row is dropped (``fill="drop"``).
    Unparseable rows and nonpositive prices raise DataError with the line
    number; timestamps must be strictly increasing within each day.
    """
    if fill not in ("ffill", "drop"):
        raise DataError(f"fill must be 'ffill' or 'drop', got {fill!r}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 2 or header[0].strip().lower() != "timestamp":
            raise DataError(f"{path}: header must be 'timestamp,<asset>,...'")
        assets = [h.strip() for h in header[1:]]
        times: list = []
        rows: list = []
        last = [None] * len(assets)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(assets) + 1:
                raise DataError(f"{path}:{lineno}: expected {len(assets) + 1} fields")
            try:
                ts = dt.datetime.fromisoformat(row[0].strip())
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad timestamp {row[0]!r}") from None
            vals = []
            missing = False
            for k, cell in enumerate(row[1:]):
                cell = cell.strip()
                if not cell:
                    missing = True
                    vals.append(None)
                    continue
                try:
                    price = float(cell)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: bad price {cell!r}") from None
                if not price > 0:
                    raise DataError(f"{path}:{lineno}: nonpositive price {price}")
                vals.append(price)
            if missing:
                if fill == "drop":
                    continue
                for k, v in enumerate(vals):
                    if v is None:
                        if last[k] is None:
                            raise DataError(
                                f"{path}:{lineno}: missing price for {assets[k]} "
                                "with no earlier value to forward-fill"
                            )
                        vals[k] = last[k]
            last = list(vals)
            if times and ts.date() == times[-1].date() and ts <= times[-1]:
                raise DataError(f"{path}:{lineno}: timestamps not increasing within the day")
            times.append(ts)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return PriceTable(assets=assets, timestamps=times, prices=np.array(rows, dtype=float))


def intraday_log_returns(table: PriceTable) -> list:
    """Per-day log-return vectors; overnight gaps are never differenced.

    Returns a list of ``(date, returns)`` pairs with ``returns`` of shape
    ``(intervals - 1, n_assets)``.  Days with fewer than two rows are skipped
    with a warning.
    """
    out = []
    log_prices = np.log(table.prices)
    dates = [ts.date() for ts in table.timestamps]
    start = 0
    for i in range(1, len(dates) + 1):
        if i == len(dates) or dates[i] != dates[start]:
            block = log_prices[start:i]
            if block.shape[0] < 2:
                warnings.warn(f"day {dates[start]} has fewer than 2 prices; skipped", stacklevel=2)
            else:
                out.append((dates[start], np.diff(block, axis=0)))
            start = i
    return out


def realized_cov_daily(day_returns, normalize: str = "none") -> RcSeries:
    """Accumulate per-day outer products into realized covariance matrices.

    ``normalize="none"`` keeps the plain sum of outer products;
    ``normalize="count"`` divides by the number of return vectors.  Matrices
    are clipped to the PSD cone (tiny negative eigenvalues from roundoff are
    zeroed) and flagged singular if they fail the strict SPD test.
    """
    if normalize not in ("none", "count"):
        raise DataError(f"normalize must be 'none' or 'count', got {normalize!r}")
    if not day_returns:
        return RcSeries(
            dates=[],
            matrices=np.zeros((0, 0, 0)),
            singular=np.zeros(0, bool),
            variances=np.zeros((0, 0)),
            corr=np.zeros(0),
        )
    dates = []
    mats = []
    for date, rets in day_returns:
        rets = np.asarray(rets, dtype=float)
        if rets.size == 0:
            raise DataError(f"day {date} has no returns")
        rc = rets.T @ rets
        if normalize == "count":
            rc = rc / rets.shape[0]
        mats.append((rc + rc.T) / 2.0)
        dates.append(date)
    mats = np.array(mats)
    d = mats.shape[1]
    eig, vec = np.linalg.eigh(mats)
    if np.any(eig[:, 0] < -1e-14 * np.maximum(eig[:, -1], 1e-300)):
        raise DataError("a realized covariance matrix is significantly indefinite")
    clipped = np.maximum(eig, 0.0)
    mats = np.einsum("nik,nk,njk->nij", vec, clipped, vec)
    mats = (mats + np.swapaxes(mats, 1, 2)) / 2.0
    singular = clipped[:, 0] <= 1e-12 * np.maximum(clipped[:, -1], 1e-300)
    variances = np.einsum("nii->ni", mats).copy()
    corr = np.full(len(dates), np.nan)
    if d == 2:
        denom = np.sqrt(variances[:, 0] * variances[:, 1])
        ok = denom > 0
        corr[ok] = mats[ok, 0, 1] / denom[ok]
    return RcSeries(
        dates=dates, matrices=mats, singular=singular, variances=variances, corr=corr
    )


def series_stats(rc: RcSeries) -> list:
    """Tidy per-day rows (date, var_1, ..., var_d, corr)."""
    out = []
    for i, date in enumerate(rc.dates):
        out.append((date, *[float(v) for v in rc.variances[i]], float(rc.corr[i])))
    return out


def rc_to_spd_series(rc: RcSeries) -> tuple[SpdSeries, int]:
    """Strictly positive definite days as an estimator sample.

    Returns the series and the number of excluded (singular) days.
    """
    keep = ~rc.singular
    excluded = int(np.sum(~keep))
    if not np.any(keep):
        raise DataError("no strictly positive definite days in the series")
    dates = [d for d, k in zip(rc.dates, keep) if k]
    return SpdSeries(rc.matrices[keep], timestamps=dates), excluded


def write_rc_csv(rc: RcSeries, path) -> None:
    """Realized covariance series as date + vecp columns."""
    d = rc.matrices.shape[1] if len(rc.dates) else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if d:
            rows, cols = matcore.vecp_indices(d)
            writer.writerow(["date"] + [f"s{r + 1}{c + 1}" for r, c in zip(rows, cols)])
            for i, date in enumerate(rc.dates):
                vec = rc.matrices[i][rows, cols]
                writer.writerow([date.isoformat()] + [repr(float(x)) for x in vec])
        else:
            writer.writerow(["date"])


def write_stats_csv(rc: RcSeries, path) -> None:
    d = rc.matrices.shape[1] if len(rc.dates) else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + [f"var{i + 1}" for i in range(d)] + ["corr"])
        for row in series_stats(rc):
            writer.writerow([row[0].isoformat()] + [repr(float(x)) for x in row[1:]])
