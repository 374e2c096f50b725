"""Trade, quote and book-snapshot ingestion.

All times are converted to float seconds relative to the start of a trading
window.  Timestamps are parsed through ``Decimal`` so that a stream written
with :func:`write_trades` reloads bit-exactly.
"""
from __future__ import annotations

import csv
import enum
import re
import logging
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal, localcontext
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

TIE_JITTER = 1e-6  # seconds
EMPTY_BUCKET_FLOOR = 1e-6

_US = Decimal(10) ** 6
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_FRACTION = re.compile(r"T\d{2}:\d{2}:\d{2}\.(\d+)")


class Side(str, enum.Enum):
    BUY = "B"
    SELL = "S"

    @classmethod
    def parse(cls, value: str) -> "Side":
        v = value.strip().upper()
        if v in ("B", "BUY"):
            return cls.BUY
        if v in ("S", "SELL"):
            return cls.SELL
        raise ValueError(f"unknown side {value!r}")


class DataError(ValueError):
    """Base class for input-data problems (CLI exit code 3)."""


class MalformedRowError(DataError):
    def __init__(self, path, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.line = line


class EmptyStreamError(DataError):
    pass


class DataWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EventStream:
    """Arrival times of one side of one product on ``window``."""

    side: Side
    times: np.ndarray
    window: tuple[float, float]
    product_id: str = ""
    sizes: np.ndarray | None = None

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        t0, t1 = map(float, self.window)
        object.__setattr__(self, "window", (t0, t1))
        if not t1 > t0:
            raise ValueError(f"window end {t1} must exceed start {t0}")
        if times.size:
            if np.any(np.diff(times) <= 0):
                raise ValueError("event times must be strictly increasing")
            if times[0] < t0 or times[-1] > t1:
                raise ValueError("event times outside window")
        if self.sizes is not None:
            sizes = np.asarray(self.sizes, dtype=float)
            if sizes.shape != times.shape:
                raise ValueError("sizes must align with times")
            object.__setattr__(self, "sizes", sizes)

    def __len__(self) -> int:
        return self.times.size

    @property
    def duration(self) -> float:
        return self.window[1] - self.window[0]


@dataclass(frozen=True)
class VolumeProfile:
    bucket_width: float
    volumes: np.ndarray
    factors: np.ndarray

    @property
    def n_buckets(self) -> int:
        return self.volumes.size


@dataclass(frozen=True)
class QuoteSeries:
    timestamps: np.ndarray
    best_bid: np.ndarray
    best_ask: np.ndarray
    product_id: str = ""

    def __post_init__(self):
        for name in ("timestamps", "best_bid", "best_ask"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(np.diff(self.timestamps) < 0):
            raise ValueError("quote timestamps must be non-decreasing")
        both = np.isfinite(self.best_bid) & np.isfinite(self.best_ask)
        if np.any(self.best_ask[both] < self.best_bid[both]):
            raise ValueError("crossed quotes")

    @property
    def spread(self) -> np.ndarray:
        return self.best_ask - self.best_bid


class StreamCollection(dict):
    """``{(product_id, Side): EventStream}`` plus ingestion counters."""

    def __init__(self, *args, n_dropped: int = 0, n_jittered: int = 0, **kw):
        super().__init__(*args, **kw)
        self.n_dropped = n_dropped
        self.n_jittered = n_jittered

    def products(self) -> list[str]:
        return sorted({p for p, _ in self})


# --------------------------------------------------------------------------
# timestamps


def parse_timestamp_us(value: str) -> Decimal:
    """Epoch microseconds as an exact Decimal.

    Accepts a plain number (epoch microseconds, fractional part allowed) or an
    ISO-8601 string; naive ISO strings are taken as UTC.
    """
    s = value.strip()
    try:
        return Decimal(s)
    except Exception:
        pass
    s = s.replace("Z", "+00:00")
    # older fromisoformat wants exactly 3 or 6 fractional digits
    m = _FRACTION.search(s)
    if m:
        s = s[: m.start(1)] + m.group(1)[:6].ljust(6, "0") + s[m.end(1):]
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    delta = dt - _EPOCH
    return Decimal(delta.days * 86400 + delta.seconds) * _US + Decimal(delta.microseconds)


def _relative_seconds(ts_us: Decimal, origin_s: float | Decimal) -> float:
    with localcontext() as ctx:
        ctx.prec = 400
        return float(ts_us / _US - Decimal(origin_s))


def _format_epoch_us(origin_s: float, t: float) -> str:
    with localcontext() as ctx:
        ctx.prec = 400
        # shortest round-trip decimals, so reloading recovers ``t`` bit-exactly
        us = (Decimal(repr(float(origin_s))) + Decimal(repr(float(t)))) * _US
        return format(us.normalize(), "f")


def jitter_ties(times: np.ndarray, jitter: float = TIE_JITTER) -> tuple[np.ndarray, int]:
    """Sort and break ties by cascading ``+jitter`` shifts; returns (times, n_shifted)."""
    out = np.sort(np.asarray(times, dtype=float))
    n_shifted = 0
    for i in range(1, out.size):
        if out[i] <= out[i - 1]:
            out[i] = out[i - 1] + jitter
            n_shifted += 1
    return out, n_shifted


# --------------------------------------------------------------------------
# trades


TRADE_COLUMNS = ("product_id", "timestamp", "side", "size_mwh", "price_eur")


def _reader(path):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        fh.close()
        raise DataError(f"{path}: missing header row")
    return fh, reader, header


def _column_index(header: list[str], names: Sequence[str], path) -> list[int]:
    idx = []
    for name in names:
        matches = [i for i, h in enumerate(header) if h == name or h.startswith(name + "_")]
        if not matches:
            raise DataError(f"{path}: missing column {name!r} (header: {header})")
        idx.append(matches[0])
    return idx


def load_trades(
    path,
    window: tuple[float, float] | Mapping[str, tuple[float, float]] | None = None,
) -> StreamCollection:
    """Read a trades CSV into one :class:`EventStream` per (product, side).

    ``window`` is ``(t_begin, t_end)`` in epoch seconds, either global or per
    product.  Without a window each product spans its first to last trade.
    Rows outside the window are dropped and counted; same-side ties get the
    cascading microsecond jitter.
    """
    path = Path(path)
    fh, reader, header = _reader(path)
    i_prod, i_ts, i_side, i_size, i_price = _column_index(header, TRADE_COLUMNS, path)
    rows: dict[str, list[tuple[Decimal, Side, float, float]]] = {}
    with fh:
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) < len(header):
                raise MalformedRowError(path, line, f"expected {len(header)} fields, got {len(rec)}")
            try:
                ts = parse_timestamp_us(rec[i_ts])
                side = Side.parse(rec[i_side])
                size = float(rec[i_size])
                price = float(rec[i_price])
            except ValueError as exc:
                raise MalformedRowError(path, line, str(exc)) from None
            if not size >= 0:
                raise MalformedRowError(path, line, f"negative size {size}")
            rows.setdefault(rec[i_prod].strip(), []).append((ts, side, size, price))

    out = StreamCollection()
    for product, recs in sorted(rows.items()):
        if window is None:
            # keep the exact first timestamp as origin so no trade falls outside
            lo = min(r[0] for r in recs) / _US
            length = float(max(r[0] for r in recs) / _US - lo)
            win = (lo, lo + Decimal(repr(length if length > 0 else 1.0)))
        elif isinstance(window, Mapping):
            if product not in window:
                continue
            win = tuple(map(float, window[product]))
        else:
            win = tuple(map(float, window))
        t0 = win[0]
        span = float(win[1] - win[0]) if isinstance(t0, Decimal) else win[1] - win[0]
        per_side = {}
        for side in Side:
            sel = [r for r in recs if r[1] is side]
            times, sizes = [], []
            for ts, _, size, _ in sel:
                t = _relative_seconds(ts, t0)
                if t < 0 or t > span:
                    out.n_dropped += 1
                    continue
                times.append(t)
                sizes.append(size)
            if not times:
                continue
            order = np.argsort(times, kind="stable")
            times_arr, n_j = jitter_ties(np.asarray(times)[order])
            out.n_jittered += n_j
            per_side[side] = (times_arr, np.asarray(sizes)[order])
        last = max((v[0][-1] for v in per_side.values()), default=0.0)
        if last > span:
            if window is not None:
                raise DataError(f"{product}: tie jitter pushed an event past the window end")
            span = last
        for side, (times_arr, sizes_arr) in per_side.items():
            out[(product, side)] = EventStream(side, times_arr, (0.0, span), product, sizes_arr)
    if out.n_dropped:
        warnings.warn(f"{out.n_dropped} trades outside the window dropped", DataWarning, stacklevel=2)
    if out.n_jittered:
        warnings.warn(f"{out.n_jittered} tied timestamps jittered", DataWarning, stacklevel=2)
    if not out:
        raise EmptyStreamError(f"{path}: no trades inside the window")
    return out


def write_trades(
    streams: Iterable[EventStream],
    path,
    origin: float = 0.0,
    size: float | None = None,
    price: float = 0.0,
) -> None:
    """Write streams in the trades-CSV schema (epoch µs, exact round trip).

    ``origin`` is the epoch second of the window start.  ``size`` overrides
    per-event sizes (simulated streams use ``m1``).
    """
    rows = []
    for s in streams:
        sizes = s.sizes if (s.sizes is not None and size is None) else np.full(len(s), 1.0 if size is None else size)
        for t, v in zip(s.times, sizes):
            rows.append((s.product_id, float(t), s.side.value, float(v)))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRADE_COLUMNS)
        for prod, t, side, v in rows:
            w.writerow([prod, _format_epoch_us(origin, t), side, repr(v), repr(float(price))])


# --------------------------------------------------------------------------
# volume profile


def build_volume_profile(
    streams: EventStream | Sequence[EventStream], bucket_width: float
) -> VolumeProfile:
    """Traded volume per bucket and VWAP re-scaling factors ``v_k / mean(v)``."""
    if isinstance(streams, EventStream):
        streams = [streams]
    window = streams[0].window
    if any(s.window != window for s in streams):
        raise ValueError("streams must share a window")
    length = window[1] - window[0]
    n = int(round(length / bucket_width))
    if n < 1 or abs(n * bucket_width - length) > 1e-9 * max(length, 1.0):
        raise ValueError(f"bucket width {bucket_width} does not divide window length {length}")
    volumes = np.zeros(n)
    for s in streams:
        sizes = s.sizes if s.sizes is not None else np.ones(len(s))
        k = np.floor((s.times - window[0]) / bucket_width).astype(int)
        np.add.at(volumes, np.clip(k, 0, n - 1), sizes)
    total = volumes.sum()
    if not total > 0:
        raise ValueError("zero total volume")
    floored = np.maximum(volumes, EMPTY_BUCKET_FLOOR * volumes.mean())
    factors = floored / floored.mean()
    return VolumeProfile(float(bucket_width), volumes, factors)


# --------------------------------------------------------------------------
# quotes and snapshots


def load_quotes(path, window_start: float | Mapping[str, float] = 0.0) -> dict[str, QuoteSeries]:
    """Quotes CSV -> ``{product: QuoteSeries}``; crossed records are dropped."""
    path = Path(path)
    fh, reader, header = _reader(path)
    i_prod, i_ts, i_bid, i_ask = _column_index(header, ("product_id", "timestamp", "best_bid", "best_ask"), path)
    data: dict[str, list[tuple[float, float, float]]] = {}
    n_crossed = 0
    with fh:
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                prod = rec[i_prod].strip()
                origin = window_start[prod] if isinstance(window_start, Mapping) else window_start
                t = _relative_seconds(parse_timestamp_us(rec[i_ts]), origin)
                bid = float(rec[i_bid]) if rec[i_bid].strip() else np.nan
                ask = float(rec[i_ask]) if rec[i_ask].strip() else np.nan
            except (ValueError, IndexError, KeyError) as exc:
                raise MalformedRowError(path, line, str(exc)) from None
            if np.isfinite(bid) and np.isfinite(ask) and ask < bid:
                n_crossed += 1
                continue
            data.setdefault(prod, []).append((t, bid, ask))
    if n_crossed:
        warnings.warn(f"{n_crossed} crossed quotes rejected", DataWarning, stacklevel=2)
    out = {}
    for prod, recs in data.items():
        recs.sort(key=lambda r: r[0])
        arr = np.asarray(recs, dtype=float)
        out[prod] = QuoteSeries(arr[:, 0], arr[:, 1], arr[:, 2], prod)
    return out


@dataclass
class Snapshot:
    product_id: str
    time: float
    side: Side
    offsets: list[float] = field(default_factory=list)
    volumes: list[float] = field(default_factory=list)


def load_snapshots(path, window_start: float | Mapping[str, float] = 0.0) -> list[Snapshot]:
    """Book-snapshot CSV -> list of per-(product, time, side) level ladders."""
    path = Path(path)
    fh, reader, header = _reader(path)
    cols = ("product_id", "timestamp", "level_index", "price_offset_ticks", "volume_mwh", "side")
    i_prod, i_ts, i_lvl, i_off, i_vol, i_side = _column_index(header, cols, path)
    groups: dict[tuple[str, float, Side], list[tuple[int, float, float]]] = {}
    with fh:
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                prod = rec[i_prod].strip()
                origin = window_start[prod] if isinstance(window_start, Mapping) else window_start
                t = _relative_seconds(parse_timestamp_us(rec[i_ts]), origin)
                key = (prod, t, Side.parse(rec[i_side]))
                groups.setdefault(key, []).append(
                    (int(rec[i_lvl]), float(rec[i_off]), float(rec[i_vol]))
                )
            except (ValueError, IndexError, KeyError) as exc:
                raise MalformedRowError(path, line, str(exc)) from None
    snaps = []
    for (prod, t, side), levels in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2].value)):
        levels.sort()
        snaps.append(Snapshot(prod, t, side, [lv[1] for lv in levels], [lv[2] for lv in levels]))
    return snaps


def write_quotes(quotes: Iterable[QuoteSeries], path, origin: float = 0.0) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("product_id", "timestamp", "best_bid", "best_ask"))
        for q in quotes:
            for t, b, a in zip(q.timestamps, q.best_bid, q.best_ask):
                w.writerow([q.product_id, _format_epoch_us(origin, float(t)), repr(float(b)), repr(float(a))])


def write_snapshots(snaps: Iterable[Snapshot], path, origin: float = 0.0) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("product_id", "timestamp", "level_index", "price_offset_ticks", "volume_mwh", "side"))
        for s in snaps:
            ts = _format_epoch_us(origin, float(s.time))
            for i, (o, v) in enumerate(zip(s.offsets, s.volumes)):
                w.writerow([s.product_id, ts, i, repr(float(o)), repr(float(v)), s.side.value])
