"""Tick parsing, duration extraction, splitting, scaling, windowing, and
autocorrelation diagnostics.

Feature matrix layout is fixed throughout the package: column 0 is the
duration itself, column 1 the volume of the arriving trade, column 2 its
side code (buy +1, sell -1, unknown 0).
"""

import enum
import logging
from dataclasses import dataclass

import numpy as np

from duracd.errors import DataError, ParseError

logger = logging.getLogger(__name__)

MS_PER_DAY = 86_400_000


class Side(enum.IntEnum):
    BUY = 1
    SELL = -1
    UNKNOWN = 0


_SIDE_CODES = {"B": Side.BUY, "S": Side.SELL, "U": Side.UNKNOWN,
               "BUY": Side.BUY, "SELL": Side.SELL, "": Side.UNKNOWN}


@dataclass
class TickRecord:
    timestamp: int  # milliseconds
    volume: float
    side: Side


@dataclass
class TickSeries:
    instrument: str
    records: list


@dataclass
class ScalingStats:
    """Fitted on the training range only. ``duration_mean`` rescales the
    duration column; volume is z-scored; the side code passes through."""

    duration_mean: float
    feature_means: np.ndarray
    feature_stds: np.ndarray


@dataclass
class DurationSeries:
    durations: np.ndarray
    features: np.ndarray | None = None
    scaling: ScalingStats | None = None
    instrument: str = ""

    def __post_init__(self):
        self.durations = np.ascontiguousarray(self.durations, dtype=np.float64)
        if self.durations.shape[0] and np.min(self.durations) <= 0:
            raise DataError("durations must be strictly positive")
        if self.features is not None:
            self.features = np.ascontiguousarray(self.features, dtype=np.float64)
            if self.features.shape[0] != self.durations.shape[0]:
                raise DataError("feature rows must match duration count")

    def __len__(self):
        return self.durations.shape[0]


@dataclass
class Splits:
    """Contiguous, ordered, disjoint index ranges covering one series."""

    train: range
    validation: range
    test: range


@dataclass
class Window:
    inputs: np.ndarray  # (T, nf)
    target: float
    origin_index: int
    log_mu_seed: float


@dataclass
class WindowSet:
    """All windows over one series, stored as views onto the shared
    feature matrix. ``origins`` are the target indices, each window's
    inputs being the T rows just before its origin."""

    data: np.ndarray      # (N, nf)
    targets: np.ndarray   # (N,)
    T: int
    log_mu_seed: float
    origins: np.ndarray   # (N - T,)

    def __len__(self):
        return self.origins.shape[0]

    def __getitem__(self, k: int) -> Window:
        i = int(self.origins[k])
        return Window(inputs=self.data[i - self.T:i].copy(),
                      target=float(self.targets[i]),
                      origin_index=i,
                      log_mu_seed=self.log_mu_seed)

    def gather(self, origins) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Batch view: (inputs (B, T, nf), targets (B,), seeds (B,))."""
        origins = np.asarray(origins, dtype=np.int64)
        rows = origins[:, None] + np.arange(-self.T, 0)[None, :]
        feats = np.ascontiguousarray(self.data[rows])
        seeds = np.full(origins.shape[0], self.log_mu_seed)
        return feats, self.targets[origins], seeds


# ---------------------------------------------------------------------------
# parsing


def parse_session_open(value) -> int | None:
    """'HH:MM' or 'HH:MM:SS' (or an integer millisecond count) to
    milliseconds after midnight."""
    if value is None:
        return None
    if isinstance(value, int):
        return value
    parts = value.split(":")
    if len(parts) not in (2, 3) or not all(p.isdigit() for p in parts):
        raise ParseError(f"bad session-open time {value!r}, expected HH:MM[:SS]")
    h, m = int(parts[0]), int(parts[1])
    s = int(parts[2]) if len(parts) == 3 else 0
    return ((h * 60 + m) * 60 + s) * 1000


def _parse_timestamp(text: str, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"line {lineno}: bad timestamp {text!r}") from None
    if not value.is_integer():
        raise ParseError(f"line {lineno}: timestamp {text!r} is not an integer "
                         "millisecond count")
    return int(value)


def parse_ticks(lines, session_open=None, instrument: str = "",
                delimiter: str = ",") -> TickSeries:
    """Parse delimiter-separated trades: timestamp_ms, price, volume, side.

    The price field is ignored; the side field may be absent (unknown).
    Rows whose time of day falls before ``session_open`` are dropped
    (timestamps are taken modulo 24h for this test, so both
    since-midnight and epoch-aligned clocks work). Timestamps must be
    non-decreasing; ties are allowed, a decrease rejects the input.
    """
    open_ms = parse_session_open(session_open)
    records = []
    dropped = 0
    prev_ts = None
    lineno = 0
    first_content = True
    for raw in lines:
        lineno += 1
        line = raw.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(delimiter)]
        if first_content:
            first_content = False
            try:
                float(fields[0])
            except ValueError:
                continue  # header row
        if len(fields) < 3:
            raise ParseError(f"line {lineno}: expected timestamp,price,volume[,side], "
                             f"got {len(fields)} fields")
        ts = _parse_timestamp(fields[0], lineno)
        if ts < 0:
            raise ParseError(f"line {lineno}: negative timestamp")
        try:
            volume = float(fields[2])
        except ValueError:
            raise ParseError(f"line {lineno}: bad volume {fields[2]!r}") from None
        if not np.isfinite(volume) or volume < 0:
            raise ParseError(f"line {lineno}: volume must be nonnegative")
        side_text = fields[3].upper() if len(fields) > 3 else ""
        if side_text not in _SIDE_CODES:
            raise ParseError(f"line {lineno}: bad side {fields[3]!r}, expected B/S/U")
        if prev_ts is not None and ts < prev_ts:
            raise DataError(f"line {lineno}: timestamps decrease "
                            f"({ts} after {prev_ts}); input rejected")
        prev_ts = ts
        if open_ms is not None and ts % MS_PER_DAY < open_ms:
            dropped += 1
            continue
        records.append(TickRecord(timestamp=ts, volume=volume, side=_SIDE_CODES[side_text]))
    if dropped:
        logger.info("parse_ticks: dropped %d pre-market row(s)", dropped)
    return TickSeries(instrument=instrument, records=records)


def _merge_same_timestamp(records):
    """Collapse runs of equal timestamps: volumes add; the side follows
    the single largest sub-trade, any tie for the maximum goes unknown."""
    merged = []
    i = 0
    n = len(records)
    while i < n:
        j = i
        while j + 1 < n and records[j + 1].timestamp == records[i].timestamp:
            j += 1
        if j == i:
            merged.append(records[i])
        else:
            group = records[i:j + 1]
            volumes = [r.volume for r in group]
            top = max(volumes)
            winners = [r for r in group if r.volume == top]
            side = winners[0].side if len(winners) == 1 else Side.UNKNOWN
            merged.append(TickRecord(timestamp=records[i].timestamp,
                                     volume=float(sum(volumes)), side=side))
        i = j + 1
    return merged


def compute_durations(ticks: TickSeries, merge_same_timestamp: bool = True,
                      max_duration: float | None = None) -> DurationSeries:
    """Durations in seconds between consecutive trades, with the feature
    matrix [duration, arriving volume, arriving side code].

    ``max_duration`` (seconds), when set, drops longer durations (e.g.
    overnight gaps); off by default.
    """
    records = ticks.records
    if merge_same_timestamp:
        records = _merge_same_timestamp(records)
    if len(records) < 2:
        raise DataError("need at least 2 records to form durations")
    ts = np.array([r.timestamp for r in records], dtype=np.int64)
    diffs = np.diff(ts)
    if np.any(diffs < 0):
        raise DataError("records are not sorted by timestamp")
    if not merge_same_timestamp and np.any(diffs == 0):
        raise DataError("zero duration between simultaneous trades; "
                        "enable same-timestamp merging")
    durations = diffs / 1000.0
    volume = np.array([r.volume for r in records[1:]])
    side = np.array([float(r.side) for r in records[1:]])
    if max_duration is not None:
        keep = durations <= max_duration
        n_drop = int((~keep).sum())
        if n_drop:
            logger.info("compute_durations: dropped %d duration(s) above cap", n_drop)
        durations, volume, side = durations[keep], volume[keep], side[keep]
        if durations.shape[0] == 0:
            raise DataError("max_duration filter removed every observation")
    features = np.column_stack([durations, volume, side])
    return DurationSeries(durations=durations, features=features,
                          instrument=ticks.instrument)


# ---------------------------------------------------------------------------
# splitting, scaling, windowing


def split_series(series, test_fraction: float, train_val_ratio=(8, 2)) -> Splits:
    """Chronological split: the last floor(N * test_fraction) points are
    the test set; the remainder splits train:validation by the ratio,
    train first. No shuffling anywhere."""
    n = len(series) if not isinstance(series, int) else series
    if not 0.0 < test_fraction < 1.0:
        raise DataError("test_fraction must lie strictly between 0 and 1")
    r_train, r_val = train_val_ratio
    if r_train <= 0 or r_val <= 0:
        raise DataError("train/validation ratio components must be positive")
    n_test = int(np.floor(n * test_fraction))
    rest = n - n_test
    n_train = int(np.floor(rest * r_train / (r_train + r_val)))
    n_val = rest - n_train
    if min(n_train, n_val, n_test) <= 0:
        raise DataError(f"split of {n} observations leaves an empty set "
                        f"(train {n_train}, validation {n_val}, test {n_test})")
    return Splits(train=range(0, n_train),
                  validation=range(n_train, n_train + n_val),
                  test=range(n_train + n_val, n))


def fit_scaling(series: DurationSeries, train_range: range) -> ScalingStats:
    """Statistics from the training rows only; stds floored at 1e-12."""
    idx = np.asarray(train_range)
    if idx.shape[0] == 0:
        raise DataError("training range is empty")
    duration_mean = float(np.mean(series.durations[idx]))
    if series.features is not None:
        cols = series.features[idx]
        means = cols.mean(axis=0)
        stds = np.maximum(cols.std(axis=0), 1e-12)
    else:
        means = np.empty(0)
        stds = np.empty(0)
    return ScalingStats(duration_mean=duration_mean,
                        feature_means=means, feature_stds=stds)


def apply_scaling(series: DurationSeries, stats: ScalingStats) -> DurationSeries:
    """Unit-mean scaling of durations (and the duration feature column);
    volume z-scored; side code untouched."""
    durations = series.durations / stats.duration_mean
    features = None
    if series.features is not None:
        features = series.features.copy()
        features[:, 0] /= stats.duration_mean
        if features.shape[1] > 1:
            features[:, 1] = (features[:, 1] - stats.feature_means[1]) / stats.feature_stds[1]
    return DurationSeries(durations=durations, features=features,
                          scaling=stats, instrument=series.instrument)


def invert_mean(scaled_mu, stats: ScalingStats):
    """Map a conditional mean from scaled space back to original units."""
    return scaled_mu * stats.duration_mean


def make_windows(series: DurationSeries, T: int, log_mu_seed: float = 0.0) -> WindowSet:
    """One window per index i in [T, N): inputs are rows i-T..i-1,
    the target is duration i."""
    n = len(series)
    if n <= T:
        raise DataError(f"series of length {n} too short for {T}-step windows")
    data = series.features if series.features is not None else series.durations[:, None]
    return WindowSet(data=data, targets=series.durations, T=T,
                     log_mu_seed=log_mu_seed,
                     origins=np.arange(T, n, dtype=np.int64))


# ---------------------------------------------------------------------------
# diagnostics


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags 0..max_lag (biased denominator N)."""
    x = np.asarray(series, dtype=np.float64)
    n = x.shape[0]
    if n <= max_lag + 1:
        raise DataError(f"need more than {max_lag + 1} observations for lag {max_lag}")
    xc = x - x.mean()
    c0 = float(xc @ xc) / n
    if c0 <= 0:
        raise DataError("constant series: autocorrelation undefined")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = (float(xc[:-k] @ xc[k:]) / n) / c0
    return out


def pacf(series, max_lag: int) -> np.ndarray:
    """Partial autocorrelations via the Durbin-Levinson recursion on the
    sample acf; entry 0 is 1 by convention."""
    rho = acf(series, max_lag)
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    phi = np.empty(0)
    for k in range(1, max_lag + 1):
        if k == 1:
            phi_kk = rho[1]
            phi = np.array([phi_kk])
        else:
            num = rho[k] - phi @ rho[k - 1:0:-1]
            den = 1.0 - phi @ rho[1:k]
            if den == 0:
                raise DataError(f"Durbin-Levinson breakdown at lag {k}")
            phi_kk = num / den
            upd = np.empty(k)
            upd[:k - 1] = phi - phi_kk * phi[::-1]
            upd[k - 1] = phi_kk
            phi = upd
        out[k] = phi_kk
    return out


# ---------------------------------------------------------------------------
# text I/O


def save_duration_series(path, series: DurationSeries, mu=None) -> None:
    """CSV export: index, duration[, volume, side_code][, mu]."""
    cols = ["index", "duration"]
    if series.features is not None:
        cols += ["volume", "side_code"]
    if mu is not None:
        cols.append("mu")
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(series)):
            row = [str(i), repr(float(series.durations[i]))]
            if series.features is not None:
                row.append(repr(float(series.features[i, 1])))
                row.append(str(int(series.features[i, 2])))
            if mu is not None:
                row.append(repr(float(mu[i])))
            fh.write(",".join(row) + "\n")


def load_duration_series(path, instrument: str = ""):
    """Read a file written by :func:`save_duration_series`.

    Returns (series, mu) with mu None when the column is absent.
    """
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        names = [h.strip() for h in header]
        if "duration" not in names:
            raise ParseError(f"{path}: missing 'duration' column")
        data = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != len(names):
                raise ParseError(f"{path}: line {lineno}: expected {len(names)} "
                                 f"fields, got {len(fields)}")
            try:
                data.append([float(f) for f in fields])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
    if not data:
        raise DataError(f"{path}: no observations")
    table = np.asarray(data)
    durations = table[:, names.index("duration")]
    features = None
    if "volume" in names and "side_code" in names:
        features = np.column_stack([durations,
                                    table[:, names.index("volume")],
                                    table[:, names.index("side_code")]])
    mu = table[:, names.index("mu")] if "mu" in names else None
    series = DurationSeries(durations=durations, features=features,
                            instrument=instrument)
    return series, mu
