"""Forecast evaluation: MAE, lagged MAE, quantile (pinball) loss,
coverage, attention profiles, and multi-model comparison."""

from dataclasses import dataclass

import numpy as np

from duracd.errors import DataError

__all__ = [
    "EvalReport",
    "AttentionProfile",
    "ComparisonResult",
    "mae",
    "mae_lagged",
    "quantile_loss",
    "coverage",
    "attention_profile",
    "compare",
]


@dataclass
class EvalReport:
    model: str
    mae: float
    mae_lagged: float
    ql: dict        # alpha -> mean pinball loss
    coverage: dict  # alpha -> empirical fraction below TaR
    n: int
    instrument: str = ""
    unit: str = "s"

    @property
    def mae_difference(self) -> float:
        return self.mae - self.mae_lagged


@dataclass
class AttentionProfile:
    """Mean attention weight per lag; lag 1 is the most recent step."""

    weights: np.ndarray  # index k holds lag k+1

    @property
    def lags(self) -> np.ndarray:
        return np.arange(1, self.weights.shape[0] + 1)


def _pair(forecasts, reals):
    f = np.asarray(forecasts, dtype=np.float64)
    r = np.asarray(reals, dtype=np.float64)
    if f.shape != r.shape:
        raise DataError(f"length mismatch: {f.shape[0]} forecasts vs {r.shape[0]} observations")
    if f.shape[0] == 0:
        raise DataError("empty inputs")
    return f, r


def mae(forecasts, reals) -> float:
    """Mean absolute error."""
    f, r = _pair(forecasts, reals)
    return float(np.mean(np.abs(f - r)))


def mae_lagged(forecasts, reals) -> float:
    """Mean |forecast_i - real_{i-1}|: ``reals`` must carry one extra
    leading observation so every forecast has a predecessor."""
    f = np.asarray(forecasts, dtype=np.float64)
    r = np.asarray(reals, dtype=np.float64)
    if r.shape[0] != f.shape[0] + 1:
        raise DataError("reals must have exactly one extra leading observation")
    return float(np.mean(np.abs(f - r[:-1])))


def quantile_loss(reals, tars, alpha: float) -> float:
    """Mean pinball loss (x - TaR)(alpha - 1{x < TaR}); nonnegative,
    zero only when every observation equals its quantile forecast."""
    if not 0.0 < alpha < 1.0:
        raise DataError("alpha must lie in (0, 1)")
    x, t = _pair(reals, tars)
    diff = x - t
    return float(np.mean(diff * (alpha - (diff < 0))))


def coverage(reals, tars) -> float:
    """Fraction of observations strictly below their TaR forecast."""
    x, t = _pair(reals, tars)
    return float(np.mean(x < t))


def attention_profile(predictions) -> AttentionProfile:
    """Per-lag mean of the attention rows of one or more predictions.

    Accepts Prediction objects (or raw (B, T) arrays); rows are in
    window time order, so the profile reverses them: lag 1 = last step.
    """
    rows = []
    for p in np.atleast_1d(predictions):
        attn = getattr(p, "attention", p)
        if attn is None:
            raise DataError("prediction carries no attention weights")
        rows.append(np.atleast_2d(np.asarray(attn, dtype=np.float64)))
    stacked = np.vstack(rows)
    return AttentionProfile(weights=stacked.mean(axis=0)[::-1].copy())


@dataclass
class ComparisonResult:
    """Per-model metric rows plus per-metric win tallies across
    instruments (strictly-best wins; exact ties tallied under 'tie')."""

    rows: list          # of (instrument, model, metric, value)
    table: list         # of dict rows mirroring the headline table
    wins: dict          # metric -> {model_or_tie: count}
    alphas: tuple

    def render(self) -> str:
        lines = ["model\tinstrument\tmae\tmae_lagged\tdifference"]
        for row in self.table:
            lines.append("\t".join([row["model"], row["instrument"],
                                    repr(row["mae"]), repr(row["mae_lagged"]),
                                    repr(row["difference"])]))
        for alpha in self.alphas:
            lines.append("")
            lines.append(f"quantile loss, alpha = {alpha}")
            for row in self.table:
                ql = row["ql"].get(alpha)
                if ql is not None:
                    lines.append("\t".join([row["model"], row["instrument"], repr(ql)]))
        lines.append("")
        lines.append("wins per metric (instruments where a model is strictly best)")
        for metric in sorted(self.wins):
            tally = ", ".join(f"{name}={count}" for name, count
                              in sorted(self.wins[metric].items()))
            lines.append(f"{metric}: {tally}")
        return "\n".join(lines) + "\n"


def compare(reports) -> ComparisonResult:
    """Cross-model comparison over one or more instruments.

    All reports of one instrument must cover the same test range
    (equal n); each metric's winner is the strictly smallest value.
    """
    reports = list(reports)
    if len(reports) < 2:
        raise DataError("need at least 2 reports to compare")
    by_instrument = {}
    for rep in reports:
        by_instrument.setdefault(rep.instrument, []).append(rep)
    for instrument, group in by_instrument.items():
        sizes = {rep.n for rep in group}
        if len(sizes) > 1:
            raise DataError(f"instrument {instrument!r}: reports cover different "
                            f"test ranges (n = {sorted(sizes)})")
    alphas = tuple(sorted({a for rep in reports for a in rep.ql}))

    rows = []
    table = []
    for rep in sorted(reports, key=lambda r: (r.instrument, r.model)):
        rows.append((rep.instrument, rep.model, "mae", rep.mae))
        rows.append((rep.instrument, rep.model, "mae_lagged", rep.mae_lagged))
        rows.append((rep.instrument, rep.model, "difference", rep.mae_difference))
        for alpha in sorted(rep.ql):
            rows.append((rep.instrument, rep.model, f"ql_{alpha}", rep.ql[alpha]))
        for alpha in sorted(rep.coverage):
            rows.append((rep.instrument, rep.model, f"coverage_{alpha}", rep.coverage[alpha]))
        table.append({"model": rep.model, "instrument": rep.instrument,
                      "mae": rep.mae, "mae_lagged": rep.mae_lagged,
                      "difference": rep.mae_difference, "ql": dict(rep.ql)})

    metrics = ["mae"] + [f"ql_{alpha}" for alpha in alphas]
    wins = {metric: {} for metric in metrics}
    for instrument, group in by_instrument.items():
        for metric in metrics:
            values = {}
            for rep in group:
                if metric == "mae":
                    values[rep.model] = rep.mae
                else:
                    alpha = float(metric.split("_", 1)[1])
                    if alpha in rep.ql:
                        values[rep.model] = rep.ql[alpha]
            if len(values) < 2:
                continue
            best = min(values.values())
            winners = [m for m, v in values.items() if v == best]
            key = winners[0] if len(winners) == 1 else "tie"
            wins[metric][key] = wins[metric].get(key, 0) + 1
    return ComparisonResult(rows=rows, table=table, wins=wins, alphas=alphas)
