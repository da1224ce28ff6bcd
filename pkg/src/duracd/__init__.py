"""duracd: transaction-duration models.

Classic ACD(p, q) with exponential errors, plus LSTM and attention-LSTM
hybrids trained by maximum likelihood, with simulation, evaluation
metrics, and a CLI for reproducible experiments.
"""

from duracd._kernels import BACKEND as KERNEL_BACKEND
from duracd.acd import (AcdFitResult, AcdParams, acd_fit, acd_forecast_one,
                        acd_nll, acd_recursion, exp_quantile)
from duracd.data import (DurationSeries, ScalingStats, Splits, TickSeries,
                         acf, apply_scaling, compute_durations, fit_scaling,
                         invert_mean, make_windows, pacf, parse_ticks,
                         split_series)
from duracd.errors import DataError, DuracdError, NumericError, ParseError
from duracd.metrics import (EvalReport, attention_profile, compare, coverage,
                            mae, mae_lagged, quantile_loss)
from duracd.models import (HybridModelSpec, Prediction, TrainConfig,
                           TrainedModel, batch_nll, forward_window,
                           predict_series, quantile_series, train)
from duracd.simulate import SimConfig, simulate_acd

__version__ = "0.1.0"
