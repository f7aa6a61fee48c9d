"""Goodness-of-fit tests, z-score checks and the stick-breaking admissibility diagnostic."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .config import EXACT_GATE, MIN_KS_SAMPLES, MIN_MOMENT_SAMPLES, Z_THRESHOLD
from .errors import (
    InvalidParameterError,
    LengthMismatchError,
    NonFiniteInputError,
    NonMonotoneCdfError,
    NonPositiveEntryError,
    TooFewSamplesError,
)
from .randkit import kolmogorov_sf

log = logging.getLogger(__name__)

_CDF_SLACK = 1e-12


@dataclass(frozen=True)
class KsReport:
    statistic: float
    n1: int
    n2: int | None
    p_value: float
    significance: float
    passed: bool
    seed_record: str | None = None
    test_name: str | None = None

    @property
    def n(self):
        return self.n1 + (self.n2 or 0)

    def to_dict(self):
        return {
            "test_name": self.test_name,
            "kind": "ks",
            "statistic": self.statistic,
            "p_value": self.p_value,
            "n": self.n,
            "n1": self.n1,
            "n2": self.n2,
            "significance": self.significance,
            "passed": self.passed,
            "seed_record": self.seed_record,
        }


@dataclass(frozen=True)
class ZScoreReport:
    """z-statistic of a mean or a correlation; passes when |z| <= threshold."""

    statistic: float
    n: int
    estimate: float
    expected: float
    passed: bool
    threshold: float = Z_THRESHOLD
    seed_record: str | None = None
    test_name: str | None = None

    @property
    def p_value(self):
        return math.erfc(abs(self.statistic) / math.sqrt(2.0))

    def to_dict(self):
        return {
            "test_name": self.test_name,
            "kind": "z",
            "statistic": self.statistic,
            "p_value": self.p_value,
            "n": self.n,
            "estimate": self.estimate,
            "expected": self.expected,
            "threshold": self.threshold,
            "passed": self.passed,
            "seed_record": self.seed_record,
        }


@dataclass(frozen=True)
class Assumption1Report:
    n_checked: int
    cond_i_ok: bool
    first_violation: int | None
    partial_sum_ii: list = field(default_factory=list)
    pi_a_iii: list = field(default_factory=list)
    trend_exponent: float = float("nan")
    trend_residual: float = float("nan")
    log_linear: bool = False
    theoretical_exponent: float | None = None

    def to_dict(self):
        return {
            "n_checked": self.n_checked,
            "cond_i_ok": self.cond_i_ok,
            "first_violation": self.first_violation,
            "partial_sum_ii": self.partial_sum_ii,
            "pi_a_iii": self.pi_a_iii,
            "trend_exponent": self.trend_exponent,
            "trend_residual": self.trend_residual,
            "log_linear": self.log_linear,
            "theoretical_exponent": self.theoretical_exponent,
        }


def _sample_array(samples, minimum, label="samples"):
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < minimum:
        raise TooFewSamplesError(f"{label}: need at least {minimum} values, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInputError(f"{label} contain non-finite values")
    return x


def ks_one_sample(samples, cdf, significance=EXACT_GATE, seed_record=None, test_name=None):
    """Kolmogorov-Smirnov distance to ``cdf`` with the asymptotic p-value."""
    x = np.sort(_sample_array(samples, MIN_KS_SAMPLES))
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    if f.shape != x.shape or not np.all(np.isfinite(f)):
        raise NonMonotoneCdfError("cdf must return one finite value per sample")
    if np.any(f < -_CDF_SLACK) or np.any(f > 1.0 + _CDF_SLACK) or np.any(np.diff(f) < -_CDF_SLACK):
        raise NonMonotoneCdfError("cdf is not monotone into [0, 1] on the sample grid")
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - f)
    d_minus = np.max(f - (i - 1) / n)
    statistic = float(min(1.0, max(0.0, d_plus, d_minus)))
    p_value = kolmogorov_sf(math.sqrt(n) * statistic)
    log.debug("ks_one_sample %s: D=%.5f p=%.3g n=%d", test_name, statistic, p_value, n)
    return KsReport(statistic, n, None, p_value, significance, p_value >= significance, seed_record, test_name)


def ks_two_sample(a, b, significance=EXACT_GATE, seed_record=None, test_name=None):
    """Two-sample KS with effective size n1 n2 / (n1 + n2); right-continuous ECDFs."""
    xa = np.sort(_sample_array(a, MIN_KS_SAMPLES, "first sample"))
    xb = np.sort(_sample_array(b, MIN_KS_SAMPLES, "second sample"))
    n1, n2 = xa.size, xb.size
    grid = np.concatenate((xa, xb))
    cdf_a = np.searchsorted(xa, grid, side="right") / n1
    cdf_b = np.searchsorted(xb, grid, side="right") / n2
    statistic = float(np.max(np.abs(cdf_a - cdf_b)))
    p_value = kolmogorov_sf(math.sqrt(n1 * n2 / (n1 + n2)) * statistic)
    log.debug("ks_two_sample %s: D=%.5f p=%.3g", test_name, statistic, p_value)
    return KsReport(statistic, n1, n2, p_value, significance, p_value >= significance, seed_record, test_name)


def moment_check(samples, expected_mean, expected_sd, seed_record=None, test_name=None):
    x = _sample_array(samples, MIN_MOMENT_SAMPLES)
    if not expected_sd > 0:
        raise InvalidParameterError("expected_sd must be > 0")
    mean = math.fsum(x) / x.size
    z = (mean - expected_mean) / (expected_sd / math.sqrt(x.size))
    return ZScoreReport(z, x.size, mean, expected_mean, abs(z) <= Z_THRESHOLD, Z_THRESHOLD, seed_record, test_name)


def correlation_check(x, y, seed_record=None, test_name=None):
    """Pearson correlation scaled by sqrt(n); near N(0, 1) under independence."""
    xs = _sample_array(x, MIN_MOMENT_SAMPLES)
    ys = _sample_array(y, MIN_MOMENT_SAMPLES)
    if xs.size != ys.size:
        raise LengthMismatchError("correlation needs paired samples of equal length")
    r = float(np.corrcoef(xs, ys)[0, 1])
    z = r * math.sqrt(xs.size)
    return ZScoreReport(z, xs.size, r, 0.0, abs(z) <= Z_THRESHOLD, Z_THRESHOLD, seed_record, test_name)


def _snapshots(values):
    """(j, value) pairs at powers of ten and at the last index, j 1-based."""
    n = values.size
    marks = sorted({10**p for p in range(int(math.log10(n)) + 1) if 10**p <= n} | {n})
    return [(j, float(values[j - 1])) for j in marks]


def check_assumption1(a_seq, b_seq, alpha=None, c=None):
    """Diagnose whether (a_j, b_j) give a proper stick-breaking scheme.

    Condition (i) is checked exactly on the given range. Conditions (ii) and
    (iii) are limits, so only partial sums and a fitted decay exponent of
    pi_j a_j are reported. With ``alpha`` and ``c`` of a RAM family the
    predicted exponent 1 - (alpha + c) / alpha is attached.
    """
    a = np.asarray(a_seq, dtype=float)
    b = np.asarray(b_seq, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatchError(f"sequences differ in length: {a.size} vs {b.size}")
    if a.size < 10:
        raise LengthMismatchError(f"need at least 10 terms, got {a.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NonFiniteInputError("sequences must be finite")
    if np.any(a <= 0) or np.any(b <= 0):
        raise NonPositiveEntryError("sequences must be strictly positive")

    n = a.size
    gaps = a[:-1] + b[:-1] - a[1:]
    bad = np.flatnonzero(gaps <= 0)
    first_violation = int(bad[0]) + 1 if bad.size else None

    log_pi = np.concatenate(([0.0], np.cumsum(np.log(a[:-1]) - np.log(a[:-1] + b[:-1]))))
    series_ii = np.cumsum(np.exp(log_pi[1:]) * gaps)
    log_pi_a = log_pi + np.log(a)

    j = np.arange(1, n + 1, dtype=float)
    tail = slice(max(1, n // 10), n)
    x_log, x_lin, y = np.log(j[tail]), j[tail], log_pi_a[tail]
    slope, intercept = np.polyfit(x_log, y, 1)
    power_rms = float(np.sqrt(np.mean((y - (slope * x_log + intercept)) ** 2)))
    lin_slope, lin_intercept = np.polyfit(x_lin, y, 1)
    linear_rms = float(np.sqrt(np.mean((y - (lin_slope * x_lin + lin_intercept)) ** 2)))

    theoretical = None
    if alpha is not None and c is not None and alpha > 0:
        theoretical = 1.0 - (alpha + c) / alpha

    return Assumption1Report(
        n_checked=n,
        cond_i_ok=first_violation is None,
        first_violation=first_violation,
        partial_sum_ii=_snapshots(series_ii),
        pi_a_iii=_snapshots(np.exp(log_pi_a)),
        trend_exponent=float(slope),
        trend_residual=power_rms,
        log_linear=linear_rms < power_rms,
        theoretical_exponent=theoretical,
    )
