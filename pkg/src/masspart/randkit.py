"""Reproducible random streams, gamma/beta samplers and special functions.

Streams are derived from ``(master_seed, stream_index)`` with numpy's
``SeedSequence`` (the index is the spawn key, so a stream is exactly the
``index``-th child of ``SeedSequence(master_seed)``) feeding a counter-based
``Philox`` bit generator. Any replica can be regenerated on its own, in any
process, without replaying the others.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError

log = logging.getLogger(__name__)

UINT64_MAX = 2**64 - 1

# Convergence threshold of the series / continued fractions below.
SPECIAL_EPS = 1e-16
SPECIAL_MAX_ITER = 100_000
_FPMIN = 1e-300
_KOLMOGOROV_TERM_CUTOFF = 1e-12

_TWO_53 = float(2**53)


@dataclass(eq=False)
class RngStream:
    """One independent random stream. Single owner: never share across threads."""

    master_seed: int
    stream_index: int
    generator: np.random.Generator = field(repr=False)

    def uniform(self, size=None):
        """Uniform draws on [0, 1)."""
        return self.generator.random(size)

    def open_uniform(self, size=None):
        """Uniform draws on the open interval (0, 1), safe to take logs of."""
        k = self.generator.integers(0, 2**53, size=size, dtype=np.int64)
        return (k + 0.5) / _TWO_53

    def exponential(self, size=None):
        return self.generator.standard_exponential(size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def standard_gamma(self, shape):
        """Unit-rate gamma draws; shapes below one lose precision near zero, so callers boost them."""
        return self.generator.standard_gamma(shape)

    def signs(self, size):
        """Fair Bernoulli marks in {0, 1}."""
        return self.generator.integers(0, 2, size=size).astype(float)


def make_stream(master_seed, index):
    """Return the reproducible stream number ``index`` under ``master_seed``."""
    for name, value in (("master_seed", master_seed), ("index", index)):
        if not isinstance(value, (int, np.integer)) or not 0 <= int(value) <= UINT64_MAX:
            raise InvalidParameterError(f"{name} must be an unsigned 64-bit integer, got {value!r}")
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return RngStream(int(master_seed), int(index), np.random.Generator(np.random.Philox(seq)))


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------

def _positive_array(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)) or not np.all(arr > 0):
        raise InvalidParameterError(f"{name} must be finite and > 0, got {value!r}")
    return arr


def sample_log_gamma(stream, shape, rate=1.0, size=None):
    """Logarithm of gamma(shape, rate) draws.

    Shapes below one use the boosting identity
    ``G_a = G_{a+1} * U**(1/a)``, carried out in log space so tiny shapes
    never round a draw to zero.
    """
    shape_arr = _positive_array("shape", shape)
    rate_arr = _positive_array("rate", rate)
    out_shape = np.broadcast_shapes(shape_arr.shape, rate_arr.shape) if size is None else size
    a = np.broadcast_to(shape_arr, out_shape).ravel()
    r = np.broadcast_to(rate_arr, out_shape).ravel()

    small = a < 1.0
    logs = np.log(stream.standard_gamma(np.where(small, a + 1.0, a)))
    n_small = int(np.count_nonzero(small))
    if n_small:
        logs[small] += np.log(stream.open_uniform(n_small)) / a[small]
    logs -= np.log(r)

    logs = logs.reshape(out_shape)
    return float(logs) if logs.ndim == 0 else logs


def sample_gamma(stream, shape, rate=1.0, size=None):
    """gamma(shape, rate) draws; strictly positive."""
    logs = np.exp(sample_log_gamma(stream, shape, rate, size))
    logs = np.maximum(logs, np.finfo(float).tiny)
    return float(logs) if np.ndim(logs) == 0 else logs


def sample_log_beta(stream, a, b, size=None):
    """Return ``(log Y, log(1 - Y))`` for Y ~ beta(a, b), via G_a / (G_a + G_b)."""
    if size is None:
        size = np.broadcast_shapes(np.shape(a), np.shape(b))
    log_ga = sample_log_gamma(stream, a, size=size)
    log_gb = sample_log_gamma(stream, b, size=size)
    log_total = np.logaddexp(log_ga, log_gb)
    return log_ga - log_total, log_gb - log_total


def log_expm1(x):
    """log(e^x - 1) for x > 0, finite where e^x overflows."""
    x = float(x)
    if not x > 0.0:
        raise InvalidParameterError(f"log_expm1 needs x > 0, got {x!r}")
    return x + math.log(-math.expm1(-x))


def sample_beta(stream, a, b, size=None):
    """beta(a, b) draws on the open interval (0, 1)."""
    log_y, _ = sample_log_beta(stream, a, b, size)
    y = np.clip(np.exp(log_y), np.finfo(float).tiny, np.nextafter(1.0, 0.0))
    return float(y) if np.ndim(y) == 0 else y


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------

def _check_gamma_args(shape, x):
    if not (math.isfinite(shape) and shape > 0):
        raise InvalidParameterError(f"shape must be finite and > 0, got {shape!r}")
    if math.isnan(x) or x < 0:
        raise InvalidParameterError(f"x must be >= 0, got {x!r}")


def _gamma_prefactor(a, x):
    return math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_series(a, x):
    """P(a, x) by its power series; converges quickly for x < a + 1."""
    ap = a
    total = delta = 1.0 / a
    for _ in range(SPECIAL_MAX_ITER):
        ap += 1.0
        delta *= x / ap
        total += delta
        if abs(delta) < abs(total) * SPECIAL_EPS:
            break
    else:
        log.warning("incomplete gamma series did not converge (a=%g, x=%g)", a, x)
    return total * _gamma_prefactor(a, x)


def _gamma_continued_fraction(a, x):
    """Q(a, x) by the modified Lentz continued fraction; for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, SPECIAL_MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < SPECIAL_EPS:
            break
    else:
        log.warning("incomplete gamma continued fraction did not converge (a=%g, x=%g)", a, x)
    return _gamma_prefactor(a, x) * h


def reg_inc_gamma(shape, x):
    """Lower regularized incomplete gamma P(shape, x)."""
    shape, x = float(shape), float(x)
    _check_gamma_args(shape, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < shape + 1.0:
        return min(1.0, _gamma_series(shape, x))
    return max(0.0, 1.0 - _gamma_continued_fraction(shape, x))


def reg_inc_gamma_upper(shape, x):
    """Upper regularized incomplete gamma Q(shape, x) = 1 - P(shape, x)."""
    shape, x = float(shape), float(x)
    _check_gamma_args(shape, x)
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < shape + 1.0:
        return max(0.0, 1.0 - _gamma_series(shape, x))
    return min(1.0, _gamma_continued_fraction(shape, x))


def _beta_continued_fraction(a, b, x):
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, SPECIAL_MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < SPECIAL_EPS:
            break
    else:
        log.warning("incomplete beta continued fraction did not converge (a=%g, b=%g, x=%g)", a, b, x)
    return h


def _beta_front(a, b, x):
    return math.exp(
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )


def reg_inc_beta(a, b, x):
    """Regularized incomplete beta I_x(a, b); symmetry switch at x = a / (a + b)."""
    a, b, x = float(a), float(b), float(x)
    for name, value in (("a", a), ("b", b)):
        if not (math.isfinite(value) and value > 0):
            raise InvalidParameterError(f"{name} must be finite and > 0, got {value!r}")
    if not 0.0 <= x <= 1.0:
        raise InvalidParameterError(f"x must lie in [0, 1], got {x!r}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    if x < a / (a + b):
        value = _beta_front(a, b, x) * _beta_continued_fraction(a, b, x) / a
    else:
        value = 1.0 - _beta_front(b, a, 1.0 - x) * _beta_continued_fraction(b, a, 1.0 - x) / b
    return min(1.0, max(0.0, value))


def kolmogorov_sf(t):
    """Survival function of the Kolmogorov distribution.

    Uses the alternating series 2 * sum (-1)^(k-1) exp(-2 k^2 t^2) for t >= 1
    and the equivalent theta-function series of the CDF below that, where the
    alternating form converges slowly.
    """
    t = float(t)
    if t <= 0.0:
        return 1.0
    if t < 1.0:
        total = 0.0
        for k in range(1, 200):
            term = math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8.0 * t * t))
            total += term
            if term < _KOLMOGOROV_TERM_CUTOFF * max(total, _FPMIN):
                break
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / t * total))
    total = 0.0
    for k in range(1, 200):
        term = math.exp(-2.0 * k * k * t * t)
        total += term if k % 2 else -term
        if term < _KOLMOGOROV_TERM_CUTOFF:
            break
    return min(1.0, max(0.0, 2.0 * total))


# ---------------------------------------------------------------------------
# CDF handles for goodness-of-fit tests
# ---------------------------------------------------------------------------

def gamma_cdf(shape, rate=1.0):
    def cdf(x):
        x = np.asarray(x, dtype=float)
        return np.vectorize(lambda v: reg_inc_gamma(shape, rate * v) if v > 0 else 0.0, otypes=[float])(x)
    return cdf


def beta_cdf(a, b):
    def cdf(x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return np.vectorize(lambda v: reg_inc_beta(a, b, v), otypes=[float])(x)
    return cdf


def exponential_cdf(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, -np.expm1(-np.maximum(x, 0.0)), 0.0)


def uniform_cdf(x):
    return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)


def arcsine_cdf(x):
    """(2/pi) arcsin(sqrt(x)), the beta(1/2, 1/2) CDF."""
    return 2.0 / np.pi * np.arcsin(np.sqrt(np.clip(np.asarray(x, dtype=float), 0.0, 1.0)))
