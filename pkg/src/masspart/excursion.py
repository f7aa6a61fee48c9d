"""Excursion straddling an exponential time: septuple, sextuple, BFRY and occupation laws."""

import logging
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .config import OCCUPATION_RESIDUAL
from .errors import InvalidParameterError
from .partition import MassPartition
from .randkit import log_expm1, reg_inc_gamma_upper, sample_beta, sample_gamma
from .representations import RamParams, sample_mvee, sample_ram_stick, sample_ram_stick_until

log = logging.getLogger(__name__)

FIELD_TOLERANCE = 1e-9
RATIO_FIELDS = ("a", "b", "g", "d", "delta")


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError(f"alpha must lie in (0, 1), got {alpha!r}")


def _close(x, y):
    if not (math.isfinite(x) and math.isfinite(y)):
        return x == y
    return abs(x - y) <= FIELD_TOLERANCE * max(1.0, abs(x), abs(y))


@dataclass(frozen=True)
class ExcursionSeptuple:
    """(e, L, B, A, g, d, Delta) at the exponential time e.

    ``l`` is None for the closed-form sextuple, which has no local time.
    b, d and delta overflow to inf for small alpha; ``log_delta`` stays finite.
    """

    e: float
    l: float | None
    b: float
    a: float
    g: float
    d: float
    delta: float
    log_delta: float | None = None

    def __post_init__(self):
        if not _close(self.e, self.g + self.a):
            raise InvalidParameterError(f"e={self.e!r} differs from g + a={self.g + self.a!r}")
        if not _close(self.d, self.g + self.delta):
            raise InvalidParameterError(f"d={self.d!r} differs from g + delta={self.g + self.delta!r}")
        if not _close(self.delta, self.a + self.b):
            raise InvalidParameterError(f"delta={self.delta!r} differs from a + b={self.a + self.b!r}")
        if not (0.0 <= self.g <= self.e <= self.d):
            raise InvalidParameterError("excursion fields must satisfy g <= e <= d")

    def ratios(self):
        """The five fields divided by e, in RATIO_FIELDS order."""
        return np.array([getattr(self, name) / self.e for name in RATIO_FIELDS])

    def to_dict(self):
        return asdict(self)


def _scaled_power(scale, u, alpha):
    """scale * U^(-1/alpha), scale * (U^(-1/alpha) - 1) and the log of the first.

    The first two are exponentiated from their logs, so they are inf exactly
    when the true value is beyond the float range.
    """
    x = -math.log(u) / alpha
    log_scale = math.log(scale)
    log_delta = log_scale + x
    with np.errstate(over="ignore"):
        return float(np.exp(log_delta)), float(np.exp(log_scale + log_expm1(x))), log_delta


def sample_septuple_constructive(alpha, n_points, stream):
    """Build the septuple from T ~ Exp(1), G_1 ~ gamma(1 - alpha), U and the thinned jumps M_T."""
    _check_alpha(alpha)
    t_wedge = float(stream.exponential())
    g1 = sample_gamma(stream, 1.0 - alpha)
    u = float(stream.open_uniform())
    jumps = sample_mvee(alpha, t_wedge, n_points, stream)
    g0 = math.fsum(jumps.sizes) + jumps.truncation_level["tail_mean"]
    delta, overshoot, log_delta = _scaled_power(g1, u, alpha)
    return ExcursionSeptuple(
        e=g0 + g1,
        l=t_wedge,
        b=overshoot,
        a=g1,
        g=g0,
        d=g0 + delta,
        delta=delta,
        log_delta=log_delta,
    )


def sample_eta_prime(alpha, k, stream):
    """eta' ~ PD(alpha, alpha), the remainder after the size-biased first atom of PD(alpha, 0)."""
    _check_alpha(alpha)
    return sample_ram_stick(RamParams(alpha, 2.0 * alpha, 1.0 - alpha), k, stream)


def sample_sextuple_closed(alpha, k_atoms, stream):
    """Normalized fields from Q ~ beta(alpha, 1 - alpha) and U, plus the sub-partition Q * eta'."""
    _check_alpha(alpha)
    q = sample_beta(stream, alpha, 1.0 - alpha)
    u = float(stream.open_uniform())
    eta = sample_eta_prime(alpha, k_atoms, stream)
    age = 1.0 - q
    delta, overshoot, log_delta = _scaled_power(age, u, alpha)
    fields = ExcursionSeptuple(
        e=1.0,
        l=None,
        b=overshoot,
        a=age,
        g=q,
        d=q + delta,
        delta=delta,
        log_delta=log_delta,
    )
    scaled = MassPartition(
        atoms=q * eta.atoms,
        residual=q * eta.residual,
        order=eta.order,
        mass=q,
    )
    return fields, scaled


def occupation_operator(q, eta_prime, signs):
    """(1 - Q) eps_1 + Q sum eta'_i eps_{i+1}; returns (value, unsigned residual)."""
    signs = np.asarray(signs, dtype=float)
    if signs.size != len(eta_prime) + 1:
        raise InvalidParameterError("need one sign for the age atom and one per eta' atom")
    value = (1.0 - q) * signs[0] + q * math.fsum(eta_prime.atoms * signs[1:])
    return min(1.0, max(0.0, value)), q * eta_prime.residual


class OccupationDraw(NamedTuple):
    value: float
    residual: float


def sample_occupation_fraction(alpha, k=None, stream=None, tolerance=OCCUPATION_RESIDUAL):
    """Fraction of time spent positive, with independent fair signs per excursion.

    With ``k`` the eta' prefix has exactly k atoms; otherwise it grows until
    the unsigned residual is below ``tolerance``.
    """
    _check_alpha(alpha)
    if stream is None:
        raise InvalidParameterError("a random stream is required")
    q = sample_beta(stream, alpha, 1.0 - alpha)
    params = RamParams(alpha, 2.0 * alpha, 1.0 - alpha)
    if k is None:
        eta = sample_ram_stick_until(params, tolerance, stream)
    else:
        eta = sample_ram_stick(params, k, stream)
    signs = stream.signs(len(eta) + 1)
    return OccupationDraw(*occupation_operator(q, eta, signs))


def bfry_density(alpha, x):
    """alpha / Gamma(1 - alpha) x^(-1-alpha) (1 - e^(-x))."""
    _check_alpha(alpha)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise InvalidParameterError("BFRY density is defined for x > 0")
    out = alpha / math.gamma(1.0 - alpha) * x ** (-1.0 - alpha) * -np.expm1(-x)
    return float(out) if out.ndim == 0 else out


def bfry_cdf(alpha, x):
    """1 - x^(-alpha) (1 - e^(-x)) / Gamma(1 - alpha) - Q(1 - alpha, x)."""
    _check_alpha(alpha)
    gamma_1ma = math.gamma(1.0 - alpha)

    def one(v):
        if v <= 0:
            return 0.0
        head = -math.expm1(-v) * math.exp(-alpha * math.log(v)) / gamma_1ma
        return min(1.0, max(0.0, 1.0 - head - reg_inc_gamma_upper(1.0 - alpha, v)))

    x = np.asarray(x, dtype=float)
    out = np.vectorize(one, otypes=[float])(x)
    return float(out) if out.ndim == 0 else out


def lamperti_cdf(alpha, x):
    """Law of the positive-occupation fraction with fair signs; the arcsine law at alpha = 1/2."""
    _check_alpha(alpha)
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    pa = math.pi * alpha
    with np.errstate(divide="ignore"):
        r = np.where(x < 1.0, (x / (1.0 - np.where(x < 1.0, x, 0.0))) ** alpha, np.inf)
    out = (np.arctan((r + math.cos(pa)) / math.sin(pa)) - math.pi / 2.0 + pa) / pa
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out
