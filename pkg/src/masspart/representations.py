"""Samplers for the RAM(alpha, a1, c) / Poisson-Dirichlet family.

Every sampler is a pure function of its parameters and an ``RngStream``.
Perpetuity-type samplers work with log-products so that deep prefixes never
underflow, and close the unrealized tail exactly whenever the tail variable
has a known gamma law. Samplers built on truncated Poisson processes carry a
conditional-mean tail estimate instead and are flagged ``approximate``.
"""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidParameterError
from .partition import MarkedPointSet, MassPartition, Order, close_with_tail
from .randkit import (
    log_expm1,
    reg_inc_beta,
    reg_inc_gamma_upper,
    sample_gamma,
    sample_log_beta,
    sample_log_gamma,
)

log = logging.getLogger(__name__)

MAX_STICK_ATOMS = 1_000_000


@dataclass(frozen=True)
class RamParams:
    """RAM(alpha, a1, c): a_n = a1 + (n - 1) alpha, b_n = c + alpha, c_n = c."""

    alpha: float
    a1: float
    c: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise InvalidParameterError(f"alpha must be >= 0, got {self.alpha!r}")
        if not (math.isfinite(self.a1) and self.a1 > 0):
            raise InvalidParameterError(f"a1 must be > 0, got {self.a1!r}")
        if not (math.isfinite(self.c) and self.c > 0):
            raise InvalidParameterError(f"c must be > 0, got {self.c!r}")

    def a(self, n):
        return self.a1 + (np.asarray(n, dtype=float) - 1.0) * self.alpha

    def b(self, n=1):
        return np.full(np.shape(n), self.c + self.alpha) if np.ndim(n) else self.c + self.alpha

    def c_n(self, n=1):
        return np.full(np.shape(n), self.c) if np.ndim(n) else self.c


@dataclass(frozen=True)
class PdParams:
    alpha: float
    theta: float

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise InvalidParameterError(f"PD alpha must lie in [0, 1), got {self.alpha!r}")
        if not (math.isfinite(self.theta) and self.theta + self.alpha > 0):
            raise InvalidParameterError(f"PD theta must exceed -alpha, got theta={self.theta!r}")


def pd_to_ram(pd):
    """PD(alpha, theta) is RAM(alpha, alpha + theta, 1 - alpha)."""
    return RamParams(pd.alpha, pd.alpha + pd.theta, 1.0 - pd.alpha)


def ram_sequences(params, n):
    """The (a_j, b_j, c_j) sequences for j = 1..n."""
    j = np.arange(1, n + 1)
    return params.a(j), np.asarray(params.b(j)), np.asarray(params.c_n(j))


def closure_shape(params, k):
    """Shape of the exact tail variable after ``k`` stored perpetuity terms.

    The tail sum_{j > k} G_j Pi_j equals Pi_k * W_k with W_k ~ gamma(a_k)
    independent of the first k terms.
    """
    return float(params.a(k))


def _check_count(name, value, minimum=1):
    if int(value) != value or value < minimum:
        raise InvalidParameterError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def _check_alpha_open(alpha):
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError(f"alpha must lie in (0, 1) for this representation, got {alpha!r}")


def _positive(name, value):
    if not (math.isfinite(value) and value > 0):
        raise InvalidParameterError(f"{name} must be > 0, got {value!r}")


def _assemble(log_terms, log_tail=None, order=Order.SIZE_BIASED, approximate=False):
    """Self-normalize exp(log_terms) together with an optional closing tail."""
    shift = float(np.max(log_terms))
    if log_tail is not None:
        shift = max(shift, log_tail)
    terms = np.exp(log_terms - shift)
    tail = 0.0 if log_tail is None else math.exp(log_tail - shift)
    total = math.fsum(terms) + tail
    return MassPartition(
        atoms=terms / total,
        residual=tail / total,
        order=order,
        approximate=approximate,
        scale=total * math.exp(shift),
    )


def _exclusive_cumsum(values):
    out = np.zeros(values.size + 1)
    np.cumsum(values, out=out[1:])
    return out


# ---------------------------------------------------------------------------
# Stick-breaking and perpetuities
# ---------------------------------------------------------------------------

def sample_ram_stick(params, k, stream):
    """Exact first ``k`` size-biased atoms: Y_n ~ beta(c, a_n), V_n = Y_n prod_{j<n} (1 - Y_j)."""
    k = _check_count("k", k)
    log_y, log_rest = sample_log_beta(stream, params.c, params.a(np.arange(1, k + 1)))
    log_left = _exclusive_cumsum(log_rest)
    atoms = np.exp(log_y + log_left[:-1])
    return MassPartition(atoms=atoms, residual=math.exp(log_left[-1]), order=Order.SIZE_BIASED)


def sample_ram_stick_until(params, residual_target, stream, max_atoms=MAX_STICK_ATOMS):
    """Stick-breaking grown chunk by chunk until the residual drops below ``residual_target``."""
    if not 0.0 < residual_target < 1.0:
        raise InvalidParameterError("residual_target must lie in (0, 1)")
    log_target = math.log(residual_target)
    chunks = []
    log_left = 0.0
    n = 0
    chunk = 64
    while log_left >= log_target:
        if n >= max_atoms:
            raise InvalidParameterError(
                f"stick did not reach residual {residual_target:g} within {max_atoms} atoms"
            )
        idx = np.arange(n + 1, n + chunk + 1)
        log_y, log_rest = sample_log_beta(stream, params.c, params.a(idx))
        partial = log_left + _exclusive_cumsum(log_rest)
        chunks.append(np.exp(log_y + partial[:-1]))
        log_left = float(partial[-1])
        n += chunk
        chunk = min(2 * chunk, 4096)
    log.debug("stick reached residual %.3g after %d atoms", math.exp(log_left), n)
    return MassPartition(atoms=np.concatenate(chunks), residual=math.exp(log_left), order=Order.SIZE_BIASED)


def sample_ram_perpetuity(params, n_terms, stream, tail_closure=True):
    """Self-normalized perpetuity G_j Pi_j with G_j ~ gamma(c), U_j ~ beta(a_j, c + alpha).

    With ``tail_closure`` the tail beyond ``n_terms`` is Pi_n * W, W ~ gamma(a_n),
    which makes the stored prefix an exact sample. Without it the prefix is
    renormalized and carries truncation bias.
    """
    n = _check_count("n_terms", n_terms)
    log_g = sample_log_gamma(stream, params.c, size=n)
    log_u, _ = sample_log_beta(stream, params.a(np.arange(1, n)), params.c + params.alpha)
    log_pi = _exclusive_cumsum(log_u)
    log_terms = log_g + log_pi
    if not tail_closure:
        return _assemble(log_terms, approximate=True)
    log_w = sample_log_gamma(stream, closure_shape(params, n))
    return _assemble(log_terms, log_pi[n - 1] + log_w)


def stable_tail_mean(alpha, gamma_n):
    """E sum_{j > n} Gamma_j^(-1/alpha) given Gamma_n, by the tail integral."""
    return alpha / (1.0 - alpha) * gamma_n ** (1.0 - 1.0 / alpha)


def sample_pd_stable_points(alpha, n_points, stream):
    """PD(alpha, 0) in nonincreasing order from sizes Gamma_j^(-1/alpha); approximate."""
    _check_alpha_open(alpha)
    n = _check_count("n_points", n_points, minimum=2)
    gammas = np.cumsum(stream.exponential(n))
    log_sizes = -np.log(gammas) / alpha
    log_tail = math.log(stable_tail_mean(alpha, gammas[-1]))
    return _assemble(log_sizes, log_tail, order=Order.NONINCREASING, approximate=True)


def sample_pd_theta_biased(pd, k, stream):
    """PD(alpha, theta) as V(G_n S_n^(-1/alpha)), S_n = D'_1 + D_2 + ... + D_n, D'_1 ~ gamma(theta/alpha + 1)."""
    if pd.alpha <= 0:
        raise InvalidParameterError("alpha = 0 has no theta-biased representation; use pd0-exp")
    k = _check_count("k", k)
    sums = np.cumsum(np.concatenate(([sample_gamma(stream, pd.theta / pd.alpha + 1.0)], stream.exponential(k - 1))))
    log_pi = (math.log(sums[0]) - np.log(sums)) / pd.alpha
    log_g = sample_log_gamma(stream, 1.0 - pd.alpha, size=k)
    log_w = sample_log_gamma(stream, closure_shape(pd_to_ram(pd), k))
    return _assemble(log_g + log_pi, log_pi[-1] + log_w)


def sample_pd0_exp_weights(theta, k, stream):
    """PD(0, theta) as V(G_n exp(-Gamma_n / theta)) with G_n ~ Exp(1)."""
    _positive("theta", theta)
    k = _check_count("k", k)
    log_pi = -_exclusive_cumsum(stream.exponential(k - 1)) / theta
    log_g = sample_log_gamma(stream, 1.0, size=k)
    log_w = sample_log_gamma(stream, theta)
    return _assemble(log_g + log_pi, log_pi[-1] + log_w)


def sample_biased_exponential(a, c, stream, size=None):
    """Biased exponentials D = -a log B with B ~ beta(a, c); D ~ Exp(1) when c = 1."""
    _positive("a", a)
    _positive("c", c)
    log_b, _ = sample_log_beta(stream, a, c, size=size)
    return -a * log_b


def biased_exponential_cdf(a, c):
    def cdf(x):
        x = np.asarray(x, dtype=float)
        return np.vectorize(
            lambda v: 1.0 - reg_inc_beta(a, c, math.exp(-v / a)) if v > 0 else 0.0, otypes=[float]
        )(x)
    return cdf


def sample_ram0_biased_exp(a, c, k, stream):
    """RAM(0, a, c) as V(G_n exp(-(D_2 + ... + D_n)/a)) with biased exponentials D and G_n ~ gamma(c)."""
    _positive("a", a)
    _positive("c", c)
    k = _check_count("k", k)
    d_tilde = sample_biased_exponential(a, c, stream, size=k - 1)
    log_pi = -_exclusive_cumsum(np.asarray(d_tilde)) / a
    log_g = sample_log_gamma(stream, c, size=k)
    log_w = sample_log_gamma(stream, a)
    return _assemble(log_g + log_pi, log_pi[-1] + log_w)


# ---------------------------------------------------------------------------
# Thinned Poisson constructions
# ---------------------------------------------------------------------------

def nu_vee_tail(alpha, u):
    """nu_vee(u, inf) for the tempered stable intensity with K = 1/Gamma(1 - alpha)."""
    _check_alpha_open(alpha)
    _positive("u", u)
    head = math.exp(-alpha * math.log(u) - u - math.lgamma(1.0 - alpha))
    return max(0.0, head - reg_inc_gamma_upper(1.0 - alpha, u))


def mvee_tail_mean(alpha, s, gamma_n):
    """E sum_{i > n} G_i (s/(s + Gamma_i))^(1/alpha) given Gamma_n."""
    return alpha * s * (s / (s + gamma_n)) ** (1.0 / alpha - 1.0)


def sample_mvee(alpha, s, n_points, stream):
    """First ``n_points`` points of M_s: sizes G_i (s / (s + Gamma_i))^(1/alpha), G_i ~ gamma(1 - alpha)."""
    _check_alpha_open(alpha)
    _positive("s", s)
    n = _check_count("n_points", n_points)
    gammas = np.cumsum(stream.exponential(n))
    log_g = sample_log_gamma(stream, 1.0 - alpha, size=n)
    sizes = np.exp(log_g - np.log1p(gammas / s) / alpha)
    return MarkedPointSet(
        sizes=sizes,
        truncation_level={
            "n_points": n,
            "gamma_n": float(gammas[-1]),
            "tail_mean": mvee_tail_mean(alpha, s, float(gammas[-1])),
        },
    )


class ThinnedDraw(NamedTuple):
    """``b_over_gamma`` is inf once U^(-1/alpha) overflows; ``log_b_over_gamma`` stays finite."""

    partition: MassPartition
    a_frac: float
    b_over_gamma: float
    gamma_total: float
    log_b_over_gamma: float


def sample_xi_thinned(alpha, n_points, stream):
    """The normalized xi-process at an exponential time.

    The age atom A ~ gamma(1 - alpha) comes first, followed by the completed
    jumps M_T in index order; Gamma_total includes the tail estimate.
    """
    _check_alpha_open(alpha)
    n = _check_count("n_points", n_points, minimum=2)
    t_wedge = float(stream.exponential())
    age = sample_gamma(stream, 1.0 - alpha)
    u = float(stream.open_uniform())
    completed = sample_mvee(alpha, t_wedge, n - 1, stream)
    p = close_with_tail(
        np.concatenate(([age], completed.sizes)),
        completed.truncation_level["tail_mean"],
        order=Order.CONSTRUCTION,
    )
    gamma_total = p.scale
    log_b = math.log(age) + log_expm1(-math.log(u) / alpha) - math.log(gamma_total)
    with np.errstate(over="ignore"):
        b_over_gamma = float(np.exp(log_b))
    return ThinnedDraw(p, age / gamma_total, b_over_gamma, gamma_total, log_b)


def sample_dickman_partition(a, k, stream):
    """Interval lengths exp(-Gamma_{n-1}/a) - exp(-Gamma_n/a), Gamma_0 = 0."""
    _positive("a", a)
    k = _check_count("k", k)
    d = stream.exponential(k)
    upper = _exclusive_cumsum(d)
    atoms = np.exp(-upper[:-1] / a) * -np.expm1(-d / a)
    return MassPartition(atoms=atoms, residual=math.exp(-upper[-1] / a), order=Order.CONSTRUCTION)


def sample_pd_theta_mixed_poisson(pd, n_points, stream):
    """PD(alpha, theta), theta > 0, as V(M_D) with D ~ gamma(theta/alpha); approximate."""
    if not (pd.alpha > 0 and pd.theta > 0):
        raise InvalidParameterError("mixed-Poisson representation needs alpha > 0 and theta > 0")
    s = sample_gamma(stream, pd.theta / pd.alpha)
    points = sample_mvee(pd.alpha, s, n_points, stream)
    return close_with_tail(points, points.truncation_level["tail_mean"])


def sample_pd0_limit_of_mvee(theta, alpha_small, n_points, stream):
    """V(M_{theta/alpha}) for small alpha, which tends to PD(0, theta) as alpha -> 0."""
    _positive("theta", theta)
    if not 0.0 < alpha_small <= 0.05:
        raise InvalidParameterError(f"alpha_small must lie in (0, 0.05], got {alpha_small!r}")
    points = sample_mvee(alpha_small, theta / alpha_small, n_points, stream)
    return close_with_tail(points, points.truncation_level["tail_mean"])


def brute_force_tail(params, n, depth, stream):
    """sum_{j > n} G_j Pi_j / Pi_n from ``depth`` explicit perpetuity terms (no closure)."""
    n = _check_count("n", n)
    depth = _check_count("depth", depth, minimum=n + 1)
    log_g = sample_log_gamma(stream, params.c, size=depth)
    log_u, _ = sample_log_beta(stream, params.a(np.arange(1, depth)), params.c + params.alpha)
    log_pi = _exclusive_cumsum(log_u)
    return math.fsum(np.exp(log_g[n:] + log_pi[n:] - log_pi[n - 1]))
