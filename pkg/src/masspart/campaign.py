"""Representation registry and the replica fan-out behind every CLI command.

Replica ``i`` of lane ``L`` always draws from ``make_stream(seed, (L << 40) | i)``,
so results depend only on the master seed and never on how replicas are
split across workers.
"""

import logging
import multiprocessing as mp
from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np

from .config import DEFAULT_CHUNK_SIZE
from .errors import IncompatibleParamsError, InvalidParameterError, UnknownRepresentationError
from .excursion import (
    sample_eta_prime,
    sample_occupation_fraction,
    sample_septuple_constructive,
    sample_sextuple_closed,
)
from .partition import Order, size_biased_permutation
from .randkit import make_stream
from .representations import (
    PdParams,
    RamParams,
    pd_to_ram,
    sample_dickman_partition,
    sample_pd0_exp_weights,
    sample_pd_stable_points,
    sample_pd_theta_biased,
    sample_pd_theta_mixed_poisson,
    sample_ram0_biased_exp,
    sample_ram_perpetuity,
    sample_ram_stick,
    sample_xi_thinned,
)

log = logging.getLogger(__name__)

LANE_BITS = 40
MAX_LANE = 2**24 - 1
PARAM_TOLERANCE = 1e-12
# Residual accepted when size-biasing approximate partitions for comparisons.
COMPARISON_RESIDUAL = 0.05


def stream_index(lane, replica):
    if not 0 <= lane <= MAX_LANE or not 0 <= replica < 2**LANE_BITS:
        raise InvalidParameterError(f"lane {lane} / replica {replica} out of range")
    return (lane << LANE_BITS) | replica


def resolve_params(alpha, a1=None, c=None, theta=None):
    """RAM parameters from either (alpha, theta) in PD form or (alpha, a1, c)."""
    if theta is not None:
        if a1 is not None or c is not None:
            raise InvalidParameterError("give either --theta or --a1/--c, not both")
        return pd_to_ram(PdParams(alpha, theta))
    if a1 is None or c is None:
        raise InvalidParameterError("give --theta, or both --a1 and --c")
    return RamParams(alpha, a1, c)


def as_pd(params, name):
    """The PD(alpha, theta) behind ``params``, or IncompatibleParamsError."""
    if not params.alpha < 1.0 or abs(params.c - (1.0 - params.alpha)) > PARAM_TOLERANCE:
        raise IncompatibleParamsError(
            f"{name} needs Poisson-Dirichlet parameters (alpha < 1 and c = 1 - alpha), got {params}"
        )
    return PdParams(params.alpha, params.a1 - params.alpha)


def _require(condition, name, message):
    if not condition:
        raise IncompatibleParamsError(f"{name}: {message}")


def _check_any(params, name):
    pass


def _check_stable(params, name):
    pd = as_pd(params, name)
    _require(0.0 < pd.alpha < 1.0, name, "needs 0 < alpha < 1")
    _require(abs(pd.theta) <= PARAM_TOLERANCE, name, "represents PD(alpha, 0) only (theta = 0)")


def _check_theta_biased(params, name):
    _require(as_pd(params, name).alpha > 0, name, "needs alpha > 0; use pd0-exp for alpha = 0")


def _check_pd0(params, name):
    pd = as_pd(params, name)
    _require(pd.alpha == 0.0, name, "represents PD(0, theta) only (alpha = 0)")


def _check_ram0(params, name):
    _require(params.alpha == 0.0, name, "represents RAM(0, a, c) only (alpha = 0)")


def _check_mixed(params, name):
    pd = as_pd(params, name)
    _require(pd.alpha > 0 and pd.theta > 0, name, "needs alpha > 0 and theta > 0")


def _check_eta_prime(params, name):
    pd = as_pd(params, name)
    _require(0.0 < pd.alpha < 1.0, name, "needs 0 < alpha < 1")
    _require(abs(pd.theta - pd.alpha) <= PARAM_TOLERANCE, name, "represents PD(alpha, alpha) only (theta = alpha)")


def _build_stick(params, k, points, stream):
    return sample_ram_stick(params, k, stream)


def _build_perpetuity(params, k, points, stream):
    return sample_ram_perpetuity(params, k, stream, tail_closure=True)


def _build_stable(params, k, points, stream):
    return sample_pd_stable_points(params.alpha, points, stream)


def _build_theta_biased(params, k, points, stream):
    return sample_pd_theta_biased(as_pd(params, "pd-theta-biased"), k, stream)


def _build_pd0(params, k, points, stream):
    return sample_pd0_exp_weights(params.a1, k, stream)


def _build_ram0(params, k, points, stream):
    return sample_ram0_biased_exp(params.a1, params.c, k, stream)


def _build_dickman(params, k, points, stream):
    return sample_dickman_partition(params.a1, k, stream)


def _build_mixed(params, k, points, stream):
    return sample_pd_theta_mixed_poisson(as_pd(params, "pd-mixed"), points, stream)


def _build_xi(params, k, points, stream):
    return sample_xi_thinned(params.alpha, points, stream).partition


def _build_eta_prime(params, k, points, stream):
    return sample_eta_prime(params.alpha, k, stream)


@dataclass(frozen=True)
class Representation:
    """A named sampler. ``size_biased`` says whether its natural order is size-biased in law."""

    name: str
    exact: bool
    size_biased: bool
    build: Callable
    check: Callable
    summary: str

    def validate(self, params):
        self.check(params, self.name)


REPRESENTATIONS = {
    rep.name: rep
    for rep in (
        Representation("ram-stick", True, True, _build_stick, _check_any,
                       "stick-breaking Y_n ~ beta(c, a_n)"),
        Representation("ram-perpetuity", True, True, _build_perpetuity, _check_any,
                       "gamma/beta perpetuity with exact tail closure"),
        Representation("pd-stable", False, False, _build_stable, _check_stable,
                       "PD(alpha, 0) from stable jumps Gamma_j^(-1/alpha), nonincreasing"),
        Representation("pd-theta-biased", True, True, _build_theta_biased, _check_theta_biased,
                       "PD(alpha, theta) from gamma(theta/alpha + 1)-started sums"),
        Representation("pd0-exp", True, True, _build_pd0, _check_pd0,
                       "PD(0, theta) from exponential weights"),
        Representation("ram0-biased-exp", True, True, _build_ram0, _check_ram0,
                       "RAM(0, a, c) from biased exponentials"),
        Representation("dickman", True, True, _build_dickman, _check_pd0,
                       "PD(0, a) as Dickman subordinator intervals"),
        Representation("pd-mixed", False, True, _build_mixed, _check_mixed,
                       "PD(alpha, theta) from M_D with D ~ gamma(theta/alpha)"),
        Representation("xi-thinned", False, True, _build_xi, _check_stable,
                       "PD(alpha, 0) from the thinned xi process at an exponential time"),
        Representation("eta-prime", True, True, _build_eta_prime, _check_eta_prime,
                       "PD(alpha, alpha) remainder partition"),
    )
}


def get_representation(name):
    try:
        return REPRESENTATIONS[name]
    except KeyError:
        known = ", ".join(REPRESENTATIONS)
        raise UnknownRepresentationError(f"unknown representation {name!r}; choose one of: {known}") from None


def sample_row(name, params, k, points, stream):
    """First k atoms in the sampler's own order, then the mass beyond them."""
    head, rest = get_representation(name).build(params, k, points, stream).prefix(k)
    return np.append(head, rest)


def comparison_row(name, params, k, points, stream):
    """Like ``sample_row`` but in size-biased order, permuting when the sampler's order is not."""
    rep = get_representation(name)
    p = rep.build(params, k, points, stream)
    if not rep.size_biased or p.order is Order.NONINCREASING:
        p = size_biased_permutation(p, stream, residual_tolerance=COMPARISON_RESIDUAL, method="race")
    head, rest = p.prefix(k)
    return np.append(head, rest)


def _run_chunk(task, master_seed, lane, start, stop):
    rows = [np.atleast_1d(task(make_stream(master_seed, stream_index(lane, i)))) for i in range(start, stop)]
    return np.vstack(rows)


def _run_job(job):
    return _run_chunk(*job)


def replica_chunks(replicas, chunk_size=DEFAULT_CHUNK_SIZE):
    """Static contiguous index ranges covering 0..replicas-1."""
    return [(start, min(start + chunk_size, replicas)) for start in range(0, replicas, chunk_size)]


def run_replicas(task, replicas, master_seed, lane=0, workers=1, chunk_size=DEFAULT_CHUNK_SIZE, progress_callback=None):
    """Evaluate ``task(stream)`` for every replica; rows come back in replica order.

    ``task`` must be picklable (a module-level function or a ``functools.partial``
    of one) when ``workers > 1``. ``progress_callback(done, total)`` is called
    after each finished chunk.
    """
    chunks = replica_chunks(replicas, chunk_size)
    jobs = [(task, master_seed, lane, start, stop) for start, stop in chunks]
    log.debug("lane %d: %d replicas in %d chunks on %d worker(s)", lane, replicas, len(chunks), workers)

    blocks = []
    done = 0
    if workers > 1 and len(jobs) > 1:
        with mp.Pool(processes=workers) as pool:
            for (start, stop), block in zip(chunks, pool.imap(_run_job, jobs)):
                blocks.append(block)
                done += stop - start
                if progress_callback:
                    progress_callback(done, replicas)
    else:
        for job in jobs:
            blocks.append(_run_job(job))
            done += job[4] - job[3]
            if progress_callback:
                progress_callback(done, replicas)
    return np.vstack(blocks)


def run_representation(name, params, k, replicas, master_seed, *, lane=0, points=2000, workers=1,
                       chunk_size=DEFAULT_CHUNK_SIZE, size_biased=False, progress_callback=None):
    """Replica matrix (replicas x (k + 1)) for one representation."""
    rep = get_representation(name)
    rep.validate(params)
    if k < 1:
        raise InvalidParameterError("k must be >= 1")
    if not rep.exact and points < k:
        raise InvalidParameterError(f"{name} needs --points >= k (got points={points}, k={k})")
    row = comparison_row if size_biased else sample_row
    task = partial(row, name, params, k, points)
    return run_replicas(task, replicas, master_seed, lane, workers, chunk_size, progress_callback)


EXCURSION_COLUMNS = ("e", "l", "b", "a", "g", "d", "delta", "log_delta")


def excursion_row(method, alpha, k, points, stream):
    """Septuple fields; the closed form is normalized by e and has no local time."""
    if method == "constructive":
        t = sample_septuple_constructive(alpha, points, stream)
        return [t.e, t.l, t.b, t.a, t.g, t.d, t.delta, t.log_delta]
    if method == "closed":
        t, _ = sample_sextuple_closed(alpha, k, stream)
        return [t.e, np.nan, t.b, t.a, t.g, t.d, t.delta, t.log_delta]
    raise InvalidParameterError(f"unknown excursion method {method!r}; use constructive or closed")


def occupation_row(alpha, tolerance, stream):
    return list(sample_occupation_fraction(alpha, None, stream, tolerance))
