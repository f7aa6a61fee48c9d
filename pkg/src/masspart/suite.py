"""The certification suite: every distributional identity checked under one master seed.

Groups run in order; each group Bonferroni-corrects its KS gates over the
number of KS tests it holds. z-checks use the fixed |z| <= 5 rule.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .campaign import COMPARISON_RESIDUAL, run_replicas, run_representation
from .config import APPROX_GATE, EXACT_GATE, OCCUPATION_RESIDUAL, SUM_TOLERANCE
from .errors import InvalidParameterError
from .excursion import (
    RATIO_FIELDS,
    bfry_cdf,
    sample_occupation_fraction,
    sample_septuple_constructive,
    sample_sextuple_closed,
)
from .export import provenance
from .partition import size_biased_permutation
from .randkit import (
    arcsine_cdf,
    beta_cdf,
    exponential_cdf,
    gamma_cdf,
    kolmogorov_sf,
    reg_inc_beta,
    reg_inc_gamma,
    reg_inc_gamma_upper,
)
from .representations import (
    PdParams,
    RamParams,
    brute_force_tail,
    pd_to_ram,
    sample_pd0_limit_of_mvee,
    sample_ram_perpetuity,
    sample_xi_thinned,
)
from .stattest import correlation_check, ks_one_sample, ks_two_sample

log = logging.getLogger(__name__)

MIN_SUITE_REPLICAS = 100
SPECIAL_TOLERANCE = 1e-10
STICK_PD = ((0.5, 0.0), (0.5, 0.5), (0.0, 1.0), (0.3, 0.7))
BEYOND_PD = RamParams(1.5, 1.0, 2.0)
XI_ALPHAS = (0.3, 0.5, 0.7)
DICKMAN_A = (1.0, 2.5)
SWEEP_ALPHAS = (0.05, 0.02, 0.01)
SWEEP_POINTS = 400
TAIL_DEPTH = 1000
INVARIANCE_REPLICAS = 2048
INVARIANCE_WORKERS = (1, 8)
SEXTUPLE_ATOMS = 8
GROUP_BUDGET_SECONDS = 60.0


@dataclass(frozen=True)
class CheckReport:
    """A deterministic pass/fail check (tolerance, monotonicity, invariance)."""

    test_name: str
    passed: bool
    statistic: float
    detail: str = ""
    seed_record: str | None = None

    def to_dict(self):
        return {
            "test_name": self.test_name,
            "kind": "check",
            "statistic": self.statistic,
            "p_value": None,
            "n": None,
            "passed": self.passed,
            "detail": self.detail,
            "seed_record": self.seed_record,
        }


@dataclass
class GroupResult:
    group: int
    title: str
    bonferroni_m: int
    reports: list = field(default_factory=list)
    elapsed_seconds: float = 0.0
    budget_seconds: float = GROUP_BUDGET_SECONDS

    @property
    def passed(self):
        return all(r.passed for r in self.reports)

    def to_dict(self):
        return {
            "group": self.group,
            "title": self.title,
            "bonferroni_m": self.bonferroni_m,
            "passed": self.passed,
            "reports": [r.to_dict() for r in self.reports],
            "elapsed_seconds": self.elapsed_seconds,
            "budget_seconds": self.budget_seconds,
            "over_budget": self.elapsed_seconds > self.budget_seconds,
        }


# -- replica tasks (module level so worker processes can unpickle them) ------

def _denominator_task(params, n_terms, stream):
    return sample_ram_perpetuity(params, n_terms, stream, tail_closure=True).scale


def _tail_task(params, n, stream):
    return brute_force_tail(params, n, TAIL_DEPTH, stream)


def _xi_task(alpha, points, stream):
    draw = sample_xi_thinned(alpha, points, stream)
    atoms = draw.partition.atoms
    return [atoms[0], atoms[1], draw.a_frac, draw.b_over_gamma, draw.gamma_total]


def _septuple_task(alpha, points, stream):
    t = sample_septuple_constructive(alpha, points, stream)
    return np.append(t.ratios(), t.delta)


def _sextuple_task(alpha, k, stream):
    fields, part = sample_sextuple_closed(alpha, k, stream)
    return np.append(fields.ratios(), part.total)


def _occupation_task(alpha, tolerance, stream):
    return list(sample_occupation_fraction(alpha, None, stream, tolerance))


def _limit_task(theta, alpha, points, stream):
    p = sample_pd0_limit_of_mvee(theta, alpha, points, stream)
    return size_biased_permutation(p, stream, residual_tolerance=COMPARISON_RESIDUAL, method="race").atoms[0]


class SuiteRunner:
    def __init__(self, config, progress_callback=None):
        if config.replicas < MIN_SUITE_REPLICAS:
            raise InvalidParameterError(f"the suite needs at least {MIN_SUITE_REPLICAS} replicas")
        self.config = config
        self.progress_callback = progress_callback

    # helpers ---------------------------------------------------------------

    def seed_record(self, lane):
        return f"seed={self.config.master_seed:#x} lane={lane}"

    def draw(self, task, lane):
        c = self.config
        return run_replicas(task, c.replicas, c.master_seed, lane, c.workers, c.chunk_size)

    def rows(self, name, params, k, lane, size_biased=False, points=None):
        c = self.config
        return run_representation(
            name, params, k, c.replicas, c.master_seed, lane=lane, points=points or c.points,
            workers=c.workers, chunk_size=c.chunk_size, size_biased=size_biased,
        )

    def gate(self, base, m):
        return self.config.gate(base) / m

    # groups ----------------------------------------------------------------

    def group_stick_marginals(self, group):
        m = 2 * len(STICK_PD)
        gate = self.gate(EXACT_GATE, m)
        for i, (alpha, theta) in enumerate(STICK_PD):
            lane = 100 + i
            rows = self.rows("ram-stick", pd_to_ram(PdParams(alpha, theta)), 2, lane)
            y1 = rows[:, 0]
            y2 = rows[:, 1] / (1.0 - rows[:, 0])
            tag = f"PD({alpha},{theta})"
            group.reports.append(ks_one_sample(y1, beta_cdf(1 - alpha, alpha + theta), gate,
                                               self.seed_record(lane), f"stick Y1 {tag}"))
            group.reports.append(ks_one_sample(y2, beta_cdf(1 - alpha, 2 * alpha + theta), gate,
                                               self.seed_record(lane), f"stick Y2 {tag}"))

    def group_perpetuity(self, group):
        cases = [pd_to_ram(PdParams(a, t)) for a, t in STICK_PD] + [BEYOND_PD]
        gate = self.gate(EXACT_GATE, 2 * len(cases))
        for i, params in enumerate(cases):
            lane_a, lane_b = 200 + 2 * i, 201 + 2 * i
            stick = self.rows("ram-stick", params, 2, lane_a)
            perp = self.rows("ram-perpetuity", params, 2, lane_b)
            record = f"{self.seed_record(lane_a)} / lane={lane_b}"
            for j in range(2):
                group.reports.append(ks_two_sample(perp[:, j], stick[:, j], gate, record,
                                                   f"perpetuity vs stick atom{j + 1} {params}"))

    def group_tail_closure(self, group):
        gate = self.gate(EXACT_GATE, 4)
        half = RamParams(0.5, 0.5, 0.5)
        for i, params in enumerate((half, BEYOND_PD)):
            lane = 300 + i
            scale = self.draw(partial(_denominator_task, params, 3), lane)[:, 0]
            group.reports.append(ks_one_sample(scale, gamma_cdf(params.c + params.a1), gate,
                                               self.seed_record(lane), f"closure denominator {params}"))
        for n in (3, 4):
            lane = 310 + n
            tails = self.draw(partial(_tail_task, half, n), lane)[:, 0]
            group.reports.append(ks_one_sample(tails, gamma_cdf(float(half.a(n))), gate,
                                               self.seed_record(lane), f"brute-force tail n={n} {half}"))

    def group_xi(self, group):
        gate = self.gate(APPROX_GATE, 2 * len(XI_ALPHAS))
        for i, alpha in enumerate(XI_ALPHAS):
            lane_a, lane_b = 400 + 2 * i, 401 + 2 * i
            xi = self.draw(partial(_xi_task, alpha, self.config.points), lane_a)
            stick = self.rows("ram-stick", RamParams(alpha, alpha, 1 - alpha), 1, lane_b)
            group.reports.append(ks_two_sample(xi[:, 0], stick[:, 0], gate,
                                               f"{self.seed_record(lane_a)} / lane={lane_b}",
                                               f"xi first atom vs stick alpha={alpha}"))
            group.reports.append(ks_one_sample(xi[:, 2], beta_cdf(1 - alpha, alpha), gate,
                                               self.seed_record(lane_a), f"A/Gamma alpha={alpha}"))

    def group_gamma(self, group):
        lane = 500
        xi = self.draw(partial(_xi_task, 0.5, self.config.points), lane)
        record = self.seed_record(lane)
        group.reports.append(ks_one_sample(xi[:, 4], exponential_cdf, self.gate(EXACT_GATE, 1), record,
                                           "Gamma_total exponential alpha=0.5"))
        group.reports.append(correlation_check(xi[:, 4], xi[:, 1], record, "Gamma_total vs first completed jump"))
        group.reports.append(correlation_check(xi[:, 4], xi[:, 2], record, "Gamma_total vs A/Gamma"))

    def group_excursion(self, group):
        alpha = 0.5
        m = len(RATIO_FIELDS) + 2
        approx, exact = self.gate(APPROX_GATE, m), self.gate(EXACT_GATE, m)
        lane_c, lane_s = 600, 601
        constructive = self.draw(partial(_septuple_task, alpha, self.config.points), lane_c)
        closed = self.draw(partial(_sextuple_task, alpha, SEXTUPLE_ATOMS), lane_s)
        record = f"{self.seed_record(lane_c)} / lane={lane_s}"
        for j, name in enumerate(RATIO_FIELDS):
            group.reports.append(ks_two_sample(closed[:, j], constructive[:, j], approx, record,
                                               f"{name}/e constructive vs closed"))
        g_index = RATIO_FIELDS.index("g")
        group.reports.append(ks_one_sample(closed[:, g_index], beta_cdf(alpha, 1 - alpha), exact,
                                           self.seed_record(lane_s), "Q beta(alpha, 1-alpha)"))
        group.reports.append(ks_one_sample(constructive[:, -1], partial(bfry_cdf, alpha), exact,
                                           self.seed_record(lane_c), "Delta BFRY"))
        drift = float(np.max(np.abs(closed[:, -1] + closed[:, 0] - 1.0)))
        group.reports.append(CheckReport("Q eta' mass plus A/T equals one", drift <= SUM_TOLERANCE, drift,
                                         f"max drift {drift:.3g}", self.seed_record(lane_s)))

    def group_occupation(self, group):
        lane = 700
        draws = self.draw(partial(_occupation_task, 0.5, OCCUPATION_RESIDUAL), lane)
        group.reports.append(ks_one_sample(draws[:, 0], arcsine_cdf, self.gate(EXACT_GATE, 1),
                                           self.seed_record(lane), "occupation fraction arcsine"))
        worst = float(np.max(draws[:, 1]))
        group.reports.append(CheckReport("occupation truncation residual", worst < OCCUPATION_RESIDUAL, worst,
                                         f"max residual {worst:.3g}", self.seed_record(lane)))

    def group_dickman(self, group):
        gate = self.gate(EXACT_GATE, 2 * len(DICKMAN_A))
        for i, a in enumerate(DICKMAN_A):
            params = RamParams(0.0, a, 1.0)
            lane_a, lane_b = 800 + 2 * i, 801 + 2 * i
            dickman = self.rows("dickman", params, 2, lane_a)
            expw = self.rows("pd0-exp", params, 2, lane_b)
            for j in range(2):
                group.reports.append(ks_two_sample(dickman[:, j], expw[:, j], gate,
                                                   f"{self.seed_record(lane_a)} / lane={lane_b}",
                                                   f"Dickman vs exp weights atom{j + 1} a={a}"))

    def group_mixed_and_limit(self, group):
        params = pd_to_ram(PdParams(0.5, 0.5))
        mixed = self.rows("pd-mixed", params, 1, 900, size_biased=True)
        stick = self.rows("ram-stick", params, 1, 901)
        group.reports.append(ks_two_sample(mixed[:, 0], stick[:, 0], self.gate(APPROX_GATE, 1),
                                           f"{self.seed_record(900)} / lane=901",
                                           "mixed-Poisson PD(0.5,0.5) vs stick"))

        reference = self.rows("pd0-exp", RamParams(0.0, 1.0, 1.0), 1, 910)[:, 0]
        stats = []
        for i, alpha in enumerate(SWEEP_ALPHAS):
            lane = 911 + i
            limit = self.draw(partial(_limit_task, 1.0, alpha, SWEEP_POINTS), lane)[:, 0]
            stats.append(ks_two_sample(limit, reference, 1.0).statistic)
        n = self.config.replicas
        se = 1.0 / math.sqrt(n / 2.0)
        monotone = all(later <= earlier + 2.0 * se for earlier, later in zip(stats, stats[1:]))
        detail = ", ".join(f"alpha={a}: D={d:.4f}" for a, d in zip(SWEEP_ALPHAS, stats))
        group.reports.append(CheckReport("alpha -> 0 sweep nonincreasing", monotone, stats[-1],
                                         f"{detail}; 2 SE = {2 * se:.4f}", self.seed_record(911)))

    def group_determinism(self, group):
        spot = [
            ("P(1, 0.1)", reg_inc_gamma(1.0, 0.1), -math.expm1(-0.1)),
            ("P(1, 1)", reg_inc_gamma(1.0, 1.0), -math.expm1(-1.0)),
            ("P(1, 10)", reg_inc_gamma(1.0, 10.0), -math.expm1(-10.0)),
            ("P(2, 3)", reg_inc_gamma(2.0, 3.0), 1.0 - 4.0 * math.exp(-3.0)),
            ("P(0.5, 50)", reg_inc_gamma(0.5, 50.0), 1.0),
            ("Q(1, 2)", reg_inc_gamma_upper(1.0, 2.0), math.exp(-2.0)),
            ("I(1, 1, 0.3)", reg_inc_beta(1.0, 1.0, 0.3), 0.3),
            ("I(2.5, 1.5, 0.3) symmetry", reg_inc_beta(2.5, 1.5, 0.3) + reg_inc_beta(1.5, 2.5, 0.7), 1.0),
            ("kolmogorov_sf(0)", kolmogorov_sf(0.0), 1.0),
        ]
        spot += [(f"I(0.5, 0.5, {x})", reg_inc_beta(0.5, 0.5, x), float(arcsine_cdf(x))) for x in (0.1, 0.5, 0.9)]
        for name, got, want in spot:
            err = abs(got - want) / max(1.0, abs(want))
            group.reports.append(CheckReport(f"special function {name}", err <= SPECIAL_TOLERANCE, err,
                                             f"got {got!r}, expected {want!r}"))

        c = self.config
        replicas = min(c.replicas, INVARIANCE_REPLICAS)
        params = RamParams(0.5, 0.5, 0.5)
        runs = [
            run_representation("ram-stick", params, 3, replicas, c.master_seed, lane=1000,
                               workers=w, chunk_size=max(1, replicas // 8))
            for w in INVARIANCE_WORKERS
        ]
        same = bool(np.array_equal(runs[0], runs[1]))
        group.reports.append(CheckReport("worker-count invariance", same, 0.0 if same else 1.0,
                                         f"{replicas} replicas, workers {INVARIANCE_WORKERS[0]} vs {INVARIANCE_WORKERS[1]}",
                                         self.seed_record(1000)))

    GROUPS = (
        ("stick-breaking marginals", "group_stick_marginals", 8),
        ("perpetuity equals stick-breaking", "group_perpetuity", 10),
        ("exact tail closure", "group_tail_closure", 4),
        ("generalized arcsine law of the xi partition", "group_xi", 6),
        ("Gamma exponentiality and independence", "group_gamma", 1),
        ("excursion tuples", "group_excursion", 7),
        ("occupation-time arcsine law", "group_occupation", 1),
        ("Dickman identity", "group_dickman", 4),
        ("mixed-Poisson and alpha -> 0 limit", "group_mixed_and_limit", 1),
        ("special functions and determinism", "group_determinism", 0),
    )

    def run(self, groups=None):
        """Run the selected groups (1-based; all by default) and return the JSON-ready payload."""
        selected = groups or range(1, len(self.GROUPS) + 1)
        unknown = [g for g in selected if not 1 <= g <= len(self.GROUPS)]
        if unknown:
            raise InvalidParameterError(f"suite groups are numbered 1..{len(self.GROUPS)}, got {unknown}")
        started = time.perf_counter()
        results = []
        for number in selected:
            title, method, m = self.GROUPS[number - 1]
            log.info("suite group %d: %s", number, title)
            if self.progress_callback:
                self.progress_callback(number, len(self.GROUPS), title)
            group = GroupResult(number, title, m)
            t0 = time.perf_counter()
            getattr(self, method)(group)
            group.elapsed_seconds = time.perf_counter() - t0
            results.append(group)
            log.info("group %d %s in %.1fs", number, "passed" if group.passed else "FAILED", group.elapsed_seconds)
            if group.elapsed_seconds > group.budget_seconds:
                log.warning("group %d took %.1fs, over its %.0fs budget", number,
                            group.elapsed_seconds, group.budget_seconds)
        return {
            "provenance": provenance(
                seed=f"{self.config.master_seed:#x}",
                replicas=self.config.replicas,
                points=self.config.points,
                significance=self.config.significance,
            ),
            "passed": all(g.passed for g in results),
            "groups": [g.to_dict() for g in results],
            "elapsed_seconds": time.perf_counter() - started,
        }


def run_suite(config, groups=None, progress_callback=None):
    return SuiteRunner(config, progress_callback).run(groups)


def failing_tests(payload):
    return [
        (g["group"], r["test_name"])
        for g in payload["groups"]
        for r in g["reports"]
        if not r["passed"]
    ]
