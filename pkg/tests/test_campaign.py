import math

import numpy as np
import pytest

from masspart.campaign import (
    EXCURSION_COLUMNS,
    LANE_BITS,
    REPRESENTATIONS,
    comparison_row,
    excursion_row,
    get_representation,
    replica_chunks,
    resolve_params,
    run_replicas,
    run_representation,
    sample_row,
    stream_index,
)
from masspart.config import EXACT_GATE
from masspart.errors import IncompatibleParamsError, InvalidParameterError, UnknownRepresentationError
from masspart.partition import Order
from masspart.representations import PdParams, RamParams, pd_to_ram
from masspart.stattest import ks_two_sample

HALF = pd_to_ram(PdParams(0.5, 0.0))


def uniform_task(stream):
    return stream.uniform(3)


class TestStreamIndex:
    def test_lane_in_high_bits(self):
        assert stream_index(0, 5) == 5
        assert stream_index(3, 7) == (3 << LANE_BITS) | 7

    def test_ranges(self):
        with pytest.raises(InvalidParameterError):
            stream_index(-1, 0)
        with pytest.raises(InvalidParameterError):
            stream_index(0, 2**LANE_BITS)


class TestResolveParams:
    def test_theta_form(self):
        assert resolve_params(0.5, theta=0.0) == HALF

    def test_ram_form(self):
        assert resolve_params(1.5, a1=1.0, c=2.0) == RamParams(1.5, 1.0, 2.0)

    def test_both_forms_rejected(self):
        with pytest.raises(InvalidParameterError):
            resolve_params(0.5, a1=1.0, c=0.5, theta=0.5)

    def test_half_ram_form_rejected(self):
        with pytest.raises(InvalidParameterError):
            resolve_params(0.5, a1=1.0)


class TestRegistry:
    def test_known_names(self):
        assert set(REPRESENTATIONS) == {
            "ram-stick", "ram-perpetuity", "pd-stable", "pd-theta-biased", "pd0-exp",
            "ram0-biased-exp", "dickman", "pd-mixed", "xi-thinned", "eta-prime",
        }

    def test_unknown_name(self):
        with pytest.raises(UnknownRepresentationError):
            get_representation("chinese-restaurant")

    @pytest.mark.parametrize(
        "name, params",
        [
            ("pd-stable", pd_to_ram(PdParams(0.5, 0.5))),
            ("pd-stable", RamParams(1.2, 1.0, 1.0)),
            ("pd0-exp", HALF),
            ("ram0-biased-exp", HALF),
            ("pd-mixed", HALF),
            ("eta-prime", HALF),
            ("pd-theta-biased", RamParams(0.5, 1.0, 2.0)),
        ],
    )
    def test_incompatible_params(self, name, params):
        with pytest.raises(IncompatibleParamsError):
            get_representation(name).validate(params)

    def test_stable_rows_are_permuted_for_comparison(self, stream):
        row = comparison_row("pd-stable", HALF, 3, 2000, stream)
        assert row.shape == (4,)
        assert abs(row.sum() - 1.0) <= 1e-9

    def test_sample_row_keeps_native_order(self, stream):
        row = sample_row("pd-stable", HALF, 4, 200, stream)
        assert np.all(np.diff(row[:4]) <= 0)
        assert get_representation("pd-stable").build(HALF, 4, 200, stream).order is Order.NONINCREASING


class TestRunReplicas:
    def test_chunks_cover_range(self):
        assert replica_chunks(10, 4) == [(0, 4), (4, 8), (8, 10)]

    def test_deterministic(self):
        a = run_replicas(uniform_task, 300, 0xC0FFEE, lane=2, chunk_size=64)
        b = run_replicas(uniform_task, 300, 0xC0FFEE, lane=2, chunk_size=64)
        assert a.shape == (300, 3)
        assert a.tobytes() == b.tobytes()

    def test_chunking_does_not_change_results(self):
        a = run_replicas(uniform_task, 300, 1, chunk_size=7)
        b = run_replicas(uniform_task, 300, 1, chunk_size=300)
        assert a.tobytes() == b.tobytes()

    def test_worker_count_does_not_change_results(self):
        one = run_representation("ram-stick", HALF, 3, 1000, 5, lane=1, workers=1, chunk_size=100)
        two = run_representation("ram-stick", HALF, 3, 1000, 5, lane=1, workers=2, chunk_size=100)
        assert one.tobytes() == two.tobytes()

    def test_lanes_are_independent(self):
        a = run_replicas(uniform_task, 100, 1, lane=1)
        b = run_replicas(uniform_task, 100, 1, lane=2)
        assert not np.array_equal(a, b)

    def test_progress_callback(self):
        calls = []
        run_replicas(uniform_task, 250, 1, chunk_size=100, progress_callback=lambda done, total: calls.append((done, total)))
        assert calls == [(100, 250), (200, 250), (250, 250)]


class TestRunRepresentation:
    def test_rows_sum_to_one(self):
        rows = run_representation("ram-perpetuity", RamParams(1.5, 1.0, 2.0), 5, 200, 9)
        assert rows.shape == (200, 6)
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-9)

    def test_points_must_cover_k(self):
        with pytest.raises(InvalidParameterError):
            run_representation("pd-stable", HALF, 10, 10, 1, points=5)

    def test_k_positive(self):
        with pytest.raises(InvalidParameterError):
            run_representation("ram-stick", HALF, 0, 10, 1)

    def test_stick_and_theta_biased_agree(self):
        pd = pd_to_ram(PdParams(0.3, 0.7))
        stick = run_representation("ram-stick", pd, 1, 20_000, 11, lane=1)
        biased = run_representation("pd-theta-biased", pd, 1, 20_000, 11, lane=2)
        assert ks_two_sample(stick[:, 0], biased[:, 0]).p_value >= EXACT_GATE


class TestExcursionRow:
    def test_closed_has_no_local_time(self, stream):
        row = excursion_row("closed", 0.5, 3, 100, stream)
        assert len(row) == len(EXCURSION_COLUMNS) == 8
        assert row[-1] == pytest.approx(math.log(row[6]))
        assert np.isnan(row[1])
        assert row[0] == 1.0

    def test_unknown_method(self, stream):
        with pytest.raises(InvalidParameterError):
            excursion_row("path", 0.5, 3, 100, stream)
