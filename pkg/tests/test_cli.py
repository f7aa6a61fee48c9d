import json
import os

import pytest
from typer.testing import CliRunner

from masspart.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, app
from masspart.config import DEFAULT_WORKERS, RunConfig
from masspart.suite import GROUP_BUDGET_SECONDS

runner = CliRunner()


def invoke(*args, env=None):
    return runner.invoke(app, [str(a) for a in args], env=env)


def read_json(path):
    return json.loads(path.read_text(encoding="utf-8"))


def without_timings(payload):
    payload = dict(payload, elapsed_seconds=None)
    payload["groups"] = [dict(g, elapsed_seconds=None, over_budget=None) for g in payload["groups"]]
    return payload


class TestSample:
    def test_csv_layout(self, tmp_path):
        out = tmp_path / "stick.csv"
        result = invoke("sample", "ram-stick", "--alpha", 0.5, "--theta", 0, "-k", 5, "-n", 1000, "--out", out)
        assert result.exit_code == EXIT_OK, result.output
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0].startswith("# representation=ram-stick")
        assert lines[1] == "replica,atom1,atom2,atom3,atom4,atom5,residual"
        assert len(lines) == 1002
        assert all(len(line.split(",")) == 7 for line in lines[2:])

    def test_rerun_is_byte_identical(self, tmp_path):
        paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
        for path in paths:
            assert invoke("sample", "ram-perpetuity", "--alpha", 1.5, "--a1", 1, "--c", 2, "-n", 300,
                          "--seed", "0x2A", "--out", path).exit_code == EXIT_OK
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_seed_from_environment(self, tmp_path):
        flag, env = tmp_path / "flag.csv", tmp_path / "env.csv"
        assert invoke("sample", "ram-stick", "-n", 200, "--seed", 42, "--out", flag).exit_code == EXIT_OK
        assert invoke("sample", "ram-stick", "-n", 200, "--out", env, env={"MASSPART_SEED": "42"}).exit_code == EXIT_OK
        assert flag.read_bytes() == env.read_bytes()

    def test_json_format(self, tmp_path):
        out = tmp_path / "stable.json"
        result = invoke("sample", "pd-stable", "--alpha", 0.5, "-k", 3, "-n", 50, "--points", 200,
                        "--format", "json", "--out", out)
        assert result.exit_code == EXIT_OK, result.output
        payload = read_json(out)
        assert payload["columns"] == ["atom1", "atom2", "atom3", "residual"]
        assert len(payload["rows"]) == 50

    def test_stable_outside_range_is_usage_error(self, tmp_path):
        result = invoke("sample", "pd-stable", "--alpha", 1.2, "--out", tmp_path / "x.csv")
        assert result.exit_code == EXIT_USAGE

    def test_unknown_representation(self, tmp_path):
        result = invoke("sample", "hoppe-urn", "--out", tmp_path / "x.csv")
        assert result.exit_code == EXIT_USAGE

    def test_bad_seed(self, tmp_path):
        result = invoke("sample", "ram-stick", "--seed", "0xZZ", "--out", tmp_path / "x.csv")
        assert result.exit_code == EXIT_USAGE


class TestEquiv:
    def test_stick_matches_thinned_xi(self, tmp_path):
        out = tmp_path / "equiv.json"
        result = invoke("equiv", "ram-stick", "xi-thinned", "--alpha", 0.5, "-n", 5000, "--points", 500, "--out", out)
        assert result.exit_code == EXIT_OK, result.output
        report = read_json(out)
        assert report["passed"] and report["significance"] == pytest.approx(1e-2)
        assert report["n1"] == report["n2"] == 5000

    def test_stick_matches_dickman(self, tmp_path):
        out = tmp_path / "equiv.json"
        result = invoke("equiv", "ram-stick", "dickman", "--alpha", 0, "--theta", 2, "-n", 5000, "--out", out)
        assert result.exit_code == EXIT_OK, result.output
        assert read_json(out)["significance"] == pytest.approx(1e-3)

    def test_different_alpha_fails(self, tmp_path):
        out = tmp_path / "equiv.json"
        result = invoke("equiv", "ram-stick", "ram-stick", "--alpha", 0.5, "--alpha-b", 0.3, "-n", 2000, "--out", out)
        assert result.exit_code == EXIT_FAIL
        assert not read_json(out)["passed"]

    def test_unknown_component(self, tmp_path):
        result = invoke("equiv", "ram-stick", "pd-stable", "--component", "atom9", "--out", tmp_path / "x.json")
        assert result.exit_code == EXIT_USAGE


class TestOtherCommands:
    def test_excursion_closed(self, tmp_path):
        out = tmp_path / "exc.csv"
        result = invoke("excursion", "--method", "closed", "-k", 10, "-n", 100, "--out", out)
        assert result.exit_code == EXIT_OK, result.output
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[1] == "replica,e,l,b,a,g,d,delta,log_delta"
        assert len(lines) == 102

    def test_excursion_bad_method(self, tmp_path):
        assert invoke("excursion", "--method", "path", "--out", tmp_path / "x.csv").exit_code == EXIT_USAGE

    def test_check_assumption_ram(self, tmp_path):
        out = tmp_path / "a1.json"
        result = invoke("check-assumption", "--alpha", 0.5, "--a1", 0.5, "--c", 0.5, "--terms", 1000, "--out", out)
        assert result.exit_code == EXIT_OK, result.output
        report = read_json(out)
        assert report["cond_i_ok"]
        assert report["theoretical_exponent"] == pytest.approx(-1.0)

    def test_check_assumption_violation(self, tmp_path):
        seq = tmp_path / "seq.json"
        seq.write_text(json.dumps({"a": [1.0] + [5.0 + j for j in range(19)], "b": [1.0] * 20}), encoding="utf-8")
        result = invoke("check-assumption", "--sequences", seq, "--out", tmp_path / "a1.json")
        assert result.exit_code == EXIT_FAIL
        assert read_json(tmp_path / "a1.json")["first_violation"] == 1

    def test_excursion_json_to_configured_path(self, tmp_path):
        out = tmp_path / "nested" / "exc.json"
        result = invoke("excursion", "--method", "closed", "-k", 5, "-n", 20, "--format", "json", "--out", out)
        assert result.exit_code == EXIT_OK, result.output
        payload = read_json(out)
        assert payload["columns"][-1] == "log_delta"
        assert len(payload["rows"]) == 20

    def test_excursion_small_alpha_does_not_crash(self, tmp_path):
        out = tmp_path / "small.csv"
        result = invoke("excursion", "--method", "closed", "--alpha", 0.01, "-k", 1, "-n", 5000, "--workers", 1,
                        "--out", out)
        assert result.exit_code == EXIT_OK, result.output
        rows = [line.split(",") for line in out.read_text(encoding="utf-8").splitlines()[2:]]
        assert len(rows) == 5000
        assert all(row[-1] not in ("inf", "nan") for row in rows)

    def test_list(self):
        assert invoke("list").exit_code == EXIT_OK


class TestDefaults:
    def test_workers_default_to_cpu_count(self):
        assert DEFAULT_WORKERS == (os.cpu_count() or 1)
        assert RunConfig().workers == DEFAULT_WORKERS

    def test_unknown_format_is_usage_error(self, tmp_path):
        assert invoke("sample", "ram-stick", "--format", "xml", "--out", tmp_path / "x").exit_code == EXIT_USAGE


class TestSuite:
    def test_worker_count_does_not_change_report(self, tmp_path):
        payloads = []
        for workers in (1, 8):
            out = tmp_path / f"suite{workers}.json"
            result = invoke("suite", "-n", 100, "--group", 3, "--group", 10, "--workers", workers, "--out", out)
            assert result.exit_code in (EXIT_OK, EXIT_FAIL), result.output
            payloads.append(without_timings(read_json(out)))
        assert payloads[0] == payloads[1]
        assert [g["group"] for g in payloads[0]["groups"]] == [3, 10]
        assert all(g["budget_seconds"] == GROUP_BUDGET_SECONDS for g in payloads[0]["groups"])

    def test_strict_significance_fails_the_run(self, tmp_path):
        # at a 0.99 gate a single KS test passes only when p >= 0.99
        out = tmp_path / "strict.json"
        result = invoke("suite", "-n", 200, "--group", 5, "--group", 9, "--significance", 0.99, "--out", out)
        assert result.exit_code == EXIT_FAIL, result.output
        payload = read_json(out)
        assert not payload["passed"]
        failed = [r for g in payload["groups"] for r in g["reports"] if not r["passed"]]
        assert any(r["p_value"] is not None and r["p_value"] < 0.99 for r in failed)
        assert "FAILED" in result.output
        for report in failed:
            assert report["test_name"] in result.output

    def test_too_few_replicas(self, tmp_path):
        assert invoke("suite", "-n", 50, "--out", tmp_path / "s.json").exit_code == EXIT_USAGE

    def test_unknown_group(self, tmp_path):
        assert invoke("suite", "-n", 100, "--group", 11, "--out", tmp_path / "s.json").exit_code == EXIT_USAGE
