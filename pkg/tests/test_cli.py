import csv
import json
import math
from pathlib import Path

import pytest

from hydronls.cli import SCHEMA_VERSION, config_schema, load_config, main, run
from hydronls.fields import load_wfield

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, **blocks):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"schema": SCHEMA_VERSION, **blocks}))
    return path


def load_json(path):
    # parse_constant only fires on NaN/Infinity tokens
    return json.loads(Path(path).read_text(), parse_constant=lambda tok: pytest.fail(tok))


def all_numbers(obj):
    if isinstance(obj, dict):
        for v in obj.values():
            yield from all_numbers(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from all_numbers(v)
    elif isinstance(obj, (int, float)) and not isinstance(obj, bool):
        yield obj


SOLITARY = {
    "profile": {"kind": "ground", "n": 1},
    "flow": {"mode": "profile", "a0": 0.0, "gamma0": 1.0},
    "grid": {"n_dims": 1, "points_per_dim": 1024, "half_width": 32.0},
}


class TestClassify:
    def test_shipped_example(self, tmp_path):
        assert main(["classify", "--config", str(CONFIGS / "classify.json"),
                     "--out", str(tmp_path)]) == 0
        rep = load_json(tmp_path / "blowup.json")
        assert rep["regime"] == "blowup_i"
        assert rep["T"] == pytest.approx(2.0, abs=1e-12)

    def test_literal_discrepancy_is_reported(self, tmp_path):
        cfg = write_config(tmp_path, virial={"H": 1.0, "M0": 1.0, "M0p": -6.0})
        assert run("classify", cfg, tmp_path / "out") == 0
        rep = load_json(tmp_path / "out" / "blowup.json")
        assert rep["regime"] == "blowup_ii"
        assert rep["paper_T_consistent"] is False

    def test_no_collapse_writes_null_time(self, tmp_path):
        cfg = write_config(tmp_path, virial={"H": 1.0, "M0": 1.0, "M0p": 0.0})
        assert run("classify", cfg, tmp_path / "out") == 0
        rep = load_json(tmp_path / "out" / "blowup.json")
        assert rep["regime"] == "decay" and rep["T"] is None


class TestSweep:
    def test_regime_map_matches_case_table(self, tmp_path):
        assert run("sweep", CONFIGS / "sweep.json", tmp_path, threads=3) == 0
        with open(tmp_path / "regime_map.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 9
        for row in rows:
            H, M0p, K = float(row["H"]), float(row["M0p"]), float(row["K"])
            if K > 0:
                assert row["regime"] == "decay"
                continue
            collapses = H < 0 or (H >= 0 and M0p < 0)
            assert row["regime"].startswith("blowup") == collapses, row
            if collapses:
                T = float(row["T"])
                assert T > 0
                assert 4 * H * T**2 + M0p * T + float(row["M0"]) == pytest.approx(0, abs=1e-12)

    def test_thread_count_does_not_change_output(self, tmp_path):
        run("sweep", CONFIGS / "sweep.json", tmp_path / "one", threads=1)
        run("sweep", CONFIGS / "sweep.json", tmp_path / "four", threads=4)
        assert ((tmp_path / "one" / "regime_map.csv").read_bytes()
                == (tmp_path / "four" / "regime_map.csv").read_bytes())


class TestProfileAndConstruct:
    def test_profile_outputs(self, tmp_path):
        assert run("profile", CONFIGS / "dirichlet_profile.json", tmp_path) == 0
        meta = load_json(tmp_path / "profile.json")
        assert meta["u_center"] == pytest.approx(2.2093, abs=1e-4)
        assert (tmp_path / "profile.svg").read_text().startswith("<svg")
        with open(tmp_path / "profile.csv") as fh:
            assert next(csv.reader(fh))[:2] == ["r", "u"]

    def test_construct_outputs(self, tmp_path):
        assert run("construct", CONFIGS / "dirichlet_construct.json", tmp_path) == 0
        reports = load_json(tmp_path / "functionals.json")
        assert [r["t"] for r in reports] == [0.0, 0.1, 0.2]
        masses = [r["N"] for r in reports]
        assert max(masses) - min(masses) < 1e-10 * masses[0]
        snap = load_wfield(tmp_path / "snapshot_002.wfield")
        assert snap.time_tag == 0.2 and snap.grid.points_per_dim == 4096

    def test_rerun_is_byte_identical(self, tmp_path):
        for sub in ("a", "b"):
            assert run("construct", CONFIGS / "dirichlet_construct.json", tmp_path / sub) == 0
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
        for name in names:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_emitted_json_is_finite(self, tmp_path):
        run("construct", CONFIGS / "dirichlet_construct.json", tmp_path)
        nums = list(all_numbers(load_json(tmp_path / "functionals.json")))
        assert nums and all(math.isfinite(v) for v in nums)


class TestEvolveAndVerify:
    def test_evolve_writes_termination_record(self, tmp_path):
        cfg = write_config(tmp_path, **SOLITARY,
                           evolve={"dt": 1e-3, "t_end": 0.2, "snapshot_times": [0.1, 0.2]})
        assert run("evolve", cfg, tmp_path / "out") == 0
        rec = load_json(tmp_path / "out" / "termination.json")
        assert rec["reason"] == "completed" and rec["snapshot_times"] == [0.1, 0.2]
        assert load_wfield(tmp_path / "out" / "numeric_001.wfield").time_tag == 0.2

    def test_solitary_verify_passes(self, tmp_path):
        assert run("verify", CONFIGS / "solitary_verify.json", tmp_path) == 0
        verdict = load_json(tmp_path / "verdict.json")
        assert verdict["verdict"] == "pass"
        assert verdict["checks"]["l2_error"]["value"] <= 1e-5

    def test_failed_tolerance_exits_four(self, tmp_path):
        cfg = write_config(tmp_path, **SOLITARY, evolve={"dt": 1e-3, "t_end": 0.5},
                           verify={"l2_tol": 1e-12})
        assert run("verify", cfg, tmp_path / "out") == 4
        verdict = load_json(tmp_path / "out" / "verdict.json")
        assert verdict["verdict"] == "fail"
        assert verdict["checks"]["l2_error"]["pass"] is False

    def test_rate_checks_on_collapsing_solution(self, tmp_path):
        cfg = write_config(tmp_path, profile={"kind": "ground", "n": 1},
                           flow={"mode": "profile", "a0": -0.5, "gamma0": 1.0},
                           grid={"n_dims": 1, "points_per_dim": 4096, "half_width": 16.0},
                           evolve={"dt": 2e-4, "t_end": 0.1},
                           verify={"rate": {"count": 16}})
        assert run("verify", cfg, tmp_path / "out") == 0
        checks = load_json(tmp_path / "out" / "verdict.json")["checks"]
        assert checks["amplitude_exponent"]["value"] == pytest.approx(0.5, rel=0.02)
        assert checks["gradient_exponent"]["value"] == pytest.approx(2.0, rel=0.02)

    def test_rate_checks_need_collapse(self, tmp_path):
        cfg = write_config(tmp_path, **SOLITARY, evolve={"dt": 1e-3, "t_end": 0.1},
                           verify={"rate": {}})
        assert run("verify", cfg, tmp_path / "out") == 2
        assert load_json(tmp_path / "out" / "error.json")["reason"] == "config"


class TestFailures:
    def test_unknown_key_exits_two(self, tmp_path, capsys):
        cfg = write_config(tmp_path, virial={"H": 0.0, "M0": 1.0, "M0p": -1.0, "typo": 1})
        assert run("classify", cfg, tmp_path / "out") == 2
        err = load_json(tmp_path / "out" / "error.json")
        assert err["reason"] == "config" and "typo" in err["message"]
        assert json.loads(capsys.readouterr().out)["exit_code"] == 2

    @pytest.mark.parametrize("doc", [
        {"schema": "hydronls/0", "virial": {"H": 0.0, "M0": 1.0, "M0p": -1.0}},
        {"schema": SCHEMA_VERSION},
        {"schema": SCHEMA_VERSION, "virial": {"H": 0.0, "M0": -1.0, "M0p": -1.0}},
        {"schema": SCHEMA_VERSION, "virial": {"H": 0.0, "M0": 1.0, "M0p": -1.0}, "extra": {}},
    ])
    def test_invalid_documents(self, tmp_path, doc):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(doc))
        assert run("classify", path, tmp_path / "out") == 2

    def test_unreadable_config(self, tmp_path):
        assert run("classify", tmp_path / "missing.json", tmp_path / "out") == 2
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run("classify", bad, tmp_path / "out") == 2

    def test_solver_failure_exits_three(self, tmp_path):
        cfg = write_config(tmp_path, profile={"kind": "ground", "n": 1},
                           flow={"mode": "profile", "a0": 0.0, "gamma0": 1.0},
                           grid={"n_dims": 1, "points_per_dim": 256, "half_width": 4.0})
        assert run("construct", cfg, tmp_path / "out") == 3
        assert load_json(tmp_path / "out" / "error.json")["reason"] == "containment"

    def test_time_past_collapse_exits_three(self, tmp_path):
        cfg = write_config(tmp_path, profile={"kind": "ground", "n": 1},
                           flow={"mode": "profile", "a0": -0.5},
                           solution={"times": [2.5]},
                           grid={"n_dims": 1, "points_per_dim": 1024, "half_width": 32.0})
        assert run("construct", cfg, tmp_path / "out") == 3
        assert load_json(tmp_path / "out" / "error.json")["reason"] == "validity"

    def test_schema_lists_required_blocks(self):
        assert set(config_schema("verify")["required"]) == {"schema", "profile", "flow", "grid",
                                                            "evolve"}


@pytest.mark.parametrize("name, command", [
    ("classify", "classify"), ("sweep", "sweep"), ("dirichlet_profile", "profile"),
    ("dirichlet_construct", "construct"), ("solitary_verify", "verify"),
    ("collapse_k0_verify", "verify"),
])
def test_shipped_configs_validate(name, command):
    assert load_config(CONFIGS / f"{name}.json", command)["schema"] == SCHEMA_VERSION
