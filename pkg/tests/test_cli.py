import json

import numpy as np
import pytest
import yaml

from reinsnet.cli import main
from reinsnet.network import Contract, Firm, ReinsuranceNetwork, Role
from reinsnet.serialize import load_network, save_network
from reinsnet.synthesis import SynthesisConfig, core_ids, core_periphery_cessions, write_cessions


def run(*argv):
    return main([str(a) for a in argv])


def read_json(path):
    return json.loads(path.read_text())


@pytest.fixture
def spiral_file(tmp_path):
    firms = tuple(Firm(x, Role.PRIMARY, 50.0) for x in "ABC")
    contracts = (Contract(1, 0, 1.0, 0.0, 10.0), Contract(2, 1, 1.0, 0.0, 10.0),
                 Contract(0, 2, 1.0, 0.0, 10.0))
    return save_network(ReinsuranceNetwork(firms, contracts, np.array([5.0, 0, 0])),
                        tmp_path / "spiral.json")


@pytest.fixture
def cycle_file(tmp_path):
    firms = (Firm("A"), Firm("B"))
    net = ReinsuranceNetwork(firms, (Contract(1, 0, 1.0), Contract(0, 1, 1.0)), np.array([1.0, 0]))
    return save_network(net, tmp_path / "cycle.json")


@pytest.fixture
def cession_file(tmp_path):
    path = tmp_path / "cessions.csv"
    path.write_text("ceding_firm,reinsurer,premium_ceded\nP1,R1,30\nP1,R2,10\nP2,R1,5\n")
    return path


def test_build_proportional(tmp_path, cession_file):
    out = tmp_path / "net.json"
    assert run("--quiet", "build", cession_file, "--kind", "proportional", "--out", out) == 0
    net = load_network(out)
    assert len(net.contracts) == 3 and net.kind == "proportional"
    data = read_json(out)
    assert data["manifest"]["command"] == "build"
    assert "cessions.csv" in data["manifest"]["inputs"]


def test_build_xl_single_reinsurer(tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("ceding_firm,reinsurer,premium_ceded\nP,R,100\n")
    assert run("--quiet", "--out-dir", tmp_path, "build", path) == 0
    (k,) = load_network(tmp_path / "network-xl.json").contracts
    assert (k.layer, k.deductible, k.cap, k.rate) == (0, 250.0, 500.0, 1.0)


def test_build_bad_csv_names_line(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("ceding_firm,reinsurer,premium_ceded\nP,R,100\nP,Q,abc\n")
    assert run("--out-dir", tmp_path, "build", path) == 2
    assert "line 3" in capsys.readouterr().err


def test_missing_config_key(tmp_path, cession_file, capsys):
    raw = SynthesisConfig().to_dict()
    del raw["premium_to_limit"]
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump(raw))
    assert run("--config", cfg, "--out-dir", tmp_path, "build", cession_file) == 2
    assert "premium_to_limit" in capsys.readouterr().err


def test_missing_input_is_io_error(tmp_path):
    assert run("--quiet", "--out-dir", tmp_path, "build", tmp_path / "nope.csv") == 4


def test_solve_spiral(tmp_path, spiral_file):
    assert run("--quiet", "--out-dir", tmp_path, "solve", spiral_file) == 0
    out = read_json(tmp_path / "solution.json")
    assert out["status"] == "converged"
    assert [c["liability"] for c in out["contracts"]] == ["10.0", "10.0", "10.0"]
    assert out["net_liabilities"] == ["0.0", "0.0", "0.0"]
    assert out["manifest"]["command"] == "solve"


@pytest.mark.parametrize("algorithm", ["1", "3"])
def test_solve_spiral_by_algorithm(tmp_path, spiral_file, algorithm):
    assert run("--quiet", "--out-dir", tmp_path, "solve", spiral_file, "--algorithm", algorithm) == 0
    assert read_json(tmp_path / "solution.json")["algorithm"] == int(algorithm)


def test_solve_zero_shock(tmp_path, spiral_file):
    assert run("--quiet", "--out-dir", tmp_path, "solve", spiral_file, "--shock", "0") == 0
    out = read_json(tmp_path / "solution.json")
    assert {c["liability"] for c in out["contracts"]} == {"0.0"}


def test_solve_shock_file(tmp_path, spiral_file):
    sh = tmp_path / "shock.csv"
    sh.write_text("firm,shock\nB,5\n")
    assert run("--quiet", "--out-dir", tmp_path, "solve", spiral_file, "--shock", sh) == 0
    out = read_json(tmp_path / "solution.json")
    assert out["shock"] == ["0.0", "5.0", "0.0"]
    js = tmp_path / "shock.json"
    js.write_text(json.dumps({"Z": 1}))
    assert run("--quiet", "--out-dir", tmp_path, "solve", spiral_file, "--shock", js) == 2


def test_solve_divergence_exit(tmp_path, cycle_file):
    assert run("--quiet", "--out-dir", tmp_path, "solve", cycle_file) == 3
    out = read_json(tmp_path / "solution.json")
    assert out["status"] == "diverging"
    assert out["structure"]["hundred_percent_cycle"] is True
    assert run("--quiet", "--out-dir", tmp_path, "solve", cycle_file, "--algorithm", "2") == 3
    assert read_json(tmp_path / "solution.json")["status"] == "structural-failure"


def test_diagnose_exit_codes(tmp_path, cycle_file, cession_file):
    assert run("--quiet", "--out-dir", tmp_path, "diagnose", cycle_file) == 3
    rep = read_json(tmp_path / "diagnosis.json")
    assert rep["certificate"] == "no-certificate" and rep["rho_full"] >= 1 - 1e-9
    net = tmp_path / "prop.json"
    assert run("--quiet", "build", cession_file, "--kind", "proportional", "--out", net) == 0
    assert run("--quiet", "--out-dir", tmp_path, "diagnose", net) == 0
    assert read_json(tmp_path / "diagnosis.json")["certificate"] == "unique-for-all-shocks"


def test_diagnose_skips_large_omega(tmp_path):
    firms = tuple(Firm(f"F{i}") for i in range(5))
    contracts = tuple(Contract(i, j, 0.2, 1.0, 5.0) for i in range(5) for j in range(5) if i != j)
    path = save_network(ReinsuranceNetwork(firms, contracts), tmp_path / "k5.json")
    run("--quiet", "--out-dir", tmp_path, "diagnose", path, "--omega-limit", "10")
    assert read_json(tmp_path / "diagnosis.json")["omega_skipped"] is True


@pytest.fixture
def synthetic_csv(tmp_path):
    ces = core_periphery_cessions(30, 6, seed=0)
    path = tmp_path / "synthetic.csv"
    write_cessions(ces, path)
    return path, ",".join(core_ids(ces))


def test_study_perturbation_delta_zero(tmp_path, synthetic_csv):
    path, core = synthetic_csv
    assert run("--quiet", "--out-dir", tmp_path, "study", path, "--mode", "perturbation",
               "--reinsurers", core, "--delta", 0, "--samples", 1) == 0
    rows = (tmp_path / "perturbation_firms.csv").read_text().splitlines()
    assert rows[0].startswith("# manifest:")
    body = [r.split(",") for r in rows[2:]]
    assert all(float(r[4]) == 0 and float(r[5]) == 0 and r[6] == "0" for r in body)


def test_study_compare_zero_shocks(tmp_path, synthetic_csv):
    path, core = synthetic_csv
    raw = SynthesisConfig().to_dict()
    raw.update(shock_1_in_100=0.0, shock_1_in_250=0.0)
    cfg = tmp_path / "zero.yaml"
    cfg.write_text(yaml.safe_dump(raw))
    assert run("--quiet", "--config", cfg, "--out-dir", tmp_path, "study", path, "--mode", "compare",
               "--reinsurers", core, "--scenarios", 2) == 0
    rep = read_json(tmp_path / "compare.json")
    assert len(rep["paired"]) == 4 and not rep["failures"]
    assert all(p["xl_defaults"] == 0 and p["proportional_defaults"] == 0 for p in rep["paired"])


def test_study_is_byte_identical(tmp_path, synthetic_csv):
    path, core = synthetic_csv
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        for mode in ("perturbation", "compare"):
            assert run("--quiet", "--seed", 7, "--out-dir", d, "study", path, "--mode", mode,
                       "--reinsurers", core, "--samples", 4, "--scenarios", 3) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1] and len(outs[0]) == 6


def test_seed_flag_after_subcommand(tmp_path, cession_file):
    assert run("--quiet", "build", cession_file, "--seed", 3, "--out", tmp_path / "a.json") == 0
    assert read_json(tmp_path / "a.json")["manifest"]["seed"] == 3
