import json

import numpy as np
import pytest

from pushsum_sgp.cli import main
from pushsum_sgp.config import RunConfig, config_help, load_config, parse_config
from pushsum_sgp.errors import ConfigError
from pushsum_sgp.metrics import CSV_HEADER
from pushsum_sgp.topology import save_matrix_csv

MINIMAL = "algorithm = sgp\nobjective = quadratic\nn = 4\niters = 100\n"


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_run_outputs(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0
    out = tmp_path / "o"
    assert {p.name for p in out.iterdir()} == {"metrics.csv", "metrics.jsonl", "final_state.json",
                                               "resolved_config.json"}
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == "iter,f_mean,grad_norm_sq,consensus_err,max_consensus_err,sim_time"
    assert len(lines) == 102
    state = json.loads((out / "final_state.json").read_text())
    assert len(state["z"]) == 4 and len(state["x_bar"]) == 10
    jl = [json.loads(s) for s in (out / "metrics.jsonl").read_text().splitlines()]
    assert jl[-1]["iteration"] == 100


def test_golden_header():
    assert ",".join(CSV_HEADER) == "iter,f_mean,grad_norm_sq,consensus_err,max_consensus_err,sim_time"


def test_negative_gamma_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "algorithm = sgp\nn = 4\n# comment\ngamma = -1\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "run.cfg:4:" in capsys.readouterr().err


@pytest.mark.parametrize("text,line", [
    ("n = 4\nbogus = 1\n", 2),
    ("n = 4\nn = 5\n", 2),
    ("n = 4\niters = ten\n", 2),
    ("topology = ring\n", 1),
    ("\n\nalgorithm = dpsgd\n", 3),
    ("just words\n", 1),
])
def test_invalid_configs_line_anchored(tmp_path, text, line):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, text))
    assert exc.value.line == line
    assert main(["run", str(write(tmp_path, text)), "--out", str(tmp_path / "o")]) == 2


def test_json_config_and_line_lookup(tmp_path):
    p = write(tmp_path, '{\n  "n": 4,\n  "momentum": 2.0,\n  "algorithm": "sgp_momentum"\n}\n', "c.json")
    with pytest.raises(ConfigError) as exc:
        load_config(p)
    assert exc.value.line == 3
    p = write(tmp_path, '{"n": 4, "iters": 7}', "ok.json")
    assert load_config(p).iters == 7


def test_divergence_exit_3(tmp_path):
    cfg = write(tmp_path, "n = 4\ngamma = 1e6\niters = 50\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert json.loads((tmp_path / "o" / "final_state.json").read_text())["diverged"] is True


def test_determinism_and_seed_override(tmp_path):
    cfg = write(tmp_path, "algorithm = osgp\ntau = 2\ndelay_mode = uniform\nnoise = 0.5\nn = 8\niters = 60\n"
                          "heterogeneity = 1.0\nspike_prob = 0.2\nspike_magnitude = 1.0\ntransfer_time = 0.1\n")
    for d in ("a", "b"):
        assert main(["run", str(cfg), "--out", str(tmp_path / d), "--seed", "5"]) == 0
    assert main(["run", str(cfg), "--out", str(tmp_path / "c"), "--seed", "6"]) == 0
    a, b, c = ((tmp_path / d / "metrics.csv").read_bytes() for d in "abc")
    assert a == b and a != c
    assert json.loads((tmp_path / "a" / "resolved_config.json").read_text())["seed"] == 5


def test_resolved_config_roundtrip(tmp_path, example_p):
    save_matrix_csv(example_p, tmp_path / "p.csv")
    cfg = write(tmp_path, "topology = static_custom\nstatic_matrix = p.csv\nalgorithm = osgp\ntau = 1\n"
                          "iters = 40\nnoise = 0.3\nslowdown = {\"2\": 2.0}\ntransfer_time = 0.2\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "a")]) == 0
    resolved = tmp_path / "a" / "resolved_config.json"
    r = json.loads(resolved.read_text())
    assert r["gamma"] == np.sqrt(4 / 40) and r["delay_mode"] == "fixed" and r["slowdown"] == [1, 1, 2, 1]
    assert main(["run", str(resolved), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert (tmp_path / "b" / "resolved_config.json").read_bytes() == resolved.read_bytes()


def test_seeds_with_jobs(tmp_path):
    cfg = write(tmp_path, "n = 4\niters = 10\nnoise = 0.5\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o"), "--seeds", "1,2", "--jobs", "2"]) == 0
    assert main(["run", str(cfg), "--out", str(tmp_path / "p"), "--seed", "2"]) == 0
    assert (tmp_path / "o" / "seed_2" / "metrics.csv").read_bytes() == (tmp_path / "p" / "metrics.csv").read_bytes()


def test_flat_parser_values():
    cfg = parse_config('n = 4  # nodes\nlr_schedule = [[10, 0.1]]\nname = "a # b"\nobjective = logistic\n'
                       "samples = 12\nbatch_size = 4\n")
    assert cfg.lr_schedule == [[10, 0.1]] and cfg.name == "a # b" and cfg.batch_size == 4


def test_help_documents_every_key(capsys):
    with pytest.raises(SystemExit):
        main(["run", "--help"])
    text = capsys.readouterr().out
    for key in RunConfig.__dataclass_fields__:
        assert key in text
    assert "(100)" in config_help()


def test_average_exact_and_echo(tmp_path, capsys):
    y = np.random.default_rng(0).standard_normal((8, 3))
    np.savetxt(tmp_path / "y.csv", y, delimiter=",")
    assert main(["average", "--n", "8", "--topology", "one_peer_exponential", "--iters", "3",
                 "--input", str(tmp_path / "y.csv")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert float(out[-1].split("=")[1]) < 1e-12
    assert main(["average", "--n", "8", "--iters", "0", "--input", str(tmp_path / "y.csv")]) == 0
    rows = capsys.readouterr().out.splitlines()[:-1]
    assert np.array_equal(np.array([[float(v) for v in r.split(",")] for r in rows]), y)


def test_average_row_mismatch(tmp_path):
    np.savetxt(tmp_path / "y.csv", np.ones((5, 2)), delimiter=",")
    assert main(["average", "--n", "4", "--iters", "2", "--input", str(tmp_path / "y.csv")]) == 2


def test_average_static_decays_geometrically(tmp_path, capsys, example_p):
    save_matrix_csv(example_p, tmp_path / "p.csv")
    np.savetxt(tmp_path / "y.csv", np.random.default_rng(1).standard_normal((4, 2)), delimiter=",")
    devs = []
    for iters in (10, 20, 30, 40):
        assert main(["average", "--n", "4", "--topology", f"static:{tmp_path / 'p.csv'}", "--iters", str(iters),
                     "--input", str(tmp_path / "y.csv")]) == 0
        devs.append(float(capsys.readouterr().out.splitlines()[-1].split("=")[1]))
    ratios = [b / a for a, b in zip(devs, devs[1:])]
    assert all(r < 0.1 for r in ratios) and max(ratios) / min(ratios) < 1.5


def test_analyze_topology(capsys):
    assert main(["analyze-topology", "--kind", "one_peer_exponential", "--n", "32", "--window", "5"]) == 0
    assert json.loads(capsys.readouterr().out)["lambda2"] <= 1e-10
    assert main(["analyze-topology", "--kind", "random_uniform_neighbor", "--n", "32", "--window", "5",
                 "--trials", "500"]) == 0
    assert 0.15 <= json.loads(capsys.readouterr().out)["lambda2_mean"] <= 0.25
    assert main(["analyze-topology", "--kind", "one_peer_exponential", "--n", "2", "--window", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["lambda2"] <= 1e-10
    assert main(["analyze-topology", "--kind", "torus", "--n", "4"]) == 2


def test_compare_command(tmp_path, capsys):
    a = write(tmp_path, "name = gossip\nn = 4\niters = 20\ntransfer_time = 0.1\n", "a.cfg")
    b = write(tmp_path, "name = ar\nalgorithm = allreduce_sgd\ntopology = dense_uniform\nn = 4\niters = 20\n"
                        "transfer_time = 0.1\nallreduce_beta = 0.1\n", "b.cfg")
    assert main(["compare", str(a), str(b)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("name,algorithm") and len(lines) == 3
