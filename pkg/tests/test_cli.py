import csv
import json
import subprocess
import sys

import pytest

from robustmech import cli, guarantee
from robustmech.mechanism import build_exponential


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_guarantee_one_buyer(capsys):
    code, out, _ = run(capsys, "guarantee", "--prior", "uniform", "--buyers", "1")
    assert code == 0
    assert json.loads(out)["value"] == pytest.approx(0.204, abs=2e-3)


def test_guarantee_sharp2(capsys):
    code, out, _ = run(capsys, "guarantee", "--prior", "uniform", "--buyers", "2", "--variant", "sharp2")
    res = json.loads(out)
    assert code == 0 and res["value"] == pytest.approx(0.273, abs=2e-3)
    assert res["diagnostics"]["Y0_sign"] in (-1, 0, 1)


def test_guarantee_beta(capsys):
    code, out, _ = run(capsys, "guarantee", "--prior", "beta:2,2", "--buyers", "2")
    assert code == 0 and json.loads(out)["value"] == pytest.approx(0.301, abs=2e-3)


def test_guarantee_deterministic(capsys):
    a = run(capsys, "guarantee", "--prior", "beta:2,4", "--buyers", "2")[1]
    b = run(capsys, "guarantee", "--prior", "beta:2,4", "--buyers", "2")[1]
    assert a == b


@pytest.mark.parametrize("argv", [
    ["guarantee", "--buyers", "3", "--variant", "sharp2"],
    ["guarantee", "--prior", "gamma:2"],
    ["guarantee", "--buyers", "0"],
    ["lp", "--exp", "a=3"],
    ["lp", "--exp", "a=3,X=0.1"],
    ["lp", "--posted", "p=0.2", "--exp", "a=3,X=0.1", "--k", "2"],
    ["lp", "--posted", "p=2"],
    ["figure", "--max-buyers", "60"],
    ["rs", "--prior", "file:/nonexistent.json"],
])
def test_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == cli.EXIT_USAGE


def test_argparse_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["guarantee", "--nu", "abc"])
    assert info.value.code == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        cli.main(["nosuchcommand"])
    assert info.value.code == cli.EXIT_USAGE


def test_nonconvergence_exit(capsys, monkeypatch):
    real = guarantee.pi_star_I

    def stuck(*args, **kwargs):
        res = real(*args, **kwargs)
        res.converged = False
        return res

    monkeypatch.setattr(guarantee, "pi_star_I", stuck)
    code, out, err = run(capsys, "guarantee", "--buyers", "1")
    assert code == cli.EXIT_NUMERIC and "converge" in err
    assert json.loads(out)["converged"] is False


def test_rs_bracket_failure_exit(capsys, monkeypatch):
    def fail(prior):
        raise guarantee.RSConstructionError("no bracket")

    monkeypatch.setattr(guarantee, "rs_construct", fail)
    assert run(capsys, "rs")[0] == cli.EXIT_NUMERIC


def test_lp_posted_price(capsys, tmp_path):
    mu_path, cert_path = tmp_path / "mu.json", tmp_path / "cert.json"
    code, out, _ = run(capsys, "lp", "--posted", "p=0.25", "--nu", "1/100",
                       "--dump-mu", str(mu_path), "--dump-certificate", str(cert_path))
    res = json.loads(out)
    assert code == 0
    assert res["primal"] == pytest.approx(0.125, abs=1e-9)
    assert res["gap"] <= 1e-9
    assert len(json.loads(mu_path.read_text())["mu"]) == 101
    assert len(json.loads(cert_path.read_text())["gamma"]) == 101


def test_lp_exponential_gap(capsys):
    code, out, _ = run(capsys, "lp", "--exp", "a=3,X=0.05", "--k", "3", "--buyers", "1", "--nu", "1/10")
    res = json.loads(out)
    assert code == 0 and res["gap"] <= 1e-8
    assert res["primal"] >= res["band_rate_bound"] - 1e-9


def test_lp_gen2_and_file(capsys, tmp_path):
    code, out, _ = run(capsys, "lp", "--gen2", "a=2,Y0=0.2,Y1=-0.05", "--k", "2", "--nu", "1/10",
                       "--backend", "highs")
    assert code == 0 and json.loads(out)["gap"] <= 1e-8
    path = tmp_path / "m.json"
    path.write_text(json.dumps(build_exponential(2, 2, 2.0, 0.05).to_dict()))
    code, out, _ = run(capsys, "lp", "--mechanism-file", str(path), "--nu", "1/10")
    ref = run(capsys, "lp", "--exp", "a=2,X=0.05", "--k", "2", "--buyers", "2", "--nu", "1/10")[1]
    assert code == 0
    assert json.loads(out)["primal"] == pytest.approx(json.loads(ref)["primal"], abs=1e-12)


def test_lp_zero_mechanism(capsys):
    code, out, _ = run(capsys, "lp", "--k", "2", "--buyers", "2", "--nu", "1/10")
    assert code == 0 and json.loads(out)["primal"] == pytest.approx(0.0, abs=1e-12)


def test_lp_size_cap(capsys):
    code, _, err = run(capsys, "lp", "--exp", "a=3,X=0.05", "--k", "6", "--buyers", "3")
    assert code == cli.EXIT_CAP and "cap" in err


def test_rs(capsys):
    code, out, _ = run(capsys, "rs", "--prior", "uniform")
    res = json.loads(out)
    assert code == 0 and res["pi_star"] == pytest.approx(0.2036, abs=5e-4)
    assert res["pi_star"] <= res["mean"]
    code, out, _ = run(capsys, "rs", "--prior", "beta:2,2")
    assert json.loads(out)["pi_star"] == pytest.approx(0.229, abs=2e-3)


def test_triangle_bound(capsys):
    code, out, _ = run(capsys, "triangle-bound")
    res = json.loads(out)
    assert code == 0
    assert res["bound"] == pytest.approx(13 / 36, abs=1e-6)
    assert res["pi_sharp_2"] <= res["bound"]
    assert res["ratio_sharp"] == pytest.approx(0.867, abs=2e-3)


def test_figure_csv(capsys, tmp_path):
    out_path = tmp_path / "fig.csv"
    code, _, _ = run(capsys, "figure", "--max-buyers", "4", "--out", str(out_path))
    lines = out_path.read_text().splitlines()
    assert code == 0 and lines[0].startswith("#") and lines[1] == "buyers,pi_star"
    vals = [float(line.split(",")[1]) for line in lines[2:]]
    assert len(vals) == 4 and vals == sorted(vals)
    assert vals[1] == pytest.approx(0.272, abs=2e-3)


def test_table_csv(capsys, tmp_path):
    out_path = tmp_path / "table.csv"
    code, _, _ = run(capsys, "table", "--out", str(out_path))
    lines = out_path.read_text().splitlines()
    assert code == 0
    assert lines[0].startswith("#") and "first-price" in lines[0]
    assert lines[1] == "prior,mean,pi_sharp_2,pi_star_2,pi_star_1"
    rows = {r[0]: [float(x) for x in r[1:]] for r in csv.reader(lines[2:])}
    assert len(rows) == 8
    assert rows["Uniform"] == pytest.approx([0.5, 0.273, 0.272, 0.204], abs=3e-3)
    assert rows["CDF 2v-v^2"][:2] == pytest.approx([0.3333, 0.166], abs=1e-3)
    assert rows["Triangle"][1:3] == pytest.approx([0.31324, 0.31094], abs=2e-3)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "robustmech", "lp", "--posted", "p=0.5", "--nu", "1/4"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    # price equal to the prior mean: never buying is obedient, so the worst case is no trade
    assert json.loads(proc.stdout)["primal"] == pytest.approx(0.0, abs=1e-12)
    bad = subprocess.run([sys.executable, "-m", "robustmech", "lp", "--posted", "q=1"],
                         capture_output=True, text=True, check=False)
    assert bad.returncode == cli.EXIT_USAGE
