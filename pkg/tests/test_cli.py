import io
import json
import math
from pathlib import Path

import numpy as np
import pytest

from cpcompare.cli import EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, dumps, read_series, run
from cpcompare.emission import CountSeries, EmissionModel
from cpcompare.oracle import brute_changepoint_posterior, brute_common_posterior

DATA = Path(__file__).parent / "data"
STEP = DATA / "step.txt"
THREE = DATA / "three_conditions.tsv"


def call(*argv):
    out = io.StringIO()
    code = run([str(a) for a in argv], stdout=out)
    return code, out.getvalue()


def report(*argv):
    code, text = call(*argv)
    assert code == EXIT_OK
    return json.loads(text)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def posterior_dict(block):
    return {e["at"]: e["p"] for e in block["posterior"]}


def test_two_point_series(tmp_path):
    path = write(tmp_path, "two.txt", "3\n8\n")
    rep = report("segment", path, "--model", "poisson", "--K", 2)
    assert posterior_dict(rep["series"][0]["changepoints"][0]) == {2: 1.0}


def test_step_series_matches_oracle():
    rep = report("segment", STEP, "--model", "poisson", "--K", 2)
    cp = rep["series"][0]["changepoints"][0]
    assert cp["mode"] == 5
    want = brute_changepoint_posterior(CountSeries(read_series(STEP)[0].values),
                                       EmissionModel.poisson(), 2, 1)
    got = posterior_dict(cp)
    for t, p in enumerate(want, 1):
        assert got.get(t, 0.0) == pytest.approx(p, rel=1e-9, abs=1e-300)
    for entry in cp["posterior"]:
        assert entry["log10_p"] == pytest.approx(math.log10(entry["p"]))


def test_three_condition_fixture_shape():
    rep = report("segment", THREE, "--K", 5)
    assert [s["label"] for s in rep["series"]] == ["cond_A", "cond_B", "cond_C"]
    for block in rep["series"]:
        assert [cp["k"] for cp in block["changepoints"]] == [1, 2, 3, 4]
        assert block["phi_source"] == "estimated"
        for cp in block["changepoints"]:
            assert cp["interval"]["lo"] <= cp["mode"] <= cp["interval"]["hi"]


def test_compare_shift(tmp_path):
    a = write(tmp_path, "a.txt", "0\n0\n0\n0\n9\n9\n9\n9\n")
    b = write(tmp_path, "b.txt", "0\n0\n9\n9\n9\n9\n9\n9\n")
    rep = report("compare-shift", a, b, "--model", "poisson", "--K", 2, "--k", 1)
    comp = rep["comparisons"][0]
    shift = {e["at"]: e["p"] for e in comp["shift"]}
    assert math.fsum(shift.values()) == pytest.approx(1.0)
    assert max(shift, key=shift.get) == 2
    assert comp["zero_in_interval"] == (comp["interval"]["lo"] <= 0 <= comp["interval"]["hi"])


def test_compare_common_matches_oracle(tmp_path):
    text = "x\ty\n" + "".join(f"{a}\t{b}\n" for a, b in zip([0, 1, 0, 0, 12, 9, 11, 10],
                                                           [0, 1, 0, 0, 12, 9, 11, 10]))
    path = write(tmp_path, "pair.tsv", text)
    rep = report("compare-common", path, "--model", "poisson", "--K", 2, "--k", 1)
    comp = rep["comparisons"][0]
    series = read_series(path)
    want = brute_common_posterior(series, EmissionModel.poisson(), [(2, 1)] * 2, 0.5)
    assert comp["posterior_E0"] == pytest.approx(want.posterior_E0, rel=1e-8)
    assert comp["log10_bayes_factor"] == pytest.approx(math.log10(want.bayes_factor), rel=1e-8)


def test_compare_common_priors():
    base = ["compare-common", THREE, "--K", 5, "--phi", 4, "--k", 1, "--k", 4]
    plain = report(*base)["comparisons"]
    tuned = report(*base, "--p0", "0.5", "--p0", "4=0.99")["comparisons"]
    assert tuned[0]["posterior_E0"] == plain[0]["posterior_E0"]
    assert tuned[1]["p0"] == 0.99 and tuned[1]["posterior_E0"] > plain[1]["posterior_E0"]
    # p0 = q0 collapses the posterior to the plain joint/marginal ratio
    q0 = plain[0]["q0"]
    collapsed = report(*base[:-2], "--p0", repr(q0))["comparisons"][0]
    assert collapsed["posterior_E0"] == pytest.approx(
        math.exp(collapsed["log_Q_joint"] - collapsed["log_Q_marg"]), rel=1e-12)


def test_per_series_selections():
    rep = report("compare-common", THREE, "--K", 5, "--K", 5, "--K", 4, "--phi", 4,
                 "--k", "2,2,2")
    assert rep["comparisons"][0]["k"] == [2, 2, 2]
    assert [s["K"] for s in rep["series"]] == [5, 5, 4]


def test_estimate_phi():
    rep = report("estimate-phi", THREE)
    assert len(rep["series"]) == 3
    assert all(s["phi_hat"] > 0 for s in rep["series"])


def test_reports_are_deterministic(tmp_path):
    argv = ["compare-common", str(THREE), "--K", "5", "--k", "2", "--k", "3"]
    first = call(*argv)[1]
    before, after = tmp_path / "before.json", tmp_path / "after.json"
    assert run(["--out", str(before), *argv]) == EXIT_OK
    assert run([*argv, "--out", str(after)]) == EXIT_OK
    assert before.read_text() == after.read_text() == first
    assert dumps(json.loads(first)) == first


def test_non_finite_values_serialize():
    text = dumps({"a": math.inf, "b": -math.inf, "c": np.float64(0.5)})
    assert json.loads(text) == {"a": "inf", "b": "-inf", "c": 0.5}


@pytest.mark.parametrize("content,needle", [
    ("1\n2\nfoo\n4\n", ":3: not a number"),
    ("1\n2\n-3\n4\n", ":3: expected a non-negative integer"),
    ("1\n2.5\n3\n", ":2: expected a non-negative integer"),
    ("a\tb\n1\t2\n3\n", ":3: expected 2 fields"),
    ("", "no data"),
])
def test_input_errors_name_the_line(tmp_path, capsys, content, needle):
    path = write(tmp_path, "bad.txt", content)
    code, _ = call("segment", path, "--model", "poisson", "--K", 2)
    assert code == EXIT_INPUT
    assert needle in capsys.readouterr().err


def test_reals_allowed_for_gaussian(tmp_path):
    path = write(tmp_path, "g.txt", "0.5\n-1.2\n0.1\n4.8\n5.2\n5.0\n")
    rep = report("segment", path, "--model", "gauss-known-var", "--sigma2", 1, "--K", 2)
    assert rep["series"][0]["changepoints"][0]["mode"] == 4
    rep = report("segment", path, "--model", "gauss-hetero", "--hyper", "v0=10", "--K", 2)
    assert rep["series"][0]["model"]["hyper"]["v0"] == 10.0


@pytest.mark.parametrize("argv", [
    ["compare-shift", STEP, "--K", 2],
    ["compare-common", STEP, "--K", 2],
    ["segment", STEP, "--K", 20, "--model", "poisson"],
    ["segment", STEP, "--K", 2, "--K", 3, "--model", "poisson"],
    ["compare-common", THREE, "--K", 5, "--k", 5, "--phi", 2],
    ["compare-common", THREE, "--K", 5, "--k", 1, "--p0", "2=0.9", "--phi", 2],
    ["compare-common", THREE, "--K", 5, "--p0", "1.5", "--phi", 2],
    ["segment", STEP, "--K", 2, "--model", "gauss-known-var"],
    ["segment", STEP, "--K", 2, "--hyper", "gamma=2"],
    ["segment", STEP, "--K", 2, "--phi", 2, "--estimate-phi"],
    ["segment", STEP, "--K", 2, "--level", "1.2", "--model", "poisson"],
    ["segment", "/nonexistent/file.txt", "--K", 2],
])
def test_usage_errors(argv):
    assert call(*argv)[0] == EXIT_INPUT


def test_length_mismatch(tmp_path):
    short = write(tmp_path, "short.txt", "1\n2\n3\n")
    assert call("compare-shift", STEP, short, "--K", 2, "--model", "poisson")[0] == EXIT_INPUT


def test_numerical_degeneracy(tmp_path):
    two = write(tmp_path, "two.tsv", "a\tb\n1\t2\n5\t6\n")
    code, _ = call("compare-common", two, "--K", 2, "--model", "poisson")
    assert code == EXIT_NUMERIC
    flat = write(tmp_path, "flat.txt", "4\n" * 40)
    assert call("estimate-phi", flat)[0] == EXIT_NUMERIC


def test_simulate_csv(tmp_path):
    out = tmp_path / "sim.csv"
    argv = ["simulate", "--model", "poisson", "--lambda0", "1.25", "--s", "16",
            "--replicates", "2", "--seed", "5", "--out", str(out)]
    assert run(argv) == EXIT_OK
    first = out.read_text()
    assert run(argv) == EXIT_OK
    assert out.read_text() == first
    lines = first.splitlines()
    assert lines[0].startswith("family,") and len(lines) == 1 + 2 * 12


def test_simulate_json_and_errors():
    code, text = call("--format", "json", "simulate", "--model", "nb", "--p0-level", "0.5",
                      "--phi", "2", "--replicates", "1", "--design", "shifted")
    assert code == EXIT_OK
    rows = json.loads(text)["rows"]
    assert [int(r["d"]) for r in rows] == [1, 2, 4, 8, 16, 32]
    assert call("simulate", "--model", "nb", "--phi", "2")[0] == EXIT_INPUT
    assert call("simulate", "--model", "poisson", "--lambda0", "1", "--design", "x")[0] == EXIT_INPUT
