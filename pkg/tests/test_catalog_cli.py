import json
import math

import pytest

from finslerlab import catalog as catmod
from finslerlab import cli
from finslerlab.errors import CatalogError


def run(tmp_path, *argv, name="out.json"):
    path = tmp_path / name
    code = cli.main([*argv, "--json", str(path)])
    return code, (json.loads(path.read_text()) if path.exists() else None), path


# -- catalog ------------------------------------------------------------------------


def test_default_catalog_loads():
    cat = catmod.load()
    assert {"euclid2", "euclid3", "quartic3", "kropina-host", "mix5"} <= {m.label for m in cat.metrics}
    assert cat.sampling.count == 20
    assert cat.change("energy23").build(3).family == "energy"
    with pytest.raises(CatalogError):
        cat.metric("nope")


def test_b_list_fits_dimension():
    cat = catmod.load()
    c2 = cat.change("randers").build(2)
    assert len(c2.b([0.0, 0.0])) == 2
    assert len(cat.change("randers-gradient").build(4).b([0.0] * 4)) == 4


def write(tmp_path, text):
    p = tmp_path / "cat.yaml"
    p.write_text(text)
    return p


GOOD = """
schema_version: 1
metrics:
  - {label: m, kind: expression, dim: 2, source: "sqrt(y1^2 + y2^2)"}
changes:
  - {label: r, family: randers, b: ["0.1", "0"]}
"""


def test_custom_catalog(tmp_path):
    cat = catmod.load(write(tmp_path, GOOD))
    assert cat.metric("m").build().dim == 2


@pytest.mark.parametrize("text", [
    GOOD + "  - {label: r, family: kropina, b: ['0.1', '0']}\n",
    GOOD.replace("sqrt(y1^2 + y2^2)", "sqrt(y1^2 + y2^2"),
    GOOD.replace("sqrt(y1^2 + y2^2)", "y1^2 + y2^2"),
    GOOD.replace('"0.1"', '"y1"'),
    GOOD.replace("randers", "bogus"),
], ids=["duplicate", "parse", "inhomogeneous", "y-in-b", "family"])
def test_bad_catalogs(tmp_path, text):
    path = write(tmp_path, text)
    with pytest.raises(CatalogError):
        catmod.load(path)
    assert cli.main(["catalog", "check", "--catalog", str(path)]) == 2


def test_catalog_check_ok(capsys):
    assert cli.main(["catalog", "check"]) == 0
    assert "catalog ok" in capsys.readouterr().out


# -- verify ---------------------------------------------------------------------


def test_verify_example(tmp_path):
    code, rep, _ = run(tmp_path, "verify", "--metric", "euclid2", "--change", "randers", "--samples", "20", "--seed", "7")
    assert code == 0 and rep["schema_version"] == 1
    (pair,) = rep["pairs"]
    assert pair["status"] == "pass" and pair["samples"] == 20
    for block in ("metric", "scalar_identities", "cartan", "v_curvature", "t_tensor"):
        assert pair["blocks"][block]["pass"]


def test_verify_unknown_label():
    assert cli.main(["verify", "--metric", "euclid2", "--change", "bogus"]) == 2
    assert cli.main(["verify", "--metric", "bogus", "--change", "randers"]) == 2
    assert cli.main(["frobnicate"]) == 2


def test_verify_kropina_filters(tmp_path):
    code, rep, _ = run(tmp_path, "verify", "--metric", "kropina-host", "--change", "kropina", "--samples", "20")
    assert code == 0
    assert rep["pairs"][0]["filtered"] > 0


def test_verify_no_data(tmp_path):
    text = GOOD.replace('"0.1", "0"', '"0", "0"').replace("randers", "kropina")
    code, rep, _ = run(tmp_path, "verify", "--catalog", str(write(tmp_path, text)), "--samples", "3")
    assert code == 3 and rep["pairs"][0]["status"] == "no_data"


def test_tolerance_override(tmp_path, monkeypatch):
    args = ("verify", "--metric", "quartic3", "--change", "energy23", "--samples", "3")
    monkeypatch.setenv(cli.TOL_ENV, "1e-30")
    assert run(tmp_path, *args)[0] == 1
    assert run(tmp_path, *args, "--tol", "1e-6")[0] == 0
    monkeypatch.setenv(cli.TOL_ENV, "soon")
    assert cli.main(list(args)) == 2


def test_reports_are_byte_identical(tmp_path):
    args = ("verify", "--metric", "quartic3", "--change", "custom", "--samples", "4")
    a = run(tmp_path, *args, name="a.json")[2].read_bytes()
    b = run(tmp_path, *args, name="b.json")[2].read_bytes()
    c = run(tmp_path, *args, "--jobs", "2", name="c.json")[2].read_bytes()
    assert a == b == c


def test_json_numbers():
    text = cli.dumps({"x": 0.1, "n": math.nan, "i": 3, "b": True})
    assert '"x": 1.0000000000000001e-01' in text
    assert '"n": null' in text and '"i": 3' in text and '"b": true' in text


# -- classify ---------------------------------------------------------------------


def test_classify_randers_euclid3(tmp_path, capsys):
    code, rep, _ = run(tmp_path, "classify", "--metric", "euclid3", "--change", "randers", "--samples", "5")
    assert code == 0
    entry = rep["entries"][0]
    assert entry["verdicts"]["K3"] is True
    assert entry["alpha"]["passed"]


def test_classify_base_only(tmp_path):
    code, rep, _ = run(tmp_path, "classify", "--metric", "quartic3", "--samples", "4")
    assert code == 0
    (entry,) = rep["entries"]
    assert entry["kind"] == "base" and "alpha" not in entry


def test_classify_energy_line(tmp_path, capsys):
    code, _, _ = run(tmp_path, "classify", "--metric", "quartic3", "--change", "energy23", "--samples", "5")
    assert code == 0
    assert "energy equivalence: PASS (k=3.000000)" in capsys.readouterr().out


# -- geodesic -----------------------------------------------------------------------


def test_geodesic_usage_errors():
    assert cli.main(["geodesic", "--metric", "rdiag2", "--change", "randers-gradient", "--steps", "0"]) == 2
    assert cli.main(["geodesic", "--metric", "rdiag2"]) == 2
    assert cli.main(["geodesic", "--metric", "rdiag2", "--change", "randers-gradient", "--x0", "1,2,3"]) == 2


def test_geodesic_verdicts(tmp_path, capsys):
    code, rep, _ = run(tmp_path, "geodesic", "--metric", "rdiag2", "--change", "randers-gradient", "--samples", "5",
                       "--steps", "300", name="g.json")
    assert code == 0 and rep["result"]["verdict"] == "PASS"
    code, rep, _ = run(tmp_path, "geodesic", "--metric", "rdiag2", "--change", "randers-rotational", "--samples", "5",
                       "--steps", "300", name="r.json")
    assert code == 0 and rep["result"]["verdict"] == "FAIL" and rep["result"]["table"]
    assert "deviation" in capsys.readouterr().out
