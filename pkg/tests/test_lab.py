import math
import os

import numpy as np
import pytest

from knappmodes.errors import ConfigError, NonPositiveValue, QOutOfRange, TooFewPoints
from knappmodes.lab import sweep as sweep_mod
from knappmodes.lab.cli import main
from knappmodes.lab.config import load_config, parse_range
from knappmodes.lab.fitting import critical_exponents, fit_exponent, leave_one_out_spread
from knappmodes.lab.report import emit_report, read_csv
from knappmodes.lab.sweep import COLUMNS, run_sweep

RP2 = """
[manifold]
preset = rp_n
n = 2
[sweep]
ell = 10:100:10
R = 1
[target.ratio]
x = lambda
y = norm_p2 / norm_p1
value = 0.25
tol = 0.05
[output]
dir = {out}
name = rp2
"""

KLEIN = """
[manifold]
preset = klein_bottle
c0 = 0.25
[sweep]
k = 60, 90, 140, 200, 300
delta = constant(1)
R = c1
[output]
dir = {out}
name = klein
"""


def same_row(a, b, skip=()):
    for col in COLUMNS:
        if col in skip:
            continue
        va, vb = a[col], b[col]
        if isinstance(va, float) and math.isnan(va):
            if not (isinstance(vb, float) and math.isnan(vb)):
                return False
        elif va != vb:
            return False
    return True


def write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text.format(out=tmp_path / "out"))
    return str(p)


def test_critical_exponents():
    # both branches give 1/6 at the critical exponent for surfaces
    qc, mu = critical_exponents(2, 6)
    assert qc == 6.0 and mu == pytest.approx(1 / 6)
    assert 2 * (0.5 - 1 / 6) - 0.5 == pytest.approx(mu)
    assert critical_exponents(3, 4) == (4.0, pytest.approx(0.25))
    assert critical_exponents(2, 2 + 1e-9)[1] == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(QOutOfRange):
        critical_exponents(2, 2)


def test_fit_exponent_examples():
    x = np.array([1.0, 2.0, 5.0, 10.0, 40.0])
    fit = fit_exponent(zip(x, x ** 0.25))
    assert fit.count == 5
    assert fit.exponent == pytest.approx(0.25, abs=1e-12)
    assert fit.max_residual < 1e-12 and fit.reportable
    xs = np.geomspace(10, 1000, 12)
    fit = fit_exponent(zip(xs, 3 * xs ** 0.25 * (1 + 0.01 * np.sin(np.log(xs)))))
    assert abs(fit.exponent - 0.25) <= 0.02
    assert fit_exponent(zip(x, np.full(5, 2.0))).exponent == pytest.approx(0.0, abs=1e-12)
    x6 = np.append(x, 77.0)
    assert leave_one_out_spread(list(zip(x6, x6 ** 0.25))) < 1e-12


def test_fit_exponent_errors():
    with pytest.raises(TooFewPoints):
        fit_exponent([(1, 1), (2, 2)])
    with pytest.raises(NonPositiveValue):
        fit_exponent([(1, 1), (2, 2), (3, 0), (4, 1), (5, 1)])


def test_parse_range():
    assert parse_range("10:30:10") == (10, 20, 30)
    assert parse_range("4, 7 9") == (4, 7, 9)
    with pytest.raises(ConfigError):
        parse_range("1:5:0")


@pytest.mark.parametrize("text", [
    "[sweep]\nk = 1\n",
    "[manifold]\npreset = nowhere\n[sweep]\nk = 1\n",
    "[manifold]\npreset = torus\n[sweep]\nk =\n",
    "[manifold]\npreset = torus\n[sweep]\nk = 3\ndelta = sometimes\n",
    "[manifold]\npreset = torus\n[sweep]\nk = 3\ncertificates = vibes\n",
    "[manifold]\npreset = torus\n[sweep]\nk = 3\nell = 2\n",
])
def test_bad_configs(tmp_path, text):
    p = tmp_path / "bad.ini"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(str(p))


def test_custom_flat_manifold(tmp_path):
    text = """
[manifold]
preset = custom
kind = flat
basis = 1 0; 0 1
generator.1 = -1 0; 0 1 | 0 0.5
generator.2 = 1 0; 0 1 | 1 0
[sweep]
k = 5
"""
    from knappmodes.lab.config import build_quotient

    cfg = load_config(write(tmp_path, text))
    assert build_quotient(cfg.manifold).index == 2


def test_rp2_sweep_rows_and_report(tmp_path):
    cfg = load_config(write(tmp_path, RP2))
    res = run_sweep(cfg)
    assert len(res.rows) == 10
    for r in res.rows:
        assert r["status"] == "ok"
        assert r["defect"] == 0.0 and r["window_margin"] == math.inf
        assert r["tube_l2"] / r["norm_p2"] >= 0.3
    paths, summary = emit_report(res.rows, list(cfg.targets), cfg.out_dir, cfg.name)
    assert summary["fits"][0]["pass"]
    assert abs(summary["fits"][0]["exponent"] - 0.25) < 0.05
    assert os.path.exists(paths["summary"]) and os.path.exists(paths["plot"])
    back = read_csv(paths["csv"])
    assert [r["k"] for r in back] == [r["k"] for r in res.rows]
    assert back[3]["norm_p2"] == res.rows[3]["norm_p2"]


def test_empty_targets_csv_only(tmp_path):
    cfg = load_config(write(tmp_path, RP2.replace("[target.ratio]", "[unused]")))
    res = run_sweep(cfg, use_cache=False)
    paths, summary = emit_report(res.rows, [], cfg.out_dir, cfg.name)
    assert summary is None and set(paths) == {"csv"}
    assert open(paths["csv"]).readline().strip().split(",") == COLUMNS


def test_cache_skips_norm_work(tmp_path, monkeypatch):
    cfg = load_config(write(tmp_path, KLEIN))
    first = run_sweep(cfg)
    assert first.computed == 5

    def boom(*a, **k):
        raise AssertionError("norm computed on a cache hit")

    monkeypatch.setattr(sweep_mod, "lp_norms", boom)
    second = run_sweep(cfg)
    assert second.computed == 0 and second.cached == 5
    assert all(same_row(a, b) for a, b in zip(first.rows, second.rows))


def test_cached_equals_recomputed_and_deterministic(tmp_path):
    cfg = load_config(write(tmp_path, KLEIN))
    a = run_sweep(cfg).rows
    b = run_sweep(cfg, use_cache=False, workers=1).rows
    c = run_sweep(cfg, use_cache=True).rows
    for ra, rb, rc in zip(a, b, c):
        assert same_row(ra, rc)
        assert same_row(ra, rb, skip=("wall_ms",))


def test_failed_row_is_tagged(tmp_path):
    text = RP2.replace("ell = 10:100:10", "k = 3, 4, 6, 8, 10, 12")
    cfg = load_config(write(tmp_path, text))
    rows = run_sweep(cfg, use_cache=False).rows
    assert rows[0]["status"] == "k_not_multiple_of_m"
    assert all(r["status"] == "ok" for r in rows[1:])


def test_cli_exit_codes(tmp_path, capsys):
    cfg = write(tmp_path, RP2)
    assert main(["validate", cfg]) == 0
    assert main(["sweep", cfg]) == 0
    csv_path = str(tmp_path / "out" / "rp2.csv")
    assert main(["fit", csv_path, "--target", "0.25"]) == 0
    assert main(["fit", csv_path, "--target", "0.5"]) == 1
    assert main(["report", csv_path]) == 0
    bad = tmp_path / "bad.ini"
    bad.write_text("[manifold]\npreset = nowhere\n")
    assert main(["validate", str(bad)]) == 2
    out = capsys.readouterr().out
    assert "PASS fit ratio" in out


def test_cli_fails_on_broken_certificate(tmp_path):
    text = RP2.replace("ell = 10:100:10", "k = 3, 4, 6, 8, 10, 12")
    assert main(["sweep", write(tmp_path, text)]) == 1
