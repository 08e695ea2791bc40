import csv
import json
import math

import numpy as np
import pytest

from epcircuits import cli, eplocator
from epcircuits.errors import IterationLimitError
from epcircuits.model import default_table1

ALL = list(cli.COMMANDS)


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_eigen_table1(tmp_path):
    assert run(tmp_path, "eigen") == 0
    r = rows(tmp_path / "resonances.csv")
    assert len(r) == 4
    w = np.array([complex(float(x["re_omega"]), float(x["im_omega"])) for x in r])
    for k, x in enumerate(r):
        assert abs(w[int(x["mirror_index"])] + np.conj(w[k])) <= 1e-9 * abs(w[k])
    c = default_table1()
    lc = sorted([1 / math.sqrt(c.Lp * c.Cp), 1 / math.sqrt(c.Ls * c.Cs)])
    for got, ref in zip(sorted(v.real for v in w if v.real > 0), lc):
        assert abs(got - ref) <= 0.10 * ref


def test_eigen_lossless_config(tmp_path):
    cfg = tmp_path / "lossless.toml"
    cfg.write_text("r1_ohm = 1e-12\nr2_ohm = 1e-12\nrp_ohm = 1e15\nrs_ohm = 1e15\nmmut_h = 1e-15\n")
    assert run(tmp_path, "eigen", "--config", str(cfg)) == 0
    r = rows(tmp_path / "resonances.csv")
    assert all(abs(float(x["im_omega"])) <= 1e-6 for x in r)


def test_set_and_detune_echoed_in_manifest(tmp_path):
    assert run(tmp_path, "eigen", "--set", "rp_ohm=600", "--detune-cp", "1.1") == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["subcommand"] == "eigen"
    assert man["parameters"]["rp_ohm"] == 600.0
    assert man["parameters"]["cp_f"] == pytest.approx(65e-9 * 1.1)
    assert man["detune_cp"] == 1.1
    assert man["outputs"] == ["resonances.csv"]
    assert "--detune-cp" in man["argv"]
    for key in ("version", "started_utc", "duration_s"):
        assert key in man


def test_reproduce_fig2(tmp_path):
    assert run(tmp_path, "reproduce-fig2") == 0
    r = rows(tmp_path / "fig2.csv")
    assert len(r) == 3 * 69 * 2 + 1
    assert {x["rp_ohm"] for x in r[:-1]} == {"430", "470", "510"}
    ep = complex(float(r[-1]["re_omega"]), float(r[-1]["im_omega"]))
    assert abs(ep.real - 92000) <= 0.10 * 92000
    assert abs(ep.imag + 11500) <= 0.40 * 11500
    ep_json = json.loads((tmp_path / "fig2_ep.json").read_text())
    assert ep_json["residual_det"] <= 1e-9 and ep_json["residual_ddet"] <= 1e-9


def test_reproduce_fig3(tmp_path):
    assert run(tmp_path / "a", "reproduce-fig3") == 0
    assert run(tmp_path / "b", "reproduce-fig3", "--detune-cp", "1.10") == 0
    base = np.array([float(x["dphi_i_rad"]) for x in rows(tmp_path / "a" / "fig3.csv")])
    off = np.array([float(x["dphi_i_rad"]) for x in rows(tmp_path / "b" / "fig3.csv")])
    assert len(base) == 16
    assert abs(base.mean() - math.pi / 2) <= 0.10 * math.pi / 2
    assert off.var() > base.var()


def test_find_ep_and_chirality(tmp_path):
    assert run(tmp_path, "find-ep") == 0
    ep = json.loads((tmp_path / "ep.json").read_text())
    assert {"omega_ep_re", "omega_ep_im", "params", "residual_det", "residual_ddet", "iterations"} <= set(ep)
    assert run(tmp_path, "chirality") == 0
    ch = json.loads((tmp_path / "chirality.json").read_text())
    assert {"ratio_re", "ratio_im", "modulus", "arg_rad"} <= set(ch)


def test_fit_and_impulse(tmp_path):
    assert run(tmp_path, "fit") == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["b"][-1] == 1 and fit["relative_error"] <= 0.01
    assert run(tmp_path, "impulse", "--samples", "512") == 0
    assert (tmp_path / "impulse.csv").read_text().splitlines()[0] == "t,v_A,v_B,i_A,i_B"
    assert (tmp_path / "spectrum.csv").read_text().splitlines()[0] == "omega_rad_s,re,im"


def test_float_format_is_17_digits(tmp_path):
    run(tmp_path, "eigen")
    first = (tmp_path / "resonances.csv").read_text().splitlines()[1].split(",")[0]
    assert first == format(float(first), ".17g")


@pytest.mark.parametrize("command", ALL)
def test_deterministic(tmp_path, command):
    assert run(tmp_path / "1", command) == 0
    assert run(tmp_path / "2", command) == 0
    names = sorted(p.name for p in (tmp_path / "1").iterdir() if p.name != "manifest.json")
    assert names
    for name in names:
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "2" / name).read_bytes()


def test_exit_code_config_error(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("rp_ohm = \n")
    assert run(tmp_path, "eigen", "--config", str(bad)) == 2
    assert run(tmp_path, "eigen", "--set", "nope=1") == 2
    assert run(tmp_path, "eigen", "--set", "rp_ohm") == 2
    assert run(tmp_path, "eigen", "--config", str(tmp_path / "missing.toml")) == 2


def test_exit_code_precondition(tmp_path):
    assert run(tmp_path, "eigen", "--set", "mmut_h=0.1") == 4
    assert run(tmp_path, "eigen", "--set", "rp_ohm=-1") == 4
    assert run(tmp_path, "impulse", "--dt", "1e-5") == 4


def test_exit_code_nonconvergence(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise IterationLimitError("no convergence", (1.0, 1.0))

    monkeypatch.setattr(eplocator, "find_ep", boom)
    assert run(tmp_path, "find-ep") == 3


def test_no_manifest_on_failure(tmp_path):
    run(tmp_path, "eigen", "--set", "rp_ohm=-1")
    assert not (tmp_path / "manifest.json").exists()
