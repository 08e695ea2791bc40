"""Command-line front end.

Every subcommand writes its data files into ``--out`` together with a
``manifest.json``.  Data files contain no timestamps and use fixed float
formatting, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import io
import json
import logging
import math
import sys
import time
from dataclasses import asdict
from importlib import metadata
from pathlib import Path

import numpy as np

from . import chirality, eplocator, virtualab
from .dynamics import resonances, system_matrix
from .errors import ConfigError, EPCircuitError
from .model import CONFIG_KEYS, default_table1, fig2_sweep, load_config, params_from_mapping

log = logging.getLogger("epcircuits")

FIG3_PHASES = 16


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _json_text(obj, indent=0) -> str:
    """JSON with floats at 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_text(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + ", ".join(_json_text(v, indent + 1) for v in obj) + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return json.dumps(str(v))
        return _fmt(v)
    return json.dumps(str(obj))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row) + "\n")
    return buf.getvalue()


class Run:
    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.outputs = []

    def write(self, name: str, text: str) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text, encoding="utf-8", newline="\n")
        self.outputs.append(name)


# parameter resolution -------------------------------------------------------


def _overrides(pairs):
    values = {}
    for item in pairs or ():
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = raw.strip()
    return values


def resolve_params(args, detune=True):
    base = load_config(args.config) if args.config else default_table1()
    p = params_from_mapping(_overrides(args.set), base)
    if detune and args.detune_cp is not None:
        p = p.with_values(Cp=p.Cp * args.detune_cp)
    return p.validate()


def _config_echo(p) -> dict:
    d = asdict(p)
    return {key: d[name] for key, name in CONFIG_KEYS.items()}


def _locate(p):
    return eplocator.locate_ep(fig2_sweep(p))


# subcommands ----------------------------------------------------------------


def _resonance_rows(rs):
    return [(w.real, w.imag, int(k)) for w, k in zip(rs.omega, rs.mirror)]


def cmd_eigen(run: Run):
    p = resolve_params(run.args)
    rs = resonances(system_matrix(p))
    run.write("resonances.csv", _csv(("re_omega", "im_omega", "mirror_index"), _resonance_rows(rs)))
    return p


def _loci_rows(loci):
    rows = []
    for lp in loci:
        right = np.sort_complex(lp.resonances.right_half())
        for w in right:
            rows.append((lp.values[0], lp.values[1] * 1e9, w.real, w.imag))
    return rows


LOCI_HEADER = ("rp_ohm", "cp_nf", "re_omega", "im_omega")


def cmd_sweep(run: Run):
    p = resolve_params(run.args)
    run.write("sweep.csv", _csv(LOCI_HEADER, _loci_rows(eplocator.sweep_loci(fig2_sweep(p)))))
    return p


def _ep_json(res, seed=None) -> dict:
    out = res.to_json()
    if res.eigvec_ratio is not None:
        out["eigvec_ratio_re"] = res.eigvec_ratio.real
        out["eigvec_ratio_im"] = res.eigvec_ratio.imag
    if seed is not None:
        out["seed_omega_re"] = seed.omega.real
        out["seed_omega_im"] = seed.omega.imag
        out["seed_params"] = dict(seed.values)
    return out


def cmd_find_ep(run: Run):
    p = resolve_params(run.args)
    res, seed = _locate(p)
    run.write("ep.json", _json_text(_ep_json(res, seed)) + "\n")
    return p


def cmd_impulse(run: Run):
    p = resolve_params(run.args)
    m = system_matrix(p)
    ports = tuple(run.args.ports)
    rec = virtualab.impulse_experiment(m, run.args.tp, run.args.dt, run.args.samples, ports)
    run.write("impulse.csv", rec.to_csv())
    sp = virtualab.dft(rec, "i_A")
    run.write("spectrum.csv", sp.to_csv())
    return p


def cmd_fit(run: Run):
    p = resolve_params(run.args)
    m = system_matrix(p)
    meas = virtualab.impulse_pipeline(m, run.args.tp, run.args.dt, run.args.samples, tuple(run.args.ports))
    direct = resonances(m)
    body = meas.fit.to_json()
    body["long_pulse"] = bool(meas.record.meta["long_pulse"])
    body["relative_error"] = virtualab.eigenvalue_error(meas.resonances, direct)
    run.write("fit.json", _json_text(body) + "\n")
    run.write("fitted_resonances.csv", _csv(("re_omega", "im_omega", "mirror_index"), _resonance_rows(meas.resonances)))
    run.write("response.csv", meas.spectrum.to_csv())
    return p


def _phase(run: Run, p, n_phases):
    res, _ = _locate(p)
    params = res.params
    if run.args.detune_cp is not None:
        params = params.with_values(Cp=params.Cp * run.args.detune_cp)
    m = system_matrix(params)
    out = virtualab.phase_experiment(m, res, n_phases=n_phases)
    return out, res


def cmd_phase(run: Run):
    p = resolve_params(run.args, detune=False)
    out, _ = _phase(run, p, run.args.n_phases)
    run.write("phase.csv", out.to_csv())
    return p


def cmd_chirality(run: Run):
    p = resolve_params(run.args)
    res, _ = _locate(p)
    rep = chirality.chirality_at(res.matrix(), res.omega_ep)
    body = {"omega_ep_re": res.omega_ep.real, "omega_ep_im": res.omega_ep.imag, **rep.to_json()}
    run.write("chirality.json", _json_text(body) + "\n")
    return p


def cmd_reproduce_fig2(run: Run):
    p = resolve_params(run.args)
    spec = fig2_sweep(p)
    loci = eplocator.sweep_loci(spec)
    seed = eplocator.seed_from_sweep(spec, loci)
    res = eplocator.find_ep(seed.omega, seed.values, spec.base)
    rows = _loci_rows(loci)
    rows.append((res.param_values["Rp"], res.param_values["Cp"] * 1e9, res.omega_ep.real, res.omega_ep.imag))
    run.write("fig2.csv", _csv(LOCI_HEADER, rows))
    run.write("fig2_ep.json", _json_text(_ep_json(res, seed)) + "\n")
    return p


def cmd_reproduce_fig3(run: Run):
    p = resolve_params(run.args, detune=False)
    out, _ = _phase(run, p, FIG3_PHASES)
    run.write("fig3.csv", out.to_csv())
    return p


COMMANDS = {
    "eigen": (cmd_eigen, "resonances of the configured circuit"),
    "sweep": (cmd_sweep, "resonance loci over the Rp x Cp grid"),
    "find-ep": (cmd_find_ep, "locate the exceptional point in Rp and Cp"),
    "impulse": (cmd_impulse, "pulse response and its spectrum"),
    "fit": (cmd_fit, "resonances from a rational fit of the pulse response"),
    "phase": (cmd_phase, "phase difference of the port currents at the EP"),
    "chirality": (cmd_chirality, "coalescing eigenvector ratio at the EP"),
    "reproduce-fig2": (cmd_reproduce_fig2, "loci over the reference grid plus the EP"),
    "reproduce-fig3": (cmd_reproduce_fig3, "16-point phase plateau at the EP"),
}


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat TOML file with component values")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--detune-cp", type=_positive, metavar="FACTOR", help="multiply Cp by FACTOR")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="epcircuits", description="Exceptional points in coupled RLC circuits.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=helptext, description=helptext)
        if name in ("impulse", "fit"):
            sp.add_argument("--tp", type=_positive, default=1e-6, help="pulse width in s (default 1e-6)")
            sp.add_argument("--dt", type=_positive, default=virtualab.DEFAULT_DT)
            sp.add_argument("--samples", type=int, default=virtualab.DEFAULT_SAMPLES)
            sp.add_argument("--ports", type=float, nargs=2, default=(1.0, 1.0), metavar=("A", "B"))
        if name == "phase":
            sp.add_argument("--n-phases", type=int, default=FIG3_PHASES)
    parser.add_argument("--version", action="version", version=_version())
    return parser


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover
        return "unknown"


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    run = Run(args)
    started = _dt.datetime.now(_dt.timezone.utc)
    t0 = time.perf_counter()
    func = COMMANDS[args.command][0]
    try:
        params = func(run)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except EPCircuitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    manifest = {
        "subcommand": args.command,
        "argv": argv,
        "parameters": _config_echo(params),
        "detune_cp": args.detune_cp,
        "outputs": run.outputs,
        "version": _version(),
        "started_utc": started.isoformat(),
        "duration_s": time.perf_counter() - t0,
    }
    run.write("manifest.json", _json_text(manifest) + "\n")
    run.outputs.pop()
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
