"""Command-line front end: design, process, verify, respond, simulate.

Exit codes: 0 success, 2 usage (including unsupported factors), 3 I/O or
malformed input, 4 design infeasible, 5 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import ToneSpec, alias_attenuation_experiment, multitone_experiment, octave_multitone
from .cic import CicConfig, cic_magnitude_response, run_parallel_cic, run_serial_cic
from .errors import DesignInfeasible, MalformedStream, SrcError, UnsupportedFactor
from .halfband import HalfbandSpec, design_halfband, halfband_decimate_two_path, serial_fir
from .pipeline import SrcConfig, cascade_response, plan_factor, run_serial_reference, run_src
from .stream import SerialStream, parallel_to_serial, read_stream, serial_to_parallel, write_stream

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_INFEASIBLE = 4
EXIT_VERIFY = 5

OUT_DIR_ENV = "PARSRC_OUT_DIR"

log = logging.getLogger("parsrc")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything needed to rerun a command: its name and resolved flags."""

    command: str
    args: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def write(self, out_dir: Path, name: str = "run_config.json") -> Path:
        path = out_dir / name
        path.write_text(self.to_json() + "\n")
        return path

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path}: {exc}") from exc
        if "args" in d:
            return cls(d.get("command", ""), dict(d["args"]))
        return cls("", d)


def _out_dir(args) -> Path:
    out = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=float))


def _parse_cic(items) -> CicConfig:
    values = {}
    for item in items:
        key, sep, val = item.partition("=")
        if not sep or key.upper() not in ("N", "R", "M"):
            raise UsageError(f"--cic expects N=.. R=.. M=.., got {item!r}")
        try:
            values[key.upper()] = int(val)
        except ValueError as exc:
            raise UsageError(f"--cic value {item!r} is not an integer") from exc
    try:
        return CicConfig.from_dict(values)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _hb_spec(args) -> HalfbandSpec:
    if args.hb_order is not None and (args.hb_order < 2 or args.hb_order % 2):
        raise UsageError(f"--hb-order must be an even integer >= 2, got {args.hb_order}")
    try:
        return HalfbandSpec(
            half_order=None if args.hb_order is None else args.hb_order // 2,
            transition_width=args.transition,
            stopband_atten_db=args.atten,
            coeff_width=args.coeff_width,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# -- commands -----------------------------------------------------------------

def cmd_design(args) -> int:
    out = _out_dir(args)
    if args.cic:
        cfg = _parse_cic(args.cic)
        grid = np.linspace(0.0, 0.5, args.grid_points)
        db = cic_magnitude_response(cfg, grid)
        csv_path = out / "cic_response.csv"
        np.savetxt(csv_path, np.column_stack([grid, db]), delimiter=",", header="f,db", comments="")
        summary = {"cic": cfg.to_dict(), "internal_width": cfg.internal_width, "gain": cfg.gain,
                   "response_csv": str(csv_path)}
        (out / "cic_config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
        _emit(summary)
        return EXIT_OK
    spec = _hb_spec(args)
    try:
        c = design_halfband(spec)
    except DesignInfeasible as exc:
        print(f"design infeasible: {exc}", file=sys.stderr)
        _emit({"feasible": False, "achieved_atten_db": exc.achieved_atten_db,
               "achieved_ripple_db": exc.achieved_ripple_db, "spec": spec.to_dict()})
        return EXIT_INFEASIBLE
    csv_path = out / "halfband_coeffs.csv"
    np.savetxt(csv_path, c.h, fmt="%.17g")
    meta = {
        "order": c.order,
        "half_order": c.half_order,
        "transition_width": spec.transition_width,
        "coeff_width": c.coeff_width,
        "scale": None if c.coeff_width is None else 1 << c.frac_bits,
        "quantized": None if c.quantized is None else c.quantized.tolist(),
        "stopband_atten_db": c.stopband_atten_db,
        "passband_ripple_db": c.passband_ripple_db,
    }
    (out / "halfband_coeffs.csv.json").write_text(json.dumps(meta, indent=2) + "\n")
    _emit({k: v for k, v in meta.items() if k != "quantized"} | {"coeffs_csv": str(csv_path)})
    return EXIT_OK


def _src_config(args) -> SrcConfig:
    try:
        plan = plan_factor(args.factor)
    except UnsupportedFactor as exc:
        raise UsageError(str(exc)) from exc
    return SrcConfig(plan, kind=args.kind, lanes=args.lanes)


def cmd_process(args) -> int:
    out = _out_dir(args)
    s, meta = read_stream(args.input, sample_rate_hz=args.rate)
    kind = args.kind or ("fixed" if s.is_fixed else "float")
    if kind == "fixed" and not s.is_fixed:
        raise UsageError("fixed processing needs integer input (.i16 or CSV with a width sidecar)")
    if kind == "float" and s.is_fixed:
        s = SerialStream(s.samples * 2.0 ** -(s.width - 1), s.sample_rate_hz)
    args.kind = kind
    cfg = _src_config(args)
    y = run_src(serial_to_parallel(s, cfg.lanes), cfg)
    suffix = ".i16" if kind == "fixed" else ".csv"
    dest = Path(args.output) if args.output else out / f"{Path(args.input).stem}_d{cfg.total_factor}{suffix}"
    write_stream(dest, y, extra={"factor": cfg.total_factor})
    report = {
        "input": str(args.input),
        "output": str(dest),
        "input_count": len(s),
        "output_count": len(y),
        "input_rate_hz": s.sample_rate_hz,
        "output_rate_hz": y.sample_rate_hz,
        "kind": kind,
        "config": cfg.to_dict(),
    }
    dest.with_name(dest.name + ".report.json").write_text(json.dumps(report, indent=2) + "\n")
    _emit(report)
    return EXIT_OK


def _first_mismatch(a, b) -> Optional[int]:
    a, b = np.asarray(a), np.asarray(b)
    n = min(len(a), len(b))
    diff = np.flatnonzero(a[:n] != b[:n])
    if len(diff):
        return int(diff[0])
    return None if len(a) == len(b) else n


def _fault(y, enabled):
    if enabled and len(y):
        y = np.array(y, copy=True)
        y[len(y) // 2] += 1
    return y


def cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    n = args.samples
    cases = []

    def record(name, params, got, want):
        idx = _first_mismatch(got, want)
        case = {"suite": name, "params": params, "pass": idx is None, "count": int(len(want))}
        if idx is not None:
            case["first_mismatch"] = idx
            case["got"] = None if idx >= len(got) else int(got[idx])
            case["want"] = None if idx >= len(want) else int(want[idx])
            case["repro"] = {"seed": args.seed, "samples": n, **params}
        cases.append(case)

    x = SerialStream(rng.integers(-32768, 32768, n), 1.0, 16)
    inject = args.inject_fault
    for lanes in args.lanes:
        for stages in args.stages:
            for r in args.ratios:
                for m in args.delays:
                    cfg = CicConfig(stages, r, m)
                    want = run_serial_cic(x, cfg).samples
                    got = parallel_to_serial(run_parallel_cic(serial_to_parallel(x, lanes), cfg)).samples
                    record("cic", {"L": lanes, "N": stages, "R": r, "M": m}, _fault(got, inject), want)
                    inject = False
    coeffs = design_halfband(HalfbandSpec(transition_width=0.03))
    want = serial_fir(x, coeffs).samples[::2]
    for lanes in args.lanes:
        if lanes % 2:
            continue
        got = parallel_to_serial(halfband_decimate_two_path(serial_to_parallel(x, lanes), coeffs)).samples
        record("halfband", {"L": lanes, "half_order": coeffs.half_order}, got, want)
    for factor in args.factors:
        cfg = SrcConfig.for_factor(factor)
        xs = SerialStream(rng.integers(-32768, 32768, factor * args.src_outputs), 1.0, 16)
        want = run_serial_reference(xs, cfg).samples
        got = run_src(serial_to_parallel(xs, cfg.lanes), cfg).samples
        record("src", {"factor": factor}, got, want)
    failed = [c for c in cases if not c["pass"]]
    report = {"seed": args.seed, "cases": cases, "passed": len(cases) - len(failed), "failed": len(failed)}
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.report:
        Path(args.report).write_text(text)
    else:
        (_out_dir(args) / "verify_report.json").write_text(text)
    for c in failed:
        print(f"FAIL {c['suite']} {c['params']} first mismatch at sample {c['first_mismatch']}", file=sys.stderr)
    print(f"verify: {report['passed']} passed, {report['failed']} failed")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_respond(args) -> int:
    out = _out_dir(args)
    cfg = _src_config(args)
    factor = cfg.total_factor
    fmax = args.fmax if args.fmax is not None else min(0.5, 8.0 / factor)
    rep = cascade_response(cfg, np.linspace(0.0, fmax, args.grid_points))
    csv_path, json_path = rep.write(out / f"response_d{factor}.csv")
    _emit(rep.summary() | {"csv": str(csv_path), "json": str(json_path)})
    return EXIT_OK


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    cfg = _src_config(args)
    run_alias = args.antialias or not args.multitone
    run_multi = args.multitone or not args.antialias
    summary = {"factor": cfg.total_factor, "kind": cfg.kind, "rate_hz": args.rate}
    if run_alias:
        res = alias_attenuation_experiment(
            cfg, ToneSpec(args.desired_hz, args.amplitude), ToneSpec(args.alias_hz, args.amplitude),
            rate=args.rate, fft_size=args.fft_size)
        path = out / f"antialias_d{cfg.total_factor}.csv"
        np.savetxt(path, np.column_stack([res.spectrum.freqs, res.spectrum.power_db]),
                   delimiter=",", header="f_hz,dbfs", comments="")
        summary["antialias"] = res.summary() | {"spectrum_csv": str(path)}
    if run_multi:
        res = multitone_experiment(cfg, octave_multitone(args.rate / 20e9), rate=args.rate, fft_size=args.fft_size)
        path = out / f"multitone_d{cfg.total_factor}.csv"
        np.savetxt(path, np.column_stack([res.spectrum.freqs, res.spectrum.power_db]),
                   delimiter=",", header="f_hz,dbfs", comments="")
        summary["multitone"] = res.summary() | {"spectrum_csv": str(path)}
    (out / f"simulate_d{cfg.total_factor}.json").write_text(json.dumps(summary, indent=2, default=float) + "\n")
    _emit(summary)
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON RunConfig; explicit flags override its values")
    common.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or .)")
    common.add_argument("-v", "--verbose", action="store_true")

    factor = argparse.ArgumentParser(add_help=False)
    factor.add_argument("--factor", type=int, default=80, help="total decimation factor 80*r*2^h")
    factor.add_argument("--lanes", type=int, default=80)

    p = argparse.ArgumentParser(prog="parsrc", description="Parallel-serial CIC/halfband decimator")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", parents=[common], help="design a halfband or describe a CIC")
    d.add_argument("--hb-order", type=int, default=None, help="filter order (even); default: smallest meeting --atten")
    d.add_argument("--transition", type=float, default=0.03)
    d.add_argument("--atten", type=float, default=70.0)
    d.add_argument("--coeff-width", type=int, default=16)
    d.add_argument("--cic", nargs="+", metavar="KEY=VAL", help="CIC parameters, e.g. N=5 R=20 M=1")
    d.add_argument("--grid-points", type=int, default=4097)
    d.set_defaults(func=cmd_design)

    pr = sub.add_parser("process", parents=[common, factor], help="decimate a sample file")
    pr.add_argument("input")
    pr.add_argument("-o", "--output")
    pr.add_argument("--kind", choices=["fixed", "float"], default=None)
    pr.add_argument("--rate", type=float, default=None, help="input rate if no sidecar gives one")
    pr.set_defaults(func=cmd_process)

    v = sub.add_parser("verify", parents=[common], help="parallel vs serial bit-exactness")
    v.add_argument("--seed", type=int, default=1)
    v.add_argument("--samples", type=int, default=20000)
    v.add_argument("--lanes", type=_int_list, default=[2, 4, 6, 8, 80])
    v.add_argument("--stages", type=_int_list, default=[1, 3, 5])
    v.add_argument("--ratios", type=_int_list, default=[1, 2, 20])
    v.add_argument("--delays", type=_int_list, default=[1, 2])
    v.add_argument("--factors", type=_int_list, default=[80, 160, 1600])
    v.add_argument("--src-outputs", type=int, default=50)
    v.add_argument("--report")
    v.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("respond", parents=[common, factor], help="composite magnitude response")
    r.add_argument("--kind", choices=["fixed", "float"], default="fixed")
    r.add_argument("--grid-points", type=int, default=4097)
    r.add_argument("--fmax", type=float, default=None, help="upper grid frequency, cycles per input sample")
    r.set_defaults(func=cmd_respond)

    s = sub.add_parser("simulate", parents=[common, factor], help="multitone and alias-injection runs")
    s.add_argument("--antialias", action="store_true")
    s.add_argument("--multitone", action="store_true")
    s.add_argument("--kind", choices=["fixed", "float"], default="float")
    s.add_argument("--rate", type=float, default=20e6, help="desk-scale input rate")
    s.add_argument("--desired-hz", type=float, default=50e3)
    s.add_argument("--alias-hz", type=float, default=7.04e6)
    s.add_argument("--amplitude", type=float, default=0.45)
    s.add_argument("--fft-size", type=int, default=5000)
    s.set_defaults(func=cmd_simulate)
    return p


def _apply_config(parser, argv):
    """Re-parse with the --config file's values as defaults."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = RunConfig.load(args.config)
    if cfg.command and cfg.command != args.command:
        raise UsageError(f"config is for {cfg.command!r}, not {args.command!r}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    unknown = set(cfg.args) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    sub.set_defaults(**{k: v for k, v in cfg.args.items() if k not in ("config", "func", "command")})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(f"parsrc: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        code = args.func(args)
        if code == EXIT_OK and args.command != "verify":
            resolved = {k: v for k, v in vars(args).items() if k not in ("func", "command", "config")}
            RunConfig(args.command, resolved).write(_out_dir(args), f"run_config_{args.command}.json")
        return code
    except UsageError as exc:
        print(f"parsrc: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, MalformedStream) as exc:
        print(f"parsrc: {exc}", file=sys.stderr)
        return EXIT_IO
    except SrcError as exc:
        print(f"parsrc: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
