"""Command-line front end: simulate sweeps, synthesize traces, fit, report.

Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 fit
non-convergence.  All commands write files only; numeric output keeps full
precision and is locale independent.  Output files start with a
``# generated=<UTC time>`` line unless ``--no-timestamp`` is given, so that
reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from datetime import datetime, timezone

import numpy as np

from . import creutz
from .errors import FitError, SynthlatError, TraceParseError
from .fitting import FitParams, fit_global, fit_report_dict
from .lattice import LatticeSpec, load_lattice
from .scattering import analytic_plaquette_S, s_eigenmodes, scattering_sweep, write_sweep_csv
from .traces import db_to_linear, read_traces, synthesize_traces, write_traces

_EVOLVE_STATES = ("chi", "a1", "b1", "a2", "b2", "L", "R")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _timestamp(args) -> str | None:
    if args.no_timestamp:
        return None
    return datetime.now(timezone.utc).isoformat()


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise _UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _delta_grid(args) -> np.ndarray:
    if args.points < 2:
        raise _UsageError("--points must be >= 2")
    if args.dmax <= args.dmin:
        raise _UsageError("--dmax must exceed --dmin")
    return np.linspace(args.dmin, args.dmax, args.points)


def _fit_params_from_lattice(spec: LatticeSpec, phi_off: float, c_scales) -> FitParams:
    links = tuple(c.pair for c in spec.couplings)
    loop = spec.loop_link
    n = spec.dim
    if c_scales is None:
        c_scales = np.ones(n * (n - 1))
    return FitParams(
        nu=spec.nu_vector(),
        kappa=spec.kappa_vector(),
        eta=spec.eta_vector(),
        beta=np.array([c.beta for c in spec.couplings]),
        phi_off=phi_off,
        c_scales=c_scales,
        labels=spec.labels,
        links=links,
        loop_link=None if loop is None else loop.pair,
    )


def _write_csv(path, header: str, rows, timestamp: str | None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if timestamp is not None:
            fh.write(f"# generated={timestamp}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.15g}" if isinstance(v, float) else str(v) for v in row))
            fh.write("\n")


def _cmd_simulate(args) -> int:
    spec = load_lattice(args.config)
    sweep = scattering_sweep(spec, _delta_grid(args), _parse_floats(args.phases), args.phi_off)
    write_sweep_csv(sweep, args.out, timestamp=_timestamp(args))
    return 0


def _cmd_synth(args) -> int:
    spec = load_lattice(args.config)
    c_scales = None
    if args.c_scales is not None:
        c_scales = _parse_floats(args.c_scales)
        n = spec.dim
        if len(c_scales) != n * (n - 1):
            raise _UsageError(f"--c-scales needs {n * (n - 1)} values, got {len(c_scales)}")
    fp = _fit_params_from_lattice(spec, args.phi_off, c_scales)
    ts = synthesize_traces(
        spec,
        fp,
        _delta_grid(args),
        _parse_floats(args.phases),
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    write_traces(ts, args.out, timestamp=_timestamp(args))
    return 0


def _cmd_fit(args) -> int:
    spec = load_lattice(args.config)
    ts = read_traces(args.traces)
    converted = [db_to_linear(t) if t.units == "dB" else t for t in ts]
    ts_lin = type(ts)(converted, provenance=ts.provenance)
    init = _fit_params_from_lattice(spec, args.phi_off_init, None)
    result = fit_global(ts_lin, init)
    report = fit_report_dict(result, init)
    if not args.no_timestamp:
        report["generated"] = datetime.now(timezone.utc).isoformat()
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return 0


def _cmd_bands(args) -> int:
    p = creutz.CreutzParams(args.td, args.tv, args.th, args.phi)
    ks = np.linspace(-math.pi, math.pi, args.k)
    bands = creutz.band_structure(p, ks)
    rows = [(float(k), float(b[0]), float(b[1])) for k, b in zip(ks, bands)]
    _write_csv(args.out, "k_rad,e_lower,e_upper", rows, _timestamp(args))
    return 0


def _cmd_symmetry(args) -> int:
    p = creutz.CreutzParams(args.td, args.tv, args.th, args.phi)
    ks = np.linspace(-math.pi, math.pi, args.k)
    rows = [(kind, float(creutz.check_symmetry(p, kind, ks))) for kind in ("TR", "C", "S")]
    _write_csv(args.out, "kind,max_deviation", rows, _timestamp(args))
    return 0


def _state_vector(name: str) -> np.ndarray:
    if name == "chi":
        return creutz.chi_state()
    if name in ("L", "R"):
        return creutz.zero_mode_state(name)
    return creutz.basis_state(name)


def _cmd_evolve(args) -> int:
    state = _state_vector(args.state)
    times = np.linspace(0.0, args.tmax, args.steps)
    avg = creutz.time_averaged_position(state, args.tmax)
    rows = []
    for t in times:
        m = creutz.position_expectation(creutz.evolve_state(state, float(t)))
        rows.append((float(t), float(m), float(avg)))
    _write_csv(args.out, "t,m_expect,m_timeavg", rows, _timestamp(args))
    return 0


def _cmd_plaquette(args) -> int:
    s = analytic_plaquette_S(args.beta)
    vals, vecs = s_eigenmodes(s)
    rows = []
    for i in range(vals.size):
        row = [i, float(vals[i].real), float(vals[i].imag), float(abs(vals[i] - 1.0))]
        for amp in vecs[:, i]:
            row.extend([float(amp.real), float(amp.imag)])
        rows.append(tuple(row))
    header = "index,eig_re,eig_im,dist_from_1," + ",".join(
        f"v_{n}_{part}" for n in ("a", "b", "c", "d") for part in ("re", "im")
    )
    _write_csv(args.out, header, rows, _timestamp(args))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="synthlat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_out(p):
        p.add_argument("--out", required=True, help="output file path")
        p.add_argument(
            "--no-timestamp",
            action="store_true",
            help="omit the generated-at header line for byte-identical reruns",
        )

    p = sub.add_parser("simulate", help="sweep the scattering matrix over detuning and phase")
    p.add_argument("--config", required=True, help="lattice configuration JSON")
    p.add_argument("--dmin", type=float, default=-10.0, help="scan start, MHz")
    p.add_argument("--dmax", type=float, default=10.0, help="scan end, MHz")
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--phases", default="0", help="comma-separated loop phases, radians")
    p.add_argument("--phi-off", type=float, default=0.0, dest="phi_off")
    add_out(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("synth", help="synthesize a trace set from a lattice configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--dmin", type=float, default=-10.0)
    p.add_argument("--dmax", type=float, default=10.0)
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--phases", default="0", help="comma-separated loop phases, radians")
    p.add_argument("--phi-off", type=float, default=0.0, dest="phi_off")
    p.add_argument("--c-scales", default=None, dest="c_scales",
                   help="comma-separated transmission scale factors, row-major")
    p.add_argument("--noise-sigma", type=float, default=0.0, dest="noise_sigma")
    p.add_argument("--seed", type=int, default=None)
    add_out(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fit", help="run the two-stage global fit on a trace file")
    p.add_argument("--config", required=True, help="lattice configuration with initial values")
    p.add_argument("--traces", required=True, help="trace file to fit")
    p.add_argument("--phi-off-init", type=float, default=0.0, dest="phi_off_init")
    add_out(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("bands", help="band structure over the Brillouin zone")
    p.add_argument("--td", type=float, required=True)
    p.add_argument("--tv", type=float, required=True)
    p.add_argument("--th", type=float, required=True)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--k", type=int, default=501, help="number of k points")
    add_out(p)
    p.set_defaults(func=_cmd_bands)

    p = sub.add_parser("symmetry", help="discrete-symmetry deviations of the band Hamiltonian")
    p.add_argument("--td", type=float, required=True)
    p.add_argument("--tv", type=float, required=True)
    p.add_argument("--th", type=float, required=True)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--k", type=int, default=201)
    add_out(p)
    p.set_defaults(func=_cmd_symmetry)

    p = sub.add_parser("evolve", help="plaquette position expectation versus time")
    p.add_argument("--state", choices=_EVOLVE_STATES, default="chi")
    p.add_argument("--tmax", type=float, default=math.pi)
    p.add_argument("--steps", type=int, default=1000)
    add_out(p)
    p.set_defaults(func=_cmd_evolve)

    p = sub.add_parser("plaquette", help="eigen-analysis of the closed-form plaquette scattering")
    p.add_argument("--beta", type=float, default=1.0)
    add_out(p)
    p.set_defaults(func=_cmd_plaquette)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return 3
    except (TraceParseError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (SynthlatError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
