"""Command-line front end: ``mdshape {air,nli,ssfm,report}``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical
non-convergence.  Every run writes ``manifest.json`` next to its outputs.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .awgn import (AirEvaluator, NonConvergenceError, parse_grid, rates_csv, required_snr,
                   shannon_required_snr, spectral_efficiency)
from .config import ConfigError, Scenario, load_scenario
from .constellation import ConstellationError
from .formats import UnknownFormatError, available_formats, get_format

logger = logging.getLogger("mdshape")

EXIT_OK, EXIT_USAGE, EXIT_NONCONV = 0, 2, 3
GAUSSIAN = "gaussian"


class UsageError(Exception):
    pass


def _db(x: float) -> str:
    return f"{x:.3f}"


def _formats(text: str) -> list[str]:
    names = [n.strip() for n in text.split(",") if n.strip()]
    if not names:
        raise UsageError("empty format list")
    return names


def _load_format(name: str):
    if name.lower() == GAUSSIAN:
        return GAUSSIAN
    try:
        return get_format(name)
    except UnknownFormatError as e:
        msg = e.args[0] if e.args else name
        if "available" not in msg:
            msg += f"; available: {', '.join(available_formats())}"
        raise UsageError(msg) from None


def _scenario(name: str) -> Scenario:
    return load_scenario(name)


def _fingerprint(c) -> str:
    from .report import _fingerprint as fp
    return GAUSSIAN if isinstance(c, str) else fp(c)


def write_manifest(out: Path, args, scenarios=(), formats=(), seeds=None, extra=None) -> Path:
    """Configuration echo sufficient to rerun the command."""
    doc = {
        "tool": "mdshape", "version": __version__, "command": args.command,
        "argv": sys.argv[1:], "options": {k: v for k, v in vars(args).items()
                                          if k not in ("func",) and _jsonable(v)},
        "backend": kernels.BACKEND, "python": platform.python_version(),
        "numpy": np.__version__, "seeds": seeds or {},
        "scenarios": {s.id: dict(s.to_dict(), config_hash=s.config_hash()) for s in scenarios},
        "formats": {getattr(c, "name", str(c)): _fingerprint(c) for c in formats},
    }
    if extra:
        doc.update(extra)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "manifest.json"
    path.write_text(_dumps(doc))
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, default=_json_default)


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    p = out / name
    p.write_text(text)
    logger.info("wrote %s", p)
    return p


# ----------------------------------------------------------------------------
# subcommands

def cmd_air(args) -> int:
    metrics = ["MI", "GMI"] if args.metric == "both" else [args.metric.upper()]
    grid = parse_grid(args.grid) if args.grid else None
    cons = [_load_format(n) for n in _formats(args.formats)]
    out = Path(args.out)
    rows, rate_rows = [], []
    print("format,metric,target,se_bits_4d,snr_req_db,snr_shannon_db,delta_req_db")
    for c in cons:
        if c == GAUSSIAN:
            raise UsageError("the Gaussian input has no finite-alphabet AIR; use report")
        for metric in metrics:
            se = spectral_efficiency(c, args.target, args.rate_loss)
            req = required_snr(c, metric, args.target, estimator=args.estimator,
                               samples=args.samples, seed=args.seed, rate_loss=args.rate_loss)
            sh = shannon_required_snr(se, args.target)
            row = dict(format=c.name, metric=metric, target=args.target, se_bits_4d=se,
                       snr_req_db=req, snr_shannon_db=sh, delta_req_db=req - sh)
            rows.append(row)
            print(f"{c.name},{metric},{args.target:g},{se:.4f},{_db(req)},{_db(sh)},{_db(req - sh)}")
            if grid is not None:
                ev = AirEvaluator(c, metric, args.estimator, args.samples, args.seed)
                rate_rows += [(c.name, metric, s, ev.point(s)) for s in grid]
    lines = ["format,metric,target,se_bits_4d,snr_req_db,snr_shannon_db,delta_req_db"]
    lines += [f"{r['format']},{r['metric']},{r['target']:g},{r['se_bits_4d']:.6f},"
              f"{_db(r['snr_req_db'])},{_db(r['snr_shannon_db'])},{_db(r['delta_req_db'])}"
              for r in rows]
    _write(out, "required_snr.csv", "\n".join(lines) + "\n")
    if rate_rows:
        _write(out, "rates.csv", rates_csv(rate_rows))
    write_manifest(out, args, formats=cons, seeds={"air": args.seed})
    return EXIT_OK


def _nli_source(c):
    from .nli import GaussianCumulants
    return GaussianCumulants(np.eye(2)) if c == GAUSSIAN else c


def cmd_nli(args) -> int:
    from .nli import eta_total, optimal_launch_power, snr_sweep
    from .nli.model import is_unimodal
    sc = _scenario(args.scenario)
    c = _load_format(args.format)
    src = _nli_source(c)
    channels = None
    if args.channels:
        try:
            channels = [int(x) for x in args.channels.split(",")]
        except ValueError:
            raise UsageError(f"--channels must be comma-separated integer offsets, got {args.channels!r}") from None
    bd = eta_total(src, sc.link, sc.wdm, channels=channels)
    p_opt, snr_opt = optimal_launch_power(src, sc.link, sc.wdm, breakdown=bd)
    doc = {"scenario": sc.id, "breakdown": bd.to_dict(), "p_opt_dbm": p_opt,
           "snr_eff_opt_db": snr_opt}
    print(f"{sc.id} {bd.format}: eta {bd.eta:.6g} 1/W^2 (x {bd.eta_x:.6g}, y {bd.eta_y:.6g}), "
          f"eta_x=eta_y {bd.symmetric}")
    print(f"P_opt {_db(p_opt)} dBm, SNR_eff {_db(snr_opt)} dB")
    if args.sweep:
        powers = parse_grid(args.sweep)
        snr = snr_sweep(bd, sc.link, sc.wdm, powers)
        doc["sweep"] = {"p_dbm": [round(float(p), 6) for p in powers],
                        "snr_eff_db": [round(float(s), 3) for s in snr],
                        "unimodal": is_unimodal(snr)}
        print(f"sweep {powers[0]:g}:{powers[-1]:g} dBm, unimodal {doc['sweep']['unimodal']}")
    if args.compare == "egn":
        if c == GAUSSIAN:
            raise UsageError("--compare egn needs a constellation")
        egn = eta_total(c, sc.link, sc.wdm, channels=channels, path="egn")
        p = 1e-3 * 10 ** (p_opt / 10)
        s_model = float(snr_sweep(bd, sc.link, sc.wdm, [p_opt])[0])
        s_egn = float(snr_sweep(egn, sc.link, sc.wdm, [p_opt])[0])
        doc["compare"] = {"path": "egn", "eta": egn.eta, "eta_x": egn.eta_x, "eta_y": egn.eta_y,
                          "snr_model_db": s_model, "snr_egn_db": s_egn,
                          "gap_at_p_opt_db": s_model - s_egn, "p_opt_w": p}
        print(f"EGN eta {egn.eta:.6g}; SNR gap at P_opt (model - EGN) {_db(s_model - s_egn)} dB")
    out = Path(args.out)
    _write(out, "nli.json", _dumps(doc))
    write_manifest(out, args, scenarios=[sc], formats=[c])
    return EXIT_OK


def cmd_ssfm(args) -> int:
    from dataclasses import replace
    from . import ssfm
    from .nli import eta_total, optimal_launch_power, snr_sweep
    sc = _scenario(args.profile)
    c = _load_format(args.format)
    sym = ssfm.GaussianSymbols() if c == GAUSSIAN else c
    kw = {}
    if args.runs:
        kw["runs"] = args.runs
    if args.symbols:
        kw["symbols_per_run"] = args.symbols
    if args.seed is not None:
        kw["seed"] = args.seed
    sim = replace(sc.sim, **kw) if kw else sc.sim
    out = Path(args.out)
    doc = {"scenario": sc.id, "config_hash": sc.config_hash(), "format": getattr(c, "name", c)}
    if args.oracle == "rp1":
        r = ssfm.rp1_oracle(sym, sc.link, sc.wdm, sim, args.pairing, method=args.method)
        bd = eta_total(_nli_source(c), sc.link, sc.wdm, channels=list(r.channels))
        doc.update(oracle="rp1", pairing=args.pairing, eta=r.eta, eta_x=r.eta_x, eta_y=r.eta_y,
                   stderr=r.stderr, channels=list(r.channels), method=r.method, eps=r.eps,
                   eps_rel_change=r.eps_rel_change, xpm=r.xpm, model_eta=bd.eta,
                   rel_diff=r.eta / bd.eta - 1)
        print(f"RP1 {args.pairing}: eta {r.eta:.6g} +- {r.stderr:.2g} 1/W^2, model {bd.eta:.6g} "
              f"({100 * (r.eta / bd.eta - 1):+.2f}%)")
    else:
        nonlinear = args.nonlinear == "on"
        ase = args.ase == "on"
        bd = None
        if args.power == "opt":
            bd = eta_total(_nli_source(c), sc.link, sc.wdm)
            p_dbm = optimal_launch_power(None, sc.link, sc.wdm, breakdown=bd)[0]
        else:
            try:
                p_dbm = float(args.power) if args.power is not None else sc.wdm.launch_power_dbm
            except ValueError:
                raise UsageError(f"--power must be a number in dBm or 'opt', got {args.power!r}") from None
        m = ssfm.simulate_snr(sym, sc.link, sc.wdm, sim, p_dbm, ase=ase, nonlinear=nonlinear)
        doc.update(m.to_dict(), p_dbm=p_dbm, nonlinear=nonlinear, ase=ase)
        line = f"SSFM {doc['format']} at {_db(p_dbm)} dBm: SNR_eff {_db(m.snr_db)} +- {_db(m.stderr_db)} dB"
        if nonlinear and ase:
            bd = bd or eta_total(_nli_source(c), sc.link, sc.wdm)
            doc["model_snr_db"] = float(snr_sweep(bd, sc.link, sc.wdm, [p_dbm])[0])
            line += f" (model {_db(doc['model_snr_db'])} dB)"
        print(line)
    print(f"config hash {sc.config_hash()}")
    _write(out, "ssfm.json", _dumps(doc))
    write_manifest(out, args, scenarios=[sc], formats=[c], seeds={"sim": sim.seed, "runs": sim.runs},
                   extra={"sim": sim.__dict__})
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import compare_formats, to_csv, to_json
    if args.baseline != GAUSSIAN:
        raise UsageError("only the gaussian baseline is available")
    scenarios = [_scenario(s) for s in _formats(args.scenarios)]
    cons = [_load_format(n) for n in _formats(args.formats)]
    rows = []
    for sc in scenarios:
        rows += compare_formats(cons, sc, args.metric.upper(), args.target, seed=args.seed)
    out = Path(args.out)
    text = to_csv(rows)
    _write(out, "report.csv", text)
    _write(out, "report.json", to_json(rows, scenarios, {"baseline": args.baseline}))
    write_manifest(out, args, scenarios=scenarios, formats=cons, seeds={"air": args.seed})
    sys.stdout.write(text)
    return EXIT_OK


# ----------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mdshape", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("air", help="MI/GMI and required SNR on the AWGN channel")
    a.add_argument("--formats", required=True, help="comma-separated format names or point files")
    a.add_argument("--metric", choices=("mi", "gmi", "both"), default="mi", type=str.lower)
    a.add_argument("--target", type=float, default=0.8, help="normalized rate")
    a.add_argument("--grid", help="SNR grid start:step:stop in dB for a rate table")
    a.add_argument("--rate-loss", type=float, default=0.0, help="bits per symbol")
    a.add_argument("--estimator", default="auto", choices=("auto", "gauss_hermite", "monte_carlo"))
    a.add_argument("--samples", type=int, default=10**6)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", default="mdshape_out/air")
    a.set_defaults(func=cmd_air)

    n = sub.add_parser("nli", help="NLI coefficient, optimum launch power and SNR sweep")
    n.add_argument("--scenario", required=True, help="built-in scenario id or .ini path")
    n.add_argument("--format", required=True)
    n.add_argument("--channels", help="comma-separated channel offsets (0 = channel of interest)")
    n.add_argument("--sweep", help="launch powers start:step:stop in dBm")
    n.add_argument("--compare", choices=("egn",))
    n.add_argument("--out", default="mdshape_out/nli")
    n.set_defaults(func=cmd_nli)

    s = sub.add_parser("ssfm", help="split-step simulation or perturbation oracle")
    s.add_argument("--profile", "--scenario", dest="profile", required=True)
    s.add_argument("--format", required=True)
    s.add_argument("--power", help="launch power per channel in dBm, or 'opt' for the model optimum")
    s.add_argument("--nonlinear", choices=("on", "off"), default="on")
    s.add_argument("--ase", choices=("on", "off"), default="on")
    s.add_argument("--oracle", choices=("rp1",))
    s.add_argument("--pairing", choices=("all", "sci", "x1"), default="all")
    s.add_argument("--method", choices=("epsilon", "direct"), default="epsilon")
    s.add_argument("--runs", type=int)
    s.add_argument("--symbols", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", default="mdshape_out/ssfm")
    s.set_defaults(func=cmd_ssfm)

    r = sub.add_parser("report", help="shaping-gain ledger over scenarios and formats")
    r.add_argument("--scenarios", required=True, help="comma-separated scenario ids or paths")
    r.add_argument("--formats", required=True)
    r.add_argument("--metric", choices=("mi", "gmi"), default="mi", type=str.lower)
    r.add_argument("--target", type=float, default=0.8)
    r.add_argument("--baseline", default=GAUSSIAN)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default="mdshape_out/report")
    r.set_defaults(func=cmd_report)
    return p


# options whose values may start with a minus sign (negative dBm or dB grids)
_SIGNED = ("--sweep", "--grid", "--power")


def _join_signed(argv):
    out, it = [], iter(argv)
    for tok in it:
        if tok in _SIGNED:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _join_signed(sys.argv[1:] if argv is None else list(argv))
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"mdshape: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ConstellationError, ValueError) as e:
        print(f"mdshape: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NonConvergenceError, ArithmeticError, RuntimeError) as e:
        print(f"mdshape: numerical failure: {e}", file=sys.stderr)
        return EXIT_NONCONV


if __name__ == "__main__":
    sys.exit(main())
