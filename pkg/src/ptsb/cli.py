"""Command-line entry point: ``ptsb bath|spectrum|dynamics|validate``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import PRESETS, load_config
from .errors import NumericalError, ParameterError
from .runner import run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
FULL_SCALE_M = 20000

# flag -> (RunConfig field, type, help)
_MODEL_FLAGS = {
    "--delta": ("delta", float, "tunneling amplitude"),
    "--eps": ("eps", float, "bias strength"),
    "--lambda": ("lam", float, "coupling strength"),
    "--bias-kind": ("bias_kind", str, "imaginary (PT-symmetric) or real (Hermitian)"),
    "--s": ("s", float, "spectral exponent"),
    "--omega-c": ("omega_c", float, "cutoff frequency"),
}
_BATH_FLAGS = {
    "--scheme": ("scheme", str, "wilson, uniform, linear_finite or single"),
    "--Lambda": ("Lambda", float, "logarithmic discretization ratio"),
    "--M": ("M", int, "number of bath modes"),
    "--omega-max": ("omega_max", float, "upper frequency of the uniform grid"),
    "--omega-1": ("omega_1", float, "lowest linear_finite frequency"),
    "--omega-M": ("omega_M", float, "highest linear_finite frequency"),
    "--omega-0": ("omega_0", float, "single-mode frequency"),
}
_SWEEP_FLAGS = {
    "--axis": ("axis", str, "sweep axis: lambda or eps"),
    "--grid-min": ("grid_min", float, "first grid value"),
    "--grid-max": ("grid_max", float, "last grid value"),
    "--grid-count": ("grid_count", int, "number of grid points"),
    "--branches": ("branches", int, "branches to track (1 or 2)"),
    "--tol": ("tol", float, "self-consistency residual tolerance"),
    "--delta-ep": ("delta_ep", float, "|Im E| threshold for the broken phase"),
}
_VALIDATE_FLAGS = {
    "--n-max": ("n_max", int, "Fock cutoff per mode (0: default)"),
    "--check-step": ("check_step", int, "cutoff increment of the convergence check (0: default)"),
    "--check-every": ("check_every", int, "convergence-check every n-th grid point"),
}
_DYNAMICS_FLAGS = {
    "--t-end": ("t_end", float, "final time"),
    "--rtol": ("rtol", float, "relative tolerance"),
    "--atol": ("atol", float, "absolute tolerance"),
    "--stride": ("stride", float, "output sampling interval"),
    "--r-floor": ("r_floor", float, "initial spin-down amplitude"),
}
_RUN_FLAGS = {
    "--out-dir": ("out_dir", str, "output directory (env PTSB_OUTPUT_DIR)"),
    "--workers": ("workers", int, "parallel worker processes (env PTSB_WORKERS)"),
    "--name": ("name", str, "output file stem"),
}

_BY_MODE = {
    "bath": (_MODEL_FLAGS, _BATH_FLAGS, _RUN_FLAGS),
    "spectrum": (_MODEL_FLAGS, _BATH_FLAGS, _SWEEP_FLAGS, _RUN_FLAGS),
    "dynamics": (_MODEL_FLAGS, _BATH_FLAGS, _DYNAMICS_FLAGS, _RUN_FLAGS),
    "validate": (_MODEL_FLAGS, _BATH_FLAGS, _SWEEP_FLAGS, _VALIDATE_FLAGS, _RUN_FLAGS),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ptsb", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="mode", required=True, parser_class=_Parser)
    for mode, groups in _BY_MODE.items():
        p = sub.add_parser(mode)
        p.add_argument("--config", metavar="PATH", help="INI config file")
        names = sorted(k for k, v in PRESETS.items() if v["mode"] == mode)
        p.add_argument("--preset", metavar="NAME",
                       help=f"figure preset ({', '.join(names) or 'none'})")
        if mode == "dynamics":
            p.add_argument("--full-scale", action="store_true",
                           help=f"use M={FULL_SCALE_M} modes instead of the desk default")
        for group in groups:
            for flag, (dest, kind, text) in group.items():
                p.add_argument(flag, dest=dest, type=kind, default=None, help=text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("mode", "config", "preset", "verbose", "full_scale")
                 and v is not None}
    if getattr(args, "full_scale", False):
        overrides.setdefault("M", FULL_SCALE_M)
    try:
        cfg = load_config(args.mode, args.config, args.preset, overrides)
        for art in run(cfg):
            print(art.csv)
    except ParameterError as exc:
        print(f"ptsb: config error: {_where(exc)}{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"ptsb: numerical failure: {_where(exc)}{exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _where(exc):
    point = getattr(exc, "point", None)
    return f"[{point}] " if point else ""


if __name__ == "__main__":
    sys.exit(main())
