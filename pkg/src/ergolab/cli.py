"""Command-line interface: maps + observables -> reproducible JSON reports.

Exit codes: 0 success, 2 configuration error, 3 numerical-convergence
error, 4 analysis error, 5 verification failure.

Reports are byte-identical across reruns with the same config and seed:
JSON keys are sorted, floats use repr, and timestamps live only in the
``*.meta.json`` sidecar files.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .decay import decay_report
from .errors import (
    ConfigurationError,
    ConvergenceError,
    ErgolabError,
    FitError,
    InvalidInputError,
    ParameterError,
    TruncationError,
)
from .function_space import lp_norm
from .gordin import coboundary_detect, gordin_decompose
from .maps import builtin_map
from .montecarlo import (
    EnsembleConfig,
    PathEnsemble,
    run_ensemble,
    sigma_green_kubo,
    sigma_variance_growth,
)
from .observables import build_observable
from .stats import LimitTestReport, clt_test, fclt_test
from .transfer import resolve_measure

SCHEMA = "ergolab/1"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_ANALYSIS = 4
EXIT_VERIFY = 5

# estimates below this fraction of ||h||_2 are routed to coboundary detection
SIGMA_SMALL_FRACTION = 0.05


def _load_config(path: str) -> dict:
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"bad config line: {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


_INT_KEYS = {"cells", "n", "n_max", "samples", "burnin", "seed", "threads", "m"}


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    """Config file supplies defaults; explicit flags win."""
    if not getattr(args, "config", None):
        return args
    cfg = _load_config(args.config)
    for key, value in cfg.items():
        if not hasattr(args, key):
            raise ConfigurationError(f"unknown config key {key!r}")
        if getattr(args, key) is None:
            setattr(args, key, int(value) if key in _INT_KEYS else value)
    return args


def _emit(args, name: str, payload: dict, csv_files: Optional[dict] = None):
    """Print the JSON report; mirror it (plus CSV/dat data) into --out."""
    payload = {"schema": SCHEMA, **payload}
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    sys.stdout.write(text)
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / f"{name}.json").write_text(text)
        meta = {
            "command": name,
            "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "version": __version__,
        }
        (outdir / f"{name}.meta.json").write_text(
            json.dumps(meta, sort_keys=True, indent=2) + "\n"
        )
        for fname, content in (csv_files or {}).items():
            (outdir / fname).write_text(content)


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise ConfigurationError(f"--{name} is required for this command")


def _setup(args, need_obs: bool = True):
    imap = builtin_map(args.map)
    nu = resolve_measure(imap, imap.default_grid(args.cells))
    if not need_obs:
        return imap, nu, None
    _require(args, "obs")
    return imap, nu, build_observable(args.obs, imap, nu)


def _ensemble_config(args) -> EnsembleConfig:
    _require(args, "seed")
    return EnsembleConfig(
        samples=args.samples,
        n=args.n,
        seed=args.seed,
        burnin=args.burnin,
        threads=args.threads,
    )


def cmd_density(args) -> int:
    imap, nu, _ = _setup(args, need_obs=False)
    payload = {
        "map": imap.label,
        "cells": args.cells,
        "measure": nu.name,
        "closed_form": nu.closed_form,
        "total_mass": float(nu.masses.sum()),
    }
    dat = "\n".join(f"{x!r} {v!r}" for x, v in zip(nu.grid.nodes, nu.values)) + "\n"
    _emit(args, "density", payload,
          {"density.csv": nu.to_csv(), "density.dat": dat})
    return EXIT_OK


def cmd_decay(args) -> int:
    imap, nu, obs = _setup(args)
    report = decay_report(imap, nu, obs.grid_function, observable=args.obs,
                          n_max=args.n_max)
    dat_lines = [
        f"{i + 1} {report.l1[i]!r} {report.l2[i]!r} {report.cesaro[i]!r}"
        for i in range(report.l1.size)
    ]
    _emit(args, "decay", report.to_json(),
          {"decay.csv": report.to_csv(), "decay.dat": "\n".join(dat_lines) + "\n"})
    return EXIT_OK


def cmd_gordin(args) -> int:
    imap, nu, obs = _setup(args)
    gd = gordin_decompose(imap, nu, obs.grid_function)
    payload = {"map": imap.label, "observable": args.obs, **gd.to_json()}
    _emit(args, "gordin", payload,
          {"martingale_part.csv": gd.h_tilde.to_csv()})
    return EXIT_OK


def _sigma_estimates(imap, nu, obs, args):
    h = obs.grid_function
    gk = sigma_green_kubo(imap, nu, h)
    cfg = _ensemble_config(args)
    schedule = sorted({max(1, args.n // 2**k) for k in range(4, -1, -1)})
    vg = sigma_variance_growth(imap, obs, schedule, cfg)
    gd = gordin_decompose(imap, nu, h)
    return gk, vg, gd


def cmd_sigma(args) -> int:
    imap, nu, obs = _setup(args)
    gk, vg, gd = _sigma_estimates(imap, nu, obs, args)
    payload = {
        "map": imap.label,
        "observable": args.obs,
        "green_kubo": gk.to_json(),
        "variance_growth": [{"n": n, "sigma": s} for n, s in vg],
        "martingale_norm": gd.sigma_mart,
    }
    _emit(args, "sigma", payload)
    return EXIT_OK


def _limit_tests(imap, nu, obs, args, sigma: float, sigma_values: dict,
                 sigma_used: str, run=None, with_fclt: bool = True):
    """Shared CLT/FCLT test harness over one ensemble run."""
    h_l2 = lp_norm(obs.grid_function, 2)
    cfg = _ensemble_config(args)
    if run is None:
        stride = cfg.n // args.m if with_fclt and sigma > 0 else 0
        run = run_ensemble(imap, obs, cfg, path_stride=stride)
    report = LimitTestReport(imap.label, args.obs, sigma=sigma_values,
                             sigma_used=sigma_used)
    report.entries.append(clt_test(run.S, cfg.n, sigma, h_l2=h_l2))
    if with_fclt and sigma > 0:
        scale = 1.0 / (sigma * np.sqrt(cfg.n))
        paths = PathEnsemble(
            times=np.arange(args.m + 1) / args.m,
            sup=run.sup * scale,
            terminal=run.S * scale,
            occupation=run.occupation,
            n=cfg.n,
            m=args.m,
            sigma=sigma,
        )
        report.entries.extend(fclt_test(paths))
        return report, paths
    return report, None


def cmd_clt(args) -> int:
    imap, nu, obs = _setup(args)
    gk = sigma_green_kubo(imap, nu, obs.grid_function)
    report, _ = _limit_tests(imap, nu, obs, args, gk.sigma,
                             {"green_kubo": gk.sigma}, "green_kubo",
                             with_fclt=False)
    _emit(args, "clt", report.to_json())
    return EXIT_OK if report.all_pass else EXIT_VERIFY


def cmd_fclt(args) -> int:
    imap, nu, obs = _setup(args)
    gk = sigma_green_kubo(imap, nu, obs.grid_function)
    report, paths = _limit_tests(imap, nu, obs, args, gk.sigma,
                                 {"green_kubo": gk.sigma}, "green_kubo")
    csv_files = {"fclt_functionals.csv": paths.functionals_csv()} if paths else None
    _emit(args, "fclt", report.to_json(), csv_files)
    return EXIT_OK if report.all_pass else EXIT_VERIFY


def _verify_payload(args) -> dict:
    imap, nu, obs = _setup(args)
    h = obs.grid_function
    h_l2 = lp_norm(h, 2)

    decay = decay_report(imap, nu, h, observable=args.obs)
    gd = gordin_decompose(imap, nu, h)
    gk, vg, _ = (sigma_green_kubo(imap, nu, h),
                 sigma_variance_growth(imap, obs,
                                       sorted({max(1, args.n // 2**k)
                                               for k in range(4, -1, -1)}),
                                       _ensemble_config(args)),
                 None)
    sigma_values = {
        "green_kubo": gk.sigma,
        "variance_growth": vg[-1][1],
        "martingale_norm": gd.sigma_mart,
    }

    coboundary = None
    if gk.sigma < SIGMA_SMALL_FRACTION * h_l2 or obs.is_declared_coboundary:
        coboundary = coboundary_detect(imap, nu, h)

    if coboundary is not None and coboundary.is_coboundary:
        sigma, sigma_used = 0.0, "green_kubo"
    else:
        sigma, sigma_used = gk.sigma, "green_kubo"

    report, _ = _limit_tests(imap, nu, obs, args, sigma, sigma_values,
                             sigma_used)
    payload = report.to_json()
    payload["decay"] = decay.to_json()
    payload["gordin"] = gd.to_json()
    payload["coboundary"] = coboundary.to_json() if coboundary else None
    payload["h_l2"] = h_l2
    payload["verdict"] = report.all_pass
    return payload


def cmd_verify(args) -> int:
    payload = _verify_payload(args)
    _emit(args, "verify", payload)
    return EXIT_OK if payload["verdict"] else EXIT_VERIFY


def cmd_report(args) -> int:
    """Everything at once: density, decay, sigma, verification."""
    imap, nu, _ = _setup(args, need_obs=False)
    payload = _verify_payload(args)
    payload["density"] = {
        "measure": nu.name,
        "closed_form": nu.closed_form,
    }
    dat = "\n".join(f"{x!r} {v!r}" for x, v in zip(nu.grid.nodes, nu.values)) + "\n"
    dec = payload["decay"]
    dat_lines = [
        f"{i + 1} {dec['l1'][i]!r} {dec['l2'][i]!r} {dec['cesaro'][i]!r}"
        for i in range(len(dec["l1"]))
    ]
    _emit(args, "report", payload, {
        "density.csv": nu.to_csv(),
        "density.dat": dat,
        "decay.dat": "\n".join(dat_lines) + "\n",
    })
    return EXIT_OK if payload["verdict"] else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ergolab",
        description="Transfer-operator diagnostics and CLT/FCLT verification "
                    "for interval maps",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "density": cmd_density,
        "decay": cmd_decay,
        "gordin": cmd_gordin,
        "sigma": cmd_sigma,
        "clt": cmd_clt,
        "fclt": cmd_fclt,
        "verify": cmd_verify,
        "report": cmd_report,
    }
    for name, fn in handlers.items():
        p = sub.add_parser(name)
        p.set_defaults(handler=fn)
        p.add_argument("--map", help="map spec NAME[:PARAM], e.g. lsv:0.25")
        p.add_argument("--obs", help="observable spec (builtin or expression)")
        p.add_argument("--cells", type=int, default=None)
        p.add_argument("--n", type=int, default=None,
                       help="Birkhoff sum length")
        p.add_argument("--n-max", type=int, default=None,
                       help="decay sequence length")
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--burnin", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--m", type=int, default=None,
                       help="path grid resolution for FCLT tests")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--config", default=None,
                       help="flat key=value config file; flags override")
    return parser


_DEFAULTS = {
    "cells": 4096,
    "n": 4096,
    "n_max": 64,
    "samples": 100_000,
    "burnin": 10_000,
    "threads": os.cpu_count() or 1,
    "m": 64,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args)
        for key, value in _DEFAULTS.items():
            if getattr(args, key, None) is None:
                setattr(args, key, value)
        _require(args, "map")
        return args.handler(args)
    except (ConfigurationError, ParameterError, InvalidInputError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, TruncationError) as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (FitError, ErgolabError) as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
