"""Command-line front end: ``ccdecomp classify|extract|sobolev|gen|check``.

Exit status is 0 on success, 2 when an extraction stops at ``--kmax``
bubbles, and 1 on any error, including usage errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from .concfun import TailWindow, curve_table
from .extraction import ExtractionConfig, _jsonable, classify, extract_profiles
from .measures import FormatError, read_sequence, write_measure_csv, write_sequence_csv
from .sobolev import (SobolevParams, check_exponent, decomposition_to_json, lemma41_check,
                      norm_expansion_check, profile_extract, read_gfn, write_gfn)
from . import synth

COMMANDS = ("classify", "extract", "sobolev", "gen", "check")
GEN_KINDS = ("vanishing", "dichotomy", "cluster", "random", "bumps", "spreading")
# vanishing needs 1/n below the default alpha_tol over the whole tail
GEN_N_MAX = {"vanishing": 128, "dichotomy": 32, "cluster": 32, "bumps": 16, "spreading": 24}

EXIT_OK, EXIT_ERROR, EXIT_TRUNCATED = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    input: str = None
    out: str = "."
    phi: str = "half"
    alpha_tol: float = None
    mass_tol: float = None
    kmax: int = 8
    tail: int = None
    p: float = None
    q: float = None
    dim: int = None
    seed: int = 0
    kind: str = None
    n_max: int = None
    masses: list = field(default_factory=lambda: [0.5, 0.5])
    rate: float = 4.0
    dust: float = 0.0
    atoms: int = 1

    def validate(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.command in ("classify", "extract", "sobolev", "check") and not self.input:
            raise UsageError(f"{self.command} needs --input")
        if self.command in ("sobolev", "check") and self.p is None:
            raise UsageError(f"{self.command} needs --p")
        if self.command == "check" and self.q is None:
            raise UsageError("check needs --q")
        if self.command == "gen" and self.kind is None:
            raise UsageError(f"gen needs --kind, one of {', '.join(GEN_KINDS)}")
        if self.kind is not None and self.kind not in GEN_KINDS:
            raise UsageError(f"unknown --kind {self.kind!r}")
        if self.phi not in ("half", "cuberoot"):
            raise UsageError("--phi must be half or cuberoot")
        if self.p is not None and not self.p > 1:
            raise UsageError("p must exceed 1")
        if self.p is not None and self.q is not None and self.dim is not None:
            try:
                check_exponent(self.p, self.q, self.dim)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        return self

    def extraction_config(self):
        return ExtractionConfig(phi=self.phi, alpha_tol=self.alpha_tol, mass_tol=self.mass_tol,
                                k_max=self.kmax, tail=TailWindow(self.tail))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    ap = _Parser(prog="ccdecomp", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--input", help="sequence CSV, directory of CSV files, or directory of .gfn files")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--phi", choices=("half", "cuberoot"))
    ap.add_argument("--alpha-tol", type=float)
    ap.add_argument("--mass-tol", type=float)
    ap.add_argument("--kmax", type=int)
    ap.add_argument("--tail", type=int)
    ap.add_argument("--p", type=float)
    ap.add_argument("--q", type=float)
    ap.add_argument("--dim", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--config", help="JSON file of defaults; flags override it")
    ap.add_argument("--kind", choices=GEN_KINDS, help="fixture family for gen")
    ap.add_argument("--n-max", type=int)
    ap.add_argument("--masses", type=lambda s: [float(x) for x in s.split(",")])
    ap.add_argument("--rate", type=float)
    ap.add_argument("--dust", type=float)
    ap.add_argument("--atoms", type=int)
    return ap


def parse_config(argv):
    """Flags over ``--config`` values over defaults, then validated."""
    args = vars(build_parser().parse_args(argv))
    values = {}
    if args.get("config"):
        try:
            with open(args["config"]) as fh:
                values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args['config']}: {exc}") from None
        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    for k, v in args.items():
        if k != "config" and v is not None:
            values[k] = v
    return RunConfig(**values).validate()


# ------------------------------------------------------------ outputs

def _write_json(doc, path):
    with open(path, "w") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if not isinstance(v, (int, np.integer)) else str(v)
                              for v in row) + "\n")


def emit_plot_data(report, out, curves=None, residuals=None):
    """``bubble_<i>.csv`` per bubble, ``remainder.csv``, plus optional curve and residual tables."""
    os.makedirs(out, exist_ok=True)
    written = []
    for b in report.bubbles:
        dim = b.centers.shape[1] if len(b.centers) else 0
        path = os.path.join(out, f"bubble_{b.index}.csv")
        head = ["label", "radius", "inner_radius", "inner_mass", "annulus_mass",
                "annulus_budget"] + [f"center_x{k + 1}" for k in range(dim)]
        rows = [(n, r, pr, im, am, bd, *c) for n, r, pr, im, am, bd, c in zip(
            b.labels, b.radii, b.phi_radii, b.inner_masses, b.annulus_masses, b.budgets,
            b.centers)]
        _write_csv(path, head, rows)
        written.append(path)
    path = os.path.join(out, "remainder.csv")
    _write_csv(path, ["level", "alpha"], list(enumerate(report.alphas)))
    written.append(path)
    if curves is not None:
        labels, radii, Q = curves
        path = os.path.join(out, "curves.csv")
        _write_csv(path, ["label", "radius", "value"],
                   [(n, r, v) for n, row in zip(labels, Q) for r, v in zip(radii, row)])
        written.append(path)
    if residuals is not None:
        path = os.path.join(out, "residuals.csv")
        head = ["label", "k", "u_lp", "u_grad", "residual_iii", "residual_iv", "annulus_leakage"]
        _write_csv(path, head, [(r.label, r.k, r.u_lp, r.u_grad, r.residual_iii,
                                 r.residual_iv, r.annulus_leakage) for r in residuals])
        written.append(path)
    return written


def _read_gfn_dir(path):
    if not os.path.isdir(path):
        raise FormatError(path, 0, "expected a directory of .gfn files")
    names = sorted(f for f in os.listdir(path) if f.endswith(".gfn"))
    if not names:
        raise FormatError(path, 0, "directory holds no .gfn files")
    return [read_gfn(os.path.join(path, f)) for f in names]


def _truth_doc(truth):
    doc = {"masses": truth.masses, "verdict": truth.verdict, "radii": truth.radii,
           "trajectories": [np.asarray(t).tolist() for t in truth.trajectories]}
    doc["mass_bound"] = None if math.isinf(truth.mass_bound) else truth.mass_bound
    return doc


# ------------------------------------------------------------ commands

def _run_classify(cfg):
    seq = read_sequence(cfg.input)
    verdict = classify(seq, cfg.extraction_config())
    doc = {"schema_version": 1, "verdict": verdict.kind, "alpha": verdict.alpha,
           "evidence": verdict.evidence,
           "config_echo": cfg.extraction_config().echo(seq.mass_bound)}
    os.makedirs(cfg.out, exist_ok=True)
    _write_json(doc, os.path.join(cfg.out, "report.json"))
    print(f"verdict: {verdict.kind} (alpha={verdict.alpha:.6g})")
    return EXIT_OK


def _run_extract(cfg):
    seq = read_sequence(cfg.input)
    report = extract_profiles(seq, cfg.extraction_config())
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "report.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    lo, hi, count = report.config_echo.get("grid", (None, None, None)) or (None, None, None)
    curves = None
    if count:
        radii = np.geomspace(lo, hi, count)
        curves = (seq.labels, radii, curve_table(seq, radii))
    emit_plot_data(report, cfg.out, curves=curves)
    masses = ", ".join(f"{b.mass:.4g}" for b in report.bubbles)
    print(f"verdict: {report.verdict}; {len(report.bubbles)} bubble(s) [{masses}]; "
          f"outcome: {report.outcome}")
    return EXIT_TRUNCATED if report.truncated else EXIT_OK


def _run_sobolev(cfg):
    us = _read_gfn_dir(cfg.input)
    dim = us[0].dim if cfg.dim is None else cfg.dim
    q_list = () if cfg.q is None else (cfg.q,)
    params = SobolevParams(cfg.p, dim, q_list)
    dec = profile_extract(us, params, cfg.extraction_config())
    doc = decomposition_to_json(dec, cfg.out)
    residuals = [norm_expansion_check(dec, n, dec.k) for n in dec.labels]
    emit_plot_data(dec.report, cfg.out, residuals=residuals)
    last = doc["norm_table"][-1] if doc["norm_table"] else None
    msg = f"{dec.k} profile(s) over {len(dec.labels)} indices"
    if last:
        msg += f"; residual_iii={last['residual_iii']:.3g}, residual_iv={last['residual_iv']:.3g}"
    print(msg)
    return EXIT_TRUNCATED if dec.report.truncated else EXIT_OK


def _run_check(cfg):
    us = _read_gfn_dir(cfg.input)
    best, rows = lemma41_check(us, cfg.p, cfg.q)
    os.makedirs(cfg.out, exist_ok=True)
    _write_csv(os.path.join(cfg.out, "local_mass_bound.csv"), ["lq", "local_mass", "w1p", "ratio"],
               [(r.lq, r.local_mass, r.w1p, r.ratio) for r in rows])
    _write_json({"schema_version": 1, "p": cfg.p, "q": cfg.q, "max_ratio": best,
                 "count": len(rows)}, os.path.join(cfg.out, "check.json"))
    print(f"max ratio {best:.6g} over {len(rows)} functions")
    return EXIT_OK


def _run_gen(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    dim = 2 if cfg.dim is None else cfg.dim
    kind = cfg.kind
    n_max = GEN_N_MAX.get(kind) if cfg.n_max is None else cfg.n_max
    if kind == "random":
        m = synth.gen_random_measure(cfg.atoms, dim, 1.0, cfg.seed)
        write_measure_csv(m, os.path.join(cfg.out, "measure.csv"))
        print(f"wrote {len(m)} atoms")
        return EXIT_OK
    if kind in ("bumps", "spreading"):
        if kind == "bumps":
            us, truth = synth.gen_multibubble_sobolev(
                [synth.BumpSpec(1.0, 0.5), synth.BumpSpec(0.6, 0.4)],
                [lambda n: (-0.3 * n + 0.1, 0.0), lambda n: (0.2 * n, 0.3)],
                n_max, (128, 128), 0.1, origin=(-6.35, -6.35), seed=cfg.seed)
        else:
            us, truth = synth.gen_spreading_sobolev(n_max, (128, 128), 0.1,
                                                    2.0 if cfg.p is None else cfg.p)
        width = len(str(len(us)))
        for n, u in enumerate(us, start=1):
            write_gfn(u, os.path.join(cfg.out, f"u_{n:0{width}d}.gfn"))
        _write_json(_truth_doc(truth), os.path.join(cfg.out, "truth.json"))
        print(f"wrote {len(us)} grid functions")
        return EXIT_OK
    if kind == "vanishing":
        seq, truth = synth.gen_vanishing(n_max, dim, cfg.seed)
    elif kind == "cluster":
        seq, truth = synth.gen_constant_cluster(1.0, cfg.atoms, 0.25, n_max, dim, cfg.seed)
    else:
        seq, truth = synth.gen_dichotomy(cfg.masses, cfg.rate, n_max, dim, cfg.seed,
                                         cluster_atoms=cfg.atoms,
                                         cluster_radius=0.25 if cfg.atoms > 1 else 0.0,
                                         dust=cfg.dust)
    write_sequence_csv(seq, os.path.join(cfg.out, "sequence.csv"))
    _write_json(_truth_doc(truth), os.path.join(cfg.out, "truth.json"))
    print(f"wrote {len(seq)} measures")
    return EXIT_OK


RUNNERS = {"classify": _run_classify, "extract": _run_extract, "sobolev": _run_sobolev,
           "gen": _run_gen, "check": _run_check}


def run_pipeline(cfg):
    return RUNNERS[cfg.command](cfg)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        build_parser().print_help(sys.stderr)
        return EXIT_ERROR
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(f"ccdecomp: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        return run_pipeline(cfg)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"ccdecomp: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
