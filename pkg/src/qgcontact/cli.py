"""Command-line front end.

Subcommands write deterministic files into ``--out`` (default ``.``):
``eigenvalues.csv``, ``weyl.json`` and ``report.json``.  Failures print a
JSON object ``{"error": code, "message": ...}`` on stderr and exit with the
status of the error class.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass

from . import bethe, boundary, fem, spectra
from .eigen import EigenRequest
from .errors import QGError, ValidationError
from .graph import load_graph_spec

SUBCOMMANDS = ("spectrum", "weyl-fit", "bracket", "oracle", "validate", "converge")


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    spec: str | None = None
    h: float = 0.05
    m: int = 20
    out: str = "."
    mode: str = "auto"
    dump_matrices: bool = False

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ValueError(f"unknown subcommand {self.subcommand!r}")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.m < 1:
            raise ValueError("m must be at least 1")


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "tolist"):
        return x.tolist()
    return x


def _load(args):
    spec = load_graph_spec(args.spec)
    vc = boundary.vertex_conditions_from_spec(spec.vertex_conditions, spec.graph, spec.n_particles)
    return spec, vc


def _validation(spec, vc) -> dict:
    N = spec.n_particles
    E = spec.graph.E if (vc.P is not None and N == 2) else None
    rep = boundary.validate_pl(vc, spec.contact if N >= 2 else None, "distinguishable", E)
    warn = boundary.check_regularity_hypotheses(vc, spec.contact) if N >= 2 else []
    return {"fingerprint": spec.fingerprint(), "valid": rep.ok, "checks": rep.as_dict(),
            "failures": rep.failures(), "advisories": warn}


def _request(args, m):
    return EigenRequest(m, mode=args.mode)


def cmd_validate(args) -> int:
    spec, vc = _load(args)
    report = _validation(spec, vc)
    _write_json(os.path.join(args.out, "report.json"), report)
    if not report["valid"]:
        raise ValidationError("inadmissible (P, L): " + ", ".join(report["failures"]))
    return 0


def _dump(args, spec):
    if not args.dump_matrices:
        return
    df = spectra.discretize(spec, args.h)
    fem.write_coo(os.path.join(args.out, "K.coo.txt"), df.K)
    fem.write_coo(os.path.join(args.out, "M.coo.txt"), df.M)


def cmd_spectrum(args) -> int:
    spec, vc = _load(args)
    report = _validation(spec, vc)
    res = spectra.spectrum(spec, args.m, args.h, _request(args, args.m),
                           richardson=getattr(args, "richardson", False))
    res.to_csv(os.path.join(args.out, "eigenvalues.csv"))
    report.update(h=res.h, m=len(res), counts=res.counts(),
                  info=_jsonable({k: v for k, v in res.info.items()}),
                  convergence=_jsonable(res.convergence))
    _write_json(os.path.join(args.out, "report.json"), report)
    _dump(args, spec)
    return 0


def _default_theory(spec):
    bose = spec.statistics == "bosonic"
    if spec.n_particles == 2:
        return "bose2" if bose else "distinguishable2"
    return "boseN" if bose else "distinguishableN"


def cmd_weyl(args) -> int:
    spec, vc = _load(args)
    report = _validation(spec, vc)
    res = spectra.spectrum(spec, args.m, args.h, _request(args, args.m))
    res.to_csv(os.path.join(args.out, "eigenvalues.csv"))
    theory = args.theory or _default_theory(spec)
    fit = spectra.weyl_fit(res, theory, spec.graph, spec.n_particles)
    _write_json(os.path.join(args.out, "weyl.json"), fit.to_json())
    report.update(h=res.h, m=len(res), theory=theory, counts=res.counts())
    _write_json(os.path.join(args.out, "report.json"), report)
    return 0


def cmd_bracket(args) -> int:
    spec, vc = _load(args)
    report = _validation(spec, vc)
    br = spectra.bracketing_check(spec, args.m, args.h, _request(args, args.m))
    report["bracketing"] = _jsonable(br)
    _write_json(os.path.join(args.out, "report.json"), report)
    return 0 if br["ok"] else 3


def cmd_converge(args) -> int:
    spec, vc = _load(args)
    report = _validation(spec, vc)
    hs = args.hs or [args.h, args.h / 2, args.h / 4]
    study = spectra.convergence_study(spec, args.m, hs, req=_request(args, args.m))
    report["convergence"] = _jsonable(study)
    _write_json(os.path.join(args.out, "report.json"), report)
    return 0


def cmd_oracle(args) -> int:
    c = args.c if args.c is not None else bethe.coupling_from_alpha(args.alpha)
    energies, states = bethe.bethe_spectrum(args.n, args.length, c, args.m, return_states=True)
    path = os.path.join(args.out, "bethe.csv")
    with open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "energy", "quantum_numbers", "residual"])
        for k, s in enumerate(states):
            w.writerow([k, f"{s.energy:.15g}", " ".join(f"{v:g}" for v in s.I),
                        f"{s.residual:.3g}"])
    for e in energies:
        print(f"{e:.15g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qgcontact",
                                description="Spectra of contact-interacting particles on metric graphs")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp_, needs_spec=True):
        if needs_spec:
            sp_.add_argument("--spec", required=True, help="graph specification (JSON)")
        sp_.add_argument("--out", default=".", help="output directory")
        return sp_

    def mesh_opts(sp_, m_default=20):
        sp_.add_argument("--h", type=float, default=0.05, help="mesh parameter")
        sp_.add_argument("--m", type=int, default=m_default, help="number of eigenvalues")
        sp_.add_argument("--mode", choices=("auto", "dense", "shift_invert"), default="auto")

    s = common(sub.add_parser("spectrum", help="lowest eigenvalues with sector labels"))
    mesh_opts(s)
    s.add_argument("--richardson", action="store_true", help="also solve at h/2 and extrapolate")
    s.add_argument("--dump-matrices", action="store_true", help="write K and M in coordinate format")

    s = common(sub.add_parser("weyl-fit", help="fit the eigenvalue counting function"))
    mesh_opts(s, 200)
    s.add_argument("--theory", choices=spectra.THEORIES)

    s = common(sub.add_parser("bracket", help="Dirichlet/Robin count bracketing"))
    mesh_opts(s, 60)

    s = common(sub.add_parser("converge", help="observed convergence orders"))
    mesh_opts(s, 10)
    s.add_argument("--hs", type=float, nargs="+", help="mesh parameters (default h, h/2, h/4)")

    s = common(sub.add_parser("validate", help="check a specification"))

    s = common(sub.add_parser("oracle", help="Bethe-ansatz energies on a ring"), needs_spec=False)
    s.add_argument("--n", type=int, required=True, help="number of bosons")
    s.add_argument("--length", type=float, required=True, help="ring circumference")
    grp = s.add_mutually_exclusive_group(required=True)
    grp.add_argument("--c", type=float, help="Bethe coupling c (interaction 2c delta)")
    grp.add_argument("--alpha", type=float, help="contact strength alpha (interaction alpha delta)")
    s.add_argument("--m", type=int, default=10)
    return p


COMMANDS = {"spectrum": cmd_spectrum, "weyl-fit": cmd_weyl, "bracket": cmd_bracket,
            "oracle": cmd_oracle, "validate": cmd_validate, "converge": cmd_converge}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        RunConfig(args.subcommand, getattr(args, "spec", None), getattr(args, "h", 1.0),
                  getattr(args, "m", 1), args.out,
                  getattr(args, "mode", "auto"), getattr(args, "dump_matrices", False))
    except ValueError as exc:
        print(json.dumps({"error": "invalid_arguments", "message": str(exc)}), file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    try:
        return COMMANDS[args.subcommand](args)
    except QGError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return exc.exit_status
    except OSError as exc:
        print(json.dumps({"error": "io_error", "message": str(exc)}), file=sys.stderr)
        return 4


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
