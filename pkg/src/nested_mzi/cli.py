"""``mzi`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
3 probabilities refused under the single-framework rule.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from .coincidences import coincidence_table
from .errors import InconsistentFramework, MziError, OrthogonalPostSelection
from .evolution import Experiment, conditional_given_probe, joint_outcome_distribution
from .histories import (
    DEFAULT_TOL,
    Query,
    check_consistency,
    conditional_table,
    decoherence_matrix,
    inference_guard,
    parse_framework,
    refine_frameworks,
)
from .interferometer import canonical_text, compile_stages, parse_itf, validate_unitarity
from .probes import ProbeRegister, parse_probe_args
from .scan import ScanSpec, parse_axis, scan
from .weaktrace import compare_ch_weaktrace, weak_trace_table

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_REFUSED = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# formatting helpers


def _sci(x: float) -> str:
    """Compact scientific notation: 0.0625 -> '6.25e-2'."""
    if x == 0:
        return "0"
    mant, exp = f"{x:.3e}".split("e")
    mant = mant.rstrip("0").rstrip(".")
    return f"{mant}e{int(exp)}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2) + "\n"


def _table(rows: list[tuple], head: tuple) -> str:
    rows = [tuple(str(c) for c in r) for r in rows]
    widths = [max(len(r[i]) for r in [head, *rows]) for i in range(len(head))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [head, *rows]) + "\n"


# ---------------------------------------------------------------------------
# configuration


def _load_config(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_IO) from None
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"{path}:{lineno}: expected key=value")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key in ("framework", "grid", "condition", "ask"):
            out.setdefault(key, []).append(value)  # type: ignore[arg-type]
        else:
            out[key] = value
    return out


_DEFAULTS = {
    "seed": 0,
    "runs": 0,
    "workers": 1,
    "tol": DEFAULT_TOL,
    "threshold": 1e-6,
    "eps_ref": 1e-3,
    "min_prob": 0.999,
}


def _apply_config(args: argparse.Namespace) -> None:
    cfg = _load_config(args.config) if getattr(args, "config", None) else {}
    for key, value in cfg.items():
        if not hasattr(args, key):
            raise CliError(f"unknown config key {key!r}")
        if getattr(args, key) in (None, []):
            setattr(args, key, value)
    for key, value in _DEFAULTS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)
    for key, conv in (("seed", int), ("runs", int), ("workers", int), ("tol", float),
                      ("threshold", float), ("eps_ref", float), ("min_prob", float)):
        if hasattr(args, key):
            try:
                setattr(args, key, conv(getattr(args, key)))
            except (TypeError, ValueError):
                raise CliError(f"--{key.replace('_', '-')}: bad value {getattr(args, key)!r}") from None
    if hasattr(args, "seed") and not 0 <= args.seed < 1 << 64:
        raise CliError("--seed must be a 64-bit unsigned integer")
    if hasattr(args, "runs") and args.runs < 0:
        raise CliError("--runs must be non-negative")
    if hasattr(args, "tol") and not args.tol > 0:
        raise CliError("--tol must be positive")


def _itf_text(args) -> tuple[str, str]:
    path = getattr(args, "itf", None)
    if not path:
        return canonical_text(), "<nested_mzi.itf>"
    try:
        return Path(path).read_text(encoding="utf-8"), path
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from None


def _digest(args, itf_text: str) -> str:
    skip = {"func", "config", "output", "command"}
    items = sorted((k, v) for k, v in vars(args).items() if k not in skip and v not in (None, [], False))
    canon = "\n".join(f"{k}={v}" for k, v in items) + "\n--\n" + itf_text
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _setup(args):
    text, name = _itf_text(args)
    spec = parse_itf(text)
    if getattr(args, "probes", None):
        probes = parse_probe_args(args.probes)
    else:
        probes = list(spec.probes)
    register = ProbeRegister.build(spec, probes)
    return spec, register, _digest(args, text)


def _frameworks(args, spec) -> dict:
    out = {}
    for k, item in enumerate(args.framework or [], 1):
        name, sep, body = item.partition("=")
        if not sep or "{" in name:
            name, body = f"f{k}", item
        out[name.strip()] = parse_framework(body.strip(), spec, name.strip())
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> tuple[str, int]:
    path = args.path or args.itf
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from None
    else:
        text, path = canonical_text(), "<nested_mzi.itf>"
    spec = parse_itf(text)
    ProbeRegister.from_spec(spec)
    stages = compile_stages(spec)
    rep = validate_unitarity(stages, args.tol if args.tol is not None else 1e-12)
    dev = rep.max_deviation
    msg = (
        f"{path}: {len(spec.nodes)} nodes, {spec.n_channels} channels, {spec.n_slots} slots\n"
        f"{len(stages)} stages, unitary to {dev:.0e}\n"
    )
    if not rep.passed:
        return msg + f"non-unitary stages: {rep.offending}\n", EXIT_USAGE
    return msg, EXIT_OK


def cmd_simulate(args) -> tuple[str, int]:
    spec, reg, digest = _setup(args)
    dist = joint_outcome_distribution(Experiment(spec, reg).evolve())
    conds = {}
    for c in args.condition or []:
        probe, sep, val = c.partition("=")
        if not sep or val.strip() not in ("0", "1"):
            raise CliError(f"--condition expects probe=0|1, got {c!r}")
        conds[c] = conditional_given_probe(dist, probe.strip(), int(val))
    if args.out == "json":
        return _dumps({
            "config_digest": digest,
            **dist.to_dict(),
            "detectors": dist.marginal(),
            "conditionals": conds,
        }), EXIT_OK
    if args.out == "csv":
        lines = ["detector,bits,p"] + [
            f"{d},{reg.bits_label(b)},{p:.17g}" for (d, b), p in dist.items()
        ]
        return "\n".join(lines) + "\n", EXIT_OK
    out = [f"# config {digest}", "detector marginals"]
    out.append(_table([(d, f"{p:.12g}") for d, p in dist.marginal().items()], ("detector", "p")))
    if len(reg):
        out.append("joint outcomes")
        out.append(_table([(d, reg.bits_label(b), f"{p:.12g}") for (d, b), p in dist.items()], ("detector", "probes", "p")))
    for c, table in conds.items():
        out.append(f"given {c}")
        out.append(_table([(d, f"{p:.12g}") for d, p in table.items()], ("detector", "p")))
    return "\n".join(out), EXIT_OK


def cmd_mc(args) -> tuple[str, int]:
    spec, reg, digest = _setup(args)
    dist = joint_outcome_distribution(Experiment(spec, reg).evolve())
    table = coincidence_table(dist, args.runs, args.seed, args.workers)
    if args.out in (None, "csv"):
        return table.to_csv(), EXIT_OK
    if args.out == "json":
        return _dumps({
            "config_digest": digest,
            "runs": table.total,
            "seed": args.seed,
            "cells": [
                {"detector": d, "bits": b, "count": table[(d, b)], "frequency": table.frequency((d, b)),
                 "p_exact": dist[(d, b)]}
                for d, b in table.cells
            ],
        }), EXIT_OK
    rows = [(d, reg.bits_label(b), table[(d, b)], f"{table.frequency((d, b)):.6g}", f"{dist[(d, b)]:.6g}") for d, b in table.cells]
    return f"# config {digest}\n" + _table(rows, ("detector", "probes", "count", "frequency", "exact")), EXIT_OK


def cmd_histories(args) -> tuple[str, int]:
    spec, reg, digest = _setup(args)
    exp = Experiment(spec, reg)
    fws = _frameworks(args, spec)
    if not fws:
        raise CliError("give at least one --framework")
    demanded = bool(args.given)
    report: dict = {"config_digest": digest, "frameworks": {}}
    text = [f"# config {digest}"]
    code = EXIT_OK
    for name, fw in fws.items():
        dm = decoherence_matrix(fw, exp)
        rep = check_consistency(dm, args.tol)
        entry = {"framework": fw.describe(), **rep.to_dict()}
        verdict = "consistent" if rep.consistent else "INCONSISTENT"
        text.append(f"{name}: {fw.describe()}: {verdict}, max off-diag {_sci(rep.max_offdiag)}")
        if not rep.consistent:
            text.append(f"  witness {rep.witness}")
            if demanded:
                text.append("  REFUSED: no probabilities from an inconsistent framework")
                code = EXIT_REFUSED
        else:
            conds = conditional_table(fw, exp, args.tol)
            if args.given:
                missing = [g for g in args.given if g.partition(":")[0] not in spec.detectors]
                if missing:
                    raise CliError(f"unknown detector {missing[0]!r}")
                conds = {g: v for g, v in conds.items() if g in args.given}
            entry["conditionals"] = conds
            for det, probs in conds.items():
                text.append("  given " + det + ": " + ", ".join(f"{k}: {p:.12g}" for k, p in probs.items()))
        report["frameworks"][name] = entry

    if args.combine:
        a, b = args.combine
        for n in (a, b):
            if n not in fws:
                raise CliError(f"--combine: unknown framework {n!r}")
        try:
            refined = refine_frameworks(fws[a], fws[b], exp, args.tol)
            report["combined"] = {"status": "compatible", "framework": refined.describe(),
                                  "conditionals": conditional_table(refined, exp, args.tol)}
            text.append(f"{a} & {b}: compatible, refinement {refined.describe()}")
        except MziError as exc:
            reason = f"single framework rule forbids combining {a} and {b}: {exc}"
            report["combined"] = {"status": "refused", "reason": reason}
            text.append(f"REFUSED: {reason}")
            if demanded:
                code = EXIT_REFUSED

    if args.ask:
        requests = []
        for ask in args.ask:
            events, sep, given = ask.rpartition("|")
            if not sep:
                raise CliError(f"--ask expects 'fw:event,fw:event|detector', got {ask!r}")
            qs = []
            for ev in events.split(","):
                fname, sep2, event = ev.partition(":")
                if not sep2:
                    raise CliError(f"--ask item {ev!r} needs framework:event")
                qs.append(Query(fname.strip(), event.strip(), given.strip()))
            requests.append(tuple(qs))
        entries = inference_guard(fws, requests, exp, args.tol)
        report["queries"] = [e.to_dict() for e in entries]
        for e in entries:
            d = e.to_dict()
            if e.status == "answered":
                text.append(f"{d['request']} = {e.value:.12g}")
            else:
                text.append(f"{d['request']}: REFUSED ({e.reason})")
                code = EXIT_REFUSED

    if args.out == "json":
        return _dumps(report), code
    return "\n".join(text) + "\n", code


def cmd_weak(args) -> tuple[str, int]:
    spec, _, digest = _setup(args)
    if not args.post:
        raise CliError("--post is required")
    if args.post not in spec.detectors:
        raise CliError(f"unknown detector {args.post!r}")
    if args.compare or args.command == "compare":
        fws = _frameworks(args, spec)
        if len(fws) != 1:
            raise CliError("comparison needs exactly one --framework")
        fw = next(iter(fws.values()))
        try:
            rep = compare_ch_weaktrace(spec, args.post, fw, args.eps_ref, args.threshold, args.tol)
        except InconsistentFramework as exc:
            raise CliError(str(exc), EXIT_REFUSED) from None
        if args.out == "json":
            return _dumps({"config_digest": digest, **rep.to_dict()}), EXIT_OK
        return f"# config {digest}\n" + rep.to_text(), EXIT_OK
    compounds = [(spec.probe_slot if args.slot is None else args.slot, c) for c in args.compound or []]
    table = weak_trace_table(spec, args.post, args.threshold, compounds)
    if args.out == "json":
        return _dumps({"config_digest": digest, **table.to_dict()}), EXIT_OK
    rows = [(e.slot, e.label, f"{e.value.real + 0.0:+.12g}", f"{e.value.imag + 0.0:+.12g}",
             "present" if abs(e.value) > args.threshold else "absent") for e in table.entries]
    out = f"# config {digest}\npost-selection {args.post}\n" + _table(rows, ("slot", "channel", "Re W", "Im W", "weak trace"))
    out += f"present: {', '.join(sorted(table.present))}\nabsent: {', '.join(sorted(table.absent))}\n"
    return out, EXIT_OK


def cmd_scan(args) -> tuple[str, int]:
    spec, _, digest = _setup(args)
    axes = tuple(parse_axis(g) for g in args.grid or [])
    fws = args.framework or []
    if len(fws) != 1 or not args.target or not args.given:
        raise CliError("scan needs one --framework, --target and --given")
    s = ScanSpec(axes, fws[0], args.target, args.given, args.min_prob, args.tol)
    hits = scan(spec, s, args.workers)
    n_points = math.prod(len(a.values) for a in axes) if axes else 1
    if args.out == "json":
        return _dumps({"config_digest": digest, "points": n_points, "hits": [h.to_dict() for h in hits]}), EXIT_OK
    lines = [f"# config {digest}", f"{len(hits)} hit(s) out of {n_points} grid point(s)"]
    for h in hits:
        params = ", ".join(f"{k}={v:.12g}" for k, v in h.params.items())
        lines.append(f"  {params}: Pr({args.target}|{args.given})={h.probability:.12g}, max off-diag {_sci(h.max_offdiag)}")
    return "\n".join(lines) + "\n", EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--itf", help="interferometer description (default: built-in nested MZI)")
    common.add_argument("--probes", help="name:targets:eps[:slot],... e.g. b:B:0.1,w:B+C:0.1")
    common.add_argument("--out", choices=("json", "csv", "text"), help="output format")
    common.add_argument("--tol", type=float, help="consistency / unitarity tolerance")
    common.add_argument("--config", help="file of key=value lines with the same options")
    common.add_argument("-o", "--output", help="write the report here instead of stdout")

    p = argparse.ArgumentParser(prog="mzi", description="Nested Mach-Zehnder analysis tools")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", parents=[common], help="parse and check a description")
    v.add_argument("path", nargs="?")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("simulate", parents=[common], help="exact outcome distribution")
    s.add_argument("--condition", action="append", help="probe=0|1, repeatable")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("mc", parents=[common], help="Monte Carlo coincidence table")
    m.add_argument("--runs", type=int)
    m.add_argument("--seed", type=int)
    m.add_argument("--workers", type=int)
    m.set_defaults(func=cmd_mc)

    h = sub.add_parser("histories", parents=[common], help="consistency and conditional probabilities")
    h.add_argument("--framework", action="append", help="[name=]probe:{A,B+C}; repeatable")
    h.add_argument("--given", action="append", help="detector to condition on; repeatable")
    h.add_argument("--combine", nargs=2, metavar=("F1", "F2"))
    h.add_argument("--ask", action="append", help="conjunction 'f1:A,f2:C|D1'")
    h.set_defaults(func=cmd_histories)

    for name in ("weak", "compare"):
        w = sub.add_parser(name, parents=[common], help="weak values" if name == "weak" else "weak trace vs histories")
        w.add_argument("--post", help="post-selection detector")
        w.add_argument("--threshold", type=float)
        w.add_argument("--compound", action="append", help="extra subspace such as B+C")
        w.add_argument("--slot", type=int, help="slot for --compound (default: probe slot)")
        w.add_argument("--compare", action="store_true")
        w.add_argument("--framework", action="append")
        w.add_argument("--eps-ref", dest="eps_ref", type=float)
        w.set_defaults(func=cmd_weak)

    c = sub.add_parser("scan", parents=[common], help="grid search over beamsplitter parameters")
    c.add_argument("--grid", action="append", help="NODE.param=start:stop:num or v1,v2,...")
    c.add_argument("--framework", action="append")
    c.add_argument("--target")
    c.add_argument("--given")
    c.add_argument("--min-prob", dest="min_prob", type=float)
    c.add_argument("--workers", type=int)
    c.set_defaults(func=cmd_scan)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        _apply_config(args)
        out, code = args.func(args)
    except CliError as exc:
        print(f"mzi: error: {exc}", file=sys.stderr)
        return exc.code
    except OrthogonalPostSelection as exc:
        print(f"mzi: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MziError as exc:
        print(f"mzi: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.output:
        try:
            Path(args.output).write_text(out, encoding="utf-8")
        except OSError as exc:
            print(f"mzi: error: cannot write {args.output}: {exc}", file=sys.stderr)
            return EXIT_IO
    else:
        sys.stdout.write(out)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
