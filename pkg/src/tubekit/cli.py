"""Command-line entry point.

Exit codes: 0 success, 1 domain or input error (JSON on stderr), 2 usage
error. All randomness derives from ``--seed``; ``TUBEKIT_THREADS`` overrides
``--threads``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import traceback
import warnings

import numpy as np

from . import __version__
from .combinatorics import (AssignmentInstance, SumsetInstance, random_assignment_instance,
                            random_sumset_instance, select_simplex, sumset_bound_check, verify_simplex)
from .constructions import (RegimeWarning, cascade_example, embedded_configuration, slab_configuration,
                            small_cap_configuration, standard_configuration)
from .errors import PreconditionError, SchemaError, TubekitError
from .io import dump_json, family_to_dict, load_family, load_json, load_voxels, save_family, validate_file
from .measure import lower_bound, resolve_threads, union_volume
from .packing import pack_tubes, target_count
from .rigidity import (GoodConfigCertificate, check_good_config, detect_structure, extract_good_config)
from .sweep import SweepConfig, regime_regression, run_sweep
from .tubes import TubeFamily, is_essentially_distinct
from .xray import convexity_index, ren_identity_check


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else None
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            out[key] = json.dumps(v)
        else:
            out[key] = v
    return out


def render(obj, fmt: str) -> str:
    obj = _jsonable(obj)
    if fmt == "json":
        return json.dumps(obj, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    rows = obj.get("records") if isinstance(obj, dict) and isinstance(obj.get("records"), list) else None
    rows = [_flatten(r) for r in rows] if rows is not None else [_flatten(obj)]
    cols = sorted({k for r in rows for k in r})
    w.writerow(cols)
    for r in rows:
        w.writerow(["" if r.get(c) is None else r.get(c) for c in cols])
    return buf.getvalue()


def _int(text: str) -> int:
    """Integer argument that also accepts forms like ``1e6``."""
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text}") from None
    if not v.is_integer():
        raise argparse.ArgumentTypeError(f"not an integer: {text}")
    return int(v)


# ---------------------------------------------------------------- subcommands

def cmd_construct(a):
    kw = {"strict": a.strict}
    need_N = a.kind in ("small_cap", "embedded", "slab")
    if need_N and a.N is None:
        raise PreconditionError("--N is required for this kind", kind=a.kind)
    extra = {}
    if a.kind == "standard":
        f = standard_configuration(a.n, a.delta, **kw)
    elif a.kind == "small_cap":
        f = small_cap_configuration(a.n, a.delta, a.N, **kw)
    elif a.kind == "embedded":
        f = embedded_configuration(a.n, a.d, a.delta, a.N, **kw)
    elif a.kind == "slab":
        f, box = slab_configuration(a.n, a.d, a.delta, a.N, **kw)
        extra["box"] = box.to_dict()
    else:
        parts = cascade_example(a.n, a.delta, **kw)
        extra["components"] = [len(p) for p in parts]
        f = TubeFamily.concat(parts)
    if a.out:
        save_family(f, a.out)
    out = {"kind": a.kind, "n": a.n, "delta": a.delta, "N": len(f), "out": a.out, **extra}
    if not a.out:
        out["family"] = family_to_dict(f)
    return out


def cmd_volume(a):
    f = load_family(a.family)
    v = union_volume(f, a.method, a.budget, seed=a.seed, target_rel_error=a.target_rel_error,
                     threads=a.threads, grid_h=a.grid_h)
    lb = lower_bound(len(f), f.delta, f.n)
    return {**v.to_dict(), "N": len(f), "lower_bound": lb, "ratio": v.value / lb}


def cmd_cindex(a):
    return convexity_index(load_voxels(a.set), a.budget, a.seed, a.threads).to_dict()


def cmd_ren(a):
    lhs, rhs, ratio = ren_identity_check(load_voxels(a.set), a.budget, a.seed, a.threads)
    return {"lhs": lhs, "rhs": rhs, "ratio": ratio}


def cmd_pack(a):
    E = load_voxels(a.set)
    f = pack_tubes(E, a.delta, a.n, c=a.c, check_convex=not a.no_convex_check,
                   discretized=None if a.discretization <= 0 else a.discretization, seed=a.seed)
    if a.out:
        save_family(f, a.out)
    N = target_count(E, a.delta, a.n)
    out = {"count": len(f), "N_target": N, "count_over_N": len(f) / N, "out": a.out}
    if a.check_distinct:
        out["essentially_distinct"] = is_essentially_distinct(f, seed=a.seed)[0]
    return out


def cmd_lemma51(a):
    if a.instance:
        insts = [AssignmentInstance.from_dict(load_json(a.instance))]
    else:
        ss = np.random.SeedSequence(a.seed)
        seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(a.random)]
        insts = [random_assignment_instance(a.dim, a.cells, a.universe, a.c, a.keep, s) for s in seeds]
    records = []
    for inst in insts:
        r = select_simplex(inst)
        v = verify_simplex(inst, r)
        records.append({**r.to_dict(), "verified_a": v["a"], "verified_b": v["b"]})
    if len(records) == 1:
        return records[0]
    return {"instances": len(records), "all_verified": all(r["verified_a"] and r["verified_b"] for r in records),
            "min_c_prime": min(r["c_prime"] for r in records), "min_lambda": min(r["lambda"] for r in records),
            "degenerate": sum(r["degenerate"] for r in records), "records": records}


def cmd_lemma53(a):
    if a.instance:
        return sumset_bound_check(SumsetInstance.from_dict(load_json(a.instance))).to_dict()
    ss = np.random.SeedSequence(a.seed)
    reps = [sumset_bound_check(random_sumset_instance(a.rank, a.max_size, a.span,
                                                      seed=int(s.generate_state(1)[0])))
            for s in ss.spawn(a.random)]
    worst = max(reps, key=lambda r: r.lhs / r.rhs)
    return {"instances": len(reps), "violations": sum(not r.holds for r in reps),
            "max_lhs_over_rhs": worst.lhs / worst.rhs, "worst": worst.to_dict()}


def cmd_goodcfg(a):
    f = load_family(a.family)
    if a.certificate:
        d = load_json(a.certificate)
        try:
            cert = GoodConfigCertificate(tuple(d["O"]), float(d["epsilon0"]), float(d["lambda0"]),
                                         tuple((tuple(g["direction"]), tuple(int(i) for i in g["members"]))
                                               for g in d["groups"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError("malformed certificate", path=a.certificate, reason=repr(exc)) from None
    else:
        cert = extract_good_config(f, a.epsilon0, a.c, seed=a.seed)
    ok, violation = check_good_config(f, cert)
    return {"certificate": cert.to_dict(), "accepted": ok, "violation": violation}


def cmd_detect(a):
    rep = detect_structure(load_family(a.family), seed=a.seed).to_dict()
    if a.out:
        dump_json(_jsonable(rep), a.out)
    return rep


def cmd_sweep(a):
    cfg = SweepConfig.from_dict(load_json(a.config))
    rep = run_sweep(cfg, a.out, threads=a.threads)
    body = rep.body()
    try:
        body["regression"] = regime_regression(rep)
    except PreconditionError:
        body["regression"] = []
    return body


def cmd_validate(a):
    results = [validate_file(p) for p in a.files]
    return {"ok": all(r["ok"] for r in results), "files": results}


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="tubekit", description="Tube-family geometry experiments.")
    p.add_argument("--version", action="version", version=f"tubekit {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("construct", parents=[common], help="build an explicit tube family")
    s.add_argument("--kind", required=True, choices=("standard", "small_cap", "embedded", "slab", "cascade"))
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--N", type=_int)
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--strict", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_construct)

    s = sub.add_parser("volume", parents=[common], help="estimate the union volume")
    s.add_argument("--family", required=True)
    s.add_argument("--method", choices=("mc", "monte_carlo", "grid"), default="mc")
    s.add_argument("--budget", type=_int, default=1 << 22)
    s.add_argument("--target-rel-error", type=float)
    s.add_argument("--grid-h", type=float)
    s.set_defaults(func=cmd_volume)

    for name, fn, helptext in (("cindex", cmd_cindex, "convexity index of a voxel set"),
                               ("ren", cmd_ren, "chord-power integral against its convex-body value")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--set", required=True)
        s.add_argument("--budget", type=_int, default=1_000_000)
        s.set_defaults(func=fn)

    s = sub.add_parser("pack", parents=[common], help="pack tubes into E x [0, 2]")
    s.add_argument("--set", required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--c", type=float, default=0.25)
    s.add_argument("--discretization", type=float, default=9.0,
                   help="required inradius in units of delta (0 disables)")
    s.add_argument("--no-convex-check", action="store_true")
    s.add_argument("--check-distinct", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_pack)

    s = sub.add_parser("lemma51", parents=[common], help="simplex selection on assignment instances")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--instance")
    g.add_argument("--random", type=int)
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--cells", type=int, default=100)
    s.add_argument("--universe", type=int, default=64)
    s.add_argument("--c", type=float, default=0.5)
    s.add_argument("--keep", type=float, default=0.8)
    s.set_defaults(func=cmd_lemma51)

    s = sub.add_parser("lemma53", parents=[common], help="sumset bound by exhaustive enumeration")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--instance")
    g.add_argument("--random", type=int)
    s.add_argument("--rank", type=int, default=2)
    s.add_argument("--max-size", type=int, default=30)
    s.add_argument("--span", type=int, default=6)
    s.set_defaults(func=cmd_lemma53)

    s = sub.add_parser("goodcfg", parents=[common], help="extract or check a good-configuration certificate")
    s.add_argument("--family", required=True)
    s.add_argument("--certificate")
    s.add_argument("--epsilon0", type=float, default=0.5)
    s.add_argument("--c", type=float, default=0.1)
    s.set_defaults(func=cmd_goodcfg)

    s = sub.add_parser("detect", parents=[common], help="recover the cross-section of a near-extremal family")
    s.add_argument("--family", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("sweep", parents=[common], help="run a parameter sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("validate", parents=[common], help="schema-check family JSON and VOX1 files")
    s.add_argument("files", nargs="+")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        if not getattr(a, "command", None):
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        sys.stderr.write(json.dumps({"error": {"code": "usage", "message": str(exc)}}) + "\n")
        sys.stderr.write(parser.format_usage())
        return 2
    a.threads = resolve_threads(a.threads)
    try:
        with warnings.catch_warnings():
            if a.verbose < 1:
                warnings.simplefilter("ignore", RegimeWarning)
            out = a.func(a)
    except TubekitError as exc:
        sys.stderr.write(json.dumps({"error": _jsonable(exc.to_dict())}, sort_keys=True) + "\n")
        return 1
    except Exception as exc:  # unexpected failure; keep the JSON contract
        sys.stderr.write(json.dumps({"error": {"code": "internal.unexpected", "message": repr(exc)}}) + "\n")
        if a.verbose:
            traceback.print_exc()
        return 1
    sys.stdout.write(render(out, a.format))
    if a.command == "validate" and not out["ok"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
