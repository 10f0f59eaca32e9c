"""``capflp`` command line.

Exit codes: 0 success, 1 a violation was found (audit witness or bound
exceedance), 2 bad input or unmet mechanism precondition, 3 structured solver
disagrees with the brute-force oracle, 4 audit search budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

from capflp import audit, ratios
from capflp.errors import CapFLPError, SearchBudgetExceeded
from capflp.mechanisms import MechanismId, bind, default_class, place
from capflp.model import (
    EquiCap,
    TwoAbundant,
    dump_instance,
    format_number,
    instance_hash,
    normalize,
    parse_instance,
    social_cost,
    validate_placement,
)
from capflp.solvers import Objective, brute_force_optimal, optimal

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_ORACLE, EXIT_BUDGET = 0, 1, 2, 3, 4


class UsageError(CapFLPError):
    pass


def _num(v):
    if v is math.inf:
        return "inf"
    return format_number(v)


def _nums(seq):
    return [_num(v) for v in seq]


def _emit(args, payload) -> None:
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _class_from_flags(args):
    if getattr(args, "m", None) is not None or getattr(args, "k", None) is not None:
        if args.m is None or args.k is None:
            raise UsageError("--m and --k go together")
        return EquiCap(args.m, args.k)
    if getattr(args, "c1", None) is not None or getattr(args, "c2", None) is not None:
        if args.c1 is None or args.c2 is None:
            raise UsageError("--c1 and --c2 go together")
        return TwoAbundant(args.c1, args.c2)
    return None


def _load(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    return parse_instance(text)


def _resolve_class(args, mech, n, file_cls):
    cls = _class_from_flags(args) or file_cls
    if cls is None and mech is not None:
        cls = default_class(mech, n)
    return cls


def _placement_json(pl):
    return {"y": _nums(pl.y), "pi": list(pl.pi), "mu": list(pl.mu)}


# -- solve --------------------------------------------------------------------


def cmd_solve(args) -> int:
    raw, file_cls = _load(args.instance)
    cls = _class_from_flags(args) or file_cls
    if cls is None:
        raise UsageError("solve needs a class in the instance file or via --m/--k or --c1/--c2")
    prof = normalize(raw)
    objective = Objective.parse(args.objective)
    result = optimal(prof, cls, objective)
    report = {
        "command": "solve",
        "instance_hash": instance_hash(raw, cls),
        "class": cls.to_json(),
        "objective": objective.value,
        "placement": _placement_json(result.placement),
        "cost": _num(result.cost),
    }
    code = EXIT_OK
    if args.oracle:
        if prof.n > 8:
            report["oracle"] = {"checked": False, "reason": "more than 8 agents"}
        else:
            oracle = brute_force_optimal(prof, cls.capacities(), objective)
            agree = oracle.cost == result.cost
            report["oracle"] = {"checked": True, "cost": _num(oracle.cost), "agrees": agree}
            code = EXIT_OK if agree else EXIT_ORACLE
    _emit(args, report)
    return code


# -- mech ---------------------------------------------------------------------


def cmd_mech(args) -> int:
    mech = MechanismId.parse(args.mechanism)
    raw, file_cls = _load(args.instance)
    prof = normalize(raw)
    cls = _resolve_class(args, mech, prof.n, file_cls)
    bound_mech = bind(mech, cls)
    bound_mech.check(prof.n)
    pl = place(mech, prof, cls)
    costs = social_cost(prof, pl)
    report = {
        "command": "mech",
        "mechanism": str(mech),
        "instance_hash": instance_hash(raw, cls),
        "class": None if cls is None else cls.to_json(),
        "placement": _placement_json(pl),
        "per_agent": _nums(costs.per_agent),
        "sc": _num(costs.sc),
        "mc": _num(costs.mc),
    }
    if cls is not None:
        report["violations"] = validate_placement(cls, prof, pl)
        for obj, mine in ((Objective.SC, costs.sc), (Objective.MC, costs.mc)):
            opt = optimal(prof, cls, obj).cost
            report[f"optimal_{obj.value}"] = _num(opt)
            report[f"ratio_{obj.value}"] = _num(ratios.ratio_of(mine, opt))
    _emit(args, report)
    return EXIT_OK


# -- audit ----------------------------------------------------------------------


def _audit_config(args) -> audit.AuditConfig:
    kwargs = {"max_coalition": args.coalition, "exhaustive_candidates": not args.prune}
    if args.offsets:
        kwargs["epsilon_offsets"] = tuple(Fraction(v) for v in args.offsets.split(","))
    if args.margin is not None:
        kwargs["outer_margin"] = Fraction(args.margin)
    if args.budget is not None:
        kwargs["max_evaluations"] = args.budget
    return audit.AuditConfig(**kwargs)


def _audit_profiles(args, mech):
    """Either the instance file or ``--trials`` random profiles."""
    if args.instance:
        raw, file_cls = _load(args.instance)
        return [(list(raw), _resolve_class(args, mech, len(raw), file_cls))]
    cls = _class_from_flags(args)
    if cls is None and mech.name in ("pmm", "pipm"):
        cls = EquiCap(2, args.n // 2) if args.n % 2 == 0 else None
        if cls is None:
            raise UsageError(f"{mech.name} needs --m and --k when no instance is given")
    if isinstance(cls, EquiCap):
        n = cls.n
    elif mech.name == "ic" and cls is not None:
        n = cls.c1 + cls.c2
    elif mech.name == "im" and cls is not None:
        n = 2 * cls.c1
    else:
        n = args.n
    cls = cls or default_class(mech, n)
    profiles = ratios.sample_instances(args.dist, n, args.trials, args.seed)
    return [(list(p.positions), cls) for p in profiles]


def cmd_audit(args) -> int:
    mech = MechanismId.parse(args.mech)
    cfg = _audit_config(args)
    cases = _audit_profiles(args, mech)
    evaluations = 0
    for raw, cls in cases:
        fn = bind(mech, cls)
        if args.kind == "truthful":
            verdict = audit.check_truthful(fn, raw, cfg)
        elif args.kind == "gsp":
            verdict = audit.check_gsp(fn, raw, cfg)
        else:
            verdict = audit.check_anonymous(fn, raw, args.permutations, args.seed)
        evaluations += verdict.evaluations
        if not verdict.passed:
            break
    report = verdict.to_json()
    report.update(
        command=f"audit {args.kind}",
        mechanism=str(mech),
        instances=len(cases),
        evaluations=evaluations,
        instance_hash=instance_hash(raw, cls),
    )
    if not verdict.passed:
        report["instance"] = _nums(raw)
    _emit(args, report)
    return EXIT_OK if verdict.passed else EXIT_VIOLATION


# -- ratio sweep --------------------------------------------------------------------

SWEEP_COLUMNS = [
    "mechanism", "objective", "n", "params", "seed", "instances", "max_ratio", "bound",
    "at_bound", "witness_file", "max_ratio_decimal", "bound_decimal",
]


def cmd_ratio_sweep(args) -> int:
    objective = Objective.parse(args.objective)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    code = EXIT_OK
    for name in args.mech:
        mech = MechanismId.parse(name)
        cls = _class_from_flags(args)
        n = cls.n if isinstance(cls, EquiCap) else args.n
        if cls is None:
            cls = default_class(mech, n)
        bind(mech, cls).check(n)
        instances = ratios.sample_instances(args.dist, n, args.count, args.seed)
        res = ratios.sweep(mech, cls, objective, instances, n)
        witness_file = ""
        if args.witness_dir and res.witness is not None:
            raw = res.witness.positions
            path = Path(args.witness_dir) / f"{instance_hash(raw, cls)}.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(dump_instance(raw, cls) + "\n")
            witness_file = str(path)
        writer.writerow({
            "mechanism": res.mechanism,
            "objective": objective.value,
            "n": n,
            "params": res.params,
            "seed": args.seed,
            "instances": res.instances,
            "max_ratio": _num(res.max_ratio),
            "bound": _num(res.bound.value),
            "at_bound": res.at_bound,
            "witness_file": witness_file,
            "max_ratio_decimal": f"{float(res.max_ratio):.12g}",
            "bound_decimal": f"{float(res.bound.value):.12g}",
        })
        if res.exceedances:
            code = EXIT_VIOLATION
    _emit(args, buf.getvalue())
    return code


# -- tight ----------------------------------------------------------------------------


def cmd_tight(args) -> int:
    mech = MechanismId.parse(args.mech)
    objective = Objective.parse(args.objective)
    cls = _class_from_flags(args)
    if cls is None:
        raise UsageError("tight needs --m/--k or --c1/--c2")
    eps = Fraction(args.eps) if args.eps is not None else None
    prof = ratios.tight_instance(mech, cls, objective, args.n, args.family, eps)
    rec = ratios.evaluate(mech, cls, objective, prof)
    limit = objective is Objective.MC and mech.name in ("pmm", "pipm", "ic")
    report = {
        "command": "tight",
        "mechanism": str(mech),
        "objective": objective.value,
        "class": cls.to_json(),
        "instance": _nums(prof.positions),
        "instance_hash": instance_hash(prof.positions, cls),
        "mech_cost": _num(rec.mech_cost),
        "opt_cost": _num(rec.opt_cost),
        "ratio": _num(rec.ratio),
        "bound": _num(ratios.bound(mech, cls, objective, args.n or prof.n).value),
        "relation": "approaches bound" if limit else "equals family value",
        "family_value": _num(ratios.family_ratio(mech, cls, objective, args.n or prof.n, args.family)),
    }
    if eps is not None:
        report["eps"] = _num(eps)
    _emit(args, report)
    return EXIT_OK


# -- table1 ---------------------------------------------------------------------------


def _cell(spec) -> str:
    text = _num(spec.value)
    if spec.condition:
        text += f" (if {spec.condition})"
    if spec.clamped:
        text += " (clamped)"
    return text


def table1_report(cls, n=None) -> dict:
    row = ratios.table1_row(cls, n)
    return {
        "class": row["class"],
        "sc_lb": _cell(row["sc"]["lb"]),
        "sc_lb_anonymous": _cell(row["sc"]["lb_anonymous"]),
        "sc_ub": _cell(row["sc"]["ub"]),
        "sc_ub_mechanism": row["sc"]["ub_mechanism"].upper(),
        "mc_lb": _cell(row["mc"]["lb"]),
        "mc_ub": _cell(row["mc"]["ub"]),
        "mc_ub_mechanism": row["mc"]["ub_mechanism"].upper(),
    }


def cmd_table1(args) -> int:
    cls = _class_from_flags(args)
    if cls is None:
        raise UsageError("table1 needs --m/--k or --n with --c1/--c2")
    if isinstance(cls, TwoAbundant) and args.n is None:
        raise UsageError("a two-facility row needs --n")
    report = table1_report(cls, None if isinstance(cls, EquiCap) else args.n)
    if args.format == "json":
        _emit(args, report)
        return EXIT_OK
    label = ", ".join(f"{k}={v}" for k, v in report["class"].items())
    lines = [
        f"class           {label}",
        f"SC  LB          {report['sc_lb']}",
        f"SC  LB*         {report['sc_lb_anonymous']}",
        f"SC  UB          {report['sc_ub']} ({report['sc_ub_mechanism']})",
        f"MC  LB          {report['mc_lb']}",
        f"MC  UB          {report['mc_ub']} ({report['mc_ub_mechanism']})",
    ]
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------


def _class_flags(p) -> None:
    p.add_argument("--m", type=int, help="number of facilities (equi-capacitated)")
    p.add_argument("--k", type=int, help="capacity per facility (equi-capacitated)")
    p.add_argument("--c1", type=int, help="first capacity (two facilities)")
    p.add_argument("--c2", type=int, help="second capacity (two facilities)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capflp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="optimal placement for an instance")
    p.add_argument("instance")
    p.add_argument("--objective", default="sc", choices=["sc", "mc"])
    p.add_argument("--oracle", action="store_true", help="cross-check with brute force (n <= 8)")
    p.add_argument("--out")
    _class_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("mech", help="run one mechanism on an instance")
    p.add_argument("mechanism", help='pmm, pipm, eig, ic, ig, im or "percentile:0.25,0.75"')
    p.add_argument("instance")
    p.add_argument("--out")
    _class_flags(p)
    p.set_defaults(func=cmd_mech)

    p = sub.add_parser("audit", help="search for manipulations")
    p.add_argument("kind", choices=["truthful", "gsp", "anonymous"])
    p.add_argument("instance", nargs="?", help="instance file; omit to audit random profiles")
    p.add_argument("--mech", required=True)
    p.add_argument("--coalition", type=int, default=2, help="largest coalition for gsp")
    p.add_argument("--trials", type=int, default=100, help="random profiles when no instance is given")
    p.add_argument("--permutations", type=int, default=20, help="shuffles per profile for anonymity")
    p.add_argument("--n", type=int, default=6, help="agents per random profile")
    p.add_argument("--dist", default="uniform01")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--offsets", help="comma-separated misreport offsets, e.g. 1/1000,1")
    p.add_argument("--margin", help="distance of the outermost misreports")
    p.add_argument("--budget", type=int, help="maximum mechanism evaluations")
    p.add_argument("--prune", action="store_true", help="skip zero-cost deviators' idle misreports")
    p.add_argument("--out")
    _class_flags(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("ratio-sweep", help="empirical ratios on random instances (CSV)")
    p.add_argument("--mech", action="append", required=True)
    p.add_argument("--objective", default="sc", choices=["sc", "mc"])
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--dist", default="uniform01")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--witness-dir")
    p.add_argument("--out")
    _class_flags(p)
    p.set_defaults(func=cmd_ratio_sweep)

    p = sub.add_parser("tight", help="evaluate a worst-case instance family")
    p.add_argument("--mech", required=True)
    p.add_argument("--objective", default="sc", choices=["sc", "mc"])
    p.add_argument("--n", type=int)
    p.add_argument("--family", type=int, default=1, choices=[1, 2])
    p.add_argument("--eps", help="family parameter for the MC families, e.g. 1/30")
    p.add_argument("--out")
    _class_flags(p)
    p.set_defaults(func=cmd_tight)

    p = sub.add_parser("table1", help="bounds summary for one class")
    p.add_argument("--n", type=int)
    p.add_argument("--format", default="table", choices=["table", "json"])
    p.add_argument("--out")
    _class_flags(p)
    p.set_defaults(func=cmd_table1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    # argparse leaves an optional positional that follows options unconsumed
    if extra and args.command == "audit" and args.instance is None and len(extra) == 1 and not extra[0].startswith("-"):
        args.instance = extra[0]
    elif extra:
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    try:
        return args.func(args)
    except SearchBudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (CapFLPError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
