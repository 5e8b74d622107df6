"""Command-line front door: suite execution, trajectory runs, transform
runs, and catalog access.

Exit codes: 0 all requested checks pass, 1 a check fails (or a transform
hypothesis is violated), 2 bad input (unparseable spec, unknown entry,
singular integration path).

Reports embed the tool version, seed, tolerances, parameter values and the
branch convention, and are byte-deterministic for a fixed configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__, catalog
from .connection import check_flatness, levi_civita, natural_connection
from .legendre import (HypothesisViolatedError, NotInvertibleError,
                       check_legendre_field, transform_metric_exprs,
                       transformed_structure)
from .manifold import (ManifoldSpec, Report, SamplePlan, check_hertling_manin,
                       check_homogeneity, check_killing_unit,
                       check_metric_invariance, check_product_axioms, fit_scalar,
                       merge_reports, sample_points, structure_at)
from .ode3d import (OdeState3, SingularPathError, SingularPointError,
                    closed_form_pencil, closed_form_q0, integrals, integrate)

BRANCH_NOTE = "principal (cut on the negative real axis, +0j side)"


def _parse_scalar(text: str) -> complex:
    try:
        return complex(float(text))
    except ValueError:
        return complex(text.replace("i", "j"))


def _load_spec(ref: str):
    """Catalog name or path to a spec JSON file."""
    if os.path.exists(ref):
        with open(ref, "r", encoding="utf-8") as fh:
            return ManifoldSpec.from_json(fh.read()), None
    ent = catalog.entry(ref)
    return ent.spec, ent


def _emit(doc: dict, fmt: str, out_path: str | None):
    if fmt == "json":
        text = json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
    elif fmt == "markdown":
        lines = [f"# {doc.get('command', 'report')}",
                 f"version: {doc['version']}  seed: {doc.get('seed')}  ok: {doc.get('ok')}", "",
                 "| check | residual | tol | verdict |", "|---|---|---|---|"]
        for r in doc.get("reports", []):
            lines.append(f"| {r['name']} | {r['residual']:.6e} | {r['tol']:.1e} | "
                         f"{'pass' if r['passed'] else 'FAIL'} |")
        text = "\n".join(lines) + "\n"
    else:  # csv
        lines = ["name,residual,tol,passed"]
        for r in doc.get("reports", []):
            lines.append(f"{r['name']},{r['residual']!r},{r['tol']!r},{int(r['passed'])}")
        text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _single_check(name: str, spec, points, tol):
    if name == "levi-civita-flat":
        subs = [check_flatness(levi_civita(structure_at(spec, p)), tol) for p in points]
        return merge_reports("levi-civita-flat", subs, tol)
    if name == "natural-flat":
        subs = [check_flatness(natural_connection(structure_at(spec, p)), tol) for p in points]
        return merge_reports("natural-flat", subs, tol)
    table = {"product-axioms": check_product_axioms,
             "hertling-manin": check_hertling_manin,
             "metric-invariance": check_metric_invariance,
             "killing-unit": check_killing_unit,
             "homogeneity": check_homogeneity}
    if name not in table:
        raise KeyError(name)
    return table[name](spec, points, tol)


def cmd_verify(args) -> int:
    try:
        spec, ent = _load_spec(args.spec)
    except (catalog.UnknownEntryError, json.JSONDecodeError, KeyError, ValueError) as err:
        sys.stderr.write(f"spec error: {err}\n")
        return 2
    overrides = {k: _parse_scalar(v) for k, v in (kv.split("=", 1) for kv in args.param)}
    if overrides:
        spec.params.update(overrides)
        if ent is not None:
            ent.spec.params.update(overrides)
    tol = args.rtol
    doc = {"command": "verify", "version": __version__, "seed": args.seed,
           "tolerances": {"atol": args.atol, "rtol": args.rtol},
           "branch_convention": BRANCH_NOTE,
           "params": {k: [complex(v).real, complex(v).imag] for k, v in sorted(spec.params.items())},
           "target": spec.name}
    try:
        if args.check:
            points = sample_points(spec, SamplePlan(seed=args.seed, count=args.points))
            reports = [_single_check(args.check, spec, points, tol)]
            ok = all(r.passed for r in reports)
        elif ent is not None:
            suite = catalog.run_suite(ent, seed=args.seed, count=args.points, tol=tol)
            reports = suite.reports
            doc["expected_failures"] = sorted(suite.expected_failures)
            ok = suite.ok
        else:
            points = sample_points(spec, SamplePlan(seed=args.seed, count=args.points))
            reports = [check_product_axioms(spec, points, tol),
                       check_hertling_manin(spec, points, tol)]
            if spec.g is not None:
                reports += [check_metric_invariance(spec, points, tol),
                            check_killing_unit(spec, points, tol),
                            _single_check("natural-flat", spec, points, tol)]
            if spec.E is not None and spec.g is not None:
                reports.append(check_homogeneity(spec, points, tol))
            if spec.g2 is not None:
                from .pencil import (check_exactness, check_flat_pencil,
                                     check_pencil_homogeneity)
                reports += [check_exactness(spec, points, tol),
                            check_pencil_homogeneity(spec, points, tol),
                            check_flat_pencil(spec, points[:max(4, len(points) // 5)], tol=tol)]
            ok = all(r.passed for r in reports)
    except KeyError as err:
        sys.stderr.write(f"unknown check: {err}\n")
        return 2
    doc["reports"] = [r.to_dict() for r in reports]
    doc["ok"] = ok
    _emit(doc, args.format, args.output)
    return 0 if ok else 1


def cmd_ode(args) -> int:
    try:
        if args.init == "q0":
            state = closed_form_q0(_parse_scalar(args.z_from), args.a, args.b)
        elif args.init == "pencil63":
            state = closed_form_pencil(_parse_scalar(args.z_from))
        elif args.state:
            vals = [float(v) for v in args.state.split(",")]
            if len(vals) != 12:
                raise ValueError("--state needs 12 comma-separated floats (re,im pairs)")
            F = np.array([complex(vals[2 * i], vals[2 * i + 1]) for i in range(6)])
            state = OdeState3(_parse_scalar(args.z_from), F)
        else:
            raise ValueError("give --init q0|pencil63 or --state")
        traj = integrate(state, _parse_scalar(args.z_to), rtol=args.rtol, atol=args.atol,
                         n_dense=args.steps)
    except (SingularPathError, SingularPointError) as err:
        sys.stderr.write(f"singular segment: {err}\n")
        return 2
    except ValueError as err:
        sys.stderr.write(f"input error: {err}\n")
        return 2
    comps = ["F12", "F21", "F13", "F31", "F23", "F32"]
    header = (["z_re", "z_im"]
              + [f"{c}_{p}" for c in comps for p in ("re", "im")]
              + [f"I{k}_{p}" for k in range(1, 9) for p in ("re", "im")]
              + ["dI1_abs", "dI2_abs"])
    lines = [",".join(header)]
    i0 = traj.I_start
    for z, s in traj.states:
        vals = integrals(s)
        row = [z.real, z.imag]
        for i in range(6):
            row += [s.F[i].real, s.F[i].imag]
        for k in range(1, 9):
            row += [vals[f"I{k}"].real, vals[f"I{k}"].imag]
        row += [abs(vals["I1"] - i0["I1"]), abs(vals["I2"] - i0["I2"])]
        lines.append(",".join(repr(float(v)) for v in row))
    text = "\n".join(lines) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    drift = max(traj.drift_I1, traj.drift_I2)
    limit = args.drift_tol
    if drift > limit:
        sys.stderr.write(f"integral drift {drift:.3e} exceeds {limit:.1e}\n")
        return 1
    return 0


def cmd_legendre(args) -> int:
    try:
        spec, ent = _load_spec(args.spec)
    except (catalog.UnknownEntryError, json.JSONDecodeError, KeyError, ValueError) as err:
        sys.stderr.write(f"spec error: {err}\n")
        return 2
    if "," in args.field:
        field_exprs = tuple(args.field.split(","))
        field_name = "custom"
    else:
        if ent is None or "legendre_fields" not in ent.companion:
            sys.stderr.write("named fields need a catalog entry with transform fields\n")
            return 2
        if args.field not in ent.companion["legendre_fields"]:
            sys.stderr.write(f"unknown field {args.field!r}\n")
            return 2
        field_exprs = ent.companion["legendre_fields"][args.field]
        field_name = args.field
    points = sample_points(spec, SamplePlan(seed=args.seed, count=args.points))
    reports = []
    try:
        reports.append(check_legendre_field(spec, field_exprs, points, args.rtol))
        new_spec = transform_metric_exprs(spec, field_exprs, name=f"{spec.name}-{field_name}")
        # cross-check the expression-level metric against the pointwise transform
        res = 0.0
        for p in points[:5]:
            stb = transformed_structure(spec, field_exprs, p)
            stx = structure_at(new_spec, p)
            res = max(res, float(np.max(np.abs(stb.g - stx.g))) / (1 + float(np.max(np.abs(stb.g)))))
        reports.append(Report.from_residual("transform-exprs", res, args.rtol, npoints=5))
        if args.target:
            tgt = catalog.entry(args.target).spec
            res = 0.0
            for p in points:
                stb = transformed_structure(spec, field_exprs, p)
                stt = structure_at(tgt, p)
                s = fit_scalar(stb.g, stt.g)
                res = max(res, float(np.max(np.abs(stb.g - s * stt.g)))
                          / (1 + float(np.max(np.abs(stt.g)))))
            reports.append(Report.from_residual(f"match-{args.target}", res,
                                                max(args.rtol, 1e-7), npoints=len(points)))
    except (NotInvertibleError, HypothesisViolatedError) as err:
        sys.stderr.write(f"transform rejected: {err}\n")
        return 1
    except catalog.UnknownEntryError as err:
        sys.stderr.write(f"spec error: {err}\n")
        return 2
    ok = all(r.passed for r in reports)
    doc = {"command": "legendre", "version": __version__, "seed": args.seed,
           "tolerances": {"atol": args.atol, "rtol": args.rtol},
           "branch_convention": BRANCH_NOTE,
           "params": {k: [complex(v).real, complex(v).imag] for k, v in sorted(spec.params.items())},
           "field": field_name, "transformed_spec": new_spec.to_dict(),
           "reports": [r.to_dict() for r in reports], "ok": ok}
    _emit(doc, args.format, args.output)
    return 0 if ok else 1


def cmd_catalog(args) -> int:
    if args.action == "list":
        for name in catalog.names():
            sys.stdout.write(name + "\n")
        return 0
    try:
        ent = catalog.entry(args.name)
    except catalog.UnknownEntryError as err:
        sys.stderr.write(f"{err}\n")
        return 2
    sys.stdout.write(ent.spec.to_json() + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmcheck",
                                     description="numerical verification of chart-level "
                                                 "product/metric structures")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--points", type=int, default=20)
        p.add_argument("--atol", type=float, default=1e-10)
        p.add_argument("--rtol", type=float, default=1e-8)
        p.add_argument("--format", choices=("json", "markdown", "csv"), default="json")
        p.add_argument("--param", action="append", default=[], metavar="K=V")
        p.add_argument("-o", "--output", default=None)

    pv = sub.add_parser("verify", help="run the check suite for a spec or catalog entry")
    pv.add_argument("spec")
    pv.add_argument("--check", default=None, help="run a single named check")
    common(pv)
    pv.set_defaults(func=cmd_verify)

    po = sub.add_parser("ode", help="integrate the six-component system and emit CSV")
    po.add_argument("--init", choices=("q0", "pencil63"), default=None)
    po.add_argument("--state", default=None, help="12 comma-separated floats (re,im per component)")
    po.add_argument("--from", dest="z_from", required=True)
    po.add_argument("--to", dest="z_to", required=True)
    po.add_argument("--a", type=float, default=1.0)
    po.add_argument("--b", type=float, default=1.0)
    po.add_argument("--steps", type=int, default=16, help="dense output rows")
    po.add_argument("--rtol", type=float, default=1e-10)
    po.add_argument("--atol", type=float, default=1e-12)
    po.add_argument("--drift-tol", type=float, default=1e-7)
    po.add_argument("-o", "--output", default=None)
    po.set_defaults(func=cmd_ode)

    pl = sub.add_parser("legendre", help="transform a spec through an invertible flat field")
    pl.add_argument("spec")
    pl.add_argument("--field", required=True,
                    help="catalog field name or comma-separated component expressions")
    pl.add_argument("--target", default=None, help="catalog entry to match up to one constant")
    common(pl)
    pl.set_defaults(func=cmd_legendre)

    pc = sub.add_parser("catalog", help="list or export built-in specs")
    pc.add_argument("action", choices=("list", "export"))
    pc.add_argument("name", nargs="?")
    pc.set_defaults(func=cmd_catalog)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
