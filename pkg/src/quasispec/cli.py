"""Command-line interface: config parsing and deterministic CSV output.

A problem lives in a single JSON document with sections order/indices/
coefficients (or raw_matrix)/boundary/weight_form/settings. Complex
numbers are [re, im] pairs throughout. Commands emit fixed-schema CSV
on stdout (LF endings, '.' decimal separator); --report adds a human
summary on stderr. Exit codes: 0 success, 2 config error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .asymptotics import asymptotic_model, chi1_fit, compute_d, extract_remainders, pair_difference
from .birkhoff import birkhoff_fss, upsilon, upsilon_d
from .errors import ConfigurationError, QuasispecError, ValidationError
from .piecewise import PiecewisePoly
from .regularization import (
    AssociatedMatrix,
    ExpressionSpec,
    build_associated_matrix,
    conjugate_system,
)
from .spectrum import (
    BoundaryForm,
    BoundarySpec,
    ProblemSpec,
    SpectrumSettings,
    locate_eigenvalues,
    weight_numbers,
)

__all__ = ["main", "parse_config", "serialize_config", "problem_from_config"]


# ---------------------------------------------------------------------------
# config document
# ---------------------------------------------------------------------------

def _complex_from(pair, field):
    if (not isinstance(pair, (list, tuple))) or len(pair) != 2:
        raise ValidationError(field, "complex values are [re, im] pairs")
    try:
        return complex(float(pair[0]), float(pair[1]))
    except (TypeError, ValueError) as exc:
        raise ValidationError(field, f"bad complex pair: {exc}") from exc


def _coefficient_from(doc, field):
    if not isinstance(doc, dict) or "type" not in doc:
        raise ValidationError(field, "coefficient needs a 'type'")
    kind = doc["type"]
    if kind == "zero":
        return PiecewisePoly.zero()
    if kind == "constant":
        c = _complex_from(doc.get("value", [0.0, 0.0]), field + ".value")
        out = PiecewisePoly.constant(c)
    elif kind == "piecewise_poly":
        bps = doc.get("breakpoints")
        coeffs = doc.get("coeffs")
        if bps is None or coeffs is None:
            raise ValidationError(field, "piecewise_poly needs breakpoints "
                                  "and coeffs")
        rows = []
        for i, piece in enumerate(coeffs):
            rows.append([_complex_from(c, f"{field}.coeffs[{i}]")
                         for c in piece])
        out = PiecewisePoly(bps, rows, field=field)
    else:
        raise ValidationError(field, f"unknown coefficient type {kind!r}")
    tag = doc.get("class", "L2")
    return out.with_tag(tag) if tag != out.class_tag else out


def _coefficient_doc(pw: PiecewisePoly):
    if pw.is_zero():
        return {"type": "zero"}
    if len(pw.coeffs) == 1 and len(pw.coeffs[0]) == 1:
        v = pw.coeffs[0][0]
        return {"type": "constant", "value": [v.real, v.imag],
                "class": pw.class_tag}
    return {
        "type": "piecewise_poly",
        "breakpoints": [float(b) for b in pw.breakpoints],
        "coeffs": [[[c.real, c.imag] for c in piece] for piece in pw.coeffs],
        "class": pw.class_tag,
    }


def parse_config(doc):
    """Validate a config document; returns the normalized document.

    Raises ValidationError with a field path on any violation; building
    the actual problem happens in problem_from_config.
    """
    if not isinstance(doc, dict):
        raise ValidationError("config", "document must be an object")
    if "order" not in doc or "n" not in doc["order"]:
        raise ValidationError("order.n", "missing")
    n = doc["order"]["n"]
    if not isinstance(n, int) or n < 2:
        raise ValidationError("order.n", "order must be an integer >= 2")
    has_coeffs = "coefficients" in doc
    has_raw = "raw_matrix" in doc
    if has_coeffs == has_raw:
        raise ValidationError(
            "coefficients", "exactly one of coefficients / raw_matrix required")
    if has_coeffs:
        if "indices" not in doc or "i" not in doc["indices"]:
            raise ValidationError("indices.i", "missing")
        if len(doc["indices"]["i"]) != n - 1:
            raise ValidationError("indices.i", f"expected {n - 1} entries")
        if len(doc["coefficients"]) != n - 1:
            raise ValidationError("coefficients", f"expected {n - 1} entries")
    if "boundary" not in doc:
        raise ValidationError("boundary", "missing")
    b = doc["boundary"]
    for key in ("r", "left", "right"):
        if key not in b:
            raise ValidationError(f"boundary.{key}", "missing")
    if len(b["left"]) != b["r"]:
        raise ValidationError("boundary.left", "left form count must equal r")
    if len(b["left"]) + len(b["right"]) != n:
        raise ValidationError("boundary", f"need {n} forms total")
    return doc


def problem_from_config(doc):
    """Build the ProblemSpec (validating everything on the way)."""
    doc = parse_config(doc)
    n = doc["order"]["n"]
    if "coefficients" in doc:
        coeffs = tuple(
            _coefficient_from(c, f"coefficients[{i}]")
            for i, c in enumerate(doc["coefficients"]))
        expr = ExpressionSpec(n, tuple(doc["indices"]["i"]), coeffs)
        matrix = None
    else:
        entries_doc = doc["raw_matrix"].get("entries")
        if entries_doc is None or len(entries_doc) != n:
            raise ValidationError("raw_matrix.entries", f"need {n} rows")
        rows = []
        for a, row in enumerate(entries_doc):
            if len(row) != n:
                raise ValidationError(f"raw_matrix.entries[{a}]",
                                      f"need {n} columns")
            rows.append(tuple(
                _coefficient_from(e, f"raw_matrix.entries[{a}][{bb}]")
                for bb, e in enumerate(row)))
        expr = None
        matrix = AssociatedMatrix(n, tuple(rows))
    b = doc["boundary"]
    forms = []
    for s, fd in enumerate(b["left"]):
        forms.append(BoundaryForm(0, fd["p"], tuple(
            _complex_from(u, f"boundary.left[{s}].u[{j}]")
            for j, u in enumerate(fd.get("u", ())))))
    for s, fd in enumerate(b["right"]):
        forms.append(BoundaryForm(1, fd["p"], tuple(
            _complex_from(u, f"boundary.right[{s}].u[{j}]")
            for j, u in enumerate(fd.get("u", ())))))
    weight = None
    if "weight_form" in doc:
        wd = doc["weight_form"]
        weight = BoundaryForm(0, wd["p0"], tuple(
            _complex_from(u, f"weight_form.u0[{j}]")
            for j, u in enumerate(wd.get("u0", ()))))
    boundary = BoundarySpec(int(b["r"]), tuple(forms), weight)
    return ProblemSpec(boundary=boundary, expression=expr, matrix=matrix)


def serialize_config(doc):
    """Canonical serialization; parse(serialize(parse(x))) == parse(x)."""
    doc = parse_config(doc)
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _settings_from(doc, args):
    s = dict(doc.get("settings", {}))
    if args.tol is not None:
        s["tol"] = args.tol
    if args.lmin is not None:
        s["l_min"] = args.lmin
    if args.lmax is not None:
        s["l_max"] = args.lmax
    if args.kappa is not None:
        s["kappa"] = args.kappa
    if args.seed_R is not None:
        s["R"] = args.seed_R
    if args.threads is not None:
        s["threads"] = args.threads
    spectrum_settings = SpectrumSettings(
        kappa=s.get("kappa"),
        newton_tol=float(s.get("tol", 1e-12)),
        strip_R=s.get("R"),
        threads=int(s.get("threads", 1)),
    )
    return s, spectrum_settings


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------

def _fmt(x):
    return f"{float(x):.17g}"


def _emit(lines, out):
    out.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_matrix(doc, args, out, err):
    problem = problem_from_config(doc)
    x = args.x
    if not 0.0 <= x <= 1.0:
        raise ValidationError("x", "evaluation point must lie in [0, 1]")
    F = problem.F.evaluate(np.array([x]))[0]
    lines = []
    for row in F:
        cells = []
        for v in row:
            cells.append(f"{v.real:.12g}{v.imag:+.12g}j"
                         if v.imag != 0 else f"{v.real:.12g}")
        lines.append("\t".join(cells))
    _emit(lines, out)
    if args.report:
        err.write(f"# F({x:g}) for order n={problem.n}\n")
    return 0


def _locate(doc, args):
    problem = problem_from_config(doc)
    s, settings = _settings_from(doc, args)
    l_min = int(s.get("l_min", 1))
    l_max = int(s.get("l_max", 10))
    res = locate_eigenvalues(problem, l_max=l_max, l_min=l_min,
                             settings=settings)
    return problem, settings, res


def cmd_spectrum(doc, args, out, err):
    problem, settings, res = _locate(doc, args)
    lines = ["l,re_lambda,im_lambda,re_rho,im_rho,re_eps,im_eps,multiplicity"]
    for d in res.data:
        lines.append(",".join([
            str(d.l), _fmt(d.lam.real), _fmt(d.lam.imag),
            _fmt(d.rho.real), _fmt(d.rho.imag),
            _fmt(d.eps.real), _fmt(d.eps.imag), str(d.multiplicity)]))
    _emit(lines, out)
    if args.report:
        err.write(f"# {len(res.data)} eigenvalues, chi_cal="
                  f"{res.chi_cal:.6g}, low-disk count {res.n_low}\n")
    return 0


def cmd_weights(doc, args, out, err):
    problem, settings, res = _locate(doc, args)
    res = weight_numbers(problem, res, settings)
    lines = ["l,re_beta,im_beta"]
    for d in res.data:
        if d.beta is None:
            continue
        lines.append(",".join([str(d.l), _fmt(d.beta.real), _fmt(d.beta.imag)]))
    _emit(lines, out)
    if args.report:
        err.write(f"# weight numbers for {len(res.data)} eigenvalues\n")
    return 0


def cmd_asymptotics(doc, args, out, err):
    problem = problem_from_config(doc)
    s, settings = _settings_from(doc, args)
    model = asymptotic_model(problem.n, problem.boundary.r,
                             problem.boundary.p_list, kappa=s.get("kappa"),
                             strip_R=s.get("R"))
    l_min = int(s.get("l_min", 1))
    l_max = int(s.get("l_max", 10))
    lines = ["name,re,im"]
    for name, v in (("c1", model.c1), ("c2", model.c2), ("chi", model.chi),
                    ("growth", complex(model.growth)),
                    ("sign", complex(model.sign))):
        lines.append(f"{name},{_fmt(v.real)},{_fmt(v.imag)}")
    lines.append("")
    lines.append("l,re_rho0,im_rho0,re_lambda0,im_lambda0")
    for l in range(l_min, l_max + 1):
        r0 = model.prediction(l)
        lam0 = model.lambda_prediction(l)
        lines.append(",".join([str(l), _fmt(r0.real), _fmt(r0.imag),
                               _fmt(lam0.real), _fmt(lam0.imag)]))
    _emit(lines, out)
    if args.report:
        err.write(f"# chi={model.chi:.9g} growth={model.growth:.9g}\n")
    return 0


def _infer_nu0(ea: ExpressionSpec, eb: ExpressionSpec):
    """Smallest nu0 with sigma agreement above it; n-1 if sigma_{n-2}
    itself differs, 1 when everything differs below nu = 1."""
    n = ea.n
    top = 0
    for nu in range(n - 1):
        if not ea.coefficients[nu].equals(eb.coefficients[nu]):
            top = nu + 1
    return max(top, 1)


def cmd_compare(doc_a, doc_b, args, out, err):
    pa = problem_from_config(doc_a)
    pb = problem_from_config(doc_b)
    if pa.expression is None or pb.expression is None:
        raise ConfigurationError("compare requires expression-mode configs")
    nu0 = _infer_nu0(pa.expression, pb.expression)
    if nu0 > pa.n - 2:
        raise ValidationError("coefficients",
                              f"pair differs at nu = {nu0 - 1} >= nu0 bound "
                              f"{pa.n - 2}; no valid decay order")
    d, N_d, N_d0 = compute_d(pa.expression, pb.expression, nu0)
    s, settings = _settings_from(doc_a, args)
    l_min = int(s.get("l_min", 1))
    l_max = int(s.get("l_max", 10))
    ra = locate_eigenvalues(pa, l_max=l_max, l_min=l_min, settings=settings)
    rb = locate_eigenvalues(pb, l_max=l_max, l_min=l_min, settings=settings)
    pc = pair_difference(ra.data, rb.data, d,
                         l_range=(max(l_min, 2), l_max), N_d=N_d, N_d0=N_d0)
    lines = ["name,value"]
    lines.append(f"d,{d}")
    lines.append("N_d," + ";".join(str(v) for v in N_d))
    lines.append("N_d0," + ";".join(str(v) for v in N_d0))
    lines.append(f"re_c_hat,{_fmt(pc.c_hat.real)}")
    lines.append(f"im_c_hat,{_fmt(pc.c_hat.imag)}")
    lines.append(f"slope_fit,{_fmt(pc.slope_fit)}")
    lines.append("")
    lines.append("l,re_rho_hat,im_rho_hat")
    for l, rh in zip(pc.ls, pc.rho_hat):
        lines.append(",".join([str(int(l)), _fmt(rh.real), _fmt(rh.imag)]))
    _emit(lines, out)
    if args.report:
        err.write(f"# d={d} slope={pc.slope_fit:.4f} c_hat={pc.c_hat:.6g}\n")
    return 0


def cmd_birkhoff(doc, args, out, err):
    problem = problem_from_config(doc)
    s, settings = _settings_from(doc, args)
    model = asymptotic_model(problem.n, problem.boundary.r,
                             problem.boundary.p_list, kappa=s.get("kappa"))
    system = conjugate_system(problem.F, model.frame)
    rhos = []
    for tok in args.rho:
        parts = tok.split(",")
        if len(parts) != 2:
            raise ValidationError("rho", "expected re,im tokens")
        rhos.append(complex(float(parts[0]), float(parts[1])))
    if not rhos:
        raise ValidationError("rho", "at least one rho value required")
    # reference decay order against the zero-coefficient system
    levels = [nu + (problem.expression.indices[nu] if problem.expression
                    else 0)
              for nu in range(problem.n - 1)
              ] if problem.expression is not None else []
    nonzero = [nu for nu in range(problem.n - 1)
               if problem.expression is not None and
               not problem.expression.coefficients[nu].is_zero()]
    if nonzero:
        d_eff = problem.n - 1 - max(levels[nu] for nu in nonzero)
    else:
        d_eff = 1
    d_eff = max(d_eff, 1)
    Ad = [[system.A[d_eff][i][l] if d_eff < problem.n else PiecewisePoly.zero()
           for l in range(problem.n)] for i in range(problem.n)]
    lines = ["re_rho,im_rho,upsilon,upsilon_d,max_E,residual"]
    for rho in rhos:
        sol = birkhoff_fss(system, rho, settings.birkhoff)
        ups = upsilon(system, rho)
        upsd = upsilon_d(Ad, rho, model.frame)
        lines.append(",".join([
            _fmt(rho.real), _fmt(rho.imag), _fmt(ups), _fmt(upsd),
            _fmt(sol.max_E()), _fmt(sol.residual())]))
    _emit(lines, out)
    if args.report:
        err.write(f"# {len(rhos)} rho points, d_eff={d_eff}\n")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser():
    ap = argparse.ArgumentParser(
        prog="quasispec",
        description="Spectral data of higher-order BVPs with "
                    "distribution coefficients")
    ap.add_argument("--tol", type=float, default=None)
    ap.add_argument("--lmin", type=int, default=None)
    ap.add_argument("--lmax", type=int, default=None)
    ap.add_argument("--kappa", type=int, default=None)
    ap.add_argument("--seed-R", dest="seed_R", type=float, default=None)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--report", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("matrix", help="print F(x)")
    p.add_argument("config")
    p.add_argument("--x", type=float, default=0.5)

    for name in ("spectrum", "weights", "asymptotics"):
        p = sub.add_parser(name)
        p.add_argument("config")

    p = sub.add_parser("compare")
    p.add_argument("config_a")
    p.add_argument("config_b")

    p = sub.add_parser("birkhoff")
    p.add_argument("config")
    p.add_argument("--rho", action="append", default=[],
                   help="re,im (repeatable)")
    return ap


def _load(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ValidationError("config", f"cannot open {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError("config", f"invalid JSON: {exc}") from exc


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    ap = _build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "matrix":
            return cmd_matrix(_load(args.config), args, out, err)
        if args.command == "spectrum":
            return cmd_spectrum(_load(args.config), args, out, err)
        if args.command == "weights":
            return cmd_weights(_load(args.config), args, out, err)
        if args.command == "asymptotics":
            return cmd_asymptotics(_load(args.config), args, out, err)
        if args.command == "compare":
            return cmd_compare(_load(args.config_a), _load(args.config_b),
                               args, out, err)
        if args.command == "birkhoff":
            return cmd_birkhoff(_load(args.config), args, out, err)
        raise ConfigurationError(f"unknown command {args.command}")
    except (ValidationError, ConfigurationError) as exc:
        err.write(f"config error: {exc}\n")
        return 2
    except QuasispecError as exc:
        err.write(f"numerical failure: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
