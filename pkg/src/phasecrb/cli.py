"""Command-line front end.

Exit codes: 0 success, 2 validation failure, 3 numerical failure, 4 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import ProblemConfig, load_config, parse_override
from .errors import ConfigError, PhaseCRBError, RegimeViolation
from .estimation import monte_carlo
from .fisher import (COHERENT, SINGLE_PHOTON, cliff_integrals, inner_products,
                     precision_bounds_cliff, qfim_coherent, qfim_single_photon)
from .models import cliff_model, load_tabulated_csv, validate_partials
from .modes import (GridSpec, analytic_probabilities_cliff, build_basis,
                    nonorthogonal_condition_check, probabilities_numeric, saturation_report)
from .numerics import QuadratureSpec

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_CONFIG = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_CONFIG)


def _num(x):
    """JSON-safe float (inf/nan become strings)."""
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def _mat(a):
    return [[_num(v) for v in row] for row in np.atleast_2d(a)] if a is not None else None


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _regime(cfg: ProblemConfig) -> dict:
    p = cfg.cliff()
    wa = cfg.w * p.alpha
    return {"kh": p.kh, "w_alpha": wa, "inv_w_alpha_sq": wa ** -2}


def _quad(cfg, model, f):
    L = max(f.half_extent, 30.0 * model.x_scale)
    return QuadratureSpec(L, max_subdivisions=cfg.quad_max_subdivisions, rel_tol=cfg.quad_rel_tol)


def _bounds(cfg, p, f, n, family):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeViolation)
        if cfg.strict:
            warnings.simplefilter("error", RegimeViolation)
        return precision_bounds_cliff(p, f, cfg.N, family, exact=cfg.exact, integrals=n)


# ---------------------------------------------------------------- verbs


def cmd_qfim(cfg: ProblemConfig, out: Path) -> int:
    p, f = cfg.cliff(), cfg.profile()
    model = cliff_model(p, cfg.parameters)
    G, g = inner_products(model, f, quad=_quad(cfg, model, f))
    fs = qfim_single_photon(G, g, cfg.N, model.parameter_names)
    fc = qfim_coherent(G, g, cfg.N, model.parameter_names)
    n = cliff_integrals(p, f, exact=cfg.exact)
    families = {}
    for res, fam in ((fs, SINGLE_PHOTON), (fc, COHERENT)):
        entry = {"F": _mat(res.F), "crb_diag": [_num(v) for v in res.crb_diag]}
        if set(cfg.parameters) == {"h", "alpha"}:
            b = _bounds(cfg, p, f, n, fam)
            entry.update({"sigma_h_rel": b.sigma_h, "sigma_alpha_rel": b.sigma_alpha,
                          "sigma_h_m": b.sigma_h * p.h, "sigma_alpha_per_m": b.sigma_alpha * p.alpha,
                          "regime_ratio": b.regime_ratio})
        families[fam] = entry
    report = {
        "parameters": list(model.parameter_names),
        "N": cfg.N,
        "exact": cfg.exact,
        **_regime(cfg),
        "symmetry_integrals": [_num(v) for v in g],
        "N_integrals": {f"N{i + 1}": v for i, v in enumerate(n.as_array().tolist())},
        "constant_field_valid": n.valid,
        "families": families,
    }
    _write_json(out / "qfim.json", report)
    print(f"kh = {p.kh:.6g}   w*alpha = {n.w_alpha:.6g}   (w*alpha)^-2 = {n.w_alpha ** -2:.3e}")
    for fam, entry in families.items():
        print(f"[{fam}] F = {np.array2string(np.array(entry['F']), precision=6)}")
        if "sigma_h_rel" in entry:
            print(f"  sigma_h/h = {entry['sigma_h_rel']:.6e}   "
                  f"sigma_alpha/alpha = {entry['sigma_alpha_rel']:.6e}")
    print(f"I = {np.array2string(g, precision=6)}")
    return EXIT_OK


def cmd_modes(cfg: ProblemConfig, out: Path) -> int:
    p, f = cfg.cliff(), cfg.profile()
    model = cliff_model(p, cfg.parameters)
    basis = build_basis(model, f, grid_spec=GridSpec(cfg.grid_points, cfg.grid_half_width))
    files = basis.export_csv(out / "modes", y_scale=p.alpha)
    n = cliff_integrals(p, f)
    manifest = {
        **_regime(cfg),
        "parameters": list(model.parameter_names),
        "grid_points": cfg.grid_points,
        "y_definition": "y = alpha0 * x",
        "N3": n.N3,
        "g1_asymptote": 1.0 / math.sqrt(1.0 - n.N3),
        "Omega": _mat(basis.Omega),
        "orthonormality_error": basis.orthonormality_error(),
        "files": [str(pth.relative_to(out)) for pth in files],
    }
    _write_json(out / "modes" / "manifest.json", manifest)
    print(f"wrote {len(files)} mode files; max |<g_i|g_j> - delta_ij| = "
          f"{manifest['orthonormality_error']:.2e}")
    return EXIT_OK


def cmd_probs(cfg: ProblemConfig, out: Path) -> int:
    p, f = cfg.cliff(), cfg.profile()
    model = cliff_model(p, cfg.parameters)
    basis = build_basis(model, f)
    d = {"h": cfg.dh, "alpha": cfg.dalpha}
    dtheta = np.array([d[k] for k in model.parameter_names])
    num = probabilities_numeric(basis, model, f, dtheta)
    n = cliff_integrals(p, f)
    ana = analytic_probabilities_cliff(p, n, cfg.dh, cfg.dalpha if "alpha" in cfg.parameters else 0.0,
                                       parameters=model.parameter_names)
    rows = [[k, num.p[k], ana.p[k]] for k in range(len(num.p))]
    _write_csv(out / "probs.csv", ["mode", "p_numeric [1]", "p_analytic [1]"], rows)
    for r in rows:
        print(f"p{r[0]}: numeric {r[1]:.12e}   second-order {r[2]:.12e}")
    print(f"residual 1 - sum p = {num.residual:.3e}")
    return EXIT_OK


def cmd_simulate(cfg: ProblemConfig, out: Path) -> int:
    p, f = cfg.cliff(), cfg.profile()
    model = cliff_model(p, cfg.parameters)
    d = {"h": cfg.dh, "alpha": cfg.dalpha}
    dtheta = np.array([d[k] for k in model.parameter_names])
    if "h" in cfg.parameters and cfg.dh == 0.0:
        dtheta[model.parameter_names.index("h")] = 0.05 / p.k
    rep = monte_carlo(model, f, None, dtheta, cfg.n_photons, cfg.trials, seed=cfg.seed)
    doc = rep.to_dict()
    doc["efficiency_band"] = [cfg.efficiency_low, cfg.efficiency_high]
    status = "ok"
    code = EXIT_OK
    if not rep.covariance_defined:
        status, code = "undefined_covariance", EXIT_NUMERICAL
    elif rep.failures:
        status, code = "fit_failures", EXIT_NUMERICAL
    elif not all(cfg.efficiency_low <= e <= cfg.efficiency_high for e in rep.efficiency):
        status, code = "efficiency_out_of_band", EXIT_VALIDATION
    doc["status"] = status
    _write_json(out / "simulation.json", doc)
    (out / "trials.csv").write_text(rep.estimates_csv(), encoding="utf-8")
    eff = "undefined" if rep.efficiency is None else np.array2string(rep.efficiency, precision=4)
    print(f"path={rep.path} trials={rep.trials} efficiency={eff} status={status}")
    return code


SWEEP_AXES = ("w", "alpha", "N", "dh", "dalpha")
_SWEEP_HEADER = ["value", "kh [1]", "w_alpha [1]", "inv_w_alpha_sq [1]", "N1 [1]", "N2 [1]",
                 "N3 [1]", "F11_single [1/m^2]", "F12 [1]", "F22 [m^2]", "F11_coherent [1/m^2]",
                 "sigma_h_single [1]", "sigma_h_coherent [1]", "sigma_alpha [1]",
                 "regime_ratio [1]", "p0 [1]", "p1 [1]", "p2 [1]", "status"]
_AXIS_UNITS = {"w": "m", "alpha": "1/m", "N": "photons", "dh": "m", "dalpha": "1/m"}


def cmd_sweep(cfg: ProblemConfig, out: Path, axis: str, values) -> int:
    values = np.asarray(values, dtype=float)
    if len(values) < 2 or not (np.all(np.diff(values) > 0) or np.all(np.diff(values) < 0)):
        raise ConfigError("sweep range must be monotone with at least 2 points")
    rows = []
    fixed_basis = None
    for v in values:
        try:
            if axis == "w":
                c = cfg.with_(w=float(v))
            elif axis == "alpha":
                c = cfg.with_(alpha0=float(v), beta0_deg=None)
            elif axis == "N":
                c = cfg.with_(N=float(v))
            elif axis == "dh":
                c = cfg.with_(dh=float(v))
            else:
                c = cfg.with_(dalpha=float(v))
            p, f = c.cliff(), c.profile()
            n = cliff_integrals(p, f, exact=c.exact)
            bs = _bounds(c, p, f, n, SINGLE_PHOTON)
            bc = _bounds(c, p, f, n, COHERENT)
            model = cliff_model(p)
            if axis in ("dh", "dalpha"):
                fixed_basis = fixed_basis or build_basis(model, f)
                basis = fixed_basis
            else:
                basis = build_basis(model, f)
            probs = probabilities_numeric(basis, model, f, [c.dh, c.dalpha]).p
            F = 4 * np.array([p.k ** 2 * (1 - n.N3), p.kh * n.N1, p.h ** 2 * n.N2,
                              p.k ** 2 * (2 - n.N3)])
            rows.append([v, p.kh, n.w_alpha, n.w_alpha ** -2, n.N1, n.N2, n.N3, *F,
                         bs.sigma_h, bc.sigma_h, bs.sigma_alpha, bs.regime_ratio, *probs, "ok"])
        except (PhaseCRBError, ValueError) as exc:
            rows.append([v] + [""] * (len(_SWEEP_HEADER) - 2) + [f"{type(exc).__name__}: {exc}"])
    header = [f"{axis} [{_AXIS_UNITS[axis]}]"] + _SWEEP_HEADER[1:]
    _write_csv(out / f"sweep_{axis}.csv", header, rows)
    failed = sum(r[-1] != "ok" for r in rows)
    print(f"sweep over {axis}: {len(rows)} points, {failed} failed")
    return EXIT_OK


def run_validation(cfg: ProblemConfig) -> list[dict]:
    """Internal consistency checks; each entry has name, passed and detail."""
    checks = []

    def add(name, passed, **detail):
        checks.append({"name": name, "passed": bool(passed), **detail})

    p, f = cfg.cliff(), cfg.profile()
    model = cliff_model(p, cfg.parameters)
    rep = validate_partials(model, seed=cfg.seed)
    add("partials", rep.passed, max_rel_deviation=rep.max_rel_deviation)

    if cfg.tabulated_csv:
        tab, _ = load_tabulated_csv(cfg.tabulated_csv)
        trep = validate_partials(tab, seed=cfg.seed)
        add("tabulated_partials", trep.passed, max_rel_deviation=trep.max_rel_deviation,
            sample_consistency=trep.sample_consistency)

    G, g = inner_products(model, f)
    fs, fc = qfim_single_photon(G, g, cfg.N), qfim_coherent(G, g, cfg.N)
    gap = np.max(np.abs(fc.F - fs.F - 4 * cfg.N * np.outer(g, g)) / np.max(np.abs(fc.F)))
    add("qfim_identity", gap < 1e-9, max_rel_deviation=gap)

    basis = build_basis(model, f, grid_spec=GridSpec(cfg.grid_points, cfg.grid_half_width))
    err = basis.orthonormality_error()
    add("basis_orthonormal", err < 1e-8, max_deviation=err)

    sat = saturation_report(model, f, basis=basis)
    add("saturation_gamma", sat.passed, discrepancy=sat.discrepancy)

    n = cliff_integrals(p, f)
    lhs, rhs, equal = nonorthogonal_condition_check(G[:1, :1], g[:1])
    ratio = lhs / rhs
    add("phi1_projector_nonoptimal", (not equal) and abs(ratio - (2 - n.N3)) < 1e-6,
        lhs_over_rhs=ratio, expected=2 - n.N3)

    eps = 1e-2
    ana = analytic_probabilities_cliff(p, n, eps / p.k, eps / p.h)
    add("analytic_sum_rule", abs(ana.p.sum() - 1.0) < 1e-15, deviation=float(ana.p.sum() - 1.0))

    fo = n.first_order
    rel = max(abs(getattr(n, k) / fo[k] - 1.0) for k in ("N1", "N2", "N3"))
    add("constant_field_approximation", n.valid and rel < 10.0 * n.w_alpha ** -2,
        w_alpha=n.w_alpha, max_rel_deviation=rel, valid=n.valid)
    return checks


def cmd_validate(cfg: ProblemConfig, out: Path) -> int:
    checks = run_validation(cfg)
    ok = all(c["passed"] for c in checks)
    _write_json(out / "validate.json", {**_regime(cfg), "passed": ok, "checks": checks})
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}")
    return EXIT_OK if ok else EXIT_VALIDATION


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat TOML problem file")
    common.add_argument("--out", type=Path, help="output directory (overrides config)")
    common.add_argument("--seed", type=int, help="master RNG seed (overrides config)")
    mode = common.add_mutually_exclusive_group()
    mode.add_argument("--exact", dest="exact", action="store_true", default=None,
                      help="N integrals by quadrature")
    mode.add_argument("--first-order", dest="exact", action="store_false",
                      help="N integrals from constant-field closed forms")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (TOML value syntax)")

    parser = _Parser(prog="phasecrb", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    sub.add_parser("qfim", parents=[common], help="Fisher matrices and precision bounds")
    sub.add_parser("modes", parents=[common], help="export optimal mode profiles")
    pr = sub.add_parser("probs", parents=[common], help="mode detection probabilities")
    pr.add_argument("--dh", type=float)
    pr.add_argument("--dalpha", type=float)
    sim = sub.add_parser("simulate", parents=[common], help="Monte Carlo MLE efficiency")
    sim.add_argument("--trials", type=int)
    sim.add_argument("--dh", type=float)
    sim.add_argument("--dalpha", type=float)
    sw = sub.add_parser("sweep", parents=[common], help="bounds versus one parameter")
    sw.add_argument("--axis", choices=SWEEP_AXES, required=True)
    sw.add_argument("--start", type=float, required=True)
    sw.add_argument("--stop", type=float, required=True)
    sw.add_argument("--points", type=int, default=11)
    sw.add_argument("--log", action="store_true", help="geometric spacing")
    sub.add_parser("validate", parents=[common], help="internal consistency checks")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = dict(parse_override(s) for s in args.set)
        for key in ("seed", "exact", "trials", "dh", "dalpha"):
            v = getattr(args, key, None)
            if v is not None:
                overrides[key] = v
        if args.out is not None:
            overrides["out"] = str(args.out)
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegimeViolation)
            if args.verb == "sweep":
                if args.points < 2:
                    raise ConfigError("sweep needs at least 2 points")
                if args.log:
                    if args.start <= 0 or args.stop <= 0:
                        raise ConfigError("log sweep needs positive endpoints")
                    values = np.geomspace(args.start, args.stop, args.points)
                else:
                    values = np.linspace(args.start, args.stop, args.points)
                return cmd_sweep(cfg, out, args.axis, values)
            verb = {"qfim": cmd_qfim, "modes": cmd_modes, "probs": cmd_probs,
                    "simulate": cmd_simulate, "validate": cmd_validate}[args.verb]
            return verb(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhaseCRBError as exc:
        record = {"status": "numerical_failure", "verb": args.verb,
                  "error": type(exc).__name__, "detail": str(exc)}
        _write_json(out / "failure.json", record)
        print(json.dumps(record), file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
