"""Command-line front end.

Commands mirror the pipeline: ``williamson`` (quadratic normal form),
``bnf`` (order-N normalization), ``flow`` / ``hit`` / ``gronwall``
(trajectory diagnostics), ``homological`` (batch transport solves),
``deform`` and ``verify`` (the homotopy conjugation and its residuals).
Every run writes a deterministic JSON report; identical inputs and seeds
give byte-identical bytes.  Exit codes: 0 success, 2 input/parse errors,
3 spectrum errors, 4 resonance obstructions, 5 flow errors,
6 homological errors, 7 deformation errors, 1 anything unexpected.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .deformation import (
    DeformationProblem,
    deform,
    near_identity_slope,
    square_grid,
    verify_conjugacy,
)
from .errors import (
    DecayMarginTooSmall,
    DegenerateHessian,
    FlowError,
    HomologicalFailure,
    HypnfError,
    InsufficientSamples,
    NoComplexBlocks,
    NonActionMonomial,
    NonDiagonalizable,
    NormalizationFailed,
    NotCriticalPoint,
    NotWilliamson,
    OriginUndefined,
    PurelyImaginarySpectrum,
    ResidualDiverging,
    ResonanceObstruction,
    ResonantOrMultipleSpectrum,
    UnstableA0,
    ZeroEigenvalue,
)
from .flow import (
    RegionSpec,
    estimate_gronwall,
    hitting_times,
    integrate,
    variational_flow,
)
from .hamiltonians import Hamiltonian
from .homological import make_partition, residual_check, solve_homological
from .jets import birkhoff_normalize, lie_transform, quadratic_block_structure
from .linalg import classify_spectrum, fundamental_matrix, lyapunov_B0, \
    williamson_normalize
from .serialize import (
    canonical_json,
    homological_batch_to_csv,
    jet_to_dict,
    normal_form_to_dict,
    parse_hamiltonian_spec,
    points_from_csv,
    residual_field_to_csv,
    trajectory_to_csv,
)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_PARSE = 2
EXIT_SPECTRUM = 3
EXIT_RESONANCE = 4
EXIT_FLOW = 5
EXIT_HOMOLOGICAL = 6
EXIT_DEFORMATION = 7

_SPECTRUM_ERRORS = (
    NotCriticalPoint, DegenerateHessian, PurelyImaginarySpectrum,
    ZeroEigenvalue, NonDiagonalizable, ResonantOrMultipleSpectrum,
    NormalizationFailed, NoComplexBlocks, UnstableA0, NotWilliamson,
    NonActionMonomial,
)
_FLOW_ERRORS = (FlowError, OriginUndefined, InsufficientSamples)
_HOMOLOGICAL_ERRORS = (DecayMarginTooSmall, HomologicalFailure)
_DEFORMATION_ERRORS = (ResidualDiverging,)


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SystemExit(_fail(EXIT_PARSE, f"cannot read {path}: {exc}"))


def _fail(code, message):
    print(f"error: {message}", file=sys.stderr)
    return code


def _parse_point(text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise HypnfError(f"bad point {text!r}: {exc}") from exc


def _chart_region(H, chart, delta_flag):
    """Region spec from the chart block: auto block norm or explicit."""
    delta = delta_flag if delta_flag is not None else \
        float(chart.get("delta", 1.0))
    b0_spec = chart.get("b0", "auto")
    if isinstance(b0_spec, str) and b0_spec == "auto":
        lams, ell, m, blocks = quadratic_block_structure(
            H.jet.homogeneous_part(2))
        A0 = np.zeros((H.n, H.n))
        reals = [l for l in lams if not isinstance(l, complex)]
        for j, lam in enumerate(reals):
            A0[j, j] = float(lam)
        for k, (c, d) in enumerate(blocks):
            i = ell + 2 * k
            A0[i, i] = A0[i + 1, i + 1] = c
            A0[i, i + 1] = -d
            A0[i + 1, i] = d
        b0 = lyapunov_B0(A0)
    else:
        b0 = lyapunov_B0(np.asarray(b0_spec, dtype=float)) \
            if isinstance(b0_spec, (list, tuple)) else b0_spec
    return RegionSpec(delta=delta, b0=b0)


def _write_report(args, command, payload, exit_status=EXIT_OK):
    report = {
        "command": command,
        "input_digest": _digest(args.input) if args.input else None,
        "versions": {
            "hypnf": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "seed": getattr(args, "seed", None),
        "threads": os.environ.get("HYPNF_THREADS", "1"),
        "parameters": {
            k: v for k, v in sorted(vars(args).items())
            if k not in ("func", "out") and isinstance(
                v, (int, float, str, bool, type(None)))
        },
        "result": payload,
        "exit_status": exit_status,
    }
    text = canonical_json(report)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{command}_report.json").write_text(text)
    return report


# ----------------------------------------------------------------- commands
def cmd_williamson(args):
    payload = _load_json(args.input)
    H, _ = parse_hamiltonian_spec(payload)
    p2 = H.jet.homogeneous_part(2)
    spectrum = classify_spectrum(fundamental_matrix(H))
    frame = williamson_normalize(p2, spectrum)
    result = frame.to_dict()
    result["eigenvalues"] = [[complex(l).real, complex(l).imag]
                             for l in spectrum.lambdas]
    _write_report(args, "williamson", result)
    print(f"n={frame.n} ell={frame.ell} m={frame.m}")
    print(f"a={list(frame.a)} c={list(frame.c)} d={list(frame.d)}")
    print(f"symplectic_defect={frame.symplectic_defect:.3e} "
          f"block_defect={frame.block_defect:.3e}")
    return EXIT_OK


def cmd_bnf(args):
    payload = _load_json(args.input)
    H, _ = parse_hamiltonian_spec(payload)
    order = args.order if args.order is not None else H.jet.order
    result = birkhoff_normalize(H.jet, order)
    # verification block: apply the generators and measure what survives
    work = H.jet.truncated(order)
    if result.mode == "complexified":
        work = work.map_coefficients(complex).compose_linear(
            result.complex_map[1])
    for g in result.generators:
        if g.terms:
            work = lie_transform(g, work)
    n = work.n
    worst = max((abs(c) for e, c in work.terms.items()
                 if e[:n] != e[n:]), default=0.0)
    doc = normal_form_to_dict(result)
    doc["verification"] = {"max_nonaction_coeff": float(worst)}
    _write_report(args, "bnf", doc)
    print(f"q0 actions: {doc['q0_actions']}")
    print(f"max non-action coefficient after transform: {worst:.3e}")
    return EXIT_OK


def cmd_flow(args):
    payload = _load_json(args.input)
    H, _ = parse_hamiltonian_spec(payload)
    rho0 = _parse_point(args.rho)
    t0, t1 = (float(v) for v in args.t_span.split(","))
    if args.variational:
        traj = variational_flow(H, rho0, (t0, t1), tol=args.tol)
    else:
        traj = integrate(H, rho0, (t0, t1), tol=args.tol)
    result = {
        "t_final": float(traj.times[-1]),
        "state_final": [float(v) for v in traj.states[-1]],
        "energy_drift": traj.energy_drift,
        "error_estimate": traj.error_estimate,
        "steps": len(traj.times),
    }
    _write_report(args, "flow", result)
    if args.csv:
        trajectory_to_csv(traj, args.csv, with_dkappa=args.variational)
    print(f"state({traj.times[-1]:g}) = {result['state_final']}")
    print(f"energy drift {traj.energy_drift:.3e}")
    return EXIT_OK


def cmd_hit(args):
    payload = _load_json(args.input)
    H, chart = parse_hamiltonian_spec(payload)
    spec = _chart_region(H, chart, args.delta)
    rho0 = _parse_point(args.rho)
    ht = hitting_times(H, rho0, spec, tol=args.tol)
    _write_report(args, "hit", ht.to_dict())
    for k, v in ht.to_dict().items():
        if k.startswith("t_"):
            print(f"{k} = {v}")
    return EXIT_OK


def cmd_gronwall(args):
    payload = _load_json(args.input)
    H, chart = parse_hamiltonian_spec(payload)
    spec = _chart_region(H, chart, args.delta)
    rep = estimate_gronwall(H, spec, samples=args.samples, seed=args.seed)
    _write_report(args, "gronwall", rep.to_dict())
    print(f"lambda_minus={rep.lambda_minus:.6f} "
          f"lambda_plus={rep.lambda_plus:.6f} slack={rep.slack:.3e} "
          f"monotone_ok={rep.monotone_ok}")
    return EXIT_OK


def cmd_homological(args):
    payload = _load_json(args.input)
    H, chart = parse_hamiltonian_spec(payload)
    if not H.remainders:
        raise HomologicalFailure(
            "input needs a flat_remainder block as the right-hand side")
    g = H.remainders[0]
    base = Hamiltonian(H.jet)
    spec = _chart_region(base, chart, args.delta)
    cut = make_partition(args.profile_order, b0=spec.b0)
    points = points_from_csv(args.points, base.n) if args.points else \
        [_parse_point(args.rho)]
    rows = []
    for rho in points:
        res = solve_homological(base, g, cut, rho, tol=args.tol)
        rows.append({
            "point": [float(v) for v in rho],
            "f_value": res.value,
            "tail_bound": res.tail_bound,
            "panel_error": res.panel_error,
        })
    rep = residual_check(
        base, lambda rho: solve_homological(
            base, g, cut, rho, tol=args.tol).value,
        g, points[: min(len(points), args.residual_points)], h=1e-2)
    by_point = {tuple(r["point"]): r["residual"] for r in rep.rows}
    for row in rows:
        row["residual"] = by_point.get(tuple(row["point"]), math.nan)
    result = {
        "points": rows,
        "max_residual": rep.max_residual,
    }
    _write_report(args, "homological", result)
    if args.csv:
        homological_batch_to_csv(rows, args.csv, base.n)
    print(f"solved {len(rows)} point(s); "
          f"max residual {rep.max_residual:.3e}")
    return EXIT_OK


def _deformation_problem(args):
    payload = _load_json(args.input)
    H, chart = parse_hamiltonian_spec(payload)
    if not H.remainders:
        raise HomologicalFailure(
            "input needs a flat_remainder block as the perturbation")
    base = Hamiltonian(H.jet)
    spec = _chart_region(base, chart, args.delta)
    return DeformationProblem(
        q0=H.jet, r=H.remainders[0], region=spec,
        s_steps=args.s_steps, quad_tol=args.quad_tol,
        ode_tol=args.ode_tol), base


def cmd_deform(args):
    prob, base = _deformation_problem(args)
    res = deform(prob, check_rates=not args.skip_rate_check)
    grid = square_grid(args.grid_extent, args.grid_count)
    p1 = prob.hamiltonian_at(1.0)
    report = verify_conjugacy(p1, res.kappa1, base, grid)
    slope = near_identity_slope(
        res.kappa1, [1.0, 1.0],
        [args.grid_extent, 0.7 * args.grid_extent, 0.5 * args.grid_extent])
    result = {
        "diagnostics": res.diagnostics.to_dict(),
        "conjugacy": report.to_dict(),
        "near_identity_slope": _encode(slope),
        "final_residual": report.stats["max"],
        "baseline_residual": report.baseline["max"],
        "improvement": report.improvement,
    }
    _write_report(args, "deform", result)
    if args.csv:
        residual_field_to_csv(report.rows, args.csv)
    print(f"baseline {report.baseline['max']:.3e} -> "
          f"residual {report.stats['max']:.3e} "
          f"(improvement {report.improvement:.1f}x)")
    return EXIT_OK


def _encode(v):
    return "inf" if math.isinf(v) else float(v)


def cmd_verify(args):
    prob, base = _deformation_problem(args)
    p1 = prob.hamiltonian_at(1.0)
    if args.kappa == "identity":
        kappa = lambda rho: rho  # noqa: E731
    else:
        kappa = deform(prob, check_rates=False).kappa1
    grid = square_grid(args.grid_extent, args.grid_count)
    report = verify_conjugacy(p1, kappa, base, grid)
    result = report.to_dict()
    result["kappa"] = args.kappa
    _write_report(args, "verify", result)
    if args.csv:
        residual_field_to_csv(report.rows, args.csv)
    print(f"max residual {report.stats['max']:.3e} "
          f"(baseline {report.baseline['max']:.3e})")
    return EXIT_OK


# -------------------------------------------------------------------- main
def build_parser():
    parser = argparse.ArgumentParser(
        prog="hypnf",
        description="Normal forms and flow diagnostics near hyperbolic "
                    "fixed points")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        p.add_argument("--input", required=needs_input,
                       help="Hamiltonian spec JSON")
        p.add_argument("--out", default=None, help="report directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float, default=1e-9)
        p.add_argument("--csv", default=None, help="CSV output path")

    p = sub.add_parser("williamson", help="normalize the quadratic part")
    common(p)
    p.set_defaults(func=cmd_williamson)

    p = sub.add_parser("bnf", help="order-N normalization")
    common(p)
    p.add_argument("--order", type=int, default=None)
    p.set_defaults(func=cmd_bnf)

    p = sub.add_parser("flow", help="integrate a trajectory")
    common(p)
    p.add_argument("--rho", required=True, help="start point x1,..,xi_n")
    p.add_argument("--t-span", default="0,1")
    p.add_argument("--variational", action="store_true")
    p.set_defaults(func=cmd_flow, tol=1e-10)

    p = sub.add_parser("hit", help="cone/ball hitting times")
    common(p)
    p.add_argument("--rho", required=True)
    p.add_argument("--delta", type=float, default=None)
    p.set_defaults(func=cmd_hit, tol=1e-12)

    p = sub.add_parser("gronwall", help="empirical rate bracket")
    common(p)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--samples", type=int, default=40)
    p.set_defaults(func=cmd_gronwall)

    p = sub.add_parser("homological", help="solve H_p f = g at points")
    common(p)
    p.add_argument("--points", default=None, help="CSV of points")
    p.add_argument("--rho", default=None, help="single point")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--profile-order", type=int, default=3)
    p.add_argument("--residual-points", type=int, default=8)
    p.set_defaults(func=cmd_homological, tol=1e-7)

    p = sub.add_parser("deform", help="homotopy conjugation run")
    common(p)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--s-steps", type=int, default=8)
    p.add_argument("--quad-tol", type=float, default=1e-9)
    p.add_argument("--ode-tol", type=float, default=1e-9)
    p.add_argument("--grid-extent", type=float, default=0.25)
    p.add_argument("--grid-count", type=int, default=20)
    p.add_argument("--skip-rate-check", action="store_true")
    p.set_defaults(func=cmd_deform)

    p = sub.add_parser("verify", help="conjugacy residual field")
    common(p)
    p.add_argument("--kappa", choices=["identity", "deform"],
                   default="identity")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--s-steps", type=int, default=8)
    p.add_argument("--quad-tol", type=float, default=1e-9)
    p.add_argument("--ode-tol", type=float, default=1e-9)
    p.add_argument("--grid-extent", type=float, default=0.25)
    p.add_argument("--grid-count", type=int, default=20)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ResonanceObstruction as exc:
        payload = {"error": str(exc), "k": list(exc.k) if exc.k else None,
                   "value": exc.value}
        _write_report(args, args.command, payload,
                      exit_status=EXIT_RESONANCE)
        return _fail(EXIT_RESONANCE, str(exc))
    except _SPECTRUM_ERRORS as exc:
        _write_report(args, args.command, {"error": str(exc)},
                      exit_status=EXIT_SPECTRUM)
        return _fail(EXIT_SPECTRUM, str(exc))
    except _DEFORMATION_ERRORS as exc:
        _write_report(args, args.command, {"error": str(exc)},
                      exit_status=EXIT_DEFORMATION)
        return _fail(EXIT_DEFORMATION, str(exc))
    except _HOMOLOGICAL_ERRORS as exc:
        _write_report(args, args.command, {"error": str(exc)},
                      exit_status=EXIT_HOMOLOGICAL)
        return _fail(EXIT_HOMOLOGICAL, str(exc))
    except _FLOW_ERRORS as exc:
        _write_report(args, args.command, {"error": str(exc)},
                      exit_status=EXIT_FLOW)
        return _fail(EXIT_FLOW, str(exc))
    except HypnfError as exc:
        _write_report(args, args.command, {"error": str(exc)},
                      exit_status=EXIT_PARSE)
        return _fail(EXIT_PARSE, str(exc))


if __name__ == "__main__":
    sys.exit(main())
