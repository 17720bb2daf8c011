"""File formats: jet JSON, Hamiltonian specs, reports, CSV emission.

All JSON emission goes through :func:`canonical_json` (sorted keys, fixed
separators, trailing newline) so identical inputs and seeds produce
byte-identical reports.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .errors import DimensionMismatch, HypnfError
from .hamiltonians import FlatFunction, Hamiltonian, MonomialBump
from .jets import Jet


def canonical_json(payload):
    return json.dumps(payload, sort_keys=True, indent=2,
                      allow_nan=False) + "\n"


def _encode_float(v):
    if v is None:
        return "undefined"
    if math.isinf(v):
        return "+inf" if v > 0 else "-inf"
    return float(v)


# ------------------------------------------------------------------- jets
def jet_to_dict(jet):
    """Serialize a jet as {n, N, terms: [{alpha, beta, coeff}]}."""
    return {
        "n": jet.n,
        "N": jet.order,
        "terms": [
            {"alpha": list(e[: jet.n]), "beta": list(e[jet.n:]),
             "coeff": float(c)}
            for e, c in jet.sorted_terms()
        ],
    }


def jet_from_dict(payload):
    try:
        n = int(payload["n"])
        order = int(payload["N"])
        triples = [(tuple(t["alpha"]), tuple(t["beta"]), float(t["coeff"]))
                   for t in payload.get("terms", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise HypnfError(f"malformed jet payload: {exc}") from exc
    for alpha, beta, _ in triples:
        if len(alpha) != n or len(beta) != n:
            raise DimensionMismatch(
                f"exponent arrays must have length n={n}")
    return Jet.from_terms(n, order, triples)


# ------------------------------------------------------------ Hamiltonians
def parse_hamiltonian_spec(payload):
    """Build a Hamiltonian and chart options from an input document.

    Expected shape: {n, N, terms: [...], flat_remainder: {kind, params},
    chart: {delta, b0: "auto" | matrix}}; only n, N, terms are required.
    """
    jet = jet_from_dict(payload)
    remainders = ()
    spec = payload.get("flat_remainder")
    if spec:
        kind = spec.get("kind")
        params = spec.get("params", {})
        if kind == "monomial-bump":
            remainders = (MonomialBump(
                tuple(params["alpha"]), tuple(params["beta"]),
                float(params["coeff"]),
                support_radius=float(params.get("support_radius",
                                                math.inf)),
                plateau_radius=params.get("plateau_radius"),
                order=int(params.get("profile_order", 3)),
            ),)
        elif kind == "callable-plugin":
            import importlib

            target = params["target"]
            module_name, _, attr = target.partition(":")
            fn = getattr(importlib.import_module(module_name), attr)
            remainders = (FlatFunction(
                jet.n, fn,
                n_flat=int(params.get("n_flat", 1)),
                c_flat=float(params.get("c_flat", 1.0)),
                support_radius=float(params.get("support_radius",
                                                math.inf)),
            ),)
        else:
            raise HypnfError(f"unknown flat_remainder kind {kind!r}")
    chart = payload.get("chart", {})
    return Hamiltonian(jet, remainders), chart


# ---------------------------------------------------------------- reports
def frame_to_dict(frame):
    return frame.to_dict()


def normal_form_to_dict(result):
    q0_jet = result.q0.to_jet(result.order)
    return {
        "n": result.n,
        "order": result.order,
        "mode": result.mode,
        "lambdas": [[float(l.real), float(l.imag)]
                    for l in map(complex, result.lambdas)],
        "generators": [jet_to_dict(g) for g in result.generators_real],
        "q0": jet_to_dict(q0_jet if result.mode == "real"
                          else result.q0_jet()),
        "q0_actions": [
            {"exponents": list(m), "coeff": float(complex(c).real)}
            for m, c in result.q0.coeffs
        ],
        "residual_degree": result.residual_degree,
        "nonaction_residual": float(result.nonaction_residual),
    }


def hitting_times_to_dict(ht):
    return ht.to_dict()


# ------------------------------------------------------------------- CSV
def trajectory_to_csv(traj, path, with_dkappa=False):
    """Write t, x1..xn, xi1..xin [, dkappa columns row-major]."""
    n = traj.H.n
    header = ["t"] + [f"x{i + 1}" for i in range(n)] \
        + [f"xi{i + 1}" for i in range(n)]
    if with_dkappa:
        if traj.dkappa is None:
            raise HypnfError("trajectory carries no variational data")
        dim = 2 * n
        header += [f"dkappa_{i + 1}_{j + 1}" for i in range(dim)
                   for j in range(dim)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k, t in enumerate(traj.times):
            row = [f"{t!r}"] + [f"{v!r}" for v in traj.states[k]]
            if with_dkappa:
                row += [f"{v!r}" for v in traj.dkappa[k].ravel()]
            writer.writerow(row)


def points_from_csv(path, n):
    """Read evaluation points (2n columns, optional header) from CSV."""
    points = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                vals = [float(v) for v in row[: 2 * n]]
            except ValueError:
                continue  # header line
            if len(vals) != 2 * n:
                raise DimensionMismatch(
                    f"need {2 * n} coordinates per row, got {len(vals)}")
            points.append(np.array(vals))
    return points


def homological_batch_to_csv(rows, path, n):
    header = [f"x{i + 1}" for i in range(n)] \
        + [f"xi{i + 1}" for i in range(n)] \
        + ["f_value", "tail_bound", "panel_error", "residual"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v!r}" for v in row["point"]]
                            + [f"{row['f_value']!r}", f"{row['tail_bound']!r}",
                               f"{row['panel_error']!r}",
                               f"{row['residual']!r}"])


def residual_field_to_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "xi", "baseline", "residual"])
        for row in rows:
            writer.writerow([f"{v!r}" for v in row["point"]]
                            + [f"{row['baseline']!r}",
                               f"{row['residual']!r}"])
