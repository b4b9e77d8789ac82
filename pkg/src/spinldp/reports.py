"""Machine-readable emitters: CSV tables and JSON reports.

Column sets are documented here and stable; numbers are written with repr-level
precision through a fixed format so identical runs produce byte-identical
files.
"""

from __future__ import annotations

import json
import math


def _fmt(x):
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_curve_csv(path, curve):
    """Columns: alpha, f, f_err."""
    write_csv(
        path,
        ["alpha", "f", "f_err"],
        zip(curve.alpha_grid.tolist(), curve.f_values.tolist(), curve.f_err.tolist()),
    )


def write_rate_csv(path, curve):
    """Columns: x, I."""
    write_csv(path, ["x", "I"], zip(curve.x_grid.tolist(), curve.i_values.tolist()))


def write_measure_csv(path, measures):
    """Columns: n, x_atom, weight."""
    rows = []
    for mu in measures:
        for x, w in zip(mu.atoms.tolist(), mu.weights.tolist()):
            rows.append((mu.n, x, w))
    write_csv(path, ["n", "x_atom", "weight"], rows)


def write_bounds_csv(path, report):
    """Columns: set_lo, set_hi, n, mass, log_mass_rate, inf_rate, discrepancy."""
    rows = []
    for entry in report["sets"]:
        lo, hi = entry["interval"]
        for r in entry["rows"]:
            rows.append(
                (lo, hi, r["n"], r["mass"], r["log_mass_rate"],
                 entry["inf_rate"], r["discrepancy"])
            )
    write_csv(
        path,
        ["set_lo", "set_hi", "n", "mass", "log_mass_rate", "inf_rate", "discrepancy"],
        rows,
    )


def write_decay_csv(path, table):
    """Columns: N, diff_norm  (the weight-element locality decay table)."""
    write_csv(path, ["N", "diff_norm"], table)


def write_ensembles_csv(path, report):
    """Columns: n, h_mc, canonical_entropy_density, gap, tail_mass_max,
    log_density_window_mass, entropy_identity_residual, joint_exact."""
    rows = [
        (
            r["n"],
            r["h_mc"],
            r["canonical_entropy_density"],
            r["gap"],
            max(r["tail_masses"]),
            r["log_density_window_mass"],
            r["entropy_identity_residual"],
            int(r["joint_projection_exact"]),
        )
        for r in report["rows"]
    ]
    write_csv(
        path,
        [
            "n",
            "h_mc",
            "canonical_entropy_density",
            "gap",
            "tail_mass_max",
            "log_density_window_mass",
            "entropy_identity_residual",
            "joint_exact",
        ],
        rows,
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if hasattr(obj, "item") and not hasattr(obj, "__len__"):  # numpy scalar
        return _jsonable(obj.item())
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=1, sort_keys=True)
        fh.write("\n")
