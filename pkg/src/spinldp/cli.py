"""Configuration-driven command line front end.

One structured-text (JSON) config per run; no interactive flags mutate
numerics.  Outputs are deterministic given config + seed, and every run writes
a manifest echoing the fully resolved config and library version; re-running
from the manifest reproduces the outputs byte-identically.

Exit codes: 0 success, 2 validation error, 3 invariant violation, 4 resource cap.
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from . import __version__
from . import chain_algebra as ca
from . import expansionals as ex
from . import ldp_engine as ld
from . import operator_kernel as okm
from . import reports as rp
from . import states as st
from . import transfer as tr
from .errors import CapExceededError, ConfigError, SpinLDPError

KINDS = [
    "mgf",
    "rate",
    "measure",
    "ldp-check",
    "ensembles",
    "fcs-validate",
    "expansional-validate",
    "transfer-diagnostics",
]
MODES = ["direct", "increments", "transfer"]

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "spinldp run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "output_dir", "seed"],
    "properties": {
        "kind": {"enum": KINDS},
        "state": {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {
                "type": {"enum": ["gibbs", "fcs"]},
                "interaction_file": {"type": "string"},
                "beta": {"type": "number"},
                "triple_file": {"type": "string"},
            },
        },
        "observable": {
            "type": "object",
            "additionalProperties": False,
            "required": ["interaction_file"],
            "properties": {"interaction_file": {"type": "string"}},
        },
        "observables": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["interaction_file"],
                "properties": {"interaction_file": {"type": "string"}},
            },
        },
        "grids": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["min", "max", "steps"],
                    "properties": {
                        "min": {"type": "number"},
                        "max": {"type": "number"},
                        "steps": {"type": "integer", "minimum": 1},
                    },
                },
                "n_list": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "integer", "minimum": 1},
                },
                "window": {"type": "integer", "minimum": 4},
                "margin": {"type": "integer", "minimum": 1},
            },
        },
        "modes": {"type": "array", "minItems": 1, "items": {"enum": MODES}},
        "sets": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "array",
                "minItems": 2,
                "maxItems": 2,
                "items": {"type": "number"},
            },
        },
        "ensembles": {
            "type": "object",
            "additionalProperties": False,
            "required": ["lambdas", "x", "delta"],
            "properties": {
                "lambdas": {"type": "array", "items": {"type": "number"}},
                "x": {"type": "array", "items": {"type": "number"}},
                "delta": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "expansional": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "count": {"type": "integer", "minimum": 1},
                "dim": {"type": "integer", "minimum": 2},
                "n_terms": {"type": "integer", "minimum": 1},
            },
        },
        "probes": {"type": "integer", "minimum": 1},
        "tolerances": {
            "type": "object",
            "additionalProperties": {"type": "number", "exclusiveMinimum": 0},
        },
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
}

_KIND_NEEDS = {
    "mgf": ["state", "observable", "grids"],
    "rate": ["state", "observable", "grids"],
    "measure": ["state", "observable", "grids"],
    "ldp-check": ["state", "observable", "grids", "sets"],
    "ensembles": ["observables", "ensembles", "grids"],
    "fcs-validate": ["state"],
    "expansional-validate": [],
    "transfer-diagnostics": ["state", "observable", "grids"],
}


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", [str(exc)]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON", [str(exc)]) from None
    if isinstance(doc, dict) and "config" in doc and "version" in doc:
        doc = doc["config"]  # manifests are re-runnable configs
    return doc


def validate_config(doc, base_dir="."):
    """Schema plus per-kind checks; collects every problem before failing."""
    import jsonschema

    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    problems = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path)):
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        problems.append(f"{where}: {err.message}")
    if problems:
        raise ConfigError("configuration failed schema validation", problems)

    kind = doc["kind"]
    for key in _KIND_NEEDS[kind]:
        if key not in doc:
            problems.append(f"<root>: kind {kind!r} requires section {key!r}")
    state = doc.get("state")
    if state is not None:
        if state["type"] == "gibbs":
            for key in ("interaction_file", "beta"):
                if key not in state:
                    problems.append(f"state: gibbs state requires {key!r}")
        else:
            if "triple_file" not in state:
                problems.append("state: fcs state requires 'triple_file'")
    if kind == "fcs-validate" and state is not None and state["type"] != "fcs":
        problems.append("state: fcs-validate requires an fcs state")
    if kind == "ensembles":
        ens = doc.get("ensembles", {})
        obs = doc.get("observables", [])
        for key in ("lambdas", "x"):
            if key in ens and len(ens[key]) != len(obs):
                problems.append(
                    f"ensembles.{key}: length {len(ens[key])} does not match "
                    f"{len(obs)} observables"
                )
    grids = doc.get("grids", {})
    if kind in ("mgf", "rate", "ldp-check") and "alpha" not in grids:
        problems.append("grids: alpha grid required for this kind")
    if kind in ("mgf", "rate", "measure", "ldp-check", "ensembles") and "n_list" not in grids:
        problems.append("grids: n_list required for this kind")
    if kind == "transfer-diagnostics" and "window" not in grids:
        problems.append("grids: window required for transfer-diagnostics")
    if "transfer" in doc.get("modes", []) and "window" not in grids:
        problems.append("grids: window required when the transfer mode is requested")

    for section, key in (("state", "interaction_file"), ("observable", "interaction_file"),
                         ("state", "triple_file")):
        sec = doc.get(section)
        if sec and key in sec:
            p = os.path.join(base_dir, sec[key])
            if not os.path.exists(p):
                problems.append(f"{section}.{key}: file not found: {sec[key]}")
    for i, ob in enumerate(doc.get("observables", [])):
        p = os.path.join(base_dir, ob["interaction_file"])
        if not os.path.exists(p):
            problems.append(
                f"observables.{i}.interaction_file: file not found: "
                f"{ob['interaction_file']}"
            )
    if problems:
        raise ConfigError("configuration is invalid", problems)


class _Resolved:
    """Loaded inputs for a validated config."""

    def __init__(self, doc, base_dir):
        self.doc = doc
        self.base = base_dir
        self.kind = doc["kind"]
        self.seed = doc["seed"]
        self.outdir = os.path.join(base_dir, doc["output_dir"])
        self.tol = dict(doc.get("tolerances", {}))
        grids = doc.get("grids", {})
        self.n_list = sorted(grids.get("n_list", []))
        self.window = grids.get("window")
        self.margin = grids.get("margin")
        a = grids.get("alpha")
        self.alphas = (
            np.linspace(a["min"], a["max"], a["steps"]) if a is not None else None
        )
        self.observable = None
        if "observable" in doc:
            self.observable = ca.load_interaction(
                os.path.join(base_dir, doc["observable"]["interaction_file"])
            )
        self.observables = [
            ca.load_interaction(os.path.join(base_dir, ob["interaction_file"]))
            for ob in doc.get("observables", [])
        ]
        self.state = None
        sdoc = doc.get("state")
        if sdoc is not None:
            if sdoc["type"] == "gibbs":
                psi = ca.load_interaction(
                    os.path.join(base_dir, sdoc["interaction_file"])
                )
                n0 = max(self.n_list) if self.n_list else 1
                self.state = st.GibbsFiniteState(psi, float(sdoc["beta"]), n0)
            else:
                self.state = st.load_fcs_triple(
                    os.path.join(base_dir, sdoc["triple_file"]), validate=False
                )
        # refuse oversized dense windows before any heavy compute
        dims = [i.site_dim for i in self.observables]
        if self.observable is not None:
            dims.append(self.observable.site_dim)
        if isinstance(self.state, st.GibbsFiniteState):
            dims.append(self.state.psi.site_dim)
        d = max(dims, default=2)
        extra = self.state.b if isinstance(self.state, st.FCSTriple) else 1
        if self.n_list:
            okm.check_cap(d, max(self.n_list), extra_factor=extra)
        if self.window:
            okm.check_cap(d, self.window, extra_factor=extra)


def _build_transfer(res, alpha):
    if isinstance(res.state, st.GibbsFiniteState):
        return tr.build_kms_operator(
            res.state.psi, res.observable, res.state.beta, alpha,
            res.window, res.margin,
        )
    return tr.build_fcs_operator(res.state, res.observable, alpha, res.window, res.margin)


def _run_mgf(res, rng):
    modes = res.doc.get("modes", list(MODES))
    files = []
    for mode in modes:
        curve = ld.log_mgf_curve(
            res.state, res.observable, res.alphas, res.n_list,
            mode=mode, window=res.window, margin=res.margin,
        )
        path = os.path.join(res.outdir, f"f_curve_{mode}.csv")
        rp.write_curve_csv(path, curve)
        files.append(path)
    return files


def _run_rate(res, rng):
    mode = res.doc.get("modes", ["increments"])[0]
    curve = ld.log_mgf_curve(
        res.state, res.observable, res.alphas, res.n_list,
        mode=mode, window=res.window, margin=res.margin,
    )
    curve = ld.legendre_transform(curve)
    f_path = os.path.join(res.outdir, "f_curve.csv")
    i_path = os.path.join(res.outdir, "rate_curve.csv")
    rp.write_curve_csv(f_path, curve)
    rp.write_rate_csv(i_path, curve)
    return [f_path, i_path]


def _run_measure(res, rng):
    measures = [ld.spectral_measure(res.state, res.observable, n) for n in res.n_list]
    path = os.path.join(res.outdir, "measure.csv")
    rp.write_measure_csv(path, measures)
    return [path]


def _run_ldp_check(res, rng):
    measures = [ld.spectral_measure(res.state, res.observable, n) for n in res.n_list]
    mode = res.doc.get("modes", ["increments"])[0]
    curve = ld.log_mgf_curve(
        res.state, res.observable, res.alphas, res.n_list,
        mode=mode, window=res.window, margin=res.margin,
    )
    report = ld.ldp_bounds_check(measures, curve, res.doc["sets"])
    b_path = os.path.join(res.outdir, "bounds.csv")
    f_path = os.path.join(res.outdir, "f_curve.csv")
    rp.write_bounds_csv(b_path, report)
    rp.write_curve_csv(f_path, curve)
    return [b_path, f_path]


def _run_ensembles(res, rng):
    ens = res.doc["ensembles"]
    report = ld.ensembles_equivalence(
        res.observables, ens["lambdas"], ens["x"], ens["delta"], res.n_list
    )
    c_path = os.path.join(res.outdir, "ensembles.csv")
    j_path = os.path.join(res.outdir, "ensembles.json")
    rp.write_ensembles_csv(c_path, report)
    rp.write_json(j_path, report)
    return [c_path, j_path]


def _run_fcs_validate(res, rng):
    tol = res.tol.get("fcs", st.FCS_TOL)
    try:
        residuals = res.state.validate(tol)
    except SpinLDPError as exc:
        click.echo(f"triple INVALID: {exc}")
        raise
    spec = st.fcs_channel_spectrum(res.state)
    click.echo(
        "restriction-channel spectrum: "
        + ", ".join(f"{v.real:+.6f}{v.imag:+.6f}j" for v in spec["eigenvalues"])
    )
    click.echo(f"gap: {spec['gap']:.6f}; residuals: "
               + ", ".join(f"{k}={v:.3e}" for k, v in residuals.items()))
    path = os.path.join(res.outdir, "spectrum.json")
    rp.write_json(path, {"spectrum": spec, "residuals": residuals})
    return [path]


def _run_expansional_validate(res, rng):
    cfg = res.doc.get("expansional", {})
    count = cfg.get("count", 50)
    dim = cfg.get("dim", 4)
    n_terms = cfg.get("n_terms", ex.N_TERMS_DEFAULT)
    tol = res.tol.get("expansional_resid", 1e-9)
    rows = []
    worst = 0.0
    for k in range(count):
        q = _random_unit_herm(dim, rng)
        h = _random_unit_herm(dim, rng)
        lq = _one_site_operator(q)
        lh = _one_site_operator(h)
        closed = ex.expansional(lq, lh).matrix
        series = ex.expansional(lq, lh, backend="series", n_terms=n_terms).matrix
        resid = float(np.linalg.norm(series - closed, 2))
        r1, r2 = ex.expansional_identities_check(lq, lh, lh)
        rows.append((k, resid, r1, r2))
        worst = max(worst, resid, r1, r2)
    path = os.path.join(res.outdir, "expansional_checks.csv")
    rp.write_csv(path, ["index", "series_resid", "identity_r1", "identity_r2"], rows)
    if worst > tol:
        raise SpinLDPError(
            f"expansional validation failed: worst residual {worst:.3e} > {tol:.1e}"
        )
    return [path]


def _one_site_operator(matrix):
    return okm.LocalOperator(matrix, (1,), matrix.shape[0])


def _random_unit_herm(dim, rng):
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    h = (g + g.conj().T) / 2.0
    return h / np.linalg.norm(h, 2)


def _run_transfer_diagnostics(res, rng):
    files = []
    reports = []
    last = None
    for alpha in res.alphas if res.alphas is not None else [0.0]:
        op = _build_transfer(res, float(alpha))
        result = tr.leading_eigen(op)
        reports.append(tr.eigen_report(op, result))
        last = (op, result)
    j_path = os.path.join(res.outdir, "eigen_reports.json")
    rp.write_json(j_path, {"reports": reports})
    files.append(j_path)

    op, result = last
    n_probes = res.doc.get("probes", 3)
    probes = [
        _random_unit_herm(op.dim, rng) + 1.5 * np.eye(op.dim) for _ in range(n_probes)
    ]
    diag = tr.theorem22_diagnostics(op, result.lam, result.h, probes)
    rows = []
    for i, p in enumerate(diag["probes"]):
        for n, v in enumerate(p["decay"], start=1):
            rows.append((i, n, v))
    p_path = os.path.join(res.outdir, "probe_decay.csv")
    rp.write_csv(p_path, ["probe", "n", "residual"], rows)
    files.append(p_path)

    if isinstance(res.state, st.GibbsFiniteState) and (res.margin or 0) >= 2:
        cut = max(1, res.window // 2)
        table = ex.kms_weight_decay_table(
            res.state.psi, res.observable, res.state.beta, float(res.alphas[-1]),
            cut, list(range(1, res.margin + 1)), res.window,
        )
        d_path = os.path.join(res.outdir, "weight_decay.csv")
        rp.write_decay_csv(d_path, table)
        files.append(d_path)
    return files


_RUNNERS = {
    "mgf": _run_mgf,
    "rate": _run_rate,
    "measure": _run_measure,
    "ldp-check": _run_ldp_check,
    "ensembles": _run_ensembles,
    "fcs-validate": _run_fcs_validate,
    "expansional-validate": _run_expansional_validate,
    "transfer-diagnostics": _run_transfer_diagnostics,
}


@click.group()
@click.version_option(version=__version__, prog_name="spinldp")
def main():
    """Large-deviation numerics for quantum spin chains."""


@main.command()
@click.argument("config_path", type=click.Path())
def validate(config_path):
    """Validate a run configuration without executing it."""
    _guarded(_validate_cmd, config_path)


def _validate_cmd(config_path):
    doc = load_config(config_path)
    validate_config(doc, os.path.dirname(os.path.abspath(config_path)))
    _Resolved(doc, os.path.dirname(os.path.abspath(config_path)))
    click.echo("configuration OK")


@main.command()
@click.argument("config_path", type=click.Path())
def run(config_path):
    """Execute the experiment described by a configuration file."""
    _guarded(_run_cmd, config_path)


def _run_cmd(config_path):
    doc = load_config(config_path)
    base = os.path.dirname(os.path.abspath(config_path))
    validate_config(doc, base)
    res = _Resolved(doc, base)
    os.makedirs(res.outdir, exist_ok=True)
    rng = np.random.default_rng(res.seed)
    files = _RUNNERS[res.kind](res, rng)
    manifest = {"version": __version__, "config": doc}
    m_path = os.path.join(res.outdir, "manifest.json")
    rp.write_json(m_path, manifest)
    files.append(m_path)
    for f in files:
        click.echo(f"wrote {os.path.relpath(f)}")


@main.command()
def schema():
    """Print the JSON schema for run configurations."""
    click.echo(json.dumps(CONFIG_SCHEMA, indent=1, sort_keys=True))


def _guarded(fn, *args):
    try:
        fn(*args)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        for p in exc.problems:
            click.echo(f"  - {p}", err=True)
        sys.exit(2)
    except CapExceededError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(4)
    except SpinLDPError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)


if __name__ == "__main__":
    main()
