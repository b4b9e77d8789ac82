"""Moment generating functions, rate functions, and exact finite-volume spectra.

f(alpha) is estimated three ways: "direct" volume-normalized values at the
largest volume, "increments" log p_n - log p_{n-1} (the default; kills the O(1)
surface term), and "transfer" through the leading eigenvalue of the truncated
transfer operator with the normalization offsets applied so f(0) = 0 exactly.
The Legendre transform runs monotone root-finding on a spline of the
(convexified) samples rather than a grid supremum, which removes
grid-resolution artifacts near the minimum of the rate function.  All
log-domain sums are max-shifted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.special import logsumexp

from . import chain_algebra as ca
from . import operator_kernel as ok
from . import states as st
from . import transfer as tr
from .errors import DomainError

CONVEXITY_SLACK = 1e-6
TAU_DEGEN = 1e-9


@dataclass(frozen=True)
class RateCurve:
    """Sampled log-MGF f on an alpha grid plus its Legendre transform I."""

    alpha_grid: np.ndarray
    f_values: np.ndarray
    f_err: np.ndarray
    f_prime: np.ndarray
    x_grid: np.ndarray = field(default_factory=lambda: np.empty(0))
    i_values: np.ndarray = field(default_factory=lambda: np.empty(0))
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SpectralMeasure:
    """Atoms of the distribution of the energy density at volume n."""

    atoms: np.ndarray
    weights: np.ndarray
    n: int


# ---------------------------------------------------------------------------
# p_n(alpha) and the log moment generating function


def _same_interaction(psi, phi):
    if psi is phi:
        return True
    if psi.site_dim != phi.site_dim or len(psi.generators) != len(phi.generators):
        return False
    return all(
        s1 == s2 and m1.shape == m2.shape and np.array_equal(m1, m2)
        for (s1, m1), (s2, m2) in zip(psi.generators, phi.generators)
    )


@lru_cache(maxsize=8)
def _ham_values(phi, n):
    """Eigenvalues of H_phi([1, n]) only (eigenvectors discarded)."""
    return ok.herm_spectral(ca.hamiltonian(phi, (1, n)))[0]


@lru_cache(maxsize=8)
def _pn_data(psi, phi, n):
    """Spectra of H_psi, H_phi on [1, n] plus their eigenbasis overlap weights.

    Returns (w_psi, w_phi, overlap) with overlap[i, j] = |<psi_i|phi_j>|^2,
    or overlap None when the interactions coincide (shared eigenbasis).
    Cached so alpha sweeps pay for the diagonalizations once.
    """
    if _same_interaction(psi, phi):
        w = _ham_values(psi, n)
        return w, w, None
    w_psi, v_psi = ok.herm_spectral(ca.hamiltonian(psi, (1, n)))
    w_phi, v_phi = ok.herm_spectral(ca.hamiltonian(phi, (1, n)))
    overlap = np.abs(v_psi.conj().T @ v_phi) ** 2
    return w_psi, w_phi, overlap


def log_pn_alpha(psi, phi, beta, alpha, n):
    """log Tr(e^{-beta H_psi/2} e^{alpha H_phi} e^{-beta H_psi/2}), max-shifted.

    The symmetric split makes the argument positive; the trace is evaluated in
    log domain through the eigenbasis overlap, so large alpha*n never leaves
    the representable range.
    """
    if beta == 0.0:  # Tr e^{alpha H_phi}: no overlap needed
        return float(logsumexp(alpha * _ham_values(phi, n)))
    if alpha == 0.0:
        return float(logsumexp(-beta * _ham_values(psi, n)))
    w_psi, w_phi, overlap = _pn_data(psi, phi, n)
    a_exp = -beta * w_psi  # the two half factors combine to e^{-beta H_psi}
    b_exp = alpha * w_phi
    if overlap is None:
        return float(logsumexp(a_exp + b_exp))
    grid = np.add.outer(a_exp, b_exp)
    return float(logsumexp(grid.ravel(), b=np.maximum(overlap.ravel(), 1e-300)))


def pn_alpha(psi, phi, beta, alpha, n):
    """p_n(alpha) in linear scale; use log_pn_alpha when this would overflow."""
    logp = log_pn_alpha(psi, phi, beta, alpha, n)
    if logp > 700.0:
        raise DomainError(
            f"p_n overflows double precision (log p_n = {logp:.3e}); "
            f"use log_pn_alpha"
        )
    return math.exp(logp)


def density_for(state, n):
    if isinstance(state, st.GibbsFiniteState):
        return st.gibbs_density(state.psi, state.beta, n)
    if isinstance(state, st.FCSTriple):
        return st.fcs_local_density(state, n)
    raise DomainError(f"unsupported state specification {type(state).__name__}")


def log_exp_expectation(density, h_op, alpha):
    """log omega(e^{alpha H}) against a density matrix, max-shifted."""
    w, v = ok.herm_spectral(h_op)
    weights = np.maximum(np.real(np.einsum("ij,jk,ki->i", v.conj().T, density.matrix, v)), 0.0)
    return float(logsumexp(alpha * w, b=np.maximum(weights, 1e-300)))


@lru_cache(maxsize=16)
def _state_weights(state, phi, n):
    """(eigenvalues of H_phi([1, n]), state weights on its eigenspaces), cached."""
    if isinstance(state, st.GibbsFiniteState):
        if state.beta == 0.0:  # normalized trace: uniform weights
            w = _ham_values(phi, n)
            return w, np.full(len(w), 1.0 / len(w))
        w_psi, w_phi, overlap = _pn_data(state.psi, phi, n)
        logp = -state.beta * w_psi
        p = np.exp(logp - logsumexp(logp))
        weights = p if overlap is None else overlap.T @ p
        return w_phi, np.maximum(weights, 0.0)
    dens = st.fcs_local_density(state, n)
    w, v = ok.herm_spectral(ca.hamiltonian(phi, (1, n)))
    weights = np.real(np.einsum("ij,jk,ki->i", v.conj().T, dens.matrix, v))
    return w, np.maximum(weights, 0.0)


def _gibbs_log_mgf(psi, beta, phi, alpha, n):
    return log_pn_alpha(psi, phi, beta, alpha, n) - log_pn_alpha(psi, phi, beta, 0.0, n)


def _fcs_log_mgf(t, phi, alpha, n):
    w, weights = _state_weights(t, phi, n)
    return float(logsumexp(alpha * w, b=np.maximum(weights, 1e-300)))


def _transfer_log_lambda(state, phi, alpha, m, margin):
    if isinstance(state, st.GibbsFiniteState):
        op = tr.build_kms_operator(state.psi, phi, state.beta, alpha, m, margin)
    else:
        op = tr.build_fcs_operator(state, phi, alpha, m, margin)
    return math.log(tr.leading_eigen(op).lam)


def log_mgf_curve(
    state,
    phi,
    alpha_grid,
    n_list,
    mode="increments",
    window=None,
    margin=None,
    with_error=True,
):
    """Sample f(alpha) over the grid; see the module docstring for the modes.

    n_list is the list of volumes (ascending); direct uses the largest,
    increments the two largest, and the error estimate is the spread over the
    two largest volumes (or over windows M, M-1 in transfer mode).
    """
    alphas = np.asarray(sorted(float(a) for a in alpha_grid))
    ns = sorted(int(n) for n in n_list)
    if not ns:
        raise DomainError("n_list must be non-empty")
    if isinstance(state, st.FCSTriple):
        st.fcs_primitivity_reduce(state)  # gate: rejects non-primitive triples

    def f_at(alpha, n):
        if isinstance(state, st.GibbsFiniteState):
            return _gibbs_log_mgf(state.psi, state.beta, phi, alpha, n)
        return _fcs_log_mgf(state, phi, alpha, n)

    fvals, ferr = [], []
    if mode == "direct":
        for a in alphas:
            fvals.append(f_at(a, ns[-1]) / ns[-1])
            ferr.append(
                abs(fvals[-1] - f_at(a, ns[-2]) / ns[-2])
                if with_error and len(ns) >= 2
                else float("nan")
            )
    elif mode == "increments":
        if ns[-1] < 2:
            raise DomainError("increments mode needs n >= 2")
        prev = ns[-2] if len(ns) >= 2 else ns[-1] - 1
        for a in alphas:
            cur = f_at(a, ns[-1]) - f_at(a, ns[-1] - 1)
            fvals.append(cur)
            if with_error and prev >= 2:
                other = f_at(a, prev) - f_at(a, prev - 1)
                ferr.append(abs(cur - other))
            else:
                ferr.append(float("nan"))
    elif mode == "transfer":
        m = int(window) if window is not None else max(ns)
        base = _transfer_log_lambda(state, phi, 0.0, m, margin)
        base_small = (
            _transfer_log_lambda(state, phi, 0.0, m - 1, margin)
            if with_error
            else None
        )
        for a in alphas:
            cur = _transfer_log_lambda(state, phi, a, m, margin) - base
            fvals.append(cur)
            if with_error:
                small = _transfer_log_lambda(state, phi, a, m - 1, margin) - base_small
                ferr.append(abs(cur - small))
            else:
                ferr.append(float("nan"))
    else:
        raise DomainError(f"unknown log_mgf_curve mode {mode!r}")

    fvals = np.array(fvals)
    fprime = np.gradient(fvals, alphas) if len(alphas) >= 2 else np.zeros_like(fvals)
    kind = "gibbs" if isinstance(state, st.GibbsFiniteState) else "fcs"
    return RateCurve(
        alpha_grid=alphas,
        f_values=fvals,
        f_err=np.array(ferr),
        f_prime=fprime,
        meta={"mode": mode, "state": kind, "n_list": ns, "window": window},
    )


# ---------------------------------------------------------------------------
# Legendre-Fenchel transform


class ConvexConjugator:
    """Numeric Legendre transform of convex samples on a grid.

    Enforces convexity (violations of the second differences beyond the slack
    are errors; smaller ones are flattened by pool-adjacent-violators on the
    slopes), interpolates with a cubic spline, and finds the stationary point
    by monotone root-finding on the spline derivative.
    """

    def __init__(self, grid, values, slack=CONVEXITY_SLACK):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if len(grid) < 2 or np.any(np.diff(grid) <= 0):
            raise DomainError("conjugation grid must be strictly increasing, len >= 2")
        second = np.diff(values, 2)
        if len(second) and float(second.min()) < -slack:
            raise DomainError(
                f"input is not convex: worst second difference "
                f"{float(second.min()):.3e} below -{slack:.1e}"
            )
        h = np.diff(grid)
        slopes = np.diff(values) / h
        slopes = _pav_nondecreasing(slopes, h)
        rebuilt = np.concatenate(([values[0]], values[0] + np.cumsum(slopes * h)))
        self.grid = grid
        self.values = rebuilt
        self._spline = CubicSpline(grid, rebuilt)
        self._deriv = self._spline.derivative()
        self.slope_range = (float(self._deriv(grid[0])), float(self._deriv(grid[-1])))

    def argsup(self, x):
        """Maximizer of a*x - f(a) over the grid interval (clamped to the ends)."""
        lo, hi = self.grid[0], self.grid[-1]
        dlo, dhi = self.slope_range
        if x <= dlo:
            return float(lo)
        if x >= dhi:
            return float(hi)
        return float(brentq(lambda a: float(self._deriv(a)) - x, lo, hi))

    def transform(self, x):
        """sup_a (a*x - f(a)); +inf outside the attained-slope range."""
        dlo, dhi = self.slope_range
        if dhi - dlo < 1e-12:  # essentially linear input: conjugate is a point mass
            c = 0.5 * (dlo + dhi)
            if abs(x - c) <= 1e-9 * max(1.0, abs(c)):
                return float(self.grid[0] * x - self.values[0])
            return math.inf
        if x < dlo - 1e-12 or x > dhi + 1e-12:
            return math.inf
        a_star = self.argsup(min(max(x, dlo), dhi))
        return float(a_star * x - self._spline(a_star))


def _pav_nondecreasing(y, w):
    """Pool-adjacent-violators: least-squares nondecreasing fit to y with weights w."""
    blocks = [[float(v), float(wt)] for v, wt in zip(y, w)]
    merged = []
    for val, wt in blocks:
        merged.append([val, wt])
        while len(merged) >= 2 and merged[-2][0] > merged[-1][0]:
            v2, w2 = merged.pop()
            v1, w1 = merged.pop()
            merged.append([(v1 * w1 + v2 * w2) / (w1 + w2), w1 + w2])
    out = []
    idx = 0
    for val, wt in merged:
        total = 0.0
        while total < wt - 1e-12 and idx < len(y):
            out.append(val)
            total += w[idx]
            idx += 1
    return np.array(out)


def legendre_transform(curve, x_grid=None, n_x=201):
    """Fill the rate-function part of a curve: I(x) = sup_a (a x - f(a)).

    Outside the attained-slope range I is +inf (out of reach of the sampled
    grid); at the mean slope f'(0) the transform vanishes.
    """
    conj = ConvexConjugator(curve.alpha_grid, curve.f_values)
    if x_grid is None:
        lo, hi = conj.slope_range
        pad = 1e-9 * max(1.0, abs(lo), abs(hi))
        x_grid = np.linspace(lo + pad, hi - pad, n_x) if hi - lo > 2e-9 else np.array([lo])
    x_grid = np.asarray(x_grid, dtype=float)
    i_vals = np.array([conj.transform(x) for x in x_grid])
    return replace(curve, x_grid=x_grid, i_values=i_vals)


def fenchel_on_grid(grid, values, out_grid):
    """Generic numeric conjugate; used for the biconjugacy check."""
    conj = ConvexConjugator(grid, values)
    return np.array([conj.transform(x) for x in out_grid])


def rate_infimum_on_interval(curve, interval):
    """inf of I over a closed interval, using convexity (minimum at x* = f'(0))."""
    conj = ConvexConjugator(curve.alpha_grid, curve.f_values)
    lo, hi = float(interval[0]), float(interval[1])
    zero_idx = int(np.argmin(np.abs(curve.alpha_grid)))
    x_star = float(curve.f_prime[zero_idx])
    if lo <= x_star <= hi:
        return conj.transform(x_star)
    return conj.transform(hi) if hi < x_star else conj.transform(lo)


# ---------------------------------------------------------------------------
# Spectral measures and the finite-volume LD bounds


def spectral_measure(state, phi, n, tau_degen=TAU_DEGEN):
    """Distribution of (1/n) H_phi([1, n]) in the state, as an atomic measure."""
    w, raw_w = _state_weights(state, phi, n)
    xs = w / n
    atoms, weights = [], []
    for x, wt in zip(xs, raw_w):
        if atoms and x - atoms[-1] <= tau_degen:
            weights[-1] += wt
        else:
            atoms.append(float(x))
            weights.append(float(wt))
    return SpectralMeasure(np.array(atoms), np.array(weights), n)


def measure_mass(measure, interval, edge_tol=TAU_DEGEN):
    """Mass of a closed interval; atoms within edge_tol of a boundary included."""
    lo, hi = float(interval[0]), float(interval[1])
    sel = (measure.atoms >= lo - edge_tol) & (measure.atoms <= hi + edge_tol)
    return float(measure.weights[sel].sum())


def measure_mean(measure):
    return float(np.dot(measure.atoms, measure.weights))


def mean_energy_density(state, phi, n, site=None):
    """sum over X containing `site` of omega(Phi(X)) / |X| at volume n."""
    site = (n + 1) // 2 if site is None else site
    dens = density_for(state, n)
    total = 0.0
    for j, shape, m in ca.translates_containing(phi, site):
        sites = tuple(x + j for x in shape)
        if sites[0] < 1 or sites[-1] > n:
            raise DomainError(
                f"translate {sites} through site {site} does not fit in [1, {n}]"
            )
        term = ok.embed(ok.LocalOperator(m, sites, phi.site_dim), dens.sites)
        total += float(np.trace(dens.matrix @ term.matrix).real) / len(shape)
    return total


def ldp_bounds_check(measures, curve, sets, edge_tol=TAU_DEGEN):
    """Compare (1/n) log mu_n(S) against -inf_S I for each interval S.

    Diagnostic report: per set, the discrepancy sequence over the volumes, the
    upper-bound slack at the largest volume, and whether the absolute
    discrepancy shrinks.  Empty-mass intervals are reported as -inf with the
    volume at which the mass vanished.
    """
    measures = sorted(measures, key=lambda m: m.n)
    report = {"sets": []}
    for interval in sets:
        inf_i = rate_infimum_on_interval(curve, interval)
        rows = []
        for mu in measures:
            mass = measure_mass(mu, interval, edge_tol)
            if mass <= 0.0:
                rows.append(
                    {"n": mu.n, "mass": 0.0, "log_mass_rate": -math.inf,
                     "discrepancy": math.nan, "empty": True}
                )
                continue
            rate = math.log(mass) / mu.n
            rows.append(
                {"n": mu.n, "mass": mass, "log_mass_rate": rate,
                 "discrepancy": rate + inf_i, "empty": False}
            )
        filled = [r for r in rows if not r["empty"]]
        discrepancies = [abs(r["discrepancy"]) for r in filled]
        entry = {
            "interval": [float(interval[0]), float(interval[1])],
            "inf_rate": inf_i,
            "rows": rows,
            "upper_bound_slack": (
                max(0.0, filled[-1]["discrepancy"]) if filled else math.nan
            ),
            "upper_bound_holds": (
                filled[-1]["log_mass_rate"] <= -inf_i + max(0.0, filled[-1]["discrepancy"]) + 1e-12
                if filled
                else True
            ),
            "discrepancy_shrinks": (
                all(b <= a + 1e-12 for a, b in zip(discrepancies, discrepancies[1:]))
                if len(discrepancies) >= 2
                else True
            ),
        }
        report["sets"].append(entry)
    return report


# ---------------------------------------------------------------------------
# Equivalence of ensembles at desk scale


def _fit_rate(ns, tails):
    pts = [(n, math.log(t)) for n, t in zip(ns, tails) if t > 0]
    if len(pts) < 2:
        return math.nan, math.nan
    slope, _, r2 = tr._loglinear_fit([p[0] for p in pts], [p[1] for p in pts])
    return -slope, r2


def ensembles_equivalence(phi_list, lambdas, x, delta, n_range, tau_degen=TAU_DEGEN):
    """Microcanonical vs canonical entropy diagnostics for the tilted states
    sigma_N = exp(sum_k lambda_k H_k) / Z on [1, N].

    Per volume: the joint spectral-window entropy (exact when the observables
    commute, a flagged product-of-projections positive surrogate otherwise),
    the concentration tail mass per observable, the window mass of the shifted
    log-density observable, and the canonical entropy density with its
    algebraic-identity residual.
    """
    lambdas = [float(v) for v in lambdas]
    x = [float(v) for v in x]
    if not (len(phi_list) == len(lambdas) == len(x)):
        raise DomainError("phi_list, lambdas and x must have equal lengths")
    rows = []
    for n in sorted(int(v) for v in n_range):
        hs = [ca.hamiltonian(p, (1, n)) for p in phi_list]
        d = phi_list[0].site_dim
        htot = sum(lam * h.matrix for lam, h in zip(lambdas, hs))
        w, v = np.linalg.eigh((htot + htot.conj().T) / 2.0)
        logz = float(logsumexp(w))
        p = np.exp(w - logz)
        sigma = (v * p) @ v.conj().T

        scale = max(ok.op_norm(h.matrix) for h in hs) or 1.0
        commuting = all(
            ok.op_norm(hs[i].matrix @ hs[j].matrix - hs[j].matrix @ hs[i].matrix)
            <= 1e-10 * scale * scale
            for i in range(len(hs))
            for j in range(i + 1, len(hs))
        )
        projs = [
            ok.spectral_projection(
                ok.LocalOperator(h.matrix / n, h.sites, d),
                (xk - delta - tau_degen, xk + delta + tau_degen),
            ).matrix
            for h, xk in zip(hs, x)
        ]
        if commuting:
            joint = projs[0]
            for pk in projs[1:]:
                joint = joint @ pk
        else:  # symmetric positive surrogate P1 ... PK ... P1, flagged below
            joint = projs[-1]
            for pk in reversed(projs[:-1]):
                joint = pk @ joint @ pk
        tr_joint = float(np.trace(joint).real)
        h_mc = math.log(tr_joint) / n if tr_joint > 0 else -math.inf

        tails = [
            max(0.0, 1.0 - float(np.trace(sigma @ pk).real)) for pk in projs
        ]
        entropy = -float(np.dot(p, w - logz))
        canonical = entropy / n
        identity_resid = abs(
            entropy
            - (logz - sum(
                lam * float(np.trace(sigma @ h.matrix).real)
                for lam, h in zip(lambdas, hs)
            ))
        )
        y = (w - logz + entropy) / n  # spectrum of the shifted log density
        y_mass = float(p[(y >= -delta - tau_degen) & (y <= delta + tau_degen)].sum())
        rows.append(
            {
                "n": n,
                "h_mc": h_mc,
                "canonical_entropy_density": canonical,
                "gap": abs(h_mc - canonical) if math.isfinite(h_mc) else math.inf,
                "tail_masses": tails,
                "log_density_window_mass": y_mass,
                "entropy_identity_residual": identity_resid,
                "joint_projection_exact": commuting,
            }
        )
    ns = [r["n"] for r in rows]
    gaps = [r["gap"] for r in rows]
    k_count = len(phi_list)
    tail_fits = []
    for k in range(k_count):
        rate, r2 = _fit_rate(ns, [r["tail_masses"][k] for r in rows])
        tail_fits.append({"rate": rate, "r2": r2})
    return {
        "rows": rows,
        "tail_fits": tail_fits,
        "gap_shrinks": all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:])),
        "delta": delta,
        "x": x,
        "lambdas": lambdas,
    }
