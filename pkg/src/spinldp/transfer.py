"""Truncated Ruelle transfer operators and their leading-eigenvalue extraction.

Three kinds are built:

* kms          -- acts on operators over the window [0, M-1]: conjugate by the
                  weight element a(alpha) (supported on [1, M-1]), take the
                  normalized trace over site 0, shift left by one, pad the
                  freed rightmost site with the identity.
* fcs          -- acts on operators over [-M, -1] x B: conjugate by a(alpha)
                  (supported on [-M, -1]), feed the pair (site -1, B) through
                  the channel E, shift right, pad the freed leftmost site.
* fcs_one_site -- the exactly solvable one-site deformation b -> E(e^{aA} x b)
                  on B alone.

The leading eigenvalue of the kms kind recovers per-site increments of
log p_n(alpha) up to the +log d normalization, which is centralized in
`kms_log_increment`; the fcs kind recovers increments of the log moment
generating function directly.  Infinite tails are cut at the window M and the
expansional margin N; convergence in (M, N) is demonstrated empirically by
window-growth stability rather than certified bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import chain_algebra as ca
from . import expansionals as ex
from . import operator_kernel as ok
from .errors import ConvergenceError, DomainError, InvariantViolation

POWER_TOL = 1e-11
POWER_MAX_ITER = 5000


@dataclass
class TruncatedTransferOperator:
    """Linear action Q -> L(Q) on a truncated window, with its adjoint."""

    kind: str
    alpha: float
    site_dim: int
    b: int
    window: tuple
    dim: int
    margin: int
    apply: callable
    apply_adjoint: callable
    params: dict = field(default_factory=dict)


def _check_window(m, psi, phi):
    r = max((g.range for g in (psi, phi) if g is not None), default=1)
    if m < 2 * r + 2:
        raise DomainError(f"window M={m} too small: need M >= 2r+2 = {2 * r + 2}")


def _scaled(lop, c):
    return ok.LocalOperator(c * lop.matrix, lop.sites, lop.site_dim)


def kms_weight_matrix(psi, phi, beta, alpha, m, margin):
    """a(alpha) truncated to [1, M-1]: conjugated Psi-expansional times Phi-expansional."""
    sites = tuple(range(1, m))
    hi = min(1 + margin, m - 1)
    hat_psi = ok.embed(ca.boundary_term(psi, 1, "right", "hat", (1, m - 1)), sites)
    hat_phi = ok.embed(ca.boundary_term(phi, 1, "right", "hat", (1, m - 1)), sites)
    tail_psi = ok.embed(ca.hamiltonian(psi, (2, hi)), sites)
    tail_phi = ok.embed(ca.hamiltonian(phi, (2, hi)), sites)
    f_psi = ex.expansional(_scaled(hat_psi, -beta / 2.0), _scaled(tail_psi, -beta / 2.0))
    f_phi = ex.expansional(_scaled(hat_phi, alpha / 2.0), _scaled(tail_phi, alpha / 2.0))
    conj_gen = ok.embed(ca.hamiltonian(phi, (1, hi)), sites)
    lead = ex.imaginary_time_conjugation(f_psi, conj_gen, alpha / 2.0)
    return lead.matrix @ f_phi.matrix


def _require_invertible(a, what):
    svals = np.linalg.svd(a, compute_uv=False)
    if svals[-1] <= 1e-13 * svals[0]:
        raise DomainError(
            f"{what} singular to tolerance (condition number "
            f"{svals[0] / max(svals[-1], 1e-300):.3e})"
        )


def build_kms_operator(psi, phi, beta, alpha, m, margin=None):
    """Transfer operator of the Gibbs/KMS construction on the window [0, M-1]."""
    _check_window(m, psi, phi)
    margin = m - 2 if margin is None else int(margin)
    if not (1 <= margin <= m - 2):
        raise DomainError(f"margin must lie in [1, M-2], got {margin}")
    d = psi.site_dim
    dim = ok.check_cap(d, m)
    a = kms_weight_matrix(psi, phi, beta, alpha, m, margin)
    _require_invertible(a, "a(alpha)")
    a_full = np.kron(np.eye(d, dtype=complex), a)
    a_full_h = a_full.conj().T
    sub = dim // d

    def apply(q):
        x = a_full_h @ q @ a_full
        y = np.trace(x.reshape(d, sub, d, sub), axis1=0, axis2=2) / d
        return np.kron(y, np.eye(d, dtype=complex))

    def apply_adjoint(sigma):
        y = np.trace(sigma.reshape(sub, d, sub, d), axis1=1, axis2=3)
        x = np.kron(np.eye(d, dtype=complex) / d, y)
        return a_full @ x @ a_full_h

    return TruncatedTransferOperator(
        kind="kms",
        alpha=float(alpha),
        site_dim=d,
        b=1,
        window=(0, m - 1),
        dim=dim,
        margin=margin,
        apply=apply,
        apply_adjoint=apply_adjoint,
        params={"beta": float(beta), "m": m},
    )


def fcs_weight_matrix(phi, alpha, m, margin):
    """a(alpha) truncated to [-M, -1]: expansional of the left surface term."""
    sites = tuple(range(-m, 0))
    hat = ok.embed(ca.boundary_term(phi, 1, "left", "hat", (-m, -1)), sites)
    lo = max(-m, -1 - margin)
    tail = ok.embed(ca.hamiltonian(phi, (lo, -2)), sites)
    return ex.expansional(_scaled(hat, alpha / 2.0), _scaled(tail, alpha / 2.0)).matrix


def build_fcs_operator(t, phi, alpha, m, margin=None):
    """Transfer operator of the FCS construction on [-M, -1] x B."""
    _check_window(m, phi, None)
    margin = m - 1 if margin is None else int(margin)
    if not (1 <= margin <= m - 1):
        raise DomainError(f"margin must lie in [1, M-1], got {margin}")
    t.validate()
    d, b = t.site_dim, t.b
    dim = ok.check_cap(d, m, extra_factor=b)
    a = fcs_weight_matrix(phi, alpha, m, margin)
    _require_invertible(a, "a(alpha)")
    a_full = np.kron(a, np.eye(b, dtype=complex))
    a_full_h = a_full.conj().T
    bulk = d ** (m - 1)
    lifted = [np.kron(np.eye(bulk, dtype=complex), v) for v in t.kraus]
    eye_pad = np.eye(d, dtype=complex)

    def apply(q):
        x = a_full_h @ q @ a_full
        y = sum(v @ x @ v.conj().T for v in lifted)
        return np.kron(eye_pad, y)

    def apply_adjoint(sigma):
        sub = bulk * b
        y = np.trace(sigma.reshape(d, sub, d, sub), axis1=0, axis2=2)
        x = sum(v.conj().T @ y @ v for v in lifted)
        return a_full @ x @ a_full_h

    return TruncatedTransferOperator(
        kind="fcs",
        alpha=float(alpha),
        site_dim=d,
        b=b,
        window=(-m, -1),
        dim=dim,
        margin=margin,
        apply=apply,
        apply_adjoint=apply_adjoint,
        params={"m": m},
    )


@dataclass(frozen=True)
class OneSiteTransfer:
    """Deformed one-site map b -> E(e^{alpha A} x b) with its full spectrum."""

    matrix: np.ndarray
    alpha: float
    lam: float
    spectrum: tuple

    @property
    def log_lam(self):
        return math.log(self.lam)


def fc_deformed_transfer(t, a_onesite, alpha):
    """Exactly solvable one-site deformation; lam is the spectral radius."""
    a_onesite = np.asarray(a_onesite, dtype=complex)
    ok.require_hermitian(a_onesite, what="one-site observable")
    from .states import channel_e, map_matrix  # local import avoids a cycle

    weight = ok.mexp_herm(alpha * a_onesite)
    mat = map_matrix(lambda x: channel_e(t, np.kron(weight, x)), t.b)
    evals = np.linalg.eigvals(mat)
    lam = float(np.max(np.abs(evals)))
    return OneSiteTransfer(mat, float(alpha), lam, tuple(complex(v) for v in evals))


def kms_log_increment(lam, site_dim):
    """The +log d bookkeeping of the KMS eigenvalue identity, in one place:
    log p_n - log p_{n-1} -> log lambda(alpha) + log d."""
    return math.log(lam) + math.log(site_dim)


@dataclass
class LeadingEigen:
    lam: float
    h: np.ndarray
    residual: float
    gap_estimate: float
    fit_r2: float
    iterations: int
    min_eig_h: float
    residuals: list


def _loglinear_fit(xs, ys):
    """Least-squares slope/intercept/r2 of ys against xs."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) < 2:
        return float("nan"), float("nan"), float("nan")
    slope, intercept = np.polyfit(xs, ys, 1)
    fit = slope * xs + intercept
    ss_res = float(np.sum((ys - fit) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def leading_eigen(op, tol=POWER_TOL, max_iter=POWER_MAX_ITER):
    """Power iteration from Q0 = 1 with per-step normalization.

    Converged when the relative residual |L(h) - lam h| / lam drops below tol
    (Hilbert-Schmidt norms).  The eigenvector is renormalized to unit spectral
    norm and must come out positive definite; the spectral-gap estimate is a
    log-linear fit of the residual decay over the last iterations, reported
    with its fit quality and never asserted as the true gap.
    """
    dim = op.dim
    q = np.eye(dim, dtype=complex)
    q /= np.linalg.norm(q)
    residuals = []
    lam = 1.0
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        y = op.apply(q)
        y = (y + y.conj().T) / 2.0
        lam = float(np.real(np.trace(q.conj().T @ y)))
        resid = float(np.linalg.norm(y - lam * q)) / max(abs(lam), 1e-300)
        residuals.append(resid)
        norm_y = np.linalg.norm(y)
        if norm_y == 0.0:
            raise ConvergenceError("transfer operator annihilated the iterate", residuals)
        q = y / norm_y
        if resid <= tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"power iteration did not reach tol={tol:.1e} in {max_iter} steps "
            f"(last residual {residuals[-1]:.3e})",
            residuals,
        )
    if lam <= 0:
        raise InvariantViolation(f"leading eigenvalue came out non-positive: {lam:.3e}")

    h = (q + q.conj().T) / 2.0
    if np.trace(h).real < 0:
        h = -h
    w = np.linalg.eigvalsh(h)
    h = h / max(abs(float(w[-1])), abs(float(w[0])))
    w = np.linalg.eigvalsh(h)
    min_eig = float(w[0])
    if min_eig < -1e-8:
        raise InvariantViolation(
            f"leading eigenvector is not positive to tolerance "
            f"(min eigenvalue {min_eig:.3e}); the configuration violates the "
            f"positivity conclusion"
        )

    tail = [(k, r) for k, r in enumerate(residuals[-10:]) if r > 1e-14]
    if len(tail) >= 3:
        slope, _, r2 = _loglinear_fit([k for k, _ in tail], [math.log(r) for _, r in tail])
        gap = 1.0 - math.exp(slope) if slope < 0 else 0.0
    else:
        gap, r2 = float("nan"), float("nan")
    return LeadingEigen(
        lam=lam,
        h=h,
        residual=residuals[-1],
        gap_estimate=gap,
        fit_r2=r2,
        iterations=iterations,
        min_eig_h=min_eig,
        residuals=residuals,
    )


def invariant_state(op, lam, tol=1e-13, max_iter=POWER_MAX_ITER):
    """Leading eigenvector of the adjoint, normalized to a state (surrogate
    for the invariant functional of the infinite-volume operator)."""
    dim = op.dim
    sigma = np.eye(dim, dtype=complex) / dim
    for _ in range(max_iter):
        nxt = op.apply_adjoint(sigma) / lam
        nxt = (nxt + nxt.conj().T) / 2.0
        tr = float(np.trace(nxt).real)
        if tr <= 0:
            raise InvariantViolation("adjoint iteration lost positivity of the trace")
        nxt /= tr
        delta = float(np.linalg.norm(nxt - sigma))
        sigma = nxt
        if delta <= tol:
            break
    return sigma


def theorem22_diagnostics(op, lam, h, probes, n_max=12):
    """Decay of the normalized iterates toward the invariant functional.

    For each probe Q the report carries the sequence |L_h^n(Q) - phi_h(Q) 1|
    with its log-linear fit, and for strictly positive probes the K-ratio
    sup L^n(Q) / inf L^n(Q), which should stabilize to a finite constant.
    """
    w, v = np.linalg.eigh((h + h.conj().T) / 2.0)
    if w[0] <= 0:
        raise InvariantViolation(
            f"h must be positive definite for the h-normalization (min eig {w[0]:.3e})"
        )
    h_half = (v * np.sqrt(w)) @ v.conj().T
    h_ihalf = (v / np.sqrt(w)) @ v.conj().T

    def apply_h(q):
        return h_ihalf @ op.apply(h_half @ q @ h_half) @ h_ihalf / lam

    def apply_h_adjoint(s):
        return h_half @ op.apply_adjoint(h_ihalf @ s @ h_ihalf) @ h_half / lam

    shadow = TruncatedTransferOperator(
        kind=op.kind + "_h",
        alpha=op.alpha,
        site_dim=op.site_dim,
        b=op.b,
        window=op.window,
        dim=op.dim,
        margin=op.margin,
        apply=apply_h,
        apply_adjoint=apply_h_adjoint,
    )
    sigma = invariant_state(shadow, 1.0)
    eye = np.eye(op.dim, dtype=complex)

    report = {"probes": [], "dim": op.dim, "lam": lam}
    for q in probes:
        q = np.asarray(q, dtype=complex)
        phi_val = float(np.trace(sigma @ q).real)
        decay = []
        x = q
        for _ in range(n_max):
            x = apply_h(x)
            decay.append(ok.op_norm(x - phi_val * eye))
        pts = [(n + 1, r) for n, r in enumerate(decay) if r > 1e-14]
        if len(pts) >= 3:
            slope, _, r2 = _loglinear_fit(
                [p[0] for p in pts], [math.log(p[1]) for p in pts]
            )
        else:
            slope, r2 = float("nan"), float("nan")
        entry = {
            "phi_h_value": phi_val,
            "decay": decay,
            "slope": slope,
            "r2": r2,
        }
        wq = np.linalg.eigvalsh((q + q.conj().T) / 2.0)
        if wq[0] > 0:
            ratios = []
            x = q
            for _ in range(n_max):
                x = op.apply(x)
                x = (x + x.conj().T) / 2.0
                wx = np.linalg.eigvalsh(x)
                ratios.append(float(wx[-1] / wx[0]) if wx[0] > 0 else float("inf"))
            entry["k_ratios"] = ratios
            last = ratios[-4:]
            entry["k_ratio_final"] = last[-1]
            entry["k_ratio_spread"] = (
                (max(last) - min(last)) / abs(last[-1]) if last[-1] else float("inf")
            )
        report["probes"].append(entry)
    return report


def dense_superoperator(op):
    """Materialize the full matrix of Q -> L(Q); cross-check oracle for small windows."""
    if op.dim * op.dim > ok.DIM_CAP:
        raise DomainError(
            f"dense superoperator dimension {op.dim}^2 exceeds the cap {ok.DIM_CAP}"
        )
    cols = []
    for i in range(op.dim):
        for j in range(op.dim):
            e = np.zeros((op.dim, op.dim), dtype=complex)
            e[i, j] = 1.0
            cols.append(op.apply(e).reshape(-1))
    return np.array(cols).T


def eigen_report(op, result):
    """JSON-ready summary of a leading-eigenvalue run."""
    return {
        "alpha": op.alpha,
        "lambda": result.lam,
        "log_lambda": math.log(result.lam),
        "gap_estimate": result.gap_estimate,
        "window": list(op.window),
        "margin": op.margin,
        "residual": result.residual,
    }
