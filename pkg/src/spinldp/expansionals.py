"""Expansionals E(Q; H), imaginary-time conjugations, and finite-volume weights.

The production backend evaluates the expansional through the closed form
E(Q; H) = exp(Q + H) exp(-H), which the iterated-integral series resums to at
finite volume.  The series backend evaluates the exact order-N truncation of
that series via the block-bidiagonal matrix-exponential construction (the
(0, k) block of exp of the (N+1)-block ladder with H on the diagonal and Q on
the superdiagonal is the k-th integral term times exp(H)); every release runs
the cross-check between the two.

The finite-volume weight elements a_n^N are assembled from two expansional
factors and one imaginary-time conjugation, with all Hamiltonian tails
truncated to distance N from the cut and to the global window [1, M].
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from . import chain_algebra as ca
from . import operator_kernel as ok
from .errors import DomainError, InvariantViolation

N_TERMS_DEFAULT = 20


def _aligned(*ops):
    """Embed LocalOperators into their common (union) window."""
    d = ops[0].site_dim
    if any(o.site_dim != d for o in ops):
        raise DomainError("operators have mismatched site dimensions")
    sites = sorted(set().union(*(o.sites for o in ops)))
    return [ok.embed(o, sites) for o in ops]


def expansional_closed(qm, hm):
    """exp(Q + H) exp(-H) for Hermitian Q, H."""
    return ok.mexp_herm(qm + hm) @ ok.mexp_herm(hm, scale=-1.0)


def expansional_series(qm, hm, n_terms):
    """Exact order-n_terms truncation of the expansional series.

    Uses the block ladder: exp of the (n_terms+1)-block upper bidiagonal matrix
    with H on the diagonal and Q above it carries the simplex-ordered integral
    terms in its top block row.
    """
    if n_terms < 1:
        raise DomainError(f"series backend needs n_terms >= 1, got {n_terms}")
    dim = qm.shape[0]
    nb = n_terms + 1
    ladder = np.kron(np.eye(nb), hm) + np.kron(np.eye(nb, k=1), qm)
    top = scipy.linalg.expm(ladder)[:dim]
    acc = np.zeros((dim, dim), dtype=complex)
    for k in range(nb):
        acc += top[:, k * dim : (k + 1) * dim]
    return acc @ ok.mexp_herm(hm, scale=-1.0)


def series_remainder_bound(qm, hm, n_terms):
    """Upper bound sum_{k>N} (e^{2|H|} |Q|)^k / k! on the truncation error."""
    m0 = np.exp(2.0 * ok.op_norm(hm)) * ok.op_norm(qm)
    term = 1.0
    for k in range(1, n_terms + 1):
        term *= m0 / k
    total = 0.0
    for k in range(n_terms + 1, n_terms + 400):
        term *= m0 / k
        total += term
        if term < 1e-300 or (total > 0 and term < 1e-18 * total):
            break
    return total


def expansional(q, h, backend="closed_form", n_terms=N_TERMS_DEFAULT):
    """E(Q; H) for Hermitian LocalOperators on a common window.

    backend="closed_form" is the production path; backend="series" returns the
    order-n_terms truncation and cross-checks it against the closed form within
    the norm-based remainder bound (disagreement beyond the bound is an error,
    not silently accepted).
    """
    q, h = _aligned(q, h)
    ok.require_hermitian(q.matrix, what="expansional Q")
    ok.require_hermitian(h.matrix, what="expansional H")
    closed = expansional_closed(q.matrix, h.matrix)
    if backend == "closed_form":
        out = closed
    elif backend == "series":
        out = expansional_series(q.matrix, h.matrix, n_terms)
        resid = ok.op_norm(out - closed)
        allowed = 10.0 * series_remainder_bound(q.matrix, h.matrix, n_terms)
        allowed += 1e-12 * (1.0 + ok.op_norm(closed))
        if resid > allowed:
            raise InvariantViolation(
                f"expansional backends disagree: |series({n_terms}) - closed| = "
                f"{resid:.3e} exceeds remainder bound {allowed:.3e}"
            )
    else:
        raise DomainError(f"unknown expansional backend {backend!r}")
    return ok.LocalOperator(out, q.sites, q.site_dim)


def imaginary_time_conjugation(q, h, s):
    """exp(sH) Q exp(-sH) for Hermitian H (imaginary-time flow at parameter s)."""
    q, h = _aligned(q, h)
    ok.require_hermitian(h.matrix, what="conjugation generator")
    w, v = ok.herm_eig(h.matrix)
    top = float(np.max(np.abs(s * w))) if w.size else 0.0
    if top > ok.EXP_NORM_CAP:
        raise DomainError(
            f"imaginary-time conjugation overflow: |s| * spectral radius = "
            f"{top:.3e} exceeds {ok.EXP_NORM_CAP}"
        )
    plus = (v * np.exp(s * w)) @ v.conj().T
    minus = (v * np.exp(-s * w)) @ v.conj().T
    return ok.LocalOperator(plus @ q.matrix @ minus, q.sites, q.site_dim)


def expansional_identities_check(q1, q2, h, probe=None):
    """Residuals of the two composition identities, both sides built independently.

    r1 = |E(Q1+Q2; H) - E(Q1; Q2+H) E(Q2; H)|
    r2 = |E(Q1; H) g_H(P) - g_{H+Q1}(P) E(Q1; H)|  with  g_X(P) = e^X P e^{-X}
    (P = probe, defaulting to Q2).  Diagnostic: returns the pair, raises nothing.
    """
    q1, q2, h = _aligned(q1, q2, h)
    probe = q2 if probe is None else _aligned(probe, q1)[0]
    sum_q = ok.LocalOperator(q1.matrix + q2.matrix, q1.sites, q1.site_dim)
    shifted_h = ok.LocalOperator(q2.matrix + h.matrix, h.sites, h.site_dim)
    lhs1 = expansional(sum_q, h).matrix
    rhs1 = expansional(q1, shifted_h).matrix @ expansional(q2, h).matrix
    r1 = ok.op_norm(lhs1 - rhs1)

    e1 = expansional(q1, h).matrix
    flow_h = imaginary_time_conjugation(probe, h, 1.0).matrix
    perturbed = ok.LocalOperator(h.matrix + q1.matrix, h.sites, h.site_dim)
    flow_hq = imaginary_time_conjugation(probe, perturbed, 1.0).matrix
    r2 = ok.op_norm(e1 @ flow_h - flow_hq @ e1)
    return r1, r2


# ---------------------------------------------------------------------------
# Finite-volume weight elements a_n^N(alpha)


def _weight_window(psi, phi, n, margin, m):
    diam = max(psi.max_diam, phi.max_diam)
    if n < 1:
        raise DomainError(f"weight element needs n >= 1, got {n}")
    if n + diam > m:
        raise DomainError(
            f"window [1, {m}] cannot hold the surface term at n={n} "
            f"(needs sites up to {n + diam})"
        )
    reach = max(margin, diam)
    return max(1, n - reach), min(m, n + reach), diam


def _weight_on_window(psi, phi, beta, alpha, n, margin, window, m):
    """Assemble a_n^N(alpha) on the given common window."""
    wlo, whi = window
    sites = tuple(range(wlo, whi + 1))
    d = psi.site_dim

    def embedded(lop):
        return ok.embed(lop, sites)

    def tail_pair(inter):
        left = ca.hamiltonian(inter, (max(1, n - margin), n))
        right = ca.hamiltonian(inter, (n + 1, min(n + margin, m)))
        out = embedded(left).matrix + embedded(right).matrix
        return ok.LocalOperator(out, sites, d)

    def scaled(lop, c):
        return ok.LocalOperator(c * lop.matrix, lop.sites, lop.site_dim)

    w_psi = embedded(ca.boundary_term(psi, n, "right", "w", (wlo, whi)))
    w_phi = embedded(ca.boundary_term(phi, n, "right", "w", (wlo, whi)))
    f_psi = expansional(scaled(w_psi, -beta / 2.0), scaled(tail_pair(psi), -beta / 2.0))
    f_phi = expansional(scaled(w_phi, alpha / 2.0), scaled(tail_pair(phi), alpha / 2.0))
    conj_gen = embedded(ca.hamiltonian(phi, (max(1, n - margin), min(n + margin, m))))
    lead = imaginary_time_conjugation(f_psi, conj_gen, alpha / 2.0)
    return ok.LocalOperator(lead.matrix @ f_phi.matrix, sites, d)


def kms_weight_element(psi, phi, beta, alpha, n, margin, m, with_decay=True):
    """Finite-volume weight a_n^N(alpha) with norm and locality-decay diagnostics.

    Returns (operator, diagnostics) where diagnostics carries the spectral norm,
    the inverse norm (error with the condition number if singular to tolerance),
    and the decay table [(N, |a_n^{N+1} - a_n^N|)] for N = 1..margin-1 computed
    on the common window of the largest margin.
    """
    wlo, whi, _ = _weight_window(psi, phi, n, margin, m)
    a = _weight_on_window(psi, phi, beta, alpha, n, margin, (wlo, whi), m)
    svals = np.linalg.svd(a.matrix, compute_uv=False)
    smax, smin = float(svals[0]), float(svals[-1])
    if smin <= 1e-13 * smax:
        raise DomainError(
            f"weight element singular to tolerance: condition number "
            f"{smax / max(smin, 1e-300):.3e}"
        )
    diag = {"norm": smax, "inverse_norm": 1.0 / smin}
    if with_decay and margin >= 2:
        diag["decay_table"] = kms_weight_decay_table(
            psi, phi, beta, alpha, n, list(range(1, margin + 1)), m
        )
    return a, diag


def kms_weight_decay_table(psi, phi, beta, alpha, n, margins, m):
    """[(N, |a_n^{N+1} - a_n^N|)] over consecutive margins, on a common window."""
    margins = sorted(set(int(v) for v in margins))
    if len(margins) < 2:
        raise DomainError("decay table needs at least two margins")
    window = _weight_window(psi, phi, n, margins[-1], m)[:2]
    ops = {
        nn: _weight_on_window(psi, phi, beta, alpha, n, nn, window, m)
        for nn in margins
    }
    return [
        (a, ok.op_norm(ops[b].matrix - ops[a].matrix))
        for a, b in zip(margins, margins[1:])
    ]
