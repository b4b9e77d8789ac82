"""Dense complex-matrix substrate for operators on finite windows of a spin chain.

Site ordering convention (fixed globally): tensor factors are arranged in
ascending site index, and the smallest site is the most significant factor,
i.e. an operator on sites (1, 2, 3) is stored as  A1 kron A2 kron A3.
Operators may live on non-contiguous site sets (interaction terms with gaps);
the contiguous case is the common one and `support` reports the spanned
interval.

Everything here is a pure function of immutable values; results are freshly
allocated arrays, safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import CapExceededError, DomainError

# Hard cap on the dense window dimension d**n.  Exact spectral calculus is the
# verification backbone; beyond this size dense storage is refused outright.
DIM_CAP = 2 ** 14

# Relative Hermiticity tolerance, sized for accumulated eigensolver error at
# dimensions up to the cap.
TAU_HERM = 1e-9

# exp() of a Hermitian matrix overflows double precision near e**710.
EXP_NORM_CAP = 700.0


def check_cap(site_dim, n_sites, extra_factor=1):
    """Refuse windows whose dense dimension would exceed DIM_CAP."""
    dim = (site_dim ** n_sites) * extra_factor
    if dim > DIM_CAP:
        raise CapExceededError(
            f"window dimension {site_dim}^{n_sites}"
            + (f" * {extra_factor}" if extra_factor != 1 else "")
            + f" = {dim} exceeds the hard cap {DIM_CAP}"
        )
    return dim


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """A dense complex matrix together with the lattice sites it acts on.

    matrix   -- (D, D) complex array with D = site_dim**len(sites)
    sites    -- strictly increasing tuple of integer sites
    site_dim -- local Hilbert space dimension d >= 2 (d = 1 only for the
                empty-window zero operator)
    """

    matrix: np.ndarray
    sites: tuple
    site_dim: int

    def __post_init__(self):
        sites = tuple(int(s) for s in self.sites)
        object.__setattr__(self, "sites", sites)
        if any(b <= a for a, b in zip(sites, sites[1:])):
            raise DomainError(f"sites must be strictly increasing, got {sites}")
        if self.site_dim < 2 and sites:
            raise DomainError(f"site_dim must be >= 2, got {self.site_dim}")
        dim = check_cap(self.site_dim, len(sites)) if sites else 1
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (dim, dim):
            raise DomainError(
                f"matrix shape {m.shape} does not match d^|sites| = {dim} "
                f"for sites {sites}"
            )
        object.__setattr__(self, "matrix", m)

    @property
    def support(self):
        """Spanned interval (min_site, max_site); None for the empty window."""
        return (self.sites[0], self.sites[-1]) if self.sites else None

    @property
    def dim(self):
        return self.matrix.shape[0]

    def is_contiguous(self):
        return not self.sites or len(self.sites) == self.sites[-1] - self.sites[0] + 1


def identity(sites, site_dim):
    sites = _as_sites(sites)
    dim = site_dim ** len(sites) if sites else 1
    check_cap(site_dim, len(sites))
    return LocalOperator(np.eye(dim, dtype=complex), sites, site_dim)


def zero(sites, site_dim):
    sites = _as_sites(sites)
    dim = site_dim ** len(sites) if sites else 1
    return LocalOperator(np.zeros((dim, dim), dtype=complex), sites, site_dim)


def _as_sites(spec):
    """Accept an (lo, hi) interval or an explicit iterable of sites."""
    if isinstance(spec, tuple) and len(spec) == 2 and all(
        isinstance(v, (int, np.integer)) for v in spec
    ):
        lo, hi = spec
        if hi < lo:
            return ()
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(sorted(int(s) for s in spec))


def op_norm(matrix):
    """Spectral norm."""
    if matrix.size == 1:
        return abs(complex(matrix.reshape(())))
    return float(np.linalg.norm(matrix, 2))


def embed(op, window):
    """Tensor `op` with identities so the result acts on every site of `window`.

    `window` may be an (lo, hi) interval or an explicit site collection; it must
    contain op.sites.  The result's factors are arranged in site order.
    """
    target = _as_sites(window)
    if not set(op.sites) <= set(target):
        raise DomainError(
            f"support {op.sites} not contained in window {target}"
        )
    if target == op.sites:
        return LocalOperator(op.matrix.copy(), target, op.site_dim)
    d = op.site_dim
    check_cap(d, len(target))
    pad = [s for s in target if s not in set(op.sites)]
    k, p = len(op.sites), len(pad)
    big = np.kron(op.matrix, np.eye(d ** p, dtype=complex))
    # big's factor order is op.sites followed by pad; permute into site order.
    source = list(op.sites) + pad
    perm = [source.index(s) for s in target]
    n = k + p
    tensor = big.reshape([d] * (2 * n))
    tensor = tensor.transpose(perm + [n + q for q in perm])
    dim = d ** n
    return LocalOperator(tensor.reshape(dim, dim), target, d)


def partial_trace(op, traced_sites):
    """Trace out `traced_sites`; the result acts on the complementary sites.

    The trace of the result equals the trace of the input.
    """
    traced = set(_as_sites(traced_sites))
    if not traced <= set(op.sites):
        raise DomainError(
            f"traced sites {sorted(traced)} not contained in support {op.sites}"
        )
    keep = tuple(s for s in op.sites if s not in traced)
    if not traced:
        return LocalOperator(op.matrix.copy(), keep, op.site_dim)
    d = op.site_dim
    n = len(op.sites)
    tensor = op.matrix.reshape([d] * (2 * n))
    # Trace highest axes first so earlier positions stay valid.
    positions = sorted((op.sites.index(s) for s in traced), reverse=True)
    for pos in positions:
        tensor = np.trace(tensor, axis1=pos, axis2=pos + tensor.ndim // 2)
    dim = d ** len(keep)
    return LocalOperator(tensor.reshape(dim, dim), keep, op.site_dim)


def require_hermitian(matrix, tau=TAU_HERM, what="operator"):
    """Raise DomainError (reporting the asymmetry norm) unless matrix is Hermitian."""
    scale = np.linalg.norm(matrix)
    asym = np.linalg.norm(matrix - matrix.conj().T)
    if asym > tau * max(scale, 1e-300):
        raise DomainError(
            f"{what} is not Hermitian: asymmetry norm {asym:.3e} "
            f"exceeds {tau:.1e} * norm ({scale:.3e})"
        )


def herm_eig(matrix):
    """eigh with an exact fast path for diagonal matrices.

    Sums of commuting diagonal terms (sigma-z style Hamiltonians) produce
    exactly diagonal matrices; their eigen-decomposition is a sort plus a
    column permutation, which avoids an O(n^3) dense solve at large windows.
    """
    diag = np.diagonal(matrix)
    if np.count_nonzero(matrix - np.diag(diag)) == 0:
        order = np.argsort(diag.real, kind="stable")
        w = diag.real[order].astype(float)
        v = np.eye(matrix.shape[0], dtype=complex)[:, order]
        return w, v
    return np.linalg.eigh(matrix)


def herm_spectral(op, tau=TAU_HERM):
    """Eigen-decomposition of a Hermitian LocalOperator.

    Returns (w, V) with real ascending eigenvalues w and unitary V.
    """
    require_hermitian(op.matrix, tau)
    return herm_eig(op.matrix)


def spectral_projection(op, interval, tau=TAU_HERM):
    """Projection onto eigenvalues of `op` lying in the closed real interval.

    interval = (lo, hi); either bound may be +-inf.  Projections over a
    partition of the line sum to the identity.
    """
    lo, hi = float(interval[0]), float(interval[1])
    w, v = herm_spectral(op, tau)
    mask = (w >= lo) & (w <= hi)
    cols = v[:, mask]
    return LocalOperator(cols @ cols.conj().T, op.sites, op.site_dim)


def mexp_herm(matrix, tau=TAU_HERM, scale=1.0):
    """exp(scale * H) for Hermitian H via eigen-decomposition."""
    require_hermitian(matrix, tau, what="mat_exp argument")
    w, v = herm_eig(matrix)
    top = float(np.max(np.abs(scale * w))) if w.size else 0.0
    if top > EXP_NORM_CAP:
        raise DomainError(
            f"matrix exponential overflow: spectral range {top:.3e} "
            f"exceeds {EXP_NORM_CAP}"
        )
    return (v * np.exp(scale * w)) @ v.conj().T


def mat_exp(op, tau=TAU_HERM):
    """Matrix exponential of a LocalOperator.

    Hermitian inputs go through the eigen-decomposition; general complex
    matrices use scaling-and-squaring (scipy.linalg.expm).
    """
    m = op.matrix
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix exponential of non-finite entries")
    scale = np.linalg.norm(m)
    asym = np.linalg.norm(m - m.conj().T)
    if asym <= tau * max(scale, 1e-300):
        out = mexp_herm(m, tau)
    else:
        nrm = op_norm(m)
        if nrm > EXP_NORM_CAP:
            raise DomainError(
                f"matrix exponential overflow: norm {nrm:.3e} exceeds {EXP_NORM_CAP}"
            )
        out = scipy.linalg.expm(m)
    return LocalOperator(out, op.sites, op.site_dim)


def permute_sites(op, mapping):
    """Relabel sites by `mapping` (dict old -> new), permuting tensor factors.

    The relabelled operator represents the same abstract element transported by
    the induced lattice permutation.
    """
    new_sites = [mapping[s] for s in op.sites]
    if len(set(new_sites)) != len(new_sites):
        raise DomainError("site mapping is not injective on the support")
    order = np.argsort(new_sites, kind="stable")
    target = tuple(new_sites[i] for i in order)
    if tuple(order) == tuple(range(len(order))):
        return LocalOperator(op.matrix.copy(), target, op.site_dim)
    d = op.site_dim
    n = len(op.sites)
    tensor = op.matrix.reshape([d] * (2 * n))
    perm = list(order)
    tensor = tensor.transpose(perm + [n + q for q in perm])
    return LocalOperator(tensor.reshape(op.dim, op.dim), target, op.site_dim)


def shift(op, j):
    """Lattice translation: relabel every site s -> s + j (matrix unchanged)."""
    return LocalOperator(op.matrix.copy(), tuple(s + j for s in op.sites), op.site_dim)


def reflect(op):
    """Global site reflection s -> -s (reverses the factor order)."""
    return permute_sites(op, {s: -s for s in op.sites})
