"""Finite-range translation-invariant interactions and their local Hamiltonians.

An interaction is stored through its generator terms: each generator is a shape
X (finite set of integer offsets with min(X) = 0) plus a Hermitian matrix on
those sites; the term on X + j is the shifted copy of the generator.  The range
r = 1 + max diam(X), so every term has diameter < r (the off-by-one between
"diam > r" and "range less than r" in the two source conventions is resolved
this way throughout).

Also provides the surface sums at a cut (the W and H-hat boundary terms, left
versions via global site reflection) and the variation seminorms var_j /
theta-norms measuring dependence on sites >= j.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import operator_kernel as ok
from .errors import DomainError

VAR_SWAP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Interaction:
    """Translation-invariant finite-range interaction given by generator terms."""

    site_dim: int
    generators: tuple  # tuple of (shape: tuple of offsets, matrix: ndarray)

    def __post_init__(self):
        gens = []
        for shape, matrix in self.generators:
            shape = tuple(sorted(int(x) for x in shape))
            if len(set(shape)) != len(shape):
                raise DomainError(f"generator shape {shape} has duplicate offsets")
            if not shape or shape[0] != 0:
                raise DomainError(
                    f"generator shape {shape} is not canonical (min offset must be 0)"
                )
            m = np.asarray(matrix, dtype=complex)
            dim = self.site_dim ** len(shape)
            if m.shape != (dim, dim):
                raise DomainError(
                    f"generator matrix shape {m.shape} does not match "
                    f"d^|X| = {dim} for shape {shape}"
                )
            ok.require_hermitian(m, what=f"generator term on shape {shape}")
            gens.append((shape, m))
        object.__setattr__(self, "generators", tuple(gens))

    @property
    def max_diam(self):
        return max((s[-1] for s, _ in self.generators), default=0)

    @property
    def range(self):
        """r such that every term has diameter < r."""
        return 1 + self.max_diam

    def term(self, shape, j):
        """The interaction term on the translate shape + j, as a LocalOperator."""
        for s, m in self.generators:
            if s == shape:
                return ok.LocalOperator(m.copy(), tuple(x + j for x in s), self.site_dim)
        raise DomainError(f"no generator with shape {shape}")


def one_site(matrix, site_dim=None):
    m = np.asarray(matrix, dtype=complex)
    d = site_dim if site_dim is not None else m.shape[0]
    return Interaction(d, (((0,), m),))


def translates_in_interval(phi, lo, hi):
    """All translates (j, shape, matrix) with shape + j inside [lo, hi]."""
    out = []
    if hi < lo:
        return out
    for shape, m in phi.generators:
        for j in range(lo, hi - shape[-1] + 1):
            out.append((j, shape, m))
    return out


def translates_containing(phi, site):
    """All translates (j, shape, matrix) whose support contains `site`."""
    out = []
    for shape, m in phi.generators:
        for x in shape:
            out.append((site - x, shape, m))
    return out


def hamiltonian(phi, window):
    """H(window) = sum of all interaction terms supported inside the interval."""
    lo, hi = int(window[0]), int(window[1])
    if hi < lo:
        return ok.zero((), phi.site_dim)
    n = hi - lo + 1
    dim = ok.check_cap(phi.site_dim, n)
    total = np.zeros((dim, dim), dtype=complex)
    for j, shape, m in translates_in_interval(phi, lo, hi):
        term = ok.LocalOperator(m, tuple(x + j for x in shape), phi.site_dim)
        total += ok.embed(term, (lo, hi)).matrix
    return ok.LocalOperator(total, tuple(range(lo, hi + 1)), phi.site_dim)


def interaction_norm(phi):
    """sum over sets X containing 0 of |X|^-1 * operator norm of the term on X."""
    total = 0.0
    for j, shape, m in translates_containing(phi, 0):
        total += ok.op_norm(m) / len(shape)
    return total


def reflect_interaction(phi):
    """The site-reflected interaction (generator terms reversed in site order)."""
    gens = []
    for shape, m in phi.generators:
        lop = ok.LocalOperator(m, shape, phi.site_dim)
        refl = ok.shift(ok.reflect(lop), shape[-1])
        gens.append((refl.sites, refl.matrix))
    return Interaction(phi.site_dim, tuple(gens))


def boundary_term(phi, n, side="right", kind="w", window=None):
    """Surface sums at a cut, per the right-chain definitions.

    kind="w":   W^r(n)  = sum of terms inside [1, inf) straddling site n
                (not inside [1, n-1] and not inside [n+1, inf)).
    kind="hat": Hhat^r(n) = sum of terms inside [1, inf) touching [1, n].
    side="left" mirrors the definitions on (-inf, -1] via global reflection
    (one code path).  `window` is the truncation interval the result is
    embedded into; it must reach distance >= max diameter beyond the cut.
    """
    if n < 1:
        raise DomainError(f"cut index n must be >= 1, got {n}")
    if side == "left":
        wlo, whi = window
        refl = boundary_term(
            reflect_interaction(phi), n, side="right", kind=kind, window=(-whi, -wlo)
        )
        return ok.permute_sites(refl, {s: -s for s in refl.sites})
    if side != "right":
        raise DomainError(f"side must be 'right' or 'left', got {side!r}")

    diam = phi.max_diam
    wlo, whi = int(window[0]), int(window[1])
    need_hi = n + diam
    need_lo = 1 if kind == "hat" else max(1, n - diam)
    if wlo > need_lo or whi < need_hi:
        raise DomainError(
            f"window [{wlo}, {whi}] too small for {kind}-term at n={n}: "
            f"requires [{need_lo}, {need_hi}] (margin {diam} beyond the cut)"
        )

    terms = []
    for shape, m in phi.generators:
        for j in range(1, n + 1):
            top = j + shape[-1]
            if kind == "w":
                if top < n:  # inside [1, n-1]
                    continue
            elif kind != "hat":
                raise DomainError(f"kind must be 'w' or 'hat', got {kind!r}")
            terms.append((j, shape, m))

    total = ok.zero((wlo, whi), phi.site_dim)
    acc = total.matrix
    for j, shape, m in terms:
        term = ok.LocalOperator(m, tuple(x + j for x in shape), phi.site_dim)
        acc = acc + ok.embed(term, (wlo, whi)).matrix
    return ok.LocalOperator(acc, total.sites, phi.site_dim)


def _doubled_swap(q, j):
    """Theta_j(Q x 1) in the doubled algebra on window | window."""
    d = q.site_dim
    n = len(q.sites)
    ok.check_cap(d, 2 * n)
    big = np.kron(q.matrix, np.eye(d ** n, dtype=complex))
    tensor = big.reshape([d] * (4 * n))
    perm = list(range(2 * n))
    for k in range(j, n):  # swap copy-A site k with copy-B site k
        perm[k], perm[n + k] = perm[n + k], perm[k]
    full = perm + [2 * n + p for p in perm]
    swapped = tensor.transpose(full).reshape(big.shape)
    return big, swapped


def variation_seminorm(q, j):
    """var_j(Q) = norm of Theta_j(Q x 1) - Q x 1, doubled-algebra construction.

    Q must live on a window starting at site 0; var_j vanishes when Q is
    supported inside [0, j-1].
    """
    if j < 1:
        raise DomainError(f"var_j needs j >= 1, got {j}")
    if not q.sites or q.sites[0] != 0 or not q.is_contiguous():
        raise DomainError(f"variation seminorm expects a window [0, m], got {q.sites}")
    m = q.sites[-1]
    if j > m:
        return 0.0
    big, swapped = _doubled_swap(q, j)
    return ok.op_norm(swapped - big)


def theta_norm(q, theta):
    """max over 1 <= j <= m+1 of var_j(Q) / theta^j."""
    if not (0.0 < theta < 1.0):
        raise DomainError(f"theta must lie in (0, 1), got {theta}")
    m = q.sites[-1]
    best = 0.0
    for j in range(1, m + 2):
        vj = variation_seminorm(q, j)
        best = max(best, vj / theta ** j)
    return best


# ---------------------------------------------------------------------------
# Interaction definition files: JSON with d and the generator list; matrices
# are row-major with entries given as a real number or an [re, im] pair.


def _parse_entry(v, where):
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(
        isinstance(x, (int, float)) for x in v
    ):
        return complex(v[0], v[1])
    raise DomainError(f"{where}: matrix entry {v!r} is not a number or [re, im] pair")


def _parse_matrix(rows, where):
    if not isinstance(rows, list) or not rows:
        raise DomainError(f"{where}: matrix must be a non-empty list of rows")
    parsed = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != len(rows):
            raise DomainError(f"{where}: row {i} does not make the matrix square")
        parsed.append([_parse_entry(v, where) for v in row])
    return np.array(parsed, dtype=complex)


def load_interaction(path):
    """Parse an interaction definition file with strict validation."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DomainError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict) or "site_dim" not in doc or "generators" not in doc:
        raise DomainError(f"{path}: expected keys 'site_dim' and 'generators'")
    d = doc["site_dim"]
    if not isinstance(d, int) or d < 2:
        raise DomainError(f"{path}: site_dim must be an integer >= 2, got {d!r}")
    gens = []
    for i, g in enumerate(doc["generators"]):
        where = f"{path}: generator {i}"
        if not isinstance(g, dict) or "shape" not in g or "matrix" not in g:
            raise DomainError(f"{where}: expected keys 'shape' and 'matrix'")
        shape = g["shape"]
        if (
            not isinstance(shape, list)
            or not shape
            or any(not isinstance(x, int) for x in shape)
        ):
            raise DomainError(f"{where}: shape must be a non-empty list of integers")
        m = _parse_matrix(g["matrix"], where)
        gens.append((tuple(shape), m))
    # Interaction.__post_init__ enforces canonical shapes and Hermiticity.
    return Interaction(d, tuple(gens))


def save_interaction(phi, path):
    doc = {
        "site_dim": phi.site_dim,
        "generators": [
            {
                "shape": list(shape),
                "matrix": [[[v.real, v.imag] for v in row] for row in m],
            }
            for shape, m in phi.generators
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
