"""Epsilon-lattices on boxes with Dirichlet boundary layers.

Sites are identified by their integer coordinates z (physical position x = eps*z),
so weight lookups and hashing stay exact.  A lattice holds every z with eps*z in
a closed halo box B containing the open domain box Q, partitioned into

  * interior:  eps*z in Q and the cube eps*z + [-eps, eps]^d misses the boundary of Q,
  * boundary:  the cube eps*z + [-eps, eps]^d meets the boundary of Q,
  * exterior:  eps*z outside Q and the cube misses the boundary.

Boundary sites may lie inside or outside Q; sites of Q itself ("Q^eps") are the
interior sites plus the boundary sites inside Q.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError

DEFAULT_SITE_CAP = 1_000_000

# relative slack for "touching" comparisons; dyadic eps and rational box bounds
# are exact in binary so this only papers over accumulated rounding
_REL_TOL = 1e-12


@dataclass(frozen=True)
class LatticeDomain:
    dim: int
    eps: float
    domain_box: np.ndarray  # shape (d, 2), open box Q
    halo_box: np.ndarray  # shape (d, 2), closed box B >= closure(Q)
    sites: np.ndarray  # shape (N, d) integer coordinates, lexicographic
    interior_ids: np.ndarray
    boundary_ids: np.ndarray
    exterior_ids: np.ndarray
    q_ids: np.ndarray  # sites with eps*z in Q (interior + boundary-inside-Q)
    _zmin: np.ndarray = field(repr=False, default=None)
    _strides: np.ndarray = field(repr=False, default=None)

    @property
    def n_sites(self) -> int:
        return self.sites.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self.eps * self.sites

    def site_ids(self, z: np.ndarray) -> np.ndarray:
        """Dense ids for integer coordinates z (shape (m, d)); the halo grid is
        a full tensor product so the id is pure index arithmetic."""
        z = np.atleast_2d(np.asarray(z, dtype=np.int64))
        rel = z - self._zmin
        extent = (self.sites[-1] - self._zmin) + 1
        if np.any(rel < 0) or np.any(rel >= extent):
            raise ValueError("site outside halo box")
        return rel @ self._strides

    def measure_q(self) -> float:
        """|Q|_eps = eps^d * #(Q intersect Z_eps^d)."""
        return self.eps**self.dim * len(self.q_ids)


def _as_box(box, d: int) -> np.ndarray:
    arr = np.asarray(box, dtype=float).reshape(d, 2)
    if np.any(arr[:, 0] >= arr[:, 1]):
        raise ValueError(f"degenerate box {arr.tolist()}")
    return arr


def build_lattice(d: int, eps: float, domain, halo, site_cap: int = DEFAULT_SITE_CAP) -> LatticeDomain:
    """Construct the lattice of all z with eps*z in the closed halo box, with the
    interior/boundary/exterior partition of the Dirichlet boundary layer."""
    if d not in (1, 2):
        raise ValueError(f"dimension must be 1 or 2, got {d}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    q = _as_box(domain, d)
    b = _as_box(halo, d)
    tol = _REL_TOL * max(1.0, float(np.abs(b).max()))
    if np.any(b[:, 0] > q[:, 0] + tol) or np.any(b[:, 1] < q[:, 1] - tol):
        raise ValueError("halo box must contain the closure of the domain box")

    los = np.ceil(b[:, 0] / eps - _REL_TOL).astype(np.int64)
    his = np.floor(b[:, 1] / eps + _REL_TOL).astype(np.int64)
    counts = his - los + 1
    n = int(np.prod(counts.astype(object)))
    if n > site_cap:
        raise CapacityError(f"lattice would have {n} sites, cap is {site_cap}")
    if n <= 0:
        raise ValueError("halo box contains no lattice sites")

    sites = np.array(
        list(itertools.product(*[range(lo, hi + 1) for lo, hi in zip(los, his)])),
        dtype=np.int64,
    ).reshape(n, d)

    pos = eps * sites
    # cube eps*z + [-eps, eps]^d meets closure(Q) on every axis
    meets = np.all((pos - eps <= q[:, 1] + tol) & (pos + eps >= q[:, 0] - tol), axis=1)
    # cube strictly inside the open box Q
    contained = np.all((pos - eps > q[:, 0] + tol) & (pos + eps < q[:, 1] - tol), axis=1)
    boundary = meets & ~contained
    in_q = np.all((pos > q[:, 0] + tol) & (pos < q[:, 1] - tol), axis=1)
    interior = in_q & ~boundary
    exterior = ~in_q & ~boundary

    strides = np.ones(d, dtype=np.int64)
    for i in range(d - 2, -1, -1):
        strides[i] = strides[i + 1] * counts[i + 1]

    return LatticeDomain(
        dim=d,
        eps=float(eps),
        domain_box=q,
        halo_box=b,
        sites=sites,
        interior_ids=np.flatnonzero(interior),
        boundary_ids=np.flatnonzero(boundary),
        exterior_ids=np.flatnonzero(exterior),
        q_ids=np.flatnonzero(in_q),
        _zmin=los,
        _strides=strides,
    )


def pair_distance(z1, z2, eps: float) -> float:
    """Physical Euclidean distance eps * |z1 - z2| between two integer sites."""
    diff = np.asarray(z1, dtype=np.int64) - np.asarray(z2, dtype=np.int64)
    return float(eps * np.sqrt(np.dot(diff, diff)))


def halo_tail_coefficient(lattice: LatticeDomain, field, s: float, p: float) -> float:
    """Analytic O(R^{-ps}) tail coefficient for the halo truncation.

    The global sums omitted outside a halo of radius R, for bounded u supported
    in Q, are bounded by coeff * R^{-ps} with
    coeff = 2 * mean(c) * |Q|_eps * surf(d) / (ps), where mean(c) is the
    empirical average of the weights over the lattice's Q-pairs.
    """
    from .weights import pair_weight_matrix

    d, ps = lattice.dim, p * s
    ids = lattice.q_ids
    w = pair_weight_matrix(field, lattice.sites[ids], lattice.sites[ids])
    m = len(ids)
    mean_c = float(w.sum() / (m * (m - 1))) if m > 1 else float(w.sum())
    surf = 2.0 if d == 1 else 2.0 * np.pi
    return 2.0 * mean_c * lattice.measure_q() * surf / ps
