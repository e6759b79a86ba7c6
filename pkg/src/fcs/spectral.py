"""Discretized embedding of the zero-tail curve space into weighted L^2.

The subspace basis has one curve per grid cell: its weak derivative is the
indicator of that cell and its tail value is zero, so the basis curves are
down-ramps  b_i(x) = -|cell_i intersect [x, x_max]|  and the span is exactly
the set of grid curves with h(inf) = 0.  The identity map restricted to that
span, viewed between the two inner products, has a singular system computed
from the generalized symmetric-definite eigenproblem of the Gram pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .curves import ForwardCurve, Grid, WeightParams, cell_exp_integrals, gauss_cells
from .errors import BasisMismatch, EigenFailure, RankTooLarge, SingularGram

__all__ = [
    "BasisSet",
    "GramPair",
    "SingularSystem",
    "FiniteRankOperator",
    "assemble_gram",
    "singular_system",
    "make_tn",
    "make_sn",
    "perturb_functionals",
    "operator_defect",
]

SV_FLOOR = 1e-13  # below this the paired target vectors amplify rounding noise


@dataclass(frozen=True, eq=False)
class BasisSet:
    """Cell-indicator-derivative basis of the zero-tail subspace on a grid."""

    grid: Grid
    params: WeightParams

    @property
    def size(self) -> int:
        return self.grid.n_cells

    def curve(self, i: int) -> ForwardCurve:
        d = np.zeros(self.grid.n_cells)
        d[i] = 1.0
        return ForwardCurve.from_dcoef(self.grid, d, 0.0)

    @property
    def curves(self) -> list[ForwardCurve]:
        return [self.curve(i) for i in range(self.size)]

    def values_at(self, x: np.ndarray) -> np.ndarray:
        """Matrix B[i, q] = b_i(x_q) of basis ramps at arbitrary points."""
        w = self.grid.widths
        return -np.minimum(w[:, None], np.maximum(0.0, self.grid.right[:, None] - x[None, :]))


@dataclass(frozen=True, eq=False)
class GramPair:
    """Gram matrices of the basis in the two inner products.

    gram_h[i,j] = b_i(0) b_j(0) + int b_i' b_j' e^{gamma x}  (diagonal plus a
    rank-one block, assembled in closed form); gram_l[i,j] = int b_i b_j
    e^{beta x} by per-cell Gauss quadrature.
    """

    basis: BasisSet
    gram_h: np.ndarray
    gram_l: np.ndarray
    h_diag: np.ndarray  # per-cell e^{gamma x} integrals (gram_h = diag + v v^T)
    h_rank1: np.ndarray  # v_i = -b_i(0) = cell width

    def apply_gram_h(self, c: np.ndarray) -> np.ndarray:
        """gram_h @ c in O(n) per column using the diag + rank-one structure."""
        c = np.asarray(c, dtype=float)
        if c.ndim == 1:
            return self.h_diag * c + self.h_rank1 * float(self.h_rank1 @ c)
        return self.h_diag[:, None] * c + np.outer(self.h_rank1, self.h_rank1 @ c)


def assemble_gram(basis: BasisSet) -> GramPair:
    grid, w = basis.grid, basis.params
    E = cell_exp_integrals(grid, w.gamma)
    v = grid.widths  # b_i(0) = -width_i, so the point term is +w_i w_j
    gram_h = np.diag(E) + np.outer(v, v)

    x, qw = gauss_cells(grid)
    B = basis.values_at(x)
    gram_l = (B * (qw * np.exp(w.beta * x))) @ B.T
    gram_l = 0.5 * (gram_l + gram_l.T)

    pair = GramPair(basis, gram_h, gram_l, E, v)
    _check_positive_definite(pair)
    return pair


def _equilibrated(pair: GramPair) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Jacobi-scale both Grams; gram_h spans ~e^{gamma x_max} otherwise."""
    diag = np.diag(pair.gram_h)
    if np.any(diag <= 0.0) or not np.all(np.isfinite(diag)):
        raise SingularGram("gram_h has a non-positive diagonal")
    s = 1.0 / np.sqrt(diag)
    gh = pair.gram_h * np.outer(s, s)
    gl = pair.gram_l * np.outer(s, s)
    return gh, gl, s


def _check_positive_definite(pair: GramPair) -> None:
    gh, _, _ = _equilibrated(pair)
    try:
        scipy.linalg.cholesky(gh, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise SingularGram("gram_h is not positive definite") from exc


@dataclass(frozen=True, eq=False)
class SingularSystem:
    """Singular triples (s_k, e_k, f_k) of the discretized identity map.

    ``e_coefs``/``f_coefs`` hold one mode per row, as coordinates in the cell
    basis; the e_k are orthonormal in the curve-space inner product and
    f_k = e_k / s_k are orthonormal in weighted L^2.
    """

    gram: GramPair
    s: np.ndarray
    e_coefs: np.ndarray
    f_coefs: np.ndarray

    @property
    def basis(self) -> BasisSet:
        return self.gram.basis

    @property
    def n_modes(self) -> int:
        return self.s.size

    def defect_of_tn(self, n: int) -> float:
        """Operator-norm distance of the rank-n truncation from the identity."""
        if n < 0 or n > self.n_modes:
            raise RankTooLarge(f"rank {n} outside [0, {self.n_modes}]")
        return float(self.s[n]) if n < self.n_modes else 0.0

    def mode_curve(self, k: int) -> ForwardCurve:
        return ForwardCurve.from_dcoef(self.basis.grid, self.e_coefs[k], 0.0)

    def hgamma_coords(self, dcoefs: np.ndarray) -> np.ndarray:
        """Coordinates <h, e_k> of zero-tail grid curves, one curve per row."""
        c = np.atleast_2d(np.asarray(dcoefs, dtype=float))
        out = (self.gram.apply_gram_h(c.T)).T @ self.e_coefs.T
        return out if np.asarray(dcoefs).ndim > 1 else out[0]

    def l2beta_norm_of_coords(self, ehat: np.ndarray) -> np.ndarray:
        """Weighted-L^2 norm of an element given by mode coordinates."""
        ehat = np.asarray(ehat, dtype=float)
        return np.sqrt(np.sum((ehat * self.s) ** 2, axis=-1))


def singular_system(pair: GramPair) -> SingularSystem:
    """Solve gram_l v = mu gram_h v; singular values are sqrt(mu), decreasing.

    The pencil is congruence-invariant, so both matrices are Jacobi-scaled
    first: raw gram_h entries span ~e^{gamma x_max} and would otherwise ruin
    the Cholesky reduction inside the symmetric-definite solver.
    """
    gh, gl, scale = _equilibrated(pair)
    try:
        mu, vecs = scipy.linalg.eigh(gl, gh)
    except scipy.linalg.LinAlgError as exc:
        if "positive definite" in str(exc).lower():
            raise SingularGram("gram_h is not positive definite") from exc
        raise EigenFailure(str(exc)) from exc

    order = np.argsort(mu)[::-1]
    mu = np.clip(mu[order], 0.0, None)
    vecs = (vecs[:, order] * scale[:, None]).T  # rows: modes in basis coords

    keep = np.sqrt(mu) >= SV_FLOOR
    mu, vecs = mu[keep], vecs[keep]
    s = np.sqrt(mu)

    # exact renormalization in gram_h, then a deterministic sign convention
    hn = np.sqrt(np.einsum("ki,ki->k", vecs, pair.apply_gram_h(vecs.T).T))
    vecs = vecs / hn[:, None]
    for k in range(vecs.shape[0]):
        row = vecs[k]
        nz = np.flatnonzero(np.abs(row) > 1e-12 * np.abs(row).max())
        if nz.size and row[nz[0]] < 0.0:
            vecs[k] = -row
    f = vecs / s[:, None]
    return SingularSystem(pair, s, vecs, f)


@dataclass(frozen=True, eq=False)
class FiniteRankOperator:
    """Rank-n map h -> sum_k s_k <h, zeta_k> f_k on the discretized space.

    ``zeta_e`` holds the analyzing functionals as coordinates in the singular
    basis (identity rows for the exact truncation); ``eps`` is the norm budget
    the perturbed functionals were built under (0 for the exact truncation).
    """

    system: SingularSystem
    rank: int
    zeta_e: np.ndarray
    eps: float = 0.0

    @property
    def weights(self) -> np.ndarray:
        return self.system.s[: self.rank]

    def functional_curve(self, k: int) -> ForwardCurve:
        coefs = self.zeta_e[k] @ self.system.e_coefs
        return ForwardCurve.from_dcoef(self.system.basis.grid, coefs, 0.0)

    def target_curve(self, k: int) -> ForwardCurve:
        return ForwardCurve.from_dcoef(self.system.basis.grid, self.system.f_coefs[k], 0.0)

    def apply_coords(self, ehat: np.ndarray) -> np.ndarray:
        """Mode coordinates of the image, given mode coordinates of the input."""
        ehat = np.asarray(ehat, dtype=float)
        a = ehat @ self.zeta_e.T  # <h, zeta_k>
        out = np.zeros_like(ehat)
        out[..., : self.rank] = a
        return out

    def apply(self, h: ForwardCurve) -> ForwardCurve:
        """Image of a zero-tail grid curve, reconstructed as a grid curve."""
        sys = self.system
        if h.grid != sys.basis.grid:
            raise BasisMismatch("curve grid differs from the operator's basis grid")
        if not h.in_h0:
            raise BasisMismatch("operator acts on the zero-tail subspace; split first")
        ehat = sys.hgamma_coords(h.dcoef)
        a = self.apply_coords(ehat)[: self.rank]
        dcoef = (a * sys.s[: self.rank]) @ sys.f_coefs[: self.rank]
        return ForwardCurve.from_dcoef(h.grid, dcoef, 0.0)


def make_tn(sys: SingularSystem, n: int) -> FiniteRankOperator:
    """Exact rank-n truncation: analyzing functionals are the e_k themselves."""
    if n < 0 or n > sys.n_modes:
        raise RankTooLarge(f"rank {n} exceeds the {sys.n_modes} retained modes")
    return FiniteRankOperator(sys, n, np.eye(n, sys.n_modes), 0.0)


def perturb_functionals(
    sys: SingularSystem, n: int, eps: float, seed: int
) -> FiniteRankOperator:
    """Rank-n operator with functionals nudged off the e_k under a norm budget.

    Each zeta_k = e_k + p_k where the perturbation is a smooth random profile
    (a few Gaussian bumps, sampled onto the derivative cells) scaled to half
    the budget eps / (2^k s_k), strictly inside the geometric-series bound.
    Deterministic per seed.
    """
    if n < 0 or n > sys.n_modes:
        raise RankTooLarge(f"rank {n} exceeds the {sys.n_modes} retained modes")
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    rng = np.random.default_rng(seed)
    grid = sys.basis.grid
    mid = 0.5 * (grid.left + grid.right)
    E, v = sys.gram.h_diag, sys.gram.h_rank1

    zeta_e = np.eye(n, sys.n_modes)
    for k in range(n):
        prof = np.zeros(grid.n_cells)
        for _ in range(3):
            center = rng.uniform(0.0, 0.5 * grid.x_max)
            width = rng.uniform(0.2, 1.0) * max(grid.x_max / 16.0, 1e-3)
            prof += rng.standard_normal() * np.exp(-(((mid - center) / width) ** 2))
        hnorm2 = float(prof @ (prof * E)) + float(v @ prof) ** 2
        if hnorm2 <= 0.0:
            continue
        budget = eps / (2.0 ** (k + 1) * sys.s[k])
        coefs = prof * (0.5 * budget / np.sqrt(hnorm2))
        # express the basis-coordinate perturbation in mode coordinates
        zeta_e[k] += sys.hgamma_coords(coefs)
    return FiniteRankOperator(sys, n, zeta_e, float(eps))


make_sn = perturb_functionals


def operator_defect(sys: SingularSystem, op: FiniteRankOperator) -> float:
    """Operator norm of (op - identity) over the discretized subspace.

    In mode coordinates the defect matrix is diag(s) (Z - I) with Z the
    zero-padded functional matrix; the norm is its largest singular value.
    For the exact truncation this returns s_{n+1} (0 at full rank).
    """
    if op.system is not sys and op.system.basis.grid != sys.basis.grid:
        raise BasisMismatch("operator was built from a different singular system")
    K = sys.n_modes
    Z = np.zeros((K, K))
    Z[: op.rank] = op.zeta_e
    M = sys.s[:, None] * (Z - np.eye(K))
    return float(np.linalg.svd(M, compute_uv=False)[0])
