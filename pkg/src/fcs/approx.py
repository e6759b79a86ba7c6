"""Finite-rank projections of simulated paths and the error-bound audits.

Everything here runs in mode coordinates: a path state r_t is split into its
zero-tail part plus the long-end level, the zero-tail part gets coordinates
c_k = <r, e_k> in the singular basis, and then the rank-n image, the exact
defect and every bound reduce to cheap algebra on (s_k, c_k).  The scalar
slot of the product space is reproduced exactly by construction, so it drops
out of every error norm.
"""

from __future__ import annotations

import math
import weakref
import zlib
from dataclasses import dataclass

import numpy as np

from .curves import ForwardCurve
from .errors import BasisMismatch, EmptyEnsemble, MissingIncrements
from .hjmm import PathEnsemble, SimConfig, VolSpec, _drift_values, _shift_gather, _vol_values
from .spectral import FiniteRankOperator, SingularSystem

__all__ = [
    "ProjectedPath",
    "ErrorReport",
    "MeanSquareReport",
    "project_path",
    "audit_norm_conv",
    "audit_est_epsilon_n",
    "audit_uni_local",
    "ito_approximant",
    "mean_square_error",
    "increments_checksum",
]

ABS_SLACK = 1e-8  # additive slack granted to every bound (quadrature floor)


@dataclass(frozen=True, eq=False)
class ProjectedPath:
    """Coefficient trajectory in span(f_1..f_n) for one path."""

    operator: FiniteRankOperator
    path: int
    times: np.ndarray
    coefs: np.ndarray  # (steps+1, rank)

    def element(self, step: int) -> ForwardCurve:
        """Reconstruct the projected state at one step as a grid curve."""
        sys = self.operator.system
        n = self.operator.rank
        d = self.coefs[step] @ sys.f_coefs[:n]
        return ForwardCurve.from_dcoef(sys.basis.grid, d, 0.0)


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Per-step bound audit: lhs must stay below rhs plus the additive slack."""

    label: str
    t: np.ndarray
    path: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def margins(self) -> np.ndarray:
        return self.lhs / (self.rhs + ABS_SLACK)

    @property
    def worst_margin(self) -> float:
        return float(np.max(self.margins)) if self.lhs.size else 0.0

    @property
    def passed(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs + ABS_SLACK))

    def rows(self) -> list[tuple[float, int, float, float, float]]:
        m = self.margins
        return [
            (float(self.t[i]), int(self.path[i]), float(self.lhs[i]), float(self.rhs[i]), float(m[i]))
            for i in range(self.lhs.size)
        ]


@dataclass(frozen=True)
class MeanSquareReport:
    """Monte Carlo estimate of E[sup_t error^2]^(1/2) with its bound."""

    estimate: float
    stderr: float
    k_hat: float
    bound: float
    n_paths: int

    @property
    def passed(self) -> bool:
        return self.estimate <= self.bound + ABS_SLACK


def _check_shared_basis(ens: PathEnsemble, op: FiniteRankOperator) -> SingularSystem:
    sys = op.system
    if sys.basis.grid != ens.grid or sys.basis.params != ens.params:
        raise BasisMismatch("ensemble and operator do not share grid/weights")
    if ens.n_paths == 0:
        raise EmptyEnsemble("no paths")
    return sys


# coordinate trajectories are reused across audits; key by (ensemble, system)
_COORD_CACHE: "weakref.WeakKeyDictionary[PathEnsemble, dict]" = weakref.WeakKeyDictionary()


def _mode_coords(ens: PathEnsemble, sys: SingularSystem, path: int) -> np.ndarray:
    """(steps+1, K) coordinates of the zero-tail parts of one path."""
    per_sys = _COORD_CACHE.setdefault(ens, {})
    stash = per_sys.get(id(sys))
    if stash is None:
        stash = {}
        per_sys[id(sys)] = stash
    if path not in stash:
        stash[path] = sys.hgamma_coords(ens.dcoef_trajectory(path))
    return stash[path]


def _error_norms(sys: SingularSystem, op: FiniteRankOperator, chat: np.ndarray) -> np.ndarray:
    """Weighted-L^2 distance of the rank-n image from the state, per step.

    With a = Z chat the image has mode coordinates (a_1..a_n, 0, ..),
    so the squared error is sum_{k<=n} s_k^2 (a_k - c_k)^2 + tail.
    """
    n = op.rank
    a = chat[:, : sys.n_modes] @ op.zeta_e.T
    head = (sys.s[:n] * (a - chat[:, :n])) ** 2
    tail = (sys.s[n:] * chat[:, n:]) ** 2
    return np.sqrt(head.sum(axis=1) + tail.sum(axis=1))


def project_path(ens: PathEnsemble, op: FiniteRankOperator) -> list[ProjectedPath]:
    """Apply the operator along every path: coef_k(t) = s_k <r_t, zeta_k>."""
    sys = _check_shared_basis(ens, op)
    out = []
    for p in range(ens.n_paths):
        chat = _mode_coords(ens, sys, p)
        coefs = (chat @ op.zeta_e.T) * sys.s[: op.rank]
        out.append(ProjectedPath(op, p, ens.times, coefs))
    return out


def _audit(
    ens: PathEnsemble,
    op: FiniteRankOperator,
    label: str,
    rhs_factor: float,
    *,
    stop_at_K: float | None = None,
) -> ErrorReport:
    sys = _check_shared_basis(ens, op)
    ts, paths, lhss, rhss = [], [], [], []
    for p in range(ens.n_paths):
        chat = _mode_coords(ens, sys, p)
        lhs = _error_norms(sys, op, chat)
        norms = ens.hgamma_norms(p)
        if stop_at_K is None:
            rhs = rhs_factor * norms
            keep = slice(None)
        else:
            rhs = np.full_like(lhs, rhs_factor * stop_at_K)
            hits = np.flatnonzero(norms >= stop_at_K)
            keep = slice(0, int(hits[0]) + 1 if hits.size else lhs.size)
        ts.append(ens.times[keep])
        paths.append(np.full(ts[-1].size, p))
        lhss.append(lhs[keep])
        rhss.append(rhs[keep])
    return ErrorReport(
        label,
        np.concatenate(ts),
        np.concatenate(paths),
        np.concatenate(lhss),
        np.concatenate(rhss),
    )


def audit_norm_conv(ens: PathEnsemble, op: FiniteRankOperator) -> ErrorReport:
    """Check ||T_n(r_t) - r_t|| <= s_{n+1} ||r_t|| at every step and path."""
    defect = op.system.defect_of_tn(op.rank)
    return _audit(ens, op, f"norm_conv_n{op.rank}", defect)


def audit_est_epsilon_n(
    ens: PathEnsemble, op: FiniteRankOperator, eps_n: float | None = None
) -> ErrorReport:
    """Check the perturbed-operator bound (s_{n+1} + eps_n) ||r_t||."""
    eps = op.eps if eps_n is None else float(eps_n)
    factor = op.system.defect_of_tn(op.rank) + eps
    return _audit(ens, op, f"est_epsilon_n{op.rank}", factor)


def audit_uni_local(ens: PathEnsemble, op: FiniteRankOperator, K: float) -> ErrorReport:
    """Stopped-path audit: up to the first norm crossing of K, the error stays
    below K (s_{n+1} + eps_n)."""
    from .errors import BadThreshold

    norms0 = ens.hgamma_norms(0)[0]
    if K <= norms0:
        raise BadThreshold(f"K={K} must exceed the initial norm {norms0:.6g}")
    factor = op.system.defect_of_tn(op.rank) + op.eps
    return _audit(ens, op, f"uni_local_n{op.rank}", factor, stop_at_K=K)


def mean_square_error(ens: PathEnsemble, op: FiniteRankOperator) -> MeanSquareReport:
    """Monte Carlo E[sup_t ||approx - r||^2]^(1/2) against K-hat (s_{n+1}+eps)."""
    sys = _check_shared_basis(ens, op)
    sup_err2 = np.empty(ens.n_paths)
    sup_norm2 = np.empty(ens.n_paths)
    for p in range(ens.n_paths):
        chat = _mode_coords(ens, sys, p)
        sup_err2[p] = float(np.max(_error_norms(sys, op, chat) ** 2))
        sup_norm2[p] = float(np.max(ens.hgamma_norms(p) ** 2))
    m = float(np.mean(sup_err2))
    est = math.sqrt(m)
    if ens.n_paths > 1 and m > 0.0:
        se_m = float(np.std(sup_err2, ddof=1)) / math.sqrt(ens.n_paths)
        stderr = se_m / (2.0 * est)
    else:
        stderr = 0.0
    k_hat = math.sqrt(float(np.mean(sup_norm2)))
    bound = k_hat * (sys.defect_of_tn(op.rank) + op.eps)
    return MeanSquareReport(est, stderr, k_hat, bound, ens.n_paths)


def increments_checksum(increments: np.ndarray) -> int:
    """CRC of the raw increment bytes, for coupling assertions."""
    arr = np.ascontiguousarray(increments)
    return zlib.crc32(arr.tobytes())


def ito_approximant(
    ens: PathEnsemble,
    op: FiniteRankOperator,
    vol: VolSpec,
    cfg: SimConfig,
    path: int = 0,
) -> ProjectedPath:
    """Integrate the rank-n coefficient processes with the recorded increments.

    Per step the k-th coefficient gains
        s_k [ <zeta_k, (S_dt r - r)/dt> + <zeta_k, alpha(t, r)> ] dt
          + s_k sum_j <zeta_k, sigma_j(t, r)> dW_j,
    where the difference quotient of the shift stands in for the adjoint
    pairing of the transport generator (the paths are discrete, so the
    surrogate converges at the same first order as the scheme itself).
    """
    sys = _check_shared_basis(ens, op)
    if ens.increments is None:
        raise MissingIncrements("ensemble carries no recorded increments")
    if cfg.grid != ens.grid or abs(cfg.dt - ens.dt) > 1e-15:
        raise BasisMismatch("config does not match the recorded ensemble")

    n, dt = op.rank, ens.dt
    steps = ens.n_steps
    grid = ens.grid
    w = grid.widths
    sn = sys.s[:n]

    chat = _mode_coords(ens, sys, path)  # (steps+1, K)
    zc = chat @ op.zeta_e.T  # <r_t, zeta_k>

    # shifted states: gather node values, re-derive coordinates
    idx, frac = _shift_gather(grid, dt)
    V = ens.node_values[path]
    Vs = V[:, idx] * (1.0 - frac) + V[:, np.minimum(idx + 1, V.shape[1] - 1)] * frac
    chat_s = sys.hgamma_coords(np.diff(Vs, axis=1) / w)
    zc_s = chat_s @ op.zeta_e.T

    dW = ens.increments[path]  # (steps, d)
    coefs = np.empty((steps + 1, n))
    coefs[0] = sn * zc[0]

    if not vol.state_dependent:
        r0 = ens.path_curve(path, 0)
        sv = _vol_values(vol, 0.0, r0)  # (d, nodes)
        alpha_d = np.diff(_drift_values(grid, sv)) / w
        sig_d = np.diff(sv, axis=1) / w
        z_alpha = op.zeta_e @ sys.hgamma_coords(alpha_d)
        z_sig = sys.hgamma_coords(sig_d) @ op.zeta_e.T  # (d, n)
        for i in range(steps):
            gen = (zc_s[i] - zc[i]) / dt
            coefs[i + 1] = coefs[i] + sn * (
                (gen + z_alpha) * dt + dW[i] @ z_sig
            )
    else:
        for i in range(steps):
            r = ens.path_curve(path, i)
            sv = _vol_values(vol, float(ens.times[i]), r)
            alpha_d = np.diff(_drift_values(grid, sv)) / w
            sig_d = np.diff(sv, axis=1) / w
            z_alpha = op.zeta_e @ sys.hgamma_coords(alpha_d)
            z_sig = sys.hgamma_coords(sig_d) @ op.zeta_e.T
            gen = (zc_s[i] - zc[i]) / dt
            coefs[i + 1] = coefs[i] + sn * ((gen + z_alpha) * dt + dW[i] @ z_sig)

    return ProjectedPath(op, path, ens.times, coefs)
