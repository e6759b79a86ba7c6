"""Pure-diffusion forward-rate simulation in time-to-maturity coordinates.

The dynamics combine the left-shift semigroup (the transport term of the
Musiela parametrization), the no-arbitrage drift built from the volatility
loadings, and Gaussian increments.  One Euler step applies drift and noise,
then shifts:  r+ = S_dt(r + alpha dt + sum_j sigma_j dW_j).

The stepping loop maintains node values; adding curves and re-binning shifts
are both linear in node values, so the batched path ensemble and the
single-curve step are the same arithmetic.  Increments come from a
counter-based generator keyed by (seed, path), so ensembles are reproducible
and independent of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .curves import ForwardCurve, Grid, WeightParams, cell_exp_integrals
from .errors import (
    BadThreshold,
    EmptyEnsemble,
    GridMismatch,
    HorizonExceeded,
    OutOfRange,
)

__all__ = [
    "VolSpec",
    "SimConfig",
    "PathEnsemble",
    "vasicek_vol",
    "extended_uniform_grid",
    "shift",
    "hjm_drift",
    "euler_step",
    "simulate",
    "hitting_time",
]

VolMap = Callable[[float, ForwardCurve], ForwardCurve]


@dataclass(frozen=True)
class VolSpec:
    """Volatility loadings sigma_j(t, r), each returning a zero-tail curve."""

    components: tuple[VolMap, ...]
    state_dependent: bool = False

    @property
    def dim(self) -> int:
        return len(self.components)


def vasicek_vol(grid: Grid, c: float = 0.02, a: float = 1.0) -> VolSpec:
    """Single exponentially decaying loading c e^{-a x} (desk-scale default)."""
    curve = ForwardCurve.from_function(grid, lambda x: c * np.exp(-a * x), h_inf=0.0)
    return VolSpec(components=(lambda t, r: curve,), state_dependent=False)


def extended_uniform_grid(x_max: float, t_max: float, dt: float) -> Grid:
    """Uniform grid over [0, x_max + t_max] with spacing dt.

    Shifts by multiples of dt are then exact re-indexing, so the splitting
    scheme never interpolates and simulated curves stay in the grid space.
    """
    n = int(round((x_max + t_max) / dt))
    if abs(n * dt - (x_max + t_max)) > 1e-9 * (x_max + t_max):
        raise ValueError("x_max + t_max must be an integer multiple of dt")
    return Grid.uniform(x_max + t_max, n)


@dataclass(frozen=True)
class SimConfig:
    """Stepping parameters; the grid must already cover the shift horizon."""

    params: WeightParams
    grid: Grid
    dt: float
    t_max: float
    n_paths: int
    seed: int

    def __post_init__(self) -> None:
        if self.dt <= 0.0 or self.t_max < self.dt:
            raise ValueError("need 0 < dt <= t_max")
        if self.n_paths < 1:
            raise ValueError("need at least one path")
        n = self.t_max / self.dt
        if abs(n - round(n)) > 1e-9:
            raise ValueError("t_max must be an integer multiple of dt")
        if self.t_max >= self.grid.x_max:
            raise ValueError("grid must extend beyond the simulation horizon")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))


def _shift_gather(grid: Grid, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Indices and fractions so that V_new = V[idx] (1-frac) + V[idx+1] frac."""
    q = grid.nodes + t
    idx = np.clip(np.searchsorted(grid.nodes, q, side="right") - 1, 0, grid.n_cells - 1)
    frac = (q - grid.nodes[idx]) / grid.widths[idx]
    beyond = q >= grid.x_max
    idx[beyond] = grid.n_cells - 1
    frac[beyond] = 1.0
    return idx, frac


def shift(h: ForwardCurve, t: float) -> ForwardCurve:
    """Translated curve (S_t h)(x) = h(t + x), re-binned onto the same grid.

    Node values are exact (points past x_max read the flat tail); between
    nodes the result is the usual piecewise-linear re-binning.  On a uniform
    grid with t a multiple of the spacing the re-binning is exact re-indexing.
    """
    if t < 0.0:
        raise OutOfRange("shift needs t >= 0")
    if t > h.grid.x_max:
        raise HorizonExceeded(f"shift by {t} exceeds the grid range {h.grid.x_max}")
    if t == 0.0:
        return h
    vals = h._eval_ext(h.grid.nodes + t)
    return ForwardCurve.from_values(h.grid, vals, h.h_inf)


def _vol_values(vol: VolSpec, t: float, r: ForwardCurve) -> np.ndarray:
    """Node values of every loading, stacked (d, n_nodes); tails must vanish."""
    rows = []
    for comp in vol.components:
        sig = comp(t, r)
        if sig.grid != r.grid:
            raise GridMismatch("volatility curve lives on a different grid")
        if not sig.in_h0:
            raise ValueError("volatility loadings must have h(inf) = 0")
        rows.append(sig.node_values())
    return np.vstack(rows)


def _drift_values(grid: Grid, sigma_values: np.ndarray) -> np.ndarray:
    """No-arbitrage drift at the nodes: sum_j sigma_j(x) int_0^x sigma_j.

    The running integrals are trapezoid sums, exact for the piecewise-linear
    loadings; the product is then re-read as a grid curve by node differences.
    """
    w = grid.widths
    avg = 0.5 * (sigma_values[:, 1:] + sigma_values[:, :-1])
    cum = np.concatenate(
        [np.zeros((sigma_values.shape[0], 1)), np.cumsum(avg * w, axis=1)], axis=1
    )
    return np.sum(sigma_values * cum, axis=0)


def hjm_drift(vol: VolSpec, t: float, r: ForwardCurve) -> ForwardCurve:
    """Drift curve pinned down by the volatility (pure-diffusion case)."""
    sv = _vol_values(vol, t, r)
    return ForwardCurve.from_values(r.grid, _drift_values(r.grid, sv), 0.0)


def euler_step(
    r: ForwardCurve, t: float, vol: VolSpec, dt: float, dW: Sequence[float]
) -> ForwardCurve:
    """One splitting step: add drift and noise, then shift by dt."""
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (vol.dim,):
        raise ValueError(f"need {vol.dim} increments, got shape {dW.shape}")
    sv = _vol_values(vol, t, r)
    vals = (
        r.node_values()
        + _drift_values(r.grid, sv) * dt
        + dW @ sv
    )
    stepped = ForwardCurve.from_values(r.grid, vals, r.h_inf)
    return shift(stepped, dt)


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Recorded simulation: node-value trajectories plus driving increments.

    ``node_values`` has shape (paths, steps+1, nodes); ``increments`` has
    shape (paths, steps, d) and regenerates bit-identically from the seed.
    """

    grid: Grid
    params: WeightParams
    dt: float
    times: np.ndarray
    node_values: np.ndarray
    increments: np.ndarray | None
    seed: int

    @property
    def n_paths(self) -> int:
        return self.node_values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.node_values.shape[1] - 1

    @property
    def h_inf(self) -> float:
        return float(self.node_values[0, 0, -1])

    def path_curve(self, path: int, step: int) -> ForwardCurve:
        v = self.node_values[path, step]
        return ForwardCurve.from_values(self.grid, v, float(v[-1]))

    def dcoef_trajectory(self, path: int) -> np.ndarray:
        """(steps+1, n_cells) derivative coordinates of one path."""
        return np.diff(self.node_values[path], axis=1) / self.grid.widths

    def hgamma_norms(self, path: int) -> np.ndarray:
        """Curve-space norm at every step of one path."""
        d = self.dcoef_trajectory(path)
        E = cell_exp_integrals(self.grid, self.params.gamma)
        return np.sqrt(self.node_values[path, :, 0] ** 2 + (d * d) @ E)


def _path_increments(seed: int, path: int, n_steps: int, d: int, dt: float) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, path]))
    return rng.standard_normal((n_steps, d)) * np.sqrt(dt)


def simulate(
    h0: ForwardCurve,
    vol: VolSpec,
    cfg: SimConfig,
    increments: np.ndarray | None = None,
) -> PathEnsemble:
    """Run the splitting scheme for every path with recorded increments.

    Pass ``increments`` (paths, steps, d) to couple against another run (e.g.
    a refined-step reference built from pairwise sums); otherwise they are
    drawn per path from the counter-based generator keyed by (seed, path).
    """
    if h0.grid != cfg.grid:
        raise GridMismatch("initial curve must live on the simulation grid")
    n_steps, d = cfg.n_steps, vol.dim
    if increments is None:
        increments = np.stack(
            [_path_increments(cfg.seed, p, n_steps, d, cfg.dt) for p in range(cfg.n_paths)]
        )
    else:
        increments = np.asarray(increments, dtype=float)
        if increments.shape != (cfg.n_paths, n_steps, d):
            raise ValueError(
                f"increments shape {increments.shape} != {(cfg.n_paths, n_steps, d)}"
            )

    times = cfg.dt * np.arange(n_steps + 1)
    n_nodes = cfg.grid.nodes.size
    record = np.empty((cfg.n_paths, n_steps + 1, n_nodes))
    idx, frac = _shift_gather(cfg.grid, cfg.dt)

    if not vol.state_dependent:
        sv = _vol_values(vol, 0.0, h0)  # (d, nodes), frozen in time
        alpha = _drift_values(cfg.grid, sv)
        V = np.tile(h0.node_values(), (cfg.n_paths, 1))
        record[:, 0] = V
        for i in range(n_steps):
            V = V + alpha * cfg.dt + increments[:, i] @ sv
            V = V[:, idx] * (1.0 - frac) + V[:, np.minimum(idx + 1, n_nodes - 1)] * frac
            record[:, i + 1] = V
    else:
        for p in range(cfg.n_paths):
            r = h0
            record[p, 0] = r.node_values()
            for i in range(n_steps):
                r = euler_step(r, times[i], vol, cfg.dt, increments[p, i])
                record[p, i + 1] = r.node_values()

    return PathEnsemble(
        cfg.grid, cfg.params, cfg.dt, times, record, increments, cfg.seed
    )


def hitting_time(ens: PathEnsemble, path: int, K: float) -> float | None:
    """First grid time at which the curve norm reaches K, None if never.

    K must exceed the initial norm, so the hitting time is strictly positive.
    """
    if ens.n_paths == 0:
        raise EmptyEnsemble("no paths")
    norms = ens.hgamma_norms(path)
    if K <= norms[0]:
        raise BadThreshold(f"K={K} must exceed the initial norm {norms[0]:.6g}")
    hits = np.flatnonzero(norms >= K)
    return float(ens.times[hits[0]]) if hits.size else None
