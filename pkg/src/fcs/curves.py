"""Weighted forward-curve spaces on truncated grids.

A forward curve h lives in the space with norm
``(|h(0)|^2 + int |h'(x)|^2 e^{gamma x} dx)^(1/2)`` and is stored through its
value at infinity plus a piecewise-constant derivative on a grid over
[0, x_max] (the derivative vanishes beyond x_max).  The larger target space
is the weighted Lebesgue space with weight e^{beta x}, direct-summed with a
scalar slot holding the long-end level.

All objects are immutable after construction and every operation is a pure
function, so values can be shared freely across threads.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, TextIO, Union

import numpy as np

from .errors import GridMismatch, OutOfRange, TailNotNegligible

__all__ = [
    "WeightParams",
    "Grid",
    "ForwardCurve",
    "SampledCurve",
    "ProductElement",
    "hgamma_norm",
    "hgamma_inner",
    "l2beta_norm",
    "l2_norm",
    "w1_norm",
    "embedding_constant_c1",
    "embedding_constant_c2",
    "embedding_constant_c3",
    "reflect",
    "weighted_lift",
    "split",
    "product_embed",
    "cell_exp_integrals",
    "gauss_cells",
    "write_curve",
    "read_curve",
    "random_h0_curve",
]

# Order-8 Gauss-Legendre is exact for degree-15 polynomials; on sub-unit
# cells the polynomial x exponential integrands here are resolved to ~1e-13
# relative, well below every tolerance in the test suite.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)

_FMT = "%.17g"  # shortest decimal form that round-trips every float64


def fmt17(x: float) -> str:
    """Format a float with 17 significant digits (bit-exact round trip)."""
    return _FMT % float(x)


@dataclass(frozen=True)
class WeightParams:
    """Weight exponents: gamma for the derivative space, beta for the target.

    Requires gamma > beta > 0.  The midpoint exponent delta = (beta+gamma)/2
    is derived; it enters the functional-representation constants.
    """

    beta: float
    gamma: float
    delta: float = field(init=False)

    def __post_init__(self) -> None:
        if not (self.gamma > self.beta > 0.0):
            raise ValueError(
                f"need gamma > beta > 0, got beta={self.beta}, gamma={self.gamma}"
            )
        object.__setattr__(self, "delta", 0.5 * (self.beta + self.gamma))


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing nodes from 0 to x_max defining the derivative cells."""

    nodes: np.ndarray

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("grid needs at least two nodes")
        if nodes[0] != 0.0:
            raise ValueError("grid must start at 0")
        if not np.all(np.diff(nodes) > 0.0):
            raise ValueError("grid nodes must be strictly increasing")
        nodes = nodes.copy()
        nodes.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)

    @staticmethod
    def uniform(x_max: float, n_cells: int) -> "Grid":
        return Grid(np.linspace(0.0, float(x_max), int(n_cells) + 1))

    @staticmethod
    def geometric(x_max: float, n_cells: int, growth: float = 64.0) -> "Grid":
        """Graded grid whose cell widths grow geometrically toward x_max.

        ``growth`` is the ratio of the last cell width to the first; fixing it
        across refinements keeps the grid family converging to one density, so
        spectral quantities stabilize as the cell count doubles.
        """
        n = int(n_cells)
        if n < 1:
            raise ValueError("need at least one cell")
        if growth <= 0.0:
            raise ValueError("growth must be positive")
        if n == 1 or growth == 1.0:
            return Grid.uniform(x_max, n)
        q = growth ** (1.0 / (n - 1))
        w0 = float(x_max) * (q - 1.0) / (q**n - 1.0)
        nodes = np.concatenate([[0.0], np.cumsum(w0 * q ** np.arange(n))])
        nodes[-1] = float(x_max)
        return Grid(nodes)

    @property
    def x_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def left(self) -> np.ndarray:
        return self.nodes[:-1]

    @property
    def right(self) -> np.ndarray:
        return self.nodes[1:]

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Grid) and np.array_equal(self.nodes, other.nodes)

    def __repr__(self) -> str:
        return f"Grid(x_max={self.x_max:g}, n_cells={self.n_cells})"


def cell_exp_integrals(grid: Grid, exponent: float) -> np.ndarray:
    """Closed-form per-cell integrals of e^{a x}: (e^{a x2} - e^{a x1}) / a."""
    a = float(exponent)
    if a == 0.0:
        return grid.widths.copy()
    # e^{a x1} * expm1(a w) / a keeps relative accuracy on narrow cells
    return np.exp(a * grid.left) * np.expm1(a * grid.widths) / a


def gauss_cells(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights of all cells, flattened."""
    mid = 0.5 * (grid.left + grid.right)
    half = 0.5 * grid.widths
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return x, w


@dataclass(frozen=True, eq=False)
class ForwardCurve:
    """Curve h with h(infinity) = h_inf and piecewise-constant derivative dcoef.

    h(x) = h_inf - sum_i dcoef_i * |cell_i intersect [x, x_max]|, exactly.
    The stored h0 must reproduce h(0) from that formula (checked on build).
    """

    grid: Grid
    h0: float
    h_inf: float
    dcoef: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.dcoef, dtype=float)
        if d.shape != (self.grid.n_cells,):
            raise ValueError("dcoef length must match the grid cell count")
        if not np.all(np.isfinite(d)) or not math.isfinite(self.h0) or not math.isfinite(self.h_inf):
            raise ValueError("curve data must be finite")
        recon = self.h_inf - float(d @ self.grid.widths)
        scale = 1.0 + abs(self.h_inf) + float(np.abs(d) @ self.grid.widths)
        if abs(recon - self.h0) > 1e-9 * scale:
            raise ValueError(
                f"h0={self.h0} inconsistent with reconstruction {recon} from (h_inf, dcoef)"
            )
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "dcoef", d)

    # -- constructors -------------------------------------------------------

    @staticmethod
    def from_dcoef(grid: Grid, dcoef: np.ndarray, h_inf: float = 0.0) -> "ForwardCurve":
        d = np.asarray(dcoef, dtype=float)
        # same suffix summation as node_values, so eval(0) == h0 bitwise
        h0 = float(h_inf) - float(np.cumsum((d * grid.widths)[::-1])[-1])
        return ForwardCurve(grid, h0, float(h_inf), d)

    @staticmethod
    def from_values(grid: Grid, values: np.ndarray, h_inf: float | None = None) -> "ForwardCurve":
        """Interpolate node values; the derivative is their cell-mean slope.

        With ``h_inf`` given, the values are translated so the last node meets
        it (the sampled tail value becomes the long-end level); by default the
        last node value is taken as h(infinity).
        """
        v = np.asarray(values, dtype=float)
        if v.shape != grid.nodes.shape:
            raise ValueError("need one value per grid node")
        if h_inf is None:
            h_inf = float(v[-1])
        d = np.diff(v) / grid.widths
        return ForwardCurve.from_dcoef(grid, d, h_inf)

    @staticmethod
    def from_function(
        grid: Grid, fn: Callable[[np.ndarray], np.ndarray], h_inf: float | None = None
    ) -> "ForwardCurve":
        return ForwardCurve.from_values(grid, np.asarray(fn(grid.nodes), dtype=float), h_inf)

    @staticmethod
    def zero(grid: Grid) -> "ForwardCurve":
        return ForwardCurve.from_dcoef(grid, np.zeros(grid.n_cells))

    # -- evaluation ---------------------------------------------------------

    @property
    def in_h0(self) -> bool:
        """Membership in the closed subspace with h(infinity) = 0."""
        return self.h_inf == 0.0

    def node_values(self) -> np.ndarray:
        """h at every grid node (suffix sums of the derivative, exact)."""
        suffix = np.concatenate([np.cumsum((self.dcoef * self.grid.widths)[::-1])[::-1], [0.0]])
        return self.h_inf - suffix

    def _eval_ext(self, x: np.ndarray) -> np.ndarray:
        """Evaluate, treating points beyond x_max as the flat tail."""
        x = np.asarray(x, dtype=float)
        nodes = self.grid.nodes
        vals = self.node_values()
        idx = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, self.grid.n_cells - 1)
        inside = vals[idx] + self.dcoef[idx] * (x - nodes[idx])
        return np.where(x >= self.grid.x_max, self.h_inf, inside)

    def eval(self, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """h(x) for x in [0, x_max]; raises OutOfRange outside."""
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0.0) or np.any(arr > self.grid.x_max):
            raise OutOfRange(f"x outside [0, {self.grid.x_max}]")
        out = self._eval_ext(arr)
        return float(out) if np.isscalar(x) or arr.ndim == 0 else out

    # -- linear structure ---------------------------------------------------

    def __add__(self, other: "ForwardCurve") -> "ForwardCurve":
        if self.grid != other.grid:
            raise GridMismatch("cannot add curves on different grids")
        return ForwardCurve(
            self.grid, self.h0 + other.h0, self.h_inf + other.h_inf, self.dcoef + other.dcoef
        )

    def __sub__(self, other: "ForwardCurve") -> "ForwardCurve":
        return self + (-1.0) * other

    def __mul__(self, c: float) -> "ForwardCurve":
        c = float(c)
        return ForwardCurve(self.grid, c * self.h0, c * self.h_inf, c * self.dcoef)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return (
            f"ForwardCurve(h0={self.h0:.6g}, h_inf={self.h_inf:.6g}, "
            f"n_cells={self.grid.n_cells})"
        )


@dataclass(frozen=True, eq=False)
class SampledCurve:
    """Function samples on strictly increasing nodes, read piecewise-linearly.

    ``weight_exponent`` w declares the ambient space: norms integrate
    |h|^2 e^{w x}.  Use 0 for plain L^2 (line grids, reflections, lifts).
    """

    nodes: np.ndarray
    values: np.ndarray
    weight_exponent: float = 0.0

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values)
        if values.dtype.kind not in "fc":
            values = values.astype(float)
        if nodes.ndim != 1 or nodes.size < 2 or values.shape != nodes.shape:
            raise ValueError("values and nodes must be 1-d and of equal length >= 2")
        if not np.all(np.diff(nodes) > 0.0):
            raise ValueError("nodes must be strictly increasing")
        if not np.all(np.isfinite(nodes)) or not np.all(np.isfinite(values)):
            raise ValueError("samples must be finite")
        nodes = nodes.copy()
        values = values.copy()
        nodes.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    def interp(self, x: np.ndarray) -> np.ndarray:
        """Piecewise-linear read, zero outside the sampled range."""
        re = np.interp(x, self.nodes, np.real(self.values), left=0.0, right=0.0)
        if self.values.dtype.kind == "c":
            im = np.interp(x, self.nodes, np.imag(self.values), left=0.0, right=0.0)
            return re + 1j * im
        return re


@dataclass(frozen=True)
class ProductElement:
    """Element of the product space: an L^2_beta function plus a scalar slot."""

    l2_part: SampledCurve
    scalar_part: float

    def norm(self) -> float:
        return math.hypot(l2_norm(self.l2_part), self.scalar_part)


# -- norms and inner products ----------------------------------------------


def hgamma_norm(h: ForwardCurve, w: WeightParams, *, exponent: float | None = None) -> float:
    """Curve-space norm (|h(0)|^2 + int |h'|^2 e^{gamma x})^(1/2), exact per cell.

    ``exponent`` overrides gamma, which lets the same formula express the
    norm-monotonicity comparison between two weights.
    """
    a = w.gamma if exponent is None else float(exponent)
    E = cell_exp_integrals(h.grid, a)
    return math.sqrt(h.h0 * h.h0 + float(h.dcoef @ (h.dcoef * E)))


def hgamma_inner(f: ForwardCurve, g: ForwardCurve, w: WeightParams) -> float:
    """Inner product f(0)g(0) + int f' g' e^{gamma x} dx."""
    if f.grid != g.grid:
        raise GridMismatch("curves on different grids")
    E = cell_exp_integrals(f.grid, w.gamma)
    return f.h0 * g.h0 + float(f.dcoef @ (g.dcoef * E))


def _quad_weighted_sq(nodes_x: np.ndarray, qw: np.ndarray, vals: np.ndarray, a: float) -> float:
    vv = np.abs(vals) ** 2 if np.iscomplexobj(vals) else vals * vals
    if a == 0.0:
        return float(qw @ vv)
    return float(qw @ (vv * np.exp(a * nodes_x)))


def l2beta_norm(h: Union[ForwardCurve, SampledCurve], w: WeightParams) -> float:
    """Norm in L^2 with weight e^{beta x}, by per-cell Gauss quadrature.

    Forward curves must have h(infinity) = 0: for a nonzero long-end level the
    weighted integral diverges and the truncation would silently hide it.
    """
    if isinstance(h, ForwardCurve):
        if not h.in_h0:
            raise TailNotNegligible(
                f"l2beta_norm needs h(inf) = 0, got h_inf={h.h_inf}"
            )
        x, qw = gauss_cells(h.grid)
        return math.sqrt(_quad_weighted_sq(x, qw, h._eval_ext(x), w.beta))
    grid = Grid(h.nodes) if h.nodes[0] == 0.0 else None
    if grid is None:
        raise ValueError("l2beta_norm expects samples on a grid starting at 0")
    x, qw = gauss_cells(grid)
    return math.sqrt(_quad_weighted_sq(x, qw, h.interp(x), w.beta))


def l2_norm(sc: SampledCurve) -> float:
    """Norm of the piecewise-linear read in the curve's own weighted L^2."""
    mid = 0.5 * (sc.nodes[:-1] + sc.nodes[1:])
    half = 0.5 * np.diff(sc.nodes)
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    qw = (half[:, None] * _GL_W[None, :]).ravel()
    return math.sqrt(_quad_weighted_sq(x, qw, sc.interp(x), sc.weight_exponent))


def w1_norm(sc: SampledCurve) -> float:
    """Unweighted Sobolev norm (||f||^2 + ||f'||^2)^(1/2) of the linear read."""
    if sc.weight_exponent != 0.0:
        raise ValueError("Sobolev norm is defined on unweighted samples")
    widths = np.diff(sc.nodes)
    slopes = np.diff(sc.values) / widths
    deriv_sq = float(np.real(slopes * np.conj(slopes)) @ widths)
    return math.sqrt(l2_norm(sc) ** 2 + deriv_sq)


def embedding_constant_c1(w: WeightParams) -> float:
    """Embedding constant 1/sqrt(gamma (gamma - beta))."""
    return 1.0 / math.sqrt(w.gamma * (w.gamma - w.beta))


def embedding_constant_c2(w: WeightParams) -> float:
    """Lift bound constant sqrt(2 C1^2 + 4 + beta^2 C1^2)."""
    c1 = embedding_constant_c1(w)
    return math.sqrt(2.0 * c1 * c1 + 4.0 + w.beta * w.beta * c1 * c1)


def embedding_constant_c3(w: WeightParams) -> float:
    """Sup-norm constant 2 C1(delta, gamma) sqrt(1/(delta - beta))."""
    c1_dg = 1.0 / math.sqrt(w.gamma * (w.gamma - w.delta))
    return 2.0 * c1_dg * math.sqrt(1.0 / (w.delta - w.beta))


# -- reflection, lift, split -------------------------------------------------


def reflect(sc: SampledCurve) -> SampledCurve:
    """Even extension h(|x|) onto the mirrored grid [-L, L]."""
    if sc.nodes[0] != 0.0:
        raise ValueError("reflection expects samples on [0, L]")
    if sc.weight_exponent != 0.0:
        raise ValueError("reflection acts on unweighted samples (weight_exponent 0)")
    nodes = np.concatenate([-sc.nodes[::-1], sc.nodes[1:]])
    values = np.concatenate([sc.values[::-1], sc.values[1:]])
    return SampledCurve(nodes, values, 0.0)


def weighted_lift(h: ForwardCurve, w: WeightParams) -> SampledCurve:
    """Samples of x -> h(x) e^{(beta/2) x}; reflecting this is the bridge into
    the unweighted Sobolev/Fourier estimates."""
    if not h.in_h0:
        raise TailNotNegligible("weighted_lift needs h(inf) = 0")
    nodes = h.grid.nodes
    return SampledCurve(nodes, h.node_values() * np.exp(0.5 * w.beta * nodes), 0.0)


def split(h: ForwardCurve) -> tuple[ForwardCurve, float]:
    """Decompose h = (h - h(inf)) + h(inf); the first part has zero tail."""
    return ForwardCurve.from_dcoef(h.grid, h.dcoef, 0.0), h.h_inf


def product_embed(h: ForwardCurve, w: WeightParams) -> ProductElement:
    """Image of h in the product space: (h - h(inf), h(inf))."""
    flat, level = split(h)
    return ProductElement(
        SampledCurve(h.grid.nodes, flat.node_values(), w.beta), level
    )


# -- serialization -----------------------------------------------------------

_HEADER = "grid x_max=%s n_cells=%d"


def write_curve(h: ForwardCurve, dest: Union[str, TextIO]) -> None:
    """Write the flat text format (17 significant digits, bit-exact round trip)."""
    own = isinstance(dest, str)
    f = open(dest, "w", encoding="utf-8", newline="\n") if own else dest
    try:
        f.write(_HEADER % (fmt17(h.grid.x_max), h.grid.n_cells) + "\n")
        f.write(f"{fmt17(h.h0)} {fmt17(h.h_inf)}\n")
        for d in h.dcoef:
            f.write(fmt17(d) + "\n")
    finally:
        if own:
            f.close()


def read_curve(src: Union[str, TextIO], grid: Grid | None = None) -> ForwardCurve:
    """Read the flat text format.

    The header only carries x_max and the cell count, so the loader assumes a
    uniform grid unless an explicit ``grid`` with matching extent is supplied.
    """
    own = isinstance(src, str)
    f = open(src, "r", encoding="utf-8") if own else src
    try:
        header = f.readline().split()
        if len(header) != 3 or header[0] != "grid":
            raise ValueError("malformed curve header")
        x_max = float(header[1].split("=", 1)[1])
        n_cells = int(header[2].split("=", 1)[1])
        if grid is None:
            grid = Grid.uniform(x_max, n_cells)
        elif grid.n_cells != n_cells or grid.x_max != x_max:
            raise GridMismatch("provided grid does not match the curve header")
        h0_s, h_inf_s = f.readline().split()
        dcoef = np.array([float(f.readline()) for _ in range(n_cells)])
        return ForwardCurve(grid, float(h0_s), float(h_inf_s), dcoef)
    finally:
        if own:
            f.close()


def curve_to_text(h: ForwardCurve) -> str:
    buf = io.StringIO()
    write_curve(h, buf)
    return buf.getvalue()


# -- random ensembles ---------------------------------------------------------


def random_h0_curve(
    grid: Grid, w: WeightParams, rng: np.random.Generator, scale: float = 1.0
) -> ForwardCurve:
    """Random member of the zero-tail subspace with decayed weighted lift.

    The derivative envelope decays a quarter-gap faster than e^{-gamma x/2},
    so the weighted energy is spread across cells while the lift still dies
    off like e^{-3(gamma-beta)x/4}, clearing the transform decay gate.
    """
    mid = 0.5 * (grid.left + grid.right)
    rate = 0.5 * w.gamma + 0.25 * (w.gamma - w.beta)
    dcoef = rng.standard_normal(grid.n_cells) * np.exp(-rate * mid) * scale
    return ForwardCurve.from_dcoef(grid, dcoef, 0.0)
