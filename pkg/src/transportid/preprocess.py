"""Measurement preprocessing: noise injection, smoothing, derivatives.

Smoothing follows a two-stage local scheme: around every sample a window of
Chebyshev nodes is laid out, the value at each node is estimated by a local
polynomial least-squares fit over the samples near that node, and the node
values are interpolated back to the sample position (barycentric form).
Because the grid is uniform, the composition collapses to a fixed finite
impulse response, which is applied per row / per column; samples whose full
support window is unavailable (field edge or masked neighbour) are dropped
rather than fitted with a shrunken window.

Derivatives use the second-order central stencils

    du/dt   = (u[k+1] - u[k-1]) / (2 dt)
    du/dx   = (u[i+1] - u[i-1]) / (2 dx)
    d2u/dx2 = (u[i+1] - 2 u[i] + u[i-1]) / dx^2
    d3u/dx3 = (0.5 u[i+2] - u[i+1] + u[i-1] - 0.5 u[i-2]) / dx^3

applied to the concentration field and, for the quadratic candidate terms,
to the squared field directly.  Points whose stencil touches a boundary or
a masked entry are excluded.
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields

import numpy as np
from scipy.ndimage import correlate1d, minimum_filter1d

from .errors import ValidationError
from .transport import Field


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative uniform noise: C -> C * (1 + delta * e), e ~ U[-1, 1]."""

    delta: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.delta < 1.0:
            raise ValidationError(f"noise delta must be in [0, 1), got {self.delta}")


def add_noise(field: Field, spec: NoiseSpec) -> Field:
    """Perturb every unmasked entry with an independent uniform draw.

    The draw grid matches the field shape, so the realisation for a given
    seed does not depend on the mask pattern.  delta = 0 returns an
    identical copy.
    """
    out = field.copy()
    if spec.delta == 0.0:
        return out
    rng = np.random.default_rng(spec.seed)
    e = rng.uniform(-1.0, 1.0, size=field.values.shape)
    out.values = np.where(field.mask, field.values * (1.0 + spec.delta * e), field.values)
    return out


@dataclass(frozen=True)
class SmoothingConfig:
    """Window layout of the two-stage smoother.

    ``degree_cheb`` is the interpolation degree (degree + 1 Chebyshev nodes),
    ``order_ls`` the local polynomial order.  Half-window sizes are in grid
    steps, separately for the time and space passes.
    """

    degree_cheb: int = 5
    order_ls: int = 3
    half_window_cheb_t: int = 120
    half_window_ls_t: int = 120
    half_window_cheb_x: int = 6
    half_window_ls_x: int = 6
    # Each pass discards a full support window at both ends of every series,
    # so deeper budgets trade usable data for smoothness; two passes is the
    # most this measurement layout can afford.
    max_passes: int = 2
    fluctuation_factor: float = 1.3

    def __post_init__(self) -> None:
        if self.degree_cheb < 1 or self.order_ls < 0:
            raise ValidationError("smoothing degrees must be positive")
        for n in (self.half_window_cheb_t, self.half_window_ls_t,
                  self.half_window_cheb_x, self.half_window_ls_x):
            if n < 1:
                raise ValidationError("smoothing half-windows must be >= 1 step")
        if 2 * min(self.half_window_ls_t, self.half_window_ls_x) < self.order_ls:
            raise ValidationError("local fit window too short for the polynomial order")
        if self.max_passes < 1:
            raise ValidationError("max_passes must be >= 1")
        if self.fluctuation_factor <= 0.0:
            raise ValidationError("fluctuation_factor must be positive")


def chebyshev_nodes(count: int) -> np.ndarray:
    """Roots of the degree-``count`` Chebyshev polynomial of the first kind,
    on [-1, 1], in descending order."""
    i = np.arange(1, count + 1)
    return np.cos((2 * i - 1) * np.pi / (2 * count))


def barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def barycentric_eval(nodes: np.ndarray, values: np.ndarray, x: float) -> float:
    """Evaluate the interpolating polynomial through (nodes, values) at x."""
    d = x - nodes
    hit = np.abs(d) < 1e-14
    if np.any(hit):
        return float(values[np.argmax(hit)])
    w = barycentric_weights(nodes) / d
    return float(np.sum(w * values) / np.sum(w))


def _node_fit_weights(node: float, half_window: int, order: int) -> tuple[np.ndarray, int]:
    """FIR weights of a local polynomial fit around ``node`` evaluated at the
    node itself, over the integer offsets within ``half_window`` of it."""
    j_lo = int(np.ceil(node - half_window - 1e-9))
    j_hi = int(np.floor(node + half_window + 1e-9))
    offsets = np.arange(j_lo, j_hi + 1)
    local = (offsets - node) / half_window
    design = np.vander(local, order + 1, increasing=True)
    # Row of the pseudo-inverse that yields the fitted value at local coord 0.
    weights = np.linalg.pinv(design)[0]
    return weights, j_lo


def composite_filter(half_window_cheb: int, half_window_ls: int,
                     degree_cheb: int, order_ls: int) -> np.ndarray:
    """Collapse Chebyshev-node local fits plus barycentric interpolation back
    to the window centre into a single odd-length FIR filter.

    The returned filter w satisfies sum w = 1 and annihilates moments up to
    the local polynomial order, so polynomials up to that order pass through
    unchanged.
    """
    n_nodes = degree_cheb + 1
    nodes = half_window_cheb * chebyshev_nodes(n_nodes)
    bary = barycentric_weights(nodes)
    interp = (bary / (0.0 - nodes))
    interp = interp / interp.sum()  # interpolation weights at the centre

    support = int(np.floor(np.max(np.abs(nodes)) + half_window_ls + 1e-9))
    w = np.zeros(2 * support + 1)
    for node, c_i in zip(nodes, interp):
        fit_w, j_lo = _node_fit_weights(node, half_window_ls, order_ls)
        start = j_lo + support
        w[start:start + fit_w.size] += c_i * fit_w
    return w


def smooth_series(values: np.ndarray, half_window_cheb: int, half_window_ls: int,
                  degree_cheb: int = 5, order_ls: int = 3,
                  mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Smooth a 1-D series; returns (smoothed, supported) arrays.

    ``supported`` is False where the full filter window is unavailable
    (series edge or masked sample); the smoothed value there is meaningless.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1:
        raise ValidationError("smooth_series expects a 1-D array")
    m = np.ones(v.shape, bool) if mask is None else np.asarray(mask, bool)
    w = composite_filter(half_window_cheb, half_window_ls, degree_cheb, order_ls)
    if v.size < w.size:
        raise ValidationError(
            f"series of length {v.size} shorter than the smoothing window ({w.size})"
        )
    smoothed, supported = _filter_axis(v[None, :], m[None, :], w, axis=1)
    return smoothed[0], supported[0]


def _filter_axis(values: np.ndarray, mask: np.ndarray, w: np.ndarray, axis: int):
    filled = np.where(mask, values, 0.0)
    smoothed = correlate1d(filled, w, axis=axis, mode="constant", cval=0.0)
    interior = minimum_filter1d(mask.astype(np.uint8), size=w.size,
                                axis=axis, mode="constant", cval=0).astype(bool)
    return smoothed, interior


def _one_pass(vals: np.ndarray, support: np.ndarray, w_t: np.ndarray,
              w_x: np.ndarray):
    vals, sup_t = _filter_axis(vals, support, w_t, axis=1)
    vals, sup_x = _filter_axis(vals, sup_t, w_x, axis=0)
    return vals, sup_x


def _d3_scatter(field: Field) -> float:
    pts = compute_derivatives(field)
    if pts.n_points == 0:
        return 0.0
    return float(np.std(pts.c_xxx))


def smooth_field(field: Field, cfg: SmoothingConfig, conc_floor: float = 0.0,
                 reference: Field | None = None,
                 return_passes: bool = False):
    """Smooth along t (per location) then along x (per time).

    With a ``reference`` field (the same measurement layout without noise),
    the pass is repeated while the scatter of the third spatial derivative
    of the smoothed data exceeds ``fluctuation_factor`` times the scatter
    of the identically smoothed reference, up to ``max_passes``; the
    reference is smoothed in lockstep so the comparison is between equal
    treatments.  Without a reference the field gets exactly ``max_passes``
    passes.

    The input mask marks which samples exist and may support a window; the
    detection floor is a validity judgment applied to the output only, so
    low-concentration series still contribute smoothing support.
    """
    w_t = composite_filter(cfg.half_window_cheb_t, cfg.half_window_ls_t,
                           cfg.degree_cheb, cfg.order_ls)
    w_x = composite_filter(cfg.half_window_cheb_x, cfg.half_window_ls_x,
                           cfg.degree_cheb, cfg.order_ls)
    if field.n_t < w_t.size:
        raise ValidationError("field has too few time steps for the smoothing window")
    if field.n_x < w_x.size:
        raise ValidationError("field has too few locations for the smoothing window")
    if reference is not None and reference.values.shape != field.values.shape:
        raise ValidationError("reference field layout does not match")

    vals, support = field.values, field.mask
    if reference is not None:
        ref_vals, ref_support = reference.values, reference.mask
    out = None
    passes = 0
    for _ in range(cfg.max_passes):
        vals, support = _one_pass(vals, support, w_t, w_x)
        passes += 1
        out = Field(vals, field.x0, field.dx, field.t0, field.dt,
                    support & (vals > conc_floor))
        if reference is None:
            continue
        ref_vals, ref_support = _one_pass(ref_vals, ref_support, w_t, w_x)
        ref_out = Field(ref_vals, field.x0, field.dx, field.t0, field.dt,
                        ref_support & (ref_vals > conc_floor))
        ref_scatter = _d3_scatter(ref_out)
        if ref_scatter <= 0.0:
            break
        if _d3_scatter(out) <= cfg.fluctuation_factor * ref_scatter:
            break
    if return_passes:
        return out, passes
    return out


@dataclass
class DerivativeField:
    """Concentration and stencil derivatives at scattered valid grid points.

    All members are flat arrays over points, ordered by time index then
    space index.  The squared-field spatial derivatives (c2_*) come from
    applying the same stencils to C^2.
    """

    x_index: np.ndarray
    t_index: np.ndarray
    x: np.ndarray
    t: np.ndarray
    c: np.ndarray
    c_t: np.ndarray
    c_x: np.ndarray
    c_xx: np.ndarray
    c_xxx: np.ndarray
    c2_x: np.ndarray
    c2_xx: np.ndarray
    c2_xxx: np.ndarray

    @property
    def n_points(self) -> int:
        return self.c.size

    def select(self, which: np.ndarray) -> "DerivativeField":
        return DerivativeField(**{
            f.name: getattr(self, f.name)[which] for f in dc_fields(self)
        })


def compute_derivatives(field: Field) -> DerivativeField:
    """Evaluate the central stencils at every fully supported grid point.

    A point is kept when its five-point spatial stencil and its two
    temporal neighbours are all inside the grid and unmasked.
    """
    v = field.values
    m = field.mask
    n_x, n_t = v.shape
    if n_x < 5 or n_t < 3:
        raise ValidationError("field too small for the derivative stencils")

    valid = np.zeros((n_x, n_t), dtype=bool)
    valid[2:-2, 1:-1] = (
        m[2:-2, 1:-1]
        & m[:-4, 1:-1] & m[1:-3, 1:-1] & m[3:-1, 1:-1] & m[4:, 1:-1]
        & m[2:-2, :-2] & m[2:-2, 2:]
    )
    kk, ii = np.nonzero(valid.T)
    i, k = ii, kk

    dx, dt = field.dx, field.dt
    s = v * v
    c_t = (v[i, k + 1] - v[i, k - 1]) / (2.0 * dt)
    c_x = (v[i + 1, k] - v[i - 1, k]) / (2.0 * dx)
    c_xx = (v[i + 1, k] - 2.0 * v[i, k] + v[i - 1, k]) / dx ** 2
    c_xxx = (0.5 * v[i + 2, k] - v[i + 1, k] + v[i - 1, k] - 0.5 * v[i - 2, k]) / dx ** 3
    c2_x = (s[i + 1, k] - s[i - 1, k]) / (2.0 * dx)
    c2_xx = (s[i + 1, k] - 2.0 * s[i, k] + s[i - 1, k]) / dx ** 2
    c2_xxx = (0.5 * s[i + 2, k] - s[i + 1, k] + s[i - 1, k] - 0.5 * s[i - 2, k]) / dx ** 3

    return DerivativeField(
        x_index=i, t_index=k,
        x=field.x0 + field.dx * i, t=field.t0 + field.dt * k,
        c=v[i, k], c_t=c_t, c_x=c_x, c_xx=c_xx, c_xxx=c_xxx,
        c2_x=c2_x, c2_xx=c2_xx, c2_xxx=c2_xxx,
    )


@dataclass
class DataSplit:
    """Chronological train/test partition of a derivative point set."""

    train: DerivativeField
    test: DerivativeField
    ratio: float
    n_train_steps: int
    n_test_steps: int


def split_train_test(points: DerivativeField, ratio: float = 0.6) -> DataSplit:
    """Split by time sequence: the first floor(ratio * n_steps) time steps
    train the regression, the remainder scores it."""
    if not 0.0 < ratio < 1.0:
        raise ValidationError(f"split ratio must be in (0, 1), got {ratio}")
    steps = np.unique(points.t_index)
    n_train = int(np.floor(ratio * steps.size))
    if n_train == 0 or n_train == steps.size:
        raise ValidationError(
            f"split ratio {ratio} leaves an empty partition for {steps.size} time steps"
        )
    cutoff = steps[n_train]
    in_train = points.t_index < cutoff
    return DataSplit(
        train=points.select(in_train),
        test=points.select(~in_train),
        ratio=ratio,
        n_train_steps=n_train,
        n_test_steps=steps.size - n_train,
    )
