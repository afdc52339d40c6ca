"""1-D advection-dispersion transport with equilibrium sorption.

Solves, on a uniform grid, the retarded transport equation

    R(C) dC/dt = -v_x dC/dx + D_L d2C/dx2,
    R(C) = 1 + (rho_b / theta) dC*/dC,

where C* is the sorbed concentration given by a Freundlich or Langmuir
isotherm and D_L = alpha_l * v_x.  The inlet carries a prescribed advective
mass flux that switches off after a finite pulse; the outlet is a
zero-gradient boundary placed far from the plume.

The discretization is a vertex-centred finite-volume scheme with central
second-order face fluxes for both advection and dispersion, marched with
backward Euler.  The sorption slope is handled by Picard iteration; every
sweep solves one tridiagonal system.  The scheme conserves mass discretely,
which the simulator tracks through a running flux audit.

A measurement sampler restricts a simulated field to the coarser monitoring
grid and masks entries at or below the detection floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import solve_banded

from .errors import SolverError, ValidationError

# Concentration floor used only when evaluating the Freundlich slope, whose
# C**(a-1) factor is singular at zero.  Far below any detection floor.
_SLOPE_EVAL_FLOOR = 1e-12

_PICARD_TOL = 1e-10
_PICARD_MAX_SWEEPS = 50


@dataclass(frozen=True)
class SorptionModel:
    """Equilibrium sorption isotherm: none, Freundlich or Langmuir.

    Freundlich: C* = K_f * C**a with 0 < a <= 1.
    Langmuir:   C* = K_l * S_bar * C / (1 + K_l * C).
    """

    kind: str
    k_f: float = 0.0
    a: float = 1.0
    k_l: float = 0.0
    s_bar: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("none", "freundlich", "langmuir"):
            raise ValidationError(f"unknown sorption kind {self.kind!r}")
        if self.kind == "freundlich":
            if not 0.0 < self.a <= 1.0:
                raise ValidationError(f"Freundlich exponent must be in (0, 1], got {self.a}")
            if self.k_f < 0.0:
                raise ValidationError(f"Freundlich K_f must be >= 0, got {self.k_f}")
        if self.kind == "langmuir":
            if self.k_l < 0.0 or self.s_bar < 0.0:
                raise ValidationError("Langmuir constants must be >= 0")

    @classmethod
    def none(cls) -> "SorptionModel":
        return cls(kind="none")

    @classmethod
    def freundlich(cls, k_f: float, a: float) -> "SorptionModel":
        return cls(kind="freundlich", k_f=float(k_f), a=float(a))

    @classmethod
    def langmuir(cls, k_l: float, s_bar: float) -> "SorptionModel":
        return cls(kind="langmuir", k_l=float(k_l), s_bar=float(s_bar))


def isotherm_value(c, model: SorptionModel):
    """Sorbed concentration C*(C).  Raises on negative concentrations."""
    arr = np.asarray(c, dtype=float)
    if np.any(arr < 0.0):
        raise ValueError("isotherm_value requires C >= 0")
    if model.kind == "none":
        out = np.zeros_like(arr)
    elif model.kind == "freundlich":
        out = model.k_f * np.power(arr, model.a)
    else:
        out = model.k_l * model.s_bar * arr / (1.0 + model.k_l * arr)
    return float(out) if np.isscalar(c) else out


def isotherm_slope(c, model: SorptionModel):
    """Isotherm derivative dC*/dC.

    The Freundlich slope a*K_f*C**(a-1) is singular at C = 0, so strictly
    positive concentrations are required there; Langmuir and the trivial
    model accept C >= 0.
    """
    arr = np.asarray(c, dtype=float)
    if model.kind == "none":
        out = np.zeros_like(arr)
    elif model.kind == "freundlich":
        if np.any(arr <= 0.0):
            raise ValueError("Freundlich slope requires C > 0 (singular at C = 0)")
        out = model.a * model.k_f * np.power(arr, model.a - 1.0)
    else:
        if np.any(arr < 0.0):
            raise ValueError("isotherm_slope requires C >= 0")
        out = model.k_l * model.s_bar / (1.0 + model.k_l * arr) ** 2
    return float(out) if np.isscalar(c) else out


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and numerical setup of one transport experiment.

    Lengths are cm, times are s, concentrations are mg/l.  ``t_pulse`` is the
    duration of the inlet source pulse and ``c0`` its feed concentration; the
    inlet mass flux during the pulse is q * c0 with q = v_x * theta.
    """

    v_x: float
    alpha_l: float
    theta: float
    rho_b: float
    t_pulse: float
    c0: float
    sorption: SorptionModel
    sim_length: float = 40.0
    sim_dx: float = 0.04
    sim_dt: float = 0.1
    meas_x_count: int = 101
    meas_dx: float = 0.16
    meas_t_start: float = 300.0
    meas_t_end: float = 1100.0
    meas_dt: float = 0.5
    conc_floor: float = 5e-5
    sim_store_dt: float | None = None

    def __post_init__(self) -> None:
        positive = {
            "v_x": self.v_x,
            "alpha_l": self.alpha_l,
            "theta": self.theta,
            "rho_b": self.rho_b,
            "t_pulse": self.t_pulse,
            "sim_length": self.sim_length,
            "sim_dx": self.sim_dx,
            "sim_dt": self.sim_dt,
            "meas_dx": self.meas_dx,
            "meas_dt": self.meas_dt,
        }
        for name, value in positive.items():
            if not (np.isfinite(value) and value > 0.0):
                raise ValidationError(f"{name} must be positive, got {value}")
        if self.theta > 1.0:
            raise ValidationError(f"porosity theta must be <= 1, got {self.theta}")
        if self.c0 < 0.0:
            raise ValidationError("c0 must be >= 0")
        if self.conc_floor < 0.0:
            raise ValidationError("conc_floor must be >= 0")
        if self.meas_x_count < 2:
            raise ValidationError("meas_x_count must be >= 2")
        if self.sim_dx > self.meas_dx + 1e-12:
            raise ValidationError("sim_dx must not exceed meas_dx")
        meas_extent = (self.meas_x_count - 1) * self.meas_dx
        if self.sim_length < 2.0 * meas_extent - 1e-9:
            raise ValidationError(
                "sim_length must be at least twice the measured extent "
                f"({self.sim_length} < 2 * {meas_extent})"
            )
        if not self.meas_t_start < self.meas_t_end:
            raise ValidationError("meas_t_start must precede meas_t_end")
        for label, span, step in (
            ("sim_length/sim_dx", self.sim_length, self.sim_dx),
            ("meas_t_end/sim_dt", self.meas_t_end, self.sim_dt),
            ("meas window/meas_dt", self.meas_t_end - self.meas_t_start, self.meas_dt),
            ("store_dt/sim_dt", self.store_dt, self.sim_dt),
            ("meas_dt/store_dt", self.meas_dt, self.store_dt),
            ("meas_t_start/store_dt", self.meas_t_start, self.store_dt),
        ):
            if abs(span / step - round(span / step)) > 1e-9:
                raise ValidationError(f"{label} must be an integer ratio")

    @property
    def d_l(self) -> float:
        """Longitudinal dispersion coefficient D_L = alpha_l * v_x."""
        return self.alpha_l * self.v_x

    @property
    def q(self) -> float:
        """Darcy flux q = v_x * theta."""
        return self.v_x * self.theta

    @property
    def store_dt(self) -> float:
        return self.meas_dt if self.sim_store_dt is None else self.sim_store_dt

    @property
    def retardation_factor(self) -> float:
        return self.rho_b / self.theta


@dataclass
class Field:
    """Concentration samples on a uniform space-time grid.

    ``values`` has shape (n_x, n_t); ``mask`` marks valid entries (True).
    """

    values: np.ndarray
    x0: float
    dx: float
    t0: float
    dt: float
    mask: np.ndarray = dc_field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValidationError("field values must be a 2-D array (n_x, n_t)")
        if self.mask is None:
            self.mask = np.ones(self.values.shape, dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.values.shape:
            raise ValidationError("field mask shape must match values")
        if not np.all(np.isfinite(self.values[self.mask])):
            raise ValidationError("masked-in field values must be finite")
        if self.dx <= 0.0 or self.dt <= 0.0:
            raise ValidationError("grid spacings must be positive")

    @property
    def n_x(self) -> int:
        return self.values.shape[0]

    @property
    def n_t(self) -> int:
        return self.values.shape[1]

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.n_x)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_t)

    def copy(self) -> "Field":
        return Field(self.values.copy(), self.x0, self.dx, self.t0, self.dt, self.mask.copy())


@dataclass
class SimDiagnostics:
    """Mass-audit trail of one simulation, snapshotted at stored times."""

    times: np.ndarray
    aqueous_mass: np.ndarray
    sorbed_mass: np.ndarray
    injected_mass: np.ndarray
    outflowed_mass: np.ndarray
    max_picard_sweeps: int

    def balance_error(self) -> np.ndarray:
        """Relative closure error of stored + sorbed + outflow vs injected."""
        closure = self.aqueous_mass + self.sorbed_mass + self.outflowed_mass
        scale = np.maximum(self.injected_mass, 1e-30)
        return np.abs(closure - self.injected_mass) / scale


def _slope_for_solver(c: np.ndarray, model: SorptionModel) -> np.ndarray:
    if model.kind == "none":
        return np.zeros_like(c)
    if model.kind == "freundlich":
        return isotherm_slope(np.maximum(c, _SLOPE_EVAL_FLOOR), model)
    return isotherm_slope(np.maximum(c, 0.0), model)


def simulate(config: ScenarioConfig, return_diagnostics: bool = False):
    """Run the transport solver and return the stored field.

    Returns the Field on the simulation x-grid at the storage time stride
    (``config.store_dt``), starting at t = 0.  With ``return_diagnostics``
    a SimDiagnostics record with the mass audit is returned as well.
    """
    if config.d_l <= 0.0:
        raise ValidationError("central differencing requires D_L > 0")
    peclet = config.v_x * config.sim_dx / config.d_l
    if peclet > 2.0:
        raise ValidationError(
            f"grid Peclet number {peclet:.3f} exceeds 2; refine sim_dx or raise dispersivity"
        )

    n_nodes = int(round(config.sim_length / config.sim_dx)) + 1
    n_steps = int(round(config.meas_t_end / config.sim_dt))
    store_every = int(round(config.store_dt / config.sim_dt))
    n_store = n_steps // store_every + 1

    dx = config.sim_dx
    dt = config.sim_dt
    theta = config.theta
    rho_b = config.rho_b
    model = config.sorption
    a_face = theta * config.d_l / dx  # dispersive conductance per face
    b_face = 0.5 * config.q          # advective (central) face weight
    f0 = config.q * config.c0

    # Control volumes: half cells at both boundaries.
    vol = np.full(n_nodes, dx)
    vol[0] = vol[-1] = 0.5 * dx
    vol_over_dt = vol / dt

    c = np.zeros(n_nodes)
    stored = np.zeros((n_nodes, n_store))
    stored_times = np.zeros(n_store)

    injected = 0.0
    outflowed = 0.0
    max_sweeps = 0

    aqueous = np.zeros(n_store)
    sorbed = np.zeros(n_store)
    injected_track = np.zeros(n_store)
    outflowed_track = np.zeros(n_store)

    def snapshot(slot: int, t_now: float) -> None:
        stored[:, slot] = c
        stored_times[slot] = t_now
        aqueous[slot] = theta * float(vol @ c)
        sorbed[slot] = rho_b * float(vol @ isotherm_value(np.maximum(c, 0.0), model))
        injected_track[slot] = injected
        outflowed_track[slot] = outflowed

    snapshot(0, 0.0)

    # Off-diagonals are constant; the diagonal changes with the sorption slope.
    lower = np.full(n_nodes, -(a_face + b_face))
    upper = np.full(n_nodes, -(a_face - b_face))
    diag_flux = np.full(n_nodes, 2.0 * a_face)
    diag_flux[0] = a_face + b_face
    diag_flux[-1] = a_face + b_face
    ab = np.zeros((3, n_nodes))
    ab[0, 1:] = upper[:-1]
    ab[2, :-1] = lower[1:]

    for step in range(n_steps):
        t_next = (step + 1) * dt
        flux_in = f0 if t_next <= config.t_pulse + 1e-9 * dt else 0.0

        c_old = c
        cs_old = isotherm_value(np.maximum(c_old, 0.0), model)
        c_k = c_old.copy()
        converged = False
        for sweep in range(1, _PICARD_MAX_SWEEPS + 1):
            s = _slope_for_solver(c_k, model)
            cs_k = isotherm_value(np.maximum(c_k, 0.0), model)
            storage = vol_over_dt * (theta + rho_b * s)
            rhs = vol_over_dt * (theta * c_old + rho_b * (cs_old - cs_k + s * c_k))
            rhs[0] += flux_in
            ab[1, :] = storage + diag_flux
            c_new = solve_banded((1, 1), ab, rhs)
            delta = float(np.max(np.abs(c_new - c_k)))
            c_k = c_new
            if delta <= _PICARD_TOL:
                converged = True
                break
        if not converged:
            raise SolverError(
                f"Picard iteration failed at t = {t_next:.3f} s "
                f"(last sweep change {delta:.3e} after {_PICARD_MAX_SWEEPS} sweeps)"
            )
        max_sweeps = max(max_sweeps, sweep)
        c = c_k
        injected += flux_in * dt
        outflowed += config.q * c[-1] * dt

        if (step + 1) % store_every == 0:
            snapshot((step + 1) // store_every, t_next)

    field = Field(stored, x0=0.0, dx=dx, t0=0.0, dt=config.store_dt)
    if not return_diagnostics:
        return field
    diag = SimDiagnostics(
        times=stored_times,
        aqueous_mass=aqueous,
        sorbed_mass=sorbed,
        injected_mass=injected_track,
        outflowed_mass=outflowed_track,
        max_picard_sweeps=max_sweeps,
    )
    return field, diag


def _axis_restrict(values: np.ndarray, src0: float, src_step: float, dst: np.ndarray, axis: int) -> np.ndarray:
    """Restrict one axis of a grid to target coordinates, interpolating only
    when a target point does not coincide with a source node."""
    idx_real = (dst - src0) / src_step
    idx_round = np.round(idx_real)
    n_src = values.shape[axis]
    if np.any(idx_real < -1e-6) or np.any(idx_real > n_src - 1 + 1e-6):
        raise ValidationError("measurement grid extends beyond the simulated field")
    if np.max(np.abs(idx_real - idx_round)) < 1e-6:
        take = idx_round.astype(int)
        return np.take(values, take, axis=axis)
    lo = np.clip(np.floor(idx_real).astype(int), 0, n_src - 2)
    w = idx_real - lo
    moved = np.moveaxis(values, axis, 0)
    out = (1.0 - w)[:, None] * moved[lo] + w[:, None] * moved[lo + 1]
    return np.moveaxis(out, 0, axis)


def sample_measurements(sim_field: Field, config: ScenarioConfig) -> Field:
    """Restrict a simulated field to the measurement grid and apply the
    detection floor.

    The monitoring network spans x = 0 .. (meas_x_count - 1) * meas_dx and
    t = meas_t_start .. meas_t_end.  Entries at or below ``conc_floor`` are
    masked out (with a zero floor nothing is masked).
    """
    if not np.all(sim_field.mask):
        raise ValidationError("sample_measurements expects a fully valid source field")
    xs = config.meas_dx * np.arange(config.meas_x_count)
    n_t = int(round((config.meas_t_end - config.meas_t_start) / config.meas_dt)) + 1
    ts = config.meas_t_start + config.meas_dt * np.arange(n_t)

    vals = _axis_restrict(sim_field.values, sim_field.x0, sim_field.dx, xs, axis=0)
    vals = _axis_restrict(vals, sim_field.t0, sim_field.dt, ts, axis=1)
    vals = np.maximum(vals, 0.0)

    if config.conc_floor > 0.0:
        mask = vals > config.conc_floor
    else:
        mask = np.ones_like(vals, dtype=bool)
    return Field(vals, x0=0.0, dx=config.meas_dx, t0=config.meas_t_start, dt=config.meas_dt, mask=mask)
