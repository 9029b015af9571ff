"""Stochastic damped-harmonic-oscillator benchmark simulator.

The simulator integrates

    X'' + 2*zeta*omega0*X' + omega0^2*X = W,   X(0) = X'(0) = 0

over [0, 30] s, where W is Gaussian white noise with unit spectral density in
the random-vibration convention Var = integral of S(omega) d omega, i.e.
autocovariance 2*pi*delta(tau). The time step dt is the fidelity parameter.
The scalar output is log max_n |X_n| over the discretized trajectory
(including the initial node); the threshold-exceedance reference value
pins both the noise convention and the |.| in the maximum.

Integration is an explicit exponential Euler scheme,

    Y_{k+1} = exp(A*dt) (Y_k + e * dW_k),    dW_k ~ N(0, 2*pi*dt),

with exp(A*dt) in closed form from the 2x2 eigenstructure.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from mfsur import _backend, streams
from mfsur.design import DOMAIN_BOUNDS, grid_centers, grid_endpoints

logger = logging.getLogger(__name__)

U_MAX = 30.0
Z_CRIT = -3.0
T_HF = 0.01
# white-noise autocovariance 2*pi*delta(tau); stationary Var(X) = pi/(2 zeta omega0^3)
FORCING_VARIANCE_RATE = 2.0 * math.pi
# log of a zero running maximum (zero-noise degenerate case only)
LOG_FLOOR = -745.0

OMEGA0_RANGE = (0.0, 30.0)
ZETA_RANGE = (0.0, 1.0)
DT_RANGE = (0.0, 1.0)

_CHUNK = 512
_pool = streams.PhiloxPool(_CHUNK)


@dataclass(frozen=True)
class OscillatorInput:
    """Simulator input: natural pulsation, damping ratio, time step."""

    omega0: float
    zeta: float
    dt: float

    def __post_init__(self):
        if not (OMEGA0_RANGE[0] <= self.omega0 <= OMEGA0_RANGE[1]):
            raise ValueError(f"omega0 {self.omega0} outside {OMEGA0_RANGE}")
        if not (ZETA_RANGE[0] <= self.zeta <= ZETA_RANGE[1]):
            raise ValueError(f"zeta {self.zeta} outside {ZETA_RANGE}")
        if not (DT_RANGE[0] < self.dt <= DT_RANGE[1]):
            raise ValueError(f"dt {self.dt} outside ({DT_RANGE[0]}, {DT_RANGE[1]}]")


def n_steps(dt: float, u_max: float = U_MAX) -> int:
    # guard: 30/0.2 rounds to 149.999... in binary, intended count is 150
    return int(math.floor(u_max / dt + 1e-9))


def propagator_matrix(omega0: float, zeta: float, dt: float) -> np.ndarray:
    """Closed-form exp(A*dt) for A = [[0, 1], [-omega0^2, -2 zeta omega0]]."""
    if omega0 == 0.0:
        # free particle: A is nilpotent
        return np.array([[1.0, dt], [0.0, 1.0]])
    if zeta == 0.0:
        c, s = math.cos(omega0 * dt), math.sin(omega0 * dt)
        return np.array([[c, s / omega0], [-omega0 * s, c]])
    if zeta == 1.0:
        e = math.exp(-omega0 * dt)
        return np.array([
            [e * (1.0 + omega0 * dt), e * dt],
            [-e * omega0 * omega0 * dt, e * (1.0 - omega0 * dt)],
        ])
    wd = omega0 * math.sqrt(1.0 - zeta * zeta)
    c, s = math.cos(wd * dt), math.sin(wd * dt)
    e = math.exp(-zeta * omega0 * dt)
    sw = s / wd
    return np.array([
        [e * (c + zeta * omega0 * sw), e * sw],
        [-e * omega0 * omega0 * sw, e * (c - zeta * omega0 * sw)],
    ])


def exponential_euler_step(state, omega0: float, zeta: float, dt: float,
                           noise_increment: float) -> np.ndarray:
    """One scheme step: exp(A*dt) @ (state + (0, noise_increment))."""
    x, v = float(state[0]), float(state[1])
    em = propagator_matrix(omega0, zeta, dt)
    vn = v + noise_increment
    return np.array([em[0, 0] * x + em[0, 1] * vn, em[1, 0] * x + em[1, 1] * vn])


def _log_output(max_abs: np.ndarray):
    """Log of the running maximum, with the degenerate zero-max clamp."""
    degenerate = int(np.count_nonzero(max_abs <= 0.0))
    with np.errstate(divide="ignore"):
        z = np.where(max_abs > 0.0, np.log(np.maximum(max_abs, 1e-323)), LOG_FLOOR)
    return z, degenerate


def simulate(inp: OscillatorInput, rng: np.random.Generator, *,
             zero_noise: bool = False) -> float:
    """One simulator run; consumes exactly n_steps normal draws from rng.

    Deterministic given the generator state; ``zero_noise`` is a test hook
    that suppresses the forcing (and consumes no draws), in which case the
    trajectory stays at rest and the clamped floor value is returned.
    """
    steps = n_steps(inp.dt)
    em = propagator_matrix(inp.omega0, inp.zeta, inp.dt)
    sd = 0.0 if zero_noise else math.sqrt(FORCING_VARIANCE_RATE * inp.dt)
    mx = _backend.traj_max_abs([rng.bit_generator], em[0, 0], em[0, 1],
                               em[1, 0], em[1, 1], sd, steps)
    z, _ = _log_output(mx)
    return float(z[0])


def _node_outputs(x: np.ndarray, dt: float, replications: int, key_prefix: tuple,
                  node_offset: int = 0, zero_noise: bool = False) -> np.ndarray:
    """Simulator outputs for each input row, replications per row.

    Stream contract: replication j of row i reads the Philox stream keyed by
    ``(*key_prefix, node_offset + i, j)``, so any work layout reproduces the
    sequential result.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    steps = n_steps(dt)
    sd = 0.0 if zero_noise else math.sqrt(FORCING_VARIANCE_RATE * dt)
    out = np.empty((len(x), replications))
    degenerate = 0
    reps_idx = np.arange(replications)
    for i, (w0, zeta) in enumerate(x):
        em = propagator_matrix(w0, zeta, dt)
        hi, lo = streams.node_rep_keys(key_prefix, np.full(replications, node_offset + i),
                                       reps_idx)
        mx = np.empty(replications)
        for start in range(0, replications, _CHUNK):
            stop = min(start + _CHUNK, replications)
            gens = _pool.rekey(hi[start:stop], lo[start:stop])
            mx[start:stop] = _backend.traj_max_abs(
                gens, em[0, 0], em[0, 1], em[1, 0], em[1, 1], sd, steps)
        z, d = _log_output(mx)
        degenerate += d
        out[i] = z
    if degenerate and not zero_noise:
        logger.warning("zero running maximum in %d stochastic trajectories", degenerate)
    return out


@dataclass
class ReferenceMap:
    """Per-node Monte-Carlo exceedance estimates on a cell-center grid."""

    omega0_axis: np.ndarray
    zeta_axis: np.ndarray
    nodes: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    dt: float
    z_crit: float
    replications: int
    seed: int

    @property
    def global_estimate(self) -> float:
        return float(self.estimate.mean())


def reference_probability_map(bounds=DOMAIN_BOUNDS, grid_shape=(50, 50), *,
                              dt: float = T_HF, replications: int = 2000,
                              z_crit: float = Z_CRIT, master_seed: int) -> ReferenceMap:
    """Monte-Carlo map of P(Z > z_crit) at fidelity dt on cell centers."""
    if replications < 1:
        raise ValueError("replications must be >= 1")
    ax, bx, nodes = grid_centers(bounds, grid_shape)
    prefix = (master_seed, streams.TAG_REFERENCE)
    est = np.empty(len(nodes))
    for i in range(len(nodes)):
        z = _node_outputs(nodes[i:i + 1], dt, replications, prefix, node_offset=i)
        est[i] = np.mean(z[0] > z_crit)
        if i % 250 == 249:
            logger.info("reference map: %d/%d nodes", i + 1, len(nodes))
    stderr = np.sqrt(est * (1.0 - est) / replications)
    return ReferenceMap(ax, bx, nodes, est, stderr, dt, z_crit, replications, master_seed)


def pilot_noise_table(bounds=DOMAIN_BOUNDS, grid_shape=(5, 5), *, levels,
                      replications: int = 50, master_seed: int,
                      variance_floor: float = 1e-6, zero_noise: bool = False):
    """Per-level empirical output-variance tables on an endpoint grid.

    Returns the arguments for :class:`mfsur.gp.NoiseFunction`: (levels,
    omega0 axis, zeta axis, variance tables of shape (L, nx, ny)).
    ``zero_noise`` is a test hook producing identical replicates, so every
    table entry lands on the variance floor.
    """
    if replications < 2:
        raise ValueError("replications must be >= 2 to estimate a variance")
    levels = np.asarray(levels, dtype=np.float64)
    ax, bx, nodes = grid_endpoints(bounds, grid_shape)
    tables = np.empty((len(levels), len(ax), len(bx)))
    for li, dt in enumerate(levels):
        prefix = (master_seed, streams.TAG_PILOT, li)
        z = _node_outputs(nodes, float(dt), replications, prefix, zero_noise=zero_noise)
        var = np.maximum(z.var(axis=1, ddof=1), variance_floor)
        tables[li] = var.reshape(len(ax), len(bx))
    return levels, ax, bx, tables
