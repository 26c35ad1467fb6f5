"""Reference dynamical systems and fixed-step integration.

Four ground-truth systems generate the training observables:

- ``ks``: 32-mode Galerkin truncation of the Kuramoto-Sivashinsky equation
- ``mg``: Mackey-Glass delay equation (method of steps)
- ``sm``: 9-shell GOY model of fluid turbulence (complex state)
- ``cr``: two diffusively coupled Rossler oscillators

All ODE systems are advanced with classical fixed-step RK4 so that
observations are exact subsamples of the integration grid.
"""

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .errors import InsufficientHistory, InvalidParams, NonFiniteState, UnknownSystem
from .observe import TimeSeries
from .utils import named_rng

logger = logging.getLogger(__name__)

KS_MODES = 32
SYSTEM_TAGS = ("ks", "mg", "sm", "cr")


@dataclass(frozen=True)
class OdeSystem:
    """Autonomous ODE dx/dt = rhs(x).

    Attributes:
        name: Short system name used in logs and metadata
        dimension: Length of the state vector
        rhs: Deterministic map state -> derivative
        params: Named parameters, recorded in output metadata
        dtype: float or complex
    """

    name: str
    dimension: int
    rhs: Callable[[np.ndarray], np.ndarray]
    params: Dict[str, object] = field(default_factory=dict)
    dtype: type = float


def rk4_step(rhs: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step."""
    k1 = rhs(x)
    k2 = rhs(x + (0.5 * h) * k1)
    k3 = rhs(x + (0.5 * h) * k2)
    k4 = rhs(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(
    system: OdeSystem,
    initial: np.ndarray,
    dt_int: float,
    steps: int,
    record_every: int = 1,
    progress: bool = False,
) -> np.ndarray:
    """Integrate `system` with fixed-step RK4.

    Args:
        system: ODE to integrate
        initial: Initial state (length system.dimension)
        dt_int: Step size
        steps: Number of RK4 steps
        record_every: Keep every `record_every`-th state (1 = all)
        progress: Show a tqdm bar

    Returns:
        Array of shape (steps // record_every + 1, dimension); row 0 is `initial`.
        With record_every=1 this is the full trajectory of length steps+1.

    Raises:
        InvalidParams: Bad step size, step count or initial state
        NonFiniteState: A component became NaN/Inf (shrink dt_int)
    """
    if not dt_int > 0:
        raise InvalidParams(f"dt_int must be positive, got {dt_int}")
    if steps < 1:
        raise InvalidParams(f"steps must be >= 1, got {steps}")
    if record_every < 1:
        raise InvalidParams(f"record_every must be >= 1, got {record_every}")

    x = np.array(initial, dtype=system.dtype).reshape(-1)
    if x.shape[0] != system.dimension:
        raise InvalidParams(
            f"{system.name}: initial state has length {x.shape[0]}, expected {system.dimension}"
        )
    if not np.all(np.isfinite(x)):
        raise InvalidParams(f"{system.name}: initial state is not finite")

    trajectory = np.empty((steps // record_every + 1, system.dimension), dtype=system.dtype)
    trajectory[0] = x
    rhs = system.rhs

    for i in tqdm(range(1, steps + 1), desc=f"Integrating {system.name}",
                  disable=not progress, mininterval=1.0):
        x = rk4_step(rhs, x, dt_int)
        if not np.all(np.isfinite(x)):
            recorded = (i - 1) // record_every + 1
            raise NonFiniteState(
                f"{system.name}: non-finite state at step {i} (t={i * dt_int:g}); reduce dt_int",
                step=i,
                partial=trajectory[:recorded].copy(),
            )
        if i % record_every == 0:
            trajectory[i // record_every] = x

    return trajectory


# Kuramoto-Sivashinsky (Galerkin)

def ks_rhs(a: np.ndarray, nu: float) -> np.ndarray:
    """Galerkin right-hand side of the 32-mode Kuramoto-Sivashinsky system.

    da_k/dt = (k^2 - nu k^4) a_k
              + (k/2) (sum_{m=1}^{k-1} a_m a_{k-m}
                       - sum_{m=k-32}^{-1} a_{-m} a_{k-m}
                       - sum_{m=k+1}^{32} a_m a_{m-k})

    The two outer sums are both the lag-k autocorrelation of `a`; the inner
    one is the self-convolution. The quadratic part conserves sum(a_k^2).
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n != KS_MODES:
        raise InvalidParams(f"ks_rhs expects {KS_MODES} modes, got {n}")
    k = np.arange(1, n + 1, dtype=float)
    return _ks_rhs_core(a, k * k - nu * k ** 4, 0.5 * k)


def _ks_rhs_core(a: np.ndarray, linear: np.ndarray, half_k: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    conv = np.convolve(a, a)
    inner = np.zeros(n)
    inner[1:] = conv[:n - 1]
    outer = np.zeros(n)
    outer[:n - 1] = np.correlate(a, a, mode='full')[n:]
    return linear * a + half_k * (inner - 2.0 * outer)


@dataclass(frozen=True)
class KsGalerkin:
    """Kuramoto-Sivashinsky equation truncated to 32 Fourier modes; observable a_1."""

    nu: float = 0.02150
    modes: int = KS_MODES

    default_dt_int = 1e-4
    observable_names = ("a1",)

    def __post_init__(self):
        if self.modes != KS_MODES:
            raise InvalidParams(f"KsGalerkin is fixed at {KS_MODES} modes")

    def system(self) -> OdeSystem:
        k = np.arange(1, self.modes + 1, dtype=float)
        linear = k * k - self.nu * k ** 4
        half_k = 0.5 * k
        return OdeSystem(
            name="ks",
            dimension=self.modes,
            rhs=lambda a: _ks_rhs_core(a, linear, half_k),
            params={"nu": self.nu, "modes": self.modes},
        )

    def initial_state(self, rng: np.random.Generator) -> np.ndarray:
        k = np.arange(1, self.modes + 1, dtype=float)
        return rng.normal(0.0, 0.1, self.modes) / k

    def observe(self, states: np.ndarray) -> np.ndarray:
        return states[:, :1].astype(float)

    def observable_derivative(self, states: np.ndarray) -> np.ndarray:
        rhs = self.system().rhs
        return np.array([rhs(s)[0] for s in states]).reshape(-1, 1)


# Mackey-Glass (delay equation, method of steps)

def _cubic_weights(u: float) -> Tuple[float, float, float, float]:
    """Lagrange weights on nodes 0, 1, 2, 3 evaluated at u."""
    return (
        -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
        u * (u - 2.0) * (u - 3.0) / 2.0,
        -u * (u - 1.0) * (u - 3.0) / 2.0,
        u * (u - 1.0) * (u - 2.0) / 6.0,
    )


def interpolate_history(history: np.ndarray, position: float) -> float:
    """Cubic interpolation of a uniformly sampled buffer at a fractional index.

    The 4-point stencil is shifted to stay inside the buffer, so positions
    near either end are interpolated, never extrapolated beyond the data.
    """
    length = history.shape[0]
    if length < 4:
        raise InsufficientHistory(f"history buffer needs >= 4 points, got {length}")
    if position < 0 or position > length - 1:
        raise InsufficientHistory(
            f"position {position:g} outside history buffer [0, {length - 1}]"
        )
    base = int(math.floor(position)) - 1
    base = min(max(base, 0), length - 4)
    w0, w1, w2, w3 = _cubic_weights(position - base)
    return (w0 * history[base] + w1 * history[base + 1]
            + w2 * history[base + 2] + w3 * history[base + 3])


@dataclass(frozen=True)
class MackeyGlass:
    """dx/dt = beta x(t-delay) / (1 + x(t-delay)^exponent) - gamma x(t).

    The state is positive on the attractor; |x(t-delay)| is used for the
    power so that a stray negative value does not produce a complex number.
    """

    delay: float = 2.0
    exponent: float = 9.65
    beta: float = 2.0
    gamma: float = 1.0
    history_level: float = 0.5
    history_perturbation: float = 0.05

    default_dt_int = 0.01
    observable_names = ("x",)

    def rhs(self, x, x_delayed):
        return self.beta * x_delayed / (1.0 + abs(x_delayed) ** self.exponent) - self.gamma * x

    def delay_steps(self, dt_int: float) -> float:
        return self.delay / dt_int

    def initial_history(self, rng: np.random.Generator, dt_int: float) -> np.ndarray:
        """Constant level plus uniform perturbation on [-delay, 0]."""
        length = int(math.ceil(self.delay_steps(dt_int))) + 4
        return self.history_level + self.history_perturbation * rng.uniform(-1.0, 1.0, length)

    def observe(self, states: np.ndarray) -> np.ndarray:
        return states[:, :1].astype(float)

    def observable_derivative(self, states: np.ndarray) -> np.ndarray:
        """States carry (x(t), x(t - delay)) columns."""
        return self.rhs(states[:, 0], states[:, 1]).reshape(-1, 1)


def _check_history(history: np.ndarray, delay_steps: float) -> None:
    if delay_steps < 1.0:
        raise InsufficientHistory(f"delay must span at least one step (delay/dt_int = {delay_steps:g})")
    if history.shape[0] - 1 < delay_steps or history.shape[0] < 4:
        raise InsufficientHistory(
            f"history covers {history.shape[0] - 1} steps, delay needs {delay_steps:g}"
        )


def mackey_glass_derivative(history: np.ndarray, dt_int: float,
                            system: MackeyGlass = MackeyGlass()) -> float:
    """dx/dt at the current time (last buffer entry)."""
    history = np.asarray(history, dtype=float)
    d = system.delay_steps(dt_int)
    _check_history(history, d)
    last = history.shape[0] - 1
    return system.rhs(history[-1], interpolate_history(history, last - d))


def mackey_glass_step(history: np.ndarray, dt_int: float,
                      system: MackeyGlass = MackeyGlass()) -> float:
    """Advance the Mackey-Glass state by one RK4 step.

    Args:
        history: Buffer sampled every dt_int, last entry = current state,
            spanning at least `system.delay`
        dt_int: Step size
        system: Equation parameters

    Returns:
        The next state x(t + dt_int)

    Raises:
        InsufficientHistory: Buffer shorter than the delay
    """
    history = np.asarray(history, dtype=float)
    d = system.delay_steps(dt_int)
    _check_history(history, d)
    last = history.shape[0] - 1
    p0 = last - d
    xd0 = interpolate_history(history, p0)
    xd_half = interpolate_history(history, p0 + 0.5)
    xd1 = interpolate_history(history, p0 + 1.0)
    x = history[-1]
    h = dt_int
    k1 = system.rhs(x, xd0)
    k2 = system.rhs(x + 0.5 * h * k1, xd_half)
    k3 = system.rhs(x + 0.5 * h * k2, xd_half)
    k4 = system.rhs(x + h * k3, xd1)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_mackey_glass(
    system: MackeyGlass,
    history: np.ndarray,
    dt_int: float,
    steps: int,
    progress: bool = False,
) -> np.ndarray:
    """Integrate by the method of steps.

    Returns:
        The history buffer extended by `steps` new values.
    """
    if steps < 1:
        raise InvalidParams(f"steps must be >= 1, got {steps}")
    history = np.asarray(history, dtype=float)
    _check_history(history, system.delay_steps(dt_int))
    start = history.shape[0]
    buffer = np.empty(start + steps)
    buffer[:start] = history
    for i in tqdm(range(steps), desc="Integrating mg", disable=not progress, mininterval=1.0):
        value = mackey_glass_step(buffer[:start + i], dt_int, system)
        if not math.isfinite(value):
            raise NonFiniteState(f"mg: non-finite state at step {i + 1}", step=i + 1,
                                 partial=buffer[:start + i].copy())
        buffer[start + i] = value
    return buffer


# Shell model (GOY)

def shell_couplings(model: "ShellModel") -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """c_j^(1) = k_j, c_j^(2) = -delta k_{j-1}, c_j^(3) = (delta-1) k_{j-2}, with boundary zeros."""
    n = model.shells
    j = np.arange(1, n + 1)
    k = model.k0 * 2.0 ** j
    k_prev = model.k0 * 2.0 ** (j - 1)
    k_prev2 = model.k0 * 2.0 ** (j - 2)
    c1 = k.copy()
    c2 = -model.delta * k_prev
    c3 = (model.delta - 1.0) * k_prev2
    c2[0] = 0.0
    c3[:2] = 0.0
    c1[n - 2:] = 0.0
    c2[n - 1] = 0.0
    return c1, c2, c3


def shell_rhs(u: np.ndarray, model: "ShellModel") -> np.ndarray:
    """du_j/dt = -nu k_j^2 u_j + i(c1 u*_{j+1} u*_{j+2} + c2 u*_{j+1} u*_{j-1}
    + c3 u*_{j-1} u*_{j-2}) + f delta_{j,1}; out-of-range shells are zero."""
    c1, c2, c3 = shell_couplings(model)
    return _shell_rhs_core(np.asarray(u, dtype=complex), model.wavenumbers ** 2 * model.nu,
                           c1, c2, c3, model.forcing)


def _shell_rhs_core(u, damping, c1, c2, c3, forcing):
    n = u.shape[0]
    padded = np.zeros(n + 4, dtype=complex)
    padded[2:n + 2] = np.conj(u)
    minus2 = padded[0:n]
    minus1 = padded[1:n + 1]
    plus1 = padded[3:n + 3]
    plus2 = padded[4:n + 4]
    nonlinear = c1 * plus1 * plus2 + c2 * plus1 * minus1 + c3 * minus1 * minus2
    out = -damping * u + 1j * nonlinear
    out[0] += forcing
    return out


@dataclass(frozen=True)
class ShellModel:
    """GOY shell model with k_j = k0 2^j; observable |u_{observed_shell}|."""

    shells: int = 9
    nu: float = 0.00251
    forcing: complex = 0.005 + 0.005j
    delta: float = 0.5
    k0: float = 1.0
    observed_shell: int = 3

    default_dt_int = 1e-3
    observable_names = ("abs_u3",)

    @property
    def wavenumbers(self) -> np.ndarray:
        return self.k0 * 2.0 ** np.arange(1, self.shells + 1)

    def system(self) -> OdeSystem:
        c1, c2, c3 = shell_couplings(self)
        damping = self.nu * self.wavenumbers ** 2
        forcing = complex(self.forcing)
        return OdeSystem(
            name="sm",
            dimension=self.shells,
            rhs=lambda u: _shell_rhs_core(u, damping, c1, c2, c3, forcing),
            params={"nu": self.nu, "forcing": str(complex(self.forcing)), "delta": self.delta,
                    "k0": self.k0, "shells": self.shells},
            dtype=complex,
        )

    def initial_state(self, rng: np.random.Generator) -> np.ndarray:
        scale = 0.01 / np.sqrt(self.wavenumbers)
        return scale * (rng.standard_normal(self.shells) + 1j * rng.standard_normal(self.shells))

    def observe(self, states: np.ndarray) -> np.ndarray:
        return np.abs(states[:, self.observed_shell - 1]).reshape(-1, 1)

    def observable_derivative(self, states: np.ndarray) -> np.ndarray:
        rhs = self.system().rhs
        j = self.observed_shell - 1
        out = np.empty(states.shape[0])
        for i, u in enumerate(states):
            du = rhs(u)[j]
            out[i] = (np.conj(u[j]) * du).real / abs(u[j])
        return out.reshape(-1, 1)


# Coupled Rossler

def rossler_rhs(x: np.ndarray, a: float, c: float, f: float, epsilon: float) -> np.ndarray:
    """Two Rossler oscillators coupled diffusively through x; works on (..., 6) arrays."""
    x1, y1, z1, x2, y2, z2 = (x[..., i] for i in range(6))
    return np.stack([
        -y1 - z1 + epsilon * (x2 - x1),
        x1 + a * y1,
        f + x1 * z1 - c * z1,
        -y2 - z2 + epsilon * (x1 - x2),
        x2 + a * y2,
        f + x2 * z2 - c * z2,
    ], axis=-1)


@dataclass(frozen=True)
class CoupledRossler:
    """State (x1, y1, z1, x2, y2, z2); observables x1 and x2."""

    a: float = 0.15
    c: float = 10.0
    f: float = 0.2
    epsilon: float = 0.06

    default_dt_int = 0.01
    observable_names = ("x1", "x2")

    def system(self) -> OdeSystem:
        a, c, f, eps = self.a, self.c, self.f, self.epsilon
        return OdeSystem(
            name="cr",
            dimension=6,
            rhs=lambda x: rossler_rhs(x, a, c, f, eps),
            params={"a": a, "c": c, "f": f, "epsilon": eps},
        )

    def initial_state(self, rng: np.random.Generator) -> np.ndarray:
        base = np.array([1.0, 1.0, 0.1, 1.0, 1.0, 0.1])
        return base + rng.uniform(-0.5, 0.5, 6) * np.array([1, 1, 0.1, 1, 1, 0.1])

    def observe(self, states: np.ndarray) -> np.ndarray:
        return states[:, [0, 3]].astype(float)

    def observable_derivative(self, states: np.ndarray) -> np.ndarray:
        return self.system().rhs(states)[:, [0, 3]]


_SYSTEM_CLASSES = {
    "ks": KsGalerkin,
    "mg": MackeyGlass,
    "sm": ShellModel,
    "cr": CoupledRossler,
}


def build_system(tag: str, params: Optional[Dict[str, object]] = None):
    """Instantiate a reference system by tag with optional parameter overrides."""
    try:
        cls = _SYSTEM_CLASSES[tag]
    except KeyError:
        raise UnknownSystem(f"unknown system {tag!r}; expected one of {SYSTEM_TAGS}") from None
    params = dict(params or {})
    if "forcing" in params and not isinstance(params["forcing"], complex):
        params["forcing"] = complex(str(params["forcing"]).replace(" ", ""))
    try:
        return cls(**params)
    except TypeError as e:
        raise InvalidParams(f"bad parameters for {tag!r}: {e}") from None


def system_params(system) -> Dict[str, object]:
    """Plain-typed parameter dict for metadata files."""
    out = {}
    for key, value in asdict(system).items():
        out[key] = str(value) if isinstance(value, complex) else value
    return out


@dataclass
class Simulation:
    """Observed series plus the matching full states at observation times."""

    series: TimeSeries
    states: np.ndarray
    metadata: Dict[str, object]
    system: object


def _subsample_ratio(dt: float, dt_int: float) -> int:
    ratio = int(round(dt / dt_int))
    if ratio < 1 or abs(ratio * dt_int - dt) > 1e-9 * dt:
        raise InvalidParams(f"observation step {dt} must be an integer multiple of dt_int {dt_int}")
    return ratio


def simulate(
    tag: str,
    duration: float,
    dt: float,
    dt_int: Optional[float] = None,
    transient: float = 1000.0,
    seed: int = 0,
    params: Optional[Dict[str, object]] = None,
    progress: bool = False,
) -> Simulation:
    """Generate an observed trajectory of a reference system.

    Integrates from a seeded random initial condition, discards `transient`
    time units, then records round(duration/dt) observations at t = 0, dt, ...

    Args:
        tag: One of ks, mg, sm, cr
        duration: Observation length T (N_T = round(T/dt) samples)
        dt: Observation step Δt
        dt_int: Integration step (system default if None); dt must be a multiple
        transient: Warm-up discarded before observing
        seed: Root seed (the "simulate" sub-stream is used)
        params: Physical parameter overrides
        progress: Show progress bars

    Returns:
        Simulation with observables as a TimeSeries
    """
    system = build_system(tag, params)
    dt_int = float(dt_int if dt_int is not None else system.default_dt_int)
    ratio = _subsample_ratio(dt, dt_int)
    n_obs = int(round(duration / dt))
    if n_obs < 2:
        raise InvalidParams(f"duration {duration} gives fewer than 2 observations at dt={dt}")
    if transient < 0:
        raise InvalidParams(f"transient must be >= 0, got {transient}")
    n_transient = int(round(transient / dt_int))
    rng = named_rng(seed, "simulate")

    logger.info(f"Simulating {tag}: N_T={n_obs}, dt={dt}, dt_int={dt_int}, transient={transient}")

    if isinstance(system, MackeyGlass):
        history = system.initial_history(rng, dt_int)
        initial_desc = (f"constant {system.history_level} + uniform perturbation "
                        f"+-{system.history_perturbation}")
        buffer = integrate_mackey_glass(system, history, dt_int,
                                        n_transient + (n_obs - 1) * ratio + 1, progress=progress)
        first = history.shape[0] + n_transient
        idx = first + ratio * np.arange(n_obs)
        d = system.delay_steps(dt_int)
        delayed = np.array([interpolate_history(buffer, i - d) for i in idx])
        states = np.column_stack([buffer[idx], delayed])
    else:
        ode = system.system()
        x0 = system.initial_state(rng)
        initial_desc = "seeded random state"
        if n_transient > 0:
            x0 = integrate(ode, x0, dt_int, n_transient, record_every=n_transient,
                           progress=progress)[-1]
        if n_obs > 1:
            states = integrate(ode, x0, dt_int, (n_obs - 1) * ratio, record_every=ratio,
                               progress=progress)
        else:
            states = x0.reshape(1, -1)

    values = system.observe(states)
    series = TimeSeries(dt=dt, values=values, names=tuple(system.observable_names))
    metadata = {
        "system": tag,
        "params": system_params(system),
        "dt_int": dt_int,
        "dt": dt,
        "seed": int(seed),
        "transient": float(transient),
        "n_samples": n_obs,
        "observables": list(system.observable_names),
        "initial_condition": initial_desc,
    }
    return Simulation(series=series, states=states, metadata=metadata, system=system)


def observable_derivative(simulation: Simulation) -> np.ndarray:
    """Exact time derivative of the observables at each observation time, shape (N, I)."""
    return simulation.system.observable_derivative(simulation.states)
