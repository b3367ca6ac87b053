"""Time evolution of the 2m+1 bosonic modes under a control-field schedule.

The generator is always of the form h(t) = h_static + f(t) * h_drive, which the
stepper exploits: the fourth-order Magnus step needs only [h_static, h_drive].
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .model import ModeVector, SubEnsembleConfig, dark_mode_vector, hamiltonian_blocks

log = logging.getLogger(__name__)

SHAPES = ("raised-cosine", "linear", "tanh")
DIRECTIONS = ("storage", "retrieval", "roundtrip")
_TANH_STEEPNESS = 8.0
_GAUSS = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)
_MAX_CHUNK_ELEMENTS = 2**22


class PropagationError(RuntimeError):
    """Step refinement did not converge within the step budget."""

    def __init__(self, message: str, defect: float, change: float, steps: int):
        super().__init__(f"{message} (unitarity defect {defect:.3e}, last change {change:.3e}, steps {steps})")
        self.defect = defect
        self.change = change
        self.steps = steps


@dataclass(frozen=True)
class ControlSchedule:
    """Shared control envelope f(t); Omega_sigma(t) = w_sigma * f(t).

    A storage ramp runs from f = peak down to 0 over ``ramp_time``; retrieval is
    its mirror image. A roundtrip is storage, a hold at f = 0 lasting ``hold``,
    then retrieval.
    """

    direction: str = "storage"
    ramp_time: float = 200.0
    peak: float = 20.0
    shape: str = "raised-cosine"
    hold: float = 0.0

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}; expected one of {DIRECTIONS}")
        if self.shape not in SHAPES:
            raise ValueError(f"unknown envelope shape {self.shape!r}; expected one of {SHAPES}")
        if not (self.ramp_time > 0 and math.isfinite(self.ramp_time)):
            raise ValueError(f"ramp_time must be positive, got {self.ramp_time}")
        if not (self.peak > 0 and math.isfinite(self.peak)):
            raise ValueError(f"peak must be positive, got {self.peak}")
        if not (self.hold >= 0 and math.isfinite(self.hold)):
            raise ValueError(f"hold must be >= 0, got {self.hold}")

    def storage_ramp(self, s):
        """Envelope of a storage ramp at local time s in [0, ramp_time]."""
        x = np.clip(np.asarray(s, dtype=float) / self.ramp_time, 0.0, 1.0)
        if self.shape == "raised-cosine":
            return self.peak * np.cos(0.5 * np.pi * x) ** 2
        if self.shape == "linear":
            return self.peak * (1.0 - x)
        k = _TANH_STEEPNESS
        return self.peak * (np.tanh(k * (0.5 - x)) + np.tanh(0.5 * k)) / (2.0 * np.tanh(0.5 * k))

    def segments(self) -> list[tuple[str, float, float, Callable | None]]:
        """(kind, start time, duration, local envelope) for each piece."""
        T = self.ramp_time
        down = self.storage_ramp

        def up(s):
            return self.storage_ramp(T - np.asarray(s, dtype=float))

        if self.direction == "storage":
            return [("ramp", 0.0, T, down)]
        if self.direction == "retrieval":
            return [("ramp", 0.0, T, up)]
        segs = [("ramp", 0.0, T, down)]
        if self.hold > 0:
            segs.append(("hold", T, self.hold, None))
        segs.append(("ramp", T + self.hold, T, up))
        return segs

    @property
    def duration(self) -> float:
        return self.ramp_time * (1 if self.direction != "roundtrip" else 2) + (
            self.hold if self.direction == "roundtrip" else 0.0
        )

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for kind, t0, dur, fn in self.segments():
            if kind == "ramp":
                mask = (t >= t0) & (t <= t0 + dur)
                out = np.where(mask, fn(t - t0), out)
        return out

    @property
    def f_start(self) -> float:
        return float(self.envelope(0.0))

    @property
    def f_end(self) -> float:
        return float(self.envelope(self.duration))

    def mirrored(self) -> "ControlSchedule":
        flip = {"storage": "retrieval", "retrieval": "storage", "roundtrip": "roundtrip"}
        return replace(self, direction=flip[self.direction])

    def split(self) -> tuple["ControlSchedule", float, "ControlSchedule"]:
        """(storage, hold duration, retrieval) pieces of a roundtrip."""
        store = replace(self, direction="storage", hold=0.0)
        return store, self.hold, replace(store, direction="retrieval")

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "T": self.ramp_time,
            "peak": self.peak,
            "shape": self.shape,
            "hold": self.hold,
        }


@dataclass(frozen=True)
class Propagator:
    """Sampled time-ordered evolution U(t), U(0) = I."""

    times: np.ndarray
    matrices: np.ndarray
    unitarity_defect: float
    steps: int
    substeps: int = 1

    @property
    def final(self) -> np.ndarray:
        return self.matrices[-1]

    def apply(self, vector) -> np.ndarray:
        """States U(t) v at every sampled time, shape (len(times), dim)."""
        return self.matrices @ np.asarray(vector, dtype=complex)


def _ordered_product(us: np.ndarray) -> np.ndarray:
    """Time-ordered product over axis -3: u[n-1] @ ... @ u[0]."""
    eye = np.eye(us.shape[-1], dtype=us.dtype)
    while us.shape[-3] > 1:
        if us.shape[-3] % 2:
            pad = np.broadcast_to(eye, us.shape[:-3] + (1,) + eye.shape)
            us = np.concatenate([us, pad], axis=-3)
        us = us[..., 1::2, :, :] @ us[..., 0::2, :, :]
    return us[..., 0, :, :]


def _block_unitaries(h_static, h_drive, commutator, fn, t_start, dt, n_blocks, substeps):
    """Products of `substeps` Magnus-4 steps for each of `n_blocks` blocks."""
    d = h_static.shape[0]
    k = np.arange(n_blocks * substeps)
    t = t_start + k * dt
    f1 = fn(t + _GAUSS[0] * dt)
    f2 = fn(t + _GAUSS[1] * dt)
    gen = 0.5 * dt * (2.0 * h_static + (f1 + f2)[:, None, None] * h_drive)
    gen = gen - 1j * (math.sqrt(3) / 12.0) * dt**2 * (f1 - f2)[:, None, None] * commutator
    lam, vec = np.linalg.eigh(gen)
    steps = (vec * np.exp(-1j * lam)[:, None, :]) @ vec.conj().swapaxes(-1, -2)
    return _ordered_product(steps.reshape(n_blocks, substeps, d, d))


def _hold_unitaries(h_static, times):
    lam, vec = np.linalg.eigh(h_static)
    phases = np.exp(-1j * np.outer(times, lam))
    return (vec[None] * phases[:, None, :]) @ vec.conj().T[None]


def _propagate_fixed(h_static, h_drive, schedule, samples, substeps):
    """Single pass at a fixed resolution; returns (times, matrices)."""
    h_static = np.asarray(h_static)
    h_drive = np.asarray(h_drive)
    d = h_static.shape[0]
    commutator = h_static @ h_drive - h_drive @ h_static
    current = np.eye(d, dtype=complex)
    times = [0.0]
    mats = [current]
    blocks_per_chunk = max(1, _MAX_CHUNK_ELEMENTS // (substeps * d * d))
    for kind, t0, dur, fn in schedule.segments():
        if kind == "hold":
            local = dur * np.arange(1, samples + 1) / samples
            for tau, u in zip(local, _hold_unitaries(h_static, local)):
                times.append(t0 + tau)
                mats.append(u @ current)
            current = mats[-1]
            continue
        dt = dur / (samples * substeps)
        done = 0
        while done < samples:
            nb = min(blocks_per_chunk, samples - done)
            blocks = _block_unitaries(
                h_static, h_drive, commutator, fn, done * substeps * dt, dt, nb, substeps
            )
            for j in range(nb):
                current = blocks[j] @ current
                times.append(t0 + dur * (done + j + 1) / samples)
                mats.append(current)
            done += nb
    return np.asarray(times), np.asarray(mats)


def _expm_action(gen: np.ndarray, v: np.ndarray) -> np.ndarray:
    """exp(-i gen) v by Taylor series; gen is one small Magnus step, so terms shrink fast."""
    out = v.copy()
    term = v
    for n in range(1, 60):
        term = (-1j / n) * (gen @ term)
        out = out + term
        if np.linalg.norm(term) < 1e-17 * np.linalg.norm(out):
            break
    return out


def propagate_state(h_static, h_drive, schedule: ControlSchedule, psi0, samples: int = 100, substeps: int = 1):
    """State-vector version of :func:`propagate` at fixed resolution, for large generators.

    Same Magnus-4 step generator, applied to a single vector; returns
    (times, states) at the sample points.
    """
    h_static = np.asarray(h_static, dtype=complex)
    h_drive = np.asarray(h_drive, dtype=complex)
    commutator = h_static @ h_drive - h_drive @ h_static
    psi = np.asarray(psi0, dtype=complex).copy()
    times, states = [0.0], [psi.copy()]
    c3 = math.sqrt(3) / 12.0
    for kind, t0, dur, fn in schedule.segments():
        if kind == "hold":
            local = dur * np.arange(1, samples + 1) / samples
            lam, vec = np.linalg.eigh(h_static)
            coeff = vec.conj().T @ psi
            for tau in local:
                times.append(t0 + tau)
                states.append(vec @ (np.exp(-1j * lam * tau) * coeff))
            psi = states[-1].copy()
            continue
        n = samples * substeps
        dt = dur / n
        t = np.arange(n) * dt
        f1 = fn(t + _GAUSS[0] * dt)
        f2 = fn(t + _GAUSS[1] * dt)
        for i in range(n):
            gen = dt * h_static + (0.5 * dt * (f1[i] + f2[i])) * h_drive
            gen = gen - (1j * c3 * dt**2 * (f1[i] - f2[i])) * commutator
            psi = _expm_action(gen, psi)
            if (i + 1) % substeps == 0:
                times.append(t0 + dur * (i + 1) / n)
                states.append(psi.copy())
    return np.asarray(times), np.asarray(states)


def _defect(mats: np.ndarray) -> float:
    eye = np.eye(mats.shape[-1])
    gram = mats.conj().swapaxes(-1, -2) @ mats
    return float(np.max(np.linalg.norm(gram - eye, axis=(-2, -1))))


def propagate(
    h_static,
    h_drive,
    schedule: ControlSchedule,
    steps: int = 64,
    samples: int = 100,
    tol: float = 1e-9,
    max_steps: int = 2**21,
    substeps: int | None = None,
) -> Propagator:
    """Solve i dU/dt = (h_static + f(t) h_drive) U with fourth-order Magnus steps.

    Each ramp segment is cut into ``samples`` blocks of ``substeps`` steps. If
    ``substeps`` is None, the resolution starts at ``steps`` per ramp and is
    doubled until the final propagator moves by less than ``tol`` (max column
    norm) and the unitarity defect is at most 1e-10. Hold segments are exact.
    """
    if steps < 10:
        raise ValueError(f"steps must be >= 10, got {steps}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if substeps is not None:
        times, mats = _propagate_fixed(h_static, h_drive, schedule, samples, substeps)
        return Propagator(times, mats, _defect(mats), samples * substeps, substeps)
    k = max(1, math.ceil(steps / samples))
    times, mats = _propagate_fixed(h_static, h_drive, schedule, samples, k)
    change = math.inf
    while True:
        k2 = 2 * k
        if samples * k2 > max_steps:
            raise PropagationError("propagation not converged", _defect(mats), change, samples * k)
        times, mats2 = _propagate_fixed(h_static, h_drive, schedule, samples, k2)
        change = float(np.max(np.linalg.norm(mats2[-1] - mats[-1], axis=0)))
        defect = _defect(mats2)
        mats, k = mats2, k2
        if change < tol and defect <= 1e-10:
            log.debug("converged at %d steps per ramp (change %.2e)", samples * k, change)
            return Propagator(times, mats, defect, samples * k, k)


def evolve_modes(
    config: SubEnsembleConfig,
    schedule: ControlSchedule,
    steps: int = 64,
    use_homogeneous: bool = False,
    samples: int = 100,
    tol: float = 1e-9,
    max_steps: int = 2**21,
) -> Propagator:
    """Propagator of the bosonic modes; with ``use_homogeneous`` the generator is h0.

    Results are cached per (config, schedule, numerics). A retrieval ramp is
    obtained from its mirror-image storage ramp: h(t) is real symmetric, so
    reversing the envelope transposes the propagator, U_ret(t) = (U(T) U(T - t)^dag)^T.
    The same identity holds step by step for the Magnus-4 discretization.
    """
    if schedule.direction == "retrieval":
        store = _evolve_cached(config, schedule.mirrored(), steps, use_homogeneous, samples, tol, max_steps)
        return _time_reversed(store)
    return _evolve_cached(config, schedule, steps, use_homogeneous, samples, tol, max_steps)


@functools.lru_cache(maxsize=128)
def _evolve_cached(config, schedule, steps, use_homogeneous, samples, tol, max_steps) -> Propagator:
    h_static, h_drive = hamiltonian_blocks(config, homogeneous=use_homogeneous)
    prop = propagate(h_static, h_drive, schedule, steps, samples, tol, max_steps)
    # shared between callers through the cache
    prop.times.setflags(write=False)
    prop.matrices.setflags(write=False)
    return prop


def clear_cache() -> None:
    """Drop cached ramp propagators (for timing runs from a cold start)."""
    _evolve_cached.cache_clear()


def _time_reversed(prop: Propagator) -> Propagator:
    mats = prop.matrices
    final = mats[-1]
    rev = (final[None] @ mats[::-1].conj().swapaxes(-1, -2)).swapaxes(-1, -2)
    rev[0] = np.eye(final.shape[0])
    return Propagator(prop.times.copy(), rev, _defect(rev), prop.steps, prop.substeps)


def hold_evolution(config: SubEnsembleConfig, duration: float, vector) -> np.ndarray:
    """Exact evolution at f = 0 for ``duration``; a pure C-mode state is left unchanged."""
    v = np.asarray(vector, dtype=complex)
    if v.shape != (config.dim,):
        raise ValueError(f"vector of length {v.size} does not match config dimension {config.dim}")
    if duration == 0:
        return v.copy()
    h_static, _ = hamiltonian_blocks(config)
    return _hold_unitaries(h_static, np.array([duration]))[0] @ v


@dataclass(frozen=True)
class InputState:
    """Probe-field input: a Fock superposition sum_n C_n |n> or a coherent state."""

    kind: str
    fock_coefficients: tuple[complex, ...] = ()
    alpha: complex = 0j

    def __post_init__(self):
        if self.kind == "fock":
            c = np.asarray(self.fock_coefficients, dtype=complex)
            if c.size == 0:
                raise ValueError("fock input needs at least one coefficient")
            if abs(np.vdot(c, c).real - 1.0) > 1e-12:
                raise ValueError(f"fock coefficients not normalized: sum |C_n|^2 = {np.vdot(c, c).real}")
            object.__setattr__(self, "fock_coefficients", tuple(complex(x) for x in c))
        elif self.kind == "coherent":
            object.__setattr__(self, "alpha", complex(self.alpha))
        else:
            raise ValueError(f"unknown input kind {self.kind!r}")

    @classmethod
    def fock(cls, n: int) -> "InputState":
        coeffs = [0.0] * n + [1.0]
        return cls("fock", tuple(coeffs))

    @classmethod
    def superposition(cls, coefficients: Sequence[complex]) -> "InputState":
        return cls("fock", tuple(coefficients))

    @classmethod
    def coherent(cls, alpha: complex) -> "InputState":
        return cls("coherent", alpha=alpha)

    def to_dict(self) -> dict:
        if self.kind == "coherent":
            return {"kind": "coherent", "alpha": [self.alpha.real, self.alpha.imag]}
        return {"kind": "fock", "fock_coefficients": [[c.real, c.imag] for c in self.fock_coefficients]}


def _as_unit_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=complex)
    norm = np.linalg.norm(arr)
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"{name} is not normalized (norm {norm:.15g})")
    return arr


def overlap_fock(coefficients: Sequence[complex], u, u0) -> complex:
    """<psi0|psi> for sum_n C_n |n> launched into modes that evolve to u0 and u.

    Number-conserving quadratic dynamics maps (a^dag)^n onto (sum_k u_k b_k^dag)^n,
    so the n-photon overlap is (u0^dag u)^n and different n never interfere.
    """
    c = np.asarray(coefficients, dtype=complex)
    if abs(np.vdot(c, c).real - 1.0) > 1e-10:
        raise ValueError("fock coefficients are not normalized")
    u = _as_unit_vector(u, "u")
    u0 = _as_unit_vector(u0, "u0")
    if u.shape != u0.shape:
        raise ValueError(f"mode vectors differ in length: {u.size} vs {u0.size}")
    z = np.vdot(u0, u)
    weights = np.abs(c) ** 2
    return complex(np.sum(weights * z ** np.arange(c.size)))


def coherent_overlap(alpha_bar, alpha) -> complex:
    """<alpha|alpha_bar> for multimode coherent states with amplitude vectors."""
    alpha_bar = np.asarray(alpha_bar, dtype=complex)
    alpha = np.asarray(alpha, dtype=complex)
    diff = alpha_bar - alpha
    return complex(np.exp(-0.5 * np.vdot(diff, diff).real + 1j * np.vdot(alpha, alpha_bar).imag))


def state_overlap(state: InputState, u, u0) -> complex:
    """Overlap of the input launched along u0 with the same input launched along u."""
    if state.kind == "coherent":
        u = _as_unit_vector(u, "u")
        u0 = _as_unit_vector(u0, "u0")
        return coherent_overlap(state.alpha * u, state.alpha * u0)
    return overlap_fock(state.fock_coefficients, u, u0)


def launch_vector(config: SubEnsembleConfig, f_start: float, launch: str = "polariton") -> np.ndarray:
    """Mode that receives the input photons at t = 0.

    ``polariton`` loads the dark polariton of the given medium at the initial
    envelope value (it tends to the bare photon as f_start -> infinity);
    ``photon`` loads the bare photon mode a.
    """
    if launch == "polariton":
        return np.asarray(dark_mode_vector(config, f_start), dtype=complex)
    if launch == "photon":
        v = np.zeros(config.dim, dtype=complex)
        v[0] = 1.0
        return v
    raise ValueError(f"unknown launch {launch!r}; expected 'polariton' or 'photon'")


@dataclass(frozen=True)
class StoredState:
    """Outcome of a storage ramp for the true (h) and reference (h0) media."""

    config: SubEnsembleConfig
    schedule: ControlSchedule
    input: InputState
    launch: str
    launch_vector: np.ndarray
    reference_launch_vector: np.ndarray
    vector: ModeVector
    reference_vector: ModeVector
    overlap: complex
    propagator: Propagator = field(repr=False)
    reference_propagator: Propagator = field(repr=False)

    @property
    def xi(self) -> float:
        return float(min(1.0, max(0.0, 1.0 - abs(self.overlap) ** 2)))

    @property
    def coherent_amplitudes(self) -> np.ndarray:
        """Per-mode coherent amplitudes alpha * u of the true stored state."""
        return self.input.alpha * self.vector.amplitudes

    @property
    def reference_coherent_amplitudes(self) -> np.ndarray:
        return self.input.alpha * self.reference_vector.amplitudes


def storage_map(
    config: SubEnsembleConfig,
    schedule: ControlSchedule,
    state: InputState,
    launch: str = "polariton",
    steps: int = 64,
    samples: int = 100,
    tol: float = 1e-9,
) -> StoredState:
    """Store ``state`` with both the true generator h and the reference h0.

    Each medium receives the input in its own launch mode (see
    :func:`launch_vector`). For a homogeneous config the two runs are
    bit-identical.
    """
    if schedule.direction != "storage":
        raise ValueError(f"storage_map needs a storage schedule, got {schedule.direction!r}")
    reference = config.homogeneous_reference()
    p = launch_vector(config, schedule.f_start, launch)
    p0 = launch_vector(reference, schedule.f_start, launch)
    prop = evolve_modes(config, schedule, steps, False, samples, tol)
    prop0 = evolve_modes(config, schedule, steps, True, samples, tol)
    u = prop.final @ p
    u0 = prop0.final @ p0
    # renormalize away the ~1e-14 drift so the exact overlap formulas apply
    u = u / np.linalg.norm(u)
    u0 = u0 / np.linalg.norm(u0)
    return StoredState(
        config,
        schedule,
        state,
        launch,
        p,
        p0,
        ModeVector(u, normalized=True),
        ModeVector(u0, normalized=True),
        state_overlap(state, u, u0),
        prop,
        prop0,
    )


@dataclass(frozen=True)
class RetrievedState:
    vector: ModeVector
    photon_population: float
    released_population: float
    coherent_amplitudes: np.ndarray
    propagator: Propagator = field(repr=False)

    @property
    def photon_amplitude(self) -> complex:
        return self.vector.photon


def retrieval_map(
    config: SubEnsembleConfig,
    schedule: ControlSchedule,
    stored,
    steps: int = 64,
    samples: int = 100,
    tol: float = 1e-9,
    alpha: complex = 1.0,
) -> RetrievedState:
    """Release a stored single-excitation vector by ramping the control back on.

    ``stored`` is a :class:`StoredState`, a :class:`ModeVector` or an array.
    ``photon_population`` is the bare |a|^2 weight; ``released_population`` is
    the weight in the dark polariton at the final envelope value, i.e. the
    channel that leaves the medium as the retrieved photon.
    """
    if schedule.direction != "retrieval":
        raise ValueError(f"retrieval_map needs a retrieval schedule, got {schedule.direction!r}")
    if isinstance(stored, StoredState):
        alpha = stored.input.alpha if stored.input.kind == "coherent" else alpha
        v = stored.vector.amplitudes
    else:
        v = np.asarray(stored, dtype=complex)
    if v.shape != (config.dim,):
        raise ValueError(f"stored vector of length {v.size} does not match config dimension {config.dim}")
    prop = evolve_modes(config, schedule, steps, False, samples, tol)
    out = prop.final @ v
    norm = np.linalg.norm(out)
    out_unit = out / norm if norm > 0 else out
    dark = np.asarray(dark_mode_vector(config, schedule.f_end))
    return RetrievedState(
        ModeVector(out_unit, normalized=norm > 0),
        float(abs(out[0]) ** 2),
        float(abs(np.vdot(dark, out_unit)) ** 2) * float(min(norm, 1.0)) ** 2,
        alpha * out,
        prop,
    )
