"""Figures of merit: storage leakage, stored spin-wave ratios, roundtrip fidelity, sweeps."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dynamics import (
    ControlSchedule,
    InputState,
    hold_evolution,
    retrieval_map,
    state_overlap,
    storage_map,
)
from .model import ProfileSpec, SubEnsembleConfig, dark_mode_vector

SWEEP_AXES = ("inhomogeneity", "m", "ramp-time", "photon-number")
_AXIS_ALIASES = {"s": "inhomogeneity", "ramp_time": "ramp-time", "T": "ramp-time", "photon_number": "photon-number", "n": "photon-number"}


def fmt(x: float) -> str:
    """Fixed 12-significant-digit rendering used in every CSV artifact."""
    return f"{float(x):.11e}"


@dataclass(frozen=True)
class LeakageReport:
    xi: float
    overlap: complex
    config: dict
    schedule: dict
    input: dict
    launch: str
    times: np.ndarray = field(default=None, repr=False)
    xi_trajectory: np.ndarray = field(default=None, repr=False)

    def summary(self) -> dict:
        return {
            "xi": self.xi,
            "overlap": [self.overlap.real, self.overlap.imag],
            "config": self.config,
            "schedule": self.schedule,
            "input": self.input,
            "launch": self.launch,
        }


def _xi(overlap: complex) -> float:
    return float(min(1.0, max(0.0, 1.0 - abs(overlap) ** 2)))


def leakage_from_stored(stored) -> LeakageReport:
    states = stored.propagator.apply(stored.launch_vector)
    refs = stored.reference_propagator.apply(stored.reference_launch_vector)
    traj = np.array(
        [
            _xi(state_overlap(stored.input, u / np.linalg.norm(u), u0 / np.linalg.norm(u0)))
            for u, u0 in zip(states, refs)
        ]
    )
    return LeakageReport(
        stored.xi,
        stored.overlap,
        stored.config.to_dict(),
        stored.schedule.to_dict(),
        stored.input.to_dict(),
        stored.launch,
        stored.propagator.times,
        traj,
    )


def leakage(
    config: SubEnsembleConfig,
    schedule: ControlSchedule,
    state: InputState,
    launch: str = "polariton",
    **kwargs,
) -> LeakageReport:
    """xi = 1 - |<psi(T)|psi0(T)>|^2 at the end of storage, plus xi(t) along the ramp."""
    return leakage_from_stored(storage_map(config, schedule, state, launch, **kwargs))


def analytic_leakage(config: SubEnsembleConfig, photons: int = 1) -> float:
    """Adiabatic-limit xi for an n-photon Fock input.

    Both media end in their f -> 0 dark modes, with C-amplitudes proportional
    to g_s sqrt(N_s)/w_s (true) and sqrt(N_s) (reference).
    """
    c = np.asarray(dark_mode_vector(config, 0.0)).real
    c0 = np.asarray(dark_mode_vector(config.homogeneous_reference(), 0.0)).real
    return 1.0 - abs(float(np.dot(c0, c))) ** (2 * photons)


@dataclass(frozen=True)
class PairRatio:
    k: int
    l: int
    measured: complex | None
    dark_prediction: float
    inverted_prediction: float
    reference_measured: complex | None

    @property
    def defined(self) -> bool:
        return self.measured is not None

    @property
    def deviation_dark(self) -> float:
        if self.measured is None:
            return math.nan
        return abs(self.measured - self.dark_prediction) / abs(self.dark_prediction)

    @property
    def deviation_inverted(self) -> float:
        if self.measured is None:
            return math.nan
        return abs(self.measured - self.inverted_prediction) / abs(self.inverted_prediction)


@dataclass(frozen=True)
class RatioReport:
    pairs: tuple[PairRatio, ...]
    config: dict
    schedule: dict

    def pair(self, k: int, l: int) -> PairRatio:
        for p in self.pairs:
            if (p.k, p.l) == (k, l):
                return p
        raise KeyError((k, l))

    def rows(self) -> list[dict]:
        return [
            {
                "k": p.k,
                "l": p.l,
                "measured": None if p.measured is None else p.measured.real,
                "dark_prediction": p.dark_prediction,
                "inverted_prediction": p.inverted_prediction,
                "deviation_dark": p.deviation_dark,
                "deviation_inverted": p.deviation_inverted,
            }
            for p in self.pairs
        ]


def stored_ratios(
    config: SubEnsembleConfig, schedule: ControlSchedule, floor: float = 1e-9, **kwargs
) -> RatioReport:
    """Measured C-amplitude ratios after storage against two closed-form predictions.

    dark_prediction  (g_k sqrt(N_k)/w_k) / (g_l sqrt(N_l)/w_l)   null vector of h
    inverted_prediction (g_k sqrt(N_k)/g_l sqrt(N_l)) * (w_k/w_l)  control ratio taken the other way up
    Sub-ensemble indices in the report are 1-based. Both predictions are kept;
    the deviations show which one the dynamics follows.
    """
    stored = storage_map(config, schedule, InputState.fock(1), **kwargs)
    m = config.m
    c = stored.vector.c_modes
    c0 = stored.reference_vector.c_modes
    gsn = config.collective_couplings
    w = np.asarray(config.control_weights)
    # a zero coupling makes a prediction infinite, which is the right answer
    with np.errstate(divide="ignore", invalid="ignore"):
        pairs = _pairs(m, c, c0, gsn, w, floor)
    return RatioReport(tuple(pairs), config.to_dict(), schedule.to_dict())


def _pairs(m, c, c0, gsn, w, floor) -> list[PairRatio]:
    pairs = []
    for k in range(m):
        for l in range(k):
            measured = None if abs(c[l]) < floor else complex(c[k] / c[l])
            ref = None if abs(c0[l]) < floor else complex(c0[k] / c0[l])
            pairs.append(
                PairRatio(
                    k + 1,
                    l + 1,
                    measured,
                    float((gsn[k] / w[k]) / (gsn[l] / w[l])),
                    float((gsn[k] / gsn[l]) * (w[k] / w[l])),
                    ref,
                )
            )
    return pairs


@dataclass(frozen=True)
class RoundtripReport:
    fidelity: float
    overlap: complex
    midpoint: LeakageReport
    photon_population: float
    released_population: float
    final_vector: np.ndarray = field(repr=False)

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity


def roundtrip_fidelity(
    config: SubEnsembleConfig,
    storage: ControlSchedule,
    hold: float = 0.0,
    retrieval: ControlSchedule | None = None,
    state: InputState | None = None,
    launch: str = "polariton",
    **kwargs,
) -> RoundtripReport:
    """|<Psi(0)|Psi(final)>|^2 after storage, hold and retrieval, with mid-point xi."""
    if storage.direction == "roundtrip":
        storage, hold, default_retrieval = storage.split()
        retrieval = retrieval or default_retrieval
    retrieval = retrieval or storage.mirrored()
    state = state or InputState.fock(1)
    stored = storage_map(config, storage, state, launch, **kwargs)
    held = hold_evolution(config, hold, stored.vector.amplitudes)
    released = retrieval_map(config, retrieval, held, **kwargs)
    u = released.vector.amplitudes
    overlap = state_overlap(state, u, stored.launch_vector)
    fidelity = float(min(1.0, abs(overlap) ** 2))
    return RoundtripReport(
        fidelity,
        overlap,
        leakage_from_stored(stored),
        released.photon_population,
        released.released_population,
        u,
    )


def linear_shape(config: SubEnsembleConfig) -> np.ndarray:
    """Zero-mean (atom-weighted) linear ramp across sub-ensembles, spanning 2."""
    m = config.m
    if m == 1:
        return np.zeros(1)
    x = np.linspace(-1.0, 1.0, m)
    n = np.asarray(config.atom_counts, dtype=float)
    return x - np.dot(n, x) / n.sum()


def with_inhomogeneity(config: SubEnsembleConfig, s: float, shape: np.ndarray | None = None) -> SubEnsembleConfig:
    """g_sigma = g0 (1 + s x_sigma) around the template's g0; control weights untouched."""
    x = linear_shape(config) if shape is None else np.asarray(shape, dtype=float)
    g = config.g0 * (1.0 + s * x)
    if np.any(g < 0):
        raise ValueError(f"inhomogeneity scale s={s} drives a probe coupling negative")
    return SubEnsembleConfig(config.atom_counts, tuple(g), config.control_weights, config.g0, config.omega0_weight)


@dataclass(frozen=True)
class SweepTable:
    parameter: str
    values: tuple
    leakage: tuple[LeakageReport, ...]
    fidelity: tuple[float, ...]

    COLUMNS = ("xi", "overlap_abs", "fidelity", "infidelity")

    def column(self, name: str) -> np.ndarray:
        if name == "xi":
            return np.array([r.xi for r in self.leakage])
        if name == "overlap_abs":
            return np.array([abs(r.overlap) for r in self.leakage])
        if name == "fidelity":
            return np.array(self.fidelity)
        if name == "infidelity":
            return 1.0 - np.array(self.fidelity)
        raise KeyError(name)

    def is_monotone(self, name: str, increasing: bool = True, strict: bool = False, atol: float = 0.0) -> bool:
        d = np.diff(self.column(name))
        if not increasing:
            d = -d
        return bool(np.all(d > atol) if strict else np.all(d >= -atol))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([self.parameter, *self.COLUMNS])
        cols = [self.column(c) for c in self.COLUMNS]
        for i, v in enumerate(self.values):
            writer.writerow([fmt(v), *(fmt(c[i]) for c in cols)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def normalize_axis(axis: str) -> str:
    axis = _AXIS_ALIASES.get(axis, axis)
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    return axis


def sweep(
    template: SubEnsembleConfig | ProfileSpec,
    axis: str,
    grid: Sequence[float],
    schedule: ControlSchedule,
    state: InputState | None = None,
    launch: str = "polariton",
    m: int = 4,
    workers: int = 1,
    **kwargs,
) -> SweepTable:
    """Leakage and roundtrip fidelity along one parameter axis.

    ``template`` is a config, or a :class:`ProfileSpec` (required for the m
    axis; discretized at ``m`` bins for the others). Profile-derived configs are
    normalized to g0 sqrt(N) = 1. Rows come back in grid order whatever the
    worker count.
    """
    axis = normalize_axis(axis)
    grid = tuple(grid)
    if not grid:
        raise ValueError("sweep grid is empty")
    if axis == "m" and not isinstance(template, ProfileSpec):
        raise ValueError("the m axis needs a ProfileSpec template (a continuous profile to re-discretize)")
    state = state or InputState.fock(1)
    storage = schedule.split()[0] if schedule.direction == "roundtrip" else replace(schedule, direction="storage")
    hold = schedule.hold

    def base() -> SubEnsembleConfig:
        if isinstance(template, ProfileSpec):
            return template.discretize(m).normalized()
        return template

    def point(value):
        config, sched, inp = None, storage, state
        if axis == "inhomogeneity":
            config = with_inhomogeneity(base(), float(value))
        elif axis == "m":
            if int(value) != value or value < 1:
                raise ValueError(f"m grid values must be positive integers, got {value}")
            config = template.discretize(int(value)).normalized()
        elif axis == "ramp-time":
            config, sched = base(), replace(storage, ramp_time=float(value))
        else:
            if int(value) != value or value < 0:
                raise ValueError(f"photon numbers must be nonnegative integers, got {value}")
            config, inp = base(), InputState.fock(int(value))
        rep = roundtrip_fidelity(config, sched, hold, None, inp, launch, **kwargs)
        return rep.midpoint, rep.fidelity

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(point, grid))
    else:
        results = [point(v) for v in grid]
    return SweepTable(axis, grid, tuple(r[0] for r in results), tuple(r[1] for r in results))


def random_config(
    rng: np.random.Generator,
    m_range: tuple[int, int] = (1, 4),
    s_max: float = 0.5,
    control_spread: float = 0.0,
    max_atoms: int = 1000,
) -> SubEnsembleConfig:
    """Random inhomogeneous config in g0 sqrt(N) = 1 units.

    Probe couplings g0 (1 + s x) with s uniform in [0, s_max] and x uniform in
    [-1, 1]; control weights 1 + control_spread * uniform(-1, 1).
    """
    m = int(rng.integers(m_range[0], m_range[1] + 1))
    counts = rng.integers(1, max_atoms + 1, m)
    s = rng.uniform(0.0, s_max)
    g = 1.0 + s * rng.uniform(-1.0, 1.0, m)
    w = 1.0 + control_spread * rng.uniform(-1.0, 1.0, m)
    return SubEnsembleConfig(tuple(int(n) for n in counts), tuple(g), tuple(w)).normalized()
