"""Sub-ensemble description of an inhomogeneously coupled Lambda-type ensemble.

Mode layout used throughout the package (single-excitation amplitudes)::

    index 0            photon mode a
    indices 1..m       spin waves A_sigma   (|b> <-> |a> coherence)
    indices m+1..2m    spin waves C_sigma   (|b> <-> |c> coherence)

Frequencies are in units where the homogeneous reference obeys g0*sqrt(N) = 1
whenever a config has been passed through :meth:`SubEnsembleConfig.normalized`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DegenerateCouplingError(ValueError):
    pass


def _uniform_or_weighted_mean(values: np.ndarray, weights: np.ndarray) -> float:
    # all-equal inputs must reproduce the value bit-exactly so that h1 == 0
    if np.all(values == values[0]):
        return float(values[0])
    return float(np.dot(weights, values) / weights.sum())


@dataclass(frozen=True)
class SubEnsembleConfig:
    """Discretized system: m homogeneous sub-ensembles.

    ``g0`` and ``omega0_weight`` are the homogeneous reference couplings that
    define the split h = h0 + h1. When omitted they default to the
    atom-number-weighted means of the probe couplings and control weights.
    """

    atom_counts: tuple[int, ...]
    probe_couplings: tuple[float, ...]
    control_weights: tuple[float, ...]
    g0: float = None  # type: ignore[assignment]
    omega0_weight: float = None  # type: ignore[assignment]
    total_atoms: int = field(init=False)

    def __post_init__(self):
        counts = tuple(int(n) for n in self.atom_counts)
        g = tuple(float(x) for x in self.probe_couplings)
        w = tuple(float(x) for x in self.control_weights)
        m = len(counts)
        if m < 1:
            raise ValueError("need at least one sub-ensemble")
        if len(g) != m or len(w) != m:
            raise ValueError(
                f"length mismatch: {m} atom counts, {len(g)} probe couplings, "
                f"{len(w)} control weights"
            )
        if any(n < 1 for n in counts):
            raise ValueError("all atom counts must be >= 1")
        if any(not math.isfinite(x) or x < 0 for x in g):
            raise ValueError("probe couplings must be finite and nonnegative")
        if not any(x > 0 for x in g):
            raise ValueError("at least one probe coupling must be positive")
        if any(not math.isfinite(x) or x <= 0 for x in w):
            raise ValueError("control weights must be finite and positive")
        n_arr = np.asarray(counts, dtype=float)
        g0 = self.g0 if self.g0 is not None else _uniform_or_weighted_mean(np.asarray(g), n_arr)
        w0 = (
            self.omega0_weight
            if self.omega0_weight is not None
            else _uniform_or_weighted_mean(np.asarray(w), n_arr)
        )
        object.__setattr__(self, "atom_counts", counts)
        object.__setattr__(self, "probe_couplings", g)
        object.__setattr__(self, "control_weights", w)
        object.__setattr__(self, "g0", float(g0))
        object.__setattr__(self, "omega0_weight", float(w0))
        object.__setattr__(self, "total_atoms", int(sum(counts)))

    @property
    def m(self) -> int:
        return len(self.atom_counts)

    @property
    def dim(self) -> int:
        return 2 * self.m + 1

    @property
    def deltas(self) -> np.ndarray:
        return np.asarray(self.probe_couplings) - self.g0

    @property
    def lambdas_weight(self) -> np.ndarray:
        return np.asarray(self.control_weights) - self.omega0_weight

    @property
    def collective_couplings(self) -> np.ndarray:
        """g_sigma * sqrt(N_sigma) for every sub-ensemble."""
        return np.asarray(self.probe_couplings) * np.sqrt(np.asarray(self.atom_counts, dtype=float))

    @property
    def is_homogeneous(self) -> bool:
        return bool(np.all(self.deltas == 0) and np.all(self.lambdas_weight == 0))

    def homogeneous_reference(self) -> "SubEnsembleConfig":
        m = self.m
        return SubEnsembleConfig(
            self.atom_counts, (self.g0,) * m, (self.omega0_weight,) * m, self.g0, self.omega0_weight
        )

    def normalized(self) -> "SubEnsembleConfig":
        """Rescale the probe couplings so that g0*sqrt(N) = 1."""
        scale = 1.0 / (self.g0 * math.sqrt(self.total_atoms))
        return SubEnsembleConfig(
            self.atom_counts,
            tuple(x * scale for x in self.probe_couplings),
            self.control_weights,
            self.g0 * scale,
            self.omega0_weight,
        )

    def scaled(self, factor: float) -> "SubEnsembleConfig":
        """Multiply every probe coupling and control weight by ``factor``."""
        return SubEnsembleConfig(
            self.atom_counts,
            tuple(x * factor for x in self.probe_couplings),
            tuple(x * factor for x in self.control_weights),
            self.g0 * factor,
            self.omega0_weight * factor,
        )

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "atom_counts": list(self.atom_counts),
            "probe_couplings": list(self.probe_couplings),
            "control_weights": list(self.control_weights),
            "g0": self.g0,
            "omega0_weight": self.omega0_weight,
        }

    @classmethod
    def from_collective(
        cls,
        collective: Sequence[float],
        control_weights: Sequence[float] | None = None,
        atom_counts: Sequence[int] | None = None,
        normalize: bool = True,
    ) -> "SubEnsembleConfig":
        """Build a config from the products g_sigma*sqrt(N_sigma).

        Handy for the standard test cases, e.g. ``from_collective([1, 1.2])``.
        """
        collective = np.asarray(collective, dtype=float)
        m = len(collective)
        if atom_counts is None:
            atom_counts = [1000] * m
        if control_weights is None:
            control_weights = [1.0] * m
        g = collective / np.sqrt(np.asarray(atom_counts, dtype=float))
        config = cls(tuple(atom_counts), tuple(g), tuple(control_weights))
        return config.normalized() if normalize else config


@dataclass(frozen=True)
class ModeVector:
    amplitudes: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.size % 2 != 1:
            raise ValueError(f"mode vector must have odd length 2m+1, got shape {amps.shape}")
        if self.normalized and abs(np.linalg.norm(amps) - 1.0) > 1e-12:
            raise ValueError("vector flagged normalized but its norm differs from 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def m(self) -> int:
        return (self.amplitudes.size - 1) // 2

    @property
    def photon(self) -> complex:
        return complex(self.amplitudes[0])

    @property
    def a_modes(self) -> np.ndarray:
        return self.amplitudes[1 : self.m + 1]

    @property
    def c_modes(self) -> np.ndarray:
        return self.amplitudes[self.m + 1 :]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)


@dataclass(frozen=True)
class MixingAngles:
    theta: float
    phis: tuple[float, ...]


@dataclass(frozen=True)
class ProfileSpec:
    """Sampled continuous coupling profiles, discretized on demand."""

    g_samples: tuple[tuple[float, float], ...]
    w_samples: tuple[tuple[float, float], ...]
    total_atoms: int

    def discretize(self, m: int) -> SubEnsembleConfig:
        return discretize_profiles(self.g_samples, self.w_samples, self.total_atoms, m)


def _bin_means(samples: np.ndarray, lo: float, hi: float, m: int, what: str) -> np.ndarray:
    z, val = samples[:, 0], samples[:, 1]
    width = (hi - lo) / m
    idx = np.clip(np.floor((z - lo) / width).astype(int), 0, m - 1)
    counts = np.bincount(idx, minlength=m)
    if np.any(counts == 0):
        empty = np.flatnonzero(counts == 0).tolist()
        raise ValueError(f"profile resolution below bin count: {what} profile has empty bins {empty}")
    return np.bincount(idx, weights=val, minlength=m) / counts


def discretize_profiles(
    g_samples: Sequence[tuple[float, float]],
    w_samples: Sequence[tuple[float, float]],
    total_atoms: int,
    m: int,
    interval: tuple[float, float] | None = None,
) -> SubEnsembleConfig:
    """Coarse-grain sampled coupling profiles into m equal-length bins.

    Atoms are assumed uniformly distributed, so each bin gets total_atoms // m
    atoms and the remainder is handed out one per bin from the left. Bin
    couplings are plain means of the samples falling in each bin (bins are
    half-open except the last).
    """
    if isinstance(total_atoms, bool) or int(total_atoms) != total_atoms or total_atoms <= 0:
        raise ValueError(f"total_atoms must be a positive integer, got {total_atoms!r}")
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")
    if total_atoms < m:
        raise ValueError(f"total_atoms={total_atoms} is smaller than the bin count m={m}")
    gs = np.asarray(g_samples, dtype=float).reshape(-1, 2)
    ws = np.asarray(w_samples, dtype=float).reshape(-1, 2)
    if len(gs) < m or len(ws) < m:
        raise ValueError(
            f"profile resolution below bin count: {len(gs)} probe / {len(ws)} control samples for m={m}"
        )
    if interval is None:
        lo, hi = float(gs[:, 0].min()), float(gs[:, 0].max())
        wlo, whi = float(ws[:, 0].min()), float(ws[:, 0].max())
        if not (math.isclose(lo, wlo, abs_tol=1e-12) and math.isclose(hi, whi, abs_tol=1e-12)):
            raise ValueError(
                f"profiles do not share a spatial interval: [{lo}, {hi}] vs [{wlo}, {whi}]"
            )
    else:
        lo, hi = map(float, interval)
    if not hi > lo:
        if m == 1:
            hi = lo + 1.0
        else:
            raise ValueError("profile samples span a zero-length interval")
    g = _bin_means(gs, lo, hi, m, "probe")
    w = _bin_means(ws, lo, hi, m, "control")
    base, rem = divmod(int(total_atoms), m)
    counts = tuple(base + (1 if k < rem else 0) for k in range(m))
    return SubEnsembleConfig(counts, tuple(g), tuple(w))


def _ratios(config: SubEnsembleConfig) -> np.ndarray:
    # g_k sqrt(N_k) / w_k: the envelope cancels in every dark-mode ratio
    return config.collective_couplings / np.asarray(config.control_weights)


def mixing_angles(config: SubEnsembleConfig, f: float) -> MixingAngles:
    """Mixing angles of the dark mode at control envelope value ``f``.

    With r_k = g_k sqrt(N_k) / Omega_k the defining products collapse to
    tan(theta) = |r| and tan(phi_j) = r_{j+1} / |r_{1..j}|. Since Omega_k =
    w_k f, the phis do not depend on f at all, which also fixes their f -> 0
    limit. theta(0) is pi/2 exactly.
    """
    if f < 0 or math.isnan(f):
        raise ValueError(f"control envelope must be >= 0, got {f}")
    r = _ratios(config)
    rmax = r.max()
    if rmax == 0:
        if f == 0:
            raise DegenerateCouplingError("degenerate: no coupling")
        return MixingAngles(0.0, (math.pi / 2,) * (config.m - 1))
    rs = r / rmax
    theta = math.atan2(rmax * math.sqrt(float(np.dot(rs, rs))), f)
    partial = np.sqrt(np.cumsum(rs * rs))
    phis = tuple(
        math.pi / 2 if partial[j] == 0 else math.atan2(rs[j + 1], partial[j])
        for j in range(config.m - 1)
    )
    return MixingAngles(theta, phis)


def dark_mode_vector(config: SubEnsembleConfig, f: float) -> ModeVector:
    """Amplitudes of the dark polariton d over (a, A_1..A_m, C_1..C_m).

    Uses the closed forms of the mixing-angle products: the C_k coefficient
    -sin(theta) * sin(phi_{k-1}) * prod cos(phi_j) equals -sin(theta) r_k/|r|.
    A-components are exactly zero.
    """
    if f < 0 or math.isnan(f):
        raise ValueError(f"control envelope must be >= 0, got {f}")
    r = _ratios(config)
    rmax = r.max()
    if rmax == 0 and f == 0:
        raise DegenerateCouplingError("degenerate: no coupling")
    m = config.m
    v = np.zeros(2 * m + 1)
    if rmax == 0:
        v[0] = 1.0
        return ModeVector(v, normalized=True)
    rs = r / rmax
    rnorm = math.sqrt(float(np.dot(rs, rs)))
    c = rs / rnorm
    if math.isinf(f):
        cos_t, sin_t = 1.0, 0.0
    else:
        big = rmax * rnorm
        hyp = math.hypot(big, f)
        cos_t, sin_t = f / hyp, big / hyp
        if math.isinf(big):
            cos_t, sin_t = 0.0, 1.0
    v[0] = cos_t
    v[m + 1 :] = -sin_t * c
    return ModeVector(v, normalized=True)


def _coupling_blocks(collective: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = len(collective)
    h_static = np.zeros((2 * m + 1, 2 * m + 1))
    h_static[0, 1 : m + 1] = collective
    h_static[1 : m + 1, 0] = collective
    h_drive = np.zeros_like(h_static)
    idx = np.arange(1, m + 1)
    h_drive[idx, idx + m] = weights
    h_drive[idx + m, idx] = weights
    return h_static, h_drive


def hamiltonian_blocks(config: SubEnsembleConfig, homogeneous: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """(h_static, h_drive) with h(f) = h_static + f * h_drive."""
    if homogeneous:
        n_sqrt = np.sqrt(np.asarray(config.atom_counts, dtype=float))
        return _coupling_blocks(config.g0 * n_sqrt, np.full(config.m, config.omega0_weight))
    return _coupling_blocks(config.collective_couplings, np.asarray(config.control_weights))


def hamiltonian_matrix(config: SubEnsembleConfig, f: float) -> np.ndarray:
    """Single-excitation bosonic Hamiltonian, real symmetric, shape (2m+1, 2m+1).

    h[0, s] = g_s sqrt(N_s) couples a <-> A_s; h[s, m+s] = w_s f couples A_s <-> C_s.
    """
    if f < 0:
        raise ValueError(f"control envelope must be >= 0, got {f}")
    m = config.m
    h = np.zeros((2 * m + 1, 2 * m + 1))
    gsn = config.collective_couplings
    h[0, 1 : m + 1] = gsn
    h[1 : m + 1, 0] = gsn
    idx = np.arange(1, m + 1)
    omega = np.asarray(config.control_weights) * f
    h[idx, idx + m] = omega
    h[idx + m, idx] = omega
    return h


def split_hamiltonian(config: SubEnsembleConfig, f: float) -> tuple[np.ndarray, np.ndarray]:
    """Homogeneous reference h0 and the inhomogeneous remainder h1 = h - h0."""
    h = hamiltonian_matrix(config, f)
    h0 = hamiltonian_matrix(config.homogeneous_reference(), f)
    return h0, h - h0
