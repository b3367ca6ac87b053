"""Exact few-atom three-level simulation used to check the bosonized model.

Atoms carry levels b (ground), a (excited), c (metastable), encoded 0, 1, 2.
The basis is restricted to total excitation n_photon + #a + #c <= n_exc, which
the interaction conserves, so every excitation block is invariant.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .dynamics import ControlSchedule, evolve_modes, propagate_state
from .model import SubEnsembleConfig

MAX_ATOMS = 12
MAX_DIMENSION = 50_000
DENSE_LIMIT = 2_000

B, A, C = 0, 1, 2


class DimensionBudgetError(ValueError):
    def __init__(self, message: str, dimension: int):
        super().__init__(message)
        self.dimension = dimension


def sector_dimension(atom_count: int, n_exc: int, n_max: int) -> int:
    total = 0
    for e in range(n_exc + 1):
        for n in range(min(e, n_max) + 1):
            k = e - n
            if k <= atom_count:
                total += math.comb(atom_count, k) * 2**k
    return total


@dataclass(frozen=True)
class ExactRegister:
    """Per-atom couplings of a small ensemble and the truncation of its Hilbert space."""

    probe_couplings: tuple[float, ...]
    control_weights: tuple[float, ...]
    probe_phases: tuple[float, ...] = None  # type: ignore[assignment]
    control_phases: tuple[float, ...] = None  # type: ignore[assignment]
    n_max: int = 1
    n_exc: int = 1
    basis: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        g = tuple(float(x) for x in self.probe_couplings)
        w = tuple(float(x) for x in self.control_weights)
        n = len(g)
        if n < 1:
            raise ValueError("register needs at least one atom")
        if len(w) != n:
            raise ValueError(f"{n} probe couplings but {len(w)} control weights")
        pp = (0.0,) * n if self.probe_phases is None else tuple(float(x) for x in self.probe_phases)
        cp = (0.0,) * n if self.control_phases is None else tuple(float(x) for x in self.control_phases)
        if len(pp) != n or len(cp) != n:
            raise ValueError("phase lists must have one entry per atom")
        if self.n_exc < 0 or self.n_max < 0:
            raise ValueError("n_exc and n_max must be nonnegative")
        dim = sector_dimension(n, self.n_exc, self.n_max)
        if n > MAX_ATOMS:
            raise DimensionBudgetError(
                f"dimension over budget: N={n} exceeds the {MAX_ATOMS}-atom cap (sector dimension {dim})", dim
            )
        if dim > MAX_DIMENSION:
            raise DimensionBudgetError(
                f"dimension over budget: sector dimension {dim} exceeds {MAX_DIMENSION}", dim
            )
        object.__setattr__(self, "probe_couplings", g)
        object.__setattr__(self, "control_weights", w)
        object.__setattr__(self, "probe_phases", pp)
        object.__setattr__(self, "control_phases", cp)
        object.__setattr__(self, "basis", tuple(_enumerate_basis(n, self.n_exc, self.n_max)))

    @property
    def atom_count(self) -> int:
        return len(self.probe_couplings)

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def index(self) -> dict:
        return {state: i for i, state in enumerate(self.basis)}

    def excitations(self) -> np.ndarray:
        return np.array([n + sum(1 for s in atoms if s != B) for n, atoms in self.basis])

    def block(self, e: int) -> np.ndarray:
        """Basis indices of the excitation-e block."""
        return np.flatnonzero(self.excitations() == e)

    @classmethod
    def homogeneous(cls, atom_count: int, n_exc: int = 1, control_weight: float = 1.0) -> "ExactRegister":
        """Uniform couplings in g0 sqrt(N) = 1 units."""
        g = 1.0 / math.sqrt(atom_count)
        return cls((g,) * atom_count, (control_weight,) * atom_count, n_max=n_exc, n_exc=n_exc)

    @classmethod
    def linear(cls, atom_count: int, s: float, n_exc: int = 1) -> "ExactRegister":
        """g_j = g0 (1 + s x_j) with x_j a zero-mean ramp over the atoms, g0 sqrt(N) = 1."""
        x = np.linspace(-1.0, 1.0, atom_count) if atom_count > 1 else np.zeros(1)
        g = (1.0 + s * x) / math.sqrt(atom_count)
        return cls(tuple(g), (1.0,) * atom_count, n_max=n_exc, n_exc=n_exc)


def _enumerate_basis(atom_count: int, n_exc: int, n_max: int):
    for e in range(n_exc + 1):
        for n in range(min(e, n_max) + 1):
            k = e - n
            if k > atom_count:
                continue
            for sites in itertools.combinations(range(atom_count), k):
                for levels in itertools.product((A, C), repeat=k):
                    atoms = [B] * atom_count
                    for site, level in zip(sites, levels):
                        atoms[site] = level
                    yield (n, tuple(atoms))


def _sparse(entries: dict, dim: int):
    if not entries:
        return sp.csr_matrix((dim, dim), dtype=complex)
    (rows, cols), vals = zip(*entries.keys()), list(entries.values())
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex)


def _atom_flip_operator(register: ExactRegister, atoms_sel, to_level, from_level, coeffs, photon_lower=False):
    """sum_j coeffs[j] |to><from|_j (optionally times the photon annihilator)."""
    index = register.index()
    entries: dict = {}
    for col, (n, atoms) in enumerate(register.basis):
        if photon_lower and n == 0:
            continue
        for j, coeff in zip(atoms_sel, coeffs):
            if atoms[j] != from_level:
                continue
            flipped = atoms[:j] + (to_level,) + atoms[j + 1 :]
            target = (n - 1 if photon_lower else n, flipped)
            row = index.get(target)
            if row is None:
                continue
            amp = coeff * (math.sqrt(n) if photon_lower else 1.0)
            entries[(row, col)] = entries.get((row, col), 0.0) + amp
    return _sparse(entries, register.dimension)


def exact_blocks(register: ExactRegister):
    """(H_static, H_drive) with H(f) = H_static + f H_drive, as sparse matrices."""
    n = register.atom_count
    sites = range(n)
    g = np.asarray(register.probe_couplings) * np.exp(1j * np.asarray(register.probe_phases))
    w = np.asarray(register.control_weights) * np.exp(1j * np.asarray(register.control_phases))
    # g_j e^{i phi} sigma_ab^j a : b -> a while absorbing a photon
    probe = _atom_flip_operator(register, sites, A, B, g, photon_lower=True)
    control = _atom_flip_operator(register, sites, A, C, w)
    h_static = probe + probe.conj().T
    h_drive = control + control.conj().T
    return h_static.tocsr(), h_drive.tocsr()


def build_exact(register: ExactRegister, f: float = 1.0):
    """Sector-restricted interaction Hamiltonian at envelope value f (dense below 2000 states)."""
    h_static, h_drive = exact_blocks(register)
    h = (h_static + f * h_drive).tocsr()
    return h.toarray() if register.dimension <= DENSE_LIMIT else h


def photon_annihilator(register: ExactRegister):
    index = register.index()
    entries = {}
    for col, (n, atoms) in enumerate(register.basis):
        if n > 0:
            entries[(index[(n - 1, atoms)], col)] = math.sqrt(n)
    return _sparse(entries, register.dimension)


@dataclass(frozen=True)
class CollectiveOps:
    """Collective operators of each group on the register's sector basis (sparse)."""

    A: tuple
    C: tuple
    T_plus: tuple
    T_minus: tuple
    T_z: tuple
    a: object
    partition: tuple

    @property
    def m(self) -> int:
        return len(self.partition)


def check_partition(register: ExactRegister, partition: Sequence[Sequence[int]]) -> tuple:
    groups = tuple(tuple(int(j) for j in grp) for grp in partition)
    if any(len(grp) == 0 for grp in groups):
        raise ValueError("partition contains an empty group")
    flat = sorted(j for grp in groups for j in grp)
    if flat != list(range(register.atom_count)):
        raise ValueError("partition must cover every atom exactly once")
    return groups


def contiguous_partition(atom_count: int, m: int) -> tuple:
    """Split atoms 0..N-1 into m contiguous groups, remainders to the leftmost groups."""
    if m < 1 or m > atom_count:
        raise ValueError(f"cannot split {atom_count} atoms into {m} groups")
    base, rem = divmod(atom_count, m)
    out, start = [], 0
    for k in range(m):
        size = base + (1 if k < rem else 0)
        out.append(tuple(range(start, start + size)))
        start += size
    return tuple(out)


def collective_operators(register: ExactRegister, partition: Sequence[Sequence[int]]) -> CollectiveOps:
    """A_s, C_s (1/sqrt(N_s) normalized lowering operators), T+-_s and T^z_s per group."""
    groups = check_partition(register, partition)
    pp = np.asarray(register.probe_phases)
    cp = np.asarray(register.control_phases)
    A_ops, C_ops, Tp, Tm, Tz = [], [], [], [], []
    for grp in groups:
        idx = np.asarray(grp)
        norm = 1.0 / math.sqrt(len(grp))
        A_ops.append(_atom_flip_operator(register, grp, B, A, norm * np.exp(-1j * pp[idx])))
        C_ops.append(_atom_flip_operator(register, grp, B, C, norm * np.exp(-1j * (pp[idx] - cp[idx]))))
        minus = _atom_flip_operator(register, grp, C, A, np.exp(-1j * cp[idx]))
        Tm.append(minus)
        Tp.append(minus.conj().T.tocsr())
        diag = [
            0.5 * sum((atoms[j] == A) - (atoms[j] == C) for j in grp) for _, atoms in register.basis
        ]
        Tz.append(sp.diags(np.asarray(diag, dtype=complex), format="csr"))
    return CollectiveOps(tuple(A_ops), tuple(C_ops), tuple(Tp), tuple(Tm), tuple(Tz), photon_annihilator(register), groups)


def bosonic_config(register: ExactRegister, partition: Sequence[Sequence[int]]) -> SubEnsembleConfig:
    """Sub-ensemble model of the register: group sizes and group-mean couplings."""
    groups = check_partition(register, partition)
    g = np.asarray(register.probe_couplings)
    w = np.asarray(register.control_weights)
    return SubEnsembleConfig(
        tuple(len(grp) for grp in groups),
        tuple(float(g[list(grp)].mean()) for grp in groups),
        tuple(float(w[list(grp)].mean()) for grp in groups),
    )


def occupations(modes: int, total: int):
    """All occupation tuples of `modes` bosonic modes with `total` quanta."""
    if modes == 1:
        yield (total,)
        return
    for k in range(total, -1, -1):
        for rest in occupations(modes - 1, total - k):
            yield (k,) + rest


def fock_coefficients(u: np.ndarray, occs: Sequence[tuple]) -> np.ndarray:
    """Coefficients of (sum_k u_k b_k^dag)^n |0> / sqrt(n!) on the occupation basis."""
    u = np.asarray(u, dtype=complex)
    out = np.empty(len(occs), dtype=complex)
    for i, occ in enumerate(occs):
        n = sum(occ)
        amp = math.sqrt(math.factorial(n) / math.prod(math.factorial(k) for k in occ))
        out[i] = amp * np.prod([u[k] ** nk for k, nk in enumerate(occ) if nk])
    return out


def collective_embedding(register: ExactRegister, ops: CollectiveOps, photons: int):
    """Columns: normalized (a^dag)^n0 prod (A_s^dag)^k_s (C_s^dag)^l_s |vac> for each occupation.

    Occupations that the finite groups cannot hold map to zero columns.
    Returns (occupations, dense embedding matrix on the full sector basis).
    """
    m = ops.m
    occs = list(occupations(2 * m + 1, photons))
    vac = np.zeros(register.dimension, dtype=complex)
    vac[register.index()[(0, (B,) * register.atom_count)]] = 1.0
    raise_ops = [ops.a.conj().T] + [x.conj().T for x in ops.A] + [x.conj().T for x in ops.C]
    emb = np.zeros((register.dimension, len(occs)), dtype=complex)
    for i, occ in enumerate(occs):
        v = vac
        for op, count in zip(raise_ops, occ):
            for _ in range(count):
                v = op @ v
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            emb[:, i] = v / norm
    return occs, emb


@dataclass(frozen=True)
class DiscrepancyReport:
    times: np.ndarray = field(repr=False)
    deviation: np.ndarray = field(repr=False)
    leaked_weight: np.ndarray = field(repr=False)
    max_deviation: float
    final_overlap: float
    final_leaked_weight: float
    config: SubEnsembleConfig
    photons: int

    def summary(self) -> dict:
        return {
            "max_deviation": self.max_deviation,
            "final_overlap": self.final_overlap,
            "final_leaked_weight": self.final_leaked_weight,
            "photons": self.photons,
            "config": self.config.to_dict(),
        }


def compare_to_bosonic(
    register: ExactRegister,
    partition: Sequence[Sequence[int]],
    schedule: ControlSchedule,
    photons: int = 1,
    steps: int = 64,
    samples: int = 100,
    tol: float = 1e-9,
) -> DiscrepancyReport:
    """Run the exact register and its sub-ensemble model on the same schedule.

    Both start from |photons> with all atoms in b. The bosonic run fixes the
    step resolution; the exact run reuses it on the excitation block that holds
    the input. Deviation is the distance between the exact state projected on
    the collective Fock states and the bosonic Fock amplitudes.
    """
    if photons < 1 or photons > min(register.n_exc, register.n_max):
        raise ValueError(f"{photons} photons do not fit the register truncation")
    ops = collective_operators(register, partition)
    config = bosonic_config(register, partition)
    prop = evolve_modes(config, schedule, steps=steps, samples=samples, tol=tol)
    occs, emb = collective_embedding(register, ops, photons)

    h_static, h_drive = exact_blocks(register)
    blk = register.block(photons)
    hs = h_static[blk][:, blk].toarray()
    hd = h_drive[blk][:, blk].toarray()
    psi0 = np.zeros(len(blk), dtype=complex)
    psi0[list(blk).index(register.index()[(photons, (B,) * register.atom_count)])] = 1.0
    _, psi = propagate_state(hs, hd, schedule, psi0, samples, prop.substeps)
    proj = psi @ emb[blk].conj()

    e0 = np.zeros(config.dim, dtype=complex)
    e0[0] = 1.0
    modes = prop.apply(e0)
    bos = np.array([fock_coefficients(u, occs) for u in modes])

    deviation = np.linalg.norm(proj - bos, axis=1)
    leaked = np.clip(1.0 - np.sum(np.abs(proj) ** 2, axis=1), 0.0, None)
    final_overlap = float(abs(np.vdot(bos[-1], proj[-1])) ** 2)
    return DiscrepancyReport(
        prop.times,
        deviation,
        leaked,
        float(deviation.max()),
        final_overlap,
        float(leaked[-1]),
        config,
        photons,
    )
