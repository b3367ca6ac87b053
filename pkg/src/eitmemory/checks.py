"""Randomized invariant suites behind ``eitmem verify``.

Each suite draws plain-dict cases from a seeded generator and measures one
scalar defect per case. A case whose defect exceeds the suite threshold is a
counterexample; because cases are plain data they can be written to YAML and
replayed exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analysis import analytic_leakage, random_config, roundtrip_fidelity
from .dynamics import ControlSchedule, InputState, evolve_modes, overlap_fock, storage_map
from .model import SubEnsembleConfig, dark_mode_vector, hamiltonian_matrix, split_hamiltonian
from .oracle import ExactRegister, collective_operators, contiguous_partition


@dataclass(frozen=True)
class Suite:
    name: str
    threshold: float
    generate: Callable[[np.random.Generator], list]
    measure: Callable[[dict], float]
    description: str = ""


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    worst: float
    threshold: float
    cases: int
    counterexample: dict | None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:<20} {status}  worst={self.worst:.3e}  threshold={self.threshold:.1e}  cases={self.cases}"


def _config_case(config: SubEnsembleConfig) -> dict:
    return {k: v for k, v in config.to_dict().items() if k != "m"}


def _config(case: dict) -> SubEnsembleConfig:
    c = case["config"]
    return SubEnsembleConfig(
        tuple(int(n) for n in c["atom_counts"]),
        tuple(float(x) for x in c["probe_couplings"]),
        tuple(float(x) for x in c["control_weights"]),
        c.get("g0"),
        c.get("omega0_weight"),
    )


def _random_kernel_config(rng: np.random.Generator) -> SubEnsembleConfig:
    m = int(rng.integers(1, 9))
    counts = rng.integers(1, 10**6 + 1, m)
    g = rng.uniform(1e-3, 2.0, m)
    w = rng.uniform(1e-3, 2.0, m)
    return SubEnsembleConfig(tuple(int(n) for n in counts), tuple(g), tuple(w))


# --- dark-mode kernel ------------------------------------------------------


def _gen_kernel(rng):
    cases = []
    for _ in range(1000):
        config = _random_kernel_config(rng)
        f = 0.0 if rng.random() < 0.05 else float(rng.uniform(0.0, 10.0))
        cases.append({"config": _config_case(config), "f": f})
    return cases


def _measure_kernel(case):
    config = _config(case)
    v = np.asarray(dark_mode_vector(config, case["f"]))
    h = hamiltonian_matrix(config, case["f"])
    return max(float(np.linalg.norm(h @ v)), abs(float(np.linalg.norm(v)) - 1.0), float(np.max(np.abs(v[1 : config.m + 1]))))


# --- split identity --------------------------------------------------------


def _gen_split(rng):
    return [
        {"config": _config_case(_random_kernel_config(rng)), "f": float(rng.uniform(0.0, 10.0))} for _ in range(200)
    ]


def _measure_split(case):
    config = _config(case)
    h = hamiltonian_matrix(config, case["f"])
    h0, h1 = split_hamiltonian(config, case["f"])
    # relative to the largest entry: one rounding of h - h0 is the only error allowed
    return float(np.max(np.abs(h0 + h1 - h)) / np.max(np.abs(h)))


# --- unitarity -------------------------------------------------------------


def _gen_unitarity(rng):
    cases = []
    for _ in range(4):
        config = random_config(rng, control_spread=0.5)
        cases.append(
            {
                "config": _config_case(config),
                "T": float(rng.uniform(5.0, 50.0)),
                "peak": float(rng.uniform(2.0, 20.0)),
                "shape": str(rng.choice(["raised-cosine", "linear", "tanh"])),
            }
        )
    return cases


def _measure_unitarity(case):
    config = _config(case)
    sched = ControlSchedule("storage", case["T"], case["peak"], case["shape"])
    prop = evolve_modes(config, sched)
    norms = np.linalg.norm(prop.matrices[:, :, 0], axis=1)
    return max(prop.unitarity_defect, float(np.max(np.abs(norms - 1.0))))


# --- homogeneous null ------------------------------------------------------


def _gen_homogeneous(rng):
    cases = []
    for kind in ("fock1", "fock3", "coherent"):
        m = int(rng.integers(1, 5))
        counts = [int(n) for n in rng.integers(1, 1001, m)]
        config = SubEnsembleConfig(tuple(counts), (float(rng.uniform(0.5, 1.5)),) * m, (float(rng.uniform(0.5, 1.5)),) * m)
        phase = float(rng.uniform(0.0, 2 * math.pi))
        alpha = float(rng.uniform(0.0, 2.0)) * complex(math.cos(phase), math.sin(phase))
        cases.append({"config": _config_case(config.normalized()), "input": kind, "alpha": [alpha.real, alpha.imag]})
    return cases


def _input(case) -> InputState:
    kind = case["input"]
    if kind == "coherent":
        return InputState.coherent(complex(*case["alpha"]))
    return InputState.fock(int(kind[len("fock") :]))


def _measure_homogeneous(case):
    stored = storage_map(_config(case), ControlSchedule("storage", 50.0, 10.0), _input(case))
    return stored.xi


# --- overlap_fock bounds ---------------------------------------------------


def _unit(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def _gen_overlap(rng):
    cases = []
    for _ in range(200):
        d = 2 * int(rng.integers(1, 6)) + 1
        c = _unit(rng, int(rng.integers(1, 6)))
        u, u0 = _unit(rng, d), _unit(rng, d)
        cases.append(
            {
                "coefficients": [[x.real, x.imag] for x in c],
                "u": [[x.real, x.imag] for x in u],
                "u0": [[x.real, x.imag] for x in u0],
            }
        )
    return cases


def _measure_overlap(case):
    def arr(key):
        return np.array([complex(*x) for x in case[key]])

    c, u, u0 = arr("coefficients"), arr("u"), arr("u0")
    c = c / np.linalg.norm(c)
    u, u0 = u / np.linalg.norm(u), u0 / np.linalg.norm(u0)
    excess = max(0.0, abs(overlap_fock(c, u, u0)) - 1.0)
    return max(excess, abs(overlap_fock(c, u, u) - 1.0))


# --- collective-operator algebra -------------------------------------------


def _gen_algebra(rng):
    cases = []
    for _ in range(3):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(1, n + 1))
        cases.append({"atom_count": n, "m": m, "n_exc": int(rng.integers(1, 4))})
    return cases


def _measure_algebra(case):
    """su(2) and boson-commutator identities of the collective operators.

    [T+_i, T-_j] = 2 delta_ij Tz_j, and on a state with n c-flips in group s
    (all other atoms in b) <[C_s, C_s^dag]> = 1 - 2n/N_s. States at the
    excitation cap are skipped for the latter.
    """
    n_atoms, n_exc = case["atom_count"], case["n_exc"]
    reg = ExactRegister.homogeneous(n_atoms, n_exc=n_exc)
    ops = collective_operators(reg, contiguous_partition(n_atoms, case["m"]))
    worst = 0.0
    for i in range(ops.m):
        for j in range(ops.m):
            comm = ops.T_plus[i] @ ops.T_minus[j] - ops.T_minus[j] @ ops.T_plus[i]
            expected = 2 * ops.T_z[j] if i == j else 0 * ops.T_z[j]
            worst = max(worst, float(abs(comm - expected).max()))
    for s, grp in enumerate(ops.partition):
        comm = (ops.C[s] @ ops.C[s].conj().T - ops.C[s].conj().T @ ops.C[s]).diagonal()
        for idx, (photons, atoms) in enumerate(reg.basis):
            others = [a for j, a in enumerate(atoms) if j not in grp]
            mine = [a for j, a in enumerate(atoms) if j in grp]
            if photons or any(others) or any(a == 1 for a in mine):
                continue
            n = sum(1 for a in mine if a == 2)
            if n >= n_exc:
                continue  # C^dag would leave the truncated sector
            worst = max(worst, abs(comm[idx].real - (1.0 - 2.0 * n / len(grp))))
    return worst


# --- reversibility and analytic leakage at T = 200 -------------------------


def _gen_slow(rng):
    return [{"config": _config_case(random_config(rng, s_max=0.5))} for _ in range(2)]


def _measure_reversibility(case):
    rep = roundtrip_fidelity(_config(case), ControlSchedule("roundtrip", 200.0, 20.0))
    return rep.infidelity


def _measure_analytic(case):
    config = _config(case)
    stored = storage_map(config, ControlSchedule("storage", 200.0, 20.0), InputState.fock(1))
    return abs(stored.xi - analytic_leakage(config))


SUITES: tuple[Suite, ...] = (
    Suite("dark-kernel", 1e-12, _gen_kernel, _measure_kernel, "||h v_dark||, norm and A-components"),
    Suite("split-identity", 2.3e-16, _gen_split, _measure_split, "h0 + h1 reconstructs h"),
    Suite("unitarity", 1e-10, _gen_unitarity, _measure_unitarity, "propagator unitarity defect"),
    Suite("homogeneous-null", 1e-12, _gen_homogeneous, _measure_homogeneous, "xi for equal couplings"),
    Suite("overlap-bounds", 1e-12, _gen_overlap, _measure_overlap, "|overlap_fock| <= 1, self-overlap 1"),
    Suite("collective-algebra", 1e-14, _gen_algebra, _measure_algebra, "su(2) and boson commutators"),
    Suite("reversibility", 1e-3, _gen_slow, _measure_reversibility, "roundtrip infidelity at T=200"),
    Suite("analytic-leakage", 2e-3, _gen_slow, _measure_analytic, "xi vs dark-mode overlap at T=200"),
)


def suite(name: str) -> Suite:
    for s in SUITES:
        if s.name == name:
            return s
    raise KeyError(f"unknown suite {name!r}")


def run_suite(s: Suite, seed: int) -> SuiteResult:
    # per-suite stream so suites stay reproducible when others change
    rng = np.random.default_rng([seed, sum(map(ord, s.name))])
    cases = s.generate(rng)
    worst, counter = 0.0, None
    for case in cases:
        d = float(s.measure(case))
        if not math.isfinite(d):
            d = math.inf
        if d > worst:
            worst = d
        if d > s.threshold and counter is None:
            counter = case
    return SuiteResult(s.name, counter is None, worst, s.threshold, len(cases), counter)


def run_all(seed: int) -> list[SuiteResult]:
    return [run_suite(s, seed) for s in SUITES]


def replay(record: dict) -> SuiteResult:
    """Re-measure a serialized counterexample {suite, seed, case}."""
    s = suite(record["suite"])
    d = float(s.measure(record["case"]))
    return SuiteResult(s.name, d <= s.threshold, d, s.threshold, 1, None if d <= s.threshold else record["case"])
