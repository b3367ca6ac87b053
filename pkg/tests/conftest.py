"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import null_space

from eitmemory.dynamics import ControlSchedule, clear_cache
from eitmemory.model import SubEnsembleConfig, hamiltonian_blocks, hamiltonian_matrix

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def cold_cache():
    clear_cache()
    yield
    clear_cache()


@pytest.fixture
def cfg_12():
    """m=2, N1=N2, g sqrt(N) in the ratio 1 : 1.2, equal control weights."""
    return SubEnsembleConfig.from_collective([1.0, 1.2])


@pytest.fixture
def cfg_homogeneous():
    return SubEnsembleConfig.from_collective([1.0, 1.0])


@pytest.fixture
def slow_storage():
    return ControlSchedule("storage", 200.0, 20.0)


def nullspace_dark(config: SubEnsembleConfig, f: float = 1e-7) -> np.ndarray:
    """Dark mode from an SVD null space of h(f), picking the vector with the largest photon weight.

    For f > 0 the kernel of h is one-dimensional; at small f it tends to the
    f -> 0+ dark mode. The sign is fixed so that the last C component is negative.
    """
    ns = null_space(hamiltonian_matrix(config, f))
    assert ns.shape[1] == 1
    v = ns[:, 0]
    return v if v[-1] < 0 else -v


# --- truncated-Fock brute force ------------------------------------------


def fock_basis(modes: int, n_max: int):
    """Occupation tuples with total <= n_max, grouped by total."""
    basis = []
    for n in range(n_max + 1):
        for combo in itertools.combinations_with_replacement(range(modes), n):
            occ = [0] * modes
            for k in combo:
                occ[k] += 1
            basis.append(tuple(occ))
    return basis


def second_quantize(h: np.ndarray, basis) -> np.ndarray:
    """Matrix of sum_ij h_ij b_i^dag b_j on a truncated Fock basis."""
    index = {occ: i for i, occ in enumerate(basis)}
    big = np.zeros((len(basis), len(basis)), dtype=complex)
    d = h.shape[0]
    for col, occ in enumerate(basis):
        for j in range(d):
            if occ[j] == 0:
                continue
            lowered = list(occ)
            lowered[j] -= 1
            amp_j = math.sqrt(occ[j])
            for i in range(d):
                if h[i, j] == 0:
                    continue
                raised = list(lowered)
                raised[i] += 1
                row = index[tuple(raised)]
                big[row, col] += h[i, j] * amp_j * math.sqrt(raised[i])
    return big


def fock_state(mode: np.ndarray, coefficients, basis) -> np.ndarray:
    """sum_n C_n (sum_k mode_k b_k^dag)^n / sqrt(n!) |0> on the truncated basis."""
    psi = np.zeros(len(basis), dtype=complex)
    for i, occ in enumerate(basis):
        n = sum(occ)
        if n >= len(coefficients) or coefficients[n] == 0:
            continue
        multinom = math.factorial(n) / math.prod(math.factorial(k) for k in occ)
        amp = math.sqrt(multinom) * np.prod([mode[k] ** nk for k, nk in enumerate(occ) if nk])
        psi[i] = coefficients[n] * amp
    return psi


def brute_force_evolve(config, schedule, psi0, basis, homogeneous=False, rtol=1e-12, atol=1e-13):
    """Many-body Schroedinger equation with an adaptive Runge-Kutta solver."""
    hs, hd = hamiltonian_blocks(config, homogeneous=homogeneous)
    big_s = second_quantize(hs, basis)
    big_d = second_quantize(hd, basis)

    def rhs(t, y):
        return -1j * ((big_s + schedule.envelope(t) * big_d) @ y)

    sol = solve_ivp(rhs, (0.0, schedule.duration), psi0, method="DOP853", rtol=rtol, atol=atol)
    assert sol.success
    return sol.y[:, -1]
