"""Initial-data presets and config-driven runs shared by the CLI and tests."""

from __future__ import annotations

import numpy as np

from .config import ExperimentConfig
from .decay import EnergyTrace
from .fdtd import modal_sampler, run as fdtd_run
from .spectral import (
    DampedPropagator,
    EigenBasis,
    ModalState,
    SpectralError,
    build_basis,
    damping_matrix,
)


def trapped_stack(basis: EigenBasis, start: int = 3, exponent: float = 2.5, count: int = 0) -> ModalState:
    """Position data on modes with lateral indices 1 and vertical index ``>= start``.

    Amplitudes are ``k**-exponent`` in the vertical index ``k``; ``count > 0``
    keeps only the lowest ``count`` such modes.
    """
    idx = basis.indices
    lateral_one = np.all(idx[:, :-1] == 1, axis=1)
    chosen = np.flatnonzero(lateral_one & (idx[:, -1] >= start))
    if count > 0:
        chosen = chosen[:count]
    if len(chosen) == 0:
        raise SpectralError("no trapped-stack modes inside the basis")
    b0 = np.zeros(basis.count)
    b0[chosen] = idx[chosen, -1].astype(float) ** -exponent
    return ModalState(basis, b0, np.zeros(basis.count))


def random_smooth(basis: EigenBasis, seed: int, modes: int = 20) -> ModalState:
    """Gaussian coefficients on the lowest ``modes`` modes, damped by ``mu``."""
    rng = np.random.default_rng(seed)
    k = min(modes, basis.count)
    mu = basis.eigenvalues[:k]
    b0 = np.zeros(basis.count)
    b1 = np.zeros(basis.count)
    b0[:k] = rng.normal(size=k) / mu
    b1[:k] = rng.normal(size=k) / np.sqrt(mu)
    return ModalState(basis, b0, b1)


def initial_state(cfg: ExperimentConfig, basis: EigenBasis, seed: int | None = None) -> ModalState:
    ini = cfg.initial
    if ini.preset == "single-mode":
        if ini.mode > basis.count:
            raise SpectralError(f"mode {ini.mode} exceeds the basis size {basis.count}")
        return ModalState.unit(basis, ini.mode - 1)
    if ini.preset == "trapped-stack":
        return trapped_stack(basis, ini.stack_start, ini.stack_exponent, ini.stack_count)
    return random_smooth(basis, cfg.run.seed if seed is None else seed, ini.modes)


def simulate(cfg: ExperimentConfig) -> EnergyTrace:
    """Energy trace of the configured solver on ``0, record_every, ..., T``."""
    spec = cfg.domain_spec()
    fld = cfg.damping_field()
    sol = cfg.solver
    basis = build_basis(spec, sol.N)
    state = initial_state(cfg, basis)
    if sol.kind == "galerkin":
        prop = DampedPropagator(basis, damping_matrix(basis, fld).matrix)
        times, energies, lost, _ = prop.trace(state, sol.T, sol.record_every)
        return EnergyTrace(times, energies, lost)
    ics = (modal_sampler(basis, state.b0), modal_sampler(basis, state.b1))
    return fdtd_run(spec, fld, sol.resolution, sol.dt, ics, sol.T, sol.record_every)
