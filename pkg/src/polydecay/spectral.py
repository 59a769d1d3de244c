"""Dirichlet sine-product eigenbasis of the box and modal wave evolution.

Eigenfunctions are tensor products of the normalized one-dimensional sines
``s_k(x) = m**-0.5 * sin(k*pi*(x + m) / (2*m))`` on ``[-m, m]``, so every
spatial integral of a product of modes over an axis-aligned box factorizes
into one-dimensional closed forms.

The damped evolution ``b'' + diag(mu) b + D b' = 0`` is integrated exactly in
time with the matrix exponential of the first-order system written in the
energy-scaled variables ``z = (sqrt(mu) * b0, b1)`` so that the energy is
``|z|^2``.  The damping matrix is frequently block diagonal (damping that
does not depend on some axis cannot couple different mode indices along that
axis); the propagator exponentiates each block separately.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .geometry import GAMMA1, GAMMA2, UPSILON, DampingField, DomainSpec


class AccuracyWarning(UserWarning):
    """A quadrature did not settle under refinement."""


class SpectralError(ValueError):
    pass


# ---------------------------------------------------------------------------
# one-dimensional sine factors
# ---------------------------------------------------------------------------


def sine_mode(m: float, k, x) -> np.ndarray:
    """Normalized Dirichlet sine ``s_k`` on ``[-m, m]``; broadcasts ``k`` and ``x``."""
    return np.sin(np.multiply.outer(np.asarray(x, float) + m, np.asarray(k) * np.pi / (2 * m))) / math.sqrt(m)


def sine_mode_derivative(m: float, k, x) -> np.ndarray:
    k = np.asarray(k)
    arg = np.multiply.outer(np.asarray(x, float) + m, k * np.pi / (2 * m))
    return np.cos(arg) * (k * np.pi / (2 * m)) / math.sqrt(m)


def sine_product_integral(m: float, k1, k2, a: float, b: float) -> np.ndarray:
    """Closed form of ``int_a^b s_k1(x) s_k2(x) dx`` for integer arrays ``k1``, ``k2``."""
    k1 = np.asarray(k1)
    k2 = np.asarray(k2)
    scale = np.pi / (2 * m)
    ta, tb = (a + m) * scale, (b + m) * scale

    def cos_integral(n):
        # int_a^b cos(n * theta(x)) dx with theta = (x + m) * scale
        n = np.asarray(n, dtype=float)
        safe = np.where(n == 0, 1.0, n)
        val = (np.sin(safe * tb) - np.sin(safe * ta)) / (safe * scale)
        return np.where(n == 0, b - a, val)

    return 0.5 * (cos_integral(k1 - k2) - cos_integral(k1 + k2)) / m


def gauss_legendre_panels(breakpoints, order: int, subdivide: int = 1):
    """Composite Gauss-Legendre nodes and weights over consecutive breakpoints."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    edges = []
    for lo, hi in zip(breakpoints[:-1], breakpoints[1:]):
        if hi > lo:
            edges.extend(zip(np.linspace(lo, hi, subdivide + 1)[:-1], np.linspace(lo, hi, subdivide + 1)[1:]))
    for lo, hi in edges:
        half = 0.5 * (hi - lo)
        nodes.append(0.5 * (hi + lo) + half * xg)
        weights.append(half * wg)
    return np.concatenate(nodes), np.concatenate(weights)


# ---------------------------------------------------------------------------
# basis and states
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """The ``N`` smallest Dirichlet eigenpairs of ``-Laplace`` on the box."""

    domain: DomainSpec
    indices: np.ndarray  # (N, dim) positive integers
    eigenvalues: np.ndarray  # (N,) ascending

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    @property
    def frequencies(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues)

    def evaluate(self, x) -> np.ndarray:
        """Values ``l_j(x)``; ``x`` of shape ``(..., dim)`` gives ``(..., N)``."""
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1] + (self.count,))
        for axis, m in enumerate(self.domain.half_sizes):
            out *= sine_mode(m, self.indices[:, axis], x[..., axis])
        return out

    def axis_gram(self, axis: int, weight_nodes, weight_values, weights) -> np.ndarray:
        kmax = int(self.indices[:, axis].max())
        m = self.domain.half_sizes[axis]
        table = sine_mode(m, np.arange(1, kmax + 1), weight_nodes)
        return (table * (weights * weight_values)[:, None]).T @ table

    def box_mass(self, box) -> np.ndarray:
        """``M_jk = int_box l_j l_k`` over an axis-aligned box ``((lo, hi), ...)``."""
        out = np.ones((self.count, self.count))
        for axis, ((lo, hi), m) in enumerate(zip(box, self.domain.half_sizes)):
            k = self.indices[:, axis]
            out *= sine_product_integral(m, k[:, None], k[None, :], lo, hi)
        return out

    def region_mass(self, boxes) -> np.ndarray:
        """Mass matrix over a union of (possibly overlapping) axis-aligned boxes.

        The union is split into disjoint cells along all box edges, so overlap
        is counted once.
        """
        half = self.domain.half_sizes
        cuts = []
        for axis, m in enumerate(half):
            pts = {-m, m}
            for box in boxes:
                pts.update(np.clip(box[axis], -m, m).tolist())
            cuts.append(sorted(pts))
        out = np.zeros((self.count, self.count))
        cell_lists = [list(zip(c[:-1], c[1:])) for c in cuts]
        for cell in _product(cell_lists):
            centre = [0.5 * (lo + hi) for lo, hi in cell]
            if any(all(b[a][0] < centre[a] < b[a][1] for a in range(len(half))) for b in boxes):
                out += self.box_mass(cell)
        return out


def _product(lists):
    if not lists:
        yield ()
        return
    for head in lists[0]:
        for tail in _product(lists[1:]):
            yield (head,) + tail


def build_basis(spec: DomainSpec, N: int) -> EigenBasis:
    """Analytic sine-product eigenbasis with the ``N`` smallest eigenvalues.

    Ties are broken by lexicographic order of the multi-index.
    """
    if N < 1:
        raise SpectralError(f"basis size must be >= 1, got {N}")
    scale = np.array([(np.pi / s) ** 2 for s in spec.sides])
    cutoff = float(scale.sum()) * 4
    while True:
        kmax = [int(math.floor(math.sqrt(cutoff / c))) for c in scale]
        grids = np.meshgrid(*[np.arange(1, k + 1) for k in kmax], indexing="ij")
        idx = np.stack([g.ravel() for g in grids], axis=1)
        mu = (idx.astype(float) ** 2) @ scale
        keep = mu <= cutoff
        if keep.sum() >= N:
            break
        cutoff *= 2
    idx, mu = idx[keep], mu[keep]
    key_mu = np.round(mu / mu.min(), 9)
    order = np.lexsort(tuple(idx[:, a] for a in reversed(range(spec.dim))) + (key_mu,))
    order = order[:N]
    return EigenBasis(spec, idx[order], mu[order])


@dataclass(eq=False)
class ModalState:
    """Modal coefficients of a position/velocity pair."""

    basis: EigenBasis
    b0: np.ndarray
    b1: np.ndarray

    def __post_init__(self):
        self.b0 = np.asarray(self.b0, dtype=float).copy()
        self.b1 = np.asarray(self.b1, dtype=float).copy()
        n = self.basis.count
        if self.b0.shape != (n,) or self.b1.shape != (n,):
            raise SpectralError(f"coefficient vectors must have shape ({n},)")

    @classmethod
    def zeros(cls, basis: EigenBasis) -> "ModalState":
        return cls(basis, np.zeros(basis.count), np.zeros(basis.count))

    @classmethod
    def unit(cls, basis: EigenBasis, j: int, velocity: bool = False) -> "ModalState":
        """Single mode ``j`` (0-based) in position or velocity."""
        e = np.zeros(basis.count)
        e[j] = 1.0
        z = np.zeros(basis.count)
        return cls(basis, z, e) if velocity else cls(basis, e, z)

    def h2h1_norm_sq(self) -> float:
        mu = self.basis.eigenvalues
        return float(np.sum(mu**2 * self.b0**2 + mu * self.b1**2))

    def to_rows(self):
        """``(index, mu, b0, b1)`` rows for CSV export."""
        return [(j, float(mu), float(a), float(b))
                for j, (mu, a, b) in enumerate(zip(self.basis.eigenvalues, self.b0, self.b1))]


def energy_G(state: ModalState) -> float:
    """``sum(mu_j b0_j^2 + b1_j^2)``, the squared H^1_0 x L^2 norm."""
    return float(np.sum(state.basis.eigenvalues * state.b0**2 + state.b1**2))


def lambda_quotient(state: ModalState) -> float:
    low = energy_G(state)
    if low == 0:
        raise SpectralError("quotient undefined for the zero state")
    return state.h2h1_norm_sq() / low


def synthesize_u(state: ModalState, x, t: float):
    """Conservative solution ``(u, du/dt)`` at points ``x`` and time ``t``."""
    nu = state.basis.frequencies
    c, s = np.cos(nu * t), np.sin(nu * t)
    pos = state.b0 * c + state.b1 / nu * s
    vel = -state.b0 * nu * s + state.b1 * c
    phi = state.basis.evaluate(x)
    return phi @ pos, phi @ vel


def conservative_evolve(state: ModalState, t: float) -> ModalState:
    nu = state.basis.frequencies
    c, s = np.cos(nu * t), np.sin(nu * t)
    return ModalState(state.basis, state.b0 * c + state.b1 / nu * s, -state.b0 * nu * s + state.b1 * c)


def spectral_tail(coefficients_fn, basis: EigenBasis, extra: int) -> float:
    """Energy of data beyond the basis: ``sum_{N<j<=N+extra} (mu b0^2 + b1^2)``.

    ``coefficients_fn(bigger_basis)`` must return ``(b0, b1)`` on a basis with
    ``N + extra`` modes.
    """
    big = build_basis(basis.domain, basis.count + extra)
    b0, b1 = coefficients_fn(big)
    tail = slice(basis.count, None)
    return float(np.sum(big.eigenvalues[tail] * b0[tail] ** 2 + b1[tail] ** 2))


# ---------------------------------------------------------------------------
# damping
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DampingMatrix:
    matrix: np.ndarray
    quadrature_order: int
    max_refinement_change: float


def _axis_keep_gram(basis: EigenBasis, field: DampingField, axis: int, order: int) -> np.ndarray:
    spec = basis.domain
    kmax = int(basis.indices[:, axis].max())
    bps = field.breakpoints(spec, axis)
    # a product of two modes has at most 2*kmax half-periods across the axis
    nodes, weights = gauss_legendre_panels(bps, order, subdivide=max(1, (kmax + 1) // 2))
    keep = 1.0 - field.ramp(spec, axis, nodes)
    return basis.axis_gram(axis, nodes, keep, weights)


def _assemble(basis: EigenBasis, field: DampingField, order: int) -> np.ndarray:
    n = basis.count
    if field.alpha_max == 0:
        return np.zeros((n, n))
    if field.support == "everywhere":
        return field.alpha_max * np.eye(n)
    prod = np.ones((n, n))
    damped = field.damped_axes(basis.domain)
    for axis in range(basis.domain.dim):
        k = basis.indices[:, axis] - 1
        if axis in damped:
            gram = _axis_keep_gram(basis, field, axis, order)
            prod *= gram[np.ix_(k, k)]
        else:
            prod *= k[:, None] == k[None, :]
    D = field.alpha_max * (np.eye(n) - prod)
    return 0.5 * (D + D.T)


def damping_matrix(basis: EigenBasis, field: DampingField, quadrature_order: int = 24,
                   tol: float = 1e-10) -> DampingMatrix:
    """Galerkin projection ``D_jk = int alpha l_j l_k`` of the damping field.

    The field is written as ``alpha_max * (1 - prod_d keep_d(x_d))`` so the
    integral factorizes into one-dimensional Gram matrices, each computed by
    Gauss-Legendre panels aligned with the collar boundary.  The assembly is
    repeated at double order; an entry change above ``tol * alpha_max``
    raises an :class:`AccuracyWarning`.
    """
    D = _assemble(basis, field, quadrature_order)
    D2 = _assemble(basis, field, 2 * quadrature_order)
    change = float(np.max(np.abs(D2 - D))) if D.size else 0.0
    if change > tol * max(field.alpha_max, 1.0):
        warnings.warn(f"damping quadrature not converged: max entry change {change:.3e}",
                      AccuracyWarning, stacklevel=2)
    return DampingMatrix(D2, 2 * quadrature_order, change)


def _as_array(D) -> np.ndarray:
    return D.matrix if isinstance(D, DampingMatrix) else np.asarray(D, dtype=float)


# ---------------------------------------------------------------------------
# damped propagation
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class DampedPropagator:
    """Exact-in-time propagator of the Galerkin system, block by block.

    ``step(dt)`` matrices and the dissipation quadratic forms (Van Loan's
    block exponential) are cached per step size.
    """

    basis: EigenBasis
    D: np.ndarray
    blocks: list = field(init=False)
    _cache: dict = field(init=False, default_factory=dict)

    def __post_init__(self):
        self.D = _as_array(self.D)
        n = self.basis.count
        if self.D.shape != (n, n):
            raise SpectralError(f"damping matrix must be {n}x{n}")
        # entries at rounding level (parity-forbidden couplings of a
        # symmetric collar) are structural zeros
        scale = float(np.max(np.abs(self.D))) if self.D.size else 0.0
        self.D = np.where(np.abs(self.D) > 1e-13 * scale, self.D, 0.0)
        pattern = csr_matrix(self.D != 0)
        ncomp, labels = connected_components(pattern, directed=False)
        self.blocks = [np.flatnonzero(labels == c) for c in range(ncomp)]

    def _generator(self, idx) -> np.ndarray:
        nu = self.basis.frequencies[idx]
        k = len(idx)
        A = np.zeros((2 * k, 2 * k))
        A[:k, k:] = np.diag(nu)
        A[k:, :k] = -np.diag(nu)
        A[k:, k:] = -self.D[np.ix_(idx, idx)]
        return A

    def _matrices(self, dt: float, with_dissipation: bool):
        key = (dt, with_dissipation)
        if key not in self._cache:
            mats = []
            for idx in self.blocks:
                A = self._generator(idx)
                k = len(idx)
                if not with_dissipation:
                    mats.append((scipy.linalg.expm(A * dt), None))
                    continue
                Q = np.zeros_like(A)
                Q[k:, k:] = 2 * self.D[np.ix_(idx, idx)]
                big = np.block([[-A.T, Q], [np.zeros_like(A), A]])
                F = scipy.linalg.expm(big * dt)
                M = F[2 * k:, 2 * k:]
                W = M.T @ F[:2 * k, 2 * k:]
                mats.append((M, 0.5 * (W + W.T)))
            self._cache[key] = mats
        return self._cache[key]

    def to_z(self, state: ModalState) -> np.ndarray:
        return np.concatenate([self.basis.frequencies * state.b0, state.b1])

    def from_z(self, z) -> ModalState:
        n = self.basis.count
        return ModalState(self.basis, z[:n] / self.basis.frequencies, z[n:])

    def advance(self, z: np.ndarray, dt: float, with_dissipation: bool = False):
        """Advance scaled variables by ``dt``; returns ``(z', dissipated)``."""
        n = self.basis.count
        out = np.empty_like(z)
        lost = 0.0
        for idx, (M, W) in zip(self.blocks, self._matrices(dt, with_dissipation)):
            zi = np.concatenate([z[idx], z[n + idx]])
            if W is not None:
                lost += float(zi @ W @ zi)
            zo = M @ zi
            out[idx] = zo[:len(idx)]
            out[n + idx] = zo[len(idx):]
        if not np.all(np.isfinite(out)):
            raise SpectralError("non-finite modal coefficients during damped evolution")
        return out, lost

    def evolve(self, state: ModalState, t: float) -> ModalState:
        if t < 0:
            raise SpectralError("evolution time must be >= 0")
        if t == 0:
            return ModalState(self.basis, state.b0, state.b1)
        z, _ = self.advance(self.to_z(state), t)
        return self.from_z(z)

    def trace(self, state: ModalState, T: float, record_every: float, dissipation: bool = True):
        """Energies on the grid ``0, dt, 2 dt, ...`` up to ``T``.

        Returns ``(times, energies, cumulative_dissipation, final_state)``;
        the dissipation column is ``2 int_0^t b1' D b1`` integrated exactly
        per step (zeros when ``dissipation`` is false).
        """
        nsteps = int(round(T / record_every)) if T > 0 else 0
        if nsteps and abs(nsteps * record_every - T) > 1e-9 * max(T, 1.0):
            raise SpectralError("T must be a whole multiple of record_every")
        z = self.to_z(state)
        times = np.arange(nsteps + 1) * record_every
        energies = np.empty(nsteps + 1)
        lost = np.zeros(nsteps + 1)
        energies[0] = float(z @ z)
        for i in range(1, nsteps + 1):
            z, d = self.advance(z, record_every, dissipation)
            energies[i] = float(z @ z)
            lost[i] = lost[i - 1] + d
        return times, energies, lost, self.from_z(z)


def evolve_damped(state: ModalState, D, t: float) -> ModalState:
    """Coefficients at time ``t`` of ``b'' + diag(mu) b + D b' = 0``."""
    return DampedPropagator(state.basis, D).evolve(state, t)


# ---------------------------------------------------------------------------
# boundary traces and observation integrals
# ---------------------------------------------------------------------------


def face_normal_gram(basis: EigenBasis, faces) -> np.ndarray:
    """``int_faces dl_j/dnu dl_k/dnu dS`` for the requested face labels."""
    spec = basis.domain
    v = spec.vertical_axis
    wanted = []  # (axis, side)
    for face in faces:
        if face == GAMMA1:
            wanted.append((v, +1))
        elif face == GAMMA2:
            wanted.append((v, -1))
        elif face == UPSILON:
            wanted.extend((a, s) for a in spec.lateral_axes for s in (+1, -1))
        else:
            raise SpectralError(f"unknown face {face!r}")
    n = basis.count
    out = np.zeros((n, n))
    for axis, side in sorted(set(wanted)):
        m = spec.half_sizes[axis]
        k = basis.indices[:, axis]
        dn = sine_mode_derivative(m, k, side * m)
        term = np.outer(dn, dn)
        for other in range(spec.dim):
            if other != axis:
                ko = basis.indices[:, other]
                term = term * (ko[:, None] == ko[None, :])
        out += term
    return out


def time_quadrature(T: float, max_frequency: float, order: int = 16):
    panels = max(1, int(math.ceil(T * max_frequency / math.pi)) + 1)
    return gauss_legendre_panels([0.0, T], order, subdivide=panels)


def _time_integral(state: ModalState, gram: np.ndarray, T: float, which: str, order: int) -> float:
    nu = state.basis.frequencies
    active = (state.b0 != 0) | (state.b1 != 0)
    if not active.any():
        return 0.0
    nu_a = nu[active]
    ts, ws = time_quadrature(T, float(nu_a.max()), order)
    ph = np.outer(ts, nu_a)
    c, s = np.cos(ph), np.sin(ph)
    b0, b1 = state.b0[active], state.b1[active]
    if which == "position":
        coef = b0 * c + (b1 / nu_a) * s
    else:
        coef = -(b0 * nu_a) * s + b1 * c
    g = gram[np.ix_(active, active)]
    return float(ws @ np.sum((coef @ g) * coef, axis=1))


def normal_trace_energy(state: ModalState, faces, T: float, order: int = 16) -> float:
    """``int_0^T int_faces |du/dnu|^2`` for the conservative solution."""
    return _time_integral(state, face_normal_gram(state.basis, faces), T, "position", order)


def observed_velocity_energy(state: ModalState, boxes, T: float, order: int = 16) -> float:
    """``int_0^T int_region |du/dt|^2`` over a union of boxes."""
    return _time_integral(state, state.basis.region_mass(boxes), T, "velocity", order)
