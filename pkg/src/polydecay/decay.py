"""Energy-trace analysis, observability ratios and the iteration lemma check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import (
    DampedPropagator,
    ModalState,
    SpectralError,
    energy_G,
    observed_velocity_energy,
)


class DecayError(ValueError):
    pass


class ObservabilityError(ArithmeticError):
    """The observation integral vanished."""


class LemmaError(ValueError):
    pass


# ---------------------------------------------------------------------------
# traces and fits
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class EnergyTrace:
    times: np.ndarray
    energies: np.ndarray
    dissipation: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.energies = np.asarray(self.energies, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.energies.shape:
            raise DecayError("times and energies must be 1-D arrays of equal length")
        if len(self.times) == 0:
            raise DecayError("empty trace")
        if np.any(self.times < 0) or np.any(np.diff(self.times) <= 0):
            raise DecayError("times must be >= 0 and strictly increasing")
        if np.any(self.energies < 0) or not np.all(np.isfinite(self.energies)):
            raise DecayError("energies must be finite and >= 0")
        if self.dissipation is not None:
            self.dissipation = np.asarray(self.dissipation, dtype=float)
            if self.dissipation.shape != self.times.shape:
                raise DecayError("dissipation column has the wrong length")
            slack = 1e-12 * max(1.0, float(np.max(np.abs(self.dissipation))))
            if np.any(np.diff(self.dissipation) < -slack):
                raise DecayError("cumulative dissipation must be non-decreasing")

    def __len__(self):
        return len(self.times)

    def balance_residual(self) -> np.ndarray:
        """``E(t) + dissipation(t) - E(0)`` per record."""
        if self.dissipation is None:
            raise DecayError("trace has no dissipation column")
        return self.energies + self.dissipation - self.energies[0]

    def rows(self):
        diss = self.dissipation if self.dissipation is not None else np.full(len(self), np.nan)
        return list(zip(self.times.tolist(), self.energies.tolist(), diss.tolist()))


ENVELOPE_SLACK = 1e-12


@dataclass(frozen=True)
class DecayFit:
    """Least-squares power law ``E ~ C t**-delta`` on a window.

    ``max_residual`` is the largest positive log-residual, so
    ``envelope_C = C * exp(max_residual)`` gives the lowest curve of the
    fitted slope lying above every sample of the window.  A relative
    ``ENVELOPE_SLACK`` absorbs rounding at the touching sample.
    """

    C: float
    delta: float
    window: tuple
    rms_residual: float
    max_residual: float
    samples: int

    @property
    def envelope_C(self) -> float:
        return self.C * math.exp(max(self.max_residual, 0.0)) * (1 + ENVELOPE_SLACK)

    def predict(self, t) -> np.ndarray:
        return self.C * np.asarray(t, dtype=float) ** (-self.delta)

    def envelope(self, t) -> np.ndarray:
        return self.envelope_C * np.asarray(t, dtype=float) ** (-self.delta)

    def to_dict(self) -> dict:
        return {"C": self.C, "delta": self.delta, "window": list(self.window),
                "rms_residual": self.rms_residual, "max_residual": self.max_residual,
                "envelope_C": self.envelope_C, "samples": self.samples}


def fit_power_law(trace: EnergyTrace, window=None) -> DecayFit:
    lo, hi = window if window is not None else (trace.times[trace.times > 0].min(), trace.times[-1])
    mask = (trace.times >= lo) & (trace.times <= hi) & (trace.times > 0)
    if mask.sum() < 5:
        raise DecayError(f"need >= 5 samples with t > 0 in window {(lo, hi)}, got {int(mask.sum())}")
    t, e = trace.times[mask], trace.energies[mask]
    if np.any(e <= 0):
        raise DecayError("energies must be positive inside the fit window")
    x, y = np.log(t), np.log(e)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return DecayFit(float(math.exp(intercept)), float(-slope), (float(lo), float(hi)),
                    float(np.sqrt(np.mean(resid**2))), float(resid.max()), int(mask.sum()))


def halving_times(trace: EnergyTrace) -> np.ndarray:
    """Times at which ``E`` first reaches ``E(0) / 2**k``, ``k = 1, 2, ...``.

    Between samples the crossing is located by linear interpolation of
    ``log E``, which is exact for exponential decay.
    """
    e0 = trace.energies[0]
    if e0 <= 0:
        raise DecayError("initial energy must be positive")
    t, e = trace.times, trace.energies
    out = []
    level = 1
    for i in range(1, len(e)):
        while e[i] <= e0 * 2.0**-level:
            target = math.log(e0) - level * math.log(2.0)
            a, b = e[i - 1], e[i]
            if b <= 0:
                out.append(float(t[i]))
            else:
                la, lb = math.log(a), math.log(b)
                frac = 1.0 if la == lb else (la - target) / (la - lb)
                out.append(float(t[i - 1] + min(max(frac, 0.0), 1.0) * (t[i] - t[i - 1])))
            level += 1
            if level > 1000:
                break
    return np.asarray(out)


def gap_ratios(halvings) -> np.ndarray:
    gaps = np.diff(np.asarray(halvings, dtype=float))
    if len(gaps) < 2:
        return np.zeros(0)
    return gaps[1:] / gaps[:-1]


@dataclass(frozen=True)
class HalvingReport:
    halvings: tuple
    ratios: tuple
    verdict: str  # "exponential", "power-law" or "undetermined"
    delta_estimate: float | None

    def to_dict(self) -> dict:
        return {"halvings": list(self.halvings), "ratios": list(self.ratios),
                "verdict": self.verdict, "delta_estimate": self.delta_estimate}


def classify_halving(trace: EnergyTrace, after: float = 0.0, exp_band=(0.9, 1.1),
                     power_min: float = 1.3) -> HalvingReport:
    """Sort a trace into exponential or power-law decay by its halving gaps.

    Only halving times later than ``after`` are used.  Constant gaps signal
    exponential decay; gaps growing by a fixed factor ``r`` signal a power
    law with ``delta = ln 2 / ln r``.
    """
    th = halving_times(trace)
    th = th[th > after]
    r = gap_ratios(th)
    verdict, delta = "undetermined", None
    if len(r) >= 2:
        if np.all((r >= exp_band[0]) & (r <= exp_band[1])):
            verdict = "exponential"
        elif np.all(r >= power_min):
            verdict = "power-law"
            delta = float(math.log(2.0) / math.log(float(np.median(r))))
    return HalvingReport(tuple(th.tolist()), tuple(r.tolist()), verdict, delta)


# ---------------------------------------------------------------------------
# observability
# ---------------------------------------------------------------------------


def observability_ratio(state: ModalState, region, T: float, quadrature_order: int = 16) -> float:
    """``||(u0, u1)||^2_{H1 x L2} / int_0^T int_region |du/dt|^2``.

    ``region`` is a region name of the domain (``"box"`` for all of it) or a
    list of boxes.  The spatial integral is exact per mode pair; the time
    integral uses composite Gauss-Legendre panels.
    """
    if not T > 0:
        raise DecayError("T must be positive")
    spec = state.basis.domain
    boxes = spec.region_boxes(region) if isinstance(region, str) else list(region)
    num = energy_G(state)
    den = observed_velocity_energy(state, boxes, T, quadrature_order)
    if not den > 0:
        raise ObservabilityError("observation integral is zero; ratio undefined")
    return num / den


# ---------------------------------------------------------------------------
# iteration lemma
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LemmaParams:
    c1: float
    c2: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not self.c1 > 1:
            raise LemmaError(f"c1 must exceed 1, got {self.c1}")
        for name in ("c2", "beta", "gamma"):
            if not getattr(self, name) > 0:
                raise LemmaError(f"{name} must be positive, got {getattr(self, name)}")


def lemma_b_bound(params: LemmaParams, t) -> np.ndarray | float:
    """``(2 c1 / t)**(1/(beta+1)) + c2 * t**(-1/gamma)`` for ``t >= 2``."""
    ta = np.asarray(t, dtype=float)
    if np.any(ta < 2):
        raise LemmaError("the bound is only available for t >= 2")
    val = (2 * params.c1 / ta) ** (1 / (params.beta + 1)) + params.c2 * ta ** (-1 / params.gamma)
    return float(val) if np.ndim(val) == 0 else val


@dataclass
class LemmaReport:
    hypothesis_holds: bool
    holds_up_to: float | None  # largest s with the hypothesis on the grid prefix [0, s]
    min_margin: float
    conclusion_asserted: bool
    conclusion_checked: int
    conclusion_violations: int
    min_conclusion_slack: float | None
    margins: np.ndarray = field(repr=False)
    beyond_grid: int = 0

    def to_dict(self) -> dict:
        return {"hypothesis_holds": self.hypothesis_holds, "holds_up_to": self.holds_up_to,
                "min_margin": self.min_margin, "conclusion_asserted": self.conclusion_asserted,
                "conclusion_checked": self.conclusion_checked,
                "conclusion_violations": self.conclusion_violations,
                "min_conclusion_slack": self.min_conclusion_slack,
                "beyond_grid": self.beyond_grid}


def lemma_b_verify(F, params: LemmaParams, grid, t_grid=None) -> LemmaReport:
    """Check the recursive hypothesis on ``grid`` and, where it holds, the bound.

    ``F`` is a callable or an array of values on ``grid``.  Off-grid values
    use linear interpolation.  Points whose jump ``(c2/F(s))**gamma + s``
    leaves the grid cannot be checked; they are counted in ``beyond_grid``
    and end the verified prefix.  The hypothesis margin at ``s`` is
    ``rhs / F(s) - 1`` (NaN where unchecked).  The conclusion is
    checked at ``t_grid`` (default: ``sqrt`` of the grid points, ``t >= 2``)
    for every ``t`` with ``t**2`` inside the verified prefix.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise LemmaError("grid must be increasing, non-negative and have >= 2 points")
    values = np.asarray(F(grid) if callable(F) else F, dtype=float)
    if values.shape != grid.shape:
        raise LemmaError("F samples must match the grid")
    if np.any(values <= 0) or np.any(values > 1 + 1e-12):
        raise LemmaError("F must be positive and bounded by one")
    if np.any(np.diff(values) > 0):
        raise LemmaError("F must be non-increasing")

    def interp(s):
        return np.interp(s, grid, values)

    jump = (params.c2 / values) ** params.gamma + grid
    inside = jump <= grid[-1]
    rhs = params.c1 * values ** (-params.beta) * (values - interp(jump))
    margins = np.where(inside, rhs / values - 1.0, np.nan)
    # the hypothesis can only be checked where the jump stays on the grid;
    # the verified prefix stops at the first failure or unverifiable point
    stop = np.flatnonzero(~inside | (margins < 0))
    prefix_end = len(grid) if len(stop) == 0 else stop[0]
    holds_up_to = float(grid[prefix_end - 1]) if prefix_end > 0 else None
    checkable = margins[inside]
    holds = bool(len(checkable) > 0 and np.all(checkable >= 0))

    ts = np.sqrt(grid[grid >= 4]) if t_grid is None else np.asarray(t_grid, dtype=float)
    ts = ts[ts >= 2]
    checked, violations, slack = 0, 0, None
    asserted = holds_up_to is not None and len(ts) > 0
    if asserted:
        ts = ts[ts**2 <= holds_up_to]
        checked = len(ts)
        if checked:
            diff = lemma_b_bound(params, ts) - interp(ts**2)
            violations = int(np.sum(diff < 0))
            slack = float(diff.min())
        asserted = checked > 0
    min_margin = float(checkable.min()) if len(checkable) else math.nan
    return LemmaReport(holds, holds_up_to, min_margin, asserted,
                       checked, violations, slack, margins, int(np.sum(~inside)))


def synthetic_lemma_family(k: float, p: float, c2: float, beta: float, margin: float = 0.1):
    """``F(s) = (1 + k s)**-p`` with constants meeting the hypothesis.

    With ``gamma = 1/p`` the jump ``(c2/F)**gamma`` scales with ``1 + k s`` and
    ``F(s) - F(s + jump) = F(s) (1 - q)``, ``q = (1 + k c2**gamma)**-p``; so
    ``c1 = (1 + margin) / (1 - q)`` leaves a relative margin of at least
    ``margin`` since ``F**-beta >= 1``.
    """
    gamma = 1.0 / p
    q = (1 + k * c2**gamma) ** (-p)
    params = LemmaParams((1 + margin) / (1 - q), c2, beta, gamma)
    return (lambda s: (1 + k * np.asarray(s, dtype=float)) ** (-p)), params


def search_lemma_constants(F, grid, c1s, c2s, betas, gammas):
    """First ``LemmaParams`` on a coarse grid for which the hypothesis holds everywhere."""
    for c2 in c2s:
        for gamma in gammas:
            for beta in betas:
                for c1 in c1s:
                    params = LemmaParams(c1, c2, beta, gamma)
                    if lemma_b_verify(F, params, grid).hypothesis_holds:
                        return params
    return None


def lemma_profile(propagator: DampedPropagator, state: ModalState, T: float,
                  record_every: float):
    """Normalized profile ``F(s) ~ E(w, s) + E(w_t, s)`` scaled so ``F(0) = 1``.

    Time derivatives come from the modal equations: with ``b' = b1`` and
    ``b1' = -mu b0 - D b1``.  The raw profile is divided by the energy of
    ``w_tt`` at time zero and then by its own initial value.
    """
    basis = state.basis
    mu = basis.eigenvalues
    D = propagator.D

    def derivative(st: ModalState) -> ModalState:
        return ModalState(basis, st.b1, -mu * st.b0 - D @ st.b1)

    times = np.arange(int(round(T / record_every)) + 1) * record_every
    z = propagator.to_z(state)
    raw = []
    for i, t in enumerate(times):
        if i:
            z, _ = propagator.advance(z, record_every)
        st = propagator.from_z(z)
        raw.append(energy_G(st) + energy_G(derivative(st)))
    second = energy_G(derivative(derivative(state)))
    if second == 0:
        raise SpectralError("second time derivative has zero energy")
    raw = np.asarray(raw) / second
    return times, raw / raw[0]
