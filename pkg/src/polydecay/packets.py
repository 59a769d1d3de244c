"""Gaussian coherent states, image kernels and the reflection schedule.

The weight

    a(x, t, s) = (i s + 1)^(-3/2) exp(-|x|^2 / (4 h (i s + 1)))
                 * (-i h s + 1)^(-1/2) exp(-t^2 / (4 (-i h s + 1)))

solves ``(i d_s + h (Lap_x - d_t^2)) a = 0``.  All complex powers use the
principal branch; the bases have positive real part for real ``s``, so the
branch is continuous in ``s`` and equals 1 at ``s = 0``.

Image kernels are evaluated per frequency ``(xi, tau)`` with the data
transform set to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import DomainSpec


class PacketError(ValueError):
    pass


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------


def _space_factor(x, s, h):
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    c = 1j * np.asarray(s, dtype=float) + 1.0
    return c ** -1.5 * np.exp(-r2 / (4 * h * c))


def eval_a(x, t, s, h):
    """The weight ``a``; ``x`` has a trailing axis of length 3 and broadcasts."""
    d = -1j * h * np.asarray(s, dtype=float) + 1.0
    t = np.asarray(t, dtype=float)
    return _space_factor(x, s, h) * d ** -0.5 * np.exp(-t * t / (4 * d))


def eval_a_tilde(x, t, s, h):
    """Variant weight whose time factor is ``sqrt(2 / (-i h s + 2)) exp(-t^2 / (4 (-i h s + 2)))``."""
    d = -1j * h * np.asarray(s, dtype=float) + 2.0
    t = np.asarray(t, dtype=float)
    return _space_factor(x, s, h) * (0.5 * d) ** -0.5 * np.exp(-t * t / (4 * d))


def modulus_a(x, t, s, h):
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    hs2 = (h * s) ** 2 + 1
    return ((s * s + 1) ** -0.75 * hs2 ** -0.25
            * np.exp(-r2 / (4 * h * (s * s + 1))) * np.exp(-t * t / (4 * hs2)))


def dispersion_peak(s, h):
    """``sup_{x,t} |a|``, reached at ``x = 0, t = 0``."""
    s = np.asarray(s, dtype=float)
    return (s * s + 1) ** -0.75 * ((h * s) ** 2 + 1) ** -0.25


def pde_residual(evaluator, x, t, s, h, step):
    """Central-difference value of ``(i d_s + h (Lap_x - d_t^2)) f`` at one point.

    ``evaluator(x, t, s, h)`` must accept a length-3 ``x``.  The error is
    ``O(step^2)`` for smooth ``f``.
    """
    x = np.asarray(x, dtype=float)
    if s - step < 0:
        raise PacketError("stencil leaves s >= 0; reduce the step")
    f0 = evaluator(x, t, s, h)
    ds = (evaluator(x, t, s + step, h) - evaluator(x, t, s - step, h)) / (2 * step)
    lap = 0.0
    for k in range(3):
        e = np.zeros(3)
        e[k] = step
        lap = lap + (evaluator(x + e, t, s, h) - 2 * f0 + evaluator(x - e, t, s, h)) / step**2
    dtt = (evaluator(x, t + step, s, h) - 2 * f0 + evaluator(x, t - step, s, h)) / step**2
    return complex(1j * ds + h * (lap - dtt))


# ---------------------------------------------------------------------------
# image kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PacketParams:
    h: float
    x_o: tuple
    rho: float
    xi_o3: int
    h_o: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "x_o", tuple(float(v) for v in self.x_o))
        if len(self.x_o) != 3:
            raise PacketError("x_o must be a 3-vector")
        if not self.h > 0:
            raise PacketError("h must be positive")
        if self.h_o is not None and self.h > self.h_o:
            raise PacketError(f"h={self.h} exceeds h_o={self.h_o}")
        if not self.rho > 0:
            raise PacketError("rho must be positive")
        if int(self.xi_o3) != self.xi_o3 or int(self.xi_o3) % 2 == 0:
            raise PacketError(f"xi_o3 must be an odd integer, got {self.xi_o3}")
        object.__setattr__(self, "xi_o3", int(self.xi_o3))

    @property
    def sigma(self) -> int:
        return 1 if self.xi_o3 > 0 else -1

    @property
    def xi3_window(self) -> tuple:
        return (self.xi_o3 - 1.0, self.xi_o3 + 1.0)

    @classmethod
    def for_domain(cls, spec: DomainSpec, h: float, x_o, xi_o3: int) -> "PacketParams":
        """Parameters tied to a 3-D domain: ``h <= h_o`` and ``x_o`` in closed ``omega0``."""
        if spec.dim != 3:
            raise PacketError("packets live in the 3-D box")
        for v, (lo, hi) in zip(x_o, spec.omega0_box()):
            if not lo <= v <= hi:
                raise PacketError(f"x_o={tuple(x_o)} is not in the closure of omega0")
        return cls(h, tuple(x_o), spec.rho, xi_o3, spec.h_o)


def image_integrand(n: int, x, t, s, xi, tau, params: PacketParams) -> complex:
    """Per-frequency kernel of the ``n``-th image operator."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    h, rho, sg = params.h, params.rho, params.sigma
    xo = params.x_o
    par = -1.0 if n % 2 else 1.0
    hs = h * s
    # the n-independent part of the phase is kept apart so that paired
    # images share it to the last bit
    common = x[0] * xi[0] + x[1] * xi[1] + t * tau - (xi @ xi - tau * tau) * hs
    # unfolded height of x3 seen from the n-th image; the third slot of a
    # is par * (unfolded - x_o3 - 2 xi3 h s)
    unfolded = par * x[2] + 2 * n * sg * rho
    image = unfolded * xi[2]
    arg = np.array([
        x[0] - xo[0] - 2 * xi[0] * hs,
        x[1] - xo[1] - 2 * xi[1] * hs,
        par * (unfolded - (xo[2] + 2 * xi[2] * hs)),
    ])
    weight = eval_a(arg, t + 2 * tau * hs, s, h)
    return complex(par * (np.exp(1j * common) * (np.exp(1j * image) * weight)))


def cancellation_residual(n: int, x1, x2, t, s, xi, tau, params: PacketParams) -> complex:
    """Sum of the ``n`` and ``n+1`` kernels on the face ``x3 = (-1)^n sigma rho``."""
    x3 = (-1.0 if n % 2 else 1.0) * params.sigma * params.rho
    x = (x1, x2, x3)
    return image_integrand(n, x, t, s, xi, tau, params) + image_integrand(n + 1, x, t, s, xi, tau, params)


@dataclass(frozen=True)
class ReflectionSchedule:
    P: int
    Q: int
    L: float

    def __post_init__(self):
        if self.P < 0 or self.Q < 0 or int(self.P) != self.P or int(self.Q) != self.Q:
            raise PacketError("P and Q must be non-negative integers")
        if not self.L > 0:
            raise PacketError("L must be positive")

    @property
    def indices(self) -> range:
        return range(-2 * self.Q, 2 * self.P + 2)


def face_terms(params: PacketParams, schedule: ReflectionSchedule, face: float,
               x1, x2, t, s, xi, tau) -> np.ndarray:
    x = (x1, x2, face)
    return np.array([image_integrand(n, x, t, s, xi, tau, params) for n in schedule.indices])


def face_sum(params: PacketParams, schedule: ReflectionSchedule, face: float,
             x1, x2, t, s, xi, tau) -> complex:
    """Image sum ``n = -2Q .. 2P+1`` on the face ``x3 = face`` (``+-rho``)."""
    if not math.isclose(abs(face), params.rho, rel_tol=0, abs_tol=1e-15 * params.rho):
        raise PacketError("face must be +rho or -rho")
    return complex(face_terms(params, schedule, face, x1, x2, t, s, xi, tau).sum())


def choose_PQ(L: float, xi_o3: int, rho: float, h_o: float) -> ReflectionSchedule:
    """Smallest integer image counts pushing remote images past distance ``sqrt(s^2+1)``."""
    if not L > 0:
        raise PacketError("L must be positive")
    Q = math.ceil((L + 1) / (4 * rho))
    P = math.ceil(((L + 1) + 2 * (abs(xi_o3) + 1) * h_o * L) / (4 * rho))
    return ReflectionSchedule(P, Q, float(L))


def remote_offsets(schedule: ReflectionSchedule, sigma: int, rho: float, x_o3, xi3, h, s):
    """Third-slot offsets of the two extreme images left on the far face."""
    q_off = (4 * schedule.Q + 1) * sigma * rho + x_o3 + 2 * xi3 * h * s
    p_off = (4 * schedule.P + 3) * sigma * rho - x_o3 - 2 * xi3 * h * s
    return q_off, p_off


def image_gaussian_sum(x3, x_o3, xi3, h, s, rho: float = 1.0, sigma: int = 1) -> float:
    """``sum_n exp(-(v_n)^2 / (4 h (s^2+1)))`` over all image centres.

    ``v_n = (-1)^n x3 sigma + 2 n rho - x_o3 sigma - 2 xi3 h s sigma``; terms
    below 1e-18 are dropped once the walk away from the peak has started.
    """
    if not h > 0:
        raise PacketError("h must be positive")
    width = 4 * h * (s * s + 1)
    shift = sigma * (x_o3 + 2 * xi3 * h * s)
    centre = int(round(shift / (2 * rho)))

    def term(n):
        v = (-1.0 if n % 2 else 1.0) * x3 * sigma + 2 * n * rho - shift
        return math.exp(-v * v / width)

    total = sum(term(n) for n in range(centre - 2, centre + 3))
    for direction in (1, -1):
        n = centre + 3 * direction
        while True:
            val = term(n)
            total += val
            if val < 1e-18:
                break
            n += direction
    return total


def image_sum_constant(rho: float) -> float:
    """A constant ``c`` valid for every argument: ``sum <= 4 + c sqrt(h (s^2+1))``.

    Each parity class of images is a Gaussian comb of spacing ``4 rho``, whose
    sum is at most ``1 + sqrt(pi * width) / (4 rho)``.
    """
    return 2 * math.sqrt(math.pi) / rho + 1


def calibrate_image_constant(samples, rho: float = 1.0, sigma: int = 1) -> float:
    """Brute-force ``max (sum - 4) / sqrt(h (s^2+1))`` over sample tuples ``(x3, x_o3, xi3, h, s)``."""
    best = 0.0
    for x3, xo3, xi3, h, s in samples:
        val = (image_gaussian_sum(x3, xo3, xi3, h, s, rho, sigma) - 4) / math.sqrt(h * (s * s + 1))
        best = max(best, val)
    return best


def choose_lambda_L(h: float, gamma: float):
    """Balance ``h^-1.5 lambda^-0.5 = h^0.5`` and ``h^-1.5 L^-0.5 (lambda/h)^gamma = h^0.5``."""
    if not 0 < h <= 1:
        raise PacketError(f"h must lie in (0, 1], got {h}")
    if not gamma >= 1:
        raise PacketError(f"gamma must be >= 1, got {gamma}")
    lam = h ** -4.0
    L = h ** -(4.0 + 10.0 * gamma)
    r1, r2 = lambda_L_residuals(h, gamma, lam, L)
    if max(abs(r1), abs(r2)) > 1e-12:
        raise PacketError(f"balancing identities off by {max(abs(r1), abs(r2))}")
    return lam, L


def lambda_L_residuals(h: float, gamma: float, lam: float, L: float):
    """Relative residuals of the two balancing identities."""
    target = math.sqrt(h)
    first = h ** -1.5 / math.sqrt(lam)
    second = h ** -1.5 / math.sqrt(L) * (lam / h) ** gamma
    return first / target - 1.0, second / target - 1.0


# ---------------------------------------------------------------------------
# identity suite
# ---------------------------------------------------------------------------


def random_kernel_args(rng: np.random.Generator, rho: float = 1.0):
    """One random ``(params, x1, x2, t, s, xi, tau)`` tuple with xi3 in its window."""
    xi_o3 = int(rng.choice([-7, -5, -3, -1, 1, 3, 5, 7]))
    h = float(rng.uniform(0.2, 1.0))
    x_o = (rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-rho / 4, rho / 4))
    params = PacketParams(h, x_o, rho, xi_o3)
    xi = np.array([rng.uniform(-3, 3), rng.uniform(-3, 3), xi_o3 + rng.uniform(-1, 1)])
    return (params, x_o[0] + rng.uniform(-1, 1), x_o[1] + rng.uniform(-1, 1),
            float(rng.uniform(-2, 2)), float(rng.uniform(0, 5)), xi, float(rng.uniform(-3, 3)))


def relative_cancellation(n: int, params, x1, x2, t, s, xi, tau) -> float:
    x3 = (-1.0 if n % 2 else 1.0) * params.sigma * params.rho
    x = (x1, x2, x3)
    a = image_integrand(n, x, t, s, xi, tau, params)
    b = image_integrand(n + 1, x, t, s, xi, tau, params)
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a + b) / scale


def face_sum_errors(params, schedule, x1, x2, t, s, xi, tau):
    """Relative errors ``(near, far)`` of the face-sum reductions."""
    sg, rho = params.sigma, params.rho
    near = face_terms(params, schedule, sg * rho, x1, x2, t, s, xi, tau)
    far = face_terms(params, schedule, -sg * rho, x1, x2, t, s, xi, tau)
    near_scale = max(np.abs(near).max(), np.finfo(float).tiny)
    far_scale = max(np.abs(far).max(), np.finfo(float).tiny)
    near_err = abs(near.sum()) / near_scale
    far_err = abs(far.sum() - (far[0] + far[-1])) / far_scale
    return float(near_err), float(far_err)


def schedule_grid(L: float, xi_o3: int, rho: float, h_o: float, per_axis: int = 10):
    """Tensor grid over ``(s, h, x_o3, xi3)`` with ``per_axis`` values each."""
    s = np.linspace(0.0, L, per_axis)
    h = np.linspace(h_o / per_axis, h_o, per_axis)
    xo3 = np.linspace(-rho / 4, rho / 4, per_axis)
    xi3 = np.linspace(xi_o3 - 1, xi_o3 + 1, per_axis)
    return [g.ravel() for g in np.meshgrid(s, h, xo3, xi3, indexing="ij")]


def schedule_min_margin(L: float, xi_o3: int, rho: float, h_o: float, per_axis: int = 10) -> float:
    """``min(offset^2 - (s^2 + 1))`` over the grid for both remote offsets."""
    sched = choose_PQ(L, xi_o3, rho, h_o)
    sigma = 1 if xi_o3 > 0 else -1
    s, h, xo3, xi3 = schedule_grid(L, xi_o3, rho, h_o, per_axis)
    q_off, p_off = remote_offsets(sched, sigma, rho, xo3, xi3, h, s)
    need = s * s + 1
    return float(min((q_off**2 - need).min(), (p_off**2 - need).min()))


def image_sum_samples(L: float, xi_o3: int, rho: float, h_o: float, count: int, seed: int):
    """Quasi-random ``(x3, x_o3, xi3, h, s)`` tuples."""
    from scipy.stats import qmc

    u = qmc.Halton(d=5, scramble=True, seed=seed).random(count)
    x3 = rho * (2 * u[:, 0] - 1)
    xo3 = rho / 4 * (2 * u[:, 1] - 1)
    xi3 = xi_o3 - 1 + 2 * u[:, 2]
    h = h_o * (1 - u[:, 3])  # (0, h_o]
    s = L * u[:, 4]
    return list(zip(x3, xo3, xi3, h, s))


def identity_suite(seed: int = 0, samples: int = 1000) -> dict:
    """Run every kernel identity on random inputs; one entry per identity."""
    rng = np.random.default_rng(seed)
    out = {}

    # modulus law
    pts = rng.normal(size=(samples, 3)) * 0.7
    ts, ss = rng.normal(size=samples), rng.uniform(0, 5, samples)
    hs = rng.uniform(0.01, 1, samples)
    mod_err = np.abs(np.abs(eval_a(pts, ts, ss, hs)) - modulus_a(pts, ts, ss, hs)).max()
    out["modulus"] = {"max_residual": float(mod_err), "samples": samples, "threshold": 1e-12}

    # Schroedinger identity, second order
    ratios = {"a": [], "a_tilde": []}
    for _ in range(100):
        h = float(10 ** rng.uniform(-2, 0))
        x = rng.normal(size=3) * math.sqrt(h)
        t, s = float(rng.normal()), float(rng.uniform(0.2, 3))
        step = 0.02 * math.sqrt(h)
        for name, ev in (("a", eval_a), ("a_tilde", eval_a_tilde)):
            r1 = abs(pde_residual(ev, x, t, s, h, step))
            r2 = abs(pde_residual(ev, x, t, s, h, step / 2))
            ratios[name].append(r1 / r2 if r2 > 0 else math.inf)
    for name, r in ratios.items():
        out[f"pde_order_{name}"] = {"min_ratio": float(min(r)), "samples": 100, "threshold": 3.5}

    # reflection cancellation
    worst = 0.0
    for _ in range(samples):
        args = random_kernel_args(rng)
        n = int(rng.integers(-4, 5))
        worst = max(worst, relative_cancellation(n, *args))
    out["cancellation"] = {"max_residual": worst, "samples": samples, "threshold": 1e-13}

    # face sums
    near_w = far_w = 0.0
    for _ in range(200):
        params, x1, x2, t, s, xi, tau = random_kernel_args(rng)
        sched = ReflectionSchedule(int(rng.integers(0, 7)), int(rng.integers(0, 7)), 1.0)
        ne, fe = face_sum_errors(params, sched, x1, x2, t, s, xi, tau)
        near_w, far_w = max(near_w, ne), max(far_w, fe)
    out["face_sum_near"] = {"max_residual": near_w, "samples": 200, "threshold": 1e-12}
    out["face_sum_far"] = {"max_residual": far_w, "samples": 200, "threshold": 1e-12}

    # schedule guarantee and image-sum bound
    margins = []
    image_c, image_excess = 0.0, -math.inf
    for L in (1.0, 3.0, 10.0):
        for xi_o3 in (-7, -3, -1, 1, 3, 7):
            margins.append(schedule_min_margin(L, xi_o3, 1.0, 1.0))
            sample = image_sum_samples(L, xi_o3, 1.0, 1.0, 1000, seed + 7)
            c = calibrate_image_constant(sample, 1.0, 1 if xi_o3 > 0 else -1)
            image_c = max(image_c, c)
    out["schedule_offsets"] = {"min_margin": float(min(margins)), "threshold": 0.0,
                               "samples": 10**4 * len(margins)}
    out["image_sum_constant"] = {"calibrated_c": image_c, "analytic_c": image_sum_constant(1.0),
                                 "samples": 1000 * len(margins)}

    # lambda / L balancing
    bal = 0.0
    for h in (1.0, 0.5, 0.1, 0.01):
        for gamma in (1.5, 2.0, 3.0):
            lam, L = choose_lambda_L(h, gamma)
            bal = max(bal, *map(abs, lambda_L_residuals(h, gamma, lam, L)))
    out["lambda_L"] = {"max_residual": bal, "samples": 12, "threshold": 1e-12}

    for entry in out.values():
        if "max_residual" in entry:
            entry["passed"] = entry["max_residual"] <= entry["threshold"]
        elif "min_ratio" in entry:
            entry["passed"] = entry["min_ratio"] >= entry["threshold"]
        elif "min_margin" in entry:
            entry["passed"] = entry["min_margin"] >= entry["threshold"]
        else:
            entry["passed"] = entry["calibrated_c"] <= entry["analytic_c"]
    return out
