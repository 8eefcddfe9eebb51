"""Asymptotic entropy and purification rates from two-point spectra.

With ``y = beta * omega`` and ``Gt = G_K + |G_R|^2`` the rates are

    beta * s_CNT = (1/4pi) int dy [ln(1 + Gt) - Gt + (y / sinh y) G_K]
    beta * J     = (1/4pi) int dy (y / sinh y) G_K / (1 + Gt)

``G_R`` is fixed by ``G_K`` through the fluctuation-dissipation relation
(imaginary part) and Kramers-Kronig (real part). The entropy integrand is
always evaluated in the paired form ``ln(1 + Gt) - |G_R|^2 - G_K (1 - y/sinh y)``
so that a divergent ``G_K`` near ``y = 0`` does not cancel catastrophically.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CONVENTIONS = ("mode_sum", "full_angle")
REFERENCE_TIGHT = 0.375
REFERENCE_UNTIGHT = 0.57


class QuadratureError(RuntimeError):
    """Grid-based quadrature did not pass its refinement check."""


class SpectralWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# elementary functions with safe limits
# --------------------------------------------------------------------------


def y_over_sinh(y):
    """``y / sinh y`` with the limit 1 at ``y = 0``."""
    y = np.abs(np.asarray(y, dtype=float))
    out = np.empty_like(y)
    small = y < 1e-4
    out[small] = 1.0 - y[small] ** 2 / 6
    big = ~small
    yb = np.minimum(y[big], 700.0)
    out[big] = np.where(y[big] > 700.0, 0.0, yb / np.sinh(yb))
    return out


def one_minus_y_over_sinh(y):
    """``1 - y / sinh y`` accurate for small ``y`` (series below 1e-2)."""
    y = np.abs(np.asarray(y, dtype=float))
    out = np.empty_like(y)
    small = y < 1e-2
    y2 = y[small] ** 2
    out[small] = y2 / 6 * (1 - 7 * y2 / 60 + 31 * y2**2 / 2520)
    out[~small] = 1.0 - y_over_sinh(y[~small])
    return out


def fdt_factor(omega, beta: float, convention: str = "mode_sum"):
    """Ratio ``Im G_R / G_K``.

    ``mode_sum``: ``tanh(beta omega / 2) / 2`` (what the free-boson mode sum
    gives for the Keldysh/retarded definitions used here); ``full_angle``:
    ``tanh(beta omega) / 2``.
    """
    if convention == "mode_sum":
        return 0.5 * np.tanh(0.5 * beta * np.asarray(omega))
    if convention == "full_angle":
        return 0.5 * np.tanh(beta * np.asarray(omega))
    raise ValueError(f"unknown FDT convention {convention!r}; choose from {CONVENTIONS}")


def _xlog_abs(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    nz = x != 0
    out[nz] = x[nz] * np.log(np.abs(x[nz]))
    return out


def _log_abs(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    nz = x != 0
    out[nz] = np.log(np.abs(x[nz]))
    return out


# --------------------------------------------------------------------------
# Kramers-Kronig on a grid
# --------------------------------------------------------------------------


def _slope_jumps(y, f):
    s = np.diff(f) / np.diff(y)
    c = np.zeros(len(y))
    c[1:] += s
    c[:-1] -= s
    return c


def hilbert_transform(y, f, at=None, chunk: int = 2048):
    """``(1/pi) P int f(y') / (y' - z) dy'`` for piecewise-linear ``f`` on ``y``.

    The integral is done exactly for the linear interpolant of the samples
    (zero outside the grid), so the principal value needs no special
    treatment. Log-divergent endpoint terms are dropped at the endpoints
    themselves.
    """
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    z = y if at is None else np.asarray(at, dtype=float)
    c = _slope_jumps(y, f)
    out = np.empty(len(z))
    for i in range(0, len(z), chunk):
        zz = z[i:i + chunk, None]
        acc = _xlog_abs(zz - y[None, :]) @ c
        zz = zz[:, 0]
        acc += f[-1] * _log_abs(zz - y[-1]) - f[0] * _log_abs(zz - y[0]) + f[-1] - f[0]
        out[i:i + chunk] = acc
    return out / np.pi


def hilbert_matrix(y) -> np.ndarray:
    """Dense matrix ``H`` with ``hilbert_transform(y, f) == H @ f``."""
    y = np.asarray(y, dtype=float)
    M = len(y)
    h = np.diff(y)
    D = np.zeros((M, M))
    rows = np.arange(M - 1)
    # c = (slopes shifted) - slopes, slopes = (f[k+1]-f[k]) / h[k]
    D[rows + 1, rows + 1] += 1 / h
    D[rows + 1, rows] -= 1 / h
    D[rows, rows + 1] -= 1 / h
    D[rows, rows] += 1 / h
    H = _xlog_abs(y[:, None] - y[None, :]) @ D
    H[:, -1] += _log_abs(y - y[-1]) + 1
    H[:, 0] -= _log_abs(y - y[0]) + 1
    return H / np.pi


# --------------------------------------------------------------------------
# data types
# --------------------------------------------------------------------------


@dataclass
class SpectralData:
    """Keldysh spectrum on a symmetric frequency grid plus its retarded partner."""

    omega: np.ndarray
    G_K: np.ndarray
    beta: float
    G_R: np.ndarray
    convention: str = "mode_sum"
    status: list = field(default_factory=list)

    @property
    def G_tilde(self) -> np.ndarray:
        return self.G_K + np.abs(self.G_R) ** 2

    @property
    def y(self) -> np.ndarray:
        return self.beta * self.omega


@dataclass
class RateResult:
    """Entropy rate, purification rate and the three entropy-rate pieces.

    ``joint``, ``marginal`` and ``gain`` are the rate contributions of the
    joint Shannon entropy, the marginal Shannon entropies and the single-step
    gains; ``s_CNT = joint - marginal + gain``. ``marginal`` is infinite when
    ``G_K`` is not integrable, while ``s_CNT`` stays finite.
    """

    s_CNT: float
    purification: float
    joint: float
    marginal: float
    gain: float
    beta: float

    def as_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


def check_symmetric_grid(omega, g_k, tol: float = 1e-10):
    omega = np.asarray(omega, dtype=float)
    g_k = np.asarray(g_k, dtype=float)
    if omega.ndim != 1 or omega.shape != g_k.shape:
        raise ValueError("omega and G_K must be 1-d arrays of equal length")
    if np.any(np.diff(omega) <= 0):
        raise ValueError("frequency grid must be strictly increasing")
    if np.max(np.abs(omega + omega[::-1])) > tol * max(1.0, np.abs(omega).max()):
        raise ValueError("frequency grid must be symmetric under omega -> -omega")
    if np.any(g_k < 0):
        raise ValueError("G_K must be nonnegative")
    if np.max(np.abs(g_k - g_k[::-1])) > tol * max(1.0, np.abs(g_k).max()):
        raise ValueError("G_K must be even in omega")
    return omega, g_k


def fdt_complete(omega, G_K, beta: float, convention: str = "mode_sum",
                 check_refinement: bool = True) -> SpectralData:
    """Attach ``G_R`` to an even, nonnegative ``G_K`` sampled on a symmetric grid."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    omega, g_k = check_symmetric_grid(omega, G_K)
    im = fdt_factor(omega, beta, convention) * g_k
    re = hilbert_transform(omega, im)
    status = []
    if check_refinement and len(omega) >= 9:
        mid = len(omega) // 2
        # keep the subgrid symmetric
        idx = np.unique(np.r_[np.arange(mid, -1, -2), np.arange(mid, len(omega), 2)])
        coarse = hilbert_transform(omega[idx], im[idx])
        scale = np.max(np.abs(re[idx]))
        if scale > 0:
            change = np.max(np.abs(coarse - re[idx])) / scale
            if change > 0.01:
                msg = f"Hilbert transform changes by {change:.1%} under 2x refinement"
                warnings.warn(msg, SpectralWarning, stacklevel=2)
                status.append(msg)
    return SpectralData(omega, g_k, float(beta), re + 1j * im, convention, status)


def spectral_from_function(gk, beta: float, omega_max: float, points: int = 4001,
                           convention: str = "mode_sum") -> SpectralData:
    """Sample ``gk(omega)`` on a uniform symmetric grid and complete it."""
    omega = np.linspace(-omega_max, omega_max, points)
    omega = 0.5 * (omega - omega[::-1])
    g = np.asarray(gk(np.abs(omega)), dtype=float)
    return fdt_complete(omega, g, beta, convention)


def load_spectrum(path):
    """Read ``omega, G_K`` columns from a CSV file.

    ``#`` lines and a non-numeric header row are skipped. A grid covering
    only ``omega >= 0`` is mirrored to the full line (evenness of ``G_K``).
    """
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        try:
            rows.append([float(parts[0]), float(parts[1])])
        except (ValueError, IndexError):
            if rows:
                raise ValueError(f"malformed spectrum row {line!r}") from None
    if len(rows) < 3:
        raise ValueError("spectrum file needs at least three (omega, G_K) rows")
    data = np.array(rows)
    data = data[np.argsort(data[:, 0])]
    omega, g = data[:, 0], data[:, 1]
    if omega[0] >= 0:
        pos = omega > 0
        omega = np.concatenate([-omega[pos][::-1], omega[~pos], omega[pos]])
        g = np.concatenate([g[pos][::-1], g[~pos], g[pos]])
    return check_symmetric_grid(omega, g, tol=1e-8)


# --------------------------------------------------------------------------
# rates
# --------------------------------------------------------------------------


def trapezoid_weights(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    w = np.zeros_like(x)
    d = np.diff(x)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


def _checked_integral(x, f, rtol: float, what: str) -> float:
    fine = float(trapezoid_weights(x) @ f)
    if len(x) >= 5 and np.all(np.isfinite(f)):
        coarse = float(trapezoid_weights(x[::2]) @ f[::2]) if len(x) % 2 else None
        if coarse is not None:
            scale = max(abs(fine), float(trapezoid_weights(x) @ np.abs(f)), 1e-300)
            if abs(coarse - fine) > rtol * scale + 1e-14:
                raise QuadratureError(
                    f"{what}: quadrature not converged (fine {fine:.6g}, coarse {coarse:.6g})")
    return fine


def scnt_rate(sd: SpectralData, rtol: float = 5e-2) -> RateResult:
    """Asymptotic CNT entropy rate and purification rate for ``sd``."""
    y = sd.y
    gk = sd.G_K
    r2 = np.abs(sd.G_R) ** 2
    gt = gk + r2
    paired = np.log1p(gt) - r2 - gk * one_minus_y_over_sinh(y)
    pref = 1.0 / (4 * np.pi)
    total = pref * _checked_integral(sd.omega, paired, rtol, "entropy rate")
    with np.errstate(over="ignore", invalid="ignore"):
        joint = pref * float(trapezoid_weights(sd.omega) @ np.log1p(gt))
        marginal = pref * float(trapezoid_weights(sd.omega) @ gt)
        gain = pref * float(trapezoid_weights(sd.omega) @ (y_over_sinh(y) * gk))
    return RateResult(s_CNT=total, purification=purification_rate(sd, rtol),
                      joint=joint, marginal=marginal, gain=gain, beta=sd.beta)


def purification_rate(sd: SpectralData, rtol: float = 5e-2) -> float:
    """Asymptotic purification rate ``lim J / t``."""
    f = y_over_sinh(sd.y) * sd.G_K / (1 + sd.G_tilde)
    return _checked_integral(sd.omega, f, rtol, "purification rate") / (4 * np.pi)


def _eta(x):
    return (x + 0.5) * np.log(x + 0.5) - _xlogx(x - 0.5)


def _xlogx(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def purification_rate_resummed(sd: SpectralData, rtol: float = 5e-2) -> float:
    """Purification rate without linearizing the mode entropy.

    Over a long window every frequency bin of width ``2 pi / t`` carries one
    collective mode whose symplectic value drops from
    ``eps = coth(y/2)/2`` to ``nu = eps - G_K / (sinh(y) (1 + G~))``; the
    rate is ``(1/4 pi) * integral over the full line of eta(eps) - eta(nu)``.
    Expanding ``eta`` to first order in ``eps - nu`` gives
    :func:`purification_rate`, so the two agree at weak coupling. Under the
    ``mode_sum`` FDT convention ``nu >= 1/2`` holds identically.
    """
    y = np.abs(sd.y)
    ratio = sd.G_K / (1 + sd.G_tilde)
    f = np.empty_like(y)
    small = y < 1e-6
    f[small] = ratio[small]  # eta'(eps) (eps - nu) -> G_K / (1 + G~)
    ys = y[~small]
    eps = 0.5 / np.tanh(0.5 * ys)
    nu = np.maximum(eps - ratio[~small] / np.sinh(ys), 0.5)
    f[~small] = _eta(eps) - _eta(nu)
    return _checked_integral(sd.omega, f, rtol, "resummed purification rate") / (4 * np.pi)


# --------------------------------------------------------------------------
# bound constants
# --------------------------------------------------------------------------


def _gauss_legendre_panels(f, a: float, b: float, step: float, order: int = 10) -> float:
    x, w = np.polynomial.legendre.leggauss(order)
    n = max(1, int(np.ceil((b - a) / step)))
    edges = np.linspace(a, b, n + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    pts = mid + half * x[None, :]
    return float(np.sum(half * w[None, :] * f(pts)))


def untight_integrand(y):
    """``ln(sinh y / (sinh y - y)) - y / sinh y``, the pointwise optimum without FDT."""
    return -np.log(one_minus_y_over_sinh(y)) - y_over_sinh(y)


def untight_bound_constant(step: float = 0.05, order: int = 10, u_max: float = 8.0) -> float:
    """``int dy/(4 pi) [ln(sinh y/(sinh y - y)) - y/sinh y]`` over the real line.

    Computed as ``(1/2pi) int_0^inf`` after ``y = u^2``, which removes the
    ``ln(6/y^2)`` singularity at the origin; ``step`` is the panel width in
    ``u`` for composite Gauss-Legendre.
    """
    val = _gauss_legendre_panels(lambda u: untight_integrand(u * u) * 2 * u, 0.0, u_max,
                                 step, order)
    return val / (2 * np.pi)


def y_over_sinh_integral(step: float = 0.1, order: int = 10, y_max: float = 60.0) -> float:
    """``int_{-inf}^{inf} y / sinh y dy`` (equals ``pi^2 / 2``)."""
    return 2 * _gauss_legendre_panels(y_over_sinh, 0.0, y_max, step, order)


def purification_bound() -> float:
    """Upper bound on ``beta * J`` reached when ``G_K / (1 + Gt) -> 1``: ``pi / 8``."""
    return y_over_sinh_integral() / (4 * np.pi)


# --------------------------------------------------------------------------
# FDT-constrained maximization
# --------------------------------------------------------------------------


def maximizer_grid(y_min: float = 1e-4, y_max: float = 30.0, n_geo: int = 80,
                   dy: float = 0.1) -> np.ndarray:
    """Positive half grid: geometric on ``[y_min, 1]``, uniform with step ``dy`` above."""
    geo = np.geomspace(y_min, 1.0, n_geo)
    lin = np.arange(1.0 + dy, y_max + dy / 2, dy)
    return np.concatenate([geo, lin])


class FDTProblem:
    """Discretized ``beta * s_CNT`` as a function of the even ``G_K`` on a half grid.

    The full grid is ``[-w_M..-w_1, 0, w_1..w_M]`` with ``w = y / beta``; the
    value at the origin is tied to the first positive node. With ``fdt=False``
    the retarded function is set to zero.
    """

    def __init__(self, half_omega, beta: float = 1.0, fdt: bool = True,
                 convention: str = "mode_sum"):
        self.half = np.asarray(half_omega, dtype=float)
        self.beta = float(beta)
        self.M = M = len(self.half)
        self.omega = np.concatenate([-self.half[::-1], [0.0], self.half])
        y = self.beta * self.omega
        self.w = trapezoid_weights(self.omega)
        self.b = one_minus_y_over_sinh(y)
        self.fdt = fdt
        if fdt:
            self.t = fdt_factor(self.omega, self.beta, convention)
            self.H = hilbert_matrix(self.omega)
        else:
            self.t = np.zeros_like(self.omega)
            self.H = None
        # half-grid quadrature weights seen by each free variable
        self.w_half = self.w[M + 1:] * 2
        self.w_half[0] += self.w[M]

    def expand(self, g):
        return np.concatenate([g[::-1], [g[0]], g])

    def fold(self, gfull):
        M = self.M
        gh = gfull[M + 1:] + gfull[:M][::-1]
        gh[0] += gfull[M]
        return gh

    def evaluate(self, g):
        """Return ``(beta * s_CNT, gradient, G_tilde on the half grid)``."""
        G = self.expand(np.asarray(g, dtype=float))
        im = self.t * G
        re = self.H @ im if self.fdt else np.zeros_like(G)
        r2 = im**2 + re**2
        gt = G + r2
        phi = np.log1p(gt) - r2 - G * self.b
        pref = self.beta / (4 * np.pi)
        value = pref * float(self.w @ phi)
        c = -gt / (1 + gt)
        grad = self.w * (1 / (1 + gt) - self.b) + 2 * self.w * c * im * self.t
        if self.fdt:
            grad = grad + 2 * self.t * (self.H.T @ (self.w * c * re))
        return value, pref * self.fold(grad), gt[self.M + 1:]

    def value(self, g) -> float:
        return self.evaluate(g)[0]


@dataclass
class MaximizerResult:
    """Outcome of :func:`maximize_fdt`; ``y`` and ``G_K`` cover ``y > 0``."""

    y: np.ndarray
    G_K: np.ndarray
    value: float
    alpha: float
    prefactor: float
    converged: bool
    iterations: int
    start_values: dict
    convention: str
    fdt: bool

    def summary(self) -> dict:
        return {
            "value": float(self.value),
            "alpha": float(self.alpha),
            "prefactor": float(self.prefactor),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "convention": self.convention,
            "fdt": self.fdt,
            "start_values": {k: float(v) for k, v in self.start_values.items()},
        }


def projected_ascent(problem: FDTProblem, g0, max_iter: int = 20000, tol: float = 1e-13):
    """Diagonally preconditioned projected gradient ascent with Armijo backtracking.

    The preconditioner is the inverse curvature of the local ``ln(1 + Gt)``
    term, which makes nodes where ``G_K`` is huge (near ``y = 0``) move at a
    sensible rate. Returns ``(g, value, iterations, last_change)``.
    """
    g = np.maximum(np.asarray(g0, dtype=float), 0.0)
    F, grad, gt = problem.evaluate(g)
    scale = 4 * np.pi / (problem.beta * problem.w_half)
    step = 1.0
    change = np.inf
    quiet = 0
    it = 0
    for it in range(1, max_iter + 1):
        D = (1 + gt) ** 2 * scale
        while True:
            trial = np.maximum(g + step * D * grad, 0.0)
            Ft, gradt, gtt = problem.evaluate(trial)
            if Ft >= F + 1e-4 * float(grad @ (trial - g)):
                break
            step *= 0.5
            if step < 1e-14:
                break
        change = Ft - F
        g, F, grad, gt = trial, Ft, gradt, gtt
        step = min(2 * step, 1.0)
        quiet = quiet + 1 if abs(change) < tol else 0
        if quiet >= 5:
            break
    return g, F, it, abs(change)


def fit_power_law(y, g, lo: float = 1e-3, hi: float = 1e-1):
    """Fit ``g ~ A y^(-alpha)`` on ``lo <= y <= hi``; returns ``(alpha, A)``."""
    m = (y >= lo) & (y <= hi) & (g > 0)
    if m.sum() < 2:
        return float("nan"), float("nan")
    slope, icpt = np.polyfit(np.log(y[m]), np.log(g[m]), 1)
    return float(-slope), float(np.exp(icpt))


def untight_optimum(y):
    """``y / (sinh y - y)``: the pointwise maximizer when FDT is ignored."""
    y = np.abs(np.asarray(y, dtype=float))
    return y_over_sinh(y) / one_minus_y_over_sinh(y)


def maximize_fdt(beta: float = 1.0, fdt: bool = True, convention: str = "mode_sum",
                 y_min: float = 1e-4, y_max: float = 30.0, n_geo: int = 80, dy: float = 0.1,
                 max_iter: int = 20000, starts=("flat", "inverse", "untight"),
                 threads: int = 1) -> MaximizerResult:
    """Maximize ``beta * s_CNT`` over nonnegative even ``G_K`` (optionally under FDT)."""
    if y_max < 30 or y_min > 1e-4:
        raise ValueError("grid must span at least |y| <= 30 and reach down to 1e-4")
    y = maximizer_grid(y_min, y_max, n_geo, dy)
    problem = FDTProblem(y / beta, beta=beta, fdt=fdt, convention=convention)
    inits = {
        "flat": np.ones_like(y),
        "inverse": 1.0 / y,
        "untight": np.minimum(untight_optimum(y), 1e12),
    }

    def one(name):
        return name, projected_ascent(problem, inits[name], max_iter=max_iter)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as pool:
            runs = list(pool.map(one, starts))
    else:
        runs = [one(s) for s in starts]
    best_name, (g, F, it, change) = max(runs, key=lambda r: r[1][1])
    alpha, pref = fit_power_law(y, g)
    return MaximizerResult(
        y=y, G_K=g, value=F, alpha=alpha, prefactor=pref,
        converged=bool(change <= 1e-6 and it < max_iter) or change <= 1e-12,
        iterations=it, start_values={name: r[1] for name, r in runs},
        convention=convention, fdt=fdt,
    )
