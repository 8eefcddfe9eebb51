"""Exact Gaussian calculus for monitoring a free-boson displacement.

Model: ``H = sum_j omega_j a_j^dag a_j`` and ``Q = sum_j lam_j (a_j + a_j^dag)/sqrt 2``
at inverse temperature ``beta``, monitored with the Gaussian Kraus family of
strength ``sqrt(dt)``. Outcomes ``m_1..m_n`` and the quadratures of the
purifying copy are jointly Gaussian:

* outcome covariance ``K = 1 + dt G_K(s - s') + dt^2 sum_u G_R(s - u) G_R(s' - u)``,
  the last term being measurement back-action,
* cross covariance ``Cov(abar_j, m_s) = W[s, j]``.

Conditioning on outcomes is a Schur complement, done exactly; no expansion
in ``dt`` or in the couplings is made. Shannon entropies are differences to
the switched-off observable (``K = 1``), i.e. ``ln det K / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular, toeplitz

from .ledger import EntropyLedger

MAX_STEPS = 4000


class GaussianError(RuntimeError):
    """Raised for non-positive outcome covariances or unphysical conditional states."""


@dataclass(frozen=True)
class BosonModel:
    """Modes ``(omega_j, lam_j)`` at inverse temperature ``beta``."""

    omegas: np.ndarray
    lams: np.ndarray
    beta: float

    def __post_init__(self):
        om = np.atleast_1d(np.asarray(self.omegas, dtype=float))
        la = np.atleast_1d(np.asarray(self.lams, dtype=float))
        if om.shape != la.shape or om.ndim != 1 or len(om) < 1:
            raise ValueError("omegas and lams must be equal-length 1-d sequences")
        if np.any(om <= 0):
            raise ValueError("mode frequencies must be positive")
        if not (self.beta > 0 and np.isfinite(self.beta)):
            raise ValueError("beta must be positive and finite")
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "lams", la)

    @property
    def N(self) -> int:
        return len(self.omegas)

    @property
    def occupations(self) -> np.ndarray:
        """``epsilon_j = coth(beta omega_j / 2) / 2``."""
        return 0.5 / np.tanh(0.5 * self.beta * self.omegas)

    @property
    def tfd_overlap(self) -> np.ndarray:
        """``(2 sinh(beta omega_j / 2))^-1``, the cross-copy amplitude."""
        return 0.5 / np.sinh(0.5 * self.beta * self.omegas)

    @classmethod
    def single(cls, omega: float, lam: float, beta: float) -> "BosonModel":
        return cls(np.array([omega]), np.array([lam]), beta)

    @classmethod
    def from_keldysh(cls, gk, beta: float, n_modes: int = 200, omega_max: float = 10.0,
                     scale: float = 1.0) -> "BosonModel":
        """Discretize a target ``G_K(omega)`` on midpoints of a uniform grid.

        ``lam_j^2 = (2/pi) d_omega G_K(omega_j) tanh(beta omega_j / 2)``; the
        grid starts at ``d_omega / 2`` so the origin is never sampled.
        ``scale`` multiplies every ``lam_j^2``.
        """
        dw = omega_max / n_modes
        om = (np.arange(n_modes) + 0.5) * dw
        lam2 = scale * (2 / np.pi) * dw * np.asarray(gk(om), dtype=float) * np.tanh(0.5 * beta * om)
        if np.any(lam2 < 0):
            raise ValueError("target G_K must be nonnegative")
        return cls(om, np.sqrt(lam2), beta)

    def scaled(self, factor: float) -> "BosonModel":
        """Same modes with every coupling multiplied by ``factor``."""
        return BosonModel(self.omegas, self.lams * factor, self.beta)


def greens_time(model: BosonModel, t):
    """Time-domain ``(G_K(t), G_R(t))`` of the mode sum.

    ``G_K(t) = sum_j lam_j^2 coth(beta omega_j/2) cos(omega_j t) / 2`` and
    ``G_R(t) = theta(t) sum_j lam_j^2 sin(omega_j t) / 2`` (zero at ``t <= 0``).
    """
    t = np.asarray(t, dtype=float)
    lam2 = model.lams**2
    phase = np.multiply.outer(t, model.omegas)
    gk = 0.5 * np.cos(phase) @ (lam2 * 2 * model.occupations)
    gr = 0.5 * np.sin(phase) @ lam2
    gr = np.where(t > 0, gr, 0.0)
    return gk, gr


def keldysh_density(model: BosonModel, omega, width: float):
    """``G_K(omega)`` of the modes with each delta broadened to a Gaussian of ``width``."""
    omega = np.asarray(omega, dtype=float)
    amp = 0.5 * np.pi * model.lams**2 * 2 * model.occupations
    out = np.zeros_like(omega)
    norm = 1 / (np.sqrt(2 * np.pi) * width)
    for sgn in (+1, -1):
        out += (amp * norm * np.exp(-0.5 * ((omega[..., None] - sgn * model.omegas) / width) ** 2)).sum(-1)
    return out


@dataclass
class OutcomeGaussian:
    """Joint Gaussian data for ``n`` outcomes: covariance ``K`` and cross matrix ``W``."""

    K: np.ndarray
    W: np.ndarray
    model: BosonModel
    dt: float

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def cross_covariance(self) -> np.ndarray:
        """Real ``2N x n`` covariance of ``(xbar_1..xbar_N, pbar_1..pbar_N)`` with outcomes."""
        return np.sqrt(2) * np.concatenate([self.W.real.T, self.W.imag.T], axis=0)


def build_outcome_gaussian(model: BosonModel, dt: float, n: int) -> OutcomeGaussian:
    if not 1 <= n <= MAX_STEPS:
        raise ValueError(f"step count n={n} outside [1, {MAX_STEPS}]")
    if not dt > 0:
        raise ValueError("dt must be positive")
    lags = np.arange(n) * dt
    gk, gr = greens_time(model, lags)
    K = np.eye(n) + dt * toeplitz(gk)
    if np.any(gr):
        R = np.tril(toeplitz(gr))  # R[s, u] = G_R((s - u) dt)
        K += dt * dt * (R @ R.T)
    K = 0.5 * (K + K.T)
    try:
        cho_factor(K)
    except np.linalg.LinAlgError as exc:
        raise GaussianError("outcome covariance K is not positive definite") from exc
    s = np.arange(1, n + 1) * dt
    W = (np.sqrt(dt / 2) * model.lams * model.tfd_overlap)[None, :] * np.exp(
        1j * np.multiply.outer(s, model.omegas))
    return OutcomeGaussian(K, W, model, dt)


def eta(x):
    """Entropy of a bosonic mode with symplectic value ``x >= 1/2``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.5 - 1e-9):
        raise GaussianError(f"symplectic value {x.min():.12g} below 1/2")
    lo = np.clip(x - 0.5, 0.0, None)
    hi = x + 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        out = hi * np.log(hi) - np.where(lo > 0, lo * np.log(np.where(lo > 0, lo, 1.0)), 0.0)
    return out


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Symplectic spectrum of a ``2N x 2N`` covariance ordered ``(x..., p...)``."""
    n2 = cov.shape[0]
    N = n2 // 2
    omega = np.zeros((n2, n2))
    omega[:N, N:] = np.eye(N)
    omega[N:, :N] = -np.eye(N)
    L = np.linalg.cholesky(0.5 * (cov + cov.T))
    herm = 1j * (L.T @ omega @ L)
    ev = np.linalg.eigvalsh(herm)
    return np.sort(ev[N:])


def _check_uncertainty(nu):
    if np.any(nu < 0.5 - 1e-9):
        raise GaussianError(f"conditional state violates the uncertainty bound (min {nu.min():.12g})")
    return nu


def conditional_covariance(og: OutcomeGaussian, steps=None) -> np.ndarray:
    """Covariance of the copy's quadratures given the outcomes at ``steps`` (0-based).

    ``steps=None`` conditions on all outcomes.
    """
    eps = og.model.occupations
    prior = np.diag(np.concatenate([eps, eps]))
    C = og.cross_covariance()
    K = og.K
    if steps is not None:
        steps = np.atleast_1d(steps)
        C = C[:, steps]
        K = K[np.ix_(steps, steps)]
    L = np.linalg.cholesky(K)
    Y = solve_triangular(L, C.T, lower=True)
    return prior - Y.T @ Y


@dataclass
class ModeOccupations:
    """Symplectic values before measurement, after all outcomes, after single steps."""

    eps: np.ndarray
    eps_hat: np.ndarray | None = None
    eps_check: np.ndarray | None = None  # shape (n, N)


def _single_step_values(model: BosonModel, W_row_abs: np.ndarray, kappa: float) -> np.ndarray:
    # Rotating each mode by the phase of W[s, j] (a local symplectic map that
    # leaves the thermal covariance invariant) moves the whole cross
    # covariance into the x quadratures; then nu^2 = eig(E^2 - u u^T / kappa).
    eps = model.occupations
    u = np.sqrt(2 * eps) * W_row_abs
    mat = np.diag(eps**2) - np.outer(u, u) / kappa
    return np.sqrt(np.clip(np.linalg.eigvalsh(mat), 0.0, None))


def condition_state(model: BosonModel, og: OutcomeGaussian, subset="all") -> ModeOccupations:
    """Exact conditional symplectic values.

    ``subset="all"`` conditions on every outcome (``eps_hat``);
    ``subset="each"`` conditions separately on every single step
    (``eps_check``, one row per step); an integer ``s`` (1-based) conditions
    on that step only.
    """
    eps = model.occupations
    if subset == "all":
        nu = _check_uncertainty(symplectic_eigenvalues(conditional_covariance(og)))
        return ModeOccupations(eps, eps_hat=nu)
    absW = np.abs(og.W)
    kappa = np.diag(og.K)
    if subset == "each":
        rows = range(og.n)
    else:
        s = int(subset)
        if not 1 <= s <= og.n:
            raise ValueError(f"step {s} outside 1..{og.n}")
        rows = [s - 1]
    vals = np.array([_single_step_values(model, absW[r], kappa[r]) for r in rows])
    return ModeOccupations(eps, eps_check=_check_uncertainty(vals))


def first_order_eps_hat(model: BosonModel, t: float, k_omega=None) -> np.ndarray:
    """Leading-order ``eps_hat_j = eps_j - (t/2) lam_j^2 (2 sinh)^-2 / k(omega_j)``."""
    k = 1.0 if k_omega is None else np.asarray(k_omega)
    return model.occupations - 0.5 * t * model.lams**2 * model.tfd_overlap**2 / k


def first_order_eps_check(model: BosonModel, dt: float, kappa: float) -> np.ndarray:
    """Leading-order single-step value ``eps_j - (dt/2) lam_j^2 (2 sinh)^-2 / kappa``."""
    return model.occupations - 0.5 * dt * model.lams**2 * model.tfd_overlap**2 / kappa


def joint_shannon(K: np.ndarray) -> float:
    """``ln det K / 2`` (renormalized joint outcome entropy)."""
    try:
        c, lower = cho_factor(K)
    except np.linalg.LinAlgError as exc:
        raise GaussianError("outcome covariance is not positive definite") from exc
    return float(np.sum(np.log(np.diag(c))))


def entropy_ledger_gaussian(model: BosonModel, dt: float, n: int) -> EntropyLedger:
    """Exact entropy ledger for ``n`` monitoring steps of size ``dt``."""
    og = build_outcome_gaussian(model, dt, n)
    eps = model.occupations
    s0 = float(eta(eps).sum())
    occ_all = condition_state(model, og, "all")
    occ_each = condition_state(model, og, "each")
    J = s0 - float(eta(occ_all.eps_hat).sum())
    J_s = s0 - eta(occ_each.eps_check).sum(axis=1)
    return EntropyLedger(
        S_cl_marginal=0.5 * np.log(np.diag(og.K)),
        J_s=J_s,
        S_cl_joint=joint_shannon(og.K),
        J=J,
        dt=dt,
        meta={"N": model.N, "beta": model.beta},
    )


def purification_first_order(model: BosonModel) -> float:
    """``J / t`` to leading order: ``sum_j beta omega_j lam_j^2 (2 sinh)^-2 / 2``."""
    return float(0.5 * np.sum(model.beta * model.omegas * model.lams**2 * model.tfd_overlap**2))


__all__ = [
    "BosonModel", "OutcomeGaussian", "ModeOccupations", "GaussianError", "greens_time",
    "build_outcome_gaussian", "conditional_covariance", "condition_state", "joint_shannon",
    "entropy_ledger_gaussian", "eta", "symplectic_eigenvalues", "first_order_eps_hat",
    "first_order_eps_check", "purification_first_order", "keldysh_density",
]
