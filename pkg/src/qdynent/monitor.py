"""Brute-force monitoring of small quantum systems.

A system ``A`` starts in the thermal state ``rho``, purified by an untouched
copy. After every unitary step ``U = exp(-i H dt)`` one generalized
measurement ``{K_m}`` is applied to ``A``. For an outcome string the
unnormalized state of the copy is ``sqrt(rho) X^dag X sqrt(rho)`` with
``X = K_{m_n} U ... K_{m_1} U``. The outcome tree is walked depth first with
one running product ``N = X sqrt(rho)`` per depth, so every node costs one
matrix product and the state of the copy is ``N^dag N``.

Marginals over a single step ``s`` only need the prefix up to ``s`` (later
Kraus operators sum to the identity), so they are accumulated at depth ``s``
during the same sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf
from scipy.stats import linregress

from .ledger import EntropyLedger
from .operators import (
    PAULI_X,
    PAULI_Z,
    HermitianOperator,
    DensityMatrix,
    OperatorError,
    as_hermitian,
    as_matrix,
    matrix_function,
    propagator,
    spectrum_entropy,
    von_neumann_entropy,
    xlogx,
)

DEFAULT_BUDGET = 2_000_000
FIG2 = dict(h=1.245, J=0.945, gamma=0.75, beta=0.0, dt=1.0)


class BudgetError(RuntimeError):
    """The outcome tree is larger than the configured budget."""

    def __init__(self, required, budget):
        super().__init__(f"outcome tree needs {required} leaves, budget is {budget}")
        self.required = required
        self.budget = budget


class ConsistencyError(RuntimeError):
    """An internal numerical identity failed (probability leak, bad state)."""


# --------------------------------------------------------------------------
# Models
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpinChainModel:
    """Mixed-field Ising ring ``sum_j g X_j + h Z_j + J Z_j Z_{j+1}``.

    ``g`` is the transverse field (1 in the reference experiments); setting
    it to zero gives a diagonal, fully conserved Hamiltonian.
    """

    L: int
    h: float = FIG2["h"]
    J: float = FIG2["J"]
    periodic: bool = True
    g: float = 1.0

    def __post_init__(self):
        if not 2 <= self.L <= 12:
            raise OperatorError(f"chain length L={self.L} outside [2, 12]")

    @property
    def dim(self) -> int:
        return 2**self.L

    def bonds(self):
        last = self.L if self.periodic else self.L - 1
        return [(j, (j + 1) % self.L) for j in range(last)]

    def z(self, site: int) -> np.ndarray:
        """Diagonal of ``Z_site`` in the computational basis (site 0 = leftmost factor)."""
        idx = np.arange(self.dim)
        return 1.0 - 2.0 * ((idx >> (self.L - 1 - site)) & 1)


def build_hamiltonian(model: SpinChainModel) -> HermitianOperator:
    d = model.dim
    diag = np.zeros(d)
    for j in range(model.L):
        diag += model.h * model.z(j)
    if model.J:
        for a, b in model.bonds():
            diag += model.J * model.z(a) * model.z(b)
    H = np.diag(diag).astype(complex)
    if model.g:
        idx = np.arange(d)
        for j in range(model.L):
            H[idx ^ (1 << (model.L - 1 - j)), idx] += model.g
    return HermitianOperator(H)


def site_operator(op: np.ndarray, site: int, L: int) -> np.ndarray:
    """Embed a single-site 2x2 operator into the ``2**L`` chain space."""
    left = np.eye(2 ** site)
    right = np.eye(2 ** (L - site - 1))
    return np.kron(np.kron(left, op), right)


def thermal_state(H, beta: float) -> DensityMatrix:
    if not np.isfinite(beta) or beta < 0:
        raise OperatorError(f"inverse temperature must be finite and >= 0, got {beta}")
    w, v = as_hermitian(H).eigh
    p = np.exp(-beta * (w - w.min()))
    p /= p.sum()
    return DensityMatrix((v * p) @ v.conj().T, check=False)


def microscopic_observable(model: SpinChainModel, gamma: float = FIG2["gamma"],
                           sites=(0, 2)) -> HermitianOperator:
    """``gamma Z_a Z_b``: a two-site (microscopic) probe."""
    a, b = sites
    return HermitianOperator(np.diag(gamma * model.z(a) * model.z(b)))


def mesoscopic_terms(model: SpinChainModel) -> list[np.ndarray]:
    """Diagonals of the local densities ``J Z_x - h Z_x Z_{x+1}``."""
    return [model.J * model.z(x) - model.h * model.z(x) * model.z((x + 1) % model.L)
            for x in range(model.L)]


def mesoscopic_observable(model: SpinChainModel, gamma: float = FIG2["gamma"]) -> HermitianOperator:
    """``erf(gamma sum_x (J Z_x - h Z_x Z_{x+1}) / sqrt(L))``, bounded by 1 in norm."""
    arg = gamma * np.sum(mesoscopic_terms(model), axis=0) / np.sqrt(model.L)
    return HermitianOperator(np.diag(erf(arg)))


def truncated_oscillator(omega: float, lam: float, beta: float, n_max: int = 60):
    """``(omega a^dag a, lam (a + a^dag)/sqrt 2)`` on ``n_max + 1`` Fock levels."""
    if n_max < 20:
        raise OperatorError("n_max must be at least 20")
    if omega <= 0:
        raise OperatorError("oscillator frequency must be positive")
    x = beta * omega
    top = (-math.expm1(-x)) * math.exp(-x * n_max) if x > 0 else 1.0
    if top >= 1e-10:
        raise OperatorError(
            f"thermal occupancy of level {n_max} is {top:.2e} >= 1e-10; raise n_max or beta*omega")
    a = np.diag(np.sqrt(np.arange(1, n_max + 1)), k=1)
    H = HermitianOperator(np.diag(omega * np.arange(n_max + 1)))
    Q = HermitianOperator(lam * (a + a.T) / np.sqrt(2))
    return H, Q


# --------------------------------------------------------------------------
# Measurements
# --------------------------------------------------------------------------


@dataclass
class KrausFamily:
    """Measurement operators ``K_m`` with quadrature weights ``w_m``.

    Completeness reads ``sum_m w_m K_m^dag K_m = 1``. ``continuous`` marks a
    discretized continuous outcome; its Shannon entropies are reported with
    the value for a switched-off observable subtracted.
    """

    operators: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    continuous: bool = False
    baseline_shannon: float = 0.0

    def __post_init__(self):
        self.operators = np.asarray(self.operators, dtype=complex)
        self.labels = np.asarray(self.labels)
        self.weights = np.asarray(self.weights, dtype=float)

    def __len__(self):
        return len(self.operators)

    @property
    def dim(self) -> int:
        return self.operators.shape[1]

    def scaled(self) -> np.ndarray:
        """Operators with ``sqrt(w_m)`` folded in, so that completeness has unit weights."""
        return self.operators * np.sqrt(self.weights)[:, None, None]

    def completeness_residual(self) -> float:
        k = self.scaled()
        total = np.einsum("mji,mjk->ik", k.conj(), k)
        return float(np.linalg.norm(total - np.eye(self.dim)))

    def is_diagonal(self) -> bool:
        k = self.operators
        off = k - np.einsum("mii->mi", k)[:, :, None] * np.eye(self.dim)
        return bool(np.max(np.abs(off), initial=0.0) == 0.0)


def binary_kraus(Q) -> KrausFamily:
    """Two-outcome family ``K_pm = sqrt((1 pm Q)/2)``."""
    Q = as_hermitian(Q)
    w, v = Q.eigh
    if np.max(np.abs(w), initial=0.0) > 1 + 1e-9:
        raise OperatorError(
            f"binary measurement needs ||Q|| <= 1, got {np.abs(w).max():.6g}; "
            "rescale Q (e.g. pass it through erf)")
    w = np.clip(w, -1.0, 1.0)
    ops = [(v * np.sqrt((1 + sgn * w) / 2)) @ v.conj().T for sgn in (+1, -1)]
    return KrausFamily(np.array(ops), np.array(["+", "-"]), np.ones(2))


def _gaussian_pdf(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)


def gaussian_grid(q_min: float, q_max: float, nodes: int = 64, margin: float = 6.0):
    """Uniform outcome grid covering ``[q_min - margin, q_max + margin]``."""
    m = np.linspace(q_min - margin, q_max + margin, nodes)
    h = m[1] - m[0] if nodes > 1 else 1.0
    return m, np.full(nodes, h)


def gaussian_kraus(Q, dt: float, nodes: int = 64, margin: float = 6.0, grid=None,
                   check: bool = True) -> KrausFamily:
    """Discretized ``K_m = (2 pi)^(-1/4) exp(-(Q sqrt(dt) - m)^2 / 4)``.

    ``grid`` may be given as ``(nodes, weights)``; otherwise a uniform grid
    covering the spectrum of ``Q sqrt(dt)`` with ``margin`` standard
    deviations on each side is used.
    """
    Q = as_hermitian(Q)
    w, v = Q.eigh
    q = w * np.sqrt(dt)
    if grid is None:
        m, wt = gaussian_grid(q.min(), q.max(), nodes, margin)
    else:
        m, wt = (np.asarray(a, dtype=float) for a in grid)
    ops = np.array([(v * (2 * np.pi) ** -0.25 * np.exp(-((q - mk) ** 2) / 4)) @ v.conj().T
                    for mk in m])
    p0 = wt * _gaussian_pdf(m)
    fam = KrausFamily(ops, m, wt, continuous=True, baseline_shannon=float(-xlogx(p0).sum()))
    if check:
        res = fam.completeness_residual()
        if res > 1e-4:
            raise OperatorError(f"outcome grid too coarse: completeness residual {res:.2e} > 1e-4")
    return fam


# --------------------------------------------------------------------------
# Outcome-tree enumeration
# --------------------------------------------------------------------------


@dataclass
class MonitoringRun:
    """Everything needed for one brute-force run."""

    hamiltonian: HermitianOperator
    kraus: KrausFamily
    n: int
    dt: float = 1.0
    beta: float = 0.0
    budget: int = DEFAULT_BUDGET
    rho: DensityMatrix | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise OperatorError("number of steps n must be >= 1")
        if not self.dt > 0:
            raise OperatorError("time step dt must be positive")
        if self.kraus.dim != self.hamiltonian.dim:
            raise OperatorError("Kraus operators and Hamiltonian act on different spaces")

    @property
    def leaves(self) -> int:
        return len(self.kraus) ** self.n

    def state(self) -> DensityMatrix:
        return self.rho if self.rho is not None else thermal_state(self.hamiltonian, self.beta)


def _weighted_entropies(grams: np.ndarray):
    """For unnormalized states ``G`` return ``p = Tr G`` and ``p S(G/p)``."""
    lam = np.clip(np.linalg.eigvalsh(grams), 0.0, None)
    p = lam.sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ps = -xlogx(lam).sum(axis=-1) + xlogx(p)
    return p, ps


def run_monitoring(run: MonitoringRun) -> EntropyLedger:
    """Exact ledger for ``run`` by depth-first enumeration of all outcome strings."""
    if run.leaves > run.budget:
        raise BudgetError(run.leaves, run.budget)
    rho = run.state()
    s_rho = von_neumann_entropy(rho)
    sqrt_rho = matrix_function(rho, lambda x: np.sqrt(np.clip(x, 0, None))).entries
    U = propagator(run.hamiltonian, run.dt)
    ks = run.kraus.scaled()
    kdiag = np.einsum("mii->mi", ks) if run.kraus.is_diagonal() else None
    M, n, d = len(ks), run.n, run.hamiltonian.dim

    marg = np.zeros((n, M, d, d), dtype=complex)
    cond = np.zeros(n)           # sum over depth-s nodes of p S(rho_node)
    shannon = 0.0
    total_p = 0.0

    def expand(N, depth):
        nonlocal shannon, total_p
        V = U @ N
        kids = kdiag[:, :, None] * V[None] if kdiag is not None else ks @ V
        grams = np.conj(np.swapaxes(kids, 1, 2)) @ kids
        marg[depth] += grams
        p, ps = _weighted_entropies(grams)
        cond[depth] += ps.sum()
        if depth == n - 1:
            shannon -= xlogx(p).sum()
            total_p += p.sum()
            return
        for m in range(M):
            if p[m] > 0:
                expand(kids[m], depth + 1)

    expand(sqrt_rho, 0)
    if abs(total_p - 1.0) > 1e-8:
        raise ConsistencyError(f"outcome probabilities sum to {total_p!r}")

    J_s = np.empty(n)
    S_marg = np.empty(n)
    for s in range(n):
        p, ps = _weighted_entropies(marg[s])
        if abs(p.sum() - 1.0) > 1e-8:
            raise ConsistencyError(f"step-{s + 1} marginal sums to {p.sum()!r}")
        J_s[s] = s_rho - ps.sum()
        S_marg[s] = float(-xlogx(p).sum())
    J_t = s_rho - cond
    base = run.kraus.baseline_shannon if run.kraus.continuous else 0.0
    return EntropyLedger(
        S_cl_marginal=S_marg - base,
        J_s=J_s,
        S_cl_joint=shannon - n * base,
        J=float(J_t[-1]),
        dt=run.dt,
        J_t=J_t,
        meta={"total_probability": total_p, "S_rho": s_rho},
    )


def fig2_run(L: int, kind: str, n: int, *, h=FIG2["h"], J=FIG2["J"], gamma=FIG2["gamma"],
             beta=FIG2["beta"], dt=FIG2["dt"], budget=DEFAULT_BUDGET) -> EntropyLedger:
    """Binary monitoring of the mixed-field Ising ring (``kind`` = micro | meso)."""
    model = SpinChainModel(L, h=h, J=J)
    if kind == "micro":
        Q = microscopic_observable(model, gamma)
    elif kind == "meso":
        Q = mesoscopic_observable(model, gamma)
    else:
        raise ValueError(f"unknown observable kind {kind!r}")
    run = MonitoringRun(build_hamiltonian(model), binary_kraus(Q), n=n, dt=dt, beta=beta,
                        budget=budget)
    return run_monitoring(run)


def oscillator_ledger(omega: float, lam: float, beta: float, dt: float, n: int,
                      n_max: int = 60, nodes: int = 20, margin: float = 6.0,
                      budget=DEFAULT_BUDGET) -> EntropyLedger:
    """Gaussian-Kraus monitoring of one truncated oscillator mode."""
    H, Q = truncated_oscillator(omega, lam, beta, n_max)
    fam = gaussian_kraus(Q, dt, nodes=nodes, margin=margin)
    return run_monitoring(MonitoringRun(H, fam, n=n, dt=dt, beta=beta, budget=budget))


# --------------------------------------------------------------------------
# Disturbance and Gaussianity diagnostics
# --------------------------------------------------------------------------


def channel_iterate(Q, U, n: int, outcome: int = 0) -> np.ndarray:
    """Distance to a scalar of ``L (D L)^k [K^dag K]`` for ``k = 0..n``.

    ``L[O] = U^dag O U`` is one time step and ``D[O] = sum_m K_m^dag O K_m`` the
    measurement with its result discarded; ``K`` comes from :func:`binary_kraus`.
    """
    ks = binary_kraus(Q).operators
    U = as_matrix(U)
    Ud = U.conj().T
    O = ks[outcome].conj().T @ ks[outcome]
    d = O.shape[0]
    out = np.empty(n + 1)
    O = Ud @ O @ U
    for k in range(n + 1):
        if k:
            O = Ud @ np.einsum("mji,jk,mkl->il", ks.conj(), O, ks) @ U
        out[k] = np.linalg.norm(O - np.trace(O) / d * np.eye(d))
    return out


def decay_fit(J_s, window=(2, 8)) -> tuple[float, float]:
    """Log-linear fit ``J_s ~ exp(-rate * s)`` over 1-based steps in ``window``.

    Returns ``(rate, r_squared)``.
    """
    J_s = np.asarray(J_s, dtype=float)
    s = np.arange(1, len(J_s) + 1)
    m = (s >= window[0]) & (s <= window[1]) & (J_s > 0)
    if m.sum() < 2:
        raise ValueError("decay fit needs at least two positive points in the window")
    fit = linregress(s[m], np.log(J_s[m]))
    return float(-fit.slope), float(fit.rvalue**2)


def wick_residual(H, rho, terms, times) -> float:
    """``|C4 - (C12 C34 + C14 C23 + C13 C24)|`` for ``Q = V^(-1/2) sum_x (Q_x - <Q_x>)``.

    ``terms`` are the local operators ``Q_x`` (matrices or diagonals) and
    ``times`` the four times ``t_1..t_4``; ``C_ij = <Q(t_i) Q(t_j)>``.
    """
    H = as_hermitian(H)
    r = as_matrix(rho)
    mats = [np.diag(t) if np.ndim(t) == 1 else as_matrix(t) for t in terms]
    d = H.dim
    Q = np.zeros((d, d), dtype=complex)
    for q in mats:
        Q += q - np.trace(r @ q) * np.eye(d)
    Q /= np.sqrt(len(mats))
    E, V = H.eigh
    Qe = V.conj().T @ Q @ V
    re = V.conj().T @ r @ V
    qt = [np.exp(1j * E * t)[:, None] * Qe * np.exp(-1j * E * t)[None, :] for t in times]

    def corr(*ops):
        out = re
        for o in ops:
            out = out @ o
        return np.trace(out)

    c = {(i, j): corr(qt[i], qt[j]) for i in range(4) for j in range(i + 1, 4)}
    c4 = corr(*qt)
    gauss = c[0, 1] * c[2, 3] + c[0, 3] * c[1, 2] + c[0, 2] * c[1, 3]
    return float(abs(c4 - gauss))


def chain_wick_residual(L: int, times, beta: float = 0.0, kind: str = "meso",
                        h=FIG2["h"], J=FIG2["J"]) -> float:
    """:func:`wick_residual` on the Ising ring; ``kind`` picks ``Q_x``.

    ``meso``: ``J Z_x - h Z_x Z_{x+1}``; ``z``: ``Z_x``; ``single``: only
    ``x = 0`` (no volume averaging).
    """
    model = SpinChainModel(L, h=h, J=J)
    H = build_hamiltonian(model)
    rho = thermal_state(H, beta)
    if kind == "meso":
        terms = mesoscopic_terms(model)
    elif kind == "z":
        terms = [model.z(x) for x in range(L)]
    elif kind == "single":
        terms = mesoscopic_terms(model)[:1]
    else:
        raise ValueError(f"unknown local term kind {kind!r}")
    return wick_residual(H, rho, terms, times)


def entropy_of(grams: np.ndarray) -> float:
    """Entropy of a normalized state given as a matrix (convenience for tests)."""
    return spectrum_entropy(np.linalg.eigvalsh(grams))


__all__ = [
    "BudgetError", "ConsistencyError", "SpinChainModel", "build_hamiltonian", "thermal_state",
    "microscopic_observable", "mesoscopic_observable", "mesoscopic_terms", "truncated_oscillator",
    "KrausFamily", "binary_kraus", "gaussian_kraus", "MonitoringRun", "run_monitoring",
    "fig2_run", "oscillator_ledger", "channel_iterate", "wick_residual", "chain_wick_residual",
    "site_operator", "decay_fit", "PAULI_X", "PAULI_Z",
]
