"""Per-step entropy bookkeeping shared by the exact and Gaussian engines."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_COLUMNS = ("s", "S_cl_marginal", "J_s", "defect")
SUMMARY_KEYS = ("S_cl_joint", "J", "S_CNT", "dt", "n")
LEGEND = {
    "s": "monitoring step (1-based)",
    "S_cl_marginal": "renormalized Shannon entropy of the step-s outcome (nats)",
    "J_s": "single-step purification of the copy (nats)",
    "defect": "S_cl_marginal - J_s (nats)",
}


def legend_lines(legend: dict) -> str:
    """``# name: meaning`` comment lines placed above a CSV header."""
    return "".join(f"# {k}: {v}\n" for k, v in legend.items())


def fmt(x) -> str:
    """Fixed 12-significant-digit formatting used for every emitted number."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


@dataclass
class EntropyLedger:
    """Entropies (nats) of one monitoring run of ``n`` steps.

    Shannon entropies are renormalized: the value obtained with the monitored
    observable switched off is subtracted.

    Attributes:
        S_cl_marginal: Shannon entropy of the step-``s`` outcome marginal.
        J_s: single-step information gain about the purifying copy.
        S_cl_joint: Shannon entropy of the joint outcome distribution.
        J: purification (conditional entropy) after all ``n`` steps.
        J_t: purification after each prefix of ``s`` steps (``J_t[-1] == J``).
    """

    S_cl_marginal: np.ndarray
    J_s: np.ndarray
    S_cl_joint: float
    J: float
    dt: float = 1.0
    J_t: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.S_cl_marginal = np.asarray(self.S_cl_marginal, dtype=float)
        self.J_s = np.asarray(self.J_s, dtype=float)
        if self.J_t is not None:
            self.J_t = np.asarray(self.J_t, dtype=float)

    @property
    def n(self) -> int:
        return len(self.J_s)

    @property
    def defects(self) -> np.ndarray:
        return self.S_cl_marginal - self.J_s

    @property
    def S_CNT(self) -> float:
        return float(self.S_cl_joint - self.defects.sum())

    @property
    def t(self) -> float:
        return self.n * self.dt

    def identity_residual(self) -> float:
        """Residual of the defining identity recomputed term by term."""
        total = self.S_cl_joint
        for sm, js in zip(self.S_cl_marginal, self.J_s):
            total -= sm - js
        return abs(total - self.S_CNT)

    def check(self, tol: float = 1e-9) -> list[str]:
        """Return the list of violated invariants (empty when consistent)."""
        bad = []
        if self.J < -tol:
            bad.append(f"J = {self.J:.3e} < 0")
        if np.any(self.J_s < -tol):
            bad.append(f"min J_s = {self.J_s.min():.3e} < 0")
        if np.any(self.defects < -tol):
            bad.append(f"min defect = {self.defects.min():.3e} < 0")
        if self.S_CNT > self.J_s.sum() + tol:
            bad.append("S_CNT exceeds the sum of single-step gains")
        return bad

    def summary(self) -> dict:
        return {
            "S_cl_joint": float(self.S_cl_joint),
            "J": float(self.J),
            "S_CNT": self.S_CNT,
            "dt": float(self.dt),
            "n": self.n,
        }

    def to_csv(self, path=None) -> str:
        """Write the per-step table, a blank line, then a ``quantity,value`` block."""
        buf = io.StringIO()
        buf.write(legend_lines(LEGEND))
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for s, (sm, js, d) in enumerate(zip(self.S_cl_marginal, self.J_s, self.defects), 1):
            buf.write(",".join(fmt(v) for v in (s, sm, js, d)) + "\n")
        buf.write("\nquantity,value\n")
        for k, v in self.summary().items():
            buf.write(f"{k},{fmt(v)}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, text_or_path) -> "EntropyLedger":
        text = str(text_or_path)
        if "\n" not in text:
            text = Path(text).read_text()
        text = "\n".join(ln for ln in text.splitlines() if not ln.startswith("#")) + "\n"
        table, _, summary = text.partition("\n\n")
        rows = [line.split(",") for line in table.strip().splitlines()[1:]]
        data = np.array(rows, dtype=float).reshape(-1, 4)
        scalars = {}
        for line in summary.strip().splitlines()[1:]:
            k, v = line.split(",")
            scalars[k] = float(v)
        return cls(
            S_cl_marginal=data[:, 1],
            J_s=data[:, 2],
            S_cl_joint=scalars["S_cl_joint"],
            J=scalars["J"],
            dt=scalars.get("dt", 1.0),
        )
