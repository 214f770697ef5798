"""Result containers shared by the exponential drivers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["HistoryEntry", "ExpvResult", "CONVERGED", "BUDGET_EXHAUSTED", "BREAKDOWN",
           "DIVERGED", "relative_error"]

CONVERGED = "converged"
BUDGET_EXHAUSTED = "budget_exhausted"
BREAKDOWN = "breakdown"
DIVERGED = "diverged"


@dataclass
class HistoryEntry:
    """One row of a convergence history.

    ``residual_norm`` is the residual at ``t_end`` relative to ``||v||``;
    ``criterion`` is the quantity the driver actually compared with ``tol``
    (identical to ``residual_norm`` unless another stopping rule is chosen).
    """

    iter: int
    matvecs: int
    residual_norm: float
    criterion: float = None
    inner_work: int = 0
    cycle: int = 0

    def __post_init__(self):
        if self.criterion is None:
            self.criterion = self.residual_norm


@dataclass
class ExpvResult:
    """Outcome of one ``exp(-tA) v`` computation."""

    y: np.ndarray
    status: str
    history: list = field(default_factory=list)
    matvecs: int = 0
    inner_work: int = 0
    solves: int = 0
    factorizations: int = 0
    steps: int = 0
    info: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.status == CONVERGED

    @property
    def residual_norm(self):
        return self.history[-1].residual_norm if self.history else np.nan

    def residual_history(self):
        return np.array([h.residual_norm for h in self.history])

    def matvec_history(self):
        return np.array([h.matvecs for h in self.history])


def relative_error(y, y_ref):
    """``||y - y_ref|| / ||y_ref||``."""
    return float(np.linalg.norm(y - y_ref) / np.linalg.norm(y_ref))
