"""Numerical parameters shared by the solvers.

Defaults follow the tolerances the acceptance suite is stated against;
relative quantities are scaled by the domain diameter where noted.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class Options:
    # path optimization
    tol_opt: float = 1e-8          # stationarity, relative to 1 + |value|
    h_path_frac: float = 1.0 / 64  # node spacing as a fraction of the diameter
    n_min: int = 32                # minimum number of path intervals
    n_starts: int = 3              # multi-starts at the final time
    perturb: float = 0.1           # multi-start perturbation, relative to |x - y|
    maxiter: int = 500
    seed: int = 0
    # Mane potential
    c_samples: int = 64            # base points for the critical value
    t_grid: int = 24               # log-spaced times before the 1-D refinement
    sh4_margin: float = 0.05       # safety margin on the critical value, relative
    # boundary search
    m_bd: int = 256
    n_refine: int = 3
    # singular set
    eps_crit: float = 1e-3
    eps_qp: float = 1e-10
    h_flow_frac: float = 1e-3      # Euler step as a fraction of the diameter
    t_cap_frac: float = 0.05       # step-maximizer time cap, fraction of diameter
    max_steps: int = 4000

    def with_(self, **kw) -> "Options":
        return replace(self, **kw)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


DEFAULT = Options()
