"""Central numeric tolerances and the sampling seed.

Every solver and certificate reads its defaults from here so the CLI can
override them in one place.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

SEED_ENV_VAR = "OPT_ONTOLOGY_SEED"
DEFAULT_SEED = 0x5EED


def sampling_seed() -> int:
    """Seed for every randomized sampling routine.

    Overridable through the OPT_ONTOLOGY_SEED environment variable
    (decimal or 0x-prefixed hex).
    """
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw, 0)
    except ValueError:
        return DEFAULT_SEED


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-9        # constraint violation allowed at a point
    simplex_cost: float = 1e-9       # reduced-cost threshold for optimality
    newton_grad: float = 1e-9        # sup-norm gradient stop
    newton_max_iter: int = 200
    armijo_c: float = 1e-4
    barrier_gap: float = 1e-8        # stop when m/t falls below this
    barrier_mu: float = 10.0         # multiplicative t update
    barrier_strict_margin: float = 1e-6
    psd_scale: float = 1e-8          # min eig >= -psd_scale*(1+max|M|)
    jacobi_off: float = 1e-10        # off-diagonal norm target
    fd_step: float = 1e-5            # central-difference step
    certificate: float = 1e-6        # default certificate tolerance
    asymmetry: float = 1e-12         # quadratic payload symmetry slack
    improvement: float = 1e-12       # strict-improvement threshold
    multiplier_strict: float = 1e-12 # "some multiplier positive" threshold

    def with_overrides(self, **kw) -> "Tolerances":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self


DEFAULT_TOLERANCES = Tolerances()

# Declared variables may not exceed this many scalar components per problem.
DIMENSION_CAP = 64
