from __future__ import annotations

from dataclasses import dataclass, field

METHODS = (
    "empirical",
    "bm_plugin",
    "bm_covariate_mc",
    "bm_locationdist_mc",
    "pot_plugin",
    "bivariate",
)


@dataclass(frozen=True)
class ProbEstimate:
    """Collision-probability estimate.

    ``ci`` is ``None`` when no interval was computed. ``flags`` carries
    machine-readable notes (endpoint hits, clamping, rejected draws).
    """

    p: float
    ci: tuple[float, float] | None
    method: str
    level: float = 0.95
    mc_size: int = 0
    seed: int | None = None
    flags: tuple[str, ...] = ()
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "ci": list(self.ci) if self.ci is not None else None,
            "method": self.method,
            "level": self.level,
            "mc_size": self.mc_size,
            "seed": self.seed,
            "flags": list(self.flags),
            **({"extra": self.extra} if self.extra else {}),
        }
