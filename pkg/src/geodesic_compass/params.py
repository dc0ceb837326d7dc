from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class ModelParams:
    """Poisson rate ``lam``, speed ``c`` and time horizon ``t``."""

    lam: float
    c: float
    t: float

    def __post_init__(self):
        for name in ("lam", "c", "t"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if self.lam <= 0:
            raise ValueError(f"lam must be > 0, got {self.lam!r}")
        if self.c < 0:
            raise ValueError(f"c must be >= 0, got {self.c!r}")
        if self.t < 0:
            raise ValueError(f"t must be >= 0, got {self.t!r}")

    @property
    def mu(self) -> float:
        """Expected number of Poisson events on ``(0, t)``."""
        return self.lam * self.t

    def at(self, t: float) -> "ModelParams":
        return replace(self, t=t)
