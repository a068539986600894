"""Parameter tuple for scale ladders and atom graphs, with consistency checks."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

__all__ = ["ProofParameters", "default_thetas", "lambda_default"]


def default_thetas(d: int) -> dict:
    return {
        "theta1": 2 * d + 4,
        "theta2": 2 * d + 3,
        "theta3": 4 * d + 9,
        "theta4": d + 2,
        "theta5": d + 1,
    }


def lambda_default(theta4: float) -> float:
    """Largest comparison factor that still rules out two-step arrow paths."""
    return min(2.0, (1.0 + (4.0 / 3.0) ** (theta4 / 2.0)) / 2.0)


@dataclass(frozen=True)
class ProofParameters:
    """Scale base ``A``, exponent ``p`` and decay exponents ``theta1..theta5``.

    Unset thetas take the dimension-dependent defaults.  ``alpha`` is tied
    to ``p`` by ``alpha = d (p - 1) / p``.
    """

    d: int = 1
    A: int = 3
    p: float = 2.0
    epsilon: float = 0.01
    K: int = 5
    theta1: float | None = None
    theta2: float | None = None
    theta3: float | None = None
    theta4: float | None = None
    theta5: float | None = None
    lambda_override: float | None = None
    window_radius: int = 0
    Ksat: float = 2.0

    def __post_init__(self):
        for name, val in default_thetas(self.d).items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, float(val))
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        d = self.d
        if d not in (1, 2, 3):
            out.append("d must be 1, 2 or 3")
        if int(self.A) != self.A or self.A < 3 or self.A % 2 == 0:
            out.append("A must be an odd integer >= 3")
        if not 1 < self.p <= 2:
            out.append("p must lie in (1, 2]")
        if not self.epsilon > 0:
            out.append("epsilon must be positive")
        if self.K < 1:
            out.append("K must be at least 1")
        if not self.theta1 > self.theta2:
            out.append("need theta1 > theta2")
        if not self.theta3 >= self.p * self.theta1:
            out.append("need theta3 >= p * theta1")
        if not self.theta2 > self.theta4 + d:
            out.append("need theta2 > theta4 + d")
        if not self.theta4 > d:
            out.append("need theta4 > d")
        if not d < self.theta5 < self.theta4:
            out.append("need d < theta5 < theta4")
        if self.lambda_override is not None and not 1 < self.lambda_override <= 2:
            out.append("lambda_override must lie in (1, 2]")
        if self.window_radius < 0:
            out.append("window_radius must be nonnegative")
        return out

    @property
    def alpha(self) -> float:
        return self.d * (self.p - 1) / self.p

    @property
    def lam(self) -> float:
        if self.lambda_override is not None:
            return float(self.lambda_override)
        return lambda_default(self.theta4)

    def with_(self, **kw) -> "ProofParameters":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["alpha"] = self.alpha
        out["lambda"] = self.lam
        return out
