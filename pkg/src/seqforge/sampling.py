"""Dynamic temperature-based language sampling.

Languages are drawn with probability proportional to (corpus share)^(1/T).
T ramps linearly from t_start to t_end over warm_steps optimizer steps,
then holds, so early training follows the corpus distribution and late
training flattens toward uniform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SamplerConfigError(ValueError):
    pass


@dataclass
class SamplerState:
    sizes: np.ndarray
    warm_steps: int
    t_start: float = 1.0
    t_end: float = 5.0
    step: int = 0

    def __post_init__(self):
        self.sizes = np.asarray(self.sizes, dtype=np.float64)
        if self.sizes.ndim != 1 or self.sizes.size == 0:
            raise SamplerConfigError("sizes must be a non-empty 1-D array")
        if (self.sizes < 0).any():
            raise SamplerConfigError("corpus sizes must be non-negative")
        if not (self.sizes > 0).any():
            raise SamplerConfigError("at least one language needs a non-empty corpus")
        if self.warm_steps < 0:
            raise SamplerConfigError("warm_steps must be >= 0")

    def temperature(self) -> float:
        if self.warm_steps == 0:
            return self.t_end
        frac = min(1.0, self.step / self.warm_steps)
        return self.t_start + (self.t_end - self.t_start) * frac

    def probabilities(self, temperature: float | None = None) -> np.ndarray:
        t = self.temperature() if temperature is None else temperature
        shares = self.sizes / self.sizes.sum()
        p = shares ** (1.0 / t)
        return p / p.sum()


def sample_language(state: SamplerState, rng: np.random.Generator) -> int:
    """Draw a language index at the state's current temperature."""
    p = state.probabilities()
    return int(rng.choice(len(p), p=p))


def advance(state: SamplerState) -> None:
    state.step += 1


def entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())
