"""Synthetic multi-modal sequences with i.i.d. Gaussian coordinates.

Stream layout (part of the dataset contract):

* generator: numpy ``Philox`` bit generator seeded from
  ``SeedSequence(seed, spawn_key=key)``; normals come from
  ``Generator.standard_normal`` (ziggurat), as float64, then ``mu + sigma * z``
  is rounded to float32;
* store channel ``m`` uses ``key = (0, m)`` and draws ``L * d`` normals in
  position-major order;
* target of trial ``t`` uses ``key = (1, t)`` and draws ``M_total * d``
  normals in channel-major order.

Channels can therefore be generated independently, and targets do not
depend on ``L``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import FusionWeights, MultiModalRecord, SequenceStore

# Channel order is (query, text, image, attributes). The different-norm
# group sets query 0.25, attributes 0.5, text 1.0, image 2.0.
NORM_PRESETS = {
    "different": (0.25, 1.0, 2.0, 0.5),
    "same": (1.0, 1.0, 1.0, 1.0),
}
GAMMA_PRESETS = {
    "equal": (0.25, 0.25, 0.25, 0.25),
    "unequal": (0.1, 0.2, 0.3, 0.4),
}
DEFAULT_TRIALS = 50


@dataclass(frozen=True)
class SynthConfig:
    L: int = 10000
    d: int = 64
    M_total: int = 4
    mu: tuple[float, ...] = NORM_PRESETS["different"]
    sigma: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    gamma_preset: str = "equal"
    gamma: tuple[float, ...] = field(default=GAMMA_PRESETS["equal"])
    seed: int = 0
    trials: int = DEFAULT_TRIALS

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        if self.d < 1 or self.M_total < 1:
            raise ValueError("d and M_total must be >= 1")
        if len(self.mu) != self.M_total or len(self.sigma) != self.M_total:
            raise ValueError(f"mu and sigma need {self.M_total} entries")
        if any(s < 0 for s in self.sigma):
            raise ValueError(f"sigma must be >= 0, got {list(self.sigma)}")
        if not all(np.isfinite(self.mu)) or not all(np.isfinite(self.sigma)):
            raise ValueError("mu and sigma must be finite")
        if self.gamma_preset in GAMMA_PRESETS:
            if tuple(self.gamma) != GAMMA_PRESETS[self.gamma_preset]:
                object.__setattr__(self, "gamma", GAMMA_PRESETS[self.gamma_preset])
        elif self.gamma_preset != "custom":
            raise ValueError(f"unknown gamma preset {self.gamma_preset!r}")
        if len(self.gamma) != self.M_total:
            raise ValueError(f"gamma needs {self.M_total} entries")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        object.__setattr__(self, "mu", tuple(float(x) for x in self.mu))
        object.__setattr__(self, "sigma", tuple(float(x) for x in self.sigma))
        object.__setattr__(self, "gamma", tuple(float(x) for x in self.gamma))

    @classmethod
    def preset(cls, norms: str = "different", weights: str = "equal", **kw) -> "SynthConfig":
        if norms not in NORM_PRESETS:
            raise ValueError(f"unknown norm preset {norms!r}; expected one of {sorted(NORM_PRESETS)}")
        return cls(mu=NORM_PRESETS[norms], gamma_preset=weights, **kw)

    @property
    def fusion(self) -> FusionWeights:
        return FusionWeights.from_gamma(self.gamma)

    def to_dict(self) -> dict:
        out = asdict(self)
        for k in ("mu", "sigma", "gamma"):
            out[k] = list(out[k])
        return out


def _stream(seed: int, key: Sequence[int]) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _draw(config: SynthConfig, key: Sequence[int], shape, mu: float, sigma: float) -> np.ndarray:
    z = _stream(config.seed, key).standard_normal(shape)
    return (mu + sigma * z).astype(np.float32)


def generate_vectors(config: SynthConfig) -> np.ndarray:
    out = np.empty((config.L, config.M_total, config.d), dtype=np.float32)
    for m in range(config.M_total):
        out[:, m, :] = _draw(config, (0, m), (config.L, config.d), config.mu[m], config.sigma[m])
    return out


def generate(config: SynthConfig) -> SequenceStore:
    return SequenceStore(generate_vectors(config))


def generate_target(config: SynthConfig, trial: int) -> MultiModalRecord:
    z = _stream(config.seed, (1, trial)).standard_normal((config.M_total, config.d))
    mu = np.asarray(config.mu)[:, None]
    sigma = np.asarray(config.sigma)[:, None]
    vec = (mu + sigma * z).astype(np.float32)
    return MultiModalRecord(config.L + 1, vec, query_id=f"target-{trial}", item_id=f"target-{trial}")


def generate_targets(config: SynthConfig, trials: int | None = None) -> list[MultiModalRecord]:
    n = config.trials if trials is None else trials
    return [generate_target(config, t) for t in range(n)]


def gaussian_targets(store: SequenceStore, trials: int, seed: int) -> list[MultiModalRecord]:
    """Targets for an externally supplied dataset.

    Each channel's coordinates are drawn from a Gaussian with that channel's
    empirical mean and standard deviation, through the same streams as
    :func:`generate_target`.
    """
    v = store.vectors.astype(np.float64)
    mu = v.mean(axis=(0, 2))
    sigma = v.std(axis=(0, 2))
    cfg = SynthConfig(L=store.length, d=store.dim, M_total=store.num_channels,
                      mu=tuple(mu), sigma=tuple(sigma), gamma_preset="custom",
                      gamma=(1.0 / store.num_channels,) * store.num_channels, seed=seed,
                      trials=max(1, trials))
    return generate_targets(cfg, trials)
