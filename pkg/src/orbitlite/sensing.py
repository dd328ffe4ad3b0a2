"""Timer-driven sensors: refresh at their own rate, hold values in between.

A sensor owns an accumulator that carries the remainder across substeps, so a
60 Hz sensor on a 1 kHz loop refreshes exactly 60 times per simulated second
instead of drifting. Reads between refreshes return the previously obtained
values and the timestamp of the last refresh.

Noise models: ``none``, ``gaussian`` (iid per refresh), ``gaussian_bias``
(gaussian plus a per-episode constant offset redrawn at reset). Every sensor
has one RNG stream per environment, derived from (seed, env, sensor name), so
streams are never shared and resets stay isolated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .seeding import stream

_TIMER_EPS = 1e-9

NOISE_KINDS = ("none", "gaussian", "gaussian_bias")


class SensingError(ValueError):
    pass


@dataclass
class NoiseSpec:
    kind: str = "none"
    std: float | np.ndarray = 0.0
    bias_std: float | np.ndarray = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise SensingError(f"noise kind must be one of {NOISE_KINDS}")


@dataclass
class SensorSpec:
    name: str
    kind: str
    rate: float
    target: dict = field(default_factory=dict)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        if self.rate <= 0:
            raise SensingError(f"sensor {self.name}: rate must be > 0")


class Sensor:
    """Runtime buffer around a ground-truth provider callable."""

    def __init__(self, spec: SensorSpec, provider, num_envs: int, seed: int,
                 physics_rate: float):
        if spec.rate > physics_rate + _TIMER_EPS:
            raise SensingError(
                f"sensor {spec.name}: rate {spec.rate} above physics rate {physics_rate}"
            )
        self.spec = spec
        self.provider = provider
        self.num_envs = num_envs
        self.period = 1.0 / spec.rate
        probe = np.asarray(provider())
        if probe.shape[0] != num_envs or probe.ndim != 2:
            raise SensingError(f"sensor {spec.name}: provider must return (N, dim)")
        self.dim = probe.shape[1]
        self.value = probe.astype(np.float64).copy()
        self.last_update_time = 0.0
        self._acc = 0.0
        self.refresh_count = 0
        self._noisy = spec.noise.kind != "none"
        self._biased = spec.noise.kind == "gaussian_bias"
        self.bias = np.zeros((num_envs, self.dim))
        if self._noisy:
            self._gens = [stream(seed, "sensor", spec.name, "env", i)
                          for i in range(num_envs)]
        else:
            self._gens = None

    def advance(self, dt: float, now: float) -> None:
        """Accumulate time; refresh as many whole periods as have elapsed."""
        self._acc += dt
        while self._acc + _TIMER_EPS >= self.period:
            self._acc -= self.period
            self._refresh(now)

    def _refresh(self, now: float, env_ids=None) -> None:
        gt = np.asarray(self.provider(), dtype=np.float64)
        if env_ids is None:
            self.value[:] = gt
            self.last_update_time = now
            self.refresh_count += 1
            ids = range(self.num_envs)
        else:
            self.value[env_ids] = gt[env_ids]
            ids = np.atleast_1d(env_ids)
        if self._noisy:
            for i in ids:
                self.value[i] += self._gens[i].standard_normal(self.dim) * self.spec.noise.std
            if self._biased:
                if env_ids is None:
                    self.value += self.bias
                else:
                    self.value[env_ids] += self.bias[env_ids]

    def read(self):
        """(held value, sim time of the last refresh); pure, no side effects."""
        return self.value, self.last_update_time

    def reset(self, env_ids, now: float) -> None:
        """Redraw bias and refresh the given envs from ground truth."""
        if self._biased:
            for i in np.atleast_1d(env_ids):
                self.bias[i] = self._gens[i].standard_normal(self.dim) * self.spec.noise.bias_std
        self._refresh(now, env_ids=env_ids)
