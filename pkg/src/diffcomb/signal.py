"""Regressors, measurement noise, and time-varying targets.

Every agent observes a reference d = x'w* + z, with x a zero-mean
Gaussian regressor (white, or the two-tap shift structure of a
first-order autoregressive stream) and z white Gaussian noise.  Targets
follow a staged schedule with linear interpolation between stages.

Randomness is organized as one pair of independent streams per
(run, agent): one for regressors, one for noise.  The block-drawing
sampler used by the Monte Carlo harness consumes these streams in the
same order as the scalar functions, so batching never changes the data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

AR1_COEFF = 0.5

_SNR_FILE = "snr_presets.json"


@dataclass(frozen=True)
class AgentSignalParams:
    """Per-agent signal statistics.

    Parameters
    ----------
    sigma_x2 : float
        Regressor power (variance of each tap for white inputs; variance
        of the scalar stream for ar1 inputs).
    sigma_z2 : float
        Measurement-noise variance.
    filter_len : int
        Regressor length L.
    regressor_kind : {"white", "ar1"}
        White draws i.i.d. taps; ar1 builds the regressor [x_n, x_{n-1}]
        from a first-order autoregressive stream with coefficient 0.5
        (requires L = 2).
    """

    sigma_x2: float
    sigma_z2: float
    filter_len: int
    regressor_kind: str = "white"

    def __post_init__(self):
        if self.sigma_x2 <= 0:
            raise ValueError("sigma_x2 must be positive")
        if self.sigma_z2 < 0:
            raise ValueError("sigma_z2 must be nonnegative")
        if self.filter_len < 1:
            raise ValueError("filter_len must be at least 1")
        if self.regressor_kind not in ("white", "ar1"):
            raise ValueError(f"unknown regressor kind {self.regressor_kind!r}")


@dataclass(frozen=True)
class TargetSchedule:
    """Piecewise-stationary target trajectory for all agents.

    ``stages`` is an ordered tuple of (start_time, targets) pairs where
    targets is an (N, L) array.  Each stage's value is reached exactly at
    its start time; the ``transition_len`` instants before a stage start
    interpolate linearly from the previous stage's value.
    """

    stages: tuple
    transition_len: int = 0

    def __post_init__(self):
        if not self.stages:
            raise ValueError("schedule needs at least one stage")
        if self.transition_len < 0:
            raise ValueError("transition_len must be nonnegative")
        norm = []
        for start, w in self.stages:
            arr = np.array(w, dtype=float)
            if arr.ndim != 2:
                raise ValueError("stage targets must be (n_agents, L) arrays")
            arr.setflags(write=False)
            norm.append((int(start), arr))
        shapes = {arr.shape for _, arr in norm}
        if len(shapes) != 1:
            raise ValueError("all stages must share the same target shape")
        starts = [s for s, _ in norm]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("stage start times must be strictly increasing")
        if any(b - self.transition_len < a for a, b in zip(starts, starts[1:])):
            raise ValueError("transition does not fit between stage starts")
        object.__setattr__(self, "stages", tuple(norm))

    @property
    def n_agents(self) -> int:
        return self.stages[0][1].shape[0]

    @property
    def filter_len(self) -> int:
        return self.stages[0][1].shape[1]

    @staticmethod
    def constant(targets, start: int = 0) -> "TargetSchedule":
        """A single-stage schedule holding one target forever."""
        return TargetSchedule(stages=((start, np.array(targets, dtype=float)),))


@dataclass(frozen=True)
class Sample:
    """One agent's datum at one instant: d = regressor'target + noise."""

    regressor: np.ndarray
    reference: float
    noise: float
    target: np.ndarray


@dataclass(frozen=True)
class SampleBatch:
    """One instant of data for a block of runs.

    regressors: (runs, N, L); references and noises: (runs, N);
    targets: (N, L), shared by all runs.
    """

    regressors: np.ndarray
    references: np.ndarray
    noises: np.ndarray
    targets: np.ndarray


class GeneratorState:
    """Sampling state of one (run, agent) pair.

    Holds two independent streams (regressors and noise) plus the
    autoregressive memory x_{n-1} for ar1 inputs.
    """

    def __init__(self, seed: int, run: int, agent: int):
        self.regressor_rng = np.random.default_rng(
            np.random.SeedSequence((seed, run, agent, 0))
        )
        self.noise_rng = np.random.default_rng(
            np.random.SeedSequence((seed, run, agent, 1))
        )
        self.ar_prev: float | None = None


def regressor_covariance(p: AgentSignalParams) -> np.ndarray:
    """Stationary covariance R_x of the regressor."""
    if p.regressor_kind == "white":
        return p.sigma_x2 * np.eye(p.filter_len)
    if p.filter_len != 2:
        raise ValueError("ar1 regressors require filter_len = 2")
    return p.sigma_x2 * np.array([[1.0, AR1_COEFF], [AR1_COEFF, 1.0]])


def target_at(schedule: TargetSchedule, n: int) -> np.ndarray:
    """Evaluate the target trajectory at time n (shape (N, L)).

    Inside a stationary stretch this is the stage value; within the
    transition_len instants before a stage start it is the linear
    interpolant toward that stage.
    """
    stages = schedule.stages
    if n < stages[0][0]:
        raise ValueError(f"time {n} precedes the first stage start {stages[0][0]}")
    idx = 0
    while idx + 1 < len(stages) and stages[idx + 1][0] <= n:
        idx += 1
    current = stages[idx][1]
    if idx + 1 < len(stages) and schedule.transition_len > 0:
        next_start, nxt = stages[idx + 1]
        ramp_start = next_start - schedule.transition_len
        if n >= ramp_start:
            frac = (n - ramp_start) / schedule.transition_len
            return current + (nxt - current) * frac
    return current


def draw_regressor(p: AgentSignalParams, state: GeneratorState) -> np.ndarray:
    """Draw the next regressor from the agent's stream."""
    if p.regressor_kind == "white":
        return np.sqrt(p.sigma_x2) * state.regressor_rng.standard_normal(p.filter_len)
    if p.filter_len != 2:
        raise ValueError("ar1 regressors require filter_len = 2")
    if state.ar_prev is None:
        state.ar_prev = float(
            np.sqrt(p.sigma_x2) * state.regressor_rng.standard_normal()
        )
    innovation = state.regressor_rng.standard_normal()
    x_new = AR1_COEFF * state.ar_prev + np.sqrt(0.75 * p.sigma_x2) * innovation
    out = np.array([x_new, state.ar_prev])
    state.ar_prev = float(x_new)
    return out


def emit_sample(
    p: AgentSignalParams, w_star: np.ndarray, x: np.ndarray, state: GeneratorState
) -> Sample:
    """Complete one datum: draw noise and form the reference."""
    if len(w_star) != len(x):
        raise ValueError("target and regressor lengths differ")
    z = float(np.sqrt(p.sigma_z2) * state.noise_rng.standard_normal())
    d = float(np.dot(x, w_star)) + z
    return Sample(regressor=x, reference=d, noise=z, target=np.asarray(w_star, float))


def snr(p: AgentSignalParams, w_star: np.ndarray) -> float:
    """Signal-to-noise ratio 10 log10(w*' R_x w* / sigma_z2) in dB."""
    if p.sigma_z2 <= 0:
        raise ValueError("snr undefined for zero noise variance")
    power = float(w_star @ regressor_covariance(p) @ w_star)
    return 10.0 * np.log10(power / p.sigma_z2)


class ChunkedSampler:
    """Draws data for a block of runs, matching the scalar path bit for bit.

    One stream pair per (run, agent), seeded from (seed, run, agent), so
    the numbers of a given run never depend on which block it lands in.
    Normals are drawn in blocks of ``block_len`` steps per stream; block
    boundaries do not change the values either, only how many samples
    each stream call returns.
    """

    def __init__(self, params, schedule, seed, runs, block_len=512):
        self.params = list(params)
        self.schedule = schedule
        self.runs = list(runs)
        self.block_len = int(block_len)
        self.n_agents = len(self.params)
        lens = {p.filter_len for p in self.params}
        if len(lens) != 1:
            raise ValueError("all agents must share one filter length")
        self.filter_len = lens.pop()
        if schedule.n_agents != self.n_agents or schedule.filter_len != self.filter_len:
            raise ValueError("schedule shape does not match agent parameters")
        self._states = [
            [GeneratorState(seed, r, k) for k in range(self.n_agents)]
            for r in self.runs
        ]
        self._sx = np.array([p.sigma_x2 for p in self.params])
        self._sz = np.array([p.sigma_z2 for p in self.params])
        self._ar_mask = np.array(
            [p.regressor_kind == "ar1" for p in self.params]
        )
        if np.any(self._ar_mask) and self.filter_len != 2:
            raise ValueError("ar1 regressors require filter_len = 2")
        self._n = 0
        self._cursor = self.block_len  # force a refill on first step
        self._reg_block = None
        self._noise_block = None

    def _refill(self):
        n_runs, n_agents = len(self.runs), self.n_agents
        b, L = self.block_len, self.filter_len
        reg = np.empty((b, n_runs, n_agents, L))
        noise = np.empty((b, n_runs, n_agents))
        for i in range(n_runs):
            for k in range(n_agents):
                state = self._states[i][k]
                if self._ar_mask[k]:
                    if state.ar_prev is None:
                        seq = state.regressor_rng.standard_normal(b + 1)
                        state.ar_prev = float(np.sqrt(self._sx[k]) * seq[0])
                        innov = seq[1:]
                    else:
                        innov = state.regressor_rng.standard_normal(b)
                    scale = np.sqrt(0.75 * self._sx[k])
                    prev = state.ar_prev
                    for t in range(b):
                        x_new = AR1_COEFF * prev + scale * innov[t]
                        reg[t, i, k, 0] = x_new
                        reg[t, i, k, 1] = prev
                        prev = x_new
                    state.ar_prev = float(prev)
                else:
                    reg[:, i, k] = np.sqrt(self._sx[k]) * (
                        state.regressor_rng.standard_normal((b, L))
                    )
                noise[:, i, k] = np.sqrt(self._sz[k]) * (
                    state.noise_rng.standard_normal(b)
                )
        self._reg_block = reg
        self._noise_block = noise
        self._cursor = 0

    def step(self) -> SampleBatch:
        """Produce the next instant of data for all runs and agents."""
        if self._cursor >= self.block_len:
            self._refill()
        x = self._reg_block[self._cursor]
        z = self._noise_block[self._cursor]
        self._cursor += 1
        w = target_at(self.schedule, self._n)
        self._n += 1
        d = np.einsum("rkl,kl->rk", x, w) + z
        return SampleBatch(regressors=x, references=d, noises=z, targets=w)


def load_snr_preset(n_agents: int, level: str, kind: str):
    """Load a bundled calibrated parameter set.

    Returns (params, w_star): a list of AgentSignalParams (filter_len 2)
    and the shared optimum the noise variances were calibrated against.
    """
    raw = json.loads(
        resources.files("diffcomb").joinpath("data", _SNR_FILE).read_text()
    )
    key = f"n{n_agents}"
    if key not in raw:
        raise ValueError(f"no bundled parameters for {n_agents} agents")
    block = raw[key]
    if kind not in block["sigma_z2"]:
        raise ValueError(f"unknown regressor kind {kind!r}")
    if level not in block["sigma_z2"][kind]:
        raise ValueError(f"unknown SNR level {level!r}")
    w_star = np.array(block["w_star"])
    params = [
        AgentSignalParams(
            sigma_x2=sx, sigma_z2=sz, filter_len=2, regressor_kind=kind
        )
        for sx, sz in zip(block["sigma_x2"], block["sigma_z2"][kind][level])
    ]
    return params, w_star
