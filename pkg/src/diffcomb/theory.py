"""Deterministic moment evolution for a pair of combined diffusion strategies.

Under the usual independence assumptions for LMS analysis, the weight
errors v = w - w_opt of each component strategy obey linear recursions
in their first and second moments.  This module builds those recursions
from the network description, couples them to scalar recursions for the
per-agent mixing-coefficient moments, and assembles transient and
steady-state aggregates (per-component MSD, cross-MSD, combined MSD).

Block quantities live in R^{NL}: agent k owns the slice [kL, (k+1)L).
Means evolve as m' = bbar m - rbar; covariances follow a sandwich
recursion with additive noise and drift terms.  Steady states come from
direct linear solves of size (NL)^2 instead of iterating.

The predictor covers static fusion matrices only; the data-driven A2
refresh rules have no closed-form moment description here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .combine import CombinerConfig
from .diffusion import StrategyConfig
from .graph import Topology

DELTA_J_FLOOR = 1e-12

_MODEL_ARRAYS = ("a1x", "a2x", "u", "hbar", "bbar", "rbar", "g",
                 "c", "mu", "rx", "sigma_z2", "w_star")


class InstabilityError(RuntimeError):
    """A component's mean recursion has spectral radius >= 1."""


@dataclass(frozen=True)
class ComponentModel:
    """Frozen moment description of one component diffusion strategy.

    bbar is the mean error transition matrix, rbar the deterministic
    drift (zero for a shared target under left-stochastic combining),
    g the second moment of the gradient noise.  c, mu, rx, sigma_z2 and
    w_star are kept so that cross moments and derived reports can be
    computed without re-supplying the inputs.
    """

    n_agents: int
    filter_len: int
    a1x: np.ndarray
    a2x: np.ndarray
    u: np.ndarray
    hbar: np.ndarray
    bbar: np.ndarray
    rbar: np.ndarray
    g: np.ndarray
    c: np.ndarray
    mu: np.ndarray
    rx: np.ndarray
    sigma_z2: np.ndarray
    w_star: np.ndarray

    def __post_init__(self):
        for name in _MODEL_ARRAYS:
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def block_dim(self) -> int:
        return self.n_agents * self.filter_len

    def data_matrices(self) -> np.ndarray:
        """Per-agent averaged data matrices (the diagonal blocks of hbar)."""
        n, l = self.n_agents, self.filter_len
        idx = np.arange(n)
        return self.hbar.reshape(n, l, n, l)[idx, :, idx, :]


@dataclass
class MomentState:
    """Joint moment state of both components and the combiner at one instant.

    m1/m2 are mean error vectors, om1/om2/omx the (cross-)covariances,
    gbar/g2bar the per-agent first and second moments of the mixing
    coefficient, pbar the per-agent smoothed difference power.
    """

    m1: np.ndarray
    m2: np.ndarray
    om1: np.ndarray
    om2: np.ndarray
    omx: np.ndarray
    gbar: np.ndarray
    g2bar: np.ndarray
    pbar: np.ndarray


@dataclass
class TheoryTrajectory:
    """Recorded curves from evolve().

    Row t of the per-step arrays holds the state after t+1 updates.  The
    emse arrays instead hold the pre-update values that drove the
    coefficient update at step t (so row 0 reflects the initial state).
    degenerate_steps counts (step, agent) pairs whose excess-error
    difference power fell below DELTA_J_FLOOR.
    """

    emse1: np.ndarray
    emse2: np.ndarray
    emse12: np.ndarray
    gbar: np.ndarray
    g2bar: np.ndarray
    pbar: np.ndarray
    msd1: np.ndarray
    msd2: np.ndarray
    cross_msd: np.ndarray
    combined_msd: np.ndarray
    state: MomentState
    degenerate_steps: int = 0


@dataclass(frozen=True)
class StabilityReport:
    """Step-size limits and pass/fail flags for a configured pair.

    mu bounds are per agent and per component.  The power-normalized
    coefficient bounds depend only on the smoothing factor; the
    sign-regressor bounds need the worst observed difference power and
    are None when no trajectory was supplied.
    """

    mu_bound1: np.ndarray
    mu_bound2: np.ndarray
    mu_ok1: np.ndarray
    mu_ok2: np.ndarray
    pn_mean_bound: float
    pn_ms_bound: float
    pn_mean_ok: np.ndarray
    pn_ms_ok: np.ndarray
    sr_mean_bound: np.ndarray | None = None
    sr_ms_bound: np.ndarray | None = None
    sr_mean_ok: np.ndarray | None = None
    sr_ms_ok: np.ndarray | None = None


@dataclass(frozen=True)
class UniversalityReport:
    """Steady-state comparison of the combined strategy to its components."""

    emse_combined: np.ndarray
    network_emse1: float
    network_emse2: float
    network_combined: float
    margin: float
    verdict: str
    agent_regimes: tuple[str, ...]


@dataclass(frozen=True)
class SteadyReport:
    """Closed-form steady state of the combined pair."""

    m1: np.ndarray
    m2: np.ndarray
    om1: np.ndarray
    om2: np.ndarray
    omx: np.ndarray
    gbar: np.ndarray
    g2bar: np.ndarray
    pbar: np.ndarray
    bias: np.ndarray
    emse1: np.ndarray
    emse2: np.ndarray
    emse12: np.ndarray
    msd1: float
    msd2: float
    cross_msd: float
    combined_msd: float
    universality: UniversalityReport
    bounds: StabilityReport


def _block_diag(blocks: np.ndarray) -> np.ndarray:
    n, l, _ = blocks.shape
    out = np.zeros((n * l, n * l))
    for k in range(n):
        out[k * l:(k + 1) * l, k * l:(k + 1) * l] = blocks[k]
    return out


def _block_traces(matrix: np.ndarray, n: int, l: int) -> np.ndarray:
    idx = np.arange(n)
    blocks = matrix.reshape(n, l, n, l)[idx, :, idx, :]
    return np.trace(blocks, axis1=-2, axis2=-1)


def build_component_model(topology: Topology, cfg: StrategyConfig,
                          rx, sigma_z2, w_star) -> ComponentModel:
    """Assemble the moment description of one diffusion strategy.

    rx holds the per-agent regressor covariances with shape (N, L, L),
    sigma_z2 the per-agent noise variances, w_star the stationary
    targets with shape (N, L).  Raises for adaptive fusion modes, which
    the predictor does not cover.
    """
    if cfg.a2_mode != "static":
        raise ValueError("moment predictor requires a static a2 matrix")
    if cfg.topology is not topology and not np.array_equal(
            cfg.topology.adjacency, topology.adjacency):
        raise ValueError("strategy config was built for a different topology")
    n = topology.n_agents
    rx = np.asarray(rx, dtype=float)
    if rx.ndim != 3 or rx.shape[0] != n or rx.shape[1] != rx.shape[2]:
        raise ValueError("rx must have shape (n_agents, L, L)")
    if not np.allclose(rx, rx.transpose(0, 2, 1), atol=1e-12):
        raise ValueError("regressor covariances must be symmetric")
    if np.any(np.linalg.eigvalsh(rx)[:, 0] < -1e-12):
        raise ValueError("regressor covariances must be positive semi-definite")
    sigma_z2 = np.broadcast_to(np.asarray(sigma_z2, dtype=float), (n,)).copy()
    if np.any(sigma_z2 < 0):
        raise ValueError("noise variances must be nonnegative")
    l = rx.shape[-1]
    w = np.asarray(w_star, dtype=float).reshape(n, l)

    eye_l = np.eye(l)
    eye_nl = np.eye(n * l)
    c = np.array(cfg.c.entries, dtype=float)
    a1x = np.kron(np.array(cfg.a1.entries), eye_l)
    a2x = np.kron(np.array(cfg.a2.entries), eye_l)
    u = np.kron(np.diag(cfg.mu), eye_l)

    data_blocks = np.einsum("lk,lij->kij", c, rx)
    hbar = _block_diag(data_blocks)
    bbar = a2x.T @ (eye_nl - u @ hbar) @ a1x.T

    # drift: data sharing pulls each agent toward its neighbors' targets,
    # while combining leaks weight mass across heterogeneous targets
    diff = w[None, :, :] - w[:, None, :]
    hu = np.einsum("lk,lij,lkj->ki", c, rx, diff).reshape(-1)
    leak = a2x.T @ (eye_nl - u @ hbar) @ (a1x.T - eye_nl) + (a2x.T - eye_nl)
    rbar = a2x.T @ (u @ hu) - leak @ w.reshape(-1)

    inner = np.einsum("lk,lm,l,lij->kimj", c, c, sigma_z2, rx)
    g = a2x.T @ u @ inner.reshape(n * l, n * l) @ u @ a2x
    g = 0.5 * (g + g.T)

    return ComponentModel(n_agents=n, filter_len=l, a1x=a1x, a2x=a2x, u=u,
                          hbar=hbar, bbar=bbar, rbar=rbar, g=g, c=c,
                          mu=np.array(cfg.mu), rx=rx, sigma_z2=sigma_z2,
                          w_star=w.reshape(-1))


def _require_same_data(model1: ComponentModel, model2: ComponentModel) -> None:
    if (model1.n_agents != model2.n_agents
            or model1.filter_len != model2.filter_len):
        raise ValueError("component models have mismatched dimensions")
    if (not np.allclose(model1.rx, model2.rx)
            or not np.allclose(model1.sigma_z2, model2.sigma_z2)
            or not np.allclose(model1.w_star, model2.w_star)):
        raise ValueError("component models must share data statistics")


def cross_noise_moment(model1: ComponentModel, model2: ComponentModel) -> np.ndarray:
    """E{g1 g2^T}: gradient-noise coupling through the shared measurements."""
    _require_same_data(model1, model2)
    n, l = model1.n_agents, model1.filter_len
    inner = np.einsum("lk,lm,l,lij->kimj", model1.c, model2.c,
                      model1.sigma_z2, model1.rx)
    return model1.a2x.T @ model1.u @ inner.reshape(n * l, n * l) @ model2.u @ model2.a2x


def mean_step(model: ComponentModel, m: np.ndarray) -> np.ndarray:
    """One step of the mean error recursion."""
    return model.bbar @ m - model.rbar


def covariance_step(model: ComponentModel, m: np.ndarray, om: np.ndarray) -> np.ndarray:
    """One step of the error covariance recursion (result symmetrized)."""
    bm = model.bbar @ m
    out = model.bbar @ om @ model.bbar.T + model.g + np.outer(model.rbar, model.rbar)
    out -= np.outer(bm, model.rbar)
    out -= np.outer(model.rbar, bm)
    return 0.5 * (out + out.T)


def cross_covariance_step(model1: ComponentModel, model2: ComponentModel,
                          m1: np.ndarray, m2: np.ndarray, omx: np.ndarray,
                          gx: np.ndarray | None = None) -> np.ndarray:
    """One step of the cross-covariance recursion E{v1 v2^T}.

    Pass a precomputed gx = cross_noise_moment(model1, model2) when
    iterating; it is rebuilt on every call otherwise.
    """
    if omx.shape != (model1.block_dim, model2.block_dim):
        raise ValueError("cross covariance has mismatched dimensions")
    if gx is None:
        gx = cross_noise_moment(model1, model2)
    out = model1.bbar @ omx @ model2.bbar.T + gx
    out += np.outer(model1.rbar, model2.rbar)
    out -= np.outer(model1.bbar @ m1, model2.rbar)
    out -= np.outer(model1.rbar, model2.bbar @ m2)
    return out


def emse_from_cov(om: np.ndarray, rx) -> np.ndarray:
    """Per-agent excess errors tr(R_{x,k} Om_kk) from the diagonal blocks."""
    rx = np.asarray(rx, dtype=float)
    n, l = rx.shape[0], rx.shape[-1]
    idx = np.arange(n)
    blocks = om.reshape(n, l, n, l)[idx, :, idx, :]
    return np.einsum("kij,kji->k", rx, blocks)


def _nu_values(cfg: CombinerConfig, n: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(cfg.nu_gamma, dtype=float), (n,))


def _per_agent(*values):
    return tuple(np.asarray(v, dtype=float) for v in values)


def _require_scheme(cfg: CombinerConfig, scheme: str) -> None:
    if cfg.scheme != scheme:
        raise ValueError(f"recursion applies to the {scheme!r} scheme, "
                         f"got {cfg.scheme!r}")


def gamma_mean_step_pn(cfg: CombinerConfig, gbar, pbar_prev, dj1, dj2):
    """Advance the power-normalized coefficient mean by one step.

    Returns (next mean, updated power); the power is refreshed first and
    divides the raw step-size, mirroring the stochastic update.
    """
    _require_scheme(cfg, "power_normalized")
    gbar, pbar_prev, dj1, dj2 = _per_agent(gbar, pbar_prev, dj1, dj2)
    s = dj1 + dj2
    pbar = cfg.eta * pbar_prev + (1.0 - cfg.eta) * s
    nu = _nu_values(cfg, np.shape(gbar)[0]) / (cfg.epsilon + pbar)
    return gbar * (1.0 - nu * s) + nu * dj2, pbar


def gamma_ms_step_pn(cfg: CombinerConfig, gbar, g2bar, pbar, dj1, dj2, j2, sigma_z2):
    """Advance the power-normalized coefficient second moment by one step.

    pbar must be the value already refreshed by gamma_mean_step_pn for
    the same instant.  The squared normalized step-size is approximated
    by the square of its mean.
    """
    _require_scheme(cfg, "power_normalized")
    gbar, g2bar, pbar, dj1, dj2, j2, sigma_z2 = _per_agent(
        gbar, g2bar, pbar, dj1, dj2, j2, sigma_z2
    )
    s = dj1 + dj2
    nu = _nu_values(cfg, np.shape(gbar)[0]) / (cfg.epsilon + pbar)
    nu2 = nu * nu
    quad = g2bar * (1.0 + 3.0 * nu2 * s * s - 2.0 * nu * s)
    drive = nu2 * j2 * s + 2.0 * nu2 * dj2 * dj2
    noise = sigma_z2 * nu2 * s
    cross = gbar * (nu * dj2 - 3.0 * nu2 * s * dj2)
    return quad + drive + noise + 2.0 * cross


def gamma_mean_step_sr(cfg: CombinerConfig, gbar, dj1, dj2):
    """Advance the sign-regressor coefficient mean by one step.

    The rectified moments of the Gaussian error difference give the
    sqrt(2 S / pi) contraction; S is floored at DELTA_J_FLOOR so that
    indistinguishable components leave the coefficient frozen.
    """
    _require_scheme(cfg, "sign_regressor")
    gbar, dj1, dj2 = _per_agent(gbar, dj1, dj2)
    s = np.maximum(dj1 + dj2, DELTA_J_FLOOR)
    nu = _nu_values(cfg, np.shape(gbar)[0])
    rate = nu * np.sqrt(2.0 * s / np.pi)
    return gbar * (1.0 - rate) + nu * np.sqrt(2.0 / np.pi) * dj2 / np.sqrt(s)


def gamma_ms_step_sr(cfg: CombinerConfig, gbar, g2bar, dj1, dj2, j2, sigma_z2):
    """Advance the sign-regressor coefficient second moment by one step."""
    _require_scheme(cfg, "sign_regressor")
    gbar, g2bar, dj1, dj2, j2, sigma_z2 = _per_agent(
        gbar, g2bar, dj1, dj2, j2, sigma_z2
    )
    s = np.maximum(dj1 + dj2, DELTA_J_FLOOR)
    nu = _nu_values(cfg, np.shape(gbar)[0])
    nu2 = nu * nu
    quad = g2bar * (1.0 + nu2 * s - 2.0 * nu * np.sqrt(2.0 * s / np.pi))
    cross = gbar * (np.sqrt(2.0 / np.pi) * nu * dj2 / np.sqrt(s) - nu2 * dj2)
    return quad + nu2 * j2 + nu2 * sigma_z2 + 2.0 * cross


def gamma_steady_pn(cfg: CombinerConfig, dj1, dj2, j2, sigma_z2):
    """Closed-form stationary coefficient moments, power-normalized scheme.

    Returns (mean, second moment, power).  Where the difference power is
    degenerate the coefficient never moves, so the initialization moments
    (1/2, 1/4) are reported.
    """
    _require_scheme(cfg, "power_normalized")
    dj1, dj2, j2, sigma_z2 = _per_agent(dj1, dj2, j2, sigma_z2)
    degenerate = dj1 + dj2 <= DELTA_J_FLOOR
    s = np.maximum(dj1 + dj2, DELTA_J_FLOOR)
    nu = _nu_values(cfg, s.shape[0]) / (cfg.epsilon + s)
    gbar = np.where(degenerate, 0.5, dj2 / s)
    num = nu * (j2 + sigma_z2) * s + 2.0 * nu * dj2 ** 2 \
        + 2.0 * gbar * (dj2 - 3.0 * nu * dj2 * s)
    den = 2.0 * s - 3.0 * nu * s * s
    g2bar = np.where(degenerate, 0.25, num / den)
    return gbar, g2bar, np.where(degenerate, 0.0, s)


def gamma_steady_sr(cfg: CombinerConfig, dj1, dj2, j2, sigma_z2):
    """Closed-form stationary coefficient moments, sign-regressor scheme."""
    _require_scheme(cfg, "sign_regressor")
    dj1, dj2, j2, sigma_z2 = _per_agent(dj1, dj2, j2, sigma_z2)
    degenerate = dj1 + dj2 <= DELTA_J_FLOOR
    s = np.maximum(dj1 + dj2, DELTA_J_FLOOR)
    nu = _nu_values(cfg, s.shape[0])
    gbar = np.where(degenerate, 0.5, dj2 / s)
    num = nu * (j2 + sigma_z2) \
        + 2.0 * gbar * (dj2 * np.sqrt(2.0 / (np.pi * s)) - nu * dj2)
    den = np.sqrt(8.0 * s / np.pi) - nu * s
    g2bar = np.where(degenerate, 0.25, num / den)
    return gbar, g2bar


def combined_msd(state: MomentState, weight=None) -> float:
    """Network deviation of the combined estimates at the state's instant.

    Expands E{||Gamma v1 + (I - Gamma) v2||^2} with per-agent coefficient
    moments; the default weighting averages agents (1/N each).
    """
    n = state.gbar.shape[0]
    l = state.om1.shape[0] // n
    w = np.full(n, 1.0 / n) if weight is None else \
        np.broadcast_to(np.asarray(weight, dtype=float), (n,))
    t1 = _block_traces(state.om1, n, l)
    t2 = _block_traces(state.om2, n, l)
    tx = _block_traces(state.omx, n, l)
    per_agent = (state.g2bar * t1
                 + (1.0 - 2.0 * state.gbar + state.g2bar) * t2
                 + 2.0 * (state.gbar - state.g2bar) * tx)
    return float(np.sum(w * per_agent))


def initial_moments(model1: ComponentModel, model2: ComponentModel) -> MomentState:
    """Moment state for all-zero initial estimates and gamma = 1/2."""
    _require_same_data(model1, model2)
    n = model1.n_agents
    w = model1.w_star
    outer = np.outer(w, w)
    return MomentState(m1=-w.copy(), m2=-w.copy(),
                       om1=outer.copy(), om2=outer.copy(), omx=outer.copy(),
                       gbar=np.full(n, 0.5), g2bar=np.full(n, 0.25),
                       pbar=np.zeros(n))


def shift_targets(state: MomentState, delta: np.ndarray) -> MomentState:
    """Re-express a moment state against a new stationary target.

    delta is old target minus new target, flattened.  Error vectors all
    shift deterministically by delta, so means translate and covariances
    gain the corresponding rank-one corrections.  Coefficient moments
    are unaffected.
    """
    delta = np.asarray(delta, dtype=float)
    dd = np.outer(delta, delta)
    om1 = state.om1 + np.outer(state.m1, delta) + np.outer(delta, state.m1) + dd
    om2 = state.om2 + np.outer(state.m2, delta) + np.outer(delta, state.m2) + dd
    omx = state.omx + np.outer(state.m1, delta) + np.outer(delta, state.m2) + dd
    return MomentState(m1=state.m1 + delta, m2=state.m2 + delta,
                       om1=om1, om2=om2, omx=omx,
                       gbar=state.gbar.copy(), g2bar=state.g2bar.copy(),
                       pbar=state.pbar.copy())


def evolve(model1: ComponentModel, model2: ComponentModel, cfg: CombinerConfig,
           n_steps: int, state: MomentState | None = None) -> TheoryTrajectory:
    """Run the coupled moment recursions for n_steps instants.

    Per instant: the pre-update covariances give the excess errors that
    drive the coefficient update (the stochastic update also acts on
    pre-update errors), component moments advance, coefficient moments
    advance, and the combined deviation is assembled from the advanced
    state.  Component moments never depend on the coefficient.
    """
    _require_same_data(model1, model2)
    if cfg.scheme not in ("power_normalized", "sign_regressor"):
        raise ValueError("moment recursions cover the two-component schemes only")
    if state is None:
        state = initial_moments(model1, model2)
    n, l = model1.n_agents, model1.filter_len
    gx = cross_noise_moment(model1, model2)
    sigma_z2 = model1.sigma_z2

    emse1 = np.empty((n_steps, n))
    emse2 = np.empty((n_steps, n))
    emse12 = np.empty((n_steps, n))
    gbar = np.empty((n_steps, n))
    g2bar = np.empty((n_steps, n))
    pbar = np.empty((n_steps, n))
    msd1 = np.empty(n_steps)
    msd2 = np.empty(n_steps)
    cross = np.empty(n_steps)
    combined = np.empty(n_steps)
    degenerate = 0

    for t in range(n_steps):
        j1 = emse_from_cov(state.om1, model1.rx)
        j2 = emse_from_cov(state.om2, model1.rx)
        j12 = emse_from_cov(state.omx, model1.rx)
        dj1 = j1 - j12
        dj2 = j2 - j12
        degenerate += int(np.count_nonzero(dj1 + dj2 <= DELTA_J_FLOOR))

        if cfg.scheme == "power_normalized":
            gbar_next, pbar_next = gamma_mean_step_pn(
                cfg, state.gbar, state.pbar, dj1, dj2)
            g2_next = gamma_ms_step_pn(
                cfg, state.gbar, state.g2bar, pbar_next, dj1, dj2, j2, sigma_z2)
        else:
            gbar_next = gamma_mean_step_sr(cfg, state.gbar, dj1, dj2)
            g2_next = gamma_ms_step_sr(
                cfg, state.gbar, state.g2bar, dj1, dj2, j2, sigma_z2)
            pbar_next = state.pbar

        state = MomentState(
            m1=mean_step(model1, state.m1),
            m2=mean_step(model2, state.m2),
            om1=covariance_step(model1, state.m1, state.om1),
            om2=covariance_step(model2, state.m2, state.om2),
            omx=cross_covariance_step(model1, model2, state.m1, state.m2,
                                      state.omx, gx=gx),
            gbar=gbar_next, g2bar=g2_next, pbar=pbar_next)

        emse1[t] = j1
        emse2[t] = j2
        emse12[t] = j12
        gbar[t] = state.gbar
        g2bar[t] = state.g2bar
        pbar[t] = state.pbar
        msd1[t] = np.mean(_block_traces(state.om1, n, l))
        msd2[t] = np.mean(_block_traces(state.om2, n, l))
        cross[t] = np.mean(_block_traces(state.omx, n, l))
        combined[t] = combined_msd(state)

    return TheoryTrajectory(emse1=emse1, emse2=emse2, emse12=emse12,
                            gbar=gbar, g2bar=g2bar, pbar=pbar,
                            msd1=msd1, msd2=msd2, cross_msd=cross,
                            combined_msd=combined, state=state,
                            degenerate_steps=degenerate)


def _spectral_radius(matrix: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


def _fixed_point_cov(bleft: np.ndarray, bright: np.ndarray,
                     const: np.ndarray) -> np.ndarray:
    # X = bleft X bright^T + const, solved through the row-major
    # identity vec(A X B^T) = (A kron B) vec(X)
    nl = bleft.shape[0]
    kron = np.kron(bleft, bright)
    x = np.linalg.solve(np.eye(nl * nl) - kron, const.reshape(-1))
    return x.reshape(nl, nl)


def steady_state(model1: ComponentModel, model2: ComponentModel,
                 cfg: CombinerConfig) -> SteadyReport:
    """Closed-form limits of the coupled recursions.

    Means come from direct solves, covariances from the discrete
    fixed-point equations of the covariance recursions, coefficient
    moments from their stationary expressions with moments frozen at the
    limits.  Raises InstabilityError when a component cannot converge.
    """
    _require_same_data(model1, model2)
    n, l = model1.n_agents, model1.filter_len
    eye = np.eye(model1.block_dim)
    for label, model in (("1", model1), ("2", model2)):
        rho = _spectral_radius(model.bbar)
        if rho >= 1.0:
            raise InstabilityError(
                f"component {label} mean recursion diverges: "
                f"spectral radius {rho:.6f} >= 1")

    m1 = -np.linalg.solve(eye - model1.bbar, model1.rbar)
    m2 = -np.linalg.solve(eye - model2.bbar, model2.rbar)

    bm1 = model1.bbar @ m1
    bm2 = model2.bbar @ m2
    const1 = model1.g + np.outer(model1.rbar, model1.rbar) \
        - np.outer(bm1, model1.rbar) - np.outer(model1.rbar, bm1)
    const2 = model2.g + np.outer(model2.rbar, model2.rbar) \
        - np.outer(bm2, model2.rbar) - np.outer(model2.rbar, bm2)
    constx = cross_noise_moment(model1, model2) \
        + np.outer(model1.rbar, model2.rbar) \
        - np.outer(bm1, model2.rbar) - np.outer(model1.rbar, bm2)
    om1 = _fixed_point_cov(model1.bbar, model1.bbar, const1)
    om1 = 0.5 * (om1 + om1.T)
    om2 = _fixed_point_cov(model2.bbar, model2.bbar, const2)
    om2 = 0.5 * (om2 + om2.T)
    omx = _fixed_point_cov(model1.bbar, model2.bbar, constx)

    j1 = emse_from_cov(om1, model1.rx)
    j2 = emse_from_cov(om2, model1.rx)
    j12 = emse_from_cov(omx, model1.rx)
    dj1 = j1 - j12
    dj2 = j2 - j12
    sigma_z2 = model1.sigma_z2

    if cfg.scheme == "power_normalized":
        gbar, g2bar, pbar = gamma_steady_pn(cfg, dj1, dj2, j2, sigma_z2)
    elif cfg.scheme == "sign_regressor":
        gbar, g2bar = gamma_steady_sr(cfg, dj1, dj2, j2, sigma_z2)
        pbar = np.zeros(n)
    else:
        raise ValueError("steady state covers the two-component schemes only")

    gamma_blocks = np.kron(np.diag(gbar), np.eye(l))
    bias = gamma_blocks @ m1 + (np.eye(n * l) - gamma_blocks) @ m2
    state = MomentState(m1=m1, m2=m2, om1=om1, om2=om2, omx=omx,
                        gbar=gbar, g2bar=g2bar, pbar=pbar)

    dj_sum = dj1 + dj2
    bounds = stability_bounds(model1, model2, cfg, dj_sum=dj_sum)
    universality = universality_report(j1, j2, j12)

    return SteadyReport(
        m1=m1, m2=m2, om1=om1, om2=om2, omx=omx,
        gbar=gbar, g2bar=g2bar, pbar=pbar, bias=bias,
        emse1=j1, emse2=j2, emse12=j12,
        msd1=float(np.mean(_block_traces(om1, n, l))),
        msd2=float(np.mean(_block_traces(om2, n, l))),
        cross_msd=float(np.mean(_block_traces(omx, n, l))),
        combined_msd=combined_msd(state),
        universality=universality, bounds=bounds)


def stability_bounds(model1: ComponentModel, model2: ComponentModel,
                     cfg: CombinerConfig, dj_sum=None) -> StabilityReport:
    """Step-size stability limits for the configured pair.

    dj_sum holds per-agent trajectories of the excess-error difference
    power (time on the leading axis, or a single row); its worst value
    sets the sign-regressor limits.  All bounds are open intervals, so a
    step-size equal to its bound is flagged as failing.
    """
    reports = []
    for model in (model1, model2):
        lam = np.linalg.eigvalsh(model.data_matrices())[:, -1]
        bound = 2.0 / lam
        reports.append((bound, (model.mu > 0) & (model.mu < bound)))
    (mu_bound1, mu_ok1), (mu_bound2, mu_ok2) = reports

    n = model1.n_agents
    nu = _nu_values(cfg, n)
    pn_mean_bound = 1.0 - cfg.eta
    pn_ms_bound = (1.0 - cfg.eta) / 3.0
    pn_mean_ok = (nu > 0) & (nu < pn_mean_bound)
    pn_ms_ok = (nu > 0) & (nu < pn_ms_bound)

    sr_mean_bound = sr_ms_bound = sr_mean_ok = sr_ms_ok = None
    if dj_sum is not None:
        worst = np.max(np.atleast_2d(np.asarray(dj_sum, dtype=float)), axis=0)
        worst = np.maximum(worst, DELTA_J_FLOOR)
        sr_mean_bound = np.sqrt(np.pi / (2.0 * worst))
        sr_ms_bound = np.sqrt(2.0 / (np.pi * worst))
        sr_mean_ok = (nu > 0) & (nu < sr_mean_bound)
        sr_ms_ok = (nu > 0) & (nu < sr_ms_bound)

    return StabilityReport(mu_bound1=mu_bound1, mu_bound2=mu_bound2,
                           mu_ok1=mu_ok1, mu_ok2=mu_ok2,
                           pn_mean_bound=pn_mean_bound, pn_ms_bound=pn_ms_bound,
                           pn_mean_ok=pn_mean_ok, pn_ms_ok=pn_ms_ok,
                           sr_mean_bound=sr_mean_bound, sr_ms_bound=sr_ms_bound,
                           sr_mean_ok=sr_mean_ok, sr_ms_ok=sr_ms_ok)


def universality_report(j1, j2, j12) -> UniversalityReport:
    """Compare the stationary combined excess error to both components.

    With the stationary coefficient, each agent's combined excess error
    is j12 + dj1 dj2 / (dj1 + dj2); agents whose difference power is
    degenerate contribute their (identical) component value.  The margin
    is the network gap min(component sums) - combined sum.
    """
    j1 = np.asarray(j1, dtype=float)
    j2 = np.asarray(j2, dtype=float)
    j12 = np.asarray(j12, dtype=float)
    if np.any(np.abs(j12) > np.sqrt(j1 * j2) + 1e-9):
        raise ValueError("cross excess error violates the Cauchy-Schwarz bound")
    dj1 = j1 - j12
    dj2 = j2 - j12
    s = dj1 + dj2
    degenerate = s <= DELTA_J_FLOOR
    combined = np.where(degenerate, j12,
                        j12 + dj1 * dj2 / np.where(degenerate, 1.0, s))

    regimes = []
    for k in range(j1.shape[0]):
        if degenerate[k]:
            regimes.append("indistinguishable")
        elif dj1[k] >= 0 and dj2[k] >= 0:
            regimes.append("interpolating")
        elif dj1[k] < 0:
            regimes.append("extrapolating_beyond_1")
        else:
            regimes.append("extrapolating_beyond_2")

    net1 = float(np.sum(j1))
    net2 = float(np.sum(j2))
    net_combined = float(np.sum(combined))
    margin = min(net1, net2) - net_combined
    if bool(np.all(degenerate)):
        verdict = "components indistinguishable"
    elif net_combined <= min(net1, net2) + 1e-12:
        verdict = "universal"
    else:
        verdict = "not universal"

    return UniversalityReport(emse_combined=combined,
                              network_emse1=net1, network_emse2=net2,
                              network_combined=net_combined, margin=margin,
                              verdict=verdict, agent_regimes=tuple(regimes))
