"""Online ABR baselines behind a single decision interface.

Levels are ascending bitrate indices (0 = lowest). All deciders are pure
functions of (state, config); the random policy keeps a private seeded RNG,
so use one instance per session.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UsageError
from .media import QoEParams, VideoManifest, quality
from .simulator import TIE_EPS, SessionState, Policy

POLICY_KINDS = ("buffer_based", "robust_mpc", "fixed", "random")


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "buffer_based"
    mpc_horizon: int = 5
    history_k: int = 8
    reservoir_s: float = 5.0
    cushion_s: float = 10.0
    fixed_level: int = 0
    seed: int = 0
    robust_discount: bool = True  # divide the prediction by 1 + max past relative error

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise DomainError(f"unknown policy kind {self.kind!r}")
        if self.mpc_horizon < 1:
            raise DomainError("mpc horizon must be at least 1")
        if self.history_k < 1:
            raise DomainError("history length must be at least 1")
        if self.cushion_s <= 0.0:
            raise DomainError("cushion must be positive")
        if self.reservoir_s < 0.0:
            raise DomainError("reservoir must be nonnegative")


def harmonic_mean(samples) -> float:
    """n / sum(1/x). Undefined for empty or non-positive samples."""
    samples = list(samples)
    if not samples:
        raise DomainError("harmonic mean of an empty sample set")
    if any(x <= 0.0 for x in samples):
        raise DomainError("harmonic mean requires positive samples")
    return len(samples) / sum(1.0 / x for x in samples)


def decide_buffer_based(state: SessionState, manifest: VideoManifest, cfg: PolicyConfig) -> int:
    """Map buffer occupancy onto the ladder.

    Below the reservoir pick the lowest level; above reservoir + cushion the
    highest; in between pick the largest level whose quality does not exceed
    the linear interpolation between the extremes across the cushion.
    """
    if state.terminal:
        raise UsageError("cannot decide for a finished session")
    if cfg.reservoir_s + cfg.cushion_s > state.buffer_cap_s:
        raise DomainError("reservoir + cushion exceeds the buffer cap")
    b = state.buffer_s
    top = manifest.n_levels - 1
    if b <= cfg.reservoir_s:
        return 0
    if b >= cfg.reservoir_s + cfg.cushion_s:
        return top
    q_lo = manifest.levels[0]
    q_hi = manifest.levels[-1]
    target = q_lo + (b - cfg.reservoir_s) * (q_hi - q_lo) / cfg.cushion_s
    level = 0
    for lvl in range(manifest.n_levels):
        if manifest.levels[lvl] <= target:
            level = lvl
    return level


def mpc_throughput_prediction(history_mbps, discount: bool = True) -> float:
    """Harmonic-mean throughput estimate with robustness discounting.

    The discount divides by 1 + max relative error of the retrospective
    harmonic-mean predictions over the history window (0 until at least two
    samples exist).
    """
    samples = list(history_mbps)
    hm = harmonic_mean(samples)
    if not discount or len(samples) < 2:
        return hm
    err = 0.0
    for m in range(1, len(samples)):
        pred = harmonic_mean(samples[:m])
        err = max(err, abs(pred - samples[m]) / samples[m])
    return hm / (1.0 + err)


def decide_robust_mpc(
    state: SessionState,
    manifest: VideoManifest,
    params: QoEParams,
    cfg: PolicyConfig,
) -> int:
    """Receding-horizon search under a constant throughput prediction.

    Enumerates every level sequence over the horizon, simulates it with the
    predicted throughput and the simulator's exact buffer/sleep rules, scores
    the horizon QoE, and returns the first level of the best sequence. Ties
    go to the lower bitrate.
    """
    if state.terminal:
        raise UsageError("cannot decide for a finished session")
    hist = [p for _, p in state.history]
    if not hist:
        return 0
    chat = mpc_throughput_prediction(hist[-cfg.history_k:], cfg.robust_discount)

    horizon = min(cfg.mpc_horizon, state.remaining)
    n = manifest.n_levels
    count = n**horizon
    rates = np.array(manifest.levels)
    # all level sequences in lexicographic order; row 0 = all-lowest, so
    # argmax's first-hit tie rule prefers the lower bitrate
    ids = np.arange(count)
    seqs = np.empty((count, horizon), dtype=np.int64)
    for j in range(horizon):
        seqs[:, j] = (ids // n ** (horizon - 1 - j)) % n

    alpha1, alpha2 = params.alpha1, params.alpha2
    cap = state.buffer_cap_s
    L = manifest.chunk_duration_s
    buf = np.full(count, state.buffer_s)
    score = np.zeros(count)
    prev_q = (
        None
        if state.last_level is None
        else np.full(count, quality(params, manifest.rate_of(state.last_level)))
    )
    for j in range(horizon):
        lv = seqs[:, j]
        sizes = np.array(manifest.chunk_sizes_asc(state.next_chunk + j))[lv]
        q = rates[lv]
        tau = sizes / chat
        rebuf = np.maximum(tau - buf, 0.0)
        buf = np.minimum(np.maximum(buf - tau, 0.0) + L, cap)
        score += q - alpha1 * rebuf
        if prev_q is not None:
            score -= alpha2 * np.abs(q - prev_q)
        prev_q = q
    # first sequence within the shared tie margin of the maximum: rows are in
    # lexicographic order, so this is the lowest-bitrate-first tie rule
    best = int(np.argmax(score > float(score.max()) - TIE_EPS))
    return int(seqs[best, 0])


def make_policy(
    cfg: PolicyConfig, manifest: VideoManifest, params: QoEParams
) -> tuple[str, Policy]:
    """Build a per-session decision callback and its identifier string."""
    if cfg.kind == "buffer_based":
        return "buffer_based", lambda state, obs: decide_buffer_based(state, manifest, cfg)
    if cfg.kind == "robust_mpc":
        return "robust_mpc", lambda state, obs: decide_robust_mpc(state, manifest, params, cfg)
    if cfg.kind == "fixed":
        if not 0 <= cfg.fixed_level < manifest.n_levels:
            raise DomainError(f"fixed level {cfg.fixed_level} out of range")
        return f"fixed:{cfg.fixed_level}", lambda state, obs: cfg.fixed_level
    if cfg.kind == "random":
        rng = np.random.default_rng(cfg.seed)
        return (
            f"random:{cfg.seed}",
            lambda state, obs: int(rng.integers(manifest.n_levels)),
        )
    raise DomainError(f"unknown policy kind {cfg.kind!r}")
