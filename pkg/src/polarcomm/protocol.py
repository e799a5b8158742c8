"""The t-round two-terminal protocol and the collocated-network protocol.

Each round, the transmitter samples its v-block index by index (common
randomness on F_r, the prior chain on F_d, its observation conditional on I),
sends the I' subvector in increasing index order, and both sides map v to
u = v G_N and append. The receiver pins the transmitted bits, draws F_r from
the same shared stream, F_d from the prior chain, and I \\ I' from its own
observation conditional. In the collocated network every non-broadcasting
terminal (including the sink) reconstructs with conditioning on the past
rounds only.

Randomness is organized as one stream per (role, round), derived from two
user seeds via SeedSequence spawn keys:

    shared stream, round r:     spawn key (0, r)   from shared_seed
    private stream of role k:   spawn key (1, k, r) from private_seed

PCG64 streams are platform-stable, and samplers consume whole (trials, N)
uniform blocks, so runs are reproducible bit for bit.

Function computation is per symbol: look up the unique value the model's
function table forces given (own observation, u^{1:t}); argument tuples of
zero probability are flagged as erasures, never raised.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .probability import AuxChainModel, entropy_bits, mutual_information, validate_markov
from .reliability import (
    EXHAUSTIVE_CAP,
    IndexPartition,
    PartitionPolicy,
    ReliabilityProfile,
    build_partition,
    profile_exact,
    profile_monte_carlo,
    with_fractions,
)
from .sc import AnomalyLog, SamplingPolicy, SymbolChannel, sample_sequential
from .transform import apply_transform


class ModelError(ValueError):
    """The model fails a precondition of the protocol (e.g. Markov check)."""


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic, platform-stable stream for a given role key."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key)))


@dataclass(frozen=True)
class RoundPlan:
    """Everything one round needs: direction, channels, partition, profiles."""

    round_index: int  # 1-based
    transmitter: str  # "A" / "B", or the broadcasting source "x<j>"
    bit_var: str
    tx_obs_vars: tuple
    rx_obs_vars: tuple
    tx_obs_sizes: tuple
    rx_obs_sizes: tuple
    tx_channel: SymbolChannel
    rx_channel: SymbolChannel
    partition: IndexPartition
    profiles: Mapping[str, ReliabilityProfile]
    target_rate: float  # closed-form I' density (no margin)

    @property
    def n_len(self) -> int:
        return self.partition.n_len

    @property
    def direction(self) -> str:
        if self.transmitter in ("A", "B"):
            return "A->B" if self.transmitter == "A" else "B->A"
        return f"{self.transmitter}->all"

    @property
    def measured_rate(self) -> float:
        return self.partition.i_prime.size / self.n_len


@dataclass
class TerminalState:
    """One terminal's view: observations, accumulated u-blocks, streams."""

    role: str
    observations: dict
    private_rng: np.random.Generator
    u_history: list = field(default_factory=list)

    def flat_obs(self, obs_vars: Sequence[str], sizes: Sequence[int]) -> np.ndarray | None:
        if not obs_vars:
            return None
        values = []
        for var in obs_vars:
            if var.startswith("u"):
                values.append(self.u_history[int(var[1:]) - 1])
            else:
                values.append(self.observations[var])
        return SymbolChannel.flatten_obs(values, sizes)


@dataclass(frozen=True)
class TranscriptRound:
    direction: str
    bit_count: int
    messages: np.ndarray  # (B, |I'|) transmitted bits, increasing index order


@dataclass(frozen=True)
class Transcript:
    n_len: int
    rounds: tuple

    @property
    def rates(self) -> tuple:
        return tuple(r.bit_count / self.n_len for r in self.rounds)

    @property
    def total_bits(self) -> int:
        return sum(r.bit_count for r in self.rounds)

    def to_json(self) -> str:
        payload = {
            "rounds": [
                {
                    "direction": r.direction,
                    "bits": r.bit_count,
                    "message_hex": [
                        np.packbits(row).tobytes().hex() for row in np.atleast_2d(r.messages)
                    ],
                }
                for r in self.rounds
            ],
            "rates": list(self.rates),
        }
        return json.dumps(payload, sort_keys=True)


@dataclass(frozen=True)
class ProtocolResult:
    """Reconstructions, agreement, transcript, function outputs, anomalies."""

    network: str
    u_blocks: Mapping[str, tuple]  # role -> per-round (B, N) u-blocks
    agreement: np.ndarray  # (t, B) transmitter-vs-reference equality per round
    transcript: Transcript
    outputs: Mapping[str, np.ndarray]
    erasures: Mapping[str, np.ndarray]
    anomalies: int

    @property
    def rates(self) -> tuple:
        return self.transcript.rates


def plan_protocol(
    model: AuxChainModel,
    n_len: int,
    policy: PartitionPolicy,
    *,
    rate_margin: float = 0.0,
    profile_method: str = "auto",
    profile_samples: int = 4096,
    profile_seed: int = 0,
    exhaustive_cap: int = EXHAUSTIVE_CAP,
    markov_tol: float = 1e-9,
) -> list:
    """Build one RoundPlan per round from the model's per-symbol joints.

    Profiles are exact when N fits under the exhaustive cap (or when forced),
    Monte Carlo otherwise. In target_rate mode the per-round fractions come
    from the model's closed-form entropies: |F_d| ~ 1 - H(U^i),
    |F_r| ~ H(U^i | tx obs), |I'| ~ the round's rate target plus
    `rate_margin` bits per symbol.
    """
    if n_len <= 0 or n_len & (n_len - 1):
        raise ValueError(f"N must be a power of two, got {n_len}")
    report = validate_markov(model, markov_tol)
    if not report.passed:
        raise ModelError(
            f"model Markov chains violate tolerance {markov_tol}: "
            f"max violation {report.max_violation:.3e}"
        )
    if profile_method not in ("auto", "exact", "monte_carlo"):
        raise ValueError(f"unknown profile_method {profile_method!r}")
    use_exact = profile_method == "exact" or (
        profile_method == "auto" and n_len <= exhaustive_cap
    )

    two_terminal = model.network == "two-terminal"
    plans = []
    for i in range(1, model.rounds + 1):
        bit_var = f"u{i}"
        past = tuple(f"u{j}" for j in range(1, i))
        tx_src = model.round_sources[i - 1]
        if two_terminal:
            expected = "x" if i % 2 else "y"
            if tx_src != expected:
                raise ModelError(
                    f"round {i} must be sourced by {expected!r} (alternating turns)"
                )
            rx_src = "y" if tx_src == "x" else "x"
            transmitter = "A" if tx_src == "x" else "B"
            rx_obs_vars = (rx_src,) + past
        else:
            j = (i - 1) % len(model.source_vars) + 1
            if tx_src != f"x{j}":
                raise ModelError(f"round {i} must be sourced by terminal {j}")
            transmitter = tx_src
            rx_obs_vars = past
        tx_obs_vars = (tx_src,) + past

        tx_channel = SymbolChannel.from_joint(model.joint, bit_var, tx_obs_vars)
        rx_channel = SymbolChannel.from_joint(model.joint, bit_var, rx_obs_vars)
        prior_channel = tx_channel.prior()
        if use_exact:
            prof = {
                "uncond": profile_exact(prior_channel, n_len, "none", cap=max(n_len, exhaustive_cap)),
                "tx": profile_exact(tx_channel, n_len, "tx", cap=max(n_len, exhaustive_cap)),
                "rx": profile_exact(rx_channel, n_len, "rx", cap=max(n_len, exhaustive_cap)),
            }
        else:
            prof = {
                "uncond": profile_monte_carlo(
                    prior_channel, n_len, profile_samples, profile_seed * 31 + 3 * i, "none"
                ),
                "tx": profile_monte_carlo(
                    tx_channel, n_len, profile_samples, profile_seed * 31 + 3 * i + 1, "tx"
                ),
                "rx": profile_monte_carlo(
                    rx_channel, n_len, profile_samples, profile_seed * 31 + 3 * i + 2, "rx"
                ),
            }

        if two_terminal:
            target = mutual_information(model.joint, (tx_src,), (bit_var,), (rx_src,) + past)
        else:
            target = mutual_information(model.joint, (tx_src,), (bit_var,), past)
        round_policy = policy
        if policy.mode == "target_rate" and policy.fractions is None:
            f_d = 1.0 - entropy_bits(model.joint, (bit_var,))
            f_r = entropy_bits(model.joint, (bit_var,) + tx_obs_vars) - entropy_bits(
                model.joint, tx_obs_vars
            )
            round_policy = with_fractions(policy, (f_d, f_r, target + rate_margin))
        partition = build_partition(prof["uncond"], prof["tx"], prof["rx"], round_policy)
        plans.append(
            RoundPlan(
                round_index=i,
                transmitter=transmitter,
                bit_var=bit_var,
                tx_obs_vars=tx_obs_vars,
                rx_obs_vars=rx_obs_vars,
                tx_obs_sizes=tuple(model.joint.size_of(v) for v in tx_obs_vars),
                rx_obs_sizes=tuple(model.joint.size_of(v) for v in rx_obs_vars),
                tx_channel=tx_channel,
                rx_channel=rx_channel,
                partition=partition,
                profiles=prof,
                target_rate=target,
            )
        )
    return plans


def run_round(
    plan: RoundPlan,
    tx_state: TerminalState,
    rx_states: Sequence[TerminalState],
    shared_rngs: Sequence[np.random.Generator],
    *,
    fd_policy: str = "sample",
    anomalies: AnomalyLog | None = None,
) -> tuple:
    """Execute one round; returns (message bits, per-receiver u-blocks).

    shared_rngs supplies one identically-seeded generator per party
    (transmitter first), so the F_r draws coincide. Appends the new u-block
    to every state's history.
    """
    part = plan.partition
    tx_obs = tx_state.flat_obs(plan.tx_obs_vars, plan.tx_obs_sizes)
    if tx_obs is None:
        tx_obs = np.zeros((1, part.n_len), dtype=np.intp)
    tx_policy = SamplingPolicy(part.tags_for_transmitter())
    v_tx = sample_sequential(
        plan.tx_channel,
        tx_obs,
        tx_policy,
        tx_state.private_rng,
        shared_rng=shared_rngs[0],
        fd_mode=fd_policy,
        anomalies=anomalies,
    )
    v_tx2 = np.atleast_2d(v_tx)
    message = v_tx2[:, part.i_prime]
    u_tx = apply_transform(v_tx)
    tx_state.u_history.append(np.atleast_2d(u_tx))

    rx_tags = part.tags_for_receiver()
    u_rx_all = []
    for k, rx_state in enumerate(rx_states):
        pinned = np.zeros_like(v_tx2)
        pinned[:, part.i_prime] = message
        rx_policy = SamplingPolicy(rx_tags, pinned if v_tx.ndim == 2 else pinned[0])
        rx_obs = rx_state.flat_obs(plan.rx_obs_vars, plan.rx_obs_sizes)
        if rx_obs is None:
            # no side observation (collocated round 1): the "conditional" is the prior
            rx_obs = np.zeros_like(v_tx2, dtype=np.intp)
        v_rx = sample_sequential(
            plan.rx_channel,
            rx_obs,
            rx_policy,
            rx_state.private_rng,
            shared_rng=shared_rngs[1 + k],
            fd_mode=fd_policy,
            batch=v_tx2.shape[0] if v_tx.ndim == 2 else None,
            anomalies=anomalies,
        )
        u_rx = apply_transform(v_rx)
        rx_state.u_history.append(np.atleast_2d(u_rx))
        u_rx_all.append(np.atleast_2d(u_rx))
    return message, np.atleast_2d(u_tx), u_rx_all


def compute_function(
    obs_block: np.ndarray | None,
    u_blocks: Sequence[np.ndarray],
    model: AuxChainModel,
    which: str,
) -> tuple:
    """Per-symbol deterministic evaluation of f_A / f_B / f.

    Looks up the unique value with conditional probability one given the
    argument tuple; zero-probability tuples yield an erasure flag (output 0).
    """
    table = model.decode_table(which)
    args = model.function_args(which)
    blocks = []
    for var in args:
        if var.startswith("u"):
            blocks.append(np.asarray(u_blocks[int(var[1:]) - 1], dtype=np.intp))
        else:
            if obs_block is None:
                raise ValueError(f"function {which} needs the {var!r} observation block")
            blocks.append(np.asarray(obs_block, dtype=np.intp))
    values = table[tuple(blocks)]
    erasure = values < 0
    return np.where(erasure, 0, values), erasure


def sample_sources(
    model: AuxChainModel, n_len: int, trials: int, seed: int
) -> dict:
    """Draw i.i.d. per-symbol source blocks, one (trials, N) array per source."""
    src = model.source_vars
    marg = model.joint.marginal(src).mass
    rng = derive_rng(seed, 2)
    cum = np.cumsum(marg.reshape(-1))
    cells = np.searchsorted(cum, rng.random((trials, n_len)) * cum[-1])
    out = {}
    for k in range(len(src) - 1, -1, -1):
        size = model.joint.size_of(src[k])
        out[src[k]] = (cells % size).astype(np.uint8)
        cells //= size
    return out


def _check_blocks(n_len: int, *blocks: np.ndarray) -> int:
    batch = None
    for b in blocks:
        b2 = np.atleast_2d(b)
        if b2.shape[1] != n_len:
            raise ValueError(f"observation blocks must have length {n_len}")
        batch = b2.shape[0] if batch is None else batch
        if b2.shape[0] != batch:
            raise ValueError("observation blocks disagree on the trial count")
    return batch


def run_two_terminal(
    model: AuxChainModel,
    x_block: np.ndarray,
    y_block: np.ndarray,
    plans: Sequence[RoundPlan],
    *,
    shared_seed: int = 0,
    private_seed: int = 1,
    fd_policy: str = "sample",
) -> ProtocolResult:
    """Run all rounds on the given source blocks ((N,) or (trials, N)).

    Terminal A computes f_A from (x, u-history of A), terminal B computes
    f_B from (y, u-history of B); per-round rates are |I'| / N.
    """
    if model.network != "two-terminal":
        raise ValueError("model is not a two-terminal model")
    batched = np.asarray(x_block).ndim == 2
    _check_blocks(plans[0].n_len if plans else np.atleast_2d(x_block).shape[1],
                  x_block, y_block)
    x2, y2 = np.atleast_2d(x_block), np.atleast_2d(y_block)
    anomalies = AnomalyLog()
    state_a = TerminalState("A", {"x": x2}, derive_rng(private_seed, 1, 0))
    state_b = TerminalState("B", {"y": y2}, derive_rng(private_seed, 1, 1))

    rounds = []
    agreement = []
    for plan in plans:
        tx, rx = (state_a, state_b) if plan.transmitter == "A" else (state_b, state_a)
        shared = [derive_rng(shared_seed, 0, plan.round_index) for _ in range(2)]
        message, u_tx, u_rx = run_round(
            plan, tx, [rx], shared, fd_policy=fd_policy, anomalies=anomalies
        )
        rounds.append(TranscriptRound(plan.direction, plan.partition.i_prime.size, message))
        agreement.append((u_tx == u_rx[0]).all(axis=1))

    z_a, er_a = compute_function(x2, state_a.u_history, model, "f_A")
    z_b, er_b = compute_function(y2, state_b.u_history, model, "f_B")
    n_len = x2.shape[1]

    def out(arr):
        return arr if batched else arr[0]

    return ProtocolResult(
        network="two-terminal",
        u_blocks={
            "A": tuple(out(u) for u in state_a.u_history),
            "B": tuple(out(u) for u in state_b.u_history),
        },
        agreement=np.array(agreement),
        transcript=Transcript(n_len, tuple(rounds)),
        outputs={"f_A": out(z_a), "f_B": out(z_b)},
        erasures={"f_A": out(er_a), "f_B": out(er_b)},
        anomalies=anomalies.count,
    )


def run_collocated(
    model: AuxChainModel,
    observations: Mapping[str, np.ndarray],
    plans: Sequence[RoundPlan],
    *,
    shared_seed: int = 0,
    private_seed: int = 1,
    fd_policy: str = "sample",
) -> ProtocolResult:
    """Round-robin broadcasts; every other terminal and the sink reconstruct.

    Receivers condition on the past u-blocks only; after the final round the
    sink computes f from its own reconstructions alone.
    """
    if model.network != "collocated":
        raise ValueError("model is not a collocated model")
    sources = model.source_vars
    sample_any = observations[sources[0]]
    batched = np.asarray(sample_any).ndim == 2
    _check_blocks(np.atleast_2d(sample_any).shape[1], *[observations[s] for s in sources])
    anomalies = AnomalyLog()
    states = {
        s: TerminalState(s, {s: np.atleast_2d(observations[s])}, derive_rng(private_seed, 1, k))
        for k, s in enumerate(sources)
    }
    states["sink"] = TerminalState("sink", {}, derive_rng(private_seed, 1, len(sources)))

    order = [s for s in sources] + ["sink"]
    rounds = []
    agreement = []
    for plan in plans:
        tx = states[plan.transmitter]
        receivers = [states[r] for r in order if r != plan.transmitter]
        shared = [derive_rng(shared_seed, 0, plan.round_index) for _ in range(1 + len(receivers))]
        message, u_tx, u_rx = run_round(
            plan, tx, receivers, shared, fd_policy=fd_policy, anomalies=anomalies
        )
        rounds.append(TranscriptRound(plan.direction, plan.partition.i_prime.size, message))
        sink_pos = [r.role for r in receivers].index("sink")
        agreement.append((u_tx == u_rx[sink_pos]).all(axis=1))

    z, er = compute_function(None, states["sink"].u_history, model, "f")
    n_len = np.atleast_2d(sample_any).shape[1]

    def out(arr):
        return arr if batched else arr[0]

    return ProtocolResult(
        network="collocated",
        u_blocks={role: tuple(out(u) for u in st.u_history) for role, st in states.items()},
        agreement=np.array(agreement),
        transcript=Transcript(n_len, tuple(rounds)),
        outputs={"f": out(z)},
        erasures={"f": out(er)},
        anomalies=anomalies.count,
    )
