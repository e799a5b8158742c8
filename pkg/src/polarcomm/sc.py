"""Successive-cancellation computation of conditional bit distributions.

Works over the chain V = U G_N where the U-block is i.i.d. per symbol with a
finite observation attached: each position carries a joint P(u, o), u binary,
o in a finite alphabet. The engine computes

    P(V^i = b | V^{1:i-1} = prefix, O^{1:N} = obs)

exactly, for every index in order, via the pairwise recursion induced by the
B_N F^{\\otimes n} factorization: v-indices are processed in natural order; the
odd member of each pair combines the two half-block subproblems with the
check-node (f) rule, the even member with the bit-node (g) rule, and decided
pairs push partial sums (v_odd xor v_even, v_even) down the tree. Every node
pair is renormalized after each combine, so no log domain is needed at the
target blocklengths.

Null conditioning (a prefix of probability zero given the observation, only
reachable through pinned bits inconsistent with the model) yields the uniform
pair and a diagnostic count instead of an error; samplers and chain
probabilities treat the fallback as part of the sampling law, which keeps
every induced distribution properly normalized.

Observation alphabets for multi-variable conditionings are flattened to one
finite alphabet with the first-listed variable fastest-varying (x fastest).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .probability import NORM_TOL, JointPmf

# per-index sampling tags
UNIFORM_HALF = 0
PRIOR_CONDITIONAL = 1
OBSERVATION_CONDITIONAL = 2
PINNED = 3


@dataclass
class AnomalyLog:
    """Mutable counter for null-conditioning (decode anomaly) events."""

    count: int = 0

    def add(self, n: int) -> None:
        self.count += int(n)


@dataclass(frozen=True)
class SymbolChannel:
    """Per-position joint P(u, o), identical across all N positions.

    table[u, o] is the joint probability of bit u and observation symbol o.
    A table with a single observation column is the prior-only chain.
    """

    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.float64)
        if table.ndim != 2 or table.shape[0] != 2 or table.shape[1] < 1:
            raise ValueError(f"channel table must have shape (2, M), got {table.shape}")
        if np.any(table < 0):
            raise ValueError("channel table entries must be nonnegative")
        if abs(float(table.sum()) - 1.0) > NORM_TOL:
            raise ValueError("channel table must sum to 1")
        object.__setattr__(self, "table", table)

    @property
    def obs_size(self) -> int:
        return self.table.shape[1]

    def prior(self) -> "SymbolChannel":
        """Marginalize the observation away: the prior chain P(u)."""
        return SymbolChannel(self.table.sum(axis=1, keepdims=True))

    @classmethod
    def from_joint(cls, j: JointPmf, bit_var: str, obs_vars: Sequence[str] = ()) -> "SymbolChannel":
        """Slice a per-symbol channel out of a joint PMF.

        The observation alphabet is the product of `obs_vars`, flattened with
        the first variable fastest-varying.
        """
        obs_vars = tuple(obs_vars)
        marg = j.marginal((bit_var,) + obs_vars).mass
        if obs_vars:
            # reverse obs axes so the first listed variable varies fastest
            marg = marg.transpose((0,) + tuple(range(marg.ndim - 1, 0, -1)))
            table = marg.reshape(2, -1)
        else:
            table = marg.reshape(2, 1)
        return cls(table)

    @staticmethod
    def flatten_obs(values: Sequence[np.ndarray], sizes: Sequence[int]) -> np.ndarray:
        """Combine per-variable observation blocks into flat symbol indices.

        values[k] ranges over [0, sizes[k]); variable 0 is fastest-varying.
        """
        if len(values) != len(sizes):
            raise ValueError("values and sizes must align")
        out = np.zeros_like(np.asarray(values[0], dtype=np.int64))
        stride = 1
        for vals, size in zip(values, sizes):
            out = out + stride * np.asarray(vals, dtype=np.int64)
            stride *= int(size)
        return out


@dataclass(frozen=True)
class SamplingPolicy:
    """Per-index sampling tags over [N], with values for the pinned indices.

    tags[i] is one of UNIFORM_HALF, PRIOR_CONDITIONAL,
    OBSERVATION_CONDITIONAL, PINNED. `pinned` carries the bit for every
    PINNED index (other positions ignored) and may be (N,) or batched (B, N).
    """

    tags: np.ndarray
    pinned: np.ndarray | None = None

    def __post_init__(self):
        tags = np.asarray(self.tags, dtype=np.uint8)
        if tags.ndim != 1:
            raise ValueError("tags must be a 1-D vector over [N]")
        if np.any(tags > PINNED):
            raise ValueError("unknown sampling tag")
        pinned = self.pinned
        if np.any(tags == PINNED):
            if pinned is None:
                raise ValueError("policy has PINNED indices but no pinned bits")
            pinned = np.asarray(pinned, dtype=np.uint8)
            if pinned.shape[-1] != tags.size:
                raise ValueError("pinned bits must cover [N] along the last axis")
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "pinned", pinned)

    @property
    def size(self) -> int:
        return self.tags.size

    @classmethod
    def observation_only(cls, n_len: int) -> "SamplingPolicy":
        return cls(np.full(n_len, OBSERVATION_CONDITIONAL, dtype=np.uint8))

    @classmethod
    def all_pinned(cls, bits: np.ndarray) -> "SamplingPolicy":
        bits = np.asarray(bits, dtype=np.uint8)
        return cls(np.full(bits.shape[-1], PINNED, dtype=np.uint8), bits)

    @classmethod
    def from_sets(
        cls,
        n_len: int,
        uniform: Sequence[int] = (),
        prior: Sequence[int] = (),
        observation: Sequence[int] = (),
        pinned_at: Sequence[int] = (),
        pinned_bits: np.ndarray | None = None,
    ) -> "SamplingPolicy":
        """Build a policy from disjoint index sets covering [N].

        pinned_bits holds the values for `pinned_at` in that order, shaped
        (len(pinned_at),) or (B, len(pinned_at)).
        """
        tags = np.full(n_len, 255, dtype=np.uint8)
        for idx, tag in ((uniform, UNIFORM_HALF), (prior, PRIOR_CONDITIONAL),
                         (observation, OBSERVATION_CONDITIONAL), (pinned_at, PINNED)):
            idx = np.asarray(idx, dtype=np.intp)
            if idx.size and np.any(tags[idx] != 255):
                raise ValueError("index sets overlap")
            tags[idx] = tag
        if np.any(tags == 255):
            raise ValueError("index sets must cover [N]")
        pinned = None
        if len(tuple(pinned_at)):
            if pinned_bits is None:
                raise ValueError("pinned_at requires pinned_bits")
            pinned_bits = np.atleast_2d(np.asarray(pinned_bits, dtype=np.uint8))
            pinned = np.zeros(pinned_bits.shape[:-1] + (n_len,), dtype=np.uint8)
            pinned[..., np.asarray(pinned_at, dtype=np.intp)] = pinned_bits
            if pinned.shape[0] == 1:
                pinned = pinned[0]
        return cls(tags, pinned)


class PairStack:
    """Batched SC tree holding one probability pair per node.

    Drive with pair_at(i) / push(i, bits) for i = 0..N-1 in order. Level 0 is
    the root; level n holds the fixed per-position joint pairs. Pairs that
    condition on a zero-probability event stay (0, 0) and are reported
    through the null mask of pair_at.
    """

    def __init__(self, leaf_pairs: np.ndarray):
        leaf_pairs = np.asarray(leaf_pairs, dtype=np.float64)
        if leaf_pairs.ndim != 3 or leaf_pairs.shape[2] != 2:
            raise ValueError("leaf pairs must have shape (B, N, 2)")
        batch, n_len, _ = leaf_pairs.shape
        if n_len <= 0 or n_len & (n_len - 1):
            raise ValueError(f"block length must be a power of two, got {n_len}")
        self.batch = batch
        self.n_len = n_len
        self.n = n_len.bit_length() - 1
        self.pairs = [np.empty((batch, 1 << lam, 2)) for lam in range(self.n)]
        self.pairs.append(leaf_pairs)
        self.low = [np.zeros((batch, 1 << lam), dtype=np.uint8) for lam in range(self.n)]
        self._next = 0

    def _normalize(self, lam: int) -> None:
        out = self.pairs[lam]
        total = out[..., 0] + out[..., 1]
        good = total > 0.0
        np.divide(out[..., 0], total, out=out[..., 0], where=good)
        np.divide(out[..., 1], total, out=out[..., 1], where=good)
        out[~good] = 0.0

    def _fop(self, lam: int) -> None:
        child = self.pairs[lam + 1]
        left, right = child[:, 0::2], child[:, 1::2]
        out = self.pairs[lam]
        out[..., 0] = left[..., 0] * right[..., 0] + left[..., 1] * right[..., 1]
        out[..., 1] = left[..., 1] * right[..., 0] + left[..., 0] * right[..., 1]
        self._normalize(lam)

    def _gop(self, lam: int) -> None:
        child = self.pairs[lam + 1]
        left, right = child[:, 0::2], child[:, 1::2]
        even_is_zero = self.low[lam] == 0
        l_same = np.where(even_is_zero, left[..., 0], left[..., 1])
        l_flip = np.where(even_is_zero, left[..., 1], left[..., 0])
        out = self.pairs[lam]
        out[..., 0] = l_same * right[..., 0]
        out[..., 1] = l_flip * right[..., 1]
        self._normalize(lam)

    def pair_at(self, phi: int) -> tuple[np.ndarray, np.ndarray]:
        """Root pair at index phi (uniform where null) and the null mask."""
        if phi != self._next:
            raise ValueError(f"indices must be visited in order; expected {self._next}")
        if self.n == 0:
            pair = self.pairs[0][:, 0, :].copy()
            total = pair.sum(axis=-1)
            null = total <= 0.0
            pair[~null] /= total[~null, None]
        else:
            if phi == 0:
                for lam in range(self.n - 1, -1, -1):
                    self._fop(lam)
            else:
                low_level = ((phi & -phi).bit_length()) - 1
                self._gop(low_level)
                for lam in range(low_level - 1, -1, -1):
                    self._fop(lam)
            pair = self.pairs[0][:, 0, :].copy()
            null = (pair[..., 0] + pair[..., 1]) <= 0.0
        pair[null] = 0.5
        return pair, null

    def push(self, phi: int, bits: np.ndarray) -> None:
        """Record the decided bit at index phi and propagate partial sums."""
        if phi != self._next:
            raise ValueError(f"indices must be pushed in order; expected {self._next}")
        self._next = phi + 1
        cur = np.asarray(bits, dtype=np.uint8).reshape(self.batch, 1)
        lam, j = 0, phi
        while (j & 1) and lam < self.n:
            nxt = np.empty((self.batch, 2 << lam), dtype=np.uint8)
            nxt[:, 0::2] = self.low[lam] ^ cur
            nxt[:, 1::2] = cur
            cur = nxt
            lam += 1
            j >>= 1
        if lam < self.n:
            self.low[lam][...] = cur


def _leaf_pairs(ch: SymbolChannel, obs: np.ndarray) -> np.ndarray:
    """(B, N, 2) joint pairs at the realized observations."""
    return ch.table.T[obs]


def _as_batched_obs(ch: SymbolChannel, obs, n_len: int, batch: int) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.intp)
    if obs.ndim == 1:
        obs = np.broadcast_to(obs, (batch, n_len))
    if obs.shape != (batch, n_len):
        raise ValueError(f"observations must have shape ({batch}, {n_len})")
    if np.any(obs < 0) or np.any(obs >= ch.obs_size):
        raise ValueError("observation symbol out of range")
    return obs


def sc_conditional(
    ch: SymbolChannel,
    obs: np.ndarray,
    prefix: Sequence[int],
    *,
    anomalies: AnomalyLog | None = None,
) -> np.ndarray:
    """Exact pair (P(V^i=0 | prefix, obs), P(V^i=1 | prefix, obs)).

    i = len(prefix) + 1; obs is the length-N observation block. Equals the
    marginalization of the blocklength joint prod_j P(u_j, o_j) 1(u = v G_N)
    over all completions of the prefix. On a zero-probability prefix the
    uniform pair is returned and `anomalies`, when given, is bumped.
    """
    obs = np.asarray(obs, dtype=np.intp)
    if obs.ndim != 1:
        raise ValueError("obs must be a length-N vector")
    n_len = obs.size
    if n_len <= 0 or n_len & (n_len - 1):
        raise ValueError(f"block length must be a power of two, got {n_len}")
    prefix = np.asarray(prefix, dtype=np.uint8).reshape(-1)
    if prefix.size >= n_len:
        raise ValueError("prefix must be shorter than the block")
    stack = PairStack(_leaf_pairs(ch, obs[None, :]))
    for phi in range(prefix.size):
        stack.pair_at(phi)
        stack.push(phi, prefix[phi : phi + 1])
    pair, null = stack.pair_at(prefix.size)
    if anomalies is not None:
        anomalies.add(null.sum())
    return pair[0]


def _policy_pass(
    ch: SymbolChannel,
    obs,
    policy: SamplingPolicy,
    decide,
    *,
    fd_mode: str = "sample",
    anomalies: AnomalyLog | None = None,
    want_chain: bool = False,
):
    """Shared driver for sampling and chain-probability evaluation.

    `decide(phi, tag, pair)` returns the (B,) bit vector for index phi; pair
    is None for PINNED/UNIFORM tags (PINNED values are the caller's job).
    Advances an observation-conditioned stack and a prior-chain stack in
    lockstep, but only those the policy actually consults.
    """
    if fd_mode not in ("sample", "argmax"):
        raise ValueError(f"fd_mode must be 'sample' or 'argmax', got {fd_mode!r}")
    n_len = policy.size
    if n_len & (n_len - 1):
        raise ValueError(f"block length must be a power of two, got {n_len}")
    batch = 1
    for arr in (np.asarray(obs) if obs is not None else None, policy.pinned):
        if arr is not None and arr.ndim == 2:
            batch = max(batch, arr.shape[0])
    tags = policy.tags
    needs_obs = bool(np.any(tags == OBSERVATION_CONDITIONAL))
    needs_prior = bool(np.any(tags == PRIOR_CONDITIONAL))
    obs_stack = prior_stack = None
    if needs_obs:
        obs_b = _as_batched_obs(ch, obs, n_len, batch)
        obs_stack = PairStack(_leaf_pairs(ch, obs_b))
    if needs_prior:
        prior_ch = ch.prior()
        prior_stack = PairStack(_leaf_pairs(prior_ch, np.zeros((batch, n_len), dtype=np.intp)))
    pinned = policy.pinned
    if pinned is not None and pinned.ndim == 1:
        pinned = np.broadcast_to(pinned, (batch, n_len))

    v_block = np.empty((batch, n_len), dtype=np.uint8)
    chain = np.ones(batch) if want_chain else None
    for phi in range(n_len):
        pair_obs = pair_prior = None
        if obs_stack is not None:
            pair_obs, null_obs = obs_stack.pair_at(phi)
        if prior_stack is not None:
            pair_prior, null_prior = prior_stack.pair_at(phi)
        tag = int(tags[phi])
        if tag == OBSERVATION_CONDITIONAL:
            pair = pair_obs
            if anomalies is not None:
                anomalies.add(null_obs.sum())
        elif tag == PRIOR_CONDITIONAL:
            pair = pair_prior
            if anomalies is not None:
                anomalies.add(null_prior.sum())
        else:
            pair = None
        bits = decide(phi, tag, pair)
        v_block[:, phi] = bits
        if chain is not None:
            if tag == UNIFORM_HALF:
                chain *= 0.5
            elif tag == PINNED:
                chain *= (bits == pinned[:, phi]).astype(np.float64)
            elif fd_mode == "argmax" and tag == PRIOR_CONDITIONAL:
                chain *= (bits == (pair[:, 1] > pair[:, 0])).astype(np.float64)
            else:
                chain *= np.take_along_axis(pair, bits[:, None].astype(np.intp), axis=1)[:, 0]
        if obs_stack is not None:
            obs_stack.push(phi, bits)
        if prior_stack is not None:
            prior_stack.push(phi, bits)
    return v_block, chain


def sample_sequential(
    ch: SymbolChannel,
    obs,
    policy: SamplingPolicy,
    rng: np.random.Generator,
    *,
    shared_rng: np.random.Generator | None = None,
    fd_mode: str = "sample",
    batch: int | None = None,
    anomalies: AnomalyLog | None = None,
) -> np.ndarray:
    """Draw v-blocks index by index under the per-index sampling rules.

    UNIFORM_HALF indices draw Ber(1/2) from `shared_rng` (falling back to
    `rng`); PRIOR_CONDITIONAL samples P(V^i | v^{1:i-1}) with no observation;
    OBSERVATION_CONDITIONAL samples the observation conditional; PINNED
    copies the given bit. Both streams are consumed as one (B, N) uniform
    block up front, so outputs are reproducible for a fixed seed regardless
    of the tag layout. Returns (B, N) blocks, squeezed to (N,) for unbatched
    inputs.

    fd_mode="argmax" replaces the PRIOR_CONDITIONAL draw with the
    higher-probability bit (a documented deviation from the sampling rules).
    """
    n_len = policy.size
    arrs = [a for a in (np.asarray(obs) if obs is not None else None, policy.pinned)
            if a is not None and a.ndim == 2]
    batched_input = bool(arrs) or batch is not None
    b = batch or (arrs[0].shape[0] if arrs else 1)
    for a in arrs:
        if a.shape[0] != b:
            raise ValueError("inconsistent batch sizes")
    private_u = rng.random((b, n_len))
    shared_u = (shared_rng or rng).random((b, n_len))
    pinned = policy.pinned
    if pinned is not None and pinned.ndim == 1:
        pinned = np.broadcast_to(pinned, (b, n_len))

    def decide(phi, tag, pair):
        if tag == PINNED:
            return pinned[:, phi]
        if tag == UNIFORM_HALF:
            return (shared_u[:, phi] < 0.5).astype(np.uint8)
        if tag == PRIOR_CONDITIONAL and fd_mode == "argmax":
            return (pair[:, 1] > pair[:, 0]).astype(np.uint8)
        return (private_u[:, phi] < pair[:, 1]).astype(np.uint8)

    obs_in = obs
    if obs_in is not None and np.asarray(obs_in).ndim == 1 and b > 1:
        obs_in = np.broadcast_to(np.asarray(obs_in, dtype=np.intp), (b, n_len))
    v_block, _ = _policy_pass(
        ch, obs_in, policy, decide, fd_mode=fd_mode, anomalies=anomalies
    )
    return v_block if batched_input else v_block[0]


def chain_probability(
    ch: SymbolChannel,
    obs,
    policy: SamplingPolicy,
    v_block: np.ndarray,
    *,
    fd_mode: str = "sample",
    anomalies: AnomalyLog | None = None,
):
    """Probability that the sequential sampler outputs exactly `v_block`.

    prod_i q_i(v^i | v^{1:i-1}, obs) with the policy's branch at each index;
    PINNED indices contribute 1 on a match and 0 otherwise. Accepts (N,) or
    (B, N) blocks and returns a scalar or (B,) vector accordingly.
    """
    v_block = np.asarray(v_block, dtype=np.uint8)
    batched = v_block.ndim == 2
    v2 = np.atleast_2d(v_block)
    b = v2.shape[0]
    obs_in = obs
    if obs_in is not None:
        obs_in = np.asarray(obs_in, dtype=np.intp)
        if obs_in.ndim == 1:
            obs_in = np.broadcast_to(obs_in, (b, policy.size))
    pinned = policy.pinned
    if pinned is not None and pinned.ndim == 1:
        pinned = np.broadcast_to(pinned, (b, policy.size))
    policy_b = SamplingPolicy(policy.tags, pinned)

    def decide(phi, tag, pair):
        return v2[:, phi]

    _, chain = _policy_pass(
        ch, obs_in, policy_b, decide, fd_mode=fd_mode,
        anomalies=anomalies, want_chain=True,
    )
    return chain if batched else float(chain[0])
