"""Exact small-blocklength enumeration utilities.

Builds blocklength-N joints P(v^{1:N}, o^{1:N}) = prod_j P(u_j, o_j) with
u = v G_N by direct product and a transform permutation, plus the exact
per-index chain factors the verification oracle needs. Everything here is
deliberately independent of the successive-cancellation engine: these are the
brute-force reference paths.

Block integers encode position 0 as the most significant digit, matching the
prefix order of the SC index walk.
"""
from __future__ import annotations

import numpy as np

from .sc import OBSERVATION_CONDITIONAL, PINNED, PRIOR_CONDITIONAL, UNIFORM_HALF, SymbolChannel
from .transform import apply_transform

# verification-side pseudo-tag: index contributes no factor (pinned/consistent)
EXCLUDED = PINNED

MAX_ENUM = 1 << 24


def ints_to_digits(ints: np.ndarray, n_len: int, base: int) -> np.ndarray:
    """Mixed-radix digits, position 0 most significant; shape (..., N)."""
    ints = np.asarray(ints, dtype=np.int64)
    out = np.empty(ints.shape + (n_len,), dtype=np.int64)
    for k in range(n_len - 1, -1, -1):
        out[..., k] = ints % base
        ints = ints // base
    return out


def digits_to_ints(digits: np.ndarray, base: int) -> np.ndarray:
    digits = np.asarray(digits, dtype=np.int64)
    out = np.zeros(digits.shape[:-1], dtype=np.int64)
    for k in range(digits.shape[-1]):
        out = out * base + digits[..., k]
    return out


def transform_permutation(n_len: int) -> np.ndarray:
    """p[w] = integer of transform(bits(w)); involutive since G_N is."""
    bits = ints_to_digits(np.arange(1 << n_len), n_len, 2)
    return digits_to_ints(apply_transform(bits.astype(np.uint8)), 2)


def block_joint_chunks(ch: SymbolChannel, n_len: int, chunk: int = 4096):
    """Yield (obs_ints, Jv) chunks with Jv[c, w] = P(v-block w, obs block c).

    Enumerates all M^N observation blocks. The v-axis is indexed with v^1 as
    the most significant bit.
    """
    m = ch.obs_size
    total = m**n_len
    if total * (1 << n_len) > MAX_ENUM:
        raise ValueError(f"enumeration too large: {total} obs blocks at N={n_len}")
    perm = transform_permutation(n_len)
    for start in range(0, total, chunk):
        obs_ints = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = ints_to_digits(obs_ints, n_len, m)
        joint_u = np.ones((obs_ints.size, 1))
        for k in range(n_len):
            factor = ch.table.T[digits[:, k]]  # (C, 2)
            joint_u = (joint_u[:, :, None] * factor[:, None, :]).reshape(obs_ints.size, -1)
        # reindex from u-blocks to v-blocks; the permutation is an involution
        yield obs_ints, joint_u[:, perm]


def block_joint_full(ch: SymbolChannel, n_len: int) -> np.ndarray:
    """Dense (M^N, 2^N) table P(v-block, obs block)."""
    m = ch.obs_size
    out = np.empty((m**n_len, 1 << n_len))
    for obs_ints, joint_v in block_joint_chunks(ch, n_len):
        out[obs_ints] = joint_v
    return out


def _ratio_or_uniform(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """num/den with the sampler's uniform fallback on null conditioning."""
    out = np.full(np.broadcast_shapes(num.shape, den.shape), 0.5)
    good = den > 0
    np.divide(num, den, out=out, where=good)
    return out


def sampled_chain_table(ch: SymbolChannel, tags: np.ndarray, n_len: int,
                        chunk: int = 2048) -> np.ndarray:
    """Exact per-block product of the sampling-rule factors.

    Returns C[o, w] = prod_i q_i(w^i | w^{1:i-1}, o) over indices whose tag is
    UNIFORM_HALF (1/2), PRIOR_CONDITIONAL (prior-chain conditional) or
    OBSERVATION_CONDITIONAL (observation conditional); EXCLUDED indices
    contribute no factor. Conditionals marginalize the exact block joint, so
    on sampled-only tag sets each row of C sums to 1 exactly up to float
    rounding, and on full observation tag sets C equals P(w | o) identically.
    """
    tags = np.asarray(tags)
    if tags.size != n_len:
        raise ValueError("tags must cover [N]")
    m = ch.obs_size
    uniform_factor = 0.5 ** int(np.count_nonzero(tags == UNIFORM_HALF))

    prior_ratio = np.ones(1 << n_len)
    if np.any(tags == PRIOR_CONDITIONAL):
        prior_joint = block_joint_full(ch.prior(), n_len)[0]  # (2^N,)
        s_cur = prior_joint
        for i in range(n_len, 0, -1):
            pairs = s_cur.reshape(1 << (i - 1), 2)
            s_prev = pairs.sum(-1)
            if tags[i - 1] == PRIOR_CONDITIONAL:
                ratio = _ratio_or_uniform(pairs, s_prev[:, None])
                prior_ratio *= np.repeat(ratio.reshape(-1), 1 << (n_len - i))
            s_cur = s_prev

    out = np.empty((m**n_len, 1 << n_len))
    for obs_ints, joint_v in block_joint_chunks(ch, n_len, chunk):
        acc = np.full(joint_v.shape, uniform_factor)
        acc *= prior_ratio
        s_cur = joint_v
        for i in range(n_len, 0, -1):
            pairs = s_cur.reshape(-1, 1 << (i - 1), 2)
            s_prev = pairs.sum(-1)
            if tags[i - 1] == OBSERVATION_CONDITIONAL:
                ratio = _ratio_or_uniform(pairs, s_prev[..., None])
                acc *= np.repeat(ratio.reshape(len(obs_ints), -1), 1 << (n_len - i), axis=1)
            s_cur = s_prev
        out[obs_ints] = acc
    return out


def split_block_joint(table: np.ndarray, sizes: tuple, n_len: int,
                      chunk: int = 65536) -> np.ndarray:
    """Blocklength product measure split into one block-int axis per variable.

    table is the per-symbol joint over the listed variables (axes in order),
    sizes their alphabet sizes. Returns an array of shape
    (sizes[0]^N, sizes[1]^N, ...) with symbol 0 the most significant digit of
    every axis.
    """
    sizes = tuple(int(s) for s in sizes)
    k_total = int(np.prod(sizes))
    total = k_total**n_len
    if total > MAX_ENUM:
        raise ValueError(f"enumeration too large: {total} blocks")
    flat = np.asarray(table, dtype=np.float64).reshape(-1)
    out = np.zeros(tuple(s**n_len for s in sizes))
    out_flat = out.reshape(-1)
    radices = np.array(tuple(s**n_len for s in sizes), dtype=np.int64)
    for start in range(0, total, chunk):
        ints = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = ints_to_digits(ints, n_len, k_total)
        prob = flat[digits].prod(axis=-1)
        idx = np.zeros(ints.size, dtype=np.int64)
        rem = digits
        for v in range(len(sizes) - 1, -1, -1):
            var_digits = rem % sizes[v]
            rem = rem // sizes[v]
            axis_int = digits_to_ints(var_digits, sizes[v])
            stride = int(np.prod(radices[v + 1:])) if v + 1 < len(sizes) else 1
            idx += axis_int * stride
        out_flat[idx] = prob
    return out
