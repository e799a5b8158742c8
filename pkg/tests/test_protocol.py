"""Protocol tests: planning, round execution, function computation."""
from pathlib import Path

import numpy as np
import pytest

from polarcomm.models import AndModelParams, build_and_chain, build_collocated_chain
from polarcomm.probability import AuxChainModel, JointPmf
from polarcomm.protocol import (
    ModelError,
    compute_function,
    plan_protocol,
    run_collocated,
    run_two_terminal,
    sample_sources,
)
from polarcomm.reliability import PartitionPolicy

DATA = Path(__file__).parent / "data"

ALL_TRANSMIT = PartitionPolicy(mode="target_rate", fractions=(0.0, 0.0, 1.0))


def test_plan_alternation_and_channels():
    m = build_and_chain(AndModelParams(0.5, 0.5, 2))
    plans = plan_protocol(m, 4, ALL_TRANSMIT)
    assert [p.transmitter for p in plans] == ["A", "B"]
    assert plans[0].tx_obs_vars == ("x",)
    assert plans[1].tx_obs_vars == ("y", "u1")
    assert plans[1].rx_obs_vars == ("x", "u1")
    assert abs(plans[0].target_rate - 1.0) < 1e-12
    assert abs(plans[1].target_rate - 0.5) < 1e-12


def test_plan_uniform_independent_aux_gives_empty_info_set():
    """U1 uniform and independent of the sources: round 1 sends nothing."""
    mass = np.full((2, 2, 2), 1 / 8)  # x, y, u1 all independent uniform
    model = AuxChainModel(
        joint=JointPmf((("x", 2), ("y", 2), ("u1", 2)), mass),
        rounds=1,
        round_sources=("x",),
        markov_specs=((("u1",), ("x",), ("y",)),),
        functions={"f_A": np.zeros((2, 2), dtype=int),
                   "f_B": np.zeros((2, 2), dtype=int)},
    )
    plans = plan_protocol(model, 4, PartitionPolicy(mode="threshold", delta=0.1))
    part = plans[0].partition
    assert part.f_d.size == 0          # z_uncond = 1 everywhere
    assert part.f_r.size == 4          # z_tx = 1: the F_r condition holds
    assert part.info.size == 0
    assert part.i_prime.size == 0      # zero message bits


def test_plan_rejects_markov_violation():
    mass = np.zeros((2, 2, 2))
    for x in (0, 1):
        for y in (0, 1):
            for u in (0, 1):
                mass[x, y, u] = 0.25 * (0.9 if u == y else 0.1)
    model = AuxChainModel(
        joint=JointPmf((("x", 2), ("y", 2), ("u1", 2)), mass),
        rounds=1, round_sources=("x",),
        markov_specs=((("u1",), ("x",), ("y",)),),
        functions={"f_A": np.zeros((2, 2), dtype=int),
                   "f_B": np.zeros((2, 2), dtype=int)},
    )
    with pytest.raises(ModelError):
        plan_protocol(model, 4, ALL_TRANSMIT)


def test_collocated_plan_broadcast_order():
    c = build_collocated_chain(2, [0.5, 0.5])
    plans = plan_protocol(c, 4, ALL_TRANSMIT)
    assert [p.transmitter for p in plans] == ["x1", "x2"]
    assert plans[1].rx_obs_vars == ("u1",)
    assert abs(plans[0].target_rate - 1.0) < 1e-12
    assert abs(plans[1].target_rate - 0.5) < 1e-12


def test_all_transmit_runs_lossless():
    """I' = [N] pins everything: both terminals agree and compute x AND y."""
    m = build_and_chain(AndModelParams(0.5, 0.5, 2))
    plans = plan_protocol(m, 8, ALL_TRANSMIT)
    src = sample_sources(m, 8, 32, seed=5)
    res = run_two_terminal(m, src["x"], src["y"], plans, shared_seed=1, private_seed=2)
    assert res.agreement.all()
    truth = src["x"] & src["y"]
    assert np.array_equal(res.outputs["f_A"], truth)
    assert np.array_equal(res.outputs["f_B"], truth)
    assert not res.erasures["f_A"].any()
    assert res.anomalies == 0
    assert res.rates == (1.0, 1.0)


def test_fr_only_plan_agrees_through_shared_stream():
    """A uniform-independent auxiliary handled entirely by common randomness."""
    mass = np.full((2, 2, 2), 1 / 8)
    model = AuxChainModel(
        joint=JointPmf((("x", 2), ("y", 2), ("u1", 2)), mass),
        rounds=1, round_sources=("x",),
        markov_specs=((("u1",), ("x",), ("y",)),),
        functions={"f_A": np.zeros((2, 2), dtype=int),
                   "f_B": np.zeros((2, 2), dtype=int)},
    )
    plans = plan_protocol(model, 8, PartitionPolicy(mode="threshold", delta=0.1))
    assert plans[0].partition.f_r.size == 8
    src = sample_sources(model, 8, 16, seed=3)
    res = run_two_terminal(model, src["x"], src["y"], plans, shared_seed=9, private_seed=10)
    assert res.agreement.all()
    assert res.transcript.total_bits == 0


def test_golden_transcript_reproduced():
    m = build_and_chain(AndModelParams(0.3, 0.6, 2))
    plans = plan_protocol(m, 4, PartitionPolicy(mode="threshold", delta=0.2))
    x = np.array([1, 0, 1, 1], dtype=np.uint8)
    y = np.array([0, 1, 1, 0], dtype=np.uint8)
    res = run_two_terminal(m, x, y, plans, shared_seed=2024, private_seed=7)
    golden = (DATA / "golden_transcript.json").read_text().strip()
    assert res.transcript.to_json() == golden


def test_message_bits_count_and_framing():
    m = build_and_chain(AndModelParams(0.3, 0.6, 2))
    plans = plan_protocol(m, 8, PartitionPolicy(mode="threshold", delta=0.2))
    src = sample_sources(m, 8, 4, seed=8)
    res = run_two_terminal(m, src["x"], src["y"], plans, shared_seed=0, private_seed=1)
    for plan, tr_round in zip(plans, res.transcript.rounds):
        assert tr_round.bit_count == plan.partition.i_prime.size
        assert tr_round.messages.shape == (4, plan.partition.i_prime.size)
    assert res.transcript.total_bits == sum(
        p.partition.i_prime.size for p in plans
    )


def test_zero_round_model():
    """t = 0: f_A depends only on X; empty transcript, direct evaluation."""
    mass = np.outer([0.4, 0.6], [0.7, 0.3])
    model = AuxChainModel(
        joint=JointPmf((("x", 2), ("y", 2)), mass),
        rounds=0, round_sources=(), markov_specs=(),
        functions={"f_A": np.array([[0, 0], [1, 1]]),
                   "f_B": np.array([[0, 1], [0, 1]])},
    )
    x = np.array([1, 0, 1, 0], dtype=np.uint8)
    y = np.array([0, 0, 1, 1], dtype=np.uint8)
    res = run_two_terminal(model, x, y, [], shared_seed=0, private_seed=0)
    assert np.array_equal(res.outputs["f_A"], x)
    assert np.array_equal(res.outputs["f_B"], y)
    assert res.transcript.total_bits == 0


def test_exchanging_pinned_roles_leaves_tx_block_unchanged():
    """Within a round, shrinking I' only affects the receiver's block."""
    from polarcomm.protocol import TerminalState, derive_rng, run_round

    m = build_and_chain(AndModelParams(0.3, 0.6, 2))
    full = plan_protocol(m, 8, ALL_TRANSMIT)
    partial = plan_protocol(
        m, 8, PartitionPolicy(mode="target_rate", fractions=(0.0, 0.0, 0.5))
    )
    src = sample_sources(m, 8, 8, seed=11)
    u_tx_blocks = []
    for plans in (full, partial):
        tx = TerminalState("A", {"x": src["x"]}, derive_rng(4, 1, 0))
        rx = TerminalState("B", {"y": src["y"]}, derive_rng(4, 1, 1))
        shared = [derive_rng(3, 0, 1) for _ in range(2)]
        _, u_tx, _ = run_round(plans[0], tx, [rx], shared)
        u_tx_blocks.append(u_tx)
    assert np.array_equal(u_tx_blocks[0], u_tx_blocks[1])


def test_compute_function_examples_and_erasures():
    m = build_and_chain(AndModelParams(0.5, 0.5, 2))
    x = np.array([[1, 0, 0]], dtype=np.uint8)
    u1 = np.array([[1, 0, 1]], dtype=np.uint8)  # third symbol inconsistent (u1 != x)
    u2 = np.array([[1, 0, 0]], dtype=np.uint8)
    z, erased = compute_function(x, [u1, u2], m, "f_A")
    assert z[0, 0] == 1 and not erased[0, 0]
    assert z[0, 1] == 0 and not erased[0, 1]
    assert erased[0, 2]


def test_compute_function_is_per_symbol():
    """Permuting symbol positions permutes outputs (no cross-symbol coupling)."""
    m = build_and_chain(AndModelParams(0.5, 0.5, 2))
    rng = np.random.default_rng(12)
    x = rng.integers(0, 2, (1, 8)).astype(np.uint8)
    u1, u2 = x.copy(), (x & rng.integers(0, 2, (1, 8))).astype(np.uint8)
    z, er = compute_function(x, [u1, u2], m, "f_A")
    perm = rng.permutation(8)
    z_p, er_p = compute_function(x[:, perm], [u1[:, perm], u2[:, perm]], m, "f_A")
    assert np.array_equal(z[:, perm], z_p)
    assert np.array_equal(er[:, perm], er_p)


def test_collocated_all_transmit_sink_computes_and():
    c = build_collocated_chain(2, [0.5, 0.5])
    plans = plan_protocol(c, 8, ALL_TRANSMIT)
    src = sample_sources(c, 8, 16, seed=13)
    res = run_collocated(c, src, plans, shared_seed=5, private_seed=6)
    truth = src["x1"] & src["x2"]
    assert np.array_equal(res.outputs["f"], truth)
    assert res.agreement.all()


def test_collocated_all_terminals_reconstruct_identically():
    """Full I' and shared F_r: every terminal's u-blocks coincide, all sources."""
    c = build_collocated_chain(2, [0.3, 0.7])
    plans = plan_protocol(c, 4, ALL_TRANSMIT)
    # exhaustive over all 2^(2N) source blocks as one batch
    grids = np.array(np.meshgrid(np.arange(16), np.arange(16))).reshape(2, -1).T
    x1 = ((grids[:, 0][:, None] >> np.arange(3, -1, -1)) & 1).astype(np.uint8)
    x2 = ((grids[:, 1][:, None] >> np.arange(3, -1, -1)) & 1).astype(np.uint8)
    res = run_collocated(c, {"x1": x1, "x2": x2}, plans, shared_seed=7, private_seed=8)
    for role in ("x2", "sink"):
        for a, b in zip(res.u_blocks["x1"], res.u_blocks[role]):
            assert np.array_equal(a, b)


def test_collocated_single_source_degenerates_to_source_coding():
    """Hand-built m=1 network: sink copies the broadcaster whenever I = I'."""
    mass = np.zeros((2, 2))
    mass[0, 0], mass[1, 1] = 0.6, 0.4  # u1 = x1
    model = AuxChainModel(
        joint=JointPmf((("x1", 2), ("u1", 2)), mass),
        rounds=1, round_sources=("x1",),
        markov_specs=(),
        functions={"f": np.array([0, 1])},
        network="collocated",
    )
    plans = plan_protocol(model, 4, ALL_TRANSMIT)
    vals = ((np.arange(16)[:, None] >> np.arange(3, -1, -1)) & 1).astype(np.uint8)
    res = run_collocated(model, {"x1": vals}, plans, shared_seed=1, private_seed=2)
    assert res.agreement.all()
    assert np.array_equal(res.u_blocks["sink"][0], res.u_blocks["x1"][0])
    assert np.array_equal(res.outputs["f"], vals)


def test_batched_and_unbatched_agree():
    m = build_and_chain(AndModelParams(0.5, 0.5, 2))
    plans = plan_protocol(m, 4, ALL_TRANSMIT)
    x = np.array([1, 0, 1, 1], dtype=np.uint8)
    y = np.array([1, 1, 0, 1], dtype=np.uint8)
    single = run_two_terminal(m, x, y, plans, shared_seed=4, private_seed=5)
    assert single.outputs["f_A"].shape == (4,)
    assert np.array_equal(single.outputs["f_A"], x & y)
