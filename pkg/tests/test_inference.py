import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from learnedfg.channels import snr_from_db, tap_profile, transmit_gaussian
from learnedfg.errors import DomainError, EnumerationTooLarge, InferenceError
from learnedfg.inference import brute_force_map, brute_force_ml, sp_map_decode, viterbi_decode, viterbi_streaming
from learnedfg.nodes import ChannelModel, CountingNode, ScaledNode, TabularNode, TransitionTable, exact_node
from learnedfg.rng import rng_stream
from learnedfg.states import BPSK, OOK, StateSpace

from oracles import random_tabular_instance


def hand_instance():
    space = StateSpace(OOK, 1)
    table = np.array([[0.9, 0.2], [0.1, 0.8]])  # row = observation, column = state
    return TabularNode(space, table), np.array([0, 1, 1])


def test_hand_instance_against_enumeration():
    node, ys = hand_instance()
    res = sp_map_decode(node, ys)
    assert np.allclose(res.posteriors, brute_force_map(node, ys), atol=1e-12)
    # with l=1 and uniform transitions each symbol decouples: P(s_i | y_i) ∝ table[y_i, s_i]
    expected = np.array([[0.9, 0.2], [0.1, 0.8], [0.1, 0.8]])
    assert np.allclose(res.posteriors, expected / expected.sum(axis=1, keepdims=True), atol=1e-12)
    assert viterbi_decode(node, ys).tolist() == brute_force_ml(node, ys).tolist() == [0, 1, 1]


def test_uninformative_observations_give_prior():
    space = StateSpace(OOK, 2)
    rng = rng_stream(1, "prior")
    probs = rng.dirichlet([1, 1], size=4)
    transitions = TransitionTable(probs, np.full(4, 0.25))
    node = TabularNode(space, np.ones((1, 4)), transitions)
    ys = np.zeros(6)
    res = sp_map_decode(node, ys, initial=0)
    # forward propagation of the chain from state 0
    p = np.eye(4)[0]
    m = transitions.matrix()
    for i in range(6):
        p = p @ m
        expected = np.array([p[space.newest == s].sum() for s in (0, 1)])
        assert np.allclose(res.posteriors[i], expected, atol=1e-12)


@pytest.mark.parametrize("seed", range(30))
def test_random_instances_match_oracles(seed):
    node, ys = random_tabular_instance(seed)
    for initial in (None, 0):
        res = sp_map_decode(node, ys, initial=initial)
        assert np.allclose(res.posteriors, brute_force_map(node, ys, initial=initial), atol=1e-9, rtol=0)
        assert np.allclose(res.posteriors.sum(axis=1), 1.0, atol=1e-9)
        ml = brute_force_ml(node, ys, initial=initial)
        assert np.array_equal(viterbi_decode(node, ys, initial=initial), ml)
        full = list(viterbi_streaming(node, ys, delay=len(ys), initial=initial))
        assert full == ml.tolist()


@pytest.mark.parametrize("seed", range(20))
def test_scaling_changes_no_decision(seed):
    node, ys = random_tabular_instance(seed)
    scales = rng_stream(seed, "scales").uniform(1e-3, 1e3, size=len(ys))
    scaled = ScaledNode(node, scales)
    assert np.array_equal(sp_map_decode(node, ys).symbols, sp_map_decode(scaled, ys).symbols)
    assert np.array_equal(viterbi_decode(node, ys), viterbi_decode(scaled, ys))


def test_single_observation():
    space = StateSpace(OOK, 2)
    table = np.array([[0.1, 0.7, 0.3, 0.2]])
    node = TabularNode(space, table)
    # uniform initial prior: every state is reachable with the same weight
    assert viterbi_decode(node, [0]).tolist() == [space.newest[1]]
    post = brute_force_map(node, [0])
    w = np.array([table[0, space.newest == s].sum() for s in (0, 1)])
    assert np.allclose(post[0], w / w.sum())


def test_symmetric_model_gives_half():
    node = TabularNode(StateSpace(OOK, 1), np.array([[0.5, 0.5]]))
    assert np.allclose(brute_force_map(node, [0]), 0.5)
    assert np.allclose(sp_map_decode(node, [0]).posteriors, 0.5)


def test_ties_break_toward_lowest_index():
    node = TabularNode(StateSpace(OOK, 1), np.array([[0.5, 0.5]]))
    assert viterbi_decode(node, [0, 0, 0]).tolist() == [0, 0, 0]
    assert sp_map_decode(node, [0, 0]).symbols.tolist() == [0, 0]


def test_impossible_evidence_raises():
    node = TabularNode(StateSpace(OOK, 1), np.array([[0.0, 0.0], [1.0, 1.0]]))
    with pytest.raises(InferenceError):
        viterbi_decode(node, [1, 0])
    with pytest.raises(InferenceError):
        sp_map_decode(node, [1, 0])
    with pytest.raises(InferenceError):
        list(viterbi_streaming(node, [1, 0, 1]))


def test_domain_errors():
    node, _ = hand_instance()
    with pytest.raises(DomainError):
        sp_map_decode(node, [])
    with pytest.raises(DomainError):
        sp_map_decode(node, [5])
    with pytest.raises(DomainError):
        sp_map_decode(node, [0], initial=np.ones(3))
    with pytest.raises(DomainError):
        list(viterbi_streaming(node, [0, 1], delay=0))
    with pytest.raises(EnumerationTooLarge):
        brute_force_map(node, np.zeros(25, dtype=int))


def _gaussian_trial(snr_db, n, seed):
    taps = tap_profile(0.5, 4)
    rng = rng_stream(seed, "trial")
    positions = rng.integers(0, 2, size=n)
    y = transmit_gaussian(BPSK.values(positions), taps, snr_from_db(snr_db), rng)
    return exact_node(ChannelModel("gaussian", tuple(taps), snr_from_db(snr_db))), positions, y


def test_high_snr_decodes_exactly():
    node, positions, y = _gaussian_trial(20.0, 10_000, 0)
    assert np.array_equal(sp_map_decode(node, y, initial=0).symbols, positions)
    assert np.array_equal(viterbi_decode(node, y, initial=0), positions)


def test_streaming_agrees_with_batch_at_high_snr():
    node, _, y = _gaussian_trial(20.0, 10_000, 1)
    batch = viterbi_decode(node, y, initial=0)
    stream = np.fromiter(viterbi_streaming(node, y, initial=0), dtype=np.int64)
    assert stream.size == batch.size
    assert np.mean(stream == batch) >= 0.999


def test_streaming_equals_batch_on_noiseless_table():
    space = StateSpace(OOK, 2)
    rng = rng_stream(3, "noiseless")
    positions = rng.integers(0, 2, size=200)
    states = space.state_sequence(positions)
    # observation k identifies state k exactly
    node = TabularNode(space, np.eye(4))
    assert list(viterbi_streaming(node, states, initial=0)) == viterbi_decode(node, states, initial=0).tolist()
    assert viterbi_decode(node, states, initial=0).tolist() == positions.tolist()


def test_long_sequence_has_no_underflow():
    node, positions, y = _gaussian_trial(0.0, 2040, 2)
    res = sp_map_decode(node, y, initial=0)
    assert np.isfinite(res.posteriors).all()
    assert np.allclose(res.posteriors.sum(axis=1), 1.0, atol=1e-9)


@pytest.mark.parametrize("decoder", [sp_map_decode, viterbi_decode])
def test_evaluation_count_is_linear(decoder):
    node, _, y = _gaussian_trial(4.0, 2000, 4)
    counts = []
    for t in (1000, 2000):
        counter = CountingNode(node)
        decoder(counter, y[:t])
        counts.append(counter.evaluations)
    assert counts[0] == 1000 * 16
    assert counts[1] / counts[0] == pytest.approx(2.0, rel=0.1)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), d=st.integers(1, 12))
def test_streaming_emits_one_decision_per_input(seed, d):
    node, ys = random_tabular_instance(seed)
    out = list(viterbi_streaming(node, ys, delay=d))
    assert len(out) == len(ys)
    if d >= len(ys):
        assert out == viterbi_decode(node, ys).tolist()
