import numpy as np
import pytest
from hypothesis import given, strategies as st

from netkf.central import GaussianBelief, central_run
from netkf.distributed import (
    MeasurementBroadcast,
    NodeFilterState,
    distributed_run,
    init_nodes,
    network_round,
    network_step,
    node_predict,
    node_update,
    stack,
)
from netkf.errors import InconsistentStep, MissingBroadcast, StaleBroadcast, StepError
from netkf.netmodel import aggregate, split_blocks
from netkf.simulate import default_five_agent_network, simulate

from oracles import random_network, random_spd


@given(st.integers(0, 100_000))
def test_block_diagonal_prior_reproduces_central_filter(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, n_nodes=int(rng.integers(1, 5)), density=0.6)
    model = aggregate(net)
    ys = simulate(model, seed, 30).y
    c = central_run(model, ys)
    d = distributed_run(net, ys)
    assert np.max(np.abs(c.means() - d.means())) <= 1e-9
    assert np.max(np.abs(c.covs() - d.covs())) <= 1e-9
    assert np.max(np.abs(c.means("predicted") - d.means("predicted"))) <= 1e-9


def test_dense_prior_creates_a_gap(rng):
    net = default_five_agent_network()
    model = aggregate(net, random_spd(rng, 5))
    ys = simulate(model, 0, 5).y
    c = central_run(model, ys)
    d = distributed_run(net, ys, P=model.P)
    gap = c.means("predicted") - d.means("predicted")
    assert np.all(gap[0] == 0)  # both predict A * 0 at k = 1
    assert np.max(np.abs(gap[1])) > 1e-6


def test_distributed_covariance_is_block_diagonal(rng):
    net = random_network(rng, n_nodes=3, max_n=2)
    model = aggregate(net, random_spd(rng, sum(net.state_dims)))
    d = distributed_run(net, simulate(model, 1, 3).y, P=model.P)
    mask = np.zeros((model.n, model.n), dtype=bool)
    off = 0
    for n in net.state_dims:
        mask[off:off + n, off:off + n] = True
        off += n
    for b in d.updated:
        assert np.all(b.cov[~mask] == 0)


def _first_round(net, model):
    states = [node_predict(s, (), net) for s in init_nodes(net)]
    return [node_update(s, y, net.subsystem(s.index)) for s, y in zip(states, split_blocks(np.ones(model.p), net.output_dims))]


def test_prediction_uses_only_neighbor_outputs():
    net = default_five_agent_network()
    model = aggregate(net)
    updated = _first_round(net, model)
    s1 = updated[0]
    ys = {j: np.array([float(j)]) for j in range(1, 6)}
    inbox = [MeasurementBroadcast(2, 1, ys[2])]
    pred = node_predict(s1, inbox, net)
    assert pred.belief.mean[0] == pytest.approx(0.2 * s1.belief.mean[0] + 0.3 * 2.0)
    # broadcasts from non-neighbors change nothing
    noisy = inbox + [MeasurementBroadcast(j, 1, ys[j]) for j in (3, 4, 5)]
    assert np.array_equal(node_predict(s1, noisy, net).belief.mean, pred.belief.mean)


def test_missing_and_stale_broadcasts():
    net = default_five_agent_network()
    updated = _first_round(net, aggregate(net))
    with pytest.raises(MissingBroadcast) as info:
        node_predict(updated[2], [MeasurementBroadcast(2, 1, [0.0])], net)
    assert list(info.value.missing) == [4]
    with pytest.raises(StaleBroadcast):
        node_predict(updated[0], [MeasurementBroadcast(2, 0, [0.0])], net)
    with pytest.raises(StaleBroadcast):
        node_predict(init_nodes(net)[0], [MeasurementBroadcast(2, 0, [0.0])], net)
    with pytest.raises(ValueError):
        node_predict(updated[0], [MeasurementBroadcast(2, 1, [0.0])] * 2, net)


def test_round_requires_synchronized_nodes():
    net = default_five_agent_network()
    states = [node_predict(s, (), net) for s in init_nodes(net)]
    b = states[2].belief
    states[2] = NodeFilterState(3, GaussianBelief(b.mean, b.cov, "predicted", 5))
    with pytest.raises(InconsistentStep):
        network_round(states, np.zeros(5), net)


def test_round_errors_name_step_and_node():
    net = default_five_agent_network()
    states = [node_predict(s, (), net) for s in init_nodes(net)]
    bad = [np.zeros(1)] * 4 + [np.zeros(2)]
    with pytest.raises(StepError) as info:
        network_round(states, bad, net)
    assert (info.value.step, info.value.node) == (1, 5)


def test_network_step_accepts_stacked_or_per_node_measurements(rng):
    net = random_network(rng, n_nodes=3)
    states = [node_predict(s, (), net) for s in init_nodes(net)]
    y = rng.standard_normal(sum(net.output_dims))
    a = stack(network_step(states, y, net))
    b = stack(network_step(states, split_blocks(y, net.output_dims), net))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_stack_rejects_mixed_states():
    net = default_five_agent_network()
    states = init_nodes(net)
    mixed = [node_predict(states[0], (), net)] + states[1:]
    with pytest.raises(InconsistentStep):
        stack(mixed)


def test_one_update_and_one_prediction_per_step(rng):
    net = default_five_agent_network()
    model = aggregate(net)
    ys = simulate(model, 2, 4).y
    d = distributed_run(net, ys)
    assert [b.step for b in d.predicted] == [1, 2, 3, 4]
    assert [b.step for b in d.updated] == [1, 2, 3, 4]
    assert len(d.gains) == 4
