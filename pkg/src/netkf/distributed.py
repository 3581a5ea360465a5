"""Per-node distributed Kalman filter.

Each node filters only its own state. Neighbor outputs ``y^j`` enter its
prediction as known inputs through ``L_ij``; nothing else is exchanged, and
each time step costs exactly one update and one prediction per node.
"""

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

from .central import (
    FilterTrajectory,
    GaussianBelief,
    _conform,
    joseph_update,
    kalman_gain,
)
from ._linalg import symmetrize
from .errors import InconsistentStep, MissingBroadcast, StaleBroadcast, StepError
from .netmodel import NetworkModel, SubsystemModel, split_blocks


@dataclass(frozen=True)
class NodeFilterState:
    """Local belief of node ``index`` (1-based) and the gain of its last update."""

    index: int
    belief: GaussianBelief
    gain: np.ndarray | None = None

    @property
    def step(self) -> int:
        return self.belief.step

    @property
    def kind(self) -> str:
        return self.belief.kind


@dataclass(frozen=True)
class MeasurementBroadcast:
    sender: int
    step: int
    y: np.ndarray

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        y.setflags(write=False)
        object.__setattr__(self, "y", y)


def init_nodes(net: NetworkModel, P=None, mean0=None) -> list:
    """Updated ``(0|0)`` states; node ``i`` starts from block ``i`` of ``P``.

    Off-diagonal blocks of a joint ``P`` are discarded here.
    """
    dims = net.state_dims
    means = split_blocks(np.zeros(sum(dims)) if mean0 is None else mean0, dims)
    states = []
    off = 0
    for s, m in zip(net.subsystems, means):
        Pi = s.P if P is None else np.asarray(P)[off:off + s.n, off:off + s.n]
        off += s.n
        states.append(NodeFilterState(s.index, GaussianBelief(m, Pi, "updated", 0)))
    return states


def node_predict(state: NodeFilterState, inbox: Iterable[MeasurementBroadcast], net: NetworkModel) -> NodeFilterState:
    """Local prediction ``(k|k) -> (k+1|k)``.

    ``inbox`` must hold one step-``k`` broadcast from every ``j`` in ``N_i``
    (the node's own measurement may be included; it is needed only when
    ``L_ii`` is nonzero). At ``k = 0`` no outputs exist and the inbox must be
    empty.
    """
    if state.kind != "updated":
        raise ValueError(f"node {state.index}: node_predict expects an updated (k|k) state")
    i, k = state.index, state.step
    sub = net.subsystem(i)
    neighbors = net.neighbor_sets[i]
    received = {}
    for msg in inbox:
        if msg.step != k:
            raise StaleBroadcast(f"node {i} at step {k} got a step-{msg.step} broadcast from {msg.sender}")
        if msg.sender in received:
            raise ValueError(f"node {i}: duplicate broadcast from {msg.sender}")
        received[msg.sender] = msg
    if k == 0:
        if received:
            raise StaleBroadcast(f"node {i}: no measurements exist at step 0")
        z = np.zeros(sub.n)
    else:
        missing = set(neighbors) - set(received)
        if missing:
            raise MissingBroadcast(i, missing)
        z = np.zeros(sub.n)
        for j in sorted(neighbors):
            z = z + net.couplings[(i, j)] @ _conform(received[j].y, net.subsystem(j).p, f"broadcast from {j}")
    mean = sub.A @ state.belief.mean + z
    cov = symmetrize(sub.A @ state.belief.cov @ sub.A.T + sub.Q)
    return NodeFilterState(i, GaussianBelief(mean, cov, "predicted", k + 1))


def node_update(state: NodeFilterState, y_i, sub: SubsystemModel) -> NodeFilterState:
    """Local measurement update ``(k|k-1) -> (k|k)`` with the node's own output."""
    if state.kind != "predicted":
        raise ValueError(f"node {state.index}: node_update expects a predicted (k|k-1) state")
    b = state.belief
    y_i = _conform(y_i, sub.p)
    K = kalman_gain(b.cov, sub.C, sub.R)
    mean = b.mean + K @ (y_i - sub.C @ b.mean)
    cov = joseph_update(b.cov, K, sub.C, sub.R)
    K.setflags(write=False)
    return NodeFilterState(state.index, GaussianBelief(mean, cov, "updated", b.step), K)


def _deliver(net: NetworkModel, measurements, step):
    """Bulk-synchronous exchange: inbox per node, own measurement included."""
    inboxes = {s.index: [] for s in net.subsystems}
    for j, y in enumerate(measurements, start=1):
        msg = MeasurementBroadcast(j, step, y)
        inboxes[j].append(msg)
        for i in sorted(net.receivers(j)):
            inboxes[i].append(msg)
    return inboxes


def _per_node(measurements, net):
    if isinstance(measurements, np.ndarray) and measurements.ndim == 1:
        return split_blocks(measurements, net.output_dims)
    ys = list(measurements)
    if len(ys) != net.size:
        return split_blocks(np.concatenate([np.atleast_1d(y) for y in ys]), net.output_dims)
    return ys


def network_round(states: Sequence[NodeFilterState], measurements, net: NetworkModel):
    """Update every node with ``y_k`` then predict to ``k+1``; returns ``(updated, predicted)``.

    ``measurements`` is either one stacked vector or a per-node list.
    """
    steps = {s.step for s in states}
    if len(steps) != 1:
        raise InconsistentStep(f"nodes are at different steps {sorted(steps)}")
    (k,) = steps
    ys = _per_node(measurements, net)
    updated = []
    for s in states:
        try:
            updated.append(node_update(s, ys[s.index - 1], net.subsystem(s.index)))
        except Exception as exc:
            raise StepError(k, exc, node=s.index) from exc
    inboxes = _deliver(net, ys, k)
    predicted = []
    for s in updated:
        # own output is local; it only enters the prediction through L_ii
        inbox = [m for m in inboxes[s.index] if m.sender != s.index or s.index in net.neighbor_sets[s.index]]
        try:
            predicted.append(node_predict(s, inbox, net))
        except Exception as exc:
            raise StepError(k, exc, node=s.index) from exc
    return updated, predicted


def network_step(states: Sequence[NodeFilterState], measurements, net: NetworkModel) -> list:
    """One synchronized round (broadcast, update, predict); returns the ``(k+1|k)`` states."""
    return network_round(states, measurements, net)[1]


def stack(states: Sequence[NodeFilterState]):
    """Concatenated mean and block-diagonal covariance of the node beliefs."""
    if not states:
        raise ValueError("nothing to stack")
    tags = {(s.step, s.kind) for s in states}
    if len(tags) != 1:
        raise InconsistentStep(f"cannot stack states with (step, kind) {sorted(tags)}")
    mean = np.concatenate([s.belief.mean for s in states])
    cov = linalg.block_diag(*[s.belief.cov for s in states])
    return mean, cov


def distributed_run(net: NetworkModel, measurements: Sequence, P=None, mean0=None) -> FilterTrajectory:
    """Run every node over ``y_1..y_K``; beliefs are returned stacked.

    The returned trajectory has the same layout as
    :func:`netkf.central.central_run`, with block-diagonal covariances.
    """
    if len(measurements) == 0:
        raise ValueError("distributed_run needs at least one measurement")
    states = init_nodes(net, P, mean0)
    m0, c0 = stack(states)
    traj = FilterTrajectory(GaussianBelief(m0, c0, "updated", 0))
    states = [node_predict(s, (), net) for s in states]
    for y in measurements:
        m, c = stack(states)
        traj.predicted.append(GaussianBelief(m, c, "predicted", states[0].step))
        updated, states = network_round(states, y, net)
        m, c = stack(updated)
        traj.updated.append(GaussianBelief(m, c, "updated", updated[0].step))
        traj.gains.append(linalg.block_diag(*[s.gain for s in updated]))
    return traj
