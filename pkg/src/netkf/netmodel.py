"""Networks of output-coupled LTI subsystems and their aggregated model.

Subsystem ``i`` evolves as::

    x_{k+1}^i = A_i x_k^i + sum_{j in N_i} L_ij y_k^j + w_k^i
    y_k^i     = C_i x_k^i + v_k^i

Stacking all nodes gives ``x_{k+1} = (A + L C) x_k + w_k + L v_k``, whose
effective process noise ``e_k = w_k + L v_k`` is correlated with the
measurement noise (cross-covariance ``L R``).
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg

from ._linalg import as_matrix, check_spd, frozen
from .errors import DimensionMismatch, NonSPD


@dataclass(frozen=True)
class SubsystemModel:
    """One node: dynamics ``A``, output map ``C`` and its noise/initial covariances."""

    index: int
    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        if int(self.index) < 1:
            raise ValueError(f"subsystem index must be >= 1, got {self.index}")
        object.__setattr__(self, "index", int(self.index))
        for name in ("A", "C", "Q", "R", "P"):
            object.__setattr__(self, name, frozen(as_matrix(getattr(self, name), name)))
        n, p = self.n, self.p
        tag = f"subsystem {self.index}"
        if self.A.shape != (n, n):
            raise DimensionMismatch(f"{tag}: A must be square, got {self.A.shape}")
        if self.C.shape[1] != n:
            raise DimensionMismatch(f"{tag}: C has {self.C.shape[1]} columns, state dim is {n}")
        for name, size in (("Q", n), ("R", p), ("P", n)):
            M = getattr(self, name)
            if M.shape != (size, size):
                raise DimensionMismatch(f"{tag}: {name} must be {size}x{size}, got {M.shape}")
            check_spd(M, f"{tag} {name}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class NetworkModel:
    """Subsystems plus the sparse coupling gains ``L_ij`` (keys are 1-based)."""

    subsystems: tuple
    couplings: Mapping = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.subsystems)

    @cached_property
    def neighbor_sets(self) -> dict:
        """``N_i = {j : L_ij != 0}`` for every node ``i``."""
        nbrs = {s.index: set() for s in self.subsystems}
        for (i, j), Lij in self.couplings.items():
            if np.any(Lij):
                nbrs[i].add(j)
        return {i: frozenset(js) for i, js in nbrs.items()}

    def subsystem(self, i) -> SubsystemModel:
        return self.subsystems[i - 1]

    def receivers(self, j) -> set:
        """Nodes that need ``y^j``, i.e. every ``i != j`` with ``j in N_i``."""
        return {i for i, js in self.neighbor_sets.items() if j in js and i != j}

    @property
    def state_dims(self) -> list:
        return [s.n for s in self.subsystems]

    @property
    def output_dims(self) -> list:
        return [s.p for s in self.subsystems]

    def coupling_matrix(self) -> np.ndarray:
        """Dense ``n x p`` coupling matrix assembled from the blocks ``L_ij``."""
        rs, cs = _offsets(self.state_dims), _offsets(self.output_dims)
        L = np.zeros((rs[-1], cs[-1]))
        for (i, j), Lij in self.couplings.items():
            L[rs[i - 1]:rs[i], cs[j - 1]:cs[j]] = Lij
        return L


def networks_equal(a: NetworkModel, b: NetworkModel) -> bool:
    """Exact equality of every subsystem matrix and coupling block."""
    if a.size != b.size or set(a.couplings) != set(b.couplings):
        return False
    for sa, sb in zip(a.subsystems, b.subsystems):
        if sa.index != sb.index:
            return False
        for name in ("A", "C", "Q", "R", "P"):
            Ma, Mb = getattr(sa, name), getattr(sb, name)
            if Ma.shape != Mb.shape or not np.array_equal(Ma, Mb):
                return False
    return all(np.array_equal(a.couplings[key], b.couplings[key]) for key in a.couplings)


def _offsets(dims):
    return np.concatenate([[0], np.cumsum(dims, dtype=int)]).astype(int)


def build_network(subsystems: Sequence[SubsystemModel], couplings: Mapping | None = None) -> NetworkModel:
    """Validate and assemble a :class:`NetworkModel`.

    ``couplings`` maps 1-based ``(i, j)`` pairs to ``n_i x p_j`` gains; all-zero
    gains are kept but do not create a neighbor relation.
    """
    subs = tuple(subsystems)
    if not subs:
        raise ValueError("a network needs at least one subsystem")
    if [s.index for s in subs] != list(range(1, len(subs) + 1)):
        raise ValueError(f"subsystem indices must be 1..{len(subs)} in order, got {[s.index for s in subs]}")
    table = {}
    for key, Lij in (couplings or {}).items():
        i, j = int(key[0]), int(key[1])
        if not (1 <= i <= len(subs) and 1 <= j <= len(subs)):
            raise DimensionMismatch(f"coupling ({i},{j}) refers to a missing subsystem")
        Lij = frozen(as_matrix(Lij, f"L({i},{j})"))
        want = (subs[i - 1].n, subs[j - 1].p)
        if Lij.shape != want:
            raise DimensionMismatch(f"coupling ({i},{j}) must be {want[0]}x{want[1]}, got {Lij.shape[0]}x{Lij.shape[1]}")
        table[(i, j)] = Lij
    return NetworkModel(subs, dict(sorted(table.items())))


@dataclass(frozen=True)
class AggregatedModel:
    """Block-diagonal stacked model with the derived correlated-noise statistics.

    Constructed by :func:`aggregate`; direct construction skips validation,
    which the simulation tests use for degenerate (zero-noise) models.
    """

    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    L: np.ndarray
    P: np.ndarray
    state_dims: tuple
    output_dims: tuple
    network: NetworkModel | None = None

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @cached_property
    def A_tilde(self):
        return frozen(self.A + self.L @ self.C)

    @cached_property
    def Q_tilde(self):
        return frozen(self.Q + self.L @ self.R @ self.L.T)

    @cached_property
    def S_tilde(self):
        return frozen(self.L @ self.R)

    @cached_property
    def U(self):
        """Information contributed by one measurement, ``C^T R^-1 C``."""
        RinvC = linalg.solve(self.R, self.C, assume_a="pos")
        U = self.C.T @ RinvC
        return frozen(0.5 * (U + U.T))

    @cached_property
    def P_star(self):
        return frozen(block_diagonal_extract(self.P, self.state_dims))

    def block(self, name, i, j=None):
        """Block ``(i, j)`` (1-based) of matrix ``name`` in the state/output partition."""
        M = getattr(self, name)
        j = i if j is None else j
        rows = self.output_dims if name in ("C", "R") else self.state_dims
        cols = self.output_dims if name in ("R", "L") else self.state_dims
        ro, co = _offsets(rows), _offsets(cols)
        return M[ro[i - 1]:ro[i], co[j - 1]:co[j]]

    def with_initial_covariance(self, P):
        from dataclasses import replace

        return replace(self, P=frozen(as_matrix(P, "P")))


def aggregate(net: NetworkModel, P_joint=None) -> AggregatedModel:
    """Stack a network into one global model.

    ``P_joint`` defaults to ``blkdiag(P_1, ..., P_I)``. A given joint
    covariance may have off-diagonal blocks but must be SPD.
    """
    subs = net.subsystems
    A = linalg.block_diag(*[s.A for s in subs])
    C = linalg.block_diag(*[s.C for s in subs])
    Q = linalg.block_diag(*[s.Q for s in subs])
    R = linalg.block_diag(*[s.R for s in subs])
    if P_joint is None:
        P = linalg.block_diag(*[s.P for s in subs])
    else:
        P = as_matrix(P_joint, "P")
        if P.shape != A.shape:
            raise DimensionMismatch(f"joint initial covariance must be {A.shape}, got {P.shape}")
        check_spd(P, "P")
        check_spd(block_diagonal_extract(P, net.state_dims), "block diagonal of P")
    return AggregatedModel(
        A=frozen(A), C=frozen(C), Q=frozen(Q), R=frozen(R),
        L=frozen(net.coupling_matrix()), P=frozen(P),
        state_dims=tuple(net.state_dims), output_dims=tuple(net.output_dims),
        network=net,
    )


def block_diagonal_extract(P, dims) -> np.ndarray:
    """Keep the diagonal blocks of ``P`` for partition ``dims``, zero elsewhere."""
    P = as_matrix(P, "P")
    dims = [int(d) for d in dims]
    if sum(dims) != P.shape[0] or P.shape[0] != P.shape[1]:
        raise DimensionMismatch(f"block sizes {dims} do not partition a {P.shape} matrix")
    out = np.zeros_like(P)
    off = _offsets(dims)
    for a, b in zip(off[:-1], off[1:]):
        out[a:b, a:b] = P[a:b, a:b]
    return out


def split_blocks(x, dims):
    """Split a stacked vector into per-node pieces."""
    off = _offsets(dims)
    return [np.asarray(x)[a:b] for a, b in zip(off[:-1], off[1:])]


__all__ = [
    "SubsystemModel", "NetworkModel", "AggregatedModel",
    "build_network", "aggregate", "block_diagonal_extract", "split_blocks",
    "NonSPD", "DimensionMismatch",
]
