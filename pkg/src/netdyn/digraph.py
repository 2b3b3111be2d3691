"""Directed-graph state and tie-change constraints.

The network state is a binary n x n adjacency matrix with a structurally
zero diagonal.  Row i holds the outgoing ties of actor i; a "toggle" of
entry (i, j) flips one tie variable, which is the elementary move of the
whole model.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Digraph", "PermittedSetPolicy", "DataError"]


class DataError(ValueError):
    """Raised for malformed network data (shape, diagonal, non-binary)."""


class Digraph:
    """Mutable digraph on n actors, stored as a float 0/1 adjacency matrix.

    Float storage keeps the linear-algebra paths (matvecs against rows and
    columns) fast; all entries are exactly 0.0 or 1.0, so counting statistics
    computed from it are exact integers.
    """

    __slots__ = ("a",)

    def __init__(self, adjacency) -> None:
        a = np.asarray(adjacency, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DataError(f"adjacency must be square, got shape {a.shape}")
        if not np.isin(a, (0.0, 1.0)).all():
            bad = np.argwhere(~np.isin(a, (0.0, 1.0)))[0]
            raise DataError(f"adjacency entries must be 0 or 1, bad entry at {tuple(bad)}")
        if np.diagonal(a).any():
            i = int(np.flatnonzero(np.diagonal(a))[0])
            raise DataError(f"self-ties are not allowed, diagonal 1 at actor {i}")
        self.a = a

    @classmethod
    def empty(cls, n: int) -> "Digraph":
        return cls(np.zeros((n, n)))

    @classmethod
    def from_arcs(cls, n: int, arcs) -> "Digraph":
        a = np.zeros((n, n))
        for i, j in arcs:
            a[i, j] = 1.0
        return cls(a)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def toggle(self, i: int, j: int) -> None:
        if i == j:
            raise ValueError("cannot toggle a diagonal entry")
        self.a[i, j] = 1.0 - self.a[i, j]

    def toggled(self, i: int, j: int) -> "Digraph":
        g = self.copy()
        g.toggle(i, j)
        return g

    def copy(self) -> "Digraph":
        g = object.__new__(Digraph)
        g.a = self.a.copy()
        return g

    def arc_count(self) -> int:
        return int(self.a.sum())

    def hamming(self, other: "Digraph") -> int:
        return int(np.sum(self.a != other.a))

    def differing_dyads(self, other: "Digraph") -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in np.argwhere(self.a != other.a)]

    def __eq__(self, other) -> bool:
        return isinstance(other, Digraph) and np.array_equal(self.a, other.a)

    def __hash__(self):
        return hash(self.a.tobytes())

    def __repr__(self) -> str:
        return f"Digraph(n={self.n}, arcs={self.arc_count()})"


class PermittedSetPolicy:
    """Which single-tie changes are available to an actor.

    allow_keep: include the current network itself in the option set, so the
    actor may decline to change anything.
    structural_zeros: optional 0/1 matrix marking forbidden tie variables
    (1 = forbidden).  The diagonal must be all ones; masked dyads are never
    toggled, simulated, or proposed.
    """

    __slots__ = ("allow_keep", "structural_zeros")

    def __init__(self, allow_keep: bool = True, structural_zeros=None) -> None:
        self.allow_keep = bool(allow_keep)
        if structural_zeros is not None:
            m = np.asarray(structural_zeros, dtype=np.float64)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise DataError(f"structural-zero mask must be square, got {m.shape}")
            if not np.isin(m, (0.0, 1.0)).all():
                raise DataError("structural-zero mask entries must be 0 or 1")
            if not np.diagonal(m).all():
                raise DataError("structural-zero mask diagonal must be all 1 (self-ties forbidden)")
            structural_zeros = m
        self.structural_zeros = structural_zeros

    def allowed(self, n: int) -> np.ndarray:
        """Boolean (n, n) matrix: True where the tie variable may be toggled."""
        if self.structural_zeros is not None:
            if self.structural_zeros.shape[0] != n:
                raise DataError(
                    f"structural-zero mask is {self.structural_zeros.shape[0]} actors, network has {n}"
                )
            return self.structural_zeros == 0.0
        out = np.ones((n, n), dtype=bool)
        np.fill_diagonal(out, False)
        return out

    def check_state(self, g: Digraph) -> None:
        """Reject states carrying a tie on a structurally forbidden dyad."""
        if self.structural_zeros is not None:
            viol = (g.a == 1.0) & (self.structural_zeros == 1.0)
            np.fill_diagonal(viol, False)
            if viol.any():
                i, j = np.argwhere(viol)[0]
                raise DataError(f"tie ({int(i)},{int(j)}) present but structurally forbidden")
