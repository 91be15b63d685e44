"""Tanner graph with flat edge indexing for message passing."""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .gf2codes import as_bitmatrix, matrix_hash


class DegenerateNodeWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class TannerGraph:
    """Bipartite graph of a parity-check matrix.

    Edges are numbered row-major over H (check outer, variable inner).
    ``var_slots`` / ``check_slots`` are the adjacency lists padded with the
    sentinel index ``n_edges`` so message arrays can be gathered with a
    single fancy index after appending one padding column.
    """

    h: np.ndarray
    edge_var: np.ndarray
    edge_check: np.ndarray
    var_slots: np.ndarray
    check_slots: np.ndarray
    var_deg: np.ndarray
    check_deg: np.ndarray
    var_ptr: np.ndarray
    var_edges: np.ndarray
    check_ptr: np.ndarray

    @property
    def n_vars(self) -> int:
        return self.h.shape[1]

    @property
    def n_checks(self) -> int:
        return self.h.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edge_var.size

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.edge_var.tolist(), self.edge_check.tolist()))

    @property
    def var_adj(self) -> list[list[int]]:
        return [[int(e) for e in row if e < self.n_edges] for row in self.var_slots]

    @property
    def check_adj(self) -> list[list[int]]:
        return [[int(e) for e in row if e < self.n_edges] for row in self.check_slots]

    @property
    def digest(self) -> str:
        return matrix_hash(self.h)


def _padded(groups: list[np.ndarray], fill: int) -> np.ndarray:
    width = max(1, max(len(g) for g in groups))
    out = np.full((len(groups), width), fill, dtype=np.intp)
    for i, g in enumerate(groups):
        out[i, : len(g)] = g
    return out


def build_graph(h) -> TannerGraph:
    h = as_bitmatrix(h)
    if not h.any():
        raise ParameterError("parity-check matrix is all zero")
    checks, vars_ = np.nonzero(h)  # row-major order
    n_edges = checks.size
    eids = np.arange(n_edges)
    var_deg = h.sum(axis=0).astype(np.intp)
    check_deg = h.sum(axis=1).astype(np.intp)
    if (var_deg == 0).any() or (check_deg == 0).any():
        warnings.warn(
            f"Tanner graph has {(var_deg == 0).sum()} isolated variable and "
            f"{(check_deg == 0).sum()} isolated check nodes",
            DegenerateNodeWarning,
            stacklevel=2,
        )
    by_var = [eids[vars_ == v] for v in range(h.shape[1])]
    by_check = [eids[checks == c] for c in range(h.shape[0])]
    h = h.copy()
    h.setflags(write=False)
    return TannerGraph(
        h=h,
        edge_var=vars_.astype(np.intp),
        edge_check=checks.astype(np.intp),
        var_slots=_padded(by_var, n_edges),
        check_slots=_padded(by_check, n_edges),
        var_deg=var_deg,
        check_deg=check_deg,
        var_ptr=np.concatenate([[0], np.cumsum(var_deg)]).astype(np.int64),
        var_edges=np.concatenate(by_var).astype(np.int64),
        check_ptr=np.concatenate([[0], np.cumsum(check_deg)]).astype(np.int64),
    )


def degree_profile(g: TannerGraph) -> tuple[dict[int, int], dict[int, int]]:
    """(variable-degree histogram, check-degree histogram) as {degree: count}."""
    return (
        dict(sorted(Counter(g.var_deg.tolist()).items())),
        dict(sorted(Counter(g.check_deg.tolist()).items())),
    )
