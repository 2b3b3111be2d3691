"""Panel data: ordered network waves, actor covariates, structural zeros, file I/O.

Wave files are n rows of n whitespace-separated 0/1 tokens.  Covariate files
hold one numeric value per actor per line.  The optional structural-zero mask
uses the same matrix layout with 1 marking a forbidden tie variable; its
diagonal must be all ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .digraph import DataError, Digraph
from .effects import ActorCovariate

__all__ = ["PanelData", "load_panel", "read_wave_file", "write_wave_file", "read_covariate_file"]


@dataclass
class PanelData:
    """Ordered waves plus the covariates and constraints they share."""

    waves: list
    durations: np.ndarray = None
    covariates: Mapping[str, ActorCovariate] = field(default_factory=dict)
    structural_zeros: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.waves) < 2:
            raise DataError(f"a panel needs at least 2 waves, got {len(self.waves)}")
        n = self.waves[0].n
        for m, w in enumerate(self.waves):
            if w.n != n:
                raise DataError(f"wave {m + 1} has {w.n} actors, wave 1 has {n}")
        if self.durations is None:
            self.durations = np.ones(len(self.waves) - 1)
        self.durations = np.asarray(self.durations, dtype=np.float64)
        if len(self.durations) != len(self.waves) - 1:
            raise DataError(
                f"{len(self.durations)} durations for {len(self.waves) - 1} periods"
            )
        if np.any(self.durations <= 0.0):
            raise DataError("period durations must be positive")
        for name, cov in self.covariates.items():
            if cov.n != n:
                raise DataError(f"covariate {name!r} has {cov.n} values for {n} actors")
        if self.structural_zeros is not None:
            mask = np.asarray(self.structural_zeros, dtype=np.float64)
            for m, w in enumerate(self.waves):
                viol = (w.a == 1.0) & (mask == 1.0)
                np.fill_diagonal(viol, False)
                if viol.any():
                    i, j = np.argwhere(viol)[0]
                    raise DataError(
                        f"wave {m + 1} has tie ({int(i)},{int(j)}) on a structurally forbidden dyad"
                    )

    @property
    def n(self) -> int:
        return self.waves[0].n

    @property
    def n_waves(self) -> int:
        return len(self.waves)

    @property
    def n_periods(self) -> int:
        return len(self.waves) - 1

    def change_count(self, period: int) -> int:
        """Number of tie variables differing between the bounding waves."""
        return self.waves[period].hamming(self.waves[period + 1])


def read_wave_file(path) -> Digraph:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            row = []
            for col, tok in enumerate(tokens, start=1):
                if tok == "0":
                    row.append(0.0)
                elif tok == "1":
                    row.append(1.0)
                else:
                    raise DataError(
                        f"{path}: line {lineno} column {col}: token {tok!r} is not 0/1 "
                        "(missing-data codes are not supported)"
                    )
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: empty wave file")
    n = len(rows)
    for lineno, row in enumerate(rows, start=1):
        if len(row) != n:
            raise DataError(f"{path}: row {lineno} has {len(row)} entries, expected {n}")
    a = np.asarray(rows)
    if np.diagonal(a).any():
        i = int(np.flatnonzero(np.diagonal(a))[0])
        raise DataError(f"{path}: diagonal entry 1 at row/column {i + 1}")
    return Digraph(a)


def write_wave_file(g: Digraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in g.a:
            fh.write(" ".join(str(int(v)) for v in row))
            fh.write("\n")


def read_covariate_file(path, name: str) -> ActorCovariate:
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tok = line.strip()
            if not tok:
                continue
            try:
                values.append(float(tok))
            except ValueError:
                raise DataError(f"{path}: line {lineno}: {tok!r} is not numeric") from None
    if not values:
        raise DataError(f"{path}: empty covariate file")
    return ActorCovariate(name, values)


def _read_mask_file(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            tokens = line.split()
            if tokens:
                rows.append([float(t) for t in tokens])
    m = np.asarray(rows)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DataError(f"{path}: structural-zero mask must be square")
    if not np.isin(m, (0.0, 1.0)).all():
        raise DataError(f"{path}: mask entries must be 0 or 1")
    if not np.diagonal(m).all():
        raise DataError(f"{path}: mask diagonal must be all 1 (self-ties are always forbidden)")
    return m


def load_panel(
    wave_paths: Sequence,
    covariate_paths: Mapping[str, object] | None = None,
    mask_path=None,
    durations=None,
) -> PanelData:
    """Read waves (time order), named covariates, and an optional mask.

    Periods default to unit duration; pass explicit durations to override.
    """
    if len(wave_paths) < 2:
        raise DataError(f"need at least 2 wave files, got {len(wave_paths)}")
    for p in wave_paths:
        if not Path(p).exists():
            raise DataError(f"wave file not found: {p}")
    waves = [read_wave_file(p) for p in wave_paths]
    covariates = {}
    for name, p in (covariate_paths or {}).items():
        if not Path(p).exists():
            raise DataError(f"covariate file not found: {p}")
        covariates[name] = read_covariate_file(p, name)
    mask = None
    if mask_path is not None:
        if not Path(mask_path).exists():
            raise DataError(f"structural-zero mask file not found: {mask_path}")
        mask = _read_mask_file(mask_path)
        if mask.shape[0] != waves[0].n:
            raise DataError(
                f"mask is {mask.shape[0]} actors, waves have {waves[0].n}"
            )
    return PanelData(waves=waves, durations=durations, covariates=covariates,
                     structural_zeros=mask)
