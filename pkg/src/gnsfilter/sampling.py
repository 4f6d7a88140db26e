"""Band selection, bandlimiting projector and the node sampling mask."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graph import ContractError, LaplacianSpectrum


class IdentifiabilityError(ValueError):
    """Raised when bandlimited signals cannot be recovered from the observed nodes."""


@dataclass(frozen=True)
class FrequencySet:
    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ContractError("frequency indices must be strictly increasing")
        if idx and idx[0] < 0:
            raise ContractError("negative frequency index")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.array(self.indices, dtype=int)


@dataclass(frozen=True)
class SamplingMask:
    """Diagonal of the 0/1 observation operator."""

    observed: np.ndarray

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=float).ravel().copy()
        if not np.all((obs == 0.0) | (obs == 1.0)):
            raise ContractError("mask entries must be 0 or 1")
        obs.setflags(write=False)
        object.__setattr__(self, "observed", obs)

    @property
    def n(self) -> int:
        return self.observed.shape[0]

    @property
    def count(self) -> int:
        return int(self.observed.sum())

    def nodes(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.observed)]

    def matrix(self) -> np.ndarray:
        return np.diag(self.observed)

    @classmethod
    def from_nodes(cls, n: int, nodes) -> "SamplingMask":
        obs = np.zeros(n)
        nodes = np.asarray(list(nodes), dtype=int)
        if nodes.size and (nodes.min() < 0 or nodes.max() >= n):
            raise ContractError("observed node index out of range")
        obs[nodes] = 1.0
        return cls(obs)

    @classmethod
    def random(cls, n: int, count: int, seed: int) -> "SamplingMask":
        if not 0 <= count <= n:
            raise ContractError(f"cannot observe {count} of {n} nodes")
        rng = np.random.default_rng(seed)
        return cls.from_nodes(n, rng.choice(n, size=count, replace=False))


@dataclass(frozen=True)
class BandlimitProjector:
    matrix: np.ndarray
    band: FrequencySet
    u_f: np.ndarray

    @property
    def band_size(self) -> int:
        return len(self.band)


def min_singular_value(sv: np.ndarray) -> np.ndarray:
    return sv.min(axis=-1)


def log_det_gram(sv: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 2.0 * np.log(sv).sum(axis=-1)


CRITERIA: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "min_singular": min_singular_value,
    "logdet": log_det_gram,
}

_ZERO_SV = 1e-10
_TIE_TOL = 1e-12


def _argmax_lowest(scores: np.ndarray) -> int:
    best = np.max(scores)
    tol = _TIE_TOL * max(1.0, abs(best))
    return int(np.flatnonzero(scores >= best - tol)[0])


def greedy_select_frequencies(
    spectrum: LaplacianSpectrum,
    mask: SamplingMask,
    band_size: int,
    criterion: str | Callable = "min_singular",
) -> FrequencySet:
    """Greedy frequency selection maximizing the spectral content seen by the mask.

    One frequency is added per step: the candidate whose inclusion maximizes
    ``criterion`` evaluated on the singular values of ``D_S U_F`` (default: the
    smallest singular value). Near-equal scores go to the lower index. If every
    candidate leaves the sampled matrix rank deficient, the step maximizes the
    sum of singular values instead.
    """
    n = spectrum.n
    if mask.n != n:
        raise ContractError("mask length does not match spectrum")
    if band_size < 1 or band_size > n:
        raise ContractError(f"band_size must be in [1, {n}]")
    if band_size > mask.count:
        raise IdentifiabilityError(
            f"band_size {band_size} exceeds observed node count {mask.count}"
        )
    score_fn = CRITERIA[criterion] if isinstance(criterion, str) else criterion

    sampled = spectrum.eigenvectors[mask.observed == 1.0]
    chosen: list[int] = []
    remaining = list(range(n))
    for _ in range(band_size):
        cand = np.array(remaining)
        base = sampled[:, chosen]
        stack = np.concatenate(
            [np.broadcast_to(base, (cand.size,) + base.shape), sampled[:, cand].T[:, :, None]],
            axis=2,
        )
        sv = np.linalg.svd(stack, compute_uv=False)
        if np.all(sv.min(axis=-1) <= _ZERO_SV):
            scores = sv.sum(axis=-1)
        else:
            scores = np.asarray(score_fn(sv), dtype=float)
        pick = int(cand[_argmax_lowest(scores)])
        chosen.append(pick)
        remaining.remove(pick)
    return FrequencySet(tuple(sorted(chosen)))


def build_projector(spectrum: LaplacianSpectrum, band: FrequencySet) -> BandlimitProjector:
    idx = band.as_array()
    if idx.size and idx[-1] >= spectrum.n:
        raise ContractError("frequency index out of range")
    u_f = np.ascontiguousarray(spectrum.eigenvectors[:, idx])
    B = u_f @ u_f.T
    B = 0.5 * (B + B.T)
    B.setflags(write=False)
    u_f.setflags(write=False)
    return BandlimitProjector(matrix=B, band=band, u_f=u_f)


def apply_mask(mask: SamplingMask, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != mask.n:
        raise ContractError(f"signal length {x.shape[0]} does not match mask length {mask.n}")
    if x.ndim == 1:
        return mask.observed * x
    return mask.observed[:, None] * x


def check_sampling_condition(mask: SamplingMask, projector: BandlimitProjector) -> float:
    """Smallest singular value of ``D_S U_F``; positive means the band is recoverable."""
    if projector.band_size == 0:
        return 0.0
    sv = np.linalg.svd(apply_mask(mask, projector.u_f), compute_uv=False)
    return float(sv.min()) if sv.size else 0.0
