"""Online adaptive filters for bandlimited graph signals.

All step functions take a :class:`FilterState` whose ``estimate`` is either a
length-``n`` vector or an ``(n, R)`` array holding ``R`` independent runs as
columns; ``y`` must have the same shape. States are never mutated in place.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .graph import ContractError
from .sampling import BandlimitProjector, IdentifiabilityError, SamplingMask, apply_mask

RESIDUAL_FLOOR = 1e-6


class FilterKind(str, Enum):
    GLMS = "GLMS"
    GLMP = "GLMP"
    GSIGN = "GSIGN"
    GNS = "GNS"
    GNS_EXACT = "GNS_EXACT"

    @property
    def label(self) -> str:
        return {"GSIGN": "G-Sign", "GNS_EXACT": "GNS-exact"}.get(self.value, self.value)


class FilterConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FilterConfig:
    """Algorithm choice and its hyperparameters.

    ``moment_abs`` is E|w| for GNS; leave it ``None`` to have the harness fill
    it in from the noise model. ``spectral_sign`` switches GNS to taking the
    sign after projecting the error onto the band instead of on the vertices.
    """

    kind: FilterKind
    step_size: float
    p_exponent: float = 1.2
    moment_abs: float | None = None
    spectral_sign: bool = False
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", FilterKind(self.kind))
        if not self.step_size > 0:
            raise FilterConfigError("step_size must be positive")
        if self.kind is FilterKind.GLMP and not 1.0 <= self.p_exponent <= 2.0:
            raise FilterConfigError("GLMP exponent must lie in [1, 2]")
        if self.moment_abs is not None and not self.moment_abs > 0:
            raise FilterConfigError("moment_abs must be positive")

    @property
    def label(self) -> str:
        return self.name or self.kind.label

    def with_step(self, mu: float) -> "FilterConfig":
        return dataclasses.replace(self, step_size=float(mu))


@dataclass(frozen=True)
class NormalizerMatrix:
    m: np.ndarray
    r_scalar: float | None
    condition: float
    floor_events: int = 0


@dataclass(frozen=True)
class FilterState:
    estimate: np.ndarray
    projector: BandlimitProjector
    mask: SamplingMask
    normalized_projector: np.ndarray | None = None
    normalizer: NormalizerMatrix | None = None
    t: int = 0
    floor_events: int = 0

    def advance(self, delta: np.ndarray, floor_events: int = 0) -> "FilterState":
        return dataclasses.replace(
            self,
            estimate=self.estimate + delta,
            t=self.t + 1,
            floor_events=self.floor_events + floor_events,
        )


def sign(v: np.ndarray) -> np.ndarray:
    """Elementwise sign with sign(0) = 0."""
    return np.sign(v)


def masked_error(state: FilterState, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != state.estimate.shape:
        raise ContractError(f"observation shape {y.shape} != estimate shape {state.estimate.shape}")
    return apply_mask(state.mask, y - state.estimate)


def glms_step(state: FilterState, y, mu: float) -> FilterState:
    e = masked_error(state, y)
    return state.advance(mu * (state.projector.matrix @ e))


def glmp_step(state: FilterState, y, mu: float, p: float) -> FilterState:
    """Stochastic gradient step on the p-th power error.

    The update direction is ``B (|e|**(p-1) * sign(e))``, so p = 2 recovers
    GLMS and p = 1 recovers G-Sign.
    """
    e = masked_error(state, y)
    g = np.abs(e) ** (p - 1.0) * sign(e)
    return state.advance(mu * (state.projector.matrix @ g))


def gsign_step(state: FilterState, y, mu_s: float) -> FilterState:
    e = masked_error(state, y)
    return state.advance(mu_s * (state.projector.matrix @ sign(e)))


def build_gns_normalizer(
    projector: BandlimitProjector, mask: SamplingMask, moment_abs: float
) -> tuple[NormalizerMatrix, np.ndarray]:
    """Precompute the fixed GNS normalizer ``M`` and projector ``B_n``.

    ``R = I / moment_abs``, ``M = (U_F^T D_S R U_F)^{-1}`` and
    ``B_n = U_F M U_F^T``.
    """
    if not moment_abs > 0:
        raise FilterConfigError("moment_abs must be positive")
    u_f = projector.u_f
    sampled = apply_mask(mask, u_f)
    sv = np.linalg.svd(sampled, compute_uv=False) if u_f.size else np.zeros(0)
    sigma_min = float(sv.min()) if sv.size else 0.0
    if sigma_min**2 <= 1e-10:
        raise IdentifiabilityError(
            f"U_F^T D_S U_F is singular: smallest singular value of D_S U_F is {sigma_min:.3g}"
        )
    r = 1.0 / moment_abs
    inner = r * (u_f.T @ sampled)
    m = np.linalg.solve(inner, np.eye(inner.shape[0]))
    m = 0.5 * (m + m.T)
    b_n = u_f @ m @ u_f.T
    b_n = 0.5 * (b_n + b_n.T)
    cond = float((sv.max() / sigma_min) ** 2)
    return NormalizerMatrix(m=m, r_scalar=r, condition=cond), b_n


def _require_normalizer(state: FilterState):
    if state.normalized_projector is None or state.normalizer is None:
        raise FilterConfigError("GNS step needs a precomputed normalizer (see build_gns_normalizer)")


def gns_step(state: FilterState, y, mu_n: float) -> FilterState:
    _require_normalizer(state)
    e = masked_error(state, y)
    return state.advance(mu_n * (state.normalized_projector @ sign(e)))


def gns_spectral_sign_step(state: FilterState, y, mu_n: float) -> FilterState:
    """GNS variant taking the sign of the band coefficients of the error."""
    _require_normalizer(state)
    e = masked_error(state, y)
    u_f = state.projector.u_f
    return state.advance(mu_n * (u_f @ (state.normalizer.m @ sign(u_f.T @ e))))


def exact_normalizer(
    projector: BandlimitProjector,
    mask: SamplingMask,
    y,
    x_hat,
    floor: float = RESIDUAL_FLOOR,
) -> NormalizerMatrix:
    """Per-step normalizer from the current residual magnitudes.

    Observed residuals smaller than ``floor`` are clamped to ``floor`` before
    inversion; the number of clamped entries is reported in ``floor_events``.
    """
    y = np.asarray(y, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if y.shape != x_hat.shape or y.ndim != 1:
        raise ContractError("y and x_hat must be vectors of equal length")
    resid = np.abs(y - x_hat)
    observed = mask.observed == 1.0
    small = observed & (resid < floor)
    resid = np.where(small, floor, resid)
    weights = np.where(observed, 1.0 / np.where(observed, resid, 1.0), 0.0)
    u_f = projector.u_f
    inner = u_f.T @ (weights[:, None] * u_f)
    m = np.linalg.solve(inner, np.eye(inner.shape[0]))
    m = 0.5 * (m + m.T)
    return NormalizerMatrix(
        m=m, r_scalar=None, condition=float(np.linalg.cond(inner)), floor_events=int(small.sum())
    )


def gns_exact_step(state: FilterState, y, mu_n: float, floor: float = RESIDUAL_FLOOR) -> FilterState:
    y = np.asarray(y, dtype=float)
    e = masked_error(state, y)
    u_f = state.projector.u_f
    x = state.estimate
    if x.ndim == 1:
        nm = exact_normalizer(state.projector, state.mask, y, x, floor)
        return state.advance(mu_n * (u_f @ (nm.m @ (u_f.T @ sign(e)))), nm.floor_events)
    delta = np.empty_like(x)
    events = 0
    for r in range(x.shape[1]):
        nm = exact_normalizer(state.projector, state.mask, y[:, r], x[:, r], floor)
        delta[:, r] = mu_n * (u_f @ (nm.m @ (u_f.T @ sign(e[:, r]))))
        events += nm.floor_events
    return state.advance(delta, events)


def init_state(
    config: FilterConfig,
    projector: BandlimitProjector,
    mask: SamplingMask,
    estimate,
) -> FilterState:
    """Fresh filter state, precomputing ``B_n`` when the algorithm needs it."""
    estimate = np.array(estimate, dtype=float)
    normalizer = b_n = None
    if config.kind is FilterKind.GNS:
        if config.moment_abs is None:
            raise FilterConfigError("GNS needs moment_abs")
        normalizer, b_n = build_gns_normalizer(projector, mask, config.moment_abs)
    return FilterState(
        estimate=estimate,
        projector=projector,
        mask=mask,
        normalized_projector=b_n,
        normalizer=normalizer,
    )


def step(config: FilterConfig, state: FilterState, y) -> FilterState:
    """Dispatch one update according to ``config.kind``."""
    mu = config.step_size
    kind = config.kind
    if kind is FilterKind.GLMS:
        return glms_step(state, y, mu)
    if kind is FilterKind.GLMP:
        return glmp_step(state, y, mu, config.p_exponent)
    if kind is FilterKind.GSIGN:
        return gsign_step(state, y, mu)
    if kind is FilterKind.GNS:
        if config.spectral_sign:
            return gns_spectral_sign_step(state, y, mu)
        return gns_step(state, y, mu)
    if kind is FilterKind.GNS_EXACT:
        return gns_exact_step(state, y, mu)
    raise FilterConfigError(f"unsupported filter kind {kind}")
