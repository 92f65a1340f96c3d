"""Block resampling for dependent observations.

Every replicate draws from its own stream keyed by ``(seed, replicate_id)``,
so results do not depend on how replicates are spread over workers.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from joblib import Parallel, delayed

from .exceptions import InputError, LocalBoundError, NonConvergence

log = logging.getLogger(__name__)

SCHEMES = ("moving_block", "stationary", "iid")


@dataclass(frozen=True)
class ResamplePlan:
    scheme: str = "moving_block"
    block_length: int = 1
    n_replicates: int = 1000
    seed: int = 0
    taper: float | None = None  # cosine half-window as a fraction of the block, moving_block only

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InputError(f"scheme must be one of {SCHEMES}")
        if int(self.block_length) != self.block_length or self.block_length < 1:
            raise InputError("block_length must be a positive integer")
        if self.n_replicates < 1:
            raise InputError("n_replicates must be positive")
        if self.taper is not None:
            if self.scheme != "moving_block":
                raise InputError("tapering is only defined for moving_block")
            if not 0.0 < self.taper <= 0.5:
                raise InputError("taper half-window must lie in (0, 0.5]")

    def rng(self, replicate_id: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(int(replicate_id),)))

    def to_dict(self) -> dict:
        return asdict(self)


def default_block_length(horizon_days: int) -> int:
    """Five times the prediction horizon, for overlapping daily designs."""
    return 5 * int(horizon_days)


def resample_indices(plan: ResamplePlan, n: int, replicate_id: int) -> np.ndarray:
    if n < 1:
        raise InputError("sample size must be positive")
    L = int(plan.block_length)
    if L > n:
        raise InputError(f"block_length {L} exceeds sample size {n}")
    rng = plan.rng(replicate_id)
    if plan.scheme == "iid":
        return rng.integers(0, n, n)
    if plan.scheme == "moving_block":
        # Circular blocks, so every observation is equally likely to be drawn.
        starts = rng.integers(0, n, -(-n // L))
        return ((starts[:, None] + np.arange(L)) % n).ravel()[:n]
    new_block = rng.random(n) < 1.0 / L
    new_block[0] = True
    starts = rng.integers(0, n, n)
    head = np.maximum.accumulate(np.where(new_block, np.arange(n), 0))
    return (starts[head] + np.arange(n) - head) % n


def taper_weights(plan: ResamplePlan, n: int) -> np.ndarray | None:
    """Per-position weights (mean one within each block) for a tapered moving-block plan."""
    if plan.taper is None:
        return None
    L = int(plan.block_length)
    u = (np.arange(L) + 0.5) / L
    c = plan.taper
    w = np.ones(L)
    edge = np.minimum(u, 1.0 - u)
    ramp = edge < c
    w[ramp] = 0.5 * (1.0 - np.cos(np.pi * edge[ramp] / c))
    w /= w.mean()
    return np.tile(w, -(-n // L))[:n]


def _replicate_betas(design, plan, ids):
    from .qr import qr_fit

    out = []
    taper = taper_weights(plan, design.responses.size)
    for r in ids:
        idx = resample_indices(plan, design.responses.size, r)
        w = None
        if taper is not None or design.weights is not None:
            w = np.ones(idx.size) if taper is None else taper.copy()
            if design.weights is not None:
                w = w * design.weights[idx]
        try:
            out.append(qr_fit(design.subset(idx, w)).beta)
        except LocalBoundError as exc:
            log.debug("replicate %d failed: %s", r, exc)
            out.append(None)
    return out


def qr_boot_cov(design, plan: ResamplePlan, n_jobs: int = 1) -> np.ndarray:
    """Covariance of replicate coefficient vectors.

    Failed replicates are dropped; more than 5% failures raise NonConvergence.
    """
    ids = np.arange(plan.n_replicates)
    chunks = [c for c in np.array_split(ids, max(1, min(n_jobs if n_jobs > 0 else 8, ids.size))) if c.size]
    if len(chunks) == 1:
        results = _replicate_betas(design, plan, chunks[0])
    else:
        parts = Parallel(n_jobs=n_jobs)(delayed(_replicate_betas)(design, plan, c) for c in chunks)
        results = [b for part in parts for b in part]
    betas = [b for b in results if b is not None]
    failed = len(results) - len(betas)
    if failed > 0.05 * len(results):
        raise NonConvergence(f"{failed} of {len(results)} bootstrap replicates failed")
    if failed:
        log.warning("%d bootstrap replicates failed and were dropped", failed)
    B = np.array(betas)
    if B.shape[0] < 2:
        raise NonConvergence("fewer than two usable bootstrap replicates")
    cov = np.cov(B, rowvar=False, ddof=1).reshape(B.shape[1], B.shape[1])
    return 0.5 * (cov + cov.T)


__all__ = ["ResamplePlan", "resample_indices", "taper_weights", "qr_boot_cov", "default_block_length"]
