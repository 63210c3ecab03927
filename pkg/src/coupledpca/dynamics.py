"""Euler integration of the learning-rule flows with trajectory recording.

A single trajectory is integrated strictly sequentially; distinct trials own their
state and RNG stream, so callers may run them concurrently.  Multi-stage chains can
run either sequentially (stage p starts only after stages 1..p-1 finished) or in
parallel (all stages advance each step).

Every run terminates with exactly one status:

``converged``   sup-norm of the flow fell below ``convergence_tol``
``step-cap``    the step budget was exhausted
``diverged``    some state entry exceeded ``divergence_cap``
``singular``    the rule hit one of its singularity guards
``nan``         a non-finite value appeared

A run that settles on the zero-vector fixed point reports ``converged`` with a final
``w`` norm near zero; inspect :attr:`TrajectoryRecord.final_w_norm` to tell the two
apart.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateInputError, DimensionError, SingularityError
from .linmodel import EigenPair, SpectralModel
from .rules import ChainState, EigenState, rhs_arbitrary, rhs_deflated_matrix, stage_rhs
from .validation import as_vector, check_index

__all__ = [
    "STATUSES",
    "IntegratorConfig",
    "TrajectoryRecord",
    "ChainRunResult",
    "align_sign",
    "random_unit_vector",
    "euler_run",
    "run_stage",
    "run_chain",
]

STATUS_CONVERGED = "converged"
STATUS_STEP_CAP = "step-cap"
STATUS_DIVERGED = "diverged"
STATUS_SINGULAR = "singular"
STATUS_NAN = "nan"
STATUSES = (STATUS_CONVERGED, STATUS_STEP_CAP, STATUS_DIVERGED, STATUS_SINGULAR, STATUS_NAN)

SCHEMES = ("sequential", "parallel")


@dataclass(frozen=True)
class IntegratorConfig:
    """Euler integrator settings: step width gamma, step budget, and termination tests."""

    gamma: float
    steps: int
    normalize_each_step: bool = False
    convergence_tol: float = 1e-9
    divergence_cap: float = 1e6
    sample_stride: int = 100

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise DimensionError("gamma must be positive")
        if self.steps < 1:
            raise DimensionError("steps must be at least 1")
        if self.convergence_tol <= 0.0 or self.divergence_cap <= 0.0:
            raise DimensionError("tolerances must be positive")
        if self.sample_stride < 1:
            raise DimensionError("sample_stride must be at least 1")


@dataclass
class TrajectoryRecord:
    """Sampled diagnostics of one integrated stage plus its termination status.

    ``vec_err`` is the sign-aligned distance to the target eigenvector and
    ``val_err`` the absolute eigenvalue error; both are NaN when no target is given.
    On ``nan``/``diverged`` terminations any non-finite entries of ``final`` are
    zeroed; the status is the authoritative outcome for such runs.
    """

    stage: int
    status: str
    steps_taken: int
    final: EigenState
    step: np.ndarray = field(repr=False)
    vec_err: np.ndarray = field(repr=False)
    val_err: np.ndarray = field(repr=False)
    w_norm: np.ndarray = field(repr=False)
    l: np.ndarray = field(repr=False)

    @property
    def final_w_norm(self) -> float:
        return float(np.linalg.norm(self.final.w))

    @property
    def final_vec_err(self) -> float:
        return float(self.vec_err[-1])

    @property
    def final_val_err(self) -> float:
        return float(self.val_err[-1])

    def rows(self):
        """Iterate (step, stage, vec_err, val_err, w_norm, l) sample tuples."""
        for i in range(self.step.shape[0]):
            yield (
                int(self.step[i]),
                self.stage,
                float(self.vec_err[i]),
                float(self.val_err[i]),
                float(self.w_norm[i]),
                float(self.l[i]),
            )


@dataclass
class ChainRunResult:
    """Outcome of a multi-stage run: per-stage records, final estimates, flags."""

    records: list
    chain: ChainState
    converged: list


def align_sign(w, v):
    """Distance from w to the closer of +v / -v, with the minimizing sign.

    Eigenvectors are defined up to sign, so errors are measured this way throughout.
    """
    w = as_vector(w, name="w")
    v = as_vector(v, w.shape[0], name="v")
    if not np.any(v):
        raise DegenerateInputError("reference vector must be nonzero")
    plus = float(np.linalg.norm(w - v))
    minus = float(np.linalg.norm(w + v))
    return (plus, 1) if plus <= minus else (minus, -1)


def random_unit_vector(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform direction on the unit sphere."""
    while True:
        w = rng.standard_normal(n)
        norm = np.linalg.norm(w)
        if norm > 0.0:
            return w / norm


class _Sampler:
    def __init__(self, stage, target):
        self.stage = stage
        self.target = target
        self.steps = []
        self.vec_err = []
        self.val_err = []
        self.w_norm = []
        self.l = []

    def add(self, k, w, l):
        if self.target is not None:
            err, _ = align_sign(w, self.target.vector)
            self.vec_err.append(err)
            self.val_err.append(abs(l - self.target.value))
        else:
            self.vec_err.append(np.nan)
            self.val_err.append(np.nan)
        self.steps.append(k)
        self.w_norm.append(float(np.linalg.norm(w)))
        self.l.append(float(l))

    def record(self, status, steps_taken, w, l):
        return TrajectoryRecord(
            stage=self.stage,
            status=status,
            steps_taken=steps_taken,
            final=EigenState(np.where(np.isfinite(w), w, 0.0), l if np.isfinite(l) else 0.0),
            step=np.asarray(self.steps, dtype=int),
            vec_err=np.asarray(self.vec_err),
            val_err=np.asarray(self.val_err),
            w_norm=np.asarray(self.w_norm),
            l=np.asarray(self.l),
        )


def euler_run(rhs, initial: EigenState, config: IntegratorConfig, *,
              target: EigenPair | None = None, stage: int = 1) -> TrajectoryRecord:
    """Integrate state <- state + gamma * rhs(state) until a termination test fires.

    ``rhs`` maps ``(w, l)`` to ``(wdot, ldot)``.  The convergence test runs before
    the first step, so starting exactly on a fixed point converges at step 0.  With
    ``normalize_each_step`` the eigenvector estimate is rescaled to unit length
    after every step.  All failure modes end up as recorded statuses, never as
    exceptions.
    """
    gamma = config.gamma
    w = np.array(initial.w, dtype=float)
    l = float(initial.l)
    sampler = _Sampler(stage, target)

    status = STATUS_STEP_CAP
    k = 0
    sampled_at = -1
    for k in range(config.steps + 1):
        sup_state = max(float(np.max(np.abs(w))), abs(l))
        finite_state = sup_state == sup_state  # NaN never compares equal
        if k % config.sample_stride == 0 and finite_state:
            sampler.add(k, w, l)
            sampled_at = k
        if not finite_state:
            status = STATUS_NAN
            break
        try:
            wdot, ldot = rhs(w, l)
        except SingularityError:
            status = STATUS_SINGULAR
            break
        sup_dot = max(float(np.max(np.abs(wdot))), abs(ldot))
        if sup_dot != sup_dot:
            status = STATUS_NAN
            break
        if sup_dot < config.convergence_tol:
            status = STATUS_CONVERGED
            break
        if sup_state > config.divergence_cap:
            status = STATUS_DIVERGED
            break
        if k == config.steps:
            status = STATUS_STEP_CAP
            break
        w = w + gamma * wdot
        l = l + gamma * ldot
        if config.normalize_each_step:
            norm = np.linalg.norm(w)
            if norm > 0.0:
                w = w / norm

    if sampled_at != k and np.all(np.isfinite(w)) and np.isfinite(l):
        sampler.add(k, w, l)
    return sampler.record(status, k, w, l)


def _as_covariance_and_targets(model_or_C, targets, count):
    if isinstance(model_or_C, SpectralModel):
        C = model_or_C.covariance
        if targets is None:
            targets = model_or_C.pairs(count)
    else:
        C = np.asarray(model_or_C, dtype=float)
    if targets is not None and len(targets) < count:
        raise DimensionError(f"need {count} targets, got {len(targets)}")
    return C, targets


def run_stage(model_or_C, rule: str, p: int, config: IntegratorConfig, *,
              known=(), w0, l0: float, target: EigenPair | None = None) -> TrajectoryRecord:
    """Integrate stage ``p`` of ``rule`` with the preceding pairs held fixed.

    ``known`` must hold exactly p-1 (vector, value) pairs; pass the true leading
    pairs to reproduce pinned-prefix experiments, or previously converged
    estimates for a sequential chain.
    """
    if isinstance(model_or_C, SpectralModel):
        C = model_or_C.covariance
        if target is None:
            target = model_or_C.pair(p)
    else:
        C = np.asarray(model_or_C, dtype=float)
    known = list(known)
    if len(known) != p - 1:
        raise DimensionError(f"stage {p} needs {p - 1} preceding pairs, got {len(known)}")
    rhs = stage_rhs(C, rule, known)
    return euler_run(rhs, EigenState(w0, l0), config, target=target, stage=p)


def _resolve_l0(l0, rng, m):
    """Return per-stage initial multipliers, or None for the deferred policy."""
    if l0 == "rayleigh":
        return None
    if isinstance(l0, (tuple, list)) and len(l0) == 2:
        lo, hi = float(l0[0]), float(l0[1])
        return rng.uniform(lo, hi, size=m)
    return np.full(m, float(l0))


def run_chain(model_or_C, rule: str, m: int, scheme: str, config: IntegratorConfig, *,
              seed: int = 0, l0="rayleigh", targets=None) -> ChainRunResult:
    """Estimate the leading m eigenpairs with a chain of coupled single-pair rules.

    ``rule`` is ``"deflation"`` or ``"arbitrary"``.  The sequential scheme freezes
    stages 1..p-1 while integrating stage p and skips later stages once a
    prerequisite fails; the parallel scheme advances all stages at every step.
    Initial eigenvector estimates are seeded uniform directions.  ``l0`` is either
    a fixed value, a ``(lo, hi)`` uniform range, or ``"rayleigh"`` to start each
    stage at the projected variance of its own initial direction.
    """
    if rule not in ("deflation", "arbitrary"):
        raise ValueError(f"chain rule must be 'deflation' or 'arbitrary', got {rule!r}")
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    C, targets = _as_covariance_and_targets(model_or_C, targets, m)
    n = C.shape[0]
    m = check_index(m, n, "m")

    rng = np.random.default_rng(seed)
    W0 = rng.standard_normal((n, m))
    W0 /= np.linalg.norm(W0, axis=0)
    L0 = _resolve_l0(l0, rng, m)

    if scheme == "sequential":
        return _run_sequential(C, rule, m, config, W0, L0, targets)
    return _run_parallel(C, rule, m, config, W0, L0, targets)


def _stage_target(targets, p):
    return None if targets is None else targets[p - 1]


def _run_sequential(C, rule, m, config, W0, L0, targets):
    W = W0.copy()
    L = np.zeros(m)
    records = []
    converged = []
    for p in range(1, m + 1):
        known = [(W[:, i], L[i]) for i in range(p - 1)]
        w0 = W0[:, p - 1]
        if L0 is None:
            removed = sum(L[i] * np.outer(W[:, i], W[:, i]) for i in range(p - 1))
            l0 = float(w0 @ (C - removed) @ w0) if p > 1 else float(w0 @ C @ w0)
        else:
            l0 = float(L0[p - 1])
        rec = run_stage(C, rule, p, config, known=known, w0=w0, l0=l0,
                        target=_stage_target(targets, p))
        W[:, p - 1] = rec.final.w
        L[p - 1] = rec.final.l
        records.append(rec)
        ok = rec.status == STATUS_CONVERGED
        converged.append(ok)
        if not ok:
            break
    return ChainRunResult(records, ChainState(W[:, : len(records)], L[: len(records)]),
                          converged)


def _parallel_flow(C, rule, W, L):
    if rule == "deflation":
        return rhs_deflated_matrix(C, ChainState(W, L))
    m = W.shape[1]
    Wdot = np.empty_like(W)
    Ldot = np.empty(m)
    chain = ChainState(W, L)
    for p in range(1, m + 1):
        wd, ld = rhs_arbitrary(C, chain, p)
        Wdot[:, p - 1] = wd
        Ldot[p - 1] = ld
    return Wdot, Ldot


def _run_parallel(C, rule, m, config, W0, L0, targets):
    W = W0.copy()
    if L0 is None:
        L = np.einsum("ij,ij->j", W, C @ W)
    else:
        L = np.asarray(L0, dtype=float).copy()
    samplers = [_Sampler(p, _stage_target(targets, p)) for p in range(1, m + 1)]
    stage_sup = np.full(m, np.inf)

    status = STATUS_STEP_CAP
    k = 0
    sampled_at = -1
    for k in range(config.steps + 1):
        finite_state = bool(np.all(np.isfinite(W)) and np.all(np.isfinite(L)))
        if k % config.sample_stride == 0 and finite_state:
            for p, sampler in enumerate(samplers, start=1):
                sampler.add(k, W[:, p - 1], L[p - 1])
            sampled_at = k
        if not finite_state:
            status = STATUS_NAN
            break
        try:
            Wdot, Ldot = _parallel_flow(C, rule, W, L)
        except SingularityError:
            status = STATUS_SINGULAR
            break
        if not (np.all(np.isfinite(Wdot)) and np.all(np.isfinite(Ldot))):
            status = STATUS_NAN
            break
        stage_sup = np.maximum(np.max(np.abs(Wdot), axis=0), np.abs(Ldot))
        if float(np.max(stage_sup)) < config.convergence_tol:
            status = STATUS_CONVERGED
            break
        if max(float(np.max(np.abs(W))), float(np.max(np.abs(L)))) > config.divergence_cap:
            status = STATUS_DIVERGED
            break
        if k == config.steps:
            status = STATUS_STEP_CAP
            break
        W = W + config.gamma * Wdot
        L = L + config.gamma * Ldot
        if config.normalize_each_step:
            norms = np.linalg.norm(W, axis=0)
            W = W / np.where(norms > 0.0, norms, 1.0)

    records = []
    converged = []
    for p, sampler in enumerate(samplers, start=1):
        w, l = W[:, p - 1], L[p - 1]
        if sampled_at != k and np.all(np.isfinite(w)) and np.isfinite(l):
            sampler.add(k, w, l)
        stage_ok = status == STATUS_CONVERGED or (
            status == STATUS_STEP_CAP and stage_sup[p - 1] < config.convergence_tol
        )
        stage_status = STATUS_CONVERGED if stage_ok else status
        records.append(sampler.record(stage_status, k, w, l))
        converged.append(stage_ok)
    safe_W = np.where(np.isfinite(W), W, 0.0)
    safe_L = np.where(np.isfinite(L), L, 0.0)
    return ChainRunResult(records, ChainState(safe_W, safe_L), converged)
