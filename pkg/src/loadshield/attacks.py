"""Attack drivers: optimal MILP attacks, the PGD baseline, the brute-force
oracle, and an embarrassingly parallel batch runner.

Every per-sample attack is a pure function of (model, sample, spec,
imputation), so batch results are identical for any worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bounds, milp
from .dataset import N_FLEX, Dataset, ImputationVector
from .metrics import BoxStats, box_stats
from .network import Plnn, forward_batch, grad_input


@dataclass(frozen=True)
class PgdConfig:
    steps: int = 40
    step_size: float | None = None  # defaults to radius / 10
    restarts: int = 5
    seed: int = 0


@dataclass(frozen=True)
class AttackSpec:
    kind: str  # "integrity" | "availability"
    mode: str  # "max" | "min"
    radius: float = 0.0  # integrity only
    budget: int = 0  # availability only
    imputation: str = "zero"  # availability only
    engine: str = "milp"  # "milp" | "pgd" (integrity) | "bruteforce" (availability)
    pgd: PgdConfig = field(default_factory=PgdConfig)
    node_limit: int = 200_000

    def __post_init__(self):
        if self.kind not in ("integrity", "availability"):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.mode not in ("max", "min"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.kind == "integrity" and self.radius < 0:
            raise ValueError("radius must be >= 0")
        if self.kind == "availability" and not 0 <= self.budget <= N_FLEX:
            raise ValueError(f"budget must be in [0, {N_FLEX}]")

    def label(self) -> str:
        if self.kind == "availability":
            return f"AVAIL({self.mode}, {self.imputation}, {self.budget})"
        return f"INTEG({self.mode}, {self.radius})"


@dataclass(frozen=True)
class SolveStats:
    nodes: int
    wall_time: float


@dataclass
class AttackResult:
    clean_forecast: float
    adversarial_forecast: float
    mpe: float  # signed percent deviation from the clean forecast
    adversarial_input: np.ndarray | None = None  # integrity
    mask: np.ndarray | None = None  # availability, 1 = available
    missing_count: int | None = None
    stats: SolveStats = SolveStats(nodes=0, wall_time=0.0)


def _mpe_term(adv: float, clean: float) -> float:
    return float((adv - clean) / clean * 100.0)


def masks_within_budget(budget: int) -> np.ndarray:
    """All 0/1 mask vectors with at most `budget` zeros, in descending
    lexicographic order (bit 0 most significant), so the all-available
    mask comes first and argmax/argmin tie-breaking is well defined."""
    if not 0 <= budget <= N_FLEX:
        raise ValueError(f"budget must be in [0, {N_FLEX}]")
    rows = []
    for word in range(2**N_FLEX - 1, -1, -1):
        bits = [(word >> (N_FLEX - 1 - j)) & 1 for j in range(N_FLEX)]
        if N_FLEX - sum(bits) <= budget:
            rows.append(bits)
    return np.array(rows, dtype=int)


def impute(x: np.ndarray, mask: np.ndarray, imputation: ImputationVector) -> np.ndarray:
    """Blocked flexible entries are replaced by the imputation values."""
    z = np.asarray(x, dtype=float).copy()
    m = np.asarray(mask, dtype=float)
    z[:N_FLEX] = m * z[:N_FLEX] + (1.0 - m) * imputation.values[:N_FLEX]
    return z


def impute_batch(X: np.ndarray, masks: np.ndarray, imputation: ImputationVector) -> np.ndarray:
    """(N, p) x (M, 6) -> (N, M, p) imputed inputs."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    m = masks.shape[0]
    Z = np.broadcast_to(X[:, None, :], (n, m, p)).copy()
    c = imputation.values[:N_FLEX]
    Z[:, :, :N_FLEX] = masks[None, :, :] * X[:, None, :N_FLEX] + (1.0 - masks[None, :, :]) * c
    return Z


def forecast_extremes(model: Plnn, X: np.ndarray, imputation: ImputationVector, budget: int):
    """Vectorized brute force over masks for every row of X.

    Returns (f_lo, f_hi, masks_lo, masks_hi); the first mask in
    enumeration order wins exact ties.
    """
    masks = masks_within_budget(budget)
    n = X.shape[0]
    Z = impute_batch(X, masks, imputation)
    F = forward_batch(model, Z.reshape(n * masks.shape[0], -1)).reshape(n, masks.shape[0])
    hi_idx = np.argmax(F, axis=1)
    lo_idx = np.argmin(F, axis=1)
    rows = np.arange(n)
    return F[rows, lo_idx], F[rows, hi_idx], masks[lo_idx], masks[hi_idx]


# --- per-sample attacks -------------------------------------------------------


def integrity_milp(model: Plnn, x, spec: AttackSpec) -> AttackResult:
    """Globally optimal forecast extremum over the perturbation ball."""
    t0 = time.perf_counter()
    x = np.asarray(x, dtype=float)
    clean = forward_batch(model, x[None, :])[0]
    lo0, hi0 = bounds.init_bounds_integrity(x, spec.radius)
    stack = bounds.propagate(model, lo0, hi0)
    enc = milp.encode_integrity(model, x, spec.radius, stack, spec.mode)
    sol = milp.solve_bb(
        enc.problem, node_limit=spec.node_limit, initial=milp.embed_forward(enc, model, x)
    )
    if sol.status not in ("Optimal", "NodeLimit"):
        raise RuntimeError(f"integrity MILP came back {sol.status}")
    adv_input = sol.x_cont[enc.input_slice].copy()
    adv = forward_batch(model, adv_input[None, :])[0]
    return AttackResult(
        clean_forecast=float(clean),
        adversarial_forecast=float(adv),
        mpe=_mpe_term(adv, clean),
        adversarial_input=adv_input,
        stats=SolveStats(nodes=sol.nodes_explored, wall_time=time.perf_counter() - t0),
    )


def integrity_pgd(model: Plnn, x, spec: AttackSpec, sample_index: int = 0) -> AttackResult:
    """Sign-gradient ascent baseline; always a valid one-sided bound on
    the MILP optimum. Restart 0 starts from the clean point, so the
    clean forecast wins exact ties."""
    t0 = time.perf_counter()
    x = np.asarray(x, dtype=float)
    cfg = spec.pgd
    eps = spec.radius
    step = cfg.step_size if cfg.step_size is not None else eps / 10.0
    sgn = 1.0 if spec.mode == "max" else -1.0
    clean = forward_batch(model, x[None, :])[0]

    best_y = None
    best_z = x
    restarts = max(1, cfg.restarts) if cfg.steps > 0 else 1  # no steps: nothing to explore
    for restart in range(restarts):
        if restart == 0 or eps == 0.0:
            delta = np.zeros(N_FLEX)
        else:
            rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, sample_index, restart)))
            delta = rng.uniform(-eps, eps, size=N_FLEX)
        z = x.copy()
        for _ in range(cfg.steps):
            z[:N_FLEX] = x[:N_FLEX] + delta
            g = grad_input(model, z)[:N_FLEX]
            delta = np.clip(delta + step * sgn * np.sign(g), -eps, eps)
        z[:N_FLEX] = x[:N_FLEX] + delta
        y = forward_batch(model, z[None, :])[0]
        if best_y is None or (y > best_y if spec.mode == "max" else y < best_y):
            best_y, best_z = y, z.copy()
    return AttackResult(
        clean_forecast=float(clean),
        adversarial_forecast=float(best_y),
        mpe=_mpe_term(best_y, clean),
        adversarial_input=best_z,
        stats=SolveStats(nodes=0, wall_time=time.perf_counter() - t0),
    )


def availability_milp(
    model: Plnn, x, spec: AttackSpec, imputation: ImputationVector
) -> AttackResult:
    """Globally optimal blocking mask within the budget.

    The certificate is the forward pass on the imputed input, not the
    solver's internal trajectory.
    """
    t0 = time.perf_counter()
    x = np.asarray(x, dtype=float)
    clean = forward_batch(model, x[None, :])[0]
    lo0, hi0 = bounds.init_bounds_availability(x, imputation)
    stack = bounds.propagate(model, lo0, hi0)
    enc = milp.encode_availability(model, x, imputation, spec.budget, stack, spec.mode)
    init = milp.embed_forward(enc, model, x, mask=np.ones(N_FLEX))
    sol = milp.solve_bb(enc.problem, node_limit=spec.node_limit, initial=init)
    if sol.status not in ("Optimal", "NodeLimit"):
        raise RuntimeError(f"availability MILP came back {sol.status}")
    mask = sol.x_bin[enc.mask_slice].copy()
    adv = forward_batch(model, impute(x, mask, imputation)[None, :])[0]
    if abs(adv - sol.objective) > 1e-6:
        raise RuntimeError(
            f"mask does not reproduce the MILP objective: {adv} vs {sol.objective}"
        )
    return AttackResult(
        clean_forecast=float(clean),
        adversarial_forecast=float(adv),
        mpe=_mpe_term(adv, clean),
        mask=mask,
        missing_count=int(N_FLEX - mask.sum()),
        stats=SolveStats(nodes=sol.nodes_explored, wall_time=time.perf_counter() - t0),
    )


def availability_bruteforce(
    model: Plnn, x, spec: AttackSpec, imputation: ImputationVector
) -> AttackResult:
    """Exhaustive mask enumeration; at most 2^6 forward passes.

    Ties go to the first mask in descending lexicographic order, so the
    objective comparison against the MILP is exact while the reported
    mask identity is deterministic.
    """
    t0 = time.perf_counter()
    x = np.asarray(x, dtype=float)
    clean = forward_batch(model, x[None, :])[0]
    masks = masks_within_budget(spec.budget)
    Z = impute_batch(x[None, :], masks, imputation)[0]
    F = forward_batch(model, Z)
    best = int(np.argmax(F)) if spec.mode == "max" else int(np.argmin(F))
    mask = masks[best]
    return AttackResult(
        clean_forecast=float(clean),
        adversarial_forecast=float(F[best]),
        mpe=_mpe_term(F[best], clean),
        mask=mask.copy(),
        missing_count=int(N_FLEX - mask.sum()),
        stats=SolveStats(nodes=len(masks), wall_time=time.perf_counter() - t0),
    )


def run_attack(
    model: Plnn,
    x,
    spec: AttackSpec,
    imputation: ImputationVector | None = None,
    sample_index: int = 0,
) -> AttackResult:
    """Dispatch one sample to the engine named by the spec."""
    if spec.kind == "availability":
        if imputation is None:
            raise ValueError("availability attacks need an imputation vector")
        if spec.engine == "bruteforce":
            return availability_bruteforce(model, x, spec, imputation)
        if spec.engine == "milp":
            return availability_milp(model, x, spec, imputation)
        raise ValueError(f"unknown availability engine {spec.engine!r}")
    if spec.engine == "pgd":
        return integrity_pgd(model, x, spec, sample_index)
    if spec.engine == "milp":
        return integrity_milp(model, x, spec)
    raise ValueError(f"unknown integrity engine {spec.engine!r}")


# --- batch execution ----------------------------------------------------------


@dataclass
class BatchSummary:
    spec: AttackSpec
    n: int
    mpe_stats: BoxStats | None
    mean_ms: float
    failures: list[tuple[int, str]]


@dataclass
class BatchResult:
    results: list[AttackResult | None]  # None where the sample failed
    summary: BatchSummary
    wall_times: list[float]  # seconds per sample, dataset order


_POOL_STATE: dict = {}


def _pool_init(model, X, spec, imputation):
    _POOL_STATE.update(model=model, X=X, spec=spec, imputation=imputation)


def _pool_run(i: int):
    t0 = time.perf_counter()
    try:
        result = run_attack(
            _POOL_STATE["model"],
            _POOL_STATE["X"][i],
            _POOL_STATE["spec"],
            _POOL_STATE["imputation"],
            sample_index=i,
        )
        return i, result, time.perf_counter() - t0, None
    except Exception as exc:  # failures are data, not crashes
        return i, None, time.perf_counter() - t0, repr(exc)


def batch_attack(
    model: Plnn,
    dataset: Dataset,
    spec: AttackSpec,
    imputation: ImputationVector | None = None,
    workers: int = 1,
) -> BatchResult:
    """Run the per-sample attack over the whole dataset.

    Results come back in dataset order regardless of completion order;
    a failing sample is recorded and the batch continues.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    n = len(dataset)
    outcomes: list = [None] * n
    if workers == 1:
        _pool_init(model, dataset.X, spec, imputation)
        for i in range(n):
            outcomes[i] = _pool_run(i)
    else:
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_pool_init,
            initargs=(model, dataset.X, spec, imputation),
        ) as pool:
            for out in pool.map(_pool_run, range(n), chunksize=max(1, n // (8 * workers))):
                outcomes[out[0]] = out

    results = [o[1] for o in outcomes]
    wall_times = [o[2] for o in outcomes]
    failures = [(o[0], o[3]) for o in outcomes if o[3] is not None]
    mpes = [r.mpe for r in results if r is not None]
    summary = BatchSummary(
        spec=spec,
        n=n,
        mpe_stats=box_stats(mpes) if mpes else None,
        mean_ms=float(np.mean(wall_times) * 1000.0) if wall_times else 0.0,
        failures=failures,
    )
    return BatchResult(results=results, summary=summary, wall_times=wall_times)
