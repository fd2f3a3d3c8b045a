"""Projected-gradient solvers and contraction diagnostics.

``epsilon_pgd`` minimizes an objective over the range of a generator by
alternating a gradient step with a (possibly approximate) projection back
onto the range.  ``myopic_pgd`` handles signals that are a range point plus
an l-sparse deviation in an orthonormal basis: both blocks step against the
*same* gradient of the combined iterate, then re-project / re-threshold
independently — no inner alternating minimization.

The theory helpers convert curvature and incoherence constants into
per-iteration contraction factors for the optimality gap, and
``contraction_report`` measures how a recorded gap sequence actually behaved
against such a factor.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DivergenceError
from .generator import GeneratorNetwork
from .objective import (
    Objective,
    estimate_rsc_rss,
    latent_pair_sampler,
    minkowski_curvature,
    subspace_curvature,
    sum_pair_sampler,
    gradient,
    value,
)
from .projection import OrthoBasis, ProjectionConfig, hard_threshold_coeffs, project
from .seeding import check_seed

__all__ = [
    "SolverConfig",
    "IterationRecord",
    "IterationTrace",
    "ContractionReport",
    "epsilon_pgd",
    "myopic_pgd",
    "default_step_size",
    "contraction_report",
    "pgd_contraction_factor",
    "pgd_contraction_factor_alt",
    "myopic_contraction_factor",
    "myopic_contraction_factor_strict",
    "trace_to_csv",
    "trace_from_csv",
]

TRACE_COLUMNS = ("t", "f_value", "gap", "dist_to_truth", "proj_residual_sq", "wall_time_us")


@dataclass(frozen=True)
class SolverConfig:
    """Iteration budget and step policy for both solver modes.

    ``eta=None`` resolves to 1/beta-hat at solve time (exact curvature oracle
    for linear-generator least squares, sampled estimate otherwise).
    ``stop_gap`` ends the run early once the optimality gap falls to that
    level; it needs a known truth.  ``l`` is the sparsity budget of the
    myopic mode's deviation block.
    """

    eta: float | None = None
    iters: int = 100
    mode: str = "pgd"
    l: int = 0
    stop_gap: float | None = None
    seed: int = 0
    record_points: bool = False

    def __post_init__(self):
        if self.mode not in ("pgd", "myopic"):
            raise ConfigError(f"unknown solver mode {self.mode!r}")
        if self.eta is not None and not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if self.iters < 1:
            raise ConfigError(f"iters must be >= 1, got {self.iters}")
        if self.l < 0:
            raise ConfigError(f"sparsity l must be nonnegative, got {self.l}")
        if self.stop_gap is not None and self.stop_gap < 0:
            raise ConfigError(f"stop_gap must be nonnegative, got {self.stop_gap}")
        check_seed(self.seed)


@dataclass(frozen=True)
class IterationRecord:
    t: int
    f_value: float
    gap: float | None
    dist_to_truth: float | None
    proj_residual_sq: float
    wall_time: float  # seconds spent producing this record


@dataclass
class IterationTrace:
    """Everything a solve recorded: per-iteration rows plus final state."""

    records: list[IterationRecord]
    final_point: np.ndarray
    final_components: tuple[np.ndarray, np.ndarray] | None
    eta: float
    proj_time_total: float
    grad_time_total: float
    points: list[np.ndarray] | None = None
    sparse_nnz: list[int] | None = None

    def gaps(self) -> np.ndarray:
        if any(r.gap is None for r in self.records):
            raise ContractError("trace has no gap values; solve with a known truth")
        return np.array([r.gap for r in self.records])

    def f_values(self) -> np.ndarray:
        return np.array([r.f_value for r in self.records])


class _Recorder:
    def __init__(self, f_star, record_points):
        self.records = []
        self.points = [] if record_points else None
        self.f_star = f_star
        self.sparse_nnz = None

    def add(self, t, f, x, x_star, proj_residual_sq, wall):
        gap = None if self.f_star is None else f - self.f_star
        dist = None if x_star is None else float(np.linalg.norm(x - x_star))
        self.records.append(
            IterationRecord(
                t=t,
                f_value=f,
                gap=gap,
                dist_to_truth=dist,
                proj_residual_sq=proj_residual_sq,
                wall_time=wall,
            )
        )
        if self.points is not None:
            self.points.append(x.copy())


def default_step_size(objective: Objective, net: GeneratorNetwork,
                      basis: OrthoBasis | None = None, l: int = 0,
                      seed: int = 0) -> float:
    """1/beta-hat for the given problem.

    beta-hat comes from the exact curvature oracle when the objective is
    least squares and the generator is a single affine layer (over the range
    alone, or over the range-plus-sparse sum set when a basis is supplied),
    and from a sampled curvature estimate otherwise.
    """
    linear = net.d == 1 and net.layers[0].activation.kind == "identity"
    if objective.kind == "least-squares" and linear:
        W = net.layers[0].weights
        if basis is not None and l > 0:
            _, beta = minkowski_curvature(objective.A, W, basis, l, seed=seed)
        else:
            _, beta = subspace_curvature(objective.A, W)
    else:
        if basis is not None and l > 0:
            sampler = sum_pair_sampler(net, basis, l)
        else:
            sampler = latent_pair_sampler(net)
        beta = estimate_rsc_rss(objective, sampler, num_pairs=200, seed=seed).beta
    if not beta > 0:
        raise ContractError(f"estimated smoothness {beta} is not positive")
    return 1.0 / beta


def _prepare(objective, net, cfg, x_star):
    if x_star is not None:
        x_star = np.asarray(x_star, dtype=float)
        f_star = value(objective, x_star)
    else:
        f_star = None
    if cfg.stop_gap is not None and x_star is None:
        raise ConfigError("stop_gap needs a known truth point")
    return x_star, f_star


def _check_health(f, t, threshold, rec, final_point, eta, proj_t, grad_t):
    if not np.isfinite(f) or f > threshold:
        partial = IterationTrace(
            records=rec.records,
            final_point=final_point,
            final_components=None,
            eta=eta,
            proj_time_total=proj_t,
            grad_time_total=grad_t,
            points=rec.points,
        )
        raise DivergenceError(
            f"objective value {f:.3e} at iteration {t} exceeds the divergence "
            f"guard ({threshold:.3e}); step size is likely too large",
            trace=partial,
        )


def epsilon_pgd(objective: Objective, net: GeneratorNetwork,
                proj_cfg: ProjectionConfig, cfg: SolverConfig,
                x0=None, x_star=None) -> IterationTrace:
    """Gradient step then range projection, from ``x0`` (default zero).

    Records one row per iteration (row 0 is the initial state).  Raises
    :class:`DivergenceError` with the partial trace if the objective blows
    past 1e3 times its initial value or stops being finite.
    """
    x_star, f_star = _prepare(objective, net, cfg, x_star)
    x = np.zeros(net.n) if x0 is None else np.asarray(x0, dtype=float)
    eta = cfg.eta if cfg.eta is not None else default_step_size(objective, net, seed=cfg.seed)
    rec = _Recorder(f_star, cfg.record_points)
    f = value(objective, x)
    rec.add(0, f, x, x_star, 0.0, 0.0)
    threshold = 1e3 * max(f, 1e-12)
    proj_t = grad_t = 0.0
    for t in range(1, cfg.iters + 1):
        tic = time.perf_counter()
        g = gradient(objective, x)
        grad_t += time.perf_counter() - tic
        toc = time.perf_counter()
        res = project(proj_cfg, net, x - eta * g)
        proj_t += time.perf_counter() - toc
        x = res.point
        f = value(objective, x)
        _check_health(f, t, threshold, rec, x, eta, proj_t, grad_t)
        rec.add(t, f, x, x_star, res.residual_sq, time.perf_counter() - tic)
        if cfg.stop_gap is not None and rec.records[-1].gap <= cfg.stop_gap:
            break
    return IterationTrace(
        records=rec.records,
        final_point=x,
        final_components=None,
        eta=eta,
        proj_time_total=proj_t,
        grad_time_total=grad_t,
        points=rec.points,
    )


def myopic_pgd(objective: Objective, net: GeneratorNetwork, basis: OrthoBasis,
               proj_cfg: ProjectionConfig, cfg: SolverConfig,
               x_star=None) -> IterationTrace:
    """Two-block variant for signals = range point + l-sparse deviation.

    Both blocks consume the one gradient taken at the combined iterate
    x_t = u_t + v_t: the range block re-projects u_t - eta*g, the sparse
    block re-thresholds v_t - eta*g.  Neither block sees the other's update
    within an iteration.
    """
    x_star, f_star = _prepare(objective, net, cfg, x_star)
    eta = cfg.eta if cfg.eta is not None else default_step_size(
        objective, net, basis=basis, l=cfg.l, seed=cfg.seed)
    u = np.zeros(net.n)
    v = np.zeros(net.n)
    x = u + v
    rec = _Recorder(f_star, cfg.record_points)
    rec.sparse_nnz = [0]
    f = value(objective, x)
    rec.add(0, f, x, x_star, 0.0, 0.0)
    threshold = 1e3 * max(f, 1e-12)
    proj_t = grad_t = 0.0
    for t in range(1, cfg.iters + 1):
        tic = time.perf_counter()
        g = gradient(objective, x)
        grad_t += time.perf_counter() - tic
        toc = time.perf_counter()
        res = project(proj_cfg, net, u - eta * g)
        proj_t += time.perf_counter() - toc
        u = res.point
        v, coeffs = hard_threshold_coeffs(basis, v - eta * g, cfg.l)
        x = u + v
        f = value(objective, x)
        _check_health(f, t, threshold, rec, x, eta, proj_t, grad_t)
        rec.add(t, f, x, x_star, res.residual_sq, time.perf_counter() - tic)
        rec.sparse_nnz.append(int(np.count_nonzero(coeffs)))
        if cfg.stop_gap is not None and rec.records[-1].gap <= cfg.stop_gap:
            break
    return IterationTrace(
        records=rec.records,
        final_point=x,
        final_components=(u, v),
        eta=eta,
        proj_time_total=proj_t,
        grad_time_total=grad_t,
        points=rec.points,
        sparse_nnz=rec.sparse_nnz,
    )


# ---------------------------------------------------------------------------
# theory rates


def _check_curvature(alpha, beta):
    if not (np.isfinite(alpha) and alpha > 0 and beta >= alpha):
        raise ContractError(f"need beta >= alpha > 0, got alpha={alpha}, beta={beta}")


def pgd_contraction_factor(alpha: float, beta: float) -> float:
    """Per-iteration gap factor ``beta/alpha - 1`` for step size 1/beta.

    This is the factor the descent analysis actually yields after moving the
    current gap to the right-hand side; it guarantees contraction exactly
    when beta/alpha < 2.
    """
    _check_curvature(alpha, beta)
    return beta / alpha - 1.0


def pgd_contraction_factor_alt(alpha: float, beta: float) -> float:
    """Companion factor ``2 - beta/alpha`` sometimes quoted for the same
    analysis; it disagrees with :func:`pgd_contraction_factor` except at
    beta/alpha = 1.5 and is reported alongside it for comparison."""
    _check_curvature(alpha, beta)
    return 2.0 - beta / alpha


def _check_mu(mu):
    if not 0.0 <= mu < 1.0:
        raise ContractError(f"mu must lie in [0, 1), got {mu}")


def myopic_contraction_factor(alpha: float, beta: float, mu: float) -> float:
    """Nominal per-iteration gap factor for the two-block solver:
    ``(2 - (b/a)(1 - 2.5 mu)/(1 - mu)) / (1 - (b/2a)(mu/(1 - mu)))``.

    Returns +inf when the denominator is nonpositive (the bound is vacuous
    there).  Note this inherits the same sign convention as
    :func:`pgd_contraction_factor_alt`; see the strict variant for the
    rearrangement consistent with :func:`pgd_contraction_factor`.
    """
    _check_curvature(alpha, beta)
    _check_mu(mu)
    r = beta / alpha
    den = 1.0 - 0.5 * r * mu / (1.0 - mu)
    if den <= 0:
        return np.inf
    return (2.0 - r * (1.0 - 2.5 * mu) / (1.0 - mu)) / den


def myopic_contraction_factor_strict(alpha: float, beta: float, mu: float) -> float:
    """Sign-corrected rearrangement of the two-block analysis:
    ``(b/a - 1 + 3(b/a)mu/(2(1-mu))) / (1 - (b/a)mu/(2(1-mu)))``.

    Agrees with :func:`myopic_contraction_factor` only at beta/alpha = 1.5;
    at mu = 0 it reduces to :func:`pgd_contraction_factor`."""
    _check_curvature(alpha, beta)
    _check_mu(mu)
    r = beta / alpha
    coupling = 0.5 * r * mu / (1.0 - mu)
    den = 1.0 - coupling
    if den <= 0:
        return np.inf
    return (r - 1.0 + 3.0 * coupling) / den


# ---------------------------------------------------------------------------
# empirical contraction measurement


@dataclass(frozen=True)
class ContractionReport:
    """How a gap sequence behaved: per-step ratios, violations of a bound,
    fitted geometric rate over the pre-plateau segment, detected plateau.

    ``fit_end`` is the exclusive end of the segment used for both the rate
    fit and violation counting (the whole sequence when no plateau)."""

    ratios: np.ndarray
    violations: int | None
    violation_fraction: float | None
    fitted_rate: float | None
    fit_r2: float | None
    plateau_index: int | None
    plateau_level: float | None
    rateable: bool
    num_fit_points: int
    fit_end: int


_PLATEAU_WINDOW = 5


def contraction_report(trace_or_gaps, rho: float | None = None, floor: float = 0.0
                       ) -> ContractionReport:
    """Measure a recorded gap sequence against a contraction bound.

    The plateau is detected at the first index whose gap failed to decrease
    by at least 1% over the trailing 5-iteration window; the geometric rate
    is the least-squares slope of log gap over the points strictly before
    that window.  Fewer than 3 such points flags the sequence unrateable.
    ``rho``/``floor`` count violations of gap_{t+1} <= rho*gap_t + floor
    over that same pre-plateau segment: once the sequence has bottomed out,
    the bound's additive term dominates and ratios carry no information.
    """
    if isinstance(trace_or_gaps, IterationTrace):
        gaps = trace_or_gaps.gaps()
    else:
        gaps = np.asarray(trace_or_gaps, dtype=float)
    if gaps.ndim != 1 or gaps.size < 2:
        raise ContractError("need a 1-d gap sequence with at least 2 entries")

    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = gaps[1:] / gaps[:-1]

    plateau_index = None
    w = _PLATEAU_WINDOW
    for t in range(w, gaps.size):
        if gaps[t] > 0.99 * gaps[t - w]:
            plateau_index = t
            break
    if plateau_index is not None:
        tail = gaps[max(plateau_index - w, 0):]
        plateau_level = float(np.median(tail))
        # the detector lags the floor by up to the window length (more when
        # the floor oscillates), so locate the segment cut at the first
        # entry into the band the tail actually occupies
        ceiling = float(np.max(tail))
        fit_end = int(np.argmax(gaps <= ceiling))
    else:
        plateau_level = None
        fit_end = gaps.size

    violations = violation_fraction = None
    if rho is not None:
        prev, nxt = gaps[:fit_end - 1], gaps[1:fit_end]
        bad = nxt > rho * prev + floor
        violations = int(np.count_nonzero(bad))
        checked = max(fit_end - 1, 0)
        violation_fraction = violations / checked if checked else 0.0

    ts = np.arange(fit_end)
    mask = gaps[:fit_end] > 0.0
    ts, ys = ts[mask], np.log(gaps[:fit_end][mask])
    if ts.size >= 3:
        slope, intercept = np.polyfit(ts, ys, 1)
        pred = slope * ts + intercept
        ss_res = float(np.sum((ys - pred) ** 2))
        ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
        fitted_rate = float(np.exp(slope))
        fit_r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        rateable = True
    else:
        fitted_rate = fit_r2 = None
        rateable = False

    return ContractionReport(
        ratios=ratios,
        violations=violations,
        violation_fraction=violation_fraction,
        fitted_rate=fitted_rate,
        fit_r2=fit_r2,
        plateau_index=plateau_index,
        plateau_level=plateau_level,
        rateable=rateable,
        num_fit_points=int(ts.size),
        fit_end=int(fit_end),
    )


# ---------------------------------------------------------------------------
# trace serialization


def _fmt(v) -> str:
    return "" if v is None else format(float(v), ".17e")


def trace_to_csv(trace: IterationTrace, path) -> None:
    """One row per iteration; floats in full-precision scientific notation,
    unknown gap/distance left empty."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        for r in trace.records:
            writer.writerow(
                [r.t, _fmt(r.f_value), _fmt(r.gap), _fmt(r.dist_to_truth),
                 _fmt(r.proj_residual_sq), _fmt(r.wall_time * 1e6)]
            )


def trace_from_csv(path) -> list[IterationRecord]:
    records = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != TRACE_COLUMNS:
            raise ContractError(f"unexpected trace header {header}")
        for row in reader:
            records.append(
                IterationRecord(
                    t=int(row[0]),
                    f_value=float(row[1]),
                    gap=float(row[2]) if row[2] else None,
                    dist_to_truth=float(row[3]) if row[3] else None,
                    proj_residual_sq=float(row[4]),
                    wall_time=float(row[5]) / 1e6,
                )
            )
    return records
