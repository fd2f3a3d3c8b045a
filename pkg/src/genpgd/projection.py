"""Approximate and exact projection onto the range of a generator.

Three routes are provided.  ``closed-form-linear`` is the exact least-squares
projection available when the generator is a single affine layer; ``grid``
certifies a best-on-grid point for latent dimension at most 3; ``latent-gd``
runs multi-restart gradient descent in latent space and never certifies
optimality (the landscape is nonconvex).  Hard thresholding of analysis
coefficients in an orthonormal basis, the exact projection onto the set of
basis-sparse vectors, lives here too.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ContractError
from .generator import GeneratorNetwork, forward, forward_batch, vjp
from .seeding import check_seed, spawn_rng

__all__ = [
    "OrthoBasis",
    "ProjectionConfig",
    "ProjectionResult",
    "project",
    "project_linear",
    "hard_threshold",
    "hard_threshold_coeffs",
]

_METHODS = ("closed-form-linear", "latent-gd", "grid")


@dataclass(frozen=True)
class OrthoBasis:
    """An n-by-n orthonormal matrix; columns are the analysis directions."""

    matrix: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ContractError(f"basis must be square, got shape {M.shape}")
        dev = np.max(np.abs(M.T @ M - np.eye(M.shape[0])))
        if dev > 1e-8:
            raise ContractError(f"basis is not orthonormal (max |B^T B - I| = {dev:.3e})")
        object.__setattr__(self, "matrix", M)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, n: int) -> "OrthoBasis":
        return cls(np.eye(n))

    @classmethod
    def random(cls, n: int, seed: int) -> "OrthoBasis":
        """Haar-distributed orthonormal basis (QR with sign correction)."""
        rng = spawn_rng(seed)
        Q, R = np.linalg.qr(rng.standard_normal((n, n)))
        return cls(Q * np.sign(np.diag(R)))


@dataclass(frozen=True)
class ProjectionConfig:
    """How to project onto a generator range.

    ``epsilon`` is the advertised slack of the oracle: a certified result
    promises squared residual within ``epsilon`` of the true minimum over the
    range.  ``degrade_slack`` deliberately perturbs an otherwise certified
    output along the range by (up to) that much squared residual; it exists
    to study how solvers respond to inexact oracles.  ``grid_bounds`` is the
    latent search box (default (-3, 3) per coordinate): the grid method
    evaluates on a mesh over it, and latent-gd samples restart points from it.
    """

    method: str = "latent-gd"
    epsilon: float = 0.0
    restarts: int = 10
    inner_iters: int = 200
    inner_step: float | str = "backtracking"
    grid_bounds: object = None
    grid_resolution: int = 101
    seed: int = 0
    degrade_slack: float = 0.0

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ConfigError(f"unknown projection method {self.method!r}")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.restarts < 1:
            raise ConfigError(f"restarts must be >= 1, got {self.restarts}")
        if self.inner_iters < 1:
            raise ConfigError(f"inner_iters must be >= 1, got {self.inner_iters}")
        if isinstance(self.inner_step, str):
            if self.inner_step != "backtracking":
                raise ConfigError(f"inner_step must be positive or 'backtracking', got {self.inner_step!r}")
        elif not self.inner_step > 0:
            raise ConfigError(f"inner_step must be positive or 'backtracking', got {self.inner_step}")
        if self.grid_resolution < 2:
            raise ConfigError(f"grid_resolution must be >= 2, got {self.grid_resolution}")
        if self.degrade_slack < 0:
            raise ConfigError(f"degrade_slack must be nonnegative, got {self.degrade_slack}")
        check_seed(self.seed)
        self._bound_pairs()  # validates the shape of grid_bounds

    def _bound_pairs(self):
        b = self.grid_bounds
        if b is None:
            return None
        pairs = list(b) if not (len(b) == 2 and np.isscalar(b[0])) else [tuple(b)]
        out = []
        for pair in pairs:
            try:
                lo, hi = pair
            except (TypeError, ValueError):
                raise ConfigError(f"grid_bounds entries must be (lo, hi) pairs, got {pair!r}")
            if not lo < hi:
                raise ConfigError(f"grid_bounds interval ({lo}, {hi}) is empty")
            out.append((float(lo), float(hi)))
        return out

    def _resolve_bounds(self, k: int) -> list[tuple[float, float]]:
        out = self._bound_pairs()
        if out is None:
            return [(-3.0, 3.0)] * k
        if len(out) == 1:
            return out * k
        if len(out) != k:
            raise ConfigError(f"grid_bounds lists {len(out)} intervals for latent dim {k}")
        return out


@dataclass(frozen=True)
class ProjectionResult:
    """Outcome of one projection call.

    ``point`` always equals ``forward(net, latent)``; ``certified`` is True
    only for methods that can guarantee ``residual_sq`` is within the
    config's ``epsilon`` of the true squared distance to the range.
    """

    point: np.ndarray
    latent: np.ndarray
    residual_sq: float
    certified: bool

    def to_json(self) -> dict:
        return {
            "point": np.asarray(self.point).tolist(),
            "latent": np.asarray(self.latent).tolist(),
            "residual_sq": float(self.residual_sq),
            "certified": bool(self.certified),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ProjectionResult":
        try:
            return cls(
                point=np.array(obj["point"], dtype=float),
                latent=np.array(obj["latent"], dtype=float),
                residual_sq=float(obj["residual_sq"]),
                certified=bool(obj["certified"]),
            )
        except KeyError as e:
            raise ContractError(f"missing field {e} in projection result") from e


def _check_target(net: GeneratorNetwork, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.n,):
        raise ContractError(f"target must have shape ({net.n},), got {x.shape}")
    return x


def _result(net: GeneratorNetwork, x: np.ndarray, z: np.ndarray, certified: bool) -> ProjectionResult:
    point = forward(net, z)
    return ProjectionResult(
        point=point,
        latent=z,
        residual_sq=float(np.sum((x - point) ** 2)),
        certified=certified,
    )


def project_linear(W, x) -> ProjectionResult:
    """Exact Euclidean projection onto the column span of ``W``.

    ``W`` must have full column rank (smallest singular value above 1e-10);
    the returned point satisfies the normal equations W^T (x - point) = 0.
    """
    W = np.asarray(W, dtype=float)
    x = np.asarray(x, dtype=float)
    if W.ndim != 2 or x.shape != (W.shape[0],):
        raise ContractError(f"shape mismatch: W {W.shape}, x {x.shape}")
    smin = np.linalg.svd(W, compute_uv=False)[-1]
    if not smin > 1e-10:
        raise ContractError(
            f"W must have full column rank; smallest singular value {smin:.3e} <= 1e-10"
        )
    latent = np.linalg.lstsq(W, x, rcond=None)[0]
    point = W @ latent
    return ProjectionResult(
        point=point,
        latent=latent,
        residual_sq=float(np.sum((x - point) ** 2)),
        certified=True,
    )


def _descend(net, x, z0, inner_iters, inner_step):
    """Gradient descent on z -> 0.5 ||x - G(z)||^2 from one start."""
    z = z0
    r = forward(net, z) - x
    f = 0.5 * float(r @ r)
    for _ in range(inner_iters):
        g = vjp(net, z, r)
        gnorm_sq = float(g @ g)
        if gnorm_sq < 1e-18:  # gradient norm below 1e-9
            break
        if inner_step == "backtracking":
            step = 1.0
            accepted = False
            for _ in range(50):
                z_try = z - step * g
                r_try = forward(net, z_try) - x
                f_try = 0.5 * float(r_try @ r_try)
                if f_try <= f - 1e-4 * step * gnorm_sq:
                    z, r, f = z_try, r_try, f_try
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break
        else:
            z = z - inner_step * g
            r = forward(net, z) - x
            f = 0.5 * float(r @ r)
    return z, f


def _project_latent_gd(cfg: ProjectionConfig, net: GeneratorNetwork, x: np.ndarray):
    """Multi-restart latent descent.  Restart 0 starts at the origin; later
    restarts draw uniformly from the search box (``grid_bounds``, same default
    as the grid method), which covers far-from-origin basins that standard
    normal draws rarely reach.  Restarts use nested seed streams
    (seed, restart index), so growing ``restarts`` only adds candidates; the
    best residual is therefore nonincreasing in ``restarts``.  Ties go to the
    lowest restart index, making the result independent of evaluation order.
    """
    bounds = np.array(cfg._resolve_bounds(net.k))
    best_z = None
    best_f = np.inf
    for j in range(cfg.restarts):
        if j == 0:
            z0 = np.zeros(net.k)
        else:
            z0 = spawn_rng(cfg.seed, j).uniform(bounds[:, 0], bounds[:, 1])
        z, f = _descend(net, x, z0, cfg.inner_iters, cfg.inner_step)
        if f < best_f:
            best_z, best_f = z, f
    return _result(net, x, best_z, certified=False)


def _project_grid(cfg: ProjectionConfig, net: GeneratorNetwork, x: np.ndarray):
    if net.k > 3:
        raise ConfigError(f"grid projection requires k <= 3, got k={net.k}")
    bounds = cfg._resolve_bounds(net.k)
    axes = [np.linspace(lo, hi, cfg.grid_resolution) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    Z = np.stack([m.ravel() for m in mesh])
    X = forward_batch(net, Z)
    resid = np.sum((X - x[:, None]) ** 2, axis=0)
    best = int(np.argmin(resid))  # first minimum wins: deterministic tie-break
    return _result(net, x, Z[:, best], certified=True)


def _project_closed_form(net: GeneratorNetwork, x: np.ndarray):
    if net.d != 1 or net.layers[0].activation.kind != "identity":
        raise ConfigError("closed-form-linear needs a single identity-activation layer")
    layer = net.layers[0]
    ref = project_linear(layer.weights, x - layer.bias)
    return _result(net, x, ref.latent, certified=True)


def _stable_hash(x: np.ndarray) -> int:
    digest = hashlib.blake2b(np.ascontiguousarray(x).tobytes(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def _degrade_within_range(net, x, res: ProjectionResult, slack: float, seed: int):
    """Move the projected point along the range until its squared residual
    grows by ``slack``.  The perturbation stays inside Range(G) by
    construction (it moves the latent), and the direction/scale are a pure
    function of (seed, x)."""
    rng = spawn_rng(seed, _stable_hash(x))
    d = rng.standard_normal(net.k)
    d /= np.linalg.norm(d)
    target = res.residual_sq + slack

    def h(s):
        p = forward(net, res.latent + s * d)
        return float(np.sum((x - p) ** 2)) - target

    hi = 1e-8
    for _ in range(400):
        if h(hi) >= 0:
            break
        hi *= 2.0
    else:
        raise ContractError("could not calibrate degradation slack along the range")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return _result(net, x, res.latent + hi * d, certified=res.certified)


def project(cfg: ProjectionConfig, net: GeneratorNetwork, x) -> ProjectionResult:
    """Project ``x`` onto the range of ``net`` per the configured method.

    Pure given (cfg, net, x): all randomness (restart starts, degradation
    direction) derives from ``cfg.seed``.
    """
    x = _check_target(net, x)
    if cfg.method == "closed-form-linear":
        res = _project_closed_form(net, x)
    elif cfg.method == "grid":
        res = _project_grid(cfg, net, x)
    else:
        res = _project_latent_gd(cfg, net, x)
    if cfg.degrade_slack > 0.0:
        degraded = _degrade_within_range(net, x, res, cfg.degrade_slack, cfg.seed)
        # the certificate only survives if the advertised slack covers the
        # injected one
        certified = res.certified and cfg.epsilon >= cfg.degrade_slack
        res = replace(degraded, certified=certified)
    return res


def hard_threshold_coeffs(basis: OrthoBasis, v, l: int):
    """Keep the ``l`` largest-magnitude analysis coefficients of ``v``.

    Returns ``(w, coeffs)`` where ``coeffs`` is the exactly-l-sparse
    coefficient vector and ``w = basis @ coeffs``.  Ties in magnitude keep
    the lowest index.  This is the exact Euclidean projection onto the set
    of vectors whose analysis representation has at most ``l`` nonzeros.
    """
    if not isinstance(l, (int, np.integer)) or isinstance(l, bool) or l < 0:
        raise ContractError(f"sparsity l must be a nonnegative integer, got {l!r}")
    v = np.asarray(v, dtype=float)
    B = basis.matrix
    if v.shape != (B.shape[0],):
        raise ContractError(f"vector must have shape ({B.shape[0]},), got {v.shape}")
    c = B.T @ v
    keep = np.argsort(-np.abs(c), kind="stable")[: min(l, c.size)]
    coeffs = np.zeros_like(c)
    coeffs[keep] = c[keep]
    return B @ coeffs, coeffs


def hard_threshold(basis: OrthoBasis, v, l: int) -> np.ndarray:
    """Best approximation of ``v`` that is ``l``-sparse in ``basis``."""
    return hard_threshold_coeffs(basis, v, l)[0]
