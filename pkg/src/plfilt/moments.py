"""Gaussian moment matching through nonlinear functions.

Two evaluation routes are provided for the joint first/second moments of a
Gaussian input and a function output:

* :func:`match_full` runs the plain cubature sums, evaluating the function at
  every integration point.
* :func:`match_pl` exploits the structure ``y = [g(z); A x]`` (nonlinear in
  the leading ``z`` coordinates only): with a lower-triangular square root,
  points that do not perturb the leading block all map to ``g`` of the input
  z-mean, so their contributions collapse into closed form and ``g`` is only
  evaluated at the mean plus the (deduplicated) nonlinear points.  When the
  nonlinear points carry no trailing-coordinate component, a partial Cholesky
  factorization of the input covariance is enough.

:func:`match_general` extends the structured route to
``y = [A1 x + g(z); A2 x]`` by matching an auxiliary stacked output and
collapsing it afterwards.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cubature import ClassifiedRule, CubatureRule, unique_nonlinear
from .linalg import cholesky_full, cholesky_partial


@dataclass(frozen=True)
class GaussianMoments:
    """Mean vector and covariance of a Gaussian."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError(f"inconsistent moment shapes {mean.shape}, {cov.shape}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class JointGaussian:
    """Matched joint moments of an input ``x`` and an output ``y``."""

    m_x: np.ndarray
    m_y: np.ndarray
    p_xx: np.ndarray
    p_xy: np.ndarray
    p_yy: np.ndarray

    @property
    def x_dim(self) -> int:
        return self.m_x.size

    @property
    def y_dim(self) -> int:
        return self.m_y.size

    def validate(self, rtol: float = 1e-10):
        """Check block shapes, symmetry of the diagonal blocks and a
        nonnegative p_yy diagonal; raises AssertionError on violation."""
        x, y = self.x_dim, self.y_dim
        assert self.p_xx.shape == (x, x)
        assert self.p_xy.shape == (x, y)
        assert self.p_yy.shape == (y, y)
        for block in (self.p_xx, self.p_yy):
            scale = max(float(np.abs(block).max(initial=0.0)), 1.0)
            assert float(np.abs(block - block.T).max(initial=0.0)) <= rtol * scale
        assert float(np.diag(self.p_yy).min(initial=0.0)) >= -1e-12 * max(
            float(np.abs(self.p_yy).max(initial=0.0)), 1.0
        )


class _EvalCounter:
    """Thread-safe tally of nonlinear-function evaluations."""

    __slots__ = ("_lock", "_value")

    def __init__(self):
        self._lock = threading.Lock()
        self._value = 0

    def add(self, n: int):
        with self._lock:
            self._value += n

    def reset(self):
        with self._lock:
            self._value = 0

    @property
    def value(self) -> int:
        return self._value


class PartiallyLinearFunction:
    """A map ``y = [g(z); A x]`` with ``z`` the leading ``z_dim`` coordinates
    of ``x``, or ``y = [A1 x + g(z); A2 x]`` when ``a1`` is given (then ``a``
    plays the role of A2).

    ``g_batch``, when provided, must evaluate ``g`` column-wise on a
    ``(z_dim, n)`` matrix; it is used to keep large point sets vectorized.
    Every conceptual evaluation of ``g`` — one per point — is tallied in
    ``g_eval_count``, whose reads are only meaningful between operations.
    """

    def __init__(
        self,
        z_dim: int,
        x_dim: int,
        g: Callable[[np.ndarray], np.ndarray],
        g_dim: int,
        a: np.ndarray,
        a1: np.ndarray | None = None,
        g_batch: Callable[[np.ndarray], np.ndarray] | None = None,
        _counter: _EvalCounter | None = None,
    ):
        self.z_dim = int(z_dim)
        self.x_dim = int(x_dim)
        self.g_dim = int(g_dim)
        if not 1 <= self.z_dim <= self.x_dim:
            raise ValueError(f"z_dim must be in 1..{self.x_dim}, got {z_dim}")
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[1] != self.x_dim:
            raise ValueError(f"linear map shape {a.shape} inconsistent with x_dim={x_dim}")
        if a1 is not None:
            a1 = np.asarray(a1, dtype=float)
            if a1.shape != (self.g_dim, self.x_dim):
                raise ValueError(
                    f"pre-addition map must be ({self.g_dim}, {self.x_dim}), got {a1.shape}"
                )
        self.a = a
        self.a1 = a1
        self._g = g
        self._g_batch = g_batch
        self._counter = _counter if _counter is not None else _EvalCounter()

    @property
    def y_dim(self) -> int:
        return self.g_dim + self.a.shape[0]

    @property
    def g_eval_count(self) -> int:
        return self._counter.value

    def reset_g_eval_count(self):
        self._counter.reset()

    def eval_g(self, z: np.ndarray) -> np.ndarray:
        self._counter.add(1)
        out = np.asarray(self._g(np.asarray(z, dtype=float)), dtype=float)
        if out.shape != (self.g_dim,):
            raise ValueError(f"g returned shape {out.shape}, expected ({self.g_dim},)")
        return out

    def eval_g_batch(self, zmat: np.ndarray) -> np.ndarray:
        zmat = np.asarray(zmat, dtype=float)
        n = zmat.shape[1]
        self._counter.add(n)
        if self._g_batch is not None:
            out = np.asarray(self._g_batch(zmat), dtype=float)
        else:
            out = np.empty((self.g_dim, n))
            for j in range(n):
                out[:, j] = self._g(zmat[:, j])
        if out.shape != (self.g_dim, n):
            raise ValueError(f"batched g returned shape {out.shape}, expected ({self.g_dim}, {n})")
        return out

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        gz = self.eval_g(x[: self.z_dim])
        if self.a1 is not None:
            gz = gz + self.a1 @ x
        return np.concatenate((gz, self.a @ x))

    def eval_batch(self, xmat: np.ndarray) -> np.ndarray:
        xmat = np.asarray(xmat, dtype=float)
        gz = self.eval_g_batch(xmat[: self.z_dim])
        if self.a1 is not None:
            gz = gz + self.a1 @ xmat
        return np.vstack((gz, self.a @ xmat))


@dataclass(frozen=True)
class MatchScratch:
    """Intermediates of the structured moment-matching sums, retained for
    debug-mode consistency checks."""

    w_cl: float
    g_z: np.ndarray
    u: np.ndarray
    u_l: np.ndarray
    c_z: np.ndarray


_STRICT_LOWER_MASKS: dict[int, np.ndarray] = {}


def _mirror_lower(b: np.ndarray) -> np.ndarray:
    """Symmetrize by mirroring the lower triangle onto the upper."""
    n = b.shape[0]
    mask = _STRICT_LOWER_MASKS.get(n)
    if mask is None:
        mask = np.tril(np.ones((n, n), dtype=bool), -1)
        _STRICT_LOWER_MASKS[n] = mask
    out = b.copy()
    out.T[mask] = b[mask]
    return out


def _eval_columns(f, xmat: np.ndarray) -> np.ndarray:
    if isinstance(f, PartiallyLinearFunction) or hasattr(f, "eval_batch"):
        return np.asarray(f.eval_batch(xmat), dtype=float)
    cols = [np.asarray(f(xmat[:, j]), dtype=float) for j in range(xmat.shape[1])]
    return np.column_stack(cols)


def match_full(f, m: np.ndarray, p: np.ndarray, rule: CubatureRule) -> JointGaussian:
    """Joint moments of ``x ~ N(m, p)`` and ``y = f(x)`` by plain cubature.

    ``f`` is evaluated once per integration point (column-wise when it
    exposes ``eval_batch``).  The input covariance must be symmetric positive
    definite; its full lower-triangular Cholesky factor maps the unit-space
    points into state space.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (rule.dim,):
        raise ValueError(f"mean shape {m.shape} does not match rule dimension {rule.dim}")
    l = cholesky_full(p)
    if l.shape[0] != rule.dim:
        raise ValueError("covariance dimension does not match rule dimension")
    dx = l @ rule.points
    xpts = m[:, None] + dx
    ypts = _eval_columns(f, xpts)
    w = rule.weights
    m_y = ypts @ w
    dy = ypts - m_y[:, None]
    p_xy = (dx * w) @ dy.T
    p_yy = (dy * w) @ dy.T
    return JointGaussian(m_x=m, m_y=m_y, p_xx=np.asarray(p, dtype=float), p_xy=p_xy, p_yy=p_yy)


def _match_pl_impl(
    plf: PartiallyLinearFunction,
    m: np.ndarray,
    p: np.ndarray,
    cr: ClassifiedRule,
    use_unique: bool | None,
    debug: bool,
    want_scratch: bool = False,
):
    if plf.a1 is not None:
        raise ValueError("function carries a pre-addition map; use match_general")
    if plf.x_dim != cr.dim:
        raise ValueError(f"function x_dim {plf.x_dim} does not match rule dimension {cr.dim}")
    if plf.z_dim != cr.z_dim:
        raise ValueError(f"function z_dim {plf.z_dim} does not match rule z_dim {cr.z_dim}")
    m = np.asarray(m, dtype=float)
    if m.shape != (cr.dim,):
        raise ValueError(f"mean shape {m.shape} does not match dimension {cr.dim}")
    if use_unique is None:
        # deduplication only changes anything for tensor grids, but it is
        # harmless (and the default) everywhere
        use_unique = True
    z = cr.z_dim

    if use_unique:
        uq = unique_nonlinear(cr)
        s_z = uq.points  # (Z, n) leading blocks; trailing coordinates are zero
        w_z = uq.weights
        off_zero = True
    else:
        if not cr.materialized:
            raise ValueError("virtual rule supports only the deduplicated point set")
        s_z = cr.z_blocks
        w_z = cr.w_z
        off_zero = cr.z_off_block_zero

    if off_zero:
        pc = cholesky_partial(p, z)
        lnn = pc.lnn
        l_xi = pc.column_block() @ s_z  # (X, n)
    else:
        lf = cholesky_full(p)
        lnn = lf[:z, :z]
        l_xi = lf @ cr.xi_z

    m_z = m[:z]
    # one batched call: column 0 is the z-mean (evaluated once, reused below),
    # the rest are the nonlinear points
    zpts = np.empty((z, s_z.shape[1] + 1))
    zpts[:, 0] = m_z
    zpts[:, 1:] = m_z[:, None] + lnn @ s_z
    g_all = plf.eval_g_batch(zpts)
    g0 = g_all[:, 0]
    g_z = g_all[:, 1:]

    a = plf.a
    w_cl = cr.w_cl
    top = w_cl * g0 + g_z @ w_z
    m_y = np.concatenate((top, a @ m))

    u = -top
    u_l = g0 + u
    gc = g_z + u[:, None]  # = G_z + C_z with C_z = u 1^T

    p = np.asarray(p, dtype=float)
    p_at = p @ a.T
    pxy_nl = (l_xi * w_z) @ g_z.T  # (X, G)
    p_xy = np.hstack((pxy_nl, p_at))

    g_dim = plf.g_dim
    y_dim = plf.y_dim
    p_yy = np.empty((y_dim, y_dim))
    p_yy[:g_dim, :g_dim] = (gc * w_z) @ gc.T + w_cl * np.outer(u_l, u_l)
    p_yy[g_dim:, :g_dim] = a @ pxy_nl
    p_yy[g_dim:, g_dim:] = a @ p_at
    p_yy = _mirror_lower(p_yy)  # fills the upper blocks and pins symmetry

    scratch = None
    if debug or want_scratch:
        scratch = MatchScratch(
            w_cl=w_cl, g_z=g_z, u=u, u_l=u_l, c_z=np.tile(u[:, None], (1, w_z.size))
        )
        if debug:
            _check_scratch(scratch, g0, w_z)
    joint = JointGaussian(m_x=m, m_y=m_y, p_xx=p, p_xy=p_xy, p_yy=p_yy)
    return joint, scratch


def _check_scratch(s: MatchScratch, g0: np.ndarray, w_z: np.ndarray):
    tol = 1e-13
    scale = 1.0 + float(np.abs(s.g_z).max(initial=0.0))
    u_ref = -s.w_cl * g0 - s.g_z @ w_z
    assert float(np.abs(u_ref - s.u).max(initial=0.0)) <= tol * scale
    assert float(np.abs((g0 + s.u) - s.u_l).max(initial=0.0)) <= tol * scale
    assert float(np.abs(s.c_z - s.u[:, None]).max(initial=0.0)) == 0.0
    assert abs((1.0 - float(w_z.sum())) - s.w_cl) <= 1e-12


def match_pl(
    plf: PartiallyLinearFunction,
    m: np.ndarray,
    p: np.ndarray,
    cr: ClassifiedRule,
    use_unique: bool | None = None,
    debug: bool = False,
) -> JointGaussian:
    """Structured moment matching for ``y = [g(z); A x]``.

    Evaluates ``g`` once at the input z-mean plus once per (deduplicated,
    when ``use_unique``) nonlinear point, and factorizes only the leading
    ``z`` columns of the input covariance whenever the nonlinear points have
    no trailing-coordinate component.  Falls back to the full factorization
    otherwise while keeping the collapsed sums.
    """
    joint, _ = _match_pl_impl(plf, m, p, cr, use_unique, debug)
    return joint


def match_pl_with_scratch(
    plf: PartiallyLinearFunction,
    m: np.ndarray,
    p: np.ndarray,
    cr: ClassifiedRule,
    use_unique: bool | None = None,
    debug: bool = False,
):
    """Like :func:`match_pl`, also returning the internal sums for inspection."""
    return _match_pl_impl(plf, m, p, cr, use_unique, debug, want_scratch=True)


def match_general(
    plf: PartiallyLinearFunction,
    m: np.ndarray,
    p: np.ndarray,
    cr: ClassifiedRule,
    use_unique: bool | None = None,
    debug: bool = False,
) -> JointGaussian:
    """Structured moment matching for ``y = [A1 x + g(z); A2 x]``.

    Internally matches the auxiliary output ``o = [g(z); A1 x; A2 x]`` with
    :func:`match_pl` and recombines the blocks; the auxiliary function shares
    the evaluation counter of ``plf``.
    """
    if plf.a1 is None:
        raise ValueError("function has no pre-addition map; use match_pl")
    g_dim = plf.g_dim
    aux = PartiallyLinearFunction(
        z_dim=plf.z_dim,
        x_dim=plf.x_dim,
        g=plf._g,
        g_dim=g_dim,
        a=np.vstack((plf.a1, plf.a)),
        g_batch=plf._g_batch,
        _counter=plf._counter,
    )
    jo, _ = _match_pl_impl(aux, m, p, cr, use_unique, debug)
    lo = g_dim
    hi = 2 * g_dim
    m_y = np.concatenate((jo.m_y[:lo] + jo.m_y[lo:hi], jo.m_y[hi:]))
    p_xy = np.hstack((jo.p_xy[:, :lo] + jo.p_xy[:, lo:hi], jo.p_xy[:, hi:]))
    oo = jo.p_yy
    tr = oo[:lo, hi:] + oo[lo:hi, hi:]
    y_dim = plf.y_dim
    p_yy = np.empty((y_dim, y_dim))
    p_yy[:lo, :lo] = _mirror_lower(
        oo[:lo, :lo] + oo[:lo, lo:hi] + oo[lo:hi, :lo] + oo[lo:hi, lo:hi]
    )
    p_yy[:lo, lo:] = tr
    p_yy[lo:, :lo] = tr.T
    p_yy[lo:, lo:] = oo[hi:, hi:]
    return JointGaussian(m_x=jo.m_x, m_y=m_y, p_xx=jo.p_xx, p_xy=p_xy, p_yy=p_yy)


def match_structured(
    plf: PartiallyLinearFunction,
    m: np.ndarray,
    p: np.ndarray,
    cr: ClassifiedRule,
    use_unique: bool | None = None,
    debug: bool = False,
) -> JointGaussian:
    """Dispatch to :func:`match_general` or :func:`match_pl` depending on
    whether the function carries a pre-addition map."""
    if plf.a1 is not None:
        return match_general(plf, m, p, cr, use_unique, debug)
    return match_pl(plf, m, p, cr, use_unique, debug)
