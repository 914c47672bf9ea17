"""Filtering recursions: the generic sigma-point filter, its structured
variant that exploits partially linear models, and the Gaussian conditioning
update they share.

Both step functions consume a measurement, return a fresh state (states are
never mutated in place) and assume additive Gaussian noise: the matched
covariance of the flow gains ``Q`` and the matched measurement covariance
gains ``R``.  Models with noise entering nonlinearly are out of scope.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .cubature import ClassifiedRule
from .errors import (
    FilterStepError,
    InnovationDegenerateError,
    NotPositiveDefiniteError,
)
from .linalg import Permutation, cholesky_full, permute_moments
from .moments import (
    GaussianMoments,
    JointGaussian,
    PartiallyLinearFunction,
    match_full,
    match_structured,
)


@dataclass(frozen=True)
class EstimationModel:
    """A state-space model in the form both filter variants consume.

    ``flow`` and ``measurement`` are stored in their respective permuted
    coordinates: ``flow_perm`` (resp. ``meas_perm``) gathers the state so the
    function's nonlinear coordinates lead.  The flow maps permuted state to
    permuted next state; the measurement maps permuted state to measurement
    space.  ``q`` and ``r`` are the additive noise covariances in original
    state coordinates and measurement coordinates.
    """

    flow: PartiallyLinearFunction
    q: np.ndarray
    flow_perm: Permutation
    flow_rule: ClassifiedRule
    measurement: PartiallyLinearFunction
    r: np.ndarray
    meas_perm: Permutation
    meas_rule: ClassifiedRule

    def __post_init__(self):
        x = self.flow.x_dim
        y = self.measurement.y_dim
        q = np.asarray(self.q, dtype=float)
        r = np.asarray(self.r, dtype=float)
        if self.flow.y_dim != x:
            raise ValueError("flow must map the state onto itself")
        if self.measurement.x_dim != x:
            raise ValueError("measurement input dimension does not match the state")
        if q.shape != (x, x) or r.shape != (y, y):
            raise ValueError("noise covariance shapes do not match the model")
        if self.flow_perm.size != x or self.meas_perm.size != x:
            raise ValueError("permutation sizes do not match the state dimension")
        for rule, plf, tag in (
            (self.flow_rule, self.flow, "flow"),
            (self.meas_rule, self.measurement, "measurement"),
        ):
            if rule.dim != x or rule.z_dim != plf.z_dim:
                raise ValueError(f"{tag} rule does not match the {tag} function")
        cholesky_full(q)  # SPD checks; raise early rather than mid-run
        cholesky_full(r)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)

    @property
    def x_dim(self) -> int:
        return self.flow.x_dim

    @property
    def y_dim(self) -> int:
        return self.measurement.y_dim

    def flow_function(self):
        """The flow in original coordinates, for the unstructured filter path
        and for simulation."""
        return _PermutedMap(self.flow, self.flow_perm, unpermute_output=True)

    def measurement_function(self):
        """The measurement in original state coordinates."""
        return _PermutedMap(self.measurement, self.meas_perm, unpermute_output=False)


class _PermutedMap:
    """Adapter evaluating a stored (permuted-coordinate) function on
    original-coordinate inputs."""

    def __init__(self, plf: PartiallyLinearFunction, perm: Permutation, unpermute_output: bool):
        self._plf = plf
        self._idx = perm.indices
        self._inv = perm.inverse.indices if unpermute_output else None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        out = self._plf(np.asarray(x, dtype=float)[self._idx])
        return out[self._inv] if self._inv is not None else out

    def eval_batch(self, xmat: np.ndarray) -> np.ndarray:
        out = self._plf.eval_batch(np.asarray(xmat, dtype=float)[self._idx])
        return out[self._inv] if self._inv is not None else out


@dataclass(frozen=True)
class PredictionRecord:
    """Predicted state and measurement moments kept for diagnostics."""

    mean: np.ndarray
    cov: np.ndarray
    meas_mean: np.ndarray
    meas_cov: np.ndarray
    cross_cov: np.ndarray


@dataclass(frozen=True)
class FilterState:
    """Posterior mean/covariance at time index ``k``.

    ``prediction`` is populated only when a step is asked to keep
    diagnostics; the extra storage is unwanted in long runs.
    """

    k: int
    mean: np.ndarray
    cov: np.ndarray
    prediction: PredictionRecord | None = None


def kalman_update(prior: GaussianMoments, joint: JointGaussian, y: np.ndarray) -> GaussianMoments:
    """Condition a Gaussian on a measurement via the matched joint moments.

    The gain solves against the Cholesky factor of the innovation covariance
    (no explicit inverse); the posterior covariance is computed as
    ``P - K S K^T`` and re-symmetrized.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (joint.y_dim,):
        raise ValueError(f"measurement shape {y.shape} does not match joint dimension {joint.y_dim}")
    try:
        l = cholesky_full(joint.p_yy)
    except NotPositiveDefiniteError as exc:
        raise InnovationDegenerateError(
            f"innovation covariance not positive definite (pivot {exc.pivot})"
        ) from exc
    gain = cho_solve((l, True), joint.p_xy.T).T
    mean = prior.mean + gain @ (y - joint.m_y)
    cov = prior.cov - gain @ joint.p_yy @ gain.T
    cov = 0.5 * (cov + cov.T)
    return GaussianMoments(mean=mean, cov=cov)


def _symmetrized(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def _check_posterior_spd(cov: np.ndarray, step: int):
    try:
        cholesky_full(cov)
    except NotPositiveDefiniteError as exc:
        raise FilterStepError(step, "posterior", str(exc)) from exc


def lrkf_step(
    state: FilterState,
    model: EstimationModel,
    y: np.ndarray,
    keep_prediction: bool = False,
) -> FilterState:
    """One predict/update cycle of the plain sigma-point filter.

    Both the flow and the measurement are pushed through the full cubature
    sums; the stacked model functions are evaluated at every point of the
    materialized rules.
    """
    k_next = state.k + 1
    if model.flow_rule.base is None or model.meas_rule.base is None:
        raise ValueError("the unstructured filter path needs materialized rules")
    try:
        jt = match_full(
            model.flow_function(), state.mean, state.cov, model.flow_rule.base
        )
        m_pred = jt.m_y
        p_pred = _symmetrized(jt.p_yy) + model.q
        jm = match_full(model.measurement_function(), m_pred, p_pred, model.meas_rule.base)
        joint = JointGaussian(
            m_x=m_pred, m_y=jm.m_y, p_xx=p_pred, p_xy=jm.p_xy, p_yy=jm.p_yy + model.r
        )
        post = kalman_update(GaussianMoments(m_pred, p_pred), joint, y)
    except (NotPositiveDefiniteError, InnovationDegenerateError) as exc:
        raise FilterStepError(k_next, "update", str(exc)) from exc
    _check_posterior_spd(post.cov, k_next)
    record = None
    if keep_prediction:
        record = PredictionRecord(m_pred, p_pred, joint.m_y, joint.p_yy, joint.p_xy)
    return FilterState(k=k_next, mean=post.mean, cov=post.cov, prediction=record)


def pl_lrkf_step(
    state: FilterState,
    model: EstimationModel,
    y: np.ndarray,
    keep_prediction: bool = False,
    use_unique: bool | None = None,
) -> FilterState:
    """One predict/update cycle of the structured filter.

    Sequence per phase: permute the moments so the nonlinear coordinates
    lead, factorize (partially where possible), run the structured moment
    match, then permute back.  The conditioning step runs in the
    measurement-permuted coordinates and its posterior is permuted back at
    the end.  On identical rules and models this reproduces
    :func:`lrkf_step` up to roundoff while evaluating only the nonlinear
    blocks of the model functions.
    """
    k_next = state.k + 1
    tf = model.flow_perm
    th = model.meas_perm
    try:
        m_bar, p_bar = permute_moments(tf, state.mean, state.cov)
        jt = match_structured(model.flow, m_bar, p_bar, model.flow_rule, use_unique)
        q_bar = model.q[np.ix_(tf.indices, tf.indices)]
        p_pred_bar = _symmetrized(jt.p_yy) + q_bar
        m_pred, p_pred = permute_moments(tf.inverse, jt.m_y, p_pred_bar)

        m_bar, p_bar = permute_moments(th, m_pred, p_pred)
        jm = match_structured(model.measurement, m_bar, p_bar, model.meas_rule, use_unique)
        joint = JointGaussian(
            m_x=m_bar, m_y=jm.m_y, p_xx=p_bar, p_xy=jm.p_xy, p_yy=jm.p_yy + model.r
        )
        post_bar = kalman_update(GaussianMoments(m_bar, p_bar), joint, y)
        mean, cov = permute_moments(th.inverse, post_bar.mean, post_bar.cov)
    except (NotPositiveDefiniteError, InnovationDegenerateError) as exc:
        raise FilterStepError(k_next, "update", str(exc)) from exc
    _check_posterior_spd(cov, k_next)
    record = None
    if keep_prediction:
        # cross covariance back in original state coordinates
        cross = joint.p_xy[th.inverse.indices]
        record = PredictionRecord(m_pred, p_pred, joint.m_y, joint.p_yy, cross)
    return FilterState(k=k_next, mean=mean, cov=cov, prediction=record)
