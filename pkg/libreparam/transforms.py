"""
Standardization transformations ``z = T(eps; v)``, their inverses, log-Jacobians and the auxiliary functions
``h = d T / d v`` and ``u = d log|J| / d v`` evaluated at fixed ``eps``.

Scalar kinds work element-wise and broadcast ``z`` against the parameters, so ``z`` may carry a leading sample axis.
For :attr:`TransformKinds.DIRICHLET_FULLCOV` the last axis is the event axis. Its ``h`` has two trailing axes: the
latent component ``k`` first and the concentration ``i`` second.
"""

import logging
from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional

import numpy as np

from libreparam import specialfn
from libreparam.dists import (
    BetaParams,
    DirichletParams,
    FamilyParams,
    GammaParams,
    LogNormalParams,
    family_of,
    require_interior,
)
from libreparam.enums import Families, Supports, TransformKinds
from libreparam.exceptions import DomainError, NumericalError, RangeError
from libreparam.utils import logit, sigmoid

_logger = logging.getLogger(__name__)

_LOG_MAX = np.log(np.finfo(float).max)
_DEGENERATE_COEFFICIENT = 1e-12
_EIGENVALUE_TOLERANCE = 1e-10
_LYAPUNOV_TOLERANCE = 1e-12


@dataclass(frozen=True)
class TransformEval:
    """
    Everything a gradient estimator needs from one transformation evaluated at the drawn ``z``.

    ``degenerate`` is only set by the adaptive beta kind and marks samples that fell back to the standard deviation
    mode.
    """

    z: np.ndarray
    eps: np.ndarray
    log_abs_det_jac: np.ndarray
    h: Dict[str, np.ndarray]
    u: Dict[str, np.ndarray]
    degenerate: Optional[np.ndarray] = None


class PhiDerivatives(NamedTuple):
    """
    Derivatives of ``log(sigma)`` of the beta logit transform with respect to alpha and beta.
    """

    alpha: np.ndarray
    beta: np.ndarray
    degenerate: np.ndarray


def _checked_exp(exponent: np.ndarray) -> np.ndarray:
    if np.any(exponent > _LOG_MAX):
        raise RangeError("The transformation overflowed while mapping back to the latent space.")
    value = np.exp(exponent)
    if np.any(value <= 0.0):
        raise RangeError("The transformation underflowed to the boundary of the support.")
    return value


def _filled(value, like: np.ndarray) -> np.ndarray:
    return value + np.zeros_like(like)


class GammaStd:
    """
    ``eps = (log z - digamma(a) + log b) / sqrt(trigamma(a))``.
    """

    family = Families.GAMMA

    @staticmethod
    def inverse(params: GammaParams, z):
        z = require_interior(z, Supports.POSITIVE)
        a, b = params.shape, params.rate
        return (np.log(z) - specialfn.digamma(a) + np.log(b)) / np.sqrt(specialfn.trigamma(a))

    @staticmethod
    def _exponent(params: GammaParams, eps):
        a, b = params.shape, params.rate
        return eps * np.sqrt(specialfn.trigamma(a)) + specialfn.digamma(a) - np.log(b)

    @classmethod
    def forward(cls, params: GammaParams, eps):
        return _checked_exp(cls._exponent(params, np.asarray(eps, dtype=float)))

    @classmethod
    def log_abs_det_jacobian(cls, params: GammaParams, eps):
        eps = np.asarray(eps, dtype=float)
        return cls._exponent(params, eps) + 0.5 * np.log(specialfn.trigamma(params.shape))

    @classmethod
    def aux(cls, params: GammaParams, eps):
        eps = np.asarray(eps, dtype=float)
        a, b = params.shape, params.rate
        trigamma = specialfn.trigamma(a)
        tetragamma = specialfn.tetragamma(a)
        root = np.sqrt(trigamma)
        t = cls.forward(params, eps)
        shape_term = eps * tetragamma / (2.0 * root) + trigamma
        h = {"shape": t * shape_term, "rate": -t / b}
        u = {"shape": shape_term + tetragamma / (2.0 * trigamma), "rate": _filled(-1.0 / b, t)}
        return h, u


class LogNormalStd:
    """
    ``eps = (log z - loc) / scale``. The transformed variable is standard normal.
    """

    family = Families.LOGNORMAL

    @staticmethod
    def inverse(params: LogNormalParams, z):
        z = require_interior(z, Supports.POSITIVE)
        return (np.log(z) - params.loc) / params.scale

    @staticmethod
    def forward(params: LogNormalParams, eps):
        return _checked_exp(params.loc + params.scale * np.asarray(eps, dtype=float))

    @staticmethod
    def log_abs_det_jacobian(params: LogNormalParams, eps):
        return params.loc + params.scale * np.asarray(eps, dtype=float) + np.log(params.scale)

    @classmethod
    def aux(cls, params: LogNormalParams, eps):
        eps = np.asarray(eps, dtype=float)
        t = cls.forward(params, eps)
        h = {"loc": t, "scale": eps * t}
        u = {"loc": np.ones_like(t), "scale": eps + 1.0 / params.scale}
        return h, u


def _beta_sigma(params: BetaParams) -> np.ndarray:
    return np.sqrt(specialfn.trigamma(params.alpha) + specialfn.trigamma(params.beta))


def _beta_stddev_phi(params: BetaParams):
    variance = specialfn.trigamma(params.alpha) + specialfn.trigamma(params.beta)
    return (
        specialfn.tetragamma(params.alpha) / (2.0 * variance),
        specialfn.tetragamma(params.beta) / (2.0 * variance),
    )


def beta_phi_derivs(params: BetaParams, z) -> PhiDerivatives:
    """
    Choose the derivatives of ``phi = log(sigma)`` so that the per-sample correction integrand of the adaptive beta
    transform vanishes for both parameters. The product ``eps * sigma`` equals ``logit(z) - digamma(a) + digamma(b)``,
    so the solve does not need the value of sigma.

    :param params: The beta parameters.
    :param z: Latent values strictly inside ``(0, 1)``.
    :return: Both derivatives and a mask of the samples whose linear coefficient ``eps * sigma * C + 1`` is smaller
             than ``1e-12`` in magnitude. Their derivatives are the standard deviation mode values instead.
    :raises DomainError: In case ``z`` lies outside ``(0, 1)``.
    """
    z = require_interior(z, Supports.UNIT_INTERVAL)
    a, b = params.alpha, params.beta
    scaled_eps = logit(z) - specialfn.digamma(a) + specialfn.digamma(b)
    c = a - (a + b) * z
    digamma_sum = specialfn.digamma(a + b)
    score_a = digamma_sum - specialfn.digamma(a) + np.log(z)
    score_b = digamma_sum - specialfn.digamma(b) + np.log1p(-z)
    coefficient = scaled_eps * c + 1.0
    degenerate = np.abs(coefficient) < _DEGENERATE_COEFFICIENT
    safe = np.where(degenerate, 1.0, coefficient)
    fallback_a, fallback_b = _beta_stddev_phi(params)
    phi_a = np.where(degenerate, fallback_a, -(score_a + specialfn.trigamma(a) * c) / safe)
    phi_b = np.where(degenerate, fallback_b, -(score_b - specialfn.trigamma(b) * c) / safe)
    return PhiDerivatives(phi_a, phi_b, np.asarray(degenerate))


class BetaLogit:
    """
    ``eps = (logit z - digamma(a) + digamma(b)) / sigma`` with ``sigma = sqrt(trigamma(a) + trigamma(b))``.

    With ``adaptive`` set, only the derivatives of ``log(sigma)`` change. They are solved per sample so that the
    correction term vanishes, see :func:`beta_phi_derivs`.
    """

    family = Families.BETA

    def __init__(self, adaptive: bool):
        self.adaptive = adaptive

    @staticmethod
    def inverse(params: BetaParams, z):
        z = require_interior(z, Supports.UNIT_INTERVAL)
        mean = specialfn.digamma(params.alpha) - specialfn.digamma(params.beta)
        return (logit(z) - mean) / _beta_sigma(params)

    @staticmethod
    def _argument(params: BetaParams, eps):
        mean = specialfn.digamma(params.alpha) - specialfn.digamma(params.beta)
        return np.asarray(eps, dtype=float) * _beta_sigma(params) + mean

    @classmethod
    def forward(cls, params: BetaParams, eps):
        t = sigmoid(cls._argument(params, eps))
        if np.any(t <= 0.0) or np.any(t >= 1.0):
            raise RangeError("The transformation saturated at the boundary of the unit interval.")
        return t

    @classmethod
    def log_abs_det_jacobian(cls, params: BetaParams, eps):
        argument = cls._argument(params, eps)
        return -np.logaddexp(0.0, -argument) - np.logaddexp(0.0, argument) + np.log(_beta_sigma(params))

    def aux(self, params: BetaParams, eps):
        eps = np.asarray(eps, dtype=float)
        a, b = params.alpha, params.beta
        t = self.forward(params, eps)
        scaled_eps = eps * _beta_sigma(params)
        degenerate = None
        if self.adaptive:
            phi = beta_phi_derivs(params, t)
            phi_a, phi_b, degenerate = phi.alpha, phi.beta, phi.degenerate
            if np.any(degenerate):
                _logger.warning(
                    "Adaptive beta transform fell back to the standard deviation mode for %d sample(s).",
                    int(np.count_nonzero(degenerate)),
                )
        else:
            phi_a, phi_b = _beta_stddev_phi(params)
        inner_a = specialfn.trigamma(a) + scaled_eps * phi_a
        inner_b = -specialfn.trigamma(b) + scaled_eps * phi_b
        slope = t * (1.0 - t)
        h = {"alpha": slope * inner_a, "beta": slope * inner_b}
        u = {
            "alpha": (1.0 - 2.0 * t) * inner_a + phi_a,
            "beta": (1.0 - 2.0 * t) * inner_b + phi_b,
        }
        return h, u, degenerate


def dirichlet_cov(params: DirichletParams) -> np.ndarray:
    """
    Covariance of ``log z`` under the Dirichlet: ``diag(trigamma(a)) - trigamma(a0) 1 1^T``.
    """
    alpha = params.alpha
    k = alpha.shape[-1]
    off_diagonal = np.asarray(specialfn.trigamma(params.alpha0))[..., None, None] * np.ones((k, k))
    return _diag(specialfn.trigamma(alpha)) - off_diagonal


def _diag(values: np.ndarray) -> np.ndarray:
    return values[..., :, None] * np.eye(values.shape[-1])


class _DirichletGeometry:
    """
    Eigendecomposition of the Dirichlet covariance and everything derived from it, computed once per evaluation.
    """

    def __init__(self, params: DirichletParams):
        self.params = params
        alpha = params.alpha
        self.k = alpha.shape[-1]
        self.mean = specialfn.digamma(alpha) - np.asarray(specialfn.digamma(params.alpha0))[..., None]
        eigenvalues, self.vectors = np.linalg.eigh(dirichlet_cov(params))
        if np.any(eigenvalues < -_EIGENVALUE_TOLERANCE):
            raise NumericalError("The Dirichlet covariance has a negative eigenvalue %g." % eigenvalues.min())
        clamped = eigenvalues <= 0.0
        if np.any(clamped):
            _logger.warning("Clamped %d tiny negative eigenvalue(s) to zero.", int(np.count_nonzero(clamped)))
        self.eigenvalues = np.where(clamped, 0.0, eigenvalues)
        self.roots = np.sqrt(self.eigenvalues)
        self.sqrt = self._rotate(_diag(self.roots))
        self._derivatives = None
        self._rotated_derivatives = None

    def _rotate(self, matrix: np.ndarray) -> np.ndarray:
        """
        ``V matrix V^T``.
        """
        return self.vectors @ matrix @ np.swapaxes(self.vectors, -1, -2)

    def _cov_derivatives(self) -> np.ndarray:
        """
        ``d Sigma / d alpha_i`` stacked along a new axis ``i`` placed before the two matrix axes.
        """
        alpha = self.params.alpha
        k = self.k
        own = specialfn.tetragamma(alpha)[..., :, None, None] * np.eye(k)[:, :, None] * np.eye(k)[:, None, :]
        shared = np.asarray(specialfn.tetragamma(self.params.alpha0))[..., None, None, None] * np.ones((k, k, k))
        return own - shared

    def sqrt_derivatives(self):
        """
        Solve the Lyapunov equation ``X S + S X = d Sigma / d alpha_i`` for every ``i`` in the eigenbasis.

        :return: The derivatives ``X`` and the rotated right-hand sides, both shaped ``(..., K, K, K)`` with ``i``
                 first.
        :raises NumericalError: In case two eigenvalues of the square root sum to less than ``1e-12``.
        """
        if self._derivatives is None:
            pair_sums = self.roots[..., :, None] + self.roots[..., None, :]
            if np.any(pair_sums < _LYAPUNOV_TOLERANCE):
                raise NumericalError("The Dirichlet covariance is singular; the Lyapunov equation has no solution.")
            vectors = self.vectors[..., None, :, :]
            transposed = np.swapaxes(vectors, -1, -2)
            rotated = transposed @ self._cov_derivatives() @ vectors
            self._derivatives = vectors @ (rotated / pair_sums[..., None, :, :]) @ transposed
            self._rotated_derivatives = rotated
        return self._derivatives, self._rotated_derivatives


def dirichlet_cov_sqrt(params: DirichletParams) -> np.ndarray:
    """
    Symmetric square root ``V D^(1/2) V^T`` of :func:`dirichlet_cov`.

    :raises NumericalError: In case the covariance has an eigenvalue below ``-1e-10``.
    """
    return _DirichletGeometry(params).sqrt


def dirichlet_cov_sqrt_deriv(params: DirichletParams, i: int) -> np.ndarray:
    """
    Derivative of :func:`dirichlet_cov_sqrt` with respect to ``alpha_i``.

    :raises IndexError: In case ``i`` is not a valid component index.
    :raises NumericalError: In case the covariance is singular.
    """
    k = params.alpha.shape[-1]
    if not 0 <= i < k:
        raise IndexError("Component index %d is out of range for %d concentrations." % (i, k))
    derivatives, _ = _DirichletGeometry(params).sqrt_derivatives()
    return derivatives[..., i, :, :]


class DirichletFullCov:
    """
    ``z = exp(Sigma^(1/2) eps + mu)`` with ``mu`` and ``Sigma`` the mean and covariance of ``log z``.
    """

    family = Families.DIRICHLET

    @staticmethod
    def inverse(params: DirichletParams, z):
        z = require_interior(z, Supports.SIMPLEX)
        geometry = _DirichletGeometry(params)
        centered = np.log(z) - geometry.mean
        sqrt = np.broadcast_to(geometry.sqrt, centered.shape + (geometry.k,))
        try:
            return np.linalg.solve(sqrt, centered[..., None])[..., 0]
        except np.linalg.LinAlgError as error:
            raise NumericalError("The Dirichlet covariance square root is singular.") from error

    @staticmethod
    def _exponent(geometry: _DirichletGeometry, eps):
        eps = np.asarray(eps, dtype=float)
        return (geometry.sqrt @ eps[..., None])[..., 0] + geometry.mean

    @classmethod
    def forward(cls, params: DirichletParams, eps):
        return _checked_exp(cls._exponent(_DirichletGeometry(params), eps))

    @classmethod
    def log_abs_det_jacobian(cls, params: DirichletParams, eps):
        geometry = _DirichletGeometry(params)
        with np.errstate(divide="ignore"):
            log_det = 0.5 * np.sum(np.log(geometry.eigenvalues), axis=-1)
        return log_det + np.sum(cls._exponent(geometry, eps), axis=-1)

    @classmethod
    def aux(cls, params: DirichletParams, eps):
        eps = np.asarray(eps, dtype=float)
        geometry = _DirichletGeometry(params)
        t = _checked_exp(cls._exponent(geometry, eps))
        derivatives, rotated = geometry.sqrt_derivatives()
        # (..., i, k) -> (..., k, i)
        moved = np.swapaxes((derivatives @ eps[..., None, :, None])[..., 0], -1, -2)
        trigamma = specialfn.trigamma(params.alpha)
        mean_derivative = _diag(trigamma) - np.asarray(specialfn.trigamma(params.alpha0))[..., None, None]
        sensitivity = moved + mean_derivative
        diagonal = np.diagonal(rotated, axis1=-2, axis2=-1)
        trace = np.sum(diagonal / (2.0 * geometry.eigenvalues[..., None, :]), axis=-1)
        h = {"alpha": t[..., :, None] * sensitivity}
        u = {"alpha": trace + np.sum(sensitivity, axis=-2)}
        return h, u


class Identity:
    """
    ``z = eps``. Valid for every family; ``h`` and ``u`` vanish.
    """

    family = None

    def __init__(self, family: Families):
        self.family = family

    def inverse(self, params: FamilyParams, z):
        support = Supports.UNIT_INTERVAL if self.family is Families.BETA else Supports.POSITIVE
        return require_interior(z, support)

    @staticmethod
    def forward(params: FamilyParams, eps):
        return np.asarray(eps, dtype=float)

    def log_abs_det_jacobian(self, params: FamilyParams, eps):
        eps = np.asarray(eps, dtype=float)
        if self.family is Families.DIRICHLET:
            return np.zeros(eps.shape[:-1])
        return np.zeros_like(eps)

    def aux(self, params: FamilyParams, eps):
        eps = np.asarray(eps, dtype=float)
        h, u = {}, {}
        for name, value in params.as_dict().items():
            if self.family is Families.DIRICHLET:
                h[name] = np.zeros(eps.shape + (value.shape[-1],))
            else:
                h[name] = np.zeros_like(eps)
            u[name] = np.zeros_like(eps)
        return h, u


_COMPATIBLE = {
    TransformKinds.GAMMA_STD: {Families.GAMMA},
    TransformKinds.LOGNORMAL_STD: {Families.LOGNORMAL},
    TransformKinds.BETA_LOGIT_STDDEV: {Families.BETA},
    TransformKinds.BETA_LOGIT_ADAPTIVE: {Families.BETA},
    TransformKinds.DIRICHLET_FULLCOV: {Families.DIRICHLET},
    TransformKinds.IDENTITY: set(Families),
}

DEFAULT_TRANSFORMS = {
    Families.GAMMA: TransformKinds.GAMMA_STD,
    Families.BETA: TransformKinds.BETA_LOGIT_STDDEV,
    Families.LOGNORMAL: TransformKinds.LOGNORMAL_STD,
    Families.DIRICHLET: TransformKinds.DIRICHLET_FULLCOV,
}


def compatible(kind: TransformKinds, family: Families) -> bool:
    """
    Whether a transformation may be paired with a variational family.
    """
    return family in _COMPATIBLE[kind]


def is_biased(kind: TransformKinds) -> bool:
    """
    Whether the gradient estimator built on this transformation is biased.
    """
    return kind is TransformKinds.BETA_LOGIT_ADAPTIVE


def _implementation(kind: TransformKinds, params: FamilyParams):
    family = family_of(params)
    if not compatible(kind, family):
        raise DomainError("The %s transformation cannot be used with the %s family." % (kind.value, family.value))
    if kind is TransformKinds.GAMMA_STD:
        return GammaStd
    if kind is TransformKinds.LOGNORMAL_STD:
        return LogNormalStd
    if kind is TransformKinds.BETA_LOGIT_STDDEV:
        return BetaLogit(adaptive=False)
    if kind is TransformKinds.BETA_LOGIT_ADAPTIVE:
        return BetaLogit(adaptive=True)
    if kind is TransformKinds.DIRICHLET_FULLCOV:
        return DirichletFullCov
    return Identity(family)


def _aux(implementation, params: FamilyParams, eps):
    result = implementation.aux(params, eps)
    if len(result) == 3:
        return result
    return result[0], result[1], None


def inverse(kind: TransformKinds, params: FamilyParams, z):
    """
    Map a latent value to its standardized value.

    :raises DomainError: In case ``z`` lies outside the support or the kind does not fit the parameters.
    """
    return _implementation(kind, params).inverse(params, z)


def forward(kind: TransformKinds, params: FamilyParams, eps):
    """
    Map a standardized value to the latent space.

    :raises RangeError: In case the result overflows or saturates at a support boundary.
    """
    return _implementation(kind, params).forward(params, eps)


def log_abs_det_jacobian(kind: TransformKinds, params: FamilyParams, eps):
    """
    ``log |det d T / d eps|``.
    """
    return _implementation(kind, params).log_abs_det_jacobian(params, eps)


def aux_h(kind: TransformKinds, params: FamilyParams, z) -> Dict[str, np.ndarray]:
    """
    ``d T / d v`` per parameter, evaluated at ``eps = inverse(z)``.
    """
    implementation = _implementation(kind, params)
    return _aux(implementation, params, implementation.inverse(params, z))[0]


def aux_u(kind: TransformKinds, params: FamilyParams, z) -> Dict[str, np.ndarray]:
    """
    ``d log|J| / d v`` per parameter, evaluated at ``eps = inverse(z)``.
    """
    implementation = _implementation(kind, params)
    return _aux(implementation, params, implementation.inverse(params, z))[1]


def evaluate(kind: TransformKinds, params: FamilyParams, z) -> TransformEval:
    """
    Evaluate the inverse, the log-Jacobian and both auxiliary functions at once for the drawn ``z``.
    """
    implementation = _implementation(kind, params)
    z = np.asarray(z, dtype=float)
    eps = implementation.inverse(params, z)
    h, u, degenerate = _aux(implementation, params, eps)
    return TransformEval(
        z=z,
        eps=eps,
        log_abs_det_jac=implementation.log_abs_det_jacobian(params, eps),
        h=h,
        u=u,
        degenerate=degenerate,
    )
