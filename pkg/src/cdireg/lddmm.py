"""Velocity-path registration through a Fourier-modulus forward model."""
import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .actions import Action, DeformationPath, transported_template, update_path
from .forward import (SimilarityKind, backproject, cc_energy, cc_residual,
                      forward_modulus, l2_energy)
from .grid import dft2, gradient, idft2, interp, jacobian_det, laplacian_symbol

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    INDIRECT = "indirect"
    DIRECT = "direct"


class Units(str, enum.Enum):
    """Length unit of velocities, ``eta`` and ``cap``.

    ``UNIT`` maps the longest image side onto length 1 (spacing ``1/N``);
    ``PIXEL`` uses a spacing of one pixel.
    """
    UNIT = "unit"
    PIXEL = "pixel"


@dataclass(frozen=True)
class KernelParams:
    """Weights of ``L = -eta * Laplacian + gamma * id``.

    ``spacing`` is the grid step in the length unit of the velocity space;
    the Laplacian symbol scales as ``1 / spacing**2`` and V inner products
    carry the cell area ``spacing**2``.
    """
    eta: float = 5e-3
    gamma: float = 1.0
    spacing: float = 1.0

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.spacing <= 0:
            raise ValueError(f"spacing must be > 0, got {self.spacing}")

    def symbol(self, shape):
        return self.gamma + self.eta * laplacian_symbol(shape) / self.spacing ** 2


@dataclass(frozen=True)
class RunConfig:
    sigma: float = 1e-3
    kernel: KernelParams = field(default_factory=KernelParams)
    n_steps: int = 10
    cap: float = 1.0 / 500.0
    k_max: int = 1000
    action: Action = Action.GEOMETRIC
    similarity: SimilarityKind = SimilarityKind.CROSS_CORRELATION
    mode: Mode = Mode.INDIRECT
    jacobian_power: float = 1.0
    units: Units = Units.UNIT

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.cap <= 0:
            raise ValueError(f"cap must be > 0, got {self.cap}")
        if self.k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {self.k_max}")
        object.__setattr__(self, "action", Action(self.action))
        object.__setattr__(self, "similarity", SimilarityKind(self.similarity))
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "units", Units(self.units))

    def with_updates(self, **kw):
        return replace(self, **kw)

    def spacing(self, shape):
        if self.units is Units.PIXEL:
            return 1.0
        return 1.0 / max(shape)

    def kernel_for(self, shape):
        """Kernel parameters with the spacing resolved for ``shape``."""
        return replace(self.kernel, spacing=self.spacing(shape))


def _spectral_multiply(w, multiplier):
    return np.real(idft2(dft2(w) * multiplier))


def apply_L(w, kernel):
    """Apply ``L`` to each component of a vector field."""
    return _spectral_multiply(w, kernel.symbol(w.shape[-2:]))


def kernel_smooth(w, kernel):
    """Apply ``K = (L^T L)^{-1}``, mapping L2 gradients to V gradients."""
    return _spectral_multiply(w, kernel.symbol(w.shape[-2:]) ** -2)


def v_inner(a, b, kernel):
    """V inner product ``<La, Lb>`` of two vector fields."""
    return kernel.spacing ** 2 * float(np.sum(apply_L(a, kernel) * apply_L(b, kernel)))


def path_inner(a, b, kernel):
    """Time-integrated V pairing of two velocity paths."""
    return sum(v_inner(x, y, kernel) for x, y in zip(a, b)) / a.shape[0]


def grad_E1(v, sigma):
    return 2.0 * sigma * v


def grad_E2_geometric(I0, Rprime, path, j, kernel):
    """V gradient of the data term for the geometric action at time ``t_j``.

    ``-2 K{ (R' o phi_{t,1}) * grad(I0 o phi_{t,0}) * |D phi_{t,1}| }``
    """
    phi1 = path.phi_t1[j]
    moved = transported_template(I0, path, j, Action.GEOMETRIC)
    w = interp(Rprime, phi1) * jacobian_det(phi1) * gradient(moved)
    return -2.0 * kernel_smooth(w, kernel)


def grad_E2_density(I0, Rprime, path, j, kernel, jacobian_power=1.0):
    """V gradient of the data term for the mass-preserving action at ``t_j``.

    ``2 K{ (I0 o phi_{t,0}) * |D phi_{t,0}| * grad(R' o phi_{t,1}) }``; the
    transported density already carries the Jacobian factor.
    """
    density = transported_template(I0, path, j, Action.MASS_PRESERVING, jacobian_power)
    w = density * gradient(interp(Rprime, path.phi_t1[j]))
    return 2.0 * kernel_smooth(w, kernel)


def step_size(grad, cap):
    """Step ``a`` with ``max |a * grad| = cap`` over all nodes and times.

    Returns ``None`` when the gradient vanishes identically.
    """
    peak = float(np.max(np.sqrt(np.sum(grad * grad, axis=-3))))
    if peak == 0.0:
        return None
    return cap / peak


def endpoint_estimate(I0, path, cfg):
    return transported_template(I0, path, path.n_steps, cfg.action, cfg.jacobian_power)


def data_energy(estimate, b, cfg):
    """Similarity term for the current endpoint estimate."""
    beta = estimate if cfg.mode is Mode.DIRECT else forward_modulus(estimate)
    if cfg.similarity is SimilarityKind.L2:
        return l2_energy(beta, b)[0]
    return cc_energy(beta, b)[0]


def data_residual(estimate, b, cfg):
    """Real-space residual ``R`` with ``d E2 / d estimate = 2 R`` (pixel sums).

    The indirect residuals are the back-projections of the forward module
    times ``N1*N2``, the adjoint scale of the unnormalized DFT. The
    cross-correlation residual is halved because its energy has no leading
    factor 2 when differentiated.
    """
    if cfg.mode is Mode.DIRECT:
        if cfg.similarity is SimilarityKind.L2:
            return estimate - b
        e = estimate - estimate.mean()
        t = b - b.mean()
        _, A, B, C = cc_energy(estimate, b)
        return 0.5 * (A / (B * C)) * ((A / B) * e - t)
    scale = float(estimate.size)
    beta = forward_modulus(estimate)
    if cfg.similarity is SimilarityKind.L2:
        return scale * backproject(beta - b, estimate)
    return 0.5 * scale * cc_residual(beta, b, estimate)


def regularization_energy(v, cfg):
    """``sigma * dt * sum_j |L v_j|_V^2``."""
    return cfg.sigma * path_inner(v, v, cfg.kernel_for(v.shape[-2:]))


def total_energy(v, estimate, b, cfg):
    return regularization_energy(v, cfg) + data_energy(estimate, b, cfg)


def path_distance(v, kernel):
    """Path length ``dt * sum_j |L v_j|`` of a velocity path."""
    return float(sum(np.sqrt(v_inner(x, x, kernel)) for x in v) / v.shape[0])


def energy_of_velocity(I0, v, b, cfg):
    """Total energy after integrating the maps for ``v`` from scratch."""
    path = update_path(DeformationPath.identity(I0.shape, v.shape[0]), v / cfg.spacing(I0.shape))
    return total_energy(v, endpoint_estimate(I0, path, cfg), b, cfg)


def gradient_time_index(j):
    """Sample time used for the gradient of velocity ``v_j`` on ``[t_j, t_{j+1}]``."""
    return j + 1


def assemble_gradient(I0, v, path, R, cfg):
    """Full V gradient ``grad E1 + grad E2`` for every velocity in the path.

    The data-term gradients are computed in pixel units; converting the
    velocity, the image gradient and the area element to the configured
    length unit contributes ``spacing**-3``.
    """
    kernel = cfg.kernel_for(I0.shape)
    scale = kernel.spacing ** -3
    grad = grad_E1(v, cfg.sigma)
    for j in range(v.shape[0]):
        t = gradient_time_index(j)
        if cfg.action is Action.GEOMETRIC:
            grad[j] += scale * grad_E2_geometric(I0, R, path, t, kernel)
        else:
            grad[j] += scale * grad_E2_density(I0, R, path, t, kernel, cfg.jacobian_power)
    return grad


@dataclass
class IterationRecord:
    iteration: int
    energy: float
    e1: float
    e2: float
    max_velocity: float


@dataclass
class RegistrationResult:
    reconstruction: np.ndarray
    path: DeformationPath
    v: np.ndarray
    trace: list
    status: str = "completed"

    @property
    def energies(self):
        return [r.energy for r in self.trace]


def run_registration(I0, b, cfg, callback=None):
    """Gradient descent on the velocity path.

    Parameters
    ----------
    I0 : ndarray
        Template image.
    b : ndarray
        Measured amplitudes (indirect mode) or the target image (direct mode).
    cfg : RunConfig
    callback : callable, optional
        Called once per iteration with an :class:`IterationRecord`.

    Returns
    -------
    RegistrationResult
        The endpoint estimate, the final maps and velocities, and one record
        per iteration. Runs exactly ``cfg.k_max`` iterations unless the
        gradient vanishes identically (``status == "stalled"``).
    """
    I0 = np.asarray(I0, dtype=float)
    b = np.asarray(b, dtype=float)
    if I0.shape != b.shape:
        raise ValueError(f"template shape {I0.shape} does not match data shape {b.shape}")
    n = cfg.n_steps
    v = np.zeros((n, 2) + I0.shape)
    grad = np.zeros_like(v)
    a = 1.0
    path = DeformationPath.identity(I0.shape, n)
    to_pixels = 1.0 / cfg.spacing(I0.shape)
    trace = []
    status = "completed"
    estimate = endpoint_estimate(I0, path, cfg)
    for k in range(cfg.k_max):
        v = v - a * grad
        path = update_path(path, v * to_pixels)
        estimate = endpoint_estimate(I0, path, cfg)
        R = data_residual(estimate, b, cfg)
        grad = assemble_gradient(I0, v, path, R, cfg)
        a = step_size(grad, cfg.cap)
        e1 = regularization_energy(v, cfg)
        e2 = data_energy(estimate, b, cfg)
        vmax = float(np.max(np.sqrt(np.sum(v * v, axis=1))))
        rec = IterationRecord(k, e1 + e2, e1, e2, vmax)
        trace.append(rec)
        if callback is not None:
            callback(rec)
        if a is None:
            status = "stalled"
            log.info("gradient vanished at iteration %d", k)
            break
    return RegistrationResult(estimate, path, v, trace, status)
