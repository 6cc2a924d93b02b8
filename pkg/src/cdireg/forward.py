"""Fourier-modulus forward operator, back-projection and similarity energies."""
import enum

import numpy as np

from .grid import dft2, idft2

#: Relative modulus below which a Fourier mode carries no phase.
PHASE_EPS = 1e-12


class SimilarityKind(str, enum.Enum):
    L2 = "l2"
    CROSS_CORRELATION = "cc"


class DegenerateInputError(ValueError):
    """Raised when a similarity measure is undefined (e.g. flat amplitudes)."""


def forward_modulus(f):
    """Far-field amplitudes ``|dft2(f)|``."""
    return np.abs(dft2(f))


def phase_factor(spectrum):
    """Unit phase ``s/|s|``, set to zero on modes with negligible modulus."""
    mod = np.abs(spectrum)
    keep = mod > PHASE_EPS * mod.max() if mod.size else mod
    out = np.zeros_like(spectrum)
    np.divide(spectrum, mod, out=out, where=keep)
    return out


def backproject(residual, estimate):
    """Real-space residual ``Re idft2(residual * phase(dft2(estimate)))``.

    Note the adjoint of the unnormalized :func:`~cdireg.grid.dft2` is
    ``N1*N2*idft2``, so the derivative of ``sum(residual * |dft2(f)|)`` with
    respect to ``f`` is ``N1*N2 * backproject(residual, f)``.
    """
    return np.real(idft2(residual * phase_factor(dft2(estimate))))


def l2_energy(beta, b):
    """Sum of squared amplitude differences and the residual ``beta - b``."""
    residual = beta - b
    return float(np.sum(residual * residual)), residual


def _centered(beta, b):
    bb = beta - beta.mean()
    db = b - b.mean()
    A = float(np.sum(bb * db))
    B = float(np.sum(bb * bb))
    C = float(np.sum(db * db))
    if B <= 0.0 or C <= 0.0:
        raise DegenerateInputError("cross correlation undefined for flat amplitudes")
    return bb, db, A, B, C


def cc_energy(beta, b):
    """Negative half squared normalized cross correlation, ``-A^2 / (2BC)``.

    Both amplitude fields are mean-subtracted over the full measurement grid.

    Returns
    -------
    energy : float
        Value in ``[-1/2, 0]``.
    A, B, C : float
        ``<beta', b'>``, ``|beta'|^2`` and ``|b'|^2`` for the centered fields.
    """
    _, _, A, B, C = _centered(beta, b)
    return -A * A / (2.0 * B * C), A, B, C


def cc_residual(beta, b, estimate):
    """Real-space residual of the cross-correlation energy.

    ``(A/(BC)) * ((A/B) * bp(beta') - bp(b'))`` with ``bp`` the back-projection
    through the phase of ``estimate``.
    """
    bb, db, A, B, C = _centered(beta, b)
    # backproject is linear in the residual: combine first, transform once.
    return backproject((A / (B * C)) * ((A / B) * bb - db), estimate)
