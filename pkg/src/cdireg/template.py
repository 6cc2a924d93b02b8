"""Template estimation from diffraction amplitudes alone."""
import enum
from dataclasses import dataclass

import numpy as np

from .grid import idft2

#: Autocorrelation support threshold (fraction of peak) for noise-free data.
THRESHOLD_CLEAN = 1e-3
#: Threshold suited to noisy data.
THRESHOLD_NOISY = 5e-2


class TemplateShape(str, enum.Enum):
    DISK = "disk"
    RECTANGLE = "rect"
    FROM_FILE = "file"


def autocorrelation(b):
    """Circular autocorrelation ``Re idft2(b**2)``, peak shifted to the grid center."""
    return np.fft.fftshift(np.real(idft2(np.asarray(b, dtype=float) ** 2)))


def support_size(auto, threshold_frac):
    """Number of nodes with ``auto >= threshold_frac * max(auto)``."""
    if not 0.0 < threshold_frac < 1.0:
        raise ValueError(f"threshold_frac must lie in (0, 1), got {threshold_frac}")
    return float(np.count_nonzero(auto >= threshold_frac * auto.max()))


def mass_from_data(b):
    """Total mass of a nonnegative object: the zero-frequency amplitude."""
    return float(np.asarray(b)[0, 0])


def estimate_amplitude(m, autoc_support, G):
    """Binary-object amplitude ``G * m / |A|``."""
    for name, value in (("mass", m), ("autocorrelation support", autoc_support), ("G", G)):
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")
    return G * m / autoc_support


@dataclass(frozen=True)
class TemplateSpec:
    """Binary template description.

    ``aspect`` is rows/cols for rectangles. ``center`` defaults to the grid
    center; ``path`` is read for :attr:`TemplateShape.FROM_FILE`.
    """
    shape: TemplateShape = TemplateShape.DISK
    support_area: float = 0.0
    amplitude: float = 1.0
    mass: float = 0.0
    center: tuple = None
    aspect: float = 1.0
    path: str = None

    @classmethod
    def from_mass(cls, shape, mass, amplitude, **kw):
        """Spec with ``support_area = mass / amplitude``."""
        return cls(shape=TemplateShape(shape), support_area=mass / amplitude,
                   amplitude=amplitude, mass=mass, **kw)


def _rect_sides(area, aspect):
    cols = max(1, int(round(np.sqrt(area / aspect))))
    rows = max(1, int(round(area / cols)))
    return rows, cols


def build_template(spec, shape):
    """Render ``spec`` on a grid of ``shape``.

    Raises
    ------
    ValueError
        If the template does not fit inside the domain.
    """
    kind = TemplateShape(spec.shape)
    if kind is TemplateShape.FROM_FILE:
        from .io import read_grid
        grid = read_grid(spec.path)
        if grid.shape != tuple(shape):
            raise ValueError(f"template file shape {grid.shape} does not match {tuple(shape)}")
        return grid
    rows, cols = shape
    c0, c1 = spec.center if spec.center is not None else (rows / 2.0, cols / 2.0)
    ii, jj = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    if kind is TemplateShape.DISK:
        radius = np.sqrt(spec.support_area / np.pi)
        if 2 * radius > min(rows, cols):
            raise ValueError(f"disk of radius {radius:.1f} does not fit in {tuple(shape)}")
        mask = (ii - c0) ** 2 + (jj - c1) ** 2 <= radius ** 2
    else:
        h, w = _rect_sides(spec.support_area, spec.aspect)
        if h > rows or w > cols:
            raise ValueError(f"{h}x{w} rectangle does not fit in {tuple(shape)}")
        top = int(round(c0 - h / 2.0))
        left = int(round(c1 - w / 2.0))
        mask = np.zeros(shape, dtype=bool)
        mask[top:top + h, left:left + w] = True
    return spec.amplitude * mask.astype(float)


def estimate_template(b, action="geometric", G=4.0, shape=TemplateShape.DISK,
                      threshold=THRESHOLD_CLEAN, aspect=1.0):
    """Build a template straight from amplitudes.

    For the geometric action the amplitude follows from ``G``. For the
    mass-preserving action only the mass is constrained: the support is sized
    with the rectangle ratio 4 and the amplitude spreads the measured mass
    over it, so ``G`` is ignored.

    Returns
    -------
    template : ndarray
    report : dict
        ``mass``, ``autocorrelation_support``, ``amplitude``, ``support_area``,
        ``threshold`` and ``G`` (``None`` for the mass-preserving action).
    """
    auto = autocorrelation(b)
    if not np.isfinite(auto).all() or auto.max() <= 0:
        raise ValueError("degenerate autocorrelation: data carries no signal")
    m = mass_from_data(b)
    A = support_size(auto, threshold)
    if action == "geometric":
        a0 = estimate_amplitude(m, A, G)
        used_G = G
    else:
        a0 = estimate_amplitude(m, A, 4.0)
        used_G = None
    spec = TemplateSpec.from_mass(shape, m, a0, aspect=aspect)
    report = {"mass": m, "autocorrelation_support": A, "amplitude": a0,
              "support_area": spec.support_area, "threshold": threshold, "G": used_G}
    return build_template(spec, b.shape), report
