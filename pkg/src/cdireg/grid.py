"""Field arithmetic on a periodic 2-D grid (the flat torus).

Scalar fields are ``(rows, cols)`` float arrays. Vector and coordinate fields
are ``(2, rows, cols)`` arrays whose component 0 runs along axis 0 (rows) and
component 1 along axis 1 (columns). Grid spacing is one pixel.
"""
import numpy as np


def dft2(f):
    """Unnormalized forward 2-D DFT; mode (0, 0) is the sum of all values."""
    return np.fft.fft2(f)


def idft2(F):
    """Inverse of :func:`dft2`, carrying the ``1/(N1*N2)`` factor."""
    return np.fft.ifft2(F)


def identity(shape):
    """Identity coordinate field: node ``(i, j)`` maps to ``(i, j)``."""
    rows, cols = shape
    ii, jj = np.meshgrid(np.arange(rows, dtype=float), np.arange(cols, dtype=float),
                         indexing="ij")
    return np.stack([ii, jj])


def gradient(f):
    """Centered periodic finite-difference gradient, returned as ``(2, rows, cols)``."""
    return np.stack([
        0.5 * (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)),
        0.5 * (np.roll(f, -1, axis=1) - np.roll(f, 1, axis=1)),
    ])


def divergence(h):
    """Periodic centered divergence; the negative adjoint of :func:`gradient`."""
    return (0.5 * (np.roll(h[0], -1, axis=0) - np.roll(h[0], 1, axis=0))
            + 0.5 * (np.roll(h[1], -1, axis=1) - np.roll(h[1], 1, axis=1)))


def laplacian_symbol(shape):
    """Fourier symbol of the negated 5-point Laplacian, ``4 - 2cos(.) - 2cos(.)``."""
    rows, cols = shape
    k0 = 2.0 * np.pi * np.fft.fftfreq(rows)
    k1 = 2.0 * np.pi * np.fft.fftfreq(cols)
    return (2.0 - 2.0 * np.cos(k0))[:, None] + (2.0 - 2.0 * np.cos(k1))[None, :]


def wrap_difference(d, period):
    """Reduce ``d`` to its representative in ``(-period/2, period/2]``."""
    return d - period * np.ceil(d / period - 0.5)


def interp(f, coords):
    """Bilinear interpolation of ``f`` at ``coords`` with torus wrapping.

    Parameters
    ----------
    f : ndarray, shape (rows, cols)
        Field sampled on the grid nodes.
    coords : ndarray, shape (2, ...)
        Continuous grid coordinates; values outside ``[0, N)`` wrap.

    Returns
    -------
    ndarray
        ``f`` evaluated at ``coords``, with the trailing shape of ``coords``.
        Exact at integer coordinates.
    """
    rows, cols = f.shape
    x0 = np.floor(coords[0])
    x1 = np.floor(coords[1])
    w0 = coords[0] - x0
    w1 = coords[1] - x1
    i0 = x0.astype(np.intp) % rows
    j0 = x1.astype(np.intp) % cols
    i1 = (i0 + 1) % rows
    j1 = (j0 + 1) % cols
    return ((1.0 - w0) * ((1.0 - w1) * f[i0, j0] + w1 * f[i0, j1])
            + w0 * ((1.0 - w1) * f[i1, j0] + w1 * f[i1, j1]))


def displacement(phi):
    """Displacement ``phi(x) - x`` with each component wrapped onto the torus."""
    shape = phi.shape[1:]
    u = phi - identity(shape)
    return np.stack([wrap_difference(u[0], shape[0]), wrap_difference(u[1], shape[1])])


def compose(phi, coords):
    """Evaluate the coordinate field ``phi`` at ``coords``, i.e. ``phi o coords``.

    Interpolation acts on the periodic displacement of ``phi`` so that maps
    stored with values outside ``[0, N)`` never produce wraparound seams.
    """
    u = displacement(phi)
    return np.stack([coords[0] + interp(u[0], coords), coords[1] + interp(u[1], coords)])


def jacobian_det(phi):
    """Jacobian determinant of a coordinate map by centered differences.

    Differences of each coordinate are reduced to the representative nearest
    the identity difference, so maps wrapping around the torus are handled.
    """
    shape = phi.shape[1:]
    jac = np.empty((2, 2) + shape)
    for c in range(2):
        for a in range(2):
            d = np.roll(phi[c], -1, axis=a) - np.roll(phi[c], 1, axis=a)
            expected = 2.0 if a == c else 0.0
            jac[c, a] = 0.5 * (expected + wrap_difference(d - expected, shape[c]))
    return jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
