import numpy as _numpy


interactive_list = []


def interactive(obj):
    interactive_list.append(
        {
            'module': obj.__module__,
            'name': obj.__name__
        }
    )

    return obj


class FrozenObject(object):
    """Base class whose instances reject new attributes after __init__.

    Subclasses call self._freeze() at the end of their constructor. Existing
    attributes stay assignable only through object.__setattr__, so model
    specifications can be shared between threads.
    """

    _exception = AttributeError
    __isfrozen = False

    def _freeze(self):
        object.__setattr__(self, '_FrozenObject__isfrozen', True)

    def __setattr__(self, key, value):
        if self.__isfrozen:
            raise self._exception("%r is a frozen class" % self)
        object.__setattr__(self, key, value)


def as_matrix(value, shape, name='matrix'):
    """Convert scalars or nested lists to a float matrix of given shape.

    A scalar is accepted for square shapes and means value*identity.
    """
    arr = _numpy.array(value, dtype=float)
    if arr.ndim == 0:
        if shape[0] != shape[1]:
            raise ValueError(
                "scalar '{0}' needs a square shape, got {1}".format(name, shape))
        return float(arr)*_numpy.eye(shape[0])
    if arr.shape != tuple(shape):
        raise ValueError("'{0}' must have shape {1}, got {2}".format(
            name, tuple(shape), arr.shape))
    return arr


def as_vector(value, size, name='vector'):
    """Convert scalars or lists to a float vector of given size."""
    arr = _numpy.array(value, dtype=float)
    if arr.ndim == 0:
        return _numpy.full(size, float(arr))
    arr = arr.reshape(-1)
    if arr.shape != (size,):
        raise ValueError("'{0}' must have {1} entries, got {2}".format(
            name, size, arr.size))
    return arr


def psd_sqrt(matrix, clip=1e-10):
    """Symmetric square root of a positive semidefinite matrix.

    Eigenvalues in [-clip, 0) are set to zero; anything more negative raises
    ValueError.
    """
    matrix = _numpy.asarray(matrix, dtype=float)
    sym = 0.5*(matrix + matrix.T)
    values, vectors = _numpy.linalg.eigh(sym)
    if values.size and values.min() < -clip*max(1.0, abs(values).max()):
        raise ValueError(
            'matrix is not positive semidefinite (eigenvalue {0:.3e})'.format(
                values.min()))
    values = _numpy.clip(values, 0.0, None)
    return (vectors*_numpy.sqrt(values)) @ vectors.T


def sup_norm(segments):
    """Grid sup of the Euclidean norm over the second-to-last axis."""
    segments = _numpy.asarray(segments, dtype=float)
    return _numpy.sqrt((segments**2).sum(axis=-1)).max(axis=-1)
