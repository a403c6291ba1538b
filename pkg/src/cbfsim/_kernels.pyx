# Hot pointwise kernels for the pseudospectral right-hand side.
# These fuse the 3-component magnitude/product loops that the NumPy fallback
# spells out with temporaries; see cbfsim.kernels for the dispatch layer.

from libc.math cimport pow, sqrt


def absorption_products(double[:, ::1] u, double[:, ::1] v, double r,
                        double[:, ::1] out):
    """out = |u|^(r-1) * v, pointwise over flattened samples (3, m)."""
    cdef Py_ssize_t m = u.shape[1]
    cdef Py_ssize_t j
    cdef double mag2, w
    cdef double e = 0.5 * (r - 1.0)
    if r == 1.0:
        for j in range(m):
            out[0, j] = v[0, j]
            out[1, j] = v[1, j]
            out[2, j] = v[2, j]
    elif r == 3.0:
        for j in range(m):
            mag2 = u[0, j] * u[0, j] + u[1, j] * u[1, j] + u[2, j] * u[2, j]
            out[0, j] = mag2 * v[0, j]
            out[1, j] = mag2 * v[1, j]
            out[2, j] = mag2 * v[2, j]
    elif r == 2.0:
        for j in range(m):
            mag2 = u[0, j] * u[0, j] + u[1, j] * u[1, j] + u[2, j] * u[2, j]
            w = sqrt(mag2)
            out[0, j] = w * v[0, j]
            out[1, j] = w * v[1, j]
            out[2, j] = w * v[2, j]
    else:
        for j in range(m):
            mag2 = u[0, j] * u[0, j] + u[1, j] * u[1, j] + u[2, j] * u[2, j]
            w = pow(mag2, e)
            out[0, j] = w * v[0, j]
            out[1, j] = w * v[1, j]
            out[2, j] = w * v[2, j]


def convective_products(double[:, ::1] u, double[:, :, ::1] grad_v,
                        double[:, ::1] out):
    """out[l] = sum_m u[m] * grad_v[m, l], pointwise over (3, m) samples."""
    cdef Py_ssize_t m = u.shape[1]
    cdef Py_ssize_t j
    cdef double u0, u1, u2
    for j in range(m):
        u0 = u[0, j]
        u1 = u[1, j]
        u2 = u[2, j]
        out[0, j] = u0 * grad_v[0, 0, j] + u1 * grad_v[1, 0, j] + u2 * grad_v[2, 0, j]
        out[1, j] = u0 * grad_v[0, 1, j] + u1 * grad_v[1, 1, j] + u2 * grad_v[2, 1, j]
        out[2, j] = u0 * grad_v[0, 2, j] + u1 * grad_v[1, 2, j] + u2 * grad_v[2, 2, j]


def vector_lp_sum(double[:, ::1] u, double p):
    """sum_j |u(x_j)|^p over flattened samples (3, m), Euclidean magnitude."""
    cdef Py_ssize_t m = u.shape[1]
    cdef Py_ssize_t j
    cdef double mag2
    cdef double acc = 0.0
    cdef double e = 0.5 * p
    if p == 2.0:
        for j in range(m):
            acc += u[0, j] * u[0, j] + u[1, j] * u[1, j] + u[2, j] * u[2, j]
    elif p == 4.0:
        for j in range(m):
            mag2 = u[0, j] * u[0, j] + u[1, j] * u[1, j] + u[2, j] * u[2, j]
            acc += mag2 * mag2
        return acc
    else:
        for j in range(m):
            mag2 = u[0, j] * u[0, j] + u[1, j] * u[1, j] + u[2, j] * u[2, j]
            acc += pow(mag2, e)
    return acc
