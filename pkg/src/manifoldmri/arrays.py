"""Linear-algebra primitives and the on-disk array format.

Arrays are plain ``numpy.ndarray`` objects of dtype float64 or complex128.
The file layout is::

    b"BSTM" | version u8 (=1) | dtype u8 (0 real64, 1 complex128) | ndim u8
    | ndim x u64 extents (little endian) | payload, little endian, row major

Complex values are stored as interleaved (real, imag) float64 pairs.
"""

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError, NumericalError

MAGIC = b"BSTM"
VERSION = 1
MAX_NDIM = 4
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}
_CODES = {np.dtype(np.float64): 0, np.dtype(np.complex128): 1}

DEFAULT_RANK_TOL = 1e-8


@dataclass
class HermEig:
    """Eigen decomposition of a Hermitian matrix, eigenvalues ascending."""

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self):
        return (self.vectors * self.values) @ self.vectors.conj().T


def _check_square(A):
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise DimensionError(f"expected a non-empty square matrix, got shape {A.shape}")
    return A


def herm_eig(A, hermitian_tol=1e-10):
    """Eigen decomposition of a Hermitian matrix.

    The input is symmetrized as (A + A^H)/2 before factorization. Real
    symmetric input yields real eigenvectors; eigenvector signs/phases are
    arbitrary.
    """
    A = _check_square(A)
    scale = np.linalg.norm(A)
    if scale > 0 and np.linalg.norm(A - A.conj().T) > hermitian_tol * scale:
        raise DimensionError("matrix is not Hermitian within tolerance")
    A = 0.5 * (A + A.conj().T)
    try:
        values, vectors = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Hermitian eigen iteration failed to converge ({exc})") from exc
    return HermEig(values=values, vectors=vectors)


def numerical_rank(A, tol=DEFAULT_RANK_TOL):
    """Number of singular values above ``tol`` times the largest one."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = np.asarray(A)
    if A.ndim != 2 or A.size == 0:
        raise DimensionError(f"expected a non-empty matrix, got shape {A.shape}")
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def random_unitary(n, rng):
    """Haar-distributed unitary matrix (QR of a complex Gaussian matrix)."""
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, R = np.linalg.qr(G)
    d = np.diagonal(R)
    return Q * (d / np.abs(d))


def encode_array(a):
    a = np.asarray(a)
    if a.dtype not in _CODES:
        raise FormatError("dtype", f"unsupported dtype {a.dtype}")
    if not 1 <= a.ndim <= MAX_NDIM:
        raise FormatError("ndim", f"ndim must be in 1..{MAX_NDIM}, got {a.ndim}")
    if any(n < 1 for n in a.shape):
        raise FormatError("shape", f"extents must be >= 1, got {a.shape}")
    header = MAGIC + struct.pack("<BBB", VERSION, _CODES[a.dtype], a.ndim)
    header += struct.pack(f"<{a.ndim}Q", *a.shape)
    payload = np.ascontiguousarray(a, dtype=_DTYPES[_CODES[a.dtype]]).tobytes()
    return header + payload


def decode_array(buf):
    if len(buf) < 7:
        raise FormatError("header", "truncated header")
    if buf[:4] != MAGIC:
        raise FormatError("magic", f"bad magic {buf[:4]!r}")
    version, code, ndim = struct.unpack("<BBB", buf[4:7])
    if version != VERSION:
        raise FormatError("version", f"unsupported version {version}")
    if code not in _DTYPES:
        raise FormatError("dtype", f"unknown dtype code {code}")
    if not 1 <= ndim <= MAX_NDIM:
        raise FormatError("ndim", f"ndim {ndim} out of range")
    end = 7 + 8 * ndim
    if len(buf) < end:
        raise FormatError("shape", "truncated extents")
    shape = struct.unpack(f"<{ndim}Q", buf[7:end])
    if any(n < 1 for n in shape):
        raise FormatError("shape", f"extents must be >= 1, got {shape}")
    dtype = _DTYPES[code]
    nbytes = int(np.prod(shape)) * dtype.itemsize
    if len(buf) - end != nbytes:
        raise FormatError("payload", f"expected {nbytes} bytes, found {len(buf) - end}")
    out = np.frombuffer(buf, dtype=dtype, offset=end).reshape(shape)
    return out.astype(dtype.newbyteorder("="), copy=True)


def write_array(path, a):
    data = encode_array(a)
    with open(os.fspath(path), "wb") as fh:
        fh.write(data)


def read_array(path):
    with open(os.fspath(path), "rb") as fh:
        return decode_array(fh.read())
