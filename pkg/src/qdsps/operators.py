"""Dense density-matrix and superoperator algebra.

Density matrices are vectorized by column stacking, so that
``vec(A @ rho @ B) == kron(B.T, A) @ vec(rho)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10


def vectorize(rho) -> np.ndarray:
    """Column-stack a square matrix into a vector of length ``dim**2``."""
    rho = np.asarray(getattr(rho, "matrix", rho), dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {rho.shape}")
    return rho.reshape(-1, order="F")


def devectorize(vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    dim = int(round(np.sqrt(vec.size)))
    if dim * dim != vec.size:
        raise ValueError(f"vector length {vec.size} is not a perfect square")
    return vec.reshape(dim, dim, order="F")


def left_mult(a: np.ndarray) -> np.ndarray:
    """Superoperator matrix of ``rho -> a @ rho``."""
    return np.kron(np.eye(a.shape[0]), a)


def right_mult(b: np.ndarray) -> np.ndarray:
    """Superoperator matrix of ``rho -> rho @ b``."""
    return np.kron(b.T, np.eye(b.shape[0]))


@dataclass(frozen=True)
class DensityMatrix:
    """A Hermitian density matrix.

    ``kind`` is ``"normalized"`` for physical states or ``"conditional"``
    for the sub-normalized output of no-jump evolution.
    """

    matrix: np.ndarray
    kind: str = "normalized"
    atol: float = field(default=TRACE_TOL, repr=False, compare=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (2, 3):
            raise ValueError(f"density matrix must be 2x2 or 3x3, got {m.shape}")
        if self.kind not in ("normalized", "conditional"):
            raise ValueError(f"unknown density-matrix kind {self.kind!r}")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(m).real
        if self.kind == "normalized":
            if abs(tr - 1.0) > self.atol:
                raise ValueError(f"normalized density matrix has trace {tr!r}")
            if np.linalg.eigvalsh(m).min() < -self.atol:
                raise ValueError("density matrix has a negative eigenvalue")
        elif not (-self.atol <= tr <= 1.0 + self.atol):
            raise ValueError(f"conditional density matrix has trace {tr!r}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def basis(cls, dim: int, level: int) -> "DensityMatrix":
        m = np.zeros((dim, dim), dtype=complex)
        m[level, level] = 1.0
        return cls(m)

    @classmethod
    def from_ket(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def population(self, level: int) -> float:
        return float(self.matrix[level, level].real)

    def populations(self) -> np.ndarray:
        return np.diag(self.matrix).real.copy()

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)


@dataclass(frozen=True)
class SuperOperator:
    """Linear map on column-stacked ``dim x dim`` matrices."""

    dim: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        n = self.dim * self.dim
        if m.shape != (n, n):
            raise ValueError(f"superoperator for dim={self.dim} must be {n}x{n}, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, dim: int) -> "SuperOperator":
        return cls(dim, np.eye(dim * dim))

    def __call__(self, rho) -> np.ndarray:
        return devectorize(self.matrix @ vectorize(rho))

    def __matmul__(self, other: "SuperOperator") -> "SuperOperator":
        self._check(other)
        return SuperOperator(self.dim, self.matrix @ other.matrix)

    def __add__(self, other: "SuperOperator") -> "SuperOperator":
        self._check(other)
        return SuperOperator(self.dim, self.matrix + other.matrix)

    def __sub__(self, other: "SuperOperator") -> "SuperOperator":
        self._check(other)
        return SuperOperator(self.dim, self.matrix - other.matrix)

    def __mul__(self, scalar) -> "SuperOperator":
        return SuperOperator(self.dim, scalar * self.matrix)

    __rmul__ = __mul__

    def _check(self, other):
        if not isinstance(other, SuperOperator) or other.dim != self.dim:
            raise ValueError("superoperator dimension mismatch")


def _square(op, name="operator") -> np.ndarray:
    op = np.asarray(op, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError(f"{name} must be square, got shape {op.shape}")
    return op


def jump_superop(L) -> SuperOperator:
    """``rho -> L rho L^dagger``."""
    L = _square(L, "jump operator")
    return SuperOperator(L.shape[0], np.kron(L.conj(), L))


def anticommutator_superop(a) -> SuperOperator:
    """``rho -> a rho + rho a``."""
    a = _square(a)
    return SuperOperator(a.shape[0], left_mult(a) + right_mult(a))


def commutator_superop(a) -> SuperOperator:
    """``rho -> a rho - rho a``."""
    a = _square(a)
    return SuperOperator(a.shape[0], left_mult(a) - right_mult(a))


def dissipator(L) -> SuperOperator:
    """Lindblad dissipator ``rho -> L rho L^dag - {L^dag L, rho}/2``."""
    L = _square(L, "jump operator")
    return jump_superop(L) - 0.5 * anticommutator_superop(L.conj().T @ L)


def liouvillian(H, losses=()) -> SuperOperator:
    """Generator ``rho -> -i[H, rho] + sum_k D[L_k] rho``."""
    H = _square(H, "Hamiltonian")
    if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-10:
        raise ValueError("Hamiltonian is not Hermitian")
    out = -1j * commutator_superop(H)
    for L in losses:
        L = _square(L, "jump operator")
        if L.shape != H.shape:
            raise ValueError(f"loss operator shape {L.shape} does not match Hamiltonian {H.shape}")
        out = out + dissipator(L)
    return out


def trace_functional(dim: int) -> np.ndarray:
    """Row vector ``w`` with ``w @ vectorize(rho) == trace(rho)``."""
    return np.eye(dim, dtype=complex).reshape(-1, order="F")
