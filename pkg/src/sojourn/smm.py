"""Discrete-time semi-Markov chains in matrix-analytic (state, level) form.

The chain is augmented with a sojourn counter: ``(i, t)`` means "in state
``i`` for the ``t``-th consecutive step".  From ``(i, t)`` it either moves to
``(i, t+1)`` with probability ``rho_i(t)`` or jumps to ``(j, 1)``, ``j != i``,
with probability ``A_ij(t)``.  Augmented states are ordered level-major, so
``(i, t)`` has index ``(t-1)*s + i`` with 0-based ``i``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .core import RhoSequence, SojournPmf, pmf_from_rho
from .errors import InvalidSpec, NoConvergence, Reducible

STOCH_TOL = 1e-12
DIRECT_SOLVE_MAX_STATES = 64
POWER_MAX_ITER = 10**6
POWER_TOL = 1e-12


@dataclass(frozen=True)
class SmmSpec:
    """``rho`` is ``(s, T)`` and ``A`` is ``(T, s, s)``; ``A[t-1]`` is the jump block at level ``t``.

    States whose own maximum sojourn ``T_i`` is below ``T`` are padded: at
    levels past ``T_i`` their continuation probability is 0 and their jump
    row repeats the one at ``T_i``.
    """

    rho: np.ndarray
    A: np.ndarray
    state_T: tuple = field(default=())

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float)
        A = np.array(self.A, dtype=float)
        if rho.ndim != 2:
            raise InvalidSpec("rho must be an (s, T) array")
        s, T = rho.shape
        if s < 2:
            raise InvalidSpec("a semi-Markov chain needs at least two states")
        if A.shape != (T, s, s):
            raise InvalidSpec(f"A must have shape {(T, s, s)}, got {A.shape}")
        for i in range(s):
            for t in range(T):
                if not 0.0 <= rho[i, t] <= 1.0:
                    raise InvalidSpec(f"rho out of [0, 1]: {rho[i, t]!r}", state=i + 1, level=t + 1)
                if A[t, i, i] != 0.0:
                    raise InvalidSpec("jump blocks must have a zero diagonal", state=i + 1, level=t + 1)
                if np.any(A[t, i] < 0.0):
                    raise InvalidSpec("negative jump probability", state=i + 1, level=t + 1)
                total = rho[i, t] + A[t, i].sum()
                if abs(total - 1.0) > STOCH_TOL:
                    raise InvalidSpec(f"row sums to {total!r}, not 1", state=i + 1, level=t + 1)
        if np.any(rho[:, -1] != 0.0):
            i = int(np.flatnonzero(rho[:, -1] != 0.0)[0])
            raise InvalidSpec("rho must vanish at the last level", state=i + 1, level=T)
        Ti = []
        for i in range(s):
            first = int(np.flatnonzero(rho[i] == 0.0)[0])
            if np.any(rho[i, first:] != 0.0):
                raise InvalidSpec("rho must stay 0 after the state's last level", state=i + 1, level=first + 1)
            Ti.append(first + 1)
        rho.setflags(write=False)
        A.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "state_T", tuple(Ti))

    @property
    def s(self) -> int:
        return int(self.rho.shape[0])

    @property
    def T(self) -> int:
        return int(self.rho.shape[1])

    @classmethod
    def from_jump(cls, rho_rows: Sequence[Sequence[float]], J, T: int | None = None) -> "SmmSpec":
        """Time-homogeneous jump targets: ``A_ij(t) = (1 - rho_i(t)) J_ij``.

        ``rho_rows`` may be ragged; row ``i`` has length ``T_i`` and ends in 0.
        """
        J = np.asarray(J, dtype=float)
        s = len(rho_rows)
        if J.shape != (s, s):
            raise InvalidSpec(f"jump matrix must be {s}x{s}")
        if np.any(np.diag(J) != 0.0) or np.any(np.abs(J.sum(axis=1) - 1.0) > STOCH_TOL):
            raise InvalidSpec("jump matrix must be row-stochastic with a zero diagonal")
        rho = _pad_rho(rho_rows, T)
        A = (1.0 - rho).T[:, :, None] * J[None, :, :]
        return cls(rho, A)

    @classmethod
    def from_tensors(cls, rho_rows, A_levels, T: int | None = None) -> "SmmSpec":
        """Explicit jump blocks; missing levels of a short state repeat its last row."""
        rho = _pad_rho(rho_rows, T)
        s, TT = rho.shape
        A_in = [np.asarray(a, dtype=float) for a in A_levels]
        if not A_in:
            raise InvalidSpec("no jump blocks given")
        A = np.zeros((TT, s, s))
        for t in range(TT):
            A[t] = A_in[min(t, len(A_in) - 1)]
        for i, row in enumerate(rho_rows):
            Ti = len(row)
            A[Ti:, i, :] = A[Ti - 1, i, :]
        return cls(rho, A)

    @classmethod
    def from_dict(cls, d: dict) -> "SmmSpec":
        rho = d["rho"]
        T = d.get("T")
        if "states" in d and int(d["states"]) != len(rho):
            raise InvalidSpec(f"'states' is {d['states']} but rho has {len(rho)} rows")
        if "jump" in d:
            return cls.from_jump(rho, d["jump"], T)
        if "A" in d:
            return cls.from_tensors(rho, d["A"], T)
        raise InvalidSpec("spec needs either 'jump' or 'A'")

    @classmethod
    def from_json(cls, text: str) -> "SmmSpec":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {"states": self.s, "T": self.T, "rho": self.rho.tolist(), "A": self.A.tolist()}


def _pad_rho(rows, T=None) -> np.ndarray:
    rows = [np.asarray(r, dtype=float) for r in rows]
    if any(r.ndim != 1 or r.size == 0 for r in rows):
        raise InvalidSpec("each rho row must be a non-empty vector")
    TT = max(r.size for r in rows)
    if T is not None:
        if int(T) < TT:
            raise InvalidSpec(f"T = {T} is shorter than a rho row ({TT})")
        TT = int(T)
    out = np.zeros((len(rows), TT))
    for i, r in enumerate(rows):
        if r[-1] != 0.0:
            raise InvalidSpec("each rho row must end in 0", state=i + 1, level=r.size)
        out[i, : r.size] = r
    return out


@dataclass(frozen=True)
class Blocks:
    A: np.ndarray  # (T, s, s)
    D: np.ndarray  # (T, s, s), diagonal

    @property
    def s(self) -> int:
        return int(self.A.shape[1])

    @property
    def T(self) -> int:
        return int(self.A.shape[0])

    def assemble(self) -> np.ndarray:
        """The full ``sT x sT`` transition matrix, level-major ordering."""
        s, T = self.s, self.T
        M = np.zeros((s * T, s * T))
        for t in range(T):
            M[t * s : (t + 1) * s, :s] = self.A[t]
            if t + 1 < T:
                M[t * s : (t + 1) * s, (t + 1) * s : (t + 2) * s] = self.D[t]
        return M


def build_blocks(spec: SmmSpec) -> Blocks:
    D = np.zeros((spec.T, spec.s, spec.s))
    idx = np.arange(spec.s)
    D[:, idx, idx] = spec.rho.T
    return Blocks(np.array(spec.A), D)


def q_matrices(spec: SmmSpec) -> np.ndarray:
    """``Q(t) = D(1)...D(t-1) A(t)``, stacked as ``(T, s, s)``."""
    reach = np.cumprod(np.vstack((np.ones(spec.s), spec.rho[:, :-1].T)), axis=0)
    return reach[:, :, None] * spec.A


def embedded_chain(spec: SmmSpec) -> np.ndarray:
    return q_matrices(spec).sum(axis=0)


def sojourn_pmf_of_state(spec: SmmSpec, i: int) -> SojournPmf:
    """Sojourn-time PMF of state ``i`` (0-based)."""
    if not 0 <= i < spec.s:
        raise IndexError(f"state {i} out of range")
    return pmf_from_rho(RhoSequence(spec.rho[i, : spec.state_T[i]]))


@dataclass(frozen=True)
class StationaryResult:
    pi: np.ndarray  # (T, s): pi[t-1, i] is the mass on (i, t)
    embedded_pi: np.ndarray
    residual: float
    method: str
    iterations: int = 0

    @property
    def flat(self) -> np.ndarray:
        """Level-major vector matching :meth:`Blocks.assemble`."""
        return self.pi.reshape(-1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state", "level", "prob"])
        T, s = self.pi.shape
        for i in range(s):
            for t in range(T):
                w.writerow([i + 1, t + 1, repr(float(self.pi[t, i]))])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "states": int(self.pi.shape[1]),
            "T": int(self.pi.shape[0]),
            "embedded_pi": self.embedded_pi.tolist(),
            "residual": self.residual,
            "method": self.method,
            "iterations": self.iterations,
        }


def _check_irreducible(B: np.ndarray) -> None:
    n, labels = connected_components(csr_matrix(B > 0.0), directed=True, connection="strong")
    if n > 1:
        groups = [np.flatnonzero(labels == k).tolist() for k in range(n)]
        raise Reducible(f"embedded chain splits into classes {groups}")


def _fixed_point_direct(B: np.ndarray) -> np.ndarray:
    s = B.shape[0]
    M = B.T - np.eye(s)
    M[-1, :] = 1.0
    rhs = np.zeros(s)
    rhs[-1] = 1.0
    return linalg.solve(M, rhs)


def _fixed_point_power(B: np.ndarray, tol=POWER_TOL, max_iter=POWER_MAX_ITER):
    # The lazy chain has the same fixed point and is aperiodic.
    L = 0.5 * (np.eye(B.shape[0]) + B)
    x = np.full(B.shape[0], 1.0 / B.shape[0])
    for it in range(1, max_iter + 1):
        y = x @ L
        y /= y.sum()
        if np.max(np.abs(y - x)) < tol:
            return y, it
        x = y
    raise NoConvergence(f"power iteration did not converge in {max_iter} steps")


def apply_transpose(spec: SmmSpec, pi: np.ndarray) -> np.ndarray:
    """``(script A)' pi`` for ``pi`` shaped ``(T, s)``, using the block structure."""
    out = np.zeros_like(pi)
    out[0] = np.einsum("ti,tij->j", pi, spec.A)
    out[1:] = pi[:-1] * spec.rho[:, :-1].T
    return out


def stationary(spec: SmmSpec, method: str = "auto") -> StationaryResult:
    """Stationary law of the augmented chain.

    The level-1 slice is the fixed point of the embedded chain; higher levels
    follow from ``pi(t) = D(t-1) pi(t-1)``.  The whole vector is then
    normalised to total mass 1.
    """
    B = embedded_chain(spec)
    _check_irreducible(B)
    if method == "auto":
        method = "direct" if spec.s <= DIRECT_SOLVE_MAX_STATES else "power"
    iters = 0
    if method == "direct":
        p1 = _fixed_point_direct(B)
    elif method == "power":
        p1, iters = _fixed_point_power(B)
    else:
        raise ValueError(f"unknown method {method!r}")
    p1 = np.clip(p1, 0.0, None)
    embedded = p1 / p1.sum()
    reach = np.cumprod(np.vstack((np.ones(spec.s), spec.rho[:, :-1].T)), axis=0)
    pi = reach * embedded[None, :]
    pi /= pi.sum()
    residual = float(np.max(np.abs(apply_transpose(spec, pi) - pi)))
    return StationaryResult(pi, embedded, residual, method, iters)


def matrix_polynomial_det(spec: SmmSpec, lam: complex) -> complex:
    """``det(lam^T I - sum_t lam^(T-t) Q(t)')``."""
    Q = q_matrices(spec)
    T, s = spec.T, spec.s
    lam = complex(lam)
    P = lam**T * np.eye(s, dtype=complex)
    for t in range(1, T + 1):
        P -= lam ** (T - t) * Q[t - 1].T
    return complex(linalg.det(P))
