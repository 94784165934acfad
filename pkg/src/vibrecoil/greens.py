"""Dipole-dipole Green's function kernel and collective decay modes.

The pair kernel is

    g(R) = (Gamma/2) * [ h0(kR) + A(Rhat) * h2(kR) ],
    A(Rhat) = (3 |Rhat . qhat|^2 - 1) / 2,

with outgoing spherical Hankel functions h0(x) = exp(ix)/(ix) and
h2(x) = (-3i/x^3 - 3/x^2 + i/x) exp(ix).  First and second directional
derivatives along the oscillation axis are evaluated in closed form
(finite differences of this oscillatory kernel lose precision at small
wavepacket spreads).  Self-terms keep only the real part: the divergent
imaginary part at zero separation is the single-atom Lamb shift, absorbed
into the detuning.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .config import GAMMA, SystemConfig
from .errors import NumericsError


def hankel_out(l: int, x: float) -> complex:
    """Outgoing spherical Hankel function h_l^(1)(x) for l in {0, 2}."""
    if x <= 0:
        raise ValueError(f"hankel_out requires x > 0, got {x}")
    e = np.exp(1j * x)
    if l == 0:
        return e / (1j * x)
    if l == 2:
        return (-3j / x**3 - 3.0 / x**2 + 1j / x) * e
    raise ValueError(f"hankel_out supports l in (0, 2), got {l}")


# Below this argument the regular (real) parts of the Hankel derivatives
# cancel catastrophically in double precision; fall back to mpmath.
_SMALL_X = 0.2


def _mp_hankel_derivs(poly, x: float):
    import mpmath as mp

    with mp.workdps(40):
        xm = mp.mpf(x)
        e = mp.e ** (1j * xm)
        vals = []
        for coeffs in poly:
            acc = mp.mpc(0)
            for power, c in coeffs:
                acc += c * xm**power
            vals.append(complex(e * acc))
    return tuple(vals)


def _h0_derivs(x: float):
    """h0 and its first two derivatives."""
    if x < _SMALL_X:
        return _mp_hankel_derivs(
            (((-1, -1j),), ((-1, 1), (-2, 1j)), ((-1, 1j), (-2, -2), (-3, -2j))),
            x)
    e = np.exp(1j * x)
    h0 = e / (1j * x)
    d1 = e * (1.0 / x + 1j / x**2)
    d2 = e * (1j / x - 2.0 / x**2 - 2j / x**3)
    return h0, d1, d2


def _h2_derivs(x: float):
    """h2 and its first two derivatives."""
    if x < _SMALL_X:
        return _mp_hankel_derivs(
            (((-1, 1j), (-2, -3), (-3, -3j)),
             ((-1, -1), (-2, -4j), (-3, 9), (-4, 9j)),
             ((-1, -1j), (-2, 5), (-3, 17j), (-4, -36), (-5, -36j))),
            x)
    e = np.exp(1j * x)
    h2 = e * (1j / x - 3.0 / x**2 - 3j / x**3)
    d1 = e * (-1.0 / x - 4j / x**2 + 9.0 / x**3 + 9j / x**4)
    d2 = e * (-1j / x + 5.0 / x**2 + 17j / x**3 - 36.0 / x**4 - 36j / x**5)
    return h2, d1, d2


def greens(rvec: np.ndarray, q_hat: np.ndarray) -> complex:
    """Pair kernel g(R) for a finite separation vector."""
    rvec = np.asarray(rvec, dtype=float)
    r = float(np.linalg.norm(rvec))
    if r <= 0:
        raise ValueError("greens requires a nonzero separation "
                         "(self-term handled by self_limits)")
    rhat = rvec / r
    u = complex(np.dot(rhat, q_hat))
    a = (3.0 * (u * np.conj(u)).real - 1.0) / 2.0
    return (GAMMA / 2.0) * (hankel_out(0, r) + a * hankel_out(2, r))


def greens_directional(rvec: np.ndarray, e_hat: np.ndarray,
                       q_hat: np.ndarray) -> Tuple[complex, complex, complex]:
    """g and its first/second directional derivatives along e_hat.

    Returns (g, g'/k, g''/k^2); the derivatives are closed-form chain-rule
    expressions through r(s) = |R + s*e| and the angular factor.
    """
    rvec = np.asarray(rvec, dtype=float)
    e_hat = np.asarray(e_hat, dtype=float)
    r = float(np.linalg.norm(rvec))
    if r <= 0:
        raise ValueError("greens_directional requires a nonzero separation")
    c = float(np.dot(rvec, e_hat)) / r          # dr/ds
    r2 = (1.0 - c * c) / r                      # d2r/ds2

    u = complex(np.dot(rvec, q_hat))            # R . q
    ub = complex(np.dot(rvec, np.conj(q_hat)))
    du = complex(np.dot(e_hat, q_hat))
    dub = complex(np.dot(e_hat, np.conj(q_hat)))

    b = u * ub                                  # |R . q|^2 (real, as u_bar = u*)
    db = du * ub + u * dub
    d2b = 2.0 * du * dub

    # A = (3 b / r^2 - 1) / 2 and its s-derivatives
    p = b / r**2
    dp = db / r**2 - 2.0 * b * c / r**3
    d2p = (d2b / r**2 - 4.0 * db * c / r**3
           + 6.0 * b * c * c / r**4 - 2.0 * b * r2 / r**3)
    a0 = (3.0 * p - 1.0) / 2.0
    a1 = 1.5 * dp
    a2 = 1.5 * d2p

    h0, h0p, h0pp = _h0_derivs(r)
    h2, h2p, h2pp = _h2_derivs(r)

    g0 = (GAMMA / 2.0) * (h0 + a0 * h2)
    g1 = (GAMMA / 2.0) * (h0p * c + a1 * h2 + a0 * h2p * c)
    g2 = (GAMMA / 2.0) * (h0pp * c * c + h0p * r2
                          + a2 * h2 + 2.0 * a1 * h2p * c
                          + a0 * (h2pp * c * c + h2p * r2))
    return g0, g1, g2


def self_limits(q_hat: np.ndarray, e_hat: np.ndarray) -> Tuple[float, float]:
    """Real-part self-term limits (Re g(0), Re g''(0)/k^2).

    Re g is smooth at zero separation: the spherical Bessel expansions give
    Re g(0) = Gamma/2 exactly and a curvature set by the angle between the
    oscillation axis and the dipole orientation.
    """
    du = complex(np.dot(e_hat, q_hat))
    a = (3.0 * (du * np.conj(du)).real - 1.0) / 2.0
    return GAMMA / 2.0, GAMMA * (-1.0 / 6.0 + a / 15.0)


@dataclass(frozen=True)
class GreensTaylor:
    """Second-order Taylor data for one ordered atom pair."""

    pair: Tuple[int, int]
    g0: complex
    g1: complex   # g'(R_ij)/k along the oscillation direction
    g2: complex   # g''(R_ij)/k^2

    def __post_init__(self):
        if self.pair[0] == self.pair[1]:
            assert self.g1 == 0.0


def greens_taylor(i: int, j: int, positions: np.ndarray, e_hat: np.ndarray,
                  q_hat: np.ndarray) -> GreensTaylor:
    """Taylor coefficients for the (i, j) pair (0-based atom indices)."""
    if i == j:
        s0, s2 = self_limits(q_hat, e_hat)
        return GreensTaylor(pair=(i, j), g0=s0, g1=0.0, g2=s2)
    rvec = np.asarray(positions)[i] - np.asarray(positions)[j]
    g0, g1, g2 = greens_directional(rvec, e_hat, q_hat)
    return GreensTaylor(pair=(i, j), g0=g0, g1=g1, g2=g2)


@dataclass(frozen=True)
class GreensData:
    """All pair Taylor data for one geometry and oscillation direction."""

    n_atoms: int
    taylor: Dict[Tuple[int, int], GreensTaylor]

    def g0_matrix(self) -> np.ndarray:
        g = np.empty((self.n_atoms, self.n_atoms), dtype=complex)
        for (i, j), t in self.taylor.items():
            g[i, j] = t.g0
        return g


def evaluate_greens_data(config: SystemConfig,
                         oscillation_direction=None) -> GreensData:
    """Taylor data for every ordered pair, including self-terms."""
    e_hat = (config.oscillation_direction if oscillation_direction is None
             else np.asarray(oscillation_direction, dtype=float))
    n = config.n_atoms
    taylor = {}
    for i in range(n):
        for j in range(n):
            taylor[(i, j)] = greens_taylor(i, j, config.positions, e_hat,
                                           config.dipole_orientation)
    return GreensData(n_atoms=n, taylor=taylor)


@dataclass(frozen=True)
class CollectiveModes:
    """Eigendecomposition of the complex symmetric pair-kernel matrix."""

    eigenvalues: np.ndarray    # complex, sorted by decay rate ascending
    eigenvectors: np.ndarray   # columns, unit Euclidean norm
    decay_rates: np.ndarray    # 2 Re(lambda)


def collective_modes(positions: np.ndarray, q_hat: np.ndarray) -> CollectiveModes:
    """Modes of G with G_ij = g(R_ij) off-diagonal and Gamma/2 on the diagonal.

    G is complex symmetric (not Hermitian); a general complex eigensolver is
    used on the symmetrized matrix, so left eigenvectors are transposes of
    the right ones.
    """
    positions = np.asarray(positions, dtype=float)
    n = positions.shape[0]
    g = np.full((n, n), GAMMA / 2.0, dtype=complex)
    for i in range(n):
        for j in range(i + 1, n):
            val = greens(positions[i] - positions[j], q_hat)
            g[i, j] = val
            g[j, i] = val
    g = 0.5 * (g + g.T)  # enforce exact symmetry before decomposing
    try:
        evals, evecs = np.linalg.eig(g)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(
            f"collective mode eigensolver failed to converge; matrix:\n{g}"
        ) from exc
    evecs = evecs / np.linalg.norm(evecs, axis=0, keepdims=True)
    order = np.argsort(2.0 * evals.real, kind="stable")
    evals = evals[order]
    evecs = evecs[:, order]
    return CollectiveModes(eigenvalues=evals, eigenvectors=evecs,
                           decay_rates=2.0 * evals.real)
