"""Composite single-excitation x vibrational basis and operator builders.

Internal index j runs 0..N with j = 0 the shared ground state and j >= 1
"atom j excited" (low-intensity limit: at most one excitation).  Each atom
in the quantized subset Q carries a truncated harmonic ladder of n_vib
levels; the composite vibrational index is mixed-radix with the first
quantized atom as the fastest digit, so the reduced basis (|Q| = 1) is a
contiguous special case of the full one.  Flat ordering:

    flat = j * n_vib**|Q| + sum_q n_q * n_vib**digit(q)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .config import SystemConfig
from .errors import CapacityError, ConfigError
from .greens import CollectiveModes


@dataclass(frozen=True, eq=False)
class Basis:
    """Index bookkeeping for the composite basis."""

    n_atoms: int
    n_vib: int
    quantized_atoms: Tuple[int, ...]   # 1-based, sorted
    _digit: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_digit",
            {atom: pos for pos, atom in enumerate(self.quantized_atoms)})

    @property
    def n_internal(self) -> int:
        return self.n_atoms + 1

    @property
    def vib_dim(self) -> int:
        return self.n_vib ** len(self.quantized_atoms)

    @property
    def dimension(self) -> int:
        return self.n_internal * self.vib_dim

    def is_quantized(self, atom: int) -> bool:
        return atom in self._digit

    def vib_index(self, occupations: Sequence[int]) -> int:
        """Mixed-radix composite index from per-quantized-atom occupations."""
        if len(occupations) != len(self.quantized_atoms):
            raise ValueError("one occupation per quantized atom expected")
        m = 0
        for pos, n in enumerate(occupations):
            if not 0 <= n < self.n_vib:
                raise ValueError(f"occupation {n} outside 0..{self.n_vib - 1}")
            m += n * self.n_vib**pos
        return m

    def occupations(self, vib_index: int) -> Tuple[int, ...]:
        out = []
        for _ in self.quantized_atoms:
            out.append(vib_index % self.n_vib)
            vib_index //= self.n_vib
        return tuple(out)

    def flat_index(self, j: int, occupations: Sequence[int]) -> int:
        if not 0 <= j <= self.n_atoms:
            raise ValueError(f"internal index {j} outside 0..{self.n_atoms}")
        return j * self.vib_dim + self.vib_index(occupations)

    def unflat(self, flat: int) -> Tuple[int, Tuple[int, ...]]:
        j, m = divmod(flat, self.vib_dim)
        return j, self.occupations(m)

    def block(self, j: int, jp: int) -> Tuple[slice, slice]:
        """Row/column slices of the (j, j') internal block."""
        v = self.vib_dim
        return slice(j * v, (j + 1) * v), slice(jp * v, (jp + 1) * v)

    def vib_operator(self, atom: int, local: np.ndarray) -> np.ndarray:
        """Embed a single-mode operator into the composite vibrational space."""
        if not self.is_quantized(atom):
            raise ValueError(f"atom {atom} carries no vibrational states")
        eye = np.eye(self.n_vib)
        factors = [local if a == atom else eye for a in self.quantized_atoms]
        # first quantized atom is the fastest digit -> it is the last kron factor
        return reduce(np.kron, reversed(factors))

    def top_level_mask(self) -> np.ndarray:
        """Diagonal mask selecting states with any occupation at n_vib - 1."""
        mask_v = np.zeros(self.vib_dim, dtype=bool)
        for m in range(self.vib_dim):
            mask_v[m] = (self.n_vib - 1) in self.occupations(m)
        return np.tile(mask_v, self.n_internal)

    def dump_rows(self) -> Iterable[Tuple[int, int, Tuple[int, ...]]]:
        for flat in range(self.dimension):
            j, occ = self.unflat(flat)
            yield flat, j, occ


def build_basis(config: SystemConfig) -> Basis:
    """Basis for a validated config, guarding the memory footprint.

    The cap accounts for the ~10 density-matrix-sized work arrays a run
    keeps live (RK4 stages plus per-term derivatives).
    """
    basis = Basis(n_atoms=config.n_atoms, n_vib=config.n_vib,
                  quantized_atoms=tuple(sorted(set(config.quantized_atoms))))
    needed = 10 * basis.dimension**2 * 16
    if needed > config.memory_cap_bytes:
        raise CapacityError(
            f"basis dimension {basis.dimension} needs ~{needed} bytes of "
            f"working memory, above the cap of {config.memory_cap_bytes}; "
            "reduce n_vib or quantize fewer atoms")
    return basis


def _ladder_local(n_vib: int) -> np.ndarray:
    a = np.zeros((n_vib, n_vib))
    for n in range(1, n_vib):
        a[n - 1, n] = np.sqrt(n)
    return a


def ladder_ops(basis: Basis, atom: int) -> Tuple[np.ndarray, np.ndarray]:
    """(a, a^dagger) for one quantized atom, embedded in the full space.

    Hard truncation: a^dagger annihilates the top level; leakage is tracked
    by the top-level population monitor during integration.
    """
    if not basis.is_quantized(atom):
        raise ValueError(f"atom {atom} is not in the quantized subset")
    a_vib = basis.vib_operator(atom, _ladder_local(basis.n_vib))
    eye_int = np.eye(basis.n_internal)
    a = np.kron(eye_int, a_vib)
    return a, a.conj().T


def position_quadrature(basis: Basis, atom: int) -> np.ndarray:
    """(a + a^dagger) on the composite vibrational factor (vib_dim square).

    Returns the all-zero matrix for pinned atoms: their displacement
    operator vanishes identically, which is what removes first/second
    order Taylor terms for them.
    """
    if not basis.is_quantized(atom):
        return np.zeros((basis.vib_dim, basis.vib_dim))
    a = _ladder_local(basis.n_vib)
    return basis.vib_operator(atom, a + a.T)


def number_weights(basis: Basis, atom: int) -> np.ndarray:
    """Diagonal weights of (2 a^dagger a + 1) for one quantized atom."""
    pos = basis._digit[atom]
    w = np.empty(basis.dimension)
    for flat in range(basis.dimension):
        _, occ = basis.unflat(flat)
        w[flat] = 2 * occ[pos] + 1
    return w


def momentum_operator(basis: Basis, atom: int) -> np.ndarray:
    """i (a^dagger - a) on the full space (momentum in units of 2*kappa*hbar*k)."""
    a, adag = ladder_ops(basis, atom)
    return 1j * (adag - a)


def initial_state(basis: Basis, kind: str,
                  vib_occupations: Optional[Sequence[int]] = None,
                  atom: Optional[int] = None,
                  modes: Optional[CollectiveModes] = None,
                  mode_index: Optional[int] = None,
                  amplitudes: Optional[Sequence[complex]] = None) -> np.ndarray:
    """Pure-state density matrix (sum_j c_j |j>) x |vib>.

    kind: "ground", "single_excited" (with atom), "uniform",
    "eigenmode" (with modes and mode_index), or "custom" (with amplitudes
    over internal indices 0..N).  Vibrational factor defaults to all atoms
    in their ground state.
    """
    n = basis.n_atoms
    c = np.zeros(basis.n_internal, dtype=complex)
    if kind == "ground":
        c[0] = 1.0
    elif kind == "single_excited":
        if atom is None or not 1 <= atom <= n:
            raise ValueError("single_excited requires an atom index in 1..N")
        c[atom] = 1.0
    elif kind == "uniform":
        c[1:] = 1.0 / np.sqrt(n)
    elif kind == "eigenmode":
        if modes is None or mode_index is None:
            raise ValueError("eigenmode requires collective modes and an index")
        if not 0 <= mode_index < modes.eigenvectors.shape[1]:
            raise ValueError(f"eigenmode index {mode_index} out of range")
        c[1:] = modes.eigenvectors[:, mode_index]
    elif kind == "custom":
        if amplitudes is None or len(amplitudes) != basis.n_internal:
            raise ValueError("custom requires N+1 internal amplitudes")
        c[:] = amplitudes
    else:
        raise ValueError(f"unknown initial state kind {kind!r}")

    norm = np.linalg.norm(c)
    if not norm > 0:
        raise ValueError("initial amplitudes are not normalizable")
    c /= norm

    occ = ([0] * len(basis.quantized_atoms) if vib_occupations is None
           else list(vib_occupations))
    vib = np.zeros(basis.vib_dim, dtype=complex)
    vib[basis.vib_index(occ)] = 1.0
    psi = np.kron(c, vib)
    return np.outer(psi, psi.conj())


def hermiticity_defect(rho: np.ndarray) -> float:
    return float(np.max(np.abs(rho - rho.conj().T)))


def trace_deviation(rho: np.ndarray) -> float:
    return abs(np.trace(rho).real - 1.0) + abs(np.trace(rho).imag)


def min_population(rho: np.ndarray) -> float:
    """Smallest eigenvalue of rho (positivity monitor)."""
    return float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
