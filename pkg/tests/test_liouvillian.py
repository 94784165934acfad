"""Generator assembly: independent superoperator oracle and structure checks."""

import numpy as np
import pytest

from vibrecoil.config import GAMMA, load_config
from vibrecoil.greens import evaluate_greens_data, greens, self_limits
from vibrecoil.hilbert import build_basis, initial_state, position_quadrature
from vibrecoil.liouvillian import (ALL_TERMS, assemble, dark_mode_check,
                                   modes_for_config)

TWO_ATOM_LASER = """
[system]
n_atoms = 2
positions = -1.1 0.3 0; 1.0 -0.2 0.4
kappa = 0.05
dipole = e+
oscillation = z
[trap]
omega_t = 0.7
[laser]
rabi = 0.3
detuning = -0.4
propagation = z
[basis]
n_vib = 2
quantized_atoms = all
"""


def _vec_super(a, b):
    """Superoperator matrix of rho -> a @ rho @ b for row-major vec."""
    return np.kron(a, b.T)


def dense_superoperator(cfg, mask=ALL_TERMS):
    """Independent dense construction of the generator, term by term.

    Built from explicit lowering/quadrature operators on the full space and
    np.kron, with the displacement expansion written out directly; shares
    nothing with the block-structured apply path beyond the kernel values.
    """
    basis = build_basis(cfg)
    d = basis.dimension
    v = basis.vib_dim
    n = cfg.n_atoms
    kappa = cfg.kappa
    eye_v = np.eye(v)
    eye_d = np.eye(d)

    def internal(j, jp):
        m = np.zeros((basis.n_internal, basis.n_internal))
        m[j, jp] = 1.0
        return m

    def lower(j):
        return np.kron(internal(0, j), eye_v)

    def xop(atom):
        return np.kron(np.eye(basis.n_internal),
                       position_quadrature(basis, atom))

    gdata = evaluate_greens_data(cfg)

    # Hamiltonian: trap + laser (expanded recoil phase) + coherent exchange
    h = np.zeros((d, d), dtype=complex)
    for flat in range(d):
        _, occ = basis.unflat(flat)
        h[flat, flat] += cfg.omega_t * (sum(occ) + 0.5 * len(occ))
    if cfg.laser is not None:
        las = cfg.laser
        keff = kappa * float(np.dot(las.propagation,
                                    cfg.oscillation_direction))
        for atom in range(1, n + 1):
            phase = np.exp(1j * np.dot(las.propagation,
                                       cfg.positions[atom - 1]))
            x = xop(atom)
            f = eye_d + 1j * keff * x - 0.5 * keff**2 * (x @ x)
            raise_op = lower(atom).conj().T
            h += 0.5 * las.rabi * phase * (raise_op @ f)
            h += 0.5 * np.conj(las.rabi * phase) * (f.conj().T @ lower(atom))
            h -= las.detuning * (raise_op @ lower(atom))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            t = gdata.taylor[(i, j)]
            dx = xop(i + 1) - xop(j + 1)
            m = (t.g0.imag * eye_d + kappa * t.g1.imag * dx
                 + 0.5 * kappa**2 * t.g2.imag * (dx @ dx))
            h += m @ lower(i + 1).conj().T @ lower(j + 1)

    sup = -1j * (_vec_super(h, eye_d) - _vec_super(eye_d, h))

    # dissipator: anticommutator with unprimed coordinates, sandwich with
    # the emitter quadrature on the left and the absorber on the right
    for i in range(n):
        for j in range(n):
            t = gdata.taylor[(i, j)]
            si = lower(i + 1)
            sj = lower(j + 1)
            xi, xj = xop(i + 1), xop(j + 1)
            if i == j:
                m = t.g0.real * eye_d
            else:
                dx = xi - xj
                m = (t.g0.real * eye_d + kappa * t.g1.real * dx
                     + 0.5 * kappa**2 * t.g2.real * (dx @ dx))
            anti = m @ si.conj().T @ sj
            sup -= _vec_super(anti, eye_d) + _vec_super(eye_d, anti)
            # 2 Re g(X_i - X_j'): X_i multiplies from the left, X_j' right
            a = si
            b = sj.conj().T
            sup += 2.0 * t.g0.real * _vec_super(a, b)
            sup += 2.0 * kappa * t.g1.real * (_vec_super(xi @ a, b)
                                              - _vec_super(a, b @ xj))
            g2r = kappa**2 * t.g2.real
            sup += g2r * (_vec_super(xi @ xi @ a, b)
                          + _vec_super(a, b @ xj @ xj))
            sup -= 2.0 * g2r * _vec_super(xi @ a, b @ xj)
    return sup


def test_superoperator_oracle_50_random():
    cfg = load_config(TWO_ATOM_LASER)
    basis = build_basis(cfg)
    gset = assemble(cfg, basis, evaluate_greens_data(cfg))
    sup = dense_superoperator(cfg)
    rng = np.random.default_rng(7)
    d = basis.dimension
    worst = 0.0
    for _ in range(50):
        m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        rho = 0.5 * (m + m.conj().T)
        fast = gset.apply(rho)
        ref = (sup @ rho.reshape(-1)).reshape(d, d)
        worst = max(worst, float(np.max(np.abs(fast - ref))))
    assert worst < 1e-12


def test_per_term_additivity_and_masking():
    cfg = load_config(TWO_ATOM_LASER)
    basis = build_basis(cfg)
    gset = assemble(cfg, basis, evaluate_greens_data(cfg))
    rho = initial_state(basis, "uniform")
    terms = gset.apply_terms(rho)
    assert set(terms) == set(gset.active_terms)
    total = gset.apply(rho)
    assert np.allclose(sum(terms.values()), total, atol=1e-15)
    partial = gset.apply(rho, mask=("trap", "dd"))
    assert np.allclose(partial, terms["trap"] + terms["dd"], atol=1e-15)
    with pytest.raises(ValueError, match="unknown"):
        gset.apply(rho, mask=("bogus",))


def test_generator_preserves_trace_and_hermiticity():
    cfg = load_config(TWO_ATOM_LASER)
    basis = build_basis(cfg)
    gset = assemble(cfg, basis, evaluate_greens_data(cfg))
    rng = np.random.default_rng(3)
    d = basis.dimension
    for _ in range(10):
        m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        rho = 0.5 * (m + m.conj().T)
        drho = gset.apply(rho)
        assert abs(np.trace(drho)) < 1e-12 * d
        assert np.max(np.abs(drho - drho.conj().T)) < 1e-12


def test_single_atom_dissipator_coefficients():
    """Transition rates out of |e, n=0> pin the three recoil coefficients.

    With the oscillation along z and circular dipole the self curvature is
    g'' = -0.2 Gamma; the dissipator must move population to |g, 0> at
    Gamma + 2 kappa^2 g'', to |g, 1> at -2 kappa^2 g'', and build the
    |g,0><g,2| coherence at sqrt(2) kappa^2 g''.
    """
    cfg = load_config("""
[system]
n_atoms = 1
kappa = 0.1
dipole = e+
oscillation = z
[trap]
omega_t = 1.0
[basis]
n_vib = 3
""")
    basis = build_basis(cfg)
    gset = assemble(cfg, basis, evaluate_greens_data(cfg))
    rho = initial_state(basis, "single_excited", atom=1)
    drho = gset.apply_terms(rho, mask=("jump_diagonal",))["jump_diagonal"]
    _, g2 = self_limits(cfg.dipole_orientation, cfg.oscillation_direction)
    k2g = cfg.kappa**2 * g2
    i_g0 = basis.flat_index(0, (0,))
    i_g1 = basis.flat_index(0, (1,))
    i_g2 = basis.flat_index(0, (2,))
    i_e0 = basis.flat_index(1, (0,))
    assert drho[i_g0, i_g0].real == pytest.approx(GAMMA + 2 * k2g, rel=1e-12)
    assert drho[i_g1, i_g1].real == pytest.approx(-2 * k2g, rel=1e-12)
    assert drho[i_g2, i_g0].real == pytest.approx(np.sqrt(2) * k2g, rel=1e-12)
    assert drho[i_e0, i_e0].real == pytest.approx(-GAMMA, rel=1e-12)


def test_zeroth_order_reduces_to_fixed_atoms():
    """orders=(0,) must reproduce the fixed-dipole amplitude equations.

    The single-excitation amplitudes obey dc/dt = -G c with G_ii = Gamma/2
    and G_ij = g(R_ij); the excited block of rho is then
    exp(-G t) rho_ee(0) exp(-G^dag t), evaluated here by eigendecomposition.
    """
    cfg = load_config(TWO_ATOM_LASER).replace(laser=None)
    basis = build_basis(cfg)
    gset = assemble(cfg, basis, evaluate_greens_data(cfg), orders=(0,))
    from vibrecoil.dynamics import integrate, resolve_dt

    rho0 = initial_state(basis, "uniform")
    dt = resolve_dt(gset, None)
    t_end = 1.0
    n_steps = int(np.ceil(t_end / dt))
    res = integrate(gset, rho0, dt,
                    mask=("dd", "jump_diagonal", "jump_cross"),
                    n_steps=n_steps)
    v = basis.vib_dim
    block = res.rho.reshape(basis.n_internal, v, basis.n_internal, v)
    rho_ee = np.array([[block[1, 0, 1, 0], block[1, 0, 2, 0]],
                       [block[2, 0, 1, 0], block[2, 0, 2, 0]]])

    g01 = greens(cfg.positions[0] - cfg.positions[1], cfg.dipole_orientation)
    g = np.array([[GAMMA / 2.0, g01], [g01, GAMMA / 2.0]])
    evals, evecs = np.linalg.eig(g)
    expm = evecs @ np.diag(np.exp(-evals * res.t)) @ np.linalg.inv(evecs)
    c0 = np.array([1.0, 1.0]) / np.sqrt(2.0)
    c = expm @ c0
    ref = np.outer(c, c.conj())
    assert np.max(np.abs(rho_ee - ref)) < 1e-8


def test_dark_mode_check_matches_mode_rates():
    cfg = load_config("""
[system]
n_atoms = 3
positions_lambda = -0.4 0 0; 0 0 0; 0.4 0 0
kappa = 0.001
dipole = e+
oscillation = z
[trap]
omega_t = 1.0
[basis]
n_vib = 2
quantized_atoms = 1
""")
    basis = build_basis(cfg)
    gset = assemble(cfg, basis, evaluate_greens_data(cfg))
    modes = modes_for_config(cfg)
    for k in range(3):
        resid = dark_mode_check(gset, modes.eigenvectors[:, k])
        assert resid == pytest.approx(abs(modes.decay_rates[k]), rel=1e-6)


def test_dt_max_positive_and_shrinks_with_coupling():
    far = load_config(TWO_ATOM_LASER)
    near_text = TWO_ATOM_LASER.replace(
        "positions = -1.1 0.3 0; 1.0 -0.2 0.4",
        "positions = -0.1 0 0; 0.1 0 0").replace("kappa = 0.05",
                                                 "kappa = 0.01")
    near = load_config(near_text)
    g_far = assemble(far, build_basis(far), evaluate_greens_data(far))
    g_near = assemble(near, build_basis(near), evaluate_greens_data(near))
    assert 0 < g_near.dt_max < g_far.dt_max
