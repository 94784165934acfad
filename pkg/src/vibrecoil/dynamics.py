"""Time integration of the master equation and recoil observables.

Vibrational energy and momentum are reported in recoil units:

    E_j = Tr[(2 a_j^dag a_j + 1) rho] / (2 kappa^2)   [E_r]
    p_j = i Tr[(a_j^dag - a_j) rho] / (2 kappa)       [hbar k]

Integration is fixed-step classical RK4: deterministic output byte-for-byte
and simple per-term attribution.  Cumulative per-term energies are
accumulated from the same RK4 stages as the state update, so the per-term
energies sum to the total energy change exactly (the energy functional is
linear in rho).

"Decoherent" energy transfer is the jump_diagonal contribution (direct
population-to-population vibrational transitions); "coherent" is
laser + dd + jump_cross, which all route through density-matrix coherences.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Sequence

import numpy as np

from .config import GAMMA, SystemConfig
from .errors import NumericsError
from .greens import evaluate_greens_data
from .hilbert import (Basis, build_basis, hermiticity_defect, initial_state,
                      min_population, momentum_operator, number_weights)
from .liouvillian import ALL_TERMS, GeneratorSet, assemble, modes_for_config

COHERENT_TERMS = ("laser", "dd", "jump_cross")
DECOHERENT_TERMS = ("jump_diagonal",)

ENERGY_PER_PHOTON_NORMALIZATION = (
    "energy per scattered photon = (dE_j/dt) / (Gamma * P_j); the photon "
    "scattering rate is taken as Gamma times the excitation probability")


@dataclass
class TimeSeries:
    """Sampled observables along one integration."""

    times: np.ndarray                      # (S,) in 1/Gamma
    energy: np.ndarray                     # (S, n_quantized) in E_r
    momentum: np.ndarray                   # (S, n_quantized) in hbar k
    excitation: np.ndarray                 # (S, n_atoms)
    term_energy: Dict[str, np.ndarray]     # cumulative per term, (S, n_quantized)
    top_level_pop: np.ndarray              # (S,) truncation monitor
    trace_dev: np.ndarray                  # (S,)

    @property
    def coherent_energy(self) -> np.ndarray:
        return sum((self.term_energy[t] for t in COHERENT_TERMS
                    if t in self.term_energy), np.zeros_like(self.energy))

    @property
    def decoherent_energy(self) -> np.ndarray:
        return sum((self.term_energy[t] for t in DECOHERENT_TERMS
                    if t in self.term_energy), np.zeros_like(self.energy))


@dataclass
class Observables:
    """Cached operators for the energy/momentum functionals."""

    basis: Basis
    kappa: float
    energy_weights: np.ndarray = field(init=False)   # (nq, D) diag weights
    momentum_ops: np.ndarray = field(init=False)     # (nq, D, D)
    top_mask: np.ndarray = field(init=False)

    def __post_init__(self):
        atoms = self.basis.quantized_atoms
        self.energy_weights = np.array(
            [number_weights(self.basis, a) for a in atoms])
        self.momentum_ops = np.array(
            [momentum_operator(self.basis, a) for a in atoms])
        self.top_mask = self.basis.top_level_mask()

    def energy(self, rho: np.ndarray) -> np.ndarray:
        diag = np.einsum("ii->i", rho).real
        return (self.energy_weights @ diag) / (2.0 * self.kappa**2)

    def energy_rate(self, drho_diag: np.ndarray) -> np.ndarray:
        return (self.energy_weights @ drho_diag.real) / (2.0 * self.kappa**2)

    def momentum(self, rho: np.ndarray) -> np.ndarray:
        vals = np.einsum("aij,ji->a", self.momentum_ops, rho)
        return vals.real / (2.0 * self.kappa)

    def excitation(self, rho: np.ndarray) -> np.ndarray:
        v = self.basis.vib_dim
        diag = np.einsum("ii->i", rho).real
        return diag.reshape(self.basis.n_internal, v).sum(axis=1)[1:]

    def top_population(self, rho: np.ndarray) -> float:
        diag = np.einsum("ii->i", rho).real
        return float(diag[self.top_mask].sum())


def resolve_dt(gset: GeneratorSet, requested: Optional[float] = None) -> float:
    """Requested step if stable, otherwise the stability heuristic."""
    if requested is None:
        return gset.dt_max
    if requested > gset.dt_max * (1 + 1e-12):
        raise NumericsError(
            f"dt={requested} exceeds the stability bound dt_max={gset.dt_max}")
    return requested


def step_rk4(gset: GeneratorSet, rho: np.ndarray, dt: float,
             mask: Iterable[str] = ALL_TERMS) -> np.ndarray:
    """One classical 4th-order Runge-Kutta step (deterministic)."""
    k1 = gset.apply(rho, mask)
    k2 = gset.apply(rho + 0.5 * dt * k1, mask)
    k3 = gset.apply(rho + 0.5 * dt * k2, mask)
    k4 = gset.apply(rho + dt * k3, mask)
    out = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out.view(float))):
        raise NumericsError(
            "NaN/Inf during RK4 step; state dump: "
            f"max|rho|={np.nanmax(np.abs(rho)):.3e}, dt={dt}")
    return out


@dataclass
class IntegrationResult:
    rho: np.ndarray
    t: float
    series: TimeSeries
    term_energy: Dict[str, np.ndarray]   # cumulative per term (nq,)
    info: dict


def integrate(gset: GeneratorSet, rho0: np.ndarray, dt: float,
              mask: Iterable[str] = ALL_TERMS,
              n_steps: Optional[int] = None,
              stop: Optional[Callable[[float, np.ndarray, np.ndarray], bool]] = None,
              max_steps: int = 10_000_000,
              sample_every: int = 1,
              positivity_every: int = 0,
              t0: float = 0.0) -> IntegrationResult:
    """Drive RK4 with per-term energy accounting.

    The stop callable receives (t, rho, excitation) and is evaluated at
    sample points.  Per-term cumulative energies are advanced every step
    with the RK4 stage weights.
    """
    mask = tuple(t for t in mask if t in gset.active_terms)
    obs = Observables(gset.basis, gset.config.kappa)
    nq = len(gset.basis.quantized_atoms)
    cum = {term: np.zeros(nq) for term in mask}
    rho = rho0.astype(complex).copy()

    times, energies, momenta, excs, tops, trdevs = [], [], [], [], [], []
    cum_series: Dict[str, list] = {term: [] for term in mask}
    info = {"min_population": None, "trace_flagged": False}

    def rhs(r):
        terms = gset.apply_terms(r, mask)
        total = sum(terms.values())
        rates = {t: obs.energy_rate(np.einsum("ii->i", m)) for t, m in terms.items()}
        return total, rates

    def record(t, r):
        times.append(t)
        energies.append(obs.energy(r))
        momenta.append(obs.momentum(r))
        excs.append(obs.excitation(r))
        tops.append(obs.top_population(r))
        tr = np.trace(r)
        trdevs.append(abs(tr.real - 1.0) + abs(tr.imag))
        for term in mask:
            cum_series[term].append(cum[term].copy())

    t = t0
    record(t, rho)
    step = 0
    while True:
        if stop is not None and stop(t, rho, excs[-1]):
            break
        if n_steps is not None and step >= n_steps:
            break
        if step >= max_steps:
            raise NumericsError(f"integration exceeded {max_steps} steps")
        k1, r1 = rhs(rho)
        k2, r2 = rhs(rho + 0.5 * dt * k1)
        k3, r3 = rhs(rho + 0.5 * dt * k2)
        k4, r4 = rhs(rho + dt * k3)
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for term in mask:
            cum[term] += (dt / 6.0) * (r1[term] + 2 * r2[term]
                                       + 2 * r3[term] + r4[term])
        if not np.all(np.isfinite(rho.view(float))):
            raise NumericsError(
                f"NaN/Inf at t={t + dt:.6g}; state dump: step={step}, dt={dt}, "
                f"max|k1|={np.max(np.abs(k1)):.3e}")
        step += 1
        t = t0 + step * dt
        if positivity_every and step % positivity_every == 0:
            mp = min_population(rho)
            if info["min_population"] is None or mp < info["min_population"]:
                info["min_population"] = mp
        if step % sample_every == 0 or (n_steps is not None and step == n_steps):
            record(t, rho)

    series = TimeSeries(
        times=np.array(times),
        energy=np.array(energies),
        momentum=np.array(momenta),
        excitation=np.array(excs),
        term_energy={term: np.array(v) for term, v in cum_series.items()},
        top_level_pop=np.array(tops),
        trace_dev=np.array(trdevs),
    )
    info["n_steps"] = step
    info["dt"] = dt
    info["max_trace_dev"] = float(series.trace_dev.max())
    info["max_top_level_pop"] = float(series.top_level_pop.max())
    if info["max_trace_dev"] > 1e-8:
        info["trace_flagged"] = True
        warnings.warn(f"trace deviated by {info['max_trace_dev']:.2e} "
                      "(> 1e-8); run flagged", stacklevel=2)
    if info["max_top_level_pop"] > 1e-6:
        warnings.warn(
            f"top vibrational level reached population "
            f"{info['max_top_level_pop']:.2e}; consider increasing n_vib",
            stacklevel=2)
    return IntegrationResult(rho=rho, t=t, series=series, term_energy=cum,
                             info=info)


def attribute_energy_rates(gset: GeneratorSet, rho: np.ndarray,
                           mask: Iterable[str] = ALL_TERMS) -> Dict[str, np.ndarray]:
    """Per-term dE/dt (E_r/Gamma per quantized atom) at the given state.

    The trap term commutes with the number operator, so its rate vanishes
    identically; coherent/decoherent aggregates follow the term split.
    """
    obs = Observables(gset.basis, gset.config.kappa)
    terms = gset.apply_terms(rho, mask)
    rates = {t: obs.energy_rate(np.einsum("ii->i", m)) for t, m in terms.items()}
    nq = len(gset.basis.quantized_atoms)
    rates["coherent"] = sum((rates[t] for t in COHERENT_TERMS if t in rates),
                            np.zeros(nq))
    rates["decoherent"] = sum((rates[t] for t in DECOHERENT_TERMS if t in rates),
                              np.zeros(nq))
    return rates


@dataclass
class DecayResult:
    delta_energy: np.ndarray               # per quantized atom, E_r
    delta_momentum: np.ndarray             # per quantized atom, hbar k
    term_delta_energy: Dict[str, np.ndarray]
    coherent_delta_energy: np.ndarray
    decoherent_delta_energy: np.ndarray
    residual_excitation: float
    energy_error_bound: float              # undecayed-excitation bound, E_r
    t_final: float
    rho_final: np.ndarray
    series: TimeSeries
    info: dict


def decay_to_ground(gset: GeneratorSet, rho0: np.ndarray,
                    excitation_tol: Optional[float] = None,
                    dt: Optional[float] = None,
                    sample_every: int = 1,
                    positivity_every: int = 0,
                    terms: Optional[Iterable[str]] = None) -> DecayResult:
    """Integrate with no drive until the excitation has decayed away.

    Stops at total excitation below excitation_tol (default from config)
    and reports the residual as an explicit energy error bar rather than
    extrapolating subradiant tails.
    """
    cfg = gset.config
    if gset.h_laser is not None:
        raise ValueError("decay_to_ground requires a drive-free generator")
    tol = (cfg.integrator.excitation_tol if excitation_tol is None
           else excitation_tol)
    dt = resolve_dt(gset, dt if dt is not None else cfg.integrator.dt)
    allowed = ALL_TERMS if terms is None else frozenset(terms)
    mask = tuple(t for t in allowed if t != "laser")

    obs = Observables(gset.basis, cfg.kappa)
    p0 = float(obs.excitation(rho0).sum())
    if not p0 > 0:
        raise ValueError("decay_to_ground requires nonzero initial excitation")

    window = max(1, int(round(100.0 / GAMMA / dt)))
    history: list = []

    def stop(t, rho, exc):
        p = float(np.sum(exc))
        history.append((t, p))
        if p < tol:
            return True
        # ultra-subradiant guard: no decrease over a 100/Gamma window
        t_old = t - 100.0 / GAMMA
        older = [pp for tt, pp in history if tt <= t_old]
        if older and p >= older[-1] * (1.0 - 1e-12):
            modes = modes_for_config(cfg)
            raise NumericsError(
                "excitation not decreasing over 100/Gamma; slowest mode "
                f"decay rate = {modes.decay_rates.min():.3e} Gamma")
        if t >= cfg.integrator.t_max:
            modes = modes_for_config(cfg)
            raise NumericsError(
                f"decay did not reach tol {tol} before t_max="
                f"{cfg.integrator.t_max}; slowest mode decay rate = "
                f"{modes.decay_rates.min():.3e} Gamma")
        return False

    res = integrate(gset, rho0, dt, mask=mask, stop=stop,
                    sample_every=sample_every,
                    positivity_every=positivity_every)
    ser = res.series
    delta_e = ser.energy[-1] - ser.energy[0]
    delta_p = ser.momentum[-1] - ser.momentum[0]
    residual = float(ser.excitation[-1].sum())
    # each undecayed excitation can still deposit at most one absorption-free
    # photon recoil of order (1 + 2|g''(0)|/Gamma) E_r per atom
    g2self = abs(gset.greens_data.taylor[(0, 0)].g2.real)
    bound = residual * (1.0 + 2.0 * g2self / GAMMA)
    return DecayResult(
        delta_energy=delta_e, delta_momentum=delta_p,
        term_delta_energy={t: v.copy() for t, v in res.term_energy.items()},
        coherent_delta_energy=sum((res.term_energy[t] for t in COHERENT_TERMS
                                   if t in res.term_energy),
                                  np.zeros(len(gset.basis.quantized_atoms))),
        decoherent_delta_energy=sum((res.term_energy[t] for t in DECOHERENT_TERMS
                                     if t in res.term_energy),
                                    np.zeros(len(gset.basis.quantized_atoms))),
        residual_excitation=residual, energy_error_bound=bound,
        t_final=res.t, rho_final=res.rho, series=ser, info=res.info)


@dataclass
class SteadyStateResult:
    rho_ss: np.ndarray
    t_steady: float
    excitation: np.ndarray                  # (n_atoms,)
    scattering_rates: np.ndarray            # Gamma * P_j, all atoms
    energy_rates: Dict[str, np.ndarray]     # per term, per quantized atom
    total_energy_rates: np.ndarray          # per quantized atom, E_r * Gamma
    momentum_rates: np.ndarray              # per quantized atom, hbar k * Gamma
    momentum_rates_instantaneous: np.ndarray  # dp/dt at the crossing instant
    energy_per_photon: np.ndarray           # per quantized atom, E_r
    series: TimeSeries
    info: dict
    normalization: str = ENERGY_PER_PHOTON_NORMALIZATION

    def component_per_photon(self, key: str) -> np.ndarray:
        """Per-photon energy of one term (or 'coherent'/'decoherent')."""
        atoms = [a - 1 for a in self._quantized]
        if key not in self.energy_rates:
            return np.zeros(len(atoms))
        return self.energy_rates[key] / self.scattering_rates[atoms]

    _quantized: tuple = ()


def steady_state(gset: GeneratorSet, rho0: np.ndarray,
                 criterion: Optional[float] = None,
                 dt: Optional[float] = None,
                 sample_every: int = 20,
                 terms: Optional[Iterable[str]] = None) -> SteadyStateResult:
    """Integrate a driven system to the electronic steady state.

    Convergence: max_j |dP_j/dt| < criterion * Gamma (sampled).  The
    reported deposition rates are averaged over an integer number of trap
    periods after the crossing: ground-state vibrational coherences are
    undamped, so instantaneous rates oscillate at the trap frequency and
    only their period average is the secular heating rate.
    """
    cfg = gset.config
    if gset.h_laser is None:
        raise ValueError("steady_state requires an enabled laser term")
    crit = cfg.integrator.steady_tol if criterion is None else criterion
    dt = resolve_dt(gset, dt if dt is not None else cfg.integrator.dt)
    basis = gset.basis
    v = basis.vib_dim
    mask = tuple(ALL_TERMS if terms is None else terms)

    recent = []

    def stop(t, rho, exc):
        drho = gset.apply(rho, mask)
        ddiag = np.einsum("ii->i", drho).real
        dp = np.abs(ddiag.reshape(basis.n_internal, v).sum(axis=1)[1:])
        recent.append((t, float(dp.max())))
        if t > 0 and dp.max() < crit * GAMMA:
            return True
        if t >= cfg.integrator.t_max:
            tail = ", ".join(f"t={tt:.3g}: {vv:.3e}" for tt, vv in recent[-5:])
            raise NumericsError(
                "no electronic steady state before t_max="
                f"{cfg.integrator.t_max}; |dP/dt| tail (oscillation "
                f"diagnostic): {tail}")
        return False

    res = integrate(gset, rho0, dt, mask=mask, stop=stop,
                    sample_every=sample_every)
    rho_ss = res.rho
    obs = Observables(basis, cfg.kappa)
    exc = obs.excitation(rho_ss)

    # average deposition rates over whole trap periods (at least 10/Gamma)
    period = 2.0 * np.pi / cfg.omega_t
    n_periods = max(1, int(np.ceil(10.0 / GAMMA / period)))
    n_win = max(1, int(np.ceil(n_periods * period / dt)))
    win = integrate(gset, rho_ss, dt, mask=mask, n_steps=n_win,
                    sample_every=n_win, t0=res.t)
    t_win = n_win * dt
    nq = len(basis.quantized_atoms)
    rates = {t: v / t_win for t, v in win.term_energy.items()}
    rates["coherent"] = sum((rates[t] for t in COHERENT_TERMS if t in rates),
                            np.zeros(nq))
    rates["decoherent"] = sum((rates[t] for t in DECOHERENT_TERMS
                               if t in rates), np.zeros(nq))
    total = sum(rates[t] for t in ALL_TERMS if t in rates)
    dp_dt = (win.series.momentum[-1] - win.series.momentum[0]) / t_win
    # instantaneous radiation-pressure force at the crossing (the secular
    # window average vanishes once the trap balances the scattering force)
    drho = gset.apply(rho_ss, mask)
    dp_inst = np.einsum("aij,ji->a", obs.momentum_ops,
                        drho).real / (2.0 * cfg.kappa)

    scattering = GAMMA * exc
    q_idx = [a - 1 for a in basis.quantized_atoms]
    with np.errstate(divide="ignore", invalid="ignore"):
        e_per_photon = np.where(scattering[q_idx] > 0,
                                total / scattering[q_idx], 0.0)
    info = dict(res.info)
    info["rate_window"] = t_win
    info["rate_window_periods"] = n_periods
    result = SteadyStateResult(
        rho_ss=rho_ss, t_steady=res.t, excitation=exc,
        scattering_rates=scattering, energy_rates=rates,
        total_energy_rates=total, momentum_rates=dp_dt,
        momentum_rates_instantaneous=dp_inst,
        energy_per_photon=e_per_photon, series=res.series, info=info)
    result._quantized = basis.quantized_atoms
    return result


# -- frequency sweep ---------------------------------------------------------

def _max_workers() -> int:
    env = os.environ.get("VIBRECOIL_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def evaluate_point(cfg: SystemConfig, kind: str,
                   initial_spec: Optional[dict] = None,
                   dt: Optional[float] = None,
                   sample_every: int = 50) -> dict:
    """Run one decay or steady-state point and return flat observables."""
    basis = build_basis(cfg)
    gdata = evaluate_greens_data(cfg)
    gset = assemble(cfg, basis, gdata)
    spec = dict(initial_spec or {"kind": "uniform"})
    if spec.get("kind") == "eigenmode":
        spec["modes"] = modes_for_config(cfg)
    if spec.get("kind") == "single_excited" and "atom" not in spec:
        spec["atom"] = 1
    rho0 = initial_state(basis, **spec)
    positivity_every = 100 if basis.dimension <= 100 else 0
    point: dict = {}
    if kind == "decay":
        out = decay_to_ground(gset, rho0, dt=dt, sample_every=sample_every,
                              positivity_every=positivity_every)
        for i, atom in enumerate(basis.quantized_atoms):
            point[f"delta_e_a{atom}"] = float(out.delta_energy[i])
            point[f"delta_e_coh_a{atom}"] = float(out.coherent_delta_energy[i])
            point[f"delta_e_decoh_a{atom}"] = float(out.decoherent_delta_energy[i])
            point[f"delta_p_a{atom}"] = float(out.delta_momentum[i])
        point["residual_excitation"] = out.residual_excitation
        point["energy_error_bound"] = out.energy_error_bound
    elif kind == "steady":
        out = steady_state(gset, rho0, dt=dt)
        for i, atom in enumerate(basis.quantized_atoms):
            point[f"e_per_photon_a{atom}"] = float(out.energy_per_photon[i])
            for comp in ("laser", "dd", "jump_cross", "jump_diagonal",
                         "coherent", "decoherent"):
                val = out.component_per_photon(comp)[i]
                point[f"e_per_photon_{comp}_a{atom}"] = float(val)
            point[f"dp_dt_a{atom}"] = float(out.momentum_rates[i])
            point[f"dp_dt_inst_a{atom}"] = float(
                out.momentum_rates_instantaneous[i])
            point[f"excitation_a{atom}"] = float(out.excitation[atom - 1])
    else:
        raise ValueError(f"unknown sweep kind {kind!r}")
    rho_final = out.rho_final if kind == "decay" else out.rho_ss
    point["max_trace_dev"] = float(out.info["max_trace_dev"])
    point["max_top_level_pop"] = float(out.info["max_top_level_pop"])
    point["hermiticity_defect"] = hermiticity_defect(rho_final)
    mp = out.info.get("min_population")
    point["min_population"] = float(mp if mp is not None
                                    else min_population(rho_final))
    return point


def _sweep_point(args) -> dict:
    cfg, omega, kind, initial_spec, dt, sample_every = args
    point = {"omega_t": omega, "error": ""}
    try:
        cfg = cfg.replace(omega_t=omega)
        point.update(evaluate_point(cfg, kind, initial_spec, dt, sample_every))
    except Exception as exc:  # per-point isolation; the sweep continues
        point["error"] = f"{type(exc).__name__}: {exc}"
    return point


def frequency_sweep(config: SystemConfig, omega_values: Sequence[float],
                    kind: str = "decay",
                    initial_spec: Optional[dict] = None,
                    dt: Optional[float] = None,
                    sample_every: int = 50,
                    max_workers: Optional[int] = None) -> list:
    """Run decay or steady-state points over trap frequencies, concurrently.

    kappa is held fixed across the sweep (it is an independent input);
    per-point failures are recorded in an 'error' field and do not abort
    the other points.  Results are returned sorted by omega_t, independent
    of worker scheduling.
    """
    jobs = [(config, float(w), kind, initial_spec, dt, sample_every)
            for w in omega_values]
    workers = max_workers if max_workers is not None else _max_workers()
    if workers <= 1 or len(jobs) <= 1:
        rows = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    return sorted(rows, key=lambda r: r["omega_t"])
