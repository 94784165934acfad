"""Named experiment scenarios with reproducible CSV/JSON artifacts.

Each scenario binds a default configuration (overridable via config file
and ``--set`` flags) to a runner that writes ``<name>.csv`` and
``<name>.summary.json``.  All output is deterministic: floats are printed
with shortest round-trip ``repr`` and no timestamps enter the CSV, so
repeated runs (and any sweep parallelism) produce byte-identical tables.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .config import (CSV_SCHEMA, GAMMA, WAVELENGTH, SystemConfig, load_config,
                     parse_vector)
from .dynamics import (ENERGY_PER_PHOTON_NORMALIZATION, _max_workers,
                       decay_to_ground, evaluate_point, integrate, resolve_dt)
from .errors import ConfigError, NumericsError
from .greens import collective_modes, evaluate_greens_data, greens
from .hilbert import build_basis, hermiticity_defect, initial_state
from .liouvillian import ALL_TERMS, assemble

SUMMARY_SCHEMA = "vibrecoil-summary/1"

SCENARIO_NAMES = ("single-decay", "single-laser-sweep", "two-atom-hop",
                  "decay-sweep", "array-steady", "modes")

#: CLI spellings of the generator term mask
TERM_ALIASES = {"trap": "trap", "laser": "laser", "dd": "dd",
                "jumpd": "jump_diagonal", "jumpx": "jump_cross"}

SWEEP_PARAMS = ("omega_t", "d", "omega", "delta")

_AXES = {"x": 0, "y": 1, "z": 2}


# -- geometry builders --------------------------------------------------------

def line_positions(n: int, spacing_lambda: float, axis: str = "x") -> np.ndarray:
    """n atoms equally spaced on one axis, centered at the origin (1/k units)."""
    if n < 1:
        raise ConfigError("line geometry needs at least one atom")
    out = np.zeros((n, 3))
    offsets = (np.arange(n) - (n - 1) / 2.0) * spacing_lambda * WAVELENGTH
    out[:, _AXES[axis]] = offsets
    return out


def square_positions(spacing_lambda: float) -> np.ndarray:
    """Four atoms on a square of the given side length in the xy plane."""
    half = 0.5 * spacing_lambda * WAVELENGTH
    return np.array([[-half, -half, 0.0], [-half, half, 0.0],
                     [half, -half, 0.0], [half, half, 0.0]])


def grid_positions(rows: int, cols: int, spacing_lambda: float) -> np.ndarray:
    """rows x cols array in the xy plane, centered, row-major ordering."""
    if rows < 1 or cols < 1:
        raise ConfigError("grid geometry needs positive row/column counts")
    d = spacing_lambda * WAVELENGTH
    out = []
    for r in range(rows):
        for c in range(cols):
            out.append([(c - (cols - 1) / 2.0) * d,
                        ((rows - 1) / 2.0 - r) * d, 0.0])
    return np.array(out)


def center_atom(rows: int, cols: int) -> int:
    """1-based row-major index of the central site (odd dimensions only)."""
    if rows % 2 == 0 or cols % 2 == 0:
        raise ConfigError("center atom undefined for even-sized arrays")
    return (rows // 2) * cols + cols // 2 + 1


def apply_geometry(cfg: SystemConfig,
                   spacing_lambda: Optional[float] = None) -> SystemConfig:
    """Regenerate positions from the [scenario] geometry keys, if present."""
    sc = cfg.scenario
    kind = sc.get("geometry")
    if kind is None:
        if spacing_lambda is not None:
            raise ConfigError(
                "spacing sweep requires [scenario] geometry keys")
        return cfg
    d = float(sc.get("spacing_lambda", 0.4) if spacing_lambda is None
              else spacing_lambda)
    if kind == "line":
        pos = line_positions(int(sc.get("atoms", cfg.n_atoms)), d,
                             axis=sc.get("axis", "x"))
    elif kind == "square":
        pos = square_positions(d)
    elif kind == "grid":
        pos = grid_positions(int(sc.get("rows", 3)), int(sc.get("cols", 3)), d)
    else:
        raise ConfigError(f"unknown geometry {kind!r}")
    scenario = dict(sc)
    if spacing_lambda is not None:
        scenario["spacing_lambda"] = repr(d)
    return cfg.replace(n_atoms=pos.shape[0], positions=pos, scenario=scenario)


# -- default configurations ---------------------------------------------------

def default_config(name: str) -> str:
    """Canonical configuration text for a scenario (the figure defaults)."""
    if name == "single-decay":
        return """
[system]
n_atoms = 1
kappa = 0.01
dipole = e+
oscillation = z
[trap]
omega_t = 1.0
[basis]
n_vib = 5
[scenario]
directions = z,x,y
sample_every = 10
"""
    if name == "two-atom-hop":
        return """
[system]
n_atoms = 2
positions_lambda = -0.01 0 0; 0.01 0 0
kappa = 1e-5
dipole = e+
oscillation = x
[trap]
omega_t = 1.0
[basis]
n_vib = 2
quantized_atoms = 1
[integrator]
t_end = 2.0
[scenario]
geometry = line
atoms = 2
axis = x
spacing_lambda = 0.02
initial = single_excited
initial_atom = 1
"""
    if name == "single-laser-sweep":
        return """
[system]
n_atoms = 1
kappa = 0.01
dipole = e+
oscillation = z
[trap]
omega_t = 1.0
[laser]
rabi = 0.1
detuning = 0.0
propagation = z
[basis]
n_vib = 5
[scenario]
initial = ground
points = 20
omega_min = 0.01
omega_max = 100.0
"""
    if name == "decay-sweep":
        return """
[system]
n_atoms = 2
positions_lambda = -0.2 0 0; 0.2 0 0
kappa = 0.001
dipole = e+
oscillation = z
[trap]
omega_t = 1.0
[basis]
n_vib = 2
quantized_atoms = all
[scenario]
geometry = line
atoms = 2
axis = x
spacing_lambda = 0.4
initial = uniform
directions = z,x
points = 5
omega_min = 0.01
omega_max = 100.0
"""
    if name == "array-steady":
        # Laser defaults for the array figure: weak resonant drive along z.
        # A 3x3 grid ships as the default so the scenario stays verifiable
        # in minutes; larger arrays are one --set scenario.rows/cols away.
        rows, cols, spacing = 3, 3, 0.8
        pos = grid_positions(rows, cols, spacing) / WAVELENGTH
        pos_text = "; ".join(" ".join(repr(float(x)) for x in row)
                             for row in pos)
        return f"""
[system]
n_atoms = {rows * cols}
kappa = 0.01
dipole = e+
oscillation = z
positions_lambda = {pos_text}
[trap]
omega_t = 0.01
[laser]
rabi = 0.01
detuning = 0.0
propagation = z
[basis]
n_vib = 5
quantized_atoms = {center_atom(rows, cols)}
[scenario]
geometry = grid
rows = {rows}
cols = {cols}
spacing_lambda = {spacing}
directions = z,x
initial = ground
"""
    if name == "modes":
        return """
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
[scenario]
geometry = line
atoms = 3
axis = x
spacing_lambda = 0.4
"""
    raise ConfigError(
        f"unknown scenario {name!r}; expected one of {', '.join(SCENARIO_NAMES)}")


def scenario_config(name: str, config_text: Optional[str] = None,
                    overrides: Optional[list] = None) -> SystemConfig:
    """Resolve the effective config: file text (or defaults) plus overrides."""
    text = default_config(name) if config_text is None else config_text
    cfg = load_config(text, overrides=overrides)
    return apply_geometry(cfg)


def parse_terms(spec: Optional[str]) -> Optional[tuple]:
    """CLI term mask ``trap,laser,dd,jumpd,jumpx`` to internal names."""
    if spec is None:
        return None
    out = []
    for part in spec.split(","):
        part = part.strip().lower()
        if not part:
            continue
        if part not in TERM_ALIASES:
            raise ConfigError(
                f"unknown term {part!r}; expected subset of "
                f"{','.join(TERM_ALIASES)}")
        out.append(TERM_ALIASES[part])
    if not out:
        raise ConfigError("empty term mask")
    return tuple(out)


# -- artifact writers ---------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def csv_text(fieldnames: Sequence[str], rows: Sequence[dict],
             meta: Dict[str, str]) -> str:
    """Render a comment-headed CSV table deterministically."""
    lines = [f"# {k}: {v}" for k, v in meta.items()]
    lines.append(",".join(fieldnames))
    for row in rows:
        lines.append(",".join(_fmt(row.get(name)) for name in fieldnames))
    return "\n".join(lines) + "\n"


def base_meta(name: str, cfg: SystemConfig, **extra) -> Dict[str, str]:
    meta = {
        "schema": CSV_SCHEMA,
        "version": __version__,
        "scenario": name,
        "config_hash": cfg.hash(),
        "normalization": ENERGY_PER_PHOTON_NORMALIZATION,
    }
    for k, v in extra.items():
        meta[k] = _fmt(v)
    return meta


def _summary_schema() -> dict:
    text = resources.files("vibrecoil").joinpath("summary.schema.json").read_text()
    return json.loads(text)


def write_summary(path: Path, payload: dict) -> None:
    import jsonschema

    jsonschema.validate(payload, _summary_schema())
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _merge_monitors(target: dict, source: dict) -> None:
    for key in ("max_trace_dev", "max_top_level_pop", "hermiticity_defect"):
        val = source.get(key)
        if val is not None:
            target[key] = max(target.get(key, 0.0), float(val))
    mp = source.get("min_population")
    if mp is not None:
        prev = target.get("min_population")
        target["min_population"] = float(mp) if prev is None else min(prev,
                                                                      float(mp))


def _initial_spec(cfg: SystemConfig) -> dict:
    """Initial-state description from the [scenario] section."""
    sc = cfg.scenario
    spec: dict = {"kind": sc.get("initial", "uniform")}
    if spec["kind"] == "single_excited":
        spec["atom"] = int(sc.get("initial_atom", 1))
    if spec["kind"] == "eigenmode":
        spec["mode_index"] = int(sc.get("mode_index", 0))
    if "initial_vib" in sc:
        level = int(sc["initial_vib"])
        spec["vib_occupations"] = [level] * len(cfg.quantized_atoms)
    return spec


def _directions(cfg: SystemConfig, default: str) -> List[Tuple[str, np.ndarray]]:
    labels = [p.strip() for p in cfg.scenario.get("directions", default).split(",")
              if p.strip()]
    return [(lab, parse_vector(lab)) for lab in labels]


def _omega_values(cfg: SystemConfig) -> np.ndarray:
    sc = cfg.scenario
    points = int(sc.get("points", 20))
    lo = float(sc.get("omega_min", 0.01))
    hi = float(sc.get("omega_max", 100.0))
    if points < 1 or lo <= 0 or hi <= 0:
        raise ConfigError("sweep needs points >= 1 and positive bounds")
    return np.logspace(math.log10(lo), math.log10(hi), points)


# -- scenario runners ---------------------------------------------------------

def _run_single_decay(cfg, terms, max_workers):
    directions = _directions(cfg, "z,x,y")
    sample_every = int(cfg.scenario.get("sample_every", 10))
    spec = _initial_spec(cfg) if "initial" in cfg.scenario else \
        {"kind": "single_excited", "atom": 1}
    monitors: dict = {}
    results: dict = {}
    per_dir = {}
    for label, vec in directions:
        c = cfg.replace(oscillation_direction=vec)
        basis = build_basis(c)
        gset = assemble(c, basis, evaluate_greens_data(c))
        rho0 = initial_state(basis, **spec)
        out = decay_to_ground(gset, rho0, sample_every=sample_every,
                              positivity_every=100 if basis.dimension <= 100
                              else 0, terms=terms)
        per_dir[label] = (basis, out)
        _merge_monitors(monitors, out.info)
        _merge_monitors(monitors,
                        {"hermiticity_defect": hermiticity_defect(out.rho_final)})
        block = {
            "t_final": out.t_final,
            "residual_excitation": out.residual_excitation,
            "energy_error_bound": out.energy_error_bound,
        }
        for i, atom in enumerate(basis.quantized_atoms):
            block[f"delta_e_a{atom}"] = float(out.delta_energy[i])
            block[f"delta_p_a{atom}"] = float(out.delta_momentum[i])
            block[f"delta_e_coh_a{atom}"] = float(out.coherent_delta_energy[i])
            block[f"delta_e_decoh_a{atom}"] = float(out.decoherent_delta_energy[i])
        results[label] = block
        first = cfg.quantized_atoms[0]
        results[f"delta_e_{label}"] = block[f"delta_e_a{first}"]

    n_rows = min(len(out.series.times) for _, out in per_dir.values())
    fieldnames = ["t_gamma"]
    for label, _ in directions:
        basis, out = per_dir[label]
        for atom in basis.quantized_atoms:
            fieldnames.append(f"E_{label}_a{atom}")
        for atom in basis.quantized_atoms:
            fieldnames.append(f"p_{label}_a{atom}")
        for j in range(1, basis.n_atoms + 1):
            fieldnames.append(f"P_exc_{label}_a{j}")
        for atom in basis.quantized_atoms:
            fieldnames.append(f"E_coh_{label}_a{atom}")
            fieldnames.append(f"E_decoh_{label}_a{atom}")
        fieldnames.append(f"trunc_pop_{label}")

    rows = []
    ref = per_dir[directions[0][0]][1].series
    for k in range(n_rows):
        row = {"t_gamma": float(ref.times[k])}
        for label, _ in directions:
            basis, out = per_dir[label]
            ser = out.series
            for i, atom in enumerate(basis.quantized_atoms):
                row[f"E_{label}_a{atom}"] = float(ser.energy[k, i])
                row[f"p_{label}_a{atom}"] = float(ser.momentum[k, i])
                row[f"E_coh_{label}_a{atom}"] = float(ser.coherent_energy[k, i])
                row[f"E_decoh_{label}_a{atom}"] = float(ser.decoherent_energy[k, i])
            for j in range(basis.n_atoms):
                row[f"P_exc_{label}_a{j + 1}"] = float(ser.excitation[k, j])
            row[f"trunc_pop_{label}"] = float(ser.top_level_pop[k])
        rows.append(row)
    return rows, fieldnames, {}, results, monitors


def _peak_times(times: np.ndarray, values: np.ndarray) -> List[float]:
    """Local maxima with parabolic sub-sample refinement."""
    peaks = []
    for i in range(1, len(values) - 1):
        if values[i] >= values[i - 1] and values[i] > values[i + 1]:
            denom = values[i - 1] - 2.0 * values[i] + values[i + 1]
            shift = 0.0 if denom == 0 else 0.5 * (values[i - 1]
                                                  - values[i + 1]) / denom
            dt = times[i + 1] - times[i]
            peaks.append(float(times[i] + shift * dt))
    return peaks


def _run_two_atom_hop(cfg, terms, max_workers):
    basis = build_basis(cfg)
    gset = assemble(cfg, basis, evaluate_greens_data(cfg))
    rho0 = initial_state(basis, **_initial_spec(cfg))
    dt = resolve_dt(gset, cfg.integrator.dt)
    t_end = cfg.integrator.t_end if cfg.integrator.t_end is not None else 2.0
    n_steps = int(math.ceil(t_end / dt))
    sample_every = int(cfg.scenario.get("sample_every", 1))
    mask = ALL_TERMS if terms is None else terms
    res = integrate(gset, rho0, dt, mask=mask, n_steps=n_steps,
                    sample_every=sample_every,
                    positivity_every=100 if basis.dimension <= 100 else 0)
    ser = res.series

    fieldnames = ["t_gamma"]
    for j in range(1, basis.n_atoms + 1):
        fieldnames.append(f"P_exc_a{j}")
    fieldnames.append("P_total")
    for atom in basis.quantized_atoms:
        fieldnames += [f"E_a{atom}", f"p_a{atom}", f"E_coh_a{atom}",
                       f"E_decoh_a{atom}"]
    fieldnames.append("trunc_pop")
    rows = []
    for k in range(len(ser.times)):
        row = {"t_gamma": float(ser.times[k]),
               "P_total": float(ser.excitation[k].sum()),
               "trunc_pop": float(ser.top_level_pop[k])}
        for j in range(basis.n_atoms):
            row[f"P_exc_a{j + 1}"] = float(ser.excitation[k, j])
        for i, atom in enumerate(basis.quantized_atoms):
            row[f"E_a{atom}"] = float(ser.energy[k, i])
            row[f"p_a{atom}"] = float(ser.momentum[k, i])
            row[f"E_coh_a{atom}"] = float(ser.coherent_energy[k, i])
            row[f"E_decoh_a{atom}"] = float(ser.decoherent_energy[k, i])
        rows.append(row)

    rvec = cfg.positions[0] - cfg.positions[1]
    im_g = float(greens(rvec, cfg.dipole_orientation).imag)
    predicted = math.pi / abs(im_g)
    src_atom = int(cfg.scenario.get("initial_atom", 1)) - 1
    peaks = [float(ser.times[0])] + _peak_times(ser.times,
                                                ser.excitation[:, src_atom])
    measured = ((peaks[-1] - peaks[0]) / (len(peaks) - 1)
                if len(peaks) > 1 else float("nan"))
    half = ser.excitation.sum(axis=1) >= 0.5
    t_half = float(ser.times[np.argmax(~half)]) if not half.all() \
        else float(ser.times[-1])
    results = {
        "im_g": im_g,
        "predicted_exchange_period": predicted,
        "measured_exchange_period": measured,
        "n_exchange_cycles_before_half_decay": t_half / predicted,
        "t_end": float(ser.times[-1]),
    }
    monitors: dict = {}
    _merge_monitors(monitors, res.info)
    _merge_monitors(monitors,
                    {"hermiticity_defect": hermiticity_defect(res.rho)})
    return rows, fieldnames, {"exchange_period_predicted": predicted}, \
        results, monitors


def _sweep_fieldnames(param: str, rows: Sequence[dict]) -> List[str]:
    keys = set()
    for row in rows:
        keys.update(row)
    keys.discard(param)
    keys.discard("error")
    return [param] + sorted(keys) + ["error"]


def _rows_monitors(rows: Sequence[dict]) -> dict:
    monitors: dict = {}
    for row in rows:
        _merge_monitors(monitors, row)
    return monitors


def _run_single_laser_sweep(cfg, terms, max_workers):
    if terms is not None:
        raise ConfigError("term masks apply to single runs, not sweeps")
    values = _omega_values(cfg)
    rows = _parallel_sweep(cfg, "omega_t", values, "steady",
                           _initial_spec_or(cfg, "ground"), max_workers)
    fieldnames = _sweep_fieldnames("omega_t", rows)
    failed = [r["omega_t"] for r in rows if r["error"]]
    results = {"omega_t_values": [float(v) for v in values],
               "n_points": len(rows), "n_failed": len(failed)}
    return rows, fieldnames, {}, results, _rows_monitors(rows)


def _initial_spec_or(cfg: SystemConfig, default_kind: str) -> dict:
    if "initial" in cfg.scenario:
        return _initial_spec(cfg)
    return {"kind": default_kind}


def _run_decay_sweep(cfg, terms, max_workers):
    if terms is not None:
        raise ConfigError("term masks apply to single runs, not sweeps")
    values = _omega_values(cfg)
    spec = _initial_spec_or(cfg, "uniform")
    merged: Dict[float, dict] = {float(w): {"omega_t": float(w)} for w in values}
    results: dict = {"omega_t_values": [float(v) for v in values]}
    for label, vec in _directions(cfg, "z,x"):
        c = cfg.replace(oscillation_direction=vec)
        rows = _parallel_sweep(c, "omega_t", values, "decay", spec, max_workers)
        deltas = []
        for row in rows:
            target = merged[row["omega_t"]]
            for key, val in row.items():
                if key == "omega_t":
                    continue
                target[f"{key}_{label}"] = val
            first = cfg.quantized_atoms[0]
            if not row["error"]:
                deltas.append(row[f"delta_e_a{first}"])
        if deltas:
            mean = float(np.mean(deltas))
            spread = float(np.max(deltas) - np.min(deltas))
            results[f"delta_e_{label}_mean"] = mean
            results[f"delta_e_{label}_relative_variation"] = (
                spread / abs(mean) if mean else float("inf"))
    rows = [merged[w] for w in sorted(merged)]
    keys = set()
    for row in rows:
        keys.update(row)
    keys.discard("omega_t")
    fieldnames = ["omega_t"] + sorted(keys)
    monitors: dict = {}
    for row in rows:
        for label, _ in _directions(cfg, "z,x"):
            _merge_monitors(monitors, {
                k: row.get(f"{k}_{label}")
                for k in ("max_trace_dev", "max_top_level_pop",
                          "hermiticity_defect", "min_population")})
    return rows, fieldnames, {}, results, monitors


def _run_array_steady(cfg, terms, max_workers):
    if len(cfg.quantized_atoms) == cfg.n_atoms and cfg.n_atoms > 6:
        raise ConfigError(
            f"full vibrational basis for {cfg.n_atoms} atoms would need "
            f"{cfg.n_vib}^{cfg.n_atoms} vibrational states per internal "
            "index; quantize a subset instead (e.g. basis.quantized_atoms "
            "= center atom)")
    spec = _initial_spec_or(cfg, "ground")
    rows = []
    results: dict = {}
    for label, vec in _directions(cfg, "z,x"):
        c = cfg.replace(oscillation_direction=vec)
        point = {"direction": label, "error": ""}
        point.update(evaluate_point(c, "steady", spec, dt=cfg.integrator.dt))
        rows.append(point)
        first = cfg.quantized_atoms[0]
        results[f"e_per_photon_{label}"] = point[f"e_per_photon_a{first}"]
        results[f"dp_dt_{label}"] = point[f"dp_dt_a{first}"]
        results[f"dp_dt_inst_{label}"] = point[f"dp_dt_inst_a{first}"]
    fieldnames = ["direction"] + sorted(
        k for k in rows[0] if k not in ("direction", "error")) + ["error"]
    results["quantized_atoms"] = list(cfg.quantized_atoms)
    return rows, fieldnames, {}, results, _rows_monitors(rows)


def _run_modes(cfg, terms, max_workers):
    modes = collective_modes(cfg.positions, cfg.dipole_orientation)
    rows = []
    for k in range(len(modes.eigenvalues)):
        rows.append({
            "mode_index": k,
            "re_lambda": float(modes.eigenvalues[k].real),
            "im_lambda": float(modes.eigenvalues[k].imag),
            "decay_rate_over_gamma": float(modes.decay_rates[k] / GAMMA),
        })
    fieldnames = ["mode_index", "re_lambda", "im_lambda",
                  "decay_rate_over_gamma"]

    # Two conventions for "the collective decay rate", both labeled: the
    # eigenmode with the largest overlap with the uniform vector, and the
    # expectation value in the uniformly excited state.
    n = cfg.n_atoms
    uniform = np.ones(n) / math.sqrt(n)
    overlaps = np.abs(modes.eigenvectors.conj().T @ uniform)
    sym_idx = int(np.argmax(overlaps))
    g0 = np.full((n, n), GAMMA / 2.0, dtype=complex)
    for i in range(n):
        for j in range(n):
            if i != j:
                g0[i, j] = greens(cfg.positions[i] - cfg.positions[j],
                                  cfg.dipole_orientation)
    rate_uniform = float(2.0 * np.real(uniform @ g0 @ uniform))
    meta = {
        "collective_rate_symmetric_mode": modes.decay_rates[sym_idx],
        "collective_rate_uniform_expectation": rate_uniform,
    }
    results = {
        "decay_rates_over_gamma": [float(r) for r in modes.decay_rates],
        "sum_decay_rates_over_gamma": float(modes.decay_rates.sum()),
        "collective_rate_symmetric_mode": float(modes.decay_rates[sym_idx]),
        "collective_rate_uniform_expectation": rate_uniform,
        "symmetric_mode_index": sym_idx,
    }
    monitors = {"max_trace_dev": 0.0, "max_top_level_pop": 0.0,
                "hermiticity_defect": 0.0, "min_population": 0.0}
    return rows, fieldnames, meta, results, monitors


_RUNNERS = {
    "single-decay": _run_single_decay,
    "two-atom-hop": _run_two_atom_hop,
    "single-laser-sweep": _run_single_laser_sweep,
    "decay-sweep": _run_decay_sweep,
    "array-steady": _run_array_steady,
    "modes": _run_modes,
}


@dataclass
class ScenarioResult:
    name: str
    csv_path: Path
    summary_path: Path
    summary: dict
    rows: list
    fieldnames: list


def run_scenario(name: str, config_text: Optional[str] = None,
                 overrides: Optional[list] = None,
                 out_dir: str = ".",
                 terms: Optional[tuple] = None,
                 max_workers: Optional[int] = None) -> ScenarioResult:
    """Run one named scenario and write ``<name>.csv`` / ``<name>.summary.json``."""
    if name not in _RUNNERS:
        raise ConfigError(
            f"unknown scenario {name!r}; expected one of "
            f"{', '.join(SCENARIO_NAMES)}")
    cfg = scenario_config(name, config_text, overrides)
    start = time.perf_counter()
    rows, fieldnames, extra_meta, results, monitors = _RUNNERS[name](
        cfg, terms, max_workers)
    wall = time.perf_counter() - start

    monitors.setdefault("max_trace_dev", 0.0)
    monitors.setdefault("max_top_level_pop", 0.0)
    monitors.setdefault("hermiticity_defect", 0.0)
    monitors.setdefault("min_population", None)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    summary_path = out / f"{name}.summary.json"
    csv_path.write_text(
        csv_text(fieldnames, rows, base_meta(name, cfg, **extra_meta)),
        encoding="utf-8")
    summary = {
        "schema": SUMMARY_SCHEMA,
        "scenario": name,
        "version": __version__,
        "config_hash": cfg.hash(),
        "config_ini": cfg.to_ini(),
        "normalization": ENERGY_PER_PHOTON_NORMALIZATION,
        "wall_time_s": wall,
        "monitors": monitors,
        "results": results,
    }
    write_summary(summary_path, summary)
    return ScenarioResult(name=name, csv_path=csv_path,
                          summary_path=summary_path, summary=summary,
                          rows=rows, fieldnames=fieldnames)


# -- parameter sweeps ---------------------------------------------------------

_SWEEP_KIND = {"single-decay": "decay", "decay-sweep": "decay",
               "single-laser-sweep": "steady", "array-steady": "steady"}

_SWEEP_DEFAULT_INITIAL = {"single-decay": "single_excited",
                          "decay-sweep": "uniform",
                          "single-laser-sweep": "ground",
                          "array-steady": "ground"}


def apply_sweep_param(cfg: SystemConfig, param: str, value: float) -> SystemConfig:
    if param == "omega_t":
        return cfg.replace(omega_t=value)
    if param == "d":
        return apply_geometry(cfg, spacing_lambda=value)
    if param in ("omega", "delta"):
        if cfg.laser is None:
            raise ConfigError(f"sweep over {param} requires a [laser] section")
        from .config import LaserParams

        field = "rabi" if param == "omega" else "detuning"
        laser = LaserParams(
            rabi=value if field == "rabi" else cfg.laser.rabi,
            detuning=value if field == "detuning" else cfg.laser.detuning,
            propagation=cfg.laser.propagation)
        return cfg.replace(laser=laser)
    raise ConfigError(
        f"unknown sweep parameter {param!r}; expected one of "
        f"{', '.join(SWEEP_PARAMS)}")


def _sweep_job(args) -> dict:
    cfg, param, value, kind, spec = args
    row = {param: float(value), "error": ""}
    try:
        c = apply_sweep_param(cfg, param, float(value))
        row.update(evaluate_point(c, kind, spec, dt=cfg.integrator.dt))
    except Exception as exc:  # isolate per-point failures
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _effective_workers(requested: Optional[int]) -> int:
    cap = _max_workers()
    return cap if requested is None else max(1, min(requested, cap))


def _parallel_sweep(cfg: SystemConfig, param: str, values, kind: str,
                    spec: dict, max_workers: Optional[int]) -> list:
    jobs = [(cfg, param, float(v), kind, spec) for v in values]
    workers = _effective_workers(max_workers)
    if workers <= 1 or len(jobs) <= 1:
        rows = [_sweep_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    return sorted(rows, key=lambda r: r[param])


def run_sweep(name: str, param: str, values: Sequence[float],
              config_text: Optional[str] = None,
              overrides: Optional[list] = None,
              out_dir: str = ".",
              max_workers: Optional[int] = None) -> ScenarioResult:
    """Sweep one parameter of a scenario; merged CSV is sorted by the param."""
    if name not in _SWEEP_KIND:
        raise ConfigError(
            f"scenario {name!r} is not sweepable; choose from "
            f"{', '.join(sorted(_SWEEP_KIND))}")
    if param not in SWEEP_PARAMS:
        raise ConfigError(
            f"unknown sweep parameter {param!r}; expected one of "
            f"{', '.join(SWEEP_PARAMS)}")
    values = [float(v) for v in values]
    if not values:
        raise ConfigError("sweep requires a non-empty list of values")
    for v in values:
        if not math.isfinite(v):
            raise ConfigError(f"sweep value {v} is not finite")

    cfg = scenario_config(name, config_text, overrides)
    spec = _initial_spec_or(cfg, _SWEEP_DEFAULT_INITIAL[name])
    start = time.perf_counter()
    rows = _parallel_sweep(cfg, param, values, _SWEEP_KIND[name], spec,
                           max_workers)
    wall = time.perf_counter() - start
    failed = [r for r in rows if r["error"]]
    if len(failed) == len(rows):
        raise NumericsError(
            "all sweep points failed; first error: " + failed[0]["error"])

    fieldnames = _sweep_fieldnames(param, rows)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.sweep-{param}.csv"
    summary_path = out / f"{name}.sweep-{param}.summary.json"
    csv_path.write_text(
        csv_text(fieldnames, rows,
                 base_meta(name, cfg, sweep_param=param,
                           sweep_points=len(rows))),
        encoding="utf-8")
    summary = {
        "schema": SUMMARY_SCHEMA,
        "scenario": name,
        "version": __version__,
        "config_hash": cfg.hash(),
        "config_ini": cfg.to_ini(),
        "normalization": ENERGY_PER_PHOTON_NORMALIZATION,
        "wall_time_s": wall,
        "monitors": {**{"max_trace_dev": 0.0, "max_top_level_pop": 0.0,
                        "hermiticity_defect": 0.0, "min_population": None},
                     **_rows_monitors(rows)},
        "results": {"param": param, "values": values,
                    "n_points": len(rows), "n_failed": len(failed)},
    }
    write_summary(summary_path, summary)
    return ScenarioResult(name=name, csv_path=csv_path,
                          summary_path=summary_path, summary=summary,
                          rows=rows, fieldnames=fieldnames)
