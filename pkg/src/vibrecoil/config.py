"""Unit conventions and validated run configuration.

All internal computation is dimensionless: the single-atom decay rate
``Gamma = 1`` sets the time unit and the resonant wavenumber ``k = 1`` sets
the length unit (so one wavelength is ``2*pi``).  Energies are reported in
recoil energies ``E_r`` and momenta in ``hbar*k``; with these conventions the
atomic mass and ``hbar`` drop out of every formula and the wavepacket spread
``kappa`` carries the only mass/frequency dependence.  One vibrational
quantum equals ``E_r / kappa**2`` in reporting units.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError

GAMMA = 1.0
WAVENUMBER = 1.0
WAVELENGTH = 2.0 * math.pi

#: circular polarization unit vector used throughout the worked examples
E_PLUS = -(np.array([1.0, 0.0, 0.0]) + 1j * np.array([0.0, 1.0, 0.0])) / math.sqrt(2.0)
E_MINUS = (np.array([1.0, 0.0, 0.0]) - 1j * np.array([0.0, 1.0, 0.0])) / math.sqrt(2.0)

_NAMED_REAL = {
    "x": np.array([1.0, 0.0, 0.0]),
    "y": np.array([0.0, 1.0, 0.0]),
    "z": np.array([0.0, 0.0, 1.0]),
}
_NAMED_COMPLEX = {"e+": E_PLUS, "e-": E_MINUS}

CSV_SCHEMA = "vibrecoil-csv/1"


@dataclass(frozen=True)
class UnitSystem:
    """Descriptive record of the dimensionless unit conventions."""

    time: str = "1/Gamma"
    length: str = "1/k"
    energy_report: str = "E_r"
    momentum_report: str = "hbar*k"

    @staticmethod
    def vib_spacing_recoil_units(kappa: float) -> float:
        """Vibrational level spacing in recoil energies (``1/kappa**2``)."""
        return 1.0 / kappa**2


@dataclass(frozen=True, eq=False)
class LaserParams:
    rabi: float
    detuning: float
    propagation: np.ndarray  # real unit 3-vector


@dataclass(frozen=True, eq=False)
class IntegratorParams:
    dt: Optional[float] = None          # None -> stability heuristic
    t_end: Optional[float] = None       # None -> stop criterion decides
    t_max: float = 2000.0
    excitation_tol: float = 1e-6
    steady_tol: float = 1e-8
    sample_every: int = 1


@dataclass(frozen=True, eq=False)
class SystemConfig:
    """Validated, immutable run configuration (shareable across workers)."""

    n_atoms: int
    positions: np.ndarray               # (N, 3) in units of 1/k
    dipole_orientation: np.ndarray      # complex unit 3-vector
    oscillation_direction: np.ndarray   # real unit 3-vector
    kappa: float
    omega_t: float
    n_vib: int
    quantized_atoms: tuple              # 1-based atom indices
    laser: Optional[LaserParams] = None
    taylor_order: int = 2
    integrator: IntegratorParams = field(default_factory=IntegratorParams)
    memory_cap_bytes: int = 512 * 1024 * 1024
    scenario: dict = field(default_factory=dict)

    @property
    def min_separation(self) -> Optional[float]:
        if self.n_atoms < 2:
            return None
        d = self.positions[:, None, :] - self.positions[None, :, :]
        norms = np.linalg.norm(d, axis=-1)
        return float(norms[~np.eye(self.n_atoms, dtype=bool)].min())

    @property
    def spread_separation_ratio(self) -> Optional[float]:
        sep = self.min_separation
        return None if sep is None else self.kappa / sep

    def replace(self, **kwargs) -> "SystemConfig":
        fields = {
            "n_atoms": self.n_atoms,
            "positions": self.positions,
            "dipole_orientation": self.dipole_orientation,
            "oscillation_direction": self.oscillation_direction,
            "kappa": self.kappa,
            "omega_t": self.omega_t,
            "n_vib": self.n_vib,
            "quantized_atoms": self.quantized_atoms,
            "laser": self.laser,
            "taylor_order": self.taylor_order,
            "integrator": self.integrator,
            "memory_cap_bytes": self.memory_cap_bytes,
            "scenario": self.scenario,
        }
        fields.update(kwargs)
        return validate_config(SystemConfig(**fields))

    def to_ini(self) -> str:
        return serialize_config(self)

    def hash(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()[:16]


def _fmt_complex(c: complex) -> str:
    return f"{c.real!r}{c.imag:+}j".replace("+-", "-") if c.imag else repr(c.real)


def _fmt_vec(v: np.ndarray) -> str:
    if np.iscomplexobj(v):
        return ",".join(_fmt_complex(complex(x)) for x in v)
    return ",".join(repr(float(x)) for x in v)


def parse_vector(text: str, complex_ok: bool = False) -> np.ndarray:
    """Parse a named axis (x/y/z/e+/e-) or a comma-separated 3-vector."""
    t = text.strip().lower()
    if t in _NAMED_REAL:
        return _NAMED_REAL[t].copy()
    if complex_ok and t in _NAMED_COMPLEX:
        return _NAMED_COMPLEX[t].copy()
    parts = [p for p in t.replace(";", ",").split(",") if p.strip()]
    if len(parts) != 3:
        raise ConfigError(f"expected a 3-vector, got {text!r}")
    try:
        vals = [complex(p.strip().replace("i", "j")) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"cannot parse vector component in {text!r}") from exc
    arr = np.array(vals)
    if not complex_ok:
        if np.any(np.abs(arr.imag) > 0):
            raise ConfigError(f"vector {text!r} must be real")
        arr = arr.real
    return arr


def _parse_positions(text: str, scale: float = 1.0) -> np.ndarray:
    rows = [r for r in text.strip().split(";") if r.strip()]
    out = []
    for r in rows:
        parts = r.replace(",", " ").split()
        if len(parts) != 3:
            raise ConfigError(f"position row {r!r} must have 3 components")
        out.append([float(p) for p in parts])
    return np.array(out) * scale


def _check_finite(name: str, value) -> None:
    arr = np.asarray(value)
    if not np.all(np.isfinite(arr.view(float) if np.iscomplexobj(arr) else arr)):
        raise ConfigError(f"{name} contains NaN/Inf")


def validate_config(cfg: SystemConfig) -> SystemConfig:
    """Range-check every field; raises ConfigError on physics violations."""
    if cfg.n_atoms < 1:
        raise ConfigError("n_atoms must be a positive integer")
    if cfg.positions.shape != (cfg.n_atoms, 3):
        raise ConfigError(
            f"positions shape {cfg.positions.shape} != ({cfg.n_atoms}, 3)")
    for name, val in (("positions", cfg.positions),
                      ("dipole_orientation", cfg.dipole_orientation),
                      ("oscillation_direction", cfg.oscillation_direction),
                      ("kappa", cfg.kappa), ("omega_t", cfg.omega_t)):
        _check_finite(name, val)

    qnorm = float(np.real(np.vdot(cfg.dipole_orientation, cfg.dipole_orientation)))
    if not math.isclose(qnorm, 1.0, rel_tol=1e-8):
        raise ConfigError(f"dipole orientation not a unit vector (|q|^2 = {qnorm})")
    for name, v in (("oscillation_direction", cfg.oscillation_direction),):
        if not math.isclose(float(np.dot(v, v)), 1.0, rel_tol=1e-8):
            raise ConfigError(f"{name} is not a unit vector")

    if cfg.kappa <= 0:
        raise ConfigError("kappa must be positive")
    if cfg.omega_t <= 0:
        raise ConfigError("omega_t must be positive")
    if cfg.n_vib < 2:
        raise ConfigError("n_vib must be at least 2")
    if cfg.taylor_order != 2:
        raise ConfigError("taylor_order is fixed at 2")

    q = tuple(sorted(set(cfg.quantized_atoms)))
    if not q:
        raise ConfigError("quantized_atoms must be a non-empty subset")
    if q[0] < 1 or q[-1] > cfg.n_atoms:
        raise ConfigError(f"quantized_atoms {q} outside 1..{cfg.n_atoms}")

    sep = cfg.min_separation
    if sep is not None:
        if sep <= 0:
            raise ConfigError("two atoms share a position")
        if cfg.kappa >= sep:
            raise ConfigError(
                f"wavefunction spread kappa={cfg.kappa} >= min separation "
                f"{sep:.6g}; overlapping-wavepacket regime is excluded")
        if cfg.kappa >= 0.5 * sep:
            warnings.warn(
                f"kappa={cfg.kappa} exceeds half the min separation "
                f"{sep:.6g}; second-order Taylor expansion is marginal",
                stacklevel=2)

    if cfg.laser is not None:
        _check_finite("laser.rabi", cfg.laser.rabi)
        _check_finite("laser.detuning", cfg.laser.detuning)
        _check_finite("laser.propagation", cfg.laser.propagation)
        if cfg.laser.rabi < 0:
            raise ConfigError("laser rabi frequency must be >= 0")
        if not math.isclose(float(np.dot(cfg.laser.propagation,
                                         cfg.laser.propagation)), 1.0,
                            rel_tol=1e-8):
            raise ConfigError("laser propagation is not a unit vector")

    it = cfg.integrator
    for name, val in (("dt", it.dt), ("t_end", it.t_end), ("t_max", it.t_max),
                      ("excitation_tol", it.excitation_tol),
                      ("steady_tol", it.steady_tol)):
        if val is not None:
            _check_finite(f"integrator.{name}", val)
            if val <= 0:
                raise ConfigError(f"integrator.{name} must be positive")
    if it.sample_every < 1:
        raise ConfigError("integrator.sample_every must be >= 1")
    return cfg


def load_config(source: str, overrides: Optional[list] = None) -> SystemConfig:
    """Parse an INI-style document into a validated SystemConfig.

    Args:
        source: document text (sections [system], [laser], [trap], [basis],
            [integrator], [scenario]).
        overrides: list of ``"section.key=value"`` strings applied on top.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(source)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    for ov in overrides or []:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} must look like section.key=value")
        key, _, value = ov.partition("=")
        if "." not in key:
            raise ConfigError(f"override key {key!r} must look like section.key")
        section, _, name = key.strip().partition(".")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, name.strip(), value.strip())

    def get(section, key, conv, default=None, required=False):
        if parser.has_option(section, key):
            raw = parser.get(section, key)
            try:
                return conv(raw)
            except ConfigError:
                raise
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc
        if required:
            raise ConfigError(f"missing required key [{section}] {key}")
        return default

    n_atoms = get("system", "n_atoms", int, required=True)
    kappa = get("system", "kappa", float, required=True)
    if parser.has_option("system", "positions"):
        positions = _parse_positions(parser.get("system", "positions"))
    elif parser.has_option("system", "positions_lambda"):
        positions = _parse_positions(parser.get("system", "positions_lambda"),
                                     scale=WAVELENGTH)
    elif n_atoms == 1:
        positions = np.zeros((1, 3))
    else:
        raise ConfigError("positions required when n_atoms > 1")

    dipole = get("system", "dipole", lambda s: parse_vector(s, complex_ok=True),
                 default=E_PLUS.copy())
    oscillation = get("system", "oscillation", parse_vector,
                      default=np.array([0.0, 0.0, 1.0]))

    omega_t = get("trap", "omega_t", float, required=True)

    laser = None
    if parser.has_section("laser") and parser.has_option("laser", "rabi"):
        laser = LaserParams(
            rabi=get("laser", "rabi", float, required=True),
            detuning=get("laser", "detuning", float, default=0.0),
            propagation=get("laser", "propagation", parse_vector,
                            default=np.array([0.0, 0.0, 1.0])),
        )

    n_vib = get("basis", "n_vib", int, required=True)

    def parse_quantized(raw: str):
        raw = raw.strip().lower()
        if raw == "all":
            return tuple(range(1, n_atoms + 1))
        return tuple(int(p) for p in raw.replace(";", ",").split(",") if p.strip())

    quantized = get("basis", "quantized_atoms", parse_quantized,
                    default=tuple(range(1, n_atoms + 1)))
    cap = get("basis", "memory_cap_mb", float, default=512.0)

    def opt_float(raw):
        return None if raw.strip().lower() in ("", "none", "auto") else float(raw)

    integ = IntegratorParams(
        dt=get("integrator", "dt", opt_float, default=None),
        t_end=get("integrator", "t_end", opt_float, default=None),
        t_max=get("integrator", "t_max", float, default=2000.0),
        excitation_tol=get("integrator", "excitation_tol", float, default=1e-6),
        steady_tol=get("integrator", "steady_tol", float, default=1e-8),
        sample_every=get("integrator", "sample_every", int, default=1),
    )

    scenario = dict(parser.items("scenario")) if parser.has_section("scenario") else {}

    cfg = SystemConfig(
        n_atoms=n_atoms,
        positions=positions,
        dipole_orientation=np.asarray(dipole, dtype=complex),
        oscillation_direction=np.asarray(oscillation, dtype=float),
        kappa=kappa,
        omega_t=omega_t,
        n_vib=n_vib,
        quantized_atoms=tuple(sorted(set(quantized))),
        laser=laser,
        integrator=integ,
        memory_cap_bytes=int(cap * 1024 * 1024),
        scenario=scenario,
    )
    return validate_config(cfg)


def load_config_file(path, overrides: Optional[list] = None) -> SystemConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return load_config(fh.read(), overrides=overrides)


def serialize_config(cfg: SystemConfig) -> str:
    """Echo the fully resolved config as canonical INI text (round-trips)."""
    parser = configparser.ConfigParser()
    parser["system"] = {
        "n_atoms": str(cfg.n_atoms),
        "positions": "; ".join(" ".join(repr(float(x)) for x in row)
                               for row in cfg.positions),
        "dipole": _fmt_vec(cfg.dipole_orientation),
        "oscillation": _fmt_vec(cfg.oscillation_direction),
        "kappa": repr(cfg.kappa),
    }
    parser["trap"] = {"omega_t": repr(cfg.omega_t)}
    if cfg.laser is not None:
        parser["laser"] = {
            "rabi": repr(cfg.laser.rabi),
            "detuning": repr(cfg.laser.detuning),
            "propagation": _fmt_vec(cfg.laser.propagation),
        }
    parser["basis"] = {
        "n_vib": str(cfg.n_vib),
        "quantized_atoms": ",".join(str(q) for q in cfg.quantized_atoms),
        "memory_cap_mb": repr(cfg.memory_cap_bytes / (1024 * 1024)),
    }
    it = cfg.integrator
    parser["integrator"] = {
        "dt": "auto" if it.dt is None else repr(it.dt),
        "t_end": "auto" if it.t_end is None else repr(it.t_end),
        "t_max": repr(it.t_max),
        "excitation_tol": repr(it.excitation_tol),
        "steady_tol": repr(it.steady_tol),
        "sample_every": str(it.sample_every),
    }
    if cfg.scenario:
        parser["scenario"] = {k: str(v) for k, v in sorted(cfg.scenario.items())}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
