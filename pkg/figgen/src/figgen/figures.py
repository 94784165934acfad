"""Figure builders: one function per figure id, CSV tables in, Figure out.

Each builder does plotting transforms only (column selection, axis
scaling); no simulation quantities are recomputed here.  Frequency sweeps
are always drawn with a logarithmic x axis and energies are labeled in
units of the recoil energy E_r.
"""

from __future__ import annotations

import re
from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from . import FiggenError  # noqa: E402
from .reader import Table, read_table  # noqa: E402

E_R_LABEL = r"energy ($E_r$)"
PER_PHOTON_LABEL = r"energy per scattered photon ($E_r$)"
OMEGA_LABEL = r"$\omega_t / \Gamma$"


def _new_fig():
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=150)
    return fig, ax


def _suffixes(table: Table, stem: str) -> List[str]:
    """Direction suffixes present for a per-atom column stem, e.g. ['z','x'].

    Returns [''] when the columns carry no direction suffix (plain sweep).
    """
    plain = table.match(rf"{stem}_a\d+")
    if plain:
        return [""]
    hits = table.match(rf"{stem}_a\d+_[A-Za-z]+")
    suffixes: List[str] = []
    for name in hits:
        suffix = name.rsplit("_", 1)[1]
        if suffix not in suffixes:
            suffixes.append(suffix)
    if not suffixes:
        raise FiggenError(
            f"{table.path}: no column for {stem!r} per-atom values; "
            f"available columns are {', '.join(table.fieldnames)}")
    return suffixes


def _per_atom(table: Table, stem: str, suffix: str) -> str:
    pattern = rf"{stem}_a\d+" if not suffix else rf"{stem}_a\d+_{suffix}"
    return table.first_match(pattern, f"{stem} ({suffix or 'per atom'})")


def fig1(tables: Sequence[Table]):
    """Laser roll-off: energy per scattered photon vs trap frequency."""
    table = tables[0]
    table.require("omega_t")
    omega = table.numeric("omega_t")
    fig, ax = _new_fig()
    total = _per_atom(table, "e_per_photon", "")
    ax.semilogx(omega, table.numeric(total), "o-", label="total")
    for comp, style in (("laser", "s--"), ("decoherent", "^:")):
        hits = table.match(rf"e_per_photon_{comp}_a\d+")
        if hits:
            ax.semilogx(omega, table.numeric(hits[0]), style, label=comp)
    ax.set_xlabel(OMEGA_LABEL)
    ax.set_ylabel(PER_PHOTON_LABEL)
    ax.legend()
    fig.tight_layout()
    return fig


def fig2(tables: Sequence[Table]):
    """Excitation exchange between two atoms plus the monotone energy gain."""
    table = tables[0]
    table.require("t_gamma")
    exc_cols = table.match(r"P_exc_a\d+")
    if len(exc_cols) < 2:
        raise FiggenError(
            f"{table.path}: expected two excitation columns P_exc_a<j>; "
            f"available columns are {', '.join(table.fieldnames)}")
    t = table.numeric("t_gamma")
    fig, ax = _new_fig()
    for name in exc_cols[:2]:
        ax.plot(t, table.numeric(name), label=name.replace("P_exc_a", "atom "))
    ax.set_xlabel(r"$\Gamma t$")
    ax.set_ylabel("excitation probability")
    energy = _per_atom(table, "E", "")
    ax2 = ax.twinx()
    ax2.plot(t, table.numeric(energy), color="tab:red", label="vib. energy")
    ax2.set_ylabel(E_R_LABEL, color="tab:red")
    handles, labels = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(handles + h2, labels + l2, loc="upper right")
    fig.tight_layout()
    return fig


def fig3(tables: Sequence[Table]):
    """Deposited energy vs trap frequency per oscillation direction.

    An optional second table (collective-mode spectrum) supplies the
    vertical collective-decay-rate marker from its metadata header.
    """
    table = tables[0]
    table.require("omega_t")
    omega = table.numeric("omega_t")
    fig, ax = _new_fig()
    for suffix in _suffixes(table, "delta_e"):
        col = _per_atom(table, "delta_e", suffix)
        ax.semilogx(omega, table.numeric(col), "o-",
                    label=f"direction {suffix}" if suffix else "total")
    if len(tables) > 1:
        meta = tables[1].meta
        marker = meta.get("collective_rate_symmetric_mode")
        if marker is None:
            raise FiggenError(
                f"{tables[1].path}: second input must be a mode-spectrum "
                "table carrying collective_rate_symmetric_mode metadata")
        ax.axvline(float(marker), color="black",
                   label="collective decay rate")
    ax.set_xlabel(OMEGA_LABEL)
    ax.set_ylabel(E_R_LABEL)
    ax.legend()
    fig.tight_layout()
    return fig


def fig4(tables: Sequence[Table]):
    """Coherent vs decoherent energy components across trap frequencies."""
    table = tables[0]
    table.require("omega_t")
    omega = table.numeric("omega_t")
    fig, ax = _new_fig()
    drawn = False
    for suffix in _suffixes(table, "delta_e_decoh"):
        tag = f" ({suffix})" if suffix else ""
        for stem, style in (("delta_e_coh", "o-"), ("delta_e_decoh", "s--")):
            hits = table.match(
                rf"{stem}_a\d+" if not suffix else rf"{stem}_a\d+_{suffix}")
            if hits:
                label = ("coherent" if stem == "delta_e_coh"
                         else "decoherent") + tag
                ax.semilogx(omega, table.numeric(hits[0]), style, label=label)
                drawn = True
    if not drawn:
        raise FiggenError(
            f"{table.path}: no coherent/decoherent component columns "
            f"(delta_e_coh_a<j>, delta_e_decoh_a<j>); available columns "
            f"are {', '.join(table.fieldnames)}")
    ax.set_xlabel(OMEGA_LABEL)
    ax.set_ylabel(E_R_LABEL)
    ax.legend()
    fig.tight_layout()
    return fig


def fig5(tables: Sequence[Table]):
    """Array steady state: per-photon energy uptake of the tracked atom.

    Accepts either a trap-frequency sweep (log-x curve) or a single-point
    per-direction table (one marker per oscillation direction).
    """
    table = tables[0]
    fig, ax = _new_fig()
    if "omega_t" in table.columns:
        omega = table.numeric("omega_t")
        col = _per_atom(table, "e_per_photon", "")
        ax.semilogx(omega, table.numeric(col), "o-", label="center atom")
        ax.set_xlabel(OMEGA_LABEL)
    elif "direction" in table.columns:
        col = _per_atom(table, "e_per_photon", "")
        labels = table.columns["direction"]
        values = table.numeric(col)
        ax.plot(range(len(labels)), values, "o", label="center atom")
        ax.set_xticks(range(len(labels)), labels)
        ax.set_xlabel("oscillation direction")
    else:
        raise FiggenError(
            f"{table.path}: expected an omega_t sweep or a per-direction "
            f"table; available columns are {', '.join(table.fieldnames)}")
    ax.set_ylabel(PER_PHOTON_LABEL)
    ax.legend()
    fig.tight_layout()
    return fig


FIGURES = {"fig1": fig1, "fig2": fig2, "fig3": fig3, "fig4": fig4,
           "fig5": fig5}


def render(figure_id: str, csv_paths: Sequence[str], out_path: str) -> str:
    """Build one figure from CSV artifacts and write the image file.

    Nothing is written unless reading and plotting both succeed, and
    embedded timestamps are disabled so identical inputs give identical
    bytes.
    """
    if figure_id not in FIGURES:
        raise FiggenError(
            f"unknown figure id {figure_id!r}; expected one of "
            f"{', '.join(FIGURES)}")
    if not csv_paths:
        raise FiggenError("at least one input CSV is required")
    tables = [read_table(p) for p in csv_paths]
    fig = FIGURES[figure_id](tables)
    try:
        suffix = str(out_path).rsplit(".", 1)[-1].lower()
        metadata = {"Date": None} if suffix in ("svg", "pdf") else None
        fig.savefig(out_path, metadata=metadata)
    finally:
        plt.close(fig)
    return str(out_path)
