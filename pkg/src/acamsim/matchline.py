"""NOR-type match-line discharge simulation.

A row of cells shares one match line precharged to v_dd. Every stored
inequality that the applied data-line voltage violates turns on a pulldown
path; the line integrates the total current on its lumped capacitance via
fixed-step explicit Euler, and the sense amplifier reads the final voltage at
the end of the evaluation window (not the first crossing). Residual currents
of matched-but-near-boundary cells accumulate the same way, which is exactly
the crosstalk effect the analog families exhibit.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .luts import LutSet, TechParams, interp2

MATCH = True
MISMATCH = False


class SimError(ValueError):
    """Inconsistent simulation inputs."""


@dataclass(frozen=True)
class CellProgram:
    """Stored conductances for one cell; None marks a wildcard side.

    A wildcard side never contributes pulldown current: the corresponding
    inequality is physically disabled, not merely programmed wide.
    """
    g_lb: Optional[float]
    g_hb: Optional[float]


@dataclass(frozen=True)
class RowProgram:
    cells: tuple

    def __post_init__(self):
        cells = tuple(self.cells)
        if len(cells) < 1:
            raise SimError("a row needs at least one cell")
        object.__setattr__(self, "cells", cells)

    def __len__(self):
        return len(self.cells)


@dataclass(frozen=True)
class MlTrace:
    times: np.ndarray
    v_ml: np.ndarray
    i_total: np.ndarray
    v_ml_final: float


def cell_drive(luts: LutSet, v_dl: float, cell: CellProgram):
    """Raw inequality-check output voltages (v_x_lb, v_x_hb) for one cell.

    Wildcard sides read 0 V. The data-line voltage is clamped to the table
    domain by the lookup itself.
    """
    v_xlb = 0.0 if cell.g_lb is None else float(interp2(luts.lb, v_dl, cell.g_lb))
    v_xhb = 0.0 if cell.g_hb is None else float(interp2(luts.hb, v_dl, cell.g_hb))
    return v_xlb, v_xhb


def latch_rails(v_x, v_dd):
    """Latched families resolve V_X to a rail before it drives the pulldown.

    The tie at exactly v_dd/2 resolves low (an on-bound input is a match),
    mirroring the closed-interval containment rule.
    """
    v_x = np.asarray(v_x, dtype=float)
    out = np.where(v_x > 0.5 * v_dd, v_dd, 0.0)
    return float(out) if out.ndim == 0 else out


def drive_sides(row: RowProgram, v_dls, luts: LutSet):
    """Per-side V_X values and activity mask for a row, latching applied.

    Returns (v_x, active): two (n_cells, 2) arrays, columns ordered lb, hb.
    Inactive (wildcard) sides hold 0 V and are excluded from current sums.
    """
    n = len(row.cells)
    v_x = np.zeros((n, 2))
    active = np.zeros((n, 2), dtype=bool)
    for k, (cell, v_dl) in enumerate(zip(row.cells, v_dls)):
        vlb, vhb = cell_drive(luts, v_dl, cell)
        if cell.g_lb is not None:
            v_x[k, 0] = vlb
            active[k, 0] = True
        if cell.g_hb is not None:
            v_x[k, 1] = vhb
            active[k, 1] = True
    if luts.latched:
        v_x[active] = latch_rails(v_x[active], _rail_voltage(luts))
    return v_x, active


def _rail_voltage(luts: LutSet) -> float:
    lb = luts.lb
    if hasattr(lb, "v_dd"):
        return float(lb.v_dd)
    return float(lb.v_dl_axis[-1])


def n_steps(tech: TechParams) -> int:
    return max(1, int(round(tech.t_max / tech.dt)))


def row_discharge(row: RowProgram, v_dls, luts: LutSet, tech: TechParams) -> MlTrace:
    """Integrate the match-line voltage over the evaluation window.

    v_ml(0) = v_dd; each step sums the pulldown currents of every active side
    at the present line voltage (Kirchhoff), then applies one Euler update
    v_ml <- max(v_ml - (i_total / c_ml) * dt, 0). The trace records v_ml and
    i_total at every step boundary, i_total being evaluated at the recorded
    v_ml (the last entry is reported but never integrated).
    """
    if len(v_dls) != len(row.cells):
        raise SimError("got %d data-line voltages for %d cells" % (len(v_dls), len(row.cells)))
    v_dls = np.clip(np.asarray(v_dls, dtype=float), 0.0, tech.v_dd)
    v_x, active = drive_sides(row, v_dls, luts)
    sides = v_x[active]  # flat, cell-major, lb before hb

    steps = n_steps(tech)
    times = np.arange(steps + 1) * tech.dt
    v_trace = np.empty(steps + 1)
    i_trace = np.empty(steps + 1)
    v = float(tech.v_dd)
    for k in range(steps):
        v_trace[k] = v
        i = float(np.sum(interp2(luts.pulldown, np.full(sides.shape, v), sides))) if sides.size else 0.0
        i_trace[k] = i
        v = v - (i / tech.c_ml) * tech.dt
        if v < 0.0:
            v = 0.0
    v_trace[steps] = v
    i_trace[steps] = float(np.sum(interp2(luts.pulldown, np.full(sides.shape, v), sides))) if sides.size else 0.0
    return MlTrace(times=times, v_ml=v_trace, i_total=i_trace, v_ml_final=v)


def sense(trace: MlTrace, tech: TechParams) -> bool:
    """Match iff the final line voltage is still at or above the sense threshold."""
    return trace.v_ml_final >= tech.v_ref


def row_match_ideal(intervals, x) -> bool:
    """Reference containment semantics: every non-wildcard bound holds, closed
    on both ends. `intervals` entries are (lb, hb) with None for a wildcard
    side, or None for a fully wildcard cell."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != len(intervals):
        raise SimError("got %d features for %d intervals" % (x.shape[0], len(intervals)))
    for xi, iv in zip(x, intervals):
        if iv is None:
            continue
        lb, hb = iv
        if lb is not None and xi < lb:
            return False
        if hb is not None and xi > hb:
            return False
    return True


def write_trace_csv(trace: MlTrace, path):
    with open(path, "w") as fh:
        fh.write("time_s,v_ml_V,i_total_A\n")
        for t, v, i in zip(trace.times, trace.v_ml, trace.i_total):
            fh.write("%.17g,%.17g,%.17g\n" % (t, v, i))
