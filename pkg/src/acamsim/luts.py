"""Device characteristics as lookup tables.

Three tables describe one cell family: a lower-bound transfer table and an
upper-bound transfer table (data-line voltage x stored conductance -> internal
comparison voltage V_X), plus a pulldown table (match-line voltage x V_X ->
pulldown current). A synthetic generator ships three calibrated families so
every downstream experiment runs without externally extracted tables:

  salm   steep logistic transfer, decisions latch rail-to-rail
  6t2m   shallow logistic transfer, analog V_X drives the pulldown directly
  ideal  exact step transfer (reference semantics)
"""

import os
from dataclasses import dataclass, field

import numpy as np

LOWER = "lb"
HIGHER = "hb"
PULLDOWN = "pd"

KIND_SALM = "salm"
KIND_6T2M = "6t2m"
KIND_IDEAL = "ideal"
KINDS = (KIND_SALM, KIND_6T2M, KIND_IDEAL)

# Calibration constants for the shipped synthetic generator.
GAIN_SALM = 200.0      # per volt; near-step transfer
GAIN_6T2M = 60.0       # per volt; visibly analog transfer
PULLDOWN_VTH = 0.3     # V, pulldown device threshold
PULLDOWN_K = 2e-5      # A/V^2, square-law strength
PULLDOWN_VSAT = 0.2    # V, linear-to-saturated knee in v_ml

# Documented per-cell reference constants (energy per inequality-check step,
# areas in um^2). The 2-inequality latched word at n_par=1, n_seq=2 occupies
# A_LATCH + 2*A_1T1R = 0.498 um^2.
E_CELL_SALM = 8.8e-15
E_CELL_6T2M = 13.13e-15
A_CELL_6T2M = 0.170

TECH_DEFAULTS = {
    "v_dd": 0.8,
    "t_latch": 3e-9,
    "e_cell": E_CELL_SALM,
    "a_latch": 0.026,
    "a_1t1r": 0.236,
    "c_ml": 2e-14,
    "v_ref": 0.4,
    "g_min": 1e-6,
    "g_max": 2e-6,
    "n_levels": 128,
    "dt": 1e-11,
    "t_max": 3e-9,
}

# (n_v_dl, n_g); None entries derive from tech.n_levels. The v_dl axis uses
# 5 intervals per conductance level so every programmable threshold voltage
# v_dd * k / (n_levels - 1) sits on a v_dl grid node; sampling the transfer
# midpoint exactly there keeps the latch decision centered on the threshold.
DEFAULT_TRANSFER_GRID = (None, None)
DEFAULT_PULLDOWN_GRID = (33, 65)      # (n_v_ml, n_v_x)


def _transfer_vdl_size(n_g: int) -> int:
    return 5 * (n_g - 1) + 1


class LutError(ValueError):
    """Malformed table, file, or tech parameter set."""


@dataclass(frozen=True)
class TechParams:
    v_dd: float
    t_latch: float
    e_cell: float
    a_latch: float
    a_1t1r: float
    c_ml: float
    v_ref: float
    g_window: tuple
    n_levels: int
    dt: float
    t_max: float

    def __post_init__(self):
        for name in ("v_dd", "t_latch", "e_cell", "a_latch", "a_1t1r",
                     "c_ml", "v_ref", "dt", "t_max"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and np.isfinite(v) and v > 0):
                raise LutError("tech parameter %r must be a positive finite number, got %r" % (name, v))
        g_min, g_max = self.g_window
        if not (np.isfinite(g_min) and np.isfinite(g_max) and 0 < g_min < g_max):
            raise LutError("g_window must satisfy 0 < g_min < g_max, got %r" % (self.g_window,))
        if not (0 < self.v_ref < self.v_dd):
            raise LutError("v_ref must lie strictly inside (0, v_dd)")
        if self.dt > self.t_max:
            raise LutError("dt must not exceed t_max")
        if int(self.n_levels) != self.n_levels or self.n_levels < 2:
            raise LutError("n_levels must be an integer >= 2")
        object.__setattr__(self, "n_levels", int(self.n_levels))
        object.__setattr__(self, "g_window", (float(g_min), float(g_max)))


def tech_from_dict(values: dict) -> TechParams:
    """Build TechParams from a flat key->value dict; unknown keys are rejected."""
    merged = dict(TECH_DEFAULTS)
    for key, val in values.items():
        if key not in TECH_DEFAULTS:
            raise LutError("unknown tech parameter %r" % key)
        merged[key] = val
    return TechParams(
        v_dd=float(merged["v_dd"]),
        t_latch=float(merged["t_latch"]),
        e_cell=float(merged["e_cell"]),
        a_latch=float(merged["a_latch"]),
        a_1t1r=float(merged["a_1t1r"]),
        c_ml=float(merged["c_ml"]),
        v_ref=float(merged["v_ref"]),
        g_window=(float(merged["g_min"]), float(merged["g_max"])),
        n_levels=int(merged["n_levels"]),
        dt=float(merged["dt"]),
        t_max=float(merged["t_max"]),
    )


def parse_tech_file(path) -> dict:
    """Parse a `key = value` tech config file. '#' starts a comment."""
    out = {}
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise LutError("%s:%d: expected 'key = value', got %r" % (path, lineno, raw.strip()))
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in TECH_DEFAULTS:
                raise LutError("%s:%d: unknown tech parameter %r" % (path, lineno, key))
            try:
                out[key] = int(val) if key == "n_levels" else float(val)
            except ValueError:
                raise LutError("%s:%d: cannot parse value %r for %r" % (path, lineno, val, key))
    return out


def load_tech(path=None, overrides=None) -> TechParams:
    """Shipped defaults, overlaid by an optional config file, then by overrides."""
    values = {}
    if path is not None:
        values.update(parse_tech_file(path))
    if overrides:
        values.update(overrides)
    return tech_from_dict(values)


def default_tech_file() -> str:
    """Path of the packaged config file mirroring the built-in defaults."""
    return os.path.join(os.path.dirname(__file__), "data", "tech_defaults.conf")


def _check_axis(ax, name, source=""):
    ax = np.asarray(ax, dtype=float)
    where = ("%s: " % source) if source else ""
    if ax.ndim != 1 or ax.size < 2:
        raise LutError("%s%s axis must be 1-D with length >= 2" % (where, name))
    if not np.all(np.isfinite(ax)):
        raise LutError("%s%s axis contains non-finite values" % (where, name))
    d = np.diff(ax)
    if np.any(d <= 0):
        idx = int(np.argmax(d <= 0))
        raise LutError("%s%s axis not strictly increasing at index %d" % (where, name, idx + 1))
    return ax


@dataclass(frozen=True)
class TransferLut:
    """V_X(v_dl, g_mem) sampled on a rectangular grid, one bound polarity."""
    v_dl_axis: np.ndarray
    g_mem_axis: np.ndarray
    grid: np.ndarray          # shape (|v_dl_axis|, |g_mem_axis|)
    polarity: str

    def __post_init__(self):
        object.__setattr__(self, "v_dl_axis", _check_axis(self.v_dl_axis, "v_dl"))
        object.__setattr__(self, "g_mem_axis", _check_axis(self.g_mem_axis, "g_mem"))
        grid = np.asarray(self.grid, dtype=float)
        if grid.shape != (self.v_dl_axis.size, self.g_mem_axis.size):
            raise LutError("grid shape %r does not match axes (%d, %d)"
                           % (grid.shape, self.v_dl_axis.size, self.g_mem_axis.size))
        if not np.all(np.isfinite(grid)):
            raise LutError("grid contains non-finite values")
        if np.any(grid < 0):
            i, j = np.unravel_index(int(np.argmax(grid < 0)), grid.shape)
            raise LutError("negative V_X at grid[%d, %d]" % (i, j))
        # Data-line range doubles as the rail: V_X must stay within it.
        if np.any(grid > self.v_dl_axis[-1] * (1 + 1e-12)):
            i, j = np.unravel_index(int(np.argmax(grid > self.v_dl_axis[-1])), grid.shape)
            raise LutError("V_X above the supply rail at grid[%d, %d]" % (i, j))
        if self.polarity not in (LOWER, HIGHER):
            raise LutError("transfer polarity must be %r or %r" % (LOWER, HIGHER))
        object.__setattr__(self, "grid", grid)

    @property
    def g_window(self):
        return (float(self.g_mem_axis[0]), float(self.g_mem_axis[-1]))


@dataclass(frozen=True)
class StepTransfer:
    """Exact-step transfer: full rail when the inequality is violated, else 0.

    Containment is closed on the bound itself, so a data-line voltage exactly
    at the stored bound reads 0 V (match). Provides the same lookup surface as
    a grid TransferLut but with no sampling error.
    """
    polarity: str
    v_dd: float
    g_window: tuple

    def lookup(self, v_dl, g_mem):
        v_dl = np.asarray(v_dl, dtype=float)
        g_mem = np.asarray(g_mem, dtype=float)
        g_min, g_max = self.g_window
        vt = self.v_dd * (g_mem - g_min) / (g_max - g_min)
        if self.polarity == LOWER:
            violated = v_dl < vt
        else:
            violated = v_dl > vt
        out = np.where(violated, self.v_dd, 0.0)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PulldownLut:
    """I_ML(v_ml, v_x) sampled on a rectangular grid."""
    v_ml_axis: np.ndarray
    v_x_axis: np.ndarray
    grid: np.ndarray          # shape (|v_ml_axis|, |v_x_axis|)

    def __post_init__(self):
        object.__setattr__(self, "v_ml_axis", _check_axis(self.v_ml_axis, "v_ml"))
        object.__setattr__(self, "v_x_axis", _check_axis(self.v_x_axis, "v_x"))
        grid = np.asarray(self.grid, dtype=float)
        if grid.shape != (self.v_ml_axis.size, self.v_x_axis.size):
            raise LutError("grid shape %r does not match axes (%d, %d)"
                           % (grid.shape, self.v_ml_axis.size, self.v_x_axis.size))
        if not np.all(np.isfinite(grid)):
            raise LutError("grid contains non-finite values")
        if np.any(grid < 0):
            i, j = np.unravel_index(int(np.argmax(grid < 0)), grid.shape)
            raise LutError("negative current at grid[%d, %d]" % (i, j))
        # A fully discharged line sources no current.
        if self.v_ml_axis[0] == 0.0 and np.any(grid[0] != 0.0):
            j = int(np.argmax(grid[0] != 0.0))
            raise LutError("nonzero current at v_ml = 0 (grid[0, %d])" % j)
        if np.any(np.diff(grid, axis=1) < 0):
            raise LutError("current must be non-decreasing in v_x for fixed v_ml")
        object.__setattr__(self, "grid", grid)


@dataclass(frozen=True)
class LutSet:
    lb: object               # TransferLut or StepTransfer
    hb: object
    pulldown: PulldownLut
    arch_kind: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.arch_kind not in KINDS:
            raise LutError("unknown arch kind %r; expected one of %r" % (self.arch_kind, KINDS))
        if self.lb.polarity != LOWER:
            raise LutError("lb table has polarity %r" % self.lb.polarity)
        if self.hb.polarity != HIGHER:
            raise LutError("hb table has polarity %r" % self.hb.polarity)
        if self.lb.g_window != self.hb.g_window:
            raise LutError("lb and hb tables disagree on the conductance window")
        if isinstance(self.lb, TransferLut) and isinstance(self.hb, TransferLut):
            _check_orientation(self.lb, self.hb)

    @property
    def latched(self) -> bool:
        """Whether V_X decisions rail to the supply before driving the pulldown."""
        return self.arch_kind in (KIND_SALM, KIND_IDEAL)


def _check_orientation(lb: TransferLut, hb: TransferLut):
    # One consistent orientation across the set: lb non-increasing along v_dl
    # and hb non-decreasing, or the exact reverse for both.
    dlb = np.diff(lb.grid, axis=0)
    dhb = np.diff(hb.grid, axis=0)
    fwd = np.all(dlb <= 0) and np.all(dhb >= 0)
    rev = np.all(dlb >= 0) and np.all(dhb <= 0)
    if not (fwd or rev):
        raise LutError("transfer tables are not monotone in v_dl with mirrored orientations")


def _locate(ax: np.ndarray, v):
    """Clamped cell index and fractional offset; exact at nodes by construction."""
    v = np.clip(np.asarray(v, dtype=float), ax[0], ax[-1])
    i = np.clip(np.searchsorted(ax, v, side="right") - 1, 0, ax.size - 1)
    i2 = np.minimum(i + 1, ax.size - 1)
    d = ax[i2] - ax[i]
    t = np.zeros_like(v, dtype=float)
    np.divide(v - ax[i], d, out=t, where=d > 0)
    return i, i2, t


def interp2(lut, x, y):
    """Bilinear lookup with edge clamping.

    For transfer tables x is the data-line voltage and y the stored
    conductance; for pulldown tables x is the match-line voltage and y the
    cell's V_X. Exact at grid nodes and on constant grids. Step transfers
    evaluate their closed form instead.
    """
    if isinstance(lut, StepTransfer):
        return lut.lookup(x, y)
    if isinstance(lut, TransferLut):
        ax, ay = lut.v_dl_axis, lut.g_mem_axis
    else:
        ax, ay = lut.v_ml_axis, lut.v_x_axis
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scalar = x.ndim == 0 and y.ndim == 0
    ix, ix2, tx = _locate(ax, x)
    iy, iy2, ty = _locate(ay, y)
    g = lut.grid
    f00 = g[ix, iy]
    f01 = g[ix, iy2]
    f10 = g[ix2, iy]
    f11 = g[ix2, iy2]
    f0 = f00 + ty * (f01 - f00)
    f1 = f10 + ty * (f11 - f10)
    out = f0 + tx * (f1 - f0)
    return float(out) if scalar else out


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def threshold_voltage(g_mem, tech: TechParams):
    """Stored bound as a data-line voltage: linear map of g over the window."""
    g_min, g_max = tech.g_window
    return tech.v_dd * (np.asarray(g_mem, dtype=float) - g_min) / (g_max - g_min)


def gen_synthetic_luts(tech: TechParams, arch_kind: str, gain=None, grid_sizes=None) -> LutSet:
    """Generate a calibrated synthetic LutSet for one cell family.

    The transfer characteristic is logistic around the stored bound,
    V_X = v_dd * sigmoid(gain * (V_T(g) - v_dl)) for the lower bound and the
    v_dl-mirrored expression for the upper bound. The pulldown is a square-law
    device, I = K * max(V_X - V_th, 0)^2 * min(1, v_ml / V_sat). `ideal`
    replaces the logistic by an exact step; `gain` is ignored for it.

    grid_sizes, when given, is (n_v_dl, n_g, n_v_ml, n_v_x); None entries keep
    the defaults (the conductance axis defaults to tech.n_levels so programmed
    levels land exactly on grid nodes).
    """
    if arch_kind not in KINDS:
        raise LutError("unknown arch kind %r; expected one of %r" % (arch_kind, KINDS))
    if gain is None:
        gain = GAIN_SALM if arch_kind == KIND_SALM else GAIN_6T2M
    if gain <= 0:
        raise LutError("gain must be positive")

    sizes = [DEFAULT_TRANSFER_GRID[0], DEFAULT_TRANSFER_GRID[1],
             DEFAULT_PULLDOWN_GRID[0], DEFAULT_PULLDOWN_GRID[1]]
    if grid_sizes is not None:
        for k, s in enumerate(grid_sizes):
            if s is not None:
                sizes[k] = int(s)
    if sizes[1] is None:
        sizes[1] = max(tech.n_levels, 2)
    if sizes[0] is None:
        sizes[0] = _transfer_vdl_size(sizes[1])
    n_vdl, n_g, n_vml, n_vx = sizes
    for n in (n_vdl, n_g, n_vml, n_vx):
        if n < 2:
            raise LutError("grid sizes must be >= 2 per axis")

    g_min, g_max = tech.g_window
    v_dl = np.linspace(0.0, tech.v_dd, n_vdl)
    g_ax = np.linspace(g_min, g_max, n_g)
    meta = {"kind": arch_kind, "generator": "logistic-squarelaw", "gain": repr(float(gain))}

    if arch_kind == KIND_IDEAL:
        lb = StepTransfer(LOWER, tech.v_dd, (g_min, g_max))
        hb = StepTransfer(HIGHER, tech.v_dd, (g_min, g_max))
        meta["gain"] = "step"
    else:
        vt = threshold_voltage(g_ax, tech)
        lb = TransferLut(v_dl, g_ax, tech.v_dd * _sigmoid(gain * (vt[None, :] - v_dl[:, None])), LOWER)
        hb = TransferLut(v_dl, g_ax, tech.v_dd * _sigmoid(gain * (v_dl[:, None] - vt[None, :])), HIGHER)

    v_ml = np.linspace(0.0, tech.v_dd, n_vml)
    v_x = np.linspace(0.0, tech.v_dd, n_vx)
    drive = PULLDOWN_K * np.maximum(v_x[None, :] - PULLDOWN_VTH, 0.0) ** 2
    pd_grid = drive * np.minimum(1.0, v_ml[:, None] / PULLDOWN_VSAT)
    pulldown = PulldownLut(v_ml, v_x, pd_grid)

    return LutSet(lb=lb, hb=hb, pulldown=pulldown, arch_kind=arch_kind, metadata=meta)


def bound_to_conductance(threshold, window):
    """Affine map of a normalized bound in [0,1] onto the conductance window."""
    t = np.asarray(threshold, dtype=float)
    if np.any(t < 0) or np.any(t > 1):
        raise LutError("normalized threshold outside [0, 1]")
    g_min, g_max = window
    out = g_min + t * (g_max - g_min)
    return float(out) if out.ndim == 0 else out


def quantize_conductance(g, tech: TechParams):
    """Snap to the nearest of n_levels uniform levels; ties round toward g_min."""
    g_min, g_max = tech.g_window
    step = (g_max - g_min) / (tech.n_levels - 1)
    u = (np.clip(np.asarray(g, dtype=float), g_min, g_max) - g_min) / step
    k = np.clip(np.ceil(u - 0.5), 0, tech.n_levels - 1)
    out = g_min + k * step
    return float(out) if out.ndim == 0 else out


def conductance_level(g, tech: TechParams):
    """Integer level index of an on-level conductance value."""
    g_min, g_max = tech.g_window
    step = (g_max - g_min) / (tech.n_levels - 1)
    k = np.rint((np.asarray(g, dtype=float) - g_min) / step).astype(int)
    return int(k) if k.ndim == 0 else k


_LUT_MAGIC = "acam-lut"
_LUT_VERSION = "v1"
_FILES = ((  "lb.lut", LOWER), ("hb.lut", HIGHER), ("pd.lut", PULLDOWN))


def _format_row(values) -> str:
    return " ".join(format(float(v), ".17g") for v in values)


def _sample_step(step: StepTransfer, n_vdl=None, n_g=64):
    if n_vdl is None:
        n_vdl = _transfer_vdl_size(n_g)
    v_dl = np.linspace(0.0, step.v_dd, n_vdl)
    g_ax = np.linspace(step.g_window[0], step.g_window[1], n_g)
    grid = step.lookup(v_dl[:, None], np.broadcast_to(g_ax[None, :], (n_vdl, n_g)))
    return TransferLut(v_dl, g_ax, grid, step.polarity)


def save_luts(luts: LutSet, path):
    """Write lb.lut / hb.lut / pd.lut under `path`.

    Grids are written with 17 significant digits, enough to round-trip float64
    bitwise. A step transfer is sampled onto a grid first, so the exact-step
    kind reloads as a finely sampled approximation of itself.
    """
    os.makedirs(path, exist_ok=True)
    for fname, pol in _FILES:
        if pol == PULLDOWN:
            lut = luts.pulldown
            ax, ay = lut.v_ml_axis, lut.v_x_axis
        else:
            lut = luts.lb if pol == LOWER else luts.hb
            if isinstance(lut, StepTransfer):
                lut = _sample_step(lut)
            ax, ay = lut.v_dl_axis, lut.g_mem_axis
        lines = ["%s %s %s %s" % (_LUT_MAGIC, _LUT_VERSION, luts.arch_kind, pol),
                 "%d %d" % (ax.size, ay.size),
                 _format_row(ax),
                 _format_row(ay)]
        lines.extend(_format_row(row) for row in lut.grid)
        with open(os.path.join(path, fname), "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _parse_floats(line, n, what, fname):
    parts = line.split()
    if len(parts) != n:
        raise LutError("%s: expected %d values for %s, got %d" % (fname, n, what, len(parts)))
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise LutError("%s: unparsable number in %s" % (fname, what))


def _load_one(path, fname, expect_pol):
    full = os.path.join(path, fname)
    with open(full, "r") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    lines = [ln for ln in lines if ln.strip()]
    if len(lines) < 4:
        raise LutError("%s: truncated file" % fname)
    header = lines[0].split()
    if len(header) != 4 or header[0] != _LUT_MAGIC or header[1] != _LUT_VERSION:
        raise LutError("%s: bad header %r" % (fname, lines[0]))
    kind, pol = header[2], header[3]
    if kind not in KINDS:
        raise LutError("%s: unknown kind %r" % (fname, kind))
    if pol != expect_pol:
        raise LutError("%s: expected polarity %r, found %r" % (fname, expect_pol, pol))
    dims = lines[1].split()
    if len(dims) != 2:
        raise LutError("%s: bad dimension line %r" % (fname, lines[1]))
    try:
        n_x, n_y = int(dims[0]), int(dims[1])
    except ValueError:
        raise LutError("%s: bad dimension line %r" % (fname, lines[1]))
    if n_x < 2 or n_y < 2:
        raise LutError("%s: axes must have length >= 2" % fname)
    if len(lines) != 4 + n_x:
        raise LutError("%s: expected %d grid rows, found %d" % (fname, n_x, len(lines) - 4))
    ax = _parse_floats(lines[2], n_x, "x axis", fname)
    ay = _parse_floats(lines[3], n_y, "y axis", fname)
    grid = np.stack([_parse_floats(lines[4 + i], n_y, "grid row %d" % i, fname) for i in range(n_x)])
    try:
        if pol == PULLDOWN:
            return kind, PulldownLut(ax, ay, grid)
        return kind, TransferLut(ax, ay, grid, pol)
    except LutError as e:
        raise LutError("%s: %s" % (fname, e))


def load_luts(path) -> LutSet:
    """Load and validate a three-file LutSet directory."""
    kinds = []
    loaded = {}
    for fname, pol in _FILES:
        kind, lut = _load_one(path, fname, pol)
        kinds.append(kind)
        loaded[pol] = lut
    if len(set(kinds)) != 1:
        raise LutError("inconsistent kinds across files: %r" % (kinds,))
    return LutSet(lb=loaded[LOWER], hb=loaded[HIGHER], pulldown=loaded[PULLDOWN],
                  arch_kind=kinds[0], metadata={"source": str(path)})
