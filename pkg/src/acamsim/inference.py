"""Query evaluation against a compiled forest, in ideal or behavioral mode.

Ideal mode applies closed-interval containment to the words' normalized
bounds: the reference semantics, exact by construction. Behavioral mode drives
the quantized conductance rows through a LutSet: data-line voltages produce
per-side comparison voltages, latched families rail them before the pulldown,
and each match-line tile integrates its total pulldown current to a final
voltage that the sense threshold turns into a decision. A word matches only if
all of its tiles do.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import forest as _forest
from .arch import ArchConfig
from .luts import LutSet, StepTransfer, TechParams, interp2, _locate
from .matchline import SimError, latch_rails, n_steps
from .forest import CompiledForest, MismatchStats, measured_mismatch_stats, tile

IDEAL = "ideal"
BEHAVIORAL = "behavioral"

# Near-boundary query placement margin, in normalized feature units.
DELTA_NEAR_BOUNDARY = 0.01

_EULER_CHUNK = 1_000_000


@dataclass(frozen=True)
class EvalMode:
    kind: str
    tech: TechParams
    luts: Optional[LutSet] = None
    arch: Optional[ArchConfig] = None

    def __post_init__(self):
        if self.kind not in (IDEAL, BEHAVIORAL):
            raise SimError("mode kind must be %r or %r" % (IDEAL, BEHAVIORAL))
        if self.kind == BEHAVIORAL and self.luts is None:
            raise SimError("behavioral mode requires a LutSet")

    @classmethod
    def ideal(cls, tech: TechParams, arch: Optional[ArchConfig] = None):
        return cls(kind=IDEAL, tech=tech, arch=arch)

    @classmethod
    def behavioral(cls, luts: LutSet, tech: TechParams, arch: Optional[ArchConfig] = None):
        return cls(kind=BEHAVIORAL, tech=tech, luts=luts, arch=arch)


def query_to_voltages(x, feature_ranges, tech: TechParams) -> np.ndarray:
    """Raw feature vector to clamped data-line voltages on [0, v_dd]."""
    x_norm = _forest.normalize_queries(np.atleast_2d(np.asarray(x, dtype=float)),
                                       feature_ranges)[0]
    return x_norm * tech.v_dd


def _check_luts(compiled: CompiledForest, mode: EvalMode):
    luts = mode.luts
    gw = luts.lb.g_window
    if abs(gw[0] - compiled.g_window[0]) > 1e-9 * compiled.g_window[0] or \
       abs(gw[1] - compiled.g_window[1]) > 1e-9 * compiled.g_window[1]:
        raise SimError("lut conductance window %r does not cover the compiled window %r"
                       % (gw, compiled.g_window))
    rail = luts.lb.v_dd if isinstance(luts.lb, StepTransfer) else luts.lb.v_dl_axis[-1]
    if abs(rail - mode.tech.v_dd) > 1e-9 * mode.tech.v_dd:
        raise SimError("lut rail %g V differs from tech v_dd %g V" % (rail, mode.tech.v_dd))


def _side_vx(lut, v_dl_col, g_row):
    """V_X for the outer product of query voltages and stored conductances.

    v_dl_col: (n_q,) voltages; g_row: (n_w,) conductances with NaN wildcards.
    Returns (n_q, n_w) with 0.0 on wildcard sides.
    """
    mask = ~np.isnan(g_row)
    g_safe = np.where(mask, g_row, 1.0)
    vx = interp2(lut, v_dl_col[:, None], np.broadcast_to(g_safe[None, :],
                                                         (v_dl_col.size, g_row.size)))
    return np.where(mask[None, :], vx, 0.0), mask


def _pd_profiles(pulldown, v_x):
    """Pulldown current at every v_ml grid node for each v_x value.

    v_x: any shape. Returns shape v_x.shape + (n_vml,). Linear interpolation
    along the v_x axis only; the v_ml dependence stays sampled at the nodes so
    a later 1-D interpolation in v_ml reproduces bilinear lookups exactly.
    """
    iy, iy2, ty = _locate(pulldown.v_x_axis, v_x)
    g = pulldown.grid  # (n_vml, n_vx)
    p0 = g[:, iy]      # (n_vml,) + v_x.shape
    p1 = g[:, iy2]
    prof = p0 + ty[None, ...] * (p1 - p0)
    return np.moveaxis(prof, 0, -1)


def _batch_final_voltage(profiles, tech: TechParams, v_ml_axis) -> np.ndarray:
    """Euler-integrate many tiles at once.

    profiles: (n, n_vml) total pulldown current sampled at the v_ml grid
    nodes. Currents between nodes interpolate linearly, matching the bilinear
    table lookup of the reference single-row integrator.
    """
    prof = np.asarray(profiles, dtype=float)
    n = prof.shape[0]
    out = np.empty(n)
    steps = n_steps(tech)
    scale = tech.dt / tech.c_ml
    for s in range(0, n, _EULER_CHUNK):
        e = min(s + _EULER_CHUNK, n)
        P = prof[s:e]
        rows = np.arange(e - s)
        v = np.full(e - s, float(tech.v_dd))
        for _ in range(steps):
            i, i2, t = _locate(v_ml_axis, v)
            cur = P[rows, i] + t * (P[rows, i2] - P[rows, i])
            v = np.maximum(v - cur * scale, 0.0)
        out[s:e] = v
    return out


class _LatchTable:
    """Final tile voltage as a function of the railed-side count.

    All railed sides share the same V_X (the rail), so a tile's total current
    is count * I_rail(v_ml) and its final voltage depends on the count alone.
    """

    def __init__(self, luts: LutSet, tech: TechParams):
        pd = luts.pulldown
        self.v_ml_axis = pd.v_ml_axis
        rail = np.full(pd.v_ml_axis.shape, tech.v_dd)
        self.rail_profile = interp2(pd, pd.v_ml_axis, rail)
        self.tech = tech
        self._finals = [float(tech.v_dd)]  # count 0 never discharges

    def v_final(self, counts: np.ndarray) -> np.ndarray:
        top = int(counts.max(initial=0))
        if top >= len(self._finals):
            new = np.arange(len(self._finals), top + 1)
            profs = new[:, None] * self.rail_profile[None, :]
            finals = _batch_final_voltage(profs, self.tech, self.v_ml_axis)
            self._finals.extend(float(v) for v in finals)
        table = np.asarray(self._finals)
        return table[counts]


def _railed_sides(compiled, X_norm, mode, word_sel=None):
    """Latched per-side mismatch bits: (railed_lb, railed_hb), each (n_q, n_w, n_f)."""
    luts, tech = mode.luts, mode.tech
    sel = slice(None) if word_sel is None else word_sel
    g_lb = compiled.row_g_lb[sel]
    g_hb = compiled.row_g_hb[sel]
    v_dl = np.clip(X_norm, 0.0, 1.0) * tech.v_dd
    half = 0.5 * tech.v_dd
    railed = []
    for lut, g in ((luts.lb, g_lb), (luts.hb, g_hb)):
        vx = np.empty((X_norm.shape[0],) + g.shape)
        for f in range(g.shape[-1]):
            col, mask = _side_vx(lut, v_dl[:, f], g[..., f])
            vx[:, ..., f] = col
        mask = ~np.isnan(g)
        railed.append((vx > half) & mask[None, ...])
    return railed


def _behavioral_match(compiled: CompiledForest, X_norm, mode: EvalMode, tiles):
    """Full (n_q, n_w) behavioral match matrix."""
    luts, tech = mode.luts, mode.tech
    n_q, n_f = X_norm.shape
    n_w = compiled.n_words
    v_dl = np.clip(X_norm, 0.0, 1.0) * tech.v_dd
    match = np.ones((n_q, n_w), dtype=bool)

    if luts.latched:
        table = _LatchTable(luts, tech)
        railed_lb, railed_hb = _railed_sides(compiled, X_norm, mode)
        for (s, e) in tiles:
            counts = (railed_lb[:, :, s:e].sum(axis=2)
                      + railed_hb[:, :, s:e].sum(axis=2))
            finals = table.v_final(counts)
            match &= finals >= tech.v_ref
        return match

    pd = luts.pulldown
    n_vml = pd.v_ml_axis.size
    slab = max(1, int(2e6) // max(1, n_q * n_vml))
    for ws in range(0, n_w, slab):
        we = min(ws + slab, n_w)
        for (s, e) in tiles:
            prof = np.zeros((n_q, we - ws, n_vml))
            for f in range(s, e):
                for lut, g in ((luts.lb, compiled.row_g_lb), (luts.hb, compiled.row_g_hb)):
                    col = g[ws:we, f]
                    mask = ~np.isnan(col)
                    if not mask.any():
                        continue
                    vx, _ = _side_vx(lut, v_dl[:, f], col)
                    prof += np.where(mask[None, :, None], _pd_profiles(pd, vx), 0.0)
            finals = _batch_final_voltage(prof.reshape(-1, n_vml), tech, pd.v_ml_axis)
            match[:, ws:we] &= finals.reshape(n_q, we - ws) >= tech.v_ref
    return match


def _ideal_match(compiled: CompiledForest, X_norm, tiles=None):
    """Containment match matrix; per-tile AND when tiles are given."""
    n_q = X_norm.shape[0]
    n_w = compiled.n_words
    match = np.ones((n_q, n_w), dtype=bool)
    spans = tiles if tiles is not None else [(0, compiled.n_features)]
    with np.errstate(invalid="ignore"):
        for (s, e) in spans:
            lb = compiled.word_lb[None, :, s:e]
            hb = compiled.word_hb[None, :, s:e]
            X = X_norm[:, None, s:e]
            ok = ~np.any(X < lb, axis=2) & ~np.any(X > hb, axis=2)
            match &= ok
    return match


def match_matrix(compiled: CompiledForest, X, mode: EvalMode, segment=None,
                 normalized=False) -> np.ndarray:
    """Match decisions for every (query, word) pair.

    X is in raw dataset units unless normalized=True. segment overrides the
    compiled tiling length for this evaluation only.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != compiled.n_features:
        raise SimError("queries have shape %r, model expects %d features"
                       % (X.shape, compiled.n_features))
    X_norm = X if normalized else _forest.normalize_queries(X, compiled.feature_ranges)
    tiles = compiled.tiles if segment is None else tile(compiled.n_features, segment)
    if X_norm.shape[0] == 0:
        return np.zeros((0, compiled.n_words), dtype=bool)
    if mode.kind == IDEAL:
        return _ideal_match(compiled, X_norm, tiles)
    _check_luts(compiled, mode)
    return _behavioral_match(compiled, X_norm, mode, tiles)


def evaluate_word(compiled: CompiledForest, word_index: int, x, mode: EvalMode,
                  segment=None, normalized=False) -> bool:
    """Single (query, word) decision: AND over the word's tiles."""
    m = match_matrix(compiled, np.atleast_2d(np.asarray(x, dtype=float)), mode,
                     segment=segment, normalized=normalized)
    return bool(m[0, word_index])


# ---------------------------------------------------------------------------
# Sequential evaluation with early termination


def _word_bits(compiled: CompiledForest, word_index: int, x_norm, mode: EvalMode):
    """Per-inequality violation bits in feature order (lb before hb)."""
    lb = compiled.word_lb[word_index]
    hb = compiled.word_hb[word_index]
    if mode.kind == IDEAL:
        with np.errstate(invalid="ignore"):
            v_lb = x_norm < lb
            v_hb = x_norm > hb
    else:
        _check_luts(compiled, mode)
        luts, tech = mode.luts, mode.tech
        v_dl = np.clip(x_norm, 0.0, 1.0) * tech.v_dd
        half = 0.5 * tech.v_dd
        v_lb = np.zeros(lb.size, dtype=bool)
        v_hb = np.zeros(hb.size, dtype=bool)
        for f in range(lb.size):
            g1 = compiled.row_g_lb[word_index, f]
            g2 = compiled.row_g_hb[word_index, f]
            if not np.isnan(g1):
                vx = interp2(luts.lb, float(v_dl[f]), float(g1))
                v_lb[f] = latch_rails(vx, tech.v_dd) > half
            if not np.isnan(g2):
                vx = interp2(luts.hb, float(v_dl[f]), float(g2))
                v_hb[f] = latch_rails(vx, tech.v_dd) > half
    bits = np.empty(2 * lb.size, dtype=bool)
    bits[0::2] = v_lb
    bits[1::2] = v_hb
    active = np.empty(2 * lb.size, dtype=bool)
    active[0::2] = ~np.isnan(lb)
    active[1::2] = ~np.isnan(hb)
    return bits[active]


def seq_evaluate_word(compiled: CompiledForest, word_index: int, x, mode: EvalMode,
                      normalized=False):
    """Grouped sequential evaluation of one word.

    The word's non-wildcard inequalities are taken n_par at a time in feature
    order; evaluation stops at the first group containing a violation.
    Wildcards occupy no step and no energy. Returns (match, steps_executed,
    energy_J) with energy = steps * n_par * e_cell.
    """
    if mode.arch is None:
        raise SimError("sequential evaluation needs an ArchConfig on the mode")
    arch = mode.arch
    x = np.asarray(x, dtype=float)
    x_norm = x if normalized else _forest.normalize_queries(x[None, :], compiled.feature_ranges)[0]
    bits = _word_bits(compiled, word_index, x_norm, mode)
    n_ineq = bits.size
    if n_ineq > arch.n_seq * arch.n_par:
        raise SimError("word %d has %d inequalities; arch holds n_seq*n_par = %d"
                       % (word_index, n_ineq, arch.n_seq * arch.n_par))
    if n_ineq == 0:
        return True, 0, 0.0
    n_groups = -(-n_ineq // arch.n_par)
    steps = n_groups
    matched = True
    for k in range(n_groups):
        group = bits[k * arch.n_par:(k + 1) * arch.n_par]
        if group.any():
            steps = k + 1
            matched = False
            break
    return matched, steps, steps * arch.n_par * mode.tech.e_cell


def _bit_depths(compiled: CompiledForest, X_norm, mode: EvalMode) -> MismatchStats:
    """First-violation depths for every pair under the mode's decision bits."""
    if mode.kind == IDEAL:
        return measured_mismatch_stats(compiled, X_norm)
    railed_lb, railed_hb = _railed_sides(compiled, X_norm, mode)
    n_q, n_w, n_f = railed_lb.shape
    active = np.empty((n_w, 2 * n_f), dtype=bool)
    active[:, 0::2] = ~np.isnan(compiled.word_lb)
    active[:, 1::2] = ~np.isnan(compiled.word_hb)
    ranks = np.cumsum(active, axis=1)
    lengths = ranks[:, -1].astype(int)
    viol = np.empty((n_q, n_w, 2 * n_f), dtype=bool)
    viol[:, :, 0::2] = railed_lb
    viol[:, :, 1::2] = railed_hb
    any_viol = viol.any(axis=2)
    first = np.argmax(viol, axis=2)
    r = np.take_along_axis(np.broadcast_to(ranks[None, :, :], viol.shape),
                           first[:, :, None], axis=2)[:, :, 0]
    depths = np.where(any_viol, r, lengths[None, :]).astype(np.int32)
    feat_viol = np.sum(viol[:, :, 0::2] | viol[:, :, 1::2], axis=(0, 1))
    chances = n_q * np.sum(active[:, 0::2] | active[:, 1::2], axis=0)
    return MismatchStats(depths=depths, word_lengths=lengths,
                         feature_violations=feat_viol, feature_chances=chances,
                         n_queries=n_q)


# ---------------------------------------------------------------------------
# Classification


def _votes_to_predictions(match, compiled: CompiledForest) -> np.ndarray:
    """Per-query predictions from a match matrix; -1 marks no prediction.

    Within a tree, the matched word with the smallest leaf_id wins (an
    on-threshold query legitimately matches both sibling leaves; the left one
    has the smaller id, mirroring the software rule that ties go left). A tree
    with no matched word abstains. Hard majority across trees, ties toward the
    smaller class label.
    """
    n_q = match.shape[0]
    votes = np.zeros((n_q, compiled.n_classes), dtype=int)
    order = np.lexsort((compiled.leaf_ids, compiled.tree_ids))
    tree_of = compiled.tree_ids[order]
    boundaries = np.nonzero(np.diff(tree_of))[0] + 1
    groups = np.split(order, boundaries)
    for cols in groups:
        m = match[:, cols]  # leaf_id ascending within the tree
        has = m.any(axis=1)
        first = np.argmax(m, axis=1)
        labels = compiled.labels[cols][first]
        rows = np.nonzero(has)[0]
        np.add.at(votes, (rows, labels[rows]), 1)
    preds = np.argmax(votes, axis=1)
    abstain = votes.sum(axis=1) == 0
    preds[abstain] = -1
    return preds


def classify(x, compiled: CompiledForest, mode: EvalMode, segment=None,
             normalized=False):
    """Class label for one query, or None when every tree abstains."""
    m = match_matrix(compiled, np.atleast_2d(np.asarray(x, dtype=float)), mode,
                     segment=segment, normalized=normalized)
    pred = _votes_to_predictions(m, compiled)[0]
    return None if pred < 0 else int(pred)


@dataclass
class InferenceReport:
    n_queries: int
    predictions: np.ndarray        # -1 = no prediction
    reference: np.ndarray
    accuracy: Optional[float]
    agreement: Optional[float]
    confusion: np.ndarray          # (n_classes + 1, n_classes); last row = abstain
    n_abstain: int
    mean_steps: Optional[float] = None
    mean_energy: Optional[float] = None
    energy: Optional[np.ndarray] = None   # per query, J
    steps: Optional[np.ndarray] = None    # per query, total executed groups

    def to_dict(self):
        out = {"n_queries": self.n_queries,
               "accuracy": self.accuracy,
               "agreement_with_software": self.agreement,
               "n_abstain": self.n_abstain,
               "confusion": self.confusion.tolist()}
        if self.mean_energy is not None:
            out["mean_energy_J"] = self.mean_energy
            out["mean_steps_per_word"] = self.mean_steps
        return out


def evaluate_dataset(compiled: CompiledForest, X, y, mode: EvalMode,
                     segment=None, jobs: int = 1) -> InferenceReport:
    """Classify every row; report accuracy, software agreement, energy/depth.

    y may be None (agreement and energy still reported). With an ArchConfig on
    the mode, every word must fit n_seq * n_par and the per-query energy sums
    the early-terminating group accounting over all words.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != compiled.n_features:
        raise SimError("dataset has shape %r, model expects %d features"
                       % (X.shape, compiled.n_features))
    n_q = X.shape[0]
    n_classes = compiled.n_classes
    if n_q == 0:
        return InferenceReport(n_queries=0, predictions=np.empty(0, dtype=int),
                               reference=np.empty(0, dtype=int), accuracy=None,
                               agreement=None,
                               confusion=np.zeros((n_classes + 1, n_classes), dtype=int),
                               n_abstain=0)

    if jobs > 1 and n_q > 1:
        from concurrent.futures import ThreadPoolExecutor
        chunks = np.array_split(np.arange(n_q), min(jobs, n_q))
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(
                lambda idx: match_matrix(compiled, X[idx], mode, segment=segment), chunks))
        match = np.vstack(parts)
    else:
        match = match_matrix(compiled, X, mode, segment=segment)

    preds = _votes_to_predictions(match, compiled)
    reference = _forest.reference_predictions(compiled.forest_doc, X)
    agreement = float(np.mean(preds == reference))
    accuracy = None
    confusion = np.zeros((n_classes + 1, n_classes), dtype=int)
    if y is not None:
        y = np.asarray(y, dtype=int)
        accuracy = float(np.mean(preds == y))  # abstentions (-1) never equal y
        for p, t in zip(preds, y):
            confusion[p if p >= 0 else n_classes, t] += 1
    report = InferenceReport(n_queries=n_q, predictions=preds, reference=reference,
                             accuracy=accuracy, agreement=agreement,
                             confusion=confusion, n_abstain=int(np.sum(preds < 0)))

    if mode.arch is not None:
        arch = mode.arch
        lengths = compiled.word_lengths
        if int(lengths.max(initial=0)) > arch.n_seq * arch.n_par:
            raise SimError("longest word (%d inequalities) exceeds n_seq*n_par = %d"
                           % (int(lengths.max()), arch.n_seq * arch.n_par))
        X_norm = _forest.normalize_queries(X, compiled.feature_ranges)
        stats = _bit_depths(compiled, X_norm, mode)
        steps = -(-stats.depths // arch.n_par)  # ceil; words of length 0 give 0
        energy = steps * (arch.n_par * mode.tech.e_cell)
        report.steps = steps.sum(axis=1)
        report.energy = energy.sum(axis=1)
        report.mean_steps = float(np.mean(steps))
        report.mean_energy = float(np.mean(report.energy))
    return report


def write_report_csv(report: InferenceReport, path):
    with open(path, "w") as fh:
        fh.write("query_id,predicted,reference,n_steps,energy_J\n")
        for q in range(report.n_queries):
            pred = report.predictions[q]
            steps = "" if report.steps is None else "%d" % report.steps[q]
            energy = "" if report.energy is None else "%.17g" % report.energy[q]
            fh.write("%d,%s,%d,%s,%s\n"
                     % (q, "" if pred < 0 else "%d" % pred,
                        report.reference[q], steps, energy))


def segment_length_sweep(compiled: CompiledForest, X, y, mode: EvalMode, lengths,
                         jobs: int = 1):
    """Re-tile and re-evaluate per segment length; [(length, accuracy, agreement)]."""
    out = []
    for L in lengths:
        if L < 1:
            raise SimError("segment lengths must be >= 1")
        rep = evaluate_dataset(compiled, X, y, mode, segment=int(L), jobs=jobs)
        out.append((int(L), rep.accuracy, rep.agreement))
    return out


# ---------------------------------------------------------------------------
# Near-boundary crosstalk studies


def make_near_boundary_queries(compiled: CompiledForest, n_queries: int,
                               delta: float = DELTA_NEAR_BOUNDARY, seed: int = 0,
                               scale_decades: float = 2.0):
    """Queries placed just inside the stored bounds of long words.

    Targets the highest-inequality word of each tree, round-robin. Each query
    draws a proximity scale log-uniformly from [delta / 10**scale_decades,
    delta]; every non-wildcard feature then sits strictly inside both the
    pre-quantization and the programmed (quantized) bounds, at a margin drawn
    from (scale / 2, scale]. Wildcard features sit at 0.5. Spreading the
    proximity over decades exercises residual currents from barely-leaking to
    near-threshold, so crosstalk failures onset at different row lengths for
    different queries instead of all at once; the per-feature floor of half
    the query's scale keeps one query's margins comparable, which is what ties
    its failure onset to a specific row length.

    Such a query must match its target word under reference semantics, so any
    behavioral mismatch on the pair is a false decision caused by
    residual-current crosstalk. Returns (X_norm, word_indices).
    """
    if delta <= 0:
        raise SimError("delta must be positive")
    rng = np.random.default_rng(seed)
    g_min, g_max = compiled.g_window
    span = g_max - g_min
    targets = []
    for t in np.unique(compiled.tree_ids):
        cols = np.nonzero(compiled.tree_ids == t)[0]
        targets.append(int(cols[np.argmax(compiled.word_lengths[cols])]))
    X = np.full((n_queries, compiled.n_features), 0.5)
    idx = np.empty(n_queries, dtype=int)
    for q in range(n_queries):
        w = targets[q % len(targets)]
        idx[q] = w
        scale = delta * 10.0 ** (-scale_decades * rng.random())
        for f in range(compiled.n_features):
            lb, hb = compiled.word_lb[w, f], compiled.word_hb[w, f]
            if np.isnan(lb) and np.isnan(hb):
                continue
            q_lb = compiled.row_g_lb[w, f]
            q_hb = compiled.row_g_hb[w, f]
            lo = max(lb if not np.isnan(lb) else 0.0,
                     (q_lb - g_min) / span if not np.isnan(q_lb) else 0.0)
            hi = min(hb if not np.isnan(hb) else 1.0,
                     (q_hb - g_min) / span if not np.isnan(q_hb) else 1.0)
            if hi <= lo:
                X[q, f] = 0.5 * (lo + hi)
                continue
            u = scale * (0.5 + 0.5 * (1.0 - rng.random()))  # in (scale/2, scale]
            if np.isnan(lb):
                x_f = hi - u
            elif np.isnan(hb):
                x_f = lo + u
            else:
                x_f = lo + u if f % 2 == 0 else hi - u
            X[q, f] = min(max(x_f, lo + 1e-12), hi - 1e-12) if hi - lo > 2e-12 \
                else 0.5 * (lo + hi)
    return X, idx


def pair_decisions(compiled: CompiledForest, X_norm, word_indices, mode: EvalMode,
                   segment=None) -> np.ndarray:
    """Match decision for each (query, its target word) pair."""
    X_norm = np.asarray(X_norm, dtype=float)
    word_indices = np.asarray(word_indices, dtype=int)
    tiles = compiled.tiles if segment is None else tile(compiled.n_features, segment)
    n = X_norm.shape[0]
    if mode.kind == IDEAL:
        out = np.empty(n, dtype=bool)
        for k in range(n):
            m = _ideal_match(compiled, X_norm[k:k + 1], tiles)
            out[k] = m[0, word_indices[k]]
        return out
    _check_luts(compiled, mode)
    luts, tech = mode.luts, mode.tech
    v_dl = np.clip(X_norm, 0.0, 1.0) * tech.v_dd
    out = np.ones(n, dtype=bool)
    if luts.latched:
        table = _LatchTable(luts, tech)
        half = 0.5 * tech.v_dd
        for (s, e) in tiles:
            counts = np.zeros(n, dtype=int)
            for f in range(s, e):
                for lut, g in ((luts.lb, compiled.row_g_lb), (luts.hb, compiled.row_g_hb)):
                    gv = g[word_indices, f]
                    mask = ~np.isnan(gv)
                    if not mask.any():
                        continue
                    vx = interp2(lut, v_dl[:, f], np.where(mask, gv, 1.0))
                    counts += ((vx > half) & mask).astype(int)
            out &= table.v_final(counts) >= tech.v_ref
        return out
    pd = luts.pulldown
    n_vml = pd.v_ml_axis.size
    for (s, e) in tiles:
        prof = np.zeros((n, n_vml))
        for f in range(s, e):
            for lut, g in ((luts.lb, compiled.row_g_lb), (luts.hb, compiled.row_g_hb)):
                gv = g[word_indices, f]
                mask = ~np.isnan(gv)
                if not mask.any():
                    continue
                vx = interp2(lut, v_dl[:, f], np.where(mask, gv, 1.0))
                prof += np.where(mask[:, None], _pd_profiles(pd, vx), 0.0)
        out &= _batch_final_voltage(prof, tech, pd.v_ml_axis) >= tech.v_ref
    return out


def false_decision_rates(compiled: CompiledForest, X_norm, word_indices,
                         mode: EvalMode, lengths):
    """Fraction of (query, target word) pairs decided differently from the
    reference containment semantics, per segment length."""
    ideal_mode = EvalMode.ideal(mode.tech)
    ref = pair_decisions(compiled, X_norm, word_indices, ideal_mode)
    rates = []
    for L in lengths:
        got = pair_decisions(compiled, X_norm, word_indices, mode, segment=int(L))
        rates.append(float(np.mean(got != ref)))
    return rates
