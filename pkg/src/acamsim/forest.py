"""Decision-forest compilation into interval words and conductance rows.

Every root-to-leaf path of a tree becomes one word of per-feature intervals:
a left edge at (feature, threshold) tightens the upper bound, a right edge the
lower bound, untested sides stay wildcard. Words are normalized to [0, 1]
feature coordinates, programmed into quantized conductance pairs, and split
into contiguous match-line tiles of bounded length. The module also measures
mismatch statistics of a compiled forest against a dataset, which feed the
architecture-model energy predictions.
"""

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .luts import (TechParams, bound_to_conductance, conductance_level,
                   quantize_conductance)
from .matchline import CellProgram, RowProgram

COMPILED_MAGIC = "acam-compiled"
COMPILED_VERSION = 1
DEFAULT_MAX_SEGMENT = 64


class SchemaError(ValueError):
    """Malformed model document, dataset, or compiled file."""


# ---------------------------------------------------------------------------
# Tree representation


@dataclass(frozen=True)
class TreeModel:
    """One decision tree in array form. feature[i] == -1 marks a leaf."""
    tree_id: int
    n_features: int
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    class_label: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def is_leaf(self, idx: int) -> bool:
        return self.feature[idx] < 0


def _tree_from_nodes(tree_id, nodes, n_features, n_classes, where):
    n = len(nodes)
    if n < 1:
        raise SchemaError("%s: empty node list" % where)
    feature = np.full(n, -1, dtype=int)
    threshold = np.full(n, np.nan)
    left = np.full(n, -1, dtype=int)
    right = np.full(n, -1, dtype=int)
    label = np.full(n, -1, dtype=int)
    for i, node in enumerate(nodes):
        loc = "%s.nodes[%d]" % (where, i)
        if not isinstance(node, dict):
            raise SchemaError("%s: node must be an object" % loc)
        is_internal = "feature_index" in node
        is_leaf = "class_label" in node
        if is_internal == is_leaf:
            raise SchemaError("%s: node must have either feature_index or class_label" % loc)
        if is_leaf:
            lab = node["class_label"]
            if int(lab) != lab or not (0 <= lab < n_classes):
                raise SchemaError("%s: class_label %r outside [0, %d)" % (loc, lab, n_classes))
            label[i] = int(lab)
            continue
        for key in ("threshold", "left_child", "right_child"):
            if key not in node:
                raise SchemaError("%s: internal node missing %r" % (loc, key))
        f = node["feature_index"]
        if int(f) != f or not (0 <= f < n_features):
            raise SchemaError("%s: feature_index %r outside [0, %d)" % (loc, f, n_features))
        t = float(node["threshold"])
        if not np.isfinite(t):
            raise SchemaError("%s: non-finite threshold" % loc)
        l, r = node["left_child"], node["right_child"]
        for name, c in (("left_child", l), ("right_child", r)):
            if int(c) != c or not (0 <= c < n):
                raise SchemaError("%s: %s %r out of range" % (loc, name, c))
        if l == i or r == i or l == r:
            raise SchemaError("%s: children must be two distinct other nodes" % loc)
        feature[i], threshold[i], left[i], right[i] = int(f), t, int(l), int(r)

    # Structural checks: node 0 is the single root, every other node has
    # exactly one parent, and everything is reachable (so no cycles).
    indeg = np.zeros(n, dtype=int)
    for i in range(n):
        if feature[i] >= 0:
            indeg[left[i]] += 1
            indeg[right[i]] += 1
    if indeg[0] != 0:
        raise SchemaError("%s: node 0 must be the root (found a parent)" % where)
    bad = np.nonzero(indeg[1:] != 1)[0]
    if bad.size:
        raise SchemaError("%s: node %d has %d parents, expected 1"
                          % (where, bad[0] + 1, indeg[bad[0] + 1]))
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    while stack:
        i = stack.pop()
        if seen[i]:
            raise SchemaError("%s: cycle through node %d" % (where, i))
        seen[i] = True
        if feature[i] >= 0:
            stack.append(right[i])
            stack.append(left[i])
    if not seen.all():
        raise SchemaError("%s: node %d unreachable from the root"
                          % (where, int(np.argmin(seen))))
    return TreeModel(tree_id=int(tree_id), n_features=n_features, feature=feature,
                     threshold=threshold, left=left, right=right, class_label=label)


def validate_forest_doc(doc) -> list:
    """Validate an interchange document; returns the trees as TreeModel list."""
    if not isinstance(doc, dict) or "forest" not in doc:
        raise SchemaError("document must be an object with a 'forest' field")
    forest = doc["forest"]
    for key in ("n_features", "n_classes", "feature_ranges", "trees"):
        if key not in forest:
            raise SchemaError("forest: missing field %r" % key)
    n_features = forest["n_features"]
    n_classes = forest["n_classes"]
    if int(n_features) != n_features or n_features < 1:
        raise SchemaError("forest.n_features must be an integer >= 1")
    if int(n_classes) != n_classes or n_classes < 1:
        raise SchemaError("forest.n_classes must be an integer >= 1")
    ranges = forest["feature_ranges"]
    if len(ranges) != n_features:
        raise SchemaError("forest.feature_ranges has %d entries for %d features"
                          % (len(ranges), n_features))
    for f, pair in enumerate(ranges):
        if len(pair) != 2 or not all(np.isfinite(float(v)) for v in pair):
            raise SchemaError("forest.feature_ranges[%d] must be [min, max]" % f)
        if float(pair[0]) > float(pair[1]):
            raise SchemaError("forest.feature_ranges[%d]: min exceeds max" % f)
    trees = forest["trees"]
    if not isinstance(trees, list) or not trees:
        raise SchemaError("forest.trees must be a non-empty list")
    out = []
    seen_ids = set()
    for k, tdoc in enumerate(trees):
        where = "trees[%d]" % k
        if not isinstance(tdoc, dict) or "nodes" not in tdoc:
            raise SchemaError("%s: missing 'nodes'" % where)
        tree_id = tdoc.get("tree_id", k)
        if tree_id in seen_ids:
            raise SchemaError("%s: duplicate tree_id %r" % (where, tree_id))
        seen_ids.add(tree_id)
        out.append(_tree_from_nodes(tree_id, tdoc["nodes"], int(n_features),
                                    int(n_classes), where))
    return out


def load_forest_file(path):
    """Load and validate an interchange JSON file; returns (doc, trees)."""
    with open(path, "r") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise SchemaError("%s: not valid JSON (%s)" % (path, e))
    trees = validate_forest_doc(doc)
    return doc, trees


# ---------------------------------------------------------------------------
# Interval words


@dataclass(frozen=True)
class IntervalWord:
    """Per-feature [lb, hb] bounds with NaN marking a wildcard side."""
    lb: np.ndarray
    hb: np.ndarray
    class_label: int
    tree_id: int
    leaf_id: int

    def __post_init__(self):
        lb = np.asarray(self.lb, dtype=float)
        hb = np.asarray(self.hb, dtype=float)
        if lb.shape != hb.shape or lb.ndim != 1:
            raise SchemaError("word bounds must be two 1-D arrays of equal length")
        both = ~np.isnan(lb) & ~np.isnan(hb)
        if np.any(lb[both] > hb[both]):
            f = int(np.nonzero(both)[0][np.argmax(lb[both] > hb[both])])
            raise SchemaError("word for leaf %d: empty interval on feature %d"
                              % (self.leaf_id, f))
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "hb", hb)

    @property
    def intervals(self):
        out = []
        for lo, hi in zip(self.lb, self.hb):
            lo_v = None if np.isnan(lo) else float(lo)
            hi_v = None if np.isnan(hi) else float(hi)
            out.append(None if (lo_v is None and hi_v is None) else (lo_v, hi_v))
        return out

    @property
    def n_inequalities(self) -> int:
        return int(np.sum(~np.isnan(self.lb)) + np.sum(~np.isnan(self.hb)))


def extract_paths(tree: TreeModel):
    """One IntervalWord per leaf, in left-first depth-first order.

    Left edges tighten the upper bound (x <= t goes left), right edges the
    lower bound; repeated features keep the tightest bounds. leaf_id numbers
    leaves in traversal order, so the left sibling always has the smaller id.
    """
    words = []
    leaf_counter = [0]

    def walk(idx, lb, hb):
        if tree.is_leaf(idx):
            words.append(IntervalWord(lb=lb.copy(), hb=hb.copy(),
                                      class_label=int(tree.class_label[idx]),
                                      tree_id=tree.tree_id, leaf_id=leaf_counter[0]))
            leaf_counter[0] += 1
            return
        f = int(tree.feature[idx])
        t = float(tree.threshold[idx])
        old_lb, old_hb = lb[f], hb[f]
        hb[f] = t if np.isnan(old_hb) else min(old_hb, t)
        walk(int(tree.left[idx]), lb, hb)
        hb[f] = old_hb
        lb[f] = t if np.isnan(old_lb) else max(old_lb, t)
        walk(int(tree.right[idx]), lb, hb)
        lb[f] = old_lb

    import sys
    limit = sys.getrecursionlimit()
    if tree.n_nodes + 64 > limit:
        sys.setrecursionlimit(tree.n_nodes + 64)
    try:
        walk(0, np.full(tree.n_features, np.nan), np.full(tree.n_features, np.nan))
    finally:
        sys.setrecursionlimit(limit)
    return words


def normalize_word(word: IntervalWord, feature_ranges):
    """Affine map of bounds into [0, 1] per feature, clamped.

    A degenerate range (min == max) turns the feature into a wildcard and is
    reported, not raised. Returns (normalized word, list of warning strings).
    """
    ranges = np.asarray(feature_ranges, dtype=float)
    lb = word.lb.copy()
    hb = word.hb.copy()
    warnings = []
    for f in range(lb.size):
        lo, hi = ranges[f]
        if hi <= lo:
            if not (np.isnan(lb[f]) and np.isnan(hb[f])):
                warnings.append("feature %d: degenerate range [%g, %g]; bounds "
                                "dropped to wildcard" % (f, lo, hi))
            lb[f] = np.nan
            hb[f] = np.nan
            continue
        span = hi - lo
        if not np.isnan(lb[f]):
            lb[f] = min(max((lb[f] - lo) / span, 0.0), 1.0)
        if not np.isnan(hb[f]):
            hb[f] = min(max((hb[f] - lo) / span, 0.0), 1.0)
    return IntervalWord(lb=lb, hb=hb, class_label=word.class_label,
                        tree_id=word.tree_id, leaf_id=word.leaf_id), warnings


def denormalize_word(word: IntervalWord, feature_ranges) -> IntervalWord:
    ranges = np.asarray(feature_ranges, dtype=float)
    lo = ranges[:, 0]
    span = ranges[:, 1] - ranges[:, 0]
    return IntervalWord(lb=lo + word.lb * span, hb=lo + word.hb * span,
                        class_label=word.class_label, tree_id=word.tree_id,
                        leaf_id=word.leaf_id)


def normalize_queries(X, feature_ranges):
    """Dataset rows mapped through the same affine feature maps, clamped."""
    ranges = np.asarray(feature_ranges, dtype=float)
    X = np.asarray(X, dtype=float)
    lo = ranges[:, 0]
    span = ranges[:, 1] - ranges[:, 0]
    safe = np.where(span > 0, span, 1.0)
    out = (X - lo) / safe
    out[:, span <= 0] = 0.5
    return np.clip(out, 0.0, 1.0)


def program_rows(word_lb: np.ndarray, word_hb: np.ndarray, tech: TechParams):
    """Quantized conductance rows for a stack of normalized words.

    Bounds map affinely onto the conductance window and snap to the nearest of
    n_levels values. Quantization may not disturb an interval so far that it
    stops covering the original interval's center: whenever the snapped level
    lands beyond the center (including both bounds collapsing onto one level),
    the offending side is widened outward by one level. Wildcard sides stay
    wildcard. Returns (g_lb, g_hb) with NaN for wildcards.
    """
    lb = np.asarray(word_lb, dtype=float)
    hb = np.asarray(word_hb, dtype=float)
    n_levels = tech.n_levels
    g_min, g_max = tech.g_window

    def to_levels(t):
        k = np.full(t.shape, -1, dtype=int)
        m = ~np.isnan(t)
        if np.any(m):
            g = bound_to_conductance(t[m], tech.g_window)
            k[m] = conductance_level(quantize_conductance(g, tech), tech)
        return k

    k_lb = to_levels(lb)
    k_hb = to_levels(hb)

    both = (k_lb >= 0) & (k_hb >= 0)
    if np.any(both):
        # Defensive: nearest-level rounding of ordered bounds cannot cross,
        # but never let a crossed pair through.
        swap = both & (k_lb > k_hb)
        if np.any(swap):
            k_lo = np.minimum(k_lb, k_hb)
            k_hb = np.where(swap, np.maximum(k_lb, k_hb), k_hb)
            k_lb = np.where(swap, k_lo, k_lb)
        center = 0.5 * (lb + hb)
        t_of = lambda k: k / (n_levels - 1.0)
        k_lb = np.where(both & (t_of(k_lb) > center), np.maximum(k_lb - 1, 0), k_lb)
        k_hb = np.where(both & (t_of(k_hb) < center), np.minimum(k_hb + 1, n_levels - 1), k_hb)

    step = (g_max - g_min) / (n_levels - 1.0)
    g_lb = np.where(k_lb >= 0, g_min + k_lb * step, np.nan)
    g_hb = np.where(k_hb >= 0, g_min + k_hb * step, np.nan)
    return g_lb, g_hb


def tile(n_cells: int, max_segment: int = DEFAULT_MAX_SEGMENT):
    """Contiguous feature-order chunks of at most max_segment cells."""
    if max_segment < 1:
        raise SchemaError("max_segment must be >= 1")
    if n_cells < 1:
        raise SchemaError("cannot tile an empty row")
    return [(s, min(s + max_segment, n_cells)) for s in range(0, n_cells, max_segment)]


# ---------------------------------------------------------------------------
# Compiled forest


@dataclass
class CompiledForest:
    n_features: int
    n_classes: int
    feature_ranges: np.ndarray     # (n_features, 2) raw units
    word_lb: np.ndarray            # (n_words, n_features) normalized, NaN wildcard
    word_hb: np.ndarray
    row_g_lb: np.ndarray           # (n_words, n_features) conductances, NaN wildcard
    row_g_hb: np.ndarray
    tree_ids: np.ndarray           # (n_words,)
    leaf_ids: np.ndarray
    labels: np.ndarray
    tiles: list                    # [(start, end)] shared by every word
    max_segment: int
    g_window: tuple
    n_levels: int
    warnings: list
    forest_doc: dict
    _words_cache: Optional[list] = field(default=None, repr=False)

    @property
    def n_words(self) -> int:
        return self.word_lb.shape[0]

    @property
    def words(self):
        if self._words_cache is None:
            self._words_cache = [
                IntervalWord(lb=self.word_lb[i], hb=self.word_hb[i],
                             class_label=int(self.labels[i]),
                             tree_id=int(self.tree_ids[i]),
                             leaf_id=int(self.leaf_ids[i]))
                for i in range(self.n_words)]
        return self._words_cache

    @property
    def rows(self):
        out = []
        for i in range(self.n_words):
            cells = tuple(
                CellProgram(
                    g_lb=None if np.isnan(self.row_g_lb[i, f]) else float(self.row_g_lb[i, f]),
                    g_hb=None if np.isnan(self.row_g_hb[i, f]) else float(self.row_g_hb[i, f]))
                for f in range(self.n_features))
            out.append(RowProgram(cells=cells))
        return out

    @property
    def tile_map(self):
        per_word = [(k, rng) for k, rng in enumerate(self.tiles)]
        return [list(per_word) for _ in range(self.n_words)]

    @property
    def word_lengths(self) -> np.ndarray:
        """Non-wildcard inequality count per word."""
        return (np.sum(~np.isnan(self.word_lb), axis=1)
                + np.sum(~np.isnan(self.word_hb), axis=1)).astype(int)


def compile_forest(doc, tech: TechParams, max_segment: int = DEFAULT_MAX_SEGMENT) -> CompiledForest:
    """Full pipeline: validate, extract, normalize, program, tile."""
    trees = validate_forest_doc(doc)
    forest = doc["forest"]
    n_features = int(forest["n_features"])
    n_classes = int(forest["n_classes"])
    ranges = np.asarray(forest["feature_ranges"], dtype=float)

    words = []
    warnings = []
    for tree in trees:
        for word in extract_paths(tree):
            norm, warn = normalize_word(word, ranges)
            words.append(norm)
            warnings.extend("tree %d leaf %d: %s" % (tree.tree_id, word.leaf_id, w)
                            for w in warn)

    word_lb = np.stack([w.lb for w in words])
    word_hb = np.stack([w.hb for w in words])
    g_lb, g_hb = program_rows(word_lb, word_hb, tech)
    return CompiledForest(
        n_features=n_features, n_classes=n_classes, feature_ranges=ranges,
        word_lb=word_lb, word_hb=word_hb, row_g_lb=g_lb, row_g_hb=g_hb,
        tree_ids=np.array([w.tree_id for w in words], dtype=int),
        leaf_ids=np.array([w.leaf_id for w in words], dtype=int),
        labels=np.array([w.class_label for w in words], dtype=int),
        tiles=tile(n_features, max_segment), max_segment=int(max_segment),
        g_window=tech.g_window, n_levels=tech.n_levels,
        warnings=warnings, forest_doc=doc)


def _nan_to_null(arr):
    return [[None if np.isnan(v) else float(v) for v in row] for row in arr]


def _null_to_nan(rows, n_features, what):
    out = np.full((len(rows), n_features), np.nan)
    for i, row in enumerate(rows):
        if len(row) != n_features:
            raise SchemaError("%s[%d]: expected %d entries, got %d"
                              % (what, i, n_features, len(row)))
        for f, v in enumerate(row):
            if v is not None:
                out[i, f] = float(v)
    return out


def save_compiled(compiled: CompiledForest, path):
    doc = {
        "format": COMPILED_MAGIC,
        "version": COMPILED_VERSION,
        "n_features": compiled.n_features,
        "n_classes": compiled.n_classes,
        "feature_ranges": [[float(a), float(b)] for a, b in compiled.feature_ranges],
        "max_segment": compiled.max_segment,
        "g_window": [compiled.g_window[0], compiled.g_window[1]],
        "n_levels": compiled.n_levels,
        "tiles": [[int(s), int(e)] for s, e in compiled.tiles],
        "warnings": list(compiled.warnings),
        "words": [{
            "tree_id": int(compiled.tree_ids[i]),
            "leaf_id": int(compiled.leaf_ids[i]),
            "class_label": int(compiled.labels[i]),
            "lb": _nan_to_null(compiled.word_lb[i:i + 1])[0],
            "hb": _nan_to_null(compiled.word_hb[i:i + 1])[0],
        } for i in range(compiled.n_words)],
        "rows": [{
            "g_lb": _nan_to_null(compiled.row_g_lb[i:i + 1])[0],
            "g_hb": _nan_to_null(compiled.row_g_hb[i:i + 1])[0],
        } for i in range(compiled.n_words)],
        "forest": compiled.forest_doc["forest"],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_compiled(path) -> CompiledForest:
    with open(path, "r") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise SchemaError("%s: not valid JSON (%s)" % (path, e))
    if doc.get("format") != COMPILED_MAGIC:
        raise SchemaError("%s: not a compiled-forest file" % path)
    if doc.get("version") != COMPILED_VERSION:
        raise SchemaError("%s: unsupported version %r" % (path, doc.get("version")))
    for key in ("n_features", "n_classes", "feature_ranges", "max_segment",
                "g_window", "n_levels", "tiles", "words", "rows", "forest"):
        if key not in doc:
            raise SchemaError("%s: missing field %r" % (path, key))
    n_features = int(doc["n_features"])
    words = doc["words"]
    rows = doc["rows"]
    if len(words) != len(rows):
        raise SchemaError("%s: %d words but %d rows" % (path, len(words), len(rows)))
    if not words:
        raise SchemaError("%s: empty compiled forest" % path)
    word_lb = _null_to_nan([w["lb"] for w in words], n_features, "words.lb")
    word_hb = _null_to_nan([w["hb"] for w in words], n_features, "words.hb")
    row_g_lb = _null_to_nan([r["g_lb"] for r in rows], n_features, "rows.g_lb")
    row_g_hb = _null_to_nan([r["g_hb"] for r in rows], n_features, "rows.g_hb")
    if np.any(np.isnan(word_lb) != np.isnan(row_g_lb)) or np.any(np.isnan(word_hb) != np.isnan(row_g_hb)):
        raise SchemaError("%s: wildcard pattern differs between words and rows" % path)
    tiles = [(int(s), int(e)) for s, e in doc["tiles"]]
    expect = tile(n_features, int(doc["max_segment"]))
    if tiles != expect:
        raise SchemaError("%s: tile map is not the contiguous partition of %d cells"
                          % (path, n_features))
    validate_forest_doc({"forest": doc["forest"]})
    return CompiledForest(
        n_features=n_features, n_classes=int(doc["n_classes"]),
        feature_ranges=np.asarray(doc["feature_ranges"], dtype=float),
        word_lb=word_lb, word_hb=word_hb, row_g_lb=row_g_lb, row_g_hb=row_g_hb,
        tree_ids=np.array([w["tree_id"] for w in words], dtype=int),
        leaf_ids=np.array([w["leaf_id"] for w in words], dtype=int),
        labels=np.array([w["class_label"] for w in words], dtype=int),
        tiles=tiles, max_segment=int(doc["max_segment"]),
        g_window=(float(doc["g_window"][0]), float(doc["g_window"][1])),
        n_levels=int(doc["n_levels"]), warnings=list(doc.get("warnings", [])),
        forest_doc={"forest": doc["forest"]})


# ---------------------------------------------------------------------------
# Datasets and reference traversal


def load_dataset_csv(path):
    """CSV with a header row, feature columns, and a final 'label' column."""
    with open(path, "r") as fh:
        header = fh.readline().strip()
        if not header:
            raise SchemaError("%s: missing header row" % path)
        cols = header.split(",")
        if cols[-1] != "label":
            raise SchemaError("%s: last column must be 'label', got %r" % (path, cols[-1]))
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(cols):
                raise SchemaError("%s:%d: expected %d columns, got %d"
                                  % (path, lineno, len(cols), len(parts)))
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise SchemaError("%s:%d: unparsable number" % (path, lineno))
    if not rows:
        return np.empty((0, len(cols) - 1)), np.empty(0, dtype=int), cols[:-1]
    data = np.asarray(rows)
    X = data[:, :-1]
    y_f = data[:, -1]
    y = y_f.astype(int)
    if np.any(y != y_f):
        raise SchemaError("%s: labels must be integers" % path)
    return X, y, cols[:-1]


def save_dataset_csv(X, y, path, feature_names=None):
    X = np.asarray(X, dtype=float)
    names = feature_names or ["f%d" % i for i in range(X.shape[1])]
    with open(path, "w") as fh:
        fh.write(",".join(list(names) + ["label"]) + "\n")
        for row, label in zip(X, y):
            fh.write(",".join(format(v, ".17g") for v in row) + ",%d\n" % int(label))


def traverse_tree(tree: TreeModel, x) -> int:
    """Software traversal: x <= threshold goes left. Returns the leaf's class."""
    idx = 0
    while not tree.is_leaf(idx):
        if x[tree.feature[idx]] <= tree.threshold[idx]:
            idx = int(tree.left[idx])
        else:
            idx = int(tree.right[idx])
    return int(tree.class_label[idx])


def majority_vote(votes, n_classes: int) -> int:
    """Hard majority over per-tree class votes; ties resolve to the smallest label."""
    counts = np.bincount(np.asarray(votes, dtype=int), minlength=n_classes)
    return int(np.argmax(counts))


def reference_predictions(doc, X) -> np.ndarray:
    """Per-query hard-majority predictions of the software forest."""
    trees = validate_forest_doc(doc)
    n_classes = int(doc["forest"]["n_classes"])
    X = np.asarray(X, dtype=float)
    out = np.empty(X.shape[0], dtype=int)
    for q in range(X.shape[0]):
        votes = [traverse_tree(tree, X[q]) for tree in trees]
        out[q] = majority_vote(votes, n_classes)
    return out


# ---------------------------------------------------------------------------
# Mismatch statistics


@dataclass(frozen=True)
class MismatchStats:
    """Per-(query, word) first-violation depths plus per-feature rates.

    depths[q, w] is the 1-based index, among the word's non-wildcard
    inequalities in feature order (lower bound before upper bound), of the
    first violated one, or the word's inequality count if the query matches.
    Words without inequalities have depth 0.
    """
    depths: np.ndarray            # (n_queries, n_words) int
    word_lengths: np.ndarray      # (n_words,) int
    feature_violations: np.ndarray  # (n_features,) pair counts with a violation
    feature_chances: np.ndarray     # (n_features,) pair counts where tested
    n_queries: int

    @property
    def n_pairs(self) -> int:
        return int(self.depths.size)

    @property
    def p_mm_per_feature(self) -> np.ndarray:
        out = np.zeros(self.feature_violations.size)
        np.divide(self.feature_violations, self.feature_chances, out=out,
                  where=self.feature_chances > 0)
        return out

    @property
    def mean_depth(self) -> float:
        return float(np.mean(self.depths))

    @property
    def depth_histogram(self) -> np.ndarray:
        """Counts indexed by depth, length max(word_lengths) + 1."""
        return np.bincount(self.depths.ravel(),
                           minlength=int(self.word_lengths.max(initial=0)) + 1)


def measured_mismatch_stats(compiled: CompiledForest, X_norm) -> MismatchStats:
    """Evaluate every (query, word) pair under reference containment semantics.

    X_norm must already be in normalized [0, 1] coordinates (see
    normalize_queries).
    """
    X = np.asarray(X_norm, dtype=float)
    if X.ndim != 2 or X.shape[1] != compiled.n_features:
        raise SchemaError("queries have %r features, model expects %d"
                          % (X.shape[1:], compiled.n_features))
    n_q = X.shape[0]
    n_w = compiled.n_words
    n_f = compiled.n_features

    # Interleave per-feature sides as (lb, hb) so column 2f is the lower bound
    # of feature f. Rank among active sides = position in the word's sequence.
    active = np.empty((n_w, 2 * n_f), dtype=bool)
    active[:, 0::2] = ~np.isnan(compiled.word_lb)
    active[:, 1::2] = ~np.isnan(compiled.word_hb)
    ranks = np.cumsum(active, axis=1)
    lengths = ranks[:, -1].astype(int)

    depths = np.empty((n_q, n_w), dtype=np.int32)
    feat_viol = np.zeros(n_f, dtype=np.int64)
    chances = n_q * (np.sum(~np.isnan(compiled.word_lb), axis=0)
                     + np.sum(~np.isnan(compiled.word_hb), axis=0))

    slab = max(1, int(4e6) // max(1, 2 * n_f * max(n_q, 1)))
    for s in range(0, n_w, slab):
        e = min(s + slab, n_w)
        viol = np.empty((n_q, e - s, 2 * n_f), dtype=bool)
        # NaN comparisons are False, so wildcard sides never violate.
        with np.errstate(invalid="ignore"):
            viol[:, :, 0::2] = X[:, None, :] < compiled.word_lb[None, s:e, :]
            viol[:, :, 1::2] = X[:, None, :] > compiled.word_hb[None, s:e, :]
        feat_viol += np.sum(viol[:, :, 0::2] | viol[:, :, 1::2], axis=(0, 1))
        any_viol = viol.any(axis=2)
        first = np.argmax(viol, axis=2)
        r = np.take_along_axis(np.broadcast_to(ranks[None, s:e, :], viol.shape),
                               first[:, :, None], axis=2)[:, :, 0]
        depths[:, s:e] = np.where(any_viol, r, lengths[None, s:e])
    return MismatchStats(depths=depths, word_lengths=lengths,
                         feature_violations=feat_viol, feature_chances=chances,
                         n_queries=n_q)


def energy_reduction_curve(stats: MismatchStats, n_seq_values):
    """Expected-energy fraction and reduction per n_seq, relative to n_seq = 1.

    For a word of L inequalities evaluated with n_seq sequential groups, the
    group width is ceil(L / n_seq) and a pair whose first violation sits at
    depth d executes ceil(d / width) groups. The n_seq = 1 baseline evaluates
    all L inequalities in one step. Returns [(n_seq, fraction, reduction)].
    """
    L = stats.word_lengths
    used = L > 0
    if not np.any(used):
        raise SchemaError("no word carries any inequality")
    d = stats.depths[:, used]
    Lu = L[used]
    baseline = float(np.sum(Lu)) * stats.n_queries
    out = []
    for n_seq in n_seq_values:
        if n_seq < 1:
            raise SchemaError("n_seq values must be >= 1")
        width = -(-Lu // n_seq)
        steps = -(-d // width[None, :])
        energy = float(np.sum(steps * width[None, :]))
        frac = energy / baseline
        out.append((int(n_seq), frac, 1.0 - frac))
    return out


# ---------------------------------------------------------------------------
# Synthetic model builders (benchmarks that need no training stack)


def make_chain_forest(n_features: int, n_trees: int = 4, seed: int = 0,
                      lo: float = 0.25, hi: float = 0.75) -> dict:
    """Deep single-path trees: node k tests feature k and recurses right.

    The deepest leaf of each tree accumulates one lower bound per feature, so
    its word has n_features single-sided inequalities. Useful as a stress
    benchmark for long rows and near-boundary crosstalk.
    """
    if n_features < 1 or n_trees < 1:
        raise SchemaError("need at least one feature and one tree")
    rng = np.random.default_rng(seed)
    trees = []
    for t in range(n_trees):
        thresholds = rng.uniform(lo, hi, size=n_features)
        nodes = []
        for k in range(n_features):
            nodes.append({"feature_index": k, "threshold": float(thresholds[k]),
                          "left_child": 2 * k + 1,
                          "right_child": 2 * k + 2 if k + 1 < n_features else 2 * n_features})
            nodes.append({"class_label": k % 2})
        nodes.append({"class_label": n_features % 2})
        trees.append({"tree_id": t, "nodes": nodes})
    return {"forest": {"n_features": n_features, "n_classes": 2,
                       "feature_ranges": [[0.0, 1.0]] * n_features,
                       "trees": trees}}


def make_synthetic_forest(n_features: int, n_trees: int, max_depth: int,
                          seed: int = 0, n_classes: int = 3,
                          p_leaf: float = 0.25) -> dict:
    """Random forests with thresholds drawn inside the live feature box.

    Thresholds stay strictly inside the current path's box, so no path is
    self-contradictory and every leaf interval has positive width.
    """
    rng = np.random.default_rng(seed)
    trees = []
    for t in range(n_trees):
        nodes = []

        def build(depth, box):
            idx = len(nodes)
            wide = [f for f in range(n_features) if box[f][1] - box[f][0] > 1e-3]
            if depth >= max_depth or not wide or (depth > 0 and rng.random() < p_leaf):
                nodes.append({"class_label": int(rng.integers(n_classes))})
                return idx
            f = int(wide[rng.integers(len(wide))])
            lo_f, hi_f = box[f]
            thr = float(rng.uniform(lo_f + 0.2 * (hi_f - lo_f), hi_f - 0.2 * (hi_f - lo_f)))
            nodes.append(None)
            box_l = dict(box)
            box_l[f] = (lo_f, thr)
            left = build(depth + 1, box_l)
            box_r = dict(box)
            box_r[f] = (thr, hi_f)
            right = build(depth + 1, box_r)
            nodes[idx] = {"feature_index": f, "threshold": thr,
                          "left_child": left, "right_child": right}
            return idx

        build(0, {f: (0.0, 1.0) for f in range(n_features)})
        trees.append({"tree_id": t, "nodes": nodes})
    return {"forest": {"n_features": n_features, "n_classes": n_classes,
                       "feature_ranges": [[0.0, 1.0]] * n_features,
                       "trees": trees}}
