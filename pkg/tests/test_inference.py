import dataclasses
import json
import os

import numpy as np
import pytest

from acamsim import arch as ar
from acamsim import forest as fr
from acamsim import inference as inf
from acamsim import luts as lm
from acamsim import matchline as ml


def _hand_compiled(tech, lb, hb, labels=None, tree_ids=None, leaf_ids=None,
                   max_segment=64):
    lb = np.asarray(lb, dtype=float)
    hb = np.asarray(hb, dtype=float)
    n_w, n_f = lb.shape
    g_lb, g_hb = fr.program_rows(lb, hb, tech)
    doc = {"forest": {"n_features": n_f, "n_classes": 3,
                      "feature_ranges": [[0.0, 1.0]] * n_f,
                      "trees": [{"tree_id": 0, "nodes": [{"class_label": 0}]}]}}
    return fr.CompiledForest(
        n_features=n_f, n_classes=3,
        feature_ranges=np.array([[0.0, 1.0]] * n_f),
        word_lb=lb, word_hb=hb, row_g_lb=g_lb, row_g_hb=g_hb,
        tree_ids=np.arange(n_w) if tree_ids is None else np.asarray(tree_ids),
        leaf_ids=np.zeros(n_w, dtype=int) if leaf_ids is None else np.asarray(leaf_ids),
        labels=np.zeros(n_w, dtype=int) if labels is None else np.asarray(labels),
        tiles=fr.tile(n_f, max_segment), max_segment=max_segment,
        g_window=tech.g_window, n_levels=tech.n_levels, warnings=[],
        forest_doc=doc)


@pytest.fixture(scope="module")
def synth(tech):
    doc = fr.make_synthetic_forest(n_features=6, n_trees=5, max_depth=5, seed=21)
    return fr.compile_forest(doc, tech)


@pytest.fixture(scope="module")
def synth_small(tech):
    # kept small: the integrator cross-check below walks every Euler step in
    # python, so its cost is queries * words * steps
    doc = fr.make_synthetic_forest(n_features=4, n_trees=2, max_depth=3, seed=7)
    return fr.compile_forest(doc, tech)


# ---------------------------------------------------------------------------
# EvalMode / query mapping


def test_eval_mode_validation(tech, salm_luts):
    inf.EvalMode.ideal(tech)
    inf.EvalMode.behavioral(salm_luts, tech)
    with pytest.raises(ml.SimError):
        inf.EvalMode(kind="behavioral", tech=tech)        # luts required
    with pytest.raises(ml.SimError):
        inf.EvalMode(kind="other", tech=tech)


def test_query_to_voltages(tech):
    ranges = [[0.0, 10.0], [5.0, 6.0]]
    v = inf.query_to_voltages([0.0, 6.0], ranges, tech)
    assert v[0] == 0.0 and v[1] == tech.v_dd
    v = inf.query_to_voltages([99.0, 4.0], ranges, tech)   # clamped
    assert v[0] == tech.v_dd and v[1] == 0.0
    v = inf.query_to_voltages([5.0, 5.5], ranges, tech)
    assert v[0] == pytest.approx(0.5 * tech.v_dd)


def test_lut_consistency_guard(tech, synth):
    other = dataclasses.replace(tech, g_window=(2e-6, 4e-6))
    luts = lm.gen_synthetic_luts(other, "salm", grid_sizes=(None, 16, 9, 9))
    mode = inf.EvalMode.behavioral(luts, tech)
    with pytest.raises(ml.SimError, match="window"):
        inf.match_matrix(synth, np.full((1, 6), 0.5), mode, normalized=True)
    other = dataclasses.replace(tech, v_dd=1.0)
    luts = lm.gen_synthetic_luts(other, "salm", grid_sizes=(None, 16, 9, 9))
    mode = inf.EvalMode.behavioral(luts, tech)
    with pytest.raises(ml.SimError, match="rail"):
        inf.match_matrix(synth, np.full((1, 6), 0.5), mode, normalized=True)


def test_match_matrix_shape_checks(tech, synth):
    mode = inf.EvalMode.ideal(tech)
    with pytest.raises(ml.SimError):
        inf.match_matrix(synth, np.zeros((3, 4)), mode)    # wrong feature count
    got = inf.match_matrix(synth, np.zeros((0, 6)), mode)
    assert got.shape == (0, synth.n_words)


# ---------------------------------------------------------------------------
# ideal mode against the containment oracle


def test_ideal_matches_containment_oracle(tech, synth):
    rng = np.random.default_rng(31)
    Xn = rng.random((50, synth.n_features))
    M = inf.match_matrix(synth, Xn, inf.EvalMode.ideal(tech), normalized=True)
    for q in range(50):
        for w, word in enumerate(synth.words):
            assert M[q, w] == ml.row_match_ideal(word.intervals, Xn[q])


def test_ideal_tiling_is_semantics_preserving(tech, synth):
    rng = np.random.default_rng(32)
    Xn = rng.random((200, synth.n_features))
    mode = inf.EvalMode.ideal(tech)
    whole = inf.match_matrix(synth, Xn, mode, segment=synth.n_features,
                             normalized=True)
    for seg in (1, 2, 3, 5):
        tiled = inf.match_matrix(synth, Xn, mode, segment=seg, normalized=True)
        assert np.array_equal(tiled, whole)


def test_all_wildcard_word_matches_everything(tech, salm_luts, luts_6t2m, ideal_luts):
    nan = np.full((1, 3), np.nan)
    comp = _hand_compiled(tech, nan, nan.copy())
    x = np.array([[0.9, 0.0, 0.4]])
    for mode in (inf.EvalMode.ideal(tech),
                 inf.EvalMode.behavioral(salm_luts, tech),
                 inf.EvalMode.behavioral(luts_6t2m, tech),
                 inf.EvalMode.behavioral(ideal_luts, tech)):
        assert inf.evaluate_word(comp, 0, x[0], mode, normalized=True)


# ---------------------------------------------------------------------------
# behavioral engine vs direct match-line integration


def _brute_behavioral(comp, x_norm, luts, tech, tiles):
    """AND over tiles of row_discharge + sense on the word's cell programs."""
    out = np.empty(comp.n_words, dtype=bool)
    v_dls = np.clip(x_norm, 0.0, 1.0) * tech.v_dd
    for w, row in enumerate(comp.rows):
        ok = True
        for (s, e) in tiles:
            sub = ml.RowProgram(cells=row.cells[s:e])
            tr = ml.row_discharge(sub, v_dls[s:e], luts, tech)
            ok = ok and ml.sense(tr, tech)
        out[w] = ok
    return out


@pytest.mark.parametrize("kind", ["salm", "6t2m", "ideal"])
def test_behavioral_engine_equals_integrator(tech, synth_small, kind, request):
    luts = request.getfixturevalue(
        {"salm": "salm_luts", "6t2m": "luts_6t2m", "ideal": "ideal_luts"}[kind])
    comp = synth_small
    mode = inf.EvalMode.behavioral(luts, tech)
    rng = np.random.default_rng(33)
    # mix uniform queries with near-boundary ones so residual currents matter
    Xn = rng.random((6, comp.n_features))
    nb, _ = inf.make_near_boundary_queries(comp, 6, seed=5)
    Xn = np.vstack([Xn, nb])
    for seg in (2, 3):
        tiles = fr.tile(comp.n_features, seg)
        M = inf.match_matrix(comp, Xn, mode, segment=seg, normalized=True)
        for q in range(Xn.shape[0]):
            brute = _brute_behavioral(comp, Xn[q], luts, tech, tiles)
            assert np.array_equal(M[q], brute), "query %d segment %d" % (q, seg)


def test_behavioral_ideal_luts_follow_programmed_bounds(tech, synth, ideal_luts):
    # step-transfer cells realize closed containment against the programmed
    # (quantized) conductances; pre-quantization word bounds can differ by up
    # to half a level, so the oracle is built from row_g_lb / row_g_hb
    rng = np.random.default_rng(34)
    Xn = rng.random((300, synth.n_features))
    got = inf.match_matrix(synth, Xn, inf.EvalMode.behavioral(ideal_luts, tech),
                           normalized=True)
    g_min, g_max = synth.g_window
    vt_lb = tech.v_dd * (synth.row_g_lb - g_min) / (g_max - g_min)
    vt_hb = tech.v_dd * (synth.row_g_hb - g_min) / (g_max - g_min)
    v_dl = Xn * tech.v_dd
    lb_ok = ~(v_dl[:, None, :] < vt_lb[None, :, :])   # NaN side never violates
    hb_ok = ~(v_dl[:, None, :] > vt_hb[None, :, :])
    want = np.all(lb_ok & hb_ok, axis=2)
    assert np.array_equal(got, want)


# ---------------------------------------------------------------------------
# sequential evaluation


def test_seq_requires_arch(tech, synth):
    with pytest.raises(ml.SimError, match="ArchConfig"):
        inf.seq_evaluate_word(synth, 0, np.full(6, 0.5), inf.EvalMode.ideal(tech),
                              normalized=True)


def test_seq_capacity_error(tech):
    lb = np.array([[0.1, 0.2, 0.3]])
    hb = np.array([[0.9, 0.8, 0.7]])
    comp = _hand_compiled(tech, lb, hb)                    # 6 inequalities
    arch = ar.ArchConfig(n_seq=2, n_par=2, n_word=4)
    mode = inf.EvalMode.ideal(tech, arch=arch)
    with pytest.raises(ml.SimError, match="inequalities"):
        inf.seq_evaluate_word(comp, 0, np.full(3, 0.5), mode, normalized=True)


def test_seq_empty_word(tech):
    nan = np.full((1, 2), np.nan)
    comp = _hand_compiled(tech, nan, nan.copy())
    mode = inf.EvalMode.ideal(tech, arch=ar.ArchConfig(1, 1, 1))
    assert inf.seq_evaluate_word(comp, 0, np.array([0.5, 0.5]), mode,
                                 normalized=True) == (True, 0, 0.0)


def test_seq_step_accounting_hand_case(tech):
    # word [0.4,0.6] x [0.2,0.8]; inequality order lb0, hb0, lb1, hb1
    comp = _hand_compiled(tech, np.array([[0.4, 0.2]]), np.array([[0.6, 0.8]]))
    e = tech.e_cell
    x_match = np.array([0.5, 0.5])
    x_hb0 = np.array([0.9, 0.5])       # first violation at rank 2

    mode1 = inf.EvalMode.ideal(tech, arch=ar.ArchConfig(4, 1, 4))
    assert inf.seq_evaluate_word(comp, 0, x_match, mode1, normalized=True) \
        == (True, 4, pytest.approx(4 * e))
    assert inf.seq_evaluate_word(comp, 0, x_hb0, mode1, normalized=True) \
        == (False, 2, pytest.approx(2 * e))

    mode2 = inf.EvalMode.ideal(tech, arch=ar.ArchConfig(2, 2, 4))
    assert inf.seq_evaluate_word(comp, 0, x_match, mode2, normalized=True) \
        == (True, 2, pytest.approx(4 * e))
    assert inf.seq_evaluate_word(comp, 0, x_hb0, mode2, normalized=True) \
        == (False, 1, pytest.approx(2 * e))

    mode4 = inf.EvalMode.ideal(tech, arch=ar.ArchConfig(1, 4, 4))
    assert inf.seq_evaluate_word(comp, 0, x_hb0, mode4, normalized=True) \
        == (False, 1, pytest.approx(4 * e))


@pytest.mark.parametrize("mode_kind", ["ideal", "salm"])
def test_seq_agrees_with_full_evaluation(tech, synth, salm_luts, mode_kind):
    arch = ar.ArchConfig(n_seq=4, n_par=3, n_word=12)
    if mode_kind == "ideal":
        mode = inf.EvalMode.ideal(tech, arch=arch)
        flat = inf.EvalMode.ideal(tech)
    else:
        mode = inf.EvalMode.behavioral(salm_luts, tech, arch=arch)
        flat = inf.EvalMode.behavioral(salm_luts, tech)
    rng = np.random.default_rng(35)
    Xn = rng.random((25, synth.n_features))
    # early termination never changes the decision; energy is bounded by the
    # full-capacity evaluation
    M = inf.match_matrix(synth, Xn, flat, segment=synth.n_features, normalized=True)
    for q in range(Xn.shape[0]):
        for w in range(synth.n_words):
            got, steps, energy = inf.seq_evaluate_word(synth, w, Xn[q], mode,
                                                       normalized=True)
            assert got == M[q, w]
            assert energy == pytest.approx(steps * arch.n_par * tech.e_cell)
            assert energy <= arch.n_seq * arch.n_par * tech.e_cell + 1e-30


# ---------------------------------------------------------------------------
# classification


def test_classify_on_threshold_tie_goes_left(tech, salm_luts):
    doc = {"forest": {"n_features": 1, "n_classes": 3,
                      "feature_ranges": [[0.0, 1.0]],
                      "trees": [{"tree_id": 0, "nodes": [
                          {"feature_index": 0, "threshold": 0.5,
                           "left_child": 1, "right_child": 2},
                          {"class_label": 2},
                          {"class_label": 0},
                      ]}]}}
    comp = fr.compile_forest(doc, tech)
    for mode in (inf.EvalMode.ideal(tech),
                 inf.EvalMode.behavioral(salm_luts, tech)):
        assert inf.classify(np.array([0.5]), comp, mode) == 2
        assert inf.classify(np.array([0.51]), comp, mode) == 0
    tree = fr.validate_forest_doc(doc)[0]
    assert fr.traverse_tree(tree, [0.5]) == 2              # software rule agrees


def test_classify_abstains_outside_all_words(tech):
    comp = _hand_compiled(tech, np.array([[0.4]]), np.array([[0.6]]),
                          labels=np.array([1]), tree_ids=np.array([0]))
    mode = inf.EvalMode.ideal(tech)
    assert inf.classify(np.array([0.0]), comp, mode, normalized=True) is None
    assert inf.classify(np.array([0.5]), comp, mode, normalized=True) == 1


def test_votes_tie_toward_smaller_label(tech):
    # two trees voting different labels -> argmax tie -> smaller label
    comp = _hand_compiled(tech,
                          np.array([[np.nan], [np.nan]]),
                          np.array([[np.nan], [np.nan]]),
                          labels=np.array([2, 1]),
                          tree_ids=np.array([0, 1]),
                          leaf_ids=np.array([0, 0]))
    mode = inf.EvalMode.ideal(tech)
    assert inf.classify(np.array([0.3]), comp, mode, normalized=True) == 1


# ---------------------------------------------------------------------------
# dataset evaluation and reports


def test_evaluate_dataset_iris_ideal(tech, iris_dir):
    doc, _ = fr.load_forest_file(os.path.join(iris_dir, "forest.json"))
    comp = fr.compile_forest(doc, tech)
    X, y, _ = fr.load_dataset_csv(os.path.join(iris_dir, "test.csv"))
    manifest = json.load(open(os.path.join(iris_dir, "manifest.json")))
    rep = inf.evaluate_dataset(comp, X, y, inf.EvalMode.ideal(tech))
    assert rep.agreement == 1.0
    assert rep.accuracy == pytest.approx(manifest["test_accuracy_hard_majority"])
    assert rep.n_abstain == 0
    assert rep.confusion.sum() == rep.n_queries == X.shape[0]
    # diagonal of the confusion counts the correct predictions
    correct = sum(rep.confusion[c, c] for c in range(comp.n_classes))
    assert correct / rep.n_queries == pytest.approx(rep.accuracy)
    assert rep.mean_energy is None and rep.steps is None


def test_evaluate_dataset_no_labels(tech, iris_dir):
    doc, _ = fr.load_forest_file(os.path.join(iris_dir, "forest.json"))
    comp = fr.compile_forest(doc, tech)
    X, _, _ = fr.load_dataset_csv(os.path.join(iris_dir, "test.csv"))
    rep = inf.evaluate_dataset(comp, X, None, inf.EvalMode.ideal(tech))
    assert rep.accuracy is None
    assert rep.agreement == 1.0
    assert rep.confusion.sum() == 0


def test_evaluate_dataset_jobs_equivalence(tech, iris_dir):
    doc, _ = fr.load_forest_file(os.path.join(iris_dir, "forest.json"))
    comp = fr.compile_forest(doc, tech)
    X, y, _ = fr.load_dataset_csv(os.path.join(iris_dir, "test.csv"))
    mode = inf.EvalMode.ideal(tech)
    a = inf.evaluate_dataset(comp, X, y, mode, jobs=1)
    b = inf.evaluate_dataset(comp, X, y, mode, jobs=3)
    assert np.array_equal(a.predictions, b.predictions)
    assert a.accuracy == b.accuracy and a.agreement == b.agreement


def test_evaluate_dataset_energy_accounting(tech, iris_dir):
    doc, _ = fr.load_forest_file(os.path.join(iris_dir, "forest.json"))
    comp = fr.compile_forest(doc, tech)
    X, y, _ = fr.load_dataset_csv(os.path.join(iris_dir, "test.csv"))
    arch = ar.ArchConfig(n_seq=4, n_par=2, n_word=8)
    mode = inf.EvalMode.ideal(tech, arch=arch)
    rep = inf.evaluate_dataset(comp, X, y, mode)
    assert rep.energy is not None and rep.steps is not None
    assert rep.mean_energy == pytest.approx(float(np.mean(rep.energy)))
    # per-query totals equal the sum of word-level sequential runs
    for q in (0, 7, 19):
        steps = 0
        energy = 0.0
        for w in range(comp.n_words):
            _, s, e = inf.seq_evaluate_word(comp, w, X[q], mode)
            steps += s
            energy += e
        assert rep.steps[q] == steps
        assert rep.energy[q] == pytest.approx(energy)
    # an arch too small for the longest word is rejected
    small = inf.EvalMode.ideal(tech, arch=ar.ArchConfig(1, 2, 2))
    with pytest.raises(ml.SimError, match="exceeds"):
        inf.evaluate_dataset(comp, X, y, small)


def test_report_csv_format(tech, iris_dir, tmp_path):
    doc, _ = fr.load_forest_file(os.path.join(iris_dir, "forest.json"))
    comp = fr.compile_forest(doc, tech)
    X, y, _ = fr.load_dataset_csv(os.path.join(iris_dir, "test.csv"))
    rep = inf.evaluate_dataset(comp, X, y, inf.EvalMode.ideal(tech))
    path = os.path.join(str(tmp_path), "report.csv")
    inf.write_report_csv(rep, path)
    lines = open(path).read().splitlines()
    assert lines[0] == "query_id,predicted,reference,n_steps,energy_J"
    assert len(lines) == 1 + X.shape[0]
    first = lines[1].split(",")
    assert first[0] == "0"
    assert first[3] == "" and first[4] == ""               # no arch accounting

    arch = ar.ArchConfig(4, 2, 8)
    rep = inf.evaluate_dataset(comp, X, y, inf.EvalMode.ideal(tech, arch=arch))
    inf.write_report_csv(rep, path)
    first = open(path).read().splitlines()[1].split(",")
    assert int(first[3]) > 0 and float(first[4]) > 0


def test_report_csv_abstain_blank(tech, tmp_path):
    comp = _hand_compiled(tech, np.array([[0.4]]), np.array([[0.6]]),
                          labels=np.array([1]))
    rep = inf.evaluate_dataset(comp, np.array([[0.0]]), np.array([1]),
                               inf.EvalMode.ideal(tech))
    assert rep.n_abstain == 1
    assert rep.confusion[comp.n_classes, 1] == 1           # abstain row
    path = os.path.join(str(tmp_path), "report.csv")
    inf.write_report_csv(rep, path)
    row = open(path).read().splitlines()[1].split(",")
    assert row[1] == ""                                    # blank prediction


def test_segment_length_sweep_ideal_constant(tech, iris_dir):
    doc, _ = fr.load_forest_file(os.path.join(iris_dir, "forest.json"))
    comp = fr.compile_forest(doc, tech)
    X, y, _ = fr.load_dataset_csv(os.path.join(iris_dir, "test.csv"))
    rows = inf.segment_length_sweep(comp, X, y, inf.EvalMode.ideal(tech), [1, 2, 4])
    assert [r[0] for r in rows] == [1, 2, 4]
    assert len({r[1] for r in rows}) == 1                  # accuracy constant
    assert len({r[2] for r in rows}) == 1
    with pytest.raises(ml.SimError):
        inf.segment_length_sweep(comp, X, y, inf.EvalMode.ideal(tech), [0])


# ---------------------------------------------------------------------------
# near-boundary pair studies


def test_near_boundary_queries_invariants(tech, synth):
    X, idx = inf.make_near_boundary_queries(synth, 60, seed=3)
    assert X.shape == (60, synth.n_features)
    # every pair matches its target word under reference semantics
    ok = inf.pair_decisions(synth, X, idx, inf.EvalMode.ideal(tech))
    assert ok.all()
    g_min, g_max = synth.g_window
    span = g_max - g_min
    for q in range(60):
        w = idx[q]
        for f in range(synth.n_features):
            lb, hb = synth.word_lb[w, f], synth.word_hb[w, f]
            if np.isnan(lb) and np.isnan(hb):
                assert X[q, f] == 0.5                      # wildcards parked
                continue
            # margins are taken from the effective bounds: the word interval
            # intersected with the programmed (quantized) one
            q_lb, q_hb = synth.row_g_lb[w, f], synth.row_g_hb[w, f]
            lo = max(lb if not np.isnan(lb) else 0.0,
                     (q_lb - g_min) / span if not np.isnan(q_lb) else 0.0)
            hi = min(hb if not np.isnan(hb) else 1.0,
                     (q_hb - g_min) / span if not np.isnan(q_hb) else 1.0)
            if hi <= lo:                                   # over-tight word, parked
                assert X[q, f] == pytest.approx(0.5 * (lo + hi), abs=1e-12)
                continue
            if not np.isnan(lb):
                assert X[q, f] > lb
            if not np.isnan(hb):
                assert X[q, f] < hb
            sides = ([X[q, f] - lo] if np.isnan(hb) else
                     [hi - X[q, f]] if np.isnan(lb) else
                     [X[q, f] - lo, hi - X[q, f]])
            assert min(sides) > 0.0
            assert min(sides) <= inf.DELTA_NEAR_BOUNDARY + 1e-9


def test_near_boundary_determinism_and_validation(tech, synth):
    a, ia = inf.make_near_boundary_queries(synth, 20, seed=9)
    b, ib = inf.make_near_boundary_queries(synth, 20, seed=9)
    assert np.array_equal(a, b) and np.array_equal(ia, ib)
    with pytest.raises(ml.SimError):
        inf.make_near_boundary_queries(synth, 5, delta=0.0)


def test_false_decision_rates_ideal_zero(tech, synth):
    X, idx = inf.make_near_boundary_queries(synth, 40, seed=4)
    rates = inf.false_decision_rates(synth, X, idx, inf.EvalMode.ideal(tech),
                                     [1, 2, 6])
    assert rates == [0.0, 0.0, 0.0]


def test_pair_decisions_match_matrix_consistency(tech, synth, salm_luts, luts_6t2m):
    X, idx = inf.make_near_boundary_queries(synth, 30, seed=6)
    for luts in (salm_luts, luts_6t2m):
        mode = inf.EvalMode.behavioral(luts, tech)
        for seg in (2, 6):
            pd = inf.pair_decisions(synth, X, idx, mode, segment=seg)
            M = inf.match_matrix(synth, X, mode, segment=seg, normalized=True)
            assert np.array_equal(pd, M[np.arange(30), idx])
