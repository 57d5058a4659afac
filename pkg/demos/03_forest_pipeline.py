"""End-to-end forest pipeline on a synthetic benchmark.

Builds a random forest document, compiles it to interval words and programmed
conductance rows, evaluates a query batch in ideal and behavioral modes,
then reports mismatch statistics, the expected-energy reduction from
sequential evaluation, and the crosstalk cost of longer match-line segments.

Run from the repository root:  python3 demos/03_forest_pipeline.py
"""

import os

import numpy as np

import acamsim as ac

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "out")


def main():
    os.makedirs(OUT, exist_ok=True)
    tech = ac.load_tech()
    rng = np.random.default_rng(5)

    doc = ac.make_synthetic_forest(n_features=8, n_trees=6, max_depth=5, seed=3)
    compiled = ac.compile_forest(doc, tech)
    print("compiled %d trees -> %d words, max word length %d, tiles %s"
          % (len(doc["forest"]["trees"]), compiled.n_words,
             int(compiled.word_lengths.max()), compiled.tiles))

    X = rng.random((400, compiled.n_features))
    y = ac.reference_predictions(doc, X)

    for name, mode in (
            ("ideal", ac.EvalMode.ideal(tech)),
            ("salm", ac.EvalMode.behavioral(ac.gen_synthetic_luts(tech, "salm"), tech)),
            ("6t2m", ac.EvalMode.behavioral(ac.gen_synthetic_luts(tech, "6t2m"), tech))):
        rep = ac.evaluate_dataset(compiled, X, y, mode)
        print("%-6s accuracy %.3f agreement-with-software %.3f abstain %d"
              % (name, rep.accuracy, rep.agreement, rep.n_abstain))

    # how deep a sequential evaluator actually gets before the first mismatch
    X_norm = X  # synthetic feature ranges are already [0, 1]
    stats = ac.measured_mismatch_stats(compiled, X_norm)
    print("\nmean mismatch depth %.2f over %d (query, word) pairs"
          % (stats.mean_depth, stats.n_pairs))
    print("%-6s %-14s %-14s" % ("n_seq", "step fraction", "energy reduction"))
    for n_seq, frac, red in ac.energy_reduction_curve(stats, [1, 2, 3, 4, 8]):
        print("%-6d %-14.3f %-14.3f" % (n_seq, frac, red))

    # longer segments share one sense point across more cells: residual
    # currents from near-boundary queries accumulate into false decisions
    chain = ac.compile_forest(ac.make_chain_forest(64, n_trees=3, seed=1), tech)
    Xn, idx = ac.make_near_boundary_queries(chain, 120, seed=2)
    lengths = (8, 16, 32, 64)
    for kind in ("salm", "6t2m"):
        mode = ac.EvalMode.behavioral(ac.gen_synthetic_luts(tech, kind), tech)
        rates = ac.false_decision_rates(chain, Xn, idx, mode, lengths)
        print("%s near-boundary false-decision rate per segment length %s: %s"
              % (kind, lengths, ["%.3f" % r for r in rates]))


if __name__ == "__main__":
    main()
