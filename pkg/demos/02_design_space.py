"""Sequential/parallel design-space sweep for a 32-inequality word.

Enumerates every n_seq in [1, 32] with n_par = ceil(32 / n_seq), scores each
point with the weighted normalized cost, and cross-checks the winner's
expected energy against a Monte Carlo run of the early-termination process.

Run from the repository root:  python3 demos/02_design_space.py
"""

import os

import acamsim as ac

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "out")
N_WORD = 32


def main():
    os.makedirs(OUT, exist_ok=True)
    tech = ac.load_tech()

    weights = ac.CostWeights(0.45, 0.05, 0.5)
    points, best = ac.sweep(N_WORD, tech, weights, p_mm=0.006)
    path = os.path.join(OUT, "sweep_32.csv")
    ac.sweep_to_csv(points, path)

    print("n_word = %d, weights (E, L, A) = (%.2f, %.2f, %.2f), p_mm = 0.006"
          % (N_WORD, weights.w_e, weights.w_l, weights.w_a))
    print("%-6s %-6s %-10s %-10s %-10s %-8s"
          % ("n_seq", "n_par", "t [ns]", "a [um^2]", "e [fJ]", "cost"))
    for p in sorted(points, key=lambda p: p.cfg.n_seq):
        tag = "  <- chosen" if p.cfg.n_seq == best.cfg.n_seq else ""
        print("%-6d %-6d %-10.1f %-10.2f %-10.2f %-8.4f%s"
              % (p.cfg.n_seq, p.cfg.n_par, p.t_word * 1e9, p.a_word,
                 p.e_word * 1e15, p.cost, tag))

    mean, stderr = ac.monte_carlo_energy(best.cfg, tech, 0.006, 200000, seed=0)
    print("\nchosen point n_seq=%d n_par=%d" % (best.cfg.n_seq, best.cfg.n_par))
    print("expected energy %.3f fJ, monte carlo %.3f +/- %.3f fJ"
          % (best.e_word * 1e15, mean * 1e15, stderr * 1e15))

    # the same sweep under latency-only and area-only preferences
    for name, w in (("latency-only", ac.CostWeights(0.0, 1.0, 0.0)),
                    ("area-only", ac.CostWeights(0.0, 0.0, 1.0))):
        _, b = ac.sweep(N_WORD, tech, w, p_mm=0.006)
        print("%s optimum: n_seq=%d n_par=%d" % (name, b.cfg.n_seq, b.cfg.n_par))
    print("sweep table -> %s" % path)


if __name__ == "__main__":
    main()
