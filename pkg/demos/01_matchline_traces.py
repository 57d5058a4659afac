"""Discharge traces of a single match-line cell.

Programs one interval cell, drives it with data-line voltages stepping from
deep inside the stored interval to well outside it, and writes one trace CSV
per (lut kind, query). The latched kind holds the line hard at the rail until
a real violation; the static kind leaks progressively as the query approaches
the stored bound.

Run from the repository root:  python3 demos/01_matchline_traces.py
"""

import os

import numpy as np

import acamsim as ac

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "out")


def main():
    os.makedirs(OUT, exist_ok=True)
    tech = ac.load_tech()

    # one cell storing the normalized interval [0.40, 0.60]
    lb, hb = 0.40, 0.60
    g_lb = ac.quantize_conductance(ac.bound_to_conductance(lb, tech.g_window), tech)
    g_hb = ac.quantize_conductance(ac.bound_to_conductance(hb, tech.g_window), tech)
    row = ac.RowProgram(cells=[ac.CellProgram(g_lb=g_lb, g_hb=g_hb)])

    queries = [0.50, 0.42, 0.401, 0.399, 0.30, 0.10]
    g_min, g_max = tech.g_window
    print("stored interval [%.2f, %.2f], v_ref %.2f V, sense at t = %.1f ns"
          % (lb, hb, tech.v_ref, tech.t_max * 1e9))
    print("programmed interval after %d-level quantization: [%.4f, %.4f]"
          % (tech.n_levels, (g_lb - g_min) / (g_max - g_min),
             (g_hb - g_min) / (g_max - g_min)))
    print("%-8s %-8s %-12s %-8s" % ("kind", "query", "v_ml(final)", "match"))
    for kind in ("salm", "6t2m"):
        luts = ac.gen_synthetic_luts(tech, kind)
        for q in queries:
            tr = ac.row_discharge(row, np.array([q * tech.v_dd]), luts, tech)
            path = os.path.join(OUT, "trace_%s_q%05.0f.csv" % (kind, q * 1e4))
            ac.write_trace_csv(tr, path)
            print("%-8s %-8.3f %-12.4f %-8s"
                  % (kind, q, tr.v_ml[-1], ac.sense(tr, tech)))
    print("traces -> %s" % OUT)


if __name__ == "__main__":
    main()
