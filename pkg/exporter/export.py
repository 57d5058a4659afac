#!/usr/bin/env python3
"""Train a scikit-learn random forest and export it as an interchange bundle.

The bundle is a directory with four files:

  forest.json   the trained forest in the interval-compiler interchange schema
  train.csv     training split (header row, features, final 'label' column)
  test.csv      test split, same layout
  manifest.json parameters, row counts, and the exporter's own test accuracy

Thresholds and feature values are serialized with 17 significant digits, so
consumers reproduce the training-time comparisons bit for bit.

The exporter predicts by hard majority: each tree votes its leaf's class
(argmax of the training-sample counts at the leaf), ties between classes break
toward the smaller label. This matches the vote aggregation of downstream
hardware-style evaluators, and differs from RandomForestClassifier.predict,
which averages per-class probabilities across trees.
"""

import argparse
import json
import os
import sys

import numpy as np
from sklearn import datasets
from sklearn.ensemble import RandomForestClassifier
from sklearn.model_selection import train_test_split

DATASETS = {
    "iris": datasets.load_iris,
    "wine": datasets.load_wine,
    "breast_cancer": datasets.load_breast_cancer,
    "digits": datasets.load_digits,
}


def tree_to_nodes(tree) -> list:
    """Flatten one fitted sklearn tree into the interchange node list."""
    t = tree.tree_
    nodes = []
    for i in range(t.node_count):
        if t.children_left[i] == -1:
            label = int(np.argmax(t.value[i][0]))
            nodes.append({"class_label": label})
        else:
            nodes.append({
                "feature_index": int(t.feature[i]),
                "threshold": float(t.threshold[i]),
                "left_child": int(t.children_left[i]),
                "right_child": int(t.children_right[i]),
            })
    return nodes


def forest_to_doc(model: RandomForestClassifier, n_features: int,
                  feature_ranges) -> dict:
    return {
        "forest": {
            "n_features": n_features,
            "n_classes": int(model.n_classes_),
            "feature_ranges": [[float(lo), float(hi)] for lo, hi in feature_ranges],
            "trees": [
                {"tree_id": k, "nodes": tree_to_nodes(est)}
                for k, est in enumerate(model.estimators_)
            ],
        }
    }


def traverse(nodes: list, x) -> int:
    i = 0
    while "class_label" not in nodes[i]:
        node = nodes[i]
        i = node["left_child"] if x[node["feature_index"]] <= node["threshold"] \
            else node["right_child"]
    return nodes[i]["class_label"]


def hard_majority_predict(doc: dict, X) -> np.ndarray:
    """Per-tree leaf votes, counted as a hard majority (ties to smaller label)."""
    forest = doc["forest"]
    n_classes = forest["n_classes"]
    preds = np.empty(len(X), dtype=int)
    for q, x in enumerate(np.asarray(X, dtype=float)):
        counts = np.zeros(n_classes, dtype=int)
        for tree in forest["trees"]:
            counts[traverse(tree["nodes"], x)] += 1
        preds[q] = int(np.argmax(counts))
    return preds


def write_dataset_csv(X, y, path, feature_names):
    with open(path, "w") as fh:
        fh.write(",".join(list(feature_names) + ["label"]) + "\n")
        for row, label in zip(X, y):
            fh.write(",".join(format(float(v), ".17g") for v in row)
                     + ",%d\n" % int(label))


def sanitize_names(names, n_features):
    if names is None:
        return ["f%d" % i for i in range(n_features)]
    return [str(n).strip().replace(",", "_").replace(" ", "_") for n in names]


def export(dataset: str, trees: int, depth: int, split: float, seed: int,
           out_dir: str) -> dict:
    """Train, export, and return the manifest dict."""
    if dataset not in DATASETS:
        raise ValueError("unknown dataset %r; choose from %s"
                         % (dataset, ", ".join(sorted(DATASETS))))
    if not (0.0 < split < 1.0):
        raise ValueError("--split must lie strictly between 0 and 1")
    if trees < 1:
        raise ValueError("--trees must be >= 1")

    bunch = DATASETS[dataset]()
    X = np.asarray(bunch.data, dtype=float)
    y = np.asarray(bunch.target, dtype=int)
    names = sanitize_names(getattr(bunch, "feature_names", None), X.shape[1])

    X_train, X_test, y_train, y_test = train_test_split(
        X, y, train_size=split, random_state=seed, stratify=y)

    model = RandomForestClassifier(
        n_estimators=trees,
        max_depth=depth if depth > 0 else None,
        random_state=seed,
        bootstrap=True,
    )
    model.fit(X_train, y_train)

    # Normalization ranges come from the training split only: the consumer
    # clamps unseen test values into them, the same way deployed hardware
    # would clamp out-of-range inputs.
    feature_ranges = [(float(lo), float(hi))
                      for lo, hi in zip(X_train.min(axis=0), X_train.max(axis=0))]
    doc = forest_to_doc(model, X.shape[1], feature_ranges)

    test_pred = hard_majority_predict(doc, X_test)
    manifest = {
        "dataset": dataset,
        "trees": trees,
        "depth": depth,
        "split": split,
        "seed": seed,
        "n_features": int(X.shape[1]),
        "n_classes": int(model.n_classes_),
        "n_train": int(len(X_train)),
        "n_test": int(len(X_test)),
        "n_leaves": int(sum(est.tree_.n_leaves for est in model.estimators_)),
        "test_accuracy_hard_majority": float(np.mean(test_pred == y_test)),
        "files": ["forest.json", "train.csv", "test.csv"],
    }

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "forest.json"), "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    write_dataset_csv(X_train, y_train, os.path.join(out_dir, "train.csv"), names)
    write_dataset_csv(X_test, y_test, os.path.join(out_dir, "test.csv"), names)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="export.py", description=__doc__.splitlines()[0])
    parser.add_argument("--dataset", required=True,
                        help="one of: %s" % ", ".join(sorted(DATASETS)))
    parser.add_argument("--trees", type=int, required=True)
    parser.add_argument("--depth", type=int, required=True,
                        help="max tree depth; 0 means unrestricted")
    parser.add_argument("--split", type=float, required=True,
                        help="training fraction in (0, 1)")
    parser.add_argument("--seed", type=int, required=True)
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)
    try:
        manifest = export(args.dataset, args.trees, args.depth, args.split,
                          args.seed, args.out)
    except ValueError as exc:
        print("export.py: %s" % exc, file=sys.stderr)
        return 2
    print("exported %s: %d trees, %d leaves, train/test %d/%d, "
          "hard-majority test accuracy %.4f -> %s"
          % (manifest["dataset"], manifest["trees"], manifest["n_leaves"],
             manifest["n_train"], manifest["n_test"],
             manifest["test_accuracy_hard_majority"], args.out))
    return 0


if __name__ == "__main__":
    sys.exit(main())
