"""Episode evaluation, baselines, ablation, multi-seed aggregation.

Episodes are evaluated across a thread pool (capped by the
GEOMSHOT_THREADS environment variable); results are keyed by episode
index and aggregated in index order, so the report is identical for any
worker count. Report JSON is emitted with sorted keys and no timestamps,
making back-to-back runs byte-identical.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataio import eligible_classes
from .episodes import EpisodeSpec, sample_episode
from .errors import DegenerateProblem, InsufficientClasses
from .features import FeaturePool
from .fewshot import classify, compute_prototypes
from .nnet import MLPEncoder

REPORT_SCHEMA_VERSION = 1
CSV_COLUMNS = ["dataset", "repr", "encoder", "mode", "K", "mean", "ci95"]

# Normalization-ablation settings: (key, label, representation, normalize).
ABLATION_SETTINGS = (
    ("none", "No normalisation", "raw", False),
    ("wrist_scale", "+ Wrist-centring & scale", "raw", True),
    ("angle", "+ Geometry-aware (angle)", "angle", True),
)


@dataclass
class EvalSpec:
    n_way: int = 5
    k_shot: int = 5
    q_query: int = 15
    episodes: int = 600
    base_seed: int = 42


@dataclass
class EvalReport:
    episode_accuracies: list[float]
    mean_accuracy: float
    ci95_halfwidth: float
    per_class_accuracy: dict[int, float]
    confusion: dict[tuple[int, int], int]
    config: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": self.config,
            "episodes": len(self.episode_accuracies),
            "mean_accuracy": self.mean_accuracy,
            "ci95_halfwidth": self.ci95_halfwidth,
            "episode_accuracies": self.episode_accuracies,
            "per_class_accuracy": {str(k): v for k, v in sorted(self.per_class_accuracy.items())},
            "confusion": [[t, p, c] for (t, p), c in sorted(self.confusion.items())],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_doc(doc: dict) -> "EvalReport":
        return EvalReport(
            episode_accuracies=list(doc["episode_accuracies"]),
            mean_accuracy=doc["mean_accuracy"],
            ci95_halfwidth=doc["ci95_halfwidth"],
            per_class_accuracy={int(k): v for k, v in doc["per_class_accuracy"].items()},
            confusion={(t, p): c for t, p, c in doc["confusion"]},
            config=doc.get("config", {}),
        )


def ci95_halfwidth(values: list[float]) -> float:
    """1.96 * sample standard deviation / sqrt(n) (n-1 denominator)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        return 0.0
    return float(1.96 * arr.std(ddof=1) / np.sqrt(arr.size))


def worker_count() -> int:
    env = os.environ.get("GEOMSHOT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _identity_embed(x: np.ndarray) -> np.ndarray:
    return x


def _proto_predict(emb_s, labels_s, emb_q, n_way):
    protos = compute_prototypes(emb_s, labels_s, n_way)
    return classify(emb_q, protos)


def _episode_result(embed_fn, predict_fn, fp: FeaturePool, pool, spec: EvalSpec, index: int):
    ep = sample_episode(pool, EpisodeSpec(spec.n_way, spec.k_shot, spec.q_query, spec.base_seed, index))
    emb_s = embed_fn(fp.X[ep.support_items])
    emb_q = embed_fn(fp.X[ep.query_items])
    pred = predict_fn(emb_s, ep.support_labels, emb_q, spec.n_way)
    correct = pred == ep.query_labels
    originals = ep.original_classes
    per_class: dict[int, list[int]] = {}
    confusion: dict[tuple[int, int], int] = {}
    for true_rel, pred_rel, ok in zip(ep.query_labels, pred, correct):
        t, p = originals[int(true_rel)], originals[int(pred_rel)]
        stats = per_class.setdefault(t, [0, 0])
        stats[0] += int(ok)
        stats[1] += 1
        confusion[(t, p)] = confusion.get((t, p), 0) + 1
    return float(correct.mean()), per_class, confusion


def _run_protocol(
    embed_fn, predict_fn, fp: FeaturePool, spec: EvalSpec, config_echo: dict
) -> EvalReport:
    eligible = eligible_classes(fp.pool, spec.k_shot, spec.q_query)
    if len(eligible) < spec.n_way:
        raise InsufficientClasses(
            f"{len(eligible)} classes have >= {spec.k_shot + spec.q_query} "
            f"samples, need {spec.n_way}"
        )
    pool = {c: fp.pool[c] for c in eligible}
    indexes = range(spec.episodes)
    task = lambda i: _episode_result(embed_fn, predict_fn, fp, pool, spec, i)
    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(task, indexes))
    else:
        results = [task(i) for i in indexes]

    accuracies = [r[0] for r in results]
    class_correct: dict[int, int] = {}
    class_total: dict[int, int] = {}
    confusion: dict[tuple[int, int], int] = {}
    for _, per_class, conf in results:
        for cls, (ok, tot) in per_class.items():
            class_correct[cls] = class_correct.get(cls, 0) + ok
            class_total[cls] = class_total.get(cls, 0) + tot
        for key, count in conf.items():
            confusion[key] = confusion.get(key, 0) + count
    per_class_acc = {c: class_correct.get(c, 0) / t for c, t in sorted(class_total.items())}
    mean = float(np.mean(accuracies))
    config = {
        "n_way": spec.n_way,
        "k_shot": spec.k_shot,
        "q_query": spec.q_query,
        "episodes": spec.episodes,
        "base_seed": spec.base_seed,
        "representation": fp.representation,
        "normalize": fp.normalize,
    }
    config.update(config_echo)
    return EvalReport(accuracies, mean, ci95_halfwidth(accuracies), per_class_acc, confusion, config)


def evaluate(
    encoder: MLPEncoder | None,
    fp: FeaturePool,
    spec: EvalSpec,
    config_echo: dict | None = None,
) -> EvalReport:
    """Prototype-classification evaluation over seeded episodes.

    ``encoder=None`` evaluates directly in feature space (identity
    embedding); otherwise embeddings come from eval-mode forward passes.
    """
    echo = dict(config_echo or {})
    if encoder is None:
        embed_fn = _identity_embed
        echo.setdefault("encoder", "none")
    else:
        embed_fn = lambda x: encoder.forward(x, train=False)
        echo.setdefault("encoder", "mlp")
    return _run_protocol(embed_fn, _proto_predict, fp, spec, echo)


def input_space_baseline(fp: FeaturePool, spec: EvalSpec, config_echo: dict | None = None) -> EvalReport:
    """Nearest prototype computed directly in feature space."""
    return evaluate(None, fp, spec, config_echo)


def fit_softmax_regression(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    iters: int = 500,
    lr: float = 0.1,
    l2: float = 1e-3,
) -> tuple[np.ndarray, np.ndarray]:
    """Full-batch gradient descent from zero init on the softmax CE loss.

    Objective: mean cross-entropy + 0.5 * l2 * ||W||^2 (bias unpenalized).
    Fixed iteration count keeps the fit deterministic.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n = X.shape[0]
    W = np.zeros((X.shape[1], n_classes))
    b = np.zeros(n_classes)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    for _ in range(iters):
        logits = X @ W + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        W -= lr * (X.T @ g + l2 * W)
        b -= lr * g.sum(axis=0)
    return W, b


def _linear_predict(W: np.ndarray, b: np.ndarray, X: np.ndarray) -> np.ndarray:
    return (X @ W + b).argmax(axis=1)


def episode_linear_baseline(
    encoder: MLPEncoder,
    fp: FeaturePool,
    spec: EvalSpec,
    config_echo: dict | None = None,
    iters: int = 500,
    lr: float = 0.1,
    l2: float = 1e-3,
) -> EvalReport:
    """Per-episode softmax regression fitted on the support embeddings."""
    embed_fn = lambda x: encoder.forward(x, train=False)

    def predict(emb_s, labels_s, emb_q, n_way):
        W, b = fit_softmax_regression(emb_s, labels_s, n_way, iters=iters, lr=lr, l2=l2)
        return _linear_predict(W, b, emb_q)

    echo = dict(config_echo or {})
    echo.setdefault("encoder", "mlp")
    echo.setdefault("classifier", "episode_linear")
    return _run_protocol(embed_fn, predict, fp, spec, echo)


def full_data_linear(fp_train: FeaturePool, fp_test: FeaturePool) -> float:
    """Softmax regression on every train feature vector; test accuracy."""
    classes = sorted(set(fp_train.pool) | set(fp_test.pool))
    if len(classes) < 2:
        raise DegenerateProblem("need at least two classes for a linear classifier")
    remap = {c: i for i, c in enumerate(classes)}

    def matrices(fp):
        rows, labels = [], []
        for c, idxs in sorted(fp.pool.items()):
            rows.append(fp.X[idxs])
            labels.extend([remap[c]] * len(idxs))
        return np.vstack(rows), np.array(labels)

    Xtr, ytr = matrices(fp_train)
    Xte, yte = matrices(fp_test)
    W, b = fit_softmax_regression(Xtr, ytr, len(classes))
    return float((_linear_predict(W, b, Xte) == yte).mean())


def ablation_normalization(
    build_pool,
    ks: tuple[int, ...] = (1, 3, 5),
    spec: EvalSpec | None = None,
) -> list[dict]:
    """Input-space evaluation under the three cumulative settings.

    ``build_pool(representation, normalize)`` must return a FeaturePool
    for the evaluation split. Emits one row per (setting, K).
    """
    base = spec or EvalSpec()
    rows = []
    for key, label, representation, normalize in ABLATION_SETTINGS:
        fp = build_pool(representation, normalize)
        for k in ks:
            k_spec = EvalSpec(base.n_way, k, base.q_query, base.episodes, base.base_seed)
            report = input_space_baseline(fp, k_spec, {"ablation_setting": key})
            rows.append(
                {
                    "setting": key,
                    "label": label,
                    "representation": representation,
                    "normalize": normalize,
                    "K": k,
                    "mean": report.mean_accuracy,
                    "ci95": report.ci95_halfwidth,
                }
            )
    return rows


def multi_seed(run_fn, seeds: tuple[int, ...] = (42, 1337, 2024)) -> dict:
    """Repeat a full evaluation per seed; report means and across-seed std."""
    per_seed = {}
    for seed in seeds:
        report = run_fn(seed)
        per_seed[seed] = report.mean_accuracy
    means = np.array([per_seed[s] for s in seeds], dtype=np.float64)
    return {
        "seeds": list(seeds),
        "per_seed_mean": {str(s): per_seed[s] for s in seeds},
        "across_seed_std": float(means.std(ddof=1)) if len(seeds) > 1 else 0.0,
    }


def error_analysis(report: EvalReport) -> dict:
    """Per-class accuracy ranking (hardest first) and top confused pairs."""
    ranking = sorted(report.per_class_accuracy.items(), key=lambda kv: (kv[1], kv[0]))
    confused = [
        (t, p, c) for (t, p), c in report.confusion.items() if t != p
    ]
    confused.sort(key=lambda row: (-row[2], row[0], row[1]))
    return {
        "per_class_ranking": [[c, acc] for c, acc in ranking],
        "top_confused": [[t, p, c] for t, p, c in confused],
    }


def write_csv_table(path, rows: list[dict], columns: list[str] | None = None) -> None:
    columns = columns or CSV_COLUMNS
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
