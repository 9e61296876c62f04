"""Prototype-based subspace classifier.

Each class is represented by one or more orthonormal D x d prototype bases.
A document subspace is compared to a prototype through its principal angles,
weighted by a shared learned relevance vector on the simplex.  Training
minimizes the relative-distance sigmoid cost by per-sample gradient descent:
prototype updates are retracted back onto orthonormal bases with QR, the
relevance vector is re-projected onto the simplex after every step.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError,
    DegenerateSampleError,
    DimensionError,
    NumericError,
)
from .geometry import (
    CHORDAL,
    DISTANCE_KINDS,
    check_orthonormal,
    distance_gradient_basis,
    distance_gradient_weights,
    principal_system,
    project_simplex,
    qr_retract,
    sign_normalize_columns,
    weighted_distance,
)
from .subspace import LabeledSubspace, Subspace

log = logging.getLogger(__name__)

# Bases stacked per prototype at initialization; more adds little.
_INIT_SAMPLE_CAP = 10


@dataclass
class Prototype:
    """Orthonormal D x d class representative."""

    basis: np.ndarray
    label: str


@dataclass
class TrainConfig:
    subspace_dim: int
    seed: int
    beta: float = 5.0
    distance_kind: str = CHORDAL
    lr_prototype: float = 0.05
    lr_relevance: float = 0.005
    epochs: int = 100
    prototypes_per_class: int = 1

    def validate(self):
        if self.subspace_dim < 1:
            raise DimensionError("subspace_dim must be positive")
        if self.beta <= 0:
            raise DataError("beta must be positive")
        if self.distance_kind not in DISTANCE_KINDS:
            raise DataError(f"unknown distance kind {self.distance_kind!r}")
        if self.lr_prototype <= 0:
            raise DataError("prototype learning rate must be positive")
        if self.lr_relevance < 0:
            raise DataError("relevance learning rate must be nonnegative")
        if self.epochs < 0:
            raise DataError("epochs must be nonnegative")
        if self.prototypes_per_class < 1:
            raise DataError("prototypes_per_class must be positive")


@dataclass
class ModelState:
    """A trained classifier: prototypes, shared relevances, and metadata.

    Immutable by convention once training returns; classify/score/evaluate
    only read it, so concurrent use over documents needs no coordination.
    ``training_log`` rows are (epoch, mean cost, training accuracy), with
    epoch 0 describing the freshly initialized model.
    """

    prototypes: list[Prototype]
    relevances: np.ndarray
    embedding_dim: int
    subspace_dim: int
    sigmoid_slope: float
    distance_kind: str
    class_labels: list[str]
    hyperparams: dict = field(default_factory=dict)
    training_log: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def n_prototypes(self) -> int:
        return len(self.prototypes)

    def prototype_labels(self) -> list[str]:
        return [p.label for p in self.prototypes]


def sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def cost_term(d_plus: float, d_minus: float, beta: float) -> tuple[float, float]:
    """Relative distance difference mu and its sigmoid, the per-sample cost.

    mu = (d+ - d-) / (d+ + d-) lies in [-1, 1]; the cost reads as the
    probability of misclassifying the sample.
    """
    total = d_plus + d_minus
    if total <= 0.0:
        raise DegenerateSampleError(
            f"both winner distances are zero (d+={d_plus}, d-={d_minus})"
        )
    mu = (d_plus - d_minus) / total
    return mu, sigmoid(beta * mu)


def distance(doc: Subspace, proto: Prototype, weights: np.ndarray, kind: str) -> float:
    """Relevance-weighted subspace distance between a document and a prototype."""
    _check_weights(weights)
    check_orthonormal(doc.basis, name="document basis")
    check_orthonormal(proto.basis, name="prototype basis")
    system = principal_system(doc.basis, proto.basis)
    return weighted_distance(system.cosines, weights, kind)


def _check_weights(weights: np.ndarray, atol: float = 1e-12):
    if np.any(weights < 0) or abs(float(weights.sum()) - 1.0) > atol:
        raise DataError("relevance weights must be nonnegative and sum to 1")


def _distances(doc_basis: np.ndarray, bases: list[np.ndarray], weights, kind) -> np.ndarray:
    out = np.empty(len(bases))
    for i, basis in enumerate(bases):
        sv = np.linalg.svd(doc_basis.T @ basis, compute_uv=False)
        out[i] = weighted_distance(np.clip(sv, 0.0, 1.0), weights, kind)
    return out


def classify(doc: Subspace, model: ModelState) -> tuple[str, np.ndarray]:
    """Nearest-prototype prediction.

    Returns the winning label and the distance to every prototype.  Ties go
    to the lowest prototype index.
    """
    if doc.basis.shape[0] != model.embedding_dim:
        raise DimensionError(
            f"document dimension {doc.basis.shape[0]} does not match model "
            f"dimension {model.embedding_dim}"
        )
    dists = _distances(
        doc.basis, [p.basis for p in model.prototypes],
        model.relevances, model.distance_kind,
    )
    return model.prototypes[int(np.argmin(dists))].label, dists


def score(doc: Subspace, model: ModelState, positive_label: str) -> float:
    """Probability that the document belongs to the positive class.

    sigmoid(beta * (d_neg - d_pos) / (d_neg + d_pos)) over the nearest
    positive and nearest negative prototypes.  Requires a binary model;
    equals 0.5 exactly on the decision boundary d_pos = d_neg.
    """
    if len(model.class_labels) != 2:
        raise DataError(
            f"probability scoring needs a binary model, got {len(model.class_labels)} classes"
        )
    if positive_label not in model.class_labels:
        raise DataError(f"unknown positive label {positive_label!r}")
    _, dists = classify(doc, model)
    labels = model.prototype_labels()
    pos = min(d for d, lab in zip(dists, labels) if lab == positive_label)
    neg = min(d for d, lab in zip(dists, labels) if lab != positive_label)
    total = pos + neg
    if total <= 0.0:
        raise DegenerateSampleError("document is at zero distance to both classes")
    return sigmoid(model.sigmoid_slope * (neg - pos) / total)


@dataclass
class EvalReport:
    accuracy: float
    per_class: dict[str, dict[str, float]]  # label -> precision/recall/support
    confusion: dict[tuple[str, str], int]   # (true, predicted) -> count


def evaluate(model: ModelState, test: list[LabeledSubspace]) -> EvalReport:
    """Accuracy, per-class precision/recall, and confusion counts."""
    if not test:
        raise DataError("empty test set")
    confusion: dict[tuple[str, str], int] = {}
    correct = 0
    for ex in test:
        pred, _ = classify(ex.subspace, model)
        confusion[(ex.label, pred)] = confusion.get((ex.label, pred), 0) + 1
        if pred == ex.label:
            correct += 1
    labels = sorted({t for t, _ in confusion} | {p for _, p in confusion} | set(model.class_labels))
    per_class = {}
    for lab in labels:
        tp = confusion.get((lab, lab), 0)
        predicted = sum(c for (t, p), c in confusion.items() if p == lab)
        actual = sum(c for (t, p), c in confusion.items() if t == lab)
        per_class[lab] = {
            "precision": tp / predicted if predicted else 0.0,
            "recall": tp / actual if actual else 0.0,
            "support": float(actual),
        }
    return EvalReport(accuracy=correct / len(test), per_class=per_class, confusion=confusion)


def _complete_basis(basis: np.ndarray, d: int, rng) -> np.ndarray:
    """Extend an orthonormal basis to d columns with seeded random directions."""
    dim = basis.shape[0]
    current = basis
    while current.shape[1] < d:
        v = rng.standard_normal(dim)
        # two projection passes keep the new column orthogonal to working precision
        v -= current @ (current.T @ v)
        v -= current @ (current.T @ v)
        norm = np.linalg.norm(v)
        if norm < 1e-8:
            continue
        v /= norm
        if v[int(np.argmax(np.abs(v)))] < 0:
            v = -v
        current = np.hstack([current, v[:, None]])
    return current


def init_prototypes(
    training: list[LabeledSubspace], per_class: int, d: int, seed
) -> list[Prototype]:
    """Seeded prototype initialization from stacked document bases.

    For each prototype, up to 10 random same-class documents are drawn, their
    bases stacked side by side, and the top-d left singular vectors
    (sign-normalized) taken as the initial basis.  If the stack has rank
    below d, the basis is completed with seeded random orthonormal columns.
    """
    if not training:
        raise DataError("empty training set")
    labels = sorted({ex.label for ex in training})
    dim = training[0].subspace.basis.shape[0]
    if d > dim:
        raise DimensionError(f"subspace dimension {d} exceeds embedding dimension {dim}")
    rng = np.random.default_rng(seed)
    prototypes = []
    for label in labels:
        idxs = [i for i, ex in enumerate(training) if ex.label == label]
        if not idxs:
            raise DataError(f"class {label!r} has no training examples")
        for _ in range(per_class):
            take = min(_INIT_SAMPLE_CAP, len(idxs))
            chosen = rng.choice(len(idxs), size=take, replace=False)
            stacked = np.hstack([training[idxs[int(c)]].subspace.basis for c in chosen])
            left, sigma, _ = np.linalg.svd(stacked, full_matrices=False)
            rank = int(np.sum(sigma > 1e-10 * sigma[0]))
            basis = sign_normalize_columns(left[:, : min(d, rank)])
            if basis.shape[1] < d:
                basis = _complete_basis(basis, d, rng)
            prototypes.append(Prototype(basis=np.ascontiguousarray(basis), label=label))
    return prototypes


def _winners(dists: np.ndarray, correct_mask: np.ndarray) -> tuple[int, int]:
    correct_idx = np.flatnonzero(correct_mask)
    wrong_idx = np.flatnonzero(~correct_mask)
    j = int(correct_idx[np.argmin(dists[correct_idx])])
    k = int(wrong_idx[np.argmin(dists[wrong_idx])])
    return j, k


def _pass_stats(training, bases, proto_labels, weights, beta, kind) -> tuple[float, float]:
    """Mean cost and accuracy of the current state over a labeled set."""
    cost_sum = 0.0
    counted = 0
    correct = 0
    for ex in training:
        dists = _distances(ex.subspace.basis, bases, weights, kind)
        if proto_labels[int(np.argmin(dists))] == ex.label:
            correct += 1
        mask = np.array([lab == ex.label for lab in proto_labels])
        j, k = _winners(dists, mask)
        total = dists[j] + dists[k]
        if total <= 0.0:
            continue
        cost_sum += sigmoid(beta * (dists[j] - dists[k]) / total)
        counted += 1
    if counted == 0:
        raise NumericError("every training sample is degenerate (zero distances)")
    return cost_sum / counted, correct / len(training)


def train(training: list[LabeledSubspace], config: TrainConfig, update_hook=None) -> ModelState:
    """Stochastic gradient descent on the relative-distance sigmoid cost.

    Per epoch the samples are visited in a seeded shuffled order.  For each
    sample the nearest correct-class and nearest wrong-class prototypes are
    pulled/pushed along the distance gradient and retracted onto the
    orthonormal manifold via QR; the shared relevance vector follows its own
    gradient and is re-projected onto the simplex.  Samples at zero distance
    to both winners are skipped and counted.  Deterministic for a fixed
    seed, data and config.

    ``update_hook(bases, weights)``, if given, runs after every single
    update (instrumentation for invariant checks).
    """
    config.validate()
    if not training:
        raise DataError("empty training set")
    labels = sorted({ex.label for ex in training})
    if len(labels) < 2:
        raise DataError("training needs at least two classes")
    dims = {ex.subspace.basis.shape[0] for ex in training}
    if len(dims) != 1:
        raise DimensionError(f"inconsistent embedding dimensions in training set: {sorted(dims)}")
    dim = dims.pop()
    d = config.subspace_dim
    if d > dim:
        raise DimensionError(f"subspace dimension {d} exceeds embedding dimension {dim}")

    init_seq, shuffle_seq = np.random.SeedSequence(config.seed).spawn(2)
    prototypes = init_prototypes(training, config.prototypes_per_class, d, seed=init_seq)
    bases = [p.basis.copy() for p in prototypes]
    proto_labels = [p.label for p in prototypes]
    weights = np.full(d, 1.0 / d)
    rng = np.random.default_rng(shuffle_seq)

    beta, kind = config.beta, config.distance_kind
    lr_w, lr_l = config.lr_prototype, config.lr_relevance
    masks = {lab: np.array([pl == lab for pl in proto_labels]) for lab in labels}

    training_log = []
    cost0, acc0 = _pass_stats(training, bases, proto_labels, weights, beta, kind)
    training_log.append((0, cost0, acc0))
    degenerate = 0

    for epoch in range(1, config.epochs + 1):
        for i in rng.permutation(len(training)):
            ex = training[int(i)]
            doc_basis = ex.subspace.basis
            systems = [principal_system(doc_basis, b) for b in bases]
            dists = np.array(
                [weighted_distance(s.cosines, weights, kind) for s in systems]
            )
            j, k = _winners(dists, masks[ex.label])
            d_plus, d_minus = dists[j], dists[k]
            total = d_plus + d_minus
            if total <= 0.0:
                degenerate += 1
                log.debug("skipping degenerate sample %s (epoch %d)", ex.subspace.doc_id, epoch)
                continue
            e_val = sigmoid(beta * (d_plus - d_minus) / total)
            common = beta * e_val * (1.0 - e_val) * 2.0 / total**2
            de_dplus = common * d_minus
            de_dminus = -common * d_plus

            new_j = qr_retract(bases[j] - lr_w * de_dplus * distance_gradient_basis(systems[j], weights, kind))
            new_k = qr_retract(bases[k] - lr_w * de_dminus * distance_gradient_basis(systems[k], weights, kind))
            if not (np.all(np.isfinite(new_j)) and np.all(np.isfinite(new_k))):
                raise NumericError(
                    f"non-finite prototype update at epoch {epoch}, "
                    f"sample {ex.subspace.doc_id!r}"
                )
            bases[j], bases[k] = new_j, new_k
            # lr 0 must leave the relevances bit-identical, so skip entirely
            if lr_l > 0.0:
                grad_l = de_dplus * distance_gradient_weights(systems[j].cosines, d, kind)
                grad_l += de_dminus * distance_gradient_weights(systems[k].cosines, d, kind)
                weights = project_simplex(weights - lr_l * grad_l)
                if not np.all(np.isfinite(weights)):
                    raise NumericError(f"non-finite relevance update at epoch {epoch}")
            if update_hook is not None:
                update_hook(bases, weights)
        cost, acc = _pass_stats(training, bases, proto_labels, weights, beta, kind)
        training_log.append((epoch, cost, acc))

    if degenerate:
        log.warning("skipped %d degenerate samples during training", degenerate)

    return ModelState(
        prototypes=[Prototype(basis=b, label=lab) for b, lab in zip(bases, proto_labels)],
        relevances=weights,
        embedding_dim=dim,
        subspace_dim=d,
        sigmoid_slope=beta,
        distance_kind=kind,
        class_labels=labels,
        hyperparams={
            "lr_prototype": lr_w,
            "lr_relevance": lr_l,
            "epochs": config.epochs,
            "seed": config.seed,
            "prototypes_per_class": config.prototypes_per_class,
        },
        training_log=training_log,
    )


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------

def total_cost(bases, proto_labels, weights, examples, beta, kind) -> float:
    """Sum of per-sample sigmoid costs; winner selection included.

    ``examples`` is a list of (doc_basis, label).  No orthonormality
    validation, so finite-difference probes of the raw entries are allowed.
    """
    cost = 0.0
    for doc_basis, label in examples:
        dists = _distances(doc_basis, bases, weights, kind)
        mask = np.array([pl == label for pl in proto_labels])
        j, k = _winners(dists, mask)
        total = dists[j] + dists[k]
        if total <= 0.0:
            continue
        cost += sigmoid(beta * (dists[j] - dists[k]) / total)
    return cost


def total_cost_and_gradients(bases, proto_labels, weights, examples, beta, kind):
    """Cost plus its gradient w.r.t. every prototype entry and weight."""
    grads_w = [np.zeros_like(b) for b in bases]
    grad_l = np.zeros_like(weights)
    cost = 0.0
    n_weights = weights.size
    for doc_basis, label in examples:
        systems = [principal_system(doc_basis, b) for b in bases]
        dists = np.array([weighted_distance(s.cosines, weights, kind) for s in systems])
        mask = np.array([pl == label for pl in proto_labels])
        j, k = _winners(dists, mask)
        d_plus, d_minus = dists[j], dists[k]
        total = d_plus + d_minus
        if total <= 0.0:
            continue
        e_val = sigmoid(beta * (d_plus - d_minus) / total)
        cost += e_val
        common = beta * e_val * (1.0 - e_val) * 2.0 / total**2
        de_dplus = common * d_minus
        de_dminus = -common * d_plus
        grads_w[j] += de_dplus * distance_gradient_basis(systems[j], weights, kind)
        grads_w[k] += de_dminus * distance_gradient_basis(systems[k], weights, kind)
        grad_l += de_dplus * distance_gradient_weights(systems[j].cosines, n_weights, kind)
        grad_l += de_dminus * distance_gradient_weights(systems[k].cosines, n_weights, kind)
    return cost, grads_w, grad_l


@dataclass
class GradCheckResult:
    embedding_dim: int
    subspace_dim: int
    kind: str
    seed: int
    rel_error: float      # ||analytic - fd|| / max(||analytic||, ||fd||) over all params
    max_abs_diff: float


def random_orthonormal(dim: int, k: int, rng) -> np.ndarray:
    return qr_retract(rng.standard_normal((dim, k)))


def gradient_check(
    embedding_dim: int, subspace_dim: int, kind: str, seed: int,
    n_examples: int = 6, eps: float = 1e-6,
) -> GradCheckResult:
    """Compare analytic cost gradients against central finite differences.

    Every prototype entry and every relevance weight is probed with a
    +/- eps step.  The reported relative error is the norm of the gradient
    difference over the norm of the gradient, stacked across all parameters;
    it is the robust form of an entry-wise comparison when individual
    entries may be arbitrarily close to zero.
    """
    rng = np.random.default_rng(seed)
    labels = ["a", "b"]
    bases = [random_orthonormal(embedding_dim, subspace_dim, rng) for _ in labels]
    raw = 0.5 + rng.random(subspace_dim)
    weights = raw / raw.sum()
    # Keep document rank low enough that document and prototype spans are in
    # general position: rank + d > D forces principal cosines exactly 1,
    # where the sorted-angle cost is genuinely non-smooth.
    doc_rank = min(subspace_dim, embedding_dim - subspace_dim)
    examples = [
        (random_orthonormal(embedding_dim, doc_rank, rng), labels[i % 2])
        for i in range(n_examples)
    ]

    _, grads_w, grad_l = total_cost_and_gradients(bases, labels, weights, examples, 5.0, kind)

    fd_w = [np.zeros_like(b) for b in bases]
    for p, basis in enumerate(bases):
        for i in range(embedding_dim):
            for j in range(subspace_dim):
                probe = [b.copy() for b in bases]
                probe[p][i, j] += eps
                up = total_cost(probe, labels, weights, examples, 5.0, kind)
                probe[p][i, j] -= 2 * eps
                down = total_cost(probe, labels, weights, examples, 5.0, kind)
                fd_w[p][i, j] = (up - down) / (2 * eps)
    fd_l = np.zeros_like(weights)
    for i in range(subspace_dim):
        probe = weights.copy()
        probe[i] += eps
        up = total_cost(bases, labels, probe, examples, 5.0, kind)
        probe[i] -= 2 * eps
        down = total_cost(bases, labels, probe, examples, 5.0, kind)
        fd_l[i] = (up - down) / (2 * eps)

    analytic = np.concatenate([g.ravel() for g in grads_w] + [grad_l])
    numeric = np.concatenate([g.ravel() for g in fd_w] + [fd_l])
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return GradCheckResult(
        embedding_dim=embedding_dim,
        subspace_dim=subspace_dim,
        kind=kind,
        seed=seed,
        rel_error=float(np.linalg.norm(analytic - numeric) / denom),
        max_abs_diff=float(np.max(np.abs(analytic - numeric))),
    )


def gradient_check_battery(base_seed: int = 20240, n_configs: int = 20) -> list[GradCheckResult]:
    """Gradient checks over random (dim, d, kind) configurations."""
    grid = itertools.cycle(itertools.product((8, 20), (2, 5), DISTANCE_KINDS))
    results = []
    for i, (dim, d, kind) in zip(range(n_configs), grid):
        results.append(gradient_check(dim, d, kind, seed=base_seed + i))
    return results


def run_gradient_checks(base_seed: int = 20240, n_configs: int = 20):
    """Battery wrapper returning (results, max relative error, elapsed seconds)."""
    start = time.perf_counter()
    results = gradient_check_battery(base_seed, n_configs)
    elapsed = time.perf_counter() - start
    worst = max(r.rel_error for r in results)
    return results, worst, elapsed


# ---------------------------------------------------------------------------
# Nearest-centroid baseline on mean vectors
# ---------------------------------------------------------------------------

@dataclass
class CentroidModel:
    """Per-class mean vectors; prediction by smallest cosine distance."""

    class_labels: list[str]
    centroids: np.ndarray  # (n_classes, D), row order matches class_labels


def centroid_train(vectors: np.ndarray, labels) -> CentroidModel:
    """Average the mean-vector representations per class."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise DataError("centroid training needs a nonempty (n, D) matrix")
    if len(labels) != vectors.shape[0]:
        raise DataError("labels and vectors disagree in length")
    class_labels = sorted(set(labels))
    centroids = np.vstack([
        vectors[[i for i, lab in enumerate(labels) if lab == cls]].mean(axis=0)
        for cls in class_labels
    ])
    return CentroidModel(class_labels=class_labels, centroids=centroids)


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cosine similarity; zero vectors count as fully dissimilar."""
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 1.0
    return 1.0 - float(u @ v) / (nu * nv)


def centroid_predict(model: CentroidModel, vector: np.ndarray) -> str:
    """Label of the nearest centroid; ties go to the first class in order."""
    dists = [cosine_distance(vector, c) for c in model.centroids]
    return model.class_labels[int(np.argmin(dists))]
