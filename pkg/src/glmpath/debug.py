"""Debugging tools for linear decision layers over deep features.

A decision layer here is ``(W, b)`` with ``W`` of shape (classes, d), so the
logits of a feature vector ``f`` are ``W @ f + b``. ``decision_layer``
converts a fitted GlmModel into that form.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import PreconditionError

WORDCLOUD_CAP = 30


def decision_layer(model):
    """(W, b) for a classifier; binomial models become a two-row layer."""
    if model.family == "gaussian":
        raise PreconditionError("decision layers need a classification model")
    if model.family == "binomial":
        W = np.vstack([np.zeros(model.d), model.beta[:, 0]])
        return W, np.array([0.0, model.beta0[0]])
    return model.beta.T.copy(), model.beta0.copy()


def _accuracy(logits, y):
    return float(np.mean(np.argmax(logits, axis=1) == y))


def topk_mask(W, k):
    """Boolean mask selecting each row's k largest |weights| (ties: lower index)."""
    order = np.argsort(-np.abs(W), axis=1, kind="stable")[:, :k]
    mask = np.zeros(W.shape, dtype=bool)
    np.put_along_axis(mask, order, True, axis=1)
    return mask


@dataclass
class AblationReport:
    k: int
    acc_all: float
    acc_topk: float
    acc_rest: float

    def as_dict(self):
        return {"all": self.acc_all, "topk": self.acc_topk, "rest": self.acc_rest}


def topk_ablation(W, b, X, y, k):
    """Accuracy of the full layer, its per-class top-k part, and the remainder.

    Each class's logit keeps only that class's own top-k coefficients (or,
    for ``acc_rest``, all the others). Intercepts are always kept.
    """
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    d = W.shape[1]
    if X.shape[1] != d:
        raise PreconditionError(f"layer has {d} features, data has {X.shape[1]}")
    if k < 0:
        raise PreconditionError(f"k must be nonnegative, got {k}")
    if k > d:
        warnings.warn(f"k={k} exceeds the feature count; clamping to {d}", stacklevel=2)
        k = d
    mask = topk_mask(W, k)
    return AblationReport(
        k=k,
        acc_all=_accuracy(X @ W.T + b, y),
        acc_topk=_accuracy(X @ np.where(mask, W, 0.0).T + b, y),
        acc_rest=_accuracy(X @ np.where(mask, 0.0, W).T + b, y),
    )


@dataclass
class Attribution:
    gamma: np.ndarray
    label: int
    predicted: int
    top_feature: int
    flipped: bool


def attribute_misclassification(W, b, features, label, predicted):
    """Score each feature's pull toward the wrong class and test the top one.

    ``gamma[i] = (W[p, i] - W[l, i]) * f_i``. The top feature is zeroed in
    every logit; ``flipped`` says whether the argmax then becomes ``label``.
    """
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    f = np.asarray(features, dtype=np.float64)
    if label == predicted:
        raise PreconditionError("example is not misclassified (label == predicted)")
    actual = int(np.argmax(W @ f + b))
    if actual != predicted:
        raise PreconditionError(f"layer predicts class {actual}, not the claimed {predicted}")
    gamma = W[predicted] * f - W[label] * f
    top = int(np.argmax(gamma))
    ablated = f.copy()
    ablated[top] = 0.0
    flipped = int(np.argmax(W @ ablated + b)) == label
    return Attribution(gamma, int(label), int(predicted), top, flipped)


@dataclass
class OverlapReport:
    pairs: list  # (i, j, shared_count, confusion_score)
    spearman: float = None
    pearson: float = None
    skipped: list = field(default_factory=list)


def used_features(W, threshold_frac=0.05):
    """Per class, features with |weight| above threshold_frac of the class's max |weight|."""
    A = np.abs(np.asarray(W, dtype=np.float64))
    return A > threshold_frac * A.max(axis=1, keepdims=True)


def _correlation(fn, a, b):
    if len(a) < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        return None
    return float(fn(a, b)[0])


def confusion_overlap(W, confusion, threshold_frac=0.05):
    """Shared-feature counts vs. pairwise confusion, with their rank correlation."""
    if not 0 < threshold_frac <= 1:
        raise PreconditionError(f"threshold_frac must lie in (0, 1], got {threshold_frac}")
    W = np.asarray(W, dtype=np.float64)
    C = np.asarray(confusion, dtype=np.float64)
    n_cls = W.shape[0]
    if C.shape != (n_cls, n_cls):
        raise PreconditionError(f"confusion matrix must be {n_cls}x{n_cls}, got {C.shape}")
    used = used_features(W, threshold_frac)
    empty = ~used.any(axis=1)
    report = OverlapReport([])
    for i in range(n_cls):
        for j in range(i + 1, n_cls):
            if empty[i] or empty[j]:
                report.skipped.append((i, j, "class has no nonzero weights"))
                continue
            shared = int(np.count_nonzero(used[i] & used[j]))
            report.pairs.append((i, j, shared, float(max(C[i, j], C[j, i]))))
    shared = np.array([p[2] for p in report.pairs], dtype=float)
    conf = np.array([p[3] for p in report.pairs], dtype=float)
    report.spearman = _correlation(stats.spearmanr, shared, conf)
    report.pearson = _correlation(stats.pearsonr, shared, conf)
    return report


@dataclass
class WordCloud:
    feature_id: int
    positive: dict  # word -> weight, strongest first
    negative: dict

    def as_dict(self):
        return {
            "feature_id": self.feature_id,
            "positive": [{"word": w, "weight": v} for w, v in self.positive.items()],
            "negative": [{"word": w, "weight": v} for w, v in self.negative.items()],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["feature_id"]),
                   {e["word"]: float(e["weight"]) for e in d["positive"]},
                   {e["word"]: float(e["weight"]) for e in d["negative"]})


def average_word_weights(weights, corpus, vocab=None):
    """Mean explanation weight of each word over all of its occurrences.

    ``weights[s]`` maps token positions of sentence ``s`` to a weight;
    positions without an entry count as occurrences with weight 0.
    """
    vocab = None if vocab is None else set(vocab)
    total, count = {}, {}
    for s, tokens in enumerate(corpus):
        raw = weights.get(s, weights.get(str(s), {})) if isinstance(weights, dict) else weights[s]
        sw = {int(pos): float(v) for pos, v in raw.items()}
        for pos in sw:
            if not 0 <= pos < len(tokens):
                raise PreconditionError(f"sentence {s}: weighted position {pos} out of range")
            if vocab is not None and tokens[pos] not in vocab:
                raise PreconditionError(f"weighted word {tokens[pos]!r} is not in the vocabulary")
        for pos, word in enumerate(tokens):
            if vocab is not None and word not in vocab:
                continue
            count[word] = count.get(word, 0) + 1
            total[word] = total.get(word, 0.0) + sw.get(pos, 0.0)
    return {w: total[w] / count[w] for w in count}


def aggregate_wordcloud(weights, corpus, vocab=None, feature_id=0, cap=WORDCLOUD_CAP):
    """Signed word cloud for one feature: top ``cap`` words per sign by |mean weight|."""
    means = average_word_weights(weights, corpus, vocab)
    # sort by magnitude, then word, so equal weights land deterministically
    pos = sorted(((w, v) for w, v in means.items() if v > 0), key=lambda t: (-t[1], t[0]))
    neg = sorted(((w, v) for w, v in means.items() if v < 0), key=lambda t: (t[1], t[0]))
    return WordCloud(feature_id, dict(pos[:cap]), dict(neg[:cap]))


@dataclass
class Counterfactual:
    input_tokens: list
    output_tokens: list
    substituted_position: int
    feature_id: int
    sign: int  # +1: removed word came from the positive cloud
    flipped_prediction: bool = None

    def as_dict(self):
        out = {"input_tokens": self.input_tokens, "output_tokens": self.output_tokens,
               "substituted_position": self.substituted_position, "feature_id": self.feature_id}
        if self.flipped_prediction is not None:
            out["flipped_prediction"] = self.flipped_prediction
        return out


def counterfactual_candidates(tokens, clouds, w_y):
    """(position, feature, sign) triples eligible for substitution.

    A word supports the prediction through feature i if it sits in the
    positive cloud and w_y[i] > 0, or in the negative cloud and w_y[i] < 0.
    Candidates whose opposite-sign cloud is empty are dropped.
    """
    out = []
    for i, cloud in enumerate(clouds):
        for j, word in enumerate(tokens):
            if word in cloud.positive and w_y[i] > 0 and cloud.negative:
                out.append((j, i, 1))
            elif word in cloud.negative and w_y[i] < 0 and cloud.positive:
                out.append((j, i, -1))
    return out


def generate_counterfactual(tokens, clouds, W, b, rng_seed=0, features=None,
                            prediction=None, encoder=None):
    """Swap one word that supports the prediction for a word of the opposite sign.

    ``clouds[i]`` is the WordCloud of feature i. The predicted class comes
    from ``prediction``, or from ``features`` (the sentence's deep features),
    or from ``encoder(tokens)``. Returns None when no candidate exists.
    With an encoder, ``flipped_prediction`` reports whether the new sentence
    changes the layer's prediction.
    """
    tokens = list(tokens)
    if not tokens:
        raise PreconditionError("sentence must be nonempty")
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(clouds) != W.shape[1]:
        raise PreconditionError(f"{len(clouds)} word clouds for {W.shape[1]} features")
    if prediction is None:
        if features is None:
            if encoder is None:
                raise PreconditionError("need a prediction, a feature vector, or an encoder")
            features = encoder(tokens)
        prediction = int(np.argmax(W @ np.asarray(features, dtype=np.float64) + b))
    cands = counterfactual_candidates(tokens, clouds, W[prediction])
    if not cands:
        return None
    rng = np.random.default_rng(rng_seed)
    j, i, sign = cands[rng.integers(len(cands))]
    pool = list(clouds[i].negative if sign > 0 else clouds[i].positive)
    out = tokens.copy()
    out[j] = pool[rng.integers(len(pool))]
    flipped = None
    if encoder is not None:
        new_pred = int(np.argmax(W @ np.asarray(encoder(out), dtype=np.float64) + b))
        flipped = new_pred != prediction
    return Counterfactual(tokens, out, j, i, sign, flipped)


def path_sparsity_frontier(path):
    """(nnz_total, val_metric) per path entry, ordered by nnz (stable)."""
    pts = [(e.nnz_total, e.val_metric) for e in path.entries]
    return sorted(pts, key=lambda p: p[0])
