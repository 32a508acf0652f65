"""Random forest over selected features.

Trees split on Gini impurity with midpoint thresholds between adjacent
distinct values. All randomness flows from a per-tree PRNG derived from the
model seed, so training is fully deterministic for fixed inputs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import FormatError
from .features import FeatureSelection, FeatureVector

_MAGIC = b"FLF1"
_VERSION = 1
_MASK64 = (1 << 64) - 1


@dataclass
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    features_per_split: int | None = None  # default floor(sqrt(k)) at train time
    seed: int = 0


@dataclass
class _Tree:
    """Flat node arrays; feature == -1 marks a leaf."""

    feature: np.ndarray    # int32, original feature index
    threshold: np.ndarray  # float64
    left: np.ndarray       # int32 child node ids
    right: np.ndarray      # int32
    hist: np.ndarray       # uint32 (n_nodes, n_classes), nonzero only at leaves

    def __post_init__(self):
        # majority class per leaf, lowest class index on ties
        self.leaf_class = np.argmax(self.hist, axis=1).astype(np.int32)


@dataclass
class ForestModel:
    trees: list[_Tree]
    class_list: list[str]
    selection: FeatureSelection
    arity: int
    params: ForestParams


@dataclass
class ActivityPrediction:
    player_id: str
    window_ref: tuple[float, float]
    predicted_class: str
    vote_fractions: dict[str, float]


def _tree_seed(seed: int, tree_index: int) -> int:
    """splitmix64 of (seed, tree_index); stable across runs and platforms."""
    z = (seed + (tree_index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _best_split(
    x: np.ndarray, y: np.ndarray, idx: np.ndarray, feat_positions: np.ndarray, n_classes: int
) -> tuple[int, float] | None:
    """Max Gini-decrease split among the given feature columns.

    Ties resolve to the lowest feature position (callers pass positions in
    ascending original-index order) and then to the lowest threshold.
    Returns (feature_position, threshold) or None if no column splits.
    """
    n = idx.size
    labels = y[idx]
    best_impurity = np.inf
    best: tuple[int, float] | None = None
    for pos in feat_positions:
        v = x[idx, pos]
        order = np.argsort(v, kind="stable")
        sv = v[order]
        boundaries = np.nonzero(sv[1:] != sv[:-1])[0]
        if boundaries.size == 0:
            continue
        onehot = np.zeros((n, n_classes), dtype=np.float64)
        onehot[np.arange(n), labels[order]] = 1.0
        cum = np.cumsum(onehot, axis=0)
        total = cum[-1]
        nl = (boundaries + 1).astype(np.float64)
        nr = n - nl
        cl = cum[boundaries]
        cr = total - cl
        gini_l = 1.0 - np.sum((cl / nl[:, None]) ** 2, axis=1)
        gini_r = 1.0 - np.sum((cr / nr[:, None]) ** 2, axis=1)
        weighted = (nl * gini_l + nr * gini_r) / n
        j = int(np.argmin(weighted))  # first minimum -> lowest threshold
        if weighted[j] < best_impurity - 1e-15:
            b = boundaries[j]
            thr = (sv[b] + sv[b + 1]) / 2.0
            if thr >= sv[b + 1]:  # midpoint rounded up between adjacent floats
                thr = sv[b]
            best_impurity = weighted[j]
            best = (int(pos), float(thr))
    return best


def _grow_tree(
    x: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    n_classes: int,
    params: ForestParams,
    m: int,
) -> _Tree:
    n_samples, k = x.shape
    boot = rng.integers(0, n_samples, size=n_samples)

    features: list[int] = []
    thresholds: list[float] = []
    lefts: list[int] = []
    rights: list[int] = []
    hists: list[np.ndarray] = []

    def make_leaf(idx: np.ndarray) -> int:
        node = len(features)
        features.append(-1)
        thresholds.append(0.0)
        lefts.append(-1)
        rights.append(-1)
        hists.append(np.bincount(y[idx], minlength=n_classes).astype(np.uint32))
        return node

    # (indices, depth, parent, is_left); explicit stack keeps deep trees safe
    root_idx = np.asarray(boot)
    stack = [(root_idx, 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        labels = y[idx]
        pure = labels.min() == labels.max()
        stop = (
            pure
            or idx.size < params.min_samples_split
            or (params.max_depth is not None and depth >= params.max_depth)
        )
        node = -1
        if not stop:
            # walk a fresh permutation, keeping the first m columns that still
            # vary within this node; falls through to the rest when fewer vary
            perm = rng.permutation(k)
            chosen: list[int] = []
            for pos in perm:
                col = x[idx, pos]
                if col.min() != col.max():
                    chosen.append(int(pos))
                    if len(chosen) == m:
                        break
            if not chosen:
                stop = True
            else:
                split = _best_split(x, y, idx, np.sort(chosen), n_classes)
                if split is None:
                    stop = True
                else:
                    pos, thr = split
                    node = len(features)
                    features.append(pos)
                    thresholds.append(thr)
                    lefts.append(-1)
                    rights.append(-1)
                    hists.append(np.zeros(n_classes, dtype=np.uint32))
                    mask = x[idx, pos] <= thr
                    stack.append((idx[~mask], depth + 1, node, False))
                    stack.append((idx[mask], depth + 1, node, True))
        if stop:
            node = make_leaf(idx)
        if parent >= 0:
            if is_left:
                lefts[parent] = node
            else:
                rights[parent] = node

    return _Tree(
        feature=np.array(features, dtype=np.int32),
        threshold=np.array(thresholds, dtype=np.float64),
        left=np.array(lefts, dtype=np.int32),
        right=np.array(rights, dtype=np.int32),
        hist=np.vstack(hists).astype(np.uint32),
    )


def train(
    vectors: Sequence[FeatureVector], selection: FeatureSelection, params: ForestParams
) -> ForestModel:
    """Fit one bootstrap tree per params.n_trees over the selected features."""
    if not vectors:
        raise ValueError("no training vectors")
    labels = [v.label for v in vectors]
    if any(lab is None for lab in labels):
        raise ValueError("all training vectors must be labeled")
    class_list = sorted(set(labels))  # type: ignore[arg-type]
    if len(class_list) < 2:
        raise ValueError("training requires at least 2 classes")
    arity = vectors[0].values.size
    x_full = np.empty((len(vectors), arity))
    for i, v in enumerate(vectors):
        if v.values.size != arity:
            raise ValueError(f"vector {i} arity {v.values.size} != {arity}")
        x_full[i] = v.values
    sel = sorted(selection.selected)
    if not sel or sel[0] < 0 or sel[-1] >= arity:
        raise ValueError("selection indices out of range")
    class_index = {c: i for i, c in enumerate(class_list)}
    y = np.array([class_index[lab] for lab in labels], dtype=np.int64)
    x = np.ascontiguousarray(x_full[:, sel])

    k = len(sel)
    m = params.features_per_split if params.features_per_split is not None else max(1, int(np.sqrt(k)))
    if not 1 <= m <= k:
        raise ValueError(f"features_per_split must be in 1..{k}")
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if params.min_samples_split < 2:
        raise ValueError("min_samples_split must be >= 2")

    trees = []
    for t in range(params.n_trees):
        rng = np.random.Generator(np.random.PCG64(_tree_seed(params.seed, t)))
        tree = _grow_tree(x, y, rng, len(class_list), params, m)
        # positions -> original feature indices
        internal = tree.feature >= 0
        tree.feature[internal] = np.array(sel, dtype=np.int32)[tree.feature[internal]]
        trees.append(tree)
    return ForestModel(
        trees=trees, class_list=class_list, selection=selection, arity=arity, params=params
    )


def _tree_leaf_classes(tree: _Tree, x: np.ndarray) -> np.ndarray:
    cur = np.zeros(x.shape[0], dtype=np.int32)
    while True:
        feats = tree.feature[cur]
        active = np.nonzero(feats >= 0)[0]
        if active.size == 0:
            break
        node = cur[active]
        go_left = x[active, feats[active]] <= tree.threshold[node]
        cur[active] = np.where(go_left, tree.left[node], tree.right[node])
    return tree.leaf_class[cur]


def predict_matrix(model: ForestModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(predicted class indices, vote fraction matrix) for a sample matrix."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.arity:
        raise ValueError(f"expected shape (n, {model.arity}), got {x.shape}")
    n_classes = len(model.class_list)
    votes = np.zeros((x.shape[0], n_classes))
    for tree in model.trees:
        votes[np.arange(x.shape[0]), _tree_leaf_classes(tree, x)] += 1
    fractions = votes / len(model.trees)
    return np.argmax(fractions, axis=1), fractions


def predict(model: ForestModel, vector: FeatureVector | np.ndarray) -> ActivityPrediction:
    """Majority vote over the forest for a single feature vector."""
    if isinstance(vector, FeatureVector):
        values = vector.values
        player = vector.subject_or_player
        ref = vector.window_ref
    else:
        values = np.asarray(vector, dtype=float)
        player = ""
        ref = (0.0, 0.0)
    if values.size != model.arity:
        raise ValueError(f"vector arity {values.size} != model arity {model.arity}")
    pred, fractions = predict_matrix(model, values.reshape(1, -1))
    return ActivityPrediction(
        player_id=player,
        window_ref=ref,
        predicted_class=model.class_list[int(pred[0])],
        vote_fractions={c: float(fractions[0, i]) for i, c in enumerate(model.class_list)},
    )


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise FormatError(
                f"truncated model payload at offset {self.offset}", offset=self.offset
            )
        out = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return out

    def take_bytes(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise FormatError(
                f"truncated model payload at offset {self.offset}", offset=self.offset
            )
        out = self.data[self.offset : self.offset + size]
        self.offset += size
        return out


def serialize(model: ForestModel) -> bytes:
    """Model file: magic FLF1, version u16, little-endian payload.

    Layout after the header: class count u32 and per-class (u16 length +
    utf-8 name); arity u32; selection as score count u32 + f64 scores +
    selected count u32 + u32 indices; params as n_trees u32, has_max_depth
    u8, max_depth u32, min_samples_split u32, features_per_split u32,
    seed i64; tree count u32; each tree as node count u32 followed by node
    records (kind u8: 0 = internal with feature u32, threshold f64, left
    u32, right u32; 1 = leaf with one u32 count per class).
    """
    parts = [_MAGIC, struct.pack("<H", _VERSION)]
    parts.append(struct.pack("<I", len(model.class_list)))
    for c in model.class_list:
        raw = c.encode()
        parts.append(struct.pack("<H", len(raw)) + raw)
    parts.append(struct.pack("<I", model.arity))
    scores = np.asarray(model.selection.scores, dtype="<f8")
    parts.append(struct.pack("<I", scores.size) + scores.tobytes())
    parts.append(struct.pack("<I", len(model.selection.selected)))
    parts.append(np.array(model.selection.selected, dtype="<u4").tobytes())
    p = model.params
    parts.append(
        struct.pack(
            "<IBIIIq",
            p.n_trees,
            1 if p.max_depth is not None else 0,
            p.max_depth or 0,
            p.min_samples_split,
            p.features_per_split or 0,
            p.seed,
        )
    )
    parts.append(struct.pack("<I", len(model.trees)))
    n_classes = len(model.class_list)
    for tree in model.trees:
        parts.append(struct.pack("<I", tree.feature.size))
        for i in range(tree.feature.size):
            if tree.feature[i] >= 0:
                parts.append(
                    struct.pack(
                        "<BIdII",
                        0,
                        tree.feature[i],
                        tree.threshold[i],
                        tree.left[i],
                        tree.right[i],
                    )
                )
            else:
                parts.append(struct.pack("<B", 1))
                parts.append(tree.hist[i].astype("<u4").tobytes())
    return b"".join(parts)


def deserialize(data: bytes) -> ForestModel:
    r = _Reader(data)
    if r.take_bytes(4) != _MAGIC:
        raise FormatError("bad magic, not a model file", offset=0)
    (version,) = r.take("<H")
    if version != _VERSION:
        raise FormatError(f"unsupported model version {version}", offset=4)
    (n_classes,) = r.take("<I")
    class_list = []
    for _ in range(n_classes):
        (length,) = r.take("<H")
        class_list.append(r.take_bytes(length).decode())
    (arity,) = r.take("<I")
    (d,) = r.take("<I")
    scores = np.frombuffer(r.take_bytes(d * 8), dtype="<f8").copy()
    (k,) = r.take("<I")
    selected = np.frombuffer(r.take_bytes(k * 4), dtype="<u4")
    selection = FeatureSelection(scores=scores, selected=[int(i) for i in selected])
    n_trees, has_depth, max_depth, min_split, fps, seed = r.take("<IBIIIq")
    params = ForestParams(
        n_trees=n_trees,
        max_depth=max_depth if has_depth else None,
        min_samples_split=min_split,
        features_per_split=fps or None,
        seed=seed,
    )
    (tree_count,) = r.take("<I")
    if tree_count != n_trees:
        raise FormatError(f"tree count {tree_count} != declared {n_trees}", offset=r.offset - 4)
    trees = []
    for _ in range(tree_count):
        (n_nodes,) = r.take("<I")
        feature = np.full(n_nodes, -1, dtype=np.int32)
        threshold = np.zeros(n_nodes)
        left = np.full(n_nodes, -1, dtype=np.int32)
        right = np.full(n_nodes, -1, dtype=np.int32)
        hist = np.zeros((n_nodes, n_classes), dtype=np.uint32)
        for i in range(n_nodes):
            (kind,) = r.take("<B")
            if kind == 0:
                feature[i], threshold[i], left[i], right[i] = r.take("<IdII")
            elif kind == 1:
                hist[i] = np.frombuffer(r.take_bytes(n_classes * 4), dtype="<u4")
            else:
                raise FormatError(f"unknown node kind {kind}", offset=r.offset - 1)
        trees.append(_Tree(feature=feature, threshold=threshold, left=left, right=right, hist=hist))
    if r.offset != len(data):
        raise FormatError(f"{len(data) - r.offset} trailing bytes", offset=r.offset)
    return ForestModel(
        trees=trees, class_list=class_list, selection=selection, arity=arity, params=params
    )
