"""Anisotropic isolation forest: construction, path lengths, scoring, and
model serialization.

Trees partition data with random hyperplanes: a point x goes left when
(x - p)' w <= 0, where the normal w is drawn from a configurable Gaussian
or Gaussian-mixture distribution (then extension-masked) and the intercept
p is uniform over the bounding box of the data reaching the node. The
boundary tie (projection exactly zero) goes left; ties form a measure-zero
set. Anomaly scores follow 2^(-E(h)/c(m)) with m the subsample size.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    DegenerateNormal,
    DimensionMismatch,
    EmptyInput,
    SubsampleTooLarge,
    ValidationError,
)
from .sampling import (
    FULL_EXTENSION,
    Distribution,
    ExtensionLevel,
    MASK_RETRY_LIMIT,
    RngStream,
    apply_extension_mask,
    distribution_from_dict,
    distribution_to_dict,
    extension_from_json,
    extension_to_json,
    sample_intercept,
)

logger = logging.getLogger(__name__)

# Truncated Euler-Mascheroni constant used by the path-length normalization.
EULER_MASCHERONI = 0.5772156649

FOREST_FORMAT_VERSION = 1
FOREST_RECORD_KIND = "anisoforest/forest"


@dataclass(frozen=True)
class LeafNode:
    """External node; size counts the training points terminating here."""

    size: int


@dataclass(eq=False)
class SplitNode:
    normal: np.ndarray
    intercept: np.ndarray
    left: Node
    right: Node


Node = LeafNode | SplitNode


@dataclass(eq=False)
class Tree:
    root: Node
    height_limit: int


@dataclass(eq=False)
class Forest:
    trees: list[Tree]
    subsample_size: int
    distribution: Distribution
    extension: ExtensionLevel
    master_seed: int
    leaf_adjustment: bool

    @property
    def dim(self) -> int:
        return self.distribution.dim

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def height_limit(self) -> int:
        return self.trees[0].height_limit


@dataclass(eq=False)
class ScoreReport:
    """Per-point average path length E(h(x)) and anomaly score s(x).

    Scores from fitted forests lie strictly inside (0, 1); hand-assembled
    degenerate forests (all trees a single leaf, no adjustment) reach 1.
    """

    mean_path_lengths: np.ndarray
    scores: np.ndarray


def c_factor(n: int) -> float:
    """Expected path length of an unsuccessful binary-search-tree search.

    2 * H(n - 1) - 2 * (n - 1) / n with H(m) = ln(m) + 0.5772156649;
    zero for n in {0, 1}.
    """
    if n < 0:
        raise ValidationError(f"n must be non-negative, got {n}")
    if n < 2:
        return 0.0
    harmonic = math.log(n - 1) + EULER_MASCHERONI
    return 2.0 * harmonic - 2.0 * (n - 1) / n


def _height_limit(subsample_size: int) -> int:
    # ceil(log2(c)) in exact integer arithmetic
    return (subsample_size - 1).bit_length()


def _draw_split_normal(
    distribution: Distribution, extension: ExtensionLevel, rng: RngStream
) -> np.ndarray | None:
    """Draw and mask a split normal.

    A degenerate result (all survivors zero) triggers one mask redraw, then
    a fresh normal; after MASK_RETRY_LIMIT degenerate draws the caller gets
    None and the split aborts to a leaf.
    """
    failures = 0
    while failures < MASK_RETRY_LIMIT:
        omega = distribution.sample(rng)
        try:
            return apply_extension_mask(omega, extension, rng)
        except DegenerateNormal:
            failures += 1
        if failures >= MASK_RETRY_LIMIT:
            break
        try:
            return apply_extension_mask(omega, extension, rng)
        except DegenerateNormal:
            failures += 1
    return None


def build_tree(
    data: np.ndarray,
    depth: int,
    height_limit: int,
    distribution: Distribution,
    rng: RngStream,
    extension: ExtensionLevel = FULL_EXTENSION,
) -> Node:
    """Recursively build one isolation tree over the rows of ``data``.

    Per-node stream consumption order: normal draw, extension mask, then
    intercept. Leaves appear at the height limit or when one point remains.
    """
    n = data.shape[0]
    if depth >= height_limit or n <= 1:
        return LeafNode(n)
    omega = _draw_split_normal(distribution, extension, rng)
    if omega is None:
        return LeafNode(n)
    omega.flags.writeable = False
    intercept = sample_intercept(data.min(axis=0), data.max(axis=0), rng)
    intercept.flags.writeable = False
    left_mask = (data - intercept) @ omega <= 0.0
    return SplitNode(
        normal=omega,
        intercept=intercept,
        left=build_tree(data[left_mask], depth + 1, height_limit, distribution, rng, extension),
        right=build_tree(data[~left_mask], depth + 1, height_limit, distribution, rng, extension),
    )


def fit(
    data,
    t: int,
    c: int,
    distribution: Distribution,
    extension: ExtensionLevel = FULL_EXTENSION,
    seed: int = 0,
    leaf_adjustment: bool = True,
    n_threads: int = 1,
) -> Forest:
    """Fit t isolation trees, each on a uniform without-replacement
    subsample of size c, with height limit ceil(log2(c)).

    Tree i consumes its own stream (seed, stream_id=i): first the subsample
    indices, then per-node draws. Serial and parallel builds are therefore
    bitwise identical.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ValidationError(f"expected a 2D dataset, got shape {x.shape}")
    n, d = x.shape
    if t < 1:
        raise ValidationError(f"tree count must be >= 1, got {t}")
    if c < 2:
        raise ValidationError(f"subsample size must be >= 2, got {c}")
    if c > n:
        raise SubsampleTooLarge(f"subsample size {c} exceeds dataset size {n}")
    if distribution.dim != d:
        raise DimensionMismatch(
            f"distribution dimension {distribution.dim} does not match data dimension {d}"
        )
    if extension.effective_k(d) > d - 1:
        raise DimensionMismatch(
            f"extension level k={extension.k} exceeds d-1={d - 1}"
        )
    limit = _height_limit(c)

    def build_one(i: int) -> Tree:
        rng = RngStream(seed, stream_id=i)
        idx = rng.choice(n, c)
        return Tree(build_tree(x[idx], 0, limit, distribution, rng, extension), limit)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            trees = list(pool.map(build_one, range(t)))
    else:
        trees = [build_one(i) for i in range(t)]
    logger.info("fitted forest: t=%d c=%d l=%d d=%d seed=%d", t, c, limit, d, seed)
    return Forest(trees, c, distribution, extension, seed, leaf_adjustment)


def path_length(x, tree: Tree, leaf_adjustment: bool = True) -> float:
    """Edges traversed from the root to the leaf reached by x.

    With leaf adjustment on, leaves holding s > 1 points add c_factor(s),
    the expected extra depth had the tree kept splitting.
    """
    point = np.asarray(x, dtype=float)
    node = tree.root
    depth = 0
    while isinstance(node, SplitNode):
        node = node.left if (point - node.intercept) @ node.normal <= 0.0 else node.right
        depth += 1
    if leaf_adjustment and node.size > 1:
        return depth + c_factor(node.size)
    return float(depth)


def _tree_path_lengths(tree: Tree, x: np.ndarray, leaf_adjustment: bool) -> np.ndarray:
    """Path lengths of every row of x through one tree (batch traversal)."""
    out = np.empty(x.shape[0])
    stack: list[tuple[Node, np.ndarray, int]] = [(tree.root, np.arange(x.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if isinstance(node, LeafNode):
            extra = c_factor(node.size) if leaf_adjustment and node.size > 1 else 0.0
            out[idx] = depth + extra
        else:
            left = (x[idx] - node.intercept) @ node.normal <= 0.0
            left_idx = idx[left]
            right_idx = idx[~left]
            if left_idx.size:
                stack.append((node.left, left_idx, depth + 1))
            if right_idx.size:
                stack.append((node.right, right_idx, depth + 1))
    return out


def score(x, forest: Forest) -> float:
    """Anomaly score 2^(-E(h(x)) / c_factor(subsample size))."""
    point = np.asarray(x, dtype=float)
    if point.shape != (forest.dim,):
        raise DimensionMismatch(
            f"point of shape {point.shape} does not match forest dimension {forest.dim}"
        )
    depths = np.array(
        [path_length(point, tree, forest.leaf_adjustment) for tree in forest.trees]
    )
    mean_depth = float(depths.sum() / forest.n_trees)
    return float(np.exp2(-mean_depth / c_factor(forest.subsample_size)))


def score_all(data, forest: Forest, n_threads: int = 1) -> ScoreReport:
    """Vectorized, order-preserving scores for every row of ``data``."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ValidationError(f"expected a 2D dataset, got shape {x.shape}")
    if x.shape[0] == 0:
        raise EmptyInput("no rows to score")
    if x.shape[1] != forest.dim:
        raise DimensionMismatch(
            f"data dimension {x.shape[1]} does not match forest dimension {forest.dim}"
        )

    def one(tree: Tree) -> np.ndarray:
        return _tree_path_lengths(tree, x, forest.leaf_adjustment)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            per_tree = list(pool.map(one, forest.trees))
    else:
        per_tree = [one(tree) for tree in forest.trees]
    total = np.zeros(x.shape[0])
    for depths in per_tree:  # fixed tree order keeps sums bitwise reproducible
        total += depths
    mean_depths = total / forest.n_trees
    scores = np.exp2(-mean_depths / c_factor(forest.subsample_size))
    return ScoreReport(mean_path_lengths=mean_depths, scores=scores)


# --- serialization ---------------------------------------------------------
#
# A forest is persisted as a JSON document:
#   {
#     "format_version": 1,
#     "kind": "anisoforest/forest",
#     "dim", "tree_count", "subsample_size", "height_limit",
#     "master_seed", "leaf_adjustment",
#     "extension": null (full) | int k,
#     "distribution": {"kind": "gaussian", "cov": [[...]]}
#                   | {"kind": "mixture", "scale": s,
#                      "components": [{"weight": w, "cov": [[...]]}, ...]},
#     "trees": [{"nodes": [node, ...]}, ...]
#   }
# Each tree is a flat node list; index 0 is the root. A node is either
#   {"leaf": size}
# or
#   {"normal": [...], "intercept": [...], "left": i, "right": j}
# with i/j indexing the same list. Floats are written with full round-trip
# precision, so reloading a model reproduces scores bitwise.


def _tree_to_nodes(tree: Tree) -> list:
    nodes: list = []

    def walk(node: Node) -> int:
        slot = len(nodes)
        nodes.append(None)
        if isinstance(node, LeafNode):
            nodes[slot] = {"leaf": node.size}
        else:
            entry = {
                "normal": node.normal.tolist(),
                "intercept": node.intercept.tolist(),
            }
            nodes[slot] = entry
            entry["left"] = walk(node.left)
            entry["right"] = walk(node.right)
        return slot

    walk(tree.root)
    return nodes


def _node_from_entry(nodes: list, index, where: str) -> Node:
    if not isinstance(index, int) or not 0 <= index < len(nodes):
        raise ConfigError(f"{where}: bad node index {index!r}")
    entry = nodes[index]
    if not isinstance(entry, dict):
        raise ConfigError(f"{where}: node {index} is not an object")
    if "leaf" in entry:
        size = entry["leaf"]
        if not isinstance(size, int) or size < 0:
            raise ConfigError(f"{where}: node {index} has invalid leaf size {size!r}")
        return LeafNode(size)
    try:
        normal = np.asarray(entry["normal"], dtype=float)
        intercept = np.asarray(entry["intercept"], dtype=float)
        left = entry["left"]
        right = entry["right"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: node {index} is malformed: {exc}") from exc
    normal.flags.writeable = False
    intercept.flags.writeable = False
    return SplitNode(
        normal=normal,
        intercept=intercept,
        left=_node_from_entry(nodes, left, where),
        right=_node_from_entry(nodes, right, where),
    )


def forest_to_record(forest: Forest) -> dict:
    """JSON-ready dict describing a fitted forest (schema above)."""
    return {
        "format_version": FOREST_FORMAT_VERSION,
        "kind": FOREST_RECORD_KIND,
        "dim": forest.dim,
        "tree_count": forest.n_trees,
        "subsample_size": forest.subsample_size,
        "height_limit": forest.height_limit,
        "master_seed": forest.master_seed,
        "leaf_adjustment": forest.leaf_adjustment,
        "extension": extension_to_json(forest.extension),
        "distribution": distribution_to_dict(forest.distribution),
        "trees": [{"nodes": _tree_to_nodes(tree)} for tree in forest.trees],
    }


def forest_from_record(record: dict) -> Forest:
    if not isinstance(record, dict):
        raise ConfigError("model record must be an object")
    version = record.get("format_version")
    if version != FOREST_FORMAT_VERSION:
        raise ConfigError(
            f"unsupported model format version {version!r} (expected {FOREST_FORMAT_VERSION})"
        )
    if record.get("kind") != FOREST_RECORD_KIND:
        raise ConfigError(f"not a forest record: kind={record.get('kind')!r}")
    distribution = distribution_from_dict(record.get("distribution"))
    extension = extension_from_json(record.get("extension"))
    try:
        subsample = int(record["subsample_size"])
        limit = int(record["height_limit"])
        seed = int(record["master_seed"])
        adjust = bool(record["leaf_adjustment"])
        raw_trees = record["trees"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"model record is missing or has malformed fields: {exc}") from exc
    if not isinstance(raw_trees, list) or not raw_trees:
        raise ConfigError("model record has no trees")
    trees = []
    for i, raw in enumerate(raw_trees):
        nodes = raw.get("nodes") if isinstance(raw, dict) else None
        if not isinstance(nodes, list) or not nodes:
            raise ConfigError(f"trees[{i}]: expected a non-empty node list")
        trees.append(Tree(_node_from_entry(nodes, 0, f"trees[{i}]"), limit))
    return Forest(trees, subsample, distribution, extension, seed, adjust)


def forest_to_json(forest: Forest) -> str:
    return json.dumps(forest_to_record(forest), separators=(",", ":"))


def save_forest(forest: Forest, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(forest_to_json(forest))
        fh.write("\n")


def load_forest(path) -> Forest:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            record = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return forest_from_record(record)
