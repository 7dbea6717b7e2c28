"""Client populations: synthetic generation, CSV ingestion, opt-in
selection, and server-side embedding tables for sparse features.

The synthetic generator builds a multi-segment population: every user
belongs to a latent segment with its own teacher weight vector, features
are standard normal, and labels follow the segment teacher through a
sigmoid. Segment structure is what a single global model cannot capture
and a per-cluster ensemble can.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import impl as _impl
from .errors import InvalidConfigError, SchemaError
from .nn import build_mlp
from .seeding import derive_seed

EMBED_DIM = 32


@dataclass
class Example:
    dense: np.ndarray
    sparse: list[tuple[int, int]]  # (feature_slot, category_id)
    label: int
    user_id: object
    timestamp: int


@dataclass
class ClientDataset:
    """One simulated user: the unit of FL participation and DP adjacency."""

    user_id: object
    examples: list[Example]
    static_features: dict[str, object] = field(default_factory=dict)


@dataclass
class EmbeddingTable:
    """Per-slot embedding matrices (cardinality x 32)."""

    slots: list[np.ndarray]
    frozen: bool = False

    def __post_init__(self):
        for mat in self.slots:
            if mat.ndim != 2 or mat.shape[1] != EMBED_DIM:
                raise InvalidConfigError(
                    f"embedding matrices must be (cardinality, {EMBED_DIM})")

    @classmethod
    def empty(cls) -> "EmbeddingTable":
        return cls(slots=[], frozen=True)

    @property
    def num_slots(self) -> int:
        return len(self.slots)


@dataclass
class SyntheticSpec:
    num_users: int
    num_segments: int
    dense_dim: int
    examples_per_user: tuple[int, int]
    teacher_scale: float = 1.0
    label_noise: float = 0.0
    seed: int = 0
    segment_noise: float = 0.25  # stddev of the jitter on the segment attribute

    def __post_init__(self):
        if self.num_users < 1 or self.num_segments < 1 or self.dense_dim < 1:
            raise InvalidConfigError("num_users, num_segments, dense_dim must be >= 1")
        lo, hi = self.examples_per_user
        if lo < 1 or hi < lo:
            raise InvalidConfigError(f"bad examples_per_user range: {self.examples_per_user}")
        if not 0.0 <= self.label_noise < 0.5:
            raise InvalidConfigError(f"label_noise must lie in [0, 0.5), got {self.label_noise}")
        if self.segment_noise < 0.0:
            raise InvalidConfigError("segment_noise must be nonnegative")


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def generate_synthetic(spec: SyntheticSpec, teachers=None):
    """Returns (population, ground_truth_segments: user_id -> segment).

    Each user draws a uniform latent segment; labels are
    Bernoulli(sigmoid(w_segment . x)) flipped at the label-noise rate.
    Static features carry the true segment id plus a jittered copy of it
    for imperfect-clustering experiments, and the user's click ratio.
    Pure function of (spec, teachers).
    """
    rng = np.random.default_rng(spec.seed)
    if teachers is None:
        teachers = rng.normal(0.0, spec.teacher_scale,
                              size=(spec.num_segments, spec.dense_dim))
    else:
        teachers = np.asarray(teachers, dtype=np.float64)
        if teachers.shape != (spec.num_segments, spec.dense_dim):
            raise InvalidConfigError(
                f"teachers must have shape ({spec.num_segments}, {spec.dense_dim})")
    lo, hi = spec.examples_per_user
    population = []
    segments = {}
    for u in range(spec.num_users):
        seg = int(rng.integers(spec.num_segments))
        n_ex = int(rng.integers(lo, hi + 1))
        X = rng.standard_normal((n_ex, spec.dense_dim))
        p = _sigmoid(X @ teachers[seg])
        labels = rng.random(n_ex) < p
        if spec.label_noise > 0.0:
            labels ^= rng.random(n_ex) < spec.label_noise
        noisy_seg = seg + float(rng.normal(0.0, spec.segment_noise))
        examples = [Example(dense=X[i], sparse=[], label=int(labels[i]),
                            user_id=u, timestamp=i)
                    for i in range(n_ex)]
        population.append(ClientDataset(
            user_id=u,
            examples=examples,
            static_features={"segment": seg,
                             "segment_noisy": noisy_seg,
                             "click_ratio": float(labels.mean())},
        ))
        segments[u] = seg
    return population, segments


@dataclass
class CsvSchema:
    """Column layout: user_id, timestamp, label, dense_0.., sparse_0..

    Sparse cardinalities come from the experiment config, not the file.
    """

    dense_dim: int
    sparse_cardinalities: list[int] = field(default_factory=list)

    def header(self) -> list[str]:
        return (["user_id", "timestamp", "label"]
                + [f"dense_{i}" for i in range(self.dense_dim)]
                + [f"sparse_{j}" for j in range(len(self.sparse_cardinalities))])


def load_csv(path, schema: CsvSchema):
    """Load a population CSV; returns (clients, rejected_row_count).

    Rows group by user id and sort by timestamp within each user;
    malformed rows (bad label, non-finite dense value, category id out of
    range) are rejected and counted rather than raised.
    """
    path = Path(path)
    expected = schema.header()
    by_user: dict[str, list[Example]] = {}
    order: list[str] = []
    rejected = 0
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {expected}")
        if header != expected:
            raise SchemaError(f"{path}: header {header} does not match schema {expected}")
        n_dense = schema.dense_dim
        cards = schema.sparse_cardinalities
        for row in reader:
            if len(row) != len(expected):
                rejected += 1
                continue
            try:
                uid = row[0]
                ts = int(row[1])
                label = int(row[2])
                if label not in (0, 1):
                    raise ValueError
                dense = np.array([float(v) for v in row[3:3 + n_dense]])
                if not np.all(np.isfinite(dense)):
                    raise ValueError
                sparse = []
                for j, v in enumerate(row[3 + n_dense:]):
                    cat = int(v)
                    if not 0 <= cat < cards[j]:
                        raise ValueError
                    sparse.append((j, cat))
            except ValueError:
                rejected += 1
                continue
            if uid not in by_user:
                by_user[uid] = []
                order.append(uid)
            by_user[uid].append(Example(dense, sparse, label, uid, ts))
    clients = []
    for uid in order:
        examples = sorted(by_user[uid], key=lambda e: e.timestamp)
        labels = np.array([e.label for e in examples], dtype=np.float64)
        clients.append(ClientDataset(uid, examples,
                                     {"click_ratio": float(labels.mean())}))
    return clients, rejected


def select_optin(population, fraction: float, seed: int):
    """Seeded uniform sample without replacement; returns (optin, rest)."""
    if not 0.0 < fraction <= 1.0:
        raise InvalidConfigError(f"fraction must lie in (0, 1], got {fraction}")
    n = len(population)
    if n == 0:
        return [], []
    k = int(round(fraction * n))
    rng = np.random.default_rng(seed)
    chosen = set(rng.choice(n, size=k, replace=False).tolist())
    optin = [population[i] for i in range(n) if i in chosen]
    rest = [population[i] for i in range(n) if i not in chosen]
    return optin, rest


def init_embedding_table(schema: CsvSchema, seed: int) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    slots = [rng.normal(0.0, 0.1, size=(card, EMBED_DIM))
             for card in schema.sparse_cardinalities]
    return EmbeddingTable(slots=slots, frozen=False)


def pretrain_embeddings(optin, schema: CsvSchema, head_decay_k: int = 2,
                        epochs: int = 1, seed: int = 0,
                        learning_rate: float = 0.01) -> EmbeddingTable:
    """Train embeddings jointly with a throwaway dense head, then freeze.

    One AdaGrad pass (lr 0.01 by default) over all opt-in examples;
    embedding rows never looked up stay at their seeded initialization.
    """
    if not schema.sparse_cardinalities:
        raise InvalidConfigError("no sparse slots declared for embedding pretraining")
    if not optin:
        raise ValueError("opt-in set must be nonempty")
    table = init_embedding_table(schema, derive_seed(seed, "embed-init"))
    width = schema.dense_dim + EMBED_DIM * table.num_slots
    head = build_mlp(width, head_decay_k, derive_seed(seed, "embed-head"))
    dims = head.dims_array()
    params = head.params.copy()
    head_acc = np.zeros_like(params)
    slot_acc = [np.zeros_like(mat) for mat in table.slots]

    flat = [ex for client in optin for ex in client.examples]
    rng = np.random.default_rng(derive_seed(seed, "embed-order"))
    eps = 1e-10
    for _ in range(epochs):
        for i in rng.permutation(len(flat)):
            ex = flat[i]
            x = _featurize_unchecked(ex, table, schema.dense_dim)
            grad, dx, _ = _impl.grad_with_input(dims, params, x, float(ex.label))
            head_acc += grad * grad
            params -= learning_rate * grad / (np.sqrt(head_acc) + eps)
            for pos, (slot, cat) in enumerate(ex.sparse):
                g = dx[schema.dense_dim + pos * EMBED_DIM:
                       schema.dense_dim + (pos + 1) * EMBED_DIM]
                acc = slot_acc[slot][cat]
                acc += g * g
                table.slots[slot][cat] -= learning_rate * g / (np.sqrt(acc) + eps)
    table.frozen = True
    return table


def _featurize_unchecked(example: Example, table: EmbeddingTable, dense_dim: int):
    if not example.sparse:
        return np.ascontiguousarray(example.dense, dtype=np.float64)
    parts = [np.asarray(example.dense, dtype=np.float64)]
    for slot, cat in example.sparse:
        parts.append(table.slots[slot][cat])
    return np.concatenate(parts)


def featurize(example: Example, table: EmbeddingTable) -> np.ndarray:
    """Dense features followed by each slot's 32-dim embedding row.

    Output width is dense_dim + 32 * num_slots; requires a frozen table.
    """
    if not table.frozen:
        raise InvalidConfigError("featurize requires a frozen embedding table")
    for slot, cat in example.sparse:
        if not 0 <= slot < table.num_slots:
            raise SchemaError(f"unknown sparse slot {slot}")
        if not 0 <= cat < table.slots[slot].shape[0]:
            raise SchemaError(f"category {cat} out of range for slot {slot}")
    return _featurize_unchecked(example, table, len(example.dense))


def client_matrix(client: ClientDataset, table: EmbeddingTable | None = None):
    """Stack a client's featurized examples into (X, y) float64 arrays."""
    table = table if table is not None else EmbeddingTable.empty()
    X = np.ascontiguousarray([featurize(ex, table) for ex in client.examples])
    y = np.asarray([float(ex.label) for ex in client.examples])
    return X, y


def split_eval(population, rule: str = "user", fraction: float = 0.2,
               seed: int = 0):
    """Split into (train population, held-out examples).

    rule="user": a seeded fraction of users is held out entirely.
    rule="timestamp": each user's latest fraction of examples is held out.
    """
    if rule not in ("user", "timestamp"):
        raise InvalidConfigError(f"unknown eval split rule: {rule!r}")
    if not 0.0 < fraction < 1.0:
        raise InvalidConfigError(f"eval fraction must lie in (0, 1), got {fraction}")
    if rule == "user":
        n = len(population)
        rng = np.random.default_rng(seed)
        k = int(round(fraction * n))
        held = set(rng.choice(n, size=k, replace=False).tolist())
        train = [population[i] for i in range(n) if i not in held]
        test = [ex for i in sorted(held) for ex in population[i].examples]
        return train, test
    train = []
    test = []
    for client in population:
        examples = sorted(client.examples, key=lambda e: e.timestamp)
        cut = max(1, len(examples) - int(round(fraction * len(examples))))
        train.append(ClientDataset(client.user_id, examples[:cut],
                                   dict(client.static_features)))
        test.extend(examples[cut:])
    return train, test


def write_population_csv(population, schema: CsvSchema, path) -> None:
    """Inverse of load_csv for the example-level data."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(schema.header())
        for client in population:
            for ex in client.examples:
                row = [client.user_id, ex.timestamp, ex.label]
                row += [repr(float(v)) for v in ex.dense]
                row += [cat for _, cat in ex.sparse]
                writer.writerow(row)


def write_static_csv(population, path) -> None:
    """Sidecar table of per-user static features (wide format)."""
    keys = sorted({k for c in population for k in c.static_features})
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id"] + keys)
        for client in population:
            writer.writerow([client.user_id]
                            + [client.static_features.get(k, "") for k in keys])


def load_static_csv(population, path) -> None:
    """Attach static features from a sidecar file to an existing population."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "user_id":
            raise SchemaError(f"{path}: static feature file must start with user_id")
        keys = header[1:]
        rows = {row[0]: row[1:] for row in reader}
    for client in population:
        row = rows.get(str(client.user_id))
        if row is None:
            continue
        for key, value in zip(keys, row):
            if value == "":
                continue
            try:
                client.static_features[key] = float(value)
            except ValueError:
                client.static_features[key] = value
