"""Vocabulary management, benchmark ingestion, reciprocal augmentation,
filter index, and synthetic pattern-dataset generation.

Datasets are directories holding ``train.txt``, ``valid.txt`` and
``test.txt``, one ``head<TAB>relation<TAB>tail`` triple per line. Graphs are
immutable after construction and safe to share across evaluation workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

SPLIT_FILES = ("train.txt", "valid.txt", "test.txt")
RECIPROCAL_SUFFIX = "_inv"


class ParseError(ValueError):
    """A TSV line that does not have exactly three fields."""


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class Vocab:
    """Bidirectional string <-> id map, ids assigned in first-appearance order."""

    def __init__(self, names: Iterable[str] = ()) -> None:
        self._names: list[str] = []
        self._ids: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        idx = self._ids.get(name)
        if idx is None:
            idx = len(self._names)
            self._names.append(name)
            self._ids[name] = idx
        return idx

    def id(self, name: str) -> int:
        return self._ids[name]

    def name(self, idx: int) -> str:
        return self._names[idx]

    def names(self) -> list[str]:
        return list(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self._names)


@dataclass
class KnowledgeGraph:
    """Integer-coded triple store with train/valid/test splits.

    ``filter_index`` maps (head, relation) to the set of tails occurring in
    any split; after reciprocal augmentation it also carries the mirrored
    (tail, inverse-relation) -> head entries for every split, which is how
    head-corruption evaluation is expressed.
    """

    entities: Vocab
    relations: Vocab
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    filter_index: dict[tuple[int, int], set[int]] = field(repr=False)
    n_raw_relations: int = 0
    reciprocal: bool = False

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def split(self, name: str) -> np.ndarray:
        try:
            return {"train": self.train, "valid": self.valid, "test": self.test}[name]
        except KeyError:
            raise ValueError(f"unknown split {name!r}") from None

    def filtered_tails(self, head: int, relation: int) -> set[int]:
        return self.filter_index.get((head, relation), set())

    def reciprocal_id(self, relation: int) -> int:
        if not self.reciprocal:
            raise ValueError("graph has no reciprocal relations; augment first")
        n = self.n_raw_relations
        return relation + n if relation < n else relation - n


def _code_rows(rows: Sequence[tuple[str, str, str]], entities: Vocab,
               relations: Vocab) -> np.ndarray:
    out = np.empty((len(rows), 3), dtype=np.int64)
    for i, (h, r, t) in enumerate(rows):
        out[i, 0] = entities.add(h)
        out[i, 1] = relations.add(r)
        out[i, 2] = entities.add(t)
    return out


def _build_filter(splits: Iterable[np.ndarray]) -> dict[tuple[int, int], set[int]]:
    index: dict[tuple[int, int], set[int]] = {}
    for arr in splits:
        for h, r, t in arr:
            index.setdefault((int(h), int(r)), set()).add(int(t))
    return index


def from_string_triples(train_rows, valid_rows, test_rows) -> KnowledgeGraph:
    """Build a graph from string triples; vocab order is train, valid, test."""
    if not train_rows:
        raise ValueError("train split is empty")
    entities, relations = Vocab(), Vocab()
    train = _code_rows(train_rows, entities, relations)
    valid = _code_rows(valid_rows, entities, relations)
    test = _code_rows(test_rows, entities, relations)
    return KnowledgeGraph(
        entities=entities,
        relations=relations,
        train=train,
        valid=valid,
        test=test,
        filter_index=_build_filter((train, valid, test)),
        n_raw_relations=len(relations),
        reciprocal=False,
    )


def _parse_tsv(path: Path) -> list[tuple[str, str, str]]:
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ParseError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, "
                    f"got {len(fields)}"
                )
            rows.append((fields[0], fields[1], fields[2]))
    return rows


def load_tsv(dataset_dir: str | Path,
             splits: Sequence[str] = SPLIT_FILES) -> KnowledgeGraph:
    """Load a TSV dataset directory into an integer-coded KnowledgeGraph."""
    dataset_dir = Path(dataset_dir)
    if len(splits) != 3:
        raise ValueError("need exactly three split file names")
    train_rows, valid_rows, test_rows = (
        _parse_tsv(dataset_dir / name) for name in splits
    )
    return from_string_triples(train_rows, valid_rows, test_rows)


def augment_reciprocal(kg: KnowledgeGraph) -> KnowledgeGraph:
    """Double the relation vocabulary and add (t, r_inv, h) for every train triple.

    The filter index is extended with mirrored entries for all three splits
    so that head queries can be evaluated through the inverse relation.
    Calling this on an already-augmented graph is an error.
    """
    if kg.reciprocal:
        raise ValueError("graph already has reciprocal relations")
    n_raw = kg.n_relations
    relations = Vocab(kg.relations.names())
    for name in kg.relations.names():
        inv = name + RECIPROCAL_SUFFIX
        if inv in relations:
            raise ValueError(f"reciprocal name collision for relation {name!r}")
        relations.add(inv)

    def mirrored(arr: np.ndarray) -> np.ndarray:
        out = arr[:, [2, 1, 0]].copy()
        out[:, 1] += n_raw
        return out

    train = np.concatenate([kg.train, mirrored(kg.train)], axis=0)
    index = _build_filter((train, kg.valid, kg.test))
    for arr in (kg.valid, kg.test):
        for h, r, t in arr:
            index.setdefault((int(t), int(r) + n_raw), set()).add(int(h))
    return KnowledgeGraph(
        entities=kg.entities,
        relations=relations,
        train=train,
        valid=kg.valid.copy(),
        test=kg.test.copy(),
        filter_index=index,
        n_raw_relations=n_raw,
        reciprocal=True,
    )


# --------------------------------------------------------------------------
# Synthetic pattern datasets
# --------------------------------------------------------------------------

PATTERN_KINDS = (
    "symmetric",
    "antisymmetric",
    "inverse_pair",
    "composition_triple",
    "hierarchy_tree",
)


@dataclass
class RelationPattern:
    """One relation-pattern block of a SyntheticSpec.

    Exactly which size fields apply depends on ``kind``:

    * symmetric: ``pairs`` for random distinct pairs, or ``cliques`` and
      ``clique_size`` for disjoint all-pairs cliques.
    * antisymmetric: ``edges`` for random one-directional edges, ``chains``
      and ``chain_length`` for disjoint successor chains, or ``orders`` and
      ``order_size`` for disjoint transitive tournaments (every pair of a
      random total order, oriented low to high).
    * inverse_pair: ``pairs`` instances of (h, r1, t) plus (t, r2, h).
    * composition_triple: ``instances`` of (x,r1,y), (y,r2,z), (x,r3,z)
      with instance-disjoint entities so the closure holds exactly.
    * hierarchy_tree: complete ``branching``-ary trees of depth ``depth``
      (``trees`` of them), edges oriented child -> parent.
    """

    kind: str
    pairs: int | None = None
    cliques: int | None = None
    clique_size: int | None = None
    edges: int | None = None
    chains: int | None = None
    chain_length: int | None = None
    orders: int | None = None
    order_size: int | None = None
    instances: int | None = None
    branching: int | None = None
    depth: int | None = None
    trees: int = 1
    name: str | None = None

    def validate(self, n_entities: int) -> None:
        if self.kind not in PATTERN_KINDS:
            raise ValueError(f"unknown pattern kind {self.kind!r}")
        sizes = [v for v in (self.pairs, self.cliques, self.clique_size,
                             self.edges, self.chains, self.chain_length,
                             self.orders, self.order_size, self.instances,
                             self.branching, self.depth, self.trees)
                 if v is not None]
        if any(s < 1 for s in sizes):
            raise ValueError(f"{self.kind}: size parameters must be positive")
        if self.kind == "symmetric":
            if (self.pairs is None) == (self.cliques is None):
                raise ValueError("symmetric needs either pairs or cliques+clique_size")
            if self.cliques is not None:
                if self.clique_size is None or self.clique_size < 2:
                    raise ValueError("clique_size must be >= 2")
                if self.cliques * self.clique_size > n_entities:
                    raise ValueError("cliques exceed entity pool")
            elif self.pairs > n_entities * (n_entities - 1) // 2:
                raise ValueError("more symmetric pairs than distinct entity pairs")
        elif self.kind == "antisymmetric":
            given = [v for v in (self.edges, self.chains, self.orders)
                     if v is not None]
            if len(given) != 1:
                raise ValueError(
                    "antisymmetric needs exactly one of edges, "
                    "chains+chain_length, or orders+order_size")
            if self.chains is not None:
                if self.chain_length is None or self.chain_length < 1:
                    raise ValueError("chain_length must be >= 1")
                if self.chains * (self.chain_length + 1) > n_entities:
                    raise ValueError("chains exceed entity pool")
            elif self.orders is not None:
                if self.order_size is None or self.order_size < 2:
                    raise ValueError("order_size must be >= 2")
                if self.orders * self.order_size > n_entities:
                    raise ValueError("orders exceed entity pool")
            elif self.edges > n_entities * (n_entities - 1) // 2:
                raise ValueError("more antisymmetric edges than orientable pairs")
        elif self.kind == "inverse_pair":
            if self.pairs is None:
                raise ValueError("inverse_pair needs pairs")
            if self.pairs > n_entities * (n_entities - 1):
                raise ValueError("inverse pairs exceed n_entities^2 capacity")
        elif self.kind == "composition_triple":
            if self.instances is None:
                raise ValueError("composition_triple needs instances")
            if 3 * self.instances > n_entities:
                raise ValueError("composition instances exceed entity pool")
        elif self.kind == "hierarchy_tree":
            if self.branching is None or self.depth is None:
                raise ValueError("hierarchy_tree needs branching and depth")
            if self.tree_nodes() * self.trees > n_entities:
                raise ValueError("tree exceeds entity pool")

    def tree_nodes(self) -> int:
        b, d = self.branching, self.depth
        return d + 1 if b == 1 else (b ** (d + 1) - 1) // (b - 1)

    def relation_names(self, index: int) -> list[str]:
        base = self.name or f"r{index}_{self.kind}"
        if self.kind == "inverse_pair":
            return [base + "_a", base + "_b"]
        if self.kind == "composition_triple":
            return [base + "_p1", base + "_p2", base + "_c"]
        return [base]

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for key in ("pairs", "cliques", "clique_size", "edges", "chains",
                    "chain_length", "instances", "branching", "depth", "name"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        if self.trees != 1:
            out["trees"] = self.trees
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RelationPattern":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown pattern keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class SyntheticSpec:
    n_entities: int
    relations: list[RelationPattern]
    seed: int = 0

    def validate(self) -> None:
        if self.n_entities <= 0:
            raise ValueError("n_entities must be positive")
        if not self.relations:
            raise ValueError("at least one relation pattern required")
        for pattern in self.relations:
            pattern.validate(self.n_entities)

    def to_dict(self) -> dict:
        return {
            "n_entities": self.n_entities,
            "seed": self.seed,
            "relations": [p.to_dict() for p in self.relations],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        unknown = set(data) - {"n_entities", "seed", "relations"}
        if unknown:
            raise ValueError(f"unknown spec keys: {sorted(unknown)}")
        patterns = [RelationPattern.from_dict(p) for p in data["relations"]]
        return cls(n_entities=int(data["n_entities"]), relations=patterns,
                   seed=int(data.get("seed", 0)))


def _sample_distinct_pairs(rng: np.random.Generator, n: int, count: int,
                           ordered: bool) -> list[tuple[int, int]]:
    # Rejection sampling of distinct non-self pairs; for ordered pairs the
    # reverse orientation is also rejected (antisymmetry by construction).
    seen: set[tuple[int, int]] = set()
    pairs: list[tuple[int, int]] = []
    while len(pairs) < count:
        a, b = int(rng.integers(n)), int(rng.integers(n))
        if a == b:
            continue
        key = (a, b) if ordered else (min(a, b), max(a, b))
        if key in seen or (ordered and (b, a) in seen):
            continue
        seen.add(key)
        pairs.append((a, b))
    return pairs


def _units_for_pattern(rng: np.random.Generator, pattern: RelationPattern,
                       names: list[str], n: int) -> dict[str, list[list[tuple[int, str, int]]]]:
    """Generate split units per relation: each unit stays in one split."""
    units: dict[str, list[list[tuple[int, str, int]]]] = {nm: [] for nm in names}
    kind = pattern.kind
    if kind == "symmetric":
        rel = names[0]
        if pattern.cliques is not None:
            members = rng.choice(n, size=pattern.cliques * pattern.clique_size,
                                 replace=False)
            for ci in range(pattern.cliques):
                group = members[ci * pattern.clique_size:(ci + 1) * pattern.clique_size]
                for i in range(len(group)):
                    for j in range(i + 1, len(group)):
                        a, b = int(group[i]), int(group[j])
                        units[rel].append([(a, rel, b), (b, rel, a)])
        else:
            for a, b in _sample_distinct_pairs(rng, n, pattern.pairs, ordered=False):
                units[rel].append([(a, rel, b), (b, rel, a)])
    elif kind == "antisymmetric":
        rel = names[0]
        if pattern.chains is not None:
            nodes = rng.choice(n, size=pattern.chains * (pattern.chain_length + 1),
                               replace=False)
            step = pattern.chain_length + 1
            for ci in range(pattern.chains):
                chain = nodes[ci * step:(ci + 1) * step]
                for i in range(pattern.chain_length):
                    units[rel].append([(int(chain[i]), rel, int(chain[i + 1]))])
        else:
            for a, b in _sample_distinct_pairs(rng, n, pattern.edges, ordered=True):
                units[rel].append([(a, rel, b)])
    elif kind == "inverse_pair":
        ra, rb = names
        for a, b in _sample_distinct_pairs(rng, n, pattern.pairs, ordered=True):
            units[ra].append([(a, ra, b)])
            units[rb].append([(b, rb, a)])
    elif kind == "composition_triple":
        r1, r2, r3 = names
        nodes = rng.choice(n, size=3 * pattern.instances, replace=False)
        for i in range(pattern.instances):
            x, y, z = (int(v) for v in nodes[3 * i:3 * i + 3])
            units[r1].append([(x, r1, y)])
            units[r2].append([(y, r2, z)])
            units[r3].append([(x, r3, z)])
    elif kind == "hierarchy_tree":
        rel = names[0]
        total = pattern.tree_nodes()
        nodes = rng.choice(n, size=total * pattern.trees, replace=False)
        for ti in range(pattern.trees):
            tree = nodes[ti * total:(ti + 1) * total]
            for child in range(1, total):
                parent = (child - 1) // pattern.branching
                units[rel].append([(int(tree[child]), rel, int(tree[parent]))])
    return units


def _split_units(rng: np.random.Generator,
                 units: list[list[tuple[int, str, int]]]):
    order = rng.permutation(len(units))
    n_train = int(0.8 * len(units))
    n_valid = int(0.1 * len(units))
    n_train = max(n_train, 1)
    out = ([], [], [])
    for pos, idx in enumerate(order):
        if pos < n_train:
            bucket = 0
        elif pos < n_train + n_valid:
            bucket = 1
        else:
            bucket = 2
        out[bucket].extend(units[idx])
    return out


def generate_synthetic(spec: SyntheticSpec) -> KnowledgeGraph:
    """Deterministically generate a pattern dataset from a SyntheticSpec.

    Splits are 80/10/10 per relation over pattern units; both directions of
    a symmetric pair always land in the same split, so the held-out pairs
    are genuinely unseen.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    splits: tuple[list, list, list] = ([], [], [])
    for idx, pattern in enumerate(spec.relations):
        names = pattern.relation_names(idx)
        per_rel = _units_for_pattern(rng, pattern, names, spec.n_entities)
        for rel_name in names:
            for bucket, rows in zip(splits, _split_units(rng, per_rel[rel_name])):
                bucket.extend(rows)
    to_str = lambda rows: [(f"e{h}", r, f"e{t}") for h, r, t in rows]
    kg = from_string_triples(*(to_str(rows) for rows in splits))
    _check_pattern_invariants(spec, kg)
    return kg


def _check_pattern_invariants(spec: SyntheticSpec, kg: KnowledgeGraph) -> None:
    all_triples = {tuple(t) for arr in (kg.train, kg.valid, kg.test) for t in arr}
    for idx, pattern in enumerate(spec.relations):
        names = pattern.relation_names(idx)
        ids = [kg.relations.id(nm) for nm in names if nm in kg.relations]
        if pattern.kind == "symmetric":
            rid = ids[0]
            for h, r, t in all_triples:
                if r == rid and (t, r, h) not in all_triples:
                    raise AssertionError("symmetric closure violated")
        elif pattern.kind == "antisymmetric":
            rid = ids[0]
            for h, r, t in all_triples:
                if r == rid and (t, r, h) in all_triples:
                    raise AssertionError("antisymmetry violated")
        elif pattern.kind == "inverse_pair" and len(ids) == 2:
            ra, rb = ids
            fwd = {(h, t) for h, r, t in all_triples if r == ra}
            bwd = {(t, h) for h, r, t in all_triples if r == rb}
            if fwd != bwd:
                raise AssertionError("inverse closure violated")
        elif pattern.kind == "composition_triple" and len(ids) == 3:
            r1, r2, r3 = ids
            first = {(h, t) for h, r, t in all_triples if r == r1}
            second = {(h, t) for h, r, t in all_triples if r == r2}
            conclusion = {(h, t) for h, r, t in all_triples if r == r3}
            for x, y in first:
                for y2, z in second:
                    if y == y2 and (x, z) not in conclusion:
                        raise AssertionError("composition closure violated")
        elif pattern.kind == "hierarchy_tree":
            rid = ids[0]
            parents: dict[int, int] = {}
            for h, r, t in all_triples:
                if r == rid:
                    if h in parents:
                        raise AssertionError("node with two parents")
                    parents[h] = t
            # forest check: walking up from any node terminates
            for start in parents:
                seen = set()
                node = start
                while node in parents:
                    if node in seen:
                        raise AssertionError("cycle in hierarchy relation")
                    seen.add(node)
                    node = parents[node]


def write_dataset(kg: KnowledgeGraph, out_dir: str | Path,
                  spec: SyntheticSpec | None = None) -> Path:
    """Write a graph as TSV split files (plus spec.json when given)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, arr in zip(SPLIT_FILES, (kg.train, kg.valid, kg.test)):
        with (out_dir / name).open("w", encoding="utf-8") as fh:
            for h, r, t in arr:
                fh.write(f"{kg.entities.name(int(h))}\t"
                         f"{kg.relations.name(int(r))}\t"
                         f"{kg.entities.name(int(t))}\n")
    if spec is not None:
        with (out_dir / "spec.json").open("w", encoding="utf-8") as fh:
            json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return out_dir
