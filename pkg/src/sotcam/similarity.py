"""Application layer: fixed-radius Hamming search, LSH encoding and
CAM-based candidate generation for a recommendation pipeline."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .array import ArrayConfig, _delays, gate_voltages, scenario_delays
from .device import X


class LengthMismatch(ValueError):
    pass


class DimMismatch(ValueError):
    pass


# ---------------------------------------------------------------- Hamming

def hamming_oracle(a, b) -> int:
    """Mismatching positions where both words are binary (X never mismatches)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.shape} vs {b.shape}")
    return int(np.sum((a != X) & (b != X) & (a != b)))


def hamming_many(stored, query) -> np.ndarray:
    stored = np.asarray(stored)
    query = np.asarray(query)
    if stored.shape[-1] != query.shape[-1]:
        raise LengthMismatch("word lengths differ")
    return np.sum((stored != X) & (query != X) & (stored != query), axis=-1)


# ---------------------------------------------------------------- dataset

_MAGIC = b"TCM2"
# relative slack on the clock edge; bank and reference ladders agree only to
# solver tolerance
_GUARD = 1e-6


@dataclass
class BitDataset:
    """``n x word_len`` ternary words split round-robin over 64-row banks:
    item ``i`` lives in bank ``i % n_banks`` at row ``i // n_banks``."""
    vectors: np.ndarray
    bank_rows: int = 64

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.int8)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise ValueError("dataset needs at least one word")
        if np.any((self.vectors < 0) | (self.vectors > X)):
            raise ValueError("ternary codes must be 0, 1 or 2 (X)")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def word_len(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_banks(self) -> int:
        return -(-self.n // self.bank_rows)

    def bank_ids(self, b: int) -> np.ndarray:
        return np.arange(b, self.n, self.n_banks)

    def banks(self):
        """List of ``(ids, words)`` per bank."""
        return [(ids, self.vectors[ids]) for ids in map(self.bank_ids, range(self.n_banks))]

    def save(self, path) -> None:
        """Header ``(magic, n, word_len)`` then 2-bit codes, four per byte, LSB first."""
        codes = self.vectors.reshape(-1).astype(np.uint8)
        pad = (-codes.size) % 4
        codes = np.concatenate([codes, np.zeros(pad, np.uint8)]).reshape(-1, 4)
        packed = codes[:, 0] | (codes[:, 1] << 2) | (codes[:, 2] << 4) | (codes[:, 3] << 6)
        with open(path, "wb") as fh:
            fh.write(_MAGIC + struct.pack("<II", self.n, self.word_len))
            fh.write(packed.astype(np.uint8).tobytes())

    @classmethod
    def load(cls, path, bank_rows: int = 64) -> "BitDataset":
        raw = Path(path).read_bytes()
        if raw[:4] != _MAGIC:
            raise ValueError(f"{path}: not a packed ternary dataset")
        n, L = struct.unpack("<II", raw[4:12])
        b = np.frombuffer(raw[12:], dtype=np.uint8)
        codes = np.stack([(b >> s) & 3 for s in (0, 2, 4, 6)], axis=1).reshape(-1)
        if codes.size < n * L:
            raise ValueError(f"{path}: truncated")
        return cls(codes[:n * L].reshape(n, L).astype(np.int8), bank_rows)

    @classmethod
    def planted(cls, n: int = 10000, word_len: int = 128, n_queries: int = 10, seed=0,
                max_flips: Optional[int] = None):
        """Random query words, each with ``n / n_queries`` planted neighbours at
        a flip count drawn uniformly from ``0..max_flips`` (default word_len/2).

        Returns ``(dataset, queries)``.
        """
        rng = np.random.default_rng(seed)
        max_flips = word_len // 2 if max_flips is None else max_flips
        queries = rng.integers(0, 2, (n_queries, word_len), dtype=np.int8)
        owner = np.arange(n) % n_queries
        vec = queries[owner].copy()
        flips = rng.integers(0, max_flips + 1, n)
        for i, k in enumerate(flips):
            pos = rng.choice(word_len, k, replace=False)
            vec[i, pos] ^= 1
        return cls(vec), queries


# ---------------------------------------------------------------- metrics

@dataclass(frozen=True)
class RetrievalMetrics:
    recall: float
    precision: float
    f_score: float
    n_retrieved: int
    n_relevant: int

    @classmethod
    def from_sets(cls, retrieved, relevant) -> "RetrievalMetrics":
        retrieved, relevant = set(retrieved), set(relevant)
        tp = len(retrieved & relevant)
        rec = tp / len(relevant) if relevant else 1.0
        prec = tp / len(retrieved) if retrieved else (1.0 if not relevant else 0.0)
        f = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        return cls(rec, prec, f, len(retrieved), len(relevant))

    @classmethod
    def from_counts(cls, tp: int, n_retrieved: int, n_relevant: int) -> "RetrievalMetrics":
        rec = tp / n_relevant if n_relevant else 1.0
        prec = tp / n_retrieved if n_retrieved else (1.0 if not n_relevant else 0.0)
        f = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        return cls(rec, prec, f, n_retrieved, n_relevant)


# ---------------------------------------------------------------- search

def radius_threshold(config: ArrayConfig, radius: int) -> float:
    """Clock edge for a fixed-radius search: the fastest nominal delay of an
    ``HDist = radius`` row over all row positions, so every row within the
    radius is still high when the latches close."""
    if radius < 0:
        return math.inf
    if radius >= config.cols:
        return -math.inf
    if radius == 0:
        # a full match never trips; anything that trips before the window is out
        return config.t_window
    d = scenario_delays(config, np.arange(config.rows), radius)
    return float(np.min(d))


def _bank_delays(config: ArrayConfig, words, query, r_factor=None, vt_delta=None):
    """Delays of every row of a bank holding ``words`` (padded to config.rows)."""
    rows = config.rows
    stored = np.empty((rows, config.cols), dtype=np.int8)
    k = words.shape[0]
    stored[:k] = words
    # unused rows hold a copy of the query: binary load, no discharge
    stored[k:] = np.where(query == X, 0, query)
    vsot = gate_voltages(config, stored, query, r_factor)
    vt = config.transistor.vt if vt_delta is None else config.transistor.vt + vt_delta
    vt = np.broadcast_to(vt, vsot.shape)
    return _delays(config, vsot[:k], vt[:k])


def fixed_radius_search(dataset: BitDataset, query, radius: int,
                        config: Optional[ArrayConfig] = None, mode: str = "ideal",
                        threshold: Optional[float] = None, variation_seed=None):
    """Ids latched as neighbours and metrics against the Hamming oracle.

    ``realistic`` evaluates each 64-row bank with the array model at nominal
    device values; ``variation_seed`` adds per-die variation (recall is then
    no longer guaranteed).
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    query = np.asarray(query, dtype=np.int8)
    hd = hamming_many(dataset.vectors, query)
    relevant = np.flatnonzero(hd <= radius)
    if mode == "ideal":
        found = relevant
    elif mode == "realistic":
        if config is None:
            raise ValueError("realistic mode needs an array config")
        cfg = replace(config, cols=dataset.word_len)
        thr = radius_threshold(cfg, radius) if threshold is None else threshold
        rng = None if variation_seed is None else np.random.default_rng(variation_seed)
        hits = []
        for ids, words in dataset.banks():
            rf = dvt = None
            if rng is not None:
                rf = 1.0 + 0.05 * rng.standard_normal((2, cfg.rows, cfg.cols))
                dvt = 0.014 * rng.standard_normal((cfg.rows, cfg.cols))
            d = _bank_delays(cfg, words, query, rf, dvt)
            hits.append(ids[d >= thr * (1 - _GUARD)])
        found = np.sort(np.concatenate(hits))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return found, RetrievalMetrics.from_sets(found.tolist(), relevant.tolist())


def fixed_radius_benchmark(dataset: BitDataset, queries, radius: int,
                           config: Optional[ArrayConfig] = None, mode: str = "ideal"):
    """Pooled metrics over several queries (micro-averaged counts)."""
    tp = nret = nrel = 0
    thr = None
    if mode == "realistic":
        thr = radius_threshold(replace(config, cols=dataset.word_len), radius)
    for q in queries:
        found, m = fixed_radius_search(dataset, q, radius, config, mode, threshold=thr)
        rel = set(np.flatnonzero(hamming_many(dataset.vectors, q) <= radius).tolist())
        tp += len(rel & set(found.tolist()))
        nret += m.n_retrieved
        nrel += m.n_relevant
    return RetrievalMetrics.from_counts(tp, nret, nrel)


# ---------------------------------------------------------------- LSH

@dataclass(frozen=True)
class LshEncoder:
    """Random-hyperplane encoder; a zero dot product encodes as 1."""
    hyperplanes: np.ndarray

    @classmethod
    def create(cls, dim: int, n_bits: int = 128, seed=0) -> "LshEncoder":
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((n_bits, dim)))

    @property
    def dim(self) -> int:
        return self.hyperplanes.shape[1]

    @property
    def n_bits(self) -> int:
        return self.hyperplanes.shape[0]

    def encode(self, emb) -> np.ndarray:
        emb = np.asarray(emb, dtype=float)
        if emb.shape[-1] != self.dim:
            raise DimMismatch(f"embedding dim {emb.shape[-1]} != encoder dim {self.dim}")
        return (emb @ self.hyperplanes.T >= 0).astype(np.int8)


def lsh_encode(embedding, encoder: LshEncoder) -> np.ndarray:
    return encoder.encode(embedding)


# ---------------------------------------------------------------- recsys

@dataclass
class RecsysReport:
    hr_at_10: float
    hr_at_10_full: float
    mean_pool_size: float
    universe_size: float
    dpr_reduction: float
    empty_pools: int
    gt_in_pool: float
    pool_sizes: List[int] = field(default_factory=list)
    hits: List[bool] = field(default_factory=list)
    hits_full: List[bool] = field(default_factory=list)
    gt_within: List[bool] = field(default_factory=list)
    top_contained: List[bool] = field(default_factory=list)
    top_identical: List[bool] = field(default_factory=list)

    def summary(self) -> Dict:
        d = dict(self.__dict__)
        d["dpr_relation_holds"] = math.isclose(self.dpr_reduction * self.mean_pool_size,
                                               self.universe_size, rel_tol=1e-12)
        for k in ("pool_sizes", "hits", "hits_full", "gt_within", "top_contained",
                  "top_identical"):
            d.pop(k)
        return d

    def disagreements_within_radius(self) -> int:
        """Queries whose ground truth was retrieved but whose hit differs
        between CAM candidates and full ranking."""
        return sum(w and a != b for w, a, b in zip(self.gt_within, self.hits, self.hits_full))


def _top_k(scores, ids, k=10):
    order = np.lexsort((ids, -scores))
    return ids[order[:k]]


def recsys_eval(item_emb, query_emb, ground_truth, universes, radius: int,
                config: Optional[ArrayConfig] = None, mode: str = "ideal",
                encoder: Optional[LshEncoder] = None, k: int = 10, seed=0) -> RecsysReport:
    """Candidate generation by fixed-radius CAM search over LSH codes of each
    query's candidate universe, then dot-product ranking of the pool.

    ``universes[i]`` lists the item ids ranked for query ``i`` (ground truth
    included).  Ties in ranking break by item id.
    """
    item_emb = np.asarray(item_emb, dtype=float)
    query_emb = np.asarray(query_emb, dtype=float)
    enc = LshEncoder.create(item_emb.shape[1], 128, seed) if encoder is None else encoder
    codes = enc.encode(item_emb)
    qcodes = enc.encode(query_emb)
    thr = None
    if mode == "realistic":
        thr = radius_threshold(replace(config, cols=enc.n_bits), radius)
    empty = 0
    pools, usizes, hits, hits_full, within, contained, same = [], [], [], [], [], [], []
    for i, uni in enumerate(universes):
        uni = np.asarray(uni)
        ds = BitDataset(codes[uni])
        found, _ = fixed_radius_search(ds, qcodes[i], radius, config, mode, threshold=thr)
        pool = uni[found]
        pools.append(int(pool.size))
        usizes.append(int(uni.size))
        gt = ground_truth[i]
        full = _top_k(item_emb[uni] @ query_emb[i], uni, k)
        hits_full.append(bool(gt in full))
        within.append(bool(gt in pool))
        contained.append(bool(np.isin(full, pool).all()))
        if pool.size == 0:
            empty += 1
            hits.append(False)
            same.append(False)
            continue
        top = _top_k(item_emb[pool] @ query_emb[i], pool, k)
        hits.append(bool(gt in top))
        same.append(bool(np.array_equal(top, full)))
    n = len(universes)
    mean_pool = float(np.mean(pools))
    mean_uni = float(np.mean(usizes))
    return RecsysReport(sum(hits) / n, sum(hits_full) / n, mean_pool, mean_uni,
                        mean_uni / mean_pool if mean_pool > 0 else math.inf,
                        empty, sum(within) / n, pools, hits, hits_full, within, contained,
                        same)


def synthetic_recsys(n_items: int = 20000, dim: int = 64, n_queries: int = 50,
                     n_negatives: int = 1000, bias: float = 3.0, noise: float = 0.6, seed=0):
    """Clustered unit item embeddings, queries near a planted ground-truth
    item, and a universe of ``n_negatives`` random negatives plus the ground
    truth.

    Items share a common direction with weight ``bias`` (trained embeddings
    are far from isotropic); ``noise`` sets how far a query sits from its
    ground truth.
    """
    rng = np.random.default_rng(seed)
    items = rng.standard_normal((n_items, dim)) / math.sqrt(dim)
    items[:, 0] += bias
    items /= np.linalg.norm(items, axis=1, keepdims=True)
    gt = rng.choice(n_items, n_queries, replace=False)
    q = items[gt] + noise * rng.standard_normal((n_queries, dim)) / math.sqrt(dim)
    universes = []
    for g in gt:
        neg = rng.choice(np.delete(np.arange(n_items), g), n_negatives, replace=False)
        universes.append(np.concatenate([[g], neg]))
    return items, q, gt, universes


def load_embeddings(path) -> np.ndarray:
    """Plain text (one row per line) or binary ``<II`` ``(n, dim)`` header + float32."""
    p = Path(path)
    raw = p.read_bytes()
    if raw[:4] == b"EMB1":
        n, dim = struct.unpack("<II", raw[4:12])
        return np.frombuffer(raw[12:12 + 4 * n * dim], dtype="<f4").reshape(n, dim).astype(float)
    return np.loadtxt(p, ndmin=2)


def save_embeddings(path, emb) -> None:
    emb = np.asarray(emb, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(b"EMB1" + struct.pack("<II", *emb.shape))
        fh.write(emb.tobytes())
