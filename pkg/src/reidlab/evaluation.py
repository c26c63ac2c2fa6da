"""Ranked-retrieval evaluation: mAP, CMC, and k-reciprocal re-ranking.

For each query the gallery is ranked by ascending distance after removing
gallery items that share both the query's class and scene (the standard
cross-scene protocol); relevance is same-class. Distance ties break by
ascending gallery index. AP uses the plain precision-at-rank convention,
not the interpolated one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, pairwise_sq_euclidean


@dataclass
class EvalResult:
    map: float
    cmc: np.ndarray  # cmc[i] = fraction of queries matched within rank i+1
    per_query_ap: list[float]

    def cmc_at(self, rank: int) -> float:
        """CMC at a 1-based rank; ranks beyond the curve saturate at its tail."""
        if rank < 1:
            raise ValueError(f"rank must be >= 1, got {rank}")
        return float(self.cmc[min(rank, len(self.cmc)) - 1])

    def report(self, n_query: int, n_gallery: int,
               rerank: "RerankParams | None" = None) -> dict:
        """JSON-serializable evaluation report."""
        out = {
            "map": self.map,
            "cmc": [float(x) for x in self.cmc],
            "n_query": n_query,
            "n_gallery": n_gallery,
            "reranked": rerank is not None,
        }
        if rerank is not None:
            out["params"] = {"k1": rerank.k1, "k2": rerank.k2,
                             "lambda_rr": rerank.lambda_rr}
        return out


@dataclass
class RerankParams:
    k1: int = 20
    k2: int = 6
    lambda_rr: float = 0.3

    def validate(self) -> None:
        if not (self.k1 >= self.k2 >= 1):
            raise ValueError(f"need k1 >= k2 >= 1, got k1={self.k1}, k2={self.k2}")
        if not 0.0 <= self.lambda_rr <= 1.0:
            raise ValueError(f"lambda_rr must be in [0, 1], got {self.lambda_rr}")

    def clamped_to(self, gallery_size: int) -> "RerankParams":
        """Desk-scale auto-shrink: k1 capped at gallery-1, k2 at k1."""
        k1 = max(1, min(self.k1, gallery_size - 1))
        return RerankParams(k1=k1, k2=max(1, min(self.k2, k1)), lambda_rr=self.lambda_rr)


def compute_ap(relevance) -> float:
    """Average precision of a ranked 0/1 relevance list.

    AP = (1/R) * sum over relevant ranks k of precision@k.
    """
    rel = [int(bool(r)) for r in relevance]
    total = sum(rel)
    if total == 0:
        raise ValueError("average precision undefined without a relevant item")
    hits = 0
    acc = 0.0
    for k, r in enumerate(rel, start=1):
        if r:
            hits += 1
            acc += hits / k
    return acc / total


def evaluate(query_emb, query_ids, query_scenes, gallery_emb, gallery_ids,
             gallery_scenes, rerank: RerankParams | None = None) -> EvalResult:
    """mAP and CMC over a query/gallery split.

    Euclidean distances by default; with ``rerank`` the k-reciprocal
    distance matrix is used instead (parameters auto-clamped to the gallery
    size). A query left without a same-class gallery item after exclusion
    is an error in the split, not a skippable case.
    """
    q = as_matrix(query_emb, "query embeddings")
    g = as_matrix(gallery_emb, "gallery embeddings")
    q_ids = np.asarray(query_ids, dtype=np.int64)
    g_ids = np.asarray(gallery_ids, dtype=np.int64)
    q_sc = np.asarray(query_scenes, dtype=np.int64)
    g_sc = np.asarray(gallery_scenes, dtype=np.int64)
    if rerank is not None:
        rerank.validate()
        dist = k_reciprocal_rerank(q, g, rerank.clamped_to(g.shape[0]))
    else:
        dist = np.sqrt(pairwise_sq_euclidean(q, g))

    aps: list[float] = []
    first_ranks: list[int] = []
    max_kept = 0
    for i in range(q.shape[0]):
        keep = ~((g_ids == q_ids[i]) & (g_sc == q_sc[i]))
        kept_idx = np.nonzero(keep)[0]
        order = kept_idx[np.argsort(dist[i, kept_idx], kind="stable")]
        rel = g_ids[order] == q_ids[i]
        if not rel.any():
            raise ValueError(
                f"query {i} (class {int(q_ids[i])}) has no valid gallery match "
                "after same-class-same-scene exclusion")
        hits = np.cumsum(rel)
        ranks = np.arange(1, rel.size + 1)
        aps.append(float((hits[rel] / ranks[rel]).sum() / rel.sum()))
        first_ranks.append(int(np.argmax(rel)) + 1)
        max_kept = max(max_kept, rel.size)

    first = np.asarray(first_ranks)
    cmc = np.array([(first <= r).mean() for r in range(1, max_kept + 1)])
    return EvalResult(map=float(np.mean(aps)), cmc=cmc, per_query_ap=aps)


def k_reciprocal_rerank(query_emb, gallery_emb, params: RerankParams) -> np.ndarray:
    """k-reciprocal re-ranked distances between queries and gallery.

    Standard recipe: squared distances over the stacked query+gallery set,
    column-max normalization, reciprocal-neighbor sets with the 2/3-overlap
    expansion, local query expansion over k2, Jaccard distance from the
    resulting sparse encodings, and the final mix
    lambda_rr * original + (1 - lambda_rr) * Jaccard.
    """
    q = as_matrix(query_emb, "query embeddings")
    g = as_matrix(gallery_emb, "gallery embeddings")
    params.validate()
    n_q, n_g = q.shape[0], g.shape[0]
    if params.k1 >= n_g:
        raise ValueError(f"k1={params.k1} must be smaller than gallery size {n_g}")
    k1, k2, lam = params.k1, params.k2, params.lambda_rr

    feat = np.vstack([q, g])
    n = n_q + n_g
    original = pairwise_sq_euclidean(feat, feat)
    original = (original / original.max(axis=0)).T
    rank = np.argsort(original, axis=1, kind="stable")

    encodings = np.zeros((n, n))
    half = int(round(k1 / 2))
    reciprocal: list[np.ndarray] = []
    for i in range(n):
        fwd = rank[i, :k1 + 1]
        back = rank[fwd, :k1 + 1]
        reciprocal.append(fwd[np.nonzero(back == i)[0]])
    for i in range(n):
        expanded = reciprocal[i]
        for cand in reciprocal[i]:
            fwd = rank[cand, :half + 1]
            back = rank[fwd, :half + 1]
            cand_recip = fwd[np.nonzero(back == cand)[0]]
            if np.intersect1d(cand_recip, reciprocal[i]).size > (2.0 / 3.0) * cand_recip.size:
                expanded = np.append(expanded, cand_recip)
        expanded = np.unique(expanded)
        weight = np.exp(-original[i, expanded])
        encodings[i, expanded] = weight / weight.sum()

    if k2 > 1:  # local query expansion
        encodings = np.stack([encodings[rank[i, :k2]].mean(axis=0) for i in range(n)])

    nonzero_rows_per_col = [np.nonzero(encodings[:, j])[0] for j in range(n)]
    jaccard = np.zeros((n_q, n))
    for i in range(n_q):
        overlap = np.zeros(n)
        cols = np.nonzero(encodings[i])[0]
        for j in cols:
            rows = nonzero_rows_per_col[j]
            overlap[rows] += np.minimum(encodings[i, j], encodings[rows, j])
        jaccard[i] = 1.0 - overlap / (2.0 - overlap)

    return lam * original[:n_q, n_q:] + (1.0 - lam) * jaccard[:, n_q:]
