"""Reductions from per-token hidden states to a single sequence vector.

Six variants: the [CLS] row, average/sum over real tokens, average/sum
over special-token rows only, and concatenation of special-token rows
zero-padded to a shared slot budget so both encoder sides score with a
plain dot product.
"""

from __future__ import annotations

import numpy as np

CLS = "cls"
AVG = "avg"
SUM = "sum"
AVG_SPECIAL = "avg_special"
SUM_SPECIAL = "sum_special"
CONC_SPECIAL = "conc_special"

ALL_KINDS = (CLS, AVG, SUM, AVG_SPECIAL, SUM_SPECIAL, CONC_SPECIAL)


class PoolingError(ValueError):
    pass


def pooled_dim(kind: str, dim: int, slot_count: int | None = None) -> int:
    if kind == CONC_SPECIAL:
        if slot_count is None:
            raise PoolingError("conc_special needs a slot count")
        return slot_count * dim
    return dim


def reduce(
    h: np.ndarray,
    attn_len: int,
    special_indices: list[int],
    kind: str,
    slot_count: int | None = None,
    over_full_length: bool = False,
) -> np.ndarray:
    """Pool (n, D) hidden states into one vector.

    ``over_full_length`` switches avg/sum (and their special variants'
    denominator) to the fixed sequence length n instead of the number of
    contributing rows; padding rows are zero so only denominators change.
    """
    n, d = h.shape
    if kind == CLS:
        return h[0].copy()
    if kind in (AVG, SUM):
        total = h[:attn_len].sum(axis=0)
        if kind == SUM:
            return total
        denom = n if over_full_length else attn_len
        if denom == 0:
            raise PoolingError("cannot average an empty sequence")
        return total / denom
    if kind in (AVG_SPECIAL, SUM_SPECIAL, CONC_SPECIAL):
        if not special_indices:
            raise PoolingError(f"{kind} pooling requires special-token positions")
        if any(i >= attn_len for i in special_indices):
            raise PoolingError("special position beyond attention length")
        rows = h[np.asarray(special_indices)]
        if kind == SUM_SPECIAL:
            return rows.sum(axis=0)
        if kind == AVG_SPECIAL:
            denom = n if over_full_length else len(special_indices)
            return rows.sum(axis=0) / denom
        if slot_count is None or slot_count < len(special_indices):
            raise PoolingError(
                f"slot count {slot_count} below special count {len(special_indices)}"
            )
        out = np.zeros(slot_count * d)
        out[: rows.size] = rows.reshape(-1)
        return out
    raise PoolingError(f"unknown pooling kind {kind!r}")


def backward_reduce(
    g: np.ndarray,
    n: int,
    dim: int,
    attn_len: int,
    special_indices: list[int],
    kind: str,
    slot_count: int | None = None,
    over_full_length: bool = False,
) -> np.ndarray:
    """Adjoint of ``reduce``: scatter a pooled-vector gradient back to (n, D)."""
    dh = np.zeros((n, dim))
    if kind == CLS:
        if g.shape != (dim,):
            raise PoolingError(f"gradient shape {g.shape} mismatch for {kind}")
        dh[0] = g
        return dh
    if kind in (AVG, SUM):
        if g.shape != (dim,):
            raise PoolingError(f"gradient shape {g.shape} mismatch for {kind}")
        if kind == AVG:
            g = g / (n if over_full_length else attn_len)
        dh[:attn_len] = g
        return dh
    if kind in (AVG_SPECIAL, SUM_SPECIAL):
        if g.shape != (dim,):
            raise PoolingError(f"gradient shape {g.shape} mismatch for {kind}")
        if kind == AVG_SPECIAL:
            g = g / (n if over_full_length else len(special_indices))
        for i in special_indices:
            dh[i] += g
        return dh
    if kind == CONC_SPECIAL:
        if slot_count is None or g.shape != (slot_count * dim,):
            raise PoolingError(f"gradient shape {g.shape} mismatch for {kind}")
        slots = g.reshape(slot_count, dim)
        for slot, i in enumerate(special_indices):
            dh[i] += slots[slot]
        return dh
    raise PoolingError(f"unknown pooling kind {kind!r}")
