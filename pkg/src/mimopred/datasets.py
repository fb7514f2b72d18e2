"""Windowed prediction samples and few-shot task construction.

A sample maps the previous ``order`` estimated channel vectors of one
user to that user's next channel vector.  Complex vectors are encoded as
stacked real/imaginary parts so the networks stay real-valued.

Source tasks (for meta-training) draw both inputs and labels from the
noisy estimates.  Target sets (for adaptation and testing) keep noisy
labels for the adaptation half, but true-channel labels for the held-out
test half, so reported errors measure distance to the actual channel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .channel import LsTrace, parse_trace_block, read_bytes, save_traces
from .errors import DatasetError, DimensionError, IntegrityError
from .seeding import substream

INDEX_MAGIC = b"MIDX"


@dataclass
class SamplePair:
    """One input window and its label, both encoded real vectors."""

    inputs: np.ndarray
    label: np.ndarray
    slot: int
    ue_id: int


@dataclass
class TaskDataset:
    """Support and query samples of one few-shot task."""

    task_id: int
    ue_id: int
    support: list
    query: list


@dataclass
class TargetSet:
    """Adaptation and test samples of one previously unseen user."""

    ue_id: int
    adapt: list
    test: list


def encode(window: np.ndarray) -> np.ndarray:
    """Encode complex columns as one real vector.

    A (M, n) complex array becomes length 2*M*n: per column the real
    parts then the imaginary parts, columns concatenated in slot order.
    A 1-d length-M vector is treated as a single column.
    """
    window = np.asarray(window)
    if window.ndim == 1:
        window = window[:, None]
    if window.ndim != 2:
        raise DimensionError(f"encode needs a vector or matrix, got shape {window.shape}")
    return np.concatenate([np.concatenate([window[:, j].real, window[:, j].imag])
                           for j in range(window.shape[1])])


def decode(vec: np.ndarray, n_antennas: int) -> np.ndarray:
    """Invert :func:`encode` back to a complex (n_antennas, n) array."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1 or vec.size % (2 * n_antennas) != 0:
        raise DimensionError(
            f"decode needs a 1-d length multiple of {2 * n_antennas}, got shape {vec.shape}"
        )
    n = vec.size // (2 * n_antennas)
    cols = vec.reshape(n, 2, n_antennas)
    return (cols[:, 0, :] + 1j * cols[:, 1, :]).T


def _window_pair(inputs_trace: np.ndarray, label_trace: np.ndarray, slot: int,
                 order: int, ue_id: int) -> SamplePair:
    window = inputs_trace[:, slot - order:slot]
    label = label_trace[:, slot]
    return SamplePair(inputs=encode(window), label=encode(label), slot=slot, ue_id=ue_id)


def _check_budget(n_slots: int, order: int, needed: int, what: str) -> None:
    if order < 1:
        raise DatasetError(f"window order must be >= 1, got {order}")
    available = n_slots - order
    if available < needed:
        raise DatasetError(
            f"{what}: need {needed} windowed slots but only {available} fit "
            f"(trace has {n_slots} slots, minimum is {order + needed})"
        )


def build_source_tasks(ls_traces, tasks_per_ue: int, n_support: int, n_query: int,
                       order: int, seed: int) -> list:
    """Carve meta-training tasks out of the source users' estimate traces.

    Task t (1-based) belongs to user floor((t-1)/tasks_per_ue); its
    support and query slots are drawn uniformly without replacement from
    that user's windowed slots, so the two sets never overlap.
    """
    ls_traces = list(ls_traces)
    if not ls_traces:
        raise DatasetError("no source traces given")
    if tasks_per_ue < 1:
        raise DatasetError(f"tasks_per_ue must be >= 1, got {tasks_per_ue}")
    if n_support < 1 or n_query < 1:
        raise DatasetError(f"need n_support >= 1 and n_query >= 1, got {n_support}, {n_query}")
    tasks = []
    for t in range(1, tasks_per_ue * len(ls_traces) + 1):
        trace = ls_traces[(t - 1) // tasks_per_ue]
        h = trace.h_ls
        _check_budget(h.shape[1], order, n_support + n_query, f"task {t} (ue {trace.ue_id})")
        rng = substream(seed, "task", t)
        slots = rng.choice(np.arange(order, h.shape[1]), size=n_support + n_query,
                           replace=False)
        support = [_window_pair(h, h, int(s), order, trace.ue_id) for s in slots[:n_support]]
        query = [_window_pair(h, h, int(s), order, trace.ue_id) for s in slots[n_support:]]
        tasks.append(TaskDataset(task_id=t, ue_id=trace.ue_id, support=support, query=query))
    return tasks


def build_target_set(ls_trace: LsTrace, true_trace, n_adapt: int, n_test: int,
                     order: int, seed: int) -> TargetSet:
    """Split one target user's trace into adaptation and test samples.

    Adaptation labels come from the estimates (all a receiver would
    have); test labels come from the true channel.  The slot schedule
    depends only on the seed and trace length, not the user id, so
    several users of one experiment share test slots and per-slot
    multi-user combining stays well defined.
    """
    h_ls = ls_trace.h_ls
    h_true = np.asarray(true_trace.h if hasattr(true_trace, "h") else true_trace)
    if h_true.shape != h_ls.shape:
        raise DimensionError(
            f"true trace shape {h_true.shape} does not match estimates {h_ls.shape}"
        )
    if n_adapt < 0 or n_test < 1:
        raise DatasetError(f"need n_adapt >= 0 and n_test >= 1, got {n_adapt}, {n_test}")
    _check_budget(h_ls.shape[1], order, n_adapt + n_test, f"target ue {ls_trace.ue_id}")
    rng = substream(seed, "target")
    slots = rng.choice(np.arange(order, h_ls.shape[1]), size=n_adapt + n_test, replace=False)
    adapt = [_window_pair(h_ls, h_ls, int(s), order, ls_trace.ue_id) for s in slots[:n_adapt]]
    test = [_window_pair(h_ls, h_true, int(s), order, ls_trace.ue_id) for s in slots[n_adapt:]]
    return TargetSet(ue_id=ls_trace.ue_id, adapt=adapt, test=test)


def pairs_to_arrays(pairs) -> tuple:
    """Stack sample pairs into (inputs, labels) float64 design matrices."""
    if not pairs:
        raise DatasetError("empty sample set")
    x = np.stack([p.inputs for p in pairs]).astype(np.float64)
    y = np.stack([p.label for p in pairs]).astype(np.float64)
    return x, y


def save_tasks(path, tasks, ls_traces, order: int) -> None:
    """Persist tasks plus the estimate traces they index into.

    The file is a trace container (one matrix per unique user, ordered
    by user id) followed by an ``MIDX`` block: window order, the user id
    table, and per task its id, user, and support/query slot lists.
    """
    tasks = list(tasks)
    if not tasks:
        raise DatasetError("refusing to save an empty task list")
    by_ue = {t.ue_id: t.h_ls for t in ls_traces}
    missing = sorted({t.ue_id for t in tasks} - set(by_ue))
    if missing:
        raise DatasetError(f"tasks reference users with no trace: {missing}")
    ue_ids = sorted(by_ue)
    save_traces(path, [by_ue[u] for u in ue_ids])
    with open(path, "ab") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<III", order, len(ue_ids), len(tasks)))
        fh.write(struct.pack(f"<{len(ue_ids)}I", *ue_ids))
        for t in tasks:
            fh.write(struct.pack("<IIII", t.task_id, t.ue_id, len(t.support), len(t.query)))
            slots = [p.slot for p in t.support] + [p.slot for p in t.query]
            fh.write(struct.pack(f"<{len(slots)}I", *slots))


def load_tasks(path) -> tuple:
    """Rebuild (tasks, ls_traces_by_ue) written by :func:`save_tasks`."""
    blob = read_bytes(path)
    matrices, header = parse_trace_block(blob, path)
    raw = blob[header:]

    def take(fmt: str, offset: int):
        size = struct.calcsize(fmt)
        if offset + size > len(raw):
            raise IntegrityError(f"{path}: task index truncated at byte {header + len(raw)}")
        return struct.unpack_from(fmt, raw, offset), offset + size

    if raw[:4] != INDEX_MAGIC:
        raise IntegrityError(f"{path}: bad task index magic at byte {header}")
    (order, n_ue, n_tasks), pos = take("<III", 4)
    ue_ids, pos = take(f"<{n_ue}I", pos)
    if len(ue_ids) != len(matrices):
        raise IntegrityError(f"{path}: user table size {len(ue_ids)} != {len(matrices)} traces")
    traces = {u: LsTrace(ue_id=u, h_ls=mat, snr_db=float("nan"))
              for u, mat in zip(ue_ids, matrices)}
    tasks = []
    for _ in range(n_tasks):
        (task_id, ue_id, n_sup, n_que), pos = take("<IIII", pos)
        if ue_id not in traces:
            raise IntegrityError(f"{path}: task {task_id} references unknown user {ue_id}")
        slots, pos = take(f"<{n_sup + n_que}I", pos)
        h = traces[ue_id].h_ls
        pairs = [_window_pair(h, h, s, order, ue_id) for s in slots]
        tasks.append(TaskDataset(task_id=task_id, ue_id=ue_id,
                                 support=pairs[:n_sup], query=pairs[n_sup:]))
    if pos != len(raw):
        raise IntegrityError(f"{path}: {len(raw) - pos} trailing bytes after task index")
    return tasks, traces
