"""
Alignment export and entropy statistics of the four decoder->encoder flows.

Dump format (UTF-8), one block per sentence, blocks separated by a blank line:

    sentence <id> <m> <n>
    src<TAB>tok<TAB>tok...
    tgt<TAB>tok<TAB>tok...
    flow cc
    n rows of m tab-separated values with 6 decimals
    flow ca
    ...

Matrices are quantized to the written precision before they are stored in
memory, so parsing a dump reproduces them exactly.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from dpn.autodiff.tensor import no_grad
from dpn.data.batch import collate
from dpn.data.corpus import SentencePair
from dpn.data.vocab import EOS, Vocabulary
from dpn.errors import DataError
from dpn.models.dpn import FLOWS, ForwardTrace, forward
from dpn.models.params import DPNParams

logger = logging.getLogger(__name__)

ROW_TOL = 1e-6
ENTROPY_ROW_TOL = 1e-4
PATH_NAMES = {"c": "CNN", "a": "SAN"}


@dataclass
class AttentionRecord:
    sentence_id: int
    src_tokens: List[str]
    tgt_tokens: List[str]
    matrices: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.src_tokens)

    @property
    def n(self) -> int:
        return len(self.tgt_tokens)


def quantize(matrix: np.ndarray) -> np.ndarray:
    return np.array([[float(f"{v:.6f}") for v in row] for row in matrix], dtype=np.float64).reshape(matrix.shape)


def check_row_stochastic(matrix: np.ndarray, tol: float = ROW_TOL, what: str = "alignment"):
    sums = matrix.sum(axis=-1)
    worst = float(np.max(np.abs(sums - 1.0))) if sums.size else 0.0
    if worst > tol or (matrix < 0).any():
        raise DataError(f"{what} rows are not distributions (max |sum-1| = {worst:.3g})")


def token_entropies(matrix: np.ndarray) -> np.ndarray:
    """-sum x ln x per row, with 0 ln 0 = 0."""
    check_row_stochastic(matrix, ENTROPY_ROW_TOL)
    safe = np.where(matrix > 0, matrix, 1.0)
    return -(matrix * np.log(safe)).sum(axis=-1)


def attention_entropy(record: AttentionRecord) -> Dict[str, float]:
    """Per flow, the target-token mean alignment entropy of one sentence."""
    return {flow: float(token_entropies(mat).mean()) for flow, mat in record.matrices.items()}


def collect_alignments(
    params: DPNParams,
    pairs: Sequence[SentencePair],
    vocab_src: Vocabulary,
    vocab_tgt: Vocabulary,
    layer: int = -1,
) -> List[AttentionRecord]:
    """Teacher-forced alignments of every pair at one decoder layer (default: the last)."""
    records = []
    with no_grad():
        for i, pair in enumerate(pairs):
            batch = collate([pair])
            trace = ForwardTrace()
            forward(params, batch.src, batch.tgt_in, batch.src_mask, trace=trace)
            matrices = {}
            for flow, mats in trace.alignments(layer).items():
                matrix = mats[0].astype(np.float64)
                check_row_stochastic(matrix, what=f"sentence {i} flow {flow}")
                matrices[flow] = quantize(matrix)
            records.append(
                AttentionRecord(
                    sentence_id=i,
                    src_tokens=[vocab_src.id_to_token(t) for t in pair.src],
                    tgt_tokens=[vocab_tgt.id_to_token(t) for t in pair.tgt] + [EOS],
                    matrices=matrices,
                )
            )
    return records


def write_alignments(records: Iterable[AttentionRecord], out_path):
    blocks = []
    for rec in records:
        lines = [f"sentence {rec.sentence_id} {rec.m} {rec.n}"]
        lines.append("\t".join(["src"] + rec.src_tokens))
        lines.append("\t".join(["tgt"] + rec.tgt_tokens))
        for flow in FLOWS:
            if flow not in rec.matrices:
                continue
            lines.append(f"flow {flow}")
            lines.extend("\t".join(f"{v:.6f}" for v in row) for row in rec.matrices[flow])
        blocks.append("\n".join(lines))
    path = Path(out_path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n\n".join(blocks) + ("\n" if blocks else ""), encoding="utf-8")
    except OSError as e:
        raise DataError(f"Could not write alignment dump {path}: {e}") from e


def dump_alignments(
    params: DPNParams,
    pairs: Sequence[SentencePair],
    vocab_src: Vocabulary,
    vocab_tgt: Vocabulary,
    out_path,
    layer: int = -1,
) -> List[AttentionRecord]:
    records = collect_alignments(params, pairs, vocab_src, vocab_tgt, layer)
    write_alignments(records, out_path)
    logger.info(f"Wrote alignments of {len(records)} sentences to {out_path}")
    return records


def parse_alignments(path) -> List[AttentionRecord]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"Could not read alignment dump {path}: {e}") from e

    records = []
    for block in (b for b in text.split("\n\n") if b.strip()):
        lines = block.strip("\n").split("\n")
        head = lines[0].split()
        if len(head) != 4 or head[0] != "sentence":
            raise DataError(f"{path}: bad sentence header {lines[0]!r}")
        sid, m, n = int(head[1]), int(head[2]), int(head[3])
        src = lines[1].split("\t")[1:]
        tgt = lines[2].split("\t")[1:]
        matrices = {}
        i = 3
        while i < len(lines):
            if not lines[i].startswith("flow "):
                raise DataError(f"{path}: expected a flow label in sentence {sid}, got {lines[i]!r}")
            flow = lines[i].split()[1]
            rows = lines[i + 1 : i + 1 + n]
            matrix = np.array([[float(v) for v in row.split("\t")] for row in rows], dtype=np.float64)
            if matrix.shape != (n, m):
                raise DataError(f"{path}: sentence {sid} flow {flow} has shape {matrix.shape}, expected {(n, m)}")
            matrices[flow] = matrix
            i += 1 + n
        records.append(AttentionRecord(sid, src, tgt, matrices))
    return records


@dataclass
class EntropyReport:
    cells: Dict[str, Optional[float]]
    sentences: int

    def render(self) -> str:
        header = f"{'':<14}{'CNN encoder':>14}{'SAN encoder':>14}"
        rows = [header]
        for dec in ("c", "a"):
            values = []
            for enc in ("c", "a"):
                value = self.cells.get(dec + enc)
                values.append(f"{value:>14.3f}" if value is not None else f"{'-':>14}")
            rows.append(f"{PATH_NAMES[dec] + ' decoder':<14}" + "".join(values))
        rows.append(f"sentences: {self.sentences}")
        return "\n".join(rows) + "\n"


def entropy_report(records: Sequence[AttentionRecord]) -> EntropyReport:
    """Mean over sentences of each flow's sentence-level mean entropy (decoder path x encoder path)."""
    if not records:
        raise DataError("Entropy report needs at least one alignment record")
    per_flow: Dict[str, List[float]] = {flow: [] for flow in FLOWS}
    for rec in records:
        for flow, value in attention_entropy(rec).items():
            per_flow[flow].append(value)
    cells = {flow: (math.fsum(v) / len(v) if v else None) for flow, v in per_flow.items()}
    missing = [flow for flow, value in cells.items() if value is None]
    if missing:
        logger.warning(f"Flows {', '.join(missing)} are absent from this model; report cells left empty")
    return EntropyReport(cells=cells, sentences=len(records))
