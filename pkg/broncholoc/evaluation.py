"""
evaluation.py

Contains the scoring harness: Top-k accuracy, confusion matrices, the
across-sequence mean used by the report tables, plus truth-label and
posterior file I/O and the ablation report writers.

"""
import logging
from dataclasses import astuple, dataclass, fields
from decimal import ROUND_HALF_UP, Decimal
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from .errors import EvaluationError
from .tables import format_float, read_csv_with_fallback

logger = logging.getLogger(__name__)

MEAN_LABEL = 'Mean'


@dataclass(frozen=True)
class SequenceResult:
    """
    `rankings[t]` lists every node index for frame t, best first.
    `truth[t]` is the ground-truth node index.
    """

    rankings: np.ndarray
    truth: np.ndarray
    sequence_id: str = ''

    def __post_init__(self):
        rankings = np.asarray(self.rankings, dtype=np.int64)
        truth = np.asarray(self.truth, dtype=np.int64)
        if rankings.ndim != 2 or rankings.shape[0] != truth.shape[0]:
            raise EvaluationError(
                EvaluationError.LENGTH_MISMATCH,
                '{0} predictions, {1} truth labels'.format(
                    rankings.shape[0] if rankings.ndim else 0, truth.shape[0]))
        object.__setattr__(self, 'rankings', rankings)
        object.__setattr__(self, 'truth', truth)

    def __len__(self):
        return self.truth.shape[0]

    @property
    def n(self) -> int:
        return self.rankings.shape[1]

    @property
    def top1(self) -> np.ndarray:
        return self.rankings[:, 0]


def _rank(scores: np.ndarray) -> np.ndarray:
    # stable sort on the negated score: equal scores keep ascending index
    return np.argsort(-scores, axis=1, kind='stable')


def result_from_posteriors(posteriors, truth, sequence_id='') -> SequenceResult:
    return SequenceResult(_rank(np.asarray(posteriors, dtype=float)), truth,
                          sequence_id)


def result_from_scores(scores, truth, sequence_id='') -> SequenceResult:
    """Any per-frame node scores where larger is better (e.g. log scores)."""
    return SequenceResult(_rank(np.asarray(scores, dtype=float)), truth,
                          sequence_id)


def result_from_path(states: Sequence[int], truth, n: int,
                     sequence_id='') -> SequenceResult:
    """A decoded path ranks its own state first, the rest by index."""
    rankings = np.empty((len(states), n), dtype=np.int64)
    for t, s in enumerate(states):
        rankings[t] = [s] + [i for i in range(n) if i != s]
    return SequenceResult(rankings, truth, sequence_id)


def topk_accuracy(result: SequenceResult, k: int) -> float:
    if k < 1:
        raise EvaluationError(EvaluationError.BAD_K, 'k={0}'.format(k))
    if len(result) == 0:
        raise EvaluationError(EvaluationError.EMPTY)
    top = result.rankings[:, :min(k, result.n)]
    hits = np.any(top == result.truth[:, None], axis=1)
    return float(hits.mean())


def confusion_matrix(result: SequenceResult, n: Optional[int] = None
                     ) -> np.ndarray:
    """Counts indexed [true node, predicted top-1 node]."""
    if len(result) == 0:
        raise EvaluationError(EvaluationError.EMPTY)
    n = result.n if n is None else n
    matrix = np.zeros((n, n), dtype=np.int64)
    np.add.at(matrix, (result.truth, result.top1), 1)
    return matrix


def mean_over_sequences(accuracies: Sequence[float]) -> float:
    """Unweighted mean; every sequence counts once whatever its length."""
    if len(accuracies) == 0:
        raise EvaluationError(EvaluationError.EMPTY)
    return float(np.mean(np.asarray(accuracies, dtype=float)))


def round_half_up(value: float, digits: int = 2) -> float:
    """
    Rounds for display the way the report tables do (0.705 -> 0.71). The
    value is first cut to 9 decimals so binary representation error does
    not pull x.xx5 below the midpoint.
    """
    quantum = Decimal(1).scaleb(-digits)
    return float(Decimal(str(round(float(value), 9)))
                 .quantize(quantum, rounding=ROUND_HALF_UP))


# ---------------------------------------------------------------------------
# Truth and posterior files
# ---------------------------------------------------------------------------

def read_truth_file(path, tree) -> List[int]:
    """One node label per line, in frame order. Blank lines are skipped."""
    truth = []
    with open(path, 'r', encoding='utf-8') as handle:
        for lineno, raw in enumerate(handle, start=1):
            label = raw.strip()
            if not label:
                continue
            if label not in tree.nodes:
                raise EvaluationError(EvaluationError.UNKNOWN_LABEL,
                                      'line {0}: {1!r}'.format(lineno, label))
            truth.append(tree.nodes.index(label))
    return truth


def write_truth_file(path, tree, truth: Sequence[int]) -> None:
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        for i in truth:
            handle.write(tree.nodes[int(i)] + '\n')


class PosteriorWriter(object):
    """
    Streams posterior rows (`frame,<labels...>`) to an open text handle,
    flushing after each row so readers see frame t before t+1 is computed.
    """

    def __init__(self, handle, labels: Sequence[str]):
        self.handle = handle
        self.handle.write(','.join(['frame'] + list(labels)) + '\n')
        self.handle.flush()

    def write(self, frame: int, probs) -> None:
        values = ','.join(format_float(p) for p in np.asarray(probs).ravel())
        self.handle.write('{0},{1}\n'.format(int(frame), values))
        self.handle.flush()


def write_posterior_file(path, labels: Sequence[str], posteriors,
                         frames: Optional[Sequence[int]] = None) -> None:
    posteriors = np.asarray(posteriors, dtype=float)
    frames = range(posteriors.shape[0]) if frames is None else frames
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        writer = PosteriorWriter(handle, labels)
        for t, row in zip(frames, posteriors):
            writer.write(t, row)


def read_posterior_file(path):
    """Returns (labels, frame numbers, T x n posterior array)."""
    df = read_csv_with_fallback(path)
    if df.columns[0] != 'frame':
        raise EvaluationError(EvaluationError.UNKNOWN_LABEL,
                              "{0}: first column must be 'frame'".format(path))
    labels = [str(c) for c in df.columns[1:]]
    frames = df['frame'].astype(np.int64).tolist()
    return labels, frames, df[labels].to_numpy(dtype=float)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AblationRow:
    sequence: str
    frame_classifier: str
    bayesian: bool
    branching_detector: bool
    method: str
    top1: float
    top3: float


REPORT_COLUMNS = ('Seq', 'Frame Classifier', 'Bayesian',
                  'Branching Detector', 'Method', 'Top-1', 'Top-3')


def with_mean_rows(rows: Sequence[AblationRow]) -> List[AblationRow]:
    """Appends one unweighted Mean row per method variant."""
    out = list(rows)
    groups: Dict[tuple, List[AblationRow]] = {}
    for row in rows:
        if row.sequence == MEAN_LABEL:
            continue
        key = (row.frame_classifier, row.bayesian, row.branching_detector,
               row.method)
        groups.setdefault(key, []).append(row)
    for key, members in groups.items():
        out.append(AblationRow(
            MEAN_LABEL, *key,
            top1=mean_over_sequences([r.top1 for r in members]),
            top3=mean_over_sequences([r.top3 for r in members])))
    return out


def report_frame(rows: Sequence[AblationRow]) -> pd.DataFrame:
    return pd.DataFrame([astuple(r) for r in rows],
                        columns=list(REPORT_COLUMNS))


def format_report(rows: Sequence[AblationRow]) -> str:
    """Human-readable table with accuracies rounded to two decimals."""
    df = report_frame(rows)
    for col in ('Bayesian', 'Branching Detector'):
        df[col] = df[col].map({True: 'x', False: ''})
    for col in ('Top-1', 'Top-3'):
        df[col] = df[col].map(lambda v: '{0:.2f}'.format(round_half_up(v)))
    return df.to_string(index=False)


def write_report_csv(rows: Sequence[AblationRow], path) -> None:
    df = report_frame(rows)
    for col in ('Top-1', 'Top-3'):
        df[col] = df[col].map(format_float)
    df.to_csv(path, index=False, lineterminator='\n')


def read_report_csv(path) -> List[AblationRow]:
    df = read_csv_with_fallback(path)
    names = [f.name for f in fields(AblationRow)]
    rows = []
    for record in df.itertuples(index=False, name=None):
        values = dict(zip(names, record))
        values['sequence'] = str(values['sequence'])
        values['bayesian'] = bool(values['bayesian'])
        values['branching_detector'] = bool(values['branching_detector'])
        rows.append(AblationRow(**values))
    return rows


def plot_confusion_matrix(matrix, labels: Sequence[str], path,
                          title: str = 'Confusion matrix') -> None:
    matrix = np.asarray(matrix)
    size = max(4.0, 0.45 * len(labels) + 2.0)
    fig = Figure(figsize=(size, size), dpi=100)
    ax = fig.add_subplot(111)
    image = ax.imshow(matrix, cmap='Blues')
    fig.colorbar(image, ax=ax, fraction=0.046, pad=0.04)
    ax.set_xticks(range(len(labels)))
    ax.set_yticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=90)
    ax.set_yticklabels(labels)
    ax.set_xlabel('Predicted (Top-1)')
    ax.set_ylabel('True')
    ax.set_title(title)
    limit = matrix.max() / 2.0 if matrix.size else 0
    for (r, c), count in np.ndenumerate(matrix):
        if count:
            ax.text(c, r, str(count), ha='center', va='center', fontsize=7,
                    color='white' if count > limit else 'black')
    fig.tight_layout()
    fig.savefig(str(path))
    logger.info('confusion matrix written to %s', path)
