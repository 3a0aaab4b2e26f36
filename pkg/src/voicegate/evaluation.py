"""Evaluation harness: manifest-driven dataset loading, ROC/EER/AUC metrics,
and the per-speaker enrollment protocol comparing best-match scoring against
the mean-cosine baseline.

The protocol enrolls one speaker at a time from a seeded subsample of that
speaker's training split, fixes the accept threshold at the validation-set
equal-error-rate point, then reports accuracy and F1 on the test split (all
speakers, natural genuine:impostor ratio) alongside the threshold-free
validation EER and AUC. Results are reported per speaker and averaged.
"""

from __future__ import annotations

import csv
import math
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .asv import EnrollmentSet, best_match_similarity, extract_dvector, mcs_similarity
from .dsp import StreamConfig, extract_mfcc, read_wav, window_from_samples
from .nn import WeightBundle

METHODS = ("asv", "mcs")
DEFAULT_N_VALUES = (1, 8, 16, 64)
DEFAULT_SPLIT_FRACTIONS = {"train": 0.68, "val": 0.16, "test": 0.16}
SPLITS = ("train", "val", "test")


class DatasetError(ValueError):
    """A manifest or score set is unusable."""


@dataclass(frozen=True)
class LabeledUtterance:
    path: str
    speaker: str
    keyword: bool
    split: str


@dataclass(frozen=True)
class RejectedFile:
    path: str
    reason: str


@dataclass
class DatasetLoadResult:
    utterances: list[LabeledUtterance]
    rejected: list[RejectedFile]
    split_warnings: list[str]


def _parse_flag(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "keyword"):
        return True
    if value in ("0", "false", "no", "unknown", "silence"):
        return False
    raise ValueError(f"unrecognized keyword flag {raw!r}")


def load_dataset(
    root,
    manifest_path,
    cfg: StreamConfig,
    expected_fractions: dict[str, float] | None = None,
) -> DatasetLoadResult:
    """Read a ``path,speaker,keyword,split`` manifest and validate every file.

    Files that are missing, not mono 16-bit PCM at the configured rate, or not
    exactly one window long are rejected individually with a reason. Split
    proportions are checked per speaker against ``expected_fractions`` within
    one utterance and reported as warnings, preserving the manifest order of
    accepted rows.
    """
    if expected_fractions is None:
        expected_fractions = DEFAULT_SPLIT_FRACTIONS
    root = Path(root)
    accepted: list[LabeledUtterance] = []
    rejected: list[RejectedFile] = []

    with Path(manifest_path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"path", "speaker", "keyword", "split"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DatasetError(
                f"manifest must have columns {sorted(required)}, got {reader.fieldnames}"
            )
        for row in reader:
            rel = row["path"].strip()
            full = root / rel
            try:
                keyword = _parse_flag(row["keyword"])
                split = row["split"].strip().lower()
                if split not in SPLITS:
                    raise ValueError(f"unknown split {row['split']!r}")
                with wave.open(str(full), "rb") as wf:
                    if wf.getnchannels() != 1:
                        raise ValueError(f"{wf.getnchannels()} channels, expected mono")
                    if wf.getsampwidth() != 2:
                        raise ValueError(f"{8 * wf.getsampwidth()}-bit, expected 16-bit")
                    if wf.getframerate() != cfg.sample_rate_hz:
                        raise ValueError(
                            f"sample rate {wf.getframerate()} != {cfg.sample_rate_hz}"
                        )
                    if wf.getnframes() != cfg.window_samples:
                        raise ValueError(
                            f"{wf.getnframes()} samples, expected {cfg.window_samples}"
                        )
            except (OSError, ValueError, wave.Error) as err:
                rejected.append(RejectedFile(path=rel, reason=str(err)))
                continue
            accepted.append(
                LabeledUtterance(path=str(full), speaker=row["speaker"].strip(),
                                 keyword=keyword, split=split)
            )

    warnings = []
    by_speaker: dict[str, list[LabeledUtterance]] = {}
    for utt in accepted:
        by_speaker.setdefault(utt.speaker, []).append(utt)
    for speaker, utts in sorted(by_speaker.items()):
        total = len(utts)
        for split in SPLITS:
            actual = sum(1 for u in utts if u.split == split)
            expected = round(expected_fractions[split] * total)
            if abs(actual - expected) > 1:
                warnings.append(
                    f"speaker {speaker}: split {split} has {actual} utterances, "
                    f"expected about {expected} of {total}"
                )
    return DatasetLoadResult(utterances=accepted, rejected=rejected, split_warnings=warnings)


# ---------------------------------------------------------------------------
# ROC / EER / AUC
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RocPoint:
    threshold: float
    fpr: float
    fnr: float
    tpr: float


@dataclass(frozen=True)
class RocCurve:
    points: list[RocPoint]


def compute_roc(genuine_scores, impostor_scores) -> RocCurve:
    """Threshold sweep over every distinct score with the strict accept rule
    score > threshold.

    Sentinel points at +inf and -inf anchor the curve at (FPR, TPR) = (0, 0)
    and (1, 1) so the trapezoidal area equals the pairwise
    win-plus-half-tie probability.
    """
    genuine = np.asarray(list(genuine_scores), dtype=np.float64)
    impostor = np.asarray(list(impostor_scores), dtype=np.float64)
    if genuine.size == 0 or impostor.size == 0:
        raise DatasetError("both genuine and impostor score lists must be non-empty")

    thresholds = [math.inf]
    thresholds.extend(sorted(set(genuine.tolist()) | set(impostor.tolist()), reverse=True))
    thresholds.append(-math.inf)

    points = []
    for tau in thresholds:
        tpr = float(np.mean(genuine > tau))
        fpr = float(np.mean(impostor > tau))
        points.append(RocPoint(threshold=tau, fpr=fpr, fnr=1.0 - tpr, tpr=tpr))
    return RocCurve(points=points)


def eer_and_threshold(curve: RocCurve) -> tuple[float, float]:
    """Equal error rate and its operating threshold.

    The threshold is the swept score minimizing |FPR - FNR| (lower threshold
    on ties, sentinels excluded); the rate itself is interpolated linearly
    when the FPR/FNR crossing falls between adjacent sweep points. FPR - FNR
    is monotone along the sweep, so the crossing is unique.
    """
    pts = curve.points
    finite = [p for p in pts if math.isfinite(p.threshold)]
    candidates = finite if finite else pts
    best = min(candidates, key=lambda p: (abs(p.fpr - p.fnr), p.threshold))
    tau = best.threshold

    zeros = [p for p in pts if p.fpr == p.fnr]
    if zeros:
        return zeros[0].fpr, tau

    for a, b in zip(pts, pts[1:]):
        da = a.fpr - a.fnr
        db = b.fpr - b.fnr
        if da < 0.0 < db:
            t = -da / (db - da)
            return a.fpr + t * (b.fpr - a.fpr), tau
    return (best.fpr + best.fnr) / 2.0, tau


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under TPR vs FPR."""
    pts = curve.points
    area = 0.0
    for a, b in zip(pts, pts[1:]):
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0
    return area


# ---------------------------------------------------------------------------
# Enrollment protocol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellMetrics:
    accuracy: float
    f1: float
    eer: float
    auc: float
    threshold: float


@dataclass
class EvalReport:
    methods: tuple[str, ...]
    n_values: tuple[int, ...]
    seed: int
    speakers: list[str]
    cells: dict = field(default_factory=dict)  # (method, n, speaker) -> CellMetrics
    skipped: dict = field(default_factory=dict)  # (method, n, speaker) -> reason
    # (method, n, speaker) -> indices into the speaker's training split, in
    # enrollment order; lets a caller reproduce a cell's enrolled set exactly.
    enrollment_indices: dict = field(default_factory=dict)

    def average(self, method: str, n: int) -> CellMetrics | None:
        values = [
            self.cells[(method, n, s)] for s in self.speakers if (method, n, s) in self.cells
        ]
        if not values:
            return None
        return CellMetrics(
            accuracy=float(np.mean([v.accuracy for v in values])),
            f1=float(np.mean([v.f1 for v in values])),
            eer=float(np.mean([v.eer for v in values])),
            auc=float(np.mean([v.auc for v in values])),
            threshold=float(np.mean([v.threshold for v in values])),
        )


def _score_fn(method: str, vectors: np.ndarray):
    enrollment = EnrollmentSet(capacity=len(vectors), vectors=[v for v in vectors])
    if method == "asv":
        return lambda probe: best_match_similarity(probe, enrollment)[0]
    if method == "mcs":
        return lambda probe: mcs_similarity(probe, enrollment)
    raise ValueError(f"unknown method {method!r}")


def _binary_metrics(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[float, float]:
    accuracy = float(np.mean(y_true == y_pred))
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return accuracy, f1


def run_protocol_on_vectors(
    vectors_by_speaker: dict[str, dict[str, np.ndarray]],
    methods=METHODS,
    n_values=DEFAULT_N_VALUES,
    seed: int = 0,
) -> EvalReport:
    """Core protocol over precomputed embedding vectors.

    ``vectors_by_speaker[speaker][split]`` is a (count, dim) array. For each
    (speaker, n): enroll the first n of a seeded per-speaker shuffle of the
    training vectors (subsets are nested across n), pick the threshold at the
    validation EER, then score the full test population.
    """
    speakers = sorted(vectors_by_speaker)
    if len(speakers) < 2:
        raise DatasetError("protocol needs at least 2 speakers")
    report = EvalReport(
        methods=tuple(methods), n_values=tuple(n_values), seed=seed, speakers=speakers
    )

    orders = {}
    for index, speaker in enumerate(speakers):
        rng = np.random.default_rng([seed, index])
        count = len(vectors_by_speaker[speaker].get("train", ()))
        orders[speaker] = rng.permutation(count)

    for speaker in speakers:
        splits = vectors_by_speaker[speaker]
        genuine_val = splits.get("val")
        genuine_test = splits.get("test")
        impostor_val = [vectors_by_speaker[s]["val"] for s in speakers
                        if s != speaker and "val" in vectors_by_speaker[s]]
        impostor_test = [vectors_by_speaker[s]["test"] for s in speakers
                         if s != speaker and "test" in vectors_by_speaker[s]]
        for n in n_values:
            for method in methods:
                key = (method, n, speaker)
                train = splits.get("train")
                if train is None or len(train) < n:
                    report.skipped[key] = (
                        f"needs {n} training vectors, speaker has {0 if train is None else len(train)}"
                    )
                    continue
                if genuine_val is None or len(genuine_val) == 0 or not impostor_val:
                    report.skipped[key] = "missing validation vectors"
                    continue
                if genuine_test is None or len(genuine_test) == 0 or not impostor_test:
                    report.skipped[key] = "missing test vectors"
                    continue

                chosen = orders[speaker][:n]
                enrolled = train[chosen]
                report.enrollment_indices[key] = [int(i) for i in chosen]
                score = _score_fn(method, enrolled)

                g_val = np.array([score(v) for v in genuine_val])
                i_val = np.array([score(v) for v in np.concatenate(impostor_val)])
                curve = compute_roc(g_val, i_val)
                eer, tau = eer_and_threshold(curve)
                area = auc(curve)

                g_test = np.array([score(v) for v in genuine_test])
                i_test = np.array([score(v) for v in np.concatenate(impostor_test)])
                scores = np.concatenate([g_test, i_test])
                truth = np.concatenate([np.ones(len(g_test)), np.zeros(len(i_test))])
                predicted = (scores > tau).astype(int)
                accuracy, f1 = _binary_metrics(truth, predicted)

                report.cells[key] = CellMetrics(
                    accuracy=accuracy, f1=f1, eer=eer, auc=area, threshold=tau
                )
    return report


def extract_dataset_vectors(
    utterances: list[LabeledUtterance],
    bundle: WeightBundle,
    cfg: StreamConfig,
) -> dict[str, dict[str, np.ndarray]]:
    """Embed every utterance once, grouped by speaker and split."""
    grouped: dict[str, dict[str, list[np.ndarray]]] = {}
    for utt in utterances:
        samples = read_wav(utt.path, cfg.sample_rate_hz)
        window = window_from_samples(samples, cfg)
        dvector = extract_dvector(bundle, extract_mfcc(window, cfg))
        grouped.setdefault(utt.speaker, {}).setdefault(utt.split, []).append(dvector)
    return {
        speaker: {split: np.stack(vecs) for split, vecs in splits.items()}
        for speaker, splits in grouped.items()
    }


def run_protocol(
    utterances: list[LabeledUtterance],
    bundle: WeightBundle,
    cfg: StreamConfig,
    methods=METHODS,
    n_values=DEFAULT_N_VALUES,
    seed: int = 0,
) -> EvalReport:
    vectors = extract_dataset_vectors(utterances, bundle, cfg)
    return run_protocol_on_vectors(vectors, methods=methods, n_values=n_values, seed=seed)


# ---------------------------------------------------------------------------
# Report output
# ---------------------------------------------------------------------------

REPORT_HEADER_NOTE = (
    "test populations use the natural genuine:impostor ratio of the test split"
)


def report_to_csv(report: EvalReport, path):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["# " + REPORT_HEADER_NOTE])
        writer.writerow(["method", "n", "speaker", "accuracy", "f1", "eer", "auc", "threshold"])
        for method in report.methods:
            for n in report.n_values:
                for speaker in report.speakers:
                    key = (method, n, speaker)
                    if key in report.cells:
                        m = report.cells[key]
                        writer.writerow(
                            [method, n, speaker, f"{m.accuracy:.6f}", f"{m.f1:.6f}",
                             f"{m.eer:.6f}", f"{m.auc:.6f}", f"{m.threshold:.6f}"]
                        )
                    elif key in report.skipped:
                        writer.writerow([method, n, speaker, "skipped:" + report.skipped[key]])
                avg = report.average(method, n)
                if avg:
                    writer.writerow(
                        [method, n, "average", f"{avg.accuracy:.6f}", f"{avg.f1:.6f}",
                         f"{avg.eer:.6f}", f"{avg.auc:.6f}", f"{avg.threshold:.6f}"]
                    )


def format_report_table(report: EvalReport) -> str:
    lines = [f"# {REPORT_HEADER_NOTE}"]
    header = f"{'method':<8}{'metric':<10}" + "".join(f"n={n:<8}" for n in report.n_values)
    lines.append(header)
    for method in report.methods:
        for metric in ("accuracy", "f1", "eer", "auc"):
            row = f"{method:<8}{metric:<10}"
            for n in report.n_values:
                avg = report.average(method, n)
                row += f"{getattr(avg, metric):<10.3f}" if avg else f"{'-':<10}"
            lines.append(row)
    return "\n".join(lines)
