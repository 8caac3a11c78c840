"""Rendering feature tables into fine-tuning prompts and JSONL datasets.

Each record is one JSON object per line with exactly the keys ``user``,
``description``, ``query`` and ``answer``. Numbers are printed with 4
significant digits so rendered datasets are byte-stable. The template text
hard-codes a few phrases ("rest state" in the description, the "seconds"
unit after the explained-variance value) that the upstream recipe uses
verbatim; only age, gender, arithmetic score, the recording duration and the
five feature values per state are interpolated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateInputError, ValidationError
from .features import FeatureTable

ANSWER_REST = "Subject is at resting state."
ANSWER_LOAD = "Subject is at cognitive load state."

REQUIRED_STATES = ("A", "B", "C", "D")

FEATURE_DESC = (
    "gev: fraction of global field power variance explained by the state; "
    "mean_corr: mean spatial correlation of samples assigned to the state; "
    "timecov: time the state is active in seconds; "
    "meandurs: mean duration of the state's segments in seconds; "
    "occurrence: mean number of segments per second."
)

_DESCRIPTION = (
    "Subject of age {age}, a {gender} with eeg recorded during rest state. "
    "Subject's performed a good quality count on number of subtractions "
    "achieving a score of {score} during mental arithmetic tasks. Four eeg "
    "microstates have been extracted from the subject. Quantitative "
    "representation of EEG microstates across five features in a {duration} "
    "second period have been extracted, the brain activity is segmented into "
    "4 microstates. The feature descriptions used are as follows: {desc}"
)

_QUERY_INTRO = "The following are the parameters for each microstate features:"
_QUERY_OUTRO = ("Based on the EEG feature parameters above, can you determine "
                "the cognitive load state of the subject?")


@dataclass
class PromptRecord:
    user: str
    description: str
    query: str
    answer: str


def format_sig(x: float, digits: int = 4) -> str:
    """Positional decimal string with exactly ``digits`` significant digits."""
    if not math.isfinite(x):
        raise ValidationError(f"cannot format non-finite value {x}")
    if x == 0:
        return "0." + "0" * (digits - 1)
    exponent = math.floor(math.log10(abs(x)))
    for _ in range(2):  # rounding can bump the exponent (0.9999 -> 1.000)
        decimals = digits - 1 - exponent
        rounded = round(x, decimals)
        if rounded != 0 and math.floor(math.log10(abs(rounded))) != exponent:
            exponent += 1
            continue
        break
    if decimals > 0:
        return f"{rounded:.{decimals}f}"
    return f"{rounded:.0f}"


def render_prompt(table: FeatureTable) -> PromptRecord:
    """Fill the prompt template from one subject's feature table."""
    missing = [s for s in REQUIRED_STATES if s not in table.per_state]
    if missing:
        raise ValidationError(f"feature table is missing states: {', '.join(missing)}")
    table.subject.validate()

    description = _DESCRIPTION.format(
        age=table.subject.age,
        gender=table.subject.gender,
        score=table.subject.arithmetic_score,
        duration=format_sig(table.duration_s),
        desc=FEATURE_DESC,
    )

    lines = [_QUERY_INTRO]
    for state in REQUIRED_STATES:
        sf = table.per_state[state]
        lines.append(f"    Microstate {state}:")
        lines.append(f"        Global Explained Variance:{format_sig(sf.gev)} seconds.")
        lines.append(f"        Mean correlation:{format_sig(sf.mean_corr)}.")
        lines.append(f"        Time coverage:{format_sig(sf.timecov_seconds)} seconds.")
        lines.append(f"        Mean duration {format_sig(sf.meandurs_s)} seconds.")
        lines.append(f"        Occurrences:{format_sig(sf.occurrence_hz)} times.")
    lines.append(_QUERY_OUTRO)

    answer = ANSWER_REST if table.subject.condition == "Rest" else ANSWER_LOAD
    return PromptRecord(
        user=table.subject.subject_id,
        description=description,
        query="\n".join(lines),
        answer=answer,
    )


def emit_line(record: PromptRecord) -> str:
    """Canonical one-line JSON encoding; fixed key order, no trailing newline."""
    obj = {
        "user": record.user,
        "description": record.description,
        "query": record.query,
        "answer": record.answer,
    }
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def parse_line(line: str) -> PromptRecord:
    obj = json.loads(line)
    expected = {"user", "description", "query", "answer"}
    if set(obj) != expected:
        raise ValidationError(
            f"prompt record must have exactly the keys {sorted(expected)}, "
            f"got {sorted(obj)}"
        )
    return PromptRecord(user=str(obj["user"]), description=str(obj["description"]),
                        query=str(obj["query"]), answer=str(obj["answer"]))


def read_dataset(path: str | Path) -> list[PromptRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(parse_line(line))
    return records


def _write_jsonl(records: list[PromptRecord], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(emit_line(rec))
            fh.write("\n")


def _class_counts(records: list[PromptRecord]) -> dict:
    counts: dict[str, int] = {}
    for rec in records:
        counts[rec.answer] = counts.get(rec.answer, 0) + 1
    return dict(sorted(counts.items()))


def write_dataset(records: list[PromptRecord], train_fraction: float, seed: int,
                  out_dir: str | Path, stratify: bool = False) -> dict:
    """Seeded shuffle and split into train.jsonl / test.jsonl plus a summary.

    ``|train| = round(train_fraction * n)`` for the plain split; the
    stratified variant applies the same rule per answer class. An empty side
    is an error.
    """
    if not records:
        raise ValidationError("no records to split")
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train_fraction must be in (0, 1), got {train_fraction}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n = len(records)

    if stratify:
        train_idx: list[int] = []
        test_idx: list[int] = []
        by_class: dict[str, list[int]] = {}
        for i, rec in enumerate(records):
            by_class.setdefault(rec.answer, []).append(i)
        for answer in sorted(by_class):
            idx = np.asarray(by_class[answer])
            perm = idx[rng.permutation(idx.shape[0])]
            n_train = round(train_fraction * idx.shape[0])
            train_idx.extend(perm[:n_train].tolist())
            test_idx.extend(perm[n_train:].tolist())
        train_order = rng.permutation(len(train_idx))
        test_order = rng.permutation(len(test_idx))
        train = [records[train_idx[i]] for i in train_order]
        test = [records[test_idx[i]] for i in test_order]
    else:
        perm = rng.permutation(n)
        n_train = round(train_fraction * n)
        train = [records[i] for i in perm[:n_train]]
        test = [records[i] for i in perm[n_train:]]

    if not train or not test:
        raise DegenerateInputError(
            f"degenerate split: {len(train)} train / {len(test)} test records"
        )

    _write_jsonl(train, out_dir / "train.jsonl")
    _write_jsonl(test, out_dir / "test.jsonl")
    summary = {
        "n_total": n,
        "n_train": len(train),
        "n_test": len(test),
        "train_fraction": train_fraction,
        "seed": seed,
        "stratified": stratify,
        "class_balance": {"train": _class_counts(train), "test": _class_counts(test)},
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return summary
