"""Per-company engineered features, labels, corpus statistics and splits.

Derivation is total by construction: missing numeric inputs contribute 0,
a missing founding/creation date yields the age sentinel -1, and binary
event flags default to 0, so no profile field is ever null. The positive
label marks an exit: the company either went public or was acquired
(acquiree role only; acquiring another company is not an exit).
"""

from __future__ import annotations

import csv
import json
import random
import re
from dataclasses import dataclass
from datetime import date
from typing import Optional

import numpy as np

from .errors import DataError
from .ingest import CompanyStore, OrganizationRow

# Snapshot date the age feature is measured against; override per run.
DEFAULT_REFERENCE_DATE = date(2025, 6, 11)

AGE_SENTINEL = -1.0
DAYS_PER_YEAR = 365.25

# Editable ruleset for counting executive-level jobs; matched
# case-insensitively on word boundaries within the job title.
EXECUTIVE_TITLE_KEYWORDS = (
    "chief",
    "ceo",
    "cfo",
    "cto",
    "coo",
    "founder",
    "president",
    "vp",
    "vice president",
)

# The model/prompt feature set. Event flags (had_ipo, was_acquired) are
# label material and deliberately excluded.
FEATURE_COLUMNS = (
    "age_years",
    "total_raised_usd",
    "num_funding_rounds",
    "num_investors",
    "num_acquisitions_made",
    "num_executives",
)

PROFILE_FIELDS = (
    "org_id",
    "name",
    "description",
    "age_years",
    "total_raised_usd",
    "num_funding_rounds",
    "num_investors",
    "num_acquisitions_made",
    "num_executives",
    "had_ipo",
    "was_acquired",
    "success",
    "age_imputed",
    "raised_imputed",
)

DESC_TOKEN_BUCKETS = (0, 8, 16, 32, 64, 128, 256, 512)


@dataclass(frozen=True)
class CompanyProfile:
    org_id: str
    name: str
    description: str
    age_years: float
    total_raised_usd: float
    num_funding_rounds: int
    num_investors: int
    num_acquisitions_made: int
    num_executives: int
    had_ipo: int
    was_acquired: int
    success: int
    # Provenance: whether the value above came from an imputation default.
    age_imputed: int
    raised_imputed: int


def _executive_pattern(keywords) -> re.Pattern:
    alternatives = "|".join(re.escape(k) for k in keywords)
    return re.compile(rf"\b(?:{alternatives})\b", re.IGNORECASE)


_DEFAULT_EXEC_PATTERN = _executive_pattern(EXECUTIVE_TITLE_KEYWORDS)


def compute_age(founded_on: Optional[date], reference_date: date) -> float:
    """Fractional years between founding and the reference date.

    Returns the sentinel -1 when no date is available. A founding date in
    the future of the reference date is a data anomaly and raises rather
    than being clamped.
    """
    if founded_on is None:
        return AGE_SENTINEL
    if founded_on > reference_date:
        raise DataError(
            f"founding date {founded_on.isoformat()} is after the reference "
            f"date {reference_date.isoformat()}"
        )
    return (reference_date - founded_on).days / DAYS_PER_YEAR


def derive_label(org_id: str, store: CompanyStore) -> int:
    """1 iff the company had an IPO or appears as acquiree in an acquisition."""
    if store.ipos_by_org(org_id):
        return 1
    if store.acquisitions_of(org_id):
        return 1
    return 0


def derive_profile(
    org: OrganizationRow,
    store: CompanyStore,
    reference_date: date = DEFAULT_REFERENCE_DATE,
    executive_keywords=None,
) -> CompanyProfile:
    """Derive the full engineered profile for one organization.

    Age prefers the founding date and falls back to the record-creation
    date; both absent gives the -1 sentinel. All other numeric features
    impute missing inputs with zero.
    """
    date_source = org.founded_on if org.founded_on is not None else org.created_at
    age = compute_age(date_source, reference_date)

    rounds = store.rounds_by_org(org.org_id)
    amounts = [r.raised_usd for r in rounds if r.raised_usd is not None]
    total_raised = float(sum(amounts))

    investor_ids = set()
    for r in rounds:
        for inv in store.investments_by_round(r.round_id):
            investor_ids.add(inv.investor_id)

    pattern = (
        _DEFAULT_EXEC_PATTERN
        if executive_keywords is None
        else _executive_pattern(executive_keywords)
    )
    num_execs = sum(1 for job in store.jobs_by_org(org.org_id) if pattern.search(job.title))

    had_ipo = 1 if store.ipos_by_org(org.org_id) else 0
    was_acquired = 1 if store.acquisitions_of(org.org_id) else 0

    return CompanyProfile(
        org_id=org.org_id,
        name=org.name,
        description=org.description,
        age_years=age,
        total_raised_usd=total_raised,
        num_funding_rounds=len(rounds),
        num_investors=len(investor_ids),
        num_acquisitions_made=len(store.acquisitions_made_by(org.org_id)),
        num_executives=num_execs,
        had_ipo=had_ipo,
        was_acquired=was_acquired,
        success=1 if (had_ipo or was_acquired) else 0,
        age_imputed=1 if date_source is None else 0,
        raised_imputed=1 if (rounds and not amounts) else 0,
    )


def derive_profiles(store: CompanyStore, reference_date: date = DEFAULT_REFERENCE_DATE):
    """Derive profiles for every organization, in load order.

    Returns ``(profiles, anomalies)`` where anomalies lists
    ``(org_id, message)`` pairs for organizations skipped due to data
    anomalies (e.g. future-dated founding).
    """
    profiles, anomalies = [], []
    for org in store.organizations:
        try:
            profiles.append(derive_profile(org, store, reference_date))
        except DataError as exc:
            anomalies.append((org.org_id, str(exc)))
    return profiles, anomalies


def feature_vector(profile: CompanyProfile) -> list:
    return [float(getattr(profile, name)) for name in FEATURE_COLUMNS]


def feature_matrix(profiles) -> np.ndarray:
    return np.array([feature_vector(p) for p in profiles], dtype=np.float64)


def label_vector(profiles) -> np.ndarray:
    return np.array([p.success for p in profiles], dtype=np.float64)


def _bucket_label(edges, i) -> str:
    if i == len(edges) - 1:
        return f"{edges[i]}+"
    return f"{edges[i]}-{edges[i + 1] - 1}"


@dataclass
class CorpusStats:
    n_total: int
    n_positive: int
    n_negative: int
    positive_ratio: float
    desc_token_histogram: dict
    feature_summary: dict

    def to_dict(self) -> dict:
        return {
            "n_total": self.n_total,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "positive_ratio": self.positive_ratio,
            "desc_token_histogram": self.desc_token_histogram,
            "feature_summary": self.feature_summary,
        }


def corpus_stats(profiles, token_counter=None) -> CorpusStats:
    """Class balance, description-length histogram and per-feature summary.

    ``token_counter`` maps a string to a token count; defaults to the
    deterministic counter used for prompt budgeting.
    """
    if token_counter is None:
        from .prompts import count_tokens as token_counter  # no module-level cycle

    edges = DESC_TOKEN_BUCKETS
    histogram = {_bucket_label(edges, i): 0 for i in range(len(edges))}
    for p in profiles:
        n_tokens = token_counter(p.description)
        idx = 0
        for i in range(len(edges)):
            if n_tokens >= edges[i]:
                idx = i
        histogram[_bucket_label(edges, idx)] += 1

    n_total = len(profiles)
    n_pos = sum(p.success for p in profiles)

    summary = {}
    for name in FEATURE_COLUMNS:
        values = [float(getattr(p, name)) for p in profiles]
        if name == "age_years":
            missing = [p.age_imputed for p in profiles]
        elif name == "total_raised_usd":
            missing = [p.raised_imputed for p in profiles]
        else:
            missing = []
        summary[name] = {
            "min": min(values) if values else 0.0,
            "median": float(np.median(values)) if values else 0.0,
            "max": max(values) if values else 0.0,
            "missing_rate": (sum(missing) / n_total) if (missing and n_total) else 0.0,
        }

    return CorpusStats(
        n_total=n_total,
        n_positive=int(n_pos),
        n_negative=n_total - int(n_pos),
        positive_ratio=(n_pos / n_total) if n_total else 0.0,
        desc_token_histogram=histogram,
        feature_summary=summary,
    )


def balance_dataset(profiles, seed: int):
    """Undersample the majority class to the minority count (seeded, uniform).

    Keeps the original corpus order among retained profiles; an already
    balanced input comes back unchanged.
    """
    pos_idx = [i for i, p in enumerate(profiles) if p.success == 1]
    neg_idx = [i for i, p in enumerate(profiles) if p.success == 0]
    if not pos_idx or not neg_idx:
        raise DataError("both classes must be non-empty to balance")
    if len(pos_idx) == len(neg_idx):
        return list(profiles)

    major, minor = (pos_idx, neg_idx) if len(pos_idx) > len(neg_idx) else (neg_idx, pos_idx)
    rng = random.Random(seed)
    keep = set(rng.sample(major, len(minor))) | set(minor)
    return [p for i, p in enumerate(profiles) if i in keep]


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple = (0.8, 0.1, 0.1)
    seed: int = 0
    stratified: bool = True

    def validate(self) -> None:
        if len(self.ratios) != 3 or any(r <= 0 for r in self.ratios):
            raise ValueError("ratios must be three positive numbers")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"ratios must sum to 1, got {sum(self.ratios)}")


def _largest_remainder(n: int, ratios) -> list:
    quotas = [n * r for r in ratios]
    base = [int(q) for q in quotas]
    remainder = n - sum(base)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:remainder]:
        base[i] += 1
    return base


def split_dataset(profiles, spec: SplitSpec):
    """Partition profiles into (train, val, test) by the spec's ratios.

    Stratified mode applies largest-remainder sizing within each class, so
    class ratios are preserved to within one company per split. The split
    is a true partition: disjoint, exhaustive, deterministic per seed.
    """
    spec.validate()
    if len(profiles) < 3:
        raise DataError(f"need at least 3 profiles to split, got {len(profiles)}")

    rng = random.Random(spec.seed)
    groups = (
        [
            [p for p in profiles if p.success == 1],
            [p for p in profiles if p.success == 0],
        ]
        if spec.stratified
        else [list(profiles)]
    )

    parts = ([], [], [])
    for group in groups:
        shuffled = list(group)
        rng.shuffle(shuffled)
        sizes = _largest_remainder(len(shuffled), spec.ratios)
        start = 0
        for i, size in enumerate(sizes):
            parts[i].extend(shuffled[start : start + size])
            start += size
    for part in parts:
        rng.shuffle(part)
    return parts


def write_profiles_csv(profiles, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PROFILE_FIELDS)
        for p in profiles:
            writer.writerow([getattr(p, name) for name in PROFILE_FIELDS])


def write_profiles_jsonl(profiles, path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for p in profiles:
            record = {name: getattr(p, name) for name in PROFILE_FIELDS}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            count += 1
    return count


def read_profiles_jsonl(path):
    profiles = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            profiles.append(CompanyProfile(**{name: obj[name] for name in PROFILE_FIELDS}))
    return profiles
