"""Feature derivation, imputation, stats, balancing and splits."""

import math
import random
from collections import Counter
from datetime import date

import pytest

from ventureval.errors import DataError
from ventureval.features import (
    AGE_SENTINEL,
    FEATURE_COLUMNS,
    SplitSpec,
    balance_dataset,
    compute_age,
    corpus_stats,
    derive_label,
    derive_profile,
    derive_profiles,
    feature_vector,
    read_profiles_jsonl,
    split_dataset,
    write_profiles_jsonl,
)
from ventureval.ingest import (
    AcquisitionRow,
    FundingRoundRow,
    IpoRow,
    JobRow,
    OrganizationRow,
    build_store,
)

REF = date(2025, 6, 11)


def org(org_id="c1", founded=None, created=None, name="Org", description=""):
    return OrganizationRow(org_id, name, description, founded, created)


def test_age_five_years():
    assert abs(compute_age(date(2020, 6, 11), REF) - 5.0) < 0.01


def test_age_sentinel_when_absent():
    assert compute_age(None, REF) == AGE_SENTINEL


def test_age_zero_interval():
    assert compute_age(REF, REF) == 0.0


def test_future_founding_is_anomaly():
    with pytest.raises(DataError):
        compute_age(date(2030, 1, 1), REF)


def test_profile_all_defaults():
    store = build_store([org()])
    p = derive_profile(store.organizations[0], store, REF)
    assert p.total_raised_usd == 0.0
    assert p.num_funding_rounds == 0
    assert p.num_investors == 0
    assert p.num_acquisitions_made == 0
    assert p.num_executives == 0
    assert p.success == 0
    assert p.age_years == AGE_SENTINEL and p.age_imputed == 1


def test_profile_funding_and_distinct_investors(small_store):
    p = derive_profile(small_store.organization("c1"), small_store, REF)
    assert p.total_raised_usd == 3_500_000.0
    assert p.num_funding_rounds == 2
    assert p.num_investors == 2  # invA appears in both rounds
    assert p.num_executives == 2  # CEO + VP; the engineer does not match
    assert p.had_ipo == 1 and p.success == 1


def test_acquirer_role_does_not_mark_success(small_store):
    p = derive_profile(small_store.organization("c2"), small_store, REF)
    assert p.num_acquisitions_made == 2
    assert p.was_acquired == 0
    assert p.success == 0


def test_labels(small_store):
    assert derive_label("c1", small_store) == 1  # IPO row
    assert derive_label("c3", small_store) == 0  # no events
    assert derive_label("c2", small_store) == 0  # acquirer only


def test_age_falls_back_to_created_at():
    store = build_store([org(founded=None, created=date(2023, 6, 11))])
    p = derive_profile(store.organizations[0], store, REF)
    assert abs(p.age_years - 2.0) < 0.01
    assert p.age_imputed == 0


def test_executive_title_matching():
    titles_expected = [
        ("Chief Executive Officer", True),
        ("VP of Engineering", True),
        ("Vice President, Sales", True),
        ("Founder & CEO", True),
        ("President", True),
        ("Software Engineer", False),
        ("SVP of Operations", False),  # no word-boundary 'vp'
        ("Sales Associate", False),
    ]
    jobs = [JobRow("c1", f"p{i}", t) for i, (t, _) in enumerate(titles_expected)]
    store = build_store([org()], jobs=jobs)
    p = derive_profile(store.organizations[0], store, REF)
    assert p.num_executives == sum(1 for _, m in titles_expected if m)


def test_derive_profiles_collects_anomalies():
    store = build_store([org("c1", founded=date(2030, 1, 1)), org("c2")])
    profiles, anomalies = derive_profiles(store, REF)
    assert [p.org_id for p in profiles] == ["c2"]
    assert anomalies[0][0] == "c1"


def test_totality_under_fuzzed_missingness():
    rng = random.Random(31)
    orgs, rounds, ipos, acqs, jobs = [], [], [], [], []
    for i in range(300):
        founded = date(2015 + rng.randrange(9), 1 + rng.randrange(12), 1 + rng.randrange(28))
        orgs.append(
            org(
                f"c{i}",
                founded=founded if rng.random() < 0.7 else None,
                created=founded if rng.random() < 0.5 else None,
            )
        )
        for k in range(rng.randrange(4)):
            rounds.append(
                FundingRoundRow(
                    f"r{i}_{k}",
                    f"c{i}",
                    None,
                    float(rng.randrange(10**7)) if rng.random() < 0.8 else None,
                )
            )
        if rng.random() < 0.2:
            ipos.append(IpoRow(f"c{i}", None))
        if rng.random() < 0.1 and i > 0:
            acqs.append(AcquisitionRow(f"c{i}", f"c{i - 1}", None))
    store = build_store(orgs, rounds, (), ipos, acqs, jobs)
    profiles, anomalies = derive_profiles(store, REF)
    assert not anomalies
    for p in profiles:
        for name in FEATURE_COLUMNS:
            value = getattr(p, name)
            assert value is not None and not math.isnan(float(value))
        assert p.success == (1 if (p.had_ipo or p.was_acquired) else 0)


def test_adding_rounds_never_decreases_funding_features():
    rng = random.Random(41)
    rounds = []
    previous = None
    for k in range(25):
        rounds.append(
            FundingRoundRow(
                f"r{k}", "c1", None,
                float(rng.randrange(10**6)) if rng.random() < 0.7 else None,
            )
        )
        store = build_store([org("c1")], list(rounds))
        p = derive_profile(store.organizations[0], store, REF)
        if previous is not None:
            assert p.total_raised_usd >= previous.total_raised_usd
            assert p.num_funding_rounds == previous.num_funding_rounds + 1
        previous = p


def test_feature_vector_excludes_event_flags(golden_profile):
    vec = feature_vector(golden_profile)
    assert len(vec) == 6
    assert "had_ipo" not in FEATURE_COLUMNS and "was_acquired" not in FEATURE_COLUMNS


def make_profile(i, success, description="", raised=0.0):
    store = build_store([org(f"c{i}", name=f"Org {i}", description=description)])
    base = derive_profile(store.organizations[0], store, REF)
    return base.__class__(
        **{
            **{f: getattr(base, f) for f in base.__dataclass_fields__},
            "org_id": f"c{i}",
            "success": success,
            "total_raised_usd": raised,
        }
    )


def test_corpus_stats_empty():
    stats = corpus_stats([])
    assert stats.n_total == 0 and stats.positive_ratio == 0.0
    assert sum(stats.desc_token_histogram.values()) == 0


def test_corpus_stats_buckets_and_ratio():
    short_desc = "one two three"
    long_desc = " ".join(f"word{i}" for i in range(300))
    profiles = [make_profile(0, 1, short_desc), make_profile(1, 0, long_desc)]
    stats = corpus_stats(profiles)
    occupied = [k for k, v in stats.desc_token_histogram.items() if v]
    assert len(occupied) == 2
    assert sum(stats.desc_token_histogram.values()) == 2

    profiles = [make_profile(i, 1) for i in range(300)] + [
        make_profile(300 + i, 0) for i in range(700)
    ]
    stats = corpus_stats(profiles)
    assert stats.positive_ratio == pytest.approx(0.3)
    assert sum(stats.desc_token_histogram.values()) == 1000


def test_balance_undersamples_majority():
    profiles = [make_profile(i, 1) for i in range(300)] + [
        make_profile(300 + i, 0) for i in range(700)
    ]
    balanced = balance_dataset(profiles, seed=3)
    counts = Counter(p.success for p in balanced)
    assert counts[0] == counts[1] == 300


def test_balance_identity_when_already_balanced():
    profiles = [make_profile(i, i % 2) for i in range(10)]
    assert balance_dataset(profiles, seed=1) == profiles


def test_balance_seed_determinism():
    profiles = [make_profile(i, 1) for i in range(50)] + [
        make_profile(50 + i, 0) for i in range(500)
    ]
    first = balance_dataset(profiles, seed=8)
    second = balance_dataset(profiles, seed=8)
    other = balance_dataset(profiles, seed=9)
    assert first == second
    assert first != other


def test_balance_requires_both_classes():
    with pytest.raises(DataError):
        balance_dataset([make_profile(0, 1)], seed=0)


def test_split_sizes_largest_remainder():
    profiles = [make_profile(i, i % 2) for i in range(10)]
    train, val, test = split_dataset(profiles, SplitSpec(seed=1, stratified=False))
    assert (len(train), len(val), len(test)) == (8, 1, 1)


def test_split_stratified_preserves_ratio():
    profiles = [make_profile(i, 1) for i in range(50)] + [
        make_profile(50 + i, 0) for i in range(50)
    ]
    train, val, test = split_dataset(profiles, SplitSpec(seed=4, stratified=True))
    counts = Counter(p.success for p in train)
    assert counts[0] == counts[1] == 40
    assert len(val) == len(test) == 10


def test_split_is_partition():
    profiles = [make_profile(i, i % 3 == 0) for i in range(97)]
    train, val, test = split_dataset(profiles, SplitSpec(seed=12))
    ids = [p.org_id for p in train + val + test]
    assert sorted(ids) == sorted(p.org_id for p in profiles)
    assert len(set(ids)) == len(ids)


def test_split_deterministic_by_seed():
    profiles = [make_profile(i, i % 2) for i in range(40)]
    a = split_dataset(profiles, SplitSpec(seed=5))
    b = split_dataset(profiles, SplitSpec(seed=5))
    assert a == b


def test_split_rejects_tiny_corpus():
    with pytest.raises(DataError):
        split_dataset([make_profile(0, 1), make_profile(1, 0)], SplitSpec())


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec(ratios=(0.5, 0.5, 0.5)).validate()


def test_profiles_jsonl_round_trip(tmp_path, golden_profile):
    path = tmp_path / "profiles.jsonl"
    n = write_profiles_jsonl([golden_profile], path)
    assert n == 1
    assert read_profiles_jsonl(path) == [golden_profile]
