import io
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from stancemon.annotation import (
    AnnotationStore, SamplingUnit, assign_batches, class_totals, cohen_kappa,
    collapse_rating, export_annotations, import_annotations, kappa_variants,
    make_record, sample_for_annotation,
)
from stancemon.errors import ValidationError


class TestCollapse:
    @pytest.mark.parametrize("raw,expected", [
        (1, "Against"), (2, "Against"), (3, "Neutral"),
        (4, "Supportive"), (5, "Supportive"), ("Ambiguous", "Ambiguous"),
    ])
    def test_mapping(self, raw, expected):
        assert collapse_rating(raw) == expected

    def test_invalid_rating(self):
        with pytest.raises(ValidationError):
            collapse_rating(6)

    def test_monotone_on_scale(self):
        order = {"Against": 0, "Neutral": 1, "Supportive": 2}
        collapsed = [order[collapse_rating(r)] for r in (1, 2, 3, 4, 5)]
        assert collapsed == sorted(collapsed)

    def test_surjective(self):
        assert {collapse_rating(r) for r in (1, 2, 3, 4, 5, "Ambiguous")} == {
            "Against", "Neutral", "Supportive", "Ambiguous"}


class TestKappa:
    def test_identical_lists_exactly_one(self):
        assert cohen_kappa(["x", "y", "x"], ["x", "y", "x"]) == 1.0
        assert cohen_kappa(["x", "x"], ["x", "x"]) == 1.0

    def test_four_item_example_exactly_zero(self):
        assert cohen_kappa(["x", "x", "y", "y"], ["x", "y", "x", "y"]) == 0.0

    def test_symmetry(self):
        a = ["x", "y", "z", "x", "y"]
        b = ["y", "y", "z", "x", "x"]
        assert cohen_kappa(a, b) == pytest.approx(cohen_kappa(b, a), abs=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            cohen_kappa(["x"], ["x", "y"])

    def test_empty_input(self):
        with pytest.raises(ValidationError):
            cohen_kappa([], [])

    def test_merge_map(self):
        a = ["Against", "Ambiguous", "Neutral"]
        b = ["Against", "Neutral", "Ambiguous"]
        merged = cohen_kappa(a, b, merge={"Ambiguous": "Neutral"})
        assert merged == 1.0

    @given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("abc")),
                    min_size=1, max_size=40))
    def test_symmetry_property(self, pairs):
        a = [p[0] for p in pairs]
        b = [p[1] for p in pairs]
        assert cohen_kappa(a, b) == pytest.approx(cohen_kappa(b, a), abs=1e-12)

    @given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("abc")),
                    min_size=1, max_size=40))
    def test_alphabet_permutation_invariance(self, pairs):
        a = [p[0] for p in pairs]
        b = [p[1] for p in pairs]
        perm = {"a": "q", "b": "r", "c": "s"}
        direct = cohen_kappa(a, b)
        permuted = cohen_kappa([perm[x] for x in a], [perm[x] for x in b])
        assert direct == pytest.approx(permuted, abs=1e-12)

    @given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=40))
    def test_self_agreement_property(self, labels):
        assert cohen_kappa(labels, labels) == 1.0

    def test_variants_shape(self):
        a = [1, 2, 3, 4, 5, "Ambiguous", 1, 4]
        b = [1, 1, 3, 5, 4, "Ambiguous", 3, "Ambiguous"]
        variants = kappa_variants(a, b)
        assert set(variants) == {"six_category", "four_category", "three_merged_neutral",
                                 "three_agreed", "two_category"}
        assert variants["six_category"]["n"] == 8
        assert variants["three_agreed"]["n"] == 6
        assert variants["two_category"]["n"] == 4
        assert variants["two_category"]["kappa"] == 1.0


def units(publisher, group, count, start=0, flagged=False):
    return [
        SamplingUnit(f"{publisher}-{group}-{i}", publisher, (group,), flagged)
        for i in range(start, start + count)
    ]


class TestSampling:
    def make_units(self):
        pool = []
        for pub in ("P1", "P2"):
            pool += units(pub, "G1", 9)
            pool += units(pub, "G2", 3)
        return pool

    def cell_counts(self, batch):
        cells = Counter()
        for sid in batch.sentence_ids:
            pub, group, _ = sid.split("-")
            cells[(pub, group)] += 1
        return cells

    def test_balanced_cells(self):
        batch = sample_for_annotation(self.make_units(), n=8, seed=1)
        assert self.cell_counts(batch) == {
            ("P1", "G1"): 3, ("P1", "G2"): 1, ("P2", "G1"): 3, ("P2", "G2"): 1}

    def test_zero_n(self):
        batch = sample_for_annotation(self.make_units(), n=0, seed=1)
        assert batch.sentence_ids == ()

    def test_deterministic_given_seed(self):
        a = sample_for_annotation(self.make_units(), n=8, seed=5)
        b = sample_for_annotation(self.make_units(), n=8, seed=5)
        assert a.sentence_ids == b.sentence_ids

    def test_seed_changes_membership_not_counts(self):
        a = sample_for_annotation(self.make_units(), n=8, seed=1)
        b = sample_for_annotation(self.make_units(), n=8, seed=2)
        assert self.cell_counts(a) == self.cell_counts(b)
        assert set(a.sentence_ids) != set(b.sentence_ids)

    def test_no_duplicates(self):
        batch = sample_for_annotation(self.make_units(), n=12, seed=3)
        assert len(batch.sentence_ids) == len(set(batch.sentence_ids)) == 12

    def test_flagged_excluded(self):
        pool = units("P1", "G1", 4) + units("P1", "G1", 4, start=100, flagged=True) \
            + units("P2", "G1", 4)
        batch = sample_for_annotation(pool, n=8, seed=1)
        assert all("-10" not in sid for sid in batch.sentence_ids)

    def test_insufficient_cell_names_cell(self):
        pool = units("P1", "G1", 9) + units("P1", "G2", 3) + units("P2", "G1", 2)
        with pytest.raises(ValidationError, match=r"\(P2, G1\)"):
            sample_for_annotation(pool, n=8, seed=1)

    def test_insufficient_total(self):
        with pytest.raises(ValidationError, match="eligible"):
            sample_for_annotation(units("P1", "G1", 3), n=10, seed=0)

    @given(st.integers(0, 30),
           st.lists(st.tuples(st.sampled_from(["P1", "P2"]),
                              st.sampled_from(["G1", "G2", "G3"])),
                    min_size=1, max_size=150),
           st.integers(0, 2**32 - 1))
    def test_successful_samples_have_exactly_n_unique_sentences(self, n, pool, seed):
        pool_units = [SamplingUnit(f"s{i}", pub, (grp,)) for i, (pub, grp) in enumerate(pool)]
        try:
            batch = sample_for_annotation(pool_units, n=n, seed=seed)
        except ValidationError:
            return  # allocation infeasible for this pool shape
        assert len(batch.sentence_ids) == n
        assert len(set(batch.sentence_ids)) == n


class TestAssignment:
    def test_disjoint_halves(self):
        ids = [f"s{i}" for i in range(10)]
        batches = assign_batches(ids, ["anna", "beth"], overlap_n=0, seed=0)
        assert len(batches) == 2
        all_ids = [sid for b in batches for sid in b.sentence_ids]
        assert sorted(all_ids) == sorted(ids)
        assert not (set(batches[0].sentence_ids) & set(batches[1].sentence_ids))

    def test_overlap_batch_assigned_to_all(self):
        ids = [f"s{i}" for i in range(10)]
        batches = assign_batches(ids, ["anna", "beth"], overlap_n=4, seed=0)
        overlap = [b for b in batches if b.overlap]
        assert len(overlap) == 1
        assert overlap[0].annotators == ("anna", "beth")
        assert len(overlap[0].sentence_ids) == 4

    def test_overlap_requires_two_annotators(self):
        with pytest.raises(ValidationError):
            assign_batches(["s1", "s2"], ["solo"], overlap_n=1, seed=0)

    def test_interleaved_mode(self):
        ids = [f"s{i}" for i in range(6)]
        batches = assign_batches(ids, ["a", "b"], overlap_n=0, seed=0, mode="interleaved")
        assert batches[0].sentence_ids == ("s0", "s2", "s4")
        assert batches[1].sentence_ids == ("s1", "s3", "s5")


class TestStore:
    def test_supersession_keeps_audit_trail(self, tmp_path):
        store = AnnotationStore(tmp_path)
        store.append(make_record("s1", "anna", 2))
        store.append(make_record("s1", "anna", 4))
        live = store.live_records()
        assert live[("s1", "anna")].label == "Supportive"
        assert len(store.history()) == 2

    def test_durable_across_reopen(self, tmp_path):
        store = AnnotationStore(tmp_path)
        store.append(make_record("s1", "anna", 5))
        reopened = AnnotationStore(tmp_path)
        assert reopened.live_records()[("s1", "anna")].raw == "5"

    def test_class_totals(self, tmp_path):
        records = [make_record(f"s{i}", "anna", r) for i, r in enumerate([1, 2, 3, "Ambiguous"])]
        totals, total = class_totals(records)
        assert totals == {"Against": 2, "Neutral": 1, "Supportive": 0, "Ambiguous": 1}
        assert total == 4


class TestInterchange:
    def test_roundtrip(self):
        records = [make_record(f"s{i}", "anna", r, created_at="2023-01-01T00:00:00+00:00")
                   for i, r in enumerate([1, 3, 5, "Ambiguous"])]
        buf = io.StringIO()
        count = export_annotations(records, buf)
        assert count == 4
        buf.seek(0)
        loaded, rejects = import_annotations(buf)
        assert rejects == []
        assert loaded == records

    def test_invalid_raw_rejected(self):
        buf = io.StringIO(
            "sentence_id,annotator_id,raw_rating,label,created_at,guideline_version\n"
            "s1,anna,6,Supportive,2023-01-01,v1\n"
            "s2,anna,4,Supportive,2023-01-01,v1\n")
        loaded, rejects = import_annotations(buf)
        assert len(loaded) == 1
        assert len(rejects) == 1
        assert rejects[0][0] == 2

    def test_label_collapse_mismatch_rejected(self):
        buf = io.StringIO(
            "sentence_id,annotator_id,raw_rating,label,created_at,guideline_version\n"
            "s1,anna,4,Against,2023-01-01,v1\n")
        loaded, rejects = import_annotations(buf)
        assert loaded == []
        assert len(rejects) == 1

    def test_three_valid_rows(self):
        buf = io.StringIO(
            "sentence_id,annotator_id,raw_rating,label,created_at,guideline_version\n"
            "s1,anna,1,Against,2023-01-01,v1\n"
            "s2,anna,3,Neutral,2023-01-01,v1\n"
            "s3,anna,5,Supportive,2023-01-01,v1\n")
        loaded, rejects = import_annotations(buf)
        assert len(loaded) == 3 and rejects == []
