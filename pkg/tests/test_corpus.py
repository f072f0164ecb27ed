import json
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adnotate.corpus import (
    AnnotationBatch,
    Corpus,
    FollowerTier,
    Label,
    Post,
    SplitSpec,
    build_annotation_batch,
    ingest_posts,
    load_batch,
    load_weak_labeled,
    scan_caption,
    scan_disclosures,
    strip_disclosures,
    temporal_split,
    undersample,
    weak_label,
    write_batch,
    write_split_manifests,
    write_weak_labeled,
)
from adnotate.errors import CapacityError, ConflictError, ParseError, ValidationError


def make_post(post_id="p1", caption="hello", year=2021, followers=150_000, influencer="i1"):
    return Post(
        post_id=post_id,
        influencer_id=influencer,
        caption=caption,
        published_at=datetime(year, 6, 1, tzinfo=timezone.utc),
        followers=followers,
    )


def record_line(post_id="p1", caption="hello", year=2021, followers=150_000):
    return json.dumps({
        "post_id": post_id,
        "influencer_id": "i1",
        "caption": caption,
        "published_at": f"{year}-06-01T12:00:00+00:00",
        "followers": followers,
    })


class TestIngest:
    def test_three_valid_lines(self):
        lines = [record_line(f"p{i}") for i in range(3)]
        corpus = ingest_posts(lines)
        assert len(corpus) == 3
        assert corpus.get("p2").influencer_id == "i1"

    def test_empty_stream(self):
        assert len(ingest_posts([])) == 0

    def test_missing_caption_reports_line_number(self):
        bad = json.dumps({
            "post_id": "p2", "influencer_id": "i1",
            "published_at": "2021-06-01T00:00:00+00:00", "followers": 200_000,
        })
        with pytest.raises(ParseError) as err:
            ingest_posts([record_line("p1"), bad])
        assert err.value.line == 2
        assert "caption" in str(err.value)

    def test_duplicate_id_conflict(self):
        with pytest.raises(ConflictError):
            ingest_posts([record_line("p1"), record_line("p1")])

    def test_invalid_json_reports_line(self):
        with pytest.raises(ParseError) as err:
            ingest_posts(["{not json"])
        assert err.value.line == 1

    def test_zulu_timestamps_accepted(self):
        line = json.dumps({
            "post_id": "p1", "influencer_id": "i1", "caption": "",
            "published_at": "2021-06-01T12:00:00Z", "followers": 700_000,
        })
        corpus = ingest_posts([line])
        assert corpus.get("p1").published_at.tzinfo is not None

    def test_follower_tiers(self):
        assert make_post(followers=100_000).follower_tier is FollowerTier.MICRO
        assert make_post(followers=599_999).follower_tier is FollowerTier.MICRO
        assert make_post(followers=600_000).follower_tier is FollowerTier.MEGA

    def test_followers_below_micro_minimum_rejected(self):
        with pytest.raises(ParseError):
            ingest_posts([record_line(followers=50_000)])


class TestDisclosureScan:
    def test_case_insensitive_whole_tag(self):
        scan = scan_disclosures(make_post(caption="loving this! #AD #fashion"))
        assert scan.disclosed
        assert scan.matched_tags == ("#ad",)

    def test_prefix_does_not_match(self):
        scan = scan_disclosures(make_post(caption="our #adventure begins"))
        assert not scan.disclosed

    def test_empty_caption(self):
        scan = scan_disclosures(make_post(caption=""))
        assert not scan.disclosed
        assert scan.matched_tags == ()

    def test_all_four_tags_recognized(self):
        caption = "#ad #ADVERTISEMENT #Spons #sponsored"
        assert scan_caption(caption) == ("#ad", "#advertisement", "#spons", "#sponsored")

    def test_tag_glued_to_preceding_word_not_matched(self):
        assert scan_caption("word#ad") == ()

    def test_tag_after_punctuation_matched(self):
        assert scan_caption("(#ad)") == ("#ad",)

    def test_spons_is_not_a_prefix_match_of_sponsored(self):
        assert scan_caption("#sponsored") == ("#sponsored",)


class TestStripAndWeakLabel:
    def test_leading_tag_strip(self):
        corpus = Corpus([make_post(caption="#ad new shoes @brand")])
        (wl,) = weak_label(corpus)
        assert wl.weak_label is Label.SPONSORED
        assert wl.stripped_caption == "new shoes @brand"

    def test_undisclosed_untouched(self):
        corpus = Corpus([make_post(caption="just vibes")])
        (wl,) = weak_label(corpus)
        assert wl.weak_label is Label.NON_SPONSORED
        assert wl.stripped_caption == "just vibes"

    def test_multiple_tags_all_removed(self):
        corpus = Corpus([make_post(caption="#sponsored #spons x")])
        (wl,) = weak_label(corpus)
        assert wl.weak_label is Label.SPONSORED
        assert wl.stripped_caption == "x"

    def test_mid_caption_strip_keeps_single_space(self):
        assert strip_disclosures("a #ad b") == "a b"

    def test_trailing_tag_strip(self):
        assert strip_disclosures("a #ad") == "a"

    def test_adjacent_tags_cannot_reassemble(self):
        assert scan_caption(strip_disclosures("#ad#ad")) == ()

    @settings(max_examples=200, deadline=None)
    @given(st.lists(
        st.one_of(
            st.sampled_from(["#ad", "#AD", "#Sponsored", "#spons", "#advertisement",
                             "#adventure", "#ads", "word", "@brand", "!", "##ad", "x#ad"]),
            st.text(alphabet="ab#@ ", max_size=6),
        ),
        max_size=12,
    ))
    def test_stripped_caption_never_scans_disclosed(self, parts):
        caption = " ".join(parts)
        corpus = Corpus([make_post(caption=caption)])
        (wl,) = weak_label(corpus)
        assert scan_caption(wl.stripped_caption) == ()
        if scan_caption(caption):
            assert wl.weak_label is Label.SPONSORED
        else:
            assert wl.weak_label is Label.NON_SPONSORED
            assert wl.stripped_caption == caption


def labeled_set(n_pos, n_neg):
    posts = [make_post(f"pos{i}", caption=f"#ad item {i}") for i in range(n_pos)]
    posts += [make_post(f"neg{i}", caption=f"plain item {i}") for i in range(n_neg)]
    return weak_label(Corpus(posts))


class TestUndersample:
    def test_two_to_one_ratio(self):
        out = undersample(labeled_set(10, 100), seed=1)
        assert sum(wl.weak_label is Label.SPONSORED for wl in out) == 10
        assert sum(wl.weak_label is Label.NON_SPONSORED for wl in out) == 20

    def test_no_positives_gives_empty(self):
        assert undersample(labeled_set(0, 50), seed=1) == []

    def test_capped_at_available_negatives(self):
        out = undersample(labeled_set(10, 15), seed=1)
        assert sum(wl.weak_label is Label.NON_SPONSORED for wl in out) == 15

    def test_deterministic_for_fixed_seed(self):
        first = undersample(labeled_set(10, 100), seed=42)
        second = undersample(labeled_set(10, 100), seed=42)
        assert [wl.post.post_id for wl in first] == [wl.post.post_id for wl in second]

    def test_different_seeds_differ(self):
        a = undersample(labeled_set(10, 500), seed=1)
        b = undersample(labeled_set(10, 500), seed=2)
        assert [wl.post.post_id for wl in a] != [wl.post.post_id for wl in b]

    def test_sampling_without_replacement(self):
        out = undersample(labeled_set(10, 100), seed=3)
        ids = [wl.post.post_id for wl in out]
        assert len(set(ids)) == len(ids)


class TestTemporalSplit:
    def make_labeled(self, pre, during):
        posts = [make_post(f"a{i}", year=2019 + i % 3) for i in range(pre)]
        posts += [make_post(f"b{i}", year=2022) for i in range(during)]
        return weak_label(Corpus(posts))

    def test_ninety_ten_cut(self):
        split = temporal_split(self.make_labeled(100, 30), SplitSpec(seed=5))
        assert len(split.train) == 90
        assert len(split.validation) == 10
        assert len(split.test) == 30

    def test_floor_arithmetic(self):
        split = temporal_split(self.make_labeled(10, 0), SplitSpec(seed=5))
        assert len(split.train) == 9
        assert len(split.validation) == 1

    def test_all_in_cutoff_year_errors(self):
        with pytest.raises(ValidationError):
            temporal_split(self.make_labeled(0, 20), SplitSpec())

    def test_posts_after_cutoff_rejected(self):
        labeled = weak_label(Corpus([make_post("x", year=2023)]))
        with pytest.raises(ValidationError):
            temporal_split(labeled, SplitSpec(cutoff_year=2022))

    def test_partition_is_disjoint_and_exhaustive(self):
        labeled = self.make_labeled(57, 13)
        split = temporal_split(labeled, SplitSpec(seed=9))
        ids = [wl.post.post_id for part in (split.train, split.validation, split.test)
               for wl in part]
        assert len(ids) == len(labeled)
        assert set(ids) == {wl.post.post_id for wl in labeled}

    def test_test_set_is_exactly_cutoff_year(self):
        split = temporal_split(self.make_labeled(20, 7), SplitSpec(seed=1))
        assert all(wl.post.published_at.year == 2022 for wl in split.test)

    def test_deterministic(self):
        labeled = self.make_labeled(40, 5)
        a = temporal_split(labeled, SplitSpec(seed=11))
        b = temporal_split(labeled, SplitSpec(seed=11))
        assert [w.post.post_id for w in a.train] == [w.post.post_id for w in b.train]


class TestAnnotationBatch:
    def make_corpus(self, disclosed, undisclosed):
        posts = [make_post(f"d{i}", caption=f"#ad deal {i}") for i in range(disclosed)]
        posts += [make_post(f"u{i}", caption=f"life update {i}") for i in range(undisclosed)]
        return Corpus(posts)

    def test_default_parameters(self):
        batch = build_annotation_batch(self.make_corpus(100, 900), seed=4)
        assert batch.size == 200
        assert len(batch.items) == 200
        assert len(batch.disclosed_ids) == 30
        assert sum(1 for i in batch.items if i.startswith("d")) == 30

    def test_size_zero(self):
        batch = build_annotation_batch(self.make_corpus(5, 5), size=0, seed=1)
        assert batch.items == []

    def test_capacity_error_names_deficit(self):
        with pytest.raises(CapacityError) as err:
            build_annotation_batch(self.make_corpus(10, 900), seed=1)
        assert "30" in str(err.value)
        assert "10" in str(err.value)

    def test_deterministic_items(self):
        corpus = self.make_corpus(50, 400)
        a = build_annotation_batch(corpus, seed=7)
        b = build_annotation_batch(corpus, seed=7)
        assert a.items == b.items
        assert a.batch_id == b.batch_id

    def test_disclosed_count_matches_round(self):
        corpus = self.make_corpus(40, 400)
        batch = build_annotation_batch(corpus, size=50, disclosed_share=0.15, seed=2)
        assert len(batch.disclosed_ids) == round(50 * 0.15)

    def test_items_unique(self):
        batch = build_annotation_batch(self.make_corpus(40, 400), seed=2)
        assert len(set(batch.items)) == len(batch.items)


class TestFileFormats:
    def test_weak_labeled_round_trip(self, tmp_path):
        labeled = labeled_set(3, 4)
        path = tmp_path / "weak.jsonl"
        write_weak_labeled(labeled, path)
        loaded = load_weak_labeled(path)
        assert [(w.post.post_id, w.weak_label, w.stripped_caption) for w in loaded] == [
            (w.post.post_id, w.weak_label, w.stripped_caption) for w in labeled
        ]

    def test_split_manifest_headers(self, tmp_path):
        posts = [make_post(f"p{i}", year=2020 if i % 3 else 2022) for i in range(30)]
        labeled = weak_label(Corpus(posts))
        split = temporal_split(labeled, SplitSpec(seed=1))
        paths = write_split_manifests(split, tmp_path)
        header = json.loads(paths["train"].read_text().splitlines()[0])
        assert header["seed"] == 1
        assert header["cutoff_year"] == 2022
        assert header["prng"] == "pcg64"

    def test_batch_round_trip(self, tmp_path):
        corpus = TestAnnotationBatch().make_corpus(40, 400)
        batch = build_annotation_batch(corpus, seed=2)
        path = tmp_path / "batch.json"
        write_batch(batch, path)
        loaded = load_batch(path)
        assert loaded == AnnotationBatch(
            batch_id=batch.batch_id, items=batch.items,
            disclosed_ids=batch.disclosed_ids,
            disclosed_share=batch.disclosed_share, size=batch.size,
        )
