#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "qsmf/dataset.hpp"
#include "test_util.hpp"

using namespace qsmf;
namespace fs = std::filesystem;

namespace {

fs::path write_tsv(const std::string& name, const std::string& content) {
    const fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p);
    out << content;
    return p;
}

}  // namespace

TEST_CASE("ingest parses a small dump", "[dataset]") {
    const auto path = write_tsv("qsmf_ingest_small.tsv",
                                "rater_id\tnote_id\tvalue\n"
                                "alice\tn1\t1.0\n"
                                "alice\tn2\t0.0\n"
                                "bob\tn1\t0.5\n");
    const auto ds = ingest(path, IngestFormat{});
    CHECK(ds.n_raters == 2);
    CHECK(ds.n_notes == 2);
    CHECK(ds.size() == 3);
    CHECK_FALSE(ds.has_timestamps());
}

TEST_CASE("ingest applies the label map", "[dataset]") {
    auto fmt = IngestFormat::community_notes();
    const auto path = write_tsv("qsmf_ingest_labels.tsv",
                                "noteId\traterParticipantId\thelpfulnessLevel\tcreatedAtMillis\n"
                                "n1\tr1\tHELPFUL\t100\n"
                                "n2\tr1\tSOMEWHAT_HELPFUL\t200\n"
                                "n3\tr1\tNOT_HELPFUL\t300\n");
    const auto ds = ingest(path, fmt);
    REQUIRE(ds.size() == 3);
    CHECK(ds.value[0] == 1.0);
    CHECK(ds.value[1] == 0.5);
    CHECK(ds.value[2] == 0.0);
    CHECK(ds.has_timestamps());
}

TEST_CASE("ingest errors name the offending row", "[dataset]") {
    auto fmt = IngestFormat::community_notes();
    const auto unmapped = write_tsv("qsmf_ingest_bad1.tsv",
                                    "noteId\traterParticipantId\thelpfulnessLevel\tcreatedAtMillis\n"
                                    "n1\tr1\tHELPFUL\t100\n"
                                    "n2\tr1\tWAT\t200\n");
    CHECK_THROWS_WITH(ingest(unmapped, fmt), Catch::Matchers::ContainsSubstring("row 3"));
    const auto malformed = write_tsv("qsmf_ingest_bad2.tsv",
                                     "rater_id\tnote_id\tvalue\n"
                                     "r1\t0.5\n");
    CHECK_THROWS_WITH(ingest(malformed, IngestFormat{}), Catch::Matchers::ContainsSubstring("row 2"));
    const auto badts = write_tsv("qsmf_ingest_bad3.tsv",
                                 "noteId\traterParticipantId\thelpfulnessLevel\tcreatedAtMillis\n"
                                 "n1\tr1\tHELPFUL\tsoon\n");
    CHECK_THROWS_WITH(ingest(badts, fmt), Catch::Matchers::ContainsSubstring("row 2"));
}

TEST_CASE("duplicate pairs keep the latest timestamp, ties keep last", "[dataset]") {
    std::vector<RatingTriple> triples{
        {"r1", "n1", 1.0, 100},
        {"r1", "n1", 0.0, 300},  // latest, kept
        {"r1", "n1", 0.5, 200},
        {"r2", "n1", 1.0, 50},
        {"r2", "n1", 0.0, 50},  // tie: last occurrence wins
    };
    const auto ds = make_dataset(triples);
    REQUIRE(ds.size() == 2);
    CHECK(ds.value[0] == 0.0);
    CHECK(ds.timestamp[0] == 300);
    CHECK(ds.value[1] == 0.0);
}

TEST_CASE("reindexing round-trips external ids", "[dataset]") {
    const auto ds = ingest(write_tsv("qsmf_roundtrip.tsv",
                                     "rater_id\tnote_id\tvalue\n"
                                     "u3\ta\t1\nu1\tb\t0\nu3\tb\t1\nu2\ta\t0.5\n"),
                           IngestFormat{});
    std::map<std::string, std::int32_t> ridx, nidx;
    for (std::int32_t i = 0; i < ds.n_raters; ++i) ridx[ds.rater_ids[static_cast<std::size_t>(i)]] = i;
    for (std::int32_t j = 0; j < ds.n_notes; ++j) nidx[ds.note_ids[static_cast<std::size_t>(j)]] = j;
    // id -> index -> id is the identity on every triple
    for (std::int64_t t = 0; t < ds.size(); ++t) {
        CHECK(ridx.at(ds.rater_ids[static_cast<std::size_t>(ds.rater[t])]) == ds.rater[t]);
        CHECK(nidx.at(ds.note_ids[static_cast<std::size_t>(ds.note[t])]) == ds.note[t]);
    }
    CHECK(ridx.size() == static_cast<std::size_t>(ds.n_raters));
    CHECK(nidx.size() == static_cast<std::size_t>(ds.n_notes));
}

TEST_CASE("adjacency is an exact inverse of the triple list", "[dataset]") {
    const auto ds = testutil::random_dataset(30, 20, 0.2, 99);
    std::vector<int> seen(static_cast<std::size_t>(ds.size()), 0);
    for (std::int32_t i = 0; i < ds.n_raters; ++i)
        for (std::int64_t q = ds.rater_ptr[i]; q < ds.rater_ptr[i + 1]; ++q) {
            const auto row = ds.rater_rows[q];
            CHECK(ds.rater[row] == i);
            ++seen[static_cast<std::size_t>(row)];
        }
    for (int c : seen) CHECK(c == 1);
    std::fill(seen.begin(), seen.end(), 0);
    for (std::int32_t j = 0; j < ds.n_notes; ++j)
        for (std::int64_t q = ds.note_ptr[j]; q < ds.note_ptr[j + 1]; ++q) {
            const auto row = ds.note_rows[q];
            CHECK(ds.note[row] == j);
            ++seen[static_cast<std::size_t>(row)];
        }
    for (int c : seen) CHECK(c == 1);
}

TEST_CASE("filter_activity removes sparse raters", "[dataset]") {
    // rater 0 has 2 ratings; raters 1..14 rate every note, keeping all notes
    // above threshold even after rater 0 is dropped
    std::vector<std::int32_t> r, n;
    std::vector<double> v;
    auto add = [&](std::int32_t i, std::int32_t j) {
        r.push_back(i);
        n.push_back(j);
        v.push_back(0.5);
    };
    add(0, 0);
    add(0, 1);
    for (std::int32_t i = 1; i <= 14; ++i)
        for (std::int32_t j = 0; j < 12; ++j) add(i, j);
    const auto ds = make_dataset_dense(15, 12, r, n, v);
    const auto out = filter_activity(ds, 10);
    CHECK(out.n_raters == 14);  // rater 0 dropped
    CHECK(out.n_notes == 12);
    for (std::int32_t i = 0; i < out.n_raters; ++i) CHECK(out.ratings_of_rater(i) > 10);
    for (std::int32_t j = 0; j < out.n_notes; ++j) CHECK(out.ratings_of_note(j) > 10);
}

TEST_CASE("filter_activity cascades to a fixed point", "[dataset]") {
    // Hand-built chain: removing note n2 (only 1 rating) drops rater r1 below
    // threshold, whose removal must also cascade.
    // threshold min_ratings=1 -> keep only entities with >= 2 ratings.
    std::vector<std::int32_t> r{0, 0, 1, 1, 2, 2, 3, 3, 4};
    std::vector<std::int32_t> n{0, 1, 0, 2, 0, 1, 0, 1, 2};
    std::vector<double> v(9, 1.0);
    // note 2 has ratings from raters 1 and 4 only... recompute: n2 rated by r1, r4.
    // r4 has 1 rating -> removed; then n2 has 1 rating -> removed; then r1 has 1 -> removed.
    const auto ds = make_dataset_dense(5, 3, r, n, v);
    const auto out = filter_activity(ds, 1);
    // survivors: raters {0,2,3} on notes {0,1}
    CHECK(out.n_raters == 3);
    CHECK(out.n_notes == 2);
    CHECK(out.size() == 6);
}

TEST_CASE("filter_activity is idempotent and min 0 is a no-op", "[dataset]") {
    const auto ds = testutil::random_dataset(40, 25, 0.15, 7);
    const auto same = filter_activity(ds, 0);
    CHECK(same.size() == ds.size());
    const auto once = filter_activity(ds, 3);
    const auto twice = filter_activity(once, 3);
    CHECK(once.size() == twice.size());
    CHECK(once.n_raters == twice.n_raters);
    CHECK(once.n_notes == twice.n_notes);
    CHECK(once.value == twice.value);
}

TEST_CASE("filter_activity can empty a dataset without error", "[dataset]") {
    const auto ds = testutil::tiny_dataset(2, 2, {0, 1}, {0, 1}, {1.0, 0.0});
    const auto out = filter_activity(ds, 10);
    CHECK(out.empty());
    CHECK(out.n_raters == 0);
}

TEST_CASE("holdout split covers every test pair and partitions rows", "[dataset]") {
    const auto ds = testutil::random_dataset(25, 15, 0.3, 3);
    SplitSpec spec;
    spec.fraction = 0.2;
    spec.seed = 17;
    const auto [train, test] = split(ds, spec);
    CHECK(train.size() + test.size() == ds.size());
    CHECK(test.size() > 0);
    CHECK(std::abs(static_cast<double>(test.size()) - 0.2 * static_cast<double>(ds.size())) <
          0.05 * static_cast<double>(ds.size()) + 3);
    // coverage: every test rater/note appears in train
    for (std::int64_t t = 0; t < test.size(); ++t) {
        CHECK(train.ratings_of_rater(test.rater[t]) > 0);
        CHECK(train.ratings_of_note(test.note[t]) > 0);
    }
    // disjoint: pair sets do not overlap
    std::set<std::pair<std::int32_t, std::int32_t>> train_pairs;
    for (std::int64_t t = 0; t < train.size(); ++t)
        train_pairs.emplace(train.rater[t], train.note[t]);
    for (std::int64_t t = 0; t < test.size(); ++t)
        CHECK_FALSE(train_pairs.count({test.rater[t], test.note[t]}));
}

TEST_CASE("per-rater half split deals disjoint halves", "[dataset]") {
    std::vector<std::int32_t> r, n;
    std::vector<double> v;
    for (std::int32_t j = 0; j < 20; ++j) {
        r.push_back(0);
        n.push_back(j);
        v.push_back(1.0);
    }
    const auto ds = make_dataset_dense(1, 20, r, n, v);
    SplitSpec spec;
    spec.kind = SplitSpec::Kind::per_rater_half;
    spec.seed = 5;
    const auto [a, b] = split(ds, spec);
    CHECK(a.size() == 10);
    CHECK(b.size() == 10);
    std::set<std::int32_t> na(a.note.begin(), a.note.end());
    for (auto j : b.note) CHECK_FALSE(na.count(j));
}

TEST_CASE("split is deterministic per seed", "[dataset]") {
    const auto ds = testutil::random_dataset(30, 20, 0.25, 4);
    SplitSpec spec;
    spec.fraction = 0.3;
    spec.seed = 123;
    const auto [a1, b1] = split(ds, spec);
    const auto [a2, b2] = split(ds, spec);
    CHECK(a1.value == a2.value);
    CHECK(b1.note == b2.note);
    CHECK_THROWS_AS(split(ds, SplitSpec{SplitSpec::Kind::holdout_fraction, 1.5, 0}), ArgumentError);
}

TEST_CASE("binary cache round-trips exactly", "[dataset]") {
    auto ds = testutil::random_dataset(12, 9, 0.4, 21);
    ds.timestamp.assign(static_cast<std::size_t>(ds.size()), 0);
    for (std::int64_t t = 0; t < ds.size(); ++t) ds.timestamp[static_cast<std::size_t>(t)] = t * 7;
    const auto path = fs::temp_directory_path() / "qsmf_cache_test.bin";
    save_cache(ds, path);
    const auto back = load_cache(path);
    CHECK(back.n_raters == ds.n_raters);
    CHECK(back.n_notes == ds.n_notes);
    CHECK(back.rater == ds.rater);
    CHECK(back.note == ds.note);
    CHECK(back.value == ds.value);
    CHECK(back.timestamp == ds.timestamp);
    CHECK(back.rater_ids == ds.rater_ids);
    CHECK(back.note_ids == ds.note_ids);
}
