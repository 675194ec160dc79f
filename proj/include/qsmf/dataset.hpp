#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "qsmf/errors.hpp"
#include "qsmf/rng.hpp"

namespace qsmf {

struct RatingTriple {
    std::string rater_id;
    std::string note_id;
    double value = 0.0;  // in [0,1]
    std::optional<std::int64_t> timestamp_ms;
};

// Column mapping for delimiter-separated rating dumps. An empty value_map
// means the label column already holds numeric values in [0,1].
struct IngestFormat {
    char delimiter = '\t';
    std::string rater_col = "rater_id";
    std::string note_col = "note_id";
    std::string label_col = "value";
    std::string timestamp_col;  // empty: no timestamps
    std::map<std::string, double> value_map;

    // Column names and helpfulness encoding of the public Community Notes dump.
    static IngestFormat community_notes() {
        IngestFormat f;
        f.rater_col = "raterParticipantId";
        f.note_col = "noteId";
        f.label_col = "helpfulnessLevel";
        f.timestamp_col = "createdAtMillis";
        f.value_map = {{"HELPFUL", 1.0}, {"SOMEWHAT_HELPFUL", 0.5}, {"NOT_HELPFUL", 0.0}};
        return f;
    }
};

// Immutable sparse rating matrix in triple form with dense indices and
// adjacency from both sides. rater/note/value/timestamp are parallel arrays;
// by-rater and by-note adjacency hold positions into them (CSR layout).
struct RatingDataset {
    std::int32_t n_raters = 0;
    std::int32_t n_notes = 0;

    std::vector<std::int32_t> rater;
    std::vector<std::int32_t> note;
    std::vector<double> value;
    std::vector<std::int64_t> timestamp;  // empty when the source had none

    std::vector<std::string> rater_ids;  // dense index -> external id
    std::vector<std::string> note_ids;

    std::vector<std::int64_t> rater_ptr;  // size n_raters+1
    std::vector<std::int32_t> rater_rows;
    std::vector<std::int64_t> note_ptr;  // size n_notes+1
    std::vector<std::int32_t> note_rows;

    std::int64_t size() const { return static_cast<std::int64_t>(rater.size()); }
    bool empty() const { return rater.empty(); }
    bool has_timestamps() const { return !timestamp.empty(); }

    std::int64_t ratings_of_rater(std::int32_t i) const { return rater_ptr[i + 1] - rater_ptr[i]; }
    std::int64_t ratings_of_note(std::int32_t j) const { return note_ptr[j + 1] - note_ptr[j]; }

    // Rebuild both adjacency structures from the triple arrays.
    void build_index() {
        const std::int64_t nnz = size();
        if (nnz > std::numeric_limits<std::int32_t>::max())
            throw ArgumentError("dataset too large for 32-bit row positions");
        rater_ptr.assign(static_cast<std::size_t>(n_raters) + 1, 0);
        note_ptr.assign(static_cast<std::size_t>(n_notes) + 1, 0);
        for (std::int64_t p = 0; p < nnz; ++p) {
            ++rater_ptr[static_cast<std::size_t>(rater[p]) + 1];
            ++note_ptr[static_cast<std::size_t>(note[p]) + 1];
        }
        for (std::size_t i = 1; i < rater_ptr.size(); ++i) rater_ptr[i] += rater_ptr[i - 1];
        for (std::size_t j = 1; j < note_ptr.size(); ++j) note_ptr[j] += note_ptr[j - 1];
        rater_rows.assign(static_cast<std::size_t>(nnz), 0);
        note_rows.assign(static_cast<std::size_t>(nnz), 0);
        std::vector<std::int64_t> rfill(rater_ptr.begin(), rater_ptr.end() - 1);
        std::vector<std::int64_t> nfill(note_ptr.begin(), note_ptr.end() - 1);
        for (std::int64_t p = 0; p < nnz; ++p) {
            rater_rows[static_cast<std::size_t>(rfill[rater[p]]++)] = static_cast<std::int32_t>(p);
            note_rows[static_cast<std::size_t>(nfill[note[p]]++)] = static_cast<std::int32_t>(p);
        }
    }
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == delim) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

// Build a dataset from external-id triples. Duplicate (rater, note) pairs keep
// the latest timestamp; ties and untimestamped duplicates keep the last
// occurrence. Index assignment follows first appearance, so construction is
// deterministic.
inline RatingDataset make_dataset(const std::vector<RatingTriple>& triples) {
    RatingDataset ds;
    std::unordered_map<std::string, std::int32_t> rmap, nmap;
    struct Slot {
        double value;
        std::optional<std::int64_t> ts;
    };
    std::unordered_map<std::int64_t, Slot> best;  // (rater<<32 | note) -> kept rating
    std::vector<std::int64_t> order;              // pair keys in first-seen order
    bool any_ts = false, all_ts = true;
    for (const auto& t : triples) {
        if (!(t.value >= 0.0 && t.value <= 1.0))
            throw ArgumentError("rating value outside [0,1] for rater '" + t.rater_id + "'");
        auto [rit, rnew] = rmap.try_emplace(t.rater_id, static_cast<std::int32_t>(ds.rater_ids.size()));
        if (rnew) ds.rater_ids.push_back(t.rater_id);
        auto [nit, nnew] = nmap.try_emplace(t.note_id, static_cast<std::int32_t>(ds.note_ids.size()));
        if (nnew) ds.note_ids.push_back(t.note_id);
        const std::int64_t key =
            (static_cast<std::int64_t>(rit->second) << 32) | static_cast<std::uint32_t>(nit->second);
        auto [bit, bnew] = best.try_emplace(key, Slot{t.value, t.timestamp_ms});
        if (bnew) {
            order.push_back(key);
        } else if (!bit->second.ts || !t.timestamp_ms || *t.timestamp_ms >= *bit->second.ts) {
            bit->second = Slot{t.value, t.timestamp_ms};
        }
        any_ts = any_ts || t.timestamp_ms.has_value();
        all_ts = all_ts && t.timestamp_ms.has_value();
    }
    ds.n_raters = static_cast<std::int32_t>(ds.rater_ids.size());
    ds.n_notes = static_cast<std::int32_t>(ds.note_ids.size());
    const bool keep_ts = any_ts && all_ts;
    for (std::int64_t key : order) {
        const Slot& s = best.at(key);
        ds.rater.push_back(static_cast<std::int32_t>(key >> 32));
        ds.note.push_back(static_cast<std::int32_t>(key & 0xffffffff));
        ds.value.push_back(s.value);
        if (keep_ts) ds.timestamp.push_back(*s.ts);
    }
    ds.build_index();
    return ds;
}

// Already-dense triples (synthetic generation, splits). No dedup.
inline RatingDataset make_dataset_dense(std::int32_t n_raters, std::int32_t n_notes,
                                        std::vector<std::int32_t> rater,
                                        std::vector<std::int32_t> note, std::vector<double> value,
                                        std::vector<std::int64_t> timestamp = {},
                                        std::vector<std::string> rater_ids = {},
                                        std::vector<std::string> note_ids = {}) {
    RatingDataset ds;
    ds.n_raters = n_raters;
    ds.n_notes = n_notes;
    ds.rater = std::move(rater);
    ds.note = std::move(note);
    ds.value = std::move(value);
    ds.timestamp = std::move(timestamp);
    if (rater_ids.empty())
        for (std::int32_t i = 0; i < n_raters; ++i) ds.rater_ids.push_back("r" + std::to_string(i));
    else
        ds.rater_ids = std::move(rater_ids);
    if (note_ids.empty())
        for (std::int32_t j = 0; j < n_notes; ++j) ds.note_ids.push_back("n" + std::to_string(j));
    else
        ds.note_ids = std::move(note_ids);
    ds.build_index();
    return ds;
}

// Parse a delimiter-separated dump with a header row.
inline RatingDataset ingest(const std::filesystem::path& path, const IngestFormat& fmt) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IngestError("empty file: " + path.string());
    const auto header = detail::split_line(line, fmt.delimiter);
    auto find_col = [&](const std::string& name, bool required) -> std::ptrdiff_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            if (required) throw IngestError("missing column '" + name + "' in " + path.string());
            return -1;
        }
        return it - header.begin();
    };
    const auto rc = find_col(fmt.rater_col, true);
    const auto nc = find_col(fmt.note_col, true);
    const auto lc = find_col(fmt.label_col, true);
    const auto tc = fmt.timestamp_col.empty() ? -1 : find_col(fmt.timestamp_col, true);

    std::vector<RatingTriple> triples;
    std::int64_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto cells = detail::split_line(line, fmt.delimiter);
        if (cells.size() != header.size())
            throw IngestError("malformed row " + std::to_string(row) + ": expected " +
                              std::to_string(header.size()) + " fields, got " +
                              std::to_string(cells.size()));
        RatingTriple t;
        t.rater_id = cells[static_cast<std::size_t>(rc)];
        t.note_id = cells[static_cast<std::size_t>(nc)];
        const std::string& label = cells[static_cast<std::size_t>(lc)];
        if (fmt.value_map.empty()) {
            try {
                std::size_t pos = 0;
                t.value = std::stod(label, &pos);
                if (pos != label.size()) throw std::invalid_argument(label);
            } catch (const std::exception&) {
                throw IngestError("non-numeric value '" + label + "' at row " + std::to_string(row));
            }
        } else {
            auto it = fmt.value_map.find(label);
            if (it == fmt.value_map.end())
                throw IngestError("unmapped label '" + label + "' at row " + std::to_string(row));
            t.value = it->second;
        }
        if (!(t.value >= 0.0 && t.value <= 1.0))
            throw IngestError("value outside [0,1] at row " + std::to_string(row));
        if (tc >= 0) {
            const std::string& ts = cells[static_cast<std::size_t>(tc)];
            try {
                std::size_t pos = 0;
                t.timestamp_ms = std::stoll(ts, &pos);
                if (pos != ts.size()) throw std::invalid_argument(ts);
            } catch (const std::exception&) {
                throw IngestError("non-numeric timestamp '" + ts + "' at row " + std::to_string(row));
            }
        }
        triples.push_back(std::move(t));
    }
    return make_dataset(triples);
}

// Write the standard rating text format (header + one row per triple).
inline void save_ratings_text(const RatingDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "rater_id\tnote_id\tvalue";
    if (ds.has_timestamps()) out << "\ttimestamp_ms";
    out << "\n";
    out.precision(17);
    for (std::int64_t p = 0; p < ds.size(); ++p) {
        out << ds.rater_ids[static_cast<std::size_t>(ds.rater[p])] << '\t'
            << ds.note_ids[static_cast<std::size_t>(ds.note[p])] << '\t' << ds.value[p];
        if (ds.has_timestamps()) out << '\t' << ds.timestamp[p];
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + path.string());
}

// Iteratively drop raters and notes with fewer than min_ratings+1 ratings
// until a fixed point, then reindex densely. May return an empty dataset.
inline RatingDataset filter_activity(const RatingDataset& ds, std::int64_t min_ratings) {
    if (min_ratings < 0) throw ArgumentError("filter_activity: min_ratings < 0");
    std::vector<bool> keep(ds.value.size(), true);
    std::vector<std::int64_t> rcount(static_cast<std::size_t>(ds.n_raters));
    std::vector<std::int64_t> ncount(static_cast<std::size_t>(ds.n_notes));
    for (std::int32_t i = 0; i < ds.n_raters; ++i) rcount[i] = ds.ratings_of_rater(i);
    for (std::int32_t j = 0; j < ds.n_notes; ++j) ncount[j] = ds.ratings_of_note(j);
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::int64_t p = 0; p < ds.size(); ++p) {
            if (!keep[static_cast<std::size_t>(p)]) continue;
            if (rcount[ds.rater[p]] <= min_ratings || ncount[ds.note[p]] <= min_ratings) {
                keep[static_cast<std::size_t>(p)] = false;
                --rcount[ds.rater[p]];
                --ncount[ds.note[p]];
                changed = true;
            }
        }
    }
    std::vector<std::int32_t> rmap(static_cast<std::size_t>(ds.n_raters), -1);
    std::vector<std::int32_t> nmap(static_cast<std::size_t>(ds.n_notes), -1);
    RatingDataset out;
    for (std::int64_t p = 0; p < ds.size(); ++p) {
        if (!keep[static_cast<std::size_t>(p)]) continue;
        auto& ri = rmap[static_cast<std::size_t>(ds.rater[p])];
        if (ri < 0) {
            ri = static_cast<std::int32_t>(out.rater_ids.size());
            out.rater_ids.push_back(ds.rater_ids[static_cast<std::size_t>(ds.rater[p])]);
        }
        auto& nj = nmap[static_cast<std::size_t>(ds.note[p])];
        if (nj < 0) {
            nj = static_cast<std::int32_t>(out.note_ids.size());
            out.note_ids.push_back(ds.note_ids[static_cast<std::size_t>(ds.note[p])]);
        }
        out.rater.push_back(ri);
        out.note.push_back(nj);
        out.value.push_back(ds.value[p]);
        if (ds.has_timestamps()) out.timestamp.push_back(ds.timestamp[p]);
    }
    out.n_raters = static_cast<std::int32_t>(out.rater_ids.size());
    out.n_notes = static_cast<std::int32_t>(out.note_ids.size());
    out.build_index();
    return out;
}

struct SplitSpec {
    enum class Kind { holdout_fraction, per_rater_half };
    Kind kind = Kind::holdout_fraction;
    double fraction = 0.2;  // holdout only
    std::uint64_t seed = 0;
};

namespace detail {

inline RatingDataset subset_rows(const RatingDataset& ds, const std::vector<std::int64_t>& rows) {
    RatingDataset out;
    out.n_raters = ds.n_raters;
    out.n_notes = ds.n_notes;
    out.rater_ids = ds.rater_ids;
    out.note_ids = ds.note_ids;
    for (std::int64_t p : rows) {
        out.rater.push_back(ds.rater[p]);
        out.note.push_back(ds.note[p]);
        out.value.push_back(ds.value[p]);
        if (ds.has_timestamps()) out.timestamp.push_back(ds.timestamp[p]);
    }
    out.build_index();
    return out;
}

}  // namespace detail

// Both halves keep the parent's index space so parameters fit on one half can
// be evaluated on the other without re-mapping.
//
// holdout_fraction: uniform sample of round(fraction*|triples|) rows goes to
// test, then test rows whose rater or note lost all train coverage are moved
// back (repeated to a fixed point in row order).
// per_rater_half: each rater's rows are shuffled and dealt into two halves;
// an odd row count leaves the extra row in the first half.
inline std::pair<RatingDataset, RatingDataset> split(const RatingDataset& ds,
                                                     const SplitSpec& spec) {
    auto rng = make_rng(spec.seed);
    if (spec.kind == SplitSpec::Kind::holdout_fraction) {
        if (!(spec.fraction > 0.0 && spec.fraction < 1.0))
            throw ArgumentError("split: fraction outside (0,1)");
        const std::int64_t nnz = ds.size();
        const auto n_test = static_cast<std::int64_t>(
            std::llround(spec.fraction * static_cast<double>(nnz)));
        std::vector<std::int64_t> perm(static_cast<std::size_t>(nnz));
        std::iota(perm.begin(), perm.end(), std::int64_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<bool> in_test(static_cast<std::size_t>(nnz), false);
        for (std::int64_t t = 0; t < n_test; ++t) in_test[static_cast<std::size_t>(perm[t])] = true;
        std::vector<std::int64_t> rtrain(static_cast<std::size_t>(ds.n_raters), 0);
        std::vector<std::int64_t> ntrain(static_cast<std::size_t>(ds.n_notes), 0);
        for (std::int64_t p = 0; p < nnz; ++p)
            if (!in_test[static_cast<std::size_t>(p)]) {
                ++rtrain[ds.rater[p]];
                ++ntrain[ds.note[p]];
            }
        bool moved = true;
        while (moved) {
            moved = false;
            for (std::int64_t p = 0; p < nnz; ++p) {
                if (!in_test[static_cast<std::size_t>(p)]) continue;
                if (rtrain[ds.rater[p]] == 0 || ntrain[ds.note[p]] == 0) {
                    in_test[static_cast<std::size_t>(p)] = false;
                    ++rtrain[ds.rater[p]];
                    ++ntrain[ds.note[p]];
                    moved = true;
                }
            }
        }
        std::vector<std::int64_t> train_rows, test_rows;
        for (std::int64_t p = 0; p < nnz; ++p)
            (in_test[static_cast<std::size_t>(p)] ? test_rows : train_rows).push_back(p);
        return {detail::subset_rows(ds, train_rows), detail::subset_rows(ds, test_rows)};
    }
    // per_rater_half
    std::vector<std::int64_t> a_rows, b_rows;
    for (std::int32_t i = 0; i < ds.n_raters; ++i) {
        std::vector<std::int32_t> rows(ds.rater_rows.begin() + ds.rater_ptr[i],
                                       ds.rater_rows.begin() + ds.rater_ptr[i + 1]);
        std::shuffle(rows.begin(), rows.end(), rng);
        const std::size_t half = (rows.size() + 1) / 2;
        for (std::size_t t = 0; t < rows.size(); ++t)
            (t < half ? a_rows : b_rows).push_back(rows[t]);
    }
    std::sort(a_rows.begin(), a_rows.end());
    std::sort(b_rows.begin(), b_rows.end());
    return {detail::subset_rows(ds, a_rows), detail::subset_rows(ds, b_rows)};
}

// --- binary cache -----------------------------------------------------------

namespace detail {

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("truncated binary file");
    return v;
}
inline void put_string(std::ostream& out, const std::string& s) {
    put<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string get_string(std::istream& in) {
    const auto n = get<std::uint64_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw IoError("truncated binary file");
    return s;
}
template <typename T>
void put_vec(std::ostream& out, const std::vector<T>& v) {
    put<std::uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(T)));
}
template <typename T>
std::vector<T> get_vec(std::istream& in) {
    const auto n = get<std::uint64_t>(in);
    std::vector<T> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in) throw IoError("truncated binary file");
    return v;
}

}  // namespace detail

inline void save_cache(const RatingDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write("QSMFDS1\n", 8);
    detail::put<std::int32_t>(out, ds.n_raters);
    detail::put<std::int32_t>(out, ds.n_notes);
    detail::put_vec(out, ds.rater);
    detail::put_vec(out, ds.note);
    detail::put_vec(out, ds.value);
    detail::put_vec(out, ds.timestamp);
    detail::put<std::uint64_t>(out, ds.rater_ids.size());
    for (const auto& s : ds.rater_ids) detail::put_string(out, s);
    detail::put<std::uint64_t>(out, ds.note_ids.size());
    for (const auto& s : ds.note_ids) detail::put_string(out, s);
    if (!out) throw IoError("write failed: " + path.string());
}

inline RatingDataset load_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != "QSMFDS1\n")
        throw IoError("not a dataset cache: " + path.string());
    RatingDataset ds;
    ds.n_raters = detail::get<std::int32_t>(in);
    ds.n_notes = detail::get<std::int32_t>(in);
    ds.rater = detail::get_vec<std::int32_t>(in);
    ds.note = detail::get_vec<std::int32_t>(in);
    ds.value = detail::get_vec<double>(in);
    ds.timestamp = detail::get_vec<std::int64_t>(in);
    const auto nr = detail::get<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < nr; ++i) ds.rater_ids.push_back(detail::get_string(in));
    const auto nn = detail::get<std::uint64_t>(in);
    for (std::uint64_t j = 0; j < nn; ++j) ds.note_ids.push_back(detail::get_string(in));
    ds.build_index();
    return ds;
}

}  // namespace qsmf
