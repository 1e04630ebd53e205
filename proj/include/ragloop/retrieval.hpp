#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragloop/core.hpp"
#include "ragloop/errors.hpp"

namespace ragloop {

struct CorpusDoc {
    std::string doc_id;
    std::string title;
    std::string text;
};

inline void from_json(const json& j, CorpusDoc& d) {
    d.doc_id = detail::require_string(j, "doc_id");
    d.title = detail::require_string(j, "title");
    d.text = detail::require_string(j, "text");
}

inline void to_json(json& j, const CorpusDoc& d) {
    j = json{{"doc_id", d.doc_id}, {"title", d.title}, {"text", d.text}};
}

// Lowercased maximal runs of ASCII [a-z0-9]. Everything else (including any
// non-ASCII byte) separates tokens; deliberately locale-independent.
// No stemming, no stopwords; queries and documents go through the same path.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if ((ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9')) {
            cur.push_back(ch);
        } else if (ch >= 'A' && ch <= 'Z') {
            cur.push_back(static_cast<char>(ch - 'A' + 'a'));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

struct IndexStats {
    std::size_t doc_count = 0;
    std::size_t term_count = 0;
    double avg_doc_len = 0.0;
    std::int64_t build_time_ms = 0;
    std::size_t rejected_count = 0;  // malformed lines skipped during ingest
};

class Retriever {
public:
    virtual ~Retriever() = default;
    // Top-k chunks for one query, rank 1..k, score non-increasing,
    // ties broken by ascending doc_id.
    virtual ChunkSet retrieve(const std::string& query, int k) const = 0;
};

// In-memory BM25 over title+text. Okapi scoring with the non-negative idf
// ln(1 + (N - df + 0.5) / (df + 0.5)), so every matched doc scores > 0.
class Bm25Index : public Retriever {
public:
    struct Options {
        double k1 = 1.2;
        double b = 0.75;
        // Ingest: skip malformed corpus lines (counted in stats) instead of
        // throwing SchemaError on the first one.
        bool skip_malformed = false;
    };

    Bm25Index() = default;
    explicit Bm25Index(Options opt) : opt_(opt) {}

    IndexStats build(std::vector<CorpusDoc> docs) {
        std::int64_t t0 = steady_now_ms();
        docs_ = std::move(docs);
        doc_len_.assign(docs_.size(), 0);
        postings_.clear();
        std::uint64_t total_len = 0;
        for (std::uint32_t d = 0; d < docs_.size(); ++d) {
            std::unordered_map<std::string, std::uint32_t> tf;
            for (auto& t : tokenize(docs_[d].title)) ++tf[t];
            for (auto& t : tokenize(docs_[d].text)) ++tf[t];
            std::uint32_t len = 0;
            for (auto& [term, n] : tf) {
                postings_[term].push_back({d, n});
                len += n;
            }
            doc_len_[d] = len;
            total_len += len;
        }
        avgdl_ = docs_.empty() ? 0.0 : static_cast<double>(total_len) / docs_.size();
        built_ = true;
        stats_.doc_count = docs_.size();
        stats_.term_count = postings_.size();
        stats_.avg_doc_len = avgdl_;
        stats_.build_time_ms = steady_now_ms() - t0;
        return stats_;
    }

    // Corpus file: one JSON object per line with doc_id/title/text, all
    // strings, doc_id non-empty and unique. Violations raise SchemaError with
    // the 1-based line number, or are skipped when Options::skip_malformed.
    IndexStats ingest_jsonl(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open corpus file: " + path);
        std::vector<CorpusDoc> docs;
        std::unordered_set<std::string> seen;
        std::size_t rejected = 0;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            try {
                CorpusDoc d = json::parse(line).get<CorpusDoc>();
                if (d.doc_id.empty()) throw Error("doc_id must be non-empty");
                if (!seen.insert(d.doc_id).second)
                    throw Error("duplicate doc_id '" + d.doc_id + "'");
                docs.push_back(std::move(d));
            } catch (const json::exception& e) {
                if (!opt_.skip_malformed) throw SchemaError(line_no, e.what());
                ++rejected;
            } catch (const Error& e) {
                if (!opt_.skip_malformed) throw SchemaError(line_no, e.what());
                ++rejected;
            }
        }
        IndexStats st = build(std::move(docs));
        stats_.rejected_count = rejected;
        st.rejected_count = rejected;
        return st;
    }

    bool built() const { return built_; }
    std::size_t size() const { return docs_.size(); }
    const IndexStats& stats() const { return stats_; }
    const std::vector<CorpusDoc>& documents() const { return docs_; }

    ChunkSet retrieve(const std::string& query, int k) const override {
        if (!built_) throw IndexNotBuilt();
        ChunkSet out;
        out.query = query;
        if (k <= 0 || docs_.empty()) return out;

        std::unordered_map<std::uint32_t, double> scores;
        // Query terms accumulate in emission order, duplicates included, so a
        // repeated term contributes twice exactly as the formula says.
        for (const std::string& term : tokenize(query)) {
            auto it = postings_.find(term);
            if (it == postings_.end()) continue;
            const auto& plist = it->second;
            double df = static_cast<double>(plist.size());
            double n = static_cast<double>(docs_.size());
            double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
            for (const Posting& p : plist) {
                double tf = static_cast<double>(p.tf);
                double denom =
                    tf + opt_.k1 * (1.0 - opt_.b + opt_.b * doc_len_[p.doc] / avgdl_);
                scores[p.doc] += idf * (tf * (opt_.k1 + 1.0)) / denom;
            }
        }

        std::vector<std::pair<std::uint32_t, double>> ranked(scores.begin(), scores.end());
        std::sort(ranked.begin(), ranked.end(), [this](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return docs_[a.first].doc_id < docs_[b.first].doc_id;
        });
        if (ranked.size() > static_cast<std::size_t>(k)) ranked.resize(static_cast<std::size_t>(k));

        out.chunks.reserve(ranked.size());
        int rank = 1;
        for (const auto& [d, score] : ranked) {
            out.chunks.push_back(Chunk{docs_[d].doc_id, docs_[d].title, docs_[d].text, score, rank});
            ++rank;
        }
        return out;
    }

    // Single-file binary persistence: magic, version, scoring options, docs
    // with lengths, then the postings lists.
    void save(const std::string& path) const {
        if (!built_) throw IndexNotBuilt();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open index file for writing: " + path);
        out.write(kMagic, 4);
        write_u32(out, kVersion);
        write_f64(out, opt_.k1);
        write_f64(out, opt_.b);
        write_f64(out, avgdl_);
        write_u64(out, docs_.size());
        for (std::size_t i = 0; i < docs_.size(); ++i) {
            write_str(out, docs_[i].doc_id);
            write_str(out, docs_[i].title);
            write_str(out, docs_[i].text);
            write_u32(out, doc_len_[i]);
        }
        write_u64(out, postings_.size());
        for (const auto& [term, plist] : postings_) {
            write_str(out, term);
            write_u64(out, plist.size());
            for (const Posting& p : plist) {
                write_u32(out, p.doc);
                write_u32(out, p.tf);
            }
        }
        if (!out) throw IoError("short write to index file: " + path);
    }

    static Bm25Index load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open index file: " + path);
        char magic[4] = {};
        in.read(magic, 4);
        if (!in || std::string_view(magic, 4) != kMagic)
            throw IoError("not an index file: " + path);
        if (read_u32(in) != kVersion) throw IoError("unsupported index version: " + path);
        Bm25Index idx;
        idx.opt_.k1 = read_f64(in);
        idx.opt_.b = read_f64(in);
        idx.avgdl_ = read_f64(in);
        std::uint64_t ndocs = read_u64(in);
        idx.docs_.resize(ndocs);
        idx.doc_len_.resize(ndocs);
        std::uint64_t total_len = 0;
        for (std::uint64_t i = 0; i < ndocs; ++i) {
            idx.docs_[i].doc_id = read_str(in);
            idx.docs_[i].title = read_str(in);
            idx.docs_[i].text = read_str(in);
            idx.doc_len_[i] = read_u32(in);
            total_len += idx.doc_len_[i];
        }
        std::uint64_t nterms = read_u64(in);
        idx.postings_.reserve(nterms);
        for (std::uint64_t t = 0; t < nterms; ++t) {
            std::string term = read_str(in);
            std::uint64_t n = read_u64(in);
            auto& plist = idx.postings_[term];
            plist.resize(n);
            for (std::uint64_t i = 0; i < n; ++i) {
                plist[i].doc = read_u32(in);
                plist[i].tf = read_u32(in);
            }
        }
        if (!in) throw IoError("truncated index file: " + path);
        idx.built_ = true;
        idx.stats_.doc_count = idx.docs_.size();
        idx.stats_.term_count = idx.postings_.size();
        idx.stats_.avg_doc_len = idx.avgdl_;
        (void)total_len;
        return idx;
    }

private:
    struct Posting {
        std::uint32_t doc = 0;
        std::uint32_t tf = 0;
    };

    static constexpr const char* kMagic = "RGLX";
    static constexpr std::uint32_t kVersion = 1;

    static void write_u32(std::ostream& o, std::uint32_t v) {
        o.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static void write_u64(std::ostream& o, std::uint64_t v) {
        o.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static void write_f64(std::ostream& o, double v) {
        o.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static void write_str(std::ostream& o, const std::string& s) {
        write_u64(o, s.size());
        o.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    static std::uint32_t read_u32(std::istream& i) {
        std::uint32_t v = 0;
        i.read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    }
    static std::uint64_t read_u64(std::istream& i) {
        std::uint64_t v = 0;
        i.read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    }
    static double read_f64(std::istream& i) {
        double v = 0;
        i.read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    }
    static std::string read_str(std::istream& i) {
        std::uint64_t n = read_u64(i);
        if (!i || n > (1ull << 32)) throw IoError("corrupt index file");
        std::string s(n, '\0');
        i.read(s.data(), static_cast<std::streamsize>(n));
        return s;
    }

    std::vector<CorpusDoc> docs_;
    std::vector<std::uint32_t> doc_len_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    double avgdl_ = 0.0;
    Options opt_;
    bool built_ = false;
    IndexStats stats_;
};

enum class ExecutionMode { Sequential, Parallel };

// Fans the bundle out, one retrieval per query, and returns chunk sets in
// bundle order. Parallel and Sequential produce identical results; a failing
// query surfaces as BundleRetrievalError carrying its bundle index.
inline std::vector<ChunkSet> retrieve_bundle(const Retriever& retriever, const QueryBundle& bundle,
                                             int k, ExecutionMode mode = ExecutionMode::Parallel) {
    std::vector<ChunkSet> out(bundle.queries.size());
    if (mode == ExecutionMode::Parallel && bundle.queries.size() > 1) {
        std::vector<std::future<ChunkSet>> futures;
        futures.reserve(bundle.queries.size());
        for (const std::string& q : bundle.queries) {
            futures.push_back(std::async(std::launch::async,
                                         [&retriever, &q, k] { return retriever.retrieve(q, k); }));
        }
        for (std::size_t i = 0; i < futures.size(); ++i) {
            try {
                out[i] = futures[i].get();
            } catch (const std::exception& e) {
                // Later futures still joined by ~future; first failure wins.
                throw BundleRetrievalError(i, e.what());
            }
        }
    } else {
        for (std::size_t i = 0; i < bundle.queries.size(); ++i) {
            try {
                out[i] = retriever.retrieve(bundle.queries[i], k);
            } catch (const BundleRetrievalError&) {
                throw;
            } catch (const std::exception& e) {
                throw BundleRetrievalError(i, e.what());
            }
        }
    }
    return out;
}

// Fraction of gold doc ids present anywhere in the union of the chunk sets.
inline double recall_at(const std::vector<ChunkSet>& chunk_sets,
                        const std::set<std::string>& gold_doc_ids) {
    if (gold_doc_ids.empty()) throw EmptyGoldSet();
    std::unordered_set<std::string> seen;
    for (const ChunkSet& cs : chunk_sets)
        for (const Chunk& c : cs.chunks) seen.insert(c.doc_id);
    std::size_t hit = 0;
    for (const std::string& g : gold_doc_ids)
        if (seen.count(g)) ++hit;
    return static_cast<double>(hit) / static_cast<double>(gold_doc_ids.size());
}

inline double recall_at(const Retriever& retriever, const QueryBundle& bundle, int k,
                        const std::set<std::string>& gold_doc_ids,
                        ExecutionMode mode = ExecutionMode::Parallel) {
    if (gold_doc_ids.empty()) throw EmptyGoldSet();
    return recall_at(retrieve_bundle(retriever, bundle, k, mode), gold_doc_ids);
}

}  // namespace ragloop
