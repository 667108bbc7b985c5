#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "drivepoison/remote.hpp"

namespace drivepoison::rag {

struct KnowledgeEntry {
    std::string id;
    std::string scenario_text;
    std::string guidance;
    bool poisoned = false;
    std::optional<std::vector<double>> embedding;  // unit norm once indexed

    bool operator==(const KnowledgeEntry&) const = default;
};

/// Text placed into PromptContext::retrieved_knowledge for an entry.
std::string render_knowledge(const KnowledgeEntry& entry);

struct Embedding {
    std::vector<double> values;  // unit norm, or all zeros when degenerate
    bool degenerate = false;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual Embedding embed(std::string_view text) const = 0;
    virtual std::size_t dimension() const = 0;
};

/// Term counts over a fixed vocabulary, L2-normalised. Out-of-vocabulary
/// tokens are ignored; a text with no known token is degenerate.
class TermFrequencyEmbedder final : public Embedder {
public:
    explicit TermFrequencyEmbedder(std::vector<std::string> vocabulary);

    /// Vocabulary of every token in `texts`, sorted.
    static TermFrequencyEmbedder from_texts(std::span<const std::string> texts);

    Embedding embed(std::string_view text) const override;
    std::size_t dimension() const override { return vocabulary_.size(); }
    const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }

private:
    std::vector<std::string> vocabulary_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

/// Embeddings endpoint: POST {base_url}/embeddings {model, input}, reading
/// data[0].embedding. Vectors are normalised locally.
class RemoteEmbedder final : public Embedder {
public:
    RemoteEmbedder(models::EndpointConfig endpoint, std::size_t dimension,
                   models::Sleeper sleeper = models::real_sleeper());

    Embedding embed(std::string_view text) const override;
    std::size_t dimension() const override { return dimension_; }

private:
    models::JsonHttpClient client_;
    std::size_t dimension_;
};

struct RetrievalResult {
    std::string entry_id;
    double score = 0.0;
    std::size_t rank = 0;  // 1-based
};

struct Retrieval {
    std::vector<RetrievalResult> results;
    bool degenerate = false;
};

class KnowledgeStore {
public:
    KnowledgeStore() = default;
    KnowledgeStore(std::vector<KnowledgeEntry> entries, std::shared_ptr<const Embedder> embedder);

    const std::vector<KnowledgeEntry>& entries() const noexcept { return entries_; }
    const KnowledgeEntry& entry(const std::string& id) const;  // throws PreconditionViolation when absent
    std::size_t size() const noexcept { return entries_.size(); }
    const Embedder* embedder() const noexcept { return embedder_.get(); }

private:
    std::vector<KnowledgeEntry> entries_;
    std::map<std::string, std::size_t> by_id_;
    std::shared_ptr<const Embedder> embedder_;
};

/// Local index: vocabulary from every entry's scenario_text. Only
/// scenario_text is embedded. Throws DuplicateId, and PreconditionViolation
/// for an entry whose scenario text has no tokens.
KnowledgeStore build_index(std::vector<KnowledgeEntry> entries);
KnowledgeStore build_index(std::vector<KnowledgeEntry> entries, std::shared_ptr<const Embedder> embedder);

/// Top-k by cosine, descending, ties by ascending id. k >= 1.
Retrieval retrieve(const KnowledgeStore& store, std::string_view query, std::size_t k = 1);

/// Fraction of queries whose top-k holds any of `poisoned_ids`.
double retrieval_success_rate(const KnowledgeStore& store, std::span<const std::string> queries,
                              const std::set<std::string>& poisoned_ids, std::size_t k = 1);

double cosine(std::span<const double> a, std::span<const double> b);

/// JSON lines {id, scenario_text, guidance, poisoned}; embeddings are not stored.
std::vector<KnowledgeEntry> parse_knowledge_jsonl(std::string_view content);
std::vector<KnowledgeEntry> load_knowledge(const std::filesystem::path& path);
std::string to_jsonl(std::span<const KnowledgeEntry> entries);
void save_knowledge(std::span<const KnowledgeEntry> entries, const std::filesystem::path& path);

}  // namespace drivepoison::rag
