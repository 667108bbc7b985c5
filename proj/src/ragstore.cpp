#include "drivepoison/ragstore.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "drivepoison/errors.hpp"
#include "drivepoison/json_io.hpp"
#include "drivepoison/text.hpp"

namespace drivepoison::rag {

namespace {

void normalize(Embedding& e) {
    double sq = 0.0;
    for (double v : e.values) sq += v * v;
    if (sq == 0.0) {
        e.degenerate = true;
        return;
    }
    const double norm = std::sqrt(sq);
    for (double& v : e.values) v /= norm;
}

}  // namespace

std::string render_knowledge(const KnowledgeEntry& entry) {
    return "Relevant experience: " + entry.scenario_text + "\nGuidance: " + entry.guidance;
}

TermFrequencyEmbedder::TermFrequencyEmbedder(std::vector<std::string> vocabulary) : vocabulary_(std::move(vocabulary)) {
    for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
        if (!index_.emplace(vocabulary_[i], i).second) {
            throw PreconditionViolation("duplicate vocabulary token: " + vocabulary_[i]);
        }
    }
}

TermFrequencyEmbedder TermFrequencyEmbedder::from_texts(std::span<const std::string> texts) {
    std::set<std::string> vocab;
    for (const auto& t : texts) {
        for (auto& tok : text::tokenize(t)) vocab.insert(std::move(tok));
    }
    return TermFrequencyEmbedder(std::vector<std::string>(vocab.begin(), vocab.end()));
}

Embedding TermFrequencyEmbedder::embed(std::string_view s) const {
    Embedding e;
    e.values.assign(vocabulary_.size(), 0.0);
    for (const auto& tok : text::tokenize(s)) {
        if (auto it = index_.find(tok); it != index_.end()) {
            e.values[it->second] += 1.0;
        }
    }
    normalize(e);
    return e;
}

RemoteEmbedder::RemoteEmbedder(models::EndpointConfig endpoint, std::size_t dimension, models::Sleeper sleeper)
    : client_(std::move(endpoint), std::move(sleeper)), dimension_(dimension) {}

Embedding RemoteEmbedder::embed(std::string_view s) const {
    const nlohmann::json body = {{"model", client_.endpoint().model_name}, {"input", std::string(s)}};
    const auto reply = client_.post("/embeddings", body.dump());
    const auto data = reply.find("data");
    if (data == reply.end() || !data->is_array() || data->empty() || !data->front().contains("embedding") ||
        !data->front()["embedding"].is_array()) {
        throw EmptyResponse("embedding response carries no data[0].embedding");
    }
    Embedding e;
    for (const auto& v : data->front()["embedding"]) {
        if (!v.is_number()) throw EmptyResponse("embedding holds a non-numeric value");
        e.values.push_back(v.get<double>());
    }
    if (e.values.size() != dimension_) {
        throw EmptyResponse(fmt::format("embedding has dimension {}, expected {}", e.values.size(), dimension_));
    }
    normalize(e);
    return e;
}

KnowledgeStore::KnowledgeStore(std::vector<KnowledgeEntry> entries, std::shared_ptr<const Embedder> embedder)
    : entries_(std::move(entries)), embedder_(std::move(embedder)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!by_id_.emplace(entries_[i].id, i).second) {
            throw DuplicateId(entries_[i].id);
        }
    }
}

const KnowledgeEntry& KnowledgeStore::entry(const std::string& id) const {
    const auto it = by_id_.find(id);
    if (it == by_id_.end()) throw PreconditionViolation("no knowledge entry with id " + id);
    return entries_[it->second];
}

KnowledgeStore build_index(std::vector<KnowledgeEntry> entries) {
    std::vector<std::string> texts;
    texts.reserve(entries.size());
    for (const auto& e : entries) texts.push_back(e.scenario_text);
    auto embedder = std::make_shared<const TermFrequencyEmbedder>(TermFrequencyEmbedder::from_texts(texts));
    return build_index(std::move(entries), std::move(embedder));
}

KnowledgeStore build_index(std::vector<KnowledgeEntry> entries, std::shared_ptr<const Embedder> embedder) {
    std::set<std::string> ids;
    for (const auto& e : entries) {
        if (!ids.insert(e.id).second) throw DuplicateId(e.id);
    }
    for (auto& e : entries) {
        auto emb = embedder->embed(e.scenario_text);
        if (emb.degenerate) {
            throw PreconditionViolation("knowledge entry " + e.id + " has no embeddable scenario text");
        }
        e.embedding = std::move(emb.values);
    }
    return KnowledgeStore(std::move(entries), std::move(embedder));
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw PreconditionViolation("cosine of vectors with different dimensions");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

Retrieval retrieve(const KnowledgeStore& store, std::string_view query, std::size_t k) {
    if (k < 1) throw PreconditionViolation("retrieval k must be at least 1");
    Retrieval out;
    if (store.size() == 0) return out;
    const auto q = store.embedder()->embed(query);
    if (q.degenerate) {
        out.degenerate = true;
        return out;
    }
    std::vector<RetrievalResult> scored;
    scored.reserve(store.size());
    for (const auto& e : store.entries()) {
        scored.push_back({e.id, cosine(q.values, *e.embedding), 0});
    }
    std::sort(scored.begin(), scored.end(), [](const RetrievalResult& a, const RetrievalResult& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.entry_id < b.entry_id;
    });
    scored.resize(std::min(k, scored.size()));
    for (std::size_t i = 0; i < scored.size(); ++i) scored[i].rank = i + 1;
    out.results = std::move(scored);
    return out;
}

double retrieval_success_rate(const KnowledgeStore& store, std::span<const std::string> queries,
                              const std::set<std::string>& poisoned_ids, std::size_t k) {
    if (queries.empty()) throw PreconditionViolation("retrieval success rate needs at least one query");
    std::size_t hits = 0;
    for (const auto& q : queries) {
        const auto r = retrieve(store, q, k);
        if (std::any_of(r.results.begin(), r.results.end(),
                        [&](const RetrievalResult& x) { return poisoned_ids.contains(x.entry_id); })) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(queries.size());
}

std::vector<KnowledgeEntry> parse_knowledge_jsonl(std::string_view content) {
    using namespace json_io;
    std::vector<KnowledgeEntry> out;
    std::set<std::string> ids;
    const auto lines = text::split_lines(content);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        const auto ptr = child("", i);
        json j;
        try {
            j = json::parse(lines[i]);
        } catch (const json::parse_error& e) {
            throw SchemaError(ptr, std::string("malformed JSON: ") + e.what());
        }
        expect_object(j, ptr);
        KnowledgeEntry e;
        e.id = string_field(j, "id", ptr);
        e.scenario_text = string_field(j, "scenario_text", ptr);
        e.guidance = string_field(j, "guidance", ptr);
        e.poisoned = bool_field(j, "poisoned", ptr);
        if (!ids.insert(e.id).second) throw DuplicateId(e.id);
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<KnowledgeEntry> load_knowledge(const std::filesystem::path& path) {
    return parse_knowledge_jsonl(json_io::read_text(path));
}

std::string to_jsonl(std::span<const KnowledgeEntry> entries) {
    std::string out;
    for (const auto& e : entries) {
        const nlohmann::json j = {{"id", e.id}, {"scenario_text", e.scenario_text}, {"guidance", e.guidance},
                                  {"poisoned", e.poisoned}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

void save_knowledge(std::span<const KnowledgeEntry> entries, const std::filesystem::path& path) {
    json_io::write_text(path, to_jsonl(entries));
}

}  // namespace drivepoison::rag
