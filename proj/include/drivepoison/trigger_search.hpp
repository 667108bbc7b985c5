#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drivepoison/corpus.hpp"
#include "drivepoison/models.hpp"
#include "drivepoison/triggers.hpp"

namespace drivepoison::poison {

/// Prompt asking a model for `count` rare phrases, one per line, that do not
/// change a driving decision. `examples` are previously accepted phrases.
models::PromptContext phrase_proposal_prompt(std::size_t count, std::span<const std::string> examples);

/// Candidate phrases from the model's reply: list markers and quotes are
/// stripped, duplicates and empty lines dropped, at most `count` kept.
std::vector<std::string> propose_phrases(const models::DecisionModel& generator, std::size_t count,
                                         std::span<const std::string> examples = {});

struct PhraseScreen {
    std::string phrase;
    std::optional<double> bdr;
    bool accepted = false;
    std::string reason;
};

/// Scores each candidate by bdr of `benign_model` on `eval` and its triggered
/// twins. Phrases that already occur in the data or name a decision are
/// rejected without evaluation.
std::vector<PhraseScreen> screen_phrases(std::span<const std::string> candidates,
                                         const models::DecisionModel& benign_model, const corpus::Dataset& eval,
                                         TriggerPosition position, const Decision& target, double max_bdr = 0.0);

}  // namespace drivepoison::poison
