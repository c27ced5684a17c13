#include "calltide/chunking.hpp"

#include <algorithm>
#include <set>

#include "calltide/errors.hpp"

namespace calltide {

Label argmax_label(const Scores& scores) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumClasses; ++c) {
        if (scores[c] > scores[best]) best = c;
    }
    return static_cast<Label>(best);
}

std::vector<Chunk> chunk(std::string_view transcript_id, const Tokens& tokens, std::size_t budget) {
    if (budget == 0) throw ConfigurationError("chunk budget must be at least 1");
    std::vector<Chunk> chunks;
    chunks.reserve((tokens.size() + budget - 1) / budget);
    for (std::size_t begin = 0; begin < tokens.size(); begin += budget) {
        const std::size_t end = std::min(tokens.size(), begin + budget);
        Chunk c;
        c.transcript_id = std::string(transcript_id);
        c.chunk_index = chunks.size();
        c.tokens.assign(tokens.begin() + static_cast<std::ptrdiff_t>(begin),
                        tokens.begin() + static_cast<std::ptrdiff_t>(end));
        c.text = join_tokens(c.tokens);
        chunks.push_back(std::move(c));
    }
    return chunks;
}

Chunk truncate(std::string_view transcript_id, const Tokens& tokens, std::size_t budget) {
    if (budget == 0) throw ConfigurationError("truncation budget must be at least 1");
    Chunk c;
    c.transcript_id = std::string(transcript_id);
    const std::size_t n = std::min(tokens.size(), budget);
    c.tokens.assign(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(n));
    c.text = join_tokens(c.tokens);
    return c;
}

std::size_t chunk_budget_for(std::size_t max_tokens) {
    return std::max<std::size_t>(64, max_tokens * 3 / 4);
}

Label aggregate_majority(std::span<const ChunkPrediction> predictions) {
    if (predictions.empty()) throw EmptyPredictionSet("no chunk predictions to aggregate");
    const std::string& id = predictions.front().transcript_id;
    std::set<std::size_t> seen;
    std::array<std::size_t, kNumClasses> votes{};
    Scores mass{};
    for (const auto& p : predictions) {
        if (p.transcript_id != id) {
            throw ConstraintViolation("chunk predictions mix transcripts " + id + " and " +
                                      p.transcript_id);
        }
        if (!seen.insert(p.chunk_index).second) {
            throw ConstraintViolation("duplicate chunk index " + std::to_string(p.chunk_index) +
                                      " for " + id);
        }
        ++votes[index_of(p.label)];
    }
    // Sum in chunk order so the result does not depend on input order.
    std::vector<const ChunkPrediction*> ordered;
    for (const auto& p : predictions) ordered.push_back(&p);
    std::sort(ordered.begin(), ordered.end(),
              [](const ChunkPrediction* a, const ChunkPrediction* b) {
                  return a->chunk_index < b->chunk_index;
              });
    for (const ChunkPrediction* p : ordered) {
        for (std::size_t c = 0; c < kNumClasses; ++c) mass[c] += p->scores[c];
    }

    const std::size_t top = *std::max_element(votes.begin(), votes.end());
    std::vector<std::size_t> tied;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (votes[c] == top) tied.push_back(c);
    }
    if (tied.size() == 1) return static_cast<Label>(tied.front());

    double best_mass = mass[tied.front()];
    for (std::size_t c : tied) best_mass = std::max(best_mass, mass[c]);
    std::vector<std::size_t> heaviest;
    for (std::size_t c : tied) {
        if (mass[c] == best_mass) heaviest.push_back(c);
    }
    if (heaviest.size() == 1) return static_cast<Label>(heaviest.front());
    return Label::neutral;
}

}  // namespace calltide
