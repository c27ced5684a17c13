#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "calltide/labeling.hpp"
#include "calltide/text_prep.hpp"

namespace calltide {

/// Class scores in label order (negative, neutral, positive).
using Scores = std::array<double, kNumClasses>;

/// Highest score wins; equal scores go to the lowest class index.
Label argmax_label(const Scores& scores);

struct Chunk {
    std::string transcript_id;
    std::size_t chunk_index = 0;
    Tokens tokens;
    std::string text;  // tokens joined by single spaces
};

struct ChunkPrediction {
    std::string transcript_id;
    std::size_t chunk_index = 0;
    Label label = Label::neutral;
    Scores scores{};
};

/// Splits into ceil(n / budget) consecutive, non-overlapping chunks; every
/// chunk but the last holds exactly `budget` tokens. Empty input gives no
/// chunks. Throws ConfigurationError when budget is 0.
std::vector<Chunk> chunk(std::string_view transcript_id, const Tokens& tokens, std::size_t budget);

/// The first min(n, budget) tokens as a single chunk (index 0).
Chunk truncate(std::string_view transcript_id, const Tokens& tokens, std::size_t budget);

/// Word budget for a classifier declaring `max_tokens` subword positions:
/// 75% of it, never below 64.
std::size_t chunk_budget_for(std::size_t max_tokens);

/// Transcript label by majority vote over its chunks. Ties go to the tied
/// label with the largest score mass summed over all chunks; if that is
/// also tied the result is neutral. Throws EmptyPredictionSet on empty
/// input and ConstraintViolation on mixed transcripts or repeated indices.
Label aggregate_majority(std::span<const ChunkPrediction> predictions);

}  // namespace calltide
