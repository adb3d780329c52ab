#pragma once

#include <map>
#include <string>
#include <vector>

#include "flap/manifest.hpp"
#include "flap/model.hpp"
#include "flap/tensor.hpp"
#include "flap/text.hpp"
#include "flap/training.hpp"

namespace flap::eval {

enum class Direction { text_to_audio, audio_to_text };

struct RetrievalReport {
  Direction direction = Direction::text_to_audio;
  std::map<size_t, double> recall_at;  // k -> fraction
  size_t num_queries = 0;
};

// Cosine similarities of unit-normalized rows; entry (i,j) = query_i . cand_j.
// Non-unit rows violate the contract and raise.
Tensor similarity_matrix(const Tensor& queries, const Tensor& candidates);

// Fraction of queries whose top-k (score descending, ties broken by lower
// candidate index) hits at least one correct candidate.
double recall_at_k(const Tensor& sim,
                   const std::vector<std::vector<size_t>>& ground_truth,
                   size_t k);

struct EvalReports {
  RetrievalReport text_to_audio;
  RetrievalReport audio_to_text;
};

// Embeds every audio clip (keep-all plan, no SpecAug, center crop) and every
// caption, then scores both retrieval directions at k in {1,5,10} (k capped
// at the candidate count so single-pair sets stay well-defined). Each caption
// is its own text query; an audio query counts any of its captions as correct.
EvalReports evaluate(const model::FlapModel& net, const data::Manifest& manifest,
                     const text::Vocab& vocab,
                     const training::TrainConfig& config);

// Convenience wrapper: loads the checkpoint into a model built from config.
EvalReports evaluate_checkpoint(const std::string& checkpoint_path,
                                const std::string& vocab_path,
                                const data::Manifest& manifest,
                                const training::TrainConfig& config);

std::string report_to_json(const EvalReports& reports);
// Aligned text table, R@1/5/10 for both directions.
std::string report_to_table(const EvalReports& reports);

}  // namespace flap::eval
