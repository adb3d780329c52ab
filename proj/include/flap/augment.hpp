#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flap/manifest.hpp"

namespace flap::augment {

struct TagResult {
  std::string record_id;
  std::vector<std::pair<std::string, double>> tags;  // scores descending, >= 1
};

class Tagger {
 public:
  virtual ~Tagger() = default;
  virtual TagResult tag(const data::CaptionRecord& record) = 0;
};

// Reads precomputed tags from <tags_dir>/<id>.json, a flat label -> score
// object. Missing or empty sidecars are an error naming the record.
class FileTagger : public Tagger {
 public:
  explicit FileTagger(std::string tags_dir) : tags_dir_(std::move(tags_dir)) {}
  TagResult tag(const data::CaptionRecord& record) override;

 private:
  std::string tags_dir_;
};

// Offline toy tagger: spectral band energies of the clip mapped through a
// small label table ("low rumble", "midrange hum", ...). Good enough to run
// the pipeline without any external model.
class HeuristicTagger : public Tagger {
 public:
  explicit HeuristicTagger(uint32_t sample_rate = 16000)
      : sample_rate_(sample_rate) {}
  TagResult tag(const data::CaptionRecord& record) override;

 private:
  uint32_t sample_rate_;
};

// The enrichment prompt. Tags (capped at the top 5 by score) are joined with
// ", " and both substitutions are verbatim. cleaned = true swaps in a
// grammatical variant; the default keeps the original wording exactly.
std::string build_prompt(const std::vector<std::string>& tags,
                         const std::string& original_caption,
                         bool cleaned = false);

struct EndpointConfig {
  std::string base_url;  // e.g. http://127.0.0.1:8089
  std::string path = "/generate";
  std::string auth_header;  // optional "Authorization" value
  int max_tokens = 120;
  double temperature = 0.7;
  int timeout_seconds = 30;
  int max_attempts = 3;
  int backoff_initial_ms = 200;  // doubles per retry
};

struct AugmentedCaption {
  std::string record_id;
  std::string original;
  std::string generated;
  std::string prompt;
  std::string provider;  // endpoint url
  int attempts = 0;
};

// POST {prompt, max_tokens, temperature} -> {text}; retries with exponential
// backoff. Returns nothing when every attempt failed or the endpoint produced
// only whitespace; the caller skips such records.
std::optional<std::string> generate_caption(const std::string& prompt,
                                            const EndpointConfig& endpoint,
                                            int* attempts_out = nullptr);

// Appends each generated caption to its record with the llm_augmented source
// tag. Originals are never touched; exact duplicate generations are dropped,
// so the merge is idempotent. Unknown record ids are an error.
data::Manifest merge_manifest(const data::Manifest& original,
                              const std::vector<AugmentedCaption>& augmented);

struct AugmentOptions {
  bool cleaned_prompt = false;
  size_t max_tags_in_prompt = 5;
};

// Tag -> prompt -> generate for every record; failures are logged and
// skipped. The first original caption of each record seeds the prompt.
std::vector<AugmentedCaption> run_augmentation(const data::Manifest& manifest,
                                               Tagger& tagger,
                                               const EndpointConfig& endpoint,
                                               const AugmentOptions& options = {});

void save_augmented_jsonl(const std::string& path,
                          const std::vector<AugmentedCaption>& augmented);

}  // namespace flap::augment
