#pragma once

#include <string>
#include <vector>

namespace flap::data {

enum class CaptionSource { original, llm_augmented };

struct Caption {
  std::string text;
  CaptionSource source = CaptionSource::original;
};

struct CaptionRecord {
  std::string id;
  std::string audio_path;
  std::vector<Caption> captions;
};

struct Manifest {
  std::vector<CaptionRecord> records;

  const CaptionRecord* find(const std::string& id) const;
};

// JSON-lines, one record per line:
//   {"id": "...", "audio_path": "...",
//    "captions": ["plain string", {"text": "...", "source": "llm_augmented"}]}
// Plain strings are treated as original captions. Relative audio paths are
// resolved against the manifest's directory. With check_audio set, every
// audio_path must exist on disk.
Manifest load_manifest(const std::string& path, bool check_audio = true);
void save_manifest(const std::string& path, const Manifest& manifest);

// Validation shared by the loader: unique ids, at least one caption each.
void validate_manifest(const Manifest& manifest);

}  // namespace flap::data
