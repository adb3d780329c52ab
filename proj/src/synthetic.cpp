#include "flap/synthetic.hpp"

#include <cmath>
#include <filesystem>

#include "flap/rng.hpp"
#include "flap/wav.hpp"

namespace flap::data {

namespace fs = std::filesystem;

Manifest make_tone_dataset(const std::string& out_dir, size_t n_pairs,
                           double seconds, uint64_t seed,
                           uint32_t sample_rate) {
  fs::create_directories(out_dir);
  Rng rng(seed);
  size_t n_samples = static_cast<size_t>(seconds * sample_rate);

  Manifest manifest;
  for (size_t i = 0; i < n_pairs; ++i) {
    // Frequencies spread across the band, well separated on the mel axis.
    double freq = 180.0 + 55.0 * static_cast<double>(i);
    double phase = rng.uniform() * 2.0 * M_PI;
    std::vector<double> wav(n_samples);
    for (size_t s = 0; s < n_samples; ++s) {
      wav[s] = 0.5 * std::sin(2.0 * M_PI * freq * static_cast<double>(s) /
                                  static_cast<double>(sample_rate) +
                              phase);
    }
    std::string name = "tone" + std::to_string(i);
    std::string path = (fs::path(out_dir) / (name + ".wav")).string();
    audio::write_wav(path, wav, sample_rate);

    CaptionRecord rec;
    rec.id = name;
    rec.audio_path = fs::absolute(path).string();
    rec.captions.push_back({name, CaptionSource::original});
    manifest.records.push_back(std::move(rec));
  }
  // The saved copy uses bare filenames; the loader resolves them against the
  // manifest's own directory, so the dataset stays relocatable.
  Manifest relocatable = manifest;
  for (auto& rec : relocatable.records) {
    rec.audio_path = fs::path(rec.audio_path).filename().string();
  }
  save_manifest((fs::path(out_dir) / "manifest.jsonl").string(), relocatable);
  return manifest;
}

}  // namespace flap::data
