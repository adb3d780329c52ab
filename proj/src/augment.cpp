#include "flap/augment.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "flap/mel.hpp"
#include "flap/wav.hpp"

namespace flap::augment {

namespace fs = std::filesystem;
using nlohmann::json;

TagResult FileTagger::tag(const data::CaptionRecord& record) {
  fs::path sidecar = fs::path(tags_dir_) / (record.id + ".json");
  std::ifstream is(sidecar);
  if (!is) {
    throw std::runtime_error("no tag sidecar for record " + record.id + " at " +
                             sidecar.string());
  }
  json j = json::parse(is);
  TagResult result;
  result.record_id = record.id;
  for (const auto& [label, score] : j.items()) {
    result.tags.emplace_back(label, score.get<double>());
  }
  std::stable_sort(result.tags.begin(), result.tags.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (result.tags.empty()) {
    throw std::runtime_error("empty tag sidecar for record " + record.id);
  }
  return result;
}

TagResult HeuristicTagger::tag(const data::CaptionRecord& record) {
  auto wav = audio::load_wav(record.audio_path, sample_rate_);
  audio::MelConfig cfg;
  cfg.sample_rate = sample_rate_;
  auto spec = audio::mel_spectrogram(wav, cfg);

  // Mean log energy over four mel-bin bands.
  struct Band {
    const char* label;
    size_t lo, hi;
  };
  const Band bands[] = {
      {"low rumble", 0, 32},
      {"midrange hum", 32, 64},
      {"high whine", 64, 96},
      {"bright hiss", 96, 128},
  };
  TagResult result;
  result.record_id = record.id;
  double min_energy = 1e300, max_energy = -1e300;
  std::vector<double> energies;
  for (const auto& band : bands) {
    double e = 0.0;
    for (size_t t = 0; t < spec.num_frames; ++t) {
      for (size_t b = band.lo; b < band.hi; ++b) {
        e += spec.at(t, b);
      }
    }
    e /= static_cast<double>(spec.num_frames * (band.hi - band.lo));
    energies.push_back(e);
    min_energy = std::min(min_energy, e);
    max_energy = std::max(max_energy, e);
  }
  double span = max_energy - min_energy;
  for (size_t i = 0; i < energies.size(); ++i) {
    double score = span > 0.0 ? (energies[i] - min_energy) / span : 1.0;
    result.tags.emplace_back(bands[i].label, score);
  }
  std::stable_sort(result.tags.begin(), result.tags.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return result;
}

std::string build_prompt(const std::vector<std::string>& tags,
                         const std::string& original_caption, bool cleaned) {
  if (tags.empty() || original_caption.empty()) {
    throw std::invalid_argument("build_prompt: tags and caption must be nonempty");
  }
  std::string joined;
  for (size_t i = 0; i < tags.size(); ++i) {
    if (i > 0) {
      joined += ", ";
    }
    joined += tags[i];
  }
  if (cleaned) {
    return "Describe a situation with the following sounds: " + joined +
           ". Combine it with this caption: \"" + original_caption + "\".";
  }
  // The awkward wording is the method; reproduced character for character.
  return "Describe a situation with " + joined +
         " sounds and combine it with the " + original_caption + " together.";
}

namespace {

std::string trim_to_paragraph(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    out.push_back(c == '\n' || c == '\t' || c == '\r' ? ' ' : c);
  }
  size_t a = out.find_first_not_of(' ');
  if (a == std::string::npos) {
    return "";
  }
  size_t b = out.find_last_not_of(' ');
  return out.substr(a, b - a + 1);
}

}  // namespace

std::optional<std::string> generate_caption(const std::string& prompt,
                                            const EndpointConfig& endpoint,
                                            int* attempts_out) {
  httplib::Client client(endpoint.base_url);
  client.set_connection_timeout(endpoint.timeout_seconds);
  client.set_read_timeout(endpoint.timeout_seconds);
  httplib::Headers headers;
  if (!endpoint.auth_header.empty()) {
    headers.emplace("Authorization", endpoint.auth_header);
  }

  json body = {{"prompt", prompt},
               {"max_tokens", endpoint.max_tokens},
               {"temperature", endpoint.temperature}};
  std::string payload = body.dump();

  int delay_ms = endpoint.backoff_initial_ms;
  for (int attempt = 1; attempt <= endpoint.max_attempts; ++attempt) {
    if (attempts_out != nullptr) {
      *attempts_out = attempt;
    }
    auto res = client.Post(endpoint.path, headers, payload, "application/json");
    if (res && res->status == 200) {
      try {
        json reply = json::parse(res->body);
        std::string text = trim_to_paragraph(reply.at("text").get<std::string>());
        if (text.empty()) {
          return std::nullopt;  // whitespace-only generation: skip
        }
        return text;
      } catch (const json::exception& e) {
        std::cerr << "warning: malformed endpoint reply: " << e.what() << "\n";
        return std::nullopt;
      }
    }
    if (attempt < endpoint.max_attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      delay_ms *= 2;
    }
  }
  return std::nullopt;
}

data::Manifest merge_manifest(const data::Manifest& original,
                              const std::vector<AugmentedCaption>& augmented) {
  data::Manifest merged = original;
  for (const auto& aug : augmented) {
    bool found = false;
    for (auto& rec : merged.records) {
      if (rec.id != aug.record_id) {
        continue;
      }
      found = true;
      bool duplicate = false;
      for (const auto& cap : rec.captions) {
        if (cap.text == aug.generated) {
          duplicate = true;
          break;
        }
      }
      if (!duplicate) {
        rec.captions.push_back(
            {aug.generated, data::CaptionSource::llm_augmented});
      }
      break;
    }
    if (!found) {
      throw std::runtime_error("augmented caption for unknown record id: " +
                               aug.record_id);
    }
  }
  return merged;
}

std::vector<AugmentedCaption> run_augmentation(const data::Manifest& manifest,
                                               Tagger& tagger,
                                               const EndpointConfig& endpoint,
                                               const AugmentOptions& options) {
  std::vector<AugmentedCaption> out;
  for (const auto& rec : manifest.records) {
    try {
      TagResult tags = tagger.tag(rec);
      std::vector<std::string> labels;
      for (const auto& [label, score] : tags.tags) {
        if (labels.size() == options.max_tags_in_prompt) {
          break;
        }
        labels.push_back(label);
      }
      const std::string& original = rec.captions.front().text;
      AugmentedCaption aug;
      aug.record_id = rec.id;
      aug.original = original;
      aug.prompt = build_prompt(labels, original, options.cleaned_prompt);
      aug.provider = endpoint.base_url;
      auto text = generate_caption(aug.prompt, endpoint, &aug.attempts);
      if (!text) {
        std::cerr << "warning: skipping record " << rec.id
                  << ": no usable generation\n";
        continue;
      }
      aug.generated = *text;
      out.push_back(std::move(aug));
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping record " << rec.id << ": " << e.what()
                << "\n";
    }
  }
  return out;
}

void save_augmented_jsonl(const std::string& path,
                          const std::vector<AugmentedCaption>& augmented) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot write augmented captions: " + path);
  }
  for (const auto& a : augmented) {
    json j = {{"id", a.record_id},     {"original", a.original},
              {"generated", a.generated}, {"prompt", a.prompt},
              {"provider", a.provider},   {"attempts", a.attempts}};
    os << j.dump() << "\n";
  }
}

}  // namespace flap::augment
