#include "flap/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace flap::data {

namespace fs = std::filesystem;
using nlohmann::json;

const CaptionRecord* Manifest::find(const std::string& id) const {
  for (const auto& r : records) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

void validate_manifest(const Manifest& manifest) {
  std::set<std::string> ids;
  for (const auto& r : manifest.records) {
    if (r.id.empty()) {
      throw std::runtime_error("manifest record with empty id");
    }
    if (!ids.insert(r.id).second) {
      throw std::runtime_error("duplicate manifest id: " + r.id);
    }
    if (r.captions.empty()) {
      throw std::runtime_error("manifest record has no captions: " + r.id);
    }
  }
}

Manifest load_manifest(const std::string& path, bool check_audio) {
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("cannot open manifest: " + path);
  }
  fs::path base = fs::path(path).parent_path();

  Manifest manifest;
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("manifest " + path + " line " +
                               std::to_string(line_no) + ": " + e.what());
    }
    CaptionRecord rec;
    rec.id = j.at("id").get<std::string>();
    rec.audio_path = j.at("audio_path").get<std::string>();
    if (!base.empty() && fs::path(rec.audio_path).is_relative()) {
      rec.audio_path = (base / rec.audio_path).string();
    }
    for (const auto& c : j.at("captions")) {
      Caption cap;
      if (c.is_string()) {
        cap.text = c.get<std::string>();
      } else {
        cap.text = c.at("text").get<std::string>();
        std::string src = c.value("source", "original");
        cap.source = src == "llm_augmented" ? CaptionSource::llm_augmented
                                            : CaptionSource::original;
      }
      rec.captions.push_back(std::move(cap));
    }
    manifest.records.push_back(std::move(rec));
  }
  validate_manifest(manifest);
  if (check_audio) {
    for (const auto& r : manifest.records) {
      if (!fs::exists(r.audio_path)) {
        throw std::runtime_error("manifest id " + r.id +
                                 ": audio file not found: " + r.audio_path);
      }
    }
  }
  return manifest;
}

void save_manifest(const std::string& path, const Manifest& manifest) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot open manifest for writing: " + path);
  }
  for (const auto& r : manifest.records) {
    json caps = json::array();
    for (const auto& c : r.captions) {
      caps.push_back({{"text", c.text},
                      {"source", c.source == CaptionSource::llm_augmented
                                     ? "llm_augmented"
                                     : "original"}});
    }
    json j = {{"id", r.id}, {"audio_path", r.audio_path}, {"captions", caps}};
    os << j.dump() << "\n";
  }
}

}  // namespace flap::data
