#include "flap/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "flap/checkpoint.hpp"
#include "flap/fusion.hpp"
#include "flap/patches.hpp"
#include "flap/wav.hpp"

namespace flap::eval {

namespace {

void check_unit_rows(const Tensor& emb, const char* which) {
  size_t rows = emb.extent(0), d = emb.extent(1);
  for (size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (size_t j = 0; j < d; ++j) {
      sq += emb.at(r, j) * emb.at(r, j);
    }
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
      throw std::invalid_argument(std::string(which) + " row " +
                                  std::to_string(r) +
                                  " is not unit-normalized");
    }
  }
}

}  // namespace

Tensor similarity_matrix(const Tensor& queries, const Tensor& candidates) {
  if (queries.rank() != 2 || candidates.rank() != 2 ||
      queries.extent(1) != candidates.extent(1)) {
    throw std::invalid_argument("similarity_matrix: dimension mismatch: " +
                                queries.shape_str() + " vs " +
                                candidates.shape_str());
  }
  check_unit_rows(queries, "query");
  check_unit_rows(candidates, "candidate");
  size_t q = queries.extent(0), p = candidates.extent(0), d = queries.extent(1);
  Tensor sim = Tensor::zeros({q, p});
  for (size_t i = 0; i < q; ++i) {
    for (size_t j = 0; j < p; ++j) {
      double dot = 0.0;
      for (size_t c = 0; c < d; ++c) {
        dot += queries.at(i, c) * candidates.at(j, c);
      }
      sim.at(i, j) = dot;
    }
  }
  return sim;
}

double recall_at_k(const Tensor& sim,
                   const std::vector<std::vector<size_t>>& ground_truth,
                   size_t k) {
  if (sim.rank() != 2 || ground_truth.size() != sim.extent(0)) {
    throw std::invalid_argument("recall_at_k: one ground-truth set per query");
  }
  size_t p = sim.extent(1);
  if (k == 0 || k > p) {
    throw std::invalid_argument("recall_at_k: k = " + std::to_string(k) +
                                " outside candidate count " +
                                std::to_string(p));
  }
  size_t hits = 0;
  std::vector<size_t> order(p);
  for (size_t q = 0; q < sim.extent(0); ++q) {
    if (ground_truth[q].empty()) {
      throw std::invalid_argument("recall_at_k: query " + std::to_string(q) +
                                  " has no correct candidates");
    }
    std::iota(order.begin(), order.end(), 0);
    const double* row = sim.data() + q * p;
    std::stable_sort(order.begin(), order.end(), [row](size_t a, size_t b) {
      if (row[a] != row[b]) return row[a] > row[b];
      return a < b;  // deterministic tie-break by lower index
    });
    for (size_t r = 0; r < k; ++r) {
      if (std::find(ground_truth[q].begin(), ground_truth[q].end(), order[r]) !=
          ground_truth[q].end()) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(ground_truth.size());
}

EvalReports evaluate(const model::FlapModel& net, const data::Manifest& manifest,
                     const text::Vocab& vocab,
                     const training::TrainConfig& config) {
  if (manifest.records.empty()) {
    throw std::invalid_argument("evaluation manifest is empty");
  }
  audio::MelConfig mel_cfg = config.mel_config();
  size_t target_frames = config.target_frames();
  audio::PatchGrid grid = audio::make_grid(target_frames, mel_cfg.num_bins,
                                           config.patch_t, config.patch_f);
  size_t n_tokens = grid.tokens();

  // Audio embeddings in record order, batched with keep-all plans.
  size_t a_count = manifest.records.size();
  Tensor audio_emb = Tensor::zeros({a_count, config.d_shared});
  constexpr size_t kEvalBatch = 16;
  for (size_t start = 0; start < a_count; start += kEvalBatch) {
    size_t bsz = std::min(kEvalBatch, a_count - start);
    Tape tape(false);
    std::vector<Tensor> rows;
    rows.reserve(bsz);
    for (size_t i = 0; i < bsz; ++i) {
      const auto& rec = manifest.records[start + i];
      auto wav = audio::load_wav(rec.audio_path, mel_cfg.sample_rate);
      if (config.fusion) {
        Tensor fused =
            audio::fuse_features(tape, wav, mel_cfg, target_frames,
                                 net.fusion_kernel(), net.fusion_bias());
        rows.push_back(tape.permute_elements(fused, audio::patch_index_map(grid),
                                             {grid.tokens(), grid.patch_dim()}));
      } else {
        auto spec = audio::pad_or_crop_center(audio::mel_spectrogram(wav, mel_cfg),
                                              target_frames);
        rows.push_back(audio::patchify(spec, config.patch_t, config.patch_f));
      }
    }
    Tensor batch = tape.stack0(rows);
    auto plan = masking::plan_keep_all(bsz, n_tokens);
    auto enc = net.encode_audio(tape, batch, plan);
    for (size_t i = 0; i < bsz; ++i) {
      for (size_t j = 0; j < config.d_shared; ++j) {
        audio_emb.at(start + i, j) = enc.pooled.at(i, j);
      }
    }
  }

  // Every caption becomes one text query.
  std::vector<size_t> caption_owner;
  std::vector<std::vector<int>> caption_ids;
  for (size_t r = 0; r < manifest.records.size(); ++r) {
    for (const auto& cap : manifest.records[r].captions) {
      caption_owner.push_back(r);
      caption_ids.push_back(text::tokenize(cap.text, vocab, config.text_max_len));
    }
  }
  size_t t_count = caption_ids.size();
  Tensor text_emb = Tensor::zeros({t_count, config.d_shared});
  for (size_t start = 0; start < t_count; start += kEvalBatch) {
    size_t bsz = std::min(kEvalBatch, t_count - start);
    Tape tape(false);
    std::vector<std::vector<int>> ids(caption_ids.begin() + start,
                                      caption_ids.begin() + start + bsz);
    Tensor emb = net.encode_text(tape, ids);
    for (size_t i = 0; i < bsz; ++i) {
      for (size_t j = 0; j < config.d_shared; ++j) {
        text_emb.at(start + i, j) = emb.at(i, j);
      }
    }
  }

  EvalReports reports;
  const size_t ks[] = {1, 5, 10};

  {
    Tensor sim = similarity_matrix(text_emb, audio_emb);
    std::vector<std::vector<size_t>> gt(t_count);
    for (size_t q = 0; q < t_count; ++q) {
      gt[q] = {caption_owner[q]};
    }
    reports.text_to_audio.direction = Direction::text_to_audio;
    reports.text_to_audio.num_queries = t_count;
    for (size_t k : ks) {
      reports.text_to_audio.recall_at[k] =
          recall_at_k(sim, gt, std::min(k, a_count));
    }
  }
  {
    Tensor sim = similarity_matrix(audio_emb, text_emb);
    std::vector<std::vector<size_t>> gt(a_count);
    for (size_t q = 0; q < t_count; ++q) {
      gt[caption_owner[q]].push_back(q);
    }
    reports.audio_to_text.direction = Direction::audio_to_text;
    reports.audio_to_text.num_queries = a_count;
    for (size_t k : ks) {
      reports.audio_to_text.recall_at[k] =
          recall_at_k(sim, gt, std::min(k, t_count));
    }
  }
  return reports;
}

EvalReports evaluate_checkpoint(const std::string& checkpoint_path,
                                const std::string& vocab_path,
                                const data::Manifest& manifest,
                                const training::TrainConfig& config) {
  text::Vocab vocab = text::Vocab::load(vocab_path);
  Rng init(config.seed);
  model::FlapModel net(config.model_config(vocab.size()), init);
  load_checkpoint(checkpoint_path, net.params());
  return evaluate(net, manifest, vocab, config);
}

std::string report_to_json(const EvalReports& reports) {
  using nlohmann::json;
  auto one = [](const RetrievalReport& r) {
    json j;
    j["direction"] = r.direction == Direction::text_to_audio ? "text_to_audio"
                                                             : "audio_to_text";
    j["num_queries"] = r.num_queries;
    for (const auto& [k, v] : r.recall_at) {
      j["recall_at"][std::to_string(k)] = v;
    }
    return j;
  };
  json j;
  j["text_to_audio"] = one(reports.text_to_audio);
  j["audio_to_text"] = one(reports.audio_to_text);
  return j.dump(2);
}

std::string report_to_table(const EvalReports& reports) {
  std::ostringstream os;
  char line[160];
  os << "                 T-A Retrieval            A-T Retrieval\n";
  os << "                 R@1    R@5    R@10       R@1    R@5    R@10\n";
  const auto& ta = reports.text_to_audio.recall_at;
  const auto& at = reports.audio_to_text.recall_at;
  std::snprintf(line, sizeof(line),
                "recall           %-6.3f %-6.3f %-6.3f     %-6.3f %-6.3f %-6.3f\n",
                ta.at(1), ta.at(5), ta.at(10), at.at(1), at.at(5), at.at(10));
  os << line;
  std::snprintf(line, sizeof(line), "queries          %-20zu     %zu\n",
                reports.text_to_audio.num_queries,
                reports.audio_to_text.num_queries);
  os << line;
  return os.str();
}

}  // namespace flap::eval
